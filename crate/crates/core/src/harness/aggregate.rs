use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::metrics::EvaluationRecord;

/// Means over one `(method, model, dataset)` group.
///
/// `pg` and `ebpg` average per category first and then across categories
/// with equal weight; the `*_record_mean` fields are the plain means over
/// records. Records with a missing EBPG count in neither EBPG denominator, and
/// a group without any EBPG value gets `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub method: String,
    pub model: String,
    pub dataset: String,
    pub n_records: usize,
    pub n_categories: usize,
    pub ins: f64,
    pub del: f64,
    pub oa: f64,
    pub pg: f64,
    pub ebpg: Option<f64>,
    pub sparsity: f64,
    pub time_s: f64,
    pub pg_record_mean: f64,
    pub ebpg_record_mean: Option<f64>,
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Groups are returned sorted by `(dataset, model, method)`. Within a group,
/// records are summed in `(category, image_id, instance_id)` order so the
/// result does not depend on the input order.
pub fn aggregate(records: &[EvaluationRecord]) -> Result<Vec<Aggregate>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::EmptyGroup);
    }
    let mut groups: BTreeMap<(&str, &str, &str), Vec<&EvaluationRecord>> = BTreeMap::new();
    for r in records {
        let m = &r.meta;
        groups.entry((&m.dataset, &m.model, &m.method)).or_default().push(r);
    }
    let mut out = Vec::with_capacity(groups.len());
    for ((dataset, model, method), mut rs) in groups {
        rs.sort_by(|a, b| {
            let key = |r: &EvaluationRecord| (r.meta.category.clone(), r.meta.image_id.clone(), r.meta.instance_id.clone());
            key(a).cmp(&key(b))
        });
        let mut per_cat: BTreeMap<&str, Vec<&EvaluationRecord>> = BTreeMap::new();
        for r in &rs {
            per_cat.entry(&r.meta.category).or_default().push(r);
        }
        let hit = |r: &EvaluationRecord| if r.pg_hit { 1.0 } else { 0.0 };
        let mean_of = |f: fn(&EvaluationRecord) -> f64| mean(rs.iter().map(|r| f(r))).expect("nonempty group");
        out.push(Aggregate {
            method: method.to_string(),
            model: model.to_string(),
            dataset: dataset.to_string(),
            n_records: rs.len(),
            n_categories: per_cat.len(),
            ins: mean_of(|r| r.ins_auc),
            del: mean_of(|r| r.del_auc),
            oa: mean_of(|r| r.oa),
            pg: mean(per_cat.values().map(|c| mean(c.iter().map(|r| hit(r))).expect("nonempty category")))
                .expect("nonempty group"),
            ebpg: mean(per_cat.values().filter_map(|c| mean(c.iter().filter_map(|r| r.ebpg)))),
            sparsity: mean_of(|r| r.sparsity),
            time_s: mean_of(|r| r.time_s),
            pg_record_mean: mean_of(hit),
            ebpg_record_mean: mean(rs.iter().filter_map(|r| r.ebpg)),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::RecordMeta;
    use proptest::prelude::*;

    fn rec(method: &str, category: &str, id: usize, hit: bool, ins: f64, del: f64, ebpg: Option<f64>) -> EvaluationRecord {
        EvaluationRecord {
            meta: RecordMeta {
                method: method.into(),
                model: "synthetic".into(),
                dataset: "blobs".into(),
                image_id: format!("{id}"),
                instance_id: format!("{id}"),
                category: category.into(),
            },
            ins_auc: ins,
            del_auc: del,
            oa: ins - del,
            pg_hit: hit,
            ebpg,
            sparsity: 2.0,
            time_s: 0.1,
        }
    }

    #[test]
    fn one_category_hit_rate() {
        let rs: Vec<_> = [true, true, false]
            .iter()
            .enumerate()
            .map(|(i, h)| rec("D-RISE", "red", i, *h, 0.5, 0.1, Some(0.5)))
            .collect();
        let a = &aggregate(&rs).unwrap()[0];
        assert!((a.pg - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(a.pg, a.pg_record_mean);
    }

    #[test]
    fn categories_weigh_equally() {
        let mut rs = vec![rec("D-RISE", "red", 0, true, 0.5, 0.1, Some(1.0))];
        rs.extend((1..4).map(|i| rec("D-RISE", "blue", i, false, 0.5, 0.1, Some(0.0))));
        let a = &aggregate(&rs).unwrap()[0];
        assert_eq!(a.pg, 0.5);
        assert_eq!(a.pg_record_mean, 0.25);
        assert_eq!(a.ebpg, Some(0.5));
        assert_eq!(a.ebpg_record_mean, Some(0.25));
        assert_eq!(a.n_categories, 2);
    }

    #[test]
    fn missing_ebpg_leaves_denominators() {
        let rs = vec![
            rec("D-RISE", "red", 0, true, 0.5, 0.1, Some(0.8)),
            rec("D-RISE", "red", 1, true, 0.5, 0.1, None),
            rec("D-RISE", "blue", 2, true, 0.5, 0.1, None),
        ];
        let a = &aggregate(&rs).unwrap()[0];
        assert_eq!(a.ebpg, Some(0.8));
        assert_eq!(a.ebpg_record_mean, Some(0.8));
        let none = aggregate(&rs[1..]).unwrap();
        assert_eq!(none[0].ebpg, None);
    }

    #[test]
    fn groups_and_empty_input() {
        assert!(matches!(aggregate(&[]), Err(HarnessError::EmptyGroup)));
        let rs = vec![rec("G-CAME", "red", 0, true, 0.9, 0.2, None), rec("D-RISE", "red", 0, false, 0.4, 0.3, None)];
        let aggs = aggregate(&rs).unwrap();
        assert_eq!(aggs.iter().map(|a| a.method.as_str()).collect::<Vec<_>>(), ["D-RISE", "G-CAME"]);
    }

    fn arb_records() -> impl Strategy<Value = Vec<EvaluationRecord>> {
        prop::collection::vec(
            (0usize..2, 0usize..3, any::<bool>(), 0.0..1.0f64, 0.0..1.0f64, prop::option::of(0.0..1.0f64)),
            1..30,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (m, c, hit, ins, del, e))| {
                    rec(["D-RISE", "D-CLOSE"][m], ["red", "green", "blue"][c], i, hit, ins, del, e)
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn permutation_invariant(records in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate(&records).unwrap(), aggregate(&shuffled).unwrap());
        }

        #[test]
        fn oa_is_ins_minus_del(records in arb_records()) {
            for a in aggregate(&records).unwrap() {
                prop_assert!((a.oa - (a.ins - a.del)).abs() < 1e-9);
                prop_assert!((0.0..=1.0).contains(&a.pg));
            }
        }
    }
}
