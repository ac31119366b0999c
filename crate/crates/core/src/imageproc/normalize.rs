use crate::types::SaliencyMap;

/// Affine rescale to `[0, 1]`. A constant map becomes all ones.
pub fn minmax_normalize(map: &SaliencyMap) -> SaliencyMap {
    let mut values = map.values().to_vec();
    minmax_normalize_in_place(&mut values);
    SaliencyMap::new(map.width(), map.height(), values).expect("normalization preserves validity")
}

pub fn minmax_normalize_in_place(values: &mut [f64]) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let range = hi - lo;
    if !(range > 0.0) || !range.is_finite() {
        values.iter_mut().for_each(|v| *v = 1.0);
        return;
    }
    for v in values.iter_mut() {
        *v = ((*v - lo) / range).clamp(0.0, 1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(v: &[f64]) -> Vec<f64> {
        minmax_normalize(&SaliencyMap::new(v.len(), 1, v.to_vec()).unwrap()).into_values()
    }

    #[test]
    fn examples() {
        assert_eq!(norm(&[0.0, 5.0, 10.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(norm(&[3.0, 3.0, 3.0]), vec![1.0, 1.0, 1.0]);
        assert_eq!(norm(&[-2.0, 0.0, 2.0]), vec![0.0, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn idempotent(v in prop::collection::vec(-1e6..1e6f64, 1..64)) {
            let once = norm(&v);
            prop_assert_eq!(norm(&once), once.clone());
            prop_assert!(once.iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }
}
