use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{aggregate, Aggregate, DatasetIndex, HarnessError, ImageEntry};
use crate::detectors::{detect, Detector};
use crate::explainers::{explain, ExplainerConfig, Method, TargetSpec};
use crate::geometry::iou;
use crate::imageproc::load_image;
use crate::metrics::{evaluate_all, EvalConfig, EvaluationRecord, RecordMeta};
use crate::types::{Detection, GroundTruthInstance};

/// A detector under a display name, such as `YOLOX`.
#[derive(Clone)]
pub struct ModelBackend {
    pub name: String,
    pub backend: Arc<dyn Detector>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Shared by all methods; `method` is overridden per run.
    pub explainer: ExplainerConfig,
    pub eval: EvalConfig,
}

/// Everything needed to rerun a benchmark, stored with its report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub dataset: String,
    pub models: Vec<String>,
    pub methods: Vec<Method>,
    pub sample_limit: usize,
    pub explainer: ExplainerConfig,
    pub eval: EvalConfig,
}

/// An instance that produced no record, with the reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skip {
    pub model: String,
    pub image_id: String,
    pub instance_id: String,
    /// `None` when the instance was skipped for every method.
    pub method: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: ConfigSnapshot,
    pub records: Vec<EvaluationRecord>,
    /// In run order: model, then method.
    pub aggregates: Vec<Aggregate>,
    pub skips: Vec<Skip>,
}

impl BenchmarkReport {
    /// Recomputes the aggregates from `records` in run order.
    pub fn refresh_aggregates(&mut self) -> Result<(), HarnessError> {
        if self.records.is_empty() {
            self.aggregates.clear();
            return Ok(());
        }
        let mut aggs = aggregate(&self.records)?;
        let models = &self.config.models;
        let methods: Vec<&str> = self.config.methods.iter().map(|m| m.name()).collect();
        let pos = |list: &[&str], v: &str| list.iter().position(|x| *x == v).unwrap_or(usize::MAX);
        let model_names: Vec<&str> = models.iter().map(String::as_str).collect();
        aggs.sort_by_key(|a| (pos(&model_names, &a.model), pos(&methods, &a.method)));
        self.aggregates = aggs;
        Ok(())
    }
}

/// The detection of the same class with the highest IoU, if it reaches
/// `gamma`. Ties keep the earlier detection.
pub fn match_instance(
    gt: &GroundTruthInstance,
    gt_class: &str,
    detections: &[Detection],
    class_names: &[String],
    gamma: f64,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, d) in detections.iter().enumerate() {
        if class_names.get(d.label()).map(String::as_str) != Some(gt_class) {
            continue;
        }
        let v = iou(d.bbox(), &gt.bbox);
        if v >= gamma && best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// A dataset image with its detections, or why it could not be used.
type Loaded = Result<(crate::types::ImageBuffer, Vec<Detection>), String>;

/// Explains and scores every sampled ground-truth instance with every
/// method on every backend.
///
/// Instances are taken in `(image_id, instance_id)` order and truncated to
/// `sample_limit`. An instance without a same-class detection at IoU ≥
/// `cfg.eval.gamma` is skipped, as is any single run that fails; the report
/// lists each skip with its reason. Only invalid arguments abort, since the
/// backends have completed their handshake by the time they get here.
pub fn run_benchmark(
    index: &DatasetIndex,
    backends: &[ModelBackend],
    methods: &[Method],
    cfg: &BenchConfig,
    sample_limit: usize,
) -> Result<BenchmarkReport, HarnessError> {
    if backends.is_empty() || methods.is_empty() {
        return Err(HarnessError::InvalidConfig("need at least one backend and one method".into()));
    }
    if sample_limit == 0 {
        return Err(HarnessError::InvalidConfig("sample_limit must be at least 1".into()));
    }
    cfg.eval.validate()?;
    cfg.explainer.validate()?;
    index.validate()?;

    let mut instances = index.instances();
    instances.truncate(sample_limit);
    let mut snapshot_explainer = cfg.explainer.clone();
    snapshot_explainer.workers = 0;
    let mut report = BenchmarkReport {
        config: ConfigSnapshot {
            dataset: index.name.clone(),
            models: backends.iter().map(|b| b.name.clone()).collect(),
            methods: methods.to_vec(),
            sample_limit,
            explainer: snapshot_explainer,
            eval: cfg.eval.clone(),
        },
        records: Vec::new(),
        aggregates: Vec::new(),
        skips: Vec::new(),
    };

    for model in backends {
        let class_names = &model.backend.descriptor().class_names;
        let mut current: Option<(&str, Loaded)> = None;
        for &(entry, gt) in &instances {
            if current.as_ref().is_none_or(|(id, _)| *id != entry.image_id) {
                current = Some((&entry.image_id, load_and_detect(entry, model.backend.as_ref())));
            }
            let skip = |method: Option<&str>, reason: String| {
                log::warn!("skip {} {} {}: {reason}", model.name, entry.image_id, gt.instance_id);
                Skip {
                    model: model.name.clone(),
                    image_id: entry.image_id.clone(),
                    instance_id: gt.instance_id.clone(),
                    method: method.map(str::to_string),
                    reason,
                }
            };
            let (image, detections) = match &current.as_ref().expect("set above").1 {
                Ok(v) => (&v.0, &v.1),
                Err(e) => {
                    report.skips.push(skip(None, e.clone()));
                    continue;
                }
            };
            let category = index.category_name(gt.label).unwrap_or_default();
            let Some(found) = match_instance(gt, category, detections, class_names, cfg.eval.gamma) else {
                report.skips.push(skip(None, "no matching detection".into()));
                continue;
            };
            let target = TargetSpec {
                detection: detections[found].clone(),
                image_id: entry.image_id.clone(),
            };
            for &method in methods {
                let ecfg = ExplainerConfig {
                    method,
                    ..cfg.explainer.clone()
                };
                let meta = RecordMeta {
                    method: method.name().to_string(),
                    model: model.name.clone(),
                    dataset: index.name.clone(),
                    image_id: entry.image_id.clone(),
                    instance_id: gt.instance_id.clone(),
                    category: category.to_string(),
                };
                let outcome = explain(model.backend.as_ref(), image, &target, &ecfg)
                    .map_err(|e| format!("explain: {e}"))
                    .and_then(|ex| {
                        evaluate_all(
                            model.backend.as_ref(),
                            image,
                            &ex.saliency,
                            ex.elapsed_s,
                            &target.detection,
                            &gt.bbox,
                            meta,
                            &cfg.eval,
                        )
                        .map_err(|e| format!("evaluate: {e}"))
                    });
                match outcome {
                    Ok(rec) => {
                        log::info!(
                            "{} {} {} {}: ins {:.3} del {:.3}",
                            model.name,
                            method.name(),
                            entry.image_id,
                            gt.instance_id,
                            rec.ins_auc,
                            rec.del_auc
                        );
                        report.records.push(rec);
                    }
                    Err(reason) => report.skips.push(skip(Some(method.name()), reason)),
                }
            }
        }
    }
    report.refresh_aggregates()?;
    Ok(report)
}

fn load_and_detect(
    entry: &ImageEntry,
    backend: &dyn Detector,
) -> Result<(crate::types::ImageBuffer, Vec<Detection>), String> {
    let image = load_image(&entry.path).map_err(|e| format!("load {}: {e}", entry.path.display()))?;
    if (image.width(), image.height()) != (entry.width, entry.height) {
        return Err(format!(
            "image is {}x{} but annotated as {}x{}",
            image.width(),
            image.height(),
            entry.width,
            entry.height
        ));
    }
    let dets = detect(backend, std::slice::from_ref(&image))
        .map_err(|e| format!("detect: {e}"))?
        .pop()
        .unwrap_or_default();
    Ok((image, dets))
}
