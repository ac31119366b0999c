use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::{BytesRejection, JsonRejection};
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use odexai::detectors::detect;
use odexai::explainers::{explain, ExplainerConfig, ExplanationSidecar, Method, TargetSpec};
use odexai::harness::{aggregate, spider_axes, SpiderMode};
use odexai::imageproc::{decode_pgm, decode_png, encode_pgm16};
use odexai::metrics::{evaluate_all, EvalConfig, RecordMeta};
use odexai::{BBox, Detection, ImageBuffer, SaliencyMap};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::jobs::{JobKind, JobManager};
use crate::registry::Registry;
use crate::store::{write_atomic, ArtifactStore};
use crate::{ServiceConfig, ServiceError, OPENAPI};

/// Detections of one image by one backend. `generation` changes on every
/// detect call, so a client can tell that indices it holds are outdated.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DetectionSet {
    generation: u64,
    detections: Vec<Detection>,
}

pub struct Inner {
    config: ServiceConfig,
    store: ArtifactStore,
    registry: Registry,
    jobs: Arc<JobManager>,
    detections_dir: PathBuf,
    detections: Mutex<BTreeMap<(String, String), DetectionSet>>,
    generation: AtomicU64,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens the data directory and starts the job workers. Must run inside
    /// a tokio runtime.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.validate()?;
        let root = &config.data_dir;
        let store = ArtifactStore::open(root)?;
        let jobs = JobManager::start(root, config.queue_capacity, config.workers)?;
        let detections_dir = root.join("detections");
        std::fs::create_dir_all(&detections_dir)?;
        let mut detections = BTreeMap::new();
        let mut generation = 0;
        for entry in std::fs::read_dir(&detections_dir)? {
            let path = entry?.path();
            let Some(name) = path.file_stem().and_then(|s| s.to_str()) else { continue };
            let Some((image, backend)) = name.split_once('.') else { continue };
            match std::fs::read(&path).map(|b| serde_json::from_slice::<DetectionSet>(&b)) {
                Ok(Ok(set)) => {
                    generation = generation.max(set.generation);
                    detections.insert((image.to_string(), backend.to_string()), set);
                }
                _ => log::warn!("ignoring unreadable detection file {}", path.display()),
            }
        }
        let registry = Registry::new(config.backends.clone(), config.backend_timeout());
        Ok(Self(Arc::new(Inner {
            config,
            store,
            registry,
            jobs,
            detections_dir,
            detections: Mutex::new(detections),
            generation: AtomicU64::new(generation + 1),
        })))
    }

    pub fn jobs(&self) -> &Arc<JobManager> {
        &self.0.jobs
    }
}

pub fn router(state: AppState) -> Router {
    let limit = state.0.config.max_upload_bytes;
    let mut app = Router::new()
        .route("/api/openapi.json", get(openapi))
        .route("/api/backends", get(backends))
        .route("/api/images", post(upload_image))
        .route("/api/saliency", post(upload_saliency))
        .route("/api/detect", post(detect_objects))
        .route("/api/explain", post(submit_explain))
        .route("/api/evaluate", post(submit_evaluate))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/artifacts/{reference}", get(artifact))
        .layer(DefaultBodyLimit::max(limit));
    if let Some(dir) = &state.0.config.ui_dir {
        app = app.nest_service("/ui", tower_http::services::ServeDir::new(dir));
    }
    app.with_state(state)
}

/// JSON extractor whose failures are [`ServiceError::BadRequest`].
struct Body<T>(T);

impl<S, T> FromRequest<S> for Body<T>
where
    Json<T>: FromRequest<S, Rejection = JsonRejection>,
    S: Send + Sync,
{
    type Rejection = ServiceError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Body(v)),
            Err(e) if e.status() == StatusCode::PAYLOAD_TOO_LARGE => Err(ServiceError::TooLarge),
            Err(e) => Err(ServiceError::BadRequest(e.body_text())),
        }
    }
}

fn raw_body(body: Result<Bytes, BytesRejection>) -> Result<Bytes, ServiceError> {
    body.map_err(|e| {
        if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
            ServiceError::TooLarge
        } else {
            ServiceError::BadRequest(e.body_text())
        }
    })
}

/// Runs blocking work (backend calls, image decoding) off the async threads.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

impl Inner {
    fn image(&self, image_id: &str) -> Result<ImageBuffer, ServiceError> {
        let bytes = self
            .store
            .get(image_id)
            .map_err(|_| ServiceError::UnknownImage(image_id.to_string()))?;
        decode_png(&bytes).map_err(|_| ServiceError::UnknownImage(image_id.to_string()))
    }

    fn saliency(&self, reference: &str) -> Result<SaliencyMap, ServiceError> {
        let bytes = self.store.get(reference)?;
        decode_pgm(&bytes).map_err(|e| ServiceError::BadRequest(format!("{reference} is not a saliency map: {e}")))
    }

    fn detection_set(&self, image_id: &str, backend: &str) -> Option<DetectionSet> {
        let key = (image_id.to_string(), backend.to_string());
        self.detections.lock().expect("detections lock").get(&key).cloned()
    }

    fn store_detections(&self, image_id: &str, backend: &str, detections: Vec<Detection>) -> Result<DetectionSet, ServiceError> {
        let mut table = self.detections.lock().expect("detections lock");
        let set = DetectionSet {
            generation: self.generation.fetch_add(1, Ordering::Relaxed),
            detections,
        };
        let path = self.detections_dir.join(format!("{image_id}.{backend}.json"));
        write_atomic(&path, &serde_json::to_vec(&set)?)?;
        table.insert((image_id.to_string(), backend.to_string()), set.clone());
        Ok(set)
    }

    /// The detection at `index` in the latest list for this image and
    /// backend. `generation`, when given, must name that latest list.
    fn target(&self, image_id: &str, backend: &str, index: usize, generation: Option<u64>) -> Result<Detection, ServiceError> {
        let set = self.detection_set(image_id, backend).ok_or_else(|| {
            ServiceError::TargetIndexStale(format!("no detections of {image_id} by {backend:?}; call /api/detect first"))
        })?;
        if let Some(g) = generation {
            if g != set.generation {
                return Err(ServiceError::TargetIndexStale(format!(
                    "detections were re-run (generation {} is now {})",
                    g, set.generation
                )));
            }
        }
        set.detections.get(index).cloned().ok_or_else(|| {
            ServiceError::TargetIndexStale(format!("target_index {index} but only {} detections", set.detections.len()))
        })
    }

    fn check_backend(&self, name: &str) -> Result<(), ServiceError> {
        if self.registry.names().any(|n| n == name) {
            Ok(())
        } else {
            Err(ServiceError::UnknownBackend(name.to_string()))
        }
    }
}

async fn openapi() -> Response {
    ([(header::CONTENT_TYPE, "application/json")], OPENAPI).into_response()
}

async fn backends(State(s): State<AppState>) -> Json<Value> {
    Json(json!({ "backends": s.0.registry.names().collect::<Vec<_>>() }))
}

async fn upload_image(State(s): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Json<Value>, ServiceError> {
    let bytes = raw_body(body)?;
    let inner = s.0.clone();
    blocking(move || {
        let image = decode_png(&bytes).map_err(|e| ServiceError::BadImage(e.to_string()))?;
        let image_id = inner.store.put(&bytes)?;
        Ok(Json(json!({ "image_id": image_id, "width": image.width(), "height": image.height() })))
    })
    .await
}

/// Accepts a 16-bit PGM, for scoring maps produced elsewhere.
async fn upload_saliency(State(s): State<AppState>, body: Result<Bytes, BytesRejection>) -> Result<Json<Value>, ServiceError> {
    let bytes = raw_body(body)?;
    let map = decode_pgm(&bytes).map_err(|e| ServiceError::BadImage(e.to_string()))?;
    let saliency_ref = s.0.store.put(&encode_pgm16(&map))?;
    Ok(Json(json!({ "saliency_ref": saliency_ref, "width": map.width(), "height": map.height() })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectRequest {
    image_id: String,
    backend: String,
}

async fn detect_objects(State(s): State<AppState>, Body(req): Body<DetectRequest>) -> Result<Json<Value>, ServiceError> {
    let inner = s.0.clone();
    blocking(move || {
        let image = inner.image(&req.image_id)?;
        let backend = inner.registry.get(&req.backend)?;
        let dets = detect(backend.as_ref(), std::slice::from_ref(&image))?.pop().unwrap_or_default();
        let classes = &backend.descriptor().class_names;
        let set = inner.store_detections(&req.image_id, &req.backend, dets)?;
        let detections: Vec<Value> = set
            .detections
            .iter()
            .enumerate()
            .map(|(index, d)| {
                json!({
                    "index": index,
                    "bbox": d.bbox(),
                    "objectness": d.objectness(),
                    "class_probs": d.class_probs(),
                    "label": d.label(),
                    "class_name": classes.get(d.label()),
                    "score": d.score(),
                })
            })
            .collect();
        Ok(Json(json!({ "generation": set.generation, "detections": detections })))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExplainRequest {
    image_id: String,
    backend: String,
    method: String,
    target_index: usize,
    /// Generation returned by the detect call the index was taken from.
    #[serde(default)]
    detection_generation: Option<u64>,
    /// Explainer parameters; omitted fields take their defaults.
    #[serde(default)]
    config: Option<ExplainerConfig>,
}

fn accepted(job: crate::Job) -> Response {
    (StatusCode::ACCEPTED, Json(json!({ "job_id": job.job_id, "state": job.state }))).into_response()
}

async fn submit_explain(State(s): State<AppState>, Body(req): Body<ExplainRequest>) -> Result<Response, ServiceError> {
    let inner = &s.0;
    let method: Method = req.method.parse().map_err(|e: odexai::explainers::ExplainError| ServiceError::BadRequest(e.to_string()))?;
    let mut cfg = req.config.unwrap_or_default();
    cfg.method = method;
    cfg.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    inner.check_backend(&req.backend)?;
    let image = inner.image(&req.image_id)?;
    let target = inner.target(&req.image_id, &req.backend, req.target_index, req.detection_generation)?;

    let worker = s.0.clone();
    let job = inner.jobs.submit(JobKind::Explain, move |progress| {
        let backend = worker.registry.get(&req.backend)?;
        progress.set(0.05);
        let spec = TargetSpec {
            detection: target.clone(),
            image_id: req.image_id.clone(),
        };
        let result = explain(backend.as_ref(), &image, &spec, &cfg).map_err(|e| ServiceError::Internal(e.to_string()))?;
        progress.set(0.95);
        let saliency_ref = worker.store.put(&encode_pgm16(&result.saliency))?;
        let sidecar = ExplanationSidecar {
            method: result.method,
            config_digest: result.config_digest.clone(),
            elapsed_s: result.elapsed_s,
            image_id: req.image_id.clone(),
            target_bbox: *target.bbox(),
        };
        let sidecar_ref = worker.store.put(&serde_json::to_vec_pretty(&sidecar)?)?;
        let summary = json!({
            "saliency_ref": saliency_ref,
            "sidecar_ref": sidecar_ref,
            "width": result.saliency.width(),
            "height": result.saliency.height(),
            "sidecar": sidecar,
        });
        Ok((saliency_ref, summary))
    })?;
    Ok(accepted(job))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateRequest {
    image_id: String,
    saliency_ref: String,
    target_index: usize,
    backend: String,
    #[serde(default)]
    detection_generation: Option<u64>,
    #[serde(default)]
    config: Option<EvalConfig>,
    /// Region for the localization metrics; defaults to the target's box.
    #[serde(default)]
    roi: Option<BBox>,
    /// Labels the record; defaults to "custom".
    #[serde(default)]
    method: Option<String>,
    /// Explanation time to record, in seconds.
    #[serde(default)]
    time_s: Option<f64>,
}

async fn submit_evaluate(State(s): State<AppState>, Body(req): Body<EvaluateRequest>) -> Result<Response, ServiceError> {
    let inner = &s.0;
    let cfg = req.config.clone().unwrap_or_default();
    cfg.validate().map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    inner.check_backend(&req.backend)?;
    let image = inner.image(&req.image_id)?;
    let map = inner.saliency(&req.saliency_ref)?;
    if (map.width(), map.height()) != (image.width(), image.height()) {
        return Err(ServiceError::DimensionMismatch(format!(
            "saliency is {}x{} but the image is {}x{}",
            map.width(),
            map.height(),
            image.width(),
            image.height()
        )));
    }
    let target = inner.target(&req.image_id, &req.backend, req.target_index, req.detection_generation)?;
    let roi = req.roi.unwrap_or(*target.bbox());
    let time_s = req.time_s.unwrap_or(0.0);
    if !(time_s.is_finite() && time_s >= 0.0) {
        return Err(ServiceError::BadRequest("time_s must be a finite non-negative number".into()));
    }

    let worker = s.0.clone();
    let job = inner.jobs.submit(JobKind::Evaluate, move |progress| {
        let backend = worker.registry.get(&req.backend)?;
        let category = backend
            .descriptor()
            .class_names
            .get(target.label())
            .cloned()
            .unwrap_or_else(|| target.label().to_string());
        let meta = RecordMeta {
            method: req.method.clone().unwrap_or_else(|| "custom".into()),
            model: req.backend.clone(),
            dataset: "upload".into(),
            image_id: req.image_id.clone(),
            instance_id: req.target_index.to_string(),
            category,
        };
        progress.set(0.05);
        let record = evaluate_all(backend.as_ref(), &image, &map, time_s, &target, &roi, meta, &cfg)
            .map_err(|e| ServiceError::Internal(e.to_string()))?;
        let aggs = aggregate(std::slice::from_ref(&record)).map_err(|e| ServiceError::Internal(e.to_string()))?;
        let axes = spider_axes(&aggs, SpiderMode::ThreeAxis).pop();
        let record_ref = worker.store.put(&serde_json::to_vec_pretty(&record)?)?;
        Ok((record_ref, json!({ "record": record, "axes": axes })))
    })?;
    Ok(accepted(job))
}

async fn job_status(State(s): State<AppState>, Path(id): Path<String>) -> Result<Json<crate::Job>, ServiceError> {
    s.0.jobs.get(&id).map(Json).ok_or(ServiceError::UnknownJob(id))
}

async fn artifact(State(s): State<AppState>, Path(reference): Path<String>) -> Result<Response, ServiceError> {
    let bytes = s.0.store.get(&reference)?;
    Ok((
        [
            (header::CONTENT_TYPE, "application/octet-stream"),
            (header::CACHE_CONTROL, "public, max-age=31536000, immutable"),
        ],
        bytes,
    )
        .into_response())
}
