use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use odexai::detectors::{detect, open_backend, BackendOptions, BackendSpec, Detector};
use odexai::explainers::{explain, load_explanation, save_explanation, ExplainerConfig, Method, TargetSpec};
use odexai::harness::{
    emit_table, load_coco, load_voc, run_benchmark, write_blob_dataset, write_report_bundle, BenchConfig, ModelBackend,
};
use odexai::imageproc::{decode_pgm, load_image};
use odexai::metrics::{evaluate_all, EvalConfig, RecordMeta};
use odexai::BBox;

#[derive(Parser)]
#[command(name = "odexai", version, about = "Explain object detectors and score the explanations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every method on every backend over a dataset and write a report.
    Bench(BenchArgs),
    /// Print a backend's detections for one image as JSON.
    Detect(DetectArgs),
    /// Explain one detection and write a 16-bit PGM plus a JSON sidecar.
    Explain(ExplainArgs),
    /// Score a saliency map against one detection.
    Eval(EvalArgs),
    /// Run the REST service.
    Serve(ServeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DatasetKind {
    Coco,
    Voc,
    /// Generated single-blob images, useful with the synthetic backend.
    Blobs,
}

#[derive(Args)]
struct BackendArgs {
    /// `synthetic`, `subprocess:<cmd>` or `http:<url>`
    #[arg(long, default_value = "synthetic")]
    backend: String,
    /// Seconds to wait for each backend call.
    #[arg(long, default_value_t = 120)]
    timeout: u64,
}

impl BackendArgs {
    fn open(&self, pool_size: usize) -> Result<Arc<dyn Detector>> {
        let spec: BackendSpec = self.backend.parse()?;
        let options = BackendOptions {
            pool_size,
            timeout: Duration::from_secs(self.timeout.max(1)),
        };
        Ok(open_backend(&spec, &options)?)
    }
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum)]
    dataset: DatasetKind,
    /// COCO annotation file.
    #[arg(long)]
    ann: Option<PathBuf>,
    /// COCO image directory, VOC root, or where to write generated blobs.
    #[arg(long)]
    images: PathBuf,
    /// Blob images to generate.
    #[arg(long, default_value_t = 20)]
    count: usize,
    /// Repeatable `NAME=SPEC`; a bare spec is named after itself.
    #[arg(long = "backend", default_value = "synthetic")]
    backends: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "drise,dclose,gcame")]
    methods: Vec<String>,
    /// JSON file with `explainer` and `eval` sections; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    masks: Option<usize>,
    /// D-CLOSE superpixel levels, for example `50,150,300`.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Instances to evaluate, in (image, instance) order.
    #[arg(long, default_value_t = usize::MAX)]
    limit: usize,
    /// Backend processes per backend.
    #[arg(long, default_value_t = 1)]
    pool: usize,
    #[arg(long, default_value_t = 120)]
    timeout: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    method: String,
    /// Index into the backend's detections, as printed by `detect`.
    #[arg(long, default_value_t = 0)]
    target_index: usize,
    #[arg(long)]
    masks: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output PGM; the sidecar goes next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// PGM written by `explain` (its sidecar is used when present) or any
    /// binary PGM of the image's size.
    #[arg(long)]
    saliency: PathBuf,
    #[arg(long)]
    image: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value_t = 0)]
    target_index: usize,
    /// `x1,y1,x2,y2`; defaults to the target's box.
    #[arg(long, value_delimiter = ',')]
    roi: Option<Vec<f64>>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Record file; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    /// TOML service configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Bench(a) => bench(a),
        Command::Detect(a) => detect_cmd(a),
        Command::Explain(a) => explain_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Serve(a) => serve(a),
    }
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    let mut methods = Vec::new();
    for name in names {
        let m: Method = name.parse()?;
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    Ok(methods)
}

fn apply_explainer_flags(cfg: &mut ExplainerConfig, masks: Option<usize>, levels: Option<Vec<usize>>, seed: Option<u64>) {
    if let Some(n) = masks {
        cfg.n_masks = n;
    }
    if let Some(levels) = levels {
        cfg.dclose_levels = levels;
    }
    if let Some(seed) = seed {
        cfg.rng_seed = seed;
    }
}

fn apply_eval_flags(cfg: &mut EvalConfig, steps: Option<usize>, gamma: Option<f64>) {
    if let Some(s) = steps {
        cfg.steps = s;
    }
    if let Some(g) = gamma {
        cfg.gamma = g;
    }
}

fn bench(a: BenchArgs) -> Result<()> {
    let index = match a.dataset {
        DatasetKind::Coco => {
            let ann = a.ann.as_ref().ok_or_else(|| anyhow!("--dataset coco needs --ann"))?;
            load_coco(ann, &a.images)?
        }
        DatasetKind::Voc => load_voc(&a.images)?,
        DatasetKind::Blobs => write_blob_dataset(&a.images, a.count, a.seed.unwrap_or(0))?,
    };
    let mut cfg: BenchConfig = match &a.config {
        Some(path) => serde_json::from_slice(&std::fs::read(path).with_context(|| path.display().to_string())?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => BenchConfig::default(),
    };
    apply_explainer_flags(&mut cfg.explainer, a.masks, a.levels, a.seed);
    apply_eval_flags(&mut cfg.eval, a.steps, a.gamma);
    let methods = parse_methods(&a.methods)?;

    let mut backends = Vec::new();
    for entry in &a.backends {
        let (name, spec) = match entry.split_once('=') {
            Some((name, spec)) if !name.contains(':') => (name.to_string(), spec),
            _ => (entry.clone(), entry.as_str()),
        };
        let args = BackendArgs {
            backend: spec.to_string(),
            timeout: a.timeout,
        };
        let backend = args.open(a.pool).with_context(|| format!("opening backend {name}"))?;
        backends.push(ModelBackend { name, backend });
    }
    log::info!(
        "{} instances in {}, {} backends, {} methods",
        index.instance_count().min(a.limit),
        index.name,
        backends.len(),
        methods.len()
    );
    let report = run_benchmark(&index, &backends, &methods, &cfg, a.limit)?;
    write_report_bundle(&report, &a.out)?;
    print!("{}", emit_table(&report.aggregates));
    log::info!(
        "{} records, {} skips, report in {}",
        report.records.len(),
        report.skips.len(),
        a.out.display()
    );
    Ok(())
}

fn detect_cmd(a: DetectArgs) -> Result<()> {
    let image = load_image(&a.image)?;
    let backend = a.backend.open(1)?;
    let dets = detect(backend.as_ref(), std::slice::from_ref(&image))?.pop().unwrap_or_default();
    let classes = &backend.descriptor().class_names;
    for (i, d) in dets.iter().enumerate() {
        let name = classes.get(d.label()).map_or("?", String::as_str);
        log::info!("{i}: {name} {:.3} {:?}", d.score(), d.bbox().to_array());
    }
    println!("{}", serde_json::to_string_pretty(&dets)?);
    Ok(())
}

fn explain_cmd(a: ExplainArgs) -> Result<()> {
    let image = load_image(&a.image)?;
    let backend = a.backend.open(1)?;
    let dets = detect(backend.as_ref(), std::slice::from_ref(&image))?.pop().unwrap_or_default();
    let detection = dets
        .get(a.target_index)
        .cloned()
        .ok_or_else(|| anyhow!("target index {} but the backend found {} objects", a.target_index, dets.len()))?;
    let mut cfg = ExplainerConfig::for_method(a.method.parse()?);
    apply_explainer_flags(&mut cfg, a.masks, a.levels, a.seed);
    let image_id = file_id(&a.image);
    let target = TargetSpec {
        detection: detection.clone(),
        image_id: image_id.clone(),
    };
    let result = explain(backend.as_ref(), &image, &target, &cfg)?;
    if let Some(parent) = a.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_explanation(&result, &image_id, detection.bbox(), &a.out)?;
    log::info!("{} in {:.2} s, written to {}", result.method, result.elapsed_s, a.out.display());
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let image = load_image(&a.image)?;
    let (map, sidecar) = match load_explanation(&a.saliency) {
        Ok((map, sidecar)) => (map, Some(sidecar)),
        Err(_) => (decode_pgm(&std::fs::read(&a.saliency)?)?, None),
    };
    let backend = a.backend.open(1)?;
    let dets = detect(backend.as_ref(), std::slice::from_ref(&image))?.pop().unwrap_or_default();
    let target = dets
        .get(a.target_index)
        .cloned()
        .ok_or_else(|| anyhow!("target index {} but the backend found {} objects", a.target_index, dets.len()))?;
    let roi = match a.roi.as_deref() {
        Some(&[x1, y1, x2, y2]) => BBox::new(x1, y1, x2, y2)?,
        Some(_) => bail!("--roi takes x1,y1,x2,y2"),
        None => *target.bbox(),
    };
    let mut cfg = EvalConfig::default();
    apply_eval_flags(&mut cfg, a.steps, a.gamma);
    let descriptor = backend.descriptor();
    let meta = RecordMeta {
        method: sidecar.as_ref().map_or_else(|| "custom".to_string(), |s| s.method.to_string()),
        model: descriptor.name.clone(),
        dataset: "cli".into(),
        image_id: file_id(&a.image),
        instance_id: a.target_index.to_string(),
        category: descriptor.class_names.get(target.label()).cloned().unwrap_or_default(),
    };
    let time_s = sidecar.as_ref().map_or(0.0, |s| s.elapsed_s);
    let record = evaluate_all(backend.as_ref(), &image, &map, time_s, &target, &roi, meta, &cfg)?;
    let json = serde_json::to_string_pretty(&record)?;
    match &a.out {
        Some(path) => std::fs::write(path, json + "\n")?,
        None => println!("{json}"),
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let config = match &a.config {
        Some(path) => odexai_service::ServiceConfig::load(path)?,
        None => odexai_service::ServiceConfig::default(),
    };
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(odexai_service::serve(config))?;
    Ok(())
}

fn file_id(path: &Path) -> String {
    path.file_stem().map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}
