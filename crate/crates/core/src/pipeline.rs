//! End-to-end orchestration: mesh to contour views to optimized sketches,
//! with every written artifact recorded in a hashed manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour_stage::{
    dedup_indices, load_mesh, perceptual_hash, render_all_views, select_views, ContourError, ContourImage, HlrConfig,
    ImageError, MeshError, PerceptualHash, ViewRecord, DEFAULT_DEDUP_THRESHOLD, DEFAULT_MARGIN,
};
use crate::edge_init::{save_seed_overlay, EdgeInitError, SeedPlan};
use crate::evaluation::{sketch_vs_contour_metrics, ComplexityClass, EvalError, MetricsReport, SketchMetrics};
use crate::guidance_optimizer::{
    distill_targets, optimize_from, read_trace_bundle, seed_sketch, write_loss_csv, OptimizeError, OptimizerConfig,
};
use crate::losses::{EmbeddingBackend, ExternalBackend, LossError, PyramidBackend};
use crate::stroke_model::{parse_svg_paths, rasterize, to_svg, RasterError, Sketch, Stroke, StrokeError};

pub const MANIFEST_SCHEMA: &str = "v1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const CONTOURS_FILE: &str = "contours.json";

/// Which embedding backend drives the perceptual loss. Serialized as
/// `"default"` or `"external:<path>"`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BackendChoice {
    #[default]
    Default,
    External(PathBuf),
}

impl BackendChoice {
    pub fn build(&self) -> Box<dyn EmbeddingBackend> {
        match self {
            Self::Default => Box::new(PyramidBackend::default()),
            Self::External(program) => Box::new(ExternalBackend {
                program: program.clone(),
            }),
        }
    }
}

impl fmt::Display for BackendChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Default => f.write_str("default"),
            Self::External(p) => write!(f, "external:{}", p.display()),
        }
    }
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            _ if s == "default" => Ok(Self::Default),
            Some(("external", path)) if !path.is_empty() => Ok(Self::External(PathBuf::from(path))),
            _ => Err(format!("backend must be \"default\" or \"external:<path>\", got {s:?}")),
        }
    }
}

impl TryFrom<String> for BackendChoice {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<BackendChoice> for String {
    fn from(b: BackendChoice) -> Self {
        b.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Mesh file (`.stl` / `.obj`) for `run` and `contours`.
    pub input: PathBuf,
    /// Strokes per sketch.
    pub strokes: usize,
    /// Views passed from the contour stage to the optimizer.
    pub views: usize,
    pub dedup_threshold: u32,
    pub margin: usize,
    pub hlr: HlrConfig,
    /// Optimizer settings, including raster parameters and loss weights.
    /// Its `rng_seed` is replaced by the per-view seed.
    pub optimizer: OptimizerConfig,
    pub backend: BackendChoice,
    pub output_dir: PathBuf,
    /// Global seed; view `i` (canonical index) uses `rng_seed + i`.
    pub rng_seed: u64,
    /// Views optimized concurrently; 0 uses all cores.
    pub jobs: usize,
    /// Write per-view contour PNGs, seed overlays and loss histories.
    pub intermediates: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: PathBuf::new(),
            strokes: 16,
            views: 3,
            dedup_threshold: DEFAULT_DEDUP_THRESHOLD,
            margin: DEFAULT_MARGIN,
            hlr: HlrConfig::default(),
            optimizer: OptimizerConfig::default(),
            backend: BackendChoice::Default,
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            jobs: 0,
            intermediates: true,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::input("config", None, e))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::input("config", None, format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::input("config", None, m));
        if self.strokes == 0 {
            return bad("strokes must be at least 1".into());
        }
        if self.views == 0 {
            return bad("views must be at least 1".into());
        }
        if self.margin * 2 >= crate::contour_stage::CANVAS {
            return bad(format!("margin {} leaves no drawing area", self.margin));
        }
        self.optimizer
            .validate()
            .map_err(|e| PipelineError::input("config", None, e))
    }

    fn optimizer_for(&self, view_index: usize) -> OptimizerConfig {
        OptimizerConfig {
            rng_seed: self.rng_seed.wrapping_add(view_index as u64),
            ..self.optimizer
        }
    }

    fn thread_pool(&self) -> Result<rayon::ThreadPool, PipelineError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| PipelineError::other("config", None, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numeric,
    Other,
}

/// A failure tagged with the pipeline stage and, where relevant, the view.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: &'static str,
    pub view: Option<String>,
    pub kind: ErrorKind,
    pub message: String,
}

impl PipelineError {
    fn new(stage: &'static str, view: Option<&str>, kind: ErrorKind, e: impl fmt::Display) -> Self {
        Self {
            stage,
            view: view.map(str::to_string),
            kind,
            message: e.to_string(),
        }
    }

    fn input(stage: &'static str, view: Option<&str>, e: impl fmt::Display) -> Self {
        Self::new(stage, view, ErrorKind::Input, e)
    }

    fn other(stage: &'static str, view: Option<&str>, e: impl fmt::Display) -> Self {
        Self::new(stage, view, ErrorKind::Other, e)
    }

    fn io(view: Option<&str>, path: &Path, e: impl fmt::Display) -> Self {
        Self::other("export", view, format!("{}: {e}", path.display()))
    }

    fn mesh(e: MeshError) -> Self {
        Self::input("load_mesh", None, e)
    }

    fn contour(view: &str, e: ContourError) -> Self {
        Self::input("render_views", Some(view), e)
    }

    fn edge_init(view: Option<&str>, e: EdgeInitError) -> Self {
        let kind = match e {
            EdgeInitError::Stroke(_) => ErrorKind::Numeric,
            EdgeInitError::Io { .. } => ErrorKind::Other,
            _ => ErrorKind::Input,
        };
        Self::new("edge_init", view, kind, e)
    }

    fn optimize(view: Option<&str>, e: OptimizeError) -> Self {
        let e = match e {
            OptimizeError::Init(inner) => return Self::edge_init(view, inner),
            other => other,
        };
        let kind = match &e {
            OptimizeError::Config(_) | OptimizeError::Raster(RasterError::Params(_)) => ErrorKind::Input,
            OptimizeError::Init(_) => unreachable!("handled above"),
            OptimizeError::Loss(LossError::Backend(_) | LossError::Weights(_)) => ErrorKind::Other,
            OptimizeError::Bundle { .. } => ErrorKind::Other,
            OptimizeError::NonFinite { .. } | OptimizeError::Loss(_) | OptimizeError::Raster(_) | OptimizeError::Stroke(_) => {
                ErrorKind::Numeric
            }
        };
        Self::new("optimize_sketch", view, kind, e)
    }
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.view {
            Some(v) => write!(f, "stage {} (view {v}): {}", self.stage, self.message),
            None => write!(f, "stage {}: {}", self.stage, self.message),
        }
    }
}

impl std::error::Error for PipelineError {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub label: String,
    pub canonical_index: usize,
    pub rng_seed: u64,
    pub strokes: usize,
    pub complexity: ComplexityClass,
    pub dropped_segments: Vec<usize>,
    pub initial_loss: f64,
    pub best_loss: f64,
    pub best_step: usize,
    pub svg: String,
    pub trace_bundle: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub input_sha256: String,
    pub config: PipelineConfig,
    pub dropped_triangles: usize,
    /// All 26 rendered views in canonical order.
    pub rendered: Vec<ViewRecord>,
    /// Labels surviving deduplication.
    pub kept: Vec<String>,
    /// Labels chosen for sketching, best first.
    pub selected: Vec<String>,
    pub views: Vec<ViewSummary>,
    pub metrics: Option<String>,
    /// Set when the run stopped early; the artifacts written so far are
    /// still listed.
    pub error: Option<String>,
    /// Every file written by the run except the manifest itself.
    pub artifacts: Vec<Artifact>,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::input("eval", None, format!("{}: {e}", path.display())))?;
        let manifest: Self = serde_json::from_str(&text).map_err(|e| PipelineError::input("eval", None, e))?;
        if manifest.schema != MANIFEST_SCHEMA {
            return Err(PipelineError::input("eval", None, format!("unsupported manifest schema {}", manifest.schema)));
        }
        Ok(manifest)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Records written files relative to an output root.
struct ArtifactLog {
    root: PathBuf,
    entries: Vec<Artifact>,
}

impl ArtifactLog {
    fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            entries: Vec::new(),
        }
    }

    fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components()
            .map(|c| c.as_os_str().to_string_lossy().into_owned())
            .collect::<Vec<_>>()
            .join("/")
    }

    fn write(&mut self, path: &Path, bytes: &[u8], view: Option<&str>) -> Result<String, PipelineError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| PipelineError::io(view, parent, e))?;
        }
        fs::write(path, bytes).map_err(|e| PipelineError::io(view, path, e))?;
        Ok(self.record(path, bytes))
    }

    /// Hashes a file some other writer produced.
    fn adopt(&mut self, path: &Path, view: Option<&str>) -> Result<String, PipelineError> {
        let bytes = fs::read(path).map_err(|e| PipelineError::io(view, path, e))?;
        Ok(self.record(path, &bytes))
    }

    fn record(&mut self, path: &Path, bytes: &[u8]) -> String {
        let rel = self.relative(path);
        self.entries.retain(|a| a.path != rel);
        self.entries.push(Artifact {
            path: rel.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
        rel
    }

    fn merge(&mut self, other: ArtifactLog) {
        for a in other.entries {
            self.entries.retain(|e| e.path != a.path);
            self.entries.push(a);
        }
    }

    fn finish(mut self) -> Vec<Artifact> {
        self.entries.sort_by(|a, b| a.path.cmp(&b.path));
        self.entries
    }
}

/// 8-bit grayscale PNG of a sketch's soft raster.
pub fn sketch_preview_png(sketch: &Sketch, params: &crate::stroke_model::RasterParams) -> Result<Vec<u8>, PipelineError> {
    let raster = rasterize(sketch, params);
    let img = raster.to_gray_image();
    let mut bytes = Vec::new();
    img.write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| PipelineError::other("export", None, e))?;
    Ok(bytes)
}

/// Rebuilds a sketch from SVG text written by [`to_svg`]. Coordinates carry
/// the SVG's three-decimal rounding.
pub fn sketch_from_svg(svg: &str) -> Result<Sketch, StrokeError> {
    let widths: Vec<f64> = svg
        .split("stroke-width=\"")
        .skip(1)
        .filter_map(|rest| rest[..rest.find('"')?].parse().ok())
        .collect();
    let paths = parse_svg_paths(svg);
    if widths.len() != paths.len() {
        return Err(StrokeError::Shape(format!("{} paths but {} stroke widths", paths.len(), widths.len())));
    }
    let scale = crate::contour_stage::CANVAS as f64;
    let strokes = paths
        .iter()
        .zip(&widths)
        .map(|(p, &w)| Stroke::new(p.map(|q| [q[0] / scale, q[1] / scale]), w))
        .collect::<Result<Vec<_>, _>>()?;
    Sketch::new(strokes)
}

/// Output of sketching one contour.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchOutcome {
    pub summary: ViewSummary,
    pub metrics: SketchMetrics,
}

/// Stage two on one contour, writing into `dir`: `sketch.svg`,
/// `sketch.png`, the trace bundle under `trace/`, and with intermediates
/// `init.svg`, `seeds.png` and `losses.csv`. Metrics are computed from the
/// sketch as stored in the SVG.
fn sketch_view(
    cfg: &PipelineConfig,
    backend: &dyn EmbeddingBackend,
    contour: &ContourImage,
    label: &str,
    view_index: usize,
    dir: &Path,
    log: &mut ArtifactLog,
) -> Result<SketchOutcome, PipelineError> {
    let view = Some(label);
    let opt = cfg.optimizer_for(view_index);
    let (seeds, initial): (SeedPlan, Sketch) = seed_sketch(contour, cfg.strokes, &opt).map_err(|e| PipelineError::edge_init(view, e))?;
    if cfg.intermediates {
        let overlay = dir.join("seeds.png");
        fs::create_dir_all(dir).map_err(|e| PipelineError::io(view, dir, e))?;
        save_seed_overlay(contour, &seeds.seeds, &overlay).map_err(|e| PipelineError::edge_init(view, e))?;
        log.adopt(&overlay, view)?;
        log.write(&dir.join("init.svg"), to_svg(&initial).as_bytes(), view)?;
    }
    let (sketch, best_step, trace, history) =
        optimize_from(contour, &initial, &opt, backend).map_err(|e| PipelineError::optimize(view, e))?;
    if cfg.intermediates {
        let csv = dir.join("losses.csv");
        write_loss_csv(&history, &csv).map_err(|e| PipelineError::optimize(view, e))?;
        log.adopt(&csv, view)?;
    }
    let svg_text = to_svg(&sketch);
    let svg = log.write(&dir.join("sketch.svg"), svg_text.as_bytes(), view)?;
    let stored = sketch_from_svg(&svg_text).map_err(|e| PipelineError::new("export", view, ErrorKind::Numeric, e))?;
    log.write(&dir.join("sketch.png"), &sketch_preview_png(&stored, &opt.raster)?, view)?;
    let bundle_dir = dir.join("trace");
    for path in distill_targets(contour, &trace, &bundle_dir).map_err(|e| PipelineError::optimize(view, e))? {
        log.adopt(&path, view)?;
    }
    let metrics = sketch_vs_contour_metrics(label, &stored, contour, &opt.raster);
    Ok(SketchOutcome {
        summary: ViewSummary {
            label: label.to_string(),
            canonical_index: view_index,
            rng_seed: opt.rng_seed,
            strokes: sketch.len(),
            complexity: metrics.complexity,
            dropped_segments: seeds.dropped_segments,
            initial_loss: history[0].percept,
            best_loss: history[best_step].percept,
            best_step,
            svg,
            trace_bundle: log.relative(&bundle_dir),
        },
        metrics,
    })
}

fn write_metrics(report: &MetricsReport, out: &Path, log: &mut ArtifactLog) -> Result<String, PipelineError> {
    let json = out.join(METRICS_JSON);
    let csv = out.join(METRICS_CSV);
    let export = |e: EvalError| PipelineError::other("evaluate", None, e);
    fs::create_dir_all(out).map_err(|e| PipelineError::io(None, out, e))?;
    report.write_json(&json).map_err(export)?;
    report.write_csv(&csv).map_err(export)?;
    log.adopt(&csv, None)?;
    log.adopt(&json, None)
}

/// Contour stage over a mesh: all 26 views, dedup and selection.
pub struct ContourStageOutput {
    pub dropped_triangles: usize,
    pub input_sha256: String,
    pub rendered: Vec<ContourImage>,
    pub kept: Vec<usize>,
    pub selected: Vec<ContourImage>,
}

pub fn contour_stage(cfg: &PipelineConfig) -> Result<ContourStageOutput, PipelineError> {
    let bytes = fs::read(&cfg.input).map_err(|e| PipelineError::input("load_mesh", None, format!("{}: {e}", cfg.input.display())))?;
    let loaded = load_mesh(&cfg.input).map_err(PipelineError::mesh)?;
    let rendered = render_all_views(&loaded.mesh, &cfg.hlr, cfg.margin).map_err(|(v, e)| PipelineError::contour(&v.label(), e))?;
    let hashes: Vec<PerceptualHash> = rendered.iter().map(perceptual_hash).collect();
    let kept = dedup_indices(&hashes, cfg.dedup_threshold);
    let survivors: Vec<ContourImage> = kept.iter().map(|&i| rendered[i].clone()).collect();
    let selected = select_views(&survivors, cfg.views);
    Ok(ContourStageOutput {
        dropped_triangles: loaded.dropped_triangles,
        input_sha256: sha256_hex(&bytes),
        rendered,
        kept,
        selected,
    })
}

fn view_label(image: &ContourImage) -> String {
    image.source_viewpoint().map_or_else(|| "contour".to_string(), |v| v.label())
}

fn view_index(image: &ContourImage) -> usize {
    image.source_viewpoint().map_or(0, |v| v.canonical_index())
}

fn view_dir(image: &ContourImage) -> String {
    format!("view_{:02}_{}", view_index(image), view_label(image))
}

fn contour_png(image: &ContourImage) -> Vec<u8> {
    image.to_png_bytes()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContoursReport {
    pub schema: String,
    pub rendered: Vec<ViewRecord>,
    pub kept: Vec<String>,
    pub selected: Vec<String>,
    pub artifacts: Vec<Artifact>,
}

/// Stage one only: writes every rendered view under `views/` and
/// `contours.json` listing all views, the deduplicated set and the
/// selection.
pub fn run_contours(cfg: &PipelineConfig) -> Result<ContoursReport, PipelineError> {
    cfg.validate()?;
    let stage = contour_stage(cfg)?;
    let out = &cfg.output_dir;
    let mut log = ArtifactLog::new(out);
    for image in &stage.rendered {
        log.write(&out.join("views").join(format!("{}.png", view_dir(image))), &contour_png(image), None)?;
    }
    let report = ContoursReport {
        schema: MANIFEST_SCHEMA.to_string(),
        rendered: stage.rendered.iter().map(ViewRecord::describe).collect(),
        kept: stage.kept.iter().map(|&i| view_label(&stage.rendered[i])).collect(),
        selected: stage.selected.iter().map(view_label).collect(),
        artifacts: log.finish(),
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| PipelineError::other("manifest", None, e))?;
    fs::write(out.join(CONTOURS_FILE), text).map_err(|e| PipelineError::io(None, &out.join(CONTOURS_FILE), e))?;
    Ok(report)
}

/// Full pipeline. The manifest is written even when a view fails; the
/// error is then recorded in it and returned.
pub fn run(cfg: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let stage = contour_stage(cfg)?;
    let out = cfg.output_dir.clone();
    let mut log = ArtifactLog::new(&out);
    let mut manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        input_sha256: stage.input_sha256.clone(),
        config: cfg.clone(),
        dropped_triangles: stage.dropped_triangles,
        rendered: stage.rendered.iter().map(ViewRecord::describe).collect(),
        kept: stage.kept.iter().map(|&i| view_label(&stage.rendered[i])).collect(),
        selected: stage.selected.iter().map(view_label).collect(),
        views: Vec::new(),
        metrics: None,
        error: None,
        artifacts: Vec::new(),
    };
    let result = run_views(cfg, &stage, &out, &mut log, &mut manifest);
    if let Err(e) = &result {
        manifest.error = Some(e.to_string());
    }
    manifest.artifacts = log.finish();
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| PipelineError::other("manifest", None, e))?;
    let path = out.join(MANIFEST_FILE);
    fs::create_dir_all(&out).map_err(|e| PipelineError::io(None, &out, e))?;
    fs::write(&path, text).map_err(|e| PipelineError::io(None, &path, e))?;
    result.map(|()| manifest)
}

fn run_views(
    cfg: &PipelineConfig,
    stage: &ContourStageOutput,
    out: &Path,
    log: &mut ArtifactLog,
    manifest: &mut RunManifest,
) -> Result<(), PipelineError> {
    if cfg.intermediates {
        for image in &stage.rendered {
            log.write(&out.join("views").join(format!("{}.png", view_dir(image))), &contour_png(image), None)?;
        }
    }
    let backend = cfg.backend.build();
    let pool = cfg.thread_pool()?;
    let results: Vec<(ArtifactLog, Result<SketchOutcome, PipelineError>)> = pool.install(|| {
        stage
            .selected
            .par_iter()
            .map(|image| {
                let mut view_log = ArtifactLog::new(out);
                let outcome = sketch_view(
                    cfg,
                    backend.as_ref(),
                    image,
                    &view_label(image),
                    view_index(image),
                    &out.join(view_dir(image)),
                    &mut view_log,
                );
                (view_log, outcome)
            })
            .collect()
    });
    let mut rows = Vec::new();
    let mut first_error = None;
    for (view_log, outcome) in results {
        log.merge(view_log);
        match outcome {
            Ok(o) => {
                manifest.views.push(o.summary);
                rows.push(o.metrics);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    if !rows.is_empty() {
        manifest.metrics = Some(write_metrics(&MetricsReport::new(rows), out, log)?);
    }
    first_error.map_or(Ok(()), Err)
}

/// Loads a contour PNG given on the command line.
pub fn load_contour(path: &Path) -> Result<ContourImage, PipelineError> {
    ContourImage::load_png(path).map_err(|e: ImageError| PipelineError::input("load_contour", None, e))
}

/// Writes the seed overlay and initial strokes for a contour into the
/// output directory.
pub fn run_init(cfg: &PipelineConfig, contour: &ContourImage) -> Result<(SeedPlan, Vec<PathBuf>), PipelineError> {
    cfg.validate()?;
    let opt = cfg.optimizer_for(0);
    let (seeds, initial) = seed_sketch(contour, cfg.strokes, &opt).map_err(|e| PipelineError::edge_init(None, e))?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| PipelineError::io(None, out, e))?;
    let overlay = out.join("seeds.png");
    save_seed_overlay(contour, &seeds.seeds, &overlay).map_err(|e| PipelineError::edge_init(None, e))?;
    let init = out.join("init.svg");
    fs::write(&init, to_svg(&initial)).map_err(|e| PipelineError::io(None, &init, e))?;
    Ok((seeds, vec![overlay, init]))
}

/// Stage two on a single contour image; outputs go straight into the
/// output directory alongside a manifest.
pub fn run_sketch(cfg: &PipelineConfig, contour: &ContourImage) -> Result<RunManifest, PipelineError> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    let mut log = ArtifactLog::new(&out);
    let backend = cfg.backend.build();
    let label = view_label(contour);
    let outcome = sketch_view(cfg, backend.as_ref(), contour, &label, view_index(contour), &out, &mut log)?;
    let metrics = write_metrics(&MetricsReport::new(vec![outcome.metrics]), &out, &mut log)?;
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.to_string(),
        input_sha256: sha256_hex(&contour.to_png_bytes()),
        config: cfg.clone(),
        dropped_triangles: 0,
        rendered: Vec::new(),
        kept: Vec::new(),
        selected: vec![label],
        views: vec![outcome.summary],
        metrics: Some(metrics),
        error: None,
        artifacts: log.finish(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| PipelineError::other("manifest", None, e))?;
    let path = out.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| PipelineError::io(None, &path, e))?;
    Ok(manifest)
}

/// Recomputes metrics from a run's saved SVGs and trace-bundle contours.
pub fn evaluate_run(manifest_path: &Path) -> Result<MetricsReport, PipelineError> {
    let manifest = RunManifest::load(manifest_path)?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let params = manifest.config.optimizer.raster;
    let rows = manifest
        .views
        .par_iter()
        .map(|v| {
            let view = Some(v.label.as_str());
            let svg_path = root.join(&v.svg);
            let svg = fs::read_to_string(&svg_path).map_err(|e| PipelineError::input("eval", view, format!("{}: {e}", svg_path.display())))?;
            let sketch = sketch_from_svg(&svg).map_err(|e| PipelineError::input("eval", view, e))?;
            let (contour, _) = read_trace_bundle(&root.join(&v.trace_bundle)).map_err(|e| PipelineError::input("eval", view, e))?;
            Ok(sketch_vs_contour_metrics(&v.label, &sketch, &contour, &params))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    Ok(MetricsReport::new(rows))
}

/// Checks every manifest artifact against the bytes on disk, returning the
/// paths that are missing or differ.
pub fn verify_artifacts(root: &Path, artifacts: &[Artifact]) -> Vec<String> {
    artifacts
        .iter()
        .filter(|a| fs::read(root.join(&a.path)).map_or(true, |b| sha256_hex(&b) != a.sha256))
        .map(|a| a.path.clone())
        .collect()
}
