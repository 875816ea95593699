//! `freehand`: command-line front end for the mesh-to-sketch pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use freehand_core::evaluation::{complexity_class, MetricsReport};
use freehand_core::pipeline::{
    evaluate_run, load_contour, run, run_contours, run_init, run_sketch, BackendChoice, ErrorKind, PipelineConfig,
    PipelineError, MANIFEST_FILE,
};

#[derive(Parser)]
#[command(name = "freehand", version, about = "Turn mechanical-part meshes into freehand-style SVG sketches")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: contours, view selection, stroke optimization, metrics.
    Run(Overrides),
    /// Render and deduplicate the 26 canonical contour views only.
    Contours(Overrides),
    /// Write the seed overlay and initial strokes for a contour PNG.
    Init {
        #[arg(long)]
        contour: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Optimize a sketch for a single contour PNG.
    Sketch {
        #[arg(long)]
        contour: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute metrics from a finished run's artifacts.
    Eval {
        /// Path to the run's manifest.json.
        #[arg(long)]
        run: PathBuf,
    },
}

/// Config file plus targeted overrides; flags win over the file.
#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file (.stl or .obj).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    strokes: Option<usize>,
    #[arg(long)]
    views: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dedup_threshold: Option<u32>,
    #[arg(long)]
    margin: Option<usize>,
    /// `default` or `external:<path>`.
    #[arg(long)]
    backend: Option<BackendChoice>,
    #[arg(long, env = "FREEHAND_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "FREEHAND_JOBS")]
    jobs: Option<usize>,
    /// Skip per-view contour PNGs, seed overlays and loss histories.
    #[arg(long)]
    no_intermediates: bool,
}

impl Overrides {
    fn resolve(self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.input {
            cfg.input = v;
        }
        if let Some(v) = self.strokes {
            cfg.strokes = v;
        }
        if let Some(v) = self.views {
            cfg.views = v;
        }
        if let Some(v) = self.steps {
            cfg.optimizer.steps = v;
        }
        if let Some(v) = self.learning_rate {
            cfg.optimizer.learning_rate = v;
        }
        if let Some(v) = self.seed {
            cfg.rng_seed = v;
        }
        if let Some(v) = self.dedup_threshold {
            cfg.dedup_threshold = v;
        }
        if let Some(v) = self.margin {
            cfg.margin = v;
        }
        if let Some(v) = self.backend {
            cfg.backend = v;
        }
        if let Some(v) = self.out {
            cfg.output_dir = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if self.no_intermediates {
            cfg.intermediates = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Run(o) => {
            let cfg = o.resolve()?;
            let manifest = run(&cfg)?;
            for v in &manifest.views {
                println!(
                    "{}: {} strokes ({:?}), loss {:.4} -> {:.4} at step {}, {}",
                    v.label, v.strokes, v.complexity, v.initial_loss, v.best_loss, v.best_step, v.svg
                );
            }
            println!("manifest: {}", cfg.output_dir.join(MANIFEST_FILE).display());
        }
        Command::Contours(o) => {
            let cfg = o.resolve()?;
            let report = run_contours(&cfg)?;
            println!(
                "{} views rendered, {} after dedup, selected: {}",
                report.rendered.len(),
                report.kept.len(),
                report.selected.join(", ")
            );
        }
        Command::Init { contour, overrides } => {
            let cfg = overrides.resolve()?;
            let (plan, paths) = run_init(&cfg, &load_contour(&contour)?)?;
            println!("{} seeds, dropped segments {:?}", plan.seeds.len(), plan.dropped_segments);
            for p in paths {
                println!("{}", p.display());
            }
        }
        Command::Sketch { contour, overrides } => {
            let cfg = overrides.resolve()?;
            let manifest = run_sketch(&cfg, &load_contour(&contour)?)?;
            let v = &manifest.views[0];
            println!(
                "{} ({:?}), loss {:.4} -> {:.4}",
                cfg.output_dir.join(&v.svg).display(),
                complexity_class(v.strokes),
                v.initial_loss,
                v.best_loss
            );
        }
        Command::Eval { run } => {
            let report = evaluate_run(&run)?;
            println!("{}", report.to_json());
            if let Some(saved) = saved_report(&run) {
                let verdict = if saved == report { "matches" } else { "differs from" };
                eprintln!("recomputed metrics {verdict} the run's report");
            }
        }
    }
    Ok(())
}

fn saved_report(manifest: &std::path::Path) -> Option<MetricsReport> {
    let m = freehand_core::pipeline::RunManifest::load(manifest).ok()?;
    let root = manifest.parent()?;
    MetricsReport::read_json(&root.join(m.metrics?)).ok()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<PipelineError>().map(|e| e.kind) {
        Some(ErrorKind::Input) => 2,
        Some(ErrorKind::Numeric) => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
