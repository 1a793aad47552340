//! Experiment runner: configuration loading, validation, ensemble execution
//! and result emission.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value as Json};

use config::{ExperimentConfig, Params, Violation};
use experiments::{Experiment, ExperimentDef, RunSettings};
use output::{OutputSet, RunManifest, Summary};

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("invalid configuration ({} violation(s))", .0.len())]
    Invalid(Vec<Violation>),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 1,
            RunError::Runtime(_) => 2,
        }
    }

    /// Machine-readable form for stderr.
    pub fn report(&self) -> Json {
        match self {
            RunError::Invalid(v) => json!({"status": "invalid-config", "violations": v}),
            RunError::Runtime(m) => json!({"status": "runtime-failure", "message": m}),
        }
    }
}

/// Command-line overrides of the configuration's run settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trajectories: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// A configuration that passed every precondition.
pub struct Prepared {
    pub def: &'static ExperimentDef,
    pub experiment: Box<dyn Experiment>,
    pub settings: RunSettings,
    pub output_dir: PathBuf,
    /// Effective configuration, defaults included.
    pub effective: Json,
}

impl std::fmt::Debug for Prepared {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Prepared").field("experiment", &self.def.name).field("effective", &self.effective).finish()
    }
}

pub fn prepare(text: &str, overrides: &Overrides) -> Result<Prepared, Vec<Violation>> {
    let cfg = ExperimentConfig::parse(text)?;
    let Some(def) = experiments::find(&cfg.experiment) else {
        let names: Vec<&str> = experiments::EXPERIMENTS.iter().map(|e| e.name).collect();
        return Err(vec![Violation::new(
            "unknown-experiment",
            format!("{:?} is not one of {names:?}", cfg.experiment),
        )]);
    };
    let mut params = Params::new(cfg.model.clone());
    let experiment = (def.prepare)(&mut params, cfg.record_stride);
    let model = params.finish();
    let (experiment, model) = match (experiment, model) {
        (Some(e), Ok(m)) => (e, m),
        (_, Err(v)) => return Err(v),
        (None, Ok(_)) => return Err(vec![Violation::new("invalid-config", "experiment rejected its parameters")]),
    };
    let settings = RunSettings {
        n_trajectories: overrides.trajectories.or(cfg.n_trajectories).unwrap_or(def.default_trajectories),
        master_seed: overrides.seed.or(cfg.master_seed).unwrap_or(DEFAULT_SEED),
    };
    let output_dir = overrides
        .out
        .clone()
        .or(cfg.output_dir.clone())
        .unwrap_or_else(|| Path::new("out").join(def.name));
    let effective = json!({
        "experiment": def.name,
        "n_trajectories": settings.n_trajectories,
        "master_seed": settings.master_seed,
        "output_dir": output_dir,
        "record_stride": experiment.record_stride(),
        "model": model,
    });
    Ok(Prepared {
        def,
        experiment,
        settings,
        output_dir,
        effective,
    })
}

pub fn validate_file(path: &Path) -> Result<Prepared, Vec<Violation>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![Violation::new("config-read", format!("{}: {e}", path.display()))])?;
    prepare(&text, &Overrides::default())
}

#[derive(Debug)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub summary: Summary,
    pub manifest: RunManifest,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.summary.passed {
            0
        } else {
            3
        }
    }
}

/// Executes a prepared experiment on a pool of `workers` threads (default:
/// all cores) and writes its four output files.
pub fn execute(prepared: Prepared, workers: Option<usize>) -> Result<RunReport, RunError> {
    let start = Instant::now();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(RunError::Invalid(vec![Violation::new("workers", "--workers must be >= 1")]));
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| RunError::Runtime(e.to_string()))?;
    let outputs = pool
        .install(|| prepared.experiment.execute(&prepared.settings))
        .map_err(|e| RunError::Runtime(e.to_string()))?;

    let io = |e: std::io::Error| RunError::Runtime(format!("{}: {e}", prepared.output_dir.display()));
    let mut set = OutputSet::create(&prepared.output_dir).map_err(io)?;
    let summary = Summary {
        experiment: prepared.def.name.to_string(),
        passed: outputs.invariants.iter().all(|i| i.passed),
        invariants: outputs.invariants,
        measured: outputs.measured,
    };
    let summary_json = serde_json::to_vec_pretty(&summary).map_err(|e| RunError::Runtime(e.to_string()))?;
    let files = vec![
        set.write("moments.csv", &outputs.moments.to_csv()).map_err(io)?,
        set.write("outcomes.csv", &outputs.outcomes.to_csv()).map_err(io)?,
        set.write("summary.json", &summary_json).map_err(io)?,
    ];
    let manifest = RunManifest {
        artifact: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: prepared.effective,
        wall_time_s: start.elapsed().as_secs_f64(),
        trajectories_completed: outputs.completed,
        trajectories_aborted: outputs.aborted,
        files,
    };
    let manifest_json = serde_json::to_vec_pretty(&manifest).map_err(|e| RunError::Runtime(e.to_string()))?;
    set.write("manifest.json", &manifest_json).map_err(io)?;
    set.commit();
    Ok(RunReport {
        output_dir: prepared.output_dir,
        summary,
        manifest,
    })
}

pub fn run_file(path: &Path, overrides: &Overrides) -> Result<RunReport, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Invalid(vec![Violation::new("config-read", format!("{}: {e}", path.display()))]))?;
    let prepared = prepare(&text, overrides).map_err(RunError::Invalid)?;
    execute(prepared, overrides.workers)
}
