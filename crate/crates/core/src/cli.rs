//! Experiment configuration, the `run` / `compare` / `space` commands and
//! their on-disk outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, EvaluationService, EvaluatorSpec};
use crate::evolve::{run_hesga, EvolveError, GaConfig, MutationMode, RunRecord};
use crate::space::{DimensionSpec, SearchSpace};
use crate::stats::{compare_runs, CompareError, ComparisonReport};

/// Environment variable overriding the evaluation worker-pool size.
pub const WORKERS_ENV: &str = "TSM_HPO_WORKERS";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {reason}")]
    Validation { field: String, reason: String },
}

/// Failure of a command, split by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 1 for usage and configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<EvolveError> for CliError {
    fn from(e: EvolveError) -> Self {
        match e {
            EvolveError::InvalidConfig(_) | EvolveError::UniquenessUnreachable { .. } => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<CompareError> for CliError {
    fn from(e: CompareError) -> Self {
        match e {
            CompareError::TooFewRepeats(_) | CompareError::Stats(_) => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn default_space() -> Vec<DimensionSpec<f64>> {
    SearchSpace::<f64>::gc_default().to_specs()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_repeats() -> usize {
    30
}

fn default_true() -> bool {
    true
}

/// Everything one experiment needs. Only `evaluator` is required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_space")]
    pub space: Vec<DimensionSpec<f64>>,
    #[serde(default)]
    pub ga: GaConfig,
    pub evaluator: EvaluatorSpec,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default = "default_true")]
    pub cache: bool,
}

impl ExperimentConfig {
    pub fn with_evaluator(evaluator: EvaluatorSpec) -> Self {
        Self {
            space: default_space(),
            ga: GaConfig::default(),
            evaluator,
            output_dir: default_output_dir(),
            repeats: default_repeats(),
            workers: None,
            cache: true,
        }
    }

    /// Parses and validates; thresholds and bit widths come back explicit.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let mut config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        config.space = config.search_space()?.to_specs();
        Ok(config)
    }

    pub fn search_space(&self) -> Result<SearchSpace<f64>, ConfigError> {
        let mut dims = Vec::with_capacity(self.space.len());
        for (i, spec) in self.space.iter().enumerate() {
            dims.push(
                crate::space::HyperparameterDef::from_spec(spec).map_err(|e| {
                    ConfigError::Validation {
                        field: format!("space[{i}]"),
                        reason: e.to_string(),
                    }
                })?,
            );
        }
        SearchSpace::new(dims).map_err(|e| ConfigError::Validation {
            field: "space".into(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field: &str, reason: String| ConfigError::Validation {
            field: field.into(),
            reason,
        };
        let space = self.search_space()?;
        self.ga.validate().map_err(|e| invalid("ga", e.to_string()))?;
        if (self.ga.population_size as u128) > space.total_grid() {
            return Err(invalid(
                "ga.population_size",
                format!(
                    "{} exceeds the {} grid points, duplicates cannot be avoided",
                    self.ga.population_size,
                    space.total_grid()
                ),
            ));
        }
        match &self.evaluator {
            EvaluatorSpec::Synthetic {
                noise_sd: Some(sd), ..
            } if !(sd.is_finite() && *sd >= 0.0) => {
                return Err(invalid(
                    "evaluator.synthetic.noise_sd",
                    format!("must be finite and >= 0, got {sd}"),
                ));
            }
            EvaluatorSpec::External { command } if command.is_empty() => {
                return Err(invalid("evaluator.external.command", "must not be empty".into()));
            }
            EvaluatorSpec::Custom { .. } => {
                return Err(invalid(
                    "evaluator",
                    "use `synthetic` or `external` in config files".into(),
                ));
            }
            _ => {}
        }
        if self.repeats < 2 {
            return Err(invalid("repeats", format!("must be at least 2, got {}", self.repeats)));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be positive".into()));
        }
        Ok(())
    }

    /// `TSM_HPO_WORKERS`, then the config, then the machine's parallelism.
    pub fn resolved_workers(&self) -> Result<usize, ConfigError> {
        if let Ok(raw) = std::env::var(WORKERS_ENV) {
            return match raw.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(n),
                _ => Err(ConfigError::Validation {
                    field: WORKERS_ENV.into(),
                    reason: format!("expected a positive integer, got {raw:?}"),
                }),
            };
        }
        Ok(self.workers.unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        }))
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ExperimentConfig::from_json_str(&text)
}

/// Overrides accepted by `run`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub mutation: Option<MutationMode>,
    /// Takes precedence over the environment and the config.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub record_path: PathBuf,
    pub history_path: PathBuf,
}

fn runtime_io(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}

/// Runs one optimization and writes `run-<seed>.json` and
/// `history-<seed>.csv` into the output directory.
pub fn cmd_run(config: &ExperimentConfig, options: &RunOptions) -> Result<RunOutput, CliError> {
    config.validate()?;
    let mut ga = config.ga.clone();
    if let Some(seed) = options.seed {
        ga.seed = seed;
    }
    if let Some(mode) = options.mutation {
        ga.mutation_mode = mode;
    }
    let space = config.search_space()?;
    let workers = match options.workers {
        Some(n) => n.max(1),
        None => config.resolved_workers()?,
    };
    let evaluator = config.evaluator.build(&space, workers)?;
    let service = EvaluationService::new(evaluator, workers, config.cache);
    let record = run_hesga(&space, &ga, &service)?;

    let out_dir = options.out_dir.clone().unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| runtime_io(&out_dir, e))?;
    let record_path = out_dir.join(format!("run-{}.json", ga.seed));
    let history_path = out_dir.join(format!("history-{}.csv", ga.seed));
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    fs::write(&record_path, json + "\n").map_err(|e| runtime_io(&record_path, e))?;
    write_history_csv(&record, &history_path)?;
    Ok(RunOutput {
        record,
        record_path,
        history_path,
    })
}

/// `generation,best_full_fitness,mean_full_fitness,fast_evals,full_evals`
pub fn write_history_csv(record: &RunRecord, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| runtime_io(path, e))?;
    writer
        .write_record([
            "generation",
            "best_full_fitness",
            "mean_full_fitness",
            "fast_evals",
            "full_evals",
        ])
        .map_err(|e| runtime_io(path, e))?;
    for g in &record.history {
        writer
            .write_record([
                g.generation.to_string(),
                g.best_full_fitness.to_string(),
                g.mean_full_fitness.to_string(),
                g.fast_evals.to_string(),
                g.full_evals.to_string(),
            ])
            .map_err(|e| runtime_io(path, e))?;
    }
    writer.flush().map_err(|e| runtime_io(path, e))
}

/// Loads and revalidates a run file.
pub fn load_run(path: &Path) -> Result<RunRecord, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("cannot parse {}: {e}", path.display())))?;
    record
        .validate()
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(record)
}

/// Display name of the method that produced a run.
pub fn method_label(mode: MutationMode) -> &'static str {
    match mode {
        MutationMode::SinglePoint => "HESGA",
        MutationMode::Tsm => "HESGA+TSM",
    }
}

#[derive(Debug, Clone)]
pub struct CompareOptions {
    pub alpha: f64,
    pub repeats: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub labels: Option<(String, String)>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            repeats: 30,
            seed: 0,
            workers: None,
            out: None,
            labels: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub report: ComparisonReport,
    pub report_path: PathBuf,
    pub table_path: PathBuf,
}

/// Compares the best settings of two runs. The first run is the baseline:
/// a negative `t` with `h = 1` means it is significantly better.
pub fn cmd_compare(run_a: &Path, run_b: &Path, options: &CompareOptions) -> Result<CompareOutput, CliError> {
    if !(options.alpha > 0.0 && options.alpha < 1.0) {
        return Err(CliError::Usage(format!(
            "alpha must lie in (0, 1), got {}",
            options.alpha
        )));
    }
    let a = load_run(run_a)?;
    let b = load_run(run_b)?;
    if a.evaluator != b.evaluator {
        return Err(CliError::Usage(
            "runs were produced by different evaluators".into(),
        ));
    }
    let (label_a, label_b) = match &options.labels {
        Some(pair) => pair.clone(),
        None => {
            let (la, lb) = (method_label(a.config.mutation_mode), method_label(b.config.mutation_mode));
            if la == lb {
                (format!("{la} [a]"), format!("{lb} [b]"))
            } else {
                (la.to_string(), lb.to_string())
            }
        }
    };
    let workers = match options.workers {
        Some(n) => n.max(1),
        None => match std::env::var(WORKERS_ENV) {
            Ok(raw) => raw.trim().parse::<usize>().ok().filter(|&n| n > 0).ok_or_else(|| {
                CliError::Usage(format!("{WORKERS_ENV} must be a positive integer"))
            })?,
            Err(_) => std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        },
    };
    let evaluator = a.evaluator.build(&a.space, workers)?;
    let service = EvaluationService::new(evaluator, workers, true);
    let report = compare_runs(
        &a,
        &label_a,
        &b,
        &label_b,
        options.repeats,
        &service,
        options.alpha,
        options.seed,
    )?;

    let report_path = options.out.clone().unwrap_or_else(|| {
        run_a
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(format!("compare-{}-vs-{}.json", a.seed, b.seed))
    });
    let table_path = report_path.with_extension("txt");
    if let Some(dir) = report_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime_io(dir, e))?;
    }
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json + "\n").map_err(|e| runtime_io(&report_path, e))?;
    fs::write(&table_path, report.render_table()).map_err(|e| runtime_io(&table_path, e))?;
    Ok(CompareOutput {
        report,
        report_path,
        table_path,
    })
}

/// Per-dimension grid summary of the configured space.
pub fn cmd_space(config: &ExperimentConfig) -> Result<String, CliError> {
    let space = config.search_space()?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20} {:>12} {:>12} {:>12} {:>12} {:>6} {:>5}",
        "dimension", "lower", "upper", "step", "threshold", "grid", "bits"
    );
    for d in space.dims() {
        let _ = writeln!(
            out,
            "{:<20} {:>12} {:>12} {:>12} {:>12} {:>6} {:>5}",
            d.name(),
            d.lower(),
            d.upper(),
            d.step(),
            d.threshold(),
            d.grid_count(),
            d.bit_width()
        );
    }
    let _ = writeln!(out, "total grid: {}", space.total_grid());
    let _ = writeln!(out, "total bits: {}", space.total_bits());
    let _ = writeln!(out, "n_h: {}", space.n_h());
    let _ = writeln!(out, "n_s: {}", space.n_s());
    Ok(out)
}
