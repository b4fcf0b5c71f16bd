//! Budgeted evaluation: the evaluator interface, a caching worker-pool
//! front end, built-in synthetic objectives and the external subprocess
//! protocol.

mod external;
mod synthetic;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evolve::Individual;
use crate::scalar::Real;
use crate::space::{Genotype, SearchSpace};

pub use external::{ExternalEvaluator, PROTOCOL_VERSION};
pub use synthetic::{
    make_benchmark_objective, unflatten, BaseSurface, ObjectiveKind, SyntheticEvaluator,
    SyntheticObjectiveSpec, Well,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("request {id}: evaluator unavailable: {message}")]
    EvaluatorUnavailable { id: String, message: String },
    #[error("request {id}: malformed response: {message}")]
    MalformedResponse { id: String, message: String },
    #[error("request {id}: evaluation failed: {message}")]
    EvaluationFailed { id: String, message: String },
    #[error("request {id}: fitness {fitness} is not finite")]
    NonFiniteFitness { id: String, fitness: f64 },
    #[error("unknown objective kind `{0}`")]
    UnknownObjectiveKind(String),
    #[error("cannot pick {k} candidates from {available} individuals")]
    KTooLarge { k: usize, available: usize },
    #[error("individual {0} has no fast fitness")]
    MissingFastFitness(usize),
}

/// One evaluation of a setting at a budget fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRequest {
    pub id: String,
    /// Grid indices in dimension order.
    pub indices: Vec<u64>,
    /// Decoded values keyed by dimension name.
    pub values: BTreeMap<String, f64>,
    pub budget_fraction: f64,
    pub seed: u64,
}

impl EvaluationRequest {
    pub fn new<F: Real>(
        id: impl Into<String>,
        space: &SearchSpace<F>,
        genotype: &Genotype,
        budget_fraction: f64,
        seed: u64,
    ) -> Self {
        let values = space
            .dims()
            .iter()
            .zip(space.values(genotype))
            .map(|(d, v)| (d.name().to_string(), v.to_f64().expect("finite grid value")))
            .collect();
        Self {
            id: id.into(),
            indices: genotype.indices().to_vec(),
            values,
            budget_fraction,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationResult {
    pub id: String,
    pub fitness: f64,
    pub fidelity: f64,
}

/// Something that turns a setting and a budget into an error score.
pub trait Evaluator: Send + Sync {
    fn evaluate(&self, request: &EvaluationRequest) -> Result<f64, EvalError>;

    /// Recipe recorded in run files so comparisons can rebuild the evaluator.
    fn describe(&self) -> EvaluatorSpec;
}

/// Serializable evaluator selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvaluatorSpec {
    Synthetic {
        kind: ObjectiveKind,
        #[serde(default)]
        seed: u64,
        /// Overrides the kind's default noise level.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_sd: Option<f64>,
    },
    External {
        command: Vec<String>,
    },
    /// Evaluators supplied programmatically; cannot be rebuilt from a file.
    Custom {
        name: String,
    },
}

impl EvaluatorSpec {
    /// Instantiates the evaluator; `workers` bounds the external process pool.
    pub fn build<F: Real>(
        &self,
        space: &SearchSpace<F>,
        workers: usize,
    ) -> Result<Arc<dyn Evaluator>, EvalError> {
        match self {
            EvaluatorSpec::Synthetic {
                kind,
                seed,
                noise_sd,
            } => {
                let mut spec = make_benchmark_objective(space, *kind, *seed);
                if let Some(sd) = noise_sd {
                    spec.noise_sd = *sd;
                }
                Ok(Arc::new(SyntheticEvaluator::new(spec)))
            }
            EvaluatorSpec::External { command } => {
                Ok(Arc::new(ExternalEvaluator::new(command.clone(), workers)?))
            }
            EvaluatorSpec::Custom { name } => Err(EvalError::EvaluatorUnavailable {
                id: String::new(),
                message: format!("custom evaluator `{name}` cannot be rebuilt from its description"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    indices: Vec<u64>,
    fidelity: u64,
    seed: u64,
}

/// Front end used by the GA driver: validates results, memoizes them by
/// `(setting, fidelity, seed)` and fans batches out over a bounded pool.
/// Batch results always come back in submission order.
pub struct EvaluationService {
    evaluator: Arc<dyn Evaluator>,
    cache: Option<RwLock<HashMap<CacheKey, f64>>>,
    pool: rayon::ThreadPool,
    workers: usize,
    calls: AtomicU64,
    requests: AtomicU64,
}

impl EvaluationService {
    pub fn new(evaluator: Arc<dyn Evaluator>, workers: usize, cache: bool) -> Self {
        let workers = workers.max(1);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .expect("thread pool");
        Self {
            evaluator,
            cache: cache.then(|| RwLock::new(HashMap::new())),
            pool,
            workers,
            calls: AtomicU64::new(0),
            requests: AtomicU64::new(0),
        }
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Calls that reached the underlying evaluator.
    pub fn evaluator_calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// Requests served, cached or not.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn describe(&self) -> EvaluatorSpec {
        self.evaluator.describe()
    }

    pub fn evaluate(&self, request: &EvaluationRequest) -> Result<EvaluationResult, EvalError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let key = CacheKey {
            indices: request.indices.clone(),
            fidelity: request.budget_fraction.to_bits(),
            seed: request.seed,
        };
        if let Some(cache) = &self.cache {
            if let Some(&fitness) = cache.read().expect("cache lock").get(&key) {
                return Ok(EvaluationResult {
                    id: request.id.clone(),
                    fitness,
                    fidelity: request.budget_fraction,
                });
            }
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        let fitness = self.evaluator.evaluate(request)?;
        if !fitness.is_finite() {
            return Err(EvalError::NonFiniteFitness {
                id: request.id.clone(),
                fitness,
            });
        }
        if let Some(cache) = &self.cache {
            cache.write().expect("cache lock").insert(key, fitness);
        }
        Ok(EvaluationResult {
            id: request.id.clone(),
            fitness,
            fidelity: request.budget_fraction,
        })
    }

    pub fn evaluate_batch(
        &self,
        requests: &[EvaluationRequest],
    ) -> Vec<Result<EvaluationResult, EvalError>> {
        if self.workers == 1 {
            return requests.iter().map(|r| self.evaluate(r)).collect();
        }
        self.pool
            .install(|| requests.par_iter().map(|r| self.evaluate(r)).collect())
    }
}

/// The `k` individuals with the lowest fast fitness, best first; ties keep
/// list order. Returns positions into `offspring`.
pub fn select_candidates(offspring: &[Individual], k: usize) -> Result<Vec<usize>, EvalError> {
    if k > offspring.len() {
        return Err(EvalError::KTooLarge {
            k,
            available: offspring.len(),
        });
    }
    let mut scored = offspring
        .iter()
        .enumerate()
        .map(|(i, ind)| {
            ind.fast_fitness
                .map(|f| (i, f))
                .ok_or(EvalError::MissingFastFitness(i))
        })
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok(scored.into_iter().take(k).map(|(i, _)| i).collect())
}
