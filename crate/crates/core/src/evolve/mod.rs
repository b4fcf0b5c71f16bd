//! The genetic algorithm with hierarchical evaluation: rank-based roulette
//! selection, binary operators, tree-structured mutation, duplicate
//! prohibition, the elite archive and the generational driver.

mod archive;
mod driver;
mod operators;
mod selection;

use thiserror::Error;

use crate::eval::EvalError;

pub use archive::{EliteArchive, Individual};
pub use driver::{
    run_hesga, CandidateCriterion, GaConfig, GenerationRecord, InitialRecord, RunMeta, RunRecord,
    Totals, RUN_FORMAT,
};
pub use operators::{
    crossover_at, enforce_population_uniqueness, flip_random_bit, make_offspring,
    single_point_crossover, single_point_mutation, MutationMode, OperatorRates,
    UNIQUENESS_RETRIES,
};
pub use selection::{roulette_select, selection_weights, SelectionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error("population of {population} cannot be duplicate-free in a grid of {grid} points")]
    UniquenessUnreachable { population: usize, grid: u128 },
    #[error("candidate {0} has no full fitness")]
    MissingFullFitness(usize),
    #[error("candidate {0} has a non-finite full fitness")]
    NonFiniteFitness(usize),
    #[error("invalid GA configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error("generation {generation}, individual {individual}: {source}")]
    Evaluation {
        generation: usize,
        individual: usize,
        source: EvalError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}
