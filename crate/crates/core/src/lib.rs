//! Genetic-algorithm hyperparameter optimization with hierarchical
//! (fast then full) evaluation and tree-structured mutation.
//!
//! The search space is a box of uniform grids. Each dimension is split at a
//! threshold, so the box partitions into `2^n_h` subspaces, the leaves of a
//! binary tree. The tree counts how often each leaf and each dimension on a
//! path has been visited, and mutation draws leaves and dimensions with
//! probability proportional to `1/(1+count)`.
//!
//! ```
//! use tsm_hpo::{SearchSpaceF64, SpaceTree};
//!
//! let space = SearchSpaceF64::gc_default();
//! assert_eq!(space.n_s(), 16);
//! let tree = SpaceTree::for_space(&space);
//! let p: Vec<f64> = tree.subspace_probabilities();
//! assert!(p.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-12));
//! ```

pub mod cli;
pub mod eval;
pub mod evolve;
pub mod rng;
pub mod scalar;
pub mod space;
pub mod stats;
pub mod tree;

pub use eval::{
    EvalError, EvaluationRequest, EvaluationResult, EvaluationService, Evaluator, EvaluatorSpec,
    ObjectiveKind,
};
pub use evolve::{run_hesga, EvolveError, GaConfig, MutationMode, RunRecord};
pub use scalar::{Real, Scalar};
pub use space::{Bits, DimensionSpec, Genotype, HyperparameterDef, SearchSpace, SpaceError};
pub use stats::{t_test, RunSample, TestOutcome, Verdict};
pub use tree::{pathway, PathKey, SpaceTree};

pub type SearchSpaceF64 = SearchSpace<f64>;
pub type SearchSpaceF32 = SearchSpace<f32>;
pub type HyperparameterDefF64 = HyperparameterDef<f64>;
pub type HyperparameterDefF32 = HyperparameterDef<f32>;
pub type RunSampleF64 = RunSample<f64>;
pub type RunSampleF32 = RunSample<f32>;
pub type TestOutcomeF64 = TestOutcome<f64>;
pub type TestOutcomeF32 = TestOutcome<f32>;
/// Exact probabilities for tree sampling.
pub type Ratio = num_rational::BigRational;
