//! Synthetic objectives with simulated learning curves.
//!
//! `fitness(setting, b) = base(setting) + gap(setting) * (1 - b)^gamma + noise`
//!
//! `base` is an error surface over normalized grid coordinates, `gap` is the
//! extra error left when training stops at budget fraction `b`, and `noise`
//! is Gaussian, seeded from the setting, the fidelity and the run seed.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{hash_words, seeded};
use crate::scalar::Real;
use crate::space::SearchSpace;

use super::{EvalError, EvaluationRequest, Evaluator, EvaluatorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Several quadratic wells in different subspaces; the broad ones are
    /// shallower than the narrow global one.
    DeceptiveMultimodal,
    /// Sum of per-dimension squared distances to a hidden target.
    SeparableQuadratic,
    /// Terraced radial staircase with evaluation noise.
    PlateauNoise,
}

impl ObjectiveKind {
    pub const ALL: [ObjectiveKind; 3] = [
        ObjectiveKind::DeceptiveMultimodal,
        ObjectiveKind::SeparableQuadratic,
        ObjectiveKind::PlateauNoise,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ObjectiveKind::DeceptiveMultimodal => "deceptive_multimodal",
            ObjectiveKind::SeparableQuadratic => "separable_quadratic",
            ObjectiveKind::PlateauNoise => "plateau_noise",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| EvalError::UnknownObjectiveKind(s.to_string()))
    }
}

/// One quadratic well: `depth + curvature * |x - center|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Well {
    pub center: Vec<u64>,
    pub depth: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseSurface {
    Wells { floor: f64, wells: Vec<Well> },
    Separable { floor: f64, target: Vec<f64> },
    Terraces {
        floor: f64,
        center: Vec<f64>,
        levels: u32,
        rise: f64,
    },
}

/// Full description of a synthetic objective over one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticObjectiveSpec {
    pub kind: ObjectiveKind,
    pub seed: u64,
    /// Grid count per dimension.
    pub grid: Vec<u64>,
    pub base: BaseSurface,
    /// `gap = curve_base * (1 + sum_d curve_slopes[d] * x_d)`.
    pub curve_base: f64,
    pub curve_slopes: Vec<f64>,
    pub curve_exponent: f64,
    pub noise_sd: f64,
}

impl SyntheticObjectiveSpec {
    fn coords(&self, indices: &[u64]) -> Vec<f64> {
        indices
            .iter()
            .zip(&self.grid)
            .map(|(&i, &n)| i as f64 / (n - 1) as f64)
            .collect()
    }

    fn norm_sq(&self, indices: &[u64], center: &[u64]) -> f64 {
        indices
            .iter()
            .zip(center)
            .zip(&self.grid)
            .map(|((&i, &c), &n)| {
                let d = (i as f64 - c as f64) / (n - 1) as f64;
                d * d
            })
            .sum()
    }

    /// Error at full budget without noise.
    pub fn base(&self, indices: &[u64]) -> f64 {
        match &self.base {
            BaseSurface::Wells { floor, wells } => {
                let best = wells
                    .iter()
                    .map(|w| w.depth + w.curvature * self.norm_sq(indices, &w.center))
                    .fold(f64::INFINITY, f64::min);
                floor + best
            }
            BaseSurface::Separable { floor, target } => {
                let x = self.coords(indices);
                floor
                    + x.iter()
                        .zip(target)
                        .map(|(a, t)| (a - t) * (a - t))
                        .sum::<f64>()
            }
            BaseSurface::Terraces {
                floor,
                center,
                levels,
                rise,
            } => {
                let x = self.coords(indices);
                let dist = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| (a - c) * (a - c))
                    .sum::<f64>()
                    .sqrt()
                    / (x.len() as f64).sqrt();
                let step = (dist * *levels as f64).floor().min(*levels as f64);
                floor + rise * step / *levels as f64
            }
        }
    }

    /// Extra error at budget fraction zero.
    pub fn curve_gap(&self, indices: &[u64]) -> f64 {
        let x = self.coords(indices);
        let tilt: f64 = x.iter().zip(&self.curve_slopes).map(|(a, s)| a * s).sum();
        self.curve_base * (1.0 + tilt)
    }

    pub fn noiseless(&self, indices: &[u64], budget_fraction: f64) -> f64 {
        self.base(indices)
            + self.curve_gap(indices) * (1.0 - budget_fraction).powf(self.curve_exponent)
    }

    pub fn fitness(&self, indices: &[u64], budget_fraction: f64, seed: u64) -> f64 {
        let clean = self.noiseless(indices, budget_fraction);
        if self.noise_sd == 0.0 {
            return clean;
        }
        let key = hash_words(
            indices
                .iter()
                .copied()
                .chain([budget_fraction.to_bits(), seed, self.seed]),
        );
        let normal = Normal::new(0.0, self.noise_sd).expect("noise_sd is finite and >= 0");
        clean + normal.sample(&mut seeded(key))
    }

    /// Best full-budget, noise-free fitness over the grid, and where it is.
    /// Separable objectives are solved per dimension; the others are swept.
    pub fn grid_optimum(&self) -> (Vec<u64>, f64) {
        if let BaseSurface::Separable { target, .. } = &self.base {
            let best: Vec<u64> = target
                .iter()
                .zip(&self.grid)
                .map(|(t, &n)| (t * (n - 1) as f64).round().clamp(0.0, (n - 1) as f64) as u64)
                .collect();
            let value = self.base(&best);
            return (best, value);
        }
        let total: u64 = self.grid.iter().product();
        let (idx, value) = (0..total)
            .into_par_iter()
            .map(|flat| {
                let ix = unflatten(flat, &self.grid);
                (flat, self.base(&ix))
            })
            .reduce(
                || (u64::MAX, f64::INFINITY),
                |a, b| {
                    if b.1 < a.1 || (b.1 == a.1 && b.0 < a.0) {
                        b
                    } else {
                        a
                    }
                },
            );
        (unflatten(idx, &self.grid), value)
    }
}

/// Mixed-radix decomposition, last dimension fastest.
pub fn unflatten(mut flat: u64, grid: &[u64]) -> Vec<u64> {
    let mut out = vec![0; grid.len()];
    for d in (0..grid.len()).rev() {
        out[d] = flat % grid[d];
        flat /= grid[d];
    }
    out
}

/// Builds a reproducible benchmark objective for `space`.
pub fn make_benchmark_objective<F: Real>(
    space: &SearchSpace<F>,
    kind: ObjectiveKind,
    seed: u64,
) -> SyntheticObjectiveSpec {
    let mut rng = seeded(hash_words([seed, kind as u64, 0x000b_1ec7]));
    let grid: Vec<u64> = space.dims().iter().map(|d| d.grid_count()).collect();
    let n_h = grid.len();
    let curve_slopes: Vec<f64> = (0..n_h).map(|_| rng.random_range(0.0..1.0)).collect();

    let (base, noise_sd) = match kind {
        ObjectiveKind::DeceptiveMultimodal => {
            // wells sit in distinct subspaces; the first is the global one
            let mut leaves: Vec<usize> = (0..space.n_s()).collect();
            leaves.shuffle(&mut rng);
            let count = space.n_s().min(5);
            let mut wells = Vec::with_capacity(count);
            for (k, &leaf) in leaves.iter().take(count).enumerate() {
                let path = crate::tree::PathKey::from_leaf(leaf, n_h);
                let center: Vec<u64> = space
                    .subspace_indices(&path)
                    .into_iter()
                    .map(|r| {
                        // keep clear of the threshold so each well owns its subspace
                        let (lo, hi) = (*r.start(), *r.end());
                        let margin = (hi - lo) / 4;
                        rng.random_range(lo + margin..=hi - margin)
                    })
                    .collect();
                wells.push(Well {
                    center,
                    depth: if k == 0 { 0.0 } else { 0.06 + 0.04 * k as f64 },
                    curvature: 1.0,
                });
            }
            (BaseSurface::Wells { floor: 0.5, wells }, 0.0)
        }
        ObjectiveKind::SeparableQuadratic => (
            BaseSurface::Separable {
                floor: 0.5,
                target: (0..n_h).map(|_| rng.random_range(0.0..1.0)).collect(),
            },
            0.0,
        ),
        ObjectiveKind::PlateauNoise => (
            BaseSurface::Terraces {
                floor: 0.5,
                center: (0..n_h).map(|_| rng.random_range(0.2..0.8)).collect(),
                levels: 8,
                rise: 0.8,
            },
            0.05,
        ),
    };

    SyntheticObjectiveSpec {
        kind,
        seed,
        grid,
        base,
        curve_base: 0.3,
        curve_slopes,
        curve_exponent: 2.0,
        noise_sd,
    }
}

/// In-process evaluator backed by a [`SyntheticObjectiveSpec`].
#[derive(Debug, Clone)]
pub struct SyntheticEvaluator {
    spec: SyntheticObjectiveSpec,
}

impl SyntheticEvaluator {
    pub fn new(spec: SyntheticObjectiveSpec) -> Self {
        Self { spec }
    }

    pub fn spec(&self) -> &SyntheticObjectiveSpec {
        &self.spec
    }
}

impl Evaluator for SyntheticEvaluator {
    fn evaluate(&self, request: &EvaluationRequest) -> Result<f64, EvalError> {
        if request.indices.len() != self.spec.grid.len()
            || request.indices.iter().zip(&self.spec.grid).any(|(i, n)| i >= n)
        {
            return Err(EvalError::EvaluationFailed {
                id: request.id.clone(),
                message: "setting does not match the objective's grid".into(),
            });
        }
        Ok(self
            .spec
            .fitness(&request.indices, request.budget_fraction, request.seed))
    }

    fn describe(&self) -> EvaluatorSpec {
        EvaluatorSpec::Synthetic {
            kind: self.spec.kind,
            seed: self.spec.seed,
            noise_sd: Some(self.spec.noise_sd),
        }
    }
}
