//! Variation operators: single-point crossover and mutation on the binary
//! code, offspring assembly, and duplicate repair.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::space::{Bits, Genotype, SearchSpace};
use crate::tree::SpaceTree;

use super::EvolveError;

/// How offspring are mutated, and how duplicates are repaired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MutationMode {
    /// Bit flip at a uniform position; duplicates are re-flipped.
    SinglePoint,
    /// Tree-structured mutation; duplicates are resampled from the tree.
    #[default]
    Tsm,
}

impl std::str::FromStr for MutationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsm" => Ok(MutationMode::Tsm),
            "single_point" => Ok(MutationMode::SinglePoint),
            other => Err(format!("unknown mutation mode `{other}` (tsm|single_point)")),
        }
    }
}

impl std::fmt::Display for MutationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MutationMode::SinglePoint => "single_point",
            MutationMode::Tsm => "tsm",
        })
    }
}

/// Swaps every bit at or after position `cut` (bits strictly right of a
/// 1-based cut point).
pub fn crossover_at(a: &Bits, b: &Bits, cut: usize) -> (Bits, Bits) {
    assert_eq!(a.len(), b.len(), "parents must have equal length");
    let (a, b) = (a.as_slice(), b.as_slice());
    let mut c1 = a[..cut].to_vec();
    c1.extend_from_slice(&b[cut..]);
    let mut c2 = b[..cut].to_vec();
    c2.extend_from_slice(&a[cut..]);
    (Bits::new(c1), Bits::new(c2))
}

/// Single-point crossover with a cut drawn uniformly from `1..L`. Children
/// are repaired onto the grid.
pub fn single_point_crossover<F, R>(
    space: &SearchSpace<F>,
    a: &Genotype,
    b: &Genotype,
    rng: &mut R,
) -> (Genotype, Genotype)
where
    F: Real,
    R: Rng + ?Sized,
{
    let len = a.bits().len();
    if len < 2 {
        return (a.clone(), b.clone());
    }
    let cut = rng.random_range(1..len);
    let (c1, c2) = crossover_at(a.bits(), b.bits(), cut);
    (
        space.repair(&c1).expect("same length as parent"),
        space.repair(&c2).expect("same length as parent"),
    )
}

/// Flips one uniformly chosen bit, without repair.
pub fn flip_random_bit<R: Rng + ?Sized>(bits: &Bits, rng: &mut R) -> Bits {
    let mut out = bits.clone();
    out.flip(rng.random_range(0..bits.len()));
    out
}

/// Flips one uniformly chosen bit and repairs the result onto the grid.
pub fn single_point_mutation<F, R>(space: &SearchSpace<F>, g: &Genotype, rng: &mut R) -> Genotype
where
    F: Real,
    R: Rng + ?Sized,
{
    space
        .repair(&flip_random_bit(g.bits(), rng))
        .expect("same length as input")
}

/// Probabilities driving [`make_offspring`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorRates {
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    pub mode: MutationMode,
}

/// One offspring from an archive parent and a population parent: crossover
/// (keeping the child that starts with parent A's code) with probability
/// `crossover_prob`, then one mutation with probability `mutation_prob`.
/// Each coin flip consumes one draw whether or not it fires.
pub fn make_offspring<F, R>(
    parent_a: &Genotype,
    parent_b: &Genotype,
    tree: &mut SpaceTree,
    space: &SearchSpace<F>,
    rates: &OperatorRates,
    rng: &mut R,
) -> Genotype
where
    F: Real,
    R: Rng + ?Sized,
{
    let mut child = if rng.random::<f64>() < rates.crossover_prob {
        single_point_crossover(space, parent_a, parent_b, rng).0
    } else {
        parent_a.clone()
    };
    if rng.random::<f64>() < rates.mutation_prob {
        child = match rates.mode {
            MutationMode::Tsm => tree.tsm_mutate_individual(space, &child, rng),
            MutationMode::SinglePoint => single_point_mutation(space, &child, rng),
        };
    }
    child
}

/// Retry budget per duplicate before falling back to a deterministic scan.
pub const UNIQUENESS_RETRIES: usize = 1000;

/// Replaces every genotype equal to an earlier one. In `Tsm` mode the
/// replacement is sampled from the tree; in `SinglePoint` mode the
/// duplicate is mutated repeatedly until it is new. Returns the repaired
/// list and the number of replaced entries.
pub fn enforce_population_uniqueness<F, R>(
    population: Vec<Genotype>,
    tree: &SpaceTree,
    space: &SearchSpace<F>,
    mode: MutationMode,
    rng: &mut R,
) -> Result<(Vec<Genotype>, usize), EvolveError>
where
    F: Real,
    R: Rng + ?Sized,
{
    if (population.len() as u128) > space.total_grid() {
        return Err(EvolveError::UniquenessUnreachable {
            population: population.len(),
            grid: space.total_grid(),
        });
    }
    let mut seen: HashSet<Bits> = HashSet::with_capacity(population.len());
    let mut out = Vec::with_capacity(population.len());
    let mut replaced = 0;
    for g in population {
        if seen.insert(g.bits().clone()) {
            out.push(g);
            continue;
        }
        replaced += 1;
        let mut candidate = g.clone();
        let mut found = None;
        for _ in 0..UNIQUENESS_RETRIES {
            candidate = match mode {
                MutationMode::Tsm => tree.tsm_sample_individual(space, rng),
                MutationMode::SinglePoint => single_point_mutation(space, &candidate, rng),
            };
            if !seen.contains(candidate.bits()) {
                found = Some(candidate.clone());
                break;
            }
        }
        let fresh = match found {
            Some(f) => f,
            None => next_unused(space, &g, &seen),
        };
        seen.insert(fresh.bits().clone());
        out.push(fresh);
    }
    Ok((out, replaced))
}

// Walks the grid in mixed-radix order from `start` until an unused point.
fn next_unused<F: Real>(space: &SearchSpace<F>, start: &Genotype, seen: &HashSet<Bits>) -> Genotype {
    let mut indices = start.indices().to_vec();
    loop {
        for d in (0..indices.len()).rev() {
            indices[d] += 1;
            if indices[d] < space.dim(d).grid_count() {
                break;
            }
            indices[d] = 0;
        }
        let g = space
            .genotype_from_indices(&indices)
            .expect("odometer stays on the grid");
        if !seen.contains(g.bits()) {
            return g;
        }
    }
}
