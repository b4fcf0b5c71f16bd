use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::space::{Bits, Genotype};

use super::EvolveError;

/// A setting together with whatever fitness has been measured for it.
/// Fitness is an error measure: lower is better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genotype: Genotype,
    pub values: Vec<f64>,
    #[serde(default)]
    pub fast_fitness: Option<f64>,
    #[serde(default)]
    pub full_fitness: Option<f64>,
    pub birth_generation: usize,
}

impl Individual {
    pub fn new(genotype: Genotype, values: Vec<f64>, birth_generation: usize) -> Self {
        Self {
            genotype,
            values,
            fast_fitness: None,
            full_fitness: None,
            birth_generation,
        }
    }

    /// Fitness used for roulette selection: the fast score when the
    /// individual has one, otherwise its full score.
    pub fn selection_fitness(&self) -> Option<f64> {
        self.fast_fitness.or(self.full_fitness)
    }
}

/// Bounded, duplicate-free store of the best fully evaluated individuals,
/// best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EliteArchive {
    capacity: usize,
    members: Vec<Individual>,
}

impl EliteArchive {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "archive capacity must be positive");
        Self {
            capacity,
            members: Vec::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn members(&self) -> &[Individual] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.first()
    }

    pub fn full_fitnesses(&self) -> Vec<f64> {
        self.members
            .iter()
            .map(|m| m.full_fitness.expect("archive members are fully evaluated"))
            .collect()
    }

    /// Merges `candidates`, keeps the best score per genotype, sorts
    /// ascending and truncates to capacity. On equal scores, incumbents and
    /// earlier candidates win.
    pub fn update(&mut self, candidates: &[Individual]) -> Result<(), EvolveError> {
        for (i, c) in candidates.iter().enumerate() {
            match c.full_fitness {
                Some(f) if f.is_finite() => {}
                Some(_) => return Err(EvolveError::NonFiniteFitness(i)),
                None => return Err(EvolveError::MissingFullFitness(i)),
            }
        }
        let mut merged: Vec<Individual> = self
            .members
            .drain(..)
            .chain(candidates.iter().cloned())
            .collect();
        merged.sort_by(|a, b| {
            a.full_fitness
                .unwrap()
                .total_cmp(&b.full_fitness.unwrap())
        });
        let mut seen: HashSet<Bits> = HashSet::new();
        merged.retain(|m| seen.insert(m.genotype.bits().clone()));
        merged.truncate(self.capacity);
        self.members = merged;
        Ok(())
    }
}
