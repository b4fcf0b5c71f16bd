use std::collections::HashSet;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::eval::{select_candidates, EvalError, EvaluationRequest, EvaluationService, EvaluatorSpec};
use crate::rng::{seeded, HpoRng};
use crate::space::{Bits, Genotype, SearchSpace};
use crate::tree::{pathway, SpaceTree};

use super::{
    enforce_population_uniqueness, make_offspring, roulette_select, selection_weights,
    EliteArchive, EvolveError, Individual, MutationMode, OperatorRates,
};

pub const RUN_FORMAT: &str = "tsm-hpo/run/1";

/// How fast evaluation shortlists candidates for full evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CandidateCriterion {
    /// Lowest fast-budget error.
    #[default]
    BestFast,
    /// Steepest improvement between half the fast budget and the fast
    /// budget. Costs one extra fast evaluation per offspring.
    Slope,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub crossover_prob: f64,
    pub mutation_prob: f64,
    /// Archive capacity as a fraction of the population size.
    pub archive_ratio: f64,
    /// Individuals promoted to full evaluation per generation; `None` means
    /// 20% of the population (at least one).
    pub candidate_count: Option<usize>,
    /// Budget fraction of a fast evaluation.
    pub fast_fraction: f64,
    pub mutation_mode: MutationMode,
    pub seed: u64,
    /// Also count fast evaluations in the tree's leaf counters.
    pub count_fast_evals: bool,
    pub candidate_criterion: CandidateCriterion,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            max_generations: 10,
            crossover_prob: 0.8,
            mutation_prob: 0.2,
            archive_ratio: 0.5,
            candidate_count: None,
            fast_fraction: 0.1,
            mutation_mode: MutationMode::Tsm,
            seed: 42,
            count_fast_evals: false,
            candidate_criterion: CandidateCriterion::BestFast,
        }
    }
}

impl GaConfig {
    pub fn archive_capacity(&self) -> usize {
        ((self.archive_ratio * self.population_size as f64).round() as usize).max(1)
    }

    pub fn effective_candidate_count(&self) -> usize {
        self.candidate_count
            .unwrap_or_else(|| ((0.2 * self.population_size as f64).round() as usize).max(1))
    }

    pub fn operator_rates(&self) -> OperatorRates {
        OperatorRates {
            crossover_prob: self.crossover_prob,
            mutation_prob: self.mutation_prob,
            mode: self.mutation_mode,
        }
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: String| Err(EvolveError::InvalidConfig(m));
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.max_generations == 0 {
            return bad("max_generations must be positive".into());
        }
        for (name, p) in [
            ("crossover_prob", self.crossover_prob),
            ("mutation_prob", self.mutation_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if !(self.archive_ratio > 0.0 && self.archive_ratio <= 1.0) {
            return bad(format!(
                "archive_ratio must lie in (0, 1], got {}",
                self.archive_ratio
            ));
        }
        if !(self.fast_fraction > 0.0 && self.fast_fraction <= 1.0) {
            return bad(format!(
                "fast_fraction must lie in (0, 1], got {}",
                self.fast_fraction
            ));
        }
        let k = self.effective_candidate_count();
        if k == 0 || k > self.population_size {
            return bad(format!(
                "candidate_count must lie in 1..={}, got {k}",
                self.population_size
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialRecord {
    pub full_evals: usize,
    pub duplicates_replaced: usize,
    pub population: Vec<Bits>,
    pub archive: Vec<Individual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Best full fitness found so far (archive head).
    pub best_full_fitness: f64,
    /// Mean full fitness of the archive.
    pub mean_full_fitness: f64,
    pub fast_evals: usize,
    pub full_evals: usize,
    pub duplicates_replaced: usize,
    pub population: Vec<Bits>,
    pub candidates: Vec<Individual>,
    pub archive: Vec<Individual>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub fast_evals: usize,
    pub full_evals: usize,
    pub tsm_mutations: u64,
    pub duplicates_replaced: usize,
}

/// Wall-clock metadata; the only nondeterministic part of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: String,
    pub seed: u64,
    pub space: SearchSpace<f64>,
    pub config: GaConfig,
    pub evaluator: EvaluatorSpec,
    pub initial: InitialRecord,
    pub history: Vec<GenerationRecord>,
    pub best: Individual,
    pub totals: Totals,
    pub tree: SpaceTree,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<RunMeta>,
}

impl RunRecord {
    /// Canonical JSON without wall-clock metadata.
    pub fn payload_json(&self) -> String {
        let mut stripped = self.clone();
        stripped.meta = None;
        serde_json::to_string_pretty(&stripped).expect("record serializes")
    }

    /// Checks the structural invariants of a (possibly reloaded) record.
    pub fn validate(&self) -> Result<(), String> {
        if self.format != RUN_FORMAT {
            return Err(format!("unsupported run format {:?}", self.format));
        }
        self.config.validate().map_err(|e| e.to_string())?;
        if self.history.len() > self.config.max_generations {
            return Err("history is longer than max_generations".into());
        }
        if self.tree.n_h() != self.space.n_h() {
            return Err("tree depth does not match the space".into());
        }
        let check_genotype = |g: &Genotype| -> Result<(), String> {
            let rebuilt = self
                .space
                .genotype_from_indices(g.indices())
                .map_err(|e| e.to_string())?;
            if &rebuilt != g {
                return Err(format!("genotype {} disagrees with its indices", g.bits()));
            }
            Ok(())
        };
        fn distinct<'a>(bits: impl Iterator<Item = &'a Bits>) -> bool {
            let mut seen = HashSet::new();
            bits.into_iter().all(|b| seen.insert(b.clone()))
        }
        let mut prev = f64::INFINITY;
        for gen in &self.history {
            if gen.best_full_fitness > prev {
                return Err(format!(
                    "best fitness increased at generation {}",
                    gen.generation
                ));
            }
            prev = gen.best_full_fitness;
            if !distinct(gen.population.iter()) {
                return Err(format!("duplicate population at generation {}", gen.generation));
            }
            if !distinct(gen.archive.iter().map(|i| i.genotype.bits())) {
                return Err(format!("duplicate archive at generation {}", gen.generation));
            }
            for ind in gen.archive.iter().chain(&gen.candidates) {
                check_genotype(&ind.genotype)?;
                if ind.full_fitness.is_none() {
                    return Err("archive or candidate entry without full fitness".into());
                }
            }
        }
        check_genotype(&self.best.genotype)?;
        if self.best.full_fitness.is_none() {
            return Err("best individual has no full fitness".into());
        }
        Ok(())
    }
}

struct Driver<'a> {
    space: &'a SearchSpace<f64>,
    config: &'a GaConfig,
    service: &'a EvaluationService,
    tree: SpaceTree,
    rng: HpoRng,
    fast_evals: usize,
    full_evals: usize,
}

impl Driver<'_> {
    fn request(&self, tag: &str, generation: usize, i: usize, g: &Genotype, budget: f64) -> EvaluationRequest {
        EvaluationRequest::new(
            format!("g{generation}-{tag}{i}"),
            self.space,
            g,
            budget,
            self.config.seed,
        )
    }

    fn evaluate(
        &mut self,
        generation: usize,
        genotypes: &[&Genotype],
        budget: f64,
        tag: &str,
    ) -> Result<Vec<f64>, EvolveError> {
        let requests: Vec<EvaluationRequest> = genotypes
            .iter()
            .enumerate()
            .map(|(i, g)| self.request(tag, generation, i, g, budget))
            .collect();
        let results = self.service.evaluate_batch(&requests);
        let full = budget >= 1.0;
        let mut out = Vec::with_capacity(results.len());
        for (i, r) in results.into_iter().enumerate() {
            let r = r.map_err(|source: EvalError| EvolveError::Evaluation {
                generation,
                individual: i,
                source,
            })?;
            out.push(r.fitness);
        }
        // counters update in submission order after the batch
        for g in genotypes {
            if full || self.config.count_fast_evals {
                self.tree.record_evaluation(&pathway(self.space, g));
            }
        }
        if full {
            self.full_evals += genotypes.len();
        } else {
            self.fast_evals += genotypes.len();
        }
        Ok(out)
    }

    fn unique(&mut self, genotypes: Vec<Genotype>) -> Result<(Vec<Genotype>, usize), EvolveError> {
        enforce_population_uniqueness(
            genotypes,
            &self.tree,
            self.space,
            self.config.mutation_mode,
            &mut self.rng,
        )
    }
}

/// Runs the full generational loop and returns its record.
///
/// Initialization fully evaluates a duplicate-free random population and
/// seeds the archive with its best members. Each generation then breeds one
/// offspring per population slot from an archive parent and a population
/// parent, repairs duplicates, fast-evaluates every offspring, fully
/// evaluates the shortlisted candidates, and merges them into the archive.
/// Offspring replace the population.
pub fn run_hesga(
    space: &SearchSpace<f64>,
    config: &GaConfig,
    service: &EvaluationService,
) -> Result<RunRecord, EvolveError> {
    config.validate()?;
    let started = SystemTime::now();
    let clock = Instant::now();

    let mut d = Driver {
        space,
        config,
        service,
        tree: SpaceTree::for_space(space),
        rng: seeded(config.seed),
        fast_evals: 0,
        full_evals: 0,
    };
    let pop_size = config.population_size;
    let k = config.effective_candidate_count();
    let rates = config.operator_rates();
    let mut archive = EliteArchive::new(config.archive_capacity());

    // initialization
    let init: Vec<Genotype> = (0..pop_size)
        .map(|_| space.random_genotype(&mut d.rng))
        .collect();
    let (init, init_dups) = d.unique(init)?;
    let refs: Vec<&Genotype> = init.iter().collect();
    let fitness = d.evaluate(0, &refs, 1.0, "init")?;
    let mut population: Vec<Individual> = init
        .into_iter()
        .zip(fitness)
        .map(|(g, f)| {
            let mut ind = Individual::new(g.clone(), space.values(&g), 0);
            ind.full_fitness = Some(f);
            ind
        })
        .collect();
    archive.update(&population)?;
    let initial = InitialRecord {
        full_evals: d.full_evals,
        duplicates_replaced: init_dups,
        population: population.iter().map(|i| i.genotype.bits().clone()).collect(),
        archive: archive.members().to_vec(),
    };

    let mut history = Vec::with_capacity(config.max_generations);
    let mut total_dups = init_dups;
    for generation in 1..=config.max_generations {
        let (fast_before, full_before) = (d.fast_evals, d.full_evals);

        let archive_weights = selection_weights(&archive.full_fitnesses(), true)?;
        let pop_fitness: Vec<f64> = population
            .iter()
            .map(|i| i.selection_fitness().expect("population is evaluated"))
            .collect();
        let pop_weights = selection_weights(&pop_fitness, true)?;

        let mut offspring = Vec::with_capacity(pop_size);
        for _ in 0..pop_size {
            let a = roulette_select(&archive_weights, &mut d.rng)?;
            let b = roulette_select(&pop_weights, &mut d.rng)?;
            offspring.push(make_offspring(
                &archive.members()[a].genotype,
                &population[b].genotype,
                &mut d.tree,
                space,
                &rates,
                &mut d.rng,
            ));
        }
        let (offspring, dups) = d.unique(offspring)?;
        total_dups += dups;

        let refs: Vec<&Genotype> = offspring.iter().collect();
        let fast = d.evaluate(generation, &refs, config.fast_fraction, "fast")?;
        let mut next: Vec<Individual> = offspring
            .iter()
            .zip(&fast)
            .map(|(g, &f)| {
                let mut ind = Individual::new(g.clone(), space.values(g), generation);
                ind.fast_fitness = Some(f);
                ind
            })
            .collect();

        let chosen = match config.candidate_criterion {
            CandidateCriterion::BestFast => select_candidates(&next, k)?,
            CandidateCriterion::Slope => {
                let early_budget = config.fast_fraction / 2.0;
                let early = d.evaluate(generation, &refs, early_budget, "early")?;
                let mut by_slope: Vec<(usize, f64)> = early
                    .iter()
                    .zip(&fast)
                    .map(|(e, f)| (e - f) / (config.fast_fraction - early_budget))
                    .enumerate()
                    .collect();
                // steepest first; stable for ties
                by_slope.sort_by(|a, b| b.1.total_cmp(&a.1));
                by_slope.into_iter().take(k).map(|(i, _)| i).collect()
            }
        };

        let cand_refs: Vec<&Genotype> = chosen.iter().map(|&i| &next[i].genotype).collect();
        let full = d.evaluate(generation, &cand_refs, 1.0, "full")?;
        for (&i, f) in chosen.iter().zip(full) {
            next[i].full_fitness = Some(f);
        }
        let candidates: Vec<Individual> = chosen.iter().map(|&i| next[i].clone()).collect();
        archive.update(&candidates)?;

        let fits = archive.full_fitnesses();
        history.push(GenerationRecord {
            generation,
            best_full_fitness: fits[0],
            mean_full_fitness: fits.iter().sum::<f64>() / fits.len() as f64,
            fast_evals: d.fast_evals - fast_before,
            full_evals: d.full_evals - full_before,
            duplicates_replaced: dups,
            population: next.iter().map(|i| i.genotype.bits().clone()).collect(),
            candidates,
            archive: archive.members().to_vec(),
        });
        population = next;
    }

    let started_unix_ms = started
        .duration_since(UNIX_EPOCH)
        .map(|t| t.as_millis())
        .unwrap_or(0);
    Ok(RunRecord {
        format: RUN_FORMAT.to_string(),
        seed: config.seed,
        space: space.clone(),
        config: config.clone(),
        evaluator: service.describe(),
        initial,
        history,
        best: archive.best().expect("archive is seeded").clone(),
        totals: Totals {
            fast_evals: d.fast_evals,
            full_evals: d.full_evals,
            tsm_mutations: d.tree.total_internal_count(),
            duplicates_replaced: total_dups,
        },
        tree: d.tree,
        meta: Some(RunMeta {
            started_unix_ms,
            elapsed_ms: clock.elapsed().as_millis(),
        }),
    })
}
