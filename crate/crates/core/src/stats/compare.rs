//! Re-evaluation of two runs' best settings and their table-shaped report.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{EvalError, EvaluationRequest, EvaluationService};
use crate::evolve::RunRecord;
use crate::rng::derive_seed;

use super::{summarize, t_test_with, RunSample, StatsError, TestOutcome, TestVariant, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompareError {
    #[error("repeats must be at least 2, got {0}")]
    TooFewRepeats(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid best setting in run `{label}`: {message}")]
    InvalidRecord { label: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setting {
    pub name: String,
    pub value: f64,
}

/// One method's line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    pub hyperparameters: Vec<Setting>,
    pub fitness_mean: f64,
    pub fitness_sd: f64,
    pub fitness: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub objective: String,
    pub repeats: usize,
    pub baseline: ReportRow,
    pub challenger: ReportRow,
    pub test: TestOutcome<f64>,
    pub verdict: Verdict,
    pub verdict_text: String,
}

impl ComparisonReport {
    pub fn build(
        objective: impl Into<String>,
        baseline: (&str, Vec<Setting>, RunSample<f64>),
        challenger: (&str, Vec<Setting>, RunSample<f64>),
        alpha: f64,
        variant: TestVariant,
    ) -> Result<Self, StatsError> {
        let test = t_test_with(&baseline.2, &challenger.2, alpha, variant)?;
        let row = |(label, hyperparameters, sample): (&str, Vec<Setting>, RunSample<f64>)| {
            let s = summarize(&sample);
            ReportRow {
                label: label.to_string(),
                hyperparameters,
                fitness_mean: s.mean,
                fitness_sd: s.sd,
                fitness: sample.values().to_vec(),
            }
        };
        let repeats = baseline.2.len();
        let baseline = row(baseline);
        let challenger = row(challenger);
        let verdict = Verdict::from_outcome(test.t, test.h);
        Ok(Self {
            objective: objective.into(),
            repeats,
            verdict_text: verdict.sentence(&baseline.label, &challenger.label),
            baseline,
            challenger,
            test,
            verdict,
        })
    }

    /// Plain-text table: one block per method with its hyperparameters,
    /// fitness mean and sd, followed by the t-test line.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let label_w = self
            .baseline
            .label
            .len()
            .max(self.challenger.label.len())
            .max("Method".len());
        let hp = |r: &ReportRow| -> Vec<String> {
            r.hyperparameters
                .iter()
                .map(|s| format!("{}={}", s.name, compact(s.value)))
                .collect()
        };
        let (hp_a, hp_b) = (hp(&self.baseline), hp(&self.challenger));
        let hp_w = hp_a
            .iter()
            .chain(&hp_b)
            .map(String::len)
            .max()
            .unwrap_or(0)
            .max("Hyperparameters".len());

        let _ = writeln!(out, "Objective: {} ({} repeats)", self.objective, self.repeats);
        let _ = writeln!(
            out,
            "{:<label_w$} | {:<hp_w$} | {:>12} | {:>12}",
            "Method", "Hyperparameters", "Fitness mean", "Fitness sd"
        );
        let _ = writeln!(out, "{}", "-".repeat(label_w + hp_w + 36));
        for (row, hps) in [(&self.baseline, hp_a), (&self.challenger, hp_b)] {
            for (i, h) in hps.iter().enumerate() {
                let (label, mean, sd) = if i == 0 {
                    (
                        row.label.clone(),
                        format!("{:.4}", row.fitness_mean),
                        format!("{:.4}", row.fitness_sd),
                    )
                } else {
                    (String::new(), String::new(), String::new())
                };
                let _ = writeln!(out, "{label:<label_w$} | {h:<hp_w$} | {mean:>12} | {sd:>12}");
            }
        }
        let _ = writeln!(
            out,
            "t-test ({}, two-tailed, alpha = {}): t={:.4}, h={}  (df = {:.2}, p = {:.4})",
            match self.test.variant {
                TestVariant::Welch => "Welch",
                TestVariant::Pooled => "pooled",
            },
            self.test.alpha,
            self.test.t,
            self.test.h,
            self.test.degrees_of_freedom,
            self.test.p_value
        );
        let _ = writeln!(out, "Verdict: {}", self.verdict_text);
        out
    }
}

/// Evaluation seeds shared by both sides of a comparison.
// Grid values carry float noise from `lower + i * step`; 12 decimals hide it.
fn compact(v: f64) -> String {
    let s = format!("{v:.12}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" || s.is_empty() {
        "0".to_string()
    } else {
        s.to_string()
    }
}

pub fn comparison_seeds(base: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64).map(|r| derive_seed(base, r)).collect()
}

fn best_sample(
    record: &RunRecord,
    label: &str,
    seeds: &[u64],
    service: &EvaluationService,
) -> Result<(Vec<Setting>, RunSample<f64>), CompareError> {
    let g = record
        .space
        .genotype_from_indices(record.best.genotype.indices())
        .map_err(|e| CompareError::InvalidRecord {
            label: label.to_string(),
            message: e.to_string(),
        })?;
    let settings = record
        .space
        .dims()
        .iter()
        .zip(record.space.values(&g))
        .map(|(d, value)| Setting {
            name: d.name().to_string(),
            value,
        })
        .collect();
    let requests: Vec<EvaluationRequest> = seeds
        .iter()
        .enumerate()
        .map(|(r, &seed)| EvaluationRequest::new(format!("{label}-r{r}"), &record.space, &g, 1.0, seed))
        .collect();
    let fitness = service
        .evaluate_batch(&requests)
        .into_iter()
        .map(|r| r.map(|x| x.fitness))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((settings, RunSample::new(label, fitness)?))
}

/// Re-evaluates both runs' best settings `repeats` times at full budget with
/// the same derived seeds and tests the baseline against the challenger.
#[allow(clippy::too_many_arguments)]
pub fn compare_runs(
    baseline: &RunRecord,
    baseline_label: &str,
    challenger: &RunRecord,
    challenger_label: &str,
    repeats: usize,
    service: &EvaluationService,
    alpha: f64,
    seed: u64,
) -> Result<ComparisonReport, CompareError> {
    if repeats < 2 {
        return Err(CompareError::TooFewRepeats(repeats));
    }
    let seeds = comparison_seeds(seed, repeats);
    let (hp_a, sample_a) = best_sample(baseline, baseline_label, &seeds, service)?;
    let (hp_b, sample_b) = best_sample(challenger, challenger_label, &seeds, service)?;
    let objective = match &baseline.evaluator {
        crate::eval::EvaluatorSpec::Synthetic { kind, .. } => kind.name().to_string(),
        crate::eval::EvaluatorSpec::External { command } => command.join(" "),
        crate::eval::EvaluatorSpec::Custom { name } => name.clone(),
    };
    Ok(ComparisonReport::build(
        objective,
        (baseline_label, hp_a, sample_a),
        (challenger_label, hp_b, sample_b),
        alpha,
        TestVariant::Welch,
    )?)
}
