//! Repeated-run scoring and the two-sample t-test.
//!
//! Sign convention: `t = (mean(baseline) - mean(challenger)) / se`. Scores
//! are errors, so with `h = 1` a negative `t` means the baseline (first
//! argument) is significantly better and a positive `t` means the challenger
//! is.

mod compare;
mod special;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

pub use compare::{compare_runs, comparison_seeds, ComparisonReport, CompareError, ReportRow, Setting};
pub use special::{ln_beta, ln_gamma, regularized_incomplete_beta, student_t_two_tailed};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample `{label}` needs at least two values, got {len}")]
    TooSmall { label: String, len: usize },
    #[error("sample `{label}` contains a non-finite value at position {index}")]
    NonFinite { label: String, index: usize },
    #[error("significance level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
}

/// Repeated scores of one setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSample<F> {
    label: String,
    values: Vec<F>,
}

impl<F: Real> RunSample<F> {
    pub fn new(label: impl Into<String>, values: Vec<F>) -> Result<Self, StatsError> {
        let label = label.into();
        if values.len() < 2 {
            return Err(StatsError::TooSmall {
                label,
                len: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite { label, index });
        }
        Ok(Self { label, values })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary<F> {
    pub mean: F,
    /// Sample standard deviation (n - 1 denominator).
    pub sd: F,
}

pub fn summarize<F: Real>(sample: &RunSample<F>) -> Summary<F> {
    let n = F::from_count(sample.len() as u64);
    let mean = sample.values.iter().fold(F::zero(), |a, &v| a + v) / n;
    let ss = sample
        .values
        .iter()
        .fold(F::zero(), |a, &v| a + (v - mean) * (v - mean));
    Summary {
        mean,
        sd: (ss / (n - F::one())).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TestVariant {
    /// Unequal variances, Welch–Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, `n_a + n_b - 2` degrees of freedom.
    Pooled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome<F> {
    pub t: F,
    pub degrees_of_freedom: F,
    pub p_value: F,
    /// 1 when the null hypothesis of equal means is rejected.
    pub h: u8,
    pub alpha: F,
    pub variant: TestVariant,
    /// Both samples have zero variance, so `t` is fixed by convention.
    pub degenerate: bool,
}

/// Welch's two-tailed t-test of `baseline` against `challenger`.
pub fn t_test<F: Real>(
    baseline: &RunSample<F>,
    challenger: &RunSample<F>,
    alpha: F,
) -> Result<TestOutcome<F>, StatsError> {
    t_test_with(baseline, challenger, alpha, TestVariant::Welch)
}

pub fn t_test_with<F: Real>(
    baseline: &RunSample<F>,
    challenger: &RunSample<F>,
    alpha: F,
    variant: TestVariant,
) -> Result<TestOutcome<F>, StatsError> {
    if !(alpha > F::zero() && alpha < F::one()) {
        return Err(StatsError::InvalidAlpha(alpha.to_f64().unwrap_or(f64::NAN)));
    }
    let a = summarize(baseline);
    let b = summarize(challenger);
    let na = F::from_count(baseline.len() as u64);
    let nb = F::from_count(challenger.len() as u64);
    let (va, vb) = (a.sd * a.sd, b.sd * b.sd);
    let one = F::one();

    let (se, df) = match variant {
        TestVariant::Welch => {
            let (qa, qb) = (va / na, vb / nb);
            let se2 = qa + qb;
            let df = se2 * se2 / (qa * qa / (na - one) + qb * qb / (nb - one));
            (se2.sqrt(), df)
        }
        TestVariant::Pooled => {
            let df = na + nb - F::lit(2.0);
            let pooled = ((na - one) * va + (nb - one) * vb) / df;
            ((pooled * (one / na + one / nb)).sqrt(), df)
        }
    };
    let diff = a.mean - b.mean;

    if se == F::zero() {
        // both samples constant
        let df = na + nb - F::lit(2.0);
        if diff == F::zero() {
            return Ok(TestOutcome {
                t: F::zero(),
                degrees_of_freedom: df,
                p_value: one,
                h: 0,
                alpha,
                variant,
                degenerate: true,
            });
        }
        return Ok(TestOutcome {
            t: if diff < F::zero() {
                F::neg_infinity()
            } else {
                F::infinity()
            },
            degrees_of_freedom: df,
            p_value: F::zero(),
            h: 1,
            alpha,
            variant,
            degenerate: true,
        });
    }

    let t = diff / se;
    let p_value = student_t_two_tailed(t, df);
    Ok(TestOutcome {
        t,
        degrees_of_freedom: df,
        p_value,
        h: (p_value < alpha) as u8,
        alpha,
        variant,
        degenerate: false,
    })
}

/// Reading of a test outcome under the baseline-first sign convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    BaselineBetter,
    ChallengerBetter,
    NoSignificantDifference,
}

impl Verdict {
    pub fn from_outcome<F: Real>(t: F, h: u8) -> Self {
        match (h, t < F::zero(), t > F::zero()) {
            (1, true, _) => Verdict::BaselineBetter,
            (1, _, true) => Verdict::ChallengerBetter,
            _ => Verdict::NoSignificantDifference,
        }
    }

    pub fn sentence(&self, baseline: &str, challenger: &str) -> String {
        match self {
            Verdict::BaselineBetter => format!("{baseline} outperforms {challenger}"),
            Verdict::ChallengerBetter => format!("{challenger} outperforms {baseline}"),
            Verdict::NoSignificantDifference => {
                format!("no significant difference between {baseline} and {challenger}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(values: &[f64]) -> RunSample<f64> {
        RunSample::new("s", values.to_vec()).unwrap()
    }

    #[test]
    fn summary_examples() {
        let s = summarize(&sample(&[1.0, 1.0, 1.0]));
        assert_eq!((s.mean, s.sd), (1.0, 0.0));
        let s = summarize(&sample(&[1.0, 2.0, 3.0]));
        assert_eq!((s.mean, s.sd), (2.0, 1.0));
        assert!(matches!(
            RunSample::new("one", vec![1.0]),
            Err(StatsError::TooSmall { len: 1, .. })
        ));
        assert!(matches!(
            RunSample::new("nan", vec![1.0, f64::NAN]),
            Err(StatsError::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn fixture_outcome() {
        let out = t_test(&sample(&[1.0, 2.0, 3.0]), &sample(&[2.0, 3.0, 4.0]), 0.1).unwrap();
        assert!((out.t + 1.224_744_871_391_589).abs() < 1e-12);
        assert!((out.degrees_of_freedom - 4.0).abs() < 1e-12);
        // reference value from an independent statistics package
        assert!((out.p_value - 0.287_864_134_726_690_8).abs() < 1e-12);
        assert_eq!(out.h, 0);
        assert_eq!(Verdict::from_outcome(out.t, out.h), Verdict::NoSignificantDifference);
    }

    #[test]
    fn identical_samples() {
        let a = sample(&[0.8, 0.9, 1.0, 0.85]);
        let out = t_test(&a, &a, 0.1).unwrap();
        assert_eq!(out.t, 0.0);
        assert_eq!(out.h, 0);
        let c = sample(&[2.0, 2.0]);
        let out = t_test(&c, &c, 0.1).unwrap();
        assert!(out.degenerate);
        assert_eq!((out.t, out.h), (0.0, 0));
    }

    #[test]
    fn constant_but_different() {
        let out = t_test(&sample(&[1.0, 1.0]), &sample(&[2.0, 2.0]), 0.1).unwrap();
        assert!(out.degenerate);
        assert_eq!(out.h, 1);
        assert!(out.t < 0.0);
    }

    #[test]
    fn pooled_matches_welch_for_equal_shapes() {
        let a = sample(&[1.0, 2.0, 3.0]);
        let b = sample(&[2.0, 3.0, 4.0]);
        let w = t_test_with(&a, &b, 0.1, TestVariant::Welch).unwrap();
        let p = t_test_with(&a, &b, 0.1, TestVariant::Pooled).unwrap();
        assert!((w.t - p.t).abs() < 1e-12);
        assert!((p.degrees_of_freedom - 4.0).abs() < 1e-12);
    }

    #[test]
    fn verdict_sentences() {
        let v = Verdict::from_outcome(-6.2298, 1);
        assert_eq!(v, Verdict::BaselineBetter);
        assert_eq!(v.sentence("baseline", "challenger"), "baseline outperforms challenger");
        assert_eq!(
            Verdict::from_outcome(1.5963, 1).sentence("HESGA", "HESGA+TSM"),
            "HESGA+TSM outperforms HESGA"
        );
        assert_eq!(Verdict::from_outcome(1.1249, 0), Verdict::NoSignificantDifference);
    }

    #[test]
    fn invalid_alpha() {
        let a = sample(&[1.0, 2.0]);
        assert!(t_test(&a, &a, 0.0).is_err());
        assert!(t_test(&a, &a, 1.0).is_err());
    }

    #[test]
    fn f32_t_test() {
        let a = RunSample::new("a", vec![1.0f32, 2.0, 3.0]).unwrap();
        let b = RunSample::new("b", vec![2.0f32, 3.0, 4.0]).unwrap();
        let out = t_test(&a, &b, 0.1).unwrap();
        assert!((out.t + 1.224_744_9).abs() < 1e-5);
        assert!((out.p_value - 0.287_864_1).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn antisymmetry_and_shift_invariance(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
            shift in -100.0f64..100.0,
        ) {
            let (sa, sb) = (sample(&a), sample(&b));
            let ab = t_test(&sa, &sb, 0.1).unwrap();
            let ba = t_test(&sb, &sa, 0.1).unwrap();
            prop_assert!((ab.t + ba.t).abs() <= 1e-12 * ab.t.abs().max(1.0));
            prop_assert!((ab.p_value - ba.p_value).abs() < 1e-12);
            prop_assert_eq!(ab.h, ba.h);

            let a2: Vec<f64> = a.iter().map(|x| x + shift).collect();
            let b2: Vec<f64> = b.iter().map(|x| x + shift).collect();
            let shifted = t_test(&sample(&a2), &sample(&b2), 0.1).unwrap();
            prop_assert!((shifted.p_value - ab.p_value).abs() < 1e-8);
        }

        #[test]
        fn rejection_is_monotone_in_alpha(
            a in prop::collection::vec(0.0f64..1.0, 3..10),
            b in prop::collection::vec(0.2f64..1.2, 3..10),
            lo in 0.01f64..0.5,
            extra in 0.0f64..0.49,
        ) {
            let (sa, sb) = (sample(&a), sample(&b));
            let at_lo = t_test(&sa, &sb, lo).unwrap();
            let at_hi = t_test(&sa, &sb, lo + extra).unwrap();
            if at_lo.h == 1 {
                prop_assert_eq!(at_hi.h, 1);
            }
        }
    }
}
