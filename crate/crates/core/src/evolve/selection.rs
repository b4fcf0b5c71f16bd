//! Rank-based roulette-wheel selection.

use rand::Rng;
use thiserror::Error;

use crate::scalar::{Real, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectionError {
    #[error("cannot select from an empty list")]
    Empty,
    #[error("fitness at position {0} is not finite")]
    NonFiniteFitness(usize),
    #[error("weight at position {0} is negative or not a number")]
    InvalidWeight(usize),
    #[error("all roulette weights are zero")]
    DegenerateWeights,
}

/// Linear rank weights: with `n` candidates the best gets `n`, the worst `1`,
/// normalized to sum to one. Tied fitness values share their average rank,
/// so the weights are invariant under any monotone shift of the fitnesses
/// and permute along with the input.
pub fn selection_weights<F: Real>(fitnesses: &[F], minimize: bool) -> Result<Vec<F>, SelectionError> {
    if fitnesses.is_empty() {
        return Err(SelectionError::Empty);
    }
    if let Some(i) = fitnesses.iter().position(|f| !f.is_finite()) {
        return Err(SelectionError::NonFiniteFitness(i));
    }
    let n = fitnesses.len();
    let mut order: Vec<usize> = (0..n).collect();
    // best first
    order.sort_by(|&a, &b| {
        let ord = fitnesses[a].partial_cmp(&fitnesses[b]).expect("finite");
        if minimize {
            ord
        } else {
            ord.reverse()
        }
    });

    let mut scores = vec![F::zero(); n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && fitnesses[order[end]] == fitnesses[order[start]] {
            end += 1;
        }
        // positions start..end hold scores n - start down to n - end + 1
        let hi = F::from_count((n - start) as u64);
        let lo = F::from_count((n - end + 1) as u64);
        let shared = (hi + lo) / F::lit(2.0);
        for &i in &order[start..end] {
            scores[i] = shared;
        }
        start = end;
    }
    let total = F::from_count((n * (n + 1) / 2) as u64);
    Ok(scores.into_iter().map(|s| s / total).collect())
}

/// Roulette-wheel selection consuming exactly one uniform draw. The draw is
/// compared against the cumulative distribution; a draw landing exactly on a
/// boundary resolves to the lower index. Weights need not be normalized.
pub fn roulette_select<S, R>(weights: &[S], rng: &mut R) -> Result<usize, SelectionError>
where
    S: Scalar,
    R: Rng + ?Sized,
{
    if weights.is_empty() {
        return Err(SelectionError::Empty);
    }
    let mut total = S::zero();
    for (i, w) in weights.iter().enumerate() {
        // NaN fails both comparisons
        if !(*w >= S::zero()) {
            return Err(SelectionError::InvalidWeight(i));
        }
        total = total + w.clone();
    }
    if total == S::zero() {
        return Err(SelectionError::DegenerateWeights);
    }

    let u: f64 = rng.random();
    let target = S::from_f64(u).expect("unit draw representable") * total;
    let mut cumulative = S::zero();
    let mut last_positive = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w > S::zero() {
            cumulative = cumulative + w.clone();
            last_positive = i;
            if target <= cumulative {
                return Ok(i);
            }
        }
    }
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use num_rational::BigRational;
    use proptest::prelude::*;

    #[test]
    fn rank_weight_examples() {
        assert_eq!(selection_weights(&[4.2f64], true).unwrap(), vec![1.0]);
        let w = selection_weights(&[1.0f64, 2.0, 3.0], true).unwrap();
        let expected = [3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
        for (a, b) in w.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        let shifted = selection_weights(&[11.0f64, 12.0, 13.0], true).unwrap();
        assert_eq!(w, shifted);
        let max = selection_weights(&[1.0f64, 2.0, 3.0], false).unwrap();
        assert!(max[2] > max[0]);
    }

    #[test]
    fn ties_share_weight() {
        let w = selection_weights(&[1.0f64, 1.0, 3.0], true).unwrap();
        assert_eq!(w[0], w[1]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn non_finite_rejected() {
        assert_eq!(
            selection_weights(&[1.0, f64::NAN], true),
            Err(SelectionError::NonFiniteFitness(1))
        );
        assert_eq!(selection_weights::<f64>(&[], true), Err(SelectionError::Empty));
    }

    #[test]
    fn point_mass() {
        let mut rng = seeded(0);
        for _ in 0..1000 {
            assert_eq!(roulette_select(&[1.0, 0.0, 0.0], &mut rng), Ok(0));
            assert_eq!(roulette_select(&[0.0, 0.0, 1.0], &mut rng), Ok(2));
        }
    }

    #[test]
    fn degenerate_and_invalid() {
        let mut rng = seeded(0);
        assert_eq!(
            roulette_select(&[0.0, 0.0], &mut rng),
            Err(SelectionError::DegenerateWeights)
        );
        assert_eq!(
            roulette_select(&[0.5, -0.5], &mut rng),
            Err(SelectionError::InvalidWeight(1))
        );
        assert_eq!(
            roulette_select(&[f64::NAN], &mut rng),
            Err(SelectionError::InvalidWeight(0))
        );
    }

    fn frequencies(weights: &[f64], seed: u64, n: usize) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut hits = vec![0usize; weights.len()];
        for _ in 0..n {
            hits[roulette_select(weights, &mut rng).unwrap()] += 1;
        }
        hits.into_iter().map(|h| h as f64 / n as f64).collect()
    }

    #[test]
    fn empirical_frequencies() {
        for weights in [vec![0.5, 0.5], vec![0.2, 0.3, 0.5]] {
            let freq = frequencies(&weights, 2024, 100_000);
            for (f, w) in freq.iter().zip(&weights) {
                assert!((f - w).abs() < 0.01, "{f} vs {w}");
            }
        }
    }

    #[test]
    fn exact_weights_select_same_as_float() {
        let exact: Vec<BigRational> = vec![
            BigRational::new(1.into(), 5.into()),
            BigRational::new(3.into(), 10.into()),
            BigRational::new(1.into(), 2.into()),
        ];
        let float = [0.2, 0.3, 0.5];
        let mut a = seeded(9);
        let mut b = seeded(9);
        for _ in 0..1000 {
            let i = roulette_select(&exact, &mut a).unwrap();
            let j = roulette_select(&float, &mut b).unwrap();
            // boundaries may differ by rounding, never by more than one slot
            assert!(i.abs_diff(j) <= 1);
        }
    }

    proptest! {
        #[test]
        fn weights_permute_with_input(
            fit in prop::collection::vec(-1e3f64..1e3, 1..20),
            seed in any::<u64>(),
            shift in -1e3f64..1e3,
        ) {
            let w = selection_weights(&fit, true).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x > 0.0));

            let mut perm: Vec<usize> = (0..fit.len()).collect();
            let mut rng = seeded(seed);
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let permuted: Vec<f64> = perm.iter().map(|&i| fit[i]).collect();
            let wp = selection_weights(&permuted, true).unwrap();
            for (k, &i) in perm.iter().enumerate() {
                prop_assert_eq!(wp[k], w[i]);
            }

            let shifted: Vec<f64> = fit.iter().map(|f| f + shift).collect();
            let ws = selection_weights(&shifted, true).unwrap();
            // shifting can merge near-ties by rounding; compare only when ranks survive
            let same_order = (0..fit.len()).all(|a| (0..fit.len()).all(|b|
                (fit[a] < fit[b]) == (shifted[a] < shifted[b])
                    && (fit[a] == fit[b]) == (shifted[a] == shifted[b])));
            if same_order {
                prop_assert_eq!(ws, w);
            }
        }
    }
}
