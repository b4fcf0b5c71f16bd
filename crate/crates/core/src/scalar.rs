//! Numeric traits shared by the probability, codec and statistics code.
//!
//! Counter-derived probabilities only need field arithmetic, so they are
//! generic over [`Scalar`] and can be evaluated exactly with
//! [`num_rational::BigRational`]. Grid geometry and hypothesis testing need
//! `sqrt`, `ln`, rounding and friends, so they use [`Real`].

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Field-like scalar: `f32`, `f64`, or an exact rational.
pub trait Scalar: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {
    /// Lossless-where-possible conversion of a counter value.
    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("counter value representable in scalar type")
    }
}

impl<T> Scalar for T where T: Num + Clone + PartialOrd + FromPrimitive + ToPrimitive + Debug {}

/// Floating-point scalar (`f32` or `f64`).
pub trait Real: Scalar + Float + Copy {
    /// Converts an `f64` literal into this type.
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("finite literal")
    }
}

impl<T> Real for T where T: Scalar + Float + Copy {}

/// The reciprocal counter weight `1 / (1 + t)`.
///
/// Zero counters are the initial state of every node, so the plain
/// reciprocal `1 / t` is shifted by one.
pub fn reciprocal_weight<S: Scalar>(count: u64) -> S {
    S::one() / (S::one() + S::from_count(count))
}

/// Normalizes counter weights into a probability vector.
pub fn normalized_reciprocals<S, I>(counts: I) -> Vec<S>
where
    S: Scalar,
    I: IntoIterator<Item = u64>,
{
    let weights: Vec<S> = counts.into_iter().map(reciprocal_weight::<S>).collect();
    let total = weights.iter().cloned().fold(S::zero(), |acc, w| acc + w);
    weights.into_iter().map(|w| w / total.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    #[test]
    fn reciprocal_at_zero_is_one() {
        assert_eq!(reciprocal_weight::<f64>(0), 1.0);
        assert_eq!(reciprocal_weight::<f64>(9), 0.1);
    }

    #[test]
    fn exact_normalization() {
        let p: Vec<BigRational> = normalized_reciprocals([3, 1, 0, 0]);
        let r = |n: i64, d: i64| BigRational::new(n.into(), d.into());
        assert_eq!(p, vec![r(1, 11), r(2, 11), r(4, 11), r(4, 11)]);
    }

    #[test]
    fn f32_works() {
        let p: Vec<f32> = normalized_reciprocals([0, 0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }
}
