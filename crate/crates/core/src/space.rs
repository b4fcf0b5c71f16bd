//! Gridded hyperparameter spaces, the fixed-length binary codec and the
//! threshold geometry used by the space tree.
//!
//! Every dimension is a regular grid `lower, lower + step, ..., upper`. A
//! setting is stored as one grid index per dimension; real values are only
//! materialized when a setting is handed to an evaluator or printed.

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Real;
use crate::tree::PathKey;

/// Upper bound on the number of dimensions; the tree keeps `2^n_h` leaves.
pub const MAX_DIMENSIONS: usize = 20;

/// Errors raised while building spaces or converting between values,
/// indices and bitstrings.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpaceError {
    #[error("dimension `{name}`: {reason}")]
    InvalidDimension { name: String, reason: String },
    #[error("search space must have at least one dimension")]
    Empty,
    #[error("search space has {0} dimensions, at most {MAX_DIMENSIONS} are supported")]
    TooManyDimensions(usize),
    #[error("duplicate dimension name `{0}`")]
    DuplicateName(String),
    #[error("value {value} is not on the grid of `{name}`")]
    ValueOffGrid { name: String, value: f64 },
    #[error("code {index} is outside the {grid_count}-point grid of `{name}`")]
    IndexOutOfGrid {
        name: String,
        index: u64,
        grid_count: u64,
    },
    #[error("expected {expected} bits, got {actual}")]
    BitLength { expected: usize, actual: usize },
    #[error("expected {expected} indices, got {actual}")]
    Arity { expected: usize, actual: usize },
    #[error("invalid bitstring character {0:?}")]
    BadBit(char),
}

/// A fixed-length big-endian bitstring.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Bits(Vec<bool>);

impl Bits {
    pub fn new(bits: Vec<bool>) -> Self {
        Bits(bits)
    }

    pub fn zeros(len: usize) -> Self {
        Bits(vec![false; len])
    }

    /// Big-endian encoding of `value` in exactly `width` bits.
    pub fn from_uint(value: u64, width: u32) -> Self {
        Bits((0..width).rev().map(|i| (value >> i) & 1 == 1).collect())
    }

    /// Big-endian integer value. Widths above 64 bits are not supported.
    pub fn to_uint(&self) -> u64 {
        self.0.iter().fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    pub fn flip(&mut self, pos: usize) {
        self.0[pos] = !self.0[pos];
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Bits {
        Bits(self.0[range].to_vec())
    }

    pub fn hamming(&self, other: &Bits) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Bits {
    type Err = SpaceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(SpaceError::BadBit(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Bits)
    }
}

impl Serialize for Bits {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Bits {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Smallest width able to address `grid_count` codes.
pub fn min_bit_width(grid_count: u64) -> u32 {
    if grid_count <= 1 {
        1
    } else {
        64 - (grid_count - 1).leading_zeros()
    }
}

/// On-disk form of a dimension. Threshold and bit width are optional and
/// default to the lower grid median and the minimal width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "F: Deserialize<'de>"))]
pub struct DimensionSpec<F> {
    pub name: String,
    pub lower: F,
    pub upper: F,
    pub step: F,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_width: Option<u32>,
}

/// One gridded hyperparameter with its tree threshold and codec width.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperparameterDef<F> {
    name: String,
    lower: F,
    upper: F,
    step: F,
    threshold: F,
    bit_width: u32,
    grid_count: u64,
    threshold_index: u64,
}

fn grid_tolerance<F: Real>(step: F, points: F) -> F {
    let relative = F::lit(1e-9).max(F::epsilon() * F::lit(16.0) * points.max(F::one()));
    step * relative
}

impl<F: Real> HyperparameterDef<F> {
    /// Validates and builds a dimension. `threshold = None` picks the lower
    /// median grid point (at least one step above `lower`); `bit_width =
    /// None` picks the minimal width.
    pub fn new(
        name: impl Into<String>,
        lower: F,
        upper: F,
        step: F,
        threshold: Option<F>,
        bit_width: Option<u32>,
    ) -> Result<Self, SpaceError> {
        let name = name.into();
        let invalid = |reason: String| SpaceError::InvalidDimension {
            name: name.clone(),
            reason,
        };
        if !(lower.is_finite() && upper.is_finite() && step.is_finite()) {
            return Err(invalid("bounds and step must be finite".into()));
        }
        if !(upper > lower) {
            return Err(invalid("upper must exceed lower".into()));
        }
        if !(step > F::zero()) {
            return Err(invalid("step must be positive".into()));
        }
        let span = (upper - lower) / step;
        let intervals = span.round();
        if ((span - intervals) * step).abs() > grid_tolerance(step, intervals) {
            return Err(invalid(
                "range is not an integer multiple of step".into(),
            ));
        }
        let grid_count = intervals
            .to_u64()
            .ok_or_else(|| invalid("grid too large".into()))?
            + 1;
        if grid_count < 2 {
            return Err(invalid("grid needs at least two points".into()));
        }

        let threshold_index = match threshold {
            None => ((grid_count - 1) / 2).max(1),
            Some(t) => {
                let idx_f = (t - lower) / step;
                let idx = idx_f.round();
                if !t.is_finite()
                    || ((idx_f - idx) * step).abs() > grid_tolerance(step, intervals)
                {
                    return Err(invalid(format!(
                        "threshold {} is not on the grid",
                        t.to_f64().unwrap_or(f64::NAN)
                    )));
                }
                if idx < F::one() || idx > intervals {
                    return Err(invalid(
                        "threshold must satisfy lower < threshold <= upper".into(),
                    ));
                }
                idx.to_u64().expect("checked range")
            }
        };

        let minimal = min_bit_width(grid_count);
        let bit_width = bit_width.unwrap_or(minimal);
        if bit_width < minimal || bit_width > 63 {
            return Err(invalid(format!(
                "bit_width {bit_width} cannot address {grid_count} grid points (need {minimal}..=63)"
            )));
        }

        let threshold = lower + step * F::from_count(threshold_index);
        Ok(Self {
            name,
            lower,
            upper,
            step,
            threshold,
            bit_width,
            grid_count,
            threshold_index,
        })
    }

    pub fn from_spec(spec: &DimensionSpec<F>) -> Result<Self, SpaceError> {
        Self::new(
            spec.name.clone(),
            spec.lower,
            spec.upper,
            spec.step,
            spec.threshold,
            spec.bit_width,
        )
    }

    /// Fully explicit spec (threshold and width filled in).
    pub fn to_spec(&self) -> DimensionSpec<F> {
        DimensionSpec {
            name: self.name.clone(),
            lower: self.lower,
            upper: self.upper,
            step: self.step,
            threshold: Some(self.threshold),
            bit_width: Some(self.bit_width),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lower(&self) -> F {
        self.lower
    }

    pub fn upper(&self) -> F {
        self.upper
    }

    pub fn step(&self) -> F {
        self.step
    }

    pub fn threshold(&self) -> F {
        self.threshold
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    /// Number of legal values, `(upper - lower) / step + 1`.
    pub fn grid_count(&self) -> u64 {
        self.grid_count
    }

    /// Grid index of the threshold; indices below it belong to the left child.
    pub fn threshold_index(&self) -> u64 {
        self.threshold_index
    }

    pub fn value_at(&self, index: u64) -> F {
        self.lower + self.step * F::from_count(index)
    }

    /// Grid index of an on-grid value.
    pub fn index_of(&self, value: F) -> Result<u64, SpaceError> {
        let idx_f = (value - self.lower) / self.step;
        let idx = idx_f.round();
        let intervals = F::from_count(self.grid_count - 1);
        let on_grid = value.is_finite()
            && ((idx_f - idx) * self.step).abs() <= grid_tolerance(self.step, intervals)
            && idx >= F::zero()
            && idx <= intervals;
        if !on_grid {
            return Err(SpaceError::ValueOffGrid {
                name: self.name.clone(),
                value: value.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(idx.to_u64().expect("checked range"))
    }

    pub fn encode(&self, value: F) -> Result<Bits, SpaceError> {
        self.index_of(value)
            .map(|idx| Bits::from_uint(idx, self.bit_width))
    }

    pub fn decode_index(&self, bits: &Bits) -> Result<u64, SpaceError> {
        if bits.len() != self.bit_width as usize {
            return Err(SpaceError::BitLength {
                expected: self.bit_width as usize,
                actual: bits.len(),
            });
        }
        let index = bits.to_uint();
        if index >= self.grid_count {
            return Err(SpaceError::IndexOutOfGrid {
                name: self.name.clone(),
                index,
                grid_count: self.grid_count,
            });
        }
        Ok(index)
    }

    pub fn decode(&self, bits: &Bits) -> Result<F, SpaceError> {
        self.decode_index(bits).map(|idx| self.value_at(idx))
    }

    /// Index range of one side of the threshold split.
    pub fn side_indices(&self, upper_side: bool) -> RangeInclusive<u64> {
        if upper_side {
            self.threshold_index..=self.grid_count - 1
        } else {
            0..=self.threshold_index - 1
        }
    }
}

impl<F: Real + Serialize> Serialize for HyperparameterDef<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_spec().serialize(serializer)
    }
}

impl<'de, F: Real + Deserialize<'de>> Deserialize<'de> for HyperparameterDef<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let spec = DimensionSpec::<F>::deserialize(deserializer)?;
        Self::from_spec(&spec).map_err(serde::de::Error::custom)
    }
}

/// One hyperparameter setting: grid indices and their concatenated code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genotype {
    indices: Vec<u64>,
    bits: Bits,
}

impl Genotype {
    pub fn indices(&self) -> &[u64] {
        &self.indices
    }

    pub fn bits(&self) -> &Bits {
        &self.bits
    }
}

/// Ordered list of dimensions. The order fixes both the genotype layout and
/// the depth order of the space tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace<F> {
    dims: Vec<HyperparameterDef<F>>,
    offsets: Vec<usize>,
    total_bits: usize,
}

impl<F: Real> SearchSpace<F> {
    pub fn new(dims: Vec<HyperparameterDef<F>>) -> Result<Self, SpaceError> {
        if dims.is_empty() {
            return Err(SpaceError::Empty);
        }
        if dims.len() > MAX_DIMENSIONS {
            return Err(SpaceError::TooManyDimensions(dims.len()));
        }
        for (i, d) in dims.iter().enumerate() {
            if dims[..i].iter().any(|e| e.name == d.name) {
                return Err(SpaceError::DuplicateName(d.name.clone()));
            }
        }
        let mut offsets = Vec::with_capacity(dims.len());
        let mut total_bits = 0;
        for d in &dims {
            offsets.push(total_bits);
            total_bits += d.bit_width as usize;
        }
        Ok(Self {
            dims,
            offsets,
            total_bits,
        })
    }

    pub fn from_specs(specs: &[DimensionSpec<F>]) -> Result<Self, SpaceError> {
        Self::new(
            specs
                .iter()
                .map(HyperparameterDef::from_spec)
                .collect::<Result<_, _>>()?,
        )
    }

    /// Batch size, learning rate, graph-convolution width and dense width
    /// over the GC-style grid, split at 256, 0.0016, 256 and 512.
    pub fn gc_default() -> Self {
        let dim = |name: &str, lower: f64, upper: f64, step: f64, threshold: f64| {
            HyperparameterDef::new(
                name,
                F::lit(lower),
                F::lit(upper),
                F::lit(step),
                Some(F::lit(threshold)),
                None,
            )
            .expect("default dimension is valid")
        };
        Self::new(vec![
            dim("batch_size", 8.0, 512.0, 8.0, 256.0),
            dim("learning_rate", 0.0001, 0.0032, 0.0001, 0.0016),
            dim("graph_conv_size", 8.0, 512.0, 8.0, 256.0),
            dim("dense_size", 32.0, 1024.0, 32.0, 512.0),
        ])
        .expect("default space is valid")
    }

    pub fn dims(&self) -> &[HyperparameterDef<F>] {
        &self.dims
    }

    pub fn dim(&self, d: usize) -> &HyperparameterDef<F> {
        &self.dims[d]
    }

    /// Number of hyperparameters (`n_h`).
    pub fn n_h(&self) -> usize {
        self.dims.len()
    }

    /// Number of subspaces (`n_s = 2^n_h`).
    pub fn n_s(&self) -> usize {
        1 << self.dims.len()
    }

    pub fn total_bits(&self) -> usize {
        self.total_bits
    }

    /// Product of all grid counts.
    pub fn total_grid(&self) -> u128 {
        self.dims.iter().map(|d| d.grid_count as u128).product()
    }

    /// Bit range occupied by dimension `d`.
    pub fn fragment(&self, d: usize) -> std::ops::Range<usize> {
        let start = self.offsets[d];
        start..start + self.dims[d].bit_width as usize
    }

    pub fn to_specs(&self) -> Vec<DimensionSpec<F>> {
        self.dims.iter().map(HyperparameterDef::to_spec).collect()
    }

    pub fn genotype_from_indices(&self, indices: &[u64]) -> Result<Genotype, SpaceError> {
        if indices.len() != self.dims.len() {
            return Err(SpaceError::Arity {
                expected: self.dims.len(),
                actual: indices.len(),
            });
        }
        let mut bits = Vec::with_capacity(self.total_bits);
        for (d, &idx) in self.dims.iter().zip(indices) {
            if idx >= d.grid_count {
                return Err(SpaceError::IndexOutOfGrid {
                    name: d.name.clone(),
                    index: idx,
                    grid_count: d.grid_count,
                });
            }
            bits.extend_from_slice(Bits::from_uint(idx, d.bit_width).as_slice());
        }
        Ok(Genotype {
            indices: indices.to_vec(),
            bits: Bits(bits),
        })
    }

    pub fn genotype_from_values(&self, values: &[F]) -> Result<Genotype, SpaceError> {
        if values.len() != self.dims.len() {
            return Err(SpaceError::Arity {
                expected: self.dims.len(),
                actual: values.len(),
            });
        }
        let indices = self
            .dims
            .iter()
            .zip(values)
            .map(|(d, &v)| d.index_of(v))
            .collect::<Result<Vec<_>, _>>()?;
        self.genotype_from_indices(&indices)
    }

    /// Strict decode: every fragment must address a grid point.
    pub fn genotype_from_bits(&self, bits: &Bits) -> Result<Genotype, SpaceError> {
        self.check_len(bits)?;
        let indices = (0..self.dims.len())
            .map(|d| self.dims[d].decode_index(&bits.slice(self.fragment(d))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Genotype {
            indices,
            bits: bits.clone(),
        })
    }

    /// Lenient decode: out-of-grid fragments are clamped to the last grid
    /// point and the code is rewritten to match.
    pub fn repair(&self, bits: &Bits) -> Result<Genotype, SpaceError> {
        self.check_len(bits)?;
        let indices: Vec<u64> = (0..self.dims.len())
            .map(|d| {
                let raw = bits.slice(self.fragment(d)).to_uint();
                raw.min(self.dims[d].grid_count - 1)
            })
            .collect();
        self.genotype_from_indices(&indices)
    }

    fn check_len(&self, bits: &Bits) -> Result<(), SpaceError> {
        if bits.len() != self.total_bits {
            return Err(SpaceError::BitLength {
                expected: self.total_bits,
                actual: bits.len(),
            });
        }
        Ok(())
    }

    pub fn values(&self, g: &Genotype) -> Vec<F> {
        self.dims
            .iter()
            .zip(&g.indices)
            .map(|(d, &i)| d.value_at(i))
            .collect()
    }

    /// Uniform draw over the full grid.
    pub fn random_genotype<R: Rng + ?Sized>(&self, rng: &mut R) -> Genotype {
        let indices: Vec<u64> = self
            .dims
            .iter()
            .map(|d| rng.random_range(0..d.grid_count))
            .collect();
        self.genotype_from_indices(&indices)
            .expect("sampled indices are on the grid")
    }

    /// Per-dimension index ranges of the subspace selected by `path`.
    pub fn subspace_indices(&self, path: &PathKey) -> Vec<RangeInclusive<u64>> {
        assert_eq!(path.len(), self.n_h(), "path length must equal n_h");
        self.dims
            .iter()
            .zip(path.bits())
            .map(|(d, &upper)| d.side_indices(upper))
            .collect()
    }

    /// Per-dimension `(low, high)` value ranges of the subspace selected by
    /// `path`: `[lower, threshold - step]` for a 0 bit, `[threshold, upper]`
    /// for a 1 bit.
    pub fn subspace_ranges(&self, path: &PathKey) -> Vec<(F, F)> {
        self.subspace_indices(path)
            .into_iter()
            .zip(&self.dims)
            .map(|(r, d)| (d.value_at(*r.start()), d.value_at(*r.end())))
            .collect()
    }
}

impl<F: Real + Serialize> Serialize for SearchSpace<F> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.dims.serialize(serializer)
    }
}

impl<'de, F: Real + Deserialize<'de>> Deserialize<'de> for SearchSpace<F> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let dims = Vec::<HyperparameterDef<F>>::deserialize(deserializer)?;
        Self::new(dims).map_err(serde::de::Error::custom)
    }
}
