//! Binary partition tree over the search space.
//!
//! Depth `d` of the tree splits dimension `d` at its threshold, so every
//! root-to-leaf pathway is one of `2^n_h` subspaces. Internal nodes count the
//! mutations applied to their dimension inside their prefix region; leaves
//! count full evaluations of settings inside their subspace. Both counters
//! feed the reciprocal weighting that steers tree-structured mutation towards
//! rarely explored dimensions and subspaces.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::evolve::roulette_select;
use crate::scalar::{normalized_reciprocals, Real, Scalar};
use crate::space::{Bits, Genotype, SearchSpace};

/// Root-to-leaf pathway: one threshold decision per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PathKey(Vec<bool>);

impl PathKey {
    pub fn new(bits: Vec<bool>) -> Self {
        PathKey(bits)
    }

    /// Path of leaf `index` (big-endian) in a tree of depth `n_h`.
    pub fn from_leaf(index: usize, n_h: usize) -> Self {
        PathKey((0..n_h).rev().map(|i| (index >> i) & 1 == 1).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Leaf index: the big-endian integer value of the path.
    pub fn leaf_index(&self) -> usize {
        self.prefix(self.0.len()) as usize
    }

    /// Integer value of the first `depth` bits.
    pub fn prefix(&self, depth: usize) -> u64 {
        self.0[..depth]
            .iter()
            .fold(0u64, |acc, &b| (acc << 1) | b as u64)
    }
}

impl std::fmt::Display for PathKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        Bits::new(self.0.clone()).fmt(f)
    }
}

/// Locates the subspace of `g`: bit `d` is 0 iff the value of dimension `d`
/// lies strictly below its threshold.
pub fn pathway<F: Real>(space: &SearchSpace<F>, g: &Genotype) -> PathKey {
    PathKey(
        space
            .dims()
            .iter()
            .zip(g.indices())
            .map(|(d, &idx)| idx >= d.threshold_index())
            .collect(),
    )
}

/// Counter state of the partition tree. Internal counters are stored lazily;
/// absent entries read as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceTree {
    n_h: usize,
    leaf_counts: Vec<u64>,
    // (depth in 1..=n_h, prefix of that length) -> mutation count
    internal_counts: BTreeMap<(usize, u64), u64>,
}

impl SpaceTree {
    pub fn new(n_h: usize) -> Self {
        assert!(
            (1..=crate::space::MAX_DIMENSIONS).contains(&n_h),
            "tree depth {n_h} out of range"
        );
        Self {
            n_h,
            leaf_counts: vec![0; 1 << n_h],
            internal_counts: BTreeMap::new(),
        }
    }

    pub fn for_space<F: Real>(space: &SearchSpace<F>) -> Self {
        Self::new(space.n_h())
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn n_s(&self) -> usize {
        self.leaf_counts.len()
    }

    pub fn leaf_counts(&self) -> &[u64] {
        &self.leaf_counts
    }

    pub fn leaf_count(&self, path: &PathKey) -> u64 {
        self.leaf_counts[path.leaf_index()]
    }

    /// Mutation count of the depth-`depth` node on `path` (1-based depth).
    pub fn internal_count(&self, depth: usize, path: &PathKey) -> u64 {
        self.internal_counts
            .get(&(depth, path.prefix(depth)))
            .copied()
            .unwrap_or(0)
    }

    /// Counters of the internal nodes along `path`, root first.
    pub fn path_counts(&self, path: &PathKey) -> Vec<u64> {
        (1..=self.n_h).map(|d| self.internal_count(d, path)).collect()
    }

    pub fn total_leaf_count(&self) -> u64 {
        self.leaf_counts.iter().sum()
    }

    pub fn total_internal_count(&self) -> u64 {
        self.internal_counts.values().sum()
    }

    /// Probability of mutating each dimension of an individual on `path`,
    /// proportional to `1 / (1 + t)` of the node counters along the path.
    pub fn dimension_probabilities<S: Scalar>(&self, path: &PathKey) -> Vec<S> {
        self.check_path(path);
        normalized_reciprocals(self.path_counts(path))
    }

    /// Probability of sampling each subspace, proportional to `1 / (1 + t)`
    /// of the leaf visit counters.
    pub fn subspace_probabilities<S: Scalar>(&self) -> Vec<S> {
        normalized_reciprocals(self.leaf_counts.iter().copied())
    }

    /// Counts one full evaluation of a setting in `path`'s subspace.
    pub fn record_evaluation(&mut self, path: &PathKey) {
        self.check_path(path);
        self.leaf_counts[path.leaf_index()] += 1;
    }

    /// Counts one mutation of dimension `dim` (1-based, equal to the node
    /// depth) for an individual on `path`.
    pub fn record_mutation(&mut self, path: &PathKey, dim: usize) {
        self.check_path(path);
        assert!((1..=self.n_h).contains(&dim), "dimension {dim} out of range");
        *self
            .internal_counts
            .entry((dim, path.prefix(dim)))
            .or_insert(0) += 1;
    }

    fn check_path(&self, path: &PathKey) {
        assert_eq!(path.len(), self.n_h, "path length must equal tree depth");
    }

    /// Tree-structured mutation of a given individual.
    ///
    /// Picks one dimension by roulette over the node counters of the
    /// individual's pathway, redraws that dimension uniformly from the node's
    /// side of the threshold and records the mutation. The result stays in
    /// the input's subspace.
    pub fn tsm_mutate_individual<F, R>(
        &mut self,
        space: &SearchSpace<F>,
        g: &Genotype,
        rng: &mut R,
    ) -> Genotype
    where
        F: Real,
        R: Rng + ?Sized,
    {
        let (mutated, _) = self.tsm_mutate_with_dimension(space, g, rng);
        mutated
    }

    /// As [`Self::tsm_mutate_individual`], also returning the 0-based
    /// dimension that was selected.
    pub fn tsm_mutate_with_dimension<F, R>(
        &mut self,
        space: &SearchSpace<F>,
        g: &Genotype,
        rng: &mut R,
    ) -> (Genotype, usize)
    where
        F: Real,
        R: Rng + ?Sized,
    {
        let path = pathway(space, g);
        let probs = self.dimension_probabilities::<f64>(&path);
        let dim = roulette_select(&probs, rng).expect("reciprocal weights are positive");

        let range = space.dim(dim).side_indices(path.bits()[dim]);
        let mut indices = g.indices().to_vec();
        indices[dim] = rng.random_range(range);
        let mutated = space
            .genotype_from_indices(&indices)
            .expect("sub-range index is on the grid");

        self.record_mutation(&pathway(space, &mutated), dim + 1);
        (mutated, dim)
    }

    /// Tree-structured sampling without a given individual: roulette over
    /// leaf counters, then a uniform draw inside the chosen subspace.
    pub fn tsm_sample_individual<F, R>(&self, space: &SearchSpace<F>, rng: &mut R) -> Genotype
    where
        F: Real,
        R: Rng + ?Sized,
    {
        self.tsm_sample_with_leaf(space, rng).1
    }

    /// As [`Self::tsm_sample_individual`], also returning the selected leaf.
    pub fn tsm_sample_with_leaf<F, R>(&self, space: &SearchSpace<F>, rng: &mut R) -> (usize, Genotype)
    where
        F: Real,
        R: Rng + ?Sized,
    {
        assert_eq!(space.n_h(), self.n_h, "space and tree depth differ");
        let probs = self.subspace_probabilities::<f64>();
        let leaf = roulette_select(&probs, rng).expect("reciprocal weights are positive");
        let path = PathKey::from_leaf(leaf, self.n_h);
        let indices: Vec<u64> = space
            .subspace_indices(&path)
            .into_iter()
            .map(|r| rng.random_range(r))
            .collect();
        let g = space
            .genotype_from_indices(&indices)
            .expect("subspace index is on the grid");
        (leaf, g)
    }

    pub fn snapshot(&self) -> TreeSnapshot {
        TreeSnapshot {
            n_h: self.n_h,
            leaf_counts: self.leaf_counts.clone(),
            internal_counts: self
                .internal_counts
                .iter()
                .map(|(&(depth, prefix), &count)| InternalCount {
                    depth,
                    prefix: Bits::from_uint(prefix, depth as u32).to_string(),
                    count,
                })
                .collect(),
        }
    }

    pub fn from_snapshot(snap: &TreeSnapshot) -> Result<Self, String> {
        if !(1..=crate::space::MAX_DIMENSIONS).contains(&snap.n_h) {
            return Err(format!("tree depth {} out of range", snap.n_h));
        }
        if snap.leaf_counts.len() != 1 << snap.n_h {
            return Err(format!(
                "expected {} leaf counts, got {}",
                1usize << snap.n_h,
                snap.leaf_counts.len()
            ));
        }
        let mut internal_counts = BTreeMap::new();
        for node in &snap.internal_counts {
            let prefix: Bits = node.prefix.parse().map_err(|e| format!("{e}"))?;
            if node.depth == 0 || node.depth > snap.n_h || prefix.len() != node.depth {
                return Err(format!(
                    "internal node prefix {:?} does not match depth {}",
                    node.prefix, node.depth
                ));
            }
            if internal_counts
                .insert((node.depth, prefix.to_uint()), node.count)
                .is_some()
            {
                return Err(format!("duplicate internal node {}", node.prefix));
            }
        }
        Ok(Self {
            n_h: snap.n_h,
            leaf_counts: snap.leaf_counts.clone(),
            internal_counts,
        })
    }
}

/// Serialized tree: leaf counts indexed by leaf integer, and the nonzero
/// internal counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub n_h: usize,
    pub leaf_counts: Vec<u64>,
    pub internal_counts: Vec<InternalCount>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InternalCount {
    pub depth: usize,
    pub prefix: String,
    pub count: u64,
}

impl Serialize for SpaceTree {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.snapshot().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SpaceTree {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let snap = TreeSnapshot::deserialize(deserializer)?;
        Self::from_snapshot(&snap).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::space::HyperparameterDef;
    use num_rational::BigRational;

    fn path(s: &str) -> PathKey {
        PathKey::new(s.chars().map(|c| c == '1').collect())
    }

    fn tree_with_path_counts(p: &PathKey, counts: &[u64]) -> SpaceTree {
        let mut tree = SpaceTree::new(p.len());
        for (d, &c) in counts.iter().enumerate() {
            for _ in 0..c {
                tree.record_mutation(p, d + 1);
            }
        }
        tree
    }

    #[test]
    fn pathway_of_table_setting() {
        let space = SearchSpace::<f64>::gc_default();
        let g = space
            .genotype_from_values(&[48.0, 0.0012, 320.0, 320.0])
            .unwrap();
        assert_eq!(pathway(&space, &g), path("0010"));

        let lows: Vec<f64> = space.dims().iter().map(|d| d.lower()).collect();
        let g = space.genotype_from_values(&lows).unwrap();
        assert_eq!(pathway(&space, &g), path("0000"));
        let highs: Vec<f64> = space.dims().iter().map(|d| d.upper()).collect();
        let g = space.genotype_from_values(&highs).unwrap();
        assert_eq!(pathway(&space, &g), path("1111"));
    }

    #[test]
    fn leaf_index_is_big_endian() {
        assert_eq!(path("0000").leaf_index(), 0);
        assert_eq!(path("1000").leaf_index(), 8);
        assert_eq!(path("0011").leaf_index(), 3);
        assert_eq!(PathKey::from_leaf(5, 4), path("0101"));
    }

    #[test]
    fn uniform_dimension_probabilities() {
        let tree = SpaceTree::new(4);
        let p: Vec<f64> = tree.dimension_probabilities(&path("0000"));
        assert_eq!(p, vec![0.25; 4]);
        let tree = tree_with_path_counts(&path("0110"), &[7, 7, 7, 7]);
        let p: Vec<f64> = tree.dimension_probabilities(&path("0110"));
        for x in p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn worked_dimension_example_is_exact() {
        let p0 = path("0000");
        let tree = tree_with_path_counts(&p0, &[3, 1, 0, 0]);
        let exact: Vec<BigRational> = tree.dimension_probabilities(&p0);
        let r = |n: i64| BigRational::new(n.into(), 11.into());
        assert_eq!(exact, vec![r(1), r(2), r(4), r(4)]);
        let approx: Vec<f64> = tree.dimension_probabilities(&p0);
        assert!((approx[0] - 0.0909).abs() < 1e-4);
        assert!((approx[2] - 0.3636).abs() < 1e-4);
    }

    #[test]
    fn subspace_probability_examples() {
        let mut tree = SpaceTree::new(4);
        let p: Vec<f64> = tree.subspace_probabilities();
        assert!(p.iter().all(|&x| (x - 1.0 / 16.0).abs() < 1e-15));
        for _ in 0..9 {
            tree.record_evaluation(&path("0000"));
        }
        let p: Vec<f64> = tree.subspace_probabilities();
        assert!((p[0] - 0.1 / 15.1).abs() < 1e-12);
        assert!((p[0] - 0.006623).abs() < 1e-6);
        for &x in &p[1..] {
            assert!((x - 1.0 / 15.1).abs() < 1e-12);
        }
    }

    #[test]
    fn dominant_leaf_share_vanishes() {
        let mut tree = SpaceTree::new(1);
        let mut prev = 0.5;
        for k in [1u64, 10, 1000, 1_000_000] {
            tree.leaf_counts[1] = k;
            let p: Vec<f64> = tree.subspace_probabilities();
            assert!(p[0] > prev);
            prev = p[0];
        }
        assert!(prev > 0.999_99);
    }

    #[test]
    fn evaluation_counters() {
        let mut tree = SpaceTree::new(4);
        tree.record_evaluation(&path("0000"));
        assert_eq!(tree.leaf_counts()[0], 1);
        assert_eq!(tree.total_leaf_count(), 1);
        for _ in 0..4 {
            tree.record_evaluation(&path("0000"));
        }
        assert_eq!(tree.leaf_counts()[0], 5);
        tree.record_evaluation(&path("1111"));
        assert_eq!(tree.leaf_counts()[15], 1);
        assert_eq!(tree.total_internal_count(), 0);
    }

    #[test]
    fn mutation_counters_are_prefix_scoped() {
        let mut tree = SpaceTree::new(4);
        tree.record_mutation(&path("0000"), 1);
        assert_eq!(tree.internal_count(1, &path("0000")), 1);
        // s_0 is shared by every path starting with 0
        assert_eq!(tree.internal_count(1, &path("0111")), 1);
        assert_eq!(tree.internal_count(1, &path("1000")), 0);

        tree.record_mutation(&path("0010"), 2);
        tree.record_mutation(&path("0001"), 2);
        assert_eq!(tree.internal_count(2, &path("0000")), 2);

        tree.record_mutation(&path("0100"), 3);
        assert_eq!(tree.internal_count(3, &path("0100")), 1);
        assert_eq!(tree.internal_count(3, &path("0000")), 0);
        assert_eq!(tree.total_internal_count(), 4);
    }

    #[test]
    fn single_dimension_mutation_always_hits_it() {
        let def = HyperparameterDef::new("b", 8.0, 512.0, 8.0, Some(256.0), None).unwrap();
        let space = SearchSpace::new(vec![def]).unwrap();
        let mut tree = SpaceTree::for_space(&space);
        let mut rng = seeded(3);
        let g = space.genotype_from_values(&[64.0]).unwrap();
        for _ in 0..100 {
            let (m, dim) = tree.tsm_mutate_with_dimension(&space, &g, &mut rng);
            assert_eq!(dim, 0);
            assert!(m.indices()[0] < 31);
        }
        assert_eq!(tree.internal_count(1, &path("0")), 100);
    }

    #[test]
    fn mutation_dimension_frequency() {
        let space = SearchSpace::<f64>::gc_default();
        let lows: Vec<f64> = space.dims().iter().map(|d| d.lower()).collect();
        let g = space.genotype_from_values(&lows).unwrap();
        let fresh = tree_with_path_counts(&path("0000"), &[3, 1, 0, 0]);
        let mut rng = seeded(1234);
        let n = 100_000;
        let mut hits = [0usize; 4];
        for _ in 0..n {
            let mut tree = fresh.clone();
            let (_, dim) = tree.tsm_mutate_with_dimension(&space, &g, &mut rng);
            hits[dim] += 1;
        }
        let expected = [1.0 / 11.0, 2.0 / 11.0, 4.0 / 11.0, 4.0 / 11.0];
        for (h, e) in hits.iter().zip(expected) {
            let freq = *h as f64 / n as f64;
            assert!((freq - e).abs() < 0.01, "{freq} vs {e}");
        }
    }

    #[test]
    fn mutated_batch_stays_in_left_range() {
        let space = SearchSpace::<f64>::gc_default();
        let lows: Vec<f64> = space.dims().iter().map(|d| d.lower()).collect();
        let g = space.genotype_from_values(&lows).unwrap();
        let mut tree = SpaceTree::for_space(&space);
        let mut rng = seeded(5);
        for _ in 0..10_000 {
            let (m, dim) = tree.tsm_mutate_with_dimension(&space, &g, &mut rng);
            let changed: Vec<usize> = (0..4)
                .filter(|&d| m.indices()[d] != g.indices()[d])
                .collect();
            assert!(changed.iter().all(|&d| d == dim));
            if dim == 0 {
                let v = space.values(&m)[0];
                assert!((8.0..=248.0).contains(&v) && v % 8.0 == 0.0);
            }
        }
    }

    #[test]
    fn sample_frequencies_fresh_tree() {
        let space = SearchSpace::<f64>::gc_default();
        let tree = SpaceTree::for_space(&space);
        let mut rng = seeded(99);
        let n = 100_000;
        let mut hits = [0usize; 16];
        for _ in 0..n {
            let (leaf, g) = tree.tsm_sample_with_leaf(&space, &mut rng);
            hits[leaf] += 1;
            debug_assert_eq!(pathway(&space, &g).leaf_index(), leaf);
        }
        for h in hits {
            assert!((h as f64 / n as f64 - 1.0 / 16.0).abs() < 0.005);
        }
    }

    #[test]
    fn sample_frequencies_skewed_tree() {
        let space = SearchSpace::<f64>::gc_default();
        let mut tree = SpaceTree::for_space(&space);
        for _ in 0..9 {
            tree.record_evaluation(&path("0000"));
        }
        let mut rng = seeded(100);
        let n = 100_000;
        let mut hits = [0usize; 16];
        for _ in 0..n {
            hits[tree.tsm_sample_with_leaf(&space, &mut rng).0] += 1;
        }
        assert!((hits[0] as f64 / n as f64 - 0.0066).abs() < 0.003);
        for &h in &hits[1..] {
            assert!((h as f64 / n as f64 - 0.0662).abs() < 0.005);
        }
    }

    #[test]
    fn sampled_genotype_in_selected_subspace() {
        let space = SearchSpace::<f64>::gc_default();
        let mut tree = SpaceTree::for_space(&space);
        tree.record_evaluation(&path("0110"));
        let mut rng = seeded(8);
        for _ in 0..10_000 {
            let (leaf, g) = tree.tsm_sample_with_leaf(&space, &mut rng);
            assert_eq!(pathway(&space, &g), PathKey::from_leaf(leaf, 4));
        }
    }

    #[test]
    fn deterministic_given_state_and_seed() {
        let space = SearchSpace::<f64>::gc_default();
        let g = space.random_genotype(&mut seeded(1));
        let mut t1 = SpaceTree::for_space(&space);
        let mut t2 = t1.clone();
        let a = t1.tsm_mutate_individual(&space, &g, &mut seeded(77));
        let b = t2.tsm_mutate_individual(&space, &g, &mut seeded(77));
        assert_eq!(a, b);
        assert_eq!(t1, t2);
    }

    #[test]
    fn snapshot_roundtrip() {
        let mut tree = SpaceTree::new(4);
        tree.record_mutation(&path("0110"), 3);
        tree.record_evaluation(&path("0110"));
        let json = serde_json::to_string(&tree).unwrap();
        assert!(json.contains("\"prefix\":\"011\""));
        let back: SpaceTree = serde_json::from_str(&json).unwrap();
        assert_eq!(back, tree);
        let bad = r#"{"n_h":2,"leaf_counts":[0,0,0],"internal_counts":[]}"#;
        assert!(serde_json::from_str::<SpaceTree>(bad).is_err());
    }
}
