use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsm_hpo::eval::{
    make_benchmark_objective, unflatten, EvaluationService, SyntheticEvaluator,
};
use tsm_hpo::evolve::run_hesga;
use tsm_hpo::{
    pathway, EvaluationRequest, Evaluator, GaConfig, HyperparameterDef, MutationMode,
    ObjectiveKind, PathKey, SearchSpace, SpaceTree,
};

fn dim_strategy() -> impl Strategy<Value = HyperparameterDef<f64>> {
    (-50i32..50, 1u32..20, 2u64..40).prop_map(|(lower, step, count)| {
        let lower = lower as f64;
        let step = step as f64;
        let upper = lower + step * (count - 1) as f64;
        HyperparameterDef::new("x", lower, upper, step, None, None).unwrap()
    })
}

fn space_strategy() -> impl Strategy<Value = SearchSpace<f64>> {
    prop::collection::vec(dim_strategy(), 1..5).prop_map(|dims| {
        let dims = dims
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                HyperparameterDef::new(format!("x{i}"), d.lower(), d.upper(), d.step(), None, None)
                    .unwrap()
            })
            .collect();
        SearchSpace::new(dims).unwrap()
    })
}

fn small_space() -> SearchSpace<f64> {
    SearchSpace::new(vec![
        HyperparameterDef::new("a", 0.0, 11.0, 1.0, None, None).unwrap(),
        HyperparameterDef::new("b", 0.5, 4.0, 0.5, None, None).unwrap(),
        HyperparameterDef::new("c", 10.0, 100.0, 10.0, None, None).unwrap(),
    ])
    .unwrap()
}

proptest! {
    #[test]
    fn codec_roundtrips_every_grid_value(d in dim_strategy()) {
        for i in 0..d.grid_count() {
            let v = d.value_at(i);
            prop_assert_eq!(d.decode(&d.encode(v).unwrap()).unwrap(), v);
            prop_assert_eq!(d.index_of(v).unwrap(), i);
        }
    }

    #[test]
    fn bits_and_indices_agree(space in space_strategy(), seed in any::<u64>()) {
        let g = space.random_genotype(&mut ChaCha8Rng::seed_from_u64(seed));
        let from_bits = space.genotype_from_bits(g.bits()).unwrap();
        prop_assert_eq!(&from_bits, &g);
        let from_values = space.genotype_from_values(&space.values(&g)).unwrap();
        prop_assert_eq!(from_values, g);
    }

    #[test]
    fn values_lie_in_their_subspace(space in space_strategy(), seed in any::<u64>()) {
        let g = space.random_genotype(&mut ChaCha8Rng::seed_from_u64(seed));
        let ranges = space.subspace_ranges(&pathway(&space, &g));
        for (v, (lo, hi)) in space.values(&g).into_iter().zip(ranges) {
            prop_assert!(lo <= v && v <= hi, "{} outside [{}, {}]", v, lo, hi);
        }
    }

    #[test]
    fn subspaces_tile_small_grids(space in space_strategy()) {
        prop_assume!(space.total_grid() <= 4096);
        let grid: Vec<u64> = space.dims().iter().map(|d| d.grid_count()).collect();
        let mut per_leaf = vec![0u128; space.n_s()];
        for flat in 0..space.total_grid() as u64 {
            let ix = unflatten(flat, &grid);
            let owners: Vec<usize> = (0..space.n_s())
                .filter(|&leaf| {
                    space
                        .subspace_indices(&PathKey::from_leaf(leaf, space.n_h()))
                        .iter()
                        .zip(&ix)
                        .all(|(r, i)| r.contains(i))
                })
                .collect();
            prop_assert_eq!(owners.len(), 1);
            per_leaf[owners[0]] += 1;
        }
        for leaf in 0..space.n_s() {
            let size: u128 = space
                .subspace_indices(&PathKey::from_leaf(leaf, space.n_h()))
                .iter()
                .map(|r| (r.end() - r.start() + 1) as u128)
                .product();
            prop_assert_eq!(per_leaf[leaf], size);
        }
    }

    #[test]
    fn counters_are_conserved(ops in prop::collection::vec((any::<bool>(), 0usize..8, 1usize..=3), 0..200)) {
        let mut tree = SpaceTree::new(3);
        let (mut evals, mut mutations) = (0u64, 0u64);
        for (is_eval, leaf, dim) in ops {
            let path = PathKey::from_leaf(leaf, 3);
            if is_eval {
                tree.record_evaluation(&path);
                evals += 1;
            } else {
                tree.record_mutation(&path, dim);
                mutations += 1;
            }
        }
        prop_assert_eq!(tree.total_leaf_count(), evals);
        prop_assert_eq!(tree.total_internal_count(), mutations);
    }

    #[test]
    fn tsm_is_a_function_of_state_genotype_and_seed(seed in any::<u64>(), warmup in 0usize..30) {
        let space = small_space();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
        let mut tree = SpaceTree::for_space(&space);
        let mut g = space.random_genotype(&mut rng);
        for _ in 0..warmup {
            g = tree.tsm_mutate_individual(&space, &g, &mut rng);
        }
        let mut t1 = tree.clone();
        let mut t2 = tree.clone();
        let a = t1.tsm_mutate_individual(&space, &g, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = t2.tsm_mutate_individual(&space, &g, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
        prop_assert_eq!(t1, t2);
        let a = tree.tsm_sample_individual(&space, &mut ChaCha8Rng::seed_from_u64(seed));
        let b = tree.tsm_sample_individual(&space, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn learning_curves_improve_with_budget(
        seed in 0u64..50,
        kind in prop::sample::select(ObjectiveKind::ALL.to_vec()),
        flat in 0u64..1152,
        b1 in 0.0f64..1.0,
        b2 in 0.0f64..1.0,
    ) {
        let space = small_space();
        let spec = make_benchmark_objective(&space, kind, seed);
        let ix = unflatten(flat, &spec.grid);
        let (lo, hi) = if b1 < b2 { (b1, b2) } else { (b2, b1) };
        prop_assert!(spec.noiseless(&ix, lo) >= spec.noiseless(&ix, hi));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn run_invariants(seed in any::<u64>(), tsm in any::<bool>()) {
        let space = small_space();
        let spec = make_benchmark_objective(&space, ObjectiveKind::DeceptiveMultimodal, 3);
        let evaluator = Arc::new(SyntheticEvaluator::new(spec));
        let service = EvaluationService::new(evaluator.clone(), 2, true);
        let config = GaConfig {
            population_size: 10,
            max_generations: 6,
            seed,
            mutation_mode: if tsm { MutationMode::Tsm } else { MutationMode::SinglePoint },
            ..GaConfig::default()
        };
        let record = run_hesga(&space, &config, &service).unwrap();
        prop_assert!(record.validate().is_ok());

        let mut best = f64::INFINITY;
        for gen in &record.history {
            prop_assert!(gen.best_full_fitness <= best);
            best = gen.best_full_fitness;
            for member in &gen.archive {
                let req = EvaluationRequest::new("replay", &space, &member.genotype, 1.0, seed);
                prop_assert_eq!(member.full_fitness, Some(evaluator.evaluate(&req).unwrap()));
            }
        }
        prop_assert_eq!(record.tree.total_leaf_count(), record.totals.full_evals as u64);
        if !tsm {
            prop_assert_eq!(record.tree.total_internal_count(), 0);
        }
    }
}

#[test]
fn cache_is_transparent() {
    let space = small_space();
    for kind in ObjectiveKind::ALL {
        let spec = make_benchmark_objective(&space, kind, 4);
        let evaluator = Arc::new(SyntheticEvaluator::new(spec));
        let config = GaConfig {
            population_size: 10,
            max_generations: 5,
            seed: 77,
            ..GaConfig::default()
        };
        let cached = EvaluationService::new(evaluator.clone(), 2, true);
        let uncached = EvaluationService::new(evaluator, 2, false);
        let a = run_hesga(&space, &config, &cached).unwrap();
        let b = run_hesga(&space, &config, &uncached).unwrap();
        assert_eq!(a.payload_json(), b.payload_json(), "{kind:?}");
        assert!(cached.evaluator_calls() <= uncached.evaluator_calls());
    }
}

#[test]
fn reported_optimum_matches_enumeration() {
    let space = small_space();
    for kind in ObjectiveKind::ALL {
        for seed in 0..5 {
            let spec = make_benchmark_objective(&space, kind, seed);
            let (at, best) = spec.grid_optimum();
            let total: u64 = spec.grid.iter().product();
            let brute = (0..total)
                .map(|flat| spec.noiseless(&unflatten(flat, &spec.grid), 1.0))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(best, brute, "{kind:?} seed {seed}");
            assert_eq!(spec.noiseless(&at, 1.0), best);
        }
    }
}
