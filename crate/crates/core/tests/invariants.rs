use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rbhmc::export::TreeDoc;
use rbhmc::mcmc::{self, ChainConfig, ChainState, WeightAdapt};
use rbhmc::model::generate_dataset;
use rbhmc::regularizer::hinge_penalty;
use rbhmc::Hyperparams;

fn hyper(depth: usize, trunc: usize, alpha: f64, cost: f64) -> Hyperparams {
    Hyperparams {
        alpha,
        depth,
        trunc,
        margin_cost: cost,
        prior_cov: DMatrix::identity(2, 2) * 9.0,
        ..Hyperparams::animals(2)
    }
}

fn on_simplex(w: &[f64]) -> bool {
    w.iter().all(|&x| (0.0..=1.0).contains(&x)) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-9
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generated_trees_round_trip_and_have_nonnegative_hinge(
        seed in any::<u64>(), depth in 1usize..4, trunc in 1usize..6, n in 1usize..30, alpha in 0.05f64..3.0,
    ) {
        let h = hyper(depth, trunc, alpha, 1.0);
        let g = generate_dataset(&h, n, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let paths: Vec<&[usize]> = g.assignments.iter().map(|a| a.path.as_slice()).collect();
        g.tree.check_counts(paths.iter().copied()).unwrap();
        for node in g.tree.nodes() {
            prop_assert!(on_simplex(&node.weights));
        }
        prop_assert!(hinge_penalty(&paths, &h.margin_context(), &g.tree, &g.data) >= 0.0);

        let s = TreeDoc::new(&g.tree, &paths, &g.kernels).unwrap().to_json();
        let doc = TreeDoc::from_json(&s).unwrap();
        let (t, p) = doc.to_tree().unwrap();
        prop_assert_eq!(TreeDoc::new(&t, &p, &doc.kernel_vectors()).unwrap().to_json(), s);
    }

    #[test]
    fn sweeps_keep_the_state_consistent(
        seed in any::<u64>(), depth in 1usize..4, trunc in 1usize..5, cost in 1e-3f64..5.0, exact in any::<bool>(),
    ) {
        let h = hyper(depth, trunc, 0.8, cost);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = generate_dataset(&h, 12, &mut rng).unwrap();
        let cfg = ChainConfig { exact_margins: exact, ..ChainConfig::default() };
        let mut s = ChainState::initialise(&g.data, &h, &cfg, &mut rng).unwrap();
        let mut adapt = WeightAdapt::new(cfg.kappa);
        for _ in 0..4 {
            mcmc::sweep(&mut s, &g.data, &cfg, &mut adapt, &mut rng).unwrap();
            s.check_consistency(&g.data).unwrap();
            prop_assert!(on_simplex(&s.tree.node(rbhmc::model::ROOT).weights));
            for node in s.tree.nodes() {
                prop_assert!(on_simplex(&node.weights));
                let q = mcmc::eta_conditional(node.id, &s, &g.data);
                if node.parent.is_some() {
                    let q = q.unwrap();
                    prop_assert!(q.precision.clone().cholesky().is_some());
                    prop_assert!((&q.precision - q.precision.transpose()).amax() < 1e-9 * q.precision.amax());
                }
            }
        }
    }
}
