use std::sync::Arc;

use opinion_mf::dist::{ScalarDist, VecDist};
use opinion_mf::dynamics::{coefficient, simulate, OpinionState, RANGE_SLACK};
use opinion_mf::exec::Exec;
use opinion_mf::graph::{normalize_weights, sample_graph, sample_labels, Labels};
use opinion_mf::gwtree::{
    marks_by_type, neighborhood_diagnostic, sample_tree, weighted_generation_sum, TreeParams, DEFAULT_NODE_BUDGET,
};
use opinion_mf::linalg::Mat;
use opinion_mf::meanfield::{MeanFieldModel, MeanFieldTracker, WeightMoments, Flavor};
use opinion_mf::metrics::matrix_inf_distance;
use opinion_mf::rng::{stream, Purpose};
use opinion_mf::spec::ModelSpec;
use proptest::prelude::*;

fn arb_spec() -> impl Strategy<Value = ModelSpec> {
    (1usize..=3, 1usize..=3, 0.0f64..0.6, 0.05f64..0.4, any::<bool>()).prop_flat_map(|(k, ell, c, d, uniform_w)| {
        let c = c.min(1.0 - d);
        (
            prop::collection::vec(0.1f64..1.0, k),
            prop::collection::vec(prop::collection::vec(0.0f64..3.0, k), k),
        )
            .prop_map(move |(raw_pi, kappa)| {
                let s: f64 = raw_pi.iter().sum();
                let pi: Vec<f64> = raw_pi.iter().map(|p| p / s).collect();
                let spec = ModelSpec::simple(pi, kappa, ell, c, d);
                if uniform_w {
                    spec.with_weights(ScalarDist::uniform(0.0, 1.0))
                } else {
                    spec
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn opinions_stay_in_range(spec in arb_spec(), n in 2usize..40, theta in 0.5f64..20.0, seed in any::<u64>()) {
        let labels = Arc::new(sample_labels(&spec, n, seed).unwrap());
        let graph = sample_graph(&spec, labels, theta, seed, Exec::Sequential).unwrap();
        let cm = normalize_weights(&graph);
        let sim = simulate(&spec, &graph, &cm, 8, seed, &[0], false, Exec::Sequential).unwrap();
        let r = &sim.final_state.r;
        prop_assert!(r.data.iter().all(|x| x.abs() <= 1.0 + RANGE_SLACK));
    }

    #[test]
    fn normalized_rows_sum_to_one_or_zero(spec in arb_spec(), n in 1usize..50, theta in 0.1f64..30.0, seed in any::<u64>()) {
        let labels = Arc::new(sample_labels(&spec, n, seed).unwrap());
        let graph = sample_graph(&spec, labels, theta, seed, Exec::Sequential).unwrap();
        let cm = normalize_weights(&graph);
        for i in 0..n {
            let s = cm.row_sum(i);
            prop_assert!((s - 1.0).abs() < 1e-12 || s == 0.0);
            if graph.in_degree(i) == 0 {
                prop_assert!(cm.no_in_neighbors[i]);
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree(spec in arb_spec(), n in 2usize..60, seed in any::<u64>()) {
        let labels = Arc::new(sample_labels(&spec, n, seed).unwrap());
        let a = sample_graph(&spec, labels.clone(), 5.0, seed, Exec::Sequential).unwrap();
        let b = sample_graph(&spec, labels, 5.0, seed, Exec::Parallel).unwrap();
        prop_assert_eq!(&a.sources, &b.sources);
        let cm = normalize_weights(&a);
        let sa = simulate(&spec, &a, &cm, 4, seed, &[0, n - 1], false, Exec::Sequential).unwrap();
        let sb = simulate(&spec, &a, &cm, 4, seed, &[0, n - 1], false, Exec::Parallel).unwrap();
        prop_assert_eq!(sa.final_state.r, sb.final_state.r);
    }

    #[test]
    fn coefficients_are_a_distribution(c in 0.0f64..0.5, d in 0.01f64..0.5, t in 0usize..80) {
        // Σ_s a_{s,t} = (1−d)^t
        let total: f64 = (0..=t).map(|s| coefficient(s, t, c, d).unwrap()).sum();
        prop_assert!((total - (1.0 - d).powi(t as i32)).abs() < 1e-10);
    }

    #[test]
    fn coupled_meanfield_starts_at_initial(spec in arb_spec(), n in 2usize..30, seed in any::<u64>()) {
        let labels = sample_labels(&spec, n, seed).unwrap();
        let model = MeanFieldModel::new(&spec, &labels, 4.0, WeightMoments::analytic(&spec));
        let drift = model.drift(Flavor::MeanField, 3);
        let mut rng = stream(seed, Purpose::Initial, &[]);
        let r0 = Mat { rows: n, cols: spec.ell, data: (0..n * spec.ell).map(|_| ScalarDist::uniform(-1.0, 1.0).sample(&mut rng)).collect() };
        let tracker = MeanFieldTracker::new(&r0, spec.c, spec.d);
        prop_assert_eq!(tracker.state(&labels.of, &drift).unwrap(), r0);
    }

    #[test]
    fn generation_mass_in_unit_interval(q in 0.0f64..6.0, zero_atom in any::<bool>(), seed in any::<u64>()) {
        let w = if zero_atom {
            ScalarDist::Mixture { weights: vec![0.5, 0.5], components: vec![ScalarDist::point(0.0), ScalarDist::point(1.0)] }
        } else {
            ScalarDist::uniform(0.0, 1.0)
        };
        let params = TreeParams::from_q(vec![vec![q]], vec![vec![w]]);
        let tree = sample_tree(&params, 0, 3, DEFAULT_NODE_BUDGET, &mut stream(seed, Purpose::Tree, &[])).unwrap();
        for s in 0..=3 {
            let m = tree.generation_mass(s);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&m));
        }
        prop_assert_eq!(tree.generation_mass(0), 1.0);
    }

    #[test]
    fn generation_sum_is_linear(q0 in 0.5f64..4.0, q1 in 0.5f64..4.0, a in -1.0f64..1.0, b in -1.0f64..1.0, seed in any::<u64>()) {
        let params = TreeParams::from_q(
            vec![vec![q0, q1], vec![q1, q0]],
            vec![vec![ScalarDist::uniform(0.0, 1.0); 2]; 2],
        );
        let tree = sample_tree(&params, 0, 2, DEFAULT_NODE_BUDGET, &mut stream(seed, Purpose::Tree, &[])).unwrap();
        let x = Mat::from_rows(&[vec![0.3], vec![-0.6]]);
        let y = Mat::from_rows(&[vec![-0.9], vec![0.2]]);
        let mut z = x.scale(a);
        z.axpy(b, &y);
        let sx = weighted_generation_sum(&tree, 2, &marks_by_type(&tree, 2, &x)).unwrap()[0];
        let sy = weighted_generation_sum(&tree, 2, &marks_by_type(&tree, 2, &y)).unwrap()[0];
        let sz = weighted_generation_sum(&tree, 2, &marks_by_type(&tree, 2, &z)).unwrap()[0];
        prop_assert!((sz - (a * sx + b * sy)).abs() < 1e-12);
    }

    #[test]
    fn tree_flag_is_monotone_in_depth(n in 3usize..60, theta in 0.5f64..6.0, seed in any::<u64>()) {
        let spec = ModelSpec::simple(vec![1.0], vec![vec![1.0]], 1, 0.3, 0.2);
        let labels = Arc::new(Labels::from_vec(vec![0; n], 1).unwrap());
        let graph = sample_graph(&spec, labels, theta, seed, Exec::Sequential).unwrap();
        let diag = neighborhood_diagnostic(&graph, 0, 4);
        prop_assert!(diag.is_tree.windows(2).all(|w| w[0] || !w[1]));
    }

    #[test]
    fn inf_distance_is_a_metric(rows in 1usize..6, cols in 1usize..4, seed in any::<u64>()) {
        let mut rng = stream(seed, Purpose::Diagnostic, &[]);
        let u = ScalarDist::uniform(-1.0, 1.0);
        let mut draw = || Mat { rows, cols, data: (0..rows * cols).map(|_| u.sample(&mut rng)).collect() };
        let (a, b, c) = (draw(), draw(), draw());
        let ab = matrix_inf_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, matrix_inf_distance(&b, &a).unwrap());
        prop_assert!(ab <= matrix_inf_distance(&a, &c).unwrap() + matrix_inf_distance(&c, &b).unwrap() + 1e-12);
        prop_assert_eq!(matrix_inf_distance(&a, &a).unwrap(), 0.0);
    }
}

#[test]
fn state_without_history_is_initial() {
    let spec = ModelSpec::simple(vec![1.0], vec![vec![1.0]], 2, 0.3, 0.2)
        .with_signals(VecDist::iid(ScalarDist::point(0.1)));
    let labels = Arc::new(sample_labels(&spec, 10, 1).unwrap());
    let graph = sample_graph(&spec, labels, 3.0, 1, Exec::Sequential).unwrap();
    let cm = normalize_weights(&graph);
    let sim = simulate(&spec, &graph, &cm, 0, 1, &[], false, Exec::Sequential).unwrap();
    assert_eq!(sim.final_state, OpinionState { r: sim.initial.clone(), k: 0 });
}
