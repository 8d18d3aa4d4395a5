//! Property tests for the algebraic invariants of the scoring, scaling and
//! bound-propagation layers.

use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;
use std::sync::Arc;

use helio_aim::flux::{FluxMap, ReceiverMesh};
use helio_aim::plant::PlantConfig;
use helio_aim::scoring::quality_score;
use helio_aim::surrogate::{InputScaler, SurrogateModel, TargetScaler};

fn single_panel_map(profile: &[f64]) -> FluxMap {
    let mut cfg = PlantConfig::dunhuang();
    cfg.panel_count = 1;
    cfg.mesh_vertical = profile.len();
    cfg.mesh_horizontal = 1;
    let mesh = Arc::new(ReceiverMesh::from_config(&cfg));
    let mut c = Array3::zeros((1, profile.len(), 1));
    for (v, &x) in profile.iter().enumerate() {
        c[[0, v, 0]] = x;
    }
    FluxMap::from_parts(c, mesh, 1.0, 1)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Scaling the whole map scales the energy and leaves the distribution
    /// difference unchanged.
    #[test]
    fn score_is_scale_equivariant(
        profile in prop::collection::vec(0.0f64..500.0, 3..40),
        alpha in 0.01f64..100.0,
    ) {
        let base = quality_score(&single_panel_map(&profile), 0.0, &[3], 0.5).unwrap();
        let scaled_profile: Vec<f64> = profile.iter().map(|x| x * alpha).collect();
        let scaled = quality_score(&single_panel_map(&scaled_profile), 0.0, &[3], 0.5).unwrap();
        let expected = base.panel_energy[0] * alpha;
        prop_assert!((scaled.panel_energy[0] - expected).abs() <= 1e-9 * expected.abs().max(1.0));
        prop_assert!(
            (scaled.panel_distribution_difference[0] - base.panel_distribution_difference[0]).abs()
                <= 1e-9
        );
    }

    /// The score never increases with the penalty weight.
    #[test]
    fn score_monotone_in_lambda(
        profile in prop::collection::vec(0.0f64..500.0, 3..40),
        lambdas in prop::collection::vec(0.0f64..20_000.0, 2..6),
    ) {
        let map = single_panel_map(&profile);
        let mut sorted = lambdas;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut last = f64::INFINITY;
        for lambda in sorted {
            let qs = quality_score(&map, lambda, &[2], 0.5).unwrap().quality_score;
            prop_assert!(qs <= last + 1e-9);
            last = qs;
        }
    }

    /// Input scaling round-trips through scale/unscale.
    #[test]
    fn input_scaler_round_trip(
        lo in -10.0f64..10.0,
        span in 0.1f64..20.0,
        values in prop::collection::vec(-10.0f64..10.0, 1..8),
    ) {
        let dims = values.len();
        let scaler = InputScaler { min: vec![lo; dims], max: vec![lo + span; dims] };
        let scaled = scaler.scale(&values).unwrap();
        let back = scaler.unscale(scaled.as_slice().unwrap());
        for (a, b) in values.iter().zip(&back) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        }
    }

    /// Preactivation bounds contain every sampled preactivation, and the
    /// network output stays within the Lipschitz envelope of its layers.
    #[test]
    fn bounds_and_lipschitz_hold_on_random_networks(
        seed in 0u64..500,
        hidden in 1usize..10,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let dims = 3usize;
        let w1 = Array2::from_shape_fn((hidden, dims), |_| rng.random_range(-2.0..2.0));
        let b1 = Array1::from_shape_fn(hidden, |_| rng.random_range(-1.0..1.0));
        let w2 = Array2::from_shape_fn((1, hidden), |_| rng.random_range(-2.0..2.0));
        let model = SurrogateModel::from_parts(
            vec![w1.clone(), w2.clone()],
            vec![b1, Array1::zeros(1)],
            InputScaler { min: vec![0.0; dims], max: vec![1.0; dims] },
            TargetScaler { mean: 0.0, std: 1.0 },
        )
        .unwrap();

        // Product of layer operator norms bounds the network's slope
        // (measured in the scaled domain).
        let frob = |w: &Array2<f64>| w.iter().map(|x| x * x).sum::<f64>().sqrt();
        let lipschitz = frob(&w1) * frob(&w2);

        for _ in 0..50 {
            let x = Array1::from_shape_fn(dims, |_| rng.random_range(0.0..=1.0));
            let y = Array1::from_shape_fn(dims, |_| rng.random_range(0.0..=1.0));
            for (layer, zs) in model.preactivations_scaled(x.view()).iter().enumerate() {
                let bounds = &model.bounds[layer];
                for (j, &z) in zs.iter().enumerate() {
                    prop_assert!(z >= bounds.lower[j] - 1e-9 && z <= bounds.upper[j] + 1e-9);
                }
            }
            let dist =
                x.iter().zip(y.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let df = (model.forward_scaled(x.view()) - model.forward_scaled(y.view())).abs();
            prop_assert!(df <= lipschitz * dist + 1e-9);
        }
    }

    /// Aim vector CSV round-trips.
    #[test]
    fn aim_csv_round_trip(values in prop::collection::vec(0.0f64..3.0, 1..40)) {
        let aims = helio_aim::flux::AimVector::new(values);
        let mut buf = Vec::new();
        helio_aim::optimizer::write_aim_csv(&aims, &mut buf).unwrap();
        let back = helio_aim::optimizer::read_aim_csv(std::io::Cursor::new(buf)).unwrap();
        prop_assert_eq!(back, aims);
    }
}
