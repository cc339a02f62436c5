use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use qrc_core::noise::{kraus_completeness_defect, kraus_set, NoiseConfig};
use qrc_core::qmath::{operator_norm_2_2, pauli_superop, random_density, restricted_norm_2_2};
use qrc_core::readout::{
    feature_matrix, feature_vector, fit_least_squares, nmse, node_count, FeatureMap, ReadoutModel,
};
use qrc_core::reservoir::{Encoding, Reservoir, ReservoirConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn encoding() -> impl Strategy<Value = Encoding> {
    prop::sample::select(Encoding::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_keep_states_physical(seed in any::<u64>(), n in 1usize..=3, enc in encoding(),
                                  inputs in prop::collection::vec(0.0f64..=1.0, 1..8)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = Reservoir::new(ReservoirConfig::random(n, enc, &mut rng)).unwrap();
        let mut rho = random_density::<f64, _>(n, &mut rng);
        for u in inputs {
            rho = res.step(&rho, u).unwrap();
            prop_assert!(rho.validate().is_ok());
        }
    }

    #[test]
    fn noisy_steps_keep_states_physical(seed in any::<u64>(), kind in 0usize..3,
                                        gamma in 0.0f64..0.5, lambda in 0.0f64..=1.0, u in 0.0f64..=0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = Reservoir::new(ReservoirConfig::random(2, Encoding::Mixed, &mut rng)).unwrap();
        let noise = match kind {
            0 => NoiseConfig::dephasing(gamma),
            1 => NoiseConfig::decaying(gamma),
            _ => NoiseConfig::gad(gamma, lambda),
        }
        .with_substeps(5);
        let rho = random_density::<f64, _>(2, &mut rng);
        let out = qrc_core::noise::noisy_step(&rho, u, &res, &noise).unwrap();
        prop_assert!(out.validate().is_ok());
    }

    #[test]
    fn kraus_sets_are_complete(kind in 0usize..3, gamma in 0.0f64..10.0, lambda in 0.0f64..=1.0, tau in 0.001f64..2.0) {
        let cfg = match kind {
            0 => NoiseConfig::dephasing(gamma),
            1 => NoiseConfig::decaying(gamma),
            _ => NoiseConfig::gad(gamma, lambda),
        };
        let kraus = kraus_set(&cfg, tau).unwrap();
        prop_assert!(kraus_completeness_defect(&kraus) < 1e-12);
    }

    #[test]
    fn restricted_norm_bounded_by_full_norm(seed in any::<u64>(), u in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = Reservoir::new(ReservoirConfig::random(1, Encoding::Mixed, &mut rng)).unwrap();
        let sop = pauli_superop(res.channel(u).unwrap(), 1);
        prop_assert!(restricted_norm_2_2(&sop) <= operator_norm_2_2(&sop) + 1e-12);
    }

    #[test]
    fn feature_length_is_node_count(n in 1usize..=5, r in 1usize..=4) {
        prop_assert_eq!(FeatureMap::new(n, r).unwrap().len(), node_count(n, r));
    }

    #[test]
    fn nmse_is_affine_invariant(y in prop::collection::vec(-1.0f64..1.0, 5..30), a in 0.1f64..10.0, b in -5.0f64..5.0, seed in any::<u64>()) {
        prop_assume!(y.iter().any(|v| (v - y[0]).abs() > 1e-3));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::Rng;
        let p: Vec<f64> = y.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let e = nmse(&p, &y).unwrap();
        let ps: Vec<f64> = p.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| a * v + b).collect();
        prop_assert!((nmse(&ps, &ys).unwrap() - e).abs() < 1e-9 * e.max(1.0));
    }

    #[test]
    fn training_residual_shrinks_with_degree(seed in any::<u64>(), n in 1usize..=3) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DMatrix::from_fn(60, n, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(60, |_, _| rng.random_range(-1.0..1.0));
        let mut last = f64::INFINITY;
        for r in 1..=3 {
            let x = feature_matrix(&z, &FeatureMap::new(n, r).unwrap()).unwrap();
            let w = fit_least_squares(&x, &y).unwrap();
            let res = (&x * w - &y).norm();
            prop_assert!(res <= last + 1e-10);
            last = res;
        }
    }

    #[test]
    fn product_readout_is_pointwise_product(seed in any::<u64>(), n1 in 1usize..=2, n2 in 1usize..=2,
                                            r1 in 1usize..=2, r2 in 1usize..=2) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f1 = FeatureMap::new(n1, r1).unwrap();
        let f2 = FeatureMap::new(n2, r2).unwrap();
        let h1 = ReadoutModel::new(f1.clone(), DVector::from_fn(f1.len(), |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let h2 = ReadoutModel::new(f2.clone(), DVector::from_fn(f2.len(), |_, _| rng.random_range(-1.0..1.0))).unwrap();
        let h = h1.product(&h2).unwrap();
        let za: Vec<f64> = (0..n1).map(|_| rng.random_range(-1.0..1.0)).collect();
        let zb: Vec<f64> = (0..n2).map(|_| rng.random_range(-1.0..1.0)).collect();
        let joint: Vec<f64> = za.iter().chain(&zb).copied().collect();
        let lhs = h.predict_one(&joint).unwrap();
        let rhs = h1.predict_one(&za).unwrap() * h2.predict_one(&zb).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert_eq!(feature_vector(&joint, &h.feature_map).unwrap().len(), node_count(n1 + n2, r1 + r2));
    }
}
