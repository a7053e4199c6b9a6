use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rhs_radar::bench::validate::{
    brute_force_terms, consistency_error, feasibility_violation, random_feasible_beamformers, random_tiny_scene,
    BOUND_TOLERANCE, CHAIN_TOLERANCE,
};
use rhs_radar::draoa::{gaussian_rounding, run_draoa_on, DraoaConfig, RoundingConfig};
use rhs_radar::signal::{lift, sinr_per_pair, to_db, SignalModel, SinrReport};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn model_sinr_matches_brute_force(seed in any::<u64>()) {
        prop_assert!(consistency_error(1, seed).unwrap() < 1e-8);
    }

    #[test]
    fn brute_force_noise_scales_with_receive_amplitude(seed in 0u64..10_000, s in 0.1f64..1.0) {
        let scene = random_tiny_scene(seed).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bf = random_feasible_beamformers(&model, &mut rng).unwrap();
        let mut scaled = bf.clone();
        scaled.psi_r *= s;
        let a = SinrReport::from_terms(&brute_force_terms(&scene, &bf).unwrap()).unwrap();
        let b = SinrReport::from_terms(&brute_force_terms(&scene, &scaled).unwrap()).unwrap();
        // Signal and noise both scale with s^2 on the receive side.
        prop_assert!((a.worst_case - b.worst_case).abs() <= 1e-9 * a.worst_case.abs().max(1e-300));
    }

    #[test]
    fn scaled_random_beamformers_are_feasible(seed in any::<u64>()) {
        let scene = random_tiny_scene(seed).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let bf = random_feasible_beamformers(&model, &mut rng).unwrap();
        prop_assert!(feasibility_violation(&model, &bf).is_none());
    }

    #[test]
    fn decibels_are_ten_log10(x in 1e-30f64..1e30) {
        prop_assert_eq!(to_db(x), 10.0 * x.log10());
        prop_assert!((10f64.powf(to_db(x) / 10.0) - x).abs() <= 1e-12 * x);
    }

    #[test]
    fn rank_one_rounding_keeps_the_objective(seed in 0u64..10_000) {
        let scene = random_tiny_scene(seed).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bf = random_feasible_beamformers(&model, &mut rng).unwrap();
        let own = sinr_per_pair(&model, &bf).unwrap().worst_case;
        let out = gaussian_rounding(&lift(&bf.psi_t), &lift(&bf.psi_r), &model, &RoundingConfig::default(), seed).unwrap();
        prop_assert!(out.objective >= 0.99 * own);
        prop_assert!(feasibility_violation(&model, &out.beamformers).is_none());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn more_samples_never_hurt_without_block_search(seed in 0u64..10_000, few in 1usize..6) {
        let scene = random_tiny_scene(seed).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_feasible_beamformers(&model, &mut rng).unwrap();
        let b = random_feasible_beamformers(&model, &mut rng).unwrap();
        // Rank-two mixtures so the samples differ.
        let psi_t = (lift(&a.psi_t) + lift(&b.psi_t)) * 0.5;
        let psi_r = (lift(&a.psi_r) + lift(&b.psi_r)) * 0.5;
        let base = RoundingConfig { block_search: false, ..Default::default() };
        let small = RoundingConfig { tx_samples: few, rx_samples: few, ..base };
        let large = RoundingConfig { tx_samples: 4 * few, rx_samples: 4 * few, ..base };
        let lo = gaussian_rounding(&psi_t, &psi_r, &model, &small, seed).unwrap();
        let hi = gaussian_rounding(&psi_t, &psi_r, &model, &large, seed).unwrap();
        prop_assert!(hi.objective >= lo.objective);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimizer_invariants(seed in 0u64..100_000) {
        let scene = random_tiny_scene(seed).unwrap();
        let model = SignalModel::new(&scene).unwrap();
        let cfg = DraoaConfig { rng_seed: seed, ..Default::default() };
        let r = run_draoa_on(&model, &cfg).unwrap();
        for w in r.u_chain.windows(2) {
            prop_assert!(w[1] >= w[0] - CHAIN_TOLERANCE * w[0].abs().max(1.0), "chain drop {} -> {}", w[0], w[1]);
        }
        prop_assert!(r.worst_case_sinr <= r.relaxed_bound + BOUND_TOLERANCE);
        prop_assert!(feasibility_violation(&model, &r.beamformers).is_none());
        prop_assert!(r.trace.iter().filter(|t| t.restart == 0).count() <= cfg.max_outer);
        let again = run_draoa_on(&model, &cfg).unwrap();
        prop_assert_eq!(again, r);
    }
}
