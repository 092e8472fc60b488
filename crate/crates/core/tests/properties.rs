use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use walkerlab_core::gait::LimitKernel;
use walkerlab_core::io::fmt_f64;
use walkerlab_core::mfpt::{sample_slope, Episode, MfptAccumulator};
use walkerlab_core::sim::Walker;
use walkerlab_core::sweep::bootstrap_fraction;
use walkerlab_core::validate::mass_scaling_gap;
use walkerlab_core::{BodyParams, ControlGains, ModelKind, SectionState};

fn model() -> impl Strategy<Value = ModelKind> {
    prop_oneof![Just(ModelKind::RigidNeck), Just(ModelKind::HeadStabilized)]
}

fn episode() -> impl Strategy<Value = Episode> {
    prop_oneof![
        (1u64..50).prop_map(Episode::Returned),
        (1u64..50).prop_map(Episode::Fell),
        (1u64..50).prop_map(Episode::Capped),
    ]
}

proptest! {
    #[test]
    fn written_floats_read_back_exactly(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn slope_draws_scale_with_the_spread(seed in any::<u64>(), sigma in 1e-4f64..0.1, k in 0.1f64..10.0) {
        let a = sample_slope(&mut ChaCha8Rng::seed_from_u64(seed), sigma);
        let b = sample_slope(&mut ChaCha8Rng::seed_from_u64(seed), k * sigma);
        prop_assert!((b - k * a).abs() <= 1e-12 * b.abs().max(1e-12));
    }

    #[test]
    fn episode_order_does_not_change_the_estimate(mut eps in prop::collection::vec(episode(), 1..60), seed in any::<u64>()) {
        let before = MfptAccumulator::from_episodes(&eps);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        eps.shuffle(&mut rng);
        prop_assert_eq!(before, MfptAccumulator::from_episodes(&eps));
    }

    #[test]
    fn expected_passage_covers_the_falling_episode(eps in prop::collection::vec(episode(), 1..60)) {
        let r = MfptAccumulator::from_episodes(&eps).report(0.0);
        let falls = eps.iter().filter(|e| matches!(e, Episode::Fell(_))).count();
        prop_assert_eq!(r.unbounded, falls == 0);
        if falls > 0 {
            prop_assert!(r.mfpt >= r.mean_fall_steps);
            prop_assert!(r.p_fall > 0.0 && r.p_fall <= 1.0);
        }
    }

    #[test]
    fn bootstrap_interval_holds_the_point(outcomes in prop::collection::vec(any::<bool>(), 1..80), seed in any::<u64>()) {
        let (p, lo, hi) = bootstrap_fraction(&outcomes, 200, seed);
        prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }

    #[test]
    fn kernel_distance_is_a_quadratic_form(
        offsets in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 12), 3..20),
        dir in prop::collection::vec(-1.0f64..1.0, 12),
        t in -3.0f64..3.0,
    ) {
        let center = SectionState::reference(ModelKind::HeadStabilized);
        let at = |d: &[f64], s: f64| {
            let mut x = center;
            for j in 0..12 {
                x.0[j] += s * 0.01 * d[j] * center.0[j];
            }
            x
        };
        let samples: Vec<SectionState> = offsets.iter().map(|d| at(d, 1.0)).collect();
        let kernel = LimitKernel::from_samples(&center, &samples, 1000.0, 1e-3);
        let unit = kernel.distance(&at(&dir, 1.0));
        let scaled = kernel.distance(&at(&dir, t));
        prop_assert!(unit >= -1e-9 * unit.abs().max(1.0));
        prop_assert!((scaled - t * t * unit).abs() <= 1e-6 * (t * t * unit).abs().max(1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn heavier_walker_moves_identically(m in model(), factor in 0.2f64..20.0) {
        let gains = ControlGains { hip_p: 20.0, ..ControlGains::baseline() };
        let gap = mass_scaling_gap(m, &BodyParams::baseline(), &gains, factor, 800).unwrap();
        prop_assert!(gap < 1e-9, "gap {}", gap);
    }

    #[test]
    fn section_state_round_trips(m in model(), kick in prop::collection::vec(-0.05f64..0.05, 12)) {
        let w = Walker::new(m, BodyParams::baseline(), ControlGains::baseline());
        let mut xi = SectionState::reference(m);
        for j in 0..12 {
            xi.0[j] += kick[j] * xi.0[j];
        }
        if m == ModelKind::RigidNeck {
            xi = xi.with_rigid_neck();
        }
        let back = w.section(&w.state_from_section(&xi).unwrap());
        for j in 0..12 {
            prop_assert!((back.0[j] - xi.0[j]).abs() < 1e-10, "component {}: {} vs {}", j, back.0[j], xi.0[j]);
        }
    }
}
