mod common;

use nalgebra::Vector2;
use walkerlab_core::body::Segment;
use walkerlab_core::gait::{run_flat, trajectory, Phase};
use walkerlab_core::sim::chain::Coords;
use walkerlab_core::sim::slot::{BASE_A, BASE_B, HEAD, NECK, STANCE_LEG, SWING_LEG, TRUNK};
use walkerlab_core::sim::{FallReason, GroundSegment, StepOutcome, Walker, WalkerState};
use walkerlab_core::{BodyParams, ControlGains, ModelKind, SectionState};

use common::{gait_walker, quick_cycle};

fn segment_mass(p: &BodyParams, s: Segment) -> f64 {
    match s {
        Segment::Head => p.head_mass,
        Segment::Neck => p.neck_mass,
        Segment::Torso => p.torso_mass,
        Segment::StanceLeg | Segment::SwingLeg => p.leg_mass,
    }
}

/// Angular momentum about `pivot`, summed from point-mass kinematics.
fn angular_momentum(w: &Walker, s: &WalkerState, pivot: Vector2<f64>) -> f64 {
    w.forward_kinematics(s)
        .iter()
        .map(|k| {
            let r = k.position - pivot;
            segment_mass(&w.params, k.segment) * (r.x * k.velocity.y - r.y * k.velocity.x)
        })
        .sum()
}

fn airborne(model: ModelKind) -> WalkerState {
    let mut q = Coords::zeros();
    let mut qd = Coords::zeros();
    q[BASE_B] = 1.0;
    q[STANCE_LEG] = 0.3;
    q[SWING_LEG] = -0.2;
    q[TRUNK] = 0.1;
    q[NECK] = 0.2;
    q[HEAD] = -0.1;
    qd[BASE_A] = 1.0;
    qd[BASE_B] = 2.0;
    qd[STANCE_LEG] = 2.0;
    qd[SWING_LEG] = -1.0;
    qd[TRUNK] = 0.5;
    qd[NECK] = -1.0;
    qd[HEAD] = 1.5;
    if model == ModelKind::RigidNeck {
        for i in [NECK, HEAD] {
            q[i] = q[TRUNK];
            qd[i] = qd[TRUNK];
        }
    }
    WalkerState::flight(q, qd, GroundSegment { origin: Vector2::new(0.0, -1e3), slope: 0.0 })
}

#[test]
fn airborne_center_of_mass_follows_a_parabola() {
    for model in ModelKind::ALL {
        let w = Walker::new(model, BodyParams::baseline(), ControlGains::zero());
        let mut s = airborne(model);
        let (p0, v0) = w.center_of_mass(&s);
        let g = w.params.gravity;
        for _ in 0..500 {
            w.integrate(&mut s).unwrap();
        }
        let t = s.time;
        let (p, v) = w.center_of_mass(&s);
        let expected = p0 + v0 * t - Vector2::new(0.0, 0.5 * g * t * t);
        assert!((p - expected).norm() < 1e-9, "{model:?}: {:?} vs {:?}", p, expected);
        assert!((v - (v0 - Vector2::new(0.0, g * t))).norm() < 1e-9);
    }
}

#[test]
fn airborne_angular_momentum_about_center_of_mass_is_constant() {
    for model in ModelKind::ALL {
        let w = Walker::new(model, BodyParams::baseline(), ControlGains::zero());
        let mut s = airborne(model);
        let l0 = angular_momentum(&w, &s, w.center_of_mass(&s).0);
        for _ in 0..500 {
            w.integrate(&mut s).unwrap();
        }
        let l = angular_momentum(&w, &s, w.center_of_mass(&s).0);
        assert!((l - l0).abs() < 1e-9 * l0.abs().max(1.0), "{model:?}: {l0} -> {l}");
    }
}

#[test]
fn impact_keeps_configuration_and_momentum_about_the_new_toe() {
    for model in ModelKind::ALL {
        let w = gait_walker(model);
        let pre = w.state_from_section(&SectionState::reference(model)).unwrap();
        let toe = w.state_frames(&pre).swing_toe.pos;
        let (post, loss) = w.impact_exchange(&pre, 0.0).unwrap();

        // the legs swap roles, every mass stays where it was
        let before = w.forward_kinematics(&pre);
        let after = w.forward_kinematics(&post);
        let find = |ks: &[walkerlab_core::body::SegmentKinematics; 5], seg| {
            ks.iter().find(|k| k.segment == seg).unwrap().position
        };
        for (a, b) in [
            (Segment::StanceLeg, Segment::SwingLeg),
            (Segment::SwingLeg, Segment::StanceLeg),
            (Segment::Torso, Segment::Torso),
            (Segment::Neck, Segment::Neck),
            (Segment::Head, Segment::Head),
        ] {
            assert!((find(&before, a) - find(&after, b)).norm() < 1e-12);
        }
        assert!((post.stance_toe - toe).norm() < 1e-15);

        let l_pre = angular_momentum(&w, &pre, toe);
        let l_post = angular_momentum(&w, &post, toe);
        assert!((l_pre - l_post).abs() < 1e-9 * l_pre.abs(), "{model:?}: {l_pre} vs {l_post}");
        assert!(loss >= 0.0);
        let ke = |s| w.energy(s).kinetic;
        assert!((ke(&pre) - ke(&post) - loss).abs() < 1e-12);
    }
}

#[test]
fn section_rebuild_round_trips_on_a_walked_state() {
    let w = gait_walker(ModelKind::HeadStabilized);
    let start = w.state_from_section(&SectionState::reference(w.model)).unwrap();
    let run = run_flat(&w, &start, 5, 5);
    assert_eq!(run.completed, 5);
    let s = run.last;
    let rebuilt = w.state_from_section(&w.section(&s)).unwrap();
    for i in 0..s.q.len() {
        if i == BASE_A || i == BASE_B {
            continue;
        }
        assert!((s.q[i] - rebuilt.q[i]).abs() < 1e-10, "q[{i}]");
        assert!((s.qd[i] - rebuilt.qd[i]).abs() < 1e-10, "qd[{i}]");
    }
    let e = |x: &WalkerState| w.energy(x).kinetic;
    assert!((e(&s) - e(&rebuilt)).abs() < 1e-9);
}

#[test]
fn power_matches_energy_rate_between_impulses() {
    for model in ModelKind::ALL {
        let w = gait_walker(model);
        let cycle = quick_cycle(&w);
        let traj = trajectory(&w, &cycle.state(&w).unwrap(), 1, &mut || 0.0).unwrap();
        assert!(traj.fall.is_none());
        let mut err2 = 0.0;
        let mut ref2 = 0.0;
        for pair in traj.rows.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.impulsive || b.phase != Phase::Swing || a.phase == Phase::Impact {
                continue;
            }
            let dt = b.t - a.t;
            let rate = (b.energy - a.energy) / dt;
            let mean_power = 0.5 * (a.power + b.power);
            err2 += (rate - mean_power).powi(2);
            ref2 += mean_power.powi(2);
        }
        let rel = (err2 / ref2).sqrt();
        assert!(rel < 0.01, "{model:?}: relative RMS {rel}");
    }
}

#[test]
fn scaling_every_mass_and_force_leaves_the_walk_unchanged() {
    for model in ModelKind::ALL {
        let base = gait_walker(model);
        let heavy = Walker::new(model, base.params.scale_masses(7.5), base.gains.scale_forces(7.5));
        let mut a = base.state_from_section(&SectionState::reference(model)).unwrap();
        let mut b = heavy.state_from_section(&SectionState::reference(model)).unwrap();
        for _ in 0..5 {
            match (base.simulate_step(&a, 0.0).unwrap(), heavy.simulate_step(&b, 0.0).unwrap()) {
                (StepOutcome::Completed(x), StepOutcome::Completed(y)) => {
                    a = x;
                    b = y;
                }
                (StepOutcome::Fell { reason: r1, .. }, StepOutcome::Fell { reason: r2, .. }) => {
                    assert_eq!(r1, r2);
                    break;
                }
                _ => panic!("{model:?}: scaled walker diverged in outcome"),
            }
            let (xa, xb) = (base.section(&a), heavy.section(&b));
            for j in 0..12 {
                assert!((xa.0[j] - xb.0[j]).abs() < 1e-9, "{model:?} component {j}");
            }
            assert!((a.time - b.time).abs() < 1e-12);
        }
    }
}

#[test]
fn reruns_are_bitwise_identical() {
    let w = gait_walker(ModelKind::HeadStabilized);
    let start = w.state_from_section(&SectionState::reference(w.model)).unwrap();
    let one = run_flat(&w, &start, 20, 0);
    let two = run_flat(&w, &start, 20, 0);
    assert_eq!(one, two);
}

#[test]
fn walker_without_joint_control_falls_in_the_first_step() {
    let b = ControlGains::baseline();
    // the leg spring stays, every joint controller goes
    let gains = ControlGains {
        toe_stiffness: b.toe_stiffness,
        toe_damping: b.toe_damping,
        impulse_velocity: b.impulse_velocity,
        ..ControlGains::zero()
    };
    for model in ModelKind::ALL {
        let w = Walker::new(model, BodyParams::baseline(), gains);
        let s = w.state_from_section(&SectionState::reference(model)).unwrap();
        assert!(matches!(w.simulate_step(&s, 0.0).unwrap(), StepOutcome::Fell { .. }));
    }
}

#[test]
fn baseline_gains_do_not_sustain_the_reference_gait() {
    for model in ModelKind::ALL {
        let w = Walker::baseline(model);
        let s = w.state_from_section(&SectionState::reference(model)).unwrap();
        let run = run_flat(&w, &s, 100, 100);
        assert!(run.fall.is_some() && run.completed < 100, "{model:?}");
    }
}

#[test]
fn tilted_trunk_is_a_fall() {
    let w = gait_walker(ModelKind::HeadStabilized);
    let mut s = w.state_from_section(&SectionState::reference(w.model)).unwrap();
    assert_eq!(w.detect_fall(&s), None);
    s.q[TRUNK] = 1.6;
    assert_eq!(w.detect_fall(&s), Some(FallReason::Tilt));
    s.q[TRUNK] = 0.0;
    s.q[HEAD] = -1.6;
    assert_eq!(w.detect_fall(&s), Some(FallReason::Tilt));
}

#[test]
fn swing_toe_starts_on_the_ground() {
    for model in ModelKind::ALL {
        let w = gait_walker(model);
        for eta in [-0.05, 0.0, 0.04] {
            let mut xi = SectionState::reference(model);
            xi.0[SectionState::ETA] = eta;
            let s = w.state_from_section(&xi).unwrap();
            let toe = w.state_frames(&s).swing_toe.pos;
            assert!(s.ground.height_of(&toe).abs() < 1e-12);
            assert_eq!(s.ground.slope, eta);
        }
    }
}
