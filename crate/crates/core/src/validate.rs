//! Quick invariant suite run by `walkerlab validate`.

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use serde::Serialize;

use crate::body::{anthropometric_checks, gain_checks, BodyParams, ControlGains, ModelKind, SectionState};
use crate::error::Result;
use crate::linear::{LinearUpperBody, StiffnessForm};
use crate::mfpt::{run_episodes, Episode, MfptAccumulator};
use crate::sim::cart::{CartState, CartSystem};
use crate::sim::chain::Coords;
use crate::sim::slot::{BASE_A, BASE_B, HEAD, NECK, STANCE_LEG, SWING_LEG, TRUNK};
use crate::sim::{GroundSegment, IntegratorConfig, Walker, WalkerState};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Largest entrywise mismatch between a central-difference Jacobian of the
/// cart dynamics at rest and the assembled linear model, relative to
/// `max(|a|, |b|, 1e-3·max|A|)`.
pub fn linearization_mismatch(model: ModelKind, params: &BodyParams, gains: &ControlGains) -> Result<f64> {
    let ss = LinearUpperBody::build(model, params, gains, StiffnessForm::Derived)?.assemble()?;
    let cart = CartSystem::new(model, *params, *gains);
    let kept: Vec<usize> = match model {
        ModelKind::RigidNeck => vec![0, 1, 2, 3],
        ModelKind::HeadStabilized => (0..8).collect(),
    };
    let n = kept.len();
    let h = 1e-6;
    let rhs = |dir: Option<usize>, sign: f64, u: f64| -> Result<Vec<f64>> {
        let mut x = CartState::zeros();
        if let Some(j) = dir {
            x[kept[j]] = sign * h;
        }
        let (dx, _) = cart.derivative(&x, u)?;
        Ok(kept.iter().map(|&i| dx[i]).collect())
    };
    let mut numeric = DMatrix::zeros(n, n + 1);
    for j in 0..=n {
        let (p, m) = if j < n {
            (rhs(Some(j), 1.0, 0.0)?, rhs(Some(j), -1.0, 0.0)?)
        } else {
            (rhs(None, 0.0, h)?, rhs(None, 0.0, -h)?)
        };
        for i in 0..n {
            numeric[(i, j)] = (p[i] - m[i]) / (2.0 * h);
        }
    }
    let scale = 1e-3 * ss.a.amax();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..=n {
            let exact = if j < n { ss.a[(i, j)] } else { ss.b[i] };
            let fd = numeric[(i, j)];
            worst = worst.max((fd - exact).abs() / fd.abs().max(exact.abs()).max(scale));
        }
    }
    Ok(worst)
}

/// Largest per-step change of mechanical energy over an airborne,
/// unactuated arc at `dt`.
pub fn flight_energy_drift(model: ModelKind, params: &BodyParams, steps: usize, dt: f64) -> Result<f64> {
    let config = IntegratorConfig { dt_normal: dt, dt_impact: dt, ..Default::default() };
    let walker = Walker::new(model, *params, ControlGains::zero()).with_config(config);
    let mut q = Coords::zeros();
    let mut qd = Coords::zeros();
    q[BASE_B] = params.leg_rest_length;
    q[STANCE_LEG] = 0.2;
    q[SWING_LEG] = -0.25;
    q[TRUNK] = 0.05;
    q[NECK] = -0.04;
    q[HEAD] = 0.08;
    qd[BASE_A] = 1.2;
    qd[BASE_B] = 0.5;
    qd[STANCE_LEG] = -1.0;
    qd[SWING_LEG] = 1.5;
    qd[TRUNK] = 0.3;
    qd[NECK] = -0.6;
    qd[HEAD] = 0.9;
    if model == ModelKind::RigidNeck {
        for i in [NECK, HEAD] {
            q[i] = q[TRUNK];
            qd[i] = qd[TRUNK];
        }
    }
    let ground = GroundSegment { origin: Vector2::new(0.0, -1e3), slope: 0.0 };
    let mut s = WalkerState::flight(q, qd, ground);
    let mut e = walker.energy(&s).total();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        walker.integrate(&mut s)?;
        let next = walker.energy(&s).total();
        worst = worst.max((next - e).abs());
        e = next;
    }
    Ok(worst)
}

/// Largest component gap between a walk and the same walk with every mass
/// and force gain scaled by `factor`.
pub fn mass_scaling_gap(model: ModelKind, params: &BodyParams, gains: &ControlGains, factor: f64, substeps: usize) -> Result<f64> {
    let base = Walker::new(model, *params, *gains);
    let scaled = Walker::new(model, params.scale_masses(factor), gains.scale_forces(factor));
    let start = SectionState::reference(model);
    let mut a = base.state_from_section(&start)?;
    let mut b = scaled.state_from_section(&start)?;
    let mut worst: f64 = 0.0;
    for _ in 0..substeps {
        let ea = base.integrate(&mut a)?;
        let eb = scaled.integrate(&mut b)?;
        for i in 0..a.q.len() {
            worst = worst.max((a.q[i] - b.q[i]).abs()).max((a.qd[i] - b.qd[i]).abs());
        }
        if ea.fall.is_some() || eb.fall.is_some() || ea.impact != eb.impact {
            break;
        }
        if ea.impact {
            a = base.impact_exchange(&a, 0.0)?.0;
            b = scaled.impact_exchange(&b, 0.0)?.0;
        }
    }
    Ok(worst)
}

/// Two transient states plus absorption. From the cycle state the chain
/// stays with 0.9, strays with 0.08 and is absorbed with 0.02; from the
/// perturbed state it returns with 0.5, stays with 0.4 and is absorbed
/// with 0.1.
pub const SURROGATE_TRANSITIONS: [[f64; 3]; 2] = [[0.9, 0.08, 0.02], [0.5, 0.4, 0.1]];

pub fn surrogate_episode<R: Rng + ?Sized>(rng: &mut R) -> Episode {
    let mut state = 0;
    let mut n = 0;
    loop {
        n += 1;
        let u: f64 = rng.random();
        let row = SURROGATE_TRANSITIONS[state];
        if u < row[0] {
            return Episode::Returned(n);
        } else if u < row[0] + row[1] {
            state = 1;
        } else {
            return Episode::Fell(n);
        }
    }
}

/// Mean absorption time of the surrogate chain from the cycle state.
pub fn surrogate_absorption_time() -> f64 {
    let t = SURROGATE_TRANSITIONS;
    let q = Matrix2::new(t[0][0], t[0][1], t[1][0], t[1][1]);
    let inv = (Matrix2::identity() - q).try_inverse().expect("transient block is invertible");
    (inv * Vector2::new(1.0, 1.0))[0]
}

pub fn run_checks(params: &BodyParams, gains: &ControlGains, seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();
    let body = anthropometric_checks(params);
    checks.push(Check::new("anthropometry", body.is_empty(), format!("{} violations", body.len())));
    let g = gain_checks(gains);
    checks.push(Check::new("gains", g.is_empty(), format!("{} violations", g.len())));
    let fmt = |r: Result<f64>| r.map(|v| format!("{v:.3e}")).unwrap_or_else(|e| e.to_string());
    for model in ModelKind::ALL {
        let m = model.label();
        let lin = linearization_mismatch(model, params, gains);
        checks.push(Check::new(
            format!("linearization_{m}"),
            matches!(lin, Ok(v) if v < 1e-6),
            fmt(lin),
        ));
        let stable = LinearUpperBody::build(model, params, gains, StiffnessForm::Derived)
            .and_then(|l| l.assemble())
            .map(|ss| ss.is_body_hurwitz())
            .unwrap_or(false);
        checks.push(Check::new(format!("upper_body_stable_{m}"), stable, ""));
        let drift = flight_energy_drift(model, params, 2000, 1e-4);
        checks.push(Check::new(
            format!("flight_energy_drift_{m}"),
            matches!(drift, Ok(v) if v < 1e-6),
            fmt(drift),
        ));
        let gap = mass_scaling_gap(model, params, gains, 10.0, 1500);
        checks.push(Check::new(format!("mass_scaling_{m}"), matches!(gap, Ok(v) if v < 1e-9), fmt(gap)));
    }
    let episodes = run_episodes(200_000, seed, |rng| surrogate_episode(rng));
    let estimate = MfptAccumulator::from_episodes(&episodes).report(0.0).mfpt;
    let exact = surrogate_absorption_time();
    let rel = (estimate - exact).abs() / exact;
    checks.push(Check::new("mfpt_bookkeeping", rel < 0.05, format!("{estimate:.3} vs {exact:.3}")));
    checks
}
