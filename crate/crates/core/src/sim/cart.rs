//! Upper body (torso, neck, head) riding on a horizontally driven cart.
//!
//! The hip point follows the cart exactly, so the only free coordinates are
//! the three absolute tilts. The state layout is
//! `(p, ṗ, α, α̇, γ, γ̇, β, β̇)` for both models; in model A the neck and head
//! entries copy the trunk.

use nalgebra::{SVector, Vector2};

use super::actuation::pd_torque;
use super::chain::{passive_forces, Coords, Layout, MassSystem, PointKin};
use super::walker::slot::{HEAD, NECK, STANCE_LEG, SWING_LEG, TRUNK, BASE_A, BASE_B};
use crate::body::{BodyParams, ControlGains, ModelKind};
use crate::error::Result;

pub type CartState = SVector<f64, 8>;

/// Indices into [`CartState`].
pub mod cart_slot {
    pub const P: usize = 0;
    pub const P_DOT: usize = 1;
    pub const ALPHA: usize = 2;
    pub const ALPHA_DOT: usize = 3;
    pub const GAMMA: usize = 4;
    pub const GAMMA_DOT: usize = 5;
    pub const BETA: usize = 6;
    pub const BETA_DOT: usize = 7;
}
use cart_slot::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartSample {
    pub t: f64,
    pub state: CartState,
    /// Horizontal force the cart exerts on the upper body.
    pub hip_force: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CartSystem {
    pub model: ModelKind,
    pub params: BodyParams,
    pub gains: ControlGains,
}

impl CartSystem {
    pub fn new(model: ModelKind, params: BodyParams, gains: ControlGains) -> Self {
        Self { model, params, gains }
    }

    fn layout(&self) -> Layout {
        let l = Layout::all_free().lock(BASE_A).lock(BASE_B).lock(STANCE_LEG).lock(SWING_LEG);
        match self.model {
            ModelKind::RigidNeck => l.mirror(NECK, TRUNK).mirror(HEAD, TRUNK),
            ModelKind::HeadStabilized => l,
        }
    }

    /// Copies trunk entries into the neck and head entries for model A.
    pub fn normalize(&self, x: &CartState) -> CartState {
        let mut x = *x;
        if self.model == ModelKind::RigidNeck {
            x[GAMMA] = x[ALPHA];
            x[BETA] = x[ALPHA];
            x[GAMMA_DOT] = x[ALPHA_DOT];
            x[BETA_DOT] = x[ALPHA_DOT];
        }
        x
    }

    fn points(&self, x: &CartState, accel: f64) -> [(f64, PointKin); 3] {
        let p = &self.params;
        let (q, qd) = coords(x);
        let hip = PointKin::prescribed(Vector2::new(x[P], 0.0), Vector2::new(accel, 0.0));
        // a welded body hangs every rod on the trunk coordinate
        let (neck, head) = match self.model {
            ModelKind::RigidNeck => (TRUNK, TRUNK),
            ModelKind::HeadStabilized => (NECK, HEAD),
        };
        let torso_top = hip.rod(p.torso_length, TRUNK, &q, &qd);
        let neck_top = torso_top.rod(p.neck_length, neck, &q, &qd);
        [
            (p.torso_mass, hip.rod(p.torso_length / 2.0, TRUNK, &q, &qd)),
            (p.neck_mass, torso_top.rod(p.neck_length / 2.0, neck, &q, &qd)),
            (p.head_mass, neck_top.rod(p.head_length, head, &q, &qd)),
        ]
    }

    /// Time derivative of the state under cart acceleration `accel`, plus
    /// the horizontal hip force.
    pub fn derivative(&self, x: &CartState, accel: f64) -> Result<(CartState, f64)> {
        let x = self.normalize(x);
        let points = self.points(&x, accel);
        let sys = MassSystem::new(&points, self.layout())?;
        let g = &self.gains;
        let (q, qd) = coords(&x);
        let mut f = passive_forces(&points, self.params.gravity);
        let trunk = pd_torque(q[TRUNK], qd[TRUNK], g.trunk_p, g.trunk_d, 0.0);
        f[TRUNK] += trunk;
        if self.model == ModelKind::HeadStabilized {
            let neck = pd_torque(q[NECK], qd[NECK], g.neck_p, g.neck_d, 0.0);
            let head = pd_torque(q[HEAD], qd[HEAD], g.head_p, g.head_d, 0.0);
            f[NECK] += neck - head;
            f[TRUNK] -= neck;
            f[HEAD] += head;
        }
        let qdd = sys.solve(&f);
        let hip_force: f64 = points.iter().map(|(m, p)| m * p.acceleration(&qdd).x).sum();
        let mut dx = CartState::zeros();
        dx[P] = x[P_DOT];
        dx[P_DOT] = accel;
        dx[ALPHA] = x[ALPHA_DOT];
        dx[ALPHA_DOT] = qdd[TRUNK];
        dx[GAMMA] = x[GAMMA_DOT];
        dx[GAMMA_DOT] = qdd[NECK];
        dx[BETA] = x[BETA_DOT];
        dx[BETA_DOT] = qdd[HEAD];
        Ok((dx, hip_force))
    }

    /// Integrates the cart system with classical RK4 at step `dt`.
    pub fn simulate(
        &self,
        initial: &CartState,
        accel: &dyn Fn(f64) -> f64,
        duration: f64,
        dt: f64,
    ) -> Result<Vec<CartSample>> {
        let steps = (duration / dt).round() as usize;
        let mut x = self.normalize(initial);
        let mut out = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 * dt;
            let (k1, hip_force) = self.derivative(&x, accel(t))?;
            out.push(CartSample { t, state: x, hip_force });
            if k == steps {
                break;
            }
            let h = dt / 2.0;
            let (k2, _) = self.derivative(&(x + h * k1), accel(t + h))?;
            let (k3, _) = self.derivative(&(x + h * k2), accel(t + h))?;
            let (k4, _) = self.derivative(&(x + dt * k3), accel(t + dt))?;
            x = self.normalize(&(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)));
        }
        Ok(out)
    }
}

fn coords(x: &CartState) -> (Coords, Coords) {
    let mut q = Coords::zeros();
    let mut qd = Coords::zeros();
    q[TRUNK] = x[ALPHA];
    q[NECK] = x[GAMMA];
    q[HEAD] = x[BETA];
    qd[TRUNK] = x[ALPHA_DOT];
    qd[NECK] = x[GAMMA_DOT];
    qd[HEAD] = x[BETA_DOT];
    (q, qd)
}
