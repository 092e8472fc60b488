//! Hybrid dynamics of the five-segment walker.
//!
//! Stance phase coordinates (slot order, see [`slot`]):
//! `(φ, l_p, φ, q_sw, α, γ, β)` where the stance toe is pinned, `φ` is the
//! absolute stance-leg angle and `l_p` the telescopic stance-leg length.
//! Flight phase coordinates: `(x_hip, y_hip, φ, q_sw, α, γ, β)`.
//! All angles are absolute tilts from the vertical; leg angles give the
//! direction from toe to hip. In model A the neck and head slots mirror the
//! trunk.

use nalgebra::Vector2;
use serde::Serialize;

use super::actuation::{pd_torque, toe_force, velocity_constraint_force, ActuationOutputs};
use super::chain::{
    dir, dir_prime, kinetic_energy, passive_forces, Coords, Layout, MassSystem, PointKin, NDOF,
};
use crate::body::{
    BodyParams, ControlGains, ModelKind, SectionState, Segment, SegmentKinematics,
};
use crate::error::{Result, WalkerError};

pub mod slot {
    /// Stance: stance-leg angle φ. Flight: hip x.
    pub const BASE_A: usize = 0;
    /// Stance: stance-leg length l_p. Flight: hip y.
    pub const BASE_B: usize = 1;
    /// Stance-leg angle (a mirror of `BASE_A` during stance).
    pub const STANCE_LEG: usize = 2;
    pub const SWING_LEG: usize = 3;
    pub const TRUNK: usize = 4;
    pub const NECK: usize = 5;
    pub const HEAD: usize = 6;
}
use slot::*;

/// Any state entry beyond this magnitude is treated as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Contact {
    Stance,
    Flight,
}

/// Straight ground segment starting at `origin` with slope `slope` (rad,
/// positive uphill in the walking direction).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundSegment {
    pub origin: Vector2<f64>,
    pub slope: f64,
}

impl GroundSegment {
    pub fn flat() -> Self {
        Self { origin: Vector2::zeros(), slope: 0.0 }
    }

    pub fn normal(&self) -> Vector2<f64> {
        let (s, c) = self.slope.sin_cos();
        Vector2::new(-s, c)
    }

    /// Signed distance of `p` above the ground line.
    pub fn height_of(&self, p: &Vector2<f64>) -> f64 {
        (p - self.origin).dot(&self.normal())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scheme {
    SemiImplicitEuler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntegratorConfig {
    pub dt_normal: f64,
    pub dt_impact: f64,
    /// Time after an impact during which `dt_impact` is used.
    pub impact_window: f64,
    /// Inter-leg angle below which swing-toe ground contact is ignored.
    pub clearance_threshold: f64,
    /// A step lasting longer than this is a stall and counts as a fall.
    pub max_step_duration: f64,
    pub scheme: Scheme,
    pub push_off: PushOff,
}

/// When the departing leg delivers its toe-off push.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PushOff {
    /// First integration step after the stance exchange; the departing toe
    /// is released at the exchange.
    AtExchange,
    /// The departing toe stays on its spring-damper after the exchange
    /// (double support) and pushes at the step where it unloads.
    AtLiftoff,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            dt_normal: 1e-3,
            dt_impact: 1e-4,
            impact_window: 0.01,
            clearance_threshold: 0.1,
            max_step_duration: 3.0,
            scheme: Scheme::Rk4,
            push_off: PushOff::AtExchange,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_impact > 0.0 && self.dt_impact <= self.dt_normal) {
            return Err(WalkerError::InvalidParams(format!(
                "need 0 < dt_impact <= dt_normal, got {} and {}",
                self.dt_impact, self.dt_normal
            )));
        }
        Ok(())
    }
}

/// Full simulation state of a walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkerState {
    pub q: Coords,
    pub qd: Coords,
    pub contact: Contact,
    /// World position of the stance toe (last contact point during flight).
    pub stance_toe: Vector2<f64>,
    /// Toe of the departing leg while it is still loaded (double support).
    pub trailing_toe: Option<Vector2<f64>>,
    pub ground: GroundSegment,
    pub time: f64,
    pub step_time: f64,
    pub since_impact: f64,
    pub swing_armed: bool,
    pub swing_clear: bool,
    pub pending_impulse: bool,
}

impl WalkerState {
    /// Airborne state with both legs free. `q` and `qd` use the flight slot
    /// layout: hip position first, then the absolute segment angles.
    pub fn flight(q: Coords, qd: Coords, ground: GroundSegment) -> Self {
        Self {
            q,
            qd,
            contact: Contact::Flight,
            stance_toe: Vector2::zeros(),
            trailing_toe: None,
            ground,
            time: 0.0,
            step_time: 0.0,
            since_impact: f64::INFINITY,
            swing_armed: false,
            swing_clear: false,
            pending_impulse: false,
        }
    }

    pub fn theta(&self) -> f64 {
        self.q[STANCE_LEG] - self.q[SWING_LEG]
    }

    pub fn theta_dot(&self) -> f64 {
        self.qd[STANCE_LEG] - self.qd[SWING_LEG]
    }

    /// Forward angle of the swing leg from the vertical (positive with the
    /// toe ahead of the hip).
    pub fn swing_forward_angle(&self) -> f64 {
        -self.q[SWING_LEG]
    }

    pub fn swing_forward_rate(&self) -> f64 {
        -self.qd[SWING_LEG]
    }

    fn max_abs(&self) -> f64 {
        self.q.iter().chain(self.qd.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FallReason {
    /// A point other than a toe touched the ground.
    BodyContact,
    /// An upper-body segment tilted past horizontal.
    Tilt,
    /// The step did not finish within `max_step_duration`.
    Stalled,
}

/// What happened during one integration step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepEvents {
    pub dt: f64,
    pub impact: bool,
    pub fall: Option<FallReason>,
    /// The stance toe lost contact.
    pub takeoff: bool,
    /// The departing toe unloaded, ending double support.
    pub liftoff: bool,
    pub landing: bool,
    /// Toe-off force applied during this step, if any.
    pub toe_off_force: Option<f64>,
    /// Actuation at the start of the step.
    pub actuation: ActuationOutputs,
    /// Non-conservative power at the start of the step (impulse excluded).
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Result of one Poincaré step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepOutcome {
    /// The next pre-impact state.
    Completed(WalkerState),
    Fell { reason: FallReason, state: WalkerState },
}

/// Kinematic frames of every relevant body point.
#[derive(Debug, Clone, Copy)]
pub struct BodyFrames {
    pub hip: PointKin,
    pub stance_leg: PointKin,
    pub swing_leg: PointKin,
    pub torso: PointKin,
    pub neck: PointKin,
    pub head: PointKin,
    pub swing_toe: PointKin,
    /// Toe of the stance leg at rest length (meaningful during flight).
    pub stance_rest_toe: PointKin,
    pub torso_top: PointKin,
    pub neck_top: PointKin,
}

/// Ground contacts holding the walker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Support {
    pub contact: Contact,
    pub toe: Vector2<f64>,
    pub trailing: Option<Vector2<f64>>,
}

impl Support {
    pub fn of(s: &WalkerState) -> Self {
        Self { contact: s.contact, toe: s.stance_toe, trailing: s.trailing_toe }
    }
}

/// Evaluated equations of motion at one state.
#[derive(Debug, Clone, Copy)]
pub struct Derivative {
    pub qdd: Coords,
    pub actuation: ActuationOutputs,
    pub power: f64,
}

/// A walker model with its parameters and integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Walker {
    pub model: ModelKind,
    pub params: BodyParams,
    pub gains: ControlGains,
    pub config: IntegratorConfig,
}

impl Walker {
    pub fn new(model: ModelKind, params: BodyParams, gains: ControlGains) -> Self {
        Self { model, params, gains, config: IntegratorConfig::default() }
    }

    pub fn baseline(model: ModelKind) -> Self {
        Self::new(model, BodyParams::baseline(), ControlGains::baseline())
    }

    pub fn with_config(mut self, config: IntegratorConfig) -> Self {
        self.config = config;
        self
    }

    pub fn layout(&self, contact: Contact) -> Layout {
        let mut layout = Layout::all_free();
        if contact == Contact::Stance {
            layout = layout.mirror(STANCE_LEG, BASE_A);
        }
        if self.model == ModelKind::RigidNeck {
            layout = layout.mirror(NECK, TRUNK).mirror(HEAD, TRUNK);
        }
        layout
    }

    fn stance_index(contact: Contact) -> usize {
        match contact {
            Contact::Stance => BASE_A,
            Contact::Flight => STANCE_LEG,
        }
    }

    pub fn frames(
        &self,
        contact: Contact,
        toe: Vector2<f64>,
        q: &Coords,
        qd: &Coords,
    ) -> BodyFrames {
        let p = &self.params;
        let hip = match contact {
            Contact::Stance => PointKin::fixed(toe).telescopic_rod(0.0, BASE_B, BASE_A, q, qd),
            Contact::Flight => PointKin::free(BASE_A, BASE_B, q),
        };
        let st = Self::stance_index(contact);
        let (neck_idx, head_idx) = match self.model {
            ModelKind::RigidNeck => (TRUNK, TRUNK),
            ModelKind::HeadStabilized => (NECK, HEAD),
        };
        let torso_top = hip.rod(p.torso_length, TRUNK, q, qd);
        let neck_top = torso_top.rod(p.neck_length, neck_idx, q, qd);
        BodyFrames {
            hip,
            stance_leg: hip.rod(-p.leg_com_distance, st, q, qd),
            swing_leg: hip.rod(-p.leg_com_distance, SWING_LEG, q, qd),
            torso: hip.rod(p.torso_length / 2.0, TRUNK, q, qd),
            neck: torso_top.rod(p.neck_length / 2.0, neck_idx, q, qd),
            head: neck_top.rod(p.head_length, head_idx, q, qd),
            swing_toe: hip.rod(-p.leg_rest_length, SWING_LEG, q, qd),
            stance_rest_toe: hip.rod(-p.leg_rest_length, st, q, qd),
            torso_top,
            neck_top,
        }
    }

    fn mass_points(&self, f: &BodyFrames) -> [(f64, PointKin); 5] {
        let p = &self.params;
        [
            (p.leg_mass, f.stance_leg),
            (p.leg_mass, f.swing_leg),
            (p.torso_mass, f.torso),
            (p.neck_mass, f.neck),
            (p.head_mass, f.head),
        ]
    }

    pub fn state_frames(&self, s: &WalkerState) -> BodyFrames {
        self.frames(s.contact, s.stance_toe, &s.q, &s.qd)
    }

    pub fn actuation_at(&self, contact: Contact, q: &Coords, qd: &Coords) -> ActuationOutputs {
        let g = &self.gains;
        let theta = q[STANCE_LEG] - q[SWING_LEG];
        let theta_dot = qd[STANCE_LEG] - qd[SWING_LEG];
        let toe = match contact {
            Contact::Stance => toe_force(q[BASE_B] - self.params.leg_rest_length, qd[BASE_B], g),
            Contact::Flight => 0.0,
        };
        let (neck, head) = match self.model {
            ModelKind::RigidNeck => (0.0, 0.0),
            ModelKind::HeadStabilized => (
                pd_torque(q[NECK], qd[NECK], g.neck_p, g.neck_d, 0.0),
                pd_torque(q[HEAD], qd[HEAD], g.head_p, g.head_d, 0.0),
            ),
        };
        ActuationOutputs {
            toe_force: toe,
            trailing_force: 0.0,
            hip_torque: pd_torque(theta, theta_dot, g.hip_p, g.hip_d, g.hip_reference),
            trunk_torque: pd_torque(q[TRUNK], qd[TRUNK], g.trunk_p, g.trunk_d, 0.0),
            neck_torque: neck,
            head_torque: head,
        }
    }

    pub fn actuation(&self, s: &WalkerState) -> ActuationOutputs {
        self.actuation_at(s.contact, &s.q, &s.qd)
    }

    /// Generalized forces of the actuators.
    fn actuation_forces(&self, contact: Contact, a: &ActuationOutputs) -> Coords {
        let st = Self::stance_index(contact);
        let mut f = Coords::zeros();
        if contact == Contact::Stance {
            f[BASE_B] += a.toe_force;
        }
        f[st] += a.hip_torque;
        f[SWING_LEG] -= a.hip_torque;
        f[TRUNK] += a.trunk_torque;
        f[st] -= a.trunk_torque;
        if self.model == ModelKind::HeadStabilized {
            f[NECK] += a.neck_torque;
            f[TRUNK] -= a.neck_torque;
            f[HEAD] += a.head_torque;
            f[NECK] -= a.head_torque;
        }
        f
    }

    /// Generalized force of an axial push of magnitude `force` along the
    /// swing (departing) leg, acting through the hip.
    fn toe_off_forces(&self, hip: &PointKin, q: &Coords, force: f64) -> Coords {
        hip.jac.transpose() * (dir(q[SWING_LEG]) * force)
    }

    /// Alignment constraint of a departing leg whose toe is held at
    /// `toe`: the leg must point from its toe to the hip. Returns the
    /// constraint row, its velocity-product term, the leg length and the
    /// axial velocity.
    fn trailing_constraint(
        &self,
        hip: &PointKin,
        toe: Vector2<f64>,
        q: &Coords,
        qd: &Coords,
    ) -> (Coords, f64, f64, f64) {
        let a = hip.pos - toe;
        let u = dir(q[SWING_LEG]);
        let up = dir_prime(q[SWING_LEG]);
        let v = hip.velocity(qd);
        let length = a.dot(&u);
        let w = qd[SWING_LEG];
        let mut row = hip.jac.transpose() * up;
        row[SWING_LEG] -= length;
        let bias = hip.bias.dot(&up) - 2.0 * v.dot(&u) * w - a.dot(&up) * w * w;
        (row, bias, length, v.dot(&u))
    }

    pub fn derivative_at(
        &self,
        support: &Support,
        q: &Coords,
        qd: &Coords,
        toe_off: f64,
    ) -> Result<Derivative> {
        let contact = support.contact;
        let frames = self.frames(contact, support.toe, q, qd);
        let points = self.mass_points(&frames);
        let sys = MassSystem::new(&points, self.layout(contact))?;
        let mut actuation = self.actuation_at(contact, q, qd);
        let mut qa = self.actuation_forces(contact, &actuation);
        let mut rhs = passive_forces(&points, self.params.gravity);
        if toe_off != 0.0 {
            rhs += self.toe_off_forces(&frames.hip, q, toe_off);
        }
        let Some(trailing) = support.trailing else {
            rhs += qa;
            return Ok(Derivative { qdd: sys.solve(&rhs), actuation, power: qa.dot(qd) });
        };
        let (row, bias, length, rate) = self.trailing_constraint(&frames.hip, trailing, q, qd);
        let l0 = self.params.leg_rest_length;
        actuation.trailing_force = toe_force(length - l0, rate, &self.gains);
        qa += self.toe_off_forces(&frames.hip, q, actuation.trailing_force);
        rhs += qa;
        let free = sys.solve(&rhs);
        let response = sys.solve(&row);
        let lambda = -(row.dot(&free) + bias) / row.dot(&response);
        Ok(Derivative { qdd: free + lambda * response, actuation, power: qa.dot(qd) })
    }

    pub fn derivative(&self, s: &WalkerState) -> Result<Derivative> {
        self.derivative_at(&Support::of(s), &s.q, &s.qd, 0.0)
    }

    pub fn energy(&self, s: &WalkerState) -> Energy {
        let frames = self.state_frames(s);
        let points = self.mass_points(&frames);
        let g = self.params.gravity;
        let reference = self.params.leg_rest_length;
        Energy {
            kinetic: kinetic_energy(&points, &s.qd),
            potential: points.iter().map(|(m, p)| m * g * (p.pos.y - reference)).sum(),
        }
    }

    /// Centre-of-mass positions and velocities of head, neck, torso, stance
    /// leg and swing leg.
    pub fn forward_kinematics(&self, s: &WalkerState) -> [SegmentKinematics; 5] {
        let f = self.state_frames(s);
        let k = |segment, p: &PointKin| SegmentKinematics {
            segment,
            position: p.pos,
            velocity: p.velocity(&s.qd),
        };
        [
            k(Segment::Head, &f.head),
            k(Segment::Neck, &f.neck),
            k(Segment::Torso, &f.torso),
            k(Segment::StanceLeg, &f.stance_leg),
            k(Segment::SwingLeg, &f.swing_leg),
        ]
    }

    pub fn center_of_mass(&self, s: &WalkerState) -> (Vector2<f64>, Vector2<f64>) {
        let f = self.state_frames(s);
        let points = self.mass_points(&f);
        let m: f64 = points.iter().map(|(m, _)| m).sum();
        let pos = points.iter().map(|(mi, p)| *mi * p.pos).sum::<Vector2<f64>>() / m;
        let vel = points.iter().map(|(mi, p)| *mi * p.velocity(&s.qd)).sum::<Vector2<f64>>() / m;
        (pos, vel)
    }

    /// Axial force along the departing leg that brings its extension rate
    /// to the impulse velocity within one step of length `dt`.
    pub fn toeoff_impulse_force(&self, s: &WalkerState, dt: f64) -> Result<f64> {
        let frames = self.state_frames(s);
        let points = self.mass_points(&frames);
        let sys = MassSystem::new(&points, self.layout(s.contact))?;
        let u = dir(s.q[SWING_LEG]);
        let generalized_dir = frames.hip.jac.transpose() * u;
        let response = sys.solve(&generalized_dir);
        let compliance = generalized_dir.dot(&response);
        let inertia = if compliance > 0.0 { 1.0 / compliance } else { 0.0 };
        let actuation = self.actuation_at(s.contact, &s.q, &s.qd);
        let rhs = passive_forces(&points, self.params.gravity)
            + self.actuation_forces(s.contact, &actuation);
        let predicted = s.qd + dt * sys.solve(&rhs);
        let rate = u.dot(&(frames.hip.jac * predicted));
        velocity_constraint_force(inertia, rate, self.gains.impulse_velocity, dt)
    }

    /// Extension rate of the departing leg (distance rate between its toe
    /// and the hip).
    pub fn departing_leg_rate(&self, s: &WalkerState) -> f64 {
        let frames = self.state_frames(s);
        dir(s.q[SWING_LEG]).dot(&frames.hip.velocity(&s.qd))
    }

    fn advance(&self, s: &WalkerState, dt: f64, toe_off: f64) -> Result<(Coords, Coords, Derivative)> {
        let layout = self.layout(s.contact);
        let support = Support::of(s);
        let f = |q: &Coords, qd: &Coords| self.derivative_at(&support, q, qd, toe_off);
        let (q, qd) = (s.q, s.qd);
        let d1 = f(&q, &qd)?;
        let (mut q_new, mut qd_new) = match self.config.scheme {
            Scheme::SemiImplicitEuler => {
                let qd_new = qd + dt * d1.qdd;
                (q + dt * qd_new, qd_new)
            }
            Scheme::Rk4 => {
                let h = dt / 2.0;
                let qd2 = qd + h * d1.qdd;
                let d2 = f(&(q + h * qd), &qd2)?;
                let qd3 = qd + h * d2.qdd;
                let d3 = f(&(q + h * qd2), &qd3)?;
                let qd4 = qd + dt * d3.qdd;
                let d4 = f(&(q + dt * qd3), &qd4)?;
                (
                    q + dt / 6.0 * (qd + 2.0 * qd2 + 2.0 * qd3 + qd4),
                    qd + dt / 6.0 * (d1.qdd + 2.0 * d2.qdd + 2.0 * d3.qdd + d4.qdd),
                )
            }
        };
        layout.apply_mirrors(&mut q_new);
        layout.apply_mirrors(&mut qd_new);
        if let Some(toe) = s.trailing_toe {
            // put the departing leg back on its toe
            let hip = self.frames(s.contact, s.stance_toe, &q_new, &qd_new).hip;
            let a = hip.pos - toe;
            q_new[SWING_LEG] = a.x.atan2(a.y);
            qd_new[SWING_LEG] = hip.velocity(&qd_new).dot(&dir_prime(q_new[SWING_LEG])) / a.norm();
        }
        Ok((q_new, qd_new, d1))
    }

    fn check_divergence(&self, s: &WalkerState) -> Result<()> {
        let m = s.max_abs();
        if !m.is_finite() || m > DIVERGENCE_LIMIT {
            return Err(WalkerError::StateDivergence(format!("state magnitude {m:.3e}")));
        }
        if s.contact == Contact::Stance {
            let l0 = self.params.leg_rest_length;
            let deflection = s.q[BASE_B] - l0;
            if deflection.abs() >= 0.5 * l0 {
                return Err(WalkerError::StateDivergence(format!(
                    "stance deflection {deflection:.3} m"
                )));
            }
        }
        Ok(())
    }

    pub fn detect_fall(&self, s: &WalkerState) -> Option<FallReason> {
        let f = self.state_frames(s);
        let on_ground = [&f.hip, &f.torso_top, &f.neck_top, &f.head]
            .iter()
            .any(|p| s.ground.height_of(&p.pos) <= 0.0);
        if on_ground {
            return Some(FallReason::BodyContact);
        }
        let half_pi = std::f64::consts::FRAC_PI_2;
        if [s.q[TRUNK], s.q[NECK], s.q[HEAD]].iter().any(|a| a.abs() >= half_pi) {
            return Some(FallReason::Tilt);
        }
        if s.step_time > self.config.max_step_duration {
            return Some(FallReason::Stalled);
        }
        None
    }

    /// One fixed integration step with event detection.
    ///
    /// Impacts are detected but not resolved: the caller decides the slope
    /// of the next ground segment and calls [`Walker::impact_exchange`].
    pub fn integrate(&self, s: &mut WalkerState) -> Result<StepEvents> {
        let cfg = &self.config;
        let dt = if s.since_impact < cfg.impact_window { cfg.dt_impact } else { cfg.dt_normal };
        let mut ev = StepEvents { dt, ..Default::default() };
        let mut toe_off = 0.0;
        if s.pending_impulse {
            s.pending_impulse = false;
            if s.contact == Contact::Stance {
                // the ground can push the departing toe but not pull it
                toe_off = self.toeoff_impulse_force(s, dt)?.max(0.0);
                ev.toe_off_force = Some(toe_off);
            }
        }
        let start = *s;
        let (q, qd, d0) = self.advance(s, dt, toe_off)?;
        ev.actuation = d0.actuation;
        ev.power = d0.power;
        s.q = q;
        s.qd = qd;
        s.time += dt;
        s.step_time += dt;
        s.since_impact += dt;
        self.check_divergence(s)?;

        if let Some(toe) = s.trailing_toe {
            let hip = self.state_frames(s).hip;
            let (_, _, length, rate) = self.trailing_constraint(&hip, toe, &s.q, &s.qd);
            if toe_force(length - self.params.leg_rest_length, rate, &self.gains) <= 0.0 {
                s.trailing_toe = None;
                s.pending_impulse = true;
                ev.liftoff = true;
            }
        } else {
            match s.contact {
            Contact::Stance => {
                let l0 = self.params.leg_rest_length;
                if s.q[BASE_B] >= l0 && s.qd[BASE_B] > 0.0 {
                    self.take_off(s);
                    ev.takeoff = true;
                }
            }
            Contact::Flight => {
                let f = self.state_frames(s);
                let toe = &f.stance_rest_toe;
                if s.ground.height_of(&toe.pos) <= 0.0
                    && toe.velocity(&s.qd).dot(&s.ground.normal()) < 0.0
                {
                    self.land(s)?;
                    ev.landing = true;
                }
            }
            }
        }

        if let Some(reason) = self.detect_fall(s) {
            ev.fall = Some(reason);
            return Ok(ev);
        }

        if s.theta() >= cfg.clearance_threshold {
            s.swing_armed = true;
        }
        if s.swing_armed && s.trailing_toe.is_none() {
            let f = self.state_frames(s);
            let h = s.ground.height_of(&f.swing_toe.pos);
            if h > 0.0 {
                s.swing_clear = true;
            } else if s.swing_clear {
                ev.impact = true;
                let plain = !(ev.takeoff || ev.landing || ev.liftoff) && toe_off == 0.0;
                if plain && start.contact == s.contact {
                    self.locate_impact(&start, s, &mut ev)?;
                }
            }
        }
        Ok(ev)
    }

    /// Shortens the last substep so the swing toe lands on the ground line
    /// instead of below it.
    fn locate_impact(&self, start: &WalkerState, s: &mut WalkerState, ev: &mut StepEvents) -> Result<()> {
        let height = |q: &Coords, qd: &Coords| {
            let f = self.frames(start.contact, start.stance_toe, q, qd);
            start.ground.height_of(&f.swing_toe.pos)
        };
        if height(&start.q, &start.qd) <= 0.0 {
            return Ok(());
        }
        let (mut lo, mut hi) = (0.0, ev.dt);
        let (mut q, mut qd) = (s.q, s.qd);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (qm, qdm, _) = self.advance(start, mid, 0.0)?;
            let h = height(&qm, &qdm);
            if h > 0.0 {
                lo = mid;
            } else {
                hi = mid;
                q = qm;
                qd = qdm;
                if h > -1e-13 {
                    break;
                }
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        s.q = q;
        s.qd = qd;
        s.time = start.time + hi;
        s.step_time = start.step_time + hi;
        s.since_impact = start.since_impact + hi;
        ev.dt = hi;
        Ok(())
    }

    fn take_off(&self, s: &mut WalkerState) {
        let f = self.state_frames(s);
        let v = f.hip.velocity(&s.qd);
        let (angle, rate) = (s.q[BASE_A], s.qd[BASE_A]);
        s.q[BASE_A] = f.hip.pos.x;
        s.q[BASE_B] = f.hip.pos.y;
        s.qd[BASE_A] = v.x;
        s.qd[BASE_B] = v.y;
        s.q[STANCE_LEG] = angle;
        s.qd[STANCE_LEG] = rate;
        s.contact = Contact::Flight;
    }

    /// Inelastic no-slip touchdown of the lifted stance toe.
    fn land(&self, s: &mut WalkerState) -> Result<()> {
        let f = self.state_frames(s);
        let old_points = self.mass_points(&f);
        let toe = f.stance_rest_toe.pos;
        let mut q = s.q;
        q[BASE_A] = s.q[STANCE_LEG];
        q[BASE_B] = self.params.leg_rest_length;
        let nf = self.frames(Contact::Stance, toe, &q, &Coords::zeros());
        let new_points = self.mass_points(&nf);
        let pairs: [(usize, usize); 5] = [(0, 0), (1, 1), (2, 2), (3, 3), (4, 4)];
        let qd =
            self.project_momentum(&old_points, &new_points, &pairs, &s.qd, Contact::Stance, None)?;
        s.q = q;
        s.qd = qd;
        s.contact = Contact::Stance;
        s.stance_toe = toe;
        Ok(())
    }

    /// Post-impact velocities conserving generalized momentum along every
    /// motion the new contact allows.
    fn project_momentum(
        &self,
        old_points: &[(f64, PointKin); 5],
        new_points: &[(f64, PointKin); 5],
        pairs: &[(usize, usize); 5],
        old_qd: &Coords,
        contact: Contact,
        constraint: Option<&Coords>,
    ) -> Result<Coords> {
        let mut rhs = Coords::zeros();
        for &(new_i, old_i) in pairs {
            let (m, p_new) = &new_points[new_i];
            let v_old = old_points[old_i].1.velocity(old_qd);
            rhs += *m * p_new.jac.transpose() * v_old;
        }
        let sys = MassSystem::new(new_points, self.layout(contact))?;
        let free = sys.solve(&rhs);
        Ok(match constraint {
            Some(row) => {
                let response = sys.solve(row);
                free - row.dot(&free) / row.dot(&response) * response
            }
            None => free,
        })
    }

    /// Swing-toe impact: the swing leg becomes the stance leg with its toe
    /// pinned, the old stance leg becomes the swing leg at rest length, and
    /// a new ground segment of slope `new_slope` starts at the impact point.
    /// Returns the post-impact state and the kinetic energy lost.
    pub fn impact_exchange(&self, pre: &WalkerState, new_slope: f64) -> Result<(WalkerState, f64)> {
        let f = self.state_frames(pre);
        let old_points = self.mass_points(&f);
        let toe = f.swing_toe.pos;
        let mut q = pre.q;
        q[BASE_A] = pre.q[SWING_LEG];
        q[BASE_B] = self.params.leg_rest_length;
        q[STANCE_LEG] = pre.q[SWING_LEG];
        q[SWING_LEG] = pre.q[STANCE_LEG];
        let nf = self.frames(Contact::Stance, toe, &q, &Coords::zeros());
        let new_points = self.mass_points(&nf);
        // new stance leg was the swing leg and vice versa
        let pairs: [(usize, usize); 5] = [(0, 1), (1, 0), (2, 2), (3, 3), (4, 4)];
        let trailing = (self.config.push_off == PushOff::AtLiftoff
            && pre.contact == Contact::Stance)
            .then_some(pre.stance_toe);
        let row = trailing.map(|t| self.trailing_constraint(&nf.hip, t, &q, &Coords::zeros()).0);
        let qd = self.project_momentum(
            &old_points,
            &new_points,
            &pairs,
            &pre.qd,
            Contact::Stance,
            row.as_ref(),
        )?;
        let post = WalkerState {
            q,
            qd,
            contact: Contact::Stance,
            stance_toe: toe,
            trailing_toe: trailing,
            // anchor the next segment on the current surface so the ground
            // stays continuous whatever the toe penetration
            ground: GroundSegment {
                origin: toe - pre.ground.height_of(&toe) * pre.ground.normal(),
                slope: new_slope,
            },
            time: pre.time,
            step_time: 0.0,
            since_impact: 0.0,
            swing_armed: false,
            swing_clear: false,
            pending_impulse: pre.contact == Contact::Stance && trailing.is_none(),
        };
        let loss = self.energy(pre).kinetic - self.energy(&post).kinetic;
        Ok((post, loss))
    }

    /// Poincaré-section coordinates of a state.
    pub fn section(&self, s: &WalkerState) -> SectionState {
        let (lp, lp_dot) = match s.contact {
            Contact::Stance => (s.q[BASE_B] - self.params.leg_rest_length, s.qd[BASE_B]),
            Contact::Flight => {
                let f = self.state_frames(s);
                let u = dir(s.q[STANCE_LEG]);
                (0.0, u.dot(&f.hip.velocity(&s.qd)))
            }
        };
        SectionState([
            s.theta(),
            s.theta_dot(),
            s.qd[STANCE_LEG],
            s.ground.slope,
            s.q[TRUNK],
            s.qd[TRUNK],
            s.q[NECK],
            s.qd[NECK],
            s.q[HEAD],
            s.qd[HEAD],
            lp,
            lp_dot,
        ])
    }

    /// Rebuilds a full pre-impact state from section coordinates: stance toe
    /// at the origin, swing toe exactly on the ground segment of slope `η`.
    pub fn state_from_section(&self, xi: &SectionState) -> Result<WalkerState> {
        let xi = match self.model {
            ModelKind::RigidNeck => xi.with_rigid_neck(),
            ModelKind::HeadStabilized => *xi,
        };
        let x = &xi.0;
        if !xi.is_finite() {
            return Err(WalkerError::InvalidParams("non-finite section state".into()));
        }
        let l0 = self.params.leg_rest_length;
        let lp = l0 + x[SectionState::LP];
        let theta = x[SectionState::THETA];
        let ground = GroundSegment { origin: Vector2::zeros(), slope: x[SectionState::ETA] };
        let n = ground.normal();
        let height = |phi: f64| n.dot(&(lp * dir(phi) - l0 * dir(phi - theta)));
        let slope = |phi: f64| {
            n.dot(&(lp * super::chain::dir_prime(phi) - l0 * super::chain::dir_prime(phi - theta)))
        };
        let mut phi = theta / 2.0;
        let mut converged = false;
        for _ in 0..60 {
            let h = height(phi);
            let d = slope(phi);
            if d.abs() < 1e-14 {
                break;
            }
            let step = h / d;
            phi -= step;
            if step.abs() < 1e-14 {
                converged = true;
                break;
            }
        }
        if !converged || height(phi).abs() > 1e-10 || !(lp > 0.0) {
            return Err(WalkerError::InvalidParams(format!(
                "no pre-impact configuration for theta = {theta:.4}"
            )));
        }
        let mut q = Coords::zeros();
        let mut qd = Coords::zeros();
        q[BASE_A] = phi;
        q[BASE_B] = lp;
        q[STANCE_LEG] = phi;
        q[SWING_LEG] = phi - theta;
        q[TRUNK] = x[SectionState::ALPHA];
        q[NECK] = x[SectionState::GAMMA];
        q[HEAD] = x[SectionState::BETA];
        qd[BASE_A] = x[SectionState::PHI_DOT];
        qd[BASE_B] = x[SectionState::LP_DOT];
        qd[STANCE_LEG] = x[SectionState::PHI_DOT];
        qd[SWING_LEG] = x[SectionState::PHI_DOT] - x[SectionState::THETA_DOT];
        qd[TRUNK] = x[SectionState::ALPHA_DOT];
        qd[NECK] = x[SectionState::GAMMA_DOT];
        qd[HEAD] = x[SectionState::BETA_DOT];
        Ok(WalkerState {
            q,
            qd,
            contact: Contact::Stance,
            stance_toe: Vector2::zeros(),
            trailing_toe: None,
            ground,
            time: 0.0,
            step_time: 0.0,
            since_impact: f64::INFINITY,
            swing_armed: true,
            swing_clear: true,
            pending_impulse: false,
        })
    }

    /// Resolves the impact of `pre` onto a segment of slope `slope` and
    /// integrates until the next impact or a fall.
    pub fn simulate_step(&self, pre: &WalkerState, slope: f64) -> Result<StepOutcome> {
        self.simulate_step_observed(pre, slope, &mut |_, _| {})
    }

    /// As [`Walker::simulate_step`], calling `observer` after the impact
    /// (with default events flagged as an impact) and after every
    /// integration step.
    pub fn simulate_step_observed(
        &self,
        pre: &WalkerState,
        slope: f64,
        observer: &mut dyn FnMut(&WalkerState, &StepEvents),
    ) -> Result<StepOutcome> {
        let (mut s, _) = self.impact_exchange(pre, slope)?;
        observer(&s, &StepEvents { impact: true, ..Default::default() });
        loop {
            let ev = self.integrate(&mut s)?;
            observer(&s, &ev);
            if let Some(reason) = ev.fall {
                return Ok(StepOutcome::Fell { reason, state: s });
            }
            if ev.impact {
                return Ok(StepOutcome::Completed(s));
            }
        }
    }
}

/// Number of coordinates of the model's configuration space.
pub fn degrees_of_freedom(model: ModelKind, contact: Contact) -> usize {
    let upper = match model {
        ModelKind::RigidNeck => 1,
        ModelKind::HeadStabilized => 3,
    };
    let base = match contact {
        Contact::Stance => 3,
        Contact::Flight => 4,
    };
    debug_assert!(base + upper <= NDOF);
    base + upper
}
