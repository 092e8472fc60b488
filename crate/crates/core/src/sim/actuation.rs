//! Actuation laws: toe spring-damper, PD joint torques and the toe-off
//! velocity constraint.

use crate::body::ControlGains;
use crate::error::{Result, WalkerError};

/// Apparent inertias below this are treated as degenerate.
pub const MIN_APPARENT_INERTIA: f64 = 1e-9;

/// Instantaneous forces and torques produced by the actuators.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActuationOutputs {
    /// Axial stance-leg force (never negative).
    pub toe_force: f64,
    /// Axial force of the departing leg during double support.
    pub trailing_force: f64,
    pub hip_torque: f64,
    pub trunk_torque: f64,
    pub neck_torque: f64,
    pub head_torque: f64,
}

/// Unilateral toe spring-damper force along the stance leg.
///
/// `deflection` is `l_p − l_p0`.
#[inline]
pub fn toe_force(deflection: f64, rate: f64, gains: &ControlGains) -> f64 {
    (-gains.toe_stiffness * deflection - gains.toe_damping * rate).max(0.0)
}

#[inline]
pub fn pd_torque(angle: f64, rate: f64, kp: f64, kd: f64, reference: f64) -> f64 {
    -kp * (angle - reference) - kd * rate
}

/// Force that takes a coordinate with the given apparent inertia from
/// `current_rate` to `target_rate` in one step of length `dt`.
pub fn velocity_constraint_force(
    apparent_inertia: f64,
    current_rate: f64,
    target_rate: f64,
    dt: f64,
) -> Result<f64> {
    if !(apparent_inertia >= MIN_APPARENT_INERTIA) {
        return Err(WalkerError::ImpulseSingularity(apparent_inertia));
    }
    Ok(apparent_inertia * (target_rate - current_rate) / dt)
}
