//! Anthropometric parameters, actuation constants and walker state types.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::error::{Result, WalkerError};

/// Segment geometry and point masses of the planar walker.
///
/// Masses are point masses: torso and neck at their segment midpoints, the
/// head mass at the top of the head segment, each leg mass at
/// `leg_com_distance` below the hip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyParams {
    pub head_length: f64,
    pub neck_length: f64,
    pub torso_length: f64,
    pub leg_rest_length: f64,
    /// Distance from the hip to the leg point mass.
    pub leg_com_distance: f64,
    pub head_mass: f64,
    pub neck_mass: f64,
    pub torso_mass: f64,
    pub leg_mass: f64,
    pub gravity: f64,
}

impl Default for BodyParams {
    fn default() -> Self {
        Self::baseline()
    }
}

impl BodyParams {
    pub const fn baseline() -> Self {
        Self {
            head_length: 0.09,
            neck_length: 0.07,
            torso_length: 0.75,
            leg_rest_length: 1.0,
            leg_com_distance: 0.40,
            head_mass: 4.0,
            neck_mass: 1.0,
            torso_mass: 45.0,
            leg_mass: 15.0,
            gravity: 9.81,
        }
    }

    pub fn upper_body_mass(&self) -> f64 {
        self.torso_mass + self.neck_mass + self.head_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.upper_body_mass() + 2.0 * self.leg_mass
    }

    /// Standing height with the toe springs at rest.
    pub fn standing_height(&self) -> f64 {
        self.leg_rest_length + self.torso_length + self.neck_length + self.head_length
    }

    /// Height of the rigid upper-body centre of mass above the hip.
    pub fn upper_body_com_height(&self) -> f64 {
        let (lt, ln, lh) = (self.torso_length, self.neck_length, self.head_length);
        (self.torso_mass * lt / 2.0
            + self.neck_mass * (lt + ln / 2.0)
            + self.head_mass * (lt + ln + lh))
            / self.upper_body_mass()
    }

    /// Multiplies every mass by `s`.
    pub fn scale_masses(&self, s: f64) -> Self {
        Self {
            head_mass: self.head_mass * s,
            neck_mass: self.neck_mass * s,
            torso_mass: self.torso_mass * s,
            leg_mass: self.leg_mass * s,
            ..*self
        }
    }

    fn set_field(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "head_length" => &mut self.head_length,
            "neck_length" => &mut self.neck_length,
            "torso_length" => &mut self.torso_length,
            "leg_rest_length" => &mut self.leg_rest_length,
            "leg_com_distance" => &mut self.leg_com_distance,
            "head_mass" => &mut self.head_mass,
            "neck_mass" => &mut self.neck_mass,
            "torso_mass" => &mut self.torso_mass,
            "leg_mass" => &mut self.leg_mass,
            "gravity" => &mut self.gravity,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Gains and references of every actuator of the walker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    pub toe_stiffness: f64,
    pub toe_damping: f64,
    /// Target extension rate of the departing leg at toe-off.
    pub impulse_velocity: f64,
    pub hip_p: f64,
    pub hip_reference: f64,
    pub hip_d: f64,
    pub trunk_p: f64,
    pub trunk_d: f64,
    pub neck_p: f64,
    pub neck_d: f64,
    pub head_p: f64,
    pub head_d: f64,
}

impl Default for ControlGains {
    fn default() -> Self {
        Self::baseline()
    }
}

impl ControlGains {
    pub const fn baseline() -> Self {
        Self {
            toe_stiffness: 50_000.0,
            toe_damping: 2_000.0,
            impulse_velocity: 1.0,
            hip_p: 10.0,
            hip_reference: 0.3,
            hip_d: 1.5,
            trunk_p: 300.0,
            trunk_d: 150.0,
            neck_p: 50.0,
            neck_d: 0.6,
            head_p: 150.0,
            head_d: 1.0,
        }
    }

    /// Every gain set to zero (the impulse velocity included).
    pub const fn zero() -> Self {
        Self {
            toe_stiffness: 0.0,
            toe_damping: 0.0,
            impulse_velocity: 0.0,
            hip_p: 0.0,
            hip_reference: 0.0,
            hip_d: 0.0,
            trunk_p: 0.0,
            trunk_d: 0.0,
            neck_p: 0.0,
            neck_d: 0.0,
            head_p: 0.0,
            head_d: 0.0,
        }
    }

    /// Multiplies every force and torque gain by `s`. The impulse velocity
    /// and hip reference are kinematic and stay untouched.
    pub fn scale_forces(&self, s: f64) -> Self {
        Self {
            toe_stiffness: self.toe_stiffness * s,
            toe_damping: self.toe_damping * s,
            hip_p: self.hip_p * s,
            hip_d: self.hip_d * s,
            trunk_p: self.trunk_p * s,
            trunk_d: self.trunk_d * s,
            neck_p: self.neck_p * s,
            neck_d: self.neck_d * s,
            head_p: self.head_p * s,
            head_d: self.head_d * s,
            ..*self
        }
    }

    fn set_field(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "toe_stiffness" => &mut self.toe_stiffness,
            "toe_damping" => &mut self.toe_damping,
            "impulse_velocity" => &mut self.impulse_velocity,
            "hip_p" => &mut self.hip_p,
            "hip_reference" => &mut self.hip_reference,
            "hip_d" => &mut self.hip_d,
            "trunk_p" => &mut self.trunk_p,
            "trunk_d" => &mut self.trunk_d,
            "neck_p" => &mut self.neck_p,
            "neck_d" => &mut self.neck_d,
            "head_p" => &mut self.head_p,
            "head_d" => &mut self.head_d,
            _ => return false,
        };
        *slot = value;
        true
    }
}

/// Rigid neck (torso, neck and head welded) or actively stabilized head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    /// Model A: `alpha = gamma = beta`.
    RigidNeck,
    /// Model B: PD-actuated neck and head joints.
    HeadStabilized,
}

impl ModelKind {
    pub const ALL: [ModelKind; 2] = [ModelKind::RigidNeck, ModelKind::HeadStabilized];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::RigidNeck => "a",
            ModelKind::HeadStabilized => "b",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::RigidNeck => write!(f, "model A (rigid neck)"),
            ModelKind::HeadStabilized => write!(f, "model B (head stabilized)"),
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = WalkerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "rigid" | "rigid-neck" => Ok(ModelKind::RigidNeck),
            "b" | "head" | "head-stabilized" => Ok(ModelKind::HeadStabilized),
            other => Err(WalkerError::Config(format!("unknown model `{other}`"))),
        }
    }
}

/// The twelve components of the Poincaré-section state, in reporting order.
pub const SECTION_COMPONENTS: [&str; 12] = [
    "theta", "theta_dot", "phi_dot", "eta", "alpha", "alpha_dot", "gamma", "gamma_dot", "beta",
    "beta_dot", "lp", "lp_dot",
];

/// Pre-impact state `(θ, θ̇, φ̇, η, α, α̇, γ, γ̇, β, β̇, l_p − l_p0, l̇_p)`.
///
/// `θ` is the inter-leg angle (stance minus swing, positive with the swing
/// leg ahead), `φ̇` the absolute rate of the stance leg, `η` the slope of
/// the ground segment under the stance toe. `α`, `γ`, `β` are the absolute
/// tilts of torso, neck and head from the vertical, positive leaning forward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionState(pub [f64; 12]);

impl SectionState {
    pub const THETA: usize = 0;
    pub const THETA_DOT: usize = 1;
    pub const PHI_DOT: usize = 2;
    pub const ETA: usize = 3;
    pub const ALPHA: usize = 4;
    pub const ALPHA_DOT: usize = 5;
    pub const GAMMA: usize = 6;
    pub const GAMMA_DOT: usize = 7;
    pub const BETA: usize = 8;
    pub const BETA_DOT: usize = 9;
    pub const LP: usize = 10;
    pub const LP_DOT: usize = 11;

    /// Limit-cycle values reported for the reference walkers.
    pub fn reference(model: ModelKind) -> Self {
        match model {
            ModelKind::RigidNeck => Self([
                0.623, -0.264, 1.58, 0.0, -0.0288, -0.283, -0.0288, -0.283, -0.0288, -0.283,
                -0.0112, 0.0153,
            ]),
            ModelKind::HeadStabilized => Self([
                0.517, 1.07, 1.32, 0.0, -0.0289, -0.277, -0.026, -0.066, -0.00449, -0.0132,
                -0.0128, 0.0044,
            ]),
        }
    }

    pub fn as_vector(&self) -> nalgebra::SVector<f64, 12> {
        nalgebra::SVector::from(self.0)
    }

    pub fn from_vector(v: &nalgebra::SVector<f64, 12>) -> Self {
        let mut out = [0.0; 12];
        out.copy_from_slice(v.as_slice());
        Self(out)
    }

    /// Copies the trunk components into the neck and head slots.
    pub fn with_rigid_neck(mut self) -> Self {
        self.0[Self::GAMMA] = self.0[Self::ALPHA];
        self.0[Self::BETA] = self.0[Self::ALPHA];
        self.0[Self::GAMMA_DOT] = self.0[Self::ALPHA_DOT];
        self.0[Self::BETA_DOT] = self.0[Self::ALPHA_DOT];
        self
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

/// One of the five point-mass segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Head,
    Neck,
    Torso,
    StanceLeg,
    SwingLeg,
}

/// Centre-of-mass position and velocity of one segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentKinematics {
    pub segment: Segment,
    pub position: Vector2<f64>,
    pub velocity: Vector2<f64>,
}

/// A violated anthropometric invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks the invariants of `BodyParams` and returns every violation found.
pub fn anthropometric_checks(params: &BodyParams) -> Vec<Violation> {
    let mut out = Vec::new();
    let lengths = [
        ("head_length", params.head_length),
        ("neck_length", params.neck_length),
        ("torso_length", params.torso_length),
        ("leg_rest_length", params.leg_rest_length),
        ("leg_com_distance", params.leg_com_distance),
    ];
    for (field, v) in lengths {
        if !(v > 0.0) || !v.is_finite() {
            out.push(Violation { field, message: format!("non-positive length {v}") });
        }
    }
    let masses = [
        ("head_mass", params.head_mass),
        ("neck_mass", params.neck_mass),
        ("torso_mass", params.torso_mass),
        ("leg_mass", params.leg_mass),
    ];
    for (field, v) in masses {
        if !(v > 0.0) || !v.is_finite() {
            out.push(Violation { field, message: format!("non-positive mass {v}") });
        }
    }
    if !(params.gravity > 0.0) {
        out.push(Violation {
            field: "gravity",
            message: format!("non-positive gravity {}", params.gravity),
        });
    }
    if params.leg_com_distance >= params.leg_rest_length {
        out.push(Violation {
            field: "leg_com_distance",
            message: format!(
                "leg CoM beyond toe ({} >= {})",
                params.leg_com_distance, params.leg_rest_length
            ),
        });
    }
    out
}

/// Checks that every gain is finite and non-negative.
pub fn gain_checks(gains: &ControlGains) -> Vec<Violation> {
    let fields = [
        ("toe_stiffness", gains.toe_stiffness),
        ("toe_damping", gains.toe_damping),
        ("impulse_velocity", gains.impulse_velocity),
        ("hip_p", gains.hip_p),
        ("hip_d", gains.hip_d),
        ("trunk_p", gains.trunk_p),
        ("trunk_d", gains.trunk_d),
        ("neck_p", gains.neck_p),
        ("neck_d", gains.neck_d),
        ("head_p", gains.head_p),
        ("head_d", gains.head_d),
    ];
    fields
        .into_iter()
        .filter(|(_, v)| !(*v >= 0.0) || !v.is_finite())
        .map(|(field, v)| Violation { field, message: format!("negative gain {v}") })
        .collect()
}

/// Body and gain parameters resolved from a key-value file.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WalkerConfig {
    pub body: BodyParams,
    pub gains: ControlGains,
}

impl WalkerConfig {
    /// Parses `key = value` lines. Keys are the field names of
    /// [`BodyParams`] and [`ControlGains`]; missing keys keep their baseline
    /// value and unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table =
            text.parse().map_err(|e: toml::de::Error| WalkerError::Config(e.to_string()))?;
        let mut cfg = WalkerConfig::default();
        for (key, value) in &table {
            let v = match value {
                toml::Value::Float(f) => *f,
                toml::Value::Integer(i) => *i as f64,
                other => {
                    return Err(WalkerError::Config(format!(
                        "key `{key}` expects a number, got `{other}`"
                    )))
                }
            };
            if !cfg.body.set_field(key, v) && !cfg.gains.set_field(key, v) {
                return Err(WalkerError::Config(format!("unknown key `{key}`")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}
