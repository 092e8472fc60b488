//! Linearized cart and upper-body models around the upright equilibrium.
//!
//! Each segment contributes an angular-momentum balance about its mass
//! centre, a horizontal Newton balance and (except the topmost) a kinematic
//! link to the next joint. Collecting the unknown accelerations and joint
//! forces in `z` gives `L z + E ξ + F p̈ = 0` and `ξ̇ = G z + M ξ + H p̈`,
//! which eliminates to `ξ̇ = A ξ + B p̈`.

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::body::{BodyParams, ControlGains, ModelKind};
use crate::error::{Result, WalkerError};

/// Linear data of one rigid segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentLinearization {
    pub mass: f64,
    pub length: f64,
    /// Lower joint to mass centre.
    pub lower: f64,
    /// Mass centre to upper joint.
    pub upper: f64,
    /// Moment of inertia about the mass centre.
    pub inertia: f64,
    pub kp: f64,
    pub kd: f64,
}

/// Which closed form to use for the torso gravity-stiffness entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum StiffnessForm {
    /// Assembled from the segment equations.
    #[default]
    Derived,
    /// The closed form as usually printed: without `g` for the rigid body,
    /// with the total upper-body mass on the lower lever for the chain.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Output {
    HeadAngle,
    HipForce,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearUpperBody {
    pub model: ModelKind,
    pub segments: Vec<SegmentLinearization>,
    pub l: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
    pub m: DMatrix<f64>,
}

/// `ξ̇ = A ξ + B p̈` with two output channels.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_beta: DVector<f64>,
    pub d_beta: f64,
    pub c_force: DVector<f64>,
    pub d_force: f64,
    /// `−L⁻¹E` and `−L⁻¹F`: the internal accelerations and forces.
    pub z_state: DMatrix<f64>,
    pub z_input: DVector<f64>,
}

impl StateSpace {
    pub fn output(&self, which: Output) -> (&DVector<f64>, f64) {
        match which {
            Output::HeadAngle => (&self.c_beta, self.d_beta),
            Output::HipForce => (&self.c_force, self.d_force),
        }
    }

    /// `A` with the cart position and velocity rows and columns removed.
    pub fn body_block(&self) -> DMatrix<f64> {
        let n = self.a.nrows();
        self.a.view((2, 2), (n - 2, n - 2)).into_owned()
    }

    pub fn is_body_hurwitz(&self) -> bool {
        self.body_block().complex_eigenvalues().iter().all(|l| l.re < 0.0)
    }
}

/// Per-segment data for model B: torso and neck masses at mid-length, head
/// mass at the top of the head segment, all point masses.
pub fn chain_segments(params: &BodyParams, gains: &ControlGains) -> Vec<SegmentLinearization> {
    let p = params;
    let g = gains;
    vec![
        SegmentLinearization {
            mass: p.torso_mass,
            length: p.torso_length,
            lower: p.torso_length / 2.0,
            upper: p.torso_length / 2.0,
            inertia: 0.0,
            kp: g.trunk_p,
            kd: g.trunk_d,
        },
        SegmentLinearization {
            mass: p.neck_mass,
            length: p.neck_length,
            lower: p.neck_length / 2.0,
            upper: p.neck_length / 2.0,
            inertia: 0.0,
            kp: g.neck_p,
            kd: g.neck_d,
        },
        SegmentLinearization {
            mass: p.head_mass,
            length: p.head_length,
            lower: p.head_length,
            upper: 0.0,
            inertia: 0.0,
            kp: g.head_p,
            kd: g.head_d,
        },
    ]
}

/// The welded upper body of model A as a single segment.
pub fn rigid_segment(params: &BodyParams, gains: &ControlGains) -> SegmentLinearization {
    let p = params;
    let (lt, ln, lh) = (p.torso_length, p.neck_length, p.head_length);
    let m = p.upper_body_mass();
    let l1 = p.upper_body_com_height();
    let inertia = p.torso_mass * (l1 - lt / 2.0).powi(2)
        + p.neck_mass * (l1 - lt - ln / 2.0).powi(2)
        + p.head_mass * (l1 - lt - ln - lh).powi(2);
    SegmentLinearization {
        mass: m,
        length: lt + ln + lh,
        lower: l1,
        upper: lt + ln + lh - l1,
        inertia,
        kp: gains.trunk_p,
        kd: gains.trunk_d,
    }
}

/// Printed closed form of the torso gravity-stiffness entry.
pub fn printed_torso_stiffness(model: ModelKind, params: &BodyParams, gains: &ControlGains) -> f64 {
    let g = params.gravity;
    let m = params.upper_body_mass();
    match model {
        ModelKind::RigidNeck => -gains.trunk_p + params.upper_body_com_height() * m,
        ModelKind::HeadStabilized => {
            let s = chain_segments(params, gains);
            -gains.trunk_p
                + s[0].lower * m * g
                + s[0].upper * (params.neck_mass + params.head_mass) * g
        }
    }
}

/// Column of `z` holding each quantity, segment by segment:
/// `(ν̈_0, f_0, ν̈_1, p̈_1, f_1, ν̈_2, p̈_2, f_2, …)`.
fn z_angle(i: usize) -> usize {
    if i == 0 { 0 } else { 3 * i - 1 }
}

fn z_joint_accel(i: usize) -> Option<usize> {
    (i > 0).then(|| 3 * i)
}

fn z_force(i: usize) -> usize {
    if i == 0 { 1 } else { 3 * i + 1 }
}

impl LinearUpperBody {
    pub fn build(
        model: ModelKind,
        params: &BodyParams,
        gains: &ControlGains,
        form: StiffnessForm,
    ) -> Result<Self> {
        let segments = match model {
            ModelKind::RigidNeck => vec![rigid_segment(params, gains)],
            ModelKind::HeadStabilized => chain_segments(params, gains),
        };
        let mut lin = Self::from_segments(model, segments, params.gravity);
        if form == StiffnessForm::Printed {
            lin.e[(0, 2)] = printed_torso_stiffness(model, params, gains);
        }
        lin.check_l()?;
        Ok(lin)
    }

    pub fn model_a(params: &BodyParams, gains: &ControlGains) -> Result<Self> {
        Self::build(ModelKind::RigidNeck, params, gains, StiffnessForm::Derived)
    }

    pub fn model_b(params: &BodyParams, gains: &ControlGains) -> Result<Self> {
        Self::build(ModelKind::HeadStabilized, params, gains, StiffnessForm::Derived)
    }

    fn from_segments(model: ModelKind, segments: Vec<SegmentLinearization>, gravity: f64) -> Self {
        let n = segments.len();
        let nz = 3 * n - 1;
        let nx = 2 + 2 * n;
        let mut l = DMatrix::zeros(nz, nz);
        let mut e = DMatrix::zeros(nz, nx);
        let mut f = DVector::zeros(nz);
        let angle = |i: usize| 2 + 2 * i;
        let mut row = 0;
        for (i, s) in segments.iter().enumerate() {
            let above: f64 = segments[i + 1..].iter().map(|u| u.mass).sum();
            let top = i + 1 == n;
            // angular momentum about the segment's mass centre
            l[(row, z_angle(i))] = -s.inertia;
            l[(row, z_force(i))] = -s.lower;
            if !top {
                l[(row, z_force(i + 1))] = -s.upper;
                let next = &segments[i + 1];
                e[(row, angle(i + 1))] = next.kp;
                e[(row, angle(i + 1) + 1)] = next.kd;
            }
            e[(row, angle(i))] = -s.kp + gravity * (s.lower * s.mass + s.length * above);
            e[(row, angle(i) + 1)] = -s.kd;
            row += 1;
            // horizontal momentum
            l[(row, z_angle(i))] = s.mass * s.lower;
            l[(row, z_force(i))] = -1.0;
            if !top {
                l[(row, z_force(i + 1))] = 1.0;
            }
            match z_joint_accel(i) {
                Some(c) => l[(row, c)] = s.mass,
                None => f[row] = s.mass,
            }
            row += 1;
            if !top {
                // the next joint rides on this segment
                l[(row, z_joint_accel(i + 1).unwrap())] = -1.0;
                l[(row, z_angle(i))] = s.length;
                match z_joint_accel(i) {
                    Some(c) => l[(row, c)] = 1.0,
                    None => f[row] = 1.0,
                }
                row += 1;
            }
        }
        let mut g = DMatrix::zeros(nx, nz);
        let mut m = DMatrix::zeros(nx, nx);
        let mut h = DVector::zeros(nx);
        m[(0, 1)] = 1.0;
        h[1] = 1.0;
        for i in 0..n {
            m[(angle(i), angle(i) + 1)] = 1.0;
            g[(angle(i) + 1, z_angle(i))] = 1.0;
        }
        Self { model, segments, l, e, f, g, h, m }
    }

    fn check_l(&self) -> Result<()> {
        let sv = self.l.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if !(hi > 0.0 && lo / hi >= 1e-12) {
            return Err(WalkerError::LSingular(self.l.determinant().abs()));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn assemble(&self) -> Result<StateSpace> {
        let lu = self.l.clone().lu();
        let inv_e = lu.solve(&self.e).ok_or(WalkerError::LSingular(0.0))?;
        let inv_f = lu.solve(&self.f).ok_or(WalkerError::LSingular(0.0))?;
        let a = &self.m - &self.g * &inv_e;
        let b = &self.h - &self.g * &inv_f;
        let nx = self.state_dim();
        let head = 2 + 2 * (self.segments.len() - 1);
        let mut c_beta = DVector::zeros(nx);
        c_beta[head] = 1.0;
        let fr = z_force(0);
        Ok(StateSpace {
            a,
            b,
            c_beta,
            d_beta: 0.0,
            c_force: -inv_e.row(fr).transpose(),
            d_force: -inv_f[fr],
            z_state: -inv_e,
            z_input: -inv_f,
        })
    }
}

/// One point of a frequency response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BodePoint {
    pub omega: f64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
}

/// `n` log-spaced frequencies over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|k| 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

pub const DEFAULT_GRID: (f64, f64, usize) = (0.1, 1000.0, 200);

/// Complex transfer value `C (jωI − A)⁻¹ B + D`, or `None` when `jω` sits
/// on an eigenvalue of `A`.
pub fn transfer(ss: &StateSpace, which: Output, omega: f64) -> Option<Complex<f64>> {
    let n = ss.a.nrows();
    let jw = Complex::new(0.0, omega);
    let eig = ss.a.complex_eigenvalues();
    if eig.iter().any(|l| (l - jw).norm() < 1e-9) {
        return None;
    }
    let sys = DMatrix::<Complex<f64>>::from_fn(n, n, |i, j| {
        let d = if i == j { jw } else { Complex::new(0.0, 0.0) };
        d - Complex::new(ss.a[(i, j)], 0.0)
    });
    let rhs = ss.b.map(|v| Complex::new(v, 0.0));
    let x = sys.lu().solve(&rhs)?;
    let (c, d) = ss.output(which);
    let y: Complex<f64> = c.iter().zip(x.iter()).map(|(ci, xi)| xi * *ci).sum();
    Some(y + Complex::new(d, 0.0))
}

/// Bode data on `grid`; resonant points are skipped.
pub fn frequency_response(ss: &StateSpace, which: Output, grid: &[f64]) -> Vec<BodePoint> {
    grid.iter()
        .filter_map(|&omega| {
            let h = transfer(ss, which, omega)?;
            Some(BodePoint {
                omega,
                magnitude_db: 20.0 * h.norm().log10(),
                phase_deg: h.arg().to_degrees(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerResponse {
    pub t: Vec<f64>,
    /// Cart power `f_t ṗ` after the velocity step.
    pub power: Vec<f64>,
    pub integral: f64,
}

impl PowerResponse {
    /// Largest `|power|` at or after time `t0`.
    pub fn peak_after(&self, t0: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.power)
            .filter(|(t, _)| **t >= t0)
            .fold(0.0f64, |m, (_, p)| m.max(p.abs()))
    }
}

/// Cart power after an instantaneous change of cart velocity from `v_pre`
/// to `v_post`. The step is applied as the exact response of the state to
/// an acceleration impulse, `ξ(0⁺) = ξ(0⁻) + B Δv`; the instant itself is
/// excluded from the power trace.
pub fn impulse_power_response(
    ss: &StateSpace,
    v_pre: f64,
    v_post: f64,
    duration: f64,
    dt: f64,
) -> PowerResponse {
    let n = ss.a.nrows();
    let mut x = DVector::zeros(n);
    x[1] = v_pre;
    x += &ss.b * (v_post - v_pre);
    let steps = (duration / dt).round() as usize;
    let mut t = Vec::with_capacity(steps + 1);
    let mut power = Vec::with_capacity(steps + 1);
    let f = |x: &DVector<f64>| &ss.a * x;
    for k in 0..=steps {
        t.push(k as f64 * dt);
        power.push(ss.c_force.dot(&x) * x[1]);
        if k < steps {
            let k1 = f(&x);
            let k2 = f(&(&x + &k1 * (dt / 2.0)));
            let k3 = f(&(&x + &k2 * (dt / 2.0)));
            let k4 = f(&(&x + &k3 * dt));
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
    }
    let integral = power.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum();
    PowerResponse { t, power, integral }
}
