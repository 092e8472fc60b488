//! Poincaré-section analysis: limit-cycle search, the limit kernel used to
//! decide when a perturbed walker is back on its cycle, and per-cycle
//! energy and swing-leg traces.

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::body::{ModelKind, SectionState};
use crate::error::{Result, WalkerError};
use crate::exec::map_indexed;
use crate::sim::{FallReason, StepEvents, StepOutcome, Walker, WalkerState};

pub type SectionVector = SVector<f64, 12>;

pub const DEFAULT_KERNEL_THRESHOLD: f64 = 1000.0;
/// Per-component standard deviation floor of the kernel covariance, as a
/// fraction of the magnitude of the cycle's fixed point.
pub const DEFAULT_KERNEL_RESOLUTION: f64 = 1e-3;

/// Settings of the flat-ground limit-cycle search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleSearch {
    pub samples: usize,
    pub steps: usize,
    /// First step whose pre-impact state is recorded.
    pub record_from: usize,
    /// Half-width of the sampling box as a fraction of each reference
    /// component.
    pub box_fraction: f64,
    pub seed: u64,
}

impl Default for CycleSearch {
    fn default() -> Self {
        Self { samples: 64, steps: 500, record_from: 400, box_fraction: 0.5, seed: 0 }
    }
}

/// Uniform draws in a box of `±fraction·|c|` around every component `c` of
/// `center`. Each sample has its own RNG stream.
pub fn sample_initial_states(
    model: ModelKind,
    center: &SectionState,
    fraction: f64,
    n: usize,
    seed: u64,
) -> Vec<SectionState> {
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = *center;
            for v in x.0.iter_mut() {
                let half = fraction * v.abs();
                if half > 0.0 {
                    *v += rng.random_range(-half..=half);
                }
            }
            match model {
                ModelKind::RigidNeck => x.with_rigid_neck(),
                ModelKind::HeadStabilized => x,
            }
        })
        .collect()
}

/// Outcome of a run of consecutive flat-ground steps.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatRun {
    pub completed: usize,
    /// Pre-impact section states of steps `record_from..`.
    pub recorded: Vec<SectionState>,
    pub step_times: Vec<f64>,
    pub fall: Option<FallReason>,
    /// Reason code of a numerical failure, if the run ended on one.
    pub error: Option<&'static str>,
    pub last: WalkerState,
}

impl FlatRun {
    pub fn survived(&self, steps: usize) -> bool {
        self.completed >= steps
    }
}

/// Walks up to `steps` flat-ground steps from a pre-impact state.
pub fn run_flat(walker: &Walker, start: &WalkerState, steps: usize, record_from: usize) -> FlatRun {
    let mut s = *start;
    let mut run = FlatRun {
        completed: 0,
        recorded: Vec::new(),
        step_times: Vec::new(),
        fall: None,
        error: None,
        last: s,
    };
    while run.completed < steps {
        match walker.simulate_step(&s, 0.0) {
            Ok(StepOutcome::Completed(next)) => {
                s = next;
                run.completed += 1;
                if run.completed >= record_from {
                    run.recorded.push(walker.section(&s));
                    run.step_times.push(s.step_time);
                }
            }
            Ok(StepOutcome::Fell { reason, state }) => {
                run.fall = Some(reason);
                s = state;
                break;
            }
            Err(e) => {
                run.error = Some(e.code());
                break;
            }
        }
    }
    run.last = s;
    run
}

/// Fixed point of the flat-ground step map, approximated by the mean of
/// late pre-impact states.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitCycle {
    pub model: ModelKind,
    pub fixed_point: SectionState,
    pub samples: Vec<SectionState>,
    pub mean_step_time: f64,
    /// Initial states that produced recorded samples.
    pub survivors: usize,
    pub attempted: usize,
}

impl LimitCycle {
    pub fn state(&self, walker: &Walker) -> Result<WalkerState> {
        walker.state_from_section(&self.fixed_point)
    }
}

/// Runs every initial state for `steps` flat-ground steps and averages the
/// pre-impact states recorded from step `record_from` on.
pub fn find_limit_cycle(
    walker: &Walker,
    initial: &[SectionState],
    steps: usize,
    record_from: usize,
) -> Result<LimitCycle> {
    if initial.is_empty() {
        return Err(WalkerError::InvalidParams("no initial states".into()));
    }
    let runs = map_indexed(initial.len(), |i| {
        walker.state_from_section(&initial[i]).ok().map(|s| run_flat(walker, &s, steps, record_from))
    });
    let mut samples = Vec::new();
    let mut times = Vec::new();
    let mut survivors = 0;
    for run in runs.into_iter().flatten() {
        if !run.recorded.is_empty() {
            survivors += 1;
            samples.extend(run.recorded);
            times.extend(run.step_times);
        }
    }
    if samples.is_empty() {
        return Err(WalkerError::NoViableCycle(record_from));
    }
    let mean = samples.iter().map(|s| s.as_vector()).sum::<SectionVector>() / samples.len() as f64;
    Ok(LimitCycle {
        model: walker.model,
        fixed_point: SectionState::from_vector(&mean),
        mean_step_time: times.iter().sum::<f64>() / times.len() as f64,
        samples,
        survivors,
        attempted: initial.len(),
    })
}

/// Limit-cycle search from a box around the model's reference state.
pub fn search_limit_cycle(walker: &Walker, search: &CycleSearch) -> Result<LimitCycle> {
    let initial = sample_initial_states(
        walker.model,
        &SectionState::reference(walker.model),
        search.box_fraction,
        search.samples,
        search.seed,
    );
    find_limit_cycle(walker, &initial, search.steps, search.record_from)
}

/// Ellipsoidal neighbourhood `(ξ − c)ᵀ C (ξ − c) < d₀` of a limit cycle,
/// with `C` the pseudoinverse of the recorded-state covariance.
///
/// A converged deterministic cycle has a covariance at roundoff level, so
/// the covariance gets a diagonal floor of `(resolution·|c_j|)²` before
/// inversion. Components that are zero at the fixed point stay
/// unconstrained unless the samples vary along them.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitKernel {
    pub center: SectionVector,
    pub metric: SMatrix<f64, 12, 12>,
    pub threshold: f64,
}

impl LimitKernel {
    pub fn new(cycle: &LimitCycle, threshold: f64) -> Self {
        Self::from_samples(&cycle.fixed_point, &cycle.samples, threshold, DEFAULT_KERNEL_RESOLUTION)
    }

    pub fn from_samples(
        center: &SectionState,
        samples: &[SectionState],
        threshold: f64,
        resolution: f64,
    ) -> Self {
        let c = center.as_vector();
        let n = samples.len();
        let mean = samples.iter().map(|s| s.as_vector()).sum::<SectionVector>() / n.max(1) as f64;
        let mut cov = SMatrix::<f64, 12, 12>::zeros();
        for s in samples {
            let d = s.as_vector() - mean;
            cov += d * d.transpose();
        }
        if n > 1 {
            cov /= (n - 1) as f64;
        }
        for j in 0..12 {
            cov[(j, j)] += (resolution * c[j]).powi(2);
        }
        let largest = cov.abs().max();
        let metric = if largest > 0.0 {
            cov.pseudo_inverse(largest * 1e-12).unwrap_or_else(|_| SMatrix::zeros())
        } else {
            SMatrix::zeros()
        };
        Self { center: c, metric, threshold }
    }

    pub fn distance(&self, xi: &SectionState) -> f64 {
        let d = xi.as_vector() - self.center;
        (d.transpose() * self.metric * d)[(0, 0)]
    }

    pub fn contains(&self, xi: &SectionState) -> bool {
        self.distance(xi) < self.threshold
    }

    /// Semi-axes of the kernel ellipsoid along the principal directions of
    /// the metric (infinite along unconstrained directions).
    pub fn principal_radii(&self) -> Vec<(f64, SectionVector)> {
        let eig = self.metric.symmetric_eigen();
        // roundoff-level eigenvalues are directions the pseudo-inverse dropped
        let floor = 1e-12 * eig.eigenvalues.amax();
        (0..12)
            .map(|i| {
                let l = eig.eigenvalues[i];
                let r = if l > floor { (self.threshold / l).sqrt() } else { f64::INFINITY };
                (r, eig.eigenvectors.column(i).into_owned())
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Swing,
    Impact,
    Takeoff,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Swing => "swing",
            Phase::Impact => "impact",
            Phase::Takeoff => "takeoff",
        }
    }
}

/// One sample of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub t: f64,
    pub pct_cycle: f64,
    pub section: SectionState,
    pub energy: f64,
    /// Power of all non-conservative forces except impulses.
    pub power: f64,
    pub swing_angle: f64,
    pub swing_rate: f64,
    pub phase: Phase,
    /// The interval ending at this row carried an impulse or an impact.
    pub impulsive: bool,
}

/// Energy and kinematic traces of one gait cycle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleTrace {
    pub rows: Vec<TraceRow>,
    pub duration: f64,
    /// Trapezoidal integral of the power trace over regular intervals.
    pub power_integral: f64,
    /// Energy injected by the toe-off push.
    pub impulse_energy: f64,
    /// Energy change across impacts (negative).
    pub impact_energy: f64,
    /// Energy lost per cycle: impact losses plus negative power.
    pub dissipated: f64,
    pub energy_change: f64,
}

impl CycleTrace {
    /// `power_integral + impulse_energy + impact_energy` relative to the
    /// energy dissipated in the cycle; zero on an exact cycle.
    pub fn balance_residual(&self) -> f64 {
        (self.power_integral + self.impulse_energy + self.impact_energy) / self.dissipated
    }

    /// Same sum minus the energy change over the traced step, relative to
    /// the dissipated energy: the quadrature error alone.
    pub fn closure_error(&self) -> f64 {
        (self.power_integral + self.impulse_energy + self.impact_energy - self.energy_change) / self.dissipated
    }

    /// Linear interpolation of a row quantity at a cycle percentage.
    pub fn at_pct(&self, pct: f64, value: impl Fn(&TraceRow) -> f64) -> f64 {
        let k = self.rows.partition_point(|r| r.pct_cycle < pct);
        if k == 0 {
            return value(&self.rows[0]);
        }
        if k >= self.rows.len() {
            return value(self.rows.last().unwrap());
        }
        let (a, b) = (&self.rows[k - 1], &self.rows[k]);
        let span = b.pct_cycle - a.pct_cycle;
        if span <= 0.0 {
            return value(b);
        }
        let w = (pct - a.pct_cycle) / span;
        value(a) * (1.0 - w) + value(b) * w
    }
}

fn trace_row(walker: &Walker, s: &WalkerState, ev: Option<&StepEvents>, t0: f64) -> Result<TraceRow> {
    let (phase, impulsive) = match ev {
        None => (Phase::Swing, false),
        Some(ev) if ev.impact && ev.dt == 0.0 => (Phase::Impact, true),
        Some(ev) if ev.toe_off_force.is_some() || ev.takeoff => (Phase::Takeoff, ev.toe_off_force.is_some()),
        Some(ev) => (Phase::Swing, ev.landing || ev.liftoff),
    };
    Ok(TraceRow {
        t: s.time - t0,
        pct_cycle: 0.0,
        section: walker.section(s),
        energy: walker.energy(s).total(),
        power: walker.derivative(s)?.power,
        swing_angle: s.swing_forward_angle(),
        swing_rate: s.swing_forward_rate(),
        phase,
        impulsive,
    })
}

/// Rows of a multi-step walk.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub rows: Vec<TraceRow>,
    pub steps: usize,
    pub fall: Option<FallReason>,
}

/// Walks up to `steps` steps from a pre-impact state, drawing the slope of
/// each new ground segment from `slope`, and records every integration
/// step.
pub fn trajectory(
    walker: &Walker,
    pre_impact: &WalkerState,
    steps: usize,
    slope: &mut dyn FnMut() -> f64,
) -> Result<Trajectory> {
    let t0 = pre_impact.time;
    let mut rows = vec![trace_row(walker, pre_impact, None, t0)?];
    let mut s = *pre_impact;
    let mut err = None;
    for k in 0..steps {
        let outcome = walker.simulate_step_observed(&s, slope(), &mut |st, ev| {
            if err.is_none() {
                match trace_row(walker, st, Some(ev), t0) {
                    Ok(r) => rows.push(r),
                    Err(e) => err = Some(e),
                }
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        match outcome {
            StepOutcome::Completed(next) => s = next,
            StepOutcome::Fell { reason, .. } => return Ok(Trajectory { rows, steps: k, fall: Some(reason) }),
        }
    }
    Ok(Trajectory { rows, steps, fall: None })
}

/// Simulates one flat-ground step from a pre-impact state and records
/// energy, power and swing-leg kinematics, with impulse and impact
/// intervals separated from the regular power integral.
pub fn cycle_traces(walker: &Walker, pre_impact: &WalkerState) -> Result<CycleTrace> {
    let traj = trajectory(walker, pre_impact, 1, &mut || 0.0)?;
    if let Some(reason) = traj.fall {
        return Err(WalkerError::InvalidParams(format!("walker fell during the cycle ({reason:?})")));
    }
    let mut rows = traj.rows;
    let duration = rows.last().map(|r| r.t).unwrap_or(0.0);
    for r in rows.iter_mut() {
        r.pct_cycle = if duration > 0.0 { 100.0 * r.t / duration } else { 0.0 };
    }
    let mut trace = CycleTrace {
        duration,
        power_integral: 0.0,
        impulse_energy: 0.0,
        impact_energy: 0.0,
        dissipated: 0.0,
        energy_change: rows.last().unwrap().energy - rows[0].energy,
        rows,
    };
    for w in trace.rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let dt = b.t - a.t;
        let regular = 0.5 * (a.power + b.power) * dt;
        let negative = 0.5 * (a.power.min(0.0) + b.power.min(0.0)) * dt;
        trace.dissipated -= negative;
        let jump = b.energy - a.energy;
        match (b.impulsive, b.phase) {
            (true, Phase::Impact) => trace.impact_energy += jump,
            (true, Phase::Takeoff) => {
                trace.power_integral += regular;
                trace.impulse_energy += jump - regular;
            }
            (true, _) => {
                trace.power_integral += regular;
                trace.impact_energy += jump - regular;
            }
            (false, _) => trace.power_integral += regular,
        }
    }
    trace.dissipated -= trace.impact_energy.min(0.0);
    Ok(trace)
}
