//! Random sweep over the shared control gains: viability on flat ground,
//! robustness on textured ground, and the summary split by impulse
//! velocity.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::body::{BodyParams, ControlGains, ModelKind, SectionState};
use crate::error::{Result, WalkerError};
use crate::exec::map_indexed;
use crate::gait::{
    find_limit_cycle, search_limit_cycle, CycleSearch, LimitCycle, LimitKernel, DEFAULT_KERNEL_THRESHOLD,
};
use crate::mfpt::{estimate_mfpt, MfptReport, TerrainParams};
use crate::sim::{StepOutcome, Walker};

/// Impulse velocity separating the low and high groups, m/s.
pub const IMPULSE_SPLIT: f64 = 2.0;

/// Inclusive sampling ranges of the randomized gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GainRanges {
    pub toe_p: (f64, f64),
    pub toe_d: (f64, f64),
    pub impulse_velocity: (f64, f64),
    pub hip_p: (f64, f64),
    pub hip_d: (f64, f64),
    pub trunk_p: (f64, f64),
    pub trunk_d: (f64, f64),
}

impl Default for GainRanges {
    fn default() -> Self {
        Self {
            toe_p: (12_500.0, 150_000.0),
            toe_d: (500.0, 6_000.0),
            impulse_velocity: (0.25, 3.0),
            hip_p: (2.5, 30.0),
            hip_d: (0.375, 4.5),
            trunk_p: (75.0, 600.0),
            trunk_d: (37.5, 300.0),
        }
    }
}

impl GainRanges {
    /// Independent uniform draws; the other gains stay at baseline.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ControlGains {
        let mut u = |(lo, hi): (f64, f64)| rng.random_range(lo..=hi);
        ControlGains {
            toe_stiffness: u(self.toe_p),
            toe_damping: u(self.toe_d),
            impulse_velocity: u(self.impulse_velocity),
            hip_p: u(self.hip_p),
            hip_d: u(self.hip_d),
            trunk_p: u(self.trunk_p),
            trunk_d: u(self.trunk_d),
            ..ControlGains::baseline()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterSample {
    pub index: u64,
    pub seed: u64,
    pub gains: ControlGains,
}

/// Deterministic in `(seed, index)`: each index has its own RNG stream.
pub fn sample_parameters(seed: u64, index: u64) -> ParameterSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    ParameterSample { index, seed, gains: GainRanges::default().draw(&mut rng) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ImpulseGroup {
    Low,
    High,
}

impl ImpulseGroup {
    pub fn of(gains: &ControlGains) -> Self {
        if gains.impulse_velocity < IMPULSE_SPLIT {
            ImpulseGroup::Low
        } else {
            ImpulseGroup::High
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ImpulseGroup::Low => "low",
            ImpulseGroup::High => "high",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Viability {
    Viable,
    /// Fell after this many completed steps.
    Fell(usize),
    /// Numerical breakdown, with the error code.
    Diverged(&'static str),
}

impl Viability {
    pub fn is_viable(self) -> bool {
        self == Viability::Viable
    }
}

/// Flat-ground walk of `steps` steps from a pre-impact section state.
pub fn viability_test(walker: &Walker, start: &SectionState, steps: usize) -> Viability {
    let mut s = match walker.state_from_section(start) {
        Ok(s) => s,
        Err(e) => return Viability::Diverged(e.code()),
    };
    for k in 0..steps {
        match walker.simulate_step(&s, 0.0) {
            Ok(StepOutcome::Completed(next)) => s = next,
            Ok(StepOutcome::Fell { .. }) => return Viability::Fell(k),
            Err(e) => return Viability::Diverged(e.code()),
        }
    }
    Viability::Viable
}

/// The flat-ground cycle this walker settles into from `start`, found by a
/// single-start search.
pub fn own_cycle(walker: &Walker, start: &SectionState, search: &CycleSearch) -> Result<LimitCycle> {
    find_limit_cycle(walker, std::slice::from_ref(start), search.steps, search.record_from)
}

/// MFPT on textured ground, starting from the walker's own cycle reached
/// from `start`.
pub fn robustness_test(
    walker: &Walker,
    start: &SectionState,
    terrain: &TerrainParams,
    episodes: usize,
    cap: u64,
    search: &CycleSearch,
) -> Result<MfptReport> {
    let cycle = own_cycle(walker, start, search)?;
    let kernel = LimitKernel::new(&cycle, DEFAULT_KERNEL_THRESHOLD);
    Ok(estimate_mfpt(walker, &cycle, &kernel, terrain, episodes, cap)?.report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartSource {
    /// Fixed point of the baseline-gain limit cycle.
    BaselineCycle,
    /// No baseline cycle exists; the tabulated reference state is used.
    Reference,
}

/// Initial section state per model shared by every sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepStarts {
    pub rigid: SectionState,
    pub stabilized: SectionState,
    pub rigid_source: StartSource,
    pub stabilized_source: StartSource,
}

impl SweepStarts {
    pub fn get(&self, model: ModelKind) -> &SectionState {
        match model {
            ModelKind::RigidNeck => &self.rigid,
            ModelKind::HeadStabilized => &self.stabilized,
        }
    }

    pub fn find(params: &BodyParams, search: &CycleSearch) -> Self {
        let start = |model| {
            let walker = Walker::new(model, *params, ControlGains::baseline());
            match search_limit_cycle(&walker, search) {
                Ok(c) => (c.fixed_point, StartSource::BaselineCycle),
                Err(_) => (SectionState::reference(model), StartSource::Reference),
            }
        };
        let (rigid, rigid_source) = start(ModelKind::RigidNeck);
        let (stabilized, stabilized_source) = start(ModelKind::HeadStabilized);
        Self { rigid, stabilized, rigid_source, stabilized_source }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepConfig {
    pub samples: usize,
    pub seed: u64,
    pub viability_steps: usize,
    /// Both-viable samples promoted to robustness testing, in index order.
    pub robustness_samples: usize,
    pub episodes: usize,
    pub sigma: f64,
    pub step_cap: u64,
    pub search: CycleSearch,
    /// Start each sample from its own limit cycle instead of the shared
    /// start state.
    pub rederive_cycle: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            viability_steps: 100,
            robustness_samples: 100,
            episodes: 200,
            sigma: 0.03,
            step_cap: 10_000,
            search: CycleSearch::default(),
            rederive_cycle: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRecord {
    pub sample: ParameterSample,
    pub viable_a: bool,
    pub viable_b: bool,
    pub viability_a: Viability,
    pub viability_b: Viability,
    pub mfpt_a: Option<MfptReport>,
    pub mfpt_b: Option<MfptReport>,
    pub group: ImpulseGroup,
}

impl SweepRecord {
    pub fn cell(&self) -> ViabilityCell {
        match (self.viable_a, self.viable_b) {
            (false, false) => ViabilityCell::Neither,
            (true, true) => ViabilityCell::Both,
            (false, true) => ViabilityCell::OnlyB,
            (true, false) => ViabilityCell::OnlyA,
        }
    }

    /// `Some(true)` when B outlasts A, `None` without both MFPTs or on a
    /// tie.
    pub fn b_outlasts_a(&self) -> Option<bool> {
        let (a, b) = (effective_mfpt(self.mfpt_a.as_ref()?), effective_mfpt(self.mfpt_b.as_ref()?));
        if a.is_nan() || b.is_nan() || a == b {
            None
        } else {
            Some(b > a)
        }
    }
}

/// MFPT for comparisons: `+∞` when no fall was observed.
pub fn effective_mfpt(r: &MfptReport) -> f64 {
    if r.unbounded {
        f64::INFINITY
    } else {
        r.mfpt
    }
}

fn sample_start(
    walker: &Walker,
    shared: &SectionState,
    config: &SweepConfig,
) -> Option<SectionState> {
    if config.rederive_cycle {
        search_limit_cycle(walker, &config.search).ok().map(|c| c.fixed_point)
    } else {
        Some(*shared)
    }
}

pub fn run_sweep(params: &BodyParams, config: &SweepConfig) -> Result<(SweepStarts, Vec<SweepRecord>)> {
    if config.samples == 0 {
        return Err(WalkerError::InvalidParams("sweep needs at least one sample".into()));
    }
    let starts = SweepStarts::find(params, &config.search);
    let terrain = TerrainParams::new(config.sigma, config.seed)?;
    let walkers = |g: &ControlGains| {
        ModelKind::ALL.map(|m| Walker::new(m, *params, *g))
    };
    let mut records = map_indexed(config.samples, |i| {
        let sample = sample_parameters(config.seed, i as u64);
        let [wa, wb] = walkers(&sample.gains);
        let test = |w: &Walker| match sample_start(w, starts.get(w.model), config) {
            Some(s) => viability_test(w, &s, config.viability_steps),
            None => Viability::Fell(0),
        };
        let (va, vb) = (test(&wa), test(&wb));
        SweepRecord {
            sample,
            viable_a: va.is_viable(),
            viable_b: vb.is_viable(),
            viability_a: va,
            viability_b: vb,
            mfpt_a: None,
            mfpt_b: None,
            group: ImpulseGroup::of(&sample.gains),
        }
    });
    let promoted: Vec<usize> = records
        .iter()
        .enumerate()
        .filter(|(_, r)| r.viable_a && r.viable_b)
        .map(|(i, _)| i)
        .take(config.robustness_samples)
        .collect();
    let reports = map_indexed(promoted.len(), |k| {
        let r = &records[promoted[k]];
        walkers(&r.sample.gains).map(|w| {
            let start = sample_start(&w, starts.get(w.model), config)?;
            robustness_test(&w, &start, &terrain, config.episodes, config.step_cap, &config.search).ok()
        })
    });
    for (k, [a, b]) in reports.into_iter().enumerate() {
        let r = &mut records[promoted[k]];
        r.mfpt_a = a;
        r.mfpt_b = b;
    }
    Ok((starts, records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViabilityCell {
    Neither,
    Both,
    OnlyB,
    OnlyA,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CellCounts {
    pub total: usize,
    pub neither: usize,
    pub both: usize,
    pub only_b: usize,
    pub only_a: usize,
}

impl CellCounts {
    pub fn add(&mut self, cell: ViabilityCell) {
        self.total += 1;
        match cell {
            ViabilityCell::Neither => self.neither += 1,
            ViabilityCell::Both => self.both += 1,
            ViabilityCell::OnlyB => self.only_b += 1,
            ViabilityCell::OnlyA => self.only_a += 1,
        }
    }

    pub fn percent(&self, count: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * count as f64 / self.total as f64
        }
    }
}

/// Outcome of the MFPT comparison among both-viable samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Dominance {
    /// Samples with both MFPTs available.
    pub compared: usize,
    pub b_wins: usize,
    pub a_wins: usize,
    pub ties: usize,
    /// `b_wins / compared`.
    pub fraction_b: f64,
    /// 95% bootstrap interval of `fraction_b`.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_mfpt_a: f64,
    pub mean_mfpt_b: f64,
    /// Mean of `mfpt_b − mfpt_a` where B wins. Unbounded MFPTs enter
    /// with their lower bound.
    pub mean_gain_when_b_wins: f64,
    /// Mean of `mfpt_a − mfpt_b` where A wins.
    pub mean_gain_when_a_wins: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct GroupSummary {
    pub cells: CellCounts,
    pub dominance: Dominance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SweepSummary {
    pub overall: GroupSummary,
    pub low_impulse: GroupSummary,
    pub high_impulse: GroupSummary,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fraction of `true` outcomes with a 95% percentile-bootstrap interval.
pub fn bootstrap_fraction(outcomes: &[bool], resamples: usize, seed: u64) -> (f64, f64, f64) {
    if outcomes.is_empty() {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let n = outcomes.len();
    let point = outcomes.iter().filter(|&&b| b).count() as f64 / n as f64;
    let mut fractions = map_indexed(resamples, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        (0..n).filter(|_| outcomes[rng.random_range(0..n)]).count() as f64 / n as f64
    });
    fractions.sort_by(f64::total_cmp);
    (point, percentile(&fractions, 0.025), percentile(&fractions, 0.975))
}

fn group_summary<'a>(records: impl Iterator<Item = &'a SweepRecord> + Clone, resamples: usize, seed: u64) -> GroupSummary {
    let mut cells = CellCounts::default();
    for r in records.clone() {
        cells.add(r.cell());
    }
    let pairs: Vec<(f64, f64, Option<bool>)> = records
        .filter_map(|r| Some((r.mfpt_a.as_ref()?.mfpt, r.mfpt_b.as_ref()?.mfpt, r.b_outlasts_a())))
        .collect();
    let mut d = Dominance { compared: pairs.len(), ..Default::default() };
    for p in &pairs {
        match p.2 {
            Some(true) => d.b_wins += 1,
            Some(false) => d.a_wins += 1,
            None => d.ties += 1,
        }
    }
    let outcomes: Vec<bool> = pairs.iter().map(|p| p.2 == Some(true)).collect();
    let (f, lo, hi) = bootstrap_fraction(&outcomes, resamples, seed);
    d.fraction_b = f;
    d.ci_low = lo;
    d.ci_high = hi;
    d.mean_mfpt_a = mean(pairs.iter().map(|p| p.0));
    d.mean_mfpt_b = mean(pairs.iter().map(|p| p.1));
    let gain = |winner_b: bool| {
        mean(pairs.iter().filter(|p| p.2 == Some(winner_b)).map(|p| if winner_b { p.1 - p.0 } else { p.0 - p.1 }))
    };
    d.mean_gain_when_b_wins = gain(true);
    d.mean_gain_when_a_wins = gain(false);
    GroupSummary { cells, dominance: d }
}

/// Viability cells and MFPT dominance, overall and per impulse group.
pub fn aggregate(records: &[SweepRecord], resamples: usize, seed: u64) -> SweepSummary {
    let by = |g: ImpulseGroup| records.iter().filter(move |r| r.group == g);
    SweepSummary {
        overall: group_summary(records.iter(), resamples, seed),
        low_impulse: group_summary(by(ImpulseGroup::Low), resamples, seed),
        high_impulse: group_summary(by(ImpulseGroup::High), resamples, seed),
    }
}
