//! Textured ground and mean-first-passage-time estimation.
//!
//! Every episode starts on the limit cycle and walks on slopes drawn
//! afresh at each step until it either falls or re-enters the limit
//! kernel. Falls and returns are tallied separately; the expected number of
//! steps before a fall follows from the geometric number of returns.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{Result, WalkerError};
use crate::exec::map_indexed;
use crate::gait::{LimitCycle, LimitKernel};
use crate::sim::{StepOutcome, Walker, WalkerState};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TerrainParams {
    /// Standard deviation of the per-step slope, rad.
    pub slope_std: f64,
    pub seed: u64,
}

impl TerrainParams {
    pub fn new(slope_std: f64, seed: u64) -> Result<Self> {
        if !(slope_std >= 0.0 && slope_std.is_finite()) {
            return Err(WalkerError::InvalidParams(format!("slope std must be >= 0, got {slope_std}")));
        }
        Ok(Self { slope_std, seed })
    }
}

/// One draw from `N(0, σ²)`; exactly zero when `σ = 0`.
pub fn sample_slope<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).map(|n| n.sample(rng)).unwrap_or(0.0)
}

/// Independent RNG of episode `index` under `seed`.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// How an episode ended and after how many steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Episode {
    Returned(u64),
    Fell(u64),
    /// Neither fell nor returned within the step cap.
    Capped(u64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MfptAccumulator {
    pub returned: u64,
    pub fell: u64,
    pub return_steps: u64,
    pub fall_steps: u64,
    pub capped: u64,
}

impl MfptAccumulator {
    pub fn record(&mut self, e: Episode) {
        match e {
            Episode::Returned(n) => {
                self.returned += 1;
                self.return_steps += n;
            }
            Episode::Fell(n) => {
                self.fell += 1;
                self.fall_steps += n;
            }
            Episode::Capped(_) => self.capped += 1,
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.returned += other.returned;
        self.fell += other.fell;
        self.return_steps += other.return_steps;
        self.fall_steps += other.fall_steps;
        self.capped += other.capped;
    }

    pub fn from_episodes<'a>(episodes: impl IntoIterator<Item = &'a Episode>) -> Self {
        let mut acc = Self::default();
        for e in episodes {
            acc.record(*e);
        }
        acc
    }

    pub fn episodes(&self) -> u64 {
        self.returned + self.fell + self.capped
    }

    /// Mean steps before a fall. Without any observed fall the value is a
    /// lower bound (all return steps walked so far) and `unbounded` is set.
    pub fn report(&self, sigma: f64) -> MfptReport {
        let completed = self.returned + self.fell;
        let mean_return = if self.returned > 0 {
            self.return_steps as f64 / self.returned as f64
        } else {
            f64::NAN
        };
        let mean_fall = if self.fell > 0 { self.fall_steps as f64 / self.fell as f64 } else { f64::NAN };
        let p_fall = if completed > 0 { self.fell as f64 / completed as f64 } else { f64::NAN };
        let (mfpt, unbounded) = if self.fell == 0 {
            (self.return_steps as f64, true)
        } else if self.returned == 0 {
            (mean_fall, false)
        } else {
            let r = (1.0 - p_fall) / p_fall;
            (r * mean_return + mean_fall, false)
        };
        MfptReport {
            sigma,
            mfpt,
            p_fall,
            mean_return_steps: mean_return,
            mean_fall_steps: mean_fall,
            samples: completed,
            capped: self.capped,
            unbounded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MfptReport {
    pub sigma: f64,
    pub mfpt: f64,
    pub p_fall: f64,
    pub mean_return_steps: f64,
    pub mean_fall_steps: f64,
    /// Episodes that ended in a fall or a return.
    pub samples: u64,
    pub capped: u64,
    pub unbounded: bool,
}

/// Report together with the per-episode outcomes it was built from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfptRun {
    pub report: MfptReport,
    pub episodes: Vec<Episode>,
}

/// Runs `n` episodes, each with its own RNG stream.
pub fn run_episodes<F>(n: usize, seed: u64, episode: F) -> Vec<Episode>
where
    F: Fn(&mut ChaCha8Rng) -> Episode + Sync + Send,
{
    map_indexed(n, |i| episode(&mut episode_rng(seed, i as u64)))
}

/// Walks from `start` on random slopes until a fall or a return to the
/// kernel. Numerical breakdown of the dynamics counts as a fall.
pub fn walker_episode<R: Rng + ?Sized>(
    walker: &Walker,
    start: &WalkerState,
    kernel: &LimitKernel,
    sigma: f64,
    cap: u64,
    rng: &mut R,
) -> Episode {
    let mut s = *start;
    for n in 1..=cap {
        let slope = sample_slope(rng, sigma);
        match walker.simulate_step(&s, slope) {
            Ok(StepOutcome::Completed(next)) => {
                if kernel.contains(&walker.section(&next)) {
                    return Episode::Returned(n);
                }
                s = next;
            }
            Ok(StepOutcome::Fell { .. }) | Err(_) => return Episode::Fell(n),
        }
    }
    Episode::Capped(cap)
}

pub fn estimate_mfpt(
    walker: &Walker,
    cycle: &LimitCycle,
    kernel: &LimitKernel,
    terrain: &TerrainParams,
    n_samples: usize,
    cap: u64,
) -> Result<MfptRun> {
    let start = cycle.state(walker)?;
    let episodes = run_episodes(n_samples, terrain.seed, |rng| {
        walker_episode(walker, &start, kernel, terrain.slope_std, cap, rng)
    });
    let report = MfptAccumulator::from_episodes(&episodes).report(terrain.slope_std);
    Ok(MfptRun { report, episodes })
}

/// One report per slope deviation, all sharing the same seed.
pub fn mfpt_curve(
    walker: &Walker,
    cycle: &LimitCycle,
    kernel: &LimitKernel,
    sigmas: &[f64],
    n_samples: usize,
    seed: u64,
    cap: u64,
) -> Result<Vec<MfptReport>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let terrain = TerrainParams::new(sigma, seed)?;
            Ok(estimate_mfpt(walker, cycle, kernel, &terrain, n_samples, cap)?.report)
        })
        .collect()
}

/// Bootstrap distribution of the MFPT estimate. Resamples without a fall
/// yield `+∞`.
pub fn bootstrap_mfpt(episodes: &[Episode], resamples: usize, seed: u64) -> Vec<f64> {
    if episodes.is_empty() {
        return Vec::new();
    }
    map_indexed(resamples, |i| {
        let mut rng = episode_rng(seed, i as u64);
        let mut acc = MfptAccumulator::default();
        for _ in 0..episodes.len() {
            acc.record(episodes[rng.random_range(0..episodes.len())]);
        }
        let r = acc.report(0.0);
        if r.unbounded {
            f64::INFINITY
        } else {
            r.mfpt
        }
    })
}
