#![allow(dead_code)]

use walkerlab_core::gait::{search_limit_cycle, CycleSearch, LimitCycle};
use walkerlab_core::sim::Walker;
use walkerlab_core::{BodyParams, ControlGains, ModelKind};

/// Hip stiffness at which both models have a flat-ground gait.
pub const GAIT_HIP_P: f64 = 20.0;

pub fn gait_gains() -> ControlGains {
    ControlGains { hip_p: GAIT_HIP_P, ..ControlGains::baseline() }
}

pub fn gait_walker(model: ModelKind) -> Walker {
    Walker::new(model, BodyParams::baseline(), gait_gains())
}

/// A short search: enough to settle onto the cycle in tests.
pub fn quick_cycle(walker: &Walker) -> LimitCycle {
    let search = CycleSearch { samples: 8, steps: 300, record_from: 200, ..Default::default() };
    search_limit_cycle(walker, &search).expect("gait exists at the test gains")
}
