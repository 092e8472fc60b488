pub mod actuation;
pub mod cart;
pub mod chain;
pub mod walker;

pub use actuation::ActuationOutputs;
pub use walker::slot;
pub use cart::{CartSample, CartState, CartSystem};
pub use walker::{
    BodyFrames, Contact, Energy, FallReason, GroundSegment, IntegratorConfig, PushOff, Scheme,
    StepEvents, StepOutcome, Support, Walker, WalkerState,
};
