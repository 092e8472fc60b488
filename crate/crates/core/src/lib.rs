pub mod body;
pub mod error;
pub mod exec;
pub mod gait;
pub mod io;
pub mod linear;
pub mod mfpt;
pub mod sim;
pub mod sweep;
pub mod validate;

pub use body::{BodyParams, ControlGains, ModelKind, SectionState};
pub use error::{Result, WalkerError};
