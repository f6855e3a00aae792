//! Domain types shared by the solvers.

mod distortion;
mod point;
mod policy;
mod source;
mod state_space;

pub use distortion::{evaluate_distortion, evaluate_distortion_real, DistortionSpec};
pub use point::RateDistortionPoint;
pub use policy::{HistoryIndexer, ReproductionPolicy, MAX_HORIZON, MAX_REPRODUCTION_ALPHABET};
pub use source::{FiniteMarkovSource, Transition};
pub use state_space::{validate_model, Diagnostic, ModelParseError, StateSpaceModel};
