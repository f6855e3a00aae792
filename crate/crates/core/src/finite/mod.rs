//! Nonanticipative rate distortion for finite-alphabet Markov sources.

mod causal;
mod joint;
mod oracle;
mod solver;

pub use causal::{causal_kernel, causal_solve, causal_solve_from};
pub use joint::{directed_information, DirectedInformation, JointLaw, MarginalReproduction};
pub use oracle::{oracle_minimize, OracleOptions, OracleResult};
pub use solver::{
    fixed_point_solve, fixed_point_solve_from, rd_curve, rd_curve_with, reproduction_size,
    self_consistency_residual, tilt_kernel, FixedPointSolution, KernelForm, SolverOptions,
    SolverReport,
};
