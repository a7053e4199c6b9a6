//! Semidefinite relaxation machinery: a small interior-point solver and the
//! lifted transmit/receive problems built on top of it.

pub mod lifted;
pub mod solver;

pub use lifted::{
    assemble_rx_sdp, assemble_rx_sdp_with, assemble_tx_sdp, assemble_tx_sdp_with, solve_sdp, svr_solve,
    svr_update_lambda, svr_update_u, AssemblyOptions, ConstraintKind, LiftedSdp, SdpOutcome, Sense, SvrOutcome,
    SvrSettings, SvrState, TraceConstraint,
};
pub use solver::{SdpProblem, SdpSolution, SolveStatus, SolverSettings, SymMat};
