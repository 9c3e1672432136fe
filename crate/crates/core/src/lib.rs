//! Direct-collocation trajectory optimization of planar pin-jointed walking
//! models, plus recovery of cost-function weights from a single observed
//! optimal step by iterative inverse optimal control.
//!
//! The crate is organized bottom-up:
//!
//! - [`dynamics`]: rigid-segment kinematics and Newton-Euler residuals.
//! - [`transcription`]: decision-vector layout, Hermite-Simpson defects, pin
//!   constraints, and weighted-cost NLP assembly.
//! - [`solver`]: an interior-point NLP solver with a multi-start protocol.
//! - [`walker`]: the five-segment torso walker, its gait task, cost basis,
//!   and initial-guess generator.
//! - [`ioc`]: perturbed-trajectory sampling, feasibility projection,
//!   log-margin weight optimization, and the iterative recovery loop.
//! - [`experiments`]: the robustness battery and feature-table reports.

pub mod ad;
pub mod dynamics;
pub mod error;
pub mod solver;
pub mod walker;
pub mod transcription;

pub use error::{Error, Result};

pub use dynamics::{
    attachment_position, attachment_velocity, newton_euler_residual, ModelSpec, PinForce,
    PinJointSpec, PinSide, SegmentAccel, SegmentParams, SegmentState,
};
pub use solver::{
    multi_start, solve, InteriorPointSolver, NlpBackend, SolveOptions, SolveResult, SolveStatus,
};
pub use transcription::{
    build_nlp, check_derivatives, hermite_simpson_defect, pin_constraints, Census, CostBasis,
    DecisionLayout, NlpBuilder, NlpProblem, Objective, TaskConstraints, WeightVector,
};
