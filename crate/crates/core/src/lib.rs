//! Optimal cytotoxic dosing and treatment time for a diffuse-interface tumor model.
//!
//! The state is a Cahn–Hilliard equation for the tumor phase field `φ` coupled to a
//! reaction–diffusion equation for a nutrient `σ`; the control is a drug
//! concentration `u ∈ [0, 1]` that kills tumor cells at rate `α`. The crate provides
//!
//! * [`state`]: bound-preserving, energy-stable forward solver,
//! * [`sensitivity`]: the linearized (tangent) equations in a control direction,
//! * [`adjoint`]: the backward adjoint system on `[0, τ]`,
//! * [`objective`]: the relaxed objective, its gradients in `u` and `τ`, and the
//!   first-order optimality residuals,
//! * [`optimizer`]: projected gradient in `u` with an exhaustive scan over `τ`,
//! * [`verification`]: executable checks of the identities the solvers must satisfy.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`, which is what the file formats and the CLI use.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod error;
pub mod field;
pub mod grid;
pub mod io;
pub mod linsolve;
pub mod model;
pub mod objective;
pub mod optimizer;
pub mod presets;
pub mod scalar;
pub mod sensitivity;
pub mod state;
pub mod verification;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid = grid::Grid<f64>;
pub type ScalarField = field::ScalarField<f64>;
pub type TimeGrid = control::TimeGrid<f64>;
pub type Control = control::Control<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type ProblemData = model::ProblemData<f64>;
pub type StateTrajectory = state::StateTrajectory<f64>;
pub type LinearizedTrajectory = sensitivity::LinearizedTrajectory<f64>;
pub type AdjointTrajectory = adjoint::AdjointTrajectory<f64>;
pub type ObjectiveSpec = objective::ObjectiveSpec<f64>;
pub type OptimizerConfig = optimizer::OptimizerConfig<f64>;
pub type OptimizationResult = optimizer::OptimizationResult<f64>;

pub type Grid32 = grid::Grid<f32>;
pub type ScalarField32 = field::ScalarField<f32>;
pub type ProblemData32 = model::ProblemData<f32>;
