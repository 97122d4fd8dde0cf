//! Multi-block ADMM with explicit penalty-parameter ranges.
//!
//! The scheme minimizes `Σ θ_i(x_i)` subject to `Σ A_i x_i = b`, `x_i ∈ X_i`,
//! updating the blocks Gauss–Seidel style and then the multiplier
//! `z ← z − β(Σ A_i x_i − b)`. Besides the solver the crate offers the
//! penalty ranges under which convergence and rates are guaranteed, the
//! potentials that certify them along a run, and the closed-form iteration
//! matrices that exhibit divergence outside those ranges.

pub mod analysis;
pub mod cases;
pub mod grid;
pub mod instances;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod spectral;
pub mod trace;

pub use analysis::{BetaRange, Point, RangeSource, ReferenceSolution};
pub use linalg::{Matrix, Vector};
pub use problem::{load_problem, serialize_problem, Block, ConstraintSet, ObjectiveTerm, Problem, ValidationReport};
pub use solver::{RunResult, RunStatus, SolverConfig, SolverState};
pub use spectral::{IterationMatrixBundle, Prediction};
