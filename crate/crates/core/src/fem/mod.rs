//! Tensor-product spectral elements on axis-aligned rectangles.

pub mod assembly;
pub mod discretization;
pub mod dual;
pub mod io;
pub mod map;
pub mod newton;
pub mod quadrature;

pub use assembly::{
    assemble_h1_gram, assemble_h1_seminorm_gram, assemble_jacobian, assemble_residual,
    assemble_weighted_h1_gram, FluxDeriv, Integrand, PointCtx, WeakForm,
};
pub use discretization::{build_discretization, Discretization, Rect};
pub use dual::{dual_norm, MaskedGram};
pub use map::RotoTranslation;
pub use newton::{newton, solve_nonlinear, FieldProblem, NewtonReport, NewtonSettings, NonlinearSystem};
