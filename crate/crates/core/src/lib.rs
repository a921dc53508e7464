//! Component-based model-order reduction for parametric nonlinear elliptic
//! problems on grids of square subdomains.
//!
//! Local reduced spaces are trained per archetype component (corner, edge,
//! internal) from randomized oversampling solves, glued into a global space
//! with a tensorized bilinear partition of unity, and used in a Galerkin
//! reduced-order model. Localized dual residuals drive error indicators and an
//! adaptive enrichment loop.
//!
//! Module map:
//!
//! * [`fem`]: tensor-product spectral-element discretization, assembly,
//!   Newton solver, dual norms, matrix files.
//! * [`models`]: nonlinear diffusion and linear advection-diffusion-reaction.
//! * [`components`]: archetypes, configurations, partition of unity.
//! * [`training`]: boundary samplers, transfer solves, POD, baselines.
//! * [`rom`]: global reduced system, residual, Jacobian, Newton.
//! * [`estimator`]: localized Riesz residuals and global bounds.
//! * [`enrichment`]: residual-driven basis enrichment.
//! * [`study`]: experiment drivers, configuration and verification suite.

pub mod checks;
pub mod components;
pub mod enrichment;
pub mod error;
pub mod estimator;
pub mod fem;
pub mod linalg;
pub mod models;
pub mod rom;
pub mod study;
pub mod training;

pub use error::{Error, Result};
