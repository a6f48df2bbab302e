//! Numerical laboratory for random Schrödinger operators on planar nested
//! fractals.
//!
//! The crate builds self-similar window graphs from iterated-function-system
//! descriptions, folds random walks onto a window through a consistent corner
//! labeling, assembles Neumann (reflected) and Dirichlet (killed) operators,
//! applies Bernstein functions spectrally, and measures the integrated density
//! of states of
//!
//! ```text
//! H = phi(-L) + V
//! ```
//!
//! for Poisson-sampled potentials V. On top of the spectral pipeline sit the
//! estimators: annealed Laplace curves, convergence diagnostics, a suite of
//! variational bounds (Temple, alloy-reduction, binomial tails), and
//! stretched-exponential exponent fits for the low-energy tails.
//!
//! Modules follow the pipeline order:
//!
//! * [`geometry`] — similitude systems, cells, window graphs, graph metric
//! * [`labeling`] — corner labelings, folding projections, folded kernels
//! * [`spectral`] — walk kernels, symmetric operators, eigensolves, subordination
//! * [`bernstein`] — Laplace exponents and their low-energy behaviour
//! * [`environment`] — Poisson configurations, potentials, alloy reduction
//! * [`ids`] — counting measures, Laplace transforms, bounds, exponent fits
//! * [`config`] / [`pipeline`] — experiment descriptions and orchestration

pub mod bernstein;
pub mod cache;
pub mod config;
pub mod environment;
pub mod geometry;
pub mod hash;
pub mod ids;
pub mod labeling;
pub mod pipeline;
pub mod spectral;
pub mod vec2;

pub use bernstein::BernsteinFunction;
pub use config::ExperimentConfig;
pub use environment::{PoissonConfiguration, PotentialField, SingleSiteProfile};
pub use geometry::{ApproxGraph, CellAddress, FractalSystem, SimilitudeSystem};
pub use ids::{EmpiricalIds, FitResult, LaplaceCurve};
pub use labeling::{GoodLabeling, ProjectionMap};
pub use spectral::{Boundary, SpectrumRecord, SymmetricOperator, WalkKernel};
