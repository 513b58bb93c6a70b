//! Exact-arithmetic laboratory for gradient-flow training of one-hidden-layer
//! ReLU networks under L2 risk with piecewise-polynomial targets and input
//! densities.
//!
//! The library provides:
//! - closed-form (rational-arithmetic) evaluation of the risk and its
//!   generalized gradient,
//! - an event-driven gradient-flow integrator that freezes neurons whose
//!   input parameters degenerate to zero,
//! - an exact variable-elimination engine for iterated integrals of
//!   indicator-gated polynomials (the multi-dimensional risk evaluator),
//! - post-hoc convergence-rate certification and empirical probing of the
//!   Łojasiewicz inequality around trajectory limits.

pub mod config;
pub mod diag;
pub mod instances;
pub mod network;
pub mod poly;
pub mod quadrature;
pub mod rational;
pub mod risk;
pub mod semialg;
pub mod solver;

pub use network::{ActiveRegion1D, NetworkShape, NeuronRegion, ParamVector};
pub use poly::{AffineConstraint, Breakline1D, PiecewisePoly, Poly};
pub use risk::{Evaluator, Problem, SmoothedFamily};
pub use semialg::{AmnTerm, AmnTermSet, IndicatorKind};
pub use solver::{SolverConfig, Trajectory};
