//! Finite-difference solver for the Dirichlet Monge-Ampère problem
//! `det D²u = ν` on rectangles, where `ν` is a sum of Dirac masses and/or a
//! continuous density.
//!
//! The discrete operator is the wide-stencil minimum over orthogonal lattice
//! bases of products of normalized second differences. Discrete solutions are
//! computed by damped time marching, optionally preconditioned by the inverse
//! five-point Laplacian.

pub mod checks;
pub mod cli;
pub mod error;
pub mod grid;
pub mod measures;
pub mod operator;
pub mod poisson;
pub mod problems;
pub mod quadrature;
pub mod solvers;
pub mod stencil;

pub use error::{Error, Result};
pub use grid::{restrict, Grid, GridIndex, GridSpec, MeshFunction, Rect, Region};
pub use measures::{build_rhs, measure_of_box, reference_measure, Atom, DiracSpread, MeasureSpec};
pub use operator::{
    c0_bound, discrete_ma_measure, is_discrete_convex, lipschitz_estimate, ma_apply, ma_apply_all, ma_residual,
    second_difference, BorelBox, EpsilonSign, OperatorConfig,
};
pub use poisson::{inv_norm_estimate, laplacian, laplacian_apply, poisson_solve, PoissonConfig, PoissonMethod, PoissonSolver};
pub use problems::{problem_by_name, run_convergence_study, ErrorTable, Problem};
pub use solvers::{
    basic_step, contraction_ratio, preconditioned_step, solve, InitialGuess, Method, PairSampling, SolveResult,
    SolverConfig, StoppingRule,
};
pub use stencil::{admissible_bases, enumerate_bases, Direction, OrthogonalBasis, StencilSet};
