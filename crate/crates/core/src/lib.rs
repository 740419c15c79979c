//! A desk-scale laboratory for learning cutting-plane selection in
//! mixed-integer linear programming.
//!
//! The crate bundles a dense simplex engine with tableau access, Gomory,
//! cover and lexicographic separators, a cut-selection environment with a
//! small branch-and-bound for bound traces, a reverse-mode neural kernel,
//! hierarchical pointer-network policies with their trainers, and the
//! finite lexicographic cutting-plane algorithm.

pub mod bnb;
pub mod cutgen;
pub mod env;
pub mod error;
pub mod harness;
pub mod milp;
pub mod neural;
pub mod policy;
pub mod rng;
pub mod rules;
pub mod simplex;
pub mod theory;
pub mod tol;
pub mod training;

pub use cutgen::{Category, Cut, CutFeatures};
pub use error::{Error, Result};
pub use milp::{BoundTrace, LpRelaxation, MilpInstance, Row};
pub use simplex::{LpSolution, LpStatus};
