//! Finite-difference simulation of the chemotaxis-growth system with a small
//! chemotactic coefficient ε and of its Fisher–KPP limit, together with an
//! experiment harness that measures how the uniform deviation between the two
//! scales with ε and audits the a-priori bounds that control it.

// `!(x > 0.0)` guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod solver;

pub use grid::{Field, FluxMode, Grid, GridError};
pub use solver::{ModelParams, SolverError, State, Trajectory};
