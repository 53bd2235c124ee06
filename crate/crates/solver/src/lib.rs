//! Small-scale linear and mixed-integer linear programming.
//!
//! [`Model`] describes a minimization problem; [`solve_lp`] runs a bounded
//! revised simplex on its continuous relaxation and [`solve_milp`] wraps it
//! in best-first branch-and-bound over the binary variables.
//! [`enumerate_bruteforce`] is an exhaustive reference used to check the
//! branch-and-bound search, and [`lp_format`] writes models in the common
//! LP text format for cross-checking against external solvers.

mod lu;

pub mod lp;
pub mod lp_format;
pub mod milp;
pub mod model;

pub use lp::{solve_lp, Basis, LpOptions, LpSolution, LpStatus, PreparedLp, Residuals, VarStatus};
pub use milp::{enumerate_bruteforce, solve_milp, solve_milp_with, MilpError, MilpOptions, MilpSolution, MilpStatus};
pub use model::{Constraint, Model, ModelError, Relation, RowId, VarId, Variable};
