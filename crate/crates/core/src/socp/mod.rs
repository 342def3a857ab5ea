//! Second-order cone programming: the spring metric, the per-iteration
//! matching program, and the interior-point solver behind it.

mod metric;
mod program;
pub mod solver;

pub use metric::{build_metric, MetricEntry, SpringMetric, SpringPoint};
pub use program::{build_program, solve_socp, ConeProgram, ConeSolution};
pub use solver::{kkt_residuals, solve, ConicProblem, ConicSolution, KktResiduals, SolverOptions};
