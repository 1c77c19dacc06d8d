//! Optimal utility-fair pricing policies.

pub mod cost;
pub mod dp;
pub mod policy;
pub mod structure;

pub use cost::{cost_of_fairness_linear, cost_of_fairness_numeric, unconstrained_revenue};
pub use dp::{brute_force_solve, build_policy, solve_dp, solve_dp_with, DpConfig, DpSolution};
pub use policy::{check_fairness, evaluate_policy_revenue, PiecewiseLinearPolicy, PolicyForm};
pub use structure::{linear_optimal_policy, LinearPolicy, StructureWarning};
