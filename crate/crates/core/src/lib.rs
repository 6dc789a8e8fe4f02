//! Budgeted Bayesian multi-armed bandits: belief-state models, LP
//! relaxations, greedy rounding policies, an exact oracle and experiment
//! drivers.

pub mod bench;
pub mod error;
pub mod lp;
pub mod nonadaptive;
pub mod oracle;
pub mod policy;
pub mod relax;
pub mod statespace;

pub use error::{Error, Result};
pub use lp::{solve_lp, LinearProgram, LpSolution, LpStatus};
pub use oracle::{dp_optimal, enumerate_policy_statistics};
pub use policy::{
    evaluate_plan_exact, execute, make_greedy_plan, monte_carlo_evaluate, Executor, GreedyPlan,
};
pub use relax::{extract_single_arm_policies, solve_relaxation, RelaxationSolution, SingleArmPolicy};
pub use statespace::{validate_instance, ArmStateSpace, BanditInstance, Objective};
