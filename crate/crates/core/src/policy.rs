//! Rounding per-arm policies into sequential exploration strategies.
//!
//! A [`GreedyPlan`] ranks arms by reward per unit of combined exploitation
//! and cost share. The executors then run each arm's single-arm policy in
//! that order, never returning to an arm once the next one starts.
//! [`evaluate_plan_exact`] computes the expected outcome of an executor by
//! convolving per-arm outcome distributions in plan order, and
//! [`monte_carlo_evaluate`] samples traces on reproducible RNG streams.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::relax::{interpolate, ArmAction, RelaxationVariant, SingleArmPolicy};
use crate::statespace::{ArmStateSpace, BanditInstance, ConcaveProblem, Objective};

/// Slack on budget comparisons so integer budgets are not lost to rounding.
pub const BUDGET_SLACK: f64 = 1e-9;

/// Slack on the `sum sigma_i eps_i >= B` stopping test.
const LOAD_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PlanVariant {
    Budgeted,
    Bicriteria { alpha: f64 },
    Lagrangean,
    Concave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedArm {
    pub arm: usize,
    pub arm_id: String,
    pub nu: f64,
    pub mu: f64,
    /// `nu / mu`; `+inf` when `mu = 0 < nu`, and 0 for arms with `mu = nu = 0`.
    pub ratio: f64,
}

impl RankedArm {
    fn class(&self) -> u8 {
        if self.mu == 0.0 {
            if self.nu > 0.0 {
                0
            } else {
                2
            }
        } else {
            1
        }
    }
}

/// Rounds a ratio to ten significant digits so that values equal up to
/// floating-point noise compare equal and fall through to the id tie-break.
fn quantize(r: f64) -> f64 {
    if r.is_finite() {
        format!("{r:.9e}").parse().unwrap_or(r)
    } else {
        r
    }
}

fn rank_order(a: &RankedArm, b: &RankedArm) -> Ordering {
    a.class()
        .cmp(&b.class())
        .then_with(|| {
            quantize(b.ratio)
                .partial_cmp(&quantize(a.ratio))
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.arm_id.cmp(&b.arm_id))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyPlan {
    pub variant: PlanVariant,
    pub order: Vec<RankedArm>,
    /// Budget enforced by the executors (`alpha * C` for bicriteria plans).
    pub budget: f64,
    pub alpha: f64,
}

impl GreedyPlan {
    pub fn arm_order(&self) -> Vec<usize> {
        self.order.iter().map(|r| r.arm).collect()
    }

    pub fn position(&self, arm: usize) -> Option<usize> {
        self.order.iter().position(|r| r.arm == arm)
    }
}

/// Maps `(arm, policy)` to its `(nu, mu)` pair.
type RankFn = Box<dyn Fn(usize, &SingleArmPolicy) -> (f64, f64)>;

fn cost_share(cost: f64, budget: f64) -> f64 {
    if budget > 0.0 {
        cost / budget
    } else if cost == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Orders arms by decreasing `nu / mu`:
///
/// | variant     | nu      | mu                        |
/// |-------------|---------|---------------------------|
/// | budgeted    | `R`     | `P + C(phi)/C`            |
/// | bicriteria  | `R`     | `alpha P + C(phi)/C`      |
/// | concave     | `R`     | `sigma P / B + C(phi)/C`  |
/// | lagrangean  | `R - C` | `P`                       |
///
/// `alpha > 1` turns a budgeted plan into a bicriteria one whose executors
/// enforce the budget `alpha C`.
pub fn make_greedy_plan(
    policies: &[SingleArmPolicy],
    instance: &BanditInstance,
    alpha: f64,
) -> Result<GreedyPlan> {
    if !(alpha.is_finite() && alpha >= 1.0) {
        return Err(Error::InvalidInput(format!(
            "bicriteria factor must be at least 1, got {alpha}"
        )));
    }
    if policies.len() != instance.n_arms() {
        return Err(Error::InvalidInput(format!(
            "{} policies for {} arms",
            policies.len(),
            instance.n_arms()
        )));
    }
    let expected = RelaxationVariant::of(&instance.objective);
    for (i, p) in policies.iter().enumerate() {
        if p.arm != i || p.variant != expected {
            return Err(Error::InvalidInput(format!(
                "policy {i} does not belong to arm {i} of a {} instance",
                expected.name()
            )));
        }
    }
    let c = instance.budget;
    let (variant, rank): (PlanVariant, RankFn) =
        match &instance.objective {
            Objective::Budgeted { .. } => {
                let variant = if alpha > 1.0 {
                    PlanVariant::Bicriteria { alpha }
                } else {
                    PlanVariant::Budgeted
                };
                (
                    variant,
                    Box::new(move |_, p| (p.reward, alpha * p.explore_prob + cost_share(p.cost, c))),
                )
            }
            Objective::Lagrangean => {
                if alpha != 1.0 {
                    return Err(Error::InvalidInput(
                        "bicriteria factor applies to budgeted plans only".into(),
                    ));
                }
                (
                    PlanVariant::Lagrangean,
                    Box::new(|_, p| (p.reward - p.cost, p.explore_prob)),
                )
            }
            Objective::Concave(problem) => {
                if alpha != 1.0 {
                    return Err(Error::InvalidInput(
                        "bicriteria factor applies to budgeted plans only".into(),
                    ));
                }
                let sigmas = problem.sigmas.clone();
                let cap = problem.capacity;
                (
                    PlanVariant::Concave,
                    Box::new(move |i, p| {
                        (
                            p.reward,
                            sigmas[i] * p.explore_prob / cap + cost_share(p.cost, c),
                        )
                    }),
                )
            }
        };
    let mut order: Vec<RankedArm> = policies
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (nu, mu) = rank(i, p);
            let ratio = if mu == 0.0 {
                if nu > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                nu / mu
            };
            RankedArm {
                arm: i,
                arm_id: p.arm_id.clone(),
                nu,
                mu,
                ratio,
            }
        })
        .collect();
    order.sort_by(rank_order);
    Ok(GreedyPlan {
        variant,
        order,
        budget: alpha * c,
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Executor {
    /// Checks the budget before every play and exploits the current arm when
    /// the next play would overflow.
    GreedyOrder,
    /// Checks the budget only after an arm's policy terminates.
    GreedyViolate,
    /// No budget; stops at the first exploit and scores reward minus cost.
    Lagrangean,
    /// Weighted exploitation under a packing constraint.
    Concave,
}

impl Executor {
    pub fn for_plan(plan: &GreedyPlan) -> Self {
        match plan.variant {
            PlanVariant::Budgeted | PlanVariant::Bicriteria { .. } => Executor::GreedyOrder,
            PlanVariant::Lagrangean => Executor::Lagrangean,
            PlanVariant::Concave => Executor::Concave,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Executor::GreedyOrder => "greedy-order",
            Executor::GreedyViolate => "greedy-violate",
            Executor::Lagrangean => "lagrangean",
            Executor::Concave => "concave",
        }
    }

    fn accepts(self, variant: PlanVariant) -> bool {
        matches!(
            (self, variant),
            (
                Executor::GreedyOrder | Executor::GreedyViolate,
                PlanVariant::Budgeted | PlanVariant::Bicriteria { .. }
            ) | (Executor::Lagrangean, PlanVariant::Lagrangean)
                | (Executor::Concave, PlanVariant::Concave)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceAction {
    Switch,
    Play,
    StopExploit,
    StopNull,
    BudgetStop,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEvent {
    pub arm: usize,
    pub state: usize,
    pub action: TraceAction,
    /// Cost charged by this event.
    pub cost: f64,
    /// The uniform draw in `[0, w_u]` behind the decision.
    pub q: Option<f64>,
    /// Grid level of a concave exploit.
    pub level: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    /// An arm's policy chose to exploit.
    Exploit,
    /// The next play would have overflowed the budget.
    BudgetStop,
    /// The budget was overspent when an arm terminated.
    Overspent,
    /// Every arm stopped without exploiting; the best current state wins.
    Fallback,
    /// No arm's first play fits the budget.
    Unaffordable,
    /// The packing load reached capacity.
    LoadReached,
    /// Every arm ran to completion.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecutionTrace {
    pub executor: Executor,
    pub seed: u64,
    pub stream: u64,
    pub events: Vec<TraceEvent>,
    /// Every arm's state at the end of the run.
    pub final_states: Vec<usize>,
    /// `(arm, state)` exploited by the single-choice executors.
    pub exploited: Option<(usize, usize)>,
    /// Final weights `y_i` (already halved) for the concave executor.
    pub weights: Option<Vec<f64>>,
    pub stop: StopReason,
    pub total_cost: f64,
    /// Exploited reward, or the summed concave value.
    pub reward: f64,
    /// Objective value: reward, or reward minus cost for the Lagrangean run.
    pub value: f64,
}

/// The RNG for replication `stream` under `seed`. Each replication owns a
/// separate ChaCha stream, so results do not depend on scheduling.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Cheapest first play (switch plus root play cost) over arms that can be
/// played at all.
pub(crate) fn min_first_charge(instance: &BanditInstance) -> Option<f64> {
    instance
        .arms
        .iter()
        .filter(|a| !a.root_state().is_leaf())
        .map(|a| a.switch_cost() + a.root_state().play_cost)
        .min_by(f64::total_cmp)
}

/// True when the budget cannot pay for any arm's first play.
pub(crate) fn unaffordable(instance: &BanditInstance, budget: f64) -> bool {
    min_first_charge(instance).is_some_and(|m| m > budget + BUDGET_SLACK)
}

/// Arm whose current state has the largest reward; ties go to the lowest
/// index.
pub(crate) fn best_arm(instance: &BanditInstance, states: &[usize]) -> usize {
    let mut best = 0;
    for i in 1..states.len() {
        if instance.arms[i].state(states[i]).reward > instance.arms[best].state(states[best]).reward {
            best = i;
        }
    }
    best
}

pub(crate) fn charge(arm: &ArmStateSpace, u: usize) -> f64 {
    let c = arm.state(u).play_cost;
    if u == arm.root() {
        c + arm.switch_cost()
    } else {
        c
    }
}

fn sample_child(arm: &ArmStateSpace, u: usize, rng: &mut ChaCha8Rng) -> usize {
    let transitions = &arm.state(u).transitions;
    let draw: f64 = rng.gen();
    let mut acc = 0.0;
    for t in transitions {
        acc += t.prob;
        if draw < acc {
            return t.child;
        }
    }
    transitions.last().expect("played state has children").child
}

fn concave_problem(instance: &BanditInstance) -> Result<&ConcaveProblem> {
    match &instance.objective {
        Objective::Concave(p) => Ok(p),
        other => Err(Error::WrongVariant {
            expected: "concave",
            found: other.name(),
        }),
    }
}

fn check_inputs(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
) -> Result<()> {
    if !executor.accepts(plan.variant) {
        return Err(Error::InvalidInput(format!(
            "executor {} cannot run a {:?} plan",
            executor.name(),
            plan.variant
        )));
    }
    let n = instance.n_arms();
    let mut seen = vec![false; n];
    for r in &plan.order {
        if r.arm >= n || std::mem::replace(&mut seen[r.arm], true) {
            return Err(Error::InvalidInput("plan is not a permutation of the arms".into()));
        }
    }
    if seen.iter().any(|s| !s) || policies.len() != n {
        return Err(Error::InvalidInput(
            "plan and policies must cover every arm exactly once".into(),
        ));
    }
    for (p, arm) in policies.iter().zip(&instance.arms) {
        if p.w.len() != arm.len() {
            return Err(Error::InvalidInput(format!(
                "policy for `{}` has {} states, arm has {}",
                arm.id(),
                p.w.len(),
                arm.len()
            )));
        }
    }
    if executor == Executor::Concave {
        concave_problem(instance)?;
        if policies.iter().any(|p| p.grid.is_none() || p.tables.is_none()) {
            return Err(Error::InvalidInput(
                "concave executor needs grid policies".into(),
            ));
        }
    }
    Ok(())
}

enum ArmEnd {
    Exploit(usize),
    Abandon,
    BudgetStop,
}

/// Runs one trace of `executor` on RNG stream `stream` of `seed`.
pub fn execute(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
    seed: u64,
    stream: u64,
) -> Result<ExecutionTrace> {
    check_inputs(instance, plan, policies, executor)?;
    Ok(run(instance, plan, policies, executor, seed, stream))
}

fn run(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
    seed: u64,
    stream: u64,
) -> ExecutionTrace {
    let mut rng = stream_rng(seed, stream);
    let n = instance.n_arms();
    let budget = plan.budget;
    let mut states: Vec<usize> = instance.arms.iter().map(|a| a.root()).collect();
    let mut events = Vec::new();
    let mut spent = 0.0;
    let finish = |events, states: Vec<usize>, exploited: (usize, usize), stop, spent: f64| {
        let reward = instance.arms[exploited.0].state(exploited.1).reward;
        let value = if executor == Executor::Lagrangean {
            reward - spent
        } else {
            reward
        };
        ExecutionTrace {
            executor,
            seed,
            stream,
            events,
            final_states: states,
            exploited: Some(exploited),
            weights: None,
            stop,
            total_cost: spent,
            reward,
            value,
        }
    };

    let budgeted = matches!(executor, Executor::GreedyOrder | Executor::GreedyViolate);
    if budgeted && unaffordable(instance, budget) {
        let best = best_arm(instance, &states);
        return finish(events, states.clone(), (best, states[best]), StopReason::Unaffordable, 0.0);
    }
    let checks_each_play = matches!(executor, Executor::GreedyOrder | Executor::Concave);
    let problem = match (&instance.objective, executor) {
        (Objective::Concave(p), Executor::Concave) => Some(p),
        _ => None,
    };
    let mut eps = vec![0.0; n];
    let mut load = 0.0;

    for ranked in &plan.order {
        let j = ranked.arm;
        let arm = &instance.arms[j];
        let pol = &policies[j];
        let mut first = true;
        let end = loop {
            let u = states[j];
            let q = rng.gen::<f64>() * pol.w[u];
            match pol.action(u, q) {
                ArmAction::Play => {
                    let amount = if first { charge(arm, u) } else { arm.state(u).play_cost };
                    if checks_each_play && amount > budget - spent + BUDGET_SLACK {
                        events.push(TraceEvent {
                            arm: j,
                            state: u,
                            action: TraceAction::BudgetStop,
                            cost: 0.0,
                            q: Some(q),
                            level: None,
                        });
                        break ArmEnd::BudgetStop;
                    }
                    if first {
                        events.push(TraceEvent {
                            arm: j,
                            state: u,
                            action: TraceAction::Switch,
                            cost: arm.switch_cost(),
                            q: None,
                            level: None,
                        });
                        first = false;
                    }
                    events.push(TraceEvent {
                        arm: j,
                        state: u,
                        action: TraceAction::Play,
                        cost: arm.state(u).play_cost,
                        q: Some(q),
                        level: None,
                    });
                    spent += amount;
                    states[j] = sample_child(arm, u, &mut rng);
                }
                ArmAction::Exploit(l) => {
                    events.push(TraceEvent {
                        arm: j,
                        state: u,
                        action: TraceAction::StopExploit,
                        cost: 0.0,
                        q: Some(q),
                        level: problem.map(|_| l),
                    });
                    break ArmEnd::Exploit(l);
                }
                ArmAction::Abandon => {
                    events.push(TraceEvent {
                        arm: j,
                        state: u,
                        action: TraceAction::StopNull,
                        cost: 0.0,
                        q: Some(q),
                        level: None,
                    });
                    break ArmEnd::Abandon;
                }
            }
        };

        if let Some(problem) = problem {
            let grid = pol.grid.expect("concave policy has a grid") as f64;
            eps[j] = match end {
                ArmEnd::Exploit(l) => l as f64 / grid,
                ArmEnd::Abandon => 0.0,
                ArmEnd::BudgetStop => 1.0,
            };
            load += problem.sigmas[j] * eps[j];
            if matches!(end, ArmEnd::BudgetStop) {
                return concave_finish(instance, policies, executor, seed, stream, events, states, &eps, StopReason::BudgetStop, spent);
            }
            if load >= problem.capacity - LOAD_SLACK {
                return concave_finish(instance, policies, executor, seed, stream, events, states, &eps, StopReason::LoadReached, spent);
            }
            continue;
        }
        match end {
            ArmEnd::Exploit(_) => {
                let s = states[j];
                return finish(events, states, (j, s), StopReason::Exploit, spent);
            }
            ArmEnd::BudgetStop => {
                let s = states[j];
                return finish(events, states, (j, s), StopReason::BudgetStop, spent);
            }
            ArmEnd::Abandon => {
                if executor == Executor::GreedyViolate && spent > budget {
                    let s = states[j];
                    return finish(events, states, (j, s), StopReason::Overspent, spent);
                }
            }
        }
    }
    if problem.is_some() {
        return concave_finish(instance, policies, executor, seed, stream, events, states, &eps, StopReason::Exhausted, spent);
    }
    let best = best_arm(instance, &states);
    let s = states[best];
    finish(events, states, (best, s), StopReason::Fallback, spent)
}

#[allow(clippy::too_many_arguments)]
fn concave_finish(
    instance: &BanditInstance,
    policies: &[SingleArmPolicy],
    executor: Executor,
    seed: u64,
    stream: u64,
    events: Vec<TraceEvent>,
    states: Vec<usize>,
    eps: &[f64],
    stop: StopReason,
    spent: f64,
) -> ExecutionTrace {
    let weights: Vec<f64> = eps.iter().map(|e| e / 2.0).collect();
    let value = instance
        .arms
        .iter()
        .zip(policies)
        .enumerate()
        .map(|(i, (arm, pol))| pol.value_at(arm, states[i], weights[i]))
        .sum();
    ExecutionTrace {
        executor,
        seed,
        stream,
        events,
        final_states: states,
        exploited: None,
        weights: Some(weights),
        stop,
        total_cost: spent,
        reward: value,
        value,
    }
}

/// One GreedyOrder trace on stream 0 of `seed`.
pub fn execute_greedy_order(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    seed: u64,
) -> Result<ExecutionTrace> {
    execute(instance, plan, policies, Executor::GreedyOrder, seed, 0)
}

/// One GreedyViolate trace on stream 0 of `seed`.
pub fn execute_greedy_violate(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    seed: u64,
) -> Result<ExecutionTrace> {
    execute(instance, plan, policies, Executor::GreedyViolate, seed, 0)
}

/// One concave-utility trace on stream 0 of `seed`.
pub fn execute_concave_greedy(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    seed: u64,
) -> Result<ExecutionTrace> {
    execute(instance, plan, policies, Executor::Concave, seed, 0)
}

/// One Lagrangean trace on stream 0 of `seed`.
pub fn execute_lagrangean_greedy(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    seed: u64,
) -> Result<ExecutionTrace> {
    execute(instance, plan, policies, Executor::Lagrangean, seed, 0)
}

/// Largest cost a single arm's policy can incur: switch cost plus the most
/// expensive root-to-leaf path.
pub fn max_single_arm_cost(instance: &BanditInstance) -> f64 {
    instance
        .arms
        .iter()
        .map(|a| a.max_exploration_cost())
        .fold(0.0, f64::max)
}

/// Structural problems with a trace, empty when it is well formed: arm
/// blocks must follow plan order without revisits, each arm is switched
/// into at most once, event costs add up, and the cost (or packing) limit of
/// the executor holds.
pub fn check_trace(instance: &BanditInstance, plan: &GreedyPlan, trace: &ExecutionTrace) -> Vec<String> {
    let mut issues = Vec::new();
    let mut last_pos: Option<usize> = None;
    let mut current: Option<usize> = None;
    let mut switches = vec![0usize; instance.n_arms()];
    let mut total = 0.0;
    for (k, e) in trace.events.iter().enumerate() {
        total += e.cost;
        if current != Some(e.arm) {
            let pos = plan.position(e.arm);
            match (pos, last_pos) {
                (None, _) => issues.push(format!("event {k}: arm {} is not in the plan", e.arm)),
                (Some(p), Some(prev)) if p <= prev => issues.push(format!(
                    "event {k}: arm {} revisited or out of plan order",
                    e.arm
                )),
                _ => {}
            }
            last_pos = pos.or(last_pos);
            current = Some(e.arm);
        }
        if e.action == TraceAction::Switch {
            switches[e.arm] += 1;
            if switches[e.arm] > 1 {
                issues.push(format!("event {k}: second switch into arm {}", e.arm));
            }
        }
        if e.action == TraceAction::Play && switches[e.arm] == 0 {
            issues.push(format!("event {k}: play on arm {} before switching in", e.arm));
        }
    }
    if (total - trace.total_cost).abs() > 1e-9 * (1.0 + total.abs()) {
        issues.push(format!(
            "event costs sum to {total}, trace reports {}",
            trace.total_cost
        ));
    }
    let limit = match trace.executor {
        Executor::GreedyOrder | Executor::Concave => Some(plan.budget),
        Executor::GreedyViolate => Some(plan.budget + max_single_arm_cost(instance)),
        Executor::Lagrangean => None,
    };
    if let Some(limit) = limit {
        if trace.total_cost > limit + BUDGET_SLACK {
            issues.push(format!(
                "cost {} exceeds the limit {limit}",
                trace.total_cost
            ));
        }
    }
    if let (Some(weights), Objective::Concave(p)) = (&trace.weights, &instance.objective) {
        let load: f64 = weights.iter().zip(&p.sigmas).map(|(y, s)| y * s).sum();
        if load > p.capacity + LOAD_SLACK {
            issues.push(format!("weights load {load} exceeds capacity {}", p.capacity));
        }
        if weights.iter().any(|y| !(0.0..=1.0).contains(y)) {
            issues.push("weight outside [0, 1]".into());
        }
    }
    issues
}

/// Packing load `sum sigma_i y_i` of a concave trace.
pub fn trace_load(instance: &BanditInstance, trace: &ExecutionTrace) -> Option<f64> {
    match (&trace.weights, &instance.objective) {
        (Some(w), Objective::Concave(p)) => Some(w.iter().zip(&p.sigmas).map(|(y, s)| y * s).sum()),
        _ => None,
    }
}

/// Renders a trace as JSON lines: one object per event followed by a
/// summary record.
pub fn trace_to_json_lines(instance: &BanditInstance, trace: &ExecutionTrace) -> String {
    let mut out = String::new();
    for e in &trace.events {
        let arm = &instance.arms[e.arm];
        let line = json!({
            "arm": arm.id(),
            "state": arm.state(e.state).id,
            "action": e.action,
            "cost": e.cost,
            "q": e.q,
            "level": e.level,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    let exploited = trace.exploited.map(|(a, s)| {
        json!({"arm": instance.arms[a].id(), "state": instance.arms[a].state(s).id})
    });
    let summary = json!({
        "summary": true,
        "executor": trace.executor,
        "seed": trace.seed,
        "stream": trace.stream,
        "stop": trace.stop,
        "value": trace.value,
        "reward": trace.reward,
        "cost": trace.total_cost,
        "exploited": exploited,
        "weights": trace.weights,
    });
    out.push_str(&summary.to_string());
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExactEvaluation {
    pub executor: Executor,
    /// Expected objective: reward, profit, or concave value.
    pub value: f64,
    pub expected_reward: f64,
    pub expected_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EndKind {
    Exploit(usize),
    Abandon,
    BudgetStop,
}

#[derive(Debug, Clone, Copy)]
struct ArmOutcome {
    kind: EndKind,
    state: usize,
    cost: f64,
    prob: f64,
}

fn bits(x: f64) -> u64 {
    (x + 0.0).to_bits()
}

/// Distribution of how one arm's policy ends, starting from its root with
/// `allowance` budget left (`None` when plays are never blocked).
fn arm_outcomes(arm: &ArmStateSpace, pol: &SingleArmPolicy, allowance: Option<f64>) -> Vec<ArmOutcome> {
    let order = arm.topological_order().expect("validated arm is acyclic");
    let mut mass: Vec<BTreeMap<u64, f64>> = vec![BTreeMap::new(); arm.len()];
    mass[arm.root()].insert(bits(0.0), 1.0);
    let mut ends: BTreeMap<(EndKind, usize, u64), f64> = BTreeMap::new();
    for &u in &order {
        let entries = std::mem::take(&mut mass[u]);
        if entries.is_empty() {
            continue;
        }
        let (play, exploit, abandon) = pol.action_probs(u);
        let amount = charge(arm, u);
        for (key, m) in entries {
            let cost = f64::from_bits(key);
            for (l, &e) in exploit.iter().enumerate() {
                if e > 0.0 {
                    *ends.entry((EndKind::Exploit(l), u, key)).or_default() += m * e;
                }
            }
            if abandon > 0.0 {
                *ends.entry((EndKind::Abandon, u, key)).or_default() += m * abandon;
            }
            if play > 0.0 {
                if let Some(limit) = allowance {
                    if amount > limit - cost + BUDGET_SLACK {
                        *ends.entry((EndKind::BudgetStop, u, key)).or_default() += m * play;
                        continue;
                    }
                }
                let next = bits(cost + amount);
                for t in &arm.state(u).transitions {
                    *mass[t.child].entry(next).or_default() += m * play * t.prob;
                }
            }
        }
    }
    ends.into_iter()
        .map(|((kind, state, cost), prob)| ArmOutcome {
            kind,
            state,
            cost: f64::from_bits(cost),
            prob,
        })
        .collect()
}

/// Exact expectation of an executor's outcome, by a forward pass over arms
/// in plan order whose state is (budget spent, best reward among abandoned
/// arms), or (spent, packing load) for the concave executor.
///
/// Budgeted and concave executors need integer costs so that the set of
/// reachable spend levels stays small and exact.
pub fn evaluate_plan_exact(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
) -> Result<ExactEvaluation> {
    check_inputs(instance, plan, policies, executor)?;
    if executor != Executor::Lagrangean {
        instance.ensure_integer_costs()?;
    }
    match executor {
        Executor::Concave => evaluate_concave(instance, plan, policies),
        _ => Ok(evaluate_single_choice(instance, plan, policies, executor)),
    }
}

fn evaluate_single_choice(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
) -> ExactEvaluation {
    let budget = plan.budget;
    let budgeted = executor != Executor::Lagrangean;
    if budgeted && unaffordable(instance, budget) {
        let reward = instance.best_root_reward();
        return ExactEvaluation {
            executor,
            value: reward,
            expected_reward: reward,
            expected_cost: 0.0,
        };
    }
    let mut reward = 0.0;
    let mut cost = 0.0;
    // (spent, best abandoned reward) -> probability; the Lagrangean run
    // keeps spent at zero and books costs as they occur.
    let mut front: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    front.insert((bits(0.0), f64::NEG_INFINITY.to_bits()), 1.0);
    for ranked in &plan.order {
        let j = ranked.arm;
        let arm = &instance.arms[j];
        let pol = &policies[j];
        let mut cache: HashMap<u64, Vec<ArmOutcome>> = HashMap::new();
        let mut next: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (&(spent_key, best_key), &m) in &front {
            let spent = f64::from_bits(spent_key);
            let best = f64::from_bits(best_key);
            let outcomes = cache.entry(spent_key).or_insert_with(|| {
                let allowance = (executor == Executor::GreedyOrder).then_some(budget - spent);
                arm_outcomes(arm, pol, allowance)
            });
            for o in outcomes.iter() {
                let p = m * o.prob;
                let r = arm.state(o.state).reward;
                let total = spent + o.cost;
                if !budgeted {
                    cost += p * o.cost;
                }
                match o.kind {
                    EndKind::Exploit(_) | EndKind::BudgetStop => {
                        reward += p * r;
                        if budgeted {
                            cost += p * total;
                        }
                    }
                    EndKind::Abandon => {
                        if executor == Executor::GreedyViolate && total > budget {
                            reward += p * r;
                            cost += p * total;
                        } else {
                            let key_spent = if budgeted { bits(total) } else { bits(0.0) };
                            *next.entry((key_spent, best.max(r).to_bits())).or_default() += p;
                        }
                    }
                }
            }
        }
        front = next;
    }
    for (&(spent_key, best_key), &m) in &front {
        reward += m * f64::from_bits(best_key);
        if budgeted {
            cost += m * f64::from_bits(spent_key);
        }
    }
    let value = if budgeted { reward } else { reward - cost };
    ExactEvaluation {
        executor,
        value,
        expected_reward: reward,
        expected_cost: cost,
    }
}

fn evaluate_concave(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
) -> Result<ExactEvaluation> {
    let problem = concave_problem(instance)?;
    let budget = plan.budget;
    let idle: Vec<f64> = instance
        .arms
        .iter()
        .zip(policies)
        .map(|(arm, pol)| pol.value_at(arm, arm.root(), 0.0))
        .collect();
    // Value of the arms after plan position k when exploration stops there.
    let mut tail = vec![0.0; plan.order.len() + 1];
    for k in (0..plan.order.len()).rev() {
        tail[k] = tail[k + 1] + idle[plan.order[k].arm];
    }
    let mut value = 0.0;
    let mut cost = 0.0;
    let mut front: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    front.insert((bits(0.0), bits(0.0)), 1.0);
    for (k, ranked) in plan.order.iter().enumerate() {
        let j = ranked.arm;
        let arm = &instance.arms[j];
        let pol = &policies[j];
        let grid = pol.grid.expect("concave policy has a grid");
        let table = pol.tables.as_ref().expect("concave policy has tables");
        let mut cache: HashMap<u64, Vec<ArmOutcome>> = HashMap::new();
        let mut next: BTreeMap<(u64, u64), f64> = BTreeMap::new();
        for (&(spent_key, load_key), &m) in &front {
            let spent = f64::from_bits(spent_key);
            let load = f64::from_bits(load_key);
            let outcomes = cache
                .entry(spent_key)
                .or_insert_with(|| arm_outcomes(arm, pol, Some(budget - spent)));
            for o in outcomes.iter() {
                let p = m * o.prob;
                let e = match o.kind {
                    EndKind::Exploit(l) => l as f64 / grid as f64,
                    EndKind::Abandon => 0.0,
                    EndKind::BudgetStop => 1.0,
                };
                value += p * interpolate(&table[o.state], grid, e / 2.0);
                let total = spent + o.cost;
                let new_load = load + problem.sigmas[j] * e;
                if o.kind == EndKind::BudgetStop || new_load >= problem.capacity - LOAD_SLACK {
                    value += p * tail[k + 1];
                    cost += p * total;
                } else {
                    *next.entry((bits(total), bits(new_load))).or_default() += p;
                }
            }
        }
        front = next;
    }
    for (&(spent_key, _), &m) in &front {
        cost += m * f64::from_bits(spent_key);
    }
    Ok(ExactEvaluation {
        executor: Executor::Concave,
        value,
        expected_reward: value,
        expected_cost: cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloReport {
    pub executor: Executor,
    pub reps: u64,
    pub seed: u64,
    pub mean: f64,
    pub std_error: f64,
    pub mean_cost: f64,
    pub max_cost: f64,
    /// Largest packing load over concave traces.
    pub max_load: Option<f64>,
    /// Number of traces that failed [`check_trace`].
    pub violations: u64,
    /// The first few problems found, prefixed by replication index.
    pub violation_examples: Vec<String>,
}

struct RepSummary {
    value: f64,
    cost: f64,
    load: Option<f64>,
    issues: Vec<String>,
}

const MAX_EXAMPLES: usize = 10;

/// Mean and standard error of `reps` independent traces. Replication `k`
/// uses RNG stream `k` of `seed`, so the first `m` replications of a longer
/// run reproduce an `m`-replication run exactly.
pub fn monte_carlo_evaluate(
    instance: &BanditInstance,
    plan: &GreedyPlan,
    policies: &[SingleArmPolicy],
    executor: Executor,
    reps: u64,
    seed: u64,
) -> Result<MonteCarloReport> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    check_inputs(instance, plan, policies, executor)?;
    let summaries: Vec<RepSummary> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let trace = run(instance, plan, policies, executor, seed, k);
            RepSummary {
                value: trace.value,
                cost: trace.total_cost,
                load: trace_load(instance, &trace),
                issues: check_trace(instance, plan, &trace),
            }
        })
        .collect();
    let n = reps as f64;
    let mean = summaries.iter().map(|s| s.value).sum::<f64>() / n;
    let var = if reps > 1 {
        summaries.iter().map(|s| (s.value - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut violations = 0;
    let mut examples = Vec::new();
    for (k, s) in summaries.iter().enumerate() {
        if !s.issues.is_empty() {
            violations += 1;
            for issue in &s.issues {
                if examples.len() < MAX_EXAMPLES {
                    examples.push(format!("rep {k}: {issue}"));
                }
            }
        }
    }
    Ok(MonteCarloReport {
        executor,
        reps,
        seed,
        mean,
        std_error: (var / n).sqrt(),
        mean_cost: summaries.iter().map(|s| s.cost).sum::<f64>() / n,
        max_cost: summaries.iter().map(|s| s.cost).fold(0.0, f64::max),
        max_load: summaries.iter().filter_map(|s| s.load).reduce(f64::max),
        violations,
        violation_examples: examples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relax::{extract_single_arm_policies, solve_relaxation};
    use crate::statespace::{build_beta_bernoulli_arm, build_two_level_arm};

    fn gap_instance(n: usize) -> BanditInstance {
        let p = 1.0 / n as f64;
        let arms = (0..n)
            .map(|i| build_two_level_arm(format!("a{i}"), &[0.0, 1.0], &[1.0 - p, p], 1.0, 0.0).unwrap())
            .collect();
        BanditInstance::budgeted(arms, n as f64)
    }

    fn rounded(instance: &BanditInstance, alpha: f64) -> (Vec<SingleArmPolicy>, GreedyPlan) {
        let sol = solve_relaxation(instance).unwrap();
        let pols = extract_single_arm_policies(&sol, instance).unwrap();
        let plan = make_greedy_plan(&pols, instance, alpha).unwrap();
        (pols, plan)
    }

    /// A policy that always plays internal states and exploits leaves.
    fn play_to_leaves(arm: &ArmStateSpace, index: usize) -> SingleArmPolicy {
        let mut w = vec![0.0; arm.len()];
        let parents = arm.parents();
        for u in arm.topological_order().unwrap() {
            w[u] = if u == arm.root() {
                1.0
            } else {
                parents[u].iter().map(|&(v, p)| w[v] * p).sum()
            };
        }
        let leaf = |u: usize| arm.state(u).is_leaf();
        let z: Vec<f64> = (0..arm.len()).map(|u| if leaf(u) { 0.0 } else { w[u] }).collect();
        let x: Vec<Vec<f64>> = (0..arm.len()).map(|u| vec![if leaf(u) { w[u] } else { 0.0 }]).collect();
        let mut p = SingleArmPolicy {
            arm: index,
            arm_id: arm.id().to_string(),
            variant: RelaxationVariant::Budgeted,
            reachable: w.iter().map(|&v| v > 0.0).collect(),
            w,
            z,
            x,
            grid: None,
            tables: None,
            explore_prob: 0.0,
            reward: 0.0,
            cost: 0.0,
        };
        let (pp, r, c) = p.statistics(arm);
        p.explore_prob = pp;
        p.reward = r;
        p.cost = c;
        p
    }

    fn stats_policy(index: usize, id: &str, r: f64, p: f64, c: f64) -> SingleArmPolicy {
        SingleArmPolicy {
            arm: index,
            arm_id: id.into(),
            variant: RelaxationVariant::Budgeted,
            w: vec![1.0, 0.5, 0.5],
            z: vec![0.0; 3],
            x: vec![vec![0.0]; 3],
            reachable: vec![true; 3],
            grid: None,
            tables: None,
            explore_prob: p,
            reward: r,
            cost: c,
        }
    }

    #[test]
    fn symmetric_arms_order_by_id() {
        let inst = gap_instance(4);
        let (_, plan) = rounded(&inst, 1.0);
        let ids: Vec<&str> = plan.order.iter().map(|r| r.arm_id.as_str()).collect();
        assert_eq!(ids, ["a0", "a1", "a2", "a3"]);
        assert_eq!(plan.variant, PlanVariant::Budgeted);
    }

    #[test]
    fn ratio_ordering_arithmetic() {
        let arms = vec![
            build_two_level_arm("x", &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap(),
            build_two_level_arm("y", &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::budgeted(arms, 2.0);
        let pols = vec![stats_policy(0, "x", 0.6, 0.5, 1.0), stats_policy(1, "y", 0.3, 0.1, 0.2)];
        let plan = make_greedy_plan(&pols, &inst, 1.0).unwrap();
        assert_eq!(plan.arm_order(), [1, 0]);
        assert!((plan.order[0].ratio - 1.5).abs() < 1e-12);
        assert!((plan.order[1].ratio - 0.6).abs() < 1e-12);
        assert!(make_greedy_plan(&pols, &inst, 0.5).is_err());
        let bicriteria = make_greedy_plan(&pols, &inst, 2.0).unwrap();
        assert_eq!(bicriteria.budget, 4.0);
        assert_eq!(bicriteria.variant, PlanVariant::Bicriteria { alpha: 2.0 });
    }

    #[test]
    fn lagrangean_free_value_sorts_first() {
        let arms = vec![
            build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], 0.1, 0.0).unwrap(),
            build_two_level_arm("b", &[0.0, 1.0], &[0.5, 0.5], 0.1, 0.0).unwrap(),
            build_two_level_arm("c", &[0.0, 1.0], &[0.5, 0.5], 0.1, 0.0).unwrap(),
        ];
        let inst = BanditInstance::lagrangean(arms);
        let mk = |i, id: &str, r, p, c| SingleArmPolicy {
            variant: RelaxationVariant::Lagrangean,
            ..stats_policy(i, id, r, p, c)
        };
        // nu/mu: a = 0 (dead), b = 0.2 / 0 (free), c = 0.3 / 0.5.
        let pols = vec![mk(0, "a", 0.0, 0.0, 0.0), mk(1, "b", 0.3, 0.0, 0.1), mk(2, "c", 0.4, 0.5, 0.1)];
        let plan = make_greedy_plan(&pols, &inst, 1.0).unwrap();
        assert_eq!(plan.arm_order(), [1, 2, 0]);
        assert_eq!(plan.order[0].ratio, f64::INFINITY);
    }

    #[test]
    fn gap_instance_exact_value() {
        let inst = gap_instance(4);
        let (pols, plan) = rounded(&inst, 1.0);
        let expected = 175.0 / 256.0;
        for ex in [Executor::GreedyOrder, Executor::GreedyViolate] {
            let eval = evaluate_plan_exact(&inst, &plan, &pols, ex).unwrap();
            assert!((eval.value - expected).abs() < 1e-12, "{ex:?}");
            // A hit ends exploration, so arm k is reached w.p. (3/4)^k.
            let cost: f64 = (0..4).map(|k| 0.75f64.powi(k)).sum();
            assert!((eval.expected_cost - cost).abs() < 1e-12);
        }
        for seed in 0..20 {
            let t = execute_greedy_order(&inst, &plan, &pols, seed).unwrap();
            let hit = t.final_states.iter().enumerate().any(|(i, &s)| inst.arms[i].state(s).reward == 1.0);
            assert_eq!(t.reward, if hit { 1.0 } else { 0.0 });
            if !hit {
                assert_eq!(t.total_cost, 4.0);
            }
            assert!(check_trace(&inst, &plan, &t).is_empty());
        }
    }

    #[test]
    fn zero_budget_exploits_best_root() {
        let arms = vec![
            build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap(),
            build_two_level_arm("b", &[0.5, 0.9], &[0.5, 0.5], 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::budgeted(arms, 0.0);
        let (pols, plan) = rounded(&inst, 1.0);
        let t = execute_greedy_order(&inst, &plan, &pols, 3).unwrap();
        assert_eq!(t.exploited, Some((1, inst.arms[1].root())));
        assert_eq!(t.total_cost, 0.0);
        assert!(t.events.is_empty());
        let eval = evaluate_plan_exact(&inst, &plan, &pols, Executor::GreedyOrder).unwrap();
        assert!((eval.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn forced_single_play() {
        let arm = build_beta_bernoulli_arm("a", 1, 1, 1, 1.0, 0.0).unwrap();
        let pol = play_to_leaves(&arm, 0);
        let inst = BanditInstance::budgeted(vec![arm], 1.0);
        let plan = make_greedy_plan(std::slice::from_ref(&pol), &inst, 1.0).unwrap();
        let mut seen = [false; 2];
        for seed in 0..40 {
            let t = execute_greedy_order(&inst, &plan, std::slice::from_ref(&pol), seed).unwrap();
            let plays = t.events.iter().filter(|e| e.action == TraceAction::Play).count();
            assert_eq!(plays, 1);
            assert_eq!(t.total_cost, 1.0);
            if (t.reward - 2.0 / 3.0).abs() < 1e-12 {
                seen[0] = true;
            } else {
                assert!((t.reward - 1.0 / 3.0).abs() < 1e-12);
                seen[1] = true;
            }
        }
        assert_eq!(seen, [true, true]);
    }

    #[test]
    fn violate_overshoots_by_at_most_one_arm() {
        let arm = build_beta_bernoulli_arm("a", 1, 1, 3, 1.0, 0.0).unwrap();
        let pol = play_to_leaves(&arm, 0);
        let inst = BanditInstance::budgeted(vec![arm], 2.0);
        let pols = vec![pol];
        let plan = make_greedy_plan(&pols, &inst, 1.0).unwrap();
        let c_max = max_single_arm_cost(&inst);
        assert_eq!(c_max, 3.0);
        for seed in 0..10 {
            let v = execute_greedy_violate(&inst, &plan, &pols, seed).unwrap();
            assert_eq!(v.total_cost, 3.0);
            assert!(v.total_cost <= inst.budget + c_max);
            assert!(check_trace(&inst, &plan, &v).is_empty());
            let o = execute_greedy_order(&inst, &plan, &pols, seed).unwrap();
            assert_eq!(o.total_cost, 2.0);
            assert_eq!(o.stop, StopReason::BudgetStop);
        }
        let o = evaluate_plan_exact(&inst, &plan, &pols, Executor::GreedyOrder).unwrap();
        let v = evaluate_plan_exact(&inst, &plan, &pols, Executor::GreedyViolate).unwrap();
        assert!((o.value - v.value).abs() < 1e-12);
        assert!((o.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn violate_matches_order_off_the_boundary() {
        let inst = gap_instance(3);
        let (pols, plan) = rounded(&inst, 1.0);
        for seed in 0..20 {
            let o = execute_greedy_order(&inst, &plan, &pols, seed).unwrap();
            let v = execute_greedy_violate(&inst, &plan, &pols, seed).unwrap();
            assert_ne!(o.stop, StopReason::BudgetStop);
            assert_eq!(o.events, v.events);
            assert_eq!(o.reward, v.reward);
        }
    }

    fn mixed_instance() -> BanditInstance {
        let arms = vec![
            build_beta_bernoulli_arm("a", 1, 1, 2, 1.0, 1.0).unwrap(),
            build_two_level_arm("b", &[0.1, 0.9, 0.4], &[0.4, 0.3, 0.3], 2.0, 0.0).unwrap(),
            build_beta_bernoulli_arm("c", 2, 1, 2, 1.0, 0.0).unwrap(),
        ];
        BanditInstance::budgeted(arms, 3.0)
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let inst = mixed_instance();
        let (pols, plan) = rounded(&inst, 1.0);
        for ex in [Executor::GreedyOrder, Executor::GreedyViolate] {
            let exact = evaluate_plan_exact(&inst, &plan, &pols, ex).unwrap();
            let mc = monte_carlo_evaluate(&inst, &plan, &pols, ex, 40_000, 11).unwrap();
            assert!(
                (mc.mean - exact.value).abs() <= 3.0 * mc.std_error + 1e-12,
                "{ex:?}: {} vs {} (se {})",
                mc.mean,
                exact.value,
                mc.std_error
            );
            assert_eq!(mc.violations, 0, "{:?}", mc.violation_examples);
        }
    }

    #[test]
    fn replication_streams_are_prefix_stable() {
        let inst = mixed_instance();
        let (pols, plan) = rounded(&inst, 1.0);
        let single = monte_carlo_evaluate(&inst, &plan, &pols, Executor::GreedyOrder, 1, 5).unwrap();
        let trace = execute_greedy_order(&inst, &plan, &pols, 5).unwrap();
        assert_eq!(single.mean, trace.value);
        for k in 0..50 {
            let a = execute(&inst, &plan, &pols, Executor::GreedyOrder, 5, k).unwrap();
            let b = execute(&inst, &plan, &pols, Executor::GreedyOrder, 5, k).unwrap();
            assert_eq!(a, b);
        }
        let short = monte_carlo_evaluate(&inst, &plan, &pols, Executor::GreedyOrder, 100, 5).unwrap();
        let again = monte_carlo_evaluate(&inst, &plan, &pols, Executor::GreedyOrder, 100, 5).unwrap();
        assert_eq!(short, again);
    }

    #[test]
    fn lagrangean_profit() {
        let safe = build_two_level_arm("safe", &[0.5], &[1.0], 0.0, 0.0).unwrap();
        let coin = build_two_level_arm("coin", &[0.0, 1.0], &[0.5, 0.5], 0.1, 0.0).unwrap();
        let inst = BanditInstance::lagrangean(vec![safe, coin]);
        let sol = solve_relaxation(&inst).unwrap();
        let pols = extract_single_arm_policies(&sol, &inst).unwrap();
        let plan = make_greedy_plan(&pols, &inst, 1.0).unwrap();
        let eval = evaluate_plan_exact(&inst, &plan, &pols, Executor::Lagrangean).unwrap();
        assert!(eval.value >= sol.gamma_star / 2.0 - 1e-9);
        let mut negative = false;
        for seed in 0..50 {
            let t = execute_lagrangean_greedy(&inst, &plan, &pols, seed).unwrap();
            assert!((t.value - (t.reward - t.total_cost)).abs() < 1e-12);
            negative |= t.value < 0.0;
        }
        // The coin arm is inspected first; a 0 observation with no exploit
        // falls back to the safe arm, so no trace loses money here.
        assert!(!negative);
    }

    #[test]
    fn lagrangean_zero_rewards() {
        let arm = build_two_level_arm("a", &[0.0, 0.0], &[0.5, 0.5], 0.1, 0.0).unwrap();
        let inst = BanditInstance::lagrangean(vec![arm]);
        let sol = solve_relaxation(&inst).unwrap();
        let pols = extract_single_arm_policies(&sol, &inst).unwrap();
        let plan = make_greedy_plan(&pols, &inst, 1.0).unwrap();
        let eval = evaluate_plan_exact(&inst, &plan, &pols, Executor::Lagrangean).unwrap();
        assert_eq!(eval.value, 0.0);
        assert_eq!(eval.expected_cost, 0.0);
    }

    #[test]
    fn lagrangean_trace_can_lose() {
        // Forced inspection of a worthless arm: every trace pays 0.1 and the
        // fallback exploits the zero-reward root.
        let arm = build_two_level_arm("a", &[0.0, 0.0], &[0.5, 0.5], 0.1, 0.0).unwrap();
        let mut pol = play_to_leaves(&arm, 0);
        pol.variant = RelaxationVariant::Lagrangean;
        for x in pol.x.iter_mut() {
            x[0] = 0.0;
        }
        let inst = BanditInstance::lagrangean(vec![arm]);
        let plan = make_greedy_plan(std::slice::from_ref(&pol), &inst, 1.0).unwrap();
        let t = execute_lagrangean_greedy(&inst, &plan, std::slice::from_ref(&pol), 0).unwrap();
        assert!((t.value + 0.1).abs() < 1e-12);
        assert_eq!(t.stop, StopReason::Fallback);
    }

    #[test]
    fn concave_top_one_halves_the_exploited_reward() {
        let inst = gap_instance(2).with_objective(Objective::Concave(ConcaveProblem::linear(vec![1.0; 2], 1.0, 0.5)));
        let (pols, plan) = rounded(&inst, 1.0);
        for seed in 0..30 {
            let t = execute_concave_greedy(&inst, &plan, &pols, seed).unwrap();
            let w = t.weights.as_ref().unwrap();
            let expected: f64 = (0..2)
                .map(|i| inst.arms[i].state(t.final_states[i]).reward * w[i])
                .sum();
            assert!((t.value - expected).abs() < 1e-12);
            assert!(w.iter().all(|&y| y <= 0.5));
            assert!(check_trace(&inst, &plan, &t).is_empty());
        }
        let exact = evaluate_plan_exact(&inst, &plan, &pols, Executor::Concave).unwrap();
        let mc = monte_carlo_evaluate(&inst, &plan, &pols, Executor::Concave, 20_000, 2).unwrap();
        assert!((mc.mean - exact.value).abs() <= 3.0 * mc.std_error + 1e-12);
    }

    #[test]
    fn concave_all_select() {
        let arms = vec![
            build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap(),
            build_beta_bernoulli_arm("b", 2, 1, 1, 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::concave(arms, 100.0, ConcaveProblem::linear(vec![1.0; 2], 2.0, 0.5));
        let (pols, plan) = rounded(&inst, 1.0);
        for seed in 0..10 {
            let t = execute_concave_greedy(&inst, &plan, &pols, seed).unwrap();
            let expected: f64 = (0..2)
                .map(|i| 0.5 * inst.arms[i].state(t.final_states[i]).reward)
                .sum();
            assert_eq!(t.weights.as_deref(), Some(&[0.5, 0.5][..]));
            assert!((t.value - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn concave_load_stays_below_twice_capacity() {
        let arms = vec![
            build_beta_bernoulli_arm("a", 1, 1, 2, 1.0, 0.0).unwrap(),
            build_two_level_arm("b", &[0.2, 0.8], &[0.5, 0.5], 1.0, 1.0).unwrap(),
            build_beta_bernoulli_arm("c", 1, 2, 2, 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::concave(arms, 3.0, ConcaveProblem::linear(vec![1.0, 0.5, 1.0], 1.0, 0.25));
        let (pols, plan) = rounded(&inst, 1.0);
        let mc = monte_carlo_evaluate(&inst, &plan, &pols, Executor::Concave, 10_000, 9).unwrap();
        assert_eq!(mc.violations, 0, "{:?}", mc.violation_examples);
        assert!(mc.max_load.unwrap() <= 1.0);
        let exact = evaluate_plan_exact(&inst, &plan, &pols, Executor::Concave).unwrap();
        assert!((mc.mean - exact.value).abs() <= 3.0 * mc.std_error + 1e-12);
    }

    #[test]
    fn executor_must_match_plan() {
        let inst = gap_instance(2);
        let (pols, plan) = rounded(&inst, 1.0);
        assert!(execute(&inst, &plan, &pols, Executor::Lagrangean, 0, 0).is_err());
        assert!(evaluate_plan_exact(&inst, &plan, &pols, Executor::Concave).is_err());
    }

    #[test]
    fn non_integer_costs_rejected_by_exact_evaluation() {
        let arm = build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], 0.5, 0.0).unwrap();
        let inst = BanditInstance::budgeted(vec![arm], 1.0);
        let (pols, plan) = rounded(&inst, 1.0);
        assert!(matches!(
            evaluate_plan_exact(&inst, &plan, &pols, Executor::GreedyOrder),
            Err(Error::NonIntegerCost { .. })
        ));
    }

    #[test]
    fn json_lines_export() {
        let inst = gap_instance(2);
        let (pols, plan) = rounded(&inst, 1.0);
        let t = execute_greedy_order(&inst, &plan, &pols, 1).unwrap();
        let text = trace_to_json_lines(&inst, &t);
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), t.events.len() + 1);
        let summary = lines.last().unwrap();
        assert_eq!(summary["summary"], true);
        assert_eq!(summary["seed"], 1);
        assert_eq!(lines[0]["action"], "switch");
        assert_eq!(lines[0]["arm"], "a0");
    }
}
