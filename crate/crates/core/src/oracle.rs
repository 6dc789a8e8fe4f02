//! Exact optimal adaptive policies on small instances, and exact state
//! occupancies of arbitrary adaptive policies.
//!
//! [`dp_optimal`] runs a memoized recursion over joint states (every arm's
//! current state, remaining budget, last arm played). When no arm has a
//! switch cost, arms with identical state spaces are interchangeable, so the
//! states of each such class are sorted and the last-played component is
//! dropped.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::policy::{best_arm, charge, unaffordable, GreedyPlan, BUDGET_SLACK};
use crate::relax::{ArmValues, SingleArmPolicy};
use crate::statespace::{BanditInstance, Objective};

/// Default cap on the estimated number of joint states.
pub const DEFAULT_STATE_LIMIT: usize = 10_000_000;

/// Play-by-play position of a multi-arm policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JointState {
    pub states: Vec<usize>,
    /// Remaining integer budget (unused by the Lagrangean objective).
    pub remaining: i64,
    pub last: Option<usize>,
}

impl JointState {
    pub fn initial(instance: &BanditInstance) -> Self {
        Self {
            states: instance.arms.iter().map(|a| a.root()).collect(),
            remaining: integer_budget(instance.budget),
            last: None,
        }
    }
}

fn integer_budget(budget: f64) -> i64 {
    (budget + BUDGET_SLACK).floor().max(0.0) as i64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Play(usize),
    Exploit(usize),
}

/// A (possibly randomized) multi-arm exploration policy. `decide` returns
/// the distribution over the next decision together with the memory to
/// carry forward; probabilities must sum to one.
pub trait AdaptivePolicy {
    type Memory: Clone + Eq + Hash + Ord;

    fn initial_memory(&self) -> Self::Memory;

    fn decide(&self, state: &JointState, memory: &Self::Memory) -> Vec<(f64, Decision, Self::Memory)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Choice {
    Stop(u32),
    Play(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleObjective {
    Budgeted,
    Lagrangean,
}

/// Optimal value and decision table from [`dp_optimal`].
#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub value: f64,
    pub objective: OracleObjective,
    pub symmetric: bool,
    pub estimated_states: f64,
    classes: Vec<Vec<usize>>,
    pos_class: Vec<usize>,
    memo: HashMap<Vec<u32>, (f64, Choice)>,
}

impl OracleSolution {
    pub fn states_evaluated(&self) -> usize {
        self.memo.len()
    }

    fn key(&self, states: &[usize], remaining: i64, last: Option<usize>) -> (Vec<u32>, Vec<usize>) {
        let mut key = Vec::with_capacity(states.len() + 2);
        let mut perm = Vec::with_capacity(states.len());
        for members in &self.classes {
            let mut v: Vec<(usize, usize)> = members.iter().map(|&a| (states[a], a)).collect();
            if self.symmetric {
                v.sort_unstable();
            }
            for (s, a) in v {
                key.push(s as u32);
                perm.push(a);
            }
        }
        if self.objective == OracleObjective::Budgeted {
            key.push(remaining as u32);
        }
        if !self.symmetric {
            key.push(last.map_or(u32::MAX, |l| l as u32));
        }
        (key, perm)
    }

    /// The optimal decision at `state`, if the recursion visited it.
    pub fn decision(&self, state: &JointState) -> Option<Decision> {
        let (key, perm) = self.key(&state.states, state.remaining, state.last);
        self.memo.get(&key).map(|&(_, c)| match c {
            Choice::Stop(p) => Decision::Exploit(perm[p as usize]),
            Choice::Play(p) => Decision::Play(perm[p as usize]),
        })
    }

    fn solve(&mut self, instance: &BanditInstance, states: &mut Vec<usize>, remaining: i64, last: Option<usize>) -> f64 {
        let (key, perm) = self.key(states, remaining, last);
        if let Some(&(v, _)) = self.memo.get(&key) {
            return v;
        }
        let stop = best_arm(instance, states);
        let mut best = instance.arms[stop].state(states[stop]).reward;
        let mut choice = Choice::Stop(perm.iter().position(|&a| a == stop).unwrap() as u32);
        for pos in 0..perm.len() {
            let i = perm[pos];
            let u = states[i];
            let arm = &instance.arms[i];
            if arm.state(u).is_leaf() {
                continue;
            }
            if self.symmetric
                && pos > 0
                && self.pos_class[pos] == self.pos_class[pos - 1]
                && states[perm[pos - 1]] == u
            {
                continue;
            }
            let amount = arm.state(u).play_cost + if last == Some(i) { 0.0 } else { arm.switch_cost() };
            let (next_remaining, penalty) = match self.objective {
                OracleObjective::Budgeted => {
                    let c = amount.round() as i64;
                    if c > remaining {
                        continue;
                    }
                    (remaining - c, 0.0)
                }
                OracleObjective::Lagrangean => (0, amount),
            };
            let mut v = -penalty;
            for t in &arm.state(u).transitions {
                states[i] = t.child;
                v += t.prob * self.solve(instance, states, next_remaining, Some(i));
            }
            states[i] = u;
            if v > best + 1e-12 {
                best = v;
                choice = Choice::Play(pos as u32);
            }
        }
        self.memo.insert(key, (best, choice));
        best
    }
}

impl AdaptivePolicy for OracleSolution {
    type Memory = ();

    fn initial_memory(&self) {}

    fn decide(&self, state: &JointState, _: &()) -> Vec<(f64, Decision, ())> {
        self.decision(state).map(|d| vec![(1.0, d, ())]).unwrap_or_default()
    }
}

fn uses_symmetry(instance: &BanditInstance) -> bool {
    instance.arms.iter().all(|a| a.switch_cost() == 0.0)
}

fn shape_classes(instance: &BanditInstance, symmetric: bool) -> Vec<Vec<usize>> {
    if !symmetric {
        return (0..instance.n_arms()).map(|i| vec![i]).collect();
    }
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for (i, arm) in instance.arms.iter().enumerate() {
        match classes.iter_mut().find(|c| instance.arms[c[0]].same_shape(arm)) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Upper bound on the number of joint states [`dp_optimal`] may visit.
pub fn estimate_joint_states(instance: &BanditInstance) -> f64 {
    let symmetric = uses_symmetry(instance);
    let classes = shape_classes(instance, symmetric);
    let mut count: f64 = classes
        .iter()
        .map(|c| {
            let s = instance.arms[c[0]].len() as u64;
            let k = c.len() as u64;
            if symmetric {
                binomial(s + k - 1, k)
            } else {
                s as f64
            }
        })
        .product();
    if !symmetric {
        count *= (instance.n_arms() + 1) as f64;
    }
    if !matches!(instance.objective, Objective::Lagrangean) {
        count *= (integer_budget(instance.budget) + 1) as f64;
    }
    count
}

/// Optimal expected exploitation reward (budgeted) or profit (Lagrangean)
/// over all adaptive policies. Budgeted instances need integer costs; the
/// budget is rounded down to an integer.
pub fn dp_optimal(instance: &BanditInstance, limit: usize) -> Result<OracleSolution> {
    instance.ensure_valid()?;
    let objective = match &instance.objective {
        Objective::Budgeted { .. } => {
            instance.ensure_integer_costs()?;
            OracleObjective::Budgeted
        }
        Objective::Lagrangean => OracleObjective::Lagrangean,
        Objective::Concave(_) => {
            return Err(Error::WrongVariant {
                expected: "budgeted or lagrangean",
                found: "concave",
            })
        }
    };
    let estimated = estimate_joint_states(instance);
    if estimated > limit as f64 {
        return Err(Error::StateSpaceTooLarge { estimated, limit });
    }
    let symmetric = uses_symmetry(instance);
    let classes = shape_classes(instance, symmetric);
    let pos_class = classes
        .iter()
        .enumerate()
        .flat_map(|(c, m)| std::iter::repeat_n(c, m.len()))
        .collect();
    let mut sol = OracleSolution {
        value: 0.0,
        objective,
        symmetric,
        estimated_states: estimated,
        classes,
        pos_class,
        memo: HashMap::new(),
    };
    let start = JointState::initial(instance);
    let mut states = start.states.clone();
    sol.value = sol.solve(instance, &mut states, start.remaining, None);
    Ok(sol)
}

/// Exact per-state occupancies of a policy: `w` (arm enters the state), `z`
/// (arm is played there) and `x` (arm is exploited there).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyStatistics {
    pub arms: Vec<ArmValues>,
    pub expected_reward: f64,
    /// Expected cost, charging a switch each time the played arm changes.
    pub expected_cost: f64,
    pub joint_states: usize,
}

/// Propagates the policy forward play by play from the initial joint state.
/// Costs must be integers so the remaining budget is tracked exactly.
pub fn enumerate_policy_statistics<P: AdaptivePolicy>(
    instance: &BanditInstance,
    policy: &P,
    limit: usize,
) -> Result<PolicyStatistics> {
    instance.ensure_integer_costs()?;
    let mut arms: Vec<ArmValues> = instance
        .arms
        .iter()
        .map(|a| ArmValues {
            w: vec![0.0; a.len()],
            z: vec![0.0; a.len()],
            x: vec![vec![0.0]; a.len()],
        })
        .collect();
    let mut reward = 0.0;
    let mut cost = 0.0;
    let mut visited = 0usize;
    let mut level: BTreeMap<(JointState, P::Memory), f64> = BTreeMap::new();
    level.insert((JointState::initial(instance), policy.initial_memory()), 1.0);
    let budgeted = !matches!(instance.objective, Objective::Lagrangean);
    while !level.is_empty() {
        visited += level.len();
        if visited > limit {
            return Err(Error::StateSpaceTooLarge {
                estimated: visited as f64,
                limit,
            });
        }
        let mut next: BTreeMap<(JointState, P::Memory), f64> = BTreeMap::new();
        for ((state, memory), m) in level {
            let decisions = policy.decide(&state, &memory);
            let total: f64 = decisions.iter().map(|d| d.0).sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "policy decision probabilities sum to {total} at {state:?}"
                )));
            }
            for (p, decision, memory) in decisions {
                let mass = m * p;
                if mass == 0.0 {
                    continue;
                }
                match decision {
                    Decision::Exploit(i) => {
                        let u = state.states[i];
                        arms[i].x[u][0] += mass;
                        reward += mass * instance.arms[i].state(u).reward;
                    }
                    Decision::Play(i) => {
                        let arm = &instance.arms[i];
                        let u = state.states[i];
                        if arm.state(u).is_leaf() {
                            return Err(Error::InvalidInput(format!(
                                "policy plays leaf `{}` of arm `{}`",
                                arm.state(u).id,
                                arm.id()
                            )));
                        }
                        let amount = arm.state(u).play_cost
                            + if state.last == Some(i) { 0.0 } else { arm.switch_cost() };
                        let c = amount.round() as i64;
                        if budgeted && c > state.remaining {
                            return Err(Error::InvalidInput(format!(
                                "policy overspends at {state:?}"
                            )));
                        }
                        arms[i].z[u] += mass;
                        cost += mass * amount;
                        for t in &arm.state(u).transitions {
                            let mut s = state.clone();
                            s.states[i] = t.child;
                            s.remaining -= if budgeted { c } else { 0 };
                            s.last = Some(i);
                            *next.entry((s, memory.clone())).or_default() += mass * t.prob;
                        }
                    }
                }
            }
        }
        level = next;
    }
    for (arm, vals) in instance.arms.iter().zip(arms.iter_mut()) {
        let parents = arm.parents();
        for (u, incoming) in parents.iter().enumerate() {
            vals.w[u] = if u == arm.root() {
                1.0
            } else {
                incoming.iter().map(|&(v, p)| vals.z[v] * p).sum()
            };
        }
    }
    Ok(PolicyStatistics {
        arms,
        expected_reward: reward,
        expected_cost: cost,
        joint_states: visited,
    })
}

/// Exploits a fixed arm immediately.
#[derive(Debug, Clone, Copy)]
pub struct FixedExploit(pub usize);

impl AdaptivePolicy for FixedExploit {
    type Memory = ();

    fn initial_memory(&self) {}

    fn decide(&self, _: &JointState, _: &()) -> Vec<(f64, Decision, ())> {
        vec![(1.0, Decision::Exploit(self.0), ())]
    }
}

/// GreedyOrder as an adaptive policy; the memory is the plan position.
pub struct GreedyOrderPolicy<'a> {
    pub instance: &'a BanditInstance,
    pub plan: &'a GreedyPlan,
    pub policies: &'a [SingleArmPolicy],
}

impl AdaptivePolicy for GreedyOrderPolicy<'_> {
    type Memory = usize;

    fn initial_memory(&self) -> usize {
        0
    }

    fn decide(&self, state: &JointState, &pos: &usize) -> Vec<(f64, Decision, usize)> {
        let instance = self.instance;
        let at_start = pos == 0 && state.last.is_none();
        if at_start && unaffordable(instance, self.plan.budget) {
            return vec![(1.0, Decision::Exploit(best_arm(instance, &state.states)), pos)];
        }
        let mut out = Vec::new();
        let mut carry = 1.0;
        let mut k = pos;
        while carry > 0.0 {
            if k == self.plan.order.len() {
                out.push((carry, Decision::Exploit(best_arm(instance, &state.states)), k));
                break;
            }
            let j = self.plan.order[k].arm;
            let arm = &instance.arms[j];
            let u = state.states[j];
            let (play, exploit, abandon) = self.policies[j].action_probs(u);
            let exploit: f64 = exploit.iter().sum();
            if exploit > 0.0 {
                out.push((carry * exploit, Decision::Exploit(j), k));
            }
            if play > 0.0 {
                let spent = self.plan.budget.floor() - state.remaining as f64;
                let blocked = charge(arm, u) > self.plan.budget - spent + BUDGET_SLACK;
                let d = if blocked { Decision::Exploit(j) } else { Decision::Play(j) };
                out.push((carry * play, d, k));
            }
            carry *= abandon;
            k += 1;
        }
        out
    }
}
