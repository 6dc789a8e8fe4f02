//! Arm state spaces: DAGs of belief states, the two canonical families of
//! priors, the bandit instance container, and model validation.
//!
//! Every state carries the expected posterior reward `r_u`, the cost `c_u`
//! of playing in it, and the outcome distribution over child states. Rewards
//! must form a martingale along every transition: a state's reward equals
//! the probability-weighted reward of its children.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for normalization, martingale and concavity checks.
pub const MODEL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub child: usize,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefState {
    pub id: String,
    pub reward: f64,
    pub play_cost: f64,
    pub transitions: Vec<Transition>,
}

impl BeliefState {
    pub fn is_leaf(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Input record for one state when assembling an arm by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub id: String,
    pub reward: f64,
    #[serde(default)]
    pub play_cost: f64,
    #[serde(default)]
    pub children: Vec<ChildRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChildRecord {
    pub state: String,
    pub prob: f64,
}

/// One arm: its belief-state DAG, root and switch-in cost.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmStateSpace {
    id: String,
    root: usize,
    states: Vec<BeliefState>,
    switch_cost: f64,
    index: HashMap<String, usize>,
}

impl ArmStateSpace {
    /// Assembles an arm from string-keyed records. Only referential integrity
    /// is enforced here; model properties are checked by [`validate_instance`].
    pub fn from_records(
        id: impl Into<String>,
        root: &str,
        switch_cost: f64,
        records: Vec<StateRecord>,
    ) -> Result<Self> {
        let id = id.into();
        let mut index = HashMap::with_capacity(records.len());
        for (i, rec) in records.iter().enumerate() {
            if index.insert(rec.id.clone(), i).is_some() {
                return Err(Error::InvalidInput(format!(
                    "arm `{id}` declares state `{}` twice",
                    rec.id
                )));
            }
        }
        let root_idx = *index.get(root).ok_or_else(|| {
            Error::InvalidInput(format!("arm `{id}` root `{root}` is not a declared state"))
        })?;
        let mut states = Vec::with_capacity(records.len());
        for rec in records {
            let mut transitions = Vec::with_capacity(rec.children.len());
            for child in &rec.children {
                let idx = *index.get(&child.state).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "arm `{id}` state `{}` points to unknown state `{}`",
                        rec.id, child.state
                    ))
                })?;
                transitions.push(Transition {
                    child: idx,
                    prob: child.prob,
                });
            }
            let play_cost = if transitions.is_empty() {
                0.0
            } else {
                rec.play_cost
            };
            states.push(BeliefState {
                id: rec.id,
                reward: rec.reward,
                play_cost,
                transitions,
            });
        }
        Ok(Self {
            id,
            root: root_idx,
            states,
            switch_cost,
            index,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn root_state(&self) -> &BeliefState {
        &self.states[self.root]
    }

    pub fn states(&self) -> &[BeliefState] {
        &self.states
    }

    pub fn state(&self, idx: usize) -> &BeliefState {
        &self.states[idx]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn switch_cost(&self) -> f64 {
        self.switch_cost
    }

    pub fn index_of(&self, state_id: &str) -> Option<usize> {
        self.index.get(state_id).copied()
    }

    /// Kahn ordering of all states; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree = vec![0usize; self.states.len()];
        for s in &self.states {
            for t in &s.transitions {
                indegree[t.child] += 1;
            }
        }
        let mut queue: VecDeque<usize> = (0..self.states.len())
            .filter(|&i| indegree[i] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.states.len());
        while let Some(u) = queue.pop_front() {
            order.push(u);
            for t in &self.states[u].transitions {
                indegree[t.child] -= 1;
                if indegree[t.child] == 0 {
                    queue.push_back(t.child);
                }
            }
        }
        (order.len() == self.states.len()).then_some(order)
    }

    pub fn reachable(&self) -> Vec<bool> {
        let mut seen = vec![false; self.states.len()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for t in &self.states[u].transitions {
                if !seen[t.child] {
                    seen[t.child] = true;
                    stack.push(t.child);
                }
            }
        }
        seen
    }

    /// For each state, the list of `(parent, prob)` edges entering it.
    pub fn parents(&self) -> Vec<Vec<(usize, f64)>> {
        let mut parents = vec![Vec::new(); self.states.len()];
        for (u, s) in self.states.iter().enumerate() {
            for t in &s.transitions {
                parents[t.child].push((u, t.prob));
            }
        }
        parents
    }

    /// Longest root-to-leaf play count. Requires a DAG.
    pub fn depth(&self) -> usize {
        let order = self.topological_order().expect("arm state space must be a DAG");
        let mut depth = vec![0usize; self.states.len()];
        for &u in order.iter().rev() {
            depth[u] = self.states[u]
                .transitions
                .iter()
                .map(|t| depth[t.child] + 1)
                .max()
                .unwrap_or(0);
        }
        depth[self.root]
    }

    /// Switch cost plus the most expensive root-to-leaf sequence of plays:
    /// the most a single arm's exploration can ever cost.
    pub fn max_exploration_cost(&self) -> f64 {
        let order = self.topological_order().expect("arm state space must be a DAG");
        let mut worst = vec![0.0f64; self.states.len()];
        for &u in order.iter().rev() {
            let s = &self.states[u];
            worst[u] = s
                .transitions
                .iter()
                .map(|t| s.play_cost + worst[t.child])
                .fold(0.0, f64::max);
        }
        let path = worst[self.root];
        if path > 0.0 || !self.root_state().is_leaf() {
            self.switch_cost + path
        } else {
            0.0
        }
    }

    pub fn to_records(&self) -> Vec<StateRecord> {
        self.states
            .iter()
            .map(|s| StateRecord {
                id: s.id.clone(),
                reward: s.reward,
                play_cost: s.play_cost,
                children: s
                    .transitions
                    .iter()
                    .map(|t| ChildRecord {
                        state: self.states[t.child].id.clone(),
                        prob: t.prob,
                    })
                    .collect(),
            })
            .collect()
    }

    /// Structural equality of two arms up to their ids: same state order,
    /// rewards, costs and transitions.
    pub fn same_shape(&self, other: &ArmStateSpace) -> bool {
        self.root == other.root
            && self.switch_cost == other.switch_cost
            && self.states.len() == other.states.len()
            && self.states.iter().zip(&other.states).all(|(a, b)| {
                a.reward == b.reward && a.play_cost == b.play_cost && a.transitions == b.transitions
            })
    }
}

/// Builds a depth-1 star: the root's prior over deterministic values resolves
/// in a single play. Duplicate values are kept as separate leaves.
pub fn build_two_level_arm(
    id: impl Into<String>,
    values: &[f64],
    probs: &[f64],
    play_cost: f64,
    switch_cost: f64,
) -> Result<ArmStateSpace> {
    let id = id.into();
    if values.is_empty() || values.len() != probs.len() {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: need equally many values and probabilities (got {} and {})",
            values.len(),
            probs.len()
        )));
    }
    if values.iter().chain(probs).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: values and probabilities must be finite and non-negative"
        )));
    }
    if !(play_cost.is_finite() && play_cost >= 0.0 && switch_cost.is_finite() && switch_cost >= 0.0)
    {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: costs must be finite and non-negative"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MODEL_TOL {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: probabilities sum to {total}, not 1"
        )));
    }
    let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
    let mut records = vec![StateRecord {
        id: "root".into(),
        reward: mean,
        play_cost,
        children: (0..values.len())
            .map(|j| ChildRecord {
                state: format!("v{j}"),
                prob: probs[j],
            })
            .collect(),
    }];
    records.extend(values.iter().enumerate().map(|(j, &v)| StateRecord {
        id: format!("v{j}"),
        reward: v,
        play_cost: 0.0,
        children: Vec::new(),
    }));
    ArmStateSpace::from_records(id, "root", switch_cost, records)
}

/// Canonical id of a Beta posterior state.
pub fn beta_state_id(a: u32, b: u32) -> String {
    format!("B({a},{b})")
}

/// Builds the Beta-Bernoulli posterior DAG rooted at `B(alpha1, alpha2)`,
/// truncated after `depth` plays. A success moves `B(a,b)` to `B(a+1,b)` with
/// probability `a/(a+b)`; a failure moves it to `B(a,b+1)`.
pub fn build_beta_bernoulli_arm(
    id: impl Into<String>,
    alpha1: u32,
    alpha2: u32,
    depth: u32,
    play_cost: f64,
    switch_cost: f64,
) -> Result<ArmStateSpace> {
    let id = id.into();
    if alpha1 == 0 || alpha2 == 0 {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: Beta parameters must be positive (got {alpha1}, {alpha2})"
        )));
    }
    if !(play_cost.is_finite() && play_cost >= 0.0 && switch_cost.is_finite() && switch_cost >= 0.0)
    {
        return Err(Error::InvalidInput(format!(
            "arm `{id}`: costs must be finite and non-negative"
        )));
    }
    let mut records = Vec::new();
    for level in 0..=depth {
        for successes in 0..=level {
            let a = alpha1 + successes;
            let b = alpha2 + (level - successes);
            let n = f64::from(a + b);
            let children = if level < depth {
                vec![
                    ChildRecord {
                        state: beta_state_id(a + 1, b),
                        prob: f64::from(a) / n,
                    },
                    ChildRecord {
                        state: beta_state_id(a, b + 1),
                        prob: f64::from(b) / n,
                    },
                ]
            } else {
                Vec::new()
            };
            records.push(StateRecord {
                id: beta_state_id(a, b),
                reward: f64::from(a) / n,
                play_cost: if level < depth { play_cost } else { 0.0 },
                children,
            });
        }
    }
    ArmStateSpace::from_records(id, &beta_state_id(alpha1, alpha2), switch_cost, records)
}

/// Concave-utility exploitation: arm weights `y_i` under `sum sigma_i y_i <= B`
/// with per-state value functions sampled on the grid `l / L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcaveProblem {
    pub sigmas: Vec<f64>,
    #[serde(rename = "B")]
    pub capacity: f64,
    pub epsilon: f64,
    /// `arm id -> state id -> [g_u(0/L), g_u(1/L), ..., g_u(L/L)]`. When absent,
    /// every state uses the linear utility `g_u(y) = r_u * y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_tables: Option<BTreeMap<String, BTreeMap<String, Vec<f64>>>>,
}

impl ConcaveProblem {
    pub fn linear(sigmas: Vec<f64>, capacity: f64, epsilon: f64) -> Self {
        Self {
            sigmas,
            capacity,
            epsilon,
            value_tables: None,
        }
    }

    /// Grid resolution `L = ceil(n / epsilon)`.
    pub fn grid_size(&self, n_arms: usize) -> usize {
        let raw = n_arms as f64 / self.epsilon;
        // Guard against n/eps landing a hair above an integer.
        let l = (raw - 1e-9).ceil();
        (l.max(1.0)) as usize
    }

    /// The sampled table `zeta_u(l)` for `l = 0..=L`.
    pub fn table(&self, arm: &ArmStateSpace, state: usize, grid: usize) -> Vec<f64> {
        if let Some(tables) = &self.value_tables {
            if let Some(t) = tables
                .get(arm.id())
                .and_then(|m| m.get(&arm.state(state).id))
            {
                return t.clone();
            }
        }
        let r = arm.state(state).reward;
        (0..=grid).map(|l| r * l as f64 / grid as f64).collect()
    }

    fn diagnostics(&self, arms: &[ArmStateSpace], out: &mut Vec<Diagnostic>) {
        let bad = |kind, magnitude| Diagnostic {
            arm_id: String::new(),
            state_id: None,
            kind,
            magnitude,
        };
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            out.push(bad(DiagnosticKind::BadParameter("epsilon"), self.epsilon));
            return;
        }
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            out.push(bad(DiagnosticKind::BadParameter("B"), self.capacity));
        }
        if self.sigmas.len() != arms.len() {
            out.push(bad(
                DiagnosticKind::BadParameter("sigmas"),
                self.sigmas.len() as f64,
            ));
            return;
        }
        for (arm, &sigma) in arms.iter().zip(&self.sigmas) {
            if !(0.0..=self.capacity).contains(&sigma) {
                out.push(Diagnostic {
                    arm_id: arm.id().to_string(),
                    state_id: None,
                    kind: DiagnosticKind::SigmaOutOfRange,
                    magnitude: sigma,
                });
            }
        }
        let grid = self.grid_size(arms.len());
        for arm in arms {
            let tables: Vec<Vec<f64>> = (0..arm.len()).map(|u| self.table(arm, u, grid)).collect();
            for (u, t) in tables.iter().enumerate() {
                let at = |kind, magnitude| Diagnostic {
                    arm_id: arm.id().to_string(),
                    state_id: Some(arm.state(u).id.clone()),
                    kind,
                    magnitude,
                };
                if t.len() != grid + 1 {
                    out.push(at(DiagnosticKind::ValueTableLength, t.len() as f64));
                    continue;
                }
                if let Some(v) = t.iter().find(|v| !v.is_finite() || **v < 0.0) {
                    out.push(at(DiagnosticKind::NegativeValue, *v));
                }
                if let Some(drop) = t
                    .windows(2)
                    .map(|w| w[0] - w[1])
                    .find(|d| *d > MODEL_TOL)
                {
                    out.push(at(DiagnosticKind::DecreasingValue, drop));
                }
                if let Some(bend) = t
                    .windows(3)
                    .map(|w| w[2] - 2.0 * w[1] + w[0])
                    .find(|d| *d > MODEL_TOL)
                {
                    out.push(at(DiagnosticKind::NonConcave, bend));
                }
            }
            for (u, s) in arm.states().iter().enumerate() {
                if s.is_leaf() || tables[u].len() != grid + 1 {
                    continue;
                }
                let worst = (0..=grid)
                    .map(|l| {
                        let children: f64 = s
                            .transitions
                            .iter()
                            .map(|t| t.prob * tables[t.child].get(l).copied().unwrap_or(0.0))
                            .sum();
                        children - tables[u][l]
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                if worst > MODEL_TOL {
                    out.push(Diagnostic {
                        arm_id: arm.id().to_string(),
                        state_id: Some(s.id.clone()),
                        kind: DiagnosticKind::SuperMartingale,
                        magnitude: worst,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Maximize exploited reward under a hard cost budget. `alpha >= 1`
    /// relaxes the budget to `alpha * C` for the bicriteria planner.
    Budgeted { alpha: f64 },
    /// Maximize exploited reward minus total exploration cost.
    Lagrangean,
    Concave(ConcaveProblem),
}

impl Objective {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Budgeted { .. } => "budgeted",
            Objective::Lagrangean => "lagrangean",
            Objective::Concave(_) => "concave",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditInstance {
    pub arms: Vec<ArmStateSpace>,
    pub budget: f64,
    pub objective: Objective,
}

impl BanditInstance {
    pub fn budgeted(arms: Vec<ArmStateSpace>, budget: f64) -> Self {
        Self {
            arms,
            budget,
            objective: Objective::Budgeted { alpha: 1.0 },
        }
    }

    pub fn lagrangean(arms: Vec<ArmStateSpace>) -> Self {
        Self {
            arms,
            budget: 0.0,
            objective: Objective::Lagrangean,
        }
    }

    pub fn concave(arms: Vec<ArmStateSpace>, budget: f64, problem: ConcaveProblem) -> Self {
        Self {
            arms,
            budget,
            objective: Objective::Concave(problem),
        }
    }

    pub fn n_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn arm_index(&self, arm_id: &str) -> Option<usize> {
        self.arms.iter().position(|a| a.id() == arm_id)
    }

    pub fn total_states(&self) -> usize {
        self.arms.iter().map(ArmStateSpace::len).sum()
    }

    /// Largest single-arm exploration cost, including its switch cost.
    pub fn max_arm_cost(&self) -> f64 {
        self.arms
            .iter()
            .map(ArmStateSpace::max_exploration_cost)
            .fold(0.0, f64::max)
    }

    pub fn best_root_reward(&self) -> f64 {
        self.arms
            .iter()
            .map(|a| a.root_state().reward)
            .fold(0.0, f64::max)
    }

    pub fn with_objective(&self, objective: Objective) -> Self {
        Self {
            objective,
            ..self.clone()
        }
    }

    pub fn with_budget(&self, budget: f64) -> Self {
        Self {
            budget,
            ..self.clone()
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let record: InstanceRecord = serde_json::from_str(s)?;
        record.into_instance()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceRecord::from(self))?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// Fails with [`Error::Validation`] unless the model is clean.
    pub fn ensure_valid(&self) -> Result<()> {
        let diags = validate_instance(self);
        if diags.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(diags))
        }
    }

    /// Fails unless every play cost, switch cost and the budget are integers.
    pub fn ensure_integer_costs(&self) -> Result<()> {
        if let Some(d) = integer_cost_diagnostics(self).into_iter().next() {
            return Err(Error::NonIntegerCost {
                arm: d.arm_id,
                state: d.state_id.unwrap_or_else(|| "-".into()),
                cost: d.magnitude,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DiagnosticKind {
    /// Outgoing probabilities do not sum to one.
    Normalization,
    /// Reward differs from the expected reward of the children.
    Martingale,
    InvalidProbability,
    NegativeReward,
    NegativeCost,
    Cycle,
    Unreachable,
    DuplicateArm,
    BadBudget,
    NonIntegerCost,
    BadParameter(&'static str),
    SigmaOutOfRange,
    ValueTableLength,
    NegativeValue,
    DecreasingValue,
    NonConcave,
    SuperMartingale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub arm_id: String,
    pub state_id: Option<String>,
    pub kind: DiagnosticKind,
    pub magnitude: f64,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if !self.arm_id.is_empty() {
            write!(f, " at arm `{}`", self.arm_id)?;
        }
        if let Some(s) = &self.state_id {
            write!(f, " state `{s}`")?;
        }
        write!(f, " (magnitude {:e})", self.magnitude)
    }
}

fn arm_diagnostics(arm: &ArmStateSpace, out: &mut Vec<Diagnostic>) {
    let diag = |state: Option<&BeliefState>, kind, magnitude| Diagnostic {
        arm_id: arm.id().to_string(),
        state_id: state.map(|s| s.id.clone()),
        kind,
        magnitude,
    };
    if !(arm.switch_cost().is_finite() && arm.switch_cost() >= 0.0) {
        out.push(diag(None, DiagnosticKind::NegativeCost, arm.switch_cost()));
    }
    for s in arm.states() {
        if !(s.reward.is_finite() && s.reward >= 0.0) {
            out.push(diag(Some(s), DiagnosticKind::NegativeReward, s.reward));
        }
        if !(s.play_cost.is_finite() && s.play_cost >= 0.0) {
            out.push(diag(Some(s), DiagnosticKind::NegativeCost, s.play_cost));
        }
        if s.is_leaf() {
            continue;
        }
        if let Some(t) = s
            .transitions
            .iter()
            .find(|t| !(t.prob.is_finite() && (0.0..=1.0).contains(&t.prob)))
        {
            out.push(diag(Some(s), DiagnosticKind::InvalidProbability, t.prob));
        }
        let total: f64 = s.transitions.iter().map(|t| t.prob).sum();
        if (total - 1.0).abs() > MODEL_TOL {
            out.push(diag(Some(s), DiagnosticKind::Normalization, (total - 1.0).abs()));
        }
        let mean: f64 = s
            .transitions
            .iter()
            .map(|t| t.prob * arm.state(t.child).reward)
            .sum();
        if (s.reward - mean).abs() > MODEL_TOL {
            out.push(diag(Some(s), DiagnosticKind::Martingale, (s.reward - mean).abs()));
        }
    }
    if arm.topological_order().is_none() {
        out.push(diag(None, DiagnosticKind::Cycle, 1.0));
    }
    for (s, seen) in arm.states().iter().zip(arm.reachable()) {
        if !seen {
            out.push(diag(Some(s), DiagnosticKind::Unreachable, 1.0));
        }
    }
}

/// Checks every model assumption and reports each violation with its arm,
/// state and magnitude. An empty list means the instance is clean.
pub fn validate_instance(instance: &BanditInstance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for arm in &instance.arms {
        if !seen.insert(arm.id()) {
            out.push(Diagnostic {
                arm_id: arm.id().to_string(),
                state_id: None,
                kind: DiagnosticKind::DuplicateArm,
                magnitude: 1.0,
            });
        }
        arm_diagnostics(arm, &mut out);
    }
    let needs_budget = !matches!(instance.objective, Objective::Lagrangean);
    if needs_budget && !(instance.budget.is_finite() && instance.budget >= 0.0) {
        out.push(Diagnostic {
            arm_id: String::new(),
            state_id: None,
            kind: DiagnosticKind::BadBudget,
            magnitude: instance.budget,
        });
    }
    match &instance.objective {
        Objective::Budgeted { alpha } if !(alpha.is_finite() && *alpha >= 1.0) => {
            out.push(Diagnostic {
                arm_id: String::new(),
                state_id: None,
                kind: DiagnosticKind::BadParameter("alpha"),
                magnitude: *alpha,
            });
        }
        Objective::Concave(problem) => problem.diagnostics(&instance.arms, &mut out),
        _ => {}
    }
    out
}

/// Flags every non-integer cost (and a non-integer budget). Needed only by
/// the exact evaluator and the dynamic-programming oracle.
pub fn integer_cost_diagnostics(instance: &BanditInstance) -> Vec<Diagnostic> {
    let is_int = |x: f64| x.is_finite() && x.fract() == 0.0;
    let mut out = Vec::new();
    for arm in &instance.arms {
        if !is_int(arm.switch_cost()) {
            out.push(Diagnostic {
                arm_id: arm.id().to_string(),
                state_id: None,
                kind: DiagnosticKind::NonIntegerCost,
                magnitude: arm.switch_cost(),
            });
        }
        for s in arm.states().iter().filter(|s| !is_int(s.play_cost)) {
            out.push(Diagnostic {
                arm_id: arm.id().to_string(),
                state_id: Some(s.id.clone()),
                kind: DiagnosticKind::NonIntegerCost,
                magnitude: s.play_cost,
            });
        }
    }
    if !matches!(instance.objective, Objective::Lagrangean) && !is_int(instance.budget) {
        out.push(Diagnostic {
            arm_id: String::new(),
            state_id: None,
            kind: DiagnosticKind::NonIntegerCost,
            magnitude: instance.budget,
        });
    }
    out
}

// ---------------------------------------------------------------------------
// File format
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArmRecord {
    id: String,
    #[serde(default)]
    switch_cost: f64,
    root: String,
    states: Vec<StateRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum ObjectiveRecord {
    Budgeted {
        #[serde(default = "one")]
        alpha: f64,
    },
    Lagrangean,
    Concave(ConcaveProblem),
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct InstanceRecord {
    #[serde(default)]
    budget: f64,
    objective: ObjectiveRecord,
    arms: Vec<ArmRecord>,
}

impl InstanceRecord {
    fn into_instance(self) -> Result<BanditInstance> {
        let arms = self
            .arms
            .into_iter()
            .map(|a| ArmStateSpace::from_records(a.id, &a.root, a.switch_cost, a.states))
            .collect::<Result<Vec<_>>>()?;
        let objective = match self.objective {
            ObjectiveRecord::Budgeted { alpha } => Objective::Budgeted { alpha },
            ObjectiveRecord::Lagrangean => Objective::Lagrangean,
            ObjectiveRecord::Concave(p) => Objective::Concave(p),
        };
        Ok(BanditInstance {
            arms,
            budget: self.budget,
            objective,
        })
    }
}

impl From<&BanditInstance> for InstanceRecord {
    fn from(inst: &BanditInstance) -> Self {
        let objective = match &inst.objective {
            Objective::Budgeted { alpha } => ObjectiveRecord::Budgeted { alpha: *alpha },
            Objective::Lagrangean => ObjectiveRecord::Lagrangean,
            Objective::Concave(p) => ObjectiveRecord::Concave(p.clone()),
        };
        InstanceRecord {
            budget: inst.budget,
            objective,
            arms: inst
                .arms
                .iter()
                .map(|a| ArmRecord {
                    id: a.id().to_string(),
                    switch_cost: a.switch_cost(),
                    root: a.root_state().id.clone(),
                    states: a.to_records(),
                })
                .collect(),
        }
    }
}
