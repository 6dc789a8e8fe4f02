//! Instance generators, guarantee suites and the adaptivity demonstration.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonadaptive::nonadaptive_two_level;
use crate::oracle::{dp_optimal, estimate_joint_states, DEFAULT_STATE_LIMIT};
use crate::policy::{
    evaluate_plan_exact, make_greedy_plan, max_single_arm_cost, min_first_charge, monte_carlo_evaluate,
    stream_rng, Executor,
};
use crate::relax::{extract_single_arm_policies, solve_relaxation};
use crate::statespace::{
    build_beta_bernoulli_arm, build_two_level_arm, ArmStateSpace, BanditInstance, ChildRecord, ConcaveProblem,
    Objective, StateRecord,
};

fn arm_name(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len();
    format!("arm{i:0width$}")
}

/// `n` identical star arms with leaves `{0 w.p. 1 - 1/n, 1 w.p. 1/n}`, unit
/// play cost, no switch cost, budget `n`. The LP value is 1 while the best
/// policy earns `1 - (1 - 1/n)^n`.
pub fn gen_integrality_gap(n: usize) -> Result<BanditInstance> {
    if n == 0 {
        return Err(Error::InvalidInput("integrality-gap family needs n >= 1".into()));
    }
    let p = 1.0 / n as f64;
    let arms = (0..n)
        .map(|i| build_two_level_arm(arm_name(i, n), &[0.0, 1.0], &[1.0 - p, p], 1.0, 0.0))
        .collect::<Result<_>>()?;
    Ok(BanditInstance::budgeted(arms, n as f64))
}

/// Parameters of the adaptivity-gap construction for a given `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdaptivityGapParams {
    pub n: usize,
    pub q: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    /// Prior masses of the three reward models.
    pub prior: [f64; 3],
    /// Length of the chain of "only `a2` seen so far" states.
    pub depth: usize,
    pub budget: f64,
}

pub const ADAPTIVITY_MAX_N: usize = 1000;

impl AdaptivityGapParams {
    pub fn new(n: usize) -> Result<Self> {
        let root = (n as f64).sqrt().round() as usize;
        if !(4..=ADAPTIVITY_MAX_N).contains(&n) || root * root != n {
            return Err(Error::InvalidInput(format!(
                "adaptivity-gap family needs a perfect square 4 <= n <= {ADAPTIVITY_MAX_N}, got {n}"
            )));
        }
        let q = 1.0 / root as f64;
        Ok(Self {
            n,
            q,
            a1: 0.0,
            a2: (n as f64).powi(-9),
            a3: 1.0,
            prior: [1.0 - q, q * (1.0 - q), q * q],
            depth: 5 * n,
            budget: (5 * n) as f64,
        })
    }

    /// Expected reward of an arm known to follow the third model.
    pub fn r3_mean(&self) -> f64 {
        self.q * self.a3 + (1.0 - self.q) * self.a2
    }

    /// Posterior probability of the third model after `k` observations of
    /// `a2` and nothing else.
    pub fn posterior_r3(&self, k: usize) -> f64 {
        let r2 = self.prior[1];
        let r3 = self.prior[2] * (1.0 - self.q).powi(k as i32);
        r3 / (r2 + r3)
    }

    /// Posterior mean after `k >= 1` observations of `a2` only.
    pub fn chain_reward(&self, k: usize) -> f64 {
        let p3 = self.posterior_r3(k);
        (1.0 - p3) * self.a2 + p3 * self.r3_mean()
    }

    pub fn root_reward(&self) -> f64 {
        self.prior[1] * self.a2 + self.prior[2] * self.r3_mean()
    }

    fn arm(&self, id: String) -> Result<ArmStateSpace> {
        let q = self.q;
        let chain = |k: usize| format!("A{k}");
        let leaf = |id: &str, reward: f64| StateRecord {
            id: id.into(),
            reward,
            play_cost: 0.0,
            children: Vec::new(),
        };
        let child = |state: String, prob: f64| ChildRecord { state, prob };
        let mut records = vec![
            StateRecord {
                id: "root".into(),
                reward: self.root_reward(),
                play_cost: 1.0,
                children: vec![
                    child("R1".into(), self.prior[0]),
                    child("R3".into(), self.prior[2] * q),
                    child(chain(1), self.prior[1] + self.prior[2] * (1.0 - q)),
                ],
            },
            leaf("R1", self.a1),
            leaf("R3", self.r3_mean()),
        ];
        for k in 1..=self.depth {
            let hit = self.posterior_r3(k) * q;
            records.push(StateRecord {
                id: chain(k),
                reward: self.chain_reward(k),
                play_cost: 1.0,
                children: if k < self.depth {
                    vec![child("R3".into(), hit), child(chain(k + 1), 1.0 - hit)]
                } else {
                    Vec::new()
                },
            });
        }
        ArmStateSpace::from_records(id, "root", 0.0, records)
    }
}

/// `n` i.i.d. arms whose prior mixes three reward models: always `a1 = 0`,
/// always `a2 = n^-9`, and `a3 = 1` w.p. `q = 1/sqrt(n)` else `a2`. States
/// are posteriors after each observation; unit play costs, budget `5n`.
pub fn gen_adaptivity_gap(n: usize) -> Result<BanditInstance> {
    let params = AdaptivityGapParams::new(n)?;
    let arms = (0..n).map(|i| params.arm(arm_name(i, n))).collect::<Result<_>>()?;
    Ok(BanditInstance::budgeted(arms, params.budget))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    IntegralityGap,
    AdaptivityGap,
    RandomTwoLevel,
    RandomBeta,
    RandomMixed,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::IntegralityGap => "integrality-gap",
            Family::AdaptivityGap => "adaptivity-gap",
            Family::RandomTwoLevel => "random-two-level",
            Family::RandomBeta => "random-beta",
            Family::RandomMixed => "random-mixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CostRule {
    /// Uniform integer in `[min, max]`.
    Integer { min: u32, max: u32 },
    /// Uniform real in `[min, max)`.
    Real { min: f64, max: f64 },
}

impl CostRule {
    fn draw(self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            CostRule::Integer { min, max } => f64::from(rng.gen_range(min..=max)),
            CostRule::Real { min, max } if max > min => rng.gen_range(min..max),
            CostRule::Real { min, .. } => min,
        }
    }

    fn check(self, what: &str) -> Result<()> {
        let ok = match self {
            CostRule::Integer { min, max } => min <= max,
            CostRule::Real { min, max } => min.is_finite() && max.is_finite() && 0.0 <= min && min <= max,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("bad {what} range {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ObjectiveSpec {
    Budgeted,
    Lagrangean,
    /// Linear utilities, unit sizes, capacity drawn from `capacities`.
    Concave { capacities: Vec<f64>, epsilon: f64 },
}

fn default_count() -> usize {
    1
}
fn default_n() -> usize {
    3
}
fn default_one() -> usize {
    1
}
fn default_depth() -> u32 {
    2
}
fn default_leaves() -> usize {
    3
}
fn default_costs() -> CostRule {
    CostRule::Integer { min: 1, max: 3 }
}
fn default_switch() -> CostRule {
    CostRule::Integer { min: 0, max: 1 }
}
fn default_max_budget() -> f64 {
    5.0
}
fn default_objective() -> ObjectiveSpec {
    ObjectiveSpec::Budgeted
}

/// Describes a family of instances. For the two canonical families `n` is
/// the instance size; for the random families it is the largest arm count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_one")]
    pub min_arms: usize,
    /// Largest Beta depth (two-level arms always have depth 1).
    #[serde(default = "default_depth")]
    pub max_depth: u32,
    /// Largest leaf count of a two-level arm.
    #[serde(default = "default_leaves")]
    pub max_leaves: usize,
    #[serde(default = "default_costs")]
    pub costs: CostRule,
    #[serde(default = "default_switch")]
    pub switch_costs: CostRule,
    #[serde(default = "default_max_budget")]
    pub max_budget: f64,
    #[serde(default = "default_objective")]
    pub objective: ObjectiveSpec,
}

impl GeneratorSpec {
    pub fn new(family: Family, count: usize, seed: u64) -> Self {
        Self {
            family,
            count,
            seed,
            n: default_n(),
            min_arms: default_one(),
            max_depth: default_depth(),
            max_leaves: default_leaves(),
            costs: default_costs(),
            switch_costs: default_switch(),
            max_budget: default_max_budget(),
            objective: default_objective(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.is_random() {
            if self.min_arms == 0 || self.min_arms > self.n {
                return bad(format!("need 1 <= min_arms <= n, got {} and {}", self.min_arms, self.n));
            }
            if self.max_depth == 0 || self.max_leaves < 2 {
                return bad("need max_depth >= 1 and max_leaves >= 2".into());
            }
            if !(self.max_budget.is_finite() && self.max_budget >= 0.0) {
                return bad(format!("bad max_budget {}", self.max_budget));
            }
            self.costs.check("costs")?;
            self.switch_costs.check("switch_costs")?;
        }
        if let ObjectiveSpec::Concave { capacities, epsilon } = &self.objective {
            if capacities.is_empty() || capacities.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
                return bad("concave capacities must be positive".into());
            }
            if !(epsilon.is_finite() && *epsilon > 0.0 && *epsilon < 1.0) {
                return bad(format!("epsilon must lie in (0, 1), got {epsilon}"));
            }
        }
        Ok(())
    }

    fn is_random(&self) -> bool {
        matches!(
            self.family,
            Family::RandomTwoLevel | Family::RandomBeta | Family::RandomMixed
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedInstance {
    pub name: String,
    pub instance: BanditInstance,
}

fn random_two_level(id: String, spec: &GeneratorSpec, play: f64, switch: f64, rng: &mut ChaCha8Rng) -> Result<ArmStateSpace> {
    let k = rng.gen_range(2..=spec.max_leaves);
    let values: Vec<f64> = (0..k).map(|_| (rng.gen::<f64>() * 1000.0).round() / 1000.0).collect();
    let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.gen::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    build_two_level_arm(id, &values, &probs, play, switch)
}

fn random_beta(id: String, spec: &GeneratorSpec, play: f64, switch: f64, rng: &mut ChaCha8Rng) -> Result<ArmStateSpace> {
    let a = rng.gen_range(1..=3);
    let b = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=spec.max_depth);
    build_beta_bernoulli_arm(id, a, b, depth, play, switch)
}

fn random_instance(spec: &GeneratorSpec, rng: &mut ChaCha8Rng) -> Result<BanditInstance> {
    let n = rng.gen_range(spec.min_arms..=spec.n);
    let mut arms = Vec::with_capacity(n);
    for i in 0..n {
        let id = arm_name(i, n);
        let play = spec.costs.draw(rng);
        let switch = spec.switch_costs.draw(rng);
        let two_level = match spec.family {
            Family::RandomTwoLevel => true,
            Family::RandomBeta => false,
            _ => rng.gen_bool(0.5),
        };
        arms.push(if two_level {
            random_two_level(id, spec, play, switch, rng)?
        } else {
            random_beta(id, spec, play, switch, rng)?
        });
    }
    let mut instance = BanditInstance::budgeted(arms, 0.0);
    let total: f64 = instance.arms.iter().map(ArmStateSpace::max_exploration_cost).sum();
    let low = min_first_charge(&instance).unwrap_or(0.0).ceil();
    let high = (total / 2.0).floor().max(low);
    let budget = rng.gen_range(low as u64..=high as u64) as f64;
    instance.budget = budget.min(spec.max_budget.floor());
    Ok(match &spec.objective {
        ObjectiveSpec::Budgeted => instance,
        ObjectiveSpec::Lagrangean => BanditInstance::lagrangean(instance.arms),
        ObjectiveSpec::Concave { capacities, epsilon } => {
            let capacity = capacities[rng.gen_range(0..capacities.len())];
            let problem = ConcaveProblem::linear(vec![1.0; n], capacity, *epsilon);
            BanditInstance::concave(instance.arms, instance.budget, problem)
        }
    })
}

fn with_spec_objective(instance: BanditInstance, spec: &GeneratorSpec) -> BanditInstance {
    match &spec.objective {
        ObjectiveSpec::Budgeted => instance,
        ObjectiveSpec::Lagrangean => BanditInstance::lagrangean(instance.arms),
        ObjectiveSpec::Concave { capacities, epsilon } => {
            let n = instance.n_arms();
            let problem = ConcaveProblem::linear(vec![1.0; n], capacities[0], *epsilon);
            BanditInstance::concave(instance.arms, instance.budget, problem)
        }
    }
}

const MAX_REDRAWS: usize = 1000;

/// Generates `spec.count` instances. Instance `k` draws from RNG stream `k`
/// of `spec.seed`, so suites are reproducible and prefixes are stable.
/// Random instances whose joint state space would exceed the oracle guard
/// are redrawn.
pub fn gen_random_suite(spec: &GeneratorSpec) -> Result<Vec<NamedInstance>> {
    spec.validate()?;
    let name = |k: usize| format!("{}-s{}-{k:04}", spec.family.name(), spec.seed);
    match spec.family {
        Family::IntegralityGap | Family::AdaptivityGap => {
            let base = if spec.family == Family::IntegralityGap {
                gen_integrality_gap(spec.n)?
            } else {
                gen_adaptivity_gap(spec.n)?
            };
            let instance = with_spec_objective(base, spec);
            Ok((0..spec.count)
                .map(|k| NamedInstance {
                    name: name(k),
                    instance: instance.clone(),
                })
                .collect())
        }
        _ => (0..spec.count)
            .map(|k| {
                let mut rng = stream_rng(spec.seed, k as u64);
                for _ in 0..MAX_REDRAWS {
                    let instance = random_instance(spec, &mut rng)?;
                    if estimate_joint_states(&instance) <= DEFAULT_STATE_LIMIT as f64 {
                        return Ok(NamedInstance { name: name(k), instance });
                    }
                }
                Err(Error::InvalidInput(format!(
                    "could not draw instance {k} within the oracle guard"
                )))
            })
            .collect(),
    }
}

/// Copies `instance` with one transition probability or one reward moved by
/// `delta`, chosen by `seed`. Returns the corrupted instance and whether the
/// perturbation targeted normalization (otherwise the martingale property).
pub fn corrupt_instance(instance: &BanditInstance, seed: u64, delta: f64) -> Result<(BanditInstance, bool)> {
    let mut rng = stream_rng(seed, u64::MAX);
    let candidates: Vec<(usize, usize)> = instance
        .arms
        .iter()
        .enumerate()
        .flat_map(|(a, arm)| (0..arm.len()).filter(move |&u| !arm.state(u).is_leaf()).map(move |u| (a, u)))
        .collect();
    if candidates.is_empty() {
        return Err(Error::InvalidInput("instance has no internal states to perturb".into()));
    }
    let (a, u) = candidates[rng.gen_range(0..candidates.len())];
    let normalization = rng.gen_bool(0.5);
    let arm = &instance.arms[a];
    let mut records = arm.to_records();
    let rec = &mut records[u];
    if normalization {
        let j = rng.gen_range(0..rec.children.len());
        let p = rec.children[j].prob;
        rec.children[j].prob = if p + delta <= 1.0 { p + delta } else { p - delta };
    } else {
        rec.reward += if rec.reward >= delta { -delta } else { delta };
    }
    let root = arm.root_state().id.clone();
    let mut out = instance.clone();
    out.arms[a] = ArmStateSpace::from_records(arm.id(), &root, arm.switch_cost(), records)?;
    Ok((out, normalization))
}

fn default_alphas() -> Vec<f64> {
    vec![1.0]
}
fn default_tolerance() -> f64 {
    1e-6
}
fn default_true() -> bool {
    true
}
fn default_limit() -> usize {
    DEFAULT_STATE_LIMIT
}

/// What [`run_guarantee_suite`] checks and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Bicriteria factors; each runs GreedyOrder under budget `alpha C`.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Monte-Carlo traces per instance (0 disables trace checks; concave
    /// instances then fall back to exact evaluation).
    #[serde(default)]
    pub mc_reps: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub oracle: bool,
    #[serde(default = "default_limit")]
    pub oracle_limit: usize,
    #[serde(default = "default_true")]
    pub nonadaptive: bool,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            alphas: default_alphas(),
            mc_reps: 0,
            seed: 0,
            oracle: true,
            oracle_limit: DEFAULT_STATE_LIMIT,
            nonadaptive: true,
            tolerance: default_tolerance(),
        }
    }
}

/// A generator plus options, as read by the `suite` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSpec {
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub options: SuiteOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub value: f64,
    /// The check passes when `value >= bound`.
    pub bound: f64,
    pub pass: bool,
}

impl CheckResult {
    fn at_least(check: impl Into<String>, value: f64, bound: f64) -> Self {
        // Adding zero turns -0.0 into 0.0 for cleaner reports.
        let value = value + 0.0;
        Self {
            check: check.into(),
            value,
            bound,
            pass: value >= bound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub instance: String,
    pub objective: String,
    pub n_arms: usize,
    pub budget: f64,
    pub gamma_star: f64,
    pub opt: Option<f64>,
    /// Value of the main rounding policy (exact where possible).
    pub policy_value: f64,
    pub ratio_to_gamma: Option<f64>,
    pub ratio_to_opt: Option<f64>,
    /// Whether every Monte-Carlo trace passed the structural checks.
    pub traces_ok: Option<bool>,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub instances: usize,
    pub checks: usize,
    pub failures: usize,
    pub min_ratio_to_gamma: Option<f64>,
    pub min_ratio_to_opt: Option<f64>,
    /// Smallest `value - bound` per check name.
    pub min_margin: BTreeMap<String, f64>,
    pub all_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub rows: Vec<EvaluationRow>,
    pub summary: SuiteSummary,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvaluationReport {
    pub fn passed(&self) -> bool {
        self.summary.all_pass
    }

    /// One line per (instance, check).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,objective,n_arms,budget,gamma_star,opt,policy_value,check,value,bound,pass\n");
        for r in &self.rows {
            for c in &r.checks {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    r.instance,
                    r.objective,
                    r.n_arms,
                    r.budget,
                    r.gamma_star,
                    fmt_opt(r.opt),
                    r.policy_value,
                    c.check,
                    c.value,
                    c.bound,
                    c.pass
                );
            }
        }
        out
    }

    fn from_rows(rows: Vec<EvaluationRow>) -> Self {
        let mut min_margin: BTreeMap<String, f64> = BTreeMap::new();
        let mut checks = 0;
        let mut failures = 0;
        for c in rows.iter().flat_map(|r| &r.checks) {
            checks += 1;
            failures += usize::from(!c.pass);
            let m = min_margin.entry(c.check.clone()).or_insert(f64::INFINITY);
            *m = m.min(c.value - c.bound);
        }
        let min = |f: fn(&EvaluationRow) -> Option<f64>| rows.iter().filter_map(f).reduce(f64::min);
        let summary = SuiteSummary {
            instances: rows.len(),
            checks,
            failures,
            min_ratio_to_gamma: min(|r| r.ratio_to_gamma),
            min_ratio_to_opt: min(|r| r.ratio_to_opt),
            min_margin,
            all_pass: failures == 0,
        };
        Self { rows, summary }
    }
}

fn with_instance<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::InvalidInput(format!("instance `{name}`: {e}")))
}

/// Runs the guarantee checks that apply to each instance's objective and
/// collects one row per instance, in suite order.
///
/// Budgeted: LP bound over the oracle, GreedyOrder exact value against
/// `gamma*/4`, agreement with GreedyViolate, bicriteria bounds, the
/// non-adaptive bound for star arms, and trace checks. Lagrangean: per-arm
/// profit, greedy profit against `gamma*/2`, LP bound over the oracle.
/// Concave: value against `(1 - eps) gamma*/8` (three standard errors of
/// slack under Monte Carlo) and the packing limit.
pub fn run_guarantee_suite(suite: &[NamedInstance], options: &SuiteOptions) -> Result<EvaluationReport> {
    let rows = suite
        .par_iter()
        .map(|named| with_instance(&named.name, evaluate_instance(named, options)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport::from_rows(rows))
}

fn evaluate_instance(named: &NamedInstance, options: &SuiteOptions) -> Result<EvaluationRow> {
    let instance = &named.instance;
    let tol = options.tolerance;
    instance.ensure_valid()?;
    let solution = solve_relaxation(instance)?;
    let gamma = solution.gamma_star;
    let policies = extract_single_arm_policies(&solution, instance)?;
    let mut checks = Vec::new();
    let mut traces_ok = None;

    let opt = if options.oracle && !matches!(instance.objective, Objective::Concave(_)) {
        match dp_optimal(instance, options.oracle_limit) {
            Ok(sol) => Some(sol.value),
            Err(Error::StateSpaceTooLarge { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    if let Some(opt) = opt {
        checks.push(CheckResult::at_least("lp-upper-bound", gamma, opt - tol));
    }

    let policy_value = match &instance.objective {
        Objective::Budgeted { .. } => {
            let plan = make_greedy_plan(&policies, instance, 1.0)?;
            let order = evaluate_plan_exact(instance, &plan, &policies, Executor::GreedyOrder)?;
            let violate = evaluate_plan_exact(instance, &plan, &policies, Executor::GreedyViolate)?;
            checks.push(CheckResult::at_least("greedy-order", order.value, gamma / 4.0 - tol));
            checks.push(CheckResult::at_least(
                "order-violate-agreement",
                -(order.value - violate.value).abs(),
                -tol,
            ));
            for &alpha in &options.alphas {
                let bplan = make_greedy_plan(&policies, instance, alpha)?;
                let eval = evaluate_plan_exact(instance, &bplan, &policies, Executor::GreedyOrder)?;
                let factor = alpha / (2.0 * (1.0 + alpha));
                checks.push(CheckResult::at_least(
                    format!("bicriteria-{alpha}"),
                    eval.value,
                    factor * gamma - tol,
                ));
            }
            if options.nonadaptive && instance.arms.iter().all(|a| a.depth() <= 1) {
                let na = nonadaptive_two_level(instance, &solution)?;
                checks.push(CheckResult::at_least("nonadaptive-value", na.expected_value, gamma / 7.0 - tol));
                checks.push(CheckResult::at_least(
                    "nonadaptive-budget",
                    instance.budget - na.probe_cost,
                    -tol,
                ));
            }
            if options.mc_reps > 0 {
                let mut worst: f64 = 0.0;
                let mut violations = 0;
                for executor in [Executor::GreedyOrder, Executor::GreedyViolate] {
                    let mc = monte_carlo_evaluate(instance, &plan, &policies, executor, options.mc_reps, options.seed)?;
                    violations += mc.violations;
                    let limit = match executor {
                        Executor::GreedyOrder => instance.budget,
                        _ => instance.budget + max_single_arm_cost(instance),
                    };
                    worst = worst.max(mc.max_cost - limit);
                }
                checks.push(CheckResult::at_least("trace-cost", -worst, -tol));
                checks.push(CheckResult::at_least("trace-structure", -(violations as f64), 0.0));
                traces_ok = Some(violations == 0);
            }
            order.value
        }
        Objective::Lagrangean => {
            let min_profit = instance
                .arms
                .iter()
                .zip(&policies)
                .map(|(arm, p)| {
                    let (_, r, c) = p.statistics(arm);
                    r - c
                })
                .fold(f64::INFINITY, f64::min);
            checks.push(CheckResult::at_least("arm-profit", min_profit, -1e-7));
            let plan = make_greedy_plan(&policies, instance, 1.0)?;
            let eval = evaluate_plan_exact(instance, &plan, &policies, Executor::Lagrangean)?;
            checks.push(CheckResult::at_least("lagrangean-greedy", eval.value, gamma / 2.0 - tol));
            eval.value
        }
        Objective::Concave(problem) => {
            let plan = make_greedy_plan(&policies, instance, 1.0)?;
            let bound = (1.0 - problem.epsilon) * gamma / 8.0;
            if options.mc_reps > 0 {
                let mc = monte_carlo_evaluate(instance, &plan, &policies, Executor::Concave, options.mc_reps, options.seed)?;
                checks.push(CheckResult::at_least("concave-value", mc.mean, bound - 3.0 * mc.std_error));
                let load = mc.max_load.unwrap_or(0.0);
                checks.push(CheckResult::at_least("concave-load", problem.capacity - load, 0.0));
                checks.push(CheckResult::at_least("trace-structure", -(mc.violations as f64), 0.0));
                traces_ok = Some(mc.violations == 0);
                mc.mean
            } else {
                let eval = evaluate_plan_exact(instance, &plan, &policies, Executor::Concave)?;
                checks.push(CheckResult::at_least("concave-value", eval.value, bound - tol));
                eval.value
            }
        }
    };

    Ok(EvaluationRow {
        instance: named.name.clone(),
        objective: instance.objective.name().to_string(),
        n_arms: instance.n_arms(),
        budget: instance.budget,
        gamma_star: gamma,
        opt,
        policy_value,
        ratio_to_gamma: ratio(policy_value, gamma),
        ratio_to_opt: opt.and_then(|o| ratio(policy_value, o)),
        traces_ok,
        checks,
    })
}

/// Mean and standard error of a Monte-Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

impl Estimate {
    fn of(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = if samples.len() > 1 {
            samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            mean,
            std_error: (var / n).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptivityDemo {
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    pub adaptive: Estimate,
    pub uniform: Estimate,
    pub ratio: f64,
}

fn step(arm: &ArmStateSpace, u: usize, rng: &mut ChaCha8Rng) -> usize {
    let s = arm.state(u);
    let mut t = rng.gen::<f64>();
    for tr in &s.transitions {
        if t < tr.prob {
            return tr.child;
        }
        t -= tr.prob;
    }
    s.transitions.last().map_or(u, |tr| tr.child)
}

/// One run of the two-phase adaptive strategy: play every arm once, keep up
/// to `2 sqrt(n)` arms (lowest ids) that did not reveal `a1`, play each of
/// those `2 sqrt(n)` more times, then exploit the first kept arm that
/// revealed `a3` (else the first kept arm, else arm 0). Returns the
/// exploited posterior mean.
pub fn two_phase_adaptive_run(instance: &BanditInstance, rng: &mut ChaCha8Rng) -> f64 {
    let n = instance.n_arms();
    let replays = 2 * (n as f64).sqrt().round() as usize;
    let mut states: Vec<usize> = instance.arms.iter().map(|a| a.root()).collect();
    for (arm, s) in instance.arms.iter().zip(states.iter_mut()) {
        if !arm.state(*s).is_leaf() {
            *s = step(arm, *s, rng);
        }
    }
    let kept: Vec<usize> = (0..n)
        .filter(|&i| instance.arms[i].state(states[i]).reward > 0.0)
        .take(replays)
        .collect();
    for &i in &kept {
        let arm = &instance.arms[i];
        for _ in 0..replays {
            if arm.state(states[i]).is_leaf() {
                break;
            }
            states[i] = step(arm, states[i], rng);
        }
    }
    let revealed = |i: usize| instance.arms[i].state(states[i]).id == "R3";
    let pick = kept.iter().copied().find(|&i| revealed(i)).or(kept.first().copied()).unwrap_or(0);
    instance.arms[pick].state(states[pick]).reward
}

/// One run of the uniform non-adaptive allocation: `plays` plays per arm
/// (fewer on arms that reach a leaf), then exploit the best posterior mean,
/// lowest id on ties.
pub fn uniform_allocation_run(instance: &BanditInstance, plays: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for arm in &instance.arms {
        let mut u = arm.root();
        for _ in 0..plays {
            if arm.state(u).is_leaf() {
                break;
            }
            u = step(arm, u, rng);
        }
        best = best.max(arm.state(u).reward);
    }
    best
}

/// Estimates both strategies on the adaptivity-gap instance of size `n`.
/// Replication `k` uses RNG stream `2k` for the adaptive run and `2k + 1`
/// for the uniform one.
pub fn adaptivity_demo(n: usize, reps: u64, seed: u64) -> Result<AdaptivityDemo> {
    if reps == 0 {
        return Err(Error::InvalidInput("reps must be at least 1".into()));
    }
    let instance = gen_adaptivity_gap(n)?;
    let plays = (instance.budget / n as f64).floor() as usize;
    let runs: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let a = two_phase_adaptive_run(&instance, &mut stream_rng(seed, 2 * k));
            let b = uniform_allocation_run(&instance, plays, &mut stream_rng(seed, 2 * k + 1));
            (a, b)
        })
        .collect();
    let adaptive = Estimate::of(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let uniform = Estimate::of(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(AdaptivityDemo {
        n,
        reps,
        seed,
        adaptive,
        uniform,
        ratio: adaptive.mean / uniform.mean,
    })
}
