//! The three LP relaxations (budgeted, Lagrangean, concave-utility) and the
//! conversion of an optimal LP point into one randomized stopping policy per
//! arm.
//!
//! For every arm `i` and state `u` the programs carry `w_u` (probability the
//! arm enters `u`), `z_u` (probability it is played in `u`) and the
//! exploitation mass at `u`: a single `x_u`, or `x_{u,l}` per weight level
//! `l / L` for the concave variant. `w` at each root is fixed to one and
//! leaves are never played.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::{default_tolerance, solve_lp, LinearProgram, LpStatus, Relation};
use crate::statespace::{ArmStateSpace, BanditInstance, ConcaveProblem, Objective};

/// States whose recomputed reach probability falls below this are treated
/// as unreachable.
pub const REACH_EPS: f64 = 1e-9;

/// Largest `x + z - w` excess that cleanup silently rescales away.
pub const CLEANUP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RelaxationVariant {
    Budgeted,
    Lagrangean,
    Concave,
}

impl RelaxationVariant {
    pub fn of(objective: &Objective) -> Self {
        match objective {
            Objective::Budgeted { .. } => RelaxationVariant::Budgeted,
            Objective::Lagrangean => RelaxationVariant::Lagrangean,
            Objective::Concave(_) => RelaxationVariant::Concave,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RelaxationVariant::Budgeted => "budgeted",
            RelaxationVariant::Lagrangean => "lagrangean",
            RelaxationVariant::Concave => "concave",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VarRole {
    Reach,
    Play,
    /// Exploitation mass; the grid level for the concave program, 0 otherwise.
    Exploit(usize),
}

/// Where an LP column lives in the instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VarRef {
    pub arm: usize,
    pub state: usize,
    pub role: VarRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateColumns {
    pub w: usize,
    /// `None` at leaves.
    pub z: Option<usize>,
    pub x: Vec<usize>,
}

/// A relaxation LP together with the map from its columns back to arms and
/// states.
#[derive(Debug, Clone)]
pub struct RelaxationModel {
    pub variant: RelaxationVariant,
    pub lp: LinearProgram,
    pub refs: Vec<VarRef>,
    pub columns: Vec<Vec<StateColumns>>,
    /// `L` for the concave program.
    pub grid: Option<usize>,
    pub epsilon: Option<f64>,
    /// `zeta_u(l)` per arm and state (concave only).
    pub tables: Option<Vec<Vec<Vec<f64>>>>,
}

fn require(instance: &BanditInstance, variant: RelaxationVariant) -> Result<()> {
    let found = RelaxationVariant::of(&instance.objective);
    if found != variant {
        return Err(Error::WrongVariant {
            expected: variant.name(),
            found: found.name(),
        });
    }
    instance.ensure_valid()
}

/// Declares `w`, `z` and the exploitation columns of every state and adds
/// the flow and capacity rows shared by all three programs.
fn skeleton(
    instance: &BanditInstance,
    variant: RelaxationVariant,
    levels: usize,
) -> (LinearProgram, Vec<VarRef>, Vec<Vec<StateColumns>>) {
    let mut lp = LinearProgram::new();
    let mut refs = Vec::new();
    let mut columns = Vec::with_capacity(instance.n_arms());
    for (a, arm) in instance.arms.iter().enumerate() {
        let mut arm_cols = Vec::with_capacity(arm.len());
        for (s, state) in arm.states().iter().enumerate() {
            let root = s == arm.root();
            let lo = if root { 1.0 } else { 0.0 };
            let w = lp.add_variable(format!("w_{a}_{s}"), lo, 1.0);
            refs.push(VarRef {
                arm: a,
                state: s,
                role: VarRole::Reach,
            });
            let z = (!state.is_leaf()).then(|| {
                refs.push(VarRef {
                    arm: a,
                    state: s,
                    role: VarRole::Play,
                });
                lp.add_variable(format!("z_{a}_{s}"), 0.0, 1.0)
            });
            let x = (0..levels)
                .map(|l| {
                    refs.push(VarRef {
                        arm: a,
                        state: s,
                        role: VarRole::Exploit(l),
                    });
                    let name = if variant == RelaxationVariant::Concave {
                        format!("x_{a}_{s}_{l}")
                    } else {
                        format!("x_{a}_{s}")
                    };
                    lp.add_variable(name, 0.0, 1.0)
                })
                .collect();
            arm_cols.push(StateColumns { w, z, x });
        }
        columns.push(arm_cols);
    }

    for (a, arm) in instance.arms.iter().enumerate() {
        let cols = &columns[a];
        for (s, parents) in arm.parents().iter().enumerate() {
            if s == arm.root() {
                continue;
            }
            let mut row = vec![(cols[s].w, 1.0)];
            for &(v, p) in parents {
                if let Some(z) = cols[v].z {
                    row.push((z, -p));
                }
            }
            lp.add_constraint(format!("flow_{a}_{s}"), row, Relation::Eq, 0.0);
        }
        for (s, c) in cols.iter().enumerate() {
            let mut row: Vec<(usize, f64)> = c.x.iter().map(|&x| (x, 1.0)).collect();
            if let Some(z) = c.z {
                row.push((z, 1.0));
            }
            row.push((c.w, -1.0));
            lp.add_constraint(format!("cap_{a}_{s}"), row, Relation::Le, 0.0);
        }
    }
    (lp, refs, columns)
}

fn cost_row(instance: &BanditInstance, columns: &[Vec<StateColumns>]) -> Vec<(usize, f64)> {
    let mut row = Vec::new();
    for (arm, cols) in instance.arms.iter().zip(columns) {
        for (s, state) in arm.states().iter().enumerate() {
            if let Some(z) = cols[s].z {
                let mut c = state.play_cost;
                if s == arm.root() {
                    c += arm.switch_cost();
                }
                if c != 0.0 {
                    row.push((z, c));
                }
            }
        }
    }
    row
}

/// The budgeted relaxation: maximize `sum x_u r_u` under the expected cost
/// budget and a total exploitation mass of at most one.
pub fn build_budgeted_lp(instance: &BanditInstance) -> Result<RelaxationModel> {
    require(instance, RelaxationVariant::Budgeted)?;
    let (mut lp, refs, columns) = skeleton(instance, RelaxationVariant::Budgeted, 1);
    lp.add_constraint("budget", cost_row(instance, &columns), Relation::Le, instance.budget);
    let exploit: Vec<(usize, f64)> = columns.iter().flatten().map(|c| (c.x[0], 1.0)).collect();
    lp.add_constraint("exploit", exploit, Relation::Le, 1.0);
    for (arm, cols) in instance.arms.iter().zip(&columns) {
        for (state, c) in arm.states().iter().zip(cols) {
            if state.reward != 0.0 {
                lp.add_objective_term(c.x[0], state.reward);
            }
        }
    }
    Ok(RelaxationModel {
        variant: RelaxationVariant::Budgeted,
        lp,
        refs,
        columns,
        grid: None,
        epsilon: None,
        tables: None,
    })
}

/// The Lagrangean relaxation: no budget row, and play and switch costs are
/// charged in the objective.
pub fn build_lagrangean_lp(instance: &BanditInstance) -> Result<RelaxationModel> {
    require(instance, RelaxationVariant::Lagrangean)?;
    let (mut lp, refs, columns) = skeleton(instance, RelaxationVariant::Lagrangean, 1);
    let exploit: Vec<(usize, f64)> = columns.iter().flatten().map(|c| (c.x[0], 1.0)).collect();
    lp.add_constraint("exploit", exploit, Relation::Le, 1.0);
    for (arm, cols) in instance.arms.iter().zip(&columns) {
        for (state, c) in arm.states().iter().zip(cols) {
            if state.reward != 0.0 {
                lp.add_objective_term(c.x[0], state.reward);
            }
        }
    }
    for (z, c) in cost_row(instance, &columns) {
        lp.add_objective_term(z, -c);
    }
    Ok(RelaxationModel {
        variant: RelaxationVariant::Lagrangean,
        lp,
        refs,
        columns,
        grid: None,
        epsilon: None,
        tables: None,
    })
}

/// The discretized concave-utility relaxation on the grid `L = ceil(n/eps)`.
/// Value tables are validated (monotone, concave, super-martingale) at that
/// grid before the program is built.
pub fn build_concave_lp(instance: &BanditInstance, epsilon: f64) -> Result<RelaxationModel> {
    let problem = match &instance.objective {
        Objective::Concave(p) => p,
        other => {
            return Err(Error::WrongVariant {
                expected: "concave",
                found: other.name(),
            })
        }
    };
    let problem = ConcaveProblem {
        epsilon,
        ..problem.clone()
    };
    let instance = instance.with_objective(Objective::Concave(problem.clone()));
    require(&instance, RelaxationVariant::Concave)?;

    let grid = problem.grid_size(instance.n_arms());
    let (mut lp, refs, columns) = skeleton(&instance, RelaxationVariant::Concave, grid + 1);
    lp.add_constraint("budget", cost_row(&instance, &columns), Relation::Le, instance.budget);

    let tables: Vec<Vec<Vec<f64>>> = instance
        .arms
        .iter()
        .map(|arm| (0..arm.len()).map(|u| problem.table(arm, u, grid)).collect())
        .collect();
    let mut load = Vec::new();
    for (a, cols) in columns.iter().enumerate() {
        let sigma = problem.sigmas[a];
        for (s, c) in cols.iter().enumerate() {
            for (l, &x) in c.x.iter().enumerate() {
                if sigma != 0.0 && l != 0 {
                    load.push((x, sigma * l as f64));
                }
                let value = tables[a][s][l];
                if value != 0.0 {
                    lp.add_objective_term(x, value);
                }
            }
        }
    }
    lp.add_constraint(
        "load",
        load,
        Relation::Le,
        problem.capacity * grid as f64 * (1.0 + epsilon),
    );
    Ok(RelaxationModel {
        variant: RelaxationVariant::Concave,
        lp,
        refs,
        columns,
        grid: Some(grid),
        epsilon: Some(epsilon),
        tables: Some(tables),
    })
}

/// Builds the relaxation matching the instance's objective.
pub fn build_relaxation(instance: &BanditInstance) -> Result<RelaxationModel> {
    match &instance.objective {
        Objective::Budgeted { .. } => build_budgeted_lp(instance),
        Objective::Lagrangean => build_lagrangean_lp(instance),
        Objective::Concave(p) => build_concave_lp(instance, p.epsilon),
    }
}

/// Per-arm LP values indexed by state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmValues {
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    /// Exploitation mass per state: one entry, or `L + 1` grid levels.
    pub x: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RelaxationSolution {
    pub variant: RelaxationVariant,
    pub gamma_star: f64,
    pub arms: Vec<ArmValues>,
    pub grid: Option<usize>,
    pub epsilon: Option<f64>,
    #[serde(skip)]
    pub tables: Option<Vec<Vec<Vec<f64>>>>,
    /// `(variable name, location)` for every LP column.
    pub columns: Vec<(String, VarRef)>,
    pub pivots: usize,
}

impl RelaxationModel {
    pub fn solve(&self, tol: f64) -> Result<RelaxationSolution> {
        let sol = solve_lp(&self.lp, tol)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::RelaxationNotOptimal {
                instance: self.variant.name().into(),
                status: sol.status,
            });
        }
        let arms = self
            .columns
            .iter()
            .map(|cols| ArmValues {
                w: cols.iter().map(|c| sol.values[c.w]).collect(),
                z: cols
                    .iter()
                    .map(|c| c.z.map_or(0.0, |z| sol.values[z]))
                    .collect(),
                x: cols
                    .iter()
                    .map(|c| c.x.iter().map(|&x| sol.values[x]).collect())
                    .collect(),
            })
            .collect();
        Ok(RelaxationSolution {
            variant: self.variant,
            gamma_star: sol.objective_value,
            arms,
            grid: self.grid,
            epsilon: self.epsilon,
            tables: self.tables.clone(),
            columns: self
                .lp
                .variables()
                .iter()
                .zip(&self.refs)
                .map(|(v, r)| (v.name.clone(), *r))
                .collect(),
            pivots: sol.pivots,
        })
    }

    /// Packs per-state `(w, z, x)` values into an LP column vector, e.g. to
    /// test an arbitrary policy's occupancies against the rows.
    pub fn point(&self, arms: &[ArmValues]) -> Vec<f64> {
        let mut values = vec![0.0; self.lp.n_vars()];
        for (cols, vals) in self.columns.iter().zip(arms) {
            for (s, c) in cols.iter().enumerate() {
                values[c.w] = vals.w[s];
                if let Some(z) = c.z {
                    values[z] = vals.z[s];
                }
                for (l, &x) in c.x.iter().enumerate() {
                    values[x] = vals.x[s][l];
                }
            }
        }
        values
    }
}

/// Builds and solves the relaxation for the instance's objective at the
/// default tolerance.
pub fn solve_relaxation(instance: &BanditInstance) -> Result<RelaxationSolution> {
    build_relaxation(instance)?.solve(default_tolerance())
}

/// One step of a single-arm policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmAction {
    Play,
    /// Stop and exploit; carries the grid level (always 0 outside the
    /// concave variant).
    Exploit(usize),
    /// Stop without exploiting.
    Abandon,
}

/// The randomized stopping rule for one arm derived from the LP: in state
/// `u`, draw `q` uniformly from `[0, w_u]`; play if `q <= z_u`, exploit if `q`
/// falls in the next `x_u` (or the first covering grid level), else abandon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleArmPolicy {
    pub arm: usize,
    pub arm_id: String,
    pub variant: RelaxationVariant,
    pub w: Vec<f64>,
    pub z: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub reachable: Vec<bool>,
    pub grid: Option<usize>,
    #[serde(skip)]
    pub tables: Option<Vec<Vec<f64>>>,
    /// `P(phi)`: expected exploitation probability (expected weight for the
    /// concave variant).
    pub explore_prob: f64,
    /// `R(phi)`: expected exploitation reward or value.
    pub reward: f64,
    /// `C(phi)`: expected switch plus play cost.
    pub cost: f64,
}

impl SingleArmPolicy {
    pub fn exploit_mass(&self, u: usize) -> f64 {
        self.x[u].iter().sum()
    }

    /// `P`, `R`, `C` recomputed from the thresholds.
    pub fn statistics(&self, arm: &ArmStateSpace) -> (f64, f64, f64) {
        let mut p = 0.0;
        let mut r = 0.0;
        for (u, state) in arm.states().iter().enumerate() {
            match (self.grid, &self.tables) {
                (Some(grid), Some(tables)) => {
                    for (l, &x) in self.x[u].iter().enumerate() {
                        p += x * l as f64 / grid as f64;
                        r += x * tables[u][l];
                    }
                }
                _ => {
                    p += self.x[u][0];
                    r += self.x[u][0] * state.reward;
                }
            }
        }
        let mut c = arm.switch_cost() * self.z[arm.root()];
        for (u, state) in arm.states().iter().enumerate() {
            c += state.play_cost * self.z[u];
        }
        (p, r, c)
    }

    /// Probabilities of playing, of exploiting at each level, and of
    /// abandoning, conditioned on being in state `u`.
    pub fn action_probs(&self, u: usize) -> (f64, Vec<f64>, f64) {
        let w = self.w[u];
        if !self.reachable[u] || w <= 0.0 {
            return (0.0, vec![0.0; self.x[u].len()], 1.0);
        }
        let play = self.z[u] / w;
        let exploit: Vec<f64> = self.x[u].iter().map(|x| x / w).collect();
        let abandon = (1.0 - play - exploit.iter().sum::<f64>()).max(0.0);
        (play, exploit, abandon)
    }

    /// Applies the uniform draw `q` in `[0, w_u]` at state `u`.
    pub fn action(&self, u: usize, q: f64) -> ArmAction {
        if !self.reachable[u] {
            return ArmAction::Abandon;
        }
        if self.z[u] > 0.0 && q <= self.z[u] {
            return ArmAction::Play;
        }
        let mut acc = self.z[u];
        for (l, &x) in self.x[u].iter().enumerate() {
            acc += x;
            if x > 0.0 && q <= acc {
                return ArmAction::Exploit(l);
            }
        }
        ArmAction::Abandon
    }

    /// Value of exploiting state `u` at weight `y`: the reward for the
    /// single-choice variants, the linearly interpolated table otherwise.
    pub fn value_at(&self, arm: &ArmStateSpace, u: usize, y: f64) -> f64 {
        match (self.grid, &self.tables) {
            (Some(grid), Some(tables)) => interpolate(&tables[u], grid, y),
            _ => arm.state(u).reward,
        }
    }
}

/// Piecewise-linear interpolation of a table sampled at `l / grid`.
pub fn interpolate(table: &[f64], grid: usize, y: f64) -> f64 {
    let pos = (y.clamp(0.0, 1.0) * grid as f64).min(grid as f64);
    let lo = pos.floor() as usize;
    if lo >= grid {
        return table[grid];
    }
    let frac = pos - lo as f64;
    if frac == 0.0 {
        table[lo]
    } else {
        table[lo] * (1.0 - frac) + table[lo + 1] * frac
    }
}

/// Cleans the LP point and turns it into one stopping policy per arm.
///
/// Values are clamped into `[0, 1]`, reach probabilities are recomputed from
/// the flow equations so that the policies' true state occupancies match the
/// reported statistics, and `x + z` is rescaled onto `w` where it overshoots
/// by at most [`CLEANUP_SLACK`].
pub fn extract_single_arm_policies(
    solution: &RelaxationSolution,
    instance: &BanditInstance,
) -> Result<Vec<SingleArmPolicy>> {
    if solution.arms.len() != instance.n_arms() {
        return Err(Error::InvalidInput(format!(
            "solution has {} arms, instance has {}",
            solution.arms.len(),
            instance.n_arms()
        )));
    }
    let mut policies = Vec::with_capacity(instance.n_arms());
    for (a, (arm, vals)) in instance.arms.iter().zip(&solution.arms).enumerate() {
        let clean = |v: f64| {
            let v = v.clamp(0.0, 1.0);
            if v < 1e-12 {
                0.0
            } else {
                v
            }
        };
        let mut z: Vec<f64> = vals.z.iter().map(|&v| clean(v)).collect();
        let mut x: Vec<Vec<f64>> = vals
            .x
            .iter()
            .map(|row| row.iter().map(|&v| clean(v)).collect())
            .collect();
        let mut w = vec![0.0; arm.len()];
        let mut reachable = vec![false; arm.len()];
        let parents = arm.parents();
        let order = arm
            .topological_order()
            .ok_or_else(|| Error::InvalidInput(format!("arm `{}` has a cycle", arm.id())))?;
        for &u in &order {
            w[u] = if u == arm.root() {
                1.0
            } else {
                parents[u].iter().map(|&(v, p)| z[v] * p).sum::<f64>().min(1.0)
            };
            if arm.state(u).is_leaf() {
                z[u] = 0.0;
            }
            if w[u] < REACH_EPS {
                w[u] = 0.0;
                z[u] = 0.0;
                x[u].iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            reachable[u] = true;
            let used = z[u] + x[u].iter().sum::<f64>();
            if used > w[u] {
                let excess = used - w[u];
                if excess > CLEANUP_SLACK {
                    return Err(Error::InconsistentSolution {
                        arm: arm.id().to_string(),
                        state: arm.state(u).id.clone(),
                        excess,
                    });
                }
                let scale = w[u] / used;
                z[u] *= scale;
                x[u].iter_mut().for_each(|v| *v *= scale);
            }
        }
        let tables = solution.tables.as_ref().map(|t| t[a].clone());
        let mut policy = SingleArmPolicy {
            arm: a,
            arm_id: arm.id().to_string(),
            variant: solution.variant,
            w,
            z,
            x,
            reachable,
            grid: solution.grid,
            tables,
            explore_prob: 0.0,
            reward: 0.0,
            cost: 0.0,
        };
        let (p, r, c) = policy.statistics(arm);
        policy.explore_prob = p;
        policy.reward = r;
        policy.cost = c;
        policies.push(policy);
    }
    Ok(policies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::{build_beta_bernoulli_arm, build_two_level_arm};

    fn gap_instance(n: usize) -> BanditInstance {
        let p = 1.0 / n as f64;
        let arms = (0..n)
            .map(|i| build_two_level_arm(format!("a{i}"), &[0.0, 1.0], &[1.0 - p, p], 1.0, 0.0).unwrap())
            .collect();
        BanditInstance::budgeted(arms, n as f64)
    }

    #[test]
    fn gap_instance_lp_value_and_policies() {
        let inst = gap_instance(4);
        let sol = solve_relaxation(&inst).unwrap();
        assert!((sol.gamma_star - 1.0).abs() < 1e-6);
        let policies = extract_single_arm_policies(&sol, &inst).unwrap();
        for (arm, pol) in inst.arms.iter().zip(&policies) {
            assert!((pol.z[arm.root()] - 1.0).abs() < 1e-6);
            let hit = arm.index_of("v1").unwrap();
            assert!((pol.x[hit][0] - 0.25).abs() < 1e-6);
            assert!((pol.explore_prob - 0.25).abs() < 1e-6);
            assert!((pol.reward - 0.25).abs() < 1e-6);
            assert!((pol.cost - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_budget_exploits_root() {
        let arm = build_two_level_arm("a", &[0.4, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap();
        let inst = BanditInstance::budgeted(vec![arm], 0.0);
        let sol = solve_relaxation(&inst).unwrap();
        assert!((sol.gamma_star - 0.7).abs() < 1e-9);
        let pol = &extract_single_arm_policies(&sol, &inst).unwrap()[0];
        assert!(pol.z.iter().all(|&z| z == 0.0));
        assert!((pol.explore_prob - 1.0).abs() < 1e-9);
        assert!((pol.reward - 0.7).abs() < 1e-9);
        assert_eq!(pol.cost, 0.0);
    }

    /// Grid search over the two-arm relaxation reduced to its free
    /// quantities: play probabilities z_i, exploit mass a_i on the reward-1
    /// leaf (<= z_i / 2) and b_i at the root (<= 1 - z_i).
    fn two_arm_grid_optimum() -> f64 {
        let grid: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let mut best = 0.0f64;
        for &z1 in &grid {
            for &z2 in &grid {
                if z1 + z2 > 2.0 {
                    continue;
                }
                for &a1 in grid.iter().filter(|&&a| a <= z1 / 2.0) {
                    for &a2 in grid.iter().filter(|&&a| a <= z2 / 2.0) {
                        for &b1 in grid.iter().filter(|&&b| b <= 1.0 - z1) {
                            for &b2 in grid.iter().filter(|&&b| b <= 1.0 - z2) {
                                if a1 + a2 + b1 + b2 <= 1.0 {
                                    best = best.max(a1 + a2 + 0.5 * (b1 + b2));
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    }

    #[test]
    fn two_identical_arms() {
        let arms = (0..2)
            .map(|i| build_two_level_arm(format!("a{i}"), &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap())
            .collect();
        let inst = BanditInstance::budgeted(arms, 2.0);
        let expected = two_arm_grid_optimum();
        assert_eq!(expected, 1.0);
        let sol = solve_relaxation(&inst).unwrap();
        assert!((sol.gamma_star - expected).abs() < 1e-9);
    }

    #[test]
    fn lagrangean_single_arm_never_pays_for_information() {
        // Alone, an arm's expected reward is r_root whatever is observed, so
        // any play only loses its cost.
        for c in [0.1, 0.6] {
            let arm = build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], c, 0.0).unwrap();
            let sol = solve_relaxation(&BanditInstance::lagrangean(vec![arm])).unwrap();
            assert!((sol.gamma_star - 0.5).abs() < 1e-9, "c = {c}");
            assert!(sol.arms[0].z.iter().all(|&z| z.abs() < 1e-9));
        }
    }

    #[test]
    fn lagrangean_pays_when_there_is_a_fallback() {
        // Safe arm worth 0.5 plus a coin flip arm costing 0.1 to inspect:
        // inspect, keep it on 1, else fall back -> 0.75 - 0.1.
        let safe = build_two_level_arm("safe", &[0.5], &[1.0], 0.0, 0.0).unwrap();
        let coin = build_two_level_arm("coin", &[0.0, 1.0], &[0.5, 0.5], 0.1, 0.0).unwrap();
        let inst = BanditInstance::lagrangean(vec![safe, coin]);
        let sol = solve_relaxation(&inst).unwrap();
        assert!((sol.gamma_star - 0.65).abs() < 1e-9);
        let pols = extract_single_arm_policies(&sol, &inst).unwrap();
        assert!((pols[1].z[0] - 1.0).abs() < 1e-9);
        for p in &pols {
            assert!(p.reward - p.cost >= -1e-7);
        }
    }

    #[test]
    fn lagrangean_all_zero_rewards() {
        let arm = build_two_level_arm("a", &[0.0, 0.0], &[0.5, 0.5], 0.1, 0.0).unwrap();
        let sol = solve_relaxation(&BanditInstance::lagrangean(vec![arm])).unwrap();
        assert!(sol.gamma_star.abs() < 1e-12);
        assert!(sol.arms[0].z.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn wrong_variant_is_rejected() {
        let inst = gap_instance(2);
        assert!(matches!(
            build_lagrangean_lp(&inst),
            Err(Error::WrongVariant { .. })
        ));
        assert!(matches!(
            build_concave_lp(&inst, 0.5),
            Err(Error::WrongVariant { .. })
        ));
    }

    #[test]
    fn concave_grid_size() {
        let inst = gap_instance(2);
        let inst = inst.with_objective(Objective::Concave(ConcaveProblem::linear(vec![1.0; 2], 1.0, 0.5)));
        let model = build_concave_lp(&inst, 0.5).unwrap();
        assert_eq!(model.grid, Some(4));
        assert_eq!(model.columns[0][0].x.len(), 5);
    }

    #[test]
    fn concave_top_one_matches_budgeted_on_gap_instance() {
        let inst = gap_instance(4);
        let budgeted = solve_relaxation(&inst).unwrap().gamma_star;
        let concave = inst.with_objective(Objective::Concave(ConcaveProblem::linear(vec![1.0; 4], 1.0, 0.25)));
        let sol = solve_relaxation(&concave).unwrap();
        assert!((sol.gamma_star - budgeted).abs() < 1e-6);
    }

    #[test]
    fn concave_top_one_is_sandwiched() {
        // The load row's (1 + eps) slack lets the concave program exceed the
        // budgeted one, by at most that factor.
        let eps = 0.25;
        let arms = vec![
            build_two_level_arm("a", &[1.0], &[1.0], 1.0, 0.0).unwrap(),
            build_two_level_arm("b", &[1.0], &[1.0], 1.0, 0.0).unwrap(),
            build_beta_bernoulli_arm("c", 1, 1, 2, 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::budgeted(arms, 1.0);
        let budgeted = solve_relaxation(&inst).unwrap().gamma_star;
        let concave = inst.with_objective(Objective::Concave(ConcaveProblem::linear(vec![1.0; 3], 1.0, eps)));
        let gamma = solve_relaxation(&concave).unwrap().gamma_star;
        assert!((budgeted - 1.0).abs() < 1e-9);
        assert!(gamma >= budgeted - 1e-9);
        assert!(gamma <= (1.0 + eps) * budgeted + 1e-9);
        assert!((gamma - 1.25).abs() < 1e-9);
    }

    #[test]
    fn concave_all_select_sums_root_rewards() {
        // B = n: every arm can take weight one, and by the martingale identity
        // no exploration beats exploiting each arm at its prior mean.
        let arms = vec![
            build_two_level_arm("a", &[0.0, 1.0], &[0.5, 0.5], 1.0, 0.0).unwrap(),
            build_beta_bernoulli_arm("b", 2, 1, 2, 1.0, 0.0).unwrap(),
        ];
        let expected: f64 = arms.iter().map(|a| a.root_state().reward).sum();
        let inst = BanditInstance::concave(arms, 100.0, ConcaveProblem::linear(vec![1.0; 2], 2.0, 0.5));
        let sol = solve_relaxation(&inst).unwrap();
        assert!((sol.gamma_star - expected).abs() < 1e-9);
    }

    #[test]
    fn policy_statistics_respect_lp_rows() {
        let arms = vec![
            build_beta_bernoulli_arm("a", 1, 1, 2, 1.0, 1.0).unwrap(),
            build_beta_bernoulli_arm("b", 2, 3, 2, 2.0, 0.0).unwrap(),
            build_two_level_arm("c", &[0.1, 0.8, 0.4], &[0.3, 0.3, 0.4], 1.0, 0.0).unwrap(),
        ];
        let inst = BanditInstance::budgeted(arms, 3.0);
        let sol = solve_relaxation(&inst).unwrap();
        let pols = extract_single_arm_policies(&sol, &inst).unwrap();
        let p: f64 = pols.iter().map(|p| p.explore_prob).sum();
        let r: f64 = pols.iter().map(|p| p.reward).sum();
        let c: f64 = pols.iter().map(|p| p.cost).sum();
        assert!(p <= 1.0 + 1e-6);
        assert!(c <= 3.0 + 1e-6);
        assert!((r - sol.gamma_star).abs() < 1e-6);
        for (pol, arm) in pols.iter().zip(&inst.arms) {
            let (p2, r2, c2) = pol.statistics(arm);
            assert!((p2 - pol.explore_prob).abs() < 1e-9);
            assert!((r2 - pol.reward).abs() < 1e-9);
            assert!((c2 - pol.cost).abs() < 1e-9);
            for u in 0..arm.len() {
                assert!(pol.z[u] + pol.exploit_mass(u) <= pol.w[u] + 1e-12);
            }
        }
    }

    #[test]
    fn uniform_draw_thresholds() {
        let pol = SingleArmPolicy {
            arm: 0,
            arm_id: "a".into(),
            variant: RelaxationVariant::Budgeted,
            w: vec![1.0],
            z: vec![0.5],
            x: vec![vec![0.25]],
            reachable: vec![true],
            grid: None,
            tables: None,
            explore_prob: 0.25,
            reward: 0.0,
            cost: 0.0,
        };
        assert_eq!(pol.action(0, 0.0), ArmAction::Play);
        assert_eq!(pol.action(0, 0.5), ArmAction::Play);
        assert_eq!(pol.action(0, 0.6), ArmAction::Exploit(0));
        assert_eq!(pol.action(0, 0.75), ArmAction::Exploit(0));
        assert_eq!(pol.action(0, 0.9), ArmAction::Abandon);
        let (play, exploit, abandon) = pol.action_probs(0);
        assert_eq!((play, exploit[0], abandon), (0.5, 0.25, 0.25));
    }

    #[test]
    fn interpolation() {
        let t = [0.0, 0.5, 0.8, 1.0];
        assert_eq!(interpolate(&t, 3, 0.0), 0.0);
        assert_eq!(interpolate(&t, 3, 1.0), 1.0);
        assert!((interpolate(&t, 3, 1.0 / 6.0) - 0.25).abs() < 1e-12);
        assert!((interpolate(&t, 3, 0.5) - 0.65).abs() < 1e-12);
    }
}
