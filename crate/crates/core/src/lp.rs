//! A small linear-program container and a dense two-phase primal simplex.
//!
//! Every program is a maximization over bounded variables with `<=`, `=` or
//! `>=` rows. Entering and leaving variables follow Bland's rule, so the
//! solver terminates on the heavily degenerate relaxations produced by
//! [`crate::relax`]. An optimal answer is only returned after it has been
//! checked against the original data: primal feasibility within the
//! tolerance, and a dual vector recovered from the final tableau that is
//! dual feasible with matching objective.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Feasibility tolerance used when no other is given.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Environment variable overriding [`DEFAULT_TOL`].
pub const TOL_ENV: &str = "BBANDIT_TOL";

const PIVOT_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;

/// The feasibility tolerance, honouring `BBANDIT_TOL` when it parses to a
/// positive number.
pub fn default_tolerance() -> f64 {
    std::env::var(TOL_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or(DEFAULT_TOL)
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("malformed program: {0}")]
    InvalidModel(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// How far `values` are from satisfying this row (zero when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.relation {
            Relation::Le => (lhs - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A maximization program over named, bounded variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    variables: Vec<Variable>,
    constraints: Vec<Constraint>,
    objective: Vec<(usize, f64)>,
    names: HashMap<String, usize>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Declares a variable and returns its column index. Redeclaring a name
    /// panics: names are the stable handle used by dumps and lookups.
    pub fn add_variable(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        let name = name.into();
        let idx = self.variables.len();
        let previous = self.names.insert(name.clone(), idx);
        assert!(previous.is_none(), "variable `{name}` declared twice");
        self.variables.push(Variable { name, lower, upper });
        idx
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) {
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        let v = &mut self.variables[var];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_objective(&mut self, coeffs: Vec<(usize, f64)>) {
        self.objective = coeffs;
    }

    pub fn add_objective_term(&mut self, var: usize, coeff: f64) {
        self.objective.push((var, coeff));
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self) -> &[(usize, f64)] {
        &self.objective
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.names.get(name).copied()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * values[j]).sum()
    }

    /// Largest violation over all rows and bounds.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    /// Returns a copy with the objective multiplied by `factor`.
    pub fn scaled_objective(&self, factor: f64) -> Self {
        let mut lp = self.clone();
        for (_, c) in &mut lp.objective {
            *c *= factor;
        }
        lp
    }

    pub fn check(&self) -> Result<(), LpError> {
        for v in &self.variables {
            if !v.lower.is_finite() {
                return Err(LpError::InvalidModel(format!(
                    "variable `{}` needs a finite lower bound",
                    v.name
                )));
            }
            if v.upper.is_nan() || v.lower > v.upper {
                return Err(LpError::InvalidModel(format!(
                    "variable `{}` has bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        let n = self.variables.len();
        let in_range = |coeffs: &[(usize, f64)]| {
            coeffs.iter().all(|&(j, a)| j < n && a.is_finite())
        };
        if !in_range(&self.objective) {
            return Err(LpError::InvalidModel("objective references an undeclared variable or non-finite coefficient".into()));
        }
        for c in &self.constraints {
            if !in_range(&c.coeffs) || !c.rhs.is_finite() {
                return Err(LpError::InvalidModel(format!(
                    "constraint `{}` references an undeclared variable or non-finite number",
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Renders the program in the CPLEX LP text format.
    pub fn to_lp_format(&self) -> String {
        fn terms(out: &mut String, coeffs: &[(usize, f64)], vars: &[Variable]) {
            if coeffs.is_empty() {
                match vars.first() {
                    Some(v) => {
                        let _ = write!(out, " 0 {}", v.name);
                    }
                    None => out.push_str(" 0"),
                }
                return;
            }
            for (k, &(j, a)) in coeffs.iter().enumerate() {
                let sign = if a < 0.0 { "-" } else { "+" };
                if k == 0 && a >= 0.0 {
                    let _ = write!(out, " {} {}", a, vars[j].name);
                } else {
                    let _ = write!(out, " {sign} {} {}", a.abs(), vars[j].name);
                }
            }
        }
        let mut out = String::from("\\ budgeted bandit relaxation\nMaximize\n obj:");
        terms(&mut out, &self.objective, &self.variables);
        out.push_str("\nSubject To\n");
        for (i, c) in self.constraints.iter().enumerate() {
            let name = if c.name.is_empty() {
                format!("c{i}")
            } else {
                c.name.clone()
            };
            let _ = write!(out, " {name}:");
            terms(&mut out, &c.coeffs, &self.variables);
            let rel = match c.relation {
                Relation::Le => "<=",
                Relation::Eq => "=",
                Relation::Ge => ">=",
            };
            let _ = writeln!(out, " {rel} {}", c.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            if v.lower == v.upper {
                let _ = writeln!(out, " {} = {}", v.name, v.lower);
            } else if v.upper.is_infinite() {
                let _ = writeln!(out, " {} >= {}", v.name, v.lower);
            } else {
                let _ = writeln!(out, " {} <= {} <= {}", v.lower, v.name, v.upper);
            }
        }
        out.push_str("End\n");
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Variable values by column index; empty unless optimal.
    pub values: Vec<f64>,
    /// `NaN` unless optimal.
    pub objective_value: f64,
    /// One multiplier per constraint row of the original program; empty
    /// unless optimal.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn without_point(status: LpStatus, pivots: usize) -> Self {
        Self {
            status,
            values: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            pivots,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    pub fn value(&self, lp: &LinearProgram, name: &str) -> Option<f64> {
        lp.var_index(name).and_then(|j| self.values.get(j).copied())
    }

    /// Values keyed by variable name.
    pub fn named_values(&self, lp: &LinearProgram) -> HashMap<String, f64> {
        lp.variables
            .iter()
            .zip(&self.values)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect()
    }
}

/// Dense simplex tableau: `m` rows over `cols` columns plus a right-hand
/// side, and a reduced-cost row whose last entry holds `-z`.
struct Tableau {
    m: usize,
    width: usize,
    a: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.a[i * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let w = self.width;
        let p = self.a[r * w + e];
        for k in 0..w {
            self.a[r * w + k] /= p;
        }
        self.a[r * w + e] = 1.0;
        let (before, rest) = self.a.split_at_mut(r * w);
        let (row_r, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[e];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(row_r.iter()) {
                    *x -= f * y;
                }
                row[e] = 0.0;
            }
        }
        let f = self.obj[e];
        if f != 0.0 {
            for (x, &y) in self.obj.iter_mut().zip(row_r.iter()) {
                *x -= f * y;
            }
            self.obj[e] = 0.0;
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    /// Runs Bland's-rule iterations until optimal. Columns with
    /// `allowed[j] == false` never enter. Returns `false` when unbounded.
    fn optimize(&mut self, allowed: &[bool]) -> Result<bool, LpError> {
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(LpError::NumericalFailure(format!(
                    "no convergence after {MAX_PIVOTS} pivots"
                )));
            }
            let Some(e) = (0..self.width - 1).find(|&j| allowed[j] && self.obj[j] > PIVOT_EPS)
            else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, e);
                if a <= PIVOT_EPS {
                    continue;
                }
                let ratio = self.rhs(i).max(0.0) / a;
                best = match best {
                    None => Some((i, ratio)),
                    Some((bi, br)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        if ratio < br && !tie || tie && self.basis[i] < self.basis[bi] {
                            Some((i, ratio))
                        } else {
                            Some((bi, br))
                        }
                    }
                };
            }
            match best {
                Some((r, _)) => self.pivot(r, e),
                None => return Ok(false),
            }
        }
    }
}

/// Row of the standard-form system after shifting variables to zero lower
/// bounds and flipping rows to non-negative right-hand sides.
struct StdRow {
    coeffs: Vec<(usize, f64)>,
    relation: Relation,
    rhs: f64,
    /// Original constraint index and the sign applied to it, or `None` for
    /// an upper-bound row.
    origin: Option<(usize, f64)>,
}

/// Solves `lp` (maximization). Non-optimal outcomes are reported through
/// [`LpStatus`]; an `Err` means the program was malformed or the answer
/// could not be certified.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> Result<LpSolution, LpError> {
    lp.check()?;
    let nv = lp.variables.len();

    // Fixed variables are substituted; the rest become y_j = x_j - lower_j.
    let mut col_of = vec![usize::MAX; nv];
    let mut free_vars = Vec::new();
    for (j, v) in lp.variables.iter().enumerate() {
        if v.upper > v.lower {
            col_of[j] = free_vars.len();
            free_vars.push(j);
        }
    }
    let n = free_vars.len();
    let mut cost = vec![0.0; n];
    for &(j, c) in &lp.objective {
        if col_of[j] != usize::MAX {
            cost[col_of[j]] += c;
        }
    }

    let mut rows = Vec::new();
    for (i, c) in lp.constraints.iter().enumerate() {
        let mut rhs = c.rhs;
        let mut dense: HashMap<usize, f64> = HashMap::new();
        for &(j, a) in &c.coeffs {
            rhs -= a * lp.variables[j].lower;
            if col_of[j] != usize::MAX {
                *dense.entry(col_of[j]).or_insert(0.0) += a;
            }
        }
        let mut coeffs: Vec<(usize, f64)> = dense.into_iter().filter(|(_, a)| *a != 0.0).collect();
        coeffs.sort_unstable_by_key(|&(j, _)| j);
        let (sign, relation) = if rhs < 0.0 {
            let flipped = match c.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            (-1.0, flipped)
        } else {
            (1.0, c.relation)
        };
        if coeffs.is_empty() {
            // A row over fixed variables only is a pure feasibility check.
            let ok = match relation {
                Relation::Le => 0.0 <= sign * rhs + tol,
                Relation::Ge => 0.0 >= sign * rhs - tol,
                Relation::Eq => (sign * rhs).abs() <= tol,
            };
            if !ok {
                return Ok(LpSolution::without_point(LpStatus::Infeasible, 0));
            }
        }
        rows.push(StdRow {
            coeffs: coeffs.into_iter().map(|(j, a)| (j, a * sign)).collect(),
            relation,
            rhs: rhs * sign,
            origin: Some((i, sign)),
        });
    }
    for (col, &j) in free_vars.iter().enumerate() {
        let v = &lp.variables[j];
        if v.upper.is_finite() {
            rows.push(StdRow {
                coeffs: vec![(col, 1.0)],
                relation: Relation::Le,
                rhs: v.upper - v.lower,
                origin: None,
            });
        }
    }

    // Columns: structural | one slack/surplus per inequality | artificials.
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.relation != Relation::Eq).count();
    let n_art = rows.iter().filter(|r| r.relation != Relation::Le).count();
    let cols = n + n_slack + n_art;
    let width = cols + 1;
    let mut t = Tableau {
        m,
        width,
        a: vec![0.0; m * width],
        obj: vec![0.0; width],
        basis: vec![0; m],
        pivots: 0,
    };
    // Column whose reduced cost yields the row's dual multiplier.
    let mut identity_col = vec![0usize; m];
    let mut is_art = vec![false; cols];
    let (mut next_slack, mut next_art) = (n, n + n_slack);
    for (i, row) in rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            t.a[i * width + j] = a;
        }
        t.a[i * width + cols] = row.rhs;
        match row.relation {
            Relation::Le => {
                t.a[i * width + next_slack] = 1.0;
                t.basis[i] = next_slack;
                identity_col[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                t.a[i * width + next_slack] = -1.0;
                next_slack += 1;
                t.a[i * width + next_art] = 1.0;
                t.basis[i] = next_art;
                identity_col[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
            Relation::Eq => {
                t.a[i * width + next_art] = 1.0;
                t.basis[i] = next_art;
                identity_col[i] = next_art;
                is_art[next_art] = true;
                next_art += 1;
            }
        }
    }

    // Phase 1: maximize -sum(artificials).
    if n_art > 0 {
        for i in 0..m {
            if is_art[t.basis[i]] {
                for k in 0..width {
                    t.obj[k] += t.a[i * width + k];
                }
            }
        }
        for (j, &art) in is_art.iter().enumerate().take(cols) {
            if art {
                t.obj[j] = 0.0;
            }
        }
        let everything = vec![true; cols];
        t.optimize(&everything)?;
        let infeasibility = t.obj[cols];
        if infeasibility > tol {
            return Ok(LpSolution::without_point(LpStatus::Infeasible, t.pivots));
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if !is_art[t.basis[i]] {
                continue;
            }
            if let Some(j) = (0..cols).find(|&j| !is_art[j] && t.at(i, j).abs() > PIVOT_EPS) {
                t.pivot(i, j);
            }
        }
    }

    // Phase 2 objective in terms of the current basis.
    let mut c_full = vec![0.0; cols];
    c_full[..n].copy_from_slice(&cost);
    t.obj.iter_mut().for_each(|x| *x = 0.0);
    t.obj[..cols].copy_from_slice(&c_full);
    for i in 0..m {
        let cb = c_full[t.basis[i]];
        if cb != 0.0 {
            for k in 0..width {
                t.obj[k] -= cb * t.a[i * width + k];
            }
        }
    }
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    if !t.optimize(&allowed)? {
        return Ok(LpSolution::without_point(LpStatus::Unbounded, t.pivots));
    }

    // Primal point.
    let mut y = vec![0.0; cols];
    for i in 0..m {
        y[t.basis[i]] = t.rhs(i);
    }
    let mut values: Vec<f64> = lp.variables.iter().map(|v| v.lower).collect();
    for (col, &j) in free_vars.iter().enumerate() {
        values[j] = lp.variables[j].lower + y[col];
    }
    for (x, v) in values.iter_mut().zip(&lp.variables) {
        if *x < v.lower && *x >= v.lower - tol {
            *x = v.lower;
        }
        if *x > v.upper && *x <= v.upper + tol {
            *x = v.upper;
        }
    }
    let violation = lp.max_violation(&values);
    if violation > tol {
        return Err(LpError::NumericalFailure(format!(
            "final point violates the program by {violation:e}"
        )));
    }

    // Dual certificate for the standard-form system.
    let duals_std: Vec<f64> = (0..m).map(|i| -t.obj[identity_col[i]]).collect();
    let c_scale = 1.0 + cost.iter().fold(0.0f64, |acc, c| acc.max(c.abs()));
    let dual_tol = tol * c_scale;
    for (row, &yd) in rows.iter().zip(&duals_std) {
        let wrong_sign = match row.relation {
            Relation::Le => yd < -dual_tol,
            Relation::Ge => yd > dual_tol,
            Relation::Eq => false,
        };
        if wrong_sign {
            return Err(LpError::NumericalFailure(format!(
                "dual multiplier {yd:e} has the wrong sign"
            )));
        }
    }
    let mut reduced = cost.clone();
    for (row, &yd) in rows.iter().zip(&duals_std) {
        for &(j, a) in &row.coeffs {
            reduced[j] -= a * yd;
        }
    }
    if let Some(worst) = reduced.iter().copied().filter(|r| *r > dual_tol).reduce(f64::max) {
        return Err(LpError::NumericalFailure(format!(
            "dual infeasibility {worst:e} at the final basis"
        )));
    }
    let primal_std: f64 = cost.iter().zip(&y[..n]).map(|(c, x)| c * x).sum();
    let dual_std: f64 = rows.iter().zip(&duals_std).map(|(r, yd)| r.rhs * yd).sum();
    if (primal_std - dual_std).abs() > tol * (1.0 + primal_std.abs()) * c_scale {
        return Err(LpError::NumericalFailure(format!(
            "duality gap {:e} between {primal_std} and {dual_std}",
            (primal_std - dual_std).abs()
        )));
    }

    let mut duals = vec![0.0; lp.constraints.len()];
    for (row, &yd) in rows.iter().zip(&duals_std) {
        if let Some((i, sign)) = row.origin {
            duals[i] = yd * sign;
        }
    }
    Ok(LpSolution {
        status: LpStatus::Optimal,
        objective_value: lp.objective_value(&values),
        values,
        duals,
        pivots: t.pivots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_bounded_variable() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, 1.0);
        lp.set_objective(vec![(x, 1.0)]);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_eq!(sol.values[x], 1.0);
        assert_eq!(sol.objective_value, 1.0);
        assert_eq!(sol.value(&lp, "x"), Some(1.0));
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, f64::INFINITY);
        lp.add_constraint("neg", vec![(x, 1.0)], Relation::Le, -1.0);
        lp.set_objective(vec![(x, 1.0)]);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, f64::INFINITY);
        let y = lp.add_variable("y", 0.0, f64::INFINITY);
        lp.add_constraint("r", vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0);
        lp.set_objective(vec![(x, 1.0)]);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_and_ge_rows() {
        // max 3x + 2y s.t. x + y = 4, x >= 1, x <= 3 -> x = 3, y = 1, obj 11.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 0.0, f64::INFINITY);
        let y = lp.add_variable("y", 0.0, f64::INFINITY);
        lp.add_constraint("sum", vec![(x, 1.0), (y, 1.0)], Relation::Eq, 4.0);
        lp.add_constraint("lo", vec![(x, 1.0)], Relation::Ge, 1.0);
        lp.add_constraint("hi", vec![(x, 1.0)], Relation::Le, 3.0);
        lp.set_objective(vec![(x, 3.0), (y, 2.0)]);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert!((sol.objective_value - 11.0).abs() < 1e-9);
        assert!((sol.values[x] - 3.0).abs() < 1e-9);
        // Duals: sum row 2, hi row 1.
        assert!((sol.duals[0] - 2.0).abs() < 1e-9);
        assert!(sol.duals[1].abs() < 1e-9);
        assert!((sol.duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_and_shifted_variables() {
        // x fixed at 1, y in [2, 5]; x + y <= 4 -> y = 3.
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 1.0, 1.0);
        let y = lp.add_variable("y", 2.0, 5.0);
        lp.add_constraint("cap", vec![(x, 1.0), (y, 1.0)], Relation::Le, 4.0);
        lp.set_objective(vec![(y, 1.0), (x, 10.0)]);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(sol.values[x], 1.0);
        assert!((sol.values[y] - 3.0).abs() < 1e-9);
        assert!((sol.objective_value - 13.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_variables_can_make_rows_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x", 2.0, 2.0);
        lp.add_constraint("cap", vec![(x, 1.0)], Relation::Le, 1.0);
        assert_eq!(solve_lp(&lp, DEFAULT_TOL).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn beale_cycling_example_terminates() {
        // Beale's LP cycles under Dantzig's rule without anti-cycling.
        // Optimum 5/4 at x4 = x6 = 1.
        let mut lp = LinearProgram::new();
        let x4 = lp.add_variable("x4", 0.0, f64::INFINITY);
        let x5 = lp.add_variable("x5", 0.0, f64::INFINITY);
        let x6 = lp.add_variable("x6", 0.0, f64::INFINITY);
        let x7 = lp.add_variable("x7", 0.0, f64::INFINITY);
        lp.add_constraint(
            "r1",
            vec![(x4, 0.25), (x5, -8.0), (x6, -1.0), (x7, 9.0)],
            Relation::Le,
            0.0,
        );
        lp.add_constraint(
            "r2",
            vec![(x4, 0.5), (x5, -12.0), (x6, -0.5), (x7, 3.0)],
            Relation::Le,
            0.0,
        );
        lp.add_constraint("r3", vec![(x6, 1.0)], Relation::Le, 1.0);
        lp.set_objective(vec![(x4, 0.75), (x5, -20.0), (x6, 0.5), (x7, -6.0)]);
        let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective_value - 1.25).abs() < 1e-9);
    }

    #[test]
    fn malformed_programs_are_rejected() {
        let mut lp = LinearProgram::new();
        lp.add_variable("x", 1.0, 0.0);
        assert!(matches!(solve_lp(&lp, DEFAULT_TOL), Err(LpError::InvalidModel(_))));
        let mut lp = LinearProgram::new();
        lp.add_variable("x", f64::NEG_INFINITY, 0.0);
        assert!(matches!(solve_lp(&lp, DEFAULT_TOL), Err(LpError::InvalidModel(_))));
        let mut lp = LinearProgram::new();
        lp.add_variable("x", 0.0, 1.0);
        lp.add_constraint("c", vec![(3, 1.0)], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&lp, DEFAULT_TOL), Err(LpError::InvalidModel(_))));
    }

    #[test]
    fn lp_format_dump() {
        let mut lp = LinearProgram::new();
        let x = lp.add_variable("x_0_0", 0.0, 1.0);
        let w = lp.add_variable("w_0_0", 1.0, 1.0);
        lp.add_constraint("cap", vec![(x, 1.0), (w, -1.0)], Relation::Le, 0.0);
        lp.set_objective(vec![(x, 0.5)]);
        let text = lp.to_lp_format();
        assert!(text.contains("Maximize\n obj: 0.5 x_0_0"));
        assert!(text.contains(" cap: 1 x_0_0 - 1 w_0_0 <= 0"));
        assert!(text.contains(" w_0_0 = 1"));
        assert!(text.contains(" 0 <= x_0_0 <= 1"));
        assert!(text.ends_with("End\n"));
    }

    /// Brute-force optimum of a 2-variable program: the best feasible point
    /// among all pairwise intersections of constraint and bound lines.
    fn brute_force_2d(rows: &[(f64, f64, f64)], ux: f64, uy: f64, c: (f64, f64)) -> f64 {
        let mut lines: Vec<(f64, f64, f64)> = rows.to_vec();
        lines.extend([(1.0, 0.0, 0.0), (1.0, 0.0, ux), (0.0, 1.0, 0.0), (0.0, 1.0, uy)]);
        let feasible = |x: f64, y: f64| {
            x >= -1e-9
                && y >= -1e-9
                && x <= ux + 1e-9
                && y <= uy + 1e-9
                && rows.iter().all(|&(a, b, r)| a * x + b * y <= r + 1e-9)
        };
        let mut best = f64::NEG_INFINITY;
        for i in 0..lines.len() {
            for j in i + 1..lines.len() {
                let (a1, b1, r1) = lines[i];
                let (a2, b2, r2) = lines[j];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (r1 * b2 - r2 * b1) / det;
                let y = (a1 * r2 - a2 * r1) / det;
                if feasible(x, y) {
                    best = best.max(c.0 * x + c.1 * y);
                }
            }
        }
        best
    }

    proptest! {
        #[test]
        fn matches_vertex_enumeration(
            rows in prop::collection::vec((-2.0f64..3.0, -2.0f64..3.0, 0.0f64..4.0), 1..4),
            ux in 0.5f64..3.0,
            uy in 0.5f64..3.0,
            cx in -1.0f64..2.0,
            cy in -1.0f64..2.0,
        ) {
            let mut lp = LinearProgram::new();
            let x = lp.add_variable("x", 0.0, ux);
            let y = lp.add_variable("y", 0.0, uy);
            for (k, &(a, b, r)) in rows.iter().enumerate() {
                lp.add_constraint(format!("r{k}"), vec![(x, a), (y, b)], Relation::Le, r);
            }
            lp.set_objective(vec![(x, cx), (y, cy)]);
            let sol = solve_lp(&lp, DEFAULT_TOL).unwrap();
            // The origin is always feasible (rhs >= 0) and the box is bounded.
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            let expected = brute_force_2d(&rows, ux, uy, (cx, cy));
            prop_assert!((sol.objective_value - expected).abs() <= 1e-7 * (1.0 + expected.abs()));
            prop_assert!(lp.max_violation(&sol.values) <= DEFAULT_TOL);
        }

        #[test]
        fn scaling_and_redundancy(
            rows in prop::collection::vec(prop::collection::vec(-1.0f64..2.0, 4), 1..5),
            rhs in prop::collection::vec(0.0f64..3.0, 5),
            c in prop::collection::vec(-1.0f64..2.0, 4),
            factor in 0.1f64..10.0,
        ) {
            let mut lp = LinearProgram::new();
            let vars: Vec<usize> = (0..4).map(|j| lp.add_variable(format!("v{j}"), 0.0, 1.0)).collect();
            for (k, row) in rows.iter().enumerate() {
                lp.add_constraint(format!("r{k}"), vars.iter().copied().zip(row.iter().copied()).collect(), Relation::Le, rhs[k]);
            }
            lp.set_objective(vars.iter().copied().zip(c.iter().copied()).collect());
            let base = solve_lp(&lp, DEFAULT_TOL).unwrap();
            prop_assert_eq!(base.status, LpStatus::Optimal);
            prop_assert!(lp.max_violation(&base.values) <= DEFAULT_TOL);

            let scaled = solve_lp(&lp.scaled_objective(factor), DEFAULT_TOL).unwrap();
            prop_assert_eq!(scaled.status, LpStatus::Optimal);
            prop_assert!((scaled.objective_value - factor * base.objective_value).abs()
                <= 1e-7 * (1.0 + scaled.objective_value.abs()));

            let mut dup = lp.clone();
            let first = lp.constraints()[0].clone();
            dup.add_constraint("dup", first.coeffs, first.relation, first.rhs);
            let again = solve_lp(&dup, DEFAULT_TOL).unwrap();
            prop_assert!((again.objective_value - base.objective_value).abs()
                <= 1e-7 * (1.0 + base.objective_value.abs()));
        }
    }
}
