//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use budgeted_bandits::bench::{
    adaptivity_demo, corrupt_instance, gen_integrality_gap, gen_random_suite, run_guarantee_suite, CostRule,
    EvaluationReport, Family, GeneratorSpec, NamedInstance, ObjectiveSpec, SuiteOptions,
};
use budgeted_bandits::oracle::{dp_optimal, enumerate_policy_statistics, DEFAULT_STATE_LIMIT};
use budgeted_bandits::policy::{
    evaluate_plan_exact, make_greedy_plan, max_single_arm_cost, monte_carlo_evaluate, Executor,
};
use budgeted_bandits::relax::{build_budgeted_lp, extract_single_arm_policies, solve_relaxation};
use budgeted_bandits::statespace::validate_instance;

const TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main_suite() -> Vec<NamedInstance> {
    let spec = GeneratorSpec {
        n: 3,
        max_depth: 2,
        costs: CostRule::Integer { min: 1, max: 3 },
        switch_costs: CostRule::Integer { min: 0, max: 1 },
        max_budget: 5.0,
        ..GeneratorSpec::new(Family::RandomMixed, 200, 2024)
    };
    gen_random_suite(&spec).expect("main suite")
}

/// Smallest `value - bound` over rows for checks named `check`, and how
/// many rows carried it.
fn margin(report: &EvaluationReport, check: &str) -> (f64, usize) {
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for c in report.rows.iter().flat_map(|r| &r.checks).filter(|c| c.check == check) {
        worst = worst.min(c.value - c.bound);
        count += 1;
    }
    (worst, count)
}

fn integrality_gap() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut ratio16 = 0.0;
    let mut worst_gamma: f64 = 0.0;
    let mut worst_opt: f64 = 0.0;
    for n in [2usize, 4, 8, 16] {
        let inst = gen_integrality_gap(n).unwrap();
        let gamma = solve_relaxation(&inst).unwrap().gamma_star;
        let opt = dp_optimal(&inst, DEFAULT_STATE_LIMIT).unwrap().value;
        let closed = 1.0 - (1.0 - 1.0 / n as f64).powi(n as i32);
        worst_gamma = worst_gamma.max((gamma - 1.0).abs());
        worst_opt = worst_opt.max((opt - closed).abs());
        pass &= (gamma - 1.0).abs() <= 1e-6 && (opt - closed).abs() <= 1e-9;
        if n == 16 {
            ratio16 = gamma / opt;
        }
    }
    let elapsed = start.elapsed();
    pass &= ratio16 >= 1.55 && elapsed < Duration::from_secs(5);
    outcome(
        pass,
        format!(
            "max |gamma*-1| = {worst_gamma:.2e}, max |OPT-closed form| = {worst_opt:.2e}, ratio(16) = {ratio16:.4}, {elapsed:.2?}"
        ),
    )
}

fn order_bound(report: &EvaluationReport, suite: &[NamedInstance], elapsed: Duration) -> Outcome {
    let (order, n_order) = margin(report, "greedy-order");
    let (lp, n_lp) = margin(report, "lp-upper-bound");
    let pass = order >= 0.0 && lp >= 0.0 && n_order == suite.len() && n_lp == suite.len()
        && elapsed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "{} instances, oracle on {n_lp}; min(value - gamma*/4) = {:.3e}, min(gamma* - OPT) = {:.3e}, {elapsed:.2?}",
            suite.len(),
            order - TOL,
            lp - TOL
        ),
    )
}

/// Returns the outcome and the number of trace violations seen.
fn cost_bound(suite: &[NamedInstance]) -> (Outcome, u64, u64) {
    let mut pass = true;
    let mut violations = 0;
    let mut traces = 0;
    let mut worst_agree: f64 = 0.0;
    let mut worst_order = f64::NEG_INFINITY;
    let mut worst_violate = f64::NEG_INFINITY;
    for named in &suite[..20] {
        let inst = &named.instance;
        let sol = solve_relaxation(inst).unwrap();
        let pols = extract_single_arm_policies(&sol, inst).unwrap();
        let plan = make_greedy_plan(&pols, inst, 1.0).unwrap();
        let order = monte_carlo_evaluate(inst, &plan, &pols, Executor::GreedyOrder, 10_000, 7).unwrap();
        let violate = monte_carlo_evaluate(inst, &plan, &pols, Executor::GreedyViolate, 10_000, 7).unwrap();
        let c_max = max_single_arm_cost(inst);
        worst_order = worst_order.max(order.max_cost - inst.budget);
        worst_violate = worst_violate.max(violate.max_cost - inst.budget - c_max);
        violations += order.violations + violate.violations;
        traces += order.reps + violate.reps;
        let eo = evaluate_plan_exact(inst, &plan, &pols, Executor::GreedyOrder).unwrap();
        let ev = evaluate_plan_exact(inst, &plan, &pols, Executor::GreedyViolate).unwrap();
        worst_agree = worst_agree.max((eo.value - ev.value).abs());
    }
    pass &= worst_order <= 1e-9 && worst_violate <= 1e-9 && worst_agree <= 1e-6;
    (
        outcome(
            pass,
            format!(
                "20 instances x 10^4 traces; max(order cost - C) = {worst_order:.3}, max(violate cost - C - c_max) = {worst_violate:.3}, max |order - violate| = {worst_agree:.2e}"
            ),
        ),
        violations,
        traces,
    )
}

fn bicriteria(report: &EvaluationReport) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for alpha in [1.0, 2.0, 4.0] {
        let (m, count) = margin(report, &format!("bicriteria-{alpha}"));
        pass &= m >= 0.0 && count == report.rows.len();
        parts.push(format!("alpha {alpha}: min margin {:.3e}", m - TOL));
    }
    outcome(pass, parts.join(", "))
}

fn lagrangean() -> Outcome {
    let spec = GeneratorSpec {
        costs: CostRule::Real { min: 0.01, max: 0.3 },
        switch_costs: CostRule::Real { min: 0.0, max: 0.1 },
        objective: ObjectiveSpec::Lagrangean,
        ..GeneratorSpec::new(Family::RandomMixed, 100, 77)
    };
    let suite = gen_random_suite(&spec).unwrap();
    let report = run_guarantee_suite(&suite, &SuiteOptions::default()).unwrap();
    let (arm, n_arm) = margin(&report, "arm-profit");
    let (greedy, n_greedy) = margin(&report, "lagrangean-greedy");
    let (lp, n_lp) = margin(&report, "lp-upper-bound");
    let pass = arm >= 0.0 && greedy >= 0.0 && lp >= 0.0 && n_arm == 100 && n_greedy == 100;
    outcome(
        pass,
        format!(
            "100 instances; min arm R-C = {:.3e}, min(profit - gamma*/2) = {:.3e}, oracle on {n_lp}: min(gamma* - OPT) = {:.3e}",
            arm - 1e-7,
            greedy - TOL,
            lp - TOL
        ),
    )
}

fn nonadaptive() -> Outcome {
    let spec = GeneratorSpec::new(Family::RandomTwoLevel, 100, 99);
    let suite = gen_random_suite(&spec).unwrap();
    let options = SuiteOptions {
        oracle: false,
        ..SuiteOptions::default()
    };
    let report = run_guarantee_suite(&suite, &options).unwrap();
    let (value, n_value) = margin(&report, "nonadaptive-value");
    let (budget, _) = margin(&report, "nonadaptive-budget");
    let pass = value >= 0.0 && budget >= 0.0 && n_value == 100;
    outcome(
        pass,
        format!(
            "100 instances; min(value - gamma*/7) = {:.3e}, min(C - probe cost) = {:.3e}",
            value - TOL,
            budget - TOL
        ),
    )
}

fn concave() -> Outcome {
    let spec = GeneratorSpec {
        objective: ObjectiveSpec::Concave {
            capacities: vec![1.0, 2.0],
            epsilon: 0.25,
        },
        ..GeneratorSpec::new(Family::RandomMixed, 50, 11)
    };
    let suite = gen_random_suite(&spec).unwrap();
    let options = SuiteOptions {
        mc_reps: 100_000,
        oracle: false,
        ..SuiteOptions::default()
    };
    let report = run_guarantee_suite(&suite, &options).unwrap();
    let (value, n) = margin(&report, "concave-value");
    let (load, _) = margin(&report, "concave-load");
    let (structure, _) = margin(&report, "trace-structure");
    let pass = value >= 0.0 && load >= 0.0 && structure >= 0.0 && n == 50;
    outcome(
        pass,
        format!(
            "50 instances x 10^5 traces; min(value - ((1-eps) gamma*/8 - 3 se)) = {value:.3e}, min(B - load) = {load:.3e}"
        ),
    )
}

fn lp_feasibility(suite: &[NamedInstance]) -> Outcome {
    let mut worst_row: f64 = 0.0;
    let mut worst_gap = f64::NEG_INFINITY;
    for named in &suite[..50] {
        let inst = &named.instance;
        let opt = dp_optimal(inst, DEFAULT_STATE_LIMIT).unwrap();
        let stats = enumerate_policy_statistics(inst, &opt, DEFAULT_STATE_LIMIT).unwrap();
        let model = build_budgeted_lp(inst).unwrap();
        let point = model.point(&stats.arms);
        worst_row = worst_row.max(model.lp.max_violation(&point));
        let gamma = solve_relaxation(inst).unwrap().gamma_star;
        worst_gap = worst_gap.max(model.lp.objective_value(&point) - gamma);
    }
    outcome(
        worst_row <= 1e-6 && worst_gap <= 1e-6,
        format!("50 instances; max row violation = {worst_row:.2e}, max(objective - gamma*) = {worst_gap:.3e}"),
    )
}

fn adaptivity() -> Outcome {
    let start = Instant::now();
    let ratios: Vec<f64> = [16, 64, 256]
        .iter()
        .map(|&n| adaptivity_demo(n, 10_000, 2024).unwrap().ratio)
        .collect();
    let elapsed = start.elapsed();
    let pass = ratios.windows(2).all(|w| w[1] > w[0]) && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "adaptive/uniform at n = 16, 64, 256: {:.3}, {:.3}, {:.3}; {elapsed:.2?}",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn validation(suite: &[NamedInstance]) -> Outcome {
    let mut caught = 0;
    let mut clean = 0;
    for (k, named) in suite[..20].iter().enumerate() {
        let (bad, _) = corrupt_instance(&named.instance, k as u64, 1e-3).unwrap();
        caught += usize::from(!validate_instance(&bad).is_empty());
        clean += usize::from(validate_instance(&named.instance).is_empty());
    }
    outcome(
        caught == 20 && clean == 20,
        format!("{caught}/20 corrupted flagged, {clean}/20 twins clean"),
    )
}

fn main() -> ExitCode {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "integrality gap", integrality_gap()));

    let suite = main_suite();
    let start = Instant::now();
    let options = SuiteOptions {
        alphas: vec![1.0, 2.0, 4.0],
        mc_reps: 200,
        seed: 3,
        ..SuiteOptions::default()
    };
    let report = run_guarantee_suite(&suite, &options).unwrap();
    let elapsed = start.elapsed();
    results.push((2, "greedy order bound", order_bound(&report, &suite, elapsed)));

    let (cost, cost_violations, cost_traces) = cost_bound(&suite);
    results.push((3, "cost bound", cost));

    let (structure, _) = margin(&report, "trace-structure");
    let suite_violations = (-structure).max(0.0) as u64;
    let suite_traces = 2 * options.mc_reps * suite.len() as u64;
    results.push((
        4,
        "sequentiality",
        outcome(
            structure >= 0.0 && cost_violations == 0,
            format!(
                "{} traces checked, {} with a revisit, double switch or cost mismatch",
                suite_traces + cost_traces,
                suite_violations + cost_violations
            ),
        ),
    ));
    results.push((5, "bicriteria", bicriteria(&report)));
    results.push((6, "lagrangean", lagrangean()));
    results.push((7, "non-adaptive two-level", nonadaptive()));
    results.push((8, "concave utilities", concave()));
    results.push((9, "LP feasibility of the optimum", lp_feasibility(&suite)));
    results.push((10, "adaptivity demo", adaptivity()));
    results.push((11, "validation", validation(&suite)));

    let mut failed = 0;
    for (k, name, o) in &results {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!("{tag} criterion {k:>2} ({name}): {}", o.detail);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
