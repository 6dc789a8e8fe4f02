use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use budgeted_bandits::bench::{
    adaptivity_demo, gen_random_suite, run_guarantee_suite, EvaluationReport, Family, GeneratorSpec,
    ObjectiveSpec, SuiteSpec,
};
use budgeted_bandits::lp::{default_tolerance, TOL_ENV};
use budgeted_bandits::nonadaptive::nonadaptive_two_level;
use budgeted_bandits::oracle::{dp_optimal, DEFAULT_STATE_LIMIT};
use budgeted_bandits::policy::{
    evaluate_plan_exact, execute, make_greedy_plan, monte_carlo_evaluate, trace_to_json_lines, Executor,
};
use budgeted_bandits::relax::{
    build_budgeted_lp, build_concave_lp, build_lagrangean_lp, extract_single_arm_policies, solve_relaxation,
    RelaxationModel,
};
use budgeted_bandits::statespace::{integer_cost_diagnostics, validate_instance, BanditInstance, Objective};

#[derive(Parser)]
#[command(name = "bbandit", version, about = "Budgeted Bayesian bandits via LP rounding")]
struct Cli {
    /// LP feasibility tolerance.
    #[arg(long, global = true, env = TOL_ENV)]
    tol: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    IntegralityGap,
    AdaptivityGap,
    RandomTwoLevel,
    RandomBeta,
    RandomMixed,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::IntegralityGap => Family::IntegralityGap,
            FamilyArg::AdaptivityGap => Family::AdaptivityGap,
            FamilyArg::RandomTwoLevel => Family::RandomTwoLevel,
            FamilyArg::RandomBeta => Family::RandomBeta,
            FamilyArg::RandomMixed => Family::RandomMixed,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum VariantArg {
    Budgeted,
    Lagrangean,
    Concave,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExecutorArg {
    GreedyOrder,
    GreedyViolate,
    Lagrangean,
    Concave,
}

impl From<ExecutorArg> for Executor {
    fn from(e: ExecutorArg) -> Self {
        match e {
            ExecutorArg::GreedyOrder => Executor::GreedyOrder,
            ExecutorArg::GreedyViolate => Executor::GreedyViolate,
            ExecutorArg::Lagrangean => Executor::Lagrangean,
            ExecutorArg::Concave => Executor::Concave,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instances. With `--count` above one, `-o` names a directory.
    Gen {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Write a Lagrangean instance instead of a budgeted one.
        #[arg(long)]
        lagrangean: bool,
        /// Full generator description (JSON); overrides the other options.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Check the model assumptions and list every violation.
    Validate { file: PathBuf },
    /// Solve the LP relaxation and print gamma* with the solution.
    Solve {
        file: PathBuf,
        #[arg(long, value_enum)]
        variant: Option<VariantArg>,
        /// Grid precision for the concave relaxation.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Also write the LP in a readable text format.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Print the greedy arm order with its ratios.
    Plan {
        file: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Execute the rounded policy: one trace, or a Monte-Carlo estimate.
    Run {
        file: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        reps: Option<u64>,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, value_enum)]
        executor: Option<ExecutorArg>,
        /// Write the single trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Exact optimum by dynamic programming, next to gamma*.
    Oracle {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_STATE_LIMIT)]
        limit: usize,
    },
    /// Non-adaptive probe set for star-shaped arms.
    Nonadaptive { file: PathBuf },
    /// Generate a suite and check every guarantee on it.
    Suite {
        #[arg(long)]
        spec: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Re-render a saved suite report.
    Report {
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Adaptive two-phase strategy against uniform allocation.
    Adaptivity {
        #[arg(long, num_args = 1.., default_values_t = [16usize, 64, 256])]
        n: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        reps: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{text}") {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => Ok(r?),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&serde_json::to_string_pretty(value)?)
}

fn read_instance(path: &Path) -> Result<BanditInstance> {
    BanditInstance::read(path).with_context(|| format!("reading {}", path.display()))
}

fn relaxation_for(instance: &BanditInstance, variant: Option<VariantArg>, epsilon: Option<f64>) -> Result<RelaxationModel> {
    let model = match variant {
        None => match (&instance.objective, epsilon) {
            (Objective::Concave(_), Some(eps)) => build_concave_lp(instance, eps)?,
            (Objective::Concave(p), None) => build_concave_lp(instance, p.epsilon)?,
            (Objective::Lagrangean, _) => build_lagrangean_lp(instance)?,
            (Objective::Budgeted { .. }, _) => build_budgeted_lp(instance)?,
        },
        Some(VariantArg::Budgeted) => build_budgeted_lp(&instance.with_objective(Objective::Budgeted { alpha: 1.0 }))?,
        Some(VariantArg::Lagrangean) => build_lagrangean_lp(&instance.with_objective(Objective::Lagrangean))?,
        Some(VariantArg::Concave) => {
            let Objective::Concave(p) = &instance.objective else {
                bail!("the concave relaxation needs an instance with a concave objective");
            };
            build_concave_lp(instance, epsilon.unwrap_or(p.epsilon))?
        }
    };
    Ok(model)
}

fn render_report(report: &EvaluationReport, format: Format) -> Result<String> {
    Ok(match format {
        Format::Json => serde_json::to_string_pretty(report)?,
        Format::Csv => report.to_csv(),
    })
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.tol {
        // Library solves read the tolerance from the environment.
        std::env::set_var(TOL_ENV, t.to_string());
    }
    let tol = default_tolerance();
    match cli.command {
        Command::Gen {
            family,
            n,
            seed,
            count,
            lagrangean,
            spec,
            output,
        } => {
            let spec = match spec {
                Some(path) => serde_json::from_str::<GeneratorSpec>(&std::fs::read_to_string(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => GeneratorSpec {
                    n,
                    objective: if lagrangean {
                        ObjectiveSpec::Lagrangean
                    } else {
                        ObjectiveSpec::Budgeted
                    },
                    ..GeneratorSpec::new(family.into(), count, seed)
                },
            };
            let suite = gen_random_suite(&spec)?;
            let mut written = Vec::new();
            if suite.len() == 1 {
                suite[0].instance.write(&output)?;
                written.push(output.display().to_string());
            } else {
                std::fs::create_dir_all(&output)?;
                for named in &suite {
                    let path = output.join(format!("{}.json", named.name));
                    named.instance.write(&path)?;
                    written.push(path.display().to_string());
                }
            }
            print_json(&json!({ "written": written }))?;
        }
        Command::Validate { file } => {
            let instance = read_instance(&file)?;
            let diags = validate_instance(&instance);
            let integer = integer_cost_diagnostics(&instance).is_empty();
            let list: Vec<_> = diags
                .iter()
                .map(|d| {
                    json!({
                        "arm": d.arm_id,
                        "state": d.state_id,
                        "kind": format!("{:?}", d.kind),
                        "magnitude": d.magnitude,
                        "message": d.to_string(),
                    })
                })
                .collect();
            print_json(&json!({ "valid": diags.is_empty(), "integer_costs": integer, "diagnostics": list }))?;
            if !diags.is_empty() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Solve {
            file,
            variant,
            epsilon,
            dump_lp,
        } => {
            let instance = read_instance(&file)?;
            instance.ensure_valid()?;
            let model = relaxation_for(&instance, variant, epsilon)?;
            if let Some(path) = dump_lp {
                std::fs::write(&path, model.lp.to_lp_format())?;
            }
            let solution = model.solve(tol)?;
            print_json(&solution)?;
        }
        Command::Plan { file, alpha } => {
            let instance = read_instance(&file)?;
            let solution = solve_relaxation(&instance)?;
            let policies = extract_single_arm_policies(&solution, &instance)?;
            let plan = make_greedy_plan(&policies, &instance, alpha)?;
            print_json(&json!({ "gamma_star": solution.gamma_star, "plan": plan }))?;
        }
        Command::Run {
            file,
            seed,
            reps,
            alpha,
            executor,
            trace,
        } => {
            let instance = read_instance(&file)?;
            let solution = solve_relaxation(&instance)?;
            let policies = extract_single_arm_policies(&solution, &instance)?;
            let plan = make_greedy_plan(&policies, &instance, alpha)?;
            let executor = executor.map_or_else(|| Executor::for_plan(&plan), Executor::from);
            let exact = evaluate_plan_exact(&instance, &plan, &policies, executor).ok();
            match reps {
                Some(reps) => {
                    let report = monte_carlo_evaluate(&instance, &plan, &policies, executor, reps, seed)?;
                    print_json(&json!({
                        "gamma_star": solution.gamma_star,
                        "exact": exact,
                        "monte_carlo": report,
                    }))?;
                }
                None => {
                    let t = execute(&instance, &plan, &policies, executor, seed, 0)?;
                    if let Some(path) = trace {
                        std::fs::write(&path, trace_to_json_lines(&instance, &t))?;
                    }
                    print_json(&json!({
                        "gamma_star": solution.gamma_star,
                        "exact": exact,
                        "trace": t,
                    }))?;
                }
            }
        }
        Command::Oracle { file, limit } => {
            let instance = read_instance(&file)?;
            let opt = dp_optimal(&instance, limit)?;
            let gamma = solve_relaxation(&instance)?.gamma_star;
            print_json(&json!({
                "opt": opt.value,
                "gamma_star": gamma,
                "ratio": if opt.value > 0.0 { Some(gamma / opt.value) } else { None },
                "states_evaluated": opt.states_evaluated(),
                "symmetric": opt.symmetric,
            }))?;
        }
        Command::Nonadaptive { file } => {
            let instance = read_instance(&file)?;
            let solution = solve_relaxation(&instance)?;
            print_json(&nonadaptive_two_level(&instance, &solution)?)?;
        }
        Command::Suite { spec, output, format } => {
            let spec: SuiteSpec = serde_json::from_str(&std::fs::read_to_string(&spec)?)
                .with_context(|| format!("parsing {}", spec.display()))?;
            let suite = gen_random_suite(&spec.generator)?;
            let report = run_guarantee_suite(&suite, &spec.options)?;
            if let Some(path) = output {
                std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            }
            emit(&render_report(&report, format)?)?;
            if !report.passed() {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Report { input, format } => {
            let report: EvaluationReport = serde_json::from_str(&std::fs::read_to_string(&input)?)
                .with_context(|| format!("parsing {}", input.display()))?;
            emit(&render_report(&report, format)?)?;
        }
        Command::Adaptivity { n, reps, seed } => {
            let demos = n
                .iter()
                .map(|&n| adaptivity_demo(n, reps, seed))
                .collect::<budgeted_bandits::Result<Vec<_>>>()?;
            let increasing = demos.windows(2).all(|w| w[1].ratio > w[0].ratio);
            print_json(&json!({ "demos": demos, "ratio_increasing": increasing }))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
