//! C ABI over the budgeted-bandits planner.
//!
//! Every fallible function returns a [`BbStatus`]; on failure the message is
//! available from [`bb_last_error_message`] on the same thread. Objects are
//! opaque handles released with their `_free` function, and strings
//! returned by the library are released with [`bb_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use budgeted_bandits::oracle::dp_optimal;
use budgeted_bandits::policy::{evaluate_plan_exact, make_greedy_plan, monte_carlo_evaluate, Executor, GreedyPlan};
use budgeted_bandits::relax::{extract_single_arm_policies, solve_relaxation, RelaxationSolution, SingleArmPolicy};
use budgeted_bandits::statespace::{validate_instance, BanditInstance};
use budgeted_bandits::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Validation = 4,
    WrongVariant = 5,
    NonIntegerCost = 6,
    StateSpaceTooLarge = 7,
    Lp = 8,
    NotOptimal = 9,
    Inconsistent = 10,
    Io = 11,
    Json = 12,
    Panic = 13,
}

/// Rounding executor selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BbExecutor {
    /// The executor matching the instance objective.
    Default = 0,
    GreedyOrder = 1,
    GreedyViolate = 2,
    Lagrangean = 3,
    Concave = 4,
}

/// Exact expectation of a rounded policy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BbExactResult {
    pub value: f64,
    pub expected_reward: f64,
    pub expected_cost: f64,
}

/// Monte-Carlo estimate of a rounded policy.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BbMonteCarloResult {
    pub mean: f64,
    pub std_error: f64,
    pub mean_cost: f64,
    pub max_cost: f64,
    /// Traces that failed the structural checks.
    pub violations: u64,
}

/// A parsed bandit instance.
pub struct BbInstance {
    inner: BanditInstance,
}

/// A solved relaxation with its single-arm policies and greedy plan.
pub struct BbSolver {
    instance: BanditInstance,
    solution: RelaxationSolution,
    policies: Vec<SingleArmPolicy>,
    plan: GreedyPlan,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BbStatus {
    match e {
        Error::InvalidInput(_) => BbStatus::InvalidInput,
        Error::Validation(_) => BbStatus::Validation,
        Error::WrongVariant { .. } => BbStatus::WrongVariant,
        Error::NonIntegerCost { .. } => BbStatus::NonIntegerCost,
        Error::StateSpaceTooLarge { .. } => BbStatus::StateSpaceTooLarge,
        Error::Lp(_) => BbStatus::Lp,
        Error::RelaxationNotOptimal { .. } => BbStatus::NotOptimal,
        Error::InconsistentSolution { .. } => BbStatus::Inconsistent,
        Error::Io(_) => BbStatus::Io,
        Error::Json(_) => BbStatus::Json,
    }
}

enum Failure {
    Status(BbStatus, String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(BbStatus::NullPointer, format!("{what} is null"))
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BbStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BbStatus::Ok,
        Ok(Err(Failure::Status(s, m))) => {
            set_error(m);
            s
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            BbStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure::Status(BbStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn in_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn executor(e: BbExecutor, plan: &GreedyPlan) -> Executor {
    match e {
        BbExecutor::Default => Executor::for_plan(plan),
        BbExecutor::GreedyOrder => Executor::GreedyOrder,
        BbExecutor::GreedyViolate => Executor::GreedyViolate,
        BbExecutor::Lagrangean => Executor::Lagrangean,
        BbExecutor::Concave => Executor::Concave,
    }
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn bb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses an instance from JSON. Model violations are reported by
/// [`bb_instance_diagnostic_count`], not here.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_instance_from_json(json: *const c_char, out: *mut *mut BbInstance) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let inner = BanditInstance::from_json_str(text)?;
        *out = Box::into_raw(Box::new(BbInstance { inner }));
        Ok(())
    })
}

/// Serializes an instance to JSON; free the result with [`bb_string_free`].
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_instance_to_json(instance: *const BbInstance, out: *mut *mut c_char) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let json = in_ref(instance, "instance")?.inner.to_json_string()?;
        *out = CString::new(json).map_err(|e| Failure::Status(BbStatus::Json, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// # Safety
/// `instance` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bb_instance_free(instance: *mut BbInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Number of arms, or 0 for NULL.
///
/// # Safety
/// `instance` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_instance_n_arms(instance: *const BbInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.inner.n_arms())
}

/// Number of model diagnostics; zero means the instance is clean.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_instance_diagnostic_count(instance: *const BbInstance, out: *mut usize) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = validate_instance(&in_ref(instance, "instance")?.inner).len();
        Ok(())
    })
}

/// Optimal value of the instance's LP relaxation.
///
/// # Safety
/// `instance` must be a live handle and `gamma_star` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_solve_relaxation(instance: *const BbInstance, gamma_star: *mut f64) -> BbStatus {
    guard(|| {
        let out = out_ref(gamma_star, "gamma_star")?;
        *out = solve_relaxation(&in_ref(instance, "instance")?.inner)?.gamma_star;
        Ok(())
    })
}

/// Exact optimal adaptive value by dynamic programming, refusing instances
/// whose estimated joint state count exceeds `limit`.
///
/// # Safety
/// `instance` must be a live handle and `opt` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_dp_optimal(instance: *const BbInstance, limit: usize, opt: *mut f64) -> BbStatus {
    guard(|| {
        let out = out_ref(opt, "opt")?;
        *out = dp_optimal(&in_ref(instance, "instance")?.inner, limit)?.value;
        Ok(())
    })
}

/// Solves the relaxation, extracts single-arm policies and builds the
/// greedy plan (`alpha > 1` gives the bicriteria plan with budget
/// `alpha C`).
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_new(instance: *const BbInstance, alpha: f64, out: *mut *mut BbSolver) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let instance = in_ref(instance, "instance")?.inner.clone();
        let solution = solve_relaxation(&instance)?;
        let policies = extract_single_arm_policies(&solution, &instance)?;
        let plan = make_greedy_plan(&policies, &instance, alpha)?;
        *out = Box::into_raw(Box::new(BbSolver {
            instance,
            solution,
            policies,
            plan,
        }));
        Ok(())
    })
}

/// # Safety
/// `solver` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_free(solver: *mut BbSolver) {
    if !solver.is_null() {
        drop(Box::from_raw(solver));
    }
}

/// LP optimum behind the solver, or NaN for NULL.
///
/// # Safety
/// `solver` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_gamma_star(solver: *const BbSolver) -> f64 {
    solver.as_ref().map_or(f64::NAN, |s| s.solution.gamma_star)
}

/// Writes the plan's arm order (indices into the instance) into `order`,
/// which must hold `capacity` entries; `len` receives the plan length.
///
/// # Safety
/// `solver` must be a live handle, `len` valid, and `order` valid for
/// `capacity` writes (it may be NULL when `capacity` is 0).
#[no_mangle]
pub unsafe extern "C" fn bb_solver_plan_order(
    solver: *const BbSolver,
    order: *mut usize,
    capacity: usize,
    len: *mut usize,
) -> BbStatus {
    guard(|| {
        let solver = in_ref(solver, "solver")?;
        let len = out_ref(len, "len")?;
        let arms = solver.plan.arm_order();
        *len = arms.len();
        if capacity < arms.len() {
            return Err(Failure::Status(
                BbStatus::InvalidInput,
                format!("order buffer holds {capacity} entries, plan has {}", arms.len()),
            ));
        }
        if order.is_null() && !arms.is_empty() {
            return Err(null("order"));
        }
        for (k, a) in arms.into_iter().enumerate() {
            *order.add(k) = a;
        }
        Ok(())
    })
}

/// The plan as JSON; free the result with [`bb_string_free`].
///
/// # Safety
/// `solver` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_plan_json(solver: *const BbSolver, out: *mut *mut c_char) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        *out = ptr::null_mut();
        let solver = in_ref(solver, "solver")?;
        let json = serde_json::to_string(&solver.plan).map_err(Error::from)?;
        *out = CString::new(json).map_err(|e| Failure::Status(BbStatus::Json, e.to_string()))?.into_raw();
        Ok(())
    })
}

/// Exact expected value, reward and cost of the rounded policy.
///
/// # Safety
/// `solver` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_evaluate_exact(
    solver: *const BbSolver,
    exec: BbExecutor,
    out: *mut BbExactResult,
) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = in_ref(solver, "solver")?;
        let e = evaluate_plan_exact(&s.instance, &s.plan, &s.policies, executor(exec, &s.plan))?;
        *out = BbExactResult {
            value: e.value,
            expected_reward: e.expected_reward,
            expected_cost: e.expected_cost,
        };
        Ok(())
    })
}

/// Monte-Carlo estimate over `reps` traces; replication `k` uses RNG stream
/// `k` of `seed`.
///
/// # Safety
/// `solver` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn bb_solver_monte_carlo(
    solver: *const BbSolver,
    exec: BbExecutor,
    reps: u64,
    seed: u64,
    out: *mut BbMonteCarloResult,
) -> BbStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let s = in_ref(solver, "solver")?;
        let r = monte_carlo_evaluate(&s.instance, &s.plan, &s.policies, executor(exec, &s.plan), reps, seed)?;
        *out = BbMonteCarloResult {
            mean: r.mean,
            std_error: r.std_error,
            mean_cost: r.mean_cost,
            max_cost: r.max_cost,
            violations: r.violations,
        };
        Ok(())
    })
}
