//! C ABI for the `pasto` crate.
//!
//! Every fallible function returns a [`PastoStatus`]. On failure a message is
//! stored per thread and can be read with [`pasto_last_error_message`].
//! Handles are opaque; each `*_new`/constructor has a matching `*_free`.
//! Strings returned to the caller must be released with [`pasto_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use pasto::environment::{setting_a_with_sigma, setting_b, Environment, SimulatedEnv};
use pasto::harness::{csv_string, json_string, run_experiment, ExperimentConfig, HarnessError};
use pasto::{
    prob_oracle, single_best_oracle, CapPolicy, EpsilonSchedule, Guardrail, MetricMatrix,
    Objective, PastoConfig, Pmf, Trajectory,
};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ConfigError = 3,
    RuntimeError = 4,
    Panic = 5,
}

/// Smoothing schedule selector for [`PastoRunOptions`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastoEpsilonKind {
    /// `epsilon_a / sqrt(t)`.
    TheoryGt = 0,
    /// `epsilon_a / sqrt(t + param_b)`.
    PaperSim = 1,
    /// `epsilon_a`.
    Constant = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PastoFormat {
    Csv = 0,
    Json = 1,
}

/// Plain-data run settings. Start from [`pasto_run_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PastoRunOptions {
    pub horizon: usize,
    pub gamma: f64,
    pub epsilon_kind: PastoEpsilonKind,
    pub epsilon_a: f64,
    pub epsilon_b: f64,
    pub parallel_q: usize,
    pub prior_weight: f64,
    pub rng_seed: u64,
}

pub struct PastoObjective(Objective);

pub struct PastoEnvironment(Box<dyn Environment + Send>);

pub struct PastoResult {
    p_bar: Pmf,
    trajectory: Trajectory,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(PastoStatus, String);

impl From<pasto::Error> for Failure {
    fn from(e: pasto::Error) -> Self {
        Failure(PastoStatus::InvalidArgument, e.to_string())
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        let status = match e {
            HarnessError::Config(_) => PastoStatus::ConfigError,
            HarnessError::Io(_) | HarnessError::Runtime(_) => PastoStatus::RuntimeError,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PastoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PastoStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            PastoStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PastoStatus::NullPointer, format!("{what} is null"))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn matrix(data: *const f64, metrics: usize, arms: usize) -> Result<MetricMatrix, Failure> {
    if data.is_null() {
        return Err(null("matrix data"));
    }
    let len = metrics
        .checked_mul(arms)
        .ok_or_else(|| Failure(PastoStatus::InvalidArgument, "matrix size overflows".into()))?;
    let flat = std::slice::from_raw_parts(data, len);
    let rows = flat.chunks(arms.max(1)).map(<[f64]>::to_vec).collect();
    Ok(MetricMatrix::from_rows(rows)?)
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn pasto_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pasto_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn pasto_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Objective `z[primary]` with no guardrails.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn pasto_objective_new(
    primary: usize,
    out: *mut *mut PastoObjective,
) -> PastoStatus {
    guard(|| {
        put(
            out,
            Box::into_raw(Box::new(PastoObjective(Objective::linear(primary)))),
            "out",
        )
    })
}

unsafe fn add_guardrail(obj: *mut PastoObjective, g: Guardrail) -> Result<(), Failure> {
    let obj = deref_mut(obj, "objective")?;
    let mut list = obj.0.guardrails().to_vec();
    list.push(g);
    obj.0 = Objective::new(obj.0.primary(), list)?;
    Ok(())
}

/// Adds `-lambda * min(0, z[metric] - threshold)^2`.
///
/// # Safety
/// `obj` must be a live objective handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_objective_add_soft(
    obj: *mut PastoObjective,
    metric: usize,
    threshold: f64,
    lambda: f64,
) -> PastoStatus {
    guard(|| add_guardrail(obj, Guardrail::soft(metric, threshold, lambda)))
}

/// Adds a barrier that is `-inf` whenever `z[metric] < threshold`. Such
/// objectives work with the oracles but not with [`pasto_run`].
///
/// # Safety
/// `obj` must be a live objective handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_objective_add_hard(
    obj: *mut PastoObjective,
    metric: usize,
    threshold: f64,
) -> PastoStatus {
    guard(|| add_guardrail(obj, Guardrail::hard(metric, threshold)))
}

/// # Safety
/// `obj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pasto_objective_free(obj: *mut PastoObjective) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// Gaussian environment around a row-major `metrics x arms` mean matrix.
///
/// # Safety
/// `mu` must point to `metrics * arms` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasto_environment_new(
    mu: *const f64,
    metrics: usize,
    arms: usize,
    sigma: f64,
    seed: u64,
    out: *mut *mut PastoEnvironment,
) -> PastoStatus {
    guard(|| {
        let env = SimulatedEnv::new(matrix(mu, metrics, arms)?, sigma, seed)?;
        put(
            out,
            Box::into_raw(Box::new(PastoEnvironment(Box::new(env)))),
            "out",
        )
    })
}

/// The two-arm study environment and its objective.
///
/// # Safety
/// Both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasto_setting_a(
    noise_variance: f64,
    seed: u64,
    env_out: *mut *mut PastoEnvironment,
    obj_out: *mut *mut PastoObjective,
) -> PastoStatus {
    guard(|| {
        if env_out.is_null() || obj_out.is_null() {
            return Err(null("out"));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(Failure(
                PastoStatus::InvalidArgument,
                "noise_variance must be finite and >= 0".into(),
            ));
        }
        let (env, obj) = setting_a_with_sigma(noise_variance.sqrt(), seed);
        put(
            env_out,
            Box::into_raw(Box::new(PastoEnvironment(Box::new(env)))),
            "env_out",
        )?;
        put(
            obj_out,
            Box::into_raw(Box::new(PastoObjective(obj))),
            "obj_out",
        )
    })
}

/// A random `k`-arm, three-metric study instance and its objective.
///
/// # Safety
/// Both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasto_setting_b(
    k: usize,
    seed: u64,
    sigma: f64,
    env_out: *mut *mut PastoEnvironment,
    obj_out: *mut *mut PastoObjective,
) -> PastoStatus {
    guard(|| {
        if env_out.is_null() || obj_out.is_null() {
            return Err(null("out"));
        }
        let (env, obj) = setting_b(k, seed, sigma)?;
        put(
            env_out,
            Box::into_raw(Box::new(PastoEnvironment(Box::new(env)))),
            "env_out",
        )?;
        put(
            obj_out,
            Box::into_raw(Box::new(PastoObjective(obj))),
            "obj_out",
        )
    })
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_environment_num_arms(env: *const PastoEnvironment) -> usize {
    env.as_ref().map_or(0, |e| e.0.num_arms())
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `env` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_environment_num_metrics(env: *const PastoEnvironment) -> usize {
    env.as_ref().map_or(0, |e| e.0.num_metrics())
}

/// Copies the mean matrix (row-major, `metrics * arms` doubles) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasto_environment_ground_truth(
    env: *const PastoEnvironment,
    out: *mut f64,
    len: usize,
) -> PastoStatus {
    guard(|| {
        let env = deref(env, "environment")?;
        let mu = env
            .0
            .ground_truth(1)
            .ok_or_else(|| Failure(PastoStatus::RuntimeError, "no ground truth".into()))?;
        copy_out(mu.as_slice(), out, len)
    })
}

/// # Safety
/// `env` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pasto_environment_free(env: *mut PastoEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    if len != values.len() {
        return Err(Failure(
            PastoStatus::InvalidArgument,
            format!("buffer holds {len} values, need {}", values.len()),
        ));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, len);
    Ok(())
}

/// Study defaults for `arms` arms: `gamma = 0.1 / arms`, smoothing
/// `0.1 / sqrt(t + 10)`, one query per round.
#[no_mangle]
pub extern "C" fn pasto_run_options_default(
    arms: usize,
    horizon: usize,
    rng_seed: u64,
) -> PastoRunOptions {
    let c = PastoConfig::for_arms(arms, horizon, rng_seed);
    PastoRunOptions {
        horizon,
        gamma: c.gamma,
        epsilon_kind: PastoEpsilonKind::PaperSim,
        epsilon_a: 0.1,
        epsilon_b: 10.0,
        parallel_q: c.parallel_q,
        prior_weight: c.prior_weight,
        rng_seed,
    }
}

fn to_config(o: &PastoRunOptions) -> PastoConfig {
    let epsilon = match o.epsilon_kind {
        PastoEpsilonKind::TheoryGt => EpsilonSchedule::TheoryGt { g: o.epsilon_a },
        PastoEpsilonKind::PaperSim => EpsilonSchedule::PaperSim {
            a: o.epsilon_a,
            b: o.epsilon_b,
        },
        PastoEpsilonKind::Constant => EpsilonSchedule::Constant { eps: o.epsilon_a },
    };
    PastoConfig {
        horizon: o.horizon,
        gamma: o.gamma,
        epsilon,
        parallel_q: o.parallel_q,
        prior: None,
        prior_weight: o.prior_weight,
        cap: CapPolicy::Auto,
        rng_seed: o.rng_seed,
    }
}

/// Runs the optimizer, advancing the environment's noise stream.
///
/// # Safety
/// Handles must be live; `options` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn pasto_run(
    env: *mut PastoEnvironment,
    obj: *const PastoObjective,
    options: *const PastoRunOptions,
    out: *mut *mut PastoResult,
) -> PastoStatus {
    guard(|| {
        let env = deref_mut(env, "environment")?;
        let obj = deref(obj, "objective")?;
        let opts = deref(options, "options")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = to_config(opts);
        let (p_bar, trajectory) = pasto::pasto_run(&mut env.0, &obj.0, &cfg)?;
        put(
            out,
            Box::into_raw(Box::new(PastoResult { p_bar, trajectory })),
            "out",
        )
    })
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_result_num_arms(result: *const PastoResult) -> usize {
    result.as_ref().map_or(0, |r| r.p_bar.len())
}

/// Returns 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pasto_result_horizon(result: *const PastoResult) -> usize {
    result.as_ref().map_or(0, |r| r.trajectory.horizon())
}

/// Copies the averaged iterate into `out` (`len` must equal the arm count).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasto_result_p_bar(
    result: *const PastoResult,
    out: *mut f64,
    len: usize,
) -> PastoStatus {
    guard(|| copy_out(deref(result, "result")?.p_bar.probs(), out, len))
}

/// Copies the iterate `p_t` of round `t` (1-based) into `out`.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn pasto_result_iterate(
    result: *const PastoResult,
    t: usize,
    out: *mut f64,
    len: usize,
) -> PastoStatus {
    guard(|| {
        let r = deref(result, "result")?;
        let rec = t
            .checked_sub(1)
            .and_then(|i| r.trajectory.records.get(i))
            .ok_or_else(|| {
                Failure(
                    PastoStatus::InvalidArgument,
                    format!("round {t} out of range"),
                )
            })?;
        copy_out(rec.p.probs(), out, len)
    })
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pasto_result_free(result: *mut PastoResult) {
    if !result.is_null() {
        drop(Box::from_raw(result));
    }
}

/// Best single arm for a row-major mean matrix.
///
/// # Safety
/// `mu` must hold `metrics * arms` doubles; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasto_single_best_oracle(
    mu: *const f64,
    metrics: usize,
    arms: usize,
    obj: *const PastoObjective,
    arm_out: *mut usize,
    value_out: *mut f64,
) -> PastoStatus {
    guard(|| {
        let mu = matrix(mu, metrics, arms)?;
        let (arm, value) = single_best_oracle(&mu, &deref(obj, "objective")?.0)?;
        put(arm_out, arm, "arm_out")?;
        put(value_out, value, "value_out")
    })
}

/// Best pmf for a row-major mean matrix (differentiable objectives only).
///
/// # Safety
/// `mu` must hold `metrics * arms` doubles, `p_out` must hold `arms`.
#[no_mangle]
pub unsafe extern "C" fn pasto_prob_oracle(
    mu: *const f64,
    metrics: usize,
    arms: usize,
    obj: *const PastoObjective,
    iters: usize,
    p_out: *mut f64,
    value_out: *mut f64,
) -> PastoStatus {
    guard(|| {
        let mu = matrix(mu, metrics, arms)?;
        let (p, value) = prob_oracle(&mu, &deref(obj, "objective")?.0, iters)?;
        copy_out(p.probs(), p_out, arms)?;
        put(value_out, value, "value_out")
    })
}

/// Runs a full JSON experiment and returns the aggregated table as text.
/// The worker count follows `PASTO_THREADS`.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pasto_run_experiment_json(
    config_json: *const c_char,
    format: PastoFormat,
    out: *mut *mut c_char,
) -> PastoStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json).to_str().map_err(|e| {
            Failure(
                PastoStatus::ConfigError,
                format!("config is not UTF-8: {e}"),
            )
        })?;
        let cfg = ExperimentConfig::from_json_str(text, "config")?;
        let bundle = run_experiment(&cfg)?;
        let body = match format {
            PastoFormat::Csv => csv_string(&bundle),
            PastoFormat::Json => json_string(&bundle),
        };
        out.write(CString::new(body).expect("output has no NUL").into_raw());
        Ok(())
    })
}
