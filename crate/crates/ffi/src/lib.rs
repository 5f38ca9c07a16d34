//! C ABI over the scheduling library.
//!
//! Every function returns an [`EsStatus`] code; on failure the message is
//! available from [`es_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_load` style functions and released with the
//! matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use edgesched::envsim::{app_costs, Assignment, EnvironmentSpec};
use edgesched::eval::{baseline_schedule, evaluate_policy, ghe, BaselineKind, EmissionMix};
use edgesched::nn::{read_checkpoint, ParameterSet};
use edgesched::runtime::{run_training, RunOptions, TrainingConfig};
use edgesched::workload::WorkloadTrace;
use edgesched::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Constraint = 4,
    LimitExceeded = 5,
    Numeric = 6,
    Io = 7,
    Checksum = 8,
    Internal = 99,
}

impl From<&Error> for EsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidDag(_)
            | Error::Reference(_)
            | Error::Precondition(_)
            | Error::Parameter(_)
            | Error::Shape(_)
            | Error::Domain(_)
            | Error::Validation(_)
            | Error::EmptyBuffer => EsStatus::InvalidArgument,
            Error::Json(_) | Error::Format(_) | Error::Csv(_) => EsStatus::Parse,
            Error::Constraint { .. } => EsStatus::Constraint,
            Error::LimitExceeded(_) => EsStatus::LimitExceeded,
            Error::Numeric { .. } => EsStatus::Numeric,
            Error::Io(_) | Error::TransportClosed => EsStatus::Io,
            Error::Checksum { .. } => EsStatus::Checksum,
        }
    }
}

/// Baseline scheduler selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsBaseline {
    Random = 0,
    Greedy = 1,
    Oracle = 2,
}

/// Application cost figures.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EsCosts {
    /// Seconds along the critical path.
    pub response_time: f64,
    /// Joules.
    pub energy: f64,
    /// Currency units.
    pub monetary: f64,
    /// Normalized weighted cost in [0, 1].
    pub weighted: f64,
}

/// Mean costs of a greedy pass over a workload.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EsEvaluation {
    pub costs: EsCosts,
    pub apps: usize,
    pub failures: usize,
}

/// Opaque server environment.
pub struct EsEnvironment(EnvironmentSpec);

/// Opaque set of DAG applications.
pub struct EsWorkload(WorkloadTrace);

/// Opaque trained policy with the config it was trained under.
pub struct EsPolicy {
    params: ParameterSet,
    config: TrainingConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, turning errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (EsStatus, String)>) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EsStatus::Internal
        }
    }
}

fn lib(e: Error) -> (EsStatus, String) {
    ((&e).into(), e.to_string())
}

fn null(what: &str) -> (EsStatus, String) {
    (EsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (EsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (EsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, (EsStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (EsStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

fn costs(c: &edgesched::envsim::CostBreakdown) -> EsCosts {
    EsCosts {
        response_time: c.response_time,
        energy: c.energy,
        monetary: c.monetary,
        weighted: c.weighted,
    }
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn es_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// The bundled three-server environment.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_environment_desk(out: *mut *mut EsEnvironment) -> EsStatus {
    guard(|| {
        *out_arg(out, "out")? = Box::into_raw(Box::new(EsEnvironment(EnvironmentSpec::desk())));
        Ok(())
    })
}

/// Parses an environment from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_environment_from_json(
    json: *const c_char,
    out: *mut *mut EsEnvironment,
) -> EsStatus {
    guard(|| {
        let env = EnvironmentSpec::from_json(str_arg(json, "json")?).map_err(lib)?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(EsEnvironment(env)));
        Ok(())
    })
}

/// # Safety
/// `env` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn es_environment_free(env: *mut EsEnvironment) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_environment_server_count(
    env: *const EsEnvironment,
    out: *mut usize,
) -> EsStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(env, "env")?.0.len();
        Ok(())
    })
}

/// The four preset applications at problem-size `label`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_workload_presets(label: u32, out: *mut *mut EsWorkload) -> EsStatus {
    guard(|| {
        if label == 0 {
            return Err((EsStatus::InvalidArgument, "label must be positive".into()));
        }
        *out_arg(out, "out")? = Box::into_raw(Box::new(EsWorkload(WorkloadTrace::presets(label))));
        Ok(())
    })
}

/// Parses a workload from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_workload_from_json(
    json: *const c_char,
    out: *mut *mut EsWorkload,
) -> EsStatus {
    guard(|| {
        let w = WorkloadTrace::from_json(str_arg(json, "json")?).map_err(lib)?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(EsWorkload(w)));
        Ok(())
    })
}

/// # Safety
/// `workload` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn es_workload_free(workload: *mut EsWorkload) {
    if !workload.is_null() {
        drop(Box::from_raw(workload));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_workload_app_count(
    workload: *const EsWorkload,
    out: *mut usize,
) -> EsStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(workload, "workload")?.0.apps.len();
        Ok(())
    })
}

/// Number of tasks of application `app`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_workload_task_count(
    workload: *const EsWorkload,
    app: usize,
    out: *mut usize,
) -> EsStatus {
    guard(|| {
        let w = &ref_arg(workload, "workload")?.0;
        let dag = w
            .apps
            .get(app)
            .ok_or_else(|| (EsStatus::InvalidArgument, format!("no application {app}")))?;
        *out_arg(out, "out")? = dag.len();
        Ok(())
    })
}

/// Costs of placing application `app` per `assignment` (one server index
/// per task).
///
/// # Safety
/// `assignment` must point to `len` values; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_app_costs(
    env: *const EsEnvironment,
    workload: *const EsWorkload,
    app: usize,
    assignment: *const usize,
    len: usize,
    out: *mut EsCosts,
) -> EsStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        let w = &ref_arg(workload, "workload")?.0;
        if assignment.is_null() {
            return Err(null("assignment"));
        }
        let dag = w
            .apps
            .get(app)
            .ok_or_else(|| (EsStatus::InvalidArgument, format!("no application {app}")))?;
        let a = Assignment(std::slice::from_raw_parts(assignment, len).to_vec());
        *out_arg(out, "out")? = costs(&app_costs(dag, &a, env).map_err(lib)?);
        Ok(())
    })
}

/// Schedules application `app` with a baseline. `assignment_out` receives
/// one server index per task and must hold `len` values.
///
/// # Safety
/// Pointers must be valid; `assignment_out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn es_baseline(
    env: *const EsEnvironment,
    workload: *const EsWorkload,
    app: usize,
    kind: EsBaseline,
    seed: u64,
    assignment_out: *mut usize,
    len: usize,
    out: *mut EsCosts,
) -> EsStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        let w = &ref_arg(workload, "workload")?.0;
        let dag = w
            .apps
            .get(app)
            .ok_or_else(|| (EsStatus::InvalidArgument, format!("no application {app}")))?;
        if assignment_out.is_null() {
            return Err(null("assignment_out"));
        }
        if len < dag.len() {
            return Err((
                EsStatus::InvalidArgument,
                format!("assignment buffer holds {len}, application has {} tasks", dag.len()),
            ));
        }
        let kind = match kind {
            EsBaseline::Random => BaselineKind::Random,
            EsBaseline::Greedy => BaselineKind::Greedy,
            EsBaseline::Oracle => BaselineKind::Oracle,
        };
        let r = baseline_schedule(kind, dag, env, seed).map_err(lib)?;
        *out_arg(out, "out")? = costs(&r.costs);
        std::slice::from_raw_parts_mut(assignment_out, dag.len()).copy_from_slice(&r.assignment);
        Ok(())
    })
}

unsafe fn config_arg(json: *const c_char) -> Result<TrainingConfig, (EsStatus, String)> {
    if json.is_null() {
        Ok(TrainingConfig::desk())
    } else {
        TrainingConfig::from_json(str_arg(json, "config_json")?).map_err(lib)
    }
}

/// Trains a policy. `config_json` may be null for the desk defaults;
/// `out_dir` may be null to skip writing files.
///
/// # Safety
/// Strings must be nul-terminated or null; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_train(
    env: *const EsEnvironment,
    workload: *const EsWorkload,
    config_json: *const c_char,
    out_dir: *const c_char,
    out: *mut *mut EsPolicy,
) -> EsStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        let w = &ref_arg(workload, "workload")?.0;
        let config = config_arg(config_json)?;
        let options = RunOptions {
            out_dir: if out_dir.is_null() {
                None
            } else {
                Some(PathBuf::from(str_arg(out_dir, "out_dir")?))
            },
            ..RunOptions::default()
        };
        let outcome = run_training(env, w, &config, &options).map_err(lib)?;
        let slot = out_arg(out, "out")?;
        *slot = Box::into_raw(Box::new(EsPolicy {
            params: outcome.params,
            config,
        }));
        Ok(())
    })
}

/// Loads a checkpoint written by training. `config_json` must describe the
/// same network; null means the desk defaults.
///
/// # Safety
/// Strings must be nul-terminated or null; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_policy_load(
    env: *const EsEnvironment,
    config_json: *const c_char,
    checkpoint_path: *const c_char,
    out: *mut *mut EsPolicy,
) -> EsStatus {
    guard(|| {
        let env = &ref_arg(env, "env")?.0;
        let config = config_arg(config_json)?;
        let network = config.network_for(env).map_err(lib)?;
        let ckpt = read_checkpoint(str_arg(checkpoint_path, "checkpoint_path")?).map_err(lib)?;
        let params = ckpt.into_params(&network).map_err(lib)?;
        *out_arg(out, "out")? = Box::into_raw(Box::new(EsPolicy { params, config }));
        Ok(())
    })
}

/// # Safety
/// `policy` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn es_policy_free(policy: *mut EsPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Parameter version of a policy.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_policy_version(policy: *const EsPolicy, out: *mut u64) -> EsStatus {
    guard(|| {
        *out_arg(out, "out")? = ref_arg(policy, "policy")?.params.version;
        Ok(())
    })
}

/// Greedy evaluation of `policy` over every application of `workload`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_policy_evaluate(
    policy: *const EsPolicy,
    env: *const EsEnvironment,
    workload: *const EsWorkload,
    out: *mut EsEvaluation,
) -> EsStatus {
    guard(|| {
        let p = ref_arg(policy, "policy")?;
        let env = &ref_arg(env, "env")?.0;
        let w = &ref_arg(workload, "workload")?.0;
        let e = evaluate_policy(&p.params, env, w, p.config.mdp).map_err(lib)?;
        *out_arg(out, "out")? = EsEvaluation {
            costs: EsCosts {
                response_time: e.response_time,
                energy: e.energy,
                monetary: e.monetary,
                weighted: e.weighted,
            },
            apps: e.apps,
            failures: e.failures,
        };
        Ok(())
    })
}

/// Emissions in kg CO2e for `energy_kwh` under a bundled mix (`"AU"`,
/// `"US"`, `"DE"`) or a mix given as JSON.
///
/// # Safety
/// `mix` must be nul-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn es_ghe(energy_kwh: f64, mix: *const c_char, out: *mut f64) -> EsStatus {
    guard(|| {
        let text = str_arg(mix, "mix")?;
        let m = if text.trim_start().starts_with('{') {
            EmissionMix::from_json(text)
        } else {
            EmissionMix::preset(text)
        }
        .map_err(lib)?;
        *out_arg(out, "out")? = ghe(energy_kwh, &m).map_err(lib)?;
        Ok(())
    })
}
