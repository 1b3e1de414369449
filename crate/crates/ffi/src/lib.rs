//! C interface: opaque handles for an environment and a learned model, integer
//! status codes, and a per-thread message for the last error.
//!
//! Every function returns an [`OpcraftStatus`]. Handles are created by
//! `opcraft_*_new`/`opcraft_learn` and released with the matching `_free`.
//! Strings are NUL-terminated UTF-8.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use opcraft::envs::{env_by_name, Environment};
use opcraft::harness::{artifacts, evaluate, gen_demos, gen_eval_tasks, train, HarnessError, Method, SamplerSource};
use opcraft::learner::LearnerConfig;
use opcraft::planner::PlannerConfig;
use opcraft::samplers::SamplerConfig;
use opcraft::symbolic::render_operator_set;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpcraftStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownEnv = 3,
    LearnFailed = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// A simulated environment.
pub struct OpcraftEnv {
    env: Arc<dyn Environment>,
}

/// Operators and samplers learned on one environment.
pub struct OpcraftModel {
    env: Arc<dyn Environment>,
    trained: opcraft::harness::Trained,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

type Result<T> = std::result::Result<T, (OpcraftStatus, String)>;

fn guard(f: impl FnOnce() -> Result<()>) -> OpcraftStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => OpcraftStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            OpcraftStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str> {
    if p.is_null() {
        return Err((OpcraftStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (OpcraftStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T> {
    p.as_ref()
        .ok_or((OpcraftStatus::NullPointer, format!("{what} is null")))
}

fn out_arg<T>(p: *mut T, what: &str) -> Result<()> {
    if p.is_null() {
        Err((OpcraftStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

fn harness_status(e: HarnessError) -> (OpcraftStatus, String) {
    let status = match e {
        HarnessError::Config(_) => OpcraftStatus::InvalidArgument,
        HarnessError::Io(_) => OpcraftStatus::Io,
        _ => OpcraftStatus::LearnFailed,
    };
    (status, e.to_string())
}

/// Copies `s` with its terminator into `buf`; `needed` always receives the
/// full size in bytes including the terminator.
unsafe fn write_string(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<()> {
    let c = CString::new(s).map_err(|_| (OpcraftStatus::InvalidArgument, "string contains NUL".to_string()))?;
    let bytes = c.as_bytes_with_nul();
    if !needed.is_null() {
        *needed = bytes.len();
    }
    if buf.is_null() || len < bytes.len() {
        return Err((OpcraftStatus::BufferTooSmall, format!("{} bytes needed", bytes.len())));
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, bytes.len());
    Ok(())
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn opcraft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `name` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn opcraft_env_new(name: *const c_char, out: *mut *mut OpcraftEnv) -> OpcraftStatus {
    guard(|| {
        out_arg(out, "out")?;
        let name = str_arg(name, "name")?;
        let env = env_by_name(name).map_err(|e| (OpcraftStatus::UnknownEnv, e.to_string()))?;
        *out = Box::into_raw(Box::new(OpcraftEnv { env }));
        Ok(())
    })
}

/// # Safety
/// `env` must come from `opcraft_env_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn opcraft_env_free(env: *mut OpcraftEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// Generates `num_demos` demonstrations for `seed` and learns operators and
/// samplers from them. `method` is `"ours"` or `"cluster_intersect"`.
///
/// # Safety
/// Pointers must be valid; `method` a C string.
#[no_mangle]
pub unsafe extern "C" fn opcraft_learn(
    env: *const OpcraftEnv,
    method: *const c_char,
    num_demos: usize,
    seed: u64,
    out: *mut *mut OpcraftModel,
) -> OpcraftStatus {
    guard(|| {
        out_arg(out, "out")?;
        let env = Arc::clone(&ref_arg(env, "env")?.env);
        let method: Method = str_arg(method, "method")?.parse().map_err(harness_status)?;
        if num_demos == 0 {
            return Err((OpcraftStatus::InvalidArgument, "num_demos must be positive".into()));
        }
        let demos = gen_demos(&*env, num_demos, seed).map_err(harness_status)?;
        let trained = train(
            &*env,
            method,
            &demos,
            &LearnerConfig::default(),
            &SamplerConfig::default(),
            seed,
        )
        .map_err(harness_status)?;
        *out = Box::into_raw(Box::new(OpcraftModel { env, trained }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from `opcraft_learn` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_free(model: *mut OpcraftModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_operator_count(model: *const OpcraftModel, out: *mut usize) -> OpcraftStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(model, "model")?.trained.model.ops.len();
        Ok(())
    })
}

/// Fraction of demonstrated transitions the operators explain, in [0, 1].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_coverage(model: *const OpcraftModel, out: *mut f64) -> OpcraftStatus {
    guard(|| {
        out_arg(out, "out")?;
        *out = ref_arg(model, "model")?.trained.model.coverage;
        Ok(())
    })
}

/// Writes the operators as text. Call with a null `buf` to learn the size.
///
/// # Safety
/// `buf` must hold `len` bytes or be null; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_operators_text(
    model: *const OpcraftModel,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> OpcraftStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let text = render_operator_set(model.trained.model.ops.iter().map(|o| &**o));
        write_string(&text, buf, len, needed)
    })
}

/// Plans `num_tasks` fresh evaluation tasks for `seed` and reports the
/// percentage solved.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_evaluate(
    model: *const OpcraftModel,
    num_tasks: usize,
    seed: u64,
    timeout_secs: f64,
    success_rate: *mut f64,
) -> OpcraftStatus {
    guard(|| {
        out_arg(success_rate, "success_rate")?;
        let model = ref_arg(model, "model")?;
        if timeout_secs.is_nan() || timeout_secs <= 0.0 {
            return Err((OpcraftStatus::InvalidArgument, "timeout must be positive".into()));
        }
        let planner = PlannerConfig {
            timeout_secs,
            ..Default::default()
        };
        let tasks = gen_eval_tasks(&*model.env, num_tasks, seed);
        let t = &model.trained;
        let outcomes = evaluate(
            &model.env,
            &tasks,
            &t.model.ops,
            &t.samplers,
            SamplerSource::Learned,
            &planner,
            seed,
        );
        let solved = outcomes.iter().filter(|o| o.solved).count();
        *success_rate = if outcomes.is_empty() {
            0.0
        } else {
            100.0 * solved as f64 / outcomes.len() as f64
        };
        Ok(())
    })
}

/// Saves operators, samplers and a learning summary into `dir`.
///
/// # Safety
/// Pointers must be valid; `dir` a C string.
#[no_mangle]
pub unsafe extern "C" fn opcraft_model_save(model: *const OpcraftModel, dir: *const c_char) -> OpcraftStatus {
    guard(|| {
        let model = ref_arg(model, "model")?;
        let dir = str_arg(dir, "dir")?;
        artifacts::save_trained(&*model.env, Path::new(dir), &model.trained)
            .map_err(|e| (OpcraftStatus::Io, e.to_string()))
    })
}
