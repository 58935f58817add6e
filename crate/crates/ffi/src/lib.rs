//! C ABI over the simulator, the code-policy teacher, the feedback rule and
//! trained agents.
//!
//! Every fallible call returns a [`TutorStatus`]; on failure a message is
//! available from [`tutor_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.
//! Strings returned by the library are released with [`tutor_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use tutor::agent::{Checkpoint, PolicyModel, StateFeatures, FEATURE_DIM};
use tutor::codepolicy::{evaluate_policy, parse_program, scripted_program, CodePolicyProgram, StepCounter};
use tutor::feedback::{similar, FeedbackConfig};
use tutor::geom::Vec3;
use tutor::rng::Rng;
use tutor::sim::{GroundingView, Sim};
use tutor::types::{Action, EnvState, Gripper};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TutorStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    UnknownTask = 3,
    ParseError = 4,
    IoError = 5,
    DimensionMismatch = 6,
    PolicyError = 7,
    Panic = 99,
}

/// Simulator plus the current episode state.
pub struct TutorSim {
    sim: Sim,
    state: EnvState,
}

/// Teacher program with its episode-local step counter.
pub struct TutorPolicy {
    program: CodePolicyProgram,
    counter: StepCounter,
}

pub struct TutorModel {
    model: PolicyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

struct Fail(TutorStatus, String);

impl Fail {
    fn new(status: TutorStatus, msg: impl std::fmt::Display) -> Self {
        Fail(status, msg.to_string())
    }
}

/// Runs `f`, turning errors and panics into a status plus the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TutorStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TutorStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TutorStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail::new(TutorStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail::new(TutorStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail::new(TutorStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| Fail::new(TutorStatus::NullPointer, format!("{what} is null")))
}

unsafe fn vec3(p: *const f64, what: &str) -> Result<Vec3, Fail> {
    if p.is_null() {
        return Err(Fail::new(TutorStatus::NullPointer, format!("{what} is null")));
    }
    let s = std::slice::from_raw_parts(p, 3);
    Ok(Vec3::new(s[0], s[1], s[2]))
}

unsafe fn write_action(a: &Action, translation_out: *mut f64, close_out: *mut c_int) -> Result<(), Fail> {
    if translation_out.is_null() || close_out.is_null() {
        return Err(Fail::new(TutorStatus::NullPointer, "output pointer is null"));
    }
    let t = a.translation;
    std::slice::from_raw_parts_mut(translation_out, 3).copy_from_slice(&[t.x, t.y, t.z]);
    *close_out = a.gripper.is_close() as c_int;
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library from this thread.
#[no_mangle]
pub extern "C" fn tutor_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Length of the agent feature vector.
#[no_mangle]
pub extern "C" fn tutor_feature_dim() -> usize {
    FEATURE_DIM
}

/// Creates a simulator for a built-in task, reset with `seed`.
///
/// # Safety
/// `task` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_new(task: *const c_char, seed: u64, out: *mut *mut TutorSim) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let name = cstr(task, "task")?;
        let sim = Sim::builtin(name).map_err(|e| Fail::new(TutorStatus::UnknownTask, e))?;
        let state = sim.reset(&mut Rng::from_seed(seed)).map_err(|e| Fail::new(TutorStatus::InvalidArgument, e))?;
        *out = Box::into_raw(Box::new(TutorSim { sim, state }));
        Ok(())
    })
}

/// Starts a new episode.
///
/// # Safety
/// `sim` must come from [`tutor_sim_new`].
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_reset(sim: *mut TutorSim, seed: u64) -> TutorStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        s.state = s.sim.reset(&mut Rng::from_seed(seed)).map_err(|e| Fail::new(TutorStatus::InvalidArgument, e))?;
        Ok(())
    })
}

/// Applies one action; `success_out` receives 1 when the task is solved.
///
/// # Safety
/// `translation` points to 3 doubles; `success_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_step(
    sim: *mut TutorSim,
    translation: *const f64,
    close: c_int,
    success_out: *mut c_int,
) -> TutorStatus {
    guard(|| {
        let s = deref_mut(sim, "sim")?;
        let action = Action::new(vec3(translation, "translation")?, Gripper::from_closed(close != 0));
        if !action.is_finite() {
            return Err(Fail::new(TutorStatus::InvalidArgument, "translation is not finite"));
        }
        s.state = s.sim.step(&s.state, &action);
        let ok = s.sim.is_success(&s.state).map_err(|e| Fail::new(TutorStatus::InvalidArgument, e))?;
        if let Some(o) = success_out.as_mut() {
            *o = ok as c_int;
        }
        Ok(())
    })
}

/// Writes the agent features of the current state into `out[0..len]`;
/// `len` must equal [`tutor_feature_dim`].
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_features(sim: *const TutorSim, out: *mut f64, len: usize) -> TutorStatus {
    guard(|| {
        let s = deref(sim, "sim")?;
        if out.is_null() {
            return Err(Fail::new(TutorStatus::NullPointer, "out is null"));
        }
        if len != FEATURE_DIM {
            return Err(Fail::new(TutorStatus::DimensionMismatch, format!("expected {FEATURE_DIM} features, got {len}")));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(StateFeatures::encode(&s.state).as_slice());
        Ok(())
    })
}

/// Current state as JSON; release with [`tutor_string_free`].
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_state_json(sim: *const TutorSim, out: *mut *mut c_char) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let s = deref(sim, "sim")?;
        let json = serde_json::to_string(&s.state).map_err(|e| Fail::new(TutorStatus::InvalidArgument, e))?;
        *out = CString::new(json).expect("JSON has no NUL").into_raw();
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`tutor_sim_new`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tutor_sim_free(sim: *mut TutorSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// The hand-authored teacher for a built-in task.
///
/// # Safety
/// `task` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_policy_scripted(task: *const c_char, out: *mut *mut TutorPolicy) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let name = cstr(task, "task")?;
        let spec = tutor::sim::find_task(name).map_err(|e| Fail::new(TutorStatus::UnknownTask, e))?;
        let program = scripted_program(&spec).map_err(|e| Fail::new(TutorStatus::PolicyError, e))?;
        *out = Box::into_raw(Box::new(TutorPolicy { program, counter: StepCounter::default() }));
        Ok(())
    })
}

/// Parses a program in the JSON policy language and checks it against `task`.
///
/// # Safety
/// `json` and `task` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_policy_from_json(
    json: *const c_char,
    task: *const c_char,
    out: *mut *mut TutorPolicy,
) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let text = cstr(json, "json")?;
        let name = cstr(task, "task")?;
        let spec = tutor::sim::find_task(name).map_err(|e| Fail::new(TutorStatus::UnknownTask, e))?;
        let program = parse_program(text).map_err(|e| Fail::new(TutorStatus::ParseError, e))?;
        program.validate_for(&spec).map_err(|e| Fail::new(TutorStatus::PolicyError, e))?;
        *out = Box::into_raw(Box::new(TutorPolicy { program, counter: StepCounter::default() }));
        Ok(())
    })
}

/// Rewinds the plan to its first step.
///
/// # Safety
/// `policy` must come from a `tutor_policy_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn tutor_policy_reset(policy: *mut TutorPolicy) -> TutorStatus {
    guard(|| {
        deref_mut(policy, "policy")?.counter = StepCounter::default();
        Ok(())
    })
}

/// The teacher's action for the simulator's current state; advances the plan.
///
/// # Safety
/// Handles must be live; `translation_out` holds 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn tutor_policy_act(
    policy: *mut TutorPolicy,
    sim: *const TutorSim,
    translation_out: *mut f64,
    close_out: *mut c_int,
) -> TutorStatus {
    guard(|| {
        let p = deref_mut(policy, "policy")?;
        let s = deref(sim, "sim")?;
        let view = GroundingView::new(&s.state, p.counter.current);
        let (action, next) = evaluate_policy(&p.program, &view, p.counter, s.sim.workspace.max_step)
            .map_err(|e| Fail::new(TutorStatus::PolicyError, e))?;
        write_action(&action, translation_out, close_out)?;
        p.counter = next;
        Ok(())
    })
}

/// # Safety
/// `policy` must come from a `tutor_policy_*` constructor or be null.
#[no_mangle]
pub unsafe extern "C" fn tutor_policy_free(policy: *mut TutorPolicy) {
    if !policy.is_null() {
        drop(Box::from_raw(policy));
    }
}

/// Whether the agent's action would earn evaluative feedback at threshold
/// `beta_deg`.
///
/// # Safety
/// `a` and `b` each point to 3 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_similar(
    a: *const f64,
    a_close: c_int,
    b: *const f64,
    b_close: c_int,
    beta_deg: f64,
    out: *mut c_int,
) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        let cfg = FeedbackConfig { beta: beta_deg, ..Default::default() };
        cfg.validate().map_err(|e| Fail::new(TutorStatus::InvalidArgument, e))?;
        let agent = Action::new(vec3(a, "a")?, Gripper::from_closed(a_close != 0));
        let teacher = Action::new(vec3(b, "b")?, Gripper::from_closed(b_close != 0));
        if !agent.is_finite() || !teacher.is_finite() {
            return Err(Fail::new(TutorStatus::InvalidArgument, "translation is not finite"));
        }
        *out = similar(&agent, &teacher, &cfg) as c_int;
        Ok(())
    })
}

/// Loads an agent checkpoint written by `tutor train`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tutor_model_load(path: *const c_char, out: *mut *mut TutorModel) -> TutorStatus {
    guard(|| {
        let out = deref_mut(out, "out")?;
        *out = ptr::null_mut();
        let p = cstr(path, "path")?;
        let ckpt = Checkpoint::load(Path::new(p)).map_err(|e| match e {
            tutor::agent::AgentError::Io(_) => Fail::new(TutorStatus::IoError, e),
            other => Fail::new(TutorStatus::ParseError, other),
        })?;
        let model = ckpt.into_model().map_err(|e| Fail::new(TutorStatus::DimensionMismatch, e))?;
        *out = Box::into_raw(Box::new(TutorModel { model }));
        Ok(())
    })
}

/// Mean action of the agent for a feature vector of length
/// [`tutor_feature_dim`], clipped to the default per-step limit.
///
/// # Safety
/// `features` holds `len` doubles; `translation_out` holds 3.
#[no_mangle]
pub unsafe extern "C" fn tutor_model_act(
    model: *const TutorModel,
    features: *const f64,
    len: usize,
    translation_out: *mut f64,
    close_out: *mut c_int,
) -> TutorStatus {
    guard(|| {
        let m = deref(model, "model")?;
        if features.is_null() {
            return Err(Fail::new(TutorStatus::NullPointer, "features is null"));
        }
        let f = std::slice::from_raw_parts(features, len);
        let max_step = tutor::sim::Workspace::default().max_step;
        let action = m.model.mean_action(f, max_step).map_err(|e| Fail::new(TutorStatus::DimensionMismatch, e))?;
        write_action(&action, translation_out, close_out)
    })
}

/// # Safety
/// `model` must come from [`tutor_model_load`] or be null.
#[no_mangle]
pub unsafe extern "C" fn tutor_model_free(model: *mut TutorModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `s` must be a string returned by this library, or null.
#[no_mangle]
pub unsafe extern "C" fn tutor_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
