//! C ABI over the exodyn core.
//!
//! Objects are opaque handles created by `*_new`/`*_load` and released by the
//! matching `*_free`. Every fallible call returns an [`ExoStatus`]; on failure
//! `exo_last_error_message` describes the most recent error on the calling
//! thread. Joint vectors are arrays of `EXO_DOF` doubles in radians, rad/s,
//! rad/s² and N·m; matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use exodyn::anthropometry::Subject;
use exodyn::dynamics::{self, FrictionParams, JointState, ModelOptions, RobotModel};
use exodyn::kinematics::forward_kinematics;
use exodyn::neuralnet::Mlp;
use exodyn::{Error, JointVector};

/// Number of joints in every joint vector.
pub const EXO_DOF: usize = 7;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExoStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// An argument was out of range or had the wrong size.
    InvalidArgument = 2,
    /// The computation failed numerically (e.g. singular mass matrix).
    Numerical = 3,
    /// A file could not be read.
    Io = 4,
    /// A file was read but its contents are malformed.
    Parse = 5,
    /// An internal error; the library state is unchanged.
    Internal = 6,
}

/// Dynamic model of one subject.
pub struct ExoModel {
    model: RobotModel,
}

/// Trained torque-prediction network.
pub struct ExoMlp {
    mlp: Mlp,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn status_of(err: &Error) -> ExoStatus {
    match err {
        Error::Domain(_) | Error::Shape { .. } | Error::Config(_) => ExoStatus::InvalidArgument,
        Error::Numerical(_) => ExoStatus::Numerical,
        Error::Io { .. } => ExoStatus::Io,
        Error::Parse { .. } | Error::Serde(_) => ExoStatus::Parse,
    }
}

struct Fail(ExoStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ExoStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ExoStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal error");
            ExoStatus::Internal
        }
    }
}

fn null(name: &str) -> Fail {
    Fail(ExoStatus::NullPointer, format!("{name} is null"))
}

unsafe fn joints(ptr: *const f64, name: &str) -> Result<JointVector, Fail> {
    if ptr.is_null() {
        return Err(null(name));
    }
    let v = JointVector::from_column_slice(std::slice::from_raw_parts(ptr, EXO_DOF));
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Fail(ExoStatus::InvalidArgument, format!("{name} contains non-finite values")))
    }
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, name: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn model_ref<'a>(model: *const ExoModel) -> Result<&'a RobotModel, Fail> {
    model.as_ref().map(|m| &m.model).ok_or_else(|| null("model"))
}

/// Builds the model of a subject of `height_in` inches and `weight_lb` pounds
/// with the default options. On success `*out` owns a new handle.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn exo_model_new(height_in: f64, weight_lb: f64, out: *mut *mut ExoModel) -> ExoStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let subject = Subject::new(height_in, weight_lb)?;
        let model = RobotModel::from_subject(&subject, &ModelOptions::default())?;
        *out = Box::into_raw(Box::new(ExoModel { model }));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle from `exo_model_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn exo_model_free(model: *mut ExoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Joint torques required for the given motion.
///
/// # Safety
/// Input arrays hold `EXO_DOF` doubles; `tau_out` has room for `EXO_DOF`.
#[no_mangle]
pub unsafe extern "C" fn exo_inverse_dynamics(
    model: *const ExoModel,
    theta: *const f64,
    theta_dot: *const f64,
    theta_ddot: *const f64,
    tau_out: *mut f64,
) -> ExoStatus {
    guard(|| {
        let m = model_ref(model)?;
        let state = JointState::new(
            joints(theta, "theta")?,
            joints(theta_dot, "theta_dot")?,
            joints(theta_ddot, "theta_ddot")?,
        );
        out_slice(tau_out, EXO_DOF, "tau_out")?.copy_from_slice(dynamics::inverse_dynamics(&state, m).as_slice());
        Ok(())
    })
}

/// Mass matrix (row-major, `EXO_DOF`²), Coriolis/centrifugal and gravity torques.
///
/// # Safety
/// Inputs hold `EXO_DOF` doubles; `mass_out` has room for `EXO_DOF * EXO_DOF`,
/// the other outputs for `EXO_DOF`.
#[no_mangle]
pub unsafe extern "C" fn exo_decompose(
    model: *const ExoModel,
    theta: *const f64,
    theta_dot: *const f64,
    mass_out: *mut f64,
    coriolis_out: *mut f64,
    gravity_out: *mut f64,
) -> ExoStatus {
    guard(|| {
        let m = model_ref(model)?;
        let terms = dynamics::decompose(&joints(theta, "theta")?, &joints(theta_dot, "theta_dot")?, m);
        let mass = out_slice(mass_out, EXO_DOF * EXO_DOF, "mass_out")?;
        for r in 0..EXO_DOF {
            for c in 0..EXO_DOF {
                mass[r * EXO_DOF + c] = terms.mass[(r, c)];
            }
        }
        out_slice(coriolis_out, EXO_DOF, "coriolis_out")?.copy_from_slice(terms.coriolis.as_slice());
        out_slice(gravity_out, EXO_DOF, "gravity_out")?.copy_from_slice(terms.gravity.as_slice());
        Ok(())
    })
}

/// Joint accelerations under applied torques; `friction` adds joint friction.
///
/// # Safety
/// Inputs hold `EXO_DOF` doubles; `accel_out` has room for `EXO_DOF`.
#[no_mangle]
pub unsafe extern "C" fn exo_forward_dynamics(
    model: *const ExoModel,
    theta: *const f64,
    theta_dot: *const f64,
    tau: *const f64,
    friction: bool,
    accel_out: *mut f64,
) -> ExoStatus {
    guard(|| {
        let m = model_ref(model)?;
        let acc = dynamics::forward_dynamics(
            &joints(theta, "theta")?,
            &joints(theta_dot, "theta_dot")?,
            &joints(tau, "tau")?,
            m,
            friction,
        )?;
        out_slice(accel_out, EXO_DOF, "accel_out")?.copy_from_slice(acc.as_slice());
        Ok(())
    })
}

/// Friction torque of one joint at `omega` rad/s with the default parameters.
///
/// # Safety
/// `out` must point to one writable double.
#[no_mangle]
pub unsafe extern "C" fn exo_friction_torque(omega: f64, out: *mut f64) -> ExoStatus {
    guard(|| {
        if !omega.is_finite() {
            return Err(Fail(ExoStatus::InvalidArgument, "omega must be finite".into()));
        }
        *out_slice(out, 1, "out")?.first_mut().unwrap() = dynamics::friction_torque(omega, &FrictionParams::default());
        Ok(())
    })
}

/// Homogeneous transform of the last joint frame in the base frame (row-major 4×4).
///
/// # Safety
/// `theta` holds `EXO_DOF` doubles; `pose_out` has room for 16.
#[no_mangle]
pub unsafe extern "C" fn exo_forward_kinematics(
    model: *const ExoModel,
    theta: *const f64,
    pose_out: *mut f64,
) -> ExoStatus {
    guard(|| {
        let m = model_ref(model)?;
        let pose = forward_kinematics(&joints(theta, "theta")?, m).composite.0;
        let out = out_slice(pose_out, 16, "pose_out")?;
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = pose[(r, c)];
            }
        }
        Ok(())
    })
}

/// Loads a network saved by the `train` command.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` valid storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn exo_mlp_load(path: *const c_char, out: *mut *mut ExoMlp) -> ExoStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Fail(ExoStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
        let mlp = Mlp::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(ExoMlp { mlp }));
        Ok(())
    })
}

/// Releases a network handle. Null is ignored.
///
/// # Safety
/// `mlp` must be null or a handle from `exo_mlp_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn exo_mlp_free(mlp: *mut ExoMlp) {
    if !mlp.is_null() {
        drop(Box::from_raw(mlp));
    }
}

/// Number of inputs the network expects (0 for a null handle).
///
/// # Safety
/// `mlp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn exo_mlp_input_width(mlp: *const ExoMlp) -> usize {
    mlp.as_ref().map_or(0, |m| m.mlp.input_width())
}

/// Number of outputs the network produces (0 for a null handle).
///
/// # Safety
/// `mlp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn exo_mlp_output_width(mlp: *const ExoMlp) -> usize {
    mlp.as_ref().map_or(0, |m| m.mlp.output_width())
}

/// Evaluates the network on one input row.
///
/// # Safety
/// `input` holds `input_len` doubles and `output` has room for `output_len`.
#[no_mangle]
pub unsafe extern "C" fn exo_mlp_forward(
    mlp: *const ExoMlp,
    input: *const f64,
    input_len: usize,
    output: *mut f64,
    output_len: usize,
) -> ExoStatus {
    guard(|| {
        let net = &mlp.as_ref().ok_or_else(|| null("mlp"))?.mlp;
        if input.is_null() {
            return Err(null("input"));
        }
        if output_len != net.output_width() {
            return Err(Fail(
                ExoStatus::InvalidArgument,
                format!("output_len is {output_len}, network produces {}", net.output_width()),
            ));
        }
        let y = net.forward(std::slice::from_raw_parts(input, input_len))?;
        out_slice(output, output_len, "output")?.copy_from_slice(&y);
        Ok(())
    })
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn exo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn exo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
