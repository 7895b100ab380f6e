use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use exodyn::anthropometry::Subject;
use exodyn::dynamics::{self, FrictionParams, JointState, ModelOptions, RobotModel};
use exodyn::kinematics::forward_kinematics;
use exodyn::neuralnet::mlp_init;
use exodyn::JointVector;
use exodyn_ffi::*;

const THETA: [f64; EXO_DOF] = [0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.05];
const THETA_DOT: [f64; EXO_DOF] = [0.5, -1.0, 0.3, 0.8, -0.2, 0.1, -0.6];
const THETA_DDOT: [f64; EXO_DOF] = [1.0, 0.2, -0.7, 0.4, 0.9, -1.1, 0.3];

struct Model(*mut ExoModel);

impl Model {
    fn new(height: f64, weight: f64) -> Self {
        let mut handle = ptr::null_mut();
        assert_eq!(unsafe { exo_model_new(height, weight, &mut handle) }, ExoStatus::Ok);
        assert!(!handle.is_null());
        Model(handle)
    }
}

impl Drop for Model {
    fn drop(&mut self) {
        unsafe { exo_model_free(self.0) }
    }
}

fn reference(height: f64, weight: f64) -> RobotModel {
    RobotModel::from_subject(&Subject::new(height, weight).unwrap(), &ModelOptions::default()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(exo_last_error_message()) }.to_str().unwrap().to_owned()
}

fn jv(a: &[f64; EXO_DOF]) -> JointVector {
    JointVector::from_column_slice(a)
}

#[test]
fn inverse_dynamics_matches_core() {
    let model = Model::new(66.0, 180.0);
    let mut tau = [0.0; EXO_DOF];
    let status = unsafe {
        exo_inverse_dynamics(model.0, THETA.as_ptr(), THETA_DOT.as_ptr(), THETA_DDOT.as_ptr(), tau.as_mut_ptr())
    };
    assert_eq!(status, ExoStatus::Ok);
    assert_eq!(last_error(), "");
    let expected = dynamics::inverse_dynamics(
        &JointState::new(jv(&THETA), jv(&THETA_DOT), jv(&THETA_DDOT)),
        &reference(66.0, 180.0),
    );
    assert_eq!(tau.as_slice(), expected.as_slice());
}

#[test]
fn decomposition_is_row_major_and_consistent() {
    let model = Model::new(62.0, 150.0);
    let (mut mass, mut coriolis, mut gravity) = ([0.0; EXO_DOF * EXO_DOF], [0.0; EXO_DOF], [0.0; EXO_DOF]);
    let status = unsafe {
        exo_decompose(
            model.0,
            THETA.as_ptr(),
            THETA_DOT.as_ptr(),
            mass.as_mut_ptr(),
            coriolis.as_mut_ptr(),
            gravity.as_mut_ptr(),
        )
    };
    assert_eq!(status, ExoStatus::Ok);
    let m = dynamics::mass_matrix(&jv(&THETA), &reference(62.0, 150.0));
    for r in 0..EXO_DOF {
        for c in 0..EXO_DOF {
            assert_eq!(mass[r * EXO_DOF + c], m[(r, c)]);
        }
    }
    // M·θ̈ + V + G reproduces the inverse dynamics.
    let mut tau = [0.0; EXO_DOF];
    unsafe { exo_inverse_dynamics(model.0, THETA.as_ptr(), THETA_DOT.as_ptr(), THETA_DDOT.as_ptr(), tau.as_mut_ptr()) };
    for r in 0..EXO_DOF {
        let row: f64 = (0..EXO_DOF).map(|c| mass[r * EXO_DOF + c] * THETA_DDOT[c]).sum();
        assert!((row + coriolis[r] + gravity[r] - tau[r]).abs() < 1e-9 * (1.0 + tau[r].abs()));
    }
}

#[test]
fn forward_dynamics_inverts_inverse_dynamics() {
    let model = Model::new(70.0, 220.0);
    let mut tau = [0.0; EXO_DOF];
    let mut acc = [0.0; EXO_DOF];
    unsafe {
        exo_inverse_dynamics(model.0, THETA.as_ptr(), THETA_DOT.as_ptr(), THETA_DDOT.as_ptr(), tau.as_mut_ptr());
        assert_eq!(
            exo_forward_dynamics(model.0, THETA.as_ptr(), THETA_DOT.as_ptr(), tau.as_ptr(), false, acc.as_mut_ptr()),
            ExoStatus::Ok
        );
    }
    for (a, b) in acc.iter().zip(THETA_DDOT) {
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }
}

#[test]
fn friction_and_kinematics_match_core() {
    let mut f = 0.0;
    assert_eq!(unsafe { exo_friction_torque(0.01, &mut f) }, ExoStatus::Ok);
    assert_eq!(f, dynamics::friction_torque(0.01, &FrictionParams::default()));

    let model = Model::new(66.0, 180.0);
    let mut pose = [0.0; 16];
    assert_eq!(unsafe { exo_forward_kinematics(model.0, THETA.as_ptr(), pose.as_mut_ptr()) }, ExoStatus::Ok);
    let expected = forward_kinematics(&jv(&THETA), &reference(66.0, 180.0)).composite.0;
    for r in 0..4 {
        for c in 0..4 {
            assert_eq!(pose[r * 4 + c], expected[(r, c)]);
        }
    }
    assert_eq!(&pose[12..], &[0.0, 0.0, 0.0, 1.0]);
}

#[test]
fn null_pointers_are_reported() {
    let mut tau = [0.0; EXO_DOF];
    let status = unsafe {
        exo_inverse_dynamics(ptr::null(), THETA.as_ptr(), THETA_DOT.as_ptr(), THETA_DDOT.as_ptr(), tau.as_mut_ptr())
    };
    assert_eq!(status, ExoStatus::NullPointer);
    assert_eq!(last_error(), "model is null");

    let model = Model::new(66.0, 180.0);
    let status =
        unsafe { exo_inverse_dynamics(model.0, THETA.as_ptr(), ptr::null(), THETA_DDOT.as_ptr(), tau.as_mut_ptr()) };
    assert_eq!(status, ExoStatus::NullPointer);
    assert!(last_error().contains("theta_dot"));

    assert_eq!(unsafe { exo_model_new(66.0, 180.0, ptr::null_mut()) }, ExoStatus::NullPointer);
    assert_eq!(unsafe { exo_mlp_input_width(ptr::null()) }, 0);
    unsafe {
        exo_model_free(ptr::null_mut());
        exo_mlp_free(ptr::null_mut());
    }
}

#[test]
fn invalid_arguments_are_reported() {
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { exo_model_new(-5.0, 180.0, &mut handle) }, ExoStatus::InvalidArgument);
    assert!(handle.is_null());
    assert!(!last_error().is_empty());

    let model = Model::new(66.0, 180.0);
    let mut bad = THETA;
    bad[2] = f64::NAN;
    let mut tau = [0.0; EXO_DOF];
    let status = unsafe {
        exo_inverse_dynamics(model.0, bad.as_ptr(), THETA_DOT.as_ptr(), THETA_DDOT.as_ptr(), tau.as_mut_ptr())
    };
    assert_eq!(status, ExoStatus::InvalidArgument);
    assert!(last_error().contains("non-finite"));

    // A successful call clears the message.
    let mut f = 0.0;
    unsafe { exo_friction_torque(1.0, &mut f) };
    assert_eq!(last_error(), "");
}

#[test]
fn mlp_round_trip_through_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.json");
    let net = mlp_init(7);
    net.save(&path).unwrap();

    let c_path = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { exo_mlp_load(c_path.as_ptr(), &mut handle) }, ExoStatus::Ok);
    assert_eq!(unsafe { exo_mlp_input_width(handle) }, net.input_width());
    assert_eq!(unsafe { exo_mlp_output_width(handle) }, net.output_width());

    let input: Vec<f64> = (0..net.input_width()).map(|i| (i as f64 * 0.37).sin()).collect();
    let mut output = vec![0.0; net.output_width()];
    let status = unsafe { exo_mlp_forward(handle, input.as_ptr(), input.len(), output.as_mut_ptr(), output.len()) };
    assert_eq!(status, ExoStatus::Ok);
    assert_eq!(output, net.forward(&input).unwrap());

    let status = unsafe { exo_mlp_forward(handle, input.as_ptr(), input.len() - 1, output.as_mut_ptr(), output.len()) };
    assert_eq!(status, ExoStatus::InvalidArgument);
    let status = unsafe { exo_mlp_forward(handle, input.as_ptr(), input.len(), output.as_mut_ptr(), 3) };
    assert_eq!(status, ExoStatus::InvalidArgument);
    unsafe { exo_mlp_free(handle) };

    let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { exo_mlp_load(missing.as_ptr(), &mut handle) }, ExoStatus::Io);
    std::fs::write(&path, "{ not json").unwrap();
    assert_eq!(unsafe { exo_mlp_load(c_path.as_ptr(), &mut handle) }, ExoStatus::Parse);
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(exo_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn header_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/exodyn.h")
}

#[test]
fn header_declares_public_api() {
    let header = std::fs::read_to_string(header_path()).unwrap();
    for name in [
        "#define EXO_DOF 7",
        "EXO_STATUS_OK = 0",
        "EXO_STATUS_NULL_POINTER",
        "typedef struct ExoModel ExoModel",
        "typedef struct ExoMlp ExoMlp",
        "exo_model_new(",
        "exo_model_free(",
        "exo_inverse_dynamics(",
        "exo_decompose(",
        "exo_forward_dynamics(",
        "exo_friction_torque(",
        "exo_forward_kinematics(",
        "exo_mlp_load(",
        "exo_mlp_forward(",
        "exo_mlp_free(",
        "exo_last_error_message(",
        "exo_version(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

const C_SMOKE: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "exodyn.h"

int main(void) {
    ExoModel *model = NULL;
    if (exo_model_new(66.0, 180.0, &model) != EXO_STATUS_OK) return 2;
    double th[EXO_DOF] = {0.3, -0.2, 0.5, 0.1, -0.4, 0.2, 0.05};
    double zero[EXO_DOF] = {0};
    double tau[EXO_DOF], acc[EXO_DOF];
    if (exo_inverse_dynamics(model, th, zero, zero, tau) != EXO_STATUS_OK) return 3;
    if (exo_forward_dynamics(model, th, zero, tau, false, acc) != EXO_STATUS_OK) return 4;
    for (int i = 0; i < EXO_DOF; i++)
        if (fabs(acc[i]) > 1e-8) return 5;
    if (exo_inverse_dynamics(NULL, th, zero, zero, tau) != EXO_STATUS_NULL_POINTER) return 6;
    if (strlen(exo_last_error_message()) == 0) return 7;
    exo_model_free(model);
    printf("%s %.12f\n", exo_version(), tau[0]);
    return 0;
}
"#;

/// Compiles a C program against the generated header and the static library.
/// Skipped when no C compiler is on PATH or the archive was not produced.
#[test]
fn c_program_links_against_static_library() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|deps| deps.parent()).unwrap();
    let archive = profile_dir.join("libexodyn_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping C link test: archive or compiler unavailable");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&src, C_SMOKE).unwrap();
    let build = Command::new("cc")
        .arg(&src)
        .arg("-I")
        .arg(header_path().parent().unwrap())
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(build.status.success(), "cc failed: {}", String::from_utf8_lossy(&build.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "smoke program exited with {:?}", run.status.code());

    let mut tau = [0.0; EXO_DOF];
    let model = Model::new(66.0, 180.0);
    let zero = [0.0; EXO_DOF];
    unsafe { exo_inverse_dynamics(model.0, THETA.as_ptr(), zero.as_ptr(), zero.as_ptr(), tau.as_mut_ptr()) };
    let expected = format!("{} {:.12}\n", env!("CARGO_PKG_VERSION"), tau[0]);
    assert_eq!(String::from_utf8(run.stdout).unwrap(), expected);
}
