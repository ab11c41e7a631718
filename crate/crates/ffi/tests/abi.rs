use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use aflow_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(aflow_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn flow_round_trip_through_handles() {
    let mut flow: *mut AflowFlow = ptr::null_mut();
    unsafe {
        assert_eq!(aflow_flow_random(4, 3, 8, 0.3, 7, &mut flow), AflowStatus::Ok);
        assert_eq!(aflow_flow_dim(flow), 4);
        let x = [0.3, -1.2, 0.8, 2.0];
        let mut z = [0.0; 4];
        let mut log_det = 0.0;
        assert_eq!(aflow_flow_encode(flow, x.as_ptr(), 4, z.as_mut_ptr(), &mut log_det), AflowStatus::Ok);
        let mut back = [0.0; 4];
        assert_eq!(aflow_flow_decode(flow, z.as_ptr(), 4, back.as_mut_ptr()), AflowStatus::Ok);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-10);
        }
        let mut lp = 0.0;
        assert_eq!(aflow_flow_log_prob(flow, x.as_ptr(), 4, &mut lp), AflowStatus::Ok);
        let expected = -0.5 * z.iter().map(|v| v * v).sum::<f64>() - 2.0 * (2.0 * std::f64::consts::PI).ln() + log_det;
        assert!((lp - expected).abs() < 1e-10);
        aflow_flow_free(flow);
    }
}

#[test]
fn identity_flow_density_at_origin() {
    let mut flow: *mut AflowFlow = ptr::null_mut();
    unsafe {
        assert_eq!(aflow_flow_identity(2, 2, 4, 0, &mut flow), AflowStatus::Ok);
        let mut lp = 0.0;
        assert_eq!(aflow_flow_log_prob(flow, [0.0, 0.0].as_ptr(), 2, &mut lp), AflowStatus::Ok);
        assert!((lp + (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        aflow_flow_free(flow);
    }
}

#[test]
fn errors_set_codes_and_messages() {
    unsafe {
        let mut flow: *mut AflowFlow = ptr::null_mut();
        assert_eq!(aflow_flow_identity(3, 2, 4, 0, &mut flow), AflowStatus::Ok);
        assert!(last_error().is_empty());
        let mut z = [0.0; 2];
        let status = aflow_flow_encode(flow, [0.0, 0.0].as_ptr(), 2, z.as_mut_ptr(), ptr::null_mut());
        assert_eq!(status, AflowStatus::InvalidArgument);
        assert!(last_error().contains("dimension"));
        assert_eq!(
            aflow_flow_encode(ptr::null(), [0.0].as_ptr(), 1, z.as_mut_ptr(), ptr::null_mut()),
            AflowStatus::NullPointer
        );
        let missing = CString::new("/nonexistent/flow.json").unwrap();
        let mut other: *mut AflowFlow = ptr::null_mut();
        assert_eq!(aflow_flow_load(missing.as_ptr(), &mut other), AflowStatus::Io);
        assert!(other.is_null());
        aflow_flow_free(flow);
        aflow_flow_free(ptr::null_mut());
    }
}

#[test]
fn checkpoints_round_trip_via_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("clf.json").to_str().unwrap()).unwrap();
    unsafe {
        let mut clf: *mut AflowClassifier = ptr::null_mut();
        let hidden = [5usize];
        assert_eq!(aflow_classifier_random(3, hidden.as_ptr(), 1, 2, 11, &mut clf), AflowStatus::Ok);
        assert_eq!(aflow_classifier_save(clf, path.as_ptr()), AflowStatus::Ok);
        let mut loaded: *mut AflowClassifier = ptr::null_mut();
        assert_eq!(aflow_classifier_load(path.as_ptr(), &mut loaded), AflowStatus::Ok);
        let x = [0.1, 0.5, 0.9];
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        assert_eq!(aflow_classifier_logits(clf, x.as_ptr(), 3, a.as_mut_ptr(), 2), AflowStatus::Ok);
        assert_eq!(aflow_classifier_logits(loaded, x.as_ptr(), 3, b.as_mut_ptr(), 2), AflowStatus::Ok);
        assert_eq!(a, b);
        let flow_path = CString::new(dir.path().join("flow.json").to_str().unwrap()).unwrap();
        let mut flow: *mut AflowFlow = ptr::null_mut();
        assert_eq!(aflow_flow_load(path.as_ptr(), &mut flow), AflowStatus::Incompatible);
        assert_eq!(aflow_flow_random(3, 2, 4, 0.2, 1, &mut flow), AflowStatus::Ok);
        assert_eq!(aflow_flow_save(flow, flow_path.as_ptr()), AflowStatus::Ok);
        aflow_flow_free(flow);
        aflow_classifier_free(clf);
        aflow_classifier_free(loaded);
    }
}

#[test]
fn attacks_respect_the_budget() {
    unsafe {
        let mut clf: *mut AflowClassifier = ptr::null_mut();
        assert_eq!(aflow_classifier_random(4, ptr::null(), 0, 2, 3, &mut clf), AflowStatus::Ok);
        let mut flow: *mut AflowFlow = ptr::null_mut();
        assert_eq!(aflow_flow_identity(4, 2, 4, 0, &mut flow), AflowStatus::Ok);
        let x = [0.2, 0.4, 0.6, 0.8];
        let mut logits = [0.0; 2];
        aflow_classifier_logits(clf, x.as_ptr(), 4, logits.as_mut_ptr(), 2);
        let label = if logits[0] >= logits[1] { 0 } else { 1 };
        let eps = 4.0 / 255.0;
        let mut adv = [0.0; 4];
        let mut outcome = AflowAttackOutcome::default();
        let params = AflowAttackParams {
            epsilon: eps,
            max_queries: 50,
            lr: 0.01,
            kappa: 0.0,
            target: -1,
        };
        assert_eq!(
            aflow_attack(flow, clf, x.as_ptr(), 4, label, &params, adv.as_mut_ptr(), &mut outcome),
            AflowStatus::Ok
        );
        assert!(outcome.iterations_used <= 50);
        assert!(outcome.achieved_linf <= eps + 1e-9);
        assert_eq!(
            aflow_fgsm(clf, x.as_ptr(), 4, label, eps, -1, adv.as_mut_ptr(), &mut outcome),
            AflowStatus::Ok
        );
        assert!(outcome.achieved_linf <= eps + 1e-9);
        assert_eq!(
            aflow_fgsm(clf, x.as_ptr(), 4, 1 - label, eps, -1, adv.as_mut_ptr(), &mut outcome),
            AflowStatus::RejectedInput
        );
        aflow_flow_free(flow);
        aflow_classifier_free(clf);
    }
}

#[test]
fn metrics_of_identical_images() {
    let img: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
    let mut m = AflowMetrics::default();
    unsafe {
        assert_eq!(aflow_metrics(img.as_ptr(), img.as_ptr(), 4, 4, &mut m), AflowStatus::Ok);
        assert_eq!(aflow_metrics(img.as_ptr(), ptr::null(), 4, 4, &mut m), AflowStatus::NullPointer);
    }
    assert_eq!((m.ssim, m.uqi, m.scc, m.l2), (1.0, 1.0, 1.0, 0.0));
    assert!(m.psnr_db.is_infinite());
}

fn header() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("include").join("aflow.h")
}

#[test]
fn header_declares_the_api() {
    let text = std::fs::read_to_string(header()).unwrap();
    for name in [
        "aflow_last_error",
        "aflow_flow_load",
        "aflow_flow_encode",
        "aflow_flow_decode",
        "aflow_flow_log_prob",
        "aflow_flow_free",
        "aflow_classifier_load",
        "aflow_classifier_logits",
        "aflow_classifier_free",
        "aflow_attack",
        "aflow_fgsm",
        "aflow_metrics",
        "typedef struct AflowFlow AflowFlow",
        "AFLOW_STATUS_OK = 0",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
}

/// Compile and run a C program against the header and the static library.
#[test]
fn c_program_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let target_dir = Path::new(env!("CARGO_TARGET_TMPDIR")).parent().unwrap().to_path_buf();
    let profile_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(Path::parent)
        .unwrap()
        .to_path_buf();
    let lib = [profile_dir.join("libaflow_ffi.a"), target_dir.join("debug").join("libaflow_ffi.a")]
        .into_iter()
        .find(|p| p.exists());
    let Some(lib) = lib else {
        eprintln!("static library not built, skipping");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(
        &src,
        r#"
#include <stdio.h>
#include "aflow.h"
int main(void) {
    AflowFlow *flow = NULL;
    if (aflow_flow_identity(2, 2, 4, 0, &flow) != AFLOW_STATUS_OK) return 1;
    double x[2] = {0.0, 0.0};
    double lp = 0.0;
    if (aflow_flow_log_prob(flow, x, 2, &lp) != AFLOW_STATUS_OK) return 2;
    if (aflow_flow_log_prob(flow, x, 3, &lp) != AFLOW_STATUS_INVALID_ARGUMENT) return 3;
    printf("%.12f %s\n", lp, aflow_last_error());
    aflow_flow_free(flow);
    return 0;
}
"#,
    )
    .unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited with {:?}", out.status);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("-1.837877066409"), "{text}");
}

fn which_cc() -> Result<PathBuf, ()> {
    for cand in ["cc", "gcc", "clang"] {
        if Command::new(cand).arg("--version").output().is_ok() {
            return Ok(PathBuf::from(cand));
        }
    }
    Err(())
}
