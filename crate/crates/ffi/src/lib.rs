//! C ABI for loading models, running attacks and computing image metrics.
//!
//! Every fallible function returns an [`AflowStatus`]; on failure the message
//! is available from [`aflow_last_error`]. Models are opaque handles created by
//! the `*_load` / `*_identity` / `*_random` functions and released with the
//! matching `*_free`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use aflow::attack::{fgsm_attack, AttackConfig, Goal};
use aflow::autodiff::Tensor;
use aflow::classifier::ClassifierModel;
use aflow::flow::{FlowModel, LatentVector, PreprocessSpec};
use aflow::harness::{load_classifier, load_flow, save_classifier, save_flow};
use aflow::metrics::{evaluate, ImagePair};
use aflow::{seed, Error};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AflowStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Contract = 3,
    Domain = 4,
    Divergence = 5,
    Optimization = 6,
    RejectedInput = 7,
    Factorization = 8,
    DegenerateEstimate = 9,
    Parse = 10,
    Validation = 11,
    Incompatible = 12,
    Invariant = 13,
    Io = 14,
    Panic = 15,
}

/// Opaque normalizing-flow handle.
pub struct AflowFlow(FlowModel);

/// Opaque classifier handle.
pub struct AflowClassifier(ClassifierModel);

/// Settings of an attack call. `target < 0` selects the untargeted goal.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AflowAttackParams {
    /// L-infinity budget in pixel units (`1.0 / 255.0` for one gray level).
    pub epsilon: f64,
    pub max_queries: usize,
    pub lr: f64,
    pub kappa: f64,
    pub target: i64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct AflowAttackOutcome {
    pub success: bool,
    pub iterations_used: usize,
    pub achieved_linf: f64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct AflowMetrics {
    pub ssim: f64,
    /// `INFINITY` for identical images.
    pub psnr_db: f64,
    pub l2: f64,
    pub uqi: f64,
    pub scc: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> AflowStatus {
    match e {
        Error::Contract(_) => AflowStatus::Contract,
        Error::Domain(_) => AflowStatus::Domain,
        Error::Divergence { .. } => AflowStatus::Divergence,
        Error::Optimization { .. } => AflowStatus::Optimization,
        Error::RejectedInput(_) => AflowStatus::RejectedInput,
        Error::Factorization(_) => AflowStatus::Factorization,
        Error::DegenerateEstimate(_) => AflowStatus::DegenerateEstimate,
        Error::Parse { .. } => AflowStatus::Parse,
        Error::Validation(_) => AflowStatus::Validation,
        Error::Incompatible(_) => AflowStatus::Incompatible,
        Error::Invariant { .. } => AflowStatus::Invariant,
        Error::Io { .. } => AflowStatus::Io,
    }
}

struct Fail(AflowStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AflowStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Fail {
    Fail(AflowStatus::InvalidArgument, msg.into())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AflowStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            AflowStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(_) => {
            set_last_error("internal panic");
            AflowStatus::Panic
        }
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn path<'a>(ptr: *const c_char) -> Result<&'a Path, Fail> {
    if ptr.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| invalid("path is not valid UTF-8"))?;
    Ok(Path::new(s))
}

unsafe fn flow_ref<'a>(flow: *const AflowFlow) -> Result<&'a FlowModel, Fail> {
    flow.as_ref().map(|f| &f.0).ok_or_else(|| null("flow"))
}

unsafe fn classifier_ref<'a>(clf: *const AflowClassifier) -> Result<&'a ClassifierModel, Fail> {
    clf.as_ref().map(|c| &c.0).ok_or_else(|| null("classifier"))
}

fn tensor(data: &[f64]) -> Result<Tensor, Fail> {
    Ok(Tensor::new(vec![data.len()], data.to_vec())?)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn aflow_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn aflow_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_load(path_ptr: *const c_char, out: *mut *mut AflowFlow) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_flow(path(path_ptr)?)?;
        *out = Box::into_raw(Box::new(AflowFlow(model)));
        Ok(())
    })
}

/// Identity-initialized flow with alternating masks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_identity(
    dim: usize,
    layers: usize,
    hidden: usize,
    seed_value: u64,
    out: *mut *mut AflowFlow,
) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 || hidden == 0 {
            return Err(invalid("dim and hidden must be positive"));
        }
        let model = FlowModel::identity(dim, layers, hidden, &mut seed::rng(seed_value))?;
        *out = Box::into_raw(Box::new(AflowFlow(model)));
        Ok(())
    })
}

/// Flow whose output heads are uniform in `[-limit, limit]`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_random(
    dim: usize,
    layers: usize,
    hidden: usize,
    limit: f64,
    seed_value: u64,
    out: *mut *mut AflowFlow,
) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 || hidden == 0 || !(limit >= 0.0) {
            return Err(invalid("dim and hidden must be positive, limit >= 0"));
        }
        let model = FlowModel::random(dim, layers, hidden, limit, &mut seed::rng(seed_value))?;
        *out = Box::into_raw(Box::new(AflowFlow(model)));
        Ok(())
    })
}

/// # Safety
/// `flow` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_save(flow: *const AflowFlow, path_ptr: *const c_char) -> AflowStatus {
    guard(|| Ok(save_flow(flow_ref(flow)?, path(path_ptr)?)?))
}

/// # Safety
/// `flow` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_free(flow: *mut AflowFlow) {
    if !flow.is_null() {
        drop(Box::from_raw(flow));
    }
}

/// Input dimension, or 0 for a null handle.
///
/// # Safety
/// `flow` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_dim(flow: *const AflowFlow) -> usize {
    flow.as_ref().map_or(0, |f| f.0.dim())
}

/// Map `x` (length `dim`) to its latent `z_out` and write `log|det dz/dx|`.
///
/// # Safety
/// Buffers must hold `dim` values; `log_det_out` may be null.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_encode(
    flow: *const AflowFlow,
    x: *const f64,
    dim: usize,
    z_out: *mut f64,
    log_det_out: *mut f64,
) -> AflowStatus {
    guard(|| {
        let flow = flow_ref(flow)?;
        if dim != flow.dim() {
            return Err(invalid(format!("dim {dim} does not match flow dimension {}", flow.dim())));
        }
        let (z, log_det) = flow.encode(&tensor(slice(x, dim, "x")?)?)?;
        slice_mut(z_out, dim, "z_out")?.copy_from_slice(z.values());
        if let Some(out) = log_det_out.as_mut() {
            *out = log_det;
        }
        Ok(())
    })
}

/// # Safety
/// Buffers must hold `dim` values.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_decode(
    flow: *const AflowFlow,
    z: *const f64,
    dim: usize,
    x_out: *mut f64,
) -> AflowStatus {
    guard(|| {
        let flow = flow_ref(flow)?;
        if dim != flow.dim() {
            return Err(invalid(format!("dim {dim} does not match flow dimension {}", flow.dim())));
        }
        let latent = LatentVector::new(slice(z, dim, "z")?.to_vec())?;
        slice_mut(x_out, dim, "x_out")?.copy_from_slice(flow.decode(&latent)?.data());
        Ok(())
    })
}

/// # Safety
/// `x` must hold `dim` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_flow_log_prob(
    flow: *const AflowFlow,
    x: *const f64,
    dim: usize,
    out: *mut f64,
) -> AflowStatus {
    guard(|| {
        let flow = flow_ref(flow)?;
        if dim != flow.dim() {
            return Err(invalid(format!("dim {dim} does not match flow dimension {}", flow.dim())));
        }
        let v = flow.log_prob(&tensor(slice(x, dim, "x")?)?)?;
        *out.as_mut().ok_or_else(|| null("out"))? = v;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_load(
    path_ptr: *const c_char,
    out: *mut *mut AflowClassifier,
) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_classifier(path(path_ptr)?)?;
        *out = Box::into_raw(Box::new(AflowClassifier(model)));
        Ok(())
    })
}

/// Glorot-initialized classifier `dim -> hidden[0] -> ... -> classes`.
///
/// # Safety
/// `hidden` must hold `hidden_len` values (or be null when `hidden_len == 0`); `out` valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_random(
    dim: usize,
    hidden: *const usize,
    hidden_len: usize,
    classes: usize,
    seed_value: u64,
    out: *mut *mut AflowClassifier,
) -> AflowStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let widths: &[usize] = if hidden_len == 0 {
            &[]
        } else if hidden.is_null() {
            return Err(null("hidden"));
        } else {
            std::slice::from_raw_parts(hidden, hidden_len)
        };
        if dim == 0 || widths.contains(&0) {
            return Err(invalid("layer widths must be positive"));
        }
        let model = ClassifierModel::random(dim, widths, classes, &mut seed::rng(seed_value))?;
        *out = Box::into_raw(Box::new(AflowClassifier(model)));
        Ok(())
    })
}

/// # Safety
/// `clf` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_save(clf: *const AflowClassifier, path_ptr: *const c_char) -> AflowStatus {
    guard(|| Ok(save_classifier(classifier_ref(clf)?, path(path_ptr)?)?))
}

/// # Safety
/// `clf` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_free(clf: *mut AflowClassifier) {
    if !clf.is_null() {
        drop(Box::from_raw(clf));
    }
}

/// # Safety
/// `clf` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_input_dim(clf: *const AflowClassifier) -> usize {
    clf.as_ref().map_or(0, |c| c.0.input_dim())
}

/// # Safety
/// `clf` must be null or live.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_num_classes(clf: *const AflowClassifier) -> usize {
    clf.as_ref().map_or(0, |c| c.0.num_classes())
}

/// Write `classes` logits for input `x` of length `dim`.
///
/// # Safety
/// `x` must hold `dim` values and `logits_out` `classes` values.
#[no_mangle]
pub unsafe extern "C" fn aflow_classifier_logits(
    clf: *const AflowClassifier,
    x: *const f64,
    dim: usize,
    logits_out: *mut f64,
    classes: usize,
) -> AflowStatus {
    guard(|| {
        let clf = classifier_ref(clf)?;
        if dim != clf.input_dim() || classes != clf.num_classes() {
            return Err(invalid("buffer sizes do not match the classifier"));
        }
        let logits = clf.logits(&tensor(slice(x, dim, "x")?)?)?;
        slice_mut(logits_out, classes, "logits_out")?.copy_from_slice(&logits);
        Ok(())
    })
}

fn goal(target: i64) -> Goal {
    if target < 0 {
        Goal::Untargeted
    } else {
        Goal::Targeted(target as usize)
    }
}

fn write_outcome(
    res: aflow::attack::AdversarialResult,
    x_adv_out: &mut [f64],
    outcome: *mut AflowAttackOutcome,
) -> Result<(), Fail> {
    x_adv_out.copy_from_slice(res.x_adv.data());
    if let Some(o) = unsafe { outcome.as_mut() } {
        *o = AflowAttackOutcome {
            success: res.success,
            iterations_used: res.iterations_used,
            achieved_linf: res.achieved_linf,
        };
    }
    Ok(())
}

/// Latent-space attack of `x` (pixels in `[0, 1]`, length `dim`) with true label `label`.
///
/// # Safety
/// Handles must be live; `x` and `x_adv_out` must hold `dim` values; `params`
/// must be valid; `outcome` may be null.
#[no_mangle]
pub unsafe extern "C" fn aflow_attack(
    flow: *const AflowFlow,
    clf: *const AflowClassifier,
    x: *const f64,
    dim: usize,
    label: usize,
    params: *const AflowAttackParams,
    x_adv_out: *mut f64,
    outcome: *mut AflowAttackOutcome,
) -> AflowStatus {
    guard(|| {
        let flow = flow_ref(flow)?;
        let clf = classifier_ref(clf)?;
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        let x = tensor(slice(x, dim, "x")?)?;
        let cfg = AttackConfig {
            epsilon: p.epsilon,
            max_queries: p.max_queries,
            lr: p.lr,
            kappa: p.kappa,
            goal: goal(p.target),
            preprocess: Some(PreprocessSpec::default()),
        };
        let res = aflow::attack::aflow_attack(flow, clf, &x, label, &cfg)?;
        write_outcome(res, slice_mut(x_adv_out, dim, "x_adv_out")?, outcome)
    })
}

/// Single-step signed-gradient attack; `target < 0` is untargeted.
///
/// # Safety
/// `clf` must be live; `x` and `x_adv_out` must hold `dim` values; `outcome` may be null.
#[no_mangle]
pub unsafe extern "C" fn aflow_fgsm(
    clf: *const AflowClassifier,
    x: *const f64,
    dim: usize,
    label: usize,
    epsilon: f64,
    target: i64,
    x_adv_out: *mut f64,
    outcome: *mut AflowAttackOutcome,
) -> AflowStatus {
    guard(|| {
        let clf = classifier_ref(clf)?;
        let x = tensor(slice(x, dim, "x")?)?;
        let res = fgsm_attack(clf, &x, label, epsilon, goal(target))?;
        write_outcome(res, slice_mut(x_adv_out, dim, "x_adv_out")?, outcome)
    })
}

/// SSIM, PSNR, L2, UQI and SCC between two `height x width` images.
///
/// # Safety
/// Both images must hold `height * width` values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn aflow_metrics(
    reference: *const f64,
    candidate: *const f64,
    height: usize,
    width: usize,
    out: *mut AflowMetrics,
) -> AflowStatus {
    guard(|| {
        let n = height
            .checked_mul(width)
            .ok_or_else(|| invalid("image size overflows"))?;
        let a = slice(reference, n, "reference")?;
        let b = slice(candidate, n, "candidate")?;
        let r = evaluate(&ImagePair::new(a, b, height, width)?);
        *out.as_mut().ok_or_else(|| null("out"))? = AflowMetrics {
            ssim: r.ssim,
            psnr_db: r.psnr_db,
            l2: r.l2,
            uqi: r.uqi,
            scc: r.scc,
        };
        Ok(())
    })
}
