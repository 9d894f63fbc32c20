//! C ABI over `blockhf`.
//!
//! Every entry point returns a [`BhfStatus`]; on failure the message is kept
//! per thread and read back with [`bhf_last_error`]. Models are opaque
//! [`BhfModel`] handles released with [`bhf_model_free`]. Arrays are plain
//! row-major `double` buffers whose lengths the caller passes alongside.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use blockhf::autodiff::EvalContext;
use blockhf::config::parse_config;
use blockhf::experiment::run_experiment;
use blockhf::models::{Model, ModelSpec};
use blockhf::rng::Rng;
use blockhf::tensor::Tensor;
use blockhf::verify::{verify, Suite, VerifyOptions};
use blockhf::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BhfStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad shapes, lengths, names or values.
    InvalidArgument = 2,
    /// A NaN or infinity appeared during computation.
    Numerical = 3,
    Config = 4,
    DataMissing = 5,
    Io = 6,
    /// The call completed but a verification check failed.
    VerifyFailed = 7,
    Panic = 8,
}

/// Opaque network handle.
pub struct BhfModel {
    model: Model,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct BhfRunResult {
    pub updates: usize,
    pub stopped_early: bool,
    /// Last logged training loss, NaN when nothing was logged.
    pub final_train_loss: f64,
    pub final_eval_loss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> BhfStatus {
    match err {
        Error::NonFinite(_) => BhfStatus::Numerical,
        Error::Config { .. } | Error::MissingKey(_) => BhfStatus::Config,
        Error::DataMissing { .. } => BhfStatus::DataMissing,
        Error::Io(_) | Error::Idx(_) => BhfStatus::Io,
        _ => BhfStatus::InvalidArgument,
    }
}

struct Failure(BhfStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BhfStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> BhfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => BhfStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BhfStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(BhfStatus::InvalidArgument, format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(p: *const BhfModel) -> Result<&'a Model, Failure> {
    p.as_ref().map(|m| &m.model).ok_or_else(|| null("model"))
}

fn check_len(what: &str, expected: usize, actual: usize) -> Result<(), Failure> {
    if expected == actual {
        Ok(())
    } else {
        Err(Failure(
            BhfStatus::InvalidArgument,
            format!("`{what}` has length {actual}, model needs {expected}"),
        ))
    }
}

unsafe fn store(out: *mut *mut BhfModel, model: Model) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(BhfModel { model }));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bhf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn bhf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a preset network (`autoencoder-mnist`, `lstm3x10`).
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_preset(name: *const c_char, out: *mut *mut BhfModel) -> BhfStatus {
    guard(|| {
        let spec = ModelSpec::preset(text(name, "name")?)?;
        store(out, Model::build(spec)?)
    })
}

/// Builds an autoencoder with encoder sizes `layers[0..n_layers]`.
///
/// # Safety
/// `layers` must point to `n_layers` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_autoencoder(
    layers: *const usize,
    n_layers: usize,
    out: *mut *mut BhfModel,
) -> BhfStatus {
    guard(|| {
        if layers.is_null() {
            return Err(null("layers"));
        }
        let layers = std::slice::from_raw_parts(layers, n_layers).to_vec();
        store(out, Model::build(ModelSpec::Autoencoder { layers })?)
    })
}

/// # Safety
/// `model` must come from a `bhf_model_*` constructor and not be freed yet.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_free(model: *mut BhfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of parameters, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_param_count(model: *const BhfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.param_count())
}

/// Columns of one input row, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_input_width(model: *const BhfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.spec().input_width())
}

/// Columns of one target row, 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_target_width(model: *const BhfModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.spec().target_width())
}

/// Writes the seeded initial parameters into `w[0..n]`.
///
/// # Safety
/// `model` must be a live handle and `w` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_init_params(model: *const BhfModel, seed: u64, w: *mut f64, n: usize) -> BhfStatus {
    guard(|| {
        let m = handle(model)?;
        let w = slice_mut(w, n, "w")?;
        check_len("w", m.param_count(), n)?;
        w.copy_from_slice(m.init_params(&mut Rng::new(seed)).values());
        Ok(())
    })
}

/// Inputs shared by the per-batch entry points.
struct Call<'a> {
    model: &'a Model,
    x: Tensor,
    y: Tensor,
    w: &'a [f64],
}

unsafe fn call<'a>(
    model: *const BhfModel,
    x: *const f64,
    y: *const f64,
    rows: usize,
    w: *const f64,
    n: usize,
) -> Result<Call<'a>, Failure> {
    let m = handle(model)?;
    let (xc, yc) = (m.spec().input_width(), m.spec().target_width());
    let x = Tensor::matrix(rows, xc, slice(x, rows * xc, "x")?.to_vec())?;
    let y = Tensor::matrix(rows, yc, slice(y, rows * yc, "y")?.to_vec())?;
    let w = slice(w, n, "w")?;
    check_len("w", m.param_count(), n)?;
    Ok(Call { model: m, x, y, w })
}

/// Mean loss over `rows` samples. `x` is `rows × input_width`, `y` is
/// `rows × target_width`, `w` has `n` parameters.
///
/// # Safety
/// Pointers must be readable for the stated sizes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_loss(
    model: *const BhfModel,
    x: *const f64,
    y: *const f64,
    rows: usize,
    w: *const f64,
    n: usize,
    out: *mut f64,
) -> BhfStatus {
    guard(|| {
        let c = call(model, x, y, rows, w, n)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let g = c.model.graph();
        *out = g.loss_value(&mut EvalContext::new(g), &[&c.x, &c.y], c.w)?;
        Ok(())
    })
}

/// Gradient of the mean loss, written to `grad[0..n]`.
///
/// # Safety
/// As [`bhf_model_loss`]; `grad` must point to `n` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_grad(
    model: *const BhfModel,
    x: *const f64,
    y: *const f64,
    rows: usize,
    w: *const f64,
    n: usize,
    grad: *mut f64,
) -> BhfStatus {
    guard(|| {
        let c = call(model, x, y, rows, w, n)?;
        let out = slice_mut(grad, n, "grad")?;
        let g = c.model.graph();
        out.copy_from_slice(&g.grad(&mut EvalContext::new(g), &[&c.x, &c.y], c.w)?);
        Ok(())
    })
}

/// Gauss-Newton product `G v`, written to `out[0..n]`.
///
/// # Safety
/// As [`bhf_model_loss`]; `v` and `out` must each hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bhf_model_ggn_vp(
    model: *const BhfModel,
    x: *const f64,
    y: *const f64,
    rows: usize,
    w: *const f64,
    v: *const f64,
    n: usize,
    out: *mut f64,
) -> BhfStatus {
    guard(|| {
        let c = call(model, x, y, rows, w, n)?;
        let v = slice(v, n, "v")?;
        let out = slice_mut(out, n, "out")?;
        let g = c.model.graph();
        out.copy_from_slice(&g.ggn_vp(&mut EvalContext::new(g), &[&c.x, &c.y], c.w, v)?);
        Ok(())
    })
}

/// Parses `config` (the CLI's config text), trains, and writes the CSV it
/// names. `result` may be NULL.
///
/// # Safety
/// `config` must be NUL-terminated; `result` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn bhf_run_config(config: *const c_char, result: *mut BhfRunResult) -> BhfStatus {
    guard(|| {
        let cfg = parse_config(text(config, "config")?)?;
        let summary = run_experiment(&cfg)?;
        if let Some(out) = result.as_mut() {
            let last = summary.rows.last();
            *out = BhfRunResult {
                updates: summary.updates,
                stopped_early: summary.stopped_early,
                final_train_loss: last.map_or(f64::NAN, |r| r.train_loss),
                final_eval_loss: last.map_or(f64::NAN, |r| r.eval_loss),
            };
        }
        Ok(())
    })
}

/// Runs a verification suite (`autodiff`, `cg`, `optimizer`, `all`).
/// Returns `BHF_STATUS_VERIFY_FAILED` when any check fails; the last error
/// then holds the full report. `checks` (may be NULL) receives the number
/// of checks run.
///
/// # Safety
/// `suite` must be NUL-terminated; `checks` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn bhf_verify(suite: *const c_char, seed: u64, checks: *mut usize) -> BhfStatus {
    guard(|| {
        let suite: Suite = text(suite, "suite")?.parse()?;
        let report = verify(suite, &VerifyOptions { seed, fault: None })?;
        if let Some(out) = checks.as_mut() {
            *out = report.checks.len();
        }
        if report.passed() {
            Ok(())
        } else {
            Err(Failure(BhfStatus::VerifyFailed, report.to_string()))
        }
    })
}
