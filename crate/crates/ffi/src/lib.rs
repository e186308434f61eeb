//! C ABI over the gremlab solvers.
//!
//! Every entry point returns a [`GremlabStatus`] and writes results through
//! out-pointers. On failure the message is kept in a thread-local slot and
//! read back with [`gremlab_last_error`]. Panics are caught at the boundary
//! and reported as [`GremlabStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use gremlab::chains::Chain;
use gremlab::parisi::{global_parisi_min, parisi_value};
use gremlab::report::{run_verify, to_json, VerifyConfig};
use gremlab::sim::free_energy_exact;
use gremlab::variational::solve_gibbs;
use gremlab::{GremError, ModelSpec};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GremlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidModel = 3,
    InvalidArgument = 4,
    BudgetExceeded = 5,
    Numeric = 6,
    Panic = 7,
}

/// Opaque model handle. Create with [`gremlab_model_from_json`], release
/// with [`gremlab_model_free`].
pub struct GremlabModel {
    spec: ModelSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &GremError) -> GremlabStatus {
    match e {
        GremError::InvalidModel(_)
        | GremError::SpeciesOutOfRange { .. }
        | GremError::SymbolOutOfRange { .. }
        | GremError::Parse(_)
        | GremError::Json(_) => GremlabStatus::InvalidModel,
        GremError::BudgetExceeded { .. } => GremlabStatus::BudgetExceeded,
        GremError::Eval(_) => GremlabStatus::Numeric,
        _ => GremlabStatus::InvalidArgument,
    }
}

struct Fail(GremlabStatus, String);

impl From<GremError> for Fail {
    fn from(e: GremError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(GremlabStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> GremlabStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => GremlabStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
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
            GremlabStatus::Panic
        }
    }
}

unsafe fn model_ref<'a>(model: *const GremlabModel) -> Result<&'a GremlabModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn write<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null and, per each entry point's contract, writable.
    unsafe { out.write(value) };
    Ok(())
}

/// Parses a model from a NUL-terminated JSON string.
///
/// # Safety
/// `json` must be a valid C string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gremlab_model_from_json(json: *const c_char, out: *mut *mut GremlabModel) -> GremlabStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json)
            .to_str()
            .map_err(|e| Fail(GremlabStatus::InvalidUtf8, e.to_string()))?;
        let spec = ModelSpec::from_json_str(text)?;
        out.write(Box::into_raw(Box::new(GremlabModel { spec })));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`gremlab_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gremlab_model_free(model: *mut GremlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of species `n`, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gremlab_model_species(model: *const GremlabModel) -> usize {
    model.as_ref().map_or(0, |m| m.spec.n())
}

/// Global Parisi minimum over all chains. `chain_out` receives the winning
/// permutation (species numbered from 1) and `m_out` its optimal `m`; both
/// must hold `n` entries and either may be null.
///
/// # Safety
/// `model` must be a live handle; non-null buffers must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn gremlab_parisi_global_min(
    model: *const GremlabModel,
    value_out: *mut f64,
    chain_out: *mut usize,
    m_out: *mut f64,
    n: usize,
) -> GremlabStatus {
    guard(|| {
        let model = model_ref(model)?;
        if n != model.spec.n() && (!chain_out.is_null() || !m_out.is_null()) {
            return Err(Fail(GremlabStatus::InvalidArgument, format!("buffers hold {n}, model has {}", model.spec.n())));
        }
        let global = global_parisi_min(&model.spec)?;
        let best = &global.best().point;
        write(value_out, best.value, "value_out")?;
        if !chain_out.is_null() {
            std::slice::from_raw_parts_mut(chain_out, n).copy_from_slice(best.chain.perm());
        }
        if !m_out.is_null() {
            std::slice::from_raw_parts_mut(m_out, n).copy_from_slice(&best.m);
        }
        Ok(())
    })
}

/// Parisi functional of the chain `perm` at `m`, both of length `n`.
///
/// # Safety
/// `model` must be a live handle; `perm` and `m` must hold `n` elements.
#[no_mangle]
pub unsafe extern "C" fn gremlab_parisi_value(
    model: *const GremlabModel,
    perm: *const usize,
    m: *const f64,
    n: usize,
    value_out: *mut f64,
) -> GremlabStatus {
    guard(|| {
        let model = model_ref(model)?;
        let chain = Chain::new(slice(perm, n, "perm")?.to_vec())?;
        let v = parisi_value(&model.spec, &chain, slice(m, n, "m")?)?;
        write(value_out, v, "value_out")
    })
}

/// Value `g` of the entropy-capped Gibbs principle; `certified_out` may be
/// null.
///
/// # Safety
/// `model` must be a live handle; out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn gremlab_solve_gibbs(
    model: *const GremlabModel,
    value_out: *mut f64,
    certified_out: *mut bool,
) -> GremlabStatus {
    guard(|| {
        let model = model_ref(model)?;
        let r = solve_gibbs(&model.spec)?;
        write(value_out, r.value, "value_out")?;
        if !certified_out.is_null() {
            certified_out.write(r.certified);
        }
        Ok(())
    })
}

/// Exact finite-volume free energy `F_N` for one disorder seed.
///
/// # Safety
/// `model` must be a live handle; `value_out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gremlab_free_energy(
    model: *const GremlabModel,
    volume: usize,
    seed: u64,
    value_out: *mut f64,
) -> GremlabStatus {
    guard(|| {
        let model = model_ref(model)?;
        let r = free_energy_exact(&model.spec, volume, seed)?;
        write(value_out, r.free_energy, "value_out")
    })
}

/// Runs the full verification and returns the JSON report in `json_out`
/// (release with [`gremlab_string_free`]) and the CLI exit code in
/// `exit_code_out`.
///
/// # Safety
/// `model` must be a live handle; `volumes` must hold `count` elements.
#[no_mangle]
pub unsafe extern "C" fn gremlab_verify_json(
    model: *const GremlabModel,
    volumes: *const usize,
    count: usize,
    seed: u64,
    json_out: *mut *mut c_char,
    exit_code_out: *mut c_int,
) -> GremlabStatus {
    guard(|| {
        let model = model_ref(model)?;
        if json_out.is_null() {
            return Err(null("json_out"));
        }
        let config = VerifyConfig {
            volumes: slice(volumes, count, "volumes")?.to_vec(),
            seed,
            ..VerifyConfig::default()
        };
        let report = run_verify(&model.spec, &config)?;
        let text = to_json(&report)?;
        if !exit_code_out.is_null() {
            exit_code_out.write(report.exit_code());
        }
        let c = CString::new(text).map_err(|e| Fail(GremlabStatus::InvalidUtf8, e.to_string()))?;
        json_out.write(c.into_raw());
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn gremlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gremlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static C string.
#[no_mangle]
pub extern "C" fn gremlab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
