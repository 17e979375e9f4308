//! C ABI over `grover-tree`.
//!
//! Every fallible call returns a [`GtStatus`]; on failure a message is kept
//! per thread and can be fetched with [`gt_last_error_message`]. Complex
//! vectors cross the boundary as interleaved `re, im` doubles. Strings
//! returned by the library must be released with [`gt_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use grover_tree::dynamics::{evolve, limit_distribution, make_initial, EvolveConfig, InitialState};
use grover_tree::operators::apply_walk;
use grover_tree::spectral::{birth_density, full_spectrum};
use grover_tree::tree::{build_tree, TreeSpec, TruncatedTree};
use grover_tree::Error;
use num_complex::Complex64;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidSpec = 3,
    SizeCap = 4,
    UnknownVertex = 5,
    OutOfRange = 6,
    DimensionMismatch = 7,
    Precondition = 8,
    Numerical = 9,
    Consistency = 10,
    Io = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtInitial {
    /// Amplitude 1 on every arc out of the root.
    A = 0,
    /// Amplitude `e^{2πik/deg}` on the `k`-th arc out of the root.
    B = 1,
}

/// Opaque truncated tree.
pub struct GtTree {
    inner: TruncatedTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GtStatus {
    match e {
        Error::Spec(_) | Error::Json(_) => GtStatus::InvalidSpec,
        Error::Size { .. } => GtStatus::SizeCap,
        Error::Lookup(_) => GtStatus::UnknownVertex,
        Error::Range(_) => GtStatus::OutOfRange,
        Error::Dimension { .. } => GtStatus::DimensionMismatch,
        Error::Precondition(_) => GtStatus::Precondition,
        Error::Numerical(_) => GtStatus::Numerical,
        Error::Consistency(_) => GtStatus::Consistency,
        Error::Input(_) | Error::Io(_) => GtStatus::Io,
    }
}

enum Fail {
    Status(GtStatus, String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard<F>(f: F) -> GtStatus
where
    F: FnOnce() -> Result<(), Fail>,
{
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GtStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Err(_) => {
            set_error("internal panic".into());
            GtStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(GtStatus::NullPointer, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail::Status(GtStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn tree_ref<'a>(t: *const GtTree) -> Result<&'a TruncatedTree, Fail> {
    t.as_ref().map(|t| &t.inner).ok_or_else(|| null("tree"))
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map_or(ptr::null_mut(), CString::into_raw)
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = to_c_string(s);
    Ok(())
}

fn initial(kind: GtInitial) -> InitialState {
    match kind {
        GtInitial::A => InitialState::A,
        GtInitial::B => InitialState::B,
    }
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn gt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Free with
/// `gt_string_free`.
#[no_mangle]
pub extern "C" fn gt_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null_mut(), |c| c.clone().into_raw()))
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Build a truncation of depth `depth` from a JSON tree spec.
///
/// # Safety
/// `spec_json` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_tree_new(spec_json: *const c_char, depth: usize, out: *mut *mut GtTree) -> GtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("output pointer"));
        }
        let spec = TreeSpec::from_json(read_str(spec_json, "spec")?)?;
        let inner = build_tree(&spec, depth)?;
        *out = Box::into_raw(Box::new(GtTree { inner }));
        Ok(())
    })
}

/// # Safety
/// `tree` must come from `gt_tree_new` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn gt_tree_free(tree: *mut GtTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// # Safety
/// `tree` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gt_tree_num_vertices(tree: *const GtTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.num_vertices())
}

/// # Safety
/// `tree` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn gt_tree_num_arcs(tree: *const GtTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.num_arcs())
}

/// One step of the cut-off walk. `input` and `output` hold `2 * len`
/// doubles; `len` must equal the number of arcs. A negative `cutoff` uses
/// the truncation depth.
///
/// # Safety
/// `input` and `output` must point to `2 * len` doubles and not overlap.
#[no_mangle]
pub unsafe extern "C" fn gt_walk_apply(
    tree: *const GtTree,
    cutoff: i64,
    input: *const f64,
    output: *mut f64,
    len: usize,
) -> GtStatus {
    guard(|| {
        let t = tree_ref(tree)?;
        if input.is_null() || output.is_null() {
            return Err(null("state buffer"));
        }
        if len != t.num_arcs() {
            return Err(Error::Dimension { what: "arc state", expected: t.num_arcs(), got: len }.into());
        }
        let raw = std::slice::from_raw_parts(input, 2 * len);
        let psi: Vec<Complex64> = raw.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
        let cut = usize::try_from(cutoff).ok();
        let next = apply_walk(t, &psi, cut)?;
        let out = std::slice::from_raw_parts_mut(output, 2 * len);
        for (o, z) in out.chunks_exact_mut(2).zip(next.iter()) {
            o[0] = z.re;
            o[1] = z.im;
        }
        Ok(())
    })
}

/// Finding probabilities per vertex after `steps` exact steps from a
/// standard initial state. `values` holds `len` doubles, `len` equal to
/// the number of vertices.
///
/// # Safety
/// `values` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gt_evolve_distribution(
    tree: *const GtTree,
    kind: GtInitial,
    steps: usize,
    values: *mut f64,
    len: usize,
) -> GtStatus {
    guard(|| {
        let t = tree_ref(tree)?;
        if values.is_null() {
            return Err(null("values"));
        }
        if len != t.num_vertices() {
            return Err(Error::Dimension { what: "distribution", expected: t.num_vertices(), got: len }.into());
        }
        let psi = make_initial(t, &initial(kind), true)?;
        let tr = evolve(t, &psi, &EvolveConfig { steps, cutoff: None, exact: true })?;
        let last = tr.distributions.last().expect("trajectory holds the initial step");
        std::slice::from_raw_parts_mut(values, len).copy_from_slice(last);
        Ok(())
    })
}

/// Per-vertex limit distribution and its total mass for a standard state.
/// `values` may be NULL when only the mass is wanted.
///
/// # Safety
/// `values`, if non-NULL, must point to `len` writable doubles; `mass` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn gt_limit_distribution(
    tree: *const GtTree,
    kind: GtInitial,
    values: *mut f64,
    len: usize,
    mass: *mut f64,
) -> GtStatus {
    guard(|| {
        let t = tree_ref(tree)?;
        if mass.is_null() {
            return Err(null("mass"));
        }
        let psi = make_initial(t, &initial(kind), true)?;
        let l = limit_distribution(t, &psi)?;
        if !values.is_null() {
            if len != t.num_vertices() {
                return Err(Error::Dimension { what: "distribution", expected: t.num_vertices(), got: len }.into());
            }
            std::slice::from_raw_parts_mut(values, len).copy_from_slice(&l.per_eigen);
        }
        *mass = l.total_mass();
        Ok(())
    })
}

/// Classified spectrum of the cut-off walk at depth `n` as JSON.
///
/// # Safety
/// `spec_json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_spectrum_json(spec_json: *const c_char, n: usize, out: *mut *mut c_char) -> GtStatus {
    guard(|| {
        let spec = TreeSpec::from_json(read_str(spec_json, "spec")?)?;
        write_string(out, full_spectrum(&spec, n)?.to_json())
    })
}

/// Birth-density series for depths `0..=max_depth` as CSV.
///
/// # Safety
/// `spec_json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gt_density_csv(spec_json: *const c_char, max_depth: usize, out: *mut *mut c_char) -> GtStatus {
    guard(|| {
        let spec = TreeSpec::from_json(read_str(spec_json, "spec")?)?;
        write_string(out, birth_density(&spec, max_depth)?.to_csv())
    })
}
