//! C ABI for `ivmaps`.
//!
//! Objects are opaque handles created by `ivm_*_new`/`ivm_*_build` style
//! functions and released with the matching `ivm_*_free`. Every fallible
//! call returns an `IvmStatus`; on failure a message is available from
//! `ivm_last_error` on the same thread. Strings returned through out
//! parameters are owned by the caller and released with `ivm_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use ivmaps::checks::estimate_theta0;
use ivmaps::hofbauer::{build_tower, Tower};
use ivmaps::io::parse_map_arg;
use ivmaps::measure::{pushforward, ulam_matrix, PiecewiseDensity, PushOptions, UlamPartition};
use ivmaps::repro::run_recipe;
use ivmaps::stats::{correlation_series, green_kubo_sigma, invariant_density, CorrelationMethod, Observable};
use ivmaps::{Error, Interval, MapModel};

/// Status codes. Values 3 and above match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IvmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidString = 2,
    Io = 3,
    InvalidInput = 4,
    Domain = 5,
    Capacity = 6,
    Hypothesis = 7,
    NonConvergence = 8,
    Measure = 9,
    Family = 10,
    Statistics = 11,
    BufferTooSmall = 12,
    Panic = 99,
}

impl IvmStatus {
    fn from_code(code: i32) -> Self {
        match code {
            3 => IvmStatus::Io,
            4 => IvmStatus::InvalidInput,
            5 => IvmStatus::Domain,
            6 => IvmStatus::Capacity,
            7 => IvmStatus::Hypothesis,
            8 => IvmStatus::NonConvergence,
            9 => IvmStatus::Measure,
            10 => IvmStatus::Family,
            _ => IvmStatus::Statistics,
        }
    }
}

/// Opaque map handle.
pub struct IvmMap(MapModel);
/// Opaque piecewise-constant density handle.
pub struct IvmDensity(PiecewiseDensity);
/// Opaque Hofbauer tower handle.
pub struct IvmTower(Tower);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(IvmStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(IvmStatus::from_code(e.exit_code()), e.to_string())
    }
}

type FfiResult = Result<(), Fail>;

fn guard(f: impl FnOnce() -> FfiResult) -> IvmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IvmStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            IvmStatus::Panic
        }
    }
}

fn null() -> Fail {
    Fail(IvmStatus::NullPointer, "null pointer argument".into())
}

unsafe fn deref<'a, T>(p: *const T) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(null)
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(null)
}

unsafe fn string<'a>(p: *const c_char) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null());
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IvmStatus::InvalidString, "string is not valid UTF-8".into()))
}

fn owned_string(s: String) -> Result<*mut c_char, Fail> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Fail(IvmStatus::InvalidString, "output contains a nul byte".into()))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread; do not free.
#[no_mangle]
pub extern "C" fn ivm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Builds a map from a JSON document, a path to one, or a shorthand such as
/// `vssv:0.4:60`.
///
/// # Safety
/// `spec` must be a nul-terminated string and `out_map` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ivm_map_new(spec: *const c_char, out_map: *mut *mut IvmMap) -> IvmStatus {
    guard(|| {
        let slot = out(out_map)?;
        let m = parse_map_arg(string(spec)?)?;
        *slot = Box::into_raw(Box::new(IvmMap(m)));
        Ok(())
    })
}

/// # Safety
/// `map` must be null or a handle from `ivm_map_new`, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivm_map_free(map: *mut IvmMap) {
    if !map.is_null() {
        drop(Box::from_raw(map));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_map_branch_count(map: *const IvmMap, out_count: *mut usize) -> IvmStatus {
    guard(|| {
        *out(out_count)? = deref(map)?.0.branches().len();
        Ok(())
    })
}

/// `T(x)`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_map_apply(map: *const IvmMap, x: f64, out_y: *mut f64) -> IvmStatus {
    guard(|| {
        *out(out_y)? = deref(map)?.0.apply(x)?;
        Ok(())
    })
}

/// Largest probed one-step expansion sum at exponent `q` and scale `delta`;
/// `out_pass` is 1 when it is below 1.
///
/// # Safety
/// Pointers must be valid; `out_pass` may be null.
#[no_mangle]
pub unsafe extern "C" fn ivm_h1_theta0(
    map: *const IvmMap,
    q: f64,
    delta: f64,
    out_theta: *mut f64,
    out_pass: *mut c_int,
) -> IvmStatus {
    guard(|| {
        let r = estimate_theta0(&deref(map)?.0, q, delta)?;
        *out(out_theta)? = r.theta_hat;
        if let Some(p) = out_pass.as_mut() {
            *p = c_int::from(r.pass);
        }
        Ok(())
    })
}

fn new_density(d: PiecewiseDensity, slot: &mut *mut IvmDensity) {
    *slot = Box::into_raw(Box::new(IvmDensity(d)));
}

/// Invariant density: Lebesgue, closed form, or Ulam estimate as available.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_invariant(map: *const IvmMap, out_density: *mut *mut IvmDensity) -> IvmStatus {
    guard(|| {
        let slot = out(out_density)?;
        new_density(invariant_density(&deref(map)?.0)?.density, slot);
        Ok(())
    })
}

/// Ulam stationary density on `bins` cells aligned with the branch partition.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_ulam(
    map: *const IvmMap,
    bins: usize,
    out_density: *mut *mut IvmDensity,
) -> IvmStatus {
    guard(|| {
        let slot = out(out_density)?;
        let s = ulam_matrix(&deref(map)?.0, bins, UlamPartition::BranchAligned)?.stationary_density()?;
        new_density(s.density, slot);
        Ok(())
    })
}

/// `T^steps_* m` starting from Lebesgue measure.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_pushforward(
    map: *const IvmMap,
    steps: usize,
    out_density: *mut *mut IvmDensity,
) -> IvmStatus {
    guard(|| {
        let slot = out(out_density)?;
        let (d, _) = pushforward(&deref(map)?.0, &PiecewiseDensity::lebesgue(), steps, &PushOptions::default())?;
        new_density(d, slot);
        Ok(())
    })
}

/// # Safety
/// `density` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_free(density: *mut IvmDensity) {
    if !density.is_null() {
        drop(Box::from_raw(density));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_eval(density: *const IvmDensity, x: f64, out_value: *mut f64) -> IvmStatus {
    guard(|| {
        *out(out_value)? = deref(density)?.0.value_at(x);
        Ok(())
    })
}

/// Mass of `(left, right]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_mass_on(
    density: *const IvmDensity,
    left: f64,
    right: f64,
    out_mass: *mut f64,
) -> IvmStatus {
    guard(|| {
        *out(out_mass)? = deref(density)?.0.mass_on(&Interval::new(left, right));
        Ok(())
    })
}

/// L¹ distance on `(left, right]`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_l1_distance(
    a: *const IvmDensity,
    b: *const IvmDensity,
    left: f64,
    right: f64,
    out_distance: *mut f64,
) -> IvmStatus {
    guard(|| {
        let w = Interval::new(left, right);
        *out(out_distance)? = deref(a)?.0.l1_distance(&deref(b)?.0, Some(&w));
        Ok(())
    })
}

/// Copies the pieces into caller buffers of length `capacity`. `out_len`
/// always receives the piece count; `BufferTooSmall` is returned when it
/// exceeds `capacity`. Buffers may be null when `capacity` is 0.
///
/// # Safety
/// Non-null buffers must hold `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ivm_density_pieces(
    density: *const IvmDensity,
    left: *mut f64,
    right: *mut f64,
    value: *mut f64,
    capacity: usize,
    out_len: *mut usize,
) -> IvmStatus {
    guard(|| {
        let rows = deref(density)?.0.rows();
        *out(out_len)? = rows.len();
        if rows.len() > capacity {
            return Err(Fail(
                IvmStatus::BufferTooSmall,
                format!("{} pieces, capacity {capacity}", rows.len()),
            ));
        }
        if rows.is_empty() {
            return Ok(());
        }
        if left.is_null() || right.is_null() || value.is_null() {
            return Err(null());
        }
        let (l, r, v) = (
            std::slice::from_raw_parts_mut(left, rows.len()),
            std::slice::from_raw_parts_mut(right, rows.len()),
            std::slice::from_raw_parts_mut(value, rows.len()),
        );
        for (i, (a, b, h)) in rows.into_iter().enumerate() {
            l[i] = a;
            r[i] = b;
            v[i] = h;
        }
        Ok(())
    })
}

/// Hofbauer tower closed under one step, nodes at level `depth` and beyond
/// left unexpanded.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_tower_build(
    map: *const IvmMap,
    depth: usize,
    node_cap: usize,
    out_tower: *mut *mut IvmTower,
) -> IvmStatus {
    guard(|| {
        let slot = out(out_tower)?;
        let t = build_tower(&deref(map)?.0, depth, node_cap)?;
        *slot = Box::into_raw(Box::new(IvmTower(t)));
        Ok(())
    })
}

/// # Safety
/// `tower` must be null or a handle from this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn ivm_tower_free(tower: *mut IvmTower) {
    if !tower.is_null() {
        drop(Box::from_raw(tower));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_tower_node_count(tower: *const IvmTower, out_count: *mut usize) -> IvmStatus {
    guard(|| {
        *out(out_count)? = deref(tower)?.0.len();
        Ok(())
    })
}

/// Interval and level of node `index`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_tower_node(
    tower: *const IvmTower,
    index: usize,
    out_left: *mut f64,
    out_right: *mut f64,
    out_level: *mut usize,
) -> IvmStatus {
    guard(|| {
        let t = &deref(tower)?.0;
        let node = t.nodes.get(index).ok_or_else(|| {
            Fail(IvmStatus::InvalidInput, format!("node {index} out of range ({} nodes)", t.len()))
        })?;
        *out(out_left)? = node.interval.left;
        *out(out_right)? = node.interval.right;
        *out(out_level)? = node.level;
        Ok(())
    })
}

/// JSON dump of nodes and edges; free with `ivm_string_free`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_tower_to_json(tower: *const IvmTower, out_json: *mut *mut c_char) -> IvmStatus {
    guard(|| {
        let slot = out(out_json)?;
        *slot = owned_string(deref(tower)?.0.to_json()?)?;
        Ok(())
    })
}

/// Exact `Cov(f, g∘T^n)` for `n = 0..len-1`. Observables are JSON
/// documents such as `{"kind":"power_singularity","tau":0.3}`; `g` may be
/// null to reuse `f`.
///
/// # Safety
/// `out_values` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ivm_correlation_series(
    map: *const IvmMap,
    f_json: *const c_char,
    g_json: *const c_char,
    out_values: *mut f64,
    len: usize,
) -> IvmStatus {
    guard(|| {
        if len == 0 {
            return Ok(());
        }
        if out_values.is_null() {
            return Err(null());
        }
        let f = Observable::from_json(string(f_json)?)?;
        let g = if g_json.is_null() {
            f.clone()
        } else {
            Observable::from_json(string(g_json)?)?
        };
        let s = correlation_series(&deref(map)?.0, &f, &g, len - 1, &CorrelationMethod::Exact)?;
        std::slice::from_raw_parts_mut(out_values, len).copy_from_slice(&s.values[..len]);
        Ok(())
    })
}

/// Green–Kubo `σ²` of `f` with `truncation` correlation terms.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_green_kubo(
    map: *const IvmMap,
    f_json: *const c_char,
    truncation: usize,
    out_sigma2: *mut f64,
) -> IvmStatus {
    guard(|| {
        let slot = out(out_sigma2)?;
        let f = Observable::from_json(string(f_json)?)?;
        let s = correlation_series(&deref(map)?.0, &f, &f, truncation, &CorrelationMethod::Exact)?;
        *slot = green_kubo_sigma(&s, truncation)?.sigma2;
        Ok(())
    })
}

/// Runs a named reproduction recipe, writing artifacts into `out_dir`.
/// `out_passed` is 1 when every check passed; `out_table` (nullable)
/// receives the printed table, to be freed with `ivm_string_free`.
///
/// # Safety
/// Strings must be nul-terminated; `out_passed` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ivm_repro_run(
    name: *const c_char,
    out_dir: *const c_char,
    seed: u64,
    out_passed: *mut c_int,
    out_table: *mut *mut c_char,
) -> IvmStatus {
    guard(|| {
        let passed = out(out_passed)?;
        let r = run_recipe(string(name)?, Path::new(string(out_dir)?), seed)?;
        *passed = c_int::from(r.passed());
        if let Some(t) = out_table.as_mut() {
            *t = owned_string(r.table())?;
        }
        Ok(())
    })
}
