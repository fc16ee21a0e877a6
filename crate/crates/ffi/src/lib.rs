//! C ABI over `lamperti_lab`.
//!
//! Objects are opaque handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns an [`LlStatus`]; the
//! message of the last failure on the calling thread is available from
//! [`ll_last_error_message`]. Panics never cross the boundary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use lamperti_lab::coalescent::{simulate_with_table, Partition, RateTable};
use lamperti_lab::duality::{kingman_identity_closed_form, run_duality, standard_battery, DualityExperiment};
use lamperti_lab::lambda::{LambdaSpec, SMHParams};
use lamperti_lab::lamperti::additive_functional_mass;
use lamperti_lab::levy::{Interpolation, PathGrid};
use lamperti_lab::rng::{stream, tags};
use lamperti_lab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlStatus {
    Ok = 0,
    NullPointer = 1,
    /// Argument outside its domain, wrong arity or index.
    InvalidArgument = 2,
    ZeroMeasure = 3,
    Divergence = 4,
    Quadrature = 5,
    Resource = 6,
    StepUnderflow = 7,
    Config = 8,
    Io = 9,
    /// An internal panic was caught.
    Internal = 10,
}

impl From<&Error> for LlStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::ZeroMeasure => LlStatus::ZeroMeasure,
            Error::Domain(_) | Error::Arity { .. } | Error::IndexOutOfRange { .. } => LlStatus::InvalidArgument,
            Error::Divergence(_) => LlStatus::Divergence,
            Error::Quadrature { .. } => LlStatus::Quadrature,
            Error::Resource(_) => LlStatus::Resource,
            Error::StepUnderflow => LlStatus::StepUnderflow,
            Error::Config(_) => LlStatus::Config,
            Error::Io(_) => LlStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

enum Fail {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

/// Runs `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), Fail>>(f: F) -> LlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LlStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            LlStatus::NullPointer
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            LlStatus::from(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {msg}"));
            LlStatus::Internal
        }
    }
}

fn non_null<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Fail> {
    // SAFETY: callers pass either null or a pointer obtained from this library.
    unsafe { p.as_ref() }.ok_or(Fail::Null(what))
}

fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Fail> {
    // SAFETY: as for `non_null`; the caller owns the output slot.
    unsafe { p.as_mut() }.ok_or(Fail::Null(what))
}

fn slice<'a>(p: *const f64, n: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    // SAFETY: the caller guarantees `n` readable doubles at `p`.
    Ok(unsafe { std::slice::from_raw_parts(p, n) })
}

fn boxed<T>(value: T, out: *mut *mut T) -> Result<(), Fail> {
    *out_ptr(out, "out")? = Box::into_raw(Box::new(value));
    Ok(())
}

/// Copies `s` NUL-terminated into `buf` (truncating to `len - 1` bytes) and
/// returns the number of bytes needed including the terminator.
fn copy_str(s: &str, buf: *mut c_char, len: usize) -> usize {
    if !buf.is_null() && len > 0 {
        let n = s.len().min(len - 1);
        // SAFETY: `buf` holds `len` bytes and `n < len`.
        unsafe {
            ptr::copy_nonoverlapping(s.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
    }
    s.len() + 1
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ll_version() -> *const c_char {
    static V: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(s) => s,
        Err(_) => panic!("version string"),
    };
    V.as_ptr()
}

/// Copies the last error message of this thread into `buf`; returns the
/// size needed, terminator included. Pass `len = 0` to query the size.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| copy_str(&e.borrow(), buf, len))
}

/// Model parameters `(kappa, sigma, Lambda)`.
pub struct LlParams(SMHParams);

fn new_params(kappa: f64, sigma: f64, kingman: f64, lambda: LambdaSpec, out: *mut *mut LlParams) -> Result<(), Fail> {
    if !(kingman >= 0.0) {
        return Err(Error::Domain(format!("kingman = {kingman} must be non-negative")).into());
    }
    let p = SMHParams::new(kappa, sigma, lambda.with_kingman(kingman))?;
    boxed(LlParams(p), out)
}

/// Parameters with `Lambda = kingman * delta_0`.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_new(kappa: f64, sigma: f64, kingman: f64, out: *mut *mut LlParams) -> LlStatus {
    guard(|| new_params(kappa, sigma, kingman, LambdaSpec::zero(), out))
}

/// Parameters with `Lambda(dz) = c z^{1-beta} (1-z)^{beta-1} dz`, `beta` in (0, 2).
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_new_beta(
    kappa: f64,
    sigma: f64,
    kingman: f64,
    beta: f64,
    c: f64,
    out: *mut *mut LlParams,
) -> LlStatus {
    guard(|| new_params(kappa, sigma, kingman, LambdaSpec::beta(beta, c)?, out))
}

/// Parameters with `Lambda = sum masses[i] * delta_{zetas[i]}` (plus the
/// Kingman part).
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_new_atoms(
    kappa: f64,
    sigma: f64,
    kingman: f64,
    zetas: *const f64,
    masses: *const f64,
    n: usize,
    out: *mut *mut LlParams,
) -> LlStatus {
    guard(|| {
        let z = slice(zetas, n, "zetas")?;
        let m = slice(masses, n, "masses")?;
        let atoms = z.iter().copied().zip(m.iter().copied()).collect();
        new_params(kappa, sigma, kingman, LambdaSpec::atoms(atoms)?, out)
    })
}

/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_free(params: *mut LlParams) {
    if !params.is_null() {
        // SAFETY: created by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(params) });
    }
}

/// Pairwise coalescence rate `sigma^2 + Lambda({0})`.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_pair_rate(params: *const LlParams, out: *mut f64) -> LlStatus {
    guard(|| {
        *out_ptr(out, "out")? = non_null(params, "params")?.0.pair_rate();
        Ok(())
    })
}

/// `beta_{j,i} = int z^{i-2} (1-z)^{j-i} Lambda(dz)`: the rate at which a
/// given `i` of `j` blocks merge. `Lambda({0})` counts for `i = 2`, `sigma`
/// does not.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_params_merger_rate(params: *const LlParams, j: usize, i: usize, out: *mut f64) -> LlStatus {
    guard(|| {
        *out_ptr(out, "out")? = non_null(params, "params")?.0.lambda.merger_rate(j, i)?;
        Ok(())
    })
}

/// Coalescent started from `p` singletons, with its rate table prepared.
pub struct LlCoalescent {
    params: SMHParams,
    table: RateTable,
    pi0: Partition,
}

/// Summary of one coalescent trajectory.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlCoalescentSummary {
    /// Time a single block remains, `NaN` if not reached by the horizon.
    pub absorption_time: f64,
    pub final_blocks: usize,
    pub events: usize,
}

/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_coalescent_new(params: *const LlParams, p: usize, out: *mut *mut LlCoalescent) -> LlStatus {
    guard(|| {
        let params = non_null(params, "params")?.0.clone();
        if p == 0 {
            return Err(Error::Domain("p must be positive".into()).into());
        }
        let table = RateTable::new(p, &params)?;
        boxed(
            LlCoalescent {
                params,
                table,
                pi0: Partition::singletons(p),
            },
            out,
        )
    })
}

/// Simulates replica `replica` of the stream seeded by `seed` on
/// `[0, horizon]`. Results depend only on `(seed, replica)`.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_coalescent_simulate(
    sim: *const LlCoalescent,
    horizon: f64,
    seed: u64,
    replica: u64,
    out: *mut LlCoalescentSummary,
) -> LlStatus {
    guard(|| {
        let sim = non_null(sim, "sim")?;
        let out = out_ptr(out, "out")?;
        let mut rng = stream(seed, tags::COALESCENT, replica);
        let path = simulate_with_table(&sim.pi0, &sim.params, &sim.table, horizon, &mut rng)?;
        *out = LlCoalescentSummary {
            absorption_time: path.absorption_time().unwrap_or(f64::NAN),
            final_blocks: path.final_partition().num_blocks(),
            events: path.events.len(),
        };
        Ok(())
    })
}

/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_coalescent_free(sim: *mut LlCoalescent) {
    if !sim.is_null() {
        // SAFETY: created by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// The standard forward/dual moment-duality battery.
pub struct LlBattery(Vec<DualityExperiment>);

/// Outcome of one duality experiment.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LlDualityReport {
    pub lhs_mean: f64,
    pub lhs_se: f64,
    pub rhs_mean: f64,
    pub rhs_se: f64,
    pub z: f64,
    /// 1 when `|z|` is below the acceptance threshold.
    pub pass: i32,
}

/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_battery_new(replicas: usize, seed: u64, out: *mut *mut LlBattery) -> LlStatus {
    guard(|| {
        if replicas < 2 {
            return Err(Error::Domain("need at least 2 replicas".into()).into());
        }
        boxed(LlBattery(standard_battery(replicas, seed)?), out)
    })
}

/// Number of experiments; 0 for a null handle.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_battery_len(battery: *const LlBattery) -> usize {
    // SAFETY: null or a handle from `ll_battery_new`.
    unsafe { battery.as_ref() }.map_or(0, |b| b.0.len())
}

fn experiment<'a>(battery: *const LlBattery, index: usize) -> Result<&'a DualityExperiment, Fail> {
    let b: &'a LlBattery = non_null(battery, "battery")?;
    b.0.get(index)
        .ok_or_else(|| Error::IndexOutOfRange { index, len: b.0.len() }.into())
}

/// Copies the id of experiment `index` into `buf`; `needed` receives the
/// size including the terminator.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_battery_id(
    battery: *const LlBattery,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> LlStatus {
    guard(|| {
        let n = copy_str(&experiment(battery, index)?.id, buf, len);
        if let Some(slot) = unsafe { needed.as_mut() } {
            *slot = n;
        }
        Ok(())
    })
}

/// Runs experiment `index` of the battery.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_battery_run(
    battery: *const LlBattery,
    index: usize,
    out: *mut LlDualityReport,
) -> LlStatus {
    guard(|| {
        let r = run_duality(experiment(battery, index)?)?;
        *out_ptr(out, "out")? = LlDualityReport {
            lhs_mean: r.lhs_mean,
            lhs_se: r.lhs_se,
            rhs_mean: r.rhs_mean,
            rhs_se: r.rhs_se,
            z: r.z,
            pass: r.pass as i32,
        };
        Ok(())
    })
}

/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_battery_free(battery: *mut LlBattery) {
    if !battery.is_null() {
        // SAFETY: created by `Box::into_raw` in this crate.
        drop(unsafe { Box::from_raw(battery) });
    }
}

/// Probability that two sampled individuals share a type at time `t`
/// under pure Kingman resampling at pair rate `s2`, started from `f0`.
#[no_mangle]
pub extern "C" fn ll_kingman_closed_form(s2: f64, t: f64, f0: f64) -> f64 {
    kingman_identity_closed_form(s2, t, f0)
}

/// Writes `int_0^{times[k]} m_u^{-alpha} du` for the piecewise-constant
/// mass path `(times, masses)` into `out[k]`. Entries past the lifetime
/// of the clock are set to `+inf` when it explodes and `NaN` when it
/// freezes.
///
/// # Safety
///
/// Pointer arguments must be null or valid for their documented use;
/// handles must come from this library and not be used after being freed.
#[no_mangle]
pub unsafe extern "C" fn ll_lamperti_clock(
    times: *const f64,
    masses: *const f64,
    n: usize,
    alpha: f64,
    out: *mut f64,
) -> LlStatus {
    guard(|| {
        let t = slice(times, n, "times")?;
        let m = slice(masses, n, "masses")?;
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(Fail::Null("out"));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("times must be strictly increasing".into()).into());
        }
        let grid = PathGrid {
            times: t.to_vec(),
            values: m.to_vec(),
            jumps: vec![false; n],
            interpolation: Interpolation::PiecewiseConstant,
        };
        let clock = additive_functional_mass(&grid, alpha)?;
        let fill = if clock.exploded { f64::INFINITY } else { f64::NAN };
        // SAFETY: the caller guarantees `n` writable doubles at `out`.
        let dst = unsafe { std::slice::from_raw_parts_mut(out, n) };
        for (k, slot) in dst.iter_mut().enumerate() {
            *slot = clock.grid.values.get(k).copied().unwrap_or(fill);
        }
        Ok(())
    })
}
