//! C ABI over `homlab`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns a [`HomlabStatus`]; the message of the last
//! failure on the calling thread is available from
//! [`homlab_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use homlab::analytic::annulus_mean_exit;
use homlab::domain::Domain;
use homlab::environ::{sample_environment, EnvSpec, Environment};
use homlab::renorm::estimate_alpha;
use homlab::schedule::{build_schedule, ScaleParams, ScaleTable};
use homlab::stats::MeanEstimate;
use homlab::walk::{self, SimConfig, StopRules};
use homlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HomlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    InvalidSpec = 3,
    OutOfRange = 4,
    DegenerateSchedule = 5,
    SolverFailure = 6,
    HorizonDominated = 7,
    Io = 8,
    Other = 98,
    Panic = 99,
}

/// A sampled random environment.
pub struct HomlabEnv {
    inner: Environment,
}

/// A generated scale hierarchy.
pub struct HomlabSchedule {
    inner: ScaleTable,
}

/// One row of a scale hierarchy. `l` and `ell` are exact below 2^53.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HomlabScaleRow {
    pub n: u32,
    pub l: f64,
    pub ell: f64,
    pub kappa: f64,
    pub kappa_tilde: f64,
    pub d_n: f64,
    pub d_tilde: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> HomlabStatus {
    match e {
        Error::InvalidParams(_) | Error::InvalidDelta { .. } | Error::InvalidRadii(_) | Error::Config(_) => {
            HomlabStatus::InvalidParams
        }
        Error::InvalidSpec(_) => HomlabStatus::InvalidSpec,
        Error::OutOfRange { .. } => HomlabStatus::OutOfRange,
        Error::DegenerateSchedule { .. } | Error::ScheduleOverflow { .. } => HomlabStatus::DegenerateSchedule,
        Error::SolverFailure(_) | Error::FitUnstable(_) => HomlabStatus::SolverFailure,
        Error::HorizonDominated { .. } => HomlabStatus::HorizonDominated,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => HomlabStatus::Io,
        _ => HomlabStatus::Other,
    }
}

fn guard<F: FnOnce() -> Result<(), HomlabStatus>>(f: F) -> HomlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => HomlabStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("panic inside homlab".into());
            HomlabStatus::Panic
        }
    }
}

fn lift<T>(r: homlab::Result<T>) -> Result<T, HomlabStatus> {
    r.map_err(|e| {
        set_error(e.to_string());
        status_of(&e)
    })
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), HomlabStatus> {
    if p.is_null() {
        set_error(format!("{what} is null"));
        Err(HomlabStatus::NullPointer)
    } else {
        Ok(())
    }
}

/// Copies the last error message into `buf` (NUL terminated, truncated to
/// `len`) and returns the full message length in bytes.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn homlab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn homlab_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version contains NUL"),
    };
    VERSION.as_ptr()
}

/// Samples an environment. `out` receives a handle to release with
/// [`homlab_env_free`].
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_env_new(
    d: u32,
    eta: f64,
    range_r: f64,
    lattice_spacing: f64,
    kernel_radius: f64,
    seed: u64,
    out: *mut *mut HomlabEnv,
) -> HomlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = EnvSpec { d: d as usize, eta, range_r, lattice_spacing, kernel_radius, seed };
        let env = lift(sample_environment(&spec))?;
        *out = Box::into_raw(Box::new(HomlabEnv { inner: env }));
        Ok(())
    })
}

/// # Safety
/// `env` must be null or a handle from [`homlab_env_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homlab_env_free(env: *mut HomlabEnv) {
    if !env.is_null() {
        drop(Box::from_raw(env));
    }
}

/// # Safety
/// `env` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn homlab_env_dim(env: *const HomlabEnv) -> u32 {
    if env.is_null() {
        0
    } else {
        (*env).inner.dim() as u32
    }
}

/// Writes `A(x)` row-major into `a_out` (`d*d` values) and `b(x)` into
/// `b_out` (`d` values).
///
/// # Safety
/// `x` must hold `d` values; the outputs must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn homlab_env_coeffs(
    env: *const HomlabEnv,
    x: *const f64,
    a_out: *mut f64,
    b_out: *mut f64,
) -> HomlabStatus {
    guard(|| {
        non_null(env, "env")?;
        non_null(x, "x")?;
        non_null(a_out, "a_out")?;
        non_null(b_out, "b_out")?;
        let env = &(*env).inner;
        let d = env.dim();
        let c = env.eval_coeffs(slice::from_raw_parts(x, d));
        slice::from_raw_parts_mut(a_out, d * d).copy_from_slice(&c.a);
        slice::from_raw_parts_mut(b_out, d).copy_from_slice(&c.b);
        Ok(())
    })
}

/// Mean exit time of the quenched diffusion from the ball of the given
/// radius around the origin, started at `x`.
///
/// # Safety
/// `env` must be a live handle, `x` must hold `d` values and the outputs
/// must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_mean_exit_time_ball(
    env: *const HomlabEnv,
    radius: f64,
    x: *const f64,
    paths: u64,
    dt: f64,
    max_time: f64,
    seed: u64,
    mean_out: *mut f64,
    stderr_out: *mut f64,
) -> HomlabStatus {
    guard(|| {
        non_null(env, "env")?;
        non_null(x, "x")?;
        non_null(mean_out, "mean_out")?;
        non_null(stderr_out, "stderr_out")?;
        if !(radius > 0.0) || paths == 0 {
            set_error(format!("radius = {radius} and paths = {paths} must be positive"));
            return Err(HomlabStatus::InvalidParams);
        }
        let env = &(*env).inner;
        let start = slice::from_raw_parts(x, env.dim()).to_vec();
        let dom = Domain::ball(radius);
        let cfg = SimConfig::new(dt, max_time, seed);
        let rules = StopRules::exit(&dom);
        let taus = lift(walk::run_paths(paths as usize, |i| {
            walk::simulate_quenched(env, &start, &cfg.with_path(i), &rules).map(|p| p.exit_time().unwrap_or(p.time))
        }))?;
        let est = MeanEstimate::from_slice(&taus);
        *mean_out = est.mean;
        *stderr_out = est.stderr;
        Ok(())
    })
}

/// Builds a scale hierarchy with rows `0..=n_max`. `mbar = 0` computes the
/// offset from `a`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_schedule_new(
    d: u32,
    beta: f64,
    a: f64,
    l0: u64,
    c0: f64,
    mbar: u32,
    n_max: u32,
    out: *mut *mut HomlabSchedule,
) -> HomlabStatus {
    guard(|| {
        non_null(out, "out")?;
        let params = ScaleParams {
            d: d as usize,
            beta,
            a,
            l0,
            c0,
            strict_paper_mode: false,
            mbar: (mbar > 0).then_some(mbar),
        };
        let table = lift(build_schedule(&params, n_max as usize))?;
        *out = Box::into_raw(Box::new(HomlabSchedule { inner: table }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`homlab_schedule_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn homlab_schedule_free(s: *mut HomlabSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn homlab_schedule_len(s: *const HomlabSchedule) -> u32 {
    if s.is_null() {
        0
    } else {
        (*s).inner.rows.len() as u32
    }
}

/// # Safety
/// `s` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_schedule_row(s: *const HomlabSchedule, n: u32, out: *mut HomlabScaleRow) -> HomlabStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(out, "out")?;
        let Some(r) = (*s).inner.row(n as usize) else {
            set_error(format!("row {n} not in schedule"));
            return Err(HomlabStatus::OutOfRange);
        };
        *out = HomlabScaleRow {
            n,
            l: r.l as f64,
            ell: r.ell as f64,
            kappa: r.kappa,
            kappa_tilde: r.kappa_tilde,
            d_n: r.d_n,
            d_tilde: r.d_tilde,
        };
        Ok(())
    })
}

/// The `n` with `L_n <= 1/epsilon < L_{n+1}`.
///
/// # Safety
/// `s` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_schedule_locate(s: *const HomlabSchedule, epsilon: f64, out: *mut u32) -> HomlabStatus {
    guard(|| {
        non_null(s, "schedule")?;
        non_null(out, "out")?;
        *out = lift((*s).inner.locate_scale(epsilon))? as u32;
        Ok(())
    })
}

/// Effective diffusivity at schedule row `n`.
///
/// # Safety
/// Handles must be live and the outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_estimate_alpha(
    env: *const HomlabEnv,
    s: *const HomlabSchedule,
    n: u32,
    paths: u64,
    dt: f64,
    seed: u64,
    value_out: *mut f64,
    stderr_out: *mut f64,
) -> HomlabStatus {
    guard(|| {
        non_null(env, "env")?;
        non_null(s, "schedule")?;
        non_null(value_out, "value_out")?;
        non_null(stderr_out, "stderr_out")?;
        let a = lift(estimate_alpha(&(*env).inner, &(*s).inner, n as usize, paths as usize, dt, seed))?;
        *value_out = a.value;
        *stderr_out = a.stderr;
        Ok(())
    })
}

/// Mean exit time of `sqrt(alpha) B` from the annulus `r1 < |x| < r2`
/// started at radius `r`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn homlab_annulus_mean_exit(
    r1: f64,
    r2: f64,
    alpha: f64,
    d: u32,
    r: f64,
    out: *mut f64,
) -> HomlabStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = lift(annulus_mean_exit(r1, r2, alpha, d as usize, r))?;
        Ok(())
    })
}
