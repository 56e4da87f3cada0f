//! C ABI over the core toolkit.
//!
//! Every fallible entry point returns an [`FcpsStatus`]; on failure the
//! message is kept per thread and can be read with
//! [`fcps_last_error_message`]. Objects cross the boundary as opaque
//! handles that the caller releases with the matching `*_free` function.
//! Strings returned by the library must be released with
//! [`fcps_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fcps::experience::Outcome;
use fcps::gp::{nlml, GpModel, KernelHyperparams};
use fcps::harness::{run, ExperimentConfig};
use fcps::optim::{direct_maximize, SearchSpace};
use fcps::sim::{cannon_reward, CannonWorld, LaunchParams};
use fcps::Error;
use rand::rngs::mock::StepRng;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FcpsStatus {
    Ok = 0,
    NullPointer = 1,
    Contract = 2,
    Factorization = 3,
    Numerical = 4,
    Config = 5,
    Simulation = 6,
    Io = 7,
    Json = 8,
    InvalidUtf8 = 9,
    Panic = 10,
}

impl From<&Error> for FcpsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Contract(_) => FcpsStatus::Contract,
            Error::Factorization { .. } => FcpsStatus::Factorization,
            Error::Numerical(_) => FcpsStatus::Numerical,
            Error::Config(_) => FcpsStatus::Config,
            Error::Simulation(_) => FcpsStatus::Simulation,
            Error::Io(_) => FcpsStatus::Io,
            Error::Json(_) => FcpsStatus::Json,
        }
    }
}

/// Toy-cannon world with its hills.
pub struct FcpsCannonWorld(CannonWorld);

/// Gaussian-process posterior with fixed hyperparameters.
pub struct FcpsGp(GpModel);

/// Objective callback for [`fcps_direct_maximize`]: receives `user_data`,
/// a point and its dimension.
pub type FcpsObjective = Option<unsafe extern "C" fn(user_data: *mut c_void, x: *const f64, dim: usize) -> f64>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

/// Run `f`, translating core errors and panics into status codes.
fn guard<F>(f: F) -> FcpsStatus
where
    F: FnOnce() -> Result<(), (FcpsStatus, String)>,
{
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FcpsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            FcpsStatus::Panic
        }
    }
}

fn core<T>(r: fcps::Result<T>) -> Result<T, (FcpsStatus, String)> {
    r.map_err(|e| (FcpsStatus::from(&e), e.to_string()))
}

fn null(what: &str) -> (FcpsStatus, String) {
    (FcpsStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], (FcpsStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn fcps_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fcps_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by the library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn fcps_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Generate the cannon world for `seed`.
///
/// # Safety
/// `out` must be a valid pointer to write the handle to.
#[no_mangle]
pub unsafe extern "C" fn fcps_cannon_world_new(seed: u64, out: *mut *mut FcpsCannonWorld) -> FcpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let world = CannonWorld::generate(seed);
        *out = Box::into_raw(Box::new(FcpsCannonWorld(world)));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a live handle from [`fcps_cannon_world_new`].
#[no_mangle]
pub unsafe extern "C" fn fcps_cannon_world_free(world: *mut FcpsCannonWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Terrain height at `(x, y)`.
///
/// # Safety
/// `world` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fcps_cannon_elevation(
    world: *const FcpsCannonWorld,
    x: f64,
    y: f64,
    out: *mut f64,
) -> FcpsStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| null("world"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = w.0.terrain_elevation(x, y);
        Ok(())
    })
}

/// Noise-free shot with launch angles `alpha`, `beta` and speed `v`. Writes
/// the landing point to `landing[0..2]`.
///
/// # Safety
/// `world` must be a live handle and `landing` must hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn fcps_cannon_shoot(
    world: *const FcpsCannonWorld,
    alpha: f64,
    beta: f64,
    v: f64,
    landing: *mut f64,
) -> FcpsStatus {
    guard(|| {
        let w = world.as_ref().ok_or_else(|| null("world"))?;
        if landing.is_null() {
            return Err(null("landing"));
        }
        let params = LaunchParams { alpha, beta, v };
        let mut rng = StepRng::new(0, 1);
        let outcome = core(w.0.rollout(params, false, &mut rng))?;
        let out = std::slice::from_raw_parts_mut(landing, 2);
        out.copy_from_slice(&outcome.achieved_target);
        Ok(())
    })
}

/// Cannon reward for target `(tx, ty)` when the ball landed at `(lx, ly)`
/// after a launch at speed `v`.
#[no_mangle]
pub extern "C" fn fcps_cannon_reward(tx: f64, ty: f64, lx: f64, ly: f64, v: f64) -> f64 {
    let outcome = Outcome { stats: vec![lx, ly, v], achieved_target: vec![lx, ly] };
    cannon_reward(&[tx, ty], &outcome, &[0.0, 0.0, v])
}

unsafe fn hyper(
    dim: usize,
    signal_variance: f64,
    lengthscales: *const f64,
    noise_variance: f64,
) -> Result<KernelHyperparams, (FcpsStatus, String)> {
    let ls = slice(lengthscales, dim, "lengthscales")?;
    let h = KernelHyperparams { signal_variance, lengthscales: ls.to_vec(), noise_variance };
    core(h.validate())?;
    Ok(h)
}

unsafe fn rows(inputs: *const f64, n: usize, dim: usize) -> Result<Vec<Vec<f64>>, (FcpsStatus, String)> {
    let flat = slice(inputs, n * dim, "inputs")?;
    Ok(flat.chunks(dim.max(1)).take(n).map(<[f64]>::to_vec).collect())
}

/// Fit a GP to `n` row-major points of dimension `dim` with the given
/// squared-exponential hyperparameters.
///
/// # Safety
/// `inputs` must hold `n * dim` doubles, `targets` `n`, `lengthscales`
/// `dim`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcps_gp_fit(
    inputs: *const f64,
    targets: *const f64,
    n: usize,
    dim: usize,
    signal_variance: f64,
    lengthscales: *const f64,
    noise_variance: f64,
    out: *mut *mut FcpsGp,
) -> FcpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 {
            return Err((FcpsStatus::Contract, "dim must be positive".into()));
        }
        let h = hyper(dim, signal_variance, lengthscales, noise_variance)?;
        let x = rows(inputs, n, dim)?;
        let y = slice(targets, n, "targets")?;
        let model = core(GpModel::fit(&x, y, &h))?;
        *out = Box::into_raw(Box::new(FcpsGp(model)));
        Ok(())
    })
}

/// # Safety
/// `gp` must be null or a live handle from [`fcps_gp_fit`].
#[no_mangle]
pub unsafe extern "C" fn fcps_gp_free(gp: *mut FcpsGp) {
    if !gp.is_null() {
        drop(Box::from_raw(gp));
    }
}

/// Posterior mean and variance of the latent function at `x`.
///
/// # Safety
/// `gp` must be live, `x` must hold the model's dimension, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn fcps_gp_predict(
    gp: *const FcpsGp,
    x: *const f64,
    mean: *mut f64,
    variance: *mut f64,
) -> FcpsStatus {
    guard(|| {
        let g = gp.as_ref().ok_or_else(|| null("gp"))?;
        if mean.is_null() || variance.is_null() {
            return Err(null("mean/variance"));
        }
        let x = slice(x, g.0.dim(), "x")?;
        let p = core(g.0.predict(x))?;
        *mean = p.mean;
        *variance = p.variance;
        Ok(())
    })
}

/// Negative log marginal likelihood of the data under the hyperparameters.
///
/// # Safety
/// As for [`fcps_gp_fit`]; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fcps_gp_nlml(
    inputs: *const f64,
    targets: *const f64,
    n: usize,
    dim: usize,
    signal_variance: f64,
    lengthscales: *const f64,
    noise_variance: f64,
    out: *mut f64,
) -> FcpsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if dim == 0 || n == 0 {
            return Err((FcpsStatus::Contract, "need at least one point of positive dimension".into()));
        }
        let h = hyper(dim, signal_variance, lengthscales, noise_variance)?;
        let x = rows(inputs, n, dim)?;
        let y = slice(targets, n, "targets")?;
        *out = core(nlml(&x, y, &h))?.0;
        Ok(())
    })
}

/// Maximize `objective` over the box `[lower, upper]` with DIRECT using at
/// most `max_evals` evaluations. Writes the best point to `best_x[0..dim]`.
///
/// # Safety
/// `lower`, `upper` and `best_x` must hold `dim` doubles; `best_value`
/// must be writable; the callback must be safe to call with `user_data`.
#[no_mangle]
pub unsafe extern "C" fn fcps_direct_maximize(
    objective: FcpsObjective,
    user_data: *mut c_void,
    lower: *const f64,
    upper: *const f64,
    dim: usize,
    max_evals: usize,
    best_x: *mut f64,
    best_value: *mut f64,
) -> FcpsStatus {
    guard(|| {
        let f = objective.ok_or_else(|| null("objective"))?;
        if best_x.is_null() || best_value.is_null() {
            return Err(null("best_x/best_value"));
        }
        let lo = slice(lower, dim, "lower")?;
        let hi = slice(upper, dim, "upper")?;
        let space = core(SearchSpace::new(lo.to_vec(), hi.to_vec()))?;
        let out = core(direct_maximize(|x: &[f64]| f(user_data, x.as_ptr(), x.len()), &space, max_evals))?;
        std::slice::from_raw_parts_mut(best_x, dim).copy_from_slice(&out.x);
        *best_value = out.value;
        Ok(())
    })
}

/// Run the experiment described by the JSON `config` and return the run
/// results as a JSON array in `*out_json` (free with [`fcps_string_free`]).
///
/// # Safety
/// `config` must be a nul-terminated string; `out_json` writable.
#[no_mangle]
pub unsafe extern "C" fn fcps_run_experiment(config: *const c_char, out_json: *mut *mut c_char) -> FcpsStatus {
    guard(|| {
        if config.is_null() {
            return Err(null("config"));
        }
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let text = CStr::from_ptr(config)
            .to_str()
            .map_err(|e| (FcpsStatus::InvalidUtf8, format!("config is not UTF-8: {e}")))?;
        let cfg = core(ExperimentConfig::from_json(text))?;
        let results = core(run(&cfg))?;
        let json = core(serde_json::to_string(&results).map_err(Error::from))?;
        let c = CString::new(json).map_err(|e| (FcpsStatus::Json, e.to_string()))?;
        *out_json = c.into_raw();
        Ok(())
    })
}
