//! C ABI for the coopgame library.
//!
//! Every function returns a [`CgStatus`]. On failure a description of the
//! error is kept per thread and can be copied out with
//! [`cg_last_error_message`]. Models are opaque [`CgModel`] handles created
//! by `cg_model_new_*` and released with [`cg_model_free`]. Distributions are
//! passed as arrays of doubles over a single variable with `n_outcomes`
//! values; matrices are row-major.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::slice;

use coopgame::alpha::AlphaMatrix;
use coopgame::config::load_config;
use coopgame::distribution::TabularDistribution;
use coopgame::equilibrium::{solve_exact, spectral_radius_bound};
use coopgame::error::Error;
use coopgame::model::{ExpFamilyModel, FeatureMap, GenerativeModel, Model, TabularModel};
use coopgame::runner::{run, RunOptions};
use coopgame::space::FiniteSpace;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Result codes. Values 2 to 4 match the command-line exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStatus {
    CgOk = 0,
    /// A required pointer was null.
    CgErrNullPointer = 1,
    CgErrValidation = 2,
    CgErrRuntime = 3,
    CgErrTransport = 4,
    /// `I - B` is singular; only possible with zero diagonal entries.
    CgErrSingular = 5,
    /// A size or value was out of range.
    CgErrRange = 6,
    CgErrIo = 7,
    /// The library panicked; the message holds the panic text.
    CgErrPanic = 8,
}

/// Opaque model handle.
pub struct CgModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
}

fn status_of(e: &Error) -> CgStatus {
    match e.root() {
        Error::Singular { .. } => CgStatus::CgErrSingular,
        Error::Range(_) | Error::Shape(_) | Error::Numeric(_) => CgStatus::CgErrRange,
        Error::InvalidAlpha(_)
        | Error::InvalidDistribution(_)
        | Error::InvalidSpace(_)
        | Error::Schema(_) => CgStatus::CgErrValidation,
        Error::Io(_) => CgStatus::CgErrIo,
        _ => match e.exit_code() {
            2 => CgStatus::CgErrValidation,
            4 => CgStatus::CgErrTransport,
            _ => CgStatus::CgErrRuntime,
        },
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            CgStatus::CgOk
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} must not be null"));
            CgStatus::CgErrNullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let text = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            set_error(text);
            CgStatus::CgErrPanic
        }
    }
}

unsafe fn input<'a, T>(ptr: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(
    ptr: *mut T,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

fn checked_mul(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::Lib(Error::Range("array size overflows".into())))
}

fn rows(flat: &[f64], n: usize) -> Vec<Vec<f64>> {
    flat.chunks(n.max(1)).map(<[f64]>::to_vec).collect()
}

fn space(n_outcomes: usize) -> Result<FiniteSpace, Failure> {
    Ok(FiniteSpace::single(n_outcomes)?)
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len` bytes) and returns the full message length
/// in bytes, excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cg_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Gershgorin bound `max_i (1 - alpha_ii)` of an `n x n` row-stochastic
/// matrix.
///
/// # Safety
/// `alpha` must point to `n * n` doubles and `out` to one writable double.
#[no_mangle]
pub unsafe extern "C" fn cg_spectral_radius_bound(
    alpha: *const f64,
    n: usize,
    allow_zero_diagonal: c_int,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let flat = input(alpha, checked_mul(n, n)?, "alpha")?;
        let out = output(out, 1, "out")?;
        let m = AlphaMatrix::with_options(rows(flat, n), allow_zero_diagonal != 0)?;
        out[0] = spectral_radius_bound(&m);
        Ok(())
    })
}

/// Closed-form equilibrium of the game with targets `pi` (`n_players` rows of
/// `n_outcomes`) and coupling `alpha` (`n_players x n_players`).
///
/// Writes the equilibrium distributions to `out_p` (same shape as `pi`) and,
/// when not null, the mixture matrix `M[k][i]` (weight of `pi_k` in `p_i`) to
/// `out_mixture` and the best-response residual to `out_residual`.
///
/// # Safety
/// All non-null pointers must reference arrays of the stated sizes.
#[no_mangle]
pub unsafe extern "C" fn cg_solve_exact(
    pi: *const f64,
    n_players: usize,
    n_outcomes: usize,
    alpha: *const f64,
    allow_zero_diagonal: c_int,
    out_p: *mut f64,
    out_mixture: *mut f64,
    out_residual: *mut f64,
) -> CgStatus {
    guard(|| {
        let size = checked_mul(n_players, n_outcomes)?;
        let pi_flat = input(pi, size, "pi")?;
        let alpha_flat = input(alpha, checked_mul(n_players, n_players)?, "alpha")?;
        let out_p = output(out_p, size, "out_p")?;
        let s = space(n_outcomes)?;
        let targets = rows(pi_flat, n_outcomes)
            .into_iter()
            .map(|r| TabularDistribution::new(s.clone(), r))
            .collect::<Result<Vec<_>, _>>()?;
        let m = AlphaMatrix::with_options(rows(alpha_flat, n_players), allow_zero_diagonal != 0)?;
        let eq = solve_exact(&targets, &m)?;
        for (dst, d) in out_p.chunks_mut(n_outcomes).zip(&eq.distributions) {
            dst.copy_from_slice(d.probs());
        }
        if !out_mixture.is_null() {
            let dst = output(out_mixture, n_players * n_players, "out_mixture")?;
            for (d, v) in dst.iter_mut().zip(eq.mixture_matrix.iter().flatten()) {
                *d = *v;
            }
        }
        if !out_residual.is_null() {
            *out_residual = eq.residual;
        }
        Ok(())
    })
}

/// New tabular model over `n_outcomes` values initialized to `probs`
/// (normalized on entry), or uniform when `probs` is null.
///
/// # Safety
/// `probs` must be null or point to `n_outcomes` doubles; `out` must point
/// to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cg_model_new_tabular(
    probs: *const f64,
    n_outcomes: usize,
    out: *mut *mut CgModel,
) -> CgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let s = space(n_outcomes)?;
        let dist = if probs.is_null() {
            TabularDistribution::uniform(s)
        } else {
            TabularDistribution::from_weights(s, input(probs, n_outcomes, "probs")?.to_vec())?
        };
        let model = Model::Tabular(TabularModel::from_distribution(dist));
        *out = Box::into_raw(Box::new(CgModel { inner: model }));
        Ok(())
    })
}

/// New log-linear model with feature table `features` (`n_outcomes x dim`)
/// and natural parameters `theta` (`dim`, zeros when null).
///
/// # Safety
/// Pointers must reference arrays of the stated sizes; `out` must point to a
/// writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cg_model_new_loglinear(
    features: *const f64,
    n_outcomes: usize,
    dim: usize,
    theta: *const f64,
    out: *mut *mut CgModel,
) -> CgStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let s = space(n_outcomes)?;
        let table = rows(
            input(features, checked_mul(n_outcomes, dim)?, "features")?,
            dim,
        );
        let map = FeatureMap::from_table(&s, &table)?;
        let theta = if theta.is_null() {
            vec![0.0; dim]
        } else {
            input(theta, dim, "theta")?.to_vec()
        };
        let model = Model::LogLinear(ExpFamilyModel::new(s, map, theta)?);
        *out = Box::into_raw(Box::new(CgModel { inner: model }));
        Ok(())
    })
}

unsafe fn model<'a>(m: *const CgModel) -> Result<&'a CgModel, Failure> {
    m.as_ref().ok_or(Failure::Null("model"))
}

/// Number of outcomes of a model's space.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_model_size(m: *const CgModel, out: *mut usize) -> CgStatus {
    guard(|| {
        let m = model(m)?;
        *output(out, 1, "out")?.first_mut().expect("len 1") = m.inner.space().total_size();
        Ok(())
    })
}

/// One fitting step toward `target` (`n_outcomes` weights, normalized on
/// entry). On error the model is unchanged.
///
/// # Safety
/// `m` must be a live handle and `target` must point to `n_outcomes` doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_model_fit_step(
    m: *mut CgModel,
    target: *const f64,
    n_outcomes: usize,
    step_size: f64,
) -> CgStatus {
    guard(|| {
        let m = m.as_mut().ok_or(Failure::Null("model"))?;
        let t = input(target, n_outcomes, "target")?.to_vec();
        let t = TabularDistribution::from_weights(m.inner.space().clone(), t)?;
        let mut next = m.inner.clone();
        next.fit_step(&t, step_size)?;
        m.inner = next;
        Ok(())
    })
}

/// Draws `n` outcome indices into `out`; deterministic for equal `seed`.
///
/// # Safety
/// `m` must be a live handle and `out` must point to `n` writable `u32`s.
#[no_mangle]
pub unsafe extern "C" fn cg_model_sample(
    m: *const CgModel,
    n: usize,
    seed: u64,
    out: *mut u32,
) -> CgStatus {
    guard(|| {
        let m = model(m)?;
        let dst = output(out, n, "out")?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        dst.copy_from_slice(&m.inner.sample_outcomes(n, &mut rng));
        Ok(())
    })
}

/// Copies the model's probability table into `out`.
///
/// # Safety
/// `m` must be a live handle and `out` must point to `n_outcomes` doubles.
#[no_mangle]
pub unsafe extern "C" fn cg_model_distribution(
    m: *const CgModel,
    out: *mut f64,
    n_outcomes: usize,
) -> CgStatus {
    guard(|| {
        let m = model(m)?;
        let probs = m.inner.probs();
        if n_outcomes != probs.len() {
            return Err(Failure::Lib(Error::Range(format!(
                "model has {} outcomes, buffer holds {n_outcomes}",
                probs.len()
            ))));
        }
        output(out, n_outcomes, "out")?.copy_from_slice(probs);
        Ok(())
    })
}

/// Log-probability of one outcome; `-INFINITY` when it has zero mass.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cg_model_log_prob(
    m: *const CgModel,
    outcome: usize,
    out: *mut f64,
) -> CgStatus {
    guard(|| {
        let m = model(m)?;
        let size = m.inner.space().total_size();
        if outcome >= size {
            return Err(Failure::Lib(Error::Range(format!(
                "outcome {outcome} outside a space of {size} outcomes"
            ))));
        }
        *output(out, 1, "out")?.first_mut().expect("len 1") = m.inner.log_prob(outcome);
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cg_model_free(m: *mut CgModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Loads and runs a configuration file, writing artifacts to `out_dir` (or
/// the configuration's own output directory when null). `seed` overrides the
/// master seed when `has_seed` is nonzero.
///
/// # Safety
/// `config_path` must be a NUL-terminated path; `out_dir` null or
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cg_run_config(
    config_path: *const c_char,
    out_dir: *const c_char,
    has_seed: c_int,
    seed: u64,
) -> CgStatus {
    guard(|| {
        if config_path.is_null() {
            return Err(Failure::Null("config_path"));
        }
        let path = PathBuf::from(CStr::from_ptr(config_path).to_string_lossy().into_owned());
        let out_dir = (!out_dir.is_null())
            .then(|| PathBuf::from(CStr::from_ptr(out_dir).to_string_lossy().into_owned()));
        let config = load_config(&path)?;
        run(
            &config,
            &RunOptions {
                out_dir,
                seed: (has_seed != 0).then_some(seed),
                ..RunOptions::default()
            },
        )?;
        Ok(())
    })
}
