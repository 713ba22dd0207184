//! C ABI over the slap library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! and released with the matching `*_free`. Every fallible call returns a
//! [`SlapStatus`]; on failure [`slap_last_error`] describes the problem on the
//! calling thread. Matrices are column-major `double` arrays.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use nalgebra::DMatrix;
use slap::config::PipelineConfig;
use slap::evaluation::evaluate;
use slap::graph::{build_laplacian, Bandwidth};
use slap::hsi::{load_cube, load_ground_truth, GroundTruth, HsiCube};
use slap::lra::{self, LraSolution, SolverConfig};
use slap::pipeline::run_pipeline;
use slap::superpixel::SuperpixelBlock;
use slap::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlapStatus {
    Ok = 0,
    NullPointer = 1,
    Config = 2,
    Data = 3,
    Prerequisite = 4,
    Numerical = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Accuracy triple returned by evaluation and pipeline calls.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SlapMetrics {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
}

pub struct SlapCube {
    inner: HsiCube,
}

pub struct SlapGroundTruth {
    inner: GroundTruth,
}

pub struct SlapSolution {
    inner: LraSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SlapStatus {
    match e {
        Error::InvalidArgument(_) => SlapStatus::InvalidArgument,
        Error::Numerical(_) => SlapStatus::Numerical,
        other => match other.exit_code() {
            2 => SlapStatus::Config,
            4 => SlapStatus::Prerequisite,
            _ => SlapStatus::Data,
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

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SlapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlapStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            SlapStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("internal panic: {msg}"));
            SlapStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(
    p: *mut T,
    len: usize,
    what: &'static str,
) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path(p: *const c_char, what: &'static str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::InvalidArgument(format!("{what} is not valid UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

fn checked_len(a: usize, b: usize) -> Result<usize, Failure> {
    a.checked_mul(b)
        .ok_or_else(|| Failure::Lib(Error::InvalidArgument("dimensions overflow".into())))
}

unsafe fn matrix(
    data: *const f64,
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<DMatrix<f64>, Failure> {
    let v = slice(data, checked_len(rows, cols)?, what)?;
    Ok(DMatrix::from_column_slice(rows, cols, v))
}

fn copy_out(src: &DMatrix<f64>, dst: &mut [f64]) -> Result<(), Failure> {
    if dst.len() != src.len() {
        return Err(Error::SizeMismatch {
            expected: src.len(),
            found: dst.len(),
        }
        .into());
    }
    dst.copy_from_slice(src.as_slice());
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a cube from band-sequential `float` data of length
/// `height * width * bands`.
///
/// # Safety
/// `data` must point to `len` readable floats; the output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_cube_new(
    height: usize,
    width: usize,
    bands: usize,
    data: *const f32,
    len: usize,
    out_cube: *mut *mut SlapCube,
) -> SlapStatus {
    guard(|| {
        let dst = out(out_cube, "out_cube")?;
        let values = slice(data, len, "data")?.to_vec();
        let inner = HsiCube::new(height, width, bands, values)?;
        *dst = Box::into_raw(Box::new(SlapCube { inner }));
        Ok(())
    })
}

/// Loads a cube from its header file.
///
/// # Safety
/// `header_path` must be a NUL-terminated string; the output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_cube_load(
    header_path: *const c_char,
    out_cube: *mut *mut SlapCube,
) -> SlapStatus {
    guard(|| {
        let dst = out(out_cube, "out_cube")?;
        let inner = load_cube(&path(header_path, "header_path")?)?;
        *dst = Box::into_raw(Box::new(SlapCube { inner }));
        Ok(())
    })
}

/// # Safety
/// `cube` must come from this library and the output pointers be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_cube_dims(
    cube: *const SlapCube,
    height: *mut usize,
    width: *mut usize,
    bands: *mut usize,
) -> SlapStatus {
    guard(|| {
        let c = &cube.as_ref().ok_or(Failure::Null("cube"))?.inner;
        *out(height, "height")? = c.height();
        *out(width, "width")? = c.width();
        *out(bands, "bands")? = c.bands();
        Ok(())
    })
}

/// # Safety
/// `cube` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slap_cube_free(cube: *mut SlapCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Ground truth from `height * width` labels, 0 = unlabeled.
///
/// # Safety
/// `labels` must point to `len` readable values; the output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_ground_truth_new(
    height: usize,
    width: usize,
    labels: *const u32,
    len: usize,
    out_gt: *mut *mut SlapGroundTruth,
) -> SlapStatus {
    guard(|| {
        let dst = out(out_gt, "out_gt")?;
        let inner = GroundTruth::new(height, width, slice(labels, len, "labels")?.to_vec())?;
        *dst = Box::into_raw(Box::new(SlapGroundTruth { inner }));
        Ok(())
    })
}

/// Loads an ASCII label raster checked against `cube`'s dimensions.
///
/// # Safety
/// `path` must be NUL-terminated, `cube` a live handle, the output pointer writable.
#[no_mangle]
pub unsafe extern "C" fn slap_ground_truth_load(
    raster_path: *const c_char,
    cube: *const SlapCube,
    out_gt: *mut *mut SlapGroundTruth,
) -> SlapStatus {
    guard(|| {
        let dst = out(out_gt, "out_gt")?;
        let c = &cube.as_ref().ok_or(Failure::Null("cube"))?.inner;
        let inner = load_ground_truth(&path(raster_path, "path")?, c)?;
        *dst = Box::into_raw(Box::new(SlapGroundTruth { inner }));
        Ok(())
    })
}

/// Number of classes `c`.
///
/// # Safety
/// `gt` must be a live handle and `classes` writable.
#[no_mangle]
pub unsafe extern "C" fn slap_ground_truth_classes(
    gt: *const SlapGroundTruth,
    classes: *mut usize,
) -> SlapStatus {
    guard(|| {
        let g = &gt.as_ref().ok_or(Failure::Null("gt"))?.inner;
        *out(classes, "classes")? = g.classes();
        Ok(())
    })
}

/// # Safety
/// `gt` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slap_ground_truth_free(gt: *mut SlapGroundTruth) {
    if !gt.is_null() {
        drop(Box::from_raw(gt));
    }
}

/// Singular value thresholding of a `rows x cols` matrix into `out`.
///
/// # Safety
/// `input` and `output` must each hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn slap_svt(
    input: *const f64,
    rows: usize,
    cols: usize,
    tau: f64,
    output: *mut f64,
) -> SlapStatus {
    guard(|| {
        let p = matrix(input, rows, cols, "input")?;
        let dst = slice_mut(output, checked_len(rows, cols)?, "output")?;
        copy_out(&lra::svt(&p, tau), dst)
    })
}

/// Column-wise shrinkage (proximal map of the l2,1 norm) into `out`.
///
/// # Safety
/// `input` and `output` must each hold `rows * cols` doubles.
#[no_mangle]
pub unsafe extern "C" fn slap_prox_l21(
    input: *const f64,
    rows: usize,
    cols: usize,
    tau: f64,
    output: *mut f64,
) -> SlapStatus {
    guard(|| {
        let d = matrix(input, rows, cols, "input")?;
        let dst = slice_mut(output, checked_len(rows, cols)?, "output")?;
        copy_out(&lra::prox_l21(&d, tau), dst)
    })
}

/// Solves the low-rank model on one `bands x pixels` block with the default
/// solver schedule and a `k_neighbors` Laplacian prior.
///
/// # Safety
/// `data` must hold `bands * pixels` doubles; the output pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_solve_block(
    data: *const f64,
    bands: usize,
    pixels: usize,
    lambda: f64,
    gamma: f64,
    k_neighbors: usize,
    out_solution: *mut *mut SlapSolution,
) -> SlapStatus {
    guard(|| {
        let dst = out(out_solution, "out_solution")?;
        let block = SuperpixelBlock {
            index: 0,
            matrix: matrix(data, bands, pixels, "data")?,
            coords: (0..pixels).map(|j| (0, j)).collect(),
        };
        let cfg = SolverConfig {
            lambda,
            gamma,
            ..SolverConfig::default()
        };
        let prior = build_laplacian(&block, k_neighbors, Bandwidth::MeanNearestNeighbor)?;
        let inner = lra::solve(&block, &prior, &cfg)?;
        *dst = Box::into_raw(Box::new(SlapSolution { inner }));
        Ok(())
    })
}

/// Iteration count and convergence flag of a solve.
///
/// # Safety
/// `solution` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn slap_solution_info(
    solution: *const SlapSolution,
    iterations: *mut usize,
    converged: *mut bool,
) -> SlapStatus {
    guard(|| {
        let s = &solution.as_ref().ok_or(Failure::Null("solution"))?.inner;
        *out(iterations, "iterations")? = s.iterations();
        *out(converged, "converged")? = s.converged;
        Ok(())
    })
}

/// Copies the `pixels x pixels` coefficient matrix.
///
/// # Safety
/// `solution` must be a live handle and `output` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn slap_solution_coefficients(
    solution: *const SlapSolution,
    output: *mut f64,
    len: usize,
) -> SlapStatus {
    guard(|| {
        let s = &solution.as_ref().ok_or(Failure::Null("solution"))?.inner;
        copy_out(&s.z, slice_mut(output, len, "output")?)
    })
}

/// Copies the `bands x pixels` noise matrix.
///
/// # Safety
/// `solution` must be a live handle and `output` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn slap_solution_noise(
    solution: *const SlapSolution,
    output: *mut f64,
    len: usize,
) -> SlapStatus {
    guard(|| {
        let s = &solution.as_ref().ok_or(Failure::Null("solution"))?.inner;
        copy_out(&s.e, slice_mut(output, len, "output")?)
    })
}

/// Copies the `bands x pixels` denoised block.
///
/// # Safety
/// `solution` must be a live handle and `output` hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn slap_solution_denoised(
    solution: *const SlapSolution,
    output: *mut f64,
    len: usize,
) -> SlapStatus {
    guard(|| {
        let s = &solution.as_ref().ok_or(Failure::Null("solution"))?.inner;
        copy_out(&s.denoised, slice_mut(output, len, "output")?)
    })
}

/// # Safety
/// `solution` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn slap_solution_free(solution: *mut SlapSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Scores per-pixel predictions on the listed test pixels.
///
/// # Safety
/// `predictions` must hold `len` labels, `test` hold `test_len` indices and
/// `metrics` be writable.
#[no_mangle]
pub unsafe extern "C" fn slap_evaluate(
    predictions: *const u32,
    len: usize,
    gt: *const SlapGroundTruth,
    test: *const usize,
    test_len: usize,
    metrics: *mut SlapMetrics,
) -> SlapStatus {
    guard(|| {
        let g = &gt.as_ref().ok_or(Failure::Null("gt"))?.inner;
        let pred = slice(predictions, len, "predictions")?;
        let test = slice(test, test_len, "test")?;
        let dst = out(metrics, "metrics")?;
        let r = evaluate(pred, g, test)?;
        *dst = SlapMetrics {
            oa: r.oa,
            aa: r.aa,
            kappa: r.kappa,
        };
        Ok(())
    })
}

/// Runs the full pipeline from a config file, writing its run directory,
/// and returns the mean metrics over successful trials. Fails with the first
/// trial's status when no trial succeeds.
///
/// # Safety
/// `config_path` must be NUL-terminated and `mean` writable.
#[no_mangle]
pub unsafe extern "C" fn slap_pipeline_run(
    config_path: *const c_char,
    mean: *mut SlapMetrics,
) -> SlapStatus {
    guard(|| {
        let dst = out(mean, "mean")?;
        let cfg = PipelineConfig::load(&path(config_path, "config_path")?)?;
        let run = run_pipeline(&cfg)?;
        if run.aggregate.succeeded == 0 {
            let msg = run
                .outcomes
                .iter()
                .find_map(|o| o.result.as_ref().err().map(|f| f.message.clone()))
                .unwrap_or_default();
            return Err(match run.exit_code() {
                5 => Error::Numerical(msg),
                4 => Error::Prerequisite(msg),
                2 => Error::Config(msg),
                _ => Error::Data(msg),
            }
            .into());
        }
        let a = &run.aggregate;
        *dst = SlapMetrics {
            oa: a.oa.mean,
            aa: a.aa.mean,
            kappa: a.kappa.mean,
        };
        Ok(())
    })
}
