//! C ABI over the `semisdf` core: an opaque network handle plus the scalar
//! building blocks of the training loop.
//!
//! Every function returns a [`SemisdfStatus`]. On failure the message is kept
//! per thread and can be read with [`semisdf_last_error`]. Panics are caught
//! at the boundary and reported as [`SemisdfStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use semisdf::checkpoint::{Checkpoint, CheckpointMeta};
use semisdf::data::Image;
use semisdf::ema::{base_momentum, ema_fixed_in_place, ema_regularized_in_place};
use semisdf::geometry::Point2;
use semisdf::metrics::{chamfer_l1, SurfaceSamples};
use semisdf::model::{sdf_network_spec, SdfModel, SdfNet};
use semisdf::nnet::init_network;
use semisdf::pseudo::{pseudo_weight, WeightParams};
use semisdf::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemisdfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    NonFinite = 4,
    Io = 5,
    Format = 6,
    Precondition = 7,
    Panic = 99,
}

/// Opaque network handle.
pub struct SemisdfNet {
    net: SdfNet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(SemisdfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(Failure::status_of(&e), e.to_string())
    }
}

impl Failure {
    fn status_of(e: &Error) -> SemisdfStatus {
        match e {
            Error::Config(_) => SemisdfStatus::InvalidArgument,
            Error::Shape(_) => SemisdfStatus::Shape,
            Error::NonFinite { .. } => SemisdfStatus::NonFinite,
            Error::Io(_) => SemisdfStatus::Io,
            Error::Format { .. } | Error::Csv(_) => SemisdfStatus::Format,
            Error::Phase { source, .. } => Failure::status_of(source),
            _ => SemisdfStatus::Precondition,
        }
    }

    fn null(what: &str) -> Self {
        Failure(SemisdfStatus::NullPointer, format!("{what} is null"))
    }

    fn arg(msg: impl Into<String>) -> Self {
        Failure(SemisdfStatus::InvalidArgument, msg.into())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SemisdfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            SemisdfStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(&format!("panic: {msg}"));
            SemisdfStatus::Panic
        }
    }
}

unsafe fn in_slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn out_slice<'a, T>(p: *mut T, n: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(slice::from_raw_parts_mut(p, n))
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn net_ref<'a>(p: *const SemisdfNet) -> Result<&'a SemisdfNet, Failure> {
    p.as_ref().ok_or_else(|| Failure::null("net"))
}

unsafe fn path_arg<'a>(p: *const c_char) -> Result<&'a Path, Failure> {
    if p.is_null() {
        return Err(Failure::null("path"));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| Failure::arg("path is not UTF-8"))?;
    Ok(Path::new(s))
}

fn points_from_xy(xy: &[f64]) -> Vec<Point2> {
    xy.chunks_exact(2).map(|c| Point2::new(c[0], c[1])).collect()
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length in bytes
/// excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn semisdf_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|slot| {
        let slot = slot.borrow();
        let Some(msg) = slot.as_ref() else {
            if !buf.is_null() && len > 0 {
                *buf = 0;
            }
            return 0;
        };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Creates a freshly initialized SDF network reading `cells x cells` pooled
/// image features, with `n_hidden` ReLU layers of the given widths.
///
/// # Safety
/// `hidden` must be valid for `n_hidden` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_new(
    cells: usize,
    hidden: *const usize,
    n_hidden: usize,
    seed: u64,
    out: *mut *mut SemisdfNet,
) -> SemisdfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let hidden = in_slice(hidden, n_hidden, "hidden")?;
        if cells == 0 || hidden.contains(&0) {
            return Err(Failure::arg("layer sizes must be positive"));
        }
        let spec = sdf_network_spec(cells, hidden, seed);
        let params = init_network(&spec)?;
        let net = SdfNet::new(spec, params)?;
        *out = Box::into_raw(Box::new(SemisdfNet { net }));
        Ok(())
    })
}

/// Loads a network from a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_load(path: *const c_char, out: *mut *mut SemisdfNet) -> SemisdfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let ckpt = Checkpoint::load(path_arg(path)?)?;
        let net = SdfNet::new(ckpt.spec.clone(), ckpt.params()?)?;
        *out = Box::into_raw(Box::new(SemisdfNet { net }));
        Ok(())
    })
}

/// Writes the network as a checkpoint file.
///
/// # Safety
/// `net` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_save(net: *const SemisdfNet, path: *const c_char) -> SemisdfStatus {
    guard(|| {
        let net = &net_ref(net)?.net;
        let meta = CheckpointMeta {
            phase: "ffi".into(),
            epoch: 0,
            seed: net.spec.seed,
        };
        Checkpoint::new(&net.spec, &net.params, meta).save(path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `net` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_free(net: *mut SemisdfNet) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_param_count(net: *const SemisdfNet, out: *mut usize) -> SemisdfStatus {
    guard(|| {
        *out_ref(out, "out")? = net_ref(net)?.net.params.total_len();
        Ok(())
    })
}

/// # Safety
/// `net` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_input_dim(net: *const SemisdfNet, out: *mut usize) -> SemisdfStatus {
    guard(|| {
        *out_ref(out, "out")? = net_ref(net)?.net.spec.input_dim();
        Ok(())
    })
}

/// Copies the flat parameter vector into `buf`; `len` must equal the
/// parameter count.
///
/// # Safety
/// `buf` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_get_params(net: *const SemisdfNet, buf: *mut f64, len: usize) -> SemisdfStatus {
    guard(|| {
        let values = net_ref(net)?.net.params.values();
        if len != values.len() {
            return Err(Failure(
                SemisdfStatus::Shape,
                format!("buffer holds {len} values, network has {}", values.len()),
            ));
        }
        out_slice(buf, len, "buf")?.copy_from_slice(values);
        Ok(())
    })
}

/// Replaces the flat parameter vector.
///
/// # Safety
/// `net` must be a live handle; `buf` must be valid for `len` values.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_set_params(net: *mut SemisdfNet, buf: *const f64, len: usize) -> SemisdfStatus {
    guard(|| {
        let net = &mut net.as_mut().ok_or_else(|| Failure::null("net"))?.net;
        let values = in_slice(buf, len, "buf")?;
        net.params = net.params.with_values(values.to_vec())?;
        Ok(())
    })
}

/// Predicts signed distances at `n_points` points (`xy` interleaved) for an
/// RGB image of `height x width` pixels in row-major HWC order.
///
/// # Safety
/// `pixels` must hold `height * width * 3` values, `xy` `2 * n_points`, and
/// `out` `n_points`.
#[no_mangle]
pub unsafe extern "C" fn semisdf_net_predict(
    net: *const SemisdfNet,
    pixels: *const f32,
    height: usize,
    width: usize,
    xy: *const f64,
    n_points: usize,
    out: *mut f64,
) -> SemisdfStatus {
    guard(|| {
        let net = &net_ref(net)?.net;
        let pixels = in_slice(pixels, height * width * 3, "pixels")?;
        let image = Image::from_pixels(height, width, pixels.to_vec())?;
        let points = points_from_xy(in_slice(xy, 2 * n_points, "xy")?);
        let pred = net.predict(&image, &points)?;
        out_slice(out, n_points, "out")?.copy_from_slice(&pred);
        Ok(())
    })
}

/// `clip(1 - alpha cons - beta var, 0, 1)`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_pseudo_weight(
    cons: f64,
    var: f64,
    alpha: f64,
    beta: f64,
    out: *mut f64,
) -> SemisdfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let params = WeightParams {
            alpha,
            beta,
            ..WeightParams::default()
        };
        params.validate()?;
        if !(cons >= 0.0 && var >= 0.0) {
            return Err(Failure::arg("cons and var must be nonnegative"));
        }
        *out = pseudo_weight(cons, var, &params);
        Ok(())
    })
}

/// Cosine-annealed base momentum at step `t` of `total`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn semisdf_base_momentum(t: usize, total: usize, m0: f64, out: *mut f64) -> SemisdfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        if !(m0 > 0.0 && m0 < 1.0) {
            return Err(Failure::arg(format!("m0 {m0} outside (0, 1)")));
        }
        *out = base_momentum(t, total, m0);
        Ok(())
    })
}

/// In place: `teacher += (1 - m) (student - teacher)`.
///
/// # Safety
/// `teacher` and `student` must be valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn semisdf_ema_update_fixed(
    teacher: *mut f64,
    student: *const f64,
    n: usize,
    m: f64,
) -> SemisdfStatus {
    guard(|| {
        let t = out_slice(teacher, n, "teacher")?;
        let s = in_slice(student, n, "student")?;
        ema_fixed_in_place(t, s, m)?;
        Ok(())
    })
}

/// In place: `teacher += (1 - m) / (1 + eta omega) (student - teacher)`.
///
/// # Safety
/// All arrays must be valid for `n` values.
#[no_mangle]
pub unsafe extern "C" fn semisdf_ema_update_regularized(
    teacher: *mut f64,
    student: *const f64,
    omega: *const f64,
    n: usize,
    m: f64,
    eta: f64,
) -> SemisdfStatus {
    guard(|| {
        let t = out_slice(teacher, n, "teacher")?;
        let s = in_slice(student, n, "student")?;
        let w = in_slice(omega, n, "omega")?;
        ema_regularized_in_place(t, s, m, w, eta)?;
        Ok(())
    })
}

/// Unscaled L1 Chamfer distance between two point sets (`xy` interleaved).
///
/// # Safety
/// `a` must hold `2 * n_a` values and `b` `2 * n_b`.
#[no_mangle]
pub unsafe extern "C" fn semisdf_chamfer_l1(
    a: *const f64,
    n_a: usize,
    b: *const f64,
    n_b: usize,
    out: *mut f64,
) -> SemisdfStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let surface = |p: Vec<Point2>| SurfaceSamples {
            normals: vec![Point2::new(0.0, 0.0); p.len()],
            points: p,
        };
        let a = surface(points_from_xy(in_slice(a, 2 * n_a, "a")?));
        let b = surface(points_from_xy(in_slice(b, 2 * n_b, "b")?));
        *out = chamfer_l1(&a, &b)?;
        Ok(())
    })
}
