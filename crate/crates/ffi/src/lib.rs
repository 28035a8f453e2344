//! C ABI over `ggm-core`.
//!
//! Every function returns a [`GgmStatus`]; on failure a message is kept per
//! thread and can be read with [`ggm_last_error_message`]. Handles are opaque
//! and must be released with their `_free` function. A sampler handle may be
//! used from one thread at a time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ggm_core::analysis::tv_distance;
use ggm_core::classifier::{load_model, Denoiser, ExactOracle, LoadedModel};
use ggm_core::forward::lemma1_bound;
use ggm_core::reverse::{
    conditional_sample, initial_distribution, reverse_propagate_exact, theorem1_min_steps, Prompt, SamplerConfig,
};
use ggm_core::{GgmError, JointDistribution, NoiseDistribution, NoiseSequence, RngStream, ScanSchedule};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GgmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    ShapeMismatch = 4,
    CapExceeded = 5,
    Numeric = 6,
    Degenerate = 7,
    Parse = 8,
    Io = 9,
    BufferTooSmall = 10,
    CertificationFailed = 11,
    Panic = 12,
}

/// A probability table over `X^L`.
pub struct GgmInstance {
    inner: JointDistribution,
}

/// A reverse-chain sampler with its own seeded stream of chains.
pub struct GgmSampler {
    denoiser: Box<dyn Denoiser>,
    target: Option<JointDistribution>,
    schedule: ScanSchedule,
    noise: NoiseSequence,
    config: SamplerConfig,
    root: RngStream,
    next_chain: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
}

fn status_of(err: &GgmError) -> GgmStatus {
    match err {
        GgmError::InvalidInput(_) | GgmError::OutOfRange { .. } | GgmError::Domain(_) => GgmStatus::InvalidArgument,
        GgmError::InvalidConfig(_) | GgmError::Unsupported(_) => GgmStatus::InvalidConfig,
        GgmError::ShapeMismatch(_) => GgmStatus::ShapeMismatch,
        GgmError::CapExceeded { .. } => GgmStatus::CapExceeded,
        GgmError::NotNormalized { .. } | GgmError::NumericGuard(_) | GgmError::InsufficientSamples(_) => {
            GgmStatus::Numeric
        }
        GgmError::Degenerate { .. } | GgmError::UndefinedConditional(_) => GgmStatus::Degenerate,
        GgmError::Json(_) => GgmStatus::Parse,
        GgmError::Io(_) => GgmStatus::Io,
    }
}

struct Failure(GgmStatus, String);

impl From<GgmError> for Failure {
    fn from(err: GgmError) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(GgmStatus::NullPointer, format!("{what} is null"))
}

/// Runs `body`, converting errors and panics into a status plus message.
fn guard(body: impl FnOnce() -> Result<GgmStatus, Failure>) -> GgmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(status)) => {
            if status == GgmStatus::Ok {
                set_error("");
            }
            status
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            GgmStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(text: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if text.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(text)
        .to_str()
        .map_err(|_| Failure(GgmStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(data: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_slice<'a, T>(data: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len < needed {
        return Err(Failure(GgmStatus::BufferTooSmall, format!("{what} holds {len}, needs {needed}")));
    }
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, needed))
}

/// Copies the calling thread's last error message (NUL-terminated, truncated
/// to fit) and returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buffer` must be null or valid for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn ggm_last_error_message(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        let bytes = message.as_bytes();
        if !buffer.is_null() && capacity > 0 {
            let n = bytes.len().min(capacity - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buffer as *mut u8, n);
            *buffer.add(n) = 0;
        }
        bytes.len()
    })
}

/// Static, NUL-terminated crate version.
#[no_mangle]
pub extern "C" fn ggm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parses `{"L": .., "V": .., "probs": [..]}` (optionally wrapped under `"instance"`).
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_from_json(json: *const c_char, out: *mut *mut GgmInstance) -> GgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(json, "json")?;
        let mut value: serde_json::Value = serde_json::from_str(text).map_err(GgmError::from)?;
        if let Some(inner) = value.get_mut("instance") {
            value = inner.take();
        }
        let inner = JointDistribution::from_json(&value.to_string())?;
        *out = Box::into_raw(Box::new(GgmInstance { inner }));
        Ok(GgmStatus::Ok)
    })
}

/// Seeded random target with exponential weights.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_random(len: usize, vocab: usize, seed: u64, out: *mut *mut GgmInstance) -> GgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = JointDistribution::random(len, vocab, seed)?;
        *out = Box::into_raw(Box::new(GgmInstance { inner }));
        Ok(GgmStatus::Ok)
    })
}

/// # Safety
/// `instance` must be null or a handle from this library that was not freed yet.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_free(instance: *mut GgmInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Writes `V^L`.
///
/// # Safety
/// `instance` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_num_states(instance: *const GgmInstance, out: *mut usize) -> GgmStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = instance.inner.num_states();
        Ok(GgmStatus::Ok)
    })
}

/// Copies the probability table (row-major, position 0 most significant).
///
/// # Safety
/// `instance` must be a live handle; `probs` must be valid for `capacity` doubles.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_probs(instance: *const GgmInstance, probs: *mut f64, capacity: usize) -> GgmStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        let src = instance.inner.probs();
        out_slice(probs, capacity, src.len(), "probs")?.copy_from_slice(src);
        Ok(GgmStatus::Ok)
    })
}

/// Total variation distance between two tables of the same shape.
///
/// # Safety
/// Both handles must be live; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_instance_tv(a: *const GgmInstance, b: *const GgmInstance, out: *mut f64) -> GgmStatus {
    guard(|| {
        let a = a.as_ref().ok_or_else(|| null("a"))?;
        let b = b.as_ref().ok_or_else(|| null("b"))?;
        *out.as_mut().ok_or_else(|| null("out"))? = tv_distance(&a.inner, &b.inner)?;
        Ok(GgmStatus::Ok)
    })
}

fn make_sampler(
    denoiser: Box<dyn Denoiser>,
    target: Option<JointDistribution>,
    len: usize,
    horizon: usize,
    stay_prob: f64,
    seed: u64,
) -> Result<GgmSampler, Failure> {
    let noise = NoiseSequence::constant(NoiseDistribution::uniform(denoiser.vocab_size(), stay_prob)?);
    Ok(GgmSampler {
        denoiser,
        target,
        schedule: ScanSchedule::identity(len, horizon)?,
        noise,
        config: SamplerConfig::default(),
        root: RngStream::new(seed),
        next_chain: 0,
    })
}

/// Sampler driven by the exact oracle of `instance`, with the identity scan,
/// uniform token noise and stay probability `stay_prob`. The instance is copied.
///
/// # Safety
/// `instance` must be a live handle; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_new_oracle(
    instance: *const GgmInstance,
    horizon: usize,
    stay_prob: f64,
    seed: u64,
    out: *mut *mut GgmSampler,
) -> GgmStatus {
    guard(|| {
        let instance = instance.as_ref().ok_or_else(|| null("instance"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let target = instance.inner.clone();
        let len = target.len();
        let noise = NoiseSequence::constant(NoiseDistribution::uniform(target.vocab_size(), stay_prob)?);
        let oracle = ExactOracle::new(&target, &ScanSchedule::identity(len, horizon)?, &noise)?;
        let sampler = make_sampler(Box::new(oracle), Some(target), len, horizon, stay_prob, seed)?;
        *out = Box::into_raw(Box::new(sampler));
        Ok(GgmStatus::Ok)
    })
}

/// Sampler driven by a trained model file's JSON text. `horizon = 0` uses the
/// horizon the model was trained with.
///
/// # Safety
/// `model_json` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_new_model(
    model_json: *const c_char,
    horizon: usize,
    stay_prob: f64,
    seed: u64,
    out: *mut *mut GgmSampler,
) -> GgmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let model = load_model(str_arg(model_json, "model_json")?)?;
        let (len, trained) = match &model {
            LoadedModel::Tabular(m) => (m.len(), m.horizon()),
            LoadedModel::Logistic(m) => (m.len(), m.horizon()),
        };
        let horizon = if horizon == 0 { trained } else { horizon };
        let sampler = make_sampler(Box::new(model), None, len, horizon, stay_prob, seed)?;
        *out = Box::into_raw(Box::new(sampler));
        Ok(GgmStatus::Ok)
    })
}

/// # Safety
/// `sampler` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_free(sampler: *mut GgmSampler) {
    if !sampler.is_null() {
        drop(Box::from_raw(sampler));
    }
}

/// Sets top-p truncation and temperature for later draws.
///
/// # Safety
/// `sampler` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_configure(sampler: *mut GgmSampler, top_p: f64, temperature: f64) -> GgmStatus {
    guard(|| {
        let sampler = sampler.as_mut().ok_or_else(|| null("sampler"))?;
        let config = SamplerConfig { top_p, temperature, ..sampler.config };
        config.validate()?;
        sampler.config = config;
        Ok(GgmStatus::Ok)
    })
}

unsafe fn draw(sampler: *mut GgmSampler, prompt: Prompt, tokens: *mut u32, capacity: usize) -> Result<GgmStatus, Failure> {
    let sampler = sampler.as_mut().ok_or_else(|| null("sampler"))?;
    let len = sampler.schedule.len();
    let out = out_slice(tokens, capacity, len, "tokens")?;
    let mut rng = sampler.root.substream(sampler.next_chain);
    let x = conditional_sample(&sampler.denoiser, &sampler.schedule, &sampler.noise, &sampler.config, &prompt, &mut rng)?;
    sampler.next_chain += 1;
    out.copy_from_slice(x.as_slice());
    Ok(GgmStatus::Ok)
}

/// Draws the next chain's sequence into `tokens`. Chain `k` of a sampler
/// seeded with `s` matches sample `k` of `ggm sample --seed s`.
///
/// # Safety
/// `sampler` must be a live handle; `tokens` must be valid for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_sample(sampler: *mut GgmSampler, tokens: *mut u32, capacity: usize) -> GgmStatus {
    guard(|| draw(sampler, Prompt::empty(), tokens, capacity))
}

/// Like [`ggm_sampler_sample`] with `positions[k]` held at `values[k]`.
///
/// # Safety
/// `positions` and `values` must be valid for `count` elements; otherwise as above.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_infill(
    sampler: *mut GgmSampler,
    positions: *const usize,
    values: *const u32,
    count: usize,
    tokens: *mut u32,
    capacity: usize,
) -> GgmStatus {
    guard(|| {
        let positions = slice_arg(positions, count, "positions")?.to_vec();
        let values = slice_arg(values, count, "values")?.to_vec();
        draw(sampler, Prompt::new(positions, values)?, tokens, capacity)
    })
}

/// Exact propagation from `Π(·|X)^⊗L`; writes the TV to the target and returns
/// `CertificationFailed` when it exceeds `delta`. `target` may be null for
/// oracle samplers, which use their own instance.
///
/// # Safety
/// `sampler` must be a live handle, `target` null or live, `tv` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_sampler_certify(
    sampler: *const GgmSampler,
    target: *const GgmInstance,
    delta: f64,
    tv: *mut f64,
) -> GgmStatus {
    guard(|| {
        let sampler = sampler.as_ref().ok_or_else(|| null("sampler"))?;
        let tv = tv.as_mut().ok_or_else(|| null("tv"))?;
        let target = match (target.as_ref(), &sampler.target) {
            (Some(t), _) => &t.inner,
            (None, Some(t)) => t,
            (None, None) => return Err(null("target")),
        };
        let horizon = sampler.schedule.horizon();
        let init = initial_distribution(&sampler.noise, horizon, sampler.schedule.len(), &Prompt::empty())?;
        let neutral = SamplerConfig { top_p: 1.0, temperature: 1.0, ..sampler.config };
        let p_hat = reverse_propagate_exact(&sampler.denoiser, &sampler.schedule, &sampler.noise, &neutral, &init)?;
        *tv = tv_distance(&p_hat, target)?;
        Ok(if *tv <= delta { GgmStatus::Ok } else { GgmStatus::CertificationFailed })
    })
}

/// `⌈L·ln(L/δ)/ln(1/(1−p))⌉`, floored at zero.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_theorem1_min_steps(len: usize, p: f64, delta: f64, out: *mut usize) -> GgmStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = theorem1_min_steps(len, p, delta)?;
        Ok(GgmStatus::Ok)
    })
}

/// `min(1, L·(1−ε)^⌊T/L⌋)`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn ggm_lemma1_bound(len: usize, eps: f64, horizon: usize, out: *mut f64) -> GgmStatus {
    guard(|| {
        *out.as_mut().ok_or_else(|| null("out"))? = lemma1_bound(len, eps, horizon)?;
        Ok(GgmStatus::Ok)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message() -> String {
        LAST_ERROR.with(|e| e.borrow().clone())
    }

    #[test]
    fn panics_become_a_status() {
        let status = guard(|| panic!("boom"));
        assert_eq!(status, GgmStatus::Panic);
        assert_eq!(message(), "panic: boom");
        assert_eq!(guard(|| Ok(GgmStatus::Ok)), GgmStatus::Ok);
        assert_eq!(message(), "");
    }

    #[test]
    fn errors_map_to_codes() {
        assert_eq!(status_of(&GgmError::InvalidConfig("x".into())), GgmStatus::InvalidConfig);
        assert_eq!(status_of(&GgmError::Degenerate { step: 3 }), GgmStatus::Degenerate);
        assert_eq!(status_of(&GgmError::ShapeMismatch("x".into())), GgmStatus::ShapeMismatch);
        let failure: Failure = GgmError::NumericGuard("nan".into()).into();
        assert_eq!(failure.0, GgmStatus::Numeric);
    }

    #[test]
    fn error_message_truncates() {
        set_error("abcdef");
        let mut buf = [1 as c_char; 4];
        let full = unsafe { ggm_last_error_message(buf.as_mut_ptr(), buf.len()) };
        assert_eq!(full, 6);
        assert_eq!(unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap(), "abc");
    }
}
