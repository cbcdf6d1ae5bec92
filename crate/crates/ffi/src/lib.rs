//! C interface to adadrug.
//!
//! Every fallible call returns an [`AdaStatus`]; on failure the message is
//! available from [`ada_last_error`] on the same thread until the next
//! failing call. Handles are opaque and must be released with their
//! matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use adadrug::checkpoint::{load_checkpoint, save_checkpoint};
use adadrug::eval::{self, Reference};
use adadrug::model::ModelBundle;
use adadrug::numerics::Matrix;
use adadrug::synth::{self, SynthBundle, SynthConfig};
use adadrug::train::{self, TrainConfig, Variant};
use adadrug::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Data = 4,
    Config = 5,
    Checkpoint = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdaVariant {
    Full = 0,
    Baseline = 1,
    NoMda = 2,
    NoInd = 3,
    NoAwg = 4,
}

impl From<AdaVariant> for Variant {
    fn from(v: AdaVariant) -> Self {
        match v {
            AdaVariant::Full => Variant::Full,
            AdaVariant::Baseline => Variant::Baseline,
            AdaVariant::NoMda => Variant::NoMda,
            AdaVariant::NoInd => Variant::NoInd,
            AdaVariant::NoAwg => Variant::NoAwg,
        }
    }
}

/// Synthetic benchmark parameters.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AdaSynthConfig {
    pub k: usize,
    pub n_per_domain: usize,
    pub n_target: usize,
    pub genes: usize,
    pub signal_dim: usize,
    pub sigma_shift: f64,
    pub sigma_noise: f64,
    pub rho: f64,
    pub seed: u64,
}

impl From<AdaSynthConfig> for SynthConfig {
    fn from(c: AdaSynthConfig) -> Self {
        SynthConfig {
            k: c.k,
            n_per_domain: c.n_per_domain,
            n_target: c.n_target,
            genes: c.genes,
            signal_dim: c.signal_dim,
            sigma_shift: c.sigma_shift,
            sigma_noise: c.sigma_noise,
            rho: c.rho,
            seed: c.seed,
        }
    }
}

/// The subset of training settings exposed over the C interface; the rest
/// keep their library defaults.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AdaTrainOptions {
    pub latent_dim: usize,
    pub ae_hidden: usize,
    pub head_hidden: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub variant: AdaVariant,
}

impl AdaTrainOptions {
    fn config(&self) -> TrainConfig {
        let base = TrainConfig {
            latent_dim: self.latent_dim,
            ae_hidden: self.ae_hidden,
            head_hidden: self.head_hidden,
            batch_size: self.batch_size,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            seed: self.seed,
            ..synth::bench_train_config()
        };
        Variant::from(self.variant).configure(&base)
    }
}

/// Generated synthetic domains.
pub struct AdaSynth {
    inner: SynthBundle,
}

/// A trained model with the configuration it was trained under.
pub struct AdaModel {
    model: ModelBundle,
    config: TrainConfig,
    step: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: AdaStatus, msg: impl Into<String>) -> AdaStatus {
    set_error(msg.into());
    status
}

fn status_of(err: &Error) -> AdaStatus {
    match err {
        Error::Shape { .. } => AdaStatus::Shape,
        Error::Contract(_) => AdaStatus::InvalidArgument,
        Error::Parse { .. } | Error::Data(_) => AdaStatus::Data,
        Error::Config { .. } | Error::Json(_) => AdaStatus::Config,
        Error::Checkpoint { .. } => AdaStatus::Checkpoint,
        Error::Io(_) => AdaStatus::Io,
    }
}

/// Runs `f`, turning library errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), AdaStatus>) -> AdaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AdaStatus::Ok,
        Ok(Err(s)) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(AdaStatus::Panic, format!("panic: {msg}"))
        }
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, AdaStatus>;
}

impl<T> OrStatus<T> for adadrug::Result<T> {
    fn or_status(self) -> Result<T, AdaStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn as_ref<'a, T>(p: *const T, what: &str) -> Result<&'a T, AdaStatus> {
    p.as_ref()
        .ok_or_else(|| fail(AdaStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], AdaStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(AdaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], AdaStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(AdaStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, AdaStatus> {
    if p.is_null() {
        return Err(fail(AdaStatus::NullPointer, "path is null"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(AdaStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn out_ptr<T>(out: *mut *mut T) -> Result<&'static mut *mut T, AdaStatus> {
    out.as_mut()
        .ok_or_else(|| fail(AdaStatus::NullPointer, "out is null"))
}

fn check_len(got: usize, want: usize, what: &str) -> Result<(), AdaStatus> {
    if got != want {
        return Err(fail(
            AdaStatus::Shape,
            format!("{what}: length {got}, expected {want}"),
        ));
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ada_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ada_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn ada_synth_config_default() -> AdaSynthConfig {
    let c = SynthConfig::default();
    AdaSynthConfig {
        k: c.k,
        n_per_domain: c.n_per_domain,
        n_target: c.n_target,
        genes: c.genes,
        signal_dim: c.signal_dim,
        sigma_shift: c.sigma_shift,
        sigma_noise: c.sigma_noise,
        rho: c.rho,
        seed: c.seed,
    }
}

/// Settings used by the synthetic benchmark, full variant.
#[no_mangle]
pub extern "C" fn ada_train_options_default() -> AdaTrainOptions {
    let c = synth::bench_train_config();
    AdaTrainOptions {
        latent_dim: c.latent_dim,
        ae_hidden: c.ae_hidden,
        head_hidden: c.head_hidden,
        batch_size: c.batch_size,
        epochs: c.epochs,
        learning_rate: c.learning_rate,
        seed: c.seed,
        variant: AdaVariant::Full,
    }
}

/// # Safety
/// `cfg` must point to a valid config and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_generate(
    cfg: *const AdaSynthConfig,
    out: *mut *mut AdaSynth,
) -> AdaStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let cfg = as_ref(cfg, "cfg")?;
        let inner = synth::generate(&SynthConfig::from(*cfg)).or_status()?;
        *out = Box::into_raw(Box::new(AdaSynth { inner }));
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a handle from `ada_synth_generate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_free(s: *mut AdaSynth) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of target samples, 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_n_target(s: *const AdaSynth) -> usize {
    s.as_ref()
        .map_or(0, |s| s.inner.bundle.target().n_samples())
}

/// Number of genes, 0 for NULL.
///
/// # Safety
/// `s` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_genes(s: *const AdaSynth) -> usize {
    s.as_ref().map_or(0, |s| s.inner.bundle.target().n_genes())
}

/// Copies the hidden target labels into `out` (length `n_target`).
///
/// # Safety
/// `out` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_target_labels(
    s: *const AdaSynth,
    out: *mut u8,
    len: usize,
) -> AdaStatus {
    guard(|| {
        let s = as_ref(s, "synth")?;
        let labels = s.inner.target_labels();
        check_len(len, labels.len(), "labels")?;
        slice_mut(out, len, "out")?.copy_from_slice(labels);
        Ok(())
    })
}

/// Copies the target expression matrix, row-major, into `out`
/// (length `n_target * genes`).
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ada_synth_target_matrix(
    s: *const AdaSynth,
    out: *mut f64,
    len: usize,
) -> AdaStatus {
    guard(|| {
        let s = as_ref(s, "synth")?;
        let values = s.inner.bundle.target().values().as_slice();
        check_len(len, values.len(), "matrix")?;
        slice_mut(out, len, "out")?.copy_from_slice(values);
        Ok(())
    })
}

/// Trains on the synthetic sources and unlabeled target.
///
/// # Safety
/// Pointers must be valid; `out` receives a new model handle.
#[no_mangle]
pub unsafe extern "C" fn ada_train_synth(
    s: *const AdaSynth,
    opts: *const AdaTrainOptions,
    out: *mut *mut AdaModel,
) -> AdaStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let s = as_ref(s, "synth")?;
        let opts = as_ref(opts, "opts")?;
        let config = opts.config();
        if let Err((field, msg)) = config.validate() {
            return Err(fail(AdaStatus::Config, format!("{field}: {msg}")));
        }
        let bundle = Variant::from(opts.variant)
            .sources(&s.inner.bundle)
            .or_status()?;
        let (model, hist) = train::train(&bundle, &config).or_status()?;
        *out = Box::into_raw(Box::new(AdaModel {
            model,
            config,
            step: hist.final_step,
        }));
        Ok(())
    })
}

/// # Safety
/// `m` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ada_model_free(m: *mut AdaModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Input gene count of the model, 0 for NULL.
///
/// # Safety
/// `m` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ada_model_genes(m: *const AdaModel) -> usize {
    m.as_ref().map_or(0, |m| m.model.genes())
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn ada_model_save(m: *const AdaModel, path: *const c_char) -> AdaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let path = path_arg(path)?;
        save_checkpoint(&m.model, &m.config, m.step, &path).or_status()
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` receives a new handle.
#[no_mangle]
pub unsafe extern "C" fn ada_model_load(path: *const c_char, out: *mut *mut AdaModel) -> AdaStatus {
    guard(|| {
        let out = out_ptr(out)?;
        let path = path_arg(path)?;
        let ck = load_checkpoint(&path).or_status()?;
        *out = Box::into_raw(Box::new(AdaModel {
            model: ck.model,
            config: ck.config,
            step: ck.step,
        }));
        Ok(())
    })
}

/// Scores `rows` target samples given as a row-major `rows × genes` matrix.
/// `refs` (row-major `ref_rows × genes`) supplies the source samples whose
/// weights are averaged at inference; it is required for models trained
/// with the weight generator and may be NULL otherwise.
///
/// # Safety
/// Buffers must hold the stated number of doubles; `out` holds `rows`.
#[no_mangle]
pub unsafe extern "C" fn ada_model_predict(
    m: *const AdaModel,
    x: *const f64,
    rows: usize,
    genes: usize,
    refs: *const f64,
    ref_rows: usize,
    seed: u64,
    out: *mut f64,
) -> AdaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let x = Matrix::from_vec(rows, genes, slice(x, rows * genes, "x")?.to_vec()).or_status()?;
        let sources = if refs.is_null() {
            Vec::new()
        } else {
            vec![Matrix::from_vec(
                ref_rows,
                genes,
                slice(refs, ref_rows * genes, "refs")?.to_vec(),
            )
            .or_status()?]
        };
        let reference = Reference {
            sources: &sources,
            per_domain: eval::DEFAULT_REF_PER_DOMAIN,
            seed,
        };
        let refs_opt = (!sources.is_empty()).then_some(&reference);
        let scores = eval::predict_target(&m.model, &x, refs_opt).or_status()?;
        slice_mut(out, rows, "out")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// Scores the synthetic target, using every source domain as reference,
/// exactly as the benchmark does.
///
/// # Safety
/// `out` must hold `len` doubles, `len` equal to the target size.
#[no_mangle]
pub unsafe extern "C" fn ada_model_predict_synth(
    m: *const AdaModel,
    s: *const AdaSynth,
    out: *mut f64,
    len: usize,
) -> AdaStatus {
    guard(|| {
        let m = as_ref(m, "model")?;
        let s = as_ref(s, "synth")?;
        let bundle = &s.inner.bundle;
        check_len(len, bundle.target().n_samples(), "out")?;
        let refs: Vec<Matrix> = bundle
            .sources()
            .iter()
            .map(|d| d.expr.values().clone())
            .collect();
        let reference = Reference {
            sources: &refs,
            per_domain: eval::DEFAULT_REF_PER_DOMAIN,
            seed: m.config.seed,
        };
        let scores = eval::predict_target(&m.model, bundle.target().values(), Some(&reference))
            .or_status()?;
        slice_mut(out, len, "out")?.copy_from_slice(&scores);
        Ok(())
    })
}

/// # Safety
/// `scores` and `labels` must hold `n` items; `out` one double.
#[no_mangle]
pub unsafe extern "C" fn ada_auroc(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> AdaStatus {
    metric(scores, labels, n, out, eval::auroc)
}

/// # Safety
/// `scores` and `labels` must hold `n` items; `out` one double.
#[no_mangle]
pub unsafe extern "C" fn ada_aupr(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
) -> AdaStatus {
    metric(scores, labels, n, out, eval::aupr)
}

unsafe fn metric(
    scores: *const f64,
    labels: *const u8,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[u8]) -> adadrug::Result<f64>,
) -> AdaStatus {
    guard(|| {
        let out = out
            .as_mut()
            .ok_or_else(|| fail(AdaStatus::NullPointer, "out is null"))?;
        *out = f(slice(scores, n, "scores")?, slice(labels, n, "labels")?).or_status()?;
        Ok(())
    })
}
