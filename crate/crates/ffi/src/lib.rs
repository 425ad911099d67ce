//! C ABI over the slnet pipeline.
//!
//! Every fallible call returns an [`SlnetStatus`]; on failure the message is
//! available from [`slnet_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases each with its `_free` function.
//! Panics never cross the boundary; they surface as `SlnetStatus::Panic`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use slnet::data::{read_sequence, Detection, SceneLabel, SequenceRecord};
use slnet::eval::{evaluate, EvalSequence};
use slnet::pipeline::{self, Detector, PipelineConfig, SceneChoice};
use slnet::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Checkpoint = 5,
    Io = 6,
    Shape = 7,
    SceneMismatch = 8,
    Numeric = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlnetScene {
    Static = 0,
    Dynamic = 1,
    /// Sequence without a scene label.
    Unknown = 2,
}

/// Scene selection passed to the detector.
pub const SLNET_CHOICE_AUTO: u32 = 0;
pub const SLNET_CHOICE_STATIC: u32 = 1;
pub const SLNET_CHOICE_DYNAMIC: u32 = 2;

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlnetDetection {
    pub frame_index: u32,
    pub class_id: u32,
    pub range_idx: u32,
    pub azimuth_idx: u32,
    pub confidence: f32,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlnetMetrics {
    /// Mean precision over the configured OLS thresholds, in [0, 1].
    pub ap: f64,
    /// Mean recall over the configured OLS thresholds, in [0, 1].
    pub ar: f64,
    pub num_ground_truth: u64,
    pub num_detections: u64,
}

pub struct SlnetConfig {
    inner: PipelineConfig,
}

pub struct SlnetSequence {
    record: SequenceRecord,
}

pub struct SlnetDetector {
    inner: Detector,
}

pub struct SlnetDetections {
    items: Vec<Detection>,
    scene: SceneLabel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SlnetStatus {
    match e {
        Error::Io { .. } => SlnetStatus::Io,
        Error::Shape(_) => SlnetStatus::Shape,
        Error::Format(_) | Error::Data(_) | Error::OutOfBounds(_) => SlnetStatus::Data,
        Error::InvalidArgument(_) => SlnetStatus::InvalidArgument,
        Error::SceneMismatch(_) => SlnetStatus::SceneMismatch,
        Error::Config(_) => SlnetStatus::Config,
        Error::Checkpoint(_) | Error::StageMismatch { .. } => SlnetStatus::Checkpoint,
        Error::NonFinite(_) => SlnetStatus::Numeric,
    }
}

struct Fail(SlnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SlnetStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlnetStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            SlnetStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(SlnetStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn obj<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn obj_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn choice(v: u32) -> Result<SceneChoice, Fail> {
    match v {
        SLNET_CHOICE_AUTO => Ok(SceneChoice::Auto),
        SLNET_CHOICE_STATIC => Ok(SceneChoice::Fixed(SceneLabel::Static)),
        SLNET_CHOICE_DYNAMIC => Ok(SceneChoice::Fixed(SceneLabel::Dynamic)),
        other => Err(Fail(SlnetStatus::InvalidArgument, format!("unknown scene choice {other}"))),
    }
}

fn scene_code(s: Option<SceneLabel>) -> SlnetScene {
    match s {
        Some(SceneLabel::Static) => SlnetScene::Static,
        Some(SceneLabel::Dynamic) => SlnetScene::Dynamic,
        None => SlnetScene::Unknown,
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn slnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the most recent failure on this thread, or NULL.
///
/// The pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn slnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Built-in desk-scale configuration.
///
/// # Safety
/// `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_default(out: *mut *mut SlnetConfig) -> SlnetStatus {
    guard(|| put(out, SlnetConfig { inner: PipelineConfig::default() }))
}

/// Parse and validate a TOML configuration file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_load(path: *const c_char, out: *mut *mut SlnetConfig) -> SlnetStatus {
    guard(|| {
        let p = PathBuf::from(str_arg(path, "path")?);
        put(out, SlnetConfig { inner: PipelineConfig::load(&p)? })
    })
}

/// Parse and validate configuration text.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_from_toml(text: *const c_char, out: *mut *mut SlnetConfig) -> SlnetStatus {
    guard(|| put(out, SlnetConfig { inner: PipelineConfig::from_toml_str(str_arg(text, "text")?)? }))
}

/// # Safety
/// `cfg` must come from a `slnet_config_*` constructor.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_set_seed(cfg: *mut SlnetConfig, seed: u64) -> SlnetStatus {
    guard(|| {
        obj_mut(cfg, "cfg")?.inner.seed = seed;
        Ok(())
    })
}

/// Replace the dataset root and/or output directory; NULL keeps a value.
///
/// # Safety
/// `cfg` must be a live handle; non-NULL strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_set_paths(
    cfg: *mut SlnetConfig,
    dataset_root: *const c_char,
    output_dir: *const c_char,
) -> SlnetStatus {
    guard(|| {
        let c = obj_mut(cfg, "cfg")?;
        if !dataset_root.is_null() {
            c.inner.dataset_root = PathBuf::from(str_arg(dataset_root, "dataset_root")?);
        }
        if !output_dir.is_null() {
            c.inner.output_dir = PathBuf::from(str_arg(output_dir, "output_dir")?);
        }
        Ok(())
    })
}

/// # Safety
/// `cfg` must be NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn slnet_config_free(cfg: *mut SlnetConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Synthesize the configured dataset under its root.
///
/// # Safety
/// `cfg` must be a live handle; `num_sequences` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn slnet_gen_data(cfg: *const SlnetConfig, num_sequences: *mut usize) -> SlnetStatus {
    guard(|| {
        let m = pipeline::cmd_gen_data(&obj(cfg, "cfg")?.inner)?;
        if !num_sequences.is_null() {
            *num_sequences = m.sequences.len();
        }
        Ok(())
    })
}

/// Run universal training, both fine-tunes and the classifier, writing
/// checkpoints under the output directory.
///
/// # Safety
/// `cfg` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slnet_train(cfg: *const SlnetConfig) -> SlnetStatus {
    guard(|| {
        pipeline::cmd_train(&obj(cfg, "cfg")?.inner)?;
        Ok(())
    })
}

/// Read a sequence directory (frames, metadata, optional annotations).
///
/// # Safety
/// `dir` must be NUL-terminated; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_sequence_open(dir: *const c_char, out: *mut *mut SlnetSequence) -> SlnetStatus {
    guard(|| {
        let d = PathBuf::from(str_arg(dir, "dir")?);
        put(out, SlnetSequence { record: read_sequence(&d)? })
    })
}

/// Any output pointer may be NULL.
///
/// # Safety
/// `seq` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn slnet_sequence_info(
    seq: *const SlnetSequence,
    num_frames: *mut usize,
    grid_size: *mut usize,
    scene: *mut SlnetScene,
) -> SlnetStatus {
    guard(|| {
        let r = &obj(seq, "seq")?.record;
        if !num_frames.is_null() {
            *num_frames = r.meta.num_frames;
        }
        if !grid_size.is_null() {
            *grid_size = r.meta.grid_size;
        }
        if !scene.is_null() {
            *scene = scene_code(r.meta.scene);
        }
        Ok(())
    })
}

/// # Safety
/// `seq` must be NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn slnet_sequence_free(seq: *mut SlnetSequence) {
    if !seq.is_null() {
        drop(Box::from_raw(seq));
    }
}

/// Load the scene classifier (needed for `SLNET_CHOICE_AUTO`); detector
/// branches load on first use.
///
/// # Safety
/// `cfg` must be a live handle; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_detector_open(
    cfg: *const SlnetConfig,
    scene_choice: u32,
    out: *mut *mut SlnetDetector,
) -> SlnetStatus {
    guard(|| {
        let c = obj(cfg, "cfg")?;
        put(out, SlnetDetector { inner: Detector::open(&c.inner, choice(scene_choice)?)? })
    })
}

/// Detect objects in a sequence through the scene switch.
///
/// With `postprocess == 0` the raw L-NMS peaks are returned instead of the
/// scene-constrained detections.
///
/// # Safety
/// `det` and `seq` must be live handles; `out` must be valid for writing a pointer.
#[no_mangle]
pub unsafe extern "C" fn slnet_detector_run(
    det: *mut SlnetDetector,
    seq: *const SlnetSequence,
    scene_choice: u32,
    postprocess: i32,
    out: *mut *mut SlnetDetections,
) -> SlnetStatus {
    guard(|| {
        let d = obj_mut(det, "det")?;
        let s = obj(seq, "seq")?;
        let inf = d.inner.run(&s.record.sequence, choice(scene_choice)?)?;
        let items = if postprocess != 0 { inf.detected.constrained } else { inf.detected.peaks };
        put(out, SlnetDetections { items, scene: inf.scene })
    })
}

/// # Safety
/// `det` must be NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn slnet_detector_free(det: *mut SlnetDetector) {
    if !det.is_null() {
        drop(Box::from_raw(det));
    }
}

/// Number of detections; 0 for NULL.
///
/// # Safety
/// `dets` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn slnet_detections_len(dets: *const SlnetDetections) -> usize {
    dets.as_ref().map_or(0, |d| d.items.len())
}

/// Scene whose branch produced the detections.
///
/// # Safety
/// `dets` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slnet_detections_scene(dets: *const SlnetDetections, out: *mut SlnetScene) -> SlnetStatus {
    guard(|| {
        let d = obj(dets, "dets")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = scene_code(Some(d.scene));
        Ok(())
    })
}

/// Copy up to `capacity` detections into `buf`, sorted by frame, then
/// descending confidence.
///
/// # Safety
/// `dets` must be a live handle; `buf` must hold `capacity` elements;
/// `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slnet_detections_copy(
    dets: *const SlnetDetections,
    buf: *mut SlnetDetection,
    capacity: usize,
    written: *mut usize,
) -> SlnetStatus {
    guard(|| {
        let d = obj(dets, "dets")?;
        if written.is_null() {
            return Err(null("written"));
        }
        let n = d.items.len().min(capacity);
        if n > 0 && buf.is_null() {
            return Err(null("buf"));
        }
        for (i, x) in d.items.iter().take(n).enumerate() {
            *buf.add(i) = SlnetDetection {
                frame_index: x.frame_index as u32,
                class_id: x.class_id as u32,
                range_idx: x.range_idx as u32,
                azimuth_idx: x.azimuth_idx as u32,
                confidence: x.confidence,
            };
        }
        *written = n;
        Ok(())
    })
}

/// # Safety
/// `dets` must be NULL or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn slnet_detections_free(dets: *mut SlnetDetections) {
    if !dets.is_null() {
        drop(Box::from_raw(dets));
    }
}

/// Score detections against the sequence's annotations.
///
/// # Safety
/// All handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn slnet_evaluate(
    cfg: *const SlnetConfig,
    seq: *const SlnetSequence,
    dets: *const SlnetDetections,
    out: *mut SlnetMetrics,
) -> SlnetStatus {
    guard(|| {
        let c = &obj(cfg, "cfg")?.inner;
        let r = &obj(seq, "seq")?.record;
        let d = obj(dets, "dets")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ground_truth = r
            .annotations
            .clone()
            .ok_or_else(|| Error::Data(format!("{} has no annotations", r.meta.sequence_id)))?;
        let scene = r
            .meta
            .scene
            .ok_or_else(|| Error::Data(format!("{} has no scene label", r.meta.sequence_id)))?;
        let es = EvalSequence {
            sequence_id: r.meta.sequence_id.clone(),
            scene,
            num_frames: r.meta.num_frames,
            detections: d.items.clone(),
            ground_truth,
        };
        let rep = evaluate(&[es], &c.eval_thresholds, &c.class_names, &c.polar_grid()?, &c.ols_params()?)?;
        *out = SlnetMetrics {
            ap: rep.overall.ap,
            ar: rep.overall.ar,
            num_ground_truth: rep.overall.num_ground_truth as u64,
            num_detections: rep.overall.num_detections as u64,
        };
        Ok(())
    })
}
