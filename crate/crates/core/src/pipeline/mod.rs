//! The batch workflow behind the `slnet` binary: data generation, two-stage
//! training, scene routing, ensembling, post-processing, scoring and
//! rendering.

mod config;

pub use config::{DataConfig, GridConfig, InferConfig, ModelEntry, PipelineConfig, ScenePolicies};

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::encode_confmap;
use crate::data::{
    read_detections_csv, read_sequence, slice_snippets, window_annotations, write_atomic,
    write_detections_csv, write_sequence, ConfMap, Detection, ObjectAnnotation, RadarSequence, SceneLabel,
};
use crate::error::{Error, Result};
use crate::eval::{compare_reports, compare_table_csv, compare_table_text, evaluate, EvalReport, EvalSequence};
use crate::models::{
    classify_sequence, config_fingerprint, finetune, load_checkpoint, predict_confmaps, save_checkpoint,
    train_classifier, train_universal, ArchSpec, EpochRecord, LabeledSnippet, ModelCheckpoint, Stage, TrainPlan,
};
use crate::postproc::{apply_constraints, ensemble_confmaps, lnms_confmap, merge_windows};
use crate::render::{confmap_ppm, ramap_pgm};
use crate::rng;
use crate::scenemix::MixSample;
use crate::synth::{generate_sequence, ScenarioConfig};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRAIN_LOG_FILE: &str = "train_log.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const CLASSIFIER_FILE: &str = "classifier.slck";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(Error::Config(format!("unknown split {s:?}, expected train or val"))),
        }
    }
}

/// How `infer` chooses the detector branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneChoice {
    Auto,
    Fixed(SceneLabel),
}

impl std::str::FromStr for SceneChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(SceneChoice::Auto),
            _ => s
                .parse()
                .map(SceneChoice::Fixed)
                .map_err(|_| Error::Config(format!("unknown scene {s:?}, expected static, dynamic or auto"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusEntry {
    pub sequence: RadarSequence,
    pub annotations: Vec<ObjectAnnotation>,
    pub split: Split,
}

impl CorpusEntry {
    pub fn scene(&self) -> SceneLabel {
        self.sequence.scene().expect("generated sequences carry a scene")
    }
}

const TAG_DATASET: u64 = 0x5e9;

/// Synthesize the configured corpus. The trailing `val_*` sequences of each
/// scene form the validation split.
pub fn generate_corpus(cfg: &PipelineConfig) -> Result<Vec<CorpusEntry>> {
    let d = &cfg.data;
    let mut out = Vec::new();
    for (scene, count, val) in [
        (SceneLabel::Static, d.static_sequences, d.val_static),
        (SceneLabel::Dynamic, d.dynamic_sequences, d.val_dynamic),
    ] {
        for k in 0..count {
            let split = if k + val >= count { Split::Val } else { Split::Train };
            let seed = rng::derive_seed(cfg.seed, TAG_DATASET, ((scene.class_index() as u64) << 32) | k as u64);
            let mut sc = ScenarioConfig::new(seed, scene, cfg.grid.grid_size, d.frames_per_sequence);
            sc.sequence_id = format!("{}-{k:03}", scene.as_str());
            sc.num_objects = d.objects_per_sequence;
            let (sequence, annotations) = generate_sequence(&sc)?;
            out.push(CorpusEntry { sequence, annotations, split });
        }
    }
    Ok(out)
}

/// Training pairs for one sequence: every window with its ConfMap target.
pub fn mix_samples(seq: &RadarSequence, annotations: &[ObjectAnnotation], cfg: &PipelineConfig) -> Result<Vec<MixSample>> {
    let scene = seq
        .scene()
        .ok_or_else(|| Error::Data(format!("{} has no scene label", seq.sequence_id())))?;
    let w = cfg.data.window;
    slice_snippets(seq, w, cfg.data.stride)?
        .into_iter()
        .map(|snip| {
            let anns = window_annotations(annotations, snip.start_frame, w);
            let target = encode_confmap(&anns, w, cfg.grid.grid_size, &cfg.sigmas)?;
            MixSample::new(snip, target, scene)
        })
        .collect()
}

pub fn labeled_snippets(seq: &RadarSequence, cfg: &PipelineConfig) -> Result<Vec<LabeledSnippet>> {
    let scene = seq
        .scene()
        .ok_or_else(|| Error::Data(format!("{} has no scene label", seq.sequence_id())))?;
    Ok(slice_snippets(seq, cfg.data.window, cfg.data.stride)?
        .into_iter()
        .map(|snippet| LabeledSnippet { snippet, scene })
        .collect())
}

pub fn collect_samples<'a>(entries: impl IntoIterator<Item = &'a CorpusEntry>, cfg: &PipelineConfig) -> Result<Vec<MixSample>> {
    let mut out = Vec::new();
    for e in entries {
        out.extend(mix_samples(&e.sequence, &e.annotations, cfg)?);
    }
    Ok(out)
}

/// The training plan with the pipeline seed applied.
pub fn effective_plan(cfg: &PipelineConfig) -> TrainPlan {
    TrainPlan { seed: cfg.seed, ..cfg.train.clone() }
}

/// Fingerprint of everything that determines a universal checkpoint.
pub fn universal_fingerprint(cfg: &PipelineConfig, arch: &ArchSpec) -> String {
    config_fingerprint(&serde_json::json!({
        "arch": arch,
        "plan": effective_plan(cfg),
        "data": cfg.data,
        "grid": cfg.grid,
        "sigmas": cfg.sigmas,
    }))
}

pub fn checkpoint_path(cfg: &PipelineConfig, arch: &ArchSpec, stage: Stage) -> PathBuf {
    let dir = cfg.output_dir.join(CHECKPOINT_DIR);
    match stage {
        Stage::Classifier => dir.join(CLASSIFIER_FILE),
        _ => dir.join(format!("{}_{}.slck", arch.variant, stage.as_str())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub sequence_id: String,
    pub scene: SceneLabel,
    pub split: Split,
    /// Relative to the dataset root.
    pub path: PathBuf,
    pub num_frames: usize,
    pub num_annotations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub grid_size: usize,
    pub sequences: Vec<DatasetEntry>,
}

impl DatasetManifest {
    pub fn load(root: &Path) -> Result<Self> {
        let p = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
    }

    pub fn split_dirs(&self, root: &Path, split: Split) -> Vec<PathBuf> {
        self.sequences.iter().filter(|e| e.split == split).map(|e| root.join(&e.path)).collect()
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn cmd_gen_data(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let root = &cfg.dataset_root;
    create_dir(root)?;
    let mut sequences = Vec::new();
    for e in generate_corpus(cfg)? {
        let rel = PathBuf::from(e.split.as_str()).join(e.sequence.sequence_id());
        write_sequence(&e.sequence, Some(&e.annotations), &cfg.class_names, &root.join(&rel))?;
        sequences.push(DatasetEntry {
            sequence_id: e.sequence.sequence_id().to_string(),
            scene: e.scene(),
            split: e.split,
            path: rel,
            num_frames: e.sequence.len(),
            num_annotations: e.annotations.len(),
        });
    }
    let manifest = DatasetManifest { seed: cfg.seed, grid_size: cfg.grid.grid_size, sequences };
    write_json(&root.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Sequences of one split with their annotations.
pub fn load_split(cfg: &PipelineConfig, split: Split) -> Result<Vec<CorpusEntry>> {
    let manifest = DatasetManifest::load(&cfg.dataset_root)?;
    manifest
        .split_dirs(&cfg.dataset_root, split)
        .into_iter()
        .map(|dir| {
            let rec = read_sequence(&dir)?;
            if rec.sequence.grid_size() != Some(cfg.grid.grid_size) {
                return Err(Error::Data(format!(
                    "{} has grid {:?}, config expects {}",
                    dir.display(),
                    rec.sequence.grid_size(),
                    cfg.grid.grid_size
                )));
            }
            let annotations = rec
                .annotations
                .ok_or_else(|| Error::Data(format!("{} has no annotations", dir.display())))?;
            Ok(CorpusEntry { sequence: rec.sequence, annotations, split })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LogRow {
    pub model: String,
    pub stage: String,
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

fn log_rows(model: &str, history: &[EpochRecord]) -> Vec<LogRow> {
    history
        .iter()
        .map(|h| LogRow {
            model: model.to_string(),
            stage: h.stage.as_str().to_string(),
            epoch: h.epoch,
            lr: h.lr,
            train_loss: h.train_loss,
            val_loss: h.val_loss,
        })
        .collect()
}

/// The three detector checkpoints of one architecture.
#[derive(Clone, Debug)]
pub struct DetectorSet {
    pub universal: ModelCheckpoint,
    pub static_branch: ModelCheckpoint,
    pub dynamic_branch: ModelCheckpoint,
}

impl DetectorSet {
    pub fn branch(&self, scene: SceneLabel) -> &ModelCheckpoint {
        match scene {
            SceneLabel::Static => &self.static_branch,
            SceneLabel::Dynamic => &self.dynamic_branch,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainedModels {
    pub detectors: Vec<DetectorSet>,
    pub classifier: ModelCheckpoint,
    pub log: Vec<LogRow>,
    /// Architectures whose universal stage was loaded instead of trained.
    pub resumed: Vec<String>,
}

fn split_by_scene<T: Clone>(items: &[T], scene_of: impl Fn(&T) -> SceneLabel, scene: SceneLabel) -> Vec<T> {
    items.iter().filter(|s| scene_of(s) == scene).cloned().collect()
}

/// Train every configured detector through both stages, then the classifier.
/// `resume` may supply a universal checkpoint for an architecture; `sink`
/// receives each checkpoint as soon as it exists.
pub fn train_models(
    cfg: &PipelineConfig,
    train: &[CorpusEntry],
    val: &[CorpusEntry],
    mut resume: impl FnMut(&ArchSpec, &str) -> Option<ModelCheckpoint>,
    mut sink: impl FnMut(&ModelCheckpoint) -> Result<()>,
) -> Result<TrainedModels> {
    cfg.validate()?;
    let plan = effective_plan(cfg);
    let train_s = collect_samples(train, cfg)?;
    let val_s = collect_samples(val, cfg)?;
    for scene in SceneLabel::ALL {
        if !train_s.iter().any(|s| s.scene == scene) {
            return Err(Error::Data(format!("training data has no {scene} sequences")));
        }
    }
    let mut log = Vec::new();
    let mut detectors = Vec::new();
    let mut resumed = Vec::new();
    for arch in cfg.detector_archs() {
        let name = arch.variant.to_string();
        let fp = universal_fingerprint(cfg, &arch);
        let universal = match resume(&arch, &fp) {
            Some(ck) => {
                resumed.push(name.clone());
                ck
            }
            None => {
                let out = train_universal(&train_s, &val_s, &plan, &arch)?;
                log.extend(log_rows(&name, &out.history));
                let mut ck = out.checkpoint;
                ck.fingerprint = fp.clone();
                sink(&ck)?;
                ck
            }
        };
        let mut branches = Vec::new();
        for scene in SceneLabel::ALL {
            let tr = split_by_scene(&train_s, |s| s.scene, scene);
            let va = split_by_scene(&val_s, |s| s.scene, scene);
            let out = finetune(&universal, &tr, &va, &plan, scene)?;
            log.extend(log_rows(&name, &out.history));
            sink(&out.checkpoint)?;
            branches.push(out.checkpoint);
        }
        let dynamic_branch = branches.pop().expect("two branches");
        let static_branch = branches.pop().expect("two branches");
        detectors.push(DetectorSet { universal, static_branch, dynamic_branch });
    }
    let mut tr_l = Vec::new();
    for e in train {
        tr_l.extend(labeled_snippets(&e.sequence, cfg)?);
    }
    let mut va_l = Vec::new();
    for e in val {
        va_l.extend(labeled_snippets(&e.sequence, cfg)?);
    }
    let arch = cfg.classifier_arch();
    let out = train_classifier(&tr_l, &va_l, &plan, &arch)?;
    log.extend(log_rows(&arch.variant.to_string(), &out.history));
    let mut classifier = out.checkpoint;
    classifier.fingerprint = config_fingerprint(&serde_json::json!({ "arch": arch, "plan": plan, "data": cfg.data }));
    sink(&classifier)?;
    Ok(TrainedModels { detectors, classifier, log, resumed })
}

pub fn train_log_csv(rows: &[LogRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(["model", "stage", "epoch", "lr", "train_loss", "val_loss"])
            .map_err(|e| Error::Format(e.to_string()))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainSummary {
    pub checkpoints: Vec<PathBuf>,
    pub resumed: Vec<String>,
    pub train_log: PathBuf,
}

pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let train = load_split(cfg, Split::Train)?;
    let val = load_split(cfg, Split::Val)?;
    let ck_dir = cfg.output_dir.join(CHECKPOINT_DIR);
    create_dir(&ck_dir)?;
    let mut written = Vec::new();
    let resume = |arch: &ArchSpec, fp: &str| {
        let path = checkpoint_path(cfg, arch, Stage::Universal);
        if !path.exists() {
            return None;
        }
        match load_checkpoint(&path, Some(fp)) {
            Ok(l) if l.warnings.is_empty() && l.checkpoint.stage == Stage::Universal && l.checkpoint.arch == *arch => {
                log::info!("resuming from {}", path.display());
                Some(l.checkpoint)
            }
            Ok(_) => {
                log::warn!("{} was trained under a different config; retraining", path.display());
                None
            }
            Err(e) => {
                log::warn!("ignoring unreadable {}: {e}", path.display());
                None
            }
        }
    };
    let models = train_models(cfg, &train, &val, resume, |ck| {
        let path = checkpoint_path(cfg, &ck.arch, ck.stage);
        save_checkpoint(ck, &path)?;
        written.push(path);
        Ok(())
    })?;
    let train_log = cfg.output_dir.join(TRAIN_LOG_FILE);
    write_atomic(&train_log, &train_log_csv(&models.log)?)?;
    let mut checkpoints: Vec<PathBuf> = cfg
        .detector_archs()
        .iter()
        .flat_map(|a| {
            [Stage::Universal, Stage::FineTunedStatic, Stage::FineTunedDynamic].map(|s| checkpoint_path(cfg, a, s))
        })
        .collect();
    checkpoints.push(checkpoint_path(cfg, &cfg.classifier_arch(), Stage::Classifier));
    debug_assert!(written.iter().all(|p| checkpoints.contains(p)));
    Ok(TrainSummary { checkpoints, resumed: models.resumed, train_log })
}

/// Outcome of detection on one sequence.
#[derive(Clone, Debug)]
pub struct Detected {
    /// Per-frame ensembled ConfMap.
    pub confmap: ConfMap,
    /// L-NMS peaks before the scene constraints.
    pub peaks: Vec<Detection>,
    /// Peaks after the constraints of the chosen scene.
    pub constrained: Vec<Detection>,
}

/// Window the sequence, run every branch, average across branches and
/// overlapping windows, then decode.
pub fn detect_sequence(
    branches: &[&ModelCheckpoint],
    seq: &RadarSequence,
    scene: SceneLabel,
    cfg: &PipelineConfig,
) -> Result<Detected> {
    if branches.is_empty() {
        return Err(Error::Checkpoint("no detector branches supplied".into()));
    }
    let grid = cfg.polar_grid()?;
    let params = cfg.ols_params()?;
    let policy = cfg.postproc.for_scene(scene);
    let snippets = slice_snippets(seq, cfg.data.window, cfg.infer.stride)?;
    let refs: Vec<_> = snippets.iter().collect();
    let per_branch = branches
        .iter()
        .map(|b| predict_confmaps(b, &refs, cfg.infer.batch_size))
        .collect::<Result<Vec<_>>>()?;
    let windows = (0..snippets.len())
        .map(|i| {
            let maps: Vec<&ConfMap> = per_branch.iter().map(|p| &p[i]).collect();
            Ok((snippets[i].start_frame, ensemble_confmaps(&maps)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let confmap = merge_windows(&windows, seq.len())?;
    let frames = (0..confmap.frames())
        .map(|t| lnms_confmap(&confmap, t, t, policy, &grid, &params))
        .collect::<Result<Vec<_>>>()?;
    let mut peaks: Vec<Detection> = frames.iter().flatten().copied().collect();
    crate::data::sort_detections(&mut peaks);
    let constrained = apply_constraints(frames, scene, policy, &grid, &params);
    Ok(Detected { confmap, peaks, constrained })
}

/// Scene by majority vote of the classifier over the inference windows.
pub fn classify(classifier: &ModelCheckpoint, seq: &RadarSequence, cfg: &PipelineConfig) -> Result<SceneLabel> {
    let snippets = slice_snippets(seq, cfg.data.window, cfg.infer.stride)?;
    let refs: Vec<_> = snippets.iter().collect();
    classify_sequence(classifier, &refs, cfg.infer.batch_size)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintAudit {
    pub raw_peaks: usize,
    pub removed: usize,
    pub added: usize,
}

fn key(d: &Detection) -> (usize, usize, usize, usize) {
    (d.frame_index, d.class_id, d.range_idx, d.azimuth_idx)
}

pub fn audit(peaks: &[Detection], constrained: &[Detection]) -> ConstraintAudit {
    let a: BTreeSet<_> = peaks.iter().map(key).collect();
    let b: BTreeSet<_> = constrained.iter().map(key).collect();
    ConstraintAudit { raw_peaks: peaks.len(), removed: a.difference(&b).count(), added: b.difference(&a).count() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferManifest {
    pub sequence_id: String,
    pub sequence_dir: PathBuf,
    /// Branch actually used.
    pub scene: SceneLabel,
    /// `"classifier"` or `"override"`.
    pub scene_source: String,
    /// Classifier vote when a classifier was run.
    pub predicted_scene: Option<SceneLabel>,
    pub models: Vec<String>,
    pub postprocess: bool,
    pub detections_file: PathBuf,
    pub num_detections: usize,
    pub audit: ConstraintAudit,
}

pub const INFER_SUFFIX: &str = ".infer.json";
pub const DETECTIONS_SUFFIX: &str = ".detections.csv";

fn load_stage(path: &Path, stage: Stage) -> Result<ModelCheckpoint> {
    if !path.exists() {
        return Err(Error::Checkpoint(format!("missing checkpoint {}", path.display())));
    }
    let l = load_checkpoint(path, None)?;
    l.checkpoint.ensure_stage(&[stage])?;
    Ok(l.checkpoint)
}

/// Loaded checkpoints plus the scene switch in front of the detector branches.
pub struct Detector {
    cfg: PipelineConfig,
    classifier: Option<ModelCheckpoint>,
    branches: HashMap<SceneLabel, Vec<ModelCheckpoint>>,
}

/// Result of routing one sequence through the scene switch.
#[derive(Clone, Debug)]
pub struct Inference {
    pub scene: SceneLabel,
    /// `"classifier"` or `"override"`.
    pub scene_source: &'static str,
    pub predicted_scene: Option<SceneLabel>,
    pub detected: Detected,
}

impl Detector {
    /// Loads the classifier when `scene` is `Auto` (or when its checkpoint
    /// exists); detector branches load on first use.
    pub fn open(cfg: &PipelineConfig, scene: SceneChoice) -> Result<Self> {
        cfg.validate()?;
        let path = checkpoint_path(cfg, &cfg.classifier_arch(), Stage::Classifier);
        let classifier = match scene {
            SceneChoice::Auto => Some(load_stage(&path, Stage::Classifier)?),
            SceneChoice::Fixed(_) if path.exists() => Some(load_stage(&path, Stage::Classifier)?),
            SceneChoice::Fixed(_) => None,
        };
        Ok(Detector { cfg: cfg.clone(), classifier, branches: HashMap::new() })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn model_names(&self) -> Vec<String> {
        self.cfg.models.iter().map(|m| m.variant.to_string()).collect()
    }

    fn branches(&mut self, scene: SceneLabel) -> Result<&[ModelCheckpoint]> {
        if !self.branches.contains_key(&scene) {
            let stage = Stage::fine_tuned(scene);
            let loaded = self
                .cfg
                .detector_archs()
                .iter()
                .map(|a| load_stage(&checkpoint_path(&self.cfg, a, stage), stage))
                .collect::<Result<Vec<_>>>()?;
            self.branches.insert(scene, loaded);
        }
        Ok(&self.branches[&scene])
    }

    pub fn classify(&self, seq: &RadarSequence) -> Result<Option<SceneLabel>> {
        self.classifier.as_ref().map(|c| classify(c, seq, &self.cfg)).transpose()
    }

    pub fn run(&mut self, seq: &RadarSequence, scene: SceneChoice) -> Result<Inference> {
        if seq.grid_size() != Some(self.cfg.grid.grid_size) {
            return Err(Error::Data(format!(
                "{} does not match grid {}",
                seq.sequence_id(),
                self.cfg.grid.grid_size
            )));
        }
        let predicted = self.classify(seq)?;
        let (used, scene_source) = match (scene, predicted) {
            (SceneChoice::Fixed(s), _) => (s, "override"),
            (SceneChoice::Auto, Some(p)) => (p, "classifier"),
            (SceneChoice::Auto, None) => {
                return Err(Error::Checkpoint("automatic scene selection needs the classifier".into()))
            }
        };
        let cfg = self.cfg.clone();
        let branches = self.branches(used)?;
        let refs: Vec<&ModelCheckpoint> = branches.iter().collect();
        let detected = detect_sequence(&refs, seq, used, &cfg)?;
        Ok(Inference { scene: used, scene_source, predicted_scene: predicted, detected })
    }
}

pub fn cmd_infer(
    cfg: &PipelineConfig,
    inputs: &[PathBuf],
    scene: SceneChoice,
    postprocess: bool,
    out_dir: &Path,
) -> Result<Vec<InferManifest>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Config("no input sequences given".into()));
    }
    let mut detector = Detector::open(cfg, scene)?;
    let mut records = Vec::new();
    for dir in inputs {
        let rec = read_sequence(dir)?;
        if rec.sequence.grid_size() != Some(cfg.grid.grid_size) {
            return Err(Error::Data(format!("{} does not match grid {}", dir.display(), cfg.grid.grid_size)));
        }
        records.push((dir.clone(), rec));
    }
    create_dir(out_dir)?;
    let mut manifests = Vec::new();
    for (dir, rec) in records {
        let seq = &rec.sequence;
        let inf = detector.run(seq, scene)?;
        let det = &inf.detected;
        let dets = if postprocess { &det.constrained } else { &det.peaks };
        let file = PathBuf::from(format!("{}{DETECTIONS_SUFFIX}", seq.sequence_id()));
        write_detections_csv(&out_dir.join(&file), dets)?;
        let m = InferManifest {
            sequence_id: seq.sequence_id().to_string(),
            sequence_dir: dir.clone(),
            scene: inf.scene,
            scene_source: inf.scene_source.into(),
            predicted_scene: inf.predicted_scene,
            models: detector.model_names(),
            postprocess,
            detections_file: file,
            num_detections: dets.len(),
            audit: audit(&det.peaks, &det.constrained),
        };
        write_json(&out_dir.join(format!("{}{INFER_SUFFIX}", seq.sequence_id())), &m)?;
        manifests.push(m);
    }
    Ok(manifests)
}

/// Score every inference manifest in `det_dir` against its sequence's
/// annotations and true scene.
pub fn load_eval_sequences(det_dir: &Path) -> Result<Vec<EvalSequence>> {
    let mut names: Vec<PathBuf> = fs::read_dir(det_dir)
        .map_err(|e| Error::io(det_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(INFER_SUFFIX))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::Data(format!("no *{INFER_SUFFIX} files in {}", det_dir.display())));
    }
    names
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let m: InferManifest =
                serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
            let rec = read_sequence(&m.sequence_dir)?;
            let ground_truth = rec
                .annotations
                .ok_or_else(|| Error::Data(format!("{} has no annotation file", m.sequence_dir.display())))?;
            let scene = rec
                .meta
                .scene
                .ok_or_else(|| Error::Data(format!("{} has no scene label", m.sequence_dir.display())))?;
            Ok(EvalSequence {
                sequence_id: m.sequence_id,
                scene,
                num_frames: rec.meta.num_frames,
                detections: read_detections_csv(&det_dir.join(&m.detections_file))?,
                ground_truth,
            })
        })
        .collect()
}

pub const REPORT_JSON: &str = "eval_report.json";
pub const REPORT_CSV: &str = "eval_report.csv";

pub fn cmd_eval(cfg: &PipelineConfig, det_dir: &Path, out_dir: &Path) -> Result<EvalReport> {
    cfg.validate()?;
    let seqs = load_eval_sequences(det_dir)?;
    let report = evaluate(&seqs, &cfg.eval_thresholds, &cfg.class_names, &cfg.polar_grid()?, &cfg.ols_params()?)?;
    create_dir(out_dir)?;
    write_atomic(&out_dir.join(REPORT_JSON), report.to_json()?.as_bytes())?;
    write_atomic(&out_dir.join(REPORT_CSV), report.to_csv().as_bytes())?;
    Ok(report)
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    EvalReport::from_json(&text)
}

/// Ablation table of two reports, written as `compare.txt` and `compare.csv`.
pub fn cmd_compare(baseline: &Path, candidate: &Path, out_dir: &Path) -> Result<String> {
    let a = load_report(baseline)?;
    let b = load_report(candidate)?;
    let rows = compare_reports(&a, &b);
    let label = |p: &Path| {
        p.parent()
            .and_then(|d| d.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| p.display().to_string())
    };
    let text = compare_table_text(&rows, &label(baseline), &label(candidate));
    create_dir(out_dir)?;
    write_atomic(&out_dir.join("compare.txt"), text.as_bytes())?;
    write_atomic(&out_dir.join("compare.csv"), compare_table_csv(&rows).as_bytes())?;
    Ok(text)
}

/// RAMap PGMs for a frame range, plus ground-truth ConfMap PPMs with
/// detections overlaid when annotations exist.
pub fn cmd_render(
    cfg: &PipelineConfig,
    input: &Path,
    first: usize,
    count: Option<usize>,
    detections: Option<&Path>,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let rec = read_sequence(input)?;
    let n = rec.sequence.len();
    let end = count.map_or(n, |c| (first + c).min(n));
    if first >= end {
        return Err(Error::InvalidArgument(format!("frame range starts at {first} but the sequence has {n} frames")));
    }
    let dets = detections.map(read_detections_csv).transpose()?.unwrap_or_default();
    let g = rec.meta.grid_size;
    let confmap = match &rec.annotations {
        Some(a) => Some(encode_confmap(a, n, g, &cfg.sigmas)?),
        None => None,
    };
    create_dir(out_dir)?;
    let mut written = Vec::new();
    for t in first..end {
        let p = out_dir.join(format!("ramap_{t:04}.pgm"));
        write_atomic(&p, &ramap_pgm(&rec.sequence.frames()[t]))?;
        written.push(p);
        if let Some(m) = &confmap {
            let p = out_dir.join(format!("confmap_{t:04}.ppm"));
            write_atomic(&p, &confmap_ppm(m, t, &dets))?;
            written.push(p);
        }
    }
    Ok(written)
}
