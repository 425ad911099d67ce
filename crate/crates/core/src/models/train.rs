//! Two-stage detector training, classifier training and inference.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::{build, ArchSpec};
use super::checkpoint::{ModelCheckpoint, Stage};
use crate::data::{ConfMap, RadarSnippet, SceneLabel};
use crate::error::{Error, Result};
use crate::nn::{adam_step, cross_entropy, mse_loss, Graph, LrSchedule, Mode, OptimState, BN_MOMENTUM};
use crate::rng;
use crate::scenemix::{apply_policy, AugmentPolicy, MixSample, ScenePool};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    pub epochs_universal: usize,
    pub epochs_finetune: usize,
    pub epochs_classifier: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// `None` selects [`LrSchedule::for_stage`] over each stage's steps.
    pub schedule: Option<LrSchedule>,
    pub augment: AugmentPolicy,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            epochs_universal: 50,
            epochs_finetune: 30,
            epochs_classifier: 30,
            batch_size: 4,
            lr: 1e-4,
            schedule: None,
            augment: AugmentPolicy::default(),
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_universal == 0 || self.epochs_classifier == 0 {
            return Err(Error::Config("epoch counts must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        self.augment.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
}

/// A snippet with its scene label, for classifier training.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSnippet {
    pub snippet: RadarSnippet,
    pub scene: SceneLabel,
}

#[derive(Clone, Debug)]
pub struct ClassifierOutcome {
    pub checkpoint: ModelCheckpoint,
    pub history: Vec<EpochRecord>,
    /// Accuracy on the held-out set; `None` when it is empty.
    pub val_accuracy: Option<f64>,
}

fn stage_salt(stage: Stage) -> u64 {
    match stage {
        Stage::Universal => 1,
        Stage::FineTunedStatic => 2,
        Stage::FineTunedDynamic => 3,
        Stage::Classifier => 4,
    }
}

fn stack_snippets<'a>(items: impl Iterator<Item = &'a RadarSnippet>) -> Result<Tensor<f32>> {
    let refs: Vec<&Tensor<f32>> = items.map(|s| &s.data).collect();
    Tensor::stack(&refs)
}

fn shuffled(n: usize, seed: u64, salt: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut r = rng::stream(seed, rng::TAG_SHUFFLE, (salt << 32) | epoch as u64);
    order.shuffle(&mut r);
    order
}

fn schedule_for(plan: &TrainPlan, total_steps: u64) -> LrSchedule {
    plan.schedule
        .clone()
        .unwrap_or_else(|| LrSchedule::for_stage(total_steps))
}

/// Eval-mode mean squared error over `samples`, batched like training.
pub fn evaluate_loss(graph: &Graph<f32>, samples: &[MixSample], batch_size: usize) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let x = stack_snippets(chunk.iter().map(|s| &s.snippet))?;
        let y = Tensor::stack(&chunk.iter().map(|s| s.confmap.data()).collect::<Vec<_>>())?;
        let pred = graph.infer(&x)?;
        let (l, _) = mse_loss(&pred, &y)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

fn fit_detector(
    graph: &mut Graph<f32>,
    train: &[MixSample],
    val: &[MixSample],
    epochs: usize,
    plan: &TrainPlan,
    stage: Stage,
    keep_best: bool,
) -> Result<Vec<EpochRecord>> {
    let salt = stage_salt(stage);
    let bs = plan.batch_size;
    let steps_per_epoch = train.len().div_ceil(bs) as u64;
    let schedule = schedule_for(plan, steps_per_epoch * epochs as u64);
    let mut opt = OptimState::new(&graph.params(), plan.lr);
    let pool = ScenePool::new(train);
    let policy = AugmentPolicy {
        rng_seed: rng::derive_seed(plan.seed, rng::TAG_AUGMENT, plan.augment.rng_seed),
        ..plan.augment.clone()
    };
    let eval_set = if val.is_empty() { train } else { val };
    let mut history = Vec::with_capacity(epochs);
    let mut best = if keep_best {
        Some((evaluate_loss(graph, eval_set, bs)?, None::<usize>, graph.clone()))
    } else {
        None
    };
    let mut step = 0u64;
    for epoch in 0..epochs {
        let order = shuffled(train.len(), plan.seed, salt, epoch);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for (b, idx) in order.chunks(bs).enumerate() {
            let mut batch = Vec::with_capacity(idx.len());
            for (j, &i) in idx.iter().enumerate() {
                if policy.is_disabled() {
                    batch.push(train[i].clone());
                } else {
                    let key = (salt << 48) ^ ((epoch as u64) << 24) ^ (b * bs + j) as u64;
                    batch.push(apply_policy(&train[i], &pool, &policy, key)?.0);
                }
            }
            let x = stack_snippets(batch.iter().map(|s| &s.snippet))?;
            let y = Tensor::stack(&batch.iter().map(|s| s.confmap.data()).collect::<Vec<_>>())?;
            let (pred, trace) = graph.forward(&x, Mode::Train)?;
            let (loss, grad) = mse_loss(&pred, &y)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("{stage} loss at epoch {epoch}")));
            }
            let (_, grads) = graph.backward(&trace, &grad)?;
            graph.update_running_stats(&trace, BN_MOMENTUM);
            lr = schedule.lr_at(step, plan.lr);
            adam_step(&mut opt, &mut graph.params_mut(), &Graph::flatten_grads(grads), lr)?;
            step += 1;
            loss_sum += loss * idx.len() as f64;
        }
        let val_loss = evaluate_loss(graph, eval_set, bs)?;
        let train_loss = loss_sum / train.len() as f64;
        log::info!("{stage} epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        history.push(EpochRecord {
            stage,
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        if let Some(b) = best.as_mut().filter(|b| val_loss < b.0) {
            *b = (val_loss, Some(epoch), graph.clone());
        }
    }
    if let Some((loss, epoch, g)) = best {
        match epoch {
            Some(e) => log::info!("{stage} keeps epoch {e} (val {loss:.6})"),
            None => log::info!("{stage} keeps the starting parameters (val {loss:.6})"),
        }
        *graph = g;
    }
    Ok(history)
}

fn check_detector_data(train: &[MixSample], arch: &ArchSpec) -> Result<()> {
    let first = train
        .first()
        .ok_or_else(|| Error::Data("training set is empty".into()))?;
    let d = first.snippet.data.dims();
    if d[1] != arch.window || d[2] != arch.grid_size || first.confmap.num_classes() != arch.num_classes {
        return Err(Error::Shape(format!(
            "samples are (2, {}, {}, {}) with {} classes, architecture expects window {} grid {} classes {}",
            d[1],
            d[2],
            d[3],
            first.confmap.num_classes(),
            arch.window,
            arch.grid_size,
            arch.num_classes
        )));
    }
    Ok(())
}

/// Stage one: a single detector trained on every scene.
pub fn train_universal(
    train: &[MixSample],
    val: &[MixSample],
    plan: &TrainPlan,
    arch: &ArchSpec,
) -> Result<TrainOutcome> {
    plan.validate()?;
    arch.validate()?;
    if !arch.variant.is_detector() {
        return Err(Error::Config(format!("{} is not a detector", arch.variant)));
    }
    check_detector_data(train, arch)?;
    for scene in SceneLabel::ALL {
        if !train.iter().any(|s| s.scene == scene) {
            return Err(Error::Data(format!("universal training needs {scene} samples")));
        }
    }
    let mut graph = build::<f32>(arch, plan.seed)?;
    let history = fit_detector(&mut graph, train, val, plan.epochs_universal, plan, Stage::Universal, false)?;
    Ok(TrainOutcome {
        checkpoint: ModelCheckpoint::new(arch.clone(), Stage::Universal, graph),
        history,
    })
}

/// Stage two: continue from the universal model on one scene only. The
/// branch keeps the parameters with the lowest validation loss seen, the
/// starting point included.
pub fn finetune(
    base: &ModelCheckpoint,
    train: &[MixSample],
    val: &[MixSample],
    plan: &TrainPlan,
    scene: SceneLabel,
) -> Result<TrainOutcome> {
    plan.validate()?;
    base.ensure_stage(&[Stage::Universal])?;
    check_detector_data(train, &base.arch)?;
    if let Some(s) = train.iter().chain(val).find(|s| s.scene != scene) {
        return Err(Error::SceneMismatch(format!(
            "{scene} fine-tuning received a {} sample",
            s.scene
        )));
    }
    let stage = Stage::fine_tuned(scene);
    let mut graph = base.graph.clone();
    let history = fit_detector(&mut graph, train, val, plan.epochs_finetune, plan, stage, true)?;
    let mut checkpoint = ModelCheckpoint::new(base.arch.clone(), stage, graph);
    checkpoint.fingerprint = base.fingerprint.clone();
    Ok(TrainOutcome { checkpoint, history })
}

fn classifier_logits(graph: &Graph<f32>, items: &[&RadarSnippet], batch: usize) -> Result<Vec<[f32; 2]>> {
    let mut out = Vec::with_capacity(items.len());
    for chunk in items.chunks(batch.max(1)) {
        let x = stack_snippets(chunk.iter().copied())?;
        let y = graph.infer(&x)?;
        out.extend(y.data().chunks(2).map(|r| [r[0], r[1]]));
    }
    Ok(out)
}

fn label_of(logits: [f32; 2]) -> SceneLabel {
    if logits[1] > logits[0] {
        SceneLabel::Dynamic
    } else {
        SceneLabel::Static
    }
}

/// Cross-entropy training of the scene classifier.
pub fn train_classifier(
    train: &[LabeledSnippet],
    val: &[LabeledSnippet],
    plan: &TrainPlan,
    arch: &ArchSpec,
) -> Result<ClassifierOutcome> {
    plan.validate()?;
    arch.validate()?;
    if arch.variant.is_detector() {
        return Err(Error::Config("classifier training needs the classifier architecture".into()));
    }
    for scene in SceneLabel::ALL {
        if !train.iter().any(|s| s.scene == scene) {
            return Err(Error::Data(format!("classifier training needs {scene} snippets")));
        }
    }
    let stage = Stage::Classifier;
    let salt = stage_salt(stage);
    let bs = plan.batch_size;
    let epochs = plan.epochs_classifier;
    let schedule = schedule_for(plan, train.len().div_ceil(bs) as u64 * epochs as u64);
    let mut graph = build::<f32>(arch, plan.seed)?;
    let mut opt = OptimState::new(&graph.params(), plan.lr);
    let eval_set = if val.is_empty() { train } else { val };
    let mut history = Vec::with_capacity(epochs);
    let mut step = 0u64;
    for epoch in 0..epochs {
        let order = shuffled(train.len(), plan.seed, salt, epoch);
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        for idx in order.chunks(bs) {
            let x = stack_snippets(idx.iter().map(|&i| &train[i].snippet))?;
            let labels: Vec<usize> = idx.iter().map(|&i| train[i].scene.class_index()).collect();
            let (logits, trace) = graph.forward(&x, Mode::Train)?;
            let (loss, grad) = cross_entropy(&logits, &labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("classifier loss at epoch {epoch}")));
            }
            let (_, grads) = graph.backward(&trace, &grad)?;
            graph.update_running_stats(&trace, BN_MOMENTUM);
            lr = schedule.lr_at(step, plan.lr);
            adam_step(&mut opt, &mut graph.params_mut(), &Graph::flatten_grads(grads), lr)?;
            step += 1;
            loss_sum += loss * idx.len() as f64;
        }
        let refs: Vec<&RadarSnippet> = eval_set.iter().map(|s| &s.snippet).collect();
        let logits = classifier_logits(&graph, &refs, bs)?;
        let labels: Vec<usize> = eval_set.iter().map(|s| s.scene.class_index()).collect();
        let flat: Vec<f32> = logits.iter().flatten().copied().collect();
        let (val_loss, _) = cross_entropy(&Tensor::new(vec![logits.len(), 2], flat)?, &labels)?;
        history.push(EpochRecord {
            stage,
            epoch,
            train_loss: loss_sum / train.len() as f64,
            val_loss,
            lr,
        });
    }
    let val_accuracy = if val.is_empty() {
        None
    } else {
        let refs: Vec<&RadarSnippet> = val.iter().map(|s| &s.snippet).collect();
        let logits = classifier_logits(&graph, &refs, bs)?;
        let hits = logits
            .iter()
            .zip(val)
            .filter(|(l, s)| label_of(**l) == s.scene)
            .count();
        Some(hits as f64 / val.len() as f64)
    };
    Ok(ClassifierOutcome {
        checkpoint: ModelCheckpoint::new(arch.clone(), stage, graph),
        history,
        val_accuracy,
    })
}

fn check_snippet(ckpt: &ModelCheckpoint, s: &RadarSnippet) -> Result<()> {
    let d = s.data.dims();
    if d[0] != ckpt.arch.in_channels || d[1] != ckpt.arch.window || d[2] != ckpt.arch.grid_size || d[3] != ckpt.arch.grid_size {
        return Err(Error::Shape(format!(
            "snippet {d:?} does not fit {} (window {}, grid {})",
            ckpt.arch.variant, ckpt.arch.window, ckpt.arch.grid_size
        )));
    }
    Ok(())
}

/// Eval-mode ConfMaps for a batch of snippets.
pub fn predict_confmaps(ckpt: &ModelCheckpoint, snippets: &[&RadarSnippet], batch: usize) -> Result<Vec<ConfMap>> {
    ckpt.ensure_stage(&[Stage::Universal, Stage::FineTunedStatic, Stage::FineTunedDynamic])?;
    let mut out = Vec::with_capacity(snippets.len());
    for chunk in snippets.chunks(batch.max(1)) {
        for s in chunk {
            check_snippet(ckpt, s)?;
        }
        let y = ckpt.graph.infer(&stack_snippets(chunk.iter().copied())?)?;
        for i in 0..chunk.len() {
            let t = y.index_axis0(i).map(|v| v.clamp(0.0, 1.0));
            out.push(ConfMap::new(t)?);
        }
    }
    Ok(out)
}

pub fn predict_confmap(ckpt: &ModelCheckpoint, snippet: &RadarSnippet) -> Result<ConfMap> {
    Ok(predict_confmaps(ckpt, &[snippet], 1)?.remove(0))
}

/// Per-snippet logits `[static, dynamic]`.
pub fn scene_logits(ckpt: &ModelCheckpoint, snippets: &[&RadarSnippet], batch: usize) -> Result<Vec<[f32; 2]>> {
    ckpt.ensure_stage(&[Stage::Classifier])?;
    for s in snippets {
        check_snippet(ckpt, s)?;
    }
    classifier_logits(&ckpt.graph, snippets, batch)
}

pub fn classify_scene(ckpt: &ModelCheckpoint, snippet: &RadarSnippet) -> Result<SceneLabel> {
    Ok(label_of(scene_logits(ckpt, &[snippet], 1)?[0]))
}

/// Majority vote over snippets; a tie goes to the larger summed soft-max
/// probability, then to Static.
pub fn classify_sequence(ckpt: &ModelCheckpoint, snippets: &[&RadarSnippet], batch: usize) -> Result<SceneLabel> {
    if snippets.is_empty() {
        return Err(Error::Data("cannot classify an empty sequence".into()));
    }
    let logits = scene_logits(ckpt, snippets, batch)?;
    let dynamic_votes = logits.iter().filter(|l| label_of(**l) == SceneLabel::Dynamic).count();
    let static_votes = logits.len() - dynamic_votes;
    if dynamic_votes != static_votes {
        return Ok(if dynamic_votes > static_votes {
            SceneLabel::Dynamic
        } else {
            SceneLabel::Static
        });
    }
    let p_dynamic: f64 = logits
        .iter()
        .map(|l| 1.0 / (1.0 + ((l[0] - l[1]) as f64).exp()))
        .sum();
    Ok(if p_dynamic > logits.len() as f64 / 2.0 {
        SceneLabel::Dynamic
    } else {
        SceneLabel::Static
    })
}
