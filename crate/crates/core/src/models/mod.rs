//! Detector architectures, the scene classifier, checkpoints and training.

pub mod arch;
pub mod checkpoint;
pub mod train;

pub use arch::{build, ArchSpec, Variant};
pub use checkpoint::{config_fingerprint, load_checkpoint, save_checkpoint, LoadedCheckpoint, ModelCheckpoint, Stage};
pub use train::{
    classify_scene, classify_sequence, evaluate_loss, finetune, predict_confmap, predict_confmaps, scene_logits,
    train_classifier, train_universal, ClassifierOutcome, EpochRecord, LabeledSnippet, TrainOutcome, TrainPlan,
};
