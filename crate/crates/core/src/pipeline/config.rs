use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::DEFAULT_SIGMAS;
use crate::data::{default_class_names, SceneLabel};
use crate::error::{Error, Result};
use crate::eval::ols_thresholds;
use crate::geom::{OlsParams, PolarGrid};
use crate::models::{ArchSpec, TrainPlan, Variant};
use crate::postproc::PostprocPolicy;
use crate::synth::NUM_CLASSES;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub range_min: f64,
    pub range_max: f64,
    pub half_fov_deg: f64,
    pub grid_size: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            range_min: 1.0,
            range_max: 25.0,
            half_fov_deg: 60.0,
            grid_size: 32,
        }
    }
}

impl GridConfig {
    pub fn polar(&self) -> Result<PolarGrid> {
        PolarGrid::new(self.range_min, self.range_max, self.half_fov_deg.to_radians(), self.grid_size)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub static_sequences: usize,
    pub dynamic_sequences: usize,
    /// Trailing sequences of each scene held out for validation.
    pub val_static: usize,
    pub val_dynamic: usize,
    pub frames_per_sequence: usize,
    pub objects_per_sequence: usize,
    pub window: usize,
    pub stride: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            static_sequences: 6,
            dynamic_sequences: 6,
            val_static: 2,
            val_dynamic: 2,
            frames_per_sequence: 24,
            objects_per_sequence: 3,
            window: 8,
            stride: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub variant: Variant,
    #[serde(default = "default_width")]
    pub width_multiplier: f64,
}

fn default_width() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenePolicies {
    #[serde(rename = "static")]
    pub static_policy: PostprocPolicy,
    #[serde(rename = "dynamic")]
    pub dynamic_policy: PostprocPolicy,
}

impl Default for ScenePolicies {
    fn default() -> Self {
        let desk = |scene| PostprocPolicy {
            peak_threshold: 0.3,
            border_margin: 3,
            ..PostprocPolicy::for_scene(scene)
        };
        ScenePolicies {
            static_policy: desk(SceneLabel::Static),
            dynamic_policy: desk(SceneLabel::Dynamic),
        }
    }
}

impl ScenePolicies {
    pub fn for_scene(&self, scene: SceneLabel) -> &PostprocPolicy {
        match scene {
            SceneLabel::Static => &self.static_policy,
            SceneLabel::Dynamic => &self.dynamic_policy,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferConfig {
    pub stride: usize,
    pub batch_size: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        InferConfig { stride: 4, batch_size: 4 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset_root: PathBuf,
    pub output_dir: PathBuf,
    pub grid: GridConfig,
    pub ols_kappa: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub class_names: Vec<String>,
    pub data: DataConfig,
    pub models: Vec<ModelEntry>,
    pub classifier: ModelEntry,
    pub train: TrainPlan,
    pub postproc: ScenePolicies,
    pub eval_thresholds: Vec<f64>,
    pub infer: InferConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            dataset_root: PathBuf::from("data"),
            output_dir: PathBuf::from("runs"),
            grid: GridConfig::default(),
            ols_kappa: vec![0.1, 0.14, 0.2],
            sigmas: DEFAULT_SIGMAS.iter().map(|s| s / 2.0).collect(),
            class_names: default_class_names(),
            data: DataConfig::default(),
            models: [Variant::C21D, Variant::R18D, Variant::R18UC]
                .into_iter()
                .map(|variant| ModelEntry { variant, width_multiplier: 0.25 })
                .collect(),
            classifier: ModelEntry { variant: Variant::SceneClassifier, width_multiplier: 0.125 },
            train: TrainPlan {
                epochs_universal: 30,
                epochs_finetune: 15,
                epochs_classifier: 10,
                lr: 5e-3,
                ..TrainPlan::default()
            },
            postproc: ScenePolicies::default(),
            eval_thresholds: ols_thresholds(),
            infer: InferConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn polar_grid(&self) -> Result<PolarGrid> {
        self.grid.polar()
    }

    pub fn ols_params(&self) -> Result<OlsParams> {
        OlsParams::new(self.ols_kappa.clone())
    }

    pub fn arch(&self, entry: &ModelEntry) -> ArchSpec {
        ArchSpec::new(entry.variant, entry.width_multiplier, self.data.window, self.grid.grid_size)
    }

    pub fn detector_archs(&self) -> Vec<ArchSpec> {
        self.models.iter().map(|m| self.arch(m)).collect()
    }

    pub fn classifier_arch(&self) -> ArchSpec {
        self.arch(&self.classifier)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        self.polar_grid().map_err(|e| Error::Config(e.to_string()))?;
        self.ols_params()?;
        if self.ols_kappa.len() < NUM_CLASSES {
            return cfg(format!("ols_kappa needs {NUM_CLASSES} entries, got {}", self.ols_kappa.len()));
        }
        if self.sigmas.len() != NUM_CLASSES || self.sigmas.iter().any(|s| !(*s > 0.0)) {
            return cfg(format!("sigmas must hold {NUM_CLASSES} positive values, got {:?}", self.sigmas));
        }
        if self.class_names.len() != NUM_CLASSES {
            return cfg(format!("class_names must hold {NUM_CLASSES} names"));
        }
        let d = &self.data;
        if d.window == 0 || d.stride == 0 || d.window > d.frames_per_sequence {
            return cfg(format!(
                "window {} and stride {} must be positive with window <= frames_per_sequence {}",
                d.window, d.stride, d.frames_per_sequence
            ));
        }
        if d.val_static > d.static_sequences || d.val_dynamic > d.dynamic_sequences {
            return cfg("validation counts exceed sequence counts".into());
        }
        if self.infer.stride == 0 || self.infer.stride > d.window || self.infer.batch_size == 0 {
            return cfg(format!("infer.stride must lie in [1, window], got {}", self.infer.stride));
        }
        if self.models.is_empty() {
            return cfg("at least one detector model is required".into());
        }
        let mut seen = HashSet::new();
        for m in &self.models {
            if !m.variant.is_detector() {
                return cfg(format!("{} is not a detector", m.variant));
            }
            if !seen.insert(m.variant) {
                return cfg(format!("model {} listed twice", m.variant));
            }
            self.arch(m).validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.classifier.variant != Variant::SceneClassifier {
            return cfg("classifier.variant must be \"classifier\"".into());
        }
        self.classifier_arch().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        self.train.augment.validate()?;
        for (scene, p) in [
            (SceneLabel::Static, &self.postproc.static_policy),
            (SceneLabel::Dynamic, &self.postproc.dynamic_policy),
        ] {
            p.validate()?;
            if p.scene != scene {
                return cfg(format!("postproc.{scene} declares scene {}", p.scene));
            }
        }
        if self.eval_thresholds.is_empty() || self.eval_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return cfg(format!("eval_thresholds must lie in (0, 1], got {:?}", self.eval_thresholds));
        }
        Ok(())
    }
}
