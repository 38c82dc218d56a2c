use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::decoders::DecoderConfig;
use crate::error::{Error, Result};
use crate::losses::{KlOrder, LossWeights};
use crate::stereonet::BackboneConfig;
use crate::synthgen::SceneConfig;
use crate::teacher::TeacherConfig;

/// Everything a training or ablation run needs. Parsed from TOML; unknown
/// keys are rejected at every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Seeds weight initialization and data order.
    pub seed: u64,
    pub data: DataConfig,
    pub scene: SceneConfig,
    pub backbone: BackboneConfig,
    pub decoders: DecoderConfig,
    pub teacher: TeacherConfig,
    pub weights: LossWeights,
    pub losses: LossSwitches,
    pub optim: OptimConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: DataConfig::default(),
            scene: SceneConfig::default(),
            backbone: BackboneConfig::default(),
            decoders: DecoderConfig::default(),
            teacher: TeacherConfig::default(),
            weights: LossWeights::default(),
            losses: LossSwitches::default(),
            optim: OptimConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Where samples come from. Without directories, scenes are generated in
/// memory from `[scene]`; validation scenes use `scene.seed + val_seed_offset`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train_dir: Option<PathBuf>,
    pub val_dir: Option<PathBuf>,
    /// Precomputed teacher records aligned with the training set.
    pub teacher_file: Option<PathBuf>,
    pub train_count: usize,
    pub val_count: usize,
    pub val_seed_offset: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train_dir: None,
            val_dir: None,
            teacher_file: None,
            train_count: 2000,
            val_count: 200,
            val_seed_offset: 1_000_000,
        }
    }
}

/// Which auxiliary losses are active.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSwitches {
    pub intra: bool,
    pub cross_soft: bool,
    pub cross_hard: bool,
    pub kl_order: KlOrder,
}

impl Default for LossSwitches {
    fn default() -> Self {
        Self {
            intra: true,
            cross_soft: true,
            cross_hard: true,
            kl_order: KlOrder::ReferenceFirst,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimConfig {
    pub lr: f64,
    pub epochs: usize,
    /// Samples whose gradients are averaged per step.
    pub batch_size: usize,
    /// Fractions of training after which the step size is multiplied by `decay_factor`.
    pub decay_at: Vec<f64>,
    pub decay_factor: f64,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 20,
            batch_size: 4,
            decay_at: vec![0.5, 0.75, 0.9],
            decay_factor: 0.5,
            grad_clip: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Checkpoint and validate every this many steps; 0 only at the end.
    pub eval_every: usize,
    /// Write logs and checkpoints; off for in-memory runs.
    pub write_files: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("runs/default"),
            eval_every: 0,
            write_files: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded.
    pub fn hash(&self) -> String {
        config_hash(&self.to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        self.backbone.validate()?;
        self.decoders.validate(self.backbone.channels)?;
        self.teacher.validate()?;
        self.weights.validate()?;
        let o = &self.optim;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            return Err(Error::Config(format!("optim.lr must be positive, got {}", o.lr)));
        }
        if o.epochs == 0 || o.batch_size == 0 {
            return Err(Error::Config("optim.epochs and optim.batch_size must be positive".into()));
        }
        if o.decay_at.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config("optim.decay_at fractions must lie in [0, 1]".into()));
        }
        if !(o.decay_factor > 0.0 && o.decay_factor <= 1.0) {
            return Err(Error::Config("optim.decay_factor must lie in (0, 1]".into()));
        }
        if !(o.grad_clip >= 0.0) {
            return Err(Error::Config("optim.grad_clip must be >= 0".into()));
        }
        if self.data.train_dir.is_none() && self.data.train_count == 0 {
            return Err(Error::Config("data.train_count must be positive".into()));
        }
        if self.backbone.max_disparity <= self.scene.d_max as usize && self.data.train_dir.is_none() {
            log::warn!(
                "backbone.max_disparity {} does not exceed scene.d_max {}",
                self.backbone.max_disparity,
                self.scene.d_max
            );
        }
        Ok(())
    }

    /// Loss weights after applying the on/off switches.
    pub fn effective_weights(&self) -> LossWeights {
        let on = |flag: bool, w: f64| if flag { w } else { 0.0 };
        LossWeights {
            lambda_intra: on(self.losses.intra, self.weights.lambda_intra),
            lambda_cross_soft: on(self.losses.cross_soft, self.weights.lambda_cross_soft),
            lambda_cross_hard: on(self.losses.cross_hard, self.weights.lambda_cross_hard),
        }
    }

    /// Scaled-down variant used by the smoke tests: 64x64 scenes and a
    /// narrow network.
    pub fn smoke() -> Self {
        Self {
            data: DataConfig {
                train_count: 50,
                val_count: 16,
                ..Default::default()
            },
            scene: SceneConfig {
                height: 64,
                width: 64,
                layers: 4,
                d_min: 0.0,
                d_max: 24.0,
                ..Default::default()
            },
            backbone: BackboneConfig {
                channels: 16,
                blocks: 2,
                stride: 4,
                max_disparity: 32,
                groups: 4,
                agg_channels: 4,
            },
            decoders: DecoderConfig {
                heads: 4,
                ..Default::default()
            },
            optim: OptimConfig {
                lr: 2e-3,
                epochs: 8,
                batch_size: 2,
                ..Default::default()
            },
            output: OutputConfig {
                write_files: false,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
