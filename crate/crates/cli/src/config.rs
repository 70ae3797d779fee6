//! Flat run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use spikefuse::data::GapPolicy;
use spikefuse::encoders::{ImageEncoderConfig, SeriesEncoderConfig};
use spikefuse::fusion::{JointSpaceConfig, Task};
use spikefuse::lif::LifParams;
use spikefuse::model::ModelConfig;
use spikefuse::train::{RegressionLoss, TrainConfig};

use crate::CliError;

pub const SYNTHETIC: &str = "synthetic";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classify,
    Forecast,
}

/// Every key of the config file. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// `"synthetic"` or a CSV path (relative paths resolve against the config file).
    pub data: String,

    // forecasting CSV schema
    pub timestamp_column: String,
    /// Empty means every column except the timestamp.
    pub value_columns: Vec<String>,
    pub target_column: String,
    pub gap_policy: GapPolicy,

    // classification
    pub label_column: String,
    pub classes: usize,

    // synthetic sources
    pub synth_samples: usize,
    pub synth_len: usize,
    pub synth_rows: usize,

    // windowing
    pub lookback: usize,
    pub horizon: usize,
    pub stride: usize,
    pub split: [f64; 3],

    // model
    pub wavelet: bool,
    pub steps: usize,
    pub image_channels: Vec<usize>,
    pub kernel_size: usize,
    pub pool_window: usize,
    pub series_hidden: Vec<usize>,
    pub series_feedback: bool,
    pub joint_width: usize,
    pub head_hidden: usize,
    pub tau: f64,
    pub v_rest: f64,
    pub v_th: f64,
    pub v_reset: f64,
    pub surrogate_slope: f64,
    pub sigma_floor: f64,

    // training
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub patience: usize,
    pub grad_clip: f64,
    pub loss: RegressionLoss,

    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let lif = LifParams::default();
        let train = TrainConfig::default();
        Self {
            task: TaskKind::Classify,
            data: SYNTHETIC.into(),
            timestamp_column: "date".into(),
            value_columns: Vec::new(),
            target_column: "OT".into(),
            gap_policy: GapPolicy::ForwardFill,
            label_column: "label".into(),
            classes: 2,
            synth_samples: 800,
            synth_len: 64,
            synth_rows: 2000,
            lookback: 96,
            horizon: 24,
            stride: 1,
            split: [0.7, 0.15, 0.15],
            wavelet: true,
            steps: 8,
            image_channels: vec![8],
            kernel_size: 3,
            pool_window: 4,
            series_hidden: vec![16],
            series_feedback: true,
            joint_width: 16,
            head_hidden: 16,
            tau: lif.tau,
            v_rest: lif.v_rest,
            v_th: lif.v_th,
            v_reset: lif.v_reset,
            surrogate_slope: lif.surrogate_slope,
            sigma_floor: JointSpaceConfig::default().sigma_floor,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.learning_rate,
            seed: train.seed,
            patience: train.patience,
            grad_clip: train.grad_clip,
            loss: train.regression_loss,
            out: PathBuf::from("runs/default"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))
    }

    /// Reads and parses `path`; a relative `data` path is resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data != SYNTHETIC && Path::new(&cfg.data).is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data = dir.join(&cfg.data).to_string_lossy().into_owned();
            }
        }
        Ok(cfg)
    }

    pub fn is_synthetic(&self) -> bool {
        self.data == SYNTHETIC
    }

    pub fn lif(&self) -> LifParams {
        LifParams {
            tau: self.tau,
            v_rest: self.v_rest,
            v_th: self.v_th,
            v_reset: self.v_reset,
            surrogate_slope: self.surrogate_slope,
        }
    }

    pub fn task_spec(&self) -> Task {
        match self.task {
            TaskKind::Classify => Task::Classification { classes: self.classes },
            TaskKind::Forecast => Task::Regression { horizon: self.horizon },
        }
    }

    pub fn model(&self) -> ModelConfig {
        let lif = self.lif();
        ModelConfig {
            wavelet: self.wavelet,
            steps: self.steps,
            image: ImageEncoderConfig {
                channels: self.image_channels.clone(),
                kernel_size: self.kernel_size,
                pool_window: self.pool_window,
                lif,
            },
            series: SeriesEncoderConfig {
                hidden: self.series_hidden.clone(),
                feedback: self.series_feedback,
                lif,
            },
            joint: JointSpaceConfig {
                joint_width: self.joint_width,
                sigma_floor: self.sigma_floor,
            },
            head_hidden: self.head_hidden,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            seed: self.seed,
            patience: self.patience,
            grad_clip: self.grad_clip,
            regression_loss: self.loss,
        }
    }

    /// Checks everything that does not need the data itself.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, why: &str| Err(CliError::Usage(format!("config key `{key}`: {why}")));
        if self.data.trim().is_empty() {
            return bad("data", "must name a CSV file or \"synthetic\"");
        }
        if self.task == TaskKind::Classify && self.classes < 2 {
            return bad("classes", "must be at least 2");
        }
        if self.is_synthetic() {
            match self.task {
                TaskKind::Classify if self.synth_samples == 0 => return bad("synth_samples", "must be positive"),
                TaskKind::Classify if self.synth_len < 4 => return bad("synth_len", "must be at least 4"),
                TaskKind::Forecast if self.synth_rows == 0 => return bad("synth_rows", "must be positive"),
                _ => {}
            }
        }
        if self.task == TaskKind::Forecast {
            if self.lookback == 0 {
                return bad("lookback", "must be positive");
            }
            if self.horizon == 0 {
                return bad("horizon", "must be positive");
            }
            if self.stride == 0 {
                return bad("stride", "must be positive");
            }
        }
        spikefuse::data::validate_ratios(self.split).map_err(|e| CliError::Usage(format!("config key `split`: {e}")))?;
        if self.split[0] <= 0.0 || self.split[1] <= 0.0 {
            return bad("split", "train and validation shares must be positive");
        }
        if self.image_channels.is_empty() || self.image_channels.contains(&0) {
            return bad("image_channels", "needs at least one positive entry");
        }
        if self.series_hidden.is_empty() || self.series_hidden.contains(&0) {
            return bad("series_hidden", "needs at least one positive entry");
        }
        if self.kernel_size % 2 == 0 {
            return bad("kernel_size", "must be odd");
        }
        if self.pool_window == 0 {
            return bad("pool_window", "must be positive");
        }
        if self.joint_width == 0 {
            return bad("joint_width", "must be positive");
        }
        if self.steps == 0 {
            return bad("steps", "must be positive");
        }
        if self.head_hidden == 0 {
            return bad("head_hidden", "must be positive");
        }
        self.lif().validate().map_err(|e| CliError::Usage(format!("LIF keys: {e}")))?;
        self.model().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train().validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }
}
