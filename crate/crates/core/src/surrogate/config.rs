use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparams::ResonancePoint;

pub const HEAD_HIDDEN: usize = 64;
pub const OUTPUTS: usize = 2;
pub const STAGES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputEncoding {
    /// Copper → 1, empty → 0.
    ZeroOne,
    /// Copper → +1, empty → −1.
    PlusMinusOne,
}

impl InputEncoding {
    pub fn encode(self, bit: u8) -> f64 {
        match (self, bit) {
            (InputEncoding::ZeroOne, 0) => 0.0,
            (InputEncoding::ZeroOne, _) => 1.0,
            (InputEncoding::PlusMinusOne, 0) => -1.0,
            (InputEncoding::PlusMinusOne, _) => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    pub stem_channels: usize,
    pub stage_channels: [usize; STAGES],
    pub blocks_per_stage: usize,
    pub head_hidden: usize,
    pub outputs: usize,
    pub input_encoding: InputEncoding,
    /// Start the last convolution of every residual branch at zero, so each
    /// block is initially relu(shortcut) and output scale does not compound
    /// with depth.
    #[serde(default)]
    pub zero_init_residual: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig::desk()
    }
}

impl SurrogateConfig {
    /// Small widths for CPU-scale training on ~1000 samples.
    pub fn desk() -> Self {
        SurrogateConfig {
            stem_channels: 8,
            stage_channels: [8, 16, 32, 64],
            blocks_per_stage: 2,
            head_hidden: HEAD_HIDDEN,
            outputs: OUTPUTS,
            input_encoding: InputEncoding::PlusMinusOne,
            zero_init_residual: true,
        }
    }

    /// ResNet-18 widths (64…512 feature maps).
    pub fn paper() -> Self {
        SurrogateConfig {
            stem_channels: 64,
            stage_channels: [64, 128, 256, 512],
            ..SurrogateConfig::desk()
        }
    }

    /// Two channels everywhere and one block per stage, for gradient checks.
    pub fn tiny() -> Self {
        SurrogateConfig {
            stem_channels: 2,
            stage_channels: [2, 2, 2, 2],
            blocks_per_stage: 1,
            zero_init_residual: false,
            ..SurrogateConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(SurrogateConfig::desk()),
            "paper" => Ok(SurrogateConfig::paper()),
            other => Err(Error::Config(format!("unknown preset `{other}` (known: desk, paper)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stem_channels == 0 || self.blocks_per_stage == 0 || self.stage_channels.contains(&0) {
            return Err(Error::Config("channel and block counts must be positive".into()));
        }
        if self.head_hidden != HEAD_HIDDEN {
            return Err(Error::Config(format!("head_hidden is fixed at {HEAD_HIDDEN}")));
        }
        if self.outputs != OUTPUTS {
            return Err(Error::Config(format!("outputs is fixed at {OUTPUTS}")));
        }
        Ok(())
    }

    /// Weighted layers: stem + two convolutions per block + two dense layers.
    pub fn depth(&self) -> usize {
        1 + 2 * STAGES * self.blocks_per_stage + 2
    }
}

/// Maps physical targets to [0,1]² and back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub f_min: f64,
    pub f_max: f64,
    pub s_min: f64,
    pub s_max: f64,
}

impl Default for TargetNormalizer {
    fn default() -> Self {
        TargetNormalizer {
            f_min: 1.0,
            f_max: 5.0,
            s_min: -15.0,
            s_max: -2.0,
        }
    }
}

impl TargetNormalizer {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min < self.f_max && self.s_min < self.s_max) {
            return Err(Error::Config("normalizer needs min < max for both targets".into()));
        }
        Ok(())
    }

    pub fn normalize(&self, p: &ResonancePoint) -> [f64; 2] {
        [
            (p.f_res_ghz - self.f_min) / (self.f_max - self.f_min),
            (p.s21_db - self.s_min) / (self.s_max - self.s_min),
        ]
    }

    /// Inverse of [`normalize`](Self::normalize), without clamping.
    pub fn denormalize(&self, y: [f64; 2]) -> ResonancePoint {
        ResonancePoint::new(
            self.f_min + y[0] * (self.f_max - self.f_min),
            self.s_min + y[1] * (self.s_max - self.s_min),
        )
    }

    pub fn denormalize_clamped(&self, y: [f64; 2]) -> ResonancePoint {
        self.denormalize([y[0].clamp(0.0, 1.0), y[1].clamp(0.0, 1.0)])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Capped at the train-split size.
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub split: [f64; 3],
    /// Train on everything (validating on the train set) when the dataset is
    /// too small for three non-empty splits, instead of failing.
    pub train_only_fallback: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size: 256,
            epochs: 200,
            seed: 0,
            split: [0.6, 0.2, 0.2],
            train_only_fallback: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        validate_fractions(&self.split)
    }
}

pub(crate) fn validate_fractions(f: &[f64; 3]) -> Result<()> {
    if f.iter().any(|&x| !(x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split fractions must be non-negative and sum to 1, got {f:?}"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let d = SurrogateConfig::desk();
        assert_eq!(d.stage_channels, [8, 16, 32, 64]);
        assert_eq!(d.depth(), 19);
        assert_eq!(SurrogateConfig::paper().stage_channels[3], 512);
        assert_eq!(SurrogateConfig::paper().depth(), 19);
        assert!(SurrogateConfig::preset("huge").is_err());
        assert!(d.validate().is_ok());
        let bad = SurrogateConfig {
            outputs: 3,
            ..SurrogateConfig::desk()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn normalizer_endpoints() {
        let n = TargetNormalizer::default();
        assert_eq!(n.denormalize([0.0, 0.0]), ResonancePoint::new(1.0, -15.0));
        assert_eq!(n.denormalize([1.0, 1.0]), ResonancePoint::new(5.0, -2.0));
        assert_eq!(n.denormalize([0.5, 0.5]).f_res_ghz, 3.0);
        assert_eq!(n.denormalize_clamped([-0.3, 1.7]), ResonancePoint::new(1.0, -2.0));
        for k in 0..=100 {
            let p = ResonancePoint::new(1.0 + 0.04 * k as f64, -15.0 + 0.13 * k as f64);
            let back = n.denormalize(n.normalize(&p));
            assert!((back.f_res_ghz - p.f_res_ghz).abs() < 1e-12);
            assert!((back.s21_db - p.s21_db).abs() < 1e-12);
        }
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            split: [0.6, 0.3, 0.2],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
