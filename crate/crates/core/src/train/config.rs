use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::codec::{ColorMode, RenderConfig, DEFAULT_SOFTNESS};
use crate::data::PairingPolicy;
use crate::error::{Error, Result};
use crate::losses::LossWeights;

/// Which generators receive the expression (and intensity) labels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelRouting {
    #[default]
    #[serde(rename = "Gl_and_Ge")]
    GlAndGe,
    #[serde(rename = "Gl_only")]
    GlOnly,
    #[serde(rename = "Ge_only")]
    GeOnly,
}

impl LabelRouting {
    pub fn to_landmark_generator(self) -> bool {
        matches!(self, LabelRouting::GlAndGe | LabelRouting::GlOnly)
    }

    pub fn to_expression_generator(self) -> bool {
        matches!(self, LabelRouting::GlAndGe | LabelRouting::GeOnly)
    }
}

/// Every knob of a training run. The JSON config file mirrors this struct
/// field for field; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub resolution: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weights: LossWeights,
    pub dual_discriminators: bool,
    pub use_identity_loss: bool,
    pub use_landmark_recon: bool,
    pub color_mode: ColorMode,
    pub label_routing: LabelRouting,
    pub intensity_conditioning: bool,
    pub seed: u64,
    /// Cut the stage-II gradient path into the landmark generator.
    pub detach_stage1_in_stage2: bool,
    /// Disable dropout at inference. Off by default: dropout is the noise
    /// source of generation.
    pub eval_deterministic: bool,
    /// Filters of the first generator/discriminator layer.
    pub base_filters: usize,
    /// Edge falloff width of the landmark-image renderer, in pixels.
    pub render_softness: f64,
    pub pairing: PairingPolicy,
    /// Stop after this many steps regardless of `epochs`.
    pub max_steps: Option<u64>,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            epochs: 200,
            batch_size: 1,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            weights: LossWeights::default(),
            dual_discriminators: true,
            use_identity_loss: true,
            use_landmark_recon: true,
            color_mode: ColorMode::Sampled,
            label_routing: LabelRouting::GlAndGe,
            intensity_conditioning: false,
            seed: 0,
            detach_stage1_in_stage2: false,
            eval_deterministic: false,
            base_filters: 64,
            render_softness: DEFAULT_SOFTNESS,
            pairing: PairingPolicy::Cross,
            max_steps: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be > 0, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.base_filters == 0 {
            return bad("epochs, batch_size and base_filters must be positive".into());
        }
        if self.resolution < 16 || !self.resolution.is_power_of_two() {
            return bad(format!(
                "resolution must be a power of two >= 16, got {}",
                self.resolution
            ));
        }
        if !(self.render_softness >= 0.0) {
            return bad("render_softness must be >= 0".into());
        }
        self.weights.validate()
    }

    pub fn render_config(&self) -> RenderConfig {
        RenderConfig::for_resolution(self.resolution)
            .with_softness(self.render_softness)
            .with_color_mode(self.color_mode)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Apply `key=value` overrides; nested fields use dots
    /// (`weights.lambda1=0`). Values parse as JSON, falling back to a string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut root = serde_json::to_value(self)?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("override `{item}` is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut root;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| Error::invalid(format!("unknown config key `{key}`")))?;
            }
            *slot = value;
        }
        let cfg: Self =
            serde_json::from_value(root).map_err(|e| Error::invalid(format!("invalid override: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
