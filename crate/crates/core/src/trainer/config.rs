use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use multisr_tensor::AdamConfig;
use serde::{Deserialize, Serialize};

use crate::augment::AugPolicy;
use crate::corpus::LabelMode;
use crate::degradation::DEFAULT_SCALE;
use crate::losses::LossWeights;
use crate::models::{DiscriminatorConfig, GeneratorConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    /// HR targets only, separate target and source discriminators.
    V1,
    /// HR targets only, one discriminator.
    V2,
    /// Random targets over all domains, one discriminator.
    #[default]
    V3,
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AblationMode::V1 => "v1",
            AblationMode::V2 => "v2",
            AblationMode::V3 => "v3",
        })
    }
}

impl FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(AblationMode::V1),
            "v2" => Ok(AblationMode::V2),
            "v3" => Ok(AblationMode::V3),
            _ => Err(Error::Config(format!("unknown ablation mode `{s}` (expected v1, v2 or v3)"))),
        }
    }
}

/// How one ablation mode wires sampling and discriminators.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Wiring {
    pub target_sampling: LabelMode,
    /// 1 (`D_trg`) or 2 (`D_trg`, `D_src`).
    pub discriminators: usize,
    /// Whether the reconstruction branch is judged by its own discriminator
    /// against real source images.
    pub source_branch: bool,
}

pub fn configure_ablation(mode: AblationMode) -> Wiring {
    match mode {
        AblationMode::V1 => Wiring {
            target_sampling: LabelMode::HrOnly,
            discriminators: 2,
            source_branch: true,
        },
        AblationMode::V2 => Wiring {
            target_sampling: LabelMode::HrOnly,
            discriminators: 1,
            source_branch: false,
        },
        AblationMode::V3 => Wiring {
            target_sampling: LabelMode::Random,
            discriminators: 1,
            source_branch: false,
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamSettings {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        let c = AdamConfig::default();
        AdamSettings {
            beta1: c.beta1,
            beta2: c.beta2,
            eps: c.eps,
            weight_decay: c.weight_decay,
        }
    }
}

impl AdamSettings {
    pub fn to_config(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// Perceptual-loss feature extractor: `"fixed_random"`, `"none"`, or a path
/// to a saved feature stack.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum BackboneChoice {
    #[default]
    FixedRandom,
    Disabled,
    File(PathBuf),
}

impl Serialize for BackboneChoice {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BackboneChoice::FixedRandom => s.serialize_str("fixed_random"),
            BackboneChoice::Disabled => s.serialize_str("none"),
            BackboneChoice::File(p) => s.serialize_str(&p.to_string_lossy()),
        }
    }
}

impl<'de> Deserialize<'de> for BackboneChoice {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(String::deserialize(d)?.parse().expect("infallible"))
    }
}

impl FromStr for BackboneChoice {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "fixed_random" | "fixed-random" => BackboneChoice::FixedRandom,
            "none" | "" => BackboneChoice::Disabled,
            path => BackboneChoice::File(PathBuf::from(path)),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    /// Side of square training patches on the HR grid; a multiple of 64.
    pub patch: usize,
    pub scale: usize,
    pub iterations: u64,
    pub lr0: f64,
    pub lr_milestones: Vec<u64>,
    pub lr_factor: f64,
    pub checkpoint_every: u64,
    pub mode: AblationMode,
    pub backbone: BackboneChoice,
    pub adam: AdamSettings,
    pub loss: LossWeights,
    pub aug: AugPolicy,
    pub generator: GeneratorConfig,
    /// `image_size` is ignored; discriminators are built for `patch`.
    pub discriminator: DiscriminatorConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 16,
            patch: 128,
            scale: DEFAULT_SCALE,
            iterations: 51_000,
            lr0: 1e-4,
            lr_milestones: vec![5_000, 10_000, 20_000, 30_000],
            lr_factor: 0.5,
            checkpoint_every: 1_000,
            mode: AblationMode::V3,
            backbone: BackboneChoice::FixedRandom,
            adam: AdamSettings::default(),
            loss: LossWeights::default(),
            aug: AugPolicy::default(),
            generator: GeneratorConfig::default(),
            discriminator: DiscriminatorConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Small profile for a single desktop CPU: patch 64, batch 4, 500 steps.
    pub fn desk_scale() -> Self {
        let mut c = TrainConfig::default();
        c.apply_desk_scale();
        c
    }

    pub fn apply_desk_scale(&mut self) {
        self.patch = 64;
        self.batch_size = 4;
        self.iterations = 500;
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            image_size: self.patch,
            ..self.discriminator.clone()
        }
    }

    pub fn wiring(&self) -> Wiring {
        configure_ablation(self.mode)
    }

    /// Every validation problem, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.batch_size == 0 {
            out.push("batch_size must be >= 1".into());
        }
        if self.scale == 0 {
            out.push("scale must be positive".into());
        }
        if self.patch == 0 || self.patch % 64 != 0 {
            out.push(format!("patch must be a positive multiple of 64, got {}", self.patch));
        } else if self.scale != 0 && self.patch % self.scale != 0 {
            out.push(format!("patch {} must be divisible by scale {}", self.patch, self.scale));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            out.push("lr0 must be positive".into());
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            out.push("lr_factor must lie in (0, 1]".into());
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            out.push("lr_milestones must be strictly increasing".into());
        }
        if self.checkpoint_every == 0 {
            out.push("checkpoint_every must be >= 1".into());
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            out.push("adam betas must lie in [0, 1)".into());
        }
        if !(a.eps > 0.0) || !(a.weight_decay >= 0.0) {
            out.push("adam eps must be > 0 and weight_decay >= 0".into());
        }
        out.extend(self.loss.problems());
        out.extend(self.aug.problems());
        out.extend(self.generator.problems());
        out.extend(self.discriminator_config().problems());
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigList(p))
        }
    }

    /// Whether a checkpoint written under `other` may continue under `self`:
    /// everything except the run length and checkpoint cadence must match.
    pub fn resume_compatible(&self, other: &TrainConfig) -> bool {
        let norm = |c: &TrainConfig| TrainConfig {
            iterations: 0,
            checkpoint_every: 1,
            ..c.clone()
        };
        norm(self) == norm(other)
    }
}

/// `lr0 * factor^k`, `k` the number of milestones at or below `iter`.
pub fn lr_schedule(iter: u64, cfg: &TrainConfig) -> f64 {
    let k = cfg.lr_milestones.iter().filter(|&&m| m <= iter).count();
    cfg.lr0 * cfg.lr_factor.powi(k as i32)
}
