//! Checkpoints: every parameter, both Adam moments, RNG stream positions and
//! the configuration, in one named-array container.

use std::path::Path;

use multisr_tensor::{Adam, ParamSet, Scalar};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::step::Trainer;
use crate::container::Container;
use crate::models::{export_params, import_params, FeatureBackbone, Generator};
use crate::{Error, Result};

const KIND: &str = "multisr-checkpoint";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RngState {
    seed: String,
    stream: u64,
    /// `u128` as decimal text; JSON numbers cannot carry it exactly.
    word_pos: String,
}

impl RngState {
    fn capture(r: &ChaCha8Rng) -> Self {
        RngState {
            seed: hex::encode(r.get_seed()),
            stream: r.get_stream(),
            word_pos: r.get_word_pos().to_string(),
        }
    }

    fn restore(&self) -> Option<ChaCha8Rng> {
        let seed: [u8; 32] = hex::decode(&self.seed).ok()?.try_into().ok()?;
        let mut r = ChaCha8Rng::from_seed(seed);
        r.set_stream(self.stream);
        r.set_word_pos(self.word_pos.parse().ok()?);
        Some(r)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Meta {
    kind: String,
    iteration: u64,
    config: TrainConfig,
    discriminators: usize,
    adam_steps: Vec<u64>,
    rng_data: RngState,
    rng_aug: RngState,
}

fn bad(path: &Path, reason: impl Into<String>) -> Error {
    Error::Checkpoint {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn export_adam<T: Scalar>(opt: &Adam<T>, params: &ParamSet<T>, prefix: &str, c: &mut Container) {
    for (i, p) in params.iter().enumerate() {
        c.push(format!("{prefix}m.{}", p.name), &opt.m[i]);
        c.push(format!("{prefix}v.{}", p.name), &opt.v[i]);
    }
}

fn import_adam<T: Scalar>(
    opt: &mut Adam<T>,
    params: &ParamSet<T>,
    prefix: &str,
    c: &Container,
    path: &Path,
) -> Result<()> {
    for (i, p) in params.iter().enumerate() {
        for (slot, which) in [(&mut opt.m[i], "m"), (&mut opt.v[i], "v")] {
            let key = format!("{prefix}{which}.{}", p.name);
            let t = c.tensor::<T>(&key).ok_or_else(|| bad(path, format!("missing array {key}")))?;
            if t.shape() != slot.shape() {
                return Err(bad(path, format!("array {key} has shape {:?}", t.shape())));
            }
            *slot = t;
        }
    }
    Ok(())
}

impl<T: Scalar> Trainer<T> {
    pub fn to_container(&self) -> Container {
        let mut adam_steps = vec![self.opt_g.step];
        adam_steps.extend(self.opt_d.iter().map(|o| o.step));
        let meta = Meta {
            kind: KIND.into(),
            iteration: self.iteration,
            config: self.cfg.clone(),
            discriminators: self.discriminators.len(),
            adam_steps,
            rng_data: RngState::capture(&self.data_rng),
            rng_aug: RngState::capture(&self.aug_rng),
        };
        let mut c = Container::new(serde_json::to_value(meta).expect("checkpoint meta serializes"));
        export_params(self.generator.params(), "g.", &mut c);
        for (k, d) in self.discriminators.iter().enumerate() {
            export_params(d.params(), &format!("d{k}."), &mut c);
        }
        export_adam(&self.opt_g, self.generator.params(), "adam.g.", &mut c);
        for (k, (o, d)) in self.opt_d.iter().zip(&self.discriminators).enumerate() {
            export_adam(o, d.params(), &format!("adam.d{k}."), &mut c);
        }
        c
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().save(path)
    }

    /// Restores a run. `running` is the configuration of the continuing
    /// process; it must agree with the stored one except for run length and
    /// checkpoint cadence. `None` continues with the stored configuration.
    pub fn resume(
        path: impl AsRef<Path>,
        running: Option<&TrainConfig>,
        backbone: Option<Box<dyn FeatureBackbone<T>>>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let c = Container::load(path)?;
        Self::from_container(&c, path, running, backbone)
    }

    pub fn from_container(
        c: &Container,
        path: &Path,
        running: Option<&TrainConfig>,
        backbone: Option<Box<dyn FeatureBackbone<T>>>,
    ) -> Result<Self> {
        let meta = parse_meta(path, c.meta.clone())?;
        let cfg = match running {
            Some(r) if !r.resume_compatible(&meta.config) => {
                return Err(bad(path, "stored configuration differs from the running configuration"))
            }
            Some(r) => r.clone(),
            None => meta.config.clone(),
        };
        let mut t = Trainer::with_backbone(cfg, backbone)?;
        if meta.discriminators != t.discriminators.len() || meta.adam_steps.len() != 1 + t.opt_d.len() {
            return Err(bad(path, "discriminator count does not match the ablation mode"));
        }
        import_params(t.generator.params_mut(), "g.", c).map_err(|e| bad(path, e.to_string()))?;
        import_adam(&mut t.opt_g, t.generator.params(), "adam.g.", c, path)?;
        t.opt_g.step = meta.adam_steps[0];
        for k in 0..t.discriminators.len() {
            let d = &mut t.discriminators[k];
            import_params(d.params_mut(), &format!("d{k}."), c).map_err(|e| bad(path, e.to_string()))?;
            import_adam(&mut t.opt_d[k], d.params(), &format!("adam.d{k}."), c, path)?;
            t.opt_d[k].step = meta.adam_steps[k + 1];
        }
        t.data_rng = meta.rng_data.restore().ok_or_else(|| bad(path, "bad data RNG state"))?;
        t.aug_rng = meta.rng_aug.restore().ok_or_else(|| bad(path, "bad augmentation RNG state"))?;
        t.iteration = meta.iteration;
        Ok(t)
    }
}

/// Generator weights, configuration and iteration from a checkpoint.
pub fn load_generator<T: Scalar>(path: impl AsRef<Path>) -> Result<(Generator<T>, TrainConfig, u64)> {
    let path = path.as_ref();
    let c = Container::load_filtered(path, |n| n.starts_with("g."))?;
    let meta = parse_meta(path, c.meta.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = Generator::new(meta.config.generator.clone(), &mut rng)?;
    import_params(g.params_mut(), "g.", &c).map_err(|e| bad(path, e.to_string()))?;
    Ok((g, meta.config, meta.iteration))
}

/// Number of discriminator parameter sets stored in a checkpoint.
pub fn checkpoint_discriminators(path: impl AsRef<Path>) -> Result<usize> {
    let path = path.as_ref();
    Ok(parse_meta(path, Container::load_meta(path)?)?.discriminators)
}

/// Stored configuration and iteration, read from the header alone.
pub fn checkpoint_config(path: impl AsRef<Path>) -> Result<(TrainConfig, u64)> {
    let path = path.as_ref();
    let meta = parse_meta(path, Container::load_meta(path)?)?;
    Ok((meta.config, meta.iteration))
}

fn parse_meta(path: &Path, v: serde_json::Value) -> Result<Meta> {
    let meta: Meta = serde_json::from_value(v).map_err(|e| bad(path, e.to_string()))?;
    if meta.kind != KIND {
        return Err(bad(path, format!("not a training checkpoint ({})", meta.kind)));
    }
    Ok(meta)
}
