use multisr_tensor::{ConvGeometry, Graph, ParamSet, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian;
use crate::domain::NUM_DOMAINS;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscriminatorConfig {
    /// Side of the square inputs; fixes the class-head kernel.
    pub image_size: usize,
    pub image_channels: usize,
    pub base_channels: usize,
    pub layers: usize,
    pub kernel: usize,
    pub stride: usize,
    pub slope: f64,
    pub head_kernel: usize,
    pub init_std: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        DiscriminatorConfig {
            image_size: 128,
            image_channels: 3,
            base_channels: 64,
            layers: 6,
            kernel: 4,
            stride: 2,
            slope: 0.01,
            head_kernel: 3,
            init_std: 0.02,
        }
    }
}

impl DiscriminatorConfig {
    /// Trunk widths, doubling from `base_channels`.
    pub fn channels(&self) -> Vec<usize> {
        (0..self.layers).map(|i| self.base_channels << i).collect()
    }

    pub fn reduction(&self) -> usize {
        self.stride.pow(self.layers as u32)
    }

    /// Side of the final trunk feature map.
    pub fn final_side(&self) -> usize {
        self.image_size / self.reduction().max(1)
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("image_channels", self.image_channels),
            ("base_channels", self.base_channels),
            ("layers", self.layers),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("head_kernel", self.head_kernel),
        ] {
            if v == 0 {
                out.push(format!("discriminator.{name} must be positive"));
            }
        }
        if self.kernel < self.stride || (self.kernel - self.stride) % 2 != 0 {
            out.push(format!(
                "discriminator.kernel {} and stride {} must differ by an even amount",
                self.kernel, self.stride
            ));
        }
        if self.head_kernel % 2 == 0 {
            out.push("discriminator.head_kernel must be odd".into());
        }
        let red = self.reduction();
        if red == 0 || self.image_size < red || self.image_size % red != 0 {
            out.push(format!(
                "discriminator.image_size {} must be a positive multiple of {red}",
                self.image_size
            ));
        }
        if !(self.slope >= 0.0) || !(self.init_std > 0.0) {
            out.push("discriminator.slope must be >= 0 and init_std > 0".into());
        }
        out
    }
}

/// Patch-score map `[N,1,h,w]` and class logits `[N,5,1,1]`.
#[derive(Clone, Copy, Debug)]
pub struct DiscriminatorOutput {
    pub trg: Var,
    pub cls: Var,
}

#[derive(Clone, Debug)]
pub struct BoundDiscriminator {
    pub vars: Vec<Var>,
}

/// Strided leaky-ReLU trunk with a patch head and a domain-class head.
#[derive(Clone, Debug)]
pub struct Discriminator<T: Scalar> {
    cfg: DiscriminatorConfig,
    params: ParamSet<T>,
    trunk: Vec<(usize, usize)>,
    trg_head: usize,
    cls_head: usize,
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::ConfigList(problems));
        }
        let std = cfg.init_std;
        let mut params = ParamSet::new();
        let mut trunk = Vec::with_capacity(cfg.layers);
        let mut cin = cfg.image_channels;
        for (i, &cout) in cfg.channels().iter().enumerate() {
            let w = params.push(
                format!("trunk{i}.weight"),
                gaussian(&[cout, cin, cfg.kernel, cfg.kernel], std, rng),
            );
            let b = params.push(format!("trunk{i}.bias"), Tensor::zeros(&[cout]));
            trunk.push((w, b));
            cin = cout;
        }
        let hk = cfg.head_kernel;
        let trg_head = params.push("trg.weight", gaussian(&[1, cin, hk, hk], std, rng));
        let fk = cfg.final_side();
        let cls_head = params.push("cls.weight", gaussian(&[NUM_DOMAINS, cin, fk, fk], std, rng));
        Ok(Discriminator {
            cfg,
            params,
            trunk,
            trg_head,
            cls_head,
        })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.count()
    }

    /// Index of the patch-head weight in [`Self::params`].
    pub fn trg_head_index(&self) -> usize {
        self.trg_head
    }

    pub fn bind(&self, g: &Graph<T>, trainable: bool) -> BoundDiscriminator {
        BoundDiscriminator {
            vars: self.params.iter().map(|p| g.param(p, trainable)).collect(),
        }
    }

    pub fn forward(&self, g: &Graph<T>, b: &BoundDiscriminator, x: Var) -> Result<DiscriminatorOutput> {
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1] != self.cfg.image_channels {
            return Err(Error::Shape(format!(
                "discriminator expects [N, {}, H, W], got {shape:?}",
                self.cfg.image_channels
            )));
        }
        let (h, w, size) = (shape[2], shape[3], self.cfg.image_size);
        if h != size || w != size {
            return Err(Error::Size(format!(
                "discriminator built for {size}x{size} inputs, got {h}x{w}"
            )));
        }
        let v = &b.vars;
        let geo = ConvGeometry::new(self.cfg.stride, (self.cfg.kernel - self.cfg.stride) / 2);
        let slope = T::lit(self.cfg.slope);
        let mut f = x;
        for &(wi, bi) in &self.trunk {
            f = g.leaky_relu(g.conv2d(f, v[wi], Some(v[bi]), geo), slope);
        }
        let trg = g.conv2d(f, v[self.trg_head], None, ConvGeometry::new(1, self.cfg.head_kernel / 2));
        let cls = g.conv2d(f, v[self.cls_head], None, ConvGeometry::new(1, 0));
        Ok(DiscriminatorOutput { trg, cls })
    }

    /// Frozen evaluation returning `(patch map, logits)` as tensors.
    pub fn score(&self, batch: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
        let g = Graph::new();
        let b = self.bind(&g, false);
        let out = self.forward(&g, &b, g.constant(batch.clone()))?;
        Ok(((*g.value(out.trg)).clone(), (*g.value(out.cls)).clone()))
    }
}
