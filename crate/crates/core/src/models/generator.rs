use multisr_tensor::{ConvGeometry, Graph, ParamSet, Scalar, Tensor, Var};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gaussian;
use crate::domain::{Domain, NUM_DOMAINS};
use crate::image::Image;
use crate::{Error, Result};

/// Smallest height or width the generator accepts.
pub const MIN_GENERATOR_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub image_channels: usize,
    /// Label planes concatenated to the input; 0 builds an unconditioned network.
    pub label_channels: usize,
    pub base_channels: usize,
    pub encdec_kernel: usize,
    pub res_blocks: usize,
    pub res_kernel: usize,
    pub theta_init: f64,
    pub sigma_init: f64,
    pub init_std: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            image_channels: 3,
            label_channels: NUM_DOMAINS,
            base_channels: 64,
            encdec_kernel: 5,
            res_blocks: 5,
            res_kernel: 3,
            theta_init: 1.0,
            sigma_init: 5.0 / 255.0,
            init_std: 0.02,
        }
    }
}

impl GeneratorConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("image_channels", self.image_channels),
            ("base_channels", self.base_channels),
            ("encdec_kernel", self.encdec_kernel),
            ("res_kernel", self.res_kernel),
            ("res_blocks", self.res_blocks),
        ] {
            if v == 0 {
                out.push(format!("generator.{name} must be positive"));
            }
        }
        for (name, k) in [("encdec_kernel", self.encdec_kernel), ("res_kernel", self.res_kernel)] {
            if k % 2 == 0 {
                out.push(format!("generator.{name} must be odd to preserve resolution, got {k}"));
            }
        }
        if self.label_channels != 0 && self.label_channels != NUM_DOMAINS {
            out.push(format!(
                "generator.label_channels must be 0 or {NUM_DOMAINS}, got {}",
                self.label_channels
            ));
        }
        if !(self.theta_init > 0.0) {
            out.push("generator.theta_init must be > 0".into());
        }
        if !(self.sigma_init >= 0.0) {
            out.push("generator.sigma_init must be >= 0".into());
        }
        if !(self.init_std > 0.0) {
            out.push("generator.init_std must be > 0".into());
        }
        out
    }
}

#[derive(Clone, Debug)]
struct Block {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Encoder, sine pre-activated residual blocks, a trainable projection of
/// the features onto a noise-sized l2 ball, then the decoder. The output is
/// the input image plus the decoded residual.
#[derive(Clone, Debug)]
pub struct Generator<T: Scalar> {
    cfg: GeneratorConfig,
    params: ParamSet<T>,
    enc: (usize, usize),
    blocks: Vec<Block>,
    dec: (usize, usize),
    theta: usize,
    sigma: usize,
}

/// Generator parameters bound into one graph.
#[derive(Clone, Debug)]
pub struct BoundGenerator {
    pub vars: Vec<Var>,
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: GeneratorConfig, rng: &mut R) -> Result<Self> {
        let problems = cfg.problems();
        if !problems.is_empty() {
            return Err(Error::ConfigList(problems));
        }
        let (c, f) = (cfg.image_channels, cfg.base_channels);
        let (ke, kr, std) = (cfg.encdec_kernel, cfg.res_kernel, cfg.init_std);
        let mut params = ParamSet::new();
        let mut conv = |params: &mut ParamSet<T>, name: &str, o: usize, i: usize, k: usize| {
            let w = params.push(format!("{name}.weight"), gaussian(&[o, i, k, k], std, rng));
            let b = params.push(format!("{name}.bias"), Tensor::zeros(&[o]));
            (w, b)
        };
        let enc = conv(&mut params, "enc", f, c + cfg.label_channels, ke);
        let mut blocks = Vec::with_capacity(cfg.res_blocks);
        for i in 0..cfg.res_blocks {
            let (w1, b1) = conv(&mut params, &format!("res{i}.conv1"), f, f, kr);
            let (w2, b2) = conv(&mut params, &format!("res{i}.conv2"), f, f, kr);
            blocks.push(Block { w1, b1, w2, b2 });
        }
        let dec = conv(&mut params, "dec", c, f, ke);
        let theta = params.push("proj.theta", Tensor::scalar(T::lit(cfg.theta_init)));
        let sigma = params.push("proj.sigma", Tensor::scalar(T::lit(cfg.sigma_init)));
        Ok(Generator {
            cfg,
            params,
            enc,
            blocks,
            dec,
            theta,
            sigma,
        })
    }

    pub fn config(&self) -> &GeneratorConfig {
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

    /// Current projection radius parameter and noise estimate.
    pub fn projection_params(&self) -> (T, T) {
        (
            self.params.get(self.theta).value().data()[0],
            self.params.get(self.sigma).value().data()[0],
        )
    }

    pub fn bind(&self, g: &Graph<T>, trainable: bool) -> BoundGenerator {
        BoundGenerator {
            vars: self.params.iter().map(|p| g.param(p, trainable)).collect(),
        }
    }

    fn check_input(&self, g: &Graph<T>, x: Var, labels: &[Domain]) -> Result<(usize, usize, usize)> {
        let shape = g.shape(x);
        if shape.len() != 4 || shape[1] != self.cfg.image_channels {
            return Err(Error::Shape(format!(
                "generator expects [N, {}, H, W], got {shape:?}",
                self.cfg.image_channels
            )));
        }
        let (n, h, w) = (shape[0], shape[2], shape[3]);
        if labels.len() != n {
            return Err(Error::Shape(format!("{} labels for a batch of {n}", labels.len())));
        }
        if h < MIN_GENERATOR_SIDE || w < MIN_GENERATOR_SIDE {
            return Err(Error::Size(format!(
                "generator input {h}x{w} is below the {MIN_GENERATOR_SIDE}x{MIN_GENERATOR_SIDE} minimum"
            )));
        }
        if !g.value(x).all_finite() {
            return Err(Error::Numeric("non-finite value in generator input".into()));
        }
        Ok((n, h, w))
    }

    pub fn forward(&self, g: &Graph<T>, b: &BoundGenerator, x: Var, labels: &[Domain]) -> Result<Var> {
        let (n, h, w) = self.check_input(g, x, labels)?;
        let v = &b.vars;
        let pe = ConvGeometry::new(1, self.cfg.encdec_kernel / 2);
        let pr = ConvGeometry::new(1, self.cfg.res_kernel / 2);
        let input = if self.cfg.label_channels > 0 {
            g.concat_channels(x, g.constant(label_planes(labels, h, w)))
        } else {
            x
        };
        debug_assert_eq!(g.shape(input)[0], n);
        let mut f = g.conv2d(input, v[self.enc.0], Some(v[self.enc.1]), pe);
        for blk in &self.blocks {
            let t = g.conv2d(g.sin(f), v[blk.w1], Some(v[blk.b1]), pr);
            let t = g.conv2d(g.sin(t), v[blk.w2], Some(v[blk.b2]), pr);
            f = g.add(f, t);
        }
        let f = g.ball_project(f, v[self.theta], v[self.sigma]);
        let r = g.conv2d(f, v[self.dec.0], Some(v[self.dec.1]), pe);
        Ok(g.add(x, r))
    }

    /// Inference on a batch tensor with frozen weights.
    pub fn translate(&self, batch: &Tensor<T>, labels: &[Domain]) -> Result<Tensor<T>> {
        let g = Graph::new();
        let b = self.bind(&g, false);
        let x = g.constant(batch.clone());
        let y = self.forward(&g, &b, x, labels)?;
        Ok((*g.value(y)).clone())
    }

    pub fn translate_image(&self, img: &Image<T>, label: Domain) -> Result<Image<T>> {
        let out = self.translate(&img.to_tensor(), &[label])?;
        Ok(Image::unstack(&out).remove(0))
    }
}

/// Constant label planes `[N, 5, H, W]`, plane `label.id()` set to one.
pub(crate) fn label_planes<T: Scalar>(labels: &[Domain], h: usize, w: usize) -> Tensor<T> {
    let plane = h * w;
    let mut t = Tensor::zeros(&[labels.len(), NUM_DOMAINS, h, w]);
    for (i, l) in labels.iter().enumerate() {
        let start = (i * NUM_DOMAINS + l.id()) * plane;
        t.data_mut()[start..start + plane].fill(T::one());
    }
    t
}

/// Projects a single residual onto the l2 ball of radius
/// `max(theta,0) * max(sigma,0) * sqrt(N - 1)`, `N` its element count.
pub fn projection_apply<T: Scalar>(residual: &Image<T>, theta: T, sigma: T) -> Image<T> {
    let g = Graph::new();
    let r = g.constant(residual.to_tensor());
    let p = g.ball_project(r, g.constant(Tensor::scalar(theta)), g.constant(Tensor::scalar(sigma)));
    Image::unstack(&g.value(p)).remove(0)
}
