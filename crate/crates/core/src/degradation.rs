//! Forward observation model: kernel downsampling by an integer factor plus
//! optional additive white Gaussian noise, and the inverse-direction lift of
//! LR images onto the HR ("canonical") grid.
//!
//! Resampling follows the half-pixel-centre convention (aligned corners off):
//! output sample `i` sits at input coordinate `(i + 0.5) * in/out - 0.5`.
//! Taps that fall outside the image are reflected (edge not repeated).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Domain, Error, Image, Result, Scalar};

pub const DEFAULT_SCALE: usize = 4;
pub const BICUBIC_A: f64 = -0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleMethod {
    Bicubic,
    Bilinear,
    Nearest,
}

impl std::str::FromStr for ResampleMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bicubic" => Ok(ResampleMethod::Bicubic),
            "bilinear" => Ok(ResampleMethod::Bilinear),
            "nearest" => Ok(ResampleMethod::Nearest),
            other => Err(Error::Config(format!("unknown resampling method `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DownsampleKernel {
    pub method: ResampleMethod,
    pub scale: usize,
    /// Sharpness of the cubic convolution kernel.
    pub a: f64,
    pub antialias: bool,
}

impl DownsampleKernel {
    pub fn new(method: ResampleMethod) -> Self {
        DownsampleKernel {
            method,
            scale: DEFAULT_SCALE,
            a: BICUBIC_A,
            antialias: false,
        }
    }

    pub fn with_scale(mut self, scale: usize) -> Self {
        self.scale = scale;
        self
    }

    /// Kernel that produces the given synthetic LR domain.
    pub fn for_domain(domain: Domain) -> Result<Self> {
        match domain {
            Domain::BicubicLr => Ok(Self::new(ResampleMethod::Bicubic)),
            Domain::BilinearLr => Ok(Self::new(ResampleMethod::Bilinear)),
            Domain::NearestLr => Ok(Self::new(ResampleMethod::Nearest)),
            Domain::RealLr => Err(Error::UnsupportedSynthesis),
            Domain::Hr => Err(Error::InvalidTarget(domain.to_string())),
        }
    }
}

/// Additive white Gaussian noise; `sigma` in [0, 1] intensity units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        NoiseSpec::default()
    }
}

/// Input indices and weights contributing to one output sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Taps {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Cubic convolution kernel with parameter `a`.
pub fn cubic_weight(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

fn linear_weight(x: f64) -> f64 {
    (1.0 - x.abs()).max(0.0)
}

/// Maps a virtual index onto `[0, n)` by mirror reflection about the edge
/// samples (`-1 -> 1`, `n -> n - 2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m >= n as isize {
        (period - m) as usize
    } else {
        m as usize
    }
}

/// Resampling taps for every output position along one axis.
pub fn resample_taps(
    method: ResampleMethod,
    a: f64,
    antialias: bool,
    in_len: usize,
    out_len: usize,
) -> Vec<Taps> {
    let ratio = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|i| {
            if method == ResampleMethod::Nearest {
                let src = ((i as f64 * ratio).floor() as usize).min(in_len - 1);
                return Taps {
                    indices: vec![src],
                    weights: vec![1.0],
                };
            }
            let (radius, kernel): (f64, &dyn Fn(f64) -> f64) = match method {
                ResampleMethod::Bicubic => (2.0, &|x| cubic_weight(x, a)),
                ResampleMethod::Bilinear => (1.0, &linear_weight),
                ResampleMethod::Nearest => unreachable!(),
            };
            let stretch = if antialias && ratio > 1.0 { ratio } else { 1.0 };
            let center = (i as f64 + 0.5) * ratio - 0.5;
            let reach = radius * stretch;
            let lo = (center - reach).floor() as isize;
            let hi = (center + reach).ceil() as isize;
            let mut indices = Vec::new();
            let mut weights = Vec::new();
            for j in lo..=hi {
                let wgt = kernel((j as f64 - center) / stretch);
                if wgt != 0.0 {
                    indices.push(reflect_index(j, in_len));
                    weights.push(wgt);
                }
            }
            if stretch != 1.0 {
                let total: f64 = weights.iter().sum();
                weights.iter_mut().for_each(|w| *w /= total);
            }
            Taps { indices, weights }
        })
        .collect()
}

/// Separable resize to `out_h x out_w`.
pub fn resize<T: Scalar>(
    img: &Image<T>,
    out_h: usize,
    out_w: usize,
    method: ResampleMethod,
    a: f64,
    antialias: bool,
) -> Result<Image<T>> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::Shape("resize target must be non-empty".into()));
    }
    let (c, h, w) = img.dims();
    let col_taps = to_typed::<T>(resample_taps(method, a, antialias, w, out_w));
    let row_taps = to_typed::<T>(resample_taps(method, a, antialias, h, out_h));

    let mut horiz = vec![T::zero(); c * h * out_w];
    for ch in 0..c {
        for y in 0..h {
            let src = &img.plane(ch)[y * w..(y + 1) * w];
            let dst = &mut horiz[(ch * h + y) * out_w..][..out_w];
            for (d, (idx, wts)) in dst.iter_mut().zip(&col_taps) {
                *d = idx.iter().zip(wts).fold(T::zero(), |s, (&i, &k)| s + k * src[i]);
            }
        }
    }
    let mut out = vec![T::zero(); c * out_h * out_w];
    for ch in 0..c {
        let plane = &horiz[ch * h * out_w..(ch + 1) * h * out_w];
        for (oy, (idx, wts)) in row_taps.iter().enumerate() {
            let dst = &mut out[(ch * out_h + oy) * out_w..][..out_w];
            for (&iy, &k) in idx.iter().zip(wts) {
                let row = &plane[iy * out_w..(iy + 1) * out_w];
                for (d, &s) in dst.iter_mut().zip(row) {
                    *d = *d + k * s;
                }
            }
        }
    }
    Image::new(c, out_h, out_w, out)
}

fn to_typed<T: Scalar>(taps: Vec<Taps>) -> Vec<(Vec<usize>, Vec<T>)> {
    taps.into_iter()
        .map(|t| (t.indices, t.weights.into_iter().map(T::lit).collect()))
        .collect()
}

/// Applies the down-sampling operator `H`: output is `(H/s) x (W/s)`.
pub fn downsample<T: Scalar>(img: &Image<T>, kernel: &DownsampleKernel) -> Result<Image<T>> {
    let s = kernel.scale;
    if s == 0 {
        return Err(Error::Config("scale factor must be positive".into()));
    }
    let (_, h, w) = img.dims();
    if h % s != 0 || w % s != 0 {
        return Err(Error::Shape(format!(
            "{h}x{w} image is not divisible by scale {s}"
        )));
    }
    resize(img, h / s, w / s, kernel.method, kernel.a, kernel.antialias)
}

/// Adds i.i.d. Gaussian noise drawn from a stream seeded by `spec.seed`.
pub fn add_noise<T: Scalar>(img: &Image<T>, spec: &NoiseSpec) -> Result<Image<T>> {
    if !(spec.sigma >= 0.0) || !spec.sigma.is_finite() {
        return Err(Error::Config(format!(
            "noise sigma must be finite and >= 0, got {}",
            spec.sigma
        )));
    }
    if spec.sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = *v + T::lit(normal.sample(&mut rng));
    }
    Ok(out)
}

/// Synthesizes an LR observation of `hr` in one of the three synthetic
/// domains: kernel downsampling by `scale`, then noise.
pub fn synth_lr<T: Scalar>(
    hr: &Image<T>,
    target: Domain,
    scale: usize,
    noise: &NoiseSpec,
) -> Result<Image<T>> {
    let kernel = DownsampleKernel::for_domain(target)?.with_scale(scale);
    add_noise(&downsample(hr, &kernel)?, noise)
}

/// Lifts an LR-grid image onto the grid `s` times larger.
pub fn to_canonical_grid<T: Scalar>(
    img: &Image<T>,
    s: usize,
    method: ResampleMethod,
) -> Result<Image<T>> {
    if s == 0 {
        return Err(Error::Config("scale factor must be positive".into()));
    }
    resize(img, img.height() * s, img.width() * s, method, BICUBIC_A, false)
}

/// Bicubic lift, the default used wherever LR images enter the generator.
pub fn lift<T: Scalar>(img: &Image<T>, s: usize) -> Result<Image<T>> {
    to_canonical_grid(img, s, ResampleMethod::Bicubic)
}
