//! Geometric augmentation and the mixture-of-augmentation (MOA) menu:
//! Blend, RGB permutation, Mixup, Cutout, CutMix, CutMixup and CutBlur.
//! At most one MOA operation is drawn per batch and applied to every pair.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::degradation::{downsample, lift, DownsampleKernel, ResampleMethod};
use crate::{Error, Image, Result, Scalar};

/// Horizontal/vertical flips followed by `rot90` quarter turns
/// counter-clockwise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GeoTransform {
    pub hflip: bool,
    pub vflip: bool,
    pub rot90: u8,
}

impl GeoTransform {
    pub fn identity() -> Self {
        GeoTransform::default()
    }

    pub fn draw<R: Rng + ?Sized>(rng: &mut R) -> Self {
        GeoTransform {
            hflip: rng.random_bool(0.5),
            vflip: rng.random_bool(0.5),
            rot90: rng.random_range(0..4),
        }
    }

    pub fn apply<T: Scalar>(&self, img: &Image<T>) -> Image<T> {
        let mut out = img.clone();
        if self.hflip {
            out = hflip(&out);
        }
        if self.vflip {
            out = vflip(&out);
        }
        for _ in 0..self.rot90 % 4 {
            out = rot90(&out);
        }
        out
    }
}

pub fn hflip<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (c, h, w) = img.dims();
    Image::from_fn(c, h, w, |ch, y, x| img.get(ch, y, w - 1 - x))
}

pub fn vflip<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (c, h, w) = img.dims();
    Image::from_fn(c, h, w, |ch, y, x| img.get(ch, h - 1 - y, x))
}

/// Quarter turn counter-clockwise; swaps height and width.
pub fn rot90<T: Scalar>(img: &Image<T>) -> Image<T> {
    let (c, h, w) = img.dims();
    Image::from_fn(c, w, h, |ch, y, x| img.get(ch, x, w - 1 - y))
}

/// Random flips and quarter turns.
pub fn flip_rotate<T: Scalar, R: Rng + ?Sized>(img: &Image<T>, rng: &mut R) -> Image<T> {
    GeoTransform::draw(rng).apply(img)
}

/// Per-operation selection probabilities; their sum is the probability that
/// any operation is applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoaProbs {
    pub blend: f64,
    pub rgb_perm: f64,
    pub mixup: f64,
    pub cutout: f64,
    pub cutmix: f64,
    pub cutmixup: f64,
    pub cutblur: f64,
}

impl Default for MoaProbs {
    fn default() -> Self {
        MoaProbs::uniform(0.5)
    }
}

impl MoaProbs {
    pub fn uniform(total: f64) -> Self {
        let p = total / 7.0;
        MoaProbs {
            blend: p,
            rgb_perm: p,
            mixup: p,
            cutout: p,
            cutmix: p,
            cutmixup: p,
            cutblur: p,
        }
    }

    fn as_array(&self) -> [f64; 7] {
        [
            self.blend,
            self.rgb_perm,
            self.mixup,
            self.cutout,
            self.cutmix,
            self.cutmixup,
            self.cutblur,
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugPolicy {
    pub enabled: bool,
    pub probs: MoaProbs,
    pub mixup_alpha: f64,
    /// Bounds on the cut rectangle's area as a fraction of the image.
    pub cut_ratio_range: (f64, f64),
    /// Down/up factor of CutBlur's degraded content.
    pub cutblur_scale: usize,
}

impl Default for AugPolicy {
    fn default() -> Self {
        AugPolicy {
            enabled: true,
            probs: MoaProbs::uniform(0.5),
            mixup_alpha: 1.2,
            cut_ratio_range: (0.1, 0.4),
            cutblur_scale: 4,
        }
    }
}

impl AugPolicy {
    pub fn disabled() -> Self {
        AugPolicy {
            enabled: false,
            ..Default::default()
        }
    }

    /// Policy that always applies exactly the operations with non-zero weight.
    pub fn only(probs: MoaProbs) -> Self {
        AugPolicy {
            probs,
            ..Default::default()
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let p = self.probs.as_array();
        if p.iter().any(|&v| !(v >= 0.0)) {
            out.push("aug.probs: probabilities must be non-negative".into());
        }
        if p.iter().sum::<f64>() > 1.0 + 1e-9 {
            out.push("aug.probs: probabilities must sum to at most 1".into());
        }
        if !(self.mixup_alpha > 0.0) {
            out.push("aug.mixup_alpha must be > 0".into());
        }
        let (lo, hi) = self.cut_ratio_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            out.push("aug.cut_ratio_range must satisfy 0 < lo <= hi < 1".into());
        }
        if self.cutblur_scale == 0 {
            out.push("aug.cutblur_scale must be positive".into());
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Region {
    pub y: usize,
    pub x: usize,
    pub h: usize,
    pub w: usize,
}

impl Region {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        y >= self.y && y < self.y + self.h && x >= self.x && x < self.x + self.w
    }

    pub fn area(&self) -> usize {
        self.h * self.w
    }
}

/// A drawn MOA operation with all its random parameters fixed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MoaOp {
    None,
    /// `alpha * a + (1 - alpha) * color`
    Blend { alpha: f64, color: [f64; 3] },
    RgbPerm([usize; 3]),
    /// `lambda * a + (1 - lambda) * b`
    Mixup { lambda: f64 },
    Cutout(Region),
    CutMix(Region),
    CutMixup { region: Region, lambda: f64 },
    CutBlur(Region),
}

impl MoaOp {
    pub fn name(&self) -> &'static str {
        match self {
            MoaOp::None => "none",
            MoaOp::Blend { .. } => "blend",
            MoaOp::RgbPerm(_) => "rgb_perm",
            MoaOp::Mixup { .. } => "mixup",
            MoaOp::Cutout(_) => "cutout",
            MoaOp::CutMix(_) => "cutmix",
            MoaOp::CutMixup { .. } => "cutmixup",
            MoaOp::CutBlur(_) => "cutblur",
        }
    }

    /// Whether the operation reads the mixing partner.
    pub fn uses_partner(&self) -> bool {
        matches!(
            self,
            MoaOp::Mixup { .. } | MoaOp::CutMix(_) | MoaOp::CutMixup { .. }
        )
    }

    /// Whether supervision targets receive the same operation as inputs.
    /// Cutout and CutBlur corrupt only the input.
    pub fn applies_to_target(&self) -> bool {
        !matches!(self, MoaOp::Cutout(_) | MoaOp::CutBlur(_) | MoaOp::None)
    }
}

/// Rectangle whose area fraction lies in `[lo, hi]`.
pub fn draw_region<R: Rng + ?Sized>(h: usize, w: usize, range: (f64, f64), rng: &mut R) -> Result<Region> {
    let (lo, hi) = range;
    let total = (h * w) as f64;
    let ok = |rh: usize, rw: usize| {
        let f = (rh * rw) as f64 / total;
        f >= lo && f <= hi
    };
    for _ in 0..64 {
        let ratio = rng.random_range(lo..=hi);
        let rh = ((ratio.sqrt() * h as f64).round() as usize).clamp(1, h);
        let rw = ((ratio * total / rh as f64).round() as usize).clamp(1, w);
        if ok(rh, rw) {
            return Ok(Region {
                y: rng.random_range(0..=h - rh),
                x: rng.random_range(0..=w - rw),
                h: rh,
                w: rw,
            });
        }
    }
    // exhaustive fallback for very small images
    for rh in 1..=h {
        for rw in 1..=w {
            if ok(rh, rw) {
                return Ok(Region {
                    y: rng.random_range(0..=h - rh),
                    x: rng.random_range(0..=w - rw),
                    h: rh,
                    w: rw,
                });
            }
        }
    }
    Err(Error::Shape(format!(
        "no rectangle in a {h}x{w} image has area fraction within [{lo}, {hi}]"
    )))
}

pub fn draw_moa<R: Rng + ?Sized>(policy: &AugPolicy, h: usize, w: usize, rng: &mut R) -> Result<MoaOp> {
    if !policy.enabled {
        return Ok(MoaOp::None);
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = None;
    for (i, p) in policy.probs.as_array().into_iter().enumerate() {
        acc += p;
        if p > 0.0 && u < acc {
            pick = Some(i);
            break;
        }
    }
    let lambda = |rng: &mut R| -> Result<f64> {
        let beta = Beta::new(policy.mixup_alpha, policy.mixup_alpha)
            .map_err(|e| Error::Config(format!("mixup alpha: {e}")))?;
        Ok(beta.sample(rng))
    };
    Ok(match pick {
        None => MoaOp::None,
        Some(0) => MoaOp::Blend {
            alpha: rng.random_range(0.6..=1.0),
            color: [rng.random(), rng.random(), rng.random()],
        },
        Some(1) => {
            let mut perm = [0, 1, 2];
            perm.shuffle(rng);
            MoaOp::RgbPerm(perm)
        }
        Some(2) => MoaOp::Mixup { lambda: lambda(rng)? },
        Some(3) => MoaOp::Cutout(draw_region(h, w, policy.cut_ratio_range, rng)?),
        Some(4) => MoaOp::CutMix(draw_region(h, w, policy.cut_ratio_range, rng)?),
        Some(5) => {
            let region = draw_region(h, w, policy.cut_ratio_range, rng)?;
            MoaOp::CutMixup {
                region,
                lambda: lambda(rng)?,
            }
        }
        Some(_) => MoaOp::CutBlur(draw_region(h, w, policy.cut_ratio_range, rng)?),
    })
}

/// Bicubic down-then-up resampling by `scale`.
pub fn degrade_restore<T: Scalar>(img: &Image<T>, scale: usize) -> Result<Image<T>> {
    let k = DownsampleKernel::new(ResampleMethod::Bicubic).with_scale(scale);
    lift(&downsample(img, &k)?, scale)
}

/// Applies a drawn operation to one image and its partner.
pub fn apply_moa<T: Scalar>(op: &MoaOp, a: &Image<T>, b: &Image<T>, cutblur_scale: usize) -> Result<Image<T>> {
    if !a.same_shape(b) {
        return Err(Error::Shape(format!(
            "MOA pair shapes differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let (c, h, w) = a.dims();
    let mix = |lambda: f64, x: T, y: T| T::lit(lambda) * x + T::lit(1.0 - lambda) * y;
    Ok(match *op {
        MoaOp::None => a.clone(),
        MoaOp::Blend { alpha, color } => Image::from_fn(c, h, w, |ch, y, x| {
            mix(alpha, a.get(ch, y, x), T::lit(color[ch % 3]))
        }),
        MoaOp::RgbPerm(perm) => {
            if c != 3 {
                return Err(Error::Shape("RGB permutation needs 3 channels".into()));
            }
            Image::from_fn(c, h, w, |ch, y, x| a.get(perm[ch], y, x))
        }
        MoaOp::Mixup { lambda } => {
            Image::from_fn(c, h, w, |ch, y, x| mix(lambda, a.get(ch, y, x), b.get(ch, y, x)))
        }
        MoaOp::Cutout(r) => Image::from_fn(c, h, w, |ch, y, x| {
            if r.contains(y, x) {
                T::zero()
            } else {
                a.get(ch, y, x)
            }
        }),
        MoaOp::CutMix(r) => Image::from_fn(c, h, w, |ch, y, x| {
            if r.contains(y, x) {
                b.get(ch, y, x)
            } else {
                a.get(ch, y, x)
            }
        }),
        MoaOp::CutMixup { region, lambda } => Image::from_fn(c, h, w, |ch, y, x| {
            if region.contains(y, x) {
                mix(lambda, a.get(ch, y, x), b.get(ch, y, x))
            } else {
                a.get(ch, y, x)
            }
        }),
        MoaOp::CutBlur(r) => {
            let blurred = degrade_restore(a, cutblur_scale)?;
            Image::from_fn(c, h, w, |ch, y, x| {
                if r.contains(y, x) {
                    blurred.get(ch, y, x)
                } else {
                    a.get(ch, y, x)
                }
            })
        }
    })
}

/// Draws one operation and applies it pairwise to `batch_a` with partners
/// `batch_b`. Returns the outputs and the drawn operation.
pub fn moa_apply<T: Scalar, R: Rng + ?Sized>(
    batch_a: &[Image<T>],
    batch_b: &[Image<T>],
    policy: &AugPolicy,
    rng: &mut R,
) -> Result<(Vec<Image<T>>, MoaOp)> {
    if batch_a.len() != batch_b.len() {
        return Err(Error::Shape(format!(
            "MOA batches differ in length: {} vs {}",
            batch_a.len(),
            batch_b.len()
        )));
    }
    let Some(first) = batch_a.first() else {
        return Ok((Vec::new(), MoaOp::None));
    };
    if let Some(bad) = batch_a.iter().chain(batch_b).find(|im| !im.same_shape(first)) {
        return Err(Error::Shape(format!(
            "MOA batch mixes shapes {:?} and {:?}",
            first.dims(),
            bad.dims()
        )));
    }
    let op = draw_moa(policy, first.height(), first.width(), rng)?;
    let out = batch_a
        .iter()
        .zip(batch_b)
        .map(|(a, b)| apply_moa(&op, a, b, policy.cutblur_scale))
        .collect::<Result<Vec<_>>>()?;
    Ok((out, op))
}
