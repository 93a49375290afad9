//! Generator and discriminator objectives. Every loss is a graph op so the
//! same code drives training and gradient checks.

use multisr_tensor::{Graph, Scalar, Var};
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, NUM_DOMAINS};
use crate::models::FeatureBackbone;
use crate::{Error, Result};

fn same_shape<T: Scalar>(g: &Graph<T>, a: Var, b: Var, what: &str) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")));
    }
    Ok(())
}

/// Mean absolute difference.
pub fn l1_loss<T: Scalar>(g: &Graph<T>, a: Var, b: Var) -> Result<Var> {
    same_shape(g, a, b, "l1_loss")?;
    Ok(g.mean_abs_diff(a, b))
}

/// Mean absolute difference between a source batch and its reconstruction.
pub fn cycle_loss<T: Scalar>(g: &Graph<T>, source: Var, reconstructed: Var) -> Result<Var> {
    same_shape(g, source, reconstructed, "cycle_loss")?;
    Ok(g.mean_abs_diff(source, reconstructed))
}

/// Anisotropic total variation: mean |horizontal| plus mean |vertical|
/// forward differences, no wraparound.
pub fn tv_loss<T: Scalar>(g: &Graph<T>, img: Var) -> Result<Var> {
    let s = g.shape(img);
    if s.len() != 4 || s[2] < 2 || s[3] < 2 {
        return Err(Error::Size(format!("tv_loss needs H, W >= 2, got {s:?}")));
    }
    Ok(g.total_variation(img))
}

/// Mean squared distance between the deepest backbone feature maps.
pub fn perceptual_loss<T: Scalar>(
    g: &Graph<T>,
    a: Var,
    b: Var,
    backbone: Option<&dyn FeatureBackbone<T>>,
) -> Result<Var> {
    same_shape(g, a, b, "perceptual_loss")?;
    let bb = backbone.ok_or_else(|| {
        Error::BackboneUnavailable("no feature extractor configured for the perceptual loss".into())
    })?;
    let fa = *bb.features(g, a)?.last().expect("backbone yields a feature map");
    let fb = *bb.features(g, b)?.last().expect("backbone yields a feature map");
    Ok(g.mean_sq_diff(fa, fb))
}

/// Non-saturating generator loss: BCE of fake patch scores against "real".
pub fn adversarial_g<T: Scalar>(g: &Graph<T>, fake_scores: Var) -> Var {
    g.bce_with_logits(fake_scores, T::one())
}

/// Two-sided discriminator loss: BCE(real, 1) + BCE(fake, 0).
pub fn adversarial_d<T: Scalar>(g: &Graph<T>, real_scores: Var, fake_scores: Var) -> Var {
    let r = g.bce_with_logits(real_scores, T::one());
    let f = g.bce_with_logits(fake_scores, T::zero());
    g.weighted_sum(&[(r, T::one()), (f, T::one())])
}

/// Softmax cross-entropy of `[N, 5, 1, 1]` logits against domain labels.
pub fn cls_loss<T: Scalar>(g: &Graph<T>, logits: Var, labels: &[Domain]) -> Result<Var> {
    let s = g.shape(logits);
    let per_row: usize = s.iter().skip(1).product();
    if s.is_empty() || s[0] != labels.len() || per_row != NUM_DOMAINS {
        return Err(Error::Shape(format!(
            "cls_loss: logits {s:?} for {} labels",
            labels.len()
        )));
    }
    let ids: Vec<usize> = labels.iter().map(|l| l.id()).collect();
    Ok(g.cross_entropy(logits, &ids))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub per: f64,
    pub gan: f64,
    pub tv: f64,
    pub cls: f64,
    pub l1: f64,
    pub cyc: f64,
    pub gan_d: f64,
    pub cls_r: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            per: 1.0,
            gan: 1.0,
            tv: 1.0,
            cls: 1.0,
            l1: 10.0,
            cyc: 10.0,
            gan_d: 1.0,
            cls_r: 1.0,
        }
    }
}

impl LossWeights {
    pub fn zero() -> Self {
        LossWeights {
            per: 0.0,
            gan: 0.0,
            tv: 0.0,
            cls: 0.0,
            l1: 0.0,
            cyc: 0.0,
            gan_d: 0.0,
            cls_r: 0.0,
        }
    }

    pub fn problems(&self) -> Vec<String> {
        self.named()
            .iter()
            .filter(|(_, w)| !(*w >= 0.0 && w.is_finite()))
            .map(|(n, w)| format!("loss.{n} must be a finite non-negative weight, got {w}"))
            .collect()
    }

    fn named(&self) -> [(&'static str, f64); 8] {
        [
            ("per", self.per),
            ("gan", self.gan),
            ("tv", self.tv),
            ("cls", self.cls),
            ("l1", self.l1),
            ("cyc", self.cyc),
            ("gan_d", self.gan_d),
            ("cls_r", self.cls_r),
        ]
    }
}

/// Generator loss terms for one step. Absent supervised terms count as zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParts {
    pub per: f64,
    pub gan: f64,
    pub tv: f64,
    pub cls: f64,
    pub l1: f64,
    pub cyc: f64,
}

impl GeneratorParts {
    pub fn terms(&self, w: &LossWeights) -> [(&'static str, f64, f64); 6] {
        [
            ("per", self.per, w.per),
            ("gan", self.gan, w.gan),
            ("tv", self.tv, w.tv),
            ("cls_f", self.cls, w.cls),
            ("l1", self.l1, w.l1),
            ("cyc", self.cyc, w.cyc),
        ]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorParts {
    pub gan: f64,
    pub cls_r: f64,
}

impl DiscriminatorParts {
    pub fn terms(&self, w: &LossWeights) -> [(&'static str, f64, f64); 2] {
        [("gan_d", self.gan, w.gan_d), ("cls_r", self.cls_r, w.cls_r)]
    }
}

fn weighted<const K: usize>(terms: [(&'static str, f64, f64); K], iteration: u64) -> Result<f64> {
    let mut total = 0.0;
    for (term, v, w) in terms {
        if !v.is_finite() {
            return Err(Error::Divergence {
                term: term.into(),
                iteration,
                value: v,
            });
        }
        total += w * v;
    }
    Ok(total)
}

pub fn total_g(parts: &GeneratorParts, w: &LossWeights, iteration: u64) -> Result<f64> {
    weighted(parts.terms(w), iteration)
}

pub fn total_d(parts: &DiscriminatorParts, w: &LossWeights, iteration: u64) -> Result<f64> {
    weighted(parts.terms(w), iteration)
}
