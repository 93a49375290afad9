use std::path::Path;

use multisr_tensor::{ConvGeometry, Graph, ParamSet, Scalar, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{export_params, gaussian, import_params};
use crate::container::Container;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    PretrainedClassifier,
    FixedRandom,
}

/// A frozen feature extractor. Inputs are `[N, 3, H, W]` in `[0, 1]`.
pub trait FeatureBackbone<T: Scalar>: Send + Sync {
    fn provenance(&self) -> Provenance;

    /// Feature maps from shallow to deep, built into `g` so gradients can
    /// flow back to `x`.
    fn features(&self, g: &Graph<T>, x: Var) -> Result<Vec<Var>>;

    /// Feature maps for a plain batch.
    fn extract(&self, batch: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let g = Graph::new();
        let x = g.constant(batch.clone());
        Ok(self
            .features(&g, x)?
            .into_iter()
            .map(|f| (*g.value(f)).clone())
            .collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub stride: usize,
    pub pad: usize,
    pub relu: bool,
    /// Whether the activation after this layer is exposed as a feature map.
    pub tap: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct StackMeta {
    kind: String,
    provenance: Provenance,
    layers: Vec<LayerSpec>,
}

const STACK_KIND: &str = "conv_stack";

/// Plain conv (+ReLU) stack with frozen weights. Inputs are mapped to
/// `[-1, 1]` before the first layer.
#[derive(Clone, Debug)]
pub struct ConvStack<T: Scalar> {
    layers: Vec<LayerSpec>,
    params: ParamSet<T>,
    provenance: Provenance,
}

impl<T: Scalar> ConvStack<T> {
    pub const FIXED_RANDOM_SEED: u64 = 0x5eed_f00d;

    /// Three 3x3 layers (3->16, 16->32 stride 2, 32->32) with He-scaled
    /// Gaussian weights drawn from a pinned seed.
    pub fn fixed_random() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(Self::FIXED_RANDOM_SEED);
        let mut params = ParamSet::new();
        let dims = [(3usize, 16usize, 1usize), (16, 32, 2), (32, 32, 1)];
        let mut layers = Vec::new();
        for (i, &(cin, cout, stride)) in dims.iter().enumerate() {
            let std = (2.0 / (cin * 9) as f64).sqrt();
            params.push(format!("layer{i}.weight"), gaussian(&[cout, cin, 3, 3], std, &mut rng));
            params.push(format!("layer{i}.bias"), Tensor::zeros(&[cout]));
            layers.push(LayerSpec {
                stride,
                pad: 1,
                relu: true,
                tap: true,
            });
        }
        ConvStack {
            layers,
            params,
            provenance: Provenance::FixedRandom,
        }
    }

    /// Loads a stack written by [`ConvStack::save`] (or converted from a
    /// pretrained classifier into the same layout).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let c = Container::load(path).map_err(|e| match e {
            Error::Io { .. } => Error::BackboneUnavailable(format!("{}: {e}", path.display())),
            other => other,
        })?;
        let meta: StackMeta = serde_json::from_value(c.meta.clone())
            .map_err(|e| Error::BackboneUnavailable(format!("{}: {e}", path.display())))?;
        if meta.kind != STACK_KIND || meta.layers.is_empty() {
            return Err(Error::BackboneUnavailable(format!(
                "{} is not a feature-stack file",
                path.display()
            )));
        }
        let mut params = ParamSet::new();
        for i in 0..meta.layers.len() {
            for part in ["weight", "bias"] {
                let name = format!("layer{i}.{part}");
                let t = c
                    .tensor::<T>(&name)
                    .ok_or_else(|| Error::BackboneUnavailable(format!("missing array {name}")))?;
                params.push(name, t);
            }
        }
        let mut stack = ConvStack {
            layers: meta.layers,
            params,
            provenance: meta.provenance,
        };
        import_params(&mut stack.params, "", &c)?;
        Ok(stack)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = StackMeta {
            kind: STACK_KIND.into(),
            provenance: self.provenance,
            layers: self.layers.clone(),
        };
        let mut c = Container::new(serde_json::to_value(meta)?);
        export_params(&self.params, "", &mut c);
        c.save(path)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }
}

impl<T: Scalar> FeatureBackbone<T> for ConvStack<T> {
    fn provenance(&self) -> Provenance {
        self.provenance
    }

    fn features(&self, g: &Graph<T>, x: Var) -> Result<Vec<Var>> {
        let shape = g.shape(x);
        let cin = self.params.get(0).value().shape()[1];
        if shape.len() != 4 || shape[1] != cin {
            return Err(Error::Shape(format!(
                "backbone expects [N, {cin}, H, W], got {shape:?}"
            )));
        }
        let ones = g.constant(Tensor::full(&shape, T::one()));
        let mut f = g.sub(g.scale(x, T::lit(2.0)), ones);
        let mut taps = Vec::new();
        for (i, spec) in self.layers.iter().enumerate() {
            let w = self.params.get(2 * i);
            let (k, h, wd) = (w.value().shape()[2], g.shape(f)[2], g.shape(f)[3]);
            let geo = ConvGeometry::new(spec.stride, spec.pad);
            if geo.out_len(h, k).is_none() || geo.out_len(wd, k).is_none() {
                return Err(Error::Size(format!("backbone layer {i} does not fit a {h}x{wd} map")));
            }
            let wv = g.param(w, false);
            let bv = g.param(self.params.get(2 * i + 1), false);
            f = g.conv2d(f, wv, Some(bv), geo);
            if spec.relu {
                f = g.relu(f);
            }
            if spec.tap {
                taps.push(f);
            }
        }
        if taps.is_empty() {
            taps.push(f);
        }
        Ok(taps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_random_is_pinned() {
        let a = ConvStack::<f32>::fixed_random();
        let b = ConvStack::<f32>::fixed_random();
        assert_eq!(a.params.get(0).value(), b.params.get(0).value());
        let f = a.extract(&Tensor::full(&[1, 3, 8, 8], 0.25)).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f[2].shape(), &[1, 32, 4, 4]);
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.bin");
        let a = ConvStack::<f32>::fixed_random().with_provenance(Provenance::PretrainedClassifier);
        a.save(&path).unwrap();
        let b = ConvStack::<f32>::load(&path).unwrap();
        assert_eq!(b.provenance(), Provenance::PretrainedClassifier);
        let x = Tensor::from_fn(&[1, 3, 6, 6], |i| (i % 7) as f32 / 7.0);
        assert_eq!(a.extract(&x).unwrap(), b.extract(&x).unwrap());
        assert!(matches!(
            ConvStack::<f32>::load(dir.path().join("missing.bin")),
            Err(Error::BackboneUnavailable(_))
        ));
    }
}
