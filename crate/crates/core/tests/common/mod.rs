#![allow(dead_code)]

pub mod desk;
pub mod oracles;

use multisr_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, c: usize, h: usize, w: usize) -> Image<f64> {
    Image::from_fn(c, h, w, |_, _, _| rng.random())
}

/// Worst relative error between the graph's gradient and central
/// differences, over every element of every input.
pub fn loss_grad_err(
    inputs: &[multisr_core::Tensor<f64>],
    f: impl Fn(&multisr_tensor::Graph<f64>, &[multisr_tensor::Var]) -> multisr_tensor::Var,
) -> f64 {
    use multisr_core::Tensor;
    use multisr_tensor::Graph;
    let g = Graph::new();
    let vs: Vec<_> = inputs.iter().map(|x| g.variable(x.clone())).collect();
    let grads = g.backward(f(&g, &vs));
    let mut worst = 0.0f64;
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vs[k]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        let numeric = oracles::numeric_grad(x.data(), 1e-6, |p| {
            let g = Graph::new();
            let vs: Vec<_> = inputs
                .iter()
                .enumerate()
                .map(|(j, t)| {
                    let t = if j == k { Tensor::from_vec(t.shape(), p.to_vec()) } else { t.clone() };
                    g.constant(t)
                })
                .collect();
            g.item(f(&g, &vs))
        });
        worst = worst.max(oracles::max_rel_err(analytic.data(), &numeric));
    }
    worst
}

/// Uniform tensor in `[lo, hi)`.
pub fn uniform(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> multisr_core::Tensor<f64> {
    multisr_core::Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Whether every pixel of `out` is one the drawn MOA operation may produce
/// from `a` and its partner `b`: a pixel of either at the same location, a
/// convex mix of the two, the fill value, a channel of `a`'s pixel, a blend
/// with the drawn colour, or degraded content of `a`. Region operations
/// must leave everything outside the region equal to `a`.
pub fn moa_members(
    op: &multisr_core::augment::MoaOp,
    a: &Image<f64>,
    b: &Image<f64>,
    out: &Image<f64>,
) -> bool {
    use multisr_core::augment::{degrade_restore, MoaOp};
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
    let blurred = match op {
        MoaOp::CutBlur(_) => Some(degrade_restore(a, 4).unwrap()),
        _ => None,
    };
    let region = match *op {
        MoaOp::Cutout(r) | MoaOp::CutMix(r) | MoaOp::CutBlur(r) => Some(r),
        MoaOp::CutMixup { region, .. } => Some(region),
        _ => None,
    };
    let (c, h, w) = a.dims();
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let (pa, pb, v) = (a.get(ch, y, x), b.get(ch, y, x), out.get(ch, y, x));
                if region.is_some_and(|r| !r.contains(y, x)) {
                    if v != pa {
                        return false;
                    }
                    continue;
                }
                let ok = match *op {
                    MoaOp::None => v == pa,
                    MoaOp::Blend { alpha, color } => close(v, alpha * pa + (1.0 - alpha) * color[ch]),
                    MoaOp::RgbPerm(p) => v == a.get(p[ch], y, x),
                    MoaOp::Mixup { lambda } | MoaOp::CutMixup { lambda, .. } => {
                        (0.0..=1.0).contains(&lambda) && close(v, lambda * pa + (1.0 - lambda) * pb)
                    }
                    MoaOp::Cutout(_) => v == 0.0,
                    MoaOp::CutMix(_) => v == pb,
                    MoaOp::CutBlur(_) => v == blurred.as_ref().unwrap().get(ch, y, x),
                };
                if !ok {
                    return false;
                }
            }
        }
    }
    true
}
