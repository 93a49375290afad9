//! Analytic gradients against central finite differences, in f64.

use multisr_tensor::{ConvGeometry, Graph, Tensor, Var};

const H: f64 = 1e-6;
const TOL: f64 = 1e-3;

/// Deterministic values in roughly [-1, 1], away from zero.
fn values(shape: &[usize], seed: u64) -> Tensor<f64> {
    Tensor::from_fn(shape, |i| {
        let t = ((i as u64 * 2654435761 + seed * 40503) % 10007) as f64 / 10007.0;
        let v = 2.0 * t - 1.0;
        if v.abs() < 0.05 { v + 0.1 } else { v }
    })
}

/// Checks d f / d inputs for a scalar-valued graph builder.
fn check(name: &str, inputs: Vec<Tensor<f64>>, f: impl Fn(&Graph<f64>, &[Var]) -> Var) {
    let eval = |xs: &[Tensor<f64>]| {
        let g = Graph::new();
        let vs: Vec<Var> = xs.iter().map(|x| g.constant(x.clone())).collect();
        g.item(f(&g, &vs))
    };
    let g = Graph::new();
    let vs: Vec<Var> = inputs.iter().map(|x| g.variable(x.clone())).collect();
    let grads = g.backward(f(&g, &vs));
    for (k, x) in inputs.iter().enumerate() {
        let analytic = grads.get(vs[k]).cloned().unwrap_or_else(|| Tensor::zeros(x.shape()));
        for i in 0..x.numel() {
            let mut xs = inputs.clone();
            xs[k].data_mut()[i] += H;
            let up = eval(&xs);
            xs[k].data_mut()[i] -= 2.0 * H;
            let down = eval(&xs);
            let num = (up - down) / (2.0 * H);
            let a = analytic.data()[i];
            let err = (a - num).abs() / a.abs().max(num.abs()).max(1e-6);
            assert!(err < TOL, "{name}: input {k} index {i}: analytic {a} numeric {num}");
        }
    }
}

#[test]
fn conv2d_stride_one_and_two() {
    for (stride, pad, side) in [(1, 1, 6), (2, 1, 8), (1, 2, 5)] {
        let x = values(&[2, 3, side, side], 1);
        let w = values(&[4, 3, 3, 3], 2);
        let b = values(&[4], 3);
        let r = values(&[2, 4, side + 4, side + 4], 4);
        check("conv2d", vec![x, w, b], move |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), ConvGeometry::new(stride, pad));
            let shape = g.shape(y);
            // Weight the output so every element carries a distinct cotangent.
            let n: usize = shape.iter().product();
            let rr = Tensor::from_vec(&shape, r.data()[..n].to_vec());
            g.mean_sq_diff(y, g.constant(rr))
        });
    }
}

#[test]
fn pointwise_ops() {
    let a = values(&[2, 3, 4, 4], 5);
    let b = values(&[2, 3, 4, 4], 6);
    check("add/sub/scale", vec![a.clone(), b.clone()], |g, v| {
        let s = g.sub(g.scale(g.add(v[0], v[1]), 1.5), v[1]);
        g.mean_sq_diff(s, g.sin(v[0]))
    });
    check("sin", vec![a.clone()], |g, v| g.mean(g.sin(g.scale(v[0], 3.0))));
    check("relu", vec![a.clone(), b.clone()], |g, v| g.mean_sq_diff(g.relu(v[0]), v[1]));
    check("leaky_relu", vec![a.clone(), b.clone()], |g, v| g.mean_sq_diff(g.leaky_relu(v[0], 0.01), v[1]));
    check("mean_abs_diff", vec![a.clone(), b.clone()], |g, v| g.mean_abs_diff(v[0], v[1]));
    check("total_variation", vec![a.clone()], |g, v| g.total_variation(v[0]));
}

#[test]
fn structural_ops() {
    let a = values(&[3, 2, 4, 4], 7);
    let b = values(&[3, 5, 4, 4], 8);
    check("concat_channels", vec![a.clone(), b.clone()], |g, v| {
        g.mean(g.sin(g.concat_channels(v[0], v[1])))
    });
    check("select_batch", vec![a.clone()], |g, v| g.mean(g.sin(g.select_batch(v[0], &[2, 0, 2]))));
    check("weighted_sum", vec![a.clone()], |g, v| {
        let p = g.mean(g.sin(v[0]));
        let q = g.total_variation(v[0]);
        g.weighted_sum(&[(p, 2.0), (q, 0.5)])
    });
}

#[test]
fn classification_losses() {
    let logits = values(&[4, 5], 9);
    check("cross_entropy", vec![logits.clone()], |g, v| g.cross_entropy(v[0], &[0, 3, 4, 1]));
    let map = values(&[4, 1, 2, 2], 10);
    check("bce real", vec![map.clone()], |g, v| g.bce_with_logits(v[0], 1.0));
    check("bce fake", vec![map], |g, v| g.bce_with_logits(v[0], 0.0));
}

#[test]
fn ball_projection_inside_and_outside() {
    let r = values(&[2, 3, 4, 4], 11);
    // Radius below the norm: the projection is active for both samples.
    let theta = Tensor::scalar(0.5);
    let sigma = Tensor::scalar(0.2);
    let t = values(&[2, 3, 4, 4], 12);
    check("ball_project active", vec![r.clone(), theta, sigma], |g, v| {
        g.mean_sq_diff(g.ball_project(v[0], v[1], v[2]), g.constant(t.clone()))
    });
    // Radius above the norm: identity in r, no dependence on the radius.
    let t = values(&[2, 3, 4, 4], 13);
    check("ball_project inactive", vec![r, Tensor::scalar(2.0), Tensor::scalar(1.0)], |g, v| {
        g.mean_sq_diff(g.ball_project(v[0], v[1], v[2]), g.constant(t.clone()))
    });
}
