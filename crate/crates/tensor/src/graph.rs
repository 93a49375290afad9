//! Define-by-run reverse-mode autodiff.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s. Calling
//! [`Graph::backward`] on a scalar walks the record in reverse and returns
//! gradients for every leaf created with `requires_grad = true`. Nodes that do
//! not depend on such a leaf are never differentiated.

use std::cell::RefCell;
use std::sync::Arc;

use crate::conv::{conv2d_backward, conv2d_forward, ConvGeometry};
use crate::{Param, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geo: ConvGeometry,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, T),
    Sin(Var),
    Relu(Var),
    LeakyRelu(Var, T),
    ConcatChannels(Var, Var),
    SelectBatch(Var, Vec<usize>),
    BallProject {
        r: Var,
        theta: Var,
        sigma: Var,
    },
    MeanAbsDiff(Var, Var),
    MeanSqDiff(Var, Var),
    TotalVariation(Var),
    BceWithLogits(Var, T),
    CrossEntropy(Var, Vec<usize>),
    WeightedSum(Vec<(Var, T)>),
    Mean(Var),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    needs_grad: bool,
}

pub struct Graph<T: Scalar> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Arc::new(value),
            op,
            needs_grad,
        });
        Var(nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].needs_grad)
    }

    pub fn leaf(&self, value: Arc<Tensor<T>>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad: requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn constant(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn variable(&self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Binds a parameter without copying its storage.
    pub fn param(&self, p: &Param<T>, trainable: bool) -> Var {
        self.leaf(p.shared(), trainable)
    }

    pub fn value(&self, v: Var) -> Arc<Tensor<T>> {
        Arc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    /// First element of `v`, typically a scalar loss.
    pub fn item(&self, v: Var) -> T {
        self.nodes.borrow()[v.0].value.data()[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].needs_grad
    }

    pub fn conv2d(&self, x: Var, w: Var, b: Option<Var>, geo: ConvGeometry) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let bv = b.map(|b| self.value(b));
        let out = conv2d_forward(&xv, &wv, bv.as_deref(), geo);
        let mut deps = vec![x, w];
        deps.extend(b);
        let needs = self.needs(&deps);
        self.push(out, Op::Conv2d { x, w, b, geo }, needs)
    }

    pub fn add(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(&self.value(b), |x, y| x + y);
        let needs = self.needs(&[a, b]);
        self.push(out, Op::Add(a, b), needs)
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(&self.value(b), |x, y| x - y);
        let needs = self.needs(&[a, b]);
        self.push(out, Op::Sub(a, b), needs)
    }

    pub fn scale(&self, a: Var, s: T) -> Var {
        let out = self.value(a).map(|x| x * s);
        let needs = self.needs(&[a]);
        self.push(out, Op::Scale(a, s), needs)
    }

    pub fn sin(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.sin());
        let needs = self.needs(&[a]);
        self.push(out, Op::Sin(a), needs)
    }

    pub fn relu(&self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(T::zero()));
        let needs = self.needs(&[a]);
        self.push(out, Op::Relu(a), needs)
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Var {
        let out = self
            .value(a)
            .map(|x| if x > T::zero() { x } else { x * slope });
        let needs = self.needs(&[a]);
        self.push(out, Op::LeakyRelu(a, slope), needs)
    }

    /// Concatenates two NCHW tensors along the channel axis.
    pub fn concat_channels(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        let (n, ca, h, w) = av.dims4();
        let (n2, cb, h2, w2) = bv.dims4();
        assert!(n == n2 && h == h2 && w == w2, "concat_channels: mismatched NHW");
        let (pa, pb) = (ca * h * w, cb * h * w);
        let mut data = Vec::with_capacity(n * (pa + pb));
        for i in 0..n {
            data.extend_from_slice(&av.data()[i * pa..(i + 1) * pa]);
            data.extend_from_slice(&bv.data()[i * pb..(i + 1) * pb]);
        }
        let out = Tensor::from_vec(&[n, ca + cb, h, w], data);
        let needs = self.needs(&[a, b]);
        self.push(out, Op::ConcatChannels(a, b), needs)
    }

    /// Rows of the leading axis at `idx` (repeats allowed).
    pub fn select_batch(&self, a: Var, idx: &[usize]) -> Var {
        let av = self.value(a);
        let per: usize = av.shape()[1..].iter().product();
        let mut data = Vec::with_capacity(idx.len() * per);
        for &i in idx {
            data.extend_from_slice(&av.data()[i * per..(i + 1) * per]);
        }
        let mut shape = av.shape().to_vec();
        shape[0] = idx.len();
        let needs = self.needs(&[a]);
        self.push(Tensor::from_vec(&shape, data), Op::SelectBatch(a, idx.to_vec()), needs)
    }

    /// Per-sample orthogonal projection onto the l2 ball of radius
    /// `max(theta,0) * max(sigma,0) * sqrt(m - 1)`, `m` the per-sample size.
    pub fn ball_project(&self, r: Var, theta: Var, sigma: Var) -> Var {
        let rv = self.value(r);
        let th = self.item(theta).max(T::zero());
        let sg = self.item(sigma).max(T::zero());
        let n = rv.shape()[0];
        let m = rv.numel() / n.max(1);
        let rho = th * sg * T::lit((m as f64 - 1.0).max(0.0).sqrt());
        let mut out = (*rv).clone();
        for s in out.data_mut().chunks_mut(m.max(1)) {
            let norm = s.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > rho {
                let f = rho / norm;
                for v in s.iter_mut() {
                    *v = *v * f;
                }
            }
        }
        let needs = self.needs(&[r, theta, sigma]);
        self.push(out, Op::BallProject { r, theta, sigma }, needs)
    }

    pub fn mean_abs_diff(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_abs_diff shape mismatch");
        let s: T = av.data().iter().zip(bv.data()).map(|(&x, &y)| (x - y).abs()).sum();
        let out = Tensor::scalar(s / T::lit(av.numel() as f64));
        let needs = self.needs(&[a, b]);
        self.push(out, Op::MeanAbsDiff(a, b), needs)
    }

    pub fn mean_sq_diff(&self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.shape(), bv.shape(), "mean_sq_diff shape mismatch");
        let s: T = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| (x - y) * (x - y))
            .sum();
        let out = Tensor::scalar(s / T::lit(av.numel() as f64));
        let needs = self.needs(&[a, b]);
        self.push(out, Op::MeanSqDiff(a, b), needs)
    }

    /// Anisotropic total variation: mean |horizontal forward difference|
    /// plus mean |vertical forward difference|. Needs H, W >= 2.
    pub fn total_variation(&self, a: Var) -> Var {
        let av = self.value(a);
        let (n, c, h, w) = av.dims4();
        assert!(h >= 2 && w >= 2, "total_variation needs H, W >= 2");
        let d = av.data();
        let (mut sh, mut sv) = (T::zero(), T::zero());
        for p in 0..n * c {
            let img = &d[p * h * w..(p + 1) * h * w];
            for y in 0..h {
                for x in 0..w {
                    let v = img[y * w + x];
                    if x + 1 < w {
                        sh = sh + (img[y * w + x + 1] - v).abs();
                    }
                    if y + 1 < h {
                        sv = sv + (img[(y + 1) * w + x] - v).abs();
                    }
                }
            }
        }
        let ph = T::lit((n * c * h * (w - 1)) as f64);
        let pv = T::lit((n * c * (h - 1) * w) as f64);
        let out = Tensor::scalar(sh / ph + sv / pv);
        let needs = self.needs(&[a]);
        self.push(out, Op::TotalVariation(a), needs)
    }

    /// Mean binary cross-entropy of logits against a constant target in [0,1].
    pub fn bce_with_logits(&self, a: Var, target: T) -> Var {
        let av = self.value(a);
        let s: T = av
            .data()
            .iter()
            .map(|&x| softplus(x) - x * target)
            .sum();
        let out = Tensor::scalar(s / T::lit(av.numel() as f64));
        let needs = self.needs(&[a]);
        self.push(out, Op::BceWithLogits(a, target), needs)
    }

    /// Mean softmax cross-entropy; `a` is `[N, K, ...]` with trailing dims of
    /// size one, `labels[i] < K`.
    pub fn cross_entropy(&self, a: Var, labels: &[usize]) -> Var {
        let av = self.value(a);
        let n = av.shape()[0];
        assert_eq!(n, labels.len(), "cross_entropy: one label per row");
        let k = av.numel() / n;
        let mut s = T::zero();
        for (row, &y) in av.data().chunks(k).zip(labels) {
            assert!(y < k, "cross_entropy: label {y} out of range {k}");
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|&v| (v - mx).exp()).sum::<T>().ln();
            s = s + lse - row[y];
        }
        let out = Tensor::scalar(s / T::lit(n as f64));
        let needs = self.needs(&[a]);
        self.push(out, Op::CrossEntropy(a, labels.to_vec()), needs)
    }

    /// `sum_i w_i * v_i` over scalar vars.
    pub fn weighted_sum(&self, terms: &[(Var, T)]) -> Var {
        let mut s = T::zero();
        for &(v, w) in terms {
            s = s + w * self.item(v);
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let needs = self.needs(&vars);
        self.push(Tensor::scalar(s), Op::WeightedSum(terms.to_vec()), needs)
    }

    pub fn mean(&self, a: Var) -> Var {
        let av = self.value(a);
        let out = Tensor::scalar(av.sum() / T::lit(av.numel() as f64));
        let needs = self.needs(&[a]);
        self.push(out, Op::Mean(a), needs)
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Gradients<T> {
        let nodes = self.nodes.borrow();
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        assert_eq!(nodes[loss.0].value.numel(), 1, "backward needs a scalar loss");
        if !nodes[loss.0].needs_grad {
            return Gradients { grads };
        }
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape(), T::one()));

        let acc = |grads: &mut Vec<Option<Tensor<T>>>, v: Var, g: Tensor<T>| {
            if !nodes[v.0].needs_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            }
        };
        let needs = |v: Var| nodes[v.0].needs_grad;
        let val = |v: Var| &nodes[v.0].value;

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(gy) = grads[id].take() else {
                continue;
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::Conv2d { x, w, b, geo } => {
                    let g = conv2d_backward(
                        val(*x),
                        val(*w),
                        &gy,
                        *geo,
                        needs(*x),
                        needs(*w),
                        b.is_some_and(needs),
                    );
                    if let Some(dx) = g.dx {
                        acc(&mut grads, *x, dx);
                    }
                    if let Some(dw) = g.dw {
                        acc(&mut grads, *w, dw);
                    }
                    if let (Some(b), Some(db)) = (b, g.db) {
                        acc(&mut grads, *b, db);
                    }
                }
                Op::Add(a, b) => {
                    if needs(*a) && needs(*b) {
                        acc(&mut grads, *a, gy.clone());
                    } else if needs(*a) {
                        acc(&mut grads, *a, gy);
                        continue;
                    }
                    acc(&mut grads, *b, gy);
                }
                Op::Sub(a, b) => {
                    if needs(*b) {
                        acc(&mut grads, *b, gy.map(|v| -v));
                    }
                    acc(&mut grads, *a, gy);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    acc(&mut grads, *a, gy.map(|v| v * s));
                }
                Op::Sin(a) => {
                    let g = gy.zip_map(val(*a), |g, x| g * x.cos());
                    acc(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let g = gy.zip_map(val(*a), |g, x| if x > T::zero() { g } else { T::zero() });
                    acc(&mut grads, *a, g);
                }
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let g = gy.zip_map(val(*a), |g, x| if x > T::zero() { g } else { g * s });
                    acc(&mut grads, *a, g);
                }
                Op::ConcatChannels(a, b) => {
                    let (n, ca, h, w) = val(*a).dims4();
                    let cb = val(*b).dims4().1;
                    let (pa, pb) = (ca * h * w, cb * h * w);
                    let gd = gy.data();
                    if needs(*a) {
                        let mut d = Vec::with_capacity(n * pa);
                        for i in 0..n {
                            d.extend_from_slice(&gd[i * (pa + pb)..i * (pa + pb) + pa]);
                        }
                        acc(&mut grads, *a, Tensor::from_vec(val(*a).shape(), d));
                    }
                    if needs(*b) {
                        let mut d = Vec::with_capacity(n * pb);
                        for i in 0..n {
                            d.extend_from_slice(&gd[i * (pa + pb) + pa..(i + 1) * (pa + pb)]);
                        }
                        acc(&mut grads, *b, Tensor::from_vec(val(*b).shape(), d));
                    }
                }
                Op::SelectBatch(a, idx) => {
                    let src = val(*a);
                    let per: usize = src.shape()[1..].iter().product();
                    let mut g = Tensor::zeros(src.shape());
                    let gd = g.data_mut();
                    for (row, &i) in idx.iter().enumerate() {
                        for (d, &s) in gd[i * per..(i + 1) * per]
                            .iter_mut()
                            .zip(&gy.data()[row * per..(row + 1) * per])
                        {
                            *d = *d + s;
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::BallProject { r, theta, sigma } => {
                    let rv = val(*r);
                    let th_raw = val(*theta).data()[0];
                    let sg_raw = val(*sigma).data()[0];
                    let th = th_raw.max(T::zero());
                    let sg = sg_raw.max(T::zero());
                    let n = rv.shape()[0];
                    let m = rv.numel() / n.max(1);
                    let root = T::lit((m as f64 - 1.0).max(0.0).sqrt());
                    let rho = th * sg * root;
                    let mut dr = gy.clone();
                    let mut drho = T::zero();
                    for (rs, gs) in rv.data().chunks(m).zip(dr.data_mut().chunks_mut(m)) {
                        let norm = rs.iter().map(|&v| v * v).sum::<T>().sqrt();
                        if norm <= rho {
                            continue;
                        }
                        let dot: T = rs.iter().zip(gs.iter()).map(|(&a, &b)| a * b).sum();
                        let f = rho / norm;
                        let k = dot / (norm * norm);
                        for (g, &x) in gs.iter_mut().zip(rs) {
                            *g = f * (*g - x * k);
                        }
                        drho = drho + dot / norm;
                    }
                    if needs(*r) {
                        acc(&mut grads, *r, dr);
                    }
                    if th_raw > T::zero() {
                        acc(&mut grads, *theta, Tensor::scalar(drho * sg * root));
                    }
                    if sg_raw > T::zero() {
                        acc(&mut grads, *sigma, Tensor::scalar(drho * th * root));
                    }
                }
                Op::MeanAbsDiff(a, b) => {
                    let s = gy.data()[0] / T::lit(val(*a).numel() as f64);
                    let g = val(*a).zip_map(val(*b), |x, y| s * sign(x - y));
                    if needs(*b) {
                        acc(&mut grads, *b, g.map(|v| -v));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::MeanSqDiff(a, b) => {
                    let s = gy.data()[0] * T::lit(2.0 / val(*a).numel() as f64);
                    let g = val(*a).zip_map(val(*b), |x, y| s * (x - y));
                    if needs(*b) {
                        acc(&mut grads, *b, g.map(|v| -v));
                    }
                    acc(&mut grads, *a, g);
                }
                Op::TotalVariation(a) => {
                    let av = val(*a);
                    let (n, c, h, w) = av.dims4();
                    let gs = gy.data()[0];
                    let ch = gs / T::lit((n * c * h * (w - 1)) as f64);
                    let cv = gs / T::lit((n * c * (h - 1) * w) as f64);
                    let mut g = Tensor::zeros(av.shape());
                    let gd = g.data_mut();
                    let d = av.data();
                    for p in 0..n * c {
                        let base = p * h * w;
                        for y in 0..h {
                            for x in 0..w {
                                let i = base + y * w + x;
                                if x + 1 < w {
                                    let s = ch * sign(d[i + 1] - d[i]);
                                    gd[i + 1] = gd[i + 1] + s;
                                    gd[i] = gd[i] - s;
                                }
                                if y + 1 < h {
                                    let s = cv * sign(d[i + w] - d[i]);
                                    gd[i + w] = gd[i + w] + s;
                                    gd[i] = gd[i] - s;
                                }
                            }
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::BceWithLogits(a, t) => {
                    let t = *t;
                    let s = gy.data()[0] / T::lit(val(*a).numel() as f64);
                    acc(&mut grads, *a, val(*a).map(|x| s * (sigmoid(x) - t)));
                }
                Op::CrossEntropy(a, labels) => {
                    let av = val(*a);
                    let n = labels.len();
                    let k = av.numel() / n;
                    let s = gy.data()[0] / T::lit(n as f64);
                    let mut g = Tensor::zeros(av.shape());
                    for ((row, grow), &y) in av
                        .data()
                        .chunks(k)
                        .zip(g.data_mut().chunks_mut(k))
                        .zip(labels)
                    {
                        let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
                        let z: T = row.iter().map(|&v| (v - mx).exp()).sum();
                        for (j, (gv, &v)) in grow.iter_mut().zip(row).enumerate() {
                            let p = (v - mx).exp() / z;
                            let onehot = if j == y { T::one() } else { T::zero() };
                            *gv = s * (p - onehot);
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::WeightedSum(terms) => {
                    let gs = gy.data()[0];
                    for &(v, w) in terms {
                        acc(&mut grads, v, Tensor::scalar(gs * w));
                    }
                }
                Op::Mean(a) => {
                    let av = val(*a);
                    let s = gy.data()[0] / T::lit(av.numel() as f64);
                    acc(&mut grads, *a, Tensor::full(av.shape(), s));
                }
            }
        }
        Gradients { grads }
    }
}
