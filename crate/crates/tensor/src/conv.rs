//! Zero-padded 2-D convolution (cross-correlation) via im2col + GEMM.

use crate::{Scalar, Tensor};

/// Images are processed in groups whose im2col matrix has about this many
/// columns, so that small late-stage feature maps still produce wide GEMMs.
const GROUP_COLS: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub const fn new(stride: usize, pad: usize) -> Self {
        ConvGeometry { stride, pad }
    }

    /// Output length along one axis, `None` when the kernel does not fit.
    pub fn out_len(&self, len: usize, k: usize) -> Option<usize> {
        if self.stride == 0 || len + 2 * self.pad < k {
            None
        } else {
            Some((len + 2 * self.pad - k) / self.stride + 1)
        }
    }
}

struct Layout {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    s: usize,
    p: usize,
}

impl Layout {
    fn new<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, geo: ConvGeometry) -> Layout {
        let (n, c, h, wd) = x.dims4();
        let (o, c2, kh, kw) = w.dims4();
        assert_eq!(c, c2, "conv2d: input has {c} channels, weight expects {c2}");
        let oh = geo.out_len(h, kh).expect("conv2d: kernel taller than padded input");
        let ow = geo.out_len(wd, kw).expect("conv2d: kernel wider than padded input");
        Layout {
            n,
            c,
            h,
            w: wd,
            o,
            kh,
            kw,
            oh,
            ow,
            s: geo.stride,
            p: geo.pad,
        }
    }

    fn ohw(&self) -> usize {
        self.oh * self.ow
    }

    fn ckk(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn group(&self) -> usize {
        GROUP_COLS.div_ceil(self.ohw()).clamp(1, self.n.max(1))
    }

    /// Valid output-column range `[lo, hi)` for kernel column `kj`.
    fn ox_range(&self, kj: usize) -> (usize, usize) {
        let lo = if self.p > kj {
            (self.p - kj).div_ceil(self.s)
        } else {
            0
        }
        .min(self.ow);
        let hi = if self.w + self.p > kj {
            ((self.w - 1 + self.p - kj) / self.s + 1).min(self.ow)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

fn im2col<T: Scalar>(l: &Layout, x: &[T], n0: usize, g: usize, cols: &mut [T]) {
    let ohw = l.ohw();
    let row_len = g * ohw;
    let plane = l.h * l.w;
    for ci in 0..l.c {
        for ki in 0..l.kh {
            for kj in 0..l.kw {
                let row = (ci * l.kh + ki) * l.kw + kj;
                let (lo, hi) = l.ox_range(kj);
                for im in 0..g {
                    let xin = &x[((n0 + im) * l.c + ci) * plane..][..plane];
                    for oy in 0..l.oh {
                        let dst = &mut cols[row * row_len + im * ohw + oy * l.ow..][..l.ow];
                        let iy = oy * l.s + ki;
                        if iy < l.p || iy - l.p >= l.h {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &xin[(iy - l.p) * l.w..][..l.w];
                        dst[..lo].fill(T::zero());
                        dst[hi..].fill(T::zero());
                        if hi > lo {
                            if l.s == 1 {
                                let ix0 = lo + kj - l.p;
                                dst[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                            } else {
                                for (ox, d) in dst[lo..hi].iter_mut().enumerate() {
                                    *d = src[(ox + lo) * l.s + kj - l.p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(l: &Layout, cols: &[T], n0: usize, g: usize, dx: &mut [T]) {
    let ohw = l.ohw();
    let row_len = g * ohw;
    let plane = l.h * l.w;
    for ci in 0..l.c {
        for ki in 0..l.kh {
            for kj in 0..l.kw {
                let row = (ci * l.kh + ki) * l.kw + kj;
                let (lo, hi) = l.ox_range(kj);
                if hi <= lo {
                    continue;
                }
                for im in 0..g {
                    let xin = &mut dx[((n0 + im) * l.c + ci) * plane..][..plane];
                    for oy in 0..l.oh {
                        let iy = oy * l.s + ki;
                        if iy < l.p || iy - l.p >= l.h {
                            continue;
                        }
                        let src = &cols[row * row_len + im * ohw + oy * l.ow..][..l.ow];
                        let dst = &mut xin[(iy - l.p) * l.w..][..l.w];
                        for ox in lo..hi {
                            let ix = ox * l.s + kj - l.p;
                            dst[ix] = dst[ix] + src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// `y = w * x + b`, weight layout `[out, in, kh, kw]`.
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: Option<&Tensor<T>>,
    geo: ConvGeometry,
) -> Tensor<T> {
    let l = Layout::new(x, w, geo);
    let mut out = if l.shifted() {
        forward_shifted(&l, x.data(), w.data())
    } else {
        forward_im2col(&l, x.data(), w.data())
    };
    if let Some(b) = b {
        assert_eq!(b.numel(), l.o, "conv2d: bias length");
        let bd = b.data();
        let od = out.data_mut();
        let ohw = l.ohw();
        for ni in 0..l.n {
            for (oc, &bv) in bd.iter().enumerate() {
                for v in &mut od[(ni * l.o + oc) * ohw..][..ohw] {
                    *v = *v + bv;
                }
            }
        }
    }
    out
}

fn forward_im2col<T: Scalar>(l: &Layout, xd: &[T], wd: &[T]) -> Tensor<T> {
    let (ohw, ckk) = (l.ohw(), l.ckk());
    let mut out = Tensor::zeros(&[l.n, l.o, l.oh, l.ow]);
    let g = l.group();
    let mut cols = vec![T::zero(); ckk * g * ohw];
    let mut tmp = if g > 1 {
        vec![T::zero(); l.o * g * ohw]
    } else {
        Vec::new()
    };
    let mut n0 = 0;
    while n0 < l.n {
        let gg = g.min(l.n - n0);
        let len = gg * ohw;
        im2col(l, xd, n0, gg, &mut cols[..ckk * len]);
        let od = out.data_mut();
        if gg == 1 {
            T::gemm(
                l.o,
                ckk,
                ohw,
                T::one(),
                wd,
                ckk,
                1,
                &cols,
                ohw,
                1,
                T::zero(),
                &mut od[n0 * l.o * ohw..(n0 + 1) * l.o * ohw],
                ohw,
                1,
            );
        } else {
            T::gemm(
                l.o,
                ckk,
                len,
                T::one(),
                wd,
                ckk,
                1,
                &cols,
                len,
                1,
                T::zero(),
                &mut tmp,
                len,
                1,
            );
            for im in 0..gg {
                for oc in 0..l.o {
                    od[((n0 + im) * l.o + oc) * ohw..][..ohw]
                        .copy_from_slice(&tmp[oc * len + im * ohw..][..ohw]);
                }
            }
        }
        n0 += gg;
    }
    out
}

#[derive(Debug, Default)]
pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Option<Tensor<T>>,
    pub db: Option<Tensor<T>>,
}

/// Gradients of `conv2d_forward` given the output gradient `gy`.
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    gy: &Tensor<T>,
    geo: ConvGeometry,
    need_dx: bool,
    need_dw: bool,
    need_db: bool,
) -> ConvGrads<T> {
    let l = Layout::new(x, w, geo);
    let ohw = l.ohw();
    assert_eq!(gy.shape(), &[l.n, l.o, l.oh, l.ow], "conv2d_backward: gy shape");
    let mut grads = ConvGrads {
        dx: None,
        dw: None,
        db: None,
    };
    let gyd = gy.data();
    if need_db {
        let mut db = vec![T::zero(); l.o];
        for ni in 0..l.n {
            for (oc, acc) in db.iter_mut().enumerate() {
                let s: T = gyd[(ni * l.o + oc) * ohw..][..ohw].iter().copied().sum();
                *acc = *acc + s;
            }
        }
        grads.db = Some(Tensor::from_vec(&[l.o], db));
    }
    if !need_dx && !need_dw {
        return grads;
    }
    let (dx, dw) = if l.shifted() {
        backward_shifted(&l, x.data(), w.data(), gyd, need_dx, need_dw)
    } else {
        backward_im2col(&l, x.data(), w.data(), gyd, need_dx, need_dw)
    };
    grads.dx = dx;
    grads.dw = dw;
    grads
}

type DxDw<T> = (Option<Tensor<T>>, Option<Tensor<T>>);

fn backward_im2col<T: Scalar>(l: &Layout, xd: &[T], wd: &[T], gyd: &[T], need_dx: bool, need_dw: bool) -> DxDw<T> {
    let (ohw, ckk) = (l.ohw(), l.ckk());
    let g = l.group();
    let mut cols = vec![T::zero(); ckk * g * ohw];
    let mut gy_tmp = if g > 1 {
        vec![T::zero(); l.o * g * ohw]
    } else {
        Vec::new()
    };
    let mut dw = need_dw.then(|| Tensor::zeros(&[l.o, l.c, l.kh, l.kw]));
    let mut dx = need_dx.then(|| Tensor::zeros(&[l.n, l.c, l.h, l.w]));
    let mut n0 = 0;
    while n0 < l.n {
        let gg = g.min(l.n - n0);
        let len = gg * ohw;
        let gy_group: &[T] = if gg == 1 {
            &gyd[n0 * l.o * ohw..(n0 + 1) * l.o * ohw]
        } else {
            for im in 0..gg {
                for oc in 0..l.o {
                    gy_tmp[oc * len + im * ohw..][..ohw]
                        .copy_from_slice(&gyd[((n0 + im) * l.o + oc) * ohw..][..ohw]);
                }
            }
            &gy_tmp[..l.o * len]
        };
        if let Some(dw) = dw.as_mut() {
            im2col(l, xd, n0, gg, &mut cols[..ckk * len]);
            T::gemm(
                l.o,
                len,
                ckk,
                T::one(),
                gy_group,
                len,
                1,
                &cols,
                1,
                len,
                T::one(),
                dw.data_mut(),
                ckk,
                1,
            );
        }
        if let Some(dx) = dx.as_mut() {
            T::gemm(
                ckk,
                l.o,
                len,
                T::one(),
                wd,
                1,
                ckk,
                gy_group,
                len,
                1,
                T::zero(),
                &mut cols[..ckk * len],
                len,
                1,
            );
            col2im(l, &cols[..ckk * len], n0, gg, dx.data_mut());
        }
        n0 += gg;
    }
    (dx, dw)
}

// Stride-1 path without im2col. Inputs are zero-padded into a channel-major
// `[c, n, hp, wp]` buffer; output position `q = (ni * hp + oy) * wp + ox` on
// the padded grid then reads tap `(ki, kj)` at `q + ki * wp + kj`, so every
// tap is one GEMM over contiguous memory. Positions with `ox >= ow` or
// `oy >= oh` are computed and discarded.

impl Layout {
    fn shifted(&self) -> bool {
        self.s == 1
    }

    fn padded(&self) -> (usize, usize, usize) {
        let (hp, wp) = (self.h + 2 * self.p, self.w + 2 * self.p);
        (hp, wp, self.n * hp * wp)
    }

    /// Number of padded-grid positions every tap can read without overrun.
    fn span(&self) -> usize {
        let (_, wp, np) = self.padded();
        np - (self.kh - 1) * wp - (self.kw - 1)
    }
}

fn pad_channel_major<T: Scalar>(l: &Layout, x: &[T]) -> Vec<T> {
    let (hp, wp, np) = l.padded();
    let mut out = vec![T::zero(); l.c * np];
    for ni in 0..l.n {
        for ci in 0..l.c {
            let src = &x[(ni * l.c + ci) * l.h * l.w..][..l.h * l.w];
            let dst = &mut out[ci * np + ni * hp * wp..][..hp * wp];
            for y in 0..l.h {
                dst[(y + l.p) * wp + l.p..][..l.w].copy_from_slice(&src[y * l.w..][..l.w]);
            }
        }
    }
    out
}

fn forward_shifted<T: Scalar>(l: &Layout, xd: &[T], wd: &[T]) -> Tensor<T> {
    let (hp, wp, np) = l.padded();
    let (kk, span) = (l.kh * l.kw, l.span());
    let xp = pad_channel_major(l, xd);
    let mut big = vec![T::zero(); l.o * np];
    for ki in 0..l.kh {
        for kj in 0..l.kw {
            let tap = ki * l.kw + kj;
            let shift = ki * wp + kj;
            T::gemm(
                l.o,
                l.c,
                span,
                T::one(),
                &wd[tap..],
                l.c * kk,
                kk,
                &xp[shift..],
                np,
                1,
                T::one(),
                &mut big,
                np,
                1,
            );
        }
    }
    let mut out = Tensor::zeros(&[l.n, l.o, l.oh, l.ow]);
    let od = out.data_mut();
    for ni in 0..l.n {
        for oc in 0..l.o {
            let src = &big[oc * np + ni * hp * wp..];
            let dst = &mut od[(ni * l.o + oc) * l.ohw()..][..l.ohw()];
            for oy in 0..l.oh {
                dst[oy * l.ow..][..l.ow].copy_from_slice(&src[oy * wp..][..l.ow]);
            }
        }
    }
    out
}

fn backward_shifted<T: Scalar>(l: &Layout, xd: &[T], wd: &[T], gyd: &[T], need_dx: bool, need_dw: bool) -> DxDw<T> {
    let (hp, wp, np) = l.padded();
    let (kk, span) = (l.kh * l.kw, l.span());
    let mut gbig = vec![T::zero(); l.o * np];
    for ni in 0..l.n {
        for oc in 0..l.o {
            let src = &gyd[(ni * l.o + oc) * l.ohw()..][..l.ohw()];
            let dst = &mut gbig[oc * np + ni * hp * wp..];
            for oy in 0..l.oh {
                dst[oy * wp..][..l.ow].copy_from_slice(&src[oy * l.ow..][..l.ow]);
            }
        }
    }
    let mut dw = None;
    if need_dw {
        let xp = pad_channel_major(l, xd);
        let mut t = Tensor::zeros(&[l.o, l.c, l.kh, l.kw]);
        for ki in 0..l.kh {
            for kj in 0..l.kw {
                let tap = ki * l.kw + kj;
                T::gemm(
                    l.o,
                    span,
                    l.c,
                    T::one(),
                    &gbig,
                    np,
                    1,
                    &xp[ki * wp + kj..],
                    1,
                    np,
                    T::zero(),
                    &mut t.data_mut()[tap..],
                    l.c * kk,
                    kk,
                );
            }
        }
        dw = Some(t);
    }
    let mut dx = None;
    if need_dx {
        let mut dxp = vec![T::zero(); l.c * np];
        for ki in 0..l.kh {
            for kj in 0..l.kw {
                let tap = ki * l.kw + kj;
                T::gemm(
                    l.c,
                    l.o,
                    span,
                    T::one(),
                    &wd[tap..],
                    kk,
                    l.c * kk,
                    &gbig,
                    np,
                    1,
                    T::one(),
                    &mut dxp[ki * wp + kj..],
                    np,
                    1,
                );
            }
        }
        let mut t = Tensor::zeros(&[l.n, l.c, l.h, l.w]);
        let td = t.data_mut();
        for ni in 0..l.n {
            for ci in 0..l.c {
                let src = &dxp[ci * np + ni * hp * wp..];
                let dst = &mut td[(ni * l.c + ci) * l.h * l.w..][..l.h * l.w];
                for y in 0..l.h {
                    dst[y * l.w..][..l.w].copy_from_slice(&src[(y + l.p) * wp + l.p..][..l.w]);
                }
            }
        }
        dx = Some(t);
    }
    (dx, dw)
}
