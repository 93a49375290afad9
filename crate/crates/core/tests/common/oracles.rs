//! Independent brute-force reference implementations. They share no code
//! with the library beyond the `Image` container.

use multisr_core::Image;

/// Keys cubic convolution kernel written from its piecewise definition.
pub fn keys(t: f64, a: f64) -> f64 {
    let t = t.abs();
    let (t2, t3) = (t * t, t * t * t);
    if t < 1.0 {
        (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    } else if t < 2.0 {
        a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

pub fn tent(t: f64) -> f64 {
    (1.0 - t.abs()).max(0.0)
}

/// Mirror an out-of-range index back into `[0, n)` without repeating the
/// edge sample, by repeated folding.
pub fn mirror(mut i: i64, n: usize) -> usize {
    let n = n as i64;
    if n == 1 {
        return 0;
    }
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct 2-D weighted sum: every output pixel visits a window of input
/// pixels around its half-pixel-centred source coordinate.
pub fn resize_weighted(img: &Image<f64>, oh: usize, ow: usize, kernel: &dyn Fn(f64) -> f64, reach: i64) -> Image<f64> {
    let (c, h, w) = img.dims();
    let (ry, rx) = (h as f64 / oh as f64, w as f64 / ow as f64);
    Image::from_fn(c, oh, ow, |ch, oy, ox| {
        let sy = (oy as f64 + 0.5) * ry - 0.5;
        let sx = (ox as f64 + 0.5) * rx - 0.5;
        let (fy, fx) = (sy.floor() as i64, sx.floor() as i64);
        let mut acc = 0.0;
        for j in fy - reach..=fy + reach + 1 {
            let wy = kernel(j as f64 - sy);
            if wy == 0.0 {
                continue;
            }
            for i in fx - reach..=fx + reach + 1 {
                let wx = kernel(i as f64 - sx);
                if wx == 0.0 {
                    continue;
                }
                acc += wy * wx * img.get(ch, mirror(j, h), mirror(i, w));
            }
        }
        acc
    })
}

pub fn bicubic_down(img: &Image<f64>, s: usize) -> Image<f64> {
    resize_weighted(img, img.height() / s, img.width() / s, &|t| keys(t, -0.75), 2)
}

pub fn bilinear_down(img: &Image<f64>, s: usize) -> Image<f64> {
    resize_weighted(img, img.height() / s, img.width() / s, &tent, 1)
}

/// Top-left index selection.
pub fn nearest_down(img: &Image<f64>, s: usize) -> Image<f64> {
    let (c, h, w) = img.dims();
    Image::from_fn(c, h / s, w / s, |ch, y, x| img.get(ch, s * y, s * x))
}

pub fn psnr_loop(a: &Image<f64>, b: &Image<f64>) -> f64 {
    let (c, h, w) = a.dims();
    let mut se = 0.0;
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let d = a.get(ch, y, x) - b.get(ch, y, x);
                se += d * d;
            }
        }
    }
    let mse = se / (c * h * w) as f64;
    if mse < 1e-12 {
        99.0
    } else {
        -10.0 * mse.log10()
    }
}

/// SSIM with an explicit 121-tap 2-D Gaussian window evaluated per
/// position, no separability.
pub fn ssim_loop(a: &Image<f64>, b: &Image<f64>) -> f64 {
    let (c, h, w) = a.dims();
    let n = 11usize;
    let mut win = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let (dy, dx) = (i as f64 - 5.0, j as f64 - 5.0);
            win[i * n + j] = (-(dy * dy + dx * dx) / (2.0 * 1.5 * 1.5)).exp();
        }
    }
    let total: f64 = win.iter().sum();
    win.iter_mut().for_each(|v| *v /= total);
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum_c = 0.0;
    for ch in 0..c {
        let mut sum = 0.0;
        let mut count = 0usize;
        for y0 in 0..=h - n {
            for x0 in 0..=w - n {
                let (mut ma, mut mb) = (0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let k = win[i * n + j];
                        ma += k * a.get(ch, y0 + i, x0 + j);
                        mb += k * b.get(ch, y0 + i, x0 + j);
                    }
                }
                let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        let k = win[i * n + j];
                        let da = a.get(ch, y0 + i, x0 + j) - ma;
                        let db = b.get(ch, y0 + i, x0 + j) - mb;
                        va += k * da * da;
                        vb += k * db * db;
                        cov += k * da * db;
                    }
                }
                sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
        sum_c += sum / count as f64;
    }
    sum_c / c as f64
}

/// Central finite-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest elementwise relative error, with an absolute floor for entries
/// where both gradients vanish.
pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
