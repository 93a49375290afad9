//! Full-reference metrics on RGB images in `[0, 1]`. All accumulation is in
//! f64 whatever the image scalar.

use crate::models::FeatureBackbone;
use crate::{Error, Image, Result, Scalar, Tensor};

/// Reported for identical images, where the log of a zero MSE is undefined.
pub const PSNR_CAP_DB: f64 = 99.0;
/// MSE below which two images count as identical.
pub const PSNR_MSE_FLOOR: f64 = 1e-12;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_shapes<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::Shape(format!("metric inputs differ: {:?} vs {:?}", a.dims(), b.dims())))
    }
}

pub fn mse<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// Peak signal-to-noise ratio in dB over every RGB element.
pub fn psnr<T: Scalar>(a: &Image<T>, b: &Image<T>, max_val: f64) -> Result<f64> {
    let m = mse(a, b)?;
    if m < PSNR_MSE_FLOOR {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (max_val * max_val / m).log10())
}

/// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_window(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

// Valid-mode separable filtering of one plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = k.iter().zip(&src[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity, Gaussian-weighted windows without padding,
/// dynamic range 1, averaged over channels.
pub fn ssim<T: Scalar>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    check_shapes(a, b)?;
    let (c, h, w) = a.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Size(format!(
            "ssim needs both sides >= {SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let k = gaussian_window(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let mut total = 0.0;
    for ch in 0..c {
        let pa: Vec<f64> = a.plane(ch).iter().map(|v| v.as_f64()).collect();
        let pb: Vec<f64> = b.plane(ch).iter().map(|v| v.as_f64()).collect();
        let prod = |p: &[f64], q: &[f64]| -> Vec<f64> { p.iter().zip(q).map(|(x, y)| x * y).collect() };
        let mu_a = filter_valid(&pa, h, w, &k);
        let mu_b = filter_valid(&pb, h, w, &k);
        let e_aa = filter_valid(&prod(&pa, &pa), h, w, &k);
        let e_bb = filter_valid(&prod(&pb, &pb), h, w, &k);
        let e_ab = filter_valid(&prod(&pa, &pb), h, w, &k);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / c as f64)
}

/// Learned-perceptual style distance: every feature map is unit-normalized
/// along channels at each position, and the squared difference is summed
/// over channels, averaged over positions and summed over maps.
pub fn lpips<T: Scalar>(
    a: &Image<T>,
    b: &Image<T>,
    backbone: &dyn FeatureBackbone<T>,
) -> Result<f64> {
    check_shapes(a, b)?;
    let batch = Tensor::cat_batch(&[&a.to_tensor(), &b.to_tensor()]);
    let feats = backbone.extract(&batch)?;
    let mut total = 0.0;
    for f in &feats {
        let (n, c, h, w) = f.dims4();
        debug_assert_eq!(n, 2);
        let hw = h * w;
        let (fa, fb) = f.data().split_at(c * hw);
        let mut layer = 0.0;
        for p in 0..hw {
            let norm = |v: &[T]| -> f64 {
                let s: f64 = (0..c).map(|ci| v[ci * hw + p].as_f64().powi(2)).sum();
                s.sqrt() + 1e-10
            };
            let (na, nb) = (norm(fa), norm(fb));
            layer += (0..c)
                .map(|ci| (fa[ci * hw + p].as_f64() / na - fb[ci * hw + p].as_f64() / nb).powi(2))
                .sum::<f64>();
        }
        total += layer / hw as f64;
    }
    if !total.is_finite() {
        return Err(Error::Numeric(format!("lpips distance is {total}")));
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_is_normalized_and_symmetric() {
        let k = gaussian_window(11, 1.5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..11 {
            assert_eq!(k[i], k[10 - i]);
        }
    }

    #[test]
    fn psnr_conventions() {
        let a = Image::<f64>::filled(3, 4, 4, 0.0);
        let b = Image::<f64>::filled(3, 4, 4, 1.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert!(psnr(&a, &b, 1.0).unwrap().abs() < 1e-12);
        let c = Image::<f64>::filled(3, 4, 5, 0.0);
        assert!(matches!(psnr(&a, &c, 1.0), Err(Error::Shape(_))));
    }

    #[test]
    fn ssim_closed_forms() {
        let a = Image::<f64>::from_fn(3, 16, 16, |c, y, x| ((c * 7 + y * 3 + x) % 5) as f64 / 4.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let zero = Image::<f64>::filled(3, 12, 12, 0.0);
        let one = Image::<f64>::filled(3, 12, 12, 1.0);
        let c1 = SSIM_K1 * SSIM_K1;
        assert!((ssim(&zero, &one).unwrap() - c1 / (1.0 + c1)).abs() < 1e-12);
        let small = Image::<f64>::filled(3, 10, 12, 0.0);
        assert!(matches!(ssim(&small, &small), Err(Error::Size(_))));
    }
}
