mod common;

use common::oracles;
use multisr_core::degradation::{
    add_noise, downsample, resample_taps, synth_lr, to_canonical_grid, DownsampleKernel, NoiseSpec, ResampleMethod,
};
use multisr_core::{Domain, Error, Image};
use rand::Rng;

#[test]
fn nearest_matches_index_selection_on_random_images() {
    let mut rng = common::rng(1);
    let k = DownsampleKernel::new(ResampleMethod::Nearest);
    for _ in 0..100 {
        let (h, w) = (4 * rng.random_range(1..9), 4 * rng.random_range(1..9));
        let img = common::random_image(&mut rng, 3, h, w);
        assert_eq!(downsample(&img, &k).unwrap(), oracles::nearest_down(&img, 4));
    }
}

#[test]
fn nearest_row_index_example() {
    let img = Image::from_fn(3, 8, 8, |_, r, _| r as f64);
    let out = downsample(&img, &DownsampleKernel::new(ResampleMethod::Nearest)).unwrap();
    assert_eq!(out.dims(), (3, 2, 2));
    assert_eq!(out.plane(0), &[0.0, 0.0, 4.0, 4.0]);
}

#[test]
fn bilinear_and_bicubic_match_weighted_sum_oracles() {
    let mut rng = common::rng(2);
    for _ in 0..100 {
        let (h, w) = (4 * rng.random_range(1..7), 4 * rng.random_range(1..7));
        let img = common::random_image(&mut rng, 3, h, w);
        let bl = downsample(&img, &DownsampleKernel::new(ResampleMethod::Bilinear)).unwrap();
        let bc = downsample(&img, &DownsampleKernel::new(ResampleMethod::Bicubic)).unwrap();
        for (got, want) in [(bl, oracles::bilinear_down(&img, 4)), (bc, oracles::bicubic_down(&img, 4))] {
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-6, "{a} vs {b}");
            }
        }
    }
}

#[test]
fn horizontal_ramp_bilinear_example() {
    let img = Image::from_fn(3, 16, 16, |_, _, x| x as f64 / 15.0);
    let out = downsample(&img, &DownsampleKernel::new(ResampleMethod::Bilinear)).unwrap();
    let want = oracles::bilinear_down(&img, 4);
    assert_eq!(out.dims(), (3, 4, 4));
    for (a, b) in out.data().iter().zip(want.data()) {
        assert!((a - b).abs() < 1e-6);
    }
    // Interior samples sit halfway between source columns 4k+1 and 4k+2.
    assert!((out.get(0, 0, 1) - 5.5 / 15.0).abs() < 1e-12);
}

#[test]
fn weight_rows_are_a_partition_of_unity() {
    let mut rng = common::rng(3);
    for _ in 0..200 {
        let n_in = rng.random_range(2..64);
        let n_out = rng.random_range(1..64);
        for m in [ResampleMethod::Bicubic, ResampleMethod::Bilinear] {
            for t in resample_taps(m, -0.75, false, n_in, n_out) {
                assert!((t.weights.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn constants_survive_downsampling_and_lifting() {
    let img = Image::<f64>::filled(3, 32, 24, 0.37);
    for m in [ResampleMethod::Bicubic, ResampleMethod::Bilinear, ResampleMethod::Nearest] {
        let down = downsample(&img, &DownsampleKernel::new(m)).unwrap();
        let up = to_canonical_grid(&down, 4, m).unwrap();
        assert_eq!(up.dims(), img.dims());
        for &v in down.data().iter().chain(up.data()) {
            if m == ResampleMethod::Nearest {
                assert_eq!(v, 0.37);
            } else {
                assert!((v - 0.37).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn nearest_lift_replicates_blocks() {
    let img = Image::from_fn(3, 2, 2, |c, y, x| (c * 4 + y * 2 + x) as f64);
    let up = to_canonical_grid(&img, 4, ResampleMethod::Nearest).unwrap();
    assert_eq!(up.dims(), (3, 8, 8));
    for c in 0..3 {
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(up.get(c, y, x), img.get(c, y / 4, x / 4));
            }
        }
    }
}

#[test]
fn noise_statistics_and_determinism() {
    let img = Image::filled(3, 256, 256, 0.0);
    let spec = NoiseSpec { sigma: 0.1, seed: 9 };
    let a = add_noise(&img, &spec).unwrap();
    let n = a.data().len() as f64;
    let mean = a.data().iter().sum::<f64>() / n;
    let std = (a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!(mean.abs() <= 0.005, "{mean}");
    assert!((0.095..=0.105).contains(&std), "{std}");
    assert_eq!(a, add_noise(&img, &spec).unwrap());
    assert_eq!(add_noise(&img, &NoiseSpec::none()).unwrap(), img);
    assert!(matches!(
        add_noise(&img, &NoiseSpec { sigma: -1.0, seed: 0 }),
        Err(Error::Config(_))
    ));
}

#[test]
fn synthesis_contracts() {
    let mut rng = common::rng(4);
    let hr = common::random_image(&mut rng, 3, 16, 16);
    let near = synth_lr(&hr, Domain::NearestLr, 4, &NoiseSpec::none()).unwrap();
    assert_eq!(near, downsample(&hr, &DownsampleKernel::new(ResampleMethod::Nearest)).unwrap());
    let c = synth_lr(&Image::<f64>::filled(3, 16, 16, 0.25), Domain::BicubicLr, 4, &NoiseSpec::none()).unwrap();
    assert_eq!(c.dims(), (3, 4, 4));
    assert!(c.data().iter().all(|v| (v - 0.25).abs() < 1e-12));
    assert!(matches!(synth_lr(&hr, Domain::RealLr, 4, &NoiseSpec::none()), Err(Error::UnsupportedSynthesis)));
    assert!(matches!(synth_lr(&hr, Domain::Hr, 4, &NoiseSpec::none()), Err(Error::InvalidTarget(_))));
}

#[test]
fn size_and_scale_errors() {
    let img = Image::filled(3, 10, 12, 0.0);
    let k = DownsampleKernel::new(ResampleMethod::Bicubic);
    assert!(matches!(downsample(&img, &k), Err(Error::Shape(_))));
    assert!(matches!(downsample(&img, &k.with_scale(0)), Err(Error::Config(_))));
    assert!(matches!(to_canonical_grid(&img, 0, ResampleMethod::Bicubic), Err(Error::Config(_))));
}
