mod common;

use common::{desk, oracles};
use multisr_core::corpus::CorpusItem;
use multisr_core::degradation::{add_noise, lift, NoiseSpec};
use multisr_core::evalkit::{evaluate_with, lpips, psnr, ssim, EvalOptions, IdentityRestorer};
use multisr_core::models::ConvStack;
use multisr_core::{Domain, Image};

#[test]
fn psnr_and_ssim_match_scalar_loops() {
    let mut rng = common::rng(11);
    for _ in 0..20 {
        let a = common::random_image(&mut rng, 3, 24, 20);
        let b = add_noise(&a, &NoiseSpec { sigma: 0.1, seed: 3 }).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() - oracles::psnr_loop(&a, &b)).abs() < 1e-6);
        assert!((ssim(&a, &b).unwrap() - oracles::ssim_loop(&a, &b)).abs() < 1e-4);
        assert!((ssim(&a, &b).unwrap() - ssim(&b, &a).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn ssim_bounds_and_identity() {
    let mut rng = common::rng(12);
    for _ in 0..10 {
        let a = common::random_image(&mut rng, 3, 16, 16);
        let b = common::random_image(&mut rng, 3, 16, 16);
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(s < 1.0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn psnr_falls_as_noise_grows() {
    let a = desk::synthetic_hr(5, 64).cast::<f64>();
    let p: Vec<f64> = [0.01, 0.05, 0.1]
        .iter()
        .map(|&s| psnr(&a, &add_noise(&a, &NoiseSpec { sigma: s, seed: 1 }).unwrap(), 1.0).unwrap())
        .collect();
    assert!(p[0] > p[1] && p[1] > p[2], "{p:?}");
}

#[test]
fn lpips_is_zero_on_identity_and_grows_with_noise() {
    let backbone = ConvStack::<f64>::fixed_random();
    let mut rng = common::rng(13);
    let mut wins = 0;
    for t in 0..100u64 {
        let a = common::random_image(&mut rng, 3, 16, 16).map(|v| 0.25 + 0.5 * v);
        if t == 0 {
            assert_eq!(lpips(&a, &a, &backbone).unwrap(), 0.0);
        }
        let small = add_noise(&a, &NoiseSpec { sigma: 0.05, seed: 2 * t }).unwrap();
        let large = add_noise(&a, &NoiseSpec { sigma: 0.2, seed: 2 * t + 1 }).unwrap();
        let (ls, ll) = (lpips(&a, &small, &backbone).unwrap(), lpips(&a, &large, &backbone).unwrap());
        assert!(ls >= 0.0 && ll >= 0.0);
        wins += usize::from(ll > ls);
    }
    assert!(wins >= 95, "{wins}/100");
}

#[test]
fn identity_restorer_reproduces_the_bicubic_baseline() {
    let items: Vec<CorpusItem<f64>> = (0..3)
        .map(|i| CorpusItem::new(format!("{i}"), desk::synthetic_hr(i, 32).cast(), None, 4).unwrap())
        .collect();
    let opts = EvalOptions {
        domains: vec![Domain::BicubicLr, Domain::NearestLr],
        panels_per_domain: 0,
    };
    let (r, _) = evaluate_with(&IdentityRestorer, &items, 4, &opts, None).unwrap();
    for (rec, d) in r.records.iter().zip([Domain::BicubicLr, Domain::NearestLr]) {
        for (i, item) in items.iter().enumerate() {
            let base = lift(item.lr(d).unwrap(), 4).unwrap();
            assert_eq!(rec.psnr[i], psnr(&base, &item.hr, 1.0).unwrap());
        }
        let mean = rec.psnr.iter().sum::<f64>() / rec.psnr.len() as f64;
        assert!((rec.mean_psnr().unwrap() - mean).abs() < 1e-9);
    }
    let avg = r.average.as_ref().unwrap();
    let want = (r.records[0].mean_psnr().unwrap() + r.records[1].mean_psnr().unwrap()) / 2.0;
    assert!((avg.psnr - want).abs() < 1e-9);
    // Pure: a second run gives identical records.
    assert_eq!(evaluate_with(&IdentityRestorer, &items, 4, &opts, None).unwrap().0, r);
}

#[test]
fn ssim_constant_closed_form() {
    let z = Image::<f64>::filled(3, 11, 11, 0.0);
    let o = Image::<f64>::filled(3, 11, 11, 1.0);
    assert!((ssim(&z, &o).unwrap() - 1e-4 / 1.0001).abs() < 1e-6);
}
