mod common;

use std::collections::BTreeSet;

use multisr_core::augment::{apply_moa, draw_moa, moa_apply, AugPolicy, GeoTransform, MoaOp, MoaProbs, Region};
use multisr_core::{Error, Image};

#[test]
fn moa_outputs_are_members_over_1000_trials() {
    let mut rng = common::rng(31);
    let policy = AugPolicy::only(MoaProbs::uniform(1.0));
    let mut seen = BTreeSet::new();
    for _ in 0..1000 {
        let a: Vec<Image<f64>> = (0..2).map(|_| common::random_image(&mut rng, 3, 16, 16)).collect();
        let b: Vec<Image<f64>> = a.iter().rev().cloned().collect();
        let (out, op) = moa_apply(&a, &b, &policy, &mut rng).unwrap();
        seen.insert(op.name());
        for i in 0..2 {
            assert!(common::moa_members(&op, &a[i], &b[i], &out[i]), "{op:?}");
        }
    }
    assert_eq!(seen.len(), 7, "{seen:?}");
}

#[test]
fn default_policy_applies_nothing_about_half_the_time() {
    let mut rng = common::rng(32);
    let none = (0..4000)
        .filter(|_| draw_moa(&AugPolicy::default(), 16, 16, &mut rng).unwrap() == MoaOp::None)
        .count();
    assert!((1800..=2200).contains(&none), "{none}");
    let off = AugPolicy::disabled();
    assert_eq!(draw_moa(&off, 16, 16, &mut rng).unwrap(), MoaOp::None);
}

#[test]
fn mixup_endpoint_and_cutout_mask() {
    let mut rng = common::rng(33);
    let a = common::random_image(&mut rng, 3, 12, 10);
    let b = common::random_image(&mut rng, 3, 12, 10);
    assert_eq!(apply_moa(&MoaOp::Mixup { lambda: 1.0 }, &a, &b, 4).unwrap(), a);
    assert_eq!(apply_moa(&MoaOp::RgbPerm([0, 1, 2]), &a, &b, 4).unwrap(), a);
    let r = Region { y: 2, x: 3, h: 5, w: 4 };
    let out = apply_moa(&MoaOp::Cutout(r), &a, &b, 4).unwrap();
    for c in 0..3 {
        for y in 0..12 {
            for x in 0..10 {
                let inside = (2..7).contains(&y) && (3..7).contains(&x);
                assert_eq!(out.get(c, y, x), if inside { 0.0 } else { a.get(c, y, x) });
            }
        }
    }
}

#[test]
fn cut_regions_respect_the_area_range() {
    let mut rng = common::rng(34);
    let policy = AugPolicy::only(MoaProbs { cutmix: 1.0, ..MoaProbs::uniform(0.0) });
    for _ in 0..500 {
        match draw_moa(&policy, 64, 48, &mut rng).unwrap() {
            MoaOp::CutMix(r) => {
                let f = r.area() as f64 / (64.0 * 48.0);
                assert!((0.1..=0.4).contains(&f), "{f}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn paired_geometry_keeps_correspondence() {
    // Both images carry their own coordinates; the pair must still agree
    // after any shared transform.
    let lr = Image::<f64>::from_fn(3, 16, 16, |c, y, x| (c * 1000 + y * 16 + x) as f64);
    let hr = lr.clone();
    let mut rng = common::rng(35);
    for _ in 0..64 {
        let t = GeoTransform::draw(&mut rng);
        assert_eq!(t.apply(&lr), t.apply(&hr));
        let out = t.apply(&lr);
        let mut values: Vec<i64> = out.data().iter().map(|&v| v as i64).collect();
        values.sort_unstable();
        let mut orig: Vec<i64> = lr.data().iter().map(|&v| v as i64).collect();
        orig.sort_unstable();
        assert_eq!(values, orig);
    }
}

#[test]
fn mismatched_pairs_are_rejected() {
    let a = Image::<f64>::filled(3, 8, 8, 0.0);
    let b = Image::<f64>::filled(3, 8, 4, 0.0);
    assert!(matches!(apply_moa(&MoaOp::Mixup { lambda: 0.5 }, &a, &b, 4), Err(Error::Shape(_))));
    let mut rng = common::rng(36);
    assert!(moa_apply(&[a.clone()], &[a.clone(), a], &AugPolicy::default(), &mut rng).is_err());
}
