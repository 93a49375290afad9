mod common;

use multisr_core::models::{
    projection_apply, Discriminator, DiscriminatorConfig, Generator, GeneratorConfig,
};
use multisr_core::{Domain, Image, Tensor};
use multisr_tensor::Graph;

fn small_g() -> GeneratorConfig {
    GeneratorConfig {
        base_channels: 8,
        res_blocks: 2,
        ..Default::default()
    }
}

fn norm(img: &Image<f64>) -> f64 {
    img.data().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Conv layer: weights plus bias.
fn conv(i: usize, o: usize, k: usize) -> usize {
    o * i * k * k + o
}

#[test]
fn parameter_counts_follow_the_layer_sums() {
    let d = GeneratorConfig::default();
    let f = d.base_channels;
    let body = conv(3, f, 5) + 2 * d.res_blocks * conv(f, f, 3) + conv(f, 3, 5) + 2;
    let mut rng = common::rng(0);
    let plain = GeneratorConfig { label_channels: 0, ..d.clone() };
    assert_eq!(Generator::<f32>::new(plain, &mut rng).unwrap().num_params(), body);
    assert_eq!(body, 378_947 + 2);
    let g = Generator::<f32>::new(d, &mut rng).unwrap();
    assert_eq!(g.num_params(), body + 5 * 25 * 64);
    assert_eq!(g.num_params(), 386_949);
    assert_eq!(conv(64, 64, 3), 36_928);
}

#[test]
fn generator_preserves_resolution() {
    let g = Generator::<f64>::new(small_g(), &mut common::rng(1)).unwrap();
    let mut rng = common::rng(2);
    for (h, w) in [(16, 16), (24, 40), (64, 64)] {
        let x = common::random_image(&mut rng, 3, h, w);
        let y = g.translate_image(&x, Domain::Hr).unwrap();
        assert_eq!(y.dims(), (3, h, w));
        assert!(y.is_finite());
    }
}

#[test]
fn label_reaches_the_computation() {
    let g = Generator::<f64>::new(small_g(), &mut common::rng(3)).unwrap();
    let x = common::random_image(&mut common::rng(4), 3, 16, 16);
    let a = g.translate_image(&x, Domain::Hr).unwrap();
    let b = g.translate_image(&x, Domain::NearestLr).unwrap();
    assert_ne!(a, b);
}

#[test]
fn input_gradient_is_finite_and_nonzero() {
    let gen = Generator::<f64>::new(small_g(), &mut common::rng(5)).unwrap();
    let x = common::random_image(&mut common::rng(6), 3, 16, 16).to_tensor();
    let g = Graph::new();
    let b = gen.bind(&g, false);
    let xv = g.variable(x);
    let y = gen.forward(&g, &b, xv, &[Domain::Hr]).unwrap();
    let grads = g.backward(g.mean(y));
    let gx = grads.get(xv).expect("input gradient");
    assert!(gx.all_finite());
    assert!(gx.sum_sq() > 0.0);
}

#[test]
fn projection_examples_and_properties() {
    let zero = Image::<f64>::filled(3, 4, 4, 0.0);
    assert_eq!(projection_apply(&zero, 1.0, 0.1), zero);

    let mut rng = common::rng(7);
    let r = common::random_image(&mut rng, 3, 4, 4).map(|v| v - 0.5);
    let n = (r.data().len() as f64 - 1.0).sqrt();
    // Radius above the norm: untouched.
    assert_eq!(projection_apply(&r, 1.0, 2.0 * norm(&r) / n), r);

    // Norm 10 projected to radius 2.
    let r10 = r.map(|v| v * 10.0 / norm(&r));
    let p = projection_apply(&r10, 1.0, 2.0 / n);
    assert!((norm(&p) - 2.0).abs() < 1e-9);
    for (a, b) in p.data().iter().zip(r10.data()) {
        assert!((a - b * 0.2).abs() < 1e-12);
    }

    for _ in 0..20 {
        let r = common::random_image(&mut rng, 3, 8, 8).map(|v| 4.0 * v - 2.0);
        let (theta, sigma) = (0.5, 0.1);
        let once = projection_apply(&r, theta, sigma);
        let twice = projection_apply(&once, theta, sigma);
        assert!(norm(&once) <= norm(&r) + 1e-12);
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    // A negative noise estimate clamps to a zero radius.
    assert_eq!(projection_apply(&r, 1.0, -0.3), zero);
}

#[test]
fn discriminator_shapes() {
    let mut rng = common::rng(8);
    for (size, side) in [(128, 2), (64, 1)] {
        let cfg = DiscriminatorConfig {
            image_size: size,
            base_channels: 4,
            ..Default::default()
        };
        let d = Discriminator::<f64>::new(cfg, &mut rng).unwrap();
        let x = Tensor::from_fn(&[2, 3, size, size], |i| (i % 17) as f64 / 16.0);
        let (trg, cls) = d.score(&x).unwrap();
        assert_eq!(trg.shape(), &[2, 1, side, side]);
        assert_eq!(cls.shape(), &[2, 5, 1, 1]);
        assert!(cls.all_finite());
    }
}

#[test]
fn class_head_ignores_patch_head_weights() {
    let cfg = DiscriminatorConfig {
        image_size: 64,
        base_channels: 4,
        ..Default::default()
    };
    let mut d = Discriminator::<f64>::new(cfg, &mut common::rng(9)).unwrap();
    let x = Tensor::from_fn(&[1, 3, 64, 64], |i| ((i * 7) % 23) as f64 / 22.0);
    let (trg0, cls0) = d.score(&x).unwrap();
    let head = d.trg_head_index();
    d.params_mut().get_mut(head).value_mut().data_mut().iter_mut().for_each(|w| *w += 0.5);
    let (trg1, cls1) = d.score(&x).unwrap();
    assert_eq!(cls0, cls1);
    assert_ne!(trg0, trg1);
}

#[test]
fn discriminator_rejects_wrong_sizes() {
    let cfg = DiscriminatorConfig {
        image_size: 64,
        base_channels: 4,
        ..Default::default()
    };
    let d = Discriminator::<f64>::new(cfg, &mut common::rng(10)).unwrap();
    assert!(d.score(&Tensor::zeros(&[1, 3, 32, 32])).is_err());
}
