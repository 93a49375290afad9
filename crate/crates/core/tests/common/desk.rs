//! Deterministic synthetic HR images: smooth backgrounds with sharp-edged
//! shapes, so bicubic upsampling leaves visible error at the edges.

use multisr_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn synthetic_hr(seed: u64, side: usize) -> Image<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: [f32; 3] = [rng.random(), rng.random(), rng.random()];
    let grad: [f32; 3] = [rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
    let mut img = Image::from_fn(3, side, side, |c, y, x| {
        base[c] * 0.6 + 0.2 + grad[c] * (x as f32 + y as f32) / (2 * side) as f32
    });
    let s = side as f32;
    for _ in 0..10 {
        let color: [f32; 3] = [rng.random(), rng.random(), rng.random()];
        let (cx, cy) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let r = rng.random_range(s * 0.06..s * 0.25);
        let disk = rng.random_bool(0.5);
        let stripe = rng.random_range(3.0f32..9.0);
        for y in 0..side {
            for x in 0..side {
                let (dx, dy) = (x as f32 + 0.5 - cx, y as f32 + 0.5 - cy);
                let inside = if disk { dx * dx + dy * dy < r * r } else { dx.abs() < r && dy.abs() < r * 0.6 };
                if inside {
                    let band = if ((x as f32 + y as f32) / stripe) as i64 % 2 == 0 { 0.0 } else { 0.15 };
                    for c in 0..3 {
                        img.set(c, y, x, (color[c] * 0.85 + band).min(1.0));
                    }
                }
            }
        }
    }
    // Quantize like an 8-bit PNG would.
    img.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() / 255.0)
}

pub fn desk_corpus(n: usize, side: usize) -> Vec<Image<f32>> {
    (0..n as u64).map(|i| synthetic_hr(1000 + i, side)).collect()
}

/// Desk profile with narrow networks: same wiring, a fraction of the cost.
pub fn narrow_config(mode: multisr_core::trainer::AblationMode) -> multisr_core::trainer::TrainConfig {
    let mut cfg = multisr_core::trainer::TrainConfig::desk_scale();
    cfg.mode = mode;
    cfg.batch_size = 2;
    cfg.generator.base_channels = 8;
    cfg.discriminator.base_channels = 2;
    cfg
}

/// In-memory corpus of `n` desk images; every `paired`-th one gets a real
/// LR counterpart (0 for none).
pub fn loaded_corpus(n: usize, side: usize, paired: usize) -> multisr_core::corpus::LoadedCorpus<f32> {
    use multisr_core::corpus::{CorpusItem, LoadedCorpus};
    let items = desk_corpus(n, side)
        .into_iter()
        .enumerate()
        .map(|(i, hr)| {
            let real = (paired > 0 && i % paired == 0)
                .then(|| Image::from_fn(3, side / 4, side / 4, |c, y, x| hr.get(c, 4 * y + 1, 4 * x + 2)));
            CorpusItem::new(format!("desk{i}"), hr, real, 4).unwrap()
        })
        .collect();
    LoadedCorpus::from_items(items, 4).unwrap()
}
