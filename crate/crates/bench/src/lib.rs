//! Inputs for the criterion benchmarks under `benches/`.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbiscope_core::ImpactScore;

/// `n` frames of `w`x`h` sharing a noisy background, each with one
/// differently coloured band to mimic a rotating banner.
pub fn burst(seed: u64, n: usize, w: u32, h: u32) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = RgbImage::from_fn(w, h, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    (0..n)
        .map(|i| {
            let mut f = base.clone();
            let band = Rgb([(i * 40) as u8, 90, 200]);
            for y in h / 4..h / 4 + h / 8 {
                for x in 0..w {
                    f.put_pixel(x, y, band);
                }
            }
            f
        })
        .collect()
}

/// Random prediction/truth label vectors of length `n`.
pub fn labels(seed: u64, n: usize) -> (Vec<ImpactScore>, Vec<ImpactScore>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || (0..n).map(|_| ImpactScore::ALL[rng.random_range(0..4)]).collect();
    (draw(), draw())
}
