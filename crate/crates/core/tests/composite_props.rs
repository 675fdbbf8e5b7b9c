use image::{Rgb, RgbImage};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xbiscope_core::composite::{crop_to_common, diff_mask, mask_population, overlay_frames};

/// Frames sharing a common background with a few random patches each; sizes
/// vary by a few pixels so cropping is exercised.
fn burst(seed: u64, n: usize, w: u32, h: u32) -> Vec<RgbImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = RgbImage::from_fn(w + 8, h + 8, |_, _| Rgb([rng.random(), rng.random(), rng.random()]));
    (0..n)
        .map(|_| {
            let (fw, fh) = (w + rng.random_range(0..=8), h + rng.random_range(0..=8));
            let mut f = RgbImage::from_fn(fw, fh, |x, y| *base.get_pixel(x, y));
            for _ in 0..rng.random_range(0..3) {
                let (x0, y0) = (rng.random_range(0..fw), rng.random_range(0..fh));
                let (pw, ph) = (rng.random_range(1..=fw - x0), rng.random_range(1..=fh - y0));
                let c = Rgb([rng.random(), rng.random(), rng.random()]);
                for y in y0..y0 + ph {
                    for x in x0..x0 + pw {
                        f.put_pixel(x, y, c);
                    }
                }
            }
            f
        })
        .collect()
}

fn cropped(frames: &[RgbImage]) -> Vec<RgbImage> {
    let w = frames.iter().map(|f| f.width()).min().unwrap();
    let h = frames.iter().map(|f| f.height()).min().unwrap();
    frames
        .iter()
        .map(|f| RgbImage::from_fn(w, h, |x, y| *f.get_pixel(x, y)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn blend_matches_rounded_mean(seed: u64, n in 1usize..=5, w in 1u32..40, h in 1u32..40) {
        let frames = burst(seed, n, w, h);
        let o = overlay_frames(&frames).unwrap();
        let c = cropped(&frames);
        prop_assert_eq!(o.pixels.dimensions(), c[0].dimensions());
        for (x, y, p) in o.pixels.enumerate_pixels() {
            for ch in 0..3 {
                let mean = c.iter().map(|f| f.get_pixel(x, y).0[ch] as f64).sum::<f64>() / n as f64;
                prop_assert_eq!(p.0[ch] as f64, (mean + 0.5).floor());
            }
        }
    }

    #[test]
    fn order_of_frames_does_not_matter(seed: u64, n in 2usize..=5, w in 1u32..40, h in 1u32..40) {
        let frames = burst(seed, n, w, h);
        let mut shuffled = frames.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
        let (a, b) = (overlay_frames(&frames).unwrap(), overlay_frames(&shuffled).unwrap());
        prop_assert_eq!(a.pixels.as_raw(), b.pixels.as_raw());
        prop_assert_eq!(a.changed_pixels, b.changed_pixels);
    }

    #[test]
    fn identical_frames_are_a_fixed_point(seed: u64, n in 1usize..=5, w in 1u32..40, h in 1u32..40) {
        let f = burst(seed, 1, w, h).remove(0);
        let o = overlay_frames(&vec![f.clone(); n]).unwrap();
        prop_assert_eq!(o.pixels.as_raw(), f.as_raw());
        prop_assert_eq!(o.changed_pixels, 0);
    }

    #[test]
    fn unchanged_pixels_survive_and_fraction_counts_mask(seed: u64, n in 2usize..=5, w in 1u32..40, h in 1u32..40) {
        let frames = burst(seed, n, w, h);
        let o = overlay_frames(&frames).unwrap();
        let c = cropped(&frames);
        let mask = diff_mask(&c).unwrap();
        for (x, y, m) in mask.enumerate_pixels() {
            if m.0[0] == 0 {
                prop_assert_eq!(o.pixels.get_pixel(x, y), c[0].get_pixel(x, y));
            }
        }
        let area = (mask.width() * mask.height()) as f64;
        prop_assert_eq!(o.changed_pixels, mask_population(&mask));
        prop_assert_eq!(o.change_fraction, mask_population(&mask) as f64 / area);
        prop_assert!((0.0..=1.0).contains(&o.change_fraction));
    }

    #[test]
    fn crop_to_common_keeps_top_left(seed: u64, w in 1u32..40, h in 1u32..40) {
        let frames = burst(seed, 2, w, h);
        let (a, b) = crop_to_common(&frames[0], &frames[1]).unwrap();
        let dims = (frames[0].width().min(frames[1].width()), frames[0].height().min(frames[1].height()));
        prop_assert_eq!(a.dimensions(), dims);
        prop_assert_eq!(b.dimensions(), dims);
        for (x, y, p) in a.enumerate_pixels() {
            prop_assert_eq!(p, frames[0].get_pixel(x, y));
        }
    }

    #[test]
    fn black_white_halves(n in 1usize..=3, w in 1u32..32, h in 1u32..32) {
        let mut frames = vec![RgbImage::from_pixel(w, h, Rgb([0, 0, 0])); n];
        frames.extend(vec![RgbImage::from_pixel(w, h, Rgb([255, 255, 255])); n]);
        let o = overlay_frames(&frames).unwrap();
        prop_assert!(o.pixels.pixels().all(|p| p.0 == [128, 128, 128]));
        prop_assert_eq!(o.change_fraction, 1.0);
    }
}
