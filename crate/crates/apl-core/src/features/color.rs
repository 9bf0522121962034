//! Per-channel color histogram descriptor.

use crate::raster::RasterImage;

/// Concatenated per-channel histograms, each normalized to sum 1.
///
/// Level `v` falls into bin `v * bins / 256`, so 255 lands in the top bin.
pub fn color_histogram(patch: &RasterImage, bins_per_channel: usize) -> Vec<f64> {
    assert!(bins_per_channel >= 1, "at least one bin per channel");
    let n = patch.width as usize * patch.height as usize;
    let mut counts = vec![0u64; 3 * bins_per_channel];
    for p in 0..n {
        for ch in 0..3 {
            let v = patch.data[p * 3 + ch] as usize;
            counts[ch * bins_per_channel + v * bins_per_channel / 256] += 1;
        }
    }
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_red_masses() {
        let patch = RasterImage::from_fn(10, 10, |_, _| [255, 0, 0]);
        let h = color_histogram(&patch, 8);
        assert_eq!(h.len(), 24);
        assert_eq!(h[7], 1.0); // R top bin
        assert_eq!(h[8], 1.0); // G bottom bin
        assert_eq!(h[16], 1.0); // B bottom bin
        assert_eq!(h.iter().filter(|&&v| v != 0.0).count(), 3);
    }

    #[test]
    fn channel_blocks_sum_to_one() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let patch = RasterImage::from_fn(33, 17, |_, _| [rng.random(), rng.random(), rng.random()]);
        let h = color_histogram(&patch, 8);
        for ch in 0..3 {
            let sum: f64 = h[ch * 8..(ch + 1) * 8].iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "channel {ch}: {sum}");
        }
    }

    #[test]
    fn histogram_is_order_free() {
        let a = RasterImage::from_fn(4, 4, |x, y| [(x * 4 + y) as u8 * 10, 5, 200]);
        // same multiset of pixels, transposed traversal
        let b = RasterImage::from_fn(4, 4, |x, y| [(y * 4 + x) as u8 * 10, 5, 200]);
        assert_eq!(color_histogram(&a, 8), color_histogram(&b, 8));
    }
}
