//! Shadow detection and removal.
//!
//! Detection smooths the luminance with a Gaussian low-pass filter and flags
//! pixels that fall below a fraction of the global mean luminance. Removal
//! remaps the per-channel histogram of the flagged pixels onto the histogram
//! of the sunlit pixels, leaving sunlit pixels untouched.

use crate::error::{Error, Result};
use crate::exec;
use crate::raster::{to_grayscale, RasterImage, SegmentationMask};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ShadowParams {
    /// Gaussian sigma in pixels; the kernel is truncated at 3 sigma.
    pub blur_sigma: f64,
    /// A pixel is shadow when its smoothed luminance is below
    /// `threshold_factor` times the global mean luminance.
    pub threshold_factor: f64,
    /// Histogram resolution for the removal step.
    pub histogram_bins: usize,
}

impl Default for ShadowParams {
    fn default() -> Self {
        ShadowParams {
            blur_sigma: 15.0,
            threshold_factor: 0.6,
            histogram_bins: 256,
        }
    }
}

/// Normalized Gaussian taps for offsets -radius..=radius.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).floor() as i64;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps
}

/// Separable Gaussian blur over an f64 field with edge replication.
pub(crate) fn gaussian_blur(field: &[f64], width: usize, height: usize, sigma: f64) -> Vec<f64> {
    let taps = gaussian_kernel(sigma);
    let radius = (taps.len() / 2) as i64;

    // horizontal pass
    let rows = exec::map_indexed(height, |y| {
        let row = &field[y * width..(y + 1) * width];
        let mut out = vec![0.0f64; width];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let sx = (x as i64 + t as i64 - radius).clamp(0, width as i64 - 1) as usize;
                acc += w * row[sx];
            }
            *o = acc;
        }
        out
    });
    let tmp: Vec<f64> = rows.into_iter().flatten().collect();

    // vertical pass
    let rows = exec::map_indexed(height, |y| {
        let mut out = vec![0.0f64; width];
        for (x, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let sy = (y as i64 + t as i64 - radius).clamp(0, height as i64 - 1) as usize;
                acc += w * tmp[sy * width + x];
            }
            *o = acc;
        }
        out
    });
    rows.into_iter().flatten().collect()
}

/// Flags pixels whose Gaussian-smoothed luminance falls below
/// `threshold_factor` times the global mean luminance.
pub fn detect_shadow_mask(img: &RasterImage, params: &ShadowParams) -> SegmentationMask {
    let gray = to_grayscale(img);
    let field: Vec<f64> = gray.data.iter().map(|&v| v as f64).collect();
    let n = field.len();
    let mean = field.iter().sum::<f64>() / n as f64;
    let smoothed = gaussian_blur(
        &field,
        img.width as usize,
        img.height as usize,
        params.blur_sigma,
    );
    let threshold = params.threshold_factor * mean;
    let data: Vec<u8> = smoothed.iter().map(|&v| u8::from(v < threshold)).collect();
    SegmentationMask::new(img.width, img.height, data)
}

/// Builds the value remap table that matches a source histogram onto a
/// reference histogram: `lut[v]` is the smallest level whose reference CDF
/// reaches the source CDF at `v`.
fn matching_lut(src_hist: &[u64], ref_hist: &[u64]) -> Vec<u8> {
    let bins = src_hist.len();
    let src_total: u64 = src_hist.iter().sum();
    let ref_total: u64 = ref_hist.iter().sum();
    debug_assert!(src_total > 0 && ref_total > 0);

    let mut lut = vec![0u8; bins];
    let mut src_cum = 0u64;
    let mut ref_cum = 0u64;
    let mut u = 0usize;
    for (v, item) in lut.iter_mut().enumerate() {
        src_cum += src_hist[v];
        // src CDF at v, as a fraction; advance u until ref CDF >= it.
        while u < bins - 1 && (ref_cum + ref_hist[u]) * src_total < src_cum * ref_total {
            ref_cum += ref_hist[u];
            u += 1;
        }
        *item = u as u8;
    }
    lut
}

/// Remaps shadow pixels so each channel's distribution matches the sunlit
/// pixels of the same channel. Sunlit pixels are returned bit-identical.
pub fn remove_shadows(
    img: &RasterImage,
    mask: &SegmentationMask,
    params: &ShadowParams,
) -> Result<RasterImage> {
    assert_eq!(
        (img.width, img.height),
        (mask.width, mask.height),
        "mask dims"
    );
    assert_eq!(params.histogram_bins, 256, "8-bit histograms use 256 bins");

    let n_shadow = mask.count_ones();
    if n_shadow == 0 {
        return Ok(img.clone());
    }
    if n_shadow == mask.data.len() {
        return Err(Error::NoSunlitReference);
    }

    let mut out = img.clone();
    for ch in 0..3 {
        let mut shadow_hist = [0u64; 256];
        let mut sunlit_hist = [0u64; 256];
        for (p, &m) in mask.data.iter().enumerate() {
            let v = img.data[p * 3 + ch] as usize;
            if m == 1 {
                shadow_hist[v] += 1;
            } else {
                sunlit_hist[v] += 1;
            }
        }
        let lut = matching_lut(&shadow_hist, &sunlit_hist);
        for (p, &m) in mask.data.iter().enumerate() {
            if m == 1 {
                out.data[p * 3 + ch] = lut[img.data[p * 3 + ch] as usize];
            }
        }
    }
    Ok(out)
}
