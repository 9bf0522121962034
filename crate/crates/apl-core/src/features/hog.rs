//! Histogram-of-oriented-gradients descriptor.
//!
//! Gradients are centered differences with edge replication; each pixel votes
//! its magnitude into the two nearest unsigned orientation bins (wrap-around
//! at 180 degrees, bin centers at `(i + 0.5) * 180 / bins` degrees). Cell
//! histograms are grouped into overlapping blocks and L2-hys normalized.
//!
//! `DenseHog` evaluates the same descriptor for many windows of one image.
//! It reuses the image-wide gradient field and patches up the window borders,
//! where replication must see the window edge rather than the image, so its
//! output is bit-identical to [`hog_descriptor`] on the cropped window.

use crate::error::{Error, Result};
use crate::raster::{Extent, GrayImage};

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct HogParams {
    /// Square cell edge in pixels.
    pub cell_size: u32,
    /// Number of unsigned orientation bins over [0, 180).
    pub bins: usize,
    /// Block edge in cells (blocks are square).
    pub block_cells: u32,
    /// Block stride in cells.
    pub block_stride: u32,
    /// Epsilon added under the square root in L2-hys normalization.
    pub normalization_epsilon: f64,
}

impl Default for HogParams {
    fn default() -> Self {
        HogParams {
            cell_size: 8,
            bins: 9,
            block_cells: 2,
            block_stride: 1,
            normalization_epsilon: 1e-6,
        }
    }
}

impl HogParams {
    fn validate(&self) {
        assert!(self.cell_size >= 2, "cell size must be at least 2");
        assert!(self.bins >= 2, "at least 2 orientation bins");
        assert!(self.block_cells >= 1 && self.block_stride >= 1);
        assert!(self.normalization_epsilon > 0.0);
    }

    fn cells(&self, width: u32, height: u32) -> (usize, usize) {
        (
            (width / self.cell_size) as usize,
            (height / self.cell_size) as usize,
        )
    }

    fn blocks(&self, cells_x: usize, cells_y: usize) -> (usize, usize) {
        let b = self.block_cells as usize;
        let s = self.block_stride as usize;
        if cells_x < b || cells_y < b {
            return (0, 0);
        }
        ((cells_x - b) / s + 1, (cells_y - b) / s + 1)
    }

    /// Descriptor length for a `width` x `height` patch.
    pub fn descriptor_len(&self, width: u32, height: u32) -> usize {
        let (cx, cy) = self.cells(width, height);
        let (bx, by) = self.blocks(cx, cy);
        bx * by * (self.block_cells as usize).pow(2) * self.bins
    }

    fn check_patch(&self, width: u32, height: u32) -> Result<()> {
        let min = self.cell_size * self.block_cells;
        if width < min || height < min {
            return Err(Error::PatchTooSmall { width, height, min });
        }
        Ok(())
    }
}

/// Per-pixel gradient magnitude and continuous orientation-bin coordinate.
///
/// `bin_pos` lies in [-0.5, bins - 0.5): `floor` gives the lower voting bin
/// (wrapped), the fraction the weight of the upper one.
#[derive(Debug, Clone)]
pub(crate) struct GradientField {
    width: usize,
    height: usize,
    mag: Vec<f64>,
    bin_pos: Vec<f64>,
}

#[inline]
fn polar(dx: f64, dy: f64, bins: usize) -> (f64, f64) {
    let mag = (dx * dx + dy * dy).sqrt();
    let mut deg = dy.atan2(dx).to_degrees();
    if deg < 0.0 {
        deg += 180.0;
    }
    if deg >= 180.0 {
        deg -= 180.0;
    }
    (mag, deg * bins as f64 / 180.0 - 0.5)
}

impl GradientField {
    /// Centered differences with replication at the borders of `gray`.
    pub(crate) fn compute(gray: &GrayImage, bins: usize) -> GradientField {
        let (w, h) = (gray.width as usize, gray.height as usize);
        let mut mag = vec![0.0; w * h];
        let mut bin_pos = vec![0.0; w * h];
        for y in 0..h {
            let ym = y.saturating_sub(1);
            let yp = (y + 1).min(h - 1);
            for x in 0..w {
                let xm = x.saturating_sub(1);
                let xp = (x + 1).min(w - 1);
                let dx = gray.data[y * w + xp] as f64 - gray.data[y * w + xm] as f64;
                let dy = gray.data[yp * w + x] as f64 - gray.data[ym * w + x] as f64;
                let (m, c) = polar(dx, dy, bins);
                mag[y * w + x] = m;
                bin_pos[y * w + x] = c;
            }
        }
        GradientField {
            width: w,
            height: h,
            mag,
            bin_pos,
        }
    }
}

/// Accumulates cell histograms and normalized blocks out of a gradient field
/// whose extent is exactly the patch. Shared by the patch and dense paths.
fn descriptor_from_field(field: &GradientField, params: &HogParams, out: &mut Vec<f64>) {
    let bins = params.bins;
    let cs = params.cell_size as usize;
    let (cells_x, cells_y) = params.cells(field.width as u32, field.height as u32);

    let mut hists = vec![0.0f64; cells_x * cells_y * bins];
    for cj in 0..cells_y {
        for ci in 0..cells_x {
            let hist = &mut hists[(cj * cells_x + ci) * bins..(cj * cells_x + ci + 1) * bins];
            for y in cj * cs..(cj + 1) * cs {
                for x in ci * cs..(ci + 1) * cs {
                    let p = y * field.width + x;
                    let m = field.mag[p];
                    let c = field.bin_pos[p];
                    let f = c.floor();
                    let frac = c - f;
                    let b0 = (f as i64).rem_euclid(bins as i64) as usize;
                    let b1 = (b0 + 1) % bins;
                    hist[b0] += m * (1.0 - frac);
                    hist[b1] += m * frac;
                }
            }
        }
    }

    let (blocks_x, blocks_y) = params.blocks(cells_x, cells_y);
    let b = params.block_cells as usize;
    let stride = params.block_stride as usize;
    let block_len = b * b * bins;
    let eps = params.normalization_epsilon;
    for bj in 0..blocks_y {
        for bi in 0..blocks_x {
            let start = out.len();
            for cj in 0..b {
                for ci in 0..b {
                    let cell = (bj * stride + cj) * cells_x + (bi * stride + ci);
                    out.extend_from_slice(&hists[cell * bins..(cell + 1) * bins]);
                }
            }
            let block = &mut out[start..start + block_len];
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            for v in block.iter_mut() {
                *v /= norm;
                if *v > 0.2 {
                    *v = 0.2;
                }
            }
            let norm = (block.iter().map(|v| v * v).sum::<f64>() + eps).sqrt();
            for v in block.iter_mut() {
                *v /= norm;
            }
        }
    }
}

/// HOG descriptor of a single grayscale patch.
pub fn hog_descriptor(patch: &GrayImage, params: &HogParams) -> Result<Vec<f64>> {
    params.validate();
    params.check_patch(patch.width, patch.height)?;
    let field = GradientField::compute(patch, params.bins);
    let mut out = Vec::with_capacity(params.descriptor_len(patch.width, patch.height));
    descriptor_from_field(&field, params, &mut out);
    Ok(out)
}

/// Shared state for evaluating HOG windows densely over one image.
pub(crate) struct DenseHog {
    gray: GrayImage,
    field: GradientField,
    params: HogParams,
}

/// Reusable per-worker window buffer.
pub(crate) struct DenseHogScratch {
    window: GradientField,
}

impl DenseHog {
    pub(crate) fn new(gray: GrayImage, params: HogParams) -> DenseHog {
        params.validate();
        let field = GradientField::compute(&gray, params.bins);
        DenseHog {
            gray,
            field,
            params,
        }
    }

    pub(crate) fn scratch(&self) -> DenseHogScratch {
        DenseHogScratch {
            window: GradientField {
                width: 0,
                height: 0,
                mag: Vec::new(),
                bin_pos: Vec::new(),
            },
        }
    }

    /// Appends the descriptor of `window` to `out`; bit-identical to
    /// `hog_descriptor` on the cropped window.
    pub(crate) fn descriptor_into(
        &self,
        window: &Extent,
        scratch: &mut DenseHogScratch,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        self.params.check_patch(window.width, window.height)?;
        let (w, h) = (window.width as usize, window.height as usize);
        let (ox, oy) = (window.x as usize, window.y as usize);
        let iw = self.field.width;

        let field = &mut scratch.window;
        field.width = w;
        field.height = h;
        field.mag.resize(w * h, 0.0);
        field.bin_pos.resize(w * h, 0.0);

        for y in 0..h {
            let src = (oy + y) * iw + ox;
            field.mag[y * w..(y + 1) * w].copy_from_slice(&self.field.mag[src..src + w]);
            field.bin_pos[y * w..(y + 1) * w].copy_from_slice(&self.field.bin_pos[src..src + w]);
        }

        // window borders replicate the window edge, not the image, so the
        // first/last row and column are recomputed from the luminance
        let gray = &self.gray;
        let gw = gray.width as usize;
        let mut fix = |lx: usize, ly: usize| {
            let xm = ox + lx.saturating_sub(1);
            let xp = ox + (lx + 1).min(w - 1);
            let ym = oy + ly.saturating_sub(1);
            let yp = oy + (ly + 1).min(h - 1);
            let (ax, ay) = (ox + lx, oy + ly);
            let dx = gray.data[ay * gw + xp] as f64 - gray.data[ay * gw + xm] as f64;
            let dy = gray.data[yp * gw + ax] as f64 - gray.data[ym * gw + ax] as f64;
            let (m, c) = polar(dx, dy, self.params.bins);
            field.mag[ly * w + lx] = m;
            field.bin_pos[ly * w + lx] = c;
        };
        for lx in 0..w {
            fix(lx, 0);
            fix(lx, h - 1);
        }
        for ly in 1..h.saturating_sub(1) {
            fix(0, ly);
            fix(w - 1, ly);
        }

        descriptor_from_field(field, &self.params, out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_patch_gives_zero_descriptor() {
        let patch = GrayImage::from_fn(100, 100, |_, _| 137);
        let d = hog_descriptor(&patch, &HogParams::default()).unwrap();
        assert_eq!(d.len(), 4356);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn default_layout_dimensions() {
        let p = HogParams::default();
        // 100 px -> 12x12 cells -> 11x11 blocks of 2x2 cells x 9 bins
        assert_eq!(p.descriptor_len(100, 100), 11 * 11 * 2 * 2 * 9);
        assert_eq!(p.descriptor_len(16, 16), 2 * 2 * 9);
    }

    #[test]
    fn too_small_patch_rejected() {
        let patch = GrayImage::from_fn(15, 16, |x, y| (x + y) as u8);
        let err = hog_descriptor(&patch, &HogParams::default()).unwrap_err();
        assert!(matches!(err, Error::PatchTooSmall { .. }));
    }

    #[test]
    fn entries_lie_in_unit_interval() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let patch = GrayImage::from_fn(48, 40, |_, _| rng.random());
            let d = hog_descriptor(&patch, &HogParams::default()).unwrap();
            assert!(d.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn invariant_to_constant_luminance_shift() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        let base = GrayImage::from_fn(32, 32, |_, _| rng.random_range(0..200));
        let shifted = GrayImage::from_fn(32, 32, |x, y| base.get(x, y) + 50);
        let p = HogParams::default();
        assert_eq!(
            hog_descriptor(&base, &p).unwrap(),
            hog_descriptor(&shifted, &p).unwrap()
        );
    }

    #[test]
    fn shift_by_one_cell_moves_blocks() {
        // translating the patch window by exactly one cell must reproduce the
        // blocks of the original at shifted block coordinates, wherever the
        // block stays clear of the replicated left/right border columns of
        // both patches
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let img = GrayImage::from_fn(64, 48, |_, _| rng.random());
        let p = HogParams::default();
        let cs = p.cell_size;

        let a = img.crop(&Extent::new(0, 8, 48, 32));
        let b = img.crop(&Extent::new(cs, 8, 48, 32));
        let da = hog_descriptor(&a, &p).unwrap();
        let db = hog_descriptor(&b, &p).unwrap();

        let (bx, by) = (5usize, 3usize); // 6x4 cells -> 5x3 blocks
        let block_len = 2 * 2 * 9;
        // block (i, j) of b equals block (i+1, j) of a for i in {1, 2}
        for bj in 0..by {
            for bi in 1..=2usize {
                let src = &da[(bj * bx + bi + 1) * block_len..(bj * bx + bi + 2) * block_len];
                let dst = &db[(bj * bx + bi) * block_len..(bj * bx + bi + 1) * block_len];
                assert_eq!(src, dst, "block ({bi},{bj})");
            }
        }
    }

    #[test]
    fn dense_path_matches_patch_descriptor_bit_exact() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let gray = GrayImage::from_fn(90, 70, |_, _| rng.random());
        let params = HogParams::default();
        let dense = DenseHog::new(gray.clone(), params);
        let mut scratch = dense.scratch();

        for &(x, y, w, h) in &[
            (0u32, 0u32, 32u32, 32u32),
            (10, 5, 48, 40),
            (58, 38, 32, 32),
            (3, 3, 16, 16),
        ] {
            let window = Extent::new(x, y, w, h);
            let mut got = Vec::new();
            dense
                .descriptor_into(&window, &mut scratch, &mut got)
                .unwrap();
            let want = hog_descriptor(&gray.crop(&window), &params).unwrap();
            assert_eq!(got, want, "window at ({x},{y}) size {w}x{h}");
        }
    }
}
