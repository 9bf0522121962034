//! Dense prediction: slide a fixed window over the image, score every
//! position, and average overlapping window scores into one value per
//! step-sized cell.
//!
//! Scores are accumulated in f64 and divided once per cell, so the map is
//! independent of window evaluation order. Cells the full window lattice
//! cannot reach (the right/bottom margin) are reported with coverage 0 and
//! score 0 rather than extrapolated.

use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::exec;
use crate::features::{DescriptorContext, DescriptorParams};
use crate::gbdt::TreeEnsemble;
use crate::raster::{Extent, RasterImage};

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMap {
    pub cell_size: u32,
    pub grid_width: u32,
    pub grid_height: u32,
    /// Row-major mean window score per cell, in [0, 1].
    pub scores: Vec<f64>,
    /// Number of windows that fully contain each cell.
    pub coverage: Vec<u32>,
}

impl PredictionMap {
    #[inline]
    pub fn index(&self, cx: u32, cy: u32) -> usize {
        (cy * self.grid_width + cx) as usize
    }

    pub fn score(&self, cx: u32, cy: u32) -> f64 {
        self.scores[self.index(cx, cy)]
    }

    pub fn coverage_at(&self, cx: u32, cy: u32) -> u32 {
        self.coverage[self.index(cx, cy)]
    }

    /// Cells per axis that no full window reaches, at the right and bottom.
    pub fn uncovered_margin(&self) -> (u32, u32) {
        let covered = |dim_cells: u32, has: &dyn Fn(u32) -> bool| {
            let mut margin = 0;
            for c in (0..dim_cells).rev() {
                if has(c) {
                    break;
                }
                margin += 1;
            }
            margin
        };
        let right = covered(self.grid_width, &|cx| self.coverage_at(cx, 0) > 0);
        let bottom = covered(self.grid_height, &|cy| self.coverage_at(0, cy) > 0);
        (right, bottom)
    }
}

/// Scores every window position and averages overlaps into step-sized cells.
pub fn sliding_window_predict(
    img: &RasterImage,
    model: &TreeEnsemble,
    window: u32,
    step: u32,
    descriptor: &DescriptorParams,
) -> Result<PredictionMap> {
    if window > img.width || window > img.height {
        return Err(Error::WindowExceedsImage {
            window,
            width: img.width,
            height: img.height,
        });
    }
    if !window.is_multiple_of(step) {
        return Err(Error::WindowNotMultipleOfStep { window, step });
    }
    let expected_dim = descriptor.dim_for(window);
    if expected_dim != model.dim {
        return Err(Error::DimMismatch {
            expected: model.dim,
            got: expected_dim,
        });
    }

    let positions_x = (img.width - window) / step + 1;
    let positions_y = (img.height - window) / step + 1;
    let n_windows = (positions_x * positions_y) as usize;

    let ctx = DescriptorContext::new(img, *descriptor);
    let scores = exec::map_indexed_with(
        n_windows,
        || (ctx.scratch(), Vec::with_capacity(expected_dim)),
        |(scratch, row), i| -> Result<f64> {
            let wx = (i as u32 % positions_x) * step;
            let wy = (i as u32 / positions_x) * step;
            row.clear();
            ctx.descriptor_into(&Extent::new(wx, wy, window, window), scratch, row)?;
            model.predict_score(row)
        },
    );

    let grid_width = img.width / step;
    let grid_height = img.height / step;
    let n_cells = (grid_width * grid_height) as usize;
    let mut acc = vec![0.0f64; n_cells];
    let mut coverage = vec![0u32; n_cells];
    let cells_per_window = window / step;

    for (i, score) in scores.into_iter().enumerate() {
        let score = score?;
        let cx0 = i as u32 % positions_x;
        let cy0 = i as u32 / positions_x;
        for cy in cy0..cy0 + cells_per_window {
            let base = (cy * grid_width) as usize;
            for cx in cx0..cx0 + cells_per_window {
                acc[base + cx as usize] += score;
                coverage[base + cx as usize] += 1;
            }
        }
    }

    let scores = acc
        .iter()
        .zip(&coverage)
        .map(|(&sum, &n)| if n == 0 { 0.0 } else { sum / n as f64 })
        .collect();
    Ok(PredictionMap {
        cell_size: step,
        grid_width,
        grid_height,
        scores,
        coverage,
    })
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct MapSidecar {
    cell_size: u32,
    width: u32,
    height: u32,
    uncovered_margin: MarginSidecar,
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct MarginSidecar {
    right_cells: u32,
    bottom_cells: u32,
}

fn sidecar_path(png_path: &Path) -> PathBuf {
    png_path.with_extension("json")
}

/// Writes the map as a 16-bit grayscale PNG (score x 65535, rounded) plus a
/// JSON sidecar describing cell size and the uncovered margin.
pub fn save_prediction(map: &PredictionMap, png_path: impl AsRef<Path>) -> Result<()> {
    let png_path = png_path.as_ref();
    let data: Vec<u16> = map
        .scores
        .iter()
        .map(|&s| (s * 65535.0).round() as u16)
        .collect();
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(map.grid_width, map.grid_height, data)
            .expect("dimensions match data length");
    buf.save_with_format(png_path, image::ImageFormat::Png)
        .map_err(|e| Error::ImageEncode {
            path: png_path.to_path_buf(),
            source: e,
        })?;

    let (right_cells, bottom_cells) = map.uncovered_margin();
    let sidecar = MapSidecar {
        cell_size: map.cell_size,
        width: map.grid_width,
        height: map.grid_height,
        uncovered_margin: MarginSidecar {
            right_cells,
            bottom_cells,
        },
    };
    let path = sidecar_path(png_path);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &sidecar).map_err(|e| Error::Format {
        what: "prediction sidecar",
        path,
        detail: e.to_string(),
    })
}

/// Reads a prediction map saved by [`save_prediction`]. Scores are the
/// 16-bit quantized values; coverage is reconstructed as 1 inside the covered
/// region and 0 in the margin.
pub fn load_prediction(png_path: impl AsRef<Path>) -> Result<PredictionMap> {
    let png_path = png_path.as_ref();
    let side_path = sidecar_path(png_path);
    let file = std::fs::File::open(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: MapSidecar =
        serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Format {
            what: "prediction sidecar",
            path: side_path.clone(),
            detail: e.to_string(),
        })?;

    let reader = image::ImageReader::open(png_path).map_err(|e| Error::io(png_path, e))?;
    let decoded = reader.decode().map_err(|e| Error::ImageDecode {
        path: png_path.to_path_buf(),
        source: e,
    })?;
    let buf = match decoded {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::UnsupportedBitDepth {
                path: png_path.to_path_buf(),
                found: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = buf.dimensions();
    if (w, h) != (sidecar.width, sidecar.height) {
        return Err(Error::Format {
            what: "prediction sidecar",
            path: side_path,
            detail: format!(
                "png is {w}x{h}, sidecar says {}x{}",
                sidecar.width, sidecar.height
            ),
        });
    }
    let scores: Vec<f64> = buf.into_raw().iter().map(|&v| v as f64 / 65535.0).collect();
    let covered_x = w - sidecar.uncovered_margin.right_cells;
    let covered_y = h - sidecar.uncovered_margin.bottom_cells;
    let coverage = (0..h)
        .flat_map(|cy| (0..w).map(move |cx| u32::from(cx < covered_x && cy < covered_y)))
        .collect();
    Ok(PredictionMap {
        cell_size: sidecar.cell_size,
        grid_width: w,
        grid_height: h,
        scores,
        coverage,
    })
}
