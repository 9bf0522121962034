//! Patch tessellation and per-patch feature vectors.
//!
//! An image is cut into fixed-size patches on a regular grid; each patch is
//! described either by built-in descriptors (HOG, color histograms, or their
//! concatenation) or by vectors precomputed elsewhere and ingested from a
//! keyed feature file.

pub mod color;
pub mod hog;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::str::FromStr;

pub use color::color_histogram;
pub use hog::{hog_descriptor, HogParams};

use crate::error::{Error, Result};
use crate::exec;
use crate::raster::{to_grayscale, Extent, RasterImage};

/// Identifies one patch: the image it came from and its top-left origin.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PatchKey {
    pub image_id: String,
    pub x: u32,
    pub y: u32,
}

impl PatchKey {
    pub fn new(image_id: impl Into<String>, x: u32, y: u32) -> Self {
        PatchKey {
            image_id: image_id.into(),
            x,
            y,
        }
    }
}

impl fmt::Display for PatchKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:({},{})", self.image_id, self.x, self.y)
    }
}

/// Row-major grid of patch origins, all lying fully inside the source extent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchGrid {
    pub image_id: String,
    pub patch_size: u32,
    pub stride: u32,
    pub origins: Vec<(u32, u32)>,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn keys(&self) -> Vec<PatchKey> {
        self.origins
            .iter()
            .map(|&(x, y)| PatchKey::new(self.image_id.clone(), x, y))
            .collect()
    }

    pub fn extent_of(&self, index: usize) -> Extent {
        let (x, y) = self.origins[index];
        Extent::new(x, y, self.patch_size, self.patch_size)
    }
}

/// Enumerates every `(i * stride, j * stride)` origin whose patch fits fully
/// inside `extent`, row-major.
pub fn extract_patches(
    image_id: &str,
    extent: &Extent,
    patch_size: u32,
    stride: u32,
) -> Result<PatchGrid> {
    assert!(stride >= 1, "stride must be positive");
    if patch_size > extent.width || patch_size > extent.height {
        return Err(Error::PatchTooLarge {
            patch: patch_size,
            width: extent.width,
            height: extent.height,
        });
    }
    let mut origins = Vec::new();
    let mut y = extent.y;
    while y + patch_size <= extent.y + extent.height {
        let mut x = extent.x;
        while x + patch_size <= extent.x + extent.width {
            origins.push((x, y));
            x += stride;
        }
        y += stride;
    }
    Ok(PatchGrid {
        image_id: image_id.to_string(),
        patch_size,
        stride,
        origins,
    })
}

/// Which descriptor to compute per patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DescriptorKind {
    Hog,
    Color,
    HogColor,
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DescriptorKind::Hog => "hog",
            DescriptorKind::Color => "color",
            DescriptorKind::HogColor => "hog+color",
        })
    }
}

impl FromStr for DescriptorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hog" => Ok(DescriptorKind::Hog),
            "color" => Ok(DescriptorKind::Color),
            "hog+color" => Ok(DescriptorKind::HogColor),
            other => Err(format!(
                "unknown descriptor `{other}`; use hog, color or hog+color"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DescriptorParams {
    pub kind: DescriptorKind,
    pub hog: HogParams,
    pub color_bins: usize,
}

impl DescriptorParams {
    pub fn new(kind: DescriptorKind) -> Self {
        DescriptorParams {
            kind,
            hog: HogParams::default(),
            color_bins: 8,
        }
    }

    /// Descriptor length for a square patch of `size` pixels.
    pub fn dim_for(&self, size: u32) -> usize {
        let hog = self.hog.descriptor_len(size, size);
        let color = 3 * self.color_bins;
        match self.kind {
            DescriptorKind::Hog => hog,
            DescriptorKind::Color => color,
            DescriptorKind::HogColor => hog + color,
        }
    }
}

/// One feature row per patch key; rows are stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub keys: Vec<PatchKey>,
    pub dim: usize,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix {
            keys: Vec::new(),
            dim,
            values: Vec::new(),
        }
    }

    pub fn push_row(&mut self, key: PatchKey, row: &[f64]) {
        assert_eq!(row.len(), self.dim, "row length must equal dim");
        self.keys.push(key);
        self.values.extend_from_slice(row);
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1)).take(self.len())
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.dim);
        for &i in indices {
            out.push_row(self.keys[i].clone(), self.row(i));
        }
        out
    }

    pub fn index_by_key(&self) -> HashMap<&PatchKey, usize> {
        self.keys.iter().enumerate().map(|(i, k)| (k, i)).collect()
    }
}

/// Per-image state for evaluating descriptors over many windows.
///
/// The same code path serves grid patches and dense sliding windows, so
/// training features and inference features agree bit for bit.
pub struct DescriptorContext<'a> {
    img: &'a RasterImage,
    dense: Option<hog::DenseHog>,
    params: DescriptorParams,
}

pub struct DescriptorScratch {
    hog: Option<hog::DenseHogScratch>,
}

impl<'a> DescriptorContext<'a> {
    pub fn new(img: &'a RasterImage, params: DescriptorParams) -> Self {
        let dense = match params.kind {
            DescriptorKind::Color => None,
            _ => Some(hog::DenseHog::new(to_grayscale(img), params.hog)),
        };
        DescriptorContext { img, dense, params }
    }

    pub fn scratch(&self) -> DescriptorScratch {
        DescriptorScratch {
            hog: self.dense.as_ref().map(|d| d.scratch()),
        }
    }

    /// Appends the descriptor of `window` to `out`.
    pub fn descriptor_into(
        &self,
        window: &Extent,
        scratch: &mut DescriptorScratch,
        out: &mut Vec<f64>,
    ) -> Result<()> {
        if let Some(dense) = &self.dense {
            dense.descriptor_into(window, scratch.hog.as_mut().expect("hog scratch"), out)?;
        }
        if matches!(
            self.params.kind,
            DescriptorKind::Color | DescriptorKind::HogColor
        ) {
            out.extend_from_slice(&color_histogram(
                &self.img.crop(window),
                self.params.color_bins,
            ));
        }
        Ok(())
    }
}

/// One descriptor row per grid patch, in grid order.
pub fn compute_features(
    img: &RasterImage,
    grid: &PatchGrid,
    params: &DescriptorParams,
) -> Result<FeatureMatrix> {
    let ctx = DescriptorContext::new(img, *params);
    let rows = exec::map_indexed_with(
        grid.len(),
        || ctx.scratch(),
        |scratch, i| -> Result<Vec<f64>> {
            let mut row = Vec::with_capacity(params.dim_for(grid.patch_size));
            ctx.descriptor_into(&grid.extent_of(i), scratch, &mut row)?;
            Ok(row)
        },
    );
    let mut matrix = FeatureMatrix::new(params.dim_for(grid.patch_size));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row?;
        matrix.push_row(
            PatchKey::new(grid.image_id.clone(), grid.origins[i].0, grid.origins[i].1),
            &row,
        );
    }
    Ok(matrix)
}

const FEATURE_MAGIC: &str = "APLFEAT v1";

/// Writes the binary feature container: a text header
/// `APLFEAT v1 dim=<d> count=<n>` followed by one record per row
/// (length-prefixed image id, two u32 origin coordinates, `d` f32 values,
/// all little-endian).
pub fn save_features(matrix: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    writeln!(
        w,
        "{FEATURE_MAGIC} dim={} count={}",
        matrix.dim,
        matrix.len()
    )
    .map_err(io_err)?;
    for (i, key) in matrix.keys.iter().enumerate() {
        let id = key.image_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())
            .map_err(io_err)?;
        w.write_all(id).map_err(io_err)?;
        w.write_all(&key.x.to_le_bytes()).map_err(io_err)?;
        w.write_all(&key.y.to_le_bytes()).map_err(io_err)?;
        for v in matrix.row(i) {
            w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

fn bad(path: &Path, detail: impl Into<String>) -> Error {
    Error::Format {
        what: "feature file",
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn load_features_binary(path: &Path, reader: &mut impl BufRead) -> Result<FeatureMatrix> {
    let mut header = String::new();
    reader
        .read_line(&mut header)
        .map_err(|e| Error::io(path, e))?;
    let header = header.trim_end();
    let rest = header
        .strip_prefix(FEATURE_MAGIC)
        .ok_or_else(|| bad(path, "missing APLFEAT v1 magic"))?;
    let mut dim = None;
    let mut count = None;
    for token in rest.split_whitespace() {
        if let Some(v) = token.strip_prefix("dim=") {
            dim = v.parse::<usize>().ok();
        } else if let Some(v) = token.strip_prefix("count=") {
            count = v.parse::<usize>().ok();
        }
    }
    let dim = dim.ok_or_else(|| bad(path, "header lacks dim="))?;
    let count = count.ok_or_else(|| bad(path, "header lacks count="))?;

    let mut matrix = FeatureMatrix::new(dim);
    let mut row = vec![0.0f64; dim];
    for r in 0..count {
        let mut u32buf = [0u8; 4];
        reader
            .read_exact(&mut u32buf)
            .map_err(|_| bad(path, format!("truncated record {r}")))?;
        let id_len = u32::from_le_bytes(u32buf) as usize;
        if id_len > 1 << 20 {
            return Err(bad(
                path,
                format!("implausible id length {id_len} in record {r}"),
            ));
        }
        let mut id = vec![0u8; id_len];
        reader
            .read_exact(&mut id)
            .map_err(|_| bad(path, format!("truncated record {r}")))?;
        let image_id = String::from_utf8(id)
            .map_err(|_| bad(path, format!("non-utf8 image id in record {r}")))?;
        reader
            .read_exact(&mut u32buf)
            .map_err(|_| bad(path, format!("truncated record {r}")))?;
        let x = u32::from_le_bytes(u32buf);
        reader
            .read_exact(&mut u32buf)
            .map_err(|_| bad(path, format!("truncated record {r}")))?;
        let y = u32::from_le_bytes(u32buf);
        let mut f32buf = [0u8; 4];
        for v in row.iter_mut() {
            reader
                .read_exact(&mut f32buf)
                .map_err(|_| bad(path, format!("truncated record {r}")))?;
            *v = f32::from_le_bytes(f32buf) as f64;
        }
        matrix.push_row(PatchKey::new(image_id, x, y), &row);
    }
    Ok(matrix)
}

fn load_features_csv(path: &Path, reader: &mut impl BufRead) -> Result<FeatureMatrix> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad(path, "empty file"))?
        .map_err(|e| Error::io(path, e))?;
    let cols: Vec<&str> = header.trim_end().split(',').collect();
    if cols.len() < 4 || cols[0] != "image_id" || cols[1] != "x" || cols[2] != "y" {
        return Err(bad(path, "csv header must start with image_id,x,y,f0"));
    }
    let dim = cols.len() - 3;
    let mut matrix = FeatureMatrix::new(dim);
    let mut row = vec![0.0f64; dim];
    for (ln, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() < 3 {
            return Err(bad(path, format!("line {}: too few fields", ln + 2)));
        }
        let image_id = fields[0].to_string();
        let x: u32 = fields[1]
            .parse()
            .map_err(|_| bad(path, format!("line {}: bad x", ln + 2)))?;
        let y: u32 = fields[2]
            .parse()
            .map_err(|_| bad(path, format!("line {}: bad y", ln + 2)))?;
        if fields.len() - 3 != dim {
            return Err(Error::FeatureLengthMismatch {
                path: path.to_path_buf(),
                image_id,
                x,
                y,
                expected: dim,
                got: fields.len() - 3,
            });
        }
        for (v, field) in row.iter_mut().zip(&fields[3..]) {
            *v = field
                .parse::<f32>()
                .map_err(|_| bad(path, format!("line {}: bad value `{field}`", ln + 2)))?
                as f64;
        }
        matrix.push_row(PatchKey::new(image_id, x, y), &row);
    }
    Ok(matrix)
}

/// Reads a feature file (binary `APLFEAT v1` or CSV), keeping file row order.
/// Duplicate keys are rejected.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 7];
    let n = file.read(&mut magic).map_err(|e| Error::io(path, e))?;
    file.seek(SeekFrom::Start(0))
        .map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let matrix = if &magic[..n] == b"APLFEAT" {
        load_features_binary(path, &mut reader)?
    } else {
        load_features_csv(path, &mut reader)?
    };
    let mut seen = HashMap::with_capacity(matrix.len());
    for key in &matrix.keys {
        if seen.insert(key, ()).is_some() {
            return Err(Error::DuplicateFeatureKey {
                path: path.to_path_buf(),
                image_id: key.image_id.clone(),
                x: key.x,
                y: key.y,
            });
        }
    }
    Ok(matrix)
}

/// Reads externally computed features and orders them to match `grid`.
/// Every grid patch must be present; extra keys are ignored.
pub fn load_external_features(path: impl AsRef<Path>, grid: &PatchGrid) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let matrix = load_features(path)?;
    let by_key = matrix.index_by_key();
    let mut indices = Vec::with_capacity(grid.len());
    for &(x, y) in &grid.origins {
        let key = PatchKey::new(grid.image_id.clone(), x, y);
        match by_key.get(&key) {
            Some(&i) => indices.push(i),
            None => {
                return Err(Error::MissingFeatureKey {
                    path: path.to_path_buf(),
                    image_id: key.image_id,
                    x,
                    y,
                })
            }
        }
    }
    Ok(matrix.select(&indices))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn patch_counts_at_reference_sizes() {
        // disjoint patching of a full-scale image
        let grid = extract_patches("a", &Extent::of_image(10_000, 10_000), 100, 100).unwrap();
        assert_eq!(grid.len(), 10_000);

        // dense sliding positions
        let grid = extract_patches("a", &Extent::of_image(1000, 1000), 100, 10).unwrap();
        assert_eq!(grid.len(), 91 * 91);

        let err = extract_patches("a", &Extent::of_image(50, 50), 100, 100).unwrap_err();
        assert!(matches!(err, Error::PatchTooLarge { .. }));
    }

    #[test]
    fn origins_are_row_major_and_inside() {
        let grid = extract_patches("a", &Extent::of_image(30, 20), 10, 10).unwrap();
        assert_eq!(
            grid.origins,
            vec![(0, 0), (10, 0), (20, 0), (0, 10), (10, 10), (20, 10)]
        );
    }

    #[test]
    fn disjoint_grid_partitions_covered_region() {
        let grid = extract_patches("a", &Extent::of_image(40, 30), 10, 10).unwrap();
        let mut covered = vec![0u8; 40 * 30];
        for i in 0..grid.len() {
            let e = grid.extent_of(i);
            for y in e.y..e.y + e.height {
                for x in e.x..e.x + e.width {
                    covered[(y * 40 + x) as usize] += 1;
                }
            }
        }
        assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn hog_color_dims_concatenate() {
        let p = DescriptorParams::new(DescriptorKind::HogColor);
        assert_eq!(p.dim_for(100), 4356 + 24);
        assert_eq!(
            DescriptorParams::new(DescriptorKind::Hog).dim_for(100),
            4356
        );
        assert_eq!(
            DescriptorParams::new(DescriptorKind::Color).dim_for(100),
            24
        );
    }

    #[test]
    fn single_patch_matrix_equals_direct_descriptor() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let img = RasterImage::from_fn(40, 40, |_, _| [rng.random(), rng.random(), rng.random()]);
        let grid = PatchGrid {
            image_id: "x".into(),
            patch_size: 40,
            stride: 40,
            origins: vec![(0, 0)],
        };
        let params = DescriptorParams::new(DescriptorKind::HogColor);
        let m = compute_features(&img, &grid, &params).unwrap();
        assert_eq!(m.len(), 1);

        let mut want = hog_descriptor(&to_grayscale(&img), &params.hog).unwrap();
        want.extend(color_histogram(&img, params.color_bins));
        assert_eq!(m.row(0), &want[..]);
    }

    #[test]
    fn rows_depend_only_on_their_patch() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let img = RasterImage::from_fn(64, 48, |_, _| [rng.random(), rng.random(), rng.random()]);
        let grid = extract_patches("x", &Extent::of_image(64, 48), 16, 16).unwrap();
        let params = DescriptorParams::new(DescriptorKind::HogColor);
        let base = compute_features(&img, &grid, &params).unwrap();

        // permuting grid order permutes the rows identically
        let mut permuted = grid.clone();
        permuted.origins.reverse();
        let flipped = compute_features(&img, &permuted, &params).unwrap();
        for i in 0..base.len() {
            assert_eq!(base.row(i), flipped.row(base.len() - 1 - i));
            assert_eq!(base.keys[i], flipped.keys[base.len() - 1 - i]);
        }
    }

    #[test]
    fn empty_grid_keeps_declared_dim() {
        let img = RasterImage::from_fn(20, 20, |_, _| [9, 9, 9]);
        let grid = PatchGrid {
            image_id: "x".into(),
            patch_size: 16,
            stride: 16,
            origins: vec![],
        };
        let m =
            compute_features(&img, &grid, &DescriptorParams::new(DescriptorKind::Color)).unwrap();
        assert_eq!(m.len(), 0);
        assert_eq!(m.dim, 24);
    }

    fn sample_matrix() -> FeatureMatrix {
        let mut m = FeatureMatrix::new(3);
        m.push_row(PatchKey::new("img_a", 0, 0), &[1.0, 2.0, 3.0]);
        m.push_row(PatchKey::new("img_a", 16, 0), &[4.0, 5.0, 6.0]);
        m.push_row(PatchKey::new("img_b", 0, 16), &[-1.5, 0.25, 9.0]);
        m
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.aplfeat");
        let m = sample_matrix();
        save_features(&m, &path).unwrap();
        let back = load_features(&path).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn csv_variant_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(
            &path,
            "image_id,x,y,f0,f1\nimg,0,0,1.5,2\nimg,16,0,3,4.25\n",
        )
        .unwrap();
        let m = load_features(&path).unwrap();
        assert_eq!(m.dim, 2);
        assert_eq!(m.len(), 2);
        assert_eq!(m.row(1), &[3.0, 4.25]);
    }

    #[test]
    fn external_join_reorders_to_grid() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.aplfeat");
        let grid = PatchGrid {
            image_id: "img_a".into(),
            patch_size: 16,
            stride: 16,
            origins: vec![(0, 0), (16, 0)],
        };
        // file rows in reverse order, plus an unrelated key that is ignored
        let mut m = FeatureMatrix::new(2);
        m.push_row(PatchKey::new("img_a", 16, 0), &[3.0, 4.0]);
        m.push_row(PatchKey::new("img_a", 0, 0), &[1.0, 2.0]);
        m.push_row(PatchKey::new("zzz", 0, 0), &[9.0, 9.0]);
        save_features(&m, &path).unwrap();

        let joined = load_external_features(&path, &grid).unwrap();
        assert_eq!(joined.len(), 2);
        assert_eq!(joined.row(0), &[1.0, 2.0]);
        assert_eq!(joined.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn external_join_missing_key_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.aplfeat");
        let grid = PatchGrid {
            image_id: "img_a".into(),
            patch_size: 16,
            stride: 16,
            origins: vec![(0, 0), (16, 0)],
        };
        let mut m = FeatureMatrix::new(2);
        m.push_row(PatchKey::new("img_a", 0, 0), &[1.0, 2.0]);
        save_features(&m, &path).unwrap();

        match load_external_features(&path, &grid).unwrap_err() {
            Error::MissingFeatureKey { image_id, x, y, .. } => {
                assert_eq!((image_id.as_str(), x, y), ("img_a", 16, 0));
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn duplicate_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.aplfeat");
        let mut m = FeatureMatrix::new(1);
        m.keys.push(PatchKey::new("img", 0, 0));
        m.keys.push(PatchKey::new("img", 0, 0));
        m.values = vec![1.0, 2.0];
        save_features(&m, &path).unwrap();
        assert!(matches!(
            load_features(&path).unwrap_err(),
            Error::DuplicateFeatureKey { .. }
        ));
    }

    #[test]
    fn csv_row_length_mismatch_names_key() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(&path, "image_id,x,y,f0,f1\nimg,8,16,1.0\n").unwrap();
        match load_features(&path).unwrap_err() {
            Error::FeatureLengthMismatch {
                image_id,
                x,
                y,
                expected,
                got,
                ..
            } => {
                assert_eq!((image_id.as_str(), x, y), ("img", 8, 16));
                assert_eq!((expected, got), (2, 1));
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
