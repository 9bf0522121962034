//! Raster and geometry primitives shared by every stage: 8-bit RGB images,
//! grayscale rasters, binary masks, rectangular extents and their square
//! tessellation, plus lossless PNG/TIFF round trips.

use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, Luma};

use crate::error::{Error, Result};

/// Rectangular pixel region. `x` is the column of the left edge, `y` the row
/// of the top edge; the origin of an image is its top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Extent {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl Extent {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        assert!(width >= 1 && height >= 1, "extent must be at least 1x1");
        Extent {
            x,
            y,
            width,
            height,
        }
    }

    /// Extent of a full `width` x `height` image anchored at the origin.
    pub fn of_image(width: u32, height: u32) -> Self {
        Extent::new(0, 0, width, height)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x && x < self.x + self.width && y >= self.y && y < self.y + self.height
    }
}

/// Splits `extent` into non-overlapping `cell` x `cell` squares covering it
/// exactly, in row-major order. Both dimensions must be multiples of `cell`.
pub fn tessellate(extent: &Extent, cell: u32) -> Result<Vec<Extent>> {
    assert!(cell >= 1, "cell size must be positive");
    if !extent.width.is_multiple_of(cell) || !extent.height.is_multiple_of(cell) {
        return Err(Error::IndivisibleExtent {
            width: extent.width,
            height: extent.height,
            cell,
        });
    }
    let nx = extent.width / cell;
    let ny = extent.height / cell;
    let mut cells = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            cells.push(Extent::new(
                extent.x + i * cell,
                extent.y + j * cell,
                cell,
                cell,
            ));
        }
    }
    Ok(cells)
}

/// 3-channel 8-bit color image, row-major interleaved RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        assert_eq!(
            data.len(),
            width as usize * height as usize * 3,
            "RGB data length"
        );
        RasterImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        RasterImage::new(width, height, data)
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn extent(&self) -> Extent {
        Extent::of_image(self.width, self.height)
    }

    /// Copies the sub-image covered by `extent`, which must lie inside.
    pub fn crop(&self, extent: &Extent) -> RasterImage {
        assert!(extent.x + extent.width <= self.width && extent.y + extent.height <= self.height);
        let mut data = Vec::with_capacity(extent.width as usize * extent.height as usize * 3);
        for y in extent.y..extent.y + extent.height {
            let start = (y as usize * self.width as usize + extent.x as usize) * 3;
            data.extend_from_slice(&self.data[start..start + extent.width as usize * 3]);
        }
        RasterImage::new(extent.width, extent.height, data)
    }
}

/// Single-channel luminance raster with 8-bit samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "luma data length"
        );
        GrayImage {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> u8) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayImage::new(width, height, data)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn crop(&self, extent: &Extent) -> GrayImage {
        assert!(extent.x + extent.width <= self.width && extent.y + extent.height <= self.height);
        let mut data = Vec::with_capacity(extent.width as usize * extent.height as usize);
        for y in extent.y..extent.y + extent.height {
            let start = y as usize * self.width as usize + extent.x as usize;
            data.extend_from_slice(&self.data[start..start + extent.width as usize]);
        }
        GrayImage::new(extent.width, extent.height, data)
    }
}

/// Binary raster; samples are 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl SegmentationMask {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Self {
        assert!(width >= 1 && height >= 1, "mask must be at least 1x1");
        assert_eq!(
            data.len(),
            width as usize * height as usize,
            "mask data length"
        );
        assert!(data.iter().all(|&v| v <= 1), "mask samples must be 0 or 1");
        SegmentationMask {
            width,
            height,
            data,
        }
    }

    pub fn zeros(width: u32, height: u32) -> Self {
        SegmentationMask::new(width, height, vec![0; width as usize * height as usize])
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        debug_assert!(v <= 1);
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// ITU-R 601 luminance, rounded to the nearest integer per pixel.
pub fn to_grayscale(img: &RasterImage) -> GrayImage {
    let n = img.width as usize * img.height as usize;
    let mut data = Vec::with_capacity(n);
    for p in 0..n {
        let r = img.data[p * 3] as f64;
        let g = img.data[p * 3 + 1] as f64;
        let b = img.data[p * 3 + 2] as f64;
        data.push((0.299 * r + 0.587 * g + 0.114 * b).round() as u8);
    }
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
    {
        Some(ref e) if e == "png" => Ok(ImageFormat::Png),
        Some(ref e) if e == "tif" || e == "tiff" => Ok(ImageFormat::Tiff),
        other => Err(Error::Format {
            what: "image path",
            path: path.to_path_buf(),
            detail: format!("unsupported extension {:?}; use png or tiff", other),
        }),
    }
}

/// Loads an 8-bit RGB image from PNG or TIFF.
pub fn load_image(path: impl AsRef<Path>) -> Result<RasterImage> {
    let path = path.as_ref();
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        source: e,
    })?;
    match decoded {
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = buf.dimensions();
            Ok(RasterImage::new(w, h, buf.into_raw()))
        }
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            found: "16-bit".into(),
        }),
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            Err(Error::UnsupportedBitDepth {
                path: path.to_path_buf(),
                found: "32-bit float".into(),
            })
        }
        DynamicImage::ImageLuma8(_) => Err(Error::UnsupportedChannelCount {
            path: path.to_path_buf(),
            found: "1 (grayscale)".into(),
        }),
        DynamicImage::ImageLumaA8(_) => Err(Error::UnsupportedChannelCount {
            path: path.to_path_buf(),
            found: "2 (grayscale+alpha)".into(),
        }),
        DynamicImage::ImageRgba8(_) => Err(Error::UnsupportedChannelCount {
            path: path.to_path_buf(),
            found: "4 (RGBA)".into(),
        }),
        other => Err(Error::UnsupportedBitDepth {
            path: path.to_path_buf(),
            found: format!("{:?}", other.color()),
        }),
    }
}

/// Saves an RGB image as PNG or TIFF depending on the extension.
pub fn save_image(img: &RasterImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let format = format_for(path)?;
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(img.width, img.height, img.data.clone())
            .expect("dimensions match data length");
    buf.save_with_format(path, format)
        .map_err(|e| Error::ImageEncode {
            path: path.to_path_buf(),
            source: e,
        })
}

/// Saves a binary mask as an 8-bit single-channel PNG with values {0, 255}.
pub fn save_mask(mask: &SegmentationMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let data: Vec<u8> = mask
        .data
        .iter()
        .map(|&v| if v == 1 { 255 } else { 0 })
        .collect();
    let buf: image::ImageBuffer<Luma<u8>, Vec<u8>> =
        image::ImageBuffer::from_raw(mask.width, mask.height, data)
            .expect("dimensions match data length");
    buf.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::ImageEncode {
            path: path.to_path_buf(),
            source: e,
        })
}

/// Loads a binary mask from an 8-bit single-channel PNG with values {0, 255}.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SegmentationMask> {
    let path = path.as_ref();
    let reader = ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        source: e,
    })?;
    let buf = match decoded {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::UnsupportedChannelCount {
                path: path.to_path_buf(),
                found: format!("{:?}", other.color()),
            })
        }
    };
    let (w, h) = buf.dimensions();
    let mut data = Vec::with_capacity(w as usize * h as usize);
    for &Luma([v]) in buf.pixels() {
        match v {
            0 => data.push(0),
            255 => data.push(1),
            other => {
                return Err(Error::Format {
                    what: "mask sample",
                    path: path.to_path_buf(),
                    detail: format!("expected 0 or 255, found {other}"),
                })
            }
        }
    }
    Ok(SegmentationMask::new(w, h, data))
}
