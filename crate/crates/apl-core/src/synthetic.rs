//! Deterministic synthetic forest scenes: a low-frequency textured ground,
//! blob-textured background canopies, radial-arm ("frond") textured target
//! canopies, the exact target truth mask, and trunk point labels that are
//! deliberately offset from the canopy centers.
//!
//! Everything is a pure function of the seed, so end-to-end runs are
//! reproducible bit for bit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::labeling::{GroundPoint, PointLabelSet};
use crate::raster::{RasterImage, SegmentationMask};

pub const TARGET_CLASS: &str = "target";
pub const BACKGROUND_CLASS: &str = "background";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub image_id: String,
    pub image_size: u32,
    pub n_target: usize,
    pub n_background: usize,
    /// Inclusive canopy radius range in pixels.
    pub radius_min: f64,
    pub radius_max: f64,
    /// Maximum trunk point offset from the canopy center.
    pub trunk_offset_max: f64,
    /// Radial frond arms on target canopies.
    pub texture_arms: u32,
    /// Ground value-noise lattice spacing in pixels.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            image_id: "forest".into(),
            image_size: 1000,
            n_target: 25,
            n_background: 60,
            radius_min: 58.0,
            radius_max: 72.0,
            trunk_offset_max: 30.0,
            texture_arms: 7,
            noise_scale: 48.0,
            seed: 7,
        }
    }
}

const PLACEMENT_ATTEMPTS: u32 = 1000;

#[derive(Debug, Clone, Copy)]
struct Canopy {
    cx: f64,
    cy: f64,
    radius: f64,
    /// Per-canopy texture phase so canopies are not identical.
    phase: f64,
}

/// Smooth value noise: random lattice values, smoothstep-interpolated.
struct ValueNoise {
    cells: usize,
    scale: f64,
    lattice: Vec<f64>,
}

impl ValueNoise {
    fn new(extent: f64, scale: f64, rng: &mut ChaCha8Rng) -> ValueNoise {
        let cells = (extent / scale).ceil() as usize + 2;
        let lattice = (0..cells * cells).map(|_| rng.random::<f64>()).collect();
        ValueNoise {
            cells,
            scale,
            lattice,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        let gx = x / self.scale;
        let gy = y / self.scale;
        let ix = (gx.floor() as usize).min(self.cells - 2);
        let iy = (gy.floor() as usize).min(self.cells - 2);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let fx = smooth(gx - ix as f64);
        let fy = smooth(gy - iy as f64);
        let v = |i: usize, j: usize| self.lattice[j * self.cells + i];
        let top = v(ix, iy) * (1.0 - fx) + v(ix + 1, iy) * fx;
        let bottom = v(ix, iy + 1) * (1.0 - fx) + v(ix + 1, iy + 1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

fn clamp_channel(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn place_canopies(
    rng: &mut ChaCha8Rng,
    count: usize,
    radius_range: (f64, f64),
    image_size: u32,
    forbidden: &[Canopy],
) -> Result<Vec<Canopy>> {
    let size = image_size as f64;
    let mut placed = Vec::with_capacity(count);
    for _ in 0..count {
        let mut ok = None;
        for _ in 0..PLACEMENT_ATTEMPTS {
            let radius = rng.random_range(radius_range.0..=radius_range.1);
            let cx = rng.random_range(radius..size - radius);
            let cy = rng.random_range(radius..size - radius);
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            let clashes = forbidden.iter().any(|o| {
                let d2 = (o.cx - cx).powi(2) + (o.cy - cy).powi(2);
                d2 < (o.radius + radius).powi(2)
            });
            if !clashes {
                ok = Some(Canopy {
                    cx,
                    cy,
                    radius,
                    phase,
                });
                break;
            }
        }
        match ok {
            Some(c) => placed.push(c),
            None => {
                return Err(Error::TooCrowded {
                    attempts: PLACEMENT_ATTEMPTS,
                })
            }
        }
    }
    Ok(placed)
}

fn draw_background_canopy(img: &mut RasterImage, c: &Canopy, noise: &ValueNoise) {
    let (x0, x1, y0, y1) = canopy_bbox(c, img.width);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - c.cx;
            let dy = y as f64 - c.cy;
            let rho2 = dx * dx + dy * dy;
            if rho2 > c.radius * c.radius {
                continue;
            }
            let rho = rho2.sqrt() / c.radius;
            // lumpy blob: medium-frequency noise with a soft radial falloff
            let m = noise.at(x as f64 * 1.5 + c.phase * 100.0, y as f64 * 1.5);
            let fall = 1.0 - 0.55 * rho * rho;
            let r = 30.0 + 55.0 * m * fall;
            let g = 78.0 + 80.0 * m * fall;
            let b = 34.0 + 36.0 * m;
            img.set_pixel(x, y, [clamp_channel(r), clamp_channel(g), clamp_channel(b)]);
        }
    }
}

fn draw_target_canopy(img: &mut RasterImage, c: &Canopy, arms: u32, fronds: &ValueNoise) {
    let (x0, x1, y0, y1) = canopy_bbox(c, img.width);
    for y in y0..y1 {
        for x in x0..x1 {
            let dx = x as f64 - c.cx;
            let dy = y as f64 - c.cy;
            let rho2 = dx * dx + dy * dy;
            if rho2 > c.radius * c.radius {
                continue;
            }
            let rho = rho2.sqrt() / c.radius;
            let phi = dy.atan2(dx);
            // radial arms carry a fine spiky frond texture; every cell of a
            // target patch sees the same high-frequency statistics
            let ridge = 0.5 + 0.5 * (arms as f64 * phi + c.phase).cos();
            let fine = fronds.at(x as f64 * 16.0 + c.phase * 40.0, y as f64 * 16.0);
            let v = fine * (0.35 + 0.65 * ridge) * (1.0 - 0.5 * rho * rho) + 0.2 * (1.0 - rho);
            let r = 34.0 + 185.0 * v;
            let g = 82.0 + 172.0 * v;
            let b = 22.0 + 48.0 * v;
            img.set_pixel(x, y, [clamp_channel(r), clamp_channel(g), clamp_channel(b)]);
        }
    }
}

fn canopy_bbox(c: &Canopy, size: u32) -> (u32, u32, u32, u32) {
    let x0 = (c.cx - c.radius).floor().max(0.0) as u32;
    let x1 = ((c.cx + c.radius).ceil() as u32 + 1).min(size);
    let y0 = (c.cy - c.radius).floor().max(0.0) as u32;
    let y1 = ((c.cy + c.radius).ceil() as u32 + 1).min(size);
    (x0, x1, y0, y1)
}

fn trunk_point(
    rng: &mut ChaCha8Rng,
    c: &Canopy,
    class: &str,
    params: &ForestParams,
) -> GroundPoint {
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let dist = rng.random_range(0.0..=params.trunk_offset_max);
    let limit = params.image_size as f64 - 1.0;
    GroundPoint {
        image_id: params.image_id.clone(),
        x: (c.cx + dist * angle.cos()).clamp(0.0, limit),
        y: (c.cy + dist * angle.sin()).clamp(0.0, limit),
        class: class.to_string(),
    }
}

/// Generates the scene: color image, target truth mask, and trunk points.
pub fn generate_forest(
    params: &ForestParams,
) -> Result<(RasterImage, SegmentationMask, PointLabelSet)> {
    assert!(
        params.radius_min >= 4.0,
        "canopy radii must be at least 4 px"
    );
    assert!(params.radius_max >= params.radius_min);
    assert!(params.trunk_offset_max >= 0.0);
    assert!(
        params.image_size as f64 >= 2.0 * params.radius_max,
        "canopies must fit inside the image"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let size = params.image_size;

    let targets = place_canopies(
        &mut rng,
        params.n_target,
        (params.radius_min, params.radius_max),
        size,
        &[],
    )?;
    // background canopies are understory: roughly half the target size
    let backgrounds = place_canopies(
        &mut rng,
        params.n_background,
        (params.radius_min * 0.5, params.radius_max * 0.55),
        size,
        &targets,
    )?;

    // noise fields are sampled at scaled coordinates, so their lattices must
    // span the scaled extent
    let ground = ValueNoise::new(size as f64 * 12.0, params.noise_scale, &mut rng);
    let ground_low = ValueNoise::new(size as f64, params.noise_scale, &mut rng);
    let canopy_noise = ValueNoise::new(size as f64 * 16.0 + 700.0, params.noise_scale, &mut rng);
    // understory: fine grass streaks stretched along x over slow brightness
    // drift; the texture statistics are the same in every ground patch
    let mut img = RasterImage::from_fn(size, size, |x, y| {
        let n = ground.at(x as f64 * 4.0, y as f64 * 12.0);
        let low = ground_low.at(x as f64, y as f64);
        let v = 0.7 * n + 0.3 * low;
        [
            clamp_channel(22.0 + 40.0 * v),
            clamp_channel(52.0 + 54.0 * v),
            clamp_channel(26.0 + 30.0 * v),
        ]
    });

    for c in &backgrounds {
        draw_background_canopy(&mut img, c, &canopy_noise);
    }
    for c in &targets {
        draw_target_canopy(&mut img, c, params.texture_arms, &canopy_noise);
    }

    // truth mask: union of the target disks
    let mut truth = SegmentationMask::zeros(size, size);
    for c in &targets {
        let (x0, x1, y0, y1) = canopy_bbox(c, size);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 - c.cx;
                let dy = y as f64 - c.cy;
                if dx * dx + dy * dy <= c.radius * c.radius {
                    truth.set(x, y, 1);
                }
            }
        }
    }

    let mut points = Vec::with_capacity(params.n_target + params.n_background);
    for c in &targets {
        points.push(trunk_point(&mut rng, c, TARGET_CLASS, params));
    }
    for c in &backgrounds {
        points.push(trunk_point(&mut rng, c, BACKGROUND_CLASS, params));
    }

    Ok((img, truth, PointLabelSet { points }))
}
