//! Layout and panorama augmentation: pano-stretch, left-right flip,
//! horizontal rotation and luminance.
//!
//! Pano-stretch scales the floor plane by `k_x` along x and `k_z` along z
//! while keeping heights, then re-projects. For a boundary this lifts each
//! column's floor point to the top-down plane, scales it, and resamples the
//! result back onto the uniform column grid by piecewise-linear
//! interpolation in azimuth (periodic). For a raster every output ray is
//! mapped back through the inverse scaling and the source is sampled.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layout::{CameraModel, Corner, Layout};
use crate::projection::{
    ceiling_offset, ceiling_row_for_range, floor_row_for_range, proj_floor_depth, spherical_to_pixel,
    SphericalCoord,
};

/// Which stage the stretch factors are drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StretchMode {
    /// Shrink or enlarge: factors in [1/max, max].
    Initial,
    /// Only enlarge, pushing walls farther away: factors in [1, max].
    Refine,
}

/// Largest stretch factor drawn by default in either mode.
pub const DEFAULT_MAX_STRETCH: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StretchParams {
    pub kx: f64,
    pub kz: f64,
}

impl StretchParams {
    pub fn new(kx: f64, kz: f64) -> Result<Self> {
        if !(kx.is_finite() && kz.is_finite() && kx > 0.0 && kz > 0.0) {
            return Err(Error::Invariant(format!("stretch factors must be positive, got ({kx}, {kz})")));
        }
        Ok(Self { kx, kz })
    }

    /// Validates the factors against a mode's range.
    pub fn for_mode(mode: StretchMode, max: f64, kx: f64, kz: f64) -> Result<Self> {
        let lo = match mode {
            StretchMode::Initial => 1.0 / max,
            StretchMode::Refine => 1.0,
        };
        for k in [kx, kz] {
            if !(k >= lo && k <= max) {
                return Err(Error::Invariant(format!(
                    "stretch factor {k} outside [{lo}, {max}] for {mode:?} mode"
                )));
            }
        }
        Self::new(kx, kz)
    }

    pub fn identity() -> Self {
        Self { kx: 1.0, kz: 1.0 }
    }
}

/// Seeded source of stretch factors.
///
/// Refine mode draws each factor uniformly from [1, max]. Initial mode
/// draws a magnitude uniformly from [1, max] and inverts it with
/// probability 1/2, covering [1/max, max].
#[derive(Debug, Clone)]
pub struct StretchSampler {
    mode: StretchMode,
    max: f64,
    rng: ChaCha8Rng,
}

impl StretchSampler {
    pub fn new(mode: StretchMode, max: f64, seed: u64) -> Result<Self> {
        if !(max.is_finite() && max >= 1.0) {
            return Err(Error::Invariant(format!("maximum stretch {max} must be at least 1")));
        }
        Ok(Self {
            mode,
            max,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    fn factor(&mut self) -> f64 {
        let k = self.rng.random_range(1.0..=self.max);
        match self.mode {
            StretchMode::Refine => k,
            StretchMode::Initial => {
                if self.rng.random_bool(0.5) {
                    1.0 / k
                } else {
                    k
                }
            }
        }
    }

    pub fn sample(&mut self) -> StretchParams {
        let kx = self.factor();
        let kz = self.factor();
        StretchParams { kx, kz }
    }
}

/// Stretches a layout's floor plane by (k_x, k_z) and resamples it onto the column grid.
pub fn stretch_layout(model: &CameraModel, layout: &Layout, p: StretchParams) -> Result<Layout> {
    let w = model.width();
    let mut u_new = Vec::with_capacity(w);
    let mut floor_new = Vec::with_capacity(w);
    let mut ceil_new = Vec::with_capacity(w);
    for i in 0..w {
        let u = model.column_azimuth(i as f64);
        let rho = proj_floor_depth(model, layout.floor_rows()[i])?;
        let above = ceiling_offset(model, layout.ceiling_rows()[i], rho)?;
        let (x, z) = (p.kx * rho * u.cos(), p.kz * rho * u.sin());
        let rho2 = x.hypot(z);
        if !(rho2.is_finite() && rho2 > 0.0) {
            return Err(Error::Domain(format!("stretched boundary degenerates at column {i}")));
        }
        // atan2 of a positively scaled direction is monotone in u; unwrap it
        // so the sequence stays increasing across the seam.
        let mut u2 = z.atan2(x);
        while u2 < u - PI {
            u2 += 2.0 * PI;
        }
        while u2 > u + PI {
            u2 -= 2.0 * PI;
        }
        u_new.push(u2);
        floor_new.push(floor_row_for_range(model, rho2)?);
        ceil_new.push(ceiling_row_for_range(model, rho2, above)?);
    }
    let floor = resample_periodic(model, &u_new, &floor_new)?;
    let ceiling = resample_periodic(model, &u_new, &ceil_new)?;

    let mut corners: Vec<Corner> = Vec::new();
    for c in layout.corners() {
        let col = nearest_column(model, u_new[c.col]);
        match corners.iter_mut().find(|e| e.col == col) {
            Some(existing) => existing.strength = existing.strength.max(c.strength),
            None => corners.push(Corner { col, strength: c.strength }),
        }
    }
    Layout::new(model, floor, ceiling, corners)
}

fn nearest_column(model: &CameraModel, u: f64) -> usize {
    let w = model.width();
    let (col, _) = spherical_to_pixel(model, SphericalCoord { u, v: 0.0 });
    (col.round() as usize) % w
}

/// Linear interpolation of samples `(xs[i], ys[i])`, increasing in `xs`,
/// onto the uniform column azimuths with 2*pi periodicity.
fn resample_periodic(model: &CameraModel, xs: &[f64], ys: &[f64]) -> Result<Vec<f64>> {
    let n = xs.len();
    if xs.windows(2).any(|p| !(p[1] > p[0])) || xs[n - 1] - xs[0] >= 2.0 * PI {
        return Err(Error::Domain("stretched azimuths are not strictly increasing".into()));
    }
    // One extra period on each side makes every target bracketed.
    let ext_x: Vec<f64> = std::iter::once(xs[n - 1] - 2.0 * PI)
        .chain(xs.iter().copied())
        .chain(std::iter::once(xs[0] + 2.0 * PI))
        .collect();
    let ext_y: Vec<f64> = std::iter::once(ys[n - 1])
        .chain(ys.iter().copied())
        .chain(std::iter::once(ys[0]))
        .collect();
    Ok((0..model.width())
        .map(|j| {
            let u = model.column_azimuth(j as f64);
            let k = ext_x.partition_point(|&x| x <= u).clamp(1, ext_x.len() - 1);
            let (x0, x1) = (ext_x[k - 1], ext_x[k]);
            let t = (u - x0) / (x1 - x0);
            ext_y[k - 1] + t * (ext_y[k] - ext_y[k - 1])
        })
        .collect())
}

/// Mirrors the panorama left-right.
pub fn flip_layout(model: &CameraModel, layout: &Layout) -> Result<Layout> {
    let w = model.width();
    let mut floor = layout.floor_rows().to_vec();
    let mut ceiling = layout.ceiling_rows().to_vec();
    floor.reverse();
    ceiling.reverse();
    let corners = layout
        .corners()
        .iter()
        .rev()
        .map(|c| Corner { col: w - 1 - c.col, strength: c.strength })
        .collect();
    Layout::new(model, floor, ceiling, corners)
}

/// Circularly shifts columns to the right by `columns` (negative shifts left).
pub fn rotate_layout(model: &CameraModel, layout: &Layout, columns: i64) -> Result<Layout> {
    let w = model.width();
    let shift = columns.rem_euclid(w as i64) as usize;
    let mut floor = layout.floor_rows().to_vec();
    let mut ceiling = layout.ceiling_rows().to_vec();
    floor.rotate_right(shift);
    ceiling.rotate_right(shift);
    let corners = layout
        .corners()
        .iter()
        .map(|c| Corner { col: (c.col + shift) % w, strength: c.strength })
        .collect();
    Layout::new(model, floor, ceiling, corners)
}

/// RGB equirectangular raster with channel values normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl Panorama {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width != 2 * height || height == 0 {
            return Err(Error::Invariant(format!(
                "panorama must have a 2:1 aspect, got {width}x{height}"
            )));
        }
        if data.len() != width * height * CHANNELS {
            return Err(Error::Length {
                context: "panorama pixels",
                expected: width * height * CHANNELS,
                actual: data.len(),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(height: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> Result<Self> {
        let width = 2 * height;
        let mut data = Vec::with_capacity(width * height * CHANNELS);
        for row in 0..height {
            for col in 0..width {
                data.extend_from_slice(&f(col, row));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, col: usize, row: usize) -> [f32; 3] {
        let i = (row * self.width + col) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img.into_raw().into_iter().map(|v| f32::from(v) / 255.0).collect();
        Self::new(w, h, data)
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect()
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        image::save_buffer(
            path,
            &self.to_rgb8(),
            self.width as u32,
            self.height as u32,
            image::ColorType::Rgb8,
        )?;
        Ok(())
    }

    fn map_pixels(&self, f: impl Fn(usize, usize) -> [f32; 3]) -> Self {
        Self::from_fn(self.height, f).expect("same 2:1 dimensions")
    }

    /// Bilinear sample at sub-pixel (col, row): wraps horizontally, clamps vertically.
    pub fn sample_bilinear(&self, col: f64, row: f64) -> [f32; 3] {
        let w = self.width as f64;
        let row = row.clamp(0.0, (self.height - 1) as f64);
        let c0 = col.floor();
        let r0 = row.floor();
        let (tc, tr) = ((col - c0) as f32, (row - r0) as f32);
        let ca = c0.rem_euclid(w) as usize;
        let cb = (ca + 1) % self.width;
        let ra = r0 as usize;
        let rb = (ra + 1).min(self.height - 1);
        let (p00, p01, p10, p11) = (self.pixel(ca, ra), self.pixel(cb, ra), self.pixel(ca, rb), self.pixel(cb, rb));
        std::array::from_fn(|k| {
            let top = p00[k] + tc * (p01[k] - p00[k]);
            let bottom = p10[k] + tc * (p11[k] - p10[k]);
            top + tr * (bottom - top)
        })
    }

    pub fn sample_nearest(&self, col: f64, row: f64) -> [f32; 3] {
        let c = (col.round().rem_euclid(self.width as f64) as usize) % self.width;
        let r = row.round().clamp(0.0, (self.height - 1) as f64) as usize;
        self.pixel(c, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sampling {
    Nearest,
    Bilinear,
}

/// Pano-stretch of a raster by inverse mapping each output ray.
pub fn stretch_image(image: &Panorama, p: StretchParams, sampling: Sampling) -> Panorama {
    // The camera height only scales rays uniformly and cancels out here.
    let model = CameraModel::new(image.width, image.height, 1.0).expect("2:1 panorama");
    image.map_pixels(|col, row| {
        let u = model.column_azimuth(col as f64);
        let v = model.row_latitude(row as f64);
        let (cv, sv) = (v.cos(), v.sin());
        let x = cv * u.cos() / p.kx;
        let z = cv * u.sin() / p.kz;
        let src = SphericalCoord {
            u: z.atan2(x),
            v: sv.atan2(x.hypot(z)),
        };
        let (sc, sr) = spherical_to_pixel(&model, src);
        match sampling {
            Sampling::Nearest => image.sample_nearest(sc, sr),
            Sampling::Bilinear => image.sample_bilinear(sc, sr),
        }
    })
}

pub fn flip_image(image: &Panorama) -> Panorama {
    image.map_pixels(|col, row| image.pixel(image.width - 1 - col, row))
}

/// Circular column shift to the right by `columns`.
pub fn rotate_image(image: &Panorama, columns: i64) -> Panorama {
    let w = image.width as i64;
    image.map_pixels(|col, row| image.pixel((col as i64 - columns).rem_euclid(w) as usize, row))
}

/// Gamma exponent for luminance changes, restricted to [0.5, 2].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gamma(f64);

impl Gamma {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(0.5..=2.0).contains(&gamma) {
            return Err(Error::Invariant(format!("gamma {gamma} outside [0.5, 2]")));
        }
        Ok(Self(gamma))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-channel `value^gamma` on normalized intensities.
pub fn luminance(image: &Panorama, gamma: Gamma) -> Panorama {
    let g = gamma.0 as f32;
    Panorama {
        width: image.width,
        height: image.height,
        data: image.data.iter().map(|v| v.clamp(0.0, 1.0).powf(g)).collect(),
    }
}
