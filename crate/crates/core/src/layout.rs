//! Layout domain types and the on-disk layout JSON format.
//!
//! A layout is the per-column 1D boundary representation of an
//! equirectangular panorama: one floor-wall row and one ceiling-wall row per
//! image column, plus sparse corner annotations with continuous strength.
//!
//! File schema (UTF-8, no NaN/Inf):
//!
//! ```json
//! {
//!   "camera": {"width": 1024, "height": 512, "camera_height_m": 1.6},
//!   "floor_rows": [...],
//!   "ceiling_rows": [...],
//!   "corners": [{"col": 12, "strength": 1.0}],
//!   "sigma_rows": [...],
//!   "depth_m": [...]
//! }
//! ```
//!
//! `sigma_rows` and `depth_m` are optional and only appear in prediction files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Camera height used when a file does not carry one.
pub const DEFAULT_CAMERA_HEIGHT: f64 = 1.6;

/// Equirectangular panorama geometry plus the camera height above the floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    width: usize,
    height: usize,
    camera_height: f64,
}

impl CameraModel {
    pub fn new(width: usize, height: usize, camera_height: f64) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::Camera(format!(
                "panorama must be at least 2x2, got {width}x{height}"
            )));
        }
        if width != 2 * height {
            return Err(Error::Camera(format!(
                "equirectangular panorama needs width = 2 x height, got {width}x{height}"
            )));
        }
        if !(camera_height.is_finite() && camera_height > 0.0) {
            return Err(Error::Camera(format!(
                "camera height must be positive, got {camera_height}"
            )));
        }
        Ok(Self {
            width,
            height,
            camera_height,
        })
    }

    /// Panorama with `height` rows and the default camera height.
    pub fn with_height(height: usize) -> Result<Self> {
        Self::new(2 * height, height, DEFAULT_CAMERA_HEIGHT)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn camera_height(&self) -> f64 {
        self.camera_height
    }

    /// Latitude of a (sub-pixel) row, positive below the horizon.
    pub fn row_latitude(&self, row: f64) -> f64 {
        PI * ((row + 0.5) / self.height as f64 - 0.5)
    }

    /// Inverse of [`CameraModel::row_latitude`].
    pub fn latitude_row(&self, v: f64) -> f64 {
        (v / PI + 0.5) * self.height as f64 - 0.5
    }

    /// Unwrapped azimuth of a (sub-pixel) column.
    pub fn column_azimuth(&self, col: f64) -> f64 {
        2.0 * PI * (col + 0.5) / self.width as f64 - PI
    }

    /// The sub-pixel row sitting exactly on the horizon.
    pub fn horizon_row(&self) -> f64 {
        self.height as f64 / 2.0 - 0.5
    }

    /// Floor rows must map to a latitude strictly inside (0, pi/2).
    pub(crate) fn is_floor_row(&self, row: f64) -> bool {
        let v = self.row_latitude(row);
        row.is_finite() && row >= 0.0 && v > 0.0 && v < PI / 2.0
    }

    /// Ceiling rows must map to a latitude strictly inside (-pi/2, 0).
    pub(crate) fn is_ceiling_row(&self, row: f64) -> bool {
        let v = self.row_latitude(row);
        row.is_finite() && row >= 0.0 && v < 0.0 && v > -PI / 2.0
    }
}

/// A wall-wall corner at an image column with continuous strength in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corner {
    pub col: usize,
    pub strength: f64,
}

/// Per-column ground-truth or predicted layout boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    floor_rows: Vec<f64>,
    ceiling_rows: Vec<f64>,
    corners: Vec<Corner>,
}

impl Layout {
    /// Validates the boundaries against `camera`.
    ///
    /// Corners are sorted by column. If a column appears more than once the
    /// last entry wins and a warning is logged.
    pub fn new(
        camera: &CameraModel,
        floor_rows: Vec<f64>,
        ceiling_rows: Vec<f64>,
        corners: Vec<Corner>,
    ) -> Result<Self> {
        check_len("floor_rows", camera.width(), floor_rows.len())?;
        check_len("ceiling_rows", camera.width(), ceiling_rows.len())?;
        for (column, &row) in floor_rows.iter().enumerate() {
            if !camera.is_floor_row(row) {
                return Err(Error::Column {
                    column,
                    what: format!("floor row {row} must lie strictly below the horizon and inside the image"),
                });
            }
        }
        for (column, &row) in ceiling_rows.iter().enumerate() {
            if !camera.is_ceiling_row(row) {
                return Err(Error::Column {
                    column,
                    what: format!("ceiling row {row} must lie strictly above the horizon and inside the image"),
                });
            }
        }
        let corners = normalize_corners(camera.width(), corners)?;
        Ok(Self {
            floor_rows,
            ceiling_rows,
            corners,
        })
    }

    pub fn width(&self) -> usize {
        self.floor_rows.len()
    }

    pub fn floor_rows(&self) -> &[f64] {
        &self.floor_rows
    }

    pub fn ceiling_rows(&self) -> &[f64] {
        &self.ceiling_rows
    }

    pub fn corners(&self) -> &[Corner] {
        &self.corners
    }

    /// Dense per-column corner strengths, zero where no corner is annotated.
    pub fn corner_strengths(&self) -> Vec<f64> {
        let mut dense = vec![0.0; self.width()];
        for c in &self.corners {
            dense[c.col] = c.strength;
        }
        dense
    }

    /// Same layout with replaced floor rows.
    pub fn with_floor_rows(&self, camera: &CameraModel, floor_rows: Vec<f64>) -> Result<Self> {
        Layout::new(camera, floor_rows, self.ceiling_rows.clone(), self.corners.clone())
    }
}

fn normalize_corners(width: usize, corners: Vec<Corner>) -> Result<Vec<Corner>> {
    let mut slots: Vec<Option<f64>> = vec![None; width];
    for c in corners {
        if c.col >= width {
            return Err(Error::Column {
                column: c.col,
                what: format!("corner column outside [0, {width})"),
            });
        }
        if !(0.0..=1.0).contains(&c.strength) {
            return Err(Error::Column {
                column: c.col,
                what: format!("corner strength {} outside [0, 1]", c.strength),
            });
        }
        if slots[c.col].is_some() {
            log::warn!("duplicate corner at column {}; keeping the last entry", c.col);
        }
        slots[c.col] = Some(c.strength);
    }
    Ok(slots
        .into_iter()
        .enumerate()
        .filter_map(|(col, s)| s.map(|strength| Corner { col, strength }))
        .collect())
}

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Length {
            context,
            expected,
            actual,
        });
    }
    Ok(())
}

/// Initial-stage floor prediction: per-column mean row and standard deviation in pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPrediction {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl BoundaryPrediction {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        check_len("sigma", mu.len(), sigma.len())?;
        for (column, &s) in sigma.iter().enumerate() {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::Column {
                    column,
                    what: format!("sigma {s} must be positive"),
                });
            }
        }
        if let Some(column) = mu.iter().position(|m| !m.is_finite()) {
            return Err(Error::Column {
                column,
                what: "mu must be finite".into(),
            });
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn width(&self) -> usize {
        self.mu.len()
    }
}

/// Floor output of either stage.
#[derive(Debug, Clone, PartialEq)]
pub enum FloorOutput {
    Initial(BoundaryPrediction),
    Refined(Vec<f64>),
}

impl FloorOutput {
    pub fn rows(&self) -> &[f64] {
        match self {
            FloorOutput::Initial(p) => p.mu(),
            FloorOutput::Refined(r) => r,
        }
    }
}

/// Everything a stage predicts for one panorama.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutputs {
    pub floor: FloorOutput,
    pub ceiling_rows: Vec<f64>,
    pub wall_depth: Vec<f64>,
    pub corners: Vec<f64>,
}

impl StageOutputs {
    pub fn new(
        floor: FloorOutput,
        ceiling_rows: Vec<f64>,
        wall_depth: Vec<f64>,
        corners: Vec<f64>,
    ) -> Result<Self> {
        let w = floor.rows().len();
        check_len("ceiling_rows", w, ceiling_rows.len())?;
        check_len("wall_depth", w, wall_depth.len())?;
        check_len("corners", w, corners.len())?;
        if let Some(column) = wall_depth.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Column {
                column,
                what: format!("wall depth {} must be positive", wall_depth[column]),
            });
        }
        Ok(Self {
            floor,
            ceiling_rows,
            wall_depth,
            corners,
        })
    }
}

/// Contents of a layout JSON file, including the optional prediction extras.
#[derive(Debug, Clone, PartialEq)]
pub struct LayoutFile {
    pub camera: CameraModel,
    pub layout: Layout,
    pub sigma_rows: Option<Vec<f64>>,
    pub depth_m: Option<Vec<f64>>,
}

impl LayoutFile {
    pub fn new(camera: CameraModel, layout: Layout) -> Self {
        Self {
            camera,
            layout,
            sigma_rows: None,
            depth_m: None,
        }
    }

    /// The initial-stage prediction carried by this file; requires `sigma_rows`.
    pub fn boundary_prediction(&self) -> Result<BoundaryPrediction> {
        let sigma = self
            .sigma_rows
            .clone()
            .ok_or_else(|| Error::Invariant("prediction file has no sigma_rows".into()))?;
        BoundaryPrediction::new(self.layout.floor_rows().to_vec(), sigma)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCamera {
    width: usize,
    height: usize,
    camera_height_m: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorner {
    col: usize,
    strength: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayout {
    camera: RawCamera,
    floor_rows: Vec<f64>,
    ceiling_rows: Vec<f64>,
    corners: Vec<RawCorner>,
    sigma_rows: Option<Vec<f64>>,
    depth_m: Option<Vec<f64>>,
}

/// Parses layout JSON text.
pub fn parse_layout_json(text: &str, origin: &str) -> Result<LayoutFile> {
    let raw: RawLayout = serde_json::from_str(text).map_err(|source| Error::Json {
        path: origin.to_string(),
        source,
    })?;
    let camera = CameraModel::new(
        raw.camera.width,
        raw.camera.height,
        raw.camera.camera_height_m.unwrap_or(DEFAULT_CAMERA_HEIGHT),
    )?;
    let corners = raw
        .corners
        .into_iter()
        .map(|c| Corner {
            col: c.col,
            strength: c.strength,
        })
        .collect();
    let layout = Layout::new(&camera, raw.floor_rows, raw.ceiling_rows, corners)?;
    if let Some(sigma) = &raw.sigma_rows {
        BoundaryPrediction::new(layout.floor_rows().to_vec(), sigma.clone())?;
    }
    if let Some(depth) = &raw.depth_m {
        check_len("depth_m", camera.width(), depth.len())?;
        if let Some(column) = depth.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(Error::Column {
                column,
                what: "depth_m entries must be positive".into(),
            });
        }
    }
    Ok(LayoutFile {
        camera,
        layout,
        sigma_rows: raw.sigma_rows,
        depth_m: raw.depth_m,
    })
}

/// Reads and validates a layout file, keeping the optional prediction fields.
pub fn load_layout_file(path: &Path) -> Result<LayoutFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout_json(&text, &path.display().to_string())
}

pub fn load_layout(path: &Path) -> Result<(CameraModel, Layout)> {
    let file = load_layout_file(path)?;
    Ok((file.camera, file.layout))
}

/// Canonical JSON text: fixed key order and ten decimals for every real.
pub fn layout_json(file: &LayoutFile) -> String {
    let mut out = String::new();
    let cam = &file.camera;
    out.push_str("{\n");
    let _ = writeln!(
        out,
        "  \"camera\": {{\"width\": {}, \"height\": {}, \"camera_height_m\": {:.10}}},",
        cam.width(),
        cam.height(),
        cam.camera_height()
    );
    let _ = writeln!(out, "  \"floor_rows\": {},", number_list(file.layout.floor_rows()));
    let _ = writeln!(out, "  \"ceiling_rows\": {},", number_list(file.layout.ceiling_rows()));
    let corners: Vec<String> = file
        .layout
        .corners()
        .iter()
        .map(|c| format!("{{\"col\": {}, \"strength\": {:.10}}}", c.col, c.strength))
        .collect();
    out.push_str("  \"corners\": [");
    out.push_str(&corners.join(", "));
    out.push(']');
    if let Some(sigma) = &file.sigma_rows {
        let _ = write!(out, ",\n  \"sigma_rows\": {}", number_list(sigma));
    }
    if let Some(depth) = &file.depth_m {
        let _ = write!(out, ",\n  \"depth_m\": {}", number_list(depth));
    }
    out.push_str("\n}\n");
    out
}

fn number_list(values: &[f64]) -> String {
    let items: Vec<String> = values.iter().map(|v| format!("{v:.10}")).collect();
    format!("[{}]", items.join(", "))
}

pub fn save_layout_file(file: &LayoutFile, path: &Path) -> Result<()> {
    std::fs::write(path, layout_json(file)).map_err(|e| Error::io(path, e))
}

pub fn save_layout(camera: &CameraModel, layout: &Layout, path: &Path) -> Result<()> {
    save_layout_file(&LayoutFile::new(*camera, layout.clone()), path)
}
