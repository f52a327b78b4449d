//! Pixel, sphere and floor-plane conversions for equirectangular panoramas.
//!
//! Conventions: column `c` maps to azimuth `u = 2*pi*(c + 0.5)/W - pi`, row `r`
//! maps to latitude `v = pi*((r + 0.5)/H - 0.5)` with `v > 0` below the
//! horizon. A floor point seen at latitude `v` lies at horizontal range
//! `rho = h_cam / tan(v)` from the camera and at top-down position
//! `(rho*cos(u), rho*sin(u))`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::layout::{check_len, BoundaryPrediction, CameraModel};
use crate::polygon::TopDownPolygon;

/// Direction on the unit sphere: azimuth `u` in [-pi, pi), latitude `v` in (-pi/2, pi/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub u: f64,
    pub v: f64,
}

/// A floor-plane point: top-down coordinates, horizontal range and radial distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopDownPoint {
    pub x: f64,
    pub z: f64,
    pub rho: f64,
    pub d: f64,
}

impl TopDownPoint {
    /// Point on the floor plane `camera_height` below the camera, along direction `(u, v)`.
    pub fn from_floor_ray(camera_height: f64, dir: SphericalCoord) -> Result<Self> {
        let rho = range_at_latitude(camera_height, dir.v)?;
        Ok(Self {
            x: rho * dir.u.cos(),
            z: rho * dir.u.sin(),
            rho,
            d: rho / dir.v.cos(),
        })
    }
}

/// Wraps an angle into [-pi, pi).
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

pub fn pixel_to_spherical(model: &CameraModel, col: f64, row: f64) -> Result<SphericalCoord> {
    let (w, h) = (model.width(), model.height());
    if !(col >= 0.0 && col < w as f64 && row >= 0.0 && row < h as f64) {
        return Err(Error::PixelOutOfRange {
            col,
            row,
            width: w,
            height: h,
        });
    }
    Ok(SphericalCoord {
        u: wrap_angle(model.column_azimuth(col)),
        v: model.row_latitude(row),
    })
}

/// Inverse of [`pixel_to_spherical`]; the column is wrapped into [0, W).
pub fn spherical_to_pixel(model: &CameraModel, s: SphericalCoord) -> (f64, f64) {
    let w = model.width() as f64;
    let col = ((s.u + PI) * w / (2.0 * PI) - 0.5).rem_euclid(w);
    (col, model.latitude_row(s.v))
}

fn range_at_latitude(camera_height: f64, v: f64) -> Result<f64> {
    if !(v > 0.0 && v < FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "latitude {v} rad does not intersect the floor plane"
        )));
    }
    Ok(camera_height / v.tan())
}

/// Horizontal range in meters of the floor point imaged at `row`.
pub fn proj_floor_depth(model: &CameraModel, row: f64) -> Result<f64> {
    let v = model.row_latitude(row);
    if !(row.is_finite() && v > 0.0 && v < FRAC_PI_2) {
        return Err(Error::AboveHorizon { row, v });
    }
    Ok(model.camera_height() / v.tan())
}

/// Sub-pixel floor row whose projection is at horizontal range `rho`.
pub fn floor_row_for_range(model: &CameraModel, rho: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Domain(format!("range {rho} must be positive")));
    }
    Ok(model.latitude_row((model.camera_height() / rho).atan()))
}

/// Sub-pixel ceiling row for a wall at range `rho` whose top is `above_camera` meters over the camera.
pub fn ceiling_row_for_range(model: &CameraModel, rho: f64, above_camera: f64) -> Result<f64> {
    if !(rho.is_finite() && rho > 0.0 && above_camera > 0.0) {
        return Err(Error::Domain(format!(
            "range {rho} and ceiling offset {above_camera} must be positive"
        )));
    }
    Ok(model.latitude_row(-(above_camera / rho).atan()))
}

/// Height of the ceiling above the camera implied by a ceiling row and the wall range.
pub fn ceiling_offset(model: &CameraModel, ceiling_row: f64, rho: f64) -> Result<f64> {
    let v = model.row_latitude(ceiling_row);
    if !(v < 0.0 && v > -FRAC_PI_2) {
        return Err(Error::Domain(format!(
            "ceiling row {ceiling_row} is not above the horizon"
        )));
    }
    Ok(rho * (-v).tan())
}

/// Top-down floor point for a boundary sample at (col, row).
pub fn floor_point(model: &CameraModel, col: f64, row: f64) -> Result<TopDownPoint> {
    let dir = pixel_to_spherical(model, col, row)?;
    if dir.v <= 0.0 {
        return Err(Error::AboveHorizon { row, v: dir.v });
    }
    TopDownPoint::from_floor_ray(model.camera_height(), dir)
}

/// Projects a per-column floor boundary into a closed top-down polygon, one vertex per column.
pub fn floor_boundary_to_polygon(model: &CameraModel, floor_rows: &[f64]) -> Result<TopDownPolygon> {
    check_len("floor_rows", model.width(), floor_rows.len())?;
    let vertices = floor_rows
        .iter()
        .enumerate()
        .map(|(i, &row)| {
            let p = floor_point(model, i as f64, row).map_err(|e| column_error(i, e))?;
            Ok([p.x, p.z])
        })
        .collect::<Result<Vec<_>>>()?;
    TopDownPolygon::new(vertices)
}

/// Horizontal ranges of every column of a floor boundary.
pub fn boundary_ranges(model: &CameraModel, floor_rows: &[f64]) -> Result<Vec<f64>> {
    floor_rows
        .iter()
        .enumerate()
        .map(|(i, &row)| proj_floor_depth(model, row).map_err(|e| column_error(i, e)))
        .collect()
}

/// Depth-space uncertainty `|Proj(mu + sigma) - Proj(mu)|` per column.
pub fn uncertainty_score(model: &CameraModel, pred: &BoundaryPrediction) -> Result<Vec<f64>> {
    uncertainty_from_rows(model, pred.mu(), pred.sigma())
}

/// Same as [`uncertainty_score`] on raw slices; accepts `sigma >= 0`.
pub fn uncertainty_from_rows(model: &CameraModel, mu: &[f64], sigma: &[f64]) -> Result<Vec<f64>> {
    check_len("sigma", mu.len(), sigma.len())?;
    mu.iter()
        .zip(sigma)
        .enumerate()
        .map(|(i, (&m, &s))| {
            if !(s >= 0.0) {
                return Err(Error::Column {
                    column: i,
                    what: format!("sigma {s} must be non-negative"),
                });
            }
            let centre = proj_floor_depth(model, m).map_err(|e| column_error(i, e))?;
            let upper = proj_floor_depth(model, m + s).map_err(|e| column_error(i, e))?;
            Ok((upper - centre).abs())
        })
        .collect()
}

pub(crate) fn column_error(column: usize, e: Error) -> Error {
    match e {
        Error::Column { .. } => e,
        other => Error::Column {
            column,
            what: other.to_string(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> CameraModel {
        CameraModel::new(1024, 512, 1.6).unwrap()
    }

    #[test]
    fn centre_pixel_is_forward_horizon() {
        let m = cam();
        let s = pixel_to_spherical(&m, 511.5, 255.5).unwrap();
        assert!(s.u.abs() < 1e-12 && s.v.abs() < 1e-12);
    }

    #[test]
    fn three_quarter_row_is_forty_five_degrees() {
        let m = cam();
        let s = pixel_to_spherical(&m, 0.0, 3.0 * 512.0 / 4.0 - 0.5).unwrap();
        assert!((s.v - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn negative_column_is_out_of_range() {
        assert!(pixel_to_spherical(&cam(), -1.0, 300.0).is_err());
        assert!(pixel_to_spherical(&cam(), 3.0, 512.0).is_err());
    }

    #[test]
    fn depth_at_forty_five_degrees_equals_camera_height() {
        let rho = proj_floor_depth(&cam(), 3.0 * 512.0 / 4.0 - 0.5).unwrap();
        assert!((rho - 1.6).abs() < 1e-12);
    }

    #[test]
    fn horizon_row_is_a_domain_error() {
        assert!(matches!(
            proj_floor_depth(&cam(), 255.5),
            Err(Error::AboveHorizon { .. })
        ));
        assert!(proj_floor_depth(&cam(), 100.0).is_err());
    }

    #[test]
    fn ten_meter_range_roundtrips() {
        let m = cam();
        let v = (1.6f64 / 10.0).atan();
        let row = m.latitude_row(v);
        assert!((proj_floor_depth(&m, row).unwrap() - 10.0).abs() < 1e-9);
        assert!((floor_row_for_range(&m, 10.0).unwrap() - row).abs() < 1e-9);
    }

    #[test]
    fn four_column_unit_ring_has_area_two() {
        // W=4 puts the vertices at -3pi/4, -pi/4, pi/4, 3pi/4: a square inscribed in the unit circle.
        let m = CameraModel::new(4, 2, 1.6).unwrap();
        let row = floor_row_for_range(&m, 1.0).unwrap();
        let poly = floor_boundary_to_polygon(&m, &[row; 4]).unwrap();
        assert!((poly.area() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_range_gives_equidistant_vertices() {
        let m = cam();
        let row = floor_row_for_range(&m, 3.3).unwrap();
        let poly = floor_boundary_to_polygon(&m, &vec![row; 1024]).unwrap();
        for v in poly.vertices() {
            assert!(((v[0] * v[0] + v[1] * v[1]).sqrt() - 3.3).abs() < 1e-9);
        }
    }

    #[test]
    fn square_room_area_converges() {
        let m = cam();
        let a = 2.0;
        let rows: Vec<f64> = (0..1024)
            .map(|i| {
                let u = m.column_azimuth(i as f64);
                floor_row_for_range(&m, a / u.cos().abs().max(u.sin().abs())).unwrap()
            })
            .collect();
        let area = floor_boundary_to_polygon(&m, &rows).unwrap().area();
        assert!((area / (4.0 * a * a) - 1.0).abs() < 1e-3, "area {area}");
    }

    #[test]
    fn polygon_rejects_rows_above_horizon() {
        let m = CameraModel::new(4, 2, 1.6).unwrap();
        let err = floor_boundary_to_polygon(&m, &[1.2, 1.2, 0.2, 1.2]).unwrap_err();
        assert!(matches!(err, Error::Column { column: 2, .. }));
    }

    #[test]
    fn zero_sigma_gives_zero_uncertainty() {
        let m = cam();
        let mu = vec![300.0; 1024];
        let u = uncertainty_from_rows(&m, &mu, &vec![0.0; 1024]).unwrap();
        assert!(u.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn uncertainty_worked_example() {
        let m = cam();
        let mu = m.latitude_row(PI / 4.0);
        let sigma = m.latitude_row(PI / 3.0) - mu;
        let pred = BoundaryPrediction::new(vec![mu; 1024], vec![sigma; 1024]).unwrap();
        let u = uncertainty_score(&m, &pred).unwrap();
        let expected = (1.6 / (PI / 3.0).tan() - 1.6f64).abs();
        assert!((u[0] - expected).abs() < 1e-9);
        assert!((u[0] - 0.6763).abs() < 1e-4);
    }

    #[test]
    fn far_columns_amplify_the_same_pixel_sigma() {
        let m = cam();
        let near = floor_row_for_range(&m, 2.0).unwrap();
        let far = floor_row_for_range(&m, 8.0).unwrap();
        let u = uncertainty_from_rows(&m, &[near, far], &[2.0, 2.0]).unwrap();
        assert!(u[1] > u[0]);
    }

    #[test]
    fn ceiling_offset_inverts_ceiling_row() {
        let m = cam();
        let row = ceiling_row_for_range(&m, 4.0, 1.2).unwrap();
        assert!((ceiling_offset(&m, row, 4.0).unwrap() - 1.2).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn pixel_roundtrip(col in 0.0f64..1024.0, row in 0.0f64..512.0) {
            let m = cam();
            let s = pixel_to_spherical(&m, col, row).unwrap();
            prop_assert!(s.u >= -PI && s.u < PI);
            let (c, r) = spherical_to_pixel(&m, s);
            let dc = (c - col).abs().min(1024.0 - (c - col).abs());
            prop_assert!(dc < 1e-9 && (r - row).abs() < 1e-9);
        }

        #[test]
        fn range_strictly_decreases_with_row(row in 256.0f64..510.0, step in 1e-3f64..1.0) {
            let m = cam();
            prop_assert!(proj_floor_depth(&m, row + step).unwrap() < proj_floor_depth(&m, row).unwrap());
        }

        #[test]
        fn pixel_shift_error_grows_with_range(r1 in 1.0f64..20.0, r2 in 1.0f64..20.0, delta in 0.5f64..5.0) {
            prop_assume!((r1 - r2).abs() > 1e-3);
            let m = cam();
            let err = |rho: f64| {
                let row = floor_row_for_range(&m, rho).unwrap();
                (proj_floor_depth(&m, row + delta).unwrap() - rho).abs()
            };
            let (near, far) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(err(far) > err(near));
        }
    }
}
