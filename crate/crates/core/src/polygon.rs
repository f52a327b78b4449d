//! Top-down room polygons: shoelace area and rasterized IoU.

use crate::error::{Error, Result};

/// Closed loop of (x, z) floor-plane vertices in meters; the last vertex connects back to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct TopDownPolygon {
    vertices: Vec<[f64; 2]>,
}

impl TopDownPolygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::Invariant(format!(
                "polygon needs at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if vertices.iter().any(|v| !(v[0].is_finite() && v[1].is_finite())) {
            return Err(Error::Invariant("polygon vertices must be finite".into()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace signed area, positive for counter-clockwise loops.
    pub fn signed_area(&self) -> f64 {
        0.5 * self
            .edges()
            .map(|(a, b)| a[0] * b[1] - b[0] * a[1])
            .sum::<f64>()
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    /// Axis-aligned bounds as (min_x, min_z, max_x, max_z).
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        self.vertices.iter().fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |(x0, z0, x1, z1), v| (x0.min(v[0]), z0.min(v[1]), x1.max(v[0]), z1.max(v[1])),
        )
    }

    /// Even-odd fill area measured on a grid of pitch `cell`.
    pub fn raster_area(&self, cell: f64) -> Result<f64> {
        let grid = Grid::covering(&[self], cell)?;
        let cells: usize = (0..grid.rows)
            .map(|j| count(&grid.spans(self, j)))
            .sum();
        Ok(cells as f64 * cell * cell)
    }

    /// Shoelace area, falling back to the rasterized area when the two
    /// disagree by more than 1% (self-intersecting loops).
    pub fn robust_area(&self, cell: f64) -> Result<f64> {
        let shoelace = self.area();
        let raster = self.raster_area(cell)?;
        if (shoelace - raster).abs() > 0.01 * raster.max(shoelace) {
            Ok(raster)
        } else {
            Ok(shoelace)
        }
    }

    /// The polygon translated by (dx, dz).
    pub fn translated(&self, dx: f64, dz: f64) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| [v[0] + dx, v[1] + dz]).collect(),
        }
    }
}

/// Shared sampling grid; cell centers sit at `min + (k + 0.5) * cell`.
struct Grid {
    x0: f64,
    z0: f64,
    cell: f64,
    cols: usize,
    rows: usize,
}

impl Grid {
    fn covering(polys: &[&TopDownPolygon], cell: f64) -> Result<Self> {
        if !(cell.is_finite() && cell > 0.0) {
            return Err(Error::Domain(format!("raster cell {cell} must be positive")));
        }
        let (x0, z0, x1, z1) = polys.iter().map(|p| p.bounds()).fold(
            (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
            |a, b| (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
        );
        let cols = ((x1 - x0) / cell).ceil().max(1.0);
        let rows = ((z1 - z0) / cell).ceil().max(1.0);
        if cols * rows > 4.0e9 {
            return Err(Error::Domain(format!(
                "raster of {cols}x{rows} cells is too large; increase the cell size"
            )));
        }
        Ok(Self {
            x0,
            z0,
            cell,
            cols: cols as usize,
            rows: rows as usize,
        })
    }

    /// Half-open column index spans covered by the polygon on scanline `row`.
    fn spans(&self, poly: &TopDownPolygon, row: usize) -> Vec<(usize, usize)> {
        let z = self.z0 + (row as f64 + 0.5) * self.cell;
        let mut xs: Vec<f64> = poly
            .edges()
            .filter(|(a, b)| (a[1] > z) != (b[1] > z))
            .map(|(a, b)| a[0] + (z - a[1]) * (b[0] - a[0]) / (b[1] - a[1]))
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.chunks_exact(2)
            .filter_map(|pair| {
                let lo = self.first_center_at_or_after(pair[0]);
                let hi = self.first_center_at_or_after(pair[1]);
                (hi > lo).then_some((lo, hi))
            })
            .collect()
    }

    fn first_center_at_or_after(&self, x: f64) -> usize {
        let k = ((x - self.x0) / self.cell - 0.5).ceil();
        k.clamp(0.0, self.cols as f64) as usize
    }
}

fn count(spans: &[(usize, usize)]) -> usize {
    spans.iter().map(|(a, b)| b - a).sum()
}

fn overlap(a: &[(usize, usize)], b: &[(usize, usize)]) -> usize {
    let (mut i, mut j, mut total) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        let lo = a[i].0.max(b[j].0);
        let hi = a[i].1.min(b[j].1);
        if hi > lo {
            total += hi - lo;
        }
        if a[i].1 < b[j].1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    total
}

/// Intersection over union of two polygons rasterized with even-odd fill on
/// a shared grid of pitch `cell` covering both. A zero-area union yields 0.
pub fn iou_2d(a: &TopDownPolygon, b: &TopDownPolygon, cell: f64) -> Result<f64> {
    let grid = Grid::covering(&[a, b], cell)?;
    let (mut inter, mut area_a, mut area_b) = (0usize, 0usize, 0usize);
    for row in 0..grid.rows {
        let sa = grid.spans(a, row);
        let sb = grid.spans(b, row);
        area_a += count(&sa);
        area_b += count(&sb);
        inter += overlap(&sa, &sb);
    }
    let union = area_a + area_b - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x: f64, z: f64, side: f64) -> TopDownPolygon {
        TopDownPolygon::new(vec![[x, z], [x + side, z], [x + side, z + side], [x, z + side]]).unwrap()
    }

    #[test]
    fn shoelace_unit_square() {
        assert!((square(0.0, 0.0, 1.0).area() - 1.0).abs() < 1e-15);
        let cw = TopDownPolygon::new(vec![[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert!(cw.signed_area() < 0.0);
        assert_eq!(cw.area(), 1.0);
    }

    #[test]
    fn too_few_vertices() {
        assert!(TopDownPolygon::new(vec![[0.0, 0.0], [1.0, 0.0]]).is_err());
        assert!(TopDownPolygon::new(vec![[0.0, 0.0], [1.0, f64::NAN], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn identical_and_disjoint() {
        let a = square(0.0, 0.0, 1.0);
        assert_eq!(iou_2d(&a, &a, 0.01).unwrap(), 1.0);
        assert_eq!(iou_2d(&a, &square(3.0, 0.0, 1.0), 0.01).unwrap(), 0.0);
    }

    #[test]
    fn half_shift_gives_one_third() {
        let a = square(0.0, 0.0, 1.0);
        let iou = iou_2d(&a, &a.translated(0.5, 0.0), 0.005).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 1e-2, "iou {iou}");
    }

    #[test]
    fn zero_area_union_is_zero() {
        let flat = TopDownPolygon::new(vec![[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]).unwrap();
        assert_eq!(iou_2d(&flat, &flat, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn bowtie_uses_raster_area() {
        // Self-intersecting figure-eight: shoelace cancels to zero, even-odd fill covers two triangles.
        let bowtie = TopDownPolygon::new(vec![[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]]).unwrap();
        assert!(bowtie.area().abs() < 1e-12);
        let area = bowtie.robust_area(0.002).unwrap();
        assert!((area - 2.0).abs() < 0.01, "area {area}");
    }

    #[test]
    fn raster_area_converges_to_shoelace() {
        let tri = TopDownPolygon::new(vec![[0.0, 0.0], [3.0, 0.2], [1.0, 2.5]]).unwrap();
        let raster = tri.raster_area(0.002).unwrap();
        assert!((raster - tri.area()).abs() / tri.area() < 2e-3);
    }

    #[test]
    fn invalid_cell_is_an_error() {
        let a = square(0.0, 0.0, 1.0);
        assert!(iou_2d(&a, &a, 0.0).is_err());
    }
}
