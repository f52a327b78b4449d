//! Distance-binned depth error, top-down IoU, the boundary perturbation
//! study and the ground-truth depth histogram.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::{check_len, CameraModel, Layout};
use crate::polygon::iou_2d;
use crate::projection::{boundary_ranges, floor_boundary_to_polygon};

pub const NUM_BINS: usize = 10;

/// Raster pitch in meters used for IoU unless overridden.
pub const DEFAULT_IOU_CELL: f64 = 0.01;

/// 1-based bin for a ground-truth range: `ceil(rho)` clamped to `[1, bins]`.
pub fn depth_bin(rho: f64, bins: usize) -> usize {
    (rho.ceil().max(1.0) as usize).min(bins)
}

/// Per-bin error sums and column counts; bin `k` lives at index `k - 1`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BinnedErrors {
    pub sums: [f64; NUM_BINS],
    pub counts: [u64; NUM_BINS],
}

impl BinnedErrors {
    pub fn add(&mut self, rho_gt: f64, error: f64) {
        let b = depth_bin(rho_gt, NUM_BINS) - 1;
        self.sums[b] += error;
        self.counts[b] += 1;
    }

    pub fn merge(&mut self, other: &BinnedErrors) {
        for b in 0..NUM_BINS {
            self.sums[b] += other.sums[b];
            self.counts[b] += other.counts[b];
        }
    }

    /// Mean error per bin; empty bins report 0 and are told apart by `counts`.
    pub fn means(&self) -> [f64; NUM_BINS] {
        std::array::from_fn(|b| {
            if self.counts[b] == 0 {
                0.0
            } else {
                self.sums[b] / self.counts[b] as f64
            }
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Accumulates `|Proj(pred) - Proj(gt)|` per column into the bin of `Proj(gt)`.
pub fn depth_error_binned(model: &CameraModel, pred_rows: &[f64], gt_rows: &[f64]) -> Result<BinnedErrors> {
    check_len("pred_rows", model.width(), pred_rows.len())?;
    check_len("gt_rows", model.width(), gt_rows.len())?;
    let pred = boundary_ranges(model, pred_rows)?;
    let gt = boundary_ranges(model, gt_rows)?;
    let mut out = BinnedErrors::default();
    for (p, g) in pred.iter().zip(&gt) {
        out.add(*g, (p - g).abs());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PanoramaResult {
    pub name: String,
    pub iou2d: f64,
    pub bin_errors: [f64; NUM_BINS],
    pub bin_counts: [u64; NUM_BINS],
    #[serde(skip)]
    sums: [f64; NUM_BINS],
}

impl PanoramaResult {
    pub fn new(name: impl Into<String>, iou2d: f64, bins: BinnedErrors) -> Self {
        Self {
            name: name.into(),
            iou2d,
            bin_errors: bins.means(),
            bin_counts: bins.counts,
            sums: bins.sums,
        }
    }
}

pub fn evaluate_panorama(
    name: &str,
    model: &CameraModel,
    pred_rows: &[f64],
    gt_rows: &[f64],
    cell: f64,
) -> Result<PanoramaResult> {
    let bins = depth_error_binned(model, pred_rows, gt_rows)?;
    let pred = floor_boundary_to_polygon(model, pred_rows)?;
    let gt = floor_boundary_to_polygon(model, gt_rows)?;
    let iou = iou_2d(&pred, &gt, cell)?;
    Ok(PanoramaResult::new(name, iou, bins))
}

/// Column errors pooled across panoramas; IoU averaged per panorama.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub bin_errors: [f64; NUM_BINS],
    pub bin_counts: [u64; NUM_BINS],
    pub iou2d: f64,
    pub per_panorama: Vec<PanoramaResult>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned table with columns for bins 1..10 and 2D IoU (percent); empty bins show `-`.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:<12}", "");
        for b in 1..=NUM_BINS {
            let _ = write!(s, "{b:>8}");
        }
        let _ = writeln!(s, "{:>9}", "2D IoU");
        let _ = write!(s, "{:<12}", "error (m)");
        for b in 0..NUM_BINS {
            if self.bin_counts[b] == 0 {
                let _ = write!(s, "{:>8}", "-");
            } else {
                let _ = write!(s, "{:>8.3}", self.bin_errors[b]);
            }
        }
        let _ = writeln!(s, "{:>8.2}%", 100.0 * self.iou2d);
        let _ = write!(s, "{:<12}", "columns");
        for c in &self.bin_counts {
            let _ = write!(s, "{c:>8}");
        }
        let _ = writeln!(s, "{:>9}", self.per_panorama.len());
        s
    }
}

/// Order-independent collector of per-panorama results.
#[derive(Debug, Clone, Default)]
pub struct EvalAccumulator {
    results: Vec<PanoramaResult>,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: PanoramaResult) {
        self.results.push(r);
    }

    pub fn merge(mut self, other: EvalAccumulator) -> Self {
        self.results.extend(other.results);
        self
    }

    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    /// Sums in name order so the report does not depend on arrival order.
    pub fn finish(mut self) -> Result<EvalReport> {
        if self.results.is_empty() {
            return Err(Error::Domain("no panoramas were evaluated".into()));
        }
        self.results.sort_by(|a, b| {
            a.name
                .cmp(&b.name)
                .then(a.iou2d.total_cmp(&b.iou2d))
        });
        let mut bins = BinnedErrors::default();
        let mut iou = 0.0;
        for r in &self.results {
            bins.merge(&BinnedErrors {
                sums: r.sums,
                counts: r.bin_counts,
            });
            iou += r.iou2d;
        }
        Ok(EvalReport {
            bin_errors: bins.means(),
            bin_counts: bins.counts,
            iou2d: iou / self.results.len() as f64,
            per_panorama: self.results,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationResult {
    pub area_gt: f64,
    pub area_perturbed: f64,
    /// `|area_perturbed - area_gt|` in square meters.
    pub area_error: f64,
    /// Shift as a fraction of the panorama height.
    pub relative_image_error: f64,
}

/// Shifts every floor row by `pixel_shift` (positive is downward, away from
/// the horizon, which pulls walls closer) and compares shoelace areas.
pub fn perturbation_study(model: &CameraModel, layout: &Layout, pixel_shift: f64) -> Result<PerturbationResult> {
    if !pixel_shift.is_finite() {
        return Err(Error::Domain(format!("pixel shift must be finite, got {pixel_shift}")));
    }
    let shifted: Vec<f64> = layout.floor_rows().iter().map(|r| r + pixel_shift).collect();
    let area_gt = floor_boundary_to_polygon(model, layout.floor_rows())?.area();
    let area_perturbed = floor_boundary_to_polygon(model, &shifted)?.area();
    Ok(PerturbationResult {
        area_gt,
        area_perturbed,
        area_error: (area_perturbed - area_gt).abs(),
        relative_image_error: pixel_shift.abs() / model.height() as f64,
    })
}

/// Counts of ground-truth floor ranges in 1 m bins; bin `k` covers `(k-1, k]`
/// and the last bin also takes everything farther.
pub fn depth_histogram<'a>(
    dataset: impl IntoIterator<Item = (&'a CameraModel, &'a Layout)>,
    bins: usize,
) -> Result<Vec<u64>> {
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    let mut counts = vec![0u64; bins];
    for (model, layout) in dataset {
        for rho in boundary_ranges(model, layout.floor_rows())? {
            counts[depth_bin(rho, bins) - 1] += 1;
        }
    }
    Ok(counts)
}

pub fn histogram_csv(counts: &[u64]) -> String {
    let total: u64 = counts.iter().sum();
    let mut s = String::from("bin,lower_m,upper_m,count,fraction\n");
    for (i, &c) in counts.iter().enumerate() {
        let upper = if i + 1 == counts.len() {
            "inf".to_string()
        } else {
            (i + 1).to_string()
        };
        let frac = if total == 0 { 0.0 } else { c as f64 / total as f64 };
        let _ = writeln!(s, "{},{},{},{},{:.6}", i + 1, i, upper, c, frac);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::rotate_layout;
    use crate::projection::floor_row_for_range;

    fn cam() -> CameraModel {
        CameraModel::new(64, 32, 1.6).unwrap()
    }

    fn ring(model: &CameraModel, rho: f64) -> Layout {
        let w = model.width();
        let f = floor_row_for_range(model, rho).unwrap();
        Layout::new(model, vec![f; w], vec![model.height() as f64 / 4.0; w], vec![]).unwrap()
    }

    #[test]
    fn bins_use_ceil_and_clamp() {
        assert_eq!(depth_bin(0.2, 10), 1);
        assert_eq!(depth_bin(1.0, 10), 1);
        assert_eq!(depth_bin(1.0001, 10), 2);
        assert_eq!(depth_bin(3.2, 10), 4);
        assert_eq!(depth_bin(12.0, 10), 10);
    }

    #[test]
    fn identical_prediction_has_zero_error_and_full_iou() {
        let m = cam();
        let gt = crate::augment::tests::rect_layout(&m, 3.0, 2.0);
        let r = evaluate_panorama("a", &m, gt.floor_rows(), gt.floor_rows(), DEFAULT_IOU_CELL).unwrap();
        assert!(r.bin_errors.iter().all(|&e| e == 0.0));
        assert_eq!(r.iou2d, 1.0);
        assert_eq!(r.bin_counts.iter().sum::<u64>(), 64);
    }

    #[test]
    fn single_column_error_lands_in_bin_four() {
        let m = cam();
        let mut b = BinnedErrors::default();
        let gt = floor_row_for_range(&m, 3.2).unwrap();
        let pred = floor_row_for_range(&m, 3.5).unwrap();
        let gt_p = crate::projection::proj_floor_depth(&m, gt).unwrap();
        let pred_p = crate::projection::proj_floor_depth(&m, pred).unwrap();
        b.add(gt_p, (pred_p - gt_p).abs());
        let means = b.means();
        assert!((means[3] - 0.3).abs() < 1e-9);
        for (i, c) in b.counts.iter().enumerate() {
            assert_eq!(*c, u64::from(i == 3));
        }
    }

    #[test]
    fn far_columns_accumulate_in_last_bin() {
        let m = cam();
        let l = ring(&m, 12.0);
        let b = depth_error_binned(&m, l.floor_rows(), l.floor_rows()).unwrap();
        assert_eq!(b.counts[9], 64);
        assert_eq!(b.total(), 64);
    }

    #[test]
    fn binned_report_is_rotation_invariant() {
        let m = cam();
        let gt = crate::augment::tests::rect_layout(&m, 4.0, 2.5);
        let pred = crate::augment::tests::rect_layout(&m, 4.3, 2.2);
        let a = depth_error_binned(&m, pred.floor_rows(), gt.floor_rows()).unwrap();
        for shift in [1, 7, 33] {
            let g = rotate_layout(&m, &gt, shift).unwrap();
            let p = rotate_layout(&m, &pred, shift).unwrap();
            let b = depth_error_binned(&m, p.floor_rows(), g.floor_rows()).unwrap();
            assert_eq!(a.counts, b.counts);
            for k in 0..NUM_BINS {
                assert!((a.means()[k] - b.means()[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn accumulator_is_order_independent() {
        let m = cam();
        let gt = crate::augment::tests::rect_layout(&m, 4.0, 2.5);
        let results: Vec<_> = (0..5)
            .map(|i| {
                let pred = crate::augment::tests::rect_layout(&m, 3.5 + 0.2 * i as f64, 2.5);
                evaluate_panorama(&format!("p{i}"), &m, pred.floor_rows(), gt.floor_rows(), 0.02).unwrap()
            })
            .collect();
        let mut fwd = EvalAccumulator::new();
        results.iter().cloned().for_each(|r| fwd.push(r));
        let mut a = EvalAccumulator::new();
        let mut b = EvalAccumulator::new();
        for (i, r) in results.iter().rev().enumerate() {
            if i % 2 == 0 { a.push(r.clone()) } else { b.push(r.clone()) }
        }
        let x = fwd.finish().unwrap();
        let y = b.merge(a).finish().unwrap();
        assert_eq!(x, y);
        assert_eq!(x.bin_counts.iter().sum::<u64>(), 5 * 64);
    }

    #[test]
    fn table_has_eleven_value_columns() {
        let m = cam();
        let gt = crate::augment::tests::rect_layout(&m, 3.0, 2.0);
        let mut acc = EvalAccumulator::new();
        acc.push(evaluate_panorama("x", &m, gt.floor_rows(), gt.floor_rows(), 0.01).unwrap());
        let table = acc.finish().unwrap().to_table();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines[0].split_whitespace().count(), 12);
        assert!(lines[0].ends_with("2D IoU"));
        assert_eq!(lines[1].split_whitespace().count(), 13);
        assert!(lines[1].ends_with("100.00%"));
    }

    #[test]
    fn empty_accumulator_is_an_error() {
        assert!(EvalAccumulator::new().finish().is_err());
    }

    #[test]
    fn zero_shift_keeps_area() {
        let m = CameraModel::with_height(512).unwrap();
        let l = crate::augment::tests::rect_layout(&m, 2.0, 2.0);
        let r = perturbation_study(&m, &l, 0.0).unwrap();
        assert_eq!(r.area_gt, r.area_perturbed);
        assert_eq!(r.relative_image_error, 0.0);
    }

    #[test]
    fn larger_room_suffers_larger_area_error() {
        let m = CameraModel::with_height(512).unwrap();
        let small = perturbation_study(&m, &crate::augment::tests::rect_layout(&m, 1.5, 1.5), 3.0).unwrap();
        let large = perturbation_study(&m, &crate::augment::tests::rect_layout(&m, 4.0, 4.0), 3.0).unwrap();
        assert!(large.area_error > small.area_error);
        assert!(small.area_perturbed < small.area_gt);
        assert!((small.relative_image_error - 3.0 / 512.0).abs() < 1e-15);
        assert_eq!(format!("{:.3}%", 100.0 * small.relative_image_error), "0.586%");
    }

    #[test]
    fn shift_onto_horizon_is_rejected() {
        let m = cam();
        let l = ring(&m, 10.0);
        let to_horizon = m.horizon_row() - l.floor_rows()[0];
        assert!(perturbation_study(&m, &l, to_horizon).is_err());
    }

    #[test]
    fn histogram_examples() {
        let m = cam();
        let l = ring(&m, 2.5);
        let h = depth_histogram([(&m, &l)], 10).unwrap();
        assert_eq!(h[2], 64);
        assert_eq!(h.iter().sum::<u64>(), 64);
        let empty: Vec<(&CameraModel, &Layout)> = vec![];
        assert_eq!(depth_histogram(empty, 10).unwrap(), vec![0; 10]);
    }

    #[test]
    fn mostly_near_dataset_has_ninety_percent_under_four_meters() {
        let m = cam();
        let layouts: Vec<Layout> = (0..10)
            .map(|i| ring(&m, if i < 9 { 1.5 + 0.25 * i as f64 } else { 7.5 }))
            .collect();
        let h = depth_histogram(layouts.iter().map(|l| (&m, l)), 10).unwrap();
        let total: u64 = h.iter().sum();
        let near: u64 = h[..4].iter().sum();
        assert!(near as f64 / total as f64 >= 0.9);
        let csv = histogram_csv(&h);
        assert_eq!(csv.lines().count(), 11);
        assert!(csv.lines().last().unwrap().starts_with("10,9,inf,"));
    }
}
