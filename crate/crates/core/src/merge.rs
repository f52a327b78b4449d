//! Uncertainty-guided merging of the initial and refinement floor boundaries.
//!
//! A column takes the refinement row only when its depth-space uncertainty
//! exceeds the uncertainty threshold and its estimated wall distance
//! exceeds the distance gate. Both comparisons are strict; everything else
//! keeps the initial-stage mean.

use crate::error::{Error, Result};
use crate::layout::{check_len, BoundaryPrediction, CameraModel};
use crate::projection::{boundary_ranges, column_error, proj_floor_depth, uncertainty_score};

/// Where the per-column distance compared against the gate comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceSource {
    /// Projection of the initial stage's own mean boundary.
    #[default]
    InitialBoundary,
    /// The separately predicted wall depth.
    DepthHead,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeConfig {
    /// Meters of depth-space uncertainty above which a column is uncertain.
    pub uncertainty_threshold: f64,
    /// Meters beyond which a wall counts as distant.
    pub distance_gate: f64,
    pub distance_source: DistanceSource,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            uncertainty_threshold: 0.2,
            distance_gate: 5.0,
            distance_source: DistanceSource::InitialBoundary,
        }
    }
}

impl MergeConfig {
    pub fn new(uncertainty_threshold: f64, distance_gate: f64, distance_source: DistanceSource) -> Result<Self> {
        if !(uncertainty_threshold > 0.0 && distance_gate > 0.0)
            || !uncertainty_threshold.is_finite()
            || !distance_gate.is_finite()
        {
            return Err(Error::Invariant(format!(
                "merge thresholds must be positive, got {uncertainty_threshold} and {distance_gate}"
            )));
        }
        Ok(Self {
            uncertainty_threshold,
            distance_gate,
            distance_source,
        })
    }
}

/// Per-column decision: `true` where the refinement row is taken.
pub fn merge_selection(
    model: &CameraModel,
    initial: &BoundaryPrediction,
    refine_rows: &[f64],
    depth: Option<&[f64]>,
    cfg: &MergeConfig,
) -> Result<Vec<bool>> {
    let w = model.width();
    check_len("initial", w, initial.width())?;
    check_len("refine_rows", w, refine_rows.len())?;
    for (i, &r) in refine_rows.iter().enumerate() {
        proj_floor_depth(model, r).map_err(|e| column_error(i, e))?;
    }
    let uncertainty = uncertainty_score(model, initial)?;
    let distance = match cfg.distance_source {
        DistanceSource::InitialBoundary => boundary_ranges(model, initial.mu())?,
        DistanceSource::DepthHead => {
            let d = depth.ok_or_else(|| {
                Error::Invariant("depth-head distance source needs predicted wall depths".into())
            })?;
            check_len("depth", w, d.len())?;
            d.to_vec()
        }
    };
    Ok(uncertainty
        .iter()
        .zip(&distance)
        .map(|(&u, &d)| u > cfg.uncertainty_threshold && d > cfg.distance_gate)
        .collect())
}

/// Merged floor boundary using the distance source in `cfg`.
pub fn merge_with_depth(
    model: &CameraModel,
    initial: &BoundaryPrediction,
    refine_rows: &[f64],
    depth: Option<&[f64]>,
    cfg: &MergeConfig,
) -> Result<Vec<f64>> {
    let take = merge_selection(model, initial, refine_rows, depth, cfg)?;
    Ok(take
        .iter()
        .zip(initial.mu().iter().zip(refine_rows))
        .map(|(&t, (&a, &b))| if t { b } else { a })
        .collect())
}

/// Merged floor boundary gated on the initial stage's projected distance.
pub fn merge(
    model: &CameraModel,
    initial: &BoundaryPrediction,
    refine_rows: &[f64],
    cfg: &MergeConfig,
) -> Result<Vec<f64>> {
    merge_with_depth(model, initial, refine_rows, None, cfg)
}
