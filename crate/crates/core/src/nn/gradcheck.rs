//! Central finite-difference checks of tape gradients.
//!
//! The numeric side only ever evaluates forward values, so it is
//! independent of the backward rules it verifies. Coordinates whose
//! perturbation crosses a kink (ReLU, abs, max-pool switch) are detected
//! by disagreement between central differences at two step sizes and are
//! counted as skipped rather than compared.

use rand::seq::index::sample;
use rand::Rng;

use super::tensor::{Graph, Tensor, Var};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const SCALE_FLOOR: f64 = 1e-3;

/// Outcome of checking one function over one or more instances.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CheckStats {
    pub max_deviation: f64,
    pub compared: usize,
    pub skipped: usize,
}

impl CheckStats {
    pub fn absorb(&mut self, other: CheckStats) {
        self.max_deviation = self.max_deviation.max(other.max_deviation);
        self.compared += other.compared;
        self.skipped += other.skipped;
    }

    pub fn passes(&self, tolerance: f64) -> bool {
        self.compared > 0 && self.max_deviation < tolerance && self.skipped * 100 <= self.compared
    }
}

/// Relative deviation between an analytic and a numeric derivative.
pub fn deviation(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(SCALE_FLOOR)
}

/// Compares tape gradients of `build(inputs)` with central differences.
///
/// At most `max_coords` randomly chosen coordinates of each input are
/// perturbed; inputs listed in `frozen` are treated as constants.
pub fn check<F, R>(inputs: &[Tensor], frozen: &[usize], max_coords: usize, rng: &mut R, build: F) -> Result<CheckStats>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
    R: Rng,
{
    let eval = |ts: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.input(t.clone())).collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.scalar(loss))
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let mut stats = CheckStats::default();
    let mut work = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        if frozen.contains(&k) {
            continue;
        }
        let analytic = grads.get_or_zeros(vars[k], input.len());
        let n = input.len();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            sample(rng, n, max_coords).into_vec()
        };
        for j in coords {
            let x = input.data()[j];
            let mut central = |step: f64| -> Result<f64> {
                work[k].data_mut()[j] = x + step;
                let fp = eval(&work)?;
                work[k].data_mut()[j] = x - step;
                let fm = eval(&work)?;
                work[k].data_mut()[j] = x;
                Ok((fp - fm) / (2.0 * step))
            };
            let numeric = central(FD_STEP)?;
            let half = central(FD_STEP / 2.0)?;
            // Smooth coordinates agree to O(step^2); a kink inside the stencil does not.
            if deviation(numeric, half) > 0.1 * REL_TOLERANCE {
                stats.skipped += 1;
                continue;
            }
            stats.max_deviation = stats.max_deviation.max(deviation(analytic[j], numeric));
            stats.compared += 1;
        }
    }
    Ok(stats)
}
