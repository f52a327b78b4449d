//! Training losses, as tape nodes and as plain scalar evaluators.
//!
//! All per-column losses are sums over columns.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::layout::check_len;
use crate::nn::{Graph, Var};

/// Corner weight `lambda` and depth weight `nu` of the stage totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub nu: f64,
}

impl LossWeights {
    pub fn new(lambda: f64, nu: f64) -> Result<Self> {
        if !(lambda >= 0.0 && nu >= 0.0 && lambda.is_finite() && nu.is_finite()) {
            return Err(Error::Invariant(format!(
                "loss weights must be non-negative, got lambda = {lambda}, nu = {nu}"
            )));
        }
        Ok(Self { lambda, nu })
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 10.0,
            nu: 5.0,
        }
    }
}

/// Terms of the initial-stage total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitialTerms<T> {
    pub floor_nll: T,
    pub ceiling: T,
    pub depth: T,
    pub corner: T,
}

/// Terms of the refinement-stage total.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineTerms<T> {
    pub floor: T,
    pub depth: T,
    pub corner: T,
    pub ceiling: T,
}

fn half_ln_two_pi() -> f64 {
    0.5 * (2.0 * PI).ln()
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|&v| !(v > 0.0)) {
        Some(column) => Err(Error::Column {
            column,
            what: format!("{name} must be positive, got {}", values[column]),
        }),
        None => Ok(()),
    }
}

/// Gaussian negative log-likelihood of the floor boundary:
/// `sum_i ln(sigma_i * sqrt(2 pi)) + (y_i - mu_i)^2 / (2 sigma_i^2)`.
pub fn nll_floor(g: &mut Graph, mu: Var, sigma: Var, y: Var) -> Result<Var> {
    check_positive("sigma", g.value(sigma).data())?;
    let n = g.value(mu).len();
    let resid = g.sub(y, mu)?;
    let sq = g.square(resid);
    let var = g.square(sigma);
    let ratio = g.div(sq, var)?;
    let half = g.scale(ratio, 0.5);
    let log_sigma = g.ln(sigma)?;
    let per_column = g.add(half, log_sigma)?;
    let total = g.sum(per_column);
    Ok(g.add_scalar(total, n as f64 * half_ln_two_pi()))
}

/// `sum_i |pred_i - target_i|`.
pub fn l1(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    let diff = g.sub(pred, target)?;
    let abs = g.abs(diff);
    Ok(g.sum(abs))
}

/// Top-down depth loss `sum_i |d_hat_i - d_i|`.
pub fn depth_l1(g: &mut Graph, pred: Var, target: Var) -> Result<Var> {
    l1(g, pred, target)
}

/// Floor loss re-weighted by wall distance: `sum_i |y_hat_i - y_i| * d_i`.
pub fn distance_aware_floor(g: &mut Graph, yhat: Var, y: Var, d: Var) -> Result<Var> {
    check_positive("distance", g.value(d).data())?;
    let diff = g.sub(yhat, y)?;
    let abs = g.abs(diff);
    let weighted = g.mul(abs, d)?;
    Ok(g.sum(weighted))
}

/// `floor_nll + ceiling + depth + lambda * corner`.
pub fn total_initial(g: &mut Graph, t: InitialTerms<Var>, w: LossWeights) -> Result<Var> {
    let a = g.add(t.floor_nll, t.ceiling)?;
    let b = g.add(a, t.depth)?;
    let corner = g.scale(t.corner, w.lambda);
    g.add(b, corner)
}

/// `floor + nu * depth + lambda * corner + ceiling`.
pub fn total_refine(g: &mut Graph, t: RefineTerms<Var>, w: LossWeights) -> Result<Var> {
    let depth = g.scale(t.depth, w.nu);
    let corner = g.scale(t.corner, w.lambda);
    let a = g.add(t.floor, depth)?;
    let b = g.add(a, corner)?;
    g.add(b, t.ceiling)
}

/// Closed-form evaluators on plain slices.
pub mod scalar {
    use super::*;

    pub fn nll_floor(mu: &[f64], sigma: &[f64], y: &[f64]) -> Result<f64> {
        check_len("sigma", mu.len(), sigma.len())?;
        check_len("y", mu.len(), y.len())?;
        check_positive("sigma", sigma)?;
        Ok(mu
            .iter()
            .zip(sigma)
            .zip(y)
            .map(|((m, s), t)| (s * (2.0 * PI).sqrt()).ln() + (t - m).powi(2) / (2.0 * s * s))
            .sum())
    }

    pub fn l1(pred: &[f64], target: &[f64]) -> Result<f64> {
        check_len("target", pred.len(), target.len())?;
        Ok(pred.iter().zip(target).map(|(p, t)| (p - t).abs()).sum())
    }

    pub fn depth_l1(pred: &[f64], target: &[f64]) -> Result<f64> {
        l1(pred, target)
    }

    pub fn distance_aware_floor(yhat: &[f64], y: &[f64], d: &[f64]) -> Result<f64> {
        check_len("y", yhat.len(), y.len())?;
        check_len("distance", yhat.len(), d.len())?;
        check_positive("distance", d)?;
        Ok(yhat
            .iter()
            .zip(y)
            .zip(d)
            .map(|((p, t), w)| (p - t).abs() * w)
            .sum())
    }

    pub fn total_initial(t: InitialTerms<f64>, w: LossWeights) -> f64 {
        t.floor_nll + t.ceiling + t.depth + w.lambda * t.corner
    }

    pub fn total_refine(t: RefineTerms<f64>, w: LossWeights) -> f64 {
        t.floor + w.nu * t.depth + w.lambda * t.corner + t.ceiling
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use proptest::prelude::*;

    fn leaf(g: &mut Graph, v: &[f64]) -> Var {
        g.input(Tensor::vector(v.to_vec()))
    }

    #[test]
    fn nll_vanishes_at_unit_density() {
        let s = 1.0 / (2.0 * PI).sqrt();
        let v = scalar::nll_floor(&[3.0, 4.0], &[s, s], &[3.0, 4.0]).unwrap();
        assert!(v.abs() < 1e-14);
    }

    #[test]
    fn nll_single_column_unit_sigma() {
        let v = scalar::nll_floor(&[2.0], &[1.0], &[2.0]).unwrap();
        assert!((v - 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn nll_decreases_with_sigma_at_zero_residual_and_goes_negative() {
        let mut last = f64::INFINITY;
        for s in [2.0, 1.0, 0.5, 0.1, 0.01] {
            let v = scalar::nll_floor(&[1.0], &[s], &[1.0]).unwrap();
            assert!(v < last);
            last = v;
        }
        assert!(last < 0.0);
    }

    #[test]
    fn nll_rejects_nonpositive_sigma() {
        assert!(scalar::nll_floor(&[1.0], &[0.0], &[1.0]).is_err());
        let mut g = Graph::new();
        let (m, s, y) = (leaf(&mut g, &[1.0]), leaf(&mut g, &[-1.0]), leaf(&mut g, &[1.0]));
        assert!(nll_floor(&mut g, m, s, y).is_err());
    }

    #[test]
    fn tape_nll_matches_scalar_and_analytic_mu_gradient() {
        let (mu, sigma, y) = ([1.0, 2.5, -0.3], [0.7, 1.3, 2.0], [1.4, 2.0, 0.1]);
        let mut g = Graph::new();
        let (m, s, t) = (leaf(&mut g, &mu), leaf(&mut g, &sigma), leaf(&mut g, &y));
        let loss = nll_floor(&mut g, m, s, t).unwrap();
        let expected = scalar::nll_floor(&mu, &sigma, &y).unwrap();
        assert!((g.scalar(loss) - expected).abs() < 1e-12);
        let grads = g.backward(loss).unwrap();
        for i in 0..3 {
            let analytic = (mu[i] - y[i]) / (sigma[i] * sigma[i]);
            assert!((grads.get(m).unwrap()[i] - analytic).abs() < 1e-12);
        }
    }

    #[test]
    fn distance_aware_arithmetic_series() {
        let w = 20;
        let y = vec![0.0; w];
        let yhat = vec![0.25; w];
        let d: Vec<f64> = (1..=w).map(|i| i as f64).collect();
        let v = scalar::distance_aware_floor(&yhat, &y, &d).unwrap();
        assert!((v - 0.25 * (w * (w + 1) / 2) as f64).abs() < 1e-12);
        assert_eq!(scalar::distance_aware_floor(&y, &y, &d).unwrap(), 0.0);
        assert!(scalar::distance_aware_floor(&y, &y, &vec![0.0; w]).is_err());
    }

    #[test]
    fn depth_l1_examples() {
        assert_eq!(scalar::depth_l1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(scalar::depth_l1(&[1.0, 2.5], &[1.0, 2.0]).unwrap(), 0.5);
        assert!(scalar::depth_l1(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn weighted_totals() {
        let w = LossWeights::default();
        let init = InitialTerms { floor_nll: 0.0, ceiling: 0.0, depth: 0.0, corner: 0.1 };
        assert!((scalar::total_initial(init, w) - 1.0).abs() < 1e-12);
        let refine = RefineTerms { floor: 0.0, depth: 0.2, corner: 0.0, ceiling: 0.0 };
        assert!((scalar::total_refine(refine, w) - 1.0).abs() < 1e-12);
        let zero = RefineTerms { floor: 0.0, depth: 0.0, corner: 0.0, ceiling: 0.0 };
        assert_eq!(scalar::total_refine(zero, w), 0.0);
        assert!(LossWeights::new(-1.0, 5.0).is_err());
    }

    #[test]
    fn tape_totals_match_scalar() {
        let w = LossWeights::new(3.0, 7.0).unwrap();
        let mut g = Graph::new();
        let vals = [0.4, 1.5, 2.25, 0.125];
        let v: Vec<Var> = vals.iter().map(|&x| leaf(&mut g, &[x])).collect();
        let ti = total_initial(&mut g, InitialTerms { floor_nll: v[0], ceiling: v[1], depth: v[2], corner: v[3] }, w).unwrap();
        let tr = total_refine(&mut g, RefineTerms { floor: v[0], depth: v[2], corner: v[3], ceiling: v[1] }, w).unwrap();
        let si = scalar::total_initial(InitialTerms { floor_nll: 0.4, ceiling: 1.5, depth: 2.25, corner: 0.125 }, w);
        let sr = scalar::total_refine(RefineTerms { floor: 0.4, depth: 2.25, corner: 0.125, ceiling: 1.5 }, w);
        assert!((g.scalar(ti) - si).abs() < 1e-12);
        assert!((g.scalar(tr) - sr).abs() < 1e-12);
        let grads = g.backward(tr).unwrap();
        assert_eq!(grads.get(v[2]).unwrap(), &[7.0]);
        assert_eq!(grads.get(v[3]).unwrap(), &[3.0]);
    }

    proptest! {
        #[test]
        fn l1_style_losses_are_non_negative(
            a in proptest::collection::vec(-50.0f64..50.0, 1..40),
            seed in 0u64..1000,
        ) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, x)| x + ((i as u64 * 7 + seed) % 5) as f64 - 2.0).collect();
            let d: Vec<f64> = (0..a.len()).map(|i| 0.5 + i as f64).collect();
            prop_assert!(scalar::l1(&a, &b).unwrap() >= 0.0);
            prop_assert!(scalar::distance_aware_floor(&a, &b, &d).unwrap() >= 0.0);
        }

        #[test]
        fn unit_distance_reduces_to_l1(a in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let b: Vec<f64> = a.iter().map(|x| x * 0.5 + 1.0).collect();
            let ones = vec![1.0; a.len()];
            prop_assert!((scalar::distance_aware_floor(&a, &b, &ones).unwrap() - scalar::l1(&a, &b).unwrap()).abs() < 1e-9);
        }

        #[test]
        fn doubling_distance_doubles_loss(a in proptest::collection::vec(-50.0f64..50.0, 1..40)) {
            let b: Vec<f64> = a.iter().map(|x| x * 0.3).collect();
            let d: Vec<f64> = (0..a.len()).map(|i| 1.0 + i as f64 * 0.25).collect();
            let d2: Vec<f64> = d.iter().map(|x| 2.0 * x).collect();
            let one = scalar::distance_aware_floor(&a, &b, &d).unwrap();
            let two = scalar::distance_aware_floor(&a, &b, &d2).unwrap();
            prop_assert!((two - 2.0 * one).abs() <= 1e-9 * one.max(1.0));
        }

        #[test]
        fn depth_l1_permutation_invariant(a in proptest::collection::vec(0.1f64..20.0, 2..30), rot in 0usize..30) {
            let b: Vec<f64> = a.iter().map(|x| x * 1.1).collect();
            let k = rot % a.len();
            let mut ap = a.clone();
            let mut bp = b.clone();
            ap.rotate_left(k);
            bp.rotate_left(k);
            ap.reverse();
            bp.reverse();
            prop_assert!((scalar::depth_l1(&a, &b).unwrap() - scalar::depth_l1(&ap, &bp).unwrap()).abs() < 1e-9);
        }
    }
}
