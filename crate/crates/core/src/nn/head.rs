//! Per-column prediction head.
//!
//! A two-layer per-column MLP (1x1 projections) over the compressed
//! feature map emits five raw channels that are turned into the floor mean,
//! floor sigma, wall depth, ceiling row and corner strength.

use super::params::BoundParams;
use super::tensor::{Graph, Var};
use crate::error::{Error, Result};

/// Added to the softplus of the raw sigma channel to keep sigma strictly positive.
pub const SIGMA_FLOOR: f64 = 1e-3;

const RAW_CHANNELS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub in_channels: usize,
    pub hidden: usize,
    /// Floor row predicted for a zero raw output.
    pub floor_offset: f64,
    /// Ceiling row predicted for a zero raw output.
    pub ceiling_offset: f64,
    /// Pixels per unit of raw floor/ceiling output.
    pub row_scale: f64,
    /// Pixels per unit of softplus sigma output.
    pub sigma_scale: f64,
}

impl HeadConfig {
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        vec![
            ("head.hidden.weight".into(), vec![self.hidden, self.in_channels]),
            ("head.hidden.bias".into(), vec![self.hidden]),
            ("head.out.weight".into(), vec![RAW_CHANNELS, self.hidden]),
            ("head.out.bias".into(), vec![RAW_CHANNELS]),
        ]
    }
}

/// Per-column outputs, each a 1-D node of length W.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutputs {
    pub mu: Var,
    pub sigma: Var,
    pub depth: Var,
    pub ceiling: Var,
    pub corner: Var,
}

pub fn column_head(g: &mut Graph, feature: Var, cfg: &HeadConfig, params: &BoundParams) -> Result<HeadOutputs> {
    let width = match g.shape(feature) {
        [c, 1, w] if *c == cfg.in_channels => *w,
        s => {
            return Err(Error::shape(
                "column_head",
                format!("({}, 1, W)", cfg.in_channels),
                format!("{s:?}"),
            ))
        }
    };
    let hidden = g.dense(
        feature,
        params.var("head.hidden.weight")?,
        params.var("head.hidden.bias")?,
    )?;
    let hidden = g.relu(hidden);
    let raw = g.dense(hidden, params.var("head.out.weight")?, params.var("head.out.bias")?)?;

    let channel = |g: &mut Graph, k: usize| -> Result<Var> {
        let c = g.slice_channels(raw, k, 1)?;
        g.reshape(c, &[width])
    };
    let raw_mu = channel(g, 0)?;
    let raw_sigma = channel(g, 1)?;
    let raw_depth = channel(g, 2)?;
    let raw_ceiling = channel(g, 3)?;
    let raw_corner = channel(g, 4)?;

    let mu = g.scale(raw_mu, cfg.row_scale);
    let mu = g.add_scalar(mu, cfg.floor_offset);
    let sigma = g.softplus(raw_sigma);
    let sigma = g.scale(sigma, cfg.sigma_scale);
    let sigma = g.add_scalar(sigma, SIGMA_FLOOR);
    let depth = g.softplus(raw_depth);
    let ceiling = g.scale(raw_ceiling, cfg.row_scale);
    let ceiling = g.add_scalar(ceiling, cfg.ceiling_offset);
    let corner = g.sigmoid(raw_corner);
    Ok(HeadOutputs {
        mu,
        sigma,
        depth,
        ceiling,
        corner,
    })
}
