//! Channel-preserving height compression.
//!
//! Each backbone block is squeezed to height 1 in its own branch:
//! height-only convolution, ReLU, max pooling over the full height (skipped
//! when the block already has height 1), nearest upsampling to the common
//! width when needed, then a 1x1 channel projection. The branch outputs are
//! concatenated along channels. Height is never folded into channels.

use super::params::BoundParams;
use super::tensor::{Graph, Var};
use crate::error::{Error, Result};

/// Shape of one backbone block feeding a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CphcConfig {
    pub branches: Vec<BranchSpec>,
    /// Channels emitted by every branch.
    pub branch_channels: usize,
    pub out_width: usize,
    /// Height kernel size of the branch convolution (odd).
    pub kernel: usize,
}

impl CphcConfig {
    /// The four ResNet-50 block shapes 32x8, 64x4, 128x2, 256x1 at width 256,
    /// each compressed to 256x1x256.
    pub fn standard() -> Self {
        Self::scaled([32, 64, 128, 256], 256, 256)
    }

    /// Same height ladder (8, 4, 2, 1) with custom channel counts and width.
    pub fn scaled(channels: [usize; 4], branch_channels: usize, width: usize) -> Self {
        let heights = [8, 4, 2, 1];
        Self {
            branches: channels
                .iter()
                .zip(heights)
                .map(|(&channels, height)| BranchSpec {
                    channels,
                    height,
                    width,
                })
                .collect(),
            branch_channels,
            out_width: width,
            kernel: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() || self.branch_channels == 0 || self.out_width == 0 {
            return Err(Error::Invariant("CPHC needs at least one branch and nonzero widths".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Invariant(format!("CPHC kernel {} must be odd", self.kernel)));
        }
        for (i, b) in self.branches.iter().enumerate() {
            if b.channels == 0 || b.height == 0 || b.width == 0 || !self.out_width.is_multiple_of(b.width) {
                return Err(Error::Invariant(format!(
                    "branch {i} shape {b:?} incompatible with output width {}",
                    self.out_width
                )));
            }
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.branch_channels * self.branches.len()
    }

    pub fn output_shape(&self) -> [usize; 3] {
        [self.out_channels(), 1, self.out_width]
    }

    /// Channel band `start..end` written by branch `i`.
    pub fn branch_band(&self, i: usize) -> std::ops::Range<usize> {
        i * self.branch_channels..(i + 1) * self.branch_channels
    }

    /// Parameter names and shapes, in storage order.
    pub fn param_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut specs = Vec::new();
        for (i, b) in self.branches.iter().enumerate() {
            specs.push((format!("cphc.{i}.conv.kernel"), vec![b.channels, b.channels, self.kernel]));
            specs.push((format!("cphc.{i}.conv.bias"), vec![b.channels]));
            specs.push((format!("cphc.{i}.proj.weight"), vec![self.branch_channels, b.channels]));
            specs.push((format!("cphc.{i}.proj.bias"), vec![self.branch_channels]));
        }
        specs
    }
}

/// Compresses the block features to a (branches * branch_channels, 1, out_width) map.
pub fn cphc(g: &mut Graph, features: &[Var], cfg: &CphcConfig, params: &BoundParams) -> Result<Var> {
    cfg.validate()?;
    if features.len() != cfg.branches.len() {
        return Err(Error::shape(
            "cphc",
            format!("{} feature blocks", cfg.branches.len()),
            format!("{}", features.len()),
        ));
    }
    let mut outputs = Vec::with_capacity(features.len());
    for (i, (&x, spec)) in features.iter().zip(&cfg.branches).enumerate() {
        let expected = [spec.channels, spec.height, spec.width];
        if g.shape(x) != expected {
            return Err(Error::shape(
                "cphc",
                format!("block {i} of shape {expected:?}"),
                format!("{:?}", g.shape(x)),
            ));
        }
        let conv = g.conv_h(
            x,
            params.var(&format!("cphc.{i}.conv.kernel"))?,
            params.var(&format!("cphc.{i}.conv.bias"))?,
        )?;
        let mut y = g.relu(conv);
        if spec.height > 1 {
            y = g.maxpool_h(y, spec.height)?;
        }
        if spec.width != cfg.out_width {
            y = g.upsample_w(y, cfg.out_width / spec.width)?;
        }
        let proj = g.dense(
            y,
            params.var(&format!("cphc.{i}.proj.weight"))?,
            params.var(&format!("cphc.{i}.proj.bias"))?,
        )?;
        outputs.push(proj);
    }
    g.concat_channels(&outputs)
}
