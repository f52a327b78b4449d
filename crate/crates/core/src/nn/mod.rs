//! Desk-scale neural building blocks: tensors with reverse-mode gradients,
//! the channel-preserving height compression block and the per-column head.

pub mod cphc;
pub mod gradcheck;
pub mod head;
pub mod params;
pub mod tensor;

pub use cphc::{cphc, BranchSpec, CphcConfig};
pub use head::{column_head, HeadConfig, HeadOutputs};
pub use params::{BoundParams, ParamStore};
pub use tensor::{Gradients, Graph, Tensor, Var};
