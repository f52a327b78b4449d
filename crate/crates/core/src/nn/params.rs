//! Named parameter tensors, seeded initialization and checkpoint files.
//!
//! A checkpoint is a pair of files: `<stem>.bin` holding every parameter as
//! little-endian f64 values back to back, and `<stem>.json` listing
//! `{name, shape, offset}` for each tensor in storage order.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{Graph, Gradients, Tensor, Var};
use crate::error::{Error, Result};

/// Half-width of the uniform initialization interval.
pub const INIT_RANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parameters drawn uniformly from [-INIT_RANGE, INIT_RANGE] in `specs` order.
    pub fn init_uniform(specs: &[(String, Vec<usize>)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for (name, shape) in specs {
            let n: usize = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-INIT_RANGE..=INIT_RANGE)).collect();
            store.push(name, Tensor::new(shape.clone(), data).expect("shape product"));
        }
        store
    }

    /// Uniform in `±sqrt(6 / fan_in)` for tensors of rank >= 2, zero for
    /// rank-1 biases; `fan_in` is the product of all but the leading axis.
    pub fn init_fan_in(specs: &[(String, Vec<usize>)], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for (name, shape) in specs {
            let n: usize = shape.iter().product();
            let t = if shape.len() < 2 {
                Tensor::zeros(shape)
            } else {
                let bound = (6.0 / shape[1..].iter().product::<usize>() as f64).sqrt();
                let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
                Tensor::new(shape.clone(), data).expect("shape product")
            };
            store.push(name, t);
        }
        store
    }

    pub fn zeros(specs: &[(String, Vec<usize>)]) -> Self {
        let mut store = Self::new();
        for (name, shape) in specs {
            store.push(name, Tensor::zeros(shape));
        }
        store
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        self.names.push(name.to_string());
        self.tensors.push(t);
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    /// Records every parameter as a leaf on `g`.
    pub fn bind(&self, g: &mut Graph) -> BoundParams {
        let vars = self.tensors.iter().map(|t| g.input(t.clone())).collect::<Vec<_>>();
        let index = self.names.iter().cloned().zip(vars.iter().copied()).collect();
        BoundParams { vars, index }
    }

    /// Gradient-descent step `p -= lr * grad` using gradients of a bound copy.
    pub fn descend(&mut self, bound: &BoundParams, grads: &Gradients, lr: f64) {
        for (t, &v) in self.tensors.iter_mut().zip(&bound.vars) {
            if let Some(g) = grads.get(v) {
                for (p, d) in t.data_mut().iter_mut().zip(g) {
                    *p -= lr * d;
                }
            }
        }
    }

    /// Gradient-descent step from gradients laid out as by [`Self::collect_grads`].
    pub fn apply_grads(&mut self, grads: &[Vec<f64>], lr: f64) -> Result<()> {
        check_len_grads(&self.tensors, grads)?;
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            for (p, d) in t.data_mut().iter_mut().zip(g) {
                *p -= lr * d;
            }
        }
        Ok(())
    }

    /// Gradients for each parameter in storage order, zero-filled where absent.
    pub fn collect_grads(&self, bound: &BoundParams, grads: &Gradients) -> Vec<Vec<f64>> {
        self.tensors
            .iter()
            .zip(&bound.vars)
            .map(|(t, &v)| grads.get_or_zeros(v, t.len()))
            .collect()
    }

    pub fn save_checkpoint(&self, stem: &Path) -> Result<()> {
        let (bin, json) = checkpoint_paths(stem);
        let mut bytes = Vec::with_capacity(self.num_values() * 8);
        let mut manifest = Vec::new();
        let mut offset = 0;
        for (name, t) in self.iter() {
            manifest.push(ManifestEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
            });
            offset += t.len();
            for v in t.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
        let text = serde_json::to_string_pretty(&manifest).map_err(|source| Error::Json {
            path: json.display().to_string(),
            source,
        })?;
        std::fs::write(&json, text + "\n").map_err(|e| Error::io(&json, e))
    }

    pub fn load_checkpoint(stem: &Path) -> Result<Self> {
        let (bin, json) = checkpoint_paths(stem);
        let text = std::fs::read_to_string(&json).map_err(|e| Error::io(&json, e))?;
        let manifest: Vec<ManifestEntry> = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: json.display().to_string(),
            source,
        })?;
        let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Invariant(format!(
                "{} is not a whole number of f64 values",
                bin.display()
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut store = Self::new();
        for e in manifest {
            let n: usize = e.shape.iter().product();
            let slice = values.get(e.offset..e.offset + n).ok_or_else(|| {
                Error::Invariant(format!("tensor {} runs past the end of {}", e.name, bin.display()))
            })?;
            store.push(&e.name, Tensor::new(e.shape, slice.to_vec())?);
        }
        Ok(store)
    }
}

fn checkpoint_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn check_len_grads(tensors: &[Tensor], grads: &[Vec<f64>]) -> Result<()> {
    let ok = tensors.len() == grads.len() && tensors.iter().zip(grads).all(|(t, g)| t.len() == g.len());
    if ok {
        Ok(())
    } else {
        Err(Error::Invariant("gradient layout does not match the parameter store".into()))
    }
}

/// Parameter leaves on a particular graph.
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, Var>,
}

impl BoundParams {
    /// Binds `names[i]` to `vars[i]`; for graphs whose parameter leaves were created elsewhere.
    pub fn from_vars(names: &[String], vars: Vec<Var>) -> Result<Self> {
        if names.len() != vars.len() {
            return Err(Error::Invariant(format!(
                "{} parameter names for {} variables",
                names.len(),
                vars.len()
            )));
        }
        let index = names.iter().cloned().zip(vars.iter().copied()).collect();
        Ok(Self { vars, index })
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::Invariant(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}
