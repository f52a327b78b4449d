//! Seeded finite-difference sweep over every differentiable tape op, every
//! loss and stage total, and the compression-head-likelihood pipeline.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::losses::{self, InitialTerms, LossWeights, RefineTerms};
use crate::nn::gradcheck::{check, CheckStats, REL_TOLERANCE};
use crate::nn::{column_head, cphc, BoundParams, CphcConfig, Graph, HeadConfig, ParamStore, Tensor, Var};

/// Random instances generated per case.
pub const INSTANCES_PER_CASE: usize = 4;
/// Coordinates perturbed per input tensor.
const MAX_COORDS: usize = 12;

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

struct Instance {
    inputs: Vec<Tensor>,
    frozen: Vec<usize>,
    build: Build,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseReport {
    pub name: &'static str,
    pub instances: usize,
    pub stats: CheckStats,
}

impl CaseReport {
    pub fn passes(&self) -> bool {
        self.stats.passes(REL_TOLERANCE)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub cases: Vec<CaseReport>,
}

impl SuiteReport {
    pub fn passes(&self) -> bool {
        self.cases.iter().all(CaseReport::passes)
    }

    pub fn instances(&self) -> usize {
        self.cases.iter().map(|c| c.instances).sum()
    }

    pub fn max_deviation(&self) -> f64 {
        self.cases.iter().map(|c| c.stats.max_deviation).fold(0.0, f64::max)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<24} {:>9} {:>9} {:>8} {:>14}  status",
            "case", "instances", "compared", "skipped", "max rel dev"
        );
        for c in &self.cases {
            let _ = writeln!(
                s,
                "{:<24} {:>9} {:>9} {:>8} {:>14.3e}  {}",
                c.name,
                c.instances,
                c.stats.compared,
                c.stats.skipped,
                c.stats.max_deviation,
                if c.passes() { "ok" } else { "FAIL" }
            );
        }
        s
    }
}

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).expect("shape")
}

/// Values with magnitude in `[0.1, 1)` and random sign, away from zero kinks.
fn off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(0.1..1.0);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

fn shape3(rng: &mut ChaCha8Rng) -> [usize; 3] {
    [rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=16)]
}

/// `sum(weights * y)` with frozen random weights, so every output element
/// contributes a distinct factor to the gradient.
fn weighted_sum(g: &mut Graph, y: Var, weights: Var) -> Result<Var> {
    let prod = g.mul(y, weights)?;
    Ok(g.sum(prod))
}

/// Single-input op: inputs are `[x, weights]`.
fn unary(rng: &mut ChaCha8Rng, x: Tensor, out_shape: &[usize], op: fn(&mut Graph, Var) -> Result<Var>) -> Instance {
    let w = uniform(rng, out_shape, -1.0, 1.0);
    Instance {
        inputs: vec![x, w],
        frozen: vec![1],
        build: Box::new(move |g, v| {
            let y = op(g, v[0])?;
            weighted_sum(g, y, v[1])
        }),
    }
}

fn binary(rng: &mut ChaCha8Rng, a: Tensor, b: Tensor, op: fn(&mut Graph, Var, Var) -> Result<Var>) -> Instance {
    let w = uniform(rng, a.shape(), -1.0, 1.0);
    Instance {
        inputs: vec![a, b, w],
        frozen: vec![2],
        build: Box::new(move |g, v| {
            let y = op(g, v[0], v[1])?;
            weighted_sum(g, y, v[2])
        }),
    }
}

fn vec_len(rng: &mut ChaCha8Rng) -> usize {
    rng.random_range(2..=16)
}

/// Target rows and an offset prediction at least 0.1 away, clear of the L1 kink.
fn l1_pair(rng: &mut ChaCha8Rng, n: usize) -> (Tensor, Tensor) {
    let y = uniform(rng, &[n], -2.0, 2.0);
    let off = off_zero(rng, &[n]);
    let p = Tensor::vector(y.data().iter().zip(off.data()).map(|(a, b)| a + b).collect());
    (p, y)
}

fn make_case(name: &str, rng: &mut ChaCha8Rng) -> Instance {
    match name {
        "dense" => {
            let [ci, h, w] = shape3(rng);
            let co = rng.random_range(1..=8);
            let x = uniform(rng, &[ci, h, w], -1.0, 1.0);
            let wt = uniform(rng, &[co, ci], -1.0, 1.0);
            let b = uniform(rng, &[co], -1.0, 1.0);
            let r = uniform(rng, &[co, h, w], -1.0, 1.0);
            Instance {
                inputs: vec![x, wt, b, r],
                frozen: vec![3],
                build: Box::new(|g, v| {
                    let y = g.dense(v[0], v[1], v[2])?;
                    weighted_sum(g, y, v[3])
                }),
            }
        }
        "conv_h" => {
            let [ci, h, w] = shape3(rng);
            let co = rng.random_range(1..=8);
            let k = [1, 3, 5][rng.random_range(0..3)];
            let x = uniform(rng, &[ci, h, w], -1.0, 1.0);
            let kt = uniform(rng, &[co, ci, k], -1.0, 1.0);
            let b = uniform(rng, &[co], -1.0, 1.0);
            let r = uniform(rng, &[co, h, w], -1.0, 1.0);
            Instance {
                inputs: vec![x, kt, b, r],
                frozen: vec![3],
                build: Box::new(|g, v| {
                    let y = g.conv_h(v[0], v[1], v[2])?;
                    weighted_sum(g, y, v[3])
                }),
            }
        }
        "maxpool_h" | "avgpool_h" => {
            let [c, _, w] = shape3(rng);
            let k = [1, 2, 4, 8][rng.random_range(0..4)];
            let h = k * rng.random_range(1..=8 / k);
            let x = uniform(rng, &[c, h, w], -1.0, 1.0);
            let out = [c, h / k, w];
            let wt = uniform(rng, &out, -1.0, 1.0);
            let max = name == "maxpool_h";
            Instance {
                inputs: vec![x, wt],
                frozen: vec![1],
                build: Box::new(move |g, v| {
                    let y = if max { g.maxpool_h(v[0], k)? } else { g.avgpool_h(v[0], k)? };
                    weighted_sum(g, y, v[1])
                }),
            }
        }
        "upsample_w" => {
            let [c, h, _] = shape3(rng);
            let f = rng.random_range(1..=4);
            let w = rng.random_range(1..=16 / f);
            let x = uniform(rng, &[c, h, w], -1.0, 1.0);
            let wt = uniform(rng, &[c, h, w * f], -1.0, 1.0);
            Instance {
                inputs: vec![x, wt],
                frozen: vec![1],
                build: Box::new(move |g, v| {
                    let y = g.upsample_w(v[0], f)?;
                    weighted_sum(g, y, v[1])
                }),
            }
        }
        "concat_channels" => {
            let [_, h, w] = shape3(rng);
            let (c1, c2) = (rng.random_range(1..=4), rng.random_range(1..=4));
            let a = uniform(rng, &[c1, h, w], -1.0, 1.0);
            let b = uniform(rng, &[c2, h, w], -1.0, 1.0);
            let wt = uniform(rng, &[c1 + c2, h, w], -1.0, 1.0);
            Instance {
                inputs: vec![a, b, wt],
                frozen: vec![2],
                build: Box::new(|g, v| {
                    let y = g.concat_channels(&[v[0], v[1]])?;
                    weighted_sum(g, y, v[2])
                }),
            }
        }
        "slice_channels" => {
            let [c, h, w] = shape3(rng);
            let start = rng.random_range(0..c);
            let len = rng.random_range(1..=c - start);
            let x = uniform(rng, &[c, h, w], -1.0, 1.0);
            let wt = uniform(rng, &[len, h, w], -1.0, 1.0);
            Instance {
                inputs: vec![x, wt],
                frozen: vec![1],
                build: Box::new(move |g, v| {
                    let y = g.slice_channels(v[0], start, len)?;
                    weighted_sum(g, y, v[1])
                }),
            }
        }
        "reshape" => {
            let [c, h, w] = shape3(rng);
            let x = uniform(rng, &[c, h, w], -1.0, 1.0);
            let wt = uniform(rng, &[c * h * w], -1.0, 1.0);
            Instance {
                inputs: vec![x, wt],
                frozen: vec![1],
                build: Box::new(move |g, v| {
                    let y = g.reshape(v[0], &[c * h * w])?;
                    weighted_sum(g, y, v[1])
                }),
            }
        }
        "relu" | "abs" => {
            let s = shape3(rng);
            let x = off_zero(rng, &s);
            let op: fn(&mut Graph, Var) -> Result<Var> = if name == "relu" {
                |g, x| Ok(g.relu(x))
            } else {
                |g, x| Ok(g.abs(x))
            };
            unary(rng, x, &s, op)
        }
        "softplus" | "sigmoid" | "square" | "add_scalar" | "scale" => {
            let s = shape3(rng);
            let x = uniform(rng, &s, -3.0, 3.0);
            let op: fn(&mut Graph, Var) -> Result<Var> = match name {
                "softplus" => |g, x| Ok(g.softplus(x)),
                "sigmoid" => |g, x| Ok(g.sigmoid(x)),
                "square" => |g, x| Ok(g.square(x)),
                "add_scalar" => |g, x| Ok(g.add_scalar(x, 0.7)),
                _ => |g, x| Ok(g.scale(x, -1.3)),
            };
            unary(rng, x, &s, op)
        }
        "ln" => {
            let s = shape3(rng);
            let x = uniform(rng, &s, 0.2, 3.0);
            unary(rng, x, &s, |g, x| g.ln(x))
        }
        "sum" => {
            let s = shape3(rng);
            let x = uniform(rng, &s, -1.0, 1.0);
            let scale = uniform(rng, &[1], 0.5, 2.0);
            Instance {
                inputs: vec![x, scale],
                frozen: vec![1],
                build: Box::new(|g, v| {
                    let y = g.sum(v[0]);
                    let sq = g.square(y);
                    let p = g.mul(sq, v[1])?;
                    Ok(g.sum(p))
                }),
            }
        }
        "add" | "sub" | "mul" => {
            let s = shape3(rng);
            let a = uniform(rng, &s, -2.0, 2.0);
            let b = uniform(rng, &s, -2.0, 2.0);
            let op: fn(&mut Graph, Var, Var) -> Result<Var> = match name {
                "add" => |g, a, b| g.add(a, b),
                "sub" => |g, a, b| g.sub(a, b),
                _ => |g, a, b| g.mul(a, b),
            };
            binary(rng, a, b, op)
        }
        "div" => {
            let s = shape3(rng);
            let a = uniform(rng, &s, -2.0, 2.0);
            let b = off_zero(rng, &s);
            let b = Tensor::new(s.to_vec(), b.data().iter().map(|v| v * 2.0 + v.signum() * 0.3).collect())
                .expect("shape");
            binary(rng, a, b, |g, a, b| g.div(a, b))
        }
        "nll floor" => {
            let n = vec_len(rng);
            let mu = uniform(rng, &[n], -2.0, 2.0);
            let sigma = uniform(rng, &[n], 0.3, 2.0);
            let y = uniform(rng, &[n], -2.0, 2.0);
            Instance {
                inputs: vec![mu, sigma, y],
                frozen: vec![],
                build: Box::new(|g, v| losses::nll_floor(g, v[0], v[1], v[2])),
            }
        }
        "l1" | "depth l1" => {
            let n = vec_len(rng);
            let (p, y) = l1_pair(rng, n);
            let depth = name == "depth l1";
            Instance {
                inputs: vec![p, y],
                frozen: vec![],
                build: Box::new(move |g, v| {
                    if depth {
                        losses::depth_l1(g, v[0], v[1])
                    } else {
                        losses::l1(g, v[0], v[1])
                    }
                }),
            }
        }
        "distance-aware floor" => {
            let n = vec_len(rng);
            let (p, y) = l1_pair(rng, n);
            let d = uniform(rng, &[n], 0.5, 10.0);
            Instance {
                inputs: vec![p, y, d],
                frozen: vec![],
                build: Box::new(|g, v| losses::distance_aware_floor(g, v[0], v[1], v[2])),
            }
        }
        "initial total" => {
            let n = vec_len(rng);
            let mu = uniform(rng, &[n], -2.0, 2.0);
            let sigma = uniform(rng, &[n], 0.3, 2.0);
            let y = uniform(rng, &[n], -2.0, 2.0);
            let (c, ct) = l1_pair(rng, n);
            let (d, dt) = l1_pair(rng, n);
            let (k, kt) = l1_pair(rng, n);
            let w = LossWeights::default();
            Instance {
                inputs: vec![mu, sigma, y, c, ct, d, dt, k, kt],
                frozen: vec![],
                build: Box::new(move |g, v| {
                    let t = InitialTerms {
                        floor_nll: losses::nll_floor(g, v[0], v[1], v[2])?,
                        ceiling: losses::l1(g, v[3], v[4])?,
                        depth: losses::depth_l1(g, v[5], v[6])?,
                        corner: losses::l1(g, v[7], v[8])?,
                    };
                    losses::total_initial(g, t, w)
                }),
            }
        }
        "refine total" => {
            let n = vec_len(rng);
            let (p, y) = l1_pair(rng, n);
            let dist = uniform(rng, &[n], 0.5, 10.0);
            let (c, ct) = l1_pair(rng, n);
            let (d, dt) = l1_pair(rng, n);
            let (k, kt) = l1_pair(rng, n);
            let w = LossWeights::default();
            Instance {
                inputs: vec![p, y, dist, c, ct, d, dt, k, kt],
                frozen: vec![],
                build: Box::new(move |g, v| {
                    let t = RefineTerms {
                        floor: losses::distance_aware_floor(g, v[0], v[1], v[2])?,
                        depth: losses::depth_l1(g, v[5], v[6])?,
                        corner: losses::l1(g, v[7], v[8])?,
                        ceiling: losses::l1(g, v[3], v[4])?,
                    };
                    losses::total_refine(g, t, w)
                }),
            }
        }
        "cphc-head-nll" => pipeline(rng),
        other => unreachable!("unknown gradcheck case {other}"),
    }
}

/// Height compression, column head and floor likelihood on a tiny configuration;
/// every parameter and every feature block is an input.
fn pipeline(rng: &mut ChaCha8Rng) -> Instance {
    let width = [4, 8][rng.random_range(0..2)];
    let cfg = CphcConfig::scaled(
        [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)],
        2,
        width,
    );
    let head = HeadConfig {
        in_channels: cfg.out_channels(),
        hidden: 3,
        floor_offset: 0.5,
        ceiling_offset: -0.5,
        row_scale: 1.0,
        sigma_scale: 1.0,
    };
    let mut specs = cfg.param_specs();
    specs.extend(head.param_specs());
    let params = ParamStore::init_fan_in(&specs, rng.random());
    // Nonzero biases keep ReLU pre-activations away from exact zeros.
    let mut inputs: Vec<Tensor> = params
        .iter()
        .map(|(_, t)| {
            let mut t = t.clone();
            if t.shape().len() == 1 {
                t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(0.05..0.5));
            }
            t
        })
        .collect();
    let names: Vec<String> = specs.iter().map(|(n, _)| n.clone()).collect();
    let np = inputs.len();
    for b in &cfg.branches {
        inputs.push(uniform(rng, &[b.channels, b.height, b.width], -1.0, 1.0));
    }
    inputs.push(uniform(rng, &[width], -1.0, 1.0));
    Instance {
        inputs,
        frozen: vec![np + 4],
        build: Box::new(move |g, v| {
            let bound = BoundParams::from_vars(&names, v[..np].to_vec())?;
            let z = cphc(g, &v[np..np + 4], &cfg, &bound)?;
            let out = column_head(g, z, &head, &bound)?;
            losses::nll_floor(g, out.mu, out.sigma, v[np + 4])
        }),
    }
}

pub const CASES: &[&str] = &[
    "dense",
    "conv_h",
    "maxpool_h",
    "avgpool_h",
    "upsample_w",
    "concat_channels",
    "slice_channels",
    "reshape",
    "relu",
    "softplus",
    "sigmoid",
    "abs",
    "square",
    "ln",
    "add",
    "sub",
    "mul",
    "div",
    "add_scalar",
    "scale",
    "sum",
    "nll floor",
    "l1",
    "depth l1",
    "distance-aware floor",
    "initial total",
    "refine total",
    "cphc-head-nll",
];

/// Runs every case on [`INSTANCES_PER_CASE`] instances drawn from `seed`.
pub fn run_suite(seed: u64) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(CASES.len());
    for &name in CASES {
        let mut stats = CheckStats::default();
        for _ in 0..INSTANCES_PER_CASE {
            let inst = make_case(name, &mut rng);
            stats.absorb(check(&inst.inputs, &inst.frozen, MAX_COORDS, &mut rng, inst.build)?);
        }
        cases.push(CaseReport {
            name,
            instances: INSTANCES_PER_CASE,
            stats,
        });
    }
    Ok(SuiteReport { cases })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_a_few_seeds() {
        for seed in [0, 7] {
            let r = run_suite(seed).unwrap();
            assert!(r.passes(), "seed {seed}\n{}", r.to_table());
            assert!(r.instances() >= 100);
        }
    }

    #[test]
    fn detached_path_is_caught() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = uniform(&mut rng, &[6], 0.5, 1.5);
        // The squared term is re-entered as a fresh leaf, so the tape misses its gradient.
        let stats = check(&[x], &[], 6, &mut rng, |g, v| {
            let sq = g.square(v[0]);
            let detached = g.input(g.value(sq).clone());
            let a = g.sum(v[0]);
            let b = g.sum(detached);
            g.add(a, b)
        })
        .unwrap();
        assert!(!stats.passes(REL_TOLERANCE));
        assert!(stats.max_deviation > 0.1);
    }
}
