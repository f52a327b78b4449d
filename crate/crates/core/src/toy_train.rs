//! Desk-scale training harness: synthetic rooms, pseudo-features shaped like
//! the four backbone blocks, the height-compression block, the column head
//! and full-batch gradient descent on either stage's total loss.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::augment::{stretch_layout, StretchMode, StretchSampler, DEFAULT_MAX_STRETCH};
use crate::error::{Error, Result};
use crate::layout::{CameraModel, Corner, Layout};
use crate::losses::{self, InitialTerms, LossWeights, RefineTerms};
use crate::nn::{column_head, cphc, CphcConfig, Graph, HeadConfig, ParamStore, Tensor, Var};
use crate::polygon::TopDownPolygon;
use crate::projection::{boundary_ranges, ceiling_row_for_range, floor_row_for_range};

/// Seed of the fixed descriptor-to-channel mixing shared by every room.
pub const ENCODER_SEED: u64 = 0x00C0_FFEE;

const DESCRIPTORS: usize = 5;
const REFERENCE_RANGE: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoomShape {
    Square,
    Rectangle,
    /// Rectangle with the quadrant `x > notch[0], z > notch[1]` removed.
    LShape { notch: [f64; 2] },
}

/// Per-column perturbation of the geometric descriptors, in raw head units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    None,
    Uniform { level: f64 },
    /// Noise only on columns whose wall is farther than `gate_m`.
    DistanceGated { level: f64, gate_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRoomSpec {
    pub shape: RoomShape,
    /// Half-extents along x and z; a square uses the first.
    pub half_extents: [f64; 2],
    pub camera_offset: [f64; 2],
    pub camera_height: f64,
    /// Floor-to-ceiling height.
    pub room_height: f64,
    /// Panorama height; the width is twice this.
    pub height: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl SyntheticRoomSpec {
    pub fn square(half: f64, height: usize, seed: u64) -> Self {
        Self {
            shape: RoomShape::Square,
            half_extents: [half, half],
            camera_offset: [0.0, 0.0],
            camera_height: crate::layout::DEFAULT_CAMERA_HEIGHT,
            room_height: 2.8,
            height,
            noise: NoiseModel::None,
            seed,
        }
    }

    fn extents(&self) -> (f64, f64) {
        match self.shape {
            RoomShape::Square => (self.half_extents[0], self.half_extents[0]),
            _ => (self.half_extents[0], self.half_extents[1]),
        }
    }

    /// Counter-clockwise footprint in camera-independent room coordinates.
    pub fn footprint(&self) -> Result<TopDownPolygon> {
        let (hx, hz) = self.extents();
        if !(hx > 0.0 && hz > 0.0 && hx.is_finite() && hz.is_finite()) {
            return Err(Error::Invariant(format!("half-extents must be positive, got {hx}, {hz}")));
        }
        if !(self.room_height > self.camera_height && self.camera_height > 0.0) {
            return Err(Error::Invariant(format!(
                "camera height {} must lie between the floor and the ceiling at {}",
                self.camera_height, self.room_height
            )));
        }
        let v = match self.shape {
            RoomShape::Square | RoomShape::Rectangle => vec![[-hx, -hz], [hx, -hz], [hx, hz], [-hx, hz]],
            RoomShape::LShape { notch: [nx, nz] } => {
                if !(nx > -hx && nx < hx && nz > -hz && nz < hz) {
                    return Err(Error::Invariant(format!(
                        "notch corner ({nx}, {nz}) lies outside the footprint"
                    )));
                }
                vec![[-hx, -hz], [hx, -hz], [hx, nz], [nx, nz], [nx, hz], [-hx, hz]]
            }
        };
        TopDownPolygon::new(v)
    }
}

/// Distance from `origin` along `dir` to the first footprint edge.
fn ray_cast(poly: &TopDownPolygon, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
    let v = poly.vertices();
    let n = v.len();
    let mut best: Option<f64> = None;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        let e = [b[0] - a[0], b[1] - a[1]];
        let denom = dir[0] * e[1] - dir[1] * e[0];
        if denom.abs() < 1e-15 {
            continue;
        }
        let w = [a[0] - origin[0], a[1] - origin[1]];
        let t = (w[0] * e[1] - w[1] * e[0]) / denom;
        let s = (w[0] * dir[1] - w[1] * dir[0]) / denom;
        if t > 1e-12 && (-1e-12..=1.0 + 1e-12).contains(&s) {
            best = Some(best.map_or(t, |x: f64| x.min(t)));
        }
    }
    best
}

fn contains(poly: &TopDownPolygon, p: [f64; 2]) -> bool {
    let v = poly.vertices();
    let n = v.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Ground-truth layout of the room seen from its camera.
pub fn room_layout(spec: &SyntheticRoomSpec) -> Result<(CameraModel, Layout)> {
    let poly = spec.footprint()?;
    let cam = spec.camera_offset;
    if !contains(&poly, cam) {
        return Err(Error::Domain(format!(
            "camera at ({}, {}) is outside the room footprint",
            cam[0], cam[1]
        )));
    }
    let model = CameraModel::new(2 * spec.height, spec.height, spec.camera_height)?;
    let above = spec.room_height - spec.camera_height;
    let w = model.width();
    let mut floor = Vec::with_capacity(w);
    let mut ceiling = Vec::with_capacity(w);
    for i in 0..w {
        let u = model.column_azimuth(i as f64);
        let rho = ray_cast(&poly, cam, [u.cos(), u.sin()])
            .ok_or_else(|| Error::Domain(format!("column {i} sees no wall")))?;
        floor.push(floor_row_for_range(&model, rho)?);
        ceiling.push(ceiling_row_for_range(&model, rho, above)?);
    }

    // Visible vertices are splatted linearly onto their two nearest columns.
    let mut strength = vec![0.0f64; w];
    for p in poly.vertices() {
        let (dx, dz) = (p[0] - cam[0], p[1] - cam[1]);
        let dist = dx.hypot(dz);
        let visible = ray_cast(&poly, cam, [dx / dist, dz / dist]).is_some_and(|t| t > dist - 1e-6);
        if !visible {
            continue;
        }
        let u = dz.atan2(dx);
        let c = (u + std::f64::consts::PI) * w as f64 / (2.0 * std::f64::consts::PI) - 0.5;
        let c0 = c.floor();
        let frac = c - c0;
        let i0 = (c0 as i64).rem_euclid(w as i64) as usize;
        strength[i0] = (strength[i0] + 1.0 - frac).min(1.0);
        strength[(i0 + 1) % w] = (strength[(i0 + 1) % w] + frac).min(1.0);
    }
    let corners = strength
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(col, &s)| Corner { col, strength: s })
        .collect();
    let layout = Layout::new(&model, floor, ceiling, corners)?;
    Ok((model, layout))
}

/// Architecture of the toy model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModelConfig {
    pub cphc: CphcConfig,
    pub hidden: usize,
    /// Panorama height; the width is twice this and equals the CPHC width.
    pub height: usize,
    pub camera_height: f64,
    pub room_height: f64,
}

impl ToyModelConfig {
    pub fn new(height: usize) -> Self {
        Self {
            cphc: CphcConfig::scaled([4, 8, 16, 32], 16, 2 * height),
            hidden: 32,
            height,
            camera_height: crate::layout::DEFAULT_CAMERA_HEIGHT,
            room_height: 2.8,
        }
    }

    pub fn camera(&self) -> Result<CameraModel> {
        CameraModel::new(2 * self.height, self.height, self.camera_height)
    }

    pub fn head(&self) -> Result<HeadConfig> {
        let model = self.camera()?;
        Ok(HeadConfig {
            in_channels: self.cphc.out_channels(),
            hidden: self.hidden,
            floor_offset: floor_row_for_range(&model, REFERENCE_RANGE)?,
            ceiling_offset: ceiling_row_for_range(&model, REFERENCE_RANGE, self.room_height - self.camera_height)?,
            row_scale: self.height as f64 / 8.0,
            sigma_scale: self.height as f64 / 32.0,
        })
    }

    pub fn param_specs(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut specs = self.cphc.param_specs();
        specs.extend(self.head()?.param_specs());
        Ok(specs)
    }
}

/// Deterministic encoding of a layout into the four CPHC block inputs.
///
/// Every column has five descriptors: normalized floor row, normalized
/// ceiling row, whole-meter range over 10, corner strength and a constant.
/// Each block mixes them into its channels with a fixed random matrix and
/// adds a bump at the boundary's height. The column noise enters the two
/// row descriptors and the bump position.
#[derive(Debug, Clone)]
pub struct FeatureEncoder {
    mixes: Vec<Tensor>,
    head: HeadConfig,
    cfg: CphcConfig,
}

impl FeatureEncoder {
    pub fn new(model_cfg: &ToyModelConfig) -> Result<Self> {
        model_cfg.cphc.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(ENCODER_SEED);
        let mixes = model_cfg
            .cphc
            .branches
            .iter()
            .map(|b| {
                let data = (0..b.channels * DESCRIPTORS).map(|_| rng.random_range(-1.0..1.0)).collect();
                Tensor::new(vec![b.channels, DESCRIPTORS], data).expect("mix shape")
            })
            .collect();
        Ok(Self {
            mixes,
            head: model_cfg.head()?,
            cfg: model_cfg.cphc.clone(),
        })
    }

    /// `noise` holds independent (floor, ceiling) perturbations per column.
    pub fn encode(&self, model: &CameraModel, layout: &Layout, noise: &[[f64; 2]]) -> Result<Vec<Tensor>> {
        let w = model.width();
        crate::layout::check_len("noise", w, noise.len())?;
        if self.cfg.out_width != w {
            return Err(Error::shape("encode", format!("width {}", self.cfg.out_width), format!("{w}")));
        }
        let ranges = boundary_ranges(model, layout.floor_rows())?;
        let corner = layout.corner_strengths();
        let h = &self.head;
        let desc: Vec<[f64; DESCRIPTORS]> = (0..w)
            .map(|i| {
                [
                    (layout.floor_rows()[i] - h.floor_offset) / h.row_scale + noise[i][0],
                    (layout.ceiling_rows()[i] - h.ceiling_offset) / h.row_scale + noise[i][1],
                    ranges[i].floor() / 10.0,
                    corner[i],
                    1.0,
                ]
            })
            .collect();
        let horizon = model.horizon_row();
        let half = model.height() as f64 / 2.0;
        let mut out = Vec::with_capacity(self.cfg.branches.len());
        for (b, mix) in self.cfg.branches.iter().zip(&self.mixes) {
            let mut data = vec![0.0; b.channels * b.height * w];
            for (i, d) in desc.iter().enumerate() {
                let row = layout.floor_rows()[i] + noise[i][0] * h.row_scale;
                let centre = ((row - horizon) / half).clamp(0.0, 1.0) * (b.height - 1) as f64;
                for c in 0..b.channels {
                    let base: f64 = (0..DESCRIPTORS).map(|k| mix.data()[c * DESCRIPTORS + k] * d[k]).sum();
                    for r in 0..b.height {
                        let bump = 0.25 * (-(r as f64 - centre).powi(2)).exp();
                        data[(c * b.height + r) * w + i] = base + bump;
                    }
                }
            }
            out.push(Tensor::new(vec![b.channels, b.height, w], data)?);
        }
        Ok(out)
    }
}

/// Column noise drawn for `noise` given the wall ranges.
fn column_noise(noise: NoiseModel, ranges: &[f64], seed: u64) -> Result<(Vec<[f64; 2]>, Vec<bool>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (level, gate) = match noise {
        NoiseModel::None => return Ok((vec![[0.0; 2]; ranges.len()], vec![false; ranges.len()])),
        NoiseModel::Uniform { level } => (level, f64::NEG_INFINITY),
        NoiseModel::DistanceGated { level, gate_m } => (level, gate_m),
    };
    let normal = Normal::new(0.0, level).map_err(|e| Error::Invariant(format!("noise level {level}: {e}")))?;
    Ok(ranges
        .iter()
        .map(|&rho| {
            let x = [normal.sample(&mut rng), normal.sample(&mut rng)];
            if rho > gate {
                (x, true)
            } else {
                ([0.0; 2], false)
            }
        })
        .unzip())
}

/// A room with its targets and encoded features.
#[derive(Debug, Clone)]
pub struct SyntheticRoom {
    pub spec: SyntheticRoomSpec,
    pub camera: CameraModel,
    pub layout: Layout,
    /// Wall range per column, meters.
    pub depth: Vec<f64>,
    /// Columns whose descriptors carry noise.
    pub noisy: Vec<bool>,
    pub features: Vec<Tensor>,
}

impl SyntheticRoom {
    fn from_layout(
        spec: SyntheticRoomSpec,
        camera: CameraModel,
        layout: Layout,
        encoder: &FeatureEncoder,
        noise_seed: u64,
    ) -> Result<Self> {
        let depth = boundary_ranges(&camera, layout.floor_rows())?;
        let (noise, noisy) = column_noise(spec.noise, &depth, noise_seed)?;
        let features = encoder.encode(&camera, &layout, &noise)?;
        Ok(Self {
            spec,
            camera,
            layout,
            depth,
            noisy,
            features,
        })
    }
}

pub fn generate_room(spec: &SyntheticRoomSpec, encoder: &FeatureEncoder) -> Result<SyntheticRoom> {
    let (camera, layout) = room_layout(spec)?;
    SyntheticRoom::from_layout(spec.clone(), camera, layout, encoder, spec.seed)
}

#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub model: ToyModelConfig,
    pub encoder: FeatureEncoder,
    pub rooms: Vec<SyntheticRoom>,
}

/// `n` varied rooms cycling square, rectangle and L-shape.
pub fn toy_dataset(n: usize, model: &ToyModelConfig, noise: NoiseModel, seed: u64) -> Result<ToyDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let specs: Vec<SyntheticRoomSpec> = (0..n)
        .map(|i| {
            let hx: f64 = rng.random_range(1.5..3.5);
            let hz: f64 = rng.random_range(1.5..3.5);
            let shape = match i % 3 {
                0 => RoomShape::Square,
                1 => RoomShape::Rectangle,
                _ => RoomShape::LShape {
                    notch: [0.4 * hx, 0.4 * hz],
                },
            };
            let offset = [rng.random_range(-0.2..0.2) * hx, rng.random_range(-0.2..0.2) * hz];
            SyntheticRoomSpec {
                shape,
                half_extents: [hx, hz],
                camera_offset: offset,
                camera_height: model.camera_height,
                room_height: model.room_height,
                height: model.height,
                noise,
                seed: rng.random(),
            }
        })
        .collect();
    let encoder = FeatureEncoder::new(model)?;
    let rooms = specs
        .par_iter()
        .map(|s| generate_room(s, &encoder))
        .collect::<Result<Vec<_>>>()?;
    Ok(ToyDataset {
        model: model.clone(),
        encoder,
        rooms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Initial,
    Refine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub stage: Stage,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Global gradient-norm cap applied before each step.
    pub clip_norm: Option<f64>,
    pub weights: LossWeights,
    pub max_stretch: f64,
    pub batch_size: usize,
    /// Cosine decay of the step size from `lr` towards zero over the run.
    pub cosine_decay: bool,
}

impl TrainConfig {
    pub fn new(stage: Stage, epochs: usize, lr: f64, seed: u64) -> Self {
        Self {
            stage,
            epochs,
            lr,
            seed,
            clip_norm: Some(DEFAULT_CLIP_NORM),
            weights: LossWeights::default(),
            max_stretch: DEFAULT_MAX_STRETCH,
            batch_size: 1,
            cosine_decay: true,
        }
    }
}

pub const DEFAULT_CLIP_NORM: f64 = 10.0;
pub const DEFAULT_LR: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamStore,
    /// Mean per-room loss at the start of each epoch, then once more at the end.
    pub trace: Vec<f64>,
}

/// Per-column outputs of the toy model for one room.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub depth: Vec<f64>,
    pub ceiling: Vec<f64>,
    pub corner: Vec<f64>,
}

struct Forward {
    loss: Var,
    outputs: crate::nn::HeadOutputs,
}

fn forward(
    g: &mut Graph,
    bound: &crate::nn::BoundParams,
    model: &ToyModelConfig,
    head: &HeadConfig,
    room: &SyntheticRoom,
    stage: Stage,
    weights: LossWeights,
) -> Result<Forward> {
    let feats: Vec<Var> = room.features.iter().map(|t| g.input(t.clone())).collect();
    let compressed = cphc(g, &feats, &model.cphc, bound)?;
    let out = column_head(g, compressed, head, bound)?;
    let y = g.input(Tensor::vector(room.layout.floor_rows().to_vec()));
    let c = g.input(Tensor::vector(room.layout.ceiling_rows().to_vec()));
    let d = g.input(Tensor::vector(room.depth.clone()));
    let k = g.input(Tensor::vector(room.layout.corner_strengths()));
    let ceiling = losses::l1(g, out.ceiling, c)?;
    let depth = losses::depth_l1(g, out.depth, d)?;
    let corner = losses::l1(g, out.corner, k)?;
    let loss = match stage {
        Stage::Initial => {
            let floor_nll = losses::nll_floor(g, out.mu, out.sigma, y)?;
            losses::total_initial(
                g,
                InitialTerms {
                    floor_nll,
                    ceiling,
                    depth,
                    corner,
                },
                weights,
            )?
        }
        Stage::Refine => {
            let floor = losses::distance_aware_floor(g, out.mu, y, d)?;
            losses::total_refine(
                g,
                RefineTerms {
                    floor,
                    depth,
                    corner,
                    ceiling,
                },
                weights,
            )?
        }
    };
    Ok(Forward { loss, outputs: out })
}

pub fn predict(params: &ParamStore, model: &ToyModelConfig, room: &SyntheticRoom) -> Result<Prediction> {
    let head = model.head()?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let f = forward(&mut g, &bound, model, &head, room, Stage::Initial, LossWeights::default())?;
    let o = f.outputs;
    let take = |v: Var| g.value(v).data().to_vec();
    Ok(Prediction {
        mu: take(o.mu),
        sigma: take(o.sigma),
        depth: take(o.depth),
        ceiling: take(o.ceiling),
        corner: take(o.corner),
    })
}

/// Mean loss over `rooms` and the matching mean gradient.
fn batch_gradient(
    params: &ParamStore,
    model: &ToyModelConfig,
    head: &HeadConfig,
    rooms: &[&SyntheticRoom],
    cfg: &TrainConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = rooms.len() as f64;
    let mut total = 0.0;
    let mut acc: Option<Vec<Vec<f64>>> = None;
    for room in rooms {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let f = forward(&mut g, &bound, model, head, room, cfg.stage, cfg.weights)?;
        total += g.scalar(f.loss);
        let grads = params.collect_grads(&bound, &g.backward(f.loss)?);
        match acc.as_mut() {
            None => acc = Some(grads),
            Some(a) => {
                for (x, y) in a.iter_mut().zip(&grads) {
                    for (p, q) in x.iter_mut().zip(y) {
                        *p += q;
                    }
                }
            }
        }
    }
    let mut grads = acc.expect("nonempty batch");
    grads.iter_mut().flatten().for_each(|v| *v /= n);
    Ok((total / n, grads))
}

/// Mean stage loss over the unaugmented rooms.
pub fn mean_loss(params: &ParamStore, data: &ToyDataset, stage: Stage, weights: LossWeights) -> Result<f64> {
    let head = data.model.head()?;
    let mut total = 0.0;
    for room in &data.rooms {
        let mut g = Graph::new();
        let bound = params.bind(&mut g);
        let f = forward(&mut g, &bound, &data.model, &head, room, stage, weights)?;
        total += g.scalar(f.loss);
    }
    Ok(total / data.rooms.len() as f64)
}

/// Stretched copies of the rooms with freshly drawn column noise.
fn augmented(data: &ToyDataset, sampler: &mut StretchSampler, epoch: usize) -> Result<Vec<SyntheticRoom>> {
    data.rooms
        .iter()
        .map(|r| {
            let layout = stretch_layout(&r.camera, &r.layout, sampler.sample())?;
            let seed = r.spec.seed ^ (epoch as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            SyntheticRoom::from_layout(r.spec.clone(), r.camera, layout, &data.encoder, seed)
        })
        .collect()
}

fn diverged(epoch: usize, loss: f64, trace: Vec<f64>) -> Error {
    Error::Diverged { epoch, loss, trace }
}

/// Gradient descent on the stage total with mini-batches of `batch_size`
/// rooms in a seeded shuffled order.
///
/// The refinement stage trains on a fresh refinement-mode stretch of every
/// room each epoch. Trace entry `e` scores the parameters at the start of
/// epoch `e` on the unstretched rooms; the last entry scores the result.
pub fn train(data: &ToyDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.rooms.is_empty() {
        return Err(Error::Domain("training needs at least one room".into()));
    }
    if !(cfg.lr >= 0.0 && cfg.lr.is_finite()) {
        return Err(Error::Domain(format!("learning rate must be non-negative, got {}", cfg.lr)));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Domain("batch size must be positive".into()));
    }
    let head = data.model.head()?;
    let mut params = ParamStore::init_fan_in(&data.model.param_specs()?, cfg.seed);
    let mut sampler = StretchSampler::new(StretchMode::Refine, cfg.max_stretch, cfg.seed)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_0F0D);
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    for epoch in 0..cfg.epochs {
        let scored = mean_loss(&params, data, cfg.stage, cfg.weights)?;
        trace.push(scored);
        if !scored.is_finite() {
            return Err(diverged(epoch, scored, trace));
        }
        let batch;
        let rooms = match cfg.stage {
            Stage::Initial => &data.rooms,
            Stage::Refine => {
                batch = augmented(data, &mut sampler, epoch)?;
                &batch
            }
        };
        let lr = if cfg.cosine_decay {
            0.5 * cfg.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / cfg.epochs as f64).cos())
        } else {
            cfg.lr
        };
        let mut order: Vec<usize> = (0..rooms.len()).collect();
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(cfg.batch_size) {
            let picked: Vec<&SyntheticRoom> = chunk.iter().map(|&i| &rooms[i]).collect();
            let (loss, mut grads) = batch_gradient(&params, &data.model, &head, &picked, cfg)?;
            if !loss.is_finite() {
                return Err(diverged(epoch, loss, trace));
            }
            if let Some(cap) = cfg.clip_norm {
                let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cap {
                    grads.iter_mut().flatten().for_each(|g| *g *= cap / norm);
                }
            }
            params.apply_grads(&grads, lr)?;
            if params.iter().any(|(_, t)| t.data().iter().any(|v| !v.is_finite())) {
                return Err(diverged(epoch, f64::NAN, trace));
            }
        }
        log::debug!("epoch {epoch}: loss {scored:.6}");
    }
    let last = mean_loss(&params, data, cfg.stage, cfg.weights)?;
    trace.push(last);
    if !last.is_finite() {
        return Err(diverged(cfg.epochs, last, trace));
    }
    Ok(TrainOutcome { params, trace })
}

pub fn train_stage(stage: Stage, data: &ToyDataset, epochs: usize, lr: f64, seed: u64) -> Result<TrainOutcome> {
    train(data, &TrainConfig::new(stage, epochs, lr, seed))
}

/// Mean `|mu - y|` in pixels over every column of every room.
pub fn mean_floor_error(params: &ParamStore, data: &ToyDataset) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for room in &data.rooms {
        let p = predict(params, &data.model, room)?;
        for (m, y) in p.mu.iter().zip(room.layout.floor_rows()) {
            sum += (m - y).abs();
            n += 1;
        }
    }
    Ok(sum / n as f64)
}

/// Mean predicted sigma over noisy and over clean columns.
pub fn sigma_by_noise(params: &ParamStore, data: &ToyDataset) -> Result<(f64, f64)> {
    let (mut noisy, mut clean) = ((0.0, 0usize), (0.0, 0usize));
    for room in &data.rooms {
        let p = predict(params, &data.model, room)?;
        for (s, &is_noisy) in p.sigma.iter().zip(&room.noisy) {
            let slot = if is_noisy { &mut noisy } else { &mut clean };
            slot.0 += s;
            slot.1 += 1;
        }
    }
    if noisy.1 == 0 || clean.1 == 0 {
        return Err(Error::Domain("dataset needs both noisy and clean columns".into()));
    }
    Ok((noisy.0 / noisy.1 as f64, clean.0 / clean.1 as f64))
}

pub fn trace_csv(trace: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in trace.iter().enumerate() {
        let _ = writeln!(s, "{i},{l:.10e}");
    }
    s
}

pub fn save_trace(trace: &[f64], path: &Path) -> Result<()> {
    std::fs::write(path, trace_csv(trace)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ToyModelConfig {
        let mut m = ToyModelConfig::new(32);
        m.cphc = CphcConfig::scaled([2, 3, 4, 5], 4, 64);
        m.hidden = 8;
        m
    }

    #[test]
    fn centered_square_matches_closed_form_range() {
        let spec = SyntheticRoomSpec::square(2.0, 64, 1);
        let (model, layout) = room_layout(&spec).unwrap();
        let ranges = boundary_ranges(&model, layout.floor_rows()).unwrap();
        for (i, rho) in ranges.iter().enumerate() {
            let u = model.column_azimuth(i as f64);
            let expected = 2.0 / u.cos().abs().max(u.sin().abs());
            assert!((rho - expected).abs() < 1e-9, "column {i}: {rho} vs {expected}");
        }
        assert_eq!(layout.corners().iter().map(|c| c.strength).sum::<f64>().round(), 4.0);
    }

    #[test]
    fn camera_outside_is_rejected() {
        let mut spec = SyntheticRoomSpec::square(2.0, 64, 1);
        spec.camera_offset = [2.5, 0.0];
        assert!(matches!(room_layout(&spec), Err(Error::Domain(_))));
        let mut l = SyntheticRoomSpec::square(2.0, 64, 1);
        l.shape = RoomShape::LShape { notch: [0.5, 0.5] };
        l.half_extents = [2.0, 2.0];
        l.camera_offset = [1.0, 1.0];
        assert!(room_layout(&l).is_err());
    }

    #[test]
    fn notch_must_lie_inside() {
        let mut spec = SyntheticRoomSpec::square(2.0, 64, 1);
        spec.shape = RoomShape::LShape { notch: [3.0, 0.0] };
        assert!(spec.footprint().is_err());
    }

    #[test]
    fn l_shape_area() {
        let mut spec = SyntheticRoomSpec::square(2.0, 64, 1);
        spec.shape = RoomShape::LShape { notch: [1.0, 0.0] };
        spec.half_extents = [2.0, 2.0];
        assert!((spec.footprint().unwrap().area() - 14.0).abs() < 1e-12);
    }

    #[test]
    fn features_are_deterministic_and_shaped() {
        let m = small();
        let enc = FeatureEncoder::new(&m).unwrap();
        let mut spec = SyntheticRoomSpec::square(2.0, 32, 9);
        spec.noise = NoiseModel::Uniform { level: 0.1 };
        let a = generate_room(&spec, &enc).unwrap();
        let b = generate_room(&spec, &enc).unwrap();
        for (x, y) in a.features.iter().zip(&b.features) {
            assert_eq!(x, y);
        }
        let shapes: Vec<_> = a.features.iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(shapes, vec![vec![2, 8, 64], vec![3, 4, 64], vec![4, 2, 64], vec![5, 1, 64]]);
    }

    #[test]
    fn zero_learning_rate_keeps_loss_constant() {
        let m = small();
        let data = toy_dataset(2, &m, NoiseModel::None, 3).unwrap();
        let out = train_stage(Stage::Initial, &data, 1, 0.0, 5).unwrap();
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.trace[0], out.trace[1]);
        assert_eq!(out.params, ParamStore::init_fan_in(&m.param_specs().unwrap(), 5));
        let refine = train_stage(Stage::Refine, &data, 1, 0.0, 5).unwrap();
        assert_eq!(refine.trace[0], refine.trace[1]);
    }

    #[test]
    fn fixed_seed_gives_identical_traces() {
        let m = small();
        let data = toy_dataset(2, &m, NoiseModel::None, 3).unwrap();
        for stage in [Stage::Initial, Stage::Refine] {
            let a = train_stage(stage, &data, 5, DEFAULT_LR, 11).unwrap();
            let b = train_stage(stage, &data, 5, DEFAULT_LR, 11).unwrap();
            assert_eq!(a.trace, b.trace);
        }
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let m = small();
        let mut data = toy_dataset(1, &m, NoiseModel::None, 3).unwrap();
        data.rooms.clear();
        assert!(train_stage(Stage::Initial, &data, 1, 0.1, 0).is_err());
    }

    #[test]
    fn divergence_reports_trace() {
        let m = small();
        let data = toy_dataset(1, &m, NoiseModel::None, 3).unwrap();
        let mut cfg = TrainConfig::new(Stage::Refine, 50, 1e300, 0);
        cfg.clip_norm = None;
        match train(&data, &cfg) {
            Err(Error::Diverged { trace, .. }) => assert!(!trace.is_empty()),
            other => panic!("expected divergence, got {:?}", other.map(|o| o.trace)),
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let csv = trace_csv(&[2.0, 1.0]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("epoch,loss\n0,"));
    }
}
