//! Command-line front end. Exit codes: 0 success, 1 domain error, 2 usage error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::augment::{
    flip_image, flip_layout, rotate_image, rotate_layout, stretch_image, stretch_layout, Panorama, Sampling,
    StretchMode, StretchParams, StretchSampler, DEFAULT_MAX_STRETCH,
};
use crate::error::{Error, Result};
use crate::eval::{self, EvalAccumulator, DEFAULT_IOU_CELL, NUM_BINS};
use crate::layout::{load_layout_file, save_layout_file, CameraModel, LayoutFile, DEFAULT_CAMERA_HEIGHT};
use crate::merge::{merge_with_depth, DistanceSource, MergeConfig};
use crate::toy_train::{self, NoiseModel, Stage, SyntheticRoomSpec, ToyModelConfig, TrainConfig};

#[derive(Debug, Parser)]
#[command(name = "panolayout", version, about = "Panoramic room-layout geometry, losses, merging and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance-binned depth error and 2D IoU of predictions against ground truth.
    Eval(EvalArgs),
    /// Uncertainty-guided merge of an initial and a refinement prediction.
    Merge(MergeArgs),
    /// Stretch, flip or rotate a layout (and optionally its panorama).
    Augment(AugmentArgs),
    /// Finite-difference check of every gradient rule and loss.
    Gradcheck(GradcheckArgs),
    /// Area error caused by shifting the floor boundary by a few pixels.
    PerturbStudy(PerturbArgs),
    /// Histogram of ground-truth wall distances in 1 m bins.
    Histogram(HistogramArgs),
    /// Train the toy model on synthetic rooms.
    ToyTrain(ToyTrainArgs),
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth layout file or directory of `*.json` files.
    #[arg(long)]
    pub gt: PathBuf,
    /// Prediction file or directory with the same file names.
    #[arg(long)]
    pub pred: PathBuf,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Raster pitch for IoU, meters.
    #[arg(long, default_value_t = DEFAULT_IOU_CELL)]
    pub cell: f64,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DistanceArg {
    /// Projection of the initial floor boundary.
    Initial,
    /// The `depth_m` array of the initial prediction file.
    Depth,
}

#[derive(Debug, Args)]
pub struct MergeArgs {
    /// Initial-stage prediction with `sigma_rows`.
    #[arg(long)]
    pub initial: PathBuf,
    /// Refinement-stage prediction.
    #[arg(long)]
    pub refine: PathBuf,
    #[arg(long = "u-thresh", default_value_t = 0.2)]
    pub u_thresh: f64,
    #[arg(long = "d-gate", default_value_t = 5.0)]
    pub d_gate: f64,
    #[arg(long, value_enum, default_value = "initial")]
    pub distance: DistanceArg,
    /// Output path; the merged layout is printed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Initial,
    Refine,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "refine")]
    pub mode: ModeArg,
    #[arg(long, default_value_t = DEFAULT_MAX_STRETCH)]
    pub max_stretch: f64,
    /// Fixed stretch factors instead of sampled ones.
    #[arg(long, requires = "kz")]
    pub kx: Option<f64>,
    #[arg(long, requires = "kx")]
    pub kz: Option<f64>,
    #[arg(long)]
    pub flip: bool,
    /// Circular column shift applied last.
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    pub rotate: i64,
    /// Panorama PNG to transform alongside the layout.
    #[arg(long, requires = "image_out")]
    pub image: Option<PathBuf>,
    #[arg(long, requires = "image")]
    pub image_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Vertical boundary shift in pixels; positive moves rows away from the horizon.
    #[arg(long, default_value_t = 3.0, allow_hyphen_values = true)]
    pub shift: f64,
    /// Layout to perturb; square rooms are generated when omitted.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Half-extents of the generated square rooms, meters.
    #[arg(long = "half-extent", default_values_t = [1.5, 4.0])]
    pub half_extents: Vec<f64>,
    /// Panorama height of the generated rooms.
    #[arg(long, default_value_t = 512)]
    pub height: usize,
    #[arg(long, default_value_t = DEFAULT_CAMERA_HEIGHT)]
    pub camera_height: f64,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    /// Layout file or directory of `*.json` files.
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = NUM_BINS)]
    pub bins: usize,
    /// CSV output; printed when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ToyTrainArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "initial")]
    pub stage: ModeArg,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = toy_train::DEFAULT_LR)]
    pub lr: f64,
    #[arg(long, default_value_t = 8)]
    pub rooms: usize,
    /// Panorama height of the synthetic rooms.
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    /// Standard deviation of descriptor noise, in raw head units.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Only walls farther than this many meters receive noise.
    #[arg(long)]
    pub noise_gate: Option<f64>,
    /// Loss trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Checkpoint stem; writes `<stem>.bin` and `<stem>.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Runs a parsed command and returns its standard output.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Eval(a) => cmd_eval(&a),
        Command::Merge(a) => cmd_merge(&a),
        Command::Augment(a) => cmd_augment(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::PerturbStudy(a) => cmd_perturb(&a),
        Command::Histogram(a) => cmd_histogram(&a),
        Command::ToyTrain(a) => cmd_toy_train(&a),
    }
}

/// `(name, path)` pairs for a file or the `*.json` files of a directory, sorted by name.
fn layout_files(path: &Path) -> Result<Vec<(String, PathBuf)>> {
    let stem = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if !path.is_dir() {
        return Ok(vec![(stem(path), path.to_path_buf())]);
    }
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.extension().is_some_and(|x| x == "json") && p.is_file() {
            files.push((stem(&p), p));
        }
    }
    files.sort();
    Ok(files)
}

fn same_camera(a: &CameraModel, b: &CameraModel, what: &str) -> Result<()> {
    if a != b {
        return Err(Error::Domain(format!("{what}: camera models differ ({a:?} vs {b:?})")));
    }
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> Result<String> {
    if !(a.cell > 0.0) {
        return Err(Error::Domain(format!("--cell must be positive, got {}", a.cell)));
    }
    let gts = layout_files(&a.gt)?;
    let pairs: Vec<(String, PathBuf, PathBuf)> = if a.gt.is_dir() {
        gts.into_iter()
            .map(|(name, gt)| {
                let pred = a.pred.join(gt.file_name().expect("directory entry"));
                if pred.is_file() {
                    Ok((name, gt, pred))
                } else {
                    Err(Error::Domain(format!("no prediction {} for {}", pred.display(), gt.display())))
                }
            })
            .collect::<Result<_>>()?
    } else {
        gts.into_iter().map(|(n, g)| (n, g, a.pred.clone())).collect()
    };
    if pairs.is_empty() {
        return Err(Error::Domain(format!("no layout files under {}", a.gt.display())));
    }
    let evaluate = || -> Result<EvalAccumulator> {
        pairs
            .par_iter()
            .map(|(name, gt, pred)| {
                let g = load_layout_file(gt)?;
                let p = load_layout_file(pred)?;
                same_camera(&g.camera, &p.camera, name)?;
                let r = eval::evaluate_panorama(name, &g.camera, p.layout.floor_rows(), g.layout.floor_rows(), a.cell)?;
                let mut acc = EvalAccumulator::new();
                acc.push(r);
                Ok(acc)
            })
            .try_reduce(EvalAccumulator::new, |x, y| Ok(x.merge(y)))
    };
    let acc = match a.workers {
        Some(0) => return Err(Error::Domain("--workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Domain(format!("cannot start {n} workers: {e}")))?
            .install(evaluate)?,
        None => evaluate()?,
    };
    let report = acc.finish()?;
    if let Some(out) = &a.out {
        std::fs::write(out, report.to_json()).map_err(|e| Error::io(out, e))?;
    }
    Ok(report.to_table())
}

fn cmd_merge(a: &MergeArgs) -> Result<String> {
    let source = match a.distance {
        DistanceArg::Initial => DistanceSource::InitialBoundary,
        DistanceArg::Depth => DistanceSource::DepthHead,
    };
    let cfg = MergeConfig::new(a.u_thresh, a.d_gate, source)?;
    let initial = load_layout_file(&a.initial)?;
    let refine = load_layout_file(&a.refine)?;
    same_camera(&initial.camera, &refine.camera, "merge")?;
    let pred = initial.boundary_prediction()?;
    let merged = merge_with_depth(
        &initial.camera,
        &pred,
        refine.layout.floor_rows(),
        initial.depth_m.as_deref(),
        &cfg,
    )?;
    let taken = merged
        .iter()
        .zip(pred.mu())
        .filter(|(m, i)| m != i)
        .count();
    let layout = initial.layout.with_floor_rows(&initial.camera, merged)?;
    let file = LayoutFile::new(initial.camera, layout);
    match &a.out {
        Some(out) => {
            save_layout_file(&file, out)?;
            Ok(format!(
                "merged {taken} of {} columns from the refinement into {}\n",
                file.camera.width(),
                out.display()
            ))
        }
        None => Ok(crate::layout::layout_json(&file)),
    }
}

fn cmd_augment(a: &AugmentArgs) -> Result<String> {
    let file = load_layout_file(&a.input)?;
    let model = file.camera;
    let mode = match a.mode {
        ModeArg::Initial => StretchMode::Initial,
        ModeArg::Refine => StretchMode::Refine,
    };
    let p = match (a.kx, a.kz) {
        (Some(kx), Some(kz)) => StretchParams::for_mode(mode, a.max_stretch, kx, kz)?,
        _ => StretchSampler::new(mode, a.max_stretch, a.seed)?.sample(),
    };
    let mut layout = stretch_layout(&model, &file.layout, p)?;
    if a.flip {
        layout = flip_layout(&model, &layout)?;
    }
    layout = rotate_layout(&model, &layout, a.rotate)?;
    save_layout_file(&LayoutFile::new(model, layout), &a.out)?;
    if let (Some(src), Some(dst)) = (&a.image, &a.image_out) {
        let image = Panorama::load_png(src)?;
        if (image.width(), image.height()) != (model.width(), model.height()) {
            return Err(Error::Domain(format!(
                "panorama is {}x{} but the layout camera is {}x{}",
                image.width(),
                image.height(),
                model.width(),
                model.height()
            )));
        }
        let mut out = stretch_image(&image, p, Sampling::Bilinear);
        if a.flip {
            out = flip_image(&out);
        }
        out = rotate_image(&out, a.rotate);
        out.save_png(dst)?;
    }
    Ok(format!("kx = {:.6}, kz = {:.6}\n", p.kx, p.kz))
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<String> {
    let report = crate::gradcheck_suite::run_suite(a.seed)?;
    let table = report.to_table();
    if !report.passes() {
        return Err(Error::Invariant(format!(
            "gradient check exceeded the relative tolerance\n{table}"
        )));
    }
    Ok(format!(
        "{table}{} instances, max relative deviation {:.3e}\n",
        report.instances(),
        report.max_deviation()
    ))
}

fn cmd_perturb(a: &PerturbArgs) -> Result<String> {
    let mut rooms: Vec<(String, CameraModel, crate::layout::Layout)> = Vec::new();
    if let Some(path) = &a.layout {
        let f = load_layout_file(path)?;
        rooms.push((path.display().to_string(), f.camera, f.layout));
    } else {
        for &h in &a.half_extents {
            let mut spec = SyntheticRoomSpec::square(h, a.height, 0);
            spec.camera_height = a.camera_height;
            spec.room_height = a.camera_height + 1.2;
            let (camera, layout) = toy_train::room_layout(&spec)?;
            rooms.push((format!("square {h} m"), camera, layout));
        }
    }
    let mut s = format!(
        "{:<20} {:>12} {:>14} {:>12} {:>12}\n",
        "room", "area (m2)", "shifted (m2)", "error (m2)", "image err"
    );
    for (name, camera, layout) in &rooms {
        let r = eval::perturbation_study(camera, layout, a.shift)?;
        s.push_str(&format!(
            "{:<20} {:>12.3} {:>14.3} {:>12.3} {:>11.3}%\n",
            name,
            r.area_gt,
            r.area_perturbed,
            r.area_error,
            100.0 * r.relative_image_error
        ));
    }
    Ok(s)
}

fn cmd_histogram(a: &HistogramArgs) -> Result<String> {
    let files = layout_files(&a.gt)?
        .into_iter()
        .map(|(_, p)| load_layout_file(&p))
        .collect::<Result<Vec<_>>>()?;
    let counts = eval::depth_histogram(files.iter().map(|f| (&f.camera, &f.layout)), a.bins)?;
    let csv = eval::histogram_csv(&counts);
    match &a.out {
        Some(out) => {
            std::fs::write(out, &csv).map_err(|e| Error::io(out, e))?;
            Ok(format!("{} columns from {} layouts written to {}\n", counts.iter().sum::<u64>(), files.len(), out.display()))
        }
        None => Ok(csv),
    }
}

fn cmd_toy_train(a: &ToyTrainArgs) -> Result<String> {
    let noise = match (a.noise, a.noise_gate) {
        (0.0, _) => NoiseModel::None,
        (level, None) => NoiseModel::Uniform { level },
        (level, Some(gate_m)) => NoiseModel::DistanceGated { level, gate_m },
    };
    let stage = match a.stage {
        ModeArg::Initial => Stage::Initial,
        ModeArg::Refine => Stage::Refine,
    };
    let model = ToyModelConfig::new(a.height);
    let data = toy_train::toy_dataset(a.rooms, &model, noise, a.seed)?;
    let outcome = toy_train::train(&data, &TrainConfig::new(stage, a.epochs, a.lr, a.seed))?;
    if let Some(p) = &a.trace {
        toy_train::save_trace(&outcome.trace, p)?;
    }
    if let Some(stem) = &a.checkpoint {
        outcome.params.save_checkpoint(stem)?;
    }
    let first = outcome.trace.first().copied().unwrap_or(f64::NAN);
    let last = outcome.trace.last().copied().unwrap_or(f64::NAN);
    let err = toy_train::mean_floor_error(&outcome.params, &data)?;
    let mut s = format!(
        "epochs {}  loss {first:.4} -> {last:.4}  mean |mu - y| {err:.4} px\n",
        a.epochs
    );
    if !matches!(noise, NoiseModel::None) {
        if let Ok((noisy, clean)) = toy_train::sigma_by_noise(&outcome.params, &data) {
            s.push_str(&format!("mean sigma: noisy columns {noisy:.4} px, clean columns {clean:.4} px\n"));
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_with_two() {
        assert_eq!(run(["panolayout"]), 2);
        assert_eq!(run(["panolayout", "gradcheck"]), 2);
        assert_eq!(run(["panolayout", "frobnicate"]), 2);
    }

    #[test]
    fn domain_errors_exit_with_one() {
        assert_eq!(run(["panolayout", "eval", "--gt", "/nonexistent.json", "--pred", "/nonexistent.json"]), 1);
        assert_eq!(run(["panolayout", "perturb-study", "--shift", "1000"]), 1);
    }

    #[test]
    fn gradcheck_succeeds() {
        assert_eq!(run(["panolayout", "gradcheck", "--seed", "7"]), 0);
    }
}
