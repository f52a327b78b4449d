use std::path::Path;
use std::process::{Command, Output};

use panolayout::layout::{load_layout_file, save_layout, save_layout_file, LayoutFile};
use panolayout::nn::ParamStore;
use panolayout::projection::floor_row_for_range;
use panolayout::toy_train::{room_layout, SyntheticRoomSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_panolayout"))
}

fn run(args: &[&std::ffi::OsStr]) -> Output {
    bin().args(args).output().expect("spawn panolayout")
}

fn os<S: AsRef<std::ffi::OsStr> + ?Sized>(s: &S) -> &std::ffi::OsStr {
    s.as_ref()
}

fn write_square(path: &Path, half: f64, height: usize) {
    let (m, l) = room_layout(&SyntheticRoomSpec::square(half, height, 0)).unwrap();
    save_layout(&m, &l, path).unwrap();
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&[os("no-such-command")]).status.code(), Some(2));
    assert_eq!(run(&[os("eval"), os("--gt")]).status.code(), Some(2));
    assert_eq!(run(&[os("gradcheck")]).status.code(), Some(2));
}

#[test]
fn domain_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"not\": \"a layout\"}").unwrap();
    let out = run(&[os("eval"), os("--gt"), bad.as_os_str(), os("--pred"), bad.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let missing = dir.path().join("missing.json");
    let out = run(&[os("histogram"), os("--gt"), missing.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn eval_directory_pairs_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let (gt, pred) = (dir.path().join("gt"), dir.path().join("pred"));
    std::fs::create_dir_all(&gt).unwrap();
    std::fs::create_dir_all(&pred).unwrap();
    for (name, half, off) in [("a", 2.0, 2.1), ("b", 3.5, 3.3)] {
        write_square(&gt.join(format!("{name}.json")), half, 128);
        write_square(&pred.join(format!("{name}.json")), off, 128);
    }
    let report = dir.path().join("r.json");
    let out = run(&[
        os("eval"),
        os("--gt"),
        gt.as_os_str(),
        os("--pred"),
        pred.as_os_str(),
        os("--out"),
        report.as_os_str(),
        os("--workers"),
        os("2"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let per = v["per_panorama"].as_array().unwrap();
    assert_eq!(per.len(), 2);
    let iou = v["iou2d"].as_f64().unwrap();
    assert!(iou > 0.5 && iou < 1.0, "{iou}");
    let mean = per.iter().map(|p| p["iou2d"].as_f64().unwrap()).sum::<f64>() / 2.0;
    assert!((iou - mean).abs() < 1e-12);
}

#[test]
fn merge_writes_layout_with_refined_columns() {
    let dir = tempfile::tempdir().unwrap();
    let (m, l) = room_layout(&SyntheticRoomSpec::square(4.0, 128, 0)).unwrap();
    let mut initial = LayoutFile::new(m, l.clone());
    // Wide sigma everywhere: far columns (beyond 5 m) become eligible.
    initial.sigma_rows = Some(vec![2.0; m.width()]);
    let init_path = dir.path().join("init.json");
    save_layout_file(&initial, &init_path).unwrap();
    let refine_rows: Vec<f64> = l.floor_rows().iter().map(|r| r + 0.25).collect();
    let refine = LayoutFile::new(m, l.with_floor_rows(&m, refine_rows.clone()).unwrap());
    let refine_path = dir.path().join("refine.json");
    save_layout_file(&refine, &refine_path).unwrap();
    let out_path = dir.path().join("merged.json");

    let out = run(&[
        os("merge"),
        os("--initial"),
        init_path.as_os_str(),
        os("--refine"),
        refine_path.as_os_str(),
        os("--out"),
        out_path.as_os_str(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let merged = load_layout_file(&out_path).unwrap();
    // Layout files store rows with ten decimals.
    let close = |a: f64, b: f64| (a - b).abs() < 1e-9;
    let far = floor_row_for_range(&m, 5.0).unwrap();
    let mut taken = 0;
    for (i, &r) in merged.layout.floor_rows().iter().enumerate() {
        let init = l.floor_rows()[i];
        if init < far {
            assert!(close(r, refine_rows[i]), "column {i}");
            taken += 1;
        } else {
            assert!(close(r, init), "column {i}");
        }
    }
    assert!(taken > 0);

    // Missing sigma in the initial file is a domain error.
    let out = run(&[os("merge"), os("--initial"), refine_path.as_os_str(), os("--refine"), refine_path.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn augment_with_fixed_factors_scales_area() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    write_square(&input, 2.0, 256);
    let output = dir.path().join("out.json");
    let out = run(&[
        os("augment"),
        os("--input"),
        input.as_os_str(),
        os("--out"),
        output.as_os_str(),
        os("--seed"),
        os("0"),
        os("--kx"),
        os("1.5"),
        os("--kz"),
        os("1.2"),
        os("--rotate"),
        os("-17"),
        os("--flip"),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = load_layout_file(&input).unwrap();
    let b = load_layout_file(&output).unwrap();
    let area = |f: &LayoutFile| {
        panolayout::projection::floor_boundary_to_polygon(&f.camera, f.layout.floor_rows())
            .unwrap()
            .area()
    };
    let ratio = area(&b) / area(&a);
    assert!((ratio / 1.8 - 1.0).abs() < 5e-3, "{ratio}");

    // Refinement mode rejects shrinking factors.
    let out = run(&[
        os("augment"),
        os("--input"),
        input.as_os_str(),
        os("--out"),
        output.as_os_str(),
        os("--seed"),
        os("0"),
        os("--kx"),
        os("0.8"),
        os("--kz"),
        os("1.0"),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn augment_transforms_image_alongside_layout() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.json");
    write_square(&input, 2.0, 64);
    let img = image::RgbImage::from_fn(128, 64, |x, y| image::Rgb([(x * 2) as u8, (y * 4) as u8, 90]));
    let png = dir.path().join("in.png");
    img.save(&png).unwrap();
    let png_out = dir.path().join("out.png");
    let out = run(&[
        os("augment"),
        os("--input"),
        input.as_os_str(),
        os("--out"),
        dir.path().join("out.json").as_os_str(),
        os("--seed"),
        os("3"),
        os("--image"),
        png.as_os_str(),
        os("--image-out"),
        png_out.as_os_str(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let back = image::open(&png_out).unwrap();
    assert_eq!((back.width(), back.height()), (128, 64));
}

#[test]
fn histogram_csv_counts_every_column() {
    let dir = tempfile::tempdir().unwrap();
    write_square(&dir.path().join("a.json"), 2.0, 64);
    write_square(&dir.path().join("b.json"), 6.0, 64);
    let csv = dir.path().join("h.csv");
    let out = run(&[os("histogram"), os("--gt"), dir.path().as_os_str(), os("--out"), csv.as_os_str()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bin,lower_m,upper_m,count,fraction"));
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows[9][2], "inf");
    let total: u64 = rows.iter().map(|r| r[3].parse::<u64>().unwrap()).sum();
    assert_eq!(total, 2 * 128);
    let frac: f64 = rows.iter().map(|r| r[4].parse::<f64>().unwrap()).sum();
    assert!((frac - 1.0).abs() < 1e-9);
}

#[test]
fn perturb_study_prints_both_rooms() {
    let out = run(&[os("perturb-study")]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("square 1.5 m"));
    assert!(text.contains("square 4 m"));
    assert!(text.contains("0.586%"), "{text}");
}

#[test]
fn toy_train_writes_trace_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let stem = dir.path().join("ckpt");
    let out = run(&[
        os("toy-train"),
        os("--seed"),
        os("4"),
        os("--epochs"),
        os("5"),
        os("--rooms"),
        os("2"),
        os("--height"),
        os("64"),
        os("--trace"),
        trace.as_os_str(),
        os("--checkpoint"),
        stem.as_os_str(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&trace).unwrap();
    // Header, one entry per epoch, and the final score.
    assert_eq!(text.lines().count(), 1 + 5 + 1);
    let params = ParamStore::load_checkpoint(&stem).unwrap();
    assert!(params.num_values() > 0);

    let again = dir.path().join("trace2.csv");
    let out = run(&[
        os("toy-train"),
        os("--seed"),
        os("4"),
        os("--epochs"),
        os("5"),
        os("--rooms"),
        os("2"),
        os("--height"),
        os("64"),
        os("--trace"),
        again.as_os_str(),
    ]);
    assert!(out.status.success());
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}
