//! End-to-end coverage of the `densecount` binary: flag handling, file
//! outputs, determinism and diagnostics.

use densecount::dataset::{self, AnnotatedImage, DatasetKind};
use densecount::density::{DensityMap, Point, PointAnnotationSet};
use densecount::imgio::{self, PnmImage, RgbImage};
use densecount::metrics::MetricsReport;
use densecount::{dgrd, predictor};
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_densecount"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn densecount")
}

fn run_ok(cmd: &mut Command) -> String {
    let output = run(cmd);
    assert!(
        output.status.success(),
        "{cmd:?} exited {:?}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).unwrap()
}

fn write_sample_annotations(path: &Path) {
    let varieties = ["Chardonnay", "Pinot Gris", "Chardonnay"];
    let images: Vec<AnnotatedImage> = varieties
        .iter()
        .enumerate()
        .map(|(i, variety)| {
            let points = vec![
                Point::new(10.0 + i as f64, 12.0),
                Point::new(30.0, 40.0 + i as f64),
                Point::new(55.5, 21.25),
            ];
            AnnotatedImage {
                annotations: PointAnnotationSet::new(format!("img{i}"), 64, 64, points).unwrap(),
                variety: variety.to_string(),
            }
        })
        .collect();
    dataset::write_annotations(&images, path).unwrap();
}

#[test]
fn densify_is_rerun_identical_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.txt");
    write_sample_annotations(&ann);

    let args = |out: &str| {
        let mut cmd = bin();
        cmd.arg("densify")
            .arg("--annotations")
            .arg(&ann)
            .arg("--out-dir")
            .arg(dir.path().join(out))
            .args(["--adaptive", "--k", "3", "--beta", "0.3"]);
        cmd
    };
    let stdout_a = run_ok(&mut args("a"));
    let stdout_b = run_ok(&mut args("b"));
    assert_eq!(stdout_a, stdout_b);
    for line in stdout_a.lines() {
        let fields: Vec<&str> = line.split('\t').collect();
        assert_eq!(fields.len(), 3, "summary line {line:?}");
        assert_eq!(fields[1], "3");
        assert_eq!(fields[2], "3.000000");
    }
    for id in ["img0", "img1", "img2"] {
        let a = std::fs::read(dir.path().join("a").join(format!("{id}.dgrd"))).unwrap();
        let b = std::fs::read(dir.path().join("b").join(format!("{id}.dgrd"))).unwrap();
        assert_eq!(a, b, "{id} grids differ between reruns");
    }
}

#[test]
fn densify_output_is_independent_of_thread_budget() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.txt");
    write_sample_annotations(&ann);
    let run_with_threads = |threads: &str, out: &str| {
        run_ok(
            bin()
                .env("DENSECOUNT_THREADS", threads)
                .arg("densify")
                .arg("--annotations")
                .arg(&ann)
                .arg("--out-dir")
                .arg(dir.path().join(out))
                .args(["--adaptive"]),
        )
    };
    let single = run_with_threads("1", "t1");
    let pooled = run_with_threads("4", "t4");
    assert_eq!(single, pooled);
    for id in ["img0", "img1", "img2"] {
        let a = std::fs::read(dir.path().join("t1").join(format!("{id}.dgrd"))).unwrap();
        let b = std::fs::read(dir.path().join("t4").join(format!("{id}.dgrd"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn densify_fixed_sigma_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("one.txt");
    let images = vec![AnnotatedImage {
        annotations: PointAnnotationSet::new("solo", 32, 32, vec![Point::new(16.0, 16.0)])
            .unwrap(),
        variety: "Lagrein".into(),
    }];
    dataset::write_annotations(&images, &ann).unwrap();
    let stdout = run_ok(
        bin()
            .arg("densify")
            .arg("--annotations")
            .arg(&ann)
            .arg("--out-dir")
            .arg(dir.path().join("out"))
            .args(["--sigma", "5"]),
    );
    assert_eq!(stdout, "solo\t1\t1.000000\n");
}

#[test]
fn split_via_binary_is_deterministic_and_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = dir.path().join("data.manifest");
    let mut text = String::from("name\tCR1-like\nseed\t0\nfold_count\t0\n");
    for i in 0..102 {
        text.push_str(&format!("record\timg{i:03}\t600\t800\tChardonnay\t100\t-\t-\n"));
    }
    std::fs::write(&manifest_path, text).unwrap();

    let split = |out: &str| {
        run_ok(
            bin()
                .arg("split")
                .arg("--manifest")
                .arg(&manifest_path)
                .args(["--folds", "5", "--seed", "77"])
                .arg("--out")
                .arg(dir.path().join(out)),
        )
    };
    let stdout = split("a.manifest");
    assert!(stdout.contains("102 images into 5 folds"));
    split("b.manifest");
    let a = std::fs::read(dir.path().join("a.manifest")).unwrap();
    let b = std::fs::read(dir.path().join("b.manifest")).unwrap();
    assert_eq!(a, b);

    let manifest = dataset::load_manifest(&dir.path().join("a.manifest")).unwrap();
    let mut sizes = vec![0usize; 5];
    for fold in manifest.fold_assignment.values() {
        sizes[*fold as usize] += 1;
    }
    sizes.sort_unstable();
    assert_eq!(sizes, vec![20, 20, 20, 21, 21]);

    // No hidden entropy: split without --seed is a usage error.
    let output = run(bin()
        .arg("split")
        .arg("--manifest")
        .arg(&manifest_path)
        .args(["--folds", "5"])
        .arg("--out")
        .arg(dir.path().join("c.manifest")));
    assert!(!output.status.success());
}

fn write_eval_fixture(dir: &Path) -> std::path::PathBuf {
    // Seven varieties, one image each, exact predictions.
    let varieties = [
        "Chardonnay",
        "Lagrein",
        "Marzemino",
        "Pinot Gris",
        "Pinot Noir",
        "Sauvignon",
        "Traminer",
    ];
    let mut manifest = String::from("name\tCR1-like\nseed\t0\nfold_count\t0\n");
    for (i, variety) in varieties.iter().enumerate() {
        manifest.push_str(&format!(
            "record\timg{i}\t600\t800\t{variety}\t{}\t-\t-\n",
            100 + i
        ));
    }
    let manifest_path = dir.join("eval.manifest");
    std::fs::write(&manifest_path, manifest).unwrap();
    manifest_path
}

#[test]
fn evaluate_zero_error_and_grouping() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_eval_fixture(dir.path());
    let predictions = dir.path().join("predictions.tsv");
    let text: String = (0..7).map(|i| format!("img{i}\t{}\n", 100 + i)).collect();
    std::fs::write(&predictions, text).unwrap();

    let report_path = dir.path().join("report.kv");
    let stdout = run_ok(
        bin()
            .arg("evaluate")
            .arg("--predictions")
            .arg(&predictions)
            .arg("--gt-manifest")
            .arg(&manifest_path)
            .args(["--group-by", "variety"])
            .arg("--out")
            .arg(&report_path),
    );
    // Seven variety rows plus the TOTAL row and the header.
    assert_eq!(stdout.lines().count(), 9, "{stdout}");
    assert!(stdout.contains("Chardonnay"));
    assert!(stdout.contains("TOTAL"));

    let report =
        MetricsReport::from_kv_text(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report.n_images, 7);
    assert_eq!(report.mae, 0.0);
    assert_eq!(report.mse, 0.0);
    assert_eq!(report.overall_mae, 0.0);
    assert_eq!(report.groups.len(), 7);
    let group_berries: f64 = report.groups.iter().map(|(_, g)| g.n_berries).sum();
    assert_eq!(group_berries, report.n_berries);
}

#[test]
fn evaluate_lists_missing_ids() {
    let dir = tempfile::tempdir().unwrap();
    let manifest_path = write_eval_fixture(dir.path());
    let predictions = dir.path().join("predictions.tsv");
    std::fs::write(&predictions, "img0\t100\nghost\t5\nphantom\t6\n").unwrap();
    let output = run(bin()
        .arg("evaluate")
        .arg("--predictions")
        .arg(&predictions)
        .arg("--gt-manifest")
        .arg(&manifest_path));
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ghost") && stderr.contains("phantom"), "{stderr}");
}

#[test]
fn stats_match_annotation_file() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.txt");
    write_sample_annotations(&ann);
    let stdout = run_ok(bin().arg("stats").arg("--annotations").arg(&ann));
    assert!(stdout.contains("Chardonnay\t2\t3\t3\t3.00\t6"));
    assert!(stdout.contains("Pinot Gris\t1\t3\t3\t3.00\t3"));
    assert!(stdout.contains("TOTAL\t3\t3\t3\t3.00\t9"));
}

#[test]
fn yield_modes_and_errors() {
    let stdout = run_ok(bin().args([
        "yield", "--mode", "eq2", "--nv", "4000", "--nb", "10", "--na", "132.9", "--variety",
        "Chardonnay", "--year", "2018",
    ]));
    assert!(stdout.contains("yield_g\t9037200"), "{stdout}");
    assert!(stdout.contains("yield_kg\t9037.2"));
    assert!(stdout.contains("yield_quintals\t90.372"));
    assert!(stdout.contains("bundled berry weights, Chardonnay 2018"));

    let stdout = run_ok(bin().args([
        "yield", "--mode", "eq1", "--nv", "0", "--nb", "10", "--pb", "172",
    ]));
    assert!(stdout.contains("yield_g\t0\n"));

    // eq1 equals eq2 when the bunch weight factors as count x weight.
    let eq1 = run_ok(bin().args([
        "yield", "--mode", "eq1", "--nv", "4000", "--nb", "10", "--pb", "225.93",
    ]));
    let eq2 = run_ok(bin().args([
        "yield", "--mode", "eq2", "--nv", "4000", "--nb", "10", "--na", "132.9", "--pa", "1.7",
    ]));
    let grams = |s: &str| {
        s.lines()
            .find_map(|l| l.strip_prefix("yield_g\t"))
            .unwrap()
            .parse::<f64>()
            .unwrap()
    };
    assert!((grams(&eq1) - grams(&eq2)).abs() < 1e-6 * grams(&eq2));

    let output = run(bin().args([
        "yield", "--mode", "panoramic", "--total-berries", "100", "--variety", "Nebbiolo",
        "--year", "2018",
    ]));
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("Chardonnay"), "should list available varieties: {stderr}");
}

#[test]
fn render_zero_map_copies_image_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut pixels = Vec::new();
    for i in 0..(24 * 16 * 3) {
        pixels.push((i % 251) as u8);
    }
    let image = RgbImage::new(24, 16, pixels);
    let image_path = dir.path().join("base.ppm");
    imgio::write_ppm(&image, &image_path).unwrap();

    let zero = DensityMap::zeros(16, 24, 1.0);
    let zero_path = dir.path().join("zero.dgrd");
    dgrd::write(&zero, &zero_path).unwrap();

    let out_path = dir.path().join("overlay.ppm");
    let stdout = run_ok(
        bin()
            .arg("render")
            .arg("--image")
            .arg(&image_path)
            .arg("--dgrd")
            .arg(&zero_path)
            .arg("--out")
            .arg(&out_path),
    );
    assert!(stdout.contains("count\t0.000000"));
    match imgio::read_pnm(&out_path).unwrap() {
        PnmImage::Rgb(rendered) => assert_eq!(rendered, image),
        other => panic!("expected rgb output, got {other:?}"),
    }

    // A hot cell must recolor its pixel; reruns must be byte-identical.
    let mut values = vec![0.0; 16 * 24];
    values[5 * 24 + 7] = 2.0;
    let hot = DensityMap::new(16, 24, values, 1.0).unwrap();
    let hot_path = dir.path().join("hot.dgrd");
    dgrd::write(&hot, &hot_path).unwrap();
    let render_once = |out: &str| {
        let out_path = dir.path().join(out);
        run_ok(
            bin()
                .arg("render")
                .arg("--image")
                .arg(&image_path)
                .arg("--dgrd")
                .arg(&hot_path)
                .arg("--out")
                .arg(&out_path),
        );
        std::fs::read(out_path).unwrap()
    };
    let first = render_once("hot_a.ppm");
    assert_eq!(first, render_once("hot_b.ppm"));
    let rendered = match imgio::parse_pnm(&first).unwrap() {
        PnmImage::Rgb(img) => img,
        other => panic!("expected rgb output, got {other:?}"),
    };
    let idx = 3 * (5 * 24 + 7);
    assert_ne!(
        &rendered.pixels[idx..idx + 3],
        &image.pixels[idx..idx + 3],
        "hot cell pixel unchanged"
    );
    let elsewhere = 3 * (12 * 24 + 2);
    assert_eq!(
        &rendered.pixels[elsewhere..elsewhere + 3],
        &image.pixels[elsewhere..elsewhere + 3],
        "far pixel should be untouched"
    );

    // Incompatible dimensions are an error.
    let bad = DensityMap::zeros(7, 24, 1.0);
    let bad_path = dir.path().join("bad.dgrd");
    dgrd::write(&bad, &bad_path).unwrap();
    let output = run(bin()
        .arg("render")
        .arg("--image")
        .arg(&image_path)
        .arg("--dgrd")
        .arg(&bad_path)
        .arg("--out")
        .arg(dir.path().join("bad.ppm")));
    assert!(!output.status.success());
}

#[test]
fn render_accepts_downscaled_grids() {
    let dir = tempfile::tempdir().unwrap();
    let image = RgbImage::new(16, 16, vec![128; 16 * 16 * 3]);
    let image_path = dir.path().join("base.ppm");
    imgio::write_ppm(&image, &image_path).unwrap();
    // Quarter-resolution grid, as a pooled predictor would emit.
    let mut values = vec![0.0; 16];
    values[5] = 1.0;
    let map = DensityMap::new(4, 4, values, 0.25).unwrap();
    let map_path = dir.path().join("coarse.dgrd");
    dgrd::write(&map, &map_path).unwrap();
    run_ok(
        bin()
            .arg("render")
            .arg("--image")
            .arg(&image_path)
            .arg("--dgrd")
            .arg(&map_path)
            .arg("--out")
            .arg(dir.path().join("coarse.ppm")),
    );
}

#[test]
fn manifest_emission_matches_library() {
    for (kind_flag, kind) in [
        ("cr1", predictor::TrainingKind::Cr1Like),
        ("cr2", predictor::TrainingKind::Cr2Like),
    ] {
        let stdout = run_ok(bin().args(["manifest", "--kind", kind_flag]));
        assert_eq!(stdout, predictor::emit_training_manifest(kind).to_text());
    }
}

#[test]
fn predict_counts_blank_and_blobby_images() {
    let dir = tempfile::tempdir().unwrap();
    let blank = imgio::GrayImage::new(96, 96, vec![220; 96 * 96]);
    imgio::write_pgm(&blank, &dir.path().join("blank.pgm")).unwrap();
    let mut rng = densecount::rng::SplitMix64::new(3);
    let (scene, truth) = densecount::synthetic::blob_scene(9, 160, 160, 3.0, &mut rng).unwrap();
    imgio::write_pgm(&scene, &dir.path().join("scene.pgm")).unwrap();

    let summary_path = dir.path().join("summary.tsv");
    let stdout = run_ok(
        bin()
            .arg("predict")
            .arg("--out-dir")
            .arg(dir.path().join("pred"))
            .arg("--summary")
            .arg(&summary_path)
            .arg(dir.path().join("blank.pgm"))
            .arg(dir.path().join("scene.pgm")),
    );
    assert!(stdout.starts_with("blank\t0.000000\n"), "{stdout}");
    let scene_line = stdout.lines().nth(1).unwrap();
    let count: f64 = scene_line.split('\t').nth(1).unwrap().parse().unwrap();
    assert_eq!(count.round() as usize, truth.len());
    assert_eq!(std::fs::read_to_string(&summary_path).unwrap(), stdout);

    let map = dgrd::read(&dir.path().join("pred").join("scene.dgrd")).unwrap();
    assert_eq!(map.integrate().round() as usize, truth.len());
}

#[test]
fn selftest_passes_at_zero_and_default_noise() {
    let stdout = run_ok(bin().args(["selftest", "--seed", "9", "--images", "6"]));
    assert!(stdout.contains("selftest ok"), "{stdout}");
    let stdout = run_ok(bin().args([
        "selftest", "--seed", "9", "--images", "6", "--noise", "0",
    ]));
    assert!(stdout.contains("selftest ok"), "{stdout}");
    assert!(stdout.contains("Per Image\t6\t0.00\t0.00%\t0.00"), "{stdout}");
}

#[test]
fn manifest_with_linked_annotations_cross_checks() {
    let dir = tempfile::tempdir().unwrap();
    let ann = dir.path().join("ann.txt");
    write_sample_annotations(&ann);
    let images = dataset::load_annotations(&ann).unwrap();
    let mut manifest = dataset::manifest_from_annotations(DatasetKind::Custom, &images);
    manifest.annotations_path = Some("ann.txt".into());
    let manifest_path = dir.path().join("linked.manifest");
    manifest.save(&manifest_path).unwrap();
    let loaded = dataset::load_manifest(&manifest_path).unwrap();
    assert_eq!(loaded.records.len(), 3);

    // Break the cross-check: wrong count in the manifest.
    let broken = manifest.to_text().replace(
        "record\timg0\t64\t64\tChardonnay\t3",
        "record\timg0\t64\t64\tChardonnay\t4",
    );
    let broken_path = dir.path().join("broken.manifest");
    std::fs::write(&broken_path, broken).unwrap();
    let err = dataset::load_manifest(&broken_path).unwrap_err();
    assert!(matches!(err, dataset::DatasetError::Validation { .. }), "{err}");
}
