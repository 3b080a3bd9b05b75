//! Command-line surface for the berry-counting and yield pipeline.
//!
//! Subcommands: densify, split, evaluate, stats, yield, render, manifest,
//! predict, selftest. Every command is deterministic given its flags (and
//! `--seed` where randomness is involved); `DENSECOUNT_THREADS` caps the
//! per-image worker pool.

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use densecount::dataset::{self, AnnotatedImage, DatasetManifest};
use densecount::density::{generate_density_map, DensityMap, KernelSpec};
use densecount::imgio::{self, RgbImage};
use densecount::metrics::{self, CountPair, GroupBy, MetricsReport};
use densecount::predictor::{self, BaselineConfig, TrainingKind};
use densecount::rng::SplitMix64;
use densecount::yield_model;
use densecount::{dgrd, parallel};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "densecount",
    version,
    about = "Density-map berry counting and grape yield estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render ground-truth density grids (DGRD) from point annotations.
    Densify(DensifyArgs),
    /// Assign manifest images to balanced folds, deterministically.
    Split(SplitArgs),
    /// Compare predicted counts against ground truth and report errors.
    Evaluate(EvaluateArgs),
    /// Per-variety annotation statistics for a dataset.
    Stats(StatsArgs),
    /// Yield figures from the multiplicative models.
    Yield(YieldArgs),
    /// Overlay a density grid on its image as a heat map.
    Render(RenderArgs),
    /// Emit the training recipe for external learned predictors.
    Manifest(ManifestArgs),
    /// Count blobs in images with the classical baseline predictor.
    Predict(PredictArgs),
    /// Run the oracle-predictor round trip against fresh synthetic data.
    Selftest(SelftestArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Densify(args) => cmd_densify(args),
        Command::Split(args) => cmd_split(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Yield(args) => cmd_yield(args),
        Command::Render(args) => cmd_render(args),
        Command::Manifest(args) => cmd_manifest(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Selftest(args) => cmd_selftest(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

/// Image ids become file names; refuse anything that would escape the
/// output directory.
fn checked_file_stem(id: &str) -> Result<&str> {
    if id.is_empty()
        || id.contains('/')
        || id.contains('\\')
        || id == "."
        || id == ".."
        || id.starts_with('#')
    {
        bail!("image id {id:?} is not usable as a file name");
    }
    Ok(id)
}

// ---------------------------------------------------------------------------
// densify
// ---------------------------------------------------------------------------

#[derive(Args)]
#[command(group(ArgGroup::new("kernel").required(true).args(["sigma", "adaptive"])))]
struct DensifyArgs {
    /// Annotation file (image headers plus x/y point lines).
    #[arg(long)]
    annotations: PathBuf,
    /// Directory receiving one `<image_id>.dgrd` per image.
    #[arg(long)]
    out_dir: PathBuf,
    /// Fixed kernel bandwidth in pixels.
    #[arg(long)]
    sigma: Option<f64>,
    /// Geometry-adaptive bandwidths from k-nearest-neighbor spacing.
    #[arg(long)]
    adaptive: bool,
    /// Neighbor count for adaptive bandwidths.
    #[arg(long, default_value_t = KernelSpec::DEFAULT_K)]
    k: usize,
    /// Spacing-to-bandwidth factor for adaptive mode.
    #[arg(long, default_value_t = KernelSpec::DEFAULT_BETA)]
    beta: f64,
    /// Bandwidth for images with too few points for k neighbors.
    #[arg(long, default_value_t = KernelSpec::DEFAULT_FALLBACK_SIGMA)]
    fallback: f64,
    /// Kernel truncation radius, in multiples of sigma.
    #[arg(long, default_value_t = KernelSpec::DEFAULT_TRUNCATION)]
    truncation: f64,
    /// Also write the per-image summary lines to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
}

fn kernel_from_flags(args: &DensifyArgs) -> Result<KernelSpec> {
    let spec = match args.sigma {
        Some(sigma) => KernelSpec::fixed(sigma),
        None => KernelSpec::adaptive(args.k, args.beta, args.fallback),
    };
    Ok(spec.and_then(|s| s.with_truncation(args.truncation))?)
}

fn cmd_densify(args: DensifyArgs) -> Result<()> {
    let spec = kernel_from_flags(&args)?;
    let mut images = dataset::load_annotations(&args.annotations)?;
    images.sort_by(|a, b| a.annotations.image_id().cmp(b.annotations.image_id()));
    for img in &images {
        checked_file_stem(img.annotations.image_id())?;
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let results = parallel::map_parallel(&images, |_, img: &AnnotatedImage| {
        let id = img.annotations.image_id().to_string();
        let run = || -> Result<String> {
            let map = generate_density_map(&img.annotations, &spec)?;
            let path = args.out_dir.join(format!("{id}.dgrd"));
            dgrd::write(&map, &path)?;
            Ok(format!("{id}\t{}\t{:.6}", img.annotations.len(), map.integrate()))
        };
        run().map_err(|e| format!("{id}: {e:#}"))
    });

    let mut failures = 0usize;
    let mut summary = String::new();
    for line in results {
        match line {
            Ok(line) => {
                println!("{line}");
                summary.push_str(&line);
                summary.push('\n');
            }
            Err(diag) => {
                eprintln!("{diag}");
                failures += 1;
            }
        }
    }
    if let Some(path) = &args.summary {
        std::fs::write(path, summary).with_context(|| format!("writing {}", path.display()))?;
    }
    if failures > 0 {
        bail!("{failures} image(s) failed");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// split
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Number of folds (between 2 and the image count).
    #[arg(long)]
    folds: u32,
    /// Shuffle seed; required so splits carry no hidden entropy.
    #[arg(long)]
    seed: u64,
    /// Output manifest path.
    #[arg(long)]
    out: PathBuf,
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let mut manifest = dataset::load_manifest(&args.manifest)?;
    manifest.apply_split(args.folds, args.seed)?;
    manifest.save(&args.out)?;
    let mut sizes = vec![0usize; args.folds as usize];
    for fold in manifest.fold_assignment.values() {
        sizes[*fold as usize] += 1;
    }
    println!(
        "{} images into {} folds (seed {}): sizes {:?}",
        manifest.records.len(),
        args.folds,
        args.seed,
        sizes
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

#[derive(Args)]
#[command(group(ArgGroup::new("truth").required(true).args(["gt_manifest", "gt_dgrd"])))]
struct EvaluateArgs {
    /// Predictions file: one `image_id<TAB>count` line per image.
    #[arg(long)]
    predictions: PathBuf,
    /// Ground-truth counts from a dataset manifest.
    #[arg(long)]
    gt_manifest: Option<PathBuf>,
    /// Ground-truth counts by integrating `<image_id>.dgrd` grids in this
    /// directory.
    #[arg(long)]
    gt_dgrd: Option<PathBuf>,
    /// Add per-group sub-reports (requires --gt-manifest for labels).
    #[arg(long, value_enum)]
    group_by: Option<GroupByArg>,
    /// Write the machine-readable report here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GroupByArg {
    Variety,
    Fold,
}

fn parse_predictions(path: &Path) -> Result<Vec<(String, f64)>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (id, value) = match (fields.next(), fields.next(), fields.next()) {
            (Some(id), Some(value), None) => (id.trim(), value.trim()),
            _ => bail!(
                "{}:{}: expected `image_id<TAB>count`",
                path.display(),
                idx + 1
            ),
        };
        let count: f64 = value.parse().with_context(|| {
            format!("{}:{}: bad count {value:?}", path.display(), idx + 1)
        })?;
        if !count.is_finite() {
            bail!("{}:{}: count must be finite", path.display(), idx + 1);
        }
        out.push((id.to_string(), count));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    for pair in out.windows(2) {
        if pair[0].0 == pair[1].0 {
            bail!("duplicate prediction for image {:?}", pair[0].0);
        }
    }
    Ok(out)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let predictions = parse_predictions(&args.predictions)?;
    if predictions.is_empty() {
        bail!("predictions file holds no entries");
    }

    let manifest: Option<DatasetManifest> = args
        .gt_manifest
        .as_deref()
        .map(dataset::load_manifest)
        .transpose()?;

    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(predictions.len());
    match (&manifest, &args.gt_dgrd) {
        (Some(manifest), None) => {
            let records: BTreeMap<&str, _> = manifest
                .records
                .iter()
                .map(|r| (r.image_id.as_str(), r))
                .collect();
            for (id, predicted) in &predictions {
                match records.get(id.as_str()) {
                    None => missing.push(id.clone()),
                    Some(record) => pairs.push(CountPair {
                        image_id: id.clone(),
                        predicted: *predicted,
                        ground_truth: record.annotation_count as f64,
                        group: Some(record.variety.clone()),
                        fold: manifest.fold_assignment.get(id).copied(),
                    }),
                }
            }
        }
        (None, Some(dir)) => {
            for (id, predicted) in &predictions {
                let path = dir.join(format!("{}.dgrd", checked_file_stem(id)?));
                if !path.is_file() {
                    missing.push(id.clone());
                    continue;
                }
                let map = dgrd::read(&path)?;
                pairs.push(CountPair {
                    image_id: id.clone(),
                    predicted: *predicted,
                    ground_truth: map.integrate(),
                    group: None,
                    fold: None,
                });
            }
        }
        _ => unreachable!("clap enforces exactly one ground-truth source"),
    }
    if !missing.is_empty() {
        bail!(
            "{} prediction id(s) have no ground truth: {}",
            missing.len(),
            missing.join(", ")
        );
    }

    let report = match args.group_by {
        None => MetricsReport::from_pairs(&pairs)?,
        Some(which) => {
            if manifest.is_none() {
                bail!("--group-by needs --gt-manifest for the labels");
            }
            let by = match which {
                GroupByArg::Variety => GroupBy::Variety,
                GroupByArg::Fold => GroupBy::Fold,
            };
            metrics::grouped_report(&pairs, by)?
        }
    };

    print!("{}", report.to_table_text());
    if let Some(path) = &args.out {
        std::fs::write(path, report.to_kv_text())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// stats
// ---------------------------------------------------------------------------

#[derive(Args)]
#[command(group(ArgGroup::new("input").required(true).args(["manifest", "annotations"])))]
struct StatsArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    annotations: Option<PathBuf>,
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let manifest = match (&args.manifest, &args.annotations) {
        (Some(path), None) => dataset::load_manifest(path)?,
        (None, Some(path)) => {
            let images = dataset::load_annotations(path)?;
            dataset::manifest_from_annotations(dataset::DatasetKind::Custom, &images)
        }
        _ => unreachable!("clap enforces exactly one input"),
    };
    print!("{}", dataset::dataset_stats(&manifest).to_table_text());
    Ok(())
}

// ---------------------------------------------------------------------------
// yield
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
enum YieldMode {
    Eq1,
    Eq2,
    Panoramic,
}

#[derive(Args)]
struct YieldArgs {
    #[arg(long, value_enum)]
    mode: YieldMode,
    /// Vines per surface unit (N_v).
    #[arg(long)]
    nv: Option<f64>,
    /// Bunches per vine (N_b).
    #[arg(long)]
    nb: Option<f64>,
    /// Mean bunch weight in grams (P_b).
    #[arg(long)]
    pb: Option<f64>,
    /// Mean berries per bunch (N_a).
    #[arg(long)]
    na: Option<f64>,
    /// Mean berry weight in grams (P_a).
    #[arg(long)]
    pa: Option<f64>,
    /// Field-level berry count for panoramic mode.
    #[arg(long)]
    total_berries: Option<f64>,
    /// Pull the missing weight from the bundled historical tables.
    #[arg(long)]
    variety: Option<String>,
    /// Year for the bundled table lookup.
    #[arg(long)]
    year: Option<i32>,
}

struct WeightSource {
    value: f64,
    provenance: Option<String>,
}

fn weight_from_flags(
    flag: Option<f64>,
    flag_name: &str,
    args: &YieldArgs,
    table: &'static [yield_model::HistoricalSeries],
    table_name: &str,
) -> Result<WeightSource> {
    if let Some(value) = flag {
        return Ok(WeightSource {
            value,
            provenance: None,
        });
    }
    match (&args.variety, args.year) {
        (Some(variety), Some(year)) => {
            let series = yield_model::find_series(table, variety)?;
            let value = series.get(year)?;
            Ok(WeightSource {
                value,
                provenance: Some(format!("bundled {table_name}, {variety} {year}")),
            })
        }
        _ => bail!("provide --{flag_name}, or --variety and --year for a bundled lookup"),
    }
}

fn require(flag: Option<f64>, name: &str) -> Result<f64> {
    let value = flag.ok_or_else(|| anyhow!("--{name} is required for this mode"))?;
    if !(value >= 0.0 && value.is_finite()) {
        bail!("--{name} must be non-negative, got {value}");
    }
    Ok(value)
}

fn cmd_yield(args: YieldArgs) -> Result<()> {
    fn input(
        lines: &mut Vec<(String, String)>,
        name: &str,
        value: f64,
        provenance: &Option<String>,
    ) {
        let suffix = match provenance {
            Some(p) => format!("\t({p})"),
            None => String::new(),
        };
        lines.push((name.to_string(), format!("{value}{suffix}")));
    }
    let mut lines: Vec<(String, String)> = Vec::new();

    let grams = match args.mode {
        YieldMode::Eq1 => {
            let nv = require(args.nv, "nv")?;
            let nb = require(args.nb, "nb")?;
            let pb = weight_from_flags(
                args.pb,
                "pb",
                &args,
                yield_model::bundled_cluster_weights(),
                "cluster weights",
            )?;
            lines.push(("mode".into(), "eq1".into()));
            input(&mut lines, "N_v", nv, &None);
            input(&mut lines, "N_b", nb, &None);
            input(&mut lines, "P_b_g", pb.value, &pb.provenance);
            yield_model::yield_eq1(nv, nb, pb.value)
        }
        YieldMode::Eq2 => {
            let nv = require(args.nv, "nv")?;
            let nb = require(args.nb, "nb")?;
            let na = require(args.na, "na")?;
            let pa = weight_from_flags(
                args.pa,
                "pa",
                &args,
                yield_model::bundled_berry_weights(),
                "berry weights",
            )?;
            lines.push(("mode".into(), "eq2".into()));
            input(&mut lines, "N_v", nv, &None);
            input(&mut lines, "N_b", nb, &None);
            input(&mut lines, "N_a", na, &None);
            input(&mut lines, "P_a_g", pa.value, &pa.provenance);
            yield_model::yield_eq2(nv, nb, na, pa.value)
        }
        YieldMode::Panoramic => {
            let total = require(args.total_berries, "total-berries")?;
            let pa = weight_from_flags(
                args.pa,
                "pa",
                &args,
                yield_model::bundled_berry_weights(),
                "berry weights",
            )?;
            lines.push(("mode".into(), "panoramic".into()));
            input(&mut lines, "total_berries", total, &None);
            input(&mut lines, "P_a_g", pa.value, &pa.provenance);
            yield_model::yield_panoramic(total, pa.value)
        }
    };

    for (key, value) in &lines {
        println!("{key}\t{value}");
    }
    println!("yield_g\t{grams}");
    println!("yield_kg\t{}", grams / 1000.0);
    println!("yield_quintals\t{}", grams / 100_000.0);
    Ok(())
}

// ---------------------------------------------------------------------------
// render
// ---------------------------------------------------------------------------

#[derive(Args)]
struct RenderArgs {
    /// Base image (binary PPM or PGM).
    #[arg(long)]
    image: PathBuf,
    /// Density grid to overlay.
    #[arg(long)]
    dgrd: PathBuf,
    /// Output PPM path.
    #[arg(long)]
    out: PathBuf,
    /// Peak overlay opacity in [0, 1].
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
}

/// Five-anchor blue-to-red ramp.
fn heat_color(t: f64) -> [f64; 3] {
    const ANCHORS: [(f64, [f64; 3]); 5] = [
        (0.00, [18.0, 34.0, 98.0]),
        (0.25, [1.0, 135.0, 189.0]),
        (0.50, [68.0, 197.0, 87.0]),
        (0.75, [254.0, 197.0, 39.0]),
        (1.00, [220.0, 30.0, 31.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let mut i = 0;
    while i + 2 < ANCHORS.len() && t > ANCHORS[i + 1].0 {
        i += 1;
    }
    let (t0, c0) = ANCHORS[i];
    let (t1, c1) = ANCHORS[i + 1];
    let f = if t1 > t0 { (t - t0) / (t1 - t0) } else { 0.0 };
    [
        c0[0] + f * (c1[0] - c0[0]),
        c0[1] + f * (c1[1] - c0[1]),
        c0[2] + f * (c1[2] - c0[2]),
    ]
}

fn overlay_heatmap(image: &RgbImage, map: &DensityMap, alpha: f64) -> Result<RgbImage> {
    let (w, h) = (image.width, image.height);
    if w % map.cols() != 0 || h % map.rows() != 0 {
        bail!(
            "image is {w}x{h} but the grid is {}x{}: not an integer scale factor",
            map.cols(),
            map.rows()
        );
    }
    let (fx, fy) = (w / map.cols(), h / map.rows());
    if fx != fy {
        bail!("anisotropic scale {fx}x{fy} between image and grid");
    }
    let vmax = map.values().iter().cloned().fold(0.0f64, f64::max);
    let mut pixels = image.pixels.clone();
    if vmax > 0.0 {
        for y in 0..h {
            for x in 0..w {
                let v = map.get(y / fy, x / fx) / vmax;
                let weight = (alpha * v).clamp(0.0, 1.0);
                if weight == 0.0 {
                    continue;
                }
                let heat = heat_color(v);
                let base = 3 * (y * w + x);
                for c in 0..3 {
                    let blended =
                        (1.0 - weight) * pixels[base + c] as f64 + weight * heat[c];
                    pixels[base + c] = blended.round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Ok(RgbImage::new(w, h, pixels))
}

fn cmd_render(args: RenderArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.alpha) {
        bail!("--alpha must lie in [0, 1], got {}", args.alpha);
    }
    let image = imgio::read_pnm(&args.image)?.to_rgb();
    let map = dgrd::read(&args.dgrd)?;
    let out = overlay_heatmap(&image, &map, args.alpha)?;
    imgio::write_ppm(&out, &args.out)?;
    println!("count\t{:.6}", map.integrate());
    Ok(())
}

// ---------------------------------------------------------------------------
// manifest (training recipe)
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Cr1,
    Cr2,
}

#[derive(Args)]
struct ManifestArgs {
    /// Dataset flavor the recipe targets.
    #[arg(long, value_enum)]
    kind: KindArg,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_manifest(args: ManifestArgs) -> Result<()> {
    let kind = match args.kind {
        KindArg::Cr1 => TrainingKind::Cr1Like,
        KindArg::Cr2 => TrainingKind::Cr2Like,
    };
    let text = predictor::emit_training_manifest(kind).to_text();
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

#[derive(Args)]
struct PredictArgs {
    /// Directory receiving one `<image_stem>.dgrd` per input image.
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = BaselineConfig::default().template_sigma)]
    template_sigma: f64,
    #[arg(long, default_value_t = BaselineConfig::default().detection_threshold)]
    threshold: f64,
    /// Also write the per-image summary lines to this file.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Input images (binary PPM or PGM).
    #[arg(required = true)]
    images: Vec<PathBuf>,
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let config = BaselineConfig {
        template_sigma: args.template_sigma,
        detection_threshold: args.threshold,
    };
    let mut inputs: Vec<(String, PathBuf)> = args
        .images
        .iter()
        .map(|path| {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| anyhow!("{}: unusable file name", path.display()))?;
            Ok((stem.to_string(), path.clone()))
        })
        .collect::<Result<_>>()?;
    inputs.sort();
    for pair in inputs.windows(2) {
        if pair[0].0 == pair[1].0 {
            bail!("two inputs share the image id {:?}", pair[0].0);
        }
    }
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let results = parallel::map_parallel(&inputs, |_, (id, path): &(String, PathBuf)| {
        let run = || -> Result<String> {
            let image = imgio::read_pnm(path)?.to_gray();
            let map = predictor::baseline_predict(&image, &config);
            dgrd::write(&map, &args.out_dir.join(format!("{id}.dgrd")))?;
            Ok(format!("{id}\t{:.6}", map.integrate()))
        };
        run().map_err(|e| format!("{id}: {e:#}"))
    });

    let mut failures = 0usize;
    let mut summary = String::new();
    for line in results {
        match line {
            Ok(line) => {
                println!("{line}");
                summary.push_str(&line);
                summary.push('\n');
            }
            Err(diag) => {
                eprintln!("{diag}");
                failures += 1;
            }
        }
    }
    if let Some(path) = &args.summary {
        std::fs::write(path, summary).with_context(|| format!("writing {}", path.display()))?;
    }
    if failures > 0 {
        bail!("{failures} image(s) failed");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

#[derive(Args)]
struct SelftestArgs {
    /// Seed for the synthetic data and the oracle noise.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    images: usize,
    /// Oracle noise level (multiplicative, per image).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
}

fn cmd_selftest(args: SelftestArgs) -> Result<()> {
    if args.images == 0 {
        bail!("--images must be positive");
    }
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        bail!("--noise must be non-negative");
    }
    let mut rng = SplitMix64::new(args.seed);
    let spec = KernelSpec::default();
    let mut pairs = Vec::with_capacity(args.images);
    for index in 0..args.images {
        let count = rng.next_below(180) as usize + 20;
        let points = (0..count)
            .map(|_| {
                densecount::Point::new(rng.next_range(0.0, 96.0), rng.next_range(0.0, 96.0))
            })
            .collect();
        let annotations =
            densecount::PointAnnotationSet::new(format!("synthetic{index:03}"), 96, 96, points)?;
        let gt = generate_density_map(&annotations, &spec)?;

        let bytes = dgrd::to_bytes(&gt);
        let restored = dgrd::from_bytes(&bytes)?;
        if dgrd::to_bytes(&restored) != bytes {
            bail!("grid file round trip is not bit-identical");
        }

        let predicted = predictor::oracle_predict(&restored, args.noise, &mut rng);
        pairs.push(CountPair::new(
            annotations.image_id().to_string(),
            predicted.integrate(),
            restored.integrate(),
        ));
    }
    let report = MetricsReport::from_pairs(&pairs)?;
    print!("{}", report.to_table_text());
    if args.noise == 0.0 && (report.mae != 0.0 || report.mse != 0.0 || report.overall_mae != 0.0) {
        bail!("noise-free oracle must evaluate to zero error");
    }
    println!("selftest ok: {} images, noise {}", args.images, args.noise);
    Ok(())
}
