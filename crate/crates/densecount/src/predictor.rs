//! The pluggable predictor boundary.
//!
//! A predictor consumes an image and produces a non-negative density
//! grid whose integral is its count estimate; grids cross process
//! boundaries as DGRD files at whatever scale the predictor declares.
//! Learned models live outside this crate behind that file contract.
//!
//! Two predictors ship here for exercising the harness end to end: a
//! noise-injected oracle (scales ground truth by a per-image factor) and
//! a classical baseline that template-matches dark Gaussian blobs via
//! normalized cross-correlation, suppresses non-maxima and drops one
//! unit-mass kernel per detection. The baseline is deterministic and a
//! harness exerciser, not a stand-in for a trained network.

use crate::density::{self, DensityMap, KernelSpec, Point, PointAnnotationSet};
use crate::imgio::GrayImage;
use crate::rng::SplitMix64;
use std::fmt::Write as _;

/// Scales ground truth by one factor drawn uniformly from
/// `[1 - noise_level, 1 + noise_level]`. At noise 0 it returns the input
/// unchanged. Always consumes exactly one draw, so a shared stream stays
/// aligned across noise settings.
pub fn oracle_predict(gt: &DensityMap, noise_level: f64, rng: &mut SplitMix64) -> DensityMap {
    assert!(
        noise_level >= 0.0 && noise_level.is_finite(),
        "noise level must be non-negative"
    );
    let unit = rng.next_f64();
    let factor = 1.0 - noise_level + 2.0 * noise_level * unit;
    let values = gt.values().iter().map(|v| v * factor).collect();
    DensityMap::new(gt.rows(), gt.cols(), values, gt.scale())
        .expect("scaled copy of a valid map is valid")
}

/// Baseline detector configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// Bandwidth of the blob template, in pixels; also the suppression
    /// radius and the bandwidth of the emitted kernels.
    pub template_sigma: f64,
    /// Minimum normalized correlation score for a peak, in [0, 1].
    pub detection_threshold: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            template_sigma: 3.0,
            detection_threshold: 0.6,
        }
    }
}

/// Detects dark blob centers by normalized cross-correlation against an
/// isotropic Gaussian template, keeping thresholded local maxima that
/// survive non-maximum suppression within `template_sigma`.
pub fn detect_blobs(image: &GrayImage, config: &BaselineConfig) -> Vec<Point> {
    assert!(
        config.template_sigma > 0.0 && config.template_sigma.is_finite(),
        "template sigma must be positive"
    );
    let radius = (3.0 * config.template_sigma).ceil() as usize;
    let side = 2 * radius + 1;
    if image.width < side || image.height < side {
        return Vec::new();
    }

    // Zero-mean template; its own norm folds into the score denominator.
    let mut template = vec![0.0f64; side * side];
    let inv = 1.0 / (2.0 * config.template_sigma * config.template_sigma);
    for (i, t) in template.iter_mut().enumerate() {
        let dy = (i / side) as f64 - radius as f64;
        let dx = (i % side) as f64 - radius as f64;
        *t = (-(dx * dx + dy * dy) * inv).exp();
    }
    let t_mean = template.iter().sum::<f64>() / template.len() as f64;
    for t in &mut template {
        *t -= t_mean;
    }
    let t_norm = template.iter().map(|t| t * t).sum::<f64>().sqrt();

    let (w, h) = (image.width, image.height);
    // Summed-area tables for window mean and variance.
    let mut sat = vec![0.0f64; (w + 1) * (h + 1)];
    let mut sat_sq = vec![0.0f64; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row_sum = 0.0;
        let mut row_sum_sq = 0.0;
        for x in 0..w {
            let v = image.pixels[y * w + x] as f64;
            row_sum += v;
            row_sum_sq += v * v;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row_sum;
            sat_sq[(y + 1) * (w + 1) + x + 1] = sat_sq[y * (w + 1) + x + 1] + row_sum_sq;
        }
    }
    let window = |table: &[f64], x0: usize, y0: usize| {
        table[(y0 + side) * (w + 1) + x0 + side] + table[y0 * (w + 1) + x0]
            - table[y0 * (w + 1) + x0 + side]
            - table[(y0 + side) * (w + 1) + x0]
    };

    let (sw, sh) = (w - side + 1, h - side + 1);
    let n = (side * side) as f64;
    let mut scores = vec![0.0f64; sw * sh];
    for y0 in 0..sh {
        for x0 in 0..sw {
            let mut dot = 0.0;
            for dy in 0..side {
                let img_base = (y0 + dy) * w + x0;
                let t_base = dy * side;
                for dx in 0..side {
                    dot += image.pixels[img_base + dx] as f64 * template[t_base + dx];
                }
            }
            let sum = window(&sat, x0, y0);
            let sum_sq = window(&sat_sq, x0, y0);
            let var = sum_sq - sum * sum / n;
            // Uniform windows carry no signal; correlation is undefined.
            let score = if var > 1e-9 {
                // Dark blobs anti-correlate with the bright-peak template.
                -dot / (t_norm * var.sqrt())
            } else {
                0.0
            };
            scores[y0 * sw + x0] = score;
        }
    }

    // Thresholded 8-neighborhood maxima; plateau ties go to the first
    // cell in raster order.
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for y in 0..sh {
        for x in 0..sw {
            let s = scores[y * sw + x];
            if s < config.detection_threshold {
                continue;
            }
            let mut is_peak = true;
            'neigh: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= sw as i64 || ny >= sh as i64 {
                        continue;
                    }
                    let ns = scores[ny as usize * sw + nx as usize];
                    let earlier = (ny, nx) < (y as i64, x as i64);
                    if ns > s || (ns == s && earlier) {
                        is_peak = false;
                        break 'neigh;
                    }
                }
            }
            if is_peak {
                candidates.push((s, y, x));
            }
        }
    }

    // Greedy suppression, strongest first (score grid == pixel offsets,
    // so distances are preserved).
    candidates.sort_unstable_by(|a, b| {
        b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let sup_sq = config.template_sigma * config.template_sigma;
    let mut kept: Vec<(usize, usize)> = Vec::new();
    'cand: for (_, y, x) in candidates {
        for (ky, kx) in &kept {
            let dy = y as f64 - *ky as f64;
            let dx = x as f64 - *kx as f64;
            if dx * dx + dy * dy <= sup_sq {
                continue 'cand;
            }
        }
        kept.push((y, x));
    }
    kept.sort_unstable();
    kept.into_iter()
        .map(|(y, x)| Point::new((x + radius) as f64 + 0.5, (y + radius) as f64 + 0.5))
        .collect()
}

/// Classical counting baseline: blob detection followed by unit-mass
/// kernel rendering at the detected centers. Deterministic: identical
/// images produce identical grids (and identical DGRD bytes).
pub fn baseline_predict(image: &GrayImage, config: &BaselineConfig) -> DensityMap {
    let points = detect_blobs(image, config);
    let set = PointAnnotationSet::new(
        "baseline",
        image.width as u32,
        image.height as u32,
        points,
    )
    .expect("detections are cell centers inside the image");
    let spec = KernelSpec::fixed(config.template_sigma).expect("validated sigma");
    density::generate_density_map(&set, &spec).expect("in-bounds detections render")
}

/// Dataset flavor for training-manifest emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainingKind {
    Cr1Like,
    Cr2Like,
}

/// Channel normalization policy recorded for external trainers; this
/// crate never applies it (no learned model here).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationPolicy {
    pub name: &'static str,
    pub channel_mean: [f64; 3],
    pub channel_std: [f64; 3],
}

impl Default for NormalizationPolicy {
    fn default() -> Self {
        Self {
            name: "vgg16 imagenet channel stats",
            channel_mean: [0.485, 0.456, 0.406],
            channel_std: [0.229, 0.224, 0.225],
        }
    }
}

/// Training recipe document for external learned predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingManifest {
    pub optimizer: &'static str,
    pub initial_learning_rate: f64,
    /// Learning rate divides by this factor...
    pub lr_decay_factor: f64,
    /// ...every this many epochs.
    pub lr_decay_every_epochs: u32,
    pub frozen_layers: &'static str,
    pub batch_size: u32,
    pub max_epochs: u32,
    pub normalization: NormalizationPolicy,
    pub patch_policy: &'static str,
    pub augmentation_policy: &'static str,
}

/// Recipe values for the chosen dataset flavor: close-up sets train with
/// lr 1e-5 and batch 20, panoramic sets with lr 1e-4 and batch 4; both
/// divide the rate by 10 every 50 epochs, freeze the first ten VGG-16
/// layers and stop within 200 epochs.
pub fn emit_training_manifest(kind: TrainingKind) -> TrainingManifest {
    let (initial_learning_rate, batch_size) = match kind {
        TrainingKind::Cr1Like => (1e-5, 20),
        TrainingKind::Cr2Like => (1e-4, 4),
    };
    TrainingManifest {
        optimizer: "Adam",
        initial_learning_rate,
        lr_decay_factor: 10.0,
        lr_decay_every_epochs: 50,
        frozen_layers: "first ten VGG-16 layers",
        batch_size,
        max_epochs: 200,
        normalization: NormalizationPolicy::default(),
        patch_policy: "random quarter-area patch (ceil(w/2) x ceil(h/2)) per draw",
        augmentation_policy: "horizontal flip, p = 0.5",
    }
}

impl TrainingManifest {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}\t{v}");
        };
        kv("optimizer", self.optimizer.into());
        kv("initial_learning_rate", format!("{:e}", self.initial_learning_rate));
        kv(
            "lr_schedule",
            format!(
                "divide by {} every {} epochs",
                self.lr_decay_factor, self.lr_decay_every_epochs
            ),
        );
        kv("frozen_layers", self.frozen_layers.into());
        kv("batch_size", self.batch_size.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("normalization", self.normalization.name.into());
        kv(
            "normalization_mean",
            format!(
                "{} {} {}",
                self.normalization.channel_mean[0],
                self.normalization.channel_mean[1],
                self.normalization.channel_mean[2]
            ),
        );
        kv(
            "normalization_std",
            format!(
                "{} {} {}",
                self.normalization.channel_std[0],
                self.normalization.channel_std[1],
                self.normalization.channel_std[2]
            ),
        );
        kv("patch_policy", self.patch_policy.into());
        kv("augmentation", self.augmentation_policy.into());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic;

    #[test]
    fn oracle_identity_at_zero_noise() {
        let gt = DensityMap::new(4, 4, (0..16).map(|v| v as f64).collect(), 1.0).unwrap();
        let mut rng = SplitMix64::new(5);
        let predicted = oracle_predict(&gt, 0.0, &mut rng);
        assert_eq!(predicted, gt);
    }

    #[test]
    fn oracle_noise_stays_in_band_and_reproduces() {
        let gt = DensityMap::new(2, 2, vec![25.0, 25.0, 25.0, 25.0], 1.0).unwrap();
        let run = |seed: u64| {
            let mut rng = SplitMix64::new(seed);
            (0..200)
                .map(|_| oracle_predict(&gt, 0.1, &mut rng).integrate())
                .collect::<Vec<f64>>()
        };
        let counts = run(7);
        for c in &counts {
            assert!(*c >= 100.0 * 0.9 - 1e-9 && *c <= 100.0 * 1.1 + 1e-9);
        }
        assert_eq!(counts, run(7));
        assert_ne!(counts, run(8));
    }

    #[test]
    fn baseline_counts_well_separated_blobs() {
        let mut rng = SplitMix64::new(11);
        let (image, truth) = synthetic::blob_scene(25, 320, 320, 3.0, &mut rng).unwrap();
        let map = baseline_predict(&image, &BaselineConfig::default());
        let count = map.integrate().round() as usize;
        assert_eq!(count, truth.len());
        assert!((map.integrate() - 25.0).abs() < 1e-6);
    }

    #[test]
    fn baseline_blank_image_counts_zero() {
        let image = GrayImage::new(64, 64, vec![200; 64 * 64]);
        let map = baseline_predict(&image, &BaselineConfig::default());
        assert_eq!(map.integrate(), 0.0);
    }

    #[test]
    fn baseline_is_deterministic() {
        let mut rng = SplitMix64::new(12);
        let (image, _) = synthetic::blob_scene(40, 320, 320, 3.0, &mut rng).unwrap();
        let a = baseline_predict(&image, &BaselineConfig::default());
        let b = baseline_predict(&image, &BaselineConfig::default());
        assert_eq!(crate::dgrd::to_bytes(&a), crate::dgrd::to_bytes(&b));
    }

    #[test]
    fn heavily_overlapping_blobs_undercount() {
        // Two blobs 80% overlapping merge into one or resolve into two,
        // never more: a known failure mode of the template matcher.
        let sigma = 3.0;
        let mut field = vec![0.0f64; 96 * 96];
        for (cx, cy) in [(46.0f64, 48.0f64), (49.6, 48.0)] {
            for y in 0..96 {
                for x in 0..96 {
                    let d2 = (x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2);
                    field[y * 96 + x] += 200.0 * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        let pixels = field
            .iter()
            .map(|v| (235.0 - v).clamp(0.0, 255.0).round() as u8)
            .collect();
        let image = GrayImage::new(96, 96, pixels);
        let detections = detect_blobs(&image, &BaselineConfig::default());
        assert!(
            detections.len() == 1 || detections.len() == 2,
            "found {}",
            detections.len()
        );
    }

    #[test]
    fn training_manifest_values() {
        let cr1 = emit_training_manifest(TrainingKind::Cr1Like);
        assert_eq!(cr1.initial_learning_rate, 1e-5);
        assert_eq!(cr1.batch_size, 20);
        let cr2 = emit_training_manifest(TrainingKind::Cr2Like);
        assert_eq!(cr2.initial_learning_rate, 1e-4);
        assert_eq!(cr2.batch_size, 4);
        for m in [&cr1, &cr2] {
            assert_eq!(m.max_epochs, 200);
            assert_eq!(m.lr_decay_factor, 10.0);
            assert_eq!(m.lr_decay_every_epochs, 50);
        }
        let text = cr1.to_text();
        assert!(text.contains("initial_learning_rate\t1e-5"));
        assert!(text.contains("divide by 10 every 50 epochs"));
        assert!(text.contains("first ten VGG-16 layers"));
    }
}
