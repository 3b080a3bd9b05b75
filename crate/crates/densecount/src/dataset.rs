//! Dataset ingestion, preprocessing and deterministic splitting.
//!
//! Two text formats live here (both UTF-8, tab-separated, `#` comments):
//!
//! Annotation files carry per-image point labels. Each record starts with
//! a header line `image_id<TAB>width<TAB>height<TAB>variety`, followed by
//! one `x<TAB>y` line per point; records are separated by blank lines.
//! Image ids must not start with `#` or contain path separators.
//!
//! Manifest files describe a dataset: `key<TAB>value` lines for `name`
//! (CR1-like | CR2-like | custom), `seed`, `fold_count` and optionally
//! `annotations` (a path, relative to the manifest, cross-checked on
//! load), plus one line per image:
//! `record<TAB>id<TAB>width<TAB>height<TAB>variety<TAB>count<TAB>fold|-<TAB>path|-`.

use crate::density::{DensityError, DensityMap, Point, PointAnnotationSet};
use crate::rng::SplitMix64;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("validation failed ({} problem(s)): {}", problems.len(), problems.join("; "))]
    Validation { problems: Vec<String> },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("crop rectangle at ({row}, {col}) sized {rows}x{cols} exceeds the {map_rows}x{map_cols} grid")]
    CropOutOfBounds {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
        map_rows: usize,
        map_cols: usize,
    },
}

fn read_file(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Dataset flavor; drives training-manifest defaults downstream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Cr1Like,
    Cr2Like,
    Custom,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Cr1Like => "CR1-like",
            DatasetKind::Cr2Like => "CR2-like",
            DatasetKind::Custom => "custom",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CR1-like" => Ok(DatasetKind::Cr1Like),
            "CR2-like" => Ok(DatasetKind::Cr2Like),
            "custom" => Ok(DatasetKind::Custom),
            other => Err(format!(
                "unknown dataset kind {other:?} (expected CR1-like, CR2-like or custom)"
            )),
        }
    }
}

/// One image's annotations plus its variety label.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub annotations: PointAnnotationSet,
    pub variety: String,
}

/// Manifest row for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub file_path: Option<PathBuf>,
    pub variety: String,
    pub width: u32,
    pub height: u32,
    pub annotation_count: u64,
}

/// Dataset description: image records, split provenance and (after
/// splitting) a total, balanced fold assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: DatasetKind,
    pub seed: u64,
    pub fold_count: u32,
    pub records: Vec<ImageRecord>,
    pub fold_assignment: BTreeMap<String, u32>,
    /// Annotation file this manifest was cross-checked against, if any
    /// (kept relative to the manifest location).
    pub annotations_path: Option<PathBuf>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut problems = Vec::new();
        let mut seen = BTreeSet::new();
        for r in &self.records {
            if !seen.insert(r.image_id.as_str()) {
                problems.push(format!("duplicate image id {:?}", r.image_id));
            }
            if r.width == 0 || r.height == 0 {
                problems.push(format!(
                    "record {:?} has degenerate dimensions {}x{}",
                    r.image_id, r.width, r.height
                ));
            }
        }
        if !self.fold_assignment.is_empty() {
            if self.fold_count < 2 {
                problems.push(format!(
                    "fold assignment present but fold_count is {}",
                    self.fold_count
                ));
            }
            for r in &self.records {
                match self.fold_assignment.get(&r.image_id) {
                    None => problems.push(format!("record {:?} has no fold", r.image_id)),
                    Some(f) if *f >= self.fold_count => problems.push(format!(
                        "record {:?} assigned to fold {f} of {}",
                        r.image_id, self.fold_count
                    )),
                    Some(_) => {}
                }
            }
            for id in self.fold_assignment.keys() {
                if !self.records.iter().any(|r| &r.image_id == id) {
                    problems.push(format!("fold assignment references unknown id {id:?}"));
                }
            }
            let mut sizes = vec![0usize; self.fold_count.max(1) as usize];
            for f in self.fold_assignment.values() {
                if (*f as usize) < sizes.len() {
                    sizes[*f as usize] += 1;
                }
            }
            if self.fold_assignment.len() == self.records.len() {
                let (min, max) = (
                    sizes.iter().min().copied().unwrap_or(0),
                    sizes.iter().max().copied().unwrap_or(0),
                );
                if max - min > 1 {
                    problems.push(format!("fold sizes {sizes:?} differ by more than 1"));
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(DatasetError::Validation { problems })
        }
    }

    /// Assigns every record to a fold and records the split provenance.
    pub fn apply_split(&mut self, fold_count: u32, seed: u64) -> Result<(), DatasetError> {
        self.fold_assignment = kfold_split(self, fold_count, seed)?;
        self.fold_count = fold_count;
        self.seed = seed;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# densecount dataset manifest\n");
        out.push_str(&format!("name\t{}\n", self.name));
        out.push_str(&format!("seed\t{}\n", self.seed));
        out.push_str(&format!("fold_count\t{}\n", self.fold_count));
        if let Some(p) = &self.annotations_path {
            out.push_str(&format!("annotations\t{}\n", p.display()));
        }
        for r in &self.records {
            let fold = match self.fold_assignment.get(&r.image_id) {
                Some(f) => f.to_string(),
                None => "-".to_string(),
            };
            let path = match &r.file_path {
                Some(p) => p.display().to_string(),
                None => "-".to_string(),
            };
            out.push_str(&format!(
                "record\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.image_id, r.width, r.height, r.variety, r.annotation_count, fold, path
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        std::fs::write(path, self.to_text()).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Builds an unsplit manifest straight from loaded annotations.
pub fn manifest_from_annotations(name: DatasetKind, images: &[AnnotatedImage]) -> DatasetManifest {
    let records = images
        .iter()
        .map(|img| ImageRecord {
            image_id: img.annotations.image_id().to_string(),
            file_path: None,
            variety: img.variety.clone(),
            width: img.annotations.width(),
            height: img.annotations.height(),
            annotation_count: img.annotations.len() as u64,
        })
        .collect();
    DatasetManifest {
        name,
        seed: 0,
        fold_count: 0,
        records,
        fold_assignment: BTreeMap::new(),
        annotations_path: None,
    }
}

// ---------------------------------------------------------------------------
// Annotation file parsing
// ---------------------------------------------------------------------------

pub fn parse_annotations(text: &str, source: &str) -> Result<Vec<AnnotatedImage>, DatasetError> {
    struct Builder {
        image_id: String,
        width: u32,
        height: u32,
        variety: String,
        points: Vec<(usize, f64, f64)>,
    }

    let parse_err = |line: usize, message: String| DatasetError::Parse {
        file: source.to_string(),
        line,
        message,
    };

    let mut images: Vec<Builder> = Vec::new();
    let mut open = false;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim_start().starts_with('#') {
            continue;
        }
        if line.trim().is_empty() {
            open = false;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !open {
            if fields.len() != 4 {
                return Err(parse_err(
                    line_no,
                    format!(
                        "expected record header `image_id<TAB>width<TAB>height<TAB>variety`, found {} field(s)",
                        fields.len()
                    ),
                ));
            }
            let image_id = fields[0].trim();
            if image_id.is_empty() {
                return Err(parse_err(line_no, "empty image id".into()));
            }
            let width: u32 = fields[1]
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad width {:?}: {e}", fields[1])))?;
            let height: u32 = fields[2]
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad height {:?}: {e}", fields[2])))?;
            let variety = fields[3].trim();
            if variety.is_empty() {
                return Err(parse_err(line_no, "empty variety label".into()));
            }
            images.push(Builder {
                image_id: image_id.to_string(),
                width,
                height,
                variety: variety.to_string(),
                points: Vec::new(),
            });
            open = true;
        } else {
            if fields.len() != 2 {
                return Err(parse_err(
                    line_no,
                    format!("expected point line `x<TAB>y`, found {} field(s)", fields.len()),
                ));
            }
            let x: f64 = fields[0]
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad x coordinate {:?}: {e}", fields[0])))?;
            let y: f64 = fields[1]
                .trim()
                .parse()
                .map_err(|e| parse_err(line_no, format!("bad y coordinate {:?}: {e}", fields[1])))?;
            if !x.is_finite() || !y.is_finite() {
                return Err(parse_err(line_no, "coordinates must be finite".into()));
            }
            images
                .last_mut()
                .expect("open record")
                .points
                .push((line_no, x, y));
        }
    }

    // Coordinate and uniqueness validation, reported together.
    let mut problems = Vec::new();
    let mut seen = BTreeSet::new();
    for img in &images {
        if !seen.insert(img.image_id.as_str()) {
            problems.push(format!("duplicate image id {:?}", img.image_id));
        }
        if img.width == 0 || img.height == 0 {
            problems.push(format!(
                "{:?} has degenerate dimensions {}x{}",
                img.image_id, img.width, img.height
            ));
            continue;
        }
        for (line, x, y) in &img.points {
            if *x < 0.0 || *x >= img.width as f64 || *y < 0.0 || *y >= img.height as f64 {
                problems.push(format!(
                    "{source}:{line}: point ({x}, {y}) outside {}x{} image {:?}",
                    img.width, img.height, img.image_id
                ));
            }
        }
    }
    if !problems.is_empty() {
        return Err(DatasetError::Validation { problems });
    }

    Ok(images
        .into_iter()
        .map(|b| AnnotatedImage {
            annotations: PointAnnotationSet::new(
                b.image_id,
                b.width,
                b.height,
                b.points.into_iter().map(|(_, x, y)| Point::new(x, y)).collect(),
            )
            .expect("coordinates validated above"),
            variety: b.variety,
        })
        .collect())
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotatedImage>, DatasetError> {
    parse_annotations(&read_file(path)?, &path.display().to_string())
}

pub fn format_annotations(images: &[AnnotatedImage]) -> String {
    let mut out = String::new();
    for (i, img) in images.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let a = &img.annotations;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            a.image_id(),
            a.width(),
            a.height(),
            img.variety
        ));
        for p in a.points() {
            out.push_str(&format!("{}\t{}\n", p.x, p.y));
        }
    }
    out
}

pub fn write_annotations(images: &[AnnotatedImage], path: &Path) -> Result<(), DatasetError> {
    std::fs::write(path, format_annotations(images)).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Manifest file parsing
// ---------------------------------------------------------------------------

pub fn parse_manifest(
    text: &str,
    source: &str,
    base_dir: Option<&Path>,
) -> Result<DatasetManifest, DatasetError> {
    let parse_err = |line: usize, message: String| DatasetError::Parse {
        file: source.to_string(),
        line,
        message,
    };

    let mut name: Option<DatasetKind> = None;
    let mut seed: Option<u64> = None;
    let mut fold_count: Option<u32> = None;
    let mut annotations_path: Option<PathBuf> = None;
    let mut records = Vec::new();
    let mut fold_assignment = BTreeMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        match fields[0] {
            "record" => {
                if fields.len() != 8 {
                    return Err(parse_err(
                        line_no,
                        format!("record line needs 8 fields, found {}", fields.len()),
                    ));
                }
                let image_id = fields[1].trim().to_string();
                if image_id.is_empty() {
                    return Err(parse_err(line_no, "empty image id".into()));
                }
                let width: u32 = fields[2]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad width {:?}: {e}", fields[2])))?;
                let height: u32 = fields[3]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad height {:?}: {e}", fields[3])))?;
                let variety = fields[4].trim().to_string();
                let annotation_count: u64 = fields[5]
                    .parse()
                    .map_err(|e| parse_err(line_no, format!("bad count {:?}: {e}", fields[5])))?;
                if fields[6] != "-" {
                    let fold: u32 = fields[6].parse().map_err(|e| {
                        parse_err(line_no, format!("bad fold {:?}: {e}", fields[6]))
                    })?;
                    fold_assignment.insert(image_id.clone(), fold);
                }
                let file_path = if fields[7] == "-" {
                    None
                } else {
                    Some(PathBuf::from(fields[7]))
                };
                records.push(ImageRecord {
                    image_id,
                    file_path,
                    variety,
                    width,
                    height,
                    annotation_count,
                });
            }
            key => {
                if fields.len() != 2 {
                    return Err(parse_err(
                        line_no,
                        format!("expected `{key}<TAB>value`, found {} field(s)", fields.len()),
                    ));
                }
                let value = fields[1].trim();
                match key {
                    "name" => {
                        name = Some(
                            value.parse().map_err(|e: String| parse_err(line_no, e))?,
                        )
                    }
                    "seed" => {
                        seed = Some(value.parse().map_err(|e| {
                            parse_err(line_no, format!("bad seed {value:?}: {e}"))
                        })?)
                    }
                    "fold_count" => {
                        fold_count = Some(value.parse().map_err(|e| {
                            parse_err(line_no, format!("bad fold_count {value:?}: {e}"))
                        })?)
                    }
                    "annotations" => annotations_path = Some(PathBuf::from(value)),
                    other => {
                        return Err(parse_err(line_no, format!("unknown key {other:?}")));
                    }
                }
            }
        }
    }

    let missing = |what: &str| parse_err(0, format!("missing required key {what:?}"));
    let manifest = DatasetManifest {
        name: name.ok_or_else(|| missing("name"))?,
        seed: seed.ok_or_else(|| missing("seed"))?,
        fold_count: fold_count.ok_or_else(|| missing("fold_count"))?,
        records,
        fold_assignment,
        annotations_path: annotations_path.clone(),
    };
    manifest.validate()?;

    if let Some(rel) = &annotations_path {
        let full = match base_dir {
            Some(base) => base.join(rel),
            None => rel.clone(),
        };
        let images = load_annotations(&full)?;
        cross_check_annotations(&manifest, &images)?;
    }

    Ok(manifest)
}

/// The manifest and an annotation file must describe the same images:
/// identical id sets, dimensions and per-image counts.
fn cross_check_annotations(
    manifest: &DatasetManifest,
    images: &[AnnotatedImage],
) -> Result<(), DatasetError> {
    let mut problems = Vec::new();
    let by_id: BTreeMap<&str, &AnnotatedImage> = images
        .iter()
        .map(|img| (img.annotations.image_id(), img))
        .collect();
    for r in &manifest.records {
        match by_id.get(r.image_id.as_str()) {
            None => problems.push(format!("record {:?} missing from annotation file", r.image_id)),
            Some(img) => {
                let a = &img.annotations;
                if (a.width(), a.height()) != (r.width, r.height) {
                    problems.push(format!(
                        "{:?}: manifest says {}x{}, annotations say {}x{}",
                        r.image_id,
                        r.width,
                        r.height,
                        a.width(),
                        a.height()
                    ));
                }
                if a.len() as u64 != r.annotation_count {
                    problems.push(format!(
                        "{:?}: manifest counts {}, annotation file holds {}",
                        r.image_id,
                        r.annotation_count,
                        a.len()
                    ));
                }
            }
        }
    }
    for id in by_id.keys() {
        if !manifest.records.iter().any(|r| r.image_id == *id) {
            problems.push(format!("annotation file image {id:?} not in manifest"));
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(DatasetError::Validation { problems })
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DatasetError> {
    parse_manifest(
        &read_file(path)?,
        &path.display().to_string(),
        path.parent(),
    )
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

/// Rescales an annotation set so the image is `target_height` pixels
/// tall, preserving aspect ratio: both coordinates scale by
/// `target_height / height` and the new width is the rounded scaled
/// width. Scaled points are clamped into the half-open image bounds.
pub fn resize_to_height(
    set: &PointAnnotationSet,
    target_height: u32,
) -> Result<PointAnnotationSet, DensityError> {
    if target_height == 0 {
        return Err(DensityError::InvalidParameter(
            "target height must be positive".into(),
        ));
    }
    let ratio = target_height as f64 / set.height() as f64;
    let new_width = ((set.width() as f64 * ratio).round() as u32).max(1);
    let clamp = |v: f64, limit: u32| {
        let lim = limit as f64;
        if v >= lim {
            lim.next_down()
        } else if v < 0.0 {
            0.0
        } else {
            v
        }
    };
    let points = set
        .points()
        .iter()
        .map(|p| Point::new(clamp(p.x * ratio, new_width), clamp(p.y * ratio, target_height)))
        .collect();
    PointAnnotationSet::new(set.image_id(), new_width, target_height, points)
}

/// Deterministic, balanced k-fold assignment.
///
/// Image ids are sorted lexicographically, shuffled by a seeded
/// Fisher-Yates pass ([`SplitMix64`]), and dealt round-robin: the i-th
/// shuffled id lands in fold `i % fold_count`. Fold sizes therefore
/// differ by at most one, and identical `(records, fold_count, seed)`
/// inputs reproduce the assignment byte for byte.
pub fn kfold_split(
    manifest: &DatasetManifest,
    fold_count: u32,
    seed: u64,
) -> Result<BTreeMap<String, u32>, DatasetError> {
    let n = manifest.records.len();
    if fold_count < 2 {
        return Err(DatasetError::Config(format!(
            "fold_count must be at least 2, got {fold_count}"
        )));
    }
    if (fold_count as usize) > n {
        return Err(DatasetError::Config(format!(
            "fold_count {fold_count} exceeds the {n} available image(s)"
        )));
    }
    let mut ids: Vec<&str> = manifest.records.iter().map(|r| r.image_id.as_str()).collect();
    ids.sort_unstable();
    SplitMix64::new(seed).shuffle(&mut ids);
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.to_string(), (i % fold_count as usize) as u32))
        .collect())
}

/// Quarter-area patch policy: the crop is always `ceil(w/2) x ceil(h/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchSpec {
    pub rng_seed: u64,
}

impl PatchSpec {
    pub fn new(rng_seed: u64) -> Self {
        Self { rng_seed }
    }

    /// Starts the reproducible patch stream for this spec.
    pub fn rng(&self) -> SplitMix64 {
        SplitMix64::new(self.rng_seed)
    }
}

/// Patch dimensions for a given image: half width and half height,
/// rounded up (quarter area).
pub fn patch_dims(width: u32, height: u32) -> (u32, u32) {
    (width.div_ceil(2), height.div_ceil(2))
}

/// Pixel-space crop rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Draws a quarter-area patch with its top-left corner uniform over the
/// valid in-bounds placements. The rng state is advanced in place (x is
/// drawn first, then y), so a shared stream yields a reproducible patch
/// sequence.
pub fn random_patch(
    width: u32,
    height: u32,
    rng: &mut SplitMix64,
) -> Result<PatchRect, DatasetError> {
    if width < 2 || height < 2 {
        return Err(DatasetError::Config(format!(
            "patching needs an image of at least 2x2, got {width}x{height}"
        )));
    }
    let (pw, ph) = patch_dims(width, height);
    let x = rng.next_below((width - pw + 1) as u64) as u32;
    let y = rng.next_below((height - ph + 1) as u64) as u32;
    Ok(PatchRect {
        x,
        y,
        width: pw,
        height: ph,
    })
}

/// Cell-space rectangle for density-map crops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellRect {
    pub row: usize,
    pub col: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Cell-exact sub-grid copy. The cropped sum never exceeds the original
/// and may undercount the points inside the rectangle: kernels near the
/// cut lose the mass that fell outside. That loss is inherent to
/// training-target cropping and is recorded, not corrected.
pub fn crop_density(map: &DensityMap, rect: CellRect) -> Result<DensityMap, DatasetError> {
    let fits = rect.rows >= 1
        && rect.cols >= 1
        && rect.row.checked_add(rect.rows).is_some_and(|end| end <= map.rows())
        && rect.col.checked_add(rect.cols).is_some_and(|end| end <= map.cols());
    if !fits {
        return Err(DatasetError::CropOutOfBounds {
            row: rect.row,
            col: rect.col,
            rows: rect.rows,
            cols: rect.cols,
            map_rows: map.rows(),
            map_cols: map.cols(),
        });
    }
    let mut values = Vec::with_capacity(rect.rows * rect.cols);
    for row in rect.row..rect.row + rect.rows {
        let base = row * map.cols();
        values.extend_from_slice(&map.values()[base + rect.col..base + rect.col + rect.cols]);
    }
    Ok(DensityMap::new(rect.rows, rect.cols, values, map.scale())
        .expect("sub-grid of a valid map is valid"))
}

/// Mirrors a density map around its vertical axis (cell x -> cols-1-x).
pub fn hflip_map(map: &DensityMap) -> DensityMap {
    let mut values = Vec::with_capacity(map.values().len());
    for row in 0..map.rows() {
        let base = row * map.cols();
        values.extend(map.values()[base..base + map.cols()].iter().rev());
    }
    DensityMap::new(map.rows(), map.cols(), values, map.scale())
        .expect("mirrored copy of a valid map is valid")
}

/// Mirrors annotations: `x -> width - x`, clamped below the half-open
/// width bound (x = 0 reflects to the largest representable coordinate
/// inside the image).
pub fn hflip_annotations(set: &PointAnnotationSet) -> PointAnnotationSet {
    let w = set.width() as f64;
    let points = set
        .points()
        .iter()
        .map(|p| {
            let x = w - p.x;
            Point::new(if x >= w { w.next_down() } else { x }, p.y)
        })
        .collect();
    PointAnnotationSet::new(set.image_id(), set.width(), set.height(), points)
        .expect("mirrored points stay in bounds")
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

/// Annotation-count statistics for a group of images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupCount {
    pub images: usize,
    pub total: u64,
    pub min: u64,
    pub max: u64,
}

impl GroupCount {
    pub fn mean(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.total as f64 / self.images as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStats {
    pub per_variety: BTreeMap<String, GroupCount>,
    pub total: GroupCount,
}

impl DatasetStats {
    /// Per-variety rows plus a TOTAL row; means printed to 2 decimals.
    pub fn to_table_text(&self) -> String {
        let mut out = String::from("variety\timages\tmin\tmax\tmean\ttotal\n");
        for (variety, g) in &self.per_variety {
            out.push_str(&format!(
                "{variety}\t{}\t{}\t{}\t{:.2}\t{}\n",
                g.images,
                g.min,
                g.max,
                g.mean(),
                g.total
            ));
        }
        let t = &self.total;
        out.push_str(&format!(
            "TOTAL\t{}\t{}\t{}\t{:.2}\t{}\n",
            t.images,
            t.min,
            t.max,
            t.mean(),
            t.total
        ));
        out
    }
}

/// Exact integer totals per variety and overall.
pub fn dataset_stats(manifest: &DatasetManifest) -> DatasetStats {
    fn push(slot: &mut Option<GroupCount>, count: u64) {
        let g = slot.get_or_insert(GroupCount {
            images: 0,
            total: 0,
            min: u64::MAX,
            max: 0,
        });
        g.images += 1;
        g.total += count;
        g.min = g.min.min(count);
        g.max = g.max.max(count);
    }

    let mut per_variety: BTreeMap<String, Option<GroupCount>> = BTreeMap::new();
    let mut total = None;
    for r in &manifest.records {
        push(per_variety.entry(r.variety.clone()).or_default(), r.annotation_count);
        push(&mut total, r.annotation_count);
    }
    DatasetStats {
        per_variety: per_variety
            .into_iter()
            .map(|(k, v)| (k, v.expect("group created on first record")))
            .collect(),
        total: total.unwrap_or(GroupCount {
            images: 0,
            total: 0,
            min: 0,
            max: 0,
        }),
    }
}
