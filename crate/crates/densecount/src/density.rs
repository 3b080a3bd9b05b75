//! Point annotations, Gaussian kernel rendering and density-map numerics.
//!
//! A density map is a non-negative grid whose sum is the object count for
//! the region it covers. Ground truth is synthesized by placing one
//! unit-mass Gaussian kernel per annotated point; bandwidth is either a
//! fixed sigma or adapted to local crowding (`sigma_i = beta * mean
//! distance to the k nearest other points`). Kernels are truncated and
//! renormalized over the in-grid support so every point contributes
//! exactly one unit of mass, including at image boundaries, which makes
//! `integrate(map) == point count` an exact, testable identity.

use crate::knn;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DensityError {
    #[error("point {index} at ({x}, {y}) lies outside the {width}x{height} image")]
    PointOutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
    },
    #[error("point {index} has a non-finite coordinate")]
    NonFinitePoint { index: usize },
    #[error("kernel center ({x}, {y}) lies outside the {rows}x{cols} grid")]
    OutOfBounds {
        x: f64,
        y: f64,
        rows: usize,
        cols: usize,
    },
    #[error("{available} other point(s) available, {k} needed for the k-nearest-neighbor mean")]
    InsufficientNeighbors { k: usize, available: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Continuous pixel-space coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Squared Euclidean distance. Neighbor selection everywhere works on
    /// this single expression and defers the square root so the brute and
    /// kd-tree paths produce identical bits.
    pub(crate) fn sq_dist(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Berry-center annotations for one image, in continuous pixel space.
///
/// Every point satisfies `0 <= x < width`, `0 <= y < height`. Duplicate
/// coordinates are allowed (two berries can project to near-identical
/// pixels). Immutable after construction and safe to share across
/// threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PointAnnotationSet {
    image_id: String,
    width: u32,
    height: u32,
    points: Vec<Point>,
}

impl PointAnnotationSet {
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        points: Vec<Point>,
    ) -> Result<Self, DensityError> {
        if width == 0 || height == 0 {
            return Err(DensityError::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        for (index, p) in points.iter().enumerate() {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(DensityError::NonFinitePoint { index });
            }
            if p.x < 0.0 || p.x >= width as f64 || p.y < 0.0 || p.y >= height as f64 {
                return Err(DensityError::PointOutOfBounds {
                    index,
                    x: p.x,
                    y: p.y,
                    width,
                    height,
                });
            }
        }
        Ok(Self {
            image_id: image_id.into(),
            width,
            height,
            points,
        })
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Kernel bandwidth policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelMode {
    /// One common sigma for every point.
    Fixed { sigma: f64 },
    /// Per-point `sigma_i = beta * mean distance to the k nearest other
    /// points`; points with fewer than `k` neighbors get `fallback_sigma`.
    Adaptive {
        k: usize,
        beta: f64,
        fallback_sigma: f64,
    },
}

/// Kernel configuration: bandwidth mode plus truncation radius in
/// multiples of sigma.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub mode: KernelMode,
    pub truncation_radius: f64,
}

impl KernelSpec {
    pub const DEFAULT_K: usize = 3;
    pub const DEFAULT_BETA: f64 = 0.3;
    pub const DEFAULT_FALLBACK_SIGMA: f64 = 15.0;
    pub const DEFAULT_TRUNCATION: f64 = 4.0;
    /// Coincident annotations can drive an adaptive sigma to zero;
    /// anything at or below this floor is clamped up to it so the kernel
    /// still rasterizes.
    pub const MIN_ADAPTIVE_SIGMA: f64 = 0.5;

    pub fn fixed(sigma: f64) -> Result<Self, DensityError> {
        let spec = Self {
            mode: KernelMode::Fixed { sigma },
            truncation_radius: Self::DEFAULT_TRUNCATION,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn adaptive(k: usize, beta: f64, fallback_sigma: f64) -> Result<Self, DensityError> {
        let spec = Self {
            mode: KernelMode::Adaptive {
                k,
                beta,
                fallback_sigma,
            },
            truncation_radius: Self::DEFAULT_TRUNCATION,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_truncation(mut self, truncation_radius: f64) -> Result<Self, DensityError> {
        self.truncation_radius = truncation_radius;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), DensityError> {
        let bad = |msg: String| Err(DensityError::InvalidParameter(msg));
        if !(self.truncation_radius >= 1.0 && self.truncation_radius.is_finite()) {
            return bad(format!(
                "truncation_radius must be >= 1, got {}",
                self.truncation_radius
            ));
        }
        match self.mode {
            KernelMode::Fixed { sigma } => {
                if !(sigma > 0.0 && sigma.is_finite()) {
                    return bad(format!("sigma must be positive, got {sigma}"));
                }
            }
            KernelMode::Adaptive {
                k,
                beta,
                fallback_sigma,
            } => {
                if k < 1 {
                    return bad("k must be at least 1".into());
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return bad(format!("beta must be positive, got {beta}"));
                }
                if !(fallback_sigma > 0.0 && fallback_sigma.is_finite()) {
                    return bad(format!(
                        "fallback_sigma must be positive, got {fallback_sigma}"
                    ));
                }
            }
        }
        Ok(())
    }
}

impl Default for KernelSpec {
    /// The adaptive configuration used throughout: k = 3, beta = 0.3.
    fn default() -> Self {
        Self {
            mode: KernelMode::Adaptive {
                k: Self::DEFAULT_K,
                beta: Self::DEFAULT_BETA,
                fallback_sigma: Self::DEFAULT_FALLBACK_SIGMA,
            },
            truncation_radius: Self::DEFAULT_TRUNCATION,
        }
    }
}

/// Non-negative scalar grid whose sum is an object count.
///
/// `scale` records cells per source pixel: ground truth is generated at
/// source resolution (scale 1); predictor grids may arrive at any scale
/// and are compared through sums only.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    scale: f64,
}

impl DensityMap {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>, scale: f64) -> Result<Self, DensityError> {
        if rows == 0 || cols == 0 {
            return Err(DensityError::InvalidParameter(format!(
                "grid dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(DensityError::InvalidParameter(format!(
                "value buffer holds {} cells, grid needs {}",
                values.len(),
                rows * cols
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(DensityError::InvalidParameter(format!(
                "scale must be positive and finite, got {scale}"
            )));
        }
        if let Some(bad) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(DensityError::InvalidParameter(format!(
                "cell {bad} holds {} (values must be finite and non-negative)",
                values[bad]
            )));
        }
        Ok(Self {
            rows,
            cols,
            values,
            scale,
        })
    }

    pub fn zeros(rows: usize, cols: usize, scale: f64) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols], scale)
            .expect("zero grid construction cannot fail for positive dims")
    }

    /// Construction path for values produced internally (already known
    /// finite and non-negative).
    pub(crate) fn from_parts(rows: usize, cols: usize, values: Vec<f64>, scale: f64) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self {
            rows,
            cols,
            values,
            scale,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        assert!(row < self.rows && col < self.cols);
        self.values[row * self.cols + col]
    }

    /// Sum of all cells: the count estimate this map encodes.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }
}

/// Mean Euclidean distance from `points[index]` to its `k` nearest other
/// points. Ties are broken by keeping any `k` among the tied; tied
/// distances are equal values, so the mean does not depend on the choice.
pub fn knn_mean_distance(points: &[Point], index: usize, k: usize) -> Result<f64, DensityError> {
    if k == 0 {
        return Err(DensityError::InvalidParameter("k must be at least 1".into()));
    }
    if index >= points.len() {
        return Err(DensityError::InvalidParameter(format!(
            "index {index} out of range for {} points",
            points.len()
        )));
    }
    let available = points.len() - 1;
    if available < k {
        return Err(DensityError::InsufficientNeighbors { k, available });
    }
    let d2 = knn::k_smallest_sq_dists_brute(points, index, k);
    Ok(knn::mean_of_sorted_sq_dists(&d2))
}

/// Per-point adaptive bandwidths `sigma_i = beta * d_i` where `d_i` is the
/// mean distance to the k nearest other points. Points without k other
/// points get `fallback_sigma`; computed sigmas at or below
/// [`KernelSpec::MIN_ADAPTIVE_SIGMA`] are clamped up to it.
pub fn adaptive_sigmas(
    annotations: &PointAnnotationSet,
    spec: &KernelSpec,
) -> Result<Vec<f64>, DensityError> {
    spec.validate()?;
    let KernelMode::Adaptive {
        k,
        beta,
        fallback_sigma,
    } = spec.mode
    else {
        return Err(DensityError::InvalidParameter(
            "adaptive_sigmas requires an adaptive kernel spec".into(),
        ));
    };
    let points = annotations.points();
    let n = points.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    if n <= k {
        // No point has k other points.
        return Ok(vec![fallback_sigma; n]);
    }
    let sigmas = knn::all_knn_mean_distances(points, k)
        .into_iter()
        .map(|d| {
            let sigma = beta * d;
            if sigma <= KernelSpec::MIN_ADAPTIVE_SIGMA {
                KernelSpec::MIN_ADAPTIVE_SIGMA
            } else {
                sigma
            }
        })
        .collect();
    Ok(sigmas)
}

/// Renders one unit-mass Gaussian into a fresh grid.
///
/// The kernel is evaluated at cell centers within `truncation_radius *
/// sigma` of `center` and renormalized so the contributed in-grid mass is
/// exactly one, clipped support included. A support too small to reach
/// any cell center degenerates to a point deposit in the containing cell.
pub fn render_gaussian(
    center: Point,
    sigma: f64,
    rows: usize,
    cols: usize,
    truncation_radius: f64,
) -> Result<DensityMap, DensityError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(DensityError::InvalidParameter(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    if !(truncation_radius >= 1.0 && truncation_radius.is_finite()) {
        return Err(DensityError::InvalidParameter(format!(
            "truncation_radius must be >= 1, got {truncation_radius}"
        )));
    }
    if rows == 0 || cols == 0 {
        return Err(DensityError::InvalidParameter(
            "grid dimensions must be positive".into(),
        ));
    }
    let mut values = vec![0.0; rows * cols];
    let mut scratch = Vec::new();
    render_gaussian_into(&mut values, rows, cols, center, sigma, truncation_radius, &mut scratch)?;
    Ok(DensityMap::from_parts(rows, cols, values, 1.0))
}

/// Accumulates one renormalized kernel into an existing buffer. `scratch`
/// is reused across calls to avoid per-point allocation.
fn render_gaussian_into(
    values: &mut [f64],
    rows: usize,
    cols: usize,
    center: Point,
    sigma: f64,
    truncation_radius: f64,
    scratch: &mut Vec<f64>,
) -> Result<(), DensityError> {
    let in_grid = center.x >= 0.0
        && center.x < cols as f64
        && center.y >= 0.0
        && center.y < rows as f64;
    if !in_grid {
        return Err(DensityError::OutOfBounds {
            x: center.x,
            y: center.y,
            rows,
            cols,
        });
    }

    let radius = truncation_radius * sigma;
    let radius_sq = radius * radius;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma * sigma);

    // Cells whose center (c + 0.5, r + 0.5) can lie within the truncation
    // circle, clamped to the grid.
    let col_lo = (center.x - radius - 0.5).ceil().max(0.0) as usize;
    let col_hi_f = (center.x + radius - 0.5).floor();
    let row_lo = (center.y - radius - 0.5).ceil().max(0.0) as usize;
    let row_hi_f = (center.y + radius - 0.5).floor();

    let mut mass = 0.0;
    scratch.clear();
    if col_hi_f >= col_lo as f64 && row_hi_f >= row_lo as f64 {
        let col_hi = (col_hi_f as usize).min(cols - 1);
        let row_hi = (row_hi_f as usize).min(rows - 1);
        for row in row_lo..=row_hi {
            let dy = (row as f64 + 0.5) - center.y;
            let dy_sq = dy * dy;
            for col in col_lo..=col_hi {
                let dx = (col as f64 + 0.5) - center.x;
                let d_sq = dx * dx + dy_sq;
                let w = if d_sq <= radius_sq {
                    (-d_sq * inv_two_sigma_sq).exp()
                } else {
                    0.0
                };
                scratch.push(w);
                mass += w;
            }
        }
        if mass > 0.0 {
            let mut i = 0;
            for row in row_lo..=row_hi {
                let base = row * cols;
                for col in col_lo..=col_hi {
                    values[base + col] += scratch[i] / mass;
                    i += 1;
                }
            }
            return Ok(());
        }
    }

    // Support misses every cell center (tiny sigma near a cell corner):
    // deposit the whole unit into the cell containing the point.
    let row = (center.y as usize).min(rows - 1);
    let col = (center.x as usize).min(cols - 1);
    values[row * cols + col] += 1.0;
    Ok(())
}

/// Superimposes one unit-mass kernel per annotated point onto a grid at
/// source-pixel resolution. The sum of the result equals the point count
/// up to floating-point rounding.
pub fn generate_density_map(
    annotations: &PointAnnotationSet,
    spec: &KernelSpec,
) -> Result<DensityMap, DensityError> {
    spec.validate()?;
    let rows = annotations.height() as usize;
    let cols = annotations.width() as usize;
    let mut values = vec![0.0; rows * cols];
    let mut scratch = Vec::new();
    match spec.mode {
        KernelMode::Fixed { sigma } => {
            for p in annotations.points() {
                render_gaussian_into(
                    &mut values,
                    rows,
                    cols,
                    *p,
                    sigma,
                    spec.truncation_radius,
                    &mut scratch,
                )?;
            }
        }
        KernelMode::Adaptive { .. } => {
            let sigmas = adaptive_sigmas(annotations, spec)?;
            for (p, sigma) in annotations.points().iter().zip(&sigmas) {
                render_gaussian_into(
                    &mut values,
                    rows,
                    cols,
                    *p,
                    *sigma,
                    spec.truncation_radius,
                    &mut scratch,
                )?;
            }
        }
    }
    Ok(DensityMap::from_parts(rows, cols, values, 1.0))
}

/// Sum of all cells, accumulated in row-major order.
pub fn integrate(map: &DensityMap) -> f64 {
    map.values().iter().sum()
}

/// Sum-pools `factor x factor` blocks; partial edge blocks are pooled
/// as-is. Total mass is conserved exactly in exact arithmetic.
pub fn downsample(map: &DensityMap, factor: usize) -> Result<DensityMap, DensityError> {
    if factor == 0 {
        return Err(DensityError::InvalidParameter(
            "downsample factor must be at least 1".into(),
        ));
    }
    if factor == 1 {
        return Ok(map.clone());
    }
    let out_rows = map.rows().div_ceil(factor);
    let out_cols = map.cols().div_ceil(factor);
    let mut out = vec![0.0; out_rows * out_cols];
    for out_row in 0..out_rows {
        let row_end = ((out_row + 1) * factor).min(map.rows());
        for out_col in 0..out_cols {
            let col_end = ((out_col + 1) * factor).min(map.cols());
            let mut sum = 0.0;
            for row in out_row * factor..row_end {
                let base = row * map.cols();
                for col in out_col * factor..col_end {
                    sum += map.values()[base + col];
                }
            }
            out[out_row * out_cols + out_col] = sum;
        }
    }
    Ok(DensityMap::from_parts(
        out_rows,
        out_cols,
        out,
        map.scale() / factor as f64,
    ))
}
