//! Synthetic blob scenes with exact ground truth, for harness self-tests.

use crate::density::{DensityError, Point, PointAnnotationSet};
use crate::imgio::GrayImage;
use crate::rng::SplitMix64;

const BACKGROUND: f64 = 235.0;
const BLOB_DEPTH: f64 = 200.0;

/// Renders `count` dark Gaussian blobs on a light background, placed on a
/// jittered grid so neighboring centers stay at least `4 * blob_sigma + 2`
/// pixels apart and clear of the borders. Returns the image and the exact
/// center annotations. Fails when the requested count cannot be laid out
/// at that separation.
pub fn blob_scene(
    count: usize,
    width: usize,
    height: usize,
    blob_sigma: f64,
    rng: &mut SplitMix64,
) -> Result<(GrayImage, PointAnnotationSet), DensityError> {
    assert!(blob_sigma > 0.0 && blob_sigma.is_finite());
    let margin = (4.0 * blob_sigma).ceil() + 2.0;
    let min_sep = 4.0 * blob_sigma + 2.0;
    let usable_w = width as f64 - 2.0 * margin;
    let usable_h = height as f64 - 2.0 * margin;
    let grid = (count.max(1) as f64).sqrt().ceil() as usize;
    let cell_w = usable_w / grid as f64;
    let cell_h = usable_h / grid as f64;
    if count > 0 && (cell_w < min_sep || cell_h < min_sep) {
        return Err(DensityError::InvalidParameter(format!(
            "cannot place {count} blobs of sigma {blob_sigma} in a {width}x{height} scene"
        )));
    }

    let mut cells: Vec<usize> = (0..grid * grid).collect();
    rng.shuffle(&mut cells);
    let jitter_w = (cell_w - min_sep) / 2.0;
    let jitter_h = (cell_h - min_sep) / 2.0;
    let mut points = Vec::with_capacity(count);
    for cell in cells.into_iter().take(count) {
        let (row, col) = (cell / grid, cell % grid);
        let cx = margin + (col as f64 + 0.5) * cell_w + rng.next_range(-jitter_w, jitter_w);
        let cy = margin + (row as f64 + 0.5) * cell_h + rng.next_range(-jitter_h, jitter_h);
        points.push(Point::new(cx, cy));
    }

    let mut field = vec![0.0f64; width * height];
    let inv = 1.0 / (2.0 * blob_sigma * blob_sigma);
    let reach = (4.0 * blob_sigma).ceil() as i64;
    for p in &points {
        let x0 = ((p.x as i64) - reach).max(0);
        let x1 = ((p.x as i64) + reach).min(width as i64 - 1);
        let y0 = ((p.y as i64) - reach).max(0);
        let y1 = ((p.y as i64) + reach).min(height as i64 - 1);
        for y in y0..=y1 {
            let dy = (y as f64 + 0.5) - p.y;
            for x in x0..=x1 {
                let dx = (x as f64 + 0.5) - p.x;
                field[y as usize * width + x as usize] +=
                    BLOB_DEPTH * (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    let pixels = field
        .iter()
        .map(|v| (BACKGROUND - v).clamp(0.0, 255.0).round() as u8)
        .collect();
    let image = GrayImage::new(width, height, pixels);
    let annotations = PointAnnotationSet::new("scene", width as u32, height as u32, points)?;
    Ok((image, annotations))
}
