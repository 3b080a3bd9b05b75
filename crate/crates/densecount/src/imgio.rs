//! Binary PPM (P6) and PGM (P5) reading and writing, 8-bit samples only.
//!
//! The header accepts arbitrary whitespace and `#` comments between
//! tokens; writers emit the canonical `P6\n<w> <h>\n255\n` form so
//! identical pixel data produces identical bytes.

use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
}

fn format_err(msg: impl Into<String>) -> PnmError {
    PnmError::Format(msg.into())
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height, "pixel buffer size mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

impl fmt::Display for GrayImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} grayscale", self.width, self.height)
    }
}

/// 8-bit RGB image, interleaved row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), 3 * width * height, "pixel buffer size mismatch");
        Self {
            width,
            height,
            pixels,
        }
    }

    /// Rec. 601 luma, rounded to the nearest integer.
    pub fn to_gray(&self) -> GrayImage {
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|rgb| {
                let y = 0.299 * rgb[0] as f64 + 0.587 * rgb[1] as f64 + 0.114 * rgb[2] as f64;
                y.round() as u8
            })
            .collect();
        GrayImage::new(self.width, self.height, pixels)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PnmImage {
    Gray(GrayImage),
    Rgb(RgbImage),
}

impl PnmImage {
    pub fn dimensions(&self) -> (usize, usize) {
        match self {
            PnmImage::Gray(g) => (g.width, g.height),
            PnmImage::Rgb(c) => (c.width, c.height),
        }
    }

    pub fn to_gray(&self) -> GrayImage {
        match self {
            PnmImage::Gray(g) => g.clone(),
            PnmImage::Rgb(c) => c.to_gray(),
        }
    }

    /// Expands grayscale to RGB; RGB passes through.
    pub fn to_rgb(&self) -> RgbImage {
        match self {
            PnmImage::Rgb(c) => c.clone(),
            PnmImage::Gray(g) => {
                let mut pixels = Vec::with_capacity(3 * g.pixels.len());
                for &v in &g.pixels {
                    pixels.extend_from_slice(&[v, v, v]);
                }
                RgbImage::new(g.width, g.height, pixels)
            }
        }
    }
}

/// Reads header tokens, skipping whitespace and `#`-to-end-of-line
/// comments. Returns (token, next offset).
fn next_token(bytes: &[u8], mut pos: usize) -> Result<(&str, usize), PnmError> {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        break;
    }
    let start = pos;
    while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    if start == pos {
        return Err(format_err("truncated header"));
    }
    let token = std::str::from_utf8(&bytes[start..pos])
        .map_err(|_| format_err("non-ascii header token"))?;
    Ok((token, pos))
}

pub fn parse_pnm(bytes: &[u8]) -> Result<PnmImage, PnmError> {
    let (magic, mut pos) = next_token(bytes, 0)?;
    let channels = match magic {
        "P5" => 1usize,
        "P6" => 3usize,
        other => {
            return Err(format_err(format!(
                "unsupported magic {other:?} (binary P5/P6 only)"
            )))
        }
    };
    let mut dims = [0usize; 2];
    for slot in &mut dims {
        let (tok, next) = next_token(bytes, pos)?;
        *slot = tok
            .parse()
            .map_err(|e| format_err(format!("bad dimension {tok:?}: {e}")))?;
        pos = next;
    }
    let (maxval, next) = next_token(bytes, pos)?;
    let maxval: u32 = maxval
        .parse()
        .map_err(|e| format_err(format!("bad maxval {maxval:?}: {e}")))?;
    if maxval == 0 || maxval > 255 {
        return Err(format_err(format!(
            "unsupported maxval {maxval} (8-bit samples only)"
        )));
    }
    pos = next;
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err("missing raster separator"));
    }
    pos += 1;
    let (width, height) = (dims[0], dims[1]);
    if width == 0 || height == 0 {
        return Err(format_err(format!("degenerate dimensions {width}x{height}")));
    }
    let expected = channels
        .checked_mul(width)
        .and_then(|n| n.checked_mul(height))
        .ok_or_else(|| format_err("dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() != expected {
        return Err(format_err(format!(
            "raster holds {} bytes, {width}x{height} needs {expected}",
            raster.len()
        )));
    }
    let pixels = raster.to_vec();
    Ok(match channels {
        1 => PnmImage::Gray(GrayImage::new(width, height, pixels)),
        _ => PnmImage::Rgb(RgbImage::new(width, height, pixels)),
    })
}

pub fn read_pnm(path: &Path) -> Result<PnmImage, PnmError> {
    let bytes = std::fs::read(path).map_err(|source| PnmError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_pnm(&bytes).map_err(|e| match e {
        PnmError::Format(msg) => PnmError::Format(format!("{}: {msg}", path.display())),
        io => io,
    })
}

pub fn pgm_bytes(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn ppm_bytes(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_pgm(img: &GrayImage, path: &Path) -> Result<(), PnmError> {
    std::fs::write(path, pgm_bytes(img)).map_err(|source| PnmError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_ppm(img: &RgbImage, path: &Path) -> Result<(), PnmError> {
    std::fs::write(path, ppm_bytes(img)).map_err(|source| PnmError::Io {
        path: path.to_path_buf(),
        source,
    })
}
