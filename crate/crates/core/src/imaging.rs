//! Raster types and the pre-processing stages shared by both segmentation threads.
//!
//! Intensities are normalized to `[0, 1]` when decoded; 8-bit sources are divided by 255.

use std::io::Cursor;
use std::path::Path;

use image::{GrayImage as Luma8, ImageFormat};

use crate::error::{Error, Result};

/// ITU-R BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidInput(format!(
            "raster dimensions must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Single-channel image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} intensities for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidInput(format!("intensity {v} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y).clamp(0.0, 1.0));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Decodes any PNG/JPEG and converts it to gray through [`to_grayscale`].
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Ok(to_grayscale(&RgbImage::decode(bytes)?))
    }
}

/// Three-channel image, row-major `[r, g, b]` triples in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[f64; 3]>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("channel value outside [0, 1]".into()));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Result<Self> {
        Self::new(width, height, vec![rgb; width * height])
    }

    /// Gray image replicated into three equal channels.
    pub fn from_gray(gray: &GrayImage) -> Self {
        Self {
            width: gray.width,
            height: gray.height,
            data: gray.data.iter().map(|&g| [g, g, g]).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let rgb = image::load_from_memory(bytes)?.to_rgb8();
        let (w, h) = (rgb.width() as usize, rgb.height() as usize);
        let data = rgb
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect();
        Self::new(w, h, data)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Encodes as 8-bit RGB PNG (channels rounded to the nearest level).
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw: Vec<u8> = self
            .data
            .iter()
            .flat_map(|px| px.map(|c| (c * 255.0).round() as u8))
            .collect();
        let img = image::RgbImage::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer sized from dimensions");
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
        Ok(out)
    }
}

/// Boolean raster; `true` marks spot (foreground) pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::InvalidInput(format!(
                "expected {} mask pixels for {width}x{height}, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Result<Self> {
        check_dims(width, height)?;
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn same_dims(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixel-wise OR. Fails on a dimension mismatch.
    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if !self.same_dims(other) {
            return Err(Error::InvalidInput(format!(
                "cannot OR {}x{} with {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a || *b).collect();
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data,
        })
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| !v).collect(),
        }
    }

    /// Encodes as 8-bit grayscale PNG: foreground 255, background 0.
    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let raw = self.data.iter().map(|&v| if v { 255u8 } else { 0 }).collect();
        let img = Luma8::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer sized from dimensions");
        let mut out = Vec::new();
        img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)?;
        Ok(out)
    }

    /// Decodes a mask image; any pixel with luma ≥ 128 is foreground.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let gray = image::load_from_memory(bytes)?.to_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        Self::new(w, h, gray.pixels().map(|p| p.0[0] >= 128).collect())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn open_png(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_png(&bytes)
    }
}

/// Luma conversion `0.299 R + 0.587 G + 0.114 B`.
pub fn to_grayscale(img: &RgbImage) -> GrayImage {
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let data = img
        .data
        .iter()
        .map(|&[r, g, b]| (wr * r + wg * g + wb * b).clamp(0.0, 1.0))
        .collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// Square-window median with edge replication at the borders.
///
/// `window` must be odd and no larger than the smaller image side.
pub fn median_filter(img: &GrayImage, window: usize) -> Result<GrayImage> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "median window must be odd and >= 1, got {window}"
        )));
    }
    if window > img.width.min(img.height) {
        return Err(Error::InvalidParameter(format!(
            "median window {window} exceeds image side {}",
            img.width.min(img.height)
        )));
    }
    if window == 1 {
        return Ok(img.clone());
    }
    let r = (window / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mid = window * window / 2;
    let mut buf = Vec::with_capacity(window * window);
    let mut data = Vec::with_capacity(img.data.len());
    for y in 0..h {
        for x in 0..w {
            buf.clear();
            for dy in -r..=r {
                let yy = (y + dy).clamp(0, h - 1) as usize;
                let row = &img.data[yy * img.width..(yy + 1) * img.width];
                for dx in -r..=r {
                    buf.push(row[(x + dx).clamp(0, w - 1) as usize]);
                }
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            data.push(*m);
        }
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data,
    })
}

/// Power-law intensity mapping `out = in^gamma`.
pub fn gamma_correct(img: &GrayImage, gamma: f64) -> Result<GrayImage> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gamma must be positive and finite, got {gamma}"
        )));
    }
    Ok(GrayImage {
        width: img.width,
        height: img.height,
        data: img.data.iter().map(|v| v.powf(gamma)).collect(),
    })
}
