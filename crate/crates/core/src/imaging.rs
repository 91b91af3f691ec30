//! Raster primitives, rubber-sheet polar unwrapping and the two filters the
//! quality covariates are built on (10×10 sliding median, Laplacian of
//! Gaussian).

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by raster construction, IO and polar unwrapping.
#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("raster dimensions {width}x{height} do not match {len} samples")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("raster must be non-empty (got {width}x{height})")]
    EmptyRaster { width: usize, height: usize },
    #[error("invalid segmentation geometry: {0}")]
    InvalidGeometry(String),
    #[error("polar grid {rows}x{cols} below minimum 4x16")]
    DegenerateGrid { rows: usize, cols: usize },
    #[error("sector list selects no columns")]
    EmptySectors,
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    MaskMismatch {
        img_w: usize,
        img_h: usize,
        mask_w: usize,
        mask_h: usize,
    },
    #[error("failed to read image {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("failed to write image {path}: {source}")]
    Encode {
        path: String,
        #[source]
        source: image::ImageError,
    },
}

/// 8-bit grayscale raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyRaster { width, height });
        }
        if width * height != pixels.len() {
            return Err(ImagingError::DimensionMismatch {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Uniform raster. Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self::new(width, height, vec![value; width * height]).expect("non-empty raster")
    }

    /// Builds a raster from `f(x, y)`. Panics on a zero dimension.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self::new(width, height, pixels).expect("non-empty raster")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Reads an 8-bit grayscale PGM (P5) or PNG. Colour inputs are rejected
    /// by the decoder's luma conversion only if they are not already gray.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ImagingError> {
        let path = path.as_ref();
        let decoded = image::open(path).map_err(|source| ImagingError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        let gray = decoded.into_luma8();
        let (w, h) = gray.dimensions();
        Self::new(w as usize, h as usize, gray.into_raw())
    }

    /// Writes the raster; the format follows the extension (`.pgm` or `.png`).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ImagingError> {
        let path = path.as_ref();
        let buf: image::GrayImage =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, self.pixels.clone())
                .expect("buffer length checked at construction");
        let result = match path.extension().and_then(|e| e.to_str()) {
            Some("png") => buf.save_with_format(path, image::ImageFormat::Png),
            _ => {
                let file = std::fs::File::create(path).map_err(image::ImageError::IoError);
                file.and_then(|f| {
                    let mut w = std::io::BufWriter::new(f);
                    let enc = image::codecs::pnm::PnmEncoder::new(&mut w).with_subtype(
                        image::codecs::pnm::PnmSubtype::Graymap(
                            image::codecs::pnm::SampleEncoding::Binary,
                        ),
                    );
                    image::ImageEncoder::write_image(
                        enc,
                        &self.pixels,
                        self.width as u32,
                        self.height as u32,
                        image::ExtendedColorType::L8,
                    )
                })
            }
        };
        result.map_err(|source| ImagingError::Encode {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Per-pixel validity flags; `true` marks an unoccluded iris pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self, ImagingError> {
        if width == 0 || height == 0 {
            return Err(ImagingError::EmptyRaster { width, height });
        }
        if width * height != bits.len() {
            return Err(ImagingError::DimensionMismatch {
                width,
                height,
                len: bits.len(),
            });
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![true; width * height]).expect("non-empty mask")
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits).expect("non-empty mask")
    }

    /// Interprets a raster as a mask: 0 is occluded, anything else valid.
    pub fn from_image(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            bits: img.pixels.iter().map(|&p| p != 0).collect(),
        }
    }

    /// Mask as a raster with 0 = occluded and 255 = valid.
    pub fn to_image(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    /// Number of valid pixels.
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn check_matches(&self, img: &GrayImage) -> Result<(), ImagingError> {
        if self.width != img.width || self.height != img.height {
            return Err(ImagingError::MaskMismatch {
                img_w: img.width,
                img_h: img.height,
                mask_w: self.width,
                mask_h: self.height,
            });
        }
        Ok(())
    }
}

/// Real-valued raster, used for signed filter responses.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRaster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl SignedRaster {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Pupil and limbus circles in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentationCircles {
    pub pupil_center: (f64, f64),
    pub pupil_radius: f64,
    pub iris_center: (f64, f64),
    pub iris_radius: f64,
}

impl SegmentationCircles {
    pub fn concentric(center: (f64, f64), pupil_radius: f64, iris_radius: f64) -> Self {
        Self {
            pupil_center: center,
            pupil_radius,
            iris_center: center,
            iris_radius,
        }
    }

    pub fn validate(&self) -> Result<(), ImagingError> {
        let vals = [
            self.pupil_center.0,
            self.pupil_center.1,
            self.pupil_radius,
            self.iris_center.0,
            self.iris_center.1,
            self.iris_radius,
        ];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(ImagingError::InvalidGeometry("non-finite circle parameter".into()));
        }
        if self.pupil_radius <= 0.0 {
            return Err(ImagingError::InvalidGeometry(format!(
                "pupil radius {} must be positive",
                self.pupil_radius
            )));
        }
        if self.pupil_radius >= self.iris_radius {
            return Err(ImagingError::InvalidGeometry(format!(
                "pupil radius {} must be smaller than iris radius {}",
                self.pupil_radius, self.iris_radius
            )));
        }
        let dx = self.pupil_center.0 - self.iris_center.0;
        let dy = self.pupil_center.1 - self.iris_center.1;
        if (dx * dx + dy * dy).sqrt() + self.pupil_radius > self.iris_radius {
            return Err(ImagingError::InvalidGeometry(
                "pupil circle is not contained in the iris circle".into(),
            ));
        }
        Ok(())
    }
}

/// Half-open angular interval `[start, end)` in degrees, counterclockwise
/// from 3 o'clock. Bounds may be negative or exceed 360.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sector {
    pub start_deg: f64,
    pub end_deg: f64,
}

impl Sector {
    pub const FULL: Sector = Sector {
        start_deg: 0.0,
        end_deg: 360.0,
    };

    pub fn new(start_deg: f64, end_deg: f64) -> Self {
        Self { start_deg, end_deg }
    }

    fn span(&self) -> f64 {
        (self.end_deg - self.start_deg).clamp(0.0, 360.0)
    }

    fn contains(&self, angle_deg: f64) -> bool {
        let span = self.span();
        if span >= 360.0 {
            return true;
        }
        let offset = (angle_deg - self.start_deg).rem_euclid(360.0);
        offset < span
    }

    /// Parses `"-45:45,135:225"`.
    pub fn parse_list(s: &str) -> Result<Vec<Sector>, String> {
        s.split(',')
            .map(|part| {
                let (a, b) = part
                    .split_once(':')
                    .ok_or_else(|| format!("sector `{part}` is not START:END"))?;
                let a: f64 = a.trim().parse().map_err(|_| format!("bad angle `{a}`"))?;
                let b: f64 = b.trim().parse().map_err(|_| format!("bad angle `{b}`"))?;
                if b <= a {
                    return Err(format!("sector `{part}` has end <= start"));
                }
                Ok(Sector::new(a, b))
            })
            .collect()
    }
}

/// Rubber-sheet normalized iris: rows run from the pupil to the limbus,
/// columns are angular samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarIris {
    pub texture: GrayImage,
    pub mask: BitMask,
    pub sectors: Vec<Sector>,
}

impl PolarIris {
    pub fn new(texture: GrayImage, mask: BitMask, sectors: Vec<Sector>) -> Result<Self, ImagingError> {
        mask.check_matches(&texture)?;
        Ok(Self {
            texture,
            mask,
            sectors,
        })
    }

    pub fn rows(&self) -> usize {
        self.texture.height()
    }

    pub fn cols(&self) -> usize {
        self.texture.width()
    }

    /// True when the columns wrap around the whole circle, so the angular
    /// axis is periodic.
    pub fn is_full_circle(&self) -> bool {
        self.sectors.iter().map(Sector::span).sum::<f64>() >= 360.0
    }
}

/// Polar sampling grid parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarGrid {
    pub rows: usize,
    /// Angular density expressed as columns per full circle.
    pub cols: usize,
    pub sectors: Vec<Sector>,
}

impl Default for PolarGrid {
    fn default() -> Self {
        Self {
            rows: 64,
            cols: 512,
            sectors: vec![Sector::FULL],
        }
    }
}

pub const MIN_POLAR_ROWS: usize = 4;
pub const MIN_POLAR_COLS: usize = 16;

/// Bilinear sample at a real-valued position; coordinates must already be
/// inside `[0, w-1] x [0, h-1]`.
fn bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
    let bottom = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Angles (degrees) of the output columns for a grid.
pub fn column_angles(grid: &PolarGrid) -> Vec<f64> {
    (0..grid.cols)
        .map(|c| 360.0 * c as f64 / grid.cols as f64)
        .filter(|&a| grid.sectors.iter().any(|s| s.contains(a)))
        .collect()
}

/// Maps the iris annulus onto a `rows × columns` rectangle.
///
/// Row `r` samples at the fraction `(r + 0.5) / rows` of the way from the
/// pupil boundary to the limbus along each ray. Samples falling outside the
/// image are clamped to the border and flagged invalid; otherwise the mask
/// bit is the conjunction of the input mask over the bilinear support.
pub fn unwrap_to_polar(
    img: &GrayImage,
    seg: &SegmentationCircles,
    mask: Option<&BitMask>,
    grid: &PolarGrid,
) -> Result<PolarIris, ImagingError> {
    seg.validate()?;
    if grid.rows < MIN_POLAR_ROWS || grid.cols < MIN_POLAR_COLS {
        return Err(ImagingError::DegenerateGrid {
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    if let Some(m) = mask {
        m.check_matches(img)?;
    }
    let angles = column_angles(grid);
    if angles.is_empty() {
        return Err(ImagingError::EmptySectors);
    }

    let ncols = angles.len();
    let mut texture = vec![0u8; grid.rows * ncols];
    let mut valid = vec![false; grid.rows * ncols];
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;

    for (c, &deg) in angles.iter().enumerate() {
        let theta = deg.to_radians();
        let (dx, dy) = (theta.cos(), -theta.sin());
        let px = seg.pupil_center.0 + seg.pupil_radius * dx;
        let py = seg.pupil_center.1 + seg.pupil_radius * dy;
        let ix = seg.iris_center.0 + seg.iris_radius * dx;
        let iy = seg.iris_center.1 + seg.iris_radius * dy;
        for r in 0..grid.rows {
            let rho = (r as f64 + 0.5) / grid.rows as f64;
            let x = px + rho * (ix - px);
            let y = py + rho * (iy - py);
            let inside = (0.0..=max_x).contains(&x) && (0.0..=max_y).contains(&y);
            let (sx, sy) = (x.clamp(0.0, max_x), y.clamp(0.0, max_y));
            let value = bilinear(img, sx, sy);
            let idx = r * ncols + c;
            texture[idx] = value.round().clamp(0.0, 255.0) as u8;
            valid[idx] = inside
                && mask.is_none_or(|m| {
                    let x0 = sx.floor() as usize;
                    let y0 = sy.floor() as usize;
                    let x1 = (x0 + 1).min(img.width - 1);
                    let y1 = (y0 + 1).min(img.height - 1);
                    m.get(x0, y0) && m.get(x1, y0) && m.get(x0, y1) && m.get(x1, y1)
                });
        }
    }

    Ok(PolarIris {
        texture: GrayImage::new(ncols, grid.rows, texture)?,
        mask: BitMask::new(ncols, grid.rows, valid)?,
        sectors: grid.sectors.clone(),
    })
}

/// Rows/cols before and after the centre pixel covered by the 10×10 window.
pub const MEDIAN_WINDOW_BEFORE: usize = 4;
pub const MEDIAN_WINDOW_AFTER: usize = 5;

/// 10×10 sliding median: pixel (x, y) owns columns x-4..=x+5 and rows
/// y-4..=y+5, clipped at the border. For an even number of surviving pixels
/// the lower of the two middle values is taken.
pub fn median_filter_10x10(img: &GrayImage) -> GrayImage {
    median_filter(img, MEDIAN_WINDOW_BEFORE, MEDIAN_WINDOW_AFTER)
}

/// Rectangular sliding median with an asymmetric window, computed with a
/// running 256-bin histogram per row (Huang's algorithm).
pub fn median_filter(img: &GrayImage, before: usize, after: usize) -> GrayImage {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0u8; w * h];
    let mut hist = [0u32; 256];

    for y in 0..h {
        let y_lo = y.saturating_sub(before);
        let y_hi = (y + after).min(h - 1);
        hist.fill(0);
        let mut count = 0u32;
        // Prime with columns 0..=after of the first window.
        for x in 0..=after.min(w - 1) {
            for yy in y_lo..=y_hi {
                hist[img.get(x, yy) as usize] += 1;
                count += 1;
            }
        }
        for x in 0..w {
            if x > 0 {
                let add = x + after;
                if add < w {
                    for yy in y_lo..=y_hi {
                        hist[img.get(add, yy) as usize] += 1;
                    }
                    count += (y_hi - y_lo + 1) as u32;
                }
                if x > before {
                    let drop = x - before - 1;
                    for yy in y_lo..=y_hi {
                        hist[img.get(drop, yy) as usize] -= 1;
                    }
                    count -= (y_hi - y_lo + 1) as u32;
                }
            }
            // Lower median: the element at sorted index (count - 1) / 2.
            let rank = (count - 1) / 2;
            let mut acc = 0u32;
            let mut value = 0u8;
            for (v, &n) in hist.iter().enumerate() {
                acc += n;
                if acc > rank {
                    value = v as u8;
                    break;
                }
            }
            out[y * w + x] = value;
        }
    }
    GrayImage {
        width: w,
        height: h,
        pixels: out,
    }
}

pub const DEFAULT_LOG_SIGMA: f64 = 1.4;

/// Side of the LoG kernel for a given scale: ⌈6σ⌉ rounded up to odd.
pub fn log_kernel_side(sigma: f64) -> usize {
    let side = (6.0 * sigma).ceil().max(1.0) as usize;
    if side.is_multiple_of(2) {
        side + 1
    } else {
        side
    }
}

/// Discretized Laplacian-of-Gaussian kernel, row-major, mean-subtracted so
/// that it sums to zero.
pub fn log_kernel(sigma: f64) -> (usize, Vec<f64>) {
    assert!(sigma > 0.0, "LoG scale must be positive");
    let side = log_kernel_side(sigma);
    let half = (side / 2) as i64;
    let s2 = sigma * sigma;
    let norm = -1.0 / (std::f64::consts::PI * s2 * s2);
    let mut k = Vec::with_capacity(side * side);
    for dy in -half..=half {
        for dx in -half..=half {
            let r2 = (dx * dx + dy * dy) as f64 / (2.0 * s2);
            k.push(norm * (1.0 - r2) * (-r2).exp());
        }
    }
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    (side, k)
}

/// Convolves with the zero-sum LoG kernel, replicating edge pixels. Taps are
/// accumulated as differences from the centre pixel, which leaves the result
/// unchanged for a zero-sum kernel and makes flat regions exactly zero.
pub fn log_filter(img: &GrayImage, sigma: f64) -> SignedRaster {
    let (side, kernel) = log_kernel(sigma);
    let half = (side / 2) as isize;
    let (w, h) = (img.width as isize, img.height as isize);
    let mut data = Vec::with_capacity(img.pixels.len());
    for y in 0..h {
        for x in 0..w {
            let centre = img.pixels[y as usize * img.width + x as usize] as f64;
            let mut acc = 0.0;
            let mut ki = 0;
            // Kernel is point-symmetric, so correlation equals convolution.
            for dy in -half..=half {
                let yy = (y + dy).clamp(0, h - 1) as usize;
                let row = &img.pixels[yy * img.width..(yy + 1) * img.width];
                for dx in -half..=half {
                    let xx = (x + dx).clamp(0, w - 1) as usize;
                    acc += kernel[ki] * (row[xx] as f64 - centre);
                    ki += 1;
                }
            }
            data.push(acc);
        }
    }
    SignedRaster {
        width: img.width,
        height: img.height,
        data,
    }
}
