//! Daugman-style iris coding with real (even) Gabor wavelets and a masked,
//! rotation-compensated Hamming-distance matcher.
//!
//! Each row of the polar texture is filtered along the angular direction by
//! a small bank of zero-DC cosine Gabor kernels. The sign of each response at
//! the sample grid gives one code bit; a bit is masked out when any pixel
//! under its kernel support is occluded.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::PolarIris;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("polar texture {rows}x{cols} too small for encoder (needs at least {min_rows}x{min_cols})")]
    PolarTooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },
    #[error("invalid encoder configuration: {0}")]
    InvalidConfig(String),
    #[error("iris codes were produced with different encoder settings")]
    ConfigMismatch,
    #[error("no unmasked bits in common at any rotation")]
    NoOverlap,
    #[error("malformed iris code container: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Angular wavelengths in polar pixels, one filter per entry.
    pub wavelengths: Vec<f64>,
    /// Gaussian envelope width as a multiple of the wavelength.
    pub sigma_ratio: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            grid_rows: 8,
            grid_cols: 128,
            wavelengths: vec![8.0, 16.0, 32.0],
            sigma_ratio: 0.5,
        }
    }
}

impl EncoderConfig {
    pub fn filter_count(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn code_len(&self) -> usize {
        self.grid_rows * self.grid_cols * self.filter_count()
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        if self.grid_rows == 0 || self.grid_cols == 0 {
            return Err(MatchError::InvalidConfig("grid dimensions must be positive".into()));
        }
        if self.wavelengths.is_empty() {
            return Err(MatchError::InvalidConfig("at least one wavelength is required".into()));
        }
        if self.wavelengths.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(MatchError::InvalidConfig("wavelengths must be positive".into()));
        }
        if !(self.sigma_ratio.is_finite() && self.sigma_ratio > 0.0) {
            return Err(MatchError::InvalidConfig("sigma_ratio must be positive".into()));
        }
        Ok(())
    }

    /// Zero-DC even Gabor kernels, one per wavelength. Each has odd length
    /// `2·⌈3σ⌉ + 1`.
    pub fn kernels(&self) -> Vec<Vec<f64>> {
        self.wavelengths
            .iter()
            .map(|&lambda| {
                let sigma = self.sigma_ratio * lambda;
                let half = (3.0 * sigma).ceil() as i64;
                let mut k: Vec<f64> = (-half..=half)
                    .map(|x| {
                        let x = x as f64;
                        (2.0 * std::f64::consts::PI * x / lambda).cos()
                            * (-x * x / (2.0 * sigma * sigma)).exp()
                    })
                    .collect();
                let mean = k.iter().sum::<f64>() / k.len() as f64;
                k.iter_mut().for_each(|v| *v -= mean);
                k
            })
            .collect()
    }
}

/// Fixed-length bit vector packed into 64-bit words, LSB first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self {
            len,
            words: vec![u64::MAX; len.div_ceil(64)],
        };
        v.clear_tail();
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: bool) {
        debug_assert!(i < self.len);
        let bit = 1u64 << (i % 64);
        if b {
            self.words[i / 64] |= bit;
        } else {
            self.words[i / 64] &= !bit;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn not(&self) -> Self {
        let mut v = Self {
            len: self.len,
            words: self.words.iter().map(|w| !w).collect(),
        };
        v.clear_tail();
        v
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.len.div_ceil(8));
        out
    }

    fn from_bytes(len: usize, bytes: &[u8]) -> Result<Self, MatchError> {
        if bytes.len() != len.div_ceil(8) {
            return Err(MatchError::Format(format!(
                "expected {} bytes for {len} bits, got {}",
                len.div_ceil(8),
                bytes.len()
            )));
        }
        let mut v = Self::zeros(len);
        for (i, chunk) in bytes.chunks(8).enumerate() {
            let mut word = [0u8; 8];
            word[..chunk.len()].copy_from_slice(chunk);
            v.words[i] = u64::from_le_bytes(word);
        }
        v.clear_tail();
        Ok(v)
    }

    fn to_hex(&self) -> String {
        self.to_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn from_hex(len: usize, s: &str) -> Result<Self, MatchError> {
        if !s.len().is_multiple_of(2) {
            return Err(MatchError::Format("odd-length hex string".into()));
        }
        let bytes = (0..s.len())
            .step_by(2)
            .map(|i| u8::from_str_radix(&s[i..i + 2], 16))
            .collect::<Result<Vec<u8>, _>>()
            .map_err(|e| MatchError::Format(e.to_string()))?;
        Self::from_bytes(len, &bytes)
    }
}

/// Sign bits of the filter bank plus a validity mask of the same length.
///
/// Bit `((row · grid_cols) + col) · filter_count + filter` holds the sign of
/// filter `filter` at grid point `(row, col)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IrisCode {
    pub config: EncoderConfig,
    pub bits: BitVec,
    pub mask: BitVec,
}

impl IrisCode {
    pub fn new(config: EncoderConfig, bits: BitVec, mask: BitVec) -> Result<Self, MatchError> {
        config.validate()?;
        if bits.len() != config.code_len() || mask.len() != config.code_len() {
            return Err(MatchError::Format(format!(
                "code length {} / mask length {} do not match configuration ({})",
                bits.len(),
                mask.len(),
                config.code_len()
            )));
        }
        Ok(Self { config, bits, mask })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Copy with every bit inverted and the mask unchanged.
    pub fn complement(&self) -> Self {
        Self {
            config: self.config.clone(),
            bits: self.bits.not(),
            mask: self.mask.clone(),
        }
    }

    /// Circularly rotates grid columns: column `c` of the result holds
    /// column `(c + shift) mod grid_cols` of `self`.
    fn rotated(&self, shift: i64) -> (BitVec, BitVec) {
        let cols = self.config.grid_cols;
        let f = self.config.filter_count();
        let s = shift.rem_euclid(cols as i64) as usize;
        if s == 0 {
            return (self.bits.clone(), self.mask.clone());
        }
        let mut bits = BitVec::zeros(self.len());
        let mut mask = BitVec::zeros(self.len());
        for r in 0..self.config.grid_rows {
            let row = r * cols * f;
            for c in 0..cols {
                let src = row + ((c + s) % cols) * f;
                let dst = row + c * f;
                for k in 0..f {
                    bits.set(dst + k, self.bits.get(src + k));
                    mask.set(dst + k, self.mask.get(src + k));
                }
            }
        }
        (bits, mask)
    }

    const MAGIC: &'static [u8; 4] = b"IAC1";

    /// Binary container: `IAC1`, then grid rows, grid cols and filter count
    /// as u32 LE, each wavelength and the sigma ratio as f64 LE, then the bit
    /// array and the mask array packed LSB-first.
    pub fn write_binary(&self, mut w: impl Write) -> Result<(), MatchError> {
        w.write_all(Self::MAGIC)?;
        for v in [
            self.config.grid_rows,
            self.config.grid_cols,
            self.config.filter_count(),
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        for wl in &self.config.wavelengths {
            w.write_all(&wl.to_le_bytes())?;
        }
        w.write_all(&self.config.sigma_ratio.to_le_bytes())?;
        w.write_all(&self.bits.to_bytes())?;
        w.write_all(&self.mask.to_bytes())?;
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self, MatchError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != Self::MAGIC {
            return Err(MatchError::Format("bad magic".into()));
        }
        let mut u32s = [0usize; 3];
        for v in u32s.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *v = u32::from_le_bytes(b) as usize;
        }
        let read_f64 = |r: &mut dyn Read| -> Result<f64, MatchError> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        };
        let mut wavelengths = Vec::with_capacity(u32s[2]);
        for _ in 0..u32s[2] {
            wavelengths.push(read_f64(&mut r)?);
        }
        let sigma_ratio = read_f64(&mut r)?;
        let config = EncoderConfig {
            grid_rows: u32s[0],
            grid_cols: u32s[1],
            wavelengths,
            sigma_ratio,
        };
        config.validate()?;
        let nbytes = config.code_len().div_ceil(8);
        let mut buf = vec![0u8; nbytes];
        r.read_exact(&mut buf)?;
        let bits = BitVec::from_bytes(config.code_len(), &buf)?;
        r.read_exact(&mut buf)?;
        let mask = BitVec::from_bytes(config.code_len(), &buf)?;
        Self::new(config, bits, mask)
    }

    /// Hex-string JSON form for debugging.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&IrisCodeJson {
            config: self.config.clone(),
            bits: self.bits.to_hex(),
            mask: self.mask.to_hex(),
        })
        .expect("plain struct serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MatchError> {
        let j: IrisCodeJson =
            serde_json::from_str(s).map_err(|e| MatchError::Format(e.to_string()))?;
        j.config.validate()?;
        let len = j.config.code_len();
        let bits = BitVec::from_hex(len, &j.bits)?;
        let mask = BitVec::from_hex(len, &j.mask)?;
        Self::new(j.config, bits, mask)
    }
}

#[derive(Serialize, Deserialize)]
struct IrisCodeJson {
    config: EncoderConfig,
    bits: String,
    mask: String,
}

/// Encodes a polar iris. Kernel support wraps around the angular axis for
/// full-circle textures; otherwise support leaving the texture masks the bit.
pub fn encode(polar: &PolarIris, config: &EncoderConfig) -> Result<IrisCode, MatchError> {
    config.validate()?;
    let kernels = config.kernels();
    let max_support = kernels.iter().map(Vec::len).max().unwrap_or(1);
    let (rows, cols) = (polar.rows(), polar.cols());
    let min_cols = max_support.max(config.grid_cols);
    if rows < config.grid_rows || cols < min_cols {
        return Err(MatchError::PolarTooSmall {
            rows,
            cols,
            min_rows: config.grid_rows,
            min_cols,
        });
    }
    let wrap = polar.is_full_circle();
    let f = config.filter_count();
    let mut bits = BitVec::zeros(config.code_len());
    let mut mask = BitVec::zeros(config.code_len());

    for gr in 0..config.grid_rows {
        let tr = ((2 * gr + 1) * rows) / (2 * config.grid_rows);
        for gc in 0..config.grid_cols {
            let tc = (gc * cols) / config.grid_cols;
            for (fi, kernel) in kernels.iter().enumerate() {
                let half = (kernel.len() / 2) as i64;
                let mut acc = 0.0;
                let mut valid = true;
                for (k, &w) in kernel.iter().enumerate() {
                    let x = tc as i64 + k as i64 - half;
                    let x = if wrap {
                        x.rem_euclid(cols as i64) as usize
                    } else if x < 0 || x >= cols as i64 {
                        valid = false;
                        continue;
                    } else {
                        x as usize
                    };
                    valid &= polar.mask.get(x, tr);
                    acc += w * polar.texture.get(x, tr) as f64;
                }
                let idx = (gr * config.grid_cols + gc) * f + fi;
                bits.set(idx, acc >= 0.0);
                mask.set(idx, valid);
            }
        }
    }
    IrisCode::new(config.clone(), bits, mask)
}

pub const DEFAULT_MAX_ROTATION: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub hd: f64,
    pub best_rotation: i64,
    pub compared_bits: usize,
}

/// Visits shifts in tie-break order: 0, -1, 1, -2, 2, ...
fn shift_order(max_rotation: usize) -> impl Iterator<Item = i64> {
    std::iter::once(0).chain((1..=max_rotation as i64).flat_map(|s| [-s, s]))
}

/// Minimum masked Hamming distance over circular column shifts of `b`
/// relative to `a` in `[-max_rotation, max_rotation]`. Ties go to the
/// smaller |shift|, then to the negative shift.
pub fn match_codes(a: &IrisCode, b: &IrisCode, max_rotation: usize) -> Result<MatchResult, MatchError> {
    if a.config != b.config {
        return Err(MatchError::ConfigMismatch);
    }
    let mut best: Option<MatchResult> = None;
    for shift in shift_order(max_rotation) {
        let (bb, bm) = b.rotated(shift);
        let mut disagree = 0usize;
        let mut compared = 0usize;
        for i in 0..a.bits.words.len() {
            let m = a.mask.words[i] & bm.words[i];
            compared += m.count_ones() as usize;
            disagree += ((a.bits.words[i] ^ bb.words[i]) & m).count_ones() as usize;
        }
        if compared == 0 {
            continue;
        }
        let hd = disagree as f64 / compared as f64;
        if best.is_none_or(|b| hd < b.hd) {
            best = Some(MatchResult {
                hd,
                best_rotation: shift,
                compared_bits: compared,
            });
        }
    }
    best.ok_or(MatchError::NoOverlap)
}
