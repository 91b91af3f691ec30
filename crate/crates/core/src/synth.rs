//! Seeded synthetic eyes and genuine scores with known injected effects.
//!
//! Every random draw comes from a ChaCha8 stream selected by
//! `(seed, domain, index)`, so an image or a pair score depends only on its
//! own index and generation can be split across threads in any order.
//! Normal deviates use the Box–Muller cosine branch:
//! `z = sqrt(-2 ln u1) · cos(2π u2)` with `u1 ∈ (0, 1]`, `u2 ∈ [0, 1)`.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ComparisonRecord, Eye, ImageCovariates, ImagePair, ManifestEntry};
use crate::imaging::{BitMask, GrayImage, SegmentationCircles};
use crate::par::{self, Execution};
use crate::quality::Family;
use crate::regression::{term_value, Term};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error("effect `{term}` needs covariates for pair ({id1}, {id2})")]
    MissingCovariate { term: String, id1: String, id2: String },
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

fn default_image_size() -> usize {
    320
}
fn default_aging() -> f64 {
    1.0 / 8000.0
}
fn default_capture_noise() -> f64 {
    0.12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_classes: usize,
    pub images_per_class: usize,
    pub date_start: NaiveDate,
    pub date_end: NaiveDate,
    /// Score at zero time lapse with all effects zero.
    pub base_score: f64,
    /// Score change per day of time lapse.
    pub time_slope: f64,
    /// Extra linear effects keyed by model-language term (`|dLC|`, `OCprod`, ...).
    #[serde(default)]
    pub covariate_effects: BTreeMap<String, f64>,
    pub noise_sigma: f64,
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    /// Fraction of the iris texture replaced per day since `date_start`;
    /// drives the time dependence of matcher scores on rendered images.
    #[serde(default = "default_aging")]
    pub texture_aging_per_day: f64,
    /// Weight of the per-capture texture perturbation.
    #[serde(default = "default_capture_noise")]
    pub capture_noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 2013,
            n_classes: 58,
            images_per_class: 10,
            date_start: NaiveDate::from_ymd_opt(2003, 1, 1).expect("valid date"),
            date_end: NaiveDate::from_ymd_opt(2011, 12, 31).expect("valid date"),
            base_score: 0.2,
            time_slope: 0.000018,
            covariate_effects: BTreeMap::new(),
            noise_sigma: 0.01,
            image_size: default_image_size(),
            texture_aging_per_day: default_aging(),
            capture_noise: default_capture_noise(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.into()));
        if self.n_classes == 0 || self.images_per_class == 0 {
            return bad("class and image counts must be at least 1");
        }
        if self.date_end < self.date_start {
            return bad("date range is empty");
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return bad("noise_sigma must be non-negative");
        }
        if self.image_size < 300 {
            return bad("image_size must be at least 300 to hold the largest iris");
        }
        if [self.texture_aging_per_day, self.capture_noise].iter().any(|v| v.is_nan() || *v < 0.0) {
            return bad("texture parameters must be non-negative");
        }
        for key in self.covariate_effects.keys() {
            key.parse::<Term>()
                .map_err(|e| SynthError::InvalidConfig(format!("effect key: {e}")))?;
        }
        Ok(())
    }

    /// Reads JSON or TOML (chosen by extension).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SynthError> {
        let path = path.as_ref();
        let io = |message: String| SynthError::Io {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| io(e.to_string()))?;
        let cfg: Self = if path.extension().and_then(|e| e.to_str()) == Some("toml") {
            toml::from_str(&text).map_err(|e| io(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| io(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn total_images(&self) -> usize {
        self.n_classes * self.images_per_class
    }
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Domain {
    Layout = 1,
    BaseTexture = 2,
    AgingTexture = 3,
    Capture = 4,
    Score = 5,
}

/// Deterministic random source for one `(domain, index)` stream.
struct Stream(ChaCha8Rng);

impl Stream {
    fn new(seed: u64, domain: Domain, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((domain as u64) << 48) ^ index);
        Stream(rng)
    }

    /// Uniform in [0, 1).
    fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    fn index(&mut self, n: u64) -> u64 {
        ((self.uniform() * n as f64) as u64).min(n - 1)
    }

    fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

const TEX_ROWS: usize = 64;
const TEX_COLS: usize = 512;

/// Band-limited noise on the polar grid: uniform noise smoothed by box
/// filters (angular axis wraps). Values roughly zero-mean, unit variance.
fn noise_field(stream: &mut Stream) -> Vec<f64> {
    let mut f: Vec<f64> = (0..TEX_ROWS * TEX_COLS).map(|_| stream.uniform() - 0.5).collect();
    for _ in 0..2 {
        let mut g = vec![0.0; f.len()];
        for r in 0..TEX_ROWS {
            for c in 0..TEX_COLS {
                let mut acc = 0.0;
                for dc in 0..3 {
                    acc += f[r * TEX_COLS + (c + TEX_COLS + dc - 1) % TEX_COLS];
                }
                let r2 = (r + 1).min(TEX_ROWS - 1);
                for dc in 0..3 {
                    acc += f[r2 * TEX_COLS + (c + TEX_COLS + dc - 1) % TEX_COLS];
                }
                g[r * TEX_COLS + c] = acc / 6.0;
            }
        }
        f = g;
    }
    let mean = f.iter().sum::<f64>() / f.len() as f64;
    let sd = (f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f.len() as f64).sqrt();
    f.iter().map(|v| (v - mean) / sd).collect()
}

fn sample_field(f: &[f64], row: f64, col: f64) -> f64 {
    let row = row.clamp(0.0, (TEX_ROWS - 1) as f64);
    let col = col.rem_euclid(TEX_COLS as f64);
    let r0 = row.floor() as usize;
    let c0 = col.floor() as usize % TEX_COLS;
    let r1 = (r0 + 1).min(TEX_ROWS - 1);
    let c1 = (c0 + 1) % TEX_COLS;
    let (fr, fc) = (row - r0 as f64, col - col.floor());
    let top = f[r0 * TEX_COLS + c0] * (1.0 - fc) + f[r0 * TEX_COLS + c1] * fc;
    let bot = f[r1 * TEX_COLS + c0] * (1.0 - fc) + f[r1 * TEX_COLS + c1] * fc;
    top * (1.0 - fr) + bot * fr
}

fn gaussian_blur(img: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let half = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-half..=half).map(|x| (-(x * x) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let ksum: f64 = k.iter().sum();
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let d = i as isize - half;
                    let (xx, yy) = if horizontal {
                        ((x + d).clamp(0, w as isize - 1), y)
                    } else {
                        (x, (y + d).clamp(0, h as isize - 1))
                    };
                    acc += kv * src[yy as usize * w + xx as usize];
                }
                out[y as usize * w + x as usize] = acc / ksum;
            }
        }
        out
    };
    pass(&pass(img, true), false)
}

/// Manifest entries plus rendered images and eyelid masks, index-aligned.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub entries: Vec<ManifestEntry>,
    pub images: Vec<GrayImage>,
    pub masks: Vec<BitMask>,
}

fn class_ids(class: usize) -> (String, Eye) {
    (format!("S{:03}", class / 2), if class.is_multiple_of(2) { Eye::L } else { Eye::R })
}

/// Manifest rows only (no rendering). Image `k` of class `c` has global
/// index `c · images_per_class + k`.
pub fn generate_entries(cfg: &SynthConfig) -> Result<Vec<ManifestEntry>, SynthError> {
    cfg.validate()?;
    let span = (cfg.date_end - cfg.date_start).num_days() as u64;
    let center = cfg.image_size as f64 / 2.0;
    let mut entries = Vec::with_capacity(cfg.total_images());
    for class in 0..cfg.n_classes {
        let (subject, eye) = class_ids(class);
        for k in 0..cfg.images_per_class {
            let index = (class * cfg.images_per_class + k) as u64;
            let mut s = Stream::new(cfg.seed, Domain::Layout, index);
            let days = s.index(span + 1);
            let pr = s.range(18.0, 40.0);
            let ir = pr * s.range(2.2, 3.2);
            let cx = center + s.range(-5.0, 5.0);
            let cy = center + s.range(-5.0, 5.0);
            let id = format!("{subject}{eye}_{k:02}");
            entries.push(ManifestEntry {
                image_path: format!("images/{id}.pgm").into(),
                mask_path: Some(format!("masks/{id}.pgm").into()),
                image_id: id,
                subject_id: subject.clone(),
                eye,
                capture_date: cfg.date_start + Days::new(days),
                seg: SegmentationCircles::concentric((cx, cy), pr, ir),
            });
        }
    }
    Ok(entries)
}

/// Renders one capture: the class texture drifted toward the class aging
/// texture in proportion to days since `date_start`, a per-capture
/// perturbation, illumination change, defocus blur, sensor noise and an
/// upper-eyelid occlusion reflected in the mask.
pub fn render_image(cfg: &SynthConfig, index: usize, entry: &ManifestEntry) -> (GrayImage, BitMask) {
    let class = index / cfg.images_per_class;
    let base = noise_field(&mut Stream::new(cfg.seed, Domain::BaseTexture, class as u64));
    let aging = noise_field(&mut Stream::new(cfg.seed, Domain::AgingTexture, class as u64));
    let mut s = Stream::new(cfg.seed, Domain::Capture, index as u64);
    let perturb = noise_field(&mut s);

    let days = (entry.capture_date - cfg.date_start).num_days() as f64;
    let w = (cfg.texture_aging_per_day * days).min(1.0);
    let tex: Vec<f64> = base
        .iter()
        .zip(&aging)
        .zip(&perturb)
        .map(|((b, a), p)| (1.0 - w) * b + w * a + cfg.capture_noise * p)
        .collect();

    let gain = s.range(0.8, 1.2);
    let offset = s.range(-15.0, 15.0);
    let blur = s.range(0.0, 1.5);
    let lid = s.range(0.5, 1.1);
    let sensor = s.range(1.0, 4.0);

    let n = cfg.image_size;
    let (cx, cy) = entry.seg.iris_center;
    let (pr, ir) = (entry.seg.pupil_radius, entry.seg.iris_radius);
    let lid_y = cy - ir * lid;
    let mut img = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let r = (dx * dx + dy * dy).sqrt();
            let v = if r < pr {
                25.0
            } else if r <= ir {
                let theta = (-dy).atan2(dx).to_degrees().rem_euclid(360.0);
                let row = (r - pr) / (ir - pr) * TEX_ROWS as f64 - 0.5;
                let col = theta / 360.0 * TEX_COLS as f64;
                110.0 + 28.0 * sample_field(&tex, row, col)
            } else {
                185.0 - 0.1 * (r - ir)
            };
            img[y * n + x] = if (y as f64) < lid_y { 150.0 } else { v };
        }
    }
    if blur > 0.3 {
        img = gaussian_blur(&img, n, n, blur);
    }
    let pixels: Vec<u8> = img
        .iter()
        .map(|&v| (gain * v + offset + sensor * s.normal()).round().clamp(0.0, 255.0) as u8)
        .collect();
    let mask = BitMask::from_fn(n, n, |_, y| (y as f64) >= lid_y);
    (GrayImage::new(n, n, pixels).expect("square raster"), mask)
}

pub fn generate_manifest(cfg: &SynthConfig, exec: Execution) -> Result<SynthDataset, SynthError> {
    let entries = generate_entries(cfg)?;
    let indexed: Vec<(usize, &ManifestEntry)> = entries.iter().enumerate().collect();
    let rendered = par::map(exec, &indexed, |&(i, e)| render_image(cfg, i, e));
    let (images, masks) = rendered.into_iter().unzip();
    Ok(SynthDataset {
        entries,
        images,
        masks,
    })
}

impl SynthDataset {
    /// Writes `manifest.csv`, `images/` and `masks/` under `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        let io = |p: &Path, m: String| SynthError::Io {
            path: p.display().to_string(),
            message: m,
        };
        for sub in ["images", "masks"] {
            let p = dir.join(sub);
            std::fs::create_dir_all(&p).map_err(|e| io(&p, e.to_string()))?;
        }
        for ((e, img), mask) in self.entries.iter().zip(&self.images).zip(&self.masks) {
            let p = dir.join(&e.image_path);
            img.save(&p).map_err(|err| io(&p, err.to_string()))?;
            if let Some(mp) = &e.mask_path {
                let p = dir.join(mp);
                mask.to_image().save(&p).map_err(|err| io(&p, err.to_string()))?;
            }
        }
        let mp = dir.join("manifest.csv");
        crate::dataset::write_manifest(&mp, &self.entries).map_err(|e| io(&mp, e.to_string()))
    }
}

/// Genuine scores: `base + slope·dt + Σ effect·term + N(0, σ²)`. The noise
/// for the i-th pair comes from its own stream, so scores depend only on the
/// pair list and the seed.
pub fn generate_scores(
    pairs: &[ImagePair],
    covariates: Option<&BTreeMap<String, ImageCovariates>>,
    cfg: &SynthConfig,
) -> Result<Vec<(ImagePair, f64)>, SynthError> {
    cfg.validate()?;
    let effects: Vec<(Term, f64)> = cfg
        .covariate_effects
        .iter()
        .map(|(k, v)| (k.parse::<Term>().expect("validated"), *v))
        .collect();
    pairs
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut score = cfg.base_score + cfg.time_slope * p.dt_days as f64;
            for &(term, coef) in &effects {
                let missing = || SynthError::MissingCovariate {
                    term: term.to_string(),
                    id1: p.first.clone(),
                    id2: p.second.clone(),
                };
                let lookup = |id: &str| covariates.and_then(|c| c.get(id));
                let (c1, c2) = lookup(&p.first).zip(lookup(&p.second)).ok_or_else(missing)?;
                let rec = ComparisonRecord {
                    id1: p.first.clone(),
                    id2: p.second.clone(),
                    dt_days: p.dt_days,
                    score: 0.0,
                    q1: c1.quality,
                    q2: c2.quality,
                    g1: c1.family.has_geometry().then_some(c1.geometry),
                    g2: c2.family.has_geometry().then_some(c2.geometry),
                };
                score += coef * term_value(&rec, term).ok_or_else(missing)?;
            }
            if cfg.noise_sigma > 0.0 {
                let mut s = Stream::new(cfg.seed, Domain::Score, i as u64);
                score += cfg.noise_sigma * s.normal();
            }
            Ok((p.clone(), score))
        })
        .collect()
}

/// Family whose covariates can feed the configured effects: D when OC is
/// used, otherwise B.
pub fn effects_family(cfg: &SynthConfig) -> Family {
    if cfg.covariate_effects.keys().any(|k| k.contains("OC")) {
        Family::D
    } else {
        Family::B
    }
}
