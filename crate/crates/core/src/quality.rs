//! Per-image quality covariates (occlusion, local contrast, illumination,
//! sharpness) and the geometric covariates (pupil and iris radii).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{self, BitMask, GrayImage, ImagingError, PolarIris};

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("mask has no valid pixels")]
    DegenerateMask,
    #[error("family D covariates require a polar iris")]
    MissingPolar,
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

/// Matcher family a covariate set or model belongs to.
///
/// `D` is the in-house Hamming-distance matcher working on polar textures
/// with occlusion masks; `B` and `V` are external matchers whose scores are
/// ingested from file. `V` additionally has no segmentation geometry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    D,
    B,
    V,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::D, Family::B, Family::V];

    pub fn has_occlusion(self) -> bool {
        self == Family::D
    }

    pub fn has_geometry(self) -> bool {
        self != Family::V
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::D => "D",
            Family::B => "B",
            Family::V => "V",
        })
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "D" | "d" => Ok(Family::D),
            "B" | "b" => Ok(Family::B),
            "V" | "v" => Ok(Family::V),
            other => Err(format!("unknown family `{other}` (expected D, B or V)")),
        }
    }
}

/// Quality covariates of one image. `oc` is absent for families that do not
/// work in the masked polar domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityVector {
    pub oc: Option<f64>,
    pub lc: f64,
    pub il: f64,
    pub sh: f64,
}

/// Pupil and iris radii in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryVector {
    pub pr: f64,
    pub ir: f64,
}

/// Fraction of polar pixels that are occluded.
pub fn compute_occlusion(polar: &PolarIris) -> f64 {
    let total = polar.rows() * polar.cols();
    let valid = polar.mask.count();
    (total - valid) as f64 / total as f64
}

fn valid_count(img: &GrayImage, mask: &BitMask) -> Result<usize, QualityError> {
    mask.check_matches(img)?;
    match mask.count() {
        0 => Err(QualityError::DegenerateMask),
        n => Ok(n),
    }
}

/// RMS deviation of valid pixels from the 10×10 median image. The median is
/// taken over all pixels; only valid pixels contribute deviations.
pub fn compute_local_contrast(img: &GrayImage, mask: &BitMask) -> Result<f64, QualityError> {
    let n = valid_count(img, mask)?;
    let median = imaging::median_filter_10x10(img);
    let ss: f64 = img
        .pixels()
        .iter()
        .zip(median.pixels())
        .zip(mask.bits())
        .filter(|(_, &valid)| valid)
        .map(|((&i, &m), _)| {
            let d = i as f64 - m as f64;
            d * d
        })
        .sum();
    Ok((ss / n as f64).sqrt())
}

/// Mean intensity over valid pixels.
pub fn compute_illumination(img: &GrayImage, mask: &BitMask) -> Result<f64, QualityError> {
    let n = valid_count(img, mask)?;
    let sum: u64 = img
        .pixels()
        .iter()
        .zip(mask.bits())
        .filter(|(_, &valid)| valid)
        .map(|(&p, _)| p as u64)
        .sum();
    Ok(sum as f64 / n as f64)
}

fn masked_log_mean(
    img: &GrayImage,
    mask: &BitMask,
    sigma: f64,
    f: impl Fn(f64) -> f64,
) -> Result<f64, QualityError> {
    let n = valid_count(img, mask)?;
    let response = imaging::log_filter(img, sigma);
    let sum: f64 = response
        .data
        .iter()
        .zip(mask.bits())
        .filter(|(_, &valid)| valid)
        .map(|(&v, _)| f(v))
        .sum();
    Ok(sum / n as f64)
}

/// Signed mean LoG response over valid pixels.
pub fn compute_sharpness(img: &GrayImage, mask: &BitMask, sigma: f64) -> Result<f64, QualityError> {
    masked_log_mean(img, mask, sigma, |v| v)
}

/// Mean absolute LoG response over valid pixels. Not used by the regression;
/// it orders images by focus where the signed mean cancels out.
pub fn compute_sharpness_abs(img: &GrayImage, mask: &BitMask, sigma: f64) -> Result<f64, QualityError> {
    masked_log_mean(img, mask, sigma, f64::abs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub log_sigma: f64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            log_sigma: imaging::DEFAULT_LOG_SIGMA,
        }
    }
}

/// Covariates in the pixel domain the given matcher family sees.
///
/// Family D works on the polar texture with its occlusion mask and reports
/// OC; families B and V use every pixel of the Cartesian image and leave OC
/// absent.
pub fn quality_for_matcher(
    img: &GrayImage,
    polar: Option<&PolarIris>,
    family: Family,
    config: &QualityConfig,
) -> Result<QualityVector, QualityError> {
    match family {
        Family::D => {
            let polar = polar.ok_or(QualityError::MissingPolar)?;
            Ok(QualityVector {
                oc: Some(compute_occlusion(polar)),
                lc: compute_local_contrast(&polar.texture, &polar.mask)?,
                il: compute_illumination(&polar.texture, &polar.mask)?,
                sh: compute_sharpness(&polar.texture, &polar.mask, config.log_sigma)?,
            })
        }
        Family::B | Family::V => {
            let mask = BitMask::full(img.width(), img.height());
            Ok(QualityVector {
                oc: None,
                lc: compute_local_contrast(img, &mask)?,
                il: compute_illumination(img, &mask)?,
                sh: compute_sharpness(img, &mask, config.log_sigma)?,
            })
        }
    }
}
