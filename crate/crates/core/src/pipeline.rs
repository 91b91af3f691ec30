//! File-based pipeline steps. Each step reads documented CSV/JSON/PGM
//! artifacts and writes its outputs under an output directory with fixed
//! names, so steps chain through `--out` alone:
//!
//! | step        | writes                                             |
//! |-------------|----------------------------------------------------|
//! | `synth`     | `manifest.csv`, `images/`, `masks/`, `scores_synth.csv` |
//! | `normalize` | `polar/<id>.pgm`, `polar/<id>_mask.pgm`, `polar/grid.json` |
//! | `quality`   | `covariates_<F>.csv`                               |
//! | `match`     | `codes/<id>.iac`, `scores_D.csv`                   |
//! | `pairs`     | `records_<F>.csv`                                  |
//! | `fit`       | `report_<F>.md`, `report_<F>.json`                 |
//!
//! Rows are written in canonical order regardless of worker count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::dataset::{self, DatasetError, ImageCovariates, ManifestEntry, ScoreTable};
use crate::imaging::{self, BitMask, GrayImage, ImagingError, PolarGrid, PolarIris};
use crate::matcher::{self, EncoderConfig, IrisCode, MatchError};
use crate::par::{self, Execution};
use crate::quality::{self, Family, QualityConfig, QualityError};
use crate::regression::{self, ModelSpec, RegressionError, Report};
use crate::synth::{self, SynthConfig, SynthError};

pub use crate::par::with_jobs;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad invocation: unknown model, family mismatch, out-of-range option.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Dataset(Box<DatasetError>),
    #[error("{path}: {source}")]
    Imaging {
        path: String,
        #[source]
        source: Box<ImagingError>,
    },
    #[error("image `{image_id}`: {source}")]
    Quality {
        image_id: String,
        #[source]
        source: Box<QualityError>,
    },
    #[error("{context}: {source}")]
    Match {
        context: String,
        #[source]
        source: Box<MatchError>,
    },
    #[error(transparent)]
    Regression(Box<RegressionError>),
    #[error(transparent)]
    Synth(Box<SynthError>),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn is_usage(&self) -> bool {
        matches!(self, PipelineError::Usage(_))
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn imaging(path: &Path, source: ImagingError) -> Self {
        PipelineError::Imaging {
            path: path.display().to_string(),
            source: Box::new(source),
        }
    }
}

impl From<RegressionError> for PipelineError {
    fn from(e: RegressionError) -> Self {
        match e {
            RegressionError::UnknownModel { .. } | RegressionError::Syntax(_) => {
                PipelineError::Usage(e.to_string())
            }
            other => PipelineError::Regression(Box::new(other)),
        }
    }
}

impl From<SynthError> for PipelineError {
    fn from(e: SynthError) -> Self {
        PipelineError::Synth(Box::new(e))
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        PipelineError::Dataset(Box::new(e))
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn create_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| PipelineError::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| PipelineError::io(p, e))
}

pub fn covariates_path(out: &Path, family: Family) -> PathBuf {
    out.join(format!("covariates_{family}.csv"))
}

pub fn scores_path(out: &Path, family: Family) -> PathBuf {
    out.join(format!("scores_{family}.csv"))
}

pub fn records_path(out: &Path, family: Family) -> PathBuf {
    out.join(format!("records_{family}.csv"))
}

pub fn report_paths(out: &Path, family: Family) -> (PathBuf, PathBuf) {
    (
        out.join(format!("report_{family}.md")),
        out.join(format!("report_{family}.json")),
    )
}

fn polar_dir(out: &Path) -> PathBuf {
    out.join("polar")
}

fn load_entry_image(e: &ManifestEntry) -> Result<(GrayImage, Option<BitMask>)> {
    let img = GrayImage::load(&e.image_path).map_err(|err| PipelineError::imaging(&e.image_path, err))?;
    let mask = match &e.mask_path {
        Some(p) => {
            let m = BitMask::from_image(&GrayImage::load(p).map_err(|err| PipelineError::imaging(p, err))?);
            m.check_matches(&img).map_err(|err| PipelineError::imaging(p, err))?;
            Some(m)
        }
        None => None,
    };
    Ok((img, mask))
}

/// Generates a synthetic dataset and its synthetic genuine scores.
pub fn synth(cfg: &SynthConfig, out: &Path, exec: Execution) -> Result<usize> {
    create_dir(out)?;
    let data = synth::generate_manifest(cfg, exec)?;
    data.write(out)?;
    let pairs = dataset::genuine_pairs(&data.entries);
    let covariates = if cfg.covariate_effects.is_empty() {
        None
    } else {
        let family = synth::effects_family(cfg);
        let grid = PolarGrid::default();
        let idx: Vec<usize> = (0..data.entries.len()).collect();
        let rows = par::try_map(exec, &idx, |&i| -> Result<(String, ImageCovariates)> {
            let e = &data.entries[i];
            let polar = match family {
                Family::D => Some(
                    imaging::unwrap_to_polar(&data.images[i], &e.seg, Some(&data.masks[i]), &grid)
                        .map_err(|err| PipelineError::imaging(&e.image_path, err))?,
                ),
                _ => None,
            };
            let q = quality::quality_for_matcher(&data.images[i], polar.as_ref(), family, &QualityConfig::default())
                .map_err(|source| PipelineError::Quality {
                    image_id: e.image_id.clone(),
                    source: Box::new(source),
                })?;
            Ok((
                e.image_id.clone(),
                ImageCovariates {
                    family,
                    quality: q,
                    geometry: e.geometry(),
                },
            ))
        })?;
        Some(rows.into_iter().collect::<BTreeMap<_, _>>())
    };
    let scores = synth::generate_scores(&pairs, covariates.as_ref(), cfg)?;
    ScoreTable::write_pairs(out.join("scores_synth.csv"), &scores)?;
    let cfg_path = out.join("synth_config.json");
    write_text(
        &cfg_path,
        &(serde_json::to_string_pretty(cfg).expect("config serializes") + "\n"),
    )?;
    Ok(data.entries.len())
}

/// Unwraps every manifest image to polar coordinates.
pub fn normalize(manifest: &Path, out: &Path, grid: &PolarGrid, exec: Execution) -> Result<usize> {
    let entries = dataset::load_manifest(manifest)?;
    let dir = polar_dir(out);
    create_dir(&dir)?;
    par::try_map(exec, &entries, |e| -> Result<()> {
        let (img, mask) = load_entry_image(e)?;
        let polar = imaging::unwrap_to_polar(&img, &e.seg, mask.as_ref(), grid)
            .map_err(|err| PipelineError::imaging(&e.image_path, err))?;
        let tp = dir.join(format!("{}.pgm", e.image_id));
        polar.texture.save(&tp).map_err(|err| PipelineError::imaging(&tp, err))?;
        let mp = dir.join(format!("{}_mask.pgm", e.image_id));
        polar.mask.to_image().save(&mp).map_err(|err| PipelineError::imaging(&mp, err))?;
        Ok(())
    })?;
    let gp = dir.join("grid.json");
    write_text(&gp, &(serde_json::to_string_pretty(grid).expect("grid serializes") + "\n"))?;
    Ok(entries.len())
}

fn load_polar(out: &Path, image_id: &str) -> Result<PolarIris> {
    let dir = polar_dir(out);
    let gp = dir.join("grid.json");
    let grid_text = std::fs::read_to_string(&gp).map_err(|e| {
        PipelineError::io(&gp, std::io::Error::new(e.kind(), format!("{e} (run `normalize` first)")))
    })?;
    let grid: PolarGrid = serde_json::from_str(&grid_text)
        .map_err(|e| PipelineError::io(&gp, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    let tp = dir.join(format!("{image_id}.pgm"));
    let mp = dir.join(format!("{image_id}_mask.pgm"));
    let texture = GrayImage::load(&tp).map_err(|e| PipelineError::imaging(&tp, e))?;
    let mask = BitMask::from_image(&GrayImage::load(&mp).map_err(|e| PipelineError::imaging(&mp, e))?);
    PolarIris::new(texture, mask, grid.sectors).map_err(|e| PipelineError::imaging(&mp, e))
}

/// Computes per-image covariates for one matcher family.
pub fn quality(manifest: &Path, out: &Path, family: Family, cfg: &QualityConfig, exec: Execution) -> Result<PathBuf> {
    let entries = dataset::load_manifest(manifest)?;
    create_dir(out)?;
    let rows = par::try_map(exec, &entries, |e| -> Result<(String, ImageCovariates)> {
        let polar = match family {
            Family::D => Some(load_polar(out, &e.image_id)?),
            _ => None,
        };
        let img = match family {
            // the D family works purely in the polar domain
            Family::D => polar.as_ref().expect("loaded above").texture.clone(),
            _ => load_entry_image(e)?.0,
        };
        let q = quality::quality_for_matcher(&img, polar.as_ref(), family, cfg).map_err(|source| {
            PipelineError::Quality {
                image_id: e.image_id.clone(),
                source: Box::new(source),
            }
        })?;
        Ok((
            e.image_id.clone(),
            ImageCovariates {
                family,
                quality: q,
                geometry: e.geometry(),
            },
        ))
    })?;
    let path = covariates_path(out, family);
    dataset::write_covariates(&path, &rows.into_iter().collect())?;
    Ok(path)
}

/// Encodes every polar iris and scores all genuine pairs (family D).
pub fn match_genuine(
    manifest: &Path,
    out: &Path,
    enc: &EncoderConfig,
    max_rotation: usize,
    exec: Execution,
) -> Result<PathBuf> {
    let entries = dataset::load_manifest(manifest)?;
    let codes_dir = out.join("codes");
    create_dir(&codes_dir)?;
    let codes = par::try_map(exec, &entries, |e| -> Result<(String, IrisCode)> {
        let polar = load_polar(out, &e.image_id)?;
        let code = matcher::encode(&polar, enc).map_err(|source| PipelineError::Match {
            context: format!("encoding `{}`", e.image_id),
            source: Box::new(source),
        })?;
        let cp = codes_dir.join(format!("{}.iac", e.image_id));
        let file = std::fs::File::create(&cp).map_err(|err| PipelineError::io(&cp, err))?;
        code.write_binary(std::io::BufWriter::new(file))
            .map_err(|source| PipelineError::Match {
                context: cp.display().to_string(),
                source: Box::new(source),
            })?;
        Ok((e.image_id.clone(), code))
    })?;
    let codes: BTreeMap<String, IrisCode> = codes.into_iter().collect();
    let pairs = dataset::genuine_pairs(&entries);
    let scores = match_pairs(&pairs, &codes, max_rotation, exec)?;
    let path = scores_path(out, Family::D);
    ScoreTable::write_pairs(&path, &scores)?;
    Ok(path)
}

/// Hamming distance for each pair, in pair order.
pub fn match_pairs(
    pairs: &[dataset::ImagePair],
    codes: &BTreeMap<String, IrisCode>,
    max_rotation: usize,
    exec: Execution,
) -> Result<Vec<(dataset::ImagePair, f64)>> {
    par::try_map(exec, pairs, |p| -> Result<(dataset::ImagePair, f64)> {
        let get = |id: &str| {
            codes.get(id).ok_or_else(|| PipelineError::Match {
                context: format!("pair ({}, {})", p.first, p.second),
                source: Box::new(MatchError::Format(format!("no iris code for `{id}`"))),
            })
        };
        let m = matcher::match_codes(get(&p.first)?, get(&p.second)?, max_rotation).map_err(|source| {
            PipelineError::Match {
                context: format!("pair ({}, {})", p.first, p.second),
                source: Box::new(source),
            }
        })?;
        Ok((p.clone(), m.hd))
    })
}

/// Joins genuine pairs with scores and covariates into `records_<F>.csv`.
/// Family D reads `scores_D.csv` by default; B and V need an external score
/// file.
pub fn pairs(manifest: &Path, out: &Path, family: Family, scores: Option<&Path>) -> Result<PathBuf> {
    let entries = dataset::load_manifest(manifest)?;
    let default_scores = scores_path(out, family);
    let scores_file = match (scores, family) {
        (Some(p), _) => p.to_path_buf(),
        (None, Family::D) => default_scores,
        (None, _) if default_scores.exists() => default_scores,
        (None, f) => {
            return Err(PipelineError::Usage(format!(
                "family {f} scores come from an external matcher; pass --scores PATH"
            )))
        }
    };
    let scores = ScoreTable::load(&scores_file)?;
    let covariates = dataset::load_covariates(covariates_path(out, family))?;
    let pairs = dataset::genuine_pairs(&entries);
    let records = dataset::build_records(&pairs, &scores, &covariates, family)?;
    create_dir(out)?;
    let path = records_path(out, family);
    dataset::write_records(&path, &records)?;
    Ok(path)
}

/// Which models to fit.
#[derive(Debug, Clone)]
pub enum ModelSelection {
    /// Every catalog model of the requested family.
    Catalog,
    Names(Vec<String>),
}

/// Resolves a model selection against the catalog plus optional user
/// models (which replace catalog models of the same name).
pub fn resolve_models(
    family: Family,
    selection: &ModelSelection,
    extra_models: Option<&Path>,
) -> Result<Vec<ModelSpec>> {
    let mut models = regression::catalog();
    if let Some(p) = extra_models {
        let text = std::fs::read_to_string(p).map_err(|e| PipelineError::io(p, e))?;
        for m in regression::parse_models(&text)? {
            match models.iter_mut().find(|c| c.name == m.name) {
                Some(slot) => *slot = m,
                None => models.push(m),
            }
        }
    }
    let chosen = match selection {
        ModelSelection::Catalog => models.into_iter().filter(|m| m.family == family).collect(),
        ModelSelection::Names(names) => {
            let names: Vec<&str> = names.iter().map(String::as_str).collect();
            let chosen = regression::select_models(&models, &names)?;
            if let Some(m) = chosen.iter().find(|m| m.family != family) {
                return Err(PipelineError::Usage(format!(
                    "model `{}` belongs to family {} but --family is {family}",
                    m.name, m.family
                )));
            }
            chosen
        }
    };
    Ok(chosen)
}

/// Fits the selected models and writes the Markdown and JSON reports.
pub fn fit(
    records: &Path,
    family: Family,
    models: &[ModelSpec],
    alpha: f64,
    out: &Path,
    exec: Execution,
) -> Result<Report> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(PipelineError::Usage(format!("--alpha must be in (0, 1), got {alpha}")));
    }
    let recs = dataset::load_records(records, family)?;
    let results = regression::fit_models(&recs, models, exec)?;
    let report = regression::fit_report(&results, alpha);
    create_dir(out)?;
    let (md, json) = report_paths(out, family);
    write_text(&md, &report.to_markdown())?;
    write_text(&json, &report.to_json())?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Json,
}

/// Re-renders a saved JSON report.
pub fn render_report(json: &Path, format: ReportFormat) -> Result<String> {
    let text = std::fs::read_to_string(json).map_err(|e| PipelineError::io(json, e))?;
    let report = Report::from_json(&text)
        .map_err(|e| PipelineError::io(json, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?;
    Ok(match format {
        ReportFormat::Markdown => report.to_markdown(),
        ReportFormat::Json => report.to_json(),
    })
}
