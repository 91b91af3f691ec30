//! Image manifests, genuine-pair enumeration, score and covariate tables, and
//! assembly of the comparison records the regression consumes.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::SegmentationCircles;
use crate::quality::{Family, GeometryVector, QualityVector};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: line {line}: duplicate image_id `{id}`")]
    DuplicateId { path: String, line: u64, id: String },
    #[error("{path}: line {line}: invalid circles: {message}")]
    InvalidCircle {
        path: String,
        line: u64,
        message: String,
    },
    #[error("no score for pair ({0}, {1})")]
    MissingScore(String, String),
    #[error("missing covariate {what} for image `{image_id}` (pair {id1}, {id2})")]
    MissingCovariate {
        image_id: String,
        id1: String,
        id2: String,
        what: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl DatasetError {
    fn parse(path: &Path, line: u64, message: impl Into<String>) -> Self {
        DatasetError::Parse {
            path: path.display().to_string(),
            line,
            message: message.into(),
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn csv(path: &Path, err: csv::Error) -> Self {
        let line = err.position().map_or(0, |p| p.line());
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Self::io(path, e),
            kind => Self::parse(path, line, format!("{kind:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Eye {
    L,
    R,
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Eye::L => "L",
            Eye::R => "R",
        })
    }
}

impl FromStr for Eye {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "L" | "l" => Ok(Eye::L),
            "R" | "r" => Ok(Eye::R),
            other => Err(format!("eye must be L or R, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub image_id: String,
    pub subject_id: String,
    pub eye: Eye,
    pub capture_date: NaiveDate,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub seg: SegmentationCircles,
}

impl ManifestEntry {
    /// Same subject and same eye.
    pub fn class(&self) -> (&str, Eye) {
        (&self.subject_id, self.eye)
    }

    pub fn geometry(&self) -> GeometryVector {
        GeometryVector {
            pr: self.seg.pupil_radius,
            ir: self.seg.iris_radius,
        }
    }
}

pub const MANIFEST_HEADER: [&str; 12] = [
    "image_id",
    "subject_id",
    "eye",
    "capture_date",
    "image_path",
    "mask_path",
    "pupil_x",
    "pupil_y",
    "pupil_r",
    "iris_x",
    "iris_y",
    "iris_r",
];

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), DatasetError> {
    if got.iter().ne(want.iter().copied()) {
        return Err(DatasetError::parse(
            path,
            1,
            format!(
                "header must be exactly `{}`, got `{}`",
                want.join(","),
                got.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    Ok(())
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, DatasetError> {
    let file = std::fs::File::open(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn field<T: FromStr>(path: &Path, line: u64, rec: &csv::StringRecord, idx: usize, name: &str) -> Result<T, DatasetError> {
    let raw = rec.get(idx).unwrap_or("");
    raw.parse()
        .map_err(|_| DatasetError::parse(path, line, format!("cannot parse {name} from `{raw}`")))
}

/// Reads a manifest CSV. Relative image and mask paths are resolved against
/// the manifest's directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>, DatasetError> {
    let path = path.as_ref();
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| DatasetError::csv(path, e))?.clone();
    check_header(path, &header, &MANIFEST_HEADER)?;

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut entries = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let image_id = rec[0].to_string();
        if image_id.is_empty() {
            return Err(DatasetError::parse(path, line, "empty image_id"));
        }
        let subject_id = rec[1].to_string();
        let eye: Eye = rec[2]
            .parse()
            .map_err(|m: String| DatasetError::parse(path, line, m))?;
        let capture_date = NaiveDate::parse_from_str(&rec[3], "%Y-%m-%d").map_err(|e| {
            DatasetError::parse(path, line, format!("capture_date `{}`: {e}", &rec[3]))
        })?;
        let image_path = base.join(&rec[4]);
        let mask_path = (!rec[5].is_empty()).then(|| base.join(&rec[5]));
        let nums: Vec<f64> = (6..12)
            .map(|i| field::<f64>(path, line, &rec, i, MANIFEST_HEADER[i]))
            .collect::<Result<_, _>>()?;
        let seg = SegmentationCircles {
            pupil_center: (nums[0], nums[1]),
            pupil_radius: nums[2],
            iris_center: (nums[3], nums[4]),
            iris_radius: nums[5],
        };
        seg.validate().map_err(|e| DatasetError::InvalidCircle {
            path: path.display().to_string(),
            line,
            message: e.to_string(),
        })?;
        if seen.insert(image_id.clone(), line).is_some() {
            return Err(DatasetError::DuplicateId {
                path: path.display().to_string(),
                line,
                id: image_id,
            });
        }
        entries.push(ManifestEntry {
            image_id,
            subject_id,
            eye,
            capture_date,
            image_path,
            mask_path,
            seg,
        });
    }
    Ok(entries)
}

/// Writes a manifest; paths are written as given (relative paths stay
/// relative to the manifest directory).
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::csv(path, e))?;
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(MANIFEST_HEADER)?;
        for e in entries {
            w.write_record([
                e.image_id.clone(),
                e.subject_id.clone(),
                e.eye.to_string(),
                e.capture_date.format("%Y-%m-%d").to_string(),
                e.image_path.display().to_string(),
                e.mask_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                e.seg.pupil_center.0.to_string(),
                e.seg.pupil_center.1.to_string(),
                e.seg.pupil_radius.to_string(),
                e.seg.iris_center.0.to_string(),
                e.seg.iris_center.1.to_string(),
                e.seg.iris_radius.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| DatasetError::csv(path, e))
}

/// A same-iris image pair, earlier capture first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImagePair {
    pub first: String,
    pub second: String,
    pub dt_days: u32,
}

/// Calendar days between two dates.
pub fn days_between(a: NaiveDate, b: NaiveDate) -> u32 {
    (b - a).num_days().unsigned_abs() as u32
}

/// All unordered within-class pairs, oriented earlier-first (date ties by
/// image id). Output order is canonical: classes by (subject, eye), then
/// pairs in sorted member order.
pub fn genuine_pairs(entries: &[ManifestEntry]) -> Vec<ImagePair> {
    let mut classes: BTreeMap<(&str, Eye), Vec<&ManifestEntry>> = BTreeMap::new();
    for e in entries {
        classes.entry(e.class()).or_default().push(e);
    }
    let mut pairs = Vec::new();
    for members in classes.values_mut() {
        members.sort_by(|a, b| {
            a.capture_date
                .cmp(&b.capture_date)
                .then_with(|| a.image_id.cmp(&b.image_id))
        });
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                pairs.push(ImagePair {
                    first: a.image_id.clone(),
                    second: b.image_id.clone(),
                    dt_days: days_between(a.capture_date, b.capture_date),
                });
            }
        }
    }
    pairs
}

/// Pair scores keyed without regard to image order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    scores: BTreeMap<(String, String), f64>,
}

fn pair_key(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

pub const SCORE_HEADER: [&str; 3] = ["pair_id_1", "pair_id_2", "score"];

impl ScoreTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: &str, b: &str, score: f64) {
        self.scores.insert(pair_key(a, b), score);
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        self.scores.get(&pair_key(a, b)).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let mut rdr = open_csv(path)?;
        let header = rdr.headers().map_err(|e| DatasetError::csv(path, e))?.clone();
        check_header(path, &header, &SCORE_HEADER)?;
        let mut table = Self::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| DatasetError::csv(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let score: f64 = field(path, line, &rec, 2, "score")?;
            table.insert(&rec[0], &rec[1], score);
        }
        Ok(table)
    }

    /// Writes rows in the given pair order.
    pub fn write_pairs(path: impl AsRef<Path>, rows: &[(ImagePair, f64)]) -> Result<(), DatasetError> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::csv(path, e))?;
        let mut write = || -> Result<(), csv::Error> {
            w.write_record(SCORE_HEADER)?;
            for (p, s) in rows {
                w.write_record([p.first.as_str(), p.second.as_str(), &s.to_string()])?;
            }
            w.flush()?;
            Ok(())
        };
        write().map_err(|e| DatasetError::csv(path, e))
    }
}

/// Covariates of one image under one matcher family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageCovariates {
    pub family: Family,
    pub quality: QualityVector,
    pub geometry: GeometryVector,
}

pub const COVARIATE_HEADER: [&str; 8] = ["image_id", "family", "OC", "LC", "IL", "SH", "PR", "IR"];

fn opt_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn parse_opt(path: &Path, line: u64, raw: &str, name: &str) -> Result<Option<f64>, DatasetError> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| DatasetError::parse(path, line, format!("cannot parse {name} from `{raw}`")))
}

pub fn write_covariates(
    path: impl AsRef<Path>,
    rows: &BTreeMap<String, ImageCovariates>,
) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::csv(path, e))?;
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(COVARIATE_HEADER)?;
        for (id, c) in rows {
            w.write_record([
                id.clone(),
                c.family.to_string(),
                opt_field(c.quality.oc),
                c.quality.lc.to_string(),
                c.quality.il.to_string(),
                c.quality.sh.to_string(),
                c.geometry.pr.to_string(),
                c.geometry.ir.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| DatasetError::csv(path, e))
}

pub fn load_covariates(path: impl AsRef<Path>) -> Result<BTreeMap<String, ImageCovariates>, DatasetError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| DatasetError::csv(path, e))?.clone();
    check_header(path, &header, &COVARIATE_HEADER)?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let family: Family = rec[1]
            .parse()
            .map_err(|m: String| DatasetError::parse(path, line, m))?;
        let cov = ImageCovariates {
            family,
            quality: QualityVector {
                oc: parse_opt(path, line, &rec[2], "OC")?,
                lc: field(path, line, &rec, 3, "LC")?,
                il: field(path, line, &rec, 4, "IL")?,
                sh: field(path, line, &rec, 5, "SH")?,
            },
            geometry: GeometryVector {
                pr: field(path, line, &rec, 6, "PR")?,
                ir: field(path, line, &rec, 7, "IR")?,
            },
        };
        if out.insert(rec[0].to_string(), cov).is_some() {
            return Err(DatasetError::DuplicateId {
                path: path.display().to_string(),
                line,
                id: rec[0].to_string(),
            });
        }
    }
    Ok(out)
}

/// One genuine comparison with the covariates of both images.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRecord {
    pub id1: String,
    pub id2: String,
    pub dt_days: u32,
    pub score: f64,
    pub q1: QualityVector,
    pub q2: QualityVector,
    pub g1: Option<GeometryVector>,
    pub g2: Option<GeometryVector>,
}

impl ComparisonRecord {
    /// Drops the covariates the family does not carry.
    pub fn restrict_to(mut self, family: Family) -> Self {
        if !family.has_occlusion() {
            self.q1.oc = None;
            self.q2.oc = None;
        }
        if !family.has_geometry() {
            self.g1 = None;
            self.g2 = None;
        }
        self
    }
}

/// Joins pairs with scores and per-image covariates.
pub fn build_records(
    pairs: &[ImagePair],
    scores: &ScoreTable,
    covariates: &BTreeMap<String, ImageCovariates>,
    family: Family,
) -> Result<Vec<ComparisonRecord>, DatasetError> {
    pairs
        .iter()
        .map(|p| {
            let score = scores
                .get(&p.first, &p.second)
                .ok_or_else(|| DatasetError::MissingScore(p.first.clone(), p.second.clone()))?;
            let lookup = |id: &str| -> Result<&ImageCovariates, DatasetError> {
                let missing = |what: &str| DatasetError::MissingCovariate {
                    image_id: id.to_string(),
                    id1: p.first.clone(),
                    id2: p.second.clone(),
                    what: what.to_string(),
                };
                let c = covariates.get(id).ok_or_else(|| missing("row"))?;
                if c.family != family {
                    return Err(missing(&format!("for family {family} (row is family {})", c.family)));
                }
                if family.has_occlusion() && c.quality.oc.is_none() {
                    return Err(missing("OC"));
                }
                Ok(c)
            };
            let (c1, c2) = (lookup(&p.first)?, lookup(&p.second)?);
            Ok(ComparisonRecord {
                id1: p.first.clone(),
                id2: p.second.clone(),
                dt_days: p.dt_days,
                score,
                q1: c1.quality,
                q2: c2.quality,
                g1: Some(c1.geometry),
                g2: Some(c2.geometry),
            }
            .restrict_to(family))
        })
        .collect()
}

pub const RECORD_HEADER: [&str; 16] = [
    "id1", "id2", "dt_days", "score", "OC1", "OC2", "LC1", "LC2", "IL1", "IL2", "SH1", "SH2", "PR1",
    "PR2", "IR1", "IR2",
];

pub fn write_records(path: impl AsRef<Path>, records: &[ComparisonRecord]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| DatasetError::csv(path, e))?;
    let mut write = || -> Result<(), csv::Error> {
        w.write_record(RECORD_HEADER)?;
        for r in records {
            w.write_record([
                r.id1.clone(),
                r.id2.clone(),
                r.dt_days.to_string(),
                r.score.to_string(),
                opt_field(r.q1.oc),
                opt_field(r.q2.oc),
                r.q1.lc.to_string(),
                r.q2.lc.to_string(),
                r.q1.il.to_string(),
                r.q2.il.to_string(),
                r.q1.sh.to_string(),
                r.q2.sh.to_string(),
                opt_field(r.g1.map(|g| g.pr)),
                opt_field(r.g2.map(|g| g.pr)),
                opt_field(r.g1.map(|g| g.ir)),
                opt_field(r.g2.map(|g| g.ir)),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| DatasetError::csv(path, e))
}

/// Reads a records CSV. Covariates the family does not use are dropped even
/// when present in the file.
pub fn load_records(path: impl AsRef<Path>, family: Family) -> Result<Vec<ComparisonRecord>, DatasetError> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| DatasetError::csv(path, e))?.clone();
    check_header(path, &header, &RECORD_HEADER)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DatasetError::csv(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let opt = |i: usize| parse_opt(path, line, &rec[i], RECORD_HEADER[i]);
        let req = |i: usize| field::<f64>(path, line, &rec, i, RECORD_HEADER[i]);
        let geometry = |pr: Option<f64>, ir: Option<f64>| match (pr, ir) {
            (Some(pr), Some(ir)) => Some(GeometryVector { pr, ir }),
            _ => None,
        };
        let record = ComparisonRecord {
            id1: rec[0].to_string(),
            id2: rec[1].to_string(),
            dt_days: field(path, line, &rec, 2, "dt_days")?,
            score: req(3)?,
            q1: QualityVector {
                oc: opt(4)?,
                lc: req(6)?,
                il: req(8)?,
                sh: req(10)?,
            },
            q2: QualityVector {
                oc: opt(5)?,
                lc: req(7)?,
                il: req(9)?,
                sh: req(11)?,
            },
            g1: geometry(opt(12)?, opt(14)?),
            g2: geometry(opt(13)?, opt(15)?),
        };
        out.push(record.restrict_to(family));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str, subject: &str, eye: Eye, date: &str) -> ManifestEntry {
        ManifestEntry {
            image_id: id.into(),
            subject_id: subject.into(),
            eye,
            capture_date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            image_path: format!("{id}.pgm").into(),
            mask_path: None,
            seg: SegmentationCircles::concentric((100.0, 100.0), 30.0, 80.0),
        }
    }

    const HEADER: &str = "image_id,subject_id,eye,capture_date,image_path,mask_path,pupil_x,pupil_y,pupil_r,iris_x,iris_y,iris_r\n";

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn manifest_parses() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}a,s1,L,2003-05-01,a.pgm,,100,100,30,100,100,80\n\
             b,s1,L,2004-05-01,b.pgm,b_mask.pgm,100,100,30,101,100,80\n\
             c,s2,R,2011-06-08,img/c.png,,90,95,25,90,95,70\n"
        );
        let p = write_tmp(&dir, "m.csv", &body);
        let m = load_manifest(&p).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m[1].mask_path.as_deref(), Some(dir.path().join("b_mask.pgm").as_path()));
        assert_eq!(m[2].image_path, dir.path().join("img/c.png"));
        assert_eq!(m[2].eye, Eye::R);
    }

    #[test]
    fn manifest_rejects_bad_circle_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}a,s1,L,2003-05-01,a.pgm,,100,100,30,100,100,80\n\
             b,s1,L,2004-05-01,b.pgm,,100,100,80,100,100,80\n"
        );
        let p = write_tmp(&dir, "m.csv", &body);
        match load_manifest(&p) {
            Err(DatasetError::InvalidCircle { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn manifest_rejects_duplicates_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let dup = format!(
            "{HEADER}a,s1,L,2003-05-01,a.pgm,,100,100,30,100,100,80\n\
             a,s1,L,2004-05-01,b.pgm,,100,100,30,100,100,80\n"
        );
        let p = write_tmp(&dir, "dup.csv", &dup);
        assert!(matches!(load_manifest(&p), Err(DatasetError::DuplicateId { line: 3, .. })));

        let bad_date = format!("{HEADER}a,s1,L,2003-13-01,a.pgm,,100,100,30,100,100,80\n");
        let p = write_tmp(&dir, "date.csv", &bad_date);
        assert!(matches!(load_manifest(&p), Err(DatasetError::Parse { line: 2, .. })));

        let p = write_tmp(&dir, "hdr.csv", "image_id,subject\na,b\n");
        assert!(matches!(load_manifest(&p), Err(DatasetError::Parse { line: 1, .. })));
    }

    #[test]
    fn manifest_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let entries = vec![entry("a", "s", Eye::L, "2003-05-01"), entry("b", "s", Eye::R, "2005-01-02")];
        let p = dir.path().join("m.csv");
        write_manifest(&p, &entries).unwrap();
        let back = load_manifest(&p).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].capture_date, entries[1].capture_date);
        assert_eq!(back[0].seg, entries[0].seg);
    }

    #[test]
    fn pairs_within_class_only() {
        let e = vec![
            entry("a", "s1", Eye::L, "2003-01-01"),
            entry("b", "s1", Eye::L, "2004-01-01"),
            entry("c", "s1", Eye::L, "2005-01-01"),
        ];
        assert_eq!(genuine_pairs(&e).len(), 3);

        let e = vec![
            entry("a", "s1", Eye::L, "2003-01-01"),
            entry("b", "s1", Eye::L, "2004-01-01"),
            entry("c", "s1", Eye::R, "2003-01-01"),
            entry("d", "s1", Eye::R, "2004-01-01"),
        ];
        let p = genuine_pairs(&e);
        assert_eq!(p.len(), 2);
        assert_eq!((p[0].first.as_str(), p[0].second.as_str()), ("a", "b"));
        assert_eq!((p[1].first.as_str(), p[1].second.as_str()), ("c", "d"));
    }

    #[test]
    fn pairs_orient_earlier_first_and_tie_by_id() {
        let e = vec![
            entry("z", "s", Eye::L, "2003-05-01"),
            entry("y", "s", Eye::L, "2011-06-08"),
            entry("x", "s", Eye::L, "2011-06-08"),
        ];
        let p = genuine_pairs(&e);
        let got: Vec<_> = p.iter().map(|p| (p.first.as_str(), p.second.as_str(), p.dt_days)).collect();
        assert_eq!(got, vec![("z", "x", 2960), ("z", "y", 2960), ("x", "y", 0)]);
    }

    #[test]
    fn day_count_matches_independent_calendar_arithmetic() {
        // days-from-civil (proleptic Gregorian), independent of chrono
        fn days(y: i64, m: i64, d: i64) -> i64 {
            let y = if m <= 2 { y - 1 } else { y };
            let era = y.div_euclid(400);
            let yoe = y - era * 400;
            let mp = (m + 9) % 12;
            let doy = (153 * mp + 2) / 5 + d - 1;
            let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
            era * 146097 + doe
        }
        let oracle = days(2011, 6, 8) - days(2003, 5, 1);
        assert_eq!(oracle, 2960);
        let a = NaiveDate::from_ymd_opt(2003, 5, 1).unwrap();
        let b = NaiveDate::from_ymd_opt(2011, 6, 8).unwrap();
        assert_eq!(days_between(a, b) as i64, oracle);
        assert_eq!(days_between(b, a) as i64, oracle);
    }

    fn cov(family: Family, oc: Option<f64>) -> ImageCovariates {
        ImageCovariates {
            family,
            quality: QualityVector {
                oc,
                lc: 5.0,
                il: 100.0,
                sh: 0.1,
            },
            geometry: GeometryVector { pr: 30.0, ir: 80.0 },
        }
    }

    #[test]
    fn build_records_by_family() {
        let e = vec![
            entry("a", "s", Eye::L, "2003-01-01"),
            entry("b", "s", Eye::L, "2004-01-01"),
            entry("c", "s", Eye::L, "2005-01-01"),
        ];
        let pairs = genuine_pairs(&e);
        let mut scores = ScoreTable::new();
        for p in &pairs {
            // reversed key order still resolves
            scores.insert(&p.second, &p.first, 0.2);
        }
        let d: BTreeMap<_, _> = ["a", "b", "c"].iter().map(|id| (id.to_string(), cov(Family::D, Some(0.1)))).collect();
        let recs = build_records(&pairs, &scores, &d, Family::D).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.q1.oc.is_some() && r.g1.is_some()));

        let v: BTreeMap<_, _> = ["a", "b", "c"].iter().map(|id| (id.to_string(), cov(Family::V, None))).collect();
        let recs = build_records(&pairs, &scores, &v, Family::V).unwrap();
        assert!(recs.iter().all(|r| r.g1.is_none() && r.g2.is_none() && r.q1.oc.is_none()));

        let mut partial = ScoreTable::new();
        partial.insert("a", "b", 0.1);
        partial.insert("a", "c", 0.1);
        match build_records(&pairs, &partial, &d, Family::D) {
            Err(DatasetError::MissingScore(a, b)) => assert_eq!((a.as_str(), b.as_str()), ("b", "c")),
            other => panic!("unexpected {other:?}"),
        }

        let mut missing = d.clone();
        missing.remove("c");
        assert!(matches!(
            build_records(&pairs, &scores, &missing, Family::D),
            Err(DatasetError::MissingCovariate { .. })
        ));
        // D needs OC
        let no_oc: BTreeMap<_, _> = ["a", "b", "c"].iter().map(|id| (id.to_string(), cov(Family::D, None))).collect();
        assert!(build_records(&pairs, &scores, &no_oc, Family::D).is_err());
    }

    #[test]
    fn records_and_tables_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let d: BTreeMap<_, _> = ["a", "b"].iter().map(|id| (id.to_string(), cov(Family::D, Some(0.25)))).collect();
        let cp = dir.path().join("cov.csv");
        write_covariates(&cp, &d).unwrap();
        assert_eq!(load_covariates(&cp).unwrap(), d);

        let pairs = vec![ImagePair {
            first: "a".into(),
            second: "b".into(),
            dt_days: 12,
        }];
        let sp = dir.path().join("scores.csv");
        ScoreTable::write_pairs(&sp, &[(pairs[0].clone(), 0.3125)]).unwrap();
        let scores = ScoreTable::load(&sp).unwrap();
        assert_eq!(scores.get("b", "a"), Some(0.3125));

        let recs = build_records(&pairs, &scores, &d, Family::D).unwrap();
        let rp = dir.path().join("records.csv");
        write_records(&rp, &recs).unwrap();
        assert_eq!(load_records(&rp, Family::D).unwrap(), recs);
        let as_v = load_records(&rp, Family::V).unwrap();
        assert!(as_v[0].g1.is_none() && as_v[0].q1.oc.is_none());
    }
}
