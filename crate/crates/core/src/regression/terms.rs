//! Model terms and the one-line model description language.
//!
//! A model line reads `NAME: FAMILY [TERM, TERM, ...]`. The intercept is
//! implicit. Term tokens:
//!
//! | token    | meaning                |
//! |----------|------------------------|
//! | `t`      | time lapse in days     |
//! | `LC1`    | covariate of image 1   |
//! | `LC2`    | covariate of image 2   |
//! | `\|dLC\|`| `\|LC1 - LC2\|`        |
//! | `OCprod` | `\|OC1 * OC2\|`        |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RegressionError;
use crate::quality::Family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Covariate {
    OC,
    LC,
    IL,
    SH,
    PR,
    IR,
}

impl Covariate {
    pub const ALL: [Covariate; 6] = [
        Covariate::OC,
        Covariate::LC,
        Covariate::IL,
        Covariate::SH,
        Covariate::PR,
        Covariate::IR,
    ];

    pub fn is_geometry(self) -> bool {
        matches!(self, Covariate::PR | Covariate::IR)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Covariate::OC => "OC",
            Covariate::LC => "LC",
            Covariate::IL => "IL",
            Covariate::SH => "SH",
            Covariate::PR => "PR",
            Covariate::IR => "IR",
        }
    }
}

impl FromStr for Covariate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown covariate `{s}`"))
    }
}

/// Which image of the pair a raw covariate is taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Time,
    Raw(Covariate, Slot),
    AbsDiff(Covariate),
    AbsProd(Covariate),
}

impl Term {
    pub fn covariate(self) -> Option<Covariate> {
        match self {
            Term::Intercept | Term::Time => None,
            Term::Raw(c, _) | Term::AbsDiff(c) | Term::AbsProd(c) => Some(c),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("1"),
            Term::Time => f.write_str("t"),
            Term::Raw(c, Slot::First) => write!(f, "{}1", c.as_str()),
            Term::Raw(c, Slot::Second) => write!(f, "{}2", c.as_str()),
            Term::AbsDiff(c) => write!(f, "|d{}|", c.as_str()),
            Term::AbsProd(c) => write!(f, "{}prod", c.as_str()),
        }
    }
}

impl FromStr for Term {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "t" {
            return Ok(Term::Time);
        }
        if s == "1" {
            return Ok(Term::Intercept);
        }
        if let Some(inner) = s.strip_prefix("|d").and_then(|r| r.strip_suffix('|')) {
            return inner.parse().map(Term::AbsDiff);
        }
        if let Some(c) = s.strip_suffix("prod") {
            return c.parse().map(Term::AbsProd);
        }
        if let Some(c) = s.strip_suffix('1') {
            return c.parse().map(|c| Term::Raw(c, Slot::First));
        }
        if let Some(c) = s.strip_suffix('2') {
            return c.parse().map(|c| Term::Raw(c, Slot::Second));
        }
        Err(format!("unknown term `{s}`"))
    }
}

/// A named linear model: response = Σ β·term + ε.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub family: Family,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    /// Builds a model; the intercept is prepended and the term list
    /// validated.
    pub fn new(name: impl Into<String>, family: Family, terms: &[Term]) -> Result<Self, RegressionError> {
        let name = name.into();
        let mut all = vec![Term::Intercept];
        all.extend(terms.iter().copied().filter(|t| *t != Term::Intercept));
        let spec = Self {
            name,
            family,
            terms: all,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), RegressionError> {
        let bad = |msg: String| RegressionError::InvalidModel {
            model: self.name.clone(),
            message: msg,
        };
        if self.terms.first() != Some(&Term::Intercept) {
            return Err(bad("intercept must be the first term".into()));
        }
        if self.terms.iter().filter(|&&t| t == Term::Intercept).count() != 1 {
            return Err(bad("intercept appears more than once".into()));
        }
        let time_positions: Vec<usize> = self
            .terms
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == Term::Time)
            .map(|(i, _)| i)
            .collect();
        match time_positions.as_slice() {
            [] | [1] => {}
            [_] => return Err(bad("time must directly follow the intercept".into())),
            _ => return Err(bad("time appears more than once".into())),
        }
        for (i, t) in self.terms.iter().enumerate() {
            if self.terms[..i].contains(t) {
                return Err(bad(format!("duplicate term `{t}`")));
            }
            match *t {
                Term::AbsProd(c) if c != Covariate::OC => {
                    return Err(bad(format!("product term is only defined for OC, got `{t}`")))
                }
                Term::AbsDiff(Covariate::OC) => {
                    return Err(bad("OC enters as a product, not a difference".into()))
                }
                Term::Raw(c, slot) => {
                    let other = match slot {
                        Slot::First => Slot::Second,
                        Slot::Second => Slot::First,
                    };
                    if !self.terms.contains(&Term::Raw(c, other)) {
                        return Err(bad(format!("raw term `{t}` must come with its pair")));
                    }
                }
                _ => {}
            }
            if let Some(c) = t.covariate() {
                if c == Covariate::OC && !self.family.has_occlusion() {
                    return Err(bad(format!("family {} has no OC covariate", self.family)));
                }
                if c.is_geometry() && !self.family.has_geometry() {
                    return Err(bad(format!("family {} has no geometry covariates", self.family)));
                }
            }
        }
        Ok(())
    }

    pub fn has_term(&self, term: Term) -> bool {
        self.terms.contains(&term)
    }

    /// Parses `NAME: FAMILY [TERM, ...]`.
    pub fn parse_line(line: &str) -> Result<Self, RegressionError> {
        let syntax = |m: &str| RegressionError::Syntax(format!("{m} in `{}`", line.trim()));
        let (name, rest) = line.split_once(':').ok_or_else(|| syntax("missing `:`"))?;
        let name = name.trim();
        if name.is_empty() {
            return Err(syntax("empty model name"));
        }
        let rest = rest.trim();
        let open = rest.find('[').ok_or_else(|| syntax("missing `[`"))?;
        let body = rest[open + 1..]
            .strip_suffix(']')
            .ok_or_else(|| syntax("missing closing `]`"))?;
        let family: Family = rest[..open].trim().parse().map_err(|m: String| syntax(&m))?;
        let terms = if body.trim().is_empty() {
            Vec::new()
        } else {
            body.split(',')
                .map(|tok| tok.parse::<Term>().map_err(|m| syntax(&m)))
                .collect::<Result<Vec<_>, _>>()?
        };
        ModelSpec::new(name, family, &terms)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<String> = self
            .terms
            .iter()
            .filter(|&&t| t != Term::Intercept)
            .map(Term::to_string)
            .collect();
        write!(f, "{}: {} [{}]", self.name, self.family, terms.join(", "))
    }
}

/// Parses a catalog file: one model per line, `#` comments and blank lines
/// ignored, names unique.
pub fn parse_models(text: &str) -> Result<Vec<ModelSpec>, RegressionError> {
    let mut models: Vec<ModelSpec> = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let spec = ModelSpec::parse_line(line)?;
        if models.iter().any(|m| m.name == spec.name) {
            return Err(RegressionError::Syntax(format!("duplicate model name `{}`", spec.name)));
        }
        models.push(spec);
    }
    Ok(models)
}
