//! Table-style fit reports: p-value per term ("--" where a model lacks the
//! term), R², and the time slope per day and per year.

use serde::{Deserialize, Serialize};

use super::terms::{Covariate, Term};
use super::FitResult;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub alpha: f64,
    pub models: Vec<FitResult>,
}

/// Columns always present, in display order.
const FIXED_COLUMNS: [Term; 7] = [
    Term::Time,
    Term::AbsProd(Covariate::OC),
    Term::AbsDiff(Covariate::LC),
    Term::AbsDiff(Covariate::IL),
    Term::AbsDiff(Covariate::SH),
    Term::AbsDiff(Covariate::PR),
    Term::AbsDiff(Covariate::IR),
];

fn column_label(token: &str) -> String {
    match token.parse::<Term>() {
        Ok(Term::AbsProd(c)) => format!("\\|{0}1 * {0}2\\|", c.as_str()),
        Ok(Term::AbsDiff(c)) if c.is_geometry() => format!("\\|{0}1 - {0}2\\|", c.as_str()),
        Ok(Term::AbsDiff(c)) => format!("\\|Δ{}\\|", c.as_str()),
        _ => token.to_string(),
    }
}

/// p-value with 4 decimals; values under 0.00005 print as 0.0000.
pub fn format_p(p: f64) -> String {
    format!("{p:.4}")
}

pub fn fit_report(results: &[FitResult], alpha: f64) -> Report {
    Report {
        alpha,
        models: results.to_vec(),
    }
}

impl Report {
    fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(Term::to_string).collect();
        for m in &self.models {
            for t in &m.terms {
                if t.name != Term::Intercept.to_string() && !cols.contains(&t.name) {
                    cols.push(t.name.clone());
                }
            }
        }
        cols
    }

    /// Markdown table, one row per model. Significant p-values (p < alpha)
    /// carry a trailing `*`.
    pub fn to_markdown(&self) -> String {
        let cols = self.columns();
        let mut out = String::new();
        out.push_str(&format!(
            "P-values for coefficient estimates and R² per model (`--` when the term is not in the model, `*` when p < {}).\n\n",
            self.alpha
        ));
        let mut header = vec!["Model".to_string(), "n".to_string()];
        header.extend(cols.iter().map(|c| column_label(c)));
        header.extend(["R²".into(), "β_t per day".into(), "β_t per year".into()]);
        out.push_str(&format!("| {} |\n", header.join(" | ")));
        out.push_str(&format!("|{}\n", "---|".repeat(header.len())));
        for m in &self.models {
            let mut row = vec![m.model.clone(), m.n.to_string()];
            for c in &cols {
                row.push(match m.term(c) {
                    Some(t) if t.p < self.alpha => format!("{}*", format_p(t.p)),
                    Some(t) => format_p(t.p),
                    None => "--".into(),
                });
            }
            row.push(format!("{:.3}", m.r2));
            row.push(m.time_slope().map_or("--".into(), |b| format!("{b:.6}")));
            row.push(m.time_slope_per_year().map_or("--".into(), |b| format!("{b:.3}")));
            out.push_str(&format!("| {} |\n", row.join(" | ")));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::Family;
    use crate::regression::TermFit;

    fn term(name: &str, p: f64) -> TermFit {
        TermFit {
            name: name.into(),
            beta: 1.8e-5,
            se: 1e-6,
            t: 18.0,
            p,
        }
    }

    fn d6() -> FitResult {
        FitResult {
            model: "D6".into(),
            family: Family::D,
            n: 100,
            df: 96,
            terms: vec![
                term("1", 0.5),
                term("t", 1e-9),
                term("|dPR|", 0.0042),
                term("|dIR|", 0.3),
            ],
            r2: 0.218,
            residual_variance: 1e-4,
        }
    }

    #[test]
    fn absent_terms_render_as_dashes() {
        let md = fit_report(&[d6()], 0.05).to_markdown();
        let row = md.lines().find(|l| l.starts_with("| D6")).unwrap();
        let cells: Vec<&str> = row.trim_matches('|').split(" | ").map(str::trim).collect();
        // Model, n, t, OCprod, dLC, dIL, dSH, dPR, dIR, R², slope/day, slope/year
        assert_eq!(cells[2], "0.0000*");
        assert_eq!(&cells[3..7], &["--", "--", "--", "--"]);
        assert_eq!(cells[7], "0.0042*");
        assert_eq!(cells[8], "0.3000");
        assert_eq!(cells[9], "0.218");
        assert_eq!(cells[10], "0.000018");
        assert_eq!(cells[11], "0.007");
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_p(0.00004999), "0.0000");
        assert_eq!(format_p(0.48051), "0.4805");
        assert_eq!(format_p(1.0), "1.0000");
    }

    #[test]
    fn empty_report_is_valid() {
        let r = fit_report(&[], 0.05);
        let md = r.to_markdown();
        assert!(md.contains("| Model | n |"));
        assert_eq!(md.lines().filter(|l| l.starts_with('|')).count(), 2);
        assert_eq!(Report::from_json(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn raw_terms_get_extra_columns_and_json_roundtrips() {
        let mut m = d6();
        m.model = "B0".into();
        m.terms.push(term("LC1", 0.2));
        m.terms.push(term("LC2", 0.01));
        let r = fit_report(&[d6(), m], 0.05);
        let md = r.to_markdown();
        assert!(md.lines().nth(2).unwrap().contains("| LC1 | LC2 |"));
        let d6_row = md.lines().find(|l| l.starts_with("| D6")).unwrap();
        assert!(d6_row.contains("| -- | -- | 0.218"));
        let back = Report::from_json(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["model", "n", "terms", "r2"] {
            assert!(v["models"][0].get(key).is_some(), "{key}");
        }
        for key in ["name", "beta", "se", "t", "p"] {
            assert!(v["models"][0]["terms"][0].get(key).is_some(), "{key}");
        }
    }
}
