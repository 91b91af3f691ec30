use super::ols::Matrix;
use super::terms::{Covariate, ModelSpec, Slot, Term};
use super::RegressionError;
use crate::dataset::ComparisonRecord;

fn covariate_pair(rec: &ComparisonRecord, c: Covariate) -> Option<(f64, f64)> {
    match c {
        Covariate::OC => rec.q1.oc.zip(rec.q2.oc),
        Covariate::LC => Some((rec.q1.lc, rec.q2.lc)),
        Covariate::IL => Some((rec.q1.il, rec.q2.il)),
        Covariate::SH => Some((rec.q1.sh, rec.q2.sh)),
        Covariate::PR => rec.g1.zip(rec.g2).map(|(a, b)| (a.pr, b.pr)),
        Covariate::IR => rec.g1.zip(rec.g2).map(|(a, b)| (a.ir, b.ir)),
    }
}

/// Value of one term for one record, `None` when a needed covariate is
/// absent.
pub fn term_value(rec: &ComparisonRecord, term: Term) -> Option<f64> {
    match term {
        Term::Intercept => Some(1.0),
        Term::Time => Some(rec.dt_days as f64),
        Term::Raw(c, Slot::First) => covariate_pair(rec, c).map(|(a, _)| a),
        Term::Raw(c, Slot::Second) => covariate_pair(rec, c).map(|(_, b)| b),
        Term::AbsDiff(c) => covariate_pair(rec, c).map(|(a, b)| (a - b).abs()),
        Term::AbsProd(c) => covariate_pair(rec, c).map(|(a, b)| (a * b).abs()),
    }
}

/// Design matrix (one row per record, columns in term order) and response.
pub fn design_matrix(
    records: &[ComparisonRecord],
    spec: &ModelSpec,
) -> Result<(Matrix, Vec<f64>), RegressionError> {
    if records.is_empty() {
        return Err(RegressionError::EmptyInput);
    }
    let p = spec.terms.len();
    let mut x = Matrix::zeros(records.len(), p);
    let mut y = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        for (j, &term) in spec.terms.iter().enumerate() {
            let v = term_value(rec, term).ok_or_else(|| RegressionError::MissingCovariate {
                model: spec.name.clone(),
                term: term.to_string(),
                pair: (rec.id1.clone(), rec.id2.clone()),
            })?;
            x.set(i, j, v);
        }
        y.push(rec.score);
    }
    Ok((x, y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::{Family, GeometryVector, QualityVector};

    fn rec(oc: (f64, f64), lc: (f64, f64)) -> ComparisonRecord {
        ComparisonRecord {
            id1: "a".into(),
            id2: "b".into(),
            dt_days: 100,
            score: 0.3,
            q1: QualityVector {
                oc: Some(oc.0),
                lc: lc.0,
                il: 90.0,
                sh: 0.5,
            },
            q2: QualityVector {
                oc: Some(oc.1),
                lc: lc.1,
                il: 80.0,
                sh: -0.5,
            },
            g1: Some(GeometryVector { pr: 30.0, ir: 90.0 }),
            g2: Some(GeometryVector { pr: 33.0, ir: 88.0 }),
        }
    }

    #[test]
    fn geometry_model_shape() {
        let spec = ModelSpec::parse_line("D6: D [t, |dPR|, |dIR|]").unwrap();
        let recs = vec![rec((0.1, 0.2), (5.0, 8.0)); 2];
        let (x, y) = design_matrix(&recs, &spec).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (2, 4));
        assert_eq!(x.row(0), &[1.0, 100.0, 3.0, 2.0]);
        assert_eq!(y, vec![0.3, 0.3]);
    }

    #[test]
    fn difference_and_product_terms() {
        let r = rec((0.1, 0.2), (5.0, 8.0));
        assert_eq!(term_value(&r, Term::AbsDiff(Covariate::LC)), Some(3.0));
        assert!((term_value(&r, Term::AbsProd(Covariate::OC)).unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(term_value(&r, Term::Raw(Covariate::IL, Slot::Second)), Some(80.0));
        assert_eq!(term_value(&r, Term::AbsDiff(Covariate::SH)), Some(1.0));
    }

    #[test]
    fn missing_covariates_and_empty_input() {
        let spec = ModelSpec::parse_line("D5: D [t, OCprod, |dLC|]").unwrap();
        assert!(matches!(design_matrix(&[], &spec), Err(RegressionError::EmptyInput)));
        let r = rec((0.1, 0.2), (5.0, 8.0)).restrict_to(Family::B);
        assert!(matches!(
            design_matrix(&[r], &spec),
            Err(RegressionError::MissingCovariate { .. })
        ));
    }
}
