//! Ordinary least squares by Householder QR with coefficient t-tests.

use serde::{Deserialize, Serialize};

use super::student_t::student_t_sf;
use super::RegressionError;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Raw least-squares output, columns in design-matrix order.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub n: usize,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t: Vec<f64>,
    pub p: Vec<f64>,
    pub r2: f64,
    pub residual_variance: f64,
    pub residuals: Vec<f64>,
}

impl OlsFit {
    pub fn df(&self) -> usize {
        self.n - self.beta.len()
    }
}

/// Relative threshold on |R_jj| below which a column counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Householder QR of `x` (n × p, n > p). Returns R (p × p, upper triangular,
/// row-major) and the first p entries of Qᵀy.
fn householder_qr(x: &Matrix, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (x.nrows(), x.ncols());
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..p).map(|c| x.column(c)).collect();
    let mut qty = y.to_vec();

    for k in 0..p {
        let norm = a[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if a[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[k][k..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        if vnorm2 == 0.0 {
            continue;
        }
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let scale = 2.0 * dot / vnorm2;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= scale * vi;
            }
        };
        a[k][k] = alpha;
        a[k][k + 1..].iter_mut().for_each(|v| *v = 0.0);
        for col in a.iter_mut().skip(k + 1) {
            reflect(&mut col[k..]);
        }
        reflect(&mut qty[k..n]);
    }

    let mut r = vec![0.0; p * p];
    for (c, col) in a.iter().enumerate() {
        for (row, &v) in col.iter().enumerate().take(c + 1) {
            r[row * p + c] = v;
        }
    }
    qty.truncate(p);
    (r, qty)
}

/// Canonical row order (lexicographic on the row, then the response) so the
/// result does not depend on input order.
fn canonical_order(x: &Matrix, y: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.sort_by(|&a, &b| {
        x.row(a)
            .iter()
            .zip(x.row(b))
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| y[a].total_cmp(&y[b]))
    });
    idx
}

/// Least-squares fit of `y` on the columns of `x`.
///
/// Standard errors come from `s²·diag((XᵀX)⁻¹)` with `(XᵀX)⁻¹ = R⁻¹R⁻ᵀ`;
/// p-values are two-sided Student-t with `n - p` degrees of freedom. R² is
/// measured about the mean of `y`.
pub fn fit_ols(x: &Matrix, y: &[f64]) -> Result<OlsFit, RegressionError> {
    let (n, p) = (x.nrows(), x.ncols());
    assert_eq!(n, y.len(), "response length must match design rows");
    if n == 0 || p == 0 {
        return Err(RegressionError::EmptyInput);
    }
    if n <= p {
        return Err(RegressionError::Underdetermined { n, p });
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressionError::NonFinite);
    }

    let order = canonical_order(x, y);
    let xs = Matrix::from_rows(&order.iter().map(|&i| x.row(i).to_vec()).collect::<Vec<_>>());
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let (r, qty) = householder_qr(&xs, &ys);
    let max_r = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let deficient: Vec<usize> = (0..p)
        .filter(|&j| r[j * p + j].abs() < RANK_TOLERANCE * max_r || max_r == 0.0)
        .collect();
    if !deficient.is_empty() {
        return Err(RegressionError::RankDeficient { columns: deficient });
    }

    // back substitution R β = Qᵀy
    let mut beta = vec![0.0; p];
    for i in (0..p).rev() {
        let s: f64 = ((i + 1)..p).map(|j| r[i * p + j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i * p + i];
    }

    // R⁻¹, upper triangular
    let mut rinv = vec![0.0; p * p];
    for j in 0..p {
        rinv[j * p + j] = 1.0 / r[j * p + j];
        for i in (0..j).rev() {
            let s: f64 = ((i + 1)..=j).map(|k| r[i * p + k] * rinv[k * p + j]).sum();
            rinv[i * p + j] = -s / r[i * p + i];
        }
    }

    let fitted = x.mul_vec(&beta);
    let residuals: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let ss_res: f64 = ys
        .iter()
        .zip(xs.mul_vec(&beta))
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = ys.iter().map(|v| (v - mean) * (v - mean)).sum();
    let df = (n - p) as f64;
    let s2 = ss_res / df;
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        0.0
    };

    let mut se = Vec::with_capacity(p);
    let mut t = Vec::with_capacity(p);
    let mut pv = Vec::with_capacity(p);
    for j in 0..p {
        let d: f64 = (j..p).map(|k| rinv[j * p + k].powi(2)).sum();
        let s = (s2 * d).sqrt();
        let tj = if s > 0.0 {
            beta[j] / s
        } else if beta[j] == 0.0 {
            0.0
        } else {
            beta[j].signum() * f64::INFINITY
        };
        se.push(s);
        t.push(tj);
        pv.push(student_t_sf(tj, df)?);
    }

    Ok(OlsFit {
        n,
        beta,
        se,
        t,
        p: pv,
        r2,
        residual_variance: s2,
        residuals,
    })
}

/// Per-term inference row of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermFit {
    pub name: String,
    #[serde(with = "lossless_f64")]
    pub beta: f64,
    #[serde(with = "lossless_f64")]
    pub se: f64,
    #[serde(with = "lossless_f64")]
    pub t: f64,
    #[serde(with = "lossless_f64")]
    pub p: f64,
}

/// JSON numbers cannot hold infinities or NaN; those are written as strings.
pub(crate) mod lossless_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                other => Err(serde::de::Error::custom(format!("bad number `{other}`"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 + 3.0 * i as f64).collect();
        let fit = fit_ols(&Matrix::from_rows(&rows), &y).unwrap();
        assert!((fit.beta[0] - 2.0).abs() < 1e-10);
        assert!((fit.beta[1] - 3.0).abs() < 1e-10);
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|r| r.abs() < 1e-10));
    }

    #[test]
    fn underdetermined_and_rank_deficient() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 3.0]]);
        assert!(matches!(
            fit_ols(&x, &[1.0, 2.0]),
            Err(RegressionError::Underdetermined { n: 2, p: 2 })
        ));
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        match fit_ols(&Matrix::from_rows(&rows), &[1.0, 2.0, 0.0, 5.0, 3.0, 1.0]) {
            Err(RegressionError::RankDeficient { columns }) => assert_eq!(columns, vec![2]),
            other => panic!("unexpected {other:?}"),
        }
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, 0.0, i as f64]).collect();
        match fit_ols(&Matrix::from_rows(&rows), &[1.0, 2.0, 0.0, 5.0, 3.0, 1.0]) {
            Err(RegressionError::RankDeficient { columns }) => assert_eq!(columns, vec![1]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_rejected() {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| vec![1.0, i as f64]).collect();
        assert!(matches!(
            fit_ols(&Matrix::from_rows(&rows), &[1.0, f64::NAN, 0.0, 1.0]),
            Err(RegressionError::NonFinite)
        ));
    }

    #[test]
    fn json_keeps_infinities() {
        let t = TermFit {
            name: "t".into(),
            beta: 1.0,
            se: 0.0,
            t: f64::INFINITY,
            p: 0.0,
        };
        let s = serde_json::to_string(&t).unwrap();
        assert!(s.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<TermFit>(&s).unwrap(), t);
    }
}
