//! Independent oracles shared by the integration tests: brute-force image
//! metrics, normal-equation least squares and a Student-t integral.

#![allow(dead_code)]

use std::collections::BTreeMap;

use iris_aging::imaging::{BitMask, GrayImage};
use rand_chacha::rand_core::RngCore;
use rand_chacha::ChaCha8Rng;

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

pub fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

// ---------------------------------------------------------------- oracles

pub fn oracle_median(img: &GrayImage, x: usize, y: usize) -> f64 {
    let mut v = Vec::new();
    for yy in y.saturating_sub(4)..=(y + 5).min(img.height() - 1) {
        for xx in x.saturating_sub(4)..=(x + 5).min(img.width() - 1) {
            v.push(img.get(xx, yy));
        }
    }
    v.sort_unstable();
    v[(v.len() - 1) / 2] as f64
}

pub fn valid_pixels(img: &GrayImage, mask: &BitMask) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..img.height() {
        for x in 0..img.width() {
            if mask.get(x, y) {
                out.push((x, y));
            }
        }
    }
    out
}

pub fn oracle_lc(img: &GrayImage, mask: &BitMask) -> f64 {
    let px = valid_pixels(img, mask);
    let ss: f64 = px
        .iter()
        .map(|&(x, y)| (img.get(x, y) as f64 - oracle_median(img, x, y)).powi(2))
        .sum();
    (ss / px.len() as f64).sqrt()
}

pub fn oracle_il(img: &GrayImage, mask: &BitMask) -> f64 {
    let px = valid_pixels(img, mask);
    px.iter().map(|&(x, y)| img.get(x, y) as f64).sum::<f64>() / px.len() as f64
}

pub fn oracle_sh(img: &GrayImage, mask: &BitMask, sigma: f64) -> f64 {
    let mut side = (6.0 * sigma).ceil() as i64;
    if side % 2 == 0 {
        side += 1;
    }
    let half = side / 2;
    let mut k = BTreeMap::new();
    for dy in -half..=half {
        for dx in -half..=half {
            let r2 = (dx * dx + dy * dy) as f64;
            let v = -1.0 / (std::f64::consts::PI * sigma.powi(4))
                * (1.0 - r2 / (2.0 * sigma * sigma))
                * (-r2 / (2.0 * sigma * sigma)).exp();
            k.insert((dx, dy), v);
        }
    }
    let mean = k.values().sum::<f64>() / k.len() as f64;
    let (w, h) = (img.width() as i64, img.height() as i64);
    let px = valid_pixels(img, mask);
    let total: f64 = px
        .iter()
        .map(|&(x, y)| {
            k.iter()
                .map(|(&(dx, dy), &v)| {
                    let xx = (x as i64 - dx).clamp(0, w - 1) as usize;
                    let yy = (y as i64 - dy).clamp(0, h - 1) as usize;
                    (v - mean) * img.get(xx, yy) as f64
                })
                .sum::<f64>()
        })
        .sum();
    total / px.len() as f64
}

/// Solves the normal equations by Gauss–Jordan elimination with partial
/// pivoting and returns (beta, (XᵀX)⁻¹).
/// Neumaier-compensated sum.
pub fn nsum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = x[0].len();
    let mut a = vec![vec![0.0; 2 * p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = nsum(x.iter().map(|r| r[i] * r[j]));
        }
        a[i][p + i] = 1.0;
        a[i][2 * p] = nsum(x.iter().zip(y).map(|(r, yy)| r[i] * yy));
    }
    for c in 0..p {
        let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, piv);
        let d = a[c][c];
        a[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..p {
            if r != c {
                let f = a[r][c];
                let pivot_row = a[c].clone();
                a[r].iter_mut().zip(&pivot_row).for_each(|(v, pv)| *v -= f * pv);
            }
        }
    }
    let beta = a.iter().map(|r| r[2 * p]).collect();
    let inv = a.iter().map(|r| r[p..2 * p].to_vec()).collect();
    (beta, inv)
}

/// Γ((ν+1)/2) / Γ(ν/2) for integer ν by the half-integer recurrence.
pub fn gamma_ratio(df: usize) -> f64 {
    let mut num = if df % 2 == 1 { 1.0 } else { std::f64::consts::PI.sqrt() };
    let mut den = if df % 2 == 1 { std::f64::consts::PI.sqrt() } else { 1.0 };
    let (mut a, mut b) = if df % 2 == 1 { (1.0, 0.5) } else { (0.5, 1.0) };
    while a < (df as f64 + 1.0) / 2.0 {
        num *= a;
        a += 1.0;
    }
    while b < df as f64 / 2.0 {
        den *= b;
        b += 1.0;
    }
    num / den
}

pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 40)
}

/// Two-sided Student-t p-value by integrating the density over [0, |t|].
pub fn oracle_p(t: f64, df: usize) -> f64 {
    let nu = df as f64;
    let c = gamma_ratio(df) / (nu * std::f64::consts::PI).sqrt();
    let density = move |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let t = t.abs();
    // split the range so each piece is smooth on the Simpson scale
    let mut edges = vec![0.0];
    let mut e = 1.0;
    while e < t {
        edges.push(e);
        e *= 2.0;
    }
    edges.push(t);
    let head: f64 = edges
        .windows(2)
        .map(|w| adaptive_simpson(&density, w[0], w[1], 1e-14))
        .sum();
    (1.0 - 2.0 * head).max(0.0)
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> (GrayImage, BitMask) {
    let img = GrayImage::from_fn(20, 20, |_, _| (rng.next_u32() & 0xff) as u8);
    let keep = 0.3 + 0.7 * uniform(rng);
    let mut mask = BitMask::from_fn(20, 20, |_, _| uniform(rng) < keep);
    if mask.count() == 0 {
        mask.set(0, 0, true);
    }
    (img, mask)
}

