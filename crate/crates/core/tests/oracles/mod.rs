//! Naive reference implementations. Each one is written from the formulas
//! with plain loops and shares no code with the library under test.

#![allow(dead_code)]

pub const R_EARTH_KM: f64 = 6371.0;

pub fn haversine(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let rad = std::f64::consts::PI / 180.0;
    let s1 = ((lat2 - lat1) * rad / 2.0).sin();
    let s2 = ((lon2 - lon1) * rad / 2.0).sin();
    let a = s1 * s1 + (lat1 * rad).cos() * (lat2 * rad).cos() * s2 * s2;
    2.0 * R_EARTH_KM * a.sqrt().min(1.0).asin()
}

/// Thresholded Gaussian distance kernel over (lat, lon) points.
pub fn distance_kernel(points: &[(f64, f64)], sigma: f64, eps: f64) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = haversine(points[i].0, points[i].1, points[j].0, points[j].1);
            let w = (-(d * d) / (sigma * sigma)).exp();
            if w >= eps {
                a[i][j] = w;
            }
        }
    }
    a
}

/// Columns z-scored across rows (population std); constant columns -> 0.
pub fn zscore(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, m) = (x.len(), x[0].len());
    let mut out = vec![vec![0.0; m]; n];
    for j in 0..m {
        let mut mean = 0.0;
        for row in x {
            mean += row[j] / n as f64;
        }
        let mut var = 0.0;
        for row in x {
            var += (row[j] - mean) * (row[j] - mean) / n as f64;
        }
        if var.sqrt() > 1e-12 * mean.abs().max(1.0) {
            for i in 0..n {
                out[i][j] = (x[i][j] - mean) / var.sqrt();
            }
        }
    }
    out
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut c, mut va, mut vb) = (0.0, 0.0, 0.0);
    for k in 0..a.len() {
        c += (a[k] - ma) * (b[k] - mb);
        va += (a[k] - ma) * (a[k] - ma);
        vb += (b[k] - mb) * (b[k] - mb);
    }
    // A constant vector has no defined correlation; it contributes no edge.
    if va.sqrt() <= 1e-12 || vb.sqrt() <= 1e-12 {
        return 0.0;
    }
    c / (va * vb).sqrt()
}

/// Mean over groups of |corr| (node vectors restricted to the group's
/// columns of the z-scored table) times the distance adjacency.
pub fn homophily(features: &[Vec<f64>], groups: &[Vec<usize>], a_d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let z = zscore(features);
    let n = features.len();
    let mut out = vec![vec![0.0; n]; n];
    for cols in groups {
        for i in 0..n {
            for j in 0..n {
                let vi: Vec<f64> = cols.iter().map(|&c| z[i][c]).collect();
                let vj: Vec<f64> = cols.iter().map(|&c| z[j][c]).collect();
                out[i][j] += pearson(&vi, &vj).abs() * a_d[i][j] / groups.len() as f64;
            }
        }
    }
    out
}

/// `C(y+n-1, y)` as a running product, valid for real `n`.
pub fn nb_coef(y: u64, n: f64) -> f64 {
    let mut c = 1.0;
    for i in 1..=y {
        c *= (n + i as f64 - 1.0) / i as f64;
    }
    c
}

pub fn zinb_pmf(y: u64, n: f64, p: f64, pi: f64) -> f64 {
    let nb = nb_coef(y, n) * p.powi(y as i32) * (1.0 - p).powf(n);
    if y == 0 {
        pi + (1.0 - pi) * nb
    } else {
        (1.0 - pi) * nb
    }
}

/// Mean by truncated summation of `y * pmf(y)`.
pub fn zinb_mean_by_sum(n: f64, p: f64, pi: f64, y_max: u64) -> f64 {
    let mut s = 0.0;
    for y in 0..=y_max {
        s += y as f64 * zinb_pmf(y, n, p, pi);
    }
    s
}

pub fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    let mut c = vec![vec![0.0; m]; n];
    for i in 0..n {
        for j in 0..m {
            for l in 0..k {
                c[i][j] += a[i][l] * b[l][j];
            }
        }
    }
    c
}

/// Row-normalized transition `A / rowsum(A)`.
pub fn transition(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            row.iter().map(|v| if s > 0.0 { v / s } else { 0.0 }).collect()
        })
        .collect()
}

/// `k`-hop diffusion `W^k x` by repeated single-hop propagation.
pub fn k_hop(w: &[Vec<f64>], x: &[f64], k: usize) -> Vec<f64> {
    let mut h = x.to_vec();
    for _ in 0..k {
        let mut next = vec![0.0; h.len()];
        for i in 0..h.len() {
            for j in 0..h.len() {
                next[i] += w[i][j] * h[j];
            }
        }
        h = next;
    }
    h
}

/// Chebyshev polynomial `T_k(M)` evaluated from the power basis:
/// `T_k(x) = sum_j c_j x^j` with coefficients from the scalar recurrence.
pub fn chebyshev_by_powers(m: &[Vec<f64>], k: usize) -> Vec<Vec<f64>> {
    let mut c: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
    for i in 2..=k {
        let mut next = vec![0.0; i + 1];
        for (j, v) in c[i - 1].iter().enumerate() {
            next[j + 1] += 2.0 * v;
        }
        for (j, v) in c[i - 2].iter().enumerate() {
            next[j] -= v;
        }
        c.push(next);
    }
    let n = m.len();
    let mut power: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for coef in &c[k] {
        for i in 0..n {
            for j in 0..n {
                out[i][j] += coef * power[i][j];
            }
        }
        power = mat_mul(&power, m);
    }
    out
}

// Metrics over row-major T x N grids.

pub fn mae(y: &[Vec<f64>], yh: &[Vec<f64>], cols: &[usize]) -> f64 {
    let mut s = 0.0;
    for t in 0..y.len() {
        for &j in cols {
            s += (y[t][j] - yh[t][j]).abs();
        }
    }
    s / (y.len() * cols.len()) as f64
}

pub fn mape_tract(y: &[Vec<f64>], yh: &[Vec<f64>], j: usize) -> f64 {
    let mut s = 0.0;
    for t in 0..y.len() {
        let den = if y[t][j] > 1.0 { y[t][j] } else { 1.0 };
        s += ((y[t][j] - yh[t][j]) / den).abs();
    }
    100.0 * s / y.len() as f64
}

pub fn kl(y: &[Vec<f64>], yh: &[Vec<f64>]) -> f64 {
    let eps = 2.2e-16;
    let (mut s, mut cells) = (0.0, 0.0);
    for t in 0..y.len() {
        for j in 0..y[t].len() {
            cells += 1.0;
            if y[t][j] != 0.0 {
                s += y[t][j] * ((y[t][j] + eps) / (yh[t][j] + eps)).ln();
            }
        }
    }
    s / cells
}

pub fn mpiw(lo: &[Vec<f64>], hi: &[Vec<f64>]) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for t in 0..lo.len() {
        for j in 0..lo[t].len() {
            s += hi[t][j] - lo[t][j];
            c += 1.0;
        }
    }
    s / c
}

pub fn picp(y: &[Vec<f64>], lo: &[Vec<f64>], hi: &[Vec<f64>]) -> f64 {
    let (mut inside, mut c) = (0.0, 0.0);
    for t in 0..y.len() {
        for j in 0..y[t].len() {
            c += 1.0;
            if lo[t][j] <= y[t][j] && y[t][j] <= hi[t][j] {
                inside += 1.0;
            }
        }
    }
    inside / c
}

/// Nearest integer with halves rounded up (inputs are nonnegative).
pub fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

pub fn true_zero_rate(y: &[Vec<f64>], yh: &[Vec<f64>]) -> Option<f64> {
    let (mut zeros, mut hits) = (0, 0);
    for t in 0..y.len() {
        for j in 0..y[t].len() {
            if round_half_up(y[t][j]) == 0 {
                zeros += 1;
                if round_half_up(yh[t][j]) == 0 {
                    hits += 1;
                }
            }
        }
    }
    if zeros == 0 {
        None
    } else {
        Some(hits as f64 / zeros as f64)
    }
}

/// Micro-averaged F1 from pooled per-class TP/FP/FN counts.
pub fn f1_micro(y: &[Vec<f64>], yh: &[Vec<f64>]) -> f64 {
    let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
    for t in 0..y.len() {
        for j in 0..y[t].len() {
            if round_half_up(y[t][j]) == round_half_up(yh[t][j]) {
                tp += 1.0;
            } else {
                // A miss is a false positive for the predicted class and a
                // false negative for the true one.
                fp += 1.0;
                fneg += 1.0;
            }
        }
    }
    2.0 * tp / (2.0 * tp + fp + fneg)
}

/// Central finite difference of `f` with respect to every entry of `x`.
pub fn numeric_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = f(&xp);
        xp[i] = orig - h;
        let down = f(&xp);
        xp[i] = orig;
        g[i] = (up - down) / (2.0 * h);
    }
    g
}
