//! Reference computations written independently of the library: plain
//! elimination, explicit sums and brute-force scans.

#![allow(dead_code)]

use gate_core::linalg::Matrix;
use rand::Rng;

/// `ln |det A|` of a square row-major matrix by partial-pivot elimination.
/// `None` when a pivot vanishes.
pub fn lu_logdet(a: &[f64], dim: usize) -> Option<f64> {
    let mut m = a.to_vec();
    let mut acc = 0.0;
    for c in 0..dim {
        let piv =
            (c..dim).max_by(|&i, &j| m[i * dim + c].abs().total_cmp(&m[j * dim + c].abs()))?;
        if m[piv * dim + c] == 0.0 {
            return None;
        }
        if piv != c {
            for j in 0..dim {
                m.swap(c * dim + j, piv * dim + j);
            }
        }
        let p = m[c * dim + c];
        acc += p.abs().ln();
        for i in c + 1..dim {
            let f = m[i * dim + c] / p;
            for j in c..dim {
                m[i * dim + j] -= f * m[c * dim + j];
            }
        }
    }
    Some(acc)
}

pub fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// `Σ_i w_i x_i x_iᵀ / n` with `w_i = p_i (1 − p_i)`, assembled entry by entry.
pub fn info_matrix(x: &Matrix<f64>, rows: &[usize], vars: &[usize], beta: &[f64]) -> Vec<f64> {
    let k = vars.len();
    let mut m = vec![0.0; k * k];
    for &i in rows {
        let eta: f64 = vars.iter().zip(beta).map(|(&v, b)| x.get(i, v) * b).sum();
        let p = logistic(eta);
        let w = p * (1.0 - p);
        for a in 0..k {
            for b in 0..k {
                m[a * k + b] += w * x.get(i, vars[a]) * x.get(i, vars[b]);
            }
        }
    }
    let n = rows.len() as f64;
    m.iter_mut().for_each(|v| *v /= n);
    m
}

/// Information matrix after appending one subject, assembled from scratch.
pub fn augmented_info(
    x: &Matrix<f64>,
    rows: &[usize],
    cand: usize,
    vars: &[usize],
    beta: &[f64],
) -> Vec<f64> {
    let mut all = rows.to_vec();
    all.push(cand);
    info_matrix(x, &all, vars, beta)
}

/// Log-likelihood with `ln p` and `ln(1 − p)` evaluated term by term.
pub fn loglik(x: &Matrix<f64>, rows: &[usize], y: &[u8], vars: &[usize], beta: &[f64]) -> f64 {
    rows.iter()
        .zip(y)
        .map(|(&i, &yi)| {
            let eta: f64 = vars.iter().zip(beta).map(|(&v, b)| x.get(i, v) * b).sum();
            let p = logistic(eta);
            if yi == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Pairwise concordance over every positive/negative pair.
pub fn brute_auc(s: &[f64], y: &[u8]) -> f64 {
    let (mut halves, mut pairs) = (0u64, 0u64);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1;
                halves += if s[i] > s[j] {
                    2
                } else if s[i] == s[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    halves as f64 / (2 * pairs) as f64
}

/// Coordinate-wise zooming grid search for the maximizer of a concave function.
pub fn grid_argmax(
    f: impl Fn(&[f64]) -> f64,
    dim: usize,
    half_width: f64,
    steps: usize,
    zooms: usize,
) -> Vec<f64> {
    let mut center = vec![0.0; dim];
    let mut width = half_width;
    for _ in 0..zooms {
        let h = 2.0 * width / steps as f64;
        let mut best = (f64::NEG_INFINITY, center.clone());
        let total = (steps + 1).pow(dim as u32);
        for idx in 0..total {
            let mut t = idx;
            let mut pt = vec![0.0; dim];
            for d in 0..dim {
                pt[d] = center[d] - width + h * (t % (steps + 1)) as f64;
                t /= steps + 1;
            }
            let v = f(&pt);
            if v > best.0 {
                best = (v, pt);
            }
        }
        center = best.1;
        width = 2.0 * h;
    }
    center
}

/// Random design: column 0 is 1, the rest standard normal scaled by `spread`.
pub fn random_design<R: Rng>(rng: &mut R, n: usize, k: usize, spread: f64) -> Matrix<f64> {
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let mut r = vec![1.0];
        for _ in 1..k {
            r.push(spread * rng.sample::<f64, _>(rand_distr::StandardNormal));
        }
        rows.push(r);
    }
    Matrix::from_rows(&rows).unwrap()
}

/// Bernoulli labels under `beta` over the first `beta.len()` columns.
pub fn draw_labels<R: Rng>(rng: &mut R, x: &Matrix<f64>, beta: &[f64]) -> Vec<u8> {
    (0..x.rows())
        .map(|i| {
            let eta: f64 = beta.iter().enumerate().map(|(j, b)| x.get(i, j) * b).sum();
            u8::from(rng.random::<f64>() < logistic(eta))
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
