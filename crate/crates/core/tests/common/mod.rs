// SPDX-License-Identifier: MIT OR Apache-2.0

//! Reference implementations used as independent oracles. Nothing here calls
//! into the numerical paths it checks.

#![allow(dead_code)]

use argre::linalg::Mat;
use argre::linalg::Rng;
use argre::reprstore::{AnnotatedPair, Label, RepSequence};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major,
/// `n×n`). Returns eigenvalues and the matching unit eigenvectors.
pub fn jacobi_eigen(a: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut m = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum();
        let scale: f64 = m.iter().map(|x| x * x).sum::<f64>();
        if off <= 1e-30 * scale.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = (0..n).map(|i| m[i * n + i]).collect();
    let vecs = (0..n)
        .map(|j| (0..n).map(|i| v[i * n + j]).collect())
        .collect();
    (vals, vecs)
}

/// Sample covariance (unnormalized scatter) of the rows of `x`, in f64.
pub fn scatter(x: &Mat) -> Vec<f64> {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0f64; d];
    for r in x.iter_rows() {
        for (m, &v) in mean.iter_mut().zip(r) {
            *m += f64::from(v) / n as f64;
        }
    }
    let mut s = vec![0.0f64; d * d];
    for r in x.iter_rows() {
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] += (f64::from(r[i]) - mean[i]) * (f64::from(r[j]) - mean[j]);
            }
        }
    }
    s
}

/// Eigenvector of the largest eigenvalue, with the eigengap ratio
/// `λ₂/λ₁`.
pub fn top_eigenvector(sym: &[f64], n: usize) -> (Vec<f64>, f64) {
    let (vals, vecs) = jacobi_eigen(sym, n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap());
    let ratio = if n > 1 {
        vals[idx[1]] / vals[idx[0]]
    } else {
        0.0
    };
    (vecs[idx[0]].clone(), ratio)
}

/// Two-layer tanh MLP in f64: `w2 · tanh(W1 h + b1) + b2`.
pub struct RefMlp {
    pub dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl RefMlp {
    pub fn forward(&self, h: &[f64]) -> f64 {
        let mut out = self.b2;
        for j in 0..self.hidden {
            let row = &self.w1[j * self.dim..(j + 1) * self.dim];
            let z = self.b1[j] + row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>();
            out += self.w2[j] * z.tanh();
        }
        out
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w1.clone();
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn with_params(&self, p: &[f64]) -> Self {
        let (hd, hh) = (self.hidden * self.dim, self.hidden);
        Self {
            dim: self.dim,
            hidden: self.hidden,
            w1: p[..hd].to_vec(),
            b1: p[hd..hd + hh].to_vec(),
            w2: p[hd + hh..hd + 2 * hh].to_vec(),
            b2: p[hd + 2 * hh],
        }
    }
}

/// Central differences of `f` at `x` with step `step`.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Random valid annotation pairs with bit-pattern-diverse finite values.
pub fn random_pairs(rng: &mut Rng, n: usize, dim: usize) -> Vec<AnnotatedPair> {
    (0..n)
        .map(|i| {
            let m = 1 + rng.below(4);
            let value = |rng: &mut Rng| -> f32 {
                match rng.below(8) {
                    0 => 0.0,
                    1 => -0.0,
                    2 => f32::MIN_POSITIVE * rng.uniform() as f32,
                    3 => f32::MAX * (rng.uniform() as f32 - 0.5),
                    _ => (rng.normal() * 10f64.powi(rng.below(7) as i32 - 3)) as f32,
                }
            };
            let prompt: Vec<f32> = (0..m * dim).map(|_| value(rng)).collect();
            let seq = |label: Label, seq_id: u64, rng: &mut Rng| {
                let t = 1 + rng.below(5);
                let mut data = prompt.clone();
                data.extend((0..t * dim).map(|_| value(rng)));
                let reps = Mat::new(m + t, dim, data).unwrap();
                RepSequence::new(m, reps, label, i as u64, seq_id).unwrap()
            };
            let pos = seq(Label::NonToxic, rng.below(1 << 20) as u64, rng);
            let neg = seq(Label::Toxic, u64::MAX - i as u64, rng);
            AnnotatedPair::new(pos, neg).unwrap()
        })
        .collect()
}
