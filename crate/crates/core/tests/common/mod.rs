#![allow(dead_code)]

use lrdist::{FitConfig, SortedSample};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..n).map(|_| r.random::<f64>()).collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Largest |a - b| relative to the largest |b|.
pub fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub struct Dense {
    pub theta: DVector<f64>,
    pub psi: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

/// Direct O(n²) evaluation in normalized coordinates, observations in sorted order.
pub fn dense(x: &[f64], w: Option<&[f64]>, cfg: &FitConfig, at: f64) -> Dense {
    let s = SortedSample::new(x, w).unwrap();
    let n = s.len();
    let basis = cfg.basis.build();
    let d = basis.dim();
    let nf = n as f64;
    let fhat: Vec<f64> = (0..n)
        .map(|j| (0..n).filter(|&i| s.values[i] <= s.values[j]).map(|i| s.weights[i]).sum::<f64>() / nf)
        .collect();
    let kw: Vec<f64> = (0..n)
        .map(|j| {
            let u = (s.values[j] - at) / cfg.h;
            if u.abs() <= 1.0 {
                cfg.kernel.eval(u) / cfg.h
            } else {
                0.0
            }
        })
        .collect();
    let r: Vec<DVector<f64>> = (0..n).map(|j| basis.eval((s.values[j] - at) / cfg.h)).collect();
    let mut g = DMatrix::zeros(d, d);
    let mut m = DVector::zeros(d);
    for j in 0..n {
        g += &r[j] * r[j].transpose() * kw[j];
        m += &r[j] * (kw[j] * fhat[j]);
    }
    let theta = g.clone().lu().solve(&m).unwrap();
    let mut psi = DMatrix::zeros(n, d);
    for i in 0..n {
        let mut row = DVector::zeros(d);
        for j in 0..n {
            let ind = if s.values[i] <= s.values[j] { s.weights[i] } else { 0.0 };
            row += &r[j] * (kw[j] * (ind - fhat[j]));
        }
        psi.set_row(i, &(row / nf).transpose());
    }
    let sigma = psi.tr_mul(&psi) / (nf * nf);
    Dense { theta, psi, sigma }
}

pub fn flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.iter().copied().collect()
}
