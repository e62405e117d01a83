//! Cross-covariances across evaluation points, Gaussian-process sup quantiles and
//! uniform confidence bands.

use crate::edf::{EdfValues, SortedSample};
use crate::error::{Error, Result};
use crate::fit::{cross_from_psi, normal_quantile, psi_hat_all, FitConfig, GridFit, PointFit};
use crate::linalg::{min_eigenvalue, symmetrize};
use crate::mindist::{md_contrast, Partition};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

/// Which linear combination of the coefficients the band covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Coefficient estimating f^(ℓ) (or F for ℓ = -1).
    Coef(i32),
    /// Minimum-distance estimate of f^(ℓ) using the basis' redundant block.
    Md(i32),
}

impl Target {
    pub fn deriv(self) -> i32 {
        match self {
            Target::Coef(d) | Target::Md(d) => d,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandConfig {
    pub alpha: f64,
    pub draws: usize,
    pub seed: u64,
    pub target: Target,
    pub jitter_start: f64,
}

impl BandConfig {
    pub fn new(deriv: i32) -> Self {
        BandConfig { alpha: 0.05, draws: 2000, seed: 0, target: Target::Coef(deriv), jitter_start: 1e-10 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidInput(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.draws < 100 {
            return Err(Error::InvalidInput(format!("need at least 100 draws, got {}", self.draws)));
        }
        if !(self.jitter_start > 0.0 && self.jitter_start <= 1e-4) {
            return Err(Error::InvalidInput("jitter_start must lie in (0, 1e-4]".into()));
        }
        Ok(())
    }
}

/// Normalized-coordinate contrast for `target` at a fit.
pub fn target_contrast(fit: &PointFit, target: Target) -> Result<DVector<f64>> {
    match target {
        Target::Coef(d) => Ok(fit.unit_contrast(fit.basis.coef_index(d)?)),
        Target::Md(d) => {
            let part = Partition::for_basis(&fit.basis)?;
            let k = fit.basis.coef_index(d)?;
            md_contrast(fit, &part, k)
        }
    }
}

/// Σ̂(x, y) = n^{-2} Σ ψ̂_i(x) ψ̂_i(y)′ in normalized coordinates.
pub fn cross_sigma_hat(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, x: f64, y: f64) -> Result<DMatrix<f64>> {
    crate::fit::fit_point(s, e, cfg, x)?;
    crate::fit::fit_point(s, e, cfg, y)?;
    let px = psi_hat_all(s, e, cfg, x);
    let py = psi_hat_all(s, e, cfg, y);
    Ok(cross_from_psi(&px, &py))
}

#[derive(Debug, Clone)]
pub struct Correlation {
    pub matrix: DMatrix<f64>,
    pub se: Vec<f64>,
    pub center: Vec<f64>,
    /// Off-diagonal entries clipped back into [-1, 1].
    pub clipped: usize,
    pub max_excess: f64,
}

/// Correlation of the studentized process across the grid, using the inference fits.
pub fn correlation_matrix(s: &SortedSample, e: &EdfValues, grid: &GridFit, target: Target) -> Result<Correlation> {
    let cfg = grid.cfg.inference_config();
    let n = s.len() as f64;
    let per_point: Vec<Result<(f64, f64, DVector<f64>)>> = grid
        .points
        .par_iter()
        .map(|gp| {
            let fit = gp.inference_fit().as_ref().map_err(Clone::clone)?;
            let cn = target_contrast(fit, target)?;
            let (est, var) = fit.combination(&cn)?;
            let psi = psi_hat_all(s, e, &cfg, gp.x);
            let a = psi * (&fit.gamma_inv * &cn);
            Ok((est, var.sqrt(), a))
        })
        .collect();
    let mut center = Vec::with_capacity(per_point.len());
    let mut se = Vec::with_capacity(per_point.len());
    let mut infl = Vec::with_capacity(per_point.len());
    for r in per_point {
        let (c, s_, a) = r?;
        center.push(c);
        se.push(s_);
        infl.push(a);
    }
    let m = infl.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (0..m).map(|j| if j < i { 0.0 } else { infl[i].dot(&infl[j]) / (n * n) / (se[i] * se[j]) }).collect())
        .collect();
    let mut mat = DMatrix::zeros(m, m);
    let mut clipped = 0;
    let mut max_excess = 0.0f64;
    for i in 0..m {
        mat[(i, i)] = 1.0;
        for j in i + 1..m {
            let mut v = rows[i][j];
            if v.abs() > 1.0 {
                max_excess = max_excess.max(v.abs() - 1.0);
                clipped += 1;
                v = v.signum();
            }
            mat[(i, j)] = v;
            mat[(j, i)] = v;
        }
    }
    Ok(Correlation { matrix: mat, se, center, clipped, max_excess })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupQuantile {
    pub q: f64,
    /// Quantile of |Z_1| from the same draws.
    pub q_first: f64,
    pub jitter: f64,
    pub eigen_clipped: bool,
    pub min_eigenvalue: f64,
    pub draws: usize,
}

fn factor(corr: &DMatrix<f64>, jitter_start: f64) -> Result<(DMatrix<f64>, f64, bool)> {
    let m = corr.nrows();
    let c = symmetrize(corr);
    let mut jitter = jitter_start;
    while jitter <= 1e-4 * (1.0 + 1e-9) {
        let mut cj = c.clone();
        for i in 0..m {
            cj[(i, i)] += jitter;
        }
        if let Some(ch) = cj.cholesky() {
            return Ok((ch.l(), jitter, false));
        }
        jitter *= 10.0;
    }
    let eig = SymmetricEigen::new(c);
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Factorization("non-finite eigenvalues".into()));
    }
    let sq = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let l = &eig.eigenvectors * DMatrix::from_diagonal(&sq);
    if l.iter().all(|v| *v == 0.0) {
        return Err(Error::Factorization("correlation matrix has no positive eigenvalue".into()));
    }
    Ok((l, 0.0, true))
}

/// Sup-|·| and first-coordinate |·| of each draw; draw d uses ChaCha8 stream d of `seed`.
pub fn gp_draws(l: &DMatrix<f64>, draws: usize, seed: u64) -> Vec<(f64, f64)> {
    let m = l.nrows();
    (0..draws)
        .into_par_iter()
        .map(|d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(d as u64);
            let eps = DVector::from_fn(l.ncols(), |_, _| StandardNormal.sample(&mut rng));
            let z = l * eps;
            let sup = (0..m).fold(0.0f64, |a, i| a.max(z[i].abs()));
            (sup, z[0].abs())
        })
        .collect()
}

fn order_stat(mut v: Vec<f64>, alpha: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((1.0 - alpha) * (v.len() as f64 + 1.0)).ceil() as usize;
    v[k.clamp(1, v.len()) - 1]
}

pub fn gp_sup_quantile(corr: &DMatrix<f64>, alpha: f64, draws: usize, seed: u64, jitter_start: f64) -> Result<SupQuantile> {
    if corr.nrows() == 0 || corr.nrows() != corr.ncols() {
        return Err(Error::InvalidInput("correlation matrix must be square and nonempty".into()));
    }
    if draws == 0 {
        return Err(Error::InvalidInput("need at least one draw".into()));
    }
    let (l, jitter, eigen_clipped) = factor(corr, jitter_start)?;
    let d = gp_draws(&l, draws, seed);
    let sups: Vec<f64> = d.iter().map(|v| v.0).collect();
    let firsts: Vec<f64> = d.iter().map(|v| v.1).collect();
    Ok(SupQuantile {
        q: order_stat(sups, alpha),
        q_first: order_stat(firsts, alpha),
        jitter,
        eigen_clipped,
        min_eigenvalue: min_eigenvalue(corr),
        draws,
    })
}

#[derive(Debug, Clone)]
pub struct BandResult {
    pub x: Vec<f64>,
    pub center: Vec<f64>,
    pub se: Vec<f64>,
    pub halfwidth: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub q: f64,
    /// Pointwise normal quantile z_{1-α/2} at the same level.
    pub z: f64,
    pub quantile: SupQuantile,
    pub clipped: usize,
    pub max_excess: f64,
    pub seed: u64,
}

pub fn confidence_band(s: &SortedSample, e: &EdfValues, grid: &GridFit, cfg: &BandConfig) -> Result<BandResult> {
    cfg.validate()?;
    let corr = correlation_matrix(s, e, grid, cfg.target)?;
    let sq = gp_sup_quantile(&corr.matrix, cfg.alpha, cfg.draws, cfg.seed, cfg.jitter_start)?;
    let q = sq.q;
    let halfwidth: Vec<f64> = corr.se.iter().map(|s| q * s).collect();
    let lo = corr.center.iter().zip(&halfwidth).map(|(c, h)| c - h).collect();
    let hi = corr.center.iter().zip(&halfwidth).map(|(c, h)| c + h).collect();
    Ok(BandResult {
        x: grid.grid(),
        center: corr.center,
        se: corr.se,
        halfwidth,
        lo,
        hi,
        q,
        z: normal_quantile(1.0 - cfg.alpha / 2.0),
        quantile: sq,
        clipped: corr.clipped,
        max_excess: corr.max_excess,
        seed: cfg.seed,
    })
}
