//! The local regression distribution estimator and its sandwich variance.

use crate::basis::{Basis, BasisSpec};
use crate::edf::{EdfValues, SortedSample};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::linalg::{quad_form, spd_inverse, symmetrize};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub kernel: Kernel,
    pub basis: BasisSpec,
    pub h: f64,
    /// -1 for the CDF, 0 for the density, k for the k-th density derivative.
    pub deriv: i32,
    pub inference_basis: Option<BasisSpec>,
}

impl FitConfig {
    pub fn new(kernel: Kernel, basis: BasisSpec, h: f64, deriv: i32) -> Self {
        FitConfig { kernel, basis, h, deriv, inference_basis: None }
    }

    /// Point estimate of order p with inference from order p + 1.
    pub fn robust(kernel: Kernel, p: usize, h: f64, deriv: i32) -> Self {
        FitConfig {
            kernel,
            basis: BasisSpec::poly(p),
            h,
            deriv,
            inference_basis: Some(BasisSpec::poly(p + 1)),
        }
    }

    pub fn with_inference(mut self, b: BasisSpec) -> Self {
        self.inference_basis = Some(b);
        self
    }

    pub fn with_h(mut self, h: f64) -> Self {
        self.h = h;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {}", self.h)));
        }
        if self.basis.split.is_none() {
            self.basis.coef_index(self.deriv)?;
        } else {
            self.basis.one_sided_index(self.deriv, false)?;
        }
        if let Some(b) = self.inference_basis {
            if b.split.is_none() {
                b.coef_index(self.deriv)?;
            }
        }
        Ok(())
    }

    /// The configuration used for inference (itself when no inference basis is set).
    pub fn inference_config(&self) -> FitConfig {
        match self.inference_basis {
            Some(b) => FitConfig { basis: b, inference_basis: None, ..*self },
            None => *self,
        }
    }
}

/// Estimates at one evaluation point.
///
/// `gamma`, `sigma` and `omega_norm` are in normalized coordinates u = (x_i - x)/h;
/// `theta` and `omega` are in data units, with `omega` the variance of `theta`.
#[derive(Debug, Clone)]
pub struct PointFit {
    pub x: f64,
    pub h: f64,
    pub n: usize,
    pub n_local: usize,
    pub basis: BasisSpec,
    pub theta: DVector<f64>,
    pub theta_norm: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub gamma_inv: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub omega_norm: DMatrix<f64>,
    pub omega: DMatrix<f64>,
    pub transform: DMatrix<f64>,
}

impl PointFit {
    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    fn index(&self, deriv: i32) -> Result<usize> {
        self.basis.coef_index(deriv)
    }

    pub fn estimate(&self, deriv: i32) -> Result<f64> {
        Ok(self.theta[self.index(deriv)?])
    }

    /// Normalized-coordinate contrast equivalent to the data-unit contrast `c`.
    pub fn contrast_norm(&self, c: &DVector<f64>) -> DVector<f64> {
        self.transform.transpose() * c
    }

    pub fn unit_contrast(&self, index: usize) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim());
        c[index] = 1.0;
        self.contrast_norm(&c)
    }

    /// Estimate and variance of the linear combination with normalized contrast `cn`.
    pub fn combination(&self, cn: &DVector<f64>) -> Result<(f64, f64)> {
        let est = cn.dot(&self.theta_norm);
        let abs_cn = cn.map(f64::abs);
        let diag = DVector::from_fn(self.dim(), |i, _| self.omega_norm[(i, i)].abs().sqrt());
        let scale = abs_cn.dot(&diag).powi(2);
        let var = quad_form(&self.omega_norm, cn);
        if !(var > 0.0) || var <= 1e-14 * scale {
            return Err(Error::DegenerateVariance { var });
        }
        Ok((est, var))
    }

    pub fn variance(&self, deriv: i32) -> Result<f64> {
        let cn = self.unit_contrast(self.index(deriv)?);
        Ok(self.combination(&cn)?.1)
    }

    pub fn se(&self, deriv: i32) -> Result<f64> {
        Ok(self.variance(deriv)?.sqrt())
    }

    /// Weighted least-squares objective Σ W_i (F̂_i - R_i'θ)^2 at the stored coefficients.
    pub fn objective(&self, s: &SortedSample, e: &EdfValues, kernel: Kernel) -> f64 {
        let basis = self.basis.build();
        let win = LocalWindow::new(s, kernel, &basis, self.h, self.x);
        let mut r = vec![0.0; basis.dim()];
        let mut obj = 0.0;
        for k in 0..win.len() {
            basis.eval_into(win.u[k], &mut r);
            let fit: f64 = r.iter().zip(self.theta_norm.iter()).map(|(a, b)| a * b).sum();
            let res = e.values[win.lo + k] - fit;
            obj += win.kw[k] * res * res;
        }
        obj
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Observations with |x_i - x| <= h, in sorted order.
pub(crate) struct LocalWindow {
    pub lo: usize,
    pub u: Vec<f64>,
    pub kw: Vec<f64>,
}

impl LocalWindow {
    pub fn new(s: &SortedSample, kernel: Kernel, _basis: &Basis, h: f64, x: f64) -> Self {
        let slack = h * 1e-9;
        let a = s.count_lt(x - h - slack);
        let b = s.count_le(x + h + slack);
        let mut lo = a;
        let mut u = Vec::with_capacity(b.saturating_sub(a));
        let mut kw = Vec::with_capacity(b.saturating_sub(a));
        for k in a..b {
            let uk = (s.values[k] - x) / h;
            if uk.abs() <= 1.0 {
                if u.is_empty() {
                    lo = k;
                }
                u.push(uk);
                kw.push(kernel.eval(uk) / h);
            }
        }
        if u.is_empty() {
            lo = a;
        }
        LocalWindow { lo, u, kw }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn hi(&self) -> usize {
        self.lo + self.u.len()
    }
}

struct Design {
    basis: Basis,
    win: LocalWindow,
    /// Rows R(u_k)' of the local observations.
    r: DMatrix<f64>,
}

impl Design {
    fn new(s: &SortedSample, kernel: Kernel, spec: BasisSpec, h: f64, x: f64) -> Self {
        let basis = spec.build();
        let win = LocalWindow::new(s, kernel, &basis, h, x);
        let d = basis.dim();
        let mut r = DMatrix::zeros(win.len(), d);
        let mut buf = vec![0.0; d];
        for k in 0..win.len() {
            basis.eval_into(win.u[k], &mut buf);
            for c in 0..d {
                r[(k, c)] = buf[c];
            }
        }
        Design { basis, win, r }
    }

    fn gamma(&self, n: usize) -> DMatrix<f64> {
        let d = self.basis.dim();
        let mut g = DMatrix::zeros(d, d);
        for k in 0..self.win.len() {
            let w = self.win.kw[k];
            for a in 0..d {
                let ra = w * self.r[(k, a)];
                for b in a..d {
                    g[(a, b)] += ra * self.r[(k, b)];
                }
            }
        }
        for a in 0..d {
            for b in 0..a {
                g[(a, b)] = g[(b, a)];
            }
        }
        g / n as f64
    }

    /// (1/n) Σ W_k R_k F̂_k
    fn moment(&self, e: &EdfValues, n: usize) -> DVector<f64> {
        let d = self.basis.dim();
        let mut m = DVector::zeros(d);
        for k in 0..self.win.len() {
            let w = self.win.kw[k] * e.values[self.win.lo + k];
            for a in 0..d {
                m[a] += w * self.r[(k, a)];
            }
        }
        m / n as f64
    }

    /// ψ̂_i for all observations (rows, sorted order).
    fn psi(&self, s: &SortedSample, moment: &DVector<f64>) -> DMatrix<f64> {
        let n = s.len();
        let d = self.basis.dim();
        let m = self.win.len();
        let lo = self.win.lo;
        let hi = self.win.hi();
        // suffix[k] = Σ_{j >= k} W_j R_j over local observations
        let mut suffix = vec![0.0; (m + 1) * d];
        for k in (0..m).rev() {
            let w = self.win.kw[k];
            for a in 0..d {
                suffix[k * d + a] = suffix[(k + 1) * d + a] + w * self.r[(k, a)];
            }
        }
        let nf = n as f64;
        let mut psi = DMatrix::zeros(n, d);
        let mut group = 0usize;
        for i in 0..n {
            if i == 0 || s.values[i] != s.values[i - 1] {
                group = i;
            }
            let k = if i < lo {
                0
            } else if i >= hi {
                m
            } else {
                group - lo
            };
            let wi = s.weights[i] / nf;
            for a in 0..d {
                psi[(i, a)] = wi * suffix[k * d + a] - moment[a];
            }
        }
        psi
    }
}

/// (1/n^2) Σ_i ψ̂_i(x) ψ̂_i(y)'.
pub fn cross_from_psi(px: &DMatrix<f64>, py: &DMatrix<f64>) -> DMatrix<f64> {
    let n = px.nrows() as f64;
    px.tr_mul(py) / (n * n)
}

pub fn sigma_hat(psi: &DMatrix<f64>) -> DMatrix<f64> {
    cross_from_psi(psi, psi)
}

/// Γ̂ in normalized coordinates.
pub fn gamma_hat(s: &SortedSample, cfg: &FitConfig, x: f64) -> DMatrix<f64> {
    Design::new(s, cfg.kernel, cfg.basis, cfg.h, x).gamma(s.len())
}

/// ψ̂_i(x) for every observation, rows in sorted order, normalized coordinates.
pub fn psi_hat_all(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, x: f64) -> DMatrix<f64> {
    let des = Design::new(s, cfg.kernel, cfg.basis, cfg.h, x);
    let m = des.moment(e, s.len());
    des.psi(s, &m)
}

pub fn fit_point(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, x: f64) -> Result<PointFit> {
    fit_point_psi(s, e, cfg, x).map(|(f, _)| f)
}

/// Fit plus the ψ̂ matrix it was built from.
pub fn fit_point_psi(
    s: &SortedSample,
    e: &EdfValues,
    cfg: &FitConfig,
    x: f64,
) -> Result<(PointFit, DMatrix<f64>)> {
    if !(cfg.h > 0.0) || !cfg.h.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {}", cfg.h)));
    }
    if !x.is_finite() {
        return Err(Error::InvalidInput("evaluation point must be finite".into()));
    }
    let n = s.len();
    let des = Design::new(s, cfg.kernel, cfg.basis, cfg.h, x);
    let d = des.basis.dim();
    if des.win.len() < d {
        return Err(Error::InsufficientLocalData { n_local: des.win.len(), dim: d });
    }
    let gamma = des.gamma(n);
    let gamma_inv = spd_inverse(&gamma).map_err(|cond| Error::SingularGram { cond })?;
    let moment = des.moment(e, n);
    let theta_norm = &gamma_inv * &moment;
    let psi = des.psi(s, &moment);
    let sigma = sigma_hat(&psi);
    let omega_norm = symmetrize(&(&gamma_inv * &sigma * &gamma_inv));
    let transform = des.basis.coef_transform(cfg.h);
    let theta = &transform * &theta_norm;
    let omega = symmetrize(&(&transform * &omega_norm * transform.transpose()));
    Ok((
        PointFit {
            x,
            h: cfg.h,
            n,
            n_local: des.win.len(),
            basis: cfg.basis,
            theta,
            theta_norm,
            gamma,
            gamma_inv,
            sigma,
            omega_norm,
            omega,
            transform,
        },
        psi,
    ))
}

pub fn normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    Normal::standard().inverse_cdf(p)
}

/// Normal-theory interval for f^(deriv) (or F when deriv = -1).
pub fn ci_pointwise(fit: &PointFit, deriv: i32, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let cn = fit.unit_contrast(fit.index(deriv)?);
    ci_combination(fit, &cn, alpha)
}

pub fn ci_combination(fit: &PointFit, cn: &DVector<f64>, alpha: f64) -> Result<Interval> {
    let (est, var) = fit.combination(cn)?;
    let se = var.sqrt();
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok(Interval { estimate: est, se, lo: est - z * se, hi: est + z * se })
}

#[derive(Debug, Clone)]
pub struct GridPoint {
    pub x: f64,
    pub fit: Result<PointFit>,
    pub inference: Option<Result<PointFit>>,
}

impl GridPoint {
    /// Fit used for standard errors and intervals.
    pub fn inference_fit(&self) -> &Result<PointFit> {
        self.inference.as_ref().unwrap_or(&self.fit)
    }

    pub fn is_ok(&self) -> bool {
        self.fit.is_ok() && self.inference_fit().is_ok()
    }
}

#[derive(Debug, Clone)]
pub struct GridFit {
    pub cfg: FitConfig,
    pub points: Vec<GridPoint>,
    pub warnings: Vec<String>,
}

impl GridFit {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| !p.is_ok()).count()
    }
}

pub fn fit_grid(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, grid: &[f64]) -> Result<GridFit> {
    cfg.validate()?;
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty evaluation grid".into()));
    }
    let mut warnings = Vec::new();
    if grid.windows(2).any(|w| w[1] < w[0]) {
        warnings.push("evaluation grid is not sorted".to_string());
    }
    let (lo, hi) = (s.min(), s.max());
    let outside = grid.iter().filter(|&&g| g < lo || g > hi).count();
    if outside > 0 {
        warnings.push(format!("{outside} grid point(s) outside the data range [{lo}, {hi}]"));
    }
    let inf_cfg = cfg.inference_basis.map(|_| cfg.inference_config());
    let points: Vec<GridPoint> = grid
        .par_iter()
        .map(|&x| GridPoint {
            x,
            fit: fit_point(s, e, cfg, x),
            inference: inf_cfg.as_ref().map(|c| fit_point(s, e, c, x)),
        })
        .collect();
    if points.iter().all(|p| !p.is_ok()) {
        return Err(Error::AllPointsFailed);
    }
    Ok(GridFit { cfg: *cfg, points, warnings })
}

/// Fit subject to a'θ >= b with θ in data units.
pub fn fit_point_constrained(
    s: &SortedSample,
    e: &EdfValues,
    cfg: &FitConfig,
    x: f64,
    a: &DVector<f64>,
    b: f64,
) -> Result<PointFit> {
    let fit = fit_point(s, e, cfg, x)?;
    if a.len() != fit.dim() {
        return Err(Error::InvalidInput(format!(
            "constraint has length {}, basis has dimension {}",
            a.len(),
            fit.dim()
        )));
    }
    if a.dot(&fit.theta) >= b {
        return Ok(fit);
    }
    let an = fit.contrast_norm(a);
    let ga = &fit.gamma_inv * &an;
    let denom = an.dot(&ga);
    let scale = an.norm() * an.norm() * fit.gamma_inv.norm();
    if !(denom > 1e-14 * scale) {
        return Err(Error::InvalidInput("constraint lies in the null space of the Gram matrix".into()));
    }
    let m = ga / denom;
    let gap = b - an.dot(&fit.theta_norm);
    let theta_norm = &fit.theta_norm + &m * gap;
    let d = fit.dim();
    let proj = DMatrix::identity(d, d) - &m * an.transpose();
    let omega_norm = symmetrize(&(&proj * &fit.omega_norm * proj.transpose()));
    let mut theta = &fit.transform * &theta_norm;
    let nz: Vec<usize> = (0..d).filter(|&i| a[i] != 0.0).collect();
    if nz.len() == 1 {
        theta[nz[0]] = b / a[nz[0]];
    }
    let omega = symmetrize(&(&fit.transform * &omega_norm * fit.transform.transpose()));
    Ok(PointFit { theta, theta_norm, omega_norm, omega, ..fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::{edf_at_points, sort_sample};

    fn sample(x: &[f64]) -> (SortedSample, EdfValues) {
        let s = sort_sample(x, None).unwrap();
        let e = edf_at_points(&s);
        (s, e)
    }

    fn pseudo_uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn gamma_hand_sum() {
        let h = 0.5;
        let (s, _) = sample(&[-h, 0.0, h]);
        let cfg = FitConfig::new(Kernel::Uniform, BasisSpec::poly(0), h, -1);
        let g = gamma_hat(&s, &cfg, 0.0);
        assert!((g[(0, 0)] - 3.0 * 0.5 / h / 3.0).abs() < 1e-15);
        let far = gamma_hat(&s, &cfg, 10.0);
        assert_eq!(far[(0, 0)], 0.0);
        let cfg1 = FitConfig::new(Kernel::Uniform, BasisSpec::poly(1), h, 0);
        let g1 = gamma_hat(&s, &cfg1, 0.0);
        assert!(g1[(0, 1)].abs() < 1e-15);
    }

    #[test]
    fn psi_mean_zero_and_below_window() {
        let x = pseudo_uniform(200, 3);
        let (s, e) = sample(&x);
        let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.2, 0);
        let psi = psi_hat_all(&s, &e, &cfg, 0.6);
        let mean = psi.row_sum() / 200.0;
        let scale = psi.abs().max();
        assert!(mean.abs().max() < 1e-12 * scale);
        let des = Design::new(&s, cfg.kernel, cfg.basis, cfg.h, 0.6);
        let n = 200.0;
        let mut expect: DVector<f64> = DVector::zeros(3);
        for k in 0..des.win.len() {
            let f = e.values[des.win.lo + k];
            for a in 0..3 {
                expect[a] += des.win.kw[k] * des.r[(k, a)] * (1.0 - f) / n;
            }
        }
        for a in 0..3 {
            assert!((psi[(0, a)] - expect[a]).abs() < 1e-14);
        }
    }

    #[test]
    fn reproduces_polynomials() {
        let x = pseudo_uniform(300, 9);
        let (s, _) = sample(&x);
        let x0 = 0.4;
        let coefs = [0.3, 1.7, -2.0, 0.9];
        let vals: Vec<f64> = s
            .values
            .iter()
            .map(|&v| {
                let t = v - x0;
                coefs[0] + coefs[1] * t + coefs[2] * t * t / 2.0 + coefs[3] * t.powi(3) / 6.0
            })
            .collect();
        let e = EdfValues { values: vals };
        let cfg = FitConfig::new(Kernel::Epanechnikov, BasisSpec::poly(3), 0.3, 0);
        let fit = fit_point(&s, &e, &cfg, x0).unwrap();
        for k in 0..4 {
            assert!((fit.theta[k] - coefs[k]).abs() < 1e-10, "{k}: {}", fit.theta[k]);
        }
    }

    #[test]
    fn insufficient_and_singular() {
        let (s, e) = sample(&[0.0, 0.1, 0.2, 5.0]);
        let cfg = FitConfig::new(Kernel::Uniform, BasisSpec::poly(2), 0.3, 0);
        assert!(matches!(fit_point(&s, &e, &cfg, 5.0), Err(Error::InsufficientLocalData { .. })));
        let (s, e) = sample(&[0.1, 0.1, 0.1, 0.1]);
        assert!(matches!(fit_point(&s, &e, &cfg, 0.0), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn interval_properties() {
        let x = pseudo_uniform(500, 5);
        let (s, e) = sample(&x);
        let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.25, 0);
        let fit = fit_point(&s, &e, &cfg, 0.5).unwrap();
        let ci = ci_pointwise(&fit, 0, 1.0).unwrap();
        assert_eq!(ci.lo, ci.hi);
        assert_eq!(ci.lo, fit.theta[1]);
        let ci = ci_pointwise(&fit, 0, 0.05).unwrap();
        assert!(((ci.hi - ci.estimate) - (ci.estimate - ci.lo)).abs() < 1e-15);
        assert!(ci_pointwise(&fit, 0, 0.0).is_err());
    }

    #[test]
    fn constrained_fit() {
        let x = pseudo_uniform(100, 11);
        let (s, e) = sample(&x);
        let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.3, 0);
        let fit = fit_point(&s, &e, &cfg, 0.5).unwrap();
        let mut a = DVector::zeros(3);
        a[1] = 1.0;
        let same = fit_point_constrained(&s, &e, &cfg, 0.5, &a, 0.0).unwrap();
        assert_eq!(same.theta, fit.theta);
        let bound = fit.theta[1] + 0.5;
        let c = fit_point_constrained(&s, &e, &cfg, 0.5, &a, bound).unwrap();
        assert_eq!(c.theta[1], bound);
        assert!(c.objective(&s, &e, cfg.kernel) >= fit.objective(&s, &e, cfg.kernel));
    }
}
