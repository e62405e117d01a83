//! Weighting schemes for counterfactual, IV-validity and complier distributions,
//! with a logit propensity fitter.

use crate::error::{Error, Result};
use crate::linalg::{spd_inverse, sym_condition};
use nalgebra::{DMatrix, DVector};

pub const PROPENSITY_CLAMP: f64 = 1e-3;

/// Outcome, binary group indicator, optional binary instrument and covariate design.
#[derive(Debug, Clone)]
pub struct PanelData {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub d: Option<Vec<f64>>,
    /// n × k design including the intercept column.
    pub z: DMatrix<f64>,
}

impl PanelData {
    pub fn new(x: Vec<f64>, t: Vec<f64>, d: Option<Vec<f64>>, z: DMatrix<f64>) -> Result<Self> {
        let n = x.len();
        if t.len() != n || z.nrows() != n || d.as_ref().is_some_and(|d| d.len() != n) {
            return Err(Error::InvalidInput("panel columns have different lengths".into()));
        }
        check_binary(&t, "treatment")?;
        if let Some(d) = &d {
            check_binary(d, "instrument")?;
        }
        if x.iter().chain(z.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite values in panel".into()));
        }
        Ok(PanelData { x, t, d, z })
    }
}

pub fn check_binary(v: &[f64], name: &str) -> Result<()> {
    match v.iter().position(|&a| a != 0.0 && a != 1.0) {
        Some(i) => Err(Error::InvalidInput(format!("{name} value {} at row {} is not 0/1", v[i], i + 1))),
        None => Ok(()),
    }
}

/// Intercept plus per-covariate powers 1..=order (no interactions).
pub fn expand_design(covariates: &[Vec<f64>], n: usize, order: usize) -> Result<DMatrix<f64>> {
    if covariates.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("covariate columns have different lengths".into()));
    }
    let k = 1 + covariates.len() * order;
    let mut z = DMatrix::zeros(n, k);
    for i in 0..n {
        z[(i, 0)] = 1.0;
        for (c, col) in covariates.iter().enumerate() {
            for p in 1..=order {
                z[(i, 1 + c * order + p - 1)] = col[i].powi(p as i32);
            }
        }
    }
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct LogitModel {
    pub beta: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub loglik: f64,
    pub separated: bool,
    pub gradient_norm: f64,
}

impl LogitModel {
    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        (z * &self.beta).iter().map(|&e| sigmoid(e)).collect()
    }

    /// Standard errors from the inverse observed information.
    pub fn std_errors(&self, z: &DMatrix<f64>) -> Result<Vec<f64>> {
        let p = self.predict(z);
        let info = weighted_gram(z, &p.iter().map(|v| v * (1.0 - v)).collect::<Vec<_>>());
        let inv = spd_inverse(&info).map_err(|cond| Error::SingularGram { cond })?;
        Ok((0..inv.nrows()).map(|i| inv[(i, i)].sqrt()).collect())
    }
}

fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let x = e.exp();
        x / (1.0 + x)
    }
}

fn loglik(z: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = z * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let l1p = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - l1p
        })
        .sum()
}

fn weighted_gram(z: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let k = z.ncols();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..z.nrows() {
        for a in 0..k {
            let za = w[i] * z[(i, a)];
            for b in a..k {
                g[(a, b)] += za * z[(i, b)];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Maximum-likelihood logit by Newton/IRLS with step halving.
pub fn fit_logit(z: &DMatrix<f64>, y: &[f64]) -> Result<LogitModel> {
    let n = z.nrows();
    if y.len() != n || n == 0 {
        return Err(Error::InvalidInput("design and response lengths differ".into()));
    }
    check_binary(y, "response")?;
    let ones = y.iter().filter(|&&v| v == 1.0).count();
    if ones == 0 || ones == n {
        return Err(Error::InvalidInput("logit response needs both classes".into()));
    }
    let ztz = z.tr_mul(z);
    if sym_condition(&ztz) > 1e14 {
        return Err(Error::InvalidInput("logit design is rank deficient".into()));
    }
    let k = z.ncols();
    let mut beta = DVector::zeros(k);
    let mut ll = loglik(z, y, &beta);
    let tol = 1e-8 * n as f64;
    let mut converged = false;
    let mut iterations = 0;
    let mut gnorm = f64::INFINITY;
    for it in 0..100 {
        iterations = it + 1;
        let p: Vec<f64> = (z * &beta).iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_fn(n, |i, _| y[i] - p[i]);
        let grad = z.tr_mul(&resid);
        gnorm = grad.norm();
        if gnorm < tol {
            converged = true;
            break;
        }
        let w: Vec<f64> = p.iter().map(|v| (v * (1.0 - v)).max(1e-300)).collect();
        let h = weighted_gram(z, &w);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => match h.lu().solve(&grad) {
                Some(s) => s,
                None => break,
            },
        };
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &beta + &step * t;
            let lc = loglik(z, y, &cand);
            if lc >= ll - 1e-12 * ll.abs() {
                beta = cand;
                ll = lc;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !converged {
        let p: Vec<f64> = (z * &beta).iter().map(|&e| sigmoid(e)).collect();
        let resid = DVector::from_fn(n, |i, _| y[i] - p[i]);
        gnorm = z.tr_mul(&resid).norm();
        converged = gnorm < tol;
    }
    let p: Vec<f64> = (z * &beta).iter().map(|&e| sigmoid(e)).collect();
    let extreme = p.iter().any(|&v| !(1e-10..=1.0 - 1e-10).contains(&v));
    Ok(LogitModel { beta, converged, iterations, loglik: ll, separated: extreme && !converged, gradient_norm: gnorm })
}

pub fn weights_subgroup(t: &[f64], which: u8) -> Result<Vec<f64>> {
    check_binary(t, "group")?;
    let target = f64::from(which);
    let count = t.iter().filter(|&&v| v == target).count();
    if count == 0 {
        return Err(Error::EmptySubgroup(format!("no observations with t = {which}")));
    }
    let inv = t.len() as f64 / count as f64;
    Ok(t.iter().map(|&v| if v == target { inv } else { 0.0 }).collect())
}

fn clamp_all(p: &mut [f64]) -> usize {
    let mut k = 0;
    for v in p.iter_mut() {
        let c = v.clamp(PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP);
        if c != *v {
            k += 1;
            *v = c;
        }
    }
    k
}

#[derive(Debug, Clone)]
pub struct EstimatedWeights {
    pub w: Vec<f64>,
    pub model: LogitModel,
    /// Number of propensities moved to the clamp bounds.
    pub clamped: usize,
    /// Estimated complier share, when relevant.
    pub share: Option<f64>,
}

/// Treated-subgroup weight t_i/P̂[t=1] times P̂[t=0|z_i]/P̂[t=1|z_i] · P̂[t=1]/P̂[t=0].
pub fn weights_counterfactual(t: &[f64], z: &DMatrix<f64>) -> Result<EstimatedWeights> {
    let model = fit_logit(z, t)?;
    let mut p = model.predict(z);
    let clamped = clamp_all(&mut p);
    let n = t.len() as f64;
    let p1 = t.iter().sum::<f64>() / n;
    if p1 == 0.0 || p1 == 1.0 {
        return Err(Error::EmptySubgroup("counterfactual weights need both groups".into()));
    }
    let ratio = 1.0 / (1.0 - p1);
    let w = t.iter().zip(&p).map(|(&ti, &pi)| ti * (1.0 - pi) / pi * ratio).collect();
    Ok(EstimatedWeights { w, model, clamped, share: None })
}

#[derive(Debug, Clone)]
pub struct IvWeights {
    pub w00: Vec<f64>,
    pub w10: Vec<f64>,
    /// P̂[t=0 | d=0]
    pub scale00: f64,
    /// P̂[t=0 | d=1]
    pub scale10: f64,
}

pub fn weights_iv_validity(t: &[f64], d: &[f64]) -> Result<IvWeights> {
    check_binary(t, "treatment")?;
    check_binary(d, "instrument")?;
    if t.len() != d.len() {
        return Err(Error::InvalidInput("treatment and instrument lengths differ".into()));
    }
    let n = t.len() as f64;
    let c00 = t.iter().zip(d).filter(|(&ti, &di)| ti == 0.0 && di == 0.0).count();
    let c10 = t.iter().zip(d).filter(|(&ti, &di)| ti == 0.0 && di == 1.0).count();
    let nd0 = d.iter().filter(|&&v| v == 0.0).count();
    let nd1 = d.len() - nd0;
    if c00 == 0 {
        return Err(Error::EmptySubgroup("no observations with d = 0, t = 0".into()));
    }
    if c10 == 0 {
        return Err(Error::EmptySubgroup("no observations with d = 1, t = 0".into()));
    }
    let inv00 = n / c00 as f64;
    let inv10 = n / c10 as f64;
    let w00 = t.iter().zip(d).map(|(&ti, &di)| (1.0 - di) * (1.0 - ti) * inv00).collect();
    let w10 = t.iter().zip(d).map(|(&ti, &di)| di * (1.0 - ti) * inv10).collect();
    Ok(IvWeights { w00, w10, scale00: c00 as f64 / nd0 as f64, scale10: c10 as f64 / nd1 as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComplierTarget {
    /// Observed outcome of compliers.
    Observed,
    /// Untreated potential outcome.
    Y0,
    /// Treated potential outcome.
    Y1,
}

/// First-stage share mean(t d/π − t(1−d)/(1−π)) with π = P̂[d=1|z].
pub fn complier_share(t: &[f64], d: &[f64], pi: &[f64]) -> f64 {
    let n = t.len() as f64;
    t.iter()
        .zip(d)
        .zip(pi)
        .map(|((&ti, &di), &p)| ti * di / p - ti * (1.0 - di) / (1.0 - p))
        .sum::<f64>()
        / n
}

pub fn weights_complier(t: &[f64], d: &[f64], z: &DMatrix<f64>, which: ComplierTarget) -> Result<EstimatedWeights> {
    check_binary(t, "treatment")?;
    if t.len() != d.len() {
        return Err(Error::InvalidInput("treatment and instrument lengths differ".into()));
    }
    let model = fit_logit(z, d)?;
    let mut pi = model.predict(z);
    let clamped = clamp_all(&mut pi);
    let share = complier_share(t, d, &pi);
    if !(share > 0.0) {
        return Err(Error::NonpositiveShare(share));
    }
    let w = t
        .iter()
        .zip(d)
        .zip(&pi)
        .map(|((&ti, &di), &p)| {
            let v = match which {
                ComplierTarget::Observed => 1.0 - ti * (1.0 - di) / (1.0 - p) - (1.0 - ti) * di / p,
                ComplierTarget::Y0 => (1.0 - ti) * ((1.0 - di) - (1.0 - p)) / ((1.0 - p) * p),
                ComplierTarget::Y1 => ti * (di - p) / ((1.0 - p) * p),
            };
            v / share
        })
        .collect();
    Ok(EstimatedWeights { w, model, clamped, share: Some(share) })
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intercept(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    #[test]
    fn subgroup_examples() {
        assert_eq!(weights_subgroup(&[1.0, 1.0, 0.0, 0.0], 1).unwrap(), vec![2.0, 2.0, 0.0, 0.0]);
        assert_eq!(weights_subgroup(&[1.0, 1.0, 1.0], 1).unwrap(), vec![1.0; 3]);
        assert!(weights_subgroup(&[0.0, 0.0], 1).is_err());
        let t: Vec<f64> = (0..97).map(|i| f64::from((i * 13) % 7 < 3)).collect();
        assert!((mean(&weights_subgroup(&t, 1).unwrap()) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn intercept_only_logit() {
        let y = [1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let m = fit_logit(&intercept(7), &y).unwrap();
        assert!(m.converged);
        let p = m.predict(&intercept(7));
        assert!((p[0] - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn label_swap() {
        let z = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - 3.5 });
        let y = [0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 1.0];
        let y2: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let a = fit_logit(&z, &y).unwrap();
        let b = fit_logit(&z, &y2).unwrap();
        for k in 0..2 {
            assert!((a.beta[k] + b.beta[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn counterfactual_cancels_without_covariates() {
        let t = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        let w = weights_counterfactual(&t, &intercept(9)).unwrap();
        let sub = weights_subgroup(&t, 1).unwrap();
        for (a, b) in w.w.iter().zip(&sub) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn iv_cells() {
        let t = [0.0, 0.0, 1.0, 1.0];
        let d = [0.0, 1.0, 0.0, 1.0];
        let w = weights_iv_validity(&t, &d).unwrap();
        assert_eq!(w.w00, vec![4.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.w10, vec![0.0, 4.0, 0.0, 0.0]);
        assert_eq!(w.scale00, 0.5);
        assert_eq!(w.scale10, 0.5);
    }

    #[test]
    fn perfect_compliance() {
        let d = [1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let w = weights_complier(&d, &d, &intercept(8), ComplierTarget::Observed).unwrap();
        for v in &w.w {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_binary() {
        assert!(weights_subgroup(&[0.0, 2.0], 1).is_err());
        assert!(fit_logit(&intercept(3), &[1.0, 1.0, 1.0]).is_err());
    }
}
