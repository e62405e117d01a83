//! Local L² projection estimator with a fixed design measure, and the
//! derivative-basis estimator that attains the variance bound.

use crate::basis::{derivative_basis, BasisSpec};
use crate::edf::{edf_eval, EdfValues, SortedSample};
use crate::error::{Error, Result};
use crate::fit::{FitConfig, PointFit};
use crate::kernel::Kernel;
use crate::linalg::{spd_inverse, symmetrize};
use crate::quad::{panel_edges, GaussLegendre};
use nalgebra::{DMatrix, DVector};

/// Tabulated design density, linearly interpolated and zero outside its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedDensity {
    pub t: Vec<f64>,
    pub g: Vec<f64>,
}

impl TabulatedDensity {
    pub fn new(t: Vec<f64>, g: Vec<f64>) -> Result<Self> {
        if t.len() != g.len() || t.len() < 2 {
            return Err(Error::InvalidInput("tabulated density needs matching nodes and values (>= 2)".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("tabulation nodes must be strictly increasing".into()));
        }
        if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("design density must be finite and nonnegative".into()));
        }
        Ok(TabulatedDensity { t, g })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        if x < self.t[0] || x > self.t[n - 1] {
            return 0.0;
        }
        let k = self.t.partition_point(|&v| v <= x).clamp(1, n - 1);
        let (a, b) = (self.t[k - 1], self.t[k]);
        let w = (x - a) / (b - a);
        self.g[k - 1] * (1.0 - w) + self.g[k] * w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignKind {
    Lebesgue,
    KnownDensity(TabulatedDensity),
    Empirical,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub kind: DesignKind,
    pub support: Option<(f64, f64)>,
}

impl DesignSpec {
    pub fn lebesgue(lo: f64, hi: f64) -> Self {
        DesignSpec { kind: DesignKind::Lebesgue, support: Some((lo, hi)) }
    }

    pub fn empirical() -> Self {
        DesignSpec { kind: DesignKind::Empirical, support: None }
    }

    pub fn known_density(g: TabulatedDensity, lo: f64, hi: f64) -> Self {
        DesignSpec { kind: DesignKind::KnownDensity(g), support: Some((lo, hi)) }
    }

    fn support(&self) -> Result<(f64, f64)> {
        let (lo, hi) = self
            .support
            .ok_or_else(|| Error::InvalidInput("the L2 estimator requires the support".into()))?;
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidInput(format!("invalid support [{lo}, {hi}]")));
        }
        Ok((lo, hi))
    }
}

/// Pieces of the L² fit: Gram, moment, and centered influence vectors η_i (rows, sorted order).
struct L2Parts {
    gamma: DMatrix<f64>,
    moment: DVector<f64>,
    eta: DMatrix<f64>,
    n_local: usize,
}

fn local_count(s: &SortedSample, x: f64, h: f64) -> usize {
    s.count_le(x + h) - s.count_lt(x - h)
}

fn l2_parts(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, design: &DesignSpec, x: f64) -> Result<L2Parts> {
    if !(cfg.h > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {}", cfg.h)));
    }
    match &design.kind {
        DesignKind::Empirical => empirical_parts(s, cfg, x),
        DesignKind::Lebesgue => continuous_parts(s, e, cfg, design.support()?, None, x),
        DesignKind::KnownDensity(g) => continuous_parts(s, e, cfg, design.support()?, Some(g), x),
    }
}

/// Design G = F̂: atoms of mass 1/n at the observations, F̂ looked up by binary search.
fn empirical_parts(s: &SortedSample, cfg: &FitConfig, x: f64) -> Result<L2Parts> {
    let basis = cfg.basis.build();
    let d = basis.dim();
    let n = s.len();
    let nf = n as f64;
    let h = cfg.h;
    let mut atoms: Vec<(usize, DVector<f64>)> = Vec::new();
    let mut gamma = DMatrix::zeros(d, d);
    let mut moment = DVector::zeros(d);
    for k in 0..n {
        let u = (s.values[k] - x) / h;
        if u.abs() > 1.0 {
            continue;
        }
        let kw = cfg.kernel.eval(u) / h / nf;
        let r = basis.eval(u);
        gamma += &r * r.transpose() * kw;
        moment += &r * (kw * edf_eval(s, s.values[k]));
        atoms.push((k, r * kw));
    }
    let m = atoms.len();
    let mut suffix = vec![DVector::<f64>::zeros(d); m + 1];
    for a in (0..m).rev() {
        suffix[a] = &suffix[a + 1] + &atoms[a].1;
    }
    let mut eta = DMatrix::zeros(n, d);
    for i in 0..n {
        let first = atoms.partition_point(|(k, _)| s.values[*k] < s.values[i]);
        let row = &suffix[first] * s.weights[i] - &moment;
        eta.set_row(i, &row.transpose());
    }
    Ok(L2Parts { gamma: symmetrize(&gamma), moment, eta, n_local: m })
}

fn continuous_parts(
    s: &SortedSample,
    _e: &EdfValues,
    cfg: &FitConfig,
    support: (f64, f64),
    g: Option<&TabulatedDensity>,
    x: f64,
) -> Result<L2Parts> {
    let basis = cfg.basis.build();
    let d = basis.dim();
    let h = cfg.h;
    let n = s.len();
    let ulo = ((support.0 - x) / h).max(-1.0);
    let uhi = ((support.1 - x) / h).min(1.0);
    if !(uhi > ulo) {
        return Err(Error::InvalidInput(format!("evaluation point {x} has no support inside its window")));
    }
    let mut breaks: Vec<f64> = Vec::new();
    let a = s.count_lt(x + h * ulo);
    let b = s.count_le(x + h * uhi);
    for k in a..b {
        breaks.push((s.values[k] - x) / h);
    }
    breaks.extend_from_slice(cfg.kernel.breakpoints());
    breaks.extend_from_slice(basis.breakpoints());
    if let Some(g) = g {
        breaks.extend(g.t.iter().map(|&t| (t - x) / h));
    }
    let edges = panel_edges(ulo, uhi, &breaks);
    let degree = 2 * basis.max_power() as usize + cfg.kernel.degree() + usize::from(g.is_some());
    let rule = GaussLegendre::cached(degree / 2 + 2);
    let np = edges.len() - 1;
    let mut gamma = DMatrix::zeros(d, d);
    let mut moment = DVector::zeros(d);
    let mut panel_j: Vec<DVector<f64>> = Vec::with_capacity(np);
    let mut r = vec![0.0; d];
    for w in edges.windows(2) {
        let (pa, pb) = (w[0], w[1]);
        let half = 0.5 * (pb - pa);
        let mid = 0.5 * (pa + pb);
        let mut jv = DVector::zeros(d);
        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
            let u = mid + half * t;
            let dens = g.map_or(1.0, |g| g.eval(x + h * u));
            let c = wt * half * cfg.kernel.eval(u) * dens;
            basis.eval_into(u, &mut r);
            for p in 0..d {
                jv[p] += c * r[p];
                for q in p..d {
                    gamma[(p, q)] += c * r[p] * r[q];
                }
            }
        }
        // F̂ is constant on the open panel; evaluate at its midpoint.
        let f = edf_eval(s, x + h * mid);
        moment += &jv * f;
        panel_j.push(jv);
    }
    for p in 0..d {
        for q in 0..p {
            gamma[(p, q)] = gamma[(q, p)];
        }
    }
    let mut suffix = vec![DVector::<f64>::zeros(d); np + 1];
    for k in (0..np).rev() {
        suffix[k] = &suffix[k + 1] + &panel_j[k];
    }
    let mut eta = DMatrix::zeros(n, d);
    for i in 0..n {
        let ui = (s.values[i] - x) / h;
        // panels lying entirely at or above u_i
        let k = edges[..np].partition_point(|&ea| ea < ui);
        let row = &suffix[k] * s.weights[i] - &moment;
        eta.set_row(i, &row.transpose());
    }
    Ok(L2Parts { gamma, moment, eta, n_local: local_count(s, x, h) })
}

pub fn l2_fit_point(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, design: &DesignSpec, x: f64) -> Result<PointFit> {
    let parts = l2_parts(s, e, cfg, design, x)?;
    let basis = cfg.basis.build();
    let d = basis.dim();
    if matches!(design.kind, DesignKind::Empirical) && parts.n_local < d {
        return Err(Error::InsufficientLocalData { n_local: parts.n_local, dim: d });
    }
    let gamma_inv = spd_inverse(&parts.gamma).map_err(|cond| Error::SingularGram { cond })?;
    let theta_norm = &gamma_inv * &parts.moment;
    let n = s.len() as f64;
    let sigma = parts.eta.tr_mul(&parts.eta) / (n * n);
    let omega_norm = symmetrize(&(&gamma_inv * &sigma * &gamma_inv));
    let transform = basis.coef_transform(cfg.h);
    let theta = &transform * &theta_norm;
    let omega = symmetrize(&(&transform * &omega_norm * transform.transpose()));
    Ok(PointFit {
        x,
        h: cfg.h,
        n: s.len(),
        n_local: parts.n_local,
        basis: cfg.basis,
        theta,
        theta_norm,
        gamma: parts.gamma,
        gamma_inv,
        sigma,
        omega_norm,
        omega,
        transform,
    })
}

/// L² projection of an arbitrary function F onto the local basis under a continuous design,
/// returning data-unit coefficients. With F = F̂ this is the numerator of `l2_fit_point`.
pub fn l2_project<F: Fn(f64) -> f64>(cfg: &FitConfig, design: &DesignSpec, x: f64, f: F) -> Result<DVector<f64>> {
    let g = match &design.kind {
        DesignKind::Lebesgue => None,
        DesignKind::KnownDensity(g) => Some(g),
        DesignKind::Empirical => return Err(Error::Unsupported("projection needs a continuous design".into())),
    };
    let support = design.support()?;
    let basis = cfg.basis.build();
    let d = basis.dim();
    let h = cfg.h;
    let ulo = ((support.0 - x) / h).max(-1.0);
    let uhi = ((support.1 - x) / h).min(1.0);
    let mut breaks = cfg.kernel.breakpoints().to_vec();
    breaks.extend_from_slice(basis.breakpoints());
    if let Some(g) = g {
        breaks.extend(g.t.iter().map(|&t| (t - x) / h));
    }
    let gamma = crate::mindist::kernel_gram(
        d,
        |u, o| {
            basis.eval_into(u, o);
            let w = g.map_or(1.0, |g| g.eval(x + h * u)).sqrt();
            o.iter_mut().for_each(|v| *v *= w);
        },
        cfg.kernel,
        ulo,
        uhi,
    )?;
    let num = crate::quad::integrate_vec(
        d,
        |u, o: &mut [f64]| {
            basis.eval_into(u, o);
            let w = cfg.kernel.eval(u) * g.map_or(1.0, |g| g.eval(x + h * u)) * f(x + h * u);
            o.iter_mut().for_each(|v| *v *= w);
        },
        ulo,
        uhi,
        &breaks,
        crate::quad::QuadOptions::default(),
    )?;
    let gi = spd_inverse(&gamma).map_err(|cond| Error::SingularGram { cond })?;
    Ok(basis.coef_transform(h) * (gi * DVector::from_vec(num)))
}

/// Σ̂_h = (1/n) Σ_i η_i η_i′ with η_i = ∫ R(u)[w_i 1(x_i ≤ x+hu) − F̂(x+hu)] K(u) dG, normalized coordinates.
pub fn l2_sigma_hat(s: &SortedSample, e: &EdfValues, cfg: &FitConfig, design: &DesignSpec, x: f64) -> Result<DMatrix<f64>> {
    let parts = l2_parts(s, e, cfg, design, x)?;
    Ok(parts.eta.tr_mul(&parts.eta) / s.len() as f64)
}

#[derive(Debug, Clone)]
pub struct NdFit {
    pub x: f64,
    pub h: f64,
    /// Estimates of (f, f′, …, f^(p−1)) at x.
    pub theta: DVector<f64>,
    pub omega: DMatrix<f64>,
}

/// θ̂_ND = (∫ Ṗ Ṗ′ K)^{-1} (1/n) Σ w_i Ṗ(u_i) K(u_i)/h with the integral over the support window.
pub fn nd_estimate(s: &SortedSample, kernel: Kernel, p: usize, h: f64, support: (f64, f64), x: f64) -> Result<NdFit> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be >= 1".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
    }
    if !(support.1 > support.0) {
        return Err(Error::InvalidInput("invalid support".into()));
    }
    let lo = ((support.0 - x) / h).max(-1.0);
    let hi = ((support.1 - x) / h).min(1.0);
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("evaluation point {x} has no support inside its window")));
    }
    let mut brk = kernel.breakpoints().to_vec();
    brk.retain(|&b| b > lo && b < hi);
    let rule = GaussLegendre::cached(p + 2);
    let mut gram = DMatrix::zeros(p, p);
    for w in panel_edges(lo, hi, &brk).windows(2) {
        let half = 0.5 * (w[1] - w[0]);
        let mid = 0.5 * (w[0] + w[1]);
        for (t, wt) in rule.nodes.iter().zip(&rule.weights) {
            let u = mid + half * t;
            let pd = DVector::from_vec(derivative_basis(p, u));
            gram += &pd * pd.transpose() * (wt * half * kernel.eval(u));
        }
    }
    let gi = spd_inverse(&gram).map_err(|cond| Error::SingularGram { cond })?;
    let n = s.len() as f64;
    let mut mean = DVector::zeros(p);
    let mut outer = DMatrix::zeros(p, p);
    let a = s.count_lt(x - h);
    let b = s.count_le(x + h);
    for k in a..b {
        let u = (s.values[k] - x) / h;
        let ak = DVector::from_vec(derivative_basis(p, u)) * (s.weights[k] * kernel.eval(u) / h);
        outer += &ak * ak.transpose();
        mean += ak;
    }
    mean /= n;
    outer /= n;
    let v = (outer - &mean * mean.transpose()) / n;
    let ups = DMatrix::from_diagonal(&DVector::from_fn(p, |k, _| h.powi(-(k as i32))));
    let theta = &ups * (&gi * mean);
    let omega = symmetrize(&(&ups * &gi * v * &gi * &ups));
    Ok(NdFit { x, h, theta, omega })
}

/// Uniform-kernel density estimate (1/(2nh)) Σ w_i 1(|x_i − x| ≤ h).
pub fn uniform_kde(s: &SortedSample, h: f64, x: f64) -> f64 {
    let a = s.count_lt(x - h);
    let b = s.count_le(x + h);
    let w = s.cum_weight(b) - s.cum_weight(a);
    w / (2.0 * h * s.len() as f64)
}

/// The basis used by the L² estimator is the same as for local regression.
pub fn l2_basis(p: usize) -> BasisSpec {
    BasisSpec::poly(p)
}
