//! Monte Carlo harness: data-generating processes, coverage and efficiency
//! experiments, and the linearized Studentized process.

use crate::band::{confidence_band, BandConfig, Target};
use crate::basis::{BasisSpec, RedundantSpec};
use crate::bandwidth::rot_bandwidth;
use crate::edf::{edf_at_points, SortedSample};
use crate::error::{Error, Result};
use crate::fit::{ci_pointwise, fit_grid, fit_point, normal_quantile, FitConfig};
use crate::kernel::Kernel;
use crate::linalg::spd_inverse;
use crate::mindist::{asy_variance_interior, md_estimate, Partition};
use crate::quad::{integrate_vec, QuadOptions};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dgp {
    Gaussian { mu: f64, sigma: f64 },
    Exponential { rate: f64 },
    Uniform { a: f64, b: f64 },
    /// Two-piece linear density on [-1, 1], continuous at 0 with slopes `left` and `right`.
    Kinked { c: f64, left: f64, right: f64 },
}

impl Dgp {
    pub fn gaussian(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidInput("gaussian needs finite mean and positive sd".into()));
        }
        Ok(Dgp::Gaussian { mu, sigma })
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidInput("exponential rate must be positive".into()));
        }
        Ok(Dgp::Exponential { rate })
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidInput("uniform needs a < b".into()));
        }
        Ok(Dgp::Uniform { a, b })
    }

    /// Density c + left·x on [-1, 0) and c + right·x on [0, 1]; `right` is set so the mass is one.
    pub fn kinked(c: f64, left: f64) -> Result<Self> {
        let right = left + 2.0 * (1.0 - 2.0 * c);
        if c <= 0.0 || c - left < 0.0 || c + right < 0.0 {
            return Err(Error::InvalidInput(format!("kinked density negative for c = {c}, left slope = {left}")));
        }
        Ok(Dgp::Kinked { c, left, right })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dgp::Gaussian { .. } => "gaussian",
            Dgp::Exponential { .. } => "exponential",
            Dgp::Uniform { .. } => "uniform",
            Dgp::Kinked { .. } => "kinked",
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match *self {
            Dgp::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            Dgp::Exponential { .. } => (0.0, f64::INFINITY),
            Dgp::Uniform { a, b } => (a, b),
            Dgp::Kinked { .. } => (-1.0, 1.0),
        }
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match *self {
            Dgp::Gaussian { mu, sigma } => {
                let d = Normal::new(mu, sigma).expect("validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Dgp::Exponential { rate } => {
                let d = Exp::new(rate).expect("validated");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Dgp::Uniform { a, b } => (0..n).map(|_| rng.random_range(a..b)).collect(),
            Dgp::Kinked { .. } => (0..n).map(|_| self.quantile(rng.random::<f64>())).collect(),
        }
    }

    /// Inverse CDF (closed form for every family).
    pub fn quantile(&self, u: f64) -> f64 {
        match *self {
            Dgp::Gaussian { mu, sigma } => mu + sigma * normal_quantile(u),
            Dgp::Exponential { rate } => -(-u).ln_1p() / rate,
            Dgp::Uniform { a, b } => a + (b - a) * u,
            Dgp::Kinked { c, left, right } => {
                let f0 = c - left / 2.0;
                if u < f0 {
                    let k = u - f0;
                    let disc = (c * c + 2.0 * left * k).max(0.0);
                    2.0 * k / (c + disc.sqrt())
                } else {
                    let k = u - f0;
                    let disc = (c * c + 2.0 * right * k).max(0.0);
                    2.0 * k / (c + disc.sqrt())
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Dgp::Gaussian { mu, sigma } => 0.5 * libm_erfc(-(x - mu) / (sigma * std::f64::consts::SQRT_2)),
            Dgp::Exponential { rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-rate * x).exp_m1()
                }
            }
            Dgp::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
            Dgp::Kinked { c, left, right } => {
                if x <= -1.0 {
                    0.0
                } else if x < 0.0 {
                    c * (x + 1.0) + left * (x * x - 1.0) / 2.0
                } else if x < 1.0 {
                    c - left / 2.0 + c * x + right * x * x / 2.0
                } else {
                    1.0
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Dgp::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt())
            }
            Dgp::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    rate * (-rate * x).exp()
                }
            }
            Dgp::Uniform { a, b } => {
                if x >= a && x <= b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            Dgp::Kinked { c, left, right } => {
                if !(-1.0..=1.0).contains(&x) {
                    0.0
                } else if x < 0.0 {
                    c + left * x
                } else {
                    c + right * x
                }
            }
        }
    }

    /// k-th derivative of the density; one-sided kinks report the right derivative.
    pub fn pdf_derivative(&self, k: u32, x: f64) -> f64 {
        self.pdf_derivative_side(k, x, true)
    }

    pub fn pdf_derivative_side(&self, k: u32, x: f64, right_side: bool) -> f64 {
        if k == 0 {
            return self.pdf(x);
        }
        match *self {
            Dgp::Gaussian { mu, sigma } => {
                let z = (x - mu) / sigma;
                let he = hermite_prob(k, z);
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * he * self.pdf(x) / sigma.powi(k as i32)
            }
            Dgp::Exponential { rate } => {
                if x < 0.0 {
                    0.0
                } else {
                    (-rate).powi(k as i32) * rate * (-rate * x).exp()
                }
            }
            Dgp::Uniform { .. } => 0.0,
            Dgp::Kinked { left, right, .. } => {
                if k > 1 || !(-1.0..=1.0).contains(&x) {
                    0.0
                } else if x < 0.0 || (x == 0.0 && !right_side) {
                    left
                } else {
                    right
                }
            }
        }
    }

    /// F for deriv = -1, f for 0, f^(k) for k > 0.
    pub fn truth(&self, deriv: i32, x: f64) -> f64 {
        match deriv {
            d if d < 0 => self.cdf(x),
            0 => self.pdf(x),
            d => self.pdf_derivative(d as u32, x),
        }
    }
}

fn libm_erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x)
}

/// Probabilists' Hermite polynomial He_k.
fn hermite_prob(k: u32, z: f64) -> f64 {
    let (mut a, mut b) = (1.0, z);
    if k == 0 {
        return a;
    }
    for m in 1..k {
        let c = z * b - m as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// RNG for replication `rep`: one ChaCha stream per replication.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Seed for the Gaussian draws of replication `rep`.
pub fn rep_draw_seed(seed: u64, rep: u64) -> u64 {
    let mut z = seed ^ rep.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    /// Gaussian-reference rule of thumb for the point basis.
    Rot,
}

impl BandwidthRule {
    pub fn resolve(&self, s: &SortedSample, cfg: &FitConfig) -> Result<f64> {
        match *self {
            BandwidthRule::Fixed(h) => Ok(h),
            BandwidthRule::Rot => Ok(rot_bandwidth(s, cfg.basis.p, cfg.deriv.max(0) as usize, cfg.kernel)?.h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub fit: FitConfig,
    pub bandwidth: BandwidthRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub x: f64,
    pub truth: f64,
    pub coverage: f64,
    pub mean_bias: f64,
    pub sd: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub cells: Vec<CellSummary>,
    pub reps: usize,
    /// Replications that produced an estimate at every cell.
    pub completed: usize,
    pub seed: u64,
    pub mean_h: f64,
    /// Fraction of replications covered at all cells simultaneously (uniform experiments).
    pub joint_coverage: Option<f64>,
    /// Smallest band halfwidth minus pointwise halfwidth over all cells and replications.
    pub min_band_margin: Option<f64>,
    pub mean_q: Option<f64>,
    /// Per-cell fraction of replications inside the band (uniform experiments).
    pub band_coverage: Vec<f64>,
}

struct RepOutcome {
    h: f64,
    est: Vec<f64>,
    se: Vec<f64>,
    covered: Vec<bool>,
    in_band: Vec<bool>,
    joint: bool,
    margin: f64,
    q: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn summarize(grid: &[f64], truth: &[f64], outs: &[RepOutcome], reps: usize, seed: u64, uniform: bool) -> ExperimentResult {
    let m = outs.len();
    let cells = grid
        .iter()
        .enumerate()
        .map(|(g, &x)| {
            let est: Vec<f64> = outs.iter().map(|o| o.est[g]).collect();
            let se: Vec<f64> = outs.iter().map(|o| o.se[g]).collect();
            let (me, sd) = mean_sd(&est);
            let cover = outs.iter().filter(|o| o.covered[g]).count();
            CellSummary {
                x,
                truth: truth[g],
                coverage: if m == 0 { 0.0 } else { cover as f64 / m as f64 },
                mean_bias: me - truth[g],
                sd,
                mean_se: mean_sd(&se).0,
            }
        })
        .collect();
    let mean_h = outs.iter().map(|o| o.h).sum::<f64>() / m.max(1) as f64;
    ExperimentResult {
        cells,
        reps,
        completed: m,
        seed,
        mean_h,
        joint_coverage: uniform.then(|| outs.iter().filter(|o| o.joint).count() as f64 / m.max(1) as f64),
        min_band_margin: uniform.then(|| outs.iter().map(|o| o.margin).fold(f64::INFINITY, f64::min)),
        mean_q: uniform.then(|| outs.iter().map(|o| o.q).sum::<f64>() / m.max(1) as f64),
        band_coverage: if uniform {
            (0..grid.len()).map(|g| outs.iter().filter(|o| o.in_band[g]).count() as f64 / m.max(1) as f64).collect()
        } else {
            Vec::new()
        },
    }
}

fn pointwise_rep(dgp: &Dgp, n: usize, cfg: &SimConfig, x: f64, truth: f64, alpha: f64, rng: &mut ChaCha8Rng) -> Result<RepOutcome> {
    let data = dgp.sample(n, rng);
    let s = SortedSample::new(&data, None)?;
    let e = edf_at_points(&s);
    let h = cfg.bandwidth.resolve(&s, &cfg.fit)?;
    let fc = cfg.fit.with_h(h);
    let fit = fit_point(&s, &e, &fc, x)?;
    let inf = match fc.inference_basis {
        Some(_) => fit_point(&s, &e, &fc.inference_config(), x)?,
        None => fit.clone(),
    };
    let ci = ci_pointwise(&inf, fc.deriv, alpha)?;
    Ok(RepOutcome {
        h,
        est: vec![fit.estimate(fc.deriv)?],
        se: vec![ci.se],
        covered: vec![ci.lo <= truth && truth <= ci.hi],
        in_band: Vec::new(),
        joint: false,
        margin: 0.0,
        q: 0.0,
    })
}

/// Fraction of replications whose pointwise interval covers f^(ℓ)(x).
pub fn run_pointwise_coverage(
    dgp: &Dgp,
    n: usize,
    reps: usize,
    cfg: &SimConfig,
    x: f64,
    alpha: f64,
    seed: u64,
) -> Result<ExperimentResult> {
    cfg.fit.with_h(1.0).validate()?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidInput(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let truth = dgp.truth(cfg.fit.deriv, x);
    let outs: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .filter_map(|r| pointwise_rep(dgp, n, cfg, x, truth, alpha, &mut rep_rng(seed, r as u64)).ok())
        .collect();
    Ok(summarize(&[x], &[truth], &outs, reps, seed, false))
}

fn uniform_rep(
    dgp: &Dgp,
    n: usize,
    cfg: &SimConfig,
    grid: &[f64],
    truth: &[f64],
    band: &BandConfig,
    rep: u64,
    rng: &mut ChaCha8Rng,
) -> Result<RepOutcome> {
    let data = dgp.sample(n, rng);
    let s = SortedSample::new(&data, None)?;
    let e = edf_at_points(&s);
    let h = cfg.bandwidth.resolve(&s, &cfg.fit)?;
    let fc = cfg.fit.with_h(h);
    let gf = fit_grid(&s, &e, &fc, grid)?;
    if gf.n_failed() > 0 {
        return Err(Error::AllPointsFailed);
    }
    let bc = BandConfig { seed: rep_draw_seed(band.seed, rep), ..*band };
    let b = confidence_band(&s, &e, &gf, &bc)?;
    let mut est = Vec::with_capacity(grid.len());
    for p in &gf.points {
        let f = p.fit.as_ref().map_err(|e| e.clone())?;
        est.push(match band.target {
            Target::Coef(d) => f.estimate(d)?,
            Target::Md(_) => b.center[est.len()],
        });
    }
    let covered: Vec<bool> = (0..grid.len()).map(|g| (b.center[g] - truth[g]).abs() <= b.z * b.se[g]).collect();
    let in_band: Vec<bool> = (0..grid.len()).map(|g| b.lo[g] <= truth[g] && truth[g] <= b.hi[g]).collect();
    let joint = in_band.iter().all(|&v| v);
    let margin = (0..grid.len()).map(|g| b.halfwidth[g] - b.z * b.se[g]).fold(f64::INFINITY, f64::min);
    Ok(RepOutcome { h, est, se: b.se, covered, in_band, joint, margin, q: b.q })
}

/// Fraction of replications whose band covers the truth at every grid point.
pub fn run_uniform_coverage(
    dgp: &Dgp,
    n: usize,
    reps: usize,
    cfg: &SimConfig,
    grid: &[f64],
    band: &BandConfig,
    seed: u64,
) -> Result<ExperimentResult> {
    cfg.fit.with_h(1.0).validate()?;
    band.validate()?;
    let d = band.target.deriv();
    let truth: Vec<f64> = grid.iter().map(|&x| dgp.truth(d, x)).collect();
    let outs: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .filter_map(|r| uniform_rep(dgp, n, cfg, grid, &truth, band, r as u64, &mut rep_rng(seed, r as u64)).ok())
        .collect();
    Ok(summarize(grid, &truth, &outs, reps, seed, true))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyRow {
    /// None for the base estimator.
    pub j: Option<u32>,
    /// Monte Carlo variance of f̂^(ℓ)(x) · sqrt(n h^(2ℓ+1)).
    pub scaled_var: f64,
    /// `scaled_var` divided by f(x).
    pub normalized_var: f64,
    /// Interior asymptotic constant with f(x) = 1.
    pub asy_constant: f64,
    pub ratio_mc: f64,
    pub ratio_asy: f64,
    pub completed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyTable {
    pub rows: Vec<EfficiencyRow>,
    pub p: usize,
    pub deriv: usize,
    pub x: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencySetup {
    pub kernel: Kernel,
    pub p: usize,
    pub deriv: usize,
    pub bandwidth: BandwidthRule,
}

/// Monte Carlo variances of the base and minimum-distance estimators over `j_list`.
pub fn run_efficiency(
    dgp: &Dgp,
    n: usize,
    reps: usize,
    setup: &EfficiencySetup,
    j_list: &[u32],
    x: f64,
    seed: u64,
) -> Result<EfficiencyTable> {
    let (p, deriv, kernel) = (setup.p, setup.deriv, setup.kernel);
    let base_cfg = FitConfig::new(kernel, BasisSpec::poly(p), 1.0, deriv as i32);
    base_cfg.validate()?;
    let specs: Vec<BasisSpec> = j_list
        .iter()
        .map(|&j| Ok(BasisSpec::poly(p).with_redundant(RedundantSpec::for_derivative(j, deriv, true)?)))
        .collect::<Result<_>>()?;
    let k = BasisSpec::poly(p).coef_index(deriv as i32)?;
    let scale_pow = 2 * deriv as i32 + 1;
    let one_rep = |r: usize| -> Vec<Option<f64>> {
        let mut rng = rep_rng(seed, r as u64);
        let data = dgp.sample(n, &mut rng);
        let Ok(s) = SortedSample::new(&data, None) else { return vec![None; specs.len() + 1] };
        let e = edf_at_points(&s);
        let Ok(h) = setup.bandwidth.resolve(&s, &base_cfg) else { return vec![None; specs.len() + 1] };
        let scale = (n as f64 * h.powi(scale_pow)).sqrt();
        let mut out = Vec::with_capacity(specs.len() + 1);
        out.push(fit_point(&s, &e, &base_cfg.with_h(h), x).and_then(|f| f.estimate(deriv as i32)).ok().map(|v| v * scale));
        for spec in &specs {
            let cfg = FitConfig::new(kernel, *spec, h, deriv as i32);
            let v = fit_point(&s, &e, &cfg, x)
                .and_then(|f| Partition::for_basis(spec).and_then(|part| md_estimate(&f, &part)))
                .map(|b| b.theta1[k] * scale);
            out.push(v.ok());
        }
        out
    };
    let draws: Vec<Vec<Option<f64>>> = (0..reps).into_par_iter().map(one_rep).collect();
    let fx = dgp.pdf(x);
    let mut rows = Vec::with_capacity(specs.len() + 1);
    let mut consts = vec![asy_variance_interior(p, deriv, kernel, None)?];
    for &j in j_list {
        consts.push(asy_variance_interior(p, deriv, kernel, Some(RedundantSpec::for_derivative(j, deriv, true)?)).unwrap_or(f64::NAN));
    }
    for col in 0..=specs.len() {
        let v: Vec<f64> = draws.iter().filter_map(|d| d[col]).collect();
        let (_, sd) = mean_sd(&v);
        let scaled_var = sd * sd;
        rows.push(EfficiencyRow {
            j: if col == 0 { None } else { Some(j_list[col - 1]) },
            scaled_var,
            normalized_var: scaled_var / fx,
            asy_constant: consts[col],
            ratio_mc: f64::NAN,
            ratio_asy: consts[col] / consts[0],
            completed: v.len(),
        });
    }
    let base = rows[0].scaled_var;
    for r in rows.iter_mut() {
        r.ratio_mc = r.scaled_var / base;
    }
    Ok(EfficiencyTable { rows, p, deriv, x, n, reps, seed })
}

/// The influence kernel 𝒦_{h,x} of the Studentized estimator, built from the true F and f.
#[derive(Debug, Clone)]
pub struct LinearizedKernel {
    dgp: Dgp,
    cfg: FitConfig,
    x: f64,
    lo: f64,
    hi: f64,
    breaks: Vec<f64>,
    /// Γ^{-1} c / sqrt(c'Ω c) in normalized coordinates.
    a: DVector<f64>,
    ab: f64,
    /// t_k and α(t_k) = a'∫_{t_k}^hi R K f du.
    nodes: Vec<f64>,
    alpha: Vec<f64>,
}

const LIN_PANELS: usize = 512;

fn lin_opts() -> QuadOptions {
    QuadOptions { nodes: 32, rtol: 1e-10, ..QuadOptions::default() }
}

impl LinearizedKernel {
    pub fn new(dgp: &Dgp, cfg: &FitConfig, x: f64) -> Result<Self> {
        cfg.validate()?;
        let basis = cfg.basis.build();
        let d = basis.dim();
        let h = cfg.h;
        let (slo, shi) = dgp.support();
        let lo = ((slo - x) / h).max(-1.0);
        let hi = ((shi - x) / h).min(1.0);
        if !(hi > lo) {
            return Err(Error::InvalidInput(format!("evaluation point {x} is outside the support")));
        }
        let mut breaks = cfg.kernel.breakpoints().to_vec();
        breaks.extend_from_slice(basis.breakpoints());
        let kernel = cfg.kernel;
        let dens = |u: f64| kernel.eval(u) * dgp.pdf(x + h * u);
        let mut r = vec![0.0; d];
        let g = integrate_vec(
            d * d,
            |u, o: &mut [f64]| {
                basis.eval_into(u, &mut r);
                let w = dens(u);
                for i in 0..d {
                    for j in 0..d {
                        o[i * d + j] = r[i] * r[j] * w;
                    }
                }
            },
            lo,
            hi,
            &breaks,
            lin_opts(),
        )?;
        let gamma = DMatrix::from_row_slice(d, d, &g);
        let gi = spd_inverse(&gamma).map_err(|cond| Error::SingularGram { cond })?;
        let b = DVector::from_vec(integrate_vec(
            d,
            |u, o: &mut [f64]| {
                basis.eval_into(u, o);
                let w = dens(u) * dgp.cdf(x + h * u);
                o.iter_mut().for_each(|v| *v *= w);
            },
            lo,
            hi,
            &breaks,
            lin_opts(),
        )?);
        let mut c = DVector::zeros(d);
        c[cfg.basis.coef_index(cfg.deriv)?] = 1.0;
        let a = &gi * &c;
        let ab = a.dot(&b);
        let nodes: Vec<f64> = (0..=LIN_PANELS).map(|k| lo + (hi - lo) * k as f64 / LIN_PANELS as f64).collect();
        let mut k = LinearizedKernel {
            dgp: *dgp,
            cfg: *cfg,
            x,
            lo,
            hi,
            breaks,
            a,
            ab,
            alpha: vec![0.0; nodes.len()],
            nodes,
        };
        for i in (0..LIN_PANELS).rev() {
            k.alpha[i] = k.alpha[i + 1] + k.piece(k.nodes[i], k.nodes[i + 1])?;
        }
        let var = k.variance_raw()?;
        if !(var > 0.0) {
            return Err(Error::DegenerateVariance { var });
        }
        let sd = var.sqrt();
        k.a /= sd;
        k.ab /= sd;
        k.alpha.iter_mut().for_each(|v| *v /= sd);
        Ok(k)
    }

    /// a'∫_s^t R(u) K(u) f(x + hu) du.
    fn piece(&self, s: f64, t: f64) -> Result<f64> {
        let basis = self.cfg.basis.build();
        let (x, h, kernel, dgp) = (self.x, self.cfg.h, self.cfg.kernel, self.dgp);
        let mut r = vec![0.0; basis.dim()];
        let v = integrate_vec(
            1,
            |u, o: &mut [f64]| {
                basis.eval_into(u, &mut r);
                o[0] = self.a.iter().zip(&r).map(|(p, q)| p * q).sum::<f64>() * kernel.eval(u) * dgp.pdf(x + h * u);
            },
            s,
            t,
            &self.breaks,
            QuadOptions { nodes: 16, ..lin_opts() },
        )?;
        Ok(v[0])
    }

    fn raw(&self, y: f64) -> Result<f64> {
        let t = (y - self.x) / self.cfg.h;
        let up = if t <= self.lo {
            self.alpha[0]
        } else if t >= self.hi {
            0.0
        } else {
            let step = (self.hi - self.lo) / LIN_PANELS as f64;
            let k = (((t - self.lo) / step) as usize).min(LIN_PANELS - 1);
            self.alpha[k + 1] + self.piece(t, self.nodes[k + 1])?
        };
        Ok(up - self.ab)
    }

    fn variance_raw(&self) -> Result<f64> {
        let h = self.cfg.h;
        let left = self.raw(self.x + h * self.lo - 1.0)?;
        let right = self.raw(self.x + h * self.hi + 1.0)?;
        let mut err = None;
        let mid = integrate_vec(
            1,
            |t, o: &mut [f64]| match self.raw(self.x + h * t) {
                Ok(v) => o[0] = v * v * self.dgp.pdf(self.x + h * t) * h,
                Err(e) => {
                    err = Some(e);
                    o[0] = 0.0;
                }
            },
            self.lo,
            self.hi,
            &self.breaks,
            QuadOptions { nodes: 32, rtol: 1e-9, ..QuadOptions::default() },
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        let fl = self.dgp.cdf(self.x + h * self.lo);
        let fr = 1.0 - self.dgp.cdf(self.x + h * self.hi);
        Ok(fl * left * left + fr * right * right + mid[0])
    }

    /// 𝒦_{h,x}(y).
    pub fn eval(&self, y: f64) -> Result<f64> {
        self.raw(y)
    }

    /// E[𝒦_{h,x}(x_i)²], equal to one up to quadrature error.
    pub fn second_moment(&self) -> Result<f64> {
        self.variance_raw()
    }
}

/// 𝔗(x) = n^{-1/2} Σ 𝒦_{h,x}(x_i) for a sample drawn from `dgp`.
pub fn linearized_process_eval(dgp: &Dgp, cfg: &FitConfig, x: f64, sample: &[f64]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    let k = LinearizedKernel::new(dgp, cfg, x)?;
    let mut total = 0.0;
    for &y in sample {
        total += k.eval(y)?;
    }
    Ok(total / (sample.len() as f64).sqrt())
}
