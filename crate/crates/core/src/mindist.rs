//! Minimum-distance and short-regression estimators, interior asymptotic variance
//! constants, the efficiency bound and equivalent kernels.

use crate::basis::{derivative_basis, factorial, Basis, BasisSpec, RedundantSpec};
use crate::error::{Error, Result};
use crate::fit::PointFit;
use crate::kernel::Kernel;
use crate::linalg::{spd_inverse, spd_inverse_limit, submatrix, subvector, symmetrize, COND_LIMIT};
use crate::quad::{integrate_vec, panel_edges, QuadOptions};
use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub idx1: Vec<usize>,
    pub idx2: Vec<usize>,
}

impl Partition {
    pub fn new(idx1: Vec<usize>, idx2: Vec<usize>) -> Result<Self> {
        let dim = idx1.len() + idx2.len();
        let mut seen = vec![false; dim];
        for &i in idx1.iter().chain(&idx2) {
            if i >= dim || seen[i] {
                return Err(Error::InvalidInput("partition indices must be disjoint and exhaustive".into()));
            }
            seen[i] = true;
        }
        if idx2.is_empty() {
            return Err(Error::InvalidInput("second block of the partition is empty".into()));
        }
        Ok(Partition { idx1, idx2 })
    }

    /// Last `q` coordinates form the redundant block.
    pub fn redundant_last(dim: usize, q: usize) -> Result<Self> {
        if q == 0 || q >= dim {
            return Err(Error::InvalidInput(format!("cannot split dimension {dim} with {q} redundant coordinates")));
        }
        Partition::new((0..dim - q).collect(), (dim - q..dim).collect())
    }

    pub fn for_basis(spec: &BasisSpec) -> Result<Self> {
        if spec.redundant.is_none() {
            return Err(Error::InvalidInput("basis has no redundant regressor".into()));
        }
        Partition::redundant_last(spec.dim(), 1)
    }

    fn dim(&self) -> usize {
        self.idx1.len() + self.idx2.len()
    }
}

/// θ̂_1 - Ω̂_12 Ω̂_22^{-1} θ̂_2 and Ω̂_11 - Ω̂_12 Ω̂_22^{-1} Ω̂_21.
pub fn md_combine(
    theta: &DVector<f64>,
    omega: &DMatrix<f64>,
    part: &Partition,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if part.dim() != theta.len() || omega.nrows() != theta.len() {
        return Err(Error::InvalidInput("partition does not match dimension".into()));
    }
    let o11 = submatrix(omega, &part.idx1, &part.idx1);
    let o12 = submatrix(omega, &part.idx1, &part.idx2);
    let o22 = submatrix(omega, &part.idx2, &part.idx2);
    let o22i = spd_inverse(&o22).map_err(|cond| Error::SingularBlock { cond })?;
    let a = &o12 * &o22i;
    let t1 = subvector(theta, &part.idx1);
    let t2 = subvector(theta, &part.idx2);
    let th = t1 - &a * t2;
    let om = symmetrize(&(o11 - &a * o12.transpose()));
    Ok((th, om))
}

#[derive(Debug, Clone)]
pub struct BlockFit {
    /// Data-unit coefficients of the first block.
    pub theta1: DVector<f64>,
    /// Variance of `theta1`.
    pub omega1: DMatrix<f64>,
    pub theta1_norm: DVector<f64>,
    pub omega1_norm: DMatrix<f64>,
    transform11: DMatrix<f64>,
}

impl BlockFit {
    /// Normalized contrast for the data-unit coefficient at position `k` of the first block.
    pub fn unit_contrast(&self, k: usize) -> DVector<f64> {
        self.transform11.row(k).transpose()
    }
}

fn block_transform(fit: &PointFit, part: &Partition) -> Result<DMatrix<f64>> {
    let t21 = submatrix(&fit.transform, &part.idx2, &part.idx1);
    if t21.iter().any(|v| *v != 0.0) {
        return Err(Error::Unsupported("coordinate change mixes the blocks".into()));
    }
    Ok(submatrix(&fit.transform, &part.idx1, &part.idx1))
}

pub fn md_estimate(fit: &PointFit, part: &Partition) -> Result<BlockFit> {
    let t11 = block_transform(fit, part)?;
    let (th, om) = md_combine(&fit.theta_norm, &fit.omega_norm, part)?;
    Ok(BlockFit {
        theta1: &t11 * &th,
        omega1: symmetrize(&(&t11 * &om * t11.transpose())),
        theta1_norm: th,
        omega1_norm: om,
        transform11: t11,
    })
}

/// Full-dimension normalized contrast giving the MD estimate of data coefficient `k` in block one.
pub fn md_contrast(fit: &PointFit, part: &Partition, k: usize) -> Result<DVector<f64>> {
    let t11 = block_transform(fit, part)?;
    let o12 = submatrix(&fit.omega_norm, &part.idx1, &part.idx2);
    let o22 = submatrix(&fit.omega_norm, &part.idx2, &part.idx2);
    let o22i = spd_inverse(&o22).map_err(|cond| Error::SingularBlock { cond })?;
    let c1: DVector<f64> = t11.row(k).transpose();
    let c2 = -(o22i * o12.transpose() * &c1);
    let mut c = DVector::zeros(part.dim());
    for (r, &i) in part.idx1.iter().enumerate() {
        c[i] = c1[r];
    }
    for (r, &i) in part.idx2.iter().enumerate() {
        c[i] = c2[r];
    }
    Ok(c)
}

/// Coefficients of the regression without the second block, recovered from the long fit.
pub fn short_estimate(fit: &PointFit, part: &Partition) -> Result<BlockFit> {
    let t11 = block_transform(fit, part)?;
    let g11 = submatrix(&fit.gamma, &part.idx1, &part.idx1);
    let g12 = submatrix(&fit.gamma, &part.idx1, &part.idx2);
    let s11 = submatrix(&fit.sigma, &part.idx1, &part.idx1);
    let g11i = spd_inverse(&g11).map_err(|cond| Error::SingularBlock { cond })?;
    let t1 = subvector(&fit.theta_norm, &part.idx1);
    let t2 = subvector(&fit.theta_norm, &part.idx2);
    let th = t1 + &g11i * g12 * t2;
    let om = symmetrize(&(&g11i * s11 * &g11i));
    Ok(BlockFit {
        theta1: &t11 * &th,
        omega1: symmetrize(&(&t11 * &om * t11.transpose())),
        theta1_norm: th,
        omega1_norm: om,
        transform11: t11,
    })
}

fn quad_opts() -> QuadOptions {
    QuadOptions::default()
}

/// ∫ f(u) f(u)' K(u) du over [lo, hi].
pub fn kernel_gram<F: Fn(f64, &mut [f64])>(dim: usize, f: F, kernel: Kernel, lo: f64, hi: f64) -> Result<DMatrix<f64>> {
    let mut buf = vec![0.0; dim];
    let v = integrate_vec(
        dim * dim,
        |u, out: &mut [f64]| {
            f(u, &mut buf);
            let k = kernel.eval(u);
            for a in 0..dim {
                for b in 0..dim {
                    out[a * dim + b] = buf[a] * buf[b] * k;
                }
            }
        },
        lo,
        hi,
        kernel.breakpoints(),
        quad_opts(),
    )?;
    Ok(symmetrize(&DMatrix::from_row_slice(dim, dim, &v)))
}

/// ∬ min(u, v) f(u) f(v)' K(u) K(v) du dv over [lo, hi]^2, evaluated as
/// ∫ f(v) K(v) [∫_lo^v u f K du + v ∫_v^hi f K du] dv.
pub fn min_kernel_gram<F: Fn(f64, &mut [f64]) + Sync>(
    dim: usize,
    f: F,
    kernel: Kernel,
    lo: f64,
    hi: f64,
) -> Result<DMatrix<f64>> {
    let brk = kernel.breakpoints();
    let mut inner_err: Option<Error> = None;
    let mut fv = vec![0.0; dim];
    let v = integrate_vec(
        dim * dim,
        |v, out: &mut [f64]| {
            let mut buf = vec![0.0; dim];
            let a = integrate_vec(
                dim,
                |u, o: &mut [f64]| {
                    f(u, &mut buf);
                    let w = u * kernel.eval(u);
                    for k in 0..dim {
                        o[k] = buf[k] * w;
                    }
                },
                lo,
                v,
                brk,
                quad_opts(),
            );
            let b = integrate_vec(
                dim,
                |u, o: &mut [f64]| {
                    f(u, &mut buf);
                    let w = kernel.eval(u);
                    for k in 0..dim {
                        o[k] = buf[k] * w;
                    }
                },
                v,
                hi,
                brk,
                quad_opts(),
            );
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    f(v, &mut fv);
                    let kv = kernel.eval(v);
                    for r in 0..dim {
                        for c in 0..dim {
                            out[r * dim + c] = fv[r] * kv * (a[c] + v * b[c]);
                        }
                    }
                }
                (Err(e), _) | (_, Err(e)) => {
                    inner_err.get_or_insert(e);
                }
            }
        },
        lo,
        hi,
        brk,
        quad_opts(),
    )?;
    if let Some(e) = inner_err {
        return Err(e);
    }
    Ok(symmetrize(&DMatrix::from_row_slice(dim, dim, &v)))
}

/// Asymptotic matrices with f = 1 over the region [lo, hi] ⊂ [-1, 1].
#[derive(Debug, Clone)]
pub struct AsyMatrices {
    pub gamma: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub omega: DMatrix<f64>,
}

pub fn asy_matrices(spec: &BasisSpec, kernel: Kernel, lo: f64, hi: f64) -> Result<AsyMatrices> {
    let lo = lo.max(-1.0);
    let hi = hi.min(1.0);
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty integration region [{lo}, {hi}]")));
    }
    let basis = spec.build();
    let d = basis.dim();
    let gamma = kernel_gram(d, |u, o| basis.eval_into(u, o), kernel, lo, hi)?;
    let sigma = min_kernel_gram(d, |u, o| basis.eval_into(u, o), kernel, lo, hi)?;
    let gi = spd_inverse_limit(&gamma, 1e15).map_err(|cond| Error::SingularGram { cond })?;
    let omega = symmetrize(&(&gi * &sigma * &gi));
    Ok(AsyMatrices { gamma, sigma, omega })
}

fn check_deriv(p: usize, deriv: usize) -> Result<()> {
    if p == 0 || deriv + 1 > p {
        return Err(Error::InvalidInput(format!("derivative order {deriv} requires p > {deriv}, got p = {p}")));
    }
    Ok(())
}

/// Base (no Q) or minimum-distance (with Q) interior variance constant of f̂^(ℓ), with f(x) = 1.
pub fn asy_variance_interior(p: usize, deriv: usize, kernel: Kernel, q: Option<RedundantSpec>) -> Result<f64> {
    asy_variance_region(p, deriv, kernel, q, -1.0, 1.0)
}

/// As `asy_variance_interior` on a truncated region, for boundary points.
pub fn asy_variance_region(
    p: usize,
    deriv: usize,
    kernel: Kernel,
    q: Option<RedundantSpec>,
    lo: f64,
    hi: f64,
) -> Result<f64> {
    check_deriv(p, deriv)?;
    let k = deriv + 1;
    match q {
        None => {
            let m = asy_matrices(&BasisSpec::poly(p), kernel, lo, hi)?;
            Ok(m.omega[(k, k)])
        }
        Some(q) => {
            let spec = BasisSpec::poly(p).with_redundant(q);
            let m = asy_matrices(&spec, kernel, lo, hi)?;
            let part = Partition::for_basis(&spec)?;
            let (_, om) = md_schur(&m.omega, &part)?;
            Ok(om[(k, k)])
        }
    }
}

fn md_schur(omega: &DMatrix<f64>, part: &Partition) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let o11 = submatrix(omega, &part.idx1, &part.idx1);
    let o12 = submatrix(omega, &part.idx1, &part.idx2);
    let o22 = submatrix(omega, &part.idx2, &part.idx2);
    let o22i = spd_inverse_limit(&o22, COND_LIMIT).map_err(|cond| Error::SingularBlock { cond })?;
    let a = &o12 * o22i;
    let om = symmetrize(&(o11 - &a * o12.transpose()));
    Ok((a, om))
}

/// ν_ℓ = e_ℓ' (∫ Ṗ Ṗ' du)^{-1} e_ℓ with f(x) = 1, from the exact moment matrix.
pub fn variance_bound(p: usize, deriv: usize) -> Result<f64> {
    check_deriv(p, deriv)?;
    let g = DMatrix::from_fn(p, p, |a, b| {
        if (a + b) % 2 == 1 {
            0.0
        } else {
            2.0 / ((a + b + 1) as f64 * factorial(a) * factorial(b))
        }
    });
    // Parity decouples the moment matrix; invert the block containing ℓ.
    let idx: Vec<usize> = (0..p).filter(|k| k % 2 == deriv % 2).collect();
    let blk = submatrix(&g, &idx, &idx);
    let inv = blk
        .try_inverse()
        .ok_or_else(|| Error::SingularGram { cond: f64::INFINITY })?;
    let r = idx.iter().position(|&k| k == deriv).unwrap();
    Ok(inv[(r, r)])
}

/// Closed forms a(4J + b) / (c(2J + d)) of the uniform-kernel MD constants, where the
/// redundant regressor is u^(2J+1) for even ℓ and u^(2J) for odd ℓ.
fn closed_form_coefs(p: usize, deriv: usize) -> Option<(f64, f64, f64, f64)> {
    let c = match (p, deriv) {
        (1, 0) | (2, 0) => (1.0, 11.0, 4.0, 5.0),
        (2, 1) | (3, 1) => (3.0, 13.0, 4.0, 5.0),
        (3, 0) | (4, 0) => (9.0, 15.0, 16.0, 7.0),
        (3, 2) | (4, 2) => (45.0, 19.0, 4.0, 7.0),
        (4, 1) | (5, 1) => (75.0, 17.0, 16.0, 7.0),
        (4, 3) | (5, 3) => (1575.0, 21.0, 4.0, 7.0),
        (5, 0) => (225.0, 19.0, 256.0, 9.0),
        (5, 2) => (2205.0, 23.0, 16.0, 9.0),
        (5, 4) => (99225.0, 27.0, 4.0, 9.0),
        _ => return None,
    };
    Some(c)
}

/// Closed-form MD variance constant (uniform kernel) with Q chosen by the parity rule:
/// u^(2j+1) for even ℓ, u^(2j+2) for odd ℓ.
pub fn md_asy_variance_closed(p: usize, deriv: usize, j: u32) -> Result<f64> {
    let (a, b, c, d) = closed_form_coefs(p, deriv)
        .ok_or_else(|| Error::Unsupported(format!("no closed form for p = {p}, derivative {deriv}")))?;
    if j == 0 {
        return Err(Error::InvalidInput("j must be >= 1".into()));
    }
    let big_j = if deriv % 2 == 0 { j as f64 } else { j as f64 + 1.0 };
    Ok(a * (4.0 * big_j + b) / (c * (2.0 * big_j + d)))
}

/// Limit of `md_asy_variance_closed` as j → ∞.
pub fn md_asy_variance_limit(p: usize, deriv: usize) -> Result<f64> {
    let (a, _, c, _) = closed_form_coefs(p, deriv)
        .ok_or_else(|| Error::Unsupported(format!("no closed form for p = {p}, derivative {deriv}")))?;
    Ok(2.0 * a / c)
}

/// Whether the parity-rule Q for (p, ℓ, j) lies in the span of the polynomial basis.
pub fn redundant_is_collinear(p: usize, q: &RedundantSpec) -> bool {
    (q.power() as usize) <= p
}

/// Variance gain of adding Q to the order-p fit, as the ratio
/// [∬ p_ℓ(u) Q(v) min(u,v) K K]^2 / ∬ Q(u) Q(v) min(u,v) K K,
/// with P centered and Q projected K-orthogonally off span(1, P).
pub fn optq_objective<Q: Fn(f64) -> f64 + Sync>(p: usize, deriv: usize, kernel: Kernel, q: Q) -> Result<f64> {
    check_deriv(p, deriv)?;
    let poly = BasisSpec::poly(p).build();
    let d = p + 1;
    let eval_poly = |u: f64, o: &mut [f64]| poly.eval_into(u, o);
    let g = kernel_gram(d, eval_poly, kernel, -1.0, 1.0)?;
    let mean = integrate_vec(
        d,
        |u, o: &mut [f64]| {
            poly.eval_into(u, o);
            let k = kernel.eval(u);
            o.iter_mut().for_each(|v| *v *= k);
        },
        -1.0,
        1.0,
        kernel.breakpoints(),
        quad_opts(),
    )?;
    let qm = integrate_vec(
        d + 1,
        |u, o: &mut [f64]| {
            poly.eval_into(u, &mut o[..d]);
            let qv = q(u);
            let k = kernel.eval(u);
            for v in o[..d].iter_mut() {
                *v *= qv * k;
            }
            o[d] = qv * qv * k;
        },
        -1.0,
        1.0,
        kernel.breakpoints(),
        quad_opts(),
    )?;
    let gi = spd_inverse(&g).map_err(|cond| Error::SingularGram { cond })?;
    let beta = &gi * DVector::from_row_slice(&qm[..d]);
    let q_norm2 = qm[d];
    let resid2 = q_norm2 - DVector::from_row_slice(&qm[..d]).dot(&beta);
    if resid2 <= 1e-12 * q_norm2.max(f64::MIN_POSITIVE) {
        return Ok(0.0);
    }
    // Centered P block and the row of its inverse Gram selecting ℓ.
    let pc: Vec<f64> = (1..d).map(|k| mean[k]).collect();
    let gp = DMatrix::from_fn(p, p, |a, b| g[(a + 1, b + 1)] - pc[a] * pc[b]);
    let gpi = spd_inverse(&gp).map_err(|cond| Error::SingularGram { cond })?;
    let sel: DVector<f64> = gpi.row(deriv).transpose();
    let pair = |u: f64, o: &mut [f64]| {
        let mut r = vec![0.0; d];
        poly.eval_into(u, &mut r);
        let mut pl = 0.0;
        for k in 0..p {
            pl += sel[k] * (r[k + 1] - pc[k]);
        }
        let mut qp = q(u);
        for k in 0..d {
            qp -= beta[k] * r[k];
        }
        o[0] = pl;
        o[1] = qp;
    };
    let m = min_kernel_gram(2, pair, kernel, -1.0, 1.0)?;
    if !(m[(1, 1)] > 0.0) {
        return Err(Error::DegenerateVariance { var: m[(1, 1)] });
    }
    Ok(m[(0, 1)] * m[(0, 1)] / m[(1, 1)])
}

/// First-order kernel of the (MD) estimator: f̂^(ℓ)(x) ≈ (1/(n h^(ℓ+1))) Σ φ((x_i - x)/h).
#[derive(Debug, Clone)]
pub struct EquivalentKernel {
    pub p: usize,
    pub deriv: usize,
    pub kernel: Kernel,
    pub redundant: Option<RedundantSpec>,
    basis: Basis,
    weights: DVector<f64>,
}

impl EquivalentKernel {
    pub fn new(p: usize, deriv: usize, kernel: Kernel, q: Option<RedundantSpec>) -> Result<Self> {
        check_deriv(p, deriv)?;
        let spec = match q {
            Some(q) => BasisSpec::poly(p).with_redundant(q),
            None => BasisSpec::poly(p),
        };
        let m = asy_matrices(&spec, kernel, -1.0, 1.0)?;
        let d = spec.dim();
        let mut c = DVector::zeros(d);
        c[deriv + 1] = 1.0;
        if q.is_some() {
            let part = Partition::for_basis(&spec)?;
            let (a, _) = md_schur(&m.omega, &part)?;
            for (r, &i) in part.idx2.iter().enumerate() {
                c[i] = -a[(deriv + 1, r)];
            }
        }
        let gi = spd_inverse_limit(&m.gamma, 1e15).map_err(|cond| Error::SingularGram { cond })?;
        Ok(EquivalentKernel { p, deriv, kernel, redundant: q, basis: spec.build(), weights: gi * c })
    }

    /// φ(u) = c'Γ^{-1} ∫_u^1 R(v) K(v) dv.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if u >= 1.0 {
            return Ok(0.0);
        }
        let lo = u.max(-1.0);
        let d = self.basis.dim();
        let w = &self.weights;
        let v = integrate_vec(
            1,
            |t, o: &mut [f64]| {
                let mut r = vec![0.0; d];
                self.basis.eval_into(t, &mut r);
                let s: f64 = r.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
                o[0] = s * self.kernel.eval(t);
            },
            lo,
            1.0,
            self.kernel.breakpoints(),
            quad_opts(),
        )?;
        Ok(v[0])
    }

    pub fn tabulate(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.len() < 64 {
            return Err(Error::InvalidInput(format!("equivalent-kernel grid has {} points, need at least 64", grid.len())));
        }
        grid.iter().map(|&u| self.eval(u)).collect()
    }

    /// ∫ u^k φ(u) du over [-1, 1].
    pub fn moment(&self, k: i32) -> Result<f64> {
        let mut err = None;
        let edges = panel_edges(-1.0, 1.0, self.kernel.breakpoints());
        let v = integrate_vec(
            1,
            |u, o: &mut [f64]| match self.eval(u) {
                Ok(f) => o[0] = u.powi(k) * f,
                Err(e) => {
                    err.get_or_insert(e);
                }
            },
            -1.0,
            1.0,
            &edges,
            QuadOptions { nodes: 32, ..quad_opts() },
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(v[0]),
        }
    }

    /// ∫ φ(u)^2 du, the variance constant of the linearization.
    pub fn l2_norm2(&self) -> Result<f64> {
        let mut err = None;
        let edges = panel_edges(-1.0, 1.0, self.kernel.breakpoints());
        let v = integrate_vec(
            1,
            |u, o: &mut [f64]| match self.eval(u) {
                Ok(f) => o[0] = f * f,
                Err(e) => {
                    err.get_or_insert(e);
                }
            },
            -1.0,
            1.0,
            &edges,
            QuadOptions { nodes: 32, ..quad_opts() },
        )?;
        match err {
            Some(e) => Err(e),
            None => Ok(v[0]),
        }
    }
}

pub fn equivalent_kernel(
    p: usize,
    deriv: usize,
    kernel: Kernel,
    q: Option<RedundantSpec>,
    grid: &[f64],
) -> Result<Vec<f64>> {
    EquivalentKernel::new(p, deriv, kernel, q)?.tabulate(grid)
}

#[derive(Debug, Clone)]
pub struct AsyVarReport {
    pub p: usize,
    pub deriv: usize,
    pub kernel: Kernel,
    pub j: Option<u32>,
    pub var_base: f64,
    pub var_md: Option<f64>,
    pub bound: f64,
    pub equivalent_kernel: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn asy_report(
    p: usize,
    deriv: usize,
    kernel: Kernel,
    j: Option<u32>,
    kernel_grid: Option<&[f64]>,
) -> Result<AsyVarReport> {
    let var_base = asy_variance_interior(p, deriv, kernel, None)?;
    let q = match j {
        Some(j) => Some(RedundantSpec::for_derivative(j, deriv, true)?),
        None => None,
    };
    let var_md = match q {
        Some(q) => Some(asy_variance_interior(p, deriv, kernel, Some(q))?),
        None => None,
    };
    let table = match kernel_grid {
        Some(g) => Some((g.to_vec(), equivalent_kernel(p, deriv, kernel, q, g)?)),
        None => None,
    };
    Ok(AsyVarReport {
        p,
        deriv,
        kernel,
        j,
        var_base,
        var_md,
        bound: variance_bound(p.max(deriv + 1), deriv)?,
        equivalent_kernel: table,
    })
}

/// One cell of the interior variance comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceCell {
    pub deriv: usize,
    /// Polynomial order of the column.
    pub p: usize,
    /// Pair of orders sharing a column group, e.g. (1, 2).
    pub orders: (usize, usize),
    /// `None` for the efficiency-bound row.
    pub kernel: Option<Kernel>,
    pub value: f64,
}

/// The density (ℓ = 0, p = 1..4) and derivative (ℓ = 1, p = 2..5) variance constants for
/// the three kernels, each order computed separately, followed by the bound rows.
pub fn variance_table() -> Result<Vec<VarianceCell>> {
    let mut cells = Vec::new();
    for (deriv, pairs) in [(0usize, [(1usize, 2usize), (3, 4)]), (1, [(2, 3), (4, 5)])] {
        for kernel in Kernel::ALL {
            for &(lo, hi) in &pairs {
                for p in [lo, hi] {
                    let value = asy_variance_interior(p, deriv, kernel, None)?;
                    cells.push(VarianceCell { deriv, p, orders: (lo, hi), kernel: Some(kernel), value });
                }
            }
        }
        for &(lo, hi) in &pairs {
            cells.push(VarianceCell { deriv, p: hi, orders: (lo, hi), kernel: None, value: variance_bound(hi, deriv)? });
        }
    }
    Ok(cells)
}

/// Γ^{-1} (∫ Ṗ Ṗ' K²) Γ^{-1} with Γ = ∫ Ṗ Ṗ' K over [lo, hi]: the asymptotic variance of
/// the derivative-basis estimator with f = 1.
pub fn nd_asy_variance(p: usize, kernel: Kernel, lo: f64, hi: f64) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::InvalidInput("p must be >= 1".into()));
    }
    let f = |u: f64, o: &mut [f64]| o.copy_from_slice(&derivative_basis(p, u));
    let g = kernel_gram(p, f, kernel, lo, hi)?;
    let mut buf = vec![0.0; p];
    let b = integrate_vec(
        p * p,
        |u, out: &mut [f64]| {
            f(u, &mut buf);
            let k = kernel.eval(u);
            for a in 0..p {
                for c in 0..p {
                    out[a * p + c] = buf[a] * buf[c] * k * k;
                }
            }
        },
        lo,
        hi,
        kernel.breakpoints(),
        quad_opts(),
    )?;
    let b = DMatrix::from_row_slice(p, p, &b);
    let gi = spd_inverse(&g).map_err(|cond| Error::SingularGram { cond })?;
    Ok(symmetrize(&(&gi * b * &gi)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_constants() {
        let v = asy_variance_interior(1, 0, Kernel::Uniform, None).unwrap();
        assert!((v - 0.6).abs() < 1e-9, "{v}");
        let v = asy_variance_interior(2, 1, Kernel::Epanechnikov, None).unwrap();
        assert!((v - 35.0 / 11.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn md_p1() {
        let q = RedundantSpec::for_derivative(1, 0, true).unwrap();
        let v = asy_variance_interior(1, 0, Kernel::Uniform, Some(q)).unwrap();
        assert!((v - 15.0 / 28.0).abs() < 1e-9, "{v}");
        assert!((md_asy_variance_closed(1, 0, 1).unwrap() - 15.0 / 28.0).abs() < 1e-15);
        assert!((md_asy_variance_closed(3, 2, 1).unwrap() - 28.75).abs() < 1e-12);
        assert!((md_asy_variance_limit(3, 0).unwrap() - 1.125).abs() < 1e-15);
        assert!(md_asy_variance_closed(6, 0, 1).is_err());
    }

    #[test]
    fn bounds() {
        assert!((variance_bound(2, 0).unwrap() - 0.5).abs() < 1e-12);
        assert!((variance_bound(3, 1).unwrap() - 1.5).abs() < 1e-12);
        assert!((variance_bound(5, 1).unwrap() - 9.375).abs() < 1e-9);
        assert!((variance_bound(4, 0).unwrap() - 1.125).abs() < 1e-12);
        assert!(variance_bound(2, 2).is_err());
    }

    #[test]
    fn md_combine_cases() {
        let theta = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let omega = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 4.0]);
        let part = Partition::redundant_last(3, 1).unwrap();
        let (t, o) = md_combine(&theta, &omega, &part).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 2.0]);
        assert_eq!(o, submatrix(&omega, &[0, 1], &[0, 1]));
        let omega = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.5, 0.3, 1.0, 0.2, 0.5, 0.2, 4.0]);
        let theta0 = DVector::from_vec(vec![1.0, 2.0, 0.0]);
        let (t, o) = md_combine(&theta0, &omega, &part).unwrap();
        assert_eq!(t.as_slice(), &[1.0, 2.0]);
        assert!(o[(0, 0)] < omega[(0, 0)]);
        let (t1, _) = md_combine(&theta, &omega, &part).unwrap();
        let (t4, _) = md_combine(&theta, &(omega.clone() * 4.0), &part).unwrap();
        assert_eq!(t1, t4);
    }

    #[test]
    fn epanechnikov_equivalent_kernel() {
        let ek = EquivalentKernel::new(1, 0, Kernel::Uniform, None).unwrap();
        for i in 0..=20 {
            let u = -1.0 + i as f64 / 10.0;
            assert!((ek.eval(u).unwrap() - 0.75 * (1.0 - u * u)).abs() < 1e-12);
        }
        assert!(ek.tabulate(&[0.0; 10]).is_err());
    }

    #[test]
    fn optq_identity() {
        let base = asy_variance_interior(1, 0, Kernel::Uniform, None).unwrap();
        let gain = optq_objective(1, 0, Kernel::Uniform, |u| u * u * u).unwrap();
        assert!((base - gain - 15.0 / 28.0).abs() < 1e-9, "{gain}");
        let none = optq_objective(1, 0, Kernel::Uniform, |u| 2.0 - u).unwrap();
        assert_eq!(none, 0.0);
    }
}
