//! Local bases R(u): scaled polynomials, an optional redundant regressor Q,
//! and the one-sided split basis.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::str::FromStr;

/// Parity of the redundant monomial: `Odd` is u^(2j+1), `Even` is u^(2j+2).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Odd,
    Even,
}

impl FromStr for Parity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "odd" => Ok(Parity::Odd),
            "even" => Ok(Parity::Even),
            other => Err(Error::InvalidInput(format!("unknown parity '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RedundantSpec {
    pub j: u32,
    pub parity: Parity,
    pub orthogonalized: bool,
}

impl RedundantSpec {
    pub fn new(j: u32, parity: Parity, orthogonalized: bool) -> Result<Self> {
        if j == 0 {
            return Err(Error::InvalidInput("redundant order j must be >= 1".into()));
        }
        Ok(RedundantSpec { j, parity, orthogonalized })
    }

    /// Q matched to derivative order `deriv`: odd monomial for even orders, even monomial for odd orders.
    pub fn for_derivative(j: u32, deriv: usize, orthogonalized: bool) -> Result<Self> {
        let parity = if deriv % 2 == 0 { Parity::Odd } else { Parity::Even };
        RedundantSpec::new(j, parity, orthogonalized)
    }

    pub fn power(&self) -> u32 {
        match self.parity {
            Parity::Odd => 2 * self.j + 1,
            Parity::Even => 2 * self.j + 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisSpec {
    pub p: usize,
    pub redundant: Option<RedundantSpec>,
    /// Lowest polynomial order that is split into left/right pieces at u = 0.
    pub split: Option<usize>,
}

impl BasisSpec {
    pub fn poly(p: usize) -> Self {
        BasisSpec { p, redundant: None, split: None }
    }

    pub fn with_redundant(mut self, q: RedundantSpec) -> Self {
        self.redundant = Some(q);
        self
    }

    pub fn with_split(mut self, lowest: usize) -> Self {
        self.split = Some(lowest);
        self
    }

    pub fn dim(&self) -> usize {
        let poly = match self.split {
            Some(s) if s <= self.p => s + 2 * (self.p + 1 - s),
            _ => self.p + 1,
        };
        poly + usize::from(self.redundant.is_some())
    }

    /// Position of the coefficient estimating F^(deriv+1), i.e. the CDF for -1,
    /// the density for 0 and so on.
    pub fn coef_index(&self, deriv: i32) -> Result<usize> {
        if deriv < -1 || deriv + 1 > self.p as i32 {
            return Err(Error::InvalidInput(format!(
                "derivative order {deriv} not estimable with p = {}",
                self.p
            )));
        }
        let k = (deriv + 1) as usize;
        match self.split {
            Some(s) if k >= s => Err(Error::InvalidInput(format!(
                "order {k} is split; use one_sided_index"
            ))),
            _ => Ok(k),
        }
    }

    /// Position of the one-sided coefficient of order k in a split basis.
    pub fn one_sided_index(&self, deriv: i32, right: bool) -> Result<usize> {
        let s = self
            .split
            .ok_or_else(|| Error::InvalidInput("basis is not split".into()))?;
        let k = (deriv + 1) as usize;
        if deriv < -1 || k > self.p {
            return Err(Error::InvalidInput(format!("derivative order {deriv} out of range")));
        }
        if k < s {
            return Ok(k);
        }
        Ok(s + 2 * (k - s) + usize::from(right))
    }

    pub fn build(&self) -> Basis {
        Basis::new(*self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Both,
    Left,
    Right,
}

impl Side {
    #[inline]
    fn ind(self, u: f64) -> f64 {
        match self {
            Side::Both => 1.0,
            Side::Left => f64::from(u < 0.0),
            Side::Right => f64::from(u >= 0.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Piece {
    pub power: u32,
    pub side: Side,
}

/// A compiled basis. Each element is a linear combination of pieces u^k·1(side),
/// which are individually dilation invariant up to h^k.
#[derive(Debug, Clone)]
pub struct Basis {
    pub spec: BasisSpec,
    pub pieces: Vec<Piece>,
    /// Row e holds the piece coefficients of element e.
    pub coef: DMatrix<f64>,
    max_power: u32,
}

impl Basis {
    pub fn new(spec: BasisSpec) -> Self {
        let p = spec.p;
        let mut pieces = Vec::new();
        let mut diag = Vec::new();
        for k in 0..=p {
            let f = 1.0 / factorial(k);
            match spec.split {
                Some(s) if k >= s => {
                    pieces.push(Piece { power: k as u32, side: Side::Left });
                    diag.push(f);
                    pieces.push(Piece { power: k as u32, side: Side::Right });
                    diag.push(f);
                }
                _ => {
                    pieces.push(Piece { power: k as u32, side: Side::Both });
                    diag.push(f);
                }
            }
        }
        let npoly = pieces.len();
        let mut proj = None;
        if let Some(q) = spec.redundant {
            pieces.push(Piece { power: q.power(), side: Side::Both });
            diag.push(1.0);
            if q.orthogonalized {
                proj = Some(orthogonalize_monomial(q.power(), p));
            }
        }
        let dim = pieces.len();
        let mut coef = DMatrix::from_diagonal(&DVector::from_vec(diag));
        if let Some(a) = proj {
            // Q(u) = u^m - sum_k a_k u^k; piece k of a split order contributes on both sides.
            for (idx, pc) in pieces.iter().enumerate().take(npoly) {
                coef[(dim - 1, idx)] = -a[pc.power as usize];
            }
        }
        let max_power = pieces.iter().map(|p| p.power).max().unwrap_or(0);
        Basis { spec, pieces, coef, max_power }
    }

    pub fn dim(&self) -> usize {
        self.pieces.len()
    }

    pub fn max_power(&self) -> u32 {
        self.max_power
    }

    /// Piece values at u.
    #[inline]
    pub fn eval_pieces(&self, u: f64, out: &mut [f64]) {
        for (o, pc) in out.iter_mut().zip(&self.pieces) {
            *o = pc.side.ind(u) * u.powi(pc.power as i32);
        }
    }

    /// R(u) written into `out` (length dim).
    pub fn eval_into(&self, u: f64, out: &mut [f64]) {
        let d = self.dim();
        if self.is_diagonal() {
            for (i, pc) in self.pieces.iter().enumerate() {
                out[i] = self.coef[(i, i)] * pc.side.ind(u) * u.powi(pc.power as i32);
            }
            return;
        }
        let mut m = vec![0.0; d];
        self.eval_pieces(u, &mut m);
        for e in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                let c = self.coef[(e, k)];
                if c != 0.0 {
                    s += c * m[k];
                }
            }
            out[e] = s;
        }
    }

    pub fn eval(&self, u: f64) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim());
        self.eval_into(u, v.as_mut_slice());
        v
    }

    fn is_diagonal(&self) -> bool {
        !matches!(self.spec.redundant, Some(q) if q.orthogonalized)
    }

    /// Matrix T_h mapping normalized-coordinate coefficients to data-unit coefficients:
    /// if R(u)'θn fits in u = t/h then R(t)'(T_h θn) is the same function of t.
    pub fn coef_transform(&self, h: f64) -> DMatrix<f64> {
        let d = self.dim();
        let inv_scale: Vec<f64> = self.pieces.iter().map(|pc| h.powi(-(pc.power as i32))).collect();
        if self.is_diagonal() {
            return DMatrix::from_diagonal(&DVector::from_vec(inv_scale));
        }
        let ct = self.coef.transpose();
        let cti = ct.clone().try_inverse().expect("basis coefficient matrix is triangular");
        let dinv = DMatrix::from_diagonal(&DVector::from_vec(inv_scale));
        let _ = d;
        cti * dinv * ct
    }

    /// Reporting scaling Υ_h = diag(h^-(leading power of each element)).
    pub fn scaling_matrix(&self, h: f64) -> Result<DMatrix<f64>> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
        }
        let v: Vec<f64> = self.pieces.iter().map(|pc| h.powi(-(pc.power as i32))).collect();
        Ok(DMatrix::from_diagonal(&DVector::from_vec(v)))
    }

    /// Breakpoints in u where some basis element is discontinuous.
    pub fn breakpoints(&self) -> &'static [f64] {
        if self.spec.split.is_some() {
            &[0.0]
        } else {
            &[]
        }
    }
}

/// Coefficients a_0..a_p (indexed by power) of the Lebesgue projection of u^m on
/// span(1, u, ..., u^p) over [-1, 1].
pub fn orthogonalize_monomial(m: u32, p: usize) -> Vec<f64> {
    let mom = |k: usize| -> f64 {
        if k % 2 == 1 {
            0.0
        } else {
            2.0 / (k as f64 + 1.0)
        }
    };
    let mut a = vec![0.0; p + 1];
    // Parity splits the normal equations into even and odd blocks.
    for parity in 0..2usize {
        let idx: Vec<usize> = (0..=p).filter(|k| k % 2 == parity).collect();
        if idx.is_empty() || (m as usize) % 2 != parity {
            continue;
        }
        let n = idx.len();
        let g = DMatrix::from_fn(n, n, |r, c| mom(idx[r] + idx[c]));
        let b = DVector::from_fn(n, |r, _| mom(idx[r] + m as usize));
        let sol = g.lu().solve(&b).expect("monomial Gram matrix is nonsingular");
        for (r, &k) in idx.iter().enumerate() {
            a[k] = sol[r];
        }
    }
    a
}

/// Ṗ(u) = (1, u, ..., u^(p-1)/(p-1)!).
pub fn derivative_basis(p: usize, u: f64) -> Vec<f64> {
    (0..p).map(|k| u.powi(k as i32) / factorial(k)).collect()
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |a, i| a * i as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad;

    #[test]
    fn poly_values() {
        let b = BasisSpec::poly(2).build();
        assert_eq!(b.eval(1.0).as_slice(), &[1.0, 1.0, 0.5]);
        let q = RedundantSpec::new(1, Parity::Odd, false).unwrap();
        let b = BasisSpec::poly(1).with_redundant(q).build();
        assert_eq!(b.eval(2.0).as_slice(), &[1.0, 2.0, 8.0]);
    }

    #[test]
    fn orthogonalized_cubic() {
        let q = RedundantSpec::new(1, Parity::Odd, true).unwrap();
        let b = BasisSpec::poly(1).with_redundant(q).build();
        for &u in &[-0.7, 0.2, 1.3] {
            let v = b.eval(u);
            assert!((v[2] - (u * u * u - 0.6 * u)).abs() < 1e-14);
        }
    }

    #[test]
    fn orthogonality_against_polynomials() {
        for (p, j, par) in [(1, 1, Parity::Odd), (3, 4, Parity::Odd), (2, 3, Parity::Even), (5, 10, Parity::Even)] {
            let q = RedundantSpec::new(j, par, true).unwrap();
            let b = BasisSpec::poly(p).with_redundant(q).build();
            let d = b.dim();
            let v = quad::integrate_vec(
                d - 1,
                |u, o: &mut [f64]| {
                    let r = b.eval(u);
                    for k in 0..d - 1 {
                        o[k] = r[k] * r[d - 1];
                    }
                },
                -1.0,
                1.0,
                &[],
                quad::QuadOptions::default(),
            )
            .unwrap();
            for x in v {
                assert!(x.abs() < 1e-10, "p={p} j={j}: {x}");
            }
        }
    }

    #[test]
    fn scaling_matrix_examples() {
        let b = BasisSpec::poly(1).build();
        assert_eq!(b.scaling_matrix(0.5).unwrap(), DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])));
        let b = BasisSpec::poly(2).build();
        assert_eq!(b.scaling_matrix(1.0).unwrap(), DMatrix::identity(3, 3));
        let q = RedundantSpec::new(1, Parity::Odd, false).unwrap();
        let b = BasisSpec::poly(1).with_redundant(q).build();
        let s = b.scaling_matrix(0.1).unwrap();
        assert!((s[(1, 1)] - 10.0).abs() < 1e-12 && (s[(2, 2)] - 1000.0).abs() < 1e-9);
        assert!(b.scaling_matrix(0.0).is_err());
        assert!(b.scaling_matrix(-1.0).is_err());
    }

    #[test]
    fn dilation_identity() {
        let specs = [
            BasisSpec::poly(0),
            BasisSpec::poly(3),
            BasisSpec::poly(2).with_redundant(RedundantSpec::new(2, Parity::Odd, false).unwrap()),
            BasisSpec::poly(3).with_split(2),
        ];
        for spec in specs {
            let b = spec.build();
            for h in [0.01, 0.5, 2.0] {
                let ups = b.scaling_matrix(h).unwrap();
                for i in 0..=40 {
                    let u = -1.0 + i as f64 / 20.0;
                    let lhs = &ups * b.eval(u);
                    let rhs = b.eval(u / h);
                    for k in 0..b.dim() {
                        let tol = 1e-14 * rhs[k].abs().max(1.0);
                        assert!((lhs[k] - rhs[k]).abs() <= tol, "{spec:?} h={h} u={u}");
                    }
                }
            }
        }
    }

    #[test]
    fn coordinate_change_identity() {
        let q = RedundantSpec::new(2, Parity::Odd, true).unwrap();
        for spec in [BasisSpec::poly(2).with_redundant(q), BasisSpec::poly(2).with_split(1)] {
            let b = spec.build();
            let th_n = DVector::from_fn(b.dim(), |i, _| 0.3 * i as f64 - 0.5);
            for h in [0.01, 0.5, 2.0] {
                let th = b.coef_transform(h) * &th_n;
                for i in 0..=20 {
                    let u = -1.0 + i as f64 / 10.0;
                    let a = b.eval(u).dot(&th_n);
                    let c = b.eval(h * u).dot(&th);
                    let tol = if h < 0.1 { 1e-6 } else { 1e-10 };
                    assert!((a - c).abs() < tol * a.abs().max(1.0), "h={h} u={u}: {a} {c}");
                }
            }
        }
    }

    #[test]
    fn split_layout() {
        let s = BasisSpec::poly(2).with_split(2);
        assert_eq!(s.dim(), 4);
        let b = s.build();
        assert_eq!(b.eval(-2.0).as_slice(), &[1.0, -2.0, 2.0, 0.0]);
        assert_eq!(b.eval(2.0).as_slice(), &[1.0, 2.0, 0.0, 2.0]);
        assert_eq!(s.one_sided_index(1, true).unwrap(), 3);
        assert_eq!(s.one_sided_index(0, false).unwrap(), 1);
    }

    #[test]
    fn derivative_basis_examples() {
        assert_eq!(derivative_basis(2, 1.0), vec![1.0, 1.0]);
        assert_eq!(derivative_basis(3, 2.0), vec![1.0, 2.0, 2.0]);
        assert_eq!(derivative_basis(1, 7.0), vec![1.0]);
    }

    #[test]
    fn dims_and_indices() {
        assert_eq!(BasisSpec::poly(2).dim(), 3);
        let q = RedundantSpec::for_derivative(1, 1, false).unwrap();
        assert_eq!(q.power(), 4);
        assert_eq!(BasisSpec::poly(2).with_redundant(q).dim(), 4);
        assert_eq!(BasisSpec::poly(2).coef_index(0).unwrap(), 1);
        assert!(BasisSpec::poly(2).coef_index(2).is_err());
    }
}
