//! Gaussian-reference rule-of-thumb bandwidth.

use crate::basis::{factorial, BasisSpec};
use crate::edf::SortedSample;
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::linalg::spd_inverse;
use crate::mindist::{asy_matrices, kernel_gram};
use crate::quad::{integrate_vec, QuadOptions};
use nalgebra::DVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotBandwidth {
    pub h: f64,
    pub p: usize,
    pub deriv: usize,
    pub n: usize,
    pub constant: f64,
    pub scale: f64,
}

/// ∫ (φ^(r))² for the standard normal density.
pub fn normal_roughness(r: usize) -> f64 {
    factorial(2 * r) / (2f64.powi(2 * r as i32 + 1) * factorial(r) * std::f64::consts::PI.sqrt())
}

/// Leading interior bias coefficient of f̂^(ℓ) and the order of the density
/// derivative it multiplies.
pub fn bias_constant(p: usize, deriv: usize, kernel: Kernel) -> Result<(f64, usize)> {
    let spec = BasisSpec::poly(p);
    let basis = spec.build();
    let d = basis.dim();
    let gamma = kernel_gram(d, |u, o| basis.eval_into(u, o), kernel, -1.0, 1.0)?;
    let gi = spd_inverse(&gamma).map_err(|cond| Error::SingularGram { cond })?;
    let moment = |k: usize| -> Result<f64> {
        let v = integrate_vec(
            d,
            |u, o: &mut [f64]| {
                basis.eval_into(u, o);
                let w = u.powi(k as i32) / factorial(k) * kernel.eval(u);
                o.iter_mut().for_each(|x| *x *= w);
            },
            -1.0,
            1.0,
            kernel.breakpoints(),
            QuadOptions::default(),
        )?;
        Ok((&gi * DVector::from_vec(v))[deriv + 1])
    };
    // The u^(p+1) term vanishes by symmetry when p - ℓ is odd.
    if (p - deriv) % 2 == 1 {
        Ok((moment(p + 2)?, p + 1))
    } else {
        Ok((moment(p + 1)?, p))
    }
}

/// C(p, ℓ, K) such that h = C σ n^{-1/(2p+3)}.
pub fn rot_constant(p: usize, deriv: usize, kernel: Kernel) -> Result<f64> {
    if p == 0 || deriv + 1 > p {
        return Err(Error::InvalidInput(format!("derivative order {deriv} requires p > {deriv}")));
    }
    let v = asy_matrices(&BasisSpec::poly(p), kernel, -1.0, 1.0)?.omega[(deriv + 1, deriv + 1)];
    let (b, r) = bias_constant(p, deriv, kernel)?;
    let num = (2 * deriv + 1) as f64 * v;
    let den = 2.0 * (p + 1 - deriv) as f64 * b * b * normal_roughness(r);
    Ok((num / den).powf(1.0 / (2 * p + 3) as f64))
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let n = v.len();
    let pos = q * (n - 1) as f64;
    let k = pos.floor() as usize;
    if k + 1 >= n {
        return v[n - 1];
    }
    let w = pos - k as f64;
    v[k] * (1.0 - w) + v[k + 1] * w
}

/// min(sample SD, IQR/1.349), falling back to whichever is positive.
pub fn robust_scale(s: &SortedSample) -> Result<f64> {
    let n = s.len();
    let mean = s.values.iter().sum::<f64>() / n as f64;
    let var = s.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    let sd = var.sqrt();
    let iqr = (quantile_sorted(&s.values, 0.75) - quantile_sorted(&s.values, 0.25)) / 1.349;
    let sigma = match (sd > 0.0, iqr > 0.0) {
        (true, true) => sd.min(iqr),
        (true, false) => sd,
        (false, true) => iqr,
        (false, false) => return Err(Error::InvalidInput("data have zero dispersion".into())),
    };
    Ok(sigma)
}

pub fn rot_bandwidth(s: &SortedSample, p: usize, deriv: usize, kernel: Kernel) -> Result<RotBandwidth> {
    let n = s.len();
    if n < 10 {
        return Err(Error::InvalidInput(format!("rule-of-thumb bandwidth needs n >= 10, got {n}")));
    }
    let scale = robust_scale(s)?;
    let constant = rot_constant(p, deriv, kernel)?;
    let h = constant * scale * (n as f64).powf(-1.0 / (2 * p + 3) as f64);
    Ok(RotBandwidth { h, p, deriv, n, constant, scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edf::sort_sample;

    fn data(n: usize) -> Vec<f64> {
        (0..n).map(|i| ((i * 7919) % n) as f64 / n as f64 + (i as f64 * 0.37).sin()).collect()
    }

    #[test]
    fn roughness_values() {
        assert!((normal_roughness(0) - 0.5 / std::f64::consts::PI.sqrt()).abs() < 1e-15);
        assert!((normal_roughness(2) - 3.0 / (8.0 * std::f64::consts::PI.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn rate_and_scale() {
        let x = data(500);
        let s1 = sort_sample(&x, None).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| 3.0 * v + 1.0).collect();
        let s2 = sort_sample(&scaled, None).unwrap();
        let a = rot_bandwidth(&s1, 2, 0, Kernel::Triangular).unwrap();
        let b = rot_bandwidth(&s2, 2, 0, Kernel::Triangular).unwrap();
        assert!((b.h / a.h - 3.0).abs() < 1e-12);
        let doubled: Vec<f64> = x.iter().chain(x.iter()).copied().collect();
        let s3 = sort_sample(&doubled, None).unwrap();
        let c = rot_bandwidth(&s3, 2, 0, Kernel::Triangular).unwrap();
        let ratio = (c.h / c.scale) / (a.h / a.scale);
        assert!((ratio - 2f64.powf(-1.0 / 7.0)).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let s = sort_sample(&[1.0; 20], None).unwrap();
        assert!(rot_bandwidth(&s, 2, 0, Kernel::Uniform).is_err());
        let s = sort_sample(&[1.0, 2.0, 3.0], None).unwrap();
        assert!(rot_bandwidth(&s, 2, 0, Kernel::Uniform).is_err());
    }

    #[test]
    fn triangular_p2_constant() {
        let c = rot_constant(2, 0, Kernel::Triangular).unwrap();
        assert!(c > 1.5 && c < 2.5, "{c}");
    }
}
