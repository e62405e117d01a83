//! Gauss–Legendre rules and adaptive panel integration.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared cached rule for `n` nodes.
    pub fn cached(n: usize) -> Arc<GaussLegendre> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GaussLegendre>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("quadrature cache poisoned");
        guard
            .entry(n)
            .or_insert_with(|| Arc::new(GaussLegendre::new(n)))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Apply the rule on [a, b] to a scalar function.
    pub fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Apply the rule on [a, b] to a vector-valued function, accumulating into `out`.
    pub fn apply_vec<F: FnMut(f64, &mut [f64])>(
        &self,
        a: f64,
        b: f64,
        buf: &mut [f64],
        out: &mut [f64],
        f: &mut F,
    ) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            buf.iter_mut().for_each(|v| *v = 0.0);
            f(mid + half * x, buf);
            let c = w * half;
            for (o, v) in out.iter_mut().zip(buf.iter()) {
                *o += c * v;
            }
        }
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub nodes: usize,
    pub rtol: f64,
    pub atol: f64,
    pub max_depth: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            nodes: 64,
            rtol: 1e-9,
            atol: 1e-15,
            max_depth: 30,
        }
    }
}

/// Sorted, deduplicated panel edges covering [a, b] with the given interior breaks.
pub fn panel_edges(a: f64, b: f64, breaks: &[f64]) -> Vec<f64> {
    let mut e = vec![a];
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&t| t > a && t < b).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    inner.dedup();
    e.extend(inner);
    e.push(b);
    e
}

/// Adaptive integral of a scalar function over [a, b], splitting at `breaks`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64]) -> Result<f64> {
    let v = integrate_vec(
        1,
        |u, out: &mut [f64]| out[0] = f(u),
        a,
        b,
        breaks,
        QuadOptions::default(),
    )?;
    Ok(v[0])
}

/// Adaptive integral of a vector-valued function. `f(u, out)` writes the integrand into `out`.
pub fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    dim: usize,
    mut f: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: QuadOptions,
) -> Result<Vec<f64>> {
    let mut total = vec![0.0; dim];
    if !(b > a) {
        return Ok(total);
    }
    let rule = GaussLegendre::cached(opts.nodes);
    let edges = panel_edges(a, b, breaks);
    let mut buf = vec![0.0; dim];
    let mut whole: Vec<Vec<f64>> = Vec::with_capacity(edges.len() - 1);
    let mut scale = 0.0f64;
    for w in edges.windows(2) {
        let mut v = vec![0.0; dim];
        rule.apply_vec(w[0], w[1], &mut buf, &mut v, &mut f);
        scale = scale.max(max_abs(&v));
        whole.push(v);
    }
    let tol = (opts.rtol * scale).max(opts.atol);
    let width = b - a;
    for (k, w) in edges.windows(2).enumerate() {
        let local_tol = tol * ((w[1] - w[0]) / width).max(1e-3);
        let v = refine(&rule, w[0], w[1], &whole[k], local_tol, 0, &opts, &mut buf, &mut f)?;
        for (t, x) in total.iter_mut().zip(v) {
            *t += x;
        }
    }
    Ok(total)
}

#[allow(clippy::too_many_arguments)]
fn refine<F: FnMut(f64, &mut [f64])>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: &[f64],
    tol: f64,
    depth: usize,
    opts: &QuadOptions,
    buf: &mut [f64],
    f: &mut F,
) -> Result<Vec<f64>> {
    let dim = whole.len();
    let m = 0.5 * (a + b);
    let mut left = vec![0.0; dim];
    let mut right = vec![0.0; dim];
    rule.apply_vec(a, m, buf, &mut left, f);
    rule.apply_vec(m, b, buf, &mut right, f);
    let mut err = 0.0f64;
    for i in 0..dim {
        err = err.max((left[i] + right[i] - whole[i]).abs());
    }
    if err <= tol {
        for i in 0..dim {
            left[i] += right[i];
        }
        return Ok(left);
    }
    if depth >= opts.max_depth {
        return Err(Error::Quadrature(format!(
            "no convergence on [{a:.6e}, {b:.6e}], error estimate {err:.3e}"
        )));
    }
    let l = refine(rule, a, m, &left, 0.5 * tol, depth + 1, opts, buf, f)?;
    let r = refine(rule, m, b, &right, 0.5 * tol, depth + 1, opts, buf, f)?;
    Ok(l.into_iter().zip(r).map(|(x, y)| x + y).collect())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 16, 64, 128] {
            let g = GaussLegendre::new(n);
            let wsum: f64 = g.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}: {wsum}");
            for k in 0..(2 * n).min(40) {
                let v = g.apply(-1.0, 1.0, |x| x.powi(k as i32));
                let exact = if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
                assert!((v - exact).abs() < 1e-13, "n={n} k={k}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn adaptive_handles_kink() {
        let v = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &[]).unwrap();
        assert!((v - 4.0 / 3.0).abs() < 1e-8, "{v}");
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3]).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-14);
    }

    #[test]
    fn vector_integrand() {
        let v = integrate_vec(
            2,
            |x, o: &mut [f64]| {
                o[0] = x.exp();
                o[1] = x.sin();
            },
            0.0,
            1.0,
            &[],
            QuadOptions::default(),
        )
        .unwrap();
        assert!((v[0] - (1f64.exp() - 1.0)).abs() < 1e-13);
        assert!((v[1] - (1.0 - 1f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn panel_edges_dedup() {
        assert_eq!(panel_edges(0.0, 1.0, &[0.5, 0.5, 2.0, -1.0]), vec![0.0, 0.5, 1.0]);
    }
}
