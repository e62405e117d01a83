mod common;

use common::rng;
use lrdist::band::{confidence_band, correlation_matrix, BandConfig, Target};
use lrdist::bandwidth::rot_bandwidth;
use lrdist::l2fit::{l2_fit_point, nd_estimate, DesignSpec};
use lrdist::program_eval::{fit_logit, mean, weights_complier, weights_counterfactual, ComplierTarget};
use lrdist::simulate::*;
use lrdist::*;
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn sorted(x: &[f64]) -> (SortedSample, EdfValues) {
    let s = SortedSample::new(x, None).unwrap();
    let e = edf_at_points(&s);
    (s, e)
}

fn replicate<F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync>(reps: usize, seed: u64, f: F) -> Vec<f64> {
    (0..reps).into_par_iter().map(|r| f(&mut rep_rng(seed, r as u64))).collect()
}

#[test]
fn uniform_density_interior() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let cfg = FitConfig::new(Kernel::Uniform, BasisSpec::poly(2), 0.2, 0);
    let est = replicate(200, 1, |r| {
        let (s, e) = sorted(&u.sample(5000, r));
        fit_point(&s, &e, &cfg, 0.5).unwrap().estimate(0).unwrap()
    });
    let (m, se) = mean_se(&est);
    assert!((m - 1.0).abs() < 3.0 * se * 10f64.sqrt(), "{m} ± {se}");
}

#[test]
fn lebesgue_l2_interior_and_wrong_support() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.2, 0);
    let right = DesignSpec::lebesgue(0.0, 1.0);
    let wrong = DesignSpec::lebesgue(-1.0, 2.0);
    let out: Vec<(f64, f64, f64)> = (0..100)
        .into_par_iter()
        .map(|r| {
            let (s, e) = sorted(&u.sample(5000, &mut rep_rng(2, r)));
            (
                l2_fit_point(&s, &e, &cfg, &right, 0.5).unwrap().estimate(0).unwrap(),
                l2_fit_point(&s, &e, &cfg, &right, 0.0).unwrap().estimate(0).unwrap(),
                l2_fit_point(&s, &e, &cfg, &wrong, 0.0).unwrap().estimate(0).unwrap(),
            )
        })
        .collect();
    let (mi, si) = mean_se(&out.iter().map(|o| o.0).collect::<Vec<_>>());
    let (mb, sb) = mean_se(&out.iter().map(|o| o.1).collect::<Vec<_>>());
    let (mw, _) = mean_se(&out.iter().map(|o| o.2).collect::<Vec<_>>());
    assert!((mi - 1.0).abs() < 3.0 * si, "interior {mi} ± {si}");
    assert!((mb - 1.0).abs() < 3.0 * sb, "boundary {mb} ± {sb}");
    assert!((mw - 1.0).abs() > 0.2, "wrong support {mw}");
}

#[test]
fn nd_boundary_unbiased() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let est = replicate(200, 3, |r| {
        let (s, _) = sorted(&u.sample(5000, r));
        nd_estimate(&s, Kernel::Triangular, 2, 0.2, (0.0, 1.0), 0.0).unwrap().theta[0]
    });
    let (m, se) = mean_se(&est);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn rot_bandwidth_mse_close_to_grid_best() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let reps = 300;
    let samples: Vec<Vec<f64>> = (0..reps).map(|r| g.sample(1000, &mut rep_rng(4, r))).collect();
    let truth = g.pdf(0.0);
    let mse = |hs: &(dyn Fn(&SortedSample) -> f64 + Sync)| -> f64 {
        samples
            .par_iter()
            .map(|x| {
                let (s, e) = sorted(x);
                let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), hs(&s), 0);
                (fit_point(&s, &e, &cfg, 0.0).unwrap().estimate(0).unwrap() - truth).powi(2)
            })
            .sum::<f64>()
            / reps as f64
    };
    let rot = mse(&|s| rot_bandwidth(s, 2, 0, Kernel::Triangular).unwrap().h);
    let best = (0..10).map(|k| 0.3 + 0.15 * k as f64).map(|h| mse(&move |_| h)).fold(f64::INFINITY, f64::min);
    assert!(rot <= 2.0 * best, "rot {rot} best {best}");
}

#[test]
fn efficiency_ratio_near_constant() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let setup = EfficiencySetup { kernel: Kernel::Uniform, p: 1, deriv: 0, bandwidth: BandwidthRule::Fixed(0.05) };
    let t = run_efficiency(&u, 5000, 2000, &setup, &[2], 0.5, 6).unwrap();
    let target = (19.0 / 36.0) / 0.6;
    assert!((t.rows[1].ratio_asy - target).abs() < 1e-9);
    assert!((t.rows[1].ratio_mc - target).abs() < 0.1 * target, "{}", t.rows[1].ratio_mc);
}

#[test]
fn base_variance_near_table_constant() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let setup = EfficiencySetup { kernel: Kernel::Uniform, p: 1, deriv: 0, bandwidth: BandwidthRule::Fixed(0.02) };
    let t = run_efficiency(&u, 10000, 2000, &setup, &[], 0.5, 7).unwrap();
    assert!((t.rows[0].normalized_var - 0.6).abs() < 0.06, "{}", t.rows[0].normalized_var);
}

#[test]
fn pointwise_coverage_trivial_properties() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let cfg = SimConfig { fit: FitConfig::robust(Kernel::Triangular, 2, 1.0, 0), bandwidth: BandwidthRule::Rot };
    let zero = run_pointwise_coverage(&g, 300, 50, &cfg, 0.0, 1.0, 9).unwrap();
    assert_eq!(zero.cells[0].coverage, 0.0);
    let a = run_pointwise_coverage(&g, 300, 200, &cfg, 0.0, 0.05, 9).unwrap();
    let b = run_pointwise_coverage(&g, 300, 200, &cfg, 0.0, 0.10, 9).unwrap();
    assert!(a.cells[0].coverage >= b.cells[0].coverage);
    let again = run_pointwise_coverage(&g, 300, 200, &cfg, 0.0, 0.05, 9).unwrap();
    assert_eq!(a, again);
}

#[test]
fn uniform_coverage_dominates_pointwise() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let cfg = SimConfig { fit: FitConfig::robust(Kernel::Triangular, 2, 1.0, 0), bandwidth: BandwidthRule::Rot };
    let grid: Vec<f64> = (0..8).map(|i| -1.0 + i as f64 * 2.0 / 7.0).collect();
    let mut band = BandConfig::new(0);
    band.draws = 500;
    let r = run_uniform_coverage(&g, 500, 60, &cfg, &grid, &band, 10).unwrap();
    let joint = r.joint_coverage.unwrap();
    assert!(r.min_band_margin.unwrap() >= 0.0);
    assert!(r.band_coverage.iter().all(|&c| c >= joint));
    assert!(r.cells.iter().zip(&r.band_coverage).all(|(c, &b)| b >= c.coverage));
    assert_eq!(r, run_uniform_coverage(&g, 500, 60, &cfg, &grid, &band, 10).unwrap());
}

#[test]
fn duplicated_grid_point_is_single_point() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let (s, e) = sorted(&g.sample(1500, &mut rng(12)));
    let cfg = FitConfig::robust(Kernel::Triangular, 2, 0.6, 0);
    let mut bc = BandConfig::new(0);
    bc.draws = 5000;
    let two = confidence_band(&s, &e, &fit_grid(&s, &e, &cfg, &[0.3, 0.3]).unwrap(), &bc).unwrap();
    let one = confidence_band(&s, &e, &fit_grid(&s, &e, &cfg, &[0.3]).unwrap(), &bc).unwrap();
    assert!((two.q - one.q).abs() < 0.08, "{} {}", two.q, one.q);
    assert!((one.q - 1.96).abs() < 0.08);
}

#[test]
fn far_points_nearly_uncorrelated() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let (s, e) = sorted(&g.sample(5000, &mut rng(13)));
    let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.25, 0);
    let grid = fit_grid(&s, &e, &cfg, &[-0.5, 0.5]).unwrap();
    let c = correlation_matrix(&s, &e, &grid, Target::Coef(0)).unwrap();
    assert!(c.matrix[(0, 1)].abs() < 0.2, "{}", c.matrix[(0, 1)]);
}

#[test]
fn linearized_process_moments() {
    let g = Dgp::gaussian(0.0, 1.0).unwrap();
    let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), 0.5, 0);
    let k = LinearizedKernel::new(&g, &cfg, 0.3).unwrap();
    let vals = replicate(1000, 14, |r| {
        let x = g.sample(5000, r);
        x.iter().map(|&y| k.eval(y).unwrap()).sum::<f64>() / (x.len() as f64).sqrt()
    });
    let (m, se) = mean_se(&vals);
    assert!(m.abs() < 3.0 * se, "{m} ± {se}");
    let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
    assert!((var - 1.0).abs() < 0.1, "{var}");
    let direct = linearized_process_eval(&g, &cfg, 0.3, &g.sample(100, &mut rng(1))).unwrap();
    assert!(direct.is_finite());
}

#[test]
fn studentized_process_approaches_linearization() {
    let u = Dgp::uniform(0.0, 1.0).unwrap();
    let grid = [0.35, 0.45, 0.55, 0.65];
    let sup_gap = |n: usize, rep: u64| -> f64 {
        let h = 0.3 * (n as f64 / 500.0).powf(-0.2);
        let cfg = FitConfig::new(Kernel::Triangular, BasisSpec::poly(2), h, 0);
        let x = u.sample(n, &mut rep_rng(15, rep + 1000 * n as u64));
        let (s, e) = sorted(&x);
        grid.iter()
            .map(|&at| {
                let fit = fit_point(&s, &e, &cfg, at).unwrap();
                let t = (fit.estimate(0).unwrap() - 1.0) / fit.se(0).unwrap();
                let k = LinearizedKernel::new(&u, &cfg, at).unwrap();
                let lin = x.iter().map(|&y| k.eval(y).unwrap()).sum::<f64>() / (n as f64).sqrt();
                (t - lin).abs()
            })
            .fold(0.0, f64::max)
    };
    let median = |n: usize| {
        let mut v: Vec<f64> = (0..50).into_par_iter().map(|r| sup_gap(n, r)).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        0.5 * (v[24] + v[25])
    };
    let (small, large) = (median(500), median(8000));
    assert!(large < small, "{small} -> {large}");
}

#[test]
fn logit_ignores_irrelevant_covariate() {
    let stats: Vec<f64> = (0..200)
        .into_par_iter()
        .map(|r| {
            let mut g = rep_rng(16, r);
            let n = 500;
            let z = DMatrix::from_fn(n, 2, |_, j| if j == 0 { 1.0 } else { StandardNormal.sample(&mut g) });
            let y: Vec<f64> = (0..n).map(|_| f64::from(g.random::<f64>() < 0.4)).collect();
            let m = fit_logit(&z, &y).unwrap();
            m.beta[1] / m.std_errors(&z).unwrap()[1]
        })
        .collect();
    let within = stats.iter().filter(|t| t.abs() < 3.0).count();
    assert!(within >= 195, "{within}");
}

fn counterfactual_panel(n: usize, r: &mut impl Rng) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let zc: Vec<f64> = (0..n).map(|_| StandardNormal.sample(r)).collect();
    let t: Vec<f64> = zc.iter().map(|&z| f64::from(r.random::<f64>() < 1.0 / (1.0 + (-(0.2 + 0.7 * z)).exp()))).collect();
    let x: Vec<f64> = t.iter().map(|&ti| if ti == 1.0 { r.random::<f64>().sqrt() } else { r.random::<f64>() }).collect();
    let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { zc[i] });
    (x, t, z)
}

#[test]
fn counterfactual_weights_mean_one_in_expectation() {
    let means = replicate(200, 17, |r| {
        let (_, t, z) = counterfactual_panel(2000, r);
        mean(&weights_counterfactual(&t, &z).unwrap().w)
    });
    let (m, se) = mean_se(&means);
    assert!((m - 1.0).abs() < 3.0 * se + 1e-3, "{m} ± {se}");
}

#[test]
fn complier_weights_mean_one_in_expectation() {
    let means = replicate(200, 18, |r| {
        let n = 3000;
        let zc: Vec<f64> = (0..n).map(|_| StandardNormal.sample(r)).collect();
        let d: Vec<f64> = zc.iter().map(|&z| f64::from(r.random::<f64>() < 1.0 / (1.0 + (-0.5 * z).exp()))).collect();
        let t: Vec<f64> = d.iter().map(|&di| f64::from(di == 1.0 && r.random::<f64>() < 0.6)).collect();
        let z = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { zc[i] });
        mean(&weights_complier(&t, &d, &z, ComplierTarget::Observed).unwrap().w)
    });
    let (m, se) = mean_se(&means);
    assert!((m - 1.0).abs() < 3.0 * se, "{m} ± {se}");
}

#[test]
fn one_sided_noncompliance_share() {
    let mut r = rng(19);
    let n = 400;
    let d: Vec<f64> = (0..n).map(|_| f64::from(r.random::<f64>() < 0.5)).collect();
    let t: Vec<f64> = d.iter().map(|&di| f64::from(di == 1.0 && r.random::<f64>() < 0.7)).collect();
    let z = DMatrix::from_element(n, 1, 1.0);
    let w = weights_complier(&t, &d, &z, ComplierTarget::Observed).unwrap();
    let pd = mean(&d);
    let expect = t.iter().zip(&d).map(|(ti, di)| ti * di / pd).sum::<f64>() / n as f64;
    assert!((w.share.unwrap() - expect).abs() < 1e-10);
}
