use crate::args::*;
use crate::error::CliError;
use crate::io::*;
use lrdist::band::{confidence_band, BandConfig, BandResult, Target};
use lrdist::bandwidth::{quantile_sorted, rot_bandwidth};
use lrdist::fit::{ci_combination, GridPoint};
use lrdist::l2fit::{l2_fit_point, DesignSpec};
use lrdist::mindist::{
    asy_variance_interior, md_asy_variance_closed, md_contrast, md_asy_variance_limit, md_estimate, redundant_is_collinear,
    variance_bound, variance_table, EquivalentKernel, Partition,
};
use lrdist::program_eval::{
    expand_design, mean, weights_complier, weights_counterfactual, weights_iv_validity, weights_subgroup,
    ComplierTarget, EstimatedWeights,
};
use lrdist::simulate::{
    run_efficiency, run_pointwise_coverage, run_uniform_coverage, BandwidthRule, Dgp, EfficiencySetup, SimConfig,
};
use lrdist::{edf_at_points, fit, ci_pointwise, fit_grid, BasisSpec, EdfValues, Error, FitConfig, Kernel, RedundantSpec, SortedSample};
use serde_json::{json, Value};

fn invalid(m: impl Into<String>) -> CliError {
    CliError::Validation(m.into())
}

fn parse_f64_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| invalid(format!("{what}: cannot parse '{}'", t.trim()))))
        .collect()
}

fn parse_j_list(s: &str) -> Result<Vec<u32>, CliError> {
    if s.trim().is_empty() || s.trim() == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<u32>().map_err(|_| invalid(format!("j: cannot parse '{}'", t.trim()))))
        .collect()
}

pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let grid = match parts.as_slice() {
        [a, b, n] => {
            let a: f64 = a.trim().parse().map_err(|_| invalid(format!("grid: bad start '{a}'")))?;
            let b: f64 = b.trim().parse().map_err(|_| invalid(format!("grid: bad end '{b}'")))?;
            let n: usize = n.trim().parse().map_err(|_| invalid(format!("grid: bad count '{n}'")))?;
            if n == 0 || !(b >= a) {
                return Err(invalid("grid: need a <= b and n >= 1"));
            }
            if n == 1 {
                vec![a]
            } else {
                (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
            }
        }
        [_] => parse_f64_list(spec, "grid")?,
        _ => return Err(invalid(format!("grid: expected 'a:b:n' or a list, got '{spec}'"))),
    };
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(invalid("grid: non-finite value"));
    }
    Ok(grid)
}

/// 30 points between the 2.5% and 97.5% sample quantiles.
fn default_grid(s: &SortedSample) -> Vec<f64> {
    let a = quantile_sorted(&s.values, 0.025);
    let b = quantile_sorted(&s.values, 0.975);
    (0..30).map(|i| a + (b - a) * i as f64 / 29.0).collect()
}

fn kernel_of(s: &str) -> Result<Kernel, CliError> {
    Ok(s.parse::<Kernel>()?)
}

fn bandwidth_rule(est: &EstimatorArgs) -> Result<BandwidthRule, CliError> {
    if est.h.trim().eq_ignore_ascii_case("rot") {
        return Ok(BandwidthRule::Rot);
    }
    let h: f64 = est.h.trim().parse().map_err(|_| invalid(format!("h: expected a number or 'rot', got '{}'", est.h)))?;
    if !(h > 0.0) || !h.is_finite() {
        return Err(invalid(format!("h must be positive, got {h}")));
    }
    Ok(BandwidthRule::Fixed(h))
}

fn base_config(est: &EstimatorArgs) -> Result<FitConfig, CliError> {
    let kernel = kernel_of(&est.kernel)?;
    let with_q = |b: BasisSpec| -> Result<BasisSpec, CliError> {
        Ok(match est.q {
            Some(j) => b.with_redundant(RedundantSpec::for_derivative(j, est.deriv.max(0) as usize, true)?),
            None => b,
        })
    };
    let mut cfg = FitConfig::new(kernel, with_q(BasisSpec::poly(est.p))?, 1.0, est.deriv);
    if est.robust {
        cfg = cfg.with_inference(with_q(BasisSpec::poly(est.p + 1))?);
    }
    if !(est.alpha > 0.0 && est.alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {}", est.alpha)));
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Prepared {
    s: SortedSample,
    e: EdfValues,
    cfg: FitConfig,
    grid: Vec<f64>,
    h_rule: &'static str,
}

fn prepare(x: &[f64], w: Option<&[f64]>, est: &EstimatorArgs) -> Result<Prepared, CliError> {
    let s = SortedSample::new(x, w)?;
    let e = edf_at_points(&s);
    let cfg = base_config(est)?;
    let (h, h_rule) = match bandwidth_rule(est)? {
        BandwidthRule::Fixed(h) => (h, "fixed"),
        BandwidthRule::Rot => (rot_bandwidth(&s, est.p, est.deriv.max(0) as usize, cfg.kernel)?.h, "rot"),
    };
    let grid = match &est.grid {
        Some(g) => parse_grid(g)?,
        None => default_grid(&s),
    };
    Ok(Prepared { s, e, cfg: cfg.with_h(h), grid, h_rule })
}

fn support_of(est: &EstimatorArgs) -> Result<(f64, f64), CliError> {
    let s = est.support.as_deref().ok_or_else(|| invalid("the l2 method needs --support lo,hi"))?;
    let v = parse_f64_list(s, "support")?;
    if v.len() != 2 || !(v[1] > v[0]) {
        return Err(invalid("support must be 'lo,hi' with lo < hi"));
    }
    Ok((v[0], v[1]))
}

fn grid_points(p: &Prepared, est: &EstimatorArgs) -> Result<Vec<GridPoint>, CliError> {
    match est.method.as_str() {
        "lr" => Ok(fit_grid(&p.s, &p.e, &p.cfg, &p.grid)?.points),
        "l2" => {
            let (lo, hi) = support_of(est)?;
            let design = DesignSpec::lebesgue(lo, hi);
            let inf = p.cfg.inference_basis.map(|_| p.cfg.inference_config());
            Ok(p.grid
                .iter()
                .map(|&x| GridPoint {
                    x,
                    fit: l2_fit_point(&p.s, &p.e, &p.cfg, &design, x),
                    inference: inf.as_ref().map(|c| l2_fit_point(&p.s, &p.e, c, &design, x)),
                })
                .collect())
        }
        m => Err(invalid(format!("unknown method '{m}' (expected lr or l2)"))),
    }
}

struct Row {
    cdf: f64,
    estimate: f64,
    ci: fit::Interval,
    md: Option<(f64, fit::Interval)>,
}

fn without_redundant(cfg: &FitConfig) -> FitConfig {
    let strip = |b: BasisSpec| BasisSpec { redundant: None, ..b };
    FitConfig { basis: strip(cfg.basis), inference_basis: cfg.inference_basis.map(strip), ..*cfg }
}

fn md_interval(gp: &GridPoint, cfg: &FitConfig, alpha: f64) -> Result<(f64, fit::Interval), Error> {
    let fit = gp.fit.as_ref().map_err(Clone::clone)?;
    let inf = gp.inference_fit().as_ref().map_err(Clone::clone)?;
    let part = Partition::for_basis(&cfg.basis)?;
    let point = md_estimate(fit, &part)?.theta1[cfg.basis.coef_index(cfg.deriv)?];
    let ipart = Partition::for_basis(&inf.basis)?;
    let cn = md_contrast(inf, &ipart, inf.basis.coef_index(cfg.deriv)?)?;
    Ok((point, ci_combination(inf, &cn, alpha)?))
}

fn evaluate(gp: &GridPoint, md: Option<(&GridPoint, &FitConfig)>, cfg: &FitConfig, alpha: f64) -> Result<Row, Error> {
    let fit = gp.fit.as_ref().map_err(Clone::clone)?;
    let inf = gp.inference_fit().as_ref().map_err(Clone::clone)?;
    let ci = ci_pointwise(inf, cfg.deriv, alpha)?;
    let md = md.map(|(g, c)| md_interval(g, c, alpha)).transpose()?;
    Ok(Row { cdf: fit.theta[0], estimate: fit.estimate(cfg.deriv)?, ci, md })
}

pub fn run_fit(a: &FitArgs) -> Result<(), CliError> {
    let table = ingest_csv(&a.input.input)?;
    let (x, w) = read_sample(&table, &a.input.x_col, a.input.weight_col.as_deref())?;
    let p = prepare(&x, w.as_deref(), &a.est)?;
    let has_md = p.cfg.basis.redundant.is_some();
    let md_points = if has_md { Some(grid_points(&p, &a.est)?) } else { None };
    let md_cfg = p.cfg;
    let p = Prepared { cfg: without_redundant(&p.cfg), ..p };
    let points = grid_points(&p, &a.est)?;
    let mut headers = vec!["x", "h", "n_local", "cdf", "estimate", "se", "ci_lo", "ci_hi"];
    if has_md {
        headers.extend(["md_estimate", "md_se", "md_ci_lo", "md_ci_hi"]);
    }
    headers.push("status");
    let mut out = CsvOut::new(&headers);
    let mut failed = 0;
    let mut warnings = Vec::new();
    for (i, gp) in points.iter().enumerate() {
        let n_local = gp.fit.as_ref().map_or(0, |f| f.n_local);
        let mut row = vec![fmt_num(gp.x), fmt_num(p.cfg.h), n_local.to_string()];
        match evaluate(gp, md_points.as_ref().map(|m| (&m[i], &md_cfg)), &p.cfg, a.est.alpha) {
            Ok(r) => {
                row.extend([r.cdf, r.estimate, r.ci.se, r.ci.lo, r.ci.hi].map(fmt_num));
                if let Some((m, ci)) = r.md {
                    row.extend([m, ci.se, ci.lo, ci.hi].map(fmt_num));
                }
                row.push("ok".into());
            }
            Err(e) => {
                failed += 1;
                warnings.push(format!("x = {}: {e}", gp.x));
                row.extend(std::iter::repeat_n("NaN".to_string(), if has_md { 9 } else { 5 }));
                row.push(e.to_string());
            }
        }
        out.push(row);
    }
    if failed == points.len() {
        return Err(CliError::Numerical(format!("all {failed} grid points failed: {}", warnings[0])));
    }
    write_csv(&out, a.out.output.as_ref())?;
    write_sidecar(
        sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()),
        "fit",
        a,
        None,
        out.rows.len(),
        json!({ "h": p.cfg.h, "h_rule": p.h_rule, "n": p.s.len(), "failed_points": failed }),
        &warnings,
    )
}

fn band_for(p: &Prepared, est: &EstimatorArgs, opts: &BandOptions) -> Result<(BandResult, Vec<String>), CliError> {
    if est.method != "lr" {
        return Err(invalid("bands are available for the lr method only"));
    }
    let target = match opts.target.as_str() {
        "coef" => Target::Coef(p.cfg.deriv),
        "md" => {
            if p.cfg.basis.redundant.is_none() {
                return Err(invalid("target md needs --q"));
            }
            Target::Md(p.cfg.deriv)
        }
        t => return Err(invalid(format!("unknown band target '{t}' (expected coef or md)"))),
    };
    let cfg = match target {
        Target::Md(_) => p.cfg,
        _ => without_redundant(&p.cfg),
    };
    let gf = fit_grid(&p.s, &p.e, &cfg, &p.grid)?;
    if gf.n_failed() > 0 {
        let first = gf.points.iter().find(|g| !g.is_ok()).unwrap();
        let err = first.inference_fit().as_ref().err().or(first.fit.as_ref().err()).unwrap();
        return Err(CliError::from(err.clone()));
    }
    let bc = BandConfig { alpha: est.alpha, draws: opts.draws, seed: opts.seed, target, ..BandConfig::new(p.cfg.deriv) };
    let b = confidence_band(&p.s, &p.e, &gf, &bc)?;
    Ok((b, gf.warnings))
}

fn band_summary(b: &BandResult) -> Value {
    json!({
        "q": b.q,
        "z": b.z,
        "q_first_half": b.quantile.q_first,
        "jitter": b.quantile.jitter,
        "eigen_clipped": b.quantile.eigen_clipped,
        "min_eigenvalue": b.quantile.min_eigenvalue,
        "draws": b.quantile.draws,
        "correlations_clipped": b.clipped,
        "max_correlation_excess": b.max_excess,
    })
}

pub fn run_band(a: &BandArgs) -> Result<(), CliError> {
    let table = ingest_csv(&a.input.input)?;
    let (x, w) = read_sample(&table, &a.input.x_col, a.input.weight_col.as_deref())?;
    let p = prepare(&x, w.as_deref(), &a.est)?;
    let (b, warnings) = band_for(&p, &a.est, &a.band)?;
    let mut out = CsvOut::new(&["x", "center", "se", "halfwidth", "lo", "hi", "pointwise_lo", "pointwise_hi"]);
    for i in 0..b.x.len() {
        out.push(
            [b.x[i], b.center[i], b.se[i], b.halfwidth[i], b.lo[i], b.hi[i], b.center[i] - b.z * b.se[i], b.center[i] + b.z * b.se[i]]
                .map(fmt_num)
                .to_vec(),
        );
    }
    write_csv(&out, a.out.output.as_ref())?;
    let mut res = band_summary(&b);
    res["h"] = json!(p.cfg.h);
    res["h_rule"] = json!(p.h_rule);
    write_sidecar(sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()), "band", a, Some(a.band.seed), out.rows.len(), res, &warnings)
}

pub fn run_efficiency_cmd(a: &EfficiencyArgs) -> Result<(), CliError> {
    let (out, res) = match a.table.as_str() {
        "sa" => {
            let mut out = CsvOut::new(&["panel", "deriv", "p", "kernel", "value"]);
            for c in variance_table()? {
                out.push(vec![
                    if c.deriv == 0 { "a" } else { "b" }.to_string(),
                    c.deriv.to_string(),
                    c.p.to_string(),
                    c.kernel.map_or("bound".to_string(), |k| k.name().to_string()),
                    format!("{:.6}", c.value),
                ]);
            }
            (out, json!({}))
        }
        "md" => {
            let kernel = kernel_of(&a.kernel)?;
            let base = asy_variance_interior(a.p, a.deriv, kernel, None)?;
            let mut out = CsvOut::new(&["p", "deriv", "j", "base", "quadrature", "closed_form", "status"]);
            for j in parse_j_list(&a.j)? {
                let q = RedundantSpec::for_derivative(j, a.deriv, true)?;
                let closed = if kernel == Kernel::Uniform { md_asy_variance_closed(a.p, a.deriv, j).ok() } else { None };
                let (quad, status) = if redundant_is_collinear(a.p, &q) {
                    (f64::NAN, "collinear".to_string())
                } else {
                    match asy_variance_interior(a.p, a.deriv, kernel, Some(q)) {
                        Ok(v) => (v, "ok".to_string()),
                        Err(e) => (f64::NAN, e.to_string()),
                    }
                };
                out.push(vec![
                    a.p.to_string(),
                    a.deriv.to_string(),
                    j.to_string(),
                    fmt_num(base),
                    fmt_num(quad),
                    fmt_num(closed.unwrap_or(f64::NAN)),
                    status,
                ]);
            }
            let bound = variance_bound(a.p, a.deriv).ok();
            let limit = if kernel == Kernel::Uniform { md_asy_variance_limit(a.p, a.deriv).ok() } else { None };
            (out, json!({ "base": base, "bound": bound, "closed_form_limit": limit }))
        }
        "kernel" => {
            let kernel = kernel_of(&a.kernel)?;
            if a.points < 2 {
                return Err(invalid("points must be at least 2"));
            }
            let js = parse_j_list(&a.j)?;
            let grid: Vec<f64> = (0..a.points).map(|i| -1.0 + 2.0 * i as f64 / (a.points - 1) as f64).collect();
            let mut cols = vec![EquivalentKernel::new(a.p, a.deriv, kernel, None)?.tabulate(&grid)?];
            let mut names = vec!["u".to_string(), "base".to_string()];
            for &j in &js {
                let q = RedundantSpec::for_derivative(j, a.deriv, true)?;
                if redundant_is_collinear(a.p, &q) {
                    continue;
                }
                cols.push(EquivalentKernel::new(a.p, a.deriv, kernel, Some(q))?.tabulate(&grid)?);
                names.push(format!("j{j}"));
            }
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let mut out = CsvOut::new(&refs);
            for (i, u) in grid.iter().enumerate() {
                let mut row = vec![fmt_num(*u)];
                row.extend(cols.iter().map(|c| fmt_num(c[i])));
                out.push(row);
            }
            (out, json!({}))
        }
        t => return Err(invalid(format!("unknown table '{t}' (expected sa, md or kernel)"))),
    };
    write_csv(&out, a.out.output.as_ref())?;
    write_sidecar(sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()), "efficiency", a, None, out.rows.len(), res, &[])
}

fn logit_summary(w: &EstimatedWeights) -> Value {
    json!({
        "beta": w.model.beta.as_slice(),
        "converged": w.model.converged,
        "iterations": w.model.iterations,
        "loglik": w.model.loglik,
        "separated": w.model.separated,
        "clamped": w.clamped,
        "share": w.share,
    })
}

pub fn run_weights(a: &WeightsArgs) -> Result<(), CliError> {
    let table = ingest_csv(&a.input)?;
    let n = table.len();
    let covs: Vec<Vec<f64>> = a
        .covariates
        .split(',')
        .map(str::trim)
        .filter(|c| !c.is_empty())
        .map(|c| table.numeric(c))
        .collect::<Result<_, _>>()?;
    let z = || -> Result<_, CliError> { Ok(expand_design(&covs, n, a.order)?) };
    let t = table.binary(&a.treatment_col)?;
    let d = || table.binary(&a.instrument_col);
    let mut warnings = Vec::new();
    let (w, res) = match a.scheme.as_str() {
        "subgroup1" => (weights_subgroup(&t, 1)?, json!({})),
        "subgroup0" => (weights_subgroup(&t, 0)?, json!({})),
        "counterfactual" => {
            let r = weights_counterfactual(&t, &z()?)?;
            (r.w.clone(), logit_summary(&r))
        }
        "iv00" | "iv10" => {
            let iv = weights_iv_validity(&t, &d()?)?;
            let res = json!({ "scale00": iv.scale00, "scale10": iv.scale10 });
            (if a.scheme == "iv00" { iv.w00 } else { iv.w10 }, res)
        }
        "complier" | "complier0" | "complier1" => {
            let which = match a.scheme.as_str() {
                "complier" => ComplierTarget::Observed,
                "complier0" => ComplierTarget::Y0,
                _ => ComplierTarget::Y1,
            };
            let r = weights_complier(&t, &d()?, &z()?, which)?;
            (r.w.clone(), logit_summary(&r))
        }
        s => return Err(invalid(format!("unknown weight scheme '{s}'"))),
    };
    if let Some(m) = res.get("clamped").and_then(Value::as_u64) {
        if m > 0 {
            warnings.push(format!("{m} propensities clamped to [1e-3, 1 - 1e-3]"));
        }
    }
    if res.get("separated").and_then(Value::as_bool) == Some(true) {
        warnings.push("logit fit shows separation".into());
    }
    for wmsg in &warnings {
        eprintln!("warning: {wmsg}");
    }
    let mut headers: Vec<&str> = table.headers.iter().map(String::as_str).collect();
    headers.push(&a.weight_name);
    let mut out = CsvOut::new(&headers);
    for (r, wi) in table.records.iter().zip(&w) {
        let mut row: Vec<String> = r.iter().map(str::to_string).collect();
        row.push(fmt_num(*wi));
        out.push(row);
    }
    write_csv(&out, a.out.output.as_ref())?;
    let mut res = res;
    res["mean_weight"] = json!(mean(&w));
    write_sidecar(sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()), "weights", a, None, n, res, &warnings)
}

pub fn run_ivcheck(a: &IvcheckArgs) -> Result<(), CliError> {
    let table = ingest_csv(&a.input)?;
    let x = table.numeric(&a.x_col)?;
    let t = table.binary(&a.treatment_col)?;
    let d = table.binary(&a.instrument_col)?;
    let iv = weights_iv_validity(&t, &d)?;
    let full = prepare(&x, None, &a.est)?;
    let mut bands = Vec::new();
    for w in [&iv.w00, &iv.w10] {
        let s = SortedSample::new(&x, Some(w))?;
        let e = edf_at_points(&s);
        let p = Prepared { s, e, cfg: full.cfg, grid: full.grid.clone(), h_rule: full.h_rule };
        bands.push(band_for(&p, &a.est, &a.band)?.0);
    }
    let (b0, b1) = (&bands[0], &bands[1]);
    let (s0, s1) = (iv.scale00, iv.scale10);
    let mut out = CsvOut::new(&["x", "curve00", "lo00", "hi00", "curve10", "lo10", "hi10", "gap"]);
    let mut violations = 0;
    for i in 0..b0.x.len() {
        if s1 * b1.lo[i] > s0 * b0.hi[i] {
            violations += 1;
        }
        out.push(
            [b0.x[i], s0 * b0.center[i], s0 * b0.lo[i], s0 * b0.hi[i], s1 * b1.center[i], s1 * b1.lo[i], s1 * b1.hi[i], s0 * b0.center[i] - s1 * b1.center[i]]
                .map(fmt_num)
                .to_vec(),
        );
    }
    write_csv(&out, a.out.output.as_ref())?;
    let res = json!({
        "scale00": s0,
        "scale10": s1,
        "h": full.cfg.h,
        "h_rule": full.h_rule,
        "band00": band_summary(b0),
        "band10": band_summary(b1),
        "violations": violations,
    });
    write_sidecar(sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()), "ivcheck", a, Some(a.band.seed), out.rows.len(), res, &[])
}

fn dgp_of(name: &str, params: Option<&str>) -> Result<Dgp, CliError> {
    let v = params.map(|s| parse_f64_list(s, "dgp-params")).transpose()?;
    let get = |i: usize, default: f64| v.as_ref().and_then(|v| v.get(i).copied()).unwrap_or(default);
    Ok(match name {
        "gaussian" => Dgp::gaussian(get(0, 0.0), get(1, 1.0))?,
        "exponential" => Dgp::exponential(get(0, 1.0))?,
        "uniform" => Dgp::uniform(get(0, 0.0), get(1, 1.0))?,
        "kinked" => Dgp::kinked(get(0, 0.7), get(1, 0.4))?,
        other => return Err(invalid(format!("unknown dgp '{other}'"))),
    })
}

pub fn run_simulate(a: &SimulateArgs) -> Result<(), CliError> {
    if a.est.method != "lr" {
        return Err(invalid("simulate supports the lr method only"));
    }
    let dgp = dgp_of(&a.dgp, a.dgp_params.as_deref())?;
    let cfg = base_config(&a.est)?;
    let rule = bandwidth_rule(&a.est)?;
    let sim = SimConfig { fit: cfg, bandwidth: rule };
    if a.reps == 0 || a.n < 10 {
        return Err(invalid("need reps >= 1 and n >= 10"));
    }
    let seed = a.band.seed;
    let (out, res) = match a.experiment.as_str() {
        "pointwise" | "uniform" => {
            let r = if a.experiment == "pointwise" {
                run_pointwise_coverage(&dgp, a.n, a.reps, &sim, a.x, a.est.alpha, seed)?
            } else {
                let grid = match &a.est.grid {
                    Some(g) => parse_grid(g)?,
                    None => (0..30).map(|i| dgp.quantile(0.1 + 0.8 * i as f64 / 29.0)).collect(),
                };
                let target = if a.band.target == "md" { Target::Md(cfg.deriv) } else { Target::Coef(cfg.deriv) };
                let bc = BandConfig { alpha: a.est.alpha, draws: a.band.draws, seed, target, ..BandConfig::new(cfg.deriv) };
                run_uniform_coverage(&dgp, a.n, a.reps, &sim, &grid, &bc, seed)?
            };
            let mut out = CsvOut::new(&["x", "truth", "coverage", "mean_bias", "sd", "mean_se"]);
            for c in &r.cells {
                out.push([c.x, c.truth, c.coverage, c.mean_bias, c.sd, c.mean_se].map(fmt_num).to_vec());
            }
            let res = json!({
                "reps": r.reps,
                "completed": r.completed,
                "mean_h": r.mean_h,
                "joint_coverage": r.joint_coverage,
                "min_band_margin": r.min_band_margin,
                "mean_q": r.mean_q,
            });
            (out, res)
        }
        "efficiency" => {
            if a.est.deriv < 0 {
                return Err(invalid("efficiency experiments need deriv >= 0"));
            }
            let setup = EfficiencySetup { kernel: cfg.kernel, p: a.est.p, deriv: a.est.deriv as usize, bandwidth: rule };
            let t = run_efficiency(&dgp, a.n, a.reps, &setup, &parse_j_list(&a.j)?, a.x, seed)?;
            let mut out = CsvOut::new(&["j", "scaled_var", "normalized_var", "asy_constant", "ratio_mc", "ratio_asy", "completed"]);
            for r in &t.rows {
                let mut row = vec![r.j.map_or("base".to_string(), |j| j.to_string())];
                row.extend([r.scaled_var, r.normalized_var, r.asy_constant, r.ratio_mc, r.ratio_asy].map(fmt_num));
                row.push(r.completed.to_string());
                out.push(row);
            }
            (out, json!({ "reps": t.reps }))
        }
        e => return Err(invalid(format!("unknown experiment '{e}' (expected pointwise, uniform or efficiency)"))),
    };
    write_csv(&out, a.out.output.as_ref())?;
    write_sidecar(sidecar_path(a.out.output.as_ref(), a.out.json.as_ref()), "simulate", a, Some(seed), out.rows.len(), res, &[])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_forms() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert_eq!(parse_grid("-1,0.5").unwrap(), vec![-1.0, 0.5]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("a,b").is_err());
    }
}
