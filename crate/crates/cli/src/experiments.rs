//! One runner per subcommand. Each reads its keys from the config, validates the numerical
//! preconditions up front and returns a table plus the fitted constants and validity flags.

use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use schro_core::control::{
    cost_scaling_study, reference_variants, solve_control, C0Choice, CostScalingBase,
};
use schro_core::counterexamples::{decay_study, Family, Observable, Profile, SequenceSpec, MIN_SLICES};
use schro_core::field::{l2_norm, tail_fraction, Field, Grid, Region, DEFAULT_TAIL_TOL};
use schro_core::inequalities::{
    bandlimited_sample, concentration_extremum, empirical_constant, euler_bound, euler_bound_check,
    fit_affine, fit_interpolation, interpolation_report_12, moment_check_34, spectral_inequality_report,
    two_ball_report_13, two_time_quotient, uncertainty_quotient, EmpiricalOptions, FitResult,
    InequalityReport, Variant12,
};
use schro_core::linalg::{CgOptions, LanczosOptions};
use schro_core::transform::{
    check_chirp_aliasing, dft, fresnel_map, gaussian_oracle, interpolate_lattice, propagate,
};

use crate::config::Config;
use crate::error::{CliError, Result};
use crate::output::{Findings, Table};
use crate::row;

pub struct Entry {
    pub name: &'static str,
    pub tag: &'static str,
    pub about: &'static str,
    pub run: fn(&Ctx) -> Result<(Table, Findings)>,
}

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
}

pub const CATALOG: &[Entry] = &[
    Entry { name: "propagate", tag: "free evolution", about: "spectral evolution of a datum, sampled on the grid", run: run_propagate },
    Entry { name: "verify-identity", tag: "Fresnel representation", about: "Fresnel map against the Gaussian oracle and the spectral propagator", run: run_verify_identity },
    Entry { name: "uncertainty", tag: "uncertainty principle", about: "energy against physical and spectral energy outside two balls", run: run_uncertainty },
    Entry { name: "two-time-observability", tag: "two-time observability", about: "recovery quotient from observation outside balls at two times", run: run_two_time },
    Entry { name: "empirical-constant", tag: "two-time observability constant", about: "best observability constant from the smallest Gramian eigenvalue", run: run_empirical },
    Entry { name: "interpolation-12", tag: "one-time interpolation", about: "interpolation inequality with exponential or power prior on a bump family", run: run_interpolation },
    Entry { name: "two-ball-13", tag: "two-ball interpolation", about: "recovery on one ball from observation on another at one time", run: run_two_ball },
    Entry { name: "spectral-ineq-27", tag: "band-limited spectral inequality", about: "energy against energy outside a ball for band-limited fields", run: run_spectral },
    Entry { name: "moment-34", tag: "moment growth", about: "weighted moments of the evolved state against datum regularity and decay", run: run_moment },
    Entry { name: "euler-21", tag: "Gamma-function moment bound", about: "exponentially weighted frequency moments against the factorial bound", run: run_euler },
    Entry { name: "counterexample", tag: "sharpness of unbounded observation sets", about: "decay of observables along explicit normalised sequences", run: run_counterexample },
    Entry { name: "control-solve", tag: "penalised impulse control", about: "impulse controls from the penalised dual on reference variants", run: run_control },
    Entry { name: "cost-scaling", tag: "impulse control cost", about: "control cost against radii and time gap for two impulses", run: run_cost },
];

pub fn find(name: &str) -> Option<&'static Entry> {
    CATALOG.iter().find(|e| e.name == name)
}

pub fn catalog_text() -> String {
    CATALOG
        .iter()
        .map(|e| format!("{:<24} [{}] {}\n", e.name, e.tag, e.about))
        .collect()
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Maps in parallel and reports the first failure in input order.
fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    let out: Vec<Result<U>> = items.par_iter().map(f).collect();
    out.into_iter().collect()
}

fn grid(cfg: &Config, l: f64, m: usize) -> Result<Grid> {
    Ok(Grid::new(cfg.get("grid.dim", 1)?, cfg.get("grid.L", l)?, cfg.get("grid.M", m)?)?)
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("`{key}` must be positive, got {v}")))
    }
}

fn tail_tol(cfg: &Config) -> Result<f64> {
    positive("grid.tail_tol", cfg.get("grid.tail_tol", DEFAULT_TAIL_TOL)?)
}

fn check_tail(tol: f64, f: &Field, what: &str) -> Result<f64> {
    let t = tail_fraction(f);
    if t > tol {
        return Err(invalid(format!(
            "tail tolerance violated for {what}: mass fraction outside [-L/2, L/2] is {t:e} > {tol:e}; enlarge grid.L"
        )));
    }
    Ok(t)
}

/// Datum from the `u0.*` keys: Gaussian or bump profile with a plane-wave factor.
fn datum(cfg: &Config, g: Grid, sigma: f64) -> Result<Field> {
    let dim = g.dim();
    let profile = cfg.string("u0.profile", "gaussian");
    let sigma = positive("u0.sigma", cfg.get("u0.sigma", sigma)?)?;
    let c = cfg.point("u0.center", [0.0; 2], dim)?;
    let k = cfg.point("u0.momentum", [0.0; 2], dim)?;
    let amp: Box<dyn Fn(f64) -> f64> = match profile.as_str() {
        "gaussian" => Box::new(move |r2: f64| (-r2 / 2.0).exp()),
        "bump" => Box::new(|r2: f64| if r2 < 1.0 { (-1.0 / (1.0 - r2)).exp() } else { 0.0 }),
        other => return Err(invalid(format!("`u0.profile` must be gaussian or bump, got `{other}`"))),
    };
    let f = Field::from_fn(g, |p| {
        let q = [(p[0] - c[0]) / sigma, (p[1] - c[1]) / sigma];
        Complex64::from_polar(amp(q[0] * q[0] + q[1] * q[1]), k[0] * p[0] + k[1] * p[1])
    });
    if l2_norm(&f) == 0.0 {
        return Err(invalid("datum vanishes on every grid node"));
    }
    Ok(f)
}

fn lanczos_opts(ctx: &Ctx, max_iter: usize, tol: f64) -> Result<LanczosOptions> {
    Ok(LanczosOptions {
        max_iter: ctx.cfg.get("lanczos.max_iter", max_iter)?,
        tol: positive("lanczos.tol", ctx.cfg.get("lanczos.tol", tol)?)?,
        seed: ctx.seed,
        ..LanczosOptions::default()
    })
}

fn cg_opts(cfg: &Config, tol: f64) -> Result<CgOptions> {
    let d = CgOptions::default();
    Ok(CgOptions {
        tol: positive("cg.tol", cfg.get("cg.tol", tol)?)?,
        max_iter: cfg.get("cg.max_iter", d.max_iter)?,
        ..d
    })
}

fn record_fit(out: &mut Findings, key: &str, fit: &FitResult) {
    out.fitted(
        key,
        json!({ "model": fit.model, "intercept": fit.intercept(), "slope": fit.slope(), "r_squared": fit.r_squared }),
    );
}

fn report_validity(out: &mut Findings, reps: &[InequalityReport]) {
    out.flag("tail_ok", reps.iter().all(|r| r.validity.tail_ok));
    out.flag("weight_cap_ok", reps.iter().all(|r| r.validity.weight_cap_ok));
    let worst = reps.iter().map(|r| r.validity.tail_fraction).fold(0.0, f64::max);
    out.fitted("max_tail_fraction", worst);
}

fn max_of(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(f64::NEG_INFINITY, f64::max)
}

fn run_propagate(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 20.0, 512)?;
    let u0 = datum(cfg, g, 1.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &u0, "u0")?;
    let times: Vec<f64> = cfg.list("times", &[0.5, 1.0])?;
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0)) {
        return Err(invalid(format!("`times` must be nonnegative, got {t}")));
    }
    let stride: usize = cfg.get("output.stride", 1)?;
    if stride == 0 {
        return Err(invalid("`output.stride` must be at least 1"));
    }
    let states: Vec<Field> = times.par_iter().map(|&t| propagate(&u0, t)).collect();
    let two = g.dim() == 2;
    let mut table = Table::new(&if two {
        vec!["t", "x", "y", "re", "im", "abs2"]
    } else {
        vec!["t", "x", "re", "im", "abs2"]
    });
    let n0 = l2_norm(&u0);
    let (mut drift, mut tail) = (0.0f64, 0.0f64);
    for (t, u) in times.iter().zip(&states) {
        drift = drift.max((l2_norm(u) - n0).abs() / n0);
        tail = tail.max(tail_fraction(u));
        for (i, v) in u.values().iter().enumerate() {
            let [a, b] = g.unflatten(i);
            if a % stride != 0 || b % stride != 0 {
                continue;
            }
            let p = g.point(i);
            if two {
                table.push(row![*t, p[0], p[1], v.re, v.im, v.norm_sqr()]);
            } else {
                table.push(row![*t, p[0], v.re, v.im, v.norm_sqr()]);
            }
        }
    }
    let mut out = Findings::default();
    out.fitted("max_norm_drift", drift);
    out.fitted("max_tail_fraction", tail);
    out.tolerance("norm_drift", 1e-12);
    out.tolerance("tail", tol);
    out.flag("norm_conserved", drift <= 1e-12);
    out.flag("tail_ok", tail <= tol);
    Ok((table, out))
}

fn run_verify_identity(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let ms: Vec<usize> = cfg.list("sweep.M", &[1024, 2048])?;
    let ls: Vec<f64> = cfg.list("sweep.L", &[40.0])?;
    let ts: Vec<f64> = cfg.list("sweep.T", &[0.5, 1.0])?;
    let sigma = positive("u0.sigma", cfg.get("u0.sigma", 1.0)?)?;
    let tol_f = positive("tol.fresnel", cfg.get("tol.fresnel", 1e-6)?)?;
    let tol_s = positive("tol.spectral", cfg.get("tol.spectral", 1e-5)?)?;
    let tol = tail_tol(cfg)?;
    let mut tuples = Vec::new();
    for &m in &ms {
        for &l in &ls {
            let g = Grid::new(1, l, m)?;
            check_tail(tol, &gaussian_oracle(&g, 0.0, sigma)?, &format!("u0 at L = {l}, M = {m}"))?;
            for &t in &ts {
                positive("sweep.T", t)?;
                check_chirp_aliasing(&g, t)?;
                tuples.push((g, t));
            }
        }
    }
    let errs = par_map(&tuples, |&(g, t)| {
        let u0 = gaussian_oracle(&g, 0.0, sigma)?;
        let (u, og) = fresnel_map(&u0, t)?;
        let e_oracle = u.max_abs_diff(&gaussian_oracle(&og, t, sigma)?)?;
        let inside: Vec<usize> = (0..og.len()).filter(|&m| og.coord(m).abs() < g.half_extent()).collect();
        let xs: Vec<f64> = inside.iter().map(|&m| og.coord(m)).collect();
        let spectral = interpolate_lattice(&dft(&propagate(&u0, t)), &[xs])?;
        let e_spec = inside
            .iter()
            .zip(&spectral)
            .map(|(&m, v)| (u.values()[m] - v).norm())
            .fold(0.0, f64::max);
        Ok((e_oracle, e_spec))
    })?;
    let mut table = Table::new(&["M", "L", "T", "max_err_fresnel", "max_err_spectral"]);
    for ((g, t), (ef, es)) in tuples.iter().zip(&errs) {
        table.push(row![g.points_per_dim(), g.half_extent(), *t, *ef, *es]);
    }
    let wf = max_of(errs.iter().map(|e| e.0));
    let ws = max_of(errs.iter().map(|e| e.1));
    let mut out = Findings::default();
    out.fitted("worst_err_fresnel", wf);
    out.fitted("worst_err_spectral", ws);
    out.tolerance("fresnel", tol_f);
    out.tolerance("spectral", tol_s);
    out.tolerance("tail", tol);
    out.flag("fresnel_within_tolerance", wf <= tol_f);
    out.flag("spectral_within_tolerance", ws <= tol_s);
    Ok((table, out))
}

fn run_uncertainty(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 20.0, 512)?;
    let f = datum(cfg, g, 1.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &f, "u0")?;
    let ss: Vec<f64> = cfg.list("uncertainty.s_radii", &[0.5, 1.0, 2.0])?;
    let sigmas: Vec<f64> = cfg.list("uncertainty.sigma_radii", &[0.5, 1.0, 2.0])?;
    let pairs: Vec<(f64, f64)> = ss.iter().flat_map(|&s| sigmas.iter().map(move |&q| (s, q))).collect();
    let reps = par_map(&pairs, |&(s, q)| {
        Ok(uncertainty_quotient(&f, &Region::centered_ball(s), &Region::centered_ball(q))?)
    })?;
    let mut table = Table::new(&[
        "s_radius", "sigma_radius", "lhs", "physical_outside", "spectral_outside", "quotient", "zero_field",
    ]);
    for ((s, q), r) in pairs.iter().zip(&reps) {
        table.push(row![
            *s,
            *q,
            r.lhs,
            r.term("physical_outside").unwrap_or(f64::NAN),
            r.term("spectral_outside").unwrap_or(f64::NAN),
            r.quotient,
            r.validity.zero_field,
        ]);
    }
    let mut out = Findings::default();
    out.fitted("max_quotient", max_of(reps.iter().map(|r| r.quotient)));
    out.tolerance("tail", tol);
    report_validity(&mut out, &reps);
    Ok((table, out))
}

struct Balls {
    x1: [f64; 2],
    r1: f64,
    x2: [f64; 2],
    r2: f64,
}

fn balls(cfg: &Config, dim: usize, d: [f64; 4]) -> Result<Balls> {
    Ok(Balls {
        x1: cfg.point("obs.x1", [d[0], 0.0], dim)?,
        r1: cfg.get("obs.r1", d[1])?,
        x2: cfg.point("obs.x2", [d[2], 0.0], dim)?,
        r2: cfg.get("obs.r2", d[3])?,
    })
}

fn run_two_time(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 12.0, 256)?;
    let u0 = datum(cfg, g, 1.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &u0, "u0")?;
    let s: f64 = cfg.get("times.S", 0.0)?;
    let ts: Vec<f64> = cfg.list("times.T", &[0.25, 0.5, 1.0, 2.0])?;
    let b = balls(cfg, g.dim(), [0.0, 2.0, 0.0, 2.0])?;
    let (ra, rb) = (Region::ball_complement(b.x1, b.r1), Region::ball_complement(b.x2, b.r2));
    let reps = par_map(&ts, |&t| Ok(two_time_quotient(&u0, s, t, &ra, &rb)?))?;
    let mut table = Table::new(&["S", "T", "r1", "r2", "lhs", "obs_S", "obs_T", "quotient"]);
    for (t, r) in ts.iter().zip(&reps) {
        table.push(row![
            s,
            *t,
            b.r1,
            b.r2,
            r.lhs,
            r.term("obs_S").unwrap_or(f64::NAN),
            r.term("obs_T").unwrap_or(f64::NAN),
            r.quotient,
        ]);
    }
    let mut out = Findings::default();
    out.fitted("max_quotient", max_of(reps.iter().map(|r| r.quotient)));
    out.tolerance("tail", tol);
    report_validity(&mut out, &reps);
    Ok((table, out))
}

fn run_empirical(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 12.0, 256)?;
    let s: f64 = cfg.get("times.S", 0.0)?;
    let ts: Vec<f64> = cfg.list("times.T", &[0.25, 0.5, 1.0, 2.0])?;
    let b = balls(cfg, g.dim(), [0.0, 2.0, 0.0, 2.0])?;
    let (ra, rb) = (Region::ball_complement(b.x1, b.r1), Region::ball_complement(b.x2, b.r2));
    let opts = EmpiricalOptions {
        lanczos: lanczos_opts(ctx, 1024, 1e-12)?,
        hermitian_tol: positive("tol.hermitian", cfg.get("tol.hermitian", 1e-11)?)?,
    };
    for &t in &ts {
        if !(s >= 0.0 && s < t) {
            return Err(invalid(format!("need 0 <= S < T, got S = {s}, T = {t}")));
        }
    }
    let res = par_map(&ts, |&t| Ok(empirical_constant(s, t, &ra, &rb, g, opts)?))?;
    let mut table = Table::new(&[
        "S", "T", "gap", "lambda_min", "constant", "iterations", "ritz_residual", "hermitian_defect",
    ]);
    for (t, e) in ts.iter().zip(&res) {
        table.push(row![s, *t, t - s, e.lambda_min, e.constant, e.iterations, e.ritz_residual, e.hermitian_defect]);
    }
    let mut out = Findings::default();
    let mut by_gap: Vec<(f64, f64)> = ts.iter().zip(&res).map(|(t, e)| (t - s, e.constant)).collect();
    by_gap.sort_by(|a, b| a.0.total_cmp(&b.0));
    out.flag("nonincreasing_in_gap", by_gap.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9)));
    let (xs, ys): (Vec<f64>, Vec<f64>) = by_gap.iter().filter(|p| p.1 > 0.0).map(|p| (1.0 / p.0, p.1.ln())).unzip();
    if let Ok(fit) = fit_affine("log constant against 1/gap", &xs, &ys) {
        record_fit(&mut out, "log_constant_vs_inverse_gap", &fit);
    }
    out.tolerance("lanczos", opts.lanczos.tol);
    out.tolerance("hermitian", opts.hermitian_tol);
    Ok((table, out))
}

fn run_interpolation(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 40.0, 1024)?;
    let count: usize = cfg.get("family.count", 20)?;
    let lo = positive("family.rho_min", cfg.get("family.rho_min", 0.5)?)?;
    let hi = positive("family.rho_max", cfg.get("family.rho_max", 4.0)?)?;
    let c = cfg.point("family.center", [0.0; 2], g.dim())?;
    if count < 2 || hi <= lo {
        return Err(invalid("family needs at least two members and rho_max > rho_min"));
    }
    let r = positive("r", cfg.get("r", 1.0)?)?;
    let a = positive("a", cfg.get("a", 1.0)?)?;
    let t = positive("T", cfg.get("T", 1.0)?)?;
    let variant = match cfg.string("variant", "exponential").as_str() {
        "exponential" => Variant12::Exponential { theta: cfg.get("theta", 0.5)? },
        "power" => Variant12::Power { beta: cfg.get("beta", 2.0)?, gamma: cfg.get("gamma", 0.5)? },
        other => return Err(invalid(format!("`variant` must be exponential or power, got `{other}`"))),
    };
    let tol = tail_tol(cfg)?;
    let rhos: Vec<f64> = (0..count).map(|j| lo + (hi - lo) * j as f64 / (count - 1) as f64).collect();
    let members: Vec<Field> = rhos
        .iter()
        .map(|&rho| {
            let f = Field::from_fn(g, |p| {
                let q2 = ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)) / (rho * rho);
                Complex64::new(if q2 < 1.0 { (-1.0 / (1.0 - q2)).exp() } else { 0.0 }, 0.0)
            });
            if l2_norm(&f) == 0.0 {
                return Err(invalid(format!("bump of radius {rho} misses every grid node")));
            }
            check_tail(tol, &f, &format!("family member rho = {rho}"))?;
            Ok(f)
        })
        .collect::<Result<_>>()?;
    let reps = par_map(&members, |u| Ok(interpolation_report_12(u, r, a, t, variant)?))?;
    let mut table = Table::new(&[
        "member", "rho", "lhs", "observation", "prior", "product", "theta_p", "log_factor", "valid",
    ]);
    for (j, (rho, rep)) in rhos.iter().zip(&reps).enumerate() {
        let d = |k| rep.derived_value(k).unwrap_or(f64::NAN);
        table.push(row![
            j,
            *rho,
            rep.lhs,
            rep.term("observation").unwrap_or(f64::NAN),
            rep.term("prior").unwrap_or(f64::NAN),
            d("product"),
            d("theta_p"),
            d("log_factor"),
            rep.validity.is_valid(),
        ]);
    }
    let p = reps[0].derived_value("p").unwrap_or(f64::NAN);
    let fit = fit_interpolation(&reps, p)?;
    let mut out = Findings::default();
    out.fitted("theta_p", fit.theta_p);
    out.fitted("theta", fit.theta);
    out.fitted("p", p);
    out.fitted("c_fit", fit.c_fit);
    out.fitted("c_envelope", fit.c_envelope);
    out.fitted("r_squared", fit.r_squared);
    out.flag("exponent_in_unit_interval", fit.theta_p > 0.0 && fit.theta_p < 1.0);
    out.flag("constant_finite", fit.c_envelope.is_finite() && fit.c_fit.is_finite());
    out.tolerance("tail", tol);
    report_validity(&mut out, &reps);
    Ok((table, out))
}

fn run_two_ball(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 20.0, 1024)?;
    let u0 = datum(cfg, g, 1.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &u0, "u0")?;
    let b = balls(cfg, g.dim(), [-1.0, 1.0, 1.0, 1.0])?;
    let a = positive("a", cfg.get("a", 1.0)?)?;
    let ts: Vec<f64> = cfg.list("T", &[0.5, 1.0, 2.0])?;
    let reps = par_map(&ts, |&t| Ok(two_ball_report_13(&u0, b.x1, b.x2, b.r1, b.r2, a, t)?))?;
    let mut table = Table::new(&["T", "lhs", "observation", "prior", "p", "log_factor", "quotient", "valid"]);
    for (t, r) in ts.iter().zip(&reps) {
        table.push(row![
            *t,
            r.lhs,
            r.term("observation").unwrap_or(f64::NAN),
            r.term("prior").unwrap_or(f64::NAN),
            r.derived_value("p").unwrap_or(f64::NAN),
            r.derived_value("log_factor").unwrap_or(f64::NAN),
            r.quotient,
            r.validity.is_valid(),
        ]);
    }
    let mut out = Findings::default();
    out.fitted("max_quotient", max_of(reps.iter().map(|r| r.quotient)));
    out.tolerance("tail", tol);
    report_validity(&mut out, &reps);
    Ok((table, out))
}

fn run_spectral(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 20.0, 512)?;
    let radii: Vec<f64> = cfg.list("spectral.radii", &[0.5, 1.0, 2.0])?;
    let bands: Vec<f64> = cfg.list("spectral.bands", &[1.0, 2.0, 4.0, 8.0])?;
    let samples: usize = cfg.get("spectral.samples", 200)?;
    let extremal: bool = cfg.get("spectral.extremal", false)?;
    let opts = lanczos_opts(ctx, 512, 1e-10)?;
    if samples == 0 {
        return Err(invalid("`spectral.samples` must be at least 1"));
    }
    let pairs: Vec<(f64, f64)> = radii.iter().flat_map(|&r| bands.iter().map(move |&n| (r, n))).collect();
    let mut table = Table::new(&[
        "r", "N", "rN", "samples", "min_ratio", "max_ratio", "max_log_ratio", "extremal_ratio",
    ]);
    let mut stats = Vec::new();
    for (i, &(r, n)) in pairs.iter().enumerate() {
        let seeds: Vec<u64> = (0..samples as u64)
            .map(|s| ctx.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add((i as u64) * samples as u64 + s))
            .collect();
        let ratios = par_map(&seeds, |&sd| {
            let f = bandlimited_sample(g, n, sd)?;
            Ok(spectral_inequality_report(&f, r, n)?.quotient)
        })?;
        let ext = if extremal { concentration_extremum(g, r, n, opts)?.0 } else { f64::NAN };
        let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = max_of(ratios.iter().copied());
        table.push(row![r, n, r * n, samples, lo, hi, hi.ln(), ext]);
        stats.push((r * n, lo, hi, ext));
    }
    let mut out = Findings::default();
    let min_ratio = stats.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    out.fitted("min_ratio", min_ratio);
    out.flag("ratio_at_least_one", min_ratio >= 1.0 - 1e-12);
    let xs: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let ys: Vec<f64> = stats.iter().map(|s| s.2.ln()).collect();
    if let Ok(fit) = fit_affine("log max ratio against rN", &xs, &ys) {
        record_fit(&mut out, "sampled_log_ratio_vs_rN", &fit);
    }
    if extremal {
        let ye: Vec<f64> = stats.iter().map(|s| s.3.ln()).collect();
        if let Ok(fit) = fit_affine("log extremal ratio against rN", &xs, &ye) {
            record_fit(&mut out, "extremal_log_ratio_vs_rN", &fit);
        }
        out.tolerance("lanczos", opts.tol);
    }
    Ok((table, out))
}

fn run_moment(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 128.0, 2048)?;
    let u0 = datum(cfg, g, 2.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &u0, "u0")?;
    let ts: Vec<f64> = cfg.list("T", &[0.0, 1.0, 2.0, 4.0, 8.0, 16.0])?;
    let ks: Vec<u32> = cfg.list("k", &[1, 2])?;
    let tuples: Vec<(u32, f64)> = ks.iter().flat_map(|&k| ts.iter().map(move |&t| (k, t))).collect();
    let checks = par_map(&tuples, |&(k, t)| Ok(moment_check_34(&u0, t, k)?))?;
    let mut table = Table::new(&[
        "T", "k", "lhs", "rhs_energy", "rhs_sobolev", "rhs_moment", "needed_constant", "tail_ok",
    ]);
    for c in &checks {
        table.push(row![c.t, c.k, c.lhs, c.rhs_energy, c.rhs_sobolev, c.rhs_moment, c.needed_constant, c.tail_ok]);
    }
    let mut out = Findings::default();
    for &k in &ks {
        let of_k = || checks.iter().filter(move |c| c.k == k);
        out.fitted(&format!("needed_constant_k{k}"), max_of(of_k().map(|c| c.needed_constant)));
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            of_k().filter(|c| c.t >= 1.0 && c.lhs > 0.0).map(|c| ((1.0 + c.t).ln(), c.lhs.ln())).unzip();
        if let Ok(fit) = fit_affine("log moment against log(1+T)", &xs, &ys) {
            out.flag(&format!("growth_within_2k_k{k}"), fit.slope() <= 2.0 * k as f64 + 0.1);
            record_fit(&mut out, &format!("growth_k{k}"), &fit);
        }
    }
    out.tolerance("growth_slope_excess", 0.1);
    out.tolerance("tail", tol);
    out.flag("tail_ok", checks.iter().all(|c| c.tail_ok));
    Ok((table, out))
}

fn run_euler(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let aa: Vec<f64> = cfg.list("euler.a", &[0.5, 1.0, 2.0])?;
    let dims: Vec<usize> = cfg.list("euler.dims", &[1, 2])?;
    let order: u32 = cfg.get("euler.max_order", 4)?;
    let mut set = Vec::new();
    for &a in &aa {
        for &d in &dims {
            match d {
                1 => set.extend((0..=order).map(|b| (a, vec![b]))),
                2 => set.extend((0..=order).flat_map(|b1| (0..=order - b1).map(move |b2| (a, vec![b1, b2])))),
                _ => return Err(invalid(format!("`euler.dims` entries must be 1 or 2, got {d}"))),
            }
        }
    }
    let checks = par_map(&set, |(a, b)| Ok(euler_bound_check(*a, b)?))?;
    let c = max_of(checks.iter().map(|c| c.needed_constant)).max(0.0);
    let mut table = Table::new(&["a", "dim", "beta", "order", "integral", "needed_constant", "base_holds"]);
    for ch in &checks {
        let beta: Vec<String> = ch.beta.iter().map(u32::to_string).collect();
        table.push(row![
            ch.a,
            ch.beta.len(),
            beta.join(" "),
            ch.beta.iter().sum::<u32>(),
            ch.integral,
            ch.needed_constant,
            ch.base_holds,
        ]);
    }
    let holds = checks
        .iter()
        .all(|ch| ch.base_holds && euler_bound(ch.a, &ch.beta, c) >= ch.integral.sqrt() * (1.0 - 1e-12));
    let mut out = Findings::default();
    out.fitted("constant", c);
    out.tolerance("bound_relative", 1e-12);
    out.flag("bound_holds_with_fitted_constant", holds);
    Ok((table, out))
}

fn run_counterexample(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let family = cfg.string("sequence.family", "concentrating");
    let (l, m, ks, names): (f64, usize, &[u32], &[&str]) = match family.as_str() {
        "concentrating" => (15.0, 4096, &[1, 2, 4, 8, 16, 32], &["terminal_inside"]),
        "modulated" => (15.0, 4096, &[0, 1, 2, 4, 8, 16, 32], &["terminal_inside", "weighted"]),
        "time-reversed" => (128.0, 65536, &[1, 2, 4, 8, 16, 32], &["initial_outside", "time_integrated_inside"]),
        other => {
            return Err(invalid(format!(
                "`sequence.family` must be concentrating, modulated or time-reversed, got `{other}`"
            )))
        }
    };
    let g = grid(cfg, l, m)?;
    let dim = g.dim();
    let profile = match cfg.string("sequence.profile", "gaussian").as_str() {
        "gaussian" => Profile::Gaussian,
        "bump" => Profile::Bump,
        other => return Err(invalid(format!("`sequence.profile` must be gaussian or bump, got `{other}`"))),
    };
    let center = cfg.point("sequence.center", [0.0; 2], dim)?;
    let horizon = positive("sequence.horizon", cfg.get("sequence.horizon", 1.0)?)?;
    let fam = match family.as_str() {
        "concentrating" => Family::Concentrating { center, horizon },
        "modulated" => Family::Modulated { horizon, direction: cfg.point("sequence.direction", [1.0, 0.0], dim)? },
        _ => Family::TimeReversed { center, s1: positive("sequence.s1", cfg.get("sequence.s1", 1.0)?)? },
    };
    let ks: Vec<u32> = cfg.list("sequence.k", ks)?;
    let names: Vec<String> = cfg.list("observables", &names.iter().map(|s| s.to_string()).collect::<Vec<_>>())?;
    let observables: Vec<Observable> = names
        .iter()
        .map(|n| {
            Ok(match n.as_str() {
                "initial_outside" => Observable::InitialOutside {
                    center: cfg.point("initial_outside.center", [0.0; 2], dim)?,
                    radius: cfg.get("initial_outside.radius", 0.25)?,
                },
                "terminal_inside" => Observable::TerminalInside {
                    center: cfg.point("terminal_inside.center", [1.0, 0.0], dim)?,
                    radius: cfg.get("terminal_inside.radius", 1.0)?,
                },
                "time_integrated_inside" => Observable::TimeIntegratedInside {
                    center: cfg.point("time_integrated_inside.center", [0.0; 2], dim)?,
                    radius: cfg.get("time_integrated_inside.radius", 1.0)?,
                    horizon: cfg.get("time_integrated_inside.horizon", 0.5)?,
                    slices: cfg.get("time_integrated_inside.slices", MIN_SLICES)?,
                },
                "weighted" => Observable::Weighted { a: cfg.get("weighted.a", 1.0)? },
                other => return Err(invalid(format!("unknown observable `{other}`"))),
            })
        })
        .collect::<Result<_>>()?;
    let spec = SequenceSpec { family: fam, profile, grid: g, k: ks[0] };
    let tab = decay_study(&spec, &ks, &observables)?;
    let mut header = vec!["k".to_string()];
    header.extend(tab.columns.iter().cloned());
    let mut table = Table::new(&header);
    for (k, r) in tab.ks.iter().zip(&tab.rows) {
        let mut cells = row![*k];
        cells.extend(r.iter().map(|v| (*v).into()));
        table.push(cells);
    }
    let mut out = Findings::default();
    for (name, fit) in tab.columns.iter().zip(&tab.slopes) {
        if let Some(fit) = fit {
            record_fit(&mut out, &format!("log_{name}_vs_log_k"), fit);
        }
    }
    if let Some(j) = tab.columns.iter().position(|c| c == "weighted") {
        let w = tab.column(j);
        out.fitted("weighted_max_relative_drift", max_of(w.iter().map(|v| (v / w[0] - 1.0).abs())));
    }
    out.notes = tab.notes.clone();
    Ok((table, out))
}

fn run_control(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 12.0, 256)?;
    let all = reference_variants(g);
    let names: Vec<String> = cfg.list("control.variants", &all.iter().map(|v| v.0.to_string()).collect::<Vec<_>>())?;
    let eps0: Option<f64> = if cfg.has("control.eps0") { Some(positive("control.eps0", cfg.get("control.eps0", 0.0)?)?) } else { None };
    let c0: Option<f64> = if cfg.has("control.c0") { Some(positive("control.c0", cfg.get("control.c0", 0.0)?)?) } else { None };
    let margin: f64 = cfg.get("control.margin", 1e-3)?;
    if !(margin >= 0.0) {
        return Err(invalid(format!("`control.margin` must be nonnegative, got {margin}")));
    }
    let cg = cg_opts(cfg, CgOptions::default().tol)?;
    let lz = lanczos_opts(ctx, 2000, 1e-10)?;
    let problems: Vec<(String, _)> = names
        .iter()
        .map(|n| {
            let (_, p) = all
                .iter()
                .find(|v| v.0 == n)
                .ok_or_else(|| invalid(format!("unknown control variant `{n}`")))?;
            let mut p = p.clone();
            p.eps0 = eps0.unwrap_or(p.eps0);
            p.c0 = c0.map_or(C0Choice::Calibrated { margin }, C0Choice::Fixed);
            p.cg = cg;
            p.lanczos = lz;
            p.validate()?;
            Ok((n.clone(), p))
        })
        .collect::<Result<_>>()?;
    let sols = par_map(&problems, |(_, p)| Ok(solve_control(p)?))?;
    let mut table = Table::new(&[
        "variant", "eps0", "c0", "c0_critical", "cg_iterations", "cg_residual", "duality_residual", "cost",
        "terminal_error", "terminal_error_l2", "datum_norm_sq", "bound_lhs", "bound_ratio",
    ]);
    for ((n, _), s) in problems.iter().zip(&sols) {
        table.push(row![
            n.as_str(),
            s.eps0,
            s.c0,
            s.calibration.as_ref().map_or(f64::NAN, |c| c.critical),
            s.cg_iterations,
            s.cg_residual,
            s.duality_residual,
            s.cost,
            s.terminal_error,
            s.terminal_error_l2,
            s.datum_norm_sq,
            s.bound_lhs,
            s.bound_ratio(),
        ]);
    }
    let worst = max_of(sols.iter().map(|s| s.bound_ratio()));
    let mut out = Findings::default();
    out.fitted("max_bound_ratio", worst);
    out.fitted("max_cg_residual", max_of(sols.iter().map(|s| s.cg_residual)));
    out.tolerance("bound_ratio_excess", 1e-9);
    out.tolerance("cg", cg.tol);
    out.tolerance("lanczos", lz.tol);
    out.flag("bound_holds", worst <= 1.0 + 1e-9);
    Ok((table, out))
}

fn run_cost(ctx: &Ctx) -> Result<(Table, Findings)> {
    let cfg = ctx.cfg;
    let g = grid(cfg, 12.0, 256)?;
    let f = datum(cfg, g, 1.0)?;
    let tol = tail_tol(cfg)?;
    check_tail(tol, &f, "datum")?;
    let gaps: Vec<f64> = cfg.list("cost.gaps", &[0.25, 0.5, 1.0, 2.0])?;
    let radii = cfg.pairs("cost.radii", &[(2.0, 2.0), (4.0, 2.0)])?;
    let base = CostScalingBase {
        datum: f,
        centers: [cfg.point("cost.x1", [0.0; 2], g.dim())?, cfg.point("cost.x2", [0.0; 2], g.dim())?],
        eps0: positive("cost.eps0", cfg.get("cost.eps0", 1e-6)?)?,
        margin: cfg.get("cost.margin", 1e-3)?,
        error_target: positive("cost.error_target", cfg.get("cost.error_target", 1e-3)?)?,
        cg: cg_opts(cfg, 1e-9)?,
        lanczos: lanczos_opts(ctx, 2000, 1e-10)?,
    };
    let study = cost_scaling_study(&base, &gaps, &radii)?;
    let mut table = Table::new(&[
        "gap", "r1", "r2", "r1r2_over_gap", "cost_ratio", "relative_error", "c0", "cg_iterations", "ok", "failure",
    ]);
    for r in &study.rows {
        table.push(row![
            r.gap,
            r.r1,
            r.r2,
            r.r1 * r.r2 / r.gap,
            r.cost_ratio,
            r.relative_error,
            r.c0,
            r.cg_iterations,
            r.ok,
            r.failure.clone().unwrap_or_default(),
        ]);
    }
    let mut out = Findings::default();
    let flagged = study.rows.iter().filter(|r| !r.ok).count();
    out.fitted("flagged_runs", flagged);
    match &study.fit {
        Some(fit) => record_fit(&mut out, "log_cost_vs_r1r2_over_gap", fit),
        None => out.notes.push("fewer than two accepted runs with r1 r2 > 0; no fit".into()),
    }
    out.flag("fit_available", study.fit.is_some());
    out.tolerance("error_target", base.error_target);
    out.tolerance("cg", base.cg.tol);
    out.tolerance("tail", tol);
    Ok((table, out))
}
