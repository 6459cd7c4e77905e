//! Evaluators for observability, uncertainty and unique-continuation inequalities,
//! empirical observability constants and the associated fits.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{
    dot, l2_norm, l2_norm_sq, masked_energy, norm_point, tail_fraction, weighted_energy, Field,
    Grid, Region, Weight, DEFAULT_TAIL_TOL,
};
use crate::linalg::{lanczos, random_vector, Eigenpair, Extremal, LanczosOptions, WeightedInner};
use crate::transform::{
    check_chirp_aliasing, chirp, dft, idft, interpolate_lattice, propagate, sobolev_norm_sq,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    pub tail_fraction: f64,
    pub tail_ok: bool,
    pub weight_cap_ok: bool,
    /// Set when every observation term vanishes and the quotient is reported as 0.
    pub zero_field: bool,
}

impl Validity {
    fn of(u0: &Field) -> Self {
        let t = tail_fraction(u0);
        Self {
            tail_fraction: t,
            tail_ok: t <= DEFAULT_TAIL_TOL,
            weight_cap_ok: true,
            zero_field: false,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.tail_ok && self.weight_cap_ok
    }
}

/// Both sides of one inequality instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InequalityReport {
    pub tag: String,
    pub lhs: f64,
    pub terms: Vec<(String, f64)>,
    /// `lhs / sum(terms)`, or 0 when the terms vanish.
    pub quotient: f64,
    pub params: Vec<(String, f64)>,
    pub derived: Vec<(String, f64)>,
    pub validity: Validity,
}

impl InequalityReport {
    fn new(tag: &str, lhs: f64, terms: Vec<(&str, f64)>, validity: Validity) -> Self {
        let sum: f64 = terms.iter().map(|(_, v)| v).sum();
        let mut validity = validity;
        let quotient = if sum > 0.0 {
            lhs / sum
        } else {
            validity.zero_field = true;
            0.0
        };
        Self {
            tag: tag.to_string(),
            lhs,
            terms: terms.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            quotient,
            params: Vec::new(),
            derived: Vec::new(),
            validity,
        }
    }

    fn with_params(mut self, p: &[(&str, f64)]) -> Self {
        self.params
            .extend(p.iter().map(|(k, v)| (k.to_string(), *v)));
        self
    }

    fn with_derived(mut self, p: &[(&str, f64)]) -> Self {
        self.derived
            .extend(p.iter().map(|(k, v)| (k.to_string(), *v)));
        self
    }

    pub fn term(&self, name: &str) -> Option<f64> {
        self.terms.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn derived_value(&self, name: &str) -> Option<f64> {
        self.derived.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub model: String,
    /// `[intercept, slope]` for affine models.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

impl FitResult {
    pub fn intercept(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn slope(&self) -> f64 {
        self.coefficients[1]
    }
}

/// Least-squares `y = c0 + c1 x`.
pub fn fit_affine(model: &str, x: &[f64], y: &[f64]) -> Result<FitResult> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("affine fit needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("affine fit needs distinct abscissae".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r2 = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(FitResult {
        model: model.to_string(),
        coefficients: vec![intercept, slope],
        r_squared: r2,
    })
}

/// Energy on `R` of `u(S)` and the recovery quotient at two times.
pub fn two_time_quotient(
    u0: &Field,
    s: f64,
    t: f64,
    a: &Region,
    b: &Region,
) -> Result<InequalityReport> {
    if !(s >= 0.0 && s < t) {
        return Err(Error::InvalidArgument(format!("need 0 <= S < T, got S = {s}, T = {t}")));
    }
    a.validate()?;
    b.validate()?;
    let us = propagate(u0, s);
    let ut = propagate(&us, t - s);
    let lhs = l2_norm_sq(u0);
    Ok(InequalityReport::new(
        "two-time-observability",
        lhs,
        vec![("obs_S", masked_energy(&us, a)), ("obs_T", masked_energy(&ut, b))],
        Validity::of(u0),
    )
    .with_params(&[("S", s), ("T", t)]))
}

/// Physical energy outside `S` plus spectral energy outside `Sigma`.
pub fn uncertainty_quotient(f: &Field, s: &Region, sigma: &Region) -> Result<InequalityReport> {
    s.validate()?;
    sigma.validate()?;
    let outside = |r: &Region| r.complement().unwrap_or(Region::ball([0.0, 0.0], 0.0));
    let spec = dft(f);
    Ok(InequalityReport::new(
        "uncertainty",
        l2_norm_sq(f),
        vec![
            ("physical_outside", masked_energy(f, &outside(s))),
            ("spectral_outside", spec.masked_energy(&outside(sigma))),
        ],
        Validity::of(f),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BridgeResiduals {
    /// Relative change of the energy on `A` under the chirp.
    pub chirp: f64,
    /// Relative mismatch between the spectral energy of the chirped datum over `B`
    /// and the physical energy of `u(T)` over `2T B`.
    pub fresnel: f64,
    pub spectral_energy: f64,
    pub physical_energy: f64,
}

/// Checks the two identities linking two-time observability and the uncertainty principle.
///
/// The physical side evaluates the band-limited interpolant of `u(T)` on the lattice `2T xi`
/// inside `2T B`, so both sides use the same node set.
pub fn equivalence_bridge_check(
    u0: &Field,
    a: &Region,
    b: &Region,
    t: f64,
) -> Result<BridgeResiduals> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("T must be positive, got {t}")));
    }
    a.validate()?;
    let (center, radius) = match *b {
        Region::Ball { center, radius } => (center, radius),
        _ => return Err(Error::InvalidArgument("bridge region B must be a ball".into())),
    };
    let g = *u0.grid();
    check_chirp_aliasing(&g, t)?;
    for (d, c) in center.iter().take(g.dim()).enumerate() {
        if 2.0 * t * (c.abs() + radius) >= g.half_extent() {
            return Err(Error::InvalidArgument(format!(
                "scaled ball 2T B leaves the box along axis {d}"
            )));
        }
    }
    let tilde = chirp(u0, 1.0 / (4.0 * t));
    let ea = masked_energy(u0, a);
    let eat = masked_energy(&tilde, a);
    let chirp_res = if ea > 0.0 { (ea - eat).abs() / ea } else { eat };

    let spec = dft(&tilde);
    let spectral = spec.masked_energy(b);

    // frequency nodes in the bounding box of B, axis by axis
    let sel: Vec<Vec<usize>> = (0..g.dim())
        .map(|d| {
            (0..g.points_per_dim())
                .filter(|&m| (g.freq(m) - center[d]).abs() <= radius)
                .collect()
        })
        .collect();
    let axes: Vec<Vec<f64>> = sel
        .iter()
        .map(|s| s.iter().map(|&m| 2.0 * t * g.freq(m)).collect())
        .collect();
    let ut = propagate(u0, t);
    let vals = interpolate_lattice(&dft(&ut), &axes)?;
    let mut phys = 0.0;
    if g.dim() == 1 {
        for (&m, v) in sel[0].iter().zip(&vals) {
            if b.contains([g.freq(m), 0.0]) {
                phys += v.norm_sqr();
            }
        }
    } else {
        let n1 = sel[1].len();
        for (p, &m0) in sel[0].iter().enumerate() {
            for (q, &m1) in sel[1].iter().enumerate() {
                if b.contains([g.freq(m0), g.freq(m1)]) {
                    phys += vals[p * n1 + q].norm_sqr();
                }
            }
        }
    }
    let physical = phys * (2.0 * t * g.freq_spacing()).powi(g.dim() as i32);
    let fresnel = if spectral > 0.0 {
        (spectral - physical).abs() / spectral
    } else {
        physical
    };
    Ok(BridgeResiduals {
        chirp: chirp_res,
        fresnel,
        spectral_energy: spectral,
        physical_energy: physical,
    })
}

/// `G = M_A + P* M_B P` with `P` the free flow over the gap `T - S`.
#[derive(Debug, Clone)]
pub struct ObservabilityGramian {
    pub grid: Grid,
    pub gap: f64,
    mask_a: Vec<f64>,
    mask_b: Vec<f64>,
}

impl ObservabilityGramian {
    pub fn new(grid: Grid, s: f64, t: f64, a: &Region, b: &Region) -> Result<Self> {
        if !(s >= 0.0 && s < t) {
            return Err(Error::InvalidArgument(format!("need 0 <= S < T, got S = {s}, T = {t}")));
        }
        a.validate()?;
        b.validate()?;
        Ok(Self {
            grid,
            gap: t - s,
            mask_a: a.indicator_mask(&grid),
            mask_b: b.indicator_mask(&grid),
        })
    }

    pub fn apply(&self, f: &Field) -> Field {
        let pf = propagate(f, self.gap).mul_real(&self.mask_b);
        let back = propagate(&pf, -self.gap);
        let a = f.mul_real(&self.mask_a);
        a.add(&back).expect("same grid")
    }

    pub fn apply_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.apply(&Field::from_raw(self.grid, v.to_vec())).into_values()
    }

    /// `|<Gf, g> - <f, Gg>| / (||f|| ||g||)` for seeded random `f, g`.
    pub fn hermitian_defect(&self, seed: u64) -> f64 {
        let f = Field::from_raw(self.grid, random_vector(self.grid.len(), seed));
        let g = Field::from_raw(self.grid, random_vector(self.grid.len(), seed ^ 0x9e37_79b9));
        let a = dot(&self.apply(&f), &g).expect("same grid");
        let b = dot(&f, &self.apply(&g)).expect("same grid");
        (a - b).norm() / (l2_norm(&f) * l2_norm(&g))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EmpiricalOptions {
    pub lanczos: LanczosOptions,
    pub hermitian_tol: f64,
}

impl Default for EmpiricalOptions {
    fn default() -> Self {
        Self {
            lanczos: LanczosOptions {
                max_iter: 1024,
                tol: 1e-12,
                ..LanczosOptions::default()
            },
            hermitian_tol: 1e-11,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmpiricalConstant {
    pub lambda_min: f64,
    /// `1 / lambda_min`.
    pub constant: f64,
    pub extremizer: Field,
    pub iterations: usize,
    pub ritz_residual: f64,
    pub hermitian_defect: f64,
}

/// Best constant of the two-time observability inequality as `1 / lambda_min(G)`.
pub fn empirical_constant(
    s: f64,
    t: f64,
    a: &Region,
    b: &Region,
    grid: Grid,
    opts: EmpiricalOptions,
) -> Result<EmpiricalConstant> {
    let gram = ObservabilityGramian::new(grid, s, t, a, b)?;
    let defect = gram.hermitian_defect(opts.lanczos.seed.wrapping_add(1));
    if defect > opts.hermitian_tol {
        return Err(Error::NotSelfAdjoint(defect));
    }
    let ip = WeightedInner::uniform(grid.cell_volume());
    let Eigenpair {
        value,
        vector,
        iterations,
        residual,
    } = lanczos(
        &|v| gram.apply_vec(v),
        &ip,
        grid.len(),
        LanczosOptions {
            which: Extremal::Smallest,
            ..opts.lanczos
        },
    )?;
    Ok(EmpiricalConstant {
        lambda_min: value,
        constant: 1.0 / value,
        extremizer: Field::from_raw(grid, vector),
        iterations,
        ritz_residual: residual,
        hermitian_defect: defect,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Variant12 {
    /// Exponential prior `e^{a|x|}`, exponent `theta^{1 + r/(aT)}`.
    Exponential { theta: f64 },
    /// Prior `e^{a|x|^beta}` with interpolation exponent `gamma`.
    Power { beta: f64, gamma: f64 },
}

/// One-time interpolation inequality with observation outside `B_r(0)`.
pub fn interpolation_report_12(
    u0: &Field,
    r: f64,
    a: f64,
    t: f64,
    variant: Variant12,
) -> Result<InequalityReport> {
    if !(r > 0.0 && a > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("r, a and T must be positive".into()));
    }
    let n = u0.grid().dim() as i32;
    let ut = propagate(u0, t);
    let obs = masked_energy(&ut, &Region::centered_complement(r));
    let (weight, theta_p, log_factor, p) = match variant {
        Variant12::Exponential { theta } => {
            if !(theta > 0.0 && theta < 1.0) {
                return Err(Error::InvalidArgument(format!("theta must lie in (0,1), got {theta}")));
            }
            let p = 1.0 + r / (a * t);
            (
                Weight::exponential(a),
                theta.powf(p),
                (1.0 + (r / (a * t)).powi(n)).ln(),
                p,
            )
        }
        Variant12::Power { beta, gamma } => {
            if !(beta > 1.0) || !(gamma > 0.0 && gamma < 1.0) {
                return Err(Error::InvalidArgument(
                    "power variant needs beta > 1 and gamma in (0,1)".into(),
                ));
            }
            let lf = (r.powf(beta) / (a * (1.0 - gamma) * t.powf(beta))).powf(1.0 / (beta - 1.0));
            (Weight::power(a, beta), gamma, lf, f64::NAN)
        }
    };
    let prior = weighted_energy(u0, &weight)?;
    let lhs = l2_norm_sq(u0);
    let product = if obs > 0.0 && prior.value > 0.0 {
        obs.powf(theta_p) * prior.value.powf(1.0 - theta_p)
    } else {
        0.0
    };
    let mut validity = Validity::of(u0);
    validity.weight_cap_ok = !prior.capped;
    let mut rep = InequalityReport::new(
        "interpolation-12",
        lhs,
        vec![("observation", obs), ("prior", prior.value)],
        validity,
    )
    .with_params(&[("r", r), ("a", a), ("T", t)])
    .with_derived(&[
        ("theta_p", theta_p),
        ("log_factor", log_factor),
        ("product", product),
        ("p", p),
    ]);
    if let Variant12::Power { beta, gamma } = variant {
        rep = rep.with_params(&[("beta", beta), ("gamma", gamma)]);
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InterpolationFit {
    pub theta_p: f64,
    pub theta: f64,
    /// Least-squares constant `exp(intercept)`.
    pub c_fit: f64,
    /// Smallest constant making the inequality hold on every member.
    pub c_envelope: f64,
    pub r_squared: f64,
}

/// Fits `log(lhs/prior) - log_factor = log C + theta_p log(obs/prior)` over a family
/// and reports the envelope constant for the fitted exponent.
pub fn fit_interpolation(reports: &[InequalityReport], p: f64) -> Result<InterpolationFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut rows = Vec::new();
    for r in reports {
        let obs = r.term("observation").unwrap_or(0.0);
        let prior = r.term("prior").unwrap_or(0.0);
        let lf = r.derived_value("log_factor").unwrap_or(0.0);
        if obs > 0.0 && prior > 0.0 && r.lhs > 0.0 {
            xs.push((obs / prior).ln());
            ys.push((r.lhs / prior).ln() - lf);
            rows.push((r.lhs, obs, prior, lf));
        }
    }
    let fit = fit_affine("log-affine", &xs, &ys)?;
    let theta_p = fit.slope();
    let c_envelope = rows
        .iter()
        .map(|&(lhs, obs, prior, lf)| {
            (lhs.ln() - lf - theta_p * obs.ln() - (1.0 - theta_p) * prior.ln()).exp()
        })
        .fold(0.0, f64::max);
    Ok(InterpolationFit {
        theta_p,
        theta: if theta_p > 0.0 { theta_p.powf(1.0 / p) } else { f64::NAN },
        c_fit: fit.intercept().exp(),
        c_envelope,
        r_squared: fit.r_squared,
    })
}

/// Recovery on `B_{r2}(x'')` from observation on `B_{r1}(x')` at one time.
#[allow(clippy::too_many_arguments)]
pub fn two_ball_report_13(
    u0: &Field,
    x1: [f64; 2],
    x2: [f64; 2],
    r1: f64,
    r2: f64,
    a: f64,
    t: f64,
) -> Result<InequalityReport> {
    if !(r1 > 0.0 && r2 > 0.0 && a > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("r1, r2, a and T must be positive".into()));
    }
    let n = u0.grid().dim() as i32;
    let ut = propagate(u0, t);
    let lhs = masked_energy(&ut, &Region::ball(x2, r2));
    let obs = masked_energy(&ut, &Region::ball(x1, r1));
    let prior = weighted_energy(u0, &Weight::exponential(a))?;
    let m = (a * t).min(r1);
    let dist = (x1[0] - x2[0]).hypot(x1[1] - x2[1]);
    let p = 1.0 + (dist + r1 + r2) / m;
    let mut validity = Validity::of(u0);
    validity.weight_cap_ok = !prior.capped;
    Ok(InequalityReport::new(
        "two-ball-13",
        lhs,
        vec![("observation", obs), ("prior", prior.value)],
        validity,
    )
    .with_params(&[("r1", r1), ("r2", r2), ("a", a), ("T", t), ("distance", dist)])
    .with_derived(&[("p", p), ("log_factor", (r2.powi(n) / m.powi(n)).ln())]))
}

/// Recovery from observation outside `B_r(0)` at time `T` for data supported in `B_N(0)`.
pub fn support_ball_report_14(u0: &Field, r: f64, n_support: f64, t: f64) -> Result<InequalityReport> {
    if !(r > 0.0 && n_support > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("r, N and T must be positive".into()));
    }
    let total = l2_norm_sq(u0);
    let outside = masked_energy(u0, &Region::centered_complement(n_support));
    if outside > 1e-24 * total.max(1e-300) {
        return Err(Error::InvalidArgument(format!(
            "datum is not supported in B_N(0): outside energy {outside:e}"
        )));
    }
    let ut = propagate(u0, t);
    let obs = masked_energy(&ut, &Region::centered_complement(r));
    let rep = InequalityReport::new("support-ball-14", total, vec![("observation", obs)], Validity::of(u0))
        .with_params(&[("r", r), ("N", n_support), ("T", t)]);
    let lr = if rep.quotient > 0.0 { rep.quotient.ln() } else { f64::NAN };
    Ok(rep.with_derived(&[("rN_over_T", r * n_support / t), ("log_ratio", lr)]))
}

/// One row of an epsilon sweep: `log` of the right-hand side and of `lhs / rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpsRow {
    pub eps: f64,
    pub log_rhs: f64,
    pub log_needed_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsSweep {
    pub report: InequalityReport,
    pub rows: Vec<EpsRow>,
    /// Largest `log(lhs/rhs(eps))`: the log-constant the sweep requires.
    pub log_constant: f64,
    /// Index of the minimising epsilon; interior when the trade-off is visible.
    pub argmin: usize,
    pub interior_minimum: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn safe_ln(x: f64) -> f64 {
    if x > 0.0 {
        x.ln()
    } else {
        f64::NEG_INFINITY
    }
}

fn sweep(report: InequalityReport, eps: &[f64], log_rhs: impl Fn(f64) -> f64) -> Result<EpsSweep> {
    if eps.is_empty() {
        return Err(Error::InvalidArgument("epsilon list is empty".into()));
    }
    let ll = safe_ln(report.lhs);
    let rows: Vec<EpsRow> = eps
        .iter()
        .map(|&e| {
            let lr = log_rhs(e);
            EpsRow {
                eps: e,
                log_rhs: lr,
                log_needed_constant: ll - lr,
            }
        })
        .collect();
    let log_constant = rows
        .iter()
        .map(|r| r.log_needed_constant)
        .fold(f64::NEG_INFINITY, f64::max);
    let argmin = (0..rows.len())
        .min_by(|&i, &j| rows[i].log_rhs.total_cmp(&rows[j].log_rhs))
        .expect("nonempty");
    Ok(EpsSweep {
        report,
        interior_minimum: argmin > 0 && argmin + 1 < rows.len(),
        rows,
        log_constant,
        argmin,
    })
}

/// Decay-weighted terminal energy against a ball observation and an exponential prior.
///
/// `shape_c` stands in for the unknown dimensional constant inside the exponent.
#[allow(clippy::too_many_arguments)]
pub fn decay_weight_report_15(
    u0: &Field,
    x0: [f64; 2],
    x1: [f64; 2],
    r: f64,
    a: f64,
    b: f64,
    t: f64,
    shape_c: f64,
    eps: &[f64],
) -> Result<EpsSweep> {
    if !(r > 0.0 && a > 0.0 && b > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("r, a, b and T must be positive".into()));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
        return Err(Error::InvalidArgument("epsilon must lie in (0,1)".into()));
    }
    let ut = propagate(u0, t);
    let lhs = weighted_energy(&ut, &Weight::decay(b, x1))?;
    let prior = weighted_energy(u0, &Weight::exponential(a))?;
    let obs = masked_energy(&ut, &Region::ball(x0, r));
    let kappa = shape_c / (b * (a * t).min(r));
    let mut validity = Validity::of(u0);
    validity.weight_cap_ok = !prior.capped;
    let rep = InequalityReport::new(
        "decay-weight-15",
        lhs.value,
        vec![("observation", obs), ("prior", prior.value)],
        validity,
    )
    .with_params(&[("r", r), ("a", a), ("b", b), ("T", t)])
    .with_derived(&[("kappa", kappa)]);
    let (lp, lo) = (safe_ln(prior.value), safe_ln(obs));
    sweep(rep, eps, |e| {
        log_add(e.ln() + lp, e.ln() + e.powf(-1.0 - kappa) + lo)
    })
}

/// Smallest epsilon for which the double-exponential factor stays representable.
pub const MIN_EPS_DOUBLE_EXP: f64 = 0.3;

/// Full-energy recovery with exponential and Sobolev priors against a ball observation.
pub fn sobolev_prior_report_16(
    u0: &Field,
    x0: [f64; 2],
    r: f64,
    a: f64,
    t: f64,
    eps: &[f64],
) -> Result<EpsSweep> {
    if !(r > 0.0 && a > 0.0 && t > 0.0) {
        return Err(Error::InvalidArgument("r, a and T must be positive".into()));
    }
    if eps.iter().any(|&e| !(MIN_EPS_DOUBLE_EXP..1.0).contains(&e)) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must lie in [{MIN_EPS_DOUBLE_EXP}, 1) for the double-exponential factor"
        )));
    }
    let n = u0.grid().dim() as f64;
    let ut = propagate(u0, t);
    let obs = masked_energy(&ut, &Region::ball(x0, r));
    let prior = weighted_energy(u0, &Weight::exponential(a))?;
    let sob = sobolev_norm_sq(u0, n + 3.0);
    let mut validity = Validity::of(u0);
    validity.weight_cap_ok = !prior.capped;
    let rep = InequalityReport::new(
        "sobolev-prior-16",
        l2_norm_sq(u0),
        vec![("observation", obs), ("prior", prior.value), ("sobolev", sob)],
        validity,
    )
    .with_params(&[("r", r), ("a", a), ("T", t)])
    .with_derived(&[("log_time_factor", (2.0 * n + 6.0) * (1.0 + t).ln())]);
    let (lp, lo) = (safe_ln(prior.value + sob), safe_ln(obs));
    sweep(rep, eps, |e| log_add(e.ln() + lp, e.ln() + e.powi(-2).exp() + lo))
}

/// Band-limited field with iid standard complex Gaussian coefficients on `B_N(0)`.
pub fn bandlimited_sample(grid: Grid, n_band: f64, seed: u64) -> Result<Field> {
    check_band(&grid, n_band)?;
    let ball = Region::centered_ball(n_band);
    let coeffs = random_vector(grid.len(), seed);
    let values = (0..grid.len())
        .map(|i| {
            if ball.contains(grid.freq_point(i)) {
                coeffs[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    let f = idft(&crate::transform::SpectralField::new(grid, values)?);
    let n = l2_norm(&f);
    if n == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "no frequency nodes inside B_N with N = {n_band}"
        )));
    }
    Ok(f.scale(Complex64::new(1.0 / n, 0.0)))
}

fn check_band(grid: &Grid, n_band: f64) -> Result<()> {
    if !(n_band > 0.0) {
        return Err(Error::InvalidArgument(format!("band radius must be positive, got {n_band}")));
    }
    if n_band >= grid.nyquist() {
        return Err(Error::Nyquist {
            what: "band radius N".into(),
            value: n_band,
            limit: grid.nyquist(),
        });
    }
    Ok(())
}

/// Orthogonal projection onto fields with spectrum in `B_N(0)`.
pub fn band_project(f: &Field, n_band: f64) -> Field {
    let ball = Region::centered_ball(n_band);
    let g = *f.grid();
    let spec = dft(f);
    let mask = ball.spectral_mask(&g);
    let v: Vec<Complex64> = spec.values().iter().zip(&mask).map(|(a, m)| a * m).collect();
    idft(&crate::transform::SpectralField::new(g, v).expect("same grid"))
}

/// `||f||^2 / int_{B_r^c} |f|^2` for the projection of `f` onto `B_N(0)` frequencies.
pub fn spectral_inequality_report(f: &Field, r: f64, n_band: f64) -> Result<InequalityReport> {
    check_band(f.grid(), n_band)?;
    if r < 0.0 {
        return Err(Error::InvalidArgument(format!("radius must be nonnegative, got {r}")));
    }
    let fb = band_project(f, n_band);
    let total = l2_norm_sq(&fb);
    let outside = masked_energy(&fb, &Region::centered_complement(r));
    if total > 0.0 && outside < 1e-300 {
        return Err(Error::InvalidArgument(
            "band-limited field vanishes outside the ball to working precision".into(),
        ));
    }
    let ratio = if outside > 0.0 { total / outside } else { 0.0 };
    let validity = Validity {
        zero_field: total == 0.0,
        ..Validity::of(&fb)
    };
    Ok(InequalityReport {
        tag: "spectral-inequality".into(),
        lhs: total,
        terms: vec![("outside".into(), outside)],
        quotient: ratio,
        params: vec![("r".into(), r), ("N".into(), n_band)],
        derived: vec![
            ("rN".into(), r * n_band),
            ("log_ratio".into(), if ratio > 0.0 { ratio.ln() } else { 0.0 }),
        ],
        validity,
    })
}

/// Worst-case spectral ratio `1/(1 - mu)` with `mu` the top eigenvalue of the
/// band-limited ball-concentration operator `P_N chi_{B_r} P_N`.
pub fn concentration_extremum(grid: Grid, r: f64, n_band: f64, opts: LanczosOptions) -> Result<(f64, Field)> {
    check_band(&grid, n_band)?;
    let mask = Region::centered_ball(r).indicator_mask(&grid);
    let apply = |v: &[Complex64]| -> Vec<Complex64> {
        let f = band_project(&Field::from_raw(grid, v.to_vec()), n_band);
        band_project(&f.mul_real(&mask), n_band).into_values()
    };
    let ip = WeightedInner::uniform(grid.cell_volume());
    let ep = lanczos(
        &apply,
        &ip,
        grid.len(),
        LanczosOptions {
            which: Extremal::Largest,
            ..opts
        },
    )?;
    let mu = ep.value.clamp(0.0, 1.0);
    Ok((1.0 / (1.0 - mu), Field::from_raw(grid, ep.vector)))
}

/// `int |x|^p |f|^2`.
pub fn moment(f: &Field, p: f64) -> f64 {
    let g = f.grid();
    g.cell_volume()
        * f.values()
            .iter()
            .enumerate()
            .map(|(i, v)| norm_point(g.point(i)).powf(p) * v.norm_sqr())
            .sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub t: f64,
    pub k: u32,
    pub lhs: f64,
    pub rhs_energy: f64,
    pub rhs_sobolev: f64,
    pub rhs_moment: f64,
    /// `lhs / ((1+T)^{2k} (||u0||^2_{H^{2k}} + int |x|^{4k}|u0|^2))`.
    pub needed_constant: f64,
    pub tail_ok: bool,
}

/// Weighted moment of the evolved state against the regularity and decay of the datum.
pub fn moment_check_34(u0: &Field, t: f64, k: u32) -> Result<MomentCheck> {
    if k != 1 && k != 2 {
        return Err(Error::InvalidArgument(format!("k must be 1 or 2, got {k}")));
    }
    if t < 0.0 {
        return Err(Error::InvalidArgument(format!("T must be nonnegative, got {t}")));
    }
    let ut = propagate(u0, t);
    let lhs = moment(&ut, 2.0 * k as f64);
    let sob = sobolev_norm_sq(u0, 2.0 * k as f64);
    let mom = moment(u0, 4.0 * k as f64);
    Ok(MomentCheck {
        t,
        k,
        lhs,
        rhs_energy: l2_norm_sq(u0),
        rhs_sobolev: sob,
        rhs_moment: mom,
        needed_constant: lhs / ((1.0 + t).powi(2 * k as i32) * (sob + mom)),
        tail_ok: tail_fraction(&ut) <= DEFAULT_TAIL_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EulerCheck {
    pub a: f64,
    pub beta: Vec<u32>,
    pub integral: f64,
    /// Smallest `C` for which the bound holds at this `(a, beta)`; 0 when `|beta| = 0`.
    pub needed_constant: f64,
    /// Whether the `C`-independent part of the bound already holds for `|beta| = 0`.
    pub base_holds: bool,
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `int_{R^n} |xi^{2 beta}| e^{-a|xi|} dxi`: Gamma reduction in 1D, radial quadrature in 2D.
pub fn euler_integral(a: f64, beta: &[u32]) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::InvalidArgument(format!("a must be positive, got {a}")));
    }
    match beta {
        [b] => Ok(2.0 * factorial(2 * b) / a.powi(2 * *b as i32 + 1)),
        [b1, b2] => {
            let s = b1 + b2;
            let radial = factorial(2 * s + 1) / a.powi(2 * s as i32 + 2);
            // periodic trapezoid on the circle is spectrally accurate for trigonometric polynomials
            let nq = 512;
            let ang: f64 = (0..nq)
                .map(|j| {
                    let th = 2.0 * PI * j as f64 / nq as f64;
                    th.cos().powi(2 * *b1 as i32) * th.sin().powi(2 * *b2 as i32)
                })
                .sum::<f64>()
                * (2.0 * PI / nq as f64);
            Ok(radial * ang)
        }
        _ => Err(Error::InvalidArgument("beta must have 1 or 2 components".into())),
    }
}

/// Right side `(2n/a)^{n/2} beta! (C n / a)^{|beta|}`.
pub fn euler_bound(a: f64, beta: &[u32], c: f64) -> f64 {
    let n = beta.len() as f64;
    let s: u32 = beta.iter().sum();
    let bf: f64 = beta.iter().map(|&b| factorial(b)).product();
    (2.0 * n / a).powf(n / 2.0) * bf * (c * n / a).powi(s as i32)
}

pub fn euler_bound_check(a: f64, beta: &[u32]) -> Result<EulerCheck> {
    let s: u32 = beta.iter().sum();
    if s > 4 {
        return Err(Error::InvalidArgument(format!("|beta| must be at most 4, got {s}")));
    }
    let integral = euler_integral(a, beta)?;
    let n = beta.len() as f64;
    let base = euler_bound(a, beta, 1.0) / (1.0 / a * n).powi(s as i32);
    let needed = if s == 0 {
        0.0
    } else {
        (a / n) * (integral.sqrt() / base).powf(1.0 / s as f64)
    };
    Ok(EulerCheck {
        a,
        beta: beta.to_vec(),
        integral,
        needed_constant: needed,
        base_holds: s > 0 || integral.sqrt() <= base * (1.0 + 1e-12),
    })
}
