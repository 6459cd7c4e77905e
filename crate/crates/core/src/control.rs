//! Impulse control synthesis through the penalised quadratic dual.
//!
//! An impulse `delta(t - tau) chi_omega h` in `i u_t + Delta u = ...` makes the state jump by
//! `u(tau+) = u(tau-) + KAPPA chi_omega h` with `KAPPA = -i`. The dual variable `z` lives in a
//! space `Z` whose Gram operator `W` defines the terminal error norm (the dual norm uses
//! `W^{-1}`). The minimiser of
//! `J(z) = C0/2 ||O z||^2 + eps0/2 ||z||_Z^2 - Re <R z, f>`
//! solves `(C0 O' O + eps0) z = R' f` where `'` is the adjoint in the `Z` geometry, and
//! `y = C0 O z` is the control in the observation pairing.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{l2_norm, l2_norm_sq, Field, Grid, Region, Weight};
use crate::inequalities::{fit_affine, FitResult};
use crate::linalg::{
    conjugate_gradient, lanczos, CgOptions, Extremal, InnerProduct, LanczosOptions, Vector,
};
use crate::transform::{dft, dual_solve, idft, propagate, SpectralField};

/// Jump constant of the impulse convention.
pub const KAPPA: Complex64 = Complex64 { re: 0.0, im: -1.0 };

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Impulse {
    pub time: f64,
    pub region: Region,
}

/// Space of the dual variable; fixes the norm of the terminal error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ErrorNorm {
    L2,
    /// Dual variables supported in `B_N(0)`; the error is measured on `B_N(0)` only.
    Restricted { radius: f64 },
    /// `Z` weighted by `e^{a|x|}`, error weighted by `e^{-a|x|}`.
    DualWeighted { a: f64 },
    /// `Z` with Gram operator `E^{1/2} S E^{1/2}`, `E = e^{a|x|}`, `S = (1+|xi|^2)^{n+3}`.
    Sobolev { a: f64 },
}

/// Transformation `R : Z -> X` paired against the datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Reach {
    /// `R z = z`, datum `f = u_T - e^{iT Delta} u0`.
    Identity,
    /// `R z = chi phi(0; T, z)` (all of space when `region` is `None`); null target,
    /// datum `f = chi u0`.
    Backward { region: Option<Region> },
}

/// Norm of `X`, the space containing `R z`; the datum is measured in the dual norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DatumNorm {
    L2,
    /// `||g||_X^2 = int e^{-b|x-c|} |g|^2`, so `||f||_{X*}^2 = int e^{b|x-c|} |f|^2`.
    DecayWeighted { b: f64, center: [f64; 2] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum C0Choice {
    Fixed(f64),
    /// Smallest `C0` making `||Rz||_X^2 <= C0 ||Oz||^2 + eps0 ||z||_Z^2`, times `1 + margin`.
    Calibrated { margin: f64 },
}

#[derive(Debug, Clone)]
pub struct ImpulseProblem {
    pub horizon: f64,
    pub impulses: Vec<Impulse>,
    pub u0: Field,
    /// `None` for null control.
    pub target: Option<Field>,
    pub reach: Reach,
    pub error_norm: ErrorNorm,
    pub datum_norm: DatumNorm,
    pub eps0: f64,
    pub c0: C0Choice,
    pub cg: CgOptions,
    pub lanczos: LanczosOptions,
}

impl ImpulseProblem {
    /// Tracking problem with `L2` norms, identity transformation and calibrated `C0`.
    pub fn tracking(horizon: f64, impulses: Vec<Impulse>, u0: Field, target: Field, eps0: f64) -> Self {
        Self {
            horizon,
            impulses,
            u0,
            target: Some(target),
            reach: Reach::Identity,
            error_norm: ErrorNorm::L2,
            datum_norm: DatumNorm::L2,
            eps0,
            c0: C0Choice::Calibrated { margin: 1e-3 },
            cg: CgOptions::default(),
            lanczos: LanczosOptions {
                max_iter: 2000,
                tol: 1e-10,
                ..LanczosOptions::default()
            },
        }
    }

    pub fn grid(&self) -> Grid {
        *self.u0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon;
        if !(t > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {t}")));
        }
        if self.impulses.is_empty() || self.impulses.len() > 2 {
            return Err(Error::InvalidArgument("one or two impulses required".into()));
        }
        for (i, imp) in self.impulses.iter().enumerate() {
            imp.region.validate()?;
            if !(0.0..=t).contains(&imp.time) {
                return Err(Error::InvalidArgument(format!(
                    "impulse time {} outside [0, {t}]",
                    imp.time
                )));
            }
            if i > 0 && imp.time <= self.impulses[i - 1].time {
                return Err(Error::InvalidArgument("impulse times must be strictly increasing".into()));
            }
        }
        if !(self.eps0 > 0.0) {
            return Err(Error::InvalidArgument(format!("eps0 must be positive, got {}", self.eps0)));
        }
        match self.c0 {
            C0Choice::Fixed(c) if !(c > 0.0) => {
                return Err(Error::InvalidArgument(format!("C0 must be positive, got {c}")))
            }
            C0Choice::Calibrated { margin } if !(margin >= 0.0) => {
                return Err(Error::InvalidArgument("calibration margin must be nonnegative".into()))
            }
            _ => {}
        }
        if let Some(ut) = &self.target {
            if ut.grid() != self.u0.grid() {
                return Err(Error::GridMismatch);
            }
        }
        if let Reach::Backward { region } = self.reach {
            if self.target.is_some() {
                return Err(Error::InvalidArgument(
                    "backward transformation is only defined for null control".into(),
                ));
            }
            if let Some(r) = region {
                r.validate()?;
            }
        }
        match self.error_norm {
            ErrorNorm::Restricted { radius } if !(radius > 0.0) => {
                return Err(Error::InvalidArgument("restriction radius must be positive".into()))
            }
            ErrorNorm::DualWeighted { a } | ErrorNorm::Sobolev { a } if !(a > 0.0) => {
                return Err(Error::InvalidArgument("weight exponent a must be positive".into()))
            }
            _ => {}
        }
        if matches!(self.error_norm, ErrorNorm::Restricted { .. }) && self.reach != Reach::Identity {
            return Err(Error::InvalidArgument(
                "restricted error norm requires the identity transformation".into(),
            ));
        }
        if let DatumNorm::DecayWeighted { b, .. } = self.datum_norm {
            if !(b > 0.0) {
                return Err(Error::InvalidArgument("decay rate b must be positive".into()));
            }
        }
        Ok(())
    }

    /// Initial state actually used: masked to the transformation region for null control.
    pub fn effective_u0(&self) -> Field {
        match self.reach {
            Reach::Backward { region: Some(r) } => self.u0.mask(&r),
            _ => self.u0.clone(),
        }
    }

    /// Datum paired against `R z`.
    pub fn datum(&self) -> Field {
        match (&self.reach, &self.target) {
            (Reach::Identity, Some(ut)) => ut.sub(&propagate(&self.u0, self.horizon)).expect("same grid"),
            (Reach::Identity, None) => propagate(&self.u0, self.horizon).scale(Complex64::new(-1.0, 0.0)),
            (Reach::Backward { .. }, _) => self.effective_u0(),
        }
    }

    /// `+1` when `KAPPA h = y`, `-1` when `KAPPA h = -y`.
    fn control_sign(&self) -> f64 {
        match self.reach {
            Reach::Identity => 1.0,
            Reach::Backward { .. } => -1.0,
        }
    }
}

/// Gram operator of `Z` on a grid.
#[derive(Debug, Clone)]
pub struct Geometry {
    grid: Grid,
    norm: ErrorNorm,
    /// Diagonal weight, or its square root for the Sobolev geometry; the projector for the
    /// restricted geometry.
    diag: Option<Vec<f64>>,
    /// Multiplier `(1+|xi|^2)^{n+3}` on the frequency lattice.
    multiplier: Option<Vec<f64>>,
}

impl Geometry {
    pub fn new(grid: Grid, norm: ErrorNorm) -> Result<Self> {
        let exp_weight = |a: f64| -> Result<Vec<f64>> {
            let (w, capped) = Weight::exponential(a).values(&grid);
            if capped {
                return Err(Error::Overflow(format!("e^(a|x|) with a = {a} exceeds the exponent cap")));
            }
            Ok(w)
        };
        let (diag, multiplier) = match norm {
            ErrorNorm::L2 => (None, None),
            ErrorNorm::Restricted { radius } => {
                (Some(Region::centered_ball(radius).indicator_mask(&grid)), None)
            }
            ErrorNorm::DualWeighted { a } => (Some(exp_weight(a)?), None),
            ErrorNorm::Sobolev { a } => {
                let s = grid.dim() as f64 + 3.0;
                let mult = (0..grid.len())
                    .map(|i| {
                        let p = grid.freq_point(i);
                        (1.0 + p[0] * p[0] + p[1] * p[1]).powf(s)
                    })
                    .collect();
                (Some(exp_weight(a / 2.0)?), Some(mult))
            }
        };
        Ok(Self {
            grid,
            norm,
            diag,
            multiplier,
        })
    }

    fn spectral(&self, v: &[Complex64], inverse: bool) -> Vector {
        let m = self.multiplier.as_ref().expect("sobolev multiplier");
        let spec = dft(&Field::from_raw(self.grid, v.to_vec()));
        let scaled: Vec<Complex64> = spec
            .values()
            .iter()
            .zip(m)
            .map(|(a, s)| if inverse { a / s } else { a * s })
            .collect();
        idft(&SpectralField::new(self.grid, scaled).expect("same grid")).into_values()
    }

    /// `W v`.
    pub fn weight(&self, v: &[Complex64]) -> Vector {
        match (&self.norm, &self.diag) {
            (ErrorNorm::L2, _) => v.to_vec(),
            (ErrorNorm::Sobolev { .. }, Some(e)) => {
                let a: Vector = v.iter().zip(e).map(|(x, w)| x * w).collect();
                self.spectral(&a, false).into_iter().zip(e).map(|(x, w)| x * w).collect()
            }
            (_, Some(d)) => v.iter().zip(d).map(|(x, w)| x * w).collect(),
            (_, None) => unreachable!("diagonal geometry without weights"),
        }
    }

    /// `P W^{-1} v`; for the restricted geometry this is the projector.
    pub fn weight_inv(&self, v: &[Complex64]) -> Vector {
        match (&self.norm, &self.diag) {
            (ErrorNorm::L2, _) => v.to_vec(),
            (ErrorNorm::Restricted { .. }, Some(p)) => v.iter().zip(p).map(|(x, w)| x * w).collect(),
            (ErrorNorm::Sobolev { .. }, Some(e)) => {
                let a: Vector = v.iter().zip(e).map(|(x, w)| x / w).collect();
                self.spectral(&a, true).into_iter().zip(e).map(|(x, w)| x / w).collect()
            }
            (_, Some(d)) => v.iter().zip(d).map(|(x, w)| x / w).collect(),
            (_, None) => unreachable!("diagonal geometry without weights"),
        }
    }

    /// Projection onto the admissible dual variables.
    pub fn project(&self, v: &[Complex64]) -> Vector {
        match (&self.norm, &self.diag) {
            (ErrorNorm::Restricted { .. }, Some(p)) => v.iter().zip(p).map(|(x, w)| x * w).collect(),
            _ => v.to_vec(),
        }
    }

    /// Squared dual norm `<W^{-1} e, e>`.
    pub fn dual_norm_sq(&self, e: &[Complex64]) -> f64 {
        let w = self.weight_inv(e);
        self.grid.cell_volume() * w.iter().zip(e).map(|(a, b)| (a * b.conj()).re).sum::<f64>()
    }
}

impl InnerProduct for Geometry {
    fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let wa = self.weight(a);
        self.grid.cell_volume() * wa.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>()
    }
}

/// `O z = (chi_{omega_i} phi(tau_i; T, z))_i`.
pub fn observation_map(z: &Field, p: &ImpulseProblem) -> Result<Vec<Field>> {
    p.impulses
        .iter()
        .map(|imp| Ok(dual_solve(z, p.horizon, imp.time)?.mask(&imp.region)))
        .collect()
}

/// Exact grid `L2` adjoint of [`observation_map`].
pub fn observation_adjoint(h: &[Field], p: &ImpulseProblem) -> Result<Field> {
    if h.len() != p.impulses.len() {
        return Err(Error::InvalidArgument("one field per impulse required".into()));
    }
    let mut acc = Field::zeros(p.grid());
    for (hi, imp) in h.iter().zip(&p.impulses) {
        acc = acc.add(&propagate(&hi.mask(&imp.region), p.horizon - imp.time))?;
    }
    Ok(acc)
}

/// Terminal state `u(T; 0, h)` produced by the impulses: `observation_adjoint(KAPPA h)`.
pub fn control_map(h: &[Field], p: &ImpulseProblem) -> Result<Field> {
    let kh: Vec<Field> = h.iter().map(|f| f.scale(KAPPA)).collect();
    observation_adjoint(&kh, p)
}

/// `R z`.
pub fn reach_apply(z: &Field, p: &ImpulseProblem) -> Field {
    match p.reach {
        Reach::Identity => z.clone(),
        Reach::Backward { region } => {
            let b = propagate(z, -p.horizon);
            match region {
                Some(r) => b.mask(&r),
                None => b,
            }
        }
    }
}

/// Grid `L2` adjoint of [`reach_apply`].
pub fn reach_transpose(f: &Field, p: &ImpulseProblem) -> Field {
    match p.reach {
        Reach::Identity => f.clone(),
        Reach::Backward { region } => {
            let m = match region {
                Some(r) => f.mask(&r),
                None => f.clone(),
            };
            propagate(&m, p.horizon)
        }
    }
}

/// `(R z, R' f)` with `R'` the adjoint in the `Z` geometry.
pub fn reachability_map(z: &Field, f: &Field, p: &ImpulseProblem) -> Result<(Field, Field)> {
    let geo = Geometry::new(p.grid(), p.error_norm)?;
    let rz = reach_apply(&Field::from_raw(p.grid(), geo.project(z.values())), p);
    let rf = geo.weight_inv(reach_transpose(f, p).values());
    Ok((rz, Field::from_raw(p.grid(), rf)))
}

/// Adjoint of [`observation_map`] in the `Z` geometry.
pub fn observation_adjoint_z(h: &[Field], p: &ImpulseProblem, geo: &Geometry) -> Result<Field> {
    let t = observation_adjoint(h, p)?;
    Ok(Field::from_raw(p.grid(), geo.weight_inv(t.values())))
}

fn datum_weights(p: &ImpulseProblem) -> Result<Option<Vec<f64>>> {
    match p.datum_norm {
        DatumNorm::L2 => Ok(None),
        DatumNorm::DecayWeighted { b, center } => Ok(Some(Weight::decay(b, center).values(&p.grid()).0)),
    }
}

/// `||f||^2` in the dual of the datum space.
pub fn datum_norm_sq(f: &Field, p: &ImpulseProblem) -> Result<f64> {
    Ok(match datum_weights(p)? {
        None => l2_norm_sq(f),
        Some(d) => {
            f.grid().cell_volume()
                * f.values().iter().zip(&d).map(|(v, w)| v.norm_sqr() / w).sum::<f64>()
        }
    })
}

struct Operators<'a> {
    p: &'a ImpulseProblem,
    geo: Geometry,
    datum_w: Option<Vec<f64>>,
}

impl<'a> Operators<'a> {
    fn new(p: &'a ImpulseProblem) -> Result<Self> {
        Ok(Self {
            p,
            geo: Geometry::new(p.grid(), p.error_norm)?,
            datum_w: datum_weights(p)?,
        })
    }

    fn field(&self, v: &[Complex64]) -> Field {
        Field::from_raw(self.p.grid(), v.to_vec())
    }

    /// `O' O z` on the projected input.
    fn gram(&self, z: &[Complex64]) -> Vector {
        let pz = self.field(&self.geo.project(z));
        let oz = observation_map(&pz, self.p).expect("validated problem");
        let t = observation_adjoint(&oz, self.p).expect("validated problem");
        self.geo.weight_inv(t.values())
    }

    /// `R' D R z`.
    fn reach_gram(&self, z: &[Complex64]) -> Vector {
        let pz = self.field(&self.geo.project(z));
        let mut rz = reach_apply(&pz, self.p);
        if let Some(d) = &self.datum_w {
            rz = rz.mul_real(d);
        }
        self.geo.weight_inv(reach_transpose(&rz, self.p).values())
    }

    fn normal(&self, z: &[Complex64], c0: f64) -> Vector {
        self.gram(z)
            .into_iter()
            .zip(z)
            .map(|(g, zi)| g * c0 + zi * self.p.eps0)
            .collect()
    }

    /// Smallest eigenvalue of `C0 O'O + eps0 - R'DR`.
    fn margin(&self, c0: f64) -> Result<f64> {
        let apply = |z: &[Complex64]| -> Vector {
            let g = self.gram(z);
            let r = self.reach_gram(z);
            g.into_iter()
                .zip(r)
                .zip(z)
                .map(|((g, r), zi)| g * c0 - r + zi * self.p.eps0)
                .collect()
        };
        let opts = LanczosOptions {
            which: Extremal::Smallest,
            tol: (self.p.lanczos.tol * self.p.eps0).max(1e-14 * (1.0 + c0)),
            ..self.p.lanczos
        };
        Ok(lanczos(&apply, &self.geo, self.p.grid().len(), opts)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    /// Constant used by the solver.
    pub c0: f64,
    /// Bracketed critical constant.
    pub critical: f64,
    /// Smallest eigenvalue of `C0 O'O + eps0 - R'DR` at the chosen `C0`.
    pub margin_eigenvalue: f64,
    pub evaluations: usize,
}

const C0_MIN: f64 = 1e-12;
const C0_MAX: f64 = 1e16;

/// Smallest admissible `C0` for the penalised observability estimate, by bisection in `log C0`.
pub fn calibrate_c0(p: &ImpulseProblem, margin: f64) -> Result<Calibration> {
    p.validate()?;
    let ops = Operators::new(p)?;
    let mut evals = 0;
    let mut ok = |c: f64| -> Result<bool> {
        evals += 1;
        Ok(ops.margin(c)? >= 0.0)
    };
    let (mut lo, mut hi);
    if ok(1.0)? {
        hi = 1.0;
        lo = 0.1;
        while ok(lo)? {
            hi = lo;
            lo /= 10.0;
            if lo < C0_MIN {
                lo = 0.0;
                break;
            }
        }
    } else {
        lo = 1.0;
        hi = 10.0;
        while !ok(hi)? {
            lo = hi;
            hi *= 10.0;
            if hi > C0_MAX {
                return Err(Error::Infeasible(format!(
                    "no C0 below {C0_MAX:e} works at eps0 = {}; eps0 is too small for this grid",
                    p.eps0
                )));
            }
        }
    }
    while lo > 0.0 && hi / lo > 1.0 + 1e-6 {
        let mid = (lo * hi).sqrt();
        if ok(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let critical = hi.max(C0_MIN);
    let c0 = critical * (1.0 + margin);
    let margin_eigenvalue = ops.margin(c0)?;
    Ok(Calibration {
        c0,
        critical,
        margin_eigenvalue,
        evaluations: evals + 1,
    })
}

#[derive(Debug, Clone)]
pub struct ControlSolution {
    /// Physical impulse amplitudes `h_i`.
    pub controls: Vec<Field>,
    pub dual: Field,
    pub terminal_state: Field,
    /// Terminal error in the dual norm of `Z`.
    pub terminal_error: f64,
    pub terminal_error_l2: f64,
    /// `sum ||h_i||^2`.
    pub cost: f64,
    pub datum_norm_sq: f64,
    pub c0: f64,
    pub eps0: f64,
    pub calibration: Option<Calibration>,
    pub cg_iterations: usize,
    pub cg_residual: f64,
    pub cg_trace: Vec<f64>,
    /// `||R'f - O'y - eps0 z||_Z / ||R'f||_Z`.
    pub duality_residual: f64,
    /// `cost / C0 + terminal_error^2 / eps0`.
    pub bound_lhs: f64,
}

impl ControlSolution {
    /// `bound_lhs / ||f||^2`, or 0 for a vanishing datum.
    pub fn bound_ratio(&self) -> f64 {
        if self.datum_norm_sq > 0.0 {
            self.bound_lhs / self.datum_norm_sq
        } else {
            0.0
        }
    }
}

/// Minimises the penalised dual functional by conjugate gradients and synthesises controls.
pub fn solve_control(p: &ImpulseProblem) -> Result<ControlSolution> {
    p.validate()?;
    let grid = p.grid();
    let ops = Operators::new(p)?;
    let (c0, calibration) = match p.c0 {
        C0Choice::Fixed(c) => (c, None),
        C0Choice::Calibrated { margin } => {
            let cal = calibrate_c0(p, margin)?;
            (cal.c0, Some(cal))
        }
    };
    let f = p.datum();
    let b = ops.geo.weight_inv(reach_transpose(&f, p).values());
    let out = conjugate_gradient(&|z| ops.normal(z, c0), &ops.geo, &b, p.cg)?;
    let z = Field::from_raw(grid, out.x);
    let y: Vec<Field> = observation_map(&z, p)?
        .into_iter()
        .map(|o| o.scale(Complex64::new(c0, 0.0)))
        .collect();
    let factor = KAPPA.conj() * p.control_sign();
    let controls: Vec<Field> = y.iter().map(|yi| yi.scale(factor)).collect();
    let terminal_state = propagate(&p.effective_u0(), p.horizon).add(&control_map(&controls, p)?)?;
    let err = match &p.target {
        Some(ut) => terminal_state.sub(ut)?,
        None => terminal_state.clone(),
    };
    let terminal_error = ops.geo.dual_norm_sq(err.values()).max(0.0).sqrt();
    let cost: f64 = controls.iter().map(l2_norm_sq).sum();
    let oy = observation_adjoint_z(&y, p, &ops.geo)?;
    let dres: Vector = b
        .iter()
        .zip(oy.values())
        .zip(z.values())
        .map(|((bi, oi), zi)| bi - oi - zi * p.eps0)
        .collect();
    let bn = ops.geo.norm(&b);
    Ok(ControlSolution {
        terminal_error_l2: l2_norm(&err),
        terminal_state,
        terminal_error,
        cost,
        datum_norm_sq: datum_norm_sq(&f, p)?,
        c0,
        eps0: p.eps0,
        calibration,
        cg_iterations: out.iterations,
        cg_residual: out.residual,
        cg_trace: out.trace,
        duality_residual: if bn > 0.0 { ops.geo.norm(&dres) / bn } else { 0.0 },
        bound_lhs: cost / c0 + terminal_error * terminal_error / p.eps0,
        controls,
        dual: z,
    })
}

/// Six reference configurations on a one-dimensional grid, one per supported combination of
/// error norm, transformation and datum norm, with `eps0` chosen so calibration stays moderate.
pub fn reference_variants(grid: Grid) -> Vec<(&'static str, ImpulseProblem)> {
    let gauss = |c: f64| Field::from_fn(grid, move |p| Complex64::new((-(p[0] - c).powi(2) / 2.0).exp(), 0.0));
    let track = |imps, eps0| ImpulseProblem::tracking(1.0, imps, gauss(-1.0), gauss(1.0), eps0);
    let outside = |time| Impulse { time, region: Region::centered_complement(2.0) };
    let inside = |c: f64, r| Impulse { time: 0.0, region: Region::ball([c, 0.0], r) };
    let two_impulse = track(vec![outside(0.0), outside(1.0)], 1e-6);
    let weighted = ImpulseProblem {
        error_norm: ErrorNorm::DualWeighted { a: 1.0 },
        ..track(vec![outside(0.0)], 0.2)
    };
    let two_ball = ImpulseProblem {
        u0: gauss(1.0),
        target: None,
        reach: Reach::Backward { region: Some(Region::ball([1.0, 0.0], 1.0)) },
        error_norm: ErrorNorm::DualWeighted { a: 1.0 },
        ..track(vec![inside(-1.0, 2.0)], 0.05)
    };
    let restricted = ImpulseProblem {
        error_norm: ErrorNorm::Restricted { radius: 4.0 },
        ..track(vec![outside(0.0)], 1e-4)
    };
    let decay = ImpulseProblem {
        target: None,
        reach: Reach::Backward { region: None },
        error_norm: ErrorNorm::DualWeighted { a: 1.0 },
        datum_norm: DatumNorm::DecayWeighted { b: 1.0, center: [0.0, 0.0] },
        ..track(vec![inside(0.0, 2.0)], 0.05)
    };
    let sobolev = ImpulseProblem {
        error_norm: ErrorNorm::Sobolev { a: 1.0 },
        ..track(vec![inside(0.0, 2.0)], 0.05)
    };
    vec![
        ("two-impulse", two_impulse),
        ("weighted-error", weighted),
        ("two-ball-null", two_ball),
        ("restricted-error", restricted),
        ("decay-datum-null", decay),
        ("sobolev-error", sobolev),
    ]
}

/// Two-impulse configuration swept by [`cost_scaling_study`].
#[derive(Debug, Clone)]
pub struct CostScalingBase {
    /// Datum `f`; the study steers `0` to `f`.
    pub datum: Field,
    pub centers: [[f64; 2]; 2],
    pub eps0: f64,
    pub margin: f64,
    /// Relative terminal `L2` error a run must reach to enter the fit.
    pub error_target: f64,
    pub cg: CgOptions,
    pub lanczos: LanczosOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostRow {
    pub gap: f64,
    pub r1: f64,
    pub r2: f64,
    /// `sum ||h_i||^2 / ||f||^2`.
    pub cost_ratio: f64,
    pub relative_error: f64,
    pub c0: f64,
    pub cg_iterations: usize,
    pub ok: bool,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostScaling {
    pub rows: Vec<CostRow>,
    /// `log cost` against `r1 r2 / gap` over accepted rows with `r1 r2 > 0`.
    pub fit: Option<FitResult>,
}

impl CostScaling {
    /// Fit restricted to one radius pair.
    pub fn fit_for(&self, r1: f64, r2: f64) -> Option<FitResult> {
        fit_rows(self.rows.iter().filter(|r| r.r1 == r1 && r.r2 == r2))
    }
}

fn fit_rows<'a>(rows: impl Iterator<Item = &'a CostRow>) -> Option<FitResult> {
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .filter(|r| r.ok && r.r1 * r.r2 > 0.0 && r.cost_ratio > 0.0)
        .map(|r| (r.r1 * r.r2 / r.gap, r.cost_ratio.ln()))
        .unzip();
    fit_affine("log-affine", &x, &y).ok()
}

impl CostScalingBase {
    pub fn problem(&self, gap: f64, r1: f64, r2: f64) -> ImpulseProblem {
        let g = *self.datum.grid();
        let imp = |time, c: [f64; 2], r: f64| Impulse {
            time,
            region: Region::ball_complement(c, r),
        };
        ImpulseProblem {
            cg: self.cg,
            lanczos: self.lanczos,
            c0: C0Choice::Calibrated { margin: self.margin },
            ..ImpulseProblem::tracking(
                gap,
                vec![imp(0.0, self.centers[0], r1), imp(gap, self.centers[1], r2)],
                Field::zeros(g),
                self.datum.clone(),
                self.eps0,
            )
        }
    }
}

/// Control cost along a sweep of time gaps and radius pairs.
pub fn cost_scaling_study(base: &CostScalingBase, gaps: &[f64], radii: &[(f64, f64)]) -> Result<CostScaling> {
    let fnorm = l2_norm_sq(&base.datum);
    if fnorm == 0.0 {
        return Err(Error::InvalidArgument("cost study needs a nonzero datum".into()));
    }
    let tuples: Vec<(f64, f64, f64)> = radii
        .iter()
        .flat_map(|&(r1, r2)| gaps.iter().map(move |&g| (g, r1, r2)))
        .collect();
    for &(g, r1, r2) in &tuples {
        if !(g > 0.0) || r1 < 0.0 || r2 < 0.0 {
            return Err(Error::InvalidArgument(format!("invalid tuple gap {g}, radii {r1}, {r2}")));
        }
    }
    let rows: Vec<CostRow> = tuples
        .par_iter()
        .map(|&(gap, r1, r2)| match solve_control(&base.problem(gap, r1, r2)) {
            Ok(s) => {
                let rel = s.terminal_error_l2 / fnorm.sqrt();
                CostRow {
                    gap,
                    r1,
                    r2,
                    cost_ratio: s.cost / fnorm,
                    relative_error: rel,
                    c0: s.c0,
                    cg_iterations: s.cg_iterations,
                    ok: rel <= base.error_target,
                    failure: (rel > base.error_target).then(|| format!("relative error {rel:e}")),
                }
            }
            Err(e) => CostRow {
                gap,
                r1,
                r2,
                cost_ratio: f64::NAN,
                relative_error: f64::NAN,
                c0: f64::NAN,
                cg_iterations: 0,
                ok: false,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    let fit = fit_rows(rows.iter());
    Ok(CostScaling { rows, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::dot;
    use crate::linalg::random_vector;
    use crate::transform::gaussian_oracle;

    fn grid() -> Grid {
        Grid::new(1, 10.0, 128).unwrap()
    }

    fn rand_field(g: Grid, seed: u64) -> Field {
        Field::new(g, random_vector(g.len(), seed)).unwrap()
    }

    fn two_impulse() -> ImpulseProblem {
        let g = grid();
        let u0 = gaussian_oracle(&g, 0.0, 1.0).unwrap();
        let ut = Field::from_fn(g, |p| Complex64::new((-(p[0] - 1.0).powi(2)).exp(), 0.0));
        ImpulseProblem::tracking(
            1.0,
            vec![
                Impulse { time: 0.0, region: Region::centered_complement(2.0) },
                Impulse { time: 1.0, region: Region::centered_complement(2.0) },
            ],
            u0,
            ut,
            1e-6,
        )
    }

    #[test]
    fn observation_basics() {
        let mut p = two_impulse();
        let g = grid();
        let zero = observation_map(&Field::zeros(g), &p).unwrap();
        assert!(zero.iter().all(|f| l2_norm(f) == 0.0));
        p.impulses = vec![Impulse { time: 1.0, region: Region::All }];
        let z = rand_field(g, 1);
        assert_eq!(observation_map(&z, &p).unwrap()[0], z);
        let p = two_impulse();
        let (z1, z2) = (rand_field(g, 2), rand_field(g, 3));
        let c = Complex64::new(0.3, -1.2);
        let lhs = observation_map(&z1.add(&z2.scale(c)).unwrap(), &p).unwrap();
        let a = observation_map(&z1, &p).unwrap();
        let b = observation_map(&z2, &p).unwrap();
        for i in 0..2 {
            let rhs = a[i].add(&b[i].scale(c)).unwrap();
            assert!(lhs[i].max_abs_diff(&rhs).unwrap() < 1e-12);
        }
    }

    #[test]
    fn control_map_single_impulse_at_zero() {
        let g = grid();
        let mut p = two_impulse();
        p.impulses = vec![Impulse { time: 0.0, region: Region::All }];
        let h = rand_field(g, 4);
        let got = control_map(std::slice::from_ref(&h), &p).unwrap();
        let direct = propagate(&h.scale(KAPPA), 1.0);
        assert!(got.max_abs_diff(&direct).unwrap() < 1e-13);
        assert_eq!(l2_norm(&control_map(&[Field::zeros(g)], &p).unwrap()), 0.0);
    }

    #[test]
    fn adjoint_pairs() {
        let g = grid();
        let p = two_impulse();
        for seed in 0..20 {
            let z = rand_field(g, seed);
            let h = vec![rand_field(g, seed + 100), rand_field(g, seed + 200)];
            let oz = observation_map(&z, &p).unwrap();
            let lhs: Complex64 = oz.iter().zip(&h).map(|(a, b)| dot(a, b).unwrap()).sum();
            let rhs = dot(&z, &observation_adjoint(&h, &p).unwrap()).unwrap();
            let scale = l2_norm(&z) * h.iter().map(l2_norm_sq).sum::<f64>().sqrt();
            assert!((lhs - rhs).norm() <= 1e-12 * scale);
            let phys = dot(&z, &control_map(&h, &p).unwrap()).unwrap();
            assert!((lhs - KAPPA * phys).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn reach_variants() {
        let g = grid();
        let mut p = two_impulse();
        let z = rand_field(g, 7);
        let f = rand_field(g, 8);
        let (rz, rf) = reachability_map(&z, &f, &p).unwrap();
        assert_eq!((rz, rf), (z.clone(), f.clone()));
        p.error_norm = ErrorNorm::Restricted { radius: 3.0 };
        let (_, rf) = reachability_map(&z, &f, &p).unwrap();
        assert_eq!(rf, f.mask(&Region::centered_ball(3.0)));
        p.error_norm = ErrorNorm::DualWeighted { a: 0.5 };
        p.target = None;
        p.reach = Reach::Backward { region: Some(Region::ball([1.0, 0.0], 2.0)) };
        let geo = Geometry::new(g, p.error_norm).unwrap();
        let (rz, rf) = reachability_map(&z, &f, &p).unwrap();
        let lhs = dot(&rz, &f).unwrap();
        let rhs = geo.inner(z.values(), rf.values());
        assert!((lhs - rhs).norm() <= 1e-12 * l2_norm(&z) * l2_norm(&f));
    }

    #[test]
    fn already_on_target() {
        let mut p = two_impulse();
        p.target = Some(propagate(&p.u0, 1.0));
        p.c0 = C0Choice::Fixed(10.0);
        let s = solve_control(&p).unwrap();
        assert_eq!(l2_norm(&s.dual), 0.0);
        assert!(s.controls.iter().all(|h| l2_norm(h) == 0.0));
        assert!(s.terminal_error < 1e-14);
    }

    #[test]
    fn closed_form_full_observation() {
        let mut p = two_impulse();
        p.impulses = vec![Impulse { time: 0.0, region: Region::All }];
        p.c0 = C0Choice::Fixed(3.0);
        p.eps0 = 0.25;
        let s = solve_control(&p).unwrap();
        let exact = p.datum().scale(Complex64::new(1.0 / (3.0 + 0.25), 0.0));
        assert!(s.dual.max_abs_diff(&exact).unwrap() < 1e-12);
    }

    #[test]
    fn calibration_matches_full_observation_value() {
        // O'O = 2 I for two full impulses, so the critical constant is (1 - eps0)/2
        let mut p = two_impulse();
        p.impulses = vec![
            Impulse { time: 0.0, region: Region::All },
            Impulse { time: 0.5, region: Region::All },
        ];
        p.eps0 = 0.2;
        let c = calibrate_c0(&p, 0.0).unwrap();
        assert!((c.critical - 0.4).abs() < 1e-5, "{}", c.critical);
        assert!(c.margin_eigenvalue >= -1e-10);
    }

    #[test]
    fn two_impulse_solution_invariants() {
        let p = two_impulse();
        let s = solve_control(&p).unwrap();
        assert!(s.cg_residual <= 1e-10);
        assert!(s.duality_residual <= 1e-8, "{}", s.duality_residual);
        assert!(s.bound_ratio() <= 1.0 + 1e-9, "{}", s.bound_ratio());
        let fnorm = l2_norm(&p.datum());
        assert!(s.terminal_error_l2 <= 1e-3 * fnorm);
    }

    #[test]
    fn validation() {
        let mut p = two_impulse();
        p.impulses.swap(0, 1);
        assert!(p.validate().is_err());
        let mut p = two_impulse();
        p.impulses[1].time = 1.5;
        assert!(p.validate().is_err());
        let mut p = two_impulse();
        p.eps0 = 0.0;
        assert!(p.validate().is_err());
        let mut p = two_impulse();
        p.reach = Reach::Backward { region: None };
        assert!(p.validate().is_err());
    }

    #[test]
    fn normal_operator_is_coercive() {
        let p = two_impulse();
        let ops = Operators::new(&p).unwrap();
        for seed in 0..10 {
            let z = random_vector(grid().len(), seed);
            let az = ops.normal(&z, 5.0);
            let q = ops.geo.inner(&az, &z).re;
            assert!(q >= p.eps0 * ops.geo.inner(&z, &z).re * (1.0 - 1e-12));
        }
    }

    #[test]
    fn sobolev_geometry_inverse() {
        let g = grid();
        let geo = Geometry::new(g, ErrorNorm::Sobolev { a: 0.5 }).unwrap();
        let v = random_vector(g.len(), 3);
        let back = geo.weight_inv(&geo.weight(&v));
        let err: f64 = back.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        // the multiplier spans ~13 decades on this grid
        assert!(err < 1e-4, "{err}");
        let w = random_vector(g.len(), 4);
        let d = geo.inner(&v, &w) - geo.inner(&w, &v).conj();
        assert!(d.norm() < 1e-9 * geo.norm(&v) * geo.norm(&w));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn observation_is_linear(s1 in 0u64..1000, s2 in 0u64..1000, re in -3.0..3.0f64, im in -3.0..3.0f64) {
                let p = two_impulse();
                let (a, b) = (rand_field(grid(), s1), rand_field(grid(), s2 + 5000));
                let c = Complex64::new(re, im);
                let lhs = observation_map(&a.add(&b.scale(c)).unwrap(), &p).unwrap();
                let (oa, ob) = (observation_map(&a, &p).unwrap(), observation_map(&b, &p).unwrap());
                for i in 0..2 {
                    let d = lhs[i].max_abs_diff(&oa[i].add(&ob[i].scale(c)).unwrap()).unwrap();
                    prop_assert!(d <= 1e-12 * (1.0 + c.norm()));
                }
            }

            #[test]
            fn adjoint_pairing(seed in 0u64..10_000, tau in 0.0..1.0f64, r in 0.0..4.0f64) {
                let mut p = two_impulse();
                p.impulses = vec![Impulse { time: tau, region: Region::centered_complement(r) }];
                let z = rand_field(grid(), seed);
                let h = [rand_field(grid(), seed + 77)];
                let lhs = dot(&observation_map(&z, &p).unwrap()[0], &h[0]).unwrap();
                let rhs = dot(&z, &observation_adjoint(&h, &p).unwrap()).unwrap();
                prop_assert!((lhs - rhs).norm() <= 1e-12 * l2_norm(&z) * l2_norm(&h[0]));
            }

            #[test]
            fn bound_with_fixed_constant(c0 in 0.5..50.0f64, eps in 1e-3..1.0f64) {
                // with C0 fixed the identity cost/C0 + err^2/eps0 = Re<f, z> <= ||f|| ||z|| still holds
                let mut p = two_impulse();
                p.c0 = C0Choice::Fixed(c0);
                p.eps0 = eps;
                let s = solve_control(&p).unwrap();
                let re = dot(&p.datum(), &s.dual).unwrap().re;
                prop_assert!((s.bound_lhs - re).abs() <= 1e-8 * s.bound_lhs.max(1e-12));
            }
        }
    }
}
