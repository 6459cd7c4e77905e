//! Unitary discrete Fourier transform, free Schrödinger propagation and the Fresnel map.
//!
//! The transform approximates `F f(xi) = (2 pi)^{-n/2} int f(x) e^{-i x.xi} dx` at the
//! frequency nodes `xi_k = (pi/L) k`, `k in [-M/2, M/2)`, stored in increasing order.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use once_cell::sync::Lazy;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::field::{Field, Grid, Region};

type Plan = Arc<dyn Fft<f64>>;

static PLANS: Lazy<Mutex<HashMap<(usize, bool), Plan>>> = Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize, forward: bool) -> Plan {
    let mut cache = PLANS.lock().expect("fft plan cache poisoned");
    cache
        .entry((len, forward))
        .or_insert_with(|| {
            let dir = if forward {
                FftDirection::Forward
            } else {
                FftDirection::Inverse
            };
            FftPlanner::new().plan_fft(len, dir)
        })
        .clone()
}

/// Samples on the frequency lattice of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    values: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "spectral field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.freq_cell_volume() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>())
            .sqrt()
    }

    /// `(pi/L)^dim sum_{xi in R} |F(xi)|^2`.
    pub fn masked_energy(&self, region: &Region) -> f64 {
        let g = &self.grid;
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| region.contains(g.freq_point(*i)))
            .map(|(_, v)| v.norm_sqr())
            .sum();
        g.freq_cell_volume() * s
    }

    /// Pointwise multiplication by `m(xi)`.
    pub fn multiply(&self, m: impl Fn([f64; 2]) -> Complex64) -> SpectralField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| v * m(self.grid.freq_point(i)))
            .collect();
        SpectralField {
            grid: self.grid,
            values,
        }
    }
}

fn sign(k: i64) -> f64 {
    if k.rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

fn forward_line(grid: &Grid, line: &mut [Complex64], scratch: &mut Vec<Complex64>) {
    let m = grid.points_per_dim();
    plan(m, true).process(line);
    scratch.clear();
    scratch.extend_from_slice(line);
    let c = grid.spacing() / (2.0 * PI).sqrt();
    for (pos, out) in line.iter_mut().enumerate() {
        let k = grid.freq_index(pos);
        *out = scratch[k.rem_euclid(m as i64) as usize] * (c * sign(k));
    }
}

fn inverse_line(grid: &Grid, line: &mut [Complex64], scratch: &mut Vec<Complex64>) {
    let m = grid.points_per_dim();
    scratch.clear();
    scratch.resize(m, Complex64::new(0.0, 0.0));
    for (pos, v) in line.iter().enumerate() {
        let k = grid.freq_index(pos);
        scratch[k.rem_euclid(m as i64) as usize] = v * sign(k);
    }
    plan(m, false).process(scratch);
    let c = grid.freq_spacing() / (2.0 * PI).sqrt();
    for (out, v) in line.iter_mut().zip(scratch.iter()) {
        *out = v * c;
    }
}

fn along_axes(grid: &Grid, data: &mut [Complex64], f: fn(&Grid, &mut [Complex64], &mut Vec<Complex64>)) {
    let m = grid.points_per_dim();
    let mut scratch = Vec::with_capacity(m);
    if grid.dim() == 1 {
        f(grid, data, &mut scratch);
        return;
    }
    for row in data.chunks_mut(m) {
        f(grid, row, &mut scratch);
    }
    let mut col = vec![Complex64::new(0.0, 0.0); m];
    for j in 0..m {
        for i in 0..m {
            col[i] = data[i * m + j];
        }
        f(grid, &mut col, &mut scratch);
        for i in 0..m {
            data[i * m + j] = col[i];
        }
    }
}

pub fn dft(f: &Field) -> SpectralField {
    let mut v = f.values().to_vec();
    along_axes(f.grid(), &mut v, forward_line);
    SpectralField {
        grid: *f.grid(),
        values: v,
    }
}

pub fn idft(spec: &SpectralField) -> Field {
    let mut v = spec.values.clone();
    along_axes(&spec.grid, &mut v, inverse_line);
    Field::from_raw(spec.grid, v)
}

/// Spectral multiplier `e^{-i |xi|^2 t}`.
pub fn free_multiplier(t: f64) -> impl Fn([f64; 2]) -> Complex64 {
    move |xi| Complex64::from_polar(1.0, -(xi[0] * xi[0] + xi[1] * xi[1]) * t)
}

/// `u(t) = e^{i t Delta} f`; negative `t` runs the flow backward.
pub fn propagate(f: &Field, t: f64) -> Field {
    if t == 0.0 {
        return f.clone();
    }
    idft(&dft(f).multiply(free_multiplier(t)))
}

/// Sobolev norm squared `||(1+|xi|^2)^{s/2} F f||^2`.
pub fn sobolev_norm_sq(f: &Field, s: f64) -> f64 {
    let spec = dft(f);
    let g = spec.grid;
    g.freq_cell_volume()
        * spec
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let xi = g.freq_point(i);
                (1.0 + xi[0] * xi[0] + xi[1] * xi[1]).powf(s) * v.norm_sqr()
            })
            .sum::<f64>()
}

/// Checks the chirp local-frequency bound `L/(2T) <= pi/h`.
pub fn check_chirp_aliasing(grid: &Grid, t: f64) -> Result<()> {
    let lhs = grid.half_extent() / (2.0 * t);
    let rhs = grid.nyquist();
    if lhs > rhs {
        Err(Error::Aliasing { lhs, rhs })
    } else {
        Ok(())
    }
}

/// Chirp `e^{i s |x|^2}` applied pointwise.
pub fn chirp(f: &Field, s: f64) -> Field {
    let g = *f.grid();
    let values = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let p = g.point(i);
            v * Complex64::from_polar(1.0, s * (p[0] * p[0] + p[1] * p[1]))
        })
        .collect();
    Field::from_raw(g, values)
}

/// Lattice `2T xi_k` on which the Fresnel map is evaluated.
pub fn fresnel_output_grid(grid: &Grid, t: f64) -> Result<Grid> {
    let m = grid.points_per_dim();
    Grid::new(grid.dim(), PI * t * m as f64 / grid.half_extent(), m)
}

/// `u(x,T) = (2iT)^{-n/2} e^{i|x|^2/4T} F[e^{i|y|^2/4T} u0](x/2T)` at `x = 2T xi_k`.
pub fn fresnel_map(u0: &Field, t: f64) -> Result<(Field, Grid)> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("Fresnel time must be positive, got {t}")));
    }
    let g = *u0.grid();
    let out_grid = fresnel_output_grid(&g, t)?;
    let spec = dft(&chirp(u0, 1.0 / (4.0 * t)));
    let n = g.dim() as f64;
    let pref = Complex64::from_polar((2.0 * t).powf(-n / 2.0), -PI * n / 4.0);
    let values = spec
        .values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let x = out_grid.point(i);
            v * pref * Complex64::from_polar(1.0, (x[0] * x[0] + x[1] * x[1]) / (4.0 * t))
        })
        .collect();
    Ok((Field::from_raw(out_grid, values), out_grid))
}

/// Fresnel representation of `u(x,T)` evaluated by direct quadrature on a tensor lattice.
///
/// `axes[d]` lists the output coordinates along axis `d`; the result is row-major.
pub fn fresnel_at(u0: &Field, t: f64, axes: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("Fresnel time must be positive, got {t}")));
    }
    let g = *u0.grid();
    if axes.len() != g.dim() {
        return Err(Error::InvalidArgument("one coordinate list per axis required".into()));
    }
    let m = g.points_per_dim();
    let xs = g.coords();
    let c = g.spacing() / (2.0 * PI).sqrt();
    let basis = |ys: &[f64]| -> Vec<Complex64> {
        let mut b = Vec::with_capacity(ys.len() * m);
        for &y in ys {
            for &x in &xs {
                b.push(Complex64::from_polar(c, -x * y / (2.0 * t)));
            }
        }
        b
    };
    let f = chirp(u0, 1.0 / (4.0 * t));
    let vals = f.values();
    let raw: Vec<Complex64> = if g.dim() == 1 {
        basis(&axes[0])
            .chunks(m)
            .map(|row| row.iter().zip(vals).map(|(e, v)| e * v).sum())
            .collect()
    } else {
        let b0 = basis(&axes[0]);
        let b1 = basis(&axes[1]);
        let (n0, n1) = (axes[0].len(), axes[1].len());
        let mut partial = vec![Complex64::new(0.0, 0.0); m * n1];
        for j0 in 0..m {
            let row = &vals[j0 * m..(j0 + 1) * m];
            for q in 0..n1 {
                partial[j0 * n1 + q] = b1[q * m..(q + 1) * m]
                    .iter()
                    .zip(row)
                    .map(|(e, v)| e * v)
                    .sum();
            }
        }
        let mut out = vec![Complex64::new(0.0, 0.0); n0 * n1];
        for p in 0..n0 {
            let e0 = &b0[p * m..(p + 1) * m];
            for q in 0..n1 {
                out[p * n1 + q] = (0..m).map(|j0| e0[j0] * partial[j0 * n1 + q]).sum();
            }
        }
        out
    };
    let n = g.dim() as f64;
    let pref = Complex64::from_polar((2.0 * t).powf(-n / 2.0), -PI * n / 4.0);
    let n1 = if g.dim() == 1 { 1 } else { axes[1].len() };
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let x0 = axes[0][i / n1];
            let x1 = if g.dim() == 1 { 0.0 } else { axes[1][i % n1] };
            v * pref * Complex64::from_polar(1.0, (x0 * x0 + x1 * x1) / (4.0 * t))
        })
        .collect())
}

/// Dual state `phi(t; T, z) = e^{i (t - T) Delta} z`.
pub fn dual_solve(z: &Field, horizon: f64, t: f64) -> Result<Field> {
    if !(0.0..=horizon).contains(&t) {
        return Err(Error::InvalidArgument(format!(
            "dual time {t} outside [0, {horizon}]"
        )));
    }
    Ok(propagate(z, t - horizon))
}

/// Closed-form evolution of `exp(-|x|^2 / (2 sigma^2))`.
pub fn gaussian_oracle(grid: &Grid, t: f64, sigma: f64) -> Result<Field> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
    }
    let s2 = sigma * sigma;
    let amp = (Complex64::new(1.0, 2.0 * t / s2)).sqrt().inv();
    let den = Complex64::new(s2, 2.0 * t) * 2.0;
    let axis = |x: f64| amp * (-(x * x) / den).exp();
    Ok(Field::from_fn(*grid, |p| {
        if grid.dim() == 1 {
            axis(p[0])
        } else {
            axis(p[0]) * axis(p[1])
        }
    }))
}

/// Band-limited trigonometric interpolant of a spectrum on a tensor lattice.
///
/// `axes[d]` lists the evaluation coordinates along axis `d`; the result is row-major.
pub fn interpolate_lattice(spec: &SpectralField, axes: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let g = spec.grid;
    if axes.len() != g.dim() {
        return Err(Error::InvalidArgument("one coordinate list per axis required".into()));
    }
    let m = g.points_per_dim();
    let c = g.freq_spacing() / (2.0 * PI).sqrt();
    let basis = |xs: &[f64]| -> Vec<Complex64> {
        let mut b = Vec::with_capacity(xs.len() * m);
        for &x in xs {
            for k in 0..m {
                b.push(Complex64::from_polar(c, x * g.freq(k)));
            }
        }
        b
    };
    if g.dim() == 1 {
        let b = basis(&axes[0]);
        return Ok(b
            .chunks(m)
            .map(|row| row.iter().zip(&spec.values).map(|(e, v)| e * v).sum())
            .collect());
    }
    let b0 = basis(&axes[0]);
    let b1 = basis(&axes[1]);
    let n0 = axes[0].len();
    let n1 = axes[1].len();
    // contract the second axis first
    let mut partial = vec![Complex64::new(0.0, 0.0); m * n1];
    for k0 in 0..m {
        let row = &spec.values[k0 * m..(k0 + 1) * m];
        for q in 0..n1 {
            partial[k0 * n1 + q] = b1[q * m..(q + 1) * m]
                .iter()
                .zip(row)
                .map(|(e, v)| e * v)
                .sum();
        }
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n0 * n1];
    for p in 0..n0 {
        let e0 = &b0[p * m..(p + 1) * m];
        for q in 0..n1 {
            out[p * n1 + q] = (0..m).map(|k0| e0[k0] * partial[k0 * n1 + q]).sum();
        }
    }
    Ok(out)
}
