#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use std::f64::consts::PI;

/// Direct dense transform on `[-L, L)` with `M` nodes, built from explicit exponential sums.
pub struct Dense1d {
    pub x: Vec<f64>,
    pub xi: Vec<f64>,
    pub h: f64,
    pub dxi: f64,
    /// Unitary map from nodal values to frequency coefficients.
    u: DMatrix<C>,
}

impl Dense1d {
    pub fn new(l: f64, m: usize) -> Self {
        let h = 2.0 * l / m as f64;
        let dxi = PI / l;
        let x: Vec<f64> = (0..m).map(|j| -l + j as f64 * h).collect();
        let xi: Vec<f64> = (0..m).map(|k| (k as f64 - (m / 2) as f64) * dxi).collect();
        let s = 1.0 / (m as f64).sqrt();
        let u = DMatrix::from_fn(m, m, |k, j| C::from_polar(s, -xi[k] * x[j]));
        Self { x, xi, h, dxi, u }
    }

    pub fn sample(&self, f: impl Fn(f64) -> C) -> DVector<C> {
        DVector::from_iterator(self.x.len(), self.x.iter().map(|&x| f(x)))
    }

    pub fn evolve(&self, v: &DVector<C>, t: f64) -> DVector<C> {
        let mut w = &self.u * v;
        for (k, c) in w.iter_mut().enumerate() {
            *c *= C::from_polar(1.0, -self.xi[k] * self.xi[k] * t);
        }
        self.u.adjoint() * w
    }

    /// Unitary propagator as a dense matrix.
    pub fn propagator(&self, t: f64) -> DMatrix<C> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.xi.len(),
            self.xi.iter().map(|&k| C::from_polar(1.0, -k * k * t)),
        ));
        self.u.adjoint() * d * &self.u
    }

    pub fn energy(&self, v: &DVector<C>, keep: impl Fn(f64) -> bool) -> f64 {
        self.h * v.iter().zip(&self.x).filter(|(_, &x)| keep(x)).map(|(c, _)| c.norm_sqr()).sum::<f64>()
    }

    pub fn weighted(&self, v: &DVector<C>, w: impl Fn(f64) -> f64) -> f64 {
        self.h * v.iter().zip(&self.x).map(|(c, &x)| w(x) * c.norm_sqr()).sum::<f64>()
    }

    /// Energy of the continuous-normalised transform over frequencies kept by `keep`.
    pub fn spectral_energy(&self, v: &DVector<C>, keep: impl Fn(f64) -> bool) -> f64 {
        let w = &self.u * v;
        // |F_k|^2 dxi with F_k = h/sqrt(2 pi) sum e^{-i xi x} v = h sqrt(M/2pi) (U v)_k
        let scale = self.h * self.h * self.x.len() as f64 / (2.0 * PI) * self.dxi;
        scale * w.iter().zip(&self.xi).filter(|(_, &k)| keep(k)).map(|(c, _)| c.norm_sqr()).sum::<f64>()
    }
}

pub fn to_dvec(v: &[C]) -> DVector<C> {
    DVector::from_column_slice(v)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
