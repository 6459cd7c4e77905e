//! Matrix-free Krylov solvers over complex vectors with a caller-supplied inner product.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type Vector = Vec<Complex64>;

/// Hermitian inner product, linear in the first argument.
pub trait InnerProduct: Sync {
    fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64;

    fn norm(&self, a: &[Complex64]) -> f64 {
        self.inner(a, a).re.max(0.0).sqrt()
    }
}

/// `w_0 sum_j w_j a_j conj(b_j)`; with unit weights this is the grid L² product.
#[derive(Debug, Clone)]
pub struct WeightedInner {
    pub scale: f64,
    pub weights: Option<Vec<f64>>,
}

impl WeightedInner {
    pub fn uniform(scale: f64) -> Self {
        Self {
            scale,
            weights: None,
        }
    }

    pub fn weighted(scale: f64, weights: Vec<f64>) -> Self {
        Self {
            scale,
            weights: Some(weights),
        }
    }
}

impl InnerProduct for WeightedInner {
    fn inner(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        let s: Complex64 = match &self.weights {
            None => a.iter().zip(b).map(|(x, y)| x * y.conj()).sum(),
            Some(w) => a
                .iter()
                .zip(b)
                .zip(w)
                .map(|((x, y), &wi)| x * y.conj() * wi)
                .sum(),
        };
        s * self.scale
    }
}

pub fn axpy(y: &mut [Complex64], a: Complex64, x: &[Complex64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn random_vector(n: usize, seed: u64) -> Vector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re, im)
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Iterations without improving the best residual before declaring stagnation.
    pub stagnation_window: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 5000,
            stagnation_window: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vector,
    pub iterations: usize,
    /// True relative residual `||b - A x|| / ||b||` at exit.
    pub residual: f64,
    pub trace: Vec<f64>,
}

/// Conjugate gradients for an operator self-adjoint and positive definite in `ip`.
pub fn conjugate_gradient(
    apply: &dyn Fn(&[Complex64]) -> Vector,
    ip: &dyn InnerProduct,
    b: &[Complex64],
    opts: CgOptions,
) -> Result<CgOutcome> {
    let n = b.len();
    let bnorm = ip.norm(b);
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    if bnorm == 0.0 {
        return Ok(CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            trace: vec![0.0],
        });
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = ip.inner(&r, &r).re;
    let mut trace = vec![1.0];
    let mut best = 1.0;
    let mut best_at = 0;
    for it in 1..=opts.max_iter {
        let ap = apply(&p);
        let curvature = ip.inner(&ap, &p).re;
        if !(curvature > 0.0) {
            return Err(Error::Indefinite {
                iteration: it,
                curvature,
            });
        }
        let alpha = rr / curvature;
        axpy(&mut x, Complex64::new(alpha, 0.0), &p);
        axpy(&mut r, Complex64::new(-alpha, 0.0), &ap);
        let mut rr_new = ip.inner(&r, &r).re;
        let mut rel = rr_new.sqrt() / bnorm;
        if rel <= opts.tol {
            // guard against drift of the recursive residual
            let ax = apply(&x);
            r = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            rr_new = ip.inner(&r, &r).re;
            rel = rr_new.sqrt() / bnorm;
            trace.push(rel);
            if rel <= opts.tol {
                return Ok(CgOutcome {
                    x,
                    iterations: it,
                    residual: rel,
                    trace,
                });
            }
            p = r.clone();
            rr = rr_new;
        } else {
            trace.push(rel);
            let beta = rr_new / rr;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + *pi * beta;
            }
            rr = rr_new;
        }
        if rel < best {
            best = rel;
            best_at = it;
        } else if it - best_at > opts.stagnation_window {
            return Err(Error::NonConvergence {
                solver: "conjugate gradient",
                iterations: it,
                residual: best,
                trace,
            });
        }
    }
    let ax = apply(&x);
    let res: Vector = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    Err(Error::NonConvergence {
        solver: "conjugate gradient",
        iterations: opts.max_iter,
        residual: ip.norm(&res) / bnorm,
        trace,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extremal {
    Smallest,
    Largest,
}

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub max_iter: usize,
    /// Absolute tolerance on the Ritz residual `|beta_j s_j|`.
    pub tol: f64,
    pub seed: u64,
    pub which: Extremal,
    pub check_every: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            tol: 1e-10,
            seed: 0,
            which: Extremal::Smallest,
            check_every: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vector,
    pub iterations: usize,
    pub residual: f64,
}

/// Extremal eigenpair of an operator self-adjoint in `ip`, by Lanczos with full
/// reorthogonalisation.
pub fn lanczos(
    apply: &dyn Fn(&[Complex64]) -> Vector,
    ip: &dyn InnerProduct,
    n: usize,
    opts: LanczosOptions,
) -> Result<Eigenpair> {
    let kmax = opts.max_iter.min(n).max(1);
    let mut q0 = random_vector(n, opts.seed);
    let nq = ip.norm(&q0);
    q0.iter_mut().for_each(|v| *v /= nq);
    let mut basis: Vec<Vector> = vec![q0];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut scale = 0.0f64;
    let mut last_res = f64::INFINITY;
    for j in 0..kmax {
        let mut w = apply(&basis[j]);
        let a = ip.inner(&w, &basis[j]).re;
        alpha.push(a);
        for _ in 0..2 {
            for q in &basis {
                let c = ip.inner(&w, q);
                axpy(&mut w, -c, q);
            }
        }
        let b = ip.norm(&w);
        scale = scale.max(a.abs() + b);
        let invariant = b <= 1e-14 * scale || j + 1 == n;
        if invariant || j + 1 == kmax || (j + 1) % opts.check_every == 0 {
            let (theta, s) = extremal_ritz(&alpha, &beta, opts.which)?;
            let res = if invariant { 0.0 } else { b * s[j].abs() };
            if res <= opts.tol {
                return Ok(Eigenpair {
                    value: theta,
                    vector: combine(&basis, &s, ip),
                    iterations: j + 1,
                    residual: res,
                });
            }
            last_res = res;
        }
        if j + 1 < kmax {
            beta.push(b);
            w.iter_mut().for_each(|v| *v /= b);
            basis.push(w);
        }
    }
    Err(Error::NonConvergence {
        solver: "Lanczos",
        iterations: kmax,
        residual: last_res,
        trace: vec![],
    })
}

fn combine(basis: &[Vector], s: &[f64], ip: &dyn InnerProduct) -> Vector {
    let n = basis[0].len();
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    for (q, &c) in basis.iter().zip(s) {
        axpy(&mut v, Complex64::new(c, 0.0), q);
    }
    let nv = ip.norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    v
}

fn extremal_ritz(alpha: &[f64], beta: &[f64], which: Extremal) -> Result<(f64, Vec<f64>)> {
    let (vals, vecs) = tridiagonal_eigen(alpha, beta)?;
    let k = alpha.len();
    let idx = (0..k)
        .min_by(|&a, &b| {
            let (x, y) = (vals[a], vals[b]);
            match which {
                Extremal::Smallest => x.total_cmp(&y),
                Extremal::Largest => y.total_cmp(&x),
            }
        })
        .expect("nonempty tridiagonal");
    Ok((vals[idx], (0..k).map(|r| vecs[r][idx]).collect()))
}

/// Eigen-decomposition of the symmetric tridiagonal matrix with diagonal `d` and
/// off-diagonal `e` by implicit QL; returns values and column eigenvectors `z[row][col]`.
pub fn tridiagonal_eigen(d: &[f64], e: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = d.len();
    let mut d = d.to_vec();
    let mut off = vec![0.0; n];
    off[..n.saturating_sub(1)].copy_from_slice(&e[..n.saturating_sub(1)]);
    let mut z: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::NonConvergence {
                    solver: "tridiagonal QL",
                    iterations: iter,
                    residual: off[l].abs(),
                    trace: vec![],
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for row in z.iter_mut() {
                    let t = row[i + 1];
                    row[i + 1] = s * row[i] + c * t;
                    row[i] = c * row[i] - s * t;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok((d, z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn hermitian_pd(n: usize, seed: u64) -> Vec<Vec<Complex64>> {
        let a = random_vector(n * n, seed);
        let mut h = vec![vec![c(0.0, 0.0); n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = c(0.0, 0.0);
                for k in 0..n {
                    s += a[i * n + k] * a[j * n + k].conj();
                }
                h[i][j] = s / n as f64;
            }
            h[i][i] += c(0.1, 0.0);
        }
        h
    }

    fn matvec(h: &[Vec<Complex64>], x: &[Complex64]) -> Vector {
        h.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn dense_eigs(h: &[Vec<Complex64>]) -> Vec<f64> {
        let n = h.len();
        let m = DMatrix::from_fn(n, n, |i, j| h[i][j]);
        let mut v: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let d = [4.0, -1.0, 2.5, 0.3, 7.0, 1.1];
        let e = [1.0, 0.5, -2.0, 0.7, 0.01];
        let (vals, z) = tridiagonal_eigen(&d, &e).unwrap();
        let n = d.len();
        let t = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                d[i]
            } else if i + 1 == j {
                e[i]
            } else if j + 1 == i {
                e[j]
            } else {
                0.0
            }
        });
        let mut want: Vec<f64> = SymmetricEigen::new(t.clone()).eigenvalues.iter().copied().collect();
        want.sort_by(f64::total_cmp);
        let mut got = vals.clone();
        got.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        for col in 0..n {
            let v = nalgebra::DVector::from_fn(n, |r, _| z[r][col]);
            let res = &t * &v - &v * vals[col];
            assert!(res.norm() < 1e-12);
        }
    }

    #[test]
    fn cg_solves_hermitian_system() {
        let n = 40;
        let h = hermitian_pd(n, 11);
        let b = random_vector(n, 12);
        let ip = WeightedInner::uniform(1.0);
        let out = conjugate_gradient(&|x| matvec(&h, x), &ip, &b, CgOptions::default()).unwrap();
        assert!(out.residual <= 1e-10);
        let r: Vector = matvec(&h, &out.x).iter().zip(&b).map(|(a, bb)| a - bb).collect();
        assert!(ip.norm(&r) <= 1e-10 * ip.norm(&b));
    }

    #[test]
    fn cg_zero_rhs() {
        let ip = WeightedInner::uniform(1.0);
        let out =
            conjugate_gradient(&|x| x.to_vec(), &ip, &[c(0.0, 0.0); 5], CgOptions::default()).unwrap();
        assert_eq!(out.iterations, 0);
        assert!(out.x.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn cg_detects_indefinite() {
        let ip = WeightedInner::uniform(1.0);
        let b = random_vector(6, 1);
        let err = conjugate_gradient(&|x| x.iter().map(|v| -v).collect(), &ip, &b, CgOptions::default());
        assert!(matches!(err, Err(Error::Indefinite { .. })));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let n = 40;
        let h = hermitian_pd(n, 13);
        let b = random_vector(n, 14);
        let ip = WeightedInner::uniform(1.0);
        let opts = CgOptions {
            max_iter: 3,
            ..CgOptions::default()
        };
        assert!(matches!(
            conjugate_gradient(&|x| matvec(&h, x), &ip, &b, opts),
            Err(Error::NonConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn lanczos_extremes_match_dense() {
        let n = 60;
        let h = hermitian_pd(n, 21);
        let want = dense_eigs(&h);
        let ip = WeightedInner::uniform(1.0);
        let lo = lanczos(&|x| matvec(&h, x), &ip, n, LanczosOptions::default()).unwrap();
        assert!((lo.value - want[0]).abs() < 1e-10);
        let hi = lanczos(
            &|x| matvec(&h, x),
            &ip,
            n,
            LanczosOptions {
                which: Extremal::Largest,
                ..LanczosOptions::default()
            },
        )
        .unwrap();
        assert!((hi.value - want[n - 1]).abs() < 1e-10);
        let hv = matvec(&h, &lo.vector);
        let q = ip.inner(&hv, &lo.vector).re / ip.inner(&lo.vector, &lo.vector).re;
        assert!((q - lo.value).abs() < 1e-10);
    }

    #[test]
    fn lanczos_in_weighted_geometry() {
        // A = W^{-1} H is self-adjoint in <W ., .>
        let n = 30;
        let h = hermitian_pd(n, 31);
        let w: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 / 7.0).collect();
        let ip = WeightedInner::weighted(1.0, w.clone());
        let apply = |x: &[Complex64]| -> Vector {
            matvec(&h, x).iter().zip(&w).map(|(v, wi)| v / wi).collect()
        };
        // similar Hermitian matrix W^{-1/2} H W^{-1/2}
        let sim: Vec<Vec<Complex64>> = (0..n)
            .map(|i| (0..n).map(|j| h[i][j] / (w[i] * w[j]).sqrt()).collect())
            .collect();
        let want = dense_eigs(&sim);
        let lo = lanczos(&apply, &ip, n, LanczosOptions::default()).unwrap();
        assert!((lo.value - want[0]).abs() < 1e-10);
    }
}
