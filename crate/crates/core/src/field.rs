//! Grids, complex fields, regions, weights and the energy functionals built on them.
//!
//! All integrals over `R^n` are Riemann sums over the box `[-L, L)^dim`.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Default exponent cap for weights, on the natural-log scale.
pub const DEFAULT_EXP_CAP: f64 = 700.0;

/// Default tolerance on the relative mass outside `[-L/2, L/2]^dim`.
pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Uniform tensor-product lattice on `[-L, L)^dim` with `M` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid {
    dim: usize,
    half_extent: f64,
    points_per_dim: usize,
}

impl Grid {
    pub fn new(dim: usize, half_extent: f64, points_per_dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {dim}")));
        }
        if !(half_extent > 0.0) || !half_extent.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half extent L must be positive, got {half_extent}"
            )));
        }
        if !points_per_dim.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "points per dimension M must be even, got {points_per_dim}"
            )));
        }
        if points_per_dim < 8 {
            return Err(Error::InvalidGrid(format!(
                "points per dimension M must be at least 8, got {points_per_dim}"
            )));
        }
        Ok(Self {
            dim,
            half_extent,
            points_per_dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn points_per_dim(&self) -> usize {
        self.points_per_dim
    }

    /// Spacing `h = 2L/M`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_extent / self.points_per_dim as f64
    }

    /// Frequency spacing `pi/L`.
    pub fn freq_spacing(&self) -> f64 {
        std::f64::consts::PI / self.half_extent
    }

    /// Number of nodes, `M^dim`.
    pub fn len(&self) -> usize {
        self.points_per_dim.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume element `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Frequency volume element `(pi/L)^dim`.
    pub fn freq_cell_volume(&self) -> f64 {
        self.freq_spacing().powi(self.dim as i32)
    }

    /// Node coordinate along one axis, `x_j = -L + j h`.
    pub fn coord(&self, j: usize) -> f64 {
        -self.half_extent + j as f64 * self.spacing()
    }

    /// Integer frequency index `k = m - M/2` at natural-order position `m`.
    pub fn freq_index(&self, m: usize) -> i64 {
        m as i64 - (self.points_per_dim / 2) as i64
    }

    /// Frequency node along one axis at natural-order position `m`.
    pub fn freq(&self, m: usize) -> f64 {
        self.freq_spacing() * self.freq_index(m) as f64
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.points_per_dim).map(|j| self.coord(j)).collect()
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.points_per_dim).map(|m| self.freq(m)).collect()
    }

    /// Multi-index of a flat row-major index; unused axes are zero.
    pub fn unflatten(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.points_per_dim, idx % self.points_per_dim]
        }
    }

    /// Spatial point of a flat index; unused axes are zero.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            [self.coord(i), 0.0]
        } else {
            [self.coord(i), self.coord(j)]
        }
    }

    /// Frequency point of a flat index; unused axes are zero.
    pub fn freq_point(&self, idx: usize) -> [f64; 2] {
        let [i, j] = self.unflatten(idx);
        if self.dim == 1 {
            [self.freq(i), 0.0]
        } else {
            [self.freq(i), self.freq(j)]
        }
    }

    /// Largest representable frequency magnitude per axis, `pi/h`.
    pub fn nyquist(&self) -> f64 {
        std::f64::consts::PI / self.spacing()
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

pub fn norm_point(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

/// Complex samples on a grid, row-major over axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid,
    values: Vec<Complex64>,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidArgument("field contains non-finite values".into()));
        }
        Ok(Self { grid, values })
    }

    pub(crate) fn from_raw(grid: Grid, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::from_raw(grid, vec![Complex64::new(0.0, 0.0); grid.len()])
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut([f64; 2]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_raw(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn scale(&self, c: Complex64) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| v * c).collect())
    }

    pub fn conj(&self) -> Field {
        Field::from_raw(self.grid, self.values.iter().map(|v| v.conj()).collect())
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        check_same(self, other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        check_same(self, other)?;
        Ok(Field::from_raw(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        ))
    }

    /// Pointwise product with a real multiplier sampled on the grid.
    pub fn mul_real(&self, w: &[f64]) -> Field {
        Field::from_raw(
            self.grid,
            self.values.iter().zip(w).map(|(v, &m)| v * m).collect(),
        )
    }

    pub fn mask(&self, region: &Region) -> Field {
        self.mul_real(&region.indicator_mask(&self.grid))
    }

    pub fn max_abs_diff(&self, other: &Field) -> Result<f64> {
        check_same(self, other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}

pub(crate) fn check_same(f: &Field, g: &Field) -> Result<()> {
    if f.grid != g.grid {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Ball, ball complement or whole space. Balls are closed; a ball of radius zero is empty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Region {
    Ball { center: [f64; 2], radius: f64 },
    BallComplement { center: [f64; 2], radius: f64 },
    All,
}

impl Region {
    pub fn ball(center: [f64; 2], radius: f64) -> Self {
        Region::Ball { center, radius }
    }

    pub fn ball_complement(center: [f64; 2], radius: f64) -> Self {
        Region::BallComplement { center, radius }
    }

    pub fn centered_ball(radius: f64) -> Self {
        Region::ball([0.0, 0.0], radius)
    }

    pub fn centered_complement(radius: f64) -> Self {
        Region::ball_complement([0.0, 0.0], radius)
    }

    pub fn complement(&self) -> Option<Region> {
        match *self {
            Region::Ball { center, radius } => Some(Region::BallComplement { center, radius }),
            Region::BallComplement { center, radius } => Some(Region::Ball { center, radius }),
            Region::All => None,
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        match *self {
            Region::Ball { center, radius } => in_ball(p, center, radius),
            Region::BallComplement { center, radius } => !in_ball(p, center, radius),
            Region::All => true,
        }
    }

    /// Ball scaled about the origin by `s`.
    pub fn scaled(&self, s: f64) -> Region {
        match *self {
            Region::Ball { center, radius } => Region::Ball {
                center: [center[0] * s, center[1] * s],
                radius: radius * s,
            },
            Region::BallComplement { center, radius } => Region::BallComplement {
                center: [center[0] * s, center[1] * s],
                radius: radius * s,
            },
            Region::All => Region::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::Ball { radius, .. } | Region::BallComplement { radius, .. } => {
                if radius < 0.0 || !radius.is_finite() {
                    Err(Error::InvalidArgument(format!(
                        "region radius must be nonnegative, got {radius}"
                    )))
                } else {
                    Ok(())
                }
            }
            Region::All => Ok(()),
        }
    }

    pub fn indicator_mask(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| if self.contains(grid.point(i)) { 1.0 } else { 0.0 })
            .collect()
    }

    /// Indicator over the frequency lattice.
    pub fn spectral_mask(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len())
            .map(|i| if self.contains(grid.freq_point(i)) { 1.0 } else { 0.0 })
            .collect()
    }
}

fn in_ball(p: [f64; 2], c: [f64; 2], r: f64) -> bool {
    r > 0.0 && (p[0] - c[0]).hypot(p[1] - c[1]) <= r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightSign {
    Grow,
    Decay,
}

/// `exp(±a |x - c|^beta)` with the exponent clipped at `exp_cap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Weight {
    pub amplitude: f64,
    pub exponent: f64,
    pub sign: WeightSign,
    pub center: [f64; 2],
    pub exp_cap: f64,
}

impl Weight {
    pub fn exponential(a: f64) -> Self {
        Self::power(a, 1.0)
    }

    pub fn power(a: f64, beta: f64) -> Self {
        Self {
            amplitude: a,
            exponent: beta,
            sign: WeightSign::Grow,
            center: [0.0, 0.0],
            exp_cap: DEFAULT_EXP_CAP,
        }
    }

    pub fn decay(b: f64, center: [f64; 2]) -> Self {
        Self {
            amplitude: b,
            exponent: 1.0,
            sign: WeightSign::Decay,
            center,
            exp_cap: DEFAULT_EXP_CAP,
        }
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.exp_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0) || !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "weight amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(self.exponent >= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "weight exponent must be at least 1, got {}",
                self.exponent
            )));
        }
        Ok(())
    }

    /// Signed exponent before capping.
    pub fn log_value(&self, p: [f64; 2]) -> f64 {
        let r = (p[0] - self.center[0]).hypot(p[1] - self.center[1]);
        let e = self.amplitude * r.powf(self.exponent);
        match self.sign {
            WeightSign::Grow => e,
            WeightSign::Decay => -e,
        }
    }

    /// Weight value and whether the cap was applied.
    pub fn eval(&self, p: [f64; 2]) -> (f64, bool) {
        let e = self.log_value(p);
        if e > self.exp_cap {
            (self.exp_cap.exp(), true)
        } else {
            (e.exp(), false)
        }
    }

    pub fn values(&self, grid: &Grid) -> (Vec<f64>, bool) {
        let mut capped = false;
        let v = (0..grid.len())
            .map(|i| {
                let (w, c) = self.eval(grid.point(i));
                capped |= c;
                w
            })
            .collect();
        (v, capped)
    }
}

/// Result of a weighted integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedEnergy {
    pub value: f64,
    pub capped: bool,
}

pub fn l2_norm(f: &Field) -> f64 {
    l2_norm_sq(f).sqrt()
}

pub fn l2_norm_sq(f: &Field) -> f64 {
    f.grid.cell_volume() * f.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
}

/// Discrete inner product `h^dim sum f conj(g)`.
pub fn dot(f: &Field, g: &Field) -> Result<Complex64> {
    check_same(f, g)?;
    let s: Complex64 = f.values.iter().zip(&g.values).map(|(a, b)| a * b.conj()).sum();
    Ok(s * f.grid.cell_volume())
}

pub fn masked_energy(f: &Field, region: &Region) -> f64 {
    let g = &f.grid;
    let s: f64 = f
        .values
        .iter()
        .enumerate()
        .filter(|(i, _)| region.contains(g.point(*i)))
        .map(|(_, v)| v.norm_sqr())
        .sum();
    g.cell_volume() * s
}

pub fn weighted_energy(f: &Field, w: &Weight) -> Result<WeightedEnergy> {
    w.validate()?;
    let g = &f.grid;
    let mut capped = false;
    let mut s = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        let p = g.point(i);
        let (wv, c) = w.eval(p);
        let term = wv * v.norm_sqr();
        if !term.is_finite() {
            return Err(Error::Overflow(format!("weighted term non-finite at {p:?}")));
        }
        capped |= c && v.norm_sqr() > 0.0;
        s += term;
    }
    let value = g.cell_volume() * s;
    if !value.is_finite() {
        return Err(Error::Overflow("weighted energy is non-finite".into()));
    }
    Ok(WeightedEnergy { value, capped })
}

/// Fraction of `|f|^2` mass outside `[-L/2, L/2]^dim`.
pub fn tail_fraction(f: &Field) -> f64 {
    let g = &f.grid;
    let half = g.half_extent() / 2.0;
    let mut outside = 0.0;
    let mut total = 0.0;
    for (i, v) in f.values.iter().enumerate() {
        let p = g.point(i);
        let e = v.norm_sqr();
        total += e;
        if p[0].abs() > half || p[1].abs() > half {
            outside += e;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outside / total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn gauss(grid: Grid) -> Field {
        Field::from_fn(grid, |p| c((-(p[0] * p[0] + p[1] * p[1]) / 2.0).exp(), 0.0))
    }

    #[test]
    fn grid_nodes() {
        let g = Grid::new(1, 10.0, 16).unwrap();
        assert_eq!(g.spacing(), 1.25);
        assert_eq!(g.coord(0), -10.0);
        assert_eq!(g.coord(1), -8.75);
        assert_eq!(g.coord(15), 8.75);
        assert_eq!(g.spacing() * 16.0, 20.0);
    }

    #[test]
    fn grid_frequencies() {
        let g = Grid::new(1, std::f64::consts::PI, 8).unwrap();
        let f: Vec<f64> = g.freqs().iter().map(|x| x.round()).collect();
        assert_eq!(f, vec![-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0]);
        for (m, x) in g.freqs().iter().enumerate() {
            assert!((x - (m as f64 - 4.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_tensor_product() {
        let g = Grid::new(2, 10.0, 16).unwrap();
        assert_eq!(g.len(), 256);
        assert_eq!(g.point(17), [-8.75, -8.75]);
        assert_eq!(g.point(1), [-10.0, -8.75]);
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(matches!(Grid::new(1, 1.0, 15), Err(Error::InvalidGrid(m)) if m.contains("even")));
        assert!(Grid::new(1, 0.0, 16).is_err());
        assert!(Grid::new(1, -1.0, 16).is_err());
        assert!(Grid::new(3, 1.0, 16).is_err());
        assert!(Grid::new(1, 1.0, 6).is_err());
    }

    #[test]
    fn zero_field_energies() {
        let g = Grid::new(1, 5.0, 64).unwrap();
        let z = Field::zeros(g);
        assert_eq!(masked_energy(&z, &Region::centered_ball(1.0)), 0.0);
        assert_eq!(weighted_energy(&z, &Weight::exponential(1.0)).unwrap().value, 0.0);
        assert_eq!(l2_norm(&z), 0.0);
    }

    #[test]
    fn gaussian_ball_energy_matches_quadrature() {
        // erf(1) sqrt(pi)
        let exact = 1.493_648_265_624_854;
        for m in [1024usize, 4096, 16384] {
            let g = Grid::new(1, 20.0, m).unwrap();
            let e = masked_energy(&gauss(g), &Region::centered_ball(1.0));
            // one boundary cell per side, density e^{-1}
            assert!((e - exact).abs() <= 2.0 * g.spacing() * (-1.0f64).exp(), "{m}: {e}");
        }
    }

    #[test]
    fn gaussian_exponential_weight() {
        // 2 e^{1/4} int_0^inf e^{-(x-1/2)^2} dx = e^{1/4} sqrt(pi) (1 + erf(1/2))
        let exact = 0.25f64.exp() * std::f64::consts::PI.sqrt() * (1.0 + 0.520_499_877_813_046_5);
        let mut prev = f64::INFINITY;
        for m in [1024usize, 2048, 4096, 8192] {
            let g = Grid::new(1, 20.0, m).unwrap();
            let e = weighted_energy(&gauss(g), &Weight::exponential(1.0)).unwrap();
            let err = (e.value - exact).abs();
            // kink of e^{|x|} at the node x = 0
            assert!(err <= g.spacing().powi(2) / 4.0, "{m}: {err}");
            assert!(err < prev / 3.0);
            assert!(!e.capped);
            prev = err;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn unit_weight_limit() {
        let g = Grid::new(1, 8.0, 128).unwrap();
        let f = gauss(g);
        let e = weighted_energy(&f, &Weight::exponential(1e-14)).unwrap().value;
        let n = l2_norm_sq(&f);
        assert!((e - n).abs() <= 1e-10 * n);
    }

    #[test]
    fn weight_cap_flags() {
        let g = Grid::new(1, 20.0, 64).unwrap();
        let f = Field::from_fn(g, |_| c(1.0, 0.0));
        let e = weighted_energy(&f, &Weight::exponential(50.0)).unwrap();
        assert!(e.capped && e.value.is_finite());
        let e = weighted_energy(&f, &Weight::decay(50.0, [0.0, 0.0])).unwrap();
        assert!(!e.capped);
    }

    #[test]
    fn constant_norm() {
        let g = Grid::new(1, 3.0, 64).unwrap();
        let f = Field::from_fn(g, |_| c(1.0, 0.0));
        assert!((l2_norm(&f) - 6f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn dot_rejects_mismatch() {
        let f = Field::zeros(Grid::new(1, 3.0, 64).unwrap());
        let g = Field::zeros(Grid::new(1, 4.0, 64).unwrap());
        assert_eq!(dot(&f, &g), Err(Error::GridMismatch));
    }

    #[test]
    fn zero_radius_ball_is_empty() {
        let g = Grid::new(1, 4.0, 16).unwrap();
        let f = Field::from_fn(g, |_| c(1.0, 0.0));
        assert_eq!(masked_energy(&f, &Region::centered_ball(0.0)), 0.0);
        assert_eq!(masked_energy(&f, &Region::centered_complement(0.0)), l2_norm_sq(&f));
    }

    #[test]
    fn field_rejects_nonfinite() {
        let g = Grid::new(1, 4.0, 8).unwrap();
        let mut v = vec![c(0.0, 0.0); 8];
        v[3] = c(f64::NAN, 0.0);
        assert!(Field::new(g, v).is_err());
        assert!(Field::new(g, vec![c(0.0, 0.0); 7]).is_err());
    }

    fn arb_field(dim: usize) -> impl Strategy<Value = Field> {
        let m = 16usize;
        let n = m.pow(dim as u32);
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n).prop_map(move |v| {
            let g = Grid::new(dim, 3.0, m).unwrap();
            Field::new(g, v.into_iter().map(|(a, b)| c(a, b)).collect()).unwrap()
        })
    }

    fn arb_ball() -> impl Strategy<Value = ([f64; 2], f64)> {
        ((-3.0f64..3.0, -3.0f64..3.0), 0.0f64..4.0).prop_map(|((a, b), r)| ([a, b], r))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn partition_of_unity(f in prop_oneof![arb_field(1), arb_field(2)], (cen, r) in arb_ball()) {
            let inside = masked_energy(&f, &Region::ball(cen, r));
            let outside = masked_energy(&f, &Region::ball_complement(cen, r));
            let all = masked_energy(&f, &Region::All);
            prop_assert!((inside + outside - all).abs() <= 1e-13 * all.max(1e-300));
            prop_assert!((all - l2_norm_sq(&f)).abs() <= 1e-13 * all);
            let m1 = Region::ball(cen, r).indicator_mask(f.grid());
            let m2 = Region::ball_complement(cen, r).indicator_mask(f.grid());
            prop_assert!(m1.iter().zip(&m2).all(|(a, b)| a + b == 1.0));
        }

        #[test]
        fn quadratic_scaling(f in arb_field(1), re in -3.0f64..3.0, im in -3.0f64..3.0, (cen, r) in arb_ball()) {
            let z = c(re, im);
            let reg = Region::ball(cen, r);
            let e1 = masked_energy(&f.scale(z), &reg);
            let e0 = masked_energy(&f, &reg);
            prop_assert!((e1 - z.norm_sqr() * e0).abs() <= 1e-13 * e1.max(1e-300));
        }

        #[test]
        fn ball_energy_monotone(f in arb_field(2), (cen, r) in arb_ball(), dr in 0.0f64..2.0) {
            let a = masked_energy(&f, &Region::ball(cen, r));
            let b = masked_energy(&f, &Region::ball(cen, r + dr));
            prop_assert!(a <= b);
        }

        #[test]
        fn dot_hermitian(f in arb_field(1), g in arb_field(1)) {
            let a = dot(&f, &g).unwrap();
            let b = dot(&g, &f).unwrap();
            prop_assert!((a - b.conj()).norm() <= 1e-14 * (1.0 + a.norm()));
            let ff = dot(&f, &f).unwrap();
            prop_assert!(ff.im.abs() <= 1e-14 && (ff.re - l2_norm_sq(&f)).abs() <= 1e-14 * (1.0 + ff.re));
        }
    }
}
