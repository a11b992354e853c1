//! Periodic collocation grid and Fourier pseudo-spectral operators.
//!
//! Derivatives are exact for the trigonometric interpolant: multiply by
//! `i k` per axis in transform space (with the +-n/2 bin of even grids
//! zeroed so real fields map to real fields), the Laplacian multiplies by
//! `-|k|^2` with the full table, and its zero-mean inverse divides by it.
//! Nonlinear products are always formed pointwise in physical space.

pub(crate) mod fourier;

use crate::error::{Error, Result};
use fourier::{Transforms, C64};
use std::sync::Arc;

/// Uniform periodic collocation grid on `[0, length)^dim`.
///
/// Collocation points are `x_j = j * length / n` along each axis and the
/// wavenumber table holds each integer frequency exactly once in standard
/// FFT order, scaled by `2*pi/length`.
pub struct Grid {
    dim: usize,
    n: usize,
    length: f64,
    tf: Transforms,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("n", &self.n)
            .field("length", &self.length)
            .finish()
    }
}

impl Grid {
    /// Build a grid with `n` points per dimension (n >= 8, dim 2 or 3).
    pub fn new(dim: usize, n: usize, length: f64) -> Result<Arc<Grid>> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParams(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 8 {
            return Err(Error::InvalidParams(format!("n must be at least 8, got {n}")));
        }
        if !(length > 0.0) {
            return Err(Error::InvalidParams(format!("length must be positive, got {length}")));
        }
        Ok(Arc::new(Grid { dim, n, length, tf: Transforms::new(dim, n, length) }))
    }

    /// Grid with the default domain edge `2*pi`.
    pub fn new_default(dim: usize, n: usize) -> Result<Arc<Grid>> {
        Grid::new(dim, n, 2.0 * std::f64::consts::PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    /// Total number of collocation points, `n^dim`.
    pub fn total(&self) -> usize {
        self.tf.total()
    }

    /// Grid spacing `length / n`.
    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Domain measure `length^dim`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Quadrature weight of one cell, `spacing^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Scaled wavenumbers along one axis, standard FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.tf.freq
    }

    pub(crate) fn tf(&self) -> &Transforms {
        &self.tf
    }

    fn coords(&self, l: usize) -> [f64; 3] {
        let h = self.spacing();
        let n = self.n;
        let ix = l % n;
        let iy = (l / n) % n;
        let iz = if self.dim == 3 { l / (n * n) } else { 0 };
        [ix as f64 * h, iy as f64 * h, iz as f64 * h]
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> Result<()> {
    if Arc::ptr_eq(a, b) || (a.dim == b.dim && a.n == b.n && a.length == b.length) {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// Real values on the collocation grid, physical space.
#[derive(Clone, Debug)]
pub struct ScalarField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &Arc<Grid>) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![0.0; grid.total()] }
    }

    pub fn constant(grid: &Arc<Grid>, c: f64) -> ScalarField {
        ScalarField { grid: grid.clone(), values: vec![c; grid.total()] }
    }

    /// Sample `f(x, y, z)` at the collocation points (z = 0 in 2D).
    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let values = (0..grid.total())
            .map(|l| {
                let [x, y, z] = grid.coords(l);
                f(x, y, z)
            })
            .collect();
        ScalarField { grid: grid.clone(), values }
    }

    pub fn from_values(grid: &Arc<Grid>, values: Vec<f64>) -> Result<ScalarField> {
        if values.len() != grid.total() {
            return Err(Error::InvalidParams(format!(
                "field length {} does not match grid size {}",
                values.len(),
                grid.total()
            )));
        }
        Ok(ScalarField { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.values.len(), other.values.len());
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn linf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One ScalarField per spatial dimension.
#[derive(Clone, Debug)]
pub struct VectorField {
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn new(components: Vec<ScalarField>) -> Result<VectorField> {
        let grid = components[0].grid().clone();
        if components.len() != grid.dim() {
            return Err(Error::InvalidParams("component count must equal grid dim".into()));
        }
        for c in &components {
            same_grid(&grid, c.grid())?;
        }
        Ok(VectorField { components })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.components[0].grid()
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn component(&self, axis: usize) -> &ScalarField {
        &self.components[axis]
    }

    /// Pointwise Euclidean magnitude.
    pub fn magnitude(&self) -> ScalarField {
        let grid = self.grid().clone();
        let total = grid.total();
        let mut values = vec![0.0; total];
        for c in &self.components {
            for (acc, v) in values.iter_mut().zip(c.values()) {
                *acc += v * v;
            }
        }
        for v in values.iter_mut() {
            *v = v.sqrt();
        }
        ScalarField { grid, values }
    }
}

/// Exact spectral gradient of the trigonometric interpolant.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = f.grid().clone();
    let tf = grid.tf();
    let spec = tf.forward(f.values());
    let mut comps: Vec<ScalarField> = Vec::with_capacity(grid.dim());
    let mut spectra: Vec<Vec<C64>> = Vec::with_capacity(grid.dim());
    for axis in 0..grid.dim() {
        let mut d = spec.clone();
        tf.for_each_kaxis(axis, |l, k| {
            let z = d[l];
            d[l] = C64::new(-k * z.im, k * z.re); // i k z
        });
        spectra.push(d);
    }
    // Pairs of components share one inverse transform.
    let mut axis = 0;
    while axis + 1 < grid.dim() {
        let (a, b) = tf.inverse_pair_real(&spectra[axis], &spectra[axis + 1]);
        comps.push(ScalarField { grid: grid.clone(), values: a });
        comps.push(ScalarField { grid: grid.clone(), values: b });
        axis += 2;
    }
    if axis < grid.dim() {
        let a = tf.inverse_real(&spectra[axis]);
        comps.push(ScalarField { grid: grid.clone(), values: a });
    }
    VectorField { components: comps }
}

/// Spectral divergence of a vector field.
pub fn divergence(v: &VectorField) -> ScalarField {
    let grid = v.grid().clone();
    let tf = grid.tf();
    let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); grid.total()];
    let mut axis = 0;
    while axis + 1 < grid.dim() {
        let (a, b) =
            tf.forward_pair(v.component(axis).values(), v.component(axis + 1).values());
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
        tf.for_each_kaxis(axis + 1, |l, k| {
            let z = b[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
        axis += 2;
    }
    if axis < grid.dim() {
        let a = tf.forward(v.component(axis).values());
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
    }
    ScalarField { grid: grid.clone(), values: tf.inverse_real(&acc) }
}

/// Spectral Laplacian: multiplication by `-|k|^2` in transform space.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = f.grid().clone();
    let tf = grid.tf();
    let mut spec = tf.forward(f.values());
    tf.for_each_ksq(|l, ksq| {
        spec[l] *= -ksq;
    });
    ScalarField { grid: grid.clone(), values: tf.inverse_real(&spec) }
}

/// Relative tolerance on the mean for fields entering the inverse Laplacian.
const ZERO_MEAN_TOL: f64 = 1e-12;

/// Zero-mean inverse Laplacian: returns `v` with `laplacian(v) = f` and
/// `mean(v) = 0`. The input must already have (numerically) zero mean;
/// a violation signals a caller bug and is rejected.
pub fn inv_laplacian_zeromean(f: &ScalarField) -> Result<ScalarField> {
    let m = mean(f);
    let bound = ZERO_MEAN_TOL * f.linf();
    if m.abs() > bound && f.linf() > 0.0 {
        return Err(Error::NonZeroMean { mean: m, bound });
    }
    let grid = f.grid().clone();
    let tf = grid.tf();
    let mut spec = tf.forward(f.values());
    tf.for_each_ksq(|l, ksq| {
        if ksq > 0.0 {
            spec[l] /= -ksq;
        } else {
            spec[l] = C64::new(0.0, 0.0);
        }
    });
    Ok(ScalarField { grid: grid.clone(), values: tf.inverse_real(&spec) })
}

/// Grid average; equals the domain average of the interpolant.
pub fn mean(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() / f.values.len() as f64
}

/// Subtract the grid average.
pub fn project_zero_mean(f: &ScalarField) -> ScalarField {
    let m = mean(f);
    f.map(|v| v - m)
}

/// Discrete L2 inner product: cell volume times the pointwise sum.
pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    debug_assert_eq!(f.values.len(), g.values.len());
    let s: f64 = f.values.iter().zip(&g.values).map(|(&a, &b)| a * b).sum();
    s * f.grid.cell_volume()
}

pub fn norm_l2(f: &ScalarField) -> f64 {
    inner(f, f).sqrt()
}

/// H^-1 norm of a zero-mean field: `sqrt((-lap^-1 f, f))`.
pub fn norm_hminus1(f: &ScalarField) -> Result<f64> {
    let v = inv_laplacian_zeromean(f)?;
    Ok((-inner(&v, f)).max(0.0).sqrt())
}

/// Integral of `|grad f|^2` for the trigonometric interpolant, evaluated in
/// transform space (captures the +-n/2 bin that pointwise quadrature of the
/// gradient cannot see).
pub fn grad_norm_sq(f: &ScalarField) -> f64 {
    let grid = f.grid();
    let tf = grid.tf();
    let spec = tf.forward(f.values());
    let mut s = 0.0;
    tf.for_each_ksq(|l, ksq| {
        s += ksq * spec[l].norm_sqr();
    });
    s * grid.volume() / (grid.total() as f64 * grid.total() as f64)
}

/// 2/3-rule truncation: zero every mode with any |k_d| above n/3.
pub fn dealias_two_thirds(f: &ScalarField) -> ScalarField {
    let grid = f.grid().clone();
    let tf = grid.tf();
    let cutoff = grid.n() as f64 / 3.0 * (2.0 * std::f64::consts::PI / grid.length());
    let mut spec = tf.forward(f.values());
    let n = grid.n();
    let freq = grid.wavenumbers().to_vec();
    let keep = |idx: usize| freq[idx].abs() <= cutoff + 1e-14;
    let mut l = 0;
    match grid.dim() {
        2 => {
            for iy in 0..n {
                for ix in 0..n {
                    if !(keep(ix) && keep(iy)) {
                        spec[l] = C64::new(0.0, 0.0);
                    }
                    l += 1;
                }
            }
        }
        _ => {
            for iz in 0..n {
                for iy in 0..n {
                    for ix in 0..n {
                        if !(keep(ix) && keep(iy) && keep(iz)) {
                            spec[l] = C64::new(0.0, 0.0);
                        }
                        l += 1;
                    }
                }
            }
        }
    }
    ScalarField { grid: grid.clone(), values: tf.inverse_real(&spec) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn white_noise(grid: &Arc<Grid>, seed: u64) -> ScalarField {
        let mut rng = SplitMix64::new(seed);
        let values = (0..grid.total()).map(|_| rng.next_symmetric()).collect();
        ScalarField::from_values(grid, values).unwrap()
    }

    fn max_abs_diff(a: &ScalarField, b: &ScalarField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
    }

    #[test]
    fn grid_invariants() {
        let grid = Grid::new_default(2, 64).unwrap();
        assert_eq!(grid.total(), 64 * 64);
        let ks = grid.wavenumbers();
        assert_eq!(ks.len(), 64);
        // each integer frequency exactly once, magnitude <= n/2
        let mut ints: Vec<i64> = ks.iter().map(|&k| k.round() as i64).collect();
        ints.sort_unstable();
        assert!(ints.iter().all(|&k| k.unsigned_abs() <= 32));
        ints.dedup();
        assert_eq!(ints.len(), 64);
        assert!(Grid::new(4, 64, 1.0).is_err());
        assert!(Grid::new(2, 4, 1.0).is_err());
    }

    #[test]
    fn transform_round_trip() {
        for &(dim, n) in &[(2usize, 32usize), (3, 16), (2, 27)] {
            let grid = Grid::new_default(dim, n).unwrap();
            let f = white_noise(&grid, 7);
            let tf = grid.tf();
            let spec = tf.forward(f.values());
            let back = tf.inverse_real(&spec);
            let linf = f.linf();
            let err = f
                .values()
                .iter()
                .zip(&back)
                .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()));
            assert!(err <= 1e-12 * linf, "round trip err {err} (dim {dim}, n {n})");
        }
    }

    #[test]
    fn forward_pair_matches_separate_transforms() {
        let grid = Grid::new_default(2, 16).unwrap();
        let a = white_noise(&grid, 1);
        let b = white_noise(&grid, 2);
        let tf = grid.tf();
        let (fa, fb) = tf.forward_pair(a.values(), b.values());
        let ra = tf.forward(a.values());
        let rb = tf.forward(b.values());
        for l in 0..grid.total() {
            assert!((fa[l] - ra[l]).norm() < 1e-10);
            assert!((fb[l] - rb[l]).norm() < 1e-10);
        }
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let grid = Grid::new_default(2, 16).unwrap();
        let f = ScalarField::constant(&grid, 2.75);
        let g = gradient(&f);
        for c in g.components() {
            assert!(c.linf() <= 1e-13);
        }
    }

    #[test]
    fn gradient_of_sin_x() {
        let grid = Grid::new_default(2, 32).unwrap();
        let f = ScalarField::from_fn(&grid, |x, _, _| x.sin());
        let g = gradient(&f);
        let exact = ScalarField::from_fn(&grid, |x, _, _| x.cos());
        assert!(max_abs_diff(g.component(0), &exact) <= 1e-12);
        assert!(g.component(1).linf() <= 1e-12);
    }

    #[test]
    fn gradient_of_two_mode_field() {
        // f = 0.1 cos(3x) + 0.4 cos(y): d/dx = -0.3 sin(3x), d/dy = -0.4 sin(y)
        let grid = Grid::new_default(2, 64).unwrap();
        let f = ScalarField::from_fn(&grid, |x, y, _| 0.1 * (3.0 * x).cos() + 0.4 * y.cos());
        let g = gradient(&f);
        let gx = ScalarField::from_fn(&grid, |x, _, _| -0.3 * (3.0 * x).sin());
        let gy = ScalarField::from_fn(&grid, |_, y, _| -0.4 * y.sin());
        assert!(max_abs_diff(g.component(0), &gx) <= 1e-12);
        assert!(max_abs_diff(g.component(1), &gy) <= 1e-12);
    }

    #[test]
    fn gradient_3d_z_axis() {
        let grid = Grid::new_default(3, 16).unwrap();
        let f = ScalarField::from_fn(&grid, |_, _, z| (2.0 * z).sin());
        let g = gradient(&f);
        let exact = ScalarField::from_fn(&grid, |_, _, z| 2.0 * (2.0 * z).cos());
        assert!(max_abs_diff(g.component(2), &exact) <= 1e-11);
        assert!(g.component(0).linf() <= 1e-12);
        assert!(g.component(1).linf() <= 1e-12);
    }

    #[test]
    fn divergence_of_constant_vector_is_zero() {
        let grid = Grid::new_default(2, 16).unwrap();
        let v = VectorField::new(vec![
            ScalarField::constant(&grid, 1.0),
            ScalarField::constant(&grid, -2.0),
        ])
        .unwrap();
        assert!(divergence(&v).linf() <= 1e-13);
    }

    #[test]
    fn divergence_of_gradient_matches_analytic_laplacian() {
        let grid = Grid::new_default(2, 32).unwrap();
        let f = ScalarField::from_fn(&grid, |x, y, _| x.sin() * y.sin());
        let lap = divergence(&gradient(&f));
        let exact = ScalarField::from_fn(&grid, |x, y, _| -2.0 * x.sin() * y.sin());
        assert!(max_abs_diff(&lap, &exact) <= 1e-12);
    }

    #[test]
    fn divergence_of_curl_like_field_is_zero() {
        let grid = Grid::new_default(2, 32).unwrap();
        let v = VectorField::new(vec![
            ScalarField::from_fn(&grid, |_, y, _| y.cos()),
            ScalarField::from_fn(&grid, |x, _, _| x.cos()),
        ])
        .unwrap();
        assert!(divergence(&v).linf() <= 1e-12);
    }

    #[test]
    fn laplacian_basic() {
        let grid = Grid::new_default(2, 32).unwrap();
        assert!(laplacian(&ScalarField::constant(&grid, 5.0)).linf() <= 1e-12);
        let f = ScalarField::from_fn(&grid, |x, _, _| (2.0 * x).sin());
        let exact = ScalarField::from_fn(&grid, |x, _, _| -4.0 * (2.0 * x).sin());
        assert!(max_abs_diff(&laplacian(&f), &exact) <= 1e-11);
    }

    #[test]
    fn laplacian_matches_finite_difference_oracle() {
        // Second-order centered finite differences on a 512-point grid as an
        // independent oracle for a non-band-limited profile.
        let n = 512;
        let grid = Grid::new_default(2, n).unwrap();
        let f = ScalarField::from_fn(&grid, |x, _, _| x.cos().exp());
        let lap = laplacian(&f);
        let h = grid.spacing();
        let vals = f.values();
        let mut max_err = 0.0f64;
        for iy in 0..n {
            for ix in 0..n {
                let at = |i: usize| vals[iy * n + (i % n)];
                let fd_xx = (at(ix + 1) - 2.0 * at(ix) + at(ix + n - 1)) / (h * h);
                let row = |j: usize| vals[(j % n) * n + ix];
                let fd_yy = (row(iy + 1) - 2.0 * row(iy) + row(iy + n - 1)) / (h * h);
                let err = (lap.values()[iy * n + ix] - (fd_xx + fd_yy)).abs();
                max_err = max_err.max(err);
            }
        }
        // |error| <= h^2/12 * max|f''''| ~ 1.1e-5 here; assert the O(h^2) bound.
        assert!(max_err <= 25.0 * h * h, "fd mismatch {max_err}");
        assert!(max_err > 0.0);
    }

    #[test]
    fn inv_laplacian_examples() {
        let grid = Grid::new_default(2, 32).unwrap();
        let zero = ScalarField::zeros(&grid);
        assert!(inv_laplacian_zeromean(&zero).unwrap().linf() == 0.0);

        let f = ScalarField::from_fn(&grid, |x, _, _| x.sin());
        let v = inv_laplacian_zeromean(&f).unwrap();
        let exact = ScalarField::from_fn(&grid, |x, _, _| -x.sin());
        assert!(max_abs_diff(&v, &exact) <= 1e-12);
    }

    #[test]
    fn inv_laplacian_round_trip_on_noise() {
        let grid = Grid::new_default(2, 32).unwrap();
        let g = project_zero_mean(&white_noise(&grid, 11));
        let back = inv_laplacian_zeromean(&laplacian(&g)).unwrap();
        assert!(max_abs_diff(&back, &g) <= 1e-10 * g.linf().max(1.0));
    }

    #[test]
    fn inv_laplacian_rejects_nonzero_mean() {
        let grid = Grid::new_default(2, 16).unwrap();
        let f = ScalarField::constant(&grid, 1.0);
        assert!(matches!(
            inv_laplacian_zeromean(&f),
            Err(crate::error::Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn mean_and_projection() {
        let grid = Grid::new_default(2, 32).unwrap();
        let f = ScalarField::constant(&grid, 3.0);
        assert_eq!(mean(&f), 3.0);
        assert!(project_zero_mean(&f).linf() <= 1e-15);

        let s = ScalarField::from_fn(&grid, |x, _, _| x.sin());
        assert!(mean(&s).abs() <= 1e-15);

        // 0.3 plus exactly centered noise keeps its mean to round-off.
        let mut rng = SplitMix64::new(99);
        let noise: Vec<f64> = (0..grid.total()).map(|_| rng.next_symmetric()).collect();
        let m = noise.iter().sum::<f64>() / noise.len() as f64;
        let f = ScalarField::from_values(
            &grid,
            noise.iter().map(|&v| 0.3 + 0.001 * (v - m)).collect(),
        )
        .unwrap();
        assert!((mean(&f) - 0.3).abs() <= 1e-14);
    }

    #[test]
    fn inner_product_and_norms() {
        let grid = Grid::new_default(2, 32).unwrap();
        let s = ScalarField::from_fn(&grid, |x, _, _| x.sin());
        // ||sin x||^2 over [0,2pi]^2 = 2 pi^2
        let expected = (2.0 * std::f64::consts::PI.powi(2)).sqrt();
        assert!((norm_l2(&s) - expected).abs() <= 1e-12 * expected);

        // H^-1 of an eigenfunction with eigenvalue one equals its L2 norm.
        let h = norm_hminus1(&s).unwrap();
        assert!((h - norm_l2(&s)).abs() <= 1e-12 * expected);

        let f = white_noise(&grid, 3);
        assert!(inner(&f, &f) > 0.0);
        let zero = ScalarField::zeros(&grid);
        assert_eq!(inner(&zero, &zero), 0.0);
    }

    #[test]
    fn adjointness_of_gradient_and_divergence() {
        for &(dim, n) in &[(2usize, 24usize), (3, 12)] {
            let grid = Grid::new_default(dim, n).unwrap();
            let f = white_noise(&grid, 21);
            let comps = (0..dim)
                .map(|a| white_noise(&grid, 100 + a as u64))
                .collect::<Vec<_>>();
            let v = VectorField::new(comps).unwrap();
            let lhs: f64 = gradient(&f)
                .components()
                .iter()
                .zip(v.components())
                .map(|(g, vc)| inner(g, vc))
                .sum();
            let rhs = -inner(&f, &divergence(&v));
            let scale = norm_l2(&f) * v.components().iter().map(norm_l2).sum::<f64>();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * scale.max(1.0),
                "adjointness defect {} (dim {dim})",
                (lhs - rhs).abs()
            );
        }
    }

    #[test]
    fn parseval_identity() {
        let grid = Grid::new_default(2, 32).unwrap();
        let f = white_noise(&grid, 5);
        let tf = grid.tf();
        let spec = tf.forward(f.values());
        let k_space: f64 = spec.iter().map(|z| z.norm_sqr()).sum::<f64>() * grid.volume()
            / (grid.total() as f64 * grid.total() as f64);
        let phys = inner(&f, &f);
        assert!((k_space - phys).abs() <= 1e-12 * phys);
    }

    #[test]
    fn grad_norm_sq_matches_pointwise_for_smooth_fields() {
        let grid = Grid::new_default(2, 32).unwrap();
        let f = ScalarField::from_fn(&grid, |x, y, _| (2.0 * x).sin() + 0.3 * y.cos());
        let pointwise: f64 = gradient(&f).components().iter().map(|c| inner(c, c)).sum();
        let spectral_form = grad_norm_sq(&f);
        assert!((pointwise - spectral_form).abs() <= 1e-11 * spectral_form.max(1.0));
    }

    #[test]
    fn dealias_truncates_high_modes() {
        let grid = Grid::new_default(2, 32).unwrap();
        // one retained mode, one mode beyond the 2/3 cutoff (|k| = 13 > 32/3)
        let f = ScalarField::from_fn(&grid, |x, y, _| (3.0 * x).cos() + 0.5 * (13.0 * y).cos());
        let filtered = dealias_two_thirds(&f);
        let expected = ScalarField::from_fn(&grid, |x, _, _| (3.0 * x).cos());
        assert!(max_abs_diff(&filtered, &expected) <= 1e-12);
    }
}
