//! Discrete calculus on the periodic interval `[0, 2π)`.
//!
//! Fields are stored as point samples on a uniform grid. Differential and
//! fractional operators act through Fourier multipliers; the real part of the
//! inverse transform is kept, which projects every multiplier result back onto
//! conjugate-symmetric spectra.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

struct GridInner<T: Scalar> {
    n: usize,
    dx: T,
    nodes: Vec<T>,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scratch: Mutex<Vec<Complex<T>>>,
}

impl<T: Scalar> GridInner<T> {
    fn transform(&self, plan: &Arc<dyn Fft<T>>, buf: &mut [Complex<T>]) {
        match self.scratch.try_lock() {
            Ok(mut scratch) => plan.process_with_scratch(buf, &mut scratch),
            // another thread holds the shared buffer
            Err(_) => plan.process(buf),
        }
    }

    fn forward(&self, buf: &mut [Complex<T>]) {
        self.transform(&self.forward, buf);
    }

    fn inverse(&self, buf: &mut [Complex<T>]) {
        self.transform(&self.inverse, buf);
    }
}

/// Uniform periodic grid with `n` nodes `x_j = j·dx`, `dx = 2π/n`.
///
/// Cheap to clone; FFT plans are shared between clones and threads.
#[derive(Clone)]
pub struct Grid<T: Scalar>(Arc<GridInner<T>>);

impl<T: Scalar> Grid<T> {
    pub const MIN_POINTS: usize = 8;

    pub fn new(n: usize) -> Result<Self> {
        if n < Self::MIN_POINTS || n % 2 != 0 {
            return Err(Error::param("grid.n", "even integer >= 8", n));
        }
        let dx = T::TAU() / T::from_usize_lossy(n);
        let nodes = (0..n).map(|j| T::from_usize_lossy(j) * dx).collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Ok(Grid(Arc::new(GridInner {
            n,
            dx,
            nodes,
            forward,
            inverse,
            scratch: Mutex::new(vec![Complex::new(T::zero(), T::zero()); len]),
        })))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.0.n
    }

    #[inline]
    pub fn dx(&self) -> T {
        self.0.dx
    }

    #[inline]
    pub fn length(&self) -> T {
        T::TAU()
    }

    pub fn nodes(&self) -> &[T] {
        &self.0.nodes
    }

    /// Signed wavenumber of FFT bin `j`; the Nyquist bin reports `+n/2`.
    #[inline]
    pub fn wavenumber(&self, j: usize) -> i64 {
        let n = self.0.n;
        if j <= n / 2 {
            j as i64
        } else {
            j as i64 - n as i64
        }
    }

    /// Largest wavenumber retained by [`dealias`].
    #[inline]
    pub fn dealias_cutoff(&self) -> usize {
        self.0.n / 3
    }

    fn is_nyquist(&self, j: usize) -> bool {
        j == self.0.n / 2
    }
}

impl<T: Scalar> PartialEq for Grid<T> {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0.n == other.0.n
    }
}

impl<T: Scalar> fmt::Debug for Grid<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.0.n)
            .field("dx", &self.0.dx)
            .finish()
    }
}

/// Real periodic function sampled on a [`Grid`].
#[derive(Clone, Debug, PartialEq)]
pub struct Field<T: Scalar> {
    grid: Grid<T>,
    samples: Vec<T>,
}

impl<T: Scalar> Field<T> {
    pub fn new(grid: &Grid<T>, samples: Vec<T>) -> Result<Self> {
        if samples.len() != grid.n() {
            return Err(Error::GridMismatch(format!(
                "{} samples for a grid of {} nodes",
                samples.len(),
                grid.n()
            )));
        }
        Ok(Field {
            grid: grid.clone(),
            samples,
        })
    }

    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> T) -> Self {
        let samples = grid.nodes().iter().map(|&x| f(x)).collect();
        Field {
            grid: grid.clone(),
            samples,
        }
    }

    pub fn constant(grid: &Grid<T>, value: T) -> Self {
        Field {
            grid: grid.clone(),
            samples: vec![value; grid.n()],
        }
    }

    pub fn zeros(grid: &Grid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    #[inline]
    pub fn samples_mut(&mut self) -> &mut [T] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Field {
            grid: self.grid.clone(),
            samples: self.samples.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.len(), other.len(), "fields live on different grids");
        Field {
            grid: self.grid.clone(),
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c·other`
    pub fn axpy(&self, c: T, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn is_finite(&self) -> bool {
        self.samples.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, context: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::fault(context))
        }
    }

    pub fn max_abs(&self) -> T {
        self.samples
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    pub fn min(&self) -> T {
        self.samples.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.samples.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// Index of the smallest sample (first on ties).
    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (j, &v) in self.samples.iter().enumerate() {
            if v < self.samples[best] {
                best = j;
            }
        }
        best
    }

    pub fn mean(&self) -> T {
        self.samples.iter().copied().sum::<T>() / T::from_usize_lossy(self.len())
    }
}

impl<T: Scalar> Add for &Field<T> {
    type Output = Field<T>;
    fn add(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Scalar> Sub for &Field<T> {
    type Output = Field<T>;
    fn sub(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

impl<T: Scalar> Mul for &Field<T> {
    type Output = Field<T>;
    fn mul(self, rhs: Self) -> Field<T> {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl<T: Scalar> Neg for &Field<T> {
    type Output = Field<T>;
    fn neg(self) -> Field<T> {
        self.map(|v| -v)
    }
}

/// Applies a Fourier multiplier. The closure receives the FFT bin, its signed
/// wavenumber and whether it is the Nyquist bin.
fn apply_multiplier<T: Scalar>(
    f: &Field<T>,
    multiplier: impl Fn(i64, bool) -> Complex<T>,
) -> Field<T> {
    let grid = f.grid();
    let n = grid.n();
    let mut buf: Vec<Complex<T>> = f
        .samples()
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    grid.0.forward(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        *c = *c * multiplier(grid.wavenumber(j), grid.is_nyquist(j));
    }
    grid.0.inverse(&mut buf);
    let inv_n = T::one() / T::from_usize_lossy(n);
    Field {
        grid: grid.clone(),
        samples: buf.into_iter().map(|c| c.re * inv_n).collect(),
    }
}

/// Unnormalized DFT coefficients of a field, for assembling several
/// multipliers with a single pair of transforms.
#[derive(Clone, Debug)]
pub(crate) struct Spectrum<T: Scalar> {
    grid: Grid<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Scalar> Spectrum<T> {
    pub(crate) fn of(f: &Field<T>) -> Self {
        let mut coeffs: Vec<Complex<T>> = f.samples().iter().map(|&v| real(v)).collect();
        f.grid().0.forward(&mut coeffs);
        Spectrum {
            grid: f.grid().clone(),
            coeffs,
        }
    }

    pub(crate) fn zeros(grid: &Grid<T>) -> Self {
        Spectrum {
            grid: grid.clone(),
            coeffs: vec![real(T::zero()); grid.n()],
        }
    }

    pub(crate) fn to_field(&self) -> Field<T> {
        let mut buf = self.coeffs.clone();
        self.grid.0.inverse(&mut buf);
        let inv_n = T::one() / T::from_usize_lossy(self.grid.n());
        Field {
            grid: self.grid.clone(),
            samples: buf.into_iter().map(|c| c.re * inv_n).collect(),
        }
    }

    /// `self ← a·self + ∂ₓ(b·other)` restricted to `|k| ≤ n/3`.
    pub(crate) fn dealiased_combine(&mut self, a: T, other: &Spectrum<T>, b: T) {
        let cutoff = self.grid.dealias_cutoff() as i64;
        for (j, (c, o)) in self.coeffs.iter_mut().zip(&other.coeffs).enumerate() {
            let k = self.grid.wavenumber(j);
            *c = if k.abs() > cutoff {
                real(T::zero())
            } else {
                *c * a + *o * Complex::new(T::zero(), b * T::from_i64(k).unwrap())
            };
        }
    }

    /// `∂ₓ` of the dealiased field.
    pub(crate) fn dealiased_derivative(&self) -> Spectrum<T> {
        let mut out = self.clone();
        out.dealiased_combine(T::zero(), self, T::one());
        out
    }

    /// Multiplies mode `k` by `symbol[|k|]`.
    pub(crate) fn radial(&self, symbol: &[T]) -> Spectrum<T> {
        let mut out = self.clone();
        for (j, c) in out.coeffs.iter_mut().enumerate() {
            *c = *c * symbol[self.grid.wavenumber(j).unsigned_abs() as usize];
        }
        out
    }

    /// Spectral first derivative (Nyquist dropped).
    pub(crate) fn derivative(&self) -> Spectrum<T> {
        let mut out = self.clone();
        for (j, c) in out.coeffs.iter_mut().enumerate() {
            let k = self.grid.wavenumber(j);
            *c = if self.grid.is_nyquist(j) {
                real(T::zero())
            } else {
                *c * Complex::new(T::zero(), T::from_i64(k).unwrap())
            };
        }
        out
    }
}

/// `−|k|^s` for `k = 0..=n/2`.
pub(crate) fn frac_symbol<T: Scalar>(grid: &Grid<T>, s: T) -> Vec<T> {
    (0..=grid.n() / 2)
        .map(|k| {
            if k == 0 {
                T::zero()
            } else {
                -T::from_usize_lossy(k).powf(s)
            }
        })
        .collect()
}

fn real<T: Scalar>(v: T) -> Complex<T> {
    Complex::new(v, T::zero())
}

/// Spectral derivative of the given order. The Nyquist bin is dropped for odd
/// orders so that the result stays real.
pub fn derivative<T: Scalar>(f: &Field<T>, order: u32) -> Result<Field<T>> {
    if order == 0 {
        return Err(Error::param("order", ">= 1", order));
    }
    f.ensure_finite("derivative")?;
    // i^order
    let unit = match order % 4 {
        0 => real(T::one()),
        1 => Complex::new(T::zero(), T::one()),
        2 => real(-T::one()),
        _ => Complex::new(T::zero(), -T::one()),
    };
    let odd = order % 2 == 1;
    Ok(apply_multiplier(f, |k, nyquist| {
        if k == 0 || (odd && nyquist) {
            real(T::zero())
        } else {
            unit * T::from_i64(k).unwrap().powi(order as i32)
        }
    }))
}

/// First derivative of the dealiased field (one transform pair instead of two).
pub fn dealiased_derivative<T: Scalar>(f: &Field<T>) -> Result<Field<T>> {
    f.ensure_finite("dealiased_derivative")?;
    let cutoff = f.grid().dealias_cutoff() as i64;
    Ok(apply_multiplier(f, |k, nyquist| {
        if k == 0 || nyquist || k.abs() > cutoff {
            real(T::zero())
        } else {
            Complex::new(T::zero(), T::from_i64(k).unwrap())
        }
    }))
}

/// Default mean tolerance of [`antiderivative_zero_mean`]: `1e-10·‖f‖_∞`.
pub fn default_mean_tolerance<T: Scalar>(f: &Field<T>) -> T {
    T::lit(1e-10) * f.max_abs()
}

/// Unique mean-zero periodic `g` with `g' = f`.
pub fn antiderivative_zero_mean<T: Scalar>(f: &Field<T>) -> Result<Field<T>> {
    antiderivative_zero_mean_tol(f, default_mean_tolerance(f))
}

pub fn antiderivative_zero_mean_tol<T: Scalar>(f: &Field<T>, tol: T) -> Result<Field<T>> {
    f.ensure_finite("antiderivative")?;
    let mean = f.mean();
    if mean.abs() > tol {
        return Err(Error::NonZeroMean {
            mean: mean.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
        });
    }
    Ok(apply_multiplier(f, |k, nyquist| {
        if k == 0 || nyquist {
            real(T::zero())
        } else {
            Complex::new(T::zero(), -T::one() / T::from_i64(k).unwrap())
        }
    }))
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 2.0) {
        return Err(Error::param("s", "0 < s < 2, i.e. (0,2)", s));
    }
    Ok(())
}

/// Spectral fractional Laplacian `-(-∂ₓₓ)^{s/2}`: mode `k` is multiplied by `-|k|^s`.
pub fn frac_laplacian<T: Scalar>(f: &Field<T>, s: T) -> Result<Field<T>> {
    check_order(s.to_f64_lossy())?;
    f.ensure_finite("frac_laplacian")?;
    Ok(apply_multiplier(f, |k, _| {
        if k == 0 {
            real(T::zero())
        } else {
            real(-T::from_i64(k.abs()).unwrap().powf(s))
        }
    }))
}

/// Two-thirds rule: zero every mode with `|k| > n/3`.
pub fn dealias<T: Scalar>(f: &Field<T>) -> Field<T> {
    let cutoff = f.grid().dealias_cutoff() as i64;
    apply_multiplier(f, |k, _| {
        if k.abs() > cutoff {
            real(T::zero())
        } else {
            real(T::one())
        }
    })
}

/// Pointwise product followed by dealiasing.
pub fn product<T: Scalar>(a: &Field<T>, b: &Field<T>) -> Field<T> {
    dealias(&(a * b))
}

/// Rectangle rule `∫_𝕋 f`.
pub fn integral<T: Scalar>(f: &Field<T>) -> T {
    f.samples().iter().copied().sum::<T>() * f.grid().dx()
}

/// Rectangle rule `∫_𝕋 f g`.
pub fn inner<T: Scalar>(f: &Field<T>, g: &Field<T>) -> T {
    assert_eq!(f.len(), g.len(), "fields live on different grids");
    f.samples()
        .iter()
        .zip(g.samples())
        .map(|(&a, &b)| a * b)
        .sum::<T>()
        * f.grid().dx()
}

/// `(∫ f²)^{1/2}`
pub fn l2_norm<T: Scalar>(f: &Field<T>) -> T {
    inner(f, f).sqrt()
}

/// `O(n²)` rectangle rule `∬ K(x_i, y_j)` over the torus square.
pub fn double_integral<T: Scalar>(grid: &Grid<T>, kernel: impl Fn(usize, usize) -> T) -> T {
    let n = grid.n();
    let dx = grid.dx();
    let mut total = T::zero();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            row = row + kernel(i, j);
        }
        total = total + row;
    }
    total * dx * dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize) -> Grid<f64> {
        Grid::new(n).unwrap()
    }

    fn random_bandlimited(g: &Grid<f64>, kmax: usize, seed: u64) -> Field<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs: Vec<(f64, f64)> = (1..=kmax)
            .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let c0: f64 = rng.gen_range(-1.0..1.0);
        Field::from_fn(g, |x| {
            c0 + coeffs
                .iter()
                .enumerate()
                .map(|(k, (a, b))| {
                    let k = (k + 1) as f64;
                    a * (k * x).cos() + b * (k * x).sin()
                })
                .sum::<f64>()
        })
    }

    #[test]
    fn grid_rejects_small_and_odd() {
        assert!(Grid::<f64>::new(6).is_err());
        assert!(Grid::<f64>::new(9).is_err());
        let g = grid(16);
        assert_eq!(g.nodes()[0], 0.0);
        assert!((g.nodes()[15] - (std::f64::consts::TAU - g.dx())).abs() < 1e-15);
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn derivative_of_sine_and_constant() {
        let g = grid(64);
        let f = Field::from_fn(&g, f64::sin);
        let df = derivative(&f, 1).unwrap();
        for (x, v) in g.nodes().iter().zip(df.samples()) {
            assert!((v - x.cos()).abs() <= 1e-12);
        }
        let c = Field::constant(&g, 3.7);
        assert!(derivative(&c, 1).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn second_derivative_matches_fourth_order_stencil() {
        // O(dx^4) error of the centered stencil shrinks ~16x per doubling
        let mut errs = Vec::new();
        for &n in &[64usize, 128, 256] {
            let g = grid(n);
            let f = random_bandlimited(&g, 4, 11);
            let d2 = derivative(&f, 2).unwrap();
            let s = f.samples();
            let h = g.dx();
            let err = (0..n)
                .map(|i| {
                    let at = |o: isize| s[((i as isize + o).rem_euclid(n as isize)) as usize];
                    let fd = (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2))
                        / (12.0 * h * h);
                    (fd - d2.samples()[i]).abs()
                })
                .fold(0.0, f64::max);
            errs.push(err);
        }
        assert!(errs[0] / errs[1] > 14.0 && errs[1] / errs[2] > 14.0, "{errs:?}");
    }

    #[test]
    fn derivative_rejects_nan() {
        let g = grid(16);
        let mut f = Field::zeros(&g);
        f.samples_mut()[3] = f64::NAN;
        assert!(matches!(derivative(&f, 1), Err(Error::NumericFault { .. })));
    }

    #[test]
    fn antiderivative_of_cosine() {
        let g = grid(32);
        let f = Field::from_fn(&g, |x| (2.0 * x).cos());
        let a = antiderivative_zero_mean(&f).unwrap();
        for (x, v) in g.nodes().iter().zip(a.samples()) {
            assert!((v - (2.0 * x).sin() / 2.0).abs() < 1e-14);
        }
        let one = Field::constant(&g, 1.0);
        assert!(matches!(
            antiderivative_zero_mean(&one),
            Err(Error::NonZeroMean { .. })
        ));
    }

    #[test]
    fn antiderivative_round_trip() {
        let g = grid(128);
        for seed in 0..50 {
            let f = random_bandlimited(&g, 20, seed);
            let f = f.map(|v| v - f.mean());
            let back = derivative(&antiderivative_zero_mean(&f).unwrap(), 1).unwrap();
            let err = (&back - &f).max_abs();
            assert!(err <= 1e-10, "seed {seed}: {err}");
        }
    }

    #[test]
    fn frac_laplacian_eigenfunction() {
        let g = grid(64);
        let f = Field::from_fn(&g, |x| (2.0 * x).cos());
        let l = frac_laplacian(&f, 1.5).unwrap();
        let lam = -(2.0f64).powf(1.5);
        assert!((lam + 2.828427).abs() < 1e-6);
        for (x, v) in g.nodes().iter().zip(l.samples()) {
            assert!((v - lam * (2.0 * x).cos()).abs() < 1e-12);
        }
        assert!(frac_laplacian(&Field::constant(&g, 4.0), 0.7).unwrap().max_abs() < 1e-13);
        assert!(frac_laplacian(&f, 2.0).is_err());
        assert!(frac_laplacian(&f, 0.0).is_err());
    }

    #[test]
    fn dealias_projection() {
        let g = grid(48);
        let f = random_bandlimited(&g, 16, 3);
        let d = dealias(&f);
        assert!((&d - &f).max_abs() < 1e-13);
        let rough = Field::from_fn(&g, |x| (x * 23.0).cos() + (x * 5.0).sin());
        let once = dealias(&rough);
        let twice = dealias(&once);
        assert!((&once - &twice).max_abs() < 1e-14);
        let top = Field::from_fn(&g, |x| (x * 23.0).cos());
        assert!(dealias(&top).max_abs() < 1e-14);
    }

    #[test]
    fn quadratures() {
        let g = grid(64);
        assert!(integral(&Field::from_fn(&g, f64::sin)).abs() < 1e-14);
        assert!((integral(&Field::constant(&g, 1.0)) - std::f64::consts::TAU).abs() < 1e-14);
        let a = Field::from_fn(&g, |x| 1.0 + x.cos());
        let b = Field::from_fn(&g, |x| 2.0 + (2.0 * x).sin() + x.cos());
        let sep = double_integral(&g, |i, j| a.samples()[i] * b.samples()[j]);
        assert!((sep - integral(&a) * integral(&b)).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let g = Grid::<f32>::new(32).unwrap();
        let f = Field::from_fn(&g, f32::sin);
        let df = derivative(&f, 1).unwrap();
        for (x, v) in g.nodes().iter().zip(df.samples()) {
            assert!((v - x.cos()).abs() < 1e-5);
        }
    }
}
