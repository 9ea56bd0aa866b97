//! Singular-kernel quadrature for the fractional Laplacian on the torus.
//!
//! `ℒ^s f(x) = ∫_𝕋 φ_s(x−y)(f(y)−f(x)) dy` with the periodized kernel
//! `φ_s(z) = c Σ_{k∈ℤ} |z+2πk|^{−1−s}`. The constant `c` is the whole-line
//! normalization for which the operator has symbol exactly `−|k|^s`.
//!
//! The rectangle rule with the diagonal node dropped converges only like
//! `h^{2−s}`. For an integrand `|z|^{−1−s} E(z)` with `E` smooth and even part
//! `Σ_j a_j z^{2j}`, the error of that rule has the exact expansion
//! `Σ_j 2 a_j ζ(1+s−2j) h^{2j−s}` (generalized Euler–Maclaurin), so the first
//! [`CORRECTION_TERMS`] of it are subtracted using finite-difference Taylor
//! coefficients. No Fourier transform is involved anywhere in this module.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::torus::{check_order, Field, Grid};

/// Number of zeta-function endpoint corrections applied by the quadratures.
pub const CORRECTION_TERMS: usize = 3;

/// Half-width of the central finite-difference stencils (15 points).
const STENCIL_HALF_WIDTH: usize = 7;

/// Bernoulli numbers `B_2, B_4, …, B_20`.
const BERNOULLI: [f64; 10] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
    -3617.0 / 510.0,
    43867.0 / 798.0,
    -174611.0 / 330.0,
];

/// Hurwitz zeta `ζ(σ, a) = Σ_{l≥0} (a+l)^{−σ}` (analytically continued in `σ`),
/// evaluated by Euler–Maclaurin summation. Requires `a > 0`, `σ ≠ 1`.
pub fn hurwitz_zeta(sigma: f64, a: f64) -> f64 {
    assert!(a > 0.0, "hurwitz_zeta needs a > 0");
    assert!((sigma - 1.0).abs() > 1e-14, "pole at sigma = 1");
    const DIRECT: usize = 16;
    let mut sum = 0.0;
    for l in 0..DIRECT {
        sum += (a + l as f64).powf(-sigma);
    }
    let b = a + DIRECT as f64;
    sum += b.powf(1.0 - sigma) / (sigma - 1.0) + 0.5 * b.powf(-sigma);
    // rising factorial σ(σ+1)…(σ+2j−2) over (2j)!
    let mut rising = sigma;
    let mut fact = 2.0;
    let mut power = b.powf(-sigma - 1.0);
    for (j, bern) in BERNOULLI.iter().enumerate() {
        let term = bern / fact * rising * power;
        sum += term;
        let two_j = 2.0 * (j as f64 + 1.0);
        rising *= (sigma + two_j - 1.0) * (sigma + two_j);
        fact *= (two_j + 1.0) * (two_j + 2.0);
        power /= b * b;
    }
    sum
}

/// Riemann zeta for real `σ ≠ 1`.
pub fn riemann_zeta(sigma: f64) -> f64 {
    hurwitz_zeta(sigma, 1.0)
}

/// Whole-line constant `c_{1,s} = 2^s Γ((1+s)/2) / (√π |Γ(−s/2)|)`.
pub fn whole_line_constant(s: f64) -> f64 {
    2f64.powf(s) * gamma(0.5 * (1.0 + s)) / (std::f64::consts::PI.sqrt() * gamma(-0.5 * s).abs())
}

/// Parameters of the periodized fractional kernel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FracKernelSpec {
    pub s: f64,
    pub c_norm: f64,
    /// Explicitly summed images `|k| ≤ k_images`; the rest is summed by Euler–Maclaurin.
    pub k_images: usize,
}

impl FracKernelSpec {
    pub fn new(s: f64, k_images: usize) -> Result<Self> {
        check_order(s)?;
        let spec = FracKernelSpec {
            s,
            c_norm: whole_line_constant(s),
            k_images,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Same order with an arbitrary constant (used for fault injection).
    pub fn with_c_norm(mut self, c_norm: f64) -> Result<Self> {
        self.c_norm = c_norm;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_order(self.s)?;
        if !(self.c_norm > 0.0 && self.c_norm.is_finite()) {
            return Err(Error::param("c_norm", "> 0", self.c_norm));
        }
        if self.k_images < 1 {
            return Err(Error::param("k_images", ">= 1", self.k_images));
        }
        Ok(())
    }

    /// `φ_s(z)` for `z ∈ (0, 2π)`.
    pub fn eval(&self, z: f64) -> f64 {
        let tau = std::f64::consts::TAU;
        let p = 1.0 + self.s;
        let k = self.k_images as i64;
        let mut sum = 0.0;
        for img in -k..=k {
            sum += (z + tau * img as f64).abs().powf(-p);
        }
        let w = z / tau;
        let kk = (self.k_images + 1) as f64;
        sum += tau.powf(-p) * (hurwitz_zeta(p, kk + w) + hurwitz_zeta(p, kk - w));
        self.c_norm * sum
    }

    /// Coefficients `2 c ζ(1+s−2j) h^{2j−s}` of the rectangle-rule error, `j = 1..=J`.
    pub fn correction_coefficients(&self, h: f64) -> [f64; CORRECTION_TERMS] {
        let mut out = [0.0; CORRECTION_TERMS];
        for (j, slot) in out.iter_mut().enumerate() {
            let two_j = 2.0 * (j as f64 + 1.0);
            *slot = 2.0 * self.c_norm * riemann_zeta(1.0 + self.s - two_j) * h.powf(two_j - self.s);
        }
        out
    }
}

/// Circulant row `w_m = h·φ_s(m h)`, `m = 1..n−1` (`w_0 = 0`), plus endpoint corrections.
#[derive(Clone, Debug)]
pub struct KernelRow<T: Scalar> {
    pub spec: FracKernelSpec,
    weights: Vec<T>,
    corrections: [T; CORRECTION_TERMS],
}

impl<T: Scalar> KernelRow<T> {
    pub fn new(grid: &Grid<T>, spec: FracKernelSpec) -> Result<Self> {
        spec.validate()?;
        let n = grid.n();
        let h = grid.dx().to_f64_lossy();
        let mut weights = vec![T::zero(); n];
        for m in 1..n {
            // φ is even about π, evaluate once per pair
            let mm = m.min(n - m);
            let val = if mm == m {
                h * spec.eval(m as f64 * h)
            } else {
                weights[mm].to_f64_lossy()
            };
            weights[m] = T::lit(val);
        }
        let c = spec.correction_coefficients(h);
        Ok(KernelRow {
            spec,
            weights,
            corrections: c.map(T::lit),
        })
    }

    /// `w_m`; index `0` is the dropped diagonal.
    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn corrections(&self) -> &[T; CORRECTION_TERMS] {
        &self.corrections
    }
}

/// Fornberg weights for the `order`-th derivative on the integer offsets
/// `−half..=half` at zero (unit spacing).
pub fn fornberg_weights(order: usize, half: usize) -> Vec<f64> {
    let offsets: Vec<f64> = (-(half as i64)..=half as i64).map(|k| k as f64).collect();
    let np = offsets.len();
    let m = order;
    // c[i][k]: weight of point i for derivative k
    let mut c = vec![vec![0.0; m + 1]; np];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = offsets[0];
    for i in 1..np {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = offsets[i];
        for j in 0..i {
            let c3 = offsets[i] - offsets[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=mn).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    c.into_iter().map(|row| row[m]).collect()
}

/// Central finite-difference derivatives of orders `1..=6` on a periodic grid.
#[derive(Clone, Debug)]
pub struct Stencils {
    weights: Vec<Vec<f64>>,
}

impl Default for Stencils {
    fn default() -> Self {
        Self::new()
    }
}

impl Stencils {
    pub const MAX_ORDER: usize = 6;

    pub fn new() -> Self {
        let weights = (0..=Self::MAX_ORDER)
            .map(|d| {
                if d == 0 {
                    Vec::new()
                } else {
                    fornberg_weights(d, STENCIL_HALF_WIDTH)
                }
            })
            .collect();
        Stencils { weights }
    }

    /// `d^order f / dx^order` at every node. Written in difference form so
    /// constants map to exact zeros.
    pub fn apply<T: Scalar>(&self, f: &[T], order: usize, h: T) -> Vec<T> {
        assert!((1..=Self::MAX_ORDER).contains(&order));
        let n = f.len() as isize;
        let half = STENCIL_HALF_WIDTH as isize;
        let w: Vec<T> = self.weights[order].iter().map(|&v| T::lit(v)).collect();
        let scale = h.powi(-(order as i32));
        (0..n)
            .map(|i| {
                let fi = f[i as usize];
                let mut acc = T::zero();
                for k in 1..=half {
                    let fp = f[(i + k).rem_euclid(n) as usize] - fi;
                    let fm = f[(i - k).rem_euclid(n) as usize] - fi;
                    acc = acc + w[(half + k) as usize] * fp + w[(half - k) as usize] * fm;
                }
                acc * scale
            })
            .collect()
    }

    /// Derivatives `f^{(1)}, …, f^{(max)}` (index `d−1` holds order `d`).
    pub fn all<T: Scalar>(&self, f: &[T], max: usize, h: T) -> Vec<Vec<T>> {
        (1..=max).map(|d| self.apply(f, d, h)).collect()
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Direct quadrature of `ℒ^s f` with the periodized kernel and endpoint corrections.
pub fn frac_laplacian_quadrature<T: Scalar>(f: &Field<T>, spec: &FracKernelSpec) -> Result<Field<T>> {
    let row = KernelRow::new(f.grid(), *spec)?;
    frac_laplacian_quadrature_with(f, &row, &Stencils::new())
}

/// As [`frac_laplacian_quadrature`] with a prebuilt kernel row.
pub fn frac_laplacian_quadrature_with<T: Scalar>(
    f: &Field<T>,
    row: &KernelRow<T>,
    stencils: &Stencils,
) -> Result<Field<T>> {
    f.ensure_finite("frac_laplacian_quadrature")?;
    let grid = f.grid();
    let n = grid.n();
    let h = grid.dx();
    let s = f.samples();
    let w = row.weights();
    let even: Vec<Vec<T>> = (1..=CORRECTION_TERMS)
        .map(|j| stencils.apply(s, 2 * j, h))
        .collect();
    let corr = row.corrections();
    let mut out = vec![T::zero(); n];
    for i in 0..n {
        let fi = s[i];
        let mut acc = T::zero();
        for m in 1..n {
            let j = if i + m >= n { i + m - n } else { i + m };
            acc = acc + w[m] * (s[j] - fi);
        }
        for (jj, d) in even.iter().enumerate() {
            let a = d[i] / T::lit(factorial(2 * (jj + 1)));
            acc = acc - corr[jj] * a;
        }
        out[i] = acc;
    }
    let out = Field::new(grid, out)?;
    out.ensure_finite("frac_laplacian_quadrature")?;
    Ok(out)
}

/// Taylor data for pair integrands `G_x(y) = w(x)(a(y)−a(x))(b(y)−b(x))w(y)`:
/// the even coefficients `a_j(x) = G_x^{(2j)}(x)/(2j)!` needed by the corrections.
pub fn pair_taylor_coefficients<T: Scalar>(
    a: &[T],
    b: &[T],
    weight: Option<&[T]>,
    h: T,
    stencils: &Stencils,
) -> Vec<Vec<T>> {
    let n = a.len();
    let max = 2 * CORRECTION_TERMS - 1;
    let da = stencils.all(a, max, h);
    let db = stencils.all(b, max, h);
    let dw = weight.map(|w| stencils.all(w, max, h));
    let mut coeffs = vec![vec![T::zero(); n]; CORRECTION_TERMS];
    for i in 0..n {
        let w0 = weight.map_or(T::one(), |w| w[i]);
        let wd = |r: usize| -> T {
            if r == 0 {
                w0
            } else {
                dw.as_ref().map_or(T::zero(), |d| d[r - 1][i])
            }
        };
        // B̃ = (b(y)−b(x)) w(y); B̃^{(r)}(x) = Σ_{l=1}^{r} C(r,l) b^{(l)} w^{(r−l)}
        let btilde = |r: usize| -> T {
            (1..=r)
                .map(|l| T::lit(binomial(r, l)) * db[l - 1][i] * wd(r - l))
                .sum()
        };
        for (jj, slot) in coeffs.iter_mut().enumerate() {
            let order = 2 * (jj + 1);
            let g: T = (1..order)
                .map(|k| T::lit(binomial(order, k)) * da[k - 1][i] * btilde(order - k))
                .sum();
            slot[i] = w0 * g / T::lit(factorial(order));
        }
    }
    coeffs
}

/// Corrected `∬ φ_s(x−y) G(x,y) dx dy` for integrands vanishing quadratically
/// on the diagonal. `g(i, j)` evaluates `G(x_i, x_j)`; `taylor[j−1][i]` holds
/// the even Taylor coefficient `a_j` of `y ↦ G(x_i, y)` at `y = x_i`.
pub fn singular_double_integral<T: Scalar>(
    row: &KernelRow<T>,
    n: usize,
    h: T,
    g: impl Fn(usize, usize) -> T,
    taylor: &[Vec<T>],
) -> T {
    let w = row.weights();
    let corr = row.corrections();
    let mut total = T::zero();
    for i in 0..n {
        let mut acc = T::zero();
        for m in 1..n {
            let j = if i + m >= n { i + m - n } else { i + m };
            acc = acc + w[m] * g(i, j);
        }
        for (jj, t) in taylor.iter().enumerate().take(CORRECTION_TERMS) {
            acc = acc - corr[jj] * t[i];
        }
        total = total + acc;
    }
    total * h
}
