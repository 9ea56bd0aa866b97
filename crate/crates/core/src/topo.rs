//! Topological fractional operator with mass-distance weighting.
//!
//! `ℒ^{s,τ} f(x) = ∫ φ(x,y)(f(y)−f(x)) dy`,
//! `φ(x,y) = c·h(x−y) / (|x−y|^{1+s−τ} d^τ(x,y))`, where `d(x,y)` is the
//! density mass between `x` and `y` along the shorter arc and `h` a smooth
//! cutoff. Near the diagonal `φ ≈ c ρ(x)^{−τ}|x−y|^{−1−s}`, and the leading
//! rectangle-rule error is proportional to `(ρ^{−τ} f_x)_x`, which is removed
//! with a finite-difference estimate.

use crate::error::{Error, Result};
use crate::kernel::{whole_line_constant, FracKernelSpec, KernelRow, Stencils, CORRECTION_TERMS};
use crate::scalar::Scalar;
use crate::torus::{antiderivative_zero_mean_tol, check_order, derivative, inner, integral, l2_norm, Field};

/// Kernel cutoff `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cutoff {
    /// Smooth bump, `≡ 1` on `|z| ≤ π/4`, zero for `|z| ≥ π/2`.
    Bump,
    /// Full periodized kernel (`h ≡ 1` with all images).
    Periodized { k_images: usize },
}

fn smooth_unit(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else {
        (-1.0 / t).exp()
    }
}

/// Cutoff profile built from `exp(−1/t)`; `C^∞`, equals one on `|z| ≤ π/4`.
pub fn bump_cutoff(z: f64) -> f64 {
    let quarter = std::f64::consts::FRAC_PI_4;
    let t = (z.abs() - quarter) / quarter;
    if t <= 0.0 {
        1.0
    } else if t >= 1.0 {
        0.0
    } else {
        let a = smooth_unit(1.0 - t);
        a / (a + smooth_unit(t))
    }
}

/// Cumulative mass `R(x_i) = ∫_0^{x_i} ρ` at the grid nodes.
pub fn cumulative_mass<T: Scalar>(rho: &Field<T>) -> Result<Vec<T>> {
    let mean = rho.mean();
    let fluct = rho.map(|v| v - mean);
    let g = antiderivative_zero_mean_tol(&fluct, T::infinity())?;
    let g0 = g.samples()[0];
    Ok(rho
        .grid()
        .nodes()
        .iter()
        .zip(g.samples())
        .map(|(&x, &gv)| mean * x + gv - g0)
        .collect())
}

/// Mass distance between nodes `i` and `i+m` (`|m| ≤ n/2`) along the arc `m` spans.
fn arc_mass<T: Scalar>(cum: &[T], total: T, i: usize, m: isize) -> T {
    let n = cum.len() as isize;
    let j = i as isize + m;
    let wraps = j.div_euclid(n);
    let jj = j.rem_euclid(n) as usize;
    (cum[jj] + total * T::from_isize(wraps).unwrap() - cum[i]).abs()
}

fn validate(s: f64, tau: f64) -> Result<()> {
    check_order(s)?;
    if !(tau >= 0.0 && tau < s) {
        return Err(Error::param("tau", "0 <= tau < s", tau));
    }
    Ok(())
}

/// `ℒ^{s,τ} f` with the bump cutoff and the whole-line normalization constant.
pub fn topo_operator<T: Scalar>(f: &Field<T>, rho: &Field<T>, s: T, tau: T) -> Result<Field<T>> {
    topo_operator_with(f, rho, s, tau, Cutoff::Bump)
}

pub fn topo_operator_with<T: Scalar>(
    f: &Field<T>,
    rho: &Field<T>,
    s: T,
    tau: T,
    cutoff: Cutoff,
) -> Result<Field<T>> {
    let (s64, tau64) = (s.to_f64_lossy(), tau.to_f64_lossy());
    validate(s64, tau64)?;
    f.ensure_finite("topo_operator")?;
    rho.ensure_finite("topo_operator")?;
    if rho.min() <= T::zero() {
        let j = rho.argmin();
        return Err(Error::Vacuum {
            min_rho: rho.min().to_f64_lossy(),
            x: rho.grid().nodes()[j].to_f64_lossy(),
            t: f64::NAN,
        });
    }
    let grid = f.grid();
    let n = grid.n();
    let h = grid.dx();
    let h64 = h.to_f64_lossy();
    let c = whole_line_constant(s64);
    let cum = cumulative_mass(rho)?;
    let total = integral(rho);

    let periodized = match cutoff {
        Cutoff::Periodized { k_images } => {
            Some(KernelRow::new(grid, FracKernelSpec::new(s64, k_images)?)?)
        }
        Cutoff::Bump => None,
    };
    let half = (n / 2) as isize;
    // base weights by signed offset m ∈ (−n/2, n/2]
    let base: Vec<(isize, T)> = (-half + 1..=half)
        .filter(|&m| m != 0)
        .filter_map(|m| {
            let z = m as f64 * h64;
            let w = match &periodized {
                Some(row) => row.weights()[m.rem_euclid(n as isize) as usize].to_f64_lossy(),
                None => {
                    let cut = bump_cutoff(z);
                    if cut == 0.0 {
                        return None;
                    }
                    h64 * c * cut * z.abs().powf(-1.0 - s64)
                }
            };
            Some((m, T::lit(w)))
        })
        .collect();

    let fs = f.samples();
    let rs = rho.samples();
    let stencils = Stencils::new();
    let d1f = stencils.apply(fs, 1, h);
    let d2f = stencils.apply(fs, 2, h);
    let d1r = stencils.apply(rs, 1, h);
    let coeff = FracKernelSpec::new(s64, 1)?.correction_coefficients(h64);
    let higher: Vec<Vec<T>> = if tau64 == 0.0 {
        (2..=CORRECTION_TERMS).map(|j| stencils.apply(fs, 2 * j, h)).collect()
    } else {
        Vec::new()
    };
    let fact = [2.0, 24.0, 720.0];

    let mut out = vec![T::zero(); n];
    for i in 0..n {
        let fi = fs[i];
        let mut acc = T::zero();
        for &(m, w) in &base {
            let j = (i as isize + m).rem_euclid(n as isize) as usize;
            let mut weight = w;
            if tau64 != 0.0 {
                let z = T::from_isize(m).unwrap() * h;
                let d = arc_mass(&cum, total, i, m);
                weight = weight * (z.abs() / d).powf(tau);
            }
            acc = acc + weight * (fs[j] - fi);
        }
        // a_1 = ½ (ρ^{−τ} f_x)_x = ½ ρ^{−τ}(f_xx − τ ρ_x f_x / ρ)
        let rt = rs[i].powf(-tau);
        let a1 = rt * (d2f[i] - tau * d1r[i] * d1f[i] / rs[i]) / T::lit(fact[0]);
        acc = acc - T::lit(coeff[0]) * a1;
        for (k, d) in higher.iter().enumerate() {
            acc = acc - T::lit(coeff[k + 1]) * d[i] / T::lit(fact[k + 1]);
        }
        out[i] = acc;
    }
    let out = Field::new(grid, out)?;
    out.ensure_finite("topo_operator")?;
    Ok(out)
}

/// One row of the `s → 2` limit report.
#[derive(Clone, Debug, PartialEq)]
pub struct LimitEntry {
    pub s: f64,
    /// Relative misfit `min_λ ‖A − λB‖ / ‖B‖`.
    pub delta: f64,
    /// Best-fit scalar `λ`.
    pub lambda: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LimitReport {
    pub entries: Vec<LimitEntry>,
    pub degenerate: bool,
}

impl LimitReport {
    /// Misfit strictly decreasing along the (increasing) order list.
    pub fn decreasing(&self) -> bool {
        !self.degenerate && self.entries.windows(2).all(|w| w[1].delta < w[0].delta)
    }
}

/// Compares `A = (2−s)·ℒ^{s,τ}f` against `B = (ρ^{−τ} f_x)_x` for each `s`.
///
/// `A` uses the unnormalized kernel (the whole-line constant is divided out),
/// so `λ → 1` in the limit.
pub fn limit_s_to_2_check<T: Scalar>(
    f: &Field<T>,
    rho: &Field<T>,
    tau: T,
    s_list: &[T],
) -> Result<LimitReport> {
    if s_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("s_list", "strictly increasing", format!("{:?}", s_list)));
    }
    let fx = derivative(f, 1)?;
    let flux = fx.zip_map(rho, |a, r| a * r.powf(-tau));
    let target = derivative(&flux, 1)?;
    let bnorm = l2_norm(&target);
    if bnorm <= T::lit(1e-12) * (T::one() + f.max_abs()) {
        return Ok(LimitReport {
            entries: s_list
                .iter()
                .map(|&s| LimitEntry {
                    s: s.to_f64_lossy(),
                    delta: f64::NAN,
                    lambda: f64::NAN,
                })
                .collect(),
            degenerate: true,
        });
    }
    let mut entries = Vec::with_capacity(s_list.len());
    for &s in s_list {
        let op = topo_operator(f, rho, s, tau)?;
        let scale = (T::lit(2.0) - s) / T::lit(whole_line_constant(s.to_f64_lossy()));
        let a = op.scale(scale);
        let lambda = inner(&a, &target) / inner(&target, &target);
        let misfit = a.axpy(-lambda, &target);
        entries.push(LimitEntry {
            s: s.to_f64_lossy(),
            delta: (l2_norm(&misfit) / bnorm).to_f64_lossy(),
            lambda: lambda.to_f64_lossy(),
        });
    }
    Ok(LimitReport {
        entries,
        degenerate: false,
    })
}
