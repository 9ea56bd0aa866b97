//! Constitutive laws, dissipation operators, transported quantities and the
//! semi-discrete right-hand side of
//!
//! ```text
//! ρ_t + (ρu)_x = 0
//! (ρu)_t + (ρu²)_x + p(ρ)_x = c_nl 𝒟_nl + c_loc 𝒟_loc + ρ f
//! ```
//!
//! with `p = c_p ρ^γ`, `μ = c_μ ρ^α`, `𝒟_loc = (μ u_x)_x` and
//! `𝒟_nl = ρ[ℒ^s(ρu) − u ℒ^s ρ]`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::torus::{antiderivative_zero_mean_tol, dealias, derivative, frac_laplacian, frac_symbol, Field, Grid, Spectrum};

/// Deepest level of the `Xₙ` recursion exposed by [`x_hierarchy`].
pub const HIERARCHY_CAP: usize = 4;

/// Relative separation below which [`phi_s_rho_factor`] switches to its Taylor form.
const FACTOR_SERIES_THRESHOLD: f64 = 1e-5;

/// Material constants and the kernel knobs shared by the diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams<T: Scalar> {
    pub c_p: T,
    pub gamma: T,
    pub c_mu: T,
    pub alpha: T,
    pub c_nl: T,
    pub c_loc: T,
    pub s: T,
    /// Exponent of the mass distance in the topological kernel.
    pub tau: T,
    /// Reference density of the isothermal pressure potential.
    pub rho_bar: T,
    /// Periodization images used by the direct double integrals.
    pub k_images: usize,
}

impl<T: Scalar> Default for ModelParams<T> {
    fn default() -> Self {
        ModelParams {
            c_p: T::one(),
            gamma: T::lit(2.0),
            c_mu: T::one(),
            alpha: T::one(),
            c_nl: T::zero(),
            c_loc: T::one(),
            s: T::lit(1.5),
            tau: T::zero(),
            rho_bar: T::one(),
            k_images: 64,
        }
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Checks every parameter domain, but allows the dissipation-free system.
    pub fn check_domains(&self) -> Result<()> {
        let f = |v: T| v.to_f64_lossy();
        let all = [
            self.c_p, self.gamma, self.c_mu, self.alpha, self.c_nl, self.c_loc, self.s, self.tau, self.rho_bar,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("model", "finite values", format!("{self:?}")));
        }
        if self.c_p < T::zero() {
            return Err(Error::param("c_p", ">= 0", f(self.c_p)));
        }
        if self.gamma <= T::zero() {
            return Err(Error::param("gamma", "> 0", f(self.gamma)));
        }
        if self.c_mu <= T::zero() {
            return Err(Error::param("c_mu", "> 0", f(self.c_mu)));
        }
        if self.alpha < T::zero() {
            return Err(Error::param("alpha", ">= 0", f(self.alpha)));
        }
        if self.c_nl < T::zero() {
            return Err(Error::param("c_nl", ">= 0", f(self.c_nl)));
        }
        if self.c_loc < T::zero() {
            return Err(Error::param("c_loc", ">= 0", f(self.c_loc)));
        }
        if !(self.s > T::zero() && self.s < T::lit(2.0)) {
            return Err(Error::param("s", "(0,2)", f(self.s)));
        }
        if !(self.tau >= T::zero() && self.tau < self.s) {
            return Err(Error::param("tau", "0 <= tau < s", f(self.tau)));
        }
        if self.rho_bar <= T::zero() {
            return Err(Error::param("rho_bar", "> 0", f(self.rho_bar)));
        }
        if self.k_images == 0 {
            return Err(Error::param("k_images", ">= 1", 0));
        }
        Ok(())
    }

    /// [`check_domains`](Self::check_domains) plus `c_nl + c_loc > 0`.
    pub fn validate(&self) -> Result<()> {
        self.check_domains()?;
        if self.c_nl + self.c_loc <= T::zero() {
            return Err(Error::param("c_nl + c_loc", "> 0", (self.c_nl + self.c_loc).to_f64_lossy()));
        }
        Ok(())
    }

    /// Order of the dissipation: 2 with a local part, `s` otherwise.
    pub fn sigma(&self) -> T {
        if self.c_loc > T::zero() {
            T::lit(2.0)
        } else {
            self.s
        }
    }

    pub fn is_isothermal(&self) -> bool {
        self.gamma == T::one()
    }
}

/// Density and velocity at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct State<T: Scalar> {
    pub rho: Field<T>,
    pub u: Field<T>,
    pub t: T,
}

impl<T: Scalar> State<T> {
    pub fn new(rho: Field<T>, u: Field<T>, t: T) -> Result<Self> {
        if rho.grid() != u.grid() {
            return Err(Error::GridMismatch(format!("rho has n = {}, u has n = {}", rho.len(), u.len())));
        }
        Ok(State { rho, u, t })
    }

    pub fn grid(&self) -> &Grid<T> {
        self.rho.grid()
    }

    /// Pointwise momentum density `ρu`.
    pub fn momentum_density(&self) -> Field<T> {
        &self.rho * &self.u
    }
}

/// Time derivatives of `(ρ, ρu)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tendency<T: Scalar> {
    pub d_rho: Field<T>,
    pub d_m: Field<T>,
}

/// Deterministic body force profiles.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ForcingKind {
    #[default]
    Zero,
    /// `A sin(kx) cos(ωt)`
    StandingWave,
    /// `A sin(kx − ωt)`
    TravelingWave,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Forcing<T: Scalar> {
    pub kind: ForcingKind,
    pub amplitude: T,
    pub mode: u32,
    pub frequency: T,
}

impl<T: Scalar> Default for Forcing<T> {
    fn default() -> Self {
        Forcing::zero()
    }
}

impl<T: Scalar> Forcing<T> {
    pub fn zero() -> Self {
        Forcing {
            kind: ForcingKind::Zero,
            amplitude: T::zero(),
            mode: 1,
            frequency: T::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.kind == ForcingKind::Zero || self.amplitude == T::zero()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() || !self.frequency.is_finite() {
            return Err(Error::param("force", "finite amplitude and frequency", format!("{self:?}")));
        }
        Ok(())
    }

    pub fn eval(&self, grid: &Grid<T>, t: T) -> Field<T> {
        let k = T::from_u32(self.mode).unwrap();
        let (a, w) = (self.amplitude, self.frequency);
        match self.kind {
            ForcingKind::Zero => Field::zeros(grid),
            ForcingKind::StandingWave => {
                let ct = (w * t).cos();
                Field::from_fn(grid, |x| a * (k * x).sin() * ct)
            }
            ForcingKind::TravelingWave => Field::from_fn(grid, |x| a * (k * x - w * t).sin()),
        }
    }

    /// `sup |f|` over space and time.
    pub fn sup_norm(&self) -> T {
        if self.kind == ForcingKind::Zero {
            T::zero()
        } else {
            self.amplitude.abs()
        }
    }
}

/// Fails with a vacuum error unless `min ρ > floor`.
pub fn check_vacuum<T: Scalar>(rho: &Field<T>, floor: T, t: T) -> Result<()> {
    rho.ensure_finite("density")?;
    let j = rho.argmin();
    let m = rho.samples()[j];
    if m > floor {
        Ok(())
    } else {
        Err(Error::Vacuum {
            min_rho: m.to_f64_lossy(),
            x: rho.grid().nodes()[j].to_f64_lossy(),
            t: t.to_f64_lossy(),
        })
    }
}

fn positive<T: Scalar>(rho: &Field<T>) -> Result<()> {
    check_vacuum(rho, T::zero(), T::nan())
}

pub fn pressure<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(rho)?;
    Ok(rho.map(|r| p.c_p * r.pow_law(p.gamma)))
}

pub fn pressure_prime<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(rho)?;
    Ok(rho.map(|r| p.c_p * p.gamma * r.pow_law(p.gamma - T::one())))
}

/// `h′(ρ) = p′(ρ)/ρ`.
pub fn enthalpy_prime<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(rho)?;
    Ok(rho.map(|r| p.c_p * p.gamma * r.pow_law(p.gamma - T::lit(2.0))))
}

pub fn viscosity<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    if p.alpha < T::zero() {
        return Err(Error::param("alpha", ">= 0", p.alpha.to_f64_lossy()));
    }
    positive(rho)?;
    Ok(rho.map(|r| p.c_mu * r.pow_law(p.alpha)))
}

/// `Q_loc = μ(ρ) ρ_x / ρ²`.
pub fn q_local<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    let mu = viscosity(rho, p)?;
    let rx = derivative(rho, 1)?;
    let flux = &mu * &rx;
    Ok(flux.zip_map(rho, |v, r| v / (r * r)))
}

/// `Q_nl = ∂_x⁻¹ ℒ^s ρ` (zero mean).
pub fn q_nonlocal<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    let l = frac_laplacian(rho, p.s)?;
    antiderivative_zero_mean_tol(&l, T::infinity())
}

/// `X = u + c_nl Q_nl + c_loc Q_loc`.
pub fn x_variable<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(&state.rho)?;
    let mut x = state.u.clone();
    if p.c_nl != T::zero() {
        x = x.axpy(p.c_nl, &q_nonlocal(&state.rho, p)?);
    }
    if p.c_loc != T::zero() {
        x = x.axpy(p.c_loc, &q_local(&state.rho, p)?);
    }
    Ok(x)
}

/// `X₀ = X`, `Xₙ = ρ⁻¹ ∂_x Xₙ₋₁` for `n = 1..=n_max`.
pub fn x_hierarchy<T: Scalar>(state: &State<T>, p: &ModelParams<T>, n_max: usize) -> Result<Vec<Field<T>>> {
    if n_max > HIERARCHY_CAP {
        return Err(Error::param("n_max", "<= 4", n_max));
    }
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(x_variable(state, p)?);
    for n in 1..=n_max {
        let d = derivative(&out[n - 1], 1)?;
        out.push(d.zip_map(&state.rho, |v, r| v / r));
    }
    Ok(out)
}

/// Fields derived from a state by the transport structure.
#[derive(Clone, Debug)]
pub struct DerivedFields<T: Scalar> {
    pub q_loc: Field<T>,
    pub q_nl: Field<T>,
    pub x_var: Field<T>,
    pub x_n: Vec<Field<T>>,
    pub h_prime: Field<T>,
}

pub fn derived_fields<T: Scalar>(state: &State<T>, p: &ModelParams<T>, n_max: usize) -> Result<DerivedFields<T>> {
    let x_n = x_hierarchy(state, p, n_max)?;
    Ok(DerivedFields {
        q_loc: q_local(&state.rho, p)?,
        q_nl: q_nonlocal(&state.rho, p)?,
        x_var: x_n[0].clone(),
        x_n,
        h_prime: enthalpy_prime(&state.rho, p)?,
    })
}

/// `𝒟_loc = (μ(ρ) u_x)_x`.
pub fn d_local<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    let mu = viscosity(&state.rho, p)?;
    let ux = derivative(&state.u, 1)?;
    derivative(&dealias(&(&mu * &ux)), 1)
}

/// `𝒟_nl = ρ ℒ^s(ρu) − ρu ℒ^s ρ`.
pub fn d_nonlocal<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(&state.rho)?;
    let m = state.momentum_density();
    d_nonlocal_from(&state.rho, &m, p.s)
}

fn d_nonlocal_from<T: Scalar>(rho: &Field<T>, m: &Field<T>, s: T) -> Result<Field<T>> {
    let lm = frac_laplacian(m, s)?;
    let lr = frac_laplacian(rho, s)?;
    Ok(&dealias(&(rho * &lm)) - &dealias(&(m * &lr)))
}

/// Semi-discrete tendency; every nonlinear product is dealiased.
///
/// The momentum tendency is assembled as `−∂ₓ P[ρu² + p − c_loc μ u_x] + P[S]`
/// with `S = c_nl(ρ ℒ^s m − m ℒ^s ρ) + ρf` and `P` the two-thirds projection,
/// so that only one inverse transform is spent on it.
pub fn rhs<T: Scalar>(state: &State<T>, p: &ModelParams<T>, force: &Forcing<T>) -> Result<Tendency<T>> {
    let rho = &state.rho;
    positive(rho)?;
    state.u.ensure_finite("rhs")?;
    let m = state.momentum_density();
    let m_hat = Spectrum::of(&m);
    let d_rho = m_hat.dealiased_derivative().to_field().scale(-T::one());

    let pr = pressure(rho, p)?;
    let mut flux = (0..m.len())
        .map(|i| m.samples()[i] * state.u.samples()[i] + pr.samples()[i])
        .collect::<Vec<T>>();
    if p.c_loc != T::zero() {
        let mu = viscosity(rho, p)?;
        let ux = Spectrum::of(&state.u).derivative().to_field();
        for (i, v) in flux.iter_mut().enumerate() {
            *v = *v - p.c_loc * mu.samples()[i] * ux.samples()[i];
        }
    }
    let flux = Field::new(rho.grid(), flux)?;

    let mut source: Option<Field<T>> = None;
    if p.c_nl != T::zero() {
        let symbol = frac_symbol(rho.grid(), p.s);
        let lm = m_hat.radial(&symbol).to_field();
        let lr = Spectrum::of(rho).radial(&symbol).to_field();
        let commutator = Field::new(
            rho.grid(),
            (0..m.len())
                .map(|i| {
                    let (r, mi) = (rho.samples()[i], m.samples()[i]);
                    p.c_nl * (r * lm.samples()[i] - mi * lr.samples()[i])
                })
                .collect(),
        )?;
        source = Some(commutator);
    }
    if !force.is_zero() {
        let rf = rho * &force.eval(rho.grid(), state.t);
        source = Some(match source {
            Some(s) => &s + &rf,
            None => rf,
        });
    }
    let mut total = match &source {
        Some(s) => Spectrum::of(s),
        None => Spectrum::zeros(rho.grid()),
    };
    total.dealiased_combine(T::one(), &Spectrum::of(&flux), -T::one());
    let d_m = total.to_field();
    d_rho.ensure_finite("rhs")?;
    d_m.ensure_finite("rhs")?;
    Ok(Tendency { d_rho, d_m })
}

/// Scalar pressure potential `π₀(r) = r ∫_ρ̄^r p(σ)/σ² dσ` up to a term linear in `r`.
pub fn pi0_scalar<T: Scalar>(r: T, p: &ModelParams<T>) -> T {
    let one = T::one();
    if p.gamma == one {
        p.c_p * r * (r / p.rho_bar).ln()
    } else if p.gamma > one {
        p.c_p * r.powf(p.gamma) / (p.gamma - one)
    } else {
        let g1 = p.gamma - one;
        p.c_p * r * (r.powf(g1) - p.rho_bar.powf(g1)) / g1
    }
}

pub fn pi0_pointwise<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<Field<T>> {
    positive(rho)?;
    Ok(rho.map(|r| pi0_scalar(r, p)))
}

/// `πₙ = ½ h′(ρ) (∂ⁿρ)² / ρ^{2n}`.
pub fn pi_n_pointwise<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>, n: usize) -> Result<Field<T>> {
    if n == 0 {
        return pi0_pointwise(rho, p);
    }
    if n > HIERARCHY_CAP {
        return Err(Error::param("n", "<= 4", n));
    }
    let hp = enthalpy_prime(rho, p)?;
    let dn = derivative(rho, n as u32)?;
    let two_n = T::from_usize_lossy(2 * n);
    let half = T::lit(0.5);
    let mut out = hp.zip_map(&dn, |h, d| half * h * d * d);
    out = out.zip_map(rho, |v, r| v / r.powf(two_n));
    Ok(out)
}

/// Averaged pressure slope `∫₀¹ p′(θa + (1−θ)b) dθ = (p(a) − p(b))/(a − b)`.
pub fn phi_s_rho_factor<T: Scalar>(a: T, b: T, p: &ModelParams<T>) -> Result<T> {
    if !(a > T::zero() && b > T::zero()) {
        return Err(Error::Vacuum {
            min_rho: a.min(b).to_f64_lossy(),
            x: f64::NAN,
            t: f64::NAN,
        });
    }
    Ok(pressure_secant(a, b, p.c_p, p.gamma))
}

#[inline]
pub(crate) fn pressure_secant<T: Scalar>(a: T, b: T, c_p: T, gamma: T) -> T {
    let one = T::one();
    if gamma == one {
        return c_p;
    }
    let mid = (a + b) * T::lit(0.5);
    let delta = a - b;
    if (delta / mid).abs() < T::lit(FACTOR_SERIES_THRESHOLD) {
        // p′(m) + p‴(m) δ²/24
        let g = gamma;
        let p1 = g * mid.powf(g - one);
        let p3 = g * (g - one) * (g - T::lit(2.0)) * mid.powf(g - T::lit(3.0));
        c_p * (p1 + p3 * delta * delta / T::lit(24.0))
    } else {
        c_p * (a.powf(gamma) - b.powf(gamma)) / delta
    }
}

/// `ψ` with `ψ′(r) = μ(r)/r`.
pub fn psi<T: Scalar>(r: T, p: &ModelParams<T>) -> T {
    if p.alpha == T::zero() {
        p.c_mu * r.ln()
    } else {
        p.c_mu * r.powf(p.alpha) / p.alpha
    }
}
