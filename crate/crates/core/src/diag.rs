//! Entropy hierarchy functionals, dissipation rates, flocking metrics and the
//! balance-law residuals evaluated along trajectories.
//!
//! Balance laws checked by the residuals:
//!
//! ```text
//! dℰ/dt  = −c_nl D_E,nl − c_loc D_E,loc + ∫ρuf
//! dℋ₀/dt = −c_nl D_H,nl − c_loc D_H,loc + ∫ρXf
//! ∂_t X + u X_x + h′(ρ)ρ_x = f
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{pair_taylor_coefficients, singular_double_integral, FracKernelSpec, KernelRow, Stencils};
use crate::model::{
    check_vacuum, d_nonlocal, enthalpy_prime, pi0_pointwise, pi_n_pointwise, pressure, pressure_prime, pressure_secant,
    psi, q_local, q_nonlocal, viscosity, x_hierarchy, x_variable, Forcing, ModelParams, State,
};
use crate::scalar::Scalar;
use crate::torus::{derivative, frac_laplacian, inner, integral, l2_norm, Field, Grid};

fn positive<T: Scalar>(state: &State<T>) -> Result<()> {
    check_vacuum(&state.rho, T::zero(), state.t)
}

/// `ℰ = ½∫ρu² + ∫π₀`.
pub fn energy<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<T> {
    positive(state)?;
    let kinetic = inner(&state.rho, &(&state.u * &state.u));
    Ok(kinetic * T::lit(0.5) + integral(&pi0_pointwise(&state.rho, p)?))
}

/// `ℋ₀ = ½∫ρX² + ∫π₀`.
pub fn bd_entropy<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<T> {
    let x = x_variable(state, p)?;
    bd_entropy_from(state, p, &x)
}

fn bd_entropy_from<T: Scalar>(state: &State<T>, p: &ModelParams<T>, x: &Field<T>) -> Result<T> {
    Ok(inner(&state.rho, &(x * x)) * T::lit(0.5) + integral(&pi0_pointwise(&state.rho, p)?))
}

/// `ℋₙ = ½∫ρXₙ² + ∫πₙ`, `1 ≤ n ≤ 4`.
pub fn hn_entropy<T: Scalar>(state: &State<T>, p: &ModelParams<T>, n: usize) -> Result<T> {
    if n == 0 || n > crate::model::HIERARCHY_CAP {
        return Err(Error::param("n", "1 <= n <= 4", n));
    }
    let xs = x_hierarchy(state, p, n)?;
    hn_from(state, p, &xs[n], n)
}

fn hn_from<T: Scalar>(state: &State<T>, p: &ModelParams<T>, xn: &Field<T>, n: usize) -> Result<T> {
    Ok(inner(&state.rho, &(xn * xn)) * T::lit(0.5) + integral(&pi_n_pointwise(&state.rho, p, n)?))
}

/// The four dissipation rates and the cross term, all unweighted by `c_nl`, `c_loc`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dissipations<T: Scalar> {
    /// `½∬φ_s |δu|² ρρ`
    pub energy_nl: T,
    /// `∫μ u_x²`
    pub energy_loc: T,
    /// `½∬φ_{s,ρ} (δρ)²`
    pub entropy_nl: T,
    /// `∫μ p′ ρ_x²/ρ²`
    pub entropy_loc: T,
    /// `∫ρ Q_nl Q_loc`
    pub cross: T,
}

/// Precomputed kernel row and stencils for the direct double integrals.
#[derive(Clone, Debug)]
pub struct PairQuadrature<T: Scalar> {
    row: KernelRow<T>,
    stencils: Stencils,
}

impl<T: Scalar> PairQuadrature<T> {
    pub fn new(grid: &Grid<T>, s: T, k_images: usize) -> Result<Self> {
        Self::from_spec(grid, FracKernelSpec::new(s.to_f64_lossy(), k_images)?)
    }

    pub fn from_spec(grid: &Grid<T>, spec: FracKernelSpec) -> Result<Self> {
        Ok(PairQuadrature {
            row: KernelRow::new(grid, spec)?,
            stencils: Stencils::new(),
        })
    }

    pub fn spec(&self) -> &FracKernelSpec {
        &self.row.spec
    }

    /// `½∬φ_s(x−y)|u(x)−u(y)|²ρ(x)ρ(y)`.
    pub fn energy_nl(&self, state: &State<T>) -> T {
        let (r, u) = (state.rho.samples(), state.u.samples());
        let h = state.grid().dx();
        let taylor = pair_taylor_coefficients(u, u, Some(r), h, &self.stencils);
        let total = singular_double_integral(
            &self.row,
            r.len(),
            h,
            |i, j| {
                let d = u[j] - u[i];
                r[i] * r[j] * d * d
            },
            &taylor,
        );
        total * T::lit(0.5)
    }

    /// `½∬φ_s(x−y)·φ_{s,ρ}-factor·(ρ(y)−ρ(x))²`.
    pub fn entropy_nl(&self, state: &State<T>, p: &ModelParams<T>) -> Result<T> {
        let r = state.rho.samples();
        let h = state.grid().dx();
        let pr = pressure(&state.rho, p)?;
        let taylor = pair_taylor_coefficients(pr.samples(), r, None, h, &self.stencils);
        let (c_p, gamma) = (p.c_p, p.gamma);
        let total = singular_double_integral(
            &self.row,
            r.len(),
            h,
            |i, j| {
                let d = r[j] - r[i];
                pressure_secant(r[i], r[j], c_p, gamma) * d * d
            },
            &taylor,
        );
        Ok(total * T::lit(0.5))
    }

    pub fn dissipations(&self, state: &State<T>, p: &ModelParams<T>) -> Result<Dissipations<T>> {
        let local = local_dissipations(state, p)?;
        Ok(Dissipations {
            energy_nl: self.energy_nl(state),
            entropy_nl: self.entropy_nl(state, p)?,
            ..local
        })
    }
}

/// Local rates and the cross term; the nonlocal slots are left at zero.
fn local_dissipations<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Dissipations<T>> {
    positive(state)?;
    let rho = &state.rho;
    let mu = viscosity(rho, p)?;
    let ux = derivative(&state.u, 1)?;
    let rx = derivative(rho, 1)?;
    let pp = pressure_prime(rho, p)?;
    let energy_loc = inner(&mu, &(&ux * &ux));
    let g = Field::new(
        rho.grid(),
        (0..rho.len())
            .map(|i| {
                let (r, d) = (rho.samples()[i], rx.samples()[i]);
                mu.samples()[i] * pp.samples()[i] * d * d / (r * r)
            })
            .collect(),
    )?;
    let cross = inner(rho, &(&q_nonlocal(rho, p)? * &q_local(rho, p)?));
    Ok(Dissipations {
        energy_nl: T::zero(),
        energy_loc,
        entropy_nl: T::zero(),
        entropy_loc: integral(&g),
        cross,
    })
}

/// All rates, with the nonlocal pair integrals evaluated directly.
pub fn dissipation_functionals<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Dissipations<T>> {
    PairQuadrature::new(state.grid(), p.s, p.k_images)?.dissipations(state, p)
}

/// All rates, with the nonlocal ones from `−∫u𝒟_nl` and `−∫p ℒ^sρ`.
pub fn dissipation_functionals_spectral<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<Dissipations<T>> {
    let local = local_dissipations(state, p)?;
    let dnl = d_nonlocal(state, p)?;
    let lr = frac_laplacian(&state.rho, p.s)?;
    Ok(Dissipations {
        energy_nl: -inner(&state.u, &dnl),
        entropy_nl: -inner(&pressure(&state.rho, p)?, &lr),
        ..local
    })
}

/// `−∫ψ(ρ) ℒ^sρ`, an independent form of the cross term.
pub fn cross_diss_alternate<T: Scalar>(rho: &Field<T>, p: &ModelParams<T>) -> Result<T> {
    check_vacuum(rho, T::zero(), T::nan())?;
    let lr = frac_laplacian(rho, p.s)?;
    Ok(-inner(&rho.map(|r| psi(r, p)), &lr))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlockingMetrics<T: Scalar> {
    /// `∬|u(x)−u(y)|²ρ(x)ρ(y)`
    pub velocity_variance: T,
    /// `∫|ρ − M/2π|`
    pub l1_dist: T,
    /// `∫π₀ − c_p‖ρ−ρ̄‖₁²/(2M)` with `ρ̄ = M/2π`; present only for `γ = 1`.
    pub ck_gap: Option<T>,
}

pub fn velocity_variance<T: Scalar>(state: &State<T>) -> T {
    let (r, u) = (state.rho.samples(), state.u.samples());
    let n = r.len();
    let h = state.grid().dx();
    let mut total = T::zero();
    for i in 0..n {
        let mut acc = T::zero();
        for j in 0..n {
            let d = u[j] - u[i];
            acc = acc + r[j] * d * d;
        }
        total = total + r[i] * acc;
    }
    total * h * h
}

pub fn l1_distance<T: Scalar>(rho: &Field<T>) -> T {
    let mean = integral(rho) / rho.grid().length();
    integral(&rho.map(|r| (r - mean).abs()))
}

pub fn flocking_metrics<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<FlockingMetrics<T>> {
    positive(state)?;
    let l1 = l1_distance(&state.rho);
    let ck_gap = if p.is_isothermal() {
        let mass = integral(&state.rho);
        let reference = ModelParams {
            rho_bar: mass / state.grid().length(),
            ..*p
        };
        let pot = integral(&pi0_pointwise(&state.rho, &reference)?);
        Some(pot - p.c_p * l1 * l1 / (T::lit(2.0) * mass))
    } else {
        None
    };
    Ok(FlockingMetrics {
        velocity_variance: velocity_variance(state),
        l1_dist: l1,
        ck_gap,
    })
}

/// Pointwise lower bound `[ρ̄^{α−½} + ∫|∂_x ρ^{α−½}|]^{−1/(½−α)}`, `ρ̄ = M/2π`.
pub fn density_lower_bound_estimate<T: Scalar>(state: &State<T>, p: &ModelParams<T>) -> Result<T> {
    let half = T::lit(0.5);
    if !(p.alpha > T::zero() && p.alpha < half) {
        return Err(Error::param("alpha", "(0,1/2)", p.alpha.to_f64_lossy()));
    }
    positive(state)?;
    let beta = p.alpha - half;
    let mean = state.rho.mean();
    let g = state.rho.map(|r| r.powf(beta));
    let variation = integral(&derivative(&g, 1)?.map(|v| v.abs()));
    Ok((mean.powf(beta) + variation).powf(T::one() / beta))
}

/// `sup |f| (M + ∫ρu²)`, the size of the forcing contribution to the balances.
pub fn force_work_envelope<T: Scalar>(state: &State<T>, force: &Forcing<T>) -> T {
    force.sup_norm() * (integral(&state.rho) + inner(&state.rho, &(&state.u * &state.u)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `sup ℰ(t)·t/ln t` over `t ≥ 10`.
    pub sup_statistic: f64,
    pub nonincreasing: bool,
    pub t_max: f64,
}

/// Decay statistic of an energy series; requires data reaching `t ≥ 50`.
///
/// `tol` is the absolute increase tolerated between consecutive samples.
pub fn decay_fit(series: &[(f64, f64)], tol: f64) -> Result<DecayFit> {
    let t_max = series.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
    if !(t_max >= 50.0) {
        return Err(Error::param("series", "samples reaching t >= 50", t_max));
    }
    let sup = series
        .iter()
        .filter(|(t, _)| *t >= 10.0)
        .map(|&(t, e)| e * t / t.ln())
        .fold(f64::NEG_INFINITY, f64::max);
    let nonincreasing = series.windows(2).all(|w| w[1].1 <= w[0].1 + tol);
    Ok(DecayFit {
        sup_statistic: sup,
        nonincreasing,
        t_max,
    })
}

/// `a e^{b t}` dominating a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub a: f64,
    pub b: f64,
}

impl Envelope {
    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.b * t).exp()
    }
}

/// Least-squares fit of `ln|y|` against `t`, lifted so every sample lies below it.
pub fn fit_exponential_envelope(series: &[(f64, f64)]) -> Result<Envelope> {
    if series.len() < 2 {
        return Err(Error::InsufficientRecords {
            needed: 2,
            have: series.len(),
        });
    }
    if series.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(Error::fault("exponential envelope"));
    }
    let floor = f64::MIN_POSITIVE.sqrt();
    let pts: Vec<(f64, f64)> = series.iter().map(|&(t, y)| (t, y.abs().max(floor).ln())).collect();
    let n = pts.len() as f64;
    let (mt, my) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t / n, b + y / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt) * (t - mt)));
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let lift = pts.iter().map(|(t, y)| y - (my + b * (t - mt))).fold(0.0, f64::max);
    let a = (my - b * mt + lift).exp();
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::fault("exponential envelope"));
    }
    Ok(Envelope { a, b })
}

/// Diagnostic knobs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagConfig {
    /// Deepest entropy level recorded, `2..=4`; levels above 2 go to `hn`.
    pub hierarchy_depth: usize,
    /// Records between direct double-integral evaluations (others use spectral identities).
    pub double_integral_cadence: usize,
}

impl Default for DiagConfig {
    fn default() -> Self {
        DiagConfig {
            hierarchy_depth: 2,
            double_integral_cadence: 1,
        }
    }
}

impl DiagConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=crate::model::HIERARCHY_CAP).contains(&self.hierarchy_depth) {
            return Err(Error::param("hierarchy_depth", "2..=4", self.hierarchy_depth));
        }
        if self.double_integral_cadence == 0 {
            return Err(Error::param("double_integral_cadence", ">= 1", 0));
        }
        Ok(())
    }
}

/// One row of diagnostics at a recorded time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagRecord {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub energy: f64,
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub hn: Option<Vec<f64>>,
    pub diss_energy_nl: f64,
    pub diss_energy_loc: f64,
    pub diss_entropy_nl: f64,
    pub diss_entropy_loc: f64,
    pub cross_diss: f64,
    pub velocity_variance: f64,
    pub l1_dist: f64,
    pub min_rho: f64,
    pub rho_lower_bound_est: Option<f64>,
    pub x_transport_resid: Option<f64>,
    pub energy_balance_resid: Option<f64>,
    pub bd_balance_resid: Option<f64>,
}

impl DiagRecord {
    /// Column names in serialization order.
    pub const COLUMNS: [&'static str; 20] = [
        "t",
        "mass",
        "momentum",
        "energy",
        "h0",
        "h1",
        "h2",
        "hn",
        "diss_energy_nl",
        "diss_energy_loc",
        "diss_entropy_nl",
        "diss_entropy_loc",
        "cross_diss",
        "velocity_variance",
        "l1_dist",
        "min_rho",
        "rho_lower_bound_est",
        "x_transport_resid",
        "energy_balance_resid",
        "bd_balance_resid",
    ];
}

/// Functionals of one recorded state, kept for the residual windows.
#[derive(Clone, Debug)]
struct Sample<T: Scalar> {
    state: State<T>,
    x: Field<T>,
    energy: T,
    h0: T,
    energy_rate: T,
    bd_rate: T,
    row: DiagRecord,
}

fn sample<T: Scalar>(
    state: &State<T>,
    p: &ModelParams<T>,
    force: &Forcing<T>,
    cfg: &DiagConfig,
    pairs: Option<&PairQuadrature<T>>,
) -> Result<Sample<T>> {
    positive(state)?;
    let xs = x_hierarchy(state, p, cfg.hierarchy_depth)?;
    let e = energy(state, p)?;
    let h0 = bd_entropy_from(state, p, &xs[0])?;
    let mut levels = Vec::with_capacity(cfg.hierarchy_depth);
    for (n, xn) in xs.iter().enumerate().skip(1) {
        levels.push(hn_from(state, p, xn, n)?);
    }
    let d = match pairs {
        Some(q) => q.dissipations(state, p)?,
        None => dissipation_functionals_spectral(state, p)?,
    };
    let (work_u, work_x) = if force.is_zero() {
        (T::zero(), T::zero())
    } else {
        let f = force.eval(state.grid(), state.t);
        let rf = &state.rho * &f;
        (inner(&rf, &state.u), inner(&rf, &xs[0]))
    };
    let energy_rate = -p.c_nl * d.energy_nl - p.c_loc * d.energy_loc + work_u;
    let bd_rate = -p.c_nl * d.entropy_nl - p.c_loc * d.entropy_loc + work_x;
    let lower = if p.alpha > T::zero() && p.alpha < T::lit(0.5) {
        Some(density_lower_bound_estimate(state, p)?.to_f64_lossy())
    } else {
        None
    };
    let f64v = |v: T| v.to_f64_lossy();
    let row = DiagRecord {
        t: f64v(state.t),
        mass: f64v(integral(&state.rho)),
        momentum: f64v(integral(&state.momentum_density())),
        energy: f64v(e),
        h0: f64v(h0),
        h1: f64v(levels[0]),
        h2: f64v(levels[1]),
        hn: (levels.len() > 2).then(|| levels[2..].iter().map(|&v| f64v(v)).collect()),
        diss_energy_nl: f64v(d.energy_nl),
        diss_energy_loc: f64v(d.energy_loc),
        diss_entropy_nl: f64v(d.entropy_nl),
        diss_entropy_loc: f64v(d.entropy_loc),
        cross_diss: f64v(d.cross),
        velocity_variance: f64v(velocity_variance(state)),
        l1_dist: f64v(l1_distance(&state.rho)),
        min_rho: f64v(state.rho.min()),
        rho_lower_bound_est: lower,
        x_transport_resid: None,
        energy_balance_resid: None,
        bd_balance_resid: None,
    };
    Ok(Sample {
        state: state.clone(),
        x: xs.into_iter().next().unwrap(),
        energy: e,
        h0,
        energy_rate,
        bd_rate,
        row,
    })
}

fn trapezoid<T: Scalar>(t: &[T], r: &[T]) -> T {
    t.windows(2)
        .zip(r.windows(2))
        .map(|(tw, rw)| (tw[1] - tw[0]) * (rw[0] + rw[1]) * T::lit(0.5))
        .sum()
}

fn balance_residual<T: Scalar>(t: &[T], v: &[T], rate: &[T]) -> T {
    let change = v[v.len() - 1] - v[0];
    let scale = v.iter().fold(T::zero(), |a, b| a.max(b.abs())) + T::one();
    (change - trapezoid(t, rate)).abs() / scale
}

/// `‖∂_t X + uX_x + h′(ρ)ρ_x − f‖₂` at the middle of three samples.
fn x_residual_at<T: Scalar>(w: [&Sample<T>; 3], p: &ModelParams<T>, force: &Forcing<T>) -> Result<T> {
    let (t0, t1, t2) = (w[0].state.t, w[1].state.t, w[2].state.t);
    let (h1, h2) = (t1 - t0, t2 - t1);
    if !(h1 > T::zero() && h2 > T::zero()) {
        return Err(Error::param("record times", "strictly increasing", format!("{t0} {t1} {t2}")));
    }
    let c0 = -h2 / (h1 * (h1 + h2));
    let c1 = (h2 - h1) / (h1 * h2);
    let c2 = h1 / (h2 * (h1 + h2));
    let dxdt = w[0].x.scale(c0).axpy(c1, &w[1].x).axpy(c2, &w[2].x);
    let mid = &w[1].state;
    let xx = derivative(&w[1].x, 1)?;
    let rx = derivative(&mid.rho, 1)?;
    let hp = enthalpy_prime(&mid.rho, p)?;
    let mut r = &(&dxdt + &(&mid.u * &xx)) + &(&hp * &rx);
    if !force.is_zero() {
        r = &r - &force.eval(mid.grid(), t1);
    }
    Ok(l2_norm(&r))
}

fn window_samples<T: Scalar>(
    states: &[State<T>],
    p: &ModelParams<T>,
    force: &Forcing<T>,
) -> Result<Vec<Sample<T>>> {
    if states.len() < 3 {
        return Err(Error::InsufficientRecords {
            needed: 3,
            have: states.len(),
        });
    }
    let pairs = PairQuadrature::new(states[0].grid(), p.s, p.k_images)?;
    states
        .iter()
        .map(|s| sample(s, p, force, &DiagConfig::default(), Some(&pairs)))
        .collect()
}

/// Relative defect of the energy balance over a window of at least three records.
pub fn energy_balance_residual<T: Scalar>(states: &[State<T>], p: &ModelParams<T>, force: &Forcing<T>) -> Result<T> {
    let w = window_samples(states, p, force)?;
    let t: Vec<T> = w.iter().map(|s| s.state.t).collect();
    let v: Vec<T> = w.iter().map(|s| s.energy).collect();
    let r: Vec<T> = w.iter().map(|s| s.energy_rate).collect();
    Ok(balance_residual(&t, &v, &r))
}

/// Relative defect of the `ℋ₀` balance over a window of at least three records.
pub fn bd_balance_residual<T: Scalar>(states: &[State<T>], p: &ModelParams<T>, force: &Forcing<T>) -> Result<T> {
    let w = window_samples(states, p, force)?;
    let t: Vec<T> = w.iter().map(|s| s.state.t).collect();
    let v: Vec<T> = w.iter().map(|s| s.h0).collect();
    let r: Vec<T> = w.iter().map(|s| s.bd_rate).collect();
    Ok(balance_residual(&t, &v, &r))
}

/// Transport defect of `X` at the middle record of the window.
pub fn x_transport_residual<T: Scalar>(states: &[State<T>], p: &ModelParams<T>, force: &Forcing<T>) -> Result<T> {
    if states.len() < 3 {
        return Err(Error::InsufficientRecords {
            needed: 3,
            have: states.len(),
        });
    }
    let m = states.len() / 2;
    let w = window_samples(&states[m - 1..=m + 1], p, force)?;
    x_residual_at([&w[0], &w[1], &w[2]], p, force)
}

/// Streams [`DiagRecord`]s from recorded states.
///
/// Row `k` carries residuals over records `k−1, k, k+1`; the first and last
/// rows use the adjacent full window. Rows are released once their window is
/// complete, and [`finish`](Self::finish) flushes the last one.
pub struct DiagnosticsEngine<T: Scalar> {
    params: ModelParams<T>,
    force: Forcing<T>,
    config: DiagConfig,
    pairs: Option<PairQuadrature<T>>,
    window: Vec<Sample<T>>,
    seen: usize,
}

impl<T: Scalar> DiagnosticsEngine<T> {
    pub fn new(grid: &Grid<T>, params: ModelParams<T>, force: Forcing<T>, config: DiagConfig) -> Result<Self> {
        params.check_domains()?;
        config.validate()?;
        Ok(DiagnosticsEngine {
            pairs: Some(PairQuadrature::new(grid, params.s, params.k_images)?),
            params,
            force,
            config,
            window: Vec::with_capacity(3),
            seen: 0,
        })
    }

    /// Replaces the kernel used by the direct double integrals.
    pub fn with_kernel(mut self, grid: &Grid<T>, spec: FracKernelSpec) -> Result<Self> {
        self.pairs = Some(PairQuadrature::from_spec(grid, spec)?);
        Ok(self)
    }

    pub fn push(&mut self, state: &State<T>) -> Result<Vec<DiagRecord>> {
        let direct = self.seen % self.config.double_integral_cadence == 0;
        let pairs = if direct { self.pairs.as_ref() } else { None };
        let s = sample(state, &self.params, &self.force, &self.config, pairs)?;
        self.seen += 1;
        if self.window.len() == 3 {
            self.window.remove(0);
        }
        self.window.push(s);
        if self.window.len() < 3 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        if self.seen == 3 {
            out.push(self.row_with_window(0)?);
        }
        out.push(self.row_with_window(1)?);
        Ok(out)
    }

    pub fn finish(&mut self) -> Result<Vec<DiagRecord>> {
        let rows = match self.window.len() {
            0 => Vec::new(),
            3 => vec![self.row_with_window(2)?],
            _ if self.seen == self.window.len() => self.window.iter().map(|s| s.row.clone()).collect(),
            _ => unreachable!("window holds three samples once more than two were pushed"),
        };
        self.window.clear();
        Ok(rows)
    }

    fn row_with_window(&self, which: usize) -> Result<DiagRecord> {
        let w = &self.window;
        let t: Vec<T> = w.iter().map(|s| s.state.t).collect();
        let e: Vec<T> = w.iter().map(|s| s.energy).collect();
        let er: Vec<T> = w.iter().map(|s| s.energy_rate).collect();
        let h: Vec<T> = w.iter().map(|s| s.h0).collect();
        let hr: Vec<T> = w.iter().map(|s| s.bd_rate).collect();
        let xr = x_residual_at([&w[0], &w[1], &w[2]], &self.params, &self.force)?;
        let mut row = w[which].row.clone();
        row.energy_balance_resid = Some(balance_residual(&t, &e, &er).to_f64_lossy());
        row.bd_balance_resid = Some(balance_residual(&t, &h, &hr).to_f64_lossy());
        row.x_transport_resid = Some(xr.to_f64_lossy());
        Ok(row)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid<f64> {
        Grid::new(n).unwrap()
    }

    fn st(g: &Grid<f64>, rho: impl Fn(f64) -> f64, u: impl Fn(f64) -> f64) -> State<f64> {
        State::new(Field::from_fn(g, rho), Field::from_fn(g, u), 0.0).unwrap()
    }

    #[test]
    fn energy_examples() {
        let g = grid(64);
        let iso = ModelParams { gamma: 1.0, rho_bar: 1.3, c_nl: 1.0, ..Default::default() };
        assert!(energy(&st(&g, |_| 1.3, |_| 0.0), &iso).unwrap().abs() < 1e-14);
        let cold = ModelParams { c_p: 0.0, ..Default::default() };
        let e = energy(&st(&g, |_| 1.0, f64::sin), &cold).unwrap();
        assert!((e - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn energy_matches_refined_quadrature() {
        let p = ModelParams { gamma: 1.6, c_p: 0.7, ..Default::default() };
        let rho = |x: f64| 1.0 + 0.3 * x.sin() + 0.1 * (2.0 * x).cos();
        let u = |x: f64| 0.4 * x.cos() - 0.2 * (3.0 * x).sin();
        let e = energy(&st(&grid(64), rho, u), &p).unwrap();
        let n = 20000;
        let h = 2.0 * PI / n as f64;
        let oracle: f64 = (0..n)
            .map(|i| {
                let x = (i as f64 + 0.5) * h;
                0.5 * rho(x) * u(x) * u(x) + p.c_p * rho(x).powf(p.gamma) / (p.gamma - 1.0)
            })
            .sum::<f64>()
            * h;
        assert!((e - oracle).abs() < 1e-10);
    }

    #[test]
    fn bd_entropy_reduces_to_energy_without_dissipation() {
        let g = grid(64);
        let free = ModelParams { c_nl: 0.0, c_loc: 0.0, ..Default::default() };
        let s = st(&g, |x| 1.0 + 0.3 * x.cos(), |x| x.sin());
        assert_eq!(bd_entropy(&s, &free).unwrap(), energy(&s, &free).unwrap());
        let iso = ModelParams { gamma: 1.0, rho_bar: 2.0, c_nl: 1.0, ..Default::default() };
        assert!(bd_entropy(&st(&g, |_| 2.0, |_| 0.0), &iso).unwrap().abs() < 1e-14);
    }

    #[test]
    fn first_entropy_closed_form() {
        let g = grid(64);
        let eps = 0.3;
        let p = ModelParams { c_nl: 0.0, c_loc: 0.0, c_p: 0.0, ..Default::default() };
        let h1 = hn_entropy(&st(&g, |_| 1.0, |x| eps * x.sin()), &p, 1).unwrap();
        assert!((h1 - eps * eps * PI / 2.0).abs() < 1e-13);
        let c = st(&g, |_| 1.4, |_| 0.2);
        for n in 1..=4 {
            assert!(hn_entropy(&c, &ModelParams { c_nl: 1.0, ..Default::default() }, n).unwrap().abs() < 1e-14);
        }
        assert!(hn_entropy(&c, &p, 0).is_err());
    }

    #[test]
    fn dissipation_trivial_cases() {
        let g = grid(64);
        let p = ModelParams { c_nl: 1.0, gamma: 1.4, alpha: 0.3, s: 1.2, ..Default::default() };
        let d = dissipation_functionals(&st(&g, |x| 1.0 + 0.3 * x.sin(), |_| 0.5), &p).unwrap();
        assert!(d.energy_nl.abs() < 1e-13 && d.energy_loc.abs() < 1e-13);
        let d = dissipation_functionals(&st(&g, |_| 1.5, f64::sin), &p).unwrap();
        assert!(d.entropy_nl.abs() < 1e-13 && d.entropy_loc.abs() < 1e-13 && d.cross.abs() < 1e-13);
    }

    #[test]
    fn direct_and_spectral_rates_agree() {
        let g = grid(128);
        let p = ModelParams { c_nl: 1.0, gamma: 2.0, alpha: 0.5, s: 1.4, ..Default::default() };
        let s = st(&g, |x| 1.0 + 0.3 * x.sin() + 0.1 * (2.0 * x).cos(), |x| x.cos() + 0.3 * (2.0 * x).sin());
        let a = dissipation_functionals(&s, &p).unwrap();
        let b = dissipation_functionals_spectral(&s, &p).unwrap();
        assert!((a.energy_nl / b.energy_nl - 1.0).abs() < 1e-6, "{a:?} {b:?}");
        assert!((a.entropy_nl / b.entropy_nl - 1.0).abs() < 1e-6, "{a:?} {b:?}");
        assert_eq!(a.entropy_loc, b.entropy_loc);
    }

    #[test]
    fn cross_term_alternate_form() {
        let g = grid(64);
        for alpha in [0.0, 0.2, 1.0] {
            let p = ModelParams { alpha, s: 1.3, c_mu: 0.8, ..Default::default() };
            let rho = Field::from_fn(&g, |x| 1.0 + 0.5 * x.cos() + 0.2 * (3.0 * x).sin());
            let s = State::new(rho.clone(), Field::zeros(&g), 0.0).unwrap();
            let c = dissipation_functionals_spectral(&s, &p).unwrap().cross;
            let alt = cross_diss_alternate(&rho, &p).unwrap();
            assert!((c - alt).abs() < 1e-8 && c > 0.0);
        }
    }

    #[test]
    fn flocking_examples() {
        let g = grid(64);
        let iso = ModelParams { gamma: 1.0, c_nl: 1.0, rho_bar: 0.8, ..Default::default() };
        let m = flocking_metrics(&st(&g, |x| 1.0 + 0.4 * x.sin(), |_| 0.3), &iso).unwrap();
        assert!(m.velocity_variance.abs() < 1e-14);
        let m = flocking_metrics(&st(&g, |_| 0.8, f64::sin), &iso).unwrap();
        assert!(m.l1_dist.abs() < 1e-14 && m.ck_gap.unwrap().abs() < 1e-14);
        assert!(flocking_metrics(&st(&g, |_| 0.8, f64::sin), &Default::default()).unwrap().ck_gap.is_none());
    }

    #[test]
    fn zero_momentum_variance_identity() {
        let g = grid(64);
        let rho = |x: f64| 1.0 + 0.5 * x.cos();
        let mut s = st(&g, rho, |x| (x + 0.3).sin() + 0.2);
        let shift = integral(&s.momentum_density()) / integral(&s.rho);
        s.u = s.u.map(|v| v - shift);
        let vv = velocity_variance(&s);
        let mass = integral(&s.rho);
        let rhs = mass * inner(&s.rho, &(&s.u * &s.u));
        assert!((0.5 * vv / rhs - 1.0).abs() < 1e-8);
    }

    #[test]
    fn pinsker_holds_where_unit_constant_fails() {
        // unit mass, ρ = (1 + ε cos x)/2π
        let g = grid(256);
        let eps = 0.05;
        let p = ModelParams { gamma: 1.0, c_p: 1.0, rho_bar: 1.0 / (2.0 * PI), c_nl: 1.0, ..Default::default() };
        let s = st(&g, |x| (1.0 + eps * x.cos()) / (2.0 * PI), |_| 0.0);
        let m = flocking_metrics(&s, &p).unwrap();
        assert!(m.ck_gap.unwrap() >= -1e-12);
        let pot = integral(&pi0_pointwise(&s.rho, &p).unwrap());
        assert!(pot < m.l1_dist * m.l1_dist);
    }

    #[test]
    fn lower_bound_examples() {
        let g = grid(64);
        let p = ModelParams { alpha: 0.25, ..Default::default() };
        let b = density_lower_bound_estimate(&st(&g, |_| 1.7, |_| 0.0), &p).unwrap();
        assert!((b - 1.7).abs() < 1e-13);
        let b = density_lower_bound_estimate(&st(&g, |x| 1.0 + 0.5 * x.sin(), |_| 0.0), &p).unwrap();
        assert!(b > 0.0 && b <= 0.5);
        assert!(density_lower_bound_estimate(&st(&g, |_| 1.0, |_| 0.0), &ModelParams { alpha: 0.5, ..p }).is_err());
    }

    #[test]
    fn decay_fit_examples() {
        let zero: Vec<(f64, f64)> = (0..=200).map(|t| (t as f64, 0.0)).collect();
        let f = decay_fit(&zero, 0.0).unwrap();
        assert_eq!(f.sup_statistic, 0.0);
        assert!(f.nonincreasing);
        let shaped: Vec<(f64, f64)> = (10..=200).map(|t| (t as f64, (t as f64).ln() / t as f64)).collect();
        let f = decay_fit(&shaped, 0.0).unwrap();
        assert!((f.sup_statistic - 1.0).abs() < 1e-12);
        assert!(decay_fit(&shaped[..20], 0.0).is_err());
    }

    #[test]
    fn envelope_dominates() {
        let data: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 * 0.1, (0.3 * i as f64).sin().abs() + 1.0)).collect();
        let env = fit_exponential_envelope(&data).unwrap();
        assert!(data.iter().all(|&(t, y)| y <= env.eval(t) * (1.0 + 1e-12)));
        assert!(fit_exponential_envelope(&[(0.0, f64::NAN), (1.0, 1.0)]).is_err());
    }

    #[test]
    fn record_columns_match_serialization() {
        let g = grid(16);
        let p = ModelParams::default();
        let s = sample(&st(&g, |_| 1.0, |_| 0.0), &p, &Forcing::zero(), &DiagConfig::default(), None).unwrap();
        let v = serde_json::to_value(&s.row).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        let mut expect = DiagRecord::COLUMNS.to_vec();
        let mut got = keys.clone();
        expect.sort_unstable();
        got.sort_unstable();
        assert_eq!(got, expect);
    }

    #[test]
    fn engine_emits_one_row_per_state() {
        let g = grid(32);
        let p = ModelParams { c_nl: 1.0, ..Default::default() };
        let mut eng = DiagnosticsEngine::new(&g, p, Forcing::zero(), DiagConfig::default()).unwrap();
        let mut rows = Vec::new();
        for k in 0..5 {
            let mut s = st(&g, |_| 1.0, |_| 0.0);
            s.t = k as f64 * 0.1;
            rows.extend(eng.push(&s).unwrap());
        }
        rows.extend(eng.finish().unwrap());
        assert_eq!(rows.len(), 5);
        assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
        for r in &rows {
            assert!(r.energy_balance_resid.unwrap() <= 1e-12);
            assert!(r.bd_balance_resid.unwrap() <= 1e-12);
            assert!(r.x_transport_resid.unwrap() <= 1e-12);
        }
    }

    #[test]
    fn engine_short_series_has_no_residuals() {
        let g = grid(16);
        let mut eng = DiagnosticsEngine::new(&g, ModelParams::default(), Forcing::zero(), DiagConfig::default()).unwrap();
        assert!(eng.push(&st(&g, |_| 1.0, |_| 0.0)).unwrap().is_empty());
        let rows = eng.finish().unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].energy_balance_resid.is_none());
    }
}
