//! Explicit SSP-RK3 time stepping of `(ρ, m = ρu)` with a uniform step plan,
//! vacuum guarding and deterministic initial data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{check_vacuum, pressure_prime, rhs, Forcing, ModelParams, State};
use crate::scalar::Scalar;
use crate::torus::{dealias, integral, Field, Grid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepControl<T: Scalar> {
    pub cfl: T,
    pub dt_min: T,
    pub dt_max: T,
    pub t_final: T,
    pub vacuum_floor: T,
    /// Observer cadence in accepted steps.
    pub record_every: usize,
}

impl<T: Scalar> Default for StepControl<T> {
    fn default() -> Self {
        StepControl {
            cfl: T::lit(0.4),
            dt_min: T::lit(1e-12),
            dt_max: T::lit(0.1),
            t_final: T::one(),
            vacuum_floor: T::lit(1e-8),
            record_every: 10,
        }
    }
}

impl<T: Scalar> StepControl<T> {
    pub fn validate(&self) -> Result<()> {
        let f = |v: T| v.to_f64_lossy();
        if !(self.cfl > T::zero() && self.cfl <= T::one()) {
            return Err(Error::param("cfl", "(0,1]", f(self.cfl)));
        }
        if !(self.dt_min > T::zero()) {
            return Err(Error::param("dt_min", "> 0", f(self.dt_min)));
        }
        if !(self.dt_max >= self.dt_min) {
            return Err(Error::param("dt_max", ">= dt_min", f(self.dt_max)));
        }
        if !(self.t_final >= T::zero() && self.t_final.is_finite()) {
            return Err(Error::param("t_final", ">= 0", f(self.t_final)));
        }
        if !(self.vacuum_floor > T::zero()) {
            return Err(Error::param("vacuum_floor", "> 0", f(self.vacuum_floor)));
        }
        if self.record_every == 0 {
            return Err(Error::param("record_every", ">= 1", 0));
        }
        Ok(())
    }
}

/// Step size together with the individual stability limits (infinite when inactive).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StableDt<T: Scalar> {
    pub dt: T,
    pub advective: T,
    pub viscous: T,
    pub nonlocal: T,
}

/// Largest step the explicit scheme is expected to tolerate.
///
/// The three limits are combined harmonically, `dt = cfl / Σ 1/dt_i`, which
/// reduces to `cfl·dt_i` when only one is active.
pub fn stable_dt<T: Scalar>(state: &State<T>, p: &ModelParams<T>, ctl: &StepControl<T>) -> Result<StableDt<T>> {
    check_vacuum(&state.rho, T::zero(), state.t)?;
    let dx = state.grid().dx();
    let inf = T::infinity();
    let cs = pressure_prime(&state.rho, p)?;
    let speed = state
        .u
        .samples()
        .iter()
        .zip(cs.samples())
        .map(|(&u, &c)| u.abs() + c.max(T::zero()).sqrt())
        .fold(T::zero(), T::max);
    let advective = if speed > T::zero() { dx / speed } else { inf };

    let viscous = if p.c_loc > T::zero() {
        // c_loc c_μ ρ^{α−1} is monotone in ρ, so its maximum sits at an extreme density
        let extreme = if p.alpha >= T::one() { state.rho.max() } else { state.rho.min() };
        let nu = p.c_loc * p.c_mu * extreme.pow_law(p.alpha - T::one());
        if nu > T::zero() {
            dx * dx / nu
        } else {
            inf
        }
    } else {
        inf
    };

    let nonlocal = if p.c_nl > T::zero() {
        // (2π/3)^{2−s} makes the bound coincide with the viscous one at s = 2
        let kappa = (T::TAU() / T::lit(3.0)).powf(T::lit(2.0) - p.s);
        dx.powf(p.s) * kappa / (p.c_nl * state.rho.max())
    } else {
        inf
    };

    let rate = [advective, viscous, nonlocal]
        .iter()
        .filter(|b| b.is_finite())
        .map(|&b| T::one() / b)
        .fold(T::zero(), |a, b| a + b);
    let raw = if rate > T::zero() { ctl.cfl / rate } else { ctl.dt_max };
    Ok(StableDt {
        dt: raw.max(ctl.dt_min).min(ctl.dt_max),
        advective,
        viscous,
        nonlocal,
    })
}

fn assemble<T: Scalar>(rho: Field<T>, m: Field<T>, t: T, floor: T) -> Result<State<T>> {
    let rho = dealias(&rho);
    let m = dealias(&m);
    check_vacuum(&rho, floor, t)?;
    let u = m.zip_map(&rho, |mv, r| mv / r);
    u.ensure_finite("velocity recovery")?;
    State::new(rho, u, t)
}

/// One SSP-RK3 step; stage densities below `vacuum_floor` abort with a vacuum error.
pub fn step<T: Scalar>(
    state: &State<T>,
    dt: T,
    p: &ModelParams<T>,
    force: &Forcing<T>,
    vacuum_floor: T,
) -> Result<State<T>> {
    if !(dt > T::zero()) {
        return Err(Error::param("dt", "> 0", dt.to_f64_lossy()));
    }
    let (t, half) = (state.t, T::lit(0.5));
    let m0 = state.momentum_density();

    let k0 = rhs(state, p, force)?;
    let s1 = assemble(
        state.rho.axpy(dt, &k0.d_rho),
        m0.axpy(dt, &k0.d_m),
        t + dt,
        vacuum_floor,
    )?;

    let k1 = rhs(&s1, p, force)?;
    let (q, tq) = (T::lit(0.25), T::lit(0.75));
    let m1 = s1.momentum_density();
    let rho2 = state.rho.scale(tq).axpy(q, &s1.rho.axpy(dt, &k1.d_rho));
    let mom2 = m0.scale(tq).axpy(q, &m1.axpy(dt, &k1.d_m));
    let s2 = assemble(rho2, mom2, t + half * dt, vacuum_floor)?;

    let k2 = rhs(&s2, p, force)?;
    let (third, two_thirds) = (T::one() / T::lit(3.0), T::lit(2.0) / T::lit(3.0));
    let m2 = s2.momentum_density();
    let rho3 = state.rho.scale(third).axpy(two_thirds, &s2.rho.axpy(dt, &k2.d_rho));
    let mom3 = m0.scale(third).axpy(two_thirds, &m2.axpy(dt, &k2.d_m));
    assemble(rho3, mom3, t + dt, vacuum_floor)
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq)]
pub enum TerminalStatus {
    Completed,
    VacuumDetected { t: f64, x: f64, min_rho: f64 },
    NumericFault { t: f64, context: String },
}

impl TerminalStatus {
    pub fn label(&self) -> &'static str {
        match self {
            TerminalStatus::Completed => "completed",
            TerminalStatus::VacuumDetected { .. } => "vacuum_detected",
            TerminalStatus::NumericFault { .. } => "numeric_fault",
        }
    }
}

/// Outcome of [`run`]: recorded times and the last valid state.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Scalar> {
    pub record_times: Vec<T>,
    pub final_state: State<T>,
    pub steps: usize,
    pub status: TerminalStatus,
    /// States handed to the observer, when collected by [`run_collect`].
    pub states: Vec<State<T>>,
}

/// Integrates to `t_final` with uniform steps, re-planned only when the
/// stability limit drops below the current step.
///
/// `observer` sees the initial state, every `record_every`-th step and the
/// last state reached.
pub fn run<T: Scalar>(
    init: &State<T>,
    p: &ModelParams<T>,
    ctl: &StepControl<T>,
    force: &Forcing<T>,
    mut observer: impl FnMut(&State<T>),
) -> Result<Trajectory<T>> {
    p.check_domains()?;
    ctl.validate()?;
    force.validate()?;
    check_vacuum(&init.rho, ctl.vacuum_floor, init.t)?;

    let t_end = init.t + ctl.t_final;
    let mut state = init.clone();
    let mut record_times = vec![state.t];
    observer(&state);

    let mut steps = 0usize;
    let mut last_recorded = 0usize;
    let mut status = TerminalStatus::Completed;
    let mut plan: Option<(T, T, usize)> = None; // (start time, dt, steps taken in plan)

    while ctl.t_final > T::zero() {
        let limit = match stable_dt(&state, p, ctl) {
            Ok(l) => l.dt,
            Err(e) => {
                status = status_from(e, &state)?;
                break;
            }
        };
        let (t0, dt, k) = match plan {
            Some((t0, dt, k)) if dt <= limit => (t0, dt, k),
            _ => {
                let remaining = t_end - state.t;
                let n = (remaining / limit).ceil().max(T::one());
                (state.t, remaining / n, 0)
            }
        };
        let remaining_steps = ((t_end - t0) / dt).round().to_usize().unwrap_or(usize::MAX);
        match step(&state, dt, p, force, ctl.vacuum_floor) {
            Ok(mut next) => {
                let k = k + 1;
                next.t = if k >= remaining_steps { t_end } else { t0 + T::from_usize_lossy(k) * dt };
                state = next;
                steps += 1;
                plan = Some((t0, dt, k));
                let done = k >= remaining_steps;
                if steps % ctl.record_every == 0 || done {
                    observer(&state);
                    record_times.push(state.t);
                    last_recorded = steps;
                }
                if done {
                    break;
                }
            }
            Err(e) => {
                status = status_from(e, &state)?;
                break;
            }
        }
    }
    if last_recorded != steps {
        observer(&state);
        record_times.push(state.t);
    }
    Ok(Trajectory {
        record_times,
        final_state: state,
        steps,
        status,
        states: Vec::new(),
    })
}

/// [`run`] keeping every observed state in [`Trajectory::states`].
pub fn run_collect<T: Scalar>(
    init: &State<T>,
    p: &ModelParams<T>,
    ctl: &StepControl<T>,
    force: &Forcing<T>,
) -> Result<Trajectory<T>> {
    let mut states = Vec::new();
    let mut traj = run(init, p, ctl, force, |s| states.push(s.clone()))?;
    traj.states = states;
    Ok(traj)
}

fn status_from<T: Scalar>(e: Error, state: &State<T>) -> Result<TerminalStatus> {
    match e {
        Error::Vacuum { min_rho, x, t } => Ok(TerminalStatus::VacuumDetected { t, x, min_rho }),
        Error::NumericFault { context } => Ok(TerminalStatus::NumericFault {
            t: state.t.to_f64_lossy(),
            context,
        }),
        other => Err(other),
    }
}

/// Named initial conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitPreset<T: Scalar> {
    /// `ρ = ρ̄ + ε cos kx`, `u = ε′ sin kx`.
    PerturbedConstant { rho_bar: T, epsilon: T, velocity: T, mode: u32 },
    /// `ρ = ρ̄(1 − a cos 2x)`, `u = v sin x`: two bumps moving towards each other.
    BimodalFlock { rho_bar: T, amplitude: T, velocity: T },
    /// Seeded random trigonometric polynomials with modes `≤ n/8`.
    RandomBandlimited { rho_bar: T, velocity: T },
    /// `ρ = ρ̄(1 − d((1 + cos x)/2)⁴)`, `u = v sin x`.
    DeepWell { rho_bar: T, depth: T, velocity: T },
}

/// Builds the preset on `grid`, shifting `u` so that `∫ρu = 0`.
pub fn initial_data<T: Scalar>(preset: &InitPreset<T>, grid: &Grid<T>, seed: u64) -> Result<State<T>> {
    let one = T::one();
    let (rho, u) = match *preset {
        InitPreset::PerturbedConstant {
            rho_bar,
            epsilon,
            velocity,
            mode,
        } => {
            let k = T::from_u32(mode).unwrap();
            (
                Field::from_fn(grid, |x| rho_bar + epsilon * (k * x).cos()),
                Field::from_fn(grid, |x| velocity * (k * x).sin()),
            )
        }
        InitPreset::BimodalFlock {
            rho_bar,
            amplitude,
            velocity,
        } => (
            Field::from_fn(grid, |x| rho_bar * (one - amplitude * (T::lit(2.0) * x).cos())),
            Field::from_fn(grid, |x| velocity * x.sin()),
        ),
        InitPreset::RandomBandlimited { rho_bar, velocity } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kmax = grid.n() / 8;
            let g = random_trig(grid, kmax, &mut rng);
            let v = random_trig(grid, kmax, &mut rng);
            (
                g.map(|y| rho_bar * (one + T::lit(0.5) * y)),
                v.map(|y| velocity * y),
            )
        }
        InitPreset::DeepWell {
            rho_bar,
            depth,
            velocity,
        } => (
            Field::from_fn(grid, |x| {
                let b = (one + x.cos()) * T::lit(0.5);
                rho_bar * (one - depth * b.powi(4))
            }),
            Field::from_fn(grid, |x| velocity * x.sin()),
        ),
    };
    if !(rho.min() > T::zero()) || !rho.is_finite() || !u.is_finite() {
        return Err(Error::param("init", "strictly positive density", rho.min().to_f64_lossy()));
    }
    let shift = integral(&(&rho * &u)) / integral(&rho);
    let u = u.map(|v| v - shift);
    State::new(rho, u, T::zero())
}

/// Trigonometric polynomial with `1/k` amplitude decay, normalized to `max |g| = 1`.
fn random_trig<T: Scalar>(grid: &Grid<T>, kmax: usize, rng: &mut ChaCha8Rng) -> Field<T> {
    let coeffs: Vec<(f64, f64)> = (1..=kmax)
        .map(|k| {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            (a / k as f64, b / k as f64)
        })
        .collect();
    let g = Field::from_fn(grid, |x| {
        let x = x.to_f64_lossy();
        T::lit(
            coeffs
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    let k = (i + 1) as f64;
                    a * (k * x).cos() + b * (k * x).sin()
                })
                .sum(),
        )
    });
    let m = g.max_abs();
    if m > T::zero() {
        g.scale(T::one() / m)
    } else {
        g
    }
}
