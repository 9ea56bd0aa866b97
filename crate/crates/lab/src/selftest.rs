//! Invariant suites run by `entropy-lab selftest`.

use std::f64::consts::PI;
use std::time::Instant;

use hierarchy_core::diag::{
    bd_entropy, cross_diss_alternate, density_lower_bound_estimate, dissipation_functionals_spectral,
    flocking_metrics, velocity_variance, PairQuadrature,
};
use hierarchy_core::integrator::{initial_data, run, run_collect, stable_dt};
use hierarchy_core::kernel::frac_laplacian_quadrature;
use hierarchy_core::model::{d_local, d_nonlocal};
use hierarchy_core::topo::limit_s_to_2_check;
use hierarchy_core::torus::{antiderivative_zero_mean, derivative, frac_laplacian, inner, integral, l2_norm};
use hierarchy_core::{
    Field64, Forcing64, FracKernelSpec, Grid64, InitPreset, ModelParams64, State64, StepControl64, TerminalStatus,
};

use crate::error::{LabError, LabResult};
use crate::fixtures::{cos_mode, positive_state, smooth_field, unit_mass_density};

/// Deliberate defects used to check that the suites can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Kernel normalization constant scaled by 1.5.
    KernelNorm,
}

impl std::str::FromStr for Fault {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "kernel-norm" => Ok(Fault::KernelNorm),
            other => Err(format!("unknown fault `{other}` (expected kernel-norm)")),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

type Check = fn(Option<Fault>) -> Result<String, String>;

pub const SUITES: [(&str, Check); 10] = [
    ("operators", operators),
    ("quadrature", quadrature),
    ("dissipation", dissipation),
    ("signs", signs),
    ("poscross", poscross),
    ("ck", csiszar_kullback),
    ("envar", envar),
    ("lower_bound", lower_bound),
    ("conservation", conservation),
    ("topo_limit", topo_limit),
];

/// Runs every suite whose name equals `filter` (all when `None`).
pub fn selftest(filter: Option<&str>, fault: Option<Fault>) -> LabResult<Vec<SuiteResult>> {
    if let Some(f) = filter {
        if !SUITES.iter().any(|(n, _)| *n == f) {
            let names: Vec<&str> = SUITES.iter().map(|(n, _)| *n).collect();
            return Err(LabError::config(format!(
                "--filter: unknown suite `{f}` (expected one of {})",
                names.join(", ")
            )));
        }
    }
    Ok(SUITES
        .iter()
        .filter(|(n, _)| filter.is_none_or(|f| f == *n))
        .map(|&(name, check)| {
            let start = Instant::now();
            let (passed, detail) = match check(fault) {
                Ok(d) => (true, d),
                Err(d) => (false, d),
            };
            SuiteResult {
                name,
                passed,
                detail,
                seconds: start.elapsed().as_secs_f64(),
            }
        })
        .collect())
}

fn kernel_spec(s: f64, k_images: usize, fault: Option<Fault>) -> FracKernelSpec {
    let spec = FracKernelSpec::new(s, k_images).expect("valid order");
    match fault {
        Some(Fault::KernelNorm) => spec.with_c_norm(1.5 * spec.c_norm).expect("positive constant"),
        None => spec,
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn core<T>(r: hierarchy_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn hybrid(gamma: f64, alpha: f64, s: f64) -> ModelParams64 {
    ModelParams64 {
        gamma,
        alpha,
        s,
        c_nl: 0.7,
        c_loc: 0.4,
        ..Default::default()
    }
}

fn operators(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(256).unwrap();
    let d = core(derivative(&Field64::from_fn(&g, f64::sin), 1))?;
    let err = (&d - &Field64::from_fn(&g, f64::cos)).max_abs();
    ensure(err <= 1e-12, || format!("d/dx sin error {err:e}"))?;
    let mut worst = 0.0f64;
    for s in [0.5, 1.0, 1.5, 1.9] {
        let tol = (1e-15 * (g.n() as f64 / 2.0).powf(s)).max(1e-12);
        for k in 1..=g.dealias_cutoff() {
            let mode = cos_mode(&g, k);
            let l = core(frac_laplacian(&mode, s))?;
            let exact = mode.scale(-(k as f64).powf(s));
            worst = worst.max((&l - &exact).max_abs() / tol);
        }
    }
    ensure(worst <= 1.0, || format!("symbol error {worst:.2} times tolerance"))?;
    let mut adj = 0.0f64;
    for seed in 0..20 {
        let f = smooth_field(&g, seed, 40, 0.95);
        let h = smooth_field(&g, seed + 100, 40, 0.95);
        let gap = (inner(&core(frac_laplacian(&f, 1.3))?, &h) - inner(&f, &core(frac_laplacian(&h, 1.3))?)).abs();
        adj = adj.max(gap / (l2_norm(&f) * l2_norm(&h)));
        let back = core(derivative(&core(antiderivative_zero_mean(&f))?, 1))?;
        let e = (&back - &f).max_abs();
        ensure(e <= 1e-10, || format!("antiderivative round trip {e:e}"))?;
    }
    ensure(adj <= 1e-10, || format!("self-adjointness gap {adj:e}"))?;
    Ok(format!("symbol {worst:.2} of tolerance, adjoint {adj:.1e}"))
}

fn quadrature(fault: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(256).unwrap();
    let spec = kernel_spec(1.5, 64, fault);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let f = smooth_field(&g, seed, 16, 0.8);
        let exact = core(frac_laplacian(&f, 1.5))?;
        let quad = core(frac_laplacian_quadrature(&f, &spec))?;
        worst = worst.max(l2_norm(&(&quad - &exact)) / l2_norm(&exact));
    }
    ensure(worst <= 1e-4, || format!("quadrature vs spectral {worst:e}"))?;
    Ok(format!("max relative L2 {worst:.1e}"))
}

fn dissipation(fault: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(128).unwrap();
    let mut worst = 0.0f64;
    for (i, (gamma, s)) in [(1.0, 1.75), (2.0, 0.8), (0.5, 1.4), (1.5, 1.95)].into_iter().enumerate() {
        let p = hybrid(gamma, 0.5, s);
        let pairs = core(PairQuadrature::from_spec(&g, kernel_spec(s, p.k_images, fault)))?;
        for seed in 0..5 {
            let state = positive_state(&g, 31 * i as u64 + seed, 0.6, 1.0);
            let spectral = core(dissipation_functionals_spectral(&state, &p))?;
            worst = worst.max(rel(pairs.energy_nl(&state), spectral.energy_nl));
            worst = worst.max(rel(core(pairs.entropy_nl(&state, &p))?, spectral.entropy_nl));
            let dl = -inner(&state.u, &core(d_local(&state, &p))?);
            worst = worst.max(rel(dl, spectral.energy_loc));
            let dn = -inner(&state.u, &core(d_nonlocal(&state, &p))?);
            worst = worst.max(rel(dn, spectral.energy_nl));
        }
    }
    ensure(worst <= 1e-6, || format!("identity mismatch {worst:e}"))?;
    Ok(format!("max relative mismatch {worst:.1e}"))
}

fn signs(fault: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(64).unwrap();
    let mut seed = 0;
    let mut lowest = f64::INFINITY;
    for gamma in [0.5, 1.0, 2.0] {
        for alpha in [0.1, 0.3, 1.0] {
            let p = hybrid(gamma, alpha, 1.5);
            let pairs = core(PairQuadrature::from_spec(&g, kernel_spec(1.5, p.k_images, fault)))?;
            for _ in 0..12 {
                seed += 1;
                let state = positive_state(&g, 500 + seed, 0.85, 2.0);
                let d = core(pairs.dissipations(&state, &p))?;
                for v in [d.energy_nl, d.energy_loc, d.entropy_nl, d.entropy_loc, d.cross] {
                    lowest = lowest.min(v);
                }
            }
        }
    }
    ensure(lowest >= -1e-8, || format!("negative dissipation {lowest:e}"))?;
    Ok(format!("{seed} states, min {lowest:.2e}"))
}

fn poscross(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(256).unwrap();
    let (mut lowest, mut gap) = (f64::INFINITY, 0.0f64);
    for seed in 0..100u64 {
        let alpha = [0.05, 0.3, 0.5, 1.0, 1.5][seed as usize % 5];
        let p = hybrid(1.0, alpha, 0.3 + 1.6 * (seed as f64 / 100.0));
        let state = positive_state(&g, 900 + seed, 0.6, 0.0);
        let c = core(dissipation_functionals_spectral(&state, &p))?.cross;
        lowest = lowest.min(c);
        gap = gap.max((c - core(cross_diss_alternate(&state.rho, &p))?).abs());
    }
    ensure(lowest >= -1e-8, || format!("negative cross term {lowest:e}"))?;
    ensure(gap <= 1e-8, || format!("alternate form gap {gap:e}"))?;
    Ok(format!("min {lowest:.2e}, gap {gap:.1e}"))
}

fn csiszar_kullback(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(128).unwrap();
    let p = ModelParams64 {
        gamma: 1.0,
        c_p: 1.0,
        ..Default::default()
    };
    let mut lowest = f64::INFINITY;
    for seed in 0..100 {
        let rho = unit_mass_density(&g, 2000 + seed, 0.95);
        let state = core(State64::new(rho, Field64::zeros(&g), 0.0))?;
        let gap = core(flocking_metrics(&state, &p))?.ck_gap.expect("isothermal");
        lowest = lowest.min(gap);
    }
    ensure(lowest >= -1e-8, || format!("inequality violated by {lowest:e}"))?;
    Ok(format!("min gap {lowest:.2e}"))
}

fn envar(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(64).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let s = positive_state(&g, 3000 + seed, 0.5, 1.5);
        let mass = integral(&s.rho);
        let drift = inner(&s.rho, &s.u) / mass;
        let s = core(State64::new(s.rho.clone(), s.u.map(|v| v - drift), 0.0))?;
        let kinetic = inner(&s.rho, &(&s.u * &s.u));
        worst = worst.max(rel(0.5 * velocity_variance(&s), mass * kinetic));
    }
    ensure(worst <= 1e-8, || format!("variance identity off by {worst:e}"))?;
    Ok(format!("max relative {worst:.1e}"))
}

fn lower_bound(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(64).unwrap();
    let p = ModelParams64 {
        alpha: 0.25,
        gamma: 1.5,
        c_nl: 1.0,
        c_loc: 1.0,
        s: 1.75,
        ..Default::default()
    };
    let preset = InitPreset::PerturbedConstant {
        rho_bar: 1.0,
        epsilon: 0.5,
        velocity: 1.0,
        mode: 1,
    };
    let init = core(initial_data(&preset, &g, 0))?;
    let ctl = StepControl64 {
        t_final: 2.0,
        record_every: 20,
        ..Default::default()
    };
    let traj = core(run_collect(&init, &p, &ctl, &Forcing64::zero()))?;
    ensure(traj.status == TerminalStatus::Completed, || traj.status.label().to_string())?;
    let mut margin = f64::INFINITY;
    let mut prev = f64::INFINITY;
    for s in &traj.states {
        margin = margin.min(s.rho.min() - core(density_lower_bound_estimate(s, &p))?);
        let h = core(bd_entropy(s, &p))?;
        ensure(h <= prev + 1e-9, || format!("entropy rose at t = {}", s.t))?;
        prev = h;
    }
    ensure(margin >= 0.0, || format!("bound exceeded min density by {:e}", -margin))?;
    Ok(format!("{} records, margin {margin:.3}", traj.states.len()))
}

fn conservation(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(64).unwrap();
    let base = positive_state(&g, 77, 0.5, 0.8);
    let init = core(State64::new(base.rho.clone(), base.u.map(|v| v + 0.5), 0.0))?;
    let p = hybrid(2.0, 1.0, 1.5);
    let dt = 0.9 * core(stable_dt(&init, &p, &StepControl64::default()))?.dt;
    let ctl = StepControl64 {
        dt_min: dt,
        dt_max: dt,
        t_final: 1000.0 * dt,
        record_every: usize::MAX,
        ..Default::default()
    };
    let traj = core(run(&init, &p, &ctl, &Forcing64::zero(), |_| {}))?;
    let end = &traj.final_state;
    let dm = rel(integral(&end.rho), integral(&init.rho));
    let dp = rel(inner(&end.rho, &end.u), inner(&init.rho, &init.u));
    ensure(dm <= 1e-10 && dp <= 1e-10, || format!("mass drift {dm:e}, momentum drift {dp:e}"))?;
    Ok(format!("{} steps, drifts {dm:.1e} / {dp:.1e}", traj.steps))
}

fn topo_limit(_: Option<Fault>) -> Result<String, String> {
    let g = Grid64::new(256).unwrap();
    let cases = [
        (Field64::constant(&g, 1.0), 0.0, [1.8, 1.9, 1.95]),
        (Field64::from_fn(&g, |x| 1.0 + 0.3 * x.sin()), 1.0, [1.7, 1.85, 1.95]),
    ];
    let f = Field64::from_fn(&g, |x| (x - PI).cos());
    let mut out = Vec::new();
    for (rho, tau, s_list) in &cases {
        let rep = core(limit_s_to_2_check(&f, rho, *tau, s_list))?;
        ensure(rep.decreasing(), || format!("deviation not decreasing: {rep:?}"))?;
        out.push(format!("{:.2e}", rep.entries.last().map_or(f64::NAN, |e| e.delta)));
    }
    Ok(format!("final deviations {}", out.join(", ")))
}
