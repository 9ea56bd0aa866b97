use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use hierarchy_core::diag::{decay_fit, DecayFit};
use hierarchy_core::integrator::{run, stable_dt};
use hierarchy_core::{DiagRecord, DiagnosticsEngine64, TerminalStatus};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{exit, status_exit_code, LabError, LabResult};
use crate::output::{ensure_dir, write_json, JsonLines, Snapshot, DIAGNOSTICS_FILE, SNAPSHOTS_FILE, SUMMARY_FILE};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Extrema {
    pub min_rho: f64,
    pub max_rho: f64,
    pub max_abs_u: f64,
    pub min_energy: f64,
    pub max_energy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: String,
    pub exit_code: i32,
    pub detail: Option<String>,
    pub t_reached: f64,
    pub steps: usize,
    pub records: usize,
    pub wall_time_s: f64,
    pub extrema: Extrema,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub status: TerminalStatus,
    pub rows: Vec<DiagRecord>,
    pub summary: Summary,
    pub dir: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.summary.exit_code
    }
}

/// Runs the configured experiment, writing diagnostics, snapshots and a summary to `dir`.
pub fn execute_in(cfg: &RunConfig, dir: &Path) -> LabResult<RunOutcome> {
    ensure_dir(dir)?;
    let init = cfg.initial_state()?;
    let params = cfg.model_params();
    let ctl = cfg.step_control();
    let force = cfg.forcing();
    let mut engine = DiagnosticsEngine64::new(init.grid(), params, force, cfg.diag_config())?;
    let mut diag = JsonLines::create(dir.join(DIAGNOSTICS_FILE))?;
    let mut snaps = JsonLines::create(dir.join(SNAPSHOTS_FILE))?;
    let mut targets = cfg.output.snapshot_times.clone();
    targets.sort_by(f64::total_cmp);
    let mut next_target = 0;

    let mut rows = Vec::new();
    let mut failure: Option<LabError> = None;
    let mut ext = Extrema {
        min_rho: f64::INFINITY,
        max_rho: f64::NEG_INFINITY,
        ..Default::default()
    };
    let started = Instant::now();
    let traj = run(&init, &params, &ctl, &force, |s| {
        ext.min_rho = ext.min_rho.min(s.rho.min());
        ext.max_rho = ext.max_rho.max(s.rho.max());
        ext.max_abs_u = ext.max_abs_u.max(s.u.max_abs());
        if failure.is_some() {
            return;
        }
        let mut observe = || -> LabResult<()> {
            for row in engine.push(s)? {
                diag.write(&row)?;
                rows.push(row);
            }
            while next_target < targets.len() && targets[next_target] <= s.t + 1e-12 * (1.0 + s.t.abs()) {
                snaps.write(&Snapshot::of(s))?;
                next_target += 1;
            }
            Ok(())
        };
        if let Err(e) = observe() {
            failure = Some(e);
        }
    })?;
    if failure.is_none() {
        match engine.finish() {
            Ok(last) => {
                for row in last {
                    diag.write(&row)?;
                    rows.push(row);
                }
            }
            Err(e) => failure = Some(e.into()),
        }
    }
    diag.finish()?;
    snaps.finish()?;

    let status = match failure {
        Some(LabError::Core(hierarchy_core::Error::NumericFault { context })) => TerminalStatus::NumericFault {
            t: traj.final_state.t,
            context: format!("diagnostics: {context}"),
        },
        Some(e) => return Err(e),
        None => traj.status.clone(),
    };
    let detail = match &status {
        TerminalStatus::Completed => None,
        TerminalStatus::VacuumDetected { t, x, min_rho } => {
            Some(format!("min rho {min_rho:e} at x = {x:.6}, t = {t:.6}"))
        }
        TerminalStatus::NumericFault { t, context } => Some(format!("{context} at t = {t:.6}")),
    };
    ext.min_energy = rows.iter().map(|r| r.energy).fold(f64::INFINITY, f64::min);
    ext.max_energy = rows.iter().map(|r| r.energy).fold(f64::NEG_INFINITY, f64::max);
    let summary = Summary {
        status: status.label().to_string(),
        exit_code: status_exit_code(&status),
        detail,
        t_reached: traj.final_state.t,
        steps: traj.steps,
        records: rows.len(),
        wall_time_s: started.elapsed().as_secs_f64(),
        extrema: ext,
    };
    write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(RunOutcome {
        status,
        rows,
        summary,
        dir: dir.to_path_buf(),
    })
}

pub fn execute(cfg: &RunConfig) -> LabResult<RunOutcome> {
    execute_in(cfg, &cfg.output_dir())
}

/// Residuals at or below this level are reported as `floor`.
pub const RESIDUAL_FLOOR: f64 = 1e-13;

/// Observed order between two levels, or `Floor` once the finer residual is at rounding level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Order {
    Observed(f64),
    Floor,
}

impl Serialize for Order {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match *self {
            Order::Observed(p) => s.serialize_f64(p),
            Order::Floor => s.serialize_str("floor"),
        }
    }
}

impl Order {
    fn between(coarse: f64, fine: f64) -> Self {
        if fine <= RESIDUAL_FLOOR {
            Order::Floor
        } else {
            Order::Observed((coarse / fine).log2())
        }
    }

    fn acceptable(&self) -> bool {
        match *self {
            Order::Observed(p) => p >= 2.0,
            Order::Floor => true,
        }
    }
}

impl std::fmt::Display for Order {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Order::Observed(p) => write!(f, "{p:.2}"),
            Order::Floor => f.write_str("floor"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub n: usize,
    pub dt: f64,
    pub records: usize,
    pub x_transport_resid: f64,
    pub energy_balance_resid: f64,
    pub bd_balance_resid: f64,
}

impl Level {
    fn residuals(&self) -> [f64; 3] {
        [self.x_transport_resid, self.energy_balance_resid, self.bd_balance_resid]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<Level>,
    /// Observed orders between consecutive levels, per residual in [`Level`] order.
    pub orders: Vec<[Order; 3]>,
    pub monotone: bool,
    pub success: bool,
}

impl ConvergenceReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>6} {:>12} {:>8} {:>14} {:>14} {:>14}",
            "n", "dt", "records", "x_transport", "energy_bal", "bd_bal"
        );
        for (i, l) in self.levels.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:>6} {:>12.4e} {:>8} {:>14.4e} {:>14.4e} {:>14.4e}",
                l.n, l.dt, l.records, l.x_transport_resid, l.energy_balance_resid, l.bd_balance_resid
            );
            if let Some(o) = self.orders.get(i) {
                let _ = writeln!(s, "{:>29} order {:>14} {:>14} {:>14}", "", o[0], o[1], o[2]);
            }
        }
        let _ = writeln!(s, "monotone: {}  success: {}", self.monotone, self.success);
        s
    }
}

/// Refinement study: level `l` uses `n·2^l` points, step `dt₀/4^l` and the
/// same number of steps between records, so the record spacing shrinks with the step.
pub fn convergence(cfg: &RunConfig, levels: usize, dir: &Path) -> LabResult<ConvergenceReport> {
    if levels < 3 {
        return Err(LabError::config(format!("--levels: must satisfy >= 3 (got {levels})")));
    }
    let base = cfg.initial_state()?;
    let dt0 = 0.9 * stable_dt(&base, &cfg.model_params(), &cfg.step_control())?.dt;
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let mut c = cfg.clone();
        c.grid.n = cfg.grid.n << l;
        c.control.dt_max = dt0 / 4f64.powi(l as i32);
        c.control.dt_min = c.control.dt_min.min(c.control.dt_max);
        c.validate()?;
        let outcome = execute_in(&c, &dir.join(format!("level_{l}")))?;
        if outcome.status != TerminalStatus::Completed {
            return Err(LabError::config(format!(
                "convergence level {l} (n = {}) ended with {}",
                c.grid.n,
                outcome.status.label()
            )));
        }
        let worst = |f: fn(&DiagRecord) -> Option<f64>| outcome.rows.iter().filter_map(f).fold(0.0, f64::max);
        out.push(Level {
            n: c.grid.n,
            dt: c.control.dt_max,
            records: outcome.rows.len(),
            x_transport_resid: worst(|r| r.x_transport_resid),
            energy_balance_resid: worst(|r| r.energy_balance_resid),
            bd_balance_resid: worst(|r| r.bd_balance_resid),
        });
    }
    let orders: Vec<[Order; 3]> = out
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].residuals(), w[1].residuals());
            [0, 1, 2].map(|k| Order::between(a[k], b[k]))
        })
        .collect();
    let monotone = out.windows(2).all(|w| {
        let (a, b) = (w[0].residuals(), w[1].residuals());
        (0..3).all(|k| b[k] < a[k] || b[k] <= RESIDUAL_FLOOR)
    });
    let success = monotone && orders.iter().flatten().all(Order::acceptable);
    let report = ConvergenceReport {
        levels: out,
        orders,
        monotone,
        success,
    };
    write_json(&dir.join("convergence.json"), &report)?;
    Ok(report)
}

/// Fraction of the initial `velocity_variance + l1_dist²` allowed at the final time.
pub const FLOCKING_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlockingReport {
    pub status: String,
    /// Rows of `(t, energy, velocity_variance, l1_dist)`.
    pub series: Vec<[f64; 4]>,
    pub decay: DecayFit,
    pub max_energy_increase: f64,
    pub initial_metric: f64,
    pub final_metric: f64,
    pub metric_ratio: f64,
    pub success: bool,
}

impl FlockingReport {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            exit::COMPLETED
        } else {
            exit::CRITERIA_UNMET
        }
    }
}

pub fn check_flocking_preconditions(cfg: &RunConfig) -> LabResult<()> {
    if !(cfg.model.c_nl > 0.0) {
        return Err(LabError::config(format!(
            "model.c_nl: flocking requires the nonlocal alignment hypothesis c_nl > 0 (got {})",
            cfg.model.c_nl
        )));
    }
    if cfg.model.gamma != 1.0 {
        return Err(LabError::config(format!(
            "model.gamma: flocking requires gamma = 1 (got {})",
            cfg.model.gamma
        )));
    }
    if !cfg.forcing().is_zero() {
        return Err(LabError::config("force: flocking requires zero forcing"));
    }
    if !(cfg.control.t_final >= 100.0) {
        return Err(LabError::config(format!(
            "control.t_final: flocking requires t_final >= 100 (got {})",
            cfg.control.t_final
        )));
    }
    Ok(())
}

/// Long forceless isothermal run judged by energy decay and the final flocking metric.
pub fn flocking(cfg: &RunConfig, dir: &Path) -> LabResult<FlockingReport> {
    check_flocking_preconditions(cfg)?;
    let outcome = execute_in(cfg, dir)?;
    let series: Vec<[f64; 4]> = outcome
        .rows
        .iter()
        .map(|r| [r.t, r.energy, r.velocity_variance, r.l1_dist])
        .collect();
    let energy: Vec<(f64, f64)> = series.iter().map(|r| (r[0], r[1])).collect();
    let e0 = energy.first().map_or(0.0, |e| e.1.abs());
    let decay = decay_fit(&energy, 1e-10 * (1.0 + e0))?;
    let max_energy_increase = energy.windows(2).map(|w| w[1].1 - w[0].1).fold(f64::NEG_INFINITY, f64::max);
    let metric = |r: &[f64; 4]| r[2] + r[3] * r[3];
    let initial_metric = series.first().map_or(0.0, metric);
    let final_metric = series.last().map_or(0.0, metric);
    let metric_ratio = if initial_metric > 0.0 { final_metric / initial_metric } else { 0.0 };
    let completed = outcome.status == TerminalStatus::Completed;
    let success = completed
        && decay.nonincreasing
        && decay.sup_statistic.is_finite()
        && (metric_ratio <= FLOCKING_THRESHOLD || final_metric == 0.0);
    let mut plot = String::from("# t energy\n");
    for (t, e) in &energy {
        let _ = writeln!(plot, "{t} {e}");
    }
    let plot_path = dir.join("flocking_series.dat");
    std::fs::write(&plot_path, plot).map_err(|e| LabError::io(&plot_path, e))?;
    let report = FlockingReport {
        status: outcome.status.label().to_string(),
        series,
        decay,
        max_energy_increase,
        initial_metric,
        final_metric,
        metric_ratio,
        success,
    };
    write_json(&dir.join("flocking.json"), &report)?;
    Ok(report)
}
