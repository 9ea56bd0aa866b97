//! Strict JSON run configuration.
//!
//! A document is resolved in three layers: built-in defaults, then the
//! optional `"scenario"` preset, then every key given explicitly. The merged
//! tree is deserialized with unknown keys rejected and finally checked
//! against the parameter domains of the core types.

use std::path::{Path, PathBuf};

use hierarchy_core::integrator::initial_data;
use hierarchy_core::{
    DiagConfig, Error as CoreError, Field64, Forcing64, ForcingKind, Grid64, InitPreset, ModelParams64, State64,
    StepControl64,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{LabError, LabResult};
use crate::output::Snapshot;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "ENTROPY_LAB_OUT";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    pub grid: GridSection,
    pub model: ModelSection,
    pub init: InitSection,
    pub control: ControlSection,
    pub force: ForceSection,
    pub diagnostics: DiagnosticsSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub c_p: f64,
    pub gamma: f64,
    pub c_mu: f64,
    pub alpha: f64,
    pub c_nl: f64,
    pub c_loc: f64,
    pub s: f64,
    pub tau: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresetName {
    PerturbedConstant,
    BimodalFlock,
    RandomBandlimited,
    DeepWell,
    Snapshot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub preset: PresetName,
    pub seed: u64,
    /// Perturbation size: `ε` for `perturbed_constant`, the bump amplitude
    /// for `bimodal_flock`, the well depth for `deep_well`.
    pub epsilon: f64,
    pub mode: u32,
    pub velocity: f64,
    pub mean_density: f64,
    /// Source file when `preset` is `snapshot`; its last line is used.
    pub snapshot_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub cfl: f64,
    pub t_final: f64,
    pub record_every: usize,
    pub vacuum_floor: f64,
    pub dt_min: f64,
    pub dt_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForceKindName {
    Zero,
    StandingWave,
    TravelingWave,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForceSection {
    pub kind: ForceKindName,
    pub amplitude: f64,
    pub mode: u32,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    pub hierarchy_depth: usize,
    pub double_integral_cadence: usize,
    pub k_images: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Output directory; falls back to `$ENTROPY_LAB_OUT`, then `./out`.
    pub path: Option<PathBuf>,
    pub format: String,
    pub snapshot_times: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelParams64::default();
        let c = StepControl64::default();
        let d = DiagConfig::default();
        RunConfig {
            scenario: None,
            grid: GridSection { n: 128 },
            model: ModelSection {
                c_p: m.c_p,
                gamma: m.gamma,
                c_mu: m.c_mu,
                alpha: m.alpha,
                c_nl: m.c_nl,
                c_loc: m.c_loc,
                s: m.s,
                tau: m.tau,
            },
            init: InitSection {
                preset: PresetName::PerturbedConstant,
                seed: 0,
                epsilon: 0.2,
                mode: 1,
                velocity: 0.1,
                mean_density: m.rho_bar,
                snapshot_path: None,
            },
            control: ControlSection {
                cfl: c.cfl,
                t_final: c.t_final,
                record_every: c.record_every,
                vacuum_floor: c.vacuum_floor,
                dt_min: c.dt_min,
                dt_max: c.dt_max,
            },
            force: ForceSection {
                kind: ForceKindName::Zero,
                amplitude: 0.0,
                mode: 1,
                frequency: 1.0,
            },
            diagnostics: DiagnosticsSection {
                hierarchy_depth: d.hierarchy_depth,
                double_integral_cadence: d.double_integral_cadence,
                k_images: m.k_images,
            },
            output: OutputSection {
                path: None,
                format: "jsonl".to_string(),
                snapshot_times: Vec::new(),
            },
        }
    }
}

/// Names accepted by the top-level `"scenario"` key.
pub const SCENARIOS: [&str; 9] = [
    "nonlocal_s53",
    "local_gamma_gt1",
    "local_alpha_gt_half",
    "hybrid_s32",
    "bd_global",
    "hybrid_flock",
    "smooth_hybrid",
    "equilibrium",
    "deep_well",
];

/// Partial document a scenario lays over the defaults.
pub fn scenario_overlay(name: &str) -> Option<Value> {
    let v = match name {
        // purely nonlocal alignment with s in (5/3, 2)
        "nonlocal_s53" => json!({
            "model": {"c_nl": 1.0, "c_loc": 0.0, "s": 1.75, "gamma": 2.0, "alpha": 0.0},
            "init": {"epsilon": 0.3, "velocity": 0.5},
            "control": {"t_final": 2.0},
        }),
        "local_gamma_gt1" => json!({
            "model": {"c_nl": 0.0, "c_loc": 1.0, "gamma": 2.0, "alpha": 0.0},
            "init": {"epsilon": 0.3, "velocity": 0.5},
            "control": {"t_final": 2.0},
        }),
        "local_alpha_gt_half" => json!({
            "model": {"c_nl": 0.0, "c_loc": 1.0, "gamma": 1.0, "alpha": 0.75},
            "init": {"epsilon": 0.3, "velocity": 0.5},
            "control": {"t_final": 2.0},
        }),
        "hybrid_s32" => json!({
            "model": {"c_nl": 1.0, "c_loc": 1.0, "s": 1.6, "gamma": 2.0, "alpha": 1.0},
            "init": {"epsilon": 0.3, "velocity": 0.5},
            "control": {"t_final": 2.0},
        }),
        "bd_global" => json!({
            "model": {"c_nl": 1.0, "c_loc": 1.0, "s": 1.75, "gamma": 1.5, "alpha": 0.25},
            "init": {"epsilon": 0.5, "velocity": 1.0},
            "control": {"t_final": 50.0, "record_every": 500},
            "diagnostics": {"double_integral_cadence": 10},
        }),
        "hybrid_flock" => json!({
            "grid": {"n": 256},
            "model": {"c_nl": 1.0, "c_loc": 1.0, "s": 1.75, "gamma": 1.0, "alpha": 0.25, "c_p": 1.0, "c_mu": 1.0},
            "init": {"preset": "bimodal_flock", "epsilon": 0.5, "velocity": 1.0, "mean_density": 1.0},
            "control": {"t_final": 200.0, "record_every": 2000},
            "diagnostics": {"double_integral_cadence": 10},
        }),
        "smooth_hybrid" => json!({
            "grid": {"n": 64},
            "model": {"c_p": 1.0, "gamma": 2.0, "c_mu": 1.0, "alpha": 1.0, "c_nl": 0.5, "c_loc": 1.0, "s": 1.5},
            "init": {"epsilon": 0.2, "velocity": 0.1, "mode": 1},
            "control": {"t_final": 0.5, "record_every": 1},
            "force": {"kind": "standing_wave", "amplitude": 0.5, "mode": 1, "frequency": 1.0},
        }),
        "equilibrium" => json!({
            "model": {"c_nl": 1.0, "c_loc": 1.0},
            "init": {"epsilon": 0.0, "velocity": 0.0},
        }),
        "deep_well" => json!({
            "model": {"c_nl": 0.0, "c_loc": 0.05, "gamma": 0.5, "alpha": 0.9},
            "init": {"preset": "deep_well", "epsilon": 0.98, "velocity": 3.0},
            "control": {"vacuum_floor": 0.01},
        }),
        _ => return None,
    };
    Some(v)
}

fn merge(base: &mut Value, overlay: &Value) {
    match (base, overlay) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> LabResult<RunConfig> {
    let user: Value = serde_json::from_str(text).map_err(|e| LabError::config(format!("malformed JSON: {e}")))?;
    if !user.is_object() {
        return Err(LabError::config("document must be a JSON object"));
    }
    let mut tree = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
    match user.get("scenario") {
        None | Some(Value::Null) => {}
        Some(Value::String(name)) => {
            let overlay = scenario_overlay(name).ok_or_else(|| {
                LabError::config(format!("scenario: unknown preset `{name}` (expected one of {})", SCENARIOS.join(", ")))
            })?;
            merge(&mut tree, &overlay);
        }
        Some(other) => return Err(LabError::config(format!("scenario: expected a string, got {other}"))),
    }
    merge(&mut tree, &user);
    let cfg: RunConfig = serde_path_to_error::deserialize(tree).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path == "." {
            LabError::config(inner.to_string())
        } else {
            LabError::config(format!("{path}: {inner}"))
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> LabResult<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_config(&text)
}

/// Re-labels a core parameter error with its configuration key.
fn in_section(section: &'static str) -> impl Fn(CoreError) -> LabError {
    move |e| match e {
        CoreError::Parameter {
            name,
            constraint,
            value,
        } => LabError::config(format!("{section}.{name}: must satisfy {constraint} (got {value})")),
        other => LabError::config(format!("{section}: {other}")),
    }
}

impl RunConfig {
    pub fn validate(&self) -> LabResult<()> {
        self.grid()?;
        self.model_params().validate().map_err(in_section("model"))?;
        self.step_control().validate().map_err(in_section("control"))?;
        self.forcing().validate().map_err(in_section("force"))?;
        self.diag_config().validate().map_err(in_section("diagnostics"))?;
        if self.diagnostics.k_images == 0 {
            return Err(LabError::config("diagnostics.k_images: must satisfy >= 1 (got 0)"));
        }
        let init = &self.init;
        if !(init.mean_density > 0.0 && init.mean_density.is_finite()) {
            return Err(LabError::config(format!(
                "init.mean_density: must satisfy > 0 (got {})",
                init.mean_density
            )));
        }
        if !init.epsilon.is_finite() || !init.velocity.is_finite() {
            return Err(LabError::config("init.epsilon, init.velocity: must be finite"));
        }
        if init.preset == PresetName::Snapshot && init.snapshot_path.is_none() {
            return Err(LabError::config("init.snapshot_path: required when init.preset is `snapshot`"));
        }
        if self.output.format != "jsonl" {
            return Err(LabError::config(format!(
                "output.format: must be \"jsonl\" (got {:?})",
                self.output.format
            )));
        }
        if self.output.snapshot_times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(LabError::config("output.snapshot_times: entries must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn grid(&self) -> LabResult<Grid64> {
        Grid64::new(self.grid.n).map_err(in_section("grid"))
    }

    pub fn model_params(&self) -> ModelParams64 {
        let m = &self.model;
        ModelParams64 {
            c_p: m.c_p,
            gamma: m.gamma,
            c_mu: m.c_mu,
            alpha: m.alpha,
            c_nl: m.c_nl,
            c_loc: m.c_loc,
            s: m.s,
            tau: m.tau,
            rho_bar: self.init.mean_density,
            k_images: self.diagnostics.k_images,
        }
    }

    pub fn step_control(&self) -> StepControl64 {
        let c = &self.control;
        StepControl64 {
            cfl: c.cfl,
            dt_min: c.dt_min,
            dt_max: c.dt_max,
            t_final: c.t_final,
            vacuum_floor: c.vacuum_floor,
            record_every: c.record_every,
        }
    }

    pub fn forcing(&self) -> Forcing64 {
        let f = &self.force;
        Forcing64 {
            kind: match f.kind {
                ForceKindName::Zero => ForcingKind::Zero,
                ForceKindName::StandingWave => ForcingKind::StandingWave,
                ForceKindName::TravelingWave => ForcingKind::TravelingWave,
            },
            amplitude: f.amplitude,
            mode: f.mode,
            frequency: f.frequency,
        }
    }

    pub fn diag_config(&self) -> DiagConfig {
        DiagConfig {
            hierarchy_depth: self.diagnostics.hierarchy_depth,
            double_integral_cadence: self.diagnostics.double_integral_cadence,
        }
    }

    /// Output directory: `output.path`, else `$ENTROPY_LAB_OUT`, else `./out`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .path
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn initial_state(&self) -> LabResult<State64> {
        let grid = self.grid()?;
        let i = &self.init;
        let preset = match i.preset {
            PresetName::PerturbedConstant => InitPreset::PerturbedConstant {
                rho_bar: i.mean_density,
                epsilon: i.epsilon,
                velocity: i.velocity,
                mode: i.mode,
            },
            PresetName::BimodalFlock => InitPreset::BimodalFlock {
                rho_bar: i.mean_density,
                amplitude: i.epsilon,
                velocity: i.velocity,
            },
            PresetName::RandomBandlimited => InitPreset::RandomBandlimited {
                rho_bar: i.mean_density,
                velocity: i.velocity,
            },
            PresetName::DeepWell => InitPreset::DeepWell {
                rho_bar: i.mean_density,
                depth: i.epsilon,
                velocity: i.velocity,
            },
            PresetName::Snapshot => {
                let path = i.snapshot_path.as_deref().expect("validated");
                return snapshot_state(path, &grid);
            }
        };
        initial_data(&preset, &grid, i.seed).map_err(in_section("init"))
    }
}

fn snapshot_state(path: &Path, grid: &Grid64) -> LabResult<State64> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let line = text
        .lines()
        .rev()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| LabError::config(format!("init.snapshot_path: {} holds no snapshot", path.display())))?;
    let snap: Snapshot = serde_json::from_str(line)
        .map_err(|e| LabError::config(format!("init.snapshot_path: bad snapshot record: {e}")))?;
    if snap.n != grid.n() {
        return Err(LabError::config(format!(
            "init.snapshot_path: snapshot has n = {}, grid.n is {}",
            snap.n,
            grid.n()
        )));
    }
    let bad = |e: CoreError| LabError::config(format!("init.snapshot_path: {e}"));
    let rho = Field64::new(grid, snap.rho).map_err(bad)?;
    let u = Field64::new(grid, snap.u).map_err(bad)?;
    State64::new(rho, u, snap.t).map_err(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document() {
        let cfg = parse_config(r#"{"grid": {"n": 128}, "init": {"preset": "perturbed_constant"}}"#).unwrap();
        assert_eq!(cfg.grid.n, 128);
        assert_eq!(cfg.model, RunConfig::default().model);
    }

    #[test]
    fn defaults_round_trip() {
        let text = serde_json::to_string_pretty(&RunConfig::default()).unwrap();
        assert_eq!(parse_config(&text).unwrap(), RunConfig::default());
    }

    #[test]
    fn order_out_of_range_names_key_and_interval() {
        let msg = parse_config(r#"{"model": {"s": 2.5}}"#).unwrap_err().to_string();
        assert!(msg.contains("model.s") && msg.contains("(0,2)"), "{msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for doc in [r#"{"model": {"sigma": 1.0}}"#, r#"{"extra": 1}"#, r#"{"init": {"preset": "nope"}}"#] {
            assert!(matches!(parse_config(doc), Err(LabError::Config(_))), "{doc}");
        }
        let msg = parse_config(r#"{"control": {"cfl": 0.3, "cfll": 1}}"#).unwrap_err().to_string();
        assert!(msg.contains("control") && msg.contains("cfll"), "{msg}");
    }

    #[test]
    fn scenario_layers_under_explicit_keys() {
        let cfg = parse_config(r#"{"scenario": "hybrid_flock"}"#).unwrap();
        let m = &cfg.model;
        assert_eq!((m.c_nl, m.c_loc, m.alpha, m.gamma, m.s), (1.0, 1.0, 0.25, 1.0, 1.75));
        assert_eq!(cfg.init.preset, PresetName::BimodalFlock);
        let cfg = parse_config(r#"{"scenario": "hybrid_flock", "model": {"s": 1.6}}"#).unwrap();
        assert_eq!((cfg.model.s, cfg.model.alpha), (1.6, 0.25));
        assert!(parse_config(r#"{"scenario": "warp"}"#).is_err());
    }

    #[test]
    fn every_scenario_validates() {
        for name in SCENARIOS {
            let cfg = parse_config(&format!(r#"{{"scenario": "{name}"}}"#)).unwrap();
            cfg.initial_state().unwrap();
            let again = parse_config(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(again, cfg);
        }
    }

    #[test]
    fn snapshot_preset_needs_a_path() {
        let msg = parse_config(r#"{"init": {"preset": "snapshot"}}"#).unwrap_err().to_string();
        assert!(msg.contains("init.snapshot_path"), "{msg}");
    }
}
