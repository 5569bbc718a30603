//! Experiment configuration files.
//!
//! One TOML file describes the system, the target gate, the optimizer and
//! the experiment blocks; command-line flags override individual values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qpareto_core::dynamics::{ResampleMode, DEFAULT_GRID_SAFETY, DEFAULT_SPECTRAL_COMPONENTS};
use qpareto_core::pft::{PftSettings, TimeStep, CRITICAL_THRESHOLD, FRONT_STOP_VALUE};
use qpareto_core::spinsys::DEFAULT_FREQUENCIES;
use qpareto_core::{
    make_gate, DmorphSettings, GateKind, GradientMode, ObjectiveKind, SpinSystem, TargetGate,
};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub gate: GateConfig,
    pub objective: ObjectiveName,
    pub grid_safety: Option<f64>,
    pub spectral_components: Option<usize>,
    pub optimizer: OptimizerConfig,
    pub optimize: OptimizeConfig,
    pub pft: PftConfig,
    pub sweep: SweepConfig,
    pub noise: NoiseConfig,
    pub phases: PhasesConfig,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveName {
    #[default]
    PhaseDependent,
    PhaseIndependent,
}

impl From<ObjectiveName> for ObjectiveKind {
    fn from(o: ObjectiveName) -> Self {
        match o {
            ObjectiveName::PhaseDependent => ObjectiveKind::PhaseDependent,
            ObjectiveName::PhaseIndependent => ObjectiveKind::PhaseIndependent,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Number of qubits; defaults to the length of `omega`, or 2.
    pub n: Option<usize>,
    /// Qubit frequencies; defaults to the first `n` of (20, 24, 30, 40).
    pub omega: Option<Vec<f64>>,
    /// Equal coupling between every pair.
    pub j: Option<f64>,
    /// Full symmetric coupling matrix, zero diagonal.
    pub couplings: Option<Vec<Vec<f64>>>,
}

impl SystemConfig {
    pub fn build(&self) -> Result<SpinSystem> {
        let omega = match (&self.omega, self.n) {
            (Some(w), Some(n)) if w.len() != n => {
                bail!("system.omega has {} entries but system.n = {n}", w.len())
            }
            (Some(w), _) => w.clone(),
            (None, n) => {
                let n = n.unwrap_or(2);
                if n == 0 || n > DEFAULT_FREQUENCIES.len() {
                    bail!("system.omega is required for n = {n}");
                }
                DEFAULT_FREQUENCIES[..n].to_vec()
            }
        };
        let sys = match (&self.couplings, self.j) {
            (Some(_), Some(_)) => bail!("give either system.j or system.couplings, not both"),
            (Some(c), None) => SpinSystem::new(omega, c.clone())?,
            (None, j) => SpinSystem::with_uniform_coupling(omega, j.unwrap_or(0.8))?,
        };
        Ok(sys)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    pub name: String,
    pub phase_index: usize,
    /// CPHASE angle.
    pub alpha: Option<f64>,
    /// Seed of a RANDOM gate.
    pub seed: Option<u64>,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            name: "CNOT".into(),
            phase_index: 0,
            alpha: None,
            seed: None,
        }
    }
}

impl GateConfig {
    pub fn kind(&self) -> Result<GateKind> {
        Ok(GateKind::from_name(&self.name, self.alpha, self.seed)?)
    }

    pub fn build(&self, qubits: usize) -> Result<TargetGate> {
        Ok(make_gate(self.kind()?, qubits, self.phase_index)?)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientName {
    #[default]
    Continuum,
    ExactDiscrete,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub target_value: Option<f64>,
    pub rel_improvement: Option<f64>,
    pub stall_window: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    pub max_steps: Option<usize>,
    pub gradient_mode: Option<GradientName>,
    pub sufficient_decrease: Option<f64>,
    pub record_fields: Option<bool>,
}

impl OptimizerConfig {
    pub fn settings(&self) -> DmorphSettings {
        let d = DmorphSettings::default();
        DmorphSettings {
            target_value: self.target_value.unwrap_or(d.target_value),
            rel_improvement: self.rel_improvement.unwrap_or(d.rel_improvement),
            stall_window: self.stall_window.unwrap_or(d.stall_window),
            rtol: self.rtol.unwrap_or(d.rtol),
            atol: self.atol.unwrap_or(d.atol),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            gradient_mode: match self.gradient_mode {
                None => d.gradient_mode,
                Some(GradientName::Continuum) => GradientMode::Continuum,
                Some(GradientName::ExactDiscrete) => GradientMode::ExactDiscrete,
            },
            sufficient_decrease: self.sufficient_decrease.unwrap_or(d.sufficient_decrease),
            record_fields: self.record_fields.unwrap_or(d.record_fields),
            ..d
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    /// Control time `T`.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PftMode {
    /// Stop when `D̃ ≤ 1e-8` is lost.
    #[default]
    Critical,
    /// Follow the front down to `D̃ = 1e-2`.
    Front,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleName {
    #[default]
    Compress,
    Truncate,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PftConfig {
    pub t0: Option<f64>,
    pub mode: PftMode,
    /// `ΔT = dt_fraction · T`.
    pub dt_fraction: Option<f64>,
    /// Fixed `ΔT`; overrides `dt_fraction`.
    pub dt_absolute: Option<f64>,
    pub stop_value: Option<f64>,
    pub base_budget: Option<usize>,
    pub retry_factor: Option<usize>,
    pub min_time: Option<f64>,
    pub max_points: Option<usize>,
    pub resample: ResampleName,
    pub auto_double_t0: Option<bool>,
    pub verify: Option<bool>,
    /// Write every point's fields next to the Pareto CSV.
    pub archive_fields: Option<bool>,
}

impl PftConfig {
    pub fn settings(&self, cfg: &ExperimentConfig, t0: f64, seed: u64) -> Result<PftSettings> {
        let mut s = match self.mode {
            PftMode::Critical => PftSettings::critical(t0, seed),
            PftMode::Front => PftSettings::front(t0, seed),
        };
        s.stop_value = self.stop_value.unwrap_or(match self.mode {
            PftMode::Critical => CRITICAL_THRESHOLD,
            PftMode::Front => FRONT_STOP_VALUE,
        });
        s.time_step = match (self.dt_absolute, self.dt_fraction) {
            (Some(dt), _) => TimeStep::Absolute(dt),
            (None, Some(f)) => TimeStep::Relative(f),
            (None, None) => s.time_step,
        };
        s.dmorph = cfg.optimizer.settings();
        if let Some(b) = self.base_budget {
            s.base_budget = b;
        }
        if let Some(r) = self.retry_factor {
            s.retry_factor = r;
        }
        if let Some(m) = self.min_time {
            s.min_time = m;
        }
        if let Some(m) = self.max_points {
            s.max_points = m;
        }
        s.resample = match self.resample {
            ResampleName::Compress => ResampleMode::Compress,
            ResampleName::Truncate => ResampleMode::Truncate,
        };
        s.auto_double_t0 = self.auto_double_t0.unwrap_or(false);
        s.verify = self.verify.unwrap_or(true);
        s.objective = cfg.objective.into();
        s.grid_safety = cfg.grid_safety();
        s.spectral_components = cfg.spectral_components();
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Equal couplings `J` applied to the configured frequencies.
    pub couplings: Vec<f64>,
    /// Three-qubit `(J12, J13, J23)` triples; used instead of `couplings`.
    pub triples: Vec<[f64; 3]>,
    /// `T0 = t0_scale / J̄` for each system.
    pub t0_scale: Option<f64>,
    /// Fixed `T0` for every system; overrides `t0_scale`.
    pub t0: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub sigma2: Vec<f64>,
    pub times: Vec<f64>,
    pub trials: Option<usize>,
    /// Cross-correlation matrix; identity when absent.
    pub beta: Option<Vec<Vec<f64>>>,
    /// Noise sub-steps per knob; chosen from the mesh when absent.
    pub substeps: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhasesConfig {
    pub time: Option<f64>,
    pub runs: Option<usize>,
    /// Fluence of each initial field (default 1).
    pub initial_fluence: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| anyhow::anyhow!("{e}"))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn grid_safety(&self) -> f64 {
        self.grid_safety.unwrap_or(DEFAULT_GRID_SAFETY)
    }

    pub fn spectral_components(&self) -> usize {
        self.spectral_components
            .unwrap_or(DEFAULT_SPECTRAL_COMPONENTS)
    }

    pub fn seeds(&self) -> Vec<u64> {
        if self.seeds.is_empty() {
            vec![0]
        } else {
            self.seeds.clone()
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn format(&self) -> OutputFormat {
        self.format.unwrap_or_default()
    }

    /// Checks everything that can be checked without running anything.
    pub fn validate(&self) -> Result<()> {
        let sys = self.system.build().context("system block")?;
        self.gate.build(sys.qubits()).context("gate block")?;
        self.optimizer
            .settings()
            .validate()
            .context("optimizer block")?;
        let safety = self.grid_safety();
        if !(safety > 0.0 && safety <= 1.0) {
            bail!("grid_safety must lie in (0, 1], got {safety}");
        }
        if self.spectral_components() == 0 {
            bail!("spectral_components must be positive");
        }
        if self.jobs == Some(0) {
            bail!("jobs must be positive");
        }
        if let Some(beta) = &self.noise.beta {
            if beta.len() != sys.qubits() {
                bail!("noise.beta must be {0}x{0}", sys.qubits());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_build_the_reference_system() {
        let cfg = ExperimentConfig::from_toml("").unwrap();
        let sys = cfg.system.build().unwrap();
        assert_eq!(sys.omega(), &[20.0, 24.0]);
        assert_eq!(sys.couplings()[0][1], 0.8);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = ExperimentConfig::from_toml("[system]\nomega = [20.0]\nbogus = 1\n")
            .unwrap_err()
            .to_string();
        assert!(err.contains("bogus"), "{err}");
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn full_config_parses() {
        let text = r#"
objective = "phase-independent"
seeds = [1, 2, 3]
jobs = 2
format = "json"

[system]
omega = [20.0, 24.0, 30.0]
couplings = [[0.0, 2.0, 1.2], [2.0, 0.0, 1.6], [1.2, 1.6, 0.0]]

[gate]
name = "QFT"
phase_index = 1

[optimizer]
gradient_mode = "exact-discrete"
max_steps = 500

[pft]
t0 = 4.5
mode = "front"
dt_absolute = 0.01
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.system.build().unwrap().qubits(), 3);
        let s = cfg.pft.settings(&cfg, 4.5, 1).unwrap();
        assert_eq!(s.time_step, TimeStep::Absolute(0.01));
        assert_eq!(s.stop_value, FRONT_STOP_VALUE);
        assert_eq!(s.dmorph.max_steps, 500);
        assert_eq!(s.objective, ObjectiveKind::PhaseIndependent);
    }

    #[test]
    fn conflicting_couplings_rejected() {
        let cfg = ExperimentConfig::from_toml(
            "[system]\nj = 1.0\ncouplings = [[0.0, 1.0], [1.0, 0.0]]\n",
        )
        .unwrap();
        assert!(cfg.validate().is_err());
    }
}
