//! Experiment configuration: a scenario plus what to run on it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vlc_secure_ee::config::InitMode;
use vlc_secure_ee::SystemConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ConvergenceStudy,
    OpticalPowerSweep,
    SingleSolve,
}

/// Quantity varied along a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    /// Per-LED optical power in dBm.
    OpticalPowerDbm,
    /// Circuitry share of the DC power in watts.
    DcCircuitry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    /// One curve per value of the other variable.
    #[serde(default)]
    pub curves: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            variable: SweepVariable::OpticalPowerDbm,
            values: (0..=10).map(|i| 20.0 + 2.0 * i as f64).collect(),
            curves: vec![4.0, 8.0, 12.0],
        }
    }
}

impl SweepConfig {
    /// `(optical power dBm, circuitry W)` for curve value `c` and swept value `v`.
    pub fn point(&self, c: f64, v: f64) -> (f64, f64) {
        match self.variable {
            SweepVariable::OpticalPowerDbm => (v, c),
            SweepVariable::DcCircuitry => (c, v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSpec {
    pub rows: usize,
    pub cols: usize,
    pub users: usize,
}

impl LayoutSpec {
    pub fn label(&self) -> String {
        format!("{}x{}", self.rows * self.cols, self.users)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceConfig {
    pub layouts: Vec<LayoutSpec>,
    pub inits: Vec<InitMode>,
    /// Band for the iterations-to-final count, as a fraction of the final efficiency.
    pub band: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            layouts: vec![
                LayoutSpec { rows: 2, cols: 2, users: 3 },
                LayoutSpec { rows: 2, cols: 3, users: 4 },
                LayoutSpec { rows: 3, cols: 3, users: 6 },
            ],
            inits: vec![InitMode::ZeroForcing, InitMode::RandomFeasible],
            band: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub realizations: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub sweep: Option<SweepConfig>,
    pub convergence: ConvergenceConfig,
    pub scenario: SystemConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentKind::SingleSolve,
            realizations: 200,
            seed: 1,
            output_dir: PathBuf::from("results"),
            sweep: None,
            convergence: ConvergenceConfig::default(),
            scenario: SystemConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.scenario.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.realizations == 0 {
            return bad("realizations must be at least 1".into());
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return bad("sweep values must not be empty".into());
            }
            if s.values.iter().chain(&s.curves).any(|v| !v.is_finite()) {
                return bad("sweep values must be finite".into());
            }
        }
        let c = &self.convergence;
        if c.layouts.is_empty() || c.inits.is_empty() {
            return bad("convergence study needs at least one layout and one init mode".into());
        }
        if !(c.band > 0.0 && c.band < 1.0) {
            return bad(format!("convergence band {} outside (0, 1)", c.band));
        }
        for l in &c.layouts {
            self.scenario_for_layout(l)
                .validate()
                .map_err(|e| CliError::Config(format!("layout {}: {e}", l.label())))?;
        }
        for &(dbm, circ) in &self.sweep_points() {
            self.scenario_for_point(dbm, circ)
                .validate()
                .map_err(|e| CliError::Config(format!("sweep point ({dbm} dBm, {circ} W): {e}")))?;
        }
        Ok(())
    }

    /// Sweep settings, falling back to the reference 20-40 dBm grid.
    pub fn sweep_or_default(&self) -> SweepConfig {
        self.sweep.clone().unwrap_or_default()
    }

    fn sweep_points(&self) -> Vec<(f64, f64)> {
        let Some(s) = &self.sweep else { return Vec::new() };
        let curves = if s.curves.is_empty() { vec![self.curve_default(s.variable)] } else { s.curves.clone() };
        curves.iter().flat_map(|&c| s.values.iter().map(move |&v| s.point(c, v))).collect()
    }

    /// Value of the non-swept variable when no curves are listed.
    pub fn curve_default(&self, variable: SweepVariable) -> f64 {
        match variable {
            SweepVariable::OpticalPowerDbm => self.scenario.power.dc_circuitry,
            SweepVariable::DcCircuitry => self.scenario.drive.optical_power_dbm,
        }
    }

    pub fn scenario_for_layout(&self, l: &LayoutSpec) -> SystemConfig {
        let mut s = self.scenario.clone();
        s.layout.rows = l.rows;
        s.layout.cols = l.cols;
        s.users.count = l.users;
        s
    }

    pub fn scenario_for_point(&self, dbm: f64, circuitry: f64) -> SystemConfig {
        let mut s = self.scenario.clone();
        s.drive.optical_power_dbm = dbm;
        s.power.dc_circuitry = circuitry;
        s
    }

    /// SHA-256 of the canonical JSON form, ignoring where outputs go.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let text = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_valid() {
        let cfg = ExperimentConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.realizations, 200);
        assert_eq!(cfg.convergence.layouts.len(), 3);
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig { output_dir: "elsewhere".into(), ..a.clone() };
        let c = ExperimentConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let text = "[sweep]\nvariable = \"optical-power-dbm\"\nvalues = []\n";
        assert!(matches!(ExperimentConfig::from_toml_str(text), Err(CliError::Config(_))));
    }

    #[test]
    fn zero_realizations_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("realizations = 0\n").is_err());
    }

    #[test]
    fn layouts_too_small_for_their_users_are_rejected() {
        let text = "[[convergence.layouts]]\nrows = 1\ncols = 2\nusers = 3\n";
        assert!(ExperimentConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn sweep_points_follow_the_variable() {
        let s = SweepConfig { variable: SweepVariable::DcCircuitry, values: vec![4.0], curves: vec![30.0] };
        assert_eq!(s.point(30.0, 4.0), (30.0, 4.0));
        assert_eq!(SweepConfig::default().point(8.0, 24.0), (24.0, 8.0));
    }

    #[test]
    fn nested_scenario_sections_parse() {
        let cfg = ExperimentConfig::from_toml_str("[scenario.power]\ndc_circuitry = 4.0\n").unwrap();
        assert_eq!(cfg.scenario.power.dc_circuitry, 4.0);
    }
}
