//! JSON run configurations. Unknown fields are rejected so that typos
//! surface as errors instead of silently using defaults.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::budget::{GateBudgetTable, TimeScaling};
use crate::cv::{EntropyMethod, PhaseGrid};
use crate::error::{HyqError, Result};
use crate::hilbert::HybridState;
use crate::jch::{product_state, JchParams};
use crate::trap::{Band, DriveSettings, TrapModel, YB171_MASS_U};
use crate::vqe::{SweepGrid, SweepMode, VqeOptions};

fn parse<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| HyqError::Parse(format!("{what} config: {e}")))
}

/// Lattice parameters shared by the model-based configs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    pub sites: usize,
    pub omega_c: f64,
    pub eta: f64,
    pub cutoff: usize,
}

fn one() -> f64 {
    1.0
}

impl Lattice {
    pub fn params(&self, delta: f64, kappa: f64) -> Result<JchParams> {
        JchParams::with_detuning(self.sites, self.omega_c, delta, kappa, self.eta, self.cutoff)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub modes: Vec<usize>,
    /// One of `u`/`d` per site.
    pub qubits: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvolutionMethod {
    #[default]
    Trotter,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "M")]
    pub sites: usize,
    #[serde(default = "one")]
    pub omega_c: f64,
    pub delta: f64,
    pub kappa: f64,
    pub eta: f64,
    pub cutoff: usize,
    pub dt: f64,
    pub steps: usize,
    pub initial: InitialState,
    #[serde(default)]
    pub method: EvolutionMethod,
    #[serde(default)]
    pub entropy: Option<EntropyMethod>,
}

impl ModelConfig {
    pub fn params(&self) -> Result<JchParams> {
        JchParams::with_detuning(self.sites, self.omega_c, self.delta, self.kappa, self.eta, self.cutoff)
    }

    pub fn initial_state(&self) -> Result<HybridState> {
        product_state(&self.params()?, &self.initial.modes, &self.initial.qubits)
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.initial_state()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(HyqError::Parse("model config: dt must be positive".into()));
        }
        if self.steps > 1_000_000 {
            return Err(HyqError::Parse("model config: steps must be at most 1e6".into()));
        }
        Ok(())
    }
}

pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let c: ModelConfig = parse("model", text)?;
    c.validate()?;
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub step: f64,
}

/// Optimizer settings shared by single-point and sweep runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    #[serde(default = "default_layers")]
    pub max_layers: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub target_fidelity: Option<f64>,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_layers() -> usize {
    10
}
fn default_restarts() -> usize {
    5
}
fn default_init_scale() -> f64 {
    0.1
}
fn default_max_iter() -> usize {
    400
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_layers: default_layers(),
            restarts: default_restarts(),
            target_fidelity: None,
            init_scale: default_init_scale(),
            max_iter: default_max_iter(),
        }
    }
}

impl OptimizerConfig {
    pub fn options(&self) -> Result<VqeOptions> {
        if self.max_layers == 0 || self.max_layers > 50 {
            return Err(HyqError::Parse("max_layers must be in 1..=50".into()));
        }
        if self.restarts == 0 || self.restarts > 100 {
            return Err(HyqError::Parse("restarts must be in 1..=100".into()));
        }
        if let Some(t) = self.target_fidelity {
            if !(0.0..=1.0).contains(&t) {
                return Err(HyqError::Parse("target_fidelity must lie in [0, 1]".into()));
            }
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(HyqError::Parse("init_scale must be non-negative".into()));
        }
        let mut o = VqeOptions {
            max_layers: self.max_layers,
            restarts: self.restarts,
            target_fidelity: self.target_fidelity,
            init_scale: self.init_scale,
            ..VqeOptions::default()
        };
        o.optimize.bfgs.max_iter = self.max_iter;
        Ok(o)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(rename = "M")]
    pub sites: usize,
    #[serde(default = "one")]
    pub omega_c: f64,
    pub eta: f64,
    pub cutoff: usize,
    pub delta: Range,
    pub kappa: Range,
    pub mode: SweepMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Skip the optimizer and report exact-diagonalization quantities only.
    #[serde(default)]
    pub exact_only: bool,
}

impl SweepConfig {
    pub fn lattice(&self) -> Lattice {
        Lattice { sites: self.sites, omega_c: self.omega_c, eta: self.eta, cutoff: self.cutoff }
    }

    pub fn grid(&self) -> Result<SweepGrid> {
        SweepGrid::uniform((self.delta.min, self.delta.max), self.delta.step, (self.kappa.min, self.kappa.max), self.kappa.step)
    }

    pub fn base(&self) -> Result<JchParams> {
        self.lattice().params(self.delta.min, self.kappa.min)
    }
}

pub fn parse_sweep_config(text: &str) -> Result<SweepConfig> {
    let c: SweepConfig = parse("sweep", text)?;
    c.base()?;
    c.grid()?;
    c.optimizer.options()?;
    Ok(c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VqeConfig {
    #[serde(rename = "M")]
    pub sites: usize,
    #[serde(default = "one")]
    pub omega_c: f64,
    pub eta: f64,
    pub cutoff: usize,
    pub delta: f64,
    pub kappa: f64,
    pub mode: SweepMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

impl VqeConfig {
    pub fn params(&self) -> Result<JchParams> {
        JchParams::with_detuning(self.sites, self.omega_c, self.delta, self.kappa, self.eta, self.cutoff)
    }
}

pub fn parse_vqe_config(text: &str) -> Result<VqeConfig> {
    let c: VqeConfig = parse("vqe", text)?;
    c.params()?;
    c.optimizer.options()?;
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterPoint {
    pub kappa: f64,
    pub delta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WignerSource {
    /// Single-mode Fock state `|n>`.
    Fock { n: usize, cutoff: usize },
    /// Exact lattice ground space, optionally within an excitation sector.
    Ground {
        #[serde(rename = "M")]
        sites: usize,
        #[serde(default = "one")]
        omega_c: f64,
        eta: f64,
        cutoff: usize,
        #[serde(default)]
        sector: Option<usize>,
        points: Vec<ParameterPoint>,
        /// Lattice site whose mode is mapped; defaults to the central one.
        #[serde(default)]
        site: Option<usize>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerConfig {
    pub state: WignerSource,
    #[serde(default)]
    pub grid: PhaseGrid,
}

/// Largest single-mode cutoff accepted for a Fock-state Wigner map.
pub const MAX_FOCK_CUTOFF: usize = 400;

pub fn parse_wigner_config(text: &str) -> Result<WignerConfig> {
    let c: WignerConfig = parse("wigner", text)?;
    c.grid.validate()?;
    match &c.state {
        WignerSource::Fock { n, cutoff } => {
            if n > cutoff || *cutoff == 0 || *cutoff > MAX_FOCK_CUTOFF {
                return Err(HyqError::Parse(format!("wigner config: need 0 <= n <= cutoff and 1 <= cutoff <= {MAX_FOCK_CUTOFF}")));
            }
        }
        WignerSource::Ground { sites, omega_c, eta, cutoff, points, site, .. } => {
            let lattice = Lattice { sites: *sites, omega_c: *omega_c, eta: *eta, cutoff: *cutoff };
            if points.is_empty() {
                return Err(HyqError::Parse("wigner config: no parameter points".into()));
            }
            for p in points {
                lattice.params(p.delta, p.kappa)?;
            }
            if site.is_some_and(|s| s >= lattice.sites) {
                return Err(HyqError::Parse("wigner config: site out of range".into()));
            }
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default = "default_rabi_khz")]
    pub rabi_khz: f64,
    #[serde(default = "default_lamb_dicke")]
    pub lamb_dicke: f64,
    #[serde(default = "default_detuning_hz")]
    pub detuning_hz: f64,
}

fn default_rabi_khz() -> f64 {
    4.0
}
fn default_lamb_dicke() -> f64 {
    0.1
}
fn default_detuning_hz() -> f64 {
    50.0
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self { rabi_khz: default_rabi_khz(), lamb_dicke: default_lamb_dicke(), detuning_hz: default_detuning_hz() }
    }
}

impl DriveConfig {
    pub fn settings(&self) -> DriveSettings {
        let two_pi = 2.0 * std::f64::consts::PI;
        DriveSettings { rabi: two_pi * self.rabi_khz * 1e3, lamb_dicke: self.lamb_dicke, detuning: two_pi * self.detuning_hz }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    pub n_ions: usize,
    /// Trap frequencies `(f_x, f_y, f_z)` in MHz.
    pub freqs_mhz: [f64; 3],
    #[serde(default = "default_species")]
    pub species: String,
    /// Overrides the species mass.
    #[serde(default)]
    pub mass_u: Option<f64>,
    #[serde(default)]
    pub drive: DriveConfig,
    #[serde(default = "default_band")]
    pub band: Band,
    #[serde(default = "yes")]
    pub exclude_com: bool,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
}

fn default_species() -> String {
    "171Yb+".into()
}
fn default_band() -> Band {
    Band::RadialX
}
fn yes() -> bool {
    true
}
fn default_sizes() -> Vec<usize> {
    vec![1, 2, 3, 4]
}

impl TrapConfig {
    pub fn model(&self) -> Result<TrapModel> {
        let mass = match (self.mass_u, self.species.as_str()) {
            (Some(m), _) => m,
            (None, "171Yb+" | "Yb171" | "yb171") => YB171_MASS_U,
            (None, other) => return Err(HyqError::Parse(format!("trap config: unknown species {other:?}; give mass_u"))),
        };
        TrapModel::from_mhz(self.n_ions, self.freqs_mhz, mass)
    }
}

pub fn parse_trap_config(text: &str) -> Result<TrapConfig> {
    let c: TrapConfig = parse("trap", text)?;
    c.model()?;
    let d = c.drive;
    if !(d.rabi_khz > 0.0 && d.lamb_dicke > 0.0 && d.detuning_hz > 0.0) {
        return Err(HyqError::Parse("trap config: drive parameters must be positive".into()));
    }
    if c.sizes.iter().any(|&s| s == 0 || s > c.n_ions) {
        return Err(HyqError::Parse("trap config: subset sizes must lie in 1..=n_ions".into()));
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetConfig {
    #[serde(default)]
    pub scaling: TimeScaling,
    #[serde(default)]
    pub coherence_ms: Option<f64>,
}

pub fn parse_budget_table(text: &str) -> Result<GateBudgetTable> {
    GateBudgetTable::from_json(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{"M":4,"omega_c":1.0,"delta":0.5,"kappa":0.2,"eta":1.0,"cutoff":4,"dt":0.1,"steps":200,"initial":{"modes":[0,1,0,0],"qubits":"uuud"}}"#;

    #[test]
    fn model_config_round_trip() {
        let c = parse_model_config(MODEL).unwrap();
        assert_eq!(c.sites, 4);
        assert_eq!(c.method, EvolutionMethod::Trotter);
        let p = c.params().unwrap();
        assert!((p.omega_a - 0.5).abs() < 1e-15);
        let back = parse_model_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn model_config_rejects_bad_input() {
        assert!(parse_model_config(&MODEL.replace("\"eta\"", "\"etta\"")).is_err());
        assert!(parse_model_config(&MODEL.replace("uuud", "uuu")).is_err());
        assert!(parse_model_config(&MODEL.replace("0.1,", "-0.1,")).is_err());
        let e = parse_model_config("{\"M\":4,\n\"delta\":}").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn sweep_and_vqe_configs() {
        let s = r#"{"M":3,"eta":1,"cutoff":4,"delta":{"min":-4,"max":4,"step":4},"kappa":{"min":0,"max":0.5,"step":0.25},"mode":{"mode":"fixed","n_tot":1},"seed":3}"#;
        let c = parse_sweep_config(s).unwrap();
        assert_eq!(c.grid().unwrap().cells().len(), 9);
        assert_eq!(c.mode, SweepMode::Fixed { n_tot: 1 });
        assert_eq!(c.optimizer.max_layers, 10);
        let v = r#"{"M":3,"eta":1,"cutoff":4,"delta":3,"kappa":0.1,"mode":{"mode":"variable"},"optimizer":{"restarts":2}}"#;
        let c = parse_vqe_config(v).unwrap();
        assert_eq!(c.optimizer.restarts, 2);
        assert!(parse_vqe_config(&v.replace("restarts", "restart")).is_err());
    }

    #[test]
    fn wigner_and_trap_configs() {
        let w = r#"{"state":{"kind":"ground","M":3,"eta":1,"cutoff":4,"sector":3,"points":[{"kappa":0,"delta":-4}]},"grid":{"x_max":5,"p_max":5,"points":101}}"#;
        let c = parse_wigner_config(w).unwrap();
        assert_eq!(c.grid.points, 101);
        let f = parse_wigner_config(r#"{"state":{"kind":"fock","n":0,"cutoff":4}}"#).unwrap();
        assert_eq!(f.grid, PhaseGrid::default());
        assert!(parse_wigner_config(r#"{"state":{"kind":"fock","n":5,"cutoff":4}}"#).is_err());
        assert!(parse_wigner_config(r#"{"state":{"kind":"fock","n":0,"cutoff":1000000000}}"#).is_err());
        assert!(parse_wigner_config(r#"{"state":{"kind":"fock","n":0,"cutoff":4},"grid":{"x_max":5,"p_max":5,"points":1000001}}"#).is_err());

        let t = parse_trap_config(r#"{"n_ions":8,"freqs_mhz":[2.0,2.5,0.12]}"#).unwrap();
        assert_eq!(t.sizes, vec![1, 2, 3, 4]);
        assert!(t.model().is_ok());
        assert!(parse_trap_config(r#"{"n_ions":8,"freqs_mhz":[2.0,2.5,0.12],"species":"Xe"}"#).is_err());
        assert!(parse_trap_config(r#"{"n_ions":8,"freqs_mhz":[0.1,2.5,0.12]}"#).is_err());
    }
}
