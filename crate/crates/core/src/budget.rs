//! Wall-clock and fidelity budgets of a circuit from a per-gate table.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::error::{HyqError, Result};
use crate::gates::{GateKind, ParamShape};
use crate::trap::QUMODE_COHERENCE_S;

const DEFAULT_TABLE: &str = include_str!("../data/gate_table_v1.json");

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateCostEntry {
    pub gate: GateKind,
    pub time_us: f64,
    pub fidelity: f64,
    #[serde(default)]
    pub estimated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementCost {
    pub name: String,
    pub time_us: f64,
    pub fidelity: f64,
    #[serde(default)]
    pub estimated: bool,
}

/// Parameter values at which the tabulated times hold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reference {
    pub angle: f64,
    pub modulus: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateBudgetTable {
    pub version: u32,
    #[serde(default)]
    pub platform: String,
    pub reference: Reference,
    pub gates: Vec<GateCostEntry>,
    #[serde(default)]
    pub measurements: Vec<MeasurementCost>,
}

impl GateBudgetTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(text).map_err(|e| HyqError::Parse(format!("gate table: {e}")))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != 1 {
            return Err(HyqError::Parse(format!("unsupported gate table version {}", self.version)));
        }
        if !(self.reference.angle > 0.0 && self.reference.modulus > 0.0) {
            return Err(HyqError::Parse("reference angle and modulus must be positive".into()));
        }
        let mut seen = BTreeMap::new();
        for e in &self.gates {
            check_cost(e.gate.short_name(), e.time_us, e.fidelity)?;
            if seen.insert(e.gate.short_name(), ()).is_some() {
                return Err(HyqError::Parse(format!("gate {} listed twice", e.gate)));
            }
        }
        for m in &self.measurements {
            check_cost(&m.name, m.time_us, m.fidelity)?;
        }
        Ok(())
    }

    pub fn entry(&self, kind: GateKind) -> Option<&GateCostEntry> {
        self.gates.iter().find(|e| e.gate == kind)
    }
}

fn check_cost(name: &str, time_us: f64, fidelity: f64) -> Result<()> {
    if !(time_us.is_finite() && time_us > 0.0) {
        return Err(HyqError::Parse(format!("{name}: time must be positive")));
    }
    if !(fidelity > 0.0 && fidelity <= 1.0) {
        return Err(HyqError::Parse(format!("{name}: fidelity must lie in (0, 1]")));
    }
    Ok(())
}

impl Default for GateBudgetTable {
    fn default() -> Self {
        Self::from_json(DEFAULT_TABLE).expect("bundled gate table is valid")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScaling {
    /// Every gate costs its tabulated time.
    #[default]
    Fixed,
    /// Parametrized gates scale with `|theta| / angle` or `|z| / modulus`.
    LinearInAngle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptions {
    pub scaling: TimeScaling,
    /// Limit checked for circuits that touch a qumode; `None` uses 5 ms.
    pub coherence_s: Option<f64>,
}

impl Default for BudgetOptions {
    fn default() -> Self {
        Self { scaling: TimeScaling::Fixed, coherence_s: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateCost {
    pub index: usize,
    pub gate: GateKind,
    pub targets: Vec<usize>,
    pub time_s: f64,
    pub fidelity: f64,
    pub start_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub serial_time_s: f64,
    /// Critical path with gates on disjoint wires run concurrently.
    pub parallel_time_s: f64,
    pub fidelity: f64,
    pub touches_qumodes: bool,
    pub coherence_limit_s: Option<f64>,
    pub exceeds_coherence: bool,
    pub gates: Vec<GateCost>,
    pub counts: BTreeMap<String, usize>,
}

impl BudgetReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn circuit_budget(circuit: &Circuit, table: &GateBudgetTable, opts: &BudgetOptions) -> Result<BudgetReport> {
    let mut wire_free = vec![0.0f64; circuit.layout().len()];
    let mut serial = 0.0;
    let mut fidelity = 1.0;
    let mut gates = Vec::with_capacity(circuit.len());
    let mut counts = BTreeMap::new();
    let mut touches_qumodes = false;
    for (index, g) in circuit.gates().iter().enumerate() {
        let entry = table
            .entry(g.kind)
            .ok_or_else(|| HyqError::UnknownGate(format!("{} has no entry in the gate table", g.kind)))?;
        let base = entry.time_us * 1e-6;
        let time_s = match (opts.scaling, g.kind.param_shape()) {
            (TimeScaling::Fixed, _) | (_, ParamShape::None) => base,
            (TimeScaling::LinearInAngle, ParamShape::Angle) => base * g.theta.abs() / table.reference.angle,
            (TimeScaling::LinearInAngle, ParamShape::Complex) => base * g.theta.abs() / table.reference.modulus,
        };
        let start_s = g.targets.iter().map(|&w| wire_free[w]).fold(0.0, f64::max);
        for &w in &g.targets {
            wire_free[w] = start_s + time_s;
        }
        serial += time_s;
        fidelity *= entry.fidelity;
        touches_qumodes |= g.kind.touches_qumodes();
        *counts.entry(g.kind.short_name().to_string()).or_insert(0) += 1;
        gates.push(GateCost { index, gate: g.kind, targets: g.targets.clone(), time_s, fidelity: entry.fidelity, start_s });
    }
    let parallel = wire_free.iter().copied().fold(0.0, f64::max);
    let coherence_limit_s = touches_qumodes.then(|| opts.coherence_s.unwrap_or(QUMODE_COHERENCE_S));
    let exceeds_coherence = coherence_limit_s.is_some_and(|l| serial > l);
    Ok(BudgetReport {
        serial_time_s: serial,
        parallel_time_s: parallel,
        fidelity,
        touches_qumodes,
        coherence_limit_s,
        exceeds_coherence,
        gates,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gates::GateParams;
    use crate::hilbert::{RegisterLayout, WireSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn two_modes() -> RegisterLayout {
        RegisterLayout::new(vec![WireSpec::qumode(2).unwrap(), WireSpec::qumode(2).unwrap(), WireSpec::Qubit]).unwrap()
    }

    #[test]
    fn bundled_table_covers_every_gate() {
        let t = GateBudgetTable::default();
        for k in GateKind::ALL {
            assert!(t.entry(k).is_some(), "{k}");
        }
        assert_eq!(t.measurements.len(), 5);
    }

    #[test]
    fn single_beam_splitter() {
        let mut c = Circuit::new(two_modes());
        c.push(GateKind::BeamSplitter, GateParams::polar(FRAC_PI_2, 0.0), &[0, 1]).unwrap();
        let r = circuit_budget(&c, &GateBudgetTable::default(), &BudgetOptions::default()).unwrap();
        assert_relative_eq!(r.serial_time_s, 250e-6, max_relative = 1e-12);
        assert_relative_eq!(r.fidelity, 0.99, max_relative = 1e-12);
        assert!(r.touches_qumodes && !r.exceeds_coherence);
    }

    #[test]
    fn empty_circuit() {
        let r = circuit_budget(&Circuit::new(two_modes()), &GateBudgetTable::default(), &BudgetOptions::default()).unwrap();
        assert_eq!((r.serial_time_s, r.fidelity, r.parallel_time_s), (0.0, 1.0, 0.0));
        assert_eq!(r.coherence_limit_s, None);
    }

    #[test]
    fn parallel_path_and_monotonicity() {
        let t = GateBudgetTable::default();
        let mut c = Circuit::new(two_modes());
        c.push(GateKind::ModeRotation, GateParams::angle(0.3), &[0]).unwrap();
        c.push(GateKind::Rz, GateParams::angle(0.3), &[2]).unwrap();
        let r1 = circuit_budget(&c, &t, &BudgetOptions::default()).unwrap();
        assert_relative_eq!(r1.parallel_time_s, 200e-6, max_relative = 1e-12);
        assert_relative_eq!(r1.serial_time_s, 202e-6, max_relative = 1e-12);
        c.push(GateKind::Rsb, GateParams::polar(0.5, 0.0), &[2, 1]).unwrap();
        let r2 = circuit_budget(&c, &t, &BudgetOptions::default()).unwrap();
        assert!(r2.serial_time_s > r1.serial_time_s && r2.fidelity <= r1.fidelity);
        assert_relative_eq!(r2.parallel_time_s, 202e-6, max_relative = 1e-12);
        assert_relative_eq!(r2.gates[2].start_s, 2e-6, max_relative = 1e-12);
    }

    #[test]
    fn linear_scaling_option() {
        let mut c = Circuit::new(two_modes());
        c.push(GateKind::Rz, GateParams::angle(-FRAC_PI_2 / 2.0), &[2]).unwrap();
        c.push(GateKind::Displacement, GateParams::polar(2.0, 0.1), &[0]).unwrap();
        c.push(GateKind::PauliX, GateParams::none(), &[2]).unwrap();
        let opts = BudgetOptions { scaling: TimeScaling::LinearInAngle, coherence_s: Some(1e-5) };
        let r = circuit_budget(&c, &GateBudgetTable::default(), &opts).unwrap();
        assert_relative_eq!(r.gates[0].time_s, 1e-6, max_relative = 1e-12);
        assert_relative_eq!(r.gates[1].time_s, 20e-6, max_relative = 1e-12);
        assert_relative_eq!(r.gates[2].time_s, 2e-6, max_relative = 1e-12);
        assert!(r.exceeds_coherence);
    }

    #[test]
    fn table_validation() {
        let base = GateBudgetTable::default();
        let mut bad = base.clone();
        bad.gates[0].fidelity = 1.5;
        assert!(bad.validate().is_err());
        let mut dup = base.clone();
        dup.gates.push(dup.gates[0]);
        assert!(dup.validate().is_err());
        let mut missing = base;
        missing.gates.retain(|e| e.gate != GateKind::Kerr);
        let mut c = Circuit::new(two_modes());
        c.push(GateKind::Kerr, GateParams::angle(0.1), &[0]).unwrap();
        assert!(matches!(circuit_budget(&c, &missing, &BudgetOptions::default()), Err(HyqError::UnknownGate(_))));
        assert!(GateBudgetTable::from_json("{\"version\":1}").is_err());
    }
}
