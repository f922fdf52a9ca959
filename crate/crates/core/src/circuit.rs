//! Circuits over a hybrid register, observables, sampling and the two
//! readout protocols (ancilla homodyne and sideband phonon counting).

use std::collections::BTreeMap;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HyqError, Result};
use crate::gates::{diagonal_phases, gate, is_diagonal_kind, GateKind, GateParams};
use crate::hilbert::{
    apply_with, ladder_ops, pauli, quadrature_matrices, number_diag, HybridState, Operator,
    RegisterLayout, Subsystem, WireSpec, C64, ZERO,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateInstance {
    pub kind: GateKind,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub phi: f64,
    pub targets: Vec<usize>,
}

impl GateInstance {
    pub fn new(kind: GateKind, params: GateParams, targets: Vec<usize>) -> Self {
        let p = params.normalized_for(kind);
        Self { kind, theta: p.theta, phi: p.phi, targets }
    }

    pub fn params(&self) -> GateParams {
        GateParams { theta: self.theta, phi: self.phi }
    }

    pub(crate) fn cutoffs(&self, layout: &RegisterLayout) -> Vec<usize> {
        self.targets.iter().filter_map(|&t| layout.wires()[t].cutoff()).collect()
    }

    /// The gate's local unitary in target order.
    pub fn local_operator(&self, layout: &RegisterLayout) -> Result<Operator> {
        gate(self.kind, self.params(), &self.cutoffs(layout))
    }

    fn validate(&self, layout: &RegisterLayout) -> Result<()> {
        if !self.theta.is_finite() || !self.phi.is_finite() {
            return Err(HyqError::InvalidParameter(format!("{} has a non-finite parameter", self.kind)));
        }
        let kinds = self.kind.wire_kinds();
        if self.targets.len() != kinds.len() {
            return Err(HyqError::InvalidGate(format!(
                "{} takes {} target(s), got {}",
                self.kind,
                kinds.len(),
                self.targets.len()
            )));
        }
        layout.check_targets(&self.targets)?;
        for (&t, &want_qubit) in self.targets.iter().zip(&kinds) {
            if layout.wires()[t].is_qubit() != want_qubit {
                return Err(HyqError::WrongWireKind {
                    wire: t,
                    expected: if want_qubit { "qubit" } else { "qumode" },
                });
            }
        }
        Ok(())
    }
}

/// An ordered gate list over a fixed register, plus a global phase so that
/// circuits can reproduce `e^{-iHt}` exactly rather than up to phase.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    layout: RegisterLayout,
    gates: Vec<GateInstance>,
    global_phase: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CircuitFile {
    wires: Vec<WireSpec>,
    gates: Vec<GateInstance>,
    #[serde(default, skip_serializing_if = "is_zero")]
    global_phase: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Circuit {
    pub fn new(layout: RegisterLayout) -> Self {
        Self { layout, gates: Vec::new(), global_phase: 0.0 }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn gates(&self) -> &[GateInstance] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn global_phase(&self) -> f64 {
        self.global_phase
    }

    pub fn add_global_phase(&mut self, phase: f64) {
        self.global_phase += phase;
    }

    pub fn push(&mut self, kind: GateKind, params: GateParams, targets: &[usize]) -> Result<&mut Self> {
        let g = GateInstance::new(kind, params, targets.to_vec());
        g.validate(&self.layout)?;
        self.gates.push(g);
        Ok(self)
    }

    pub fn push_instance(&mut self, g: GateInstance) -> Result<()> {
        g.validate(&self.layout)?;
        self.gates.push(g);
        Ok(())
    }

    pub fn extend(&mut self, other: &Circuit) -> Result<()> {
        if other.layout != self.layout {
            return Err(HyqError::LayoutMismatch("cannot concatenate circuits on different registers".into()));
        }
        self.gates.extend_from_slice(&other.gates);
        self.global_phase += other.global_phase;
        Ok(())
    }

    pub fn count(&self, kind: GateKind) -> usize {
        self.gates.iter().filter(|g| g.kind == kind).count()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CircuitFile = serde_json::from_str(text)?;
        if !file.global_phase.is_finite() {
            return Err(HyqError::InvalidParameter("global_phase must be finite".into()));
        }
        let mut c = Circuit::new(RegisterLayout::new(file.wires)?);
        c.global_phase = file.global_phase;
        for g in file.gates {
            let g = GateInstance::new(g.kind, g.params(), g.targets);
            c.push_instance(g)?;
        }
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        let file = CircuitFile {
            wires: self.layout.wires().to_vec(),
            gates: self.gates.clone(),
            global_phase: self.global_phase,
        };
        serde_json::to_string_pretty(&file).expect("circuit serializes")
    }

    /// Precomputes every gate's local matrix and index tables.
    pub fn compile(&self) -> Result<CompiledCircuit> {
        let mut ops = Vec::with_capacity(self.gates.len());
        for g in &self.gates {
            let sub = Subsystem::new(&self.layout, &g.targets)?;
            ops.push((Local::new(g.kind, g.params(), &g.cutoffs(&self.layout))?, sub));
        }
        Ok(CompiledCircuit {
            layout: self.layout.clone(),
            ops,
            phase: C64::from_polar(1.0, self.global_phase),
        })
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        let mut out = state.clone();
        self.compile()?.apply_in_place(&mut out)?;
        Ok(out)
    }

    /// Full unitary, for oracles on small registers.
    pub fn unitary(&self) -> Result<Operator> {
        let dim = self.layout.dim();
        if dim > 4096 {
            return Err(HyqError::DimensionOverflow { dim, limit: 4096 });
        }
        let compiled = self.compile()?;
        let mut m = DMatrix::<C64>::zeros(dim, dim);
        for col in 0..dim {
            let mut amps = vec![ZERO; dim];
            amps[col] = C64::new(1.0, 0.0);
            compiled.apply_raw(&mut amps);
            for (r, a) in amps.into_iter().enumerate() {
                m[(r, col)] = a;
            }
        }
        Operator::new(self.layout.clone(), m)
    }
}

/// A gate's local action: a dense matrix or, for phase gates, a diagonal.
pub(crate) enum Local {
    Dense(DMatrix<C64>),
    Diagonal(Vec<C64>),
}

impl Local {
    pub(crate) fn new(kind: GateKind, params: GateParams, cutoffs: &[usize]) -> Result<Self> {
        Ok(if is_diagonal_kind(kind) {
            Local::Diagonal(diagonal_phases(kind, params, cutoffs)?)
        } else {
            Local::Dense(gate(kind, params, cutoffs)?.into_matrix())
        })
    }

    pub(crate) fn apply(&self, amps: &mut [C64], sub: &Subsystem) {
        match self {
            Local::Dense(m) => apply_with(amps, m, sub),
            Local::Diagonal(d) => {
                for &b in &sub.bases {
                    for (k, &o) in sub.offsets.iter().enumerate() {
                        amps[b + o] *= d[k];
                    }
                }
            }
        }
    }
}

/// A circuit with its gate matrices materialized, for repeated application.
pub struct CompiledCircuit {
    layout: RegisterLayout,
    ops: Vec<(Local, Subsystem)>,
    phase: C64,
}

impl CompiledCircuit {
    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    fn apply_raw(&self, amps: &mut [C64]) {
        for (local, sub) in &self.ops {
            local.apply(amps, sub);
        }
        if self.phase != C64::new(1.0, 0.0) {
            amps.iter_mut().for_each(|a| *a *= self.phase);
        }
    }

    pub fn apply_in_place(&self, state: &mut HybridState) -> Result<()> {
        if state.layout() != &self.layout {
            return Err(HyqError::LayoutMismatch("circuit and state registers differ".into()));
        }
        self.apply_raw(state.amplitudes_mut());
        let drift = (state.norm() - 1.0).abs();
        if drift > 1e-12 {
            debug!("renormalizing after circuit, norm drift {drift:.3e}");
            state.normalize();
        }
        Ok(())
    }
}

/// Hermitian single-wire factors of an observable term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Factor {
    #[serde(rename = "I")]
    Identity,
    #[serde(rename = "sx")]
    SigmaX,
    #[serde(rename = "sy")]
    SigmaY,
    #[serde(rename = "sz")]
    SigmaZ,
    #[serde(rename = "N")]
    Number,
    #[serde(rename = "X")]
    QuadX,
    #[serde(rename = "P")]
    QuadP,
}

impl Factor {
    fn matrix(self, wire: WireSpec, w: usize) -> Result<DMatrix<C64>> {
        use Factor::*;
        match (self, wire) {
            (Identity, _) => Ok(DMatrix::identity(wire.dim(), wire.dim())),
            (SigmaX, WireSpec::Qubit) => Ok(pauli::x()),
            (SigmaY, WireSpec::Qubit) => Ok(pauli::y()),
            (SigmaZ, WireSpec::Qubit) => Ok(pauli::z()),
            // qubit excitation number (|up><up|)
            (Number, WireSpec::Qubit) => Ok((pauli::identity() + pauli::z()) * C64::new(0.5, 0.0)),
            (Number, WireSpec::Qumode { cutoff }) => Ok(number_diag(cutoff)),
            (QuadX, WireSpec::Qumode { cutoff }) => Ok(quadrature_matrices(cutoff).0),
            (QuadP, WireSpec::Qumode { cutoff }) => Ok(quadrature_matrices(cutoff).1),
            (SigmaX | SigmaY | SigmaZ, _) => Err(HyqError::WrongWireKind { wire: w, expected: "qubit" }),
            (QuadX | QuadP, _) => Err(HyqError::WrongWireKind { wire: w, expected: "qumode" }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WireFactor {
    pub op: Factor,
    pub wire: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub factors: Vec<WireFactor>,
}

/// A real-weighted sum of products of single-wire Hermitian factors.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableSpec {
    pub terms: Vec<Term>,
}

impl ObservableSpec {
    pub fn single(op: Factor, wire: usize) -> Self {
        Self { terms: vec![Term { coeff: 1.0, factors: vec![WireFactor { op, wire }] }] }
    }

    pub fn product(coeff: f64, factors: &[(Factor, usize)]) -> Self {
        Self {
            terms: vec![Term {
                coeff,
                factors: factors.iter().map(|&(op, wire)| WireFactor { op, wire }).collect(),
            }],
        }
    }

    pub fn plus(mut self, other: ObservableSpec) -> Self {
        self.terms.extend(other.terms);
        self
    }

    /// Fails when a term repeats a wire or has a non-finite weight; either
    /// would break Hermiticity of the product form.
    pub fn validate(&self, layout: &RegisterLayout) -> Result<()> {
        for t in &self.terms {
            if !t.coeff.is_finite() {
                return Err(HyqError::NotHermitian(f64::NAN));
            }
            let wires: Vec<usize> = t.factors.iter().map(|f| f.wire).collect();
            if !wires.is_empty() {
                layout.check_targets(&wires)?;
            }
            for f in &t.factors {
                f.op.matrix(layout.wire(f.wire)?, f.wire)?;
            }
        }
        Ok(())
    }

    /// Dense matrix, for oracles.
    pub fn to_operator(&self, layout: &RegisterLayout) -> Result<Operator> {
        self.validate(layout)?;
        let mut total = Operator::zeros(layout);
        for t in &self.terms {
            let factors = t
                .factors
                .iter()
                .map(|f| Ok((f.wire, f.op.matrix(layout.wires()[f.wire], f.wire)?)))
                .collect::<Result<Vec<_>>>()?;
            let op = if factors.is_empty() {
                Operator::identity(layout)
            } else {
                crate::hilbert::embed_product(&factors, layout)?
            };
            total.add_scaled_assign(&op, C64::new(t.coeff, 0.0))?;
        }
        Ok(total)
    }
}

/// `<psi|O|psi>` computed factor by factor on a copy of the state.
pub fn expectation(state: &HybridState, obs: &ObservableSpec) -> Result<f64> {
    let layout = state.layout();
    obs.validate(layout)?;
    let mut total = C64::new(0.0, 0.0);
    for t in &obs.terms {
        let mut phi = state.clone();
        for f in &t.factors {
            let m = f.op.matrix(layout.wires()[f.wire], f.wire)?;
            phi.apply_local(&m, &[f.wire])?;
        }
        total += state.inner(&phi)? * t.coeff;
    }
    let scale = obs.terms.iter().map(|t| t.coeff.abs()).sum::<f64>().max(1.0);
    if total.im.abs() > 1e-10 * scale {
        return Err(HyqError::NotHermitian(total.im));
    }
    Ok(total.re)
}

/// Projective measurement of `wires` in the computational/Fock basis.
/// Outcomes are keyed by the per-wire values.
pub fn sample(state: &HybridState, wires: &[usize], shots: usize, seed: u64) -> Result<BTreeMap<Vec<usize>, usize>> {
    if shots == 0 {
        return Err(HyqError::InvalidParameter("shots must be at least 1".into()));
    }
    let layout = state.layout();
    let probs = state.marginal(wires)?;
    let sub = layout.sub_layout(wires)?;
    let dist = WeightedIndex::new(&probs).map_err(|e| HyqError::InvalidParameter(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = BTreeMap::new();
    for _ in 0..shots {
        let k = dist.sample(&mut rng);
        *counts.entry(sub.digits(k)).or_insert(0) += 1;
    }
    Ok(counts)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// Zero-pads a state after raising one qumode's cutoff.
pub fn lift_cutoff(state: &HybridState, wire: usize, cutoff: usize) -> Result<HybridState> {
    let layout = state.layout();
    let old = layout.wire(wire)?.cutoff().ok_or(HyqError::WrongWireKind { wire, expected: "qumode" })?;
    if cutoff < old {
        return Err(HyqError::InvalidCutoff(cutoff));
    }
    let mut wires = layout.wires().to_vec();
    wires[wire] = WireSpec::qumode(cutoff)?;
    let lifted = RegisterLayout::new(wires)?;
    let mut amps = vec![ZERO; lifted.dim()];
    for (i, &a) in state.amplitudes().iter().enumerate() {
        if a != ZERO {
            amps[lifted.index(&layout.digits(i))?] = a;
        }
    }
    HybridState::from_amplitudes(&lifted, amps)
}

/// Population in the top `levels` Fock levels of `wire`.
pub fn edge_population(state: &HybridState, wire: usize, levels: usize) -> Result<f64> {
    let p = state.marginal(&[wire])?;
    Ok(p.iter().rev().take(levels.min(p.len())).sum())
}

/// Quadrature readout with one ancilla qumode: the ancilla is displaced by
/// `1/sqrt 2`, rotated by 0 (X) or pi/2 (P), mixed with the target on a 50-50
/// beam splitter, and the photon-number difference is returned.
///
/// The target and ancilla are both carried at cutoff `L_target + L_ancilla`
/// so the beam splitter acts without truncation error on every product
/// state of the original spaces.
pub fn homodyne_via_circuit(
    state: &HybridState,
    mode: usize,
    quadrature: Quadrature,
    ancilla_cutoff: Option<usize>,
) -> Result<f64> {
    let layout = state.layout();
    let target_cutoff = layout.wire(mode)?.cutoff().ok_or(HyqError::WrongWireKind { wire: mode, expected: "qumode" })?;
    let edge = edge_population(state, mode, 2)?;
    if edge > 1e-6 {
        warn!("homodyne target has population {edge:.2e} within 2 levels of its cutoff");
    }
    let work = target_cutoff + ancilla_cutoff.unwrap_or(target_cutoff);
    let lifted = lift_cutoff(state, mode, work)?;
    let anc_layout = RegisterLayout::new(vec![WireSpec::qumode(work)?])?;
    let joint = lifted.tensor(&HybridState::vacuum(&anc_layout))?;
    let anc = joint.layout().len() - 1;

    let mut c = Circuit::new(joint.layout().clone());
    c.push(GateKind::Displacement, GateParams::polar(std::f64::consts::FRAC_1_SQRT_2, 0.0), &[anc])?;
    let rot = match quadrature {
        Quadrature::X => 0.0,
        Quadrature::P => std::f64::consts::FRAC_PI_2,
    };
    c.push(GateKind::ModeRotation, GateParams::angle(rot), &[anc])?;
    c.push(GateKind::BeamSplitter, GateParams::polar(std::f64::consts::FRAC_PI_4, 0.0), &[mode, anc])?;
    let out = c.apply(&joint)?;

    let diff = ObservableSpec::single(Factor::Number, mode)
        .plus(ObservableSpec::product(-1.0, &[(Factor::Number, anc)]));
    expectation(&out, &diff)
}

/// `P_down(t) = (1 + sum_n P_n cos(2 Omega eta sqrt(n+1) t)) / 2`.
pub fn sideband_signal(p_n: &[f64], omega: f64, eta: f64, times: &[f64]) -> Result<Vec<f64>> {
    check_distribution(p_n)?;
    Ok(times
        .iter()
        .map(|&t| {
            let s: f64 = p_n
                .iter()
                .enumerate()
                .map(|(n, &p)| p * (sideband_frequency(n, omega, eta) * t).cos())
                .sum();
            0.5 * (1.0 + s)
        })
        .collect())
}

/// Angular frequency of the `n` term, `2 Omega eta sqrt(n+1)`.
pub fn sideband_frequency(n: usize, omega: f64, eta: f64) -> f64 {
    2.0 * omega * eta * ((n + 1) as f64).sqrt()
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() || p.iter().any(|x| !x.is_finite() || *x < -1e-12) {
        return Err(HyqError::InvalidParameter("distribution entries must be finite and non-negative".into()));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(HyqError::NotNormalized(s - 1.0));
    }
    Ok(())
}

/// Least-squares fit of `2 P_down - 1` onto the known cosine set for
/// `n = 0..=n_max`.
pub fn recover_fock_distribution(signal: &[f64], times: &[f64], omega: f64, eta: f64, n_max: usize) -> Result<Vec<f64>> {
    if signal.len() != times.len() {
        return Err(HyqError::DimensionMismatch { expected: times.len(), found: signal.len() });
    }
    if times.len() < n_max + 1 {
        return Err(HyqError::InvalidParameter("fewer samples than unknowns".into()));
    }
    let a = DMatrix::from_fn(times.len(), n_max + 1, |r, n| (sideband_frequency(n, omega, eta) * times[r]).cos());
    let b = DVector::from_iterator(signal.len(), signal.iter().map(|s| 2.0 * s - 1.0));
    let x = a
        .svd(true, true)
        .solve(&b, 1e-12)
        .map_err(|e| HyqError::NonConvergence(e.to_string()))?;
    Ok(x.iter().copied().collect())
}

/// `<a>` on one qumode; used to cross-check the quadrature readout.
pub fn mean_annihilation(state: &HybridState, mode: usize) -> Result<C64> {
    let layout = state.layout();
    let cutoff = layout.wire(mode)?.cutoff().ok_or(HyqError::WrongWireKind { wire: mode, expected: "qumode" })?;
    let a = ladder_ops(cutoff)?.a;
    let full = crate::hilbert::embed(&a, &[mode], layout)?;
    full.expectation_complex(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use std::f64::consts::PI;

    fn hybrid(cutoff: usize) -> RegisterLayout {
        RegisterLayout::new(vec![WireSpec::Qubit, WireSpec::Qumode { cutoff }]).unwrap()
    }

    fn random_state(layout: &RegisterLayout, rng: &mut ChaCha8Rng) -> HybridState {
        let amps = (0..layout.dim())
            .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        HybridState::from_amplitudes(layout, amps).unwrap()
    }

    #[test]
    fn empty_circuit_is_identity() {
        let l = hybrid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = random_state(&l, &mut rng);
        assert_eq!(Circuit::new(l).apply(&psi).unwrap(), psi);
    }

    #[test]
    fn pauli_x_flips_down_to_up() {
        let l = RegisterLayout::qubits(1).unwrap();
        let mut c = Circuit::new(l.clone());
        c.push(GateKind::PauliX, GateParams::none(), &[0]).unwrap();
        let out = c.apply(&HybridState::basis(&l, &[1]).unwrap()).unwrap();
        assert_abs_diff_eq!(out.amplitudes()[0].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn disjoint_gates_commute() {
        let l = RegisterLayout::new(vec![WireSpec::Qubit, WireSpec::Qumode { cutoff: 3 }, WireSpec::Qumode { cutoff: 2 }]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let psi = random_state(&l, &mut rng);
        let mut ab = Circuit::new(l.clone());
        ab.push(GateKind::Ry, GateParams::angle(0.4), &[0]).unwrap();
        ab.push(GateKind::Squeeze, GateParams::polar(0.3, 1.1), &[2]).unwrap();
        let mut ba = Circuit::new(l.clone());
        ba.push(GateKind::Squeeze, GateParams::polar(0.3, 1.1), &[2]).unwrap();
        ba.push(GateKind::Ry, GateParams::angle(0.4), &[0]).unwrap();
        let x = ab.apply(&psi).unwrap();
        let y = ba.apply(&psi).unwrap();
        let d: f64 = x.amplitudes().iter().zip(y.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn local_application_matches_full_matrix() {
        let l = RegisterLayout::new(vec![WireSpec::Qumode { cutoff: 2 }, WireSpec::Qubit, WireSpec::Qumode { cutoff: 3 }]).unwrap();
        let mut c = Circuit::new(l.clone());
        c.push(GateKind::CtrlBeamSplitter, GateParams::polar(0.7, 0.2), &[1, 2, 0]).unwrap();
        c.push(GateKind::Rsb, GateParams::polar(0.5, 2.0), &[1, 0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_state(&l, &mut rng);
        let via_local = c.apply(&psi).unwrap();
        // oracle: embed each local unitary as a full matrix
        let mut full = Operator::identity(&l);
        for g in c.gates() {
            let u = crate::hilbert::embed(&g.local_operator(&l).unwrap(), &g.targets, &l).unwrap();
            full = u.mul(&full).unwrap();
        }
        let via_full = full.apply(&psi).unwrap();
        let d: f64 = via_local.amplitudes().iter().zip(via_full.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(d < 1e-12);
    }

    #[test]
    fn wire_kind_and_arity_checked() {
        let mut c = Circuit::new(hybrid(2));
        assert!(matches!(c.push(GateKind::Rx, GateParams::angle(1.0), &[1]), Err(HyqError::WrongWireKind { .. })));
        assert!(c.push(GateKind::Rsb, GateParams::angle(1.0), &[1, 0]).is_err());
        assert!(c.push(GateKind::Rsb, GateParams::angle(1.0), &[0]).is_err());
        assert!(c.push(GateKind::Rsb, GateParams::angle(1.0), &[0, 5]).is_err());
        assert!(c.push(GateKind::Rsb, GateParams::angle(1.0), &[0, 1]).is_ok());
    }

    #[test]
    fn json_round_trip_normalizes_phase() {
        let text = r#"{"wires":[{"kind":"qumode","cutoff":2},{"kind":"qumode","cutoff":2}],
                       "gates":[{"kind":"BS","theta":0.1,"phi":7.853981633974483,"targets":[0,1]}]}"#;
        let c = Circuit::from_json(text).unwrap();
        assert_abs_diff_eq!(c.gates()[0].phi, PI / 2.0, epsilon = 1e-12);
        let back = Circuit::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        assert!(Circuit::from_json(r#"{"wires":[],"gates":[]}"#).is_err());
        assert!(Circuit::from_json(r#"{"wires":[{"kind":"qubit"}],"gates":[],"extra":1}"#).is_err());
    }

    #[test]
    fn basic_expectations() {
        let l = hybrid(4);
        let up_two = HybridState::basis(&l, &[0, 2]).unwrap();
        assert_abs_diff_eq!(expectation(&up_two, &ObservableSpec::single(Factor::SigmaZ, 0)).unwrap(), 1.0);
        assert_abs_diff_eq!(expectation(&up_two, &ObservableSpec::single(Factor::Number, 1)).unwrap(), 2.0, epsilon = 1e-14);
        let bad = ObservableSpec::product(1.0, &[(Factor::SigmaX, 0), (Factor::SigmaZ, 0)]);
        assert!(expectation(&up_two, &bad).is_err());
        assert!(expectation(&up_two, &ObservableSpec::single(Factor::QuadX, 0)).is_err());
    }

    #[test]
    fn hybrid_product_expectation() {
        let cutoff = 10;
        let l = hybrid(cutoff);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = vec![C64::new(s, 0.0), C64::new(s, 0.0)];
        let d = gate(GateKind::Displacement, GateParams::polar(0.3, 0.0), &[cutoff]).unwrap();
        let mut vac = vec![ZERO; cutoff + 1];
        vac[0] = C64::new(1.0, 0.0);
        let coh: Vec<C64> = (d.matrix() * DVector::from_vec(vac)).iter().copied().collect();
        let psi = HybridState::product(&l, &[plus, coh]).unwrap();
        let v = expectation(&psi, &ObservableSpec::product(1.0, &[(Factor::SigmaX, 0), (Factor::QuadX, 1)])).unwrap();
        assert_abs_diff_eq!(v, 2f64.sqrt() * 0.3, epsilon = 1e-6);
        // operator route agrees
        let op = ObservableSpec::product(1.0, &[(Factor::SigmaX, 0), (Factor::QuadX, 1)]).to_operator(&l).unwrap();
        assert_abs_diff_eq!(op.expectation_complex(&psi).unwrap().re, v, epsilon = 1e-12);
    }

    #[test]
    fn sampling() {
        let l = hybrid(2);
        let up = HybridState::basis(&l, &[0, 0]).unwrap();
        let c = sample(&up, &[0], 1000, 5).unwrap();
        assert_eq!(c.get(&vec![0]), Some(&1000));
        let b = HybridState::basis(&l, &[1, 2]).unwrap();
        let c = sample(&b, &[0, 1], 10, 5).unwrap();
        assert_eq!(c.get(&vec![1, 2]), Some(&10));

        let ml = RegisterLayout::new(vec![WireSpec::Qumode { cutoff: 3 }]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let sup = HybridState::from_amplitudes(&ml, vec![C64::new(s, 0.0), C64::new(s, 0.0), ZERO, ZERO]).unwrap();
        let shots = 4000;
        let c = sample(&sup, &[0], shots, 11).unwrap();
        let k = *c.get(&vec![0]).unwrap_or(&0) as f64;
        let sigma = (shots as f64 * 0.25).sqrt();
        assert!((k - shots as f64 / 2.0).abs() < 5.0 * sigma);
        assert_eq!(sample(&sup, &[0], shots, 11).unwrap(), c);
        assert!(sample(&sup, &[0], 0, 1).is_err());
        assert!(sample(&sup, &[3], 1, 1).is_err());
    }

    #[test]
    fn chi_square_against_marginals() {
        let l = hybrid(3);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let psi = random_state(&l, &mut rng);
        let shots = 20_000;
        let probs = psi.marginal(&[1]).unwrap();
        let counts = sample(&psi, &[1], shots, 2024).unwrap();
        let chi2: f64 = probs
            .iter()
            .enumerate()
            .map(|(n, p)| {
                let e = p * shots as f64;
                let o = *counts.get(&vec![n]).unwrap_or(&0) as f64;
                (o - e).powi(2) / e
            })
            .sum();
        // 3 degrees of freedom; 99.9% quantile is 16.27
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn homodyne_vacuum_and_coherent() {
        let cutoff = 12;
        let l = RegisterLayout::new(vec![WireSpec::Qumode { cutoff }]).unwrap();
        let vac = HybridState::vacuum(&l);
        assert_abs_diff_eq!(homodyne_via_circuit(&vac, 0, Quadrature::X, None).unwrap(), 0.0, epsilon = 1e-8);
        let mut c = Circuit::new(l.clone());
        c.push(GateKind::Displacement, GateParams::polar(0.4, 0.0), &[0]).unwrap();
        let coh = c.apply(&vac).unwrap();
        let x = homodyne_via_circuit(&coh, 0, Quadrature::X, None).unwrap();
        assert_abs_diff_eq!(x, 2f64.sqrt() * 0.4, epsilon = 1e-4);
        let p = homodyne_via_circuit(&coh, 0, Quadrature::P, None).unwrap();
        assert_abs_diff_eq!(p, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn homodyne_matches_direct_and_mean_field() {
        let cutoff = 8;
        let l = RegisterLayout::new(vec![WireSpec::Qubit, WireSpec::Qumode { cutoff }]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..5 {
            let amps = (0..l.dim())
                .map(|i| {
                    if l.digit(i, 1) <= cutoff / 2 {
                        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    } else {
                        ZERO
                    }
                })
                .collect();
            let psi = HybridState::from_amplitudes(&l, amps).unwrap();
            let hx = homodyne_via_circuit(&psi, 1, Quadrature::X, None).unwrap();
            let hp = homodyne_via_circuit(&psi, 1, Quadrature::P, None).unwrap();
            let dx = expectation(&psi, &ObservableSpec::single(Factor::QuadX, 1)).unwrap();
            let dp = expectation(&psi, &ObservableSpec::single(Factor::QuadP, 1)).unwrap();
            assert_abs_diff_eq!(hx, dx, epsilon = 1e-6);
            assert_abs_diff_eq!(hp, dp, epsilon = 1e-6);
            let a = mean_annihilation(&psi, 1).unwrap() * 2f64.sqrt();
            assert_abs_diff_eq!((C64::new(hx, hp) - a).norm(), 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn sideband_single_term_and_frequency() {
        let (omega, eta) = (2.0 * PI * 50e3, 0.1);
        let times: Vec<f64> = (0..50).map(|k| k as f64 * 1e-6).collect();
        let s = sideband_signal(&[1.0], omega, eta, &times).unwrap();
        for (t, v) in times.iter().zip(&s) {
            assert_abs_diff_eq!(*v, 0.5 * (1.0 + (2.0 * omega * eta * t).cos()), epsilon = 1e-15);
        }
        assert_abs_diff_eq!(sideband_frequency(3, omega, eta), 4.0 * omega * eta, epsilon = 1e-9);
        assert!(sideband_signal(&[0.5, 0.4], omega, eta, &times).is_err());
    }

    #[test]
    fn sideband_recovery() {
        let (omega, eta) = (1.0, 0.1);
        // beat between n=0 and n=1
        let beat = sideband_frequency(1, omega, eta) - sideband_frequency(0, omega, eta);
        let span = 10.0 * 2.0 * PI / beat;
        let times: Vec<f64> = (0..512).map(|k| span * k as f64 / 511.0).collect();
        let p = [0.5, 0.5];
        let s = sideband_signal(&p, omega, eta, &times).unwrap();
        let est = recover_fock_distribution(&s, &times, omega, eta, 1).unwrap();
        let err: f64 = est.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-6, "{err}");

        let p = [0.4, 0.3, 0.2, 0.1];
        let s = sideband_signal(&p, omega, eta, &times).unwrap();
        let est = recover_fock_distribution(&s, &times, omega, eta, 5).unwrap();
        let err: f64 = est.iter().zip(p.iter().chain([0.0, 0.0].iter())).map(|(a, b)| (a - b).abs()).sum();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn number_conserving_circuit_preserves_total() {
        let l = RegisterLayout::new(vec![WireSpec::Qumode { cutoff: 3 }, WireSpec::Qumode { cutoff: 3 }, WireSpec::Qubit, WireSpec::Qubit]).unwrap();
        let mut c = Circuit::new(l.clone());
        c.push(GateKind::BeamSplitter, GateParams::polar(0.7, 0.3), &[0, 1]).unwrap();
        c.push(GateKind::Rsb, GateParams::polar(1.1, 2.0), &[2, 0]).unwrap();
        c.push(GateKind::Rsb, GateParams::polar(0.4, 0.1), &[3, 1]).unwrap();
        c.push(GateKind::CrossKerr, GateParams::angle(0.2), &[0, 1]).unwrap();
        c.push(GateKind::Rz, GateParams::angle(0.9), &[3]).unwrap();
        let n_tot = (0..4).fold(ObservableSpec::default(), |acc, w| acc.plus(ObservableSpec::single(Factor::Number, w)));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random_state(&l, &mut rng);
        let before = expectation(&psi, &n_tot).unwrap();
        let after = expectation(&c.apply(&psi).unwrap(), &n_tot).unwrap();
        assert_abs_diff_eq!(before, after, epsilon = 1e-9);
    }
}
