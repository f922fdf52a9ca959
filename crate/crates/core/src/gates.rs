//! The logical gate set: qubit, qumode and hybrid gates as unitaries on
//! truncated local spaces.
//!
//! Parametrized bosonic gates use `z = theta * e^{i phi}` with `theta >= 0`
//! and `phi` in `[0, 2 pi)`. Rotations follow the `e^{+i theta sigma / 2}`
//! sign. CNOT is `exp(i pi/4 (I - sigma_z)(I - sigma_x))`, so its control is
//! active on `|down>`, the `-1` eigenstate of `sigma_z`.
//!
//! Every non-diagonal gate is the exponential of its *truncated* generator,
//! which keeps it exactly unitary on the truncated space.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{HyqError, Result};
use crate::hilbert::{
    annihilation, expm_antihermitian, number_diag, pauli, Operator, RegisterLayout, WireSpec, C64,
    I, ONE, ZERO,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GateKind {
    #[serde(rename = "X")]
    PauliX,
    #[serde(rename = "Y")]
    PauliY,
    #[serde(rename = "Z")]
    PauliZ,
    #[serde(rename = "RX")]
    Rx,
    #[serde(rename = "RY")]
    Ry,
    #[serde(rename = "RZ")]
    Rz,
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "R")]
    ModeRotation,
    #[serde(rename = "D")]
    Displacement,
    #[serde(rename = "S")]
    Squeeze,
    #[serde(rename = "BS")]
    BeamSplitter,
    #[serde(rename = "K")]
    Kerr,
    #[serde(rename = "CK")]
    CrossKerr,
    #[serde(rename = "RSB")]
    Rsb,
    #[serde(rename = "BSB")]
    Bsb,
    #[serde(rename = "CR")]
    CtrlRotation,
    #[serde(rename = "CD")]
    CtrlDisplacement,
    #[serde(rename = "CS")]
    CtrlSqueeze,
    #[serde(rename = "CBS")]
    CtrlBeamSplitter,
}

/// What a gate's parameters look like.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamShape {
    None,
    /// A real angle; any `phi` is ignored.
    Angle,
    /// A complex `z = theta e^{i phi}`.
    Complex,
}

impl GateKind {
    pub const ALL: [GateKind; 19] = [
        GateKind::PauliX,
        GateKind::PauliY,
        GateKind::PauliZ,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::Cnot,
        GateKind::ModeRotation,
        GateKind::Displacement,
        GateKind::Squeeze,
        GateKind::BeamSplitter,
        GateKind::Kerr,
        GateKind::CrossKerr,
        GateKind::Rsb,
        GateKind::Bsb,
        GateKind::CtrlRotation,
        GateKind::CtrlDisplacement,
        GateKind::CtrlSqueeze,
        GateKind::CtrlBeamSplitter,
    ];

    /// `(qubit wires, qumode wires)`; targets list qubits first.
    pub fn arity(self) -> (usize, usize) {
        use GateKind::*;
        match self {
            PauliX | PauliY | PauliZ | Rx | Ry | Rz => (1, 0),
            Cnot => (2, 0),
            ModeRotation | Displacement | Squeeze | Kerr => (0, 1),
            BeamSplitter | CrossKerr => (0, 2),
            Rsb | Bsb | CtrlRotation | CtrlDisplacement | CtrlSqueeze => (1, 1),
            CtrlBeamSplitter => (1, 2),
        }
    }

    pub fn param_shape(self) -> ParamShape {
        use GateKind::*;
        match self {
            PauliX | PauliY | PauliZ | Cnot => ParamShape::None,
            Rx | Ry | Rz | ModeRotation | Kerr | CrossKerr | CtrlRotation => ParamShape::Angle,
            Displacement | Squeeze | BeamSplitter | Rsb | Bsb | CtrlDisplacement | CtrlSqueeze
            | CtrlBeamSplitter => ParamShape::Complex,
        }
    }

    pub fn touches_qumodes(self) -> bool {
        self.arity().1 > 0
    }

    /// Whether the generator commutes with the total excitation number.
    pub fn conserves_excitations(self) -> bool {
        use GateKind::*;
        matches!(
            self,
            PauliZ | Rz | ModeRotation | BeamSplitter | Kerr | CrossKerr | Rsb | CtrlRotation
                | CtrlBeamSplitter
        )
    }

    pub fn short_name(self) -> &'static str {
        use GateKind::*;
        match self {
            PauliX => "X",
            PauliY => "Y",
            PauliZ => "Z",
            Rx => "RX",
            Ry => "RY",
            Rz => "RZ",
            Cnot => "CNOT",
            ModeRotation => "R",
            Displacement => "D",
            Squeeze => "S",
            BeamSplitter => "BS",
            Kerr => "K",
            CrossKerr => "CK",
            Rsb => "RSB",
            Bsb => "BSB",
            CtrlRotation => "CR",
            CtrlDisplacement => "CD",
            CtrlSqueeze => "CS",
            CtrlBeamSplitter => "CBS",
        }
    }

    /// Expected wire kinds, in target order.
    pub fn wire_kinds(self) -> Vec<bool> {
        let (q, m) = self.arity();
        std::iter::repeat_n(true, q).chain(std::iter::repeat_n(false, m)).collect()
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for GateKind {
    type Err = HyqError;

    fn from_str(s: &str) -> Result<Self> {
        GateKind::ALL
            .iter()
            .copied()
            .find(|k| k.short_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| HyqError::UnknownGate(s.to_string()))
    }
}

/// Gate parameters, stored normalized (`theta >= 0`, `phi` in `[0, 2 pi)`)
/// for complex kinds. Angle kinds keep a signed `theta`.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct GateParams {
    pub theta: f64,
    pub phi: f64,
}

impl GateParams {
    pub fn none() -> Self {
        Self { theta: 0.0, phi: 0.0 }
    }

    pub fn angle(theta: f64) -> Self {
        Self { theta, phi: 0.0 }
    }

    /// Polar form; a negative `theta` is folded into `phi + pi`.
    pub fn polar(theta: f64, phi: f64) -> Self {
        let (theta, phi) = if theta < 0.0 { (-theta, phi + PI) } else { (theta, phi) };
        Self { theta, phi: normalize_phase(phi) }
    }

    pub fn from_z(z: C64) -> Self {
        let theta = z.norm();
        let phi = if theta == 0.0 { 0.0 } else { z.arg() };
        Self::polar(theta, phi)
    }

    pub fn z(&self) -> C64 {
        C64::from_polar(self.theta, self.phi)
    }

    /// Canonical form for `kind`.
    pub fn normalized_for(self, kind: GateKind) -> Self {
        match kind.param_shape() {
            ParamShape::None => Self::none(),
            ParamShape::Angle => Self::angle(self.theta),
            ParamShape::Complex => Self::polar(self.theta, self.phi),
        }
    }
}

/// Maps a phase into `[0, 2 pi)`.
pub fn normalize_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

fn wire_layout(kind: GateKind, cutoffs: &[usize]) -> Result<RegisterLayout> {
    let (q, m) = kind.arity();
    if cutoffs.len() != m {
        return Err(HyqError::InvalidGate(format!(
            "{kind} needs {m} qumode cutoff(s), {} given",
            cutoffs.len()
        )));
    }
    let mut wires = vec![WireSpec::Qubit; q];
    for &c in cutoffs {
        wires.push(WireSpec::qumode(c)?);
    }
    RegisterLayout::new(wires)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

/// Anti-Hermitian generator `G` with `U = exp(G)` for a parametrized kind.
/// `cutoffs` lists the qumode cutoffs in target order.
pub fn generator(kind: GateKind, params: GateParams, cutoffs: &[usize]) -> Result<Operator> {
    use GateKind::*;
    let layout = wire_layout(kind, cutoffs)?;
    let p = params.normalized_for(kind);
    let th = p.theta;
    let z = p.z();
    let zc = z.conj();
    let ith = I * th;
    let m: DMatrix<C64> = match kind {
        PauliX | PauliY | PauliZ | Cnot => {
            return Err(HyqError::InvalidGate(format!("{kind} has no parametrized generator")))
        }
        Rx => pauli::x() * (ith * 0.5),
        Ry => pauli::y() * (ith * 0.5),
        Rz => pauli::z() * (ith * 0.5),
        ModeRotation => number_diag(cutoffs[0]) * ith,
        Kerr => {
            let n = number_diag(cutoffs[0]);
            (&n * &n) * ith
        }
        Displacement => {
            let a = annihilation(cutoffs[0]);
            a.adjoint() * z - a * zc
        }
        Squeeze => squeeze_generator(cutoffs[0], z),
        BeamSplitter => beam_splitter_generator(cutoffs[0], cutoffs[1], z),
        CrossKerr => kron(&number_diag(cutoffs[0]), &number_diag(cutoffs[1])) * ith,
        Rsb => {
            let a = annihilation(cutoffs[0]);
            (kron(&pauli::raising(), &a) * z + kron(&pauli::lowering(), &a.adjoint()) * zc) * I
        }
        Bsb => {
            let a = annihilation(cutoffs[0]);
            (kron(&pauli::raising(), &a.adjoint()) * z + kron(&pauli::lowering(), &a) * zc) * I
        }
        CtrlRotation => kron(&pauli::z(), &number_diag(cutoffs[0])) * ith,
        CtrlDisplacement => {
            let a = annihilation(cutoffs[0]);
            kron(&pauli::z(), &(a.adjoint() * z - a * zc))
        }
        CtrlSqueeze => kron(&pauli::z(), &squeeze_generator(cutoffs[0], z)),
        CtrlBeamSplitter => kron(&pauli::z(), &beam_splitter_generator(cutoffs[0], cutoffs[1], z)),
    };
    Operator::new(layout, m)
}

fn squeeze_generator(cutoff: usize, z: C64) -> DMatrix<C64> {
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    ((&a * &a) * z.conj() - (&ad * &ad) * z) * C64::new(0.5, 0.0)
}

fn beam_splitter_generator(ca: usize, cb: usize, z: C64) -> DMatrix<C64> {
    let a = annihilation(ca);
    let b = annihilation(cb);
    kron(&a.adjoint(), &b) * z - kron(&a, &b.adjoint()) * z.conj()
}

/// Unitary for any kind. `cutoffs` lists qumode cutoffs in target order.
pub fn gate(kind: GateKind, params: GateParams, cutoffs: &[usize]) -> Result<Operator> {
    use GateKind::*;
    let layout = wire_layout(kind, cutoffs)?;
    let p = params.normalized_for(kind);
    match kind {
        PauliX => Operator::new(layout, pauli::x()),
        PauliY => Operator::new(layout, pauli::y()),
        PauliZ => Operator::new(layout, pauli::z()),
        Cnot => Operator::new(layout, cnot_matrix()),
        ModeRotation | Kerr | CrossKerr | CtrlRotation | Rz => {
            let diag = diagonal_phases(kind, p, cutoffs)?;
            Operator::from_diagonal(&layout, &diag)
        }
        _ => expm_antihermitian(&generator(kind, p, cutoffs)?),
    }
}

/// Diagonal of the gates that are diagonal in the computational/Fock basis.
pub fn diagonal_phases(kind: GateKind, params: GateParams, cutoffs: &[usize]) -> Result<Vec<C64>> {
    use GateKind::*;
    let th = params.normalized_for(kind).theta;
    let phase = |x: f64| C64::from_polar(1.0, th * x);
    Ok(match kind {
        Rz => vec![phase(0.5), phase(-0.5)],
        PauliZ => vec![ONE, -ONE],
        ModeRotation => (0..=cutoffs[0]).map(|n| phase(n as f64)).collect(),
        Kerr => (0..=cutoffs[0]).map(|n| phase((n * n) as f64)).collect(),
        CrossKerr => {
            let mut v = Vec::new();
            for m in 0..=cutoffs[0] {
                for n in 0..=cutoffs[1] {
                    v.push(phase((m * n) as f64));
                }
            }
            v
        }
        CtrlRotation => {
            let d = cutoffs[0] + 1;
            (0..d).map(|n| phase(n as f64)).chain((0..d).map(|n| phase(-(n as f64)))).collect()
        }
        _ => return Err(HyqError::InvalidGate(format!("{kind} is not diagonal"))),
    })
}

pub fn is_diagonal_kind(kind: GateKind) -> bool {
    use GateKind::*;
    matches!(kind, Rz | PauliZ | ModeRotation | Kerr | CrossKerr | CtrlRotation)
}

fn cnot_matrix() -> DMatrix<C64> {
    // exp(i pi/4 (I - Z)(I - X)) = exp(i pi |down><down| (x) |-><-|)
    let mut m = DMatrix::<C64>::identity(4, 4);
    m[(2, 2)] = ZERO;
    m[(3, 3)] = ZERO;
    m[(2, 3)] = ONE;
    m[(3, 2)] = ONE;
    m
}

/// 2x2 / 4x4 qubit gates. `theta` is ignored for Pauli and CNOT.
pub fn qubit_gate(kind: GateKind, theta: f64) -> Result<Operator> {
    if kind.arity().1 != 0 {
        return Err(HyqError::InvalidGate(format!("{kind} is not a qubit gate")));
    }
    gate(kind, GateParams::angle(theta), &[])
}

pub fn qumode_gate(kind: GateKind, params: GateParams, cutoff: usize) -> Result<Operator> {
    if kind.arity() != (0, 1) {
        return Err(HyqError::InvalidGate(format!("{kind} is not a single-qumode gate")));
    }
    gate(kind, params, &[cutoff])
}

pub fn two_qumode_gate(kind: GateKind, params: GateParams, cutoff_a: usize, cutoff_b: usize) -> Result<Operator> {
    if kind.arity() != (0, 2) {
        return Err(HyqError::InvalidGate(format!("{kind} is not a two-qumode gate")));
    }
    gate(kind, params, &[cutoff_a, cutoff_b])
}

/// Hybrid gates; the qubit is the first tensor factor.
pub fn hybrid_gate(kind: GateKind, params: GateParams, cutoffs: &[usize]) -> Result<Operator> {
    let (q, m) = kind.arity();
    if q != 1 || m == 0 {
        return Err(HyqError::InvalidGate(format!("{kind} is not a hybrid gate")));
    }
    gate(kind, params, cutoffs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{embed, ladder_ops, max_abs, quadratures, HybridState};
    use approx::assert_abs_diff_eq;

    fn all_instances(cutoff: usize) -> Vec<(GateKind, GateParams, Vec<usize>)> {
        let p = GateParams::polar(0.7, 1.3);
        GateKind::ALL
            .iter()
            .map(|&k| (k, p, vec![cutoff; k.arity().1]))
            .collect()
    }

    #[test]
    fn every_gate_is_unitary() {
        for cutoff in [1, 3, 6] {
            for (k, p, cs) in all_instances(cutoff) {
                let u = gate(k, p, &cs).unwrap();
                assert!(u.unitarity_error() < 1e-9, "{k} cutoff {cutoff}");
            }
        }
    }

    #[test]
    fn rz_matches_table_sign() {
        let th = 0.9;
        let u = qubit_gate(GateKind::Rz, th).unwrap();
        assert_abs_diff_eq!((u.matrix()[(0, 0)] - C64::from_polar(1.0, th / 2.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((u.matrix()[(1, 1)] - C64::from_polar(1.0, -th / 2.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn rx_two_pi_is_minus_identity() {
        let u = qubit_gate(GateKind::Rx, TAU).unwrap();
        let minus = DMatrix::<C64>::identity(2, 2) * C64::new(-1.0, 0.0);
        assert_abs_diff_eq!(max_abs(&(u.matrix() - minus)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn cnot_equals_exponential_of_table_exponent() {
        // oracle: exp(i pi/4 (I-Z)(I-X)) from the 4x4 Hermitian exponent
        let id = pauli::identity();
        let a = &id - pauli::z();
        let b = &id - pauli::x();
        let h = kron(&a, &b) * C64::new(PI / 4.0, 0.0);
        let oracle = crate::hilbert::expm_i_hermitian(&h, 1.0);
        let u = qubit_gate(GateKind::Cnot, 0.0).unwrap();
        assert_abs_diff_eq!(max_abs(&(u.matrix() - &oracle)), 0.0, epsilon = 1e-12);
        // |down, up> -> |down, down>, |up, *> untouched
        assert_abs_diff_eq!(u.matrix()[(3, 2)].re, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(u.matrix()[(0, 0)].re, 1.0, epsilon = 1e-12);
        assert!(qubit_gate(GateKind::BeamSplitter, 0.0).is_err());
    }

    #[test]
    fn diagonal_mode_gates() {
        let th = 0.37;
        let r = qumode_gate(GateKind::ModeRotation, GateParams::angle(th), 5).unwrap();
        let k = qumode_gate(GateKind::Kerr, GateParams::polar(th, 2.0), 5).unwrap();
        for n in 0..=5 {
            let nf = n as f64;
            assert_abs_diff_eq!((r.matrix()[(n, n)] - C64::from_polar(1.0, th * nf)).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((k.matrix()[(n, n)] - C64::from_polar(1.0, th * nf * nf)).norm(), 0.0, epsilon = 1e-14);
        }
        assert!(r.is_diagonal(0.0) && k.is_diagonal(0.0));
        // the diagonal route agrees with the generator route
        let via_gen = expm_antihermitian(&generator(GateKind::Kerr, GateParams::angle(th), &[5]).unwrap()).unwrap();
        assert_abs_diff_eq!(max_abs(&(via_gen.matrix() - k.matrix())), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn displaced_vacuum_mean_number() {
        let cutoff = 12;
        let z = C64::from_polar(0.5, 0.4);
        let d = qumode_gate(GateKind::Displacement, GateParams::from_z(z), cutoff).unwrap();
        let vac = HybridState::vacuum(d.layout());
        let psi = d.apply(&vac).unwrap();
        let n = ladder_ops(cutoff).unwrap().n.expectation_complex(&psi).unwrap().re;
        // coherent-state series truncated at the cutoff
        let x = z.norm_sqr();
        let mut fact = 1.0;
        let mut oracle = 0.0;
        for k in 0..=cutoff {
            if k > 0 {
                fact *= k as f64;
            }
            oracle += k as f64 * x.powi(k as i32) * (-x).exp() / fact;
        }
        assert_abs_diff_eq!(n, oracle, epsilon = 1e-4);
        assert_abs_diff_eq!(n, x, epsilon = 1e-4);
    }

    #[test]
    fn displacement_inverse() {
        let d1 = qumode_gate(GateKind::Displacement, GateParams::polar(0.8, 0.3), 6).unwrap();
        let d2 = qumode_gate(GateKind::Displacement, GateParams::polar(-0.8, 0.3), 6).unwrap();
        let prod = d1.mul(&d2).unwrap();
        assert_abs_diff_eq!(max_abs(&(prod.matrix() - DMatrix::<C64>::identity(7, 7))), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn cross_kerr_phases() {
        let th = 0.21;
        let ck = two_qumode_gate(GateKind::CrossKerr, GateParams::angle(th), 3, 2).unwrap();
        for m in 0..=3 {
            for n in 0..=2 {
                let idx = m * 3 + n;
                let expected = C64::from_polar(1.0, th * (m * n) as f64);
                assert_abs_diff_eq!((ck.matrix()[(idx, idx)] - expected).norm(), 0.0, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn beam_splitter_single_excitation_swap() {
        let bs = two_qumode_gate(GateKind::BeamSplitter, GateParams::polar(PI / 2.0, 0.0), 2, 2).unwrap();
        let sub = bs.layout().clone();
        let one_zero = HybridState::basis(&sub, &[1, 0]).unwrap();
        let zero_one = HybridState::basis(&sub, &[0, 1]).unwrap();
        let out = bs.apply(&one_zero).unwrap();
        assert_abs_diff_eq!((zero_one.inner(&out).unwrap() + ONE).norm(), 0.0, epsilon = 1e-12);
        let out = bs.apply(&zero_one).unwrap();
        assert_abs_diff_eq!((one_zero.inner(&out).unwrap() - ONE).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rsb_pair_swap_with_i() {
        let rsb = hybrid_gate(GateKind::Rsb, GateParams::polar(PI / 2.0, 0.0), &[3]).unwrap();
        let l = rsb.layout().clone();
        let down_one = HybridState::basis(&l, &[1, 1]).unwrap();
        let up_zero = HybridState::basis(&l, &[0, 0]).unwrap();
        let out = rsb.apply(&down_one).unwrap();
        assert_abs_diff_eq!((up_zero.inner(&out).unwrap() - I).norm(), 0.0, epsilon = 1e-12);
        let out = rsb.apply(&up_zero).unwrap();
        assert_abs_diff_eq!((down_one.inner(&out).unwrap() - I).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn bsb_subspace_and_truncation_edge() {
        let cutoff = 3;
        let bsb = hybrid_gate(GateKind::Bsb, GateParams::polar(0.9, 0.5), &[cutoff]).unwrap();
        let l = bsb.layout().clone();
        let down_zero = HybridState::basis(&l, &[1, 0]).unwrap();
        let up_one = HybridState::basis(&l, &[0, 1]).unwrap();
        let out = bsb.apply(&down_zero).unwrap();
        let w = down_zero.inner(&out).unwrap().norm_sqr() + up_one.inner(&out).unwrap().norm_sqr();
        assert_abs_diff_eq!(w, 1.0, epsilon = 1e-12);
        // raising part sigma^+ a^dagger annihilates |down, L> at the truncation edge
        let down_top = HybridState::basis(&l, &[1, cutoff]).unwrap();
        let raise = kron(&pauli::raising(), &annihilation(cutoff).adjoint());
        let v = Operator::new(l.clone(), raise).unwrap().apply(&down_top).unwrap();
        assert!(v.amplitudes().iter().all(|a| a.norm() < 1e-15));
    }

    #[test]
    fn controlled_rotation_phases() {
        let th = 0.6;
        let cr = hybrid_gate(GateKind::CtrlRotation, GateParams::angle(th), &[4]).unwrap();
        for n in 0..=4 {
            let up = cr.matrix()[(n, n)];
            let down = cr.matrix()[(5 + n, 5 + n)];
            assert_abs_diff_eq!((up - C64::from_polar(1.0, th * n as f64)).norm(), 0.0, epsilon = 1e-14);
            assert_abs_diff_eq!((down - C64::from_polar(1.0, -th * n as f64)).norm(), 0.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn number_conservation_classification() {
        let cutoff = 3;
        for (k, p, cs) in all_instances(cutoff) {
            if k.param_shape() == ParamShape::None && !matches!(k, GateKind::PauliZ) {
                continue;
            }
            let u = gate(k, p, &cs).unwrap();
            let layout = u.layout().clone();
            let mut n_tot = Operator::zeros(&layout);
            for w in 0..layout.len() {
                let local = match layout.wire(w).unwrap() {
                    WireSpec::Qubit => (pauli::identity() + pauli::z()) * C64::new(0.5, 0.0),
                    WireSpec::Qumode { cutoff } => number_diag(cutoff),
                };
                let e = embed(&Operator::on_wire(layout.wire(w).unwrap(), local).unwrap(), &[w], &layout).unwrap();
                n_tot = n_tot.add(&e).unwrap();
            }
            let comm = u.commutator(&n_tot).unwrap().max_norm();
            if k.conserves_excitations() {
                assert!(comm < 1e-10, "{k} should conserve, commutator {comm}");
            } else {
                assert!(comm > 1e-3, "{k} should change the excitation number");
            }
        }
    }

    #[test]
    fn squeezed_vacuum_variance() {
        let cutoff = 16;
        for r in [0.1, 0.3, 0.5] {
            let s = qumode_gate(GateKind::Squeeze, GateParams::polar(r, 0.0), cutoff).unwrap();
            let psi = s.apply(&HybridState::vacuum(s.layout())).unwrap();
            let (x, _) = quadratures(cutoff).unwrap();
            let x2 = x.mul(&x).unwrap();
            let mean = x.expectation_complex(&psi).unwrap().re;
            let var = x2.expectation_complex(&psi).unwrap().re - mean * mean;
            let expected = (-2.0 * r).exp() / 2.0;
            assert!((var - expected).abs() / expected < 0.02, "r={r} var={var}");
        }
    }

    #[test]
    fn param_normalization() {
        let p = GateParams::polar(-1.0, 0.25);
        assert_abs_diff_eq!(p.theta, 1.0);
        assert_abs_diff_eq!(p.phi, 0.25 + PI, epsilon = 1e-15);
        let p = GateParams::polar(0.5, 5.0 * PI / 2.0);
        assert_abs_diff_eq!(p.phi, PI / 2.0, epsilon = 1e-12);
        assert_eq!("bs".parse::<GateKind>().unwrap(), GateKind::BeamSplitter);
        assert!("nope".parse::<GateKind>().is_err());
    }
}
