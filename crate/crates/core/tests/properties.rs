use proptest::prelude::*;

use hyqsim::circuit::Circuit;
use hyqsim::gates::{GateKind, GateParams, ParamShape};
use hyqsim::jch::expected_total_number;
use hyqsim::{HybridState, RegisterLayout, WireSpec, C64};

// two qubits (wires 0, 1) and two qumodes (wires 2, 3)
fn layout() -> RegisterLayout {
    RegisterLayout::new(vec![WireSpec::Qubit, WireSpec::Qubit, WireSpec::qumode(3).unwrap(), WireSpec::qumode(3).unwrap()]).unwrap()
}

#[derive(Debug, Clone)]
struct Step {
    kind: GateKind,
    theta: f64,
    phi: f64,
    swap_qubits: bool,
    swap_modes: bool,
}

fn step() -> impl Strategy<Value = Step> {
    (0..GateKind::ALL.len(), -2.0..2.0f64, 0.0..6.3f64, any::<bool>(), any::<bool>())
        .prop_map(|(k, theta, phi, swap_qubits, swap_modes)| Step { kind: GateKind::ALL[k], theta, phi, swap_qubits, swap_modes })
}

fn push(c: &mut Circuit, s: &Step) {
    let (nq, nm) = s.kind.arity();
    let qubits = if s.swap_qubits { [1, 0] } else { [0, 1] };
    let modes = if s.swap_modes { [3, 2] } else { [2, 3] };
    let targets: Vec<usize> = qubits[..nq].iter().chain(&modes[..nm]).copied().collect();
    let params = match s.kind.param_shape() {
        ParamShape::None => GateParams::none(),
        ParamShape::Angle => GateParams::angle(s.theta),
        ParamShape::Complex => GateParams::polar(s.theta.abs(), s.phi),
    };
    c.push(s.kind, params, &targets).unwrap();
}

fn random_state(amps: &[(f64, f64)]) -> HybridState {
    let v = amps.iter().map(|&(re, im)| C64::new(re, im)).collect();
    HybridState::from_amplitudes(&layout(), v).unwrap()
}

fn amplitudes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 64).prop_filter("nonzero", |v| v.iter().any(|&(a, b)| a.abs() + b.abs() > 0.1))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn circuits_preserve_norm(steps in prop::collection::vec(step(), 1..6), amps in amplitudes()) {
        let psi = random_state(&amps);
        let mut c = Circuit::new(layout());
        for s in &steps {
            push(&mut c, s);
        }
        let out = c.apply(&psi).unwrap();
        prop_assert!((out.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn conserving_gates_keep_excitation_number(steps in prop::collection::vec(step(), 1..6), amps in amplitudes()) {
        let psi = random_state(&amps);
        let mut c = Circuit::new(layout());
        for s in steps.iter().filter(|s| s.kind.conserves_excitations()) {
            push(&mut c, s);
        }
        let out = c.apply(&psi).unwrap();
        prop_assert!((expected_total_number(&out) - expected_total_number(&psi)).abs() < 1e-9);
    }

    #[test]
    fn compiled_matches_direct(steps in prop::collection::vec(step(), 1..6), amps in amplitudes()) {
        let psi = random_state(&amps);
        let mut c = Circuit::new(layout());
        for s in &steps {
            push(&mut c, s);
        }
        let direct = c.apply(&psi).unwrap();
        let mut fast = psi.clone();
        c.compile().unwrap().apply_in_place(&mut fast).unwrap();
        let err: f64 = direct.amplitudes().iter().zip(fast.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prop_assert!(err < 1e-10);
    }

    #[test]
    fn circuit_json_round_trip(steps in prop::collection::vec(step(), 0..8)) {
        let mut c = Circuit::new(layout());
        for s in &steps {
            push(&mut c, s);
        }
        let back = Circuit::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.to_json(), c.to_json());
        prop_assert_eq!(back.gates(), c.gates());
    }
}
