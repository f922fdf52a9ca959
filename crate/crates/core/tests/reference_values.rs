//! Values from independent dense diagonalization and brute-force subset
//! searches, computed outside this crate.

use approx::assert_relative_eq;
use hyqsim::jch::{build_hamiltonian_sparse, HamiltonianForm, JchParams};
use hyqsim::trap::{mode_structure, optimize_control_subset, Band, DriveSettings, TrapModel};
use hyqsim::vqe::exact_ground_space;

fn lattice(delta: f64, kappa: f64) -> JchParams {
    JchParams::with_detuning(3, 1.0, delta, kappa, 1.0, 4).unwrap()
}

#[test]
fn sector_ground_energies_and_gaps() {
    let cases = [
        (1, -4.0, 0.1, 0.6297583452527165, 0.13417367724749274),
        (1, 0.0, 0.25, -0.19228149587613202, 0.19228149587613197),
        (1, 4.0, 0.5, -3.279893557237499, 0.04382557973770984),
        (1, 3.0, 0.1, -2.315092507204258, 0.012316869472263292),
        (1, -0.8, 0.1, 0.22404340241594234, 0.0989236361571571),
        (3, -4.0, 0.1, 1.9110873666485813, 0.14021724225536425),
        (3, 0.0, 0.25, -0.29988118484343773, 0.44146811519413737),
        (3, 4.0, 0.5, -9.722458144441749, 3.3645653478882966),
        (3, -0.8, 0.1, 0.8300730941553651, 0.2283728697078149),
    ];
    for (n, d, k, e0, gap) in cases {
        let h = build_hamiltonian_sparse(&lattice(d, k), HamiltonianForm::Ladder).unwrap();
        let g = exact_ground_space(&h, Some(n), None).unwrap();
        assert_relative_eq!(g.e0, e0, epsilon = 1e-9);
        assert_relative_eq!(g.gap, gap, epsilon = 1e-9);
        assert_eq!(g.sector, Some(n));
    }
}

#[test]
fn unrestricted_ground_states() {
    for (d, k, e0, n_tot, gap) in [(3.0, 0.1, -6.909525109023965, 3.0, 0.5876505521122919), (-2.0, 0.3, 0.0, 0.0, 0.21647874946876627)] {
        let h = build_hamiltonian_sparse(&lattice(d, k), HamiltonianForm::Quadrature).unwrap();
        let g = exact_ground_space(&h, None, None).unwrap();
        assert_relative_eq!(g.e0, e0, epsilon = 1e-9);
        assert_relative_eq!(g.n_tot, n_tot, epsilon = 1e-9);
        assert_relative_eq!(g.gap, gap, epsilon = 1e-9);
    }
}

#[test]
fn best_control_subsets() {
    let trap = TrapModel::yb171(8, [2.0, 2.5, 0.12]).unwrap();
    let ms = mode_structure(&trap).unwrap();
    let modes = &ms.band_order(Band::RadialX)[1..];
    let drive = DriveSettings::default();
    let res = optimize_control_subset(&ms, modes, &[1, 2, 3, 4], &drive).unwrap();
    // Best worst-case participation product |b_m b_n| per subset size; with the
    // default drive the beam-splitter time is 1 / (3200 |b_m b_n|) seconds.
    let products = [0.02737891006111679, 0.1010199294544608, 0.19060383934309913, 0.19599117642393798];
    for (r, p) in res.iter().zip(products) {
        assert_relative_eq!(r.max_time, 1.0 / (3200.0 * p), max_relative = 1e-9);
        assert_eq!(r.ions.len(), r.size);
        assert_eq!(r.assignment.len(), modes.len() - 1);
    }
}
