//! Phase-space and entanglement diagnostics.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HyqError, Result};
use crate::hilbert::{eigh, fock_wavefunctions, partial_trace, HybridState, Operator, C64};
use crate::jch::{build_hamiltonian_sparse, fmt_num, HamiltonianForm, JchParams};
use crate::vqe::exact_ground_space;

/// Per-axis resolution cap of a phase-space grid.
pub const MAX_GRID_POINTS: usize = 4001;

/// Uniform grid on `[-x_max, x_max] x [-p_max, p_max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGrid {
    pub x_max: f64,
    pub p_max: f64,
    pub points: usize,
}

impl Default for PhaseGrid {
    fn default() -> Self {
        Self { x_max: 5.0, p_max: 5.0, points: 201 }
    }
}

impl PhaseGrid {
    pub fn new(x_max: f64, p_max: f64, points: usize) -> Result<Self> {
        let g = Self { x_max, p_max, points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points < 3 || self.points.is_multiple_of(2) || self.points > MAX_GRID_POINTS {
            return Err(HyqError::InvalidParameter(format!(
                "grid needs an odd number of points per axis in 3..={MAX_GRID_POINTS}"
            )));
        }
        if !(self.x_max > 0.0 && self.p_max > 0.0 && self.x_max.is_finite() && self.p_max.is_finite()) {
            return Err(HyqError::InvalidParameter("grid ranges must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn xs(&self) -> Vec<f64> {
        linspace(-self.x_max, self.x_max, self.points)
    }

    pub fn ps(&self) -> Vec<f64> {
        linspace(-self.p_max, self.p_max, self.points)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / (self.points - 1) as f64
    }

    pub fn dp(&self) -> f64 {
        2.0 * self.p_max / (self.points - 1) as f64
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    w
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WignerMap {
    pub grid: PhaseGrid,
    /// `values[i][j] = W(x_i, p_j)`.
    pub values: Vec<Vec<f64>>,
}

impl WignerMap {
    pub fn at_origin(&self) -> f64 {
        let c = self.grid.points / 2;
        self.values[c][c]
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let wx = trapezoid_weights(self.grid.points, self.grid.dx());
        let wp = trapezoid_weights(self.grid.points, self.grid.dp());
        self.values
            .iter()
            .zip(&wx)
            .map(|(row, a)| a * row.iter().zip(&wp).map(|(v, b)| b * f(*v)).sum::<f64>())
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.integrate(|w| w)
    }

    /// Position marginal `int W dp` at each `x` node.
    pub fn x_marginal(&self) -> Vec<f64> {
        let wp = trapezoid_weights(self.grid.points, self.grid.dp());
        self.values.iter().map(|row| row.iter().zip(&wp).map(|(v, b)| v * b).sum()).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,p,W\n");
        for (x, row) in self.grid.xs().iter().zip(&self.values) {
            for (p, w) in self.grid.ps().iter().zip(row) {
                let _ = writeln!(s, "{},{},{}", fmt_num(*x), fmt_num(*p), fmt_num(*w));
            }
        }
        s
    }
}

/// Quadrature rule for the `y` integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YQuadrature {
    pub y_max: f64,
    pub points: usize,
}

impl Default for YQuadrature {
    fn default() -> Self {
        Self { y_max: 8.0, points: 401 }
    }
}

/// `W(x,p) = (1/pi) int dy <x+y|rho|x-y> e^{-2ipy}` for a single-mode density
/// matrix in the Fock basis.
pub fn wigner(rho: &DMatrix<C64>, grid: &PhaseGrid) -> Result<WignerMap> {
    wigner_with(rho, grid, YQuadrature::default())
}

pub fn wigner_with(rho: &DMatrix<C64>, grid: &PhaseGrid, yq: YQuadrature) -> Result<WignerMap> {
    grid.validate()?;
    let d = rho.nrows();
    if rho.ncols() != d || d == 0 {
        return Err(HyqError::DimensionMismatch { expected: d, found: rho.ncols() });
    }
    let herm = (rho - rho.adjoint()).iter().fold(0.0f64, |a, v| a.max(v.norm()));
    if herm > 1e-10 {
        return Err(HyqError::NotHermitian(herm));
    }
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-8 || tr.im.abs() > 1e-10 {
        return Err(HyqError::NotNormalized(tr.re - 1.0));
    }
    let n_max = d - 1;
    let extent = ((2 * n_max + 1) as f64).sqrt();
    let hy = 2.0 * yq.y_max / (yq.points - 1) as f64;
    if extent + 2.0 > grid.x_max.min(grid.p_max) || 2.0 * (grid.p_max + extent) * hy > PI {
        warn!("phase grid may under-resolve a Fock space of dimension {d}");
    }

    let ys = linspace(-yq.y_max, yq.y_max, yq.points);
    let wy = trapezoid_weights(yq.points, hy);
    let xs = grid.xs();
    let ps = grid.ps();
    // e^{-2ipy} for every (p, y)
    let phases: Vec<Vec<C64>> = ps
        .iter()
        .map(|&p| ys.iter().map(|&y| C64::from_polar(1.0, -2.0 * p * y)).collect())
        .collect();

    let values: Vec<Vec<f64>> = xs
        .par_iter()
        .map(|&x| {
            let f: Vec<C64> = ys
                .iter()
                .zip(&wy)
                .map(|(&y, &w)| {
                    let a = fock_wavefunctions(n_max, x + y);
                    let b = fock_wavefunctions(n_max, x - y);
                    let mut acc = C64::new(0.0, 0.0);
                    for m in 0..d {
                        if a[m] == 0.0 {
                            continue;
                        }
                        let mut row = C64::new(0.0, 0.0);
                        for n in 0..d {
                            row += rho[(m, n)] * b[n];
                        }
                        acc += row * a[m];
                    }
                    acc * w
                })
                .collect();
            phases
                .iter()
                .map(|ph| ph.iter().zip(&f).map(|(e, v)| e * v).sum::<C64>().re / PI)
                .collect()
        })
        .collect();
    Ok(WignerMap { grid: *grid, values })
}

/// `delta = (1/2) int (W - |W|)`, which is `<= 0`.
pub fn negativity(w: &WignerMap) -> f64 {
    w.integrate(|v| 0.5 * (v - v.abs()))
}

/// `|delta|`, the reported magnitude.
pub fn negativity_magnitude(w: &WignerMap) -> f64 {
    negativity(w).abs()
}

/// Reduced density matrix of one qumode, averaged over `states`.
pub fn reduced_mode_density(states: &[HybridState], mode: usize) -> Result<DMatrix<C64>> {
    let first = states.first().ok_or(HyqError::EmptyWireSet)?;
    first.layout().wire(mode)?.cutoff().ok_or(HyqError::WrongWireKind { wire: mode, expected: "qumode" })?;
    let mut acc: Option<DMatrix<C64>> = None;
    for s in states {
        let r = partial_trace(s, &[mode])?.into_matrix();
        acc = Some(match acc {
            None => r,
            Some(a) => a + r,
        });
    }
    let mut rho = acc.expect("non-empty");
    rho /= C64::new(states.len() as f64, 0.0);
    Ok(rho)
}

pub fn mode_wigner(states: &[HybridState], mode: usize, grid: &PhaseGrid) -> Result<WignerMap> {
    wigner(&reduced_mode_density(states, mode)?, grid)
}

/// Per-mode `|delta|` and their mean.
pub fn average_negativity(states: &[HybridState], modes: &[usize], grid: &PhaseGrid) -> Result<(Vec<f64>, f64)> {
    if modes.is_empty() {
        return Err(HyqError::EmptyWireSet);
    }
    let per = modes
        .iter()
        .map(|&m| Ok(negativity_magnitude(&mode_wigner(states, m, grid)?)))
        .collect::<Result<Vec<f64>>>()?;
    let mean = per.iter().sum::<f64>() / per.len() as f64;
    Ok((per, mean))
}

/// Phase-space picture of a lattice ground space: the chosen site's mode
/// map plus per-mode negativities. A degenerate ground space enters as the
/// equal mixture of its basis states.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundWigner {
    pub site: usize,
    pub map: WignerMap,
    pub negativity: f64,
    pub per_mode: Vec<f64>,
    pub average: f64,
    pub degeneracy: usize,
}

pub fn ground_state_wigner(params: &JchParams, sector: Option<usize>, site: usize, grid: &PhaseGrid) -> Result<GroundWigner> {
    if site >= params.sites {
        return Err(HyqError::InvalidParameter(format!("site {site} out of range")));
    }
    let h = build_hamiltonian_sparse(params, HamiltonianForm::Ladder)?;
    let g = exact_ground_space(&h, sector, None)?;
    let modes: Vec<usize> = (0..params.sites).map(|n| params.mode_wire(n)).collect();
    let (per_mode, average) = average_negativity(&g.basis, &modes, grid)?;
    let map = mode_wigner(&g.basis, params.mode_wire(site), grid)?;
    Ok(GroundWigner { site, negativity: per_mode[site], map, per_mode, average, degeneracy: g.degeneracy() })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntropyMethod {
    /// Computational-basis outcome distribution of the qubit register.
    Shannon,
    /// Reduced density matrix of the qubit register.
    VonNeumann,
}

/// Entropy of the qubit register (natural log).
pub fn qubit_register_entropy(state: &HybridState, method: EntropyMethod) -> Result<f64> {
    let qubits = state.layout().qubit_wires();
    if qubits.is_empty() {
        return Err(HyqError::WrongWireKind { wire: 0, expected: "qubit" });
    }
    let h = |ps: &mut dyn Iterator<Item = f64>| -> f64 {
        ps.filter(|&p| p > 1e-300).map(|p| -p * p.ln()).sum::<f64>().max(0.0)
    };
    Ok(match method {
        EntropyMethod::Shannon => h(&mut state.marginal(&qubits)?.into_iter()),
        EntropyMethod::VonNeumann => {
            let rho = partial_trace(state, &qubits)?;
            h(&mut eigh(rho.matrix()).0.into_iter())
        }
    })
}

/// Von Neumann entropy of a density operator.
pub fn von_neumann(rho: &Operator) -> f64 {
    eigh(rho.matrix()).0.into_iter().filter(|&p| p > 1e-300).map(|p| -p * p.ln()).sum::<f64>().max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::Circuit;
    use crate::gates::{GateKind, GateParams};
    use crate::hilbert::{RegisterLayout, WireSpec};
    use approx::assert_abs_diff_eq;

    fn fock_rho(d: usize, diag: &[f64]) -> DMatrix<C64> {
        let mut m = DMatrix::<C64>::zeros(d, d);
        for (k, &v) in diag.iter().enumerate() {
            m[(k, k)] = C64::new(v, 0.0);
        }
        m
    }

    fn small_grid() -> PhaseGrid {
        PhaseGrid::new(5.0, 5.0, 101).unwrap()
    }

    #[test]
    fn vacuum_is_gaussian() {
        let w = wigner(&fock_rho(4, &[1.0]), &small_grid()).unwrap();
        assert_abs_diff_eq!(w.at_origin(), 1.0 / PI, epsilon = 1e-10);
        let xs = w.grid.xs();
        let ps = w.grid.ps();
        for (i, j) in [(10, 40), (50, 70), (33, 33)] {
            assert_abs_diff_eq!(w.values[i][j], (-(xs[i] * xs[i]) - ps[j] * ps[j]).exp() / PI, epsilon = 1e-10);
        }
        assert!(negativity_magnitude(&w) < 1e-6);
        assert_abs_diff_eq!(w.total(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn fock_one_origin_and_mixture() {
        let w = wigner(&fock_rho(3, &[0.0, 1.0]), &small_grid()).unwrap();
        assert_abs_diff_eq!(w.at_origin(), -1.0 / PI, epsilon = 1e-10);
        let mixed = wigner(&fock_rho(3, &[0.5, 0.5]), &small_grid()).unwrap();
        assert_abs_diff_eq!(mixed.at_origin(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn fock_one_negativity_matches_closed_form() {
        let grid = PhaseGrid::default();
        let w = wigner(&fock_rho(3, &[0.0, 1.0]), &grid).unwrap();
        // oracle: closed-form W_1 integrated on a 4x finer grid
        let fine = 801;
        let h = 10.0 / (fine - 1) as f64;
        let wts = trapezoid_weights(fine, h);
        let xs = linspace(-5.0, 5.0, fine);
        let mut oracle = 0.0;
        for (x, wx) in xs.iter().zip(&wts) {
            for (p, wp) in xs.iter().zip(&wts) {
                let r2 = x * x + p * p;
                let v = (2.0 * r2 - 1.0) * (-r2).exp() / PI;
                oracle += wx * wp * 0.5 * (v - v.abs());
            }
        }
        assert_abs_diff_eq!(oracle, 1.0 - 2.0 * (-0.5f64).exp(), epsilon = 1e-4);
        assert_abs_diff_eq!(negativity(&w), oracle, epsilon = 1e-4);
    }

    #[test]
    fn marginal_is_position_density() {
        let d = 4;
        let mut psi = vec![C64::new(0.0, 0.0); d];
        psi[0] = C64::new(0.6, 0.0);
        psi[1] = C64::new(0.0, 0.8);
        let v = nalgebra::DVector::from_vec(psi.clone());
        let rho = &v * v.adjoint();
        let w = wigner(&rho, &small_grid()).unwrap();
        let marg = w.x_marginal();
        for (k, x) in w.grid.xs().iter().enumerate().step_by(7) {
            let f = fock_wavefunctions(d - 1, *x);
            let amp: C64 = psi.iter().zip(&f).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(marg[k], amp.norm_sqr(), epsilon = 1e-4);
        }
    }

    #[test]
    fn coherent_state_centre_and_sign() {
        // D(z) with z = 0.5 e^{i pi/3}: W centred at (sqrt2 Re z, sqrt2 Im z) and non-negative
        let cutoff = 14;
        let l = RegisterLayout::new(vec![WireSpec::Qumode { cutoff }]).unwrap();
        let mut c = Circuit::new(l.clone());
        c.push(GateKind::Displacement, GateParams::polar(0.5, PI / 3.0), &[0]).unwrap();
        let psi = c.apply(&HybridState::vacuum(&l)).unwrap();
        let w = mode_wigner(&[psi], 0, &small_grid()).unwrap();
        let (xs, ps) = (w.grid.xs(), w.grid.ps());
        let (mut best, mut at) = (f64::MIN, (0.0, 0.0));
        for (i, row) in w.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > best {
                    best = *v;
                    at = (xs[i], ps[j]);
                }
            }
        }
        let z = C64::from_polar(0.5, PI / 3.0) * 2f64.sqrt();
        assert!((at.0 - z.re).abs() <= w.grid.dx() && (at.1 - z.im).abs() <= w.grid.dp(), "{at:?}");
        assert!(negativity_magnitude(&w) < 1e-6);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(wigner(&fock_rho(3, &[0.5]), &small_grid()).is_err());
        assert!(PhaseGrid::new(5.0, 5.0, 100).is_err());
        let mut m = fock_rho(2, &[1.0]);
        m[(0, 1)] = C64::new(0.1, 0.0);
        assert!(wigner(&m, &small_grid()).is_err());
    }

    #[test]
    fn entropies() {
        let l = RegisterLayout::new(vec![WireSpec::Qubit, WireSpec::Qumode { cutoff: 2 }]).unwrap();
        let prod = HybridState::basis(&l, &[1, 2]).unwrap();
        assert_abs_diff_eq!(qubit_register_entropy(&prod, EntropyMethod::Shannon).unwrap(), 0.0);
        assert_abs_diff_eq!(qubit_register_entropy(&prod, EntropyMethod::VonNeumann).unwrap(), 0.0, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = vec![C64::new(0.0, 0.0); l.dim()];
        amps[l.index(&[0, 0]).unwrap()] = C64::new(s, 0.0);
        amps[l.index(&[1, 1]).unwrap()] = C64::new(s, 0.0);
        let bell = HybridState::from_amplitudes(&l, amps).unwrap();
        assert_abs_diff_eq!(qubit_register_entropy(&bell, EntropyMethod::VonNeumann).unwrap(), 2f64.ln(), epsilon = 1e-12);
        // Shannon upper-bounds von Neumann
        let plus = HybridState::product(&l, &[vec![C64::new(s, 0.0), C64::new(s, 0.0)], vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0)]]).unwrap();
        let sh = qubit_register_entropy(&plus, EntropyMethod::Shannon).unwrap();
        let vn = qubit_register_entropy(&plus, EntropyMethod::VonNeumann).unwrap();
        assert_abs_diff_eq!(sh, 2f64.ln(), epsilon = 1e-12);
        assert!(vn < 1e-9 && sh >= vn);
        let only_mode = RegisterLayout::new(vec![WireSpec::Qumode { cutoff: 1 }]).unwrap();
        assert!(qubit_register_entropy(&HybridState::vacuum(&only_mode), EntropyMethod::Shannon).is_err());
    }
}
