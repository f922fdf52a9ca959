//! Linear Paul trap: Coulomb-crystal equilibrium, normal modes, and
//! the drive-time calculators used to plan qumode gates on motional modes.
//!
//! Internally lengths are in units of `l = (q^2 / (4 pi eps0 m w_z^2))^(1/3)`
//! and energies in `m w_z^2 l^2`, so the potential reads
//! `sum_i (bx^2 x_i^2 + by^2 y_i^2 + z_i^2)/2 + sum_{i<j} 1/|r_i - r_j|`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HyqError, Result};
use itertools::Itertools;

pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
pub const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;
pub const YB171_MASS_U: f64 = 170.936;
/// Motional coherence time used as the default budget.
pub const QUMODE_COHERENCE_S: f64 = 5e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrapModel {
    pub n_ions: usize,
    /// Angular trap frequencies `(w_x, w_y, w_z)` in rad/s.
    pub omega: [f64; 3],
    pub mass: f64,
    pub charge: f64,
}

impl TrapModel {
    /// Singly charged ions with mass in atomic units and frequencies in MHz (not angular).
    pub fn from_mhz(n_ions: usize, freqs_mhz: [f64; 3], mass_u: f64) -> Result<Self> {
        let t = Self {
            n_ions,
            omega: freqs_mhz.map(|f| 2.0 * PI * f * 1e6),
            mass: mass_u * ATOMIC_MASS,
            charge: ELEMENTARY_CHARGE,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn yb171(n_ions: usize, freqs_mhz: [f64; 3]) -> Result<Self> {
        Self::from_mhz(n_ions, freqs_mhz, YB171_MASS_U)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_ions == 0 {
            return Err(HyqError::InvalidParameter("trap needs at least one ion".into()));
        }
        if self.n_ions > 64 {
            return Err(HyqError::InvalidParameter("more than 64 ions is out of scope".into()));
        }
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !self.omega.iter().all(|&w| ok(w)) || !ok(self.mass) || !ok(self.charge) {
            return Err(HyqError::InvalidParameter("trap frequencies, mass and charge must be positive".into()));
        }
        let [wx, wy, wz] = self.omega;
        if wz >= wx.min(wy) {
            return Err(HyqError::InvalidParameter("linear chain needs w_z below both radial frequencies".into()));
        }
        Ok(())
    }

    pub fn length_scale(&self) -> f64 {
        let k = self.charge * self.charge / (4.0 * PI * VACUUM_PERMITTIVITY);
        (k / (self.mass * self.omega[2] * self.omega[2])).cbrt()
    }

    fn beta(&self) -> [f64; 3] {
        [self.omega[0] / self.omega[2], self.omega[1] / self.omega[2], 1.0]
    }
}

/// Scaled potential, gradient and Hessian over `3N` coordinates laid out as
/// `(x_0, y_0, z_0, x_1, ...)`.
fn potential(beta: &[f64; 3], r: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
    let n = r.len() / 3;
    let mut v = 0.0;
    let mut g = DVector::zeros(3 * n);
    let mut h = DMatrix::zeros(3 * n, 3 * n);
    for i in 0..n {
        for a in 0..3 {
            let b2 = beta[a] * beta[a];
            v += 0.5 * b2 * r[3 * i + a].powi(2);
            g[3 * i + a] += b2 * r[3 * i + a];
            h[(3 * i + a, 3 * i + a)] += b2;
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = [r[3 * i] - r[3 * j], r[3 * i + 1] - r[3 * j + 1], r[3 * i + 2] - r[3 * j + 2]];
            let d2 = d.iter().map(|x| x * x).sum::<f64>();
            let dist = d2.sqrt();
            v += 1.0 / dist;
            let inv3 = 1.0 / (d2 * dist);
            let inv5 = inv3 / d2;
            for a in 0..3 {
                g[3 * i + a] -= d[a] * inv3;
                g[3 * j + a] += d[a] * inv3;
                for b in 0..3 {
                    let k = 3.0 * d[a] * d[b] * inv5 - if a == b { inv3 } else { 0.0 };
                    h[(3 * i + a, 3 * i + b)] += k;
                    h[(3 * j + a, 3 * j + b)] += k;
                    h[(3 * i + a, 3 * j + b)] -= k;
                    h[(3 * j + a, 3 * i + b)] -= k;
                }
            }
        }
    }
    (v, g, h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    /// Scaled coordinates, ions sorted along z.
    pub scaled: Vec<[f64; 3]>,
    /// Positions in metres.
    pub positions: Vec<[f64; 3]>,
    pub gradient_norm: f64,
    pub iterations: usize,
}

/// Damped Newton from a uniformly spaced chain, with a gradient-descent
/// step whenever the Newton direction fails to descend.
pub fn equilibrium_positions(trap: &TrapModel) -> Result<Equilibrium> {
    trap.validate()?;
    let n = trap.n_ions;
    let beta = trap.beta();
    // rough half-extent of an N-ion chain in scaled units
    let half = if n > 1 { 0.5 * (n as f64).powf(0.56) * 1.6 } else { 0.0 };
    let mut r = vec![0.0; 3 * n];
    for i in 0..n {
        r[3 * i + 2] = if n > 1 { -half + 2.0 * half * i as f64 / (n - 1) as f64 } else { 0.0 };
    }
    let (mut v, mut g, mut h) = potential(&beta, &r);
    let mut iterations = 0;
    while g.norm() >= 1e-11 {
        if iterations >= 500 {
            return Err(HyqError::NonConvergence(format!("equilibrium: gradient norm {:.3e} after 500 iterations", g.norm())));
        }
        iterations += 1;
        let newton = h.clone().cholesky().map(|c| -c.solve(&g));
        let (dir, is_newton) = match newton {
            Some(d) if d.dot(&g) < 0.0 => (d, true),
            _ => (-g.clone(), false),
        };
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = r.iter().zip(dir.iter()).map(|(a, b)| a + step * b).collect();
            let (vt, gt, ht) = potential(&beta, &trial);
            // Near the minimum the energy decrease drops below its rounding
            // error; a Newton step that halves the gradient is accepted then.
            let armijo = vt <= v + 1e-4 * step * slope;
            if vt.is_finite() && (armijo || (is_newton && gt.norm() < 0.5 * g.norm())) {
                r = trial;
                (v, g, h) = (vt, gt, ht);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            if g.norm() < 1e-9 {
                break;
            }
            return Err(HyqError::NonConvergence(format!("equilibrium line search stalled at gradient norm {:.3e}", g.norm())));
        }
    }
    let mut scaled: Vec<[f64; 3]> = (0..n).map(|i| [r[3 * i], r[3 * i + 1], r[3 * i + 2]]).collect();
    scaled.sort_by(|a, b| a[2].total_cmp(&b[2]));
    let l = trap.length_scale();
    let positions = scaled.iter().map(|p| p.map(|c| c * l)).collect();
    Ok(Equilibrium { scaled, positions, gradient_norm: g.norm(), iterations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    Axial,
    RadialX,
    RadialY,
}

impl Band {
    fn axis(self) -> usize {
        match self {
            Band::RadialX => 0,
            Band::RadialY => 1,
            Band::Axial => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Axial => "axial",
            Band::RadialX => "radial_x",
            Band::RadialY => "radial_y",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub band: Band,
    /// Angular frequency, rad/s.
    pub omega: f64,
    /// Per-ion amplitude along the band's axis.
    pub participation: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModeStructure {
    pub positions: Vec<[f64; 3]>,
    /// All `3N` modes by ascending frequency.
    pub modes: Vec<Mode>,
    /// Full eigenvectors as columns, same order as `modes`.
    pub eigenvectors: DMatrix<f64>,
    pub hessian_asymmetry: f64,
}

impl ModeStructure {
    pub fn count(&self, band: Band) -> usize {
        self.modes.iter().filter(|m| m.band == band).count()
    }

    /// Mode indices of a band, centre-of-mass first (lowest axial, highest radial).
    pub fn band_order(&self, band: Band) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.modes.len()).filter(|&k| self.modes[k].band == band).collect();
        if band != Band::Axial {
            idx.reverse();
        }
        idx
    }

    /// `b[j][k]` for the modes of a band in centre-of-mass-first order.
    pub fn participation_matrix(&self, band: Band) -> Vec<Vec<f64>> {
        let order = self.band_order(band);
        let n = self.positions.len();
        (0..n).map(|j| order.iter().map(|&k| self.modes[k].participation[j]).collect()).collect()
    }

    /// `max |V^T V - I|` over the full eigenvector matrix.
    pub fn orthonormality_error(&self) -> f64 {
        let v = &self.eigenvectors;
        let g = v.transpose() * v - DMatrix::identity(v.ncols(), v.ncols());
        g.amax()
    }

    /// One row per mode: index, band, frequency in MHz, angular frequency, participations.
    pub fn to_csv(&self) -> String {
        let n = self.positions.len();
        let mut s = String::from("mode,band,freq_mhz,omega");
        for j in 0..n {
            let _ = write!(s, ",b_{}", j + 1);
        }
        s.push('\n');
        for (k, m) in self.modes.iter().enumerate() {
            let _ = write!(s, "{},{},{:.16e},{:.16e}", k, m.band.name(), m.omega / (2.0 * PI * 1e6), m.omega);
            for b in &m.participation {
                let _ = write!(s, ",{b:.16e}");
            }
            s.push('\n');
        }
        s
    }
}

/// Hessian eigenmodes at the equilibrium; `w = w_z sqrt(lambda)`.
pub fn normal_modes(trap: &TrapModel, eq: &Equilibrium) -> Result<ModeStructure> {
    trap.validate()?;
    if eq.scaled.len() != trap.n_ions {
        return Err(HyqError::DimensionMismatch { expected: trap.n_ions, found: eq.scaled.len() });
    }
    let r: Vec<f64> = eq.scaled.iter().flatten().copied().collect();
    let (_, _, h) = potential(&trap.beta(), &r);
    let asym = (&h - h.transpose()).amax();
    let sym = (&h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let n = trap.n_ions;
    let scale = h.amax().max(1.0);
    let mut order: Vec<usize> = (0..3 * n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut modes = Vec::with_capacity(3 * n);
    let mut vecs = DMatrix::zeros(3 * n, 3 * n);
    for (col, &k) in order.iter().enumerate() {
        let lambda = eig.eigenvalues[k];
        if lambda < -1e-10 * scale {
            return Err(HyqError::Unstable(format!("Hessian eigenvalue {lambda:.3e}: configuration is not a minimum")));
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        let weight = |a: usize| (0..n).map(|j| v[3 * j + a].powi(2)).sum::<f64>();
        let band = match (0..3).max_by(|&a, &b| weight(a).total_cmp(&weight(b))).unwrap() {
            0 => Band::RadialX,
            1 => Band::RadialY,
            _ => Band::Axial,
        };
        if let Some(&first) = v.iter().find(|c| c.abs() > 1e-6) {
            if first < 0.0 {
                v = -v;
            }
        }
        let participation = (0..n).map(|j| v[3 * j + band.axis()]).collect();
        vecs.set_column(col, &v);
        modes.push(Mode { band, omega: trap.omega[2] * lambda.max(0.0).sqrt(), participation });
    }
    Ok(ModeStructure { positions: eq.positions.clone(), modes, eigenvectors: vecs, hessian_asymmetry: asym })
}

pub fn mode_structure(trap: &TrapModel) -> Result<ModeStructure> {
    normal_modes(trap, &equilibrium_positions(trap)?)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BsPulse {
    /// rad/s
    pub omega_bs: f64,
    /// s
    pub t_bs: f64,
    /// Largest relative deviation of `eta_jm Omega_jm` from `Delta_bs / 2`.
    pub drive_deviation: f64,
}

impl BsPulse {
    pub fn drive_condition_ok(&self) -> bool {
        self.drive_deviation <= 0.2
    }

    /// Mixing angle after driving for `t` seconds.
    pub fn theta(&self, t: f64) -> f64 {
        self.omega_bs * t
    }
}

/// Two-tone beam splitter hosted on one ion. `b_m`, `b_n` are the ion's
/// participations in the two modes; Rabi frequencies and detuning in rad/s.
pub fn bs_pulse(b_m: f64, b_n: f64, rabi_m: f64, rabi_n: f64, detuning: f64, lamb_dicke: f64) -> Result<BsPulse> {
    if !(detuning.is_finite() && detuning > 0.0) {
        return Err(HyqError::InvalidParameter("beam-splitter detuning must be positive".into()));
    }
    let gm = lamb_dicke * b_m * rabi_m;
    let gn = lamb_dicke * b_n * rabi_n;
    let omega_bs = (gm * gn).abs() / (4.0 * detuning);
    if !(omega_bs.is_finite() && omega_bs > 0.0) {
        return Err(HyqError::Infeasible("ion does not couple to both modes; beam-splitter time is infinite".into()));
    }
    let half = detuning / 2.0;
    let drive_deviation = ((gm.abs() - half).abs() / half).max((gn.abs() - half).abs() / half);
    let p = BsPulse { omega_bs, t_bs: PI / (2.0 * omega_bs), drive_deviation };
    if !p.drive_condition_ok() {
        log::debug!("drive condition eta*Omega = Delta/2 off by {:.0}%", 100.0 * drive_deviation);
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlledDrive {
    Rotation,
    Squeeze,
}

/// Drive time reaching `theta` for a controlled rotation
/// (`theta = 4 g^2 t / Delta`) or controlled squeeze (`theta = 2 g^2 t / Delta`),
/// where `g = eta_jm Omega_jm`.
pub fn cr_cs_pulse(kind: ControlledDrive, theta: f64, eta_jm: f64, rabi: f64, detuning: f64) -> Result<f64> {
    let g2 = (eta_jm * rabi).powi(2);
    if !(g2.is_finite() && g2 > 0.0) {
        return Err(HyqError::Infeasible("zero coupling: drive time is infinite".into()));
    }
    if !(theta.is_finite() && theta >= 0.0 && detuning.is_finite() && detuning > 0.0) {
        return Err(HyqError::InvalidParameter("need theta >= 0 and detuning > 0".into()));
    }
    let prefactor = match kind {
        ControlledDrive::Rotation => 4.0,
        ControlledDrive::Squeeze => 2.0,
    };
    Ok(theta * detuning / (prefactor * g2))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSettings {
    /// Rabi frequency on every ion and mode, rad/s.
    pub rabi: f64,
    pub lamb_dicke: f64,
    /// Beam-splitter detuning, rad/s.
    pub detuning: f64,
}

impl Default for DriveSettings {
    fn default() -> Self {
        Self { rabi: 2.0 * PI * 4e3, lamb_dicke: 0.1, detuning: 2.0 * PI * 50.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairAssignment {
    /// Positions in the requested mode list.
    pub pair: (usize, usize),
    pub ion: usize,
    pub t_bs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetResult {
    pub size: usize,
    pub ions: Vec<usize>,
    pub max_time: f64,
    pub assignment: Vec<PairAssignment>,
}

const MAX_SUBSETS: u128 = 10_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    (0..k.min(n - k)).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Chooses, for every subset size, the control ions minimizing the slowest
/// nearest-neighbour beam splitter among `modes` (mode indices in coupling
/// order). Each pair is hosted on the subset member with the shortest time.
pub fn optimize_control_subset(
    structure: &ModeStructure,
    modes: &[usize],
    sizes: &[usize],
    drive: &DriveSettings,
) -> Result<Vec<SubsetResult>> {
    if modes.len() < 2 {
        return Err(HyqError::InvalidParameter("need at least two modes to couple".into()));
    }
    let n = structure.positions.len();
    for &m in modes {
        if m >= structure.modes.len() {
            return Err(HyqError::InvalidParameter(format!("mode {m} out of range")));
        }
    }
    let band = structure.modes[modes[0]].band;
    if modes.iter().any(|&m| structure.modes[m].band != band) {
        return Err(HyqError::InvalidParameter("modes must lie in one band".into()));
    }
    // times[pair][ion], infinite where the ion does not couple
    let pairs = modes.len() - 1;
    let times: Vec<Vec<f64>> = (0..pairs)
        .map(|p| {
            let (a, b) = (&structure.modes[modes[p]], &structure.modes[modes[p + 1]]);
            (0..n)
                .map(|j| {
                    bs_pulse(a.participation[j], b.participation[j], drive.rabi, drive.rabi, drive.detuning, drive.lamb_dicke)
                        .map_or(f64::INFINITY, |p| if p.t_bs.is_finite() && a.participation[j].abs() > 1e-9 && b.participation[j].abs() > 1e-9 { p.t_bs } else { f64::INFINITY })
                })
                .collect()
        })
        .collect();
    let worst = |ions: &[usize]| -> (f64, Vec<PairAssignment>) {
        let mut worst = 0.0f64;
        let assignment = (0..pairs)
            .map(|p| {
                let (ion, t) = ions
                    .iter()
                    .map(|&j| (j, times[p][j]))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .expect("non-empty subset");
                worst = worst.max(t);
                PairAssignment { pair: (p, p + 1), ion, t_bs: t }
            })
            .collect();
        (worst, assignment)
    };
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        if size == 0 || size > n {
            return Err(HyqError::InvalidParameter(format!("control subset size {size} not in 1..={n}")));
        }
        if binomial(n, size) > MAX_SUBSETS {
            return Err(HyqError::InvalidParameter(format!("{n} choose {size} subsets is too many to enumerate")));
        }
        let best = (0..n)
            .combinations(size)
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|ions| {
                let (t, a) = worst(&ions);
                (t, ions, a)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
            .expect("at least one subset");
        if !best.0.is_finite() {
            return Err(HyqError::Infeasible(format!("no {size}-ion subset couples every neighbouring pair")));
        }
        if best.0 > QUMODE_COHERENCE_S {
            warn!("{size} control ion(s): slowest beam splitter {:.3} ms exceeds the qumode coherence time", best.0 * 1e3);
        }
        out.push(SubsetResult { size, ions: best.1, max_time: best.0, assignment: best.2 });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn eight_ion_chain() -> TrapModel {
        TrapModel::yb171(8, [2.0, 2.5, 0.12]).unwrap()
    }

    #[test]
    fn single_and_two_ion_equilibria() {
        let t = TrapModel::yb171(1, [2.0, 2.5, 0.12]).unwrap();
        let eq = equilibrium_positions(&t).unwrap();
        assert_eq!(eq.positions, vec![[0.0; 3]]);

        let t = TrapModel::yb171(2, [2.0, 2.5, 0.12]).unwrap();
        let eq = equilibrium_positions(&t).unwrap();
        let k = t.charge * t.charge / (16.0 * PI * VACUUM_PERMITTIVITY * t.mass * t.omega[2].powi(2));
        let z = k.cbrt();
        assert_relative_eq!(eq.positions[1][2], z, max_relative = 1e-10);
        assert_relative_eq!(eq.positions[0][2], -z, max_relative = 1e-10);
        assert!(eq.positions.iter().all(|p| p[0] == 0.0 && p[1] == 0.0));
    }

    #[test]
    fn eight_ion_chain_is_linear_and_symmetric() {
        let eq = equilibrium_positions(&eight_ion_chain()).unwrap();
        assert!(eq.gradient_norm < 1e-9);
        for (a, b) in eq.scaled.iter().zip(eq.scaled.iter().rev()) {
            assert!((a[2] + b[2]).abs() < 1e-9);
            assert_eq!((a[0], a[1]), (0.0, 0.0));
        }
        assert!(eq.scaled.windows(2).all(|w| w[1][2] > w[0][2]));
    }

    #[test]
    fn mode_structure_landmarks() {
        let t = eight_ion_chain();
        let ms = mode_structure(&t).unwrap();
        assert_eq!(ms.count(Band::Axial), 8);
        assert_eq!(ms.count(Band::RadialX) + ms.count(Band::RadialY), 16);
        assert!(ms.orthonormality_error() < 1e-8);
        assert!(ms.hessian_asymmetry < 1e-12);
        // bands are gapped: every axial mode lies below every radial mode
        let top_axial = ms.modes.iter().filter(|m| m.band == Band::Axial).map(|m| m.omega).fold(0.0, f64::max);
        let low_radial = ms.modes.iter().filter(|m| m.band != Band::Axial).map(|m| m.omega).fold(f64::INFINITY, f64::min);
        assert!(top_axial < low_radial);

        let com_x = &ms.modes[ms.band_order(Band::RadialX)[0]];
        assert_relative_eq!(com_x.omega, t.omega[0], max_relative = 1e-9);
        for b in &com_x.participation {
            assert_relative_eq!(*b, 1.0 / 8f64.sqrt(), max_relative = 1e-8);
        }
        let ax = ms.band_order(Band::Axial);
        assert_relative_eq!(ms.modes[ax[0]].omega, t.omega[2], max_relative = 1e-9);
        assert_relative_eq!(ms.modes[ax[1]].omega / ms.modes[ax[0]].omega, 3f64.sqrt(), max_relative = 1e-9);
        let csv = ms.to_csv();
        assert_eq!(csv.lines().count(), 25);
    }

    #[test]
    fn beam_splitter_pulse_formulas() {
        let delta = 2.0 * PI * 1e3;
        // eta b Omega = Delta / 2 on both tones
        let p = bs_pulse(0.5, 0.5, delta / (2.0 * 0.1 * 0.5), delta / (2.0 * 0.1 * 0.5), delta, 0.1).unwrap();
        assert_relative_eq!(p.omega_bs, delta / 16.0, max_relative = 1e-12);
        assert!(p.drive_condition_ok());
        assert_relative_eq!(p.theta(p.t_bs), PI / 2.0, max_relative = 1e-12);
        let q = bs_pulse(0.25, 0.5, 1e4, 1e4, delta, 0.1).unwrap();
        let r = bs_pulse(0.5, 0.5, 1e4, 1e4, delta, 0.1).unwrap();
        assert_relative_eq!(q.t_bs, 2.0 * r.t_bs, max_relative = 1e-12);
        assert!(matches!(bs_pulse(0.0, 0.5, 1e4, 1e4, delta, 0.1), Err(HyqError::Infeasible(_))));
    }

    #[test]
    fn controlled_drive_times() {
        assert_eq!(cr_cs_pulse(ControlledDrive::Rotation, 0.0, 0.05, 1e4, 1e3).unwrap(), 0.0);
        let t1 = cr_cs_pulse(ControlledDrive::Rotation, 1.0, 0.05, 1e4, 1e3).unwrap();
        let t2 = cr_cs_pulse(ControlledDrive::Rotation, 1.0, 0.05, 1e4, 2e3).unwrap();
        assert_relative_eq!(t2, 2.0 * t1, max_relative = 1e-12);
        assert_relative_eq!(t1, 1e3 / (4.0 * (0.05f64 * 1e4).powi(2)), max_relative = 1e-12);
        let ts = cr_cs_pulse(ControlledDrive::Squeeze, 1.0, 0.05, 1e4, 1e3).unwrap();
        assert_relative_eq!(ts, 2.0 * t1, max_relative = 1e-12);
        assert!(cr_cs_pulse(ControlledDrive::Squeeze, 1.0, 0.0, 1e4, 1e3).is_err());
    }

    #[test]
    fn subset_search_properties() {
        let ms = mode_structure(&eight_ion_chain()).unwrap();
        let order = ms.band_order(Band::RadialX);
        let drive = DriveSettings::default();
        // one pair: best single ion is the per-pair minimum
        let two = &order[1..3];
        let r = optimize_control_subset(&ms, two, &[1], &drive).unwrap();
        let direct = (0..8)
            .map(|j| bs_pulse(ms.modes[two[0]].participation[j], ms.modes[two[1]].participation[j], drive.rabi, drive.rabi, drive.detuning, drive.lamb_dicke).unwrap().t_bs)
            .fold(f64::INFINITY, f64::min);
        assert_relative_eq!(r[0].max_time, direct, max_relative = 1e-12);

        let res = optimize_control_subset(&ms, &order[1..], &[1, 2, 3, 4], &drive).unwrap();
        assert!(res.windows(2).all(|w| w[1].max_time <= w[0].max_time));
        assert_eq!(res[1].ions.len(), 2);
        assert_eq!(res[1].assignment.len(), 6);
        assert!(optimize_control_subset(&ms, &order[1..], &[9], &drive).is_err());
    }

    #[test]
    fn subset_enumeration_is_bounded() {
        assert_eq!(binomial(8, 3), 56);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
        let big = TrapModel::yb171(40, [6.0, 6.5, 0.05]).unwrap();
        let ms = mode_structure(&big).unwrap();
        let modes = &ms.band_order(Band::RadialX)[1..4];
        assert!(optimize_control_subset(&ms, modes, &[20], &DriveSettings::default()).is_err());
    }
}
