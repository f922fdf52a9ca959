//! Variational ground-state preparation for the lattice model.
//!
//! A layer holds the gates of one Trotter step. Inside a layer the sidebands
//! and beam splitters come first and the on-site rotations last, so that the
//! rotations can set the relative phases the sidebands produce; the extension
//! block (Ry, D, S, BSB per site) that breaks excitation conservation is
//! prepended when requested.

use std::fmt::Write as _;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, Local};
use crate::error::{HyqError, Result};
use crate::gates::{GateKind, GateParams};
use crate::hilbert::{eigh, HybridState, RegisterLayout, SparseOperator, Subsystem, C64, DENSE_DIM_LIMIT};
use crate::jch::{
    build_hamiltonian_sparse, connected_blocks, excitations, expected_total_number, fmt_num,
    HamiltonianForm, JchParams,
};
use crate::optim::{bfgs, BfgsOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnsatzSpec {
    pub layers: usize,
    pub conserve_total_number: bool,
}

/// How a gate reads its entries of the parameter vector.
#[derive(Clone, Copy, Debug, PartialEq)]
enum ParamMap {
    /// `theta = Theta[k]`.
    Angle(usize),
    /// `z = Theta[k] e^{i phi}` with signed `Theta[k]`.
    Signed(usize, f64),
    /// `z = Theta[k] + i Theta[k+1]`.
    Cartesian(usize),
}

struct Slot {
    kind: GateKind,
    targets: Vec<usize>,
    cutoffs: Vec<usize>,
    map: ParamMap,
    sub: Subsystem,
}

impl Slot {
    fn params(&self, theta: &[f64]) -> GateParams {
        match self.map {
            ParamMap::Angle(k) => GateParams::angle(theta[k]),
            ParamMap::Signed(k, phi) => GateParams::polar(theta[k], phi),
            ParamMap::Cartesian(k) => GateParams::from_z(C64::new(theta[k], theta[k + 1])),
        }
    }

    fn local(&self, theta: &[f64]) -> Result<Local> {
        Local::new(self.kind, self.params(theta), &self.cutoffs)
    }
}

/// Parametrized layered circuit over the lattice register.
pub struct Ansatz {
    layout: RegisterLayout,
    spec: AnsatzSpec,
    slots: Vec<Slot>,
    /// `owner[k]` is the slot that reads parameter `k`.
    owner: Vec<usize>,
    per_layer: usize,
}

pub fn build_ansatz(spec: AnsatzSpec, params: &JchParams) -> Result<Ansatz> {
    if spec.layers == 0 {
        return Err(HyqError::InvalidParameter("ansatz needs at least one layer".into()));
    }
    params.validate()?;
    let layout = params.layout()?;
    let m = params.sites;
    let mut slots: Vec<Slot> = Vec::new();
    let mut owner = Vec::new();
    let mut next = 0usize;
    let mut add = |kind: GateKind, targets: Vec<usize>, width: usize, make: &dyn Fn(usize) -> ParamMap| -> Result<()> {
        let sub = Subsystem::new(&layout, &targets)?;
        let cutoffs = targets.iter().filter_map(|&t| layout.wires()[t].cutoff()).collect();
        owner.extend(std::iter::repeat_n(slots.len(), width));
        slots.push(Slot { kind, targets, cutoffs, map: make(next), sub });
        next += width;
        Ok(())
    };
    for _ in 0..spec.layers {
        if !spec.conserve_total_number {
            for n in 0..m {
                let (mw, qw) = (params.mode_wire(n), params.qubit_wire(n));
                add(GateKind::Ry, vec![qw], 1, &ParamMap::Angle)?;
                add(GateKind::Displacement, vec![mw], 2, &ParamMap::Cartesian)?;
                add(GateKind::Squeeze, vec![mw], 2, &ParamMap::Cartesian)?;
                add(GateKind::Bsb, vec![qw, mw], 2, &ParamMap::Cartesian)?;
            }
        }
        for n in 0..m {
            add(GateKind::Rsb, vec![params.qubit_wire(n), params.mode_wire(n)], 1, &|k| {
                ParamMap::Signed(k, std::f64::consts::PI)
            })?;
        }
        for parity in [0, 1] {
            for n in (parity..m.saturating_sub(1)).step_by(2) {
                add(GateKind::BeamSplitter, vec![params.mode_wire(n), params.mode_wire(n + 1)], 1, &|k| {
                    ParamMap::Signed(k, std::f64::consts::FRAC_PI_2)
                })?;
            }
        }
        for n in 0..m {
            add(GateKind::ModeRotation, vec![params.mode_wire(n)], 1, &ParamMap::Angle)?;
            add(GateKind::Rz, vec![params.qubit_wire(n)], 1, &ParamMap::Angle)?;
        }
    }
    let per_layer = next / spec.layers;
    Ok(Ansatz { layout, spec, slots, owner, per_layer })
}

impl Ansatz {
    pub fn spec(&self) -> AnsatzSpec {
        self.spec
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn n_params(&self) -> usize {
        self.owner.len()
    }

    pub fn params_per_layer(&self) -> usize {
        self.per_layer
    }

    pub fn n_gates(&self) -> usize {
        self.slots.len()
    }

    /// Concrete circuit for a parameter vector.
    pub fn circuit(&self, theta: &[f64]) -> Result<Circuit> {
        self.check_len(theta)?;
        let mut c = Circuit::new(self.layout.clone());
        for s in &self.slots {
            c.push(s.kind, s.params(theta), &s.targets)?;
        }
        Ok(c)
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(HyqError::DimensionMismatch { expected: self.n_params(), found: theta.len() });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(HyqError::NonFinite("ansatz parameters".into()));
        }
        Ok(())
    }

    pub fn prepare(&self, init: &HybridState, theta: &[f64]) -> Result<HybridState> {
        self.check_len(theta)?;
        if init.layout() != &self.layout {
            return Err(HyqError::LayoutMismatch("initial state does not match the ansatz register".into()));
        }
        let mut psi = init.clone();
        for s in &self.slots {
            s.local(theta)?.apply(psi.amplitudes_mut(), &s.sub);
        }
        Ok(psi)
    }
}

/// Energy objective `<psi(Theta)|H|psi(Theta)>`.
pub struct Objective<'a> {
    pub ansatz: &'a Ansatz,
    pub h: &'a SparseOperator,
    pub init: &'a HybridState,
}

impl Objective<'_> {
    pub fn energy(&self, theta: &[f64]) -> Result<f64> {
        let psi = self.ansatz.prepare(self.init, theta)?;
        Ok(self.h.expectation_complex(&psi)?.re)
    }

    /// Central differences with step `h`; the state before each perturbed
    /// gate is taken from one cached forward pass.
    pub fn gradient(&self, theta: &[f64], step: f64) -> Result<Vec<f64>> {
        let a = self.ansatz;
        a.check_len(theta)?;
        let locals = a.slots.iter().map(|s| s.local(theta)).collect::<Result<Vec<_>>>()?;
        let mut prefix = Vec::with_capacity(a.slots.len());
        let mut psi = self.init.amplitudes().to_vec();
        for (s, l) in a.slots.iter().zip(&locals) {
            prefix.push(psi.clone());
            l.apply(&mut psi, &s.sub);
        }
        let mut grad = vec![0.0; theta.len()];
        let mut shifted = theta.to_vec();
        for k in 0..theta.len() {
            let j = a.owner[k];
            let mut e = [0.0; 2];
            for (slot, sign) in e.iter_mut().zip([1.0, -1.0]) {
                shifted[k] = theta[k] + sign * step;
                let mut v = prefix[j].clone();
                a.slots[j].local(&shifted)?.apply(&mut v, &a.slots[j].sub);
                for (s, l) in a.slots[j + 1..].iter().zip(&locals[j + 1..]) {
                    l.apply(&mut v, &s.sub);
                }
                let st = HybridState::from_amplitudes(&a.layout, v)?;
                *slot = self.h.expectation_complex(&st)?.re;
            }
            shifted[k] = theta[k];
            grad[k] = (e[0] - e[1]) / (2.0 * step);
        }
        Ok(grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizeResult {
    pub theta: Vec<f64>,
    pub energy: f64,
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeOptions {
    pub fd_step: f64,
    pub bfgs: BfgsOptions,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { fd_step: 1e-6, bfgs: BfgsOptions::default() }
    }
}

pub fn optimize(
    ansatz: &Ansatz,
    h: &SparseOperator,
    init: &HybridState,
    theta0: &[f64],
    opts: &OptimizeOptions,
) -> Result<OptimizeResult> {
    let obj = Objective { ansatz, h, init };
    obj.energy(theta0)?;
    let mut err: Option<HyqError> = None;
    let mut f = |x: &[f64]| obj.energy(x).unwrap_or(f64::NAN);
    let mut g = |x: &[f64]| match obj.gradient(x, opts.fd_step) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            vec![f64::NAN; x.len()]
        }
    };
    let m = bfgs(&mut f, &mut g, theta0, &opts.bfgs);
    if let Some(e) = err {
        return Err(e);
    }
    let m = m?;
    Ok(OptimizeResult { theta: m.x, energy: m.f, trace: m.trace, iterations: m.iterations, converged: m.converged })
}

/// Ground energy, an orthonormal basis of the (possibly degenerate) ground
/// space, and the gap to the next level.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundSpaceResult {
    pub e0: f64,
    pub basis: Vec<HybridState>,
    pub gap: f64,
    pub sector: Option<usize>,
    /// `<N_tot>` averaged over the ground space.
    pub n_tot: f64,
}

impl GroundSpaceResult {
    pub fn degeneracy(&self) -> usize {
        self.basis.len()
    }
}

pub fn default_degeneracy_tol(e0: f64) -> f64 {
    1e-9 * e0.abs().max(1.0)
}

/// Exact diagonalization, block by block. When `H` commutes with the
/// excitation number the blocks are the number sectors, so every eigenvector
/// is sector-pure; `sector` restricts the search to one of them.
pub fn exact_ground_space(h: &SparseOperator, sector: Option<usize>, degeneracy_tol: Option<f64>) -> Result<GroundSpaceResult> {
    let layout = h.layout().clone();
    let dim = layout.dim();
    if dim > DENSE_DIM_LIMIT {
        return Err(HyqError::DimensionOverflow { dim, limit: DENSE_DIM_LIMIT });
    }
    let labels: Vec<usize> = (0..dim).map(|i| excitations(&layout, i)).collect();
    let conserving = h.max_cross_coupling(&labels) < 1e-12;
    let blocks: Vec<Vec<usize>> = if conserving {
        let mut by: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for (i, &n) in labels.iter().enumerate() {
            by.entry(n).or_default().push(i);
        }
        match sector {
            Some(n) => vec![by.remove(&n).ok_or_else(|| HyqError::InvalidParameter(format!("no basis states with N_tot = {n}")))?],
            None => by.into_values().collect(),
        }
    } else {
        if sector.is_some() {
            return Err(HyqError::InvalidParameter("Hamiltonian does not conserve N_tot; sectors undefined".into()));
        }
        connected_blocks(h)
    };

    let mut levels: Vec<(f64, usize, usize)> = Vec::new();
    let mut decomps = Vec::with_capacity(blocks.len());
    for (b, idx) in blocks.iter().enumerate() {
        let (vals, vecs) = eigh(&h.block(idx));
        levels.extend(vals.iter().enumerate().map(|(k, &e)| (e, b, k)));
        decomps.push(vecs);
    }
    levels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let e0 = levels[0].0;
    let tol = degeneracy_tol.unwrap_or_else(|| default_degeneracy_tol(e0));
    let mut basis = Vec::new();
    let mut gap = f64::INFINITY;
    for &(e, b, k) in &levels {
        if e - e0 < tol {
            let mut amps = vec![C64::new(0.0, 0.0); dim];
            for (r, &i) in blocks[b].iter().enumerate() {
                amps[i] = decomps[b][(r, k)];
            }
            basis.push(HybridState::from_amplitudes(&layout, amps)?);
        } else {
            gap = e - e0;
            break;
        }
    }
    if !gap.is_finite() {
        gap = 0.0;
    }
    let n_tot = basis.iter().map(expected_total_number).sum::<f64>() / basis.len() as f64;
    Ok(GroundSpaceResult { e0, basis, gap, sector, n_tot })
}

/// `F = sum_i |<phi_i|psi>|^2`.
pub fn fidelity(psi: &HybridState, target: &GroundSpaceResult) -> Result<f64> {
    let n = psi.norm();
    if (n - 1.0).abs() > 1e-8 {
        return Err(HyqError::NotNormalized(n - 1.0));
    }
    let mut f = 0.0;
    for phi in &target.basis {
        f += phi.inner(psi)?.norm_sqr();
    }
    Ok(f.min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum SweepMode {
    Variable,
    Fixed { n_tot: usize },
}

impl SweepMode {
    pub fn default_target(self) -> f64 {
        match self {
            SweepMode::Variable => 0.90,
            SweepMode::Fixed { .. } => 0.99,
        }
    }

    pub fn sector(self) -> Option<usize> {
        match self {
            SweepMode::Variable => None,
            SweepMode::Fixed { n_tot } => Some(n_tot),
        }
    }

    pub fn conserving(self) -> bool {
        matches!(self, SweepMode::Fixed { .. })
    }

    pub fn label(self) -> String {
        match self {
            SweepMode::Variable => "variable".into(),
            SweepMode::Fixed { n_tot } => format!("fixed{n_tot}"),
        }
    }
}

/// Reference state: the variable mode starts every wire at index 0 (modes in
/// vacuum, qubits up); a fixed sector raises the first `n` qubits and puts
/// any excess excitations in the first mode.
pub fn initial_state(params: &JchParams, mode: SweepMode) -> Result<HybridState> {
    let layout = params.layout()?;
    let m = params.sites;
    let mut digits = vec![0usize; 2 * m];
    if let SweepMode::Fixed { n_tot } = mode {
        let up = n_tot.min(m);
        for q in 0..m {
            digits[m + q] = usize::from(q >= up);
        }
        let rest = n_tot - up;
        if rest > params.cutoff {
            return Err(HyqError::InvalidParameter(format!("N_tot = {n_tot} does not fit the register")));
        }
        digits[0] = rest;
    }
    HybridState::basis(&layout, &digits)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VqeOptions {
    pub max_layers: usize,
    pub restarts: usize,
    pub target_fidelity: Option<f64>,
    pub init_scale: f64,
    pub optimize: OptimizeOptions,
}

impl Default for VqeOptions {
    fn default() -> Self {
        Self { max_layers: 10, restarts: 5, target_fidelity: None, init_scale: 0.1, optimize: OptimizeOptions::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub delta: f64,
    pub kappa: f64,
    pub fidelity: f64,
    pub energy: f64,
    pub gap: f64,
    pub n_tot: f64,
    pub layers: usize,
    pub iterations: usize,
    pub seed: u64,
    pub exact_energy: f64,
    pub n_tot_exact: f64,
    pub degeneracy: usize,
    pub status: String,
}

impl CellResult {
    pub const CSV_HEADER: &'static str =
        "delta,kappa,fidelity,energy,gap,n_tot,layers,iterations,seed,exact_energy,n_tot_exact,degeneracy,status";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_num(self.delta),
            fmt_num(self.kappa),
            fmt_num(self.fidelity),
            fmt_num(self.energy),
            fmt_num(self.gap),
            fmt_num(self.n_tot),
            self.layers,
            self.iterations,
            self.seed,
            fmt_num(self.exact_energy),
            fmt_num(self.n_tot_exact),
            self.degeneracy,
            self.status
        )
    }

    fn failed(params: &JchParams, seed: u64, e: &HyqError) -> Self {
        Self {
            delta: params.delta(),
            kappa: params.kappa,
            fidelity: f64::NAN,
            energy: f64::NAN,
            gap: f64::NAN,
            n_tot: f64::NAN,
            layers: 0,
            iterations: 0,
            seed,
            exact_energy: f64::NAN,
            n_tot_exact: f64::NAN,
            degeneracy: 0,
            status: format!("error: {e}").replace(',', ";"),
        }
    }
}

pub fn results_csv(rows: &[CellResult]) -> String {
    let mut s = String::from(CellResult::CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv_row());
    }
    s
}

fn random_params(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
}

/// Layer escalation for one parameter point: layers grow from 1 until the
/// fidelity target is met; each layer count tries a warm start from the
/// previous optimum, then fresh random starts. Among restarts the lowest
/// energy wins.
pub fn solve_cell(params: &JchParams, mode: SweepMode, opts: &VqeOptions, seed: u64) -> CellResult {
    match solve_cell_inner(params, mode, opts, seed) {
        Ok(r) => r,
        Err(e) => CellResult::failed(params, seed, &e),
    }
}

fn solve_cell_inner(params: &JchParams, mode: SweepMode, opts: &VqeOptions, seed: u64) -> Result<CellResult> {
    let h = build_hamiltonian_sparse(params, HamiltonianForm::Ladder)?;
    let ground = exact_ground_space(&h, mode.sector(), None)?;
    let init = initial_state(params, mode)?;
    let target = opts.target_fidelity.unwrap_or_else(|| mode.default_target());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut iterations = 0;
    let mut prev: Vec<f64> = Vec::new();
    let mut best: Option<(f64, f64, HybridState, usize)> = None;

    for layers in 1..=opts.max_layers.max(1) {
        let ansatz = build_ansatz(AnsatzSpec { layers, conserve_total_number: mode.conserving() }, params)?;
        let mut layer_best: Option<(OptimizeResult, f64, HybridState)> = None;
        for r in 0..opts.restarts.max(1) {
            let theta0 = if r == 0 {
                let mut t = prev.clone();
                t.extend(random_params(&mut rng, ansatz.n_params() - prev.len(), opts.init_scale));
                t
            } else {
                random_params(&mut rng, ansatz.n_params(), opts.init_scale)
            };
            let res = optimize(&ansatz, &h, &init, &theta0, &opts.optimize)?;
            iterations += res.iterations;
            let psi = ansatz.prepare(&init, &res.theta)?;
            let f = fidelity(&psi, &ground)?;
            debug!("delta={} kappa={} L={layers} restart={r}: E={} F={f}", params.delta(), params.kappa, res.energy);
            let better = layer_best.as_ref().is_none_or(|(b, _, _)| res.energy < b.energy);
            if better {
                layer_best = Some((res, f, psi));
            }
            if layer_best.as_ref().is_some_and(|(_, f, _)| *f >= target) {
                break;
            }
        }
        let (res, f, psi) = layer_best.expect("at least one restart");
        prev = res.theta.clone();
        let replace = best.as_ref().is_none_or(|(bf, _, _, _)| f > *bf);
        if replace {
            best = Some((f, res.energy, psi, layers));
        }
        if f >= target {
            break;
        }
    }
    let (f, energy, psi, layers) = best.expect("at least one layer");
    let mut status = if f >= target { "ok".to_string() } else { "below_target".to_string() };
    if energy < ground.e0 - 1e-9 {
        status = "variational_bound_violated".into();
    }
    Ok(CellResult {
        delta: params.delta(),
        kappa: params.kappa,
        fidelity: f,
        energy,
        gap: ground.gap,
        n_tot: expected_total_number(&psi),
        layers,
        iterations,
        seed,
        exact_energy: ground.e0,
        n_tot_exact: ground.n_tot,
        degeneracy: ground.degeneracy(),
        status,
    })
}

/// Parameter grid: every (delta, kappa) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub deltas: Vec<f64>,
    pub kappas: Vec<f64>,
}

impl SweepGrid {
    /// Inclusive uniform ranges.
    pub fn uniform(delta: (f64, f64), delta_step: f64, kappa: (f64, f64), kappa_step: f64) -> Result<Self> {
        Ok(Self { deltas: uniform_range(delta.0, delta.1, delta_step)?, kappas: uniform_range(kappa.0, kappa.1, kappa_step)? })
    }

    pub fn cells(&self) -> Vec<(f64, f64)> {
        self.deltas.iter().flat_map(|&d| self.kappas.iter().map(move |&k| (d, k))).collect()
    }
}

pub fn uniform_range(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(lo.is_finite() && hi.is_finite() && step.is_finite()) || hi < lo {
        return Err(HyqError::InvalidParameter("grid bounds must be finite with lo <= hi".into()));
    }
    if lo == hi {
        return Ok(vec![lo]);
    }
    if step <= 0.0 {
        return Err(HyqError::InvalidParameter("grid step must be positive".into()));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(HyqError::InvalidParameter("grid too large".into()));
    }
    // integer multiples avoid accumulated drift
    Ok((0..=n).map(|k| lo + k as f64 * step).collect())
}

/// Seed for cell `index`, independent of scheduling.
pub fn cell_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Independent cells run in parallel; the output order follows the grid.
pub fn sweep(grid: &SweepGrid, base: &JchParams, mode: SweepMode, opts: &VqeOptions, seed: u64) -> Vec<CellResult> {
    grid.cells()
        .into_par_iter()
        .enumerate()
        .map(|(i, (delta, kappa))| {
            let s = cell_seed(seed, i);
            match JchParams::with_detuning(base.sites, base.omega_c, delta, kappa, base.eta, base.cutoff) {
                Ok(p) => solve_cell(&p, mode, opts, s),
                Err(e) => CellResult::failed(&JchParams { kappa, ..*base }, s, &e),
            }
        })
        .collect()
}

/// Exact-diagonalization gap only (no optimization), per cell.
pub fn gap_scan(grid: &SweepGrid, base: &JchParams, sector: Option<usize>) -> Result<Vec<(f64, f64, f64)>> {
    grid.cells()
        .into_par_iter()
        .map(|(delta, kappa)| {
            let p = JchParams::with_detuning(base.sites, base.omega_c, delta, kappa, base.eta, base.cutoff)?;
            let h = build_hamiltonian_sparse(&p, HamiltonianForm::Ladder)?;
            Ok((delta, kappa, exact_ground_space(&h, sector, None)?.gap))
        })
        .collect()
}
