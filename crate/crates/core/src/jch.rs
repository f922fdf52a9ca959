//! Jaynes-Cummings-Hubbard lattice: Hamiltonian, excitation counting,
//! Trotter circuits, exact propagation and time-series records.
//!
//! Register layout for `M` sites: wires `0..M` are the qumodes, wires
//! `M..2M` the qubits, so site `n` pairs mode wire `n` with qubit wire `M+n`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::circuit::Circuit;
use crate::cv::{qubit_register_entropy, EntropyMethod};
use crate::error::{HyqError, Result};
use crate::gates::{GateKind, GateParams};
use crate::hilbert::{
    eigh, ladder_word_matrix, pauli, quadrature_matrices, HybridState, Ladd, Operator,
    OperatorSum, RegisterLayout, SparseOperator, WireSpec, C64, DENSE_DIM_LIMIT,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JchParams {
    pub sites: usize,
    pub omega_c: f64,
    pub omega_a: f64,
    pub kappa: f64,
    pub eta: f64,
    pub cutoff: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HamiltonianForm {
    /// Raising/lowering operators.
    Ladder,
    /// Pauli, quadrature and number operators.
    Quadrature,
}

impl JchParams {
    /// Parametrized by detuning `delta = omega_c - omega_a`.
    pub fn with_detuning(sites: usize, omega_c: f64, delta: f64, kappa: f64, eta: f64, cutoff: usize) -> Result<Self> {
        let p = Self { sites, omega_c, omega_a: omega_c - delta, kappa, eta, cutoff };
        p.validate()?;
        Ok(p)
    }

    pub fn delta(&self) -> f64 {
        self.omega_c - self.omega_a
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(HyqError::InvalidParameter("at least one site required".into()));
        }
        if self.cutoff == 0 {
            return Err(HyqError::InvalidCutoff(0));
        }
        for (name, v) in [("omega_c", self.omega_c), ("omega_a", self.omega_a), ("kappa", self.kappa), ("eta", self.eta)] {
            if !v.is_finite() {
                return Err(HyqError::InvalidParameter(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<RegisterLayout> {
        jch_layout(self.sites, self.cutoff)
    }

    pub fn mode_wire(&self, site: usize) -> usize {
        site
    }

    pub fn qubit_wire(&self, site: usize) -> usize {
        self.sites + site
    }
}

pub fn jch_layout(sites: usize, cutoff: usize) -> Result<RegisterLayout> {
    let mut wires = vec![WireSpec::qumode(cutoff)?; sites];
    wires.extend(std::iter::repeat_n(WireSpec::Qubit, sites));
    RegisterLayout::new(wires)
}

/// Product basis state from per-site mode occupations and a qubit string
/// of `u` (up, excited) / `d` (down).
pub fn product_state(params: &JchParams, modes: &[usize], qubits: &str) -> Result<HybridState> {
    let layout = params.layout()?;
    let m = params.sites;
    if modes.len() != m || qubits.chars().count() != m {
        return Err(HyqError::InvalidParameter(format!(
            "initial state needs {m} mode occupations and {m} qubit labels"
        )));
    }
    let mut digits = modes.to_vec();
    for ch in qubits.chars() {
        digits.push(match ch {
            'u' | 'U' | '↑' | '0' => 0,
            'd' | 'D' | '↓' | '1' => 1,
            other => return Err(HyqError::InvalidParameter(format!("qubit label {other:?} is not u/d"))),
        });
    }
    HybridState::basis(&layout, &digits)
}

fn qubit_number() -> DMatrix<C64> {
    (pauli::identity() + pauli::z()) * C64::new(0.5, 0.0)
}

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Hamiltonian in factored form. `normal_order` rewrites `a a^dagger` as
/// `a^dagger a + 1` in every ladder word; the lattice Hamiltonian has no such
/// product, so both settings give the same operator.
pub fn hamiltonian_terms(params: &JchParams, form: HamiltonianForm, normal_order: bool) -> Result<OperatorSum> {
    params.validate()?;
    let layout = params.layout()?;
    let (m, cut) = (params.sites, params.cutoff);
    let mut h = OperatorSum::new(&layout);
    let num = ladder_word_matrix(&[Ladd::Raise, Ladd::Lower], cut, normal_order)?;
    match form {
        HamiltonianForm::Ladder => {
            let a = ladder_word_matrix(&[Ladd::Lower], cut, normal_order)?;
            let ad = ladder_word_matrix(&[Ladd::Raise], cut, normal_order)?;
            for n in 0..m {
                let (mw, qw) = (params.mode_wire(n), params.qubit_wire(n));
                h.push(c(params.omega_c), vec![(mw, num.clone())])?;
                h.push(c(params.omega_a), vec![(qw, pauli::raising() * pauli::lowering())])?;
                if params.eta != 0.0 {
                    h.push(c(params.eta), vec![(mw, a.clone()), (qw, pauli::raising())])?;
                    h.push(c(params.eta), vec![(mw, ad.clone()), (qw, pauli::lowering())])?;
                }
            }
            if params.kappa != 0.0 {
                for n in 0..m.saturating_sub(1) {
                    let (l, r) = (params.mode_wire(n), params.mode_wire(n + 1));
                    h.push(c(-params.kappa), vec![(r, ad.clone()), (l, a.clone())])?;
                    h.push(c(-params.kappa), vec![(l, ad.clone()), (r, a.clone())])?;
                }
            }
        }
        HamiltonianForm::Quadrature => {
            let (x, p) = quadrature_matrices(cut);
            for n in 0..m {
                let (mw, qw) = (params.mode_wire(n), params.qubit_wire(n));
                h.push(c(params.omega_c), vec![(mw, num.clone())])?;
                h.push(c(params.omega_a), vec![(qw, qubit_number())])?;
                if params.eta != 0.0 {
                    let g = params.eta * FRAC_1_SQRT_2;
                    h.push(c(g), vec![(qw, pauli::x()), (mw, x.clone())])?;
                    h.push(c(-g), vec![(qw, pauli::y()), (mw, p.clone())])?;
                }
            }
            if params.kappa != 0.0 {
                for n in 0..m.saturating_sub(1) {
                    let (l, r) = (params.mode_wire(n), params.mode_wire(n + 1));
                    h.push(c(-params.kappa), vec![(r, x.clone()), (l, x.clone())])?;
                    h.push(c(-params.kappa), vec![(r, p.clone()), (l, p.clone())])?;
                }
            }
        }
    }
    Ok(h)
}

/// Dense Hamiltonian; errors above the dense dimension limit.
pub fn build_hamiltonian(params: &JchParams, form: HamiltonianForm) -> Result<Operator> {
    hamiltonian_terms(params, form, false)?.to_operator()
}

pub fn build_hamiltonian_sparse(params: &JchParams, form: HamiltonianForm) -> Result<SparseOperator> {
    Ok(hamiltonian_terms(params, form, false)?.to_sparse())
}

/// Excitation count of a basis index: qumode occupations plus qubits in `|up>`.
pub fn excitations(layout: &RegisterLayout, index: usize) -> usize {
    layout
        .digits(index)
        .iter()
        .zip(layout.wires())
        .map(|(&d, w)| if w.is_qubit() { usize::from(d == 0) } else { d })
        .sum()
}

pub fn total_number_diagonal(layout: &RegisterLayout) -> Vec<f64> {
    (0..layout.dim()).map(|i| excitations(layout, i) as f64).collect()
}

pub fn total_number_operator(layout: &RegisterLayout) -> Result<Operator> {
    if layout.dim() > DENSE_DIM_LIMIT {
        return Err(HyqError::DimensionOverflow { dim: layout.dim(), limit: DENSE_DIM_LIMIT });
    }
    let diag: Vec<C64> = total_number_diagonal(layout).into_iter().map(c).collect();
    Operator::from_diagonal(layout, &diag)
}

/// Basis indices grouped by excitation number.
pub fn number_sectors(layout: &RegisterLayout) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..layout.dim() {
        out.entry(excitations(layout, i)).or_default().push(i);
    }
    out
}

pub fn expected_total_number(state: &HybridState) -> f64 {
    let layout = state.layout();
    state
        .amplitudes()
        .iter()
        .enumerate()
        .map(|(i, a)| a.norm_sqr() * excitations(layout, i) as f64)
        .sum()
}

/// One first-order step of `exp(-i dt H)`: on-site rotations, sidebands,
/// then beam splitters on even and odd bonds. The qubit energy's identity
/// part is carried as a global phase.
pub fn trotter_step(params: &JchParams, dt: f64) -> Result<Circuit> {
    params.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(HyqError::InvalidParameter("dt must be positive".into()));
    }
    let m = params.sites;
    let mut circ = Circuit::new(params.layout()?);
    for n in 0..m {
        circ.push(GateKind::ModeRotation, GateParams::angle(-params.omega_c * dt), &[params.mode_wire(n)])?;
        circ.push(GateKind::Rz, GateParams::angle(-params.omega_a * dt), &[params.qubit_wire(n)])?;
    }
    circ.add_global_phase(-0.5 * params.omega_a * dt * m as f64);
    for n in 0..m {
        circ.push(GateKind::Rsb, GateParams::polar(params.eta * dt, PI), &[params.qubit_wire(n), params.mode_wire(n)])?;
    }
    if params.kappa != 0.0 {
        // the hopping sign puts z = i kappa dt, i.e. phi = 5 pi / 2 mod 2 pi
        let bs = GateParams::polar(params.kappa * dt, 5.0 * FRAC_PI_2);
        for parity in [0, 1] {
            for n in (parity..m.saturating_sub(1)).step_by(2) {
                circ.push(GateKind::BeamSplitter, bs, &[params.mode_wire(n), params.mode_wire(n + 1)])?;
            }
        }
    }
    Ok(circ)
}

/// `exp(-i H t)` by eigendecomposition of each connected block of `H`.
pub struct Propagator {
    layout: RegisterLayout,
    blocks: Vec<(Vec<usize>, Vec<f64>, DMatrix<C64>)>,
}

impl Propagator {
    pub fn new(h: &SparseOperator) -> Result<Self> {
        let n = h.dim();
        if n > DENSE_DIM_LIMIT {
            return Err(HyqError::DimensionOverflow { dim: n, limit: DENSE_DIM_LIMIT });
        }
        let blocks = connected_blocks(h)
            .into_iter()
            .map(|idx| {
                let blk = h.block(&idx);
                let (vals, vecs) = eigh(&blk);
                (idx, vals, vecs)
            })
            .collect();
        Ok(Self { layout: h.layout().clone(), blocks })
    }

    pub fn evolve(&self, state: &HybridState, t: f64) -> Result<HybridState> {
        if state.layout() != &self.layout {
            return Err(HyqError::LayoutMismatch("state and Hamiltonian registers differ".into()));
        }
        let a = state.amplitudes();
        let mut out = vec![C64::new(0.0, 0.0); a.len()];
        for (idx, vals, vecs) in &self.blocks {
            let k = idx.len();
            let coeffs: Vec<C64> = (0..k)
                .map(|j| {
                    let proj: C64 = idx.iter().enumerate().map(|(r, &i)| vecs[(r, j)].conj() * a[i]).sum();
                    proj * C64::from_polar(1.0, -vals[j] * t)
                })
                .collect();
            for (r, &i) in idx.iter().enumerate() {
                out[i] = (0..k).map(|j| vecs[(r, j)] * coeffs[j]).sum();
            }
        }
        HybridState::from_amplitudes(&self.layout, out)
    }

    /// All eigenvalues, ascending, with the index list of their block.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.iter().flat_map(|(_, e, _)| e.iter().copied()).collect();
        v.sort_by(f64::total_cmp);
        v
    }
}

/// Connected components of the sparsity graph of `h`.
pub fn connected_blocks(h: &SparseOperator) -> Vec<Vec<usize>> {
    let n = h.dim();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for r in 0..n {
        for cidx in h.row_neighbors(r) {
            let (a, b) = (find(&mut parent, r), find(&mut parent, cidx));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

pub fn exact_evolve(state0: &HybridState, h: &SparseOperator, t: f64) -> Result<HybridState> {
    Propagator::new(h)?.evolve(state0, t)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub entropy: Option<EntropyMethod>,
}

/// Per-step observables of a trajectory. Row 0 is the initial state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub times: Vec<f64>,
    /// `mode_occupations[step][site]`.
    pub mode_occupations: Vec<Vec<f64>>,
    pub qubit_occupations: Vec<Vec<f64>>,
    pub n_tot: Vec<f64>,
    pub entropy: Option<Vec<f64>>,
}

impl EvolutionRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn mode_total(&self, step: usize) -> f64 {
        self.mode_occupations[step].iter().sum()
    }

    pub fn qubit_total(&self, step: usize) -> f64 {
        self.qubit_occupations[step].iter().sum()
    }

    fn push(&mut self, t: f64, state: &HybridState, sites: usize, opts: &EvolveOptions) -> Result<()> {
        let mut modes = Vec::with_capacity(sites);
        let mut qubits = Vec::with_capacity(sites);
        for n in 0..sites {
            let pm = state.marginal(&[n])?;
            modes.push(pm.iter().enumerate().map(|(k, p)| k as f64 * p).sum());
            qubits.push(state.marginal(&[sites + n])?[0]);
        }
        self.n_tot.push(modes.iter().chain(&qubits).sum());
        self.mode_occupations.push(modes);
        self.qubit_occupations.push(qubits);
        self.times.push(t);
        if let Some(method) = opts.entropy {
            self.entropy.get_or_insert_with(Vec::new).push(qubit_register_entropy(state, method)?);
        }
        Ok(())
    }

    /// Header `step,t,m_1..m_M,b_1..b_M,n_modes,n_qubits,n_tot[,entropy]`.
    pub fn to_csv(&self) -> String {
        let sites = self.mode_occupations.first().map_or(0, Vec::len);
        let mut s = String::from("step,t");
        for n in 1..=sites {
            let _ = write!(s, ",m_{n}");
        }
        for n in 1..=sites {
            let _ = write!(s, ",b_{n}");
        }
        s.push_str(",n_modes,n_qubits,n_tot");
        if self.entropy.is_some() {
            s.push_str(",entropy");
        }
        s.push('\n');
        for k in 0..self.len() {
            let _ = write!(s, "{k},{}", fmt_num(self.times[k]));
            for v in self.mode_occupations[k].iter().chain(&self.qubit_occupations[k]) {
                let _ = write!(s, ",{}", fmt_num(*v));
            }
            let _ = write!(s, ",{},{},{}", fmt_num(self.mode_total(k)), fmt_num(self.qubit_total(k)), fmt_num(self.n_tot[k]));
            if let Some(e) = &self.entropy {
                let _ = write!(s, ",{}", fmt_num(e[k]));
            }
            s.push('\n');
        }
        s
    }

    /// `step,t,entropy`, empty body when entropy was not recorded.
    pub fn entropy_csv(&self) -> String {
        let mut s = String::from("step,t,entropy\n");
        if let Some(e) = &self.entropy {
            for (k, (t, v)) in self.times.iter().zip(e).enumerate() {
                let _ = writeln!(s, "{k},{},{}", fmt_num(*t), fmt_num(*v));
            }
        }
        s
    }
}

/// 17 significant digits, locale-free.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Repeated Trotter steps from `state0`, recording observables after each.
pub fn evolve(state0: &HybridState, params: &JchParams, dt: f64, steps: usize, opts: &EvolveOptions) -> Result<EvolutionRecord> {
    let step = trotter_step(params, dt)?.compile()?;
    if state0.layout() != step.layout() {
        return Err(HyqError::LayoutMismatch("initial state does not match the lattice register".into()));
    }
    let mut rec = EvolutionRecord {
        times: Vec::with_capacity(steps + 1),
        mode_occupations: Vec::new(),
        qubit_occupations: Vec::new(),
        n_tot: Vec::new(),
        entropy: None,
    };
    let mut psi = state0.clone();
    rec.push(0.0, &psi, params.sites, opts)?;
    for k in 1..=steps {
        step.apply_in_place(&mut psi)?;
        rec.push(k as f64 * dt, &psi, params.sites, opts)?;
    }
    Ok(rec)
}

/// Same record as [`evolve`], propagated exactly instead of by Trotter steps.
pub fn evolve_exact(state0: &HybridState, params: &JchParams, dt: f64, steps: usize, opts: &EvolveOptions) -> Result<EvolutionRecord> {
    let dim = state0.layout().dim();
    if dim > DENSE_DIM_LIMIT {
        return Err(HyqError::DimensionOverflow { dim, limit: DENSE_DIM_LIMIT });
    }
    let h = build_hamiltonian_sparse(params, HamiltonianForm::Ladder)?;
    if state0.layout() != h.layout() {
        return Err(HyqError::LayoutMismatch("initial state does not match the lattice register".into()));
    }
    let prop = Propagator::new(&h)?;
    let mut rec = EvolutionRecord {
        times: Vec::with_capacity(steps + 1),
        mode_occupations: Vec::new(),
        qubit_occupations: Vec::new(),
        n_tot: Vec::new(),
        entropy: None,
    };
    for k in 0..=steps {
        let t = k as f64 * dt;
        rec.push(t, &prop.evolve(state0, t)?, params.sites, opts)?;
    }
    Ok(rec)
}

/// Final state after `steps` Trotter steps.
pub fn trotter_evolve(state0: &HybridState, params: &JchParams, dt: f64, steps: usize) -> Result<HybridState> {
    let step = trotter_step(params, dt)?.compile()?;
    let mut psi = state0.clone();
    for _ in 0..steps {
        step.apply_in_place(&mut psi)?;
    }
    Ok(psi)
}
