//! Truncated Fock and qubit operator algebra on a tensor-product register.
//!
//! Basis conventions used throughout the crate:
//!
//! * wire 0 is the leftmost (slowest-varying) tensor factor;
//! * a qubit has `|up>` at local index 0 and `|down>` at index 1, so that
//!   `sigma_z |up> = +|up>` and `sigma^+ sigma^- = (I + sigma_z) / 2` counts an
//!   excitation on `|up>`;
//! * a qumode with cutoff `L` keeps Fock states `|0>..|L>` (local dimension `L + 1`).

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HyqError, Result};

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Dense eigendecomposition limit shared by the exact oracles.
pub const DENSE_DIM_LIMIT: usize = 20_000;
/// Largest register (state-vector length) a layout may describe.
pub const STATE_DIM_LIMIT: usize = 1 << 27;

/// One wire of a register.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum WireSpec {
    Qubit,
    Qumode { cutoff: usize },
}

impl WireSpec {
    pub fn qumode(cutoff: usize) -> Result<Self> {
        if cutoff < 1 {
            return Err(HyqError::InvalidCutoff(cutoff));
        }
        Ok(WireSpec::Qumode { cutoff })
    }

    pub fn dim(&self) -> usize {
        match self {
            WireSpec::Qubit => 2,
            WireSpec::Qumode { cutoff } => cutoff + 1,
        }
    }

    pub fn is_qubit(&self) -> bool {
        matches!(self, WireSpec::Qubit)
    }

    pub fn cutoff(&self) -> Option<usize> {
        match self {
            WireSpec::Qubit => None,
            WireSpec::Qumode { cutoff } => Some(*cutoff),
        }
    }
}

/// Ordered list of wires defining the tensor-product basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    wires: Vec<WireSpec>,
    strides: Vec<usize>,
    dim: usize,
}

impl RegisterLayout {
    pub fn new(wires: Vec<WireSpec>) -> Result<Self> {
        if wires.is_empty() {
            return Err(HyqError::EmptyWireSet);
        }
        for w in &wires {
            if let WireSpec::Qumode { cutoff } = w {
                if *cutoff < 1 {
                    return Err(HyqError::InvalidCutoff(*cutoff));
                }
            }
        }
        let total = wires.iter().fold(1u128, |d, w| d.saturating_mul(w.dim() as u128));
        if total > STATE_DIM_LIMIT as u128 {
            let dim = usize::try_from(total).unwrap_or(usize::MAX);
            return Err(HyqError::DimensionOverflow { dim, limit: STATE_DIM_LIMIT });
        }
        let mut strides = vec![1usize; wires.len()];
        let mut dim = 1usize;
        for (k, w) in wires.iter().enumerate().rev() {
            strides[k] = dim;
            dim *= w.dim();
        }
        Ok(Self { wires, strides, dim })
    }

    pub fn qubits(n: usize) -> Result<Self> {
        Self::new(vec![WireSpec::Qubit; n])
    }

    pub fn wires(&self) -> &[WireSpec] {
        &self.wires
    }

    pub fn len(&self) -> usize {
        self.wires.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wires.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn wire(&self, w: usize) -> Result<WireSpec> {
        self.wires
            .get(w)
            .copied()
            .ok_or(HyqError::WireOutOfRange { wire: w, len: self.len() })
    }

    pub fn local_dim(&self, w: usize) -> usize {
        self.wires[w].dim()
    }

    pub fn stride(&self, w: usize) -> usize {
        self.strides[w]
    }

    /// Basis index of a list of per-wire values.
    pub fn index(&self, digits: &[usize]) -> Result<usize> {
        if digits.len() != self.len() {
            return Err(HyqError::DimensionMismatch { expected: self.len(), found: digits.len() });
        }
        let mut idx = 0;
        for (k, &d) in digits.iter().enumerate() {
            if d >= self.local_dim(k) {
                return Err(HyqError::InvalidParameter(format!(
                    "value {d} out of range on wire {k} (local dimension {})",
                    self.local_dim(k)
                )));
            }
            idx += d * self.strides[k];
        }
        Ok(idx)
    }

    pub fn digits(&self, index: usize) -> Vec<usize> {
        (0..self.len()).map(|k| self.digit(index, k)).collect()
    }

    #[inline]
    pub fn digit(&self, index: usize, wire: usize) -> usize {
        (index / self.strides[wire]) % self.wires[wire].dim()
    }

    pub fn qubit_wires(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.wires[k].is_qubit()).collect()
    }

    pub fn qumode_wires(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.wires[k].is_qubit()).collect()
    }

    /// Layout with one more wire appended on the right.
    pub fn with_wire(&self, wire: WireSpec) -> Result<Self> {
        let mut wires = self.wires.clone();
        wires.push(wire);
        Self::new(wires)
    }

    /// Layout of the given wires, in the given order.
    pub fn sub_layout(&self, targets: &[usize]) -> Result<Self> {
        self.check_targets(targets)?;
        Self::new(targets.iter().map(|&t| self.wires[t]).collect())
    }

    pub fn check_targets(&self, targets: &[usize]) -> Result<()> {
        if targets.is_empty() {
            return Err(HyqError::EmptyWireSet);
        }
        for (k, &t) in targets.iter().enumerate() {
            if t >= self.len() {
                return Err(HyqError::WireOutOfRange { wire: t, len: self.len() });
            }
            if targets[..k].contains(&t) {
                return Err(HyqError::DuplicateTarget(t));
            }
        }
        Ok(())
    }
}

/// Index bookkeeping for a subset of wires: `offsets` enumerates the target
/// wires' joint values (first target slowest), `bases` enumerates every basis
/// index whose target digits are all zero.
#[derive(Clone, Debug)]
pub(crate) struct Subsystem {
    pub offsets: Vec<usize>,
    pub bases: Vec<usize>,
}

impl Subsystem {
    pub fn new(layout: &RegisterLayout, targets: &[usize]) -> Result<Self> {
        layout.check_targets(targets)?;
        let mut offsets = vec![0usize];
        for &t in targets {
            let d = layout.local_dim(t);
            let s = layout.stride(t);
            offsets = offsets
                .iter()
                .flat_map(|&o| (0..d).map(move |v| o + v * s))
                .collect();
        }
        let mut bases = vec![0usize];
        for w in 0..layout.len() {
            if targets.contains(&w) {
                continue;
            }
            let d = layout.local_dim(w);
            let s = layout.stride(w);
            bases = bases
                .iter()
                .flat_map(|&o| (0..d).map(move |v| o + v * s))
                .collect();
        }
        Ok(Self { offsets, bases })
    }
}

/// Normalized amplitude vector over a register.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridState {
    layout: RegisterLayout,
    amps: Vec<C64>,
}

impl HybridState {
    /// Computational/Fock basis state from per-wire values.
    pub fn basis(layout: &RegisterLayout, digits: &[usize]) -> Result<Self> {
        let idx = layout.index(digits)?;
        let mut amps = vec![ZERO; layout.dim()];
        amps[idx] = ONE;
        Ok(Self { layout: layout.clone(), amps })
    }

    pub fn vacuum(layout: &RegisterLayout) -> Self {
        let mut amps = vec![ZERO; layout.dim()];
        amps[0] = ONE;
        Self { layout: layout.clone(), amps }
    }

    /// Wraps an amplitude vector, normalizing it. Zero vectors are rejected.
    pub fn from_amplitudes(layout: &RegisterLayout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(HyqError::DimensionMismatch { expected: layout.dim(), found: amps.len() });
        }
        let mut s = Self { layout: layout.clone(), amps };
        let n = s.norm();
        if !n.is_finite() || n < 1e-300 {
            return Err(HyqError::NotNormalized(n - 1.0));
        }
        s.normalize();
        Ok(s)
    }

    /// Tensor product of per-wire local states (each normalized independently).
    pub fn product(layout: &RegisterLayout, locals: &[Vec<C64>]) -> Result<Self> {
        if locals.len() != layout.len() {
            return Err(HyqError::DimensionMismatch { expected: layout.len(), found: locals.len() });
        }
        let mut amps = vec![ONE];
        for (k, local) in locals.iter().enumerate() {
            if local.len() != layout.local_dim(k) {
                return Err(HyqError::DimensionMismatch {
                    expected: layout.local_dim(k),
                    found: local.len(),
                });
            }
            amps = amps
                .iter()
                .flat_map(|&a| local.iter().map(move |&b| a * b))
                .collect();
        }
        Self::from_amplitudes(layout, amps)
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn normalize(&mut self) {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            self.amps.iter_mut().for_each(|a| *a *= inv);
        }
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &HybridState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(HyqError::LayoutMismatch("inner product of different layouts".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    /// Marginal distribution of the joint values of `wires` (first wire slowest).
    pub fn marginal(&self, wires: &[usize]) -> Result<Vec<f64>> {
        let sub = Subsystem::new(&self.layout, wires)?;
        Ok(sub
            .offsets
            .iter()
            .map(|&o| sub.bases.iter().map(|&b| self.amps[b + o].norm_sqr()).sum())
            .collect())
    }

    pub fn scale(&mut self, factor: C64) {
        self.amps.iter_mut().for_each(|a| *a *= factor);
    }

    /// `self ⊗ other`, with `other`'s wires appended on the right.
    pub fn tensor(&self, other: &HybridState) -> Result<HybridState> {
        let mut wires = self.layout.wires().to_vec();
        wires.extend_from_slice(other.layout.wires());
        let layout = RegisterLayout::new(wires)?;
        let amps = self
            .amps
            .iter()
            .flat_map(|&a| other.amps.iter().map(move |&b| a * b))
            .collect();
        Ok(HybridState { layout, amps })
    }

    /// Applies a local matrix acting on `targets` (in that order) in place.
    pub fn apply_local(&mut self, matrix: &DMatrix<C64>, targets: &[usize]) -> Result<()> {
        let sub = Subsystem::new(&self.layout, targets)?;
        let d = sub.offsets.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(HyqError::DimensionMismatch { expected: d, found: matrix.nrows() });
        }
        apply_with(&mut self.amps, matrix, &sub);
        Ok(())
    }

    /// Applies a diagonal local operator given by its diagonal.
    pub fn apply_local_diagonal(&mut self, diag: &[C64], targets: &[usize]) -> Result<()> {
        let sub = Subsystem::new(&self.layout, targets)?;
        if diag.len() != sub.offsets.len() {
            return Err(HyqError::DimensionMismatch { expected: sub.offsets.len(), found: diag.len() });
        }
        for &b in &sub.bases {
            for (k, &o) in sub.offsets.iter().enumerate() {
                self.amps[b + o] *= diag[k];
            }
        }
        Ok(())
    }
}

pub(crate) fn apply_with(amps: &mut [C64], matrix: &DMatrix<C64>, sub: &Subsystem) {
    let d = sub.offsets.len();
    let mut buf = vec![ZERO; d];
    let mut out = vec![ZERO; d];
    for &b in &sub.bases {
        for (k, &o) in sub.offsets.iter().enumerate() {
            buf[k] = amps[b + o];
        }
        for (r, slot) in out.iter_mut().enumerate() {
            let mut acc = ZERO;
            for (c, &v) in buf.iter().enumerate() {
                let m = matrix[(r, c)];
                if m != ZERO {
                    acc += m * v;
                }
            }
            *slot = acc;
        }
        for (k, &o) in sub.offsets.iter().enumerate() {
            amps[b + o] = out[k];
        }
    }
}

/// Dense complex matrix together with the register it acts on.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    layout: RegisterLayout,
    matrix: DMatrix<C64>,
}

impl Operator {
    pub fn new(layout: RegisterLayout, matrix: DMatrix<C64>) -> Result<Self> {
        if matrix.nrows() != layout.dim() || matrix.ncols() != layout.dim() {
            return Err(HyqError::DimensionMismatch { expected: layout.dim(), found: matrix.nrows() });
        }
        Ok(Self { layout, matrix })
    }

    /// Operator on a single wire.
    pub fn on_wire(wire: WireSpec, matrix: DMatrix<C64>) -> Result<Self> {
        Self::new(RegisterLayout::new(vec![wire])?, matrix)
    }

    pub fn identity(layout: &RegisterLayout) -> Self {
        Self { layout: layout.clone(), matrix: DMatrix::identity(layout.dim(), layout.dim()) }
    }

    pub fn zeros(layout: &RegisterLayout) -> Self {
        Self { layout: layout.clone(), matrix: DMatrix::zeros(layout.dim(), layout.dim()) }
    }

    pub fn from_diagonal(layout: &RegisterLayout, diag: &[C64]) -> Result<Self> {
        if diag.len() != layout.dim() {
            return Err(HyqError::DimensionMismatch { expected: layout.dim(), found: diag.len() });
        }
        let mut m = DMatrix::zeros(diag.len(), diag.len());
        for (k, &v) in diag.iter().enumerate() {
            m[(k, k)] = v;
        }
        Ok(Self { layout: layout.clone(), matrix: m })
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dagger(&self) -> Operator {
        Operator { layout: self.layout.clone(), matrix: self.matrix.adjoint() }
    }

    fn check_same(&self, other: &Operator) -> Result<()> {
        if self.layout != other.layout {
            return Err(HyqError::LayoutMismatch("operators act on different layouts".into()));
        }
        Ok(())
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator { layout: self.layout.clone(), matrix: &self.matrix * &other.matrix })
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator { layout: self.layout.clone(), matrix: &self.matrix + &other.matrix })
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        Ok(Operator { layout: self.layout.clone(), matrix: &self.matrix - &other.matrix })
    }

    pub fn scaled(&self, factor: C64) -> Operator {
        Operator { layout: self.layout.clone(), matrix: &self.matrix * factor }
    }

    pub fn add_scaled_assign(&mut self, other: &Operator, factor: C64) -> Result<()> {
        self.check_same(other)?;
        self.matrix.zip_apply(&other.matrix, |a, b| *a += b * factor);
        Ok(())
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Operator) -> Result<Operator> {
        self.check_same(other)?;
        let m = &self.matrix * &other.matrix - &other.matrix * &self.matrix;
        Ok(Operator { layout: self.layout.clone(), matrix: m })
    }

    pub fn max_norm(&self) -> f64 {
        max_abs(&self.matrix)
    }

    /// Largest entry of `|A - A^dagger|`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() < tol
    }

    /// Largest entry of `|U^dagger U - I|`.
    pub fn unitarity_error(&self) -> f64 {
        let n = self.dim();
        max_abs(&(self.matrix.adjoint() * &self.matrix - DMatrix::<C64>::identity(n, n)))
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|r| (0..n).all(|c| r == c || self.matrix[(r, c)].norm() <= tol))
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn apply(&self, state: &HybridState) -> Result<HybridState> {
        if &self.layout != state.layout() {
            return Err(HyqError::LayoutMismatch("operator and state layouts differ".into()));
        }
        let v = nalgebra::DVector::from_column_slice(state.amplitudes());
        let w = &self.matrix * v;
        Ok(HybridState { layout: self.layout.clone(), amps: w.as_slice().to_vec() })
    }

    /// `<psi|A|psi>` without any Hermiticity check.
    pub fn expectation_complex(&self, state: &HybridState) -> Result<C64> {
        let w = self.apply(state)?;
        state.inner(&w)
    }

    /// Compressed row form for repeated matrix-vector products.
    pub fn to_sparse(&self) -> SparseOperator {
        let n = self.dim();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for r in 0..n {
            for c in 0..n {
                let v = self.matrix[(r, c)];
                if v != ZERO {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseOperator { layout: self.layout.clone(), row_ptr, cols, vals }
    }
}

/// Row-compressed copy of an [`Operator`], used for hot expectation loops.
#[derive(Clone, Debug)]
pub struct SparseOperator {
    layout: RegisterLayout,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
}

impl SparseOperator {
    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn expectation_complex(&self, state: &HybridState) -> Result<C64> {
        if &self.layout != state.layout() {
            return Err(HyqError::LayoutMismatch("operator and state layouts differ".into()));
        }
        let a = state.amplitudes();
        let mut acc = ZERO;
        for r in 0..a.len() {
            let mut row = ZERO;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.vals[k] * a[self.cols[k]];
            }
            acc += a[r].conj() * row;
        }
        Ok(acc)
    }
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(layout: &RegisterLayout, mut triplets: Vec<(usize, usize, C64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let n = layout.dim();
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<C64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *vals.last_mut().expect("non-empty") += v;
                continue;
            }
            last = Some((r, c));
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator { layout: layout.clone(), row_ptr, cols, vals }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.dim())
            .map(|r| (self.row_ptr[r]..self.row_ptr[r + 1]).map(|k| self.vals[k] * x[self.cols[k]]).sum())
            .collect()
    }

    /// Column indices of the stored entries of row `r`.
    pub fn row_neighbors(&self, r: usize) -> impl Iterator<Item = usize> + '_ {
        self.cols[self.row_ptr[r]..self.row_ptr[r + 1]].iter().copied()
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.cols[range.clone()].binary_search(&c) {
            Ok(k) => self.vals[range.start + k],
            Err(_) => ZERO,
        }
    }

    /// Dense restriction to the basis indices `idx` (rows and columns).
    pub fn block(&self, idx: &[usize]) -> DMatrix<C64> {
        let pos: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let mut m = DMatrix::<C64>::zeros(idx.len(), idx.len());
        for (r, &i) in idx.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if let Some(&c) = pos.get(&self.cols[k]) {
                    m[(r, c)] = self.vals[k];
                }
            }
        }
        m
    }

    /// Largest `|H_rc|` with `r` and `c` in different groups of `label`.
    pub fn max_cross_coupling(&self, label: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.dim() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                if label[r] != label[self.cols[k]] {
                    worst = worst.max(self.vals[k].norm());
                }
            }
        }
        worst
    }

    pub fn to_operator(&self) -> Result<Operator> {
        let n = self.dim();
        if n > DENSE_DIM_LIMIT {
            return Err(HyqError::DimensionOverflow { dim: n, limit: DENSE_DIM_LIMIT });
        }
        let mut m = DMatrix::<C64>::zeros(n, n);
        for r in 0..n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                m[(r, self.cols[k])] = self.vals[k];
            }
        }
        Operator::new(self.layout.clone(), m)
    }
}

/// `(wire, matrix)` factors of one product term.
type Factors = Vec<(usize, DMatrix<C64>)>;

/// A weighted sum of products of single-wire matrices, kept in factored
/// form so large registers never need a dense matrix.
#[derive(Clone, Debug)]
pub struct OperatorSum {
    layout: RegisterLayout,
    terms: Vec<(C64, Factors)>,
}

impl OperatorSum {
    pub fn new(layout: &RegisterLayout) -> Self {
        Self { layout: layout.clone(), terms: Vec::new() }
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `coeff * prod_k factors[k]`; the factors must sit on distinct wires.
    pub fn push(&mut self, coeff: C64, factors: Vec<(usize, DMatrix<C64>)>) -> Result<()> {
        let wires: Vec<usize> = factors.iter().map(|(w, _)| *w).collect();
        if !wires.is_empty() {
            self.layout.check_targets(&wires)?;
        }
        for (w, m) in &factors {
            let d = self.layout.local_dim(*w);
            if m.nrows() != d || m.ncols() != d {
                return Err(HyqError::DimensionMismatch { expected: d, found: m.nrows() });
            }
        }
        self.terms.push((coeff, factors));
        Ok(())
    }

    /// Column-by-column expansion into compressed rows.
    pub fn to_sparse(&self) -> SparseOperator {
        let layout = &self.layout;
        let n = layout.dim();
        let mut triplets = Vec::new();
        let mut col: Vec<(usize, C64)> = Vec::new();
        let mut next: Vec<(usize, C64)> = Vec::new();
        for c in 0..n {
            for (coeff, factors) in &self.terms {
                col.clear();
                col.push((c, *coeff));
                for (w, m) in factors {
                    let (w, stride) = (*w, layout.stride(*w));
                    next.clear();
                    for &(idx, amp) in &col {
                        let v = layout.digit(idx, w);
                        let base = idx - v * stride;
                        for r in 0..m.nrows() {
                            let e = m[(r, v)];
                            if e != ZERO {
                                next.push((base + r * stride, amp * e));
                            }
                        }
                    }
                    std::mem::swap(&mut col, &mut next);
                    if col.is_empty() {
                        break;
                    }
                }
                for &(r, v) in &col {
                    triplets.push((r, c, v));
                }
            }
        }
        triplets.retain(|t| t.2 != ZERO);
        let mut sp = SparseOperator::from_triplets(layout, triplets);
        // drop exact cancellations
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(sp.cols.len());
        let mut vals = Vec::with_capacity(sp.vals.len());
        for r in 0..n {
            for k in sp.row_ptr[r]..sp.row_ptr[r + 1] {
                if sp.vals[k] != ZERO {
                    cols.push(sp.cols[k]);
                    vals.push(sp.vals[k]);
                }
            }
            row_ptr[r + 1] = cols.len();
        }
        sp.row_ptr = row_ptr;
        sp.cols = cols;
        sp.vals = vals;
        sp
    }

    pub fn to_operator(&self) -> Result<Operator> {
        let n = self.layout.dim();
        if n > DENSE_DIM_LIMIT {
            return Err(HyqError::DimensionOverflow { dim: n, limit: DENSE_DIM_LIMIT });
        }
        self.to_sparse().to_operator()
    }
}

pub(crate) fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.norm()))
}

/// Ladder operators of one truncated qumode.
#[derive(Clone, Debug)]
pub struct Ladder {
    pub a: Operator,
    pub a_dag: Operator,
    pub n: Operator,
}

/// `a`, `a^dagger` and `N = a^dagger a` for cutoff `cutoff`.
pub fn ladder_ops(cutoff: usize) -> Result<Ladder> {
    let wire = WireSpec::qumode(cutoff)?;
    let a = annihilation(cutoff);
    let a_dag = a.adjoint();
    let n = &a_dag * &a;
    Ok(Ladder {
        a: Operator::on_wire(wire, a)?,
        a_dag: Operator::on_wire(wire, a_dag)?,
        n: Operator::on_wire(wire, n)?,
    })
}

pub(crate) fn annihilation(cutoff: usize) -> DMatrix<C64> {
    let d = cutoff + 1;
    let mut a = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
    }
    a
}

pub(crate) fn number_diag(cutoff: usize) -> DMatrix<C64> {
    let d = cutoff + 1;
    DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(r as f64, 0.0) } else { ZERO })
}

/// Quadratures `X = (a^dagger + a)/sqrt 2` and `P = i (a^dagger - a)/sqrt 2`.
pub fn quadratures(cutoff: usize) -> Result<(Operator, Operator)> {
    let wire = WireSpec::qumode(cutoff)?;
    let (x, p) = quadrature_matrices(cutoff);
    Ok((Operator::on_wire(wire, x)?, Operator::on_wire(wire, p)?))
}

pub(crate) fn quadrature_matrices(cutoff: usize) -> (DMatrix<C64>, DMatrix<C64>) {
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let x = (&ad + &a) * C64::new(s, 0.0);
    let p = (&ad - &a) * C64::new(0.0, s);
    (x, p)
}

/// Single-qubit matrices in the `{|up>, |down>}` basis.
pub mod pauli {
    use super::*;

    pub fn identity() -> DMatrix<C64> {
        DMatrix::identity(2, 2)
    }
    pub fn x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }
    pub fn y() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }
    pub fn z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }
    /// `sigma^+ = |up><down|`.
    pub fn raising() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ZERO, ZERO])
    }
    /// `sigma^- = |down><up|`.
    pub fn lowering() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[ZERO, ZERO, ONE, ZERO])
    }
}

/// One factor of a ladder-operator word.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ladd {
    Raise,
    Lower,
}

/// Matrix of a product of ladder operators on one truncated mode, read left
/// to right as written. With `normal_order`, every `a a^dagger` is first
/// rewritten as `a^dagger a + 1` before truncation.
pub fn ladder_word_matrix(word: &[Ladd], cutoff: usize, normal_order: bool) -> Result<DMatrix<C64>> {
    WireSpec::qumode(cutoff)?;
    let d = cutoff + 1;
    let a = annihilation(cutoff);
    let ad = a.adjoint();
    let product = |w: &[Ladd]| {
        w.iter().fold(DMatrix::<C64>::identity(d, d), |acc, l| match l {
            Ladd::Raise => acc * &ad,
            Ladd::Lower => acc * &a,
        })
    };
    if !normal_order {
        return Ok(product(word));
    }
    let mut out = DMatrix::<C64>::zeros(d, d);
    for (coeff, w) in normal_ordered(word) {
        out += product(&w) * C64::new(coeff, 0.0);
    }
    Ok(out)
}

fn normal_ordered(word: &[Ladd]) -> Vec<(f64, Vec<Ladd>)> {
    let mut pending = vec![(1.0, word.to_vec())];
    let mut done: Vec<(f64, Vec<Ladd>)> = Vec::new();
    while let Some((c, w)) = pending.pop() {
        match w.windows(2).position(|p| p == [Ladd::Lower, Ladd::Raise]) {
            None => match done.iter_mut().find(|(_, d)| *d == w) {
                Some(entry) => entry.0 += c,
                None => done.push((c, w)),
            },
            Some(k) => {
                let mut swapped = w.clone();
                swapped.swap(k, k + 1);
                let mut contracted = w[..k].to_vec();
                contracted.extend_from_slice(&w[k + 2..]);
                pending.push((c, swapped));
                pending.push((c, contracted));
            }
        }
    }
    done
}

/// `op` tensored with identities on every wire of `layout` not in `targets`.
/// The rows of `op` enumerate the target wires in the order given.
pub fn embed(op: &Operator, targets: &[usize], layout: &RegisterLayout) -> Result<Operator> {
    let sub = Subsystem::new(layout, targets)?;
    check_local(op, targets, layout)?;
    let d = sub.offsets.len();
    let n = layout.dim();
    let mut m = DMatrix::<C64>::zeros(n, n);
    let local = op.matrix();
    for &b in &sub.bases {
        for r in 0..d {
            for c in 0..d {
                let v = local[(r, c)];
                if v != ZERO {
                    m[(b + sub.offsets[r], b + sub.offsets[c])] = v;
                }
            }
        }
    }
    Operator::new(layout.clone(), m)
}

fn check_local(op: &Operator, targets: &[usize], layout: &RegisterLayout) -> Result<()> {
    let expected: usize = targets.iter().map(|&t| layout.local_dim(t)).product();
    if op.dim() != expected {
        return Err(HyqError::DimensionMismatch { expected, found: op.dim() });
    }
    if op.layout().len() == targets.len() {
        for (k, &t) in targets.iter().enumerate() {
            if op.layout().local_dim(k) != layout.local_dim(t) {
                return Err(HyqError::DimensionMismatch {
                    expected: layout.local_dim(t),
                    found: op.layout().local_dim(k),
                });
            }
        }
    }
    Ok(())
}

/// Embeds a product of single-wire matrices, `factors[i]` acting on wire `wires[i]`.
pub fn embed_product(factors: &[(usize, DMatrix<C64>)], layout: &RegisterLayout) -> Result<Operator> {
    let targets: Vec<usize> = factors.iter().map(|(w, _)| *w).collect();
    let mut local = DMatrix::<C64>::identity(1, 1);
    for (_, m) in factors {
        local = local.kronecker(m);
    }
    let sub = layout.sub_layout(&targets)?;
    embed(&Operator::new(sub, local)?, &targets, layout)
}

/// Reduced density matrix of `keep` (in the order given) for a pure state.
pub fn partial_trace(state: &HybridState, keep: &[usize]) -> Result<Operator> {
    let layout = state.layout();
    let sub = Subsystem::new(layout, keep)?;
    let a = state.amplitudes();
    let d = sub.offsets.len();
    let mut rho = DMatrix::<C64>::zeros(d, d);
    for &b in &sub.bases {
        for r in 0..d {
            let ar = a[b + sub.offsets[r]];
            if ar == ZERO {
                continue;
            }
            for c in 0..d {
                rho[(r, c)] += ar * a[b + sub.offsets[c]].conj();
            }
        }
    }
    Operator::new(layout.sub_layout(keep)?, rho)
}

/// Reduced density matrix of `keep` for a density matrix on the full register.
pub fn partial_trace_density(rho: &Operator, keep: &[usize]) -> Result<Operator> {
    let layout = rho.layout();
    let sub = Subsystem::new(layout, keep)?;
    let d = sub.offsets.len();
    let m = rho.matrix();
    let mut out = DMatrix::<C64>::zeros(d, d);
    for &b in &sub.bases {
        for r in 0..d {
            for c in 0..d {
                out[(r, c)] += m[(b + sub.offsets[r], b + sub.offsets[c])];
            }
        }
    }
    Operator::new(layout.sub_layout(keep)?, out)
}

/// `|psi><psi|`.
pub fn density_matrix(state: &HybridState) -> Operator {
    let v = nalgebra::DVector::from_column_slice(state.amplitudes());
    let m = &v * v.adjoint();
    Operator { layout: state.layout().clone(), matrix: m }
}

/// Hermitian eigendecomposition with ascending eigenvalues; eigenvectors are
/// the columns of the returned matrix.
pub fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let n = m.nrows();
    let real = m.iter().all(|v| v.im == 0.0);
    let (vals, vecs): (Vec<f64>, DMatrix<C64>) = if real {
        let re = m.map(|v| v.re);
        let re = (&re + re.transpose()) * 0.5;
        let e = SymmetricEigen::new(re);
        (e.eigenvalues.as_slice().to_vec(), e.eigenvectors.map(|v| C64::new(v, 0.0)))
    } else {
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let e = SymmetricEigen::new(h);
        (e.eigenvalues.as_slice().to_vec(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted_vals = order.iter().map(|&k| vals[k]).collect();
    let sorted_vecs = DMatrix::from_fn(n, n, |r, c| vecs[(r, order[c])]);
    (sorted_vals, sorted_vecs)
}

/// `exp(G)` for anti-Hermitian `G = iH`, via the eigendecomposition of `H`.
pub fn expm_antihermitian(g: &Operator) -> Result<Operator> {
    let m = g.matrix();
    let scale = 1.0f64.max(max_abs(m));
    let err = max_abs(&(m + m.adjoint()));
    if err > 1e-10 * scale {
        return Err(HyqError::NotAntiHermitian(err));
    }
    Ok(Operator { layout: g.layout().clone(), matrix: expm_i_hermitian(&(m * (-I)), 1.0) })
}

/// `exp(i t H)` for Hermitian `H`. The matrix is split into the connected
/// components of its sparsity graph (number sectors for most gates) and each
/// block is exponentiated on its own.
pub(crate) fn expm_i_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let n = h.nrows();
    let blocks = sparsity_blocks(h);
    if blocks.len() == 1 {
        return expm_i_hermitian_dense(h, t);
    }
    let mut out = DMatrix::<C64>::zeros(n, n);
    for idx in blocks {
        let sub = DMatrix::from_fn(idx.len(), idx.len(), |r, c| h[(idx[r], idx[c])]);
        let e = expm_i_hermitian_dense(&sub, t);
        for (r, &ir) in idx.iter().enumerate() {
            for (c, &ic) in idx.iter().enumerate() {
                out[(ir, ic)] = e[(r, c)];
            }
        }
    }
    out
}

fn sparsity_blocks(h: &DMatrix<C64>) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for c in 0..n {
        for r in 0..c {
            if h[(r, c)] != ZERO || h[(c, r)] != ZERO {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    groups.into_values().collect()
}

fn expm_i_hermitian_dense(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(h);
    let n = vals.len();
    let mut scaled = vecs.clone();
    for c in 0..n {
        let ph = C64::from_polar(1.0, t * vals[c]);
        for r in 0..n {
            scaled[(r, c)] *= ph;
        }
    }
    scaled * vecs.adjoint()
}

/// Harmonic-oscillator eigenfunction `psi_n(x)` (hbar = m = omega = 1).
pub fn fock_wavefunction(n: usize, x: f64) -> f64 {
    fock_wavefunctions(n, x)[n]
}

/// `[psi_0(x), ..., psi_nmax(x)]` by the three-term recurrence.
pub fn fock_wavefunctions(n_max: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if n_max >= 1 {
        out.push(std::f64::consts::SQRT_2 * x * psi0);
    }
    for k in 1..n_max {
        let kf = k as f64;
        let next = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
        out.push(next);
    }
    out
}
