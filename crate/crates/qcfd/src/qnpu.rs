//! QNPU circuits: cyclic shift adders, non-unitary potentials and their
//! combinations, each with a dense matrix oracle and a gate-count model.
//!
//! Qubit layout of every QNPU circuit: register `0..n`, ancilla `n`, then
//! `max(0, n − 2)` carry qubits, then one `n`-qubit block per encoded state.
//! All gates are controlled by the ancilla so the circuit can sit directly
//! inside a Hadamard test.

use crate::ansatz::AnsatzLayout;
use crate::statevector::{Circuit, Gate, StateError, StateVector};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QnpuError {
    #[error("QNPU register must hold at least 2 qubits, got {0}")]
    RegisterTooSmall(usize),
    #[error("shift repetitions must be at least 1")]
    ZeroReps,
    #[error("encoded state has {found} qubits, register has {expected}")]
    EncodingSize { expected: usize, found: usize },
    #[error("dense oracle limited to 6 qubits, got {0}")]
    OracleTooLarge(usize),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Direction of the cyclic shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// `A`: basis `|j⟩ → |j − 1⟩`, i.e. `(A v)_i = v_{i+1}`.
    Down,
    /// `A†`: basis `|j⟩ → |j + 1⟩`, i.e. `(A† v)_i = v_{i−1}`.
    Up,
}

impl Direction {
    /// Offset `q` such that `(Sᵠ v)_i = v_{i+q}`.
    pub fn offset(self) -> isize {
        match self {
            Direction::Down => 1,
            Direction::Up => -1,
        }
    }
}

/// How a normalized real state is prepared on an `n`-qubit block.
#[derive(Debug, Clone, PartialEq)]
pub enum StatePrep {
    /// Hadamard on every qubit: amplitudes `1/√N`.
    Uniform(usize),
    Ansatz { layout: Arc<AnsatzLayout>, angles: Vec<f64> },
    /// Any real-amplitude circuit; used for registers the brick layer cannot hold.
    Circuit(Arc<Circuit>),
}

impl StatePrep {
    pub fn ansatz(layout: &AnsatzLayout, angles: &[f64]) -> Self {
        StatePrep::Ansatz { layout: Arc::new(layout.clone()), angles: angles.to_vec() }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            StatePrep::Uniform(n) => *n,
            StatePrep::Ansatz { layout, .. } => layout.n_qubits(),
            StatePrep::Circuit(c) => c.n_qubits(),
        }
    }

    pub fn circuit(&self) -> Circuit {
        match self {
            StatePrep::Uniform(n) => {
                Circuit::from_gates(*n, (0..*n).map(Gate::h).collect()).expect("valid indices")
            }
            StatePrep::Ansatz { layout, angles } => {
                layout.circuit(angles).expect("angles sized for layout")
            }
            StatePrep::Circuit(c) => (**c).clone(),
        }
    }

    /// Real parts of the prepared amplitudes.
    pub fn amplitudes(&self) -> Vec<f64> {
        match self {
            StatePrep::Uniform(n) => vec![1.0 / ((1usize << n) as f64).sqrt(); 1 << n],
            StatePrep::Ansatz { layout, angles } => {
                layout.real_state(angles).expect("angles sized for layout")
            }
            StatePrep::Circuit(c) => {
                let mut s = StateVector::zero_state(c.n_qubits()).expect("valid register");
                s.apply_circuit(c).expect("matching width");
                s.real_parts()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QnpuKind {
    /// `diag(p̃)`.
    Potential(StatePrep),
    /// `Sʳ` with `S = A` or `A†`.
    Adder { dir: Direction, reps: usize },
    /// `diag(p̃) · Sʳ`.
    AdderPotential { dir: Direction, reps: usize, enc: StatePrep },
    /// `diag(p̃) · diag(w̃) · Sʳ`, where `w̃` is a copy of a previous state.
    AdderPotentialPotential { dir: Direction, reps: usize, enc: StatePrep, prev: StatePrep },
    /// The identity; the overlap itself comes from the linear Hadamard test.
    SourceOverlap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QnpuSpec {
    pub n: usize,
    pub kind: QnpuKind,
}

impl QnpuSpec {
    pub fn new(n: usize, kind: QnpuKind) -> Result<Self, QnpuError> {
        if n < 2 {
            return Err(QnpuError::RegisterTooSmall(n));
        }
        let spec = Self { n, kind };
        if let Some(r) = spec.shift() {
            if r.1 == 0 {
                return Err(QnpuError::ZeroReps);
            }
        }
        for e in spec.encodings() {
            if e.n_qubits() != n {
                return Err(QnpuError::EncodingSize { expected: n, found: e.n_qubits() });
            }
        }
        Ok(spec)
    }

    fn shift(&self) -> Option<(Direction, usize)> {
        match &self.kind {
            QnpuKind::Adder { dir, reps }
            | QnpuKind::AdderPotential { dir, reps, .. }
            | QnpuKind::AdderPotentialPotential { dir, reps, .. } => Some((*dir, *reps)),
            _ => None,
        }
    }

    fn encodings(&self) -> Vec<&StatePrep> {
        match &self.kind {
            QnpuKind::Potential(e) | QnpuKind::AdderPotential { enc: e, .. } => vec![e],
            QnpuKind::AdderPotentialPotential { enc, prev, .. } => vec![enc, prev],
            _ => vec![],
        }
    }

    /// Net signed shift `q` with `(M v)_i ∝ v_{i+q}`.
    pub fn net_shift(&self) -> isize {
        self.shift().map_or(0, |(d, r)| d.offset() * r as isize)
    }

    /// Applies the effective register operator to a real vector.
    pub fn apply_effective(&self, v: &[f64]) -> Vec<f64> {
        let n_p = v.len();
        let q = self.net_shift();
        let mut out: Vec<f64> = (0..n_p)
            .map(|i| v[(i as isize + q).rem_euclid(n_p as isize) as usize])
            .collect();
        for e in self.encodings() {
            for (o, p) in out.iter_mut().zip(e.amplitudes()) {
                *o *= p;
            }
        }
        out
    }
}

/// A built QNPU with its qubit layout.
#[derive(Debug, Clone, PartialEq)]
pub struct QnpuCircuit {
    pub circuit: Circuit,
    pub n: usize,
    pub ancilla: usize,
    pub aux_count: usize,
}

impl QnpuCircuit {
    pub fn total_qubits(&self) -> usize {
        self.circuit.n_qubits()
    }
}

fn carries(n: usize) -> usize {
    n.saturating_sub(2)
}

/// Ancilla-controlled increment (`A†`) on the register, with `n − 2` carries.
///
/// For `n > 2` this uses `2n − 2` Toffolis and `n − 2` CNOTs; for `n = 2` a
/// single Toffoli and CNOT.
fn increment(n: usize, total: usize) -> Circuit {
    let anc = n;
    let carry = |i: usize| n + i; // carry i holds anc ∧ q0 ∧ … ∧ q_{i−1}, i ≥ 1
    let ctrl = |i: usize| if i == 0 { anc } else { carry(i) };
    let mut c = Circuit::new(total);
    if n == 2 {
        c.push(Gate::toffoli(anc, 0, 1));
        c.push(Gate::cnot(anc, 0));
        return c;
    }
    for i in 1..=n - 2 {
        c.push(Gate::toffoli(ctrl(i - 1), i - 1, carry(i)));
    }
    c.push(Gate::toffoli(carry(n - 2), n - 2, n - 1));
    for i in (2..=n - 2).rev() {
        c.push(Gate::cnot(carry(i), i));
        c.push(Gate::toffoli(ctrl(i - 1), i - 1, carry(i)));
    }
    c.push(Gate::toffoli(anc, 0, 1));
    c.push(Gate::toffoli(anc, 0, carry(1)));
    c.push(Gate::cnot(anc, 0));
    c
}

fn shift_block(n: usize, total: usize, dir: Direction, reps: usize) -> Circuit {
    let inc = increment(n, total);
    let one = match dir {
        Direction::Up => inc,
        Direction::Down => inc.inverse(),
    };
    let mut c = Circuit::new(total);
    for _ in 0..reps {
        c.extend(&one);
    }
    c
}

/// Controlled preparation of `enc` on the block at `offset`, then `n`
/// Toffolis that XOR the register into the block. The `|0…0⟩` component of
/// the block then carries the pointwise product with the encoded amplitudes.
fn potential_block(n: usize, total: usize, offset: usize, enc: &StatePrep) -> Circuit {
    let anc = n;
    let map: Vec<usize> = (offset..offset + n).collect();
    let prep = enc.circuit().remapped(total, &map);
    let mut c = Circuit::new(total);
    c.push(Gate::controlled(vec![anc], prep));
    for b in 0..n {
        c.push(Gate::toffoli(anc, b, offset + b));
    }
    c
}

fn build(spec: &QnpuSpec) -> Result<QnpuCircuit, QnpuError> {
    let n = spec.n;
    let encs = spec.encodings();
    let shift = spec.shift();
    let carry_count = if shift.is_some() { carries(n) } else { 0 };
    let aux_count = carry_count + n * encs.len();
    let total = n + 1 + aux_count;
    if total > crate::statevector::MAX_QUBITS {
        return Err(StateError::QubitCount(total).into());
    }
    let mut c = Circuit::new(total);
    if let Some((dir, reps)) = shift {
        c.extend(&shift_block(n, total, dir, reps));
    }
    let mut offset = n + 1 + carry_count;
    for e in encs {
        c.extend(&potential_block(n, total, offset, e));
        offset += n;
    }
    Ok(QnpuCircuit { circuit: c, n, ancilla: n, aux_count })
}

pub fn build_qnpu(spec: &QnpuSpec) -> Result<QnpuCircuit, QnpuError> {
    build(spec)
}

pub fn build_adder(n: usize, dir: Direction, reps: usize) -> Result<QnpuCircuit, QnpuError> {
    build(&QnpuSpec::new(n, QnpuKind::Adder { dir, reps })?)
}

pub fn build_potential(n: usize, enc: StatePrep) -> Result<QnpuCircuit, QnpuError> {
    build(&QnpuSpec::new(n, QnpuKind::Potential(enc))?)
}

pub fn build_adder_potential(
    n: usize,
    dir: Direction,
    reps: usize,
    enc: StatePrep,
) -> Result<QnpuCircuit, QnpuError> {
    build(&QnpuSpec::new(n, QnpuKind::AdderPotential { dir, reps, enc })?)
}

pub fn build_adder_potential_potential(
    n: usize,
    dir: Direction,
    reps: usize,
    enc: StatePrep,
    prev: StatePrep,
) -> Result<QnpuCircuit, QnpuError> {
    build(&QnpuSpec::new(n, QnpuKind::AdderPotentialPotential { dir, reps, enc, prev })?)
}

/// Dense effective operator, row-major.
pub fn qnpu_matrix_oracle(spec: &QnpuSpec) -> Result<Vec<Vec<f64>>, QnpuError> {
    if spec.n > 6 {
        return Err(QnpuError::OracleTooLarge(spec.n));
    }
    let dim = 1 << spec.n;
    let mut m = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut e = vec![0.0; dim];
        e[j] = 1.0;
        for (i, v) in spec.apply_effective(&e).into_iter().enumerate() {
            m[i][j] = v;
        }
    }
    Ok(m)
}

/// Effective register operator read from the circuit itself: each basis
/// input runs with the ancilla set and the block where every auxiliary qubit
/// is back in `|0⟩` is kept.
pub fn circuit_effective_matrix(qc: &QnpuCircuit) -> Result<Vec<Vec<f64>>, QnpuError> {
    let dim = 1 << qc.n;
    let total = qc.total_qubits();
    let mut m = vec![vec![0.0; dim]; dim];
    for j in 0..dim {
        let mut s = StateVector::basis(total, j | (1 << qc.ancilla))?;
        s.apply_circuit(&qc.circuit)?;
        for (i, row) in m.iter_mut().enumerate() {
            let a = s.amplitudes()[i | (1 << qc.ancilla)];
            debug_assert!(a.im.abs() < 1e-12);
            row[j] = a.re;
        }
    }
    Ok(m)
}

pub const TOFFOLI_COST: usize = 15;

/// Elementary gates of one adder: CNOT = 1, Toffoli = 15.
pub fn adder_gate_count(n: usize) -> usize {
    if n == 2 {
        1 + TOFFOLI_COST
    } else {
        (n - 2) + TOFFOLI_COST * (2 * n - 2)
    }
}

pub fn potential_gate_count(n: usize) -> usize {
    TOFFOLI_COST * n
}

/// Gate-count model of a QNPU, excluding state-preparation gates.
pub fn qnpu_gate_count(spec: &QnpuSpec) -> usize {
    let (a, p) = (adder_gate_count(spec.n), potential_gate_count(spec.n));
    match &spec.kind {
        QnpuKind::Potential(_) => p,
        QnpuKind::Adder { reps, .. } => reps * a,
        QnpuKind::AdderPotential { reps, .. } => reps * a + p,
        QnpuKind::AdderPotentialPotential { reps, .. } => reps * a + 2 * p,
        QnpuKind::SourceOverlap => 0,
    }
}
