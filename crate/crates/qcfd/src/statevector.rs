//! Exact complex statevector emulation.
//!
//! Basis ordering is little-endian: qubit `b` is bit `b` of the basis index.
//! Every gate is applied in place with stride-based indexing, so memory stays
//! at `2^n` amplitudes regardless of the gate.

use num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

/// Largest register the emulator accepts.
pub const MAX_QUBITS: usize = 26;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("register of {0} qubits is outside the supported range 1..={MAX_QUBITS}")]
    QubitCount(usize),
    #[error("qubit index {index} out of range for a {n_qubits}-qubit register")]
    IndexOutOfRange { index: usize, n_qubits: usize },
    #[error("gate acts on qubit {0} both as target and control")]
    Overlap(usize),
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// The all-zero computational basis state.
    pub fn zero_state(n_qubits: usize) -> Result<Self, StateError> {
        if !(1..=MAX_QUBITS).contains(&n_qubits) {
            return Err(StateError::QubitCount(n_qubits));
        }
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n_qubits, amps })
    }

    /// Basis state `|index⟩`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self, StateError> {
        let mut s = Self::zero_state(n_qubits)?;
        if index >= s.amps.len() {
            return Err(StateError::IndexOutOfRange { index, n_qubits });
        }
        s.amps[0] = Complex64::new(0.0, 0.0);
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    /// Wraps raw amplitudes; the length must be a power of two.
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self, StateError> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(StateError::SizeMismatch {
                expected: len.next_power_of_two().max(2),
                found: len,
            });
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_QUBITS {
            return Err(StateError::QubitCount(n_qubits));
        }
        Ok(Self { n_qubits, amps })
    }

    pub fn from_real(values: &[f64]) -> Result<Self, StateError> {
        Self::from_amplitudes(values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    /// Real parts of the amplitudes.
    pub fn real_parts(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.re).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn apply_gate(&mut self, gate: &Gate) -> Result<(), StateError> {
        gate.validate(self.n_qubits)?;
        self.apply_unchecked(gate, 0);
        Ok(())
    }

    pub fn apply_circuit(&mut self, circuit: &Circuit) -> Result<(), StateError> {
        if circuit.n_qubits != self.n_qubits {
            return Err(StateError::SizeMismatch {
                expected: self.n_qubits,
                found: circuit.n_qubits,
            });
        }
        for g in &circuit.gates {
            self.apply_unchecked(g, 0);
        }
        Ok(())
    }

    fn apply_unchecked(&mut self, gate: &Gate, extra_mask: usize) {
        let mask = extra_mask | gate.control_mask();
        match &gate.kind {
            GateKind::MultiControlledApply(inner) => {
                for g in &inner.gates {
                    self.apply_unchecked(g, mask);
                }
            }
            GateKind::Cz => {
                // Diagonal: flip the sign where every involved bit is set.
                let full = mask | (1 << gate.targets[0]) | (1 << gate.targets[1]);
                for (i, a) in self.amps.iter_mut().enumerate() {
                    if i & full == full {
                        *a = -*a;
                    }
                }
            }
            kind => {
                let [[m00, m01], [m10, m11]] = kind.matrix();
                let bit = 1usize << gate.targets[0];
                let len = self.amps.len();
                let mut base = 0;
                while base < len {
                    for i in base..base + bit {
                        if i & mask != mask {
                            continue;
                        }
                        let a0 = self.amps[i];
                        let a1 = self.amps[i | bit];
                        self.amps[i] = m00 * a0 + m01 * a1;
                        self.amps[i | bit] = m10 * a0 + m11 * a1;
                    }
                    base += 2 * bit;
                }
            }
        }
    }

    /// `Σ_k a_k* b_k`.
    pub fn inner_product(&self, other: &StateVector) -> Result<Complex64, StateError> {
        if self.amps.len() != other.amps.len() {
            return Err(StateError::SizeMismatch {
                expected: self.amps.len(),
                found: other.amps.len(),
            });
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// `P(ancilla = 0) − P(ancilla = 1)`, evaluated exactly from the amplitudes.
    pub fn ancilla_real_part(&self, ancilla: usize) -> Result<f64, StateError> {
        if ancilla >= self.n_qubits {
            return Err(StateError::IndexOutOfRange {
                index: ancilla,
                n_qubits: self.n_qubits,
            });
        }
        let bit = 1 << ancilla;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(i, a)| if i & bit == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    H,
    X,
    /// `exp(−iθY/2)`.
    Ry(f64),
    Cz,
    Cnot,
    Toffoli,
    /// A whole sub-circuit executed under the gate's controls.
    MultiControlledApply(Arc<Circuit>),
}

impl GateKind {
    fn matrix(&self) -> [[Complex64; 2]; 2] {
        let r = |v: f64| Complex64::new(v, 0.0);
        match self {
            GateKind::H => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                [[r(s), r(s)], [r(s), r(-s)]]
            }
            GateKind::X | GateKind::Cnot | GateKind::Toffoli => [[r(0.0), r(1.0)], [r(1.0), r(0.0)]],
            GateKind::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                [[r(c), r(-s)], [r(s), r(c)]]
            }
            GateKind::Cz | GateKind::MultiControlledApply(_) => unreachable!("not a 2x2 gate"),
        }
    }
}

/// A gate with explicit target and control lists.
///
/// Controlled variants store their intrinsic controls in `controls`, so
/// promoting a gate under an extra control only extends that list.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
    pub controls: Vec<usize>,
}

impl Gate {
    pub fn h(q: usize) -> Self {
        Self { kind: GateKind::H, targets: vec![q], controls: vec![] }
    }
    pub fn x(q: usize) -> Self {
        Self { kind: GateKind::X, targets: vec![q], controls: vec![] }
    }
    pub fn ry(q: usize, angle: f64) -> Self {
        Self { kind: GateKind::Ry(angle), targets: vec![q], controls: vec![] }
    }
    pub fn cz(a: usize, b: usize) -> Self {
        Self { kind: GateKind::Cz, targets: vec![a, b], controls: vec![] }
    }
    pub fn cnot(control: usize, target: usize) -> Self {
        Self { kind: GateKind::Cnot, targets: vec![target], controls: vec![control] }
    }
    pub fn toffoli(c0: usize, c1: usize, target: usize) -> Self {
        Self { kind: GateKind::Toffoli, targets: vec![target], controls: vec![c0, c1] }
    }
    pub fn controlled(controls: Vec<usize>, inner: Circuit) -> Self {
        Self {
            kind: GateKind::MultiControlledApply(Arc::new(inner)),
            targets: vec![],
            controls,
        }
    }

    /// Adds `extra` to the control set.
    pub fn with_controls(mut self, extra: &[usize]) -> Self {
        self.controls.extend_from_slice(extra);
        self
    }

    /// The inverse gate. Every kind except `Ry` is self-inverse.
    pub fn inverse(&self) -> Self {
        let kind = match &self.kind {
            GateKind::Ry(a) => GateKind::Ry(-a),
            GateKind::MultiControlledApply(inner) => {
                GateKind::MultiControlledApply(Arc::new(inner.inverse()))
            }
            k => k.clone(),
        };
        Self { kind, targets: self.targets.clone(), controls: self.controls.clone() }
    }

    fn control_mask(&self) -> usize {
        self.controls.iter().fold(0, |m, &c| m | (1 << c))
    }

    fn validate(&self, n_qubits: usize) -> Result<(), StateError> {
        let expected_targets = match self.kind {
            GateKind::Cz => 2,
            GateKind::MultiControlledApply(_) => 0,
            _ => 1,
        };
        if self.targets.len() != expected_targets {
            return Err(StateError::SizeMismatch {
                expected: expected_targets,
                found: self.targets.len(),
            });
        }
        let mut seen = 0usize;
        for &q in self.targets.iter().chain(&self.controls) {
            if q >= n_qubits {
                return Err(StateError::IndexOutOfRange { index: q, n_qubits });
            }
            if seen & (1 << q) != 0 {
                return Err(StateError::Overlap(q));
            }
            seen |= 1 << q;
        }
        if let GateKind::MultiControlledApply(inner) = &self.kind {
            if inner.n_qubits != n_qubits {
                return Err(StateError::SizeMismatch { expected: n_qubits, found: inner.n_qubits });
            }
            for g in &inner.gates {
                g.validate(n_qubits)?;
                let touched = g.targets.iter().chain(&g.controls);
                if let Some(&q) = touched.clone().find(|&&q| seen & (1 << q) != 0) {
                    return Err(StateError::Overlap(q));
                }
            }
        }
        Ok(())
    }
}

/// An ordered gate list over a fixed register width.
#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Self {
        Self { n_qubits, gates: Vec::new() }
    }

    /// Builds a circuit, checking every gate against the register width.
    pub fn from_gates(n_qubits: usize, gates: Vec<Gate>) -> Result<Self, StateError> {
        for g in &gates {
            g.validate(n_qubits)?;
        }
        Ok(Self { n_qubits, gates })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub(crate) fn push(&mut self, gate: Gate) {
        debug_assert!(gate.validate(self.n_qubits).is_ok(), "{gate:?}");
        self.gates.push(gate);
    }

    pub(crate) fn extend(&mut self, other: &Circuit) {
        debug_assert_eq!(self.n_qubits, other.n_qubits);
        self.gates.extend(other.gates.iter().cloned());
    }

    /// Same gates on a wider register, with qubit `q` relabelled `map[q]`.
    pub fn remapped(&self, n_qubits: usize, map: &[usize]) -> Circuit {
        fn remap_gate(g: &Gate, n_qubits: usize, map: &[usize]) -> Gate {
            let kind = match &g.kind {
                GateKind::MultiControlledApply(inner) => {
                    GateKind::MultiControlledApply(Arc::new(inner.remapped(n_qubits, map)))
                }
                k => k.clone(),
            };
            Gate {
                kind,
                targets: g.targets.iter().map(|&q| map[q]).collect(),
                controls: g.controls.iter().map(|&q| map[q]).collect(),
            }
        }
        Circuit {
            n_qubits,
            gates: self.gates.iter().map(|g| remap_gate(g, n_qubits, map)).collect(),
        }
    }

    /// Every gate promoted under the additional `controls`.
    pub fn controlled_by(&self, controls: &[usize]) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().map(|g| g.clone().with_controls(controls)).collect(),
        }
    }

    pub fn inverse(&self) -> Circuit {
        Circuit {
            n_qubits: self.n_qubits,
            gates: self.gates.iter().rev().map(Gate::inverse).collect(),
        }
    }

    /// Number of gates of each primitive kind, flattening nested blocks.
    pub fn count_kinds(&self) -> GateTally {
        let mut t = GateTally::default();
        for g in &self.gates {
            match &g.kind {
                GateKind::MultiControlledApply(inner) => t += inner.count_kinds(),
                GateKind::H | GateKind::X | GateKind::Ry(_) => t.single += 1,
                GateKind::Cz => t.cz += 1,
                GateKind::Cnot => t.cnot += 1,
                GateKind::Toffoli => t.toffoli += 1,
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GateTally {
    pub single: usize,
    pub cz: usize,
    pub cnot: usize,
    pub toffoli: usize,
}

impl std::ops::AddAssign for GateTally {
    fn add_assign(&mut self, o: Self) {
        self.single += o.single;
        self.cz += o.cz;
        self.cnot += o.cnot;
        self.toffoli += o.toffoli;
    }
}

/// Convenience: applies `circuit` to a copy of `state`.
pub fn apply_circuit(state: &StateVector, circuit: &Circuit) -> Result<StateVector, StateError> {
    let mut out = state.clone();
    out.apply_circuit(circuit)?;
    Ok(out)
}

/// Convenience: applies `gate` to a copy of `state`.
pub fn apply_gate(state: &StateVector, gate: &Gate) -> Result<StateVector, StateError> {
    let mut out = state.clone();
    out.apply_gate(gate)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    /// Dense matrix of a gate, built column by column from basis states.
    fn dense(gate: &Gate, n: usize) -> Vec<Vec<Complex64>> {
        let dim = 1 << n;
        let mut cols = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut s = StateVector::basis(n, j).unwrap();
            s.apply_gate(gate).unwrap();
            cols.push(s.amps);
        }
        // transpose to row-major
        (0..dim).map(|i| (0..dim).map(|j| cols[j][i]).collect()).collect()
    }

    /// Independent oracle: the gate's full unitary from its definition.
    fn reference_matrix(gate: &Gate, n: usize) -> Vec<Vec<Complex64>> {
        let dim = 1usize << n;
        let cmask: usize = gate.controls.iter().map(|&q| 1 << q).sum();
        let mut m = vec![vec![c(0.0); dim]; dim];
        for col in 0..dim {
            if col & cmask != cmask {
                m[col][col] = c(1.0);
                continue;
            }
            match gate.kind {
                GateKind::Cz => {
                    let both = (1 << gate.targets[0]) | (1 << gate.targets[1]);
                    m[col][col] = if col & both == both { c(-1.0) } else { c(1.0) };
                }
                _ => {
                    let t = gate.targets[0];
                    let bit = (col >> t) & 1;
                    let u: [[f64; 2]; 2] = match gate.kind {
                        GateKind::H => {
                            let s = 1.0 / 2f64.sqrt();
                            [[s, s], [s, -s]]
                        }
                        GateKind::Ry(a) => {
                            [[(a / 2.0).cos(), -(a / 2.0).sin()], [(a / 2.0).sin(), (a / 2.0).cos()]]
                        }
                        _ => [[0.0, 1.0], [1.0, 0.0]],
                    };
                    let lo = col & !(1 << t);
                    m[lo][col] = c(u[0][bit]);
                    m[lo | (1 << t)][col] = c(u[1][bit]);
                }
            }
        }
        m
    }

    fn matvec(m: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
        m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn zero_state_examples() {
        assert_eq!(StateVector::zero_state(1).unwrap().amps, vec![c(1.0), c(0.0)]);
        assert_eq!(StateVector::zero_state(2).unwrap().amps, vec![c(1.0), c(0.0), c(0.0), c(0.0)]);
        assert_eq!(StateVector::zero_state(27), Err(StateError::QubitCount(27)));
        assert_eq!(StateVector::zero_state(0), Err(StateError::QubitCount(0)));
    }

    #[test]
    fn gate_examples() {
        let s = apply_gate(&StateVector::zero_state(1).unwrap(), &Gate::ry(0, PI)).unwrap();
        assert!(s.amps[0].norm() < 1e-15 && (s.amps[1] - c(1.0)).norm() < 1e-15);

        let s = apply_gate(&StateVector::basis(2, 3).unwrap(), &Gate::cz(0, 1)).unwrap();
        assert_eq!(s.amps, vec![c(0.0), c(0.0), c(0.0), c(-1.0)]);

        // |110⟩ with qubits 0 and 1 set is index 3; Toffoli sets qubit 2.
        let s = apply_gate(&StateVector::basis(3, 3).unwrap(), &Gate::toffoli(0, 1, 2)).unwrap();
        assert_eq!(s.amps[7], c(1.0));
    }

    #[test]
    fn invalid_indices_rejected() {
        let mut s = StateVector::zero_state(2).unwrap();
        assert!(matches!(s.apply_gate(&Gate::x(2)), Err(StateError::IndexOutOfRange { .. })));
        assert!(matches!(s.apply_gate(&Gate::cnot(1, 1)), Err(StateError::Overlap(1))));
        assert!(s.ancilla_real_part(5).is_err());
        let c3 = Circuit::new(3);
        assert!(s.apply_circuit(&c3).is_err());
    }

    #[test]
    fn circuit_identities() {
        let s0 = StateVector::from_real(&[0.6, 0.0, 0.0, 0.8]).unwrap();
        assert_eq!(apply_circuit(&s0, &Circuit::new(2)).unwrap(), s0);
        let xx = Circuit::from_gates(2, vec![Gate::x(0), Gate::x(0)]).unwrap();
        assert_eq!(apply_circuit(&s0, &xx).unwrap(), s0);
    }

    #[test]
    fn x_round_trip_is_little_endian() {
        for q in 0..4 {
            let s = apply_gate(&StateVector::zero_state(4).unwrap(), &Gate::x(q)).unwrap();
            assert_eq!(s.amps[1 << q], c(1.0));
            let back = apply_gate(&s, &Gate::x(q)).unwrap();
            assert_eq!(back.amps[0], c(1.0));
        }
    }

    #[test]
    fn ancilla_expectations() {
        let s = StateVector::zero_state(2).unwrap();
        assert_eq!(s.ancilla_real_part(1).unwrap(), 1.0);
        let plus = apply_gate(&s, &Gate::h(1)).unwrap();
        assert!(plus.ancilla_real_part(1).unwrap().abs() < 1e-15);
    }

    #[test]
    fn inner_product_orthonormal_basis() {
        let e0 = StateVector::basis(2, 0).unwrap();
        let e1 = StateVector::basis(2, 1).unwrap();
        assert_eq!(e0.inner_product(&e0).unwrap(), c(1.0));
        assert_eq!(e0.inner_product(&e1).unwrap(), c(0.0));
        assert!(e0.inner_product(&StateVector::zero_state(3).unwrap()).is_err());
    }

    #[test]
    fn inner_product_matches_direct_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut draw = || {
            let v: Vec<Complex64> =
                (0..8).map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            let n = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / n).collect::<Vec<_>>()
        };
        let (a, b) = (draw(), draw());
        let mut direct = c(0.0);
        for k in 0..8 {
            direct += Complex64::new(a[k].re, -a[k].im) * b[k];
        }
        let sa = StateVector::from_amplitudes(a).unwrap();
        let sb = StateVector::from_amplitudes(b).unwrap();
        assert!((sa.inner_product(&sb).unwrap() - direct).norm() < 1e-14);
    }

    #[test]
    fn multi_controlled_apply_promotes_controls() {
        let inner = Circuit::from_gates(3, vec![Gate::x(0), Gate::ry(1, 0.3)]).unwrap();
        let g = Gate::controlled(vec![2], inner.clone());
        let promoted = inner.controlled_by(&[2]);
        for j in 0..8 {
            let s = StateVector::basis(3, j).unwrap();
            let a = apply_gate(&s, &g).unwrap();
            let b = apply_circuit(&s, &promoted).unwrap();
            assert_eq!(a, b);
        }
        // Control overlapping an inner target is rejected.
        let bad = Gate::controlled(vec![0], inner);
        assert!(bad.validate(3).is_err());
    }

    fn arb_gate(n: usize) -> impl Strategy<Value = Gate> {
        let q = 0..n;
        prop_oneof![
            q.clone().prop_map(Gate::h),
            q.clone().prop_map(Gate::x),
            (q.clone(), -PI..PI).prop_map(|(q, a)| Gate::ry(q, a)),
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 2)
                .prop_shuffle()
                .prop_map(|v| Gate::cz(v[0], v[1])),
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 2)
                .prop_shuffle()
                .prop_map(|v| Gate::cnot(v[0], v[1])),
            proptest::sample::subsequence((0..n).collect::<Vec<_>>(), 3)
                .prop_shuffle()
                .prop_map(|v| Gate::toffoli(v[0], v[1], v[2])),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn circuit_matches_dense_product(n in 3usize..=4, gates in proptest::collection::vec(arb_gate(3), 1..12)) {
            let circuit = Circuit::from_gates(n, gates.clone()).unwrap();
            let mut rng_state: Vec<Complex64> = (0..1usize << n)
                .map(|k| Complex64::new(((k * 7 + 3) % 11) as f64 - 5.0, ((k * 5 + 1) % 7) as f64 - 3.0))
                .collect();
            let norm = rng_state.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            rng_state.iter_mut().for_each(|a| *a /= norm);
            let start = StateVector::from_amplitudes(rng_state.clone()).unwrap();
            let got = apply_circuit(&start, &circuit).unwrap();
            let mut want = rng_state;
            for g in &gates {
                want = matvec(&reference_matrix(g, n), &want);
            }
            for (a, b) in got.amps.iter().zip(&want) {
                prop_assert!((a - b).norm() < 1e-12);
            }
            prop_assert!((got.norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn gates_are_unitary(g in arb_gate(3)) {
            let m = dense(&g, 3);
            for i in 0..8 {
                for j in 0..8 {
                    let dot: Complex64 = (0..8).map(|k| m[k][i].conj() * m[k][j]).sum();
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot - c(want)).norm() < 1e-14);
                }
            }
        }

        #[test]
        fn inverse_undoes_circuit(gates in proptest::collection::vec(arb_gate(3), 0..10)) {
            let circuit = Circuit::from_gates(3, gates).unwrap();
            let start = StateVector::basis(3, 5).unwrap();
            let there = apply_circuit(&start, &circuit).unwrap();
            let back = apply_circuit(&there, &circuit.inverse()).unwrap();
            for (a, b) in back.amps.iter().zip(&start.amps) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
