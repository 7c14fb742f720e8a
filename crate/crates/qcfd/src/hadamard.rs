//! Bilinear and linear Hadamard tests around a QNPU.

use crate::qnpu::{build_qnpu, QnpuCircuit, QnpuError, QnpuSpec, StatePrep};
use crate::statevector::{Circuit, Gate, StateVector};
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HadamardError {
    #[error("state preparation acts on {found} qubits, QNPU register has {expected}")]
    RegisterMismatch { expected: usize, found: usize },
    #[error("linear test needs a previous-state preparation")]
    MissingPrevious,
    #[error("bilinear test takes a single state preparation")]
    UnexpectedPrevious,
    #[error(transparent)]
    Qnpu(#[from] QnpuError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    Bilinear,
    Linear,
}

/// One Hadamard test. `current` prepares `u`, `previous` prepares `v` for
/// linear tests.
#[derive(Debug, Clone, PartialEq)]
pub struct HadamardJob {
    pub kind: JobKind,
    pub current: StatePrep,
    pub previous: Option<StatePrep>,
    pub qnpu: QnpuSpec,
}

impl HadamardJob {
    pub fn bilinear(current: StatePrep, qnpu: QnpuSpec) -> Self {
        Self { kind: JobKind::Bilinear, current, previous: None, qnpu }
    }

    pub fn linear(current: StatePrep, previous: StatePrep, qnpu: QnpuSpec) -> Self {
        Self { kind: JobKind::Linear, current, previous: Some(previous), qnpu }
    }

    fn check(&self) -> Result<(), HadamardError> {
        let n = self.qnpu.n;
        for p in std::iter::once(&self.current).chain(self.previous.as_ref()) {
            if p.n_qubits() != n {
                return Err(HadamardError::RegisterMismatch { expected: n, found: p.n_qubits() });
            }
        }
        match (self.kind, &self.previous) {
            (JobKind::Linear, None) => Err(HadamardError::MissingPrevious),
            (JobKind::Bilinear, Some(_)) => Err(HadamardError::UnexpectedPrevious),
            _ => Ok(()),
        }
    }

    /// Full test circuit, ancilla included.
    pub fn circuit(&self) -> Result<(Circuit, usize), HadamardError> {
        self.circuit_with(&build_qnpu(&self.qnpu)?)
    }

    /// Test circuit around an already built (possibly modified) QNPU.
    pub(crate) fn circuit_with(&self, q: &QnpuCircuit) -> Result<(Circuit, usize), HadamardError> {
        self.check()?;
        let (n, anc, total) = (q.n, q.ancilla, q.total_qubits());
        let reg: Vec<usize> = (0..n).collect();
        let mut c = Circuit::new(total);
        c.push(Gate::h(anc));
        let u = self.current.circuit().remapped(total, &reg);
        match &self.previous {
            None => {
                c.extend(&u);
                c.extend(&q.circuit);
            }
            Some(prev) => {
                let v = prev.circuit().remapped(total, &reg);
                c.push(Gate::controlled(vec![anc], v));
                c.extend(&q.circuit);
                c.push(Gate::controlled(vec![anc], u.inverse()));
            }
        }
        c.push(Gate::h(anc));
        Ok((c, anc))
    }

    /// Runs the test on the emulator and returns the ancilla expectation.
    pub fn evaluate(&self) -> Result<f64, HadamardError> {
        self.evaluate_with(&build_qnpu(&self.qnpu)?)
    }

    pub(crate) fn evaluate_with(&self, q: &QnpuCircuit) -> Result<f64, HadamardError> {
        let (c, anc) = self.circuit_with(q)?;
        let mut s = StateVector::zero_state(c.n_qubits()).map_err(QnpuError::from)?;
        s.apply_circuit(&c).map_err(QnpuError::from)?;
        Ok(s.ancilla_real_part(anc).map_err(QnpuError::from)?)
    }

    /// Same quantity from dense algebra on the prepared amplitudes.
    pub fn evaluate_oracle(&self) -> Result<f64, HadamardError> {
        self.check()?;
        let u = self.current.amplitudes();
        let v = self.previous.as_ref().map_or_else(|| u.clone(), |p| p.amplitudes());
        let mv = self.qnpu.apply_effective(&v);
        Ok(u.iter().zip(&mv).map(|(a, b)| a * b).sum())
    }
}

/// `Re⟨u|M|u⟩` from the bilinear circuit.
pub fn eval_bilinear(job: &HadamardJob) -> Result<f64, HadamardError> {
    if job.kind != JobKind::Bilinear {
        return Err(HadamardError::UnexpectedPrevious);
    }
    job.evaluate()
}

/// `Re⟨u|M|v⟩` from the linear circuit.
pub fn eval_linear(job: &HadamardJob) -> Result<f64, HadamardError> {
    if job.kind != JobKind::Linear {
        return Err(HadamardError::MissingPrevious);
    }
    job.evaluate()
}

/// Evaluates independent jobs in parallel.
pub fn eval_all(jobs: &[HadamardJob]) -> Result<Vec<f64>, HadamardError> {
    jobs.par_iter().map(HadamardJob::evaluate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ansatz::build_bricklayer;
    use crate::qnpu::{Direction, QnpuKind};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::sync::Arc;

    fn random_prep(n: usize, rng: &mut impl Rng) -> StatePrep {
        if n % 2 == 0 {
            let l = build_bricklayer(n, 2).unwrap();
            let a: Vec<f64> = (0..l.param_count()).map(|_| rng.gen_range(-3.0..3.0)).collect();
            StatePrep::ansatz(&l, &a)
        } else {
            let mut g = Vec::new();
            for q in 0..n {
                g.push(Gate::ry(q, rng.gen_range(-3.0..3.0)));
            }
            for q in 0..n - 1 {
                g.push(Gate::cz(q, q + 1));
            }
            for q in 0..n {
                g.push(Gate::ry(q, rng.gen_range(-3.0..3.0)));
            }
            StatePrep::Circuit(Arc::new(Circuit::from_gates(n, g).unwrap()))
        }
    }

    fn basis_prep(n: usize, k: usize) -> StatePrep {
        let g = (0..n).filter(|b| k >> b & 1 == 1).map(Gate::x).collect();
        StatePrep::Circuit(Arc::new(Circuit::from_gates(n, g).unwrap()))
    }

    fn adder(n: usize) -> QnpuSpec {
        QnpuSpec::new(n, QnpuKind::Adder { dir: Direction::Down, reps: 1 }).unwrap()
    }

    #[test]
    fn bilinear_examples() {
        let zero = eval_bilinear(&HadamardJob::bilinear(basis_prep(2, 0), adder(2))).unwrap();
        assert!(zero.abs() < 1e-14);
        let one = eval_bilinear(&HadamardJob::bilinear(StatePrep::Uniform(2), adder(2))).unwrap();
        assert!((one - 1.0).abs() < 1e-14);
    }

    #[test]
    fn linear_examples() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let p = random_prep(4, &mut rng);
        let pot = QnpuSpec::new(4, QnpuKind::Potential(StatePrep::Uniform(4))).unwrap();
        let self_overlap = eval_linear(&HadamardJob::linear(p.clone(), p.clone(), pot)).unwrap();
        assert!((self_overlap - 0.25).abs() < 1e-12);

        let id = QnpuSpec::new(2, QnpuKind::SourceOverlap).unwrap();
        let orth = eval_linear(&HadamardJob::linear(basis_prep(2, 0), basis_prep(2, 1), id)).unwrap();
        assert!(orth.abs() < 1e-14);
    }

    #[test]
    fn source_overlap_matches_statevector_inner_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let (u, v) = (random_prep(4, &mut rng), random_prep(4, &mut rng));
            let job = HadamardJob::linear(u.clone(), v.clone(), QnpuSpec::new(4, QnpuKind::SourceOverlap).unwrap());
            let su = StateVector::from_real(&u.amplitudes()).unwrap();
            let sv = StateVector::from_real(&v.amplitudes()).unwrap();
            let want = su.inner_product(&sv).unwrap().re;
            assert!((eval_linear(&job).unwrap() - want).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_mismatched_jobs() {
        let job = HadamardJob::bilinear(StatePrep::Uniform(3), adder(2));
        assert_eq!(job.evaluate(), Err(HadamardError::RegisterMismatch { expected: 2, found: 3 }));
        let mut job = HadamardJob::bilinear(StatePrep::Uniform(2), adder(2));
        job.kind = JobKind::Linear;
        assert_eq!(job.evaluate(), Err(HadamardError::MissingPrevious));
        assert!(eval_linear(&HadamardJob::bilinear(StatePrep::Uniform(2), adder(2))).is_err());
    }

    #[test]
    fn parallel_evaluation_preserves_order() {
        let jobs: Vec<_> = (0..4)
            .map(|k| HadamardJob::bilinear(basis_prep(2, k), QnpuSpec::new(2, QnpuKind::Potential(basis_prep(2, 1))).unwrap()))
            .collect();
        let got = eval_all(&jobs).unwrap();
        assert!((got[1] - 1.0).abs() < 1e-14);
        assert!(got[0].abs() + got[2].abs() + got[3].abs() < 1e-14);
    }

    fn all_kinds(n: usize, rng: &mut impl Rng) -> Vec<QnpuSpec> {
        let (p, w) = (random_prep(n, rng), random_prep(n, rng));
        let dir = if rng.gen_bool(0.5) { Direction::Down } else { Direction::Up };
        let reps = rng.gen_range(1..=2);
        [
            QnpuKind::Potential(p.clone()),
            QnpuKind::Adder { dir, reps },
            QnpuKind::AdderPotential { dir, reps, enc: p.clone() },
            QnpuKind::AdderPotentialPotential { dir, reps, enc: p, prev: w },
            QnpuKind::SourceOverlap,
        ]
        .into_iter()
        .map(|k| QnpuSpec::new(n, k).unwrap())
        .collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn circuit_matches_oracle(n in 2usize..=4, seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let u = random_prep(n, &mut rng);
            let v = random_prep(n, &mut rng);
            for spec in all_kinds(n, &mut rng) {
                let bil = HadamardJob::bilinear(u.clone(), spec.clone());
                prop_assert!((bil.evaluate().unwrap() - bil.evaluate_oracle().unwrap()).abs() < 1e-10);
                let lin = HadamardJob::linear(u.clone(), v.clone(), spec);
                prop_assert!((lin.evaluate().unwrap() - lin.evaluate_oracle().unwrap()).abs() < 1e-10);
            }
        }
    }
}
