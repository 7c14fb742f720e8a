//! Circuit-versus-oracle equivalence sweeps.

use crate::ansatz::build_bricklayer;
use crate::cases::{CaseConfig, CaseError, CaseId};
use crate::cost::{Backend, CostError, CostFunction, History, PrevState};
use crate::hadamard::HadamardJob;
use crate::qnpu::{build_qnpu, qnpu_matrix_oracle, circuit_effective_matrix, Direction, QnpuCircuit, QnpuError, QnpuKind, QnpuSpec, StatePrep};
use crate::statevector::{Circuit, Gate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Deliberate defects used to check that the sweeps catch real bugs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Flips the sign of every odd register component inside each adder.
    AdderSignFlip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub n: usize,
    pub label: String,
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub const TOLERANCE: f64 = 1e-8;

/// A random real state on `n` qubits: a brick ansatz for even `n`, two
/// RY/CZ layers otherwise.
pub fn random_prep(n: usize, rng: &mut impl Rng) -> StatePrep {
    if n % 2 == 0 {
        let l = build_bricklayer(n, 2).expect("even register");
        let a: Vec<f64> = (0..l.param_count()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        return StatePrep::ansatz(&l, &a);
    }
    let mut g = Vec::new();
    for _ in 0..2 {
        g.extend((0..n).map(|q| Gate::ry(q, rng.gen_range(-3.0..3.0))));
        g.extend((0..n - 1).map(|q| Gate::cz(q, q + 1)));
    }
    g.extend((0..n).map(|q| Gate::ry(q, rng.gen_range(-3.0..3.0))));
    StatePrep::Circuit(Arc::new(Circuit::from_gates(n, g).expect("valid gates")))
}

fn build_with_fault(spec: &QnpuSpec, fault: Fault) -> Result<QnpuCircuit, QnpuError> {
    let mut q = build_qnpu(spec)?;
    let has_adder = spec.net_shift() != 0;
    if fault == Fault::AdderSignFlip && has_adder {
        q.circuit.push(Gate::cz(q.ancilla, 0));
    }
    Ok(q)
}

fn kind_label(kind: &QnpuKind) -> String {
    let dir = |d: &Direction| match d {
        Direction::Down => "down",
        Direction::Up => "up",
    };
    match kind {
        QnpuKind::Potential(_) => "P".into(),
        QnpuKind::Adder { dir: d, reps } => format!("A^{reps}({})", dir(d)),
        QnpuKind::AdderPotential { dir: d, reps, .. } => format!("A^{reps}_p({})", dir(d)),
        QnpuKind::AdderPotentialPotential { dir: d, reps, .. } => format!("A^{reps}_pp({})", dir(d)),
        QnpuKind::SourceOverlap => "S".into(),
    }
}

fn qnpu_kinds(n: usize, rng: &mut impl Rng) -> Vec<QnpuKind> {
    let mut kinds = vec![QnpuKind::Potential(random_prep(n, rng)), QnpuKind::SourceOverlap];
    for dir in [Direction::Down, Direction::Up] {
        for reps in [1, 2] {
            kinds.push(QnpuKind::Adder { dir, reps });
            kinds.push(QnpuKind::AdderPotential { dir, reps, enc: random_prep(n, rng) });
            kinds.push(QnpuKind::AdderPotentialPotential { dir, reps, enc: random_prep(n, rng), prev: random_prep(n, rng) });
        }
    }
    kinds
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Effective matrices and Hadamard-test values of every QNPU kind.
pub fn verify_qnpus(n: usize, draws: usize, seed: u64, fault: Fault) -> Result<Vec<Check>, QnpuError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 32));
    let mut out = Vec::new();
    for kind in qnpu_kinds(n, &mut rng) {
        let label = kind_label(&kind);
        let spec = QnpuSpec::new(n, kind)?;
        let q = build_with_fault(&spec, fault)?;
        let mut err = max_abs_diff(&circuit_effective_matrix(&q)?, &qnpu_matrix_oracle(&spec)?);
        for _ in 0..draws {
            let (u, v) = (random_prep(n, &mut rng), random_prep(n, &mut rng));
            for job in [HadamardJob::bilinear(u.clone(), spec.clone()), HadamardJob::linear(u, v, spec.clone())] {
                let got = job.evaluate_with(&q).map_err(hadamard_to_qnpu)?;
                let want = job.evaluate_oracle().map_err(hadamard_to_qnpu)?;
                err = err.max((got - want).abs());
            }
        }
        out.push(Check { suite: "qnpu", n, label, max_error: err, passed: err <= TOLERANCE });
    }
    Ok(out)
}

fn hadamard_to_qnpu(e: crate::hadamard::HadamardError) -> QnpuError {
    match e {
        crate::hadamard::HadamardError::Qnpu(q) => q,
        other => panic!("malformed verification job: {other}"),
    }
}

/// First-step cost of `case` on `n` qubits. Zero initial profiles are
/// replaced by a random unit-scale state so every term is exercised.
pub fn case_cost(case: CaseId, n: usize, rng: &mut impl Rng) -> Result<CostFunction, CaseError> {
    let setup = CaseConfig::defaults(case, n).setup()?;
    let layout = setup.layout()?;
    let history = if setup.initial.iter().all(|&v| v == 0.0) {
        History { prev: PrevState { lambda0: 1.0, prep: random_prep(n, rng) }, prev2: None }
    } else {
        setup.initial_history()?.0
    };
    Ok(CostFunction::assemble(&setup.problem, &layout, history, &setup.encoder())?)
}

/// Per-term and total comparisons for every case cost on `n` qubits.
pub fn verify_costs(n: usize, draws: usize, seed: u64, fault: Fault) -> Result<Vec<Check>, CaseError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc057 ^ ((n as u64) << 32));
    let mut out = Vec::new();
    for case in CaseId::ALL {
        let cost = case_cost(case, n, &mut rng)?;
        let params: Vec<Vec<f64>> = (0..draws)
            .map(|_| {
                let mut p = vec![rng.gen_range(0.1..3.0)];
                p.extend((0..cost.layout.param_count()).map(|_| rng.gen_range(-3.0..3.0)));
                p
            })
            .collect();
        for term in &cost.terms {
            let q = build_with_fault(term.qnpu(), fault).map_err(CostError::from)?;
            let mut err: f64 = 0.0;
            for p in &params {
                let job = term.hadamard_job(StatePrep::ansatz(&cost.layout, &p[1..]));
                let got = job.evaluate_with(&q).map_err(CostError::from)?;
                let want = job.evaluate_oracle().map_err(CostError::from)?;
                err = err.max((got - want).abs() * term.weight.abs().max(1.0));
            }
            out.push(Check {
                suite: "cost-term",
                n,
                label: format!("{case}/{}", term.label),
                max_error: err,
                passed: err <= TOLERANCE,
            });
        }
        if fault == Fault::None {
            let mut err: f64 = 0.0;
            for p in &params {
                let c = cost.evaluate_params(p, Backend::Circuit)?;
                let o = cost.evaluate_params(p, Backend::Oracle)?;
                err = err.max((c - o).abs());
            }
            out.push(Check { suite: "cost", n, label: case.to_string(), max_error: err, passed: err <= TOLERANCE });
        }
    }
    Ok(out)
}

/// QNPU sweeps for `2..=n_max` and case-cost sweeps for even sizes up to
/// `min(n_max, 4)`.
pub fn verify(n_max: usize, draws: usize, seed: u64, fault: Fault) -> Result<VerifyReport, CaseError> {
    let mut checks = Vec::new();
    for n in 2..=n_max {
        checks.extend(verify_qnpus(n, draws, seed, fault).map_err(CostError::from)?);
    }
    for n in (2..=n_max.min(4)).step_by(2) {
        checks.extend(verify_costs(n, draws, seed, fault)?);
    }
    Ok(VerifyReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduced_suite_passes() {
        let r = verify(2, 3, 1, Fault::None).unwrap();
        assert!(r.all_passed(), "{:?}", r.failures().collect::<Vec<_>>());
        assert!(r.checks.iter().any(|c| c.suite == "cost"));
    }

    #[test]
    fn adder_sign_flip_is_located() {
        let r = verify(2, 2, 1, Fault::AdderSignFlip).unwrap();
        let failed: Vec<_> = r.failures().collect();
        assert!(!failed.is_empty());
        assert!(failed.iter().filter(|c| c.suite == "qnpu").all(|c| c.label.starts_with('A')));
        assert!(failed.iter().any(|c| c.suite == "cost-term"));
        assert!(failed.iter().any(|c| c.suite == "qnpu" && c.label.starts_with("A^1(")));
        // Potential-only and overlap kinds have no adder and stay clean.
        assert!(r.checks.iter().filter(|c| c.label == "P" || c.label == "S").all(|c| c.passed));
    }
}
