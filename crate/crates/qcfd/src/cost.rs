//! Cost function `J(λ₀, λ) = yᵀBy − 2fᵀy` with `y = λ₀·u(λ)`, written as a
//! weighted sum of Hadamard tests plus classical boundary corrections.
//!
//! Quantum terms always describe the periodic (wrap-around) form of each
//! band. On bounded domains the difference to the boundary-aware
//! finite-difference system is a handful of entries next to the walls; it is
//! kept as an explicit quadratic and linear correction.

use crate::ansatz::{build_bricklayer, train_encoding, AnsatzError, AnsatzLayout};
use crate::fd::{self, FdError};
use crate::hadamard::{HadamardError, HadamardJob};
use crate::optimizer::{central_fd_gradient, GradientMode, Objective};
use crate::problem::{row_stencil, Diffusion, ProblemError, ProblemSpec, Velocity};
use crate::qnpu::{Direction, QnpuError, QnpuKind, QnpuSpec, StatePrep};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Ansatz(#[from] AnsatzError),
    #[error(transparent)]
    Qnpu(#[from] QnpuError),
    #[error(transparent)]
    Hadamard(#[from] HadamardError),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error("expected {expected} parameters, got {found}")]
    ParamCount { expected: usize, found: usize },
    #[error("second-order time stepping needs the state two levels back")]
    MissingHistory,
    #[error("history state acts on {found} qubits, problem has {expected}")]
    HistorySize { expected: usize, found: usize },
    #[error("cost evaluated to a non-finite value")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Statevector emulation of every Hadamard-test circuit.
    Circuit,
    /// Dense algebra on the same encoded amplitudes.
    #[default]
    Oracle,
}

/// Upwind masks: `plus[k] = 1` where `v_k ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

pub fn mask_from_velocity(v: &[f64]) -> MaskPair {
    let plus: Vec<f64> = v.iter().map(|&x| if x >= 0.0 { 1.0 } else { 0.0 }).collect();
    let minus = plus.iter().map(|m| 1.0 - m).collect();
    MaskPair { plus, minus }
}

/// Cache key: register size and the bit patterns of the target values.
type EncodingKey = (usize, Vec<u64>);

/// Trains and caches amplitude encodings of diagonal vectors.
#[derive(Debug)]
pub struct Encoder {
    pub depth: usize,
    pub tol: f64,
    pub max_iters: usize,
    cache: Mutex<HashMap<EncodingKey, (StatePrep, f64)>>,
}

impl Encoder {
    pub fn new(depth: usize, tol: f64, max_iters: usize) -> Self {
        Self { depth, tol, max_iters, cache: Mutex::new(HashMap::new()) }
    }

    fn train(&self, n: usize, unit: &[f64]) -> Result<(StatePrep, f64), CostError> {
        let key = (n, unit.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(hit.clone());
        }
        let layout = build_bricklayer(n, self.depth)?;
        let t = train_encoding(&layout, unit, self.tol, self.max_iters)?;
        let out = (StatePrep::ansatz(&layout, &t.params.lambda_c), t.residual);
        self.cache.lock().expect("cache lock").insert(key, out.clone());
        Ok(out)
    }
}

impl Default for Encoder {
    fn default() -> Self {
        Self::new(9, 1e-12, 2000)
    }
}

/// `values ≈ sign·scale·amplitudes(state)` for the `q`-th diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalEncoding {
    pub q: isize,
    pub scale: f64,
    pub sign: f64,
    pub state: StatePrep,
    /// `values / (sign·scale)`: what the state encodes ideally.
    pub exact: Vec<f64>,
    pub residual: f64,
}

impl DiagonalEncoding {
    pub fn decoded(&self) -> Vec<f64> {
        self.state.amplitudes().iter().map(|a| a * self.sign * self.scale).collect()
    }
}

/// Encodes one diagonal. Constant vectors map to the uniform state and any
/// vector parallel to a `known` preparation reuses it; everything else is
/// trained. Returns `None` for the zero vector.
pub fn encode_diagonal(
    values: &[f64],
    q: isize,
    encoder: &Encoder,
    known: &[&StatePrep],
) -> Result<Option<DiagonalEncoding>, CostError> {
    let scale = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if scale == 0.0 {
        return Ok(None);
    }
    let n = values.len().trailing_zeros() as usize;
    let unit: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let parallel = |amps: &[f64]| -> Option<f64> {
        [1.0, -1.0].into_iter().find(|&sign| unit.iter().zip(amps).all(|(a, b)| (a - sign * b).abs() <= 1e-14))
    };
    let uniform = StatePrep::Uniform(n);
    let candidates = std::iter::once(&uniform).chain(known.iter().copied());
    for prep in candidates {
        if let Some(sign) = parallel(&prep.amplitudes()) {
            let exact = unit.iter().map(|u| u * sign).collect();
            return Ok(Some(DiagonalEncoding { q, scale, sign, state: prep.clone(), exact, residual: 0.0 }));
        }
    }
    let (state, residual) = encoder.train(n, &unit)?;
    Ok(Some(DiagonalEncoding { q, scale, sign: 1.0, state, exact: unit, residual }))
}

/// A previous time level `w = λ₀·u`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevState {
    pub lambda0: f64,
    pub prep: StatePrep,
}

impl PrevState {
    pub fn values(&self) -> Vec<f64> {
        self.prep.amplitudes().iter().map(|a| a * self.lambda0).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub prev: PrevState,
    /// Two levels back; defaults to `prev` for second-order problems.
    pub prev2: Option<PrevState>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TermJob {
    Bilinear(QnpuSpec),
    Linear { qnpu: QnpuSpec, previous: StatePrep },
}

/// `(M x)_i = diag_i · x_{i+shift}` with periodic wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDiagonal {
    pub shift: isize,
    pub diag: Vec<f64>,
}

impl ShiftedDiagonal {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len() as isize;
        self.diag
            .iter()
            .enumerate()
            .map(|(i, d)| d * x[(i as isize + self.shift).rem_euclid(n) as usize])
            .collect()
    }

    fn add_symmetric(&self, q: &mut DMatrix<f64>, w: f64) {
        let n = self.diag.len() as isize;
        for (i, d) in self.diag.iter().enumerate() {
            let j = (i as isize + self.shift).rem_euclid(n) as usize;
            q[(i, j)] += 0.5 * w * d;
            q[(j, i)] += 0.5 * w * d;
        }
    }
}

/// One weighted Hadamard test, contributing `weight·λ₀^e·value`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTerm {
    pub label: String,
    pub weight: f64,
    pub lambda0_exponent: u32,
    pub job: TermJob,
    /// Operator the QNPU realizes when every encoding is exact.
    pub exact: ShiftedDiagonal,
}

impl CostTerm {
    pub fn hadamard_job(&self, current: StatePrep) -> HadamardJob {
        match &self.job {
            TermJob::Bilinear(q) => HadamardJob::bilinear(current, q.clone()),
            TermJob::Linear { qnpu, previous } => HadamardJob::linear(current, previous.clone(), qnpu.clone()),
        }
    }

    pub fn qnpu(&self) -> &QnpuSpec {
        match &self.job {
            TermJob::Bilinear(q) | TermJob::Linear { qnpu: q, .. } => q,
        }
    }
}

/// Classical remainder `λ₀²·uᵀQu + λ₀·gᵀu`, stored sparsely.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Correction {
    pub quadratic: Vec<(usize, usize, f64)>,
    pub linear: Vec<(usize, f64)>,
}

impl Correction {
    pub fn is_empty(&self) -> bool {
        self.quadratic.is_empty() && self.linear.is_empty()
    }

    pub fn value(&self, lambda0: f64, u: &[f64]) -> f64 {
        let q: f64 = self.quadratic.iter().map(|&(i, j, v)| u[i] * v * u[j]).sum();
        let g: f64 = self.linear.iter().map(|&(i, v)| v * u[i]).sum();
        lambda0 * lambda0 * q + lambda0 * g
    }

    /// Largest distance of any entry from the nearest domain end.
    pub fn max_wall_distance(&self, n: usize) -> usize {
        let d = |i: usize| i.min(n - 1 - i);
        self.quadratic
            .iter()
            .map(|&(i, j, _)| d(i).max(d(j)))
            .chain(self.linear.iter().map(|&(i, _)| d(i)))
            .max()
            .unwrap_or(0)
    }
}

fn shift_dir(q: isize) -> Direction {
    if q > 0 {
        Direction::Down
    } else {
        Direction::Up
    }
}

fn uniform_exact(n_points: usize) -> Vec<f64> {
    vec![1.0 / (n_points as f64).sqrt(); n_points]
}

struct TermSet {
    n: usize,
    terms: Vec<CostTerm>,
}

impl TermSet {
    fn push(&mut self, label: &str, weight: f64, exponent: u32, job: TermJob, exact: ShiftedDiagonal) {
        if weight != 0.0 {
            self.terms.push(CostTerm { label: label.into(), weight, lambda0_exponent: exponent, job, exact });
        }
    }

    fn spec(&self, kind: QnpuKind) -> Result<QnpuSpec, CostError> {
        Ok(QnpuSpec::new(self.n, kind)?)
    }

    fn potential_or_adder(&self, enc: &DiagonalEncoding) -> Result<QnpuSpec, CostError> {
        let kind = if enc.q == 0 {
            QnpuKind::Potential(enc.state.clone())
        } else {
            QnpuKind::AdderPotential { dir: shift_dir(enc.q), reps: enc.q.unsigned_abs(), enc: enc.state.clone() }
        };
        self.spec(kind)
    }
}

/// Mass and source terms of the implicit time discretization.
pub fn assemble_potential_and_source(p: &ProblemSpec, hist: &History) -> Result<Vec<CostTerm>, CostError> {
    let mut set = TermSet { n: p.n_qubits, terms: vec![] };
    let n_p = p.points();
    let (dx, dt) = (p.dx(), p.dt);
    set.push(
        "mass",
        p.mass() * dx * (n_p as f64).sqrt(),
        2,
        TermJob::Bilinear(set.spec(QnpuKind::Potential(StatePrep::Uniform(p.n_qubits)))?),
        ShiftedDiagonal { shift: 0, diag: uniform_exact(n_p) },
    );
    let ones = ShiftedDiagonal { shift: 0, diag: vec![1.0; n_p] };
    let overlap = set.spec(QnpuKind::SourceOverlap)?;
    let w1 = -2.0 * dx * (p.a2 / dt + 2.0 * p.a1 / (dt * dt)) * hist.prev.lambda0;
    set.push(
        "source_prev",
        w1,
        1,
        TermJob::Linear { qnpu: overlap.clone(), previous: hist.prev.prep.clone() },
        ones.clone(),
    );
    if p.second_order_time() {
        let prev2 = hist.prev2.as_ref().ok_or(CostError::MissingHistory)?;
        let w2 = 2.0 * dx * p.a1 / (dt * dt) * prev2.lambda0;
        set.push("source_prev2", w2, 1, TermJob::Linear { qnpu: overlap, previous: prev2.prep.clone() }, ones);
    }
    Ok(set.terms)
}

/// Diffusion terms `Δx·yᵀLy` in periodic form.
pub fn assemble_diffusion(p: &ProblemSpec, encoder: &Encoder) -> Result<Vec<CostTerm>, CostError> {
    let mut set = TermSet { n: p.n_qubits, terms: vec![] };
    let n_p = p.points();
    let dx = p.dx();
    match &p.diffusion {
        Diffusion::None => {}
        Diffusion::Constant(a) => {
            set.push(
                "diffusion_main",
                2.0 * a * (n_p as f64).sqrt() / dx,
                2,
                TermJob::Bilinear(set.spec(QnpuKind::Potential(StatePrep::Uniform(p.n_qubits)))?),
                ShiftedDiagonal { shift: 0, diag: uniform_exact(n_p) },
            );
            set.push(
                "diffusion_off",
                -2.0 * a / dx,
                2,
                TermJob::Bilinear(set.spec(QnpuKind::Adder { dir: Direction::Down, reps: 1 })?),
                ShiftedDiagonal { shift: 1, diag: vec![1.0; n_p] },
            );
        }
        Diffusion::Faces(_) => {
            let main: Vec<f64> = (0..n_p).map(|i| p.faces(i).0 + p.faces(i).1).collect();
            let off: Vec<f64> = (0..n_p).map(|i| p.faces(i).1).collect();
            for (label, values, q, factor) in [("diffusion_main", main, 0isize, 1.0), ("diffusion_off", off, 1, -2.0)] {
                if let Some(e) = encode_diagonal(&values, q, encoder, &[])? {
                    let spec = set.potential_or_adder(&e)?;
                    set.push(
                        label,
                        factor * e.sign * e.scale / dx,
                        2,
                        TermJob::Bilinear(spec),
                        ShiftedDiagonal { shift: q, diag: e.exact.clone() },
                    );
                }
            }
        }
    }
    Ok(set.terms)
}

/// Relative Courant overshoot tolerated on states produced during a run.
pub const STEP_COURANT_SLACK: f64 = 0.02;

/// Explicit convection `2Δx·yᵀ(a4·w_x)` in periodic form.
pub fn assemble_convection(p: &ProblemSpec, hist: &History, encoder: &Encoder) -> Result<Vec<CostTerm>, CostError> {
    let mut set = TermSet { n: p.n_qubits, terms: vec![] };
    let l0 = hist.prev.lambda0;
    if l0 == 0.0 || matches!(p.velocity, Velocity::None) {
        return Ok(set.terms);
    }
    let n_p = p.points();
    let w = hist.prev.values();
    // Encoded and variational states overshoot bounded profiles slightly, so
    // a run configured at exactly Courant 1 must not trip mid-run.
    p.courant_check_within(&w, STEP_COURANT_SLACK)?;
    let v = p.velocity_field(&w).expect("velocity present");
    let prev = &hist.prev.prep;
    let u_prev = prev.amplitudes();
    let state = matches!(p.velocity, Velocity::State);

    // Per offset: coefficient vectors over rows. For prescribed velocity the
    // velocity is folded in; for state velocity it stays a second copy of w.
    let mut bands: HashMap<isize, Vec<f64>> = HashMap::new();
    for k in 0..n_p {
        for (o, c) in row_stencil(p.scheme, v[k] >= 0.0) {
            let entry = bands.entry(o).or_insert_with(|| vec![0.0; n_p]);
            entry[k] += match (state, o) {
                (false, 0) => c * v[k].abs(),
                (false, _) => c * v[k],
                (true, 0) => c * u_prev[k].abs(),
                (true, _) => c,
            };
        }
    }
    let mut offsets: Vec<isize> = bands.keys().copied().collect();
    offsets.sort_unstable();
    for o in offsets {
        let band = &bands[&o];
        let label = format!("convection_{o:+}");
        if !state {
            if let Some(e) = encode_diagonal(band, o, encoder, &[])? {
                let spec = set.potential_or_adder(&e)?;
                set.push(
                    &label,
                    2.0 * l0 * e.sign * e.scale,
                    1,
                    TermJob::Linear { qnpu: spec, previous: prev.clone() },
                    ShiftedDiagonal { shift: o, diag: e.exact.clone() },
                );
            }
        } else if o == 0 {
            if let Some(e) = encode_diagonal(band, 0, encoder, &[prev])? {
                set.push(
                    &label,
                    2.0 * l0 * l0.abs() * e.sign * e.scale,
                    1,
                    TermJob::Linear { qnpu: set.spec(QnpuKind::Potential(e.state.clone()))?, previous: prev.clone() },
                    ShiftedDiagonal { shift: 0, diag: e.exact.clone() },
                );
            }
        } else if band.iter().all(|&c| c == band[0]) {
            // Constant coefficient: the copy of w is the only potential.
            let kind = QnpuKind::AdderPotential { dir: shift_dir(o), reps: o.unsigned_abs(), enc: prev.clone() };
            set.push(
                &label,
                2.0 * l0 * l0 * band[0],
                1,
                TermJob::Linear { qnpu: set.spec(kind)?, previous: prev.clone() },
                ShiftedDiagonal { shift: o, diag: u_prev.clone() },
            );
        } else if let Some(e) = encode_diagonal(band, o, encoder, &[])? {
            let kind = QnpuKind::AdderPotentialPotential {
                dir: shift_dir(o),
                reps: o.unsigned_abs(),
                enc: e.state.clone(),
                prev: prev.clone(),
            };
            let diag = e.exact.iter().zip(&u_prev).map(|(a, b)| a * b).collect();
            set.push(
                &label,
                2.0 * l0 * l0 * e.sign * e.scale,
                1,
                TermJob::Linear { qnpu: set.spec(kind)?, previous: prev.clone() },
                ShiftedDiagonal { shift: o, diag },
            );
        }
    }
    Ok(set.terms)
}

fn history_values(hist: &History) -> (Vec<f64>, Vec<f64>) {
    let w = hist.prev.values();
    let w2 = hist.prev2.as_ref().map_or_else(|| w.clone(), PrevState::values);
    (w, w2)
}

fn exact_forms(terms: &[CostTerm], n_p: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut q = DMatrix::zeros(n_p, n_p);
    let mut g = DVector::zeros(n_p);
    for t in terms {
        match &t.job {
            TermJob::Bilinear(_) => t.exact.add_symmetric(&mut q, t.weight),
            TermJob::Linear { previous, .. } => {
                for (gi, m) in g.iter_mut().zip(t.exact.apply(&previous.amplitudes())) {
                    *gi += t.weight * m;
                }
            }
        }
    }
    (q, g)
}

/// Difference between the boundary-aware finite-difference cost and the
/// exact periodic forms of `terms`. Empty on periodic grids.
pub fn boundary_corrections(p: &ProblemSpec, hist: &History, terms: &[CostTerm]) -> Result<Correction, CostError> {
    let n_p = p.points();
    let (w, w2) = history_values(hist);
    let sys = fd::build_system(p, &w, Some(&w2))?;
    let b = sys.matrix.to_dense();
    let (q, g) = exact_forms(terms, n_p);
    let dq = &b - &q;
    let dg = DVector::from_iterator(n_p, sys.rhs.iter().map(|f| -2.0 * f)) - &g;
    let scale = 1.0 + b.abs().max() + dg.abs().max().max(g.abs().max());
    let tol = 1e-12 * scale;
    let mut c = Correction::default();
    for i in 0..n_p {
        for j in 0..n_p {
            if dq[(i, j)].abs() > tol {
                c.quadratic.push((i, j, dq[(i, j)]));
            }
        }
        if dg[i].abs() > tol {
            c.linear.push((i, dg[i]));
        }
    }
    Ok(c)
}

/// Per-step cost `J(λ₀, λ) = Σ_t w_t·λ₀^{e_t}·⟨job_t⟩ + correction`.
#[derive(Debug, Clone)]
pub struct CostFunction {
    pub problem: ProblemSpec,
    pub layout: AnsatzLayout,
    pub terms: Vec<CostTerm>,
    pub correction: Correction,
    pub history: History,
    /// Largest training residual among the encodings used.
    pub encoding_residual: f64,
    quad: DMatrix<f64>,
    lin: DVector<f64>,
}

impl CostFunction {
    /// Builds all terms for one step. `layout` is the solution ansatz.
    pub fn assemble(
        problem: &ProblemSpec,
        layout: &AnsatzLayout,
        history: History,
        encoder: &Encoder,
    ) -> Result<Self, CostError> {
        problem.validate()?;
        let n = problem.n_qubits;
        for s in std::iter::once(&history.prev).chain(history.prev2.as_ref()) {
            if s.prep.n_qubits() != n {
                return Err(CostError::HistorySize { expected: n, found: s.prep.n_qubits() });
            }
        }
        if layout.n_qubits() != n {
            return Err(CostError::HistorySize { expected: n, found: layout.n_qubits() });
        }
        let mut history = history;
        if problem.second_order_time() && history.prev2.is_none() {
            history.prev2 = Some(history.prev.clone());
        }
        let mut terms = assemble_potential_and_source(problem, &history)?;
        terms.extend(assemble_diffusion(problem, encoder)?);
        terms.extend(assemble_convection(problem, &history, encoder)?);
        let correction = boundary_corrections(problem, &history, &terms)?;
        Self::from_terms(problem.clone(), layout.clone(), terms, correction, history)
    }

    /// Wraps an explicit term list; used for hand-built costs.
    pub fn from_terms(
        problem: ProblemSpec,
        layout: AnsatzLayout,
        terms: Vec<CostTerm>,
        correction: Correction,
        history: History,
    ) -> Result<Self, CostError> {
        let n_p = problem.points();
        let mut quad = DMatrix::zeros(n_p, n_p);
        let mut lin = DVector::zeros(n_p);
        let mut residual: f64 = 0.0;
        for t in &terms {
            let spec = t.qnpu();
            match &t.job {
                TermJob::Bilinear(_) => {
                    for j in 0..n_p {
                        let mut e = vec![0.0; n_p];
                        e[j] = 1.0;
                        for (i, m) in spec.apply_effective(&e).into_iter().enumerate() {
                            quad[(i, j)] += 0.5 * t.weight * m;
                            quad[(j, i)] += 0.5 * t.weight * m;
                        }
                    }
                }
                TermJob::Linear { previous, .. } => {
                    for (gi, m) in lin.iter_mut().zip(spec.apply_effective(&previous.amplitudes())) {
                        *gi += t.weight * m;
                    }
                }
            }
            residual = residual.max(encoding_error(t));
        }
        for &(i, j, v) in &correction.quadratic {
            quad[(i, j)] += v;
        }
        for &(i, v) in &correction.linear {
            lin[i] += v;
        }
        Ok(Self { problem, layout, terms, correction, history, encoding_residual: residual, quad, lin })
    }

    pub fn n_params(&self) -> usize {
        1 + self.layout.param_count()
    }

    /// Dense compiled form `(Q, g)` with `J = λ₀²·uᵀQu + λ₀·gᵀu`.
    pub fn compiled(&self) -> (&DMatrix<f64>, &DVector<f64>) {
        (&self.quad, &self.lin)
    }

    fn state(&self, angles: &[f64]) -> Result<Vec<f64>, CostError> {
        if angles.len() != self.layout.param_count() {
            return Err(CostError::ParamCount { expected: self.layout.param_count(), found: angles.len() });
        }
        Ok(self.layout.real_state(angles)?)
    }

    fn compiled_parts(&self, u: &[f64]) -> (f64, f64) {
        let u = DVector::from_column_slice(u);
        ((&self.quad * &u).dot(&u), self.lin.dot(&u))
    }

    /// Raw Hadamard-test values of every term at `angles`.
    pub fn term_values(&self, angles: &[f64], backend: Backend) -> Result<Vec<f64>, CostError> {
        self.state(angles)?;
        let current = StatePrep::ansatz(&self.layout, angles);
        self.terms
            .par_iter()
            .map(|t| {
                let job = t.hadamard_job(current.clone());
                Ok(match backend {
                    Backend::Circuit => job.evaluate()?,
                    Backend::Oracle => job.evaluate_oracle()?,
                })
            })
            .collect()
    }

    pub fn evaluate(&self, lambda0: f64, angles: &[f64], backend: Backend) -> Result<f64, CostError> {
        let u = self.state(angles)?;
        let j = match backend {
            Backend::Oracle => {
                let (b, f) = self.compiled_parts(&u);
                lambda0 * lambda0 * b + lambda0 * f
            }
            Backend::Circuit => {
                let vals = self.term_values(angles, backend)?;
                let s: f64 = self
                    .terms
                    .iter()
                    .zip(&vals)
                    .map(|(t, v)| t.weight * lambda0.powi(t.lambda0_exponent as i32) * v)
                    .sum();
                s + self.correction.value(lambda0, &u)
            }
        };
        if !j.is_finite() {
            return Err(CostError::NonFinite);
        }
        Ok(j)
    }

    /// `params = (λ₀, λ…)`.
    pub fn evaluate_params(&self, params: &[f64], backend: Backend) -> Result<f64, CostError> {
        let (l0, angles) = split(params)?;
        self.evaluate(l0, angles, backend)
    }

    /// Minimizing scale for fixed angles: `λ₀* = −gᵀu / (2·uᵀQu)`.
    pub fn optimal_lambda0(&self, angles: &[f64]) -> Result<Option<f64>, CostError> {
        let u = self.state(angles)?;
        let (b, f) = self.compiled_parts(&u);
        Ok((b > 0.0).then(|| -f / (2.0 * b)))
    }

    /// Classical cost `yᵀBy − 2fᵀy` of the boundary-aware system at `y`.
    pub fn classical_cost(&self, y: &[f64]) -> Result<f64, CostError> {
        let (w, w2) = history_values(&self.history);
        let sys = fd::build_system(&self.problem, &w, Some(&w2))?;
        Ok(fd::classical_cost(&sys, y))
    }

    /// Classical minimizer of this step.
    pub fn classical_solution(&self) -> Result<Vec<f64>, CostError> {
        let (w, w2) = history_values(&self.history);
        Ok(fd::classical_step(&self.problem, &w, Some(&w2))?)
    }

    pub fn gradient(&self, params: &[f64], mode: GradientMode, backend: Backend, fd_step: f64) -> Result<Vec<f64>, CostError> {
        let (l0, angles) = split(params)?;
        match mode {
            GradientMode::CentralFd => {
                let f = |x: &[f64]| self.evaluate_params(x, backend).unwrap_or(f64::NAN);
                let g = central_fd_gradient(&f, params, fd_step);
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(CostError::NonFinite);
                }
                Ok(g)
            }
            GradientMode::UniformShift => {
                let mut g = vec![self.lambda0_derivative(l0, angles, backend)?];
                let shifted = |j: usize, s: f64| -> Result<f64, CostError> {
                    let mut a = angles.to_vec();
                    a[j] += s;
                    self.evaluate(l0, &a, backend)
                };
                for j in 0..angles.len() {
                    g.push(0.5 * (shifted(j, PI / 2.0)? - shifted(j, -PI / 2.0)?));
                }
                Ok(g)
            }
            GradientMode::Shift => match backend {
                Backend::Oracle => self.oracle_shift_gradient(l0, angles),
                Backend::Circuit => self.circuit_shift_gradient(l0, angles),
            },
        }
    }

    fn lambda0_derivative(&self, l0: f64, angles: &[f64], backend: Backend) -> Result<f64, CostError> {
        let u = self.state(angles)?;
        Ok(match backend {
            Backend::Oracle => {
                let (b, f) = self.compiled_parts(&u);
                2.0 * l0 * b + f
            }
            Backend::Circuit => {
                let vals = self.term_values(angles, backend)?;
                let mut d: f64 = self
                    .terms
                    .iter()
                    .zip(&vals)
                    .map(|(t, v)| {
                        let e = t.lambda0_exponent as i32;
                        t.weight * e as f64 * l0.powi(e - 1) * v
                    })
                    .sum();
                // value(1) = q + g, value(−1) = q − g.
                let (vp, vm) = (self.correction.value(1.0, &u), self.correction.value(-1.0, &u));
                d += l0 * (vp + vm) + 0.5 * (vp - vm);
                d
            }
        })
    }

    fn oracle_shift_gradient(&self, l0: f64, angles: &[f64]) -> Result<Vec<f64>, CostError> {
        let u = DVector::from_vec(self.state(angles)?);
        let qu = &self.quad * &u;
        let mut g = vec![2.0 * l0 * qu.dot(&u) + self.lin.dot(&u)];
        let rest: Vec<f64> = (0..angles.len())
            .into_par_iter()
            .map(|j| {
                let mut a = angles.to_vec();
                a[j] += PI;
                // ∂u/∂λⱼ = ½·u(λ + π eⱼ)
                let du = DVector::from_vec(self.layout.real_state(&a).expect("sized")) * 0.5;
                l0 * l0 * 2.0 * qu.dot(&du) + l0 * self.lin.dot(&du)
            })
            .collect();
        g.extend(rest);
        Ok(g)
    }

    fn circuit_shift_gradient(&self, l0: f64, angles: &[f64]) -> Result<Vec<f64>, CostError> {
        let mut g = vec![self.lambda0_derivative(l0, angles, Backend::Circuit)?];
        let u = self.state(angles)?;
        let corr_q: Vec<(usize, usize, f64)> = self.correction.quadratic.clone();
        let rest: Result<Vec<f64>, CostError> = (0..angles.len())
            .into_par_iter()
            .map(|j| {
                let at = |s: f64| {
                    let mut a = angles.to_vec();
                    a[j] += s;
                    StatePrep::ansatz(&self.layout, &a)
                };
                let mut d = 0.0;
                for t in &self.terms {
                    let scale = t.weight * l0.powi(t.lambda0_exponent as i32);
                    d += match t.job {
                        TermJob::Bilinear(_) => {
                            let p = t.hadamard_job(at(PI / 2.0)).evaluate()?;
                            let m = t.hadamard_job(at(-PI / 2.0)).evaluate()?;
                            scale * 0.5 * (p - m)
                        }
                        TermJob::Linear { .. } => {
                            let p = t.hadamard_job(at(PI)).evaluate()?;
                            let m = t.hadamard_job(at(-PI)).evaluate()?;
                            scale * 0.25 * (p - m)
                        }
                    };
                }
                let mut a = angles.to_vec();
                a[j] += PI;
                let du: Vec<f64> = self.layout.real_state(&a)?.iter().map(|x| 0.5 * x).collect();
                let q: f64 = corr_q.iter().map(|&(r, c, v)| v * (du[r] * u[c] + u[r] * du[c])).sum();
                let lg: f64 = self.correction.linear.iter().map(|&(r, v)| v * du[r]).sum();
                Ok(d + l0 * l0 * q + l0 * lg)
            })
            .collect();
        g.extend(rest?);
        Ok(g)
    }
}

/// Max deviation between the QNPU's encoded diagonal and its exact form.
fn encoding_error(t: &CostTerm) -> f64 {
    let n_p = t.exact.diag.len();
    let mut probe = vec![0.0; n_p];
    let mut err: f64 = 0.0;
    for i in 0..n_p {
        let j = (i as isize + t.exact.shift).rem_euclid(n_p as isize) as usize;
        probe.iter_mut().for_each(|x| *x = 0.0);
        probe[j] = 1.0;
        let col = t.qnpu().apply_effective(&probe);
        let want = if matches!(t.qnpu().kind, QnpuKind::SourceOverlap) { 1.0 } else { t.exact.diag[i] };
        err = err.max((col[i] - want).abs());
    }
    err
}

fn split(params: &[f64]) -> Result<(f64, &[f64]), CostError> {
    params.split_first().map(|(l, a)| (*l, a)).ok_or(CostError::ParamCount { expected: 1, found: 0 })
}

/// Adapter exposing a cost to the optimizers.
pub struct CostObjective<'a> {
    pub cost: &'a CostFunction,
    pub backend: Backend,
    pub mode: GradientMode,
    pub fd_step: f64,
}

impl Objective for CostObjective<'_> {
    fn dim(&self) -> usize {
        self.cost.n_params()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.cost.evaluate_params(x, self.backend).unwrap_or(f64::INFINITY)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.cost
            .gradient(x, self.mode, self.backend, self.fd_step)
            .unwrap_or_else(|_| vec![f64::NAN; x.len()])
    }
}

/// Previous state from a raw profile, trained on `layout`.
pub fn encode_profile(values: &[f64], layout: &AnsatzLayout, tol: f64, max_iters: usize) -> Result<(PrevState, f64), CostError> {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok((PrevState { lambda0: 0.0, prep: StatePrep::Uniform(layout.n_qubits()) }, 0.0));
    }
    let t = train_encoding(layout, values, tol, max_iters)?;
    Ok((PrevState { lambda0: norm, prep: StatePrep::ansatz(layout, &t.params.lambda_c) }, t.residual))
}

/// Shared handle used when costs for many steps reuse one encoder.
pub type SharedEncoder = Arc<Encoder>;
