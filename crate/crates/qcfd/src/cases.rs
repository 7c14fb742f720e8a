//! The six benchmark scenarios: configuration, defaults and the time loop.
//!
//! Every run advances the variational solver and a classical finite
//! difference twin side by side. The twin starts from the exact initial
//! profile, the variational side from its trained encoding.

use crate::ansatz::{build_bricklayer, AnsatzLayout};
use crate::cost::{encode_profile, Backend, CostError, CostFunction, CostObjective, Encoder, History, PrevState};
use crate::fd::{self, FdError};
use crate::metrics::{deviation, Deviation, DeviationReport, MetricsError};
use crate::optimizer::{optimize_timestep, Bounds, OptimizerConfig, Status};
use crate::problem::{face_samples, Boundary, BoundaryValue, Diffusion, ProblemError, ProblemSpec, Scheme, Velocity};
use crate::qnpu::StatePrep;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Schema(u32),
    #[error("invalid config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Fd(#[from] FdError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl CaseError {
    pub fn is_courant(&self) -> bool {
        matches!(self, CaseError::Problem(ProblemError::Courant { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseId {
    /// Transient heat conduction with a Gaussian bump in the diffusivity.
    HeatVariableAlpha,
    /// Steady advection-diffusion reached by pseudotime iteration.
    SteadyAdvDiff,
    /// Inviscid nonlinear convection of a right-moving discontinuity.
    RiemannUds,
    /// Inviscid nonlinear convection of a periodic triangle wave with both signs.
    SawtoothBidirectional,
    /// Viscous Burgers equation from a flat-topped bump.
    BurgersGauss,
    /// Linear wave equation between reflecting walls.
    Wave,
}

impl CaseId {
    pub const ALL: [CaseId; 6] = [
        CaseId::HeatVariableAlpha,
        CaseId::SteadyAdvDiff,
        CaseId::RiemannUds,
        CaseId::SawtoothBidirectional,
        CaseId::BurgersGauss,
        CaseId::Wave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CaseId::HeatVariableAlpha => "heat_variable_alpha",
            CaseId::SteadyAdvDiff => "steady_adv_diff",
            CaseId::RiemannUds => "riemann_uds",
            CaseId::SawtoothBidirectional => "sawtooth_bidirectional",
            CaseId::BurgersGauss => "burgers_gauss",
            CaseId::Wave => "wave",
        }
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One run as stored on disk. Unset optional fields take the case defaults
/// for the given register size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub schema_version: u32,
    pub case: CaseId,
    pub n: usize,
    /// Solution ansatz depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// `Δt·v_ref/Δx`; used when `dt` is unset. The reference speed is the
    /// inflow value for the Riemann case, the peak speed for the sawtooth and
    /// the transport speed for the steady case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub courant: Option<f64>,
    /// Number of solves. For the steady case this caps the pseudotime steps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Cell Péclet number of the steady case.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peclet: Option<f64>,
    /// Steady residual reduction that ends pseudotime iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_reduction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Depth of the ansatz that encodes the initial profile and diagonals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding_depth: Option<usize>,
    #[serde(default)]
    pub backend: Backend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
}

/// A fully resolved run.
#[derive(Debug, Clone)]
pub struct CaseSetup {
    pub case: CaseId,
    pub problem: ProblemSpec,
    pub initial: Vec<f64>,
    pub depth: usize,
    pub encoding_depth: usize,
    pub steps: usize,
    pub optimizer: OptimizerConfig,
    pub backend: Backend,
    pub lambda0_max: f64,
    pub steady: Option<SteadyControl>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyControl {
    pub peclet: f64,
    pub reduction: f64,
}

const ENCODING_TOL: f64 = 1e-12;
const ENCODING_ITERS: usize = 2000;

fn by_size<T>(n: usize, small: T, large: T) -> T {
    if n >= 6 {
        large
    } else {
        small
    }
}

fn gaussian_bump(x: f64) -> f64 {
    (-(10.0 * x - 3.5).powi(4)).exp()
}

/// Asymmetric triangle wave with peak 1 at `x = 0.25` and trough −0.5 at `x = 0.75`.
pub fn sawtooth(x: f64) -> f64 {
    if x < 0.25 {
        4.0 * x
    } else if x < 0.5 {
        -4.0 * x + 2.0
    } else if x < 0.75 {
        -2.0 * x + 1.0
    } else {
        2.0 * x - 2.0
    }
}

/// Heat-case diffusivity.
pub fn heat_alpha(x: f64) -> f64 {
    1.0 + (-100.0 * (0.5 - x).powi(2)).exp()
}

impl CaseConfig {
    /// The reference settings for `case` at register size `n`, every field set.
    pub fn defaults(case: CaseId, n: usize) -> Self {
        let mut c = Self {
            schema_version: SCHEMA_VERSION,
            case,
            n,
            depth: None,
            dt: None,
            courant: None,
            steps: None,
            scheme: Some(Scheme::Uds),
            peclet: None,
            residual_reduction: None,
            tol: Some(1e-7),
            max_iters: Some(300),
            seed: 0,
            encoding_depth: Some(9),
            backend: Backend::Oracle,
            optimizer: None,
        };
        match case {
            CaseId::HeatVariableAlpha => {
                c.depth = Some(by_size(n, 5, 9));
                c.dt = Some(0.018);
                c.steps = Some(40);
                c.tol = Some(1e-3);
                c.max_iters = Some(400);
            }
            CaseId::SteadyAdvDiff => {
                c.depth = Some(by_size(n, 4, 7));
                c.courant = Some(1.0);
                c.steps = Some(400);
                c.peclet = Some(0.3);
                c.residual_reduction = Some(1e-6);
                c.tol = Some(1e-6);
                c.max_iters = Some(200);
            }
            CaseId::RiemannUds => {
                c.depth = Some(by_size(n, 5, 8));
                c.courant = Some(by_size(n, 0.26, 1.0));
                c.steps = Some(30);
            }
            CaseId::SawtoothBidirectional => {
                c.depth = Some(by_size(n, 6, 8));
                c.courant = Some(by_size(n, 0.075, 0.03));
                c.steps = Some(by_size(n, 30, 16));
            }
            CaseId::BurgersGauss => {
                c.depth = Some(by_size(n, 5, 8));
                c.dt = Some(by_size(n, 0.0163, 0.0154));
                c.steps = Some(25);
            }
            CaseId::Wave => {
                c.depth = Some(by_size(n, 4, 7));
                c.dt = Some(0.05);
                c.steps = Some(30);
            }
        }
        c.optimizer = Some(default_optimizer(c.tol.unwrap_or(1e-7), c.max_iters.unwrap_or(300), 0));
        c
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Fills unset fields from [`CaseConfig::defaults`] and builds the problem.
    pub fn setup(&self) -> Result<CaseSetup, CaseError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CaseError::Schema(self.schema_version));
        }
        if self.n < 2 {
            return Err(CaseError::Field { field: "n", reason: format!("need at least 2 qubits, got {}", self.n) });
        }
        let d = Self::defaults(self.case, self.n);
        let depth = self.depth.or(d.depth).expect("default depth");
        let encoding_depth = self.encoding_depth.or(d.encoding_depth).expect("default encoding depth");
        let steps = self.steps.or(d.steps).expect("default steps");
        let scheme = self.scheme.or(d.scheme).expect("default scheme");
        let tol = self.tol.or(d.tol).expect("default tol");
        let max_iters = self.max_iters.or(d.max_iters).expect("default max_iters");
        for (field, v) in [("depth", depth), ("encoding_depth", encoding_depth), ("steps", steps)] {
            if v == 0 {
                return Err(CaseError::Field { field, reason: "must be positive".into() });
            }
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(CaseError::Field { field: "tol", reason: format!("must be positive, got {tol}") });
        }
        let mut optimizer = self.optimizer.clone().unwrap_or_else(|| default_optimizer(tol, max_iters, self.seed));
        optimizer.local.tol = tol;
        optimizer.local.max_iters = max_iters;
        optimizer.pso.seed = self.seed;

        let n = self.n;
        let points = 1usize << n;
        let dx_bounded = 1.0 / (points + 1) as f64;
        let dx_periodic = 1.0 / points as f64;
        let dt_from = |v_ref: f64, dx: f64| -> Result<f64, CaseError> {
            match (self.dt, self.courant.or(d.courant)) {
                (Some(dt), _) => Ok(dt),
                (None, Some(c)) => Ok(c * dx / v_ref),
                (None, None) => Err(CaseError::Field { field: "dt", reason: "neither dt nor courant given".into() }),
            }
        };
        let dirichlet = |l, r| Boundary::Bounded { left: BoundaryValue::Dirichlet(l), right: BoundaryValue::Dirichlet(r) };
        let base = |boundary, dt| ProblemSpec {
            n_qubits: n,
            boundary,
            a1: 0.0,
            a2: 1.0,
            a5: 0.0,
            diffusion: Diffusion::None,
            velocity: Velocity::None,
            scheme,
            dt,
        };

        let mut steady = None;
        let (problem, initial) = match self.case {
            CaseId::HeatVariableAlpha => {
                let mut p = base(dirichlet(0.0, 1.0), self.dt.or(d.dt).expect("default dt"));
                p.diffusion = Diffusion::Faces(face_samples(points, false, heat_alpha));
                (p, vec![0.0; points])
            }
            CaseId::SteadyAdvDiff => {
                let pe = self.peclet.or(d.peclet).expect("default peclet");
                if !(pe.is_finite() && pe > 0.0) {
                    return Err(CaseError::Field { field: "peclet", reason: format!("must be positive, got {pe}") });
                }
                let reduction = self.residual_reduction.or(d.residual_reduction).expect("default reduction");
                steady = Some(SteadyControl { peclet: pe, reduction });
                // Unit transport speed; the diffusivity carries the Péclet number.
                let mut p = base(dirichlet(0.0, 1.0), dt_from(1.0, dx_bounded)?);
                p.diffusion = Diffusion::Constant(dx_bounded / pe);
                p.velocity = Velocity::Prescribed(vec![1.0; points]);
                (p, vec![0.0; points])
            }
            CaseId::RiemannUds => {
                let right = BoundaryValue::Neumann(0.0);
                let mut p = base(Boundary::Bounded { left: BoundaryValue::Dirichlet(2.0), right }, dt_from(2.0, dx_bounded)?);
                p.velocity = Velocity::State;
                let y0 = p.xs().iter().map(|&x| if x <= 0.75 { 2.0 } else { 1.0 }).collect();
                (p, y0)
            }
            CaseId::SawtoothBidirectional => {
                let mut p = base(Boundary::Periodic, dt_from(1.0, dx_periodic)?);
                p.velocity = Velocity::State;
                let y0 = p.xs().iter().map(|&x| sawtooth(x)).collect();
                (p, y0)
            }
            CaseId::BurgersGauss => {
                let mut p = base(Boundary::Periodic, self.dt.or(d.dt).expect("default dt"));
                p.velocity = Velocity::State;
                p.diffusion = Diffusion::Constant(0.01);
                let y0 = p.xs().iter().map(|&x| gaussian_bump(x)).collect();
                (p, y0)
            }
            CaseId::Wave => {
                let mut p = base(dirichlet(0.0, 0.0), self.dt.or(d.dt).expect("default dt"));
                p.a1 = 1.0;
                p.a2 = 0.0;
                p.diffusion = Diffusion::Constant(1.0);
                let y0 = p.xs().iter().map(|&x| gaussian_bump(x)).collect();
                (p, y0)
            }
        };
        problem.validate()?;
        problem.courant_check(&initial)?;

        let mut scale = initial.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        if let Boundary::Bounded { left, right } = problem.boundary {
            for b in [left, right] {
                if let BoundaryValue::Dirichlet(v) = b {
                    scale = scale.max(v.abs());
                }
            }
        }
        Ok(CaseSetup {
            case: self.case,
            lambda0_max: 2.0 * (points as f64).sqrt() * scale,
            problem,
            initial,
            depth,
            encoding_depth,
            steps,
            optimizer,
            backend: self.backend,
            steady,
        })
    }
}

fn default_optimizer(tol: f64, max_iters: usize, seed: u64) -> OptimizerConfig {
    let mut o = OptimizerConfig { analytic_scale: true, ..OptimizerConfig::default() };
    o.local.tol = tol;
    o.local.max_iters = max_iters;
    o.pso.seed = seed;
    o
}

/// One solved time level.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    /// `λ₀·u` read from the optimized state.
    pub y_vqa: Vec<f64>,
    pub y_fd: Vec<f64>,
    pub lambda0: f64,
    pub params: Vec<f64>,
    pub cost: f64,
    /// Minimum of the classical form of the same step's system.
    pub cost_classical_min: f64,
    pub iterations: usize,
    pub pso_iterations: usize,
    pub grad_norm: f64,
    pub status: Status,
    pub eps_l2: f64,
    pub eps_tr: f64,
    /// Largest encoding residual among this step's diagonals.
    pub encoding_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub case: CaseId,
    pub n: usize,
    pub xs: Vec<f64>,
    pub initial: Vec<f64>,
    pub initial_encoding_residual: f64,
    pub steps: Vec<StepRecord>,
    /// Exact steady profile, where one exists.
    pub analytical: Option<Vec<f64>>,
    /// Final steady residual over the initial one, for pseudotime runs.
    pub steady_reduction: Option<f64>,
}

impl TimeSeries {
    pub fn report(&self) -> DeviationReport {
        DeviationReport::from_steps(self.steps.iter().map(|s| Deviation { eps_l2: s.eps_l2, eps_tr: s.eps_tr }).collect())
    }
}

/// Deviation that stays defined for zero profiles: `ε_tr` is 0 when both
/// vanish and 1 when only one does.
fn step_deviation(y_fd: &[f64], y_vqa: &[f64]) -> Result<Deviation, CaseError> {
    match deviation(y_fd, y_vqa) {
        Ok(d) => Ok(d),
        Err(MetricsError::ZeroNorm) => {
            let eps_l2 = y_fd.iter().zip(y_vqa).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            Ok(Deviation { eps_l2, eps_tr: if eps_l2 == 0.0 { 0.0 } else { 1.0 } })
        }
        Err(e) => Err(e.into()),
    }
}

impl CaseSetup {
    pub fn layout(&self) -> Result<AnsatzLayout, CaseError> {
        Ok(build_bricklayer(self.problem.n_qubits, self.depth).map_err(CostError::from)?)
    }

    pub fn encoder(&self) -> Encoder {
        Encoder::new(self.encoding_depth, ENCODING_TOL, ENCODING_ITERS)
    }

    /// History holding the trained encoding of the initial profile, and the
    /// training residual.
    pub fn initial_history(&self) -> Result<(History, f64), CaseError> {
        let enc_layout = build_bricklayer(self.problem.n_qubits, self.encoding_depth).map_err(CostError::from)?;
        let (prev, residual) = encode_profile(&self.initial, &enc_layout, ENCODING_TOL, ENCODING_ITERS)?;
        Ok((History { prev, prev2: None }, residual))
    }
}

pub fn run_case(config: &CaseConfig) -> Result<TimeSeries, CaseError> {
    run_case_with(config, |_| {})
}

/// Runs `config`, handing each finished step to `observe`.
pub fn run_case_with(config: &CaseConfig, mut observe: impl FnMut(&StepRecord)) -> Result<TimeSeries, CaseError> {
    let setup = config.setup()?;
    let p = &setup.problem;
    let layout = setup.layout()?;
    let encoder = setup.encoder();
    let (mut history, initial_encoding_residual) = setup.initial_history()?;
    let mut fd_prev = setup.initial.clone();
    let mut fd_prev2 = setup.initial.clone();
    let bounds = Bounds::ansatz(layout.param_count(), 0.0, setup.lambda0_max);

    let steady_r0 = setup.steady.map(|_| l2(&fd::steady_residual(p, &fd_prev)).max(f64::MIN_POSITIVE));
    let mut steady_reduction = None;

    let mut warm: Option<Vec<f64>> = None;
    let mut records = Vec::with_capacity(setup.steps);
    for step in 1..=setup.steps {
        let cost = CostFunction::assemble(p, &layout, history.clone(), &encoder)?;
        let obj = CostObjective {
            cost: &cost,
            backend: setup.backend,
            mode: setup.optimizer.local.gradient_mode,
            fd_step: setup.optimizer.local.fd_step,
        };
        let rule = |angles: &[f64]| cost.optimal_lambda0(angles).ok().flatten();
        let outcome = optimize_timestep(&obj, warm.as_deref(), &setup.optimizer, &bounds, Some(&rule));
        let m = outcome.minimum;
        let prep = StatePrep::ansatz(&layout, &m.x[1..]);
        let lambda0 = m.x[0];
        let y_vqa: Vec<f64> = prep.amplitudes().iter().map(|a| a * lambda0).collect();
        let cost_classical_min = cost.classical_cost(&cost.classical_solution()?)?;

        let y_fd = fd::classical_step(p, &fd_prev, Some(&fd_prev2))?;
        let dev = step_deviation(&y_fd, &y_vqa)?;
        let record = StepRecord {
            step,
            t: step as f64 * p.dt,
            y_vqa,
            y_fd: y_fd.clone(),
            lambda0,
            params: m.x.clone(),
            cost: m.value,
            cost_classical_min,
            iterations: m.iterations,
            pso_iterations: outcome.pso_iterations,
            grad_norm: m.grad_norm,
            status: m.status,
            eps_l2: dev.eps_l2,
            eps_tr: dev.eps_tr,
            encoding_residual: cost.encoding_residual,
        };
        observe(&record);
        records.push(record);

        history = History { prev2: Some(history.prev), prev: PrevState { lambda0, prep } };
        fd_prev2 = std::mem::replace(&mut fd_prev, y_fd);
        warm = Some(m.x);

        if let (Some(ctl), Some(r0)) = (setup.steady, steady_r0) {
            let ratio = l2(&fd::steady_residual(p, &fd_prev)) / r0;
            steady_reduction = Some(ratio);
            if ratio <= ctl.reduction {
                break;
            }
        }
    }

    let analytical = setup.steady.map(|ctl| {
        let dx = p.dx();
        p.xs().iter().map(|&x| fd::analytical_adv_diff(x, ctl.peclet, dx, 0.0, 1.0)).collect()
    });
    Ok(TimeSeries {
        case: setup.case,
        n: p.n_qubits,
        xs: p.xs(),
        initial: setup.initial,
        initial_encoding_residual,
        steps: records,
        analytical,
        steady_reduction,
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
