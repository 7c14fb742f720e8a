//! Global-to-local minimization: a seeded particle swarm followed by BFGS.
//!
//! Both optimizers work on any [`Objective`]. The variational cost wires its
//! parameter-shift gradient in through [`crate::cost::CostObjective`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// A differentiable scalar function of a real parameter vector.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMode {
    /// Per-term parameter shift: ±π/2 for expectation terms, ±π for overlaps.
    Shift,
    /// The blanket ±π/2 rule for every term. Biased on overlap terms; kept for comparison.
    UniformShift,
    CentralFd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self { particles: 100, iterations: 10, inertia: 0.7, cognitive: 1.5, social: 1.5, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalConfig {
    pub gradient_mode: GradientMode,
    /// Stop once `‖∇J‖₂ < tol`.
    pub tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self { gradient_mode: GradientMode::Shift, tol: 1e-6, max_iters: 200, fd_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub pso: PsoConfig,
    pub local: LocalConfig,
    pub warm_start: bool,
    /// Replace the optimizer's λ₀ by the closed-form `F̂/B̂` after each local run.
    /// Only meaningful for costs that are quadratic in λ₀.
    pub analytic_scale: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            local: LocalConfig::default(),
            warm_start: true,
            analytic_scale: false,
        }
    }
}

/// Box constraints for the swarm.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    /// `λ₀ ∈ [lambda0_min, lambda0_max]`, every angle in `[−π, π]`.
    pub fn ansatz(n_angles: usize, lambda0_min: f64, lambda0_max: f64) -> Self {
        let pi = std::f64::consts::PI;
        let mut lower = vec![-pi; n_angles + 1];
        let mut upper = vec![pi; n_angles + 1];
        lower[0] = lambda0_min;
        upper[0] = lambda0_max;
        Self { lower, upper }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max_iters",
            Status::LineSearchFailed => "line_search_failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub status: Status,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Particle swarm over `bounds`; deterministic for a fixed seed.
///
/// Particles are evaluated in parallel but all random draws happen on one
/// generator in a fixed order, so the trajectory does not depend on threading.
pub fn pso_run(obj: &dyn Objective, cfg: &PsoConfig, bounds: &Bounds) -> (Vec<f64>, f64) {
    let dim = bounds.lower.len();
    assert_eq!(dim, obj.dim(), "bounds and objective disagree on dimension");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span: Vec<f64> = bounds.lower.iter().zip(&bounds.upper).map(|(l, u)| u - l).collect();
    let n = cfg.particles.max(1);

    let mut pos: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|d| bounds.lower[d] + rng.gen::<f64>() * span[d]).collect())
        .collect();
    let mut vel: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|d| (rng.gen::<f64>() - 0.5) * 0.2 * span[d]).collect())
        .collect();
    let evaluate = |pts: &[Vec<f64>]| -> Vec<f64> {
        pts.par_iter()
            .map(|p| {
                let v = obj.value(p);
                if v.is_finite() { v } else { f64::INFINITY }
            })
            .collect()
    };
    let mut vals = evaluate(&pos);
    let mut best_pos = pos.clone();
    let mut best_val = vals.clone();
    let mut g = argmin(&best_val);
    let mut g_pos = best_pos[g].clone();
    let mut g_val = best_val[g];

    for _ in 0..cfg.iterations {
        for i in 0..n {
            for d in 0..dim {
                let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
                vel[i][d] = cfg.inertia * vel[i][d]
                    + cfg.cognitive * r1 * (best_pos[i][d] - pos[i][d])
                    + cfg.social * r2 * (g_pos[d] - pos[i][d]);
                pos[i][d] = (pos[i][d] + vel[i][d]).clamp(bounds.lower[d], bounds.upper[d]);
            }
        }
        vals = evaluate(&pos);
        for i in 0..n {
            if vals[i] < best_val[i] {
                best_val[i] = vals[i];
                best_pos[i] = pos[i].clone();
            }
        }
        g = argmin(&best_val);
        if best_val[g] < g_val {
            g_val = best_val[g];
            g_pos = best_pos[g].clone();
        }
    }
    (g_pos, g_val)
}

fn argmin(v: &[f64]) -> usize {
    // First index wins ties so the result is reproducible.
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Central finite differences with step `h`, evaluated in parallel.
pub fn central_fd_gradient(f: &(dyn Fn(&[f64]) -> f64 + Sync), x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .into_par_iter()
        .map(|j| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[j] += h;
            xm[j] -= h;
            (f(&xp) - f(&xm)) / (2.0 * h)
        })
        .collect()
}

/// Quasi-Newton minimization with a backtracking Armijo line search.
///
/// Accepted steps never increase the objective. When the line search fails
/// twice in a row (once with the curvature model reset) the best point so far
/// comes back with [`Status::LineSearchFailed`].
pub fn bfgs_minimize(obj: &dyn Objective, start: &[f64], tol: f64, max_iters: usize) -> Minimum {
    const ARMIJO: f64 = 1e-4;
    let n = start.len();
    let mut x = start.to_vec();
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    let status = loop {
        let gn = norm(&g);
        if gn < tol {
            break Status::Converged;
        }
        if iterations >= max_iters {
            break Status::MaxIters;
        }
        let mut p: Vec<f64> = h.iter().map(|row| -dot(row, &g)).collect();
        let mut slope = dot(&g, &p);
        if slope >= 0.0 || !slope.is_finite() {
            h = identity(n);
            fresh = true;
            p = g.iter().map(|v| -v).collect();
            slope = -gn * gn;
        }
        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-16 {
            let xn: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let fn_ = obj.value(&xn);
            if fn_.is_finite() && fn_ <= f + ARMIJO * t * slope {
                accepted = Some((xn, fn_));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            if fresh {
                break Status::LineSearchFailed;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        let gn_vec = obj.gradient(&xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn_vec.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy.is_finite() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().enumerate().for_each(|(i, row)| {
                    row.iter_mut().for_each(|v| *v = 0.0);
                    row[i] = scale;
                });
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
        x = xn;
        f = fn_;
        g = gn_vec;
        iterations += 1;
    };
    Minimum { grad_norm: norm(&g), x, value: f, iterations, status }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Inverse-Hessian update `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let rho = 1.0 / sy;
    let hy: Vec<f64> = h.iter().map(|row| dot(row, y)).collect();
    let yhy = dot(y, &hy);
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Outcome of one time step's optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub minimum: Minimum,
    /// Swarm iterations spent; zero on warm-started steps.
    pub pso_iterations: usize,
    pub pso_value: Option<f64>,
}

/// Closed-form optimum of parameter 0 for the remaining parameters.
pub type ScaleRule<'a> = &'a (dyn Fn(&[f64]) -> Option<f64> + Sync);

/// Swarm followed by BFGS when there is no usable previous optimum,
/// otherwise BFGS started from `warm`.
pub fn optimize_timestep(
    obj: &dyn Objective,
    warm: Option<&[f64]>,
    cfg: &OptimizerConfig,
    bounds: &Bounds,
    scale_rule: Option<ScaleRule<'_>>,
) -> StepOutcome {
    let (mut start, pso_iterations, pso_value) = match warm.filter(|_| cfg.warm_start) {
        Some(w) => (w.to_vec(), 0, None),
        None => {
            let (x, v) = pso_run(obj, &cfg.pso, bounds);
            (x, cfg.pso.iterations, Some(v))
        }
    };
    if cfg.analytic_scale {
        if let Some(l0) = scale_rule.and_then(|r| r(&start[1..])) {
            start[0] = l0;
        }
    }
    let minimum = bfgs_minimize(obj, &start, cfg.local.tol, cfg.local.max_iters);
    StepOutcome { minimum, pso_iterations, pso_value }
}

/// An objective from two closures.
pub struct FnObjective<F, G> {
    pub dim: usize,
    pub f: F,
    pub g: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.g)(x)
    }
}
