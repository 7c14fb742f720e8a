//! Classical finite-difference reference: band matrices, implicit steps,
//! steady solves and the analytical advection-diffusion profile.

use crate::problem::{Boundary, BoundaryValue, ProblemSpec, Scheme, Velocity};
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FdError {
    #[error("system matrix is singular")]
    Singular,
    #[error("vector has {found} entries, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("direct steady solve needs a prescribed velocity")]
    NonlinearSteady,
    #[error("previous state missing for a second-order time discretization")]
    MissingHistory,
}

/// Square matrix stored by diagonals. On periodic grids column indices wrap.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    n: usize,
    periodic: bool,
    diags: BTreeMap<isize, Vec<f64>>,
}

impl BandMatrix {
    pub fn zeros(n: usize, periodic: bool) -> Self {
        Self { n, periodic, diags: BTreeMap::new() }
    }

    pub fn identity(n: usize, periodic: bool) -> Self {
        let mut m = Self::zeros(n, periodic);
        for i in 0..n {
            m.add(i, 0, 1.0);
        }
        m
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Adds `value` at row `i`, column `i + offset`.
    pub fn add(&mut self, i: usize, offset: isize, value: f64) {
        let j = i as isize + offset;
        assert!(
            self.periodic || (0..self.n as isize).contains(&j),
            "entry ({i}, {j}) outside a bounded {n}×{n} matrix",
            n = self.n
        );
        self.diags.entry(offset).or_insert_with(|| vec![0.0; self.n])[i] += value;
    }

    fn column(&self, i: usize, offset: isize) -> Option<usize> {
        let j = i as isize + offset;
        if self.periodic {
            Some(j.rem_euclid(self.n as isize) as usize)
        } else {
            (0..self.n as isize).contains(&j).then_some(j as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.diags
            .iter()
            .filter(|(&o, _)| self.column(i, o) == Some(j))
            .map(|(_, d)| d[i])
            .sum()
    }

    pub fn scale(&mut self, s: f64) {
        for d in self.diags.values_mut() {
            d.iter_mut().for_each(|x| *x *= s);
        }
    }

    pub fn add_scaled(&mut self, other: &BandMatrix, s: f64) {
        for (&o, d) in &other.diags {
            for (i, &x) in d.iter().enumerate() {
                if x != 0.0 {
                    self.add(i, o, s * x);
                }
            }
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for (&o, d) in &self.diags {
            for (i, yi) in y.iter_mut().enumerate() {
                if let Some(j) = self.column(i, o) {
                    *yi += d[i] * x[j];
                }
            }
        }
        y
    }

    /// Largest `|offset|` carrying a non-zero entry.
    pub fn reach(&self) -> usize {
        self.diags
            .iter()
            .filter(|(_, d)| d.iter().any(|&x| x != 0.0))
            .map(|(o, _)| o.unsigned_abs())
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (&o, d) in &self.diags {
            for (i, &x) in d.iter().enumerate() {
                if let Some(j) = self.column(i, o) {
                    m[(i, j)] += x;
                }
            }
        }
        m
    }
}

/// Stencil width of each scheme as usually quoted for its band matrix.
pub fn scheme_bandwidth(scheme: Scheme) -> usize {
    match scheme {
        Scheme::Uds | Scheme::Cds | Scheme::Fb(_) => 3,
        Scheme::Luds => 5,
        Scheme::Quick => 7,
    }
}

/// Per-step system: the minimizer of `yᵀBy − 2fᵀy` solves `By = f`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSystem {
    pub matrix: BandMatrix,
    pub rhs: Vec<f64>,
    pub scheme: Scheme,
    pub bandwidth: usize,
}

fn ghost(bv: BoundaryValue, dx: f64, edge: f64) -> (f64, f64) {
    // Ghost value as `coef·y_edge + constant`.
    match bv {
        BoundaryValue::Dirichlet(g) => (0.0, g),
        BoundaryValue::Neumann(g) => (1.0, edge * g * dx),
    }
}

/// Discrete `−(a3 y_x)_x ≈ L y − g`.
pub fn diffusion_operator(p: &ProblemSpec) -> (BandMatrix, Vec<f64>) {
    let n = p.points();
    let dx2 = p.dx() * p.dx();
    let mut l = BandMatrix::zeros(n, p.periodic());
    let mut g = vec![0.0; n];
    for i in 0..n {
        let (al, ar) = p.faces(i);
        l.add(i, 0, (al + ar) / dx2);
        for (off, a) in [(-1isize, al), (1, ar)] {
            if a == 0.0 {
                continue;
            }
            let j = i as isize + off;
            match p.boundary {
                Boundary::Bounded { left, right } if j < 0 || j >= n as isize => {
                    let bv = if j < 0 { left } else { right };
                    let (c, k) = ghost(bv, p.dx(), off as f64);
                    l.add(i, 0, -a * c / dx2);
                    g[i] += a * k / dx2;
                }
                _ => l.add(i, off, -a / dx2),
            }
        }
    }
    (l, g)
}

/// Discrete `a4·w_x ≈ C w + h` for the previous state `w`.
pub fn convection_operator(p: &ProblemSpec, w: &[f64]) -> (BandMatrix, Vec<f64>) {
    let n = p.points();
    let mut c = BandMatrix::zeros(n, p.periodic());
    let mut h = vec![0.0; n];
    let Some(v) = p.velocity_field(w) else { return (c, h) };
    let dx = p.dx();
    for i in 0..n {
        for (off, coef) in convection_row(p, i, v[i]) {
            let value = coef * if off == 0 { v[i].abs() } else { v[i] } / dx;
            let j = i as isize + off;
            match p.boundary {
                Boundary::Bounded { left, right } if j < 0 || j >= n as isize => {
                    let (bv, edge) = if j < 0 { (left, -1.0) } else { (right, 1.0) };
                    let (cg, k) = ghost(bv, dx, edge);
                    c.add(i, 0, value * cg);
                    h[i] += value * k;
                }
                _ => c.add(i, off, value),
            }
        }
    }
    (c, h)
}

/// Stencil used at row `i`; high-order rows that would reach two cells
/// past a bounded edge drop to first-order upwinding.
pub(crate) fn convection_row(p: &ProblemSpec, i: usize, v: f64) -> Vec<(isize, f64)> {
    let row = crate::problem::row_stencil(p.scheme, v >= 0.0);
    if p.periodic() {
        return row;
    }
    let n = p.points() as isize;
    let fits = row.iter().all(|&(o, _)| (-1..=n).contains(&(i as isize + o)));
    if fits {
        row
    } else {
        crate::problem::row_stencil(Scheme::Uds, v >= 0.0)
    }
}

fn check_len(v: &[f64], n: usize) -> Result<(), FdError> {
    if v.len() != n {
        return Err(FdError::Length { expected: n, found: v.len() });
    }
    Ok(())
}

/// Assembles `B` and `f` for one step with previous states `w` (and `w2`
/// two levels back when the time derivative is second order).
pub fn build_system(p: &ProblemSpec, w: &[f64], w2: Option<&[f64]>) -> Result<BandSystem, FdError> {
    let n = p.points();
    check_len(w, n)?;
    let dx = p.dx();
    let dt = p.dt;
    let (mut b, g) = diffusion_operator(p);
    b.add_scaled(&BandMatrix::identity(n, p.periodic()), p.mass());
    b.scale(dx);
    let (c, h) = convection_operator(p, w);
    let cw = c.matvec(w);
    let mut rhs = vec![0.0; n];
    for i in 0..n {
        rhs[i] = p.a2 * w[i] / dt + g[i] - cw[i] - h[i];
    }
    if p.second_order_time() {
        let w2 = w2.ok_or(FdError::MissingHistory)?;
        check_len(w2, n)?;
        for i in 0..n {
            rhs[i] += p.a1 * (2.0 * w[i] - w2[i]) / (dt * dt);
        }
    }
    rhs.iter_mut().for_each(|r| *r *= dx);
    Ok(BandSystem { matrix: b, rhs, scheme: p.scheme, bandwidth: scheme_bandwidth(p.scheme) })
}

pub fn solve(sys: &BandSystem) -> Result<Vec<f64>, FdError> {
    let x = sys
        .matrix
        .to_dense()
        .lu()
        .solve(&DVector::from_column_slice(&sys.rhs))
        .ok_or(FdError::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(FdError::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// One implicit step.
pub fn classical_step(p: &ProblemSpec, w: &[f64], w2: Option<&[f64]>) -> Result<Vec<f64>, FdError> {
    solve(&build_system(p, w, w2)?)
}

/// Time history `y⁰, y¹, …, y^steps`, starting the second-order scheme
/// with `y⁻¹ = y⁰`.
pub fn march(p: &ProblemSpec, y0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>, FdError> {
    let mut out = vec![y0.to_vec()];
    let mut prev2 = y0.to_vec();
    for _ in 0..steps {
        let w = out.last().expect("non-empty").clone();
        let y = classical_step(p, &w, Some(&prev2))?;
        prev2 = w;
        out.push(y);
    }
    Ok(out)
}

/// Steady residual `L y − g + C(y) y + h(y)`.
pub fn steady_residual(p: &ProblemSpec, y: &[f64]) -> Vec<f64> {
    let (l, g) = diffusion_operator(p);
    let (c, h) = convection_operator(p, y);
    let ly = l.matvec(y);
    let cy = c.matvec(y);
    (0..y.len()).map(|i| ly[i] - g[i] + cy[i] + h[i]).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Outcome of pseudotime iteration toward a steady state.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoTime {
    pub solution: Vec<f64>,
    pub steps: usize,
    pub reduction: f64,
    pub converged: bool,
}

/// Iterates `p` (which must carry a pseudotime `a2/Δt` term) from `y0`
/// until the steady residual drops by `reduction`.
pub fn pseudotime_solve(
    p: &ProblemSpec,
    y0: &[f64],
    reduction: f64,
    max_steps: usize,
) -> Result<PseudoTime, FdError> {
    let r0 = norm(&steady_residual(p, y0)).max(f64::MIN_POSITIVE);
    let mut y = y0.to_vec();
    let mut ratio = 1.0;
    for step in 1..=max_steps {
        y = classical_step(p, &y, Some(&y.clone()))?;
        ratio = norm(&steady_residual(p, &y)) / r0;
        if ratio <= reduction {
            return Ok(PseudoTime { solution: y, steps: step, reduction: ratio, converged: true });
        }
    }
    Ok(PseudoTime { solution: y, steps: max_steps, reduction: ratio, converged: false })
}

/// Direct solve of the steady linear problem `(L + C) y = g − h`.
pub fn steady_direct(p: &ProblemSpec) -> Result<Vec<f64>, FdError> {
    if matches!(p.velocity, Velocity::State) {
        return Err(FdError::NonlinearSteady);
    }
    let n = p.points();
    let (mut l, g) = diffusion_operator(p);
    let (c, h) = convection_operator(p, &vec![0.0; n]);
    l.add_scaled(&c, 1.0);
    let rhs = (0..n).map(|i| g[i] - h[i]).collect();
    solve(&BandSystem { matrix: l, rhs, scheme: p.scheme, bandwidth: scheme_bandwidth(p.scheme) })
}

/// Exact steady advection-diffusion profile on `[0, 1]` for cell Péclet
/// number `pe` and spacing `dx`. Evaluated in log space for large `pe/dx`.
pub fn analytical_adv_diff(x: f64, pe: f64, dx: f64, theta0: f64, theta1: f64) -> f64 {
    let a = pe / dx;
    let ratio = if a == 0.0 {
        x
    } else if a > 0.0 {
        // (e^{ax} − 1)/(e^{a} − 1) = e^{a(x−1)}·(1 − e^{−ax})/(1 − e^{−a})
        (a * (x - 1.0)).exp() * (-(-a * x).exp_m1()) / (-(-a).exp_m1())
    } else {
        (a * x).exp_m1() / a.exp_m1()
    };
    theta0 + ratio * (theta1 - theta0)
}

/// `yᵀBy − 2fᵀy`.
pub fn classical_cost(sys: &BandSystem, y: &[f64]) -> f64 {
    let by = sys.matrix.matvec(y);
    y.iter().zip(&by).map(|(a, b)| a * b).sum::<f64>()
        - 2.0 * y.iter().zip(&sys.rhs).map(|(a, b)| a * b).sum::<f64>()
}
