//! Discretized 1-D transport problem shared by the classical and quantum sides.
//!
//! The governing equation is
//! `a1·y_tt + a2·y_t − (a3·y_x)_x + a4·y_x + a5·y = 0` on `(0, 1)` with
//! implicit time stepping for everything except the convective term, which
//! uses the previous time level.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("register needs at least 2 qubits, got {0}")]
    TooFewQubits(usize),
    #[error("blending factor {0} outside [0, 1]")]
    Blending(f64),
    #[error("field has {found} samples, expected {expected}")]
    FieldLength { expected: usize, found: usize },
    #[error("time step must be positive and finite, got {0}")]
    TimeStep(f64),
    #[error("courant number {courant:.4} exceeds 1 (dt = {dt}, dx = {dx}, max |v| = {vmax})")]
    Courant { courant: f64, dt: f64, dx: f64, vmax: f64 },
    #[error("coefficient {0} is not finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum BoundaryValue {
    Dirichlet(f64),
    /// Prescribed outward-x derivative `y_x`.
    Neumann(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Periodic,
    Bounded { left: BoundaryValue, right: BoundaryValue },
}

/// Convection discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "beta", rename_all = "snake_case")]
pub enum Scheme {
    Uds,
    Cds,
    Luds,
    Quick,
    /// Flux blending `(1 − β)·UDS + β·CDS`.
    Fb(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    None,
    Constant(f64),
    /// `faces[i]` is the diffusivity at `x_i − Δx/2`; `faces.len() = N + 1`.
    Faces(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    None,
    /// Velocity samples at the grid points.
    Prescribed(Vec<f64>),
    /// Nonlinear transport: the velocity is the state itself.
    State,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub n_qubits: usize,
    pub boundary: Boundary,
    pub a1: f64,
    pub a2: f64,
    pub a5: f64,
    pub diffusion: Diffusion,
    pub velocity: Velocity,
    pub scheme: Scheme,
    pub dt: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.n_qubits < 2 {
            return Err(ProblemError::TooFewQubits(self.n_qubits));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ProblemError::TimeStep(self.dt));
        }
        for (name, v) in [("a1", self.a1), ("a2", self.a2), ("a5", self.a5)] {
            if !v.is_finite() {
                return Err(ProblemError::NonFinite(name));
            }
        }
        if let Scheme::Fb(b) = self.scheme {
            if !(0.0..=1.0).contains(&b) {
                return Err(ProblemError::Blending(b));
            }
        }
        let n = self.points();
        if let Diffusion::Faces(f) = &self.diffusion {
            if f.len() != n + 1 {
                return Err(ProblemError::FieldLength { expected: n + 1, found: f.len() });
            }
        }
        if let Velocity::Prescribed(v) = &self.velocity {
            if v.len() != n {
                return Err(ProblemError::FieldLength { expected: n, found: v.len() });
            }
        }
        Ok(())
    }

    /// Number of unknowns `N = 2ⁿ`.
    pub fn points(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn periodic(&self) -> bool {
        matches!(self.boundary, Boundary::Periodic)
    }

    pub fn dx(&self) -> f64 {
        grid_spacing(self.points(), self.periodic())
    }

    /// Coordinate of register index `i`.
    pub fn x(&self, i: usize) -> f64 {
        grid_x(i, self.points(), self.periodic())
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.points()).map(|i| self.x(i)).collect()
    }

    /// Coefficient of the implicit identity term `a5 + a1/Δt² + a2/Δt`.
    pub fn mass(&self) -> f64 {
        self.a5 + self.a1 / (self.dt * self.dt) + self.a2 / self.dt
    }

    pub fn second_order_time(&self) -> bool {
        self.a1 != 0.0
    }

    /// Diffusivity at the left and right faces of point `i`.
    pub fn faces(&self, i: usize) -> (f64, f64) {
        match &self.diffusion {
            Diffusion::None => (0.0, 0.0),
            Diffusion::Constant(a) => (*a, *a),
            Diffusion::Faces(f) => {
                let n = self.points();
                let left = if self.periodic() && i == 0 { f[n] } else { f[i] };
                (left, f[i + 1])
            }
        }
    }

    pub fn has_diffusion(&self) -> bool {
        match &self.diffusion {
            Diffusion::None => false,
            Diffusion::Constant(a) => *a != 0.0,
            Diffusion::Faces(f) => f.iter().any(|&a| a != 0.0),
        }
    }

    /// Velocity field for a step whose previous state is `w`.
    pub fn velocity_field(&self, w: &[f64]) -> Option<Vec<f64>> {
        match &self.velocity {
            Velocity::None => None,
            Velocity::Prescribed(v) => Some(v.clone()),
            Velocity::State => Some(w.to_vec()),
        }
    }

    /// Rejects explicit convection steps with `Δt·max|v| > Δx`.
    pub fn courant_check(&self, w: &[f64]) -> Result<f64, ProblemError> {
        self.courant_check_within(w, 1e-12)
    }

    /// As [`courant_check`](Self::courant_check), accepting Courant numbers up
    /// to `1 + slack`.
    pub fn courant_check_within(&self, w: &[f64], slack: f64) -> Result<f64, ProblemError> {
        let Some(v) = self.velocity_field(w) else { return Ok(0.0) };
        let vmax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let courant = vmax * self.dt / self.dx();
        if courant > 1.0 + slack {
            return Err(ProblemError::Courant { courant, dt: self.dt, dx: self.dx(), vmax });
        }
        Ok(courant)
    }
}

/// `Δx = 1/(N+1)` on bounded domains, `1/N` on periodic ones.
pub fn grid_spacing(points: usize, periodic: bool) -> f64 {
    if periodic {
        1.0 / points as f64
    } else {
        1.0 / (points + 1) as f64
    }
}

pub fn grid_x(i: usize, points: usize, periodic: bool) -> f64 {
    let dx = grid_spacing(points, periodic);
    if periodic {
        i as f64 * dx
    } else {
        (i + 1) as f64 * dx
    }
}

/// Samples a diffusivity at the `N + 1` faces around the grid points.
pub fn face_samples(points: usize, periodic: bool, alpha: impl Fn(f64) -> f64) -> Vec<f64> {
    let dx = grid_spacing(points, periodic);
    (0..=points).map(|i| alpha(grid_x(i, points, periodic) - 0.5 * dx)).collect()
}

/// Stencil of one convection row: `(offset, coefficient)` pairs with the
/// coefficient multiplying `v_k · w_{k+offset} / Δx`, or `|v_k| · w_k / Δx`
/// for offset 0.
pub(crate) fn scheme_stencil(scheme: Scheme, positive: bool) -> Vec<(isize, f64)> {
    let mirror = |s: &[(isize, f64)]| -> Vec<(isize, f64)> { s.iter().map(|&(o, c)| (-o, -c)).collect() };
    // Written for v ≥ 0 as `v·(Σ c_j w_{k+j})`; the diagonal is re-expressed
    // through |v| so that v < 0 is the mirror image.
    let (diag, off): (f64, Vec<(isize, f64)>) = match scheme {
        Scheme::Uds => (1.0, vec![(-1, -1.0)]),
        Scheme::Luds => (1.5, vec![(-1, -2.0), (-2, 0.5)]),
        Scheme::Quick => (0.5, vec![(1, 1.0 / 3.0), (-1, -1.0), (-2, 1.0 / 6.0)]),
        Scheme::Cds => (0.0, vec![]),
        Scheme::Fb(_) => unreachable!("blending is expanded by the caller"),
    };
    let mut out = vec![(0, diag)];
    if positive {
        out.extend(off);
    } else {
        out.extend(mirror(&off));
    }
    out
}

/// Full row for velocity sign and scheme, blending and CDS included. The
/// offset-0 entry multiplies `|v|`, all others multiply `v`.
pub(crate) fn row_stencil(scheme: Scheme, positive: bool) -> Vec<(isize, f64)> {
    let cds = vec![(1, 0.5), (-1, -0.5)];
    let mut out = match scheme {
        Scheme::Cds => cds,
        Scheme::Fb(beta) => {
            let mut s: Vec<(isize, f64)> =
                scheme_stencil(Scheme::Uds, positive).into_iter().map(|(o, c)| (o, (1.0 - beta) * c)).collect();
            s.extend(cds.into_iter().map(|(o, c)| (o, beta * c)));
            s
        }
        s => scheme_stencil(s, positive),
    };
    out.retain(|&(_, c)| c != 0.0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sum_stencil(s: &[(isize, f64)], v: f64, w: impl Fn(isize) -> f64) -> f64 {
        s.iter().map(|&(o, c)| if o == 0 { c * v.abs() * w(0) } else { c * v * w(o) }).sum()
    }

    #[test]
    fn quick_row_matches_upwind_biased_formula() {
        // (2 w_D + 3 w_C − 6 w_U + w_UU)/6 for v > 0.
        let w = |o: isize| [1.3, -0.2, 0.7, 2.1, -1.1][(o + 2) as usize];
        let got = sum_stencil(&row_stencil(Scheme::Quick, true), 1.0, w);
        let want = (2.0 * w(1) + 3.0 * w(0) - 6.0 * w(-1) + w(-2)) / 6.0;
        assert!((got - want).abs() < 1e-15);
        let got = sum_stencil(&row_stencil(Scheme::Quick, false), -1.0, w);
        // v = −1 times the mirrored derivative.
        let want = (2.0 * w(-1) + 3.0 * w(0) - 6.0 * w(1) + w(2)) / 6.0;
        assert!((got - want).abs() < 1e-15);
    }

    #[test]
    fn schemes_are_consistent_derivatives() {
        // Every stencil differentiates a linear function exactly.
        for s in [Scheme::Uds, Scheme::Cds, Scheme::Luds, Scheme::Quick, Scheme::Fb(0.3)] {
            for (pos, v) in [(true, 2.0), (false, -2.0)] {
                let got = sum_stencil(&row_stencil(s, pos), v, |o| 5.0 + 3.0 * o as f64);
                assert!((got - 3.0 * v).abs() < 1e-14, "{s:?}");
            }
        }
    }

    #[test]
    fn grid_conventions() {
        assert_eq!(grid_spacing(16, false), 1.0 / 17.0);
        assert_eq!(grid_spacing(16, true), 1.0 / 16.0);
        assert_eq!(grid_x(0, 16, false), 1.0 / 17.0);
        assert_eq!(grid_x(3, 16, true), 3.0 / 16.0);
        let f = face_samples(4, false, |x| x);
        assert_eq!(f.len(), 5);
        assert!((f[0] - 0.1).abs() < 1e-15 && (f[4] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn courant_guard() {
        let p = ProblemSpec {
            n_qubits: 2,
            boundary: Boundary::Periodic,
            a1: 0.0,
            a2: 1.0,
            a5: 0.0,
            diffusion: Diffusion::None,
            velocity: Velocity::State,
            scheme: Scheme::Uds,
            dt: 0.3,
        };
        assert!(p.courant_check(&[0.5, 0.5, -0.5, 0.0]).is_ok());
        assert!(matches!(p.courant_check(&[1.0, 0.0, 0.0, 0.0]), Err(ProblemError::Courant { .. })));
    }

    #[test]
    fn validation() {
        let mut p = ProblemSpec {
            n_qubits: 2,
            boundary: Boundary::Periodic,
            a1: 0.0,
            a2: 1.0,
            a5: 0.0,
            diffusion: Diffusion::Faces(vec![1.0; 4]),
            velocity: Velocity::None,
            scheme: Scheme::Fb(0.5),
            dt: 0.1,
        };
        assert_eq!(p.validate(), Err(ProblemError::FieldLength { expected: 5, found: 4 }));
        p.diffusion = Diffusion::Constant(1.0);
        assert!(p.validate().is_ok());
        p.scheme = Scheme::Fb(1.5);
        assert_eq!(p.validate(), Err(ProblemError::Blending(1.5)));
    }
}
