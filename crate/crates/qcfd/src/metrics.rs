//! Error measures, complexity tables and CSV emission.

use crate::ansatz::{ansatz_gate_count, param_count};
use crate::cases::TimeSeries;
use crate::qnpu::{adder_gate_count, potential_gate_count};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("vectors have lengths {0} and {1}")]
    Length(usize, usize),
    #[error("trace distance is undefined for a zero vector")]
    ZeroNorm,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Distance between a reference profile and a test profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deviation {
    pub eps_l2: f64,
    pub eps_tr: f64,
}

/// `ε_l2 = ‖a − b‖₂` and `ε_tr = √(1 − ⟨â, b̂⟩²)` for the normalized profiles.
pub fn deviation(y_ref: &[f64], y_test: &[f64]) -> Result<Deviation, MetricsError> {
    if y_ref.len() != y_test.len() {
        return Err(MetricsError::Length(y_ref.len(), y_test.len()));
    }
    let eps_l2 = y_ref.iter().zip(y_test).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let (na, nb) = (l2(y_ref), l2(y_test));
    if na == 0.0 || nb == 0.0 {
        return Err(MetricsError::ZeroNorm);
    }
    // 1 − |⟨â, b̂⟩| = ½‖â − s·b̂‖², which keeps collinear inputs at zero.
    let s = y_ref.iter().zip(y_test).map(|(a, b)| a * b).sum::<f64>().signum();
    let gap = 0.5 * y_ref.iter().zip(y_test).map(|(a, b)| (a / na - s * b / nb).powi(2)).sum::<f64>();
    let eps_tr = (gap * (2.0 - gap)).max(0.0).sqrt().min(1.0);
    Ok(Deviation { eps_l2, eps_tr })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Arithmetic mean, `None` when empty.
pub fn time_average(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-step deviations and their time averages.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationReport {
    pub per_step: Vec<Deviation>,
    pub mean_l2: f64,
    pub mean_tr: f64,
}

impl DeviationReport {
    pub fn from_steps(per_step: Vec<Deviation>) -> Self {
        let l2s: Vec<f64> = per_step.iter().map(|d| d.eps_l2).collect();
        let trs: Vec<f64> = per_step.iter().map(|d| d.eps_tr).collect();
        Self {
            mean_l2: time_average(&l2s).unwrap_or(0.0),
            mean_tr: time_average(&trs).unwrap_or(0.0),
            per_step,
        }
    }
}

/// Circuits per optimizer iteration: `d_o·b_w·(1 + d·n)`.
pub fn time_complexity_estimate(n: usize, d: usize, d_o: usize, b_w: usize) -> usize {
    d_o * b_w * (1 + d * n)
}

/// Quantity tabulated by [`complexity_report`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ComplexityKind {
    AnsatzGates,
    AnsatzParams,
    /// One adder.
    A,
    /// One potential.
    P,
    Ap,
    A2p,
    App,
    A2pp,
}

impl ComplexityKind {
    pub const QNPU: [ComplexityKind; 6] =
        [ComplexityKind::A, ComplexityKind::P, ComplexityKind::Ap, ComplexityKind::A2p, ComplexityKind::App, ComplexityKind::A2pp];
    pub const ALL: [ComplexityKind; 8] = [
        ComplexityKind::AnsatzGates,
        ComplexityKind::AnsatzParams,
        ComplexityKind::A,
        ComplexityKind::P,
        ComplexityKind::Ap,
        ComplexityKind::A2p,
        ComplexityKind::App,
        ComplexityKind::A2pp,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ComplexityKind::AnsatzGates => "ansatz_gates",
            ComplexityKind::AnsatzParams => "ansatz_params",
            ComplexityKind::A => "A",
            ComplexityKind::P => "P",
            ComplexityKind::Ap => "A_p",
            ComplexityKind::A2p => "A2_p",
            ComplexityKind::App => "A_pp",
            ComplexityKind::A2pp => "A2_pp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s))
    }

    fn depends_on_depth(self) -> bool {
        matches!(self, ComplexityKind::AnsatzGates | ComplexityKind::AnsatzParams)
    }

    /// Model count; `d` is ignored for QNPU kinds.
    pub fn count(self, n: usize, d: usize) -> usize {
        let (a, p) = (adder_gate_count(n), potential_gate_count(n));
        match self {
            ComplexityKind::AnsatzGates => ansatz_gate_count(n, d),
            ComplexityKind::AnsatzParams => param_count(n, d),
            ComplexityKind::A => a,
            ComplexityKind::P => p,
            ComplexityKind::Ap => a + p,
            ComplexityKind::A2p => 2 * a + p,
            ComplexityKind::App => a + 2 * p,
            ComplexityKind::A2pp => 2 * a + 2 * p,
        }
    }
}

impl fmt::Display for ComplexityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

const GOLDEN_N: [usize; 6] = [2, 4, 6, 8, 10, 12];
const GOLDEN_D: [usize; 5] = [1, 3, 5, 7, 9];

/// Reference ansatz gate counts, rows by depth 1, 3, 5, 7, 9.
const GOLDEN_ANSATZ_GATES: [[usize; 6]; 5] = [
    [12, 32, 52, 72, 92, 112],
    [28, 80, 132, 184, 236, 288],
    [44, 128, 212, 296, 380, 464],
    [60, 176, 292, 408, 524, 640],
    [76, 224, 372, 520, 668, 816],
];

const GOLDEN_ANSATZ_PARAMS: [[usize; 6]; 5] = [
    [4, 10, 16, 22, 28, 34],
    [8, 22, 36, 50, 64, 78],
    [12, 34, 56, 78, 100, 122],
    [16, 46, 76, 106, 136, 166],
    [20, 58, 96, 134, 172, 210],
];

/// Reference QNPU gate counts in [`ComplexityKind::QNPU`] order.
const GOLDEN_QNPU: [[usize; 6]; 6] = [
    [16, 92, 154, 216, 278, 340],
    [30, 60, 90, 120, 150, 180],
    [46, 152, 244, 336, 428, 520],
    [62, 244, 398, 552, 706, 860],
    [76, 212, 334, 456, 578, 700],
    [92, 304, 488, 672, 856, 1040],
];

/// Reference value for `(kind, n, d)` if one exists.
pub fn golden(kind: ComplexityKind, n: usize, d: usize) -> Option<usize> {
    let col = GOLDEN_N.iter().position(|&g| g == n)?;
    match kind {
        ComplexityKind::AnsatzGates => GOLDEN_D.iter().position(|&g| g == d).map(|r| GOLDEN_ANSATZ_GATES[r][col]),
        ComplexityKind::AnsatzParams => GOLDEN_D.iter().position(|&g| g == d).map(|r| GOLDEN_ANSATZ_PARAMS[r][col]),
        k => ComplexityKind::QNPU.iter().position(|&q| q == k).map(|r| GOLDEN_QNPU[r][col]),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComplexityRow {
    pub kind: ComplexityKind,
    pub n: usize,
    /// Ansatz depth; `None` for QNPU rows.
    pub d: Option<usize>,
    pub count: usize,
    pub golden: Option<usize>,
}

impl ComplexityRow {
    pub fn matches(&self) -> Option<bool> {
        self.golden.map(|g| g == self.count)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ComplexityReport {
    pub rows: Vec<ComplexityRow>,
}

impl ComplexityReport {
    /// Rows that have a reference value.
    pub fn checked(&self) -> usize {
        self.rows.iter().filter(|r| r.golden.is_some()).count()
    }

    pub fn matched(&self) -> usize {
        self.rows.iter().filter(|r| r.matches() == Some(true)).count()
    }

    pub fn mismatches(&self) -> impl Iterator<Item = &ComplexityRow> {
        self.rows.iter().filter(|r| r.matches() == Some(false))
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "n", "d", "count", "golden", "match"])?;
        for r in &self.rows {
            w.write_record([
                r.kind.label().to_string(),
                r.n.to_string(),
                r.d.map_or_else(String::new, |d| d.to_string()),
                r.count.to_string(),
                r.golden.map_or_else(String::new, |g| g.to_string()),
                r.matches().map_or_else(String::new, |m| m.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tabulates `kinds` over the grid. Ansatz kinds span `ns × ds`, QNPU kinds
/// span `ns` only.
pub fn complexity_report(ns: &[usize], ds: &[usize], kinds: &[ComplexityKind]) -> ComplexityReport {
    let mut rows = Vec::new();
    for &kind in kinds {
        if kind.depends_on_depth() {
            for &d in ds {
                for &n in ns {
                    rows.push(ComplexityRow { kind, n, d: Some(d), count: kind.count(n, d), golden: golden(kind, n, d) });
                }
            }
        } else {
            for &n in ns {
                rows.push(ComplexityRow { kind, n, d: None, count: kind.count(n, 0), golden: golden(kind, n, 0) });
            }
        }
    }
    ComplexityReport { rows }
}

/// Grid of every reference point.
pub fn golden_grid() -> (Vec<usize>, Vec<usize>) {
    (GOLDEN_N.to_vec(), GOLDEN_D.to_vec())
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `errors.csv`, `optimizer.csv`, one `profile_XXXX.csv` per step and
/// `summary.csv` into `dir`.
pub fn write_time_series(ts: &TimeSeries, dir: &Path) -> Result<(), MetricsError> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
    w.write_record(["step", "t", "eps_l2", "eps_tr"])?;
    for s in &ts.steps {
        w.write_record([s.step.to_string(), fmt_f64(s.t), fmt_f64(s.eps_l2), fmt_f64(s.eps_tr)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("optimizer.csv"))?;
    w.write_record([
        "step",
        "status",
        "iterations",
        "pso_iterations",
        "cost",
        "cost_classical_min",
        "grad_norm",
        "lambda0",
        "encoding_residual",
    ])?;
    for s in &ts.steps {
        w.write_record([
            s.step.to_string(),
            s.status.as_str().to_string(),
            s.iterations.to_string(),
            s.pso_iterations.to_string(),
            fmt_f64(s.cost),
            fmt_f64(s.cost_classical_min),
            fmt_f64(s.grad_norm),
            fmt_f64(s.lambda0),
            fmt_f64(s.encoding_residual),
        ])?;
    }
    w.flush()?;

    for s in &ts.steps {
        let mut w = csv::Writer::from_path(dir.join(format!("profile_{:04}.csv", s.step)))?;
        let analytical = ts.analytical.as_ref();
        if analytical.is_some() {
            w.write_record(["x", "y_vqa", "y_fd", "y_analytical"])?;
        } else {
            w.write_record(["x", "y_vqa", "y_fd"])?;
        }
        for (i, x) in ts.xs.iter().enumerate() {
            let mut rec = vec![fmt_f64(*x), fmt_f64(s.y_vqa[i]), fmt_f64(s.y_fd[i])];
            if let Some(a) = analytical {
                rec.push(fmt_f64(a[i]));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
    }

    let report = ts.report();
    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record(["key", "value"])?;
    let converged = ts.steps.iter().filter(|s| s.status == crate::optimizer::Status::Converged).count();
    let rows = [
        ("case", ts.case.as_str().to_string()),
        ("n", ts.n.to_string()),
        ("steps", ts.steps.len().to_string()),
        ("converged_steps", converged.to_string()),
        ("mean_eps_l2", fmt_f64(report.mean_l2)),
        ("mean_eps_tr", fmt_f64(report.mean_tr)),
        ("final_eps_l2", ts.steps.last().map_or_else(String::new, |s| fmt_f64(s.eps_l2))),
        ("final_eps_tr", ts.steps.last().map_or_else(String::new, |s| fmt_f64(s.eps_tr))),
        ("initial_encoding_residual", fmt_f64(ts.initial_encoding_residual)),
    ];
    for (k, v) in rows {
        w.write_record([k, v.as_str()])?;
    }
    if let Some(r) = ts.steady_reduction {
        w.write_record(["steady_residual_reduction", fmt_f64(r).as_str()])?;
    }
    w.flush()?;
    Ok(())
}
