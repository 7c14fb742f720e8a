//! Acceptance criteria, one pass/fail line each. Runs without the libtest
//! harness so the lines are always printed.

use qcfd::cases::{run_case, CaseConfig, CaseId};
use qcfd::cost::Backend;
use qcfd::fd::{analytical_adv_diff, steady_direct};
use qcfd::hadamard::HadamardJob;
use qcfd::metrics::{complexity_report, golden_grid, write_time_series, ComplexityKind};
use qcfd::optimizer::GradientMode;
use qcfd::problem::Scheme;
use qcfd::qnpu::{Direction, QnpuKind, QnpuSpec};
use qcfd::verify::{case_cost, random_prep, verify_costs, verify_qnpus, Fault};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn complexity() -> Outcome {
    let start = Instant::now();
    let (ns, ds) = golden_grid();
    let r = complexity_report(&ns, &ds, &ComplexityKind::ALL);
    let elapsed = start.elapsed();
    let spot = [
        ComplexityKind::AnsatzGates.count(4, 5) == 128,
        ComplexityKind::AnsatzParams.count(4, 5) == 34,
        ComplexityKind::A.count(6, 0) == 154,
        ComplexityKind::A2pp.count(4, 0) == 304,
    ];
    check(
        r.checked() == 96 && r.matched() == 96 && spot.iter().all(|&b| b) && elapsed < Duration::from_secs(1),
        format!("{}/{} golden points, {elapsed:?}", r.matched(), r.checked()),
    )
}

fn circuit_oracle() -> Outcome {
    let start = Instant::now();
    let mut checks = Vec::new();
    for n in 2..=4 {
        checks.extend(verify_qnpus(n, 50, 7, Fault::None).map_err(|e| e.to_string())?);
    }
    for n in [2, 4] {
        checks.extend(verify_costs(n, 50, 7, Fault::None).map_err(|e| e.to_string())?);
    }
    let elapsed = start.elapsed();
    let worst = checks.iter().map(|c| c.max_error).fold(0.0, f64::max);
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| format!("n={} {}", c.n, c.label)).collect();
    check(
        failed.is_empty() && elapsed < Duration::from_secs(120),
        format!("{} checks, worst {worst:.2e}, {elapsed:?}, failed {failed:?}", checks.len()),
    )
}

fn periodic_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = 2 + k % 3;
        let dx = 1.0 / (1usize << n) as f64;
        let u = random_prep(n, &mut rng);
        let shift = |dir| {
            let spec = QnpuSpec::new(n, QnpuKind::Adder { dir, reps: 1 }).unwrap();
            HadamardJob::bilinear(u.clone(), spec).evaluate().unwrap()
        };
        let (fwd, bwd) = (shift(Direction::Down), shift(Direction::Up));
        let j_for = fwd - 1.0;
        let j_back = 1.0 - bwd;
        let j_cent = (fwd + bwd - 2.0) / dx;
        worst = worst.max((2.0 / dx * j_for - j_cent).abs());
        worst = worst.max((-2.0 / dx * j_back - j_cent).abs());
        // Central first difference of a real state on a ring.
        worst = worst.max(((fwd - bwd) / (2.0 * dx)).abs());
    }
    check(worst <= 1e-12, format!("100 states, worst deviation {worst:.2e}"))
}

fn steady_problem(scheme: Scheme, pe: f64) -> qcfd::problem::ProblemSpec {
    let mut c = CaseConfig::defaults(CaseId::SteadyAdvDiff, 4);
    c.scheme = Some(scheme);
    c.peclet = Some(pe);
    c.setup().unwrap().problem
}

fn classical_solver() -> Outcome {
    let p = steady_problem(Scheme::Cds, 0.3);
    let y = steady_direct(&p).map_err(|e| e.to_string())?;
    let err = p
        .xs()
        .iter()
        .zip(&y)
        .map(|(&x, v)| (analytical_adv_diff(x, 0.3, p.dx(), 0.0, 1.0) - v).abs())
        .fold(0.0, f64::max);

    let diffs = |y: &[f64]| -> Vec<f64> {
        let mut full = vec![0.0];
        full.extend_from_slice(y);
        full.push(1.0);
        full.windows(2).map(|w| w[1] - w[0]).collect()
    };
    let cds = diffs(&steady_direct(&steady_problem(Scheme::Cds, 30.0)).map_err(|e| e.to_string())?);
    let alternations = cds.windows(2).filter(|w| w[0] * w[1] < 0.0).count();
    let uds = diffs(&steady_direct(&steady_problem(Scheme::Uds, 30.0)).map_err(|e| e.to_string())?);
    let monotone = uds.iter().all(|&d| d >= -1e-14);
    check(
        err <= 1e-2 && alternations >= 5 && monotone,
        format!("CDS Pe 0.3 max error {err:.2e}; CDS Pe 30 sign alternations {alternations}; UDS Pe 30 monotone {monotone}"),
    )
}

fn vqa_deviation() -> Outcome {
    let limits = [
        (CaseId::HeatVariableAlpha, 1e-3),
        (CaseId::SteadyAdvDiff, 1e-3),
        (CaseId::RiemannUds, 1e-3),
        (CaseId::BurgersGauss, 1e-3),
        (CaseId::Wave, 1e-2),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (case, limit) in limits {
        let start = Instant::now();
        let ts = run_case(&CaseConfig::defaults(case, 4)).map_err(|e| e.to_string())?;
        // The steady case is judged on its converged profile.
        let eps = if case == CaseId::SteadyAdvDiff { ts.steps.last().unwrap().eps_l2 } else { ts.report().mean_l2 };
        let elapsed = start.elapsed();
        ok &= eps <= limit && elapsed < Duration::from_secs(1800);
        parts.push(format!("{case} {eps:.2e} (≤ {limit:.0e}, {:.1?})", elapsed));
    }
    check(ok, parts.join("; "))
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for case in CaseId::ALL {
        let cost = case_cost(case, 4, &mut rng).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let mut x = vec![rng.gen_range(0.2..2.0)];
            x.extend((0..cost.layout.param_count()).map(|_| rng.gen_range(-3.0..3.0)));
            let shift = cost.gradient(&x, GradientMode::Shift, Backend::Circuit, 1e-6).map_err(|e| e.to_string())?;
            let fd = cost.gradient(&x, GradientMode::CentralFd, Backend::Oracle, 1e-6).map_err(|e| e.to_string())?;
            let scale = shift.iter().fold(1.0_f64, |m, g| m.max(g.abs()));
            let diff = shift.iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(diff / scale);
        }
    }
    check(worst <= 1e-6, format!("6 cases x 10 points, circuit shift rules vs oracle central differences, worst relative deviation {worst:.2e}, {:?}", start.elapsed()))
}

fn variational_consistency() -> Outcome {
    let mut cfg = CaseConfig::defaults(CaseId::HeatVariableAlpha, 4);
    cfg.steps = Some(5);
    // The default stopping tolerance (1e-3 on the gradient norm) halts
    // before the minimum is resolved to 1e-6 in J; compare at a converged
    // optimum and report the default-tolerance gap alongside.
    cfg.tol = Some(1e-6);
    let gaps: Vec<f64> =
        run_case(&cfg).map_err(|e| e.to_string())?.steps.iter().map(|s| (s.cost - s.cost_classical_min).abs()).collect();
    cfg.tol = None;
    let loose = run_case(&cfg).map_err(|e| e.to_string())?;
    let loose_worst = loose.steps.iter().map(|s| (s.cost - s.cost_classical_min).abs()).fold(0.0, f64::max);
    let worst = gaps.iter().copied().fold(0.0, f64::max);
    check(
        gaps.len() == 5 && worst <= 1e-6,
        format!("worst |J - J_classical| {worst:.2e} over 5 steps (tol 1e-3 run: {loose_worst:.2e})"),
    )
}

fn determinism() -> Outcome {
    let mut identical = true;
    for case in [CaseId::HeatVariableAlpha, CaseId::RiemannUds] {
        let mut cfg = CaseConfig::defaults(case, 4);
        cfg.seed = 42;
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_time_series(&run_case(&cfg).map_err(|e| e.to_string())?, a.path()).map_err(|e| e.to_string())?;
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let ts = single.install(|| run_case(&cfg)).map_err(|e| e.to_string())?;
        write_time_series(&ts, b.path()).map_err(|e| e.to_string())?;
        let mut names: Vec<_> = std::fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
        names.sort();
        for name in names {
            identical &= std::fs::read(a.path().join(&name)).unwrap() == std::fs::read(b.path().join(&name)).unwrap();
        }
    }
    check(identical, "heat and riemann CSV bytes identical across runs and thread counts".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 gate/parameter complexity", complexity),
        ("2 circuit/oracle equivalence", circuit_oracle),
        ("3 periodic shift identities", periodic_identities),
        ("4 classical solver validation", classical_solver),
        ("5 VQA vs FD deviation (n=4)", vqa_deviation),
        ("6 shift-rule gradients", gradients),
        ("7 variational consistency", variational_consistency),
        ("8 determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                println!("FAIL  {name}: {detail}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
