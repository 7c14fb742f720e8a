use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use qcfd::cases::{run_case_with, CaseConfig, CaseError};
use qcfd::cost::Backend;
use qcfd::metrics::{complexity_report, write_time_series, ComplexityKind};
use qcfd::verify::{verify, Fault};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "qcfd", version, about = "Variational quantum CFD solver on a statevector emulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one benchmark case from a JSON config.
    Run(RunArgs),
    /// Compare every circuit against its matrix oracle.
    Verify(VerifyArgs),
    /// Tabulate gate and parameter counts against the reference values.
    Complexity(ComplexityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Circuit,
    Oracle,
}

impl From<BackendArg> for Backend {
    fn from(b: BackendArg) -> Self {
        match b {
            BackendArg::Circuit => Backend::Circuit,
            BackendArg::Oracle => Backend::Oracle,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory. Defaults to `$QCFD_OUT/<case>_n<n>`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress per-step progress.
    #[arg(long, short)]
    quiet: bool,
    #[arg(long, env = "QCFD_OUT", default_value = "out", hide = true)]
    out_root: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Largest register size swept (at most 4).
    #[arg(long, default_value_t = 4)]
    nmax: usize,
    /// Random parameter draws per check.
    #[arg(long, default_value_t = 10)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, hide = true)]
    inject_adder_sign_flip: bool,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Register sizes as `A..B` or `A..B:STEP`, inclusive.
    #[arg(long, default_value = "2..12:2", value_parser = parse_range)]
    nrange: Sweep,
    /// Ansatz depths as `A..B` or `A..B:STEP`, inclusive.
    #[arg(long, default_value = "1..9:2", value_parser = parse_range)]
    drange: Sweep,
    /// Comma-separated subset of ansatz_gates, ansatz_params, A, P, A_p, A2_p, A_pp, A2_pp.
    #[arg(long, value_delimiter = ',', value_parser = parse_kind)]
    kinds: Vec<ComplexityKind>,
    /// CSV destination. Defaults to `$QCFD_OUT/complexity.csv`.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, env = "QCFD_OUT", default_value = "out", hide = true)]
    out_root: PathBuf,
}

/// An inclusive integer sweep parsed from `A..B[:STEP]`.
#[derive(Clone)]
struct Sweep(Vec<usize>);

fn parse_range(s: &str) -> Result<Sweep, String> {
    let (span, step) = s.split_once(':').unwrap_or((s, "1"));
    let (a, b) = span.split_once("..").ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("`{t}`: {e}"));
    let (a, b, step) = (num(a)?, num(b.trim_start_matches('='))?, num(step)?);
    if step == 0 {
        return Err("step must be positive".into());
    }
    Ok(Sweep((a..=b).step_by(step).collect()))
}

fn parse_kind(s: &str) -> Result<ComplexityKind, String> {
    ComplexityKind::parse(s.trim()).ok_or_else(|| format!("unknown kind `{s}`"))
}

fn set_threads(threads: Option<usize>) -> Result<()> {
    if let Some(k) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global().context("configuring worker threads")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    qcfd_version: &'a str,
    config_path: String,
    config: &'a CaseConfig,
    steps: usize,
    converged_steps: usize,
    mean_eps_l2: f64,
    mean_eps_tr: f64,
}

/// Exit 2 for a Courant violation, 1 for every other failure.
fn cmd_run(args: RunArgs) -> Result<ExitCode> {
    set_threads(args.threads)?;
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut config =
        CaseConfig::from_json(&text).with_context(|| format!("malformed config {}", args.config.display()))?;
    if let Some(b) = args.backend {
        config.backend = b.into();
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    let out = args.out.unwrap_or_else(|| args.out_root.join(format!("{}_n{}", config.case, config.n)));

    let quiet = args.quiet;
    let series = match run_case_with(&config, |r| {
        if !quiet {
            eprintln!(
                "step {:>3}  t={:.4}  J={:.10e}  iters={:>3}  {}  eps_l2={:.3e}",
                r.step,
                r.t,
                r.cost,
                r.iterations,
                r.status.as_str(),
                r.eps_l2
            );
        }
    }) {
        Ok(s) => s,
        Err(e @ CaseError::Problem(_)) if e.is_courant() => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e).context("running case"),
    };

    let report = series.report();
    let manifest = RunManifest {
        qcfd_version: env!("CARGO_PKG_VERSION"),
        config_path: args.config.display().to_string(),
        config: &config,
        steps: series.steps.len(),
        converged_steps: series.steps.iter().filter(|s| s.status == qcfd::optimizer::Status::Converged).count(),
        mean_eps_l2: report.mean_l2,
        mean_eps_tr: report.mean_tr,
    };
    publish(&out, |dir| {
        write_time_series(&series, dir)?;
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    })?;
    println!(
        "{}: {} steps, mean eps_l2 {:.3e}, mean eps_tr {:.3e} -> {}",
        config.case,
        series.steps.len(),
        report.mean_l2,
        report.mean_tr,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

/// Fills a staging directory next to `out`, then renames it into place. An
/// existing `out` is replaced only if it holds a previous run.
fn publish(out: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() && !out.join("manifest.json").exists() && out.read_dir()?.next().is_some() {
        bail!("{} exists and does not look like a previous run; refusing to replace it", out.display());
    }
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent)?;
    let name = out.file_name().context("output path has no final component")?.to_string_lossy();
    let staging = parent.join(format!(".{name}.partial-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir(&staging)?;
    if let Err(e) = fill(&staging) {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    if out.exists() {
        std::fs::remove_dir_all(out)?;
    }
    std::fs::rename(&staging, out).with_context(|| format!("moving results to {}", out.display()))?;
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    set_threads(args.threads)?;
    if !(2..=4).contains(&args.nmax) {
        bail!("--nmax must be between 2 and 4, got {}", args.nmax);
    }
    let fault = if args.inject_adder_sign_flip { Fault::AdderSignFlip } else { Fault::None };
    let report = verify(args.nmax, args.draws, args.seed, fault)?;
    println!("{:<10} {:>2}  {:<44} {:>10}  result", "suite", "n", "check", "max error");
    for c in &report.checks {
        println!(
            "{:<10} {:>2}  {:<44} {:>10.2e}  {}",
            c.suite,
            c.n,
            c.label,
            c.max_error,
            if c.passed { "pass" } else { "FAIL" }
        );
    }
    let failed = report.failures().count();
    println!("{} checks, {} failed", report.checks.len(), failed);
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_complexity(args: ComplexityArgs) -> Result<ExitCode> {
    let kinds = if args.kinds.is_empty() { ComplexityKind::ALL.to_vec() } else { args.kinds };
    let report = complexity_report(&args.nrange.0, &args.drange.0, &kinds);
    println!("{:<14} {:>3} {:>3} {:>7} {:>7}  match", "kind", "n", "d", "count", "golden");
    for r in &report.rows {
        let opt = |v: Option<usize>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
        let flag = match r.matches() {
            Some(true) => "yes",
            Some(false) => "NO",
            None => "-",
        };
        println!("{:<14} {:>3} {:>3} {:>7} {:>7}  {flag}", r.kind.label(), r.n, opt(r.d), r.count, opt(r.golden));
    }
    println!("{}/{} golden matches", report.matched(), report.checked());
    let csv = args.csv.unwrap_or_else(|| args.out_root.join("complexity.csv"));
    if let Some(dir) = csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    report.write_csv(&csv)?;
    Ok(if report.mismatches().next().is_none() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Complexity(a) => cmd_complexity(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
