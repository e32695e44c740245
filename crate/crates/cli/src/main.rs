mod artifacts;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mirrorflow::diagnostics::Slack;
use mirrorflow::dynamics::SystemRegistry;
use mirrorflow::experiment::{prepare, ExperimentConfig, ExperimentError, Outcome, Prepared, ProblemSelector};
use mirrorflow::problems::ProblemRegistry;
use mirrorflow::verify::{run_criterion, CriterionResult, VerifyOptions, CRITERIA, NEGATIVE_CONTROL};
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "mirrorflow", version, about = "Accelerated primal-dual mirror dynamics: runs, checks and catalogue")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one system on one problem and write trajectory.csv, summary.json and plot.gp.
    Run(RunArgs),
    /// Run the acceptance suite and print a pass/fail table.
    Verify(VerifyArgs),
    /// Print the problem and system catalogue, optionally filtered by name.
    List { filter: Option<String> },
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON file with an experiment configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    system: Option<String>,
    /// One value, or several (comma separated) for a parallel sweep.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    alpha: Vec<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    /// Output directory; a sweep writes one `alpha-<value>` subdirectory per run.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Multiplicative slack applied to every bound.
    #[arg(long)]
    slack: Option<f64>,
    /// Criteria to run (0 is the consensus negative control); default is all.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
    /// Print every sub-check, not only the failing ones.
    #[arg(long)]
    verbose: bool,
    /// Also write the results as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Bad invocation or configuration; reported before any computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Verify(args) => verify(args),
        Command::List { filter } => list(filter.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Usage(format!("{}: {e}", path.display())).into())
}

fn build_configs(args: &RunArgs) -> Result<Vec<ExperimentConfig>> {
    let mut base = match &args.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(p) = &args.problem {
        base.problem = ProblemSelector::Named(p.clone());
    }
    if let Some(s) = &args.system {
        base.system = s.clone();
    }
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { base.$field = v; } )* };
    }
    set!(beta, t0, tf);
    if args.mu0.is_some() {
        base.mu0 = args.mu0;
    }
    if args.seed.is_some() {
        base.seed = args.seed;
    }
    if let Some(v) = args.rtol {
        base.integrator.rel_tol = v;
    }
    if let Some(v) = args.atol {
        base.integrator.abs_tol = v;
    }
    let out = args.out.clone().or_else(|| base.out.clone());
    let alphas = if args.alpha.is_empty() { vec![base.alpha] } else { args.alpha.clone() };
    let default_dir = |alpha: f64| PathBuf::from("runs").join(format!("{}-{}-alpha-{alpha}", base.problem.label(), base.system));
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let dir = match (&out, alphas.len()) {
                (Some(d), 1) => d.clone(),
                (Some(d), _) => d.join(format!("alpha-{alpha}")),
                (None, _) => default_dir(alpha),
            };
            ExperimentConfig { alpha, out: Some(dir), ..base.clone() }
        })
        .collect())
}

fn sweep_threads() -> Result<usize> {
    match std::env::var("MIRRORFLOW_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Usage(format!("MIRRORFLOW_THREADS must be a positive integer, got `{v}`")).into()),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let configs = build_configs(&args)?;
    let threads = sweep_threads()?.min(configs.len());
    let prepared = configs
        .iter()
        .map(|c| prepare(c).map_err(|e| Usage(e.to_string())))
        .collect::<Result<Vec<Prepared>, Usage>>()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
    let outcomes: Vec<Result<Outcome, ExperimentError>> = pool.install(|| prepared.into_par_iter().map(Prepared::run).collect());

    let mut failed = false;
    for outcome in outcomes {
        let o = outcome?;
        let dir = o.config.out.clone().expect("every run has an output directory");
        artifacts::write_all(&dir, &o)?;
        let s = o.summary();
        let failing: Vec<&str> = s.bounds.results.iter().filter(|b| !b.passed).map(|b| b.name).collect();
        let bounds = if failing.is_empty() { "all bounds hold".to_string() } else { format!("not met: {}", failing.join(" ")) };
        println!(
            "{} {} alpha={}: {} samples to t={:.4}, gap {:.3e}, slope {}, {bounds}, {:.2}s -> {}",
            s.problem,
            s.system,
            s.alpha,
            s.samples,
            s.final_time,
            s.final_gap.unwrap_or(f64::NAN),
            s.slope.map_or("n/a".to_string(), |v| format!("{v:.3}")),
            s.runtime_secs,
            dir.display()
        );
        for w in &s.warnings {
            eprintln!("warning: {w}");
        }
        if let Some(f) = &s.failure {
            eprintln!("integration failed: {f}; partial artifacts written");
            failed = true;
        }
    }
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut opts = VerifyOptions::default();
    if let Some(m) = args.slack {
        if !(m > 0.0) {
            bail!(Usage("--slack must be positive".into()));
        }
        opts.slack = Slack { multiplicative: m, ..opts.slack };
    }
    let ids: Vec<u8> = if args.only.is_empty() {
        std::iter::once(NEGATIVE_CONTROL.0).chain(CRITERIA.iter().map(|c| c.0)).collect()
    } else {
        args.only.clone()
    };
    if let Some(bad) = ids.iter().find(|&&i| i as usize > CRITERIA.len()) {
        bail!(Usage(format!("unknown criterion {bad}; expected 0..={}", CRITERIA.len())));
    }
    println!("slack {} x bound + {:e}", opts.slack.multiplicative, opts.slack.additive);
    println!("{:>3}  {:<46} {:<6} {:>10}", "id", "criterion", "result", "runtime");
    let mut results: Vec<CriterionResult> = Vec::new();
    for id in ids {
        let r = run_criterion(id, &opts)?;
        println!("{:>3}  {:<46} {:<6} {:>9.2}s", r.id, r.title, if r.passed() { "PASS" } else { "FAIL" }, r.runtime_secs());
        for c in r.checks.iter().filter(|c| args.verbose || !c.passed) {
            println!("       {} {}: {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
        }
        for t in r.timings.iter().filter(|t| !t.within_budget()) {
            println!("       note: {} took {:.1}s, budget {:.0}s", t.label, t.secs, t.budget_secs);
        }
        results.push(r);
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&results)?).with_context(|| format!("writing {}", path.display()))?;
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} of {} passed", results.len() - failed, results.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn list(filter: Option<&str>) -> Result<ExitCode> {
    let keep = |name: &str| filter.is_none_or(|f| name.contains(f));
    let problems = ProblemRegistry::builtin();
    let systems = SystemRegistry::builtin();
    let p: Vec<_> = problems.entries().filter(|e| keep(e.name)).collect();
    let s: Vec<_> = systems.entries().filter(|e| keep(e.name)).collect();
    if !p.is_empty() {
        println!("problems:");
        for e in p {
            let seed = if e.seeded { format!(", seed {}", mirrorflow::problems::default_seed(e.name)) } else { String::new() };
            println!("  {:<14} {} [systems: {}{seed}]", e.name, e.summary, e.systems.join(", "));
        }
    }
    if !s.is_empty() {
        println!("systems:");
        for e in s {
            println!("  {:<14} {}", e.name, e.summary);
        }
    }
    Ok(ExitCode::SUCCESS)
}
