//! `regret-umdp`: generate benchmark UMDPs, plan, evaluate, run sweeps and
//! the self-verification suite.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use regret_core::domains::{
    prune_actions, select_samples, CurrentField, Domain, GliderScenario, GliderSpec, Scenario,
};
use regret_core::eval::{max_regret, run_experiment, write_results, Coverage, ExperimentConfig};
use regret_core::io::{read_policy, read_umdp, write_policy, write_umdp};
use regret_core::model::validate_umdp;
use regret_core::planners::{run_method, Method, PlannerConfig};
use regret_core::solve::{solve_samples, IterLimits};
use regret_core::verify::{run_suite, VerifyConfig};
use regret_core::Error;

#[derive(Parser)]
#[command(name = "regret-umdp", version, about = "Minimax-regret planning for uncertain SSPs")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a benchmark UMDP.
    Generate(GenerateArgs),
    /// Plan with one method and write the policy.
    Plan(PlanArgs),
    /// Maximum regret of a policy over the samples of a UMDP.
    Evaluate(EvaluateArgs),
    /// Run an experiment described by a JSON config.
    Sweep(SweepArgs),
    /// Run the property suite on seeded random instances.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DomainArg {
    Disaster,
    Medical,
    Glider,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Disaster => Domain::Disaster,
            DomainArg::Medical => Domain::Medical,
            DomainArg::Glider => Domain::Glider,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Reg,
    Cemr,
    Robust,
    Avg,
    Best,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Reg => Method::Reg,
            MethodArg::Cemr => Method::Cemr,
            MethodArg::Robust => Method::Robust,
            MethodArg::Avg => Method::Avg,
            MethodArg::Best => Method::Best,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    domain: DomainArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Grid side (disaster, synthetic glider field).
    #[arg(long, default_value_t = 6)]
    size: usize,
    /// Samples kept in the model (disaster, medical).
    #[arg(long, default_value_t = 15)]
    samples: usize,
    /// Candidate pool the samples are selected from (disaster, medical).
    #[arg(long, default_value_t = 45)]
    candidates: usize,
    /// Glider current field: `synthetic` or a field JSON file.
    #[arg(long, default_value = "synthetic")]
    field: String,
}

#[derive(Args)]
struct PlannerArgs {
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long, default_value_t = 1e-4)]
    kappa: f64,
    /// Planning time limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

impl PlannerArgs {
    fn config(&self) -> PlannerConfig {
        PlannerConfig {
            epsilon: self.epsilon,
            kappa: self.kappa,
            time_limit: self.timeout.map(Duration::from_secs_f64),
            ..PlannerConfig::default()
        }
    }
}

#[derive(Args)]
struct PlanArgs {
    /// UMDP JSON file.
    umdp: PathBuf,
    #[arg(long, value_enum, default_value = "reg")]
    method: MethodArg,
    /// Option horizon (reg, cemr).
    #[arg(long, default_value_t = 1)]
    n: usize,
    #[command(flatten)]
    planner: PlannerArgs,
    /// Keep only actions optimal in some sample before planning.
    #[arg(long)]
    prune: bool,
    /// Policy JSON output.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// UMDP JSON file whose samples the policy is scored on.
    umdp: PathBuf,
    /// Policy JSON file.
    #[arg(long)]
    policy: PathBuf,
    /// Re-anchor option plans at states their tables do not cover.
    #[arg(long)]
    fallback: bool,
    /// Optional JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Experiment config JSON.
    config: PathBuf,
    /// Output directory for results.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's per-method time limit (seconds).
    #[arg(long)]
    timeout: Option<f64>,
    /// Leave the time_s column empty so repeated runs are byte-identical.
    #[arg(long)]
    no_time: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reduced instance counts.
    #[arg(long)]
    quick: bool,
    /// Corrupt one transition row to mass 0.9 in the validator property.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. } | Error::Divergence { .. } | Error::BudgetExceeded { .. } => 2,
        Error::Timeout => 3,
        _ => 1,
    }
}

fn generate(args: &GenerateArgs) -> Result<(), Error> {
    let domain = Domain::from(args.domain);
    let scenario: Box<dyn Scenario> = match (domain, args.field.as_str()) {
        (Domain::Glider, "synthetic") => domain.scenario(args.size, args.seed)?,
        (Domain::Glider, path) => {
            let field = CurrentField::from_json(&fs::read_to_string(path)?)?;
            let spec = GliderSpec {
                seed: args.seed,
                ..GliderSpec::default()
            };
            Box::new(GliderScenario::with_field(&spec, field)?)
        }
        _ => domain.scenario(args.size, args.seed)?,
    };
    let pool = scenario.training_candidates(args.candidates.max(args.samples))?;
    let umdp = scenario.assemble(select_samples(&pool, args.samples.min(pool.len()))?)?;
    validate_umdp(&umdp).into_result()?;
    write_umdp(&umdp, &args.out)?;
    println!(
        "wrote {} ({} states, {} actions, {} samples)",
        args.out.display(),
        umdp.n_states(),
        umdp.n_actions(),
        umdp.n_samples()
    );
    Ok(())
}

fn plan(args: &PlanArgs) -> Result<(), Error> {
    let cfg = args.planner.config();
    cfg.check()?;
    let mut umdp = read_umdp(&args.umdp)?;
    let limits = IterLimits::default();
    if args.prune {
        umdp = prune_actions(&umdp, limits)?;
    }
    let start = Instant::now();
    let optima = solve_samples(&umdp, limits)?;
    let planned = run_method(&umdp, args.method.into(), args.n, &cfg, &optima)?;
    let elapsed = start.elapsed().as_secs_f64();
    write_policy(&planned.policy, &args.out)?;
    let regret = max_regret(&umdp, planned.policy.as_ref(), &optima, Coverage::Strict, limits)?;
    let s0 = umdp.state_names()[umdp.initial()].clone();
    match planned.value {
        Some(v) => println!("objective({s0}) = {v:.10}"),
        None => println!("objective({s0}) = n/a"),
    }
    println!("reg({s0}) = {:.10}", regret.max_regret);
    println!("time_s = {elapsed:.3}");
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<(), Error> {
    let umdp = read_umdp(&args.umdp)?;
    let policy = read_policy(&args.policy)?;
    let limits = IterLimits::default();
    let optima = solve_samples(&umdp, limits)?;
    let coverage = if args.fallback { Coverage::Fallback } else { Coverage::Strict };
    let profile = max_regret(&umdp, policy.as_ref(), &optima, coverage, limits)?;
    println!("max_regret = {:.10}", profile.max_regret);
    println!("worst_sample = {}", profile.worst_sample);
    if let Some(out) = &args.out {
        let report = serde_json::json!({
            "max_regret": profile.max_regret,
            "worst_sample": profile.worst_sample,
            "per_sample": profile.per_sample.iter().map(|r| r.is_finite().then_some(*r)).collect::<Vec<_>>(),
        });
        fs::write(out, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<(), Error> {
    let mut cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    if let Some(t) = args.timeout {
        cfg.timeout_s = t;
    }
    if args.no_time {
        cfg.record_time = false;
    }
    let output = run_experiment(&cfg)?;
    fs::create_dir_all(&args.out)?;
    write_results(&output.rows, BufWriter::new(File::create(args.out.join("results.csv"))?))?;
    fs::write(
        args.out.join("summary.json"),
        serde_json::to_string_pretty(&output.summary)?,
    )?;
    for m in &output.summary.methods {
        match (m.mean_normalized, m.sd_normalized) {
            (Some(mean), Some(sd)) => println!("{:<20} normalized {mean:.3} ± {sd:.3} ({} runs)", m.label, m.completed),
            _ => println!("{:<20} no completed runs", m.label),
        }
    }
    Ok(())
}

fn verify(args: &VerifyArgs) -> bool {
    let cfg = VerifyConfig {
        seed: args.seed,
        quick: args.quick,
        inject_fault: args.inject_fault,
    };
    let outcomes = run_suite(&cfg);
    for o in &outcomes {
        println!(
            "{} {:<24} {:>4} cases {:>8.2}s  {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.cases,
            o.seconds,
            o.detail
        );
    }
    outcomes.iter().all(|o| o.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGRET_UMDP_LOG", "error")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Plan(a) => plan(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Sweep(a) => sweep(a),
        Command::Verify(a) => {
            return if verify(a) { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match result {
        Ok(()) => {
            info!("done");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
