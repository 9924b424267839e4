//! Command-line benchmark harness.
//!
//! Exit codes: 0 success, 1 algorithm failure, 2 configuration or input
//! error, 3 budget exceeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use valor::bench::{
    assumption_report, env_by_name, report_json, resolve_classes, run_experiment, write_outputs,
    ClassConfig, ExperimentConfig,
};
use valor::cdp::CdpSpec;
use valor::classes::StackRule;
use valor::classes::DEFAULT_TOL;
use valor::error::Error;
use valor::hardness::barriers::{
    bellman_backup, build_backup_chain, build_needle_env, build_rare_reward_env, needle_explorer,
    SampleMode, TieBreak,
};
use valor::hardness::sat::{parse_dimacs, sat_decision_via_olive};
use valor::local_values::ParamMode;
use valor::rng::RngFactory;

#[derive(Parser)]
#[command(
    name = "valor",
    version,
    about = "Oracle-based learning benchmarks for rich-observation decision processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment configuration.
    Run(RunArgs),
    /// Emit a named environment as a JSON spec document.
    BuildEnv(BuildEnvArgs),
    /// Check realizability and completeness of classes on an environment.
    CheckAssumptions(CheckArgs),
    /// Decide a DIMACS 3-SAT instance through the optimistic constraint
    /// program of the joint eliminator.
    SatDecide(SatArgs),
    /// Reproduce one of the barrier constructions.
    Barrier(BarrierArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment configuration JSON.
    #[arg(long)]
    config: PathBuf,
    /// Override the root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the algorithm tag.
    #[arg(long)]
    algorithm: Option<String>,
    /// Override the parameter mode (theoretical | practical).
    #[arg(long)]
    mode: Option<String>,
    /// Output directory for report.json and iterations.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BuildEnvArgs {
    /// gridworld | random | backup-chain | needle | rare-reward | sat-mdp
    #[arg(long)]
    name: String,
    /// Builder parameters as inline JSON.
    #[arg(long)]
    params: Option<String>,
    /// Seed for randomized builders.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the spec here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    /// Environment spec file, or a builder name.
    #[arg(long)]
    env: String,
    /// synthesize:<distractors> | closed:<distractors> | tabular
    #[arg(long, default_value = "synthesize:15")]
    classes: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Args)]
struct SatArgs {
    /// DIMACS CNF file.
    #[arg(long)]
    input: PathBuf,
    /// Assignment-enumeration budget.
    #[arg(long, default_value_t = 1 << 24)]
    budget: u64,
}

#[derive(Args)]
struct BarrierArgs {
    /// backup | needle | rare
    which: String,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    /// Chain length for the backward-fitting construction.
    #[arg(long, default_value_t = 6)]
    chain_len: usize,
    /// Per-state sample count; omit for exact expectations.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 200)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fair (lowest index) or adversarial (highest index) tie breaking.
    #[arg(long, default_value = "adversarial")]
    ties: String,
    /// Contexts for the needle construction.
    #[arg(long, default_value_t = 8)]
    contexts: usize,
    #[arg(long, default_value_t = 100)]
    iterations: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::Json(_) | Error::Dimacs(_) | Error::Io(_)
                | Error::InvalidSpec(_) => 2u8,
                Error::BudgetExceeded(_) | Error::ParamsOverflow(_) => 3u8,
                _ => 1u8,
            })
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Run(args) => run(args),
        Command::BuildEnv(args) => build_env(args),
        Command::CheckAssumptions(args) => check_assumptions(args),
        Command::SatDecide(args) => sat_decide(args),
        Command::Barrier(args) => barrier(args),
    }
}

fn run(args: RunArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("config schema: {e}")))?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(trials) = args.trials {
        config.trials = trials;
    }
    if let Some(tag) = args.algorithm.as_deref() {
        config.algorithm = serde_json::from_value(serde_json::Value::String(tag.into()))
            .map_err(|_| Error::Config(format!("unknown algorithm {tag}")))?;
    }
    if let Some(mode) = args.mode.as_deref() {
        config.params.mode = match mode {
            "theoretical" => ParamMode::Theoretical,
            "practical" => ParamMode::Practical,
            other => return Err(Error::Config(format!("unknown mode {other}"))),
        };
    }
    let started = std::time::Instant::now();
    let report = run_experiment(&config)?;
    eprintln!(
        "{} trials in {:.2}s, success rate {:.3}",
        config.trials,
        started.elapsed().as_secs_f64(),
        report.summary.success_rate
    );
    match &args.out {
        Some(dir) => {
            write_outputs(dir, &report)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        None => println!("{}", report_json(&report)?),
    }
    Ok(ExitCode::SUCCESS)
}

fn build_env(args: BuildEnvArgs) -> Result<ExitCode, Error> {
    let params: serde_json::Value = match args.params.as_deref() {
        Some(text) => {
            serde_json::from_str(text).map_err(|e| Error::Config(format!("builder params: {e}")))?
        }
        None => serde_json::Value::Null,
    };
    let spec = env_by_name(&args.name, &params, args.seed)?;
    let text = spec.to_json()?;
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn check_assumptions(args: CheckArgs) -> Result<ExitCode, Error> {
    let spec: CdpSpec = if std::path::Path::new(&args.env).exists() {
        CdpSpec::from_json(&std::fs::read_to_string(&args.env)?)?
    } else {
        env_by_name(&args.env, &serde_json::Value::Null, args.seed)?
    };
    let classes = parse_class_arg(&args.classes)?;
    let (g, p) = resolve_classes(&classes, &spec, args.seed)?;
    let report = assumption_report(&spec, &g, &p, args.tol, args.seed)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(ExitCode::SUCCESS)
}

fn parse_class_arg(text: &str) -> Result<ClassConfig, Error> {
    if text == "tabular" {
        return Ok(ClassConfig::Tabular);
    }
    if let Some(rest) = text.strip_prefix("synthesize:") {
        let distractors = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad class spec {text}")))?;
        return Ok(ClassConfig::Synthesize { distractors });
    }
    if let Some(rest) = text.strip_prefix("closed:") {
        let distractors = rest
            .parse()
            .map_err(|_| Error::Config(format!("bad class spec {text}")))?;
        return Ok(ClassConfig::SynthesizeClosed { distractors });
    }
    Err(Error::Config(format!("bad class spec {text}")))
}

fn sat_decide(args: SatArgs) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(&args.input)?;
    let formula = parse_dimacs(&text)?;
    let sat = sat_decision_via_olive(&formula, args.budget)?;
    println!("{}", if sat { "SAT" } else { "UNSAT" });
    Ok(ExitCode::SUCCESS)
}

fn barrier(args: BarrierArgs) -> Result<ExitCode, Error> {
    match args.which.as_str() {
        "backup" => {
            let chain = build_backup_chain(args.chain_len, args.eps)?;
            let tie = match args.ties.as_str() {
                "adversarial" => TieBreak::HighestIndex,
                "fair" => TieBreak::LowestIndex,
                other => return Err(Error::Config(format!("unknown tie mode {other}"))),
            };
            let v_star = chain.spec.exact_values().v_star;
            let factory = RngFactory::new(args.seed);
            let mode = match args.n {
                Some(n) => SampleMode::Samples(n),
                None => SampleMode::Exact,
            };
            let mut failures = 0u64;
            for t in 0..args.trials {
                let (stack, _) = bellman_backup(
                    &chain.spec,
                    &chain.g_class,
                    &chain.pi_class,
                    mode,
                    tie,
                    &mut factory.stream(t),
                )?;
                let rule = StackRule {
                    class: &chain.pi_class,
                    stack: &stack,
                };
                if v_star - chain.spec.policy_value(&rule)? >= args.eps - 1e-9 {
                    failures += 1;
                }
            }
            let rate = failures as f64 / args.trials as f64;
            println!(
                "chain_len={} eps={} n={} trials={} ties={} failure_rate={:.4}",
                args.chain_len,
                args.eps,
                args.n
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| "exact".into()),
                args.trials,
                args.ties,
                rate
            );
            Ok(ExitCode::SUCCESS)
        }
        "needle" => {
            let env = build_needle_env(args.contexts)?;
            let report = needle_explorer(&env, args.iterations)?;
            println!(
                "contexts={} iterations={} suboptimality={} new_distributions={} stagnated={}",
                args.contexts,
                report.iterations,
                report.suboptimality,
                report.new_distributions,
                report.stagnated
            );
            Ok(ExitCode::SUCCESS)
        }
        "rare" => {
            let env = build_rare_reward_env(args.eps)?;
            println!(
                "eps={} sqloss_zero={} sqloss_optimal={} sqloss_flat={} expected_gap={}",
                args.eps,
                env.sqloss(0)?,
                env.sqloss(1)?,
                env.sqloss(2)?,
                env.expected_gap()?
            );
            Ok(ExitCode::SUCCESS)
        }
        other => Err(Error::Config(format!("unknown barrier {other}"))),
    }
}
