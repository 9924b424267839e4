//! Seeded multi-trial experiment harness.
//!
//! A JSON experiment configuration names an environment (inline, from a
//! file, or a named builder), a class construction, an algorithm, and its
//! parameters. Trials run with seeds derived from the root seed by index,
//! so the aggregate report is a pure function of the configuration and the
//! seed regardless of the parallelism schedule. Reports serialize to JSON;
//! per-iteration metrics append to a CSV with a fixed header.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alt::global::{GlobalLearner, GlobalParams};
use crate::alt::mmd::{MmdLearner, MmdParams};
use crate::cdp::{builders, CdpSpec, ObsId};
use crate::classes::{
    check_completeness, check_realizability, close_classes, synthesize_classes, AssumptionReport,
    CompletenessBudget, PolicyClass, StackRule, ValueClass,
};
use crate::error::{Error, Result};
use crate::hardness::barriers::{
    bellman_backup, build_backup_chain, build_needle_env, needle_explorer,
    SampleMode, TieBreak,
};
use crate::hardness::olive::{olive_run, EvalMode, OliveConfig};
use crate::hardness::sat::{parse_dimacs, sat_to_mdp};
use crate::local_values::{meta_loop, IterRow, MetaLearner, MetaOutcome, ParamMode, Valor, ValorParams};
use crate::oracles::{BudgetSnapshot, MultiBackend, OracleBudget};
use crate::rng::RngFactory;

/// Which algorithm a run executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmTag {
    ValorUnconstrained,
    ValorConstrained,
    Mmd,
    Global,
    Olive,
    BellmanBackup,
    NeedleDemo,
}

impl AlgorithmTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            AlgorithmTag::ValorUnconstrained => "valor-unconstrained",
            AlgorithmTag::ValorConstrained => "valor-constrained",
            AlgorithmTag::Mmd => "mmd",
            AlgorithmTag::Global => "global",
            AlgorithmTag::Olive => "olive",
            AlgorithmTag::BellmanBackup => "bellman-backup",
            AlgorithmTag::NeedleDemo => "needle-demo",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EnvConfig {
    /// A named builder with builder-specific parameters.
    Named {
        name: String,
        #[serde(default)]
        params: serde_json::Value,
    },
    /// A complete inline spec document.
    Inline { spec: Box<CdpSpec> },
    /// A spec document on disk.
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ClassConfig {
    /// Optimal members plus this many random distractors.
    Synthesize { distractors: usize },
    /// Synthesized classes closed under greedy policies and backups.
    SynthesizeClosed { distractors: usize },
    /// The full tabular classes over all observations.
    Tabular,
}

/// Flat parameter block; algorithm-specific fields are optional and fall
/// back to documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsConfig {
    #[serde(default = "default_mode")]
    pub mode: ParamMode,
    pub eps: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default)]
    pub n_train: Option<usize>,
    #[serde(default)]
    pub n_exp: Option<usize>,
    #[serde(default)]
    pub n_eval: Option<usize>,
    #[serde(default)]
    pub eps_stat: Option<f64>,
    #[serde(default)]
    pub eps_sub: Option<f64>,
    #[serde(default)]
    pub eps_feas: Option<f64>,
    /// Two-sample identity-test threshold.
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub tau_pol: Option<f64>,
    #[serde(default)]
    pub tau_val: Option<f64>,
    /// Bellman-error tolerance of the optimistic eliminator.
    #[serde(default)]
    pub phi: Option<f64>,
    #[serde(default)]
    pub rounds: Option<usize>,
    #[serde(default)]
    pub n_per_round: Option<usize>,
    #[serde(default)]
    pub exact_expectations: Option<bool>,
    /// Sample count for the backward-fitting barrier run.
    #[serde(default)]
    pub backup_n: Option<usize>,
    #[serde(default)]
    pub adversarial_ties: Option<bool>,
    #[serde(default)]
    pub iterations: Option<usize>,
}

fn default_mode() -> ParamMode {
    ParamMode::Practical
}

fn default_delta() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    pub classes: ClassConfig,
    pub algorithm: AlgorithmTag,
    pub params: ParamsConfig,
    pub trials: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("need at least one trial".into()));
        }
        if !(0.0..=1.0).contains(&self.params.eps) {
            return Err(Error::Config("eps must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-run metrics; certifies the exact suboptimality of the returned
/// policy when one was returned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub trial: usize,
    pub success: bool,
    pub exact_suboptimality: Option<f64>,
    pub estimated_suboptimality: Option<f64>,
    pub iterations: usize,
    pub budget: BudgetSnapshot,
    pub store_sizes: Vec<usize>,
    pub error: Option<String>,
    #[serde(default)]
    pub iter_rows: Vec<IterRow>,
    /// Wall time is reported on the terminal only; it is excluded from the
    /// serialized report so identical configurations produce identical
    /// bytes.
    #[serde(skip)]
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Quantiles of exact suboptimality over trials that returned a policy.
    pub subopt_p50: Option<f64>,
    pub subopt_p90: Option<f64>,
    pub subopt_max: Option<f64>,
    pub trajectories_p50: u64,
    pub trajectories_max: u64,
    pub csc_calls_max: u64,
    pub lp_calls_max: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateReport {
    pub algorithm: String,
    pub seed: u64,
    pub summary: Summary,
    pub reports: Vec<RunReport>,
}

/// Resolve a named environment builder.
pub fn env_by_name(name: &str, params: &serde_json::Value, seed: u64) -> Result<CdpSpec> {
    #[derive(Deserialize)]
    struct ChainP {
        #[serde(default = "six")]
        chain_len: usize,
        #[serde(default = "fifth")]
        eps: f64,
    }
    #[derive(Deserialize)]
    struct NeedleP {
        #[serde(default = "eight")]
        contexts: usize,
    }
    #[derive(Deserialize)]
    struct RareP {
        #[serde(default = "rare_eps")]
        eps: f64,
    }
    #[derive(Deserialize)]
    struct SatP {
        dimacs: String,
        #[serde(default)]
        assignment: Option<Vec<bool>>,
    }
    fn six() -> usize {
        6
    }
    fn fifth() -> f64 {
        0.2
    }
    fn eight() -> usize {
        8
    }
    fn rare_eps() -> f64 {
        0.04
    }
    let parse = |v: &serde_json::Value| -> serde_json::Value {
        if v.is_null() {
            serde_json::json!({})
        } else {
            v.clone()
        }
    };
    match name {
        "gridworld" => {
            let p: builders::GridworldParams = match params {
                serde_json::Value::Null => builders::GridworldParams::default(),
                v => serde_json::from_value(v.clone())?,
            };
            builders::gridworld(&p)
        }
        "random" => {
            let p: builders::RandomCdpParams = match params {
                serde_json::Value::Null => builders::RandomCdpParams::default(),
                v => serde_json::from_value(v.clone())?,
            };
            builders::random_deterministic(&p, &mut RngFactory::new(seed).next_rng())
        }
        "backup-chain" => {
            let p: ChainP = serde_json::from_value(parse(params))?;
            builders::backup_chain(p.chain_len, p.eps)
        }
        "needle" => {
            let p: NeedleP = serde_json::from_value(parse(params))?;
            builders::needle(p.contexts)
        }
        "rare-reward" => {
            let p: RareP = serde_json::from_value(parse(params))?;
            builders::rare_reward(p.eps)
        }
        "sat-mdp" => {
            let p: SatP = serde_json::from_value(params.clone())
                .map_err(|_| Error::Config("sat-mdp needs a dimacs field".into()))?;
            let formula = parse_dimacs(&p.dimacs)?;
            let assignment = p
                .assignment
                .unwrap_or_else(|| vec![true; formula.num_vars]);
            Ok(sat_to_mdp(&formula, &assignment)?.spec)
        }
        other => Err(Error::Config(format!("unknown environment builder {other}"))),
    }
}

pub fn resolve_env(cfg: &EnvConfig, seed: u64) -> Result<CdpSpec> {
    match cfg {
        EnvConfig::Named { name, params } => env_by_name(name, params, seed),
        EnvConfig::Inline { spec } => {
            spec.validate()?;
            Ok((**spec).clone())
        }
        EnvConfig::File { path } => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {path}: {e}")))?;
            CdpSpec::from_json(&text)
        }
    }
}

pub fn resolve_classes(
    cfg: &ClassConfig,
    spec: &CdpSpec,
    seed: u64,
) -> Result<(ValueClass, PolicyClass)> {
    match cfg {
        ClassConfig::Synthesize { distractors } => {
            let rngs = RngFactory::new(seed ^ 0xC1A5_5E5);
            Ok(synthesize_classes(spec, *distractors, &mut rngs.next_rng()))
        }
        ClassConfig::SynthesizeClosed { distractors } => {
            let rngs = RngFactory::new(seed ^ 0xC1A5_5E5);
            let (g, p) = synthesize_classes(spec, *distractors, &mut rngs.next_rng());
            let (g, p, _) = close_classes(spec, &g, &p, 10_000)?;
            Ok((g, p))
        }
        ClassConfig::Tabular => {
            let obs: Vec<ObsId> = spec.all_observations().collect();
            Ok((
                ValueClass::tabular(obs.clone()),
                PolicyClass::tabular(obs, spec.num_actions),
            ))
        }
    }
}

/// Run all trials and aggregate.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<AggregateReport> {
    cfg.validate()?;
    let spec = resolve_env(&cfg.env, cfg.seed)?;
    let (g_class, pi_class) = resolve_classes(&cfg.classes, &spec, cfg.seed)?;
    let exact = spec.exact_values();
    let root = RngFactory::new(cfg.seed);

    let threads = std::env::var("VALOR_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let reports: Vec<RunReport> = pool.install(|| {
        (0..cfg.trials)
            .into_par_iter()
            .map(|trial| {
                let rngs = root.derive(trial as u64);
                run_trial(cfg, &spec, &g_class, &pi_class, &exact, trial, &rngs)
            })
            .collect()
    });

    let successes = reports.iter().filter(|r| r.success).count();
    let mut subopts: Vec<f64> = reports
        .iter()
        .filter_map(|r| r.exact_suboptimality)
        .collect();
    subopts.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let q = |v: &[f64], frac: f64| -> Option<f64> {
        if v.is_empty() {
            None
        } else {
            Some(v[((v.len() - 1) as f64 * frac).round() as usize])
        }
    };
    let mut trajs: Vec<u64> = reports.iter().map(|r| r.budget.trajectories).collect();
    trajs.sort_unstable();
    let summary = Summary {
        trials: cfg.trials,
        successes,
        success_rate: successes as f64 / cfg.trials as f64,
        subopt_p50: q(&subopts, 0.5),
        subopt_p90: q(&subopts, 0.9),
        subopt_max: subopts.last().copied(),
        trajectories_p50: trajs.get(trajs.len() / 2).copied().unwrap_or(0),
        trajectories_max: trajs.last().copied().unwrap_or(0),
        csc_calls_max: reports.iter().map(|r| r.budget.csc_calls).max().unwrap_or(0),
        lp_calls_max: reports.iter().map(|r| r.budget.lp_calls).max().unwrap_or(0),
    };
    Ok(AggregateReport {
        algorithm: cfg.algorithm.as_str().into(),
        seed: cfg.seed,
        summary,
        reports,
    })
}

fn failure_report(cfg: &ExperimentConfig, trial: usize, budget: &OracleBudget, e: Error) -> RunReport {
    RunReport {
        algorithm: cfg.algorithm.as_str().into(),
        trial,
        success: false,
        exact_suboptimality: None,
        estimated_suboptimality: None,
        iterations: 0,
        budget: budget.snapshot(),
        store_sizes: vec![],
        error: Some(e.to_string()),
        iter_rows: vec![],
        wall_time_ms: 0.0,
    }
}

fn meta_report(
    cfg: &ExperimentConfig,
    trial: usize,
    spec: &CdpSpec,
    pi_class: &PolicyClass,
    exact: &crate::cdp::ExactValues,
    budget: &OracleBudget,
    outcome: MetaOutcome,
    store_sizes: Vec<usize>,
    started: Instant,
) -> RunReport {
    let exact_subopt = outcome.policy.as_ref().map(|stack| {
        let rule = StackRule {
            class: pi_class,
            stack,
        };
        let v = spec.policy_value(&rule).unwrap_or(f64::NEG_INFINITY);
        let sub = exact.v_star - v;
        debug_assert!(sub >= -1e-9, "negative suboptimality {sub}");
        sub
    });
    let success = outcome.success
        && exact_subopt
            .map(|s| s <= cfg.params.eps)
            .unwrap_or(false);
    RunReport {
        algorithm: cfg.algorithm.as_str().into(),
        trial,
        success,
        exact_suboptimality: exact_subopt,
        estimated_suboptimality: Some(outcome.v_hat - outcome.v_hat_policy),
        iterations: outcome.iterations,
        budget: budget.snapshot(),
        store_sizes,
        error: None,
        iter_rows: outcome.iter_rows,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

pub fn valor_params_from(cfg: &ParamsConfig, spec: &CdpSpec, g_len: usize, pi_len: usize) -> Result<ValorParams> {
    let m = spec.max_states_per_level();
    match cfg.mode {
        ParamMode::Theoretical => ValorParams::theoretical(
            cfg.eps,
            cfg.delta,
            m,
            spec.num_actions,
            spec.horizon,
            g_len.max(1),
            pi_len.max(1),
        ),
        ParamMode::Practical => Ok(ValorParams::practical(
            cfg.eps,
            m,
            spec.num_actions,
            spec.horizon,
            cfg.n_test.unwrap_or(2_000),
            cfg.n_train.unwrap_or(2_000),
            cfg.n_exp.unwrap_or(20),
            cfg.n_eval.unwrap_or(3_000),
            cfg.eps_stat.unwrap_or(0.012),
            cfg.eps_sub.unwrap_or(0.0),
            cfg.eps_feas.unwrap_or(0.0),
        )),
    }
}

/// Shared JSON-lines oracle-audit sink, enabled by the `VALOR_ORACLE_AUDIT`
/// environment variable naming the output file.
fn audit_sink() -> Option<std::sync::Arc<std::sync::Mutex<Box<dyn Write + Send>>>> {
    use std::sync::OnceLock;
    static SINK: OnceLock<Option<std::sync::Arc<std::sync::Mutex<Box<dyn Write + Send>>>>> =
        OnceLock::new();
    SINK.get_or_init(|| {
        let path = std::env::var("VALOR_ORACLE_AUDIT").ok()?;
        let file = std::fs::File::create(path).ok()?;
        Some(std::sync::Arc::new(std::sync::Mutex::new(
            Box::new(file) as Box<dyn Write + Send>
        )))
    })
    .clone()
}

fn run_trial(
    cfg: &ExperimentConfig,
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    exact: &crate::cdp::ExactValues,
    trial: usize,
    rngs: &RngFactory,
) -> RunReport {
    let budget = OracleBudget::new();
    if let Some(sink) = audit_sink() {
        budget.set_audit(sink);
    }
    let started = Instant::now();
    let result: Result<RunReport> = (|| {
        match cfg.algorithm {
            AlgorithmTag::ValorUnconstrained | AlgorithmTag::ValorConstrained => {
                let params = valor_params_from(
                    &cfg.params,
                    spec,
                    g_class.len().unwrap_or(0),
                    pi_class.len().unwrap_or(0),
                )?;
                let mut learner = Valor::new(spec, g_class, pi_class, &params, &budget, rngs)?;
                learner.constrained = cfg.algorithm == AlgorithmTag::ValorConstrained;
                learner.multi_backend = MultiBackend::Auto;
                let outcome = meta_loop(
                    spec,
                    pi_class,
                    &mut learner,
                    params.eps,
                    params.n_eval,
                    params.n_exp,
                    params.max_iterations(),
                    &budget,
                    rngs,
                )?;
                let sizes = learner.state.store_sizes();
                Ok(meta_report(
                    cfg, trial, spec, pi_class, exact, &budget, outcome, sizes, started,
                ))
            }
            AlgorithmTag::Mmd => {
                let m = spec.max_states_per_level();
                let params = match cfg.params.mode {
                    ParamMode::Theoretical => MmdParams::theoretical(
                        cfg.params.eps,
                        cfg.params.delta,
                        m,
                        spec.num_actions,
                        spec.horizon,
                        g_class.len().unwrap_or(1),
                        pi_class.len().unwrap_or(1),
                    )?,
                    ParamMode::Practical => MmdParams::practical(
                        cfg.params.eps,
                        m,
                        spec.num_actions,
                        spec.horizon,
                        cfg.params.n_train.unwrap_or(2_000),
                        cfg.params.n_exp.unwrap_or(20),
                        cfg.params.n_eval.unwrap_or(3_000),
                        cfg.params.tau.unwrap_or(0.05),
                    ),
                };
                let mut learner = MmdLearner::new(spec, g_class, pi_class, &params, &budget, rngs)?;
                let outcome = meta_loop(
                    spec,
                    pi_class,
                    &mut learner,
                    params.eps,
                    params.n_eval,
                    params.n_exp,
                    m * spec.horizon,
                    &budget,
                    rngs,
                )?;
                let sizes = learner.store_sizes();
                Ok(meta_report(
                    cfg, trial, spec, pi_class, exact, &budget, outcome, sizes, started,
                ))
            }
            AlgorithmTag::Global => {
                let m = spec.max_states_per_level();
                let params = match cfg.params.mode {
                    ParamMode::Theoretical => GlobalParams::theoretical(
                        cfg.params.eps,
                        cfg.params.delta,
                        m,
                        spec.num_actions,
                        spec.horizon,
                        g_class.len().unwrap_or(1),
                        pi_class.len().unwrap_or(1),
                    )?,
                    ParamMode::Practical => GlobalParams::practical(
                        cfg.params.eps,
                        m,
                        spec.num_actions,
                        spec.horizon,
                        cfg.params.n_test.unwrap_or(6_000),
                        cfg.params.n_train.unwrap_or(6_000),
                        cfg.params.tau_pol.unwrap_or(0.014),
                        cfg.params.tau_val.unwrap_or(0.014),
                    ),
                };
                let mut learner =
                    GlobalLearner::new(spec, g_class, pi_class, &params, &budget, rngs)?;
                let stack = learner.run()?;
                let rule = StackRule {
                    class: pi_class,
                    stack: &stack,
                };
                let sub = exact.v_star - spec.policy_value(&rule)?;
                Ok(RunReport {
                    algorithm: cfg.algorithm.as_str().into(),
                    trial,
                    success: sub <= cfg.params.eps,
                    exact_suboptimality: Some(sub),
                    estimated_suboptimality: None,
                    iterations: learner.dfs_calls as usize,
                    budget: budget.snapshot(),
                    store_sizes: learner.learned_sizes(),
                    error: None,
                    iter_rows: vec![],
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
            AlgorithmTag::Olive => {
                let olive_cfg = OliveConfig {
                    phi: cfg.params.phi.unwrap_or(1e-7),
                    eps: cfg.params.eps,
                    n_per_round: cfg.params.n_per_round.unwrap_or(2_000),
                    mode: if cfg.params.exact_expectations.unwrap_or(true) {
                        EvalMode::Exact
                    } else {
                        EvalMode::MonteCarlo
                    },
                    round_cap: cfg.params.rounds.unwrap_or(100),
                };
                let report = olive_run(spec, g_class, pi_class, &olive_cfg, &budget, rngs)?;
                let sub = report.policy.as_ref().map(|p| {
                    let rule = |_: usize, x: ObsId| pi_class.act(p, x).ok();
                    exact.v_star - spec.policy_value(&rule).unwrap_or(f64::NEG_INFINITY)
                });
                Ok(RunReport {
                    algorithm: cfg.algorithm.as_str().into(),
                    trial,
                    success: report.success
                        && sub.map(|s| s <= cfg.params.eps).unwrap_or(false),
                    exact_suboptimality: sub,
                    estimated_suboptimality: Some(report.predicted - report.achieved),
                    iterations: report.rounds,
                    budget: budget.snapshot(),
                    store_sizes: vec![],
                    error: None,
                    iter_rows: vec![],
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
            AlgorithmTag::BellmanBackup => {
                // Rebuild the two-chain construction so the paired classes
                // are the adversarial ones.
                let chain_len = spec.horizon - 1;
                let eps_gap = 0.2;
                let chain = build_backup_chain(chain_len.max(1), eps_gap)?;
                let tie = if cfg.params.adversarial_ties.unwrap_or(true) {
                    TieBreak::HighestIndex
                } else {
                    TieBreak::LowestIndex
                };
                let mode = match cfg.params.backup_n {
                    Some(n) => SampleMode::Samples(n),
                    None => SampleMode::Exact,
                };
                let (stack, _) = bellman_backup(
                    &chain.spec,
                    &chain.g_class,
                    &chain.pi_class,
                    mode,
                    tie,
                    &mut rngs.next_rng(),
                )?;
                let rule = StackRule {
                    class: &chain.pi_class,
                    stack: &stack,
                };
                let ev = chain.spec.exact_values();
                let sub = ev.v_star - chain.spec.policy_value(&rule)?;
                Ok(RunReport {
                    algorithm: cfg.algorithm.as_str().into(),
                    trial,
                    success: sub < eps_gap,
                    exact_suboptimality: Some(sub),
                    estimated_suboptimality: None,
                    iterations: 1,
                    budget: budget.snapshot(),
                    store_sizes: vec![],
                    error: None,
                    iter_rows: vec![],
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
            AlgorithmTag::NeedleDemo => {
                let contexts = spec.observations_at(1).count();
                let env = build_needle_env(contexts)?;
                let report = needle_explorer(&env, cfg.params.iterations.unwrap_or(100))?;
                Ok(RunReport {
                    algorithm: cfg.algorithm.as_str().into(),
                    trial,
                    success: report.stagnated && report.new_distributions == 0,
                    exact_suboptimality: Some(report.suboptimality),
                    estimated_suboptimality: None,
                    iterations: report.iterations,
                    budget: budget.snapshot(),
                    store_sizes: vec![],
                    error: None,
                    iter_rows: vec![],
                    wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
                })
            }
        }
    })();
    result.unwrap_or_else(|e| failure_report(cfg, trial, &budget, e))
}

/// Check the class assumptions against an environment and report.
pub fn assumption_report(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    tol: f64,
    seed: u64,
) -> Result<AssumptionReport> {
    let mut report = check_realizability(spec, g_class, pi_class, tol);
    let completeness = check_completeness(
        spec,
        g_class,
        pi_class,
        tol,
        CompletenessBudget::default(),
        &mut RngFactory::new(seed).next_rng(),
    )?;
    report.policy_value_complete = completeness.policy_value_complete;
    report.policy_complete = completeness.policy_complete;
    Ok(report)
}

/// Serialize an aggregate report; stable bytes for a fixed configuration.
pub fn report_json(report: &AggregateReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Fixed-schema CSV of per-iteration metrics: one row per (trial,
/// iteration).
pub fn write_iterations_csv<W: Write>(out: W, report: &AggregateReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "trial",
        "iteration",
        "v_hat",
        "v_hat_policy",
        "store_sizes",
        "csc_calls",
        "lp_calls",
        "ls_calls",
        "multi_csc_calls",
        "trajectories",
    ])
    .map_err(|e| Error::Config(format!("csv: {e}")))?;
    for r in &report.reports {
        for row in &r.iter_rows {
            let sizes = row
                .store_sizes
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join("|");
            w.write_record([
                r.trial.to_string(),
                row.iteration.to_string(),
                format!("{:.6}", row.v_hat),
                format!("{:.6}", row.v_hat_policy),
                sizes,
                row.budget.csc_calls.to_string(),
                row.budget.lp_calls.to_string(),
                row.budget.ls_calls.to_string(),
                row.budget.multi_csc_calls.to_string(),
                row.budget.trajectories.to_string(),
            ])
            .map_err(|e| Error::Config(format!("csv: {e}")))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Write report JSON and iteration CSV into a directory.
pub fn write_outputs(dir: &Path, report: &AggregateReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.json"), report_json(report)?)?;
    let file = std::fs::File::create(dir.join("iterations.csv"))?;
    write_iterations_csv(file, report)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            env: EnvConfig::Named {
                name: "random".into(),
                params: serde_json::json!({
                    "horizon": 2, "num_actions": 2, "states_per_level": 2,
                    "obs_per_level": 6, "reward_scale": 0.9
                }),
            },
            classes: ClassConfig::Synthesize { distractors: 15 },
            algorithm: AlgorithmTag::ValorUnconstrained,
            params: ParamsConfig {
                mode: ParamMode::Practical,
                eps: 0.1,
                delta: 0.05,
                n_test: Some(2_000),
                n_train: Some(2_000),
                n_exp: Some(10),
                n_eval: Some(2_000),
                eps_stat: Some(0.012),
                eps_sub: None,
                eps_feas: None,
                tau: None,
                tau_pol: None,
                tau_val: None,
                phi: None,
                rounds: None,
                n_per_round: None,
                exact_expectations: None,
                backup_n: None,
                adversarial_ties: None,
                iterations: None,
            },
            trials: 2,
            seed: 11,
        }
    }

    #[test]
    fn single_trial_summary_equals_report() {
        let mut cfg = small_config();
        cfg.trials = 1;
        let agg = run_experiment(&cfg).unwrap();
        assert_eq!(agg.reports.len(), 1);
        assert_eq!(
            agg.summary.successes,
            agg.reports.iter().filter(|r| r.success).count()
        );
        assert_eq!(agg.summary.subopt_max, agg.reports[0].exact_suboptimality);
    }

    #[test]
    fn identical_configs_produce_identical_bytes() {
        let cfg = small_config();
        let a = report_json(&run_experiment(&cfg).unwrap()).unwrap();
        let b = report_json(&run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        let mut csv_a = Vec::new();
        let mut csv_b = Vec::new();
        write_iterations_csv(&mut csv_a, &run_experiment(&cfg).unwrap()).unwrap();
        write_iterations_csv(&mut csv_b, &run_experiment(&cfg).unwrap()).unwrap();
        assert_eq!(csv_a, csv_b);
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = small_config();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.algorithm, AlgorithmTag::ValorUnconstrained);
        assert_eq!(back.trials, 2);
    }

    #[test]
    fn unknown_env_is_a_config_error() {
        let mut cfg = small_config();
        cfg.env = EnvConfig::Named {
            name: "nonesuch".into(),
            params: serde_json::Value::Null,
        };
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn named_builders_resolve() {
        for name in ["gridworld", "backup-chain", "needle", "rare-reward", "random"] {
            let spec = env_by_name(name, &serde_json::Value::Null, 3).unwrap();
            spec.validate().unwrap();
        }
        let sat = env_by_name(
            "sat-mdp",
            &serde_json::json!({"dimacs": "p cnf 3 1\n1 2 3 0\n"}),
            0,
        )
        .unwrap();
        assert_eq!(sat.horizon, 3);
    }
}
