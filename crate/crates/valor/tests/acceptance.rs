//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`). Expected quantities are
//! checked against independent oracles computed inside this file.

use std::sync::OnceLock;

use rand::RngExt;
use rand_chacha::ChaCha12Rng;

use valor::alt::global::{GlobalLearner, GlobalParams};
use valor::alt::mmd::{MmdLearner, MmdParams};
use valor::cdp::{builders, CdpSpec, ExactValues, ObsId};
use valor::classes::{
    close_classes, synthesize_classes, PolicyClass, PolicyFn, StackRule, ValueClass, ValueFn,
};
use valor::hardness::barriers::{
    bellman_backup, build_backup_chain, build_needle_env, build_rare_reward_env, needle_explorer,
    SampleMode, TieBreak,
};
use valor::hardness::olive::{olive_run, EvalMode, OliveConfig};
use valor::hardness::sat::{
    adversarial_olive_trace, olive_sat_constraints, sat_decision_via_olive, Lit, SatConstraint,
    SatFormula,
};
use valor::local_values::{meta_loop, Valor, ValorParams};
use valor::oracles::{
    csc_oracle, lp_oracle, ls_oracle, multi_csc_oracle, CscDataset, Direction, LinFunctional,
    LpConstraint, LpOutcome, LpProblem, LpSense, LsDataset, MultiBackend, MultiCscProblem,
    MultiOutcome, MwConfig, OracleBudget,
};
use valor::rng::RngFactory;

fn verdict(criterion: u32, ok: bool, detail: &str) -> bool {
    println!(
        "ACCEPTANCE {criterion:02} [{}] {detail}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

// ---------------------------------------------------------------------
// Shared benchmark suite: 25 random deterministic processes with
// realizable 64-element classes.
// ---------------------------------------------------------------------

struct BenchCase {
    spec: CdpSpec,
    g: ValueClass,
    p: PolicyClass,
    exact: ExactValues,
}

fn bench_suite() -> &'static Vec<BenchCase> {
    static SUITE: OnceLock<Vec<BenchCase>> = OnceLock::new();
    SUITE.get_or_init(|| {
        let root = RngFactory::new(0xB00C);
        (0..25u64)
            .map(|i| {
                let f = root.derive(i);
                let mut rng = f.next_rng();
                let horizon = 2 + (i % 2) as usize; // H in {2, 3}
                let params = builders::RandomCdpParams {
                    horizon,
                    num_actions: 3 - (i % 2) as usize, // K in {3, 2}
                    states_per_level: 3 + (rng.random_range(0..2)),
                    obs_per_level: 8 + rng.random_range(0..5),
                    reward_scale: 0.6,
                };
                let spec = builders::random_deterministic(&params, &mut f.next_rng()).unwrap();
                let (g, p) = synthesize_classes(&spec, 63, &mut f.next_rng());
                let exact = spec.exact_values();
                BenchCase { spec, g, p, exact }
            })
            .collect()
    })
}

fn bench_params(spec: &CdpSpec, n_test: usize, n_train: usize) -> ValorParams {
    ValorParams::practical(
        0.1,
        spec.max_states_per_level(),
        spec.num_actions,
        spec.horizon,
        n_test,
        n_train,
        20,
        3_000,
        0.008,
        0.0,
        0.0,
    )
}

struct SuiteRun {
    success: bool,
    budget: valor::oracles::BudgetSnapshot,
    params: ValorParams,
    /// Hidden state behind every stored record, per level.
    record_states: Vec<Vec<valor::cdp::StateId>>,
}

fn run_valor_case(
    case: &BenchCase,
    constrained: bool,
    n_test: usize,
    n_train: usize,
    seed: u64,
) -> SuiteRun {
    let rngs = RngFactory::new(seed);
    let params = bench_params(&case.spec, n_test, n_train);
    let budget = OracleBudget::new();
    let mut learner = Valor::new(&case.spec, &case.g, &case.p, &params, &budget, &rngs).unwrap();
    learner.constrained = constrained;
    let outcome = meta_loop(
        &case.spec,
        &case.p,
        &mut learner,
        params.eps,
        params.n_eval,
        params.n_exp,
        params.max_iterations(),
        &budget,
        &rngs,
    );
    let (success, state) = match outcome {
        Ok(out) => {
            let ok = out.success
                && out
                    .policy
                    .map(|stack| {
                        let rule = StackRule {
                            class: &case.p,
                            stack: &stack,
                        };
                        case.exact.v_star - case.spec.policy_value(&rule).unwrap() <= params.eps
                    })
                    .unwrap_or(false);
            (ok, learner.state)
        }
        Err(_) => (false, learner.state),
    };
    let record_states = state
        .stores
        .iter()
        .map(|records| {
            records
                .iter()
                .map(|r| case.spec.state_at_path(&r.source_path).unwrap())
                .collect()
        })
        .collect();
    SuiteRun {
        success,
        budget: budget.snapshot(),
        params,
        record_states,
    }
}

fn criterion2_runs() -> &'static (Vec<SuiteRun>, Vec<SuiteRun>) {
    static RUNS: OnceLock<(Vec<SuiteRun>, Vec<SuiteRun>)> = OnceLock::new();
    RUNS.get_or_init(|| {
        let suite = bench_suite();
        let unconstrained: Vec<SuiteRun> = suite
            .iter()
            .enumerate()
            .map(|(i, case)| run_valor_case(case, false, 2_000, 2_000, 0x51EE + i as u64))
            .collect();
        let constrained: Vec<SuiteRun> = suite
            .iter()
            .enumerate()
            .map(|(i, case)| run_valor_case(case, true, 2_000, 2_000, 0xC0_51EE + i as u64))
            .collect();
        (unconstrained, constrained)
    })
}

// ---------------------------------------------------------------------
// Criterion 1: oracle equivalence against brute-force enumeration.
// ---------------------------------------------------------------------

fn random_explicit_classes(
    rng: &mut ChaCha12Rng,
    num_obs: usize,
    k: usize,
    g_len: usize,
    p_len: usize,
) -> (Vec<ObsId>, ValueClass, PolicyClass) {
    let obs: Vec<ObsId> = (0..num_obs as u32).map(ObsId).collect();
    let values = (0..g_len)
        .map(|_| (0..num_obs).map(|_| rng.random::<f64>()).collect())
        .collect();
    let actions = (0..p_len)
        .map(|_| (0..num_obs).map(|_| rng.random_range(0..k)).collect())
        .collect();
    (
        obs.clone(),
        ValueClass::explicit(obs.clone(), values).unwrap(),
        PolicyClass::explicit(obs, k, actions).unwrap(),
    )
}

#[test]
fn acceptance_01_oracle_equivalence() {
    let started = std::time::Instant::now();
    let factory = RngFactory::new(0x0AC1);
    let budget = OracleBudget::new();
    let mut checked = 0usize;
    let mut ok = true;

    // 300 classification instances vs a direct per-member scan.
    for _ in 0..300 {
        let mut rng = factory.next_rng();
        let num_obs = 1 + rng.random_range(0..20);
        let k = 2 + rng.random_range(0..4);
        let p_len = 1 + rng.random_range(0..200);
        let (obs, _, p) = random_explicit_classes(&mut rng, num_obs, k, 1, p_len);
        let mut data = CscDataset::new();
        for _ in 0..(1 + rng.random_range(0..500)) {
            let x = obs[rng.random_range(0..obs.len())];
            data.push(x, (0..k).map(|_| rng.random::<f64>()).collect());
        }
        let got = csc_oracle(&p, &data, 0.0, &budget).unwrap();
        let got_cost = data.avg_cost(&p, &got).unwrap();
        // independent brute force, row order
        let mut best = f64::INFINITY;
        for id in 0..p_len {
            let mut total = 0.0;
            for row in &data.rows {
                total += row.costs[p.act(&PolicyFn::Member(id), row.x).unwrap()];
            }
            best = best.min(total / data.len() as f64);
        }
        ok &= (got_cost - best).abs() <= 1e-12 * (1.0 + best.abs());
        checked += 1;
    }

    // 200 regression instances vs a direct scan.
    for _ in 0..200 {
        let mut rng = factory.next_rng();
        let num_obs = 1 + rng.random_range(0..20);
        let g_len = 1 + rng.random_range(0..200);
        let (obs, g, _) = random_explicit_classes(&mut rng, num_obs, 2, g_len, 1);
        let mut data = LsDataset::default();
        for _ in 0..(1 + rng.random_range(0..500)) {
            data.push(obs[rng.random_range(0..obs.len())], rng.random::<f64>());
        }
        let got = ls_oracle(&g, &data, 0.0, &budget).unwrap();
        let got_loss = data.loss(&g, &got).unwrap();
        let mut best = f64::INFINITY;
        for id in 0..g_len {
            best = best.min(data.loss(&g, &ValueFn::Member(id)).unwrap());
        }
        ok &= (got_loss - best).abs() <= 1e-9 * (1.0 + best.abs());
        checked += 1;
    }

    // 250 explicit linear programs vs filter-and-extremum.
    for _ in 0..250 {
        let mut rng = factory.next_rng();
        let num_obs = 1 + rng.random_range(0..20);
        let g_len = 1 + rng.random_range(0..200);
        let (obs, g, _) = random_explicit_classes(&mut rng, num_obs, 2, g_len, 1);
        let functional = |rng: &mut ChaCha12Rng| -> LinFunctional {
            let n = 1 + rng.random_range(0..num_obs);
            LinFunctional {
                terms: (0..n)
                    .map(|_| {
                        (
                            obs[rng.random_range(0..obs.len())],
                            rng.random::<f64>() - 0.25,
                        )
                    })
                    .collect(),
            }
        };
        let eps_feas = rng.random::<f64>() * 0.05;
        let problem = LpProblem {
            objective: functional(&mut rng),
            direction: if rng.random::<f64>() < 0.5 {
                Direction::Maximize
            } else {
                Direction::Minimize
            },
            constraints: (0..rng.random_range(0..4))
                .map(|_| LpConstraint {
                    functional: functional(&mut rng),
                    sense: if rng.random::<f64>() < 0.5 {
                        LpSense::Le(rng.random::<f64>())
                    } else {
                        let lo = rng.random::<f64>() - 0.5;
                        LpSense::Interval(lo, lo + rng.random::<f64>())
                    },
                })
                .collect(),
            eps_sub: 0.0,
            eps_feas,
        };
        let got = lp_oracle(&g, &problem, &budget).unwrap();
        // independent scan
        let mut best: Option<f64> = None;
        for id in 0..g_len {
            let f = ValueFn::Member(id);
            let feasible = problem.constraints.iter().all(|c| {
                c.violation(c.functional.eval(&g, &f).unwrap()) <= eps_feas
            });
            if !feasible {
                continue;
            }
            let obj = problem.objective.eval(&g, &f).unwrap();
            best = Some(match (problem.direction, best) {
                (_, None) => obj,
                (Direction::Maximize, Some(b)) => obj.max(b),
                (Direction::Minimize, Some(b)) => obj.min(b),
            });
        }
        match (got, best) {
            (LpOutcome::Infeasible, None) => {}
            (LpOutcome::Feasible { objective, .. }, Some(b)) => {
                ok &= (objective - b).abs() <= 1e-12 * (1.0 + b.abs())
            }
            _ => ok = false,
        }
        checked += 1;
    }

    // 60 tabular linear programs vs grid search at step 0.01 (3 variables).
    for _ in 0..60 {
        let mut rng = factory.next_rng();
        let d = 1 + rng.random_range(0..3);
        let obs: Vec<ObsId> = (0..d as u32).map(ObsId).collect();
        let g = ValueClass::tabular(obs.clone());
        let functional = |rng: &mut ChaCha12Rng| -> LinFunctional {
            LinFunctional {
                terms: obs
                    .iter()
                    .map(|&x| (x, rng.random::<f64>() - 0.3))
                    .collect(),
            }
        };
        let problem = LpProblem {
            objective: functional(&mut rng),
            direction: Direction::Maximize,
            constraints: (0..rng.random_range(0..5))
                .map(|_| LpConstraint {
                    functional: functional(&mut rng),
                    sense: LpSense::Le(rng.random::<f64>() * 0.8),
                })
                .collect(),
            eps_sub: 0.0,
            eps_feas: 0.0,
        };
        let got = lp_oracle(&g, &problem, &budget).unwrap();
        // grid brute force on {0, 0.01, ..., 1}^d
        let steps = 101usize;
        let mut best: Option<f64> = None;
        let mut idx = vec![0usize; d];
        'grid: loop {
            let assign: Vec<f64> = idx.iter().map(|&i| i as f64 / 100.0).collect();
            let eval = |f: &LinFunctional| -> f64 {
                f.terms
                    .iter()
                    .map(|&(x, c)| c * assign[x.0 as usize])
                    .sum()
            };
            let feasible = problem
                .constraints
                .iter()
                .all(|c| c.violation(eval(&c.functional)) <= 1e-12);
            if feasible {
                let obj = eval(&problem.objective);
                best = Some(best.map(|b: f64| b.max(obj)).unwrap_or(obj));
            }
            let mut i = 0;
            loop {
                if i == d {
                    break 'grid;
                }
                idx[i] += 1;
                if idx[i] < steps {
                    break;
                }
                idx[i] = 0;
                i += 1;
            }
        }
        match (got, best) {
            (LpOutcome::Feasible { objective, .. }, Some(b)) => ok &= (objective - b).abs() <= 0.02,
            (LpOutcome::Infeasible, None) => {}
            // the grid can miss a thin feasible sliver; the solver cannot
            (LpOutcome::Feasible { .. }, None) => {}
            (LpOutcome::Infeasible, Some(_)) => ok = false,
        }
        checked += 1;
    }

    // 40 tabular programs with up to 6 variables vs exact vertex
    // enumeration over the constraint/box hyperplanes.
    for _ in 0..40 {
        let mut rng = factory.next_rng();
        let d = 4 + rng.random_range(0..3);
        let obs: Vec<ObsId> = (0..d as u32).map(ObsId).collect();
        let g = ValueClass::tabular(obs.clone());
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for _ in 0..rng.random_range(0..4) {
            let a: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.3).collect();
            let b = rng.random::<f64>() * 0.8;
            rows.push((a, b));
        }
        let c: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.3).collect();
        let problem = LpProblem {
            objective: LinFunctional {
                terms: obs.iter().zip(&c).map(|(&x, &w)| (x, w)).collect(),
            },
            direction: Direction::Maximize,
            constraints: rows
                .iter()
                .map(|(a, b)| LpConstraint {
                    functional: LinFunctional {
                        terms: obs.iter().zip(a).map(|(&x, &w)| (x, w)).collect(),
                    },
                    sense: LpSense::Le(*b),
                })
                .collect(),
            eps_sub: 0.0,
            eps_feas: 0.0,
        };
        let got = lp_oracle(&g, &problem, &budget).unwrap();
        let best = vertex_enumeration_max(&c, &rows);
        match (got, best) {
            (LpOutcome::Feasible { objective, .. }, Some(b)) => {
                ok &= (objective - b).abs() <= 1e-6
            }
            (LpOutcome::Infeasible, None) => {}
            _ => ok = false,
        }
        checked += 1;
    }

    // 150 multi-dataset instances vs feasibility enumeration.
    for _ in 0..150 {
        let mut rng = factory.next_rng();
        let num_obs = 1 + rng.random_range(0..12);
        let k = 2 + rng.random_range(0..3);
        let p_len = 1 + rng.random_range(0..60);
        let (obs, _, p) = random_explicit_classes(&mut rng, num_obs, k, 1, p_len);
        let m = 1 + rng.random_range(0..4);
        let datasets: Vec<CscDataset> = (0..m)
            .map(|_| {
                let mut d = CscDataset::new();
                for _ in 0..(1 + rng.random_range(0..60)) {
                    let x = obs[rng.random_range(0..obs.len())];
                    d.push(x, (0..k).map(|_| rng.random::<f64>()).collect());
                }
                d
            })
            .collect();
        let thresholds: Vec<f64> = (0..m).map(|_| 0.3 + rng.random::<f64>() * 0.4).collect();
        let problem = MultiCscProblem {
            datasets,
            thresholds,
            eps_feas: 0.0,
            mw: MwConfig::default(),
        };
        let got = multi_csc_oracle(&p, &problem, MultiBackend::Enumeration, &budget).unwrap();
        // independent scan: feasibility, best worst-case violation, and the
        // least total cost among the feasible policies
        let mut cheb = f64::INFINITY;
        let mut feas_total: Option<f64> = None;
        for id in 0..p_len {
            let mut worst = f64::NEG_INFINITY;
            let mut total = 0.0;
            for (d, &u) in problem.datasets.iter().zip(&problem.thresholds) {
                let avg = d.avg_cost(&p, &PolicyFn::Member(id)).unwrap();
                worst = worst.max(avg - u);
                total += avg;
            }
            cheb = cheb.min(worst);
            if worst <= 0.0 {
                feas_total = Some(feas_total.map(|t: f64| t.min(total)).unwrap_or(total));
            }
        }
        match got {
            MultiOutcome::Policy(pfn) => {
                let mut worst = f64::NEG_INFINITY;
                let mut total = 0.0;
                for (d, &u) in problem.datasets.iter().zip(&problem.thresholds) {
                    let avg = d.avg_cost(&p, &pfn).unwrap();
                    worst = worst.max(avg - u);
                    total += avg;
                }
                ok &= worst <= 1e-12;
                ok &= feas_total
                    .map(|t| (total - t).abs() <= 1e-12 * (1.0 + t.abs()))
                    .unwrap_or(false);
            }
            MultiOutcome::Infeasible { max_violation } => {
                ok &= feas_total.is_none() && (max_violation - cheb).abs() <= 1e-12;
            }
        }
        checked += 1;
    }

    let elapsed = started.elapsed().as_secs_f64();
    ok &= checked == 1000 && elapsed < 60.0;
    assert!(
        verdict(
            1,
            ok,
            &format!("oracle equivalence on {checked} instances in {elapsed:.1}s")
        ),
        "oracle equivalence failed"
    );
}

/// Exact maximum of `c.x` over `rows: a.x <= b`, `0 <= x <= 1` by
/// enumerating intersections of `d` active hyperplanes (constraints and
/// box faces) and checking feasibility.
fn vertex_enumeration_max(c: &[f64], rows: &[(Vec<f64>, f64)]) -> Option<f64> {
    let d = c.len();
    // hyperplanes: every constraint as equality, every box face
    let mut planes: Vec<(Vec<f64>, f64)> = rows.to_vec();
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        planes.push((e.clone(), 0.0));
        planes.push((e, 1.0));
    }
    let feasible = |x: &[f64]| -> bool {
        x.iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v))
            && rows
                .iter()
                .all(|(a, b)| a.iter().zip(x).map(|(ai, xi)| ai * xi).sum::<f64>() <= b + 1e-9)
    };
    let mut best: Option<f64> = None;
    let n = planes.len();
    let mut combo: Vec<usize> = (0..d).collect();
    loop {
        // solve the d x d system for this combination
        let mut a = vec![vec![0.0; d + 1]; d];
        for (i, &pi) in combo.iter().enumerate() {
            a[i][..d].copy_from_slice(&planes[pi].0);
            a[i][d] = planes[pi].1;
        }
        if let Some(x) = solve_dense(&mut a) {
            if feasible(&x) {
                let obj = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum::<f64>();
                best = Some(best.map(|b: f64| b.max(obj)).unwrap_or(obj));
            }
        }
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if combo[i] + 1 <= n - (d - i) {
                combo[i] += 1;
                for j in i + 1..d {
                    combo[j] = combo[j - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_dense(a: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let d = a.len();
    for col in 0..d {
        let pivot = (col..d).max_by(|&i, &j| {
            a[i][col]
                .abs()
                .partial_cmp(&a[j][col].abs())
                .expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        for row in 0..d {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..=d {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    Some((0..d).map(|i| a[i][d] / a[i][i]).collect())
}

// ---------------------------------------------------------------------
// Criteria 2-4: the local-value learner on the benchmark suite.
// ---------------------------------------------------------------------

#[test]
fn acceptance_02_pac_success_rate() {
    let started = std::time::Instant::now();
    let (unconstrained, constrained) = criterion2_runs();
    let su = unconstrained.iter().filter(|r| r.success).count();
    let sc = constrained.iter().filter(|r| r.success).count();
    let elapsed = started.elapsed().as_secs_f64();
    let ok = su * 10 >= 25 * 9 && sc * 10 >= 25 * 9 && elapsed < 600.0;
    assert!(
        verdict(
            2,
            ok,
            &format!(
                "success {su}/25 unconstrained, {sc}/25 constrained in {elapsed:.0}s (need >= 23 each)"
            )
        ),
        "pac success rate failed"
    );
}

#[test]
fn acceptance_03_oracle_budgets() {
    let (unconstrained, constrained) = criterion2_runs();
    let mut violations = 0usize;
    for run in unconstrained.iter().chain(constrained.iter()) {
        let p = &run.params;
        let t_max = (p.m_states * p.horizon * p.n_exp + p.m_states) as u64;
        let csc_bound = (t_max + p.m_states as u64) * p.horizon as u64;
        let lp_bound = 2 * t_max * p.horizon as u64 * p.num_actions as u64;
        if run.budget.csc_calls > csc_bound || run.budget.lp_calls > lp_bound {
            violations += 1;
        }
    }
    assert!(
        verdict(
            3,
            violations == 0,
            &format!("{violations} budget violations over 50 runs")
        ),
        "oracle budgets failed"
    );
}

#[test]
fn acceptance_04_consensus_soundness() {
    let suite = bench_suite();
    let mut clean = 0usize;
    for (i, case) in suite.iter().enumerate() {
        // The depth-first sampling sizes scale together to 20000; with the
        // learner's own estimates this accurate every case resolves in the
        // first round, so the stores reflect the identity test alone.
        let run = run_valor_case(case, false, 20_000, 20_000, 0xC4_0000 + i as u64);
        let m = case.spec.max_states_per_level();
        let mut ok = true;
        for level_states in &run.record_states {
            let mut sorted = level_states.clone();
            sorted.sort_unstable();
            sorted.dedup();
            // no hidden state may own two records, and the store stays
            // within the state budget
            ok &= sorted.len() == level_states.len() && level_states.len() <= m;
        }
        if ok {
            clean += 1;
        }
    }
    assert!(
        verdict(
            4,
            clean * 100 >= 25 * 95,
            &format!("{clean}/25 runs duplicate-free with stores within the state count")
        ),
        "consensus soundness failed"
    );
}

// ---------------------------------------------------------------------
// Criterion 5: the two-chain reproduction.
// ---------------------------------------------------------------------

#[test]
fn acceptance_05_backup_chain_failure_rates() {
    let started = std::time::Instant::now();
    let chain = build_backup_chain(6, 0.2).unwrap();
    let v_star = chain.spec.exact_values().v_star;
    let rate = |n: usize, tie: TieBreak, seed: u64| -> f64 {
        let factory = RngFactory::new(seed);
        let mut failures = 0u64;
        for t in 0..200 {
            let (stack, _) = bellman_backup(
                &chain.spec,
                &chain.g_class,
                &chain.pi_class,
                SampleMode::Samples(n),
                tie,
                &mut factory.stream(t),
            )
            .unwrap();
            let rule = StackRule {
                class: &chain.pi_class,
                stack: &stack,
            };
            if v_star - chain.spec.policy_value(&rule).unwrap() >= 0.2 - 1e-9 {
                failures += 1;
            }
        }
        failures as f64 / 200.0
    };
    // arm 1: n just under 4^6 / (32 * 0.2^2) = 3200 with adversarial ties
    let low = rate(3_199, TieBreak::HighestIndex, 0x05_0001);
    // arm 2: n = 10 * 4^6 with the same adversarial ties
    let high = rate(40_960, TieBreak::HighestIndex, 0x05_0002);
    let fair = rate(40_960, TieBreak::LowestIndex, 0x05_0003);
    let elapsed = started.elapsed().as_secs_f64();
    let ok = low >= 0.15 && high <= 0.05 && elapsed < 120.0;
    // The second arm cannot pass under adversarial tie breaking: the
    // failure event is exactly an upper-tail deviation of the terminal
    // reward mean, whose probability at n = 40960 is about 0.10, above the
    // 0.05 target (fair tie breaking recovers, printed for reference).
    assert!(
        verdict(
            5,
            ok,
            &format!(
                "failure rate {low:.3} at n=3199 (need >= 0.15), {high:.3} at n=40960 \
                 (need <= 0.05; fair ties give {fair:.3}) in {elapsed:.0}s"
            )
        ),
        "two-chain reproduction failed (see the printed rates; the large-n arm \
         is unattainable under adversarial tie breaking)"
    );
}

// ---------------------------------------------------------------------
// Criterion 6: rare-observation arithmetic.
// ---------------------------------------------------------------------

#[test]
fn acceptance_06_rare_reward_arithmetic() {
    let mut ok = true;
    for eps in [0.01, 0.04, 0.25] {
        let env = build_rare_reward_env(eps).unwrap();
        ok &= env.sqloss(0).unwrap().abs() <= 1e-12;
        ok &= (env.sqloss(1).unwrap() - eps).abs() <= 1e-12;
        ok &= (env.sqloss(2).unwrap() - eps).abs() <= 1e-12;
        ok &= (env.expected_gap().unwrap() - (eps.sqrt() - eps)).abs() <= 1e-12;
    }
    assert!(
        verdict(6, ok, "square losses 0 / eps / eps and gap sqrt(eps) - eps to 1e-12"),
        "rare-reward arithmetic failed"
    );
}

// ---------------------------------------------------------------------
// Criterion 7: needle stagnation.
// ---------------------------------------------------------------------

#[test]
fn acceptance_07_needle_stagnation() {
    let env = build_needle_env(8).unwrap();
    let report = needle_explorer(&env, 100).unwrap();
    let ok = report.suboptimality == 0.5 && report.new_distributions == 0 && report.stagnated;
    assert!(
        verdict(
            7,
            ok,
            &format!(
                "suboptimality {} with {} new exploration distributions over 100 iterations",
                report.suboptimality, report.new_distributions
            )
        ),
        "needle stagnation failed"
    );
}

// ---------------------------------------------------------------------
// Criterion 8: the 3-SAT reduction substrate.
// ---------------------------------------------------------------------

/// Independent truth-table satisfiability oracle.
fn truth_table_sat(f: &SatFormula) -> bool {
    (0u64..(1 << f.num_vars)).any(|mask| {
        let assignment: Vec<bool> = (0..f.num_vars).map(|i| (mask >> i) & 1 == 1).collect();
        f.satisfied_by(&assignment)
    })
}

fn random_formula(rng: &mut ChaCha12Rng) -> SatFormula {
    let num_vars = 1 + rng.random_range(0..4);
    let num_clauses = 1 + rng.random_range(0..5);
    let clauses = (0..num_clauses)
        .map(|_| {
            [0; 3].map(|_| Lit {
                var: rng.random_range(0..num_vars),
                negated: rng.random::<f64>() < 0.5,
            })
        })
        .collect();
    SatFormula::new(num_vars, clauses).unwrap()
}

#[test]
fn acceptance_08_sat_reduction() {
    let started = std::time::Instant::now();
    let factory = RngFactory::new(0x5A7);
    let mut ok = true;
    for _ in 0..50 {
        let f = random_formula(&mut factory.next_rng());
        ok &= sat_decision_via_olive(&f, 1 << 20).unwrap() == truth_table_sat(&f);
        // the adversarial run must generate exactly the constraint family
        let rounds = adversarial_olive_trace(&f).unwrap();
        let mut accumulated = std::collections::BTreeSet::new();
        for r in &rounds {
            accumulated.extend(r.constraints.iter().copied());
        }
        ok &= accumulated == olive_sat_constraints(&f);
        ok &= rounds.len() == f.num_vars + f.num_clauses() + 1;
        ok &= rounds[..f.num_clauses()].iter().all(|r| {
            r.level == 2
                && r.constraints
                    .iter()
                    .all(|c| matches!(c, SatConstraint::Clause { .. }))
        });
        ok &= rounds.last().unwrap().level == 1;
    }
    // hand-picked instances
    let lit = |v: i64| Lit {
        var: (v.unsigned_abs() as usize) - 1,
        negated: v < 0,
    };
    let sat = SatFormula::new(3, vec![[lit(1), lit(2), lit(3)]]).unwrap();
    let unsat = SatFormula::new(1, vec![[lit(1); 3], [lit(-1); 3]]).unwrap();
    ok &= sat_decision_via_olive(&sat, 1 << 20).unwrap();
    ok &= !sat_decision_via_olive(&unsat, 1 << 20).unwrap();
    let elapsed = started.elapsed().as_secs_f64();
    ok &= elapsed < 60.0;
    assert!(
        verdict(
            8,
            ok,
            &format!("50 random formulas plus fixed instances agree with the truth table in {elapsed:.1}s")
        ),
        "sat reduction failed"
    );
}

// ---------------------------------------------------------------------
// Criterion 9: alternative learners on the benchmark suite.
// ---------------------------------------------------------------------

#[test]
fn acceptance_09_alternative_learners() {
    let suite = bench_suite();
    let mut mmd_ok = 0usize;
    let mut global_ok = 0usize;
    let mut budget_ok = true;
    for (i, case) in suite.iter().enumerate() {
        // two-sample learner with classes closed under backups
        {
            let rngs = RngFactory::new(0x33D0 + i as u64);
            let (g, p, _) = close_classes(&case.spec, &case.g, &case.p, 10_000).unwrap();
            let exact = &case.exact;
            let params = MmdParams::practical(
                0.1,
                case.spec.max_states_per_level(),
                case.spec.num_actions,
                case.spec.horizon,
                2_000,
                20,
                3_000,
                0.05,
            );
            let budget = OracleBudget::new();
            if let Ok(mut learner) = MmdLearner::new(&case.spec, &g, &p, &params, &budget, &rngs) {
                if let Ok(out) = meta_loop(
                    &case.spec,
                    &p,
                    &mut learner,
                    params.eps,
                    params.n_eval,
                    params.n_exp,
                    case.spec.max_states_per_level() * case.spec.horizon,
                    &budget,
                    &rngs,
                ) {
                    if out.success {
                        if let Some(stack) = out.policy {
                            let rule = StackRule {
                                class: &p,
                                stack: &stack,
                            };
                            if exact.v_star - case.spec.policy_value(&rule).unwrap()
                                <= params.eps
                            {
                                mmd_ok += 1;
                            }
                        }
                    }
                }
            }
        }
        // global-policy learner with tabular classes
        {
            let rngs = RngFactory::new(0x61_0B41 + i as u64);
            let obs: Vec<ObsId> = case.spec.all_observations().collect();
            let g = ValueClass::tabular(obs.clone());
            let p = PolicyClass::tabular(obs, case.spec.num_actions);
            let params = GlobalParams::practical(
                0.1,
                case.spec.max_states_per_level(),
                case.spec.num_actions,
                case.spec.horizon,
                6_000,
                6_000,
                0.014,
                0.014,
            );
            let budget = OracleBudget::new();
            let mut learner =
                GlobalLearner::new(&case.spec, &g, &p, &params, &budget, &rngs).unwrap();
            if let Ok(stack) = learner.run() {
                let rule = StackRule {
                    class: &p,
                    stack: &stack,
                };
                if case.exact.v_star - case.spec.policy_value(&rule).unwrap() <= params.eps {
                    global_ok += 1;
                }
            }
            // trajectory accounting bound with t_max = 3 M^2 H K
            let m = case.spec.max_states_per_level() as u64;
            let bound = (1 + m) * params.t_max as u64 * params.n_test as u64
                + m * m * case.spec.horizon as u64 * params.n_train as u64;
            budget_ok &= budget.snapshot().trajectories <= bound;
        }
    }
    let ok = mmd_ok * 100 >= 25 * 85 && global_ok * 100 >= 25 * 85 && budget_ok;
    assert!(
        verdict(
            9,
            ok,
            &format!(
                "two-sample {mmd_ok}/25, global {global_ok}/25 (need >= 22), trajectory bound {}",
                if budget_ok { "held" } else { "violated" }
            )
        ),
        "alternative learners failed"
    );
}

// ---------------------------------------------------------------------
// Criterion 10: the joint eliminator on stochastic tabular processes.
// ---------------------------------------------------------------------

#[test]
fn acceptance_10_eliminator_on_stochastic_tabular() {
    let root = RngFactory::new(0x0711E);
    let mut successes = 0usize;
    for i in 0..10u64 {
        let f = root.derive(i);
        let spec = builders::random_stochastic_tabular(
            2 + (i % 2) as usize, // H in {2, 3}
            2 + (i % 2) as usize, // up to 3 states per level, |X| <= 8 total
            2,
            0.9,
            &mut f.next_rng(),
        )
        .unwrap();
        assert!(spec.observations.len() <= 8);
        let obs: Vec<ObsId> = spec.all_observations().collect();
        let g = ValueClass::tabular(obs.clone());
        let p = PolicyClass::tabular(obs, spec.num_actions);
        let cfg = OliveConfig {
            phi: 1e-7,
            eps: 0.15,
            n_per_round: 0,
            mode: EvalMode::Exact,
            round_cap: 200,
        };
        let budget = OracleBudget::new();
        let report = olive_run(&spec, &g, &p, &cfg, &budget, &f).unwrap();
        if report.success {
            if let Some(pfn) = report.policy {
                let rule = |_: usize, x: ObsId| p.act(&pfn, x).ok();
                let sub = spec.exact_values().v_star - spec.policy_value(&rule).unwrap();
                if sub <= cfg.eps {
                    successes += 1;
                }
            }
        }
    }
    assert!(
        verdict(
            10,
            successes >= 9,
            &format!("{successes}/10 stochastic tabular runs within 0.15 of optimal")
        ),
        "eliminator on stochastic tabular processes failed"
    );
}
