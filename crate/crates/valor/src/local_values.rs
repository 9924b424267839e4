//! The local-value learning algorithm.
//!
//! Hidden states of a deterministic-dynamics process are reached by action
//! sequences (paths). A depth-first search learns, for each visited path, a
//! dataset of uniform-action transitions together with a scalar estimate of
//! the state's optimal value and estimates for its successors. Before
//! descending to a child, a consensus state-identity test asks the linear
//! program oracle for the most optimistic and most pessimistic values of
//! the child consistent with every stored dataset; if the two agree, the
//! child's value is already known and the search does not descend.
//!
//! Policy fitting pools the stored datasets per level, either maximizing
//! the summed importance-weighted objective with one classification-oracle
//! call per level, or solving a per-dataset feasibility program with the
//! multi-dataset oracle. An outer loop deploys the fitted policy, checks
//! its estimated return against the stored optimal value estimate, and
//! re-runs the depth-first search along prefixes of the deployed
//! trajectories when the check fails (exploration on demand).

use serde::{Deserialize, Serialize};

use crate::cdp::{Action, CdpSpec, LevelSample, Tail};
use crate::classes::{PolicyClass, PolicyFn, PolicyStack, StackRule, ValueClass};
use crate::error::{Error, Result};
use crate::oracles::{
    csc_oracle, lp_oracle, multi_csc_oracle, CscDataset, Direction, LinFunctional, LpConstraint,
    LpOutcome, LpProblem, LpSense, MultiBackend, MultiCscProblem, MultiOutcome, MwConfig,
    OracleBudget,
};
use crate::rng::RngFactory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamMode {
    Theoretical,
    Practical,
}

/// Run parameters: sample counts, oracle slacks, and the per-level value
/// tolerance derived from them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValorParams {
    pub eps: f64,
    pub delta: f64,
    pub m_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub n_test: usize,
    pub n_train: usize,
    pub n_exp: usize,
    pub n_eval: usize,
    pub eps_stat: f64,
    pub eps_sub: f64,
    pub eps_feas: f64,
    pub t_max: usize,
    pub mode: ParamMode,
}

const COUNT_CAP: f64 = 1e18;

fn to_count(v: f64, what: &str) -> Result<usize> {
    let c = v.ceil();
    if !c.is_finite() || c > COUNT_CAP {
        return Err(Error::ParamsOverflow(format!("{what} = {v:.3e}")));
    }
    Ok(c.max(1.0) as usize)
}

impl ValorParams {
    /// Full theoretical parameterization from the accuracy targets.
    ///
    /// The sample counts are astronomically large for any nontrivial
    /// accuracy; they exist to document the guarantee, not to be run.
    pub fn theoretical(
        eps: f64,
        delta: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        g_size: usize,
        pi_size: usize,
    ) -> Result<ValorParams> {
        if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) || eps == 0.0 || delta == 0.0
        {
            return Err(Error::Config("need eps, delta in (0, 1)".into()));
        }
        let (m, k, h) = (m_states as f64, num_actions as f64, horizon as f64);
        let n_exp = to_count(8.0 * (4.0 * m * h / delta).ln() / eps, "n_exp")?;
        let t_max = to_count(m * h * n_exp as f64 + m, "t_max")?;
        let eps_stat = eps / (64.0 * 7.0 * h * h * t_max as f64);
        let n_test = to_count(
            (12.0 * k * h * t_max as f64 * g_size as f64 / delta).ln()
                / (2.0 * eps_stat * eps_stat),
            "n_test",
        )?;
        let n_train = to_count(
            16.0 * k * (12.0 * h * t_max as f64 * g_size as f64 * pi_size as f64 / delta).ln()
                / (eps_stat * eps_stat),
            "n_train",
        )?;
        let n_eval = to_count(32.0 * (8.0 * m * h / delta).ln() / (eps * eps), "n_eval")?;
        Ok(ValorParams {
            eps,
            delta,
            m_states,
            num_actions,
            horizon,
            n_test,
            n_train,
            n_exp,
            n_eval,
            eps_stat,
            eps_sub: eps_stat,
            eps_feas: eps_stat,
            t_max,
            mode: ParamMode::Theoretical,
        })
    }

    /// Practical parameterization: user-supplied counts and slacks. The
    /// per-level tolerance is still computed by the same formula from the
    /// supplied slacks.
    #[allow(clippy::too_many_arguments)]
    pub fn practical(
        eps: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        n_test: usize,
        n_train: usize,
        n_exp: usize,
        n_eval: usize,
        eps_stat: f64,
        eps_sub: f64,
        eps_feas: f64,
    ) -> ValorParams {
        let t_max = m_states * horizon * n_exp + m_states;
        ValorParams {
            eps,
            delta: 0.0,
            m_states,
            num_actions,
            horizon,
            n_test,
            n_train,
            n_exp,
            n_eval,
            eps_stat,
            eps_sub,
            eps_feas,
            t_max,
            mode: ParamMode::Practical,
        }
    }

    /// Accuracy of learned values at `level`:
    /// `(H + 1 - level) * (6 eps_stat + 2 eps_sub + eps_feas)`.
    pub fn phi(&self, level: usize) -> f64 {
        let steps = (self.horizon + 1).saturating_sub(level) as f64;
        steps * (6.0 * self.eps_stat + 2.0 * self.eps_sub + self.eps_feas)
    }

    /// Agreement margin of the identity test for children at `level`.
    pub fn consensus_threshold(&self, level: usize) -> f64 {
        2.0 * self.phi(level) + 4.0 * self.eps_stat + 2.0 * self.eps_feas
    }

    pub fn max_iterations(&self) -> usize {
        self.m_states * self.horizon
    }
}

/// A stored dataset: uniform-action transition samples from one path, the
/// local value estimate, and the successor value estimates.
#[derive(Debug, Clone)]
pub struct DatasetRecord {
    pub samples: Vec<LevelSample>,
    /// Cached empirical-mean functional over the samples' own-level
    /// observations.
    pub freq: LinFunctional,
    /// Scalar estimate of the state's optimal value.
    pub v: f64,
    /// Estimates of the successor optimal values, one per action.
    pub succ_values: Vec<f64>,
    /// The path this dataset was sampled from. Diagnostics only; the
    /// algorithm never reads it.
    pub source_path: Vec<Action>,
}

/// Per-level dataset stores plus diagnostics.
#[derive(Debug, Default)]
pub struct ValorState {
    /// `stores[h - 1]` holds the records of level `h`.
    pub stores: Vec<Vec<DatasetRecord>>,
    /// Identity tests decided by an infeasible program (counted as
    /// consensus).
    pub lp_infeasible_consensus: u64,
    /// Depth-first calls per level.
    pub dfs_calls: Vec<u64>,
}

impl ValorState {
    pub fn new(horizon: usize) -> Self {
        ValorState {
            stores: vec![Vec::new(); horizon],
            lp_infeasible_consensus: 0,
            dfs_calls: vec![0; horizon],
        }
    }

    pub fn store_sizes(&self) -> Vec<usize> {
        self.stores.iter().map(Vec::len).collect()
    }

    pub fn records_at(&self, level: usize) -> &[DatasetRecord] {
        self.stores
            .get(level - 1)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Empirical importance-weighted value of a policy on a sample set:
/// the mean of `K * 1{policy(x) = a} * (r + succ[a])`.
pub fn v_d(
    samples: &[LevelSample],
    num_actions: usize,
    class: &PolicyClass,
    policy: &PolicyFn,
    succ_values: &[f64],
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = num_actions as f64;
    let mut total = 0.0;
    for s in samples {
        if class.act(policy, s.x)? == s.a {
            total += k * (s.r + succ_values[s.a]);
        }
    }
    Ok(total / samples.len() as f64)
}

/// Value of the stored record whose observation frequencies are nearest in
/// total variation to the given empirical distribution.
fn closest_record_value(records: &[DatasetRecord], fresh: &LinFunctional) -> Option<f64> {
    let tv = |a: &LinFunctional, b: &LinFunctional| -> f64 {
        let mut diff: std::collections::BTreeMap<crate::cdp::ObsId, f64> = Default::default();
        for &(x, c) in &a.terms {
            *diff.entry(x).or_insert(0.0) += c;
        }
        for &(x, c) in &b.terms {
            *diff.entry(x).or_insert(0.0) -= c;
        }
        diff.values().map(|c| c.abs()).sum::<f64>() / 2.0
    };
    records
        .iter()
        .map(|r| (tv(&r.freq, fresh), r.v))
        .min_by(|a, b| a.0.partial_cmp(&b.0).expect("finite"))
        .map(|(_, v)| v)
}

/// The classification dataset whose average cost is `-V_D(policy)`.
fn csc_rows(samples: &[LevelSample], num_actions: usize, succ_values: &[f64]) -> CscDataset {
    let k = num_actions as f64;
    let mut d = CscDataset::new();
    for s in samples {
        let mut costs = vec![0.0; num_actions];
        costs[s.a] = -k * (s.r + succ_values[s.a]);
        d.push(s.x, costs);
    }
    d
}

/// One run of the local-value learner over a fixed environment and classes.
pub struct Valor<'a> {
    pub spec: &'a CdpSpec,
    pub g_class: &'a ValueClass,
    pub pi_class: &'a PolicyClass,
    pub params: &'a ValorParams,
    pub budget: &'a OracleBudget,
    pub rngs: &'a RngFactory,
    pub state: ValorState,
    /// Which policy-fitting variant `polvalfun` uses.
    pub constrained: bool,
    pub multi_backend: MultiBackend,
}

impl<'a> Valor<'a> {
    pub fn new(
        spec: &'a CdpSpec,
        g_class: &'a ValueClass,
        pi_class: &'a PolicyClass,
        params: &'a ValorParams,
        budget: &'a OracleBudget,
        rngs: &'a RngFactory,
    ) -> Result<Self> {
        if !spec.is_deterministic() {
            return Err(Error::StochasticPath);
        }
        Ok(Valor {
            spec,
            g_class,
            pi_class,
            params,
            budget,
            rngs,
            state: ValorState::new(spec.horizon),
            constrained: false,
            multi_backend: MultiBackend::Auto,
        })
    }

    /// Depth-first learning of local values along `path`.
    ///
    /// For each action, draws test samples of the child observation,
    /// computes optimistic and pessimistic child values with the linear
    /// program oracle under the stored-value constraints, descends only
    /// without consensus, then learns this path's own value with one
    /// classification-oracle call on fresh uniform-action samples.
    pub fn dfslearn(&mut self, path: &[Action]) -> Result<f64> {
        let h = path.len() + 1;
        if h > self.spec.horizon {
            return Err(Error::PathTooLong {
                len: path.len(),
                horizon: self.spec.horizon,
            });
        }
        self.state.dfs_calls[h - 1] += 1;
        let k = self.spec.num_actions;
        let p = self.params;
        let mut succ_values = vec![0.0; k];
        for (a, slot) in succ_values.iter_mut().enumerate() {
            let d_test = self.spec.sample_from_path(
                path,
                Tail::Fixed(a),
                p.n_test,
                &mut self.rngs.next_rng(),
            )?;
            self.budget.add_trajectories(p.n_test);
            let objective = LinFunctional::empirical_mean(d_test.iter().filter_map(|s| s.x_next));
            let constraints: Vec<LpConstraint> = self
                .state
                .records_at(h + 1)
                .iter()
                .map(|rec| LpConstraint {
                    functional: rec.freq.clone(),
                    sense: LpSense::Interval(rec.v - p.phi(h + 1), rec.v + p.phi(h + 1)),
                })
                .collect();
            let problem = LpProblem {
                objective,
                direction: Direction::Maximize,
                constraints,
                eps_sub: p.eps_sub,
                eps_feas: p.eps_feas,
            };
            let child_class = if h + 1 <= self.spec.horizon {
                self.g_class
            } else {
                &ValueClass::ConstZero
            };
            let v_opt = lp_oracle(child_class, &problem, self.budget)?;
            let v_pes = lp_oracle(
                child_class,
                &LpProblem {
                    direction: Direction::Minimize,
                    ..problem
                },
                self.budget,
            )?;
            *slot = match (v_opt, v_pes) {
                (
                    LpOutcome::Feasible { objective: vo, .. },
                    LpOutcome::Feasible { objective: vp, .. },
                ) => {
                    if (vo - vp).abs() <= p.consensus_threshold(h + 1) {
                        (vo + vp) / 2.0
                    } else {
                        let mut child = path.to_vec();
                        child.push(a);
                        self.dfslearn(&child)?
                    }
                }
                _ => {
                    // No function satisfies the constraints at all; the
                    // agreement condition is trivially satisfied. The child
                    // is then treated as known, valued by the stored record
                    // whose observation distribution is closest to the
                    // fresh sample.
                    self.state.lp_infeasible_consensus += 1;
                    let fresh = LinFunctional::empirical_mean(
                        d_test.iter().filter_map(|s| s.x_next),
                    );
                    closest_record_value(self.state.records_at(h + 1), &fresh).unwrap_or(0.0)
                }
            };
        }

        let d_train = self.spec.sample_from_path(
            path,
            Tail::Uniform,
            p.n_train,
            &mut self.rngs.next_rng(),
        )?;
        self.budget.add_trajectories(p.n_train);
        let csc = csc_rows(&d_train, k, &succ_values);
        let policy = csc_oracle(self.pi_class, &csc, p.eps_sub, self.budget)?;
        let v_tilde = v_d(&d_train, k, self.pi_class, &policy, &succ_values)?;

        if self.state.stores[h - 1].len() >= p.t_max {
            return Err(Error::BudgetExceeded(format!(
                "level {h} store reached t_max = {}",
                p.t_max
            )));
        }
        let freq = LinFunctional::empirical_mean(d_train.iter().map(|s| s.x));
        self.state.stores[h - 1].push(DatasetRecord {
            samples: d_train,
            freq,
            v: v_tilde,
            succ_values,
            source_path: path.to_vec(),
        });
        Ok(v_tilde)
    }

    fn v_hat_star(&self) -> Result<f64> {
        let roots = self.state.records_at(1);
        if roots.len() != 1 {
            return Err(Error::Internal(format!(
                "expected exactly one level-1 record, found {}",
                roots.len()
            )));
        }
        Ok(roots[0].v)
    }

    /// Unconstrained policy fit: per level, one classification-oracle call
    /// maximizing the sum of the per-record importance-weighted objectives.
    pub fn polvalfun_unconstrained(&self) -> Result<(PolicyStack, f64)> {
        let v_hat = self.v_hat_star()?;
        let mut per_level = Vec::with_capacity(self.spec.horizon);
        for h in 1..=self.spec.horizon {
            let records = self.state.records_at(h);
            if records.is_empty() {
                return Err(Error::EmptyStore { level: h });
            }
            let mut pooled = CscDataset::new();
            for rec in records {
                // Weight rows by 1/n so each record contributes its average.
                let w = 1.0 / rec.samples.len() as f64;
                let k = self.spec.num_actions as f64;
                for s in &rec.samples {
                    let mut costs = vec![0.0; self.spec.num_actions];
                    costs[s.a] = -k * (s.r + rec.succ_values[s.a]);
                    pooled.push_weighted(s.x, costs, w);
                }
            }
            per_level.push(csc_oracle(
                self.pi_class,
                &pooled,
                self.params.eps_sub,
                self.budget,
            )?);
        }
        Ok((PolicyStack { per_level }, v_hat))
    }

    /// Constrained policy fit: per level, one multi-dataset oracle call
    /// requiring the policy to come close to every record's stored value.
    pub fn polvalfun_constrained(&self) -> Result<(PolicyStack, f64)> {
        let v_hat = self.v_hat_star()?;
        let p = self.params;
        let mut per_level = Vec::with_capacity(self.spec.horizon);
        for h in 1..=self.spec.horizon {
            let records = self.state.records_at(h);
            if records.is_empty() {
                return Err(Error::EmptyStore { level: h });
            }
            let mut datasets = Vec::with_capacity(records.len());
            let mut thresholds = Vec::with_capacity(records.len());
            for rec in records {
                datasets.push(csc_rows(
                    &rec.samples,
                    self.spec.num_actions,
                    &rec.succ_values,
                ));
                // Value floor V - 2 phi_h + 4 eps_stat + eps_sub, negated
                // into the cost-threshold form.
                thresholds.push(-(rec.v - 2.0 * p.phi(h) + 4.0 * p.eps_stat + p.eps_sub));
            }
            let problem = MultiCscProblem {
                datasets,
                thresholds,
                eps_feas: p.eps_feas,
                mw: MwConfig::default(),
            };
            match multi_csc_oracle(self.pi_class, &problem, self.multi_backend, self.budget)? {
                MultiOutcome::Policy(pol) => per_level.push(pol),
                MultiOutcome::Infeasible { max_violation } => {
                    return Err(Error::Infeasible(format!(
                        "constrained policy fit at level {h}: {} records, worst violation {max_violation:.6}",
                        records.len()
                    )))
                }
            }
        }
        Ok((PolicyStack { per_level }, v_hat))
    }
}

/// One row of per-iteration metrics from the outer loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRow {
    pub iteration: usize,
    pub v_hat: f64,
    pub v_hat_policy: f64,
    pub store_sizes: Vec<usize>,
    pub budget: crate::oracles::BudgetSnapshot,
}

/// Outcome of the exploration-on-demand loop.
#[derive(Debug, Clone)]
pub struct MetaOutcome {
    pub policy: Option<PolicyStack>,
    pub success: bool,
    pub iterations: usize,
    pub v_hat: f64,
    pub v_hat_policy: f64,
    pub iter_rows: Vec<IterRow>,
}

/// A learner the meta loop can drive; the local-value learner and the
/// two-sample-test learner both implement this.
pub trait MetaLearner {
    fn dfs_root(&mut self) -> Result<()>;
    fn dfs_path(&mut self, path: &[Action]) -> Result<()>;
    fn polvalfun(&mut self) -> Result<(PolicyStack, f64)>;
    fn store_sizes(&self) -> Vec<usize>;
}

impl MetaLearner for Valor<'_> {
    fn dfs_root(&mut self) -> Result<()> {
        self.dfslearn(&[]).map(|_| ())
    }

    fn dfs_path(&mut self, path: &[Action]) -> Result<()> {
        self.dfslearn(path).map(|_| ())
    }

    fn polvalfun(&mut self) -> Result<(PolicyStack, f64)> {
        if self.constrained {
            self.polvalfun_constrained()
        } else {
            self.polvalfun_unconstrained()
        }
    }

    fn store_sizes(&self) -> Vec<usize> {
        self.state.store_sizes()
    }
}

/// Exploration on demand: learn from the root, then repeatedly fit a
/// policy, deploy it, stop when the estimated optimal value is achieved up
/// to `eps / 2`, and otherwise re-learn along prefixes of the first
/// `n_exp` deployed trajectories.
#[allow(clippy::too_many_arguments)]
pub fn meta_loop<L: MetaLearner>(
    spec: &CdpSpec,
    pi_class: &PolicyClass,
    learner: &mut L,
    eps: f64,
    n_eval: usize,
    n_exp: usize,
    max_iterations: usize,
    budget: &OracleBudget,
    rngs: &RngFactory,
) -> Result<MetaOutcome> {
    learner.dfs_root()?;
    let mut iter_rows = Vec::new();
    let mut last = (f64::NAN, f64::NAN);
    for k in 1..=max_iterations {
        let (stack, v_hat) = learner.polvalfun()?;
        let mut rng = rngs.next_rng();
        let mut trajectories = Vec::with_capacity(n_eval);
        {
            let rule = StackRule {
                class: pi_class,
                stack: &stack,
            };
            for _ in 0..n_eval {
                trajectories.push(spec.sample_episode(&rule, &mut rng)?);
            }
        }
        budget.add_trajectories(n_eval);
        let v_hat_policy =
            trajectories.iter().map(|t| t.total_reward()).sum::<f64>() / n_eval.max(1) as f64;
        iter_rows.push(IterRow {
            iteration: k,
            v_hat,
            v_hat_policy,
            store_sizes: learner.store_sizes(),
            budget: budget.snapshot(),
        });
        last = (v_hat, v_hat_policy);
        if v_hat <= v_hat_policy + eps / 2.0 {
            return Ok(MetaOutcome {
                policy: Some(stack),
                success: true,
                iterations: k,
                v_hat,
                v_hat_policy,
                iter_rows,
            });
        }
        for h in 1..spec.horizon {
            for t in trajectories.iter().take(n_exp) {
                let prefix: Vec<Action> = t.actions()[..h].to_vec();
                learner.dfs_path(&prefix)?;
            }
        }
    }
    Ok(MetaOutcome {
        policy: None,
        success: false,
        iterations: max_iterations,
        v_hat: last.0,
        v_hat_policy: last.1,
        iter_rows,
    })
}

/// Convenience wrapper running the full local-value algorithm.
#[allow(clippy::too_many_arguments)]
pub fn metaalg(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    params: &ValorParams,
    constrained: bool,
    multi_backend: MultiBackend,
    budget: &OracleBudget,
    rngs: &RngFactory,
) -> Result<(MetaOutcome, ValorState)> {
    let mut learner = Valor::new(spec, g_class, pi_class, params, budget, rngs)?;
    learner.constrained = constrained;
    learner.multi_backend = multi_backend;
    let outcome = meta_loop(
        spec,
        pi_class,
        &mut learner,
        params.eps,
        params.n_eval,
        params.n_exp,
        params.max_iterations(),
        budget,
        rngs,
    )?;
    Ok((outcome, learner.state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdp::builders;
    use crate::cdp::ObsId;
    use crate::classes::synthesize_classes;

    #[test]
    fn theoretical_params_match_formulas() {
        let p = ValorParams::theoretical(0.1, 0.1, 2, 2, 2, 16, 16).unwrap();
        // n_exp = ceil((8 / 0.1) * ln(4 * 2 * 2 / 0.1)) = ceil(80 ln 160) = 407
        assert_eq!(p.n_exp, 407);
        assert_eq!(p.t_max, 2 * 2 * 407 + 2);
        let expected = 0.1 / (64.0 * 7.0 * 4.0 * p.t_max as f64);
        assert!((p.eps_stat - expected).abs() < 1e-18);
        // with equal slacks, phi at the last level is 9 eps_stat
        assert!((p.phi(p.horizon) - 9.0 * p.eps_stat).abs() < 1e-15);
    }

    #[test]
    fn theoretical_params_overflow_is_reported() {
        let err = ValorParams::theoretical(1e-6, 1e-6, 10, 10, 10, 1000, 1000).unwrap_err();
        assert!(matches!(err, Error::ParamsOverflow(_)));
    }

    #[test]
    fn v_d_single_sample_examples() {
        let class = PolicyClass::tabular(vec![ObsId(0)], 2);
        let samples = vec![LevelSample {
            x: ObsId(0),
            a: 0,
            r: 1.0,
            x_next: None,
            ret: 1.0,
            hidden: crate::cdp::StateId(0),
        }];
        let mut to0 = std::collections::BTreeMap::new();
        to0.insert(ObsId(0), 0usize);
        let p0 = PolicyFn::Assignment(to0);
        let v = v_d(&samples, 2, &class, &p0, &[0.5, 0.5]).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let mut to1 = std::collections::BTreeMap::new();
        to1.insert(ObsId(0), 1usize);
        let p1 = PolicyFn::Assignment(to1);
        let v = v_d(&samples, 2, &class, &p1, &[0.5, 0.5]).unwrap();
        assert_eq!(v, 0.0);
    }

    fn practical_params(spec: &CdpSpec, n: usize) -> ValorParams {
        ValorParams::practical(
            0.1,
            spec.max_states_per_level(),
            spec.num_actions,
            spec.horizon,
            n,
            n,
            20,
            3_000,
            0.012,
            0.0,
            0.0,
        )
    }

    #[test]
    fn one_level_dfs_learns_best_reward() {
        // horizon 1: successor values are pinned to zero by the singleton
        // class, and the learned value approximates the best mean reward.
        let spec = builders::rare_reward(0.25).unwrap();
        let rngs = RngFactory::new(17);
        let (g, p) = synthesize_classes(&spec, 7, &mut rngs.next_rng());
        let params = practical_params(&spec, 4_000);
        let budget = OracleBudget::new();
        let mut learner = Valor::new(&spec, &g, &p, &params, &budget, &rngs).unwrap();
        let v = learner.dfslearn(&[]).unwrap();
        let exact = spec.exact_values().v_star;
        assert!((v - exact).abs() < 0.05, "learned {v:.4}, exact {exact:.4}");
        assert_eq!(learner.state.store_sizes(), vec![1]);
        // every successor estimate is exactly zero at the last level
        assert!(learner.state.stores[0][0]
            .succ_values
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn second_path_to_same_state_hits_consensus() {
        // Two-level process where both actions from the root lead to the
        // same hidden state: the second child test must agree and not
        // descend, leaving exactly one record at level 2.
        let spec = {
            use crate::cdp::{Categorical, CdpSpec, ObsSpec, RewardDist, StateSpec};
            CdpSpec {
                format_version: crate::cdp::SPEC_FORMAT_VERSION,
                name: None,
                horizon: 2,
                num_actions: 2,
                initial: Categorical::point(0),
                states: vec![
                    StateSpec {
                        level: 1,
                        emission: Categorical::uniform(&[0, 1]),
                        transitions: vec![Categorical::point(1), Categorical::point(1)],
                    },
                    StateSpec {
                        level: 2,
                        emission: Categorical::uniform(&[2, 3]),
                        transitions: vec![],
                    },
                ],
                observations: vec![
                    ObsSpec {
                        level: 1,
                        state: crate::cdp::StateId(0),
                        rewards: vec![RewardDist::bernoulli(0.1), RewardDist::bernoulli(0.2)],
                    },
                    ObsSpec {
                        level: 1,
                        state: crate::cdp::StateId(0),
                        rewards: vec![RewardDist::bernoulli(0.2), RewardDist::bernoulli(0.1)],
                    },
                    ObsSpec {
                        level: 2,
                        state: crate::cdp::StateId(1),
                        rewards: vec![RewardDist::bernoulli(0.5), RewardDist::bernoulli(0.1)],
                    },
                    ObsSpec {
                        level: 2,
                        state: crate::cdp::StateId(1),
                        rewards: vec![RewardDist::bernoulli(0.3), RewardDist::bernoulli(0.4)],
                    },
                ],
            }
        };
        spec.validate().unwrap();
        let rngs = RngFactory::new(5);
        let (g, p) = synthesize_classes(&spec, 15, &mut rngs.next_rng());
        let params = practical_params(&spec, 5_000);
        let budget = OracleBudget::new();
        let mut learner = Valor::new(&spec, &g, &p, &params, &budget, &rngs).unwrap();
        learner.dfslearn(&[]).unwrap();
        assert_eq!(learner.state.dfs_calls, vec![1, 1]);
        assert_eq!(learner.state.store_sizes(), vec![1, 1]);
    }

    #[test]
    fn root_dfs_value_tracks_exact_optimum() {
        let rngs = RngFactory::new(23);
        let spec = builders::random_deterministic(
            &builders::RandomCdpParams {
                horizon: 2,
                num_actions: 2,
                states_per_level: 2,
                obs_per_level: 6,
                reward_scale: 0.9,
            },
            &mut rngs.next_rng(),
        )
        .unwrap();
        let (g, p) = synthesize_classes(&spec, 31, &mut rngs.next_rng());
        let params = practical_params(&spec, 5_000);
        let mut ok = 0;
        for t in 0..10 {
            let budget = OracleBudget::new();
            let trial = rngs.derive(t);
            let mut learner = Valor::new(&spec, &g, &p, &params, &budget, &trial).unwrap();
            let v = learner.dfslearn(&[]).unwrap();
            if (v - spec.exact_values().v_star).abs() <= 0.05 {
                ok += 1;
            }
        }
        assert!(ok >= 9, "only {ok}/10 root values within 0.05");
    }

    #[test]
    fn polvalfun_unconstrained_pools_records() {
        let rngs = RngFactory::new(77);
        let spec = builders::random_deterministic(
            &builders::RandomCdpParams {
                horizon: 2,
                num_actions: 2,
                states_per_level: 2,
                obs_per_level: 6,
                reward_scale: 0.9,
            },
            &mut rngs.next_rng(),
        )
        .unwrap();
        let (g, p) = synthesize_classes(&spec, 31, &mut rngs.next_rng());
        let params = practical_params(&spec, 3_000);
        let budget = OracleBudget::new();
        let mut learner = Valor::new(&spec, &g, &p, &params, &budget, &rngs).unwrap();
        learner.dfslearn(&[]).unwrap();
        let (stack, v_hat) = learner.polvalfun_unconstrained().unwrap();
        // the estimate equals the stored root value verbatim
        assert_eq!(v_hat, learner.state.stores[0][0].v);
        assert_eq!(stack.per_level.len(), spec.horizon);
        // and the fitted policy is near optimal on this easy instance
        let rule = StackRule {
            class: &p,
            stack: &stack,
        };
        let v_pi = spec.policy_value(&rule).unwrap();
        assert!(spec.exact_values().v_star - v_pi <= 0.1);
    }

    #[test]
    fn metaalg_terminates_first_round_on_easy_instance() {
        let rngs = RngFactory::new(3);
        let spec = builders::random_deterministic(
            &builders::RandomCdpParams {
                horizon: 2,
                num_actions: 2,
                states_per_level: 2,
                obs_per_level: 6,
                reward_scale: 0.9,
            },
            &mut rngs.next_rng(),
        )
        .unwrap();
        let (g, p) = synthesize_classes(&spec, 31, &mut rngs.next_rng());
        let params = practical_params(&spec, 4_000);
        let budget = OracleBudget::new();
        let (outcome, _) = metaalg(
            &spec,
            &g,
            &p,
            &params,
            false,
            MultiBackend::Auto,
            &budget,
            &rngs,
        )
        .unwrap();
        assert!(outcome.success);
        assert_eq!(outcome.iterations, 1);
    }
}
