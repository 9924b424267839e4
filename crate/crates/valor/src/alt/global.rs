//! Depth-first learner that maintains a single global policy.
//!
//! For a new path, the identity test derives an upper bound on the path's
//! optimal value from the value class, constrained by roll-out data from
//! one already-learned path, and compares it with Monte-Carlo roll-outs of
//! the current policy. Pruned paths are re-checked whenever the policy at
//! their level changes; failures are removed and learned. The policy at a
//! level is refit with the multi-dataset classification oracle to stay near
//! the best attainable value on every learned path simultaneously.

use serde::{Deserialize, Serialize};

use crate::cdp::{Action, CdpSpec, DecisionRule, ObsId, Tail};
use crate::classes::{PolicyClass, PolicyFn, PolicyStack, ValueClass};
use crate::error::{Error, Result};
use crate::local_values::ParamMode;
use crate::oracles::{
    csc_oracle, lp_oracle, multi_csc_oracle, CscDataset, Direction, LinFunctional, LpConstraint,
    LpOutcome, LpProblem, LpSense, MultiBackend, MultiCscProblem, MultiOutcome, MwConfig,
    OracleBudget,
};
use crate::rng::RngFactory;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GlobalParams {
    pub eps: f64,
    pub delta: f64,
    pub m_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub n_test: usize,
    pub n_train: usize,
    /// Policy-fit tolerance.
    pub tau_pol: f64,
    /// Roll-out estimation tolerance.
    pub tau_val: f64,
    /// Cap on learner and identity-test calls: `3 M^2 H K`.
    pub t_max: usize,
    pub mode: ParamMode,
}

impl GlobalParams {
    pub fn theoretical(
        eps: f64,
        delta: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        g_size: usize,
        pi_size: usize,
    ) -> Result<GlobalParams> {
        if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) || eps == 0.0 || delta == 0.0
        {
            return Err(Error::Config("need eps, delta in (0, 1)".into()));
        }
        let h = horizon as f64;
        let tau_pol = eps / (6.0 * h);
        let tau_val = eps / (6.0 * h);
        let t_max = 3 * m_states * m_states * horizon * num_actions;
        let ln_term =
            (16.0 * t_max as f64 * m_states as f64 * (pi_size * g_size) as f64 / delta).ln();
        let n_test = (ln_term / (2.0 * tau_val * tau_val)).ceil();
        let n_train = (16.0 * num_actions as f64 * ln_term / (tau_pol * tau_pol)).ceil();
        if !n_test.is_finite() || n_test > 1e18 || n_train > 1e18 {
            return Err(Error::ParamsOverflow(format!("n_train = {n_train:.3e}")));
        }
        Ok(GlobalParams {
            eps,
            delta,
            m_states,
            num_actions,
            horizon,
            n_test: n_test as usize,
            n_train: n_train as usize,
            tau_pol,
            tau_val,
            t_max,
            mode: ParamMode::Theoretical,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn practical(
        eps: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        n_test: usize,
        n_train: usize,
        tau_pol: f64,
        tau_val: f64,
    ) -> GlobalParams {
        GlobalParams {
            eps,
            delta: 0.0,
            m_states,
            num_actions,
            horizon,
            n_test,
            n_train,
            tau_pol,
            tau_val,
            t_max: 3 * m_states * m_states * horizon * num_actions,
            mode: ParamMode::Practical,
        }
    }

    /// Per-level guarantee radius: `(H - level + 1)(8 tau_val + 3 tau_pol)`.
    pub fn phi(&self, level: usize) -> f64 {
        let steps = (self.horizon + 1).saturating_sub(level) as f64;
        steps * (8.0 * self.tau_val + 3.0 * self.tau_pol)
    }
}

/// Acts with the per-level policies that have been fit so far; levels not
/// yet fit are undefined and surface as hard errors if consulted.
struct PartialStack<'a> {
    class: &'a PolicyClass,
    per_level: &'a [Option<PolicyFn>],
}

impl DecisionRule for PartialStack<'_> {
    fn act(&self, level: usize, x: ObsId) -> Option<Action> {
        self.per_level
            .get(level - 1)?
            .as_ref()
            .and_then(|p| self.class.act(p, x).ok())
    }
}

pub struct GlobalLearner<'a> {
    pub spec: &'a CdpSpec,
    pub g_class: &'a ValueClass,
    pub pi_class: &'a PolicyClass,
    pub params: &'a GlobalParams,
    pub budget: &'a OracleBudget,
    pub rngs: &'a RngFactory,
    pub learned: Vec<Vec<Vec<Action>>>,
    pub pruned: Vec<Vec<Vec<Action>>>,
    pub policy: Vec<Option<PolicyFn>>,
    pub dfs_calls: u64,
    pub test_calls: u64,
    /// Paths ever added to the pruned set, per level (including later
    /// removed ones).
    pub pruned_ever: Vec<u64>,
}

impl<'a> GlobalLearner<'a> {
    pub fn new(
        spec: &'a CdpSpec,
        g_class: &'a ValueClass,
        pi_class: &'a PolicyClass,
        params: &'a GlobalParams,
        budget: &'a OracleBudget,
        rngs: &'a RngFactory,
    ) -> Result<Self> {
        if !spec.is_deterministic() {
            return Err(Error::StochasticPath);
        }
        Ok(GlobalLearner {
            spec,
            g_class,
            pi_class,
            params,
            budget,
            rngs,
            learned: vec![Vec::new(); spec.horizon],
            pruned: vec![Vec::new(); spec.horizon],
            policy: vec![None; spec.horizon],
            dfs_calls: 0,
            test_calls: 0,
            pruned_ever: vec![0; spec.horizon],
        })
    }

    /// Learn the whole process starting from the root and return the global
    /// policy.
    pub fn run(&mut self) -> Result<PolicyStack> {
        self.dfslearn(&[], false)?;
        let per_level = self
            .policy
            .iter()
            .cloned()
            .map(|p| p.ok_or_else(|| Error::Internal("level left without a policy".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok(PolicyStack { per_level })
    }

    /// Upper-bound identity test. True iff some learned path at this level
    /// explains the new path: the class-optimal value of the new path,
    /// constrained by the learned path's roll-out, does not exceed the
    /// roll-out return by more than the tolerance, and the new path's own
    /// roll-out return is no worse.
    pub fn test_learned(&mut self, path: &[Action], level: usize) -> Result<bool> {
        if self.learned[level - 1].is_empty() {
            return Ok(false);
        }
        self.test_calls += 1;
        if self.test_calls > self.params.t_max as u64 {
            return Err(Error::BudgetExceeded(format!(
                "identity-test calls exceeded {}",
                self.params.t_max
            )));
        }
        let p = self.params;
        let rule = PartialStack {
            class: self.pi_class,
            per_level: &self.policy,
        };
        let d = self.spec.sample_from_path(
            path,
            Tail::Policy(&rule),
            p.n_test,
            &mut self.rngs.next_rng(),
        )?;
        self.budget.add_trajectories(p.n_test);
        let ret_p = d.iter().map(|s| s.ret).sum::<f64>() / d.len() as f64;
        let freq_p = LinFunctional::empirical_mean(d.iter().map(|s| s.x));
        let phi = p.phi(level);
        for q in self.learned[level - 1].clone() {
            let dq = self.spec.sample_from_path(
                &q,
                Tail::Policy(&rule),
                p.n_test,
                &mut self.rngs.next_rng(),
            )?;
            self.budget.add_trajectories(p.n_test);
            let ret_q = dq.iter().map(|s| s.ret).sum::<f64>() / dq.len() as f64;
            let freq_q = LinFunctional::empirical_mean(dq.iter().map(|s| s.x));
            let problem = LpProblem {
                objective: freq_p.clone(),
                direction: Direction::Maximize,
                constraints: vec![LpConstraint {
                    functional: freq_q,
                    sense: LpSense::Le(ret_q + phi + 2.0 * p.tau_val),
                }],
                eps_sub: 0.0,
                eps_feas: 0.0,
            };
            let v_opt = match lp_oracle(self.g_class, &problem, self.budget)? {
                LpOutcome::Feasible { objective, .. } => objective,
                LpOutcome::Infeasible => continue,
            };
            if v_opt <= ret_q + phi + 4.0 * p.tau_val && ret_p >= ret_q - 2.0 * p.tau_val {
                return Ok(true);
            }
        }
        Ok(false)
    }

    pub fn dfslearn(&mut self, path: &[Action], from_recheck: bool) -> Result<()> {
        let level = path.len() + 1;
        if level > self.spec.horizon {
            return Ok(());
        }
        self.dfs_calls += 1;
        if self.dfs_calls > self.params.t_max as u64 {
            return Err(Error::BudgetExceeded(format!(
                "learner calls exceeded {}",
                self.params.t_max
            )));
        }
        if !from_recheck && self.test_learned(path, level)? {
            self.pruned[level - 1].push(path.to_vec());
            self.pruned_ever[level - 1] += 1;
            return Ok(());
        }
        for a in 0..self.spec.num_actions {
            let mut child = path.to_vec();
            child.push(a);
            self.dfslearn(&child, false)?;
        }
        self.learned[level - 1].push(path.to_vec());

        // Value of every learned path at this level under the current
        // suffix policy, then a simultaneous policy refit.
        let p = self.params;
        let k = self.spec.num_actions;
        let mut datasets = Vec::new();
        let mut thresholds = Vec::new();
        for q in self.learned[level - 1].clone() {
            let rule = PartialStack {
                class: self.pi_class,
                per_level: &self.policy,
            };
            let dq = self.spec.sample_from_path(
                &q,
                Tail::UniformThenPolicy(&rule),
                p.n_train,
                &mut self.rngs.next_rng(),
            )?;
            self.budget.add_trajectories(p.n_train);
            let mut data = CscDataset::new();
            for s in &dq {
                let mut costs = vec![0.0; k];
                costs[s.a] = -(k as f64) * s.ret;
                data.push(s.x, costs);
            }
            let best = csc_oracle(self.pi_class, &data, 0.0, self.budget)?;
            let mut v_hat_q = 0.0;
            for s in &dq {
                if self.pi_class.act(&best, s.x)? == s.a {
                    v_hat_q += k as f64 * s.ret;
                }
            }
            v_hat_q /= dq.len() as f64;
            thresholds.push(-(v_hat_q - 2.0 * p.tau_pol));
            datasets.push(data);
        }
        let problem = MultiCscProblem {
            datasets,
            thresholds,
            eps_feas: 0.0,
            mw: MwConfig::default(),
        };
        match multi_csc_oracle(self.pi_class, &problem, MultiBackend::Auto, self.budget)? {
            MultiOutcome::Policy(pol) => self.policy[level - 1] = Some(pol),
            MultiOutcome::Infeasible { max_violation } => {
                return Err(Error::Infeasible(format!(
                    "global policy fit at level {level}: {} learned paths, worst violation {max_violation:.6}",
                    self.learned[level - 1].len()
                )))
            }
        }

        // The policy changed: every pruned path must pass the test again;
        // failures are learned immediately.
        loop {
            let snapshot = self.pruned[level - 1].clone();
            let mut changed = false;
            for q in snapshot {
                if !self.pruned[level - 1].contains(&q) {
                    continue;
                }
                if !self.test_learned(&q, level)? {
                    self.pruned[level - 1].retain(|r| r != &q);
                    self.dfslearn(&q, true)?;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        Ok(())
    }

    pub fn learned_sizes(&self) -> Vec<usize> {
        self.learned.iter().map(Vec::len).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cdp::builders;
    use crate::classes::StackRule;

    fn tabular_classes(spec: &CdpSpec) -> (ValueClass, PolicyClass) {
        let obs: Vec<ObsId> = spec.all_observations().collect();
        (
            ValueClass::tabular(obs.clone()),
            PolicyClass::tabular(obs, spec.num_actions),
        )
    }

    fn practical(spec: &CdpSpec) -> GlobalParams {
        GlobalParams::practical(
            0.1,
            spec.max_states_per_level(),
            spec.num_actions,
            spec.horizon,
            4_000,
            4_000,
            0.014,
            0.014,
        )
    }

    #[test]
    fn theoretical_parameter_formulas() {
        let p = GlobalParams::theoretical(0.6, 0.5, 2, 2, 1, 4, 4).unwrap();
        assert!((p.tau_pol - 0.1).abs() < 1e-12);
        assert!((p.tau_val - 0.1).abs() < 1e-12);
        assert!((p.phi(1) - 1.1).abs() < 1e-12);
        assert_eq!(p.t_max, 3 * 4 * 1 * 2);
    }

    #[test]
    fn empty_learned_set_never_tests_true() {
        let spec = builders::needle(4).unwrap();
        let (g, pc) = tabular_classes(&spec);
        let params = practical(&spec);
        let budget = OracleBudget::new();
        let rngs = RngFactory::new(1);
        let mut learner = GlobalLearner::new(&spec, &g, &pc, &params, &budget, &rngs).unwrap();
        assert!(!learner.test_learned(&[], 1).unwrap());
    }

    #[test]
    fn single_chain_learns_every_level_once() {
        let spec = builders::backup_chain(2, 0.2).unwrap();
        let (g, pc) = tabular_classes(&spec);
        let params = practical(&spec);
        let budget = OracleBudget::new();
        let rngs = RngFactory::new(2);
        let mut learner = GlobalLearner::new(&spec, &g, &pc, &params, &budget, &rngs).unwrap();
        let stack = learner.run().unwrap();
        // two states per level past the root, so at most two learned paths
        // each; level 1 exactly one
        assert_eq!(learner.learned[0].len(), 1);
        for h in 2..=spec.horizon {
            assert!(learner.learned[h - 1].len() <= 2);
        }
        let rule = StackRule {
            class: &pc,
            stack: &stack,
        };
        let subopt = spec.exact_values().v_star - spec.policy_value(&rule).unwrap();
        assert!(subopt <= 0.1, "suboptimality {subopt}");
    }

    #[test]
    fn random_process_learned_and_solved() {
        let rngs = RngFactory::new(7);
        let spec = builders::random_deterministic(
            &builders::RandomCdpParams {
                horizon: 3,
                num_actions: 2,
                states_per_level: 3,
                obs_per_level: 9,
                reward_scale: 0.85,
            },
            &mut rngs.next_rng(),
        )
        .unwrap();
        let (g, pc) = tabular_classes(&spec);
        let params = practical(&spec);
        let budget = OracleBudget::new();
        let mut learner = GlobalLearner::new(&spec, &g, &pc, &params, &budget, &rngs).unwrap();
        let stack = learner.run().unwrap();
        let rule = StackRule {
            class: &pc,
            stack: &stack,
        };
        let subopt = spec.exact_values().v_star - spec.policy_value(&rule).unwrap();
        assert!(subopt <= 0.1, "suboptimality {subopt}");
        // trajectory accounting bound
        let m = spec.max_states_per_level() as u64;
        let bound = (1 + m) * params.t_max as u64 * params.n_test as u64
            + m * m * spec.horizon as u64 * params.n_train as u64;
        assert!(budget.snapshot().trajectories <= bound);
        // pruned-path churn bound
        for h in 1..=spec.horizon {
            assert!(
                learner.pruned_ever[h - 1]
                    <= (spec.num_actions as u64) * m,
                "level {h} pruned too many paths"
            );
        }
    }
}
