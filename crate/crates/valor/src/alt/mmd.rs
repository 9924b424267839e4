//! Depth-first learner with a two-sample state-identity test.
//!
//! Instead of storing per-state value estimates, this learner compares the
//! observation distribution of a fresh dataset against previously kept
//! datasets through the value class: the test statistic is the largest gap
//! in empirical means over the class. Policy fitting runs backward over
//! levels, fitting a policy by cost-sensitive classification against
//! bootstrap targets and then regressing the level's value function with
//! the least-squares oracle.

use serde::{Deserialize, Serialize};

use crate::cdp::{Action, CdpSpec, LevelSample, ObsId, Tail};
use crate::classes::{PolicyClass, PolicyStack, ValueClass, ValueFn};
use crate::error::{Error, Result};
use crate::local_values::{MetaLearner, ParamMode};
use crate::oracles::{csc_oracle, ls_oracle, CscDataset, LinFunctional, LsDataset, OracleBudget};
use crate::rng::RngFactory;

const COUNT_CAP: f64 = 1e18;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MmdParams {
    pub eps: f64,
    pub delta: f64,
    pub m_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub n_train: usize,
    pub n_exp: usize,
    pub n_eval: usize,
    /// Identity-test threshold: a dataset within `2 tau` of a kept dataset
    /// is treated as coming from a known state.
    pub tau: f64,
    /// Analysis-side deviation tolerances; they size `n_train` in the
    /// theoretical mode and are carried for reporting.
    pub tau_v: f64,
    pub tau_l: f64,
    pub t_max: usize,
    pub mode: ParamMode,
}

impl MmdParams {
    pub fn theoretical(
        eps: f64,
        delta: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        g_size: usize,
        pi_size: usize,
    ) -> Result<MmdParams> {
        if !(0.0..1.0).contains(&eps) || !(0.0..1.0).contains(&delta) || eps == 0.0 || delta == 0.0
        {
            return Err(Error::Config("need eps, delta in (0, 1)".into()));
        }
        let (m, k, h) = (m_states as f64, num_actions as f64, horizon as f64);
        let n_exp = (8.0 * (4.0 * m * h / delta).ln() / eps).ceil();
        let t_max = m * (k + 1.0) * (1.0 + h * n_exp);
        let tau = eps / (64.0 * 3.0 * h * h);
        let tau_v = eps * eps / (256.0 * 81.0 * m * m * h.powi(4));
        let tau_l = eps * eps / (128.0 * 9.0 * h.powi(4) * t_max);
        let ln_term = (12.0 * h * t_max * (g_size * g_size * pi_size) as f64 / delta).ln();
        let n_train = 16.0 * k * (2.0 / (tau_l * tau_l) + 1.0 / (tau_v * tau_v)) * ln_term;
        let n_eval = (32.0 * (8.0 * m * h / delta).ln() / (eps * eps)).ceil();
        if n_train > COUNT_CAP || t_max > COUNT_CAP {
            return Err(Error::ParamsOverflow(format!("n_train = {n_train:.3e}")));
        }
        Ok(MmdParams {
            eps,
            delta,
            m_states,
            num_actions,
            horizon,
            n_train: n_train.ceil() as usize,
            n_exp: n_exp as usize,
            n_eval: n_eval as usize,
            tau,
            tau_v,
            tau_l,
            t_max: t_max.ceil() as usize,
            mode: ParamMode::Theoretical,
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn practical(
        eps: f64,
        m_states: usize,
        num_actions: usize,
        horizon: usize,
        n_train: usize,
        n_exp: usize,
        n_eval: usize,
        tau: f64,
    ) -> MmdParams {
        let t_max = m_states * (num_actions + 1) * (1 + horizon * n_exp);
        MmdParams {
            eps,
            delta: 0.0,
            m_states,
            num_actions,
            horizon,
            n_train,
            n_exp,
            n_eval,
            tau,
            tau_v: 0.0,
            tau_l: 0.0,
            t_max,
            mode: ParamMode::Practical,
        }
    }
}

/// Largest gap of empirical means over the value class between two bags of
/// observations.
///
/// Explicit classes are enumerated. For the tabular class the supremum over
/// the box is attained at an extreme assignment, giving the larger of the
/// summed positive and summed negative per-observation frequency gaps.
pub fn mmd_distance(class: &ValueClass, left: &[ObsId], right: &[ObsId]) -> Result<f64> {
    if left.is_empty() || right.is_empty() {
        return Err(Error::EmptyDataset);
    }
    mmd_distance_freq(
        class,
        &LinFunctional::empirical_mean(left.iter().copied()),
        &LinFunctional::empirical_mean(right.iter().copied()),
    )
}

pub fn mmd_distance_freq(
    class: &ValueClass,
    left: &LinFunctional,
    right: &LinFunctional,
) -> Result<f64> {
    let mut diff: std::collections::BTreeMap<ObsId, f64> = std::collections::BTreeMap::new();
    for &(x, c) in &left.terms {
        *diff.entry(x).or_insert(0.0) += c;
    }
    for &(x, c) in &right.terms {
        *diff.entry(x).or_insert(0.0) -= c;
    }
    match class {
        ValueClass::ConstZero => Ok(0.0),
        ValueClass::Explicit { values, .. } => {
            let mut best: f64 = 0.0;
            for id in 0..values.len() {
                let mut v = 0.0;
                for (&x, &c) in &diff {
                    v += c * class.eval(&ValueFn::Member(id), x)?;
                }
                best = best.max(v.abs());
            }
            Ok(best)
        }
        ValueClass::Tabular { .. } => {
            let mut pos = 0.0;
            let mut neg = 0.0;
            for (&x, &c) in &diff {
                class.eval(&ValueFn::Assignment(Default::default()), x)?;
                if c > 0.0 {
                    pos += c;
                } else {
                    neg -= c;
                }
            }
            Ok(pos.max(neg))
        }
    }
}

/// Either a fitted value function or the zero function past the horizon.
#[derive(Debug, Clone)]
enum GEval {
    Zero,
    Fitted(ValueFn),
}

impl GEval {
    fn eval(&self, class: &ValueClass, x: Option<ObsId>) -> Result<f64> {
        match (self, x) {
            (GEval::Zero, _) | (_, None) => Ok(0.0),
            (GEval::Fitted(f), Some(x)) => class.eval(f, x),
        }
    }
}

#[derive(Debug)]
pub struct MmdDataset {
    pub samples: Vec<LevelSample>,
    pub freq: LinFunctional,
    /// Diagnostics only.
    pub source_path: Vec<Action>,
}

/// The two-sample-test learner. Keeps all collected datasets per level and
/// a distinguished subset of representatives that were distinct under the
/// identity test when collected.
pub struct MmdLearner<'a> {
    pub spec: &'a CdpSpec,
    pub g_class: &'a ValueClass,
    pub pi_class: &'a PolicyClass,
    pub params: &'a MmdParams,
    pub budget: &'a OracleBudget,
    pub rngs: &'a RngFactory,
    /// All datasets kept at each level.
    pub learned: Vec<Vec<MmdDataset>>,
    /// Indices into `learned` of the distinct representatives.
    pub val: Vec<Vec<usize>>,
    pub dfs_calls: Vec<u64>,
    /// Set when a level collected more representatives than hidden states.
    pub val_overflow: bool,
    /// Value functions fitted by the latest policy fit, per level.
    pub fitted_values: Vec<Option<ValueFn>>,
}

impl<'a> MmdLearner<'a> {
    pub fn new(
        spec: &'a CdpSpec,
        g_class: &'a ValueClass,
        pi_class: &'a PolicyClass,
        params: &'a MmdParams,
        budget: &'a OracleBudget,
        rngs: &'a RngFactory,
    ) -> Result<Self> {
        if !spec.is_deterministic() {
            return Err(Error::StochasticPath);
        }
        Ok(MmdLearner {
            spec,
            g_class,
            pi_class,
            params,
            budget,
            rngs,
            learned: (0..spec.horizon).map(|_| Vec::new()).collect(),
            val: (0..spec.horizon).map(|_| Vec::new()).collect(),
            dfs_calls: vec![0; spec.horizon],
            val_overflow: false,
            fitted_values: vec![None; spec.horizon],
        })
    }

    /// DFS collection with the two-sample identity test. Recursive calls
    /// return early when the fresh dataset matches a kept representative;
    /// top-level calls always proceed.
    pub fn dfslearn(&mut self, path: &[Action], is_recursive: bool) -> Result<()> {
        let h = path.len() + 1;
        if h > self.spec.horizon {
            return Ok(());
        }
        if self.dfs_calls[h - 1] >= self.params.t_max as u64 {
            return Err(Error::BudgetExceeded(format!(
                "level {h} exceeded {} collection calls",
                self.params.t_max
            )));
        }
        self.dfs_calls[h - 1] += 1;
        let samples = self.spec.sample_from_path(
            path,
            Tail::Uniform,
            self.params.n_train,
            &mut self.rngs.next_rng(),
        )?;
        self.budget.add_trajectories(self.params.n_train);
        let freq = LinFunctional::empirical_mean(samples.iter().map(|s| s.x));
        let mut d_mmd = f64::INFINITY;
        for &i in &self.val[h - 1] {
            let d = mmd_distance_freq(self.g_class, &self.learned[h - 1][i].freq, &freq)?;
            d_mmd = d_mmd.min(d);
        }
        if d_mmd <= 2.0 * self.params.tau && is_recursive {
            return Ok(());
        }
        let idx = self.learned[h - 1].len();
        self.learned[h - 1].push(MmdDataset {
            samples,
            freq,
            source_path: path.to_vec(),
        });
        if d_mmd > 2.0 * self.params.tau {
            self.val[h - 1].push(idx);
            if self.val[h - 1].len() > self.params.m_states {
                self.val_overflow = true;
            }
        }
        for a in 0..self.spec.num_actions {
            let mut child = path.to_vec();
            child.push(a);
            self.dfslearn(&child, true)?;
        }
        Ok(())
    }

    /// Backward policy and value fitting: per level, one classification
    /// call over all kept datasets against bootstrap targets, then one
    /// least-squares call over the representatives with the fitted policy's
    /// importance weights.
    pub fn polvalfun(&mut self) -> Result<(PolicyStack, f64)> {
        let k = self.spec.num_actions;
        let mut g_next = GEval::Zero;
        let mut per_level = vec![None; self.spec.horizon];
        for h in (1..=self.spec.horizon).rev() {
            if self.learned[h - 1].is_empty() {
                return Err(Error::EmptyStore { level: h });
            }
            let mut pooled = CscDataset::new();
            for d in &self.learned[h - 1] {
                let w = 1.0 / d.samples.len() as f64;
                for s in &d.samples {
                    let target = s.r + g_next.eval(self.g_class, s.x_next)?;
                    let mut costs = vec![0.0; k];
                    costs[s.a] = -(k as f64) * target;
                    pooled.push_weighted(s.x, costs, w);
                }
            }
            let policy = csc_oracle(self.pi_class, &pooled, 0.0, self.budget)?;

            let mut reg = LsDataset::default();
            for &i in &self.val[h - 1] {
                let d = &self.learned[h - 1][i];
                let w = 1.0 / d.samples.len() as f64;
                for s in &d.samples {
                    if self.pi_class.act(&policy, s.x)? == s.a {
                        let target = s.r + g_next.eval(self.g_class, s.x_next)?;
                        reg.push_weighted(s.x, target, w * k as f64);
                    }
                }
            }
            let g_h = ls_oracle(self.g_class, &reg, 0.0, self.budget)?;
            per_level[h - 1] = Some(policy);
            self.fitted_values[h - 1] = Some(g_h.clone());
            g_next = GEval::Fitted(g_h);
        }
        let roots = &self.val[0];
        if roots.len() != 1 {
            return Err(Error::Internal(format!(
                "expected one level-1 representative, found {}",
                roots.len()
            )));
        }
        let v_hat = match &g_next {
            GEval::Fitted(f) => self.learned[0][roots[0]].freq.eval(self.g_class, f)?,
            GEval::Zero => 0.0,
        };
        Ok((
            PolicyStack {
                per_level: per_level.into_iter().map(Option::unwrap).collect(),
            },
            v_hat,
        ))
    }
}

impl MetaLearner for MmdLearner<'_> {
    fn dfs_root(&mut self) -> Result<()> {
        self.dfslearn(&[], false)
    }

    fn dfs_path(&mut self, path: &[Action]) -> Result<()> {
        self.dfslearn(path, false)
    }

    fn polvalfun(&mut self) -> Result<(PolicyStack, f64)> {
        MmdLearner::polvalfun(self)
    }

    fn store_sizes(&self) -> Vec<usize> {
        self.learned.iter().map(Vec::len).collect()
    }
}
