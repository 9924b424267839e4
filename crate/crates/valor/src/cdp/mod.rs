//! Layered contextual decision processes with hidden states and rich
//! observations, plus an exact dynamic-programming oracle for ground truth.
//!
//! A process runs for `horizon` levels. At level `h` the environment is in a
//! hidden state `s_h`, emits an observation `x_h` from the state's emission
//! distribution, the agent picks an action from the observation alone, a
//! reward is drawn from the observation-action reward distribution, and the
//! hidden state transitions. Hidden states are never exposed to learners;
//! trajectories carry them for test-only inspection.
//!
//! States and observations are partitioned by level, and each observation is
//! emitted by exactly one state, so the optimal value function is well
//! defined per observation.

pub mod builders;

use std::collections::BTreeMap;

use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Schema version of the JSON spec document.
pub const SPEC_FORMAT_VERSION: u32 = 1;

/// Observation identifier. Opaque to learners; dense within a spec.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct ObsId(pub u32);

/// Hidden-state identifier. Dense within a spec.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
pub struct StateId(pub u32);

pub type Action = usize;

const DIST_TOL: f64 = 1e-12;

/// Categorical distribution over dense u32 ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Categorical {
    /// (id, probability) pairs; probabilities sum to 1 within 1e-12.
    pub support: Vec<(u32, f64)>,
}

impl Categorical {
    pub fn point(id: u32) -> Self {
        Categorical {
            support: vec![(id, 1.0)],
        }
    }

    pub fn uniform(ids: &[u32]) -> Self {
        let p = 1.0 / ids.len() as f64;
        Categorical {
            support: ids.iter().map(|&i| (i, p)).collect(),
        }
    }

    /// Build from possibly repeated ids, merging probabilities.
    pub fn merged(pairs: impl IntoIterator<Item = (u32, f64)>) -> Self {
        let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
        for (id, p) in pairs {
            *acc.entry(id).or_insert(0.0) += p;
        }
        Categorical {
            support: acc.into_iter().collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::InvalidSpec("empty categorical support".into()));
        }
        let mut sum = 0.0;
        for &(_, p) in &self.support {
            if !(p >= 0.0) || !p.is_finite() {
                return Err(Error::InvalidSpec(format!("bad probability {p}")));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > DIST_TOL {
            return Err(Error::InvalidSpec(format!(
                "categorical sums to {sum}, expected 1"
            )));
        }
        Ok(())
    }

    pub fn is_point_mass(&self) -> bool {
        self.support
            .iter()
            .any(|&(_, p)| (p - 1.0).abs() <= DIST_TOL)
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> u32 {
        if self.support.len() == 1 {
            return self.support[0].0;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(id, p) in &self.support {
            acc += p;
            if u < acc {
                return id;
            }
        }
        self.support.last().expect("nonempty support").0
    }
}

/// Reward distribution for one (observation, action) pair.
///
/// Either a Bernoulli draw with the given mean, or the mean paid
/// deterministically (zero-variance constant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardDist {
    pub mean: f64,
    #[serde(default)]
    pub deterministic: bool,
}

impl RewardDist {
    pub fn bernoulli(mean: f64) -> Self {
        RewardDist {
            mean,
            deterministic: false,
        }
    }

    pub fn constant(mean: f64) -> Self {
        RewardDist {
            mean,
            deterministic: true,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha12Rng) -> f64 {
        if self.deterministic {
            self.mean
        } else if self.mean <= 0.0 {
            0.0
        } else if self.mean >= 1.0 {
            1.0
        } else if rng.random::<f64>() < self.mean {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateSpec {
    pub level: usize,
    /// Emission distribution over observation ids at the same level.
    pub emission: Categorical,
    /// Per-action transition distributions over next-level states.
    /// Empty at the last level.
    pub transitions: Vec<Categorical>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObsSpec {
    pub level: usize,
    /// The unique state emitting this observation.
    pub state: StateId,
    /// Per-action reward distributions.
    pub rewards: Vec<RewardDist>,
}

/// Full generative model of a layered contextual decision process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CdpSpec {
    pub format_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    pub horizon: usize,
    pub num_actions: usize,
    /// Initial distribution over level-1 states.
    pub initial: Categorical,
    /// Indexed by `StateId`.
    pub states: Vec<StateSpec>,
    /// Indexed by `ObsId`.
    pub observations: Vec<ObsSpec>,
}

impl CdpSpec {
    pub fn state(&self, s: StateId) -> &StateSpec {
        &self.states[s.0 as usize]
    }

    pub fn obs(&self, x: ObsId) -> &ObsSpec {
        &self.observations[x.0 as usize]
    }

    pub fn obs_level(&self, x: ObsId) -> usize {
        self.obs(x).level
    }

    pub fn states_at(&self, level: usize) -> impl Iterator<Item = StateId> + '_ {
        self.states
            .iter()
            .enumerate()
            .filter(move |(_, st)| st.level == level)
            .map(|(i, _)| StateId(i as u32))
    }

    pub fn observations_at(&self, level: usize) -> impl Iterator<Item = ObsId> + '_ {
        self.observations
            .iter()
            .enumerate()
            .filter(move |(_, ob)| ob.level == level)
            .map(|(i, _)| ObsId(i as u32))
    }

    pub fn all_observations(&self) -> impl Iterator<Item = ObsId> + '_ {
        (0..self.observations.len()).map(|i| ObsId(i as u32))
    }

    /// M: the maximum number of hidden states on any level.
    pub fn max_states_per_level(&self) -> usize {
        (1..=self.horizon)
            .map(|h| self.states_at(h).count())
            .max()
            .unwrap_or(0)
    }

    /// True iff the initial distribution and every transition row are point
    /// masses, so an action sequence identifies a unique hidden state.
    pub fn is_deterministic(&self) -> bool {
        self.initial.is_point_mass()
            && self
                .states
                .iter()
                .all(|st| st.transitions.iter().all(Categorical::is_point_mass))
    }

    /// Validate all structural invariants.
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidSpec("horizon must be at least 1".into()));
        }
        if self.num_actions < 1 {
            return Err(Error::InvalidSpec("need at least one action".into()));
        }
        self.initial.validate()?;
        for &(sid, _) in &self.initial.support {
            let st = self
                .states
                .get(sid as usize)
                .ok_or_else(|| Error::InvalidSpec(format!("initial refers to state {sid}")))?;
            if st.level != 1 {
                return Err(Error::InvalidSpec(
                    "initial distribution must cover level-1 states".into(),
                ));
            }
        }
        let mut obs_owner = vec![None; self.observations.len()];
        for (i, st) in self.states.iter().enumerate() {
            if st.level < 1 || st.level > self.horizon {
                return Err(Error::InvalidSpec(format!("state {i} at bad level")));
            }
            st.emission.validate()?;
            for &(oid, _) in &st.emission.support {
                let ob = self
                    .observations
                    .get(oid as usize)
                    .ok_or_else(|| Error::InvalidSpec(format!("state {i} emits unknown {oid}")))?;
                if ob.level != st.level {
                    return Err(Error::InvalidSpec(format!(
                        "state {i} emits observation {oid} of another level"
                    )));
                }
                match obs_owner[oid as usize] {
                    None => obs_owner[oid as usize] = Some(i),
                    Some(j) if j != i => {
                        return Err(Error::InvalidSpec(format!(
                            "observation {oid} emitted by states {j} and {i}"
                        )))
                    }
                    _ => {}
                }
            }
            if st.level < self.horizon {
                if st.transitions.len() != self.num_actions {
                    return Err(Error::InvalidSpec(format!(
                        "state {i} needs {} transition rows",
                        self.num_actions
                    )));
                }
                for row in &st.transitions {
                    row.validate()?;
                    for &(nid, _) in &row.support {
                        let nx = self.states.get(nid as usize).ok_or_else(|| {
                            Error::InvalidSpec(format!("transition to unknown state {nid}"))
                        })?;
                        if nx.level != st.level + 1 {
                            return Err(Error::InvalidSpec(format!(
                                "state {i} transitions across non-adjacent levels"
                            )));
                        }
                    }
                }
            } else if !st.transitions.is_empty() {
                return Err(Error::InvalidSpec(
                    "last-level states must have no transitions".into(),
                ));
            }
        }
        for (i, ob) in self.observations.iter().enumerate() {
            if ob.rewards.len() != self.num_actions {
                return Err(Error::InvalidSpec(format!(
                    "observation {i} needs {} reward entries",
                    self.num_actions
                )));
            }
            for rd in &ob.rewards {
                if !(0.0..=1.0).contains(&rd.mean) {
                    return Err(Error::InvalidSpec(format!(
                        "reward mean {} outside [0,1]",
                        rd.mean
                    )));
                }
            }
            let st = self
                .states
                .get(ob.state.0 as usize)
                .ok_or_else(|| Error::InvalidSpec(format!("observation {i} orphaned")))?;
            if st.level != ob.level {
                return Err(Error::InvalidSpec(format!(
                    "observation {i} level disagrees with its state"
                )));
            }
            if obs_owner[i] != Some(ob.state.0 as usize) {
                return Err(Error::InvalidSpec(format!(
                    "observation {i} not emitted by its declared state"
                )));
            }
        }
        // Reward scaling: the best achievable expected return must not
        // exceed 1 (the almost-sure budget in expectation-compatible form).
        let v = self.exact_values().v_star;
        if v > 1.0 + 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "optimal expected return {v} exceeds the unit reward budget"
            )));
        }
        Ok(())
    }

    fn sample_obs(&self, s: StateId, rng: &mut ChaCha12Rng) -> ObsId {
        ObsId(self.state(s).emission.sample(rng))
    }

    fn sample_next(&self, s: StateId, a: Action, rng: &mut ChaCha12Rng) -> StateId {
        StateId(self.state(s).transitions[a].sample(rng))
    }

    /// Draw one full episode with actions chosen by `rule`.
    pub fn sample_episode(&self, rule: &dyn DecisionRule, rng: &mut ChaCha12Rng) -> Result<Trajectory> {
        let mut s = StateId(self.initial.sample(rng));
        let mut steps = Vec::with_capacity(self.horizon);
        for h in 1..=self.horizon {
            let x = self.sample_obs(s, rng);
            let a = rule
                .act(h, x)
                .ok_or(Error::PolicyUndefined { level: h, obs: x })?;
            if a >= self.num_actions {
                return Err(Error::PolicyUndefined { level: h, obs: x });
            }
            let r = self.obs(x).rewards[a].sample(rng);
            steps.push(TrajStep {
                state: s,
                obs: x,
                action: a,
                reward: r,
            });
            if h < self.horizon {
                s = self.sample_next(s, a, rng);
            }
        }
        Ok(Trajectory { steps })
    }

    /// Resolve the hidden state reached by an action sequence.
    ///
    /// Requires deterministic dynamics; test-and-diagnostics use only.
    pub fn state_at_path(&self, path: &[Action]) -> Result<StateId> {
        if !self.is_deterministic() {
            return Err(Error::StochasticPath);
        }
        if path.len() >= self.horizon {
            return Err(Error::PathTooLong {
                len: path.len(),
                horizon: self.horizon,
            });
        }
        let mut s = StateId(self.initial.support[0].0);
        for &a in path {
            if a >= self.num_actions {
                return Err(Error::Internal(format!("action {a} out of range")));
            }
            s = StateId(self.state(s).transitions[a].support[0].0);
        }
        Ok(s)
    }

    /// Sample `n` partial trajectories that follow `path` and then continue
    /// per `tail`, returning the transition tuple observed at level
    /// `|path| + 1` together with the realized tail return.
    pub fn sample_from_path(
        &self,
        path: &[Action],
        tail: Tail<'_>,
        n: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<LevelSample>> {
        if path.len() >= self.horizon {
            return Err(Error::PathTooLong {
                len: path.len(),
                horizon: self.horizon,
            });
        }
        if !path.is_empty() && !self.is_deterministic() {
            return Err(Error::StochasticPath);
        }
        let h = path.len() + 1;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let mut s = StateId(self.initial.sample(rng));
            for &a in path {
                s = self.sample_next(s, a, rng);
            }
            let x = self.sample_obs(s, rng);
            let a = match tail {
                Tail::Fixed(a) => a,
                Tail::Uniform | Tail::UniformThenPolicy(_) => rng.random_range(0..self.num_actions),
                Tail::Policy(rule) => rule
                    .act(h, x)
                    .ok_or(Error::PolicyUndefined { level: h, obs: x })?,
            };
            if a >= self.num_actions {
                return Err(Error::PolicyUndefined { level: h, obs: x });
            }
            let r = self.obs(x).rewards[a].sample(rng);
            let mut ret = r;
            let mut x_next = None;
            if h < self.horizon {
                let mut s2 = self.sample_next(s, a, rng);
                let x2 = self.sample_obs(s2, rng);
                x_next = Some(x2);
                match tail {
                    Tail::Fixed(_) | Tail::Uniform => {}
                    Tail::UniformThenPolicy(rule) | Tail::Policy(rule) => {
                        // Roll the suffix policy out to the horizon.
                        let mut xc = x2;
                        for hh in (h + 1)..=self.horizon {
                            let ac = rule
                                .act(hh, xc)
                                .ok_or(Error::PolicyUndefined { level: hh, obs: xc })?;
                            ret += self.obs(xc).rewards[ac].sample(rng);
                            if hh < self.horizon {
                                s2 = self.sample_next(s2, ac, rng);
                                xc = self.sample_obs(s2, rng);
                            }
                        }
                    }
                }
            }
            out.push(LevelSample {
                x,
                a,
                r,
                x_next,
                ret,
                hidden: s,
            });
        }
        Ok(out)
    }

    /// One episode rolled with `rule`, except that the action at level `h`
    /// is drawn uniformly; returns the level-`h` transition tuple.
    pub fn sample_with_uniform_at(
        &self,
        rule: &dyn DecisionRule,
        h: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<LevelSample> {
        let mut s = StateId(self.initial.sample(rng));
        for hh in 1..h {
            let x = self.sample_obs(s, rng);
            let a = rule
                .act(hh, x)
                .ok_or(Error::PolicyUndefined { level: hh, obs: x })?;
            s = self.sample_next(s, a, rng);
        }
        let x = self.sample_obs(s, rng);
        let a = rng.random_range(0..self.num_actions);
        let r = self.obs(x).rewards[a].sample(rng);
        let x_next = if h < self.horizon {
            Some(self.sample_obs(self.sample_next(s, a, rng), rng))
        } else {
            None
        };
        Ok(LevelSample {
            x,
            a,
            r,
            x_next,
            ret: r,
            hidden: s,
        })
    }

    /// Exact optimal values by backward induction over levels.
    pub fn exact_values(&self) -> ExactValues {
        let num_obs = self.observations.len();
        let num_states = self.states.len();
        let k = self.num_actions;
        let mut q = vec![vec![0.0; k]; num_obs];
        let mut g = vec![0.0; num_obs];
        let mut v_state = vec![0.0; num_states];
        for h in (1..=self.horizon).rev() {
            for x in self.observations_at(h) {
                let ob = self.obs(x);
                let st = self.state(ob.state);
                let mut best = f64::NEG_INFINITY;
                for a in 0..k {
                    let mut val = ob.rewards[a].mean;
                    if h < self.horizon {
                        for &(nid, p) in &st.transitions[a].support {
                            val += p * v_state[nid as usize];
                        }
                    }
                    q[x.0 as usize][a] = val;
                    best = best.max(val);
                }
                g[x.0 as usize] = best;
            }
            for s in self.states_at(h) {
                let mut v = 0.0;
                for &(oid, p) in &self.state(s).emission.support {
                    v += p * g[oid as usize];
                }
                v_state[s.0 as usize] = v;
            }
        }
        let v_star = self
            .initial
            .support
            .iter()
            .map(|&(sid, p)| p * v_state[sid as usize])
            .sum();
        ExactValues {
            q,
            g,
            v_state,
            v_star,
        }
    }

    /// Per-level hidden-state occupancy under `rule`, by forward DP.
    pub fn occupancy(&self, rule: &dyn DecisionRule) -> Result<Vec<Vec<(StateId, f64)>>> {
        let mut occ: BTreeMap<StateId, f64> = self
            .initial
            .support
            .iter()
            .map(|&(sid, p)| (StateId(sid), p))
            .collect();
        let mut out = Vec::with_capacity(self.horizon);
        for h in 1..=self.horizon {
            out.push(occ.iter().map(|(&s, &p)| (s, p)).collect::<Vec<_>>());
            if h == self.horizon {
                break;
            }
            let mut next: BTreeMap<StateId, f64> = BTreeMap::new();
            for (&s, &ps) in &occ {
                for &(oid, po) in &self.state(s).emission.support {
                    let x = ObsId(oid);
                    let a = rule
                        .act(h, x)
                        .ok_or(Error::PolicyUndefined { level: h, obs: x })?;
                    for &(nid, pt) in &self.state(s).transitions[a].support {
                        *next.entry(StateId(nid)).or_insert(0.0) += ps * po * pt;
                    }
                }
            }
            occ = next;
        }
        Ok(out)
    }

    /// Exact expected return of a policy.
    pub fn policy_value(&self, rule: &dyn DecisionRule) -> Result<f64> {
        let mut total = 0.0;
        for (h, level_occ) in self.occupancy(rule)?.iter().enumerate() {
            let h = h + 1;
            for &(s, ps) in level_occ {
                for &(oid, po) in &self.state(s).emission.support {
                    let x = ObsId(oid);
                    let a = rule
                        .act(h, x)
                        .ok_or(Error::PolicyUndefined { level: h, obs: x })?;
                    total += ps * po * self.obs(x).rewards[a].mean;
                }
            }
        }
        Ok(total)
    }

    /// Exact expected return-to-go of a policy from a given hidden state.
    pub fn policy_value_from(&self, s0: StateId, rule: &dyn DecisionRule) -> Result<f64> {
        let start_level = self.state(s0).level;
        let mut occ: BTreeMap<StateId, f64> = BTreeMap::new();
        occ.insert(s0, 1.0);
        let mut total = 0.0;
        for h in start_level..=self.horizon {
            let mut next: BTreeMap<StateId, f64> = BTreeMap::new();
            for (&s, &ps) in &occ {
                for &(oid, po) in &self.state(s).emission.support {
                    let x = ObsId(oid);
                    let a = rule
                        .act(h, x)
                        .ok_or(Error::PolicyUndefined { level: h, obs: x })?;
                    total += ps * po * self.obs(x).rewards[a].mean;
                    if h < self.horizon {
                        for &(nid, pt) in &self.state(s).transitions[a].support {
                            *next.entry(StateId(nid)).or_insert(0.0) += ps * po * pt;
                        }
                    }
                }
            }
            occ = next;
        }
        Ok(total)
    }

    /// Roundtrip-stable JSON form of the spec.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<CdpSpec> {
        let spec: CdpSpec = serde_json::from_str(text)?;
        if spec.format_version != SPEC_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported spec format version {}",
                spec.format_version
            )));
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Per-level action chooser. Levels are 1-based.
pub trait DecisionRule {
    fn act(&self, level: usize, x: ObsId) -> Option<Action>;
}

impl<F> DecisionRule for F
where
    F: Fn(usize, ObsId) -> Option<Action>,
{
    fn act(&self, level: usize, x: ObsId) -> Option<Action> {
        self(level, x)
    }
}

/// A full sampled episode. Hidden states are recorded for test-only
/// inspection and must never be read by learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub state: StateId,
    pub obs: ObsId,
    pub action: Action,
    pub reward: f64,
}

impl Trajectory {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

/// How to choose actions after the fixed prefix in [`CdpSpec::sample_from_path`].
#[derive(Clone, Copy)]
pub enum Tail<'a> {
    /// Take this action at the path's level; stop after observing the successor.
    Fixed(Action),
    /// Uniform action at the path's level; stop after observing the successor.
    Uniform,
    /// Uniform action at the path's level, then the policy to the horizon.
    UniformThenPolicy(&'a dyn DecisionRule),
    /// The policy from the path's level to the horizon.
    Policy(&'a dyn DecisionRule),
}

/// One sampled transition at a level, with the realized tail return.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSample {
    pub x: ObsId,
    pub a: Action,
    pub r: f64,
    pub x_next: Option<ObsId>,
    /// Sum of rewards from this level to wherever the tail stopped.
    pub ret: f64,
    /// Test-only: the hidden state that emitted `x`.
    pub hidden: StateId,
}

/// Ground-truth optimal values of a spec.
#[derive(Debug, Clone)]
pub struct ExactValues {
    q: Vec<Vec<f64>>,
    g: Vec<f64>,
    v_state: Vec<f64>,
    pub v_star: f64,
}

impl ExactValues {
    pub fn q_star(&self, x: ObsId, a: Action) -> f64 {
        self.q[x.0 as usize][a]
    }

    pub fn g_star(&self, x: ObsId) -> f64 {
        self.g[x.0 as usize]
    }

    pub fn v_star_state(&self, s: StateId) -> f64 {
        self.v_state[s.0 as usize]
    }

    /// A greedy optimal stationary rule (lowest action index on ties).
    pub fn greedy_rule(&self) -> impl DecisionRule + '_ {
        move |_level: usize, x: ObsId| -> Option<Action> {
            let row = self.q.get(x.0 as usize)?;
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v > row[best] + 1e-15 {
                    best = a;
                }
            }
            Some(best)
        }
    }
}
