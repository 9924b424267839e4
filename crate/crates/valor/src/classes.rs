//! Value-function and policy classes with evaluation access.
//!
//! A value class is a set of maps `X -> [0, 1]`, a policy class a set of
//! maps `X -> A`. Both come in two shapes: an explicit finite enumeration
//! (a matrix of stored values or actions) and the tabular class of all such
//! maps, which is never enumerated; tabular oracles return concrete
//! per-observation assignments instead. The distinguished one-element class
//! `{x -> 0}` serves as the value class past the final level.

use std::collections::BTreeMap;

use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::cdp::{Action, CdpSpec, ExactValues, ObsId};
use crate::error::{Error, Result};

/// A function handle: either a member of an explicit class or a concrete
/// assignment produced by a tabular oracle. Observations missing from an
/// assignment evaluate to 0 (the arbitrary-but-fixed default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ValueFn {
    Member(usize),
    Assignment(BTreeMap<ObsId, f64>),
    Zero,
}

/// A policy handle. Observations missing from an assignment take action 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PolicyFn {
    Member(usize),
    Assignment(BTreeMap<ObsId, Action>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ValueClass {
    /// Matrix of stored values: `values[fn_id][obs_index]` in `[0, 1]`.
    Explicit { obs: Vec<ObsId>, values: Vec<Vec<f64>> },
    /// All maps from the given observations to `[0, 1]`. Carries no stored
    /// values; it is the full box.
    Tabular { obs: Vec<ObsId> },
    /// The singleton `{x -> 0}`.
    ConstZero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum PolicyClass {
    Explicit {
        obs: Vec<ObsId>,
        num_actions: usize,
        actions: Vec<Vec<Action>>,
    },
    Tabular {
        obs: Vec<ObsId>,
        num_actions: usize,
    },
}

fn index_of(obs: &[ObsId], x: ObsId) -> Option<usize> {
    // Class domains are small; classes built by this crate keep them sorted.
    obs.binary_search(&x).ok().or_else(|| obs.iter().position(|&o| o == x))
}

impl ValueClass {
    pub fn explicit(obs: Vec<ObsId>, values: Vec<Vec<f64>>) -> Result<Self> {
        for row in &values {
            if row.len() != obs.len() {
                return Err(Error::Config("value row length mismatch".into()));
            }
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config("explicit values must lie in [0,1]".into()));
            }
        }
        Ok(ValueClass::Explicit { obs, values })
    }

    pub fn tabular(mut obs: Vec<ObsId>) -> Self {
        obs.sort_unstable();
        ValueClass::Tabular { obs }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            ValueClass::Explicit { values, .. } => Some(values.len()),
            ValueClass::Tabular { .. } => None,
            ValueClass::ConstZero => Some(1),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn domain(&self) -> &[ObsId] {
        match self {
            ValueClass::Explicit { obs, .. } | ValueClass::Tabular { obs } => obs,
            ValueClass::ConstZero => &[],
        }
    }

    /// Evaluate a handle at an observation.
    pub fn eval(&self, f: &ValueFn, x: ObsId) -> Result<f64> {
        match (self, f) {
            (_, ValueFn::Zero) | (ValueClass::ConstZero, _) => Ok(0.0),
            (ValueClass::Explicit { obs, values }, ValueFn::Member(id)) => {
                let row = values.get(*id).ok_or(Error::UnknownHandle)?;
                let i = index_of(obs, x).ok_or(Error::UnknownObservation(x))?;
                Ok(row[i])
            }
            (ValueClass::Tabular { obs }, ValueFn::Assignment(map)) => {
                if index_of(obs, x).is_none() {
                    return Err(Error::UnknownObservation(x));
                }
                Ok(*map.get(&x).unwrap_or(&0.0))
            }
            (ValueClass::Explicit { .. }, ValueFn::Assignment(map)) => {
                Ok(*map.get(&x).unwrap_or(&0.0))
            }
            (ValueClass::Tabular { .. }, ValueFn::Member(_)) => Err(Error::UnknownHandle),
        }
    }
}

impl PolicyClass {
    pub fn explicit(obs: Vec<ObsId>, num_actions: usize, actions: Vec<Vec<Action>>) -> Result<Self> {
        for row in &actions {
            if row.len() != obs.len() {
                return Err(Error::Config("policy row length mismatch".into()));
            }
            if row.iter().any(|&a| a >= num_actions) {
                return Err(Error::Config("action out of range".into()));
            }
        }
        Ok(PolicyClass::Explicit {
            obs,
            num_actions,
            actions,
        })
    }

    pub fn tabular(mut obs: Vec<ObsId>, num_actions: usize) -> Self {
        obs.sort_unstable();
        PolicyClass::Tabular { obs, num_actions }
    }

    pub fn len(&self) -> Option<usize> {
        match self {
            PolicyClass::Explicit { actions, .. } => Some(actions.len()),
            PolicyClass::Tabular { .. } => None,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == Some(0)
    }

    pub fn num_actions(&self) -> usize {
        match self {
            PolicyClass::Explicit { num_actions, .. } | PolicyClass::Tabular { num_actions, .. } => {
                *num_actions
            }
        }
    }

    pub fn act(&self, p: &PolicyFn, x: ObsId) -> Result<Action> {
        match (self, p) {
            (PolicyClass::Explicit { obs, actions, .. }, PolicyFn::Member(id)) => {
                let row = actions.get(*id).ok_or(Error::UnknownHandle)?;
                let i = index_of(obs, x).ok_or(Error::UnknownObservation(x))?;
                Ok(row[i])
            }
            (PolicyClass::Tabular { .. }, PolicyFn::Assignment(map))
            | (PolicyClass::Explicit { .. }, PolicyFn::Assignment(map)) => {
                Ok(*map.get(&x).unwrap_or(&0))
            }
            (PolicyClass::Tabular { .. }, PolicyFn::Member(_)) => Err(Error::UnknownHandle),
        }
    }
}

/// A stationary policy stack: one chosen policy per level, all from the same
/// class. Implements [`crate::cdp::DecisionRule`] through [`StackRule`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyStack {
    pub per_level: Vec<PolicyFn>,
}

pub struct StackRule<'a> {
    pub class: &'a PolicyClass,
    pub stack: &'a PolicyStack,
}

impl crate::cdp::DecisionRule for StackRule<'_> {
    fn act(&self, level: usize, x: ObsId) -> Option<Action> {
        let p = self.stack.per_level.get(level.checked_sub(1)?)?;
        self.class.act(p, x).ok()
    }
}

/// Status of one assumption check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CheckStatus {
    Holds,
    /// Sampled suffix policies only; no counterexample found.
    HoldsSampled,
    Fails { witness: String },
    Inconclusive { reason: String },
    NotChecked,
}

impl CheckStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, CheckStatus::Fails { .. })
    }
}

/// Results of the realizability and completeness checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// The optimal policy is in the policy class.
    pub policy_realizable: CheckStatus,
    /// The optimal value function is in the value class.
    pub value_realizable: CheckStatus,
    /// Closure under one-step greedy policies and value backups.
    pub policy_value_complete: CheckStatus,
    /// Closure under greedy improvement of arbitrary suffix policies.
    pub policy_complete: CheckStatus,
}

impl AssumptionReport {
    pub fn empty() -> Self {
        AssumptionReport {
            policy_realizable: CheckStatus::NotChecked,
            value_realizable: CheckStatus::NotChecked,
            policy_value_complete: CheckStatus::NotChecked,
            policy_complete: CheckStatus::NotChecked,
        }
    }
}

pub const DEFAULT_TOL: f64 = 1e-9;

/// Check that some class member matches the optimal value function and that
/// some policy is everywhere greedy-optimal.
pub fn check_realizability(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    tol: f64,
) -> AssumptionReport {
    let ev = spec.exact_values();
    let mut report = AssumptionReport::empty();
    report.value_realizable = match g_class {
        ValueClass::Tabular { .. } => CheckStatus::Holds,
        ValueClass::ConstZero => {
            if spec.all_observations().all(|x| ev.g_star(x).abs() <= tol) {
                CheckStatus::Holds
            } else {
                CheckStatus::Fails {
                    witness: "nonzero optimal value".into(),
                }
            }
        }
        ValueClass::Explicit { values, .. } => {
            let found = (0..values.len()).find(|&id| {
                spec.all_observations().all(|x| {
                    g_class
                        .eval(&ValueFn::Member(id), x)
                        .map(|v| (v - ev.g_star(x)).abs() <= tol)
                        .unwrap_or(false)
                })
            });
            match found {
                Some(_) => CheckStatus::Holds,
                None => CheckStatus::Fails {
                    witness: first_value_witness(spec, g_class, &ev, tol),
                },
            }
        }
    };
    report.policy_realizable = match pi_class {
        PolicyClass::Tabular { .. } => CheckStatus::Holds,
        PolicyClass::Explicit { actions, .. } => {
            let found = (0..actions.len()).find(|&id| {
                spec.all_observations().all(|x| {
                    pi_class
                        .act(&PolicyFn::Member(id), x)
                        .map(|a| ev.q_star(x, a) >= ev.g_star(x) - tol)
                        .unwrap_or(false)
                })
            });
            match found {
                Some(_) => CheckStatus::Holds,
                None => CheckStatus::Fails {
                    witness: "no policy attains the greedy action set everywhere".into(),
                },
            }
        }
    };
    report
}

fn first_value_witness(spec: &CdpSpec, g: &ValueClass, ev: &ExactValues, tol: f64) -> String {
    // Most useful witness: the observation where the closest member misses.
    let mut best: Option<(usize, f64, ObsId)> = None;
    if let ValueClass::Explicit { values, .. } = g {
        for id in 0..values.len() {
            let mut worst = (0.0, ObsId(0));
            for x in spec.all_observations() {
                let v = g.eval(&ValueFn::Member(id), x).unwrap_or(f64::NAN);
                let d = (v - ev.g_star(x)).abs();
                if d > worst.0 {
                    worst = (d, x);
                }
            }
            if best.map(|(_, d, _)| worst.0 < d).unwrap_or(true) {
                best = Some((id, worst.0, worst.1));
            }
        }
    }
    match best {
        Some((id, d, x)) => format!(
            "closest member {id} misses optimal value at observation {} by {d:.6} (tol {tol})",
            x.0
        ),
        None => "empty class".into(),
    }
}

/// Backup of a next-level function through the model: for each observation
/// at `level`, the maximum over actions of expected reward plus expected
/// next value, together with the greedy action set.
///
/// The backup value is projected onto `[0, 1]`, the range of every value
/// class here; the projection is the box-constrained least-squares fit of
/// the raw backup target.
fn backup_at_level(
    spec: &CdpSpec,
    g_next: &dyn Fn(ObsId) -> f64,
    level: usize,
    tol: f64,
) -> BTreeMap<ObsId, (f64, Vec<Action>)> {
    let mut out = BTreeMap::new();
    for x in spec.observations_at(level) {
        let ob = spec.obs(x);
        let st = spec.state(ob.state);
        let mut q = Vec::with_capacity(spec.num_actions);
        for a in 0..spec.num_actions {
            let mut v = ob.rewards[a].mean;
            if level < spec.horizon {
                for &(nid, p) in &st.transitions[a].support {
                    let next = crate::cdp::StateId(nid);
                    for &(oid, po) in &spec.state(next).emission.support {
                        v += p * po * g_next(ObsId(oid));
                    }
                }
            }
            q.push(v);
        }
        let best = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let greedy = (0..spec.num_actions).filter(|&a| q[a] >= best - tol).collect();
        out.insert(x, (best.clamp(0.0, 1.0), greedy));
    }
    out
}

fn explicit_fn_values<'a>(
    class: &'a ValueClass,
    id: usize,
) -> Option<impl Fn(ObsId) -> f64 + 'a> {
    match class {
        ValueClass::Explicit { .. } => Some(move |x: ObsId| {
            class.eval(&ValueFn::Member(id), x).unwrap_or(0.0)
        }),
        _ => None,
    }
}

/// Budget for the completeness enumeration.
#[derive(Debug, Clone, Copy)]
pub struct CompletenessBudget {
    /// Random nonstationary suffixes sampled per level for the policy
    /// completeness check.
    pub random_suffixes: usize,
    /// Cap on suffix-policy value evaluations before reporting inconclusive.
    pub max_evaluations: usize,
}

impl Default for CompletenessBudget {
    fn default() -> Self {
        CompletenessBudget {
            random_suffixes: 16,
            max_evaluations: 200_000,
        }
    }
}

/// Check policy-value completeness and (sampled) policy completeness.
///
/// Tabular classes are complete by construction and short-circuit to Holds.
/// The policy completeness check quantifies over exponentially many suffix
/// policies; it samples `budget.random_suffixes` random suffixes plus all
/// one-policy stationary suffixes, and reports a sampled verdict.
pub fn check_completeness(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    tol: f64,
    budget: CompletenessBudget,
    rng: &mut ChaCha12Rng,
) -> Result<AssumptionReport> {
    let mut report = AssumptionReport::empty();

    let tabular_g = matches!(g_class, ValueClass::Tabular { .. });
    let tabular_pi = matches!(pi_class, PolicyClass::Tabular { .. });

    report.policy_value_complete = if tabular_g && tabular_pi {
        CheckStatus::Holds
    } else if tabular_g {
        // The value side is the full box, but the greedy maps of its
        // (uncountably many) members cannot be enumerated against an
        // explicit policy class.
        CheckStatus::Inconclusive {
            reason: "tabular value class with explicit policy class".into(),
        }
    } else {
        check_polval_explicit(spec, g_class, pi_class, tol)?
    };

    report.policy_complete = if tabular_pi {
        CheckStatus::Holds
    } else {
        check_policy_complete_sampled(spec, pi_class, tol, budget, rng)?
    };

    Ok(report)
}

fn greedy_realizable(
    _spec: &CdpSpec,
    pi_class: &PolicyClass,
    greedy: &BTreeMap<ObsId, (f64, Vec<Action>)>,
) -> Option<usize> {
    match pi_class {
        PolicyClass::Tabular { .. } => Some(usize::MAX),
        PolicyClass::Explicit { actions, .. } => (0..actions.len()).find(|&id| {
            greedy.iter().all(|(&x, (_, acts))| {
                pi_class
                    .act(&PolicyFn::Member(id), x)
                    .map(|a| acts.contains(&a))
                    .unwrap_or(false)
            })
        }),
    }
}

fn backup_realizable(
    g_class: &ValueClass,
    backup: &BTreeMap<ObsId, (f64, Vec<Action>)>,
    tol: f64,
) -> Option<usize> {
    match g_class {
        ValueClass::Tabular { .. } => Some(usize::MAX),
        ValueClass::ConstZero => {
            if backup.values().all(|(v, _)| v.abs() <= tol) {
                Some(0)
            } else {
                None
            }
        }
        ValueClass::Explicit { values, .. } => (0..values.len()).find(|&id| {
            backup.iter().all(|(&x, &(v, _))| {
                g_class
                    .eval(&ValueFn::Member(id), x)
                    .map(|gv| (gv - v).abs() <= tol)
                    .unwrap_or(false)
            })
        }),
    }
}

fn check_polval_explicit(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    tol: f64,
) -> Result<CheckStatus> {
    // For every next-level function (class members at levels below the
    // horizon, the zero function at the last level), the induced greedy
    // policy and induced backup must be in the classes.
    for h in (1..=spec.horizon).rev() {
        let next_fns: Vec<Box<dyn Fn(ObsId) -> f64>> = if h == spec.horizon {
            vec![Box::new(|_| 0.0)]
        } else {
            match g_class {
                ValueClass::Tabular { .. } => {
                    return Err(Error::Config(
                        "tabular value classes are not enumerable here".into(),
                    ))
                }
                ValueClass::ConstZero => vec![Box::new(|_| 0.0)],
                ValueClass::Explicit { values, .. } => (0..values.len())
                    .map(|id| {
                        let f = explicit_fn_values(g_class, id).expect("explicit");
                        Box::new(f) as Box<dyn Fn(ObsId) -> f64>
                    })
                    .collect(),
            }
        };
        for (gid, g_next) in next_fns.iter().enumerate() {
            let backup = backup_at_level(spec, g_next.as_ref(), h, tol);
            if greedy_realizable(spec, pi_class, &backup).is_none() {
                return Ok(CheckStatus::Fails {
                    witness: format!(
                        "no policy realizes the greedy map of function {gid} at level {h}"
                    ),
                });
            }
            if backup_realizable(g_class, &backup, tol).is_none() {
                let (x, (v, _)) = backup.iter().next().expect("nonempty level");
                return Ok(CheckStatus::Fails {
                    witness: format!(
                        "no function realizes the backup of function {gid} at level {h} \
                         (e.g. observation {} needs value {v:.6})",
                        x.0
                    ),
                });
            }
        }
    }
    Ok(CheckStatus::Holds)
}

fn check_policy_complete_sampled(
    spec: &CdpSpec,
    pi_class: &PolicyClass,
    tol: f64,
    budget: CompletenessBudget,
    rng: &mut ChaCha12Rng,
) -> Result<CheckStatus> {
    let n_members = match pi_class {
        PolicyClass::Explicit { actions, .. } => actions.len(),
        PolicyClass::Tabular { .. } => return Ok(CheckStatus::Holds),
    };
    if n_members == 0 {
        return Ok(CheckStatus::Fails {
            witness: "empty policy class".into(),
        });
    }
    let mut evaluations = 0usize;
    let mut sampled_any = false;
    for h in (1..=spec.horizon).rev() {
        let suffix_len = spec.horizon - h;
        // All stationary suffixes, plus random nonstationary ones.
        let mut suffixes: Vec<Vec<usize>> = (0..n_members).map(|id| vec![id; suffix_len]).collect();
        if suffix_len > 1 {
            sampled_any = true;
            for _ in 0..budget.random_suffixes {
                suffixes.push((0..suffix_len).map(|_| rng.random_range(0..n_members)).collect());
            }
        }
        for suffix in suffixes {
            evaluations += 1;
            if evaluations > budget.max_evaluations {
                return Ok(CheckStatus::Inconclusive {
                    reason: format!("budget of {} evaluations exceeded", budget.max_evaluations),
                });
            }
            let q = suffix_policy_q(spec, pi_class, h, &suffix)?;
            let greedy: BTreeMap<ObsId, (f64, Vec<Action>)> = q
                .iter()
                .map(|(&x, row)| {
                    let best = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let acts = (0..row.len()).filter(|&a| row[a] >= best - tol).collect();
                    (x, (best, acts))
                })
                .collect();
            if greedy_realizable(spec, pi_class, &greedy).is_none() {
                return Ok(CheckStatus::Fails {
                    witness: format!("no greedy improvement of suffix {suffix:?} at level {h}"),
                });
            }
        }
    }
    Ok(if sampled_any {
        CheckStatus::HoldsSampled
    } else {
        CheckStatus::Holds
    })
}

/// Q-values at `level` for following member suffix policies afterwards.
fn suffix_policy_q(
    spec: &CdpSpec,
    pi_class: &PolicyClass,
    level: usize,
    suffix: &[usize],
) -> Result<BTreeMap<ObsId, Vec<f64>>> {
    let stack = PolicyStack {
        per_level: (1..=spec.horizon)
            .map(|h| {
                if h > level && h - level <= suffix.len() {
                    PolicyFn::Member(suffix[h - level - 1])
                } else {
                    PolicyFn::Member(0)
                }
            })
            .collect(),
    };
    let rule = StackRule {
        class: pi_class,
        stack: &stack,
    };
    let mut out = BTreeMap::new();
    for x in spec.observations_at(level) {
        let ob = spec.obs(x);
        let st = spec.state(ob.state);
        let mut row = Vec::with_capacity(spec.num_actions);
        for a in 0..spec.num_actions {
            let mut v = ob.rewards[a].mean;
            if level < spec.horizon {
                for &(nid, p) in &st.transitions[a].support {
                    v += p * spec.policy_value_from(crate::cdp::StateId(nid), &rule)?;
                }
            }
            row.push(v);
        }
        out.insert(x, row);
    }
    Ok(out)
}

/// Close explicit classes under greedy policies and value backups, so that
/// policy-value completeness holds on this spec.
///
/// Adds, for every function in the closure, its one-step backup through the
/// model and the induced globally greedy policy, iterating to a fixpoint.
pub fn close_classes(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    max_added: usize,
) -> Result<(ValueClass, PolicyClass, AssumptionReport)> {
    let (obs_g, mut values) = match g_class {
        ValueClass::Explicit { obs, values } => (obs.clone(), values.clone()),
        _ => return Err(Error::Config("close_classes needs explicit classes".into())),
    };
    let (obs_pi, num_actions, mut actions) = match pi_class {
        PolicyClass::Explicit {
            obs,
            num_actions,
            actions,
        } => (obs.clone(), *num_actions, actions.clone()),
        _ => return Err(Error::Config("close_classes needs explicit classes".into())),
    };
    if actions.is_empty() {
        return Err(Error::Config("cannot close an empty policy class".into()));
    }

    let obs_index: BTreeMap<ObsId, usize> = obs_g.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let tol = DEFAULT_TOL;
    let mut added = 0usize;
    let mut frontier: Vec<Vec<f64>> = values.clone();
    while !frontier.is_empty() {
        let mut next_frontier = Vec::new();
        for fvals in frontier {
            // Global one-step backup of this function.
            let g_next = |x: ObsId| fvals[obs_index[&x]];
            let mut backed = vec![0.0; obs_g.len()];
            let mut greedy_row = vec![0usize; obs_pi.len()];
            for h in 1..=spec.horizon {
                let backup = backup_at_level(spec, &g_next, h, tol);
                for (x, (v, acts)) in backup {
                    backed[obs_index[&x]] = v;
                    if let Some(i) = obs_pi.iter().position(|&o| o == x) {
                        greedy_row[i] = acts.into_iter().min().expect("nonempty greedy set");
                    }
                }
            }
            let have_g = values
                .iter()
                .any(|row| row.iter().zip(&backed).all(|(a, b)| (a - b).abs() <= tol));
            if !have_g {
                added += 1;
                if added > max_added {
                    return Err(Error::BudgetExceeded(format!(
                        "closure still missing a backup after adding {max_added} functions"
                    )));
                }
                values.push(backed.clone());
                next_frontier.push(backed);
            }
            if !actions.contains(&greedy_row) {
                actions.push(greedy_row);
            }
        }
        frontier = next_frontier;
    }

    let g_closed = ValueClass::Explicit {
        obs: obs_g,
        values,
    };
    let pi_closed = PolicyClass::Explicit {
        obs: obs_pi,
        num_actions,
        actions,
    };
    let report = check_polval_explicit(spec, &g_closed, &pi_closed, tol).map(|status| {
        let mut r = AssumptionReport::empty();
        r.policy_value_complete = status;
        r
    })?;
    Ok((g_closed, pi_closed, report))
}

/// Build explicit classes containing the optimal pair plus i.i.d. uniform
/// distractors: distractor values uniform in `[0, 1]` per observation,
/// distractor actions uniform. The optimal members sit at seeded random
/// indices so index-based tie breaking carries no information.
pub fn synthesize_classes(
    spec: &CdpSpec,
    n_distractors: usize,
    rng: &mut ChaCha12Rng,
) -> (ValueClass, PolicyClass) {
    let ev = spec.exact_values();
    let obs: Vec<ObsId> = spec.all_observations().collect();
    let k = spec.num_actions;

    let g_star_row: Vec<f64> = obs.iter().map(|&x| ev.g_star(x)).collect();
    let pi_star_row: Vec<Action> = obs
        .iter()
        .map(|&x| {
            (0..k)
                .find(|&a| ev.q_star(x, a) >= ev.g_star(x) - 1e-12)
                .unwrap_or(0)
        })
        .collect();

    let mut values: Vec<Vec<f64>> = (0..n_distractors)
        .map(|_| obs.iter().map(|_| rng.random::<f64>()).collect())
        .collect();
    let mut actions: Vec<Vec<Action>> = (0..n_distractors)
        .map(|_| obs.iter().map(|_| rng.random_range(0..k)).collect())
        .collect();
    let gi = rng.random_range(0..=values.len());
    values.insert(gi, g_star_row);
    let pi = rng.random_range(0..=actions.len());
    actions.insert(pi, pi_star_row);

    (
        ValueClass::Explicit { obs: obs.clone(), values },
        PolicyClass::Explicit {
            obs,
            num_actions: k,
            actions,
        },
    )
}
