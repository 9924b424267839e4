//! Three small constructions where natural decoupled learning rules fail:
//! a two-chain process on which backward value fitting amplifies terminal
//! noise, a needle-in-a-haystack process on which average-value constraints
//! stall exploration, and a rare-observation process on which square-loss
//! scoring cannot separate the optimal value function from a bad one.

use rand_chacha::ChaCha12Rng;

use crate::cdp::builders;
use crate::cdp::{CdpSpec, ObsId, StateId};
use crate::classes::{PolicyClass, PolicyFn, PolicyStack, ValueClass, ValueFn};
use crate::error::{Error, Result};

/// The two-chain process with its two-function value class and two-policy
/// class. Function 0 / policy 0 are the optimal members; function 1 and
/// policy 1 are the adversarial ones.
#[derive(Debug, Clone)]
pub struct BackupChain {
    pub spec: CdpSpec,
    pub g_class: ValueClass,
    pub pi_class: PolicyClass,
    pub chain_len: usize,
    pub eps: f64,
}

/// Build the chain with `chain_len` paired levels and terminal gap `eps`.
///
/// Both value functions agree on the rewarding chain and at the start; the
/// bad function over-predicts the other chain by `eps / 2^(h-1)` at pair
/// level `h`, halving per level, so one unlucky terminal estimate keeps it
/// tied all the way back.
pub fn build_backup_chain(chain_len: usize, eps: f64) -> Result<BackupChain> {
    let spec = builders::backup_chain(chain_len, eps)?;
    let obs: Vec<ObsId> = spec.all_observations().collect();
    // Observation ids: 0 = start, then (a, b) pairs per level.
    let value_at = |x: ObsId, bad: bool| -> f64 {
        if x.0 == 0 {
            0.5 + eps
        } else {
            let idx = (x.0 - 1) as usize;
            let pair_level = idx / 2 + 1; // 1-based chain level
            if idx % 2 == 0 {
                0.5 + eps
            } else if bad {
                0.5 + eps / 2f64.powi(pair_level as i32 - 1)
            } else {
                0.5
            }
        }
    };
    let g_star: Vec<f64> = obs.iter().map(|&x| value_at(x, false)).collect();
    let g_bad: Vec<f64> = obs.iter().map(|&x| value_at(x, true)).collect();
    let g_class = ValueClass::explicit(obs.clone(), vec![g_star, g_bad])?;
    // Policy 0 always picks the rewarding branch, policy 1 the other one;
    // they only differ at the start observation.
    let pi_a: Vec<usize> = obs.iter().map(|_| 0).collect();
    let pi_b: Vec<usize> = obs.iter().map(|&x| usize::from(x.0 == 0)).collect();
    let pi_class = PolicyClass::explicit(obs, 2, vec![pi_a, pi_b])?;
    Ok(BackupChain {
        spec,
        g_class,
        pi_class,
        chain_len,
        eps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleMode {
    /// Draw this many samples per state.
    Samples(usize),
    /// Use exact expectations (the infinite-sample limit).
    Exact,
}

/// How exact ties in the fitting steps are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Lowest member index wins.
    LowestIndex,
    /// Highest member index wins; the barrier classes order their
    /// adversarial member last, making this the adversarial resolution.
    HighestIndex,
}

/// Relative tie tolerance for the fitting comparisons: the exact ties of
/// the two-chain construction survive summation rounding, while genuine
/// score gaps are many orders of magnitude wider.
const TIE_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct BackupRunDiag {
    /// Chosen value-function index per level, front to back.
    pub chosen_g: Vec<usize>,
    pub chosen_policy: Vec<usize>,
}

/// Backward policy/value fitting with per-state sampling.
///
/// For every state, `n` observations are drawn with per-action reward and
/// successor draws (exact expectations in the limit mode). Levels are
/// processed back to front: the policy maximizes the summed conditional
/// estimate of reward plus fitted next value, then the value function
/// minimizes the summed conditional squared error against the same target.
/// Requires direct state access, so this is an analysis-mode procedure for
/// studying the fitting rule in isolation.
pub fn bellman_backup(
    spec: &CdpSpec,
    g_class: &ValueClass,
    pi_class: &PolicyClass,
    mode: SampleMode,
    tie: TieBreak,
    rng: &mut ChaCha12Rng,
) -> Result<(PolicyStack, BackupRunDiag)> {
    let (g_len, pi_len) = match (g_class, pi_class) {
        (ValueClass::Explicit { values, .. }, PolicyClass::Explicit { actions, .. }) => {
            (values.len(), actions.len())
        }
        _ => {
            return Err(Error::Config(
                "backward fitting needs explicit finite classes".into(),
            ))
        }
    };
    let k = spec.num_actions;
    let margin = |a: f64, b: f64| TIE_TOL * (1.0 + a.abs() + b.abs());
    let better = move |cand: f64, best: f64, maximize: bool| -> bool {
        if maximize {
            cand > best + margin(cand, best)
        } else {
            cand < best - margin(cand, best)
        }
    };
    let tied = move |cand: f64, best: f64| (cand - best).abs() <= margin(cand, best);

    // Per level and observation-action pair, sufficient statistics of the
    // fitted target t = r + g_next(x'): weight, weighted sum, weighted sum
    // of squares. Both fitting steps decompose over these. In exact mode
    // the target variance is a function-independent constant and is
    // dropped, which preserves the ordering and the exact ties.
    #[derive(Default, Clone, Copy)]
    struct Stat {
        w: f64,
        t: f64,
        tt: f64,
    }

    let mut g_next: Option<usize> = None; // None = zero function past the end
    let mut chosen_g = vec![0usize; spec.horizon];
    let mut chosen_policy = vec![0usize; spec.horizon];
    for h in (1..=spec.horizon).rev() {
        // next-value lookup table, indexed by raw observation id
        let mut g_next_table = vec![0.0; spec.observations.len()];
        if let Some(id) = g_next {
            for x2 in spec.observations_at(h + 1) {
                g_next_table[x2.0 as usize] = g_class.eval(&ValueFn::Member(id), x2)?;
            }
        }
        let mut stats: Vec<Vec<Stat>> = vec![Vec::new(); spec.observations.len()];
        let mut seen: Vec<ObsId> = Vec::new();
        for s in spec.states_at(h) {
            let st = spec.state(s);
            match mode {
                SampleMode::Exact => {
                    for &(oid, po) in &st.emission.support {
                        let x = ObsId(oid);
                        if stats[oid as usize].is_empty() {
                            stats[oid as usize] = vec![Stat::default(); k];
                            seen.push(x);
                        }
                        for a in 0..k {
                            let mut t = spec.obs(x).rewards[a].mean;
                            if h < spec.horizon {
                                for &(nid, pt) in &st.transitions[a].support {
                                    for &(noid, npo) in &spec.state(StateId(nid)).emission.support
                                    {
                                        t += pt * npo * g_next_table[noid as usize];
                                    }
                                }
                            }
                            let slot = &mut stats[oid as usize][a];
                            slot.w += po;
                            slot.t += po * t;
                            slot.tt += po * t * t;
                        }
                    }
                }
                SampleMode::Samples(n) => {
                    for _ in 0..n {
                        let oid = st.emission.sample(rng);
                        if stats[oid as usize].is_empty() {
                            stats[oid as usize] = vec![Stat::default(); k];
                            seen.push(ObsId(oid));
                        }
                        let ob = spec.obs(ObsId(oid));
                        for a in 0..k {
                            let mut t = ob.rewards[a].sample(rng);
                            if h < spec.horizon {
                                let s2 = StateId(st.transitions[a].sample(rng));
                                t += g_next_table[spec.state(s2).emission.sample(rng) as usize];
                            }
                            let slot = &mut stats[oid as usize][a];
                            slot.w += 1.0;
                            slot.t += t;
                            slot.tt += t * t;
                        }
                    }
                }
            }
        }

        // Policy step: maximize the summed mean target under the policy.
        let mut best_pi = 0usize;
        let mut best_val = f64::NEG_INFINITY;
        for pid in 0..pi_len {
            let p = PolicyFn::Member(pid);
            let mut total = 0.0;
            for &x in &seen {
                total += stats[x.0 as usize][pi_class.act(&p, x)?].t;
            }
            let take = pid == 0
                || better(total, best_val, true)
                || (tied(total, best_val) && tie == TieBreak::HighestIndex);
            if take {
                best_pi = pid;
                if total > best_val {
                    best_val = total;
                }
            }
        }
        let policy = PolicyFn::Member(best_pi);

        // Value step: minimize the summed squared error against the chosen
        // policy's targets.
        let mut best_g = 0usize;
        let mut best_loss = f64::INFINITY;
        for gid in 0..g_len {
            let gf = ValueFn::Member(gid);
            let mut loss = 0.0;
            for &x in &seen {
                let st = &stats[x.0 as usize][pi_class.act(&policy, x)?];
                let g = g_class.eval(&gf, x)?;
                loss += st.w * g * g - 2.0 * g * st.t + st.tt;
            }
            let take = gid == 0
                || better(loss, best_loss, false)
                || (tied(loss, best_loss) && tie == TieBreak::HighestIndex);
            if take {
                best_g = gid;
                if loss < best_loss {
                    best_loss = loss;
                }
            }
        }
        g_next = Some(best_g);
        chosen_g[h - 1] = best_g;
        chosen_policy[h - 1] = best_pi;
    }

    let per_level = (1..=spec.horizon)
        .map(|h| PolicyFn::Member(chosen_policy[h - 1]))
        .collect();
    Ok((
        PolicyStack { per_level },
        BackupRunDiag {
            chosen_g,
            chosen_policy,
        },
    ))
}

/// The needle process: one of many policies is good, the rest induce the
/// uniform mixture over a high- and a low-value successor.
#[derive(Debug, Clone)]
pub struct NeedleEnv {
    pub spec: CdpSpec,
    pub pi_class: PolicyClass,
    /// Index of the optimal policy in the class.
    pub optimal_policy: usize,
    pub num_contexts: usize,
}

/// Build the needle environment with `m` level-1 contexts. The policy
/// class holds the always-good policy plus all balanced policies (half the
/// contexts to each action), capped at `2^m` members.
pub fn build_needle_env(m: usize) -> Result<NeedleEnv> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::Config("need an even number of contexts".into()));
    }
    let spec = builders::needle(m)?;
    let obs: Vec<ObsId> = spec.all_observations().collect();
    let mut rows: Vec<Vec<usize>> = Vec::new();
    // optimal policy first: always action 0
    rows.push(obs.iter().map(|_| 0).collect());
    // balanced policies: choose m/2 contexts for action 1
    let cap = 1usize << m.min(20);
    let mut chooser = vec![false; m];
    fn balanced(
        idx: usize,
        ones: usize,
        m: usize,
        chooser: &mut Vec<bool>,
        rows: &mut Vec<Vec<usize>>,
        obs_len: usize,
        cap: usize,
    ) {
        if rows.len() > cap {
            return;
        }
        if idx == m {
            if ones == m / 2 {
                let mut row: Vec<usize> = (0..m).map(|i| usize::from(chooser[i])).collect();
                row.extend(std::iter::repeat_n(0, obs_len - m));
                rows.push(row);
            }
            return;
        }
        chooser[idx] = false;
        balanced(idx + 1, ones, m, chooser, rows, obs_len, cap);
        chooser[idx] = true;
        balanced(idx + 1, ones + 1, m, chooser, rows, obs_len, cap);
        chooser[idx] = false;
    }
    balanced(0, 0, m, &mut chooser, &mut rows, obs.len(), cap);
    let pi_class = PolicyClass::explicit(obs, 2, rows)?;
    Ok(NeedleEnv {
        spec,
        pi_class,
        optimal_policy: 0,
        num_contexts: m,
    })
}

/// Outcome of the average-constraint explorer demonstration.
#[derive(Debug, Clone)]
pub struct NeedleReport {
    /// Exact suboptimality of the policy the explorer settles on.
    pub suboptimality: f64,
    /// New exploration distributions issued after the first constraint.
    pub new_distributions: usize,
    /// Whether the chosen policy stayed fixed across all iterations.
    pub stagnated: bool,
    pub iterations: usize,
}

/// Run the average-constraint explorer on the needle environment with
/// exact expectations.
///
/// The explorer keeps roll-in distributions over the two successor states
/// with pinned average values. It starts from one bad roll-in (the uniform
/// mixture, pinned to 1/2), picks the feasible value function that is flat
/// across the successors, scores every policy by expected reward plus that
/// future value, breaks the resulting tie adversarially against the
/// optimal policy, and checks whether the chosen policy's exact value
/// matches its optimistic score; if so it stops issuing new distributions.
pub fn needle_explorer(env: &NeedleEnv, iterations: usize) -> Result<NeedleReport> {
    let spec = &env.spec;
    let ev = spec.exact_values();
    // roll-in constraints: (distribution over the two successor states,
    // pinned average of the optimal value function)
    let good = StateId(1);
    let bad = StateId(2);
    let mut constraints: Vec<([f64; 2], f64)> = Vec::new();
    let uniform = [0.5, 0.5];
    let pinned = 0.5 * ev.v_star_state(good) + 0.5 * ev.v_star_state(bad);
    constraints.push((uniform, pinned));

    let mut new_distributions = 0usize;
    let mut chosen: Option<usize> = None;
    let mut stagnated = true;
    for _ in 0..iterations {
        // flat feasible value function: one value v per successor with
        // dist . (v, v) = pinned for every constraint
        let v_flat = constraints
            .iter()
            .map(|&(_, pin)| pin)
            .fold(f64::NAN, |acc, p| if acc.is_nan() { p } else { acc });
        let g_hat = [v_flat, v_flat];
        // score every policy by exact expected reward plus flat future
        let mut best = f64::NEG_INFINITY;
        let mut scores = Vec::new();
        for pid in 0..env.pi_class.len().unwrap() {
            let p = PolicyFn::Member(pid);
            let mut score = 0.0;
            for &(oid, po) in &spec.state(StateId(0)).emission.support {
                let x = ObsId(oid);
                let a = env.pi_class.act(&p, x)?;
                let r = spec.obs(x).rewards[a].mean;
                let succ = if a == 0 { 0 } else { 1 };
                score += po * (r + g_hat[succ]);
            }
            best = best.max(score);
            scores.push(score);
        }
        // adversarial tie break: the first non-optimal policy among the
        // maximizers
        let pick = scores
            .iter()
            .enumerate()
            .filter(|&(_, &s)| (s - best).abs() <= 1e-12)
            .map(|(i, _)| i)
            .find(|&i| i != env.optimal_policy)
            .or_else(|| {
                scores
                    .iter()
                    .position(|&s| (s - best).abs() <= 1e-12)
            })
            .expect("nonempty class");
        if let Some(prev) = chosen {
            if prev != pick {
                stagnated = false;
            }
        }
        chosen = Some(pick);
        // exact value of the chosen policy
        let p = PolicyFn::Member(pick);
        let mut value = 0.0;
        let mut rollin = [0.0, 0.0];
        for &(oid, po) in &spec.state(StateId(0)).emission.support {
            let x = ObsId(oid);
            let a = env.pi_class.act(&p, x)?;
            let succ = if a == 0 { 0 } else { 1 };
            rollin[succ] += po;
            value += po
                * (spec.obs(x).rewards[a].mean
                    + ev.v_star_state(if a == 0 { good } else { bad }));
        }
        // optimistic score achieved: no exploration. Otherwise the roll-in
        // distribution would be added as a new constraint (if new).
        if (best - value).abs() > 1e-12 {
            let is_new = constraints
                .iter()
                .all(|&(d, _)| (d[0] - rollin[0]).abs() > 1e-9);
            if is_new {
                new_distributions += 1;
                let pin = rollin[0] * ev.v_star_state(good) + rollin[1] * ev.v_star_state(bad);
                constraints.push((rollin, pin));
            }
        }
    }
    let final_policy = PolicyFn::Member(chosen.expect("at least one iteration"));
    let rule = |level: usize, x: ObsId| -> Option<usize> {
        let _ = level;
        env.pi_class.act(&final_policy, x).ok()
    };
    let suboptimality = ev.v_star - spec.policy_value(&rule)?;
    Ok(NeedleReport {
        suboptimality,
        new_distributions,
        stagnated,
        iterations,
    })
}

/// The rare-observation process with its three-function value class.
#[derive(Debug, Clone)]
pub struct RareRewardEnv {
    pub spec: CdpSpec,
    pub eps: f64,
    /// Function ids: 0 the all-zero function, 1 the optimal value
    /// function, 2 the flat `sqrt(eps)` function.
    pub g_class: ValueClass,
    /// The near-optimal policy that always picks the zero-reward action.
    pub pi_hat: PolicyFn,
}

pub fn build_rare_reward_env(eps: f64) -> Result<RareRewardEnv> {
    let spec = builders::rare_reward(eps)?;
    let obs: Vec<ObsId> = spec.all_observations().collect();
    let root = eps.sqrt();
    let g_class = ValueClass::explicit(
        obs.clone(),
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![root, root]],
    )?;
    let mut map = std::collections::BTreeMap::new();
    for &x in &obs {
        map.insert(x, 1usize);
    }
    Ok(RareRewardEnv {
        spec,
        eps,
        g_class,
        pi_hat: PolicyFn::Assignment(map),
    })
}

impl RareRewardEnv {
    /// Exact square loss of a class member against the roll-out reward of
    /// the near-optimal policy.
    pub fn sqloss(&self, fn_id: usize) -> Result<f64> {
        let f = ValueFn::Member(fn_id);
        let pi_class = PolicyClass::tabular(
            self.spec.all_observations().collect(),
            self.spec.num_actions,
        );
        let mut total = 0.0;
        for &(oid, po) in &self.spec.state(StateId(0)).emission.support {
            let x = ObsId(oid);
            let a = pi_class.act(&self.pi_hat, x)?;
            let rd = self.spec.obs(x).rewards[a];
            let g = self.g_class.eval(&f, x)?;
            // E[(g - r)^2] with r Bernoulli or constant of mean rd.mean
            let var = if rd.deterministic {
                0.0
            } else {
                rd.mean * (1.0 - rd.mean)
            };
            let diff = g - rd.mean;
            total += po * (diff * diff + var);
        }
        Ok(total)
    }

    /// Expected gap between the flat function and the optimal one over the
    /// single state's emission.
    pub fn expected_gap(&self) -> Result<f64> {
        let mut total = 0.0;
        for &(oid, po) in &self.spec.state(StateId(0)).emission.support {
            let x = ObsId(oid);
            total += po
                * (self.g_class.eval(&ValueFn::Member(2), x)?
                    - self.g_class.eval(&ValueFn::Member(1), x)?);
        }
        Ok(total)
    }
}
