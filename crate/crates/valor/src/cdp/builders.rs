//! Builders for named environments and randomized benchmark processes.
//!
//! The random builders cap per-level Bernoulli reward means at `scale / H`
//! so the unit reward budget holds under any policy. The counterexample
//! environments (backup chain, needle, rare reward) place their reward mass
//! on a single level and stay within the budget by construction.

use rand::RngExt;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{Categorical, CdpSpec, ObsSpec, RewardDist, StateId, StateSpec, SPEC_FORMAT_VERSION};
use crate::error::{Error, Result};

/// Parameters of a random deterministic-dynamics process.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RandomCdpParams {
    pub horizon: usize,
    pub num_actions: usize,
    /// Hidden states per level (level 1 always has a single state so that
    /// the process is deterministic from the start).
    pub states_per_level: usize,
    pub obs_per_level: usize,
    /// Per-level reward means are drawn from `[0, scale / horizon]`.
    pub reward_scale: f64,
}

impl Default for RandomCdpParams {
    fn default() -> Self {
        RandomCdpParams {
            horizon: 3,
            num_actions: 3,
            states_per_level: 4,
            obs_per_level: 12,
            reward_scale: 1.0,
        }
    }
}

/// Random layered process with deterministic hidden-state dynamics,
/// stochastic emissions over disjoint per-state observation blocks, and
/// Bernoulli rewards. Every state is reachable from the initial state.
pub fn random_deterministic(params: &RandomCdpParams, rng: &mut ChaCha12Rng) -> Result<CdpSpec> {
    if params.horizon < 1 || params.num_actions < 1 || params.states_per_level < 1 {
        return Err(Error::Config("degenerate random-process parameters".into()));
    }
    let h_max = params.horizon;
    let k = params.num_actions;
    let mut states: Vec<StateSpec> = Vec::new();
    let mut observations: Vec<ObsSpec> = Vec::new();
    let mut level_states: Vec<Vec<u32>> = Vec::new();

    let mut prev_count = 1usize;
    for h in 1..=h_max {
        // Reachability caps the level width at prev_count * K.
        let count = if h == 1 {
            1
        } else {
            params.states_per_level.min(prev_count.saturating_mul(k))
        };
        prev_count = count;
        let mut ids = Vec::new();
        for _ in 0..count {
            let sid = states.len() as u32;
            ids.push(sid);
            states.push(StateSpec {
                level: h,
                emission: Categorical::point(0), // placeholder
                transitions: vec![],
            });
        }
        level_states.push(ids);
    }

    // Deterministic transitions. Every next-level state gets at least one
    // incoming edge, remaining edges are uniform random.
    for h in 1..h_max {
        let next = level_states[h].clone();
        let cur = level_states[h - 1].clone();
        let mut edges: Vec<(u32, usize)> = cur
            .iter()
            .flat_map(|&s| (0..k).map(move |a| (s, a)))
            .collect();
        // Shuffle edge order so coverage targets are not tied to indices.
        for i in (1..edges.len()).rev() {
            let j = rng.random_range(0..=i);
            edges.swap(i, j);
        }
        for (i, &(s, a)) in edges.iter().enumerate() {
            let target = if i < next.len() {
                next[i]
            } else {
                next[rng.random_range(0..next.len())]
            };
            let st = &mut states[s as usize];
            if st.transitions.is_empty() {
                st.transitions = vec![Categorical::point(0); k];
            }
            st.transitions[a] = Categorical::point(target);
        }
        if next.len() > edges.len() {
            return Err(Error::Config(
                "not enough state-action pairs to reach every state".into(),
            ));
        }
    }

    // Observation blocks per state and random emissions.
    let max_mean = params.reward_scale / h_max as f64;
    for h in 1..=h_max {
        let ids = &level_states[h - 1];
        let per_state = (params.obs_per_level / ids.len()).max(1);
        for &sid in ids {
            let mut block = Vec::new();
            for _ in 0..per_state {
                let oid = observations.len() as u32;
                let rewards = (0..k)
                    .map(|_| RewardDist::bernoulli(rng.random::<f64>() * max_mean))
                    .collect();
                observations.push(ObsSpec {
                    level: h,
                    state: StateId(sid),
                    rewards,
                });
                block.push(oid);
            }
            // Random emission weights, normalized.
            let mut w: Vec<f64> = block.iter().map(|_| 0.2 + rng.random::<f64>()).collect();
            let total: f64 = w.iter().sum();
            for v in &mut w {
                *v /= total;
            }
            let n = w.len();
            let mut support: Vec<(u32, f64)> = block.into_iter().zip(w).collect();
            // Exact renormalization of the last entry absorbs float error.
            let head: f64 = support[..n - 1].iter().map(|&(_, p)| p).sum();
            support[n - 1].1 = 1.0 - head;
            states[sid as usize].emission = Categorical { support };
        }
    }

    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("random".into()),
        horizon: h_max,
        num_actions: k,
        initial: Categorical::point(level_states[0][0]),
        states,
        observations,
    };
    spec.validate()?;
    Ok(spec)
}

/// Random tabular process: observations are the states themselves
/// (identity emissions) and hidden-state transitions are stochastic.
/// Reward means are drawn on the grid `{0, 1/8, ..., 1} * scale / H`.
pub fn random_stochastic_tabular(
    horizon: usize,
    states_per_level: usize,
    num_actions: usize,
    reward_scale: f64,
    rng: &mut ChaCha12Rng,
) -> Result<CdpSpec> {
    if horizon < 1 || states_per_level < 1 || num_actions < 1 {
        return Err(Error::Config("degenerate tabular parameters".into()));
    }
    let mut states = Vec::new();
    let mut observations = Vec::new();
    let mut level_states: Vec<Vec<u32>> = Vec::new();
    let grid = 8.0;
    let max_mean = reward_scale / horizon as f64;
    for h in 1..=horizon {
        let count = if h == 1 { 1 } else { states_per_level };
        let mut ids = Vec::new();
        for _ in 0..count {
            let sid = states.len() as u32;
            ids.push(sid);
            let rewards = (0..num_actions)
                .map(|_| {
                    let level = (rng.random::<f64>() * grid).floor() / grid;
                    RewardDist::bernoulli(level * max_mean)
                })
                .collect();
            observations.push(ObsSpec {
                level: h,
                state: StateId(sid),
                rewards,
            });
            states.push(StateSpec {
                level: h,
                emission: Categorical::point(sid),
                transitions: vec![],
            });
        }
        level_states.push(ids);
    }
    for h in 1..horizon {
        let next = level_states[h].clone();
        for &sid in &level_states[h - 1] {
            let mut transitions = Vec::with_capacity(num_actions);
            for _ in 0..num_actions {
                let mut w: Vec<f64> = next.iter().map(|_| 0.1 + rng.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                for v in &mut w {
                    *v /= total;
                }
                let n = w.len();
                let mut support: Vec<(u32, f64)> = next.iter().copied().zip(w).collect();
                let head: f64 = support[..n - 1].iter().map(|&(_, p)| p).sum();
                support[n - 1].1 = 1.0 - head;
                transitions.push(Categorical { support });
            }
            states[sid as usize].transitions = transitions;
        }
    }
    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("random-tabular".into()),
        horizon,
        num_actions,
        initial: Categorical::point(0),
        states,
        observations,
    };
    spec.validate()?;
    Ok(spec)
}

/// Parameters of the deterministic gridworld.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridworldParams {
    pub width: usize,
    pub horizon: usize,
    /// Rich observations per cell.
    pub obs_per_state: usize,
}

impl Default for GridworldParams {
    fn default() -> Self {
        GridworldParams {
            width: 3,
            horizon: 5,
            obs_per_state: 3,
        }
    }
}

/// Deterministic gridworld: the agent walks on a `width x width` board for
/// `horizon` steps with actions up/down/left/right, observes one of
/// `obs_per_state` symbols per (level, cell), and is paid 1 at the far
/// corner on the final level.
pub fn gridworld(params: &GridworldParams) -> Result<CdpSpec> {
    let w = params.width;
    let h_max = params.horizon;
    if w < 1 || h_max < 1 {
        return Err(Error::Config("degenerate gridworld".into()));
    }
    let k = 4usize;
    let cells = w * w;
    let mut states = Vec::with_capacity(cells * h_max);
    let mut observations = Vec::new();
    let goal = cells - 1;

    let step = |cell: usize, a: usize| -> usize {
        let (x, y) = (cell % w, cell / w);
        let (nx, ny) = match a {
            0 => (x, y.saturating_sub(1)),
            1 => (x, (y + 1).min(w - 1)),
            2 => (x.saturating_sub(1), y),
            _ => ((x + 1).min(w - 1), y),
        };
        ny * w + nx
    };

    for h in 1..=h_max {
        for cell in 0..cells {
            let sid = ((h - 1) * cells + cell) as u32;
            let mut block = Vec::new();
            for _ in 0..params.obs_per_state.max(1) {
                let oid = observations.len() as u32;
                let pay = h == h_max && cell == goal;
                observations.push(ObsSpec {
                    level: h,
                    state: StateId(sid),
                    rewards: (0..k)
                        .map(|_| RewardDist::bernoulli(if pay { 1.0 } else { 0.0 }))
                        .collect(),
                });
                block.push(oid);
            }
            let transitions = if h < h_max {
                (0..k)
                    .map(|a| Categorical::point((h * cells + step(cell, a)) as u32))
                    .collect()
            } else {
                vec![]
            };
            states.push(StateSpec {
                level: h,
                emission: Categorical::uniform(&block),
                transitions,
            });
        }
    }

    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("gridworld".into()),
        horizon: h_max,
        num_actions: k,
        initial: Categorical::point(0),
        states,
        observations,
    };
    spec.validate()?;
    Ok(spec)
}

/// Two-chain environment with a terminal Bernoulli reward gap.
///
/// A start state branches into two deterministic chains of `chain_len`
/// levels. The terminal observation on the `a` chain pays `Ber(1/2 + eps)`,
/// the one on the `b` chain pays `Ber(1/2)`. Observation ids: 0 is the start
/// observation, then levels alternate `(a, b)` pairs.
pub fn backup_chain(chain_len: usize, eps: f64) -> Result<CdpSpec> {
    if chain_len < 1 || !(0.0..0.5).contains(&eps) {
        return Err(Error::Config("need chain_len >= 1 and eps in (0, 0.5)".into()));
    }
    let horizon = chain_len + 1;
    let mut states = vec![StateSpec {
        level: 1,
        emission: Categorical::point(0),
        transitions: vec![Categorical::point(1), Categorical::point(2)],
    }];
    let mut observations = vec![ObsSpec {
        level: 1,
        state: StateId(0),
        rewards: vec![RewardDist::constant(0.0); 2],
    }];
    for h in 1..=chain_len {
        for z in 0..2u32 {
            let sid = (1 + (h - 1) * 2) as u32 + z;
            let oid = sid;
            let terminal = h == chain_len;
            let mean = if terminal {
                if z == 0 {
                    0.5 + eps
                } else {
                    0.5
                }
            } else {
                0.0
            };
            observations.push(ObsSpec {
                level: h + 1,
                state: StateId(sid),
                rewards: vec![RewardDist::bernoulli(mean); 2],
            });
            states.push(StateSpec {
                level: h + 1,
                emission: Categorical::point(oid),
                transitions: if terminal {
                    vec![]
                } else {
                    vec![Categorical::point(sid + 2); 2]
                },
            });
        }
    }
    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("backup-chain".into()),
        horizon,
        num_actions: 2,
        initial: Categorical::point(0),
        states,
        observations,
    };
    spec.validate()?;
    Ok(spec)
}

/// Two-level environment in which most policies induce the uniform mixture
/// over a good and a bad successor state.
///
/// Level 1 has one state emitting `m` equally likely contexts; action 0
/// moves to the good state (terminal value 1), action 1 to the bad state
/// (terminal value 0).
pub fn needle(m: usize) -> Result<CdpSpec> {
    if m < 1 {
        return Err(Error::Config("need at least one context".into()));
    }
    let ctx: Vec<u32> = (0..m as u32).collect();
    let states = vec![
        StateSpec {
            level: 1,
            emission: Categorical::uniform(&ctx),
            transitions: vec![Categorical::point(1), Categorical::point(2)],
        },
        StateSpec {
            level: 2,
            emission: Categorical::point(m as u32),
            transitions: vec![],
        },
        StateSpec {
            level: 2,
            emission: Categorical::point(m as u32 + 1),
            transitions: vec![],
        },
    ];
    let mut observations: Vec<ObsSpec> = (0..m)
        .map(|_| ObsSpec {
            level: 1,
            state: StateId(0),
            rewards: vec![RewardDist::constant(0.0); 2],
        })
        .collect();
    observations.push(ObsSpec {
        level: 2,
        state: StateId(1),
        rewards: vec![RewardDist::constant(1.0); 2],
    });
    observations.push(ObsSpec {
        level: 2,
        state: StateId(2),
        rewards: vec![RewardDist::constant(0.0); 2],
    });
    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("needle".into()),
        horizon: 2,
        num_actions: 2,
        initial: Categorical::point(0),
        states,
        observations,
    };
    spec.validate()?;
    Ok(spec)
}

/// One-level environment with a rare rewarding observation.
///
/// A single state emits observation 0 with probability `1 - eps` (both
/// actions pay 0) and observation 1 with probability `eps` (action 0 pays 1,
/// action 1 pays 0).
pub fn rare_reward(eps: f64) -> Result<CdpSpec> {
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::Config("need eps in (0, 1)".into()));
    }
    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("rare-reward".into()),
        horizon: 1,
        num_actions: 2,
        initial: Categorical::point(0),
        states: vec![StateSpec {
            level: 1,
            emission: Categorical {
                support: vec![(0, 1.0 - eps), (1, eps)],
            },
            transitions: vec![],
        }],
        observations: vec![
            ObsSpec {
                level: 1,
                state: StateId(0),
                rewards: vec![RewardDist::constant(0.0); 2],
            },
            ObsSpec {
                level: 1,
                state: StateId(0),
                rewards: vec![RewardDist::bernoulli(1.0), RewardDist::constant(0.0)],
            },
        ],
    };
    spec.validate()?;
    Ok(spec)
}
