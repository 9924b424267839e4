//! 3-SAT gadget: a family of small episodic processes whose optimistic
//! constraint program decides satisfiability.
//!
//! For a formula with variables `x_1..x_n` and clauses `C_1..C_m`, the
//! family has one start state, one state per clause, and two terminal
//! states per variable (the variable set true, the variable set false).
//! Family members differ only in which terminal of each pair pays 1; all
//! members generate identical constraints, so the per-round optimization
//! must reason over every truth assignment at once. The program has
//! optimum 1 exactly when the formula is satisfiable.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cdp::{Categorical, CdpSpec, ObsSpec, RewardDist, StateId, StateSpec, SPEC_FORMAT_VERSION};
use crate::error::{Error, Result};

/// A literal: variable index (0-based) and sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Lit {
    pub var: usize,
    pub negated: bool,
}

/// A 3-SAT formula. Clauses hold exactly three literals; shorter input
/// clauses are padded by repeating their last literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatFormula {
    pub num_vars: usize,
    pub clauses: Vec<[Lit; 3]>,
}

impl SatFormula {
    pub fn new(num_vars: usize, clauses: Vec<[Lit; 3]>) -> Result<SatFormula> {
        let f = SatFormula { num_vars, clauses };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_vars == 0 || self.clauses.is_empty() {
            return Err(Error::Config("formula needs variables and clauses".into()));
        }
        for c in &self.clauses {
            for l in c {
                if l.var >= self.num_vars {
                    return Err(Error::Config(format!("literal variable {} out of range", l.var)));
                }
            }
        }
        Ok(())
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    /// Evaluate under a truth assignment.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().all(|c| {
            c.iter()
                .any(|l| assignment[l.var] != l.negated)
        })
    }
}

/// Parse DIMACS CNF. Clauses of one or two literals are padded by
/// repetition; longer clauses are rejected.
pub fn parse_dimacs(text: &str) -> Result<SatFormula> {
    let mut num_vars = None;
    let mut clauses = Vec::new();
    let mut current: Vec<Lit> = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('p') {
            let parts: Vec<&str> = rest.split_whitespace().collect();
            if parts.len() != 3 || parts[0] != "cnf" {
                return Err(Error::Dimacs(format!("bad problem line: {line}")));
            }
            num_vars = Some(
                parts[1]
                    .parse::<usize>()
                    .map_err(|e| Error::Dimacs(format!("bad variable count: {e}")))?,
            );
            continue;
        }
        for tok in line.split_whitespace() {
            let v: i64 = tok
                .parse()
                .map_err(|e| Error::Dimacs(format!("bad literal {tok}: {e}")))?;
            if v == 0 {
                if current.is_empty() {
                    return Err(Error::Dimacs("empty clause".into()));
                }
                if current.len() > 3 {
                    return Err(Error::Dimacs(format!(
                        "clause with {} literals; only 3-SAT input is accepted",
                        current.len()
                    )));
                }
                while current.len() < 3 {
                    current.push(*current.last().expect("nonempty"));
                }
                clauses.push([current[0], current[1], current[2]]);
                current.clear();
            } else {
                current.push(Lit {
                    var: (v.unsigned_abs() as usize) - 1,
                    negated: v < 0,
                });
            }
        }
    }
    if !current.is_empty() {
        return Err(Error::Dimacs("clause not terminated by 0".into()));
    }
    let num_vars = num_vars.ok_or_else(|| Error::Dimacs("missing problem line".into()))?;
    SatFormula::new(num_vars, clauses)
}

/// The gadget process for one family member, plus the affine reward map
/// relating it to the raw construction (rewards in `[-1, 1]`).
///
/// Raw rewards are rescaled by a common positive factor `scale = m/(m+1)`
/// with a level-1 offset `1/(m+1)` added to every first action, which keeps
/// the action preferences intact, makes all rewards nonnegative, and pins
/// the satisfiable optimum at exactly 1.
#[derive(Debug, Clone)]
pub struct SatMdp {
    pub spec: CdpSpec,
    pub formula: SatFormula,
    pub assignment: Vec<bool>,
    pub scale: f64,
    pub level1_offset: f64,
    pub s0: StateId,
    pub clause_states: Vec<StateId>,
    /// Early literal states reached by a direct probe, `[false, true]`.
    pub lit_probe: Vec<[StateId; 2]>,
    /// Terminal literal states reached through a clause, `[false, true]`.
    pub lit_terminal: Vec<[StateId; 2]>,
    pub done: StateId,
    /// Labels of the start-state actions.
    pub action_labels: Vec<String>,
}

impl SatMdp {
    /// Value of a state in the raw (pre-rescale) construction.
    pub fn unscaled_state_value(&self, values: &crate::cdp::ExactValues, s: StateId) -> f64 {
        let level = self.spec.state(s).level;
        let offset = if level == 1 { self.level1_offset } else { 0.0 };
        (values.v_star_state(s) - offset) / self.scale
    }
}

/// Build the family member selected by `assignment` (the terminal of
/// variable `i` carrying reward 1 is `x_i^{assignment[i]}`).
pub fn sat_to_mdp(formula: &SatFormula, assignment: &[bool]) -> Result<SatMdp> {
    formula.validate()?;
    if assignment.len() != formula.num_vars {
        return Err(Error::Config("assignment length mismatch".into()));
    }
    let n = formula.num_vars;
    let m = formula.num_clauses();
    let scale = m as f64 / (m + 1) as f64;
    let level1_offset = 1.0 / (m + 1) as f64;
    // Start-state actions: probes for each variable, probes for each
    // clause, then the solve action. Clause states need seven actions.
    let k = (n + m + 1).max(7);

    let mut states: Vec<StateSpec> = Vec::new();
    let mut observations: Vec<ObsSpec> = Vec::new();
    let push_state = |states: &mut Vec<StateSpec>,
                          observations: &mut Vec<ObsSpec>,
                          level: usize,
                          rewards: Vec<RewardDist>|
     -> StateId {
        let sid = StateId(states.len() as u32);
        let oid = observations.len() as u32;
        observations.push(ObsSpec {
            level,
            state: sid,
            rewards,
        });
        states.push(StateSpec {
            level,
            emission: Categorical::point(oid),
            transitions: Vec::new(),
        });
        sid
    };

    let zero = |k: usize| vec![RewardDist::constant(0.0); k];
    let s0 = push_state(&mut states, &mut observations, 1, Vec::new());
    let clause_states: Vec<StateId> = (0..m)
        .map(|_| push_state(&mut states, &mut observations, 2, zero(k)))
        .collect();
    let lit_probe: Vec<[StateId; 2]> = (0..n)
        .map(|i| {
            [false, true].map(|b| {
                let raw = if assignment[i] == b { 1.0 } else { 0.0 };
                push_state(
                    &mut states,
                    &mut observations,
                    2,
                    vec![RewardDist::constant(scale * raw); k],
                )
            })
        })
        .collect();
    let lit_terminal: Vec<[StateId; 2]> = (0..n)
        .map(|i| {
            [false, true].map(|b| {
                let raw = if assignment[i] == b { 1.0 } else { 0.0 };
                push_state(
                    &mut states,
                    &mut observations,
                    3,
                    vec![RewardDist::constant(scale * raw); k],
                )
            })
        })
        .collect();
    let done = push_state(&mut states, &mut observations, 3, zero(k));

    // Start state: rewards carry the common level-1 offset; the clause
    // probes additionally pay the raw -1/m, which the offset cancels.
    let mut s0_rewards = Vec::with_capacity(k);
    let mut action_labels = Vec::with_capacity(k);
    let mut s0_transitions = Vec::with_capacity(k);
    for i in 0..n {
        s0_rewards.push(RewardDist::constant(level1_offset));
        action_labels.push(format!("try x{}", i + 1));
        s0_transitions.push(Categorical::uniform(&[
            lit_probe[i][0].0,
            lit_probe[i][1].0,
        ]));
    }
    for j in 0..m {
        // scale * (-1/m) + offset = 0
        s0_rewards.push(RewardDist::constant(0.0));
        action_labels.push(format!("try C{}", j + 1));
        s0_transitions.push(Categorical::point(clause_states[j].0));
    }
    s0_rewards.push(RewardDist::constant(level1_offset));
    action_labels.push("solve".into());
    s0_transitions.push(Categorical::uniform(
        &clause_states.iter().map(|s| s.0).collect::<Vec<_>>(),
    ));
    while s0_rewards.len() < k {
        // Padding actions replicate the solve action.
        s0_rewards.push(RewardDist::constant(level1_offset));
        action_labels.push("solve".into());
        s0_transitions.push(s0_transitions[n + m].clone());
    }
    observations[s0.0 as usize].rewards = s0_rewards;
    states[s0.0 as usize].transitions = s0_transitions;

    // Clause states: seven actions indexed by the nonzero bit patterns,
    // each moving to the terminal literal states selected by the pattern.
    for (j, clause) in formula.clauses.iter().enumerate() {
        let mut transitions = Vec::with_capacity(k);
        for idx in 0..k {
            let b = clause_action_bits(idx.min(6));
            let targets = (0..3).map(|t| {
                let lit = clause[t];
                // bit true: the literal holds, so the variable equals
                // !negated; bit false: the literal fails.
                let value = if b[t] { !lit.negated } else { lit.negated };
                (lit_terminal[lit.var][value as usize].0, 1.0 / 3.0)
            });
            transitions.push(Categorical::merged(targets));
        }
        states[clause_states[j].0 as usize].transitions = transitions;
    }
    // Early literal states fall through to the sink.
    for pair in &lit_probe {
        for &s in pair {
            states[s.0 as usize].transitions = vec![Categorical::point(done.0); k];
        }
    }

    let spec = CdpSpec {
        format_version: SPEC_FORMAT_VERSION,
        name: Some("sat-mdp".into()),
        horizon: 3,
        num_actions: k,
        initial: Categorical::point(s0.0),
        states,
        observations,
    };
    spec.validate()?;
    Ok(SatMdp {
        spec,
        formula: formula.clone(),
        assignment: assignment.to_vec(),
        scale,
        level1_offset,
        s0,
        clause_states,
        lit_probe,
        lit_terminal,
        done,
        action_labels,
    })
}

/// The seven clause actions as bit patterns, skipping all-false.
pub fn clause_action_bits(index: usize) -> [bool; 3] {
    let v = index + 1;
    [(v >> 2) & 1 == 1, (v >> 1) & 1 == 1, v & 1 == 1]
}

/// One constraint of the optimistic program, in symbolic form over the raw
/// construction's value variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SatConstraint {
    /// `(f(x_i^1) + f(x_i^0)) / 2 = 1/2`; unguarded since the terminal
    /// states have a single action.
    Literal { var: usize },
    /// `f(C_j, b) = mean of the three selected literal values`, guarded by
    /// the policy choosing `b` at the clause state.
    Clause { clause: usize, bits: [bool; 3] },
    /// `f(s0) = f(C_j) - 1/m`, guarded by the policy probing clause `j`.
    InitTryClause { clause: usize },
    /// `f(s0) = (f(x_i^0) + f(x_i^1)) / 2`, guarded by the variable probe.
    InitTryVar { var: usize },
    /// `f(s0) = mean over clauses of f(C_j)`, guarded by the solve action.
    InitSolve,
}

/// The full constraint family the adversarial run generates: per-variable
/// literal constraints, all guarded clause constraints, and the guarded
/// start-state constraints. Mixed-variable terminal constraints (reachable
/// distributions over literal states of different variables) are by
/// construction not part of the family.
pub fn olive_sat_constraints(formula: &SatFormula) -> BTreeSet<SatConstraint> {
    let mut out = BTreeSet::new();
    for var in 0..formula.num_vars {
        out.insert(SatConstraint::Literal { var });
        out.insert(SatConstraint::InitTryVar { var });
    }
    for clause in 0..formula.num_clauses() {
        out.insert(SatConstraint::InitTryClause { clause });
        for idx in 0..7 {
            out.insert(SatConstraint::Clause {
                clause,
                bits: clause_action_bits(idx),
            });
        }
    }
    out.insert(SatConstraint::InitSolve);
    out
}

/// One round of the prescribed adversarial run.
#[derive(Debug, Clone)]
pub struct TraceRound {
    pub round: usize,
    /// Level whose constraints the round adds.
    pub level: usize,
    /// The optimistic function chosen this round, described by the start
    /// action it favors.
    pub chosen_start_action: String,
    pub constraints: Vec<SatConstraint>,
}

/// Reproduce the adversarial run that generates exactly the constraint
/// family: first one round per clause (clause constraints at level 2),
/// then one round per variable (literal constraints at level 2), then a
/// final round adding every start-state constraint at level 1. Verifies
/// that the accumulated set equals [`olive_sat_constraints`].
pub fn adversarial_olive_trace(formula: &SatFormula) -> Result<Vec<TraceRound>> {
    formula.validate()?;
    let n = formula.num_vars;
    let m = formula.num_clauses();
    let mut rounds = Vec::with_capacity(m + n + 1);
    let mut accumulated = BTreeSet::new();
    for j in 0..m {
        // The chosen function promises value 1 for probing this clause and
        // zero on every literal state, so the only large average error is
        // at the clause level.
        let constraints: Vec<SatConstraint> = (0..7)
            .map(|idx| SatConstraint::Clause {
                clause: j,
                bits: clause_action_bits(idx),
            })
            .collect();
        accumulated.extend(constraints.iter().copied());
        rounds.push(TraceRound {
            round: j + 1,
            level: 2,
            chosen_start_action: format!("try C{}", j + 1),
            constraints,
        });
    }
    for i in 0..n {
        // The chosen function promises 1 on both literal states of this
        // variable; the uniform probe mixture exposes the error.
        let constraints = vec![SatConstraint::Literal { var: i }];
        accumulated.extend(constraints.iter().copied());
        rounds.push(TraceRound {
            round: m + i + 1,
            level: 2,
            chosen_start_action: format!("try x{}", i + 1),
            constraints,
        });
    }
    // Final round: the chosen function overvalues a variable probe at the
    // start state itself, adding the guarded start-state constraints.
    let mut constraints = Vec::with_capacity(n + m + 1);
    for i in 0..n {
        constraints.push(SatConstraint::InitTryVar { var: i });
    }
    for j in 0..m {
        constraints.push(SatConstraint::InitTryClause { clause: j });
    }
    constraints.push(SatConstraint::InitSolve);
    accumulated.extend(constraints.iter().copied());
    rounds.push(TraceRound {
        round: m + n + 1,
        level: 1,
        chosen_start_action: "try x1".into(),
        constraints,
    });

    if accumulated != olive_sat_constraints(formula) {
        return Err(Error::Internal(
            "adversarial trace does not reproduce the constraint family".into(),
        ));
    }
    Ok(rounds)
}

/// Decide satisfiability through the optimistic constraint program.
///
/// At optimum 1 the box bounds and the literal constraints force every
/// literal value to be 0 or 1 with complementary pairs, so the program is
/// decided by exhaustive search over binary assignments with greedy
/// propagation to the clause and start states. Intentionally exponential
/// in the number of variables.
pub fn sat_decision_via_olive(formula: &SatFormula, max_assignments: u64) -> Result<bool> {
    formula.validate()?;
    if formula.num_vars >= 63 || (1u64 << formula.num_vars) > max_assignments {
        return Err(Error::BudgetExceeded(format!(
            "2^{} assignments exceed the budget {max_assignments}",
            formula.num_vars
        )));
    }
    let m = formula.num_clauses() as f64;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << formula.num_vars) {
        let assignment: Vec<bool> = (0..formula.num_vars).map(|i| (mask >> i) & 1 == 1).collect();
        // literal values forced binary; propagate to clause states
        let clause_value = |clause: &[Lit; 3]| -> f64 {
            let mut best = f64::NEG_INFINITY;
            for idx in 0..7 {
                let bits = clause_action_bits(idx);
                let mut v = 0.0;
                for t in 0..3 {
                    let lit = clause[t];
                    let value = if bits[t] { !lit.negated } else { lit.negated };
                    v += if assignment[lit.var] == value { 1.0 } else { 0.0 };
                }
                best = best.max(v / 3.0);
            }
            best
        };
        let clause_values: Vec<f64> = formula.clauses.iter().map(clause_value).collect();
        let solve = clause_values.iter().sum::<f64>() / m;
        let try_clause = clause_values
            .iter()
            .map(|v| v - 1.0 / m)
            .fold(f64::NEG_INFINITY, f64::max);
        let try_var = 0.5;
        best = best.max(solve.max(try_clause).max(try_var));
        if best >= 1.0 - 1e-9 {
            return Ok(true);
        }
    }
    Ok(best >= 1.0 - 1e-9)
}
