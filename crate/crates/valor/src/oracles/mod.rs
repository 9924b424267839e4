//! The four optimization primitives behind every algorithm in this crate:
//! cost-sensitive classification over policies, linear programs over value
//! functions, least-squares regression over value functions, and the
//! multi-dataset classification oracle, together with call accounting.
//!
//! Explicit classes are solved by exact enumeration (the suboptimality
//! slack is achieved as zero). Tabular classes decompose per observation
//! for classification and regression and reduce to a dense box linear
//! program otherwise; the tabular class itself is never enumerated.

pub mod simplex;

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::cdp::ObsId;
use crate::classes::{PolicyClass, PolicyFn, ValueClass, ValueFn};
use crate::error::{Error, Result};
use simplex::{maximize_box, LpSolution};

/// Monotone counters of oracle invocations and sampled trajectories.
///
/// Counters are atomic so independent trials may share one budget object.
#[derive(Default)]
pub struct OracleBudget {
    csc_calls: AtomicU64,
    lp_calls: AtomicU64,
    ls_calls: AtomicU64,
    multi_csc_calls: AtomicU64,
    trajectories: AtomicU64,
    /// Passes over the members of an explicit class. Stays at zero for
    /// purely tabular workloads.
    explicit_enumerations: AtomicU64,
    /// Elementary operations spent in tabular oracle paths.
    tabular_ops: AtomicU64,
    audit: Mutex<Option<Arc<Mutex<Box<dyn Write + Send>>>>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetSnapshot {
    pub csc_calls: u64,
    pub lp_calls: u64,
    pub ls_calls: u64,
    pub multi_csc_calls: u64,
    pub trajectories: u64,
    pub explicit_enumerations: u64,
    pub tabular_ops: u64,
}

impl std::fmt::Debug for OracleBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.snapshot().fmt(f)
    }
}

impl OracleBudget {
    pub fn new() -> Self {
        Self::default()
    }

    /// Install a JSON-lines audit sink; every oracle call appends one line.
    pub fn set_audit(&self, sink: Arc<Mutex<Box<dyn Write + Send>>>) {
        *self.audit.lock().expect("audit lock") = Some(sink);
    }

    pub fn add_trajectories(&self, n: usize) {
        self.trajectories.fetch_add(n as u64, Ordering::Relaxed);
    }

    fn count_ops(&self, n: usize) {
        self.tabular_ops.fetch_add(n as u64, Ordering::Relaxed);
    }

    fn enumeration_pass(&self) {
        self.explicit_enumerations.fetch_add(1, Ordering::Relaxed);
    }

    pub fn snapshot(&self) -> BudgetSnapshot {
        BudgetSnapshot {
            csc_calls: self.csc_calls.load(Ordering::Relaxed),
            lp_calls: self.lp_calls.load(Ordering::Relaxed),
            ls_calls: self.ls_calls.load(Ordering::Relaxed),
            multi_csc_calls: self.multi_csc_calls.load(Ordering::Relaxed),
            trajectories: self.trajectories.load(Ordering::Relaxed),
            explicit_enumerations: self.explicit_enumerations.load(Ordering::Relaxed),
            tabular_ops: self.tabular_ops.load(Ordering::Relaxed),
        }
    }

    fn audit_line(&self, value: serde_json::Value) {
        let guard = self.audit.lock().expect("audit lock");
        if let Some(sink) = guard.as_ref() {
            if let Ok(mut w) = sink.lock() {
                let _ = writeln!(w, "{value}");
            }
        }
    }
}

/// A cost-sensitive classification dataset: observations with per-action
/// cost vectors, plus optional row weights for pooled objectives.
#[derive(Debug, Clone, Default)]
pub struct CscDataset {
    pub rows: Vec<CscRow>,
}

#[derive(Debug, Clone)]
pub struct CscRow {
    pub x: ObsId,
    pub costs: Vec<f64>,
    pub weight: f64,
}

impl CscDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: ObsId, costs: Vec<f64>) {
        self.rows.push(CscRow {
            x,
            costs,
            weight: 1.0,
        });
    }

    pub fn push_weighted(&mut self, x: ObsId, costs: Vec<f64>, weight: f64) {
        self.rows.push(CscRow { x, costs, weight });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn num_actions(&self) -> usize {
        self.rows.first().map(|r| r.costs.len()).unwrap_or(0)
    }

    /// Weighted total cost per (observation, action), and the weight mass.
    fn totals(&self) -> (BTreeMap<ObsId, Vec<f64>>, f64) {
        let k = self.num_actions();
        let mut acc: BTreeMap<ObsId, Vec<f64>> = BTreeMap::new();
        let mut mass = 0.0;
        for row in &self.rows {
            let entry = acc.entry(row.x).or_insert_with(|| vec![0.0; k]);
            for a in 0..k {
                entry[a] += row.weight * row.costs[a];
            }
            mass += row.weight;
        }
        (acc, mass)
    }

    /// Weighted average cost of a policy on this dataset.
    pub fn avg_cost(&self, class: &PolicyClass, policy: &PolicyFn) -> Result<f64> {
        let mut total = 0.0;
        let mut mass = 0.0;
        for row in &self.rows {
            total += row.weight * row.costs[class.act(policy, row.x)?];
            mass += row.weight;
        }
        Ok(total / mass.max(f64::MIN_POSITIVE))
    }
}

/// Near-minimizer of average cost over the policy class.
///
/// Explicit classes are enumerated exactly. The tabular class picks, per
/// observation, the action minimizing the total cost; ties break toward
/// the lowest action index.
pub fn csc_oracle(
    class: &PolicyClass,
    data: &CscDataset,
    _eps_sub: f64,
    budget: &OracleBudget,
) -> Result<PolicyFn> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    budget.csc_calls.fetch_add(1, Ordering::Relaxed);
    let (totals, mass) = data.totals();
    let k = data.num_actions();
    let result = match class {
        PolicyClass::Explicit { actions, .. } => {
            budget.enumeration_pass();
            let mut best: Option<(usize, f64)> = None;
            for id in 0..actions.len() {
                let mut cost = 0.0;
                for (&x, row) in &totals {
                    cost += row[class.act(&PolicyFn::Member(id), x)?];
                }
                if best.map(|(_, c)| cost < c).unwrap_or(true) {
                    best = Some((id, cost));
                }
            }
            let (id, _) = best.ok_or_else(|| Error::Config("empty policy class".into()))?;
            PolicyFn::Member(id)
        }
        PolicyClass::Tabular { .. } => {
            budget.count_ops(data.len() * k + totals.len() * k);
            let mut assignment = BTreeMap::new();
            for (&x, row) in &totals {
                let mut a_best = 0;
                for a in 1..k {
                    if row[a] < row[a_best] {
                        a_best = a;
                    }
                }
                assignment.insert(x, a_best);
            }
            PolicyFn::Assignment(assignment)
        }
    };
    let _ = mass;
    budget.audit_line(serde_json::json!({
        "oracle": "csc", "rows": data.len(), "class": class_tag_p(class),
    }));
    Ok(result)
}

/// A linear functional of a value function, `sum_i coeff_i * g(x_i)`.
#[derive(Debug, Clone, Default)]
pub struct LinFunctional {
    pub terms: Vec<(ObsId, f64)>,
}

impl LinFunctional {
    /// Empirical mean functional over a bag of observations.
    pub fn empirical_mean(xs: impl IntoIterator<Item = ObsId>) -> Self {
        let mut acc: BTreeMap<ObsId, f64> = BTreeMap::new();
        let mut n = 0usize;
        for x in xs {
            *acc.entry(x).or_insert(0.0) += 1.0;
            n += 1;
        }
        let n = n.max(1) as f64;
        LinFunctional {
            terms: acc.into_iter().map(|(x, c)| (x, c / n)).collect(),
        }
    }

    pub fn eval(&self, class: &ValueClass, f: &ValueFn) -> Result<f64> {
        let mut v = 0.0;
        for &(x, c) in &self.terms {
            v += c * class.eval(f, x)?;
        }
        Ok(v)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Maximize,
    Minimize,
}

/// One linear constraint with its sense.
#[derive(Debug, Clone)]
pub struct LpConstraint {
    pub functional: LinFunctional,
    pub sense: LpSense,
}

#[derive(Debug, Clone, Copy)]
pub enum LpSense {
    /// functional <= bound
    Le(f64),
    /// lo <= functional <= hi
    Interval(f64, f64),
}

impl LpConstraint {
    pub fn violation(&self, value: f64) -> f64 {
        match self.sense {
            LpSense::Le(c) => (value - c).max(0.0),
            LpSense::Interval(lo, hi) => (value - hi).max(lo - value).max(0.0),
        }
    }

    fn relaxed(&self, eps: f64) -> LpConstraint {
        let sense = match self.sense {
            LpSense::Le(c) => LpSense::Le(c + eps),
            LpSense::Interval(lo, hi) => LpSense::Interval(lo - eps, hi + eps),
        };
        LpConstraint {
            functional: self.functional.clone(),
            sense,
        }
    }
}

/// Linear program over a value class.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub objective: LinFunctional,
    pub direction: Direction,
    pub constraints: Vec<LpConstraint>,
    pub eps_sub: f64,
    pub eps_feas: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Feasible { f: ValueFn, objective: f64 },
    Infeasible,
}

/// Optimum of a linear functional subject to linear-functional constraints.
///
/// Explicit classes filter members by feasibility within `eps_feas` and take
/// the extremum (ties toward the lowest function id). The tabular class is a
/// dense box linear program over the observations that appear in the
/// problem; absent observations are pinned to zero. A program with an empty
/// objective support returns the lowest-id feasible function.
pub fn lp_oracle(class: &ValueClass, problem: &LpProblem, budget: &OracleBudget) -> Result<LpOutcome> {
    budget.lp_calls.fetch_add(1, Ordering::Relaxed);
    let outcome = match class {
        ValueClass::Explicit { values, .. } => {
            budget.enumeration_pass();
            let mut best: Option<(usize, f64)> = None;
            for id in 0..values.len() {
                let f = ValueFn::Member(id);
                let feasible = problem.constraints.iter().try_fold(true, |ok, c| {
                    Ok::<bool, Error>(ok && c.violation(c.functional.eval(class, &f)?) <= problem.eps_feas)
                })?;
                if !feasible {
                    continue;
                }
                let obj = problem.objective.eval(class, &f)?;
                let better = match (problem.direction, best) {
                    (_, None) => true,
                    (Direction::Maximize, Some((_, b))) => obj > b,
                    (Direction::Minimize, Some((_, b))) => obj < b,
                };
                if better {
                    best = Some((id, obj));
                }
            }
            match best {
                Some((id, obj)) => LpOutcome::Feasible {
                    f: ValueFn::Member(id),
                    objective: obj,
                },
                None => LpOutcome::Infeasible,
            }
        }
        ValueClass::ConstZero => {
            let f = ValueFn::Zero;
            let mut feasible = true;
            for c in &problem.constraints {
                feasible &= c.violation(c.functional.eval(class, &f)?) <= problem.eps_feas;
            }
            if feasible {
                LpOutcome::Feasible { f, objective: 0.0 }
            } else {
                LpOutcome::Infeasible
            }
        }
        ValueClass::Tabular { .. } => tabular_lp(class, problem, budget)?,
    };
    if let LpOutcome::Feasible { f, .. } = &outcome {
        // Contract check: feasibility slack honored on every call.
        #[cfg(debug_assertions)]
        for c in &problem.constraints {
            let v = c.functional.eval(class, f)?;
            debug_assert!(
                c.violation(v) <= problem.eps_feas + 1e-9,
                "lp oracle returned a function violating a constraint by {}",
                c.violation(v)
            );
        }
    }
    budget.audit_line(serde_json::json!({
        "oracle": "lp", "constraints": problem.constraints.len(),
        "feasible": matches!(outcome, LpOutcome::Feasible { .. }),
    }));
    Ok(outcome)
}

fn tabular_lp(class: &ValueClass, problem: &LpProblem, budget: &OracleBudget) -> Result<LpOutcome> {
    // Variables: observations mentioned anywhere in the program.
    let mut vars: Vec<ObsId> = problem
        .objective
        .terms
        .iter()
        .chain(problem.constraints.iter().flat_map(|c| c.functional.terms.iter()))
        .map(|&(x, _)| x)
        .collect();
    vars.sort_unstable();
    vars.dedup();
    for &x in &vars {
        class.eval(&ValueFn::Assignment(BTreeMap::new()), x)?; // domain check
    }
    let index: BTreeMap<ObsId, usize> = vars.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let n = vars.len();

    let sign = match problem.direction {
        Direction::Maximize => 1.0,
        Direction::Minimize => -1.0,
    };
    let mut c = vec![0.0; n];
    for &(x, w) in &problem.objective.terms {
        c[index[&x]] += sign * w;
    }

    let build_rows = |constraints: &[LpConstraint]| -> Vec<(Vec<f64>, f64)> {
        let mut rows = Vec::new();
        for cons in constraints {
            let mut a = vec![0.0; n];
            for &(x, w) in &cons.functional.terms {
                a[index[&x]] += w;
            }
            match cons.sense {
                LpSense::Le(b) => rows.push((a, b)),
                LpSense::Interval(lo, hi) => {
                    rows.push((a.clone(), hi));
                    rows.push((a.iter().map(|v| -v).collect(), -lo));
                }
            }
        }
        rows
    };

    budget.count_ops(n * (problem.constraints.len() + 1));
    let solve = |constraints: &[LpConstraint]| -> LpSolution {
        maximize_box(&c, &build_rows(constraints), &vec![1.0; n])
    };
    let mut sol = solve(&problem.constraints);
    if sol == LpSolution::Infeasible && problem.eps_feas > 0.0 {
        let relaxed: Vec<LpConstraint> = problem
            .constraints
            .iter()
            .map(|c| c.relaxed(problem.eps_feas))
            .collect();
        sol = solve(&relaxed);
    }
    match sol {
        LpSolution::Optimal { x, objective } => {
            let assignment: BTreeMap<ObsId, f64> = vars
                .iter()
                .zip(&x)
                .map(|(&o, &v)| (o, v.clamp(0.0, 1.0)))
                .collect();
            Ok(LpOutcome::Feasible {
                f: ValueFn::Assignment(assignment),
                objective: sign * objective,
            })
        }
        LpSolution::Infeasible => Ok(LpOutcome::Infeasible),
        LpSolution::Unbounded => Err(Error::Internal("box program cannot be unbounded".into())),
    }
}

/// Least-squares dataset: observation, target, and optional weight.
#[derive(Debug, Clone, Default)]
pub struct LsDataset {
    pub rows: Vec<(ObsId, f64, f64)>,
}

impl LsDataset {
    pub fn push(&mut self, x: ObsId, target: f64) {
        self.rows.push((x, target, 1.0));
    }

    pub fn push_weighted(&mut self, x: ObsId, target: f64, weight: f64) {
        self.rows.push((x, target, weight));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Per-observation sufficient statistics (weight, weighted target sum,
    /// weighted square sum).
    fn stats(&self) -> BTreeMap<ObsId, (f64, f64, f64)> {
        let mut acc: BTreeMap<ObsId, (f64, f64, f64)> = BTreeMap::new();
        for &(x, t, w) in &self.rows {
            let e = acc.entry(x).or_insert((0.0, 0.0, 0.0));
            e.0 += w;
            e.1 += w * t;
            e.2 += w * t * t;
        }
        acc
    }

    pub fn loss(&self, class: &ValueClass, f: &ValueFn) -> Result<f64> {
        let mut total = 0.0;
        for (&x, &(w, wt, wtt)) in &self.stats() {
            let g = class.eval(f, x)?;
            total += w * g * g - 2.0 * wt * g + wtt;
        }
        Ok(total / self.rows.len().max(1) as f64)
    }
}

/// Near-minimizer of weighted squared error over the value class.
///
/// The tabular solution is the per-observation weighted mean clamped to
/// `[0, 1]`; observations with no weight are left at the fixed default 0.
pub fn ls_oracle(
    class: &ValueClass,
    data: &LsDataset,
    _eps_sub: f64,
    budget: &OracleBudget,
) -> Result<ValueFn> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    budget.ls_calls.fetch_add(1, Ordering::Relaxed);
    let stats = data.stats();
    let result = match class {
        ValueClass::Explicit { values, .. } => {
            budget.enumeration_pass();
            let mut best: Option<(usize, f64)> = None;
            for id in 0..values.len() {
                let f = ValueFn::Member(id);
                let mut loss = 0.0;
                for (&x, &(w, wt, wtt)) in &stats {
                    let g = class.eval(&f, x)?;
                    loss += w * g * g - 2.0 * wt * g + wtt;
                }
                if best.map(|(_, l)| loss < l).unwrap_or(true) {
                    best = Some((id, loss));
                }
            }
            let (id, _) = best.ok_or_else(|| Error::Config("empty value class".into()))?;
            ValueFn::Member(id)
        }
        ValueClass::ConstZero => ValueFn::Zero,
        ValueClass::Tabular { .. } => {
            budget.count_ops(data.len() + stats.len());
            let mut assignment = BTreeMap::new();
            for (&x, &(w, wt, _)) in &stats {
                if w > 0.0 {
                    assignment.insert(x, (wt / w).clamp(0.0, 1.0));
                }
            }
            ValueFn::Assignment(assignment)
        }
    };
    budget.audit_line(serde_json::json!({
        "oracle": "ls", "rows": data.len(), "class": class_tag_v(class),
    }));
    Ok(result)
}

/// Multiplicative-weights configuration for the multi-dataset oracle.
#[derive(Debug, Clone, Copy, Default)]
pub struct MwConfig {
    /// Round count; defaults to `ceil(16 ln(m) / eps_feas^2)`.
    pub iterations: Option<usize>,
    /// Learning rate; defaults to `sqrt(ln(m) / T)`.
    pub eta: Option<f64>,
    /// Slack normalization range; defaults to the observed cost spread.
    pub range: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MultiBackend {
    /// Exact feasibility enumeration; explicit classes only.
    Enumeration,
    /// Lagrangian multiplicative weights over the constraints, one CSC call
    /// per round.
    MultiplicativeWeights,
    /// Enumeration for explicit classes, multiplicative weights otherwise.
    Auto,
}

/// Simultaneous cost-threshold problem over several CSC datasets.
#[derive(Debug, Clone)]
pub struct MultiCscProblem {
    pub datasets: Vec<CscDataset>,
    pub thresholds: Vec<f64>,
    pub eps_feas: f64,
    pub mw: MwConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MultiOutcome {
    Policy(PolicyFn),
    Infeasible { max_violation: f64 },
}

/// Return a policy whose average cost on every dataset `j` is at most
/// `thresholds[j] + eps_feas`, when a policy meeting the thresholds exists.
pub fn multi_csc_oracle(
    class: &PolicyClass,
    problem: &MultiCscProblem,
    backend: MultiBackend,
    budget: &OracleBudget,
) -> Result<MultiOutcome> {
    let m = problem.datasets.len();
    if m == 0 || m != problem.thresholds.len() {
        return Err(Error::Config("need one threshold per dataset".into()));
    }
    if problem.datasets.iter().any(CscDataset::is_empty) {
        return Err(Error::EmptyDataset);
    }
    budget.multi_csc_calls.fetch_add(1, Ordering::Relaxed);
    let backend = match (backend, class) {
        (MultiBackend::Auto, PolicyClass::Explicit { .. }) => MultiBackend::Enumeration,
        (MultiBackend::Auto, PolicyClass::Tabular { .. }) => MultiBackend::MultiplicativeWeights,
        (b, _) => b,
    };
    let outcome = match backend {
        MultiBackend::Enumeration => enumeration_multi(class, problem)?,
        MultiBackend::MultiplicativeWeights => mw_multi(class, problem, budget)?,
        MultiBackend::Auto => unreachable!(),
    };
    budget.audit_line(serde_json::json!({
        "oracle": "multi-csc", "datasets": m,
        "feasible": matches!(outcome, MultiOutcome::Policy(_)),
    }));
    Ok(outcome)
}

fn enumeration_multi(class: &PolicyClass, problem: &MultiCscProblem) -> Result<MultiOutcome> {
    let PolicyClass::Explicit { actions, .. } = class else {
        return Err(Error::Config(
            "enumeration backend needs an explicit policy class".into(),
        ));
    };
    // Among the threshold-feasible policies, return the one with the least
    // total average cost (every feasible member satisfies the contract;
    // this choice is deterministic and never worse on the summed
    // objective). Track the smallest worst-case violation for the
    // infeasible report.
    let mut feasible_best: Option<(usize, f64)> = None;
    let mut chebyshev: Option<f64> = None;
    for id in 0..actions.len() {
        let p = PolicyFn::Member(id);
        let mut worst = f64::NEG_INFINITY;
        let mut total = 0.0;
        for (data, &u) in problem.datasets.iter().zip(&problem.thresholds) {
            let avg = data.avg_cost(class, &p)?;
            worst = worst.max(avg - u);
            total += avg;
        }
        if chebyshev.map(|w| worst < w).unwrap_or(true) {
            chebyshev = Some(worst);
        }
        if worst <= problem.eps_feas && feasible_best.map(|(_, t)| total < t).unwrap_or(true) {
            feasible_best = Some((id, total));
        }
    }
    let worst = chebyshev.ok_or_else(|| Error::Config("empty policy class".into()))?;
    Ok(match feasible_best {
        Some((id, _)) => MultiOutcome::Policy(PolicyFn::Member(id)),
        None => MultiOutcome::Infeasible {
            max_violation: worst,
        },
    })
}

fn mw_multi(
    class: &PolicyClass,
    problem: &MultiCscProblem,
    budget: &OracleBudget,
) -> Result<MultiOutcome> {
    let m = problem.datasets.len();
    if m == 1 {
        // Single constraint: one CSC call plus the threshold check.
        let p = csc_oracle(class, &problem.datasets[0], 0.0, budget)?;
        let v = problem.datasets[0].avg_cost(class, &p)? - problem.thresholds[0];
        return Ok(if v <= problem.eps_feas {
            MultiOutcome::Policy(p)
        } else {
            MultiOutcome::Infeasible { max_violation: v }
        });
    }
    // First try the pooled solution; with disjoint dataset supports it is
    // simultaneously optimal and no Lagrangian search is needed.
    let pooled = {
        let mut d = CscDataset::new();
        for data in &problem.datasets {
            let scale = 1.0 / data.len() as f64;
            for row in &data.rows {
                d.push_weighted(row.x, row.costs.clone(), row.weight * scale);
            }
        }
        csc_oracle(class, &d, 0.0, budget)?
    };
    let max_violation = |p: &PolicyFn| -> Result<f64> {
        let mut worst = f64::NEG_INFINITY;
        for (data, &u) in problem.datasets.iter().zip(&problem.thresholds) {
            worst = worst.max(data.avg_cost(class, p)? - u);
        }
        Ok(worst)
    };
    let mut best_p = pooled;
    let mut best_v = max_violation(&best_p)?;
    if best_v <= problem.eps_feas {
        return Ok(MultiOutcome::Policy(best_p));
    }

    let eps = problem.eps_feas.max(1e-6);
    let t_rounds = problem
        .mw
        .iterations
        .unwrap_or_else(|| ((16.0 * (m as f64).ln() / (eps * eps)).ceil() as usize).max(1));
    let eta = problem
        .mw
        .eta
        .unwrap_or_else(|| ((m as f64).ln() / t_rounds as f64).sqrt());
    let range = problem.mw.range.unwrap_or_else(|| {
        let spread = problem
            .datasets
            .iter()
            .flat_map(|d| d.rows.iter())
            .flat_map(|r| r.costs.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                (lo.min(c), hi.max(c))
            });
        (spread.1 - spread.0).abs().max(1.0)
    });

    let mut weights = vec![1.0 / m as f64; m];
    for _ in 0..t_rounds {
        let mut combined = CscDataset::new();
        for (j, data) in problem.datasets.iter().enumerate() {
            let scale = weights[j] / data.len() as f64;
            for row in &data.rows {
                combined.push_weighted(row.x, row.costs.clone(), row.weight * scale);
            }
        }
        let p = csc_oracle(class, &combined, 0.0, budget)?;
        let mut slacks = Vec::with_capacity(m);
        let mut worst = f64::NEG_INFINITY;
        for (data, &u) in problem.datasets.iter().zip(&problem.thresholds) {
            let s = data.avg_cost(class, &p)? - u;
            worst = worst.max(s);
            slacks.push(s);
        }
        if worst < best_v {
            best_v = worst;
            best_p = p;
        }
        if best_v <= problem.eps_feas {
            return Ok(MultiOutcome::Policy(best_p));
        }
        let mut total = 0.0;
        for (w, s) in weights.iter_mut().zip(&slacks) {
            *w *= (eta * (s / range).clamp(-1.0, 1.0)).exp();
            total += *w;
        }
        for w in &mut weights {
            *w /= total;
        }
    }
    Ok(MultiOutcome::Infeasible {
        max_violation: best_v,
    })
}

fn class_tag_p(class: &PolicyClass) -> &'static str {
    match class {
        PolicyClass::Explicit { .. } => "explicit",
        PolicyClass::Tabular { .. } => "tabular",
    }
}

fn class_tag_v(class: &ValueClass) -> &'static str {
    match class {
        ValueClass::Explicit { .. } => "explicit",
        ValueClass::Tabular { .. } => "tabular",
        ValueClass::ConstZero => "zero",
    }
}
