//! Solving each planning approach and scoring a fixed plan on
//! out-of-sample scenarios.

use std::fmt;
use std::str::FromStr;
use std::thread;

use resdist_solver::{solve_milp_with, MilpError, MilpOptions, MilpStatus};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dro::{second_stage_cost, DroError, Recourse};
use crate::formulations::{build_deterministic, build_dro_milp, build_extensive_smip, BuildError, Plan};
use crate::instance::{DcStatus, Instance};
use crate::scenario::{build_ambiguity_bounds, empirical_moments, MomentEstimate, ScenarioError, ScenarioSet};

/// Percentile levels reported for unmet demand.
pub const UNMET_PERCENTILES: [u32; 5] = [75, 80, 85, 90, 95];

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("plan is infeasible: {0}")]
    InfeasiblePlan(String),
    #[error("scarcity factor {0} is outside (0, 1]")]
    ScarcityFactor(f64),
    #[error("unknown DC site {0:?}")]
    UnknownSite(String),
    #[error("{approach} model has no feasible solution ({status:?})")]
    NoSolution { approach: Approach, status: MilpStatus },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Dro(#[from] DroError),
    #[error(transparent)]
    Milp(#[from] MilpError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Approach {
    Dt,
    Sp,
    Dro,
}

impl Approach {
    pub const ALL: [Approach; 3] = [Approach::Dt, Approach::Sp, Approach::Dro];

    pub fn as_str(self) -> &'static str {
        match self {
            Approach::Dt => "dt",
            Approach::Sp => "sp",
            Approach::Dro => "dro",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Approach {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(Approach::Dt),
            "sp" => Ok(Approach::Sp),
            "dro" => Ok(Approach::Dro),
            _ => Err(format!("unknown approach {s:?} (expected dt, sp or dro)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcPolicy {
    /// Preopened sites fixed open, the rest candidates.
    #[default]
    Default,
    /// Every site is a candidate.
    BestCase,
    /// Preopened sites fixed open, the rest forbidden.
    MostRestrictive,
}

impl FromStr for DcPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "default" => Ok(DcPolicy::Default),
            "best_case" => Ok(DcPolicy::BestCase),
            "most_restrictive" => Ok(DcPolicy::MostRestrictive),
            _ => Err(format!("unknown DC policy {s:?} (expected default, best_case or most_restrictive)")),
        }
    }
}

/// Factors that turn moment estimates into ambiguity bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AmbiguityFactors {
    pub mean_slack: f64,
    pub second_moment_lo: f64,
    pub second_moment_hi: f64,
}

impl Default for AmbiguityFactors {
    fn default() -> Self {
        Self { mean_slack: 0.5, second_moment_lo: 0.1, second_moment_hi: 2.0 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub milp: MilpOptions,
    pub ambiguity: AmbiguityFactors,
}

#[derive(Debug, Clone)]
pub struct PlanSolution {
    pub approach: Approach,
    pub plan: Plan,
    /// Objective of the optimization model (in-sample).
    pub objective: f64,
    pub best_bound: f64,
    pub status: MilpStatus,
    pub nodes: usize,
    pub num_vars: usize,
    pub num_constraints: usize,
}

impl PlanSolution {
    /// True when the search stopped at a limit before proving the gap.
    pub fn hit_limit(&self) -> bool {
        self.status == MilpStatus::NodeLimit
    }
}

/// Solve one approach. DT uses `nominal`; SP uses `in_sample`; DRO uses the
/// empirical moments of `in_sample` with `in_sample` as support.
pub fn solve_plan(
    inst: &Instance,
    approach: Approach,
    in_sample: &ScenarioSet,
    nominal: &MomentEstimate,
    opts: &SolveOptions,
) -> Result<PlanSolution, EvalError> {
    let ir = match approach {
        Approach::Dt => build_deterministic(inst, nominal)?,
        Approach::Sp => build_extensive_smip(inst, in_sample)?,
        Approach::Dro => {
            let f = opts.ambiguity;
            let amb = build_ambiguity_bounds(
                &empirical_moments(in_sample),
                f.mean_slack,
                f.second_moment_lo,
                f.second_moment_hi,
                in_sample,
            )?;
            build_dro_milp(inst, &amb)?
        }
    };
    let sol = solve_milp_with(ir.model(), &opts.milp)?;
    if !sol.has_incumbent() {
        return Err(EvalError::NoSolution { approach, status: sol.status });
    }
    log::debug!("{approach}: objective {} after {} nodes ({:?})", sol.objective, sol.nodes, sol.status);
    Ok(PlanSolution {
        approach,
        plan: ir.plan(&sol.x, inst.num_dcs(), inst.periods),
        objective: sol.objective,
        best_bound: sol.best_bound,
        status: sol.status,
        nodes: sol.nodes,
        num_vars: ir.model().num_vars(),
        num_constraints: ir.model().num_constraints(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CostBreakdown {
    pub operating: f64,
    pub capacity: f64,
    pub shipping: f64,
    pub inventory: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnmetStats {
    pub mean: f64,
    pub std_dev: f64,
    /// One value per level in [`UNMET_PERCENTILES`].
    pub percentiles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEvaluation {
    pub breakdown: CostBreakdown,
    /// Statistics of terminal backlog summed over sites.
    pub unmet: UnmetStats,
    /// Expected backlog summed over sites and periods.
    pub backlog_periods_mean: f64,
    /// Expected terminal backlog of each site as a percentage of its
    /// expected demand over the horizon.
    pub regional_unmet_pct: Vec<f64>,
    pub scenario_recourse: Vec<f64>,
    pub scenario_unmet: Vec<f64>,
}

fn check_plan(inst: &Instance, plan: &Plan) -> Result<(), EvalError> {
    let (ni, nt) = (inst.num_dcs(), inst.periods);
    let bad = |msg: String| Err(EvalError::InfeasiblePlan(msg));
    if plan.open.len() != ni || plan.capacity.len() != ni || plan.capacity.iter().any(|r| r.len() != nt) {
        return bad(format!("plan is not dimensioned for {ni} DCs and {nt} periods"));
    }
    for i in 0..ni {
        let label = &inst.dc_sites[i].id;
        match (inst.status(i), plan.open[i]) {
            (DcStatus::Preopened, false) => return bad(format!("preopened DC {label} is closed")),
            (DcStatus::Forbidden, true) => return bad(format!("forbidden DC {label} is open")),
            _ => {}
        }
        let limit = if plan.open[i] { inst.dc_capacity_limit[i] } else { 0.0 };
        for t in 0..nt {
            let h = plan.capacity[i][t];
            let tol = 1e-6 * limit.max(1.0);
            if !h.is_finite() || h < -1e-9 {
                return bad(format!("capacity of DC {label} in period {} is {h}", t + 1));
            }
            if h > limit + tol {
                return bad(format!("capacity link of DC {label} in period {}: {h} exceeds {limit}", t + 1));
            }
        }
    }
    for t in 0..nt {
        let total: f64 = plan.capacity.iter().map(|r| r[t]).sum();
        let b = inst.temporal_budget[t];
        if total > b + 1e-6 * b.max(1.0) {
            return bad(format!("budget in period {}: {total} exceeds {b}", t + 1));
        }
    }
    Ok(())
}

/// Recourse for every scenario, computed on worker threads. Results keep
/// scenario order.
fn solve_scenarios(inst: &Instance, h: &[Vec<f64>], scenarios: &ScenarioSet) -> Result<Vec<Recourse>, EvalError> {
    let n = scenarios.len();
    let workers = thread::available_parallelism().map_or(1, |w| w.get()).min(n).max(1);
    let chunk = n.div_ceil(workers);
    let demands = scenarios.demands();
    let parts: Vec<Result<Vec<Recourse>, DroError>> = thread::scope(|scope| {
        let handles: Vec<_> = demands
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|xi| second_stage_cost(inst, h, xi)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Weighted lower quantile: the smallest value whose cumulative weight
/// reaches `q`.
fn weighted_quantile(sorted: &[(f64, f64)], q: f64) -> f64 {
    let mut acc = 0.0;
    for &(v, p) in sorted {
        acc += p;
        if acc >= q - 1e-12 {
            return v;
        }
    }
    sorted.last().map_or(0.0, |&(v, _)| v)
}

fn unmet_stats(values: &[f64], probs: &[f64]) -> UnmetStats {
    let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
    let var: f64 = values.iter().zip(probs).map(|(v, p)| p * (v - mean).powi(2)).sum();
    let mut sorted: Vec<(f64, f64)> = values.iter().copied().zip(probs.iter().copied()).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    UnmetStats {
        mean,
        std_dev: var.max(0.0).sqrt(),
        percentiles: UNMET_PERCENTILES.iter().map(|&l| weighted_quantile(&sorted, f64::from(l) / 100.0)).collect(),
    }
}

/// Fix the first stage and score it on `scenarios`.
pub fn out_of_sample_evaluate(
    inst: &Instance,
    plan: &Plan,
    scenarios: &ScenarioSet,
) -> Result<PlanEvaluation, EvalError> {
    check_plan(inst, plan)?;
    if scenarios.num_sites() != inst.num_sites() || scenarios.num_periods() != inst.periods {
        return Err(EvalError::Build(BuildError::Shape {
            what: "scenario demand".into(),
            expected: (inst.num_sites(), inst.periods),
            found: (scenarios.num_sites(), scenarios.num_periods()),
        }));
    }
    let recourse = solve_scenarios(inst, &plan.capacity, scenarios)?;
    let probs = scenarios.probabilities();
    let (nj, nt) = (inst.num_sites(), inst.periods);

    let operating: f64 = (0..inst.num_dcs()).filter(|&i| plan.open[i]).map(|i| inst.operating_cost[i]).sum();
    let capacity: f64 = (0..inst.num_dcs())
        .map(|i| (0..nt).map(|t| inst.capacity_unit_cost[i][t] * plan.capacity[i][t]).sum::<f64>())
        .sum();
    let mut b = CostBreakdown { operating, capacity, ..CostBreakdown::default() };
    let mut backlog_periods_mean = 0.0;
    let mut terminal = vec![0.0; nj];
    let mut demand = vec![0.0; nj];
    for (w, r) in recourse.iter().enumerate() {
        let p = probs[w];
        b.shipping += p * r.shipping_cost;
        b.inventory += p * r.inventory_cost;
        b.penalty += p * r.penalty_cost;
        backlog_periods_mean += p * r.backlog_periods();
        let d = scenarios.demand(w);
        for j in 0..nj {
            terminal[j] += p * r.backlog[j][nt - 1];
            demand[j] += p * d[j].iter().sum::<f64>();
        }
    }
    b.total = b.operating + b.capacity + b.shipping + b.inventory + b.penalty;
    let scenario_unmet: Vec<f64> = recourse.iter().map(Recourse::terminal_backlog).collect();
    Ok(PlanEvaluation {
        breakdown: b,
        unmet: unmet_stats(&scenario_unmet, probs),
        backlog_periods_mean,
        regional_unmet_pct: terminal
            .iter()
            .zip(&demand)
            .map(|(&u, &d)| if d > 0.0 { (100.0 * u / d).clamp(0.0, 100.0) } else { 0.0 })
            .collect(),
        scenario_recourse: recourse.iter().map(|r| r.objective).collect(),
        scenario_unmet,
    })
}

/// Scale every temporal budget by `factor`.
pub fn apply_scarcity(inst: &Instance, factor: f64) -> Result<Instance, EvalError> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(EvalError::ScarcityFactor(factor));
    }
    let mut out = inst.clone();
    for b in &mut out.temporal_budget {
        *b *= factor;
    }
    Ok(out)
}

/// Reassign DC statuses from a policy and a list of preopened site ids.
pub fn apply_dc_policy(inst: &Instance, policy: DcPolicy, preopened: &[String]) -> Result<Instance, EvalError> {
    let mut fixed = vec![false; inst.num_dcs()];
    for id in preopened {
        let i = inst.dc_index(id).ok_or_else(|| EvalError::UnknownSite(id.clone()))?;
        fixed[i] = true;
    }
    let mut out = inst.clone();
    for (site, &pre) in out.dc_sites.iter_mut().zip(&fixed) {
        site.status = match (policy, pre) {
            (DcPolicy::BestCase, _) => DcStatus::Candidate,
            (_, true) => DcStatus::Preopened,
            (DcPolicy::Default, false) => DcStatus::Candidate,
            (DcPolicy::MostRestrictive, false) => DcStatus::Forbidden,
        };
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct ComparisonRow {
    pub solution: PlanSolution,
    pub evaluation: PlanEvaluation,
    /// Out-of-sample total relative to the cheapest row, in percent.
    pub pct_over_best: f64,
}

/// Solve each approach and evaluate its plan on `out_sample`.
pub fn compare_approaches(
    inst: &Instance,
    approaches: &[Approach],
    in_sample: &ScenarioSet,
    nominal: &MomentEstimate,
    out_sample: &ScenarioSet,
    opts: &SolveOptions,
) -> Result<Vec<ComparisonRow>, EvalError> {
    let mut rows = Vec::with_capacity(approaches.len());
    for &a in approaches {
        let solution = solve_plan(inst, a, in_sample, nominal, opts)?;
        if solution.hit_limit() {
            log::warn!("{a}: node limit reached, using incumbent with gap {}", solution.best_bound);
        }
        let evaluation = out_of_sample_evaluate(inst, &solution.plan, out_sample)?;
        rows.push(ComparisonRow { solution, evaluation, pct_over_best: 0.0 });
    }
    let best = rows.iter().map(|r| r.evaluation.breakdown.total).fold(f64::INFINITY, f64::min);
    for r in &mut rows {
        let total = r.evaluation.breakdown.total;
        r.pct_over_best = if best.abs() > 0.0 { 100.0 * (total - best) / best.abs() } else { 0.0 };
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_site(periods: usize) -> Instance {
        let mut inst = Instance::zeroed(1, 1, periods);
        inst.operating_cost = vec![5.0];
        inst.capacity_unit_cost = vec![vec![1.0; periods]];
        inst.dc_capacity_limit = vec![50.0];
        inst.temporal_budget = vec![50.0; periods];
        inst.shipping_unit_cost = vec![vec![vec![0.5; periods]]];
        inst.penalty_unit_cost = vec![vec![10.0; periods]];
        inst
    }

    #[test]
    fn zero_demand_costs_only_first_stage() {
        let inst = one_site(2);
        let plan = Plan { open: vec![true], capacity: vec![vec![3.0, 4.0]] };
        let sc = ScenarioSet::point_mass(vec![vec![0.0, 0.0]]).unwrap();
        let e = out_of_sample_evaluate(&inst, &plan, &sc).unwrap();
        assert_eq!((e.breakdown.shipping, e.breakdown.inventory, e.breakdown.penalty), (0.0, 0.0, 0.0));
        assert!((e.breakdown.total - 12.0).abs() < 1e-12);
    }

    #[test]
    fn closed_plan_pays_cumulative_backlog() {
        let inst = one_site(2);
        let plan = Plan { open: vec![false], capacity: vec![vec![0.0, 0.0]] };
        let sc = ScenarioSet::point_mass(vec![vec![2.0, 3.0]]).unwrap();
        let e = out_of_sample_evaluate(&inst, &plan, &sc).unwrap();
        // u_1 = 2, u_2 = 5
        assert!((e.breakdown.penalty - 70.0).abs() < 1e-9);
        assert!((e.unmet.mean - 5.0).abs() < 1e-9);
        assert!((e.backlog_periods_mean - 7.0).abs() < 1e-9);
        assert!((e.regional_unmet_pct[0] - 100.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_plans_are_named() {
        let mut inst = one_site(1);
        let sc = ScenarioSet::point_mass(vec![vec![1.0]]).unwrap();
        let over = Plan { open: vec![true], capacity: vec![vec![60.0]] };
        let msg = out_of_sample_evaluate(&inst, &over, &sc).unwrap_err().to_string();
        assert!(msg.contains("capacity link"), "{msg}");
        inst.temporal_budget = vec![10.0];
        let over_budget = Plan { open: vec![true], capacity: vec![vec![20.0]] };
        let msg = out_of_sample_evaluate(&inst, &over_budget, &sc).unwrap_err().to_string();
        assert!(msg.contains("budget"), "{msg}");
    }

    #[test]
    fn weighted_percentiles() {
        let s = unmet_stats(&[4.0, 1.0, 3.0, 2.0], &[0.25; 4]);
        assert!((s.mean - 2.5).abs() < 1e-12);
        assert!((s.std_dev - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.percentiles, vec![3.0, 4.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn scarcity_scales_budget_only() {
        let mut inst = one_site(2);
        inst.temporal_budget = vec![100.0, 200.0];
        let s = apply_scarcity(&inst, 0.1).unwrap();
        assert_eq!(s.temporal_budget, vec![10.0, 20.0]);
        assert_eq!(s.dc_capacity_limit, inst.dc_capacity_limit);
        assert_eq!(apply_scarcity(&inst, 1.0).unwrap(), inst);
        assert!(apply_scarcity(&inst, 0.0).is_err());
        assert!(apply_scarcity(&inst, 1.5).is_err());
    }

    #[test]
    fn dc_policies() {
        let inst = Instance::zeroed(3, 1, 1);
        let pre = vec![inst.dc_sites[0].id.clone()];
        let st = |i: &Instance| i.dc_sites.iter().map(|s| s.status).collect::<Vec<_>>();
        use DcStatus::*;
        assert_eq!(
            st(&apply_dc_policy(&inst, DcPolicy::MostRestrictive, &pre).unwrap()),
            vec![Preopened, Forbidden, Forbidden]
        );
        assert_eq!(
            st(&apply_dc_policy(&inst, DcPolicy::Default, &pre).unwrap()),
            vec![Preopened, Candidate, Candidate]
        );
        assert_eq!(st(&apply_dc_policy(&inst, DcPolicy::BestCase, &pre).unwrap()), vec![Candidate; 3]);
        assert_eq!(
            apply_dc_policy(&inst, DcPolicy::Default, &[]).unwrap(),
            apply_dc_policy(&inst, DcPolicy::BestCase, &[]).unwrap()
        );
        assert!(matches!(
            apply_dc_policy(&inst, DcPolicy::Default, &["nowhere".into()]),
            Err(EvalError::UnknownSite(_))
        ));
    }

    #[test]
    fn parse_names() {
        assert_eq!("SP".parse::<Approach>().unwrap(), Approach::Sp);
        assert_eq!("most-restrictive".parse::<DcPolicy>().unwrap(), DcPolicy::MostRestrictive);
        assert!("lp".parse::<Approach>().is_err());
    }
}
