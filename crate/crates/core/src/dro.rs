//! Recourse and worst-case-expectation oracles.
//!
//! The second-stage dual is built as its own LP rather than read from the
//! solver's row duals, so the two can check each other.

use resdist_solver::{solve_lp, LpSolution, LpStatus};
use thiserror::Error;

use crate::formulations::{
    build_second_stage, build_second_stage_dual, build_worst_case_dual_lp, build_worst_case_lp, BuildError, ModelIr,
    VarKey,
};
use crate::instance::Instance;
use crate::scenario::{AmbiguitySpec, DemandMatrix};

#[derive(Debug, Error)]
pub enum DroError {
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("{what} LP ended with status {status:?}")]
    Solver { what: &'static str, status: LpStatus },
}

/// Optimal recourse for one demand realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Recourse {
    pub objective: f64,
    /// `[i][j][t]`
    pub ship: Vec<Vec<Vec<f64>>>,
    /// `[j][t]`
    pub inventory: Vec<Vec<f64>>,
    /// `[j][t]`
    pub backlog: Vec<Vec<f64>>,
    pub shipping_cost: f64,
    pub inventory_cost: f64,
    pub penalty_cost: f64,
}

impl Recourse {
    /// Backlog left at the end of the horizon, summed over sites.
    pub fn terminal_backlog(&self) -> f64 {
        self.backlog.iter().map(|r| r.last().copied().unwrap_or(0.0)).sum()
    }

    /// Backlog summed over sites and periods.
    pub fn backlog_periods(&self) -> f64 {
        self.backlog.iter().flatten().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualCertificate {
    /// `[i][t]`, all nonpositive.
    pub theta: Vec<Vec<f64>>,
    /// `[j][t]`
    pub gamma: Vec<Vec<f64>>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCase {
    pub value: f64,
    /// Worst-case probability of each support point.
    pub p: Vec<f64>,
    /// Recourse value at each support point.
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorstCaseDual {
    pub value: f64,
    /// Duals of the lower moment bounds, in moment-system order.
    pub alpha: Vec<f64>,
    /// Duals of the upper moment bounds.
    pub beta: Vec<f64>,
}

fn solve(ir: &ModelIr, what: &'static str) -> Result<LpSolution, DroError> {
    let sol = solve_lp(ir.model());
    match sol.status {
        LpStatus::Optimal => Ok(sol),
        status => Err(DroError::Solver { what, status }),
    }
}

/// Minimum shipping, holding and backlog cost for capacities `h[i][t]` and
/// demand `xi[j][t]`. Always feasible because backlog absorbs any shortfall.
pub fn second_stage_cost(inst: &Instance, h: &[Vec<f64>], xi: &DemandMatrix) -> Result<Recourse, DroError> {
    let ir = build_second_stage(inst, h, xi)?;
    let sol = solve(&ir, "second-stage")?;
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    let v = |key| ir.value(&sol.x, key).max(0.0);
    let ship: Vec<Vec<Vec<f64>>> = (0..ni)
        .map(|i| (0..nj).map(|j| (0..nt).map(|t| v(VarKey::Ship { w: 0, i, j, t })).collect()).collect())
        .collect();
    let inventory: Vec<Vec<f64>> =
        (0..nj).map(|j| (0..nt).map(|t| v(VarKey::Inventory { w: 0, j, t })).collect()).collect();
    let backlog: Vec<Vec<f64>> =
        (0..nj).map(|j| (0..nt).map(|t| v(VarKey::Backlog { w: 0, j, t })).collect()).collect();

    let mut shipping_cost = 0.0;
    for i in 0..ni {
        for j in 0..nj {
            for t in 0..nt {
                shipping_cost += inst.shipping_unit_cost[i][j][t] * ship[i][j][t];
            }
        }
    }
    let mut inventory_cost = 0.0;
    let mut penalty_cost = 0.0;
    for j in 0..nj {
        for t in 0..nt {
            inventory_cost += inst.inventory_unit_cost[j][t] * inventory[j][t];
            penalty_cost += inst.penalty_unit_cost[j][t] * backlog[j][t];
        }
    }
    Ok(Recourse { objective: sol.objective, ship, inventory, backlog, shipping_cost, inventory_cost, penalty_cost })
}

/// Optimal `(theta, gamma)` of the recourse dual and its objective value.
pub fn second_stage_dual(inst: &Instance, h: &[Vec<f64>], xi: &DemandMatrix) -> Result<DualCertificate, DroError> {
    let ir = build_second_stage_dual(inst, h, xi)?;
    let sol = solve(&ir, "second-stage dual")?;
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    Ok(DualCertificate {
        theta: (0..ni).map(|i| (0..nt).map(|t| ir.value(&sol.x, VarKey::Theta { i, t }).min(0.0)).collect()).collect(),
        gamma: (0..nj).map(|j| (0..nt).map(|t| ir.value(&sol.x, VarKey::Gamma { j, t })).collect()).collect(),
        objective: -sol.objective,
    })
}

/// Recourse value at every support point.
pub fn support_recourse(inst: &Instance, h: &[Vec<f64>], amb: &AmbiguitySpec) -> Result<Vec<f64>, DroError> {
    amb.support().iter().map(|xi| second_stage_cost(inst, h, xi).map(|r| r.objective)).collect()
}

/// Worst-case expected recourse of capacities `h` over the ambiguity set.
pub fn worst_case_expectation(inst: &Instance, h: &[Vec<f64>], amb: &AmbiguitySpec) -> Result<WorstCase, DroError> {
    let g = support_recourse(inst, h, amb)?;
    worst_case_from_values(amb, g)
}

/// Worst-case expectation for given recourse values `g[k]`.
pub fn worst_case_from_values(amb: &AmbiguitySpec, g: Vec<f64>) -> Result<WorstCase, DroError> {
    let ir = build_worst_case_lp(amb, &g)?;
    let sol = solve(&ir, "worst-case expectation")?;
    Ok(WorstCase {
        value: -sol.objective,
        p: (0..g.len()).map(|k| ir.value(&sol.x, VarKey::Weight { k }).max(0.0)).collect(),
        g,
    })
}

/// Dual form of [`worst_case_expectation`].
pub fn worst_case_expectation_dual(
    inst: &Instance,
    h: &[Vec<f64>],
    amb: &AmbiguitySpec,
) -> Result<WorstCaseDual, DroError> {
    let g = support_recourse(inst, h, amb)?;
    worst_case_dual_from_values(amb, &g)
}

pub fn worst_case_dual_from_values(amb: &AmbiguitySpec, g: &[f64]) -> Result<WorstCaseDual, DroError> {
    let ir = build_worst_case_dual_lp(amb, g)?;
    let sol = solve(&ir, "worst-case dual")?;
    let ns = amb.moment_system().len();
    Ok(WorstCaseDual {
        value: sol.objective,
        alpha: (0..ns).map(|s| ir.value(&sol.x, VarKey::MomentLo { s })).collect(),
        beta: (0..ns).map(|s| ir.value(&sol.x, VarKey::MomentHi { s })).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{build_ambiguity_bounds, empirical_moments, ScenarioSet};

    fn chain(periods: usize) -> Instance {
        let mut inst = Instance::zeroed(1, 1, periods);
        inst.dc_capacity_limit = vec![100.0];
        inst.temporal_budget = vec![100.0; periods];
        inst.shipping_unit_cost = vec![vec![vec![1.0; periods]]];
        inst.inventory_unit_cost = vec![vec![0.5; periods]];
        inst.penalty_unit_cost = vec![vec![100.0; periods]];
        inst
    }

    #[test]
    fn backlog_only_without_capacity() {
        let r = second_stage_cost(&chain(1), &[vec![0.0]], &vec![vec![5.0]]).unwrap();
        assert!((r.objective - 500.0).abs() < 1e-9);
        assert!((r.backlog[0][0] - 5.0).abs() < 1e-9);
    }

    #[test]
    fn single_arc_ships_demand() {
        let r = second_stage_cost(&chain(1), &[vec![10.0]], &vec![vec![7.0]]).unwrap();
        assert!((r.objective - 7.0).abs() < 1e-9);
    }

    #[test]
    fn two_period_holds_stock() {
        let r = second_stage_cost(&chain(2), &[vec![10.0, 0.0]], &vec![vec![3.0, 7.0]]).unwrap();
        assert!((r.objective - 13.5).abs() < 1e-9);
        assert!((r.inventory[0][0] - 7.0).abs() < 1e-9);
        assert!((r.shipping_cost + r.inventory_cost + r.penalty_cost - r.objective).abs() < 1e-9);
    }

    #[test]
    fn dual_matches_primal_and_zero_demand() {
        let inst = chain(2);
        let h = [vec![4.0, 1.0]];
        let xi = vec![vec![3.0, 7.0]];
        let p = second_stage_cost(&inst, &h, &xi).unwrap();
        let d = second_stage_dual(&inst, &h, &xi).unwrap();
        assert!((p.objective - d.objective).abs() < 1e-6);
        assert!(d.theta.iter().flatten().all(|&v| v <= 1e-9));
        let z = second_stage_dual(&inst, &h, &vec![vec![0.0, 0.0]]).unwrap();
        assert!(z.objective.abs() < 1e-9);
    }

    #[test]
    fn huge_capacity_has_zero_theta() {
        let d = second_stage_dual(&chain(2), &[vec![1e6, 1e6]], &vec![vec![3.0, 7.0]]).unwrap();
        assert!(d.theta.iter().flatten().all(|&v| v.abs() < 1e-9));
    }

    #[test]
    fn worst_case_single_point() {
        let inst = chain(1);
        let sc = ScenarioSet::point_mass(vec![vec![5.0]]).unwrap();
        let amb = build_ambiguity_bounds(&empirical_moments(&sc), 0.1, 0.5, 2.0, &sc).unwrap();
        let wc = worst_case_expectation(&inst, &[vec![2.0]], &amb).unwrap();
        assert!((wc.value - (2.0 + 300.0)).abs() < 1e-6);
        assert!((wc.p[0] - 1.0).abs() < 1e-9);
        let dual = worst_case_expectation_dual(&inst, &[vec![2.0]], &amb).unwrap();
        assert!((dual.value - wc.value).abs() < 1e-6);
    }

    #[test]
    fn loose_bounds_concentrate_on_larger_recourse() {
        let sc = ScenarioSet::equiprobable(vec![vec![vec![2.0]], vec![vec![8.0]]]).unwrap();
        let amb = build_ambiguity_bounds(&empirical_moments(&sc), 10.0, 0.0, 100.0, &sc).unwrap();
        let wc = worst_case_from_values(&amb, vec![1.0, 4.0]).unwrap();
        assert!((wc.value - 4.0).abs() < 1e-9);
        assert!((wc.p[1] - 1.0).abs() < 1e-9);
        let eq = worst_case_from_values(&amb, vec![3.0, 3.0]).unwrap();
        assert!((eq.value - 3.0).abs() < 1e-9);
    }
}
