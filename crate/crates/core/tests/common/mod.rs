//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use resdist_core::instance::{DcStatus, Instance};
use resdist_core::scenario::{DemandMatrix, ScenarioSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random instance whose budget binds loosely and whose penalty dominates
/// shipping, so plans are neither trivial nor empty.
pub fn random_instance(seed: u64, dcs: usize, sites: usize, periods: usize) -> Instance {
    let mut r = rng(seed);
    let mut inst = Instance::zeroed(dcs, sites, periods);
    for i in 0..dcs {
        inst.operating_cost[i] = r.random_range(20.0..120.0);
        inst.dc_capacity_limit[i] = r.random_range(15.0..60.0);
        for t in 0..periods {
            inst.capacity_unit_cost[i][t] = r.random_range(0.5..3.0);
        }
        for j in 0..sites {
            for t in 0..periods {
                inst.shipping_unit_cost[i][j][t] = r.random_range(0.1..2.0);
            }
        }
    }
    for j in 0..sites {
        for t in 0..periods {
            inst.inventory_unit_cost[j][t] = r.random_range(0.01..0.5);
            inst.penalty_unit_cost[j][t] = r.random_range(8.0..30.0);
        }
        inst.initial_inventory[j] = r.random_range(0.0..3.0);
        inst.initial_backlog[j] = r.random_range(0.0..2.0);
    }
    let total: f64 = inst.dc_capacity_limit.iter().sum();
    for t in 0..periods {
        inst.temporal_budget[t] = r.random_range(0.4..0.9) * total;
    }
    inst
}

/// Same as [`random_instance`] with the first DC preopened and the last one
/// forbidden when there are at least three DCs.
pub fn random_instance_with_status(seed: u64, dcs: usize, sites: usize, periods: usize) -> Instance {
    let mut inst = random_instance(seed, dcs, sites, periods);
    if dcs >= 3 {
        inst.dc_sites[0].status = DcStatus::Preopened;
        inst.dc_sites[dcs - 1].status = DcStatus::Forbidden;
    }
    inst
}

pub fn random_demand(r: &mut impl Rng, sites: usize, periods: usize, lo: f64, hi: f64) -> DemandMatrix {
    (0..sites).map(|_| (0..periods).map(|_| r.random_range(lo..hi)).collect()).collect()
}

pub fn random_scenarios(seed: u64, count: usize, sites: usize, periods: usize) -> ScenarioSet {
    let mut r = rng(seed);
    let demand = (0..count).map(|_| random_demand(&mut r, sites, periods, 2.0, 25.0)).collect();
    ScenarioSet::equiprobable(demand).expect("valid scenarios")
}

/// Random capacities that respect limits but ignore the budget.
pub fn random_capacity(r: &mut impl Rng, inst: &Instance) -> Vec<Vec<f64>> {
    inst.dc_capacity_limit.iter().map(|&m| (0..inst.periods).map(|_| r.random_range(0.0..m)).collect()).collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
