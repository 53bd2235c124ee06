//! Writes the 15-DC, 10-region US vaccine instance used by the fixtures.
//!
//! Distances are great-circle miles. Operating costs and the refrigeration
//! surcharge are illustrative round numbers, not sourced figures.
//!
//! Usage: `cargo run -p resdist-core --example us_fixture [OUT]`

use std::path::PathBuf;

use resdist_core::instance::{DcSite, DcStatus, DemandSite, Instance};
use resdist_core::io::{haversine_miles, save_instance, shipping_cost_per_unit};

const PER_MILE: f64 = 3.0;
const DOSES_PER_TRUCK: f64 = 230_400.0;
const REFRIGERATION_PER_DOSE: f64 = 0.0005;
const CAPACITY_COST: f64 = 25.0;
const INVENTORY_COST: f64 = 0.00008;
const PENALTY: f64 = 100.0;
/// Phase 1 daily maximum per DC times a two-week period.
const PHASE1_LIMIT: f64 = 500_000.0 * 14.0;
const PERIODS: usize = 2;

/// id, label, lat, lon, monthly rent per square foot
const PREOPENED: [(&str, &str, f64, f64, f64); 5] = [
    ("kalamazoo", "Kalamazoo, MI", 42.2917, -85.5872, 1.10),
    ("pleasant_prairie", "Pleasant Prairie, WI", 42.5534, -87.9334, 1.15),
    ("bloomington", "Bloomington, IN", 39.1653, -86.5264, 1.05),
    ("norwood", "Norwood, MA", 42.1945, -71.1995, 1.40),
    ("saint_louis", "Saint Louis, MO", 38.6270, -90.1994, 1.00),
];

const REGIONS: [(&str, &str, f64, f64, f64); 10] = [
    ("boston", "Boston, MA", 42.3601, -71.0589, 1.60),
    ("new_york", "New York City, NY", 40.7128, -74.0060, 1.75),
    ("philadelphia", "Philadelphia, PA", 39.9526, -75.1652, 1.30),
    ("atlanta", "Atlanta, GA", 33.7490, -84.3880, 1.15),
    ("chicago", "Chicago, IL", 41.8781, -87.6298, 1.25),
    ("dallas", "Dallas, TX", 32.7767, -96.7970, 1.05),
    ("kansas_city", "Kansas City, KS", 39.1141, -94.6275, 0.95),
    ("denver", "Denver, CO", 39.7392, -104.9903, 1.20),
    ("san_francisco", "San Francisco, CA", 37.7749, -122.4194, 1.70),
    ("seattle", "Seattle, WA", 47.6062, -122.3321, 1.45),
];

const SQUARE_FEET: f64 = 10_000.0;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/us_vaccine_instance.json"));

    let dcs: Vec<_> = PREOPENED
        .iter()
        .map(|s| (s, DcStatus::Preopened))
        .chain(REGIONS.iter().map(|s| (s, DcStatus::Candidate)))
        .collect();
    let (ni, nj) = (dcs.len(), REGIONS.len());
    let mut inst = Instance::zeroed(ni, nj, PERIODS);

    for (i, ((id, label, lat, lon, rent), status)) in dcs.iter().enumerate() {
        inst.dc_sites[i] =
            DcSite { id: format!("dc_{id}"), label: label.to_string(), coords: Some([*lat, *lon]), status: *status };
        inst.operating_cost[i] = (rent * SQUARE_FEET).round();
    }
    for (j, (id, label, lat, lon, _)) in REGIONS.iter().enumerate() {
        inst.demand_sites[j] = DemandSite {
            id: format!("region_{}_{id}", j + 1),
            label: format!("Region {} ({label})", j + 1),
            coords: Some([*lat, *lon]),
        };
    }
    for i in 0..ni {
        let a = inst.dc_sites[i].coords.expect("set above");
        for j in 0..nj {
            let b = inst.demand_sites[j].coords.expect("set above");
            let c = shipping_cost_per_unit(haversine_miles(a, b), PER_MILE, DOSES_PER_TRUCK, REFRIGERATION_PER_DOSE)?;
            // Rounded so the fixture text stays readable and stable.
            inst.shipping_unit_cost[i][j] = vec![(c * 1e8).round() / 1e8; PERIODS];
        }
        inst.capacity_unit_cost[i] = vec![CAPACITY_COST; PERIODS];
    }
    inst.inventory_unit_cost = vec![vec![INVENTORY_COST; PERIODS]; nj];
    inst.penalty_unit_cost = vec![vec![PENALTY; PERIODS]; nj];
    inst.dc_capacity_limit = vec![PHASE1_LIMIT; ni];
    inst.temporal_budget = vec![PHASE1_LIMIT * ni as f64; PERIODS];

    save_instance(&inst, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
