use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resdist_solver::{enumerate_bruteforce, solve_milp, MilpError, MilpStatus, Model, Relation, VarId};

const INF: f64 = f64::INFINITY;

/// Uncapacitated-style facility location: open sites at a fixed cost, install
/// capacity up to `cap * open`, ship to customers, pay a penalty for shortfall.
fn facility_model(seed: u64, sites: usize, customers: usize) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Model::new();
    let open: Vec<VarId> = (0..sites).map(|i| m.add_binary(format!("x_{i}"))).collect();
    let cap: Vec<VarId> = (0..sites).map(|i| m.add_continuous(format!("h_{i}"), 0.0, INF)).collect();
    for i in 0..sites {
        m.set_cost(open[i], rng.random_range(50.0..400.0));
        m.set_cost(cap[i], rng.random_range(1.0..3.0));
        let limit = rng.random_range(20.0..80.0);
        m.add_constraint(format!("big_m_{i}"), vec![(cap[i], 1.0), (open[i], -limit)], Relation::Le, 0.0);
    }
    let mut ship = vec![Vec::new(); sites];
    for (i, row) in ship.iter_mut().enumerate() {
        for j in 0..customers {
            let s = m.add_continuous(format!("s_{i}_{j}"), 0.0, INF);
            m.set_cost(s, rng.random_range(0.1..5.0));
            row.push(s);
        }
    }
    for i in 0..sites {
        let mut terms: Vec<(VarId, f64)> = ship[i].iter().map(|&s| (s, 1.0)).collect();
        terms.push((cap[i], -1.0));
        m.add_constraint(format!("ship_{i}"), terms, Relation::Le, 0.0);
    }
    for j in 0..customers {
        let u = m.add_continuous(format!("u_{j}"), 0.0, INF);
        m.set_cost(u, 20.0);
        let mut terms: Vec<(VarId, f64)> = ship.iter().map(|row| (row[j], 1.0)).collect();
        terms.push((u, 1.0));
        m.add_constraint(format!("dem_{j}"), terms, Relation::Eq, rng.random_range(5.0..30.0));
    }
    m
}

#[test]
fn integral_relaxation_needs_one_node() {
    let mut m = Model::new();
    let x = m.add_binary("x");
    let y = m.add_continuous("y", 0.0, 10.0);
    m.set_cost(x, 1.0);
    m.set_cost(y, 1.0);
    m.add_constraint("r", vec![(y, 1.0)], Relation::Ge, 2.0);
    let sol = solve_milp(&m, 1000, 0.0).unwrap();
    assert_eq!(sol.status, MilpStatus::Optimal);
    assert_eq!(sol.nodes, 1);
    assert_eq!(sol.x, vec![0.0, 2.0]);
}

#[test]
fn fractional_relaxation_resolved_like_enumeration() {
    // Two sites; the relaxation opens both fractionally because the fixed
    // cost scales with x, but a single site is cheaper once x is integral.
    let mut m = Model::new();
    let x: Vec<VarId> = (0..2).map(|i| m.add_binary(format!("x{i}"))).collect();
    let h: Vec<VarId> = (0..2).map(|i| m.add_continuous(format!("h{i}"), 0.0, INF)).collect();
    for i in 0..2 {
        m.set_cost(x[i], 1000.0);
        m.set_cost(h[i], 1.0 + i as f64);
        m.add_constraint(format!("bigm{i}"), vec![(h[i], 1.0), (x[i], -10.0)], Relation::Le, 0.0);
    }
    m.add_constraint("demand", vec![(h[0], 1.0), (h[1], 1.0)], Relation::Ge, 8.0);
    let bb = solve_milp(&m, 1000, 0.0).unwrap();
    let bf = enumerate_bruteforce(&m).unwrap();
    assert_eq!(bb.status, MilpStatus::Optimal);
    assert!((bb.objective - bf.objective).abs() < 1e-9);
    assert!((bb.objective - 1008.0).abs() < 1e-9);
    assert_eq!(bb.x[0] + bb.x[1], 1.0);
}

#[test]
fn no_free_binaries_is_a_single_lp() {
    let mut m = facility_model(3, 3, 4);
    for i in 0..3 {
        m.set_bounds(VarId(i), 1.0, 1.0);
    }
    let bb = solve_milp(&m, 1000, 0.0).unwrap();
    assert_eq!(bb.nodes, 1);
    let bf = enumerate_bruteforce(&m).unwrap();
    assert_eq!(bf.nodes, 1);
    assert!((bb.objective - bf.objective).abs() < 1e-9);
}

#[test]
fn bruteforce_counts_assignments_and_enforces_limit() {
    let m = facility_model(4, 3, 3);
    let bf = enumerate_bruteforce(&m).unwrap();
    assert_eq!(bf.nodes, 8);
    let m = facility_model(4, 13, 2);
    assert_eq!(enumerate_bruteforce(&m).unwrap_err(), MilpError::TooManyBinaries { count: 13, limit: 12 });
}

#[test]
fn branch_and_bound_agrees_with_enumeration() {
    for seed in 0..20 {
        let sites = 2 + (seed as usize % 7);
        let m = facility_model(seed, sites, 5);
        let bb = solve_milp(&m, 100_000, 0.0).unwrap();
        let bf = enumerate_bruteforce(&m).unwrap();
        assert_eq!(bb.status, MilpStatus::Optimal);
        assert!(
            (bb.objective - bf.objective).abs() <= 1e-6 * bf.objective.abs().max(1.0),
            "seed {seed}: {} vs {}",
            bb.objective,
            bf.objective
        );
        assert!((bb.objective - bb.best_bound).abs() <= 1e-6 * bb.objective.abs().max(1.0));
        assert!(m.max_violation(&bb.x) < 1e-6);
        for w in bb.bound_trace.windows(2) {
            assert!(w[1] >= w[0], "bound decreased: {:?}", w);
        }
    }
}

#[test]
fn search_is_deterministic() {
    let m = facility_model(42, 8, 6);
    let a = solve_milp(&m, 100_000, 0.0).unwrap();
    let b = solve_milp(&m, 100_000, 0.0).unwrap();
    assert_eq!(a.nodes, b.nodes);
    assert_eq!(a.x, b.x);
    assert_eq!(a.bound_trace, b.bound_trace);
}

#[test]
fn node_limit_reports_status() {
    let m = facility_model(42, 10, 6);
    let full = solve_milp(&m, 100_000, 0.0).unwrap();
    assert!(full.nodes > 3, "instance too easy for this test");
    let cut = solve_milp(&m, 3, 0.0).unwrap();
    assert_eq!(cut.status, MilpStatus::NodeLimit);
    assert!(cut.best_bound <= full.objective + 1e-9);
}

#[test]
fn loose_gap_stops_early() {
    let m = facility_model(42, 10, 6);
    let sol = solve_milp(&m, 100_000, 0.5).unwrap();
    assert!(matches!(sol.status, MilpStatus::Optimal | MilpStatus::GapLimit));
    assert!(sol.objective - sol.best_bound <= 0.5 * sol.objective.abs() + 1e-9);
}

#[test]
fn infeasible_and_non_binary_models() {
    let mut m = Model::new();
    let x = m.add_binary("x");
    m.add_constraint("r", vec![(x, 1.0)], Relation::Eq, 0.5);
    assert_eq!(solve_milp(&m, 100, 0.0).unwrap().status, MilpStatus::Infeasible);
    assert_eq!(enumerate_bruteforce(&m).unwrap().status, MilpStatus::Infeasible);

    let mut m = Model::new();
    m.add_var("k", 0.0, 5.0, true);
    assert!(matches!(solve_milp(&m, 100, 0.0), Err(MilpError::NonBinaryInteger(_))));
}
