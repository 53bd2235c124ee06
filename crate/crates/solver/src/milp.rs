//! Best-first branch-and-bound over binary variables, plus an exhaustive
//! enumeration oracle.
//!
//! Nodes are evaluated eagerly: both children of a branched node are solved
//! (warm-started from the parent's basis, concurrently for larger models)
//! before being queued, and the queue is ordered by LP bound with FIFO
//! tie-breaking so the search tree is a pure function of the input.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::lp::{Basis, LpOptions, LpSolution, LpStatus, PreparedLp};
use crate::model::{Model, ModelError, VarId};

/// Upper limit on free binaries accepted by [`enumerate_bruteforce`].
pub const BRUTEFORCE_LIMIT: usize = 12;

/// Models with at least this many rows plus columns solve sibling nodes on
/// two threads.
const PARALLEL_THRESHOLD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MilpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    GapLimit,
    NodeLimit,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MilpError {
    #[error("integer variable `{0}` is not binary; only 0/1 variables are supported")]
    NonBinaryInteger(String),
    #[error("{count} free binaries exceed the enumeration limit of {limit}")]
    TooManyBinaries { count: usize, limit: usize },
    #[error("LP solver hit its iteration limit")]
    IterationLimit,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct MilpOptions {
    pub node_limit: usize,
    /// Relative gap at which remaining nodes are discarded.
    pub gap_tol: f64,
    pub integrality_tol: f64,
    pub lp: LpOptions,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self { node_limit: 100_000, gap_tol: 1e-9, integrality_tol: 1e-6, lp: LpOptions::default() }
    }
}

#[derive(Debug, Clone)]
pub struct MilpSolution {
    pub status: MilpStatus,
    /// Incumbent values; empty when no integer-feasible point was found.
    pub x: Vec<f64>,
    /// Incumbent objective (`+inf` without an incumbent).
    pub objective: f64,
    pub best_bound: f64,
    /// Number of LP relaxations solved.
    pub nodes: usize,
    /// Bounds of nodes in the order they were taken from the queue.
    pub bound_trace: Vec<f64>,
}

impl MilpSolution {
    pub fn has_incumbent(&self) -> bool {
        !self.x.is_empty()
    }

    pub fn gap(&self) -> f64 {
        self.objective - self.best_bound
    }
}

/// Branch-and-bound with default tolerances and the given limits.
pub fn solve_milp(model: &Model, node_limit: usize, gap_tol: f64) -> Result<MilpSolution, MilpError> {
    let opts = MilpOptions { node_limit, gap_tol, ..MilpOptions::default() };
    solve_milp_with(model, &opts)
}

fn optimality_tol(obj: f64) -> f64 {
    f64::max(1e-6, 1e-6 * obj.abs())
}

fn check_binaries(model: &Model) -> Result<(), MilpError> {
    model.check()?;
    for v in model.vars() {
        if v.integer && (v.lower < 0.0 || v.upper > 1.0) {
            return Err(MilpError::NonBinaryInteger(v.name.clone()));
        }
    }
    Ok(())
}

struct Node {
    bound: f64,
    seq: u64,
    fixings: Vec<(usize, f64)>,
    branch_var: usize,
    basis: Basis,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then lowest sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Most fractional integer variable, ties to the lowest index.
fn branching_var(model: &Model, x: &[f64], tol: f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, v) in model.vars().iter().enumerate() {
        if !v.integer {
            continue;
        }
        let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
        if frac > tol && best.is_none_or(|b| frac > b.1) {
            best = Some((j, frac));
        }
    }
    best.map(|b| b.0)
}

fn node_bounds(model: &Model, fixings: &[(usize, f64)]) -> Vec<(f64, f64)> {
    let mut b: Vec<(f64, f64)> = model.vars().iter().map(|v| (v.lower, v.upper)).collect();
    for &(j, val) in fixings {
        b[j] = (val, val);
    }
    b
}

fn snap_integers(model: &Model, x: &mut [f64]) {
    for (v, val) in model.vars().iter().zip(x.iter_mut()) {
        if v.integer {
            *val = val.round();
        }
    }
}

pub fn solve_milp_with(model: &Model, opts: &MilpOptions) -> Result<MilpSolution, MilpError> {
    check_binaries(model)?;
    let lp = PreparedLp::new(model, &opts.lp);
    let parallel = lp.num_rows() + lp.num_cols() >= PARALLEL_THRESHOLD;

    let mut incumbent: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0usize;
    let mut trace = Vec::new();
    let mut seq = 0u64;
    let mut heap = BinaryHeap::new();
    // smallest bound among nodes discarded only because of the gap tolerance
    let mut gap_pruned = f64::INFINITY;

    let (root, root_basis) = lp.solve(None, None);
    nodes += 1;
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(no_incumbent(MilpStatus::Infeasible, nodes, f64::INFINITY)),
        LpStatus::Unbounded => return Ok(no_incumbent(MilpStatus::Unbounded, nodes, f64::NEG_INFINITY)),
        LpStatus::IterationLimit => return Err(MilpError::IterationLimit),
    }
    match branching_var(model, &root.x, opts.integrality_tol) {
        None => {
            let mut x = root.x;
            snap_integers(model, &mut x);
            return Ok(MilpSolution {
                status: MilpStatus::Optimal,
                objective: root.objective,
                best_bound: root.objective,
                x,
                nodes,
                bound_trace: vec![root.objective],
            });
        }
        Some(j) => {
            heap.push(Node { bound: root.objective, seq: 0, fixings: Vec::new(), branch_var: j, basis: root_basis })
        }
    }

    let mut hit_node_limit = false;
    while let Some(node) = heap.pop() {
        if let Some((_, inc)) = &incumbent {
            if node.bound >= inc - prune_tol(*inc, opts.gap_tol) {
                if node.bound < inc - optimality_tol(*inc) {
                    gap_pruned = gap_pruned.min(node.bound);
                }
                // every queued node has an equal or larger bound
                for rest in heap.drain() {
                    if rest.bound < inc - optimality_tol(*inc) {
                        gap_pruned = gap_pruned.min(rest.bound);
                    }
                }
                break;
            }
        }
        if nodes + 2 > opts.node_limit {
            heap.push(node);
            hit_node_limit = true;
            break;
        }
        trace.push(node.bound);

        let children: Vec<Vec<(usize, f64)>> = [0.0, 1.0]
            .iter()
            .map(|&v| {
                let mut f = node.fixings.clone();
                f.push((node.branch_var, v));
                f
            })
            .collect();
        let bounds: Vec<Vec<(f64, f64)>> = children.iter().map(|f| node_bounds(model, f)).collect();
        let results: Vec<(LpSolution, Basis)> = if parallel {
            std::thread::scope(|s| {
                let handles: Vec<_> = bounds
                    .iter()
                    .map(|b| {
                        let lp = &lp;
                        let warm = &node.basis;
                        s.spawn(move || lp.solve(Some(b), Some(warm)))
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("node solve panicked")).collect()
            })
        } else {
            bounds.iter().map(|b| lp.solve(Some(b), Some(&node.basis))).collect()
        };
        nodes += 2;

        for (fixings, (sol, basis)) in children.into_iter().zip(results) {
            match sol.status {
                LpStatus::Optimal => {}
                LpStatus::Infeasible => continue,
                LpStatus::Unbounded => {
                    return Ok(no_incumbent(MilpStatus::Unbounded, nodes, f64::NEG_INFINITY));
                }
                LpStatus::IterationLimit => return Err(MilpError::IterationLimit),
            }
            let bound = sol.objective.max(node.bound);
            if let Some((_, inc)) = &incumbent {
                if bound >= inc - prune_tol(*inc, opts.gap_tol) {
                    if bound < inc - optimality_tol(*inc) {
                        gap_pruned = gap_pruned.min(bound);
                    }
                    continue;
                }
            }
            match branching_var(model, &sol.x, opts.integrality_tol) {
                None => {
                    let better = incumbent.as_ref().is_none_or(|(_, inc)| sol.objective < *inc);
                    if better {
                        let mut x = sol.x;
                        snap_integers(model, &mut x);
                        incumbent = Some((x, sol.objective));
                    }
                }
                Some(j) => {
                    seq += 1;
                    heap.push(Node { bound, seq, fixings, branch_var: j, basis });
                }
            }
        }
    }

    let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let Some((x, objective)) = incumbent else {
        let status = if hit_node_limit { MilpStatus::NodeLimit } else { MilpStatus::Infeasible };
        let mut sol = no_incumbent(status, nodes, open_bound);
        sol.bound_trace = trace;
        return Ok(sol);
    };
    let best_bound = objective.min(open_bound).min(gap_pruned);
    let status = if hit_node_limit {
        MilpStatus::NodeLimit
    } else if objective - best_bound <= optimality_tol(objective) {
        MilpStatus::Optimal
    } else {
        MilpStatus::GapLimit
    };
    Ok(MilpSolution { status, x, objective, best_bound, nodes, bound_trace: trace })
}

fn prune_tol(incumbent: f64, gap_tol: f64) -> f64 {
    f64::max(1e-12 * (1.0 + incumbent.abs()), gap_tol * incumbent.abs())
}

fn no_incumbent(status: MilpStatus, nodes: usize, bound: f64) -> MilpSolution {
    MilpSolution { status, x: Vec::new(), objective: f64::INFINITY, best_bound: bound, nodes, bound_trace: Vec::new() }
}

/// Solve the LP for every 0/1 assignment of the free binaries and keep the
/// best feasible one (first found on ties). Exact by construction.
pub fn enumerate_bruteforce(model: &Model) -> Result<MilpSolution, MilpError> {
    check_binaries(model)?;
    let free: Vec<VarId> = model.free_integer_vars();
    if free.len() > BRUTEFORCE_LIMIT {
        return Err(MilpError::TooManyBinaries { count: free.len(), limit: BRUTEFORCE_LIMIT });
    }
    let lp = PreparedLp::new(model, &LpOptions::default());
    let base: Vec<(f64, f64)> = model.vars().iter().map(|v| (v.lower, v.upper)).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut nodes = 0;
    for mask in 0u32..(1u32 << free.len()) {
        let mut bounds = base.clone();
        for (k, v) in free.iter().enumerate() {
            let val = f64::from((mask >> k) & 1);
            bounds[v.0] = (val, val);
        }
        let (sol, _) = lp.solve(Some(&bounds), None);
        nodes += 1;
        match sol.status {
            LpStatus::Optimal => {
                if best.as_ref().is_none_or(|b| sol.objective < b.1) {
                    best = Some((sol.x, sol.objective));
                }
            }
            LpStatus::Infeasible => {}
            LpStatus::Unbounded => return Ok(no_incumbent(MilpStatus::Unbounded, nodes, f64::NEG_INFINITY)),
            LpStatus::IterationLimit => return Err(MilpError::IterationLimit),
        }
    }
    Ok(match best {
        Some((mut x, objective)) => {
            snap_integers(model, &mut x);
            MilpSolution {
                status: MilpStatus::Optimal,
                x,
                objective,
                best_bound: objective,
                nodes,
                bound_trace: Vec::new(),
            }
        }
        None => no_incumbent(MilpStatus::Infeasible, nodes, f64::INFINITY),
    })
}
