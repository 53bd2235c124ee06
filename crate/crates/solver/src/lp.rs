//! Bounded-variable revised primal simplex.
//!
//! Every row `a^T x (<=|=|>=) b` is rewritten as `a^T x - r = 0` with a
//! bounded logical variable `r`, so the all-logical basis is always a valid
//! (if infeasible) starting point. Phase 1 minimizes the sum of bound
//! violations of the basic variables, phase 2 the true objective; both share
//! the same pricing and ratio test. Pricing is Dantzig's rule until the
//! objective stalls, after which Bland's smallest-index rule takes over until
//! the next strict improvement.
//!
//! Duals follow the convention `y_i = d(objective) / d(b_i)`: nonpositive on
//! binding `<=` rows, nonnegative on binding `>=` rows.

use crate::lu::SparseLu;
use crate::model::{Model, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    Free,
}

/// Basis statuses for all structural variables followed by one logical per row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    pub status: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpOptions {
    /// Relative primal feasibility tolerance on the scaled problem.
    pub feasibility_tol: f64,
    /// Reduced-cost tolerance on the scaled problem.
    pub optimality_tol: f64,
    pub pivot_tol: f64,
    /// Defaults to `50 * (rows + cols) + 1000` when `None`.
    pub max_iterations: Option<usize>,
    /// Consecutive non-improving pivots before switching to Bland's rule.
    pub stall_threshold: usize,
    pub refactor_interval: usize,
    pub scaling: bool,
    /// Use Bland's rule from the first iteration.
    pub bland_only: bool,
}

impl Default for LpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            pivot_tol: 1e-9,
            max_iterations: None,
            stall_threshold: 50,
            refactor_interval: 64,
            scaling: true,
            bland_only: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values per structural variable.
    pub x: Vec<f64>,
    /// Row duals, `d(objective)/d(rhs)`.
    pub duals: Vec<f64>,
    /// Reduced costs `c_j - a_j^T y` per structural variable.
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }

    /// Scaled primal, dual and duality-gap residuals of this solution.
    pub fn residuals(&self, model: &Model) -> Residuals {
        residuals(model, &self.x, &self.duals, None)
    }

    /// Same as [`LpSolution::residuals`] with overridden variable bounds.
    pub fn residuals_with_bounds(&self, model: &Model, bounds: &[(f64, f64)]) -> Residuals {
        residuals(model, &self.x, &self.duals, Some(bounds))
    }
}

/// Optimality certificate residuals. All three are relative quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub dual_objective: f64,
}

impl Residuals {
    pub fn within(&self, tol: f64) -> bool {
        self.primal <= tol && self.dual <= tol && self.gap <= tol
    }
}

/// Solve the continuous relaxation of `model` from the all-logical basis.
pub fn solve_lp(model: &Model) -> LpSolution {
    PreparedLp::new(model, &LpOptions::default()).solve(None, None).0
}

/// Scaled, column-compressed copy of a model, reusable across re-solves
/// with different variable bounds (as in branch-and-bound).
#[derive(Debug, Clone)]
pub struct PreparedLp {
    opts: LpOptions,
    m: usize,
    n: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    val: Vec<f64>,
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    obj_scale: f64,
    cost: Vec<f64>,
    orig_cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PreparedLp {
    pub fn new(model: &Model, opts: &LpOptions) -> Self {
        let m = model.num_constraints();
        let n = model.num_vars();

        // merge duplicate terms and drop zeros, column-major
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, row) in model.constraints().iter().enumerate() {
            for &(v, a) in &row.terms {
                let col = &mut cols[v.0];
                match col.last_mut() {
                    Some(last) if last.0 == i => last.1 += a,
                    _ => col.push((i, a)),
                }
            }
        }
        for col in &mut cols {
            col.retain(|e| e.1 != 0.0);
        }

        let (row_scale, col_scale) =
            if opts.scaling { geometric_scaling(m, &cols) } else { (vec![1.0; m], vec![1.0; n]) };

        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut val = Vec::new();
        col_start.push(0);
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                row_idx.push(i);
                val.push(a * row_scale[i] * col_scale[j]);
            }
            col_start.push(row_idx.len());
        }

        let orig_cost = model.objective().to_vec();
        let mut cost: Vec<f64> = orig_cost.iter().zip(&col_scale).map(|(c, s)| c * s).collect();
        let cmax = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let obj_scale = if opts.scaling && cmax > 0.0 { pow2(1.0 / cmax) } else { 1.0 };
        for c in &mut cost {
            *c *= obj_scale;
        }

        let mut lower = Vec::with_capacity(n + m);
        let mut upper = Vec::with_capacity(n + m);
        for (v, s) in model.vars().iter().zip(&col_scale) {
            lower.push(v.lower / s);
            upper.push(v.upper / s);
        }
        for (row, s) in model.constraints().iter().zip(&row_scale) {
            let b = row.rhs * s;
            let (lo, hi) = match row.relation {
                Relation::Le => (f64::NEG_INFINITY, b),
                Relation::Ge => (b, f64::INFINITY),
                Relation::Eq => (b, b),
            };
            lower.push(lo);
            upper.push(hi);
        }

        Self {
            opts: opts.clone(),
            m,
            n,
            col_start,
            row_idx,
            val,
            row_scale,
            col_scale,
            obj_scale,
            cost,
            orig_cost,
            lower,
            upper,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.m
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    /// Solve with optional per-variable bound overrides (original units) and
    /// an optional warm-start basis. Returns the solution and final basis.
    pub fn solve(&self, bounds: Option<&[(f64, f64)]>, warm: Option<&Basis>) -> (LpSolution, Basis) {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        if let Some(b) = bounds {
            for (j, &(lo, hi)) in b.iter().enumerate().take(self.n) {
                lower[j] = lo / self.col_scale[j];
                upper[j] = hi / self.col_scale[j];
            }
        }
        let mut cost = self.cost.clone();
        cost.resize(self.n + self.m, 0.0);
        if lower.iter().zip(&upper).any(|(l, u)| l > u) {
            let sol = LpSolution {
                status: LpStatus::Infeasible,
                x: vec![0.0; self.n],
                duals: vec![0.0; self.m],
                reduced_costs: vec![0.0; self.n],
                objective: f64::NAN,
                iterations: 0,
            };
            return (sol, Basis { status: vec![VarStatus::Basic; 0] });
        }
        let mut sx = Simplex::new(self, lower, upper, cost, warm);
        let status = sx.run();
        sx.finish(status)
    }

    fn column(&self, j: usize) -> ColIter<'_> {
        if j < self.n {
            let r = self.col_start[j]..self.col_start[j + 1];
            ColIter::Structural(self.row_idx[r.clone()].iter().zip(self.val[r].iter()))
        } else {
            ColIter::Logical(Some(j - self.n))
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            let mut acc = 0.0;
            for p in self.col_start[j]..self.col_start[j + 1] {
                acc += self.val[p] * y[self.row_idx[p]];
            }
            acc
        } else {
            -y[j - self.n]
        }
    }
}

enum ColIter<'a> {
    Structural(std::iter::Zip<std::slice::Iter<'a, usize>, std::slice::Iter<'a, f64>>),
    Logical(Option<usize>),
}

impl Iterator for ColIter<'_> {
    type Item = (usize, f64);
    fn next(&mut self) -> Option<(usize, f64)> {
        match self {
            ColIter::Structural(it) => it.next().map(|(&i, &v)| (i, v)),
            ColIter::Logical(slot) => slot.take().map(|i| (i, -1.0)),
        }
    }
}

fn pow2(v: f64) -> f64 {
    2f64.powi(v.log2().round() as i32)
}

fn geometric_scaling(m: usize, cols: &[Vec<(usize, f64)>]) -> (Vec<f64>, Vec<f64>) {
    let n = cols.len();
    let mut rs = vec![1.0; m];
    let mut cs = vec![1.0; n];
    for _ in 0..6 {
        let mut rmin = vec![f64::INFINITY; m];
        let mut rmax = vec![0.0f64; m];
        for (j, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                let v = (a * cs[j]).abs();
                rmin[i] = rmin[i].min(v);
                rmax[i] = rmax[i].max(v);
            }
        }
        for i in 0..m {
            if rmax[i] > 0.0 {
                rs[i] = 1.0 / (rmin[i] * rmax[i]).sqrt();
            }
        }
        for (j, col) in cols.iter().enumerate() {
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for &(i, a) in col {
                let v = (a * rs[i]).abs();
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi > 0.0 {
                cs[j] = 1.0 / (lo * hi).sqrt();
            }
        }
    }
    (rs.into_iter().map(pow2).collect(), cs.into_iter().map(pow2).collect())
}

const NOT_BASIC: usize = usize::MAX;

struct Simplex<'a> {
    lp: &'a PreparedLp,
    m: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    slot_of: Vec<usize>,
    lu: SparseLu,
    iterations: usize,
    max_iterations: usize,
}

impl<'a> Simplex<'a> {
    fn new(lp: &'a PreparedLp, lower: Vec<f64>, upper: Vec<f64>, cost: Vec<f64>, warm: Option<&Basis>) -> Self {
        let m = lp.m;
        let total = lp.n + m;
        let warm_ok = warm
            .filter(|b| b.status.len() == total && b.status.iter().filter(|s| **s == VarStatus::Basic).count() == m);
        let mut status: Vec<VarStatus> = match warm_ok {
            Some(b) => b.status.clone(),
            None => (0..total).map(|j| if j >= lp.n { VarStatus::Basic } else { VarStatus::AtLower }).collect(),
        };
        let mut x = vec![0.0; total];
        for j in 0..total {
            if status[j] != VarStatus::Basic {
                status[j] = nonbasic_status(status[j], lower[j], upper[j]);
                x[j] = nonbasic_value(status[j], lower[j], upper[j]);
            }
        }
        let basis: Vec<usize> = (0..total).filter(|&j| status[j] == VarStatus::Basic).collect();
        let mut slot_of = vec![NOT_BASIC; total];
        for (s, &j) in basis.iter().enumerate() {
            slot_of[j] = s;
        }
        let max_iterations = lp.opts.max_iterations.unwrap_or(50 * (m + lp.n) + 1000);
        let placeholder = SparseLu::factor(0, &[]).expect("empty factorization");
        let mut sx = Simplex {
            lp,
            m,
            lower,
            upper,
            cost,
            x,
            status,
            basis,
            slot_of,
            lu: placeholder,
            iterations: 0,
            max_iterations,
        };
        sx.refactor();
        sx.compute_basic_values();
        sx
    }

    fn refactor(&mut self) {
        for _ in 0..=self.m {
            let cols: Vec<Vec<(usize, f64)>> = self.basis.iter().map(|&j| self.lp.column(j).collect()).collect();
            match SparseLu::factor(self.m, &cols) {
                Ok(lu) => {
                    self.lu = lu;
                    return;
                }
                Err(sing) => {
                    // swap the logicals of unpivoted rows into unpivoted slots
                    for (&slot, &row) in sing.slots.iter().zip(&sing.rows) {
                        let old = self.basis[slot];
                        let new = self.lp.n + row;
                        let st = if self.x[old] <= self.lower[old] {
                            VarStatus::AtLower
                        } else if self.x[old] >= self.upper[old] {
                            VarStatus::AtUpper
                        } else if self.lower[old].is_finite() {
                            VarStatus::AtLower
                        } else {
                            VarStatus::AtUpper
                        };
                        let st = nonbasic_status(st, self.lower[old], self.upper[old]);
                        self.status[old] = st;
                        self.x[old] = nonbasic_value(st, self.lower[old], self.upper[old]);
                        self.slot_of[old] = NOT_BASIC;
                        self.basis[slot] = new;
                        self.status[new] = VarStatus::Basic;
                        self.slot_of[new] = slot;
                    }
                }
            }
        }
        panic!("basis repair failed to produce a nonsingular basis");
    }

    fn compute_basic_values(&mut self) {
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.x.len() {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                let xj = self.x[j];
                for (i, a) in self.lp.column(j) {
                    rhs[i] -= a * xj;
                }
            }
        }
        let xb = self.lu.ftran(&rhs);
        for (s, &j) in self.basis.iter().enumerate() {
            self.x[j] = xb[s];
        }
    }

    fn tol(&self, bound: f64) -> f64 {
        self.lp.opts.feasibility_tol * bound.abs().max(1.0)
    }

    /// Bound violation direction of basic variable `j`: -1 below, +1 above.
    fn infeasibility_sign(&self, j: usize) -> i8 {
        if self.x[j] < self.lower[j] - self.tol(self.lower[j]) {
            -1
        } else if self.x[j] > self.upper[j] + self.tol(self.upper[j]) {
            1
        } else {
            0
        }
    }

    fn sum_infeasibility(&self) -> f64 {
        self.basis.iter().map(|&j| (self.lower[j] - self.x[j]).max(self.x[j] - self.upper[j]).max(0.0)).sum()
    }

    fn phase_objective(&self, phase1: bool) -> f64 {
        if phase1 {
            self.sum_infeasibility()
        } else {
            self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
        }
    }

    fn run(&mut self) -> LpStatus {
        let opts = &self.lp.opts;
        let mut fresh = true;
        let mut bland = opts.bland_only;
        let mut stalled = 0usize;
        let mut last_obj = f64::INFINITY;
        let mut last_phase1 = true;
        let mut rejected: Vec<usize> = Vec::new();

        loop {
            if self.iterations >= self.max_iterations {
                return LpStatus::IterationLimit;
            }
            if self.lu.num_updates() >= opts.refactor_interval {
                self.refactor();
                self.compute_basic_values();
                fresh = true;
            }

            let phase1 = self.basis.iter().any(|&j| self.infeasibility_sign(j) != 0);
            if phase1 != last_phase1 {
                last_obj = f64::INFINITY;
                stalled = 0;
                bland = opts.bland_only;
                last_phase1 = phase1;
            }
            let cb: Vec<f64> = self
                .basis
                .iter()
                .map(|&j| if phase1 { f64::from(self.infeasibility_sign(j)) } else { self.cost[j] })
                .collect();
            let y = self.lu.btran(&cb);

            let Some((q, dir)) = self.price(phase1, &y, bland, &rejected) else {
                if !fresh {
                    self.refactor();
                    self.compute_basic_values();
                    fresh = true;
                    rejected.clear();
                    continue;
                }
                return if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal };
            };

            let mut rhs = vec![0.0; self.m];
            for (i, a) in self.lp.column(q) {
                rhs[i] = a;
            }
            let alpha = self.lu.ftran(&rhs);

            match self.ratio_test(q, dir, &alpha, bland) {
                Step::Unbounded => {
                    if phase1 || !fresh {
                        if !fresh {
                            self.refactor();
                            self.compute_basic_values();
                            fresh = true;
                        } else {
                            rejected.push(q);
                        }
                        continue;
                    }
                    return LpStatus::Unbounded;
                }
                Step::Flip(theta) => {
                    self.apply_step(q, dir, theta, &alpha);
                    self.status[q] = if dir > 0.0 { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Step::Pivot { slot, theta, to_upper } => {
                    if alpha[slot].abs() < opts.pivot_tol {
                        if fresh {
                            rejected.push(q);
                        } else {
                            self.refactor();
                            self.compute_basic_values();
                            fresh = true;
                        }
                        continue;
                    }
                    self.apply_step(q, dir, theta, &alpha);
                    let leaving = self.basis[slot];
                    let st = if to_upper { VarStatus::AtUpper } else { VarStatus::AtLower };
                    self.status[leaving] = st;
                    self.x[leaving] = if to_upper { self.upper[leaving] } else { self.lower[leaving] };
                    self.slot_of[leaving] = NOT_BASIC;
                    self.basis[slot] = q;
                    self.slot_of[q] = slot;
                    self.status[q] = VarStatus::Basic;
                    self.lu.update(slot, &alpha);
                }
            }
            self.iterations += 1;
            fresh = false;
            rejected.clear();

            let obj = self.phase_objective(phase1);
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                stalled = 0;
                bland = opts.bland_only;
            } else {
                stalled += 1;
                if stalled >= opts.stall_threshold {
                    bland = true;
                }
            }
            last_obj = last_obj.min(obj);
        }
    }

    fn price(&self, phase1: bool, y: &[f64], bland: bool, rejected: &[usize]) -> Option<(usize, f64)> {
        let tol = self.lp.opts.optimality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.x.len() {
            let st = self.status[j];
            if st == VarStatus::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let c = if phase1 { 0.0 } else { self.cost[j] };
            let d = c - self.lp.dot_column(j, y);
            let dir = match st {
                VarStatus::AtLower if d < -tol => 1.0,
                VarStatus::AtUpper if d > tol => -1.0,
                VarStatus::Free if d.abs() > tol => -d.signum(),
                _ => continue,
            };
            if rejected.contains(&j) {
                continue;
            }
            if bland {
                return Some((j, dir));
            }
            let score = d.abs();
            if best.is_none_or(|b| score > b.2) {
                best = Some((j, dir, score));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> Step {
        let ptol = self.lp.opts.pivot_tol;
        // (slot, hard ratio, relaxed ratio, leaves at upper)
        let mut cands: Vec<(usize, f64, f64, bool)> = Vec::new();
        for (s, &a) in alpha.iter().enumerate() {
            if a.abs() <= ptol {
                continue;
            }
            let j = self.basis[s];
            let rate = -dir * a;
            let xj = self.x[j];
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if rate < 0.0 {
                if xj > hi + self.tol(hi) {
                    let r = (xj - hi) / -rate;
                    cands.push((s, r, r, true));
                } else if lo.is_finite() && xj >= lo - self.tol(lo) {
                    cands.push((s, (xj - lo) / -rate, (xj - lo + self.tol(lo)) / -rate, false));
                }
            } else if xj < lo - self.tol(lo) {
                let r = (lo - xj) / rate;
                cands.push((s, r, r, false));
            } else if hi.is_finite() && xj <= hi + self.tol(hi) {
                cands.push((s, (hi - xj) / rate, (hi - xj + self.tol(hi)) / rate, true));
            }
        }
        let range = self.upper[q] - self.lower[q];

        if cands.is_empty() {
            return if range.is_finite() { Step::Flip(range) } else { Step::Unbounded };
        }

        if bland {
            let min = cands.iter().map(|c| c.1.max(0.0)).fold(f64::INFINITY, f64::min);
            if range.is_finite() && range <= min {
                return Step::Flip(range);
            }
            let cutoff = min + 1e-12 * (1.0 + min);
            let (slot, r, _, up) = cands
                .iter()
                .filter(|c| c.1.max(0.0) <= cutoff)
                .min_by_key(|c| self.basis[c.0])
                .copied()
                .expect("nonempty candidate set");
            return Step::Pivot { slot, theta: r.max(0.0), to_upper: up };
        }

        // Harris two-pass
        let theta_max = cands.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
        if range.is_finite() && range <= theta_max {
            return Step::Flip(range);
        }
        let (slot, r, _, up) = cands
            .iter()
            .filter(|c| c.1 <= theta_max)
            .max_by(|a, b| alpha[a.0].abs().total_cmp(&alpha[b.0].abs()))
            .copied()
            .expect("nonempty candidate set");
        Step::Pivot { slot, theta: r.max(0.0), to_upper: up }
    }

    fn apply_step(&mut self, q: usize, dir: f64, theta: f64, alpha: &[f64]) {
        if theta == 0.0 {
            return;
        }
        self.x[q] += dir * theta;
        for (s, &a) in alpha.iter().enumerate() {
            if a != 0.0 {
                let j = self.basis[s];
                self.x[j] -= dir * theta * a;
            }
        }
    }

    fn finish(mut self, status: LpStatus) -> (LpSolution, Basis) {
        let lp = self.lp;
        if status == LpStatus::Optimal {
            // snap basic values that sit within tolerance of a bound
            for &j in &self.basis {
                if self.x[j] < self.lower[j] {
                    self.x[j] = self.lower[j];
                } else if self.x[j] > self.upper[j] {
                    self.x[j] = self.upper[j];
                }
            }
        }
        let cb: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        let y_scaled = self.lu.btran(&cb);
        let x: Vec<f64> = (0..lp.n).map(|j| self.x[j] * lp.col_scale[j]).collect();
        let duals: Vec<f64> = (0..lp.m).map(|i| y_scaled[i] * lp.row_scale[i] / lp.obj_scale).collect();
        let reduced_costs: Vec<f64> = (0..lp.n)
            .map(|j| {
                if self.status[j] == VarStatus::Basic {
                    0.0
                } else {
                    (self.cost[j] - lp.dot_column(j, &y_scaled)) / (lp.col_scale[j] * lp.obj_scale)
                }
            })
            .collect();
        let objective = lp.orig_cost.iter().zip(&x).map(|(c, v)| c * v).sum();
        let basis = Basis { status: std::mem::take(&mut self.status) };
        (LpSolution { status, x, duals, reduced_costs, objective, iterations: self.iterations }, basis)
    }
}

enum Step {
    Unbounded,
    Flip(f64),
    Pivot { slot: usize, theta: f64, to_upper: bool },
}

fn nonbasic_status(want: VarStatus, lower: f64, upper: f64) -> VarStatus {
    match want {
        VarStatus::AtLower if lower.is_finite() => VarStatus::AtLower,
        VarStatus::AtUpper if upper.is_finite() => VarStatus::AtUpper,
        _ if lower.is_finite() => VarStatus::AtLower,
        _ if upper.is_finite() => VarStatus::AtUpper,
        _ => VarStatus::Free,
    }
}

fn nonbasic_value(status: VarStatus, lower: f64, upper: f64) -> f64 {
    match status {
        VarStatus::AtLower => lower,
        VarStatus::AtUpper => upper,
        _ => 0.0,
    }
}

/// Primal/dual residuals and duality gap of a candidate `(x, y)` pair.
///
/// The dual objective is `b^T y + sum_j d_j * (l_j if d_j > 0 else u_j)`
/// with `d = c - A^T y`; a reduced cost pushing against an infinite bound
/// counts as dual infeasibility.
pub fn residuals(model: &Model, x: &[f64], y: &[f64], bounds: Option<&[(f64, f64)]>) -> Residuals {
    let n = model.num_vars();
    let bound = |j: usize| -> (f64, f64) {
        match bounds {
            Some(b) => b[j],
            None => (model.vars()[j].lower, model.vars()[j].upper),
        }
    };

    let mut primal = 0.0f64;
    let mut aty = vec![0.0; n];
    let mut aty_mag = vec![0.0; n];
    let mut dual = 0.0f64;
    let mut dual_obj = 0.0;
    for (row, &yi) in model.constraints().iter().zip(y) {
        let mut mag = row.rhs.abs();
        for &(v, a) in &row.terms {
            mag = mag.max((a * x[v.0]).abs());
            aty[v.0] += a * yi;
            aty_mag[v.0] += (a * yi).abs();
        }
        primal = primal.max(row.violation(x) / (1.0 + mag));
        let sign_viol = match row.relation {
            Relation::Le => yi.max(0.0),
            Relation::Ge => (-yi).max(0.0),
            Relation::Eq => 0.0,
        };
        dual = dual.max(sign_viol / (1.0 + yi.abs()));
        dual_obj += yi * row.rhs;
    }
    for j in 0..n {
        let (lo, hi) = bound(j);
        primal = primal.max((lo - x[j]).max(x[j] - hi).max(0.0) / (1.0 + x[j].abs()));
        let c = model.objective()[j];
        let d = c - aty[j];
        let scale = 1.0 + c.abs() + aty_mag[j];
        if d > 0.0 {
            if lo.is_finite() {
                dual_obj += d * lo;
            } else {
                dual = dual.max(d / scale);
            }
        } else if d < 0.0 {
            if hi.is_finite() {
                dual_obj += d * hi;
            } else {
                dual = dual.max(-d / scale);
            }
        }
    }
    let primal_obj = model.objective_value(x);
    let gap = (primal_obj - dual_obj).abs() / (1.0 + primal_obj.abs());
    Residuals { primal, dual, gap, dual_objective: dual_obj }
}
