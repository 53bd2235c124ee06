//! Builders that turn an instance plus scenarios (or an ambiguity set) into
//! a [`ModelIr`]: a solver model whose variables and rows carry semantic keys.
//!
//! Variable order is canonical: first-stage `x` then `h`, then any
//! moment-dual variables, then one recourse block per scenario (or support
//! point) in scenario order. Every builder audits the number of variables and
//! rows in each family against closed-form counts before returning.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use resdist_solver::{lp_format::write_lp, Model, ModelError, Relation, RowId, VarId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{
    validate_instance, validate_typed_instance, DcInventory, Instance, TypedInstance, ValidationReport,
};
use crate::scenario::{AmbiguitySpec, DemandMatrix, MomentEstimate, ScenarioSet};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    Deterministic,
    Stochastic,
    DcInventory,
    LeadTime,
    MultiType,
    DistributionallyRobust,
    WorstCase,
    WorstCaseDual,
    SecondStage,
    SecondStageDual,
}

/// Semantic identity of a variable. Indices are zero-based; `w` is a
/// scenario or support-point index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VarKey {
    Open {
        i: usize,
    },
    Capacity {
        i: usize,
        t: usize,
    },
    Ship {
        w: usize,
        i: usize,
        j: usize,
        t: usize,
    },
    Inventory {
        w: usize,
        j: usize,
        t: usize,
    },
    Backlog {
        w: usize,
        j: usize,
        t: usize,
    },
    DcStock {
        w: usize,
        i: usize,
        t: usize,
    },
    TypedOpen {
        i: usize,
        l: usize,
    },
    TypedCapacity {
        i: usize,
        t: usize,
        l: usize,
    },
    TypedShip {
        w: usize,
        i: usize,
        j: usize,
        t: usize,
        l: usize,
    },
    TypedInventory {
        w: usize,
        j: usize,
        t: usize,
        l: usize,
    },
    TypedBacklog {
        w: usize,
        j: usize,
        t: usize,
        l: usize,
    },
    /// Share of demand `d_jt` served by type `l`.
    Split {
        w: usize,
        j: usize,
        t: usize,
        l: usize,
    },
    Alpha1,
    Beta1,
    Alpha2 {
        j: usize,
        t: usize,
    },
    Alpha3 {
        j: usize,
        t: usize,
    },
    Beta2 {
        j: usize,
        t: usize,
    },
    Beta3 {
        j: usize,
        t: usize,
    },
    /// Epigraph of the recourse cost at support point `k`.
    Phi {
        k: usize,
    },
    /// Probability of support point `k`.
    Weight {
        k: usize,
    },
    /// Dual of the lower bound of moment `s`.
    MomentLo {
        s: usize,
    },
    /// Dual of the upper bound of moment `s`.
    MomentHi {
        s: usize,
    },
    Theta {
        i: usize,
        t: usize,
    },
    Gamma {
        j: usize,
        t: usize,
    },
}

impl VarKey {
    pub fn family(&self) -> &'static str {
        match self {
            VarKey::Open { .. } => "x",
            VarKey::Capacity { .. } => "h",
            VarKey::Ship { .. } => "s",
            VarKey::Inventory { .. } => "I",
            VarKey::Backlog { .. } => "u",
            VarKey::DcStock { .. } => "ID",
            VarKey::TypedOpen { .. } => "x_typed",
            VarKey::TypedCapacity { .. } => "h_typed",
            VarKey::TypedShip { .. } => "s_typed",
            VarKey::TypedInventory { .. } => "I_typed",
            VarKey::TypedBacklog { .. } => "u_typed",
            VarKey::Split { .. } => "dbar",
            VarKey::Alpha1 => "alpha1",
            VarKey::Beta1 => "beta1",
            VarKey::Alpha2 { .. } => "alpha2",
            VarKey::Alpha3 { .. } => "alpha3",
            VarKey::Beta2 { .. } => "beta2",
            VarKey::Beta3 { .. } => "beta3",
            VarKey::Phi { .. } => "phi",
            VarKey::Weight { .. } => "p",
            VarKey::MomentLo { .. } => "alpha",
            VarKey::MomentHi { .. } => "beta",
            VarKey::Theta { .. } => "theta",
            VarKey::Gamma { .. } => "gamma",
        }
    }

    fn indices(&self) -> Vec<(char, usize)> {
        match *self {
            VarKey::Open { i } => vec![('i', i)],
            VarKey::Capacity { i, t } | VarKey::Theta { i, t } => vec![('i', i), ('t', t)],
            VarKey::Ship { w, i, j, t } => vec![('w', w), ('i', i), ('j', j), ('t', t)],
            VarKey::Inventory { w, j, t } | VarKey::Backlog { w, j, t } => vec![('w', w), ('j', j), ('t', t)],
            VarKey::DcStock { w, i, t } => vec![('w', w), ('i', i), ('t', t)],
            VarKey::TypedOpen { i, l } => vec![('i', i), ('l', l)],
            VarKey::TypedCapacity { i, t, l } => vec![('i', i), ('t', t), ('l', l)],
            VarKey::TypedShip { w, i, j, t, l } => vec![('w', w), ('i', i), ('j', j), ('t', t), ('l', l)],
            VarKey::TypedInventory { w, j, t, l }
            | VarKey::TypedBacklog { w, j, t, l }
            | VarKey::Split { w, j, t, l } => {
                vec![('w', w), ('j', j), ('t', t), ('l', l)]
            }
            VarKey::Alpha1 | VarKey::Beta1 => vec![],
            VarKey::Alpha2 { j, t }
            | VarKey::Alpha3 { j, t }
            | VarKey::Beta2 { j, t }
            | VarKey::Beta3 { j, t }
            | VarKey::Gamma { j, t } => vec![('j', j), ('t', t)],
            VarKey::Phi { k } | VarKey::Weight { k } => vec![('w', k)],
            VarKey::MomentLo { s } | VarKey::MomentHi { s } => vec![('m', s)],
        }
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_name(f, self.family(), &self.indices())
    }
}

/// Semantic identity of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RowKey {
    /// `h_it <= M_i x_i`
    OpenLink {
        i: usize,
        t: usize,
    },
    /// `sum_i h_it <= B_t`
    Budget {
        t: usize,
    },
    /// `sum_j s_ijt <= h_it`
    ShipCap {
        w: usize,
        i: usize,
        t: usize,
    },
    Flow {
        w: usize,
        j: usize,
        t: usize,
    },
    /// DC stock balance replacing `ShipCap` when DCs may hold inventory.
    DcBalance {
        w: usize,
        i: usize,
        t: usize,
    },
    TypedOpenLink {
        i: usize,
        t: usize,
        l: usize,
    },
    TypedShipCap {
        w: usize,
        i: usize,
        t: usize,
        l: usize,
    },
    TypedFlow {
        w: usize,
        j: usize,
        t: usize,
        l: usize,
    },
    /// `sum_l dbar_jtl = d_jt`
    Partition {
        w: usize,
        j: usize,
        t: usize,
    },
    /// Moment duals must dominate `Phi^k`.
    Coupling {
        k: usize,
    },
    PhiDef {
        k: usize,
    },
    MomentLower {
        s: usize,
    },
    MomentUpper {
        s: usize,
    },
    SupportCut {
        k: usize,
    },
    DualShip {
        i: usize,
        j: usize,
        t: usize,
    },
    DualInventory {
        j: usize,
        t: usize,
    },
    DualBacklog {
        j: usize,
        t: usize,
    },
}

impl RowKey {
    pub fn family(&self) -> &'static str {
        match self {
            RowKey::OpenLink { .. } => "open_link",
            RowKey::Budget { .. } => "budget",
            RowKey::ShipCap { .. } => "ship_cap",
            RowKey::Flow { .. } => "flow",
            RowKey::DcBalance { .. } => "dc_balance",
            RowKey::TypedOpenLink { .. } => "open_link_typed",
            RowKey::TypedShipCap { .. } => "ship_cap_typed",
            RowKey::TypedFlow { .. } => "flow_typed",
            RowKey::Partition { .. } => "partition",
            RowKey::Coupling { .. } => "coupling",
            RowKey::PhiDef { .. } => "phi_def",
            RowKey::MomentLower { .. } => "moment_lo",
            RowKey::MomentUpper { .. } => "moment_hi",
            RowKey::SupportCut { .. } => "support_cut",
            RowKey::DualShip { .. } => "dual_ship",
            RowKey::DualInventory { .. } => "dual_inventory",
            RowKey::DualBacklog { .. } => "dual_backlog",
        }
    }

    fn indices(&self) -> Vec<(char, usize)> {
        match *self {
            RowKey::OpenLink { i, t } => vec![('i', i), ('t', t)],
            RowKey::Budget { t } => vec![('t', t)],
            RowKey::ShipCap { w, i, t } | RowKey::DcBalance { w, i, t } => vec![('w', w), ('i', i), ('t', t)],
            RowKey::Flow { w, j, t } | RowKey::Partition { w, j, t } => vec![('w', w), ('j', j), ('t', t)],
            RowKey::TypedOpenLink { i, t, l } => vec![('i', i), ('t', t), ('l', l)],
            RowKey::TypedShipCap { w, i, t, l } => vec![('w', w), ('i', i), ('t', t), ('l', l)],
            RowKey::TypedFlow { w, j, t, l } => vec![('w', w), ('j', j), ('t', t), ('l', l)],
            RowKey::Coupling { k } | RowKey::PhiDef { k } | RowKey::SupportCut { k } => vec![('w', k)],
            RowKey::MomentLower { s } | RowKey::MomentUpper { s } => vec![('m', s)],
            RowKey::DualShip { i, j, t } => vec![('i', i), ('j', j), ('t', t)],
            RowKey::DualInventory { j, t } | RowKey::DualBacklog { j, t } => vec![('j', j), ('t', t)],
        }
    }
}

impl fmt::Display for RowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_name(f, self.family(), &self.indices())
    }
}

/// `family_1_2_3` with one-based indices; valid as an LP-format name.
fn write_name(f: &mut fmt::Formatter<'_>, family: &str, idx: &[(char, usize)]) -> fmt::Result {
    f.write_str(family)?;
    for (_, v) in idx {
        write!(f, "_{}", v + 1)?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("instance is invalid:\n{0}")]
    InvalidInstance(ValidationReport),
    #[error("{what} has shape {found:?}, expected {expected:?}")]
    Shape { what: String, expected: (usize, usize), found: (usize, usize) },
    #[error("instance lacks {0}")]
    MissingExtension(&'static str),
    #[error("extra moment functions are only supported by the worst-case expectation LPs")]
    GeneralMoments,
    #[error("{expected} recourse values given for {found} support points")]
    RecourseValues { expected: usize, found: usize },
    #[error("self-audit failed: {0}")]
    Audit(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Index-set sizes used to range-check keys.
#[derive(Debug, Clone, Copy, Default)]
struct Dims {
    i: usize,
    j: usize,
    t: usize,
    w: usize,
    l: usize,
    m: usize,
}

impl Dims {
    fn get(&self, axis: char) -> usize {
        match axis {
            'i' => self.i,
            'j' => self.j,
            't' => self.t,
            'w' => self.w,
            'l' => self.l,
            'm' => self.m,
            _ => 0,
        }
    }
}

/// First-stage decision extracted from a solved model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Plan {
    pub open: Vec<bool>,
    /// `[i][t]`
    pub capacity: Vec<Vec<f64>>,
}

/// A solver model plus the maps from variables and rows to their meaning.
#[derive(Debug, Clone)]
pub struct ModelIr {
    kind: Formulation,
    model: Model,
    var_keys: Vec<VarKey>,
    row_keys: Vec<RowKey>,
    var_index: HashMap<VarKey, VarId>,
    row_index: HashMap<RowKey, RowId>,
}

impl ModelIr {
    pub fn kind(&self) -> Formulation {
        self.kind
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn var(&self, key: VarKey) -> Option<VarId> {
        self.var_index.get(&key).copied()
    }

    pub fn row(&self, key: RowKey) -> Option<RowId> {
        self.row_index.get(&key).copied()
    }

    pub fn var_key(&self, id: VarId) -> VarKey {
        self.var_keys[id.index()]
    }

    pub fn row_key(&self, id: RowId) -> RowKey {
        self.row_keys[id.index()]
    }

    pub fn var_keys(&self) -> &[VarKey] {
        &self.var_keys
    }

    pub fn row_keys(&self) -> &[RowKey] {
        &self.row_keys
    }

    /// Value of `key` in `x`, or 0 when the model has no such variable.
    pub fn value(&self, x: &[f64], key: VarKey) -> f64 {
        self.var(key).map_or(0.0, |v| x[v.index()])
    }

    pub fn var_family_counts(&self) -> BTreeMap<&'static str, usize> {
        count(self.var_keys.iter().map(VarKey::family))
    }

    pub fn row_family_counts(&self) -> BTreeMap<&'static str, usize> {
        count(self.row_keys.iter().map(RowKey::family))
    }

    /// Open flags and capacities from a solution of a model that has base
    /// first-stage variables. Tiny negative capacities are clipped to 0.
    pub fn plan(&self, x: &[f64], dcs: usize, periods: usize) -> Plan {
        Plan {
            open: (0..dcs).map(|i| self.value(x, VarKey::Open { i }) > 0.5).collect(),
            capacity: (0..dcs)
                .map(|i| (0..periods).map(|t| self.value(x, VarKey::Capacity { i, t }).max(0.0)).collect())
                .collect(),
        }
    }

    /// The model in CPLEX LP text format.
    pub fn to_lp(&self) -> String {
        write_lp(&self.model)
    }
}

fn count<'a>(it: impl Iterator<Item = &'a str>) -> BTreeMap<&'a str, usize> {
    let mut m = BTreeMap::new();
    for f in it {
        *m.entry(f).or_insert(0) += 1;
    }
    m
}

struct IrBuilder {
    ir: ModelIr,
}

impl IrBuilder {
    fn new(kind: Formulation) -> Self {
        Self {
            ir: ModelIr {
                kind,
                model: Model::new(),
                var_keys: Vec::new(),
                row_keys: Vec::new(),
                var_index: HashMap::new(),
                row_index: HashMap::new(),
            },
        }
    }

    fn var(&mut self, key: VarKey, lower: f64, upper: f64, integer: bool, cost: f64) -> VarId {
        let id = self.ir.model.add_var(key.to_string(), lower, upper, integer);
        self.ir.model.set_cost(id, cost);
        self.ir.var_keys.push(key);
        self.ir.var_index.insert(key, id);
        id
    }

    fn nonneg(&mut self, key: VarKey, cost: f64) -> VarId {
        self.var(key, 0.0, INF, false, cost)
    }

    fn row(&mut self, key: RowKey, terms: Vec<(VarId, f64)>, rel: Relation, rhs: f64) {
        let terms = terms.into_iter().filter(|&(_, a)| a != 0.0).collect();
        let id = self.ir.model.add_constraint(key.to_string(), terms, rel, rhs);
        self.ir.row_keys.push(key);
        self.ir.row_index.insert(key, id);
    }

    /// Check the name maps, key ranges and per-family counts.
    fn finish(self, dims: Dims, vars: &[(&str, usize)], rows: &[(&str, usize)]) -> Result<ModelIr, BuildError> {
        let ir = self.ir;
        ir.model.check()?;
        if ir.var_index.len() != ir.var_keys.len() || ir.var_keys.len() != ir.model.num_vars() {
            return Err(BuildError::Audit("variable keys are not a bijection".into()));
        }
        if ir.row_index.len() != ir.row_keys.len() {
            return Err(BuildError::Audit("row keys are not unique".into()));
        }
        let out_of_range = |idx: Vec<(char, usize)>| idx.iter().any(|&(a, v)| v >= dims.get(a));
        if let Some(k) = ir.var_keys.iter().find(|k| out_of_range(k.indices())) {
            return Err(BuildError::Audit(format!("variable {k} out of range")));
        }
        if let Some(k) = ir.row_keys.iter().find(|k| out_of_range(k.indices())) {
            return Err(BuildError::Audit(format!("row {k} out of range")));
        }
        let expect = |what: &str, got: BTreeMap<&'static str, usize>, want: &[(&str, usize)]| {
            let want: BTreeMap<&str, usize> = want.iter().copied().filter(|&(_, n)| n > 0).collect();
            let got: BTreeMap<&str, usize> = got.into_iter().collect();
            if got != want {
                return Err(BuildError::Audit(format!("{what} families {got:?}, expected {want:?}")));
            }
            Ok(())
        };
        expect("variable", ir.var_family_counts(), vars)?;
        expect("row", ir.row_family_counts(), rows)?;
        Ok(ir)
    }
}

fn require_valid(inst: &Instance) -> Result<(), BuildError> {
    let report = validate_instance(inst);
    if report.is_valid() {
        Ok(())
    } else {
        Err(BuildError::InvalidInstance(report))
    }
}

fn check_matrix(what: &str, m: &DemandMatrix, nj: usize, nt: usize) -> Result<(), BuildError> {
    let found = (m.len(), m.first().map_or(0, Vec::len));
    if m.len() != nj || m.iter().any(|r| r.len() != nt) {
        return Err(BuildError::Shape { what: what.to_string(), expected: (nj, nt), found });
    }
    Ok(())
}

fn check_scenarios(inst: &Instance, sc: &ScenarioSet) -> Result<(), BuildError> {
    check_matrix("scenario demand", sc.demand(0), inst.num_sites(), inst.periods)
}

/// `x` with status-fixed bounds, `h`, and the open-link and budget rows.
fn first_stage(b: &mut IrBuilder, inst: &Instance) -> Vec<Vec<VarId>> {
    let (ni, nt) = (inst.num_dcs(), inst.periods);
    let x: Vec<VarId> = (0..ni)
        .map(|i| {
            let (lo, hi) = inst.status(i).open_bounds();
            b.var(VarKey::Open { i }, lo, hi, true, inst.operating_cost[i])
        })
        .collect();
    let h: Vec<Vec<VarId>> = (0..ni)
        .map(|i| (0..nt).map(|t| b.nonneg(VarKey::Capacity { i, t }, inst.capacity_unit_cost[i][t])).collect())
        .collect();
    for i in 0..ni {
        for t in 0..nt {
            b.row(
                RowKey::OpenLink { i, t },
                vec![(h[i][t], 1.0), (x[i], -inst.dc_capacity_limit[i])],
                Relation::Le,
                0.0,
            );
        }
    }
    for t in 0..nt {
        b.row(RowKey::Budget { t }, (0..ni).map(|i| (h[i][t], 1.0)).collect(), Relation::Le, inst.temporal_budget[t]);
    }
    h
}

/// Capacity available to a recourse block.
enum Cap<'a> {
    Vars(&'a [Vec<VarId>]),
    Fixed(&'a [Vec<f64>]),
}

#[derive(Clone, Copy, Default)]
struct RecourseOpts<'a> {
    dc_stock: Option<&'a DcInventory>,
    lead_time: Option<&'a [Vec<usize>]>,
}

/// Shipment, inventory and backlog variables for one scenario with their
/// capacity and flow rows. Each variable's cost is scaled by `weight`;
/// the unscaled `(var, cost)` pairs are returned for epigraph rows.
fn recourse_block(
    b: &mut IrBuilder,
    inst: &Instance,
    w: usize,
    weight: f64,
    demand: &DemandMatrix,
    cap: Cap<'_>,
    opts: RecourseOpts<'_>,
) -> Vec<(VarId, f64)> {
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    let mut costs = Vec::new();
    let mut add = |b: &mut IrBuilder, key: VarKey, c: f64| {
        let v = b.nonneg(key, weight * c);
        costs.push((v, c));
        v
    };
    let mut s = vec![vec![vec![VarId(0); nt]; nj]; ni];
    for i in 0..ni {
        for j in 0..nj {
            for t in 0..nt {
                s[i][j][t] = add(b, VarKey::Ship { w, i, j, t }, inst.shipping_unit_cost[i][j][t]);
            }
        }
    }
    let inv: Vec<Vec<VarId>> = (0..nj)
        .map(|j| (0..nt).map(|t| add(b, VarKey::Inventory { w, j, t }, inst.inventory_unit_cost[j][t])).collect())
        .collect();
    let u: Vec<Vec<VarId>> = (0..nj)
        .map(|j| (0..nt).map(|t| add(b, VarKey::Backlog { w, j, t }, inst.penalty_unit_cost[j][t])).collect())
        .collect();
    let stock: Option<Vec<Vec<VarId>>> = opts.dc_stock.map(|d| {
        (0..ni).map(|i| (0..nt).map(|t| add(b, VarKey::DcStock { w, i, t }, d.unit_cost[i][t])).collect()).collect()
    });

    for i in 0..ni {
        for t in 0..nt {
            let mut terms: Vec<(VarId, f64)> = (0..nj).map(|j| (s[i][j][t], 1.0)).collect();
            let mut rhs = 0.0;
            match &cap {
                Cap::Vars(h) => terms.push((h[i][t], -1.0)),
                Cap::Fixed(h) => rhs = h[i][t],
            }
            match (&stock, opts.dc_stock) {
                (Some(st), Some(d)) => {
                    terms.push((st[i][t], 1.0));
                    if t > 0 {
                        terms.push((st[i][t - 1], -1.0));
                    } else {
                        rhs += d.initial[i];
                    }
                    b.row(RowKey::DcBalance { w, i, t }, terms, Relation::Eq, rhs);
                }
                _ => b.row(RowKey::ShipCap { w, i, t }, terms, Relation::Le, rhs),
            }
        }
    }
    for j in 0..nj {
        for t in 0..nt {
            let mut terms = Vec::with_capacity(ni + 4);
            for i in 0..ni {
                let lag = opts.lead_time.map_or(0, |l| l[i][j]);
                if t >= lag {
                    terms.push((s[i][j][t - lag], 1.0));
                }
            }
            terms.push((u[j][t], 1.0));
            terms.push((inv[j][t], -1.0));
            let mut rhs = demand[j][t];
            if t > 0 {
                terms.push((inv[j][t - 1], 1.0));
                terms.push((u[j][t - 1], -1.0));
            } else {
                rhs += inst.initial_backlog[j] - inst.initial_inventory[j];
            }
            b.row(RowKey::Flow { w, j, t }, terms, Relation::Eq, rhs);
        }
    }
    costs
}

fn build_two_stage(
    inst: &Instance,
    sc: &ScenarioSet,
    kind: Formulation,
    opts: RecourseOpts<'_>,
) -> Result<ModelIr, BuildError> {
    require_valid(inst)?;
    check_scenarios(inst, sc)?;
    let (ni, nj, nt, nw) = (inst.num_dcs(), inst.num_sites(), inst.periods, sc.len());
    let mut b = IrBuilder::new(kind);
    let h = first_stage(&mut b, inst);
    for w in 0..nw {
        recourse_block(&mut b, inst, w, sc.probability(w), sc.demand(w), Cap::Vars(&h), opts);
    }
    let stock = opts.dc_stock.is_some();
    let dims = Dims { i: ni, j: nj, t: nt, w: nw, ..Dims::default() };
    b.finish(
        dims,
        &[
            ("x", ni),
            ("h", ni * nt),
            ("s", nw * ni * nj * nt),
            ("I", nw * nj * nt),
            ("u", nw * nj * nt),
            ("ID", if stock { nw * ni * nt } else { 0 }),
        ],
        &[
            ("open_link", ni * nt),
            ("budget", nt),
            ("ship_cap", if stock { 0 } else { nw * ni * nt }),
            ("dc_balance", if stock { nw * ni * nt } else { 0 }),
            ("flow", nw * nj * nt),
        ],
    )
}

/// Extensive form of the two-stage stochastic program. Extension fields of
/// the instance are ignored.
pub fn build_extensive_smip(inst: &Instance, scenarios: &ScenarioSet) -> Result<ModelIr, BuildError> {
    build_two_stage(inst, scenarios, Formulation::Stochastic, RecourseOpts::default())
}

/// Single-scenario model at the mean demand.
pub fn build_deterministic(inst: &Instance, mean_demand: &MomentEstimate) -> Result<ModelIr, BuildError> {
    check_matrix("mean demand", &mean_demand.mean, inst.num_sites(), inst.periods)?;
    let sc = ScenarioSet::point_mass(mean_demand.mean.clone())
        .map_err(|e| BuildError::Audit(format!("mean demand is not a valid scenario: {e}")))?;
    build_two_stage(inst, &sc, Formulation::Deterministic, RecourseOpts::default())
}

/// Two-stage model where DCs may carry stock between periods.
pub fn build_dc_inventory_extension(inst: &Instance, scenarios: &ScenarioSet) -> Result<ModelIr, BuildError> {
    let stock = inst.dc_inventory.as_ref().ok_or(BuildError::MissingExtension("dc_inventory"))?;
    build_two_stage(inst, scenarios, Formulation::DcInventory, RecourseOpts { dc_stock: Some(stock), lead_time: None })
}

/// Two-stage model where a shipment sent in period `t` arrives in
/// `t + L_ij`. Shipments that would arrive after the horizon never do.
pub fn build_lead_time_extension(inst: &Instance, scenarios: &ScenarioSet) -> Result<ModelIr, BuildError> {
    let lead = inst.lead_time.as_deref().ok_or(BuildError::MissingExtension("lead_time"))?;
    build_two_stage(inst, scenarios, Formulation::LeadTime, RecourseOpts { dc_stock: None, lead_time: Some(lead) })
}

/// Two-stage model with resource types. Demand is split across types by
/// free variables; the budget caps the sum over DCs and types.
pub fn build_multi_type_extension(inst: &TypedInstance, scenarios: &ScenarioSet) -> Result<ModelIr, BuildError> {
    let report = validate_typed_instance(inst);
    if !report.is_valid() {
        return Err(BuildError::InvalidInstance(report));
    }
    let base = &inst.base;
    check_scenarios(base, scenarios)?;
    let (ni, nj, nt, nl, nw) = (base.num_dcs(), base.num_sites(), base.periods, inst.num_types(), scenarios.len());
    let mut b = IrBuilder::new(Formulation::MultiType);

    let x: Vec<Vec<VarId>> = (0..ni)
        .map(|i| {
            let (lo, hi) = base.status(i).open_bounds();
            (0..nl).map(|l| b.var(VarKey::TypedOpen { i, l }, lo, hi, true, inst.operating_cost[i][l])).collect()
        })
        .collect();
    let mut h = vec![vec![vec![VarId(0); nl]; nt]; ni];
    for i in 0..ni {
        for t in 0..nt {
            for l in 0..nl {
                h[i][t][l] = b.nonneg(VarKey::TypedCapacity { i, t, l }, inst.capacity_unit_cost[i][l]);
            }
        }
    }
    for i in 0..ni {
        for t in 0..nt {
            for l in 0..nl {
                b.row(
                    RowKey::TypedOpenLink { i, t, l },
                    vec![(h[i][t][l], 1.0), (x[i][l], -inst.dc_capacity_limit[i][l])],
                    Relation::Le,
                    0.0,
                );
            }
        }
    }
    for t in 0..nt {
        let terms = (0..ni).flat_map(|i| (0..nl).map(move |l| (i, l))).map(|(i, l)| (h[i][t][l], 1.0)).collect();
        b.row(RowKey::Budget { t }, terms, Relation::Le, base.temporal_budget[t]);
    }

    for w in 0..nw {
        let p = scenarios.probability(w);
        let d = scenarios.demand(w);
        let mut s = vec![vec![vec![vec![VarId(0); nl]; nt]; nj]; ni];
        for i in 0..ni {
            for j in 0..nj {
                for t in 0..nt {
                    for l in 0..nl {
                        s[i][j][t][l] =
                            b.nonneg(VarKey::TypedShip { w, i, j, t, l }, p * inst.shipping_unit_cost[i][j][t][l]);
                    }
                }
            }
        }
        let mut inv = vec![vec![vec![VarId(0); nl]; nt]; nj];
        let mut u = inv.clone();
        let mut split = inv.clone();
        for j in 0..nj {
            for t in 0..nt {
                for l in 0..nl {
                    inv[j][t][l] =
                        b.nonneg(VarKey::TypedInventory { w, j, t, l }, p * inst.inventory_unit_cost[j][t][l]);
                }
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                for l in 0..nl {
                    u[j][t][l] = b.nonneg(VarKey::TypedBacklog { w, j, t, l }, p * inst.penalty_unit_cost[j][t][l]);
                }
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                for l in 0..nl {
                    split[j][t][l] = b.nonneg(VarKey::Split { w, j, t, l }, 0.0);
                }
            }
        }
        for i in 0..ni {
            for t in 0..nt {
                for l in 0..nl {
                    let mut terms: Vec<(VarId, f64)> = (0..nj).map(|j| (s[i][j][t][l], 1.0)).collect();
                    terms.push((h[i][t][l], -1.0));
                    b.row(RowKey::TypedShipCap { w, i, t, l }, terms, Relation::Le, 0.0);
                }
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                for l in 0..nl {
                    let mut terms: Vec<(VarId, f64)> = (0..ni).map(|i| (s[i][j][t][l], 1.0)).collect();
                    terms.push((u[j][t][l], 1.0));
                    terms.push((inv[j][t][l], -1.0));
                    terms.push((split[j][t][l], -1.0));
                    let mut rhs = 0.0;
                    if t > 0 {
                        terms.push((inv[j][t - 1][l], 1.0));
                        terms.push((u[j][t - 1][l], -1.0));
                    } else {
                        rhs = inst.initial_backlog[j][l] - inst.initial_inventory[j][l];
                    }
                    b.row(RowKey::TypedFlow { w, j, t, l }, terms, Relation::Eq, rhs);
                }
            }
        }
        for j in 0..nj {
            for t in 0..nt {
                let terms = (0..nl).map(|l| (split[j][t][l], 1.0)).collect();
                b.row(RowKey::Partition { w, j, t }, terms, Relation::Eq, d[j][t]);
            }
        }
    }
    let dims = Dims { i: ni, j: nj, t: nt, w: nw, l: nl, m: 0 };
    let per_w_jtl = nw * nj * nt * nl;
    b.finish(
        dims,
        &[
            ("x_typed", ni * nl),
            ("h_typed", ni * nt * nl),
            ("s_typed", nw * ni * nj * nt * nl),
            ("I_typed", per_w_jtl),
            ("u_typed", per_w_jtl),
            ("dbar", per_w_jtl),
        ],
        &[
            ("open_link_typed", ni * nt * nl),
            ("budget", nt),
            ("ship_cap_typed", nw * ni * nt * nl),
            ("flow_typed", per_w_jtl),
            ("partition", nw * nj * nt),
        ],
    )
}

/// Single-level MILP of the moment-based distributionally robust model.
///
/// The second-moment centre is `S` from the moment estimate, which equals
/// `mu^2 + sigma^2` by construction.
pub fn build_dro_milp(inst: &Instance, amb: &AmbiguitySpec) -> Result<ModelIr, BuildError> {
    require_valid(inst)?;
    if !amb.extra().is_empty() {
        return Err(BuildError::GeneralMoments);
    }
    let (ni, nj, nt, nk) = (inst.num_dcs(), inst.num_sites(), inst.periods, amb.num_support());
    check_matrix("ambiguity moments", &amb.moments().mean, nj, nt)?;
    let mut b = IrBuilder::new(Formulation::DistributionallyRobust);
    let h = first_stage(&mut b, inst);

    let s_mom = &amb.moments().second_moment;
    let a1 = b.nonneg(VarKey::Alpha1, -1.0);
    let b1 = b.nonneg(VarKey::Beta1, 1.0);
    let grid =
        |b: &mut IrBuilder, mk: fn(usize, usize) -> VarKey, cost: &dyn Fn(usize, usize) -> f64| -> Vec<Vec<VarId>> {
            (0..nj).map(|j| (0..nt).map(|t| b.nonneg(mk(j, t), cost(j, t))).collect()).collect()
        };
    let a2 = grid(&mut b, |j, t| VarKey::Alpha2 { j, t }, &|j, t| -amb.mean_bounds(j, t).0);
    let a3 = grid(&mut b, |j, t| VarKey::Alpha3 { j, t }, &|j, t| -s_mom[j][t] * amb.second_moment_lo()[j][t]);
    let b2 = grid(&mut b, |j, t| VarKey::Beta2 { j, t }, &|j, t| amb.mean_bounds(j, t).1);
    let b3 = grid(&mut b, |j, t| VarKey::Beta3 { j, t }, &|j, t| s_mom[j][t] * amb.second_moment_hi()[j][t]);

    for (k, xi) in amb.support().iter().enumerate() {
        check_matrix("support point", xi, nj, nt)?;
        let costs = recourse_block(&mut b, inst, k, 0.0, xi, Cap::Vars(&h), RecourseOpts::default());
        let phi = b.nonneg(VarKey::Phi { k }, 0.0);
        let mut coupling = vec![(a1, -1.0), (b1, 1.0)];
        for j in 0..nj {
            for t in 0..nt {
                let v = xi[j][t];
                coupling.extend([(a2[j][t], -v), (b2[j][t], v), (a3[j][t], -v * v), (b3[j][t], v * v)]);
            }
        }
        coupling.push((phi, -1.0));
        b.row(RowKey::Coupling { k }, coupling, Relation::Ge, 0.0);
        let mut def = vec![(phi, 1.0)];
        def.extend(costs.into_iter().map(|(v, c)| (v, -c)));
        b.row(RowKey::PhiDef { k }, def, Relation::Eq, 0.0);
    }
    let jt = nj * nt;
    let dims = Dims { i: ni, j: nj, t: nt, w: nk, ..Dims::default() };
    b.finish(
        dims,
        &[
            ("x", ni),
            ("h", ni * nt),
            ("alpha1", 1),
            ("beta1", 1),
            ("alpha2", jt),
            ("alpha3", jt),
            ("beta2", jt),
            ("beta3", jt),
            ("s", nk * ni * jt),
            ("I", nk * jt),
            ("u", nk * jt),
            ("phi", nk),
        ],
        &[
            ("open_link", ni * nt),
            ("budget", nt),
            ("coupling", nk),
            ("phi_def", nk),
            ("ship_cap", nk * ni * nt),
            ("flow", nk * jt),
        ],
    )
}

/// Worst-case expectation over the ambiguity set for fixed recourse values
/// `g[k]`, as a minimization of `-sum_k p_k g_k`. Moment bounds become a
/// lower row and an upper row each.
pub fn build_worst_case_lp(amb: &AmbiguitySpec, g: &[f64]) -> Result<ModelIr, BuildError> {
    let nk = amb.num_support();
    if g.len() != nk {
        return Err(BuildError::RecourseValues { expected: nk, found: g.len() });
    }
    let system = amb.moment_system();
    let mut b = IrBuilder::new(Formulation::WorstCase);
    let p: Vec<VarId> = (0..nk).map(|k| b.nonneg(VarKey::Weight { k }, -g[k])).collect();
    for (s, m) in system.iter().enumerate() {
        let terms: Vec<(VarId, f64)> = p.iter().zip(amb.support()).map(|(&v, xi)| (v, m.function.eval(xi))).collect();
        b.row(RowKey::MomentLower { s }, terms.clone(), Relation::Ge, m.lower);
        b.row(RowKey::MomentUpper { s }, terms, Relation::Le, m.upper);
    }
    let ns = system.len();
    let dims = Dims { w: nk, m: ns, ..Dims::default() };
    b.finish(dims, &[("p", nk)], &[("moment_lo", ns), ("moment_hi", ns)])
}

/// Dual of [`build_worst_case_lp`]: `min -alpha^T l + beta^T u` subject to
/// `(beta - alpha)^T f(xi^k) >= g_k` for every support point.
pub fn build_worst_case_dual_lp(amb: &AmbiguitySpec, g: &[f64]) -> Result<ModelIr, BuildError> {
    let nk = amb.num_support();
    if g.len() != nk {
        return Err(BuildError::RecourseValues { expected: nk, found: g.len() });
    }
    let system = amb.moment_system();
    let mut b = IrBuilder::new(Formulation::WorstCaseDual);
    let alpha: Vec<VarId> = (0..system.len()).map(|s| b.nonneg(VarKey::MomentLo { s }, -system[s].lower)).collect();
    let beta: Vec<VarId> = (0..system.len()).map(|s| b.nonneg(VarKey::MomentHi { s }, system[s].upper)).collect();
    for (k, xi) in amb.support().iter().enumerate() {
        let mut terms = Vec::with_capacity(2 * system.len());
        for (s, m) in system.iter().enumerate() {
            let f = m.function.eval(xi);
            terms.push((alpha[s], -f));
            terms.push((beta[s], f));
        }
        b.row(RowKey::SupportCut { k }, terms, Relation::Ge, g[k]);
    }
    let ns = system.len();
    let dims = Dims { w: nk, m: ns, ..Dims::default() };
    b.finish(dims, &[("alpha", ns), ("beta", ns)], &[("support_cut", nk)])
}

fn check_capacity(inst: &Instance, h: &[Vec<f64>]) -> Result<(), BuildError> {
    let (ni, nt) = (inst.num_dcs(), inst.periods);
    if h.len() != ni || h.iter().any(|r| r.len() != nt) {
        return Err(BuildError::Shape {
            what: "capacity".into(),
            expected: (ni, nt),
            found: (h.len(), h.first().map_or(0, Vec::len)),
        });
    }
    Ok(())
}

/// Recourse LP for fixed capacities `h[i][t]` and demand `xi[j][t]`.
pub fn build_second_stage(inst: &Instance, h: &[Vec<f64>], xi: &DemandMatrix) -> Result<ModelIr, BuildError> {
    require_valid(inst)?;
    check_capacity(inst, h)?;
    check_matrix("demand", xi, inst.num_sites(), inst.periods)?;
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    let mut b = IrBuilder::new(Formulation::SecondStage);
    recourse_block(&mut b, inst, 0, 1.0, xi, Cap::Fixed(h), RecourseOpts::default());
    let dims = Dims { i: ni, j: nj, t: nt, w: 1, ..Dims::default() };
    b.finish(dims, &[("s", ni * nj * nt), ("I", nj * nt), ("u", nj * nt)], &[("ship_cap", ni * nt), ("flow", nj * nt)])
}

/// Dual of the recourse LP, built directly over `theta <= 0` (capacity
/// rows) and free `gamma` (flow rows), as a minimization of the negated
/// dual objective.
pub fn build_second_stage_dual(inst: &Instance, h: &[Vec<f64>], xi: &DemandMatrix) -> Result<ModelIr, BuildError> {
    require_valid(inst)?;
    check_capacity(inst, h)?;
    check_matrix("demand", xi, inst.num_sites(), inst.periods)?;
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    let mut b = IrBuilder::new(Formulation::SecondStageDual);
    let theta: Vec<Vec<VarId>> =
        (0..ni).map(|i| (0..nt).map(|t| b.var(VarKey::Theta { i, t }, -INF, 0.0, false, -h[i][t])).collect()).collect();
    let gamma: Vec<Vec<VarId>> = (0..nj)
        .map(|j| {
            (0..nt)
                .map(|t| {
                    let mut coef = xi[j][t];
                    if t == 0 {
                        coef += inst.initial_backlog[j] - inst.initial_inventory[j];
                    }
                    b.var(VarKey::Gamma { j, t }, -INF, INF, false, -coef)
                })
                .collect()
        })
        .collect();
    for i in 0..ni {
        for j in 0..nj {
            for t in 0..nt {
                b.row(
                    RowKey::DualShip { i, j, t },
                    vec![(theta[i][t], 1.0), (gamma[j][t], 1.0)],
                    Relation::Le,
                    inst.shipping_unit_cost[i][j][t],
                );
            }
        }
    }
    for j in 0..nj {
        for t in 0..nt {
            let mut terms = vec![(gamma[j][t], -1.0)];
            if t + 1 < nt {
                terms.push((gamma[j][t + 1], 1.0));
            }
            b.row(RowKey::DualInventory { j, t }, terms, Relation::Le, inst.inventory_unit_cost[j][t]);
        }
    }
    for j in 0..nj {
        for t in 0..nt {
            let mut terms = vec![(gamma[j][t], 1.0)];
            if t + 1 < nt {
                terms.push((gamma[j][t + 1], -1.0));
            }
            b.row(RowKey::DualBacklog { j, t }, terms, Relation::Le, inst.penalty_unit_cost[j][t]);
        }
    }
    let dims = Dims { i: ni, j: nj, t: nt, ..Dims::default() };
    b.finish(
        dims,
        &[("theta", ni * nt), ("gamma", nj * nt)],
        &[("dual_ship", ni * nj * nt), ("dual_inventory", nj * nt), ("dual_backlog", nj * nt)],
    )
}
