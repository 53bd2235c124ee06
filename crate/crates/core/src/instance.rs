//! Planning instance: index sets, cost arrays, capacity limits and the
//! initial state of every demand site.
//!
//! Arrays are stored densely and indexed `[i]`, `[i][t]`, `[i][j][t]` or
//! `[j][t]` (DC `i`, demand site `j`, period `t`, all zero-based). Nothing is
//! checked on construction; [`validate_instance`] reports every problem at
//! once.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcStatus {
    /// Already operating; the open decision is fixed to 1.
    Preopened,
    Candidate,
    /// Never opened; the open decision is fixed to 0.
    Forbidden,
}

impl DcStatus {
    /// Bounds on the open decision `x_i`.
    pub fn open_bounds(self) -> (f64, f64) {
        match self {
            DcStatus::Preopened => (1.0, 1.0),
            DcStatus::Candidate => (0.0, 1.0),
            DcStatus::Forbidden => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcSite {
    pub id: String,
    pub label: String,
    /// Latitude and longitude in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<[f64; 2]>,
    pub status: DcStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSite {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<[f64; 2]>,
}

/// Inventory held at the DCs themselves between periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DcInventory {
    /// `[i][t]`, per unit held at the end of period `t`.
    pub unit_cost: Vec<Vec<f64>>,
    /// `[i]`, stock on hand before the first period.
    pub initial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub dc_sites: Vec<DcSite>,
    pub demand_sites: Vec<DemandSite>,
    pub periods: usize,
    /// `[i]`, charged once per horizon for every open DC.
    pub operating_cost: Vec<f64>,
    /// `[i][t]`, per unit of installed capacity.
    pub capacity_unit_cost: Vec<Vec<f64>>,
    /// `[i][j][t]`
    pub shipping_unit_cost: Vec<Vec<Vec<f64>>>,
    /// `[j][t]`
    pub inventory_unit_cost: Vec<Vec<f64>>,
    /// `[j][t]`
    pub penalty_unit_cost: Vec<Vec<f64>>,
    /// `[i]`, also the big-M of the open/capacity link.
    pub dc_capacity_limit: Vec<f64>,
    /// `[t]`
    pub temporal_budget: Vec<f64>,
    /// `[j]`
    pub initial_inventory: Vec<f64>,
    /// `[j]`
    pub initial_backlog: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dc_inventory: Option<DcInventory>,
    /// `[i][j]`, in whole periods.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lead_time: Option<Vec<Vec<usize>>>,
}

impl Instance {
    /// An instance with the given sets and every cost, limit and initial
    /// value set to zero. All DCs start as candidates.
    pub fn zeroed(dcs: usize, sites: usize, periods: usize) -> Self {
        Self {
            dc_sites: (0..dcs)
                .map(|i| DcSite {
                    id: format!("dc{}", i + 1),
                    label: format!("DC {}", i + 1),
                    coords: None,
                    status: DcStatus::Candidate,
                })
                .collect(),
            demand_sites: (0..sites)
                .map(|j| DemandSite { id: format!("site{}", j + 1), label: format!("Site {}", j + 1), coords: None })
                .collect(),
            periods,
            operating_cost: vec![0.0; dcs],
            capacity_unit_cost: vec![vec![0.0; periods]; dcs],
            shipping_unit_cost: vec![vec![vec![0.0; periods]; sites]; dcs],
            inventory_unit_cost: vec![vec![0.0; periods]; sites],
            penalty_unit_cost: vec![vec![0.0; periods]; sites],
            dc_capacity_limit: vec![0.0; dcs],
            temporal_budget: vec![0.0; periods],
            initial_inventory: vec![0.0; sites],
            initial_backlog: vec![0.0; sites],
            dc_inventory: None,
            lead_time: None,
        }
    }

    pub fn num_dcs(&self) -> usize {
        self.dc_sites.len()
    }

    pub fn num_sites(&self) -> usize {
        self.demand_sites.len()
    }

    pub fn dc_index(&self, id: &str) -> Option<usize> {
        self.dc_sites.iter().position(|d| d.id == id)
    }

    pub fn status(&self, i: usize) -> DcStatus {
        self.dc_sites[i].status
    }
}

/// Instance with a resource-type dimension `l` on every DC decision and on
/// the demand-side inventory and backlog.
///
/// Sets, statuses and the temporal budget come from `base`; its cost arrays,
/// capacity limits and initial state are ignored in favour of the typed ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypedInstance {
    pub base: Instance,
    pub types: Vec<String>,
    /// `[i][l]`
    pub operating_cost: Vec<Vec<f64>>,
    /// `[i][l]`
    pub capacity_unit_cost: Vec<Vec<f64>>,
    /// `[i][j][t][l]`
    pub shipping_unit_cost: Vec<Vec<Vec<Vec<f64>>>>,
    /// `[j][t][l]`
    pub inventory_unit_cost: Vec<Vec<Vec<f64>>>,
    /// `[j][t][l]`
    pub penalty_unit_cost: Vec<Vec<Vec<f64>>>,
    /// `[i][l]`
    pub dc_capacity_limit: Vec<Vec<f64>>,
    /// `[j][l]`
    pub initial_inventory: Vec<Vec<f64>>,
    /// `[j][l]`
    pub initial_backlog: Vec<Vec<f64>>,
}

impl TypedInstance {
    /// Lift a base instance to a single resource type. The base capacity cost
    /// of the first period is used for `c^h_il`.
    pub fn single_type(base: &Instance) -> Self {
        let one = |v: f64| vec![v];
        Self {
            types: vec!["default".to_string()],
            operating_cost: base.operating_cost.iter().map(|&c| one(c)).collect(),
            capacity_unit_cost: base
                .capacity_unit_cost
                .iter()
                .map(|row| one(row.first().copied().unwrap_or(0.0)))
                .collect(),
            shipping_unit_cost: base
                .shipping_unit_cost
                .iter()
                .map(|a| a.iter().map(|b| b.iter().map(|&c| one(c)).collect()).collect())
                .collect(),
            inventory_unit_cost: lift_jt(&base.inventory_unit_cost),
            penalty_unit_cost: lift_jt(&base.penalty_unit_cost),
            dc_capacity_limit: base.dc_capacity_limit.iter().map(|&m| one(m)).collect(),
            initial_inventory: base.initial_inventory.iter().map(|&v| one(v)).collect(),
            initial_backlog: base.initial_backlog.iter().map(|&v| one(v)).collect(),
            base: base.clone(),
        }
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }
}

fn lift_jt(a: &[Vec<f64>]) -> Vec<Vec<Vec<f64>>> {
    a.iter().map(|r| r.iter().map(|&c| vec![c]).collect()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    Negative(f64),
    NonFinite(f64),
    /// An array (or the sub-array at `index`) has the wrong length.
    Shape {
        expected: usize,
        found: usize,
    },
    EmptySet,
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: String,
    /// Axis name and zero-based position of the offending entry.
    pub index: Vec<(&'static str, usize)>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.field)?;
        if !self.index.is_empty() {
            let coords: Vec<String> = self.index.iter().map(|(a, k)| format!("{a}={}", k + 1)).collect();
            write!(f, " at ({})", coords.join(", "))?;
        }
        match &self.kind {
            ViolationKind::Negative(v) => write!(f, ": negative value {v}"),
            ViolationKind::NonFinite(v) => write!(f, ": non-finite value {v}"),
            ViolationKind::Shape { expected, found } => {
                write!(f, ": expected length {expected}, found {found}")
            }
            ViolationKind::EmptySet => f.write_str(": set is empty"),
            ViolationKind::DuplicateId(id) => write!(f, ": duplicate id `{id}`"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, index: Vec<(&'static str, usize)>, kind: ViolationKind) {
        self.violations.push(Violation { field: field.to_string(), index, kind });
    }

    fn value(&mut self, field: &str, index: Vec<(&'static str, usize)>, v: f64) {
        if !v.is_finite() {
            self.push(field, index, ViolationKind::NonFinite(v));
        } else if v < 0.0 {
            self.push(field, index, ViolationKind::Negative(v));
        }
    }

    /// Check a nested array against `dims` (one axis per level). A length
    /// mismatch at any level is reported once and the subtree is skipped.
    fn array<A: NestedArray + ?Sized>(&mut self, field: &str, axes: &[&'static str], dims: &[usize], a: &A) {
        a.visit(self, field, axes, dims, &mut Vec::new());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in self.violations.iter().enumerate() {
            if n > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

trait NestedArray {
    fn visit(
        &self,
        report: &mut ValidationReport,
        field: &str,
        axes: &[&'static str],
        dims: &[usize],
        at: &mut Vec<(&'static str, usize)>,
    );
}

impl NestedArray for f64 {
    fn visit(
        &self,
        report: &mut ValidationReport,
        field: &str,
        _: &[&'static str],
        _: &[usize],
        at: &mut Vec<(&'static str, usize)>,
    ) {
        report.value(field, at.clone(), *self);
    }
}

impl<T: NestedArray> NestedArray for [T] {
    fn visit(
        &self,
        report: &mut ValidationReport,
        field: &str,
        axes: &[&'static str],
        dims: &[usize],
        at: &mut Vec<(&'static str, usize)>,
    ) {
        if self.len() != dims[0] {
            report.push(field, at.clone(), ViolationKind::Shape { expected: dims[0], found: self.len() });
            return;
        }
        for (k, item) in self.iter().enumerate() {
            at.push((axes[0], k));
            item.visit(report, field, &axes[1..], &dims[1..], at);
            at.pop();
        }
    }
}

impl<T: NestedArray> NestedArray for Vec<T> {
    fn visit(
        &self,
        report: &mut ValidationReport,
        field: &str,
        axes: &[&'static str],
        dims: &[usize],
        at: &mut Vec<(&'static str, usize)>,
    ) {
        self.as_slice().visit(report, field, axes, dims, at)
    }
}

fn check_ids<'a>(report: &mut ValidationReport, field: &str, axis: &'static str, ids: impl Iterator<Item = &'a str>) {
    let mut seen = std::collections::HashSet::new();
    for (k, id) in ids.enumerate() {
        if !seen.insert(id) {
            report.push(field, vec![(axis, k)], ViolationKind::DuplicateId(id.to_string()));
        }
    }
}

/// Every invariant violation of `inst`, with coordinates. Never fails.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut r = ValidationReport::default();
    let (ni, nj, nt) = (inst.num_dcs(), inst.num_sites(), inst.periods);
    if ni == 0 {
        r.push("dc_sites", vec![], ViolationKind::EmptySet);
    }
    if nj == 0 {
        r.push("demand_sites", vec![], ViolationKind::EmptySet);
    }
    if nt == 0 {
        r.push("periods", vec![], ViolationKind::EmptySet);
    }
    check_ids(&mut r, "dc_sites", "i", inst.dc_sites.iter().map(|d| d.id.as_str()));
    check_ids(&mut r, "demand_sites", "j", inst.demand_sites.iter().map(|d| d.id.as_str()));

    r.array("operating_cost", &["i"], &[ni], &inst.operating_cost);
    r.array("capacity_unit_cost", &["i", "t"], &[ni, nt], &inst.capacity_unit_cost);
    r.array("shipping_unit_cost", &["i", "j", "t"], &[ni, nj, nt], &inst.shipping_unit_cost);
    r.array("inventory_unit_cost", &["j", "t"], &[nj, nt], &inst.inventory_unit_cost);
    r.array("penalty_unit_cost", &["j", "t"], &[nj, nt], &inst.penalty_unit_cost);
    r.array("dc_capacity_limit", &["i"], &[ni], &inst.dc_capacity_limit);
    r.array("temporal_budget", &["t"], &[nt], &inst.temporal_budget);
    r.array("initial_inventory", &["j"], &[nj], &inst.initial_inventory);
    r.array("initial_backlog", &["j"], &[nj], &inst.initial_backlog);
    if let Some(dci) = &inst.dc_inventory {
        r.array("dc_inventory.unit_cost", &["i", "t"], &[ni, nt], &dci.unit_cost);
        r.array("dc_inventory.initial", &["i"], &[ni], &dci.initial);
    }
    if let Some(lead) = &inst.lead_time {
        // Lead times are unsigned integers by type; only the shape can be wrong.
        if lead.len() != ni {
            r.push("lead_time", vec![], ViolationKind::Shape { expected: ni, found: lead.len() });
        } else {
            for (i, row) in lead.iter().enumerate() {
                if row.len() != nj {
                    r.push("lead_time", vec![("i", i)], ViolationKind::Shape { expected: nj, found: row.len() });
                }
            }
        }
    }
    r
}

/// Validation of the typed arrays plus everything [`validate_instance`]
/// checks on the sets of `base`.
pub fn validate_typed_instance(inst: &TypedInstance) -> ValidationReport {
    let b = &inst.base;
    let (ni, nj, nt, nl) = (b.num_dcs(), b.num_sites(), b.periods, inst.num_types());
    let mut r = ValidationReport::default();
    if nl == 0 {
        r.push("types", vec![], ViolationKind::EmptySet);
    }
    r.array("operating_cost", &["i", "l"], &[ni, nl], &inst.operating_cost);
    r.array("capacity_unit_cost", &["i", "l"], &[ni, nl], &inst.capacity_unit_cost);
    r.array("shipping_unit_cost", &["i", "j", "t", "l"], &[ni, nj, nt, nl], &inst.shipping_unit_cost);
    r.array("inventory_unit_cost", &["j", "t", "l"], &[nj, nt, nl], &inst.inventory_unit_cost);
    r.array("penalty_unit_cost", &["j", "t", "l"], &[nj, nt, nl], &inst.penalty_unit_cost);
    r.array("dc_capacity_limit", &["i", "l"], &[ni, nl], &inst.dc_capacity_limit);
    r.array("initial_inventory", &["j", "l"], &[nj, nl], &inst.initial_inventory);
    r.array("initial_backlog", &["j", "l"], &[nj, nl], &inst.initial_backlog);
    let mut base = validate_instance(b);
    for v in &mut base.violations {
        v.field = format!("base.{}", v.field);
    }
    r.violations.extend(base.violations);
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> Instance {
        let mut inst = Instance::zeroed(1, 1, 1);
        inst.dc_capacity_limit = vec![10.0];
        inst.temporal_budget = vec![10.0];
        inst
    }

    #[test]
    fn minimal_instance_is_valid() {
        assert!(validate_instance(&minimal()).is_valid());
    }

    #[test]
    fn negative_penalty_is_located() {
        let mut inst = minimal();
        inst.penalty_unit_cost[0][0] = -5.0;
        let report = validate_instance(&inst);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.field, "penalty_unit_cost");
        assert_eq!(v.index, vec![("j", 0), ("t", 0)]);
        assert_eq!(v.to_string(), "penalty_unit_cost at (j=1, t=1): negative value -5");
    }

    #[test]
    fn budget_length_mismatch() {
        let mut inst = Instance::zeroed(1, 1, 2);
        inst.temporal_budget = vec![1.0, 2.0, 3.0];
        let report = validate_instance(&inst);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].kind, ViolationKind::Shape { expected: 2, found: 3 });
    }

    #[test]
    fn nested_shape_reported_at_row() {
        let mut inst = Instance::zeroed(2, 2, 2);
        inst.shipping_unit_cost[1][0].push(1.0);
        inst.shipping_unit_cost[0][1][0] = f64::NAN;
        let report = validate_instance(&inst);
        assert_eq!(report.violations.len(), 2);
        assert_eq!(report.violations[0].index, vec![("i", 0), ("j", 1), ("t", 0)]);
        assert!(matches!(report.violations[0].kind, ViolationKind::NonFinite(_)));
        assert_eq!(report.violations[1].index, vec![("i", 1), ("j", 0)]);
    }

    #[test]
    fn empty_sets_and_duplicates() {
        let mut inst = Instance::zeroed(2, 1, 0);
        inst.dc_sites[1].id = "dc1".into();
        let report = validate_instance(&inst);
        let fields: Vec<&str> = report.violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, ["periods", "dc_sites"]);
    }

    #[test]
    fn validation_is_idempotent() {
        let mut inst = minimal();
        inst.operating_cost[0] = -1.0;
        let before = inst.clone();
        assert_eq!(validate_instance(&inst), validate_instance(&inst));
        assert_eq!(inst, before);
    }

    #[test]
    fn single_type_lift_is_valid() {
        let mut inst = Instance::zeroed(2, 3, 2);
        inst.penalty_unit_cost[2][1] = 7.0;
        let typed = TypedInstance::single_type(&inst);
        assert!(validate_typed_instance(&typed).is_valid());
        assert_eq!(typed.penalty_unit_cost[2][1], vec![7.0]);
    }
}
