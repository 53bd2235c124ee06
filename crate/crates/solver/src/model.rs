//! Solver-agnostic description of a (mixed-integer) linear program.
//!
//! A [`Model`] is always a minimization. Variables carry their own bounds
//! (either side may be infinite) and an integrality flag; constraints are
//! sparse rows with a relation and a right-hand side.

use std::fmt;

use thiserror::Error;

/// Index of a variable inside a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Index of a constraint row inside a [`Model`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

impl RowId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    /// Row activity `sum a_j x_j` at the given point.
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates this row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.relation {
            Relation::Le => (act - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - act).max(0.0),
            Relation::Eq => (act - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("constraint `{row}` references undeclared variable index {var}")]
    UnknownVariable { row: String, var: usize },
    #[error("variable `{name}` has lower bound {lower} above upper bound {upper}")]
    InvertedBounds { name: String, lower: f64, upper: f64 },
    #[error("non-finite coefficient in {place}")]
    NonFinite { place: String },
    #[error("duplicate variable name `{0}`")]
    DuplicateName(String),
}

/// A minimization problem `min c^T x` over linear rows and variable bounds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Model {
    vars: Vec<Variable>,
    objective: Vec<f64>,
    constraints: Vec<Constraint>,
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, integer: bool) -> VarId {
        self.vars.push(Variable { name: name.into(), lower, upper, integer });
        self.objective.push(0.0);
        VarId(self.vars.len() - 1)
    }

    pub fn add_continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, lower, upper, false)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, 0.0, 1.0, true)
    }

    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> RowId {
        self.constraints.push(Constraint { name: name.into(), terms, relation, rhs });
        RowId(self.constraints.len() - 1)
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.objective[var.0] = cost;
    }

    pub fn add_cost(&mut self, var: VarId, cost: f64) {
        self.objective[var.0] += cost;
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn vars(&self) -> &[Variable] {
        &self.vars
    }

    pub fn var(&self, id: VarId) -> &Variable {
        &self.vars[id.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn constraint(&self, id: RowId) -> &Constraint {
        &self.constraints[id.0]
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Indices of integer variables whose bounds still leave a choice.
    pub fn free_integer_vars(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.integer && v.upper - v.lower > 0.5)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    /// Structural sanity: every row references declared variables, bounds are
    /// ordered, all coefficients are finite and variable names are unique.
    pub fn check(&self) -> Result<(), ModelError> {
        let mut names = std::collections::HashSet::with_capacity(self.vars.len());
        for (v, c) in self.vars.iter().zip(&self.objective) {
            if v.lower > v.upper || v.lower.is_nan() || v.upper.is_nan() {
                return Err(ModelError::InvertedBounds { name: v.name.clone(), lower: v.lower, upper: v.upper });
            }
            if !c.is_finite() {
                return Err(ModelError::NonFinite { place: format!("objective coefficient of `{}`", v.name) });
            }
            if !names.insert(v.name.as_str()) {
                return Err(ModelError::DuplicateName(v.name.clone()));
            }
        }
        for row in &self.constraints {
            if !row.rhs.is_finite() {
                return Err(ModelError::NonFinite { place: format!("right-hand side of `{}`", row.name) });
            }
            for &(v, a) in &row.terms {
                if v.0 >= self.vars.len() {
                    return Err(ModelError::UnknownVariable { row: row.name.clone(), var: v.0 });
                }
                if !a.is_finite() {
                    return Err(ModelError::NonFinite { place: format!("row `{}`", row.name) });
                }
            }
        }
        Ok(())
    }

    /// Largest row violation and bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds =
            self.vars.iter().zip(x).map(|(v, &val)| (v.lower - val).max(val - v.upper).max(0.0)).fold(0.0, f64::max);
        rows.max(bounds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_rejects_unknown_variable() {
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 1.0);
        m.add_constraint("r", vec![(x, 1.0), (VarId(7), 1.0)], Relation::Le, 1.0);
        assert!(matches!(m.check(), Err(ModelError::UnknownVariable { var: 7, .. })));
    }

    #[test]
    fn check_rejects_inverted_bounds_and_duplicates() {
        let mut m = Model::new();
        m.add_continuous("x", 2.0, 1.0);
        assert!(matches!(m.check(), Err(ModelError::InvertedBounds { .. })));

        let mut m = Model::new();
        m.add_continuous("x", 0.0, 1.0);
        m.add_continuous("x", 0.0, 1.0);
        assert_eq!(m.check(), Err(ModelError::DuplicateName("x".into())));
    }

    #[test]
    fn violation_by_relation() {
        let mut m = Model::new();
        let x = m.add_continuous("x", 0.0, 10.0);
        let le = m.add_constraint("le", vec![(x, 2.0)], Relation::Le, 4.0);
        let ge = m.add_constraint("ge", vec![(x, 1.0)], Relation::Ge, 5.0);
        let eq = m.add_constraint("eq", vec![(x, 1.0)], Relation::Eq, 3.0);
        let pt = [3.0];
        assert_eq!(m.constraint(le).violation(&pt), 2.0);
        assert_eq!(m.constraint(ge).violation(&pt), 2.0);
        assert_eq!(m.constraint(eq).violation(&pt), 0.0);
        assert_eq!(m.max_violation(&pt), 2.0);
    }
}
