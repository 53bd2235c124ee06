//! Writer for the CPLEX-style LP text format.
//!
//! Sections are emitted in a fixed order (objective, constraints, bounds,
//! binaries/generals) and rows/variables in model order, so the output is a
//! stable function of the model.

use std::fmt::Write;

use crate::model::{Model, Relation};

fn term(out: &mut String, first: bool, coef: f64, name: &str) {
    if coef < 0.0 {
        let _ = write!(out, " - {} {}", -coef, name);
    } else if first {
        let _ = write!(out, " {} {}", coef, name);
    } else {
        let _ = write!(out, " + {} {}", coef, name);
    }
}

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v}")
    }
}

pub fn write_lp(model: &Model) -> String {
    let mut out = String::new();
    let vars = model.vars();
    out.push_str("\\ generated by resdist-solver\nMinimize\n obj:");
    let mut first = true;
    for (j, &c) in model.objective().iter().enumerate() {
        if c != 0.0 {
            term(&mut out, first, c, &vars[j].name);
            first = false;
        }
    }
    if first {
        // the format needs at least one term
        let _ = write!(out, " 0 {}", vars.first().map(|v| v.name.as_str()).unwrap_or("__none"));
    }
    out.push_str("\nSubject To\n");
    for row in model.constraints() {
        let _ = write!(out, " {}:", row.name);
        if row.terms.is_empty() {
            out.push_str(" 0 ");
            out.push_str(vars.first().map(|v| v.name.as_str()).unwrap_or("__none"));
        }
        for (k, &(v, a)) in row.terms.iter().enumerate() {
            term(&mut out, k == 0, a, &vars[v.0].name);
        }
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {} {}", rel, num(row.rhs));
    }
    out.push_str("Bounds\n");
    for v in vars {
        if v.integer && v.lower == 0.0 && v.upper == 1.0 {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {} free", v.name);
            }
            _ if v.lower == v.upper => {
                let _ = writeln!(out, " {} = {}", v.name, num(v.lower));
            }
            (true, false) if v.lower == 0.0 => {}
            _ => {
                let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), v.name, num(v.upper));
            }
        }
    }
    let binaries: Vec<&str> =
        vars.iter().filter(|v| v.integer && v.lower == 0.0 && v.upper == 1.0).map(|v| v.name.as_str()).collect();
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for b in binaries {
            let _ = writeln!(out, " {b}");
        }
    }
    let generals: Vec<&str> =
        vars.iter().filter(|v| v.integer && !(v.lower == 0.0 && v.upper == 1.0)).map(|v| v.name.as_str()).collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for g in generals {
            let _ = writeln!(out, " {g}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_sections_in_canonical_order() {
        let mut m = Model::new();
        let x = m.add_binary("x_1");
        let h = m.add_continuous("h_1_1", 0.0, f64::INFINITY);
        let f = m.add_continuous("phi", f64::NEG_INFINITY, f64::INFINITY);
        m.set_cost(x, 10.0);
        m.set_cost(h, 2.5);
        m.add_constraint("cap_1_1", vec![(h, 1.0), (x, -7.0)], Relation::Le, 0.0);
        m.add_constraint("link", vec![(f, 1.0), (h, -1.0)], Relation::Ge, 1.5);
        let text = write_lp(&m);
        let expected = "\\ generated by resdist-solver\nMinimize\n obj: 10 x_1 + 2.5 h_1_1\nSubject To\n cap_1_1: 1 h_1_1 - 7 x_1 <= 0\n link: 1 phi - 1 h_1_1 >= 1.5\nBounds\n phi free\nBinaries\n x_1\nEnd\n";
        assert_eq!(text, expected);
    }
}
