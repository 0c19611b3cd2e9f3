//! CPLEX LP-format text dump for cross-checking against external solvers.

use std::fmt::Write as _;

use crate::model::{LinearModel, ObjectiveSense, VarKind};

fn sanitize(name: &str, j: usize) -> String {
    let ok: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    if ok.is_empty() || ok.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("x{j}_{ok}")
    } else {
        ok
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(&names.first().cloned().unwrap_or_else(|| "x0".into()));
        return;
    }
    for (k, &(j, a)) in terms.iter().enumerate() {
        let sign = if a < 0.0 { '-' } else { '+' };
        if k == 0 && a >= 0.0 {
            let _ = write!(out, " {} {}", a, names[j]);
        } else {
            let _ = write!(out, " {} {} {}", sign, a.abs(), names[j]);
        }
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

/// Renders `model` in LP format. Variable and row names are made unique by index.
pub fn write_lp(model: &LinearModel) -> String {
    let names: Vec<String> = model
        .vars()
        .iter()
        .enumerate()
        .map(|(j, v)| format!("{}_{j}", sanitize(&v.name, j)))
        .collect();
    let mut out = String::new();
    out.push_str(match model.sense() {
        ObjectiveSense::Minimize => "Minimize\n",
        ObjectiveSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj:");
    let obj: Vec<(usize, f64)> = model.objective().terms.iter().map(|&(v, c)| (v.index(), c)).collect();
    write_terms(&mut out, &obj, &names);
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints().iter().enumerate() {
        let terms: Vec<(usize, f64)> = c.terms.iter().map(|&(v, a)| (v.index(), a)).collect();
        let name = format!("{}_{i}", sanitize(&c.name, i));
        if c.lower == c.upper {
            let _ = write!(out, " {name}:");
            write_terms(&mut out, &terms, &names);
            let _ = writeln!(out, " = {}", num(c.lower));
            continue;
        }
        if c.lower.is_finite() {
            let _ = write!(out, " {name}_lo:");
            write_terms(&mut out, &terms, &names);
            let _ = writeln!(out, " >= {}", num(c.lower));
        }
        if c.upper.is_finite() {
            let _ = write!(out, " {name}_hi:");
            write_terms(&mut out, &terms, &names);
            let _ = writeln!(out, " <= {}", num(c.upper));
        }
    }
    out.push_str("Bounds\n");
    for (j, v) in model.vars().iter().enumerate() {
        if v.lower == f64::NEG_INFINITY && v.upper == f64::INFINITY {
            let _ = writeln!(out, " {} free", names[j]);
        } else {
            let _ = writeln!(out, " {} <= {} <= {}", num(v.lower), names[j], num(v.upper));
        }
    }
    let ints: Vec<&String> = model
        .vars()
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind != VarKind::Continuous)
        .map(|(j, _)| &names[j])
        .collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for n in ints {
            let _ = writeln!(out, " {n}");
        }
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LinExpr, Sense};

    #[test]
    fn dump_contains_sections() {
        let mut m = LinearModel::new(ObjectiveSense::Maximize);
        let a = m.add_binary("a");
        let b = m.add_continuous("b", 0.0, 4.0);
        m.add_constraint("cap", LinExpr::new().term(a, 1.0).term(b, -2.0), Sense::Le, 1.0);
        m.set_objective(LinExpr::new().term(a, 3.0).term(b, 1.0), ObjectiveSense::Maximize);
        let s = write_lp(&m);
        assert!(s.starts_with("Maximize"));
        assert!(s.contains("cap_0_hi: 1 a_0 - 2 b_1 <= 1"));
        assert!(s.contains("General\n a_0"));
        assert!(s.ends_with("End\n"));
    }
}
