//! LP-format text export of the linearized model.

use std::collections::HashSet;
use std::fmt::Write;

use layerplace_core::linearize::{IlpModel, Relation};

const LINE_WIDTH: usize = 100;

/// Coefficients print as integers when exact, otherwise in shortest
/// round-trip exponent form.
fn number(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x:e}")
    }
}

fn legal(c: char) -> bool {
    c.is_ascii_alphanumeric() || "!\"#$%&()/,.;?@_`'{}|~".contains(c)
}

/// LP-safe, unique names for the model variables.
fn lp_names(model: &IlpModel) -> Vec<String> {
    let mut seen = HashSet::new();
    model
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut name: String = v.name.chars().map(|c| if legal(c) { c } else { '_' }).collect();
            if name.is_empty()
                || name.starts_with(|c: char| c.is_ascii_digit() || c == '.')
                || name.starts_with(['e', 'E'])
            {
                name.insert(0, 'x');
            }
            if !seen.insert(name.clone()) {
                name = format!("{name}_{i}");
                seen.insert(name.clone());
            }
            name
        })
        .collect()
}

fn row_names(model: &IlpModel) -> Vec<String> {
    let mut seen = HashSet::new();
    model
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut name: String = r.name.chars().map(|c| if legal(c) { c } else { '_' }).collect();
            if name.is_empty() || name.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
                name.insert(0, 'r');
            }
            if !seen.insert(name.clone()) {
                name = format!("{name}_{i}");
                seen.insert(name.clone());
            }
            name
        })
        .collect()
}

/// Appends `label: terms` with continuation lines indented by one space.
fn push_expr(out: &mut String, label: &str, terms: &[(f64, &str)]) {
    let mut line = format!(" {label}:");
    if terms.is_empty() {
        line.push_str(" 0");
    }
    for (k, &(c, name)) in terms.iter().enumerate() {
        let sign = if c < 0.0 {
            "-"
        } else if k == 0 {
            ""
        } else {
            "+"
        };
        let mag = c.abs();
        let coef = if mag == 1.0 {
            String::new()
        } else {
            format!("{} ", number(mag))
        };
        let term = if sign.is_empty() {
            format!(" {coef}{name}")
        } else {
            format!(" {sign} {coef}{name}")
        };
        if line.len() + term.len() > LINE_WIDTH {
            out.push_str(&line);
            out.push('\n');
            line = String::new();
        }
        line.push_str(&term);
    }
    out.push_str(&line);
}

pub fn write_lp(model: &IlpModel) -> String {
    let names = lp_names(model);
    let rows = row_names(model);
    let mut out = String::new();
    out.push_str("\\ Binary placement model: minimize expected decision latency in seconds\n");
    out.push_str("Minimize\n");
    let obj: Vec<(f64, &str)> = model
        .objective
        .iter()
        .zip(&names)
        .filter(|(c, _)| **c != 0.0)
        .map(|(&c, n)| (c, n.as_str()))
        .collect();
    push_expr(&mut out, "obj", &obj);
    out.push_str("\nSubject To\n");
    for (row, name) in model.rows.iter().zip(&rows) {
        let terms: Vec<(f64, &str)> = row.terms.iter().map(|&(v, c)| (c, names[v].as_str())).collect();
        push_expr(&mut out, name, &terms);
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", number(row.rhs));
    }
    out.push_str("Binary\n");
    let mut line = String::new();
    for name in &names {
        if line.len() + name.len() + 1 > LINE_WIDTH {
            out.push_str(&line);
            out.push('\n');
            line.clear();
        }
        line.push(' ');
        line.push_str(name);
    }
    if !line.is_empty() {
        out.push_str(&line);
        out.push('\n');
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use layerplace_core::fixtures;
    use layerplace_core::linearize::{linearize, LinearizeOptions};

    #[test]
    fn numbers() {
        assert_eq!(number(1.0), "1");
        assert_eq!(number(-1.0), "-1");
        assert_eq!(number(512000.0), "512000");
        assert_eq!(number(0.00125), "1.25e-3");
        assert_eq!(number(4816.9), "4.8169e3");
    }

    #[test]
    fn sections_and_line_width() {
        let problem = fixtures::fig1b_problem(vec![fixtures::cnn5()], 1);
        let model = linearize(&problem, LinearizeOptions::default()).unwrap();
        let text = write_lp(&model);
        let sections: Vec<&str> = text.lines().filter(|l| !l.starts_with([' ', '\\'])).collect();
        assert_eq!(sections, ["Minimize", "Subject To", "Binary", "End"]);
        assert!(text.lines().all(|l| l.len() <= LINE_WIDTH + 40));
        assert!(text.contains(" assign_0_0: a_0_0_n01 + a_0_0_n02"));
        assert!(text.contains(" <= 512\n"));
        let binaries: usize = text
            .split("Binary\n")
            .nth(1)
            .unwrap()
            .lines()
            .take_while(|l| *l != "End")
            .map(|l| l.split_whitespace().count())
            .sum();
        assert_eq!(binaries, model.num_vars());
    }

    #[test]
    fn names_are_sanitized_and_unique() {
        let mut problem = fixtures::fig1b_problem(vec![fixtures::cnn5()], 1);
        let mut file = crate::files::ProblemFile::from_problem(&problem);
        for v in &mut file.topology.vertices {
            if v.id == "n01" {
                v.id = "n 02".into();
            }
            if v.id == "n02" {
                v.id = "n:02".into();
            }
        }
        let units = std::mem::take(&mut file.units.assign);
        file.units.assign = units
            .into_iter()
            .map(|(k, v)| {
                (
                    if k == "n01" {
                        "n 02".into()
                    } else if k == "n02" {
                        "n:02".into()
                    } else {
                        k
                    },
                    v,
                )
            })
            .collect();
        problem = file.build().unwrap();
        let model = linearize(&problem, LinearizeOptions::default()).unwrap();
        let names = lp_names(&model);
        let unique: HashSet<_> = names.iter().collect();
        assert_eq!(unique.len(), names.len());
        assert!(names.iter().all(|n| n.chars().all(legal)));
    }
}
