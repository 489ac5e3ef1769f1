//! Canonical text for systems and formal data; `parse_system` reads it back
//! to the same structure.

use std::fmt::Write;

use mildstokes_core::diffmod::{DiffSystem, FormalDatum};
use mildstokes_core::exponents::ComplexLit;
use mildstokes_core::linalg::CMat;
use mildstokes_core::series::{MatrixSeries, Series};
use mildstokes_core::Complex64;

use crate::parser::{SystemFile, Variable};

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

fn power_of_t(k: i64, m: i64) -> String {
    let g = gcd(k, m).max(1);
    let (p, q) = (k / g, m / g);
    match (p, q) {
        (1, 1) => String::from("t"),
        (_, 1) => format!("t^({p})"),
        _ => format!("t^({p}/{q})"),
    }
}

/// Series as `c0 + c1*t^(1/m) + …` in ascending powers; zero terms omitted.
pub fn format_series(s: &Series) -> String {
    let m = s.ramification() as i64;
    let mut terms = Vec::new();
    for (i, c) in s.coeffs().iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            continue;
        }
        let k = s.low() + i as i64;
        let lit = ComplexLit(*c).to_string();
        terms.push(if k == 0 { lit } else { format!("{lit}*{}", power_of_t(k, m)) });
    }
    if terms.is_empty() {
        String::from("0")
    } else {
        terms.join(" + ")
    }
}

pub fn format_complex(z: Complex64) -> String {
    ComplexLit(z).to_string()
}

fn format_constant_matrix(g: &CMat) -> String {
    let rows: Vec<String> = (0..g.nrows())
        .map(|i| {
            let row: Vec<String> = (0..g.ncols()).map(|j| format_complex(g[(i, j)])).collect();
            format!("[{}]", row.join(", "))
        })
        .collect();
    format!("[{}]", rows.join(", "))
}

fn format_matrix(a: &MatrixSeries) -> String {
    let n = a.dim();
    let rows: Vec<String> = (0..n)
        .map(|i| {
            let row: Vec<String> = (0..n).map(|j| format_series(&a.entry(i, j))).collect();
            format!("  [{}]", row.join(", "))
        })
        .collect();
    format!("[\n{}\n]", rows.join(",\n"))
}

/// `[(exponent, [[G]]), …]`.
pub fn format_formal(fd: &FormalDatum) -> String {
    let pieces: Vec<String> = fd
        .pieces
        .iter()
        .map(|p| format!("({}, {})", p.exponent, format_constant_matrix(&p.g)))
        .collect();
    format!("[{}]", pieces.join(", "))
}

pub fn print_system(f: &SystemFile) -> String {
    let mut out = String::new();
    let var = match f.var {
        Variable::T => "t",
        Variable::S => "s",
    };
    writeln!(out, "var {var}").unwrap();
    writeln!(out, "rank {}", f.rank).unwrap();
    writeln!(out, "ram {}", f.ramification).unwrap();
    writeln!(out, "trunc {}", f.truncation).unwrap();
    writeln!(out, "exact {}", if f.exact { "yes" } else { "no" }).unwrap();
    if let Some(a) = &f.matrix {
        writeln!(out, "A = {}", format_matrix(a)).unwrap();
    }
    if let Some(fd) = &f.formal {
        writeln!(out, "formal = {}", format_formal(fd)).unwrap();
    }
    for (k, v) in &f.params {
        writeln!(out, "param {k} = {}", format_complex(Complex64::new(*v, 0.0))).unwrap();
    }
    out
}

/// Text for a bare system, with the header taken from the system itself.
pub fn print_diff_system(sys: &DiffSystem) -> String {
    let a = sys.matrix();
    print_system(&SystemFile {
        var: Variable::T,
        rank: sys.rank(),
        ramification: a.ramification(),
        truncation: a.trunc(),
        matrix: Some(a.clone()),
        exact: sys.is_exact(),
        formal: None,
        params: Vec::new(),
    })
}

fn matrices_equal(a: &MatrixSeries, b: &MatrixSeries) -> bool {
    if a.dim() != b.dim() || a.ramification() != b.ramification() || a.trunc() != b.trunc() {
        return false;
    }
    let zero = CMat::zeros(a.dim(), a.dim());
    (a.low().min(b.low())..=a.trunc())
        .all(|k| a.coeff(k).unwrap_or_else(|| zero.clone()) == b.coeff(k).unwrap_or_else(|| zero.clone()))
}

fn formal_equal(a: &FormalDatum, b: &FormalDatum) -> bool {
    a.pieces.len() == b.pieces.len()
        && a.pieces.iter().zip(&b.pieces).all(|(p, q)| {
            p.g == q.g
                && p.exponent.ramification() == q.exponent.ramification()
                && p.exponent.coeffs() == q.exponent.coeffs()
        })
}

/// Equality of everything a file describes, coefficient by coefficient.
pub fn structurally_equal(a: &SystemFile, b: &SystemFile) -> bool {
    let matrix = match (&a.matrix, &b.matrix) {
        (Some(x), Some(y)) => matrices_equal(x, y),
        (None, None) => true,
        _ => false,
    };
    let formal = match (&a.formal, &b.formal) {
        (Some(x), Some(y)) => formal_equal(x, y),
        (None, None) => true,
        _ => false,
    };
    matrix
        && formal
        && a.var == b.var
        && a.rank == b.rank
        && a.ramification == b.ramification
        && a.truncation == b.truncation
        && a.exact == b.exact
        && a.params == b.params
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_system;

    fn round_trip(src: &str) {
        let a = parse_system(src).unwrap();
        let text = print_system(&a);
        let b = parse_system(&text).unwrap_or_else(|e| panic!("{e}\n{text}"));
        assert!(structurally_equal(&a, &b), "{text}");
    }

    #[test]
    fn b_alpha_round_trips() {
        round_trip("A = [[1 + 0.3*t]]\nparam alpha = 0.3");
    }

    #[test]
    fn complex_entries_are_kept() {
        let a = parse_system("A = [[(1+2i), t],[0, 3 - 0.5i]]").unwrap();
        let text = print_system(&a);
        assert!(text.contains("(1.0+2.0i)"), "{text}");
        round_trip("A = [[(1+2i), t],[0, 3 - 0.5i]]");
    }

    #[test]
    fn ramified_series_print_in_ascending_powers() {
        let a = parse_system("A = [[1 + t^(1/2) + 2*t]]").unwrap();
        let s = format_series(&a.matrix.as_ref().unwrap().entry(0, 0));
        assert_eq!(s, "1.0 + 1.0*t^(1/2) + 2.0*t");
        round_trip("A = [[1 + t^(1/2) + 2*t]]");
    }

    #[test]
    fn formal_and_rational_entries_round_trip() {
        round_trip("A = [[2*(1+t), 0],[0, 1+t/2]]\nformal = [(log(2)*s, [[-1]]), (0, [[-0.5]])]");
        round_trip("trunc 10\nA = [[1/(1-t/3)]]");
        round_trip("formal = [((1+1i)*s + 2*s^(1/2), [[0.25]])]");
    }
}
