//! Plain-text problem dump:
//!
//! ```text
//! socp <n_vars> <n_cones>
//! <objective>
//! cone <rows> <n_vars>
//! <row 0>
//! ...
//! <offset>
//! ```
//!
//! Numbers are written with `{:e}` so a dump parses back bit-identically.

use std::fmt::Write as _;

use super::SocpProblem;
use crate::error::{Error, Result};

fn join(v: impl Iterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, x) in v.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:e}");
    }
    s
}

pub fn write_dump(problem: &SocpProblem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "socp {} {}", problem.n_vars, problem.cones.len());
    let _ = writeln!(out, "{}", join(problem.objective.iter().copied()));
    for c in &problem.cones {
        let _ = writeln!(out, "cone {} {}", c.rows(), problem.n_vars);
        for r in 0..c.rows() {
            let _ = writeln!(out, "{}", join(c.matrix.row(r).iter().copied()));
        }
        let _ = writeln!(out, "{}", join(c.offset.iter().copied()));
    }
    out
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Usage(format!("dump line {line}: {msg}"))
}

fn numbers(line: usize, text: &str, want: usize) -> Result<Vec<f64>> {
    let v = text
        .split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|e| bad(line, format!("{t:?}: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    if v.len() != want {
        return Err(bad(line, format!("expected {want} numbers, got {}", v.len())));
    }
    Ok(v)
}

fn header(line: usize, text: Option<&str>, tag: &str) -> Result<(usize, usize)> {
    let text = text.ok_or_else(|| bad(line, "unexpected end of dump"))?;
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != tag {
        return Err(bad(line, format!("expected `{tag} <a> <b>`")));
    }
    let p = |s: &str| s.parse::<usize>().map_err(|e| bad(line, e));
    Ok((p(parts[1])?, p(parts[2])?))
}

pub fn parse_dump(text: &str) -> Result<SocpProblem> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty()).enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| -> Result<(usize, String)> {
        lines
            .next()
            .map(|(i, l)| (i, l.to_string()))
            .ok_or_else(|| Error::Usage(format!("dump ended before {what}")))
    };
    let (i, l) = next("header")?;
    let (n, k) = header(i, Some(&l), "socp")?;
    let (i, l) = next("objective")?;
    let mut p = SocpProblem::new(numbers(i, &l, n)?);
    for _ in 0..k {
        let (i, l) = next("cone header")?;
        let (rows, cols) = header(i, Some(&l), "cone")?;
        if cols != n {
            return Err(bad(i, format!("cone has {cols} columns, problem has {n}")));
        }
        let mut m = Vec::with_capacity(rows);
        for _ in 0..rows {
            let (i, l) = next("cone row")?;
            m.push(numbers(i, &l, n)?);
        }
        let (i, l) = next("cone offset")?;
        p.add_cone(&m, numbers(i, &l, rows)?)?;
    }
    if let Ok((i, _)) = next("") {
        return Err(bad(i, "trailing data"));
    }
    p.validate()?;
    Ok(p)
}
