use std::fmt::Display;
use std::io::{self, Write};

use super::{LpModel, RowKind};

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect()
}

fn term(out: &mut impl Write, first: &mut bool, coef: f64, name: &str) -> io::Result<()> {
    let sign = if coef < 0.0 { "-" } else { "+" };
    if *first && coef >= 0.0 {
        write!(out, " {} {}", coef.abs(), name)?;
    } else {
        write!(out, " {} {} {}", sign, coef.abs(), name)?;
    }
    *first = false;
    Ok(())
}

/// Writes `model` in CPLEX LP text format, for cross-checking with external solvers.
pub fn write_lp<L: Display>(model: &LpModel<L>, out: &mut impl Write) -> io::Result<()> {
    let names: Vec<String> = model.labels().iter().map(|l| sanitize(&l.to_string())).collect();
    writeln!(out, "\\ generated by hetnet-core")?;
    writeln!(out, "Minimize")?;
    write!(out, " obj:")?;
    let mut first = true;
    for (j, &c) in model.objective().iter().enumerate() {
        if c != 0.0 {
            term(out, &mut first, c, &names[j])?;
        }
    }
    if first {
        write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("dummy"))?;
    }
    writeln!(out)?;
    writeln!(out, "Subject To")?;
    for (i, row) in model.rows().iter().enumerate() {
        write!(out, " c{i}:")?;
        let mut first = true;
        for &(j, a) in &row.entries {
            term(out, &mut first, a, &names[j])?;
        }
        if first {
            write!(out, " 0 {}", names.first().map(String::as_str).unwrap_or("dummy"))?;
        }
        let op = match row.kind {
            RowKind::Le => "<=",
            RowKind::Ge => ">=",
            RowKind::Eq => "=",
        };
        writeln!(out, " {op} {}", row.rhs)?;
    }
    writeln!(out, "Bounds")?;
    for (j, name) in names.iter().enumerate() {
        let (lo, hi) = model.bounds(j);
        match (lo.is_finite(), hi.is_finite()) {
            (false, false) => writeln!(out, " {name} free")?,
            (true, true) if lo == hi => writeln!(out, " {name} = {lo}")?,
            (true, true) => writeln!(out, " {lo} <= {name} <= {hi}")?,
            (true, false) => writeln!(out, " {name} >= {lo}")?,
            (false, true) => writeln!(out, " -inf <= {name} <= {hi}")?,
        }
    }
    writeln!(out, "End")
}
