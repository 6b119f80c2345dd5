use std::io::Write;

use super::{MilpModel, Sense, VarKind};

fn sanitize(name: &str, idx: usize, prefix: char) -> String {
    let s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    match s.chars().next() {
        Some(c) if c.is_ascii_alphabetic() => s,
        _ => format!("{prefix}{idx}_{s}"),
    }
}

fn write_terms<W: Write>(w: &mut W, terms: &[(super::Var, f64)], names: &[String]) -> std::io::Result<()> {
    if terms.is_empty() {
        return write!(w, " 0 {}", names.first().map(String::as_str).unwrap_or("x"));
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { '-' } else { '+' };
        if k == 0 && sign == '+' {
            write!(w, " {} {}", c.abs(), names[v.index()])?;
        } else {
            write!(w, " {sign} {} {}", c.abs(), names[v.index()])?;
        }
        if k % 8 == 7 {
            writeln!(w)?;
        }
    }
    Ok(())
}

pub(super) fn write_lp<W: Write>(m: &MilpModel, mut w: W) -> std::io::Result<()> {
    let names: Vec<String> =
        m.variables().iter().enumerate().map(|(i, v)| sanitize(&v.name, i, 'x')).collect();
    writeln!(w, "\\ objective constant: {}", m.objective_constant())?;
    writeln!(w, "Minimize")?;
    write!(w, " obj:")?;
    write_terms(&mut w, m.objective(), &names)?;
    writeln!(w)?;
    writeln!(w, "Subject To")?;
    for (i, c) in m.constraints().iter().enumerate() {
        write!(w, " {}:", sanitize(&c.name, i, 'c'))?;
        write_terms(&mut w, &c.terms, &names)?;
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        writeln!(w, " {op} {}", c.rhs)?;
    }
    writeln!(w, "Bounds")?;
    for (v, name) in m.variables().iter().zip(&names) {
        if v.kind == VarKind::Binary {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => writeln!(w, " {name} free")?,
            (true, true) => writeln!(w, " {} <= {name} <= {}", v.lower, v.upper)?,
            (true, false) => writeln!(w, " {name} >= {}", v.lower)?,
            (false, true) => writeln!(w, " -inf <= {name} <= {}", v.upper)?,
        }
    }
    let bins: Vec<&String> = m
        .variables()
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n)
        .collect();
    if !bins.is_empty() {
        writeln!(w, "Binaries")?;
        for chunk in bins.chunks(10) {
            let line: Vec<&str> = chunk.iter().map(|s| s.as_str()).collect();
            writeln!(w, " {}", line.join(" "))?;
        }
    }
    writeln!(w, "End")
}
