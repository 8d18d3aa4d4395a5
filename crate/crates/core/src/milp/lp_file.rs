//! LP-format model export and solution-file ingestion.
//!
//! Variable naming: `x_j` for the scaled factors, `z_l_j` and `a_l_j` for
//! layer preactivations and activities, `sig_l_j` for the rectifier
//! binaries, `beta_i` for the combination weights, `s_j` for hull
//! deviations, and `qs` for the objective variable. All indices are
//! 1-based.
//!
//! The solution parser understands the classic column format written by
//! `cbc <model.lp> solve solu <file>`: a status header line followed by
//! `index name value [reduced cost]` rows. Variables missing from the file
//! default to zero.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::milp::{MilpModel, RawSolution, Sense, SolveStatus};

/// Writes the model in LP format with the documented naming scheme.
pub fn write_lp<W: Write>(model: &MilpModel, out: &mut W) -> Result<()> {
    writeln!(out, "\\ helio-aim aiming program")?;
    writeln!(out, "Maximize")?;
    write!(out, " obj:")?;
    write_terms(out, &model.objective, model)?;
    writeln!(out)?;

    writeln!(out, "Subject To")?;
    for c in &model.constraints {
        write!(out, " {}:", c.name)?;
        write_terms(out, &c.terms, model)?;
        let op = match c.sense {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        };
        writeln!(out, " {} {}", op, number(c.rhs))?;
    }

    writeln!(out, "Bounds")?;
    for v in &model.vars {
        if v.binary {
            continue;
        }
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => writeln!(out, " {} <= {} <= {}", number(v.lower), v.name, number(v.upper))?,
            (true, false) => writeln!(out, " {} >= {}", v.name, number(v.lower))?,
            (false, true) => writeln!(out, " {} <= {}", v.name, number(v.upper))?,
            (false, false) => writeln!(out, " {} free", v.name)?,
        }
    }

    let binaries: Vec<&str> = model
        .vars
        .iter()
        .filter(|v| v.binary)
        .map(|v| v.name.as_str())
        .collect();
    if !binaries.is_empty() {
        writeln!(out, "Binaries")?;
        for name in binaries {
            writeln!(out, " {name}")?;
        }
    }
    writeln!(out, "End")?;
    Ok(())
}

fn write_terms<W: Write>(out: &mut W, terms: &[(usize, f64)], model: &MilpModel) -> Result<()> {
    if terms.is_empty() {
        write!(out, " 0 {}", model.vars[0].name)?;
        return Ok(());
    }
    for (pos, &(var, coeff)) in terms.iter().enumerate() {
        let sign = if coeff < 0.0 { "-" } else if pos == 0 { "" } else { "+" };
        let sep = if pos == 0 && sign.is_empty() { "" } else { " " };
        write!(out, " {sign}{sep}{} {}", number(coeff.abs()), model.vars[var].name)?;
    }
    Ok(())
}

/// Shortest round-trip decimal; LP readers accept plain decimals.
fn number(x: f64) -> String {
    format!("{x}")
}

/// Parses a solver solution file against the model's variable names.
pub fn parse_solution_text(text: &str, model: &MilpModel) -> Result<RawSolution> {
    let mut lines = text.lines();
    let header = loop {
        match lines.next() {
            Some(line) if line.trim().is_empty() => continue,
            Some(line) => break line.trim().to_ascii_lowercase(),
            None => return Err(Error::Backend("empty solution file".into())),
        }
    };

    let status = if header.starts_with("optimal") {
        SolveStatus::Optimal
    } else if header.contains("infeasible") {
        return Ok(RawSolution {
            status: SolveStatus::Infeasible,
            values: None,
            objective: None,
            gap: None,
        });
    } else if header.contains("unbounded") {
        return Err(Error::Backend("solver reports an unbounded model".into()));
    } else if header.contains("stopped") || header.contains("interrupted") {
        SolveStatus::Feasible
    } else {
        return Err(Error::Backend(format!("unrecognized solution header {header:?}")));
    };

    let objective = header
        .split("objective value")
        .nth(1)
        .and_then(|tail| tail.split_whitespace().next())
        .and_then(|tok| tok.parse::<f64>().ok());

    let index: HashMap<&str, usize> = model
        .vars
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();
    let mut values = vec![0.0; model.vars.len()];
    let mut seen = 0usize;
    for line in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 {
            continue;
        }
        // Column rows are `index name value [reduced cost]`; tolerate files
        // without the leading index.
        let (name, value) = if fields[0].parse::<usize>().is_ok() {
            (fields[1], fields[2])
        } else {
            (fields[0], fields[1])
        };
        if let Some(&i) = index.get(name) {
            values[i] = value
                .parse::<f64>()
                .map_err(|e| Error::Backend(format!("bad value for {name}: {e}")))?;
            seen += 1;
        }
    }
    if seen == 0 {
        return Err(Error::Backend("solution file listed no known variables".into()));
    }

    Ok(RawSolution { status, values: Some(values), objective, gap: None })
}
