//! Free-format MPS reading and writing.
//!
//! Supported sections, in order: `NAME`, optional `OBJSENSE`, `ROWS`,
//! `COLUMNS` (with `MARKER` / `INTORG` / `INTEND` integer blocks), optional
//! `RHS`, optional `BOUNDS`, `ENDATA`. `RANGES`, `SOS`, and quadratic
//! sections are rejected. A right-hand side on the objective row (an
//! objective constant) is rejected as well.
//!
//! Default bounds follow the usual convention: `[0, +inf)` for continuous
//! columns, `[0, 1]` for marker-declared integer columns that have no
//! `BOUNDS` entry. An integer column whose final bounds are exactly `[0, 1]`
//! is read as binary.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::model::{
    Coefficient, ConstraintDef, ConstraintSense, MipInstance, ModelError, ObjectiveSense,
    VarType, VariableDef,
};

#[derive(Debug, Error, PartialEq)]
pub enum MpsError {
    #[error("line {line}: section `{section}` out of order")]
    SectionOrder { line: usize, section: String },
    #[error("line {line}: unknown section `{section}`")]
    UnknownSection { line: usize, section: String },
    #[error("line {line}: RANGES section is not supported")]
    RangesUnsupported { line: usize },
    #[error("line {line}: unknown row `{row}`")]
    UnknownRow { line: usize, row: String },
    #[error("line {line}: unknown column `{column}`")]
    UnknownColumn { line: usize, column: String },
    #[error("line {line}: duplicate entry `{entry}`")]
    Duplicate { line: usize, entry: String },
    #[error("line {line}: malformed record: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: objective constant on row `{row}` is not supported")]
    ObjectiveConstant { line: usize, row: String },
    #[error("missing {0} section")]
    MissingSection(&'static str),
    #[error("no objective (N) row declared")]
    NoObjective,
    #[error("invalid instance: {0}")]
    Invalid(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Start,
    Name,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Bounds,
    End,
}

struct ColumnDraft {
    name: String,
    integer: bool,
    objective: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    bounded: bool,
}

fn parse_number(tok: &str, line: usize) -> Result<f64, MpsError> {
    let v: f64 = tok.parse().map_err(|_| MpsError::Malformed {
        line,
        reason: format!("expected a number, found `{tok}`"),
    })?;
    if v.is_nan() {
        return Err(MpsError::Malformed {
            line,
            reason: "NaN value".into(),
        });
    }
    Ok(v)
}

fn parse_infinity_aware(tok: &str, line: usize) -> Result<f64, MpsError> {
    let v = parse_number(tok, line)?;
    Ok(if v >= 1e30 {
        f64::INFINITY
    } else if v <= -1e30 {
        f64::NEG_INFINITY
    } else {
        v
    })
}

/// Parses a free-format MPS document.
pub fn parse_mps(text: &str) -> Result<MipInstance, MpsError> {
    let mut section = Section::Start;
    let mut name = String::new();
    let mut sense = ObjectiveSense::Minimize;
    let mut objective_row: Option<String> = None;
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<ConstraintDef> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut cols: Vec<ColumnDraft> = Vec::new();
    let mut entries: HashMap<(usize, usize), f64> = HashMap::new();
    let mut entry_order: Vec<(usize, usize)> = Vec::new();
    let mut rhs_seen: Vec<bool> = Vec::new();
    let mut in_integer_block = false;
    let mut saw_rows = false;
    let mut saw_columns = false;

    let enter = |current: &mut Section, next: Section, line: usize, label: &str| {
        if next <= *current {
            return Err(MpsError::SectionOrder {
                line,
                section: label.to_string(),
            });
        }
        *current = next;
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('*') {
            continue;
        }
        let header = !trimmed.starts_with(|c: char| c.is_whitespace());
        let toks: Vec<&str> = trimmed.split_whitespace().collect();

        if header {
            let label = toks[0].to_ascii_uppercase();
            match label.as_str() {
                "NAME" => {
                    enter(&mut section, Section::Name, line, &label)?;
                    name = toks.get(1).map(|s| s.to_string()).unwrap_or_default();
                }
                "OBJSENSE" => {
                    enter(&mut section, Section::ObjSense, line, &label)?;
                    if let Some(tok) = toks.get(1) {
                        sense = parse_sense(tok, line)?;
                    }
                }
                "ROWS" => {
                    enter(&mut section, Section::Rows, line, &label)?;
                    saw_rows = true;
                }
                "COLUMNS" => {
                    if !saw_rows {
                        return Err(MpsError::SectionOrder { line, section: label });
                    }
                    enter(&mut section, Section::Columns, line, &label)?;
                    saw_columns = true;
                }
                "RHS" => {
                    if !saw_columns {
                        return Err(MpsError::SectionOrder { line, section: label });
                    }
                    enter(&mut section, Section::Rhs, line, &label)?
                }
                "RANGES" => return Err(MpsError::RangesUnsupported { line }),
                "BOUNDS" => {
                    if !saw_columns {
                        return Err(MpsError::SectionOrder { line, section: label });
                    }
                    enter(&mut section, Section::Bounds, line, &label)?
                }
                "ENDATA" => {
                    enter(&mut section, Section::End, line, &label)?;
                }
                _ => return Err(MpsError::UnknownSection { line, section: label }),
            }
            continue;
        }

        match section {
            Section::ObjSense => {
                sense = parse_sense(toks[0], line)?;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(MpsError::Malformed {
                        line,
                        reason: "ROWS record needs a type and a name".into(),
                    });
                }
                let row_name = toks[1].to_string();
                if row_index.contains_key(&row_name) || objective_row.as_deref() == Some(toks[1]) {
                    return Err(MpsError::Duplicate { line, entry: row_name });
                }
                let kind = match toks[0].to_ascii_uppercase().as_str() {
                    "N" => None,
                    "L" => Some(ConstraintSense::Le),
                    "G" => Some(ConstraintSense::Ge),
                    "E" => Some(ConstraintSense::Eq),
                    other => {
                        return Err(MpsError::Malformed {
                            line,
                            reason: format!("unknown row type `{other}`"),
                        })
                    }
                };
                match kind {
                    None if objective_row.is_none() => objective_row = Some(row_name),
                    // Extra free rows carry no constraint; they are ignored.
                    None => {}
                    Some(s) => {
                        row_index.insert(row_name.clone(), rows.len());
                        rows.push(ConstraintDef::new(row_name, s, 0.0));
                        rhs_seen.push(false);
                    }
                }
            }
            Section::Columns => {
                if toks.len() >= 3 && toks[1].trim_matches('\'').eq_ignore_ascii_case("MARKER") {
                    match toks[2].trim_matches('\'').to_ascii_uppercase().as_str() {
                        "INTORG" => in_integer_block = true,
                        "INTEND" => in_integer_block = false,
                        other => {
                            return Err(MpsError::Malformed {
                                line,
                                reason: format!("unknown marker `{other}`"),
                            })
                        }
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(MpsError::Malformed {
                        line,
                        reason: "COLUMNS record needs a column and 1 or 2 (row, value) pairs".into(),
                    });
                }
                let col_name = toks[0];
                let col = match col_index.get(col_name) {
                    Some(&c) => {
                        if c + 1 != cols.len() {
                            return Err(MpsError::Malformed {
                                line,
                                reason: format!("column `{col_name}` is not contiguous"),
                            });
                        }
                        c
                    }
                    None => {
                        col_index.insert(col_name.to_string(), cols.len());
                        cols.push(ColumnDraft {
                            name: col_name.to_string(),
                            integer: in_integer_block,
                            objective: 0.0,
                            lower: None,
                            upper: None,
                            bounded: false,
                        });
                        cols.len() - 1
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let row_name = pair[0];
                    let value = parse_number(pair[1], line)?;
                    if objective_row.as_deref() == Some(row_name) {
                        if cols[col].objective != 0.0 {
                            return Err(MpsError::Duplicate {
                                line,
                                entry: format!("{col_name}/{row_name}"),
                            });
                        }
                        cols[col].objective = value;
                        continue;
                    }
                    let row = *row_index.get(row_name).ok_or_else(|| MpsError::UnknownRow {
                        line,
                        row: row_name.to_string(),
                    })?;
                    if entries.insert((row, col), value).is_some() {
                        return Err(MpsError::Duplicate {
                            line,
                            entry: format!("{col_name}/{row_name}"),
                        });
                    }
                    entry_order.push((row, col));
                }
            }
            Section::Rhs => {
                // The set name is optional in free format: `[set] row value [row value]`.
                let body = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                if body.is_empty() || body.len() > 4 {
                    return Err(MpsError::Malformed {
                        line,
                        reason: "RHS record needs 1 or 2 (row, value) pairs".into(),
                    });
                }
                for pair in body.chunks(2) {
                    let row_name = pair[0];
                    let value = parse_number(pair[1], line)?;
                    if objective_row.as_deref() == Some(row_name) {
                        return Err(MpsError::ObjectiveConstant {
                            line,
                            row: row_name.to_string(),
                        });
                    }
                    let row = *row_index.get(row_name).ok_or_else(|| MpsError::UnknownRow {
                        line,
                        row: row_name.to_string(),
                    })?;
                    if rhs_seen[row] {
                        return Err(MpsError::Duplicate {
                            line,
                            entry: format!("RHS/{row_name}"),
                        });
                    }
                    rhs_seen[row] = true;
                    rows[row].rhs = value;
                }
            }
            Section::Bounds => {
                let kind = toks[0].to_ascii_uppercase();
                let needs_value = !matches!(kind.as_str(), "FR" | "MI" | "PL" | "BV");
                // The bound set name is optional: `TYPE [set] column [value]`.
                let (col_name, value) = match (needs_value, toks.len()) {
                    (true, 4) => (toks[2], Some(parse_infinity_aware(toks[3], line)?)),
                    (true, 3) => (toks[1], Some(parse_infinity_aware(toks[2], line)?)),
                    (false, 3) => (toks[2], None),
                    (false, 2) => (toks[1], None),
                    (false, 4) if kind == "BV" => (toks[2], None),
                    _ => {
                        return Err(MpsError::Malformed {
                            line,
                            reason: format!("bad {kind} bound record"),
                        })
                    }
                };
                let col = *col_index.get(col_name).ok_or_else(|| MpsError::UnknownColumn {
                    line,
                    column: col_name.to_string(),
                })?;
                let draft = &mut cols[col];
                draft.bounded = true;
                match kind.as_str() {
                    "UP" => set_once(&mut draft.upper, value.unwrap(), line, col_name)?,
                    "LO" => set_once(&mut draft.lower, value.unwrap(), line, col_name)?,
                    "FX" => {
                        set_once(&mut draft.lower, value.unwrap(), line, col_name)?;
                        set_once(&mut draft.upper, value.unwrap(), line, col_name)?;
                    }
                    "FR" => {
                        set_once(&mut draft.lower, f64::NEG_INFINITY, line, col_name)?;
                        set_once(&mut draft.upper, f64::INFINITY, line, col_name)?;
                    }
                    "MI" => set_once(&mut draft.lower, f64::NEG_INFINITY, line, col_name)?,
                    "PL" => set_once(&mut draft.upper, f64::INFINITY, line, col_name)?,
                    "BV" => {
                        draft.integer = true;
                        set_once(&mut draft.lower, 0.0, line, col_name)?;
                        set_once(&mut draft.upper, 1.0, line, col_name)?;
                    }
                    "LI" => {
                        draft.integer = true;
                        set_once(&mut draft.lower, value.unwrap(), line, col_name)?;
                    }
                    "UI" => {
                        draft.integer = true;
                        set_once(&mut draft.upper, value.unwrap(), line, col_name)?;
                    }
                    other => {
                        return Err(MpsError::Malformed {
                            line,
                            reason: format!("unknown bound type `{other}`"),
                        })
                    }
                }
            }
            Section::End => {
                return Err(MpsError::Malformed {
                    line,
                    reason: "data after ENDATA".into(),
                })
            }
            Section::Start | Section::Name => {
                return Err(MpsError::Malformed {
                    line,
                    reason: "record outside of a section".into(),
                })
            }
        }
    }

    if section != Section::End {
        return Err(MpsError::MissingSection("ENDATA"));
    }
    if !saw_rows {
        return Err(MpsError::MissingSection("ROWS"));
    }
    if !saw_columns {
        return Err(MpsError::MissingSection("COLUMNS"));
    }
    if objective_row.is_none() {
        return Err(MpsError::NoObjective);
    }

    let variables = cols
        .into_iter()
        .map(|c| {
            let (lower, upper) = if c.integer && !c.bounded {
                (0.0, 1.0)
            } else {
                (c.lower.unwrap_or(0.0), c.upper.unwrap_or(f64::INFINITY))
            };
            let var_type = match (c.integer, lower == 0.0 && upper == 1.0) {
                (true, true) => VarType::Binary,
                (true, false) => VarType::Integer,
                (false, _) => VarType::Continuous,
            };
            VariableDef {
                name: c.name,
                var_type,
                lower_bound: lower,
                upper_bound: upper,
                objective_coeff: c.objective,
            }
        })
        .collect();

    let coefficients = entry_order
        .into_iter()
        .map(|(row, col)| Coefficient {
            row,
            col,
            value: entries[&(row, col)],
        })
        .collect();

    let instance = MipInstance {
        name,
        objective_sense: sense,
        variables,
        constraints: rows,
        coefficients,
    };
    instance.validate()?;
    Ok(instance)
}

fn parse_sense(tok: &str, line: usize) -> Result<ObjectiveSense, MpsError> {
    match tok.to_ascii_uppercase().as_str() {
        "MIN" | "MINIMIZE" => Ok(ObjectiveSense::Minimize),
        "MAX" | "MAXIMIZE" => Ok(ObjectiveSense::Maximize),
        other => Err(MpsError::Malformed {
            line,
            reason: format!("unknown objective sense `{other}`"),
        }),
    }
}

fn set_once(slot: &mut Option<f64>, value: f64, line: usize, col: &str) -> Result<(), MpsError> {
    if slot.is_some() {
        return Err(MpsError::Duplicate {
            line,
            entry: format!("bound on {col}"),
        });
    }
    *slot = Some(value);
    Ok(())
}

const OBJECTIVE_ROW: &str = "obj";

/// Serializes an instance as free-format MPS. Values are written with the
/// shortest representation that round-trips exactly.
pub fn write_mps(instance: &MipInstance) -> String {
    let mut out = String::new();
    let name = if instance.name.is_empty() { "unnamed" } else { &instance.name };
    let _ = writeln!(out, "NAME {name}");
    if instance.objective_sense == ObjectiveSense::Maximize {
        out.push_str("OBJSENSE\n    MAX\n");
    }
    // Guard against a constraint that happens to use the objective row name.
    let mut obj_name = OBJECTIVE_ROW.to_string();
    while instance.constraints.iter().any(|c| c.name == obj_name) {
        obj_name.push('_');
    }
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {obj_name}");
    for c in &instance.constraints {
        let t = match c.sense {
            ConstraintSense::Le => "L",
            ConstraintSense::Ge => "G",
            ConstraintSense::Eq => "E",
        };
        let _ = writeln!(out, " {t} {}", c.name);
    }

    out.push_str("COLUMNS\n");
    let columns = instance.columns();
    let mut in_block = false;
    let mut marker = 0usize;
    for (j, v) in instance.variables.iter().enumerate() {
        let integral = v.var_type.is_integral();
        if integral != in_block {
            let kind = if integral { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    MARKER{marker} 'MARKER' '{kind}'");
            marker += 1;
            in_block = integral;
        }
        let mut wrote = false;
        if v.objective_coeff != 0.0 {
            let _ = writeln!(out, "    {} {obj_name} {}", v.name, v.objective_coeff);
            wrote = true;
        }
        for &(row, value) in &columns[j] {
            let _ = writeln!(out, "    {} {} {}", v.name, instance.constraints[row].name, value);
            wrote = true;
        }
        if !wrote {
            // Keep empty columns declared.
            let _ = writeln!(out, "    {} {obj_name} 0", v.name);
        }
    }
    if in_block {
        let _ = writeln!(out, "    MARKER{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    for c in &instance.constraints {
        if c.rhs != 0.0 {
            let _ = writeln!(out, "    RHS {} {}", c.name, c.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for v in &instance.variables {
        write_bounds(&mut out, v);
    }
    out.push_str("ENDATA\n");
    out
}

fn write_bounds(out: &mut String, v: &VariableDef) {
    let n = &v.name;
    let (lo, up) = (v.lower_bound, v.upper_bound);
    match v.var_type {
        VarType::Binary => return,
        VarType::Integer => {
            // Marker integers default to [0, 1]; any bound record switches
            // the defaults to [0, +inf), so always spell both out.
            if lo == up {
                let _ = writeln!(out, " FX BND {n} {lo}");
            } else {
                let _ = writeln!(out, " LO BND {n} {lo}");
                let _ = writeln!(out, " UP BND {n} {up}");
            }
            return;
        }
        VarType::Continuous => {}
    }
    if lo == up {
        let _ = writeln!(out, " FX BND {n} {lo}");
        return;
    }
    match (lo.is_finite(), up.is_finite()) {
        (false, false) => {
            let _ = writeln!(out, " FR BND {n}");
        }
        (false, true) => {
            let _ = writeln!(out, " MI BND {n}");
            let _ = writeln!(out, " UP BND {n} {up}");
        }
        (true, _) => {
            if lo != 0.0 {
                let _ = writeln!(out, " LO BND {n} {lo}");
            }
            if up.is_finite() {
                let _ = writeln!(out, " UP BND {n} {up}");
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "NAME tiny\nROWS\n N obj\n L c1\nCOLUMNS\n    x obj 1 c1 1\nRHS\n    RHS c1 5\nENDATA\n";

    const TRIANGLE_VC: &str = "\
NAME triangle_vc
ROWS
 N cost
 G e01
 G e02
 G e12
COLUMNS
    MARKER 'MARKER' 'INTORG'
    x0 cost 1 e01 1
    x0 e02 1
    x1 cost 1 e01 1
    x1 e12 1
    x2 cost 1 e02 1
    x2 e12 1
    MARKER 'MARKER' 'INTEND'
RHS
    RHS e01 1 e02 1
    RHS e12 1
ENDATA
";

    #[test]
    fn minimal_file() {
        let m = parse_mps(MINIMAL).unwrap();
        assert_eq!((m.n_constraints(), m.n_variables()), (1, 1));
        assert_eq!(m.constraints[0].sense, ConstraintSense::Le);
        assert_eq!(m.constraints[0].rhs, 5.0);
        assert_eq!(m.variables[0].var_type, VarType::Continuous);
        assert_eq!(m.variables[0].upper_bound, f64::INFINITY);
        assert_eq!(m.objective_sense, ObjectiveSense::Minimize);
    }

    #[test]
    fn triangle_vertex_cover() {
        let m = parse_mps(TRIANGLE_VC).unwrap();
        assert_eq!(m.n_variables(), 3);
        assert_eq!(m.n_constraints(), 3);
        assert!(m.variables.iter().all(|v| v.var_type == VarType::Binary));
        for row in m.rows() {
            assert_eq!(row.len(), 2);
            assert!(row.iter().all(|&(_, v)| v == 1.0));
        }
        assert!(m.constraints.iter().all(|c| c.sense == ConstraintSense::Ge && c.rhs == 1.0));
    }

    #[test]
    fn undeclared_row_named_in_error() {
        let text = MINIMAL.replace("c1 1\nRHS", "c9 1\nRHS");
        let err = parse_mps(&text).unwrap_err();
        assert_eq!(err, MpsError::UnknownRow { line: 6, row: "c9".into() });
        assert!(err.to_string().contains("c9"));
    }

    #[test]
    fn ranges_rejected() {
        let text = MINIMAL.replace("ENDATA", "RANGES\n    RNG c1 2\nENDATA");
        assert!(matches!(parse_mps(&text), Err(MpsError::RangesUnsupported { line: 9 })));
    }

    #[test]
    fn duplicate_entry_rejected() {
        let text = MINIMAL.replace("x obj 1 c1 1", "x obj 1 c1 1\n    x c1 2");
        assert!(matches!(parse_mps(&text), Err(MpsError::Duplicate { line: 7, .. })));
    }

    #[test]
    fn section_order_enforced() {
        let text = "NAME t\nCOLUMNS\n    x obj 1\nROWS\n N obj\nENDATA\n";
        assert!(matches!(parse_mps(text), Err(MpsError::SectionOrder { line: 2, .. })));
        let text = MINIMAL.replace("RHS\n    RHS c1 5\n", "") + "RHS\n";
        assert!(matches!(parse_mps(&text), Err(MpsError::SectionOrder { .. })));
    }

    #[test]
    fn objective_constant_rejected() {
        let text = MINIMAL.replace("RHS c1 5", "RHS obj 5");
        assert!(matches!(parse_mps(&text), Err(MpsError::ObjectiveConstant { .. })));
    }

    #[test]
    fn infinite_upper_bound_round_trip() {
        let m = parse_mps(MINIMAL).unwrap();
        let text = write_mps(&m);
        assert!(!text.contains("UP BND"));
        let back = parse_mps(&text).unwrap();
        assert_eq!(back.variables[0].upper_bound, f64::INFINITY);
        assert_eq!(back, m);
    }

    #[test]
    fn triangle_round_trip() {
        let m = parse_mps(TRIANGLE_VC).unwrap();
        let back = parse_mps(&write_mps(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn bound_kinds_round_trip() {
        let mut m = MipInstance::new("bounds", ObjectiveSense::Maximize);
        m.add_variable(VariableDef::continuous("free", f64::NEG_INFINITY, f64::INFINITY, 1.0));
        m.add_variable(VariableDef::continuous("neg", f64::NEG_INFINITY, 3.5, -2.0));
        m.add_variable(VariableDef::continuous("fixed", 2.0, 2.0, 0.0));
        m.add_variable(VariableDef::continuous("box", -1.0, 1.0, 0.25));
        m.add_variable(VariableDef {
            name: "int".into(),
            var_type: VarType::Integer,
            lower_bound: 0.0,
            upper_bound: 7.0,
            objective_coeff: 3.0,
        });
        m.add_variable(VariableDef::binary("b", 1.0));
        m.add_constraint(
            ConstraintDef::new("r", ConstraintSense::Eq, 0.1),
            &[(0, 1.0), (4, 1.0 / 3.0), (5, -2.0)],
        );
        m.validate().unwrap();
        let back = parse_mps(&write_mps(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn crlf_and_comments_accepted() {
        let text = format!("* comment\r\n{}", MINIMAL.replace('\n', "\r\n"));
        assert_eq!(parse_mps(&text).unwrap(), parse_mps(MINIMAL).unwrap());
    }
}
