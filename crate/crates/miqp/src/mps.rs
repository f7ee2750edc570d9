//! Free-format MPS export and import, including `QUADOBJ` and integer markers.
//!
//! The objective is `0.5 x'Qx + c'x + offset`; `QUADOBJ` carries the upper
//! triangle of `Q` and the offset is written as the negated RHS of the
//! objective row, following the common convention.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Model, Sense, VarId, VarKind};

const OBJ: &str = "OBJ";

fn clean(name: &str) -> String {
    name.chars().map(|c| if c.is_whitespace() { '_' } else { c }).collect()
}

/// Gives each name a whitespace-free form, suffixing duplicates.
fn unique_names<'a>(names: impl Iterator<Item = &'a str>, reserved: &[&str]) -> Vec<String> {
    let mut seen: HashMap<String, usize> = reserved.iter().map(|r| (r.to_string(), 1)).collect();
    names
        .map(|n| {
            let base = clean(n);
            let base = if base.is_empty() { "_".to_string() } else { base };
            let count = seen.entry(base.clone()).or_insert(0);
            *count += 1;
            if *count == 1 {
                base
            } else {
                format!("{base}~{}", *count - 1)
            }
        })
        .collect()
}

pub fn write_mps(model: &Model) -> String {
    let vnames = unique_names(model.vars.iter().map(|v| v.name.as_str()), &[]);
    let rnames = unique_names(model.rows.iter().map(|r| r.name.as_str()), &[OBJ]);

    // Column-major view of the rows.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.num_vars()];
    for (r, row) in model.rows.iter().enumerate() {
        for &(v, a) in &row.terms {
            cols[v.0].push((r, a));
        }
    }

    let mut out = String::new();
    let name = clean(&model.name);
    let _ = writeln!(out, "NAME {}", if name.is_empty() { "model" } else { &name });
    out.push_str("ROWS\n");
    let _ = writeln!(out, " N {OBJ}");
    for (row, rn) in model.rows.iter().zip(&rnames) {
        let s = match row.sense {
            Sense::Le => "L",
            Sense::Ge => "G",
            Sense::Eq => "E",
        };
        let _ = writeln!(out, " {s} {rn}");
    }

    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (i, var) in model.vars.iter().enumerate() {
        let is_int = var.kind == VarKind::Binary;
        if is_int != in_int {
            let tag = if is_int { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    M{marker} 'MARKER' '{tag}'");
            marker += 1;
            in_int = is_int;
        }
        let vn = &vnames[i];
        let c = model.linear[i];
        if c != 0.0 || cols[i].is_empty() {
            let _ = writeln!(out, "    {vn} {OBJ} {c:e}");
        }
        for &(r, a) in &cols[i] {
            let _ = writeln!(out, "    {vn} {} {a:e}", rnames[r]);
        }
    }
    if in_int {
        let _ = writeln!(out, "    M{marker} 'MARKER' 'INTEND'");
    }

    out.push_str("RHS\n");
    if model.offset != 0.0 {
        let _ = writeln!(out, "    RHS {OBJ} {:e}", -model.offset);
    }
    for (row, rn) in model.rows.iter().zip(&rnames) {
        if row.rhs != 0.0 {
            let _ = writeln!(out, "    RHS {rn} {:e}", row.rhs);
        }
    }

    out.push_str("BOUNDS\n");
    for (var, vn) in model.vars.iter().zip(&vnames) {
        let (lb, ub) = (var.lb, var.ub);
        if var.kind == VarKind::Binary {
            let _ = writeln!(out, " LO BND {vn} {lb:e}");
            let _ = writeln!(out, " UP BND {vn} {ub:e}");
        } else if lb == ub {
            let _ = writeln!(out, " FX BND {vn} {lb:e}");
        } else if lb == f64::NEG_INFINITY && ub == f64::INFINITY {
            let _ = writeln!(out, " FR BND {vn}");
        } else {
            if lb == f64::NEG_INFINITY {
                let _ = writeln!(out, " MI BND {vn}");
            } else if lb != 0.0 {
                let _ = writeln!(out, " LO BND {vn} {lb:e}");
            }
            if ub.is_finite() {
                let _ = writeln!(out, " UP BND {vn} {ub:e}");
            }
        }
    }

    if model.has_quadratic() {
        out.push_str("QUADOBJ\n");
        for (i, j, v) in model.quadratic_terms() {
            let _ = writeln!(out, "    {} {} {v:e}", vnames[i], vnames[j]);
        }
    }
    out.push_str("ENDATA\n");
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Head,
    Rows,
    Columns,
    Rhs,
    Bounds,
    Quad,
    End,
}

pub fn read_mps(text: &str) -> Result<Model> {
    let mut model = Model::new("");
    let mut section = Section::Head;
    let mut obj_name: Option<String> = None;
    let mut rows: HashMap<String, usize> = HashMap::new();
    let mut vars: HashMap<String, VarId> = HashMap::new();
    let mut in_int = false;
    // Integer columns default to [0, 1] unless bounds say otherwise.
    let mut explicit_bounds: Vec<bool> = Vec::new();

    let num = |tok: &str, line: usize| -> Result<f64> {
        tok.parse::<f64>().map_err(|_| Error::Mps { line, msg: format!("bad number {tok:?}") })
    };

    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        if raw.trim().is_empty() || raw.starts_with('*') {
            continue;
        }
        let tok: Vec<&str> = raw.split_whitespace().collect();
        if !raw.starts_with(' ') && !raw.starts_with('\t') {
            section = match tok[0] {
                "NAME" => {
                    model.name = tok.get(1).copied().unwrap_or("").to_string();
                    Section::Head
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "BOUNDS" => Section::Bounds,
                "QUADOBJ" => Section::Quad,
                "ENDATA" => Section::End,
                s => return Err(Error::Mps { line, msg: format!("unknown section {s}") }),
            };
            continue;
        }
        let bad = |msg: &str| Error::Mps { line, msg: msg.to_string() };
        match section {
            Section::Rows => {
                if tok.len() != 2 {
                    return Err(bad("expected `<type> <name>`"));
                }
                let sense = match tok[0] {
                    "N" => {
                        if obj_name.is_none() {
                            obj_name = Some(tok[1].to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    _ => return Err(bad("unknown row type")),
                };
                let r = model.add_row(tok[1], Vec::new(), sense, 0.0);
                rows.insert(tok[1].to_string(), r.0);
            }
            Section::Columns => {
                if tok.len() >= 3 && tok[1] == "'MARKER'" {
                    in_int = match tok[2] {
                        "'INTORG'" => true,
                        "'INTEND'" => false,
                        _ => return Err(bad("unknown marker")),
                    };
                    continue;
                }
                if tok.len() != 3 && tok.len() != 5 {
                    return Err(bad("expected `<col> <row> <value> [<row> <value>]`"));
                }
                let v = match vars.get(tok[0]) {
                    Some(&v) => v,
                    None => {
                        let v = if in_int {
                            model.add_binary(tok[0])
                        } else {
                            model.add_continuous(tok[0], 0.0, f64::INFINITY)
                        };
                        vars.insert(tok[0].to_string(), v);
                        explicit_bounds.push(false);
                        v
                    }
                };
                for pair in tok[1..].chunks(2) {
                    let a = num(pair[1], line)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        model.add_linear(v, a);
                    } else {
                        let r = *rows.get(pair[0]).ok_or_else(|| bad("unknown row"))?;
                        model.rows[r].terms.push((v, a));
                    }
                }
            }
            Section::Rhs => {
                if tok.len() != 3 && tok.len() != 5 {
                    return Err(bad("expected `<set> <row> <value> [<row> <value>]`"));
                }
                for pair in tok[1..].chunks(2) {
                    let b = num(pair[1], line)?;
                    if Some(pair[0]) == obj_name.as_deref() {
                        model.offset = -b;
                    } else {
                        let r = *rows.get(pair[0]).ok_or_else(|| bad("unknown row"))?;
                        model.rows[r].rhs = b;
                    }
                }
            }
            Section::Bounds => {
                if tok.len() < 3 {
                    return Err(bad("expected `<type> <set> <col> [<value>]`"));
                }
                let v = *vars.get(tok[2]).ok_or_else(|| bad("unknown column"))?;
                let value = || -> Result<f64> { num(tok.get(3).ok_or_else(|| bad("missing bound value"))?, line) };
                explicit_bounds[v.0] = true;
                let var = &mut model.vars[v.0];
                match tok[0] {
                    "UP" => var.ub = value()?,
                    "LO" => var.lb = value()?,
                    "FX" => {
                        var.lb = value()?;
                        var.ub = var.lb;
                    }
                    "FR" => {
                        var.lb = f64::NEG_INFINITY;
                        var.ub = f64::INFINITY;
                    }
                    "MI" => var.lb = f64::NEG_INFINITY,
                    "PL" => var.ub = f64::INFINITY,
                    "BV" => {
                        var.kind = VarKind::Binary;
                        var.lb = 0.0;
                        var.ub = 1.0;
                    }
                    _ => return Err(bad("unknown bound type")),
                }
            }
            Section::Quad => {
                if tok.len() != 3 {
                    return Err(bad("expected `<col> <col> <value>`"));
                }
                let i = *vars.get(tok[0]).ok_or_else(|| bad("unknown column"))?;
                let j = *vars.get(tok[1]).ok_or_else(|| bad("unknown column"))?;
                model.add_quadratic(i, j, num(tok[2], line)?);
            }
            Section::Head | Section::End => return Err(bad("data outside a section")),
        }
    }
    if section != Section::End {
        return Err(Error::Mps { line: text.lines().count(), msg: "missing ENDATA".into() });
    }
    for (var, &explicit) in model.vars.iter_mut().zip(&explicit_bounds) {
        if var.kind == VarKind::Binary && !explicit {
            var.ub = 1.0;
        }
    }
    Ok(model)
}
