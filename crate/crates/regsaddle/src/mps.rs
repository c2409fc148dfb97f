//! MPS/QPS reading and report writing.
//!
//! The reader accepts both fixed and whitespace-delimited layouts:
//! section headers start in the first column, data lines are indented.
//! Quadratic objectives follow the QPS convention: entries are entries
//! of `H` itself (objective `c'x + x'Hx/2`), the diagonal is taken
//! verbatim, and a QMATRIX section carrying both triangles is not
//! doubled. Only minimization is supported.
//!
//! Standardization rewrites a parsed instance to the solver's form
//! `min c'x + x'Hx/2, Ax = b, x >= 0 on the inequality set`:
//!
//! * L/G rows gain nonnegative slacks.
//! * A ranged row bounds its slack: for an L row the row value spans
//!   `[b - |r|, b]`, for a G row `[b, b + |r|]`, for an E row the sign
//!   of `r` picks the side (`r >= 0` spans `[b, b + r]`, `r < 0` spans
//!   `[b - |r|, b]`).
//! * A finite lower bound shifts the variable; an upper bound with no
//!   finite lower flips its sign; a two-sided bound adds a slack row
//!   for the width; FX substitutes the value and folds it into the
//!   linear term and the objective constant.

use crate::ipm::{IpmTrace, SolveStatus};
use crate::qp::{IterateState, ModelError, ProblemQP};
use crate::sparse::{SparseMatrix, Symmetry};
use std::collections::HashMap;
use std::io::{self, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpsError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: unsupported feature: {feature}")]
    Unsupported { line: usize, feature: String },
    #[error("column {column}: infeasible bounds, lower {lo} exceeds upper {up}")]
    InfeasibleBounds { column: String, lo: f64, up: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sparse(#[from] crate::sparse::SparseError),
}

fn parse_err(line: usize, reason: impl Into<String>) -> MpsError {
    MpsError::Parse { line, reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Equal,
    LessEq,
    GreaterEq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundType {
    Lower,
    Upper,
    Fixed,
    Free,
    MinusInf,
    PlusInf,
}

/// A parsed instance with every name resolved to an index. Constraint
/// rows keep their declaration order; the single N row is the
/// objective.
#[derive(Debug, Clone)]
pub struct RawInstance {
    pub name: String,
    pub objective_name: String,
    pub row_names: Vec<String>,
    pub row_senses: Vec<RowSense>,
    pub col_names: Vec<String>,
    /// `(row, col, value)` for constraint rows.
    pub a_entries: Vec<(usize, usize, f64)>,
    /// `(col, value)` on the objective row.
    pub c_entries: Vec<(usize, f64)>,
    pub rhs: Vec<f64>,
    /// RHS given on the objective row; the objective constant is its
    /// negative.
    pub rhs_objective: f64,
    pub ranges: Vec<Option<f64>>,
    /// Bound records in file order; the value is meaningless for the
    /// valueless types.
    pub bounds: Vec<(usize, BoundType, f64)>,
    /// Lower-triangle entries of `H` (`row >= col`).
    pub quad: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Neutral,
    ObjSense,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    Quad { both_triangles: bool },
    Done,
}

#[derive(Debug, Clone, Copy)]
enum RowRef {
    Objective,
    Constraint(usize),
}

struct Parser {
    name: String,
    objective: Option<(String, usize)>,
    row_index: HashMap<String, RowRef>,
    row_names: Vec<String>,
    row_senses: Vec<RowSense>,
    col_index: HashMap<String, usize>,
    col_names: Vec<String>,
    a_entries: Vec<(usize, usize, f64)>,
    c_entries: Vec<(usize, f64)>,
    rhs: Vec<(usize, f64)>,
    rhs_objective: f64,
    ranges: Vec<(usize, f64)>,
    bounds: Vec<(usize, BoundType, f64)>,
    quad: Vec<(usize, usize, f64)>,
}

impl Parser {
    fn row(&self, name: &str, line: usize) -> Result<RowRef, MpsError> {
        self.row_index
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(line, format!("row '{name}' not declared in ROWS")))
    }

    fn col(&self, name: &str, line: usize) -> Result<usize, MpsError> {
        self.col_index
            .get(name)
            .copied()
            .ok_or_else(|| parse_err(line, format!("column '{name}' not declared in COLUMNS")))
    }
}

fn parse_value(tok: &str, line: usize) -> Result<f64, MpsError> {
    tok.parse::<f64>().map_err(|_| parse_err(line, format!("'{tok}' is not a number")))
}

/// Splits `name value name value ...` pairs, skipping an optional
/// leading set name (present exactly when the token count is odd).
fn pair_fields<'a>(toks: &'a [&'a str], line: usize) -> Result<&'a [&'a str], MpsError> {
    let rest = if toks.len() % 2 == 1 { &toks[1..] } else { toks };
    if rest.is_empty() {
        return Err(parse_err(line, "expected name/value pairs"));
    }
    Ok(rest)
}

fn reject_objsense(tok: &str, line: usize) -> Result<(), MpsError> {
    match tok.to_ascii_uppercase().as_str() {
        "MIN" | "MINIMIZE" => Ok(()),
        "MAX" | "MAXIMIZE" => {
            Err(MpsError::Unsupported { line, feature: "OBJSENSE MAX".into() })
        }
        other => Err(parse_err(line, format!("unknown objective sense '{other}'"))),
    }
}

/// Reads an instance from MPS/QPS text.
pub fn read_mps(source: &str) -> Result<RawInstance, MpsError> {
    let mut p = Parser {
        name: String::new(),
        objective: None,
        row_index: HashMap::new(),
        row_names: Vec::new(),
        row_senses: Vec::new(),
        col_index: HashMap::new(),
        col_names: Vec::new(),
        a_entries: Vec::new(),
        c_entries: Vec::new(),
        rhs: Vec::new(),
        rhs_objective: 0.0,
        ranges: Vec::new(),
        bounds: Vec::new(),
        quad: Vec::new(),
    };
    let mut section = Section::Preamble;
    let mut last_line = 0;

    for (idx, raw_line) in source.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let text = raw_line.trim_end();
        if text.is_empty() || text.starts_with('*') {
            continue;
        }
        if !text.starts_with(' ') && !text.starts_with('\t') {
            let mut it = text.split_whitespace();
            let head = it.next().unwrap();
            section = match head {
                "NAME" => {
                    p.name = it.next().unwrap_or("").to_string();
                    Section::Neutral
                }
                "OBJSENSE" => match it.next() {
                    Some(tok) => {
                        reject_objsense(tok, line)?;
                        Section::Neutral
                    }
                    None => Section::ObjSense,
                },
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "QUADOBJ" => Section::Quad { both_triangles: false },
                "QMATRIX" => Section::Quad { both_triangles: true },
                "ENDATA" => {
                    section = Section::Done;
                    break;
                }
                other => return Err(parse_err(line, format!("unknown section '{other}'"))),
            };
            continue;
        }

        let toks: Vec<&str> = text.split_whitespace().collect();
        match section {
            Section::Preamble => {
                return Err(parse_err(line, "data before any section header"))
            }
            Section::Neutral => {
                return Err(parse_err(line, "data line outside a data section"))
            }
            Section::ObjSense => {
                reject_objsense(toks[0], line)?;
                section = Section::Neutral;
            }
            Section::Rows => {
                if toks.len() != 2 {
                    return Err(parse_err(line, "ROWS line needs a sense and a name"));
                }
                let name = toks[1];
                if p.row_index.contains_key(name) {
                    return Err(parse_err(line, format!("row '{name}' declared twice")));
                }
                match toks[0] {
                    "N" => {
                        if p.objective.is_some() {
                            return Err(parse_err(
                                line,
                                "a second N row: only one objective row is supported",
                            ));
                        }
                        p.objective = Some((name.to_string(), line));
                        p.row_index.insert(name.to_string(), RowRef::Objective);
                    }
                    sense @ ("E" | "L" | "G") => {
                        let s = match sense {
                            "E" => RowSense::Equal,
                            "L" => RowSense::LessEq,
                            _ => RowSense::GreaterEq,
                        };
                        p.row_index.insert(name.to_string(), RowRef::Constraint(p.row_names.len()));
                        p.row_names.push(name.to_string());
                        p.row_senses.push(s);
                    }
                    other => {
                        return Err(parse_err(line, format!("unknown row sense '{other}'")))
                    }
                }
            }
            Section::Columns => {
                if toks.iter().any(|t| t.trim_matches('\'') == "MARKER") {
                    return Err(MpsError::Unsupported {
                        line,
                        feature: "integer markers".into(),
                    });
                }
                if toks.len() < 3 || toks.len() % 2 == 0 {
                    return Err(parse_err(
                        line,
                        "COLUMNS line needs a column name and row/value pairs",
                    ));
                }
                let col = match p.col_index.get(toks[0]) {
                    Some(&j) => j,
                    None => {
                        let j = p.col_names.len();
                        p.col_index.insert(toks[0].to_string(), j);
                        p.col_names.push(toks[0].to_string());
                        j
                    }
                };
                for pair in toks[1..].chunks(2) {
                    let v = parse_value(pair[1], line)?;
                    match p.row(pair[0], line)? {
                        RowRef::Objective => p.c_entries.push((col, v)),
                        RowRef::Constraint(i) => p.a_entries.push((i, col, v)),
                    }
                }
            }
            Section::Rhs => {
                for pair in pair_fields(&toks, line)?.chunks(2) {
                    if pair.len() != 2 {
                        return Err(parse_err(line, "dangling RHS field"));
                    }
                    let v = parse_value(pair[1], line)?;
                    match p.row(pair[0], line)? {
                        RowRef::Objective => p.rhs_objective = v,
                        RowRef::Constraint(i) => p.rhs.push((i, v)),
                    }
                }
            }
            Section::Ranges => {
                for pair in pair_fields(&toks, line)?.chunks(2) {
                    if pair.len() != 2 {
                        return Err(parse_err(line, "dangling RANGES field"));
                    }
                    let v = parse_value(pair[1], line)?;
                    match p.row(pair[0], line)? {
                        RowRef::Objective => {
                            return Err(parse_err(line, "range on the objective row"))
                        }
                        RowRef::Constraint(i) => p.ranges.push((i, v)),
                    }
                }
            }
            Section::Bounds => {
                let ty = match toks[0] {
                    "LO" => BoundType::Lower,
                    "UP" => BoundType::Upper,
                    "FX" => BoundType::Fixed,
                    "FR" => BoundType::Free,
                    "MI" => BoundType::MinusInf,
                    "PL" => BoundType::PlusInf,
                    other @ ("BV" | "LI" | "UI") => {
                        return Err(MpsError::Unsupported {
                            line,
                            feature: format!("integer bound type {other}"),
                        })
                    }
                    other => {
                        return Err(parse_err(line, format!("unknown bound type '{other}'")))
                    }
                };
                let needs_value =
                    matches!(ty, BoundType::Lower | BoundType::Upper | BoundType::Fixed);
                let (col_tok, value) = match (needs_value, toks.len()) {
                    (true, 4) => (toks[2], parse_value(toks[3], line)?),
                    (true, 3) => (toks[1], parse_value(toks[2], line)?),
                    (false, 3) => (toks[2], 0.0),
                    (false, 2) => (toks[1], 0.0),
                    _ => return Err(parse_err(line, "malformed BOUNDS line")),
                };
                let col = p.col(col_tok, line)?;
                p.bounds.push((col, ty, value));
            }
            Section::Quad { both_triangles } => {
                if toks.len() != 3 {
                    return Err(parse_err(
                        line,
                        "quadratic line needs two column names and a value",
                    ));
                }
                let i = p.col(toks[0], line)?;
                let j = p.col(toks[1], line)?;
                let v = parse_value(toks[2], line)?;
                if both_triangles {
                    // the mirror entry carries the same value; keep the
                    // lower copy only
                    if i >= j {
                        p.quad.push((i, j, v));
                    }
                } else {
                    p.quad.push((i.max(j), i.min(j), v));
                }
            }
            Section::Done => unreachable!(),
        }
    }

    if section != Section::Done {
        return Err(parse_err(last_line, "missing ENDATA"));
    }
    let (objective_name, _) = p
        .objective
        .ok_or_else(|| parse_err(last_line, "no objective (N) row declared"))?;

    let m = p.row_names.len();
    let mut rhs = vec![0.0; m];
    for (i, v) in p.rhs {
        rhs[i] = v;
    }
    let mut ranges = vec![None; m];
    for (i, v) in p.ranges {
        ranges[i] = Some(v);
    }
    Ok(RawInstance {
        name: p.name,
        objective_name,
        row_names: p.row_names,
        row_senses: p.row_senses,
        col_names: p.col_names,
        a_entries: p.a_entries,
        c_entries: p.c_entries,
        rhs,
        rhs_objective: p.rhs_objective,
        ranges,
        bounds: p.bounds,
        quad: p.quad,
    })
}

enum VarMap {
    Fixed(f64),
    Kept { new: usize, sign: f64, offset: f64, upper: Option<f64>, free: bool },
}

/// Rewrites a parsed instance into the solver's standard form.
pub fn standardize(raw: &RawInstance) -> Result<ProblemQP, MpsError> {
    let n0 = raw.col_names.len();
    let m0 = raw.row_names.len();

    let mut lo = vec![0.0; n0];
    let mut up = vec![f64::INFINITY; n0];
    for &(j, ty, v) in &raw.bounds {
        match ty {
            BoundType::Lower => lo[j] = v,
            BoundType::Upper => up[j] = v,
            BoundType::Fixed => {
                lo[j] = v;
                up[j] = v;
            }
            BoundType::Free => {
                lo[j] = f64::NEG_INFINITY;
                up[j] = f64::INFINITY;
            }
            BoundType::MinusInf => lo[j] = f64::NEG_INFINITY,
            BoundType::PlusInf => up[j] = f64::INFINITY,
        }
    }

    let mut maps = Vec::with_capacity(n0);
    let mut ncols = 0usize;
    for j in 0..n0 {
        if lo[j] > up[j] {
            return Err(MpsError::InfeasibleBounds {
                column: raw.col_names[j].clone(),
                lo: lo[j],
                up: up[j],
            });
        }
        let map = if lo[j] == up[j] {
            VarMap::Fixed(lo[j])
        } else if lo[j] == f64::NEG_INFINITY && up[j] == f64::INFINITY {
            let new = ncols;
            ncols += 1;
            VarMap::Kept { new, sign: 1.0, offset: 0.0, upper: None, free: true }
        } else if lo[j].is_finite() {
            let new = ncols;
            ncols += 1;
            let width = up[j] - lo[j];
            let upper = width.is_finite().then_some(width);
            VarMap::Kept { new, sign: 1.0, offset: lo[j], upper, free: false }
        } else {
            // lower unbounded, upper finite: flip the sign
            let new = ncols;
            ncols += 1;
            VarMap::Kept { new, sign: -1.0, offset: up[j], upper: None, free: false }
        };
        maps.push(map);
    }

    // dense-by-row view of symmetric H in the original indices, for
    // folding offsets into the linear term and the constant
    let mut h_rows: Vec<HashMap<usize, f64>> = vec![HashMap::new(); n0];
    for &(i, j, v) in &raw.quad {
        *h_rows[i].entry(j).or_insert(0.0) += v;
        if i != j {
            *h_rows[j].entry(i).or_insert(0.0) += v;
        }
    }
    let offset: Vec<f64> = maps
        .iter()
        .map(|m| match m {
            VarMap::Fixed(v) => *v,
            VarMap::Kept { offset, .. } => *offset,
        })
        .collect();

    let mut c0 = vec![0.0; n0];
    for &(j, v) in &raw.c_entries {
        c0[j] += v;
    }
    let mut constant = -raw.rhs_objective;
    for j in 0..n0 {
        constant += c0[j] * offset[j];
        let ho: f64 = h_rows[j].iter().map(|(&k, &v)| v * offset[k]).sum();
        constant += 0.5 * ho * offset[j];
    }

    let mut c = vec![0.0; ncols];
    let mut free_set = Vec::new();
    let mut ineq_set = Vec::new();
    let mut upper_bounded: Vec<(usize, f64)> = Vec::new();
    for j in 0..n0 {
        if let VarMap::Kept { new, sign, upper, free, .. } = maps[j] {
            let ho: f64 = h_rows[j].iter().map(|(&k, &v)| v * offset[k]).sum();
            c[new] = sign * (c0[j] + ho);
            if free {
                free_set.push(new);
            } else {
                ineq_set.push(new);
            }
            if let Some(w) = upper {
                upper_bounded.push((new, w));
            }
        }
    }

    let mut h_trip = Vec::new();
    for &(i, j, v) in &raw.quad {
        if let (
            VarMap::Kept { new: ni, sign: si, .. },
            VarMap::Kept { new: nj, sign: sj, .. },
        ) = (&maps[i], &maps[j])
        {
            h_trip.push((*ni, *nj, v * si * sj));
        }
    }

    let mut a_trip = Vec::new();
    let mut b = raw.rhs.clone();
    for &(i, j, v) in &raw.a_entries {
        match maps[j] {
            VarMap::Fixed(x) => b[i] -= v * x,
            VarMap::Kept { new, sign, offset, .. } => {
                b[i] -= v * offset;
                a_trip.push((i, new, v * sign));
            }
        }
    }

    // slacks for inequality rows; a range turns the slack two-sided
    for i in 0..m0 {
        let span = raw.ranges[i].map(f64::abs);
        let coeff = match (raw.row_senses[i], raw.ranges[i]) {
            (RowSense::Equal, None) => continue,
            (RowSense::Equal, Some(r)) => {
                if r >= 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
            (RowSense::LessEq, _) => 1.0,
            (RowSense::GreaterEq, _) => -1.0,
        };
        if span == Some(0.0) {
            // zero range pins the row to its RHS
            continue;
        }
        let slack = ncols;
        ncols += 1;
        a_trip.push((i, slack, coeff));
        c.push(0.0);
        ineq_set.push(slack);
        if let Some(w) = span {
            upper_bounded.push((slack, w));
        }
    }

    // one extra row per two-sided variable: x + s = width
    let mut nrows = m0;
    for &(col, width) in &upper_bounded {
        let row = nrows;
        nrows += 1;
        let slack = ncols;
        ncols += 1;
        a_trip.push((row, col, 1.0));
        a_trip.push((row, slack, 1.0));
        b.push(width);
        c.push(0.0);
        ineq_set.push(slack);
    }

    let a = SparseMatrix::from_triplets(nrows, ncols, &a_trip, Symmetry::General)?;
    let h = if h_trip.is_empty() {
        None
    } else {
        Some(SparseMatrix::from_triplets(ncols, ncols, &h_trip, Symmetry::SymmetricLower)?)
    };
    let name = if raw.name.is_empty() { "unnamed" } else { &raw.name };
    Ok(ProblemQP::new(a, h, b, c, ineq_set, free_set, name)?.with_constant(constant))
}

pub const REPORT_HEADER: &str =
    "name,status,ipm_iters,total_krylov,avg_krylov,krylov_last,max_nnz,time_seconds,objective";

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn status_label(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::IterationLimit => "iteration_limit",
    }
}

pub fn write_report_header(sink: &mut dyn Write) -> io::Result<()> {
    writeln!(sink, "{REPORT_HEADER}")
}

pub fn write_report_row(
    sink: &mut dyn Write,
    name: &str,
    status: SolveStatus,
    trace: &IpmTrace,
    objective: f64,
    time_seconds: f64,
) -> io::Result<()> {
    writeln!(
        sink,
        "{},{},{},{},{},{},{},{},{}",
        csv_field(name),
        status_label(status),
        trace.len(),
        trace.total_krylov(),
        trace.avg_krylov(),
        trace.krylov_last(),
        trace.max_factor_nnz(),
        time_seconds,
        objective
    )
}

/// Writes the CSV header and, when the trace holds at least one
/// iteration, a single summary row for this solve.
pub fn write_report(
    sink: &mut dyn Write,
    trace: &IpmTrace,
    state: &IterateState,
    problem: &ProblemQP,
    status: SolveStatus,
    time_seconds: f64,
) -> io::Result<()> {
    write_report_header(sink)?;
    if trace.is_empty() {
        return Ok(());
    }
    write_report_row(
        sink,
        problem.name(),
        status,
        trace,
        problem.objective(&state.x),
        time_seconds,
    )
}
