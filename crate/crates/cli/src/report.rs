//! Rate tables as CSV and Markdown.
//!
//! Errors are written with three significant digits and rates with one decimal.
//! Rates are recomputed from the rounded errors so that every emitted rate is
//! consistent with the emitted errors.

use serde::Serialize;
use wg_stokes::verification::{observed_order, RateTable};

pub const CSV_HEADER: [&str; 9] =
    ["level", "h", "ndofs", "err_l2", "rate_l2", "err_energy", "rate_energy", "err_pressure", "rate_pressure"];

const MD_HEADER: [&str; 9] = ["level", "h", "ndofs", "‖u−u_h‖₀", "rate", "‖∇_w(u−u_h)‖₀", "rate", "‖Q_0p−p_h‖₀", "rate"];

/// One emitted row; numbers are exactly what the text shows.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Row {
    pub level: usize,
    pub h: f64,
    pub ndofs: usize,
    /// `(l2, energy, pressure)`.
    pub errors: [f64; 3],
    pub rates: [Option<f64>; 3],
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("unexpected header {0:?}")]
    Header(Vec<String>),
    #[error("row {row}: bad field {field:?}")]
    Field { row: usize, field: String },
}

fn fmt_h(h: f64) -> String {
    format!("{h:.6e}")
}

fn fmt_err(e: f64) -> String {
    format!("{e:.2e}")
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "-".to_string(), |r| format!("{r:.1}"))
}

fn reparse(s: String) -> f64 {
    s.parse().expect("formatted float parses")
}

/// Rows as they will be printed.
pub fn rows(table: &RateTable) -> Vec<Row> {
    let mut out: Vec<Row> = Vec::with_capacity(table.levels.len());
    for l in &table.levels {
        let e = &l.errors;
        let errors = [e.l2, e.energy, e.pressure].map(|x| reparse(fmt_err(x)));
        let h = reparse(fmt_h(e.h));
        let rates = match out.last() {
            None => [None; 3],
            Some(prev) => {
                let mut r = [None; 3];
                for i in 0..3 {
                    let order = observed_order(prev.errors[i], errors[i], prev.h, h);
                    r[i] = order.is_finite().then(|| reparse(format!("{order:.1}")));
                }
                r
            }
        };
        out.push(Row { level: l.level, h, ndofs: e.n_dofs, errors, rates });
    }
    out
}

fn fields(row: &Row) -> [String; 9] {
    [
        row.level.to_string(),
        fmt_h(row.h),
        row.ndofs.to_string(),
        fmt_err(row.errors[0]),
        fmt_rate(row.rates[0]),
        fmt_err(row.errors[1]),
        fmt_rate(row.rates[1]),
        fmt_err(row.errors[2]),
        fmt_rate(row.rates[2]),
    ]
}

pub fn to_csv(rows: &[Row]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record(fields(r)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// Aligned Markdown table with the same numbers as [`to_csv`].
pub fn to_markdown(rows: &[Row]) -> String {
    let cells: Vec<[String; 9]> = rows.iter().map(fields).collect();
    let width = |i: usize| cells.iter().map(|c| c[i].chars().count()).chain([MD_HEADER[i].chars().count()]).max().unwrap_or(1);
    let widths: Vec<usize> = (0..9).map(width).collect();
    let line = |items: Vec<String>| format!("| {} |\n", items.join(" | "));
    let pad = |s: &str, w: usize| format!("{s}{}", " ".repeat(w - s.chars().count()));
    let mut out = line((0..9).map(|i| pad(MD_HEADER[i], widths[i])).collect());
    out += &line(widths.iter().map(|&w| "-".repeat(w)).collect());
    for c in &cells {
        out += &line((0..9).map(|i| pad(&c[i], widths[i])).collect());
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<Row>, ParseError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != CSV_HEADER {
        return Err(ParseError::Header(header));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |s: &str| ParseError::Field { row: i + 1, field: s.to_string() };
        let num = |j: usize| rec[j].parse::<f64>().map_err(|_| bad(&rec[j]));
        let rate = |j: usize| match &rec[j] {
            "-" => Ok(None),
            s => s.parse::<f64>().map(Some).map_err(|_| bad(s)),
        };
        out.push(Row {
            level: rec[0].parse().map_err(|_| bad(&rec[0]))?,
            h: num(1)?,
            ndofs: rec[2].parse().map_err(|_| bad(&rec[2]))?,
            errors: [num(3)?, num(5)?, num(7)?],
            rates: [rate(4)?, rate(6)?, rate(8)?],
        });
    }
    Ok(out)
}
