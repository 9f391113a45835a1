//! Reference tables: bound values over sample-size grids, formatted the
//! way the companion write-up prints them.
//!
//! Every table is generated from its column formulas; nothing is hard
//! coded. Cells round half away from zero at a per-table precision (7
//! decimals for the ridiculousness bound table, 6 elsewhere), with the tie
//! resolved on the binary value actually computed.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kl::{
    hoeffding_lower, hoeffding_upper, lower_bound, upper_bound, BoundQuery, Probability,
};

/// The six reference tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TableId {
    #[serde(rename = "S-Chernoff")]
    SChernoff,
    #[serde(rename = "R-Chernoff")]
    RChernoff,
    CompareTests,
    CompareBounds,
    #[serde(rename = "S-Hoeffding")]
    SHoeffding,
    #[serde(rename = "R-Hoeffding")]
    RHoeffding,
}

pub const ALL_TABLES: [TableId; 6] = [
    TableId::SChernoff,
    TableId::RChernoff,
    TableId::CompareTests,
    TableId::CompareBounds,
    TableId::SHoeffding,
    TableId::RHoeffding,
];

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TableId::SChernoff => "S-Chernoff",
            TableId::RChernoff => "R-Chernoff",
            TableId::CompareTests => "CompareTests",
            TableId::CompareBounds => "CompareBounds",
            TableId::SHoeffding => "S-Hoeffding",
            TableId::RHoeffding => "R-Hoeffding",
        };
        f.write_str(s)
    }
}

impl FromStr for TableId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S-Chernoff" => Ok(TableId::SChernoff),
            "R-Chernoff" => Ok(TableId::RChernoff),
            "CompareTests" => Ok(TableId::CompareTests),
            "CompareBounds" => Ok(TableId::CompareBounds),
            "S-Hoeffding" => Ok(TableId::SHoeffding),
            "R-Hoeffding" => Ok(TableId::RHoeffding),
            other => Err(Error::InvalidTableSpec(format!(
                "unknown table `{other}`; expected one of S-Chernoff, R-Chernoff, \
                 CompareTests, CompareBounds, S-Hoeffding, R-Hoeffding"
            ))),
        }
    }
}

/// Which table to compute, over which sample sizes, with which parameter
/// overrides. Unset parameters take the table's defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub table_id: TableId,
    pub n_grid: Vec<u64>,
    pub parameters: BTreeMap<String, f64>,
}

impl TableSpec {
    pub fn with_defaults(table_id: TableId) -> Self {
        let n_grid = match table_id {
            TableId::SChernoff | TableId::RChernoff => {
                vec![10, 100, 1_000, 10_000, 100_000, 1_000_000]
            }
            TableId::CompareTests | TableId::CompareBounds => {
                vec![10, 30, 100, 300, 1_000, 3_000, 10_000]
            }
            TableId::SHoeffding | TableId::RHoeffding => {
                vec![10, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000]
            }
        };
        TableSpec {
            table_id,
            n_grid,
            parameters: BTreeMap::new(),
        }
    }
}

/// A computed table, ready to render: full-precision values plus the
/// precision cells print at.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RenderedTable {
    pub id: TableId,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<TableRow>,
    pub decimals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub n: u64,
    pub values: Vec<f64>,
}

/// Output syntax for a rendered table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "markdown" => Ok(TableFormat::Markdown),
            other => Err(Error::InvalidTableSpec(format!(
                "unknown format `{other}`; expected text, csv, or markdown"
            ))),
        }
    }
}

/// Round half away from zero at `decimals` places, deciding ties on the
/// binary value.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let rounded = (x.abs() * scale + 0.5).floor().copysign(x) / scale;
    if rounded == 0.0 {
        0.0
    } else {
        rounded
    }
}

/// One cell as printed.
pub fn format_cell(x: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, round_half_away(x, decimals as u32))
}

fn lcb(p: f64, n: u64, delta: f64) -> Result<f64> {
    let query = BoundQuery::new(Probability::new(p)?, n, delta)?;
    Ok(lower_bound(&query).value())
}

fn ucb(p: f64, n: u64, delta: f64) -> Result<f64> {
    let query = BoundQuery::new(Probability::new(p)?, n, delta)?;
    Ok(upper_bound(&query).value())
}

fn hoeff_lower(p: f64, n: u64, delta: f64) -> Result<f64> {
    Ok(hoeffding_lower(Probability::new(p)?, n, delta))
}

fn hoeff_upper(p: f64, n: u64, delta: f64) -> Result<f64> {
    Ok(hoeffding_upper(Probability::new(p)?, n, delta))
}

struct TableDef {
    title: &'static str,
    defaults: &'static [(&'static str, f64)],
    decimals: usize,
    min_n: u64,
}

fn table_def(id: TableId) -> TableDef {
    match id {
        TableId::SChernoff => TableDef {
            title: "Score confidence bounds",
            defaults: &[("s_high", 0.9), ("s_low", 0.5), ("delta", 0.05)],
            decimals: 6,
            min_n: 1,
        },
        TableId::RChernoff => TableDef {
            title: "Ridiculousness confidence bounds",
            defaults: &[("spike", 3.0), ("r_low", 0.01), ("delta", 0.05)],
            decimals: 7,
            min_n: 1,
        },
        TableId::CompareTests => TableDef {
            title: "Good-grade bounds across the three evidence models",
            defaults: &[("score", 0.6), ("mass", 0.5), ("delta", 0.05)],
            decimals: 6,
            min_n: 2,
        },
        TableId::CompareBounds => TableDef {
            title: "Component lower bounds",
            defaults: &[("score", 0.6), ("delta", 0.05)],
            decimals: 6,
            min_n: 2,
        },
        TableId::SHoeffding => TableDef {
            title: "Score bounds under Hoeffding",
            defaults: &[("s_high", 0.9), ("s_low", 0.5), ("delta", 0.05)],
            decimals: 6,
            min_n: 1,
        },
        TableId::RHoeffding => TableDef {
            title: "Ridiculousness bounds under Hoeffding",
            defaults: &[("spike", 3.0), ("r_low", 0.01), ("delta", 0.05)],
            decimals: 6,
            min_n: 1,
        },
    }
}

/// Evaluate a table spec into values.
pub fn compute_table(spec: &TableSpec) -> Result<RenderedTable> {
    let def = table_def(spec.table_id);

    let mut params: BTreeMap<&str, f64> = def.defaults.iter().copied().collect();
    for (key, value) in &spec.parameters {
        match params.get_mut(key.as_str()) {
            Some(slot) => *slot = *value,
            None => {
                return Err(Error::InvalidTableSpec(format!(
                    "unknown parameter `{key}` for table {}",
                    spec.table_id
                )))
            }
        }
    }
    let p = |key: &str| params[key];

    if spec.n_grid.is_empty() {
        return Err(Error::InvalidTableSpec("empty n grid".to_string()));
    }
    if !spec.n_grid.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidTableSpec(
            "n grid must be strictly increasing".to_string(),
        ));
    }
    if spec.n_grid[0] < def.min_n {
        return Err(Error::InvalidTableSpec(format!(
            "table {} needs n >= {}",
            spec.table_id, def.min_n
        )));
    }

    let delta = p("delta");
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidTableSpec(format!(
            "delta must lie strictly between 0 and 1, got {delta}"
        )));
    }
    let half = delta / 2.0;

    let (headers, rows) = match spec.table_id {
        TableId::SChernoff => {
            let (hi, lo) = (p("s_high"), p("s_low"));
            let headers = vec![
                format!("L({hi},n,{delta})"),
                format!("U({hi},n,{half})"),
                format!("L({lo},n,{delta})"),
                format!("U({lo},n,{half})"),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    Ok(TableRow {
                        n,
                        values: vec![
                            lcb(hi, n, delta)?,
                            ucb(hi, n, half)?,
                            lcb(lo, n, delta)?,
                            ucb(lo, n, half)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
        TableId::RChernoff => {
            let (spike, r_low) = (p("spike"), p("r_low"));
            let headers = vec![
                format!("U(0,n,{delta})"),
                format!("U({spike}/n,n,{delta})"),
                format!("L({r_low},n,{half})"),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    Ok(TableRow {
                        n,
                        values: vec![
                            ucb(0.0, n, delta)?,
                            ucb(spike / n as f64, n, delta)?,
                            lcb(r_low, n, half)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
        TableId::CompareTests => {
            let (s, mass) = (p("score"), p("mass"));
            let headers = vec![
                "Good-Grade".to_string(),
                "Good-Grade-EUA".to_string(),
                "Good-Grade-Exp".to_string(),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    let h = n / 2;
                    let part = (1.0 - mass) * lcb(s, h, half)?;
                    Ok(TableRow {
                        n,
                        values: vec![
                            lcb(s, n, delta)?,
                            mass * lcb(1.0, h, half)? * s + part,
                            mass * s + part,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
        TableId::CompareBounds => {
            let s = p("score");
            let headers = vec![
                format!("L({s},n,{delta})"),
                format!("L(1,n/2,{half})"),
                format!("L({s},n/2,{half})"),
                format!("L({s},n-1,{delta})"),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    Ok(TableRow {
                        n,
                        values: vec![
                            lcb(s, n, delta)?,
                            lcb(1.0, n / 2, half)?,
                            lcb(s, n / 2, half)?,
                            lcb(s, n - 1, delta)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
        TableId::SHoeffding => {
            let (hi, lo) = (p("s_high"), p("s_low"));
            let headers = vec![
                format!("{hi}-sqrt(ln(1/{delta})/n)"),
                format!("{hi}+sqrt(ln(1/{half})/n)"),
                format!("{lo}-sqrt(ln(1/{delta})/n)"),
                format!("{lo}+sqrt(ln(1/{half})/n)"),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    Ok(TableRow {
                        n,
                        values: vec![
                            hoeff_lower(hi, n, delta)?,
                            hoeff_upper(hi, n, half)?,
                            hoeff_lower(lo, n, delta)?,
                            hoeff_upper(lo, n, half)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
        TableId::RHoeffding => {
            let (spike, r_low) = (p("spike"), p("r_low"));
            let headers = vec![
                format!("0+sqrt(ln(1/{delta})/n)"),
                format!("{spike}/n+sqrt(ln(1/{delta})/n)"),
                format!("{r_low}-sqrt(ln(1/{half})/n)"),
            ];
            let rows = spec
                .n_grid
                .iter()
                .map(|&n| {
                    Ok(TableRow {
                        n,
                        values: vec![
                            hoeff_upper(0.0, n, delta)?,
                            hoeff_upper(spike / n as f64, n, delta)?,
                            hoeff_lower(r_low, n, half)?,
                        ],
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            (headers, rows)
        }
    };

    Ok(RenderedTable {
        id: spec.table_id,
        title: def.title.to_string(),
        headers,
        rows,
        decimals: def.decimals,
    })
}

/// Render a computed table as text, CSV, or Markdown.
pub fn render_table(table: &RenderedTable, format: TableFormat) -> String {
    let cells: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|row| {
            let mut line = vec![row.n.to_string()];
            line.extend(row.values.iter().map(|&v| format_cell(v, table.decimals)));
            line
        })
        .collect();
    let mut headers = vec!["n".to_string()];
    headers.extend(table.headers.iter().cloned());

    match format {
        TableFormat::Csv => {
            let mut out = headers.join(",");
            out.push('\n');
            for line in &cells {
                out.push_str(&line.join(","));
                out.push('\n');
            }
            out
        }
        TableFormat::Markdown => {
            let mut out = format!("| {} |\n", headers.join(" | "));
            out.push_str(&format!(
                "|{}\n",
                " ---: |".repeat(headers.len())
            ));
            for line in &cells {
                out.push_str(&format!("| {} |\n", line.join(" | ")));
            }
            out
        }
        TableFormat::Text => {
            let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
            for line in &cells {
                for (w, cell) in widths.iter_mut().zip(line) {
                    *w = (*w).max(cell.len());
                }
            }
            let mut out = format!("{}: {}\n", table.id, table.title);
            let fmt_line = |line: &[String]| {
                line.iter()
                    .zip(&widths)
                    .map(|(cell, w)| format!("{cell:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            out.push_str(&fmt_line(&headers));
            out.push('\n');
            for line in &cells {
                out.push_str(&fmt_line(line));
                out.push('\n');
            }
            out
        }
    }
}
