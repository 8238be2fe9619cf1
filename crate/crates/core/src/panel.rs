//! Time-series panels and their CSV representation.
//!
//! A panel file has a mandatory header whose first cell is `date`; every other
//! header cell names a series. Each data row is a date label followed by one
//! numeric field per series. Dates are opaque labels ordered lexicographically,
//! which is the natural order for ISO-8601 strings.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::io;

/// Whether a panel holds observed series or observable factors. Only affects
/// error messages; both kinds obey the same shape rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    Returns,
    Factors,
}

impl PanelKind {
    fn label(self) -> &'static str {
        match self {
            PanelKind::Returns => "returns",
            PanelKind::Factors => "factors",
        }
    }
}

/// T×n real panel with a strictly increasing time index and unique column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    times: Vec<String>,
    names: Vec<String>,
    values: DMatrix<f64>,
}

/// Observed series `y_t`, one column per series.
pub type ReturnsPanel = Panel;
/// Observable factors `f_t`, one column per factor.
pub type FactorPanel = Panel;

impl Panel {
    pub fn new(times: Vec<String>, names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != times.len() {
            return Err(Error::DimensionMismatch {
                what: "panel rows",
                expected: times.len(),
                actual: values.nrows(),
            });
        }
        if values.ncols() != names.len() {
            return Err(Error::DimensionMismatch {
                what: "panel columns",
                expected: names.len(),
                actual: values.ncols(),
            });
        }
        if times.len() < 2 {
            return Err(Error::InvalidPanel(format!(
                "need at least 2 time points, got {}",
                times.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::InvalidPanel("panel has no series".into()));
        }
        if let Some(w) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPanel(format!(
                "dates not strictly increasing: {:?} followed by {:?}",
                w[0], w[1]
            )));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::InvalidPanel(format!("duplicate series name {dup:?}")));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidPanel(format!("non-finite value {v}")));
        }
        Ok(Panel {
            times,
            names,
            values,
        })
    }

    /// Panel with synthetic labels `t0000…` and `{prefix}1…`, used by the simulator.
    pub fn with_generated_labels(prefix: &str, values: DMatrix<f64>) -> Result<Self> {
        let width = values.nrows().to_string().len().max(4);
        let times = (0..values.nrows())
            .map(|t| format!("t{t:0width$}"))
            .collect();
        let names = (1..=values.ncols()).map(|i| format!("{prefix}{i}")).collect();
        Panel::new(times, names, values)
    }

    pub fn times(&self) -> &[String] {
        &self.times
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Number of time points T.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of series (p for returns, r for factors).
    pub fn width(&self) -> usize {
        self.names.len()
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Panel> {
        Panel::new(
            self.times[start..end].to_vec(),
            self.names.clone(),
            self.values.rows(start, end - start).into_owned(),
        )
    }

    fn select_rows(&self, rows: &[usize]) -> Result<Panel> {
        let values = DMatrix::from_fn(rows.len(), self.width(), |i, j| self.values[(rows[i], j)]);
        let times = rows.iter().map(|&r| self.times[r].clone()).collect();
        Panel::new(times, self.names.clone(), values)
    }

    /// Drops every series that has a blank or unparsable cell. Only used by the
    /// CLI pre-filter; `load_csv` itself never tolerates gaps.
    pub fn load_csv_complete_columns(path: &Path) -> Result<(Panel, Vec<String>)> {
        let raw = read_raw(path)?;
        let mut keep = Vec::new();
        let mut dropped = Vec::new();
        for (j, name) in raw.names.iter().enumerate() {
            if raw.rows.iter().all(|r| parse_cell(&r.1[j]).is_some()) {
                keep.push(j);
            } else {
                dropped.push(name.clone());
            }
        }
        let values = DMatrix::from_fn(raw.rows.len(), keep.len(), |i, j| {
            parse_cell(&raw.rows[i].1[keep[j]]).unwrap()
        });
        let names = keep.iter().map(|&j| raw.names[j].clone()).collect();
        let times = raw.rows.into_iter().map(|r| r.0).collect();
        Ok((Panel::new(times, names, values)?, dropped))
    }

    /// Reads a panel CSV; see the module docs for the format.
    pub fn load_csv(path: &Path, kind: PanelKind) -> Result<Panel> {
        let raw = read_raw(path)?;
        let mut values = DMatrix::zeros(raw.rows.len(), raw.names.len());
        for (i, (_, cells)) in raw.rows.iter().enumerate() {
            for (j, cell) in cells.iter().enumerate() {
                values[(i, j)] = parse_cell(cell).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    col: j + 2,
                    msg: if cell.trim().is_empty() {
                        "missing value".to_string()
                    } else {
                        format!("cannot parse {cell:?} as a number")
                    },
                })?;
            }
        }
        let times = raw.rows.into_iter().map(|r| r.0).collect();
        Panel::new(times, raw.names, values).map_err(|e| match e {
            Error::InvalidPanel(msg) => Error::InvalidPanel(format!(
                "{} ({} panel): {msg}",
                path.display(),
                kind.label()
            )),
            other => other,
        })
    }

    /// Writes the panel in the format accepted by [`Panel::load_csv`]. Values use
    /// the shortest representation that parses back to the identical `f64`.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("date");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, label) in self.times.iter().enumerate() {
            out.push_str(label);
            for j in 0..self.width() {
                out.push(',');
                out.push_str(&self.values[(t, j)].to_string());
            }
            out.push('\n');
        }
        io::write_atomic(path, out.as_bytes())
    }
}

struct RawPanel {
    names: Vec<String>,
    rows: Vec<(String, Vec<String>)>,
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() {
        return None;
    }
    c.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn read_raw(path: &Path) -> Result<RawPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.get(0).map(str::trim) != Some("date") {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            row: 1,
            col: 1,
            msg: "first header cell must be \"date\"".into(),
        });
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        if rec.len() != names.len() + 1 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                col: rec.len().min(names.len() + 1).max(1),
                msg: format!("expected {} fields, found {}", names.len() + 1, rec.len()),
            });
        }
        let date = rec[0].trim().to_string();
        if date.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: line,
                col: 1,
                msg: "missing date label".into(),
            });
        }
        rows.push((date, rec.iter().skip(1).map(str::to_string).collect()));
    }
    Ok(RawPanel { names, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            row: 0,
            col: 0,
            msg: format!("{other:?}"),
        },
    }
}

/// Returns and factors restricted to their shared time labels.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPanels {
    pub returns: ReturnsPanel,
    pub factors: FactorPanel,
}

/// Restricts both panels to the intersection of their time labels, keeping the
/// original (increasing) order.
pub fn align(returns: &ReturnsPanel, factors: &FactorPanel) -> Result<AlignedPanels> {
    let index: HashMap<&str, usize> = factors
        .times
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    let (rrows, frows): (Vec<usize>, Vec<usize>) = returns
        .times
        .iter()
        .enumerate()
        .filter_map(|(i, t)| index.get(t.as_str()).map(|&j| (i, j)))
        .unzip();
    if rrows.len() < 2 {
        return Err(Error::EmptyIntersection {
            shared: rrows.len(),
        });
    }
    Ok(AlignedPanels {
        returns: returns.select_rows(&rrows)?,
        factors: factors.select_rows(&frows)?,
    })
}
