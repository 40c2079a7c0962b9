//! Long-format panel files: one row per `(time, region, variable)` cell.
//!
//! The header must be exactly `time,region,variable,value`. Times are either
//! all integers (sorted numerically) or all ISO dates `YYYY-MM-DD` (sorted
//! lexically); regions and variables keep their order of first appearance,
//! which fixes the region ordering used by triangular models. Every cell of
//! the grid must be present exactly once. Values are written in the shortest
//! representation that parses back to the same double.

use std::collections::HashMap;
use std::path::Path;

use kronvar_core::kron::Dims;
use kronvar_core::simulate::MatrixSeries;
use nalgebra::DMatrix;

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 4] = ["time", "region", "variable", "value"];

/// A matrix series together with its time labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub times: Vec<String>,
    pub series: MatrixSeries,
}

impl Panel {
    pub fn regions(&self) -> Vec<String> {
        self.series
            .region_names()
            .map(<[String]>::to_vec)
            .unwrap_or_else(|| (0..self.series.dims().n).map(|i| format!("r{i}")).collect())
    }

    pub fn variables(&self) -> Vec<String> {
        self.series
            .variable_names()
            .map(<[String]>::to_vec)
            .unwrap_or_else(|| (0..self.series.dims().m).map(|i| format!("v{i}")).collect())
    }

    /// Integer time labels `0..T` and default names.
    pub fn from_series(series: MatrixSeries) -> Self {
        let times = (0..series.t_len()).map(|t| t.to_string()).collect();
        let mut panel = Panel { times, series };
        if panel.series.region_names().is_none() {
            let (v, r) = (panel.variables(), panel.regions());
            panel.series = panel.series.clone().with_labels(v, r).expect("label lengths match dims");
        }
        panel
    }
}

/// Shortest round-trip decimal form of a double.
pub fn format_value(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_panel<W: std::io::Write>(out: W, panel: &Panel) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CliError::Input(format!("writing panel: {e}"));
    w.write_record(HEADER).map_err(err)?;
    let (regions, variables) = (panel.regions(), panel.variables());
    for (t, time) in panel.times.iter().enumerate() {
        let y = panel.series.get(t);
        for (i, region) in regions.iter().enumerate() {
            for (v, variable) in variables.iter().enumerate() {
                w.write_record([time.as_str(), region, variable, &format_value(y[(v, i)])]).map_err(err)?;
            }
        }
    }
    w.flush().map_err(|e| CliError::Input(format!("writing panel: {e}")))
}

pub fn save_panel(path: &Path, panel: &Panel) -> CliResult<()> {
    let mut buf = Vec::new();
    write_panel(&mut buf, panel)?;
    std::fs::write(path, buf).map_err(|e| CliError::io(path, e))
}

pub fn load_panel(path: &Path) -> CliResult<Panel> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_panel(file).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn is_iso_date(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 10
        && b[4] == b'-'
        && b[7] == b'-'
        && b.iter().enumerate().all(|(i, c)| i == 4 || i == 7 || c.is_ascii_digit())
}

fn sort_times(times: &mut [String]) -> CliResult<()> {
    if times.iter().all(|t| t.parse::<i64>().is_ok()) {
        times.sort_by_key(|t| t.parse::<i64>().expect("checked above"));
        Ok(())
    } else if times.iter().all(|t| is_iso_date(t)) {
        times.sort();
        Ok(())
    } else {
        Err(CliError::Input("time column must hold integers or ISO dates (YYYY-MM-DD) throughout".into()))
    }
}

pub fn read_panel<R: std::io::Read>(input: R) -> CliResult<Panel> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers().map_err(|e| CliError::Input(format!("reading header: {e}")))?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != HEADER {
        return Err(CliError::Input(format!(
            "expected long-format header `time,region,variable,value`, found `{}`; wide tables are not \
             accepted, reshape to one row per (time, region, variable) cell as described in the README",
            names.join(",")
        )));
    }

    let mut times: Vec<String> = Vec::new();
    let mut regions: Vec<String> = Vec::new();
    let mut variables: Vec<String> = Vec::new();
    let (mut time_ix, mut region_ix, mut var_ix) =
        (HashMap::<String, usize>::new(), HashMap::<String, usize>::new(), HashMap::<String, usize>::new());
    let mut cells: HashMap<(usize, usize, usize), f64> = HashMap::new();
    let intern = |key: &str, list: &mut Vec<String>, ix: &mut HashMap<String, usize>| -> usize {
        *ix.entry(key.to_string()).or_insert_with(|| {
            list.push(key.to_string());
            list.len() - 1
        })
    };

    for (line, rec) in rdr.records().enumerate() {
        let row = line + 2;
        let rec = rec.map_err(|e| CliError::Input(format!("row {row}: {e}")))?;
        if rec.len() != 4 {
            return Err(CliError::Input(format!("row {row}: expected 4 fields, found {}", rec.len())));
        }
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| CliError::Input(format!("row {row}: value `{}` is not a number", &rec[3])))?;
        if !value.is_finite() {
            return Err(CliError::Input(format!("row {row}: value must be finite")));
        }
        if rec[0].is_empty() || rec[1].is_empty() || rec[2].is_empty() {
            return Err(CliError::Input(format!("row {row}: empty time, region or variable")));
        }
        let t = intern(&rec[0], &mut times, &mut time_ix);
        let r = intern(&rec[1], &mut regions, &mut region_ix);
        let v = intern(&rec[2], &mut variables, &mut var_ix);
        if cells.insert((t, r, v), value).is_some() {
            return Err(CliError::Input(format!(
                "row {row}: duplicate cell (time {}, region {}, variable {})",
                &rec[0], &rec[1], &rec[2]
            )));
        }
    }
    if cells.is_empty() {
        return Err(CliError::Input("panel has no data rows".into()));
    }
    let (t_len, n, m) = (times.len(), regions.len(), variables.len());
    if cells.len() != t_len * n * m {
        let missing = (0..t_len)
            .flat_map(|t| (0..n).flat_map(move |r| (0..m).map(move |v| (t, r, v))))
            .find(|key| !cells.contains_key(key))
            .expect("a missing cell exists");
        return Err(CliError::Input(format!(
            "incomplete grid: {} of {} cells present; first missing is (time {}, region {}, variable {})",
            cells.len(),
            t_len * n * m,
            times[missing.0],
            regions[missing.1],
            variables[missing.2]
        )));
    }

    let mut order = times.clone();
    sort_times(&mut order)?;
    let dims = Dims::new(m, n).map_err(|e| CliError::Input(e.to_string()))?;
    let data = order
        .iter()
        .map(|label| {
            let t = time_ix[label];
            DMatrix::from_fn(m, n, |v, r| cells[&(t, r, v)])
        })
        .collect();
    let series = MatrixSeries::new(dims, data)
        .and_then(|s| s.with_labels(variables, regions))
        .map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Panel { times: order, series })
}

/// Dense matrix file: one row per line, comma-separated, no header.
pub fn load_dense(path: &Path) -> CliResult<DMatrix<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dense(&text).map_err(|e| match e {
        CliError::Input(msg) => CliError::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_dense(text: &str) -> CliResult<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .enumerate()
        .map(|(i, line)| {
            line.split(',')
                .map(|f| {
                    let f = f.trim();
                    f.parse::<f64>()
                        .ok()
                        .filter(|x| x.is_finite())
                        .ok_or_else(|| CliError::Input(format!("line {}: `{f}` is not a finite number", i + 1)))
                })
                .collect()
        })
        .collect::<CliResult<_>>()?;
    let ncols = rows.first().map(Vec::len).ok_or_else(|| CliError::Input("matrix file is empty".into()))?;
    if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(CliError::Input(format!("line {}: expected {ncols} values", i + 1)));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}
