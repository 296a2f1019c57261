use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{Format, RunConfig};
use crate::energy::EnergySample;
use crate::error::{Error, Result};
use crate::experiments::{SweepPoint, ZenoSchedule};
use crate::hds::Trajectory;
use crate::schrodinger::SpinorTrajectory;

pub const SCHEMA_VERSION: u32 = 1;

/// A named numeric table with scalar metadata. Non-finite cells are allowed.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTable {
    pub kind: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub meta: BTreeMap<String, f64>,
}

impl DataTable {
    pub fn new(kind: &str, columns: &[&str]) -> Self {
        DataTable { kind: kind.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.into(), value);
        self
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    /// Bitwise equality, so NaN cells compare equal to NaN.
    pub fn same_bits(&self, other: &DataTable) -> bool {
        let bits = |t: &DataTable| -> Vec<Vec<u64>> {
            t.rows.iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect()
        };
        let meta = |t: &DataTable| -> Vec<(String, u64)> {
            t.meta.iter().map(|(k, v)| (k.clone(), v.to_bits())).collect()
        };
        self.kind == other.kind
            && self.columns == other.columns
            && bits(self) == bits(other)
            && meta(self) == meta(other)
    }
}

/// 17 significant digits; parses back to the same bits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Serialize, Deserialize)]
struct JsonDocument {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    config: serde_json::Value,
    #[serde(default)]
    meta: BTreeMap<String, Option<f64>>,
    columns: Vec<String>,
    rows: Vec<Vec<Option<f64>>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

pub fn to_csv_string(table: &DataTable, config: Option<&RunConfig>) -> Result<String> {
    let mut out = Vec::new();
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(out, "# kind={}", table.kind)?;
    if let Some(c) = config {
        writeln!(out, "# config={}", serde_json::to_string(c)?)?;
    }
    for (k, v) in &table.meta {
        writeln!(out, "# meta.{k}={}", format_float(*v))?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(&table.columns).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row.iter().map(|v| format_float(*v))).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(out).expect("csv output is ASCII"))
}

pub fn to_json_string(table: &DataTable, config: Option<&RunConfig>) -> Result<String> {
    let doc = JsonDocument {
        schema_version: SCHEMA_VERSION,
        kind: table.kind.clone(),
        config: match config {
            Some(c) => serde_json::to_value(c)?,
            None => serde_json::Value::Null,
        },
        meta: table.meta.iter().map(|(k, v)| (k.clone(), finite(*v))).collect(),
        columns: table.columns.clone(),
        rows: table.rows.iter().map(|r| r.iter().map(|v| finite(*v)).collect()).collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Parse { line, msg: e.to_string() }
}

pub fn from_csv_str(text: &str) -> Result<DataTable> {
    let mut table = DataTable::default();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix('#') else { continue };
        let Some((key, value)) = rest.trim().split_once('=') else { continue };
        let bad = |msg: String| Error::Parse { line: i + 1, msg };
        match key {
            "schema_version" => {
                let v: u32 = value.parse().map_err(|_| bad(format!("schema version {value:?}")))?;
                if v != SCHEMA_VERSION {
                    return Err(bad(format!("unsupported schema version {v}")));
                }
            }
            "kind" => table.kind = value.to_string(),
            k if k.starts_with("meta.") => {
                let v = value.parse().map_err(|_| bad(format!("meta value {value:?}")))?;
                table.meta.insert(k["meta.".len()..].to_string(), v);
            }
            _ => {}
        }
    }
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    table.columns = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if table.columns.is_empty() || table.columns.iter().all(|c| c.is_empty()) {
        return Err(Error::Parse { line: 0, msg: "missing header row".into() });
    }
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let row = record
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("{f:?} is not a number") }))
            .collect::<Result<Vec<_>>>()?;
        table.rows.push(row);
    }
    Ok(table)
}

pub fn from_json_str(text: &str) -> Result<DataTable> {
    let doc: JsonDocument = serde_json::from_str(text)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(Error::Parse { line: 1, msg: format!("unsupported schema version {}", doc.schema_version) });
    }
    let nan = |v: Option<f64>| v.unwrap_or(f64::NAN);
    Ok(DataTable {
        kind: doc.kind,
        columns: doc.columns,
        rows: doc.rows.into_iter().map(|r| r.into_iter().map(nan).collect()).collect(),
        meta: doc.meta.into_iter().map(|(k, v)| (k, nan(v))).collect(),
    })
}

/// Writes `<dir>/<stem>.<ext>` and returns the path.
pub fn write_table(dir: &Path, stem: &str, table: &DataTable, format: Format, config: Option<&RunConfig>) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{stem}.{}", format.extension()));
    let text = match format {
        Format::Csv => to_csv_string(table, config)?,
        Format::Json => to_json_string(table, config)?,
    };
    fs::write(&path, text)?;
    Ok(path)
}

/// Reads a table, choosing the format from the file extension.
pub fn read_table(path: &Path) -> Result<DataTable> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => from_json_str(&text),
        _ => from_csv_str(&text),
    }
}

pub fn trajectory_table(traj: &Trajectory) -> DataTable {
    let mut t = DataTable::new("trajectory", &["tau", "alpha", "delta", "theta", "h", "drive"]);
    for (i, (&tau, s)) in traj.taus.iter().zip(&traj.states).enumerate() {
        t.push(vec![tau, s.alpha, s.delta, s.theta_overall, traj.hamiltonian(i), traj.drive.eval(tau)]);
    }
    t
}

pub fn energy_table(series: &[EnergySample]) -> DataTable {
    let mut t = DataTable::new(
        "energy",
        &["tau", "h", "e_a", "e_b", "sigma_a", "sigma_b", "v_expect", "sigma_q", "drive", "alpha"],
    );
    for s in series {
        t.push(vec![
            s.tau, s.h_mean, s.e_a, s.e_b, s.sigma_a, s.sigma_b, s.v_expect, s.sigma_q, s.drive_value, s.alpha,
        ]);
    }
    t
}

pub fn spinor_table(traj: &SpinorTrajectory) -> DataTable {
    let mut t = DataTable::new("spinor", &["tau", "re_a", "im_a", "re_b", "im_b", "norm_sqr"]);
    for (&tau, p) in traj.taus.iter().zip(&traj.states) {
        t.push(vec![tau, p.psi_a.re, p.psi_a.im, p.psi_b.re, p.psi_b.im, p.norm_sqr()]);
    }
    t
}

/// One row per segment; a segment without a jump has NaN jump and window cells.
pub fn schedule_table(s: &ZenoSchedule) -> DataTable {
    let mut t = DataTable::new(
        "zeno_schedule",
        &["segment", "freeze_level", "tau_start", "tau_jump", "window_lower", "window_upper"],
    )
    .with_meta("amplitude", s.amplitude)
    .with_meta("delta_tau_min", s.delta_tau_min.unwrap_or(f64::INFINITY));
    let half = s.delta_tau_min.unwrap_or(f64::NAN) / 2.0;
    for (i, seg) in s.segments.iter().enumerate() {
        let j = seg.tau_jump.unwrap_or(f64::NAN);
        t.push(vec![i as f64, seg.freeze_level as f64, seg.tau_start, j, j - half, j + half]);
    }
    t
}

pub fn sweep_table(points: &[SweepPoint]) -> DataTable {
    let mut t = DataTable::new(
        "sweep",
        &["amplitude", "envelope_residual", "delta_h_max", "delta_h_max_over_amplitude", "delta_tau_min", "exceedance_fraction"],
    );
    for p in points {
        t.push(vec![
            p.amplitude,
            p.envelope_residual,
            p.delta_h_max,
            p.delta_h_max_over_amplitude,
            p.delta_tau_min,
            p.exceedance_fraction,
        ]);
    }
    t
}
