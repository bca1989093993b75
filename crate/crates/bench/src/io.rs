//! Dataset CSV with a JSON sidecar, and the result table.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dpadapt::{Dataset64, LossKind};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

/// Metadata stored next to `data.csv` as `data.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub loss: LossKind,
    pub x_star: Option<Vec<f64>>,
    #[serde(default)]
    pub sigma: Option<Vec<f64>>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| BenchError::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| BenchError::format(path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| BenchError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> BenchError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => BenchError::io(path, io),
            other => BenchError::format(path, format!("{other:?}")),
        }
    } else {
        BenchError::format(path, e)
    }
}

/// Writes `f0..f{d−1}[,y]` rows and the sidecar.
pub fn write_dataset(path: &Path, data: &Dataset64, sidecar: &Sidecar) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let d = data.dim();
    let mut header: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let targets = data.targets();
    if targets.is_some() {
        header.push("y".into());
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    let mut rec = Vec::with_capacity(d + 1);
    for (i, row) in data.rows().enumerate() {
        rec.clear();
        rec.extend(row.iter().map(|v| v.to_string()));
        if let Some(t) = targets {
            rec.push(t[i].to_string());
        }
        w.write_record(&rec).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))?;
    write_json(&sidecar_path(path), sidecar)
}

/// Reads a dataset; the sidecar is optional.
pub fn read_dataset(path: &Path) -> Result<(Dataset64, Option<Sidecar>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
    let has_y = header.iter().last() == Some("y");
    let d = header.len() - usize::from(has_y);
    for (j, name) in header.iter().take(d).enumerate() {
        if name != format!("f{j}") {
            return Err(BenchError::format(path, format!("expected column f{j}, found {name:?}")));
        }
    }
    let mut features = Vec::new();
    let mut targets = Vec::new();
    let mut n = 0;
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| BenchError::format(path, format!("row {}: bad number {field:?}", n + 1)))?;
            if has_y && j == d {
                targets.push(v);
            } else {
                features.push(v);
            }
        }
        n += 1;
    }
    let data = Dataset64::new(n, d, features, has_y.then_some(targets)).map_err(|e| BenchError::format(path, e))?;
    let side = sidecar_path(path);
    let sidecar: Option<Sidecar> = if side.exists() {
        let text = std::fs::read_to_string(&side).map_err(|e| BenchError::io(&side, e))?;
        Some(serde_json::from_str(&text).map_err(|e| BenchError::format(&side, e))?)
    } else {
        None
    };
    let data = match sidecar.as_ref().and_then(|s| s.x_star.clone()) {
        Some(x) => data.with_x_star(x).map_err(|e| BenchError::format(&side, e))?,
        None => data,
    };
    Ok((data, sidecar))
}

/// One evaluated iteration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    /// `inf` for non-private methods.
    pub epsilon: f64,
    pub stepsize: f64,
    /// Empty for unclipped methods.
    pub clip_bound: Option<f64>,
    pub rep: usize,
    pub seed: u64,
    pub iteration: usize,
    pub loss: f64,
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| BenchError::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: ResultRow = rec.map_err(|e| csv_err(path, e))?;
        if !row.loss.is_finite() {
            return Err(BenchError::format(path, format!("non-finite loss in {} rep {}", row.method, row.rep)));
        }
        rows.push(row);
    }
    Ok(rows)
}
