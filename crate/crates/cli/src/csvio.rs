//! CSV formats the CLI reads and writes: point clouds (`x0,...,x{d-1}`),
//! trajectories (`chain_id,node_index,t,x0,...`), and the sweep results
//! table parsed back for plotting.

use std::fs;
use std::path::Path;

use flowbridge_core::soc::ControlledTrajectory;
use flowbridge_core::{Error, Result};

/// Reads a point cloud: header `x0,...,x{d-1}`, one point per row.
pub fn read_point_cloud(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for (i, c) in cols.iter().enumerate() {
        if *c != format!("x{i}") {
            return Err(Error::Config(format!(
                "{}: expected header x0,...,x{}, found column {c:?}",
                path.display(),
                cols.len() - 1
            )));
        }
    }
    let dim = cols.len();
    let mut points = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), ln + 2))
            })?;
        if row.len() != dim {
            return Err(Error::Config(format!(
                "{}: line {}: expected {dim} values, got {}",
                path.display(),
                ln + 2,
                row.len()
            )));
        }
        points.push(row);
    }
    if points.is_empty() {
        return Err(Error::Config(format!("{}: no points", path.display())));
    }
    Ok(points)
}

pub fn point_cloud_csv(points: &[Vec<f64>]) -> String {
    let dim = points.first().map_or(0, Vec::len);
    let mut out = (0..dim).map(|i| format!("x{i}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for p in points {
        let row = p.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        out.push_str(&row);
        out.push('\n');
    }
    out
}

/// One row per node per chain: `chain_id,node_index,t,x0,...,x{d-1}`.
pub fn trajectories_csv(trajectories: &[ControlledTrajectory]) -> String {
    let dim = trajectories
        .first()
        .and_then(|tr| tr.states.first())
        .map_or(0, Vec::len);
    let mut out = String::from("chain_id,node_index,t");
    for i in 0..dim {
        out.push_str(&format!(",x{i}"));
    }
    out.push('\n');
    for (ci, tr) in trajectories.iter().enumerate() {
        for (ni, (t, x)) in tr.times.iter().zip(&tr.states).enumerate() {
            out.push_str(&format!("{ci},{ni},{t}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
    }
    out
}

/// One parsed results row, keeping only what plotting needs.
#[derive(Clone, Debug)]
pub struct ResultRow {
    pub model: String,
    pub difficulty: f64,
    pub n_train: usize,
    pub w2: f64,
    pub energy_distance: f64,
    pub path_energy: f64,
}

/// Parses the sweep results table by header name, so column order and
/// extra columns are both tolerated.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |name: &str| -> Result<usize> {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            Error::Config(format!("{}: missing column {name}", path.display()))
        })
    };
    let (im, id, inn) = (find("model")?, find("D")?, find("n_train")?);
    let (iw, ie, ip) = (find("w2")?, find("energy_distance")?, find("path_energy")?);
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Config(format!(
                "{}: line {}: expected {} fields, got {}",
                path.display(),
                ln + 2,
                cols.len(),
                fields.len()
            )));
        }
        let num = |ix: usize| -> Result<f64> {
            fields[ix].parse().map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), ln + 2))
            })
        };
        rows.push(ResultRow {
            model: fields[im].to_string(),
            difficulty: num(id)?,
            n_train: num(inn)? as usize,
            w2: num(iw)?,
            energy_distance: num(ie)?,
            path_energy: num(ip)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", path.display())));
    }
    Ok(rows)
}
