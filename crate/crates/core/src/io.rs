//! On-disk formats.
//!
//! A field is a CSV (one row per cell: index coordinates, then value) next to
//! a JSON header with the same stem holding dims, spacing and control mask.
//! A series is a directory of such CSVs with a `manifest.json` listing times;
//! a trajectory directory stores `u` and `v` in one CSV per saved level.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::energy::EnergyReport;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::model::ModelParams;
use crate::opt::OptimizationTrace;
use crate::series::{Control, FieldSeries};
use crate::sim::{State, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub dims: Vec<usize>,
    pub spacing: Vec<f64>,
    pub control_mask: Vec<bool>,
}

impl GridHeader {
    pub fn from_grid(g: &Grid) -> Self {
        GridHeader {
            dims: g.dims().to_vec(),
            spacing: g.spacing().to_vec(),
            control_mask: g.control_mask().to_vec(),
        }
    }

    pub fn to_grid(&self) -> Result<Grid> {
        Grid::with_mask(self.dims.clone(), self.spacing.clone(), self.control_mask.clone())
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::data(path, format!("cannot serialize: {e}")))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::data(path, e.to_string()))
}

fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::data(path, e.to_string()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::data(path, e.to_string())
}

/// Writes rows `coords..., columns...` for every cell.
fn write_cells(path: &Path, grid: &Grid, names: &[&str], columns: &[&[f64]]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header: Vec<String> = (0..grid.ndim()).map(|a| format!("i{a}")).collect();
    header.extend(names.iter().map(|s| s.to_string()));
    w.write_record(&header).map_err(csv_err(path))?;
    for cell in 0..grid.len() {
        let mut rec: Vec<String> = grid.coords(cell).iter().map(|c| c.to_string()).collect();
        rec.extend(columns.iter().map(|col| col[cell].to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads the value columns of a cell CSV; every cell must appear exactly once.
fn read_cells(path: &Path, grid: &Grid, ncols: usize) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::data(path, "file not found or unreadable"),
        _ => Error::data(path, e.to_string()),
    })?;
    let d = grid.ndim();
    let mut out = vec![vec![f64::NAN; grid.len()]; ncols];
    let mut seen = vec![false; grid.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        if rec.len() != d + ncols {
            return Err(Error::data(
                path,
                format!("row {}: expected {} columns, got {}", line + 1, d + ncols, rec.len()),
            ));
        }
        let mut coords = Vec::with_capacity(d);
        for a in 0..d {
            let c: usize = rec[a].trim().parse().map_err(|_| {
                Error::data(path, format!("row {}: bad index {:?}", line + 1, &rec[a]))
            })?;
            if c >= grid.dims()[a] {
                return Err(Error::data(path, format!("row {}: index {c} out of range", line + 1)));
            }
            coords.push(c);
        }
        let cell = grid.index(&coords);
        if seen[cell] {
            return Err(Error::data(path, format!("row {}: duplicate cell {coords:?}", line + 1)));
        }
        seen[cell] = true;
        for (k, col) in out.iter_mut().enumerate() {
            let x: f64 = rec[d + k].trim().parse().map_err(|_| {
                Error::data(path, format!("row {}: bad value {:?}", line + 1, &rec[d + k]))
            })?;
            if !x.is_finite() {
                return Err(Error::data(path, format!("row {}: non-finite value", line + 1)));
            }
            col[cell] = x;
        }
    }
    if let Some(cell) = seen.iter().position(|s| !s) {
        return Err(Error::data(path, format!("missing cell {:?}", grid.coords(cell))));
    }
    Ok(out)
}

/// Writes `path` (CSV) and its JSON header.
pub fn write_field(path: &Path, field: &Field) -> Result<()> {
    write_cells(path, field.grid(), &["value"], &[field.values()])?;
    write_json(&header_path(path), &GridHeader::from_grid(field.grid()))
}

/// Reads a field and builds its grid from the JSON header.
pub fn read_field(path: &Path) -> Result<Field> {
    let header: GridHeader = read_json(&header_path(path))?;
    let grid = Arc::new(header.to_grid().map_err(|e| Error::data(header_path(path), e.to_string()))?);
    read_field_on(path, &grid)
}

/// Reads a field CSV onto an existing grid; the header, if present, must
/// agree on dims.
pub fn read_field_on(path: &Path, grid: &Arc<Grid>) -> Result<Field> {
    let hp = header_path(path);
    if hp.exists() {
        let header: GridHeader = read_json(&hp)?;
        if header.dims != grid.dims() {
            return Err(Error::data(
                path,
                format!("dims {:?} do not match the grid {:?}", header.dims, grid.dims()),
            ));
        }
    }
    let mut cols = read_cells(path, grid, 1)?;
    Field::new(grid.clone(), cols.remove(0)).map_err(|e| Error::data(path, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesManifest {
    pub times: Vec<f64>,
    pub files: Vec<String>,
    pub grid: GridHeader,
}

pub fn write_series(dir: &Path, series: &FieldSeries) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(series.len());
    for (k, f) in series.fields().iter().enumerate() {
        let name = format!("level_{k:04}.csv");
        write_cells(&dir.join(&name), f.grid(), &["value"], &[f.values()])?;
        files.push(name);
    }
    write_json(
        &dir.join("manifest.json"),
        &SeriesManifest {
            times: series.times().to_vec(),
            files,
            grid: GridHeader::from_grid(series.grid()),
        },
    )
}

/// Reads a series directory; `grid` overrides the stored header (dims must
/// agree).
pub fn read_series(dir: &Path, grid: Option<&Arc<Grid>>) -> Result<FieldSeries> {
    let mpath = dir.join("manifest.json");
    let m: SeriesManifest = read_json(&mpath)?;
    let grid = match grid {
        Some(g) => {
            if g.dims() != m.grid.dims {
                return Err(Error::data(&mpath, "dims do not match the configured grid"));
            }
            g.clone()
        }
        None => Arc::new(m.grid.to_grid().map_err(|e| Error::data(&mpath, e.to_string()))?),
    };
    if m.files.len() != m.times.len() {
        return Err(Error::data(&mpath, "times and files differ in length"));
    }
    let fields = m
        .files
        .iter()
        .map(|f| {
            let p = dir.join(f);
            let mut c = read_cells(&p, &grid, 1)?;
            Field::new(grid.clone(), c.remove(0)).map_err(|e| Error::data(&p, e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    FieldSeries::new(grid, m.times, fields).map_err(|e| Error::data(&mpath, e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    /// Seconds since the Unix epoch; the only non-reproducible field.
    pub created_unix: u64,
    pub times: Vec<f64>,
    pub step_times: Vec<f64>,
    pub dts: Vec<f64>,
    pub params: ModelParams,
    pub rejected_steps: usize,
    pub violations: Vec<String>,
    pub levels: Vec<String>,
    pub control_dir: String,
    pub grid: GridHeader,
}

pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let grid = traj.grid();
    let mut levels = Vec::with_capacity(traj.states.len());
    for (k, s) in traj.states.iter().enumerate() {
        let name = format!("level_{k:04}.csv");
        write_cells(&dir.join(&name), grid, &["u", "v"], &[s.u.values(), s.v.values()])?;
        levels.push(name);
    }
    write_series(&dir.join("control"), traj.control.series())?;
    let created_unix = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_json(
        &dir.join("manifest.json"),
        &TrajectoryManifest {
            created_unix,
            times: traj.times(),
            step_times: traj.step_times.clone(),
            dts: traj.dts(),
            params: traj.params.clone(),
            rejected_steps: traj.rejected_steps,
            violations: traj.violations.clone(),
            levels,
            control_dir: "control".into(),
            grid: GridHeader::from_grid(grid),
        },
    )
}

pub fn read_trajectory(dir: &Path) -> Result<Trajectory> {
    let mpath = dir.join("manifest.json");
    let m: TrajectoryManifest = read_json(&mpath)?;
    let grid = Arc::new(m.grid.to_grid().map_err(|e| Error::data(&mpath, e.to_string()))?);
    if m.levels.len() != m.times.len() || m.levels.is_empty() {
        return Err(Error::data(&mpath, "levels and times differ in length"));
    }
    if m.times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::data(&mpath, "times must be strictly increasing"));
    }
    let mut states = Vec::with_capacity(m.levels.len());
    for (name, &t) in m.levels.iter().zip(&m.times) {
        let p = dir.join(name);
        let mut cols = read_cells(&p, &grid, 2)?;
        let v = cols.pop().expect("two columns");
        let u = cols.pop().expect("two columns");
        let state = Field::new(grid.clone(), u)
            .and_then(|u| Ok((u, Field::new(grid.clone(), v)?)))
            .and_then(|(u, v)| State::new(u, v, t))
            .map_err(|e| Error::data(&p, e.to_string()))?;
        states.push(state);
    }
    let control = Control::new(read_series(&dir.join(&m.control_dir), Some(&grid))?);
    m.params
        .validate()
        .map_err(|e| Error::data(&mpath, e.to_string()))?;
    Ok(Trajectory {
        states,
        control,
        params: m.params,
        step_times: m.step_times,
        rejected_steps: m.rejected_steps,
        violations: m.violations,
    })
}

pub fn write_trace_csv(path: &Path, trace: &OptimizationTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in &trace.rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    if trace.rows.is_empty() {
        w.write_record(["start", "iter", "trial", "j", "j_u", "j_v", "j_f", "fnorm", "step", "accepted"])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `t1,t2,residual` for every saved pair.
pub fn write_residual_csv(path: &Path, report: &EnergyReport, beta: f64, k: f64) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["t1", "t2", "residual"]).map_err(csv_err(path))?;
    for (t1, t2, r) in report.residual_pairs(beta, k) {
        w.write_record([t1.to_string(), t2.to_string(), r.to_string()])
            .map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes any serializable rows (with a header from the field names).
pub fn write_rows_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
