//! Run outputs: the per-step CSV time series, legacy-ASCII VTK field
//! snapshots, and checkpoints (a VTK snapshot plus a JSON sidecar of
//! scalars). All floats are written in shortest round-trip form, so
//! re-reading reproduces them bit-exactly.

use super::run::FieldState;
use crate::fem::Rt0P0Space;
use crate::geo::Point3;
use crate::mesh::Mesh;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum OutputError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: malformed {what} at line {line}")]
    Malformed {
        path: String,
        what: &'static str,
        line: usize,
    },
    #[error("{1}: missing field {0}")]
    MissingField(&'static str, String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> OutputError + '_ {
    move |source| OutputError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One record of the time series; volume integrals for the totals, nodal
/// extrema for the minima and diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub t_days: f64,
    pub corg_total: f64,
    pub b_total: f64,
    pub t_mean_k: f64,
    pub t_max_k: f64,
    pub m_total: f64,
    pub cdx_total: f64,
    pub h_total: f64,
    pub w_total: f64,
    pub min_corg: f64,
    pub min_m: f64,
    pub min_cdx: f64,
    pub min_h: f64,
    pub min_w: f64,
    pub cg_iters_total: u64,
}

pub const CSV_HEADER: &str = "t_days,corg_total,b_total,T_mean_K,T_max_K,M_total,Cdx_total,h_total,w_total,min_corg,min_M,min_Cdx,min_h,min_w,cg_iters_total";

/// Per-step diagnostics that accompany the CSV columns but are not part
/// of the file format.
#[derive(Debug, Clone, Default)]
pub struct StepDiagnostics {
    /// Nodes where the temperature-activity law vanished this step.
    pub psi2_frozen_nodes: usize,
    /// Largest carbon change on those nodes (should be exactly zero).
    pub frozen_max_dcorg: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TimeSeries {
    pub records: Vec<Record>,
    pub diagnostics: Vec<StepDiagnostics>,
}

impl TimeSeries {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t_days,
                r.corg_total,
                r.b_total,
                r.t_mean_k,
                r.t_max_k,
                r.m_total,
                r.cdx_total,
                r.h_total,
                r.w_total,
                r.min_corg,
                r.min_m,
                r.min_cdx,
                r.min_h,
                r.min_w,
                r.cg_iters_total
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), OutputError> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir).map_err(io_err(path))?;
            }
        }
        std::fs::write(path, self.to_csv()).map_err(io_err(path))
    }
}

/// Parses a CSV produced by [`TimeSeries::to_csv`]; the round trip is
/// bit-exact.
pub fn parse_csv(text: &str, path: &str) -> Result<TimeSeries, OutputError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        _ => {
            return Err(OutputError::Malformed {
                path: path.to_string(),
                what: "CSV header",
                line: 1,
            })
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(OutputError::Malformed {
                path: path.to_string(),
                what: "CSV row",
                line: i + 1,
            });
        }
        let f = |k: usize| -> Result<f64, OutputError> {
            fields[k].parse().map_err(|_| OutputError::Malformed {
                path: path.to_string(),
                what: "number",
                line: i + 1,
            })
        };
        records.push(Record {
            t_days: f(0)?,
            corg_total: f(1)?,
            b_total: f(2)?,
            t_mean_k: f(3)?,
            t_max_k: f(4)?,
            m_total: f(5)?,
            cdx_total: f(6)?,
            h_total: f(7)?,
            w_total: f(8)?,
            min_corg: f(9)?,
            min_m: f(10)?,
            min_cdx: f(11)?,
            min_h: f(12)?,
            min_w: f(13)?,
            cg_iters_total: fields[14].parse().map_err(|_| OutputError::Malformed {
                path: path.to_string(),
                what: "iteration count",
                line: i + 1,
            })?,
        });
    }
    Ok(TimeSeries {
        records,
        diagnostics: Vec::new(),
    })
}

/// Point-data scalars written to every snapshot, in order.
const POINT_SCALARS: [&str; 7] = ["Corg", "b", "T", "M", "Cdx", "h", "w"];
/// Extra scalars carried only by checkpoints.
const CHECKPOINT_SCALARS: [&str; 2] = ["O", "N"];

fn state_field<'a>(state: &'a FieldState, name: &str) -> &'a [f64] {
    match name {
        "Corg" => &state.corg,
        "b" => &state.b,
        "T" => &state.temp,
        "M" => &state.m,
        "Cdx" => &state.cdx,
        "h" => &state.h,
        "w" => &state.w,
        "O" => &state.o,
        "N" => &state.n,
        _ => unreachable!("unknown field {name}"),
    }
}

/// Serializes the state on a mesh as legacy ASCII VTK UNSTRUCTURED_GRID:
/// point scalars for the transported fields, the cell pressure and the
/// velocity reconstructed at points by averaging the RT0 field over the
/// incident tets.
pub fn vtk_string(mesh: &Mesh, state: &FieldState, rt0: Option<&Rt0P0Space>, checkpoint: bool) -> String {
    let n = mesh.nvertices();
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str("alveolus fields\n");
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {n} double");
    for v in &mesh.vertices {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    let m = mesh.ntets();
    let _ = writeln!(out, "CELLS {m} {}", 5 * m);
    for t in &mesh.tets {
        let _ = writeln!(out, "4 {} {} {} {}", t[0], t[1], t[2], t[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {m}");
    for _ in 0..m {
        out.push_str("10\n");
    }
    let _ = writeln!(out, "POINT_DATA {n}");
    let scalars: Vec<&str> = POINT_SCALARS
        .iter()
        .chain(if checkpoint { CHECKPOINT_SCALARS.iter() } else { [].iter() })
        .copied()
        .collect();
    for name in scalars {
        let _ = writeln!(out, "SCALARS {name} double 1");
        out.push_str("LOOKUP_TABLE default\n");
        for v in state_field(state, name) {
            let _ = writeln!(out, "{v}");
        }
    }
    // Velocity at points: average of the RT0 field over incident tets.
    let _ = writeln!(out, "VECTORS u double");
    let velocities = match rt0 {
        Some(space) if !state.fluxes.is_empty() => point_velocities(mesh, space, &state.fluxes),
        _ => vec![[0.0; 3]; n],
    };
    for v in velocities {
        let _ = writeln!(out, "{} {} {}", v[0], v[1], v[2]);
    }
    let _ = writeln!(out, "CELL_DATA {m}");
    out.push_str("SCALARS p double 1\nLOOKUP_TABLE default\n");
    if state.pressure.len() == m {
        for v in &state.pressure {
            let _ = writeln!(out, "{v}");
        }
    } else {
        for _ in 0..m {
            out.push_str("0\n");
        }
    }
    out
}

fn point_velocities(mesh: &Mesh, space: &Rt0P0Space, fluxes: &[f64]) -> Vec<Point3> {
    let mut acc = vec![[0.0f64; 3]; mesh.nvertices()];
    let mut count = vec![0u32; mesh.nvertices()];
    for (k, tet) in mesh.tets.iter().enumerate() {
        for &v in tet {
            let u = space.eval(fluxes, k, mesh.vertices[v]);
            for d in 0..3 {
                acc[v][d] += u[d];
            }
            count[v] += 1;
        }
    }
    for (a, c) in acc.iter_mut().zip(count) {
        if c > 0 {
            for d in 0..3 {
                a[d] /= c as f64;
            }
        }
    }
    acc
}

pub fn write_vtk(
    mesh: &Mesh,
    state: &FieldState,
    rt0: Option<&Rt0P0Space>,
    path: &Path,
) -> Result<(), OutputError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(path))?;
        }
    }
    std::fs::write(path, vtk_string(mesh, state, rt0, false)).map_err(io_err(path))
}

/// Checkpoint: VTK snapshot (with the oxygen/nitrogen extras) plus a JSON
/// sidecar holding the time level.
pub fn write_checkpoint(
    mesh: &Mesh,
    state: &FieldState,
    rt0: Option<&Rt0P0Space>,
    t_days: f64,
    step: usize,
    path: &Path,
) -> Result<(), OutputError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(io_err(path))?;
        }
    }
    std::fs::write(path, vtk_string(mesh, state, rt0, true)).map_err(io_err(path))?;
    let sidecar = path.with_extension("json");
    let meta = serde_json::json!({ "t_days": t_days, "step": step });
    std::fs::write(&sidecar, serde_json::to_string_pretty(&meta).unwrap())
        .map_err(io_err(&sidecar))
}

/// Restores a checkpoint written by [`write_checkpoint`].
pub fn load_checkpoint(mesh: &Mesh, path: &Path) -> Result<(FieldState, f64, usize), OutputError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let pstr = path.display().to_string();
    let n = mesh.nvertices();
    let mut fields: std::collections::HashMap<String, Vec<f64>> = Default::default();
    let mut pressure = Vec::new();
    let mut lines = text.lines().enumerate().peekable();
    let mut in_cell_data = false;
    while let Some((i, line)) = lines.next() {
        let line = line.trim();
        if line.starts_with("CELL_DATA") {
            in_cell_data = true;
            continue;
        }
        if let Some(rest) = line.strip_prefix("SCALARS ") {
            let name = rest.split_whitespace().next().unwrap_or("").to_string();
            // LOOKUP_TABLE line follows.
            lines.next();
            let count = if in_cell_data { mesh.ntets() } else { n };
            let mut values = Vec::with_capacity(count);
            for _ in 0..count {
                let (j, vline) = lines.next().ok_or(OutputError::Malformed {
                    path: pstr.clone(),
                    what: "scalar block",
                    line: i + 1,
                })?;
                values.push(vline.trim().parse().map_err(|_| OutputError::Malformed {
                    path: pstr.clone(),
                    what: "scalar value",
                    line: j + 1,
                })?);
            }
            if in_cell_data {
                pressure = values;
            } else {
                fields.insert(name, values);
            }
        }
    }
    let take = |name: &'static str| -> Result<Vec<f64>, OutputError> {
        fields
            .get(name)
            .cloned()
            .ok_or_else(|| OutputError::MissingField(name, pstr.clone()))
    };
    let state = FieldState {
        corg: take("Corg")?,
        b: take("b")?,
        temp: take("T")?,
        m: take("M")?,
        cdx: take("Cdx")?,
        o: take("O")?,
        n: take("N")?,
        h: take("h")?,
        w: take("w")?,
        pressure,
        fluxes: Vec::new(),
    };
    let sidecar = path.with_extension("json");
    let meta_text = std::fs::read_to_string(&sidecar).map_err(io_err(&sidecar))?;
    let meta: serde_json::Value =
        serde_json::from_str(&meta_text).map_err(|_| OutputError::Malformed {
            path: sidecar.display().to_string(),
            what: "checkpoint sidecar",
            line: 1,
        })?;
    let t_days = meta["t_days"].as_f64().ok_or(OutputError::Malformed {
        path: sidecar.display().to_string(),
        what: "t_days",
        line: 1,
    })?;
    let step = meta["step"].as_u64().ok_or(OutputError::Malformed {
        path: sidecar.display().to_string(),
        what: "step",
        line: 1,
    })? as usize;
    Ok((state, t_days, step))
}
