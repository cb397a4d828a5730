//! Snapshot, trace and activation-map files.
//!
//! Floats are written with Rust's shortest round-trip formatting, so reading
//! a file back reproduces the values bit for bit. Coordinates are in cm.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::SnapshotFormat;
use crate::error::{FpmError, Result};
use crate::geometry::Point;
use crate::post::{ActivationMap, ProbeTrace};

pub const TRACE_HEADER: &str = "t_ms,V_mV";

fn io_err(path: &Path, e: std::io::Error) -> FpmError {
    FpmError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FpmError {
    FpmError::Parse {
        source_name: path.display().to_string(),
        line,
        message: message.into(),
    }
}

pub fn snapshot_file_name(index: usize, format: SnapshotFormat) -> String {
    format!("snapshot_{index:06}.{}", format.extension())
}

/// Writes one snapshot into `dir` and returns its path.
pub fn write_snapshot(
    dir: &Path,
    positions: &[Point],
    dim: usize,
    v: &[f64],
    t: f64,
    index: usize,
    format: SnapshotFormat,
) -> Result<PathBuf> {
    if positions.len() != v.len() {
        return Err(FpmError::Contract(format!("{} points but {} values", positions.len(), v.len())));
    }
    let path = dir.join(snapshot_file_name(index, format));
    let text = match format {
        SnapshotFormat::Vtk => format_vtk(positions, v, t),
        SnapshotFormat::Csv => format_csv_snapshot(positions, dim, v),
    };
    write_file(&path, &text)?;
    Ok(path)
}

/// Legacy ASCII VTK unstructured grid with one vertex cell per point.
pub fn format_vtk(positions: &[Point], v: &[f64], t: f64) -> String {
    let n = positions.len();
    let mut s = String::with_capacity(64 * n);
    let _ = writeln!(s, "# vtk DataFile Version 3.0");
    let _ = writeln!(s, "fpm snapshot t_ms={t}");
    let _ = writeln!(s, "ASCII");
    let _ = writeln!(s, "DATASET UNSTRUCTURED_GRID");
    let _ = writeln!(s, "POINTS {n} double");
    for p in positions {
        let _ = writeln!(s, "{} {} {}", p.x, p.y, p.z);
    }
    let _ = writeln!(s, "CELLS {n} {}", 2 * n);
    for i in 0..n {
        let _ = writeln!(s, "1 {i}");
    }
    let _ = writeln!(s, "CELL_TYPES {n}");
    for _ in 0..n {
        let _ = writeln!(s, "1");
    }
    let _ = writeln!(s, "POINT_DATA {n}");
    let _ = writeln!(s, "SCALARS V double 1");
    let _ = writeln!(s, "LOOKUP_TABLE default");
    for x in v {
        let _ = writeln!(s, "{x}");
    }
    s
}

fn coord_header(dim: usize) -> &'static str {
    if dim == 3 {
        "x,y,z"
    } else {
        "x,y"
    }
}

pub fn format_csv_snapshot(positions: &[Point], dim: usize, v: &[f64]) -> String {
    let mut s = String::with_capacity(48 * positions.len());
    let _ = writeln!(s, "{},V", coord_header(dim));
    for (p, x) in positions.iter().zip(v) {
        for k in 0..dim {
            let _ = write!(s, "{},", p[k]);
        }
        let _ = writeln!(s, "{x}");
    }
    s
}

/// Points and scalar values of a VTK snapshot written by [`format_vtk`].
pub fn read_vtk_snapshot(path: &Path) -> Result<(Vec<Point>, Vec<f64>)> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let mut points = Vec::new();
    let mut values = Vec::new();
    while let Some((ln, line)) = lines.next() {
        let mut words = line.split_whitespace();
        match words.next() {
            Some("POINTS") => {
                let n: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| parse_err(path, ln, "bad POINTS header"))?;
                for _ in 0..n {
                    let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated POINTS"))?;
                    let c = parse_floats(l, false).map_err(|m| parse_err(path, ln, m))?;
                    if c.len() != 3 {
                        return Err(parse_err(path, ln, "expected three coordinates"));
                    }
                    points.push(Point::new(c[0], c[1], c[2]));
                }
            }
            Some("LOOKUP_TABLE") => {
                for _ in 0..points.len() {
                    let (ln, l) = lines.next().ok_or_else(|| parse_err(path, ln, "truncated POINT_DATA"))?;
                    values.push(l.parse::<f64>().map_err(|e| parse_err(path, ln, e.to_string()))?);
                }
            }
            _ => {}
        }
    }
    if values.len() != points.len() {
        return Err(parse_err(path, 0, "no point data"));
    }
    Ok((points, values))
}

fn parse_floats(line: &str, comma: bool) -> std::result::Result<Vec<f64>, String> {
    let parts: Box<dyn Iterator<Item = &str>> = if comma {
        Box::new(line.split(','))
    } else {
        Box::new(line.split_whitespace())
    };
    parts
        .map(|w| w.trim().parse::<f64>().map_err(|e| format!("bad number '{w}': {e}")))
        .collect()
}

/// Rows of a CSV file with a header line, parsed as floats.
fn read_csv_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = read_file(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == header => {}
        Some((_, h)) => return Err(parse_err(path, 1, format!("expected header '{header}', found '{}'", h.trim()))),
        None => return Err(parse_err(path, 1, "empty file")),
    }
    let width = header.split(',').count();
    let mut rows = Vec::new();
    for (i, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let vals = parse_floats(l, true).map_err(|m| parse_err(path, i + 1, m))?;
        if vals.len() != width {
            return Err(parse_err(path, i + 1, format!("expected {width} columns, found {}", vals.len())));
        }
        rows.push((i + 1, vals));
    }
    Ok(rows)
}

pub fn read_csv_snapshot(path: &Path, dim: usize) -> Result<(Vec<Point>, Vec<f64>)> {
    let rows = read_csv_rows(path, &format!("{},V", coord_header(dim)))?;
    let mut pts = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    for (_, r) in rows {
        let mut p = Point::zeros();
        for k in 0..dim {
            p[k] = r[k];
        }
        pts.push(p);
        v.push(r[dim]);
    }
    Ok((pts, v))
}

pub fn trace_file_name(name: &str) -> String {
    format!("probe_{name}.csv")
}

pub fn write_trace(dir: &Path, trace: &ProbeTrace) -> Result<PathBuf> {
    let path = dir.join(trace_file_name(&trace.name));
    let mut s = String::with_capacity(32 * trace.len());
    let _ = writeln!(s, "{TRACE_HEADER}");
    for (t, v) in trace.times.iter().zip(&trace.values) {
        let _ = writeln!(s, "{t},{v}");
    }
    write_file(&path, &s)?;
    Ok(path)
}

/// Reads a trace file; the node index is not stored and is set to 0.
pub fn read_trace(path: &Path, name: &str) -> Result<ProbeTrace> {
    let mut tr = ProbeTrace::new(name, 0);
    for (_, r) in read_csv_rows(path, TRACE_HEADER)? {
        tr.push(r[0], r[1]);
    }
    tr.validate()?;
    Ok(tr)
}

pub fn lat_header(dim: usize) -> String {
    format!("node,{},lat_ms", coord_header(dim))
}

pub fn write_lat(path: &Path, positions: &[Point], dim: usize, map: &ActivationMap) -> Result<()> {
    let mut s = String::with_capacity(48 * positions.len());
    let _ = writeln!(s, "{}", lat_header(dim));
    for (i, (p, lat)) in positions.iter().zip(&map.lat).enumerate() {
        let _ = write!(s, "{i},");
        for k in 0..dim {
            let _ = write!(s, "{},", p[k]);
        }
        let _ = writeln!(s, "{lat}");
    }
    write_file(path, &s)
}

/// Positions and LAT values of a file written by [`write_lat`]; nodes must
/// appear in order.
pub fn read_lat(path: &Path, dim: usize) -> Result<(Vec<Point>, Vec<f64>)> {
    let rows = read_csv_rows(path, &lat_header(dim))?;
    let mut pts = Vec::with_capacity(rows.len());
    let mut lat = Vec::with_capacity(rows.len());
    for (i, (ln, r)) in rows.into_iter().enumerate() {
        if r[0] != i as f64 {
            return Err(parse_err(path, ln, format!("expected node {i}")));
        }
        let mut p = Point::zeros();
        for k in 0..dim {
            p[k] = r[1 + k];
        }
        pts.push(p);
        lat.push(r[1 + dim]);
    }
    Ok((pts, lat))
}
