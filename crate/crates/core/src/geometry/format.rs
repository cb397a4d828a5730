//! Plain-text point and partition files.
//!
//! ```text
//! fpm-partition 1
//! dim 2
//! points 4
//! 0.25 0.25
//! ...
//! vertices 9            # optional from here on
//! 0 0
//! ...
//! cells 4
//! 4 0 1 4 3             # 2D: vertex loop (count, then indices)
//! facets 12
//! 0 1 2 1 4             # e1 e2 count indices; e2 = -1 on the boundary
//! ```
//!
//! In 3D each cell record is a face count on its own line followed by one
//! vertex-loop line per face. Coordinates are in cm. Lines starting with `#`
//! and blank lines are ignored. A bare list of coordinate tuples is accepted
//! as a points-only file by [`read_points`].

use std::fmt::Write as _;
use std::path::Path;

use super::{CellPartition, CellShape, FacetSpec, Point, PointCloud};
use crate::error::{FpmError, Result};

pub const PARTITION_MAGIC: &str = "fpm-partition 1";

struct Lines<'a> {
    name: String,
    iter: std::iter::Peekable<Box<dyn Iterator<Item = (usize, &'a str)> + 'a>>,
}

impl<'a> Lines<'a> {
    fn new(name: &str, text: &'a str) -> Self {
        let iter: Box<dyn Iterator<Item = (usize, &'a str)>> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
                .filter(|(_, l)| !l.is_empty()),
        );
        Self {
            name: name.to_string(),
            iter: iter.peekable(),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> FpmError {
        FpmError::Parse {
            source_name: self.name.clone(),
            line,
            message: message.into(),
        }
    }

    fn next(&mut self) -> Result<(usize, &'a str)> {
        let name = self.name.clone();
        self.iter.next().ok_or(FpmError::Parse {
            source_name: name,
            line: 0,
            message: "unexpected end of file".into(),
        })
    }

    fn peek(&mut self) -> Option<&(usize, &'a str)> {
        self.iter.peek()
    }

    fn header(&mut self, key: &str) -> Result<usize> {
        let (ln, line) = self.next()?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(ln, format!("expected `{key} <count>`")));
        }
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| self.err(ln, format!("`{key}` needs a non-negative integer")))
    }

    fn floats(&mut self, expected: usize) -> Result<Vec<f64>> {
        let (ln, line) = self.next()?;
        let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| self.err(ln, format!("bad number: {e}")))?;
        if vals.len() != expected {
            return Err(self.err(ln, format!("expected {expected} values, got {}", vals.len())));
        }
        Ok(vals)
    }

    fn ints(&mut self) -> Result<(usize, Vec<i64>)> {
        let (ln, line) = self.next()?;
        let vals: std::result::Result<Vec<i64>, _> = line.split_whitespace().map(str::parse).collect();
        vals.map(|v| (ln, v)).map_err(|e| self.err(ln, format!("bad integer: {e}")))
    }

    fn loop_record(&mut self) -> Result<Vec<usize>> {
        let (ln, v) = self.ints()?;
        let k = *v.first().ok_or_else(|| self.err(ln, "empty record"))?;
        if k < 0 || v.len() != k as usize + 1 || v[1..].iter().any(|&x| x < 0) {
            return Err(self.err(ln, "malformed vertex loop"));
        }
        Ok(v[1..].iter().map(|&x| x as usize).collect())
    }
}

fn to_point(dim: usize, c: &[f64]) -> Point {
    Point::new(c[0], c[1], if dim == 3 { c[2] } else { 0.0 })
}

/// Reads a points file: either the partition format (points section only is
/// used) or bare whitespace-separated coordinate tuples, one per line.
pub fn read_points(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path)?;
    parse_points(&path.display().to_string(), &text)
}

pub(crate) fn parse_points(name: &str, text: &str) -> Result<PointCloud> {
    let mut lines = Lines::new(name, text);
    if lines.peek().is_some_and(|l| l.1 == PARTITION_MAGIC) {
        lines.next()?;
        let dim = lines.header("dim")?;
        return read_point_section(&mut lines, dim);
    }
    let mut coords: Vec<Vec<f64>> = Vec::new();
    let mut dim = None;
    while lines.peek().is_some() {
        let ln = lines.peek().unwrap().0;
        let d = *dim.get_or_insert_with(|| lines.peek().unwrap().1.split_whitespace().count());
        if d != 2 && d != 3 {
            return Err(lines.err(ln, format!("coordinate tuples must have 2 or 3 entries, got {d}")));
        }
        coords.push(lines.floats(d)?);
    }
    PointCloud::from_coords(dim.unwrap_or(2), &coords)
}

fn read_point_section(lines: &mut Lines, dim: usize) -> Result<PointCloud> {
    if dim != 2 && dim != 3 {
        return Err(FpmError::Contract(format!("dimension must be 2 or 3, got {dim}")));
    }
    let n = lines.header("points")?;
    let coords = (0..n).map(|_| lines.floats(dim)).collect::<Result<Vec<_>>>()?;
    PointCloud::from_coords(dim, &coords)
}

/// Reads a full partition (points, vertices, cells, facets) and rebuilds all
/// derived geometry.
pub fn read_partition(path: &Path) -> Result<CellPartition> {
    let text = std::fs::read_to_string(path)?;
    parse_partition(&path.display().to_string(), &text)
}

pub(crate) fn parse_partition(name: &str, text: &str) -> Result<CellPartition> {
    let mut lines = Lines::new(name, text);
    let (ln, magic) = lines.next()?;
    if magic != PARTITION_MAGIC {
        return Err(lines.err(ln, format!("expected `{PARTITION_MAGIC}`")));
    }
    let dim = lines.header("dim")?;
    let cloud = read_point_section(&mut lines, dim)?;
    let nv = lines.header("vertices")?;
    let vertices = (0..nv)
        .map(|_| lines.floats(dim).map(|c| to_point(dim, &c)))
        .collect::<Result<Vec<_>>>()?;
    let nc = lines.header("cells")?;
    if nc != cloud.len() {
        return Err(lines.err(0, format!("{nc} cells for {} points", cloud.len())));
    }
    let mut shapes = Vec::with_capacity(nc);
    for _ in 0..nc {
        if dim == 2 {
            shapes.push(CellShape::Polygon(lines.loop_record()?));
        } else {
            let (ln, v) = lines.ints()?;
            if v.len() != 1 || v[0] < 4 {
                return Err(lines.err(ln, "expected a face count of at least 4"));
            }
            let faces = (0..v[0]).map(|_| lines.loop_record()).collect::<Result<Vec<_>>>()?;
            shapes.push(CellShape::Polyhedron(faces));
        }
    }
    let nf = lines.header("facets")?;
    let mut specs = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (ln, v) = lines.ints()?;
        if v.len() < 3 || v[0] < 0 || v[2] < 0 || v.len() != 3 + v[2] as usize || v[3..].iter().any(|&x| x < 0) {
            return Err(lines.err(ln, "malformed facet record"));
        }
        let e2 = if v[1] < 0 { None } else { Some(v[1] as usize) };
        specs.push(FacetSpec {
            cells: (v[0] as usize, e2),
            vertices: v[3..].iter().map(|&x| x as usize).collect(),
        });
    }
    if let Some(&(ln, _)) = lines.peek() {
        return Err(lines.err(ln, "trailing content after facets"));
    }
    CellPartition::from_parts(cloud, vertices, shapes, specs)
}

fn push_coords(out: &mut String, dim: usize, p: &Point) {
    if dim == 2 {
        let _ = writeln!(out, "{} {}", p.x, p.y);
    } else {
        let _ = writeln!(out, "{} {} {}", p.x, p.y, p.z);
    }
}

fn push_loop(out: &mut String, loop_: &[usize]) {
    let _ = write!(out, "{}", loop_.len());
    for v in loop_ {
        let _ = write!(out, " {v}");
    }
    out.push('\n');
}

/// Serializes a partition; shortest round-trip float formatting makes
/// export → import → export byte-identical.
pub fn format_partition(partition: &CellPartition) -> String {
    let dim = partition.dim();
    let mut out = String::new();
    let _ = writeln!(out, "{PARTITION_MAGIC}\ndim {dim}\npoints {}", partition.len());
    for p in partition.points() {
        push_coords(&mut out, dim, p);
    }
    let _ = writeln!(out, "vertices {}", partition.vertices().len());
    for v in partition.vertices() {
        push_coords(&mut out, dim, v);
    }
    let _ = writeln!(out, "cells {}", partition.len());
    for cell in partition.cells() {
        match &cell.shape {
            CellShape::Polygon(l) => push_loop(&mut out, l),
            CellShape::Polyhedron(faces) => {
                let _ = writeln!(out, "{}", faces.len());
                for f in faces {
                    push_loop(&mut out, f);
                }
            }
        }
    }
    let _ = writeln!(out, "facets {}", partition.facets().len());
    for f in partition.facets() {
        let e2 = f.e2().map_or(-1, |e| e as i64);
        let _ = write!(out, "{} {e2} ", f.e1());
        push_loop(&mut out, &f.vertices);
    }
    out
}

pub fn write_partition(partition: &CellPartition, path: &Path) -> Result<()> {
    std::fs::write(path, format_partition(partition))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_voxel_partition;

    #[test]
    fn bare_points_file() {
        let cloud = parse_points("t", "# two points\n0 0\n1.5 2\n").unwrap();
        assert_eq!(cloud.dim(), 2);
        assert_eq!(cloud.len(), 2);
        assert_eq!(cloud.position(1).y, 2.0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_points("t", "0 0\n1 x\n").unwrap_err();
        match err {
            FpmError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn voxel_partition_round_trip_3d() {
        let part = build_voxel_partition(&[2, 3, 2], &[0.1, 0.07, 0.3], &[0.01, 0.0, -0.2]).unwrap();
        let text = format_partition(&part);
        let back = parse_partition("t", &text).unwrap();
        assert_eq!(format_partition(&back), text);
        assert_eq!(back, part);
    }

    #[test]
    fn rejects_trailing_garbage() {
        let part = build_voxel_partition(&[2, 2], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let text = format_partition(&part) + "1 2 3\n";
        assert!(parse_partition("t", &text).is_err());
    }
}
