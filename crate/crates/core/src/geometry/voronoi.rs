//! Voronoi partitions clipped to a polygonal boundary.
//!
//! Each cell is obtained by clipping the boundary polygon against the
//! perpendicular-bisector half-planes of nearby points. Every clipped edge
//! remembers where it came from (a bisector or a boundary edge), which is what
//! turns the clipped polygons into internal and external facets.

use std::collections::BTreeMap;

use nalgebra::Vector2;

use super::partition::{distance_to_segment, point_in_polygon_closed};
use super::{CellPartition, CellShape, FacetSpec, Point, PointCloud};
use crate::error::{FpmError, Result};

/// Simple (non-self-intersecting) polygon bounding a 2D domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryPolygon {
    vertices: Vec<Point>,
    convex: bool,
}

impl BoundaryPolygon {
    pub fn new(vertices: &[Vector2<f64>]) -> Result<Self> {
        let mut pts: Vec<Point> = vertices.iter().map(|v| Point::new(v.x, v.y, 0.0)).collect();
        if pts.len() > 1 && (pts[0] - pts[pts.len() - 1]).norm() == 0.0 {
            pts.pop();
        }
        if pts.len() < 3 {
            return Err(FpmError::Domain("boundary polygon needs at least 3 vertices".into()));
        }
        if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(FpmError::Domain("boundary polygon has non-finite vertices".into()));
        }
        let area = signed_area(&pts);
        if area == 0.0 {
            return Err(FpmError::Domain("boundary polygon has zero area".into()));
        }
        if area < 0.0 {
            pts.reverse();
        }
        let k = pts.len();
        for i in 0..k {
            for j in i + 1..k {
                let adjacent = j == i + 1 || (i == 0 && j == k - 1);
                if !adjacent && segments_intersect(&pts[i], &pts[(i + 1) % k], &pts[j], &pts[(j + 1) % k]) {
                    return Err(FpmError::Domain(format!("boundary polygon edges {i} and {j} intersect")));
                }
            }
        }
        let convex = (0..k).all(|i| {
            let a = pts[i];
            let b = pts[(i + 1) % k];
            let c = pts[(i + 2) % k];
            cross2(&(b - a), &(c - b)) >= 0.0
        });
        Ok(Self { vertices: pts, convex })
    }

    /// Reads `x y` vertex lines (cm); `#` starts a comment. A repeated
    /// closing vertex is allowed.
    pub fn read(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&path.display().to_string(), &text)
    }

    pub fn parse(source_name: &str, text: &str) -> Result<Self> {
        let mut verts = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let c: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
            match c {
                Ok(c) if c.len() == 2 => verts.push(Vector2::new(c[0], c[1])),
                Ok(c) => {
                    return Err(FpmError::Parse {
                        source_name: source_name.to_string(),
                        line: i + 1,
                        message: format!("expected 2 coordinates, found {}", c.len()),
                    })
                }
                Err(e) => {
                    return Err(FpmError::Parse {
                        source_name: source_name.to_string(),
                        line: i + 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::new(&verts)
    }

    pub fn rectangle(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        Self::new(&[
            Vector2::new(min[0], min[1]),
            Vector2::new(max[0], min[1]),
            Vector2::new(max[0], max[1]),
            Vector2::new(min[0], max[1]),
        ])
    }

    /// Counter-clockwise vertex loop.
    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max((a - b).norm());
            }
        }
        d
    }
}

fn cross2(a: &Point, b: &Point) -> f64 {
    a.x * b.y - a.y * b.x
}

fn signed_area(pts: &[Point]) -> f64 {
    let k = pts.len();
    0.5 * (0..k).map(|i| cross2(&pts[i], &pts[(i + 1) % k])).sum::<f64>()
}

fn segments_intersect(a: &Point, b: &Point, c: &Point, d: &Point) -> bool {
    let o = |p: &Point, q: &Point, r: &Point| cross2(&(q - p), &(r - p));
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    let on = |p: &Point, q: &Point, r: &Point| distance_to_segment(r, p, q) == 0.0;
    on(c, d, a) || on(c, d, b) || on(a, b, c) || on(a, b, d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EdgeSource {
    Boundary,
    Bisector(usize),
}

/// Polygon with a source label on the edge leaving each vertex.
type LabeledPolygon = Vec<(Point, EdgeSource)>;

/// Keeps the part of `poly` on the side of the bisector of (p, q) closer to p.
fn clip_half_plane(poly: &LabeledPolygon, p: &Point, q: &Point, label: EdgeSource) -> LabeledPolygon {
    let mid = 0.5 * (p + q);
    let dir = q - p;
    let side = |x: &Point| (x - mid).dot(&dir);
    let k = poly.len();
    let mut out = Vec::with_capacity(k + 2);
    for i in 0..k {
        let (a, lab) = poly[i];
        let b = poly[(i + 1) % k].0;
        let (sa, sb) = (side(&a), side(&b));
        let (ina, inb) = (sa <= 0.0, sb <= 0.0);
        match (ina, inb) {
            (true, true) => out.push((a, lab)),
            (true, false) => {
                out.push((a, lab));
                let t = sa / (sa - sb);
                out.push((a + t * (b - a), label));
            }
            (false, true) => {
                let t = sa / (sa - sb);
                out.push((a + t * (b - a), lab));
            }
            (false, false) => {}
        }
    }
    out
}

/// Drops edges shorter than `tol`, keeping the label of the surviving edge.
fn remove_short_edges(poly: &mut LabeledPolygon, tol: f64) {
    loop {
        let k = poly.len();
        if k < 3 {
            return;
        }
        let short = (0..k).find(|&i| (poly[(i + 1) % k].0 - poly[i].0).norm() <= tol);
        match short {
            Some(i) => {
                poly.remove(i);
            }
            None => return,
        }
    }
}

/// Builds the Voronoi partition of `cloud` clipped to `boundary`.
///
/// Internal facets are oriented out of the lower-indexed cell. Points may lie
/// on the boundary. Neighbour pairs that only touch at a degenerate vertex
/// (four or more cocircular points) produce zero-length edges; those are
/// dropped and counted in [`CellPartition::collapsed_pairs`].
pub fn build_voronoi_partition_2d(cloud: &PointCloud, boundary: &BoundaryPolygon) -> Result<CellPartition> {
    if cloud.dim() != 2 {
        return Err(FpmError::Contract("Voronoi partitions are 2D only".into()));
    }
    let n = cloud.len();
    if n == 0 {
        return Err(FpmError::Domain("empty point cloud".into()));
    }
    let scale = boundary.diameter();
    let spacing = (boundary.area() / n as f64).sqrt();
    let on_tol = 1e-12 * scale;
    let len_tol = 1e-9 * spacing;
    for (i, p) in cloud.positions().iter().enumerate() {
        if !point_in_polygon_closed(p, boundary.vertices(), on_tol) {
            return Err(FpmError::Domain(format!("point {i} lies outside the boundary polygon")));
        }
    }

    let base: LabeledPolygon = boundary.vertices().iter().map(|&v| (v, EdgeSource::Boundary)).collect();
    let positions = cloud.positions();

    let cells: Vec<LabeledPolygon> = {
        use rayon::prelude::*;
        (0..n)
            .into_par_iter()
            .map(|i| clip_cell(i, positions, &base, len_tol))
            .collect::<Result<Vec<_>>>()?
    };

    if !boundary.is_convex() {
        for (i, cell) in cells.iter().enumerate() {
            check_no_bridges(i, cell, len_tol)?;
        }
    }

    let mut vertices = Vec::new();
    let mut shapes = Vec::with_capacity(n);
    let mut first_vertex = Vec::with_capacity(n);
    for cell in &cells {
        first_vertex.push(vertices.len());
        shapes.push(CellShape::Polygon((vertices.len()..vertices.len() + cell.len()).collect()));
        vertices.extend(cell.iter().map(|e| e.0));
    }

    // (lo, hi) -> edges proposed by either side, as (cell, edge index)
    let mut pairs: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    let mut specs = Vec::new();
    let mut touching = BTreeMap::new();
    for (i, cell) in cells.iter().enumerate() {
        let k = cell.len();
        for (e, &(_, source)) in cell.iter().enumerate() {
            let edge = [first_vertex[i] + e, first_vertex[i] + (e + 1) % k];
            match source {
                EdgeSource::Boundary => specs.push(FacetSpec {
                    cells: (i, None),
                    vertices: edge.to_vec(),
                }),
                EdgeSource::Bisector(j) => {
                    let key = (i.min(j), i.max(j));
                    pairs.entry(key).or_default().push((i, e));
                }
            }
        }
        // neighbours that only share a vertex appear as touching points
        let reach = cell.iter().map(|v| (v.0 - positions[i]).norm()).fold(0.0, f64::max);
        for (j, q) in positions.iter().enumerate() {
            if j == i || (q - positions[i]).norm() > 2.0 * reach * (1.0 + 1e-12) {
                continue;
            }
            if touches(cell, &positions[i], q, len_tol) {
                touching.insert((i.min(j), i.max(j)), ());
            }
        }
    }
    for (&(lo, hi), edges) in &pairs {
        let (cell, e) = edges.iter().copied().find(|&(c, _)| c == lo).unwrap_or(edges[0]);
        let k = cells[cell].len();
        specs.push(FacetSpec {
            cells: (lo, Some(hi)),
            vertices: vec![first_vertex[cell] + e, first_vertex[cell] + (e + 1) % k],
        });
    }
    let collapsed = touching.keys().filter(|k| !pairs.contains_key(k)).count();
    if collapsed > 0 {
        log::info!("voronoi: {collapsed} neighbour pairs meet only at degenerate vertices");
    }

    Ok(CellPartition::from_parts(cloud.clone(), vertices, shapes, specs)?.with_collapsed_pairs(collapsed))
}

fn clip_cell(i: usize, positions: &[Point], base: &LabeledPolygon, len_tol: f64) -> Result<LabeledPolygon> {
    let p = positions[i];
    let mut order: Vec<(f64, usize)> = positions
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(j, q)| ((q - p).norm(), j))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut poly = base.clone();
    for (dist, j) in order {
        let reach = poly.iter().map(|v| (v.0 - p).norm()).fold(0.0, f64::max);
        if dist > 2.0 * reach * (1.0 + 1e-12) {
            break;
        }
        poly = clip_half_plane(&poly, &p, &positions[j], EdgeSource::Bisector(j));
        remove_short_edges(&mut poly, len_tol);
        if poly.len() < 3 {
            return Err(FpmError::DegenerateCell {
                point: i,
                reason: format!("cell vanished when clipped against point {j}"),
            });
        }
    }
    Ok(poly)
}

/// True when the bisector of (p, q) passes through a vertex of `cell`
/// without contributing an edge.
fn touches(cell: &LabeledPolygon, p: &Point, q: &Point, tol: f64) -> bool {
    let mid = 0.5 * (p + q);
    let dir = (q - p).normalize();
    cell.iter().any(|v| (v.0 - mid).dot(&dir).abs() <= tol)
}

/// Clipping a non-convex boundary can leave zero-width bridges along a
/// bisector when the cell is disconnected; those are rejected.
fn check_no_bridges(i: usize, cell: &LabeledPolygon, tol: f64) -> Result<()> {
    let k = cell.len();
    let edges: Vec<(Point, Point, EdgeSource)> = (0..k).map(|e| (cell[e].0, cell[(e + 1) % k].0, cell[e].1)).collect();
    for a in 0..k {
        for b in a + 1..k {
            let (pa, qa, la) = edges[a];
            let (pb, qb, lb) = edges[b];
            if la != lb || la == EdgeSource::Boundary {
                continue;
            }
            let da = qa - pa;
            let db = qb - pb;
            if da.dot(&db) >= 0.0 {
                continue;
            }
            let u = da.normalize();
            let (s0, s1) = ((pb - pa).dot(&u), (qb - pa).dot(&u));
            let overlap = s0.max(s1).min(da.norm()) - s0.min(s1).max(0.0);
            if overlap > tol {
                return Err(FpmError::Domain(format!(
                    "cell of point {i} is split into disconnected pieces by the boundary"
                )));
            }
        }
    }
    Ok(())
}
