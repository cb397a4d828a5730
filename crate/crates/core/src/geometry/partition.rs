use nalgebra::Matrix3;
use smallvec::SmallVec;

use super::{Point, PointCloud};
use crate::error::{FpmError, Result};

/// Vertex connectivity of a cell.
#[derive(Debug, Clone, PartialEq)]
pub enum CellShape {
    /// Counter-clockwise vertex loop (2D).
    Polygon(Vec<usize>),
    /// Closed set of planar faces, each a vertex loop (3D). Face orientation
    /// is normalized against the cell interior when moments are computed.
    Polyhedron(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub owner: usize,
    /// Area (cm²) in 2D, volume (cm³) in 3D.
    pub measure: f64,
    pub centroid: Point,
    /// Second moment about the centroid, ∫ (x−c)(x−c)ᵀ dΩ.
    pub central_moment: Matrix3<f64>,
    pub shape: CellShape,
    pub facets: Vec<usize>,
}

impl Cell {
    /// ∫ (x−x0)(x−x0)ᵀ dΩ about an arbitrary point.
    pub fn second_moment_about(&self, x0: &Point) -> Matrix3<f64> {
        let d = self.centroid - x0;
        self.central_moment + self.measure * d * d.transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetKind {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Facet {
    pub kind: FacetKind,
    /// Owning cell E1 and, for internal facets, the neighbour E2 (E1 < E2).
    pub cells: (usize, Option<usize>),
    pub vertices: SmallVec<[usize; 4]>,
    /// Length (cm) in 2D, area (cm²) in 3D.
    pub measure: f64,
    pub centroid: Point,
    /// Unit normal pointing out of E1.
    pub normal: Point,
    /// Distance between the two owner points; zero for external facets.
    pub h_e: f64,
}

impl Facet {
    pub fn is_internal(&self) -> bool {
        self.kind == FacetKind::Internal
    }

    pub fn e1(&self) -> usize {
        self.cells.0
    }

    pub fn e2(&self) -> Option<usize> {
        self.cells.1
    }
}

/// Raw facet description used to build a partition: owning cell(s) and vertex loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FacetSpec {
    pub cells: (usize, Option<usize>),
    pub vertices: Vec<usize>,
}

/// Closure check of the partition against the domain measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasureReport {
    pub total: f64,
    pub relative_error: f64,
}

/// Conforming, non-overlapping partition of the domain into one cell per point.
///
/// Immutable after construction; safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPartition {
    cloud: PointCloud,
    vertices: Vec<Point>,
    cells: Vec<Cell>,
    facets: Vec<Facet>,
    adjacency: Vec<Vec<usize>>,
    collapsed_pairs: usize,
}

impl CellPartition {
    /// Builds the partition from vertex data, computing all measures,
    /// centroids, moments, normals and h_e. Cell `i` is owned by point `i`.
    pub fn from_parts(
        cloud: PointCloud,
        vertices: Vec<Point>,
        shapes: Vec<CellShape>,
        facet_specs: Vec<FacetSpec>,
    ) -> Result<Self> {
        let n = cloud.len();
        if shapes.len() != n {
            return Err(FpmError::Contract(format!("{} cells for {n} points", shapes.len())));
        }
        let dim = cloud.dim();
        let check_vertex = |v: usize| -> Result<()> {
            if v >= vertices.len() {
                Err(FpmError::Contract(format!("vertex index {v} out of range")))
            } else {
                Ok(())
            }
        };

        let mut cells = Vec::with_capacity(n);
        for (owner, shape) in shapes.into_iter().enumerate() {
            let (measure, centroid, central_moment) = match (&shape, dim) {
                (CellShape::Polygon(loop_), 2) => {
                    for &v in loop_ {
                        check_vertex(v)?;
                    }
                    polygon_moments(loop_.iter().map(|&v| vertices[v]))
                }
                (CellShape::Polyhedron(faces), 3) => {
                    for &v in faces.iter().flatten() {
                        check_vertex(v)?;
                    }
                    polyhedron_moments(faces, &vertices)
                }
                _ => {
                    return Err(FpmError::Contract(format!(
                        "cell {owner} shape does not match dimension {dim}"
                    )))
                }
            };
            if !(measure > 0.0) {
                return Err(FpmError::DegenerateCell {
                    point: owner,
                    reason: format!("non-positive measure {measure:e}"),
                });
            }
            cells.push(Cell {
                owner,
                measure,
                centroid,
                central_moment,
                shape,
                facets: Vec::new(),
            });
        }

        let mut facets = Vec::with_capacity(facet_specs.len());
        for spec in facet_specs {
            for &v in &spec.vertices {
                check_vertex(v)?;
            }
            let (mut a, mut b) = spec.cells;
            if a >= n || b.is_some_and(|b| b >= n) {
                return Err(FpmError::Contract(format!("facet references cell out of range: {:?}", spec.cells)));
            }
            if let Some(bb) = b {
                if bb == a {
                    return Err(FpmError::Contract(format!("facet joins cell {a} to itself")));
                }
                if bb < a {
                    (a, b) = (bb, Some(a));
                }
            }
            let (measure, centroid, raw_normal) = facet_geometry(dim, &spec.vertices, &vertices)?;
            let mut normal = raw_normal;
            if normal.dot(&(centroid - cells[a].centroid)) < 0.0 {
                normal = -normal;
            }
            let (kind, h_e) = match b {
                Some(bb) => (FacetKind::Internal, (cloud.position(bb) - cloud.position(a)).norm()),
                None => (FacetKind::External, 0.0),
            };
            let id = facets.len();
            cells[a].facets.push(id);
            if let Some(bb) = b {
                cells[bb].facets.push(id);
            }
            facets.push(Facet {
                kind,
                cells: (a, b),
                vertices: spec.vertices.into_iter().collect(),
                measure,
                centroid,
                normal,
                h_e,
            });
        }

        let mut adjacency = vec![Vec::new(); n];
        for f in &facets {
            if let (a, Some(b)) = f.cells {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }

        Ok(Self {
            cloud,
            vertices,
            cells,
            facets,
            adjacency,
            collapsed_pairs: 0,
        })
    }

    pub(crate) fn with_collapsed_pairs(mut self, count: usize) -> Self {
        self.collapsed_pairs = count;
        self
    }

    pub fn dim(&self) -> usize {
        self.cloud.dim()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cloud(&self) -> &PointCloud {
        &self.cloud
    }

    pub fn points(&self) -> &[Point] {
        self.cloud.positions()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn internal_facets(&self) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets.iter().enumerate().filter(|(_, f)| f.is_internal())
    }

    /// Owners of the cells sharing an internal facet with cell `i`, ascending.
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    /// Number of neighbour pairs whose common boundary collapsed to a single
    /// degenerate vertex (cocircular configurations) and was dropped.
    pub fn collapsed_pairs(&self) -> usize {
        self.collapsed_pairs
    }

    pub fn total_measure(&self) -> f64 {
        self.cells.iter().map(|c| c.measure).sum()
    }

    /// Quadrature exact for quadratic integrands on the facet: two-point Gauss
    /// per edge in 2D, three edge-midpoint points per fan triangle in 3D.
    pub fn facet_quadrature(&self, facet: &Facet) -> SmallVec<[(Point, f64); 12]> {
        let mut out = SmallVec::new();
        let v = |k: usize| self.vertices[facet.vertices[k]];
        if self.dim() == 2 {
            let (a, b) = (v(0), v(1));
            let mid = 0.5 * (a + b);
            let half = 0.5 * (b - a) / 3f64.sqrt();
            let w = 0.5 * facet.measure;
            out.push((mid - half, w));
            out.push((mid + half, w));
        } else {
            let k = facet.vertices.len();
            let c = (0..k).map(v).sum::<Point>() / k as f64;
            for i in 0..k {
                let (a, b) = (v(i), v((i + 1) % k));
                let area = 0.5 * (a - c).cross(&(b - c)).norm();
                let w = area / 3.0;
                out.push((0.5 * (a + b), w));
                out.push((0.5 * (b + c), w));
                out.push((0.5 * (c + a), w));
            }
        }
        out
    }

    /// Compares the summed cell measures with the expected domain measure.
    pub fn measure_closure(&self, domain_measure: f64) -> MeasureReport {
        let total = self.total_measure();
        MeasureReport {
            total,
            relative_error: ((total - domain_measure) / domain_measure).abs(),
        }
    }

    /// Structural checks: conformity, unit normals, h_e, quadrature weights,
    /// and owner containment.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![0usize; self.facets.len()];
        for cell in &self.cells {
            for &f in &cell.facets {
                seen[f] += 1;
            }
        }
        for (id, f) in self.facets.iter().enumerate() {
            let expected = if f.is_internal() { 2 } else { 1 };
            if seen[id] != expected {
                return Err(FpmError::Domain(format!(
                    "facet {id} appears in {} cell lists, expected {expected}",
                    seen[id]
                )));
            }
            if ((f.normal.norm()) - 1.0).abs() > 1e-12 {
                return Err(FpmError::Domain(format!("facet {id} normal is not unit length")));
            }
            if let (a, Some(b)) = f.cells {
                let dist = (self.points()[b] - self.points()[a]).norm();
                if !(f.h_e > 0.0) || (f.h_e - dist).abs() > 1e-12 * dist.max(1.0) {
                    return Err(FpmError::Domain(format!("facet {id} has invalid h_e {}", f.h_e)));
                }
            }
            let wsum: f64 = self.facet_quadrature(f).iter().map(|q| q.1).sum();
            if (wsum - f.measure).abs() > 1e-10 * f.measure.max(f64::MIN_POSITIVE) {
                return Err(FpmError::Domain(format!("facet {id} quadrature weights do not sum to its measure")));
            }
        }
        for cell in &self.cells {
            if !self.owner_in_closure(cell) {
                return Err(FpmError::DegenerateCell {
                    point: cell.owner,
                    reason: "owner point lies outside its cell".into(),
                });
            }
        }
        Ok(())
    }

    fn owner_in_closure(&self, cell: &Cell) -> bool {
        let p = self.points()[cell.owner];
        let scale = cell.measure.powf(1.0 / self.dim() as f64);
        let tol = 1e-9 * scale;
        match &cell.shape {
            CellShape::Polygon(loop_) => {
                let pts: Vec<Point> = loop_.iter().map(|&v| self.vertices[v]).collect();
                point_in_polygon_closed(&p, &pts, tol)
            }
            CellShape::Polyhedron(_) => cell.facets.iter().all(|&f| {
                let facet = &self.facets[f];
                let n = if facet.e1() == cell.owner { facet.normal } else { -facet.normal };
                n.dot(&(p - facet.centroid)) <= tol
            }),
        }
    }
}

/// Even-odd containment with points on the boundary (within `tol`) counted inside.
pub(crate) fn point_in_polygon_closed(p: &Point, poly: &[Point], tol: f64) -> bool {
    let k = poly.len();
    let mut inside = false;
    for i in 0..k {
        let a = poly[i];
        let b = poly[(i + 1) % k];
        if distance_to_segment(p, &a, &b) <= tol {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub(crate) fn distance_to_segment(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + t * ab)).norm()
}

/// Exact moments of a simplex given by its vertices (triangle or tetrahedron):
/// signed measure, first moment, second moment ∫ x xᵀ.
fn simplex_moments(verts: &[Point], signed_measure: f64) -> (Point, Matrix3<f64>) {
    let d = verts.len() - 1;
    let s: Point = verts.iter().sum();
    let mut m2 = s * s.transpose();
    for v in verts {
        m2 += v * v.transpose();
    }
    let denom = ((d + 1) * (d + 2)) as f64;
    (signed_measure * s / (d + 1) as f64, m2 * (signed_measure / denom))
}

fn finish_moments(measure: f64, first: Point, second: Matrix3<f64>) -> (f64, Point, Matrix3<f64>) {
    let c = first / measure;
    let central = second - measure * c * c.transpose();
    (measure, c, 0.5 * (central + central.transpose()))
}

/// Area, centroid and central second moment of a simple polygon, by a signed fan.
pub(crate) fn polygon_moments(loop_: impl Iterator<Item = Point>) -> (f64, Point, Matrix3<f64>) {
    let pts: Vec<Point> = loop_.collect();
    if pts.len() < 3 {
        return (0.0, Point::zeros(), Matrix3::zeros());
    }
    // shift to the first vertex to limit cancellation
    let origin = pts[0];
    let mut area = 0.0;
    let mut first = Point::zeros();
    let mut second = Matrix3::zeros();
    for k in 1..pts.len() - 1 {
        let a = Point::zeros();
        let b = pts[k] - origin;
        let c = pts[k + 1] - origin;
        let signed = 0.5 * (b.x * c.y - b.y * c.x);
        let (m1, m2) = simplex_moments(&[a, b, c], signed);
        area += signed;
        first += m1;
        second += m2;
    }
    if area < 0.0 {
        area = -area;
        first = -first;
        second = -second;
    }
    if area == 0.0 {
        return (0.0, origin, Matrix3::zeros());
    }
    let (m, c, central) = finish_moments(area, first, second);
    (m, c + origin, central)
}

/// Volume, centroid and central second moment of a closed polyhedron.
/// Faces are fanned from their vertex average and joined to the cell's
/// vertex average; face orientation is normalized per face.
pub(crate) fn polyhedron_moments(faces: &[Vec<usize>], vertices: &[Point]) -> (f64, Point, Matrix3<f64>) {
    let all: Vec<usize> = {
        let mut v: Vec<usize> = faces.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    if all.is_empty() {
        return (0.0, Point::zeros(), Matrix3::zeros());
    }
    let r = all.iter().map(|&v| vertices[v]).sum::<Point>() / all.len() as f64;
    let mut vol = 0.0;
    let mut first = Point::zeros();
    let mut second = Matrix3::zeros();
    for face in faces {
        let k = face.len();
        if k < 3 {
            continue;
        }
        let pts: Vec<Point> = face.iter().map(|&v| vertices[v] - r).collect();
        let fc = pts.iter().sum::<Point>() / k as f64;
        let n = newell_normal(&pts);
        let sign = if n.dot(&fc) >= 0.0 { 1.0 } else { -1.0 };
        for i in 0..k {
            let a = pts[i];
            let b = pts[(i + 1) % k];
            let signed = sign * fc.dot(&a.cross(&b)) / 6.0;
            let (m1, m2) = simplex_moments(&[Point::zeros(), fc, a, b], signed);
            vol += signed;
            first += m1;
            second += m2;
        }
    }
    if vol <= 0.0 {
        return (vol, r, Matrix3::zeros());
    }
    let (m, c, central) = finish_moments(vol, first, second);
    (m, c + r, central)
}

pub(crate) fn newell_normal(pts: &[Point]) -> Point {
    let k = pts.len();
    let mut n = Point::zeros();
    for i in 0..k {
        let a = pts[i];
        let b = pts[(i + 1) % k];
        n.x += (a.y - b.y) * (a.z + b.z);
        n.y += (a.z - b.z) * (a.x + b.x);
        n.z += (a.x - b.x) * (a.y + b.y);
    }
    n
}

/// Measure, centroid and (unoriented) unit normal of a facet.
fn facet_geometry(dim: usize, loop_: &[usize], vertices: &[Point]) -> Result<(f64, Point, Point)> {
    if dim == 2 {
        if loop_.len() != 2 {
            return Err(FpmError::Contract(format!("2D facet needs 2 vertices, got {}", loop_.len())));
        }
        let (a, b) = (vertices[loop_[0]], vertices[loop_[1]]);
        let d = b - a;
        let len = d.norm();
        if !(len > 0.0) {
            return Err(FpmError::Domain("zero-length facet".into()));
        }
        Ok((len, 0.5 * (a + b), Point::new(d.y / len, -d.x / len, 0.0)))
    } else {
        if loop_.len() < 3 {
            return Err(FpmError::Contract(format!("3D facet needs at least 3 vertices, got {}", loop_.len())));
        }
        let pts: Vec<Point> = loop_.iter().map(|&v| vertices[v]).collect();
        let k = pts.len();
        let c = pts.iter().sum::<Point>() / k as f64;
        let mut area = 0.0;
        let mut centroid = Point::zeros();
        for i in 0..k {
            let (a, b) = (pts[i], pts[(i + 1) % k]);
            let t = 0.5 * (a - c).cross(&(b - c)).norm();
            area += t;
            centroid += t * (a + b + c) / 3.0;
        }
        let n = newell_normal(&pts);
        let nn = n.norm();
        if !(area > 0.0) || !(nn > 0.0) {
            return Err(FpmError::Domain("zero-area facet".into()));
        }
        Ok((area, centroid / area, n / nn))
    }
}
