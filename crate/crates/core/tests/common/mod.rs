//! Independent dense oracles shared by the integration tests. Nothing here
//! calls into the library's shape or assembly code.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix2, RowDVector, SymmetricEigen, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fpm_core::geometry::{build_voronoi_partition_2d, BoundaryPolygon, CellPartition, CellShape, Facet, Point, PointCloud};

pub fn random_points(n: usize, side: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Point::new(rng.gen::<f64>() * side, rng.gen::<f64>() * side, 0.0))
        .collect()
}

pub fn random_voronoi(n: usize, side: f64, seed: u64) -> CellPartition {
    let cloud = PointCloud::new(2, random_points(n, side, seed)).unwrap();
    let boundary = BoundaryPolygon::rectangle([0.0, 0.0], [side, side]).unwrap();
    build_voronoi_partition_2d(&cloud, &boundary).unwrap()
}

pub fn random_fibers(n: usize, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let a: f64 = rng.gen::<f64>() * std::f64::consts::PI;
            Point::new(a.cos(), a.sin(), 0.0)
        })
        .collect()
}

/// d0 (ρI + (1 − ρ) f fᵀ) in the plane.
pub fn tensor_2d(fiber: &Point, d0: f64, rho: f64) -> Matrix2<f64> {
    let f = Vector2::new(fiber.x, fiber.y).normalize();
    d0 * (rho * Matrix2::identity() + (1.0 - rho) * f * f.transpose())
}

/// Gauss–Legendre nodes and weights on [-1, 1] from the Jacobi matrix.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut j = DMatrix::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    (0..n)
        .map(|i| (eig.eigenvalues[i], 2.0 * eig.eigenvectors[(0, i)].powi(2)))
        .collect()
}

pub fn polygon(part: &CellPartition, cell: usize) -> Vec<Vector2<f64>> {
    match &part.cell(cell).shape {
        CellShape::Polygon(loop_) => loop_
            .iter()
            .map(|&k| Vector2::new(part.vertices()[k].x, part.vertices()[k].y))
            .collect(),
        CellShape::Polyhedron(_) => panic!("2D cells only"),
    }
}

/// Shoelace area, positive for counter-clockwise loops.
pub fn shoelace(poly: &[Vector2<f64>]) -> f64 {
    let n = poly.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
}

/// Even-odd ray casting.
pub fn inside(poly: &[Vector2<f64>], p: &Vector2<f64>) -> bool {
    let n = poly.len();
    let mut c = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) && p.x < a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y) {
            c = !c;
        }
    }
    c
}

/// First-ring neighbours read from the facet list, grown by further rings
/// while the offsets do not span the plane.
pub fn supports(part: &CellPartition) -> Vec<Vec<usize>> {
    let n = part.len();
    let mut ring = vec![Vec::new(); n];
    for f in part.facets() {
        if let Some(j) = f.e2() {
            ring[f.e1()].push(j);
            ring[j].push(f.e1());
        }
    }
    (0..n)
        .map(|i| {
            let mut seen = vec![false; n];
            seen[i] = true;
            let mut frontier = vec![i];
            let mut nb = Vec::new();
            loop {
                let mut next: Vec<usize> = frontier.iter().flat_map(|&c| ring[c].iter().copied()).collect();
                next.sort_unstable();
                next.dedup();
                next.retain(|&j| !std::mem::replace(&mut seen[j], true));
                nb.extend_from_slice(&next);
                frontier = next;
                let x0 = part.points()[i];
                let a = DMatrix::from_fn(nb.len(), 2, |r, c| (part.points()[nb[r]] - x0)[c]);
                if a.rank(1e-10 * a.amax()) == 2 || frontier.is_empty() {
                    return nb;
                }
            }
        })
        .collect()
}

/// Local trial function of one point: the gradient matrix is the
/// pseudo-inverse of the offset matrix applied to [-1 | I].
pub struct OracleShape {
    pub indices: Vec<usize>,
    pub x0: Vector2<f64>,
    pub b: DMatrix<f64>,
}

impl OracleShape {
    pub fn new(points: &[Point], center: usize, neighbors: &[usize]) -> Self {
        let p = |i: usize| Vector2::new(points[i].x, points[i].y);
        let x0 = p(center);
        let m = neighbors.len();
        let a = DMatrix::from_fn(m, 2, |r, c| (p(neighbors[r]) - x0)[c]);
        let pinv = a.pseudo_inverse(1e-15).unwrap();
        let mut sel = DMatrix::zeros(m, m + 1);
        for r in 0..m {
            sel[(r, 0)] = -1.0;
            sel[(r, r + 1)] = 1.0;
        }
        let mut indices = vec![center];
        indices.extend_from_slice(neighbors);
        Self { indices, x0, b: pinv * sel }
    }

    pub fn all(part: &CellPartition) -> Vec<Self> {
        supports(part)
            .iter()
            .enumerate()
            .map(|(i, nb)| Self::new(part.points(), i, nb))
            .collect()
    }

    /// N(x) scattered into a global row of length n.
    pub fn n_row(&self, x: &Vector2<f64>, n: usize) -> RowDVector<f64> {
        let mut row = RowDVector::zeros(n);
        let d = x - self.x0;
        for (c, &g) in self.indices.iter().enumerate() {
            row[g] += d[0] * self.b[(0, c)] + d[1] * self.b[(1, c)];
        }
        row[self.indices[0]] += 1.0;
        row
    }

    /// B scattered into 2 × n.
    pub fn b_global(&self, n: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(2, n);
        for (c, &g) in self.indices.iter().enumerate() {
            out[(0, g)] += self.b[(0, c)];
            out[(1, g)] += self.b[(1, c)];
        }
        out
    }

    /// nᵀDB as a global row: the flux of the trial function along n.
    pub fn flux_row(&self, d: &Matrix2<f64>, normal: &Vector2<f64>, n: usize) -> RowDVector<f64> {
        let w = d.transpose() * normal;
        RowDVector::from_iterator(n, (w.transpose() * self.b_global(n)).iter().copied())
    }
}

/// p · Σ 𝒱_j d̄_j / Σ 𝒱_j over the neighbours of point i.
pub fn eta(part: &CellPartition, shapes: &[OracleShape], d: &[Matrix2<f64>], p: f64, i: usize) -> f64 {
    let nb = &shapes[i].indices[1..];
    let num: f64 = nb.iter().map(|&j| part.cell(j).measure * 0.5 * d[j].trace()).sum();
    let den: f64 = nb.iter().map(|&j| part.cell(j).measure).sum();
    p * num / den
}

/// The full interior-penalty facet matrix written out term by term, each
/// integral by 8-point Gauss on the facet segment. n × n, global indices.
pub fn facet_matrix(
    part: &CellPartition,
    f: &Facet,
    shapes: &[OracleShape],
    d: &[Matrix2<f64>],
    p: f64,
) -> DMatrix<f64> {
    let n = part.len();
    let (i1, i2) = (f.e1(), f.e2().expect("internal facet"));
    let (s1, s2) = (&shapes[i1], &shapes[i2]);
    let v = |k: usize| {
        let q = part.vertices()[f.vertices[k]];
        Vector2::new(q.x, q.y)
    };
    let (a, b) = (v(0), v(1));
    let len = (b - a).norm();
    let n1 = Vector2::new(f.normal.x, f.normal.y);
    let n2 = -n1;
    let pen = eta(part, shapes, d, p, i1) / (s2.x0 - s1.x0).norm();

    let g11 = s1.flux_row(&d[i1], &n1, n); // n1ᵀD1B1
    let g22 = s2.flux_row(&d[i2], &n2, n); // n2ᵀD2B2
    let g12 = s2.flux_row(&d[i2], &n1, n); // n1ᵀD2B2
    let g21 = s1.flux_row(&d[i1], &n2, n); // n2ᵀD1B1
    let t = |l: &RowDVector<f64>, r: &RowDVector<f64>| l.transpose() * r;
    let mut k = DMatrix::<f64>::zeros(n, n);
    for (xi, w) in gauss_legendre(8) {
        let x = 0.5 * (a + b) + 0.5 * xi * (b - a);
        let w = 0.5 * w * len;
        let m1 = s1.n_row(&x, n);
        let m2 = s2.n_row(&x, n);
        k += w * (-0.5 * (t(&m1, &g11) + t(&g11, &m1)) + pen * t(&m1, &m1));
        k += w * (-0.5 * (t(&m2, &g22) + t(&g22, &m2)) + pen * t(&m2, &m2));
        k += w * (-0.5 * (t(&m1, &g12) + t(&g21, &m2)) - pen * t(&m1, &m2));
        k += w * (-0.5 * (t(&m2, &g21) + t(&g12, &m1)) - pen * t(&m2, &m1));
    }
    k
}

/// ∫ NᵀN over a convex cell by a centroid fan and 6-point triangle Gauss.
pub fn capacity_matrix(part: &CellPartition, cell: usize, shape: &OracleShape) -> DMatrix<f64> {
    const TRI: [(f64, f64, f64); 6] = [
        (0.445948490915965, 0.445948490915965, 0.223381589678011),
        (0.445948490915965, 0.108103018168070, 0.223381589678011),
        (0.108103018168070, 0.445948490915965, 0.223381589678011),
        (0.091576213509771, 0.091576213509771, 0.109951743655322),
        (0.091576213509771, 0.816847572980459, 0.109951743655322),
        (0.816847572980459, 0.091576213509771, 0.109951743655322),
    ];
    let n = part.len();
    let poly = polygon(part, cell);
    let c = poly.iter().sum::<Vector2<f64>>() / poly.len() as f64;
    let mut out = DMatrix::zeros(n, n);
    for i in 0..poly.len() {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        let area = 0.5 * ((a - c).x * (b - c).y - (a - c).y * (b - c).x).abs();
        for (l1, l2, w) in TRI {
            let x = c + l1 * (a - c) + l2 * (b - c);
            let row = shape.n_row(&x, n);
            out += (w * area) * row.transpose() * row;
        }
    }
    out
}

/// Stiffness and capacity written out from cell and facet integrals.
pub fn dense_operators(part: &CellPartition, d: &[Matrix2<f64>], p: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = part.len();
    let shapes = OracleShape::all(part);
    let mut k = DMatrix::zeros(n, n);
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        let bg = shapes[i].b_global(n);
        k += part.cell(i).measure * bg.transpose() * d[i] * &bg;
        c += capacity_matrix(part, i, &shapes[i]);
    }
    for (_, f) in part.internal_facets() {
        k += facet_matrix(part, f, &shapes, d, p);
    }
    (k, c)
}
