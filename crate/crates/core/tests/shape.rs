use proptest::prelude::*;

use fpm_core::geometry::Point;
use fpm_core::shape::{build_gfd_matrix, support_condition, ShapeFunction};

fn point(dim: usize) -> impl Strategy<Value = Point> {
    prop::collection::vec(-1.0..1.0f64, dim).prop_map(move |c| Point::new(c[0], c[1], if c.len() == 3 { c[2] } else { 0.0 }))
}

/// (dim, x0, neighbour coordinates) with a few more neighbours than the dimension.
fn support() -> impl Strategy<Value = (usize, Point, Vec<Point>)> {
    (2usize..=3).prop_flat_map(|dim| (Just(dim), point(dim), prop::collection::vec(point(dim), dim + 1..dim + 8)))
}

proptest! {
    #[test]
    fn partition_of_unity((dim, x0, nb) in support(), x in point(3)) {
        let sf = ShapeFunction::new(0, (1..=nb.len()).collect(), dim, x0, &nb);
        prop_assume!(sf.is_ok());
        let x = if dim == 2 { Point::new(x.x, x.y, 0.0) } else { x };
        let s = sf.unwrap().eval_shape(&x).sum();
        prop_assert!((s - 1.0).abs() <= 1e-12, "{}", s);
    }

    #[test]
    fn affine_fields_are_reproduced((dim, x0, nb) in support(), g in point(3), a in -5.0..5.0f64, x in point(3)) {
        // near-collinear stencils are legal but amplify rounding
        prop_assume!(support_condition(dim, &x0, &nb) <= 1e6);
        let sf = ShapeFunction::new(0, (1..=nb.len()).collect(), dim, x0, &nb);
        prop_assume!(sf.is_ok());
        let sf = sf.unwrap();
        let g = if dim == 2 { Point::new(g.x, g.y, 0.0) } else { g };
        let x = if dim == 2 { Point::new(x.x, x.y, 0.0) } else { x };
        let f = |p: &Point| a + g.dot(p);
        let values: Vec<f64> = std::iter::once(f(&x0)).chain(nb.iter().map(f)).collect();
        let grad = sf.eval_gradient(&values).unwrap();
        prop_assert!((grad - g).amax() <= 1e-10, "{:?} vs {:?}", grad, g);
        let v = sf.eval_value(&x, &values).unwrap();
        prop_assert!((v - f(&x)).abs() <= 1e-10);
    }

    #[test]
    fn translation_leaves_the_gradient_matrix_unchanged((dim, x0, nb) in support(), t in point(3)) {
        prop_assume!(support_condition(dim, &x0, &nb) <= 1e6);
        let t = if dim == 2 { Point::new(t.x, t.y, 0.0) } else { t };
        let b = build_gfd_matrix(dim, &x0, &nb);
        prop_assume!(b.is_ok());
        let moved: Vec<Point> = nb.iter().map(|p| p + 3.0 * t).collect();
        let bt = build_gfd_matrix(dim, &(x0 + 3.0 * t), &moved).unwrap();
        let b = b.unwrap();
        prop_assert!((b - &bt).amax() <= 1e-8 * bt.amax().max(1.0));
    }
}

#[test]
fn matches_normal_equations_on_three_neighbours() {
    let x0 = Point::zeros();
    let nb = [Point::new(1.0, 0.0, 0.0), Point::new(2.0, 0.0, 0.0), Point::new(1.0, 1.0, 0.0)];
    let b = build_gfd_matrix(2, &x0, &nb).unwrap();
    for values in [[0.3, -1.2, 0.7, 2.5], [1.0, 4.0, -2.0, 0.0], [-3.0, 0.5, 0.25, 9.0]] {
        // AᵀA g = Aᵀ(V_j − V_0) solved by Cramer's rule
        let dv: Vec<f64> = values[1..].iter().map(|v| v - values[0]).collect();
        let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, d) in nb.iter().zip(&dv) {
            s11 += p.x * p.x;
            s12 += p.x * p.y;
            s22 += p.y * p.y;
            r1 += p.x * d;
            r2 += p.y * d;
        }
        let det = s11 * s22 - s12 * s12;
        let gx = (r1 * s22 - s12 * r2) / det;
        let gy = (s11 * r2 - s12 * r1) / det;
        let g = &b * nalgebra::DVector::from_column_slice(&values);
        assert!((g.x - gx).abs() <= 1e-10 && (g.y - gy).abs() <= 1e-10, "{g:?} vs ({gx}, {gy})");
        assert_eq!(g.z, 0.0);
    }
}
