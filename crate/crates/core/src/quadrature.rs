//! Quadrature rules on simplices, exact for polynomials of degree 2.
//!
//! Sufficient for every P1 bilinear form assembled here. Weights carry the
//! cell or facet measure, so summing `w * f(point)` integrates directly.

use crate::mesh::{BoundaryFacet, Mesh};
use crate::scalar::Real;

/// One quadrature point in barycentric coordinates plus its weight.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint<T: Real, const N: usize> {
    pub bary: [T; N],
    pub weight: T,
}

/// Edge-midpoint rule on a triangle (degree 2) or the symmetric 4-point
/// rule on a tetrahedron (degree 2). Barycentric arrays are padded with
/// zeros in 2D.
pub fn cell_rule<T: Real>(mesh: &Mesh<T>, cell: usize) -> Vec<QuadPoint<T, 4>> {
    let vol = mesh.cell_volume(cell);
    if mesh.dim() == 2 {
        let h = T::from_f64_lit(0.5);
        let w = vol / T::from_f64_lit(3.0);
        vec![
            QuadPoint {
                bary: [h, h, T::zero(), T::zero()],
                weight: w,
            },
            QuadPoint {
                bary: [T::zero(), h, h, T::zero()],
                weight: w,
            },
            QuadPoint {
                bary: [h, T::zero(), h, T::zero()],
                weight: w,
            },
        ]
    } else {
        let a = T::from_f64_lit(0.585_410_196_624_968_5);
        let b = T::from_f64_lit(0.138_196_601_125_010_5);
        let w = vol / T::from_f64_lit(4.0);
        (0..4)
            .map(|i| {
                let mut bary = [b; 4];
                bary[i] = a;
                QuadPoint { bary, weight: w }
            })
            .collect()
    }
}

/// Two-point Gauss rule on a boundary edge (2D) or the edge-midpoint rule
/// on a boundary triangle (3D). Exact for quadratics on the facet.
pub fn facet_rule<T: Real>(mesh: &Mesh<T>, facet: &BoundaryFacet<T>) -> Vec<QuadPoint<T, 3>> {
    if mesh.dim() == 2 {
        let g = T::from_f64_lit(1.0 / 3.0f64.sqrt());
        let half = T::from_f64_lit(0.5);
        let w = facet.measure * half;
        let lo = half * (T::one() - g);
        let hi = half * (T::one() + g);
        vec![
            QuadPoint {
                bary: [hi, lo, T::zero()],
                weight: w,
            },
            QuadPoint {
                bary: [lo, hi, T::zero()],
                weight: w,
            },
        ]
    } else {
        let h = T::from_f64_lit(0.5);
        let w = facet.measure / T::from_f64_lit(3.0);
        vec![
            QuadPoint {
                bary: [h, h, T::zero()],
                weight: w,
            },
            QuadPoint {
                bary: [T::zero(), h, h],
                weight: w,
            },
            QuadPoint {
                bary: [h, T::zero(), h],
                weight: w,
            },
        ]
    }
}

/// Physical coordinates of a barycentric point on a cell.
pub fn cell_point<T: Real>(mesh: &Mesh<T>, cell: usize, bary: &[T; 4]) -> [T; 3] {
    let verts = mesh.cell(cell);
    let mut out = [T::zero(); 3];
    for (i, &v) in verts.iter().enumerate() {
        let p = mesh.vertex(v);
        for d in 0..3 {
            out[d] = out[d] + bary[i] * p[d];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;
    use approx::assert_relative_eq;

    /// Integrates x^2 + x*y over the unit square: 1/3 + 1/4.
    #[test]
    fn cell_rule_exact_for_quadratics_2d() {
        let m = generate_box_mesh::<f64>(2, &[1.0, 1.0], &[3, 3]).unwrap();
        let mut total = 0.0;
        for c in 0..m.num_cells() {
            for q in cell_rule(&m, c) {
                let p = cell_point(&m, c, &q.bary);
                total += q.weight * (p[0] * p[0] + p[0] * p[1]);
            }
        }
        assert_relative_eq!(total, 1.0 / 3.0 + 1.0 / 4.0, max_relative = 1e-13);
    }

    /// Integrates z^2 over the unit cube: 1/3.
    #[test]
    fn cell_rule_exact_for_quadratics_3d() {
        let m = generate_box_mesh::<f64>(3, &[1.0, 1.0, 1.0], &[2, 2, 2]).unwrap();
        let mut total = 0.0;
        for c in 0..m.num_cells() {
            for q in cell_rule(&m, c) {
                let p = cell_point(&m, c, &q.bary);
                total += q.weight * p[2] * p[2];
            }
        }
        assert_relative_eq!(total, 1.0 / 3.0, max_relative = 1e-13);
    }

    /// Integrates y^2 along the right edge of the unit square: 1/3.
    #[test]
    fn facet_rule_exact_on_edges() {
        let m = generate_box_mesh::<f64>(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let mut total = 0.0;
        for f in m.tagged_facets("x1").unwrap() {
            for q in facet_rule(&m, f) {
                let mut y = 0.0;
                for (i, &v) in f.vertices[..2].iter().enumerate() {
                    y += q.bary[i] * m.vertex(v)[1];
                }
                total += q.weight * y * y;
            }
        }
        assert_relative_eq!(total, 1.0 / 3.0, max_relative = 1e-13);
    }
}
