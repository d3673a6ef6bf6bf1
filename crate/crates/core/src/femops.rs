//! P1 finite-element operators and boundary integrals shared by the PDE
//! modules: weighted stiffness, load vectors, flux and mean-pressure
//! quadrature, lumped vertex volumes.

use crate::error::{Error, Result};
use crate::field::Field;
use crate::mesh::Mesh;
use crate::parallel::chunked_map_reduce;
use crate::quadrature::{cell_point, cell_rule, facet_rule};
use crate::scalar::Real;
use crate::sparse::{CooBuilder, CsrMatrix};

/// Assembles the weighted stiffness operator `(s grad u, grad v)` for a
/// strictly positive scalar coefficient `s`.
///
/// The operator is symmetric positive-semidefinite; with no Dirichlet rows
/// eliminated its kernel is the constants.
pub fn assemble_weighted_stiffness<T: Real>(
    mesh: &Mesh<T>,
    s: &Field<T>,
) -> Result<CsrMatrix<T>> {
    s.check_compatible(mesh)?;
    if s.components() != 1 {
        return Err(Error::invalid("stiffening coefficient must be scalar"));
    }
    if s.values().iter().any(|&v| !(v > T::zero())) {
        return Err(Error::invalid(
            "stiffening coefficient must be strictly positive at all vertices",
        ));
    }
    let nv = mesh.num_vertices();
    let nloc = mesh.dim() + 1;
    let chunks = chunked_map_reduce(mesh.num_cells(), |range| {
        let mut coo = CooBuilder::new(nv, nv);
        for c in range {
            let (_, grads) = mesh.cell_gradients(c);
            let verts = mesh.cell(c);
            // s is P1, so its cell integral is the vertex mean times volume;
            // the quadrature form below is exact for it.
            let mut s_int = T::zero();
            for q in cell_rule(mesh, c) {
                let mut sq = T::zero();
                for (i, &v) in verts.iter().enumerate() {
                    sq = sq + q.bary[i] * s.get(v, 0);
                }
                s_int = s_int + q.weight * sq;
            }
            for i in 0..nloc {
                for j in i..nloc {
                    let gij = crate::mesh::dot(grads[i], grads[j]);
                    let k = s_int * gij;
                    coo.push(verts[i], verts[j], k);
                    if j != i {
                        coo.push(verts[j], verts[i], k);
                    }
                }
            }
        }
        coo
    });
    let mut coo = CooBuilder::new(nv, nv);
    for chunk in chunks {
        coo.extend(chunk);
    }
    let mut m = coo.build();
    m.set_symmetric_flag(true);
    Ok(m)
}

/// Load vector `(f, phi_i)` for an analytic right-hand side.
pub fn assemble_load<T: Real>(mesh: &Mesh<T>, f: impl Fn(&[T; 3]) -> T) -> Vec<T> {
    let mut rhs = vec![T::zero(); mesh.num_vertices()];
    for c in 0..mesh.num_cells() {
        let verts = mesh.cell(c);
        for q in cell_rule(mesh, c) {
            let x = cell_point(mesh, c, &q.bary);
            let fx = f(&x);
            for (i, &v) in verts.iter().enumerate() {
                rhs[v] = rhs[v] + q.weight * fx * q.bary[i];
            }
        }
    }
    rhs
}

/// Signed flowrate through a tagged boundary with outward normal convention:
/// `Q = \int (u - u_ale) . n`. Inflow is negative. Units m^3/s (m^2/s in 2D).
pub fn boundary_integral_flux<T: Real>(
    mesh: &Mesh<T>,
    u: &Field<T>,
    u_ale: &Field<T>,
    tag: &str,
) -> Result<T> {
    u.check_compatible(mesh)?;
    u_ale.check_compatible(mesh)?;
    let dim = mesh.dim();
    let mut total = T::zero();
    for facet in mesh.tagged_facets(tag)? {
        for q in facet_rule(mesh, facet) {
            let mut rel_n = T::zero();
            for (i, &v) in facet.vertices[..dim].iter().enumerate() {
                let uv = u.vector_at(v);
                let av = u_ale.vector_at(v);
                for d in 0..dim {
                    rel_n = rel_n + q.bary[i] * (uv[d] - av[d]) * facet.normal[d];
                }
            }
            total = total + q.weight * rel_n;
        }
    }
    Ok(total)
}

/// Area-weighted mean of a scalar field over a tagged boundary.
pub fn boundary_mean_pressure<T: Real>(mesh: &Mesh<T>, p: &Field<T>, tag: &str) -> Result<T> {
    p.check_compatible(mesh)?;
    if p.components() != 1 {
        return Err(Error::invalid("pressure field must be scalar"));
    }
    let dim = mesh.dim();
    let mut integral = T::zero();
    let mut area = T::zero();
    for facet in mesh.tagged_facets(tag)? {
        area = area + facet.measure;
        for q in facet_rule(mesh, facet) {
            let mut pv = T::zero();
            for (i, &v) in facet.vertices[..dim].iter().enumerate() {
                pv = pv + q.bary[i] * p.get(v, 0);
            }
            integral = integral + q.weight * pv;
        }
    }
    if area <= T::zero() {
        return Err(Error::DegenerateGeometry(format!("tag `{tag}` has zero measure")));
    }
    Ok(integral / area)
}

/// Measure of a tagged boundary portion.
pub fn boundary_measure<T: Real>(mesh: &Mesh<T>, tag: &str) -> Result<T> {
    Ok(mesh
        .tagged_facets(tag)?
        .fold(T::zero(), |a, f| a + f.measure))
}

/// Applies Dirichlet constraints to an assembled operator and right-hand
/// side, returning the reduced system.
pub fn constrained_system<T: Real>(
    a: &CsrMatrix<T>,
    mut rhs: Vec<T>,
    constraints: &[(usize, T)],
) -> (CsrMatrix<T>, Vec<T>) {
    let mut coo = a.to_coo();
    coo.apply_dirichlet(&mut rhs, constraints);
    let mut m = coo.build();
    m.set_symmetric_flag(a.is_symmetric_flag());
    (m, rhs)
}

/// Lumped vertex volumes: each cell contributes `V / (dim + 1)` to its
/// vertices. Sums to the mesh volume.
pub fn lumped_vertex_volumes<T: Real>(mesh: &Mesh<T>) -> Vec<T> {
    let mut out = vec![T::zero(); mesh.num_vertices()];
    let share = T::from_f64_lit((mesh.dim() + 1) as f64);
    for c in 0..mesh.num_cells() {
        let v = mesh.cell_volume(c) / share;
        for &vert in mesh.cell(c) {
            out[vert] = out[vert] + v;
        }
    }
    out
}
