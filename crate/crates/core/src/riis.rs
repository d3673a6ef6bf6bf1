//! Resistive immersed implicit surfaces: signed distances to valve leaflet
//! geometry, the smoothed delta kernel, the instantaneous open/close state
//! machine and the penalty operator added to the momentum equation.
//!
//! Each valve carries one surface per state. The surfaces are quasi-static:
//! leaflet velocity defaults to zero and distances are cached per vertex
//! until a state change swaps the active surface.

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{
    closest_point_on_segment, closest_point_on_triangle, distance, segment_normal_2d,
    triangle_normal,
};
use crate::mesh::{dot, sub};
use crate::parallel::chunked_map_reduce;
use crate::quadrature::cell_rule;
use crate::scalar::Real;
use crate::sparse::CooBuilder;
use crate::{Field, Mesh, SparseOperator};

/// Smoothed Dirac kernel with compact support `|phi| <= eps`:
/// `(1 + cos(pi phi / eps)) / (2 eps)`, continuous at the band edge and with
/// unit line integral across the band.
pub fn smoothed_delta<T: Real>(phi: T, eps: T) -> T {
    debug_assert!(eps > T::zero());
    if phi.abs() > eps {
        return T::zero();
    }
    let two = T::from_f64_lit(2.0);
    (T::one() + (T::PI() * phi / eps).cos()) / (two * eps)
}

/// An immersed surface: a polyline in 2D, a triangulation in 3D.
#[derive(Debug, Clone)]
pub struct ImmersedSurface {
    dim: usize,
    points: Vec<[f64; 3]>,
    /// Facet vertex indices; the first `dim` entries are used.
    facets: Vec<[usize; 3]>,
}

impl ImmersedSurface {
    pub fn new(dim: usize, points: Vec<[f64; 3]>, facets: Vec<[usize; 3]>) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid("surface dimension must be 2 or 3"));
        }
        if facets.is_empty() || points.is_empty() {
            return Err(Error::invalid("empty immersed surface"));
        }
        Ok(ImmersedSurface {
            dim,
            points,
            facets,
        })
    }

    /// Straight segment between two points (2D).
    pub fn segment_2d(a: [f64; 2], b: [f64; 2]) -> Self {
        ImmersedSurface {
            dim: 2,
            points: vec![[a[0], a[1], 0.0], [b[0], b[1], 0.0]],
            facets: vec![[0, 1, usize::MAX]],
        }
    }

    /// Polyline through the given points (2D).
    pub fn polyline_2d(points: &[[f64; 2]]) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("polyline needs at least two points"));
        }
        let pts = points.iter().map(|p| [p[0], p[1], 0.0]).collect();
        let facets = (0..points.len() - 1)
            .map(|i| [i, i + 1, usize::MAX])
            .collect();
        Ok(ImmersedSurface {
            dim: 2,
            points: pts,
            facets,
        })
    }

    /// Disjoint segments (2D), e.g. leaflet stubs leaving a central orifice.
    pub fn segments_2d(segments: &[[[f64; 2]; 2]]) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::invalid("empty segment list"));
        }
        let mut points = Vec::with_capacity(2 * segments.len());
        let mut facets = Vec::with_capacity(segments.len());
        for seg in segments {
            let base = points.len();
            points.push([seg[0][0], seg[0][1], 0.0]);
            points.push([seg[1][0], seg[1][1], 0.0]);
            facets.push([base, base + 1, usize::MAX]);
        }
        Ok(ImmersedSurface {
            dim: 2,
            points,
            facets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_facets(&self) -> usize {
        self.facets.len()
    }

    /// Total length (2D) or area (3D).
    pub fn measure(&self) -> f64 {
        self.facets
            .iter()
            .map(|f| {
                if self.dim == 2 {
                    distance(self.points[f[0]], self.points[f[1]])
                } else {
                    let a = self.points[f[0]];
                    let b = self.points[f[1]];
                    let c = self.points[f[2]];
                    crate::mesh::norm(crate::mesh::cross(sub(b, a), sub(c, a))) / 2.0
                }
            })
            .sum()
    }

    /// Signed distance from `x` to the surface. Magnitude is the Euclidean
    /// distance to the closest facet; sign follows the closest facet's
    /// orientation (positive on the normal side).
    pub fn signed_distance(&self, x: [f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        let mut best_sign = 1.0;
        for f in &self.facets {
            let (q, n) = if self.dim == 2 {
                let a = self.points[f[0]];
                let b = self.points[f[1]];
                (closest_point_on_segment(x, a, b), segment_normal_2d(a, b))
            } else {
                let a = self.points[f[0]];
                let b = self.points[f[1]];
                let c = self.points[f[2]];
                (
                    closest_point_on_triangle(x, a, b, c),
                    triangle_normal(a, b, c),
                )
            };
            let d = distance(x, q);
            if d < best {
                best = d;
                let side = dot(sub(x, q), n);
                best_sign = if side < 0.0 { -1.0 } else { 1.0 };
            }
        }
        best_sign * best
    }

    /// Loads an ASCII STL triangulation (3D).
    pub fn from_stl_ascii(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let mut points: Vec<[f64; 3]> = Vec::new();
        let mut facets: Vec<[usize; 3]> = Vec::new();
        let mut current: Vec<usize> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix("vertex") {
                let coords: Vec<f64> = rest
                    .split_whitespace()
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::Parse("bad STL vertex".into()))?;
                if coords.len() != 3 {
                    return Err(Error::Parse("STL vertex needs 3 coordinates".into()));
                }
                points.push([coords[0], coords[1], coords[2]]);
                current.push(points.len() - 1);
            } else if line.starts_with("endfacet") {
                if current.len() != 3 {
                    return Err(Error::Parse("STL facet without 3 vertices".into()));
                }
                facets.push([current[0], current[1], current[2]]);
                current.clear();
            }
        }
        ImmersedSurface::new(3, points, facets)
    }

    /// Loads a 2D polyline from CSV rows `x,y` (one point per line, optional
    /// header). Consecutive points form segments.
    pub fn from_polyline_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path)?;
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 {
                return Err(Error::Parse("polyline row needs x,y".into()));
            }
            match (cols[0].parse::<f64>(), cols[1].parse::<f64>()) {
                (Ok(x), Ok(y)) => pts.push([x, y]),
                _ if pts.is_empty() => continue, // header row
                _ => return Err(Error::Parse("bad polyline coordinate".into())),
            }
        }
        ImmersedSurface::polyline_2d(&pts)
    }
}

/// Timing and penalty constants for one valve.
#[derive(Debug, Clone)]
pub struct ValveSpec {
    pub name: String,
    /// Resistance R_k in kg/(m s).
    pub resistance: f64,
    /// Half thickness eps_k in meters.
    pub eps: f64,
    /// Opening instant inside `[0, period)`.
    pub open_time: f64,
    /// Closing instant inside `[0, period)`.
    pub close_time: f64,
    pub open_surface: ImmersedSurface,
    pub closed_surface: ImmersedSurface,
    /// Prescribed leaflet velocity; zero under the quasi-static assumption.
    pub leaflet_velocity: [f64; 3],
}

impl ValveSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.resistance > 0.0) {
            return Err(Error::invalid("valve resistance must be positive"));
        }
        if !(self.eps > 0.0) {
            return Err(Error::invalid("valve eps must be positive"));
        }
        if self.open_time == self.close_time {
            return Err(Error::invalid("valve open and close times must differ"));
        }
        Ok(())
    }

    /// Warns when the band is thinner than 1.5 local mesh sizes near the
    /// active surface, where the delta cannot be resolved.
    pub fn band_resolution_warning(&self, mesh: &Mesh) -> Option<String> {
        let mut h_min: f64 = f64::INFINITY;
        for c in 0..mesh.num_cells() {
            let centroid = mesh.cell_centroid(c);
            let phi = self.closed_surface.signed_distance(centroid);
            // any cell that could intersect the band, however thin it is
            if phi.abs() <= self.eps + mesh.cell_diameter(c) {
                let verts = mesh.cell(c);
                for i in 0..verts.len() {
                    for j in (i + 1)..verts.len() {
                        h_min = h_min
                            .min(distance(mesh.vertex(verts[i]), mesh.vertex(verts[j])));
                    }
                }
            }
        }
        if h_min.is_finite() && self.eps < 1.5 * h_min {
            Some(format!(
                "valve {}: eps = {:.3e} m is below 1.5 x local mesh size {:.3e} m; the band is under-resolved",
                self.name, self.eps, h_min
            ))
        } else {
            None
        }
    }
}

/// Instantaneous open/closed state at `t` (periodic).
///
/// With `open_time < close_time` the valve is open on `[open, close)`;
/// otherwise it is open on `[open, period) U [0, close)`. Both boundaries
/// follow the half-open convention: the valve switches exactly at its
/// stated instant.
pub fn valve_state_at(spec: &ValveSpec, t: f64, period: f64) -> bool {
    let tau = t.rem_euclid(period);
    if spec.open_time < spec.close_time {
        tau >= spec.open_time && tau < spec.close_time
    } else {
        tau >= spec.open_time || tau < spec.close_time
    }
}

/// One valve in the running simulation: spec, current state and the cached
/// per-vertex distances to the active surface.
#[derive(Debug, Clone)]
pub struct Valve {
    pub spec: ValveSpec,
    pub open: bool,
    /// Signed distances at mesh vertices for the active surface.
    pub phi: Field,
}

impl Valve {
    pub fn new(spec: ValveSpec, mesh: &Mesh, t0: f64, period: f64) -> Result<Self> {
        spec.validate()?;
        let open = valve_state_at(&spec, t0, period);
        let phi = vertex_distances(mesh, active_surface(&spec, open))?;
        Ok(Valve { spec, open, phi })
    }

    /// Applies the instantaneous switching rule; recomputes the distance
    /// cache on a state change or when the mesh has moved.
    pub fn update(&mut self, mesh: &Mesh, t: f64, period: f64, mesh_moved: bool) -> Result<bool> {
        let open = valve_state_at(&self.spec, t, period);
        let switched = open != self.open;
        if switched || mesh_moved {
            self.open = open;
            self.phi = vertex_distances(mesh, active_surface(&self.spec, open))?;
        }
        Ok(switched)
    }
}

fn active_surface(spec: &ValveSpec, open: bool) -> &ImmersedSurface {
    if open {
        &spec.open_surface
    } else {
        &spec.closed_surface
    }
}

/// Signed distances from every mesh vertex to a surface.
pub fn vertex_distances(mesh: &Mesh, surface: &ImmersedSurface) -> Result<Field> {
    if surface.dim() != mesh.dim() {
        return Err(Error::invalid("surface and mesh dimension mismatch"));
    }
    let chunks = chunked_map_reduce(mesh.num_vertices(), |range| {
        range
            .map(|v| surface.signed_distance(mesh.vertex(v)))
            .collect::<Vec<f64>>()
    });
    let values: Vec<f64> = chunks.into_iter().flatten().collect();
    Field::from_values(mesh, 1, values)
}

/// Assembles the penalty operator: a vector mass matrix weighted by
/// `sum_k R_k / eps_k * delta_{eps_k}(phi_k)`.
///
/// The cached vertex distances only decide which cells can intersect a band;
/// the delta argument is the exact surface distance at each quadrature
/// point. Interpolating the signed vertex values instead would manufacture
/// zero crossings on the plane extending past an open surface's edge.
///
/// Support is confined to cells intersecting a band; the operator is
/// symmetric positive-semidefinite.
pub fn assemble_riis_operator(mesh: &Mesh, valves: &[Valve]) -> Result<SparseOperator> {
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    let ndof = nv * dim;
    for valve in valves {
        valve.phi.check_compatible(mesh)?;
    }
    let chunks = chunked_map_reduce(mesh.num_cells(), |range| {
        let mut coo = CooBuilder::new(ndof, ndof);
        for c in range {
            let verts = mesh.cell(c);
            let diameter = mesh.cell_diameter(c);
            // A quadrature point is at most one diameter from each vertex.
            let candidates: Vec<&Valve> = valves
                .iter()
                .filter(|valve| {
                    verts
                        .iter()
                        .any(|&v| valve.phi.get(v, 0).abs() <= valve.spec.eps + diameter)
                })
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let nloc = dim + 1;
            let mut local = vec![vec![0.0; nloc]; nloc];
            for q in cell_rule(mesh, c) {
                let x = crate::quadrature::cell_point(mesh, c, &q.bary);
                let mut coeff = 0.0;
                for valve in &candidates {
                    let phi_q = active_surface(&valve.spec, valve.open).signed_distance(x);
                    coeff += valve.spec.resistance / valve.spec.eps
                        * smoothed_delta(phi_q, valve.spec.eps);
                }
                if coeff == 0.0 {
                    continue;
                }
                for i in 0..nloc {
                    for j in i..nloc {
                        local[i][j] += q.weight * coeff * q.bary[i] * q.bary[j];
                    }
                }
            }
            for i in 0..nloc {
                for j in i..nloc {
                    let value = local[i][j];
                    if value == 0.0 {
                        continue;
                    }
                    for d in 0..dim {
                        coo.push(verts[i] * dim + d, verts[j] * dim + d, value);
                        if j != i {
                            coo.push(verts[j] * dim + d, verts[i] * dim + d, value);
                        }
                    }
                }
            }
        }
        coo
    });
    let mut coo = CooBuilder::new(ndof, ndof);
    for chunk in chunks {
        coo.extend(chunk);
    }
    let mut m = coo.build();
    m.set_symmetric_flag(true);
    Ok(m)
}

/// Valve timing and penalty constants without geometry.
#[derive(Debug, Clone, Copy)]
pub struct ValveTiming {
    pub name: &'static str,
    pub open_time: f64,
    pub close_time: f64,
    pub resistance: f64,
    pub eps: f64,
}

/// Named preset `zygote-times`: opening/closing instants, resistances and
/// half-thicknesses of the four valves over a 0.8 s heartbeat.
pub fn zygote_times() -> [ValveTiming; 4] {
    [
        ValveTiming {
            name: "MV",
            open_time: 0.710,
            close_time: 0.208,
            resistance: 1e4,
            eps: 0.68e-3,
        },
        ValveTiming {
            name: "AV",
            open_time: 0.262,
            close_time: 0.666,
            resistance: 1e4,
            eps: 0.67e-3,
        },
        ValveTiming {
            name: "TV",
            open_time: 0.700,
            close_time: 0.194,
            resistance: 1e4,
            eps: 0.77e-3,
        },
        ValveTiming {
            name: "PV",
            open_time: 0.279,
            close_time: 0.677,
            resistance: 1e4,
            eps: 0.52e-3,
        },
    ]
}

/// Heartbeat period matching the `zygote-times` preset.
pub const ZYGOTE_PERIOD: f64 = 0.8;

pub fn timing_by_name(name: &str) -> Option<ValveTiming> {
    zygote_times().into_iter().find(|t| t.name == name)
}
