//! Fluid-domain motion: boundary-based stiffening, harmonic extension of
//! boundary displacement, temporal smoothing-spline bridging of coarse
//! displacement frames, and the BDF1 ALE velocity.
//!
//! The pipeline mirrors the coupled loop's needs: coarse boundary frames are
//! lifted to the volume one frame at a time, a per-node cubic smoothing
//! spline bridges them in time, and the ALE velocity is the backward
//! difference of the evaluated timeline.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::femops::{assemble_weighted_stiffness, constrained_system};
use crate::geometry::{closest_point_on_segment, closest_point_on_triangle, distance};
use crate::solver::{solve_linear, SolveOptions};
use crate::spline::{SmoothingSpline, SplineBasis};
use crate::vtk;
use crate::{Field, Mesh};

/// Inverse-distance stiffening parameters. `alpha = 0` disables stiffening.
#[derive(Debug, Clone, Copy)]
pub struct StiffeningOptions {
    pub alpha: f64,
    pub floor: f64,
}

impl Default for StiffeningOptions {
    fn default() -> Self {
        StiffeningOptions {
            alpha: 1.0,
            floor: 1.0,
        }
    }
}

/// Scalar coefficient `s(x) = max(floor, (1 / dist(x, boundary))^alpha)`,
/// with the distance clamped below by the local cell size so boundary
/// vertices see a finite value.
pub fn stiffening_field(mesh: &Mesh, options: &StiffeningOptions) -> Result<Field> {
    if options.alpha < 0.0 {
        return Err(Error::invalid("stiffening alpha must be non-negative"));
    }
    if !(options.floor > 0.0) {
        return Err(Error::invalid("stiffening floor must be positive"));
    }
    let incident = mesh.vertex_to_cells();
    let mut values = Vec::with_capacity(mesh.num_vertices());
    for v in 0..mesh.num_vertices() {
        let p = mesh.vertex(v);
        let mut dist = f64::INFINITY;
        for facet in mesh.facets() {
            let q = if mesh.dim() == 2 {
                closest_point_on_segment(
                    p,
                    mesh.vertex(facet.vertices[0]),
                    mesh.vertex(facet.vertices[1]),
                )
            } else {
                closest_point_on_triangle(
                    p,
                    mesh.vertex(facet.vertices[0]),
                    mesh.vertex(facet.vertices[1]),
                    mesh.vertex(facet.vertices[2]),
                )
            };
            dist = dist.min(distance(p, q));
        }
        let h_local = mesh.local_edge_length(&incident, v);
        if !h_local.is_finite() || h_local <= 0.0 {
            return Err(Error::DegenerateGeometry(format!(
                "vertex {v} has no incident cells or zero-size cells"
            )));
        }
        let clamped = dist.max(h_local);
        values.push(options.floor.max((1.0 / clamped).powf(options.alpha)));
    }
    Field::from_values(mesh, 1, values)
}

/// Dirichlet displacement data for one boundary tag.
#[derive(Debug, Clone)]
pub enum TagDisplacement {
    Zero,
    Constant(Vec<f64>),
    /// Vertex index -> displacement components.
    Vertices(BTreeMap<usize, Vec<f64>>),
}

/// Boundary displacement data covering every tag of the mesh. Tags not
/// explicitly set are held fixed (zero displacement).
#[derive(Debug, Clone, Default)]
pub struct BoundaryData {
    tags: BTreeMap<String, TagDisplacement>,
}

impl BoundaryData {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, tag: &str, data: TagDisplacement) -> Self {
        self.tags.insert(tag.to_string(), data);
        self
    }

    /// Resolves per-vertex Dirichlet values over all boundary vertices.
    /// Later tags override earlier ones where tags share vertices.
    fn resolve(&self, mesh: &Mesh) -> Result<BTreeMap<usize, Vec<f64>>> {
        let dim = mesh.dim();
        let mut out: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for v in mesh.boundary_vertices() {
            out.insert(v, vec![0.0; dim]);
        }
        for (tag, data) in &self.tags {
            let verts = mesh.tagged_vertices(tag)?;
            match data {
                TagDisplacement::Zero => {}
                TagDisplacement::Constant(d) => {
                    if d.len() != dim {
                        return Err(Error::invalid(format!(
                            "tag `{tag}` constant displacement has wrong dimension"
                        )));
                    }
                    for v in verts {
                        out.insert(v, d.clone());
                    }
                }
                TagDisplacement::Vertices(map) => {
                    for v in verts {
                        if let Some(d) = map.get(&v) {
                            if d.len() != dim {
                                return Err(Error::invalid(format!(
                                    "tag `{tag}` vertex displacement has wrong dimension"
                                )));
                            }
                            out.insert(v, d.clone());
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

/// Solves `-div(s grad d) = 0` componentwise with the given Dirichlet data
/// on the whole boundary.
pub fn harmonic_extension(mesh: &Mesh, s: &Field, data: &BoundaryData) -> Result<Field> {
    let dim = mesh.dim();
    let stiffness = assemble_weighted_stiffness(mesh, s)?;
    let dirichlet = data.resolve(mesh)?;
    let nv = mesh.num_vertices();
    let mut out = Field::zeros(mesh, dim);
    for comp in 0..dim {
        let constraints: Vec<(usize, f64)> =
            dirichlet.iter().map(|(&v, d)| (v, d[comp])).collect();
        let (a, rhs) = constrained_system(&stiffness, vec![0.0; nv], &constraints);
        // Seed with the mean boundary value: rigid translations solve in one
        // residual evaluation.
        let mean = if constraints.is_empty() {
            0.0
        } else {
            constraints.iter().map(|(_, g)| g).sum::<f64>() / constraints.len() as f64
        };
        let opts = SolveOptions {
            rel_tol: 1e-12,
            max_iter: 10_000,
            ..Default::default()
        };
        let x = solve_linear(&a, &rhs, &opts, Some(&vec![mean; nv]))?;
        for v in 0..nv {
            out.set(v, comp, x[v]);
        }
    }
    Ok(out)
}

/// Coarse boundary-displacement frames at strictly increasing times.
#[derive(Debug, Clone)]
pub struct DisplacementFrameSet {
    pub times: Vec<f64>,
    pub moving_tags: Vec<String>,
    /// Vertex indices the frames cover (union of the moving tags' vertices).
    pub vertices: Vec<usize>,
    /// Per frame: `dim * vertices.len()` displacement values (meters).
    pub frames: Vec<Vec<f64>>,
    pub periodic: bool,
}

impl DisplacementFrameSet {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.times.len() != self.frames.len() {
            return Err(Error::invalid("frame count must match time count"));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("frame times must be strictly increasing"));
        }
        let expect = dim * self.vertices.len();
        if self.frames.iter().any(|f| f.len() != expect) {
            return Err(Error::invalid("ragged frame arrays"));
        }
        Ok(())
    }

    fn boundary_data(&self, frame: usize, dim: usize) -> BoundaryData {
        let mut map = BTreeMap::new();
        for (i, &v) in self.vertices.iter().enumerate() {
            map.insert(v, self.frames[frame][i * dim..(i + 1) * dim].to_vec());
        }
        let mut data = BoundaryData::new();
        for tag in &self.moving_tags {
            data = data.set(tag, TagDisplacement::Vertices(map.clone()));
        }
        data
    }
}

/// Harmonically extends every frame to the volume.
pub fn extend_frames(
    mesh: &Mesh,
    s: &Field,
    frames: &DisplacementFrameSet,
) -> Result<Vec<Field>> {
    frames.validate(mesh.dim())?;
    let mut out = Vec::with_capacity(frames.frames.len());
    for k in 0..frames.frames.len() {
        let data = frames.boundary_data(k, mesh.dim());
        out.push(harmonic_extension(mesh, s, &data)?);
    }
    Ok(out)
}

/// Per-node smoothing-spline coefficients bridging coarse frames in time.
#[derive(Debug, Clone)]
pub struct DisplacementTimeline {
    components: usize,
    num_vertices: usize,
    splines: Vec<SmoothingSpline<f64>>,
    /// Evaluation window; with `period` set, times wrap into it.
    t0: f64,
    t1: f64,
    period: Option<f64>,
    lambda: f64,
}

/// Fits one smoothing spline per node and component over the frame times.
///
/// With the periodic flag, one wrapped frame is padded on each side before
/// fitting so the seam sees interior, not natural, boundary conditions.
pub fn fit_timeline(
    times: &[f64],
    volume_frames: &[Field],
    lambda: f64,
    periodic: bool,
) -> Result<DisplacementTimeline> {
    if times.len() < 3 {
        return Err(Error::invalid("timeline needs at least 3 frames"));
    }
    if times.len() != volume_frames.len() {
        return Err(Error::invalid("frame count must match time count"));
    }
    if lambda < 0.0 {
        return Err(Error::invalid("lambda must be non-negative"));
    }
    let components = volume_frames[0].components();
    let num_vertices = volume_frames[0].num_vertices();
    if volume_frames
        .iter()
        .any(|f| f.components() != components || f.num_vertices() != num_vertices)
    {
        return Err(Error::invalid("inconsistent frame fields"));
    }

    let t0 = times[0];
    let t1 = *times.last().unwrap();
    let period = t1 - t0;

    // Knot sequence, optionally padded with one wrapped frame per side.
    let (knots, frame_of_knot): (Vec<f64>, Vec<usize>) = if periodic {
        let n = times.len();
        let mut knots = Vec::with_capacity(n + 2);
        let mut idx = Vec::with_capacity(n + 2);
        knots.push(times[n - 2] - period);
        idx.push(n - 2);
        for (k, &t) in times.iter().enumerate() {
            knots.push(t);
            idx.push(k);
        }
        knots.push(times[1] + period);
        idx.push(1);
        (knots, idx)
    } else {
        (times.to_vec(), (0..times.len()).collect())
    };

    let basis = SplineBasis::new(&knots, lambda)?;
    let mut splines = Vec::with_capacity(num_vertices * components);
    let mut samples = vec![0.0; knots.len()];
    for v in 0..num_vertices {
        for c in 0..components {
            for (k, &f) in frame_of_knot.iter().enumerate() {
                samples[k] = volume_frames[f].get(v, c);
            }
            splines.push(basis.fit(&samples)?);
        }
    }
    Ok(DisplacementTimeline {
        components,
        num_vertices,
        splines,
        t0,
        t1,
        period: periodic.then_some(period),
        lambda,
    })
}

impl DisplacementTimeline {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.t0, self.t1)
    }

    fn wrap(&self, t: f64) -> Result<f64> {
        match self.period {
            Some(period) => {
                let mut tau = (t - self.t0) % period;
                if tau < 0.0 {
                    tau += period;
                }
                Ok(self.t0 + tau)
            }
            None => {
                let eps = 1e-12 * (self.t1 - self.t0);
                if t < self.t0 - eps || t > self.t1 + eps {
                    return Err(Error::invalid(format!(
                        "time {t} outside timeline range [{}, {}] (no extrapolation)",
                        self.t0, self.t1
                    )));
                }
                Ok(t.clamp(self.t0, self.t1))
            }
        }
    }

    /// Evaluates the displacement field at time `t`.
    pub fn eval(&self, mesh: &Mesh, t: f64) -> Result<Field> {
        let tau = self.wrap(t)?;
        if mesh.num_vertices() != self.num_vertices {
            return Err(Error::invalid("timeline bound to a different mesh size"));
        }
        let mut out = Field::zeros(mesh, self.components);
        for v in 0..self.num_vertices {
            for c in 0..self.components {
                let val = self.splines[v * self.components + c].eval(tau)?;
                out.set(v, c, val);
            }
        }
        Ok(out)
    }

    /// BDF1 ALE velocity: `(d(t) - d(t - dt)) / dt`.
    pub fn ale_velocity(&self, mesh: &Mesh, t: f64, dt: f64) -> Result<Field> {
        if !(dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        let now = self.eval(mesh, t)?;
        let before = self.eval(mesh, t - dt)?;
        let mut out = now;
        out.axpy(-1.0, &before);
        out.scale(1.0 / dt);
        Ok(out)
    }
}

/// Writes a frame set as one VTK point-data file per frame plus a TOML
/// manifest listing the times.
pub fn save_frames(
    dir: impl AsRef<Path>,
    mesh: &Mesh,
    frames: &DisplacementFrameSet,
) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    frames.validate(mesh.dim())?;
    let dim = mesh.dim();
    let mut files = Vec::new();
    for (k, frame) in frames.frames.iter().enumerate() {
        let mut field = Field::zeros(mesh, dim);
        for (i, &v) in frames.vertices.iter().enumerate() {
            for c in 0..dim {
                field.set(v, c, frame[i * dim + c]);
            }
        }
        let name = format!("frame_{k:04}.vtk");
        vtk::write_vtk(
            dir.join(&name),
            mesh,
            &[vtk::PointData {
                name: "displacement",
                field: &field,
            }],
        )?;
        files.push(name);
    }
    let manifest = FrameManifest {
        times: frames.times.clone(),
        files,
        moving_tags: frames.moving_tags.clone(),
        periodic: frames.periodic,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| Error::Parse(format!("manifest serialize: {e}")))?;
    std::fs::write(dir.join("frames.toml"), text)?;
    Ok(())
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct FrameManifest {
    times: Vec<f64>,
    files: Vec<String>,
    moving_tags: Vec<String>,
    periodic: bool,
}

/// Loads a frame set written by [`save_frames`].
pub fn load_frames(dir: impl AsRef<Path>, mesh: &Mesh) -> Result<DisplacementFrameSet> {
    let dir = dir.as_ref();
    let text = std::fs::read_to_string(dir.join("frames.toml"))?;
    let manifest: FrameManifest =
        toml::from_str(&text).map_err(|e| Error::Parse(format!("frames.toml: {e}")))?;
    let dim = mesh.dim();
    let mut vertices: Vec<usize> = Vec::new();
    for tag in &manifest.moving_tags {
        vertices.extend(mesh.tagged_vertices(tag)?);
    }
    vertices.sort_unstable();
    vertices.dedup();
    let mut frames = Vec::new();
    for file in &manifest.files {
        let data = vtk::read_vtk_point_data(dir.join(file))?;
        let vectors = data
            .vectors
            .iter()
            .find(|(name, _)| name == "displacement")
            .ok_or_else(|| Error::Parse(format!("{file}: missing displacement vectors")))?;
        if vectors.1.len() != mesh.num_vertices() {
            return Err(Error::Parse(format!("{file}: point count mismatch")));
        }
        let mut frame = Vec::with_capacity(dim * vertices.len());
        for &v in &vertices {
            for c in 0..dim {
                frame.push(vectors.1[v][c]);
            }
        }
        frames.push(frame);
    }
    let set = DisplacementFrameSet {
        times: manifest.times,
        moving_tags: manifest.moving_tags,
        vertices,
        frames,
        periodic: manifest.periodic,
    };
    set.validate(dim)?;
    Ok(set)
}

// ---------------------------------------------------------------------------
// Analytic displacement generators for desk-scale runs
// ---------------------------------------------------------------------------

/// Maps the box `[-1,1] x [-1,0]` onto the lower half of an ellipse with
/// semi-axes `a`, `b` (flat top along y = 0). Used by the idealized-ventricle
/// preset; the map is smooth and keeps triangles positively oriented.
pub fn half_ellipse_map(a: f64, b: f64) -> impl Fn(&[f64; 3]) -> [f64; 3] {
    move |p: &[f64; 3]| {
        let (xi, eta) = (p[0], p[1]);
        let u = xi * (1.0 - eta * eta / 2.0).sqrt();
        let v = eta * (1.0 - xi * xi / 2.0).sqrt();
        [a * u, b * v, 0.0]
    }
}

/// Radially contracting chamber: every boundary point scales about the
/// origin so the enclosed area follows the prescribed waveform. Points on
/// the plane y = 0 slide within it, so a port there stays planar.
#[derive(Debug, Clone)]
pub struct ContractingChamber {
    /// Rest area (2D) of the chamber.
    pub rest_volume: f64,
    /// Ejected fraction of the rest area at peak contraction, in (0, 1).
    pub ejection_fraction: f64,
    /// Contraction window inside the beat, `[start, end)` seconds.
    pub window: (f64, f64),
    pub period: f64,
}

impl ContractingChamber {
    /// Prescribed chamber area at time `t` (single beat, periodic).
    pub fn volume(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period);
        let (start, end) = self.window;
        if tau < start || tau >= end {
            return self.rest_volume;
        }
        let phase = (tau - start) / (end - start);
        // sin^2 bump: C^1 at the window edges, full ejection at mid-window.
        let bump = (std::f64::consts::PI * phase).sin().powi(2);
        self.rest_volume * (1.0 - self.ejection_fraction * bump)
    }

    fn scale(&self, t: f64, dim: usize) -> f64 {
        let ratio = self.volume(t) / self.rest_volume;
        match dim {
            2 => ratio.sqrt() - 1.0,
            _ => ratio.cbrt() - 1.0,
        }
    }

    /// Samples boundary-displacement frames for the moving tags.
    pub fn generate_frames(
        &self,
        mesh: &Mesh,
        moving_tags: &[String],
        num_frames: usize,
    ) -> Result<DisplacementFrameSet> {
        if num_frames < 3 {
            return Err(Error::invalid("need at least 3 frames"));
        }
        let dim = mesh.dim();
        let mut vertices: Vec<usize> = Vec::new();
        for tag in moving_tags {
            vertices.extend(mesh.tagged_vertices(tag)?);
        }
        vertices.sort_unstable();
        vertices.dedup();
        let times: Vec<f64> = (0..num_frames)
            .map(|k| self.period * k as f64 / (num_frames - 1) as f64)
            .collect();
        let mut frames = Vec::with_capacity(num_frames);
        for &t in &times {
            let s = self.scale(t, dim);
            let mut frame = Vec::with_capacity(dim * vertices.len());
            for &v in &vertices {
                let p = mesh.vertex(v);
                for c in 0..dim {
                    frame.push(s * p[c]);
                }
            }
            frames.push(frame);
        }
        Ok(DisplacementFrameSet {
            times,
            moving_tags: moving_tags.to_vec(),
            vertices,
            frames,
            periodic: true,
        })
    }
}

/// Channel with a sinusoidally oscillating top/bottom wall:
/// `d_y = amplitude * sin(2 pi t / period) * sin(pi x / length)`.
#[derive(Debug, Clone)]
pub struct OscillatingChannel {
    pub length: f64,
    pub amplitude: f64,
    pub period: f64,
    /// Tags of the two moving walls (bottom moves down, top up).
    pub wall_tags: (String, String),
}

impl OscillatingChannel {
    pub fn generate_frames(&self, mesh: &Mesh, num_frames: usize) -> Result<DisplacementFrameSet> {
        if num_frames < 3 {
            return Err(Error::invalid("need at least 3 frames"));
        }
        let dim = mesh.dim();
        let moving_tags = vec![self.wall_tags.0.clone(), self.wall_tags.1.clone()];
        let bottom: Vec<usize> = mesh.tagged_vertices(&self.wall_tags.0)?;
        let mut vertices = bottom.clone();
        vertices.extend(mesh.tagged_vertices(&self.wall_tags.1)?);
        vertices.sort_unstable();
        vertices.dedup();
        let times: Vec<f64> = (0..num_frames)
            .map(|k| self.period * k as f64 / (num_frames - 1) as f64)
            .collect();
        let mut frames = Vec::with_capacity(num_frames);
        for &t in &times {
            let osc = (2.0 * std::f64::consts::PI * t / self.period).sin();
            let mut frame = Vec::with_capacity(dim * vertices.len());
            for &v in &vertices {
                let p = mesh.vertex(v);
                let shape = (std::f64::consts::PI * p[0] / self.length).sin();
                let sign = if bottom.contains(&v) { -1.0 } else { 1.0 };
                for c in 0..dim {
                    frame.push(if c == 1 {
                        sign * self.amplitude * osc * shape
                    } else {
                        0.0
                    });
                }
            }
            frames.push(frame);
        }
        Ok(DisplacementFrameSet {
            times,
            moving_tags,
            vertices,
            frames,
            periodic: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn stiffening_alpha_zero_is_floor() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let s = stiffening_field(
            &m,
            &StiffeningOptions {
                alpha: 0.0,
                floor: 1.0,
            },
        )
        .unwrap();
        for v in 0..m.num_vertices() {
            assert_relative_eq!(s.get(v, 0), 1.0);
        }
    }

    #[test]
    fn boundary_vertices_use_clamped_distance() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let opts = StiffeningOptions {
            alpha: 1.0,
            floor: 1e-6,
        };
        let s = stiffening_field(&m, &opts).unwrap();
        let incident = m.vertex_to_cells();
        for &v in &m.boundary_vertices() {
            let h = m.local_edge_length(&incident, v);
            assert_relative_eq!(s.get(v, 0), 1.0 / h, max_relative = 1e-12);
        }
    }

    /// The stiffening value never increases as the clamped distance grows:
    /// checked pointwise over all vertices sorted by distance to the wall.
    #[test]
    fn stiffening_monotone_in_distance() {
        let m = generate_box_mesh(2, &[2.0, 1.0], &[8, 6]).unwrap();
        let opts = StiffeningOptions {
            alpha: 1.3,
            floor: 1e-9,
        };
        let s = stiffening_field(&m, &opts).unwrap();
        // Along the vertical ray x = 1.0 from the bottom wall to mid-height,
        // values must be non-increasing in y.
        let mut column: Vec<(f64, f64)> = (0..m.num_vertices())
            .filter(|&v| (m.vertex(v)[0] - 1.0).abs() < 1e-12 && m.vertex(v)[1] <= 0.5 + 1e-12)
            .map(|v| (m.vertex(v)[1], s.get(v, 0)))
            .collect();
        column.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in column.windows(2) {
            assert!(
                w[1].1 <= w[0].1 + 1e-12,
                "stiffening increased away from the wall: {w:?}"
            );
        }
    }

    #[test]
    fn constant_boundary_displacement_extends_exactly() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[5, 5]).unwrap();
        let s = stiffening_field(&m, &StiffeningOptions::default()).unwrap();
        let d0 = vec![0.3, -0.1];
        let mut data = BoundaryData::new();
        for tag in ["x0", "x1", "y0", "y1"] {
            data = data.set(tag, TagDisplacement::Constant(d0.clone()));
        }
        let d = harmonic_extension(&m, &s, &data).unwrap();
        for v in 0..m.num_vertices() {
            assert_relative_eq!(d.get(v, 0), 0.3, epsilon = 1e-10);
            assert_relative_eq!(d.get(v, 1), -0.1, epsilon = 1e-10);
        }
    }

    #[test]
    fn zero_boundary_data_gives_zero_field() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let s = stiffening_field(&m, &StiffeningOptions::default()).unwrap();
        let d = harmonic_extension(&m, &s, &BoundaryData::new()).unwrap();
        assert_relative_eq!(d.max_norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn linear_boundary_data_reproduced_for_unit_coefficient() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[6, 6]).unwrap();
        let s = Field::from_values(&m, 1, vec![1.0; m.num_vertices()]).unwrap();
        let g = |p: &[f64; 3]| vec![0.5 * p[0] - 0.2 * p[1] + 0.1, p[0] + p[1]];
        let mut all = BTreeMap::new();
        for v in m.boundary_vertices() {
            all.insert(v, g(&m.vertex(v)));
        }
        let mut data = BoundaryData::new();
        for tag in ["x0", "x1", "y0", "y1"] {
            data = data.set(tag, TagDisplacement::Vertices(all.clone()));
        }
        let d = harmonic_extension(&m, &s, &data).unwrap();
        for v in 0..m.num_vertices() {
            let expect = g(&m.vertex(v));
            assert_relative_eq!(d.get(v, 0), expect[0], epsilon = 1e-9);
            assert_relative_eq!(d.get(v, 1), expect[1], epsilon = 1e-9);
        }
    }

    #[test]
    fn extension_linear_in_boundary_data() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let s = stiffening_field(&m, &StiffeningOptions::default()).unwrap();
        let mk = |scale: f64| {
            let mut data = BoundaryData::new();
            data = data.set("x1", TagDisplacement::Constant(vec![scale * 0.2, 0.0]));
            harmonic_extension(&m, &s, &data).unwrap()
        };
        let d1 = mk(1.0);
        let d2 = mk(2.0);
        for v in 0..m.num_vertices() {
            assert_relative_eq!(2.0 * d1.get(v, 0), d2.get(v, 0), epsilon = 1e-8);
        }
    }

    #[test]
    fn rigid_translation_preserves_cell_volumes() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[5, 4]).unwrap();
        let s = stiffening_field(&m, &StiffeningOptions::default()).unwrap();
        let mut data = BoundaryData::new();
        for tag in ["x0", "x1", "y0", "y1"] {
            data = data.set(tag, TagDisplacement::Constant(vec![0.37, -0.21]));
        }
        let d = harmonic_extension(&m, &s, &data).unwrap();
        let moved = m.displaced(d.values()).unwrap();
        for c in 0..m.num_cells() {
            assert_relative_eq!(
                moved.cell_volume(c),
                m.cell_volume(c),
                max_relative = 1e-12
            );
        }
    }

    fn sin_frames(m: &Mesh, times: &[f64]) -> Vec<Field> {
        times
            .iter()
            .map(|&t| {
                Field::from_fn(m, 2, |p| {
                    vec![0.01 * (2.0 * std::f64::consts::PI * t).sin() * p[0], 0.0]
                })
            })
            .collect()
    }

    #[test]
    fn constant_frames_give_constant_timeline() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..5).map(|k| k as f64 * 0.2).collect();
        let frames: Vec<Field> = times
            .iter()
            .map(|_| Field::from_fn(&m, 2, |p| vec![0.1 * p[0], -0.05]))
            .collect();
        for lambda in [0.0, 1e-3, 1.0] {
            let tl = fit_timeline(&times, &frames, lambda, false).unwrap();
            let d = tl.eval(&m, 0.33).unwrap();
            for v in 0..m.num_vertices() {
                assert_relative_eq!(d.get(v, 0), 0.1 * m.vertex(v)[0], epsilon = 1e-10);
                assert_relative_eq!(d.get(v, 1), -0.05, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn zero_lambda_interpolates_at_knots() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let frames = sin_frames(&m, &times);
        let tl = fit_timeline(&times, &frames, 0.0, false).unwrap();
        for (k, &t) in times.iter().enumerate() {
            let d = tl.eval(&m, t).unwrap();
            for v in 0..m.num_vertices() {
                assert_relative_eq!(d.get(v, 0), frames[k].get(v, 0), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ale_velocity_of_constant_timeline_is_zero() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..4).map(|k| k as f64 * 0.25).collect();
        let frames: Vec<Field> = times
            .iter()
            .map(|_| Field::from_fn(&m, 2, |_| vec![0.2, 0.1]))
            .collect();
        let tl = fit_timeline(&times, &frames, 0.0, false).unwrap();
        let u = tl.ale_velocity(&m, 0.5, 1e-2).unwrap();
        assert_relative_eq!(u.max_norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn ale_velocity_exact_for_linear_motion() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..6).map(|k| k as f64 * 0.2).collect();
        let a = [0.03, -0.02];
        let frames: Vec<Field> = times
            .iter()
            .map(|&t| Field::from_fn(&m, 2, |_| vec![a[0] * t, a[1] * t]))
            .collect();
        let tl = fit_timeline(&times, &frames, 0.0, false).unwrap();
        let u = tl.ale_velocity(&m, 0.7, 0.05).unwrap();
        for v in 0..m.num_vertices() {
            assert_relative_eq!(u.get(v, 0), a[0], epsilon = 1e-10);
            assert_relative_eq!(u.get(v, 1), a[1], epsilon = 1e-10);
        }
    }

    /// BDF1 velocity of smooth nodal motion converges at first order to the
    /// analytic derivative as dt shrinks.
    #[test]
    fn ale_velocity_first_order_in_dt() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..65).map(|k| k as f64 / 64.0).collect();
        let omega = 2.0 * std::f64::consts::PI;
        let frames: Vec<Field> = times
            .iter()
            .map(|&t| Field::from_fn(&m, 2, |_| vec![0.01 * (omega * t).sin(), 0.0]))
            .collect();
        let tl = fit_timeline(&times, &frames, 0.0, false).unwrap();
        let t_eval = 0.4375; // a knot, well inside the domain
        let exact = 0.01 * omega * (omega * t_eval).cos();
        let errors: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&dt| {
                let u = tl.ale_velocity(&m, t_eval, dt).unwrap();
                (u.get(0, 0) - exact).abs()
            })
            .collect();
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(
                (0.8..=1.2).contains(&order),
                "observed order {order}, errors {errors:?}"
            );
        }
    }

    #[test]
    fn no_extrapolation_outside_domain() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..4).map(|k| k as f64 * 0.1).collect();
        let frames = sin_frames(&m, &times);
        let tl = fit_timeline(&times, &frames, 0.0, false).unwrap();
        assert!(tl.eval(&m, -0.05).is_err());
        assert!(tl.eval(&m, 0.35).is_err());
    }

    #[test]
    fn periodic_timeline_wraps() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..9).map(|k| k as f64 * 0.1).collect();
        let omega = 2.0 * std::f64::consts::PI / 0.8;
        let frames: Vec<Field> = times
            .iter()
            .map(|&t| Field::from_fn(&m, 2, |_| vec![0.01 * (omega * t).sin(), 0.0]))
            .collect();
        let tl = fit_timeline(&times, &frames, 0.0, true).unwrap();
        let a = tl.eval(&m, 0.25).unwrap();
        let b = tl.eval(&m, 0.25 + 0.8).unwrap();
        assert_relative_eq!(a.get(0, 0), b.get(0, 0), epsilon = 1e-12);
    }

    #[test]
    fn duplicate_frame_times_rejected() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times = vec![0.0, 0.1, 0.1, 0.3];
        let frames = sin_frames(&m, &times);
        assert!(fit_timeline(&times, &frames, 0.0, false).is_err());
    }

    #[test]
    fn knot_residual_monotone_in_lambda_for_fields() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[2, 2]).unwrap();
        let times: Vec<f64> = (0..12).map(|k| k as f64 * 0.05).collect();
        let frames: Vec<Field> = times
            .iter()
            .map(|&t| {
                Field::from_fn(&m, 2, |p| {
                    vec![0.01 * (40.0 * t).sin() * (1.0 + p[0]), 0.0]
                })
            })
            .collect();
        let mut prev = -1.0;
        for lambda in [0.0, 1e-6, 1e-3, 1.0] {
            let tl = fit_timeline(&times, &frames, lambda, false).unwrap();
            let mut res = 0.0;
            for (k, &t) in times.iter().enumerate() {
                let d = tl.eval(&m, t).unwrap();
                for v in 0..m.num_vertices() {
                    res += (d.get(v, 0) - frames[k].get(v, 0)).powi(2);
                }
            }
            assert!(res + 1e-16 >= prev, "{res} < {prev} at lambda {lambda}");
            prev = res;
        }
    }

    #[test]
    fn frame_roundtrip_via_vtk() {
        let dir = std::env::temp_dir().join("cardioflow_frames_test");
        std::fs::remove_dir_all(&dir).ok();
        let m = generate_box_mesh(2, &[1.0, 1.0], &[3, 3]).unwrap();
        let chamber = ContractingChamber {
            rest_volume: 1.0,
            ejection_fraction: 0.3,
            window: (0.2, 0.6),
            period: 0.8,
        };
        let tags = vec!["y0".to_string(), "x0".to_string(), "x1".to_string()];
        let frames = chamber.generate_frames(&m, &tags, 5).unwrap();
        save_frames(&dir, &m, &frames).unwrap();
        let back = load_frames(&dir, &m).unwrap();
        assert_eq!(back.times, frames.times);
        assert_eq!(back.vertices, frames.vertices);
        for (a, b) in back.frames.iter().zip(&frames.frames) {
            for (x, y) in a.iter().zip(b) {
                assert_relative_eq!(x, y, epsilon = 1e-14);
            }
        }
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn half_ellipse_map_keeps_mesh_valid() {
        let m = generate_box_mesh(2, &[2.0, 1.0], &[12, 6]).unwrap();
        // shift the box to [-1,1] x [-1,0] before mapping
        let shifted = m
            .mapped(|p| [p[0] - 1.0, p[1] - 1.0, 0.0])
            .unwrap();
        let mapped = shifted.mapped(half_ellipse_map(0.03, 0.04)).unwrap();
        mapped.validate().unwrap();
        // area of a half ellipse: pi a b / 2, within mesh discretization error
        let exact = std::f64::consts::PI * 0.03 * 0.04 / 2.0;
        assert_relative_eq!(mapped.total_volume(), exact, max_relative = 0.05);
    }

    #[test]
    fn chamber_volume_waveform_hits_prescribed_extremes() {
        let chamber = ContractingChamber {
            rest_volume: 100.0,
            ejection_fraction: 0.4,
            window: (0.262, 0.666),
            period: 0.8,
        };
        assert_relative_eq!(chamber.volume(0.0), 100.0);
        assert_relative_eq!(chamber.volume(0.75), 100.0);
        let mid = 0.5 * (0.262 + 0.666);
        assert_relative_eq!(chamber.volume(mid), 60.0, max_relative = 1e-12);
    }
}
