//! Simplicial meshes: triangles in 2D, tetrahedra in 3D.
//!
//! A mesh owns vertex coordinates (meters), cell connectivity and a set of
//! boundary facets keyed by string tag. Facet normals are outward and cached
//! at construction; moving the vertices (ALE) recomputes them.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One boundary facet: an edge (2D) or triangle (3D) on the mesh surface.
#[derive(Debug, Clone)]
pub struct BoundaryFacet<T: Real> {
    /// Vertex indices; the first `dim` entries are used.
    pub vertices: [usize; 3],
    /// Index of the unique cell owning this facet.
    pub cell: usize,
    /// Outward unit normal.
    pub normal: [T; 3],
    /// Length (2D) or area (3D).
    pub measure: T,
}

#[derive(Debug, Clone)]
pub struct Mesh<T: Real> {
    dim: usize,
    /// Interleaved coordinates, `dim` per vertex.
    vertices: Vec<T>,
    /// Interleaved connectivity, `dim + 1` per cell.
    cells: Vec<usize>,
    facets: Vec<BoundaryFacet<T>>,
    /// Tag -> indices into `facets`. BTreeMap keeps iteration deterministic.
    tags: BTreeMap<String, Vec<usize>>,
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh from raw arrays, derives the boundary by cell adjacency
    /// and tags facets with `classify` (facet vertex coordinates -> tag).
    pub fn from_raw(
        dim: usize,
        vertices: Vec<T>,
        cells: Vec<usize>,
        classify: impl Fn(&[[T; 3]]) -> String,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::invalid("mesh dimension must be 2 or 3"));
        }
        if vertices.len() % dim != 0 || cells.len() % (dim + 1) != 0 {
            return Err(Error::invalid("ragged vertex or cell array"));
        }
        let mut mesh = Mesh {
            dim,
            vertices,
            cells,
            facets: Vec::new(),
            tags: BTreeMap::new(),
        };
        mesh.orient_cells()?;
        mesh.rebuild_boundary(classify)?;
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len() / self.dim
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len() / (self.dim + 1)
    }

    /// Vertex coordinates padded to three components (z = 0 in 2D).
    pub fn vertex(&self, i: usize) -> [T; 3] {
        let mut p = [T::zero(); 3];
        for d in 0..self.dim {
            p[d] = self.vertices[i * self.dim + d];
        }
        p
    }

    pub fn cell(&self, c: usize) -> &[usize] {
        &self.cells[c * (self.dim + 1)..(c + 1) * (self.dim + 1)]
    }

    pub fn facets(&self) -> &[BoundaryFacet<T>] {
        &self.facets
    }

    pub fn tag_names(&self) -> impl Iterator<Item = &str> {
        self.tags.keys().map(|s| s.as_str())
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.contains_key(tag)
    }

    /// Facets under a tag, or `UnknownTag`.
    pub fn tagged_facets(&self, tag: &str) -> Result<impl Iterator<Item = &BoundaryFacet<T>>> {
        let idx = self
            .tags
            .get(tag)
            .ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
        Ok(idx.iter().map(move |&i| &self.facets[i]))
    }

    /// Vertex indices appearing in any facet of `tag`, sorted and deduplicated.
    pub fn tagged_vertices(&self, tag: &str) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = self
            .tagged_facets(tag)?
            .flat_map(|f| f.vertices[..self.dim].to_vec())
            .collect();
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// All boundary vertices, sorted.
    pub fn boundary_vertices(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .facets
            .iter()
            .flat_map(|f| f.vertices[..self.dim].to_vec())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn rename_tag(&mut self, old: &str, new: &str) -> Result<()> {
        let idx = self
            .tags
            .remove(old)
            .ok_or_else(|| Error::UnknownTag(old.to_string()))?;
        self.tags.entry(new.to_string()).or_default().extend(idx);
        Ok(())
    }

    /// Merges several tags into one.
    pub fn merge_tags(&mut self, old: &[&str], new: &str) -> Result<()> {
        for tag in old {
            self.rename_tag(tag, new)?;
        }
        Ok(())
    }

    /// Moves a facet to `new` when all its vertices satisfy `pred`.
    pub fn split_tag(
        &mut self,
        tag: &str,
        new: &str,
        pred: impl Fn(&[T; 3]) -> bool,
    ) -> Result<()> {
        let idx = self
            .tags
            .remove(tag)
            .ok_or_else(|| Error::UnknownTag(tag.to_string()))?;
        let (moved, kept): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&f| {
            self.facets[f].vertices[..self.dim]
                .iter()
                .all(|&v| pred(&self.vertex(v)))
        });
        if !kept.is_empty() {
            self.tags.insert(tag.to_string(), kept);
        }
        if !moved.is_empty() {
            self.tags.entry(new.to_string()).or_default().extend(moved);
        }
        Ok(())
    }

    /// Signed cell volume (area in 2D). Positive after orientation.
    pub fn cell_volume(&self, c: usize) -> T {
        let verts = self.cell(c);
        let p0 = self.vertex(verts[0]);
        if self.dim == 2 {
            let p1 = self.vertex(verts[1]);
            let p2 = self.vertex(verts[2]);
            let a = [p1[0] - p0[0], p1[1] - p0[1]];
            let b = [p2[0] - p0[0], p2[1] - p0[1]];
            (a[0] * b[1] - a[1] * b[0]) / T::from_f64_lit(2.0)
        } else {
            let p1 = self.vertex(verts[1]);
            let p2 = self.vertex(verts[2]);
            let p3 = self.vertex(verts[3]);
            let a = sub(p1, p0);
            let b = sub(p2, p0);
            let c3 = sub(p3, p0);
            dot(cross(a, b), c3) / T::from_f64_lit(6.0)
        }
    }

    pub fn total_volume(&self) -> T {
        (0..self.num_cells()).fold(T::zero(), |acc, c| acc + self.cell_volume(c))
    }

    /// P1 shape-function gradients on cell `c`, one `[T; 3]` per local vertex,
    /// together with the cell volume.
    pub fn cell_gradients(&self, c: usize) -> (T, Vec<[T; 3]>) {
        let verts = self.cell(c);
        let vol = self.cell_volume(c);
        let n = self.dim + 1;
        let mut grads = vec![[T::zero(); 3]; n];
        if self.dim == 2 {
            let p: Vec<[T; 3]> = verts.iter().map(|&v| self.vertex(v)).collect();
            let two_a = vol * T::from_f64_lit(2.0);
            for i in 0..3 {
                let j = (i + 1) % 3;
                let k = (i + 2) % 3;
                // grad lambda_i = rot90(p_k - p_j) / (2A)
                grads[i][0] = (p[j][1] - p[k][1]) / two_a;
                grads[i][1] = (p[k][0] - p[j][0]) / two_a;
            }
        } else {
            let p: Vec<[T; 3]> = verts.iter().map(|&v| self.vertex(v)).collect();
            let six_v = vol * T::from_f64_lit(6.0);
            for i in 0..4 {
                // Opposite-face normal scaled by its doubled area, inward.
                let (a, b, c3) = match i {
                    0 => (p[1], p[3], p[2]),
                    1 => (p[0], p[2], p[3]),
                    2 => (p[0], p[3], p[1]),
                    _ => (p[0], p[1], p[2]),
                };
                let n = cross(sub(b, a), sub(c3, a));
                grads[i] = [n[0] / six_v, n[1] / six_v, n[2] / six_v];
            }
        }
        (vol, grads)
    }

    /// Cell diameter: the longest edge.
    pub fn cell_diameter(&self, c: usize) -> T {
        let verts = self.cell(c);
        let mut h = T::zero();
        for i in 0..verts.len() {
            for j in (i + 1)..verts.len() {
                let d = norm(sub(self.vertex(verts[j]), self.vertex(verts[i])));
                if d > h {
                    h = d;
                }
            }
        }
        h
    }

    /// Minimum edge length over all cells.
    pub fn min_edge_length(&self) -> T {
        let mut h = T::infinity();
        for c in 0..self.num_cells() {
            let verts = self.cell(c);
            for i in 0..verts.len() {
                for j in (i + 1)..verts.len() {
                    let d = norm(sub(self.vertex(verts[j]), self.vertex(verts[i])));
                    if d < h {
                        h = d;
                    }
                }
            }
        }
        h
    }

    /// Shortest edge among cells touching vertex `v`.
    pub fn local_edge_length(&self, incident: &[Vec<usize>], v: usize) -> T {
        let mut h = T::infinity();
        for &c in &incident[v] {
            let verts = self.cell(c);
            for i in 0..verts.len() {
                for j in (i + 1)..verts.len() {
                    let d = norm(sub(self.vertex(verts[j]), self.vertex(verts[i])));
                    if d < h {
                        h = d;
                    }
                }
            }
        }
        h
    }

    /// Vertex -> incident cell indices.
    pub fn vertex_to_cells(&self) -> Vec<Vec<usize>> {
        let mut map = vec![Vec::new(); self.num_vertices()];
        for c in 0..self.num_cells() {
            for &v in self.cell(c) {
                map[v].push(c);
            }
        }
        map
    }

    /// Returns a copy with vertices displaced by a vector field given as an
    /// interleaved array of length `dim * num_vertices`.
    pub fn displaced(&self, displacement: &[T]) -> Result<Mesh<T>> {
        if displacement.len() != self.vertices.len() {
            return Err(Error::invalid("displacement length mismatch"));
        }
        let mut out = self.clone();
        for (v, d) in out.vertices.iter_mut().zip(displacement) {
            *v = *v + *d;
        }
        out.refresh_geometry()?;
        Ok(out)
    }

    /// Replaces the coordinates wholesale (same topology and tags), e.g.
    /// when re-binding a snapshot's deformed geometry.
    pub fn with_coordinates(&self, points: &[[T; 3]]) -> Result<Mesh<T>> {
        if points.len() != self.num_vertices() {
            return Err(Error::invalid("coordinate count mismatch"));
        }
        let mut out = self.clone();
        for (i, p) in points.iter().enumerate() {
            for d in 0..self.dim {
                out.vertices[i * self.dim + d] = p[d];
            }
        }
        out.refresh_geometry()?;
        out.validate()?;
        Ok(out)
    }

    /// Applies an arbitrary coordinate map, keeping topology and tags.
    pub fn mapped(&self, f: impl Fn(&[T; 3]) -> [T; 3]) -> Result<Mesh<T>> {
        let mut out = self.clone();
        for i in 0..self.num_vertices() {
            let q = f(&self.vertex(i));
            for d in 0..self.dim {
                out.vertices[i * self.dim + d] = q[d];
            }
        }
        out.orient_cells()?;
        out.refresh_geometry()?;
        out.validate()?;
        Ok(out)
    }

    /// Recomputes facet normals and measures after a coordinate change.
    pub fn refresh_geometry(&mut self) -> Result<()> {
        for i in 0..self.facets.len() {
            let (normal, measure) = self.facet_geometry(self.facets[i].vertices, self.facets[i].cell)?;
            self.facets[i].normal = normal;
            self.facets[i].measure = measure;
        }
        Ok(())
    }

    fn facet_geometry(&self, fverts: [usize; 3], cell: usize) -> Result<([T; 3], T)> {
        let (mut normal, measure) = if self.dim == 2 {
            let a = self.vertex(fverts[0]);
            let b = self.vertex(fverts[1]);
            let t = sub(b, a);
            let len = norm(t);
            if len <= T::zero() {
                return Err(Error::DegenerateGeometry("zero-length boundary edge".into()));
            }
            ([t[1] / len, -t[0] / len, T::zero()], len)
        } else {
            let a = self.vertex(fverts[0]);
            let b = self.vertex(fverts[1]);
            let c = self.vertex(fverts[2]);
            let n = cross(sub(b, a), sub(c, a));
            let two_area = norm(n);
            if two_area <= T::zero() {
                return Err(Error::DegenerateGeometry("zero-area boundary facet".into()));
            }
            (
                [n[0] / two_area, n[1] / two_area, n[2] / two_area],
                two_area / T::from_f64_lit(2.0),
            )
        };
        // Orient outward: away from the owning cell centroid.
        let centroid = self.cell_centroid(cell);
        let fc = self.facet_centroid_of(fverts);
        let to_face = sub(fc, centroid);
        if dot(normal, to_face) < T::zero() {
            for n in normal.iter_mut() {
                *n = -*n;
            }
        }
        Ok((normal, measure))
    }

    pub fn cell_centroid(&self, c: usize) -> [T; 3] {
        let verts = self.cell(c);
        let mut out = [T::zero(); 3];
        for &v in verts {
            let p = self.vertex(v);
            for d in 0..3 {
                out[d] = out[d] + p[d];
            }
        }
        let n = T::from_f64_lit((self.dim + 1) as f64);
        for d in 0..3 {
            out[d] = out[d] / n;
        }
        out
    }

    fn facet_centroid_of(&self, fverts: [usize; 3]) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for &v in &fverts[..self.dim] {
            let p = self.vertex(v);
            for d in 0..3 {
                out[d] = out[d] + p[d];
            }
        }
        let n = T::from_f64_lit(self.dim as f64);
        for d in 0..3 {
            out[d] = out[d] / n;
        }
        out
    }

    /// Flips negatively oriented cells so every signed volume is positive.
    fn orient_cells(&mut self) -> Result<()> {
        for c in 0..self.num_cells() {
            if self.cell_volume(c) < T::zero() {
                let base = c * (self.dim + 1);
                self.cells.swap(base, base + 1);
            }
            if self.cell_volume(c) <= T::zero() {
                return Err(Error::DegenerateGeometry(format!(
                    "cell {c} has non-positive volume"
                )));
            }
        }
        Ok(())
    }

    /// Finds boundary facets by adjacency and tags them.
    fn rebuild_boundary(&mut self, classify: impl Fn(&[[T; 3]]) -> String) -> Result<()> {
        let mut counts: HashMap<Vec<usize>, (usize, [usize; 3])> = HashMap::new();
        for c in 0..self.num_cells() {
            for (fverts, _) in cell_facets(self.cell(c), self.dim) {
                let mut key = fverts[..self.dim].to_vec();
                key.sort_unstable();
                counts
                    .entry(key)
                    .and_modify(|e| e.0 += 1)
                    .or_insert((1, fverts));
            }
        }
        // Re-scan to recover the owning cell of each boundary facet.
        let mut owner: HashMap<Vec<usize>, usize> = HashMap::new();
        for c in 0..self.num_cells() {
            for (fverts, _) in cell_facets(self.cell(c), self.dim) {
                let mut key = fverts[..self.dim].to_vec();
                key.sort_unstable();
                if counts.get(&key).map(|e| e.0) == Some(1) {
                    owner.insert(key, c);
                }
            }
        }
        let mut entries: Vec<(Vec<usize>, [usize; 3])> = counts
            .into_iter()
            .filter(|(_, (count, _))| *count == 1)
            .map(|(key, (_, fverts))| (key, fverts))
            .collect();
        entries.sort(); // deterministic facet order
        self.facets.clear();
        self.tags.clear();
        for (key, fverts) in entries {
            let cell = owner[&key];
            let (normal, measure) = self.facet_geometry(fverts, cell)?;
            let coords: Vec<[T; 3]> = fverts[..self.dim].iter().map(|&v| self.vertex(v)).collect();
            let tag = classify(&coords);
            let idx = self.facets.len();
            self.facets.push(BoundaryFacet {
                vertices: fverts,
                cell,
                normal,
                measure,
            });
            self.tags.entry(tag).or_default().push(idx);
        }
        Ok(())
    }

    /// Checks the structural invariants: positive volumes, every boundary
    /// facet in exactly one cell and one tag, tags covering the boundary.
    pub fn validate(&self) -> Result<()> {
        for c in 0..self.num_cells() {
            if !(self.cell_volume(c) > T::zero()) {
                return Err(Error::DegenerateGeometry(format!(
                    "cell {c} has non-positive volume"
                )));
            }
        }
        let tagged: usize = self.tags.values().map(|v| v.len()).sum();
        if tagged != self.facets.len() {
            return Err(Error::invalid("tags do not partition the boundary"));
        }
        let mut seen = vec![false; self.facets.len()];
        for idx in self.tags.values().flatten() {
            if seen[*idx] {
                return Err(Error::invalid("facet assigned to more than one tag"));
            }
            seen[*idx] = true;
        }
        Ok(())
    }
}

/// Local facets of one cell: (facet vertices, opposite local vertex).
fn cell_facets(cell: &[usize], dim: usize) -> Vec<([usize; 3], usize)> {
    if dim == 2 {
        vec![
            ([cell[1], cell[2], usize::MAX], 0),
            ([cell[2], cell[0], usize::MAX], 1),
            ([cell[0], cell[1], usize::MAX], 2),
        ]
    } else {
        vec![
            ([cell[1], cell[2], cell[3]], 0),
            ([cell[0], cell[2], cell[3]], 1),
            ([cell[0], cell[1], cell[3]], 2),
            ([cell[0], cell[1], cell[2]], 3),
        ]
    }
}

/// Structured simplicial mesh of an axis-aligned box.
///
/// Boundary tags are `x0`/`x1`/`y0`/`y1` (and `z0`/`z1` in 3D). Each grid
/// quad splits into 2 triangles; each grid cube into the 6 tetrahedra
/// sharing its main diagonal.
pub fn generate_box_mesh<T: Real>(
    dim: usize,
    extents: &[f64],
    resolution: &[usize],
) -> Result<Mesh<T>> {
    if dim != 2 && dim != 3 {
        return Err(Error::invalid("mesh dimension must be 2 or 3"));
    }
    if extents.len() != dim || resolution.len() != dim {
        return Err(Error::invalid("extents/resolution length must equal dim"));
    }
    if extents.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::invalid("box extents must be positive"));
    }
    if resolution.iter().any(|&n| n == 0) {
        return Err(Error::invalid("resolution must be at least 1 per axis"));
    }

    let n = resolution;
    let l = extents;
    let coord = |axis: usize, i: usize| -> T {
        T::from_f64_lit(l[axis]) * T::from_f64_lit(i as f64) / T::from_f64_lit(n[axis] as f64)
    };

    let mut vertices = Vec::new();
    let mut cells = Vec::new();

    if dim == 2 {
        let (nx, ny) = (n[0], n[1]);
        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push(coord(0, i));
                vertices.push(coord(1, j));
            }
        }
        for j in 0..ny {
            for i in 0..nx {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v01 = vid(i, j + 1);
                let v11 = vid(i + 1, j + 1);
                cells.extend_from_slice(&[v00, v10, v11]);
                cells.extend_from_slice(&[v00, v11, v01]);
            }
        }
    } else {
        let (nx, ny, nz) = (n[0], n[1], n[2]);
        let vid = |i: usize, j: usize, k: usize| (k * (ny + 1) + j) * (nx + 1) + i;
        for k in 0..=nz {
            for j in 0..=ny {
                for i in 0..=nx {
                    vertices.push(coord(0, i));
                    vertices.push(coord(1, j));
                    vertices.push(coord(2, k));
                }
            }
        }
        // Six tetrahedra per cube, all sharing the diagonal v000-v111.
        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let corner = |b: [usize; 3]| vid(i + b[0], j + b[1], k + b[2]);
                    for perm in PERMS {
                        let mut b = [0usize; 3];
                        let v0 = corner(b);
                        b[perm[0]] = 1;
                        let v1 = corner(b);
                        b[perm[1]] = 1;
                        let v2 = corner(b);
                        b[perm[2]] = 1;
                        let v3 = corner(b);
                        cells.extend_from_slice(&[v0, v1, v2, v3]);
                    }
                }
            }
        }
    }

    let tol = 1e-12;
    let classify = move |coords: &[[T; 3]]| -> String {
        for axis in 0..dim {
            let lo = coords
                .iter()
                .all(|p| p[axis].to_f64_lossy().abs() <= tol * l[axis]);
            let hi = coords
                .iter()
                .all(|p| (p[axis].to_f64_lossy() - l[axis]).abs() <= tol * l[axis]);
            let name = ["x", "y", "z"][axis];
            if lo {
                return format!("{name}0");
            }
            if hi {
                return format!("{name}1");
            }
        }
        "untagged".to_string()
    };

    Mesh::from_raw(dim, vertices, cells, classify)
}

pub(crate) fn sub<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn cross<T: Real>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(crate) fn dot<T: Real>(a: [T; 3], b: [T; 3]) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm<T: Real>(a: [T; 3]) -> T {
    dot(a, a).sqrt()
}
