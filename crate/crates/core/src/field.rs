//! Nodal fields on a mesh: one value block per vertex.
//!
//! Storage is vertex-major: `values[v * components + c]`. A scalar field has
//! one component, a velocity or displacement field has `mesh.dim()`.

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Field<T: Real> {
    components: usize,
    num_vertices: usize,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(mesh: &Mesh<T>, components: usize) -> Self {
        Field {
            components,
            num_vertices: mesh.num_vertices(),
            values: vec![T::zero(); components * mesh.num_vertices()],
        }
    }

    pub fn from_values(mesh: &Mesh<T>, components: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != components * mesh.num_vertices() {
            return Err(Error::invalid(format!(
                "field length {} does not match {} x {} vertices",
                values.len(),
                components,
                mesh.num_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("field values".into()));
        }
        Ok(Field {
            components,
            num_vertices: mesh.num_vertices(),
            values,
        })
    }

    /// Builds a field from explicit sizes, without a mesh at hand.
    pub fn from_parts(components: usize, num_vertices: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != components * num_vertices {
            return Err(Error::invalid("field length mismatch"));
        }
        Ok(Field {
            components,
            num_vertices,
            values,
        })
    }

    /// Evaluates `f(vertex coordinates)` into a new field.
    pub fn from_fn(mesh: &Mesh<T>, components: usize, f: impl Fn(&[T; 3]) -> Vec<T>) -> Self {
        let mut values = Vec::with_capacity(components * mesh.num_vertices());
        for v in 0..mesh.num_vertices() {
            let out = f(&mesh.vertex(v));
            debug_assert_eq!(out.len(), components);
            values.extend(out);
        }
        Field {
            components,
            num_vertices: mesh.num_vertices(),
            values,
        }
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn get(&self, vertex: usize, component: usize) -> T {
        self.values[vertex * self.components + component]
    }

    pub fn set(&mut self, vertex: usize, component: usize, value: T) {
        self.values[vertex * self.components + component] = value;
    }

    /// Vector value at a vertex, zero-padded to three entries.
    pub fn vector_at(&self, vertex: usize) -> [T; 3] {
        let mut out = [T::zero(); 3];
        for c in 0..self.components.min(3) {
            out[c] = self.get(vertex, c);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Checks the field matches a mesh in size.
    pub fn check_compatible(&self, mesh: &Mesh<T>) -> Result<()> {
        if self.num_vertices != mesh.num_vertices() {
            return Err(Error::invalid("field bound to a different mesh size"));
        }
        Ok(())
    }

    pub fn axpy(&mut self, alpha: T, other: &Field<T>) {
        for (a, b) in self.values.iter_mut().zip(other.values.iter()) {
            *a = *a + alpha * *b;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for a in self.values.iter_mut() {
            *a = *a * alpha;
        }
    }

    pub fn max_norm(&self) -> T {
        self.values
            .iter()
            .fold(T::zero(), |m, v| if v.abs() > m { v.abs() } else { m })
    }
}
