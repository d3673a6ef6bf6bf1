//! Biomarker extraction, normalization against physiological reference
//! ranges, wall shear stress and probe reductions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::femops::lumped_vertex_volumes;
use crate::nsale::FluidProperties;
use crate::{Field, Mesh};

/// A physiological reference range: either a closed interval or a
/// mean +- standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RangeKind {
    Interval { low: f64, high: f64 },
    MeanSd { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerRange {
    pub name: String,
    pub units: String,
    #[serde(flatten)]
    pub range: RangeKind,
    pub citation: String,
}

impl BiomarkerRange {
    pub fn validate(&self) -> Result<()> {
        match self.range {
            RangeKind::Interval { low, high } => {
                if !(low < high) {
                    return Err(Error::invalid(format!(
                        "range `{}`: low must be below high",
                        self.name
                    )));
                }
            }
            RangeKind::MeanSd { sd, .. } => {
                if !(sd > 0.0) {
                    return Err(Error::invalid(format!(
                        "range `{}`: sd must be positive",
                        self.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RangeRegistry {
    #[serde(rename = "biomarker", default)]
    pub entries: Vec<BiomarkerRange>,
}

impl RangeRegistry {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let reg: RangeRegistry =
            toml::from_str(text).map_err(|e| Error::Parse(format!("ranges: {e}")))?;
        for r in &reg.entries {
            r.validate()?;
        }
        Ok(reg)
    }

    /// The bundled registry of reference ranges.
    pub fn builtin() -> Self {
        Self::from_toml_str(include_str!("../data/ranges.toml")).expect("bundled ranges parse")
    }

    pub fn get(&self, name: &str) -> Option<&BiomarkerRange> {
        self.entries.iter().find(|r| r.name == name)
    }
}

/// Maps a value into the normalized coordinate where `[-1, 1]` is in-range:
/// interval ranges map affinely (`low -> -1`, `high -> +1`), mean +- sd
/// ranges use the z-score.
pub fn normalize_biomarker(x: f64, range: &BiomarkerRange) -> f64 {
    match range.range {
        RangeKind::Interval { low, high } => 2.0 * (x - low) / (high - low) - 1.0,
        RangeKind::MeanSd { mean, sd } => (x - mean) / sd,
    }
}

pub fn in_range(x: f64, range: &BiomarkerRange) -> bool {
    normalize_biomarker(x, range).abs() <= 1.0
}

/// Display-side clipping for plots of z-scores.
pub fn clip_display(n: f64) -> f64 {
    n.clamp(-3.0, 3.0)
}

/// Scalar chamber biomarkers over one beat window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChamberBiomarkers {
    /// End-systolic volume: the minimum over the window (mL).
    pub esv: f64,
    /// End-diastolic volume: the maximum over the window (mL).
    pub edv: f64,
    /// Stroke volume `EDV - ESV` (mL).
    pub sv: f64,
    /// Ejection fraction `SV / EDV`, dimensionless in [0, 1].
    pub ef: f64,
    /// Peak flowrate (mL/s).
    pub q_max: f64,
    /// Peak pressure (mmHg).
    pub p_max: f64,
    /// Time-averaged pressure (mmHg).
    pub p_mean: f64,
}

/// Extracts chamber biomarkers from sampled series restricted to
/// `[window_start, window_start + period)`.
pub fn chamber_biomarkers(
    times: &[f64],
    volume: &[f64],
    flow: &[f64],
    pressure: &[f64],
    window_start: f64,
    period: f64,
) -> Result<ChamberBiomarkers> {
    if times.len() != volume.len() || times.len() != flow.len() || times.len() != pressure.len() {
        return Err(Error::invalid("series length mismatch"));
    }
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window_start && times[i] < window_start + period)
        .collect();
    if idx.is_empty() {
        return Err(Error::invalid("empty beat window"));
    }
    let mut esv = f64::INFINITY;
    let mut edv = f64::NEG_INFINITY;
    let mut q_max = f64::NEG_INFINITY;
    let mut p_max = f64::NEG_INFINITY;
    for &i in &idx {
        esv = esv.min(volume[i]);
        edv = edv.max(volume[i]);
        q_max = q_max.max(flow[i]);
        p_max = p_max.max(pressure[i]);
    }
    // time average by the trapezoidal rule over the window samples
    let mut p_int = 0.0;
    let mut t_int = 0.0;
    for w in idx.windows(2) {
        let dt = times[w[1]] - times[w[0]];
        p_int += 0.5 * (pressure[w[0]] + pressure[w[1]]) * dt;
        t_int += dt;
    }
    let p_mean = if t_int > 0.0 {
        p_int / t_int
    } else {
        pressure[idx[0]]
    };
    let sv = edv - esv;
    let ef = if edv > 0.0 { sv / edv } else { 0.0 };
    Ok(ChamberBiomarkers {
        esv,
        edv,
        sv,
        ef,
        q_max,
        p_max,
        p_mean,
    })
}

/// One row of a biomarker report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub value: f64,
    pub units: String,
    pub normalized: Option<f64>,
    pub in_range: Option<bool>,
    pub citation: String,
}

/// Builds report rows for named values, attaching normalization where the
/// registry has a matching range.
pub fn build_report(values: &[(String, f64)], registry: &RangeRegistry) -> Vec<ReportRow> {
    values
        .iter()
        .map(|(name, value)| match registry.get(name) {
            Some(range) => ReportRow {
                name: name.clone(),
                value: *value,
                units: range.units.clone(),
                normalized: Some(normalize_biomarker(*value, range)),
                in_range: Some(in_range(*value, range)),
                citation: range.citation.clone(),
            },
            None => ReportRow {
                name: name.clone(),
                value: *value,
                units: String::new(),
                normalized: None,
                in_range: None,
                citation: String::new(),
            },
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("name,value,units,normalized,in_range,citation\n");
    for r in rows {
        let normalized = r
            .normalized
            .map(|n| format!("{n:.6}"))
            .unwrap_or_default();
        let in_range = r
            .in_range
            .map(|b| b.to_string())
            .unwrap_or_default();
        out.push_str(&format!(
            "{},{:?},{},{},{},{}\n",
            r.name, r.value, r.units, normalized, in_range, r.citation
        ));
    }
    out
}

/// Wall shear stress on the tagged boundary: the tangential part of the
/// viscous traction `tau n` with `tau = 2 mu eps(u)`.
///
/// Velocity gradients are recovered by volume-weighted averaging of the
/// constant cell gradients onto boundary vertices; vertex normals are
/// area-weighted facet normals. Returned as a full vector field, zero away
/// from the requested walls.
pub fn wss_field(mesh: &Mesh, u: &Field, props: &FluidProperties, wall_tags: &[String]) -> Result<Field> {
    u.check_compatible(mesh)?;
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    // volume-weighted average of grad u per vertex
    let mut grad = vec![[[0.0; 3]; 3]; nv]; // grad[v][d][e] = d u_d / d x_e
    let mut weight = vec![0.0; nv];
    for c in 0..mesh.num_cells() {
        let (vol, grads) = mesh.cell_gradients(c);
        let verts = mesh.cell(c);
        let mut cell_grad = [[0.0; 3]; 3];
        for (i, &v) in verts.iter().enumerate() {
            for d in 0..dim {
                for e in 0..dim {
                    cell_grad[d][e] += u.get(v, d) * grads[i][e];
                }
            }
        }
        for &v in verts {
            weight[v] += vol;
            for d in 0..dim {
                for e in 0..dim {
                    grad[v][d][e] += vol * cell_grad[d][e];
                }
            }
        }
    }
    for v in 0..nv {
        if weight[v] > 0.0 {
            for d in 0..dim {
                for e in 0..dim {
                    grad[v][d][e] /= weight[v];
                }
            }
        }
    }
    // area-weighted vertex normals per requested tag set
    let mut normal = vec![[0.0; 3]; nv];
    for tag in wall_tags {
        for facet in mesh.tagged_facets(tag)? {
            let share = facet.measure / dim as f64;
            for &v in &facet.vertices[..dim] {
                for d in 0..dim {
                    normal[v][d] += share * facet.normal[d];
                }
            }
        }
    }
    let mut out = Field::zeros(mesh, dim);
    for v in 0..nv {
        let nlen = (normal[v][0].powi(2) + normal[v][1].powi(2) + normal[v][2].powi(2)).sqrt();
        if nlen == 0.0 {
            continue;
        }
        let n: Vec<f64> = (0..3).map(|d| normal[v][d] / nlen).collect();
        // traction t = 2 mu eps(u) n
        let mut traction = [0.0; 3];
        for d in 0..dim {
            for e in 0..dim {
                let eps_de = 0.5 * (grad[v][d][e] + grad[v][e][d]);
                traction[d] += 2.0 * props.mu * eps_de * n[e];
            }
        }
        let tn: f64 = (0..dim).map(|d| traction[d] * n[d]).sum();
        for d in 0..dim {
            out.set(v, d, traction[d] - tn * n[d]);
        }
    }
    Ok(out)
}

/// Time-averaged wall shear stress: trapezoidal mean of `|WSS|` per vertex
/// over a uniformly sampled series.
pub fn tawss(wss_series: &[Field]) -> Result<Field> {
    let first = wss_series
        .first()
        .ok_or_else(|| Error::invalid("empty WSS series"))?;
    let nv = first.num_vertices();
    let dim = first.components();
    let n = wss_series.len();
    let mut magnitudes = vec![vec![0.0; n]; nv];
    for (k, f) in wss_series.iter().enumerate() {
        if f.num_vertices() != nv || f.components() != dim {
            return Err(Error::invalid("inconsistent WSS series fields"));
        }
        for v in 0..nv {
            let w = f.vector_at(v);
            magnitudes[v][k] = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        }
    }
    let mut values = Vec::with_capacity(nv);
    if n == 1 {
        values.extend(magnitudes.iter().map(|m| m[0]));
    } else {
        for m in &magnitudes {
            // uniform sampling: trapezoid = half weights at the ends
            let mut acc = 0.5 * (m[0] + m[n - 1]);
            for &x in &m[1..n - 1] {
                acc += x;
            }
            values.push(acc / (n - 1) as f64);
        }
    }
    Field::from_parts(1, nv, values)
}

/// Min/mean/max of a scalar boundary field over the vertices of a tag.
pub fn regional_stats(mesh: &Mesh, scalar: &Field, tag: &str) -> Result<(f64, f64, f64)> {
    scalar.check_compatible(mesh)?;
    let verts = mesh.tagged_vertices(tag)?;
    if verts.is_empty() {
        return Err(Error::invalid(format!("tag `{tag}` has no vertices")));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &v in &verts {
        let x = scalar.get(v, 0);
        lo = lo.min(x);
        hi = hi.max(x);
        sum += x;
    }
    Ok((lo, sum / verts.len() as f64, hi))
}

/// Spherical control volume used for probe reductions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSphere {
    pub center: [f64; 3],
    pub radius: f64,
}

impl ControlSphere {
    fn contains(&self, p: &[f64; 3]) -> bool {
        let d2 = (p[0] - self.center[0]).powi(2)
            + (p[1] - self.center[1]).powi(2)
            + (p[2] - self.center[2]).powi(2);
        d2 <= self.radius * self.radius
    }
}

/// Volume-weighted mean speed `|u|` over the vertices inside the sphere.
pub fn probe_speed(mesh: &Mesh, u: &Field, sphere: &ControlSphere) -> Result<f64> {
    probe_reduce(mesh, sphere, |v| {
        let vel = u.vector_at(v);
        (vel[0] * vel[0] + vel[1] * vel[1] + vel[2] * vel[2]).sqrt()
    })
}

/// Volume-weighted mean of a scalar field over the sphere.
pub fn probe_mean_scalar(mesh: &Mesh, f: &Field, sphere: &ControlSphere) -> Result<f64> {
    probe_reduce(mesh, sphere, |v| f.get(v, 0))
}

fn probe_reduce(mesh: &Mesh, sphere: &ControlSphere, value: impl Fn(usize) -> f64) -> Result<f64> {
    let vols = lumped_vertex_volumes(mesh);
    let mut acc = 0.0;
    let mut total = 0.0;
    for v in 0..mesh.num_vertices() {
        if sphere.contains(&mesh.vertex(v)) {
            acc += vols[v] * value(v);
            total += vols[v];
        }
    }
    if total <= 0.0 {
        return Err(Error::invalid(
            "control sphere does not intersect the mesh",
        ));
    }
    Ok(acc / total)
}

/// Per-tag series reductions used by the WSS CLI path.
pub fn tawss_from_snapshots(
    mesh: &Mesh,
    velocity_snapshots: &[Field],
    props: &FluidProperties,
    wall_tags: &[String],
) -> Result<Field> {
    let series: Result<Vec<Field>> = velocity_snapshots
        .iter()
        .map(|u| wss_field(mesh, u, props, wall_tags))
        .collect();
    tawss(&series?)
}

pub type TagSeries = BTreeMap<String, Vec<f64>>;
