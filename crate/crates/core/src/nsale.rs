//! Stabilized P1-P1 solver for the incompressible Navier-Stokes equations in
//! ALE form, advanced by semi-implicit BDF1.
//!
//! One linear system per step: the convective velocity is frozen at
//! `u_n - u_ale`, the viscous, pressure, penalty and backflow terms are
//! implicit. Equal-order pairs are stabilized with residual-based SUPG/PSPG
//! plus grad-div. Boundary conditions are mean-pressure Neumann data on the
//! coupled ports and the wall kinematic condition `u = u_ale`.
//!
//! Velocity dofs are vertex-major (`v * dim + d`), pressure dofs follow the
//! velocity block.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::femops::boundary_integral_flux;
use crate::parallel::chunked_map_reduce;
use crate::quadrature::{cell_rule, facet_rule};
use crate::solver::{solve_linear, Method, SolveOptions};
use crate::sparse::CooBuilder;
use crate::{Field, Mesh, SparseOperator};

/// Constant blood properties.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FluidProperties {
    /// Density, kg/m^3.
    pub rho: f64,
    /// Dynamic viscosity, kg/(m s).
    pub mu: f64,
}

impl Default for FluidProperties {
    fn default() -> Self {
        // Physiological blood values.
        FluidProperties {
            rho: 1.06e3,
            mu: 3.5e-3,
        }
    }
}

impl FluidProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) || !(self.mu > 0.0) {
            return Err(Error::invalid("rho and mu must be positive"));
        }
        Ok(())
    }
}

/// Constants of the residual-based stabilization.
#[derive(Debug, Clone, Copy)]
pub struct StabilizationConstants {
    /// Transient weight in tau_momentum.
    pub sigma_t: f64,
    /// Inverse-inequality weight of the viscous term.
    pub c_inv: f64,
    /// Grad-div scale: `tau_continuity = h^2 / (c_graddiv * tau_momentum)`.
    pub c_graddiv: f64,
}

impl Default for StabilizationConstants {
    fn default() -> Self {
        StabilizationConstants {
            sigma_t: 4.0,
            c_inv: 36.0,
            c_graddiv: 4.0,
        }
    }
}

/// Per-cell stabilization parameters:
///
/// ```text
/// tau_m = ( sigma_t (rho/dt)^2 + (2 rho |u_conv| / h)^2 + (c_inv mu / h^2)^2 )^{-1/2}
/// tau_c = h^2 / (c_graddiv * tau_m)
/// ```
pub fn stabilization_parameters(
    mesh: &Mesh,
    u_conv: &Field,
    dt: f64,
    props: &FluidProperties,
    constants: &StabilizationConstants,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    u_conv.check_compatible(mesh)?;
    let dim = mesh.dim();
    let mut tau_m = Vec::with_capacity(mesh.num_cells());
    let mut tau_c = Vec::with_capacity(mesh.num_cells());
    for c in 0..mesh.num_cells() {
        let h = mesh.cell_diameter(c);
        let verts = mesh.cell(c);
        let mut speed2 = 0.0;
        for d in 0..dim {
            let mean: f64 =
                verts.iter().map(|&v| u_conv.get(v, d)).sum::<f64>() / verts.len() as f64;
            speed2 += mean * mean;
        }
        let speed = speed2.sqrt();
        let transient = constants.sigma_t * (props.rho / dt).powi(2);
        let advective = (2.0 * props.rho * speed / h).powi(2);
        let viscous = (constants.c_inv * props.mu / (h * h)).powi(2);
        let tm = 1.0 / (transient + advective + viscous).sqrt();
        tau_m.push(tm);
        tau_c.push(h * h / (constants.c_graddiv * tm));
    }
    Ok((tau_m, tau_c))
}

/// Everything one semi-implicit step needs.
pub struct FluidStepInputs<'a> {
    pub mesh: &'a Mesh,
    pub u_prev: &'a Field,
    pub u_ale: &'a Field,
    /// Assembled penalty operator over the velocity dofs, if any valve bands
    /// intersect the mesh.
    pub riis: Option<&'a SparseOperator>,
    /// Mean pressures (Pa) weakly imposed per Neumann tag.
    pub neumann: &'a BTreeMap<String, f64>,
    /// Tags with the kinematic wall condition `u = u_ale`.
    pub wall_tags: &'a [String],
    pub dt: f64,
    pub props: FluidProperties,
    pub stab: StabilizationConstants,
    /// Inertial backflow stabilization on Neumann boundaries.
    pub backflow: bool,
    pub backflow_beta: f64,
    pub solve: SolveOptions,
}

impl<'a> FluidStepInputs<'a> {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::invalid("dt must be positive"));
        }
        self.props.validate()?;
        self.u_prev.check_compatible(self.mesh)?;
        self.u_ale.check_compatible(self.mesh)?;
        for tag in self.neumann.keys() {
            if !self.mesh.has_tag(tag) {
                return Err(Error::UnknownTag(tag.clone()));
            }
        }
        for tag in self.wall_tags {
            if !self.mesh.has_tag(tag) {
                return Err(Error::UnknownTag(tag.clone()));
            }
            if self.neumann.contains_key(tag) {
                return Err(Error::invalid(format!(
                    "tag `{tag}` assigned both wall and Neumann conditions"
                )));
            }
        }
        if !self.u_prev.is_finite() || !self.u_ale.is_finite() {
            return Err(Error::NonFinite("fluid step velocity inputs".into()));
        }
        Ok(())
    }
}

/// Diagnostics of one step.
#[derive(Debug, Clone)]
pub struct FluidStepReport {
    /// Advective CFL estimate `max |u_conv| dt / h`; advisory only.
    pub cfl: f64,
    /// Exactly one assembled linear system per step.
    pub systems_assembled: usize,
}

/// Advances velocity and pressure by one BDF1 step.
pub fn fluid_step(inputs: &FluidStepInputs<'_>) -> Result<(Field, Field, FluidStepReport)> {
    inputs.validate()?;
    let mesh = inputs.mesh;
    let dim = mesh.dim();
    let nv = mesh.num_vertices();
    let nu = nv * dim;
    let ndof = nu + nv;
    let rho = inputs.props.rho;
    let mu = inputs.props.mu;
    let dt = inputs.dt;

    // Frozen convective velocity u_n - u_ale.
    let mut conv = inputs.u_prev.clone();
    conv.axpy(-1.0, inputs.u_ale);
    let (tau_m, tau_c) =
        stabilization_parameters(mesh, &conv, dt, &inputs.props, &inputs.stab)?;

    let mut cfl: f64 = 0.0;
    for c in 0..mesh.num_cells() {
        let h = mesh.cell_diameter(c);
        let speed = mesh
            .cell(c)
            .iter()
            .map(|&v| {
                let b = conv.vector_at(v);
                (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt()
            })
            .fold(0.0, f64::max);
        cfl = cfl.max(speed * dt / h);
    }

    // Volume assembly, chunked over cells.
    let chunk_results = chunked_map_reduce(mesh.num_cells(), |range| {
        let mut coo = CooBuilder::new(ndof, ndof);
        let mut rhs = vec![0.0; ndof];
        let nloc = dim + 1;
        for c in range {
            let (vol, grads) = mesh.cell_gradients(c);
            let verts = mesh.cell(c);
            let tm = tau_m[c];
            let tc = tau_c[c];

            // viscous block and pressure coupling are quadrature-free
            for i in 0..nloc {
                for j in 0..nloc {
                    let gij = grads[i][0] * grads[j][0]
                        + grads[i][1] * grads[j][1]
                        + grads[i][2] * grads[j][2];
                    for d in 0..dim {
                        for e in 0..dim {
                            // Viscous operator in gradient (pseudo-traction)
                            // form: mu (grad u, grad v). Its natural boundary
                            // condition `-p n + mu du/dn` is satisfied
                            // exactly by parallel flows through open ends,
                            // which the mean-pressure coupling relies on.
                            // The full stress 2 mu eps(u) is equivalent in
                            // the interior and stays in the WSS path.
                            let mut val = if d == e { mu * vol * gij } else { 0.0 };
                            // grad-div stabilization
                            val += tc * vol * grads[i][d] * grads[j][e];
                            if val != 0.0 {
                                coo.push(verts[i] * dim + d, verts[j] * dim + e, val);
                            }
                        }
                        // -(p, div v): column is the pressure dof
                        coo.push(
                            verts[i] * dim + d,
                            nu + verts[j],
                            -grads[i][d] * vol / nloc as f64,
                        );
                        // (div u, q): row is the pressure dof
                        coo.push(
                            nu + verts[i],
                            verts[j] * dim + d,
                            grads[j][d] * vol / nloc as f64,
                        );
                    }
                }
            }

            for q in cell_rule(mesh, c) {
                // convective velocity at the quadrature point
                let mut beta = [0.0; 3];
                for (i, &v) in verts.iter().enumerate() {
                    let b = conv.vector_at(v);
                    for d in 0..dim {
                        beta[d] += q.bary[i] * b[d];
                    }
                }
                let beta_dot_g: Vec<f64> = grads
                    .iter()
                    .map(|g| beta[0] * g[0] + beta[1] * g[1] + beta[2] * g[2])
                    .collect();
                for i in 0..nloc {
                    let supg_i = rho * beta_dot_g[i]; // test factor of SUPG
                    for j in 0..nloc {
                        // Galerkin mass + convection
                        let mass = rho / dt * q.weight * q.bary[i] * q.bary[j];
                        let conv_ij = rho * q.weight * q.bary[i] * beta_dot_g[j];
                        // SUPG tests the momentum residual with rho (beta . grad) v
                        let supg_mass = tm * q.weight * supg_i * rho / dt * q.bary[j];
                        let supg_conv = tm * q.weight * supg_i * rho * beta_dot_g[j];
                        let u_prev_j = inputs.u_prev.vector_at(verts[j]);
                        for d in 0..dim {
                            let row = verts[i] * dim + d;
                            let col = verts[j] * dim + d;
                            coo.push(row, col, mass + conv_ij + supg_mass + supg_conv);
                            rhs[row] += (mass + supg_mass) * u_prev_j[d];
                        }
                        // SUPG pressure-gradient column
                        for d in 0..dim {
                            coo.push(
                                verts[i] * dim + d,
                                nu + verts[j],
                                tm * q.weight * supg_i * grads[j][d],
                            );
                        }
                        // PSPG row: grad q . momentum residual
                        for d in 0..dim {
                            let pspg_mass = tm * q.weight * grads[i][d] * rho / dt * q.bary[j];
                            let pspg_conv = tm * q.weight * grads[i][d] * rho * beta_dot_g[j];
                            coo.push(nu + verts[i], verts[j] * dim + d, pspg_mass + pspg_conv);
                            rhs[nu + verts[i]] += pspg_mass * u_prev_j[d];
                        }
                        // PSPG pressure block
                        let gij = grads[i][0] * grads[j][0]
                            + grads[i][1] * grads[j][1]
                            + grads[i][2] * grads[j][2];
                        coo.push(nu + verts[i], nu + verts[j], tm * q.weight * gij);
                    }
                }
            }
        }
        (coo, rhs)
    });

    let mut coo = CooBuilder::new(ndof, ndof);
    let mut rhs = vec![0.0; ndof];
    for (chunk_coo, chunk_rhs) in chunk_results {
        coo.extend(chunk_coo);
        for (r, v) in rhs.iter_mut().zip(chunk_rhs) {
            *r += v;
        }
    }

    // Penalty operator: implicit in u, explicit in geometry; the target
    // velocity u_ale (+ zero leaflet velocity) moves to the right-hand side.
    if let Some(riis) = inputs.riis {
        if riis.nrows() != nu {
            return Err(Error::invalid("penalty operator size mismatch"));
        }
        let mut target = vec![0.0; nu];
        for v in 0..nv {
            for d in 0..dim {
                target[v * dim + d] = inputs.u_ale.get(v, d);
            }
        }
        let forcing = riis.matvec_alloc(&target);
        for r in 0..nu {
            let (cols, vals) = riis.row(r);
            for (c, v) in cols.iter().zip(vals) {
                coo.push(r, *c, *v);
            }
            rhs[r] += forcing[r];
        }
    }

    // Neumann data and backflow stabilization on the same facets.
    for (tag, &pressure) in inputs.neumann {
        for facet in mesh.tagged_facets(tag)? {
            for q in facet_rule(mesh, facet) {
                // traction: sigma n = -p n
                for (i, &v) in facet.vertices[..dim].iter().enumerate() {
                    for d in 0..dim {
                        rhs[v * dim + d] -= pressure * facet.normal[d] * q.weight * q.bary[i];
                    }
                }
                if inputs.backflow {
                    // rho beta/2 * [ (u_n - u_ale) . n ]_-  penalizes u implicitly
                    let mut rel_n = 0.0;
                    for (i, &v) in facet.vertices[..dim].iter().enumerate() {
                        let b = conv.vector_at(v);
                        for d in 0..dim {
                            rel_n += q.bary[i] * b[d] * facet.normal[d];
                        }
                    }
                    let neg_part = (-rel_n).max(0.0);
                    if neg_part > 0.0 {
                        let coeff = rho * inputs.backflow_beta / 2.0 * neg_part;
                        for (i, &vi) in facet.vertices[..dim].iter().enumerate() {
                            for (j, &vj) in facet.vertices[..dim].iter().enumerate() {
                                let val = coeff * q.weight * q.bary[i] * q.bary[j];
                                for d in 0..dim {
                                    coo.push(vi * dim + d, vj * dim + d, val);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    // Wall kinematic condition u = u_ale.
    let mut constraints: Vec<(usize, f64)> = Vec::new();
    for tag in inputs.wall_tags {
        for v in mesh.tagged_vertices(tag)? {
            for d in 0..dim {
                constraints.push((v * dim + d, inputs.u_ale.get(v, d)));
            }
        }
    }
    constraints.sort_by_key(|(i, _)| *i);
    constraints.dedup_by_key(|(i, _)| *i);
    // Pure-Dirichlet configurations need a pressure gauge.
    if inputs.neumann.is_empty() {
        constraints.push((nu, 0.0));
    }
    coo.apply_dirichlet(&mut rhs, &constraints);

    if rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(
            "fluid system right-hand side (check Neumann data and penalty operator)".into(),
        ));
    }

    let a = coo.build();
    let mut opts = inputs.solve;
    opts.method = Method::Gmres;
    // Seed with the previous state: good initial guess at small dt.
    let mut x0 = vec![0.0; ndof];
    for v in 0..nv {
        for d in 0..dim {
            x0[v * dim + d] = inputs.u_prev.get(v, d);
        }
    }
    let x = solve_linear(&a, &rhs, &opts, Some(&x0))?;

    let mut u = Field::zeros(mesh, dim);
    let mut p = Field::zeros(mesh, 1);
    for v in 0..nv {
        for d in 0..dim {
            u.set(v, d, x[v * dim + d]);
        }
        p.set(v, 0, x[nu + v]);
    }
    if !u.is_finite() || !p.is_finite() {
        return Err(Error::NonFinite("fluid solution (velocity or pressure)".into()));
    }
    Ok((
        u,
        p,
        FluidStepReport {
            cfl,
            systems_assembled: 1,
        },
    ))
}

/// Kinetic energy and per-tag boundary power.
#[derive(Debug, Clone)]
pub struct EnergyReport {
    /// `1/2 rho int |u|^2`, joules.
    pub kinetic: f64,
    /// Pressure power `-int_Gamma p (u . n)` per tag, watts.
    pub boundary_power: BTreeMap<String, f64>,
}

pub fn energy_report(
    mesh: &Mesh,
    u: &Field,
    p: &Field,
    props: &FluidProperties,
    tags: &[String],
) -> Result<EnergyReport> {
    u.check_compatible(mesh)?;
    p.check_compatible(mesh)?;
    let dim = mesh.dim();
    let mut kinetic = 0.0;
    for c in 0..mesh.num_cells() {
        let verts = mesh.cell(c);
        for q in cell_rule(mesh, c) {
            let mut speed2 = 0.0;
            for d in 0..dim {
                let mut ud = 0.0;
                for (i, &v) in verts.iter().enumerate() {
                    ud += q.bary[i] * u.get(v, d);
                }
                speed2 += ud * ud;
            }
            kinetic += 0.5 * props.rho * speed2 * q.weight;
        }
    }
    let mut boundary_power = BTreeMap::new();
    for tag in tags {
        let mut power = 0.0;
        for facet in mesh.tagged_facets(tag)? {
            for q in facet_rule(mesh, facet) {
                let mut p_q = 0.0;
                let mut un = 0.0;
                for (i, &v) in facet.vertices[..dim].iter().enumerate() {
                    p_q += q.bary[i] * p.get(v, 0);
                    for d in 0..dim {
                        un += q.bary[i] * u.get(v, d) * facet.normal[d];
                    }
                }
                power -= p_q * un * q.weight;
            }
        }
        boundary_power.insert(tag.clone(), power);
    }
    Ok(EnergyReport {
        kinetic,
        boundary_power,
    })
}

/// Weak incompressibility audit: the sum of boundary fluxes scaled by the
/// velocity magnitude and boundary area.
pub fn mass_audit(mesh: &Mesh, u: &Field, u_ale: &Field) -> Result<f64> {
    let mut total = 0.0;
    let mut area = 0.0;
    for tag in mesh.tag_names().map(str::to_string).collect::<Vec<_>>() {
        total += boundary_integral_flux(mesh, u, u_ale, &tag)?;
        area += crate::femops::boundary_measure(mesh, &tag)?;
    }
    let scale = u.max_norm().max(u_ale.max_norm()).max(1e-30) * area;
    Ok(total.abs() / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_box_mesh;
    use crate::solver::Preconditioner;
    use approx::assert_relative_eq;

    fn channel(nx: usize, ny: usize, l: f64, h: f64) -> Mesh {
        let mut m = generate_box_mesh(2, &[l, h], &[nx, ny]).unwrap();
        m.rename_tag("x0", "in").unwrap();
        m.rename_tag("x1", "out").unwrap();
        m.merge_tags(&["y0", "y1"], "wall").unwrap();
        m
    }

    fn default_inputs<'a>(
        mesh: &'a Mesh,
        u_prev: &'a Field,
        u_ale: &'a Field,
        neumann: &'a BTreeMap<String, f64>,
        wall_tags: &'a [String],
        dt: f64,
    ) -> FluidStepInputs<'a> {
        FluidStepInputs {
            mesh,
            u_prev,
            u_ale,
            riis: None,
            neumann,
            wall_tags,
            dt,
            props: FluidProperties::default(),
            stab: StabilizationConstants::default(),
            backflow: true,
            backflow_beta: 1.0,
            solve: SolveOptions {
                method: Method::Gmres,
                rel_tol: 1e-10,
                max_iter: 20_000,
                restart: 200,
                precond: Preconditioner::SymmetricGaussSeidel,
            },
        }
    }

    #[test]
    fn tau_limits_and_positivity() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let zero = Field::zeros(&m, 2);
        let props = FluidProperties {
            rho: 1060.0,
            mu: 1e-12,
        };
        let constants = StabilizationConstants::default();
        let dt = 1e-3;
        let (tau_m, tau_c) = stabilization_parameters(&m, &zero, dt, &props, &constants).unwrap();
        for (tm, tc) in tau_m.iter().zip(&tau_c) {
            assert!(*tm > 0.0 && *tc > 0.0);
            // mu -> 0, u = 0: tau_m -> dt / (rho sqrt(sigma_t))
            assert_relative_eq!(
                *tm,
                dt / (props.rho * constants.sigma_t.sqrt()),
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn tau_halves_with_h_in_advective_limit() {
        let props = FluidProperties {
            rho: 1060.0,
            mu: 1e-9,
        };
        let constants = StabilizationConstants::default();
        let fast = |n: usize| -> f64 {
            let m = generate_box_mesh(2, &[1.0, 1.0], &[n, n]).unwrap();
            let u = Field::from_fn(&m, 2, |_| vec![10.0, 0.0]);
            let (tau_m, _) =
                stabilization_parameters(&m, &u, 1e3, &props, &constants).unwrap();
            tau_m[0]
        };
        let t1 = fast(8);
        let t2 = fast(16);
        assert_relative_eq!(t1 / t2, 2.0, max_relative = 1e-6);
    }

    /// Equal Neumann pressures, no motion: velocity stays zero and the
    /// pressure field equals the boundary datum (hydrostatic equilibrium).
    #[test]
    fn hydrostatic_equilibrium() {
        let m = channel(8, 4, 2.0, 1.0);
        let u0 = Field::zeros(&m, 2);
        let ale = Field::zeros(&m, 2);
        let mut neumann = BTreeMap::new();
        neumann.insert("in".to_string(), 70.0);
        neumann.insert("out".to_string(), 70.0);
        let walls = vec!["wall".to_string()];
        let inputs = default_inputs(&m, &u0, &ale, &neumann, &walls, 1e-2);
        let (u, p, report) = fluid_step(&inputs).unwrap();
        assert_eq!(report.systems_assembled, 1);
        assert!(u.max_norm() < 1e-8, "max |u| = {}", u.max_norm());
        for v in 0..m.num_vertices() {
            assert_relative_eq!(p.get(v, 0), 70.0, max_relative = 1e-6);
        }
    }

    /// Steady Poiseuille flow in a mm-scale channel: the peak velocity on
    /// the mid cross-section reaches dp H^2 / (8 mu L) within 2%.
    ///
    /// The inflow boundary is a pressure inlet, so the inflow penalty of the
    /// backflow stabilization would alter the analytic problem; it stays off
    /// for this oracle.
    #[test]
    fn poiseuille_oracle() {
        let l = 0.02; // 20 mm
        let h = 0.005; // 5 mm
        let m = channel(64, 16, l, h);
        let props = FluidProperties::default();
        let dp = 0.5;
        let mut neumann = BTreeMap::new();
        neumann.insert("in".to_string(), dp);
        neumann.insert("out".to_string(), 0.0);
        let walls = vec!["wall".to_string()];
        let ale = Field::zeros(&m, 2);
        let mut u = Field::zeros(&m, 2);
        // large-dt steps converge to the steady fixed point
        for _ in 0..5 {
            let mut inputs = default_inputs(&m, &u, &ale, &neumann, &walls, 1e3);
            inputs.props = props;
            inputs.backflow = false;
            inputs.solve.rel_tol = 1e-9;
            let (un, _, _) = fluid_step(&inputs).unwrap();
            u = un;
        }
        let expected = dp * h * h / (8.0 * props.mu * l);
        let mut peak: f64 = 0.0;
        for v in 0..m.num_vertices() {
            if (m.vertex(v)[0] - l / 2.0).abs() < 1e-9 {
                peak = peak.max(u.get(v, 0));
            }
        }
        assert_relative_eq!(peak, expected, max_relative = 0.02);
    }

    /// Repeating the large-dt solve from its own output reproduces the
    /// steady fixed point (the semi-implicit map is stationary there).
    #[test]
    fn steady_fixed_point_consistency() {
        let m = channel(24, 8, 0.01, 0.0025);
        let mut neumann = BTreeMap::new();
        neumann.insert("in".to_string(), 0.2);
        neumann.insert("out".to_string(), 0.0);
        let walls = vec!["wall".to_string()];
        let ale = Field::zeros(&m, 2);
        let mut u = Field::zeros(&m, 2);
        for _ in 0..4 {
            let mut inputs = default_inputs(&m, &u, &ale, &neumann, &walls, 1e3);
            inputs.backflow = false;
            let (un, _, _) = fluid_step(&inputs).unwrap();
            u = un;
        }
        let mut inputs = default_inputs(&m, &u, &ale, &neumann, &walls, 1e3);
        inputs.backflow = false;
        let (u_again, _, _) = fluid_step(&inputs).unwrap();
        let mut diff = u_again.clone();
        diff.axpy(-1.0, &u);
        assert!(
            diff.max_norm() <= 1e-6 * u.max_norm(),
            "fixed-point residual {}",
            diff.max_norm() / u.max_norm()
        );
    }

    /// Rigid-translation ALE: matching wall motion and zero pressure
    /// gradient drive the relative velocity to zero. Channel at mm scale so
    /// the viscous diffusion time `rho H^2 / mu` is resolvable. Backflow
    /// stays off: the transient is a relative inflow at one end and the
    /// penalty would retard it.
    #[test]
    fn galilean_equilibrium() {
        let m = channel(12, 6, 2e-3, 1e-3);
        let ale = Field::from_fn(&m, 2, |_| vec![0.3, 0.0]);
        let u0 = Field::zeros(&m, 2);
        let mut neumann = BTreeMap::new();
        neumann.insert("in".to_string(), 0.0);
        neumann.insert("out".to_string(), 0.0);
        let walls = vec!["wall".to_string()];
        let mut u = u0;
        let mut rel_norms = Vec::new();
        for _ in 0..50 {
            let mut inputs = default_inputs(&m, &u, &ale, &neumann, &walls, 0.02);
            inputs.backflow = false;
            let (un, _, _) = fluid_step(&inputs).unwrap();
            u = un;
            let mut rel = u.clone();
            rel.axpy(-1.0, &ale);
            rel_norms.push(rel.max_norm());
        }
        let last = *rel_norms.last().unwrap();
        assert!(last < 1e-3 * 0.3, "relative velocity {last}");
        // decay is monotone once the startup transient has passed
        for w in rel_norms[5..].windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{w:?}");
        }
    }

    #[test]
    fn energy_report_values() {
        let m = generate_box_mesh(2, &[1.0, 1.0], &[4, 4]).unwrap();
        let props = FluidProperties::default();
        let zero = Field::zeros(&m, 2);
        let p = Field::zeros(&m, 1);
        let r = energy_report(&m, &zero, &p, &props, &[]).unwrap();
        assert_eq!(r.kinetic, 0.0);
        // |u| = 1 on the unit square: KE = rho / 2 = 530 per unit depth
        let u = Field::from_fn(&m, 2, |_| vec![1.0, 0.0]);
        let r = energy_report(&m, &u, &p, &props, &[]).unwrap();
        assert_relative_eq!(r.kinetic, 530.0, max_relative = 1e-12);
    }

    #[test]
    fn rejects_conflicting_boundary_assignment() {
        let m = channel(4, 2, 1.0, 0.5);
        let u0 = Field::zeros(&m, 2);
        let ale = Field::zeros(&m, 2);
        let mut neumann = BTreeMap::new();
        neumann.insert("wall".to_string(), 1.0);
        let walls = vec!["wall".to_string()];
        let inputs = default_inputs(&m, &u0, &ale, &neumann, &walls, 1e-3);
        assert!(fluid_step(&inputs).is_err());
    }

    #[test]
    fn mass_audit_small_for_stokes_solution() {
        let m = channel(32, 8, 0.02, 0.005);
        let mut neumann = BTreeMap::new();
        neumann.insert("in".to_string(), 0.3);
        neumann.insert("out".to_string(), 0.0);
        let walls = vec!["wall".to_string()];
        let ale = Field::zeros(&m, 2);
        let mut u = Field::zeros(&m, 2);
        for _ in 0..4 {
            let mut inputs = default_inputs(&m, &u, &ale, &neumann, &walls, 1e3);
            inputs.backflow = false;
            let (un, _, _) = fluid_step(&inputs).unwrap();
            u = un;
        }
        let audit = mass_audit(&m, &u, &ale).unwrap();
        assert!(audit < 1e-3, "mass audit {audit}");
    }
}
