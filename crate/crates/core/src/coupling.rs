//! Segregated explicit 3D-0D coupling: one circulation step and one fluid
//! step per time step, in a fixed phase order, with the 3D flowrates fed to
//! the 0D model lagged by exactly one step.
//!
//! Phase order per step:
//!   1. valve update (mesh moved to the new time, distances refreshed)
//!   2. ALE velocity
//!   3. circulation step with the previous 3D flows
//!   4. interface pressures 0D -> 3D (mmHg -> Pa)
//!   5. fluid solve with those Neumann data
//!   6. interface flows 3D -> 0D (m^3/s -> mL/s)

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::circulation::{
    interface_pressures, step_imex, CirculationParams, CirculationState, ExternalFlows,
    InterfaceData,
};
use crate::error::{Error, Result};
use crate::femops::{boundary_integral_flux, boundary_mean_pressure};
use crate::motion::{
    extend_frames, fit_timeline, stiffening_field, ContractingChamber, DisplacementTimeline,
    OscillatingChannel, StiffeningOptions,
};
use crate::nsale::{fluid_step, FluidProperties, FluidStepInputs, StabilizationConstants};
use crate::postproc::{probe_mean_scalar, probe_speed, ControlSphere};
use crate::riis::{assemble_riis_operator, timing_by_name, ImmersedSurface, Valve, ValveSpec};
use crate::solver::{Method, Preconditioner, SolveOptions};
use crate::vtk;
use crate::{Field, Mesh, MMHG_TO_PA, M3S_TO_MLS};

/// The four 0D ports a boundary tag can couple to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Port {
    InRh,
    OutRh,
    InLh,
    OutLh,
}

impl Port {
    pub const ALL: [Port; 4] = [Port::InRh, Port::OutRh, Port::InLh, Port::OutLh];

    pub fn label(&self) -> &'static str {
        match self {
            Port::InRh => "in-RH",
            Port::OutRh => "out-RH",
            Port::InLh => "in-LH",
            Port::OutLh => "out-LH",
        }
    }
}

/// Phases of one coupled step, recorded for order audits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    ValveUpdate,
    AleVelocity,
    Circulation0d,
    InterfaceTo3d,
    FluidSolve,
    InterfaceTo0d,
}

pub const PHASE_SEQUENCE: [Phase; 6] = [
    Phase::ValveUpdate,
    Phase::AleVelocity,
    Phase::Circulation0d,
    Phase::InterfaceTo3d,
    Phase::FluidSolve,
    Phase::InterfaceTo0d,
];

/// Velocity/pressure probe over a spherical control volume.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub name: String,
    pub center: [f64; 3],
    pub radius: f64,
}

/// Fully resolved runtime configuration of a coupled simulation.
pub struct CoupledConfig {
    /// Reference (undeformed) mesh.
    pub mesh: Mesh,
    /// Out-of-plane thickness applied to 2D fluxes before unit conversion.
    pub depth: f64,
    pub timeline: Option<DisplacementTimeline>,
    pub valves: Vec<ValveSpec>,
    pub circulation: CirculationParams,
    pub initial_state: CirculationState,
    pub props: FluidProperties,
    pub stab: StabilizationConstants,
    pub backflow: bool,
    pub backflow_beta: f64,
    pub solve: SolveOptions,
    pub dt: f64,
    pub t_end: f64,
    pub period: f64,
    /// Boundary tag -> 0D port. Unmapped tags obey `neumann_constants` or
    /// the wall condition.
    pub ports: BTreeMap<String, Port>,
    /// Constant Neumann pressures (Pa) for uncoupled open boundaries.
    pub neumann_constants: BTreeMap<String, f64>,
    pub wall_tags: Vec<String>,
    /// Initial 3D flows fed to the circulation at the first step (mL/s).
    pub initial_flows: ExternalFlows,
    pub probes: Vec<ProbeSpec>,
    pub output_stride: usize,
    pub output_dir: Option<PathBuf>,
    /// Snapshot fields every this many steps (0 disables; beat boundaries
    /// always snapshot when an output directory is set).
    pub snapshot_stride: usize,
}

impl CoupledConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !(self.period > 0.0) {
            return Err(Error::invalid("dt, t_end and period must be positive"));
        }
        if self.output_stride == 0 {
            return Err(Error::invalid("output stride must be at least 1"));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(Error::invalid("t_end must be a multiple of dt"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (tag, port) in &self.ports {
            if !self.mesh.has_tag(tag) {
                return Err(Error::UnknownTag(tag.clone()));
            }
            if !seen.insert(*port) {
                return Err(Error::invalid(format!(
                    "port {} mapped to more than one tag",
                    port.label()
                )));
            }
        }
        self.circulation.validate()?;
        self.props.validate()?;
        for v in &self.valves {
            v.validate()?;
        }
        Ok(())
    }
}

/// One emitted record of the coupled run.
#[derive(Debug, Clone)]
pub struct CoupledRecord {
    pub step: usize,
    pub t: f64,
    pub interface: InterfaceData,
    /// Per mapped tag: mean pressure (Pa) and volumetric flowrate (m^3/s).
    pub tag_data: BTreeMap<String, (f64, f64)>,
    pub circulation: [f64; 6],
    pub valve_open: BTreeMap<String, bool>,
    /// Fluid domain volume in mL (area x depth x 1e6 in 2D).
    pub domain_volume_ml: f64,
    /// Probe name -> (mean speed m/s, mean pressure Pa).
    pub probes: BTreeMap<String, (f64, f64)>,
}

/// Running state of the coupled simulation.
pub struct CoupledSim {
    config: CoupledConfig,
    pub mesh: Mesh,
    pub u: Field,
    pub p: Field,
    pub state: CirculationState,
    valves: Vec<Valve>,
    /// 3D flows at the previous step in 0D sign convention (mL/s).
    q0d_lagged: ExternalFlows,
    pub time: f64,
    pub step_index: usize,
    pub phase_log: Vec<Phase>,
    pub records: Vec<CoupledRecord>,
    pub warnings: Vec<String>,
}

impl CoupledSim {
    pub fn new(config: CoupledConfig) -> Result<Self> {
        config.validate()?;
        // Deform the reference mesh to the initial time.
        let mesh = match &config.timeline {
            Some(tl) => {
                let d0 = tl.eval(&config.mesh, 0.0)?;
                config.mesh.displaced(d0.values())?
            }
            None => config.mesh.clone(),
        };
        let mut valves = Vec::new();
        let mut warnings = Vec::new();
        for spec in &config.valves {
            if let Some(w) = spec.band_resolution_warning(&mesh) {
                warnings.push(w);
            }
            valves.push(Valve::new(spec.clone(), &mesh, 0.0, config.period)?);
        }
        let u = Field::zeros(&mesh, mesh.dim());
        let p = Field::zeros(&mesh, 1);
        let mut state = config.initial_state.clone();
        state.time = 0.0;
        state.prime_history(config.initial_flows, config.dt, 2);
        let q0d_lagged = config.initial_flows;
        Ok(CoupledSim {
            config,
            mesh,
            u,
            p,
            state,
            valves,
            q0d_lagged,
            time: 0.0,
            step_index: 0,
            phase_log: Vec::new(),
            records: Vec::new(),
            warnings,
        })
    }

    pub fn config(&self) -> &CoupledConfig {
        &self.config
    }

    /// Executes one coupled step (the six phases in order).
    pub fn advance(&mut self) -> Result<()> {
        let step = self.step_index;
        let dt = self.config.dt;
        let t_next = self.time + dt;

        // Phase 1: valve update. The mesh moves to t_{n+1} first so the
        // distance refresh sees the geometry the fluid step will use.
        self.phase_log.push(Phase::ValveUpdate);
        let mesh_moved = if let Some(tl) = &self.config.timeline {
            let d = tl
                .eval(&self.config.mesh, t_next)
                .map_err(|e| e.in_step(step, "valve-update"))?;
            self.mesh = self
                .config
                .mesh
                .displaced(d.values())
                .map_err(|e| e.in_step(step, "valve-update"))?;
            true
        } else {
            false
        };
        for valve in &mut self.valves {
            valve
                .update(&self.mesh, t_next, self.config.period, mesh_moved)
                .map_err(|e| e.in_step(step, "valve-update"))?;
        }

        // Phase 2: ALE velocity by BDF1 of the timeline.
        self.phase_log.push(Phase::AleVelocity);
        let u_ale = match &self.config.timeline {
            Some(tl) => tl
                .ale_velocity(&self.config.mesh, t_next, dt)
                .map_err(|e| e.in_step(step, "ale-velocity"))?,
            None => Field::zeros(&self.mesh, self.mesh.dim()),
        };

        // Phase 3: circulation step with the lagged 3D flows.
        self.phase_log.push(Phase::Circulation0d);
        self.state = step_imex(&self.state, &self.config.circulation, self.q0d_lagged, dt)
            .map_err(|e| e.in_step(step, "circulation-0d"))?;

        // Phase 4: interface pressures, converted to Pa.
        self.phase_log.push(Phase::InterfaceTo3d);
        let interface = interface_pressures(&self.state, &self.config.circulation, dt)
            .map_err(|e| e.in_step(step, "interface-0d-to-3d"))?;
        let mut neumann = self.config.neumann_constants.clone();
        for (tag, port) in &self.config.ports {
            let p_mmhg = match port {
                Port::InRh => interface.p_in_rh,
                Port::OutRh => interface.p_out_rh,
                Port::InLh => interface.p_in_lh,
                Port::OutLh => interface.p_out_lh,
            };
            neumann.insert(tag.clone(), p_mmhg * MMHG_TO_PA);
        }

        // Phase 5: fluid solve.
        self.phase_log.push(Phase::FluidSolve);
        let riis_op = if self.valves.is_empty() {
            None
        } else {
            Some(
                assemble_riis_operator(&self.mesh, &self.valves)
                    .map_err(|e| e.in_step(step, "fluid-solve"))?,
            )
        };
        let inputs = FluidStepInputs {
            mesh: &self.mesh,
            u_prev: &self.u,
            u_ale: &u_ale,
            riis: riis_op.as_ref(),
            neumann: &neumann,
            wall_tags: &self.config.wall_tags,
            dt,
            props: self.config.props,
            stab: self.config.stab,
            backflow: self.config.backflow,
            backflow_beta: self.config.backflow_beta,
            solve: self.config.solve,
        };
        let (u_new, p_new, _report) =
            fluid_step(&inputs).map_err(|e| e.in_step(step, "fluid-solve"))?;
        self.u = u_new;
        self.p = p_new;

        // Phase 6: 3D -> 0D flows with the m^3/s -> mL/s conversion; inlet
        // ports flip sign (outward-normal flux is negative into the domain).
        self.phase_log.push(Phase::InterfaceTo0d);
        let mut q_next = self.surrogate_flows(t_next);
        let mut tag_data = BTreeMap::new();
        for (tag, port) in &self.config.ports {
            let flux = boundary_integral_flux(&self.mesh, &self.u, &u_ale, tag)
                .map_err(|e| e.in_step(step, "interface-3d-to-0d"))?;
            let volumetric = if self.mesh.dim() == 2 {
                flux * self.config.depth
            } else {
                flux
            };
            let q_mls = volumetric * M3S_TO_MLS;
            debug_assert_eq!(q_mls, volumetric * 1e6);
            match port {
                Port::InRh => q_next.q_ven_sys = -q_mls,
                Port::OutRh => q_next.q_pv = q_mls,
                Port::InLh => q_next.q_ven_pul = -q_mls,
                Port::OutLh => q_next.q_av = q_mls,
            }
            let p3d = boundary_mean_pressure(&self.mesh, &self.p, tag)
                .map_err(|e| e.in_step(step, "interface-3d-to-0d"))?;
            tag_data.insert(tag.clone(), (p3d, volumetric));
        }
        self.q0d_lagged = q_next;

        self.time = t_next;
        self.step_index += 1;

        if self.step_index % self.config.output_stride == 0 {
            let record = self.make_record(interface, tag_data)?;
            self.records.push(record);
        }
        Ok(())
    }

    /// Flows for ports not mapped to 3D boundaries. These stay at the
    /// configured initial values (typically zero).
    fn surrogate_flows(&self, _t: f64) -> ExternalFlows {
        self.config.initial_flows
    }

    fn make_record(
        &self,
        interface: InterfaceData,
        tag_data: BTreeMap<String, (f64, f64)>,
    ) -> Result<CoupledRecord> {
        let mut probes = BTreeMap::new();
        for probe in &self.config.probes {
            let sphere = ControlSphere {
                center: probe.center,
                radius: probe.radius,
            };
            let speed = probe_speed(&self.mesh, &self.u, &sphere)?;
            let pressure = probe_mean_scalar(&self.mesh, &self.p, &sphere)?;
            probes.insert(probe.name.clone(), (speed, pressure));
        }
        let volume = self.mesh.total_volume()
            * if self.mesh.dim() == 2 {
                self.config.depth
            } else {
                1.0
            }
            * M3S_TO_MLS;
        Ok(CoupledRecord {
            step: self.step_index,
            t: self.time,
            interface,
            tag_data,
            circulation: [
                self.state.p_AR_SYS,
                self.state.p_VEN_SYS,
                self.state.p_AR_PUL,
                self.state.p_VEN_PUL,
                self.state.Q_AR_SYS,
                self.state.Q_AR_PUL,
            ],
            valve_open: self
                .valves
                .iter()
                .map(|v| (v.spec.name.clone(), v.open))
                .collect(),
            domain_volume_ml: volume,
            probes,
        })
    }

    /// CSV header matching [`record_csv_row`]. Column order is stable.
    pub fn record_csv_header(&self) -> String {
        let mut cols = vec![
            "t".to_string(),
            "p_in_RH".into(),
            "p_out_RH".into(),
            "p_in_LH".into(),
            "p_out_LH".into(),
            "Q_in_RH".into(),
            "Q_out_RH".into(),
            "Q_in_LH".into(),
            "Q_out_LH".into(),
        ];
        for tag in self.config.ports.keys() {
            cols.push(format!("p3d_{tag}"));
            cols.push(format!("Q3d_{tag}"));
        }
        cols.extend(
            [
                "p_AR_SYS",
                "p_VEN_SYS",
                "p_AR_PUL",
                "p_VEN_PUL",
                "Q_AR_SYS",
                "Q_AR_PUL",
            ]
            .map(String::from),
        );
        for spec in &self.config.valves {
            cols.push(format!("valve_{}", spec.name));
        }
        cols.push("V_domain_mL".into());
        for probe in &self.config.probes {
            cols.push(format!("probe_{}_speed", probe.name));
            cols.push(format!("probe_{}_p", probe.name));
        }
        cols.join(",")
    }

    pub fn record_csv_row(&self, r: &CoupledRecord) -> String {
        let i = &r.interface;
        let mut cols = vec![
            format!("{:?}", r.t),
            format!("{:?}", i.p_in_rh),
            format!("{:?}", i.p_out_rh),
            format!("{:?}", i.p_in_lh),
            format!("{:?}", i.p_out_lh),
            format!("{:?}", i.q_in_rh),
            format!("{:?}", i.q_out_rh),
            format!("{:?}", i.q_in_lh),
            format!("{:?}", i.q_out_lh),
        ];
        for tag in self.config.ports.keys() {
            let (p3d, q3d) = r.tag_data.get(tag).copied().unwrap_or((0.0, 0.0));
            cols.push(format!("{p3d:?}"));
            cols.push(format!("{q3d:?}"));
        }
        for v in r.circulation {
            cols.push(format!("{v:?}"));
        }
        for spec in &self.config.valves {
            let open = r.valve_open.get(&spec.name).copied().unwrap_or(false);
            cols.push(if open { "1".into() } else { "0".into() });
        }
        cols.push(format!("{:?}", r.domain_volume_ml));
        for probe in &self.config.probes {
            let (s, p) = r.probes.get(&probe.name).copied().unwrap_or((0.0, 0.0));
            cols.push(format!("{s:?}"));
            cols.push(format!("{p:?}"));
        }
        cols.join(",")
    }

    pub fn records_csv(&self) -> String {
        let mut out = self.record_csv_header();
        out.push('\n');
        for r in &self.records {
            out.push_str(&self.record_csv_row(r));
            out.push('\n');
        }
        out
    }

    fn write_snapshot(&self, label: &str) -> Result<()> {
        let Some(dir) = &self.config.output_dir else {
            return Ok(());
        };
        let snap = dir.join(format!("snapshot_{label}"));
        std::fs::create_dir_all(&snap)?;
        vtk::write_vtk(
            snap.join("fields.vtk"),
            &self.mesh,
            &[
                vtk::PointData {
                    name: "velocity",
                    field: &self.u,
                },
                vtk::PointData {
                    name: "pressure",
                    field: &self.p,
                },
            ],
        )?;
        let state_text = toml::to_string_pretty(&self.state)
            .map_err(|e| Error::Parse(format!("state serialize: {e}")))?;
        std::fs::write(snap.join("circulation.toml"), state_text)?;
        Ok(())
    }

    /// Runs to `t_end`, writing per-beat snapshots and strided velocity
    /// snapshots into the output directory when one is configured.
    pub fn run(&mut self) -> Result<()> {
        let n_steps = (self.config.t_end / self.config.dt).round() as usize;
        let steps_per_beat = (self.config.period / self.config.dt).round() as usize;
        if let Some(dir) = &self.config.output_dir {
            std::fs::create_dir_all(dir)?;
        }
        for _ in 0..n_steps {
            self.advance()?;
            if steps_per_beat > 0 && self.step_index % steps_per_beat == 0 {
                let beat = self.step_index / steps_per_beat;
                self.write_snapshot(&format!("beat{beat}"))?;
            }
            if self.config.snapshot_stride > 0
                && self.step_index % self.config.snapshot_stride == 0
            {
                if let Some(dir) = &self.config.output_dir {
                    let path = dir.join(format!("step_{:06}.vtk", self.step_index));
                    vtk::write_vtk(
                        &path,
                        &self.mesh,
                        &[
                            vtk::PointData {
                                name: "velocity",
                                field: &self.u,
                            },
                            vtk::PointData {
                                name: "pressure",
                                field: &self.p,
                            },
                        ],
                    )?;
                }
            }
        }
        if let Some(dir) = &self.config.output_dir {
            std::fs::write(dir.join("records.csv"), self.records_csv())?;
            let manifest = SnapshotManifest {
                dt: self.config.dt,
                period: self.config.period,
                snapshot_stride: self.config.snapshot_stride,
                rho: self.config.props.rho,
                mu: self.config.props.mu,
            };
            let text = toml::to_string_pretty(&manifest)
                .map_err(|e| Error::Parse(format!("manifest serialize: {e}")))?;
            std::fs::write(dir.join("run.toml"), text)?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub dt: f64,
    pub period: f64,
    pub snapshot_stride: usize,
    pub rho: f64,
    pub mu: f64,
}

impl SnapshotManifest {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("snapshot manifest: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Presets
// ---------------------------------------------------------------------------

/// Parameters of the idealized-ventricle preset.
#[derive(Debug, Clone)]
pub struct VentriclePresetOptions {
    /// Ellipse semi-axes (m).
    pub a: f64,
    pub b: f64,
    /// Structured resolution of the mapped box.
    pub resolution: [usize; 2],
    /// Out-of-plane depth (m).
    pub depth: f64,
    pub ejection_fraction: f64,
    pub dt: f64,
    pub beats: usize,
    pub num_frames: usize,
    pub lambda: f64,
    pub output_stride: usize,
    pub output_dir: Option<PathBuf>,
}

impl Default for VentriclePresetOptions {
    fn default() -> Self {
        VentriclePresetOptions {
            a: 0.03,
            b: 0.04,
            resolution: [24, 12],
            depth: 0.08,
            ejection_fraction: 0.35,
            dt: 2e-4,
            beats: 2,
            num_frames: 41,
            lambda: 0.0,
            output_stride: 5,
            output_dir: None,
        }
    }
}

/// Builds the idealized-ventricle configuration: a half-ellipse chamber with
/// one coupled port at its flat base, an immersed valve with the aortic
/// timing preset, prescribed radial contraction and the out-LH coupling.
pub fn idealized_ventricle_config(opts: &VentriclePresetOptions) -> Result<CoupledConfig> {
    let period = crate::riis::ZYGOTE_PERIOD;
    let box_mesh = crate::mesh::generate_box_mesh(
        2,
        &[2.0, 1.0],
        &[opts.resolution[0], opts.resolution[1]],
    )?;
    let shifted = box_mesh.mapped(|p| [p[0] - 1.0, p[1] - 1.0, 0.0])?;
    let mut mesh = shifted.mapped(crate::motion::half_ellipse_map(opts.a, opts.b))?;
    mesh.merge_tags(&["x0", "x1", "y0"], "wall")?;
    mesh.rename_tag("y1", "port")?;

    // Immersed valve just below the port plane; the open state leaves a
    // central orifice, the closed state spans the full chord.
    let timing = timing_by_name("AV").expect("AV timing preset");
    let y_valve = -0.12 * opts.b;
    let chord = opts.a * 1.05;
    let closed = ImmersedSurface::segment_2d([-chord, y_valve], [chord, y_valve]);
    let open = ImmersedSurface::segments_2d(&[
        [[-chord, y_valve], [-0.62 * opts.a, y_valve]],
        [[0.62 * opts.a, y_valve], [chord, y_valve]],
    ])?;
    let valve = ValveSpec {
        name: "AV".into(),
        resistance: timing.resistance,
        eps: opts.b / opts.resolution[1] as f64 * 2.0,
        open_time: timing.open_time,
        close_time: timing.close_time,
        open_surface: open,
        closed_surface: closed,
        leaflet_velocity: [0.0; 3],
    };

    // Prescribed contraction synchronized with the valve's open window.
    let chamber = ContractingChamber {
        rest_volume: mesh.total_volume(),
        ejection_fraction: opts.ejection_fraction,
        window: (timing.open_time, timing.close_time),
        period,
    };
    let tags = vec!["wall".to_string(), "port".to_string()];
    let frames = chamber.generate_frames(&mesh, &tags, opts.num_frames)?;
    let s = stiffening_field(&mesh, &StiffeningOptions::default())?;
    let volume_frames = extend_frames(&mesh, &s, &frames)?;
    let timeline = fit_timeline(&frames.times, &volume_frames, opts.lambda, true)?;

    let mut ports = BTreeMap::new();
    ports.insert("port".to_string(), Port::OutLh);

    Ok(CoupledConfig {
        mesh,
        depth: opts.depth,
        timeline: Some(timeline),
        valves: vec![valve],
        circulation: CirculationParams::default(),
        initial_state: CirculationState::cfd_initial(),
        props: FluidProperties::default(),
        stab: StabilizationConstants::default(),
        backflow: true,
        backflow_beta: 1.0,
        solve: SolveOptions {
            method: Method::Gmres,
            rel_tol: 1e-8,
            max_iter: 40_000,
            restart: 200,
            precond: Preconditioner::SymmetricGaussSeidel,
        },
        dt: opts.dt,
        t_end: opts.beats as f64 * period,
        period,
        ports,
        neumann_constants: BTreeMap::new(),
        wall_tags: vec!["wall".to_string()],
        initial_flows: ExternalFlows::default(),
        probes: vec![ProbeSpec {
            name: "chamber".into(),
            center: [0.0, -0.5 * opts.b, 0.0],
            radius: 0.3 * opts.b,
        }],
        output_stride: opts.output_stride,
        output_dir: opts.output_dir.clone(),
        snapshot_stride: 0,
    })
}

/// Oscillating-wall channel preset: fully prescribed motion, no 0D ports,
/// constant Neumann pressures at both ends.
pub fn oscillating_channel_config(
    length: f64,
    height: f64,
    resolution: [usize; 2],
    amplitude: f64,
    dt: f64,
    t_end: f64,
) -> Result<CoupledConfig> {
    let period = crate::riis::ZYGOTE_PERIOD;
    let mut mesh = crate::mesh::generate_box_mesh(2, &[length, height], &[resolution[0], resolution[1]])?;
    mesh.rename_tag("x0", "in")?;
    mesh.rename_tag("x1", "out")?;
    mesh.rename_tag("y0", "wall_bottom")?;
    mesh.rename_tag("y1", "wall_top")?;
    let channel = OscillatingChannel {
        length,
        amplitude,
        period,
        wall_tags: ("wall_bottom".to_string(), "wall_top".to_string()),
    };
    let frames = channel.generate_frames(&mesh, 17)?;
    let s = stiffening_field(&mesh, &StiffeningOptions::default())?;
    let volume_frames = extend_frames(&mesh, &s, &frames)?;
    let timeline = fit_timeline(&frames.times, &volume_frames, 0.0, true)?;
    let mut neumann_constants = BTreeMap::new();
    neumann_constants.insert("in".to_string(), 0.0);
    neumann_constants.insert("out".to_string(), 0.0);
    Ok(CoupledConfig {
        mesh,
        depth: 1.0,
        timeline: Some(timeline),
        valves: Vec::new(),
        circulation: CirculationParams::default(),
        initial_state: CirculationState::cfd_initial(),
        props: FluidProperties::default(),
        stab: StabilizationConstants::default(),
        backflow: true,
        backflow_beta: 1.0,
        solve: SolveOptions {
            method: Method::Gmres,
            rel_tol: 1e-8,
            max_iter: 40_000,
            restart: 200,
            precond: Preconditioner::SymmetricGaussSeidel,
        },
        dt,
        t_end,
        period,
        ports: BTreeMap::new(),
        neumann_constants,
        wall_tags: vec!["wall_bottom".to_string(), "wall_top".to_string()],
        initial_flows: ExternalFlows::default(),
        probes: Vec::new(),
        output_stride: 1,
        output_dir: None,
        snapshot_stride: 0,
    })
}

// ---------------------------------------------------------------------------
// TOML-facing run configuration
// ---------------------------------------------------------------------------

/// Serializable run configuration: `cardioflow run <config.toml>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub mesh: MeshSection,
    #[serde(default)]
    pub timeline: TimelineSection,
    #[serde(default)]
    pub valves: ValvesSection,
    #[serde(default)]
    pub circulation: CirculationSection,
    #[serde(default)]
    pub fluid: FluidSection,
    pub coupling: CouplingSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// "box" or "half-ellipse".
    pub kind: String,
    #[serde(default)]
    pub extents: Vec<f64>,
    pub resolution: Vec<usize>,
    /// Half-ellipse semi-axes.
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default = "default_depth")]
    pub depth: f64,
    /// Tag renames applied after generation: `[["x0", "in"], ...]`.
    #[serde(default)]
    pub rename: Vec<[String; 2]>,
    /// Tag merges: `[{ tags = ["y0", "y1"], into = "wall" }]`.
    #[serde(default)]
    pub merge: Vec<MergeSpec>,
}

fn default_depth() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MergeSpec {
    pub tags: Vec<String>,
    pub into: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimelineSection {
    /// "none", "contracting-chamber", "oscillating-channel" or "frames".
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub frames_dir: Option<String>,
    #[serde(default)]
    pub moving_tags: Vec<String>,
    #[serde(default)]
    pub ejection_fraction: f64,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default = "default_num_frames")]
    pub num_frames: usize,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub stiffening_alpha: Option<f64>,
    #[serde(default)]
    pub stiffening_floor: Option<f64>,
}

fn default_num_frames() -> usize {
    41
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValvesSection {
    #[serde(default)]
    pub valve: Vec<ValveEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValveEntry {
    pub name: String,
    /// Use the `zygote-times` preset row matching `name`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub open_time: Option<f64>,
    #[serde(default)]
    pub close_time: Option<f64>,
    #[serde(default)]
    pub resistance: Option<f64>,
    #[serde(default)]
    pub eps: Option<f64>,
    /// 2D polyline points of the closed/open surfaces.
    #[serde(default)]
    pub closed_polyline: Vec<[f64; 2]>,
    #[serde(default)]
    pub open_polyline: Vec<[f64; 2]>,
    /// Disjoint 2D segments, for leaflets that leave an orifice.
    #[serde(default)]
    pub closed_segments: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub open_segments: Vec<[[f64; 2]; 2]>,
    /// Alternatively, file paths (CSV polylines in 2D, ASCII STL in 3D).
    #[serde(default)]
    pub closed_file: Option<String>,
    #[serde(default)]
    pub open_file: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CirculationSection {
    /// Optional file with `CirculationParams` TOML overrides.
    #[serde(default)]
    pub params_file: Option<String>,
    /// "cfd" (default) or "em" initial state preset.
    #[serde(default)]
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FluidSection {
    pub rho: f64,
    pub mu: f64,
    pub backflow: bool,
    pub backflow_beta: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub restart: usize,
}

impl Default for FluidSection {
    fn default() -> Self {
        let props = FluidProperties::default();
        FluidSection {
            rho: props.rho,
            mu: props.mu,
            backflow: true,
            backflow_beta: 1.0,
            rel_tol: 1e-8,
            max_iter: 40_000,
            restart: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_period")]
    pub period: f64,
    /// Tag -> port map, e.g. `port = "out-lh"`.
    #[serde(default)]
    pub ports: BTreeMap<String, Port>,
    /// Constant Neumann pressures in Pa for uncoupled tags.
    #[serde(default)]
    pub neumann: BTreeMap<String, f64>,
    #[serde(default)]
    pub walls: Vec<String>,
}

fn default_period() -> f64 {
    crate::riis::ZYGOTE_PERIOD
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<String>,
    pub stride: usize,
    pub snapshot_stride: usize,
    pub probes: Vec<ProbeSpec>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: None,
            stride: 1,
            snapshot_stride: 0,
            probes: Vec::new(),
        }
    }
}

impl RunFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("run config: {e}")))
    }

    /// Resolves the file into a runtime configuration. Relative paths are
    /// resolved against `base_dir`.
    pub fn build(&self, base_dir: &Path) -> Result<CoupledConfig> {
        // mesh
        let mut mesh = match self.mesh.kind.as_str() {
            "box" => {
                let dim = self.mesh.resolution.len();
                crate::mesh::generate_box_mesh(dim, &self.mesh.extents, &self.mesh.resolution)?
            }
            "half-ellipse" => {
                if self.mesh.resolution.len() != 2 {
                    return Err(Error::invalid("half-ellipse mesh must be 2D"));
                }
                let box_mesh = crate::mesh::generate_box_mesh(
                    2,
                    &[2.0, 1.0],
                    &[self.mesh.resolution[0], self.mesh.resolution[1]],
                )?;
                let shifted = box_mesh.mapped(|p| [p[0] - 1.0, p[1] - 1.0, 0.0])?;
                shifted.mapped(crate::motion::half_ellipse_map(self.mesh.a, self.mesh.b))?
            }
            other => {
                return Err(Error::invalid(format!("unknown mesh kind `{other}`")));
            }
        };
        for pair in &self.mesh.rename {
            mesh.rename_tag(&pair[0], &pair[1])?;
        }
        for merge in &self.mesh.merge {
            let tags: Vec<&str> = merge.tags.iter().map(String::as_str).collect();
            mesh.merge_tags(&tags, &merge.into)?;
        }

        // timeline
        let stiff_opts = StiffeningOptions {
            alpha: self.timeline.stiffening_alpha.unwrap_or(1.0),
            floor: self.timeline.stiffening_floor.unwrap_or(1.0),
        };
        let timeline = match self.timeline.kind.as_deref() {
            None | Some("none") => None,
            Some("contracting-chamber") => {
                let window = self
                    .timeline
                    .window
                    .ok_or_else(|| Error::invalid("contracting-chamber needs window"))?;
                let chamber = ContractingChamber {
                    rest_volume: mesh.total_volume(),
                    ejection_fraction: self.timeline.ejection_fraction,
                    window: (window[0], window[1]),
                    period: self.coupling.period,
                };
                let frames = chamber.generate_frames(
                    &mesh,
                    &self.timeline.moving_tags,
                    self.timeline.num_frames,
                )?;
                let s = stiffening_field(&mesh, &stiff_opts)?;
                let volume_frames = extend_frames(&mesh, &s, &frames)?;
                Some(fit_timeline(
                    &frames.times,
                    &volume_frames,
                    self.timeline.lambda,
                    true,
                )?)
            }
            Some("oscillating-channel") => {
                if self.timeline.moving_tags.len() != 2 {
                    return Err(Error::invalid(
                        "oscillating-channel needs exactly two moving tags",
                    ));
                }
                let extent = self.mesh.extents.first().copied().unwrap_or(1.0);
                let channel = OscillatingChannel {
                    length: extent,
                    amplitude: self.timeline.amplitude,
                    period: self.coupling.period,
                    wall_tags: (
                        self.timeline.moving_tags[0].clone(),
                        self.timeline.moving_tags[1].clone(),
                    ),
                };
                let frames = channel.generate_frames(&mesh, self.timeline.num_frames)?;
                let s = stiffening_field(&mesh, &stiff_opts)?;
                let volume_frames = extend_frames(&mesh, &s, &frames)?;
                Some(fit_timeline(
                    &frames.times,
                    &volume_frames,
                    self.timeline.lambda,
                    true,
                )?)
            }
            Some("frames") => {
                let dir = self
                    .timeline
                    .frames_dir
                    .as_ref()
                    .ok_or_else(|| Error::invalid("frames timeline needs frames_dir"))?;
                let frames = crate::motion::load_frames(base_dir.join(dir), &mesh)?;
                let s = stiffening_field(&mesh, &stiff_opts)?;
                let volume_frames = extend_frames(&mesh, &s, &frames)?;
                Some(fit_timeline(
                    &frames.times,
                    &volume_frames,
                    self.timeline.lambda,
                    frames.periodic,
                )?)
            }
            Some(other) => {
                return Err(Error::invalid(format!("unknown timeline kind `{other}`")));
            }
        };

        // valves
        let mut valves = Vec::new();
        for entry in &self.valves.valve {
            let timing = match entry.preset.as_deref() {
                Some("zygote-times") => timing_by_name(&entry.name),
                Some(other) => {
                    return Err(Error::invalid(format!("unknown valve preset `{other}`")))
                }
                None => None,
            };
            let open_time = entry
                .open_time
                .or(timing.map(|t| t.open_time))
                .ok_or_else(|| Error::invalid("valve needs open_time or preset"))?;
            let close_time = entry
                .close_time
                .or(timing.map(|t| t.close_time))
                .ok_or_else(|| Error::invalid("valve needs close_time or preset"))?;
            let resistance = entry
                .resistance
                .or(timing.map(|t| t.resistance))
                .ok_or_else(|| Error::invalid("valve needs resistance or preset"))?;
            let eps = entry
                .eps
                .or(timing.map(|t| t.eps))
                .ok_or_else(|| Error::invalid("valve needs eps or preset"))?;
            let load_surface = |polyline: &Vec<[f64; 2]>,
                                segments: &Vec<[[f64; 2]; 2]>,
                                file: &Option<String>|
             -> Result<ImmersedSurface> {
                if let Some(path) = file {
                    let path = base_dir.join(path);
                    if path.extension().and_then(|e| e.to_str()) == Some("stl") {
                        ImmersedSurface::from_stl_ascii(path)
                    } else {
                        ImmersedSurface::from_polyline_csv(path)
                    }
                } else if !segments.is_empty() {
                    ImmersedSurface::segments_2d(segments)
                } else if polyline.len() >= 2 {
                    ImmersedSurface::polyline_2d(polyline)
                } else {
                    Err(Error::invalid(
                        "valve surface needs a polyline, segments or file",
                    ))
                }
            };
            valves.push(ValveSpec {
                name: entry.name.clone(),
                resistance,
                eps,
                open_time,
                close_time,
                open_surface: load_surface(
                    &entry.open_polyline,
                    &entry.open_segments,
                    &entry.open_file,
                )?,
                closed_surface: load_surface(
                    &entry.closed_polyline,
                    &entry.closed_segments,
                    &entry.closed_file,
                )?,
                leaflet_velocity: [0.0; 3],
            });
        }

        // circulation
        let circulation = match &self.circulation.params_file {
            Some(path) => {
                let text = std::fs::read_to_string(base_dir.join(path))?;
                CirculationParams::from_toml_str(&text)?
            }
            None => CirculationParams::default(),
        };
        let initial_state = match self.circulation.initial.as_deref() {
            None | Some("cfd") => CirculationState::cfd_initial(),
            Some("em") => CirculationState::em_initial(),
            Some(other) => {
                return Err(Error::invalid(format!(
                    "unknown circulation initial preset `{other}`"
                )))
            }
        };

        Ok(CoupledConfig {
            mesh,
            depth: self.mesh.depth,
            timeline,
            valves,
            circulation,
            initial_state,
            props: FluidProperties {
                rho: self.fluid.rho,
                mu: self.fluid.mu,
            },
            stab: StabilizationConstants::default(),
            backflow: self.fluid.backflow,
            backflow_beta: self.fluid.backflow_beta,
            solve: SolveOptions {
                method: Method::Gmres,
                rel_tol: self.fluid.rel_tol,
                max_iter: self.fluid.max_iter,
                restart: self.fluid.restart,
                precond: Preconditioner::SymmetricGaussSeidel,
            },
            dt: self.coupling.dt,
            t_end: self.coupling.t_end,
            period: self.coupling.period,
            ports: self.coupling.ports.clone(),
            neumann_constants: self.coupling.neumann.clone(),
            wall_tags: self.coupling.walls.clone(),
            initial_flows: ExternalFlows::default(),
            probes: self.output.probes.clone(),
            output_stride: self.output.stride,
            output_dir: self.output.dir.as_ref().map(|d| base_dir.join(d)),
            snapshot_stride: self.output.snapshot_stride,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_static_config() -> CoupledConfig {
        // 2 mm x 1 mm box, no motion, no valves, equal pressures everywhere.
        let mut mesh = crate::mesh::generate_box_mesh(2, &[2e-3, 1e-3], &[8, 4]).unwrap();
        mesh.rename_tag("x0", "in").unwrap();
        mesh.rename_tag("x1", "out").unwrap();
        mesh.merge_tags(&["y0", "y1"], "wall").unwrap();
        let mut ports = BTreeMap::new();
        ports.insert("out".to_string(), Port::OutLh);
        let mut neumann_constants = BTreeMap::new();
        // matched to p_out_LH of the initial state (86.3480 mmHg, Q = 0)
        neumann_constants.insert("in".to_string(), 86.3480 * MMHG_TO_PA);
        CoupledConfig {
            mesh,
            depth: 1.0,
            timeline: None,
            valves: Vec::new(),
            circulation: CirculationParams::default(),
            initial_state: CirculationState::cfd_initial(),
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
            dt: 1e-3,
            t_end: 10e-3,
            period: 0.8,
            ports,
            neumann_constants,
            wall_tags: vec!["wall".to_string()],
            initial_flows: ExternalFlows::default(),
            probes: Vec::new(),
            output_stride: 1,
            output_dir: None,
            snapshot_stride: 0,
        }
    }

    #[test]
    fn phase_order_matches_algorithm() {
        let mut sim = CoupledSim::new(tiny_static_config()).unwrap();
        sim.advance().unwrap();
        sim.advance().unwrap();
        assert_eq!(sim.phase_log.len(), 12);
        for (k, phase) in sim.phase_log.iter().enumerate() {
            assert_eq!(*phase, PHASE_SEQUENCE[k % 6], "phase {k}");
        }
    }

    #[test]
    fn exactly_one_0d_and_one_3d_solve_per_step() {
        let mut sim = CoupledSim::new(tiny_static_config()).unwrap();
        sim.advance().unwrap();
        let solves_0d = sim
            .phase_log
            .iter()
            .filter(|p| **p == Phase::Circulation0d)
            .count();
        let solves_3d = sim
            .phase_log
            .iter()
            .filter(|p| **p == Phase::FluidSolve)
            .count();
        assert_eq!(solves_0d, 1);
        assert_eq!(solves_3d, 1);
    }

    /// Static geometry, equal pressures everywhere and zero initial flows:
    /// the coupled system stays at its global equilibrium.
    #[test]
    fn global_equilibrium_persists() {
        let mut config = tiny_static_config();
        config.t_end = 5e-3;
        let p_eq = 50.0; // mmHg everywhere
        config.initial_state = CirculationState {
            p_AR_SYS: p_eq,
            p_VEN_SYS: p_eq,
            p_AR_PUL: p_eq,
            p_VEN_PUL: p_eq,
            Q_AR_SYS: 0.0,
            Q_AR_PUL: 0.0,
            history: Vec::new(),
            time: 0.0,
        };
        config
            .neumann_constants
            .insert("in".to_string(), p_eq * MMHG_TO_PA);
        let mut sim = CoupledSim::new(config).unwrap();
        sim.run().unwrap();
        for r in &sim.records {
            let (_, q) = r.tag_data["out"];
            assert!(
                (q * M3S_TO_MLS).abs() < 1e-3,
                "Q3d = {} mL/s at t = {}",
                q * M3S_TO_MLS,
                r.t
            );
            // circulation states stay put (up to the solver-tolerance flux)
            for v in r.circulation {
                assert!((v - p_eq).abs() < 1e-6 || v.abs() < 1e-6);
            }
        }
    }

    #[test]
    fn lagged_flows_are_passed_exactly() {
        let mut sim = CoupledSim::new(tiny_static_config()).unwrap();
        sim.advance().unwrap();
        let lagged = sim.q0d_lagged;
        sim.advance().unwrap();
        // the 0D history's newest sample must equal the lagged flows
        let newest = sim.state.history.first().unwrap();
        assert_eq!(newest.flows.q_av, lagged.q_av);
    }

    #[test]
    fn unit_conversion_constants() {
        assert_relative_eq!(MMHG_TO_PA, 133.322);
        assert_relative_eq!(M3S_TO_MLS, 1e6);
        // definitional audit: mmHg -> Pa -> mmHg round trip
        let p = 86.3480;
        assert_relative_eq!(p * MMHG_TO_PA / MMHG_TO_PA, p);
    }

    #[test]
    fn stride_thins_records_without_perturbing_dynamics() {
        let mut c1 = tiny_static_config();
        c1.output_stride = 1;
        let mut c2 = tiny_static_config();
        c2.output_stride = 2;
        let mut sim1 = CoupledSim::new(c1).unwrap();
        sim1.run().unwrap();
        let mut sim2 = CoupledSim::new(c2).unwrap();
        sim2.run().unwrap();
        assert_eq!(sim1.records.len(), 2 * sim2.records.len());
        // identical trajectory: compare the strided subsequence bitwise
        for r2 in &sim2.records {
            let r1 = sim1
                .records
                .iter()
                .find(|r| r.step == r2.step)
                .expect("matching record");
            assert_eq!(sim1.record_csv_row(r1), sim2.record_csv_row(r2));
        }
    }

    #[test]
    fn determinism_bitwise_over_repeated_runs() {
        let mut a = CoupledSim::new(tiny_static_config()).unwrap();
        a.run().unwrap();
        let mut b = CoupledSim::new(tiny_static_config()).unwrap();
        b.run().unwrap();
        assert_eq!(a.records_csv(), b.records_csv());
    }

    #[test]
    fn validates_port_uniqueness() {
        let mut config = tiny_static_config();
        config.ports.insert("in".to_string(), Port::OutLh);
        assert!(CoupledSim::new(config).is_err());
    }

    #[test]
    fn run_file_roundtrip() {
        let text = r#"
[mesh]
kind = "box"
extents = [0.002, 0.001]
resolution = [8, 4]
rename = [["x0", "in"], ["x1", "out"]]
merge = [{ tags = ["y0", "y1"], into = "wall" }]

[coupling]
dt = 1e-3
t_end = 2e-3
period = 0.8
walls = ["wall"]

[coupling.ports]
out = "out-lh"

[coupling.neumann]
in = 11500.0
"#;
        let file = RunFile::from_toml_str(text).unwrap();
        let config = file.build(Path::new(".")).unwrap();
        assert_eq!(config.ports["out"], Port::OutLh);
        let mut sim = CoupledSim::new(config).unwrap();
        sim.run().unwrap();
        assert_eq!(sim.records.len(), 2);
    }
}
