//! Open lumped-parameter circulation: four RLC compartments (systemic and
//! pulmonary, arterial and venous) plus the derived interface pressures at
//! the four heart ports, advanced by a first-order IMEX scheme.
//!
//! This module works in clinical units throughout: pressures in mmHg, flows
//! in mL/s, compliances in mL/mmHg, resistances in mmHg*s/mL. Conversions to
//! SI happen only at the 3D-0D boundary (see `coupling`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compartment and valve parameters.
///
/// Field names mirror the parameter-file keys, so a TOML file reads e.g.
/// `R_AR_SYS = 0.48`.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CirculationParams {
    // systemic arteries
    pub R_AR_SYS: f64,
    pub C_AR_SYS: f64,
    pub L_AR_SYS: f64,
    pub R_upstream_SYS: f64,
    // systemic veins
    pub R_VEN_SYS: f64,
    pub C_VEN_SYS: f64,
    pub L_VEN_SYS: f64,
    // pulmonary arteries
    pub R_AR_PUL: f64,
    pub C_AR_PUL: f64,
    pub L_AR_PUL: f64,
    pub R_upstream_PUL: f64,
    // pulmonary veins
    pub R_VEN_PUL: f64,
    pub C_VEN_PUL: f64,
    pub L_VEN_PUL: f64,
    // non-ideal diode valves
    pub R_min_MV: f64,
    pub R_min_AV: f64,
    pub R_min_TV: f64,
    pub R_min_PV: f64,
    pub R_max: f64,
    // semilunar inductances
    pub L_AV: f64,
    pub L_PV: f64,
}

impl Default for CirculationParams {
    fn default() -> Self {
        CirculationParams {
            R_AR_SYS: 0.48,
            C_AR_SYS: 1.50,
            L_AR_SYS: 0.005,
            R_upstream_SYS: 0.048,
            R_VEN_SYS: 0.26,
            C_VEN_SYS: 60.0,
            L_VEN_SYS: 5e-4,
            R_AR_PUL: 0.032116,
            C_AR_PUL: 10.0,
            L_AR_PUL: 0.0005,
            R_upstream_PUL: 0.0032116,
            R_VEN_PUL: 0.035684,
            C_VEN_PUL: 16.0,
            L_VEN_PUL: 0.0005,
            R_min_MV: 0.0075,
            R_min_AV: 0.0355,
            R_min_TV: 0.0075,
            R_min_PV: 0.0184,
            R_max: 75006.2,
            L_AV: 5e-4,
            L_PV: 5e-4,
        }
    }
}

impl CirculationParams {
    pub fn validate(&self) -> Result<()> {
        let rc = [
            self.R_AR_SYS,
            self.C_AR_SYS,
            self.R_VEN_SYS,
            self.C_VEN_SYS,
            self.R_AR_PUL,
            self.C_AR_PUL,
            self.R_VEN_PUL,
            self.C_VEN_PUL,
            self.R_min_MV,
            self.R_min_AV,
            self.R_min_TV,
            self.R_min_PV,
            self.R_max,
        ];
        if rc.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::invalid("all R and C parameters must be positive"));
        }
        let l = [
            self.L_AR_SYS,
            self.L_VEN_SYS,
            self.L_AR_PUL,
            self.L_VEN_PUL,
            self.L_AV,
            self.L_PV,
        ];
        if l.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("inductances must be non-negative"));
        }
        if [self.R_min_MV, self.R_min_AV, self.R_min_TV, self.R_min_PV]
            .iter()
            .any(|&r| r > self.R_max)
        {
            return Err(Error::invalid("R_min must not exceed R_max"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: CirculationParams =
            toml::from_str(text).map_err(|e| Error::Parse(format!("circulation params: {e}")))?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("params serialize")
    }
}

/// Flowrates exchanged with the 3D model (or its surrogate), in mL/s.
///
/// Sign convention: positive toward the downstream compartment, i.e.
/// `q_ven_sys` flows out of the systemic veins into the right atrium.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExternalFlows {
    pub q_av: f64,
    pub q_pv: f64,
    pub q_ven_sys: f64,
    pub q_ven_pul: f64,
}

impl ExternalFlows {
    pub fn is_finite(&self) -> bool {
        [self.q_av, self.q_pv, self.q_ven_sys, self.q_ven_pul]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// One timestamped sample of the interface flows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSample {
    pub time: f64,
    pub flows: ExternalFlows,
}

/// The six ODE states plus a short history of interface flows.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CirculationState {
    pub p_AR_SYS: f64,
    pub p_VEN_SYS: f64,
    pub p_AR_PUL: f64,
    pub p_VEN_PUL: f64,
    pub Q_AR_SYS: f64,
    pub Q_AR_PUL: f64,
    /// Most recent first; at most two samples are retained.
    pub history: Vec<FlowSample>,
    pub time: f64,
}

impl CirculationState {
    /// Initial state used when the 0D model drives a fluid simulation.
    pub fn cfd_initial() -> Self {
        CirculationState {
            p_AR_SYS: 86.3480,
            p_VEN_SYS: 34.4923,
            p_AR_PUL: 22.2310,
            p_VEN_PUL: 19.5813,
            Q_AR_SYS: 109.6429,
            Q_AR_PUL: 83.2132,
            history: Vec::new(),
            time: 0.0,
        }
    }

    /// Resting state used by the standalone driver.
    pub fn em_initial() -> Self {
        CirculationState {
            p_AR_SYS: 83.9,
            p_VEN_SYS: 35.5,
            p_AR_PUL: 14.90,
            p_VEN_PUL: 13.58,
            Q_AR_SYS: 0.0,
            Q_AR_PUL: 0.0,
            history: Vec::new(),
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [
            self.p_AR_SYS,
            self.p_VEN_SYS,
            self.p_AR_PUL,
            self.p_VEN_PUL,
            self.Q_AR_SYS,
            self.Q_AR_PUL,
        ]
        .iter()
        .all(|v| v.is_finite())
            && self.history.iter().all(|s| s.flows.is_finite())
    }

    /// Seeds the flow history with `n` copies of `flows` at synthetic times
    /// before `self.time`, so derivative terms are well defined at startup.
    pub fn prime_history(&mut self, flows: ExternalFlows, dt: f64, n: usize) {
        self.history.clear();
        for k in 1..=n {
            self.history.push(FlowSample {
                time: self.time - dt * k as f64,
                flows,
            });
        }
    }

    fn push_history(&mut self, sample: FlowSample) -> Result<()> {
        if let Some(front) = self.history.first() {
            if sample.time <= front.time {
                return Err(Error::invalid(
                    "flow history timestamps must be strictly increasing",
                ));
            }
        }
        self.history.insert(0, sample);
        self.history.truncate(2);
        Ok(())
    }

    /// Total volume stored in the four compartments (mL), up to a constant.
    pub fn stored_volume(&self, params: &CirculationParams) -> f64 {
        params.C_AR_SYS * self.p_AR_SYS
            + params.C_VEN_SYS * self.p_VEN_SYS
            + params.C_AR_PUL * self.p_AR_PUL
            + params.C_VEN_PUL * self.p_VEN_PUL
    }
}

/// Interface pressures and flow echoes at the four heart ports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterfaceData {
    pub p_in_rh: f64,
    pub p_out_rh: f64,
    pub p_in_lh: f64,
    pub p_out_lh: f64,
    pub q_in_rh: f64,
    pub q_out_rh: f64,
    pub q_in_lh: f64,
    pub q_out_lh: f64,
}

/// Advances the six states by one step of size `dt`.
///
/// Flow data entering pressure equations are explicit at the old time; the
/// arterial flow equations treat their own R/L relaxation implicitly:
///
/// ```text
/// p^{n+1}    = p^n + dt * (Q_in^n - Q_out^n) / C
/// Q_AR^{n+1} = (Q_AR^n + dt (p_AR^n - p_VEN^n) / L) / (1 + dt R / L)
/// ```
///
/// The provided `q3d` sample is appended to the flow history.
pub fn step_imex(
    state: &CirculationState,
    params: &CirculationParams,
    q3d: ExternalFlows,
    dt: f64,
) -> Result<CirculationState> {
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    params.validate()?;
    if !q3d.is_finite() || !state.is_finite() {
        return Err(Error::NonFinite("circulation step input".into()));
    }
    let mut next = state.clone();
    next.p_AR_SYS = state.p_AR_SYS + dt * (q3d.q_av - state.Q_AR_SYS) / params.C_AR_SYS;
    next.p_VEN_SYS = state.p_VEN_SYS + dt * (state.Q_AR_SYS - q3d.q_ven_sys) / params.C_VEN_SYS;
    next.p_AR_PUL = state.p_AR_PUL + dt * (q3d.q_pv - state.Q_AR_PUL) / params.C_AR_PUL;
    next.p_VEN_PUL = state.p_VEN_PUL + dt * (state.Q_AR_PUL - q3d.q_ven_pul) / params.C_VEN_PUL;
    next.Q_AR_SYS = implicit_rl(
        state.Q_AR_SYS,
        state.p_AR_SYS,
        state.p_VEN_SYS,
        params.R_AR_SYS,
        params.L_AR_SYS,
        dt,
    );
    next.Q_AR_PUL = implicit_rl(
        state.Q_AR_PUL,
        state.p_AR_PUL,
        state.p_VEN_PUL,
        params.R_AR_PUL,
        params.L_AR_PUL,
        dt,
    );
    next.push_history(FlowSample {
        time: state.time,
        flows: q3d,
    })?;
    next.time = state.time + dt;
    if !next.is_finite() {
        return Err(Error::NonFinite("circulation state after step".into()));
    }
    Ok(next)
}

fn implicit_rl(q: f64, p_up: f64, p_down: f64, r: f64, l: f64, dt: f64) -> f64 {
    if l > 0.0 {
        (q + dt * (p_up - p_down) / l) / (1.0 + dt * r / l)
    } else {
        // Degenerate inductance: the flow relaxes instantaneously.
        (p_up - p_down) / r
    }
}

/// Residuals of the discrete update, used to audit that a step satisfies the
/// scheme exactly.
pub fn discrete_residuals(
    old: &CirculationState,
    new: &CirculationState,
    params: &CirculationParams,
    q3d: ExternalFlows,
    dt: f64,
) -> [f64; 6] {
    [
        new.p_AR_SYS - old.p_AR_SYS - dt * (q3d.q_av - old.Q_AR_SYS) / params.C_AR_SYS,
        new.p_VEN_SYS - old.p_VEN_SYS - dt * (old.Q_AR_SYS - q3d.q_ven_sys) / params.C_VEN_SYS,
        new.p_AR_PUL - old.p_AR_PUL - dt * (q3d.q_pv - old.Q_AR_PUL) / params.C_AR_PUL,
        new.p_VEN_PUL - old.p_VEN_PUL - dt * (old.Q_AR_PUL - q3d.q_ven_pul) / params.C_VEN_PUL,
        (new.Q_AR_SYS - old.Q_AR_SYS) / dt + params.R_AR_SYS / params.L_AR_SYS * new.Q_AR_SYS
            + (old.p_VEN_SYS - old.p_AR_SYS) / params.L_AR_SYS,
        (new.Q_AR_PUL - old.Q_AR_PUL) / dt + params.R_AR_PUL / params.L_AR_PUL * new.Q_AR_PUL
            + (old.p_VEN_PUL - old.p_AR_PUL) / params.L_AR_PUL,
    ]
}

/// Computes the four interface pressures from the current state and the
/// stored interface-flow history.
///
/// Inlet ports subtract the venous R and L drops; outlet ports add the
/// upstream resistance drop. `dQ/dt` is the first-order backward difference
/// of the stored history, consistent with the global BDF1 advancement.
pub fn interface_pressures(
    state: &CirculationState,
    params: &CirculationParams,
    dt: f64,
) -> Result<InterfaceData> {
    let has_l = params.L_VEN_SYS > 0.0 || params.L_VEN_PUL > 0.0;
    let (latest, previous) = match (state.history.first(), state.history.get(1)) {
        (Some(a), Some(b)) => (a, Some(b)),
        (Some(a), None) if !has_l => (a, None),
        _ => {
            return Err(Error::invalid(
                "interface pressures need two history samples when venous L > 0",
            ))
        }
    };
    let dq = |sel: fn(&ExternalFlows) -> f64| -> f64 {
        match previous {
            Some(prev) => (sel(&latest.flows) - sel(&prev.flows)) / dt,
            None => 0.0,
        }
    };
    let q = &latest.flows;
    let p_in_lh = state.p_VEN_PUL
        - params.R_VEN_PUL * q.q_ven_pul
        - params.L_VEN_PUL * dq(|f| f.q_ven_pul);
    let p_in_rh = state.p_VEN_SYS
        - params.R_VEN_SYS * q.q_ven_sys
        - params.L_VEN_SYS * dq(|f| f.q_ven_sys);
    let p_out_lh = state.p_AR_SYS + params.R_upstream_SYS * q.q_av;
    let p_out_rh = state.p_AR_PUL + params.R_upstream_PUL * q.q_pv;
    let out = InterfaceData {
        p_in_rh,
        p_out_rh,
        p_in_lh,
        p_out_lh,
        q_in_rh: -q.q_ven_sys,
        q_out_rh: q.q_pv,
        q_in_lh: -q.q_ven_pul,
        q_out_lh: q.q_av,
    };
    Ok(out)
}

/// Chamber volume waveforms (mL) prescribed over one heartbeat.
pub trait VolumeWaveforms {
    fn v_lv(&self, t: f64) -> f64;
    fn v_rv(&self, t: f64) -> f64;
    fn v_la(&self, t: f64) -> f64;
    fn v_ra(&self, t: f64) -> f64;
}

/// Per-valve open intervals inside `[0, T_HB)` used when diode switching is
/// driven by timing rather than pressure sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiodeSwitching {
    /// Open when the upstream-downstream pressure gradient is positive
    /// (evaluated on the previous step's chamber pressures).
    PressureSign,
}

/// One output row of the standalone run.
#[derive(Debug, Clone, Copy)]
pub struct StandaloneRecord {
    pub t: f64,
    pub state_snapshot: [f64; 6],
    pub chamber_pressures: [f64; 4], // p_RA, p_RV, p_LA, p_LV
    pub valve_flows: [f64; 4],       // q_mv, q_av, q_tv, q_pv
    pub venous_flows: [f64; 2],      // q_ven_sys, q_ven_pul
    pub total_volume: f64,
}

pub struct StandaloneOptions {
    pub period: f64,
    pub duration: f64,
    pub dt: f64,
    /// Record every `output_stride` steps.
    pub output_stride: usize,
    pub switching: DiodeSwitching,
}

/// Runs the circulation standalone: the four heart chambers follow
/// prescribed volume waveforms, and their discrete volume rates are routed
/// through diode valves (R_min open / R_max closed) into the compartments.
///
/// Chamber pressures are solved each step so the diode and venous flows
/// balance the prescribed volume change exactly; total tracked volume
/// (compartments `C*p` plus chamber volumes) is then conserved to rounding.
pub fn run_standalone(
    params: &CirculationParams,
    initial: &CirculationState,
    waveforms: &dyn VolumeWaveforms,
    options: &StandaloneOptions,
) -> Result<Vec<StandaloneRecord>> {
    params.validate()?;
    if !(options.dt > 0.0) || !(options.duration > 0.0) || !(options.period > 0.0) {
        return Err(Error::invalid("dt, duration and period must be positive"));
    }
    if options.output_stride == 0 {
        return Err(Error::invalid("output stride must be at least 1"));
    }
    let beats = options.duration / options.period;
    if beats > 1.0 + 1e-9 {
        // Multiple beats need periodic waveforms.
        let tol = 1e-9;
        let chambers: [&dyn Fn(f64) -> f64; 4] = [
            &|t| waveforms.v_lv(t),
            &|t| waveforms.v_rv(t),
            &|t| waveforms.v_la(t),
            &|t| waveforms.v_ra(t),
        ];
        for v in chambers {
            let v0 = v(0.0);
            let v1 = v(options.period);
            if (v0 - v1).abs() > tol * v0.abs().max(1.0) {
                return Err(Error::invalid(
                    "volume waveforms must be periodic over the heartbeat when running multiple beats",
                ));
            }
        }
    }

    let n_steps = (options.duration / options.dt).round() as usize;
    let mut state = initial.clone();
    if state.history.is_empty() {
        state.prime_history(ExternalFlows::default(), options.dt, 2);
    }
    // Initial chamber pressures: equal to the adjacent compartments, so the
    // network starts gradient-free.
    let mut p_ra = state.p_VEN_SYS;
    let mut p_rv = state.p_AR_PUL;
    let mut p_la = state.p_VEN_PUL;
    let mut p_lv = state.p_AR_SYS;

    let volumes = |t: f64| -> [f64; 4] {
        let tp = t % options.period;
        [
            waveforms.v_ra(tp),
            waveforms.v_rv(tp),
            waveforms.v_la(tp),
            waveforms.v_lv(tp),
        ]
    };

    let mut records = Vec::new();
    for n in 0..n_steps {
        let t = n as f64 * options.dt;
        let v_now = volumes(t);
        let v_next = volumes(t + options.dt);
        // Discrete volume rates: conservation holds exactly against these.
        let dv = [
            (v_next[0] - v_now[0]) / options.dt,
            (v_next[1] - v_now[1]) / options.dt,
            (v_next[2] - v_now[2]) / options.dt,
            (v_next[3] - v_now[3]) / options.dt,
        ];

        // Diode resistances from the previous step's pressure gradients.
        let DiodeSwitching::PressureSign = options.switching;
        let r_tv = diode_r(p_ra - p_rv, params.R_min_TV, params.R_max);
        let r_pv = diode_r(p_rv - state.p_AR_PUL, params.R_min_PV, params.R_max)
            + params.R_upstream_PUL;
        let r_mv = diode_r(p_la - p_lv, params.R_min_MV, params.R_max);
        let r_av = diode_r(p_lv - state.p_AR_SYS, params.R_min_AV, params.R_max)
            + params.R_upstream_SYS;

        // Right side: volume balance of RA and RV, linear in (p_RA, p_RV).
        let (a, v) = solve_chamber_pair(
            state.p_VEN_SYS,
            params.R_VEN_SYS,
            r_tv,
            state.p_AR_PUL,
            r_pv,
            dv[0],
            dv[1],
        )?;
        p_ra = a;
        p_rv = v;
        let q_ven_sys = (state.p_VEN_SYS - p_ra) / params.R_VEN_SYS;
        let q_tv = (p_ra - p_rv) / r_tv;
        let q_pv = (p_rv - state.p_AR_PUL) / r_pv;

        // Left side.
        let (a, v) = solve_chamber_pair(
            state.p_VEN_PUL,
            params.R_VEN_PUL,
            r_mv,
            state.p_AR_SYS,
            r_av,
            dv[2],
            dv[3],
        )?;
        p_la = a;
        p_lv = v;
        let q_ven_pul = (state.p_VEN_PUL - p_la) / params.R_VEN_PUL;
        let q_mv = (p_la - p_lv) / r_mv;
        let q_av = (p_lv - state.p_AR_SYS) / r_av;

        let flows = ExternalFlows {
            q_av,
            q_pv,
            q_ven_sys,
            q_ven_pul,
        };
        let next = step_imex(&state, params, flows, options.dt)?;

        if n % options.output_stride == 0 {
            let total = next.stored_volume(params) + v_next.iter().sum::<f64>();
            records.push(StandaloneRecord {
                t: t + options.dt,
                state_snapshot: [
                    next.p_AR_SYS,
                    next.p_VEN_SYS,
                    next.p_AR_PUL,
                    next.p_VEN_PUL,
                    next.Q_AR_SYS,
                    next.Q_AR_PUL,
                ],
                chamber_pressures: [p_ra, p_rv, p_la, p_lv],
                valve_flows: [q_mv, q_av, q_tv, q_pv],
                venous_flows: [q_ven_sys, q_ven_pul],
                total_volume: total,
            });
        }
        state = next;
    }
    Ok(records)
}

fn diode_r(gradient: f64, r_min: f64, r_max: f64) -> f64 {
    if gradient > 0.0 {
        r_min
    } else {
        r_max
    }
}

/// Solves the 2x2 linear system for an (atrium, ventricle) pressure pair:
///
/// ```text
/// dV_a/dt = (p_ven - p_a)/R_ven - (p_a - p_v)/R_in
/// dV_v/dt = (p_a - p_v)/R_in   - (p_v - p_ar)/R_out
/// ```
fn solve_chamber_pair(
    p_ven: f64,
    r_ven: f64,
    r_in: f64,
    p_ar: f64,
    r_out: f64,
    dv_a: f64,
    dv_v: f64,
) -> Result<(f64, f64)> {
    let a11 = 1.0 / r_ven + 1.0 / r_in;
    let a12 = -1.0 / r_in;
    let a21 = -1.0 / r_in;
    let a22 = 1.0 / r_in + 1.0 / r_out;
    let b1 = p_ven / r_ven - dv_a;
    let b2 = p_ar / r_out - dv_v;
    let det = a11 * a22 - a12 * a21;
    if det.abs() < 1e-300 {
        return Err(Error::invalid("singular chamber pressure system"));
    }
    let pa = (b1 * a22 - a12 * b2) / det;
    let pv = (a11 * b2 - a21 * b1) / det;
    if !pa.is_finite() || !pv.is_finite() {
        return Err(Error::NonFinite("chamber pressures".into()));
    }
    Ok((pa, pv))
}

/// Sinusoidal chamber volumes `rest + amplitude * cos(2 pi t / T + phase)`,
/// ordered LV, RV, LA, RA.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinusoidalVolumes {
    pub rest: [f64; 4],
    pub amplitude: [f64; 4],
    pub phase: [f64; 4],
    pub period: f64,
}

impl SinusoidalVolumes {
    fn eval(&self, idx: usize, t: f64) -> f64 {
        self.rest[idx]
            + self.amplitude[idx]
                * (2.0 * std::f64::consts::PI * t / self.period + self.phase[idx]).cos()
    }
}

impl VolumeWaveforms for SinusoidalVolumes {
    fn v_lv(&self, t: f64) -> f64 {
        self.eval(0, t)
    }
    fn v_rv(&self, t: f64) -> f64 {
        self.eval(1, t)
    }
    fn v_la(&self, t: f64) -> f64 {
        self.eval(2, t)
    }
    fn v_ra(&self, t: f64) -> f64 {
        self.eval(3, t)
    }
}

/// Serializable configuration for `cardioflow run-0d <config.toml>`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Run0dFile {
    #[serde(default)]
    pub circulation: Circulation0dSection,
    pub standalone: StandaloneSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circulation0dSection {
    pub params_file: Option<String>,
    /// "em" (default) or "cfd" initial-state preset.
    pub initial: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StandaloneSection {
    #[serde(default = "default_period_0d")]
    pub period: f64,
    pub beats: f64,
    pub dt: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    pub out_csv: Option<String>,
    pub volumes: SinusoidalSection,
}

fn default_period_0d() -> f64 {
    0.8
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SinusoidalSection {
    pub rest: [f64; 4],
    pub amplitude: [f64; 4],
    #[serde(default)]
    pub phase: [f64; 4],
}

impl Run0dFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("run-0d config: {e}")))
    }

    pub fn execute(&self, base_dir: &std::path::Path) -> Result<Vec<StandaloneRecord>> {
        let params = match &self.circulation.params_file {
            Some(path) => {
                let text = std::fs::read_to_string(base_dir.join(path))?;
                CirculationParams::from_toml_str(&text)?
            }
            None => CirculationParams::default(),
        };
        let initial = match self.circulation.initial.as_deref() {
            None | Some("em") => CirculationState::em_initial(),
            Some("cfd") => CirculationState::cfd_initial(),
            Some(other) => {
                return Err(Error::invalid(format!("unknown initial preset `{other}`")))
            }
        };
        let waves = SinusoidalVolumes {
            rest: self.standalone.volumes.rest,
            amplitude: self.standalone.volumes.amplitude,
            phase: self.standalone.volumes.phase,
            period: self.standalone.period,
        };
        let options = StandaloneOptions {
            period: self.standalone.period,
            duration: self.standalone.beats * self.standalone.period,
            dt: self.standalone.dt,
            output_stride: self.standalone.output_stride,
            switching: DiodeSwitching::PressureSign,
        };
        let records = run_standalone(&params, &initial, &waves, &options)?;
        if let Some(out) = &self.standalone.out_csv {
            let mut text = standalone_csv_header();
            text.push('\n');
            for r in &records {
                text.push_str(&standalone_csv_row(r));
                text.push('\n');
            }
            std::fs::write(base_dir.join(out), text)?;
        }
        Ok(records)
    }
}

/// CSV header and row writers for standalone output.
pub fn standalone_csv_header() -> String {
    "t,p_AR_SYS,p_VEN_SYS,p_AR_PUL,p_VEN_PUL,Q_AR_SYS,Q_AR_PUL,\
     p_RA,p_RV,p_LA,p_LV,Q_MV,Q_AV,Q_TV,Q_PV,Q_VEN_SYS,Q_VEN_PUL,V_total"
        .to_string()
}

pub fn standalone_csv_row(r: &StandaloneRecord) -> String {
    let s = &r.state_snapshot;
    let c = &r.chamber_pressures;
    let f = &r.valve_flows;
    let v = &r.venous_flows;
    format!(
        "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
        r.t, s[0], s[1], s[2], s[3], s[4], s[5], c[0], c[1], c[2], c[3], f[0], f[1], f[2], f[3],
        v[0], v[1], r.total_volume
    )
}
