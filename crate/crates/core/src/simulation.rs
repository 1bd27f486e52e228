//! Linear time-domain simulation and damping estimation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{StateKind, StateSpaceModel};
use crate::error::{Error, Result};

/// States beyond this magnitude stop the run.
pub const OVERFLOW_GUARD: f64 = 1e6;
pub const MAX_SMALL_SIGNAL: f64 = 0.1;
pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_DURATION: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    StateImpulse,
    SetpointStep,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    IdSetpoint,
    IqSetpoint,
    PllAngle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub kind: DisturbanceKind,
    pub farm: String,
    pub channel: Channel,
    /// Per-unit, or radians for the PLL angle.
    pub magnitude: f64,
    pub t_apply: f64,
    /// Permits magnitudes above the small-signal limit.
    #[serde(default)]
    pub allow_large: bool,
}

impl Disturbance {
    /// 0.05 p.u. step on the `i_d` setpoint of `farm` at 0.1 s.
    pub fn default_step(farm: impl Into<String>) -> Self {
        Self {
            kind: DisturbanceKind::SetpointStep,
            farm: farm.into(),
            channel: Channel::IdSetpoint,
            magnitude: 0.05,
            t_apply: 0.1,
            allow_large: false,
        }
    }

    pub fn with_magnitude(mut self, magnitude: f64) -> Self {
        self.magnitude = magnitude;
        self
    }

    fn validate(&self, model: &StateSpaceModel) -> Result<Target> {
        let bad = |msg: String| Err(Error::InvalidDisturbance(msg));
        if !self.magnitude.is_finite() {
            return bad(format!("magnitude must be finite, got {}", self.magnitude));
        }
        if self.magnitude.abs() > MAX_SMALL_SIGNAL && !self.allow_large {
            return bad(format!(
                "magnitude {} exceeds the small-signal limit {MAX_SMALL_SIGNAL}",
                self.magnitude
            ));
        }
        if !(self.t_apply.is_finite() && self.t_apply >= 0.0) {
            return bad(format!("t_apply must be non-negative, got {}", self.t_apply));
        }
        let Some(device) = model.farm_ids.iter().position(|f| *f == self.farm) else {
            return bad(format!("unknown farm `{}`", self.farm));
        };
        Ok(match (self.kind, self.channel) {
            (DisturbanceKind::SetpointStep, Channel::PllAngle) => {
                return bad("the PLL angle has no setpoint; use a state impulse".into())
            }
            (DisturbanceKind::SetpointStep, Channel::IdSetpoint) => Target::Input(2 * device),
            (DisturbanceKind::SetpointStep, Channel::IqSetpoint) => Target::Input(2 * device + 1),
            (DisturbanceKind::StateImpulse, ch) => {
                let kind = match ch {
                    Channel::IdSetpoint => StateKind::CurrentD,
                    Channel::IqSetpoint => StateKind::CurrentQ,
                    Channel::PllAngle => StateKind::PllAngle,
                };
                Target::State(StateSpaceModel::state_index(device, kind))
            }
        })
    }
}

enum Target {
    State(usize),
    Input(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationResult {
    pub time: Vec<f64>,
    pub farm_ids: Vec<String>,
    /// Active power deviation per farm, device base.
    pub traces: Vec<Vec<f64>>,
    pub dt: f64,
    pub duration: f64,
    pub disturbances: Vec<Disturbance>,
    /// The overflow guard stopped the run early.
    pub truncated: bool,
    pub gamma: Option<f64>,
    pub gscr: Option<f64>,
    pub cgscr: Option<f64>,
}

impl SimulationResult {
    pub fn trace(&self, farm: &str) -> Option<&[f64]> {
        let i = self.farm_ids.iter().position(|f| f == farm)?;
        Some(&self.traces[i])
    }

    pub fn with_context(mut self, gamma: f64, gscr: f64, cgscr: f64) -> Self {
        self.gamma = Some(gamma);
        self.gscr = Some(gscr);
        self.cgscr = Some(cgscr);
        self
    }

    /// Header `t_s,farm_<id>_dP_pu,...`, one row per sample.
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        write!(out, "t_s")?;
        for id in &self.farm_ids {
            write!(out, ",farm_{id}_dP_pu")?;
        }
        writeln!(out)?;
        for (k, t) in self.time.iter().enumerate() {
            write!(out, "{t}")?;
            for trace in &self.traces {
                write!(out, ",{}", trace[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Zero-order-hold discretization `(Phi, Gamma)` from one matrix exponential.
pub fn discretize(model: &StateSpaceModel, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let ns = model.n_states();
    let ni = model.b.ncols();
    let mut aug = DMatrix::<f64>::zeros(ns + ni, ns + ni);
    aug.view_mut((0, 0), (ns, ns)).copy_from(&(&model.a * dt));
    aug.view_mut((0, ns), (ns, ni)).copy_from(&(&model.b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (ns, ns)).clone_owned(),
        e.view((0, ns), (ns, ni)).clone_owned(),
    )
}

pub fn simulate(model: &StateSpaceModel, dist: &Disturbance, duration: f64, dt: f64) -> Result<SimulationResult> {
    simulate_many(model, std::slice::from_ref(dist), duration, dt)
}

/// Response to several simultaneous disturbances.
pub fn simulate_many(
    model: &StateSpaceModel,
    dists: &[Disturbance],
    duration: f64,
    dt: f64,
) -> Result<SimulationResult> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
    }
    if !(duration.is_finite() && duration >= dt) {
        return Err(Error::InvalidArgument(format!(
            "duration must be at least dt, got {duration}"
        )));
    }
    let steps = (duration / dt).round() as usize;
    let ns = model.n_states();
    let ni = model.b.ncols();

    let mut impulses: Vec<(usize, usize, f64)> = Vec::new();
    let mut inputs: Vec<(usize, usize, f64)> = Vec::new();
    for dist in dists {
        let k = (dist.t_apply / dt - 1e-9).ceil().max(0.0) as usize;
        match dist.validate(model)? {
            Target::State(i) => impulses.push((k, i, dist.magnitude)),
            Target::Input(i) => inputs.push((k, i, dist.magnitude)),
        }
    }

    let (phi, gamma) = discretize(model, dt);
    let mut x = DVector::<f64>::zeros(ns);
    let mut u = DVector::<f64>::zeros(ni);
    let mut time = Vec::with_capacity(steps + 1);
    let mut traces = vec![Vec::with_capacity(steps + 1); model.n_devices()];
    let mut truncated = false;

    for k in 0..=steps {
        for &(at, i, mag) in &impulses {
            if at == k {
                x[i] += mag;
            }
        }
        for &(at, i, mag) in &inputs {
            if at == k {
                u[i] += mag;
            }
        }
        if x.amax() > OVERFLOW_GUARD || x.iter().any(|v| !v.is_finite()) {
            truncated = true;
            break;
        }
        let y = &model.c * &x + &model.d * &u;
        time.push(k as f64 * dt);
        for (trace, v) in traces.iter_mut().zip(y.iter()) {
            trace.push(*v);
        }
        x = &phi * &x + &gamma * &u;
    }

    Ok(SimulationResult {
        time,
        farm_ids: model.farm_ids.clone(),
        traces,
        dt,
        duration,
        disturbances: dists.to_vec(),
        truncated,
        gamma: None,
        gscr: None,
        cgscr: None,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DampingEstimate {
    pub zeta: f64,
    /// Decay rate, 1/s. Negative when the oscillation grows.
    pub sigma: f64,
    /// Oscillation frequency, rad/s.
    pub omega: f64,
    pub peak_times: Vec<f64>,
    pub growing: bool,
}

fn parabolic_vertex(t: &[f64], v: &[f64], i: usize) -> (f64, f64) {
    let (y0, y1, y2) = (v[i - 1], v[i], v[i + 1]);
    let den = y0 - 2.0 * y1 + y2;
    if den == 0.0 {
        return (t[i], y1);
    }
    let off = 0.5 * (y0 - y2) / den;
    let step = t[i + 1] - t[i];
    (t[i] + off * step, y1 - 0.25 * (y0 - y2) * off)
}

/// Logarithmic decrement of a sampled oscillation.
///
/// Each swing is a peak minus the trough that follows it, which removes any
/// constant offset. When more than six swings are available only the latter
/// half enters the fit, so the slowest mode dominates.
pub fn estimate_trace(time: &[f64], values: &[f64]) -> Result<DampingEstimate> {
    let n = values.len().min(time.len());
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut extrema: Vec<(bool, f64, f64)> = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let (a, b, c) = (values[i - 1], values[i], values[i + 1]);
        let is_max = b > a && b >= c;
        let is_min = b < a && b <= c;
        if is_max || is_min {
            let (tp, vp) = parabolic_vertex(time, values, i);
            extrema.push((is_max, tp, vp));
        }
    }

    let mut swings: Vec<(f64, f64)> = Vec::new();
    for w in extrema.windows(2) {
        if let [(true, tp, vp), (false, _, vt)] = w {
            let swing = vp - vt;
            if swing > 1e-12 * scale {
                swings.push((*tp, swing));
            }
        }
    }
    if swings.len() < 3 {
        return Err(Error::InsufficientOscillation { peaks: swings.len() });
    }
    if swings.len() > 6 {
        swings.drain(..swings.len() / 2);
    }

    let count = swings.len() as f64;
    let mean_t = swings.iter().map(|s| s.0).sum::<f64>() / count;
    let mean_l = swings.iter().map(|s| s.1.ln()).sum::<f64>() / count;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (t, s) in &swings {
        sxy += (t - mean_t) * (s.ln() - mean_l);
        sxx += (t - mean_t).powi(2);
    }
    let sigma = -sxy / sxx;
    let period = (swings[swings.len() - 1].0 - swings[0].0) / (count - 1.0);
    let omega = 2.0 * std::f64::consts::PI / period;
    Ok(DampingEstimate {
        zeta: sigma / sigma.hypot(omega),
        sigma,
        omega,
        peak_times: swings.iter().map(|s| s.0).collect(),
        growing: sigma < 0.0,
    })
}

/// One estimate per farm trace; a truncated run is always marked growing.
pub fn estimate_damping(result: &SimulationResult) -> Vec<Result<DampingEstimate>> {
    result
        .traces
        .iter()
        .map(|trace| {
            estimate_trace(&result.time, trace).map(|mut est| {
                est.growing |= result.truncated;
                est
            })
        })
        .collect()
}
