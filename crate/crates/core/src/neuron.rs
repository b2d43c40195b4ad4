//! Leaky integrate-and-fire neurons on a fixed time grid.
//!
//! Units are ms, mV, µA, µS and µF, with `1 ms·µA/µF = 1 mV`.
//!
//! Each neuron has two exponentially decaying current channels and, for
//! excitatory neurons, an alpha-shaped dendritic channel with the dAP
//! plateau nonlinearity. All linear dynamics are integrated exactly: the
//! state at the end of a span of `h` ms is the matrix exponential of the
//! linear system applied to the state at its start, in closed form.
//!
//! State is always "end of step" state. A step propagates the state over
//! one grid interval, then adds the deliveries that arrive at this step,
//! then evaluates the dAP and spike thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Input channel of a delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    /// Exponential channel 0: external input (EX) on excitatory neurons,
    /// excitatory input (IE) on inhibitory neurons.
    Primary,
    /// Exponential channel 1: inhibitory input (EI) on excitatory neurons.
    Inhibitory,
    /// Alpha-shaped dendritic channel (EE input).
    Dendritic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DendriteParams {
    /// ms
    pub tau_ed: f64,
    /// µA
    pub theta_dap: f64,
    /// µA
    pub i_dap: f64,
    /// ms
    pub tau_dap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronParams {
    /// ms
    pub tau_m: f64,
    /// µF
    pub c_m: f64,
    /// mV
    pub theta: f64,
    /// mV
    pub v_reset: f64,
    /// ms
    pub tau_ref: f64,
    /// Time constants of the two exponential channels, ms.
    /// Excitatory: `[tau_ex, tau_ei]`. Inhibitory: `[tau_ie, unused]`.
    pub tau_syn: [f64; 2],
    pub dendrite: Option<DendriteParams>,
    /// Constant bias current, µA.
    pub i_bias: f64,
}

impl NeuronParams {
    /// Excitatory neuron with the given dAP threshold (µA).
    pub fn excitatory(theta_dap: f64) -> Self {
        Self {
            tau_m: 10.0,
            c_m: 250.0,
            theta: 30.0,
            v_reset: 0.0,
            tau_ref: 20.0,
            tau_syn: [2.0, 1.0],
            dendrite: Some(DendriteParams { tau_ed: 2.0, theta_dap, i_dap: 200.0, tau_dap: 60.0 }),
            i_bias: 0.0,
        }
    }

    pub fn inhibitory() -> Self {
        Self {
            tau_m: 5.0,
            c_m: 250.0,
            theta: 15.0,
            v_reset: 0.0,
            tau_ref: 2.0,
            tau_syn: [0.5, 1.0],
            dendrite: None,
            i_bias: 0.0,
        }
    }

    /// Membrane resistance, mV/µA.
    pub fn r_m(&self) -> f64 {
        self.tau_m / self.c_m
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [("tau_m", self.tau_m), ("c_m", self.c_m), ("tau_syn[0]", self.tau_syn[0]), ("tau_syn[1]", self.tau_syn[1])];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.tau_ref >= 0.0) {
            return Err(invalid("tau_ref", format!("must be non-negative, got {}", self.tau_ref)));
        }
        if !(self.theta > self.v_reset) {
            return Err(invalid("theta", format!("must exceed v_reset ({} <= {})", self.theta, self.v_reset)));
        }
        if let Some(d) = &self.dendrite {
            if !(d.tau_ed > 0.0 && d.tau_dap > 0.0) {
                return Err(invalid("tau_ed/tau_dap", "must be positive"));
            }
            if !(d.theta_dap > 0.0) {
                return Err(invalid("theta_dap", format!("must be positive, got {}", d.theta_dap)));
            }
        }
        Ok(())
    }
}

/// `∫_0^h e^{-a u} du`
fn phi1(a: f64, h: f64) -> f64 {
    if a == 0.0 {
        h
    } else {
        -(-a * h).exp_m1() / a
    }
}

/// `∫_0^h u e^{-a u} du`
fn phi2(a: f64, h: f64) -> f64 {
    let x = a * h;
    if x.abs() < 1e-3 {
        h * h * (0.5 - x / 3.0 + x * x / 8.0 - x * x * x / 30.0)
    } else {
        (1.0 - (-x).exp() * (1.0 + x)) / (a * a)
    }
}

/// Exact update coefficients for a span of `h` ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub h: f64,
    /// membrane decay
    pub p_m: f64,
    /// membrane response to a constant current held over the span
    pub p_const: f64,
    pub p_syn: [f64; 2],
    /// membrane response to the initial value of each exponential channel
    pub p_v_syn: [f64; 2],
    pub p_ed: f64,
    /// membrane response to the initial alpha current
    pub p_v_ed_i: f64,
    /// membrane response to the initial alpha derivative
    pub p_v_ed_d: f64,
}

impl Coefficients {
    pub fn new(params: &NeuronParams, h: f64) -> Self {
        let inv_m = 1.0 / params.tau_m;
        let p_m = (-h * inv_m).exp();
        let p_const = -(-h * inv_m).exp_m1() * params.r_m();
        let mut p_syn = [0.0; 2];
        let mut p_v_syn = [0.0; 2];
        for k in 0..2 {
            let tau = params.tau_syn[k];
            p_syn[k] = (-h / tau).exp();
            p_v_syn[k] = p_m * phi1(1.0 / tau - inv_m, h) / params.c_m;
        }
        let (p_ed, p_v_ed_i, p_v_ed_d) = match &params.dendrite {
            Some(d) => {
                let a = 1.0 / d.tau_ed - inv_m;
                ((-h / d.tau_ed).exp(), p_m * phi1(a, h) / params.c_m, p_m * phi2(a, h) / params.c_m)
            }
            None => (0.0, 0.0, 0.0),
        };
        Self { h, p_m, p_const, p_syn, p_v_syn, p_ed, p_v_ed_i, p_v_ed_d }
    }
}

/// Compiled neuron model: one-step coefficients plus the thresholds and
/// step counts the update needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propagator {
    pub dt: f64,
    pub step: Coefficients,
    pub refr_steps: u32,
    pub dap_steps: u32,
    pub theta: f64,
    pub v_reset: f64,
    pub r_m: f64,
    pub c_m: f64,
    pub tau_syn: [f64; 2],
    pub tau_ed: f64,
    pub theta_dap: f64,
    pub i_dap: f64,
    pub i_bias: f64,
    /// Coefficients for spans of 1..=len steps, used to catch up idle neurons.
    #[serde(skip)]
    spans: Vec<Coefficients>,
    params: NeuronParams,
}

pub fn build_propagator(params: &NeuronParams, dt: f64) -> Result<Propagator> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    params.validate()?;
    let (tau_ed, theta_dap, i_dap, dap_steps) = match &params.dendrite {
        Some(d) => (d.tau_ed, d.theta_dap, d.i_dap, (d.tau_dap / dt).round() as u32),
        None => (1.0, f64::INFINITY, 0.0, 0),
    };
    Ok(Propagator {
        dt,
        step: Coefficients::new(params, dt),
        refr_steps: (params.tau_ref / dt).round() as u32,
        dap_steps,
        theta: params.theta,
        v_reset: params.v_reset,
        r_m: params.r_m(),
        c_m: params.c_m,
        tau_syn: params.tau_syn,
        tau_ed,
        theta_dap,
        i_dap,
        i_bias: params.i_bias,
        spans: Vec::new(),
        params: params.clone(),
    })
}

impl Propagator {
    pub fn params(&self) -> &NeuronParams {
        &self.params
    }

    /// Precomputes span coefficients for up to `max_steps` steps.
    pub fn with_span_table(mut self, max_steps: usize) -> Self {
        self.spans = (1..=max_steps).map(|k| Coefficients::new(&self.params, k as f64 * self.dt)).collect();
        self
    }

    #[inline]
    fn span(&self, steps: u64) -> Coefficients {
        if steps == 1 {
            self.step
        } else if let Some(c) = self.spans.get(steps as usize - 1) {
            *c
        } else {
            Coefficients::new(&self.params, steps as f64 * self.dt)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NeuronState {
    /// mV
    pub v: f64,
    /// exponential channel currents, µA
    pub syn: [f64; 2],
    /// dendritic current, µA
    pub ed_i: f64,
    /// auxiliary alpha-kernel state, µA/ms
    pub ed_d: f64,
    /// remaining steps with the membrane clamped at reset
    pub refr_left: u32,
    /// remaining steps of an active plateau after the current one
    pub dap_left: u32,
    pub plateau: bool,
    /// dAP trace
    pub z: f64,
}

impl NeuronState {
    pub fn at_rest(v_reset: f64) -> Self {
        Self { v: v_reset, ..Self::default() }
    }

    pub fn is_refractory(&self) -> bool {
        self.refr_left > 0
    }
}

/// Summed weights arriving in one step, per channel (µA, read voltage applied).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Inputs {
    pub primary: f64,
    pub inhibitory: f64,
    pub dendritic: f64,
}

impl Inputs {
    pub fn add(&mut self, channel: Channel, w: f64) {
        match channel {
            Channel::Primary => self.primary += w,
            Channel::Inhibitory => self.inhibitory += w,
            Channel::Dendritic => self.dendritic += w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepOutcome {
    pub fired: bool,
    pub dap_onset: bool,
}

/// Propagates `state` over `steps` grid steps without input and without
/// evaluating thresholds. Splits the span at refractory and plateau ends.
pub fn advance(state: &mut NeuronState, prop: &Propagator, mut steps: u64) {
    while steps > 0 {
        let mut n = steps;
        if state.refr_left > 0 {
            n = n.min(state.refr_left as u64);
        }
        if state.plateau {
            n = n.min(state.dap_left as u64 + 1);
        }
        advance_segment(state, prop, &prop.span(n), n);
        steps -= n;
    }
}

#[inline(always)]
fn advance_segment(state: &mut NeuronState, prop: &Propagator, c: &Coefficients, n: u64) {
    if state.refr_left > 0 {
        state.v = prop.v_reset;
        state.refr_left -= n as u32;
    } else {
        let dendritic = if state.plateau {
            c.p_const * prop.i_dap
        } else {
            c.p_v_ed_i * state.ed_i + c.p_v_ed_d * state.ed_d
        };
        state.v = c.p_m * state.v
            + c.p_v_syn[0] * state.syn[0]
            + c.p_v_syn[1] * state.syn[1]
            + dendritic
            + c.p_const * prop.i_bias;
    }
    state.syn[0] *= c.p_syn[0];
    state.syn[1] *= c.p_syn[1];
    if state.plateau {
        if n == state.dap_left as u64 + 1 {
            state.plateau = false;
            state.dap_left = 0;
            state.ed_i = 0.0;
            state.ed_d = 0.0;
        } else {
            state.dap_left -= n as u32;
        }
    } else {
        state.ed_i = c.p_ed * (state.ed_i + c.h * state.ed_d);
        state.ed_d *= c.p_ed;
    }
}

/// Adds one step's deliveries. Dendritic input is discarded while a
/// plateau clamps the dendritic current.
#[inline(always)]
pub fn deliver(state: &mut NeuronState, prop: &Propagator, inputs: &Inputs) {
    state.syn[0] += inputs.primary;
    state.syn[1] += inputs.inhibitory;
    if !state.plateau && inputs.dendritic != 0.0 {
        state.ed_d += inputs.dendritic * std::f64::consts::E / prop.tau_ed;
    }
}

/// Evaluates the dAP and spike thresholds on end-of-step state.
#[inline(always)]
pub fn check_thresholds(state: &mut NeuronState, prop: &Propagator, in_refractory_step: bool) -> StepOutcome {
    let mut out = StepOutcome::default();
    if !state.plateau && state.ed_i >= prop.theta_dap && prop.dap_steps > 0 {
        out.dap_onset = true;
        state.plateau = true;
        state.dap_left = prop.dap_steps - 1;
        state.ed_i = prop.i_dap;
        state.ed_d = 0.0;
    }
    if !in_refractory_step && state.v >= prop.theta {
        out.fired = true;
        state.v = prop.v_reset;
        state.refr_left = prop.refr_steps;
    }
    out
}

/// One grid step: exact propagation, deliveries, then thresholds.
pub fn step(state: &mut NeuronState, prop: &Propagator, inputs: &Inputs) -> StepOutcome {
    let refractory = state.refr_left > 0;
    advance_segment(state, prop, &prop.step, 1);
    deliver(state, prop, inputs);
    check_thresholds(state, prop, refractory)
}

/// Per-step update of the dAP trace: exponential decay, unit jump at onset.
pub fn dap_trace_update(state: &mut NeuronState, dap_onset: bool, tau_h: f64, dt: f64) {
    state.z *= (-dt / tau_h).exp();
    if dap_onset {
        state.z += 1.0;
    }
}

/// True when, absent further input, the neuron can neither spike nor emit a
/// dAP. The test bounds the future membrane potential by its current value
/// (or the level a constant current drives it to) plus the total remaining
/// positive charge of all decaying currents, and the future dendritic
/// current by the peak of the alpha kernel.
#[inline]
pub fn is_quiescent(state: &NeuronState, prop: &Propagator) -> bool {
    let plateau_level = if state.plateau { prop.r_m * (prop.i_dap + prop.i_bias) } else { f64::NEG_INFINITY };
    let base = state.v.max(prop.v_reset).max(0.0).max(prop.r_m * prop.i_bias).max(plateau_level);
    let mut charge = state.syn[0].max(0.0) * prop.tau_syn[0] + state.syn[1].max(0.0) * prop.tau_syn[1];
    if !state.plateau {
        charge += state.ed_i.max(0.0) * prop.tau_ed + state.ed_d.max(0.0) * prop.tau_ed * prop.tau_ed;
        let ed_peak = state.ed_i.max(0.0) + state.ed_d.max(0.0) * prop.tau_ed / std::f64::consts::E;
        if ed_peak >= prop.theta_dap {
            return false;
        }
    }
    base + charge / prop.c_m < prop.theta
}
