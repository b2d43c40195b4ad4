//! Phenomenological ReRAM synapse models.
//!
//! Two operating modes share one update law. In analog mode the conductance
//! itself moves by a weight-dependent step per SET/RESET pulse. In binary
//! mode an internal permanence moves by the same law and the conductance is
//! the threshold readout of the permanence: `g_max` once the permanence
//! reaches the maturity threshold, `g_min` below it.
//!
//! Units: conductances in µS, permanences unitless. Noise amplitudes are
//! fractions of the device scale (`g_max` for conductance, `p_max` for
//! permanence).

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{Purpose, RandomStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceMode {
    #[default]
    Analog,
    Binary,
}

impl std::fmt::Display for DeviceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DeviceMode::Analog => f.write_str("analog"),
            DeviceMode::Binary => f.write_str("binary"),
        }
    }
}

impl std::str::FromStr for DeviceMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "analog" => Ok(DeviceMode::Analog),
            "binary" => Ok(DeviceMode::Binary),
            other => Err(format!("unknown device mode `{other}` (expected analog|binary)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PulseKind {
    Potentiation,
    Depression,
}

impl PulseKind {
    pub fn label(self) -> &'static str {
        match self {
            PulseKind::Potentiation => "set",
            PulseKind::Depression => "reset",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub mode: DeviceMode,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    /// µS
    pub g_max: f64,
    /// µS, lower bound for sampling the per-device `g_min`
    pub g0_min: f64,
    /// µS, upper bound for sampling the per-device `g_min`
    pub g0_max: f64,
    pub sigma_w: f64,
    pub sigma_r: f64,
    pub p_max: f64,
    pub p0_min: f64,
    pub p0_max: f64,
    pub theta_p: f64,
}

impl DeviceParams {
    pub fn analog() -> Self {
        Self {
            mode: DeviceMode::Analog,
            lambda_plus: 0.03,
            lambda_minus: 0.03 / 3.0,
            mu_plus: 1.0,
            mu_minus: 0.0,
            g_max: 300.0,
            g0_min: 7.5,
            g0_max: 12.5,
            sigma_w: 0.01,
            sigma_r: 0.01,
            p_max: 15.0,
            p0_min: 0.0,
            p0_max: 8.0,
            theta_p: 10.0,
        }
    }

    pub fn binary() -> Self {
        Self {
            mode: DeviceMode::Binary,
            lambda_plus: 0.25,
            lambda_minus: 0.25 / 3.0,
            ..Self::analog()
        }
    }

    pub fn for_mode(mode: DeviceMode) -> Self {
        match mode {
            DeviceMode::Analog => Self::analog(),
            DeviceMode::Binary => Self::binary(),
        }
    }

    /// Noise-free copy of these parameters.
    pub fn noiseless(&self) -> Self {
        Self { sigma_w: 0.0, sigma_r: 0.0, ..self.clone() }
    }

    /// Scale of the state variable the update law acts on.
    #[inline]
    pub fn state_scale(&self) -> f64 {
        match self.mode {
            DeviceMode::Analog => self.g_max,
            DeviceMode::Binary => self.p_max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("lambda_plus", self.lambda_plus),
            ("lambda_minus", self.lambda_minus),
            ("mu_plus", self.mu_plus),
            ("mu_minus", self.mu_minus),
            ("g_max", self.g_max),
            ("g0_min", self.g0_min),
            ("g0_max", self.g0_max),
            ("sigma_w", self.sigma_w),
            ("sigma_r", self.sigma_r),
            ("p_max", self.p_max),
            ("p0_min", self.p0_min),
            ("p0_max", self.p0_max),
            ("theta_p", self.theta_p),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(invalid(name, format!("must be finite, got {v}")));
            }
        }
        if !(self.lambda_plus > 0.0 && self.lambda_plus <= 1.0) {
            return Err(invalid("lambda_plus", format!("must lie in (0, 1], got {}", self.lambda_plus)));
        }
        if !(self.lambda_minus >= 0.0 && self.lambda_minus <= 1.0) {
            return Err(invalid("lambda_minus", format!("must lie in [0, 1], got {}", self.lambda_minus)));
        }
        if self.mu_plus < 0.0 || self.mu_minus < 0.0 {
            return Err(invalid("mu_plus/mu_minus", "exponents must be non-negative"));
        }
        if self.sigma_w < 0.0 || self.sigma_r < 0.0 {
            return Err(invalid("sigma_w/sigma_r", "noise amplitudes must be non-negative"));
        }
        if !(0.0 <= self.g0_min && self.g0_min <= self.g0_max && self.g0_max < self.g_max) {
            return Err(invalid(
                "g0_min/g0_max",
                format!(
                    "need 0 <= g0_min <= g0_max < g_max, got {} / {} / {}",
                    self.g0_min, self.g0_max, self.g_max
                ),
            ));
        }
        if self.mode == DeviceMode::Binary
            && !(0.0 <= self.p0_min
                && self.p0_min <= self.p0_max
                && self.p0_max < self.theta_p
                && self.theta_p < self.p_max)
        {
            return Err(invalid(
                "p0_min/p0_max/theta_p/p_max",
                format!(
                    "need 0 <= p0_min <= p0_max < theta_p < p_max, got {} / {} / {} / {}",
                    self.p0_min, self.p0_max, self.theta_p, self.p_max
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// µS
    pub g: f64,
    /// µS, per-device lower clip bound
    pub g_min: f64,
    /// permanence (binary mode only)
    pub p: f64,
    /// per-device permanence floor (binary mode only)
    pub p_min: f64,
    /// Failed device: ignores every pulse.
    pub pinned: bool,
}

impl DeviceState {
    #[inline]
    pub fn is_mature(&self, params: &DeviceParams) -> bool {
        self.p >= params.theta_p
    }
}

/// `x^mu` with `0^0 = 1` and fast paths for the common exponents.
#[inline(always)]
pub fn weight_factor(x: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        1.0
    } else if mu == 1.0 {
        x
    } else if mu == 0.5 {
        x.sqrt()
    } else {
        x.powf(mu)
    }
}

/// Noise-free increment of the normalized update law at state `value`.
#[inline(always)]
pub fn drift(kind: PulseKind, value: f64, scale: f64, rate: f64, params: &DeviceParams) -> f64 {
    let x = (value / scale).clamp(0.0, 1.0);
    match kind {
        PulseKind::Potentiation => scale * rate * weight_factor(1.0 - x, params.mu_plus),
        PulseKind::Depression => -scale * rate * weight_factor(x, params.mu_minus),
    }
}

pub fn sample_initial_state<R: RngCore>(params: &DeviceParams, rng: &mut R) -> Result<DeviceState> {
    params.validate()?;
    Ok(sample_initial_unchecked(params, rng))
}

pub(crate) fn sample_initial_unchecked<R: RngCore>(params: &DeviceParams, rng: &mut R) -> DeviceState {
    let g_min = uniform(rng, params.g0_min, params.g0_max);
    let (p, p_min) = match params.mode {
        DeviceMode::Analog => (0.0, 0.0),
        DeviceMode::Binary => {
            let p_min = uniform(rng, params.p0_min, params.p0_max);
            (p_min, p_min)
        }
    };
    let mut state = DeviceState { g: g_min, g_min, p, p_min, pinned: false };
    if params.mode == DeviceMode::Binary {
        state.g = threshold_readout(&state, params);
    }
    state
}

fn uniform<R: RngCore>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

#[inline(always)]
fn threshold_readout(state: &DeviceState, params: &DeviceParams) -> f64 {
    if state.p >= params.theta_p {
        params.g_max
    } else {
        state.g_min
    }
}

/// Applies one pulse with an explicit learning rate and a pre-drawn standard
/// normal variate for the write noise.
#[inline]
pub fn pulse_with(
    state: &mut DeviceState,
    kind: PulseKind,
    rate: f64,
    params: &DeviceParams,
    std_normal: f64,
) {
    if state.pinned {
        return;
    }
    match params.mode {
        DeviceMode::Analog => {
            let noise = params.sigma_w * params.g_max * std_normal;
            let dg = drift(kind, state.g, params.g_max, rate, params) + noise;
            state.g = (state.g + dg).clamp(state.g_min, params.g_max);
        }
        DeviceMode::Binary => {
            let noise = params.sigma_w * params.p_max * std_normal;
            let dp = drift(kind, state.p, params.p_max, rate, params) + noise;
            state.p = (state.p + dp).clamp(state.p_min, params.p_max);
            state.g = threshold_readout(state, params);
        }
    }
}

/// Applies one SET or RESET pulse at the device's own learning rate.
pub fn apply_pulse<R: RngCore>(state: &mut DeviceState, kind: PulseKind, params: &DeviceParams, rng: &mut R) {
    let rate = match kind {
        PulseKind::Potentiation => params.lambda_plus,
        PulseKind::Depression => params.lambda_minus,
    };
    let z = if params.sigma_w > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
    pulse_with(state, kind, rate, params, z);
}

/// Noisy conductance readout `g + Z`. The stored state is untouched.
pub fn read_conductance<R: RngCore>(state: &DeviceState, params: &DeviceParams, rng: &mut R) -> f64 {
    if params.sigma_r > 0.0 {
        let z: f64 = rng.sample(StandardNormal);
        state.g + params.sigma_r * params.g_max * z
    } else {
        state.g
    }
}

/// Stationary point of one potentiation followed by one depression, in the
/// units of the mode's state variable (µS for analog, permanence for binary).
///
/// Where one pulse type dominates everywhere the state ends at a clip bound:
/// the upper bound for potentiation, the mean initial lower bound for
/// depression.
pub fn fixed_point(params: &DeviceParams) -> f64 {
    let net = |x: f64| {
        params.lambda_plus * weight_factor(1.0 - x, params.mu_plus)
            - params.lambda_minus * weight_factor(x, params.mu_minus)
    };
    let scale = params.state_scale();
    let hi = net(1.0);
    if hi >= 0.0 {
        return scale;
    }
    let lo = net(0.0);
    if lo <= 0.0 {
        return match params.mode {
            DeviceMode::Analog => 0.5 * (params.g0_min + params.g0_max),
            DeviceMode::Binary => 0.5 * (params.p0_min + params.p0_max),
        };
    }
    // net is decreasing in x; bisect to 1e-9 of the scale
    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    while b - a > 1e-9 {
        let mid = 0.5 * (a + b);
        if net(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    0.5 * (a + b) * scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// `pulses` SET pulses followed by `pulses` RESET pulses.
    SetReset,
    /// `pulses` SET+RESET pairs.
    Interleaved,
}

impl std::str::FromStr for Schedule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "set-reset" => Ok(Schedule::SetReset),
            "interleaved" => Ok(Schedule::Interleaved),
            other => Err(format!("unknown schedule `{other}` (expected set-reset|interleaved)")),
        }
    }
}

impl Schedule {
    pub fn pulses(self, count: usize) -> Vec<PulseKind> {
        match self {
            Schedule::SetReset => std::iter::repeat_n(PulseKind::Potentiation, count)
                .chain(std::iter::repeat_n(PulseKind::Depression, count))
                .collect(),
            Schedule::Interleaved => (0..count)
                .flat_map(|_| [PulseKind::Potentiation, PulseKind::Depression])
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// `None` for the initial readout before any pulse.
    pub kind: Option<PulseKind>,
    /// noisy readout, µS
    pub g_read: f64,
    pub p: Option<f64>,
}

/// Drives a single device through `schedule`, reading it after every pulse.
/// Row 0 is the readout of the freshly sampled device.
pub fn run_pulse_protocol(params: &DeviceParams, schedule: &[PulseKind], seed: u64) -> Result<Vec<TraceRow>> {
    params.validate()?;
    if schedule.is_empty() {
        return Err(invalid("schedule", "must contain at least one pulse"));
    }
    let mut init = RandomStream::new(seed, 0, 0, Purpose::DeviceInit);
    let mut write = RandomStream::new(seed, 0, 0, Purpose::WriteNoise);
    let mut read = RandomStream::new(seed, 0, 0, Purpose::ReadNoise);
    let mut state = sample_initial_unchecked(params, &mut init);
    let p_of = |s: &DeviceState| (params.mode == DeviceMode::Binary).then_some(s.p);

    let mut rows = Vec::with_capacity(schedule.len() + 1);
    rows.push(TraceRow { step: 0, kind: None, g_read: read_conductance(&state, params, &mut read), p: p_of(&state) });
    for (i, &kind) in schedule.iter().enumerate() {
        apply_pulse(&mut state, kind, params, &mut write);
        rows.push(TraceRow {
            step: i + 1,
            kind: Some(kind),
            g_read: read_conductance(&state, params, &mut read),
            p: p_of(&state),
        });
    }
    Ok(rows)
}

/// CSV rendering with header `step,kind,g_uS,p`.
pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("step,kind,g_uS,p\n");
    for r in rows {
        let kind = r.kind.map(PulseKind::label).unwrap_or("init");
        let p = r.p.map(|p| format!("{p}")).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.step, kind, r.g_read, p));
    }
    out
}
