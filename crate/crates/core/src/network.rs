//! Network topology and the plasticity controller.
//!
//! Excitatory neurons are split into `m` contiguous subpopulations whose
//! sizes differ by at most one: subpopulation `k` holds ids
//! `k·n_e/m .. (k+1)·n_e/m` (integer division). Inhibitory neuron `j`
//! serves subpopulation `j % m`.
//! Every excitatory neuron receives exactly `k_ee` plastic EE edges from
//! distinct other excitatory neurons. Inhibitory wiring (E→I and I→E) is
//! all-to-all within a subpopulation, and external source `k` drives
//! subpopulation `k`.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceMode, DeviceParams, DeviceState, PulseKind};
use crate::error::{invalid, Error, Result};
use crate::neuron::NeuronParams;
use crate::rng::{Purpose, RandomStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkParams {
    pub n_e: usize,
    pub n_i: usize,
    /// number of subpopulations
    pub m: usize,
    /// EE in-degree
    pub k_ee: usize,
    /// neurons stimulated when an element opens a sequence
    pub rho: usize,
    /// µS
    pub g_ex: f64,
    /// µS
    pub g_ie: f64,
    /// µS
    pub g_ei: f64,
    /// ms
    pub d_ee: f64,
    pub d_ie: f64,
    pub d_ei: f64,
    pub d_ex: f64,
    /// coincidences needed to trigger a dAP through mature synapses
    pub gamma: f64,
    /// read voltage applied to every synaptic weight
    pub v_read: f64,
    /// lags at or below this value (ms) never potentiate
    pub dt_min: f64,
    /// largest pre→post lag (ms) that potentiates
    pub pairing_window: f64,
    pub z_star: f64,
    /// ms
    pub tau_h: f64,
    /// homeostatic pulse rate; `None` uses the device's depression rate
    pub lambda_h: Option<f64>,
    /// global factor on the computed dAP threshold
    pub theta_dap_scale: f64,
    pub exc: NeuronParams,
    pub inh: NeuronParams,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            n_e: 1800,
            n_i: 14,
            m: 14,
            k_ee: 450,
            rho: 20,
            g_ex: 6168.31,
            g_ie: 581.19,
            g_ei: -19373.24,
            d_ee: 2.0,
            d_ie: 0.1,
            d_ei: 0.1,
            d_ex: 0.1,
            gamma: 20.0,
            v_read: 1.0,
            dt_min: 4.0,
            pairing_window: 60.0,
            z_star: 1.8,
            tau_h: 1040.0,
            lambda_h: None,
            theta_dap_scale: 1.0,
            // The dAP threshold is filled in from the device parameters.
            exc: NeuronParams::excitatory(1.0),
            inh: NeuronParams::inhibitory(),
        }
    }
}

impl NetworkParams {
    /// Size of the smallest subpopulation.
    pub fn min_subpop_size(&self) -> usize {
        self.n_e / self.m
    }

    /// First excitatory id of each subpopulation, plus `n_e` at the end.
    pub fn subpop_starts(&self) -> Vec<u32> {
        (0..=self.m).map(|k| (k * self.n_e / self.m) as u32).collect()
    }

    /// Probability that a given excitatory neuron is a presynaptic partner.
    pub fn p(&self) -> f64 {
        self.k_ee as f64 / self.n_e as f64
    }

    pub fn homeostasis_rate(&self, device: &DeviceParams) -> f64 {
        self.lambda_h.unwrap_or(device.lambda_minus)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n_e < self.m || self.m > u16::MAX as usize {
            return Err(invalid("m", format!("need 1 <= m <= n_e, got m = {} and n_e = {}", self.m, self.n_e)));
        }
        if self.k_ee >= self.n_e {
            return Err(invalid("k_ee", format!("{} must be below n_e = {}", self.k_ee, self.n_e)));
        }
        if self.n_e > u32::MAX as usize / 2 || self.n_e * self.k_ee > u32::MAX as usize {
            return Err(invalid("n_e", "network too large"));
        }
        if self.rho == 0 || self.rho > self.min_subpop_size() {
            return Err(invalid("rho", format!("must be in 1..={}, got {}", self.min_subpop_size(), self.rho)));
        }
        for (name, v) in [("d_ee", self.d_ee), ("d_ie", self.d_ie), ("d_ei", self.d_ei), ("d_ex", self.d_ex)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.dt_min >= 0.0 && self.dt_min < self.pairing_window) {
            return Err(invalid(
                "dt_min",
                format!("need 0 <= dt_min < pairing_window, got {} and {}", self.dt_min, self.pairing_window),
            ));
        }
        if !(self.gamma > 0.0 && self.v_read > 0.0 && self.theta_dap_scale > 0.0) {
            return Err(invalid("gamma/v_read/theta_dap_scale", "must be positive"));
        }
        if !(self.tau_h > 0.0) {
            return Err(invalid("tau_h", format!("must be positive, got {}", self.tau_h)));
        }
        if let Some(l) = self.lambda_h {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(invalid("lambda_h", format!("must be non-negative, got {l}")));
            }
        }
        if self.exc.dendrite.is_none() {
            return Err(invalid("exc", "excitatory neurons need a dendritic compartment"));
        }
        self.exc.validate()?;
        self.inh.validate()
    }
}

/// dAP threshold `G₊·γ·p·V_read·scale` in µA. `G₊` is the device fixed point
/// in analog mode and `g_max` in binary mode.
pub fn compute_dap_threshold(params: &NetworkParams, device: &DeviceParams) -> Result<f64> {
    let g_plus = match device.mode {
        DeviceMode::Analog => device::fixed_point(device),
        DeviceMode::Binary => device.g_max,
    };
    Ok(g_plus * params.gamma * params.p() * params.v_read * params.theta_dap_scale)
}

/// Excitatory neuron parameters with the dAP threshold filled in.
pub fn excitatory_params(params: &NetworkParams, device: &DeviceParams) -> Result<NeuronParams> {
    let theta = compute_dap_threshold(params, device)?;
    let mut exc = params.exc.clone();
    if let Some(d) = exc.dendrite.as_mut() {
        d.theta_dap = theta;
    }
    Ok(exc)
}

/// Plastic synapse between two excitatory neurons.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub device: DeviceState,
    /// position in the edge's write-noise stream
    pub write_ctr: u32,
    /// position in the edge's read-noise stream
    pub read_ctr: u32,
    /// step of the presynaptic spike that last potentiated this edge
    pub paired_step: u32,
}

pub const NO_SPIKE: u32 = u32::MAX;

/// Fixed wiring plus the mutable synapse array.
///
/// EE edges are sorted by presynaptic neuron; `out_offsets[j]..out_offsets[j+1]`
/// are the edges leaving `j`. `in_edges` lists `(edge, pre)` grouped by
/// postsynaptic neuron, indexed by `in_offsets`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub n_e: usize,
    pub n_i: usize,
    pub m: usize,
    /// first excitatory id of each subpopulation, plus `n_e`
    pub subpop_starts: Vec<u32>,
    pub subpop_of_exc: Vec<u16>,
    pub edge_pre: Vec<u32>,
    pub edge_post: Vec<u32>,
    pub out_offsets: Vec<u32>,
    pub in_offsets: Vec<u32>,
    pub in_edges: Vec<(u32, u32)>,
    /// per subpopulation, the fixed neurons stimulated when its element opens a sequence
    pub first_subsets: Vec<Vec<u32>>,
    pub synapses: Vec<Synapse>,
}

impl Topology {
    pub fn subpop_size(&self, k: usize) -> usize {
        (self.subpop_starts[k + 1] - self.subpop_starts[k]) as usize
    }

    #[inline]
    pub fn subpop_of(&self, exc: u32) -> usize {
        self.subpop_of_exc[exc as usize] as usize
    }

    #[inline]
    pub fn subpop_of_inh(&self, inh: u32) -> usize {
        inh as usize % self.m
    }

    pub fn n_edges(&self) -> usize {
        self.edge_pre.len()
    }

    /// Excitatory neurons of subpopulation `k`.
    pub fn members(&self, k: usize) -> std::ops::Range<u32> {
        self.subpop_starts[k]..self.subpop_starts[k + 1]
    }

    /// Inhibitory neurons serving subpopulation `k`.
    pub fn inh_of(&self, k: usize) -> impl Iterator<Item = u32> + '_ {
        (k..self.n_i).step_by(self.m).map(|j| j as u32)
    }

    pub fn out_range(&self, pre: u32) -> std::ops::Range<usize> {
        self.out_offsets[pre as usize] as usize..self.out_offsets[pre as usize + 1] as usize
    }

    pub fn in_range(&self, post: u32) -> std::ops::Range<usize> {
        self.in_offsets[post as usize] as usize..self.in_offsets[post as usize + 1] as usize
    }

    /// Static E→I edges as `(pre_exc, post_inh)`.
    pub fn ie_edges(&self) -> Vec<(u32, u32)> {
        (0..self.m).flat_map(|k| self.members(k).flat_map(move |e| self.inh_of(k).map(move |i| (e, i)))).collect()
    }

    /// Static I→E edges as `(pre_inh, post_exc)`.
    pub fn ei_edges(&self) -> Vec<(u32, u32)> {
        (0..self.n_i as u32).flat_map(|i| self.members(self.subpop_of_inh(i)).map(move |e| (i, e))).collect()
    }

    /// External edges as `(source, post_exc)`.
    pub fn ex_edges(&self) -> Vec<(u32, u32)> {
        (0..self.m).flat_map(|k| self.members(k).map(move |e| (k as u32, e))).collect()
    }

    /// Connectivity dump with one row per EE edge:
    /// `pre,post,subpop_pre,subpop_post,g_uS,p,mature`.
    pub fn connectivity_csv(&self, device: &DeviceParams) -> String {
        let mut out = String::with_capacity(self.n_edges() * 32 + 64);
        out.push_str("pre,post,subpop_pre,subpop_post,g_uS,p,mature\n");
        let analog_mature = 0.9 * device::fixed_point(device);
        for (e, s) in self.synapses.iter().enumerate() {
            let (pre, post) = (self.edge_pre[e], self.edge_post[e]);
            let mature = match device.mode {
                DeviceMode::Binary => s.device.is_mature(device),
                DeviceMode::Analog => s.device.g >= analog_mature,
            };
            let p = match device.mode {
                DeviceMode::Binary => format!("{}", s.device.p),
                DeviceMode::Analog => String::new(),
            };
            out.push_str(&format!(
                "{pre},{post},{},{},{},{p},{}\n",
                self.subpop_of(pre),
                self.subpop_of(post),
                s.device.g,
                u8::from(mature)
            ));
        }
        out
    }

    /// Matrix of mean EE conductance between subpopulations, `[pre][post]`.
    pub fn mean_conductance_matrix(&self) -> Vec<Vec<f64>> {
        let mut sum = vec![vec![0.0; self.m]; self.m];
        let mut count = vec![vec![0usize; self.m]; self.m];
        for (e, s) in self.synapses.iter().enumerate() {
            let a = self.subpop_of(self.edge_pre[e]);
            let b = self.subpop_of(self.edge_post[e]);
            sum[a][b] += s.device.g;
            count[a][b] += 1;
        }
        for a in 0..self.m {
            for b in 0..self.m {
                if count[a][b] > 0 {
                    sum[a][b] /= count[a][b] as f64;
                }
            }
        }
        sum
    }
}

/// Builds the wiring and samples a fresh device for every EE edge.
pub fn build_network(
    params: &NetworkParams,
    device_params: &DeviceParams,
    master_seed: u64,
    realization: u64,
) -> Result<Topology> {
    params.validate()?;
    device_params.validate()?;
    let n_e = params.n_e;
    let k = params.k_ee;

    // Presynaptic partners per postsynaptic neuron: uniform without
    // replacement over the n_e - 1 other neurons.
    let mut pre_of: Vec<u32> = Vec::with_capacity(n_e * k);
    for post in 0..n_e {
        let mut rng = RandomStream::new(master_seed, realization, post as u64, Purpose::Topology);
        let mut picks: Vec<u32> = index::sample(&mut rng, n_e - 1, k)
            .into_iter()
            .map(|j| if j >= post { j as u32 + 1 } else { j as u32 })
            .collect();
        picks.sort_unstable();
        pre_of.extend_from_slice(&picks);
    }

    // Counting sort by presynaptic neuron; within a presynaptic neuron edges
    // are ordered by postsynaptic id.
    let mut out_offsets = vec![0u32; n_e + 1];
    for &pre in &pre_of {
        out_offsets[pre as usize + 1] += 1;
    }
    for j in 0..n_e {
        out_offsets[j + 1] += out_offsets[j];
    }
    let mut cursor = out_offsets.clone();
    let n_edges = pre_of.len();
    let mut edge_pre = vec![0u32; n_edges];
    let mut edge_post = vec![0u32; n_edges];
    let mut in_edges = vec![(0u32, 0u32); n_edges];
    for post in 0..n_e {
        for slot in post * k..(post + 1) * k {
            let pre = pre_of[slot];
            let e = cursor[pre as usize];
            cursor[pre as usize] += 1;
            edge_pre[e as usize] = pre;
            edge_post[e as usize] = post as u32;
            in_edges[slot] = (e, pre);
        }
    }
    let in_offsets: Vec<u32> = (0..=n_e).map(|i| (i * k) as u32).collect();

    let synapses = (0..n_edges)
        .map(|e| {
            let mut rng = RandomStream::new(master_seed, realization, e as u64, Purpose::DeviceInit);
            Synapse {
                device: device::sample_initial_unchecked(device_params, &mut rng),
                write_ctr: 0,
                read_ctr: 0,
                paired_step: NO_SPIKE,
            }
        })
        .collect();

    let subpop_starts = params.subpop_starts();
    let mut subpop_of_exc = vec![0u16; n_e];
    for sp in 0..params.m {
        for i in subpop_starts[sp]..subpop_starts[sp + 1] {
            subpop_of_exc[i as usize] = sp as u16;
        }
    }
    let first_subsets = (0..params.m)
        .map(|sp| {
            let start = subpop_starts[sp];
            let n = (subpop_starts[sp + 1] - start) as usize;
            let mut rng = RandomStream::new(master_seed, realization, sp as u64, Purpose::Stimulus);
            let mut s: Vec<u32> = index::sample(&mut rng, n, params.rho)
                .into_iter()
                .map(|i| start + i as u32)
                .collect();
            s.sort_unstable();
            s
        })
        .collect();

    Ok(Topology {
        n_e,
        n_i: params.n_i,
        m: params.m,
        subpop_starts,
        subpop_of_exc,
        edge_pre,
        edge_post,
        out_offsets,
        in_offsets,
        in_edges,
        first_subsets,
        synapses,
    })
}

/// True when a pre→post lag of `lag` steps potentiates.
#[inline(always)]
pub fn in_pairing_window(lag: u64, dt_min_steps: u64, window_steps: u64) -> bool {
    lag > dt_min_steps && lag <= window_steps
}

/// Homeostatic pulse direction for a neuron with dAP trace `z`.
#[inline(always)]
pub fn homeostatic_kind(z: f64, z_star: f64) -> PulseKind {
    if z > z_star {
        PulseKind::Depression
    } else {
        PulseKind::Potentiation
    }
}

/// Converts a duration to whole grid steps, rejecting off-grid values.
pub fn to_steps(name: &'static str, ms: f64, dt: f64) -> Result<u64> {
    let steps = (ms / dt).round();
    if !(ms >= 0.0) || ((steps * dt - ms).abs() > 1e-9 * ms.abs().max(dt)) {
        return Err(Error::OffGridDelay { name, delay: ms, dt });
    }
    Ok(steps as u64)
}
