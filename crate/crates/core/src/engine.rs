//! Grid-stepped simulation kernel.
//!
//! Step `s` (1-based; the initial state is step 0, time 0) does, in order:
//!
//! 1. take the deliveries due at `s` from the ring buffer;
//! 2. propagate every neuron over one grid interval, add its deliveries and
//!    evaluate thresholds;
//! 3. apply postsynaptic plasticity for every excitatory spike of step `s`;
//! 4. route all spikes of step `s`: EE edges are read (with read noise) and
//!    depressed, static edges are scheduled with their weights.
//!
//! Spikes are collected and sorted by neuron id before phases 3 and 4, and
//! every random draw comes from a stream keyed by the entity it belongs to,
//! so neither the iteration order nor the set of neurons stepped in phase 2
//! affects the result.
//!
//! Excitatory neurons whose state provably cannot reach either threshold
//! without new input are taken out of phase 2 and brought forward with one
//! exact multi-step propagation when their next delivery arrives.

use serde::{Deserialize, Serialize};

use crate::device::{pulse_with, DeviceParams, PulseKind};
use crate::error::{invalid, Error, Result};
use crate::network::{self, homeostatic_kind, in_pairing_window, to_steps, NetworkParams, Topology, NO_SPIKE};
use crate::neuron::{self, build_propagator, Channel, Inputs, NeuronState, Propagator};
use crate::rng::{base_key, entity_key, normal_at, Purpose};

const SNAPSHOT_MAGIC: &[u8; 8] = b"MEMSEQSN";
pub const SNAPSHOT_VERSION: u32 = 1;
const SPAN_TABLE_STEPS: usize = 16_384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// ms
    pub dt: f64,
    pub master_seed: u64,
    pub realization: u64,
    /// Skip neurons that cannot fire until their next input arrives.
    pub skip_quiescent: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { dt: 0.1, master_seed: 1, realization: 0, skip_quiescent: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Population {
    Exc,
    Inh,
}

impl Population {
    pub fn label(self) -> &'static str {
        match self {
            Population::Exc => "E",
            Population::Inh => "I",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub target: u32,
    pub pop: Population,
    pub channel: Channel,
    /// µA
    pub weight: f64,
}

/// Ring buffer of pending deliveries, one slot per step of delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikeRouter {
    slots: Vec<Vec<Delivery>>,
    scheduled: u64,
    delivered: u64,
}

impl SpikeRouter {
    pub fn new(max_delay_steps: u64) -> Self {
        Self { slots: vec![Vec::new(); max_delay_steps as usize + 1], scheduled: 0, delivered: 0 }
    }

    pub fn max_delay(&self) -> u64 {
        self.slots.len() as u64 - 1
    }

    /// Schedules `d` for delivery at step `now + delay`.
    #[inline]
    pub fn schedule(&mut self, now: u64, delay: u64, d: Delivery) {
        debug_assert!(delay >= 1 && delay <= self.max_delay());
        let len = self.slots.len() as u64;
        self.slots[((now + delay) % len) as usize].push(d);
        self.scheduled += 1;
    }

    /// Moves the deliveries due at step `now` into `out` (cleared first).
    pub fn take_due(&mut self, now: u64, out: &mut Vec<Delivery>) {
        out.clear();
        let len = self.slots.len() as u64;
        std::mem::swap(&mut self.slots[(now % len) as usize], out);
        self.delivered += out.len() as u64;
    }

    pub fn pending(&self) -> usize {
        self.slots.iter().map(Vec::len).sum()
    }

    pub fn scheduled(&self) -> u64 {
        self.scheduled
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub exc_spikes: u64,
    pub inh_spikes: u64,
    pub external_spikes: u64,
    pub daps: u64,
    /// Hebbian potentiation events (each followed by one homeostatic pulse)
    pub potentiations: u64,
    /// presynaptic depression pulses applied
    pub depressions: u64,
}

/// Recording hooks. All methods default to no-ops.
pub trait Observer {
    fn spike(&mut self, _step: u64, _pop: Population, _neuron: u32, _subpop: usize) {}
    fn dap(&mut self, _step: u64, _neuron: u32, _subpop: usize) {}
    /// End-of-step state of the probed excitatory neuron, if any.
    fn probe(&mut self, _step: u64, _state: &NeuronState) {}
}

impl Observer for () {}

/// Failure polarity of a pinned device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stuck {
    /// pinned to the high-conductance state
    On,
    /// pinned to the low-conductance state
    Off,
}

/// Everything that persists in a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct State {
    cfg: SimConfig,
    net: NetworkParams,
    dev: DeviceParams,
    topo: Topology,
    exc: Vec<NeuronState>,
    /// step up to which a dormant neuron's state is current
    exc_stamp: Vec<u64>,
    awake: Vec<u32>,
    is_awake: Vec<bool>,
    inh: Vec<NeuronState>,
    last_spike: Vec<u32>,
    dap_onset: Vec<u32>,
    z_stamp: Vec<u32>,
    router: SpikeRouter,
    step: u64,
    counters: Counters,
    probe: Option<u32>,
}

/// Quantities derived from the persistent state.
#[derive(Debug, Clone)]
struct Runtime {
    exc_prop: Propagator,
    inh_prop: Propagator,
    d_ee: u64,
    d_ie: u64,
    d_ei: u64,
    d_ex: u64,
    dt_min: u64,
    window: u64,
    lambda_h: f64,
    write_base: u64,
    read_base: u64,
    inputs_e: Vec<Inputs>,
    inputs_i: Vec<Inputs>,
    due: Vec<Delivery>,
    exc_spikes: Vec<u32>,
    inh_spikes: Vec<u32>,
    daps: Vec<u32>,
}

impl Runtime {
    fn new(st: &State) -> Result<Self> {
        let dt = st.cfg.dt;
        let exc_params = network::excitatory_params(&st.net, &st.dev)?;
        let exc_prop = build_propagator(&exc_params, dt)?.with_span_table(SPAN_TABLE_STEPS);
        let inh_prop = build_propagator(&st.net.inh, dt)?.with_span_table(64);
        let delay = |name: &'static str, ms: f64| -> Result<u64> {
            let s = to_steps(name, ms, dt)?;
            if s == 0 {
                return Err(Error::OffGridDelay { name, delay: ms, dt });
            }
            Ok(s)
        };
        let n = &st.net;
        let dt_min = (n.dt_min / dt + 1e-9).floor() as u64;
        let window = (n.pairing_window / dt + 1e-9).floor() as u64;
        Ok(Self {
            exc_prop,
            inh_prop,
            d_ee: delay("d_ee", n.d_ee)?,
            d_ie: delay("d_ie", n.d_ie)?,
            d_ei: delay("d_ei", n.d_ei)?,
            d_ex: delay("d_ex", n.d_ex)?,
            dt_min,
            window,
            lambda_h: n.homeostasis_rate(&st.dev),
            write_base: base_key(st.cfg.master_seed, st.cfg.realization, Purpose::WriteNoise),
            read_base: base_key(st.cfg.master_seed, st.cfg.realization, Purpose::ReadNoise),
            inputs_e: vec![Inputs::default(); st.topo.n_e],
            inputs_i: vec![Inputs::default(); st.topo.n_i],
            due: Vec::new(),
            exc_spikes: Vec::new(),
            inh_spikes: Vec::new(),
            daps: Vec::new(),
        })
    }
}

/// A network realization together with its simulation state.
#[derive(Debug, Clone)]
pub struct Simulator {
    st: State,
    rt: Runtime,
}

impl Simulator {
    pub fn new(net: &NetworkParams, dev: &DeviceParams, cfg: &SimConfig) -> Result<Self> {
        if !(cfg.dt > 0.0 && cfg.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", cfg.dt)));
        }
        let topo = network::build_network(net, dev, cfg.master_seed, cfg.realization)?;
        let n_e = topo.n_e;
        let n_i = topo.n_i;
        let max_delay = [net.d_ee, net.d_ie, net.d_ei, net.d_ex]
            .iter()
            .map(|&d| (d / cfg.dt).round() as u64)
            .max()
            .unwrap_or(1)
            .max(1);
        let v_e = net.exc.v_reset;
        let v_i = net.inh.v_reset;
        let st = State {
            cfg: cfg.clone(),
            net: net.clone(),
            dev: dev.clone(),
            topo,
            exc: vec![NeuronState::at_rest(v_e); n_e],
            exc_stamp: vec![0; n_e],
            awake: Vec::new(),
            is_awake: vec![false; n_e],
            inh: vec![NeuronState::at_rest(v_i); n_i],
            last_spike: vec![NO_SPIKE; n_e],
            dap_onset: vec![NO_SPIKE; n_e],
            z_stamp: vec![0; n_e],
            router: SpikeRouter::new(max_delay),
            step: 0,
            counters: Counters::default(),
            probe: None,
        };
        let rt = Runtime::new(&st)?;
        let mut sim = Self { st, rt };
        if !cfg.skip_quiescent {
            for i in 0..n_e as u32 {
                sim.wake(i, 1);
            }
        }
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.st.cfg
    }

    pub fn network_params(&self) -> &NetworkParams {
        &self.st.net
    }

    pub fn device_params(&self) -> &DeviceParams {
        &self.st.dev
    }

    pub fn topology(&self) -> &Topology {
        &self.st.topo
    }

    /// Mutable access to the wiring and synapses (device states).
    pub fn topology_mut(&mut self) -> &mut Topology {
        &mut self.st.topo
    }

    pub fn exc_propagator(&self) -> &Propagator {
        &self.rt.exc_prop
    }

    pub fn dap_threshold(&self) -> f64 {
        self.rt.exc_prop.theta_dap
    }

    /// Number of completed steps.
    pub fn step(&self) -> u64 {
        self.st.step
    }

    pub fn time_ms(&self) -> f64 {
        self.st.step as f64 * self.st.cfg.dt
    }

    pub fn counters(&self) -> Counters {
        self.st.counters
    }

    pub fn router(&self) -> &SpikeRouter {
        &self.st.router
    }

    /// Grid steps of a duration in ms, rejecting off-grid values.
    pub fn steps_of(&self, name: &'static str, ms: f64) -> Result<u64> {
        to_steps(name, ms, self.st.cfg.dt)
    }

    /// Keeps excitatory neuron `i` stepped every step and reports its state
    /// through [`Observer::probe`].
    pub fn set_probe(&mut self, i: Option<u32>) {
        self.st.probe = i;
        if let Some(i) = i {
            let s = self.st.step + 1;
            self.wake(i, s);
        }
    }

    /// Current state of excitatory neuron `i`.
    pub fn exc_state(&self, i: u32) -> NeuronState {
        let mut s = self.st.exc[i as usize];
        if !self.st.is_awake[i as usize] {
            neuron::advance(&mut s, &self.rt.exc_prop, self.st.step - self.st.exc_stamp[i as usize]);
        }
        s
    }

    pub fn inh_state(&self, j: u32) -> NeuronState {
        self.st.inh[j as usize]
    }

    /// dAP trace of excitatory neuron `i` at the current step.
    pub fn dap_trace(&self, i: u32) -> f64 {
        self.z_at(i as usize, self.st.step)
    }

    #[inline]
    fn z_at(&self, i: usize, s: u64) -> f64 {
        let z = self.st.exc[i].z;
        if z == 0.0 {
            return 0.0;
        }
        let elapsed = s - self.st.z_stamp[i] as u64;
        z * (-(elapsed as f64) * self.st.cfg.dt / self.st.net.tau_h).exp()
    }

    /// Whether excitatory neuron `i` has an active plateau at the current step.
    pub fn in_plateau(&self, i: u32) -> bool {
        let onset = self.st.dap_onset[i as usize];
        onset != NO_SPIKE && self.st.step - (onset as u64) < self.rt.exc_prop.dap_steps as u64
    }

    /// Neurons with an active plateau, per subpopulation.
    pub fn plateau_counts(&self) -> Vec<usize> {
        let topo = &self.st.topo;
        let mut counts = vec![0usize; topo.m];
        for i in 0..topo.n_e as u32 {
            if self.in_plateau(i) {
                counts[topo.subpop_of(i)] += 1;
            }
        }
        counts
    }

    /// Emits one spike from external source `subpop` at the current step.
    /// With `subset_only` the spike reaches only the subpopulation's fixed
    /// sparse subset.
    pub fn stimulate(&mut self, subpop: usize, subset_only: bool) {
        let now = self.st.step;
        let w = self.st.net.g_ex * self.st.net.v_read;
        let d = self.rt.d_ex;
        let targets: Vec<u32> = if subset_only {
            self.st.topo.first_subsets[subpop].clone()
        } else {
            self.st.topo.members(subpop).collect()
        };
        for t in targets {
            self.st.router.schedule(now, d, Delivery { target: t, pop: Population::Exc, channel: Channel::Primary, weight: w });
        }
        self.st.counters.external_spikes += 1;
    }

    /// Schedules an arbitrary delivery `delay` steps from now.
    pub fn inject(&mut self, delay: u64, d: Delivery) -> Result<()> {
        if delay == 0 || delay > self.st.router.max_delay() {
            return Err(invalid("delay", format!("must be in 1..={} steps", self.st.router.max_delay())));
        }
        self.st.router.schedule(self.st.step, delay, d);
        Ok(())
    }

    /// Pins the given EE edges to a stuck state; pinned devices ignore all
    /// later pulses.
    pub fn pin_edges(&mut self, edges: &[usize], stuck: Stuck) {
        let dev = &self.st.dev;
        for &e in edges {
            let d = &mut self.st.topo.synapses[e].device;
            match stuck {
                Stuck::On => {
                    d.g = dev.g_max;
                    d.p = dev.p_max;
                }
                Stuck::Off => {
                    d.g = d.g_min;
                    d.p = d.p_min;
                }
            }
            d.pinned = true;
        }
    }

    pub fn run_steps(&mut self, n: u64, obs: &mut dyn Observer) {
        for _ in 0..n {
            self.step_once(obs);
        }
    }

    /// Runs until `step` steps have completed.
    pub fn run_until(&mut self, step: u64, obs: &mut dyn Observer) {
        while self.st.step < step {
            self.step_once(obs);
        }
    }

    fn wake(&mut self, i: u32, s: u64) {
        let iu = i as usize;
        if self.st.is_awake[iu] {
            return;
        }
        let gap = (s - 1) - self.st.exc_stamp[iu];
        if gap > 0 {
            neuron::advance(&mut self.st.exc[iu], &self.rt.exc_prop, gap);
        }
        self.st.is_awake[iu] = true;
        self.st.awake.push(i);
    }

    fn step_once(&mut self, obs: &mut dyn Observer) {
        let s = self.st.step + 1;
        assert!(s < NO_SPIKE as u64, "simulation length exceeds the step counter range");

        // Deliveries.
        let mut due = std::mem::take(&mut self.rt.due);
        self.st.router.take_due(s, &mut due);
        for d in &due {
            match d.pop {
                Population::Exc => {
                    self.wake(d.target, s);
                    self.rt.inputs_e[d.target as usize].add(d.channel, d.weight);
                }
                Population::Inh => self.rt.inputs_i[d.target as usize].add(d.channel, d.weight),
            }
        }
        self.rt.due = due;

        // Neuron updates.
        let mut exc_spikes = std::mem::take(&mut self.rt.exc_spikes);
        let mut inh_spikes = std::mem::take(&mut self.rt.inh_spikes);
        let mut daps = std::mem::take(&mut self.rt.daps);
        exc_spikes.clear();
        inh_spikes.clear();
        daps.clear();
        for &i in &self.st.awake {
            let iu = i as usize;
            let out = neuron::step(&mut self.st.exc[iu], &self.rt.exc_prop, &self.rt.inputs_e[iu]);
            self.rt.inputs_e[iu] = Inputs::default();
            if out.dap_onset {
                daps.push(i);
            }
            if out.fired {
                exc_spikes.push(i);
            }
        }
        for j in 0..self.st.inh.len() {
            let out = neuron::step(&mut self.st.inh[j], &self.rt.inh_prop, &self.rt.inputs_i[j]);
            self.rt.inputs_i[j] = Inputs::default();
            if out.fired {
                inh_spikes.push(j as u32);
            }
        }
        exc_spikes.sort_unstable();
        daps.sort_unstable();

        // dAP trace and plateau bookkeeping.
        for &i in &daps {
            let iu = i as usize;
            let z = self.z_at(iu, s) + 1.0;
            self.st.exc[iu].z = z;
            self.st.z_stamp[iu] = s as u32;
            self.st.dap_onset[iu] = s as u32;
            obs.dap(s, i, self.st.topo.subpop_of(i));
        }
        self.st.counters.daps += daps.len() as u64;

        for &i in &exc_spikes {
            self.potentiate_inputs(i, s);
        }
        for &i in &exc_spikes {
            self.route_exc_spike(i, s);
            obs.spike(s, Population::Exc, i, self.st.topo.subpop_of(i));
        }
        for &j in &inh_spikes {
            self.route_inh_spike(j, s);
            obs.spike(s, Population::Inh, j, self.st.topo.subpop_of_inh(j));
        }
        self.st.counters.exc_spikes += exc_spikes.len() as u64;
        self.st.counters.inh_spikes += inh_spikes.len() as u64;

        if let Some(p) = self.st.probe {
            obs.probe(s, &self.st.exc[p as usize]);
        }

        // Retire neurons that cannot fire before their next input.
        if self.st.cfg.skip_quiescent {
            let mut k = 0;
            while k < self.st.awake.len() {
                let i = self.st.awake[k];
                let iu = i as usize;
                if Some(i) != self.st.probe && neuron::is_quiescent(&self.st.exc[iu], &self.rt.exc_prop) {
                    self.st.is_awake[iu] = false;
                    self.st.exc_stamp[iu] = s;
                    self.st.awake.swap_remove(k);
                } else {
                    k += 1;
                }
            }
        }

        self.rt.exc_spikes = exc_spikes;
        self.rt.inh_spikes = inh_spikes;
        self.rt.daps = daps;
        self.st.step = s;
    }

    /// Hebbian potentiation plus the homeostatic pulse on every in-edge whose
    /// latest presynaptic spike lies inside the pairing window and has not
    /// been paired yet.
    fn potentiate_inputs(&mut self, post: u32, s: u64) {
        let z = self.z_at(post as usize, s);
        let homeo = homeostatic_kind(z, self.st.net.z_star);
        let dev = &self.st.dev;
        let noisy = dev.sigma_w > 0.0;
        let topo = &mut self.st.topo;
        let range = topo.in_offsets[post as usize] as usize..topo.in_offsets[post as usize + 1] as usize;
        let mut count = 0;
        for k in range {
            let (e, pre) = topo.in_edges[k];
            let ls = self.st.last_spike[pre as usize];
            if ls == NO_SPIKE || !in_pairing_window(s - ls as u64, self.rt.dt_min, self.rt.window) {
                continue;
            }
            let syn = &mut topo.synapses[e as usize];
            if syn.paired_step == ls {
                continue;
            }
            syn.paired_step = ls;
            count += 1;
            if syn.device.pinned {
                continue;
            }
            let key = entity_key(self.rt.write_base, e as u64);
            let z1 = if noisy { normal_at(key, &mut syn.write_ctr) } else { 0.0 };
            pulse_with(&mut syn.device, PulseKind::Potentiation, dev.lambda_plus, dev, z1);
            let z2 = if noisy { normal_at(key, &mut syn.write_ctr) } else { 0.0 };
            pulse_with(&mut syn.device, homeo, self.rt.lambda_h, dev, z2);
        }
        self.st.counters.potentiations += count;
    }

    fn route_exc_spike(&mut self, pre: u32, s: u64) {
        self.st.last_spike[pre as usize] = s as u32;
        let dev = &self.st.dev;
        let v_read = self.st.net.v_read;
        let read_std = dev.sigma_r * dev.g_max;
        let noisy_w = dev.sigma_w > 0.0;
        let topo = &mut self.st.topo;
        let router = &mut self.st.router;
        let mut depressed = 0;
        for e in topo.out_offsets[pre as usize] as usize..topo.out_offsets[pre as usize + 1] as usize {
            let syn = &mut topo.synapses[e];
            let mut g = syn.device.g;
            if read_std > 0.0 {
                g += read_std * normal_at(entity_key(self.rt.read_base, e as u64), &mut syn.read_ctr);
            }
            router.schedule(
                s,
                self.rt.d_ee,
                Delivery { target: topo.edge_post[e], pop: Population::Exc, channel: Channel::Dendritic, weight: g * v_read },
            );
            if !syn.device.pinned {
                let z = if noisy_w { normal_at(entity_key(self.rt.write_base, e as u64), &mut syn.write_ctr) } else { 0.0 };
                pulse_with(&mut syn.device, PulseKind::Depression, dev.lambda_minus, dev, z);
                depressed += 1;
            }
        }
        self.st.counters.depressions += depressed;
        let w = self.st.net.g_ie * v_read;
        let k = topo.subpop_of(pre);
        for j in (k..topo.n_i).step_by(topo.m) {
            router.schedule(s, self.rt.d_ie, Delivery { target: j as u32, pop: Population::Inh, channel: Channel::Primary, weight: w });
        }
    }

    fn route_inh_spike(&mut self, j: u32, s: u64) {
        let w = self.st.net.g_ei * self.st.net.v_read;
        let k = self.st.topo.subpop_of_inh(j);
        for t in self.st.topo.members(k) {
            self.st.router.schedule(s, self.rt.d_ei, Delivery { target: t, pop: Population::Exc, channel: Channel::Inhibitory, weight: w });
        }
    }

    /// Serializes the complete simulation state.
    ///
    /// Layout: 8-byte magic `MEMSEQSN`, little-endian `u32` format version,
    /// then the bincode encoding of the state.
    pub fn snapshot(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
        bincode::serialize_into(&mut out, &self.st).expect("in-memory serialization cannot fail");
        out
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("not a snapshot file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("format version {version}, expected {SNAPSHOT_VERSION}")));
        }
        let st: State = bincode::deserialize(&bytes[12..]).map_err(|e| Error::Snapshot(e.to_string()))?;
        let rt = Runtime::new(&st)?;
        Ok(Self { st, rt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::DeviceMode;

    pub(crate) fn small_net() -> NetworkParams {
        NetworkParams { n_e: 280, n_i: 14, m: 14, k_ee: 70, rho: 5, ..NetworkParams::default() }
    }

    #[test]
    fn router_delivers_exactly_once_after_delay() {
        let mut r = SpikeRouter::new(20);
        let d = Delivery { target: 3, pop: Population::Exc, channel: Channel::Primary, weight: 1.0 };
        r.schedule(5, 20, d);
        r.schedule(5, 1, d);
        let mut out = Vec::new();
        let mut arrivals = Vec::new();
        for s in 6..60 {
            r.take_due(s, &mut out);
            for _ in &out {
                arrivals.push(s);
            }
        }
        assert_eq!(arrivals, vec![6, 25]);
        assert_eq!(r.scheduled(), 2);
        assert_eq!(r.delivered(), 2);
        assert_eq!(r.pending(), 0);
    }

    #[test]
    fn quiet_network_stays_quiet() {
        let mut sim = Simulator::new(&small_net(), &DeviceParams::binary(), &SimConfig::default()).unwrap();
        sim.run_steps(2000, &mut ());
        let c = sim.counters();
        assert_eq!(c.exc_spikes + c.inh_spikes + c.potentiations + c.depressions, 0);
    }

    #[test]
    fn off_grid_delay_is_rejected() {
        let net = NetworkParams { d_ee: 2.05, ..small_net() };
        assert!(matches!(
            Simulator::new(&net, &DeviceParams::binary(), &SimConfig::default()),
            Err(Error::OffGridDelay { name: "d_ee", .. })
        ));
    }

    #[test]
    fn snapshot_rejects_other_versions() {
        let sim = Simulator::new(&small_net(), &DeviceParams::analog(), &SimConfig::default()).unwrap();
        let mut bytes = sim.snapshot();
        bytes[8] = 99;
        assert!(matches!(Simulator::restore(&bytes), Err(Error::Snapshot(_))));
        assert!(matches!(Simulator::restore(b"garbage"), Err(Error::Snapshot(_))));
    }

    #[test]
    fn fresh_snapshot_equals_rebuild() {
        let cfg = SimConfig { master_seed: 4, ..SimConfig::default() };
        let a = Simulator::new(&small_net(), &DeviceParams::for_mode(DeviceMode::Binary), &cfg).unwrap();
        let b = Simulator::new(&small_net(), &DeviceParams::for_mode(DeviceMode::Binary), &cfg).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        let c = Simulator::restore(&a.snapshot()).unwrap();
        assert_eq!(c.snapshot(), a.snapshot());
    }
}
