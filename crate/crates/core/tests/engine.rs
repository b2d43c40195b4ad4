use memseq_core::device::{DeviceMode, DeviceParams};
use memseq_core::engine::{Delivery, Observer, Population, SimConfig, Simulator};
use memseq_core::network::{build_network, in_pairing_window, NetworkParams};
use memseq_core::neuron::{Channel, NeuronState};
use proptest::prelude::*;

#[derive(Default)]
struct Spikes {
    list: Vec<(u64, Population, u32)>,
}

impl Observer for Spikes {
    fn spike(&mut self, step: u64, pop: Population, neuron: u32, _subpop: usize) {
        self.list.push((step, pop, neuron));
    }
}

fn small_net() -> NetworkParams {
    NetworkParams { n_e: 280, n_i: 14, m: 14, k_ee: 70, rho: 5, ..NetworkParams::default() }
}

/// Two excitatory neurons per subpopulation, all-to-all EE wiring.
fn tiny_net() -> NetworkParams {
    NetworkParams { n_e: 28, n_i: 14, m: 14, k_ee: 27, rho: 2, ..NetworkParams::default() }
}

fn kick(target: u32) -> Delivery {
    Delivery { target, pop: Population::Exc, channel: Channel::Primary, weight: 6168.31 }
}

/// Drives a few sequence-like stimuli through a simulator.
fn drive(sim: &mut Simulator, obs: &mut dyn Observer, from: usize, to: usize) {
    let order = [0usize, 3, 1, 4, 8, 5, 3, 1, 4, 2];
    for (k, &sp) in order.iter().enumerate().take(to).skip(from) {
        let at = 1 + 400 * k as u64;
        sim.run_until(at, obs);
        sim.stimulate(sp, k == 0);
    }
    sim.run_until(400 * to as u64, obs);
}

#[test]
fn identical_configuration_gives_identical_runs() {
    let cfg = SimConfig { master_seed: 9, ..SimConfig::default() };
    let run = || {
        let mut sim = Simulator::new(&small_net(), &DeviceParams::binary(), &cfg).unwrap();
        let mut rec = Spikes::default();
        drive(&mut sim, &mut rec, 0, 10);
        (rec.list, sim.snapshot())
    };
    let (a, sa) = run();
    let (b, sb) = run();
    assert!(!a.is_empty());
    assert_eq!(a, b);
    assert_eq!(sa, sb);
}

#[test]
fn lazy_and_eager_updates_agree() {
    for mode in [DeviceMode::Analog, DeviceMode::Binary] {
        let mut records = Vec::new();
        for skip in [true, false] {
            let cfg = SimConfig { skip_quiescent: skip, ..SimConfig::default() };
            let mut sim = Simulator::new(&small_net(), &DeviceParams::for_mode(mode), &cfg).unwrap();
            let mut rec = Spikes::default();
            drive(&mut sim, &mut rec, 0, 10);
            let g: Vec<f64> = sim.topology().synapses.iter().map(|s| s.device.g).collect();
            records.push((rec.list, g, sim.counters()));
        }
        assert_eq!(records[0].0, records[1].0, "{mode:?} spikes");
        assert_eq!(records[0].1, records[1].1, "{mode:?} conductances");
        assert_eq!(records[0].2, records[1].2, "{mode:?} counters");
    }
}

#[test]
fn every_spike_is_routed_to_its_full_fan_out() {
    let mut sim = Simulator::new(&small_net(), &DeviceParams::analog(), &SimConfig::default()).unwrap();
    let mut rec = Spikes::default();
    drive(&mut sim, &mut rec, 0, 10);
    let topo = sim.topology();
    let mut expected = 0u64;
    for &(_, pop, n) in &rec.list {
        expected += match pop {
            Population::Exc => topo.out_range(n).len() as u64 + topo.inh_of(topo.subpop_of(n)).count() as u64,
            Population::Inh => topo.subpop_size(topo.subpop_of_inh(n)) as u64,
        };
    }
    // external stimuli: one subset plus nine full subpopulations
    let order = [0usize, 3, 1, 4, 8, 5, 3, 1, 4, 2];
    expected += topo.first_subsets[0].len() as u64;
    expected += order[1..].iter().map(|&k| topo.subpop_size(k) as u64).sum::<u64>();
    let r = sim.router();
    assert_eq!(r.scheduled(), expected);
    assert_eq!(r.delivered() + r.pending() as u64, r.scheduled());
}

#[derive(Default)]
struct Probe {
    first_dendritic: Option<u64>,
    spikes: Vec<(u64, u32)>,
}

impl Observer for Probe {
    fn spike(&mut self, step: u64, pop: Population, neuron: u32, _subpop: usize) {
        if pop == Population::Exc {
            self.spikes.push((step, neuron));
        }
    }
    fn probe(&mut self, step: u64, state: &NeuronState) {
        if self.first_dendritic.is_none() && state.ed_d != 0.0 {
            self.first_dendritic = Some(step);
        }
    }
}

#[test]
fn recurrent_input_arrives_exactly_one_delay_later() {
    for d_ee in [0.1, 2.0, 3.7] {
        let net = NetworkParams { d_ee, ..tiny_net() };
        let mut sim = Simulator::new(&net, &DeviceParams::analog().noiseless(), &SimConfig::default()).unwrap();
        sim.set_probe(Some(5));
        sim.inject(1, kick(0)).unwrap();
        let mut obs = Probe::default();
        sim.run_steps(200, &mut obs);
        let pre_spike = obs.spikes.iter().find(|s| s.1 == 0).expect("driven neuron fires").0;
        let delay = (d_ee / 0.1_f64).round() as u64;
        assert_eq!(obs.first_dendritic, Some(pre_spike + delay), "d_ee {d_ee}");
    }
}

#[test]
fn restored_checkpoint_continues_like_the_original() {
    let cfg = SimConfig { master_seed: 21, ..SimConfig::default() };
    let mut full = Simulator::new(&small_net(), &DeviceParams::binary(), &cfg).unwrap();
    let mut a = Spikes::default();
    drive(&mut full, &mut a, 0, 10);

    let mut first = Simulator::new(&small_net(), &DeviceParams::binary(), &cfg).unwrap();
    let mut b = Spikes::default();
    drive(&mut first, &mut b, 0, 5);
    let bytes = first.snapshot();
    drop(first);
    let mut resumed = Simulator::restore(&bytes).unwrap();
    drive(&mut resumed, &mut b, 5, 10);

    assert_eq!(a.list, b.list);
    assert_eq!(full.snapshot(), resumed.snapshot());
}

#[test]
fn perturbing_one_silent_edge_leaves_all_other_devices_unchanged() {
    let cfg = SimConfig { master_seed: 3, ..SimConfig::default() };
    let dev = DeviceParams { sigma_w: 0.05, sigma_r: 0.05, ..DeviceParams::analog() };
    let mut base = Simulator::new(&small_net(), &dev, &cfg).unwrap();
    let mut other = base.clone();

    // an edge whose presynaptic neuron belongs to a never-stimulated subpopulation
    let topo = base.topology();
    let silent_pre = topo.members(13).start;
    let e = topo.out_range(silent_pre).start;
    other.topology_mut().synapses[e].device.g += 1.0;

    let mut ra = Spikes::default();
    let mut rb = Spikes::default();
    drive(&mut base, &mut ra, 0, 10);
    drive(&mut other, &mut rb, 0, 10);
    assert_eq!(ra.list, rb.list);
    let sa = &base.topology().synapses;
    let sb = &other.topology().synapses;
    for k in 0..sa.len() {
        if k == e {
            assert_eq!(sb[k].device.g, sa[k].device.g + 1.0);
        } else {
            assert_eq!(sa[k], sb[k], "edge {k}");
        }
    }
}

fn edge_between(sim: &Simulator, pre: u32, post: u32) -> usize {
    let topo = sim.topology();
    topo.out_range(pre).find(|&e| topo.edge_post[e] == post).expect("all-to-all wiring")
}

/// Makes `pre` fire, then `post` roughly `offset` steps later, and returns
/// the observed lag and the change of the pre -> post conductance.
fn pair(net: &NetworkParams, dev: &DeviceParams, pre: u32, post: u32, offset: i64) -> (i64, f64) {
    let mut sim = Simulator::new(net, dev, &SimConfig::default()).unwrap();
    let e = edge_between(&sim, pre, post);
    let g0 = sim.topology().synapses[e].device.g;
    let (first, second) = if offset >= 0 { (pre, post) } else { (post, pre) };
    let mut rec = Spikes::default();
    sim.inject(1, kick(first)).unwrap();
    sim.run_steps(offset.unsigned_abs(), &mut rec);
    sim.inject(1, kick(second)).unwrap();
    sim.run_steps(100, &mut rec);
    let t = |n: u32| rec.list.iter().find(|s| s.1 == Population::Exc && s.2 == n).expect("driven neuron fires").0 as i64;
    (t(post) - t(pre), sim.topology().synapses[e].device.g - g0)
}

#[test]
fn pairing_gate_matches_the_window_for_every_lag() {
    // no depression and no homeostatic pulse: conductance changes only on pairing
    let dev = DeviceParams { lambda_minus: 0.0, ..DeviceParams::analog().noiseless() };
    let net = NetworkParams { n_i: 0, ..tiny_net() };
    let dt_min = (net.dt_min / 0.1).round() as u64;
    let window = (net.pairing_window / 0.1).round() as u64;
    let mut seen = std::collections::BTreeSet::new();
    for offset in -60..=(window as i64 + 60) {
        let (lag, dg) = pair(&net, &dev, 0, 2, offset);
        seen.insert(lag);
        let expect = lag > 0 && in_pairing_window(lag as u64, dt_min, window);
        assert_eq!(dg > 0.0, expect, "lag {lag} steps, change {dg}");
        assert!(dg >= 0.0);
    }
    for edge in [0, 1, dt_min, dt_min + 1, window, window + 1] {
        assert!(seen.contains(&(edge as i64)), "lag {edge} not exercised");
    }
}

#[test]
fn homeostatic_depression_lowers_the_pairing_update() {
    let dev = DeviceParams::analog().noiseless();
    let base = NetworkParams { n_i: 0, ..tiny_net() };
    // z stays 0: a negative target forces the depression branch
    let (lag_hi, dg_hi) = pair(&NetworkParams { z_star: -1.0, ..base.clone() }, &dev, 0, 2, 300);
    let (lag_lo, dg_lo) = pair(&base, &dev, 0, 2, 300);
    assert_eq!(lag_hi, lag_lo);
    assert!(dg_hi < dg_lo, "{dg_hi} !< {dg_lo}");
}

#[test]
fn external_spike_activates_whole_subpopulation_or_its_subset() {
    let mut sim = Simulator::new(&NetworkParams::default(), &DeviceParams::binary(), &SimConfig::default()).unwrap();
    sim.run_until(1, &mut ());
    sim.stimulate(4, false);
    let mut rec = Spikes::default();
    sim.run_steps(300, &mut rec);
    let topo = sim.topology();
    let mut fired: Vec<u32> = rec.list.iter().filter(|s| s.1 == Population::Exc).map(|s| s.2).collect();
    fired.sort_unstable();
    assert_eq!(fired, topo.members(4).collect::<Vec<_>>());

    sim.run_until(3000, &mut ());
    sim.stimulate(7, true);
    let mut rec = Spikes::default();
    sim.run_steps(300, &mut rec);
    let mut fired: Vec<u32> = rec.list.iter().filter(|s| s.1 == Population::Exc).map(|s| s.2).collect();
    fired.sort_unstable();
    let mut subset = sim.topology().first_subsets[7].clone();
    subset.sort_unstable();
    assert_eq!(fired, subset);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn wiring_has_fixed_in_degree_without_autapses_or_multapses(seed in any::<u64>(), realization in 0u64..8) {
        let net = NetworkParams { n_e: 420, n_i: 14, m: 14, k_ee: 105, rho: 5, ..NetworkParams::default() };
        let topo = build_network(&net, &DeviceParams::binary(), seed, realization).unwrap();
        for post in 0..net.n_e as u32 {
            let mut pres: Vec<u32> = topo.in_edges[topo.in_range(post)].iter().map(|&(_, p)| p).collect();
            prop_assert_eq!(pres.len(), net.k_ee);
            prop_assert!(!pres.contains(&post));
            pres.sort_unstable();
            pres.dedup();
            prop_assert_eq!(pres.len(), net.k_ee);
        }
    }
}
