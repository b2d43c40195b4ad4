//! Stimulation protocol, prediction assessment, training runs, sweeps and
//! failure injection.

use rand::seq::{index, SliceRandom};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::DeviceParams;
use crate::engine::{Counters, Observer, SimConfig, Simulator, Stuck};
use crate::error::{invalid, Error, Result};
use crate::network::{to_steps, NetworkParams};
use crate::rng::{Purpose, RandomStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceProgram {
    /// One string per sequence, one character per element.
    pub sequences: Vec<String>,
    /// interval between elements of a sequence, ms
    pub delta_t: f64,
    /// interval between the last element of a sequence and the next sequence, ms
    pub delta_t_seq: f64,
    pub episodes: usize,
    /// Present the sequences in a fresh random order every episode.
    pub shuffle: bool,
}

impl Default for SequenceProgram {
    fn default() -> Self {
        Self {
            sequences: ["ADBEI", "FDBEC", "HLJKD", "GLJKE"].map(String::from).to_vec(),
            delta_t: 40.0,
            delta_t_seq: 100.0,
            episodes: 400,
            shuffle: false,
        }
    }
}

/// One external stimulus within an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StimEvent {
    /// emission step relative to the episode start
    pub offset: u64,
    pub subpop: usize,
    pub sequence: usize,
    pub position: usize,
}

impl StimEvent {
    /// Sequence openers stimulate only the sparse subset of their subpopulation.
    pub fn subset_only(&self) -> bool {
        self.position == 0
    }
}

impl SequenceProgram {
    /// Distinct elements in sorted order; element `k` drives subpopulation `k`.
    pub fn alphabet(&self) -> Vec<char> {
        let mut a: Vec<char> = self.sequences.iter().flat_map(|s| s.chars()).collect();
        a.sort_unstable();
        a.dedup();
        a
    }

    pub fn subpop_of(&self, element: char) -> Option<usize> {
        self.alphabet().binary_search(&element).ok()
    }

    pub fn validate(&self, m: usize) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::InvalidProgram("no sequences".into()));
        }
        if let Some(s) = self.sequences.iter().find(|s| s.chars().count() < 2) {
            return Err(Error::InvalidProgram(format!("sequence `{s}` has fewer than 2 elements")));
        }
        let a = self.alphabet();
        if a.len() > m {
            return Err(Error::InvalidProgram(format!("{} distinct elements but only {m} subpopulations", a.len())));
        }
        if !(self.delta_t > 0.0 && self.delta_t_seq > 0.0) {
            return Err(Error::InvalidProgram("intervals must be positive".into()));
        }
        Ok(())
    }

    /// Number of assessed transitions per episode.
    pub fn transitions(&self) -> usize {
        self.sequences.iter().map(|s| s.chars().count() - 1).sum()
    }

    /// Episode length in steps and the stimulus events with sequences in the
    /// given order.
    pub fn episode_events(&self, dt: f64, order: &[usize]) -> Result<(u64, Vec<StimEvent>)> {
        let isi = to_steps("delta_t", self.delta_t, dt)?;
        let gap = to_steps("delta_t_seq", self.delta_t_seq, dt)?;
        let alphabet = self.alphabet();
        let mut events = Vec::new();
        let mut t = 0u64;
        for &q in order {
            let seq: Vec<char> = self.sequences[q].chars().collect();
            for (pos, c) in seq.iter().enumerate() {
                let subpop = alphabet.binary_search(c).expect("element in alphabet");
                events.push(StimEvent { offset: t + pos as u64 * isi, subpop, sequence: q, position: pos });
            }
            t += (seq.len() as u64 - 1) * isi + gap;
        }
        Ok((t, events))
    }

    /// Presentation order of the sequences in `episode`.
    pub fn order(&self, episode: usize, master_seed: u64, realization: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.sequences.len()).collect();
        if self.shuffle {
            let mut rng = RandomStream::new(master_seed, realization, episode as u64, Purpose::Shuffle);
            order.shuffle(&mut rng);
        }
        order
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionAssessment {
    pub target: usize,
    pub predicted: Vec<usize>,
    pub false_positives: usize,
    pub false_negative: bool,
}

impl TransitionAssessment {
    pub fn error(&self) -> f64 {
        if self.false_positives + usize::from(self.false_negative) > 0 {
            1.0
        } else {
            0.0
        }
    }
}

/// Compares the subpopulations holding at least `rho_pred` predictive
/// neurons with the target.
pub fn assess_transition(counts: &[usize], target: usize, rho_pred: usize) -> TransitionAssessment {
    let predicted: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] >= rho_pred).collect();
    let false_positives = predicted.iter().filter(|&&k| k != target).count();
    let false_negative = !predicted.contains(&target);
    TransitionAssessment { target, predicted, false_positives, false_negative }
}

/// Mean transition error.
pub fn episode_error(transitions: &[TransitionAssessment]) -> f64 {
    if transitions.is_empty() {
        return 0.0;
    }
    transitions.iter().map(TransitionAssessment::error).sum::<f64>() / transitions.len() as f64
}

/// First episode from which the error is zero through the end of the curve.
pub fn episodes_to_solution(curve: &[f64]) -> Option<usize> {
    let tail = curve.iter().rev().take_while(|&&e| e == 0.0).count();
    if tail == 0 {
        None
    } else {
        Some(curve.len() - tail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSpec {
    pub fraction: f64,
    pub stuck: Stuck,
    pub inject_episode: usize,
}

impl FailureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(invalid("failure.fraction", format!("must be in [0, 1], got {}", self.fraction)));
        }
        Ok(())
    }
}

/// Pins a uniformly sampled fraction of the EE edges. Returns the pinned edge ids.
pub fn inject_failure(sim: &mut Simulator, spec: &FailureSpec) -> Result<Vec<usize>> {
    spec.validate()?;
    let n = sim.topology().n_edges();
    let count = ((spec.fraction * n as f64).round() as usize).min(n);
    let cfg = sim.config();
    let mut rng = RandomStream::new(cfg.master_seed, cfg.realization, spec.inject_episode as u64, Purpose::Failure);
    let mut edges = index::sample(&mut rng, n, count).into_vec();
    edges.sort_unstable();
    sim.pin_edges(&edges, spec.stuck);
    Ok(edges)
}

/// Complete description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSpec {
    pub net: NetworkParams,
    pub device: DeviceParams,
    pub sim: SimConfig,
    pub program: SequenceProgram,
    /// predictive neurons needed for a subpopulation to count as predicted
    pub rho_pred: usize,
}

impl TrainingSpec {
    pub fn validate(&self) -> Result<()> {
        self.net.validate()?;
        self.device.validate()?;
        self.program.validate(self.net.m)?;
        if self.rho_pred == 0 {
            return Err(invalid("rho_pred", "must be positive"));
        }
        Ok(())
    }

    pub fn simulator(&self, realization: u64) -> Result<Simulator> {
        self.validate()?;
        let cfg = SimConfig { realization, ..self.sim.clone() };
        Simulator::new(&self.net, &self.device, &cfg)
    }
}

/// Trains for one episode and returns its transition assessments.
/// The episode starts at the simulator's current step.
pub fn run_episode(
    sim: &mut Simulator,
    program: &SequenceProgram,
    episode: usize,
    rho_pred: usize,
    obs: &mut dyn Observer,
) -> Result<Vec<TransitionAssessment>> {
    let cfg = sim.config();
    let order = program.order(episode, cfg.master_seed, cfg.realization);
    let (len, events) = program.episode_events(cfg.dt, &order)?;
    let start = sim.step();
    let mut out = Vec::with_capacity(events.len());
    for ev in &events {
        let at = start + ev.offset;
        if ev.position > 0 {
            sim.run_until(at - 1, obs);
            out.push(assess_transition(&sim.plateau_counts(), ev.subpop, rho_pred));
        }
        sim.run_until(at, obs);
        sim.stimulate(ev.subpop, ev.subset_only());
    }
    sim.run_until(start + len, obs);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationResult {
    pub realization: u64,
    /// error per episode, indexed from 0
    pub errors: Vec<f64>,
    pub episodes_to_solution: Option<usize>,
    pub counters: Counters,
}

/// Trains `sim` from episode `first` up to (excluding) `last`, appending the
/// episode errors to `errors`.
pub fn train(
    sim: &mut Simulator,
    program: &SequenceProgram,
    episodes: std::ops::Range<usize>,
    rho_pred: usize,
    errors: &mut Vec<f64>,
    obs: &mut dyn Observer,
) -> Result<()> {
    for e in episodes {
        let ts = run_episode(sim, program, e, rho_pred, obs)?;
        errors.push(episode_error(&ts));
    }
    Ok(())
}

pub fn run_realization(spec: &TrainingSpec, realization: u64, obs: &mut dyn Observer) -> Result<RealizationResult> {
    let mut sim = spec.simulator(realization)?;
    let mut errors = Vec::with_capacity(spec.program.episodes);
    train(&mut sim, &spec.program, 0..spec.program.episodes, spec.rho_pred, &mut errors, obs)?;
    Ok(RealizationResult {
        realization,
        episodes_to_solution: episodes_to_solution(&errors),
        errors,
        counters: sim.counters(),
    })
}

/// Runs `f` over `items` on a pool of `threads` workers (0 = all cores),
/// keeping the input order in the output.
pub fn par_map<T, R, F>(items: &[T], threads: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid("threads", e.to_string()))?;
    pool.install(|| items.par_iter().map(&f).collect())
}

/// Trains every realization independently.
pub fn run_training(spec: &TrainingSpec, realizations: &[u64], threads: usize) -> Result<Vec<RealizationResult>> {
    spec.validate()?;
    par_map(realizations, threads, |&r| run_realization(spec, r, &mut ()))
}

/// Median of the finite values; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    percentile(values, 50.0)
}

/// Linear-interpolated percentile (`q` in 0..=100).
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    let mut v: Vec<f64> = values.to_vec();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Per-episode median and 5/95 percentiles across realizations.
pub fn error_bands(results: &[RealizationResult]) -> Vec<(f64, f64, f64)> {
    let n = results.iter().map(|r| r.errors.len()).min().unwrap_or(0);
    (0..n)
        .map(|e| {
            let col: Vec<f64> = results.iter().map(|r| r.errors[e]).collect();
            (median(&col).unwrap(), percentile(&col, 5.0).unwrap(), percentile(&col, 95.0).unwrap())
        })
        .collect()
}

/// Median episodes-to-solution, counting unsolved realizations as never
/// solving. `None` when at least half never solve.
pub fn median_episodes_to_solution(results: &[RealizationResult]) -> Option<f64> {
    let v: Vec<f64> = results
        .iter()
        .map(|r| r.episodes_to_solution.map_or(f64::INFINITY, |e| e as f64))
        .collect();
    median(&v).filter(|m| m.is_finite())
}

/// Result of one failure-injection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureResult {
    pub realization: u64,
    pub spec: FailureSpec,
    pub pinned: usize,
    /// errors of all episodes, before and after injection
    pub errors: Vec<f64>,
}

/// Trains up to `inject_episode`, then continues one branch per failure
/// spec from the same trained state.
pub fn run_failure(
    spec: &TrainingSpec,
    failures: &[FailureSpec],
    realization: u64,
) -> Result<Vec<FailureResult>> {
    let inject = failures.first().map_or(0, |f| f.inject_episode);
    if failures.iter().any(|f| f.inject_episode != inject) {
        return Err(invalid("failure.inject_episode", "all branches must share the injection episode"));
    }
    if inject > spec.program.episodes {
        return Err(invalid("failure.inject_episode", "after the last episode"));
    }
    let mut base = spec.simulator(realization)?;
    let mut prefix = Vec::new();
    train(&mut base, &spec.program, 0..inject, spec.rho_pred, &mut prefix, &mut ())?;
    failures
        .iter()
        .map(|f| {
            let mut sim = base.clone();
            let pinned = inject_failure(&mut sim, f)?.len();
            let mut errors = prefix.clone();
            train(&mut sim, &spec.program, inject..spec.program.episodes, spec.rho_pred, &mut errors, &mut ())?;
            Ok(FailureResult { realization, spec: *f, pinned, errors })
        })
        .collect()
}

/// Parameter names a sweep axis may vary.
pub const SWEEP_AXES: &[&str] = &[
    "on_off_ratio",
    "g_max",
    "lambda_plus",
    "lambda_minus",
    "beta",
    "mu",
    "mu_plus",
    "mu_minus",
    "sigma_w",
    "sigma_r",
    "p_max",
    "theta_p",
    "z_star",
    "theta_dap_scale",
    "rho_pred",
];

/// Sets one swept parameter on `spec`.
///
/// `on_off_ratio` sets `g_max` to the ratio times the mean initial
/// conductance; `lambda_plus` keeps the ratio λ₋/λ₊; `beta` sets
/// λ₋ = λ₊/β. The dAP threshold follows automatically because it is derived
/// when the simulator is built.
pub fn apply_axis(spec: &mut TrainingSpec, name: &str, value: f64) -> Result<()> {
    let d = &mut spec.device;
    match name {
        "on_off_ratio" => d.g_max = value * 0.5 * (d.g0_min + d.g0_max),
        "g_max" => d.g_max = value,
        "lambda_plus" => {
            let ratio = if d.lambda_plus > 0.0 { d.lambda_minus / d.lambda_plus } else { 0.0 };
            d.lambda_plus = value;
            d.lambda_minus = value * ratio;
        }
        "lambda_minus" => d.lambda_minus = value,
        "beta" => {
            if !(value > 0.0) {
                return Err(invalid("beta", format!("must be positive, got {value}")));
            }
            d.lambda_minus = d.lambda_plus / value;
        }
        "mu" => {
            d.mu_plus = value;
            d.mu_minus = value;
        }
        "mu_plus" => d.mu_plus = value,
        "mu_minus" => d.mu_minus = value,
        "sigma_w" => d.sigma_w = value,
        "sigma_r" => d.sigma_r = value,
        "p_max" => d.p_max = value,
        "theta_p" => d.theta_p = value,
        "z_star" => spec.net.z_star = value,
        "theta_dap_scale" => spec.net.theta_dap_scale = value,
        "rho_pred" => {
            if !(value >= 1.0 && value.fract() == 0.0) {
                return Err(invalid("rho_pred", format!("must be a positive integer, got {value}")));
            }
            spec.rho_pred = value as usize;
        }
        other => return Err(Error::UnknownAxis(other.to_string())),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    /// one or two axes; the grid is their cartesian product
    pub axes: Vec<SweepAxis>,
    pub realizations: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(invalid("sweep.axes", format!("need one or two axes, got {}", self.axes.len())));
        }
        for a in &self.axes {
            if !SWEEP_AXES.contains(&a.name.as_str()) {
                return Err(Error::UnknownAxis(a.name.clone()));
            }
            if a.values.is_empty() {
                return Err(invalid("sweep.axes", format!("axis `{}` has no values", a.name)));
            }
        }
        if self.realizations.is_empty() {
            return Err(invalid("sweep.realizations", "need at least one realization"));
        }
        Ok(())
    }

    /// Axis values of every grid cell, first axis outermost.
    pub fn cells(&self) -> Vec<Vec<f64>> {
        let mut cells = vec![Vec::new()];
        for a in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| a.values.iter().map(move |&v| [c.clone(), vec![v]].concat()))
                .collect();
        }
        cells
    }

    /// Training spec of one cell.
    pub fn cell_spec(&self, base: &TrainingSpec, values: &[f64]) -> Result<TrainingSpec> {
        let mut spec = base.clone();
        for (a, &v) in self.axes.iter().zip(values) {
            apply_axis(&mut spec, &a.name, v)?;
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of one sweep cell. A cell whose parameters are invalid or whose
/// run fails keeps the error message and the sweep continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub values: Vec<f64>,
    pub results: Vec<RealizationResult>,
    pub error: Option<String>,
}

impl SweepCell {
    /// Error of the last episode of every realization.
    pub fn final_errors(&self) -> Vec<f64> {
        self.results.iter().filter_map(|r| r.errors.last().copied()).collect()
    }

    /// Median over realizations of the final error.
    pub fn median_error(&self) -> Option<f64> {
        median(&self.final_errors())
    }

    pub fn median_episodes(&self) -> Option<f64> {
        median_episodes_to_solution(&self.results)
    }
}

/// Runs every cell × realization of the grid on `threads` workers.
pub fn run_sweep(base: &TrainingSpec, sweep: &SweepSpec, threads: usize) -> Result<Vec<SweepCell>> {
    sweep.validate()?;
    let cells = sweep.cells();
    let specs: Vec<std::result::Result<TrainingSpec, String>> =
        cells.iter().map(|v| sweep.cell_spec(base, v).map_err(|e| e.to_string())).collect();
    let jobs: Vec<(usize, u64)> = specs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_ok())
        .flat_map(|(c, _)| sweep.realizations.iter().map(move |&r| (c, r)))
        .collect();
    let runs = par_map(&jobs, threads, |&(c, r)| {
        let spec = specs[c].as_ref().expect("only valid cells are scheduled");
        Ok(run_realization(spec, r, &mut ()).map_err(|e| e.to_string()))
    })?;
    let mut out: Vec<SweepCell> = cells
        .into_iter()
        .zip(&specs)
        .map(|(values, s)| SweepCell { values, results: Vec::new(), error: s.as_ref().err().cloned() })
        .collect();
    for (&(c, _), run) in jobs.iter().zip(runs) {
        match run {
            Ok(res) => out[c].results.push(res),
            Err(e) => {
                out[c].error.get_or_insert(e);
            }
        }
    }
    Ok(out)
}
