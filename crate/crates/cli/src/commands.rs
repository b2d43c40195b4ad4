//! Subcommand implementations. Each returns its output files in memory;
//! the caller writes them next to the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use memseq_core::device::{run_pulse_protocol, trace_to_csv};
use memseq_core::engine::{Observer, Population, Stuck};
use memseq_core::experiments::{
    error_bands, episodes_to_solution, par_map, run_failure, run_sweep, train, FailureResult, RealizationResult,
};
use memseq_core::neuron::NeuronState;

use crate::config::Config;
use crate::CliError;

/// Named file contents produced by a command.
pub type Outputs = Vec<(String, Vec<u8>)>;

fn runtime(e: memseq_core::Error) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn device_trace(cfg: &Config) -> Result<Outputs, CliError> {
    let params = cfg.device_params();
    let schedule = cfg.trace.schedule.pulses(cfg.trace.pulses);
    let rows = run_pulse_protocol(&params, &schedule, cfg.run.master_seed).map_err(runtime)?;
    Ok(vec![("device_trace.csv".into(), trace_to_csv(&rows).into_bytes())])
}

/// Spike, dAP and probe recorder for one realization.
struct Recorder {
    dt: f64,
    /// decimals needed to print grid times exactly
    prec: usize,
    spikes: Option<String>,
    daps: Option<String>,
    probe: Option<String>,
}

impl Recorder {
    fn t(&self, step: u64) -> String {
        format!("{:.*}", self.prec, step as f64 * self.dt)
    }
}

impl Observer for Recorder {
    fn spike(&mut self, step: u64, pop: Population, neuron: u32, subpop: usize) {
        let t = self.t(step);
        if let Some(out) = &mut self.spikes {
            let _ = writeln!(out, "{t},{neuron},{subpop},{}", pop.label());
        }
    }

    fn dap(&mut self, step: u64, neuron: u32, subpop: usize) {
        let t = self.t(step);
        if let Some(out) = &mut self.daps {
            let _ = writeln!(out, "{t},{neuron},{subpop}");
        }
    }

    fn probe(&mut self, step: u64, s: &NeuronState) {
        let t = self.t(step);
        if let Some(out) = &mut self.probe {
            let _ = writeln!(out, "{t},{},{},{}", s.v, s.ed_i, u8::from(s.plateau));
        }
    }
}

struct TrainedRealization {
    result: RealizationResult,
    files: Outputs,
}

fn train_one(cfg: &Config, realization: u64) -> memseq_core::Result<TrainedRealization> {
    let spec = cfg.training_spec();
    let mut sim = spec.simulator(realization)?;
    sim.set_probe(cfg.output.probe_neuron);
    let mut rec = Recorder {
        dt: spec.sim.dt,
        prec: (-spec.sim.dt.log10()).ceil().clamp(0.0, 9.0) as usize,
        spikes: cfg.output.spikes.then(|| "t_ms,neuron,subpop,kind\n".to_string()),
        daps: cfg.output.daps.then(|| "t_ms,neuron,subpop\n".to_string()),
        probe: cfg.output.probe_neuron.map(|_| "t_ms,v_mV,i_ed_uA,dap_active\n".to_string()),
    };
    let mut errors = Vec::with_capacity(spec.program.episodes);
    train(&mut sim, &spec.program, 0..spec.program.episodes, spec.rho_pred, &mut errors, &mut rec)?;
    let mut files: Outputs = Vec::new();
    let name = |stem: &str, ext: &str| format!("{stem}_r{realization}.{ext}");
    if let Some(s) = rec.spikes {
        files.push((name("spikes", "csv"), s.into_bytes()));
    }
    if let Some(s) = rec.daps {
        files.push((name("daps", "csv"), s.into_bytes()));
    }
    if let Some(s) = rec.probe {
        files.push((name("probe", "csv"), s.into_bytes()));
    }
    if cfg.output.connectivity {
        files.push((name("connectivity", "csv"), sim.topology().connectivity_csv(&spec.device).into_bytes()));
    }
    if cfg.output.snapshot {
        files.push((name("snapshot", "bin"), sim.snapshot()));
    }
    let result = RealizationResult {
        realization,
        episodes_to_solution: episodes_to_solution(&errors),
        errors,
        counters: sim.counters(),
    };
    Ok(TrainedRealization { result, files })
}

/// Trains every realization. Also returns the per-realization results.
pub fn train_cmd(cfg: &Config) -> Result<(Outputs, Vec<RealizationResult>), CliError> {
    let runs = par_map(&cfg.realizations(), cfg.run.threads, |&r| train_one(cfg, r)).map_err(runtime)?;
    let results: Vec<RealizationResult> = runs.iter().map(|r| r.result.clone()).collect();

    let mut training = String::from("realization,episode,error\n");
    let mut summary = String::from("realization,episodes_to_solution,final_error\n");
    for r in &results {
        for (e, err) in r.errors.iter().enumerate() {
            let _ = writeln!(training, "{},{e},{err}", r.realization);
        }
        let ets = r.episodes_to_solution.map(|e| e.to_string()).unwrap_or_default();
        let last = r.errors.last().map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(summary, "{},{ets},{last}", r.realization);
    }
    let mut bands = String::from("episode,median,p5,p95\n");
    for (e, (m, lo, hi)) in error_bands(&results).iter().enumerate() {
        let _ = writeln!(bands, "{e},{m},{lo},{hi}");
    }
    let mut out: Outputs = vec![
        ("training.csv".into(), training.into_bytes()),
        ("training_summary.csv".into(), summary.into_bytes()),
        ("training_bands.csv".into(), bands.into_bytes()),
    ];
    for r in runs {
        out.extend(r.files);
    }
    Ok((out, results))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn sweep_cmd(cfg: &Config) -> Result<Outputs, CliError> {
    let sweep = cfg.sweep_spec();
    let cells = run_sweep(&cfg.training_spec(), &sweep, cfg.run.threads).map_err(runtime)?;
    let names: Vec<&str> = sweep.axes.iter().map(|a| a.name.as_str()).collect();
    let mut grid = String::from("axis1,axis2,median_error,median_episodes\n");
    let mut runs = String::from("axis1,axis2,realization,final_error,episodes_to_solution,error_message\n");
    for c in &cells {
        let a1 = c.values[0].to_string();
        let a2 = c.values.get(1).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(grid, "{a1},{a2},{},{}", opt(c.median_error()), opt(c.median_episodes()));
        if let Some(msg) = &c.error {
            let _ = writeln!(runs, "{a1},{a2},,,,\"{}\"", msg.replace('"', "'"));
        }
        for r in &c.results {
            let ets = r.episodes_to_solution.map(|e| e.to_string()).unwrap_or_default();
            let _ = writeln!(runs, "{a1},{a2},{},{},{ets},", r.realization, opt(r.errors.last().copied()));
        }
    }
    let axes = format!("axis,name\naxis1,{}\naxis2,{}\n", names[0], names.get(1).copied().unwrap_or(""));
    Ok(vec![
        ("sweep_grid.csv".into(), grid.into_bytes()),
        ("sweep_runs.csv".into(), runs.into_bytes()),
        ("sweep_axes.csv".into(), axes.into_bytes()),
    ])
}

fn polarity(s: Stuck) -> &'static str {
    match s {
        Stuck::On => "on",
        Stuck::Off => "off",
    }
}

/// Runs every failure branch for every realization.
pub fn failure_cmd(cfg: &Config) -> Result<(Outputs, Vec<FailureResult>), CliError> {
    let spec = cfg.training_spec();
    let failures = cfg.failure_specs();
    let per_real = par_map(&cfg.realizations(), cfg.run.threads, |&r| run_failure(&spec, &failures, r))
        .map_err(runtime)?;
    let results: Vec<FailureResult> = per_real.into_iter().flatten().collect();
    let mut csv = String::from("realization,polarity,fraction,inject_episode,pinned,episode,error\n");
    for f in &results {
        for (e, err) in f.errors.iter().enumerate() {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{e},{err}",
                f.realization,
                polarity(f.spec.stuck),
                f.spec.fraction,
                f.spec.inject_episode,
                f.pinned
            );
        }
    }
    Ok((vec![("failure.csv".into(), csv.into_bytes())], results))
}

/// Writes `files` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, files: &Outputs) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}
