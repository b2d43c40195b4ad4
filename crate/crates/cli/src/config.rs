//! Layered experiment configuration.
//!
//! Resolution order: built-in defaults, then the TOML file, then `--set`
//! overrides. Keys are dotted paths (`device.g_max`, `network.exc.tau_m`).
//! Unknown keys and type mismatches are rejected with the offending path.

use std::path::Path;

use memseq_core::device::{DeviceMode, DeviceParams, Schedule};
use memseq_core::engine::{SimConfig, Stuck};
use memseq_core::experiments::{FailureSpec, SequenceProgram, SweepAxis, SweepSpec, TrainingSpec};
use memseq_core::network::{compute_dap_threshold, excitatory_params, NetworkParams};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

/// Value of `network.exc.dendrite.theta_dap` before it is derived.
const PLACEHOLDER_THETA_DAP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub master_seed: u64,
    /// number of network realizations, ids `0..realizations`
    pub realizations: u64,
    /// worker threads; 0 uses every core
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { master_seed: 1, realizations: 5, threads: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    /// ms
    pub dt: f64,
    pub skip_quiescent: bool,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        Self { dt: d.dt, skip_quiescent: d.skip_quiescent }
    }
}

/// Device parameters. Unset fields take the defaults of `mode`.
/// `beta` sets `lambda_minus = lambda_plus / beta`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub mode: DeviceMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_plus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_minus: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g0_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_w: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p0_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_p: Option<f64>,
}

impl DeviceSection {
    pub fn params(&self) -> Result<DeviceParams, CliError> {
        let mut d = DeviceParams::for_mode(self.mode);
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut d.lambda_plus, self.lambda_plus);
        set(&mut d.lambda_minus, self.lambda_minus);
        set(&mut d.mu_plus, self.mu_plus);
        set(&mut d.mu_minus, self.mu_minus);
        set(&mut d.g_max, self.g_max);
        set(&mut d.g0_min, self.g0_min);
        set(&mut d.g0_max, self.g0_max);
        set(&mut d.sigma_w, self.sigma_w);
        set(&mut d.sigma_r, self.sigma_r);
        set(&mut d.p_max, self.p_max);
        set(&mut d.p0_min, self.p0_min);
        set(&mut d.p0_max, self.p0_max);
        set(&mut d.theta_p, self.theta_p);
        if let Some(beta) = self.beta {
            if self.lambda_minus.is_some() {
                return Err(CliError::Config("device.beta and device.lambda_minus are mutually exclusive".into()));
            }
            if !(beta > 0.0) {
                return Err(CliError::Config(format!("device.beta: must be positive, got {beta}")));
            }
            d.lambda_minus = d.lambda_plus / beta;
        } else if self.lambda_plus.is_some() && self.lambda_minus.is_none() {
            // keep the mode's depression/potentiation ratio
            let base = DeviceParams::for_mode(self.mode);
            d.lambda_minus = d.lambda_plus * base.lambda_minus / base.lambda_plus;
        }
        Ok(d)
    }

    /// Section with every field set explicitly.
    fn resolved(&self) -> Result<Self, CliError> {
        let d = self.params()?;
        Ok(Self {
            mode: d.mode,
            beta: None,
            lambda_plus: Some(d.lambda_plus),
            lambda_minus: Some(d.lambda_minus),
            mu_plus: Some(d.mu_plus),
            mu_minus: Some(d.mu_minus),
            g_max: Some(d.g_max),
            g0_min: Some(d.g0_min),
            g0_max: Some(d.g0_max),
            sigma_w: Some(d.sigma_w),
            sigma_r: Some(d.sigma_r),
            p_max: Some(d.p_max),
            p0_min: Some(d.p0_min),
            p0_max: Some(d.p0_max),
            theta_p: Some(d.theta_p),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentSection {
    /// predictive neurons needed for a subpopulation to count as predicted
    pub rho_pred: usize,
}

impl Default for AssessmentSection {
    fn default() -> Self {
        Self { rho_pred: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSection {
    pub schedule: Schedule,
    pub pulses: usize,
}

impl Default for TraceSection {
    fn default() -> Self {
        Self { schedule: Schedule::SetReset, pulses: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureSection {
    /// every fraction is combined with every polarity
    pub fractions: Vec<f64>,
    pub polarities: Vec<Stuck>,
    pub inject_episode: usize,
}

impl Default for FailureSection {
    fn default() -> Self {
        Self { fractions: vec![0.05, 0.10, 0.20], polarities: vec![Stuck::Off, Stuck::On], inject_episode: 150 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<SweepAxis>,
    pub realizations: u64,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            axes: vec![
                SweepAxis { name: "on_off_ratio".into(), values: vec![5.0, 15.0, 30.0] },
                SweepAxis { name: "lambda_plus".into(), values: vec![0.06, 0.30] },
            ],
            realizations: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// write `spikes_r<k>.csv` for every realization
    pub spikes: bool,
    /// write `daps_r<k>.csv` for every realization
    pub daps: bool,
    /// write `connectivity_r<k>.csv` after training
    pub connectivity: bool,
    /// write `snapshot_r<k>.bin` after training
    pub snapshot: bool,
    /// write `probe_r<k>.csv` with the state trace of this excitatory neuron
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_neuron: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub sim: SimSection,
    pub network: NetworkParams,
    pub device: DeviceSection,
    pub program: SequenceProgram,
    pub assessment: AssessmentSection,
    pub trace: TraceSection,
    pub failure: FailureSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

/// Parses `key=value` into a dotted path and a TOML value. Values that do
/// not parse as TOML are taken as bare strings.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{s}` is not of the form key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("override `{s}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.split('.').map(String::from).collect(), value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = table;
    for (i, seg) in parents.iter().enumerate() {
        let entry = cur.entry(seg.clone()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            CliError::Config(format!("`{}` is not a table", path[..=i].join(".")))
        })?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

/// Recursively overlays `top` onto `base`. Tables merge key by key, any
/// other value replaces.
fn merge(base: &mut Table, top: Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl Config {
    /// Layers `file` and `overrides` over the defaults.
    pub fn layered(file: Option<Table>, overrides: &[String]) -> Result<Self, CliError> {
        let mut user = file.unwrap_or_default();
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut user, &path, value)?;
        }
        let mut tree = match Value::try_from(Config::default()) {
            Ok(Value::Table(t)) => t,
            _ => unreachable!("the default configuration serializes to a table"),
        };
        merge(&mut tree, user);
        let cfg: Config = serde_path_to_error::deserialize(Value::Table(tree)).map_err(|e| {
            let path = e.path().to_string();
            // toml appends its own location lines; the path already says where
            let msg = e.into_inner().to_string();
            let msg = msg.lines().next().unwrap_or_default().trim().to_string();
            CliError::Config(format!("{path}: {msg}"))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let table: Table = toml::from_str(text).map_err(|e| CliError::Config(format!("invalid TOML: {e}")))?;
        Self::layered(Some(table), overrides)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                Self::from_toml_str(&text, overrides)
            }
            None => Self::layered(None, overrides),
        }
    }

    /// Every module-level invariant, so an accepted configuration always runs.
    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |section: &str, e: memseq_core::Error| CliError::Config(format!("{section}: {e}"));
        self.device.params()?;
        if let Some(d) = &self.network.exc.dendrite {
            let derived = self.dap_threshold()?;
            if d.theta_dap != PLACEHOLDER_THETA_DAP && d.theta_dap != derived {
                return Err(CliError::Config(format!(
                    "network.exc.dendrite.theta_dap: derived from the device and network ({derived}); \
                     scale it with network.theta_dap_scale"
                )));
            }
        }
        self.training_spec().validate().map_err(|e| cfg("configuration", e))?;
        if !(self.sim.dt > 0.0) {
            return Err(CliError::Config(format!("sim.dt: must be positive, got {}", self.sim.dt)));
        }
        if self.run.realizations == 0 {
            return Err(CliError::Config("run.realizations: must be at least 1".into()));
        }
        if self.trace.pulses == 0 {
            return Err(CliError::Config("trace.pulses: must be at least 1".into()));
        }
        for f in self.failure_specs() {
            f.validate().map_err(|e| cfg("failure", e))?;
        }
        self.sweep_spec().validate().map_err(|e| cfg("sweep", e))?;
        if let Some(n) = self.output.probe_neuron {
            if n as usize >= self.network.n_e {
                return Err(CliError::Config(format!("output.probe_neuron: {n} is not an excitatory neuron")));
            }
        }
        Ok(())
    }

    /// Checks that only matter for the failure experiment.
    pub fn validate_failure(&self) -> Result<(), CliError> {
        if self.failure.inject_episode > self.program.episodes {
            return Err(CliError::Config(format!(
                "failure.inject_episode: {} is after the last episode ({})",
                self.failure.inject_episode, self.program.episodes
            )));
        }
        Ok(())
    }

    /// Configuration with every mode-dependent default written out.
    /// Resolving twice gives the same result.
    pub fn resolved(&self) -> Result<Self, CliError> {
        let device = self.device.resolved()?;
        let mut network = self.network.clone();
        network.exc = excitatory_params(&network, &device.params()?).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Self { device, network, ..self.clone() })
    }

    pub fn device_params(&self) -> DeviceParams {
        self.device.params().expect("validated device section")
    }

    pub fn training_spec(&self) -> TrainingSpec {
        TrainingSpec {
            net: self.network.clone(),
            device: self.device.params().unwrap_or_else(|_| DeviceParams::for_mode(self.device.mode)),
            sim: SimConfig {
                dt: self.sim.dt,
                master_seed: self.run.master_seed,
                realization: 0,
                skip_quiescent: self.sim.skip_quiescent,
            },
            program: self.program.clone(),
            rho_pred: self.assessment.rho_pred,
        }
    }

    pub fn realizations(&self) -> Vec<u64> {
        (0..self.run.realizations).collect()
    }

    pub fn failure_specs(&self) -> Vec<FailureSpec> {
        self.failure
            .polarities
            .iter()
            .flat_map(|&stuck| {
                self.failure.fractions.iter().map(move |&fraction| FailureSpec {
                    fraction,
                    stuck,
                    inject_episode: self.failure.inject_episode,
                })
            })
            .collect()
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec { axes: self.sweep.axes.clone(), realizations: (0..self.sweep.realizations).collect() }
    }

    /// dAP threshold implied by the network and device parameters, µA.
    pub fn dap_threshold(&self) -> Result<f64, CliError> {
        compute_dap_threshold(&self.network, &self.device.params()?).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }
}
