//! Command-line front end for the sequence-learning simulator: layered
//! configuration, experiment subcommands and reproducible run manifests.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::time::Instant;

pub use config::Config;
pub use manifest::RunManifest;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "MEMSEQ_OUT";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// usage or configuration problem, exit code 2
    #[error("configuration error: {0}")]
    Config(String),
    /// failure while running, exit code 1
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    DeviceTrace,
    Train,
    Sweep,
    Failure,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DeviceTrace => "device-trace",
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Failure => "failure",
        }
    }
}

/// Output directory: the explicit path, else `$MEMSEQ_OUT`, else `memseq-out`.
pub fn output_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("memseq-out"))
}

/// Runs `command` with an already validated configuration, writes its
/// outputs and the manifest into `out`, and returns the manifest.
pub fn execute(command: Command, cfg: &Config, out: &Path) -> Result<RunManifest, CliError> {
    let cfg = cfg.resolved()?;
    let start = Instant::now();
    let files = match command {
        Command::DeviceTrace => commands::device_trace(&cfg)?,
        Command::Train => commands::train_cmd(&cfg)?.0,
        Command::Sweep => commands::sweep_cmd(&cfg)?,
        Command::Failure => {
            cfg.validate_failure()?;
            commands::failure_cmd(&cfg)?.0
        }
    };
    commands::write_outputs(out, &files)?;
    let manifest = RunManifest {
        command: command.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: manifest::config_hash(&cfg),
        master_seed: cfg.run.master_seed,
        outputs: files
            .iter()
            .map(|(path, bytes)| manifest::OutputFile { path: path.clone(), sha256: manifest::sha256_hex(bytes) })
            .collect(),
        config: cfg,
        duration_s: start.elapsed().as_secs_f64(),
    };
    let path = out.join(manifest::MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json())
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(manifest)
}

/// Fully resolved configuration as TOML, followed by derived quantities
/// as comments.
pub fn show_config(cfg: &Config) -> Result<String, CliError> {
    let cfg = cfg.resolved()?;
    let mut text = cfg.to_toml();
    text.push_str(&format!("\n# derived\n# theta_dap_uA = {}\n", cfg.dap_threshold()?));
    Ok(text)
}
