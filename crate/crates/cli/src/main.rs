use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memseq_cli::{execute, output_dir, show_config, CliError, Command, Config, RunManifest};

#[derive(Parser)]
#[command(name = "memseq", version, about = "Sequence learning in spiking networks with ReRAM synapses")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML configuration file
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set device.g_max=150` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Reuse the configuration stored in a run manifest
    #[arg(long, conflicts_with_all = ["config", "overrides"])]
    from_manifest: Option<PathBuf>,
    /// Device mode (analog | binary)
    #[arg(long)]
    mode: Option<String>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $MEMSEQ_OUT or ./memseq-out]
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Drive a single device through a pulse schedule
    DeviceTrace {
        #[command(flatten)]
        common: Common,
        /// set-reset | interleaved
        #[arg(long)]
        schedule: Option<String>,
        /// pulses per phase (set-reset) or SET/RESET pairs (interleaved)
        #[arg(long)]
        pulses: Option<usize>,
    },
    /// Train on the sequence set and record the prediction error
    Train {
        #[command(flatten)]
        common: Common,
        /// number of independent realizations
        #[arg(long)]
        realizations: Option<u64>,
        /// training episodes
        #[arg(long)]
        episodes: Option<usize>,
        /// worker threads (0 = all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the parameter grid of the `[sweep]` section
    Sweep {
        #[command(flatten)]
        common: Common,
        /// realizations per grid cell
        #[arg(long)]
        realizations: Option<u64>,
        /// training episodes
        #[arg(long)]
        episodes: Option<usize>,
        /// worker threads (0 = all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Inject stuck-at device failures during training
    Failure {
        #[command(flatten)]
        common: Common,
        /// number of independent realizations
        #[arg(long)]
        realizations: Option<u64>,
        /// training episodes
        #[arg(long)]
        episodes: Option<usize>,
        /// worker threads (0 = all cores)
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print the fully resolved configuration
    ShowConfig {
        #[command(flatten)]
        common: Common,
    },
}

fn push<T: ToString>(sets: &mut Vec<String>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        sets.push(format!("{key}={}", v.to_string()));
    }
}

/// Builds the configuration from the manifest or from defaults, file and
/// overrides. Flag shortcuts are applied as overrides after `--set`.
fn load(common: &Common, command: Option<Command>, shortcuts: Vec<String>) -> Result<Config, CliError> {
    if let Some(path) = &common.from_manifest {
        let m = RunManifest::load(path)?;
        if let Some(c) = command {
            if m.command != c.name() {
                return Err(CliError::Config(format!(
                    "manifest was written by `{}`, not `{}`",
                    m.command,
                    c.name()
                )));
            }
        }
        let has_shortcuts = !shortcuts.is_empty() || common.mode.is_some() || common.seed.is_some();
        if has_shortcuts {
            return Err(CliError::Config("--from-manifest cannot be combined with parameter flags".into()));
        }
        return Ok(m.config);
    }
    let mut sets = common.overrides.clone();
    push(&mut sets, "device.mode", common.mode.as_ref().map(|m| format!("\"{m}\"")));
    push(&mut sets, "run.master_seed", common.seed);
    sets.extend(shortcuts);
    Config::load(common.config.as_deref(), &sets)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, command, shortcuts) = match cli.command {
        Cmd::DeviceTrace { common, schedule, pulses } => {
            let mut s = Vec::new();
            push(&mut s, "trace.schedule", schedule.map(|v| format!("\"{v}\"")));
            push(&mut s, "trace.pulses", pulses);
            (common, Some(Command::DeviceTrace), s)
        }
        Cmd::Train { common, realizations, episodes, threads } => {
            let mut s = Vec::new();
            push(&mut s, "run.realizations", realizations);
            push(&mut s, "program.episodes", episodes);
            push(&mut s, "run.threads", threads);
            (common, Some(Command::Train), s)
        }
        Cmd::Sweep { common, realizations, episodes, threads } => {
            let mut s = Vec::new();
            push(&mut s, "sweep.realizations", realizations);
            push(&mut s, "program.episodes", episodes);
            push(&mut s, "run.threads", threads);
            (common, Some(Command::Sweep), s)
        }
        Cmd::Failure { common, realizations, episodes, threads } => {
            let mut s = Vec::new();
            push(&mut s, "run.realizations", realizations);
            push(&mut s, "program.episodes", episodes);
            push(&mut s, "run.threads", threads);
            (common, Some(Command::Failure), s)
        }
        Cmd::ShowConfig { common } => (common, None, Vec::new()),
    };
    let cfg = load(&common, command, shortcuts)?;
    match command {
        None => {
            print!("{}", show_config(&cfg)?);
            Ok(())
        }
        Some(c) => {
            let out = output_dir(common.out.as_deref());
            let m = execute(c, &cfg, &out)?;
            eprintln!("{}: wrote {} files to {} in {:.1} s", c.name(), m.outputs.len() + 1, out.display(), m.duration_s);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("memseq: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
