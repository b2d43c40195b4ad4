use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use memseq_cli::{Config, RunManifest};
use memseq_core::device::DeviceMode;

fn memseq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memseq")).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("memseq-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn sets(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

const SMALL: &str = "\
[network]
n_e = 280
k_ee = 70
rho = 5

[program]
episodes = 8

[run]
realizations = 2
";

#[test]
fn empty_configuration_gives_the_defaults() {
    let cfg = Config::from_toml_str("", &[]).unwrap();
    assert_eq!(cfg, Config::default());
    assert_eq!(cfg.sim.dt, 0.1);
    assert_eq!(cfg.program.delta_t, 40.0);
    assert_eq!(cfg.network.n_e, 1800);
    assert_eq!(cfg.network.m, 14);
    assert_eq!(cfg.device.mode, DeviceMode::Analog);
}

#[test]
fn maximum_conductance_override_rescales_the_dap_threshold() {
    // analog, μ₊ = 1, μ₋ = 0, β = 3: λ₊(1 - x) = λ₋ gives G* = 2/3 g_max; θ = G*·γ·K/N
    let base = Config::layered(None, &[]).unwrap();
    let half = Config::layered(None, &sets(&["device.g_max=150"])).unwrap();
    let oracle = |g_max: f64| 2.0 / 3.0 * g_max * 20.0 * 450.0 / 1800.0;
    approx::assert_relative_eq!(base.dap_threshold().unwrap(), oracle(300.0), max_relative = 1e-6);
    approx::assert_relative_eq!(half.dap_threshold().unwrap(), oracle(150.0), max_relative = 1e-6);
    let binary = Config::layered(None, &sets(&["device.mode=\"binary\"", "device.g_max=150"])).unwrap();
    assert_eq!(binary.dap_threshold().unwrap(), 150.0 * 20.0 * 0.25);
}

#[test]
fn misspelled_key_is_rejected_with_its_path() {
    let err = Config::from_toml_str("[device]\ngmax = 150\n", &[]).unwrap_err().to_string();
    assert!(err.contains("device") && err.contains("gmax"), "{err}");
    let err = Config::layered(None, &sets(&["netwrk.n_e=10"])).unwrap_err().to_string();
    assert!(err.contains("netwrk"), "{err}");
}

#[test]
fn type_mismatch_names_the_key() {
    let err = Config::layered(None, &sets(&["network.k_ee=\"many\""])).unwrap_err().to_string();
    assert!(err.contains("network.k_ee"), "{err}");
}

#[test]
fn invariant_violations_are_configuration_errors() {
    for bad in ["device.lambda_plus=0", "network.k_ee=5000", "sim.dt=0", "run.realizations=0", "failure.fractions=[1.5]"] {
        let err = Config::layered(None, &sets(&[bad]));
        assert!(err.is_err(), "{bad} accepted");
        assert_eq!(err.unwrap_err().exit_code(), 2);
    }
}

#[test]
fn beta_sets_the_depression_rate() {
    let cfg = Config::layered(None, &sets(&["device.lambda_plus=0.3", "device.beta=2"])).unwrap();
    let d = cfg.device_params();
    assert_eq!(d.lambda_minus, 0.15);
    assert!(Config::layered(None, &sets(&["device.beta=2", "device.lambda_minus=0.1"])).is_err());
}

#[test]
fn file_then_overrides_take_precedence() {
    let cfg = Config::from_toml_str("[device]\ng_max = 200\nmode = \"binary\"\n", &sets(&["device.g_max=250"])).unwrap();
    assert_eq!(cfg.device_params().g_max, 250.0);
    assert_eq!(cfg.device.mode, DeviceMode::Binary);
}

#[test]
fn resolution_is_idempotent() {
    let cfg = Config::layered(None, &sets(&["device.mode=\"binary\"", "device.beta=2"])).unwrap();
    let once = cfg.resolved().unwrap();
    assert_eq!(once.resolved().unwrap(), once);
    assert_eq!(once.device_params(), cfg.device_params());
    // a resolved configuration survives a TOML round trip
    assert_eq!(Config::from_toml_str(&once.to_toml(), &[]).unwrap(), once);
}

#[test]
fn hand_set_dap_threshold_is_rejected() {
    let err = Config::layered(None, &sets(&["network.exc.dendrite.theta_dap=99"])).unwrap_err().to_string();
    assert!(err.contains("theta_dap_scale"), "{err}");
}

#[test]
fn show_config_lists_the_network_size() {
    let out = memseq(&["show-config"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("n_e = 1800"));
    assert!(text.contains("m = 14"));
    assert!(text.contains("theta_dap_uA = "));
}

#[test]
fn exit_codes_distinguish_usage_and_configuration_errors() {
    assert_eq!(memseq(&["show-config", "--set", "device.gmax=1"]).status.code(), Some(2));
    assert_eq!(memseq(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(memseq(&["train", "--config", "/nonexistent/memseq.toml"]).status.code(), Some(2));
}

#[test]
fn device_trace_writes_the_documented_header() {
    let dir = scratch("trace");
    let out = memseq(&["device-trace", "--mode", "binary", "--pulses", "5", "-o", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("device_trace.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,kind,g_uS,p");
    assert_eq!(lines.len(), 1 + 11);
    assert!(lines[1].starts_with("0,init,"));
    let _ = std::fs::remove_dir_all(dir);
}

fn read_manifest(dir: &Path) -> RunManifest {
    RunManifest::load(&dir.join("manifest.json")).unwrap()
}

#[test]
fn train_writes_outputs_and_a_reproducible_manifest() {
    let dir = scratch("train");
    let cfg = dir.join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let a = dir.join("a");
    let b = dir.join("b");
    let out = memseq(&["train", "-c", cfg.to_str().unwrap(), "--mode", "binary", "-o", a.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m = read_manifest(&a);
    assert_eq!(m.command, "train");
    assert_eq!(m.config.network.n_e, 280);
    assert!(m.config.device.lambda_plus.is_some(), "manifest stores resolved device values");
    let names: Vec<&str> = m.outputs.iter().map(|o| o.path.as_str()).collect();
    assert!(names.contains(&"training.csv"));

    let training = std::fs::read_to_string(a.join("training.csv")).unwrap();
    assert!(training.starts_with("realization,episode,error\n"));
    assert_eq!(training.lines().count(), 1 + 2 * 8);

    let manifest = a.join("manifest.json");
    let out = memseq(&["train", "--from-manifest", manifest.to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m2 = read_manifest(&b);
    assert_eq!(m2.config_hash, m.config_hash);
    assert_eq!(m2.outputs, m.outputs);
    for o in &m.outputs {
        assert_eq!(std::fs::read(a.join(&o.path)).unwrap(), std::fs::read(b.join(&o.path)).unwrap());
    }

    // the manifest belongs to `train`
    let out = memseq(&["sweep", "--from-manifest", manifest.to_str().unwrap(), "-o", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn output_directory_defaults_to_the_environment_variable() {
    let dir = scratch("env");
    let out = Command::new(env!("CARGO_BIN_EXE_memseq"))
        .args(["device-trace", "--pulses", "3"])
        .env(memseq_cli::OUT_ENV, &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.join("device_trace.csv").exists());
    assert!(dir.join("manifest.json").exists());
    let _ = std::fs::remove_dir_all(dir);
}

#[test]
fn sweep_records_invalid_cells_and_continues() {
    let dir = scratch("sweep");
    let cfg = dir.join("small.toml");
    std::fs::write(
        &cfg,
        format!("{SMALL}\n[sweep]\nrealizations = 1\naxes = [{{ name = \"sigma_w\", values = [-1.0, 0.01] }}]\n"),
    )
    .unwrap();
    let out = memseq(&["sweep", "-c", cfg.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let grid = std::fs::read_to_string(dir.join("sweep_grid.csv")).unwrap();
    let lines: Vec<&str> = grid.lines().collect();
    assert_eq!(lines[0], "axis1,axis2,median_error,median_episodes");
    assert_eq!(lines[1], "-1,,,");
    assert!(lines[2].starts_with("0.01,,"));
    let runs = std::fs::read_to_string(dir.join("sweep_runs.csv")).unwrap();
    assert!(runs.contains("sigma_w"), "{runs}");
    let _ = std::fs::remove_dir_all(dir);
}
