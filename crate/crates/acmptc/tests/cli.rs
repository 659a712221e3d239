//! End-to-end tests of the command-line surface: exit codes, output file
//! shapes, seed resolution, and checkpoint round-trips.

use std::fs;
use std::path::Path;

use acmptc::checkpoint::Checkpoint;
use acmptc::cli::{cli_main, EXIT_OK, EXIT_VALIDATION};

fn run(args: &[&str]) -> i32 {
    cli_main(std::iter::once("acmptc").chain(args.iter().copied()))
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn data_rows(path: &Path) -> usize {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("t,") && !l.trim().is_empty())
        .count()
}

#[test]
fn simulate_horizon_one_emits_one_row_per_stream() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[run]\nhorizon = 1\n");
    let out = dir.path().join("out");
    let code = run(&["simulate", "--config", &config, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    // default scenario has 3 streams
    assert_eq!(data_rows(&out.join("metrics.csv")), 3);
    assert!(out.join("summary.toml").exists());
}

#[test]
fn invalid_config_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[dynamics]\nn_paths = 0\n");
    let out = dir.path().join("out");
    let code = run(&["simulate", "--config", &config, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_VALIDATION);
    let config = write_config(dir.path(), "[dynamics]\nmystery_knob = 3\n");
    let code = run(&["simulate", "--config", &config, "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_VALIDATION);
}

#[test]
fn unknown_subcommand_and_bad_flags_exit_one() {
    assert_eq!(run(&["transmogrify"]), EXIT_VALIDATION);
    assert_eq!(run(&["simulate", "--config"]), EXIT_VALIDATION);
    assert_eq!(run(&[]), EXIT_VALIDATION);
}

#[test]
fn gradcheck_passes_on_fresh_seed() {
    assert_eq!(run(&["gradcheck", "--params", "400"]), EXIT_OK);
}

#[test]
fn explain_config_reports_provenance_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[dynamics]\nn_paths = 4\n");
    let out = dir.path().join("out");
    let code = run(&[
        "simulate",
        "--config",
        &config,
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
        "--explain-config",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(!out.exists(), "--explain-config must not run the simulation");
}

#[test]
fn env_seed_is_the_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[run]\nhorizon = 20\n");
    let out_env = dir.path().join("env");
    let out_explicit = dir.path().join("explicit");

    std::env::set_var("ACMPTC_SEED", "99");
    let code = run(&["simulate", "--config", &config, "--out", out_env.to_str().unwrap()]);
    std::env::remove_var("ACMPTC_SEED");
    assert_eq!(code, EXIT_OK);

    let code = run(&[
        "simulate",
        "--config",
        &config,
        "--seed",
        "99",
        "--out",
        out_explicit.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        fs::read(out_env.join("metrics.csv")).unwrap(),
        fs::read(out_explicit.join("metrics.csv")).unwrap()
    );
}

#[test]
fn train_writes_checkpoints_that_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[run]\nhorizon = 20\n[agent]\nepisodes = 2\nhorizon = 10\n[dynamics]\nn_paths = 2\n",
    );
    let out = dir.path().join("runs");
    let code = run(&["train", "--config", &config, "--seeds", "0..2", "--out", out.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    for seed in 0..2 {
        let checkpoint_path = out.join(format!("checkpoint_seed{seed}.json"));
        let rewards_path = out.join(format!("rewards_seed{seed}.csv"));
        assert_eq!(data_rows(&rewards_path), 3, "header + 2 episodes expected");
        let bytes_before = fs::read(&checkpoint_path).unwrap();
        let checkpoint = Checkpoint::load(&checkpoint_path).unwrap();
        checkpoint.save(&checkpoint_path).unwrap();
        assert_eq!(fs::read(&checkpoint_path).unwrap(), bytes_before);
        assert_eq!(checkpoint.agents.len(), 3);
    }
}

#[test]
fn simulate_can_replay_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let train_config = write_config(
        dir.path(),
        "[run]\nhorizon = 20\n[agent]\nepisodes = 2\nhorizon = 10\n[dynamics]\nn_paths = 2\n",
    );
    let out = dir.path().join("runs");
    assert_eq!(
        run(&["train", "--config", &train_config, "--seeds", "3", "--out", out.to_str().unwrap()]),
        EXIT_OK
    );
    let checkpoint = out.join("checkpoint_seed3.json");
    let body = format!(
        "[run]\nhorizon = 20\nscheduler = \"acmptc_drl\"\ncheckpoint_path = '{}'\n[dynamics]\nn_paths = 2\n",
        checkpoint.display()
    );
    let sim_config_path = dir.path().join("replay.toml");
    fs::write(&sim_config_path, body).unwrap();
    let sim_out = dir.path().join("replay");
    let code = run(&[
        "simulate",
        "--config",
        sim_config_path.to_str().unwrap(),
        "--seed",
        "4",
        "--out",
        sim_out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(data_rows(&sim_out.join("metrics.csv")), 60);
}

#[test]
fn compare_and_export_plots_produce_series() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[run]\nhorizon = 15\n");
    let out = dir.path().join("cmp");
    let code = run(&[
        "compare",
        "--config",
        &config,
        "--schedulers",
        "tcp,mptcp,acmptc",
        "--seeds",
        "0..2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.join("summary.toml").exists());
    assert!(out.join("overlay.csv").exists());
    for scheduler in ["tcp", "mptcp", "acmptc"] {
        for seed in 0..2 {
            assert!(out.join(format!("metrics_{scheduler}_seed{seed}.csv")).exists());
        }
    }
    let summary = fs::read_to_string(out.join("summary.toml")).unwrap();
    assert!(summary.contains("[scheduler.tcp]"));
    assert!(summary.contains("trajectories_paired = true"));

    let plots = dir.path().join("plots");
    let code = run(&["export-plots", "--in", out.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let overlay = fs::read_to_string(plots.join("throughput_over_time.csv")).unwrap();
    for scheduler in ["tcp", "mptcp", "acmptc"] {
        assert!(overlay.contains(&format!("{scheduler}_seed0,")), "missing series for {scheduler}");
    }
    assert_eq!(run(&["export-plots", "--in", plots.join("void").to_str().unwrap(), "--out", "/tmp/x"]), 2);
}

#[test]
fn bad_seed_ranges_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "");
    for bad in ["5..5", "x", "3..two"] {
        let code = run(&["train", "--config", &config, "--seeds", bad, "--out", "/tmp/never"]);
        assert_eq!(code, EXIT_VALIDATION, "seed spec `{bad}`");
    }
}
