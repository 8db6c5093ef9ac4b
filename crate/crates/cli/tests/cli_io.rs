//! End-to-end CLI behavior: exit codes, determinism, manifests, file
//! formats. Each test drives the compiled `vfi` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use vfi_core::checkpoint::save_checkpoint;
use vfi_core::config::TrainConfig;
use vfi_core::data::{write_triplet_dir, MotionConfig};
use vfi_core::pipeline::Pipeline;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_vfi")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .env_remove("VFI_CONFIG")
        .output()
        .expect("binary runs")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("vfi_cli_tests").join(name);
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Small model whose required divisor is 16, so 32x32 frames work.
fn micro_cfg(out_dir: &Path) -> TrainConfig {
    let mut cfg = TrainConfig::toy();
    cfg.model.levels = 2;
    cfg.model.channel_plan = vec![4, 6];
    cfg.model.flow_blocks = 2;
    cfg.model.flow_steps = 1;
    cfg.model.cond_channels = 4;
    cfg.model.coupling_hidden = 8;
    cfg.model.vnet_hidden = 4;
    cfg.model.pam_hidden = 4;
    cfg.model.adm_channels = 4;
    cfg.model.se_hidden = 4;
    cfg.model.featnet_channels = 4;
    cfg.patch = 32;
    cfg.batch = 2;
    cfg.iterations = 2;
    cfg.dataset_size = 4;
    cfg.checkpoint_every = 0;
    cfg.log_every = 1;
    cfg.out_dir = out_dir.to_path_buf();
    cfg
}

fn write_micro_checkpoint(dir: &Path) -> PathBuf {
    let cfg = micro_cfg(dir);
    let pipeline = Pipeline::new(cfg.model.clone(), cfg.seed).unwrap();
    let path = dir.join("model.ckpt");
    save_checkpoint(&path, &cfg, &pipeline, None).unwrap();
    path
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["interpolate"]).status.code(), Some(1)); // missing flags
    assert_eq!(
        run(&["metrics", "--a", "x.png", "--b", "y.png", "--bogus", "1"]).status.code(),
        Some(1)
    );
    assert_eq!(run(&["help"]).status.code(), Some(0));
}

#[test]
fn metrics_command_reports_values() {
    let dir = tmp("metrics");
    let trip = write_triplet_dir(&dir, 3, (32, 32), 0.5, &MotionConfig::toy()).unwrap();
    drop(trip);
    let out = run(&[
        "metrics",
        "--a",
        dir.join("frame0.png").to_str().unwrap(),
        "--b",
        dir.join("frame1.png").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("psnr_db = "), "{stdout}");
    assert!(stdout.contains("ssim = "), "{stdout}");

    // Identical inputs: +inf sentinel and ssim 1.
    let out = run(&[
        "metrics",
        "--a",
        dir.join("frame0.png").to_str().unwrap(),
        "--b",
        dir.join("frame0.png").to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("psnr_db = inf"), "{stdout}");
    assert!(stdout.contains("ssim = 1"), "{stdout}");

    // Missing file is a data error.
    assert_eq!(
        run(&["metrics", "--a", "nope.png", "--b", "nope.png"]).status.code(),
        Some(2)
    );
}

#[test]
fn interpolate_synthetic_tag_and_zero_tau_determinism() {
    let dir = tmp("interp");
    let ckpt = write_micro_checkpoint(&dir);
    write_triplet_dir(dir.join("pair"), 11, (32, 32), 0.5, &MotionConfig::toy()).unwrap();
    let out_a = dir.join("out_a.png");
    let out_b = dir.join("out_b.png");
    for (out, seed) in [(&out_a, "7"), (&out_b, "9")] {
        let st = run(&[
            "interpolate",
            "--checkpoint",
            ckpt.to_str().unwrap(),
            "--frame0",
            dir.join("pair/frame0.png").to_str().unwrap(),
            "--frame1",
            dir.join("pair/frame1.png").to_str().unwrap(),
            "--t",
            "0.5",
            "--tau",
            "0",
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    }
    // tau = 0 is deterministic across seeds: byte-identical outputs.
    assert_eq!(
        std::fs::read(&out_a).unwrap(),
        std::fs::read(&out_b).unwrap()
    );
    // A manifest sits next to the output and re-running its argv reproduces
    // the bytes exactly.
    let manifest_path = dir.join("out_a.png.manifest");
    let manifest = std::fs::read_to_string(&manifest_path).unwrap();
    assert!(manifest.contains("command = interpolate"));
    let argv_line = manifest
        .lines()
        .find(|l| l.starts_with("argv = "))
        .unwrap()
        .trim_start_matches("argv = ")
        .to_string();
    let parts: Vec<String> = argv_line.split_whitespace().map(String::from).collect();
    let before = std::fs::read(&out_a).unwrap();
    std::fs::remove_file(&out_a).unwrap();
    let st = Command::new(&parts[0]).args(&parts[1..]).output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert_eq!(std::fs::read(&out_a).unwrap(), before);
}

#[test]
fn interpolate_requires_flows_for_untagged_frames() {
    let dir = tmp("interp_untagged");
    let ckpt = write_micro_checkpoint(&dir);
    write_triplet_dir(dir.join("pair"), 12, (32, 32), 0.5, &MotionConfig::toy()).unwrap();
    // Remove the sidecar tag: now the frames are "real".
    std::fs::remove_file(dir.join("pair/synthetic.txt")).unwrap();
    let st = run(&[
        "interpolate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame0",
        dir.join("pair/frame0.png").to_str().unwrap(),
        "--frame1",
        dir.join("pair/frame1.png").to_str().unwrap(),
        "--out",
        dir.join("out.png").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("flow"), "{err}");

    // Explicit flow files bring it back.
    let st = run(&[
        "interpolate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame0",
        dir.join("pair/frame0.png").to_str().unwrap(),
        "--frame1",
        dir.join("pair/frame1.png").to_str().unwrap(),
        "--flow01",
        dir.join("pair/flow01.flo").to_str().unwrap(),
        "--flow10",
        dir.join("pair/flow10.flo").to_str().unwrap(),
        "--out",
        dir.join("out.png").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
}

#[test]
fn interpolate_rejects_non_dyadic_frames_with_actionable_message() {
    let dir = tmp("interp_dims");
    let ckpt = write_micro_checkpoint(&dir);
    // 24x24 is not divisible by 16.
    write_triplet_dir(dir.join("pair"), 13, (24, 24), 0.5, &MotionConfig::toy()).unwrap();
    let st = run(&[
        "interpolate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame0",
        dir.join("pair/frame0.png").to_str().unwrap(),
        "--frame1",
        dir.join("pair/frame1.png").to_str().unwrap(),
        "--out",
        dir.join("out.png").to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(2));
    let err = String::from_utf8_lossy(&st.stderr);
    assert!(err.contains("divisible by 16"), "{err}");
}

#[test]
fn train_config_errors() {
    // Missing config file names the path.
    let st = run(&["train", "--config", "/definitely/not/here.cfg"]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("/definitely/not/here.cfg"));

    // Invalid keys listed by name.
    let dir = tmp("train_badcfg");
    let cfg_path = dir.join("bad.cfg");
    std::fs::write(&cfg_path, "train.batch = 2\nnot.a.key = 5\n").unwrap();
    let st = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&st.stderr).contains("not.a.key"));

    // Missing --config without the environment variable is a usage error.
    assert_eq!(run(&["train"]).status.code(), Some(1));
}

#[test]
fn train_runs_and_is_deterministic() {
    let dir = tmp("train_run");
    let out_run = dir.join("run");
    let mut cfg = micro_cfg(&out_run);
    cfg.checkpoint_every = 2;
    let cfg_path = dir.join("micro.cfg");
    std::fs::write(&cfg_path, cfg.to_text()).unwrap();

    // Via environment variable instead of --config.
    let st = Command::new(bin())
        .args(["train"])
        .env("VFI_CONFIG", cfg_path.to_str().unwrap())
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let ckpt = out_run.join("checkpoint_000002.ckpt");
    assert!(ckpt.exists());
    assert!(out_run.join("loss_log.csv").exists());
    assert!(out_run.join("run_manifest.txt").exists());
    assert!(out_run.join("samples/triplet_0/frame0.png").exists());
    let first = std::fs::read(&ckpt).unwrap();

    // Re-running the identical config reproduces the checkpoint bytes.
    std::fs::remove_dir_all(&out_run).unwrap();
    let st = run(&["train", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let second = std::fs::read(&ckpt).unwrap();
    assert_eq!(first, second);
}

#[test]
fn sweep_tau_csv_contract() {
    let dir = tmp("sweep");
    let ckpt = write_micro_checkpoint(&dir);
    write_triplet_dir(dir.join("pair"), 17, (32, 32), 0.5, &MotionConfig::toy()).unwrap();
    let out_dir = dir.join("sweep_out");
    let st = run(&[
        "sweep-tau",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame0",
        dir.join("pair/frame0.png").to_str().unwrap(),
        "--frame1",
        dir.join("pair/frame1.png").to_str().unwrap(),
        "--gt",
        dir.join("pair/gt.png").to_str().unwrap(),
        "--taus",
        "0,0.3",
        "--seeds",
        "1,2,3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let csv = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("tau,psnr_mean,ssim_mean,seed_std"));
    let row0: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row0[0], "0");
    // Zero temperature: identical outputs across seeds, stddev exactly 0.
    assert_eq!(row0[3], "0");
    assert!(out_dir.join("tau0_seed1.png").exists());
    assert!(out_dir.join("run_manifest.txt").exists());

    // Empty tau list is a usage error.
    let st = run(&[
        "sweep-tau",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--frame0",
        dir.join("pair/frame0.png").to_str().unwrap(),
        "--frame1",
        dir.join("pair/frame1.png").to_str().unwrap(),
        "--taus",
        "",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(st.status.code(), Some(1));
}
