//! The four CLI verbs: interpolate, train, sweep-tau, metrics.

use crate::args::{Args, CliError, CliResult};
use crate::manifest::Manifest;
use std::path::{Path, PathBuf};
use vfi_core::checkpoint::load_checkpoint;
use vfi_core::config::TrainConfig;
use vfi_core::data::{SyntheticTag, SYNTHETIC_TAG_FILE};
use vfi_core::metrics;
use vfi_core::pipeline::Pipeline;
use vfi_core::pngio::{self, quantize_to_u8_grid};
use vfi_core::rng::Rng;
use vfi_core::types::{FlowField, Image};
use vfi_core::{flo, trainer};

/// Environment variable consulted for the train config path when --config is
/// absent.
pub const CONFIG_ENV: &str = "VFI_CONFIG";

fn load_frames(args: &Args) -> CliResult<(PathBuf, PathBuf, Image, Image)> {
    let p0 = PathBuf::from(args.required("frame0")?);
    let p1 = PathBuf::from(args.required("frame1")?);
    let frame0 = pngio::read_png(&p0)?;
    let frame1 = pngio::read_png(&p1)?;
    Ok((p0, p1, frame0, frame1))
}

/// Flow lookup: explicit `.flo` paths win; otherwise a synthetic sidecar tag
/// next to frame0 reproduces the exact analytic fields; otherwise the frames
/// are treated as real footage, which needs sidecar flows (there is no
/// built-in motion estimator).
fn resolve_flows(
    args: &Args,
    frame0_path: &Path,
    frame0: &Image,
) -> CliResult<(FlowField, FlowField, String)> {
    let f01 = args.opt("flow01");
    let f10 = args.opt("flow10");
    match (f01, f10) {
        (Some(a), Some(b)) => {
            let flow01 = flo::read_flow_file(&a)?;
            let flow10 = flo::read_flow_file(&b)?;
            Ok((flow01, flow10, format!("files:{a},{b}")))
        }
        (None, None) => {
            let tag_path = frame0_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(SYNTHETIC_TAG_FILE);
            if !tag_path.exists() {
                return Err(CliError::Data(format!(
                    "no --flow01/--flow10 given and no {SYNTHETIC_TAG_FILE} tag next to \
                     {}; real frames need external flow files (no built-in motion estimator)",
                    frame0_path.display()
                )));
            }
            let text = std::fs::read_to_string(&tag_path)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", tag_path.display())))?;
            let tag = SyntheticTag::from_text(&text)?;
            let rebuilt = tag.rebuild()?;
            // The tag must actually describe these frames.
            let expect = quantize_to_u8_grid(rebuilt.frame0.tensor());
            if &expect != frame0.tensor() {
                return Err(CliError::Data(format!(
                    "{} does not match the given frame0; pass --flow01/--flow10 explicitly",
                    tag_path.display()
                )));
            }
            let (f01, f10) = rebuilt.flows.expect("synthetic triplets carry flows");
            Ok((f01, f10, format!("synthetic:{}", tag_path.display())))
        }
        _ => Err(CliError::Usage(
            "--flow01 and --flow10 must be given together".into(),
        )),
    }
}

pub fn cmd_interpolate(args: &Args, argv: &[String]) -> CliResult<()> {
    let ckpt_path = args.required("checkpoint")?;
    let (p0, p1, frame0, frame1) = load_frames(args)?;
    let t: f64 = args.parse_or("t", 0.5)?;
    let seed: u64 = args.parse_or("seed", 0)?;
    let out = PathBuf::from(args.required("out")?);
    let (flow01, flow10, flow_src) = resolve_flows(args, &p0, &frame0)?;
    let tau_flag: Option<f64> = args.parse_opt("tau")?;
    args.reject_unknown()?;

    let (cfg, pipeline, _) = load_checkpoint(&ckpt_path)?;
    let tau = tau_flag.unwrap_or(cfg.model.tau);
    if tau < 0.0 {
        return Err(CliError::Usage(format!("--tau must be >= 0, got {tau}")));
    }
    let mut rng = Rng::from_seed(seed);
    let result = pipeline.interpolate(&frame0, &frame1, t, &flow01, &flow10, tau, &mut rng)?;
    pngio::write_png(&out, &result)?;

    let mut manifest = Manifest::new("interpolate", argv);
    manifest.push("checkpoint", &ckpt_path);
    manifest.push("frame0", p0.display().to_string());
    manifest.push("frame1", p1.display().to_string());
    manifest.push("flows", flow_src);
    manifest.push("t", t.to_string());
    manifest.push("tau", tau.to_string());
    manifest.push("seed", seed.to_string());
    manifest.push("out", out.display().to_string());
    manifest.write(out.with_extension("png.manifest"))?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_train(args: &Args, argv: &[String]) -> CliResult<()> {
    let config_path = match args.opt("config") {
        Some(p) => PathBuf::from(p),
        None => match std::env::var(CONFIG_ENV) {
            Ok(p) => PathBuf::from(p),
            Err(_) => {
                return Err(CliError::Usage(format!(
                    "missing --config (or {CONFIG_ENV} environment variable)"
                )))
            }
        },
    };
    let resume = args.opt("resume");
    args.reject_unknown()?;
    let text = std::fs::read_to_string(&config_path).map_err(|e| {
        CliError::Data(format!("cannot read config {}: {e}", config_path.display()))
    })?;
    let cfg = TrainConfig::from_text(&text)?;

    let (mut pipeline, state) = match &resume {
        Some(ckpt) => {
            let (_, p, s) = load_checkpoint(ckpt)?;
            (p, s)
        }
        None => (Pipeline::new(cfg.model.clone(), cfg.seed)?, None),
    };

    std::fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let mut manifest = Manifest::new("train", argv);
    manifest.push("config", config_path.display().to_string());
    manifest.push("seed", cfg.seed.to_string());
    manifest.push("iterations", cfg.iterations.to_string());
    manifest.push("out", cfg.out_dir.display().to_string());
    if let Some(r) = &resume {
        manifest.push("resume", r);
    }
    manifest.write(cfg.out_dir.join("run_manifest.txt"))?;
    // Keep the exact config alongside the run.
    std::fs::write(cfg.out_dir.join("config_used.txt"), cfg.to_text())
        .map_err(|e| CliError::Data(e.to_string()))?;

    let report = trainer::train_loop(&cfg, &mut pipeline, state)?;
    if report.halted_non_finite {
        return Err(CliError::Data(
            "training halted on a non-finite loss; last good checkpoint kept".into(),
        ));
    }
    // Demo material: a couple of held-out synthetic pairs with sidecar tags.
    for i in 0..2u64 {
        let dir = cfg.out_dir.join(format!("samples/triplet_{i}"));
        vfi_core::data::write_triplet_dir(
            &dir,
            0xdeb0 + i,
            (cfg.patch, cfg.patch),
            0.5,
            &cfg.motion,
        )?;
    }
    println!(
        "trained {} iterations; checkpoints and loss_log.csv in {}",
        report.iterations_run,
        cfg.out_dir.display()
    );
    Ok(())
}

pub fn cmd_sweep_tau(args: &Args, argv: &[String]) -> CliResult<()> {
    let ckpt_path = args.required("checkpoint")?;
    let (p0, p1, frame0, frame1) = load_frames(args)?;
    let t: f64 = args.parse_or("t", 0.5)?;
    let taus: Vec<f64> = args
        .parse_list("taus")?
        .ok_or_else(|| CliError::Usage("missing required flag --taus".into()))?;
    if taus.is_empty() {
        return Err(CliError::Usage("--taus list is empty".into()));
    }
    let seeds: Vec<u64> = args.parse_list("seeds")?.unwrap_or_else(|| vec![1, 2, 3, 4]);
    if seeds.is_empty() {
        return Err(CliError::Usage("--seeds list is empty".into()));
    }
    let gt_path = args.opt("gt");
    let out_dir = PathBuf::from(args.required("out")?);
    let (flow01, flow10, flow_src) = resolve_flows(args, &p0, &frame0)?;
    args.reject_unknown()?;

    let (_, pipeline, _) = load_checkpoint(&ckpt_path)?;
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", out_dir.display())))?;

    // Reference for the quality columns: the ground-truth frame when given,
    // otherwise the deterministic tau = 0 output.
    let reference = match &gt_path {
        Some(p) => pngio::read_png(p)?,
        None => {
            let mut rng = Rng::from_seed(seeds[0]);
            pipeline.interpolate(&frame0, &frame1, t, &flow01, &flow10, 0.0, &mut rng)?
        }
    };

    let mut csv = String::from("tau,psnr_mean,ssim_mean,seed_std\n");
    for &tau in &taus {
        if tau < 0.0 {
            return Err(CliError::Usage(format!("--taus entries must be >= 0, got {tau}")));
        }
        let mut outputs: Vec<Image> = Vec::with_capacity(seeds.len());
        for &seed in &seeds {
            let mut rng = Rng::from_seed(seed);
            let img =
                pipeline.interpolate(&frame0, &frame1, t, &flow01, &flow10, tau, &mut rng)?;
            pngio::write_png(out_dir.join(format!("tau{tau}_seed{seed}.png")), &img)?;
            outputs.push(img);
        }
        let mut psnr_sum = 0.0;
        let mut ssim_sum = 0.0;
        for img in &outputs {
            let p = metrics::psnr(img, &reference)?;
            // Identical images give the +inf sentinel; cap it for the CSV.
            psnr_sum += p.min(99.0);
            ssim_sum += metrics::ssim(img, &reference)?;
        }
        let seed_std = across_seed_std(&outputs);
        csv.push_str(&format!(
            "{},{},{},{}\n",
            tau,
            psnr_sum / outputs.len() as f64,
            ssim_sum / outputs.len() as f64,
            seed_std
        ));
    }
    std::fs::write(out_dir.join("sweep.csv"), &csv)
        .map_err(|e| CliError::Data(e.to_string()))?;

    let mut manifest = Manifest::new("sweep-tau", argv);
    manifest.push("checkpoint", &ckpt_path);
    manifest.push("frame0", p0.display().to_string());
    manifest.push("frame1", p1.display().to_string());
    manifest.push("flows", flow_src);
    manifest.push("t", t.to_string());
    manifest.push(
        "taus",
        taus.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
    );
    manifest.push(
        "seeds",
        seeds.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
    );
    if let Some(g) = &gt_path {
        manifest.push("gt", g);
    }
    manifest.push("out", out_dir.display().to_string());
    manifest.write(out_dir.join("run_manifest.txt"))?;
    println!("wrote {}", out_dir.join("sweep.csv").display());
    Ok(())
}

/// Mean over pixels and channels of the per-pixel standard deviation across
/// seeds (population convention).
fn across_seed_std(outputs: &[Image]) -> f64 {
    let n = outputs.len() as f64;
    let numel = outputs[0].tensor().numel();
    let mut acc = 0.0;
    for i in 0..numel {
        let mut s = 0.0;
        let mut sq = 0.0;
        for img in outputs {
            let v = img.tensor().data()[i];
            s += v;
            sq += v * v;
        }
        let mean = s / n;
        acc += (sq / n - mean * mean).max(0.0).sqrt();
    }
    acc / numel as f64
}

pub fn cmd_metrics(args: &Args, argv: &[String]) -> CliResult<()> {
    let pa = args.required("a")?;
    let pb = args.required("b")?;
    let out = args.opt("out");
    args.reject_unknown()?;
    let a = pngio::read_png(&pa)?;
    let b = pngio::read_png(&pb)?;
    let psnr = metrics::psnr(&a, &b)?;
    let ssim = metrics::ssim(&a, &b)?;
    println!("psnr_db = {psnr}");
    println!("ssim = {ssim}");
    if let Some(out) = out {
        let mut manifest = Manifest::new("metrics", argv);
        manifest.push("a", &pa);
        manifest.push("b", &pb);
        manifest.push("psnr_db", psnr.to_string());
        manifest.push("ssim", ssim.to_string());
        manifest.write(&out)?;
    }
    Ok(())
}

