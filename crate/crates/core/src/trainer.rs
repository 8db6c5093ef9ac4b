//! Optimizer loop over synthetic triplets.
//!
//! Everything stochastic derives from `(seed, purpose, iteration, item)`, so
//! runs are reproducible for any worker count and a resumed run continues
//! the exact loss sequence of an uninterrupted one. The flow provider is
//! frozen: flows enter the tape as constants.

use crate::checkpoint::{save_checkpoint, TrainState};
use crate::config::{TimeMode, TrainConfig};
use crate::data::{synth_triplet, FlowProvider, Triplet};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::optim::Adam;
use crate::pipeline::{Pipeline, LossDiagnostics};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;
use crate::types::FlowField;
use rayon::prelude::*;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

const TAG_TRIPLET: u64 = 0x7217;
const TAG_INDEX: u64 = 0x1d85;
const TAG_LOSS: u64 = 0x10c5;
const TAG_INIT: u64 = 0x1a17;

#[derive(Debug)]
pub struct TrainReport {
    pub iterations_run: usize,
    pub halted_non_finite: bool,
    pub last_checkpoint: Option<PathBuf>,
    pub last_loss: Option<LossDiagnostics>,
}

/// One dataset sample: scene index determines the scene, the time mode
/// determines `t`.
fn make_triplet(cfg: &TrainConfig, index: usize, t: f64) -> Result<Triplet> {
    synth_triplet(
        derive_seed(cfg.seed, &[TAG_TRIPLET, index as u64]),
        (cfg.patch, cfg.patch),
        t,
        &cfg.motion,
    )
}

fn sample_time(cfg: &TrainConfig, rng: &mut Rng) -> f64 {
    match cfg.time_mode {
        TimeMode::Fixed(t) => t,
        TimeMode::Uniform { lo, hi } => rng.range(lo, hi),
    }
}

/// A batch of (triplet, flows) for one iteration, fully determined by the
/// config seed and the iteration number.
pub fn iteration_batch(
    cfg: &TrainConfig,
    iteration: usize,
) -> Result<Vec<(Triplet, FlowField, FlowField)>> {
    let mut rng = Rng::from_seed(derive_seed(cfg.seed, &[TAG_INDEX, iteration as u64]));
    let provider = FlowProvider::SyntheticGroundTruth;
    let specs: Vec<(usize, f64)> = (0..cfg.batch)
        .map(|_| {
            let index = rng.below(cfg.dataset_size);
            let t = sample_time(cfg, &mut rng);
            (index, t)
        })
        .collect();
    specs
        .into_par_iter()
        .map(|(index, t)| {
            let triplet = make_triplet(cfg, index, t)?;
            let (f01, f10) = provider.provide(&triplet)?;
            Ok((triplet, f01, f10))
        })
        .collect()
}

fn mean_diag(diags: &[LossDiagnostics]) -> LossDiagnostics {
    let n = diags.len() as f64;
    LossDiagnostics {
        nll: diags.iter().map(|d| d.nll).sum::<f64>() / n,
        perceptual: diags.iter().map(|d| d.perceptual).sum::<f64>() / n,
        total: diags.iter().map(|d| d.total).sum::<f64>() / n,
    }
}

/// Runs (or resumes) training; writes the loss log and periodic checkpoints
/// into `cfg.out_dir`. On a non-finite loss the loop halts, leaving the last
/// good checkpoint in place.
pub fn train_loop(
    cfg: &TrainConfig,
    pipeline: &mut Pipeline,
    resume: Option<TrainState>,
) -> Result<TrainReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let log_path = cfg.out_dir.join("loss_log.csv");
    let (start_iter, mut adam) = match resume {
        Some(state) => {
            let (it, adam) = state.into_adam();
            (it as usize, adam)
        }
        None => (0, Adam::new(&pipeline.store)),
    };
    let mut log = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log_path)?;
    if start_iter == 0 {
        writeln!(log, "iteration,nll,perceptual,total,lr")?;
    }

    // Data-dependent actnorm initialization on the first batch.
    if pipeline.generator.actnorm_initialized.iter().any(|f| !f) {
        let batch = iteration_batch(cfg, start_iter)?;
        let mut rng = Rng::from_seed(derive_seed(cfg.seed, &[TAG_INIT]));
        let items = pipeline.actnorm_init_items(&batch, &mut rng)?;
        pipeline.generator.init_actnorm(&mut pipeline.store, &items)?;
    }

    let mut report = TrainReport {
        iterations_run: 0,
        halted_non_finite: false,
        last_checkpoint: None,
        last_loss: None,
    };

    for iter in start_iter..cfg.iterations {
        let lr = cfg.lr_at(iter);
        let batch = iteration_batch(cfg, iter)?;
        let results: Result<Vec<(LossDiagnostics, Vec<Option<Tensor>>)>> = batch
            .par_iter()
            .enumerate()
            .map(|(item, (triplet, f01, f10))| {
                let mut rng = Rng::from_seed(derive_seed(
                    cfg.seed,
                    &[TAG_LOSS, iter as u64, item as u64],
                ));
                let mut g = Graph::new();
                let (loss, diag) =
                    pipeline.total_loss_tape(&mut g, triplet, f01, f10, cfg.mu, &mut rng)?;
                let grads = g.backward(loss);
                Ok((diag, g.param_gradients(&grads, pipeline.store.len())))
            })
            .collect();
        let results = match results {
            Ok(r) => r,
            Err(Error::Numerical(msg)) => {
                writeln!(log, "# halted at iteration {iter}: {msg}")?;
                report.halted_non_finite = true;
                return Ok(report);
            }
            Err(e) => return Err(e),
        };

        // Ordered reduction: mean gradient over the batch.
        let mut grads: Vec<Option<Tensor>> = vec![None; pipeline.store.len()];
        for (_, item_grads) in &results {
            for (slot, g) in grads.iter_mut().zip(item_grads) {
                if let Some(g) = g {
                    match slot {
                        Some(acc) => acc.add_assign(g),
                        None => *slot = Some(g.clone()),
                    }
                }
            }
        }
        let scale = 1.0 / cfg.batch as f64;
        for slot in grads.iter_mut().flatten() {
            slot.scale_in_place(scale);
        }
        adam.apply(&mut pipeline.store, &grads, lr);

        let diag = mean_diag(&results.iter().map(|(d, _)| *d).collect::<Vec<_>>());
        report.last_loss = Some(diag);
        report.iterations_run += 1;
        let is_last = iter + 1 == cfg.iterations;
        if iter % cfg.log_every.max(1) == 0 || is_last {
            writeln!(
                log,
                "{},{},{},{},{}",
                iter, diag.nll, diag.perceptual, diag.total, lr
            )?;
        }
        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0) || is_last {
            let path = cfg.out_dir.join(format!("checkpoint_{:06}.ckpt", iter + 1));
            let state = TrainState::from_adam((iter + 1) as u64, &adam);
            save_checkpoint(&path, cfg, pipeline, Some(&state))?;
            report.last_checkpoint = Some(path);
        }
    }
    Ok(report)
}

/// Held-out comparison: mean PSNR of the model at temperature `tau` against
/// the equal-blend backward-warp baseline, over `count` triplets disjoint
/// from the training set (scene indices live in a separate range).
pub fn evaluate_heldout(
    cfg: &TrainConfig,
    pipeline: &Pipeline,
    count: usize,
    tau: f64,
) -> Result<(f64, f64)> {
    const HELDOUT_BASE: usize = 1 << 30;
    let provider = FlowProvider::SyntheticGroundTruth;
    let t = match cfg.time_mode {
        TimeMode::Fixed(t) => t,
        TimeMode::Uniform { .. } => 0.5,
    };
    let scores: Result<Vec<(f64, f64)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let triplet = make_triplet(cfg, HELDOUT_BASE + i, t)?;
            let (f01, f10) = provider.provide(&triplet)?;
            let mut rng = Rng::from_seed(derive_seed(cfg.seed, &[0xe7a1, i as u64]));
            let out = pipeline.interpolate(
                &triplet.frame0,
                &triplet.frame1,
                t,
                &f01,
                &f10,
                tau,
                &mut rng,
            )?;
            let base = crate::pipeline::baseline_blend(&triplet.frame0, &triplet.frame1, t, &f01, &f10)?;
            Ok((
                crate::metrics::psnr(&out, &triplet.target)?,
                crate::metrics::psnr(&base, &triplet.target)?,
            ))
        })
        .collect();
    let scores = scores?;
    let n = scores.len() as f64;
    Ok((
        scores.iter().map(|s| s.0).sum::<f64>() / n,
        scores.iter().map(|s| s.1).sum::<f64>() / n,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ModelConfig;

    fn micro_cfg(dir: &str) -> TrainConfig {
        let mut cfg = TrainConfig::toy();
        cfg.model = ModelConfig::toy();
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
        cfg.patch = 16;
        cfg.batch = 2;
        cfg.iterations = 4;
        cfg.dataset_size = 8;
        cfg.checkpoint_every = 2;
        cfg.log_every = 1;
        cfg.out_dir = std::env::temp_dir().join(dir);
        cfg
    }

    #[test]
    fn two_runs_same_seed_identical_losses() {
        let run = |dir: &str| {
            let cfg = micro_cfg(dir);
            std::fs::remove_dir_all(&cfg.out_dir).ok();
            let mut pipeline = Pipeline::new(cfg.model.clone(), cfg.seed).unwrap();
            let report = train_loop(&cfg, &mut pipeline, None).unwrap();
            (
                std::fs::read_to_string(cfg.out_dir.join("loss_log.csv")).unwrap(),
                report.last_loss.unwrap().total,
            )
        };
        let (log_a, loss_a) = run("vfi_train_det_a");
        let (log_b, loss_b) = run("vfi_train_det_b");
        assert_eq!(log_a, log_b);
        assert_eq!(loss_a, loss_b);
    }

    #[test]
    fn resume_reproduces_loss_sequence() {
        // Full run of 4 iterations vs. run to 2 + resume from checkpoint.
        let cfg_full = micro_cfg("vfi_train_resume_full");
        std::fs::remove_dir_all(&cfg_full.out_dir).ok();
        let mut p_full = Pipeline::new(cfg_full.model.clone(), cfg_full.seed).unwrap();
        train_loop(&cfg_full, &mut p_full, None).unwrap();
        let log_full = std::fs::read_to_string(cfg_full.out_dir.join("loss_log.csv")).unwrap();

        let mut cfg_half = micro_cfg("vfi_train_resume_half");
        std::fs::remove_dir_all(&cfg_half.out_dir).ok();
        cfg_half.iterations = 2;
        let mut p_half = Pipeline::new(cfg_half.model.clone(), cfg_half.seed).unwrap();
        let report = train_loop(&cfg_half, &mut p_half, None).unwrap();
        let ckpt = report.last_checkpoint.unwrap();

        let (cfg_loaded, mut p_resumed, state) =
            crate::checkpoint::load_checkpoint(&ckpt).unwrap();
        let mut cfg_resume = cfg_loaded.clone();
        cfg_resume.iterations = 4;
        cfg_resume.out_dir = std::env::temp_dir().join("vfi_train_resume_cont");
        std::fs::remove_dir_all(&cfg_resume.out_dir).ok();
        std::fs::create_dir_all(&cfg_resume.out_dir).unwrap();
        train_loop(&cfg_resume, &mut p_resumed, state).unwrap();
        let log_resumed =
            std::fs::read_to_string(cfg_resume.out_dir.join("loss_log.csv")).unwrap();

        // Rows for iterations 2 and 3 must match bit for bit.
        let tail_full: Vec<&str> = log_full
            .lines()
            .filter(|l| l.starts_with("2,") || l.starts_with("3,"))
            .collect();
        let tail_resumed: Vec<&str> = log_resumed
            .lines()
            .filter(|l| l.starts_with("2,") || l.starts_with("3,"))
            .collect();
        assert_eq!(tail_full, tail_resumed);
        assert!(!tail_full.is_empty());
    }

    #[test]
    fn loss_log_has_documented_columns() {
        let cfg = micro_cfg("vfi_train_columns");
        std::fs::remove_dir_all(&cfg.out_dir).ok();
        let mut pipeline = Pipeline::new(cfg.model.clone(), cfg.seed).unwrap();
        train_loop(&cfg, &mut pipeline, None).unwrap();
        let log = std::fs::read_to_string(cfg.out_dir.join("loss_log.csv")).unwrap();
        assert!(log.starts_with("iteration,nll,perceptual,total,lr\n"));
        assert!(log.lines().count() >= cfg.iterations);
    }
}
