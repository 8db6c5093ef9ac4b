use std::time::Instant;
use vfi_core::checkpoint::{load_checkpoint, save_checkpoint, TrainState};
use vfi_core::config::TrainConfig;
use vfi_core::pipeline::Pipeline;
use vfi_core::trainer;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iters: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(300);
    let batch: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(4);
    let reuse: bool = args.get(3).map(|s| s == "reuse").unwrap_or(false);
    let mut cfg = TrainConfig::toy();
    cfg.iterations = iters;
    cfg.batch = batch;
    cfg.checkpoint_every = 0;
    cfg.log_every = 50;
    cfg.out_dir = std::env::temp_dir().join("vfi_exp");
    let ckpt_path = cfg.out_dir.join("exp.ckpt");

    let mut pipeline;
    let mut resume = None;
    if reuse && ckpt_path.exists() {
        let (c2, p2, s2) = load_checkpoint(&ckpt_path).unwrap();
        println!("resumed at iteration {:?}", s2.as_ref().map(|s| s.iteration));
        pipeline = p2; resume = s2; cfg.model = c2.model;
    } else {
        std::fs::remove_dir_all(&cfg.out_dir).ok();
        pipeline = Pipeline::new(cfg.model.clone(), cfg.seed).unwrap();
    }
    let t0 = Instant::now();
    let report = trainer::train_loop(&cfg, &mut pipeline, resume).unwrap();
    println!("{} iters in {:.1}s ({:.2}s/iter); last {:?}", report.iterations_run,
        t0.elapsed().as_secs_f64(), t0.elapsed().as_secs_f64()/report.iterations_run.max(1) as f64, report.last_loss);
    let state = TrainState { iteration: cfg.iterations as u64, adam_step: 0, adam_m: vec![], adam_v: vec![] };
    let _ = state; // keep checkpoint simple: save without optimizer state
    save_checkpoint(&ckpt_path, &cfg, &pipeline, None).unwrap();

    for tau in [0.0, 0.1, 0.3, 0.5, 0.8, 1.0] {
        let t0 = Instant::now();
        let (m, b) = trainer::evaluate_heldout(&cfg, &pipeline, 30, tau).unwrap();
        println!("tau {:.1}: model {:.2} dB vs baseline {:.2} dB (margin {:+.2}) [{:.0}s]", tau, m, b, m - b, t0.elapsed().as_secs_f64());
    }
}
