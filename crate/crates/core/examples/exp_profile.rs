use std::time::Instant;
use vfi_core::config::TrainConfig;
use vfi_core::data::{synth_triplet, FlowProvider};
use vfi_core::graph::Graph;
use vfi_core::pipeline::Pipeline;
use vfi_core::rng::Rng;

fn main() {
    let cfg = TrainConfig::toy();
    let pipeline = Pipeline::new(cfg.model.clone(), 1).unwrap();
    let trip = synth_triplet(5, (64, 64), 0.5, &cfg.motion).unwrap();
    let (f01, f10) = FlowProvider::SyntheticGroundTruth.provide(&trip).unwrap();

    let n = 6;
    let t0 = Instant::now();
    for _ in 0..n {
        let mut g = Graph::new();
        let _ = pipeline.blend_tape(&mut g, &trip.frame0, &trip.frame1, 0.5, &f01, &f10, true, Some(&mut Rng::from_seed(2))).unwrap();
    }
    println!("blend_tape fwd: {:.0} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..n {
        let mut g = Graph::new();
        let mut rng = Rng::from_seed(2);
        let (_, _) = pipeline.total_loss_tape(&mut g, &trip, &f01, &f10, 0.2, &mut rng).unwrap();
    }
    println!("total_loss fwd: {:.0} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);

    let t0 = Instant::now();
    for _ in 0..n {
        let mut g = Graph::new();
        let mut rng = Rng::from_seed(2);
        let (loss, _) = pipeline.total_loss_tape(&mut g, &trip, &f01, &f10, 0.2, &mut rng).unwrap();
        let grads = g.backward(loss);
        let _ = g.param_gradients(&grads, pipeline.store.len());
    }
    println!("total_loss fwd+bwd: {:.0} ms", t0.elapsed().as_secs_f64() / n as f64 * 1e3);
}
