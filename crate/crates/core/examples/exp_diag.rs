use vfi_core::checkpoint::load_checkpoint;
use vfi_core::data::{synth_triplet, FlowProvider};
use vfi_core::graph::Graph;
use vfi_core::rng::Rng;
use vfi_core::tensor::Tensor;

fn main() {
    let (cfg, pipeline, _) = load_checkpoint(std::env::temp_dir().join("vfi_exp/exp.ckpt")).unwrap();
    let provider = FlowProvider::SyntheticGroundTruth;
    let mut nll_true = 0.0;
    let mut nll_shuf = 0.0;
    let n = 8;
    for i in 0..n {
        let trip = synth_triplet(999_000 + i, (64, 64), 0.5, &cfg.motion).unwrap();
        let other = synth_triplet(555_000 + i, (64, 64), 0.5, &cfg.motion).unwrap();
        let (f01, f10) = provider.provide(&trip).unwrap();
        let (o01, o10) = provider.provide(&other).unwrap();
        // conds from the true pair vs. from an unrelated pair
        for (which, (fr0, fr1, g01, g10)) in [
            ("true", (&trip.frame0, &trip.frame1, &f01, &f10)),
            ("shuf", (&other.frame0, &other.frame1, &o01, &o10)),
        ] {
            let mut g = Graph::new();
            let (_, conds, _) = pipeline.blend_tape(&mut g, fr0, fr1, 0.5, g01, g10, false, None).unwrap();
            let x = g.constant(trip.target.tensor().map(|v| v - 0.5));
            let (nll, _, _) = pipeline.generator.nll_tape(&mut g, &pipeline.store, x, &conds).unwrap();
            let v = g.value(nll).scalar_value();
            if which == "true" { nll_true += v } else { nll_shuf += v }
        }
    }
    println!("mean nll(target | true cond)     = {:.1} ({:.3} nats/dim)", nll_true / n as f64, nll_true / n as f64 / 12288.0);
    println!("mean nll(target | shuffled cond) = {:.1} ({:.3} nats/dim)", nll_shuf / n as f64, nll_shuf / n as f64 / 12288.0);

    // How much does decode(z, cond) move when cond changes?
    let trip = synth_triplet(999_100, (64, 64), 0.5, &cfg.motion).unwrap();
    let other = synth_triplet(555_100, (64, 64), 0.5, &cfg.motion).unwrap();
    let (f01, f10) = provider.provide(&trip).unwrap();
    let (o01, o10) = provider.provide(&other).unwrap();
    let mut rng = Rng::from_seed(5);
    let a = pipeline.interpolate(&trip.frame0, &trip.frame1, 0.5, &f01, &f10, 0.0, &mut rng).unwrap();
    let mut rng = Rng::from_seed(5);
    let b = pipeline.interpolate(&other.frame0, &other.frame1, 0.5, &o01, &o10, 0.0, &mut rng).unwrap();
    println!("decode(0|condA) vs decode(0|condB): mean abs diff = {:.4}", {
        let d: f64 = a.tensor().data().iter().zip(b.tensor().data()).map(|(x, y)| (x - y).abs()).sum();
        d / a.tensor().numel() as f64
    });
    println!("target dynamic range check: mean abs(target - 0.5) = {:.4}", {
        let d: f64 = trip.target.tensor().data().iter().map(|v| (v - 0.5).abs()).sum();
        d / trip.target.tensor().numel() as f64
    });
}
