use vfi_core::checkpoint::load_checkpoint;
use vfi_core::data::{synth_triplet, FlowProvider, MotionConfig};
use vfi_core::graph::Graph;
use vfi_core::normflow::{FlowConfig, Generator};
use vfi_core::optim::Adam;
use vfi_core::params::ParamStore;
use vfi_core::rng::{derive_seed, Rng};
use vfi_core::tensor::Tensor;
use vfi_core::ops;

fn main() {
    // Part 1: scale diagnostics on the trained pipeline checkpoint.
    if let Ok((cfg, pipeline, _)) = load_checkpoint(std::env::temp_dir().join("vfi_exp/exp.ckpt")) {
        let trip = synth_triplet(12345, (64, 64), 0.5, &cfg.motion).unwrap();
        let (f01, f10) = FlowProvider::SyntheticGroundTruth.provide(&trip).unwrap();
        let mut g = Graph::new();
        let (blended, conds, _) = pipeline.blend_tape(&mut g, &trip.frame0, &trip.frame1, 0.5, &f01, &f10, false, None).unwrap();
        for (l, &b) in blended.iter().enumerate() {
            let v = g.value(b);
            let std = (v.data().iter().map(|x| x * x).sum::<f64>() / v.numel() as f64 - v.mean() * v.mean()).sqrt();
            println!("blended level {l}: mean {:+.3} std {:.3}", v.mean(), std);
        }
        for (bk, &c) in conds.iter().enumerate() {
            let v = g.value(c);
            let std = (v.data().iter().map(|x| x * x).sum::<f64>() / v.numel() as f64 - v.mean() * v.mean()).sqrt();
            println!("cond block {bk}: mean {:+.3} std {:.3}", v.mean(), std);
        }
    }

    // Part 2: perfect-information probe. Condition a small generator on the
    // pooled target itself; if NLL training cannot exploit even that, the
    // pathway (not the features) is the problem.
    let mut store = ParamStore::new();
    let config = FlowConfig { blocks: 2, steps_per_block: 4, in_channels: 3, cond_channels: 8, coupling_hidden: 24 };
    let mut gen = Generator::init(&mut store, config, &[3, 3], 7).unwrap();
    let motion = MotionConfig::toy();
    let make = |i: u64| -> (Tensor, Vec<Tensor>) {
        let trip = synth_triplet(derive_seed(99, &[i]), (32, 32), 0.5, &motion).unwrap();
        let x = trip.target.tensor().map(|v| v - 0.5);
        let c1 = ops::avg_pool2_fwd(&x);       // 16x16x3
        let c2 = ops::avg_pool2_fwd(&c1);      // 8x8x3
        (x, vec![c1, c2])
    };
    // actnorm init (conditioning must be the adapter outputs)
    let adapt = |gen: &Generator, store: &ParamStore, conds: &[Tensor]| -> Vec<Tensor> {
        let mut g = Graph::new();
        let cvs: Vec<_> = conds.iter().map(|c| g.constant(c.clone())).collect();
        let out = gen.make_conds(&mut g, store, &cvs).unwrap();
        out.iter().map(|&v| g.value(v).clone()).collect()
    };
    let items: Vec<(Tensor, Vec<Tensor>)> = (0..4)
        .map(|i| { let (x, c) = make(i); (x, adapt(&gen, &store, &c)) })
        .collect();
    gen.init_actnorm(&mut store, &items).unwrap();
    let mut adam = Adam::new(&store);
    let mut rng = Rng::from_seed(1);
    for iter in 0..500usize {
        let mut grads: Vec<Option<Tensor>> = vec![None; store.len()];
        let mut nll_sum = 0.0;
        for item in 0..4 {
            let (x, conds) = make(rng.below(500) as u64);
            let noise = Tensor::uniform(x.shape(), 0.0, 1.0/255.0, &mut rng);
            let mut xn = x.clone(); xn.add_assign(&noise);
            let mut g = Graph::new();
            let xv = g.constant(xn);
            let cvs: Vec<_> = conds.iter().map(|c| g.constant(c.clone())).collect();
            let cvs2 = gen.make_conds(&mut g, &store, &cvs).unwrap();
            let (nll, _, _) = gen.nll_tape(&mut g, &store, xv, &cvs2).unwrap();
            nll_sum += g.value(nll).scalar_value();
            let gr = g.backward(nll);
            for (slot, gv) in grads.iter_mut().zip(g.param_gradients(&gr, store.len())) {
                if let Some(gv) = gv { match slot { Some(a) => a.add_assign(&gv), None => *slot = Some(gv) } }
            }
            let _ = item;
        }
        for s in grads.iter_mut().flatten() { s.scale_in_place(0.25); }
        adam.apply(&mut store, &grads, 5e-4);
        if iter % 100 == 0 { println!("iter {iter}: nll/dim {:.3}", nll_sum / 4.0 / (3.0*32.0*32.0)); }
    }
    // Decode at tau=0 and compare to targets (held out).
    let mut psnr_sum = 0.0;
    for i in 0..20u64 {
        let trip = synth_triplet(derive_seed(7777, &[i]), (32, 32), 0.5, &motion).unwrap();
        let x = trip.target.tensor().map(|v| v - 0.5);
        let c1 = ops::avg_pool2_fwd(&x);
        let c2 = ops::avg_pool2_fwd(&c1);
        let mut g = Graph::new();
        let cv = vec![g.constant(c1), g.constant(c2)];
        let conds = gen.make_conds(&mut g, &store, &cv).unwrap();
        let shapes = gen.latent_shapes(32, 32).unwrap();
        let zv: Vec<_> = shapes.iter().map(|s| g.constant(Tensor::zeros(s))).collect();
        let out = gen.decode_tape(&mut g, &store, &zv, &conds).unwrap();
        let mse: f64 = g.value(out).data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.numel() as f64;
        psnr_sum += 10.0 * (1.0 / mse).log10();
    }
    println!("perfect-info probe: tau=0 decode PSNR = {:.2} dB", psnr_sum / 20.0);
}

