//! Training losses: the auxiliary perceptual term on top of the exact
//! negative log-likelihood, and the latent-matched sampling that feeds it.
//!
//! The perceptual distance runs through a fixed, randomly initialized
//! convolutional feature extractor (any frozen extractor with the same
//! interface works); its parameters are stored but never optimized.

use crate::config::LatentStats;
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::layers::LEAKY_SLOPE;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::types::{Image, LatentCode};

/// Frozen 4-layer convolutional feature extractor (strides 1, 2, 1, 2).
#[derive(Debug, Clone)]
pub struct FeatNet {
    convs: Vec<(ParamId, ParamId, usize)>, // weight, bias, stride
}

impl FeatNet {
    pub fn init(store: &mut ParamStore, channels: usize, seed: u64) -> Self {
        let mut rng = Rng::from_seed(seed);
        let plan = [(3, channels, 1), (channels, channels, 2), (channels, channels, 1), (channels, channels, 2)];
        let convs = plan
            .iter()
            .enumerate()
            .map(|(i, &(ci, co, stride))| {
                let a = 1.0 / ((9 * ci) as f64).sqrt();
                let w = store.register(
                    format!("featnet.c{i}.w"),
                    Tensor::uniform(&[3, 3, ci, co], -a, a, &mut rng),
                    false,
                );
                let b = store.register(format!("featnet.c{i}.b"), Tensor::zeros(&[co]), false);
                (w, b, stride)
            })
            .collect();
        FeatNet { convs }
    }

    pub fn features(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let mut h = x;
        for (i, &(w, b, stride)) in self.convs.iter().enumerate() {
            let wv = g.param(store, w);
            let bv = g.param(store, b);
            let y = g.conv2d(h, wv, stride, 1);
            let y = g.add_chan_vec(y, bv);
            h = if i + 1 < self.convs.len() {
                g.leaky_relu(y, LEAKY_SLOPE)
            } else {
                y
            };
        }
        h
    }
}

/// Euclidean distance between feature maps of prediction and reference
/// (tape form; the reference enters as a constant).
pub fn perceptual_loss_tape(
    g: &mut Graph,
    store: &ParamStore,
    featnet: &FeatNet,
    pred: Var,
    reference: Var,
) -> Var {
    let fp = featnet.features(g, store, pred);
    let fr = featnet.features(g, store, reference);
    let d = g.sub(fp, fr);
    let sq = g.mul(d, d);
    let s = g.sum(sq);
    g.sqrt_guard(s)
}

/// Value-level perceptual loss between two images (zero iff the feature maps
/// coincide).
pub fn perceptual_loss(
    store: &ParamStore,
    featnet: &FeatNet,
    pred: &Image,
    reference: &Image,
) -> Result<f64> {
    if pred.tensor().shape() != reference.tensor().shape() {
        return Err(crate::error::Error::dimension(format!(
            "image shapes differ: {:?} vs {:?}",
            pred.tensor().shape(),
            reference.tensor().shape()
        )));
    }
    let mut g = Graph::new();
    let p = g.constant(pred.tensor().clone());
    let r = g.constant(reference.tensor().clone());
    let l = perceptual_loss_tape(&mut g, store, featnet, p, r);
    Ok(g.value(l).scalar_value())
}

/// Draws a latent code with the same component shapes as `z`, elementwise
/// `N(mean, var)` where mean and variance are scalars over the whole code.
/// A zero-variance code degenerates to the constant mean.
pub fn latent_matched_sample(z: &LatentCode, rng: &mut Rng) -> LatentCode {
    let n = z.total_elements() as f64;
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for p in &z.parts {
        for &v in p.data() {
            sum += v;
            sumsq += v * v;
        }
    }
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    let std = var.sqrt();
    let parts = z
        .parts
        .iter()
        .map(|p| {
            if std == 0.0 {
                Tensor::filled(p.shape(), mean)
            } else {
                Tensor::from_vec(
                    p.shape(),
                    p.data().iter().map(|_| mean + std * rng.normal()).collect(),
                )
            }
        })
        .collect();
    LatentCode { parts }
}

/// Tape version used inside the training loss: `z' = mean + sqrt(var) * n`
/// with `n` drawn once per call. With `detach` the statistics are computed
/// outside the tape (no gradient flows into them); otherwise the
/// reparameterized sample keeps the loss differentiable end to end.
pub fn latent_matched_sample_tape(
    g: &mut Graph,
    zs: &[Var],
    stats: LatentStats,
    detach: bool,
    rng: &mut Rng,
) -> Vec<Var> {
    match stats {
        LatentStats::Global => {
            let n: usize = zs.iter().map(|&z| g.value(z).numel()).sum();
            let noises: Vec<Tensor> = zs
                .iter()
                .map(|&z| Tensor::normal(g.value(z).shape(), 1.0, rng))
                .collect();
            if detach {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for &z in zs {
                    for &v in g.value(z).data() {
                        sum += v;
                        sumsq += v * v;
                    }
                }
                let mean = sum / n as f64;
                let std = (sumsq / n as f64 - mean * mean).max(0.0).sqrt();
                zs.iter()
                    .zip(noises)
                    .map(|(_, nz)| g.constant(nz.map(|e| mean + std * e)))
                    .collect()
            } else {
                let mut total = g.scalar(0.0);
                let mut total_sq = g.scalar(0.0);
                for &z in zs {
                    let s = g.sum(z);
                    total = g.add(total, s);
                    let sq = g.mul(z, z);
                    let s2 = g.sum(sq);
                    total_sq = g.add(total_sq, s2);
                }
                let mean = g.mul_const(total, 1.0 / n as f64);
                let e2 = g.mul_const(total_sq, 1.0 / n as f64);
                let m2 = g.mul(mean, mean);
                let var = g.sub(e2, m2);
                let std = g.sqrt_guard(var);
                zs.iter()
                    .zip(noises)
                    .map(|(_, nz)| {
                        let nv = g.constant(nz);
                        let scaled = g.mul(nv, std);
                        g.add(scaled, mean)
                    })
                    .collect()
            }
        }
        LatentStats::PerChannel => zs
            .iter()
            .map(|&z| {
                let shape = g.value(z).shape().to_vec();
                let noise = Tensor::normal(&shape, 1.0, rng);
                if detach {
                    let (h, w, c) = g.value(z).dims3();
                    let mut mean = vec![0.0; c];
                    let mut sq = vec![0.0; c];
                    for p in 0..h * w {
                        for ch in 0..c {
                            let v = g.value(z).data()[p * c + ch];
                            mean[ch] += v;
                            sq[ch] += v * v;
                        }
                    }
                    let n = (h * w) as f64;
                    let mut out = Tensor::zeros(&shape);
                    for p in 0..h * w {
                        for ch in 0..c {
                            let m = mean[ch] / n;
                            let std = (sq[ch] / n - m * m).max(0.0).sqrt();
                            out.data_mut()[p * c + ch] = m + std * noise.data()[p * c + ch];
                        }
                    }
                    g.constant(out)
                } else {
                    let m = g.global_avg_pool(z);
                    let zz = g.mul(z, z);
                    let e2 = g.global_avg_pool(zz);
                    let m2 = g.mul(m, m);
                    let var = g.sub(e2, m2);
                    let std = g.sqrt_guard(var);
                    let nv = g.constant(noise);
                    let scaled = g.mul_chan_vec(nv, std);
                    g.add_chan_vec(scaled, m)
                }
            })
            .collect(),
    }
}
