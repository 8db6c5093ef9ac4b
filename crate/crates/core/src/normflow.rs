//! Conditional normalizing-flow generator: an invertible map between an
//! image and a latent code, conditioned on blended pyramid features.
//!
//! Structure: `blocks` repetitions of [squeeze, transition, `steps` flow
//! steps, split], the last block keeping its output as the final latent
//! component. A transition is actnorm followed by an invertible 1x1 channel
//! mix; a flow step is actnorm, 1x1 mix, then a conditional affine coupling
//!
//! ```text
//!   h_B' = exp(lambda * tanh(w_s(h_A; cond)) + eta) * h_B + w_b(h_A; cond)
//! ```
//!
//! whose per-element scale is confined to `(e^(eta-|lambda|),
//! e^(eta+|lambda|))`, keeping the inverse pass free of overflow. Every
//! layer contributes an exact log-determinant; their sum turns the base
//! density into an exact negative log-likelihood.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Conv, LEAKY_SLOPE};
use crate::linalg;
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::types::LatentCode;

pub const LOG_TAU: f64 = std::f64::consts::TAU; // 2 pi

#[derive(Debug, Clone)]
pub struct FlowConfig {
    /// Number of squeeze/transition/steps/split blocks.
    pub blocks: usize,
    /// Flow steps per block.
    pub steps_per_block: usize,
    pub in_channels: usize,
    /// Channels of the conditioning adapter output; 0 disables conditioning.
    pub cond_channels: usize,
    /// Hidden width of the coupling subnetworks.
    pub coupling_hidden: usize,
}

impl FlowConfig {
    /// Full-scale settings: 3 blocks of 16 steps.
    pub fn paper(cond_channels: usize) -> Self {
        FlowConfig {
            blocks: 3,
            steps_per_block: 16,
            in_channels: 3,
            cond_channels,
            coupling_hidden: 64,
        }
    }

    /// Desk-scale settings: 3 blocks of 4 steps.
    pub fn toy(cond_channels: usize, coupling_hidden: usize) -> Self {
        FlowConfig {
            blocks: 3,
            steps_per_block: 4,
            in_channels: 3,
            cond_channels,
            coupling_hidden,
        }
    }
}

/// Initial gain on the conditioning columns of the coupling subnets' first
/// convolution; the content half keeps fan-in scale.
const COND_INPUT_GAIN: f64 = 3.0;

#[derive(Debug, Clone)]
struct ActnormIds {
    s: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct CouplingIds {
    lambda: ParamId,
    eta: ParamId,
    ws1: Conv,
    ws2: Conv,
    wb1: Conv,
    wb2: Conv,
}

#[derive(Debug, Clone)]
enum Layer {
    Squeeze,
    Actnorm(usize),
    Mix(usize),
    Coupling { idx: usize, block: usize },
    Split,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub config: FlowConfig,
    layers: Vec<Layer>,
    actnorms: Vec<ActnormIds>,
    mixes: Vec<ParamId>,
    couplings: Vec<CouplingIds>,
    /// Conditioning adapters, one per block (empty when unconditional).
    adapters: Vec<Conv>,
    /// Data-dependent actnorm initialization flags, aligned with `actnorms`.
    pub actnorm_initialized: Vec<bool>,
}

impl Generator {
    /// Builds the schedule and registers parameters. `cond_source_channels`
    /// lists the raw feature channels feeding each block's adapter; it must
    /// have one entry per block unless conditioning is disabled.
    pub fn init(
        store: &mut ParamStore,
        config: FlowConfig,
        cond_source_channels: &[usize],
        seed: u64,
    ) -> Result<Self> {
        if config.blocks == 0 {
            return Err(Error::validation("generator needs at least one block"));
        }
        if config.cond_channels > 0 && cond_source_channels.len() != config.blocks {
            return Err(Error::dimension(format!(
                "need {} conditioning sources, got {}",
                config.blocks,
                cond_source_channels.len()
            )));
        }
        let mut rng = Rng::from_seed(seed);
        let mut layers = Vec::new();
        let mut actnorms = Vec::new();
        let mut mixes = Vec::new();
        let mut couplings = Vec::new();
        let mut adapters = Vec::new();
        let mut c = config.in_channels;
        for b in 0..config.blocks {
            c *= 4;
            if c < 2 {
                return Err(Error::validation(format!(
                    "coupling needs at least 2 channels, block {b} has {c}"
                )));
            }
            layers.push(Layer::Squeeze);
            // Transition: actnorm + invertible 1x1.
            layers.push(Layer::Actnorm(actnorms.len()));
            actnorms.push(ActnormIds {
                s: store.register(format!("gen.b{b}.t.an.s"), Tensor::filled(&[c], 1.0), true),
                b: store.register(format!("gen.b{b}.t.an.b"), Tensor::zeros(&[c]), true),
            });
            layers.push(Layer::Mix(mixes.len()));
            mixes.push(store.register(
                format!("gen.b{b}.t.mix.w"),
                linalg::random_orthogonal(c, &mut rng),
                true,
            ));
            for k in 0..config.steps_per_block {
                layers.push(Layer::Actnorm(actnorms.len()));
                actnorms.push(ActnormIds {
                    s: store.register(
                        format!("gen.b{b}.s{k}.an.s"),
                        Tensor::filled(&[c], 1.0),
                        true,
                    ),
                    b: store.register(format!("gen.b{b}.s{k}.an.b"), Tensor::zeros(&[c]), true),
                });
                layers.push(Layer::Mix(mixes.len()));
                mixes.push(store.register(
                    format!("gen.b{b}.s{k}.mix.w"),
                    linalg::random_orthogonal(c, &mut rng),
                    true,
                ));
                layers.push(Layer::Coupling {
                    idx: couplings.len(),
                    block: b,
                });
                let ca = c / 2;
                let cb = c - ca;
                let cin = ca + config.cond_channels;
                let boost = |store: &mut ParamStore, conv: &Conv| {
                    if config.cond_channels == 0 {
                        return;
                    }
                    let w = store.get_mut(conv.w);
                    let (kh, kw, ci, co) = w.dims4();
                    let data = w.data_mut();
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for c_in in ca..ci {
                                for c_out in 0..co {
                                    data[((ky * kw + kx) * ci + c_in) * co + c_out] *=
                                        COND_INPUT_GAIN;
                                }
                            }
                        }
                    }
                };
                couplings.push(CouplingIds {
                    lambda: store.register(
                        format!("gen.b{b}.s{k}.cpl.lambda"),
                        Tensor::scalar(1.0),
                        true,
                    ),
                    eta: store.register(
                        format!("gen.b{b}.s{k}.cpl.eta"),
                        Tensor::scalar(1.0),
                        true,
                    ),
                    ws1: Conv::new(
                        store,
                        &format!("gen.b{b}.s{k}.cpl.ws1"),
                        3,
                        cin,
                        config.coupling_hidden,
                        1,
                        &mut rng,
                    ),
                    ws2: Conv::new_zero(
                        store,
                        &format!("gen.b{b}.s{k}.cpl.ws2"),
                        3,
                        config.coupling_hidden,
                        cb,
                    ),
                    wb1: Conv::new(
                        store,
                        &format!("gen.b{b}.s{k}.cpl.wb1"),
                        3,
                        cin,
                        config.coupling_hidden,
                        1,
                        &mut rng,
                    ),
                    wb2: Conv::new_zero(
                        store,
                        &format!("gen.b{b}.s{k}.cpl.wb2"),
                        3,
                        config.coupling_hidden,
                        cb,
                    ),
                });
                let last = couplings.last().unwrap().clone();
                boost(store, &last.ws1);
                boost(store, &last.wb1);
            }
            if b + 1 < config.blocks {
                layers.push(Layer::Split);
                c -= c / 2;
            }
            if config.cond_channels > 0 {
                adapters.push(Conv::new(
                    store,
                    &format!("gen.b{b}.cond"),
                    3,
                    cond_source_channels[b],
                    config.cond_channels,
                    1,
                    &mut rng,
                ));
            }
        }
        let n_act = actnorms.len();
        Ok(Generator {
            config,
            layers,
            actnorms,
            mixes,
            couplings,
            adapters,
            actnorm_initialized: vec![false; n_act],
        })
    }

    /// Shapes of the latent components for an `h x w` input.
    pub fn latent_shapes(&self, h: usize, w: usize) -> Result<Vec<[usize; 3]>> {
        let f = 1 << self.config.blocks;
        if h % f != 0 || w % f != 0 {
            return Err(Error::dimension(format!(
                "input {h}x{w} not divisible by 2^{} required by {} squeezes",
                self.config.blocks, self.config.blocks
            )));
        }
        let (mut h, mut w, mut c) = (h, w, self.config.in_channels);
        let mut shapes = Vec::new();
        for b in 0..self.config.blocks {
            h /= 2;
            w /= 2;
            c *= 4;
            if b + 1 < self.config.blocks {
                let zc = c / 2;
                shapes.push([h, w, zc]);
                c -= zc;
            } else {
                shapes.push([h, w, c]);
            }
        }
        Ok(shapes)
    }

    /// Applies the per-block conditioning adapters to raw features (already
    /// at each block's resolution).
    pub fn make_conds(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        feats: &[Var],
    ) -> Result<Vec<Var>> {
        if self.config.cond_channels == 0 {
            return Ok(Vec::new());
        }
        if feats.len() != self.config.blocks {
            return Err(Error::dimension(format!(
                "need {} conditioning features, got {}",
                self.config.blocks,
                feats.len()
            )));
        }
        Ok(self
            .adapters
            .iter()
            .zip(feats)
            .map(|(conv, &f)| {
                let y = conv.apply(g, store, f);
                let y = g.leaky_relu(y, LEAKY_SLOPE);
                // RMS-normalize so conditioning reaches the couplings at
                // unit scale regardless of the feature magnitudes upstream.
                let sq = g.mul(y, y);
                let ms = g.mean(sq);
                let ms = g.add_const(ms, 1e-8);
                let rms = g.sqrt_guard(ms);
                let inv = g.recip(rms);
                g.mul(y, inv)
            })
            .collect())
    }

    fn cond_for_block<'a>(&self, conds: &'a [Var], block: usize) -> Result<Option<&'a Var>> {
        if self.config.cond_channels == 0 {
            return Ok(None);
        }
        conds
            .get(block)
            .map(Some)
            .ok_or_else(|| Error::dimension(format!("missing conditioning for block {block}")))
    }

    fn check_actnorm_scale(&self, store: &ParamStore, ids: &ActnormIds) -> Result<()> {
        if store.get(ids.s).data().iter().any(|&v| v.abs() < 1e-12) {
            return Err(Error::numerical("actnorm scale is zero"));
        }
        Ok(())
    }

    fn actnorm_fwd(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &ActnormIds,
        h: Var,
    ) -> Result<(Var, Var)> {
        self.check_actnorm_scale(store, ids)?;
        let (hh, ww, _) = g.value(h).dims3();
        let s = g.param(store, ids.s);
        let b = g.param(store, ids.b);
        let shifted = g.add_chan_vec(h, b);
        let y = g.mul_chan_vec(shifted, s);
        let la = g.log_abs(s);
        let ls = g.sum(la);
        let ld = g.mul_const(ls, (hh * ww) as f64);
        Ok((y, ld))
    }

    fn actnorm_inv(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &ActnormIds,
        y: Var,
    ) -> Result<Var> {
        self.check_actnorm_scale(store, ids)?;
        let s = g.param(store, ids.s);
        let b = g.param(store, ids.b);
        let sinv = g.recip(s);
        let unscaled = g.mul_chan_vec(y, sinv);
        let nb = g.neg(b);
        Ok(g.add_chan_vec(unscaled, nb))
    }

    fn mix_fwd(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        w_id: ParamId,
        h: Var,
    ) -> Result<(Var, Var)> {
        let det = linalg::det(store.get(w_id))?;
        if det.abs() <= linalg::SINGULAR_DET_EPS {
            return Err(Error::numerical(format!(
                "1x1 mixing matrix is singular (|det| = {:.3e})",
                det.abs()
            )));
        }
        let (hh, ww, _) = g.value(h).dims3();
        let w = g.param(store, w_id);
        let y = g.channel_mix(h, w);
        let lad = g.log_abs_det(w);
        let ld = g.mul_const(lad, (hh * ww) as f64);
        Ok((y, ld))
    }

    fn mix_inv(&self, g: &mut Graph, store: &ParamStore, w_id: ParamId, y: Var) -> Result<Var> {
        let det = linalg::det(store.get(w_id))?;
        if det.abs() <= linalg::SINGULAR_DET_EPS {
            return Err(Error::numerical(format!(
                "1x1 mixing matrix is singular (|det| = {:.3e})",
                det.abs()
            )));
        }
        let w = g.param(store, w_id);
        let winv = g.mat_inverse(w);
        Ok(g.channel_mix(y, winv))
    }

    /// Scale exponent `lambda * tanh(w_s(h_A; cond)) + eta` and bias
    /// `w_b(h_A; cond)`, shared by both coupling directions.
    fn coupling_nets(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &CouplingIds,
        h_a: Var,
        cond: Option<&Var>,
    ) -> (Var, Var, Var) {
        let inp = match cond {
            Some(&c) => g.concat_chan(h_a, c),
            None => h_a,
        };
        let s_hidden = ids.ws1.apply_act(g, store, inp);
        let s_raw = ids.ws2.apply(g, store, s_hidden);
        let tan = g.tanh(s_raw);
        let lambda = g.param(store, ids.lambda);
        let eta = g.param(store, ids.eta);
        let lt = g.mul(tan, lambda);
        let exponent = g.add(lt, eta);
        let b_hidden = ids.wb1.apply_act(g, store, inp);
        let bias = ids.wb2.apply(g, store, b_hidden);
        (exponent, bias, tan)
    }

    fn coupling_fwd(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &CouplingIds,
        h: Var,
        cond: Option<&Var>,
    ) -> Result<(Var, Var)> {
        let (_, _, c) = g.value(h).dims3();
        if c < 2 {
            return Err(Error::validation(format!("coupling needs >= 2 channels, got {c}")));
        }
        let ca = c / 2;
        let h_a = g.slice_chan(h, 0, ca);
        let h_b = g.slice_chan(h, ca, c);
        let (exponent, bias, tan) = self.coupling_nets(g, store, ids, h_a, cond);
        let scale = g.exp(exponent);
        let scaled = g.mul(h_b, scale);
        let h_b_new = g.add(scaled, bias);
        let out = g.concat_chan(h_a, h_b_new);
        // logdet = lambda * sum(tanh) + eta * #elements(h_B).
        let lambda = g.param(store, ids.lambda);
        let eta = g.param(store, ids.eta);
        let st = g.sum(tan);
        let l1 = g.mul(st, lambda);
        let n_b = g.value(h_b).numel() as f64;
        let l2 = g.mul_const(eta, n_b);
        let ld = g.add(l1, l2);
        Ok((out, ld))
    }

    fn coupling_inv(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        ids: &CouplingIds,
        y: Var,
        cond: Option<&Var>,
    ) -> Result<Var> {
        let (_, _, c) = g.value(y).dims3();
        if c < 2 {
            return Err(Error::validation(format!("coupling needs >= 2 channels, got {c}")));
        }
        let ca = c / 2;
        let h_a = g.slice_chan(y, 0, ca);
        let y_b = g.slice_chan(y, ca, c);
        let (exponent, bias, _tan) = self.coupling_nets(g, store, ids, h_a, cond);
        let neg_exp = g.neg(exponent);
        let inv_scale = g.exp(neg_exp);
        let unbias = g.sub(y_b, bias);
        let h_b = g.mul(unbias, inv_scale);
        Ok(g.concat_chan(h_a, h_b))
    }

    /// Encode `x` (model-range image) into latent components plus the total
    /// log-determinant of the forward Jacobian.
    pub fn encode_tape(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        conds: &[Var],
    ) -> Result<(Vec<Var>, Var)> {
        let (h, w, c) = g.value(x).dims3();
        if c != self.config.in_channels {
            return Err(Error::dimension(format!(
                "generator expects {} channels, got {c}",
                self.config.in_channels
            )));
        }
        self.latent_shapes(h, w)?;
        let mut cur = x;
        let mut zs = Vec::new();
        let mut logdet = g.scalar(0.0);
        for layer in &self.layers {
            match layer {
                Layer::Squeeze => cur = g.squeeze2(cur),
                Layer::Actnorm(i) => {
                    let (y, ld) = self.actnorm_fwd(g, store, &self.actnorms[*i], cur)?;
                    cur = y;
                    logdet = g.add(logdet, ld);
                }
                Layer::Mix(i) => {
                    let (y, ld) = self.mix_fwd(g, store, self.mixes[*i], cur)?;
                    cur = y;
                    logdet = g.add(logdet, ld);
                }
                Layer::Coupling { idx, block } => {
                    let cond = self.cond_for_block(conds, *block)?;
                    let (y, ld) = self.coupling_fwd(g, store, &self.couplings[*idx], cur, cond)?;
                    cur = y;
                    logdet = g.add(logdet, ld);
                }
                Layer::Split => {
                    let (_, _, cc) = g.value(cur).dims3();
                    let keep = g.slice_chan(cur, 0, cc / 2);
                    let z = g.slice_chan(cur, cc / 2, cc);
                    zs.push(z);
                    cur = keep;
                }
            }
        }
        zs.push(cur);
        Ok((zs, logdet))
    }

    /// Exact inverse of [`Generator::encode_tape`].
    pub fn decode_tape(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        zs: &[Var],
        conds: &[Var],
    ) -> Result<Var> {
        if zs.len() != self.config.blocks {
            return Err(Error::dimension(format!(
                "expected {} latent components, got {}",
                self.config.blocks,
                zs.len()
            )));
        }
        let mut cur = zs[self.config.blocks - 1];
        let mut z_idx = self.config.blocks - 1;
        for layer in self.layers.iter().rev() {
            match layer {
                Layer::Squeeze => cur = g.unsqueeze2(cur),
                Layer::Actnorm(i) => {
                    cur = self.actnorm_inv(g, store, &self.actnorms[*i], cur)?;
                }
                Layer::Mix(i) => {
                    cur = self.mix_inv(g, store, self.mixes[*i], cur)?;
                }
                Layer::Coupling { idx, block } => {
                    let cond = self.cond_for_block(conds, *block)?;
                    cur = self.coupling_inv(g, store, &self.couplings[*idx], cur, cond)?;
                }
                Layer::Split => {
                    z_idx -= 1;
                    cur = g.concat_chan(cur, zs[z_idx]);
                }
            }
        }
        Ok(cur)
    }

    /// Negative log-likelihood under the standard-normal base:
    /// `sum_i (z_i^2 / 2 + log(2 pi) / 2) - logdet`.
    pub fn nll_tape(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: Var,
        conds: &[Var],
    ) -> Result<(Var, Vec<Var>, Var)> {
        let (zs, logdet) = self.encode_tape(g, store, x, conds)?;
        let mut hat_p = g.scalar(0.0);
        let mut total = 0usize;
        for &z in &zs {
            let sq = g.mul(z, z);
            let s = g.sum(sq);
            let half = g.mul_const(s, 0.5);
            hat_p = g.add(hat_p, half);
            total += g.value(z).numel();
        }
        hat_p = g.add_const(hat_p, 0.5 * LOG_TAU.ln() * total as f64);
        let nll = g.sub(hat_p, logdet);
        Ok((nll, zs, logdet))
    }

    /// Draws a latent code with elements iid `N(0, tau^2)`; `tau = 0` is the
    /// deterministic all-zero code.
    pub fn sample_latent(
        &self,
        h: usize,
        w: usize,
        tau: f64,
        rng: &mut Rng,
    ) -> Result<LatentCode> {
        if tau < 0.0 {
            return Err(Error::validation(format!("temperature must be >= 0, got {tau}")));
        }
        let shapes = self.latent_shapes(h, w)?;
        let parts = shapes
            .iter()
            .map(|s| {
                if tau == 0.0 {
                    Tensor::zeros(s)
                } else {
                    Tensor::normal(s, tau, rng)
                }
            })
            .collect();
        Ok(LatentCode { parts })
    }

    /// Data-dependent actnorm initialization: walks the encode schedule over
    /// a batch in lockstep; at each uninitialized actnorm, sets scale and
    /// shift so that its output has zero mean and unit variance per channel
    /// on the batch, then continues with the updated parameters.
    pub fn init_actnorm(
        &mut self,
        store: &mut ParamStore,
        items: &[(Tensor, Vec<Tensor>)],
    ) -> Result<()> {
        if items.is_empty() {
            return Err(Error::validation("actnorm init needs at least one sample"));
        }
        let mut graphs: Vec<Graph> = items.iter().map(|_| Graph::new()).collect();
        let mut hs: Vec<Var> = Vec::new();
        let mut conds: Vec<Vec<Var>> = Vec::new();
        for (g, (x, cond)) in graphs.iter_mut().zip(items) {
            hs.push(g.constant(x.clone()));
            conds.push(cond.iter().map(|c| g.constant(c.clone())).collect());
        }
        let mut z_done = vec![0usize; items.len()];
        for layer in &self.layers {
            if let Layer::Actnorm(i) = layer {
                if !self.actnorm_initialized[*i] {
                    let c = store.get(self.actnorms[*i].s).numel();
                    let mut mean = vec![0.0; c];
                    let mut sq = vec![0.0; c];
                    let mut count = 0usize;
                    for (g, &h) in graphs.iter().zip(&hs) {
                        let v = g.value(h);
                        let (hh, ww, cc) = v.dims3();
                        assert_eq!(cc, c);
                        count += hh * ww;
                        for p in 0..hh * ww {
                            for ch in 0..c {
                                let x = v.data()[p * c + ch];
                                mean[ch] += x;
                                sq[ch] += x * x;
                            }
                        }
                    }
                    let n = count as f64;
                    let mut s = vec![0.0; c];
                    let mut b = vec![0.0; c];
                    for ch in 0..c {
                        let m = mean[ch] / n;
                        let var = (sq[ch] / n - m * m).max(0.0);
                        s[ch] = 1.0 / (var.sqrt() + 1e-8);
                        b[ch] = -m;
                    }
                    store.set(self.actnorms[*i].s, Tensor::from_vec(&[c], s));
                    store.set(self.actnorms[*i].b, Tensor::from_vec(&[c], b));
                    self.actnorm_initialized[*i] = true;
                }
            }
            for (item, g) in graphs.iter_mut().enumerate() {
                let cur = hs[item];
                let next = match layer {
                    Layer::Squeeze => g.squeeze2(cur),
                    Layer::Actnorm(i) => self.actnorm_fwd(g, store, &self.actnorms[*i], cur)?.0,
                    Layer::Mix(i) => self.mix_fwd(g, store, self.mixes[*i], cur)?.0,
                    Layer::Coupling { idx, block } => {
                        let cond = self.cond_for_block(&conds[item], *block)?.copied();
                        self.coupling_fwd(g, store, &self.couplings[*idx], cur, cond.as_ref())?
                            .0
                    }
                    Layer::Split => {
                        let (_, _, cc) = g.value(cur).dims3();
                        z_done[item] += 1;
                        g.slice_chan(cur, 0, cc / 2)
                    }
                };
                hs[item] = next;
            }
        }
        Ok(())
    }

    /// Value-level encode; returns the latent code and total log-determinant.
    pub fn encode_values(
        &self,
        store: &ParamStore,
        x: &Tensor,
        conds: &[Tensor],
    ) -> Result<(LatentCode, f64)> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let cvs: Vec<Var> = conds.iter().map(|c| g.constant(c.clone())).collect();
        let (zs, ld) = self.encode_tape(&mut g, store, xv, &cvs)?;
        Ok((
            LatentCode {
                parts: zs.iter().map(|&z| g.value(z).clone()).collect(),
            },
            g.value(ld).scalar_value(),
        ))
    }

    /// Value-level decode of a latent code.
    pub fn decode_values(
        &self,
        store: &ParamStore,
        z: &LatentCode,
        conds: &[Tensor],
    ) -> Result<Tensor> {
        for part in &z.parts {
            if !part.all_finite() {
                return Err(Error::validation("latent code contains non-finite values"));
            }
        }
        let mut g = Graph::new();
        let zvs: Vec<Var> = z.parts.iter().map(|p| g.constant(p.clone())).collect();
        let cvs: Vec<Var> = conds.iter().map(|c| g.constant(c.clone())).collect();
        let out = self.decode_tape(&mut g, store, &zvs, &cvs)?;
        Ok(g.value(out).clone())
    }

    /// Value-level negative log-likelihood.
    pub fn nll_value(&self, store: &ParamStore, x: &Tensor, conds: &[Tensor]) -> Result<f64> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone());
        let cvs: Vec<Var> = conds.iter().map(|c| g.constant(c.clone())).collect();
        let (nll, _, _) = self.nll_tape(&mut g, store, xv, &cvs)?;
        Ok(g.value(nll).scalar_value())
    }

    /// Random-but-stable parameters for round-trip tests: orthogonal mixes
    /// stay, actnorm scales land in [0.5, 2], coupling subnets get small
    /// random weights, lambda and eta stay near one.
    pub fn randomize_for_tests(&self, store: &mut ParamStore, seed: u64) {
        let mut rng = Rng::from_seed(seed);
        for ids in &self.actnorms {
            let c = store.get(ids.s).numel();
            let s = Tensor::from_vec(
                &[c],
                (0..c)
                    .map(|_| {
                        let mag = rng.range(0.5, 2.0);
                        if rng.uniform() < 0.5 {
                            -mag
                        } else {
                            mag
                        }
                    })
                    .collect(),
            );
            store.set(ids.s, s);
            let b = Tensor::uniform(&[c], -0.5, 0.5, &mut rng);
            store.set(ids.b, b);
        }
        for ids in &self.couplings {
            store.set(ids.lambda, Tensor::scalar(rng.range(0.5, 1.5)));
            store.set(ids.eta, Tensor::scalar(rng.range(0.5, 1.5)));
            for conv in [&ids.ws2, &ids.wb2] {
                let shape = store.get(conv.w).shape().to_vec();
                store.set(conv.w, Tensor::uniform(&shape, -0.1, 0.1, &mut rng));
            }
        }
    }
}
