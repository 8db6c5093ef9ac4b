//! Asymmetric synergistic blending.
//!
//! One side of the blend carries primary content: the first frame's pyramid
//! is softmax-splatted to time `t` under a learned importance metric. The
//! other side compensates occlusions: the second frame's pyramid is aligned
//! by a coarse-to-fine deformable module seeded with a splatted flow prior.
//! A quasi-binary mask decides, per pixel, how much of the compensating side
//! enters: zero almost everywhere, near one inside occlusions, adaptive in a
//! bounded dilation band around them (bias-free convolutions keep the mask's
//! support inside a 17x17 dilation of the occluded set).

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::{Conv, SqueezeExcite, LEAKY_SLOPE};
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::types::{BinaryMask, FlowField};
use crate::warp;

/// How the squeeze-excitation attention weights are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionNorm {
    /// Independent sigmoid gate per channel (default).
    Sigmoid,
    /// Softmax across channels.
    Softmax,
}

#[derive(Debug, Clone)]
pub struct AsbConfig {
    pub channel_plan: Vec<usize>,
    /// Hidden width of the importance network.
    pub vnet_hidden: usize,
    /// Hidden width of the per-level alignment heads.
    pub pam_hidden: usize,
    /// Number of deformable sampling taps per pixel.
    pub pam_taps: usize,
    /// Expansion channels of the dilation module.
    pub adm_channels: usize,
    pub se_hidden: usize,
    /// Noise amplitude added to the mask metric during training.
    pub alpha: f64,
    /// Salience of occluded regions inside the tanh.
    pub beta: f64,
    pub attention_norm: AttentionNorm,
    /// Density threshold of the occlusion test.
    pub occlusion_eps: f64,
}

impl AsbConfig {
    pub fn with_plan(channel_plan: &[usize]) -> Self {
        AsbConfig {
            channel_plan: channel_plan.to_vec(),
            vnet_hidden: 16,
            pam_hidden: 16,
            pam_taps: 9,
            adm_channels: 16,
            se_hidden: 8,
            alpha: 1e-3,
            beta: 2.0,
            attention_norm: AttentionNorm::Sigmoid,
            occlusion_eps: warp::OCCLUSION_EPS,
        }
    }

    pub fn levels(&self) -> usize {
        self.channel_plan.len()
    }
}

/// Importance network: scores every pixel of the first frame from its
/// features and the negated brightness-constancy residual.
#[derive(Debug, Clone)]
pub struct VNetParams {
    c0: Conv,
    c1: Conv,
}

/// Per-level alignment head: two convolutions predicting per-tap sampling
/// offsets and gates; the output layer starts at zero so the initial module
/// reduces to a plain warp by the offset prior.
#[derive(Debug, Clone)]
pub struct PamParams {
    heads: Vec<(Conv, Conv)>,
    taps: usize,
}

/// Adaptive dilation module for one pyramid level: bias-free expansion
/// convolutions with kernel sizes (7, 3, 1) — the first two dilated by 2 for
/// a 17x17 total footprint — scaled by squeeze-excitation attention over the
/// blended features and projected back to a single channel, also bias-free.
#[derive(Debug, Clone)]
pub struct AdmLevelParams {
    ex0: Conv,
    ex1: Conv,
    ex2: Conv,
    se: SqueezeExcite,
    proj: Conv,
}

#[derive(Debug, Clone)]
pub struct AdmParams {
    levels: Vec<AdmLevelParams>,
}

#[derive(Debug, Clone)]
pub struct AsbParams {
    pub config: AsbConfig,
    vnet: VNetParams,
    pam: PamParams,
    adm: AdmParams,
}

/// Mask and metric values kept around for inspection and tests.
pub struct AsbIntermediates {
    pub importance: Var,
    pub binary_masks: Vec<BinaryMask>,
    pub quasi_masks: Vec<Var>,
    pub warped_primary: Vec<Var>,
    pub aligned_secondary: Vec<Var>,
}

impl AsbParams {
    pub fn init(store: &mut ParamStore, config: AsbConfig, seed: u64) -> Self {
        let mut rng = Rng::from_seed(seed);
        let c0 = config.channel_plan[0];
        let vnet = VNetParams {
            c0: Conv::new(store, "asb.vnet.c0", 3, c0 + 1, config.vnet_hidden, 1, &mut rng),
            c1: Conv::new(store, "asb.vnet.c1", 3, config.vnet_hidden, 1, 1, &mut rng),
        };
        let mut heads = Vec::new();
        for (l, &cl) in config.channel_plan.iter().enumerate() {
            let cin = 2 + 2 * cl;
            let h0 = Conv::new(
                store,
                &format!("asb.pam.l{l}.h0"),
                3,
                cin,
                config.pam_hidden,
                1,
                &mut rng,
            );
            let h1 = Conv::new_zero(
                store,
                &format!("asb.pam.l{l}.h1"),
                3,
                config.pam_hidden,
                config.pam_taps * 3,
            );
            heads.push((h0, h1));
        }
        let pam = PamParams {
            heads,
            taps: config.pam_taps,
        };
        let mut levels = Vec::new();
        for (l, &cl) in config.channel_plan.iter().enumerate() {
            let c = config.adm_channels;
            levels.push(AdmLevelParams {
                ex0: Conv::new_bias_free(store, &format!("asb.adm.l{l}.ex0"), 7, 1, c, 2, &mut rng),
                ex1: Conv::new_bias_free(store, &format!("asb.adm.l{l}.ex1"), 3, c, c, 2, &mut rng),
                ex2: Conv::new_bias_free(store, &format!("asb.adm.l{l}.ex2"), 1, c, c, 1, &mut rng),
                se: SqueezeExcite::new(
                    store,
                    &format!("asb.adm.l{l}.se"),
                    2 * cl,
                    config.se_hidden,
                    c,
                    &mut rng,
                ),
                proj: Conv::new_bias_free(store, &format!("asb.adm.l{l}.proj"), 1, c, 1, 1, &mut rng),
            });
        }
        AsbParams {
            config,
            vnet,
            pam,
            adm: AdmParams { levels },
        }
    }

    /// Importance metric: `v(f0, -|f0 - backward_warp(f1, flow01)|_1)`,
    /// one channel at full resolution.
    pub fn importance_metric(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        f0_0: Var,
        f1_0: Var,
        flow01: &FlowField,
    ) -> Result<Var> {
        let (h, w, c) = g.value(f0_0).dims3();
        if g.value(f1_0).dims3() != (h, w, c) {
            return Err(Error::dimension("importance metric inputs differ in shape"));
        }
        if flow01.size() != (h, w) {
            return Err(Error::dimension("flow does not match level-0 features"));
        }
        let flow = g.constant(flow01.tensor().clone());
        let warped = g.bilinear_sample(f1_0, flow);
        let diff = g.sub(f0_0, warped);
        let mag = g.abs(diff);
        let l1 = g.sum_channels(mag);
        let neg = g.neg(l1);
        let inp = g.concat_chan(f0_0, neg);
        let hid = self.vnet.c0.apply_act(g, store, inp);
        Ok(self.vnet.c1.apply(g, store, hid))
    }

    /// Softmax-splat every pyramid level to time `t` with per-level
    /// downscaled flow and metric.
    pub fn forward_warp_pyramid(
        &self,
        g: &mut Graph,
        f0: &[Var],
        t: f64,
        flow01: &FlowField,
        importance: Var,
    ) -> Result<Vec<Var>> {
        if !(0.0 < t && t < 1.0) {
            return Err(Error::validation(format!("t must lie in (0, 1), got {t}")));
        }
        let mut out = Vec::with_capacity(f0.len());
        let mut z_l = importance;
        for (l, &feat) in f0.iter().enumerate() {
            let flow_l = warp::rescale_flow(flow01, l)?;
            if l > 0 {
                z_l = g.avg_pool2(z_l);
            }
            let flow_var = g.constant(flow_l.into_tensor());
            out.push(g.splat(feat, flow_var, Some(z_l), t));
        }
        Ok(out)
    }

    /// Per-level binary occlusion masks from the primary-side flow.
    pub fn binary_masks(&self, flow01: &FlowField, t: f64) -> Result<Vec<BinaryMask>> {
        (0..self.config.levels())
            .map(|l| {
                let flow_l = warp::rescale_flow(flow01, l)?;
                warp::binary_occlusion_mask(&flow_l, t, self.config.occlusion_eps)
            })
            .collect()
    }

    /// Coarse-to-fine deformable alignment of the second frame's pyramid.
    /// `offset` is the full-resolution alignment prior; each level refines it
    /// with gated per-tap deltas, and refinements propagate to finer levels.
    pub fn align_pyramid(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        offset: &FlowField,
        f1: &[Var],
        ft0: &[Var],
    ) -> Result<Vec<Var>> {
        let levels = self.config.levels();
        if f1.len() != levels || ft0.len() != levels {
            return Err(Error::dimension(format!(
                "align_pyramid expects {levels} levels, got {} / {}",
                f1.len(),
                ft0.len()
            )));
        }
        let taps = self.pam.taps;
        let mut aligned: Vec<Option<Var>> = vec![None; levels];
        let mut refine: Option<Var> = None;
        for l in (0..levels).rev() {
            let base_t = warp::rescale_flow(offset, l)?;
            let base_c = g.constant(base_t.into_tensor());
            let refine_in = match refine {
                // Offsets double when moving to a grid of half the spacing.
                Some(r) => {
                    let up = g.upsample2(r);
                    let up2 = g.mul_const(up, 2.0);
                    g.add(base_c, up2)
                }
                None => base_c,
            };
            let (h0, h1) = &self.pam.heads[l];
            let inp = g.concat_chan(refine_in, f1[l]);
            let inp = g.concat_chan(inp, ft0[l]);
            let hid = h0.apply_act(g, store, inp);
            let head = h1.apply(g, store, hid);
            let gates = {
                let logits = g.slice_chan(head, 2 * taps, 3 * taps);
                g.softmax_channels(logits)
            };
            let mut acc: Option<Var> = None;
            let mut delta_acc: Option<Var> = None;
            for k in 0..taps {
                let delta = g.slice_chan(head, 2 * k, 2 * k + 2);
                let pos = g.add(refine_in, delta);
                let samp = g.bilinear_sample(f1[l], pos);
                let gate = g.slice_chan(gates, k, k + 1);
                let term = g.mul_bcast_chan(samp, gate);
                acc = Some(match acc {
                    Some(a) => g.add(a, term),
                    None => term,
                });
                let wd = g.mul_bcast_chan(delta, gate);
                delta_acc = Some(match delta_acc {
                    Some(a) => g.add(a, wd),
                    None => wd,
                });
            }
            aligned[l] = acc;
            refine = Some(match delta_acc {
                Some(d) => g.add(refine_in, d),
                None => refine_in,
            });
        }
        Ok(aligned.into_iter().map(Option::unwrap).collect())
    }

    /// Dilation metric for one level: expansion of the binary mask, scaled by
    /// attention from the two aligned feature sets, projected to one channel.
    pub fn adm_project(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        level: usize,
        mask: &BinaryMask,
        ft0_l: Var,
        ft1_l: Var,
    ) -> Result<Var> {
        let p = &self.adm.levels[level];
        let (h, w, _) = g.value(ft0_l).dims3();
        if mask.size() != (h, w) {
            return Err(Error::dimension("mask does not match level features"));
        }
        if g.value(ft1_l).dims3() != g.value(ft0_l).dims3() {
            return Err(Error::dimension("aligned feature sets differ in shape"));
        }
        let m = g.constant(mask.tensor().clone());
        let e = p.ex0.apply(g, store, m);
        let e = g.leaky_relu(e, LEAKY_SLOPE);
        let e = p.ex1.apply(g, store, e);
        let e = g.leaky_relu(e, LEAKY_SLOPE);
        let e = p.ex2.apply(g, store, e);
        let feats = g.concat_chan(ft0_l, ft1_l);
        let att = match self.config.attention_norm {
            AttentionNorm::Sigmoid => p.se.apply(g, store, feats),
            AttentionNorm::Softmax => {
                let a = p.se.apply(g, store, feats);
                g.softmax_channels(a)
            }
        };
        let scaled = g.mul_chan_vec(e, att);
        Ok(p.proj.apply(g, store, scaled))
    }

    /// Quasi-binary mask: `tanh(|metric + alpha * noise| + beta * mask)`.
    /// Training requires a noise source; inference uses `alpha = 0`.
    pub fn quasi_binary_mask(
        &self,
        g: &mut Graph,
        mhat_l: Var,
        mask: &BinaryMask,
        training: bool,
        rng: Option<&mut Rng>,
    ) -> Result<Var> {
        let (h, w, c) = g.value(mhat_l).dims3();
        if c != 1 || mask.size() != (h, w) {
            return Err(Error::dimension("quasi-binary mask inputs do not line up"));
        }
        let inner = if training {
            let rng = rng.ok_or_else(|| {
                Error::validation("training-mode quasi-binary mask needs a noise source")
            })?;
            let noise = Tensor::uniform(&[h, w, 1], -1.0, 1.0, rng).map(|n| self.config.alpha * n);
            let nv = g.constant(noise);
            g.add(mhat_l, nv)
        } else {
            mhat_l
        };
        let mag = g.abs(inner);
        let salient = g.constant(mask.tensor().map(|m| self.config.beta * m));
        let arg = g.add(mag, salient);
        Ok(g.tanh(arg))
    }

    /// Convex per-pixel blend of the two aligned pyramids level by level.
    pub fn blend_pyramid(
        &self,
        g: &mut Graph,
        ft0: &[Var],
        ft1: &[Var],
        masks: &[Var],
    ) -> Result<Vec<Var>> {
        if ft0.len() != ft1.len() || ft0.len() != masks.len() {
            return Err(Error::dimension("blend level counts differ"));
        }
        let mut out = Vec::with_capacity(ft0.len());
        for ((&a, &b), &m) in ft0.iter().zip(ft1).zip(masks) {
            if g.value(a).dims3() != g.value(b).dims3() {
                return Err(Error::dimension("blend operands differ in shape"));
            }
            let keep = {
                let one = g.constant(Tensor::filled(&[1], 1.0));
                let inv = g.sub(one, m);
                g.mul_bcast_chan(a, inv)
            };
            let fill = g.mul_bcast_chan(b, m);
            out.push(g.add(keep, fill));
        }
        Ok(out)
    }

    /// Full blending stage: importance metric, forward-warped primary
    /// pyramid, aligned secondary pyramid, quasi-binary masks and the final
    /// blend.
    #[allow(clippy::too_many_arguments)]
    pub fn blend(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        t: f64,
        f0: &[Var],
        f1: &[Var],
        flow01: &FlowField,
        flow10: &FlowField,
        training: bool,
        mut rng: Option<&mut Rng>,
    ) -> Result<(Vec<Var>, AsbIntermediates)> {
        let importance = self.importance_metric(g, store, f0[0], f1[0], flow01)?;
        let ft0 = self.forward_warp_pyramid(g, f0, t, flow01, importance)?;
        let flow1t = time_scaled_back_flow(flow10, t);
        let offset = init_alignment_offset(&flow1t)?;
        let ft1 = self.align_pyramid(g, store, &offset, f1, &ft0)?;
        let binary_masks = self.binary_masks(flow01, t)?;
        let mut quasi = Vec::with_capacity(self.config.levels());
        for l in 0..self.config.levels() {
            let mhat = self.adm_project(g, store, l, &binary_masks[l], ft0[l], ft1[l])?;
            let qm = self.quasi_binary_mask(g, mhat, &binary_masks[l], training, rng.as_deref_mut())?;
            quasi.push(qm);
        }
        let blended = self.blend_pyramid(g, &ft0, &ft1, &quasi)?;
        Ok((
            blended,
            AsbIntermediates {
                importance,
                binary_masks,
                quasi_masks: quasi,
                warped_primary: ft0,
                aligned_secondary: ft1,
            },
        ))
    }
}

/// `F_{1->t} = (1 - t) * F_{1->0}`.
pub fn time_scaled_back_flow(flow10: &FlowField, t: f64) -> FlowField {
    flow10.scaled(1.0 - t)
}

/// Alignment prior: the backward flow average-splatted by itself, negated.
pub fn init_alignment_offset(flow1t: &FlowField) -> Result<FlowField> {
    let splatted = warp::forward_splat_avg(flow1t.tensor(), flow1t)?;
    Ok(FlowField::new_unchecked(splatted.map(|v| -v)))
}
