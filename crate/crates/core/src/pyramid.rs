//! Feature encoder: per level two 3x3 convolutions with a pointwise
//! nonlinearity, stride-2 downsampling between levels. Level `l` of an
//! `h x w` input is `h/2^l x w/2^l` with `channel_plan[l]` channels.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::layers::Conv;
use crate::params::ParamStore;
use crate::rng::Rng;
use crate::types::{FeaturePyramid, Image};

pub const DEFAULT_CHANNEL_PLAN: [usize; 3] = [32, 64, 96];

#[derive(Debug, Clone)]
pub struct EncoderParams {
    channel_plan: Vec<usize>,
    levels: Vec<(Conv, Conv)>,
}

impl EncoderParams {
    /// Registers encoder weights; reproducible for a fixed seed. The first
    /// three channels of every level start as a pass-through of the (down-
    /// sampled) input image, so the pyramid carries photometric content from
    /// the first step; the remaining channels start at fan-in scale.
    pub fn init(store: &mut ParamStore, channel_plan: &[usize], seed: u64) -> Result<Self> {
        if channel_plan.is_empty() {
            return Err(Error::validation("channel plan must not be empty"));
        }
        let mut rng = Rng::from_seed(seed);
        let mut levels = Vec::with_capacity(channel_plan.len());
        let mut c_in = 3;
        for (l, &c) in channel_plan.iter().enumerate() {
            let stride = if l == 0 { 1 } else { 2 };
            let conv_a = Conv::new(store, &format!("enc.l{l}.c0"), 3, c_in, c, stride, &mut rng);
            let conv_b = Conv::new(store, &format!("enc.l{l}.c1"), 3, c, c, 1, &mut rng);
            if c >= 3 {
                for conv in [&conv_a, &conv_b] {
                    let w = store.get_mut(conv.w);
                    let (kh, kw, ci, co) = w.dims4();
                    let data = w.data_mut();
                    // Output channels 0..3 read the centre tap of input
                    // channels 0..3 with weight 1 (inputs are non-negative,
                    // so the nonlinearity is exact identity there).
                    for c_out in 0..3 {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                for c_im in 0..ci {
                                    let v = if ky == kh / 2 && kx == kw / 2 && c_im == c_out {
                                        1.0
                                    } else {
                                        0.0
                                    };
                                    data[((ky * kw + kx) * ci + c_im) * co + c_out] = v;
                                }
                            }
                        }
                    }
                }
            }
            levels.push((conv_a, conv_b));
            c_in = c;
        }
        Ok(EncoderParams {
            channel_plan: channel_plan.to_vec(),
            levels,
        })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn channel_plan(&self) -> &[usize] {
        &self.channel_plan
    }

    fn check_dims(&self, h: usize, w: usize) -> Result<()> {
        let f = 1 << (self.levels.len() - 1);
        if h % f != 0 || w % f != 0 {
            return Err(Error::dimension(format!(
                "input {h}x{w} not divisible by 2^{} required for {} levels",
                self.levels.len() - 1,
                self.levels.len()
            )));
        }
        Ok(())
    }

    /// Tape forward; returns one feature var per level.
    pub fn encode_tape(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        image: Var,
    ) -> Result<Vec<Var>> {
        let (h, w, _) = g.value(image).dims3();
        self.check_dims(h, w)?;
        let mut feats = Vec::with_capacity(self.levels.len());
        let mut x = image;
        for (conv_a, conv_b) in &self.levels {
            let y = conv_a.apply_act(g, store, x);
            let y = conv_b.apply_act(g, store, y);
            feats.push(y);
            x = y;
        }
        Ok(feats)
    }

    /// Value-level encode (runs a throwaway tape internally).
    pub fn encode(&self, store: &ParamStore, image: &Image) -> Result<FeaturePyramid> {
        let mut g = Graph::new();
        let x = g.constant(image.tensor().clone());
        let feats = self.encode_tape(&mut g, store, x)?;
        FeaturePyramid::new(feats.into_iter().map(|v| g.value(v).clone()).collect())
    }
}
