//! Small reusable building blocks on top of the tape: convolution with
//! optional bias, and squeeze-excitation channel attention.

use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};
use crate::rng::Rng;

/// Negative slope of the pointwise nonlinearity used throughout.
pub const LEAKY_SLOPE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct Conv {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub stride: usize,
    pub dilation: usize,
}

impl Conv {
    /// Fan-in initialized conv with bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        k: usize,
        ci: usize,
        co: usize,
        stride: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.conv_weight(format!("{name}.w"), k, k, ci, co, rng);
        let b = store.bias(format!("{name}.b"), co);
        Conv {
            w,
            b: Some(b),
            stride,
            dilation: 1,
        }
    }

    /// Bias-free conv (support-preserving stacks).
    pub fn new_bias_free(
        store: &mut ParamStore,
        name: &str,
        k: usize,
        ci: usize,
        co: usize,
        dilation: usize,
        rng: &mut Rng,
    ) -> Self {
        let w = store.conv_weight(format!("{name}.w"), k, k, ci, co, rng);
        Conv {
            w,
            b: None,
            stride: 1,
            dilation,
        }
    }

    /// Zero-initialized conv with bias (residual heads start as identity).
    pub fn new_zero(store: &mut ParamStore, name: &str, k: usize, ci: usize, co: usize) -> Self {
        let w = store.conv_weight_zero(format!("{name}.w"), k, k, ci, co);
        let b = store.bias(format!("{name}.b"), co);
        Conv {
            w,
            b: Some(b),
            stride: 1,
            dilation: 1,
        }
    }

    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.w);
        let y = g.conv2d(x, w, self.stride, self.dilation);
        match self.b {
            Some(b) => {
                let b = g.param(store, b);
                g.add_chan_vec(y, b)
            }
            None => y,
        }
    }

    pub fn apply_act(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let y = self.apply(g, store, x);
        g.leaky_relu(y, LEAKY_SLOPE)
    }
}

/// Squeeze-and-excitation: global average pool, two fully connected layers,
/// sigmoid gate. Produces `[1, 1, c_out]` channel weights in (0, 1).
#[derive(Debug, Clone)]
pub struct SqueezeExcite {
    fc1: ParamId,
    fc1_b: ParamId,
    fc2: ParamId,
    fc2_b: ParamId,
}

impl SqueezeExcite {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        ci: usize,
        hidden: usize,
        co: usize,
        rng: &mut Rng,
    ) -> Self {
        SqueezeExcite {
            fc1: store.matrix(format!("{name}.fc1.w"), hidden, ci, rng),
            fc1_b: store.bias(format!("{name}.fc1.b"), hidden),
            fc2: store.matrix(format!("{name}.fc2.w"), co, hidden, rng),
            fc2_b: store.bias(format!("{name}.fc2.b"), co),
        }
    }

    /// Sigmoid-normalized attention weights from pooled input features.
    pub fn apply(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let pooled = g.global_avg_pool(x);
        let w1 = g.param(store, self.fc1);
        let h = g.channel_mix(pooled, w1);
        let b1 = g.param(store, self.fc1_b);
        let h = g.add_chan_vec(h, b1);
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let w2 = g.param(store, self.fc2);
        let a = g.channel_mix(h, w2);
        let b2 = g.param(store, self.fc2_b);
        let a = g.add_chan_vec(a, b2);
        g.sigmoid(a)
    }
}
