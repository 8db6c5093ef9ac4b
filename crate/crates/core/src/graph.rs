//! Reverse-mode autodiff tape over [`Tensor`]s.
//!
//! A [`Graph`] records every operation; [`Graph::backward`] walks the tape in
//! reverse and accumulates gradients. The heavy kernels live in [`crate::ops`]
//! so that the plain (non-differentiated) public operators and the tape share
//! one implementation.
//!
//! Elementwise `add`/`sub`/`mul` broadcast a single-element operand against
//! any shape, which is how learnable scalars enter the tape.

use crate::linalg;
use crate::ops::{self, SplatAux};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddConst(Var),
    MulConst(Var, f64),
    Neg(Var),
    Exp(Var),
    Tanh(Var),
    Abs(Var),
    Sigmoid(Var),
    LeakyRelu(Var, f64),
    Recip(Var),
    LogAbs(Var),
    SqrtGuard(Var),
    Sum(Var),
    SumChannels(Var),
    MulBcastChan(Var, Var),
    DivBcastChan(Var, Var),
    MulChanVec(Var, Var),
    AddChanVec(Var, Var),
    ConcatChan(Var, Var),
    SliceChan(Var, usize, usize),
    Conv2d {
        x: Var,
        w: Var,
        stride: usize,
        dilation: usize,
    },
    ChannelMix(Var, Var),
    MatInverse(Var),
    LogAbsDet(Var),
    Squeeze2(Var),
    Unsqueeze2(Var),
    AvgPool2(Var),
    Upsample2(Var),
    GlobalAvgPool(Var),
    BilinearSample {
        src: Var,
        flow: Var,
    },
    Splat {
        src: Var,
        flow: Var,
        z: Option<Var>,
        t: f64,
        aux: SplatAux,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    /// (param id, leaf var) pairs, used to collect parameter gradients.
    param_leaves: Vec<(ParamId, Var)>,
}

/// Per-node gradients produced by [`Graph::backward`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.by_node[v.0].as_ref()
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf with no gradient destination (inputs, frozen data).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    /// Leaf bound to a parameter; its gradient is collected by
    /// [`Graph::param_gradients`].
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let v = self.push(store.get(id).clone(), Op::Leaf);
        self.param_leaves.push((id, v));
        v
    }

    // -- elementwise ------------------------------------------------------

    fn broadcast_zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
        if a.shape() == b.shape() {
            let data = a
                .data()
                .iter()
                .zip(b.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::from_vec(a.shape(), data)
        } else if b.is_scalar() {
            let s = b.scalar_value();
            a.map(|x| f(x, s))
        } else if a.is_scalar() {
            let s = a.scalar_value();
            b.map(|y| f(s, y))
        } else {
            panic!(
                "shape mismatch in elementwise op: {:?} vs {:?}",
                a.shape(),
                b.shape()
            );
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = Self::broadcast_zip(self.value(a), self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = Self::broadcast_zip(self.value(a), self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = Self::broadcast_zip(self.value(a), self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    pub fn add_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x + k);
        self.push(v, Op::AddConst(a))
    }

    pub fn mul_const(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a).map(|x| x * k);
        self.push(v, Op::MulConst(a, k))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(v, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::abs);
        self.push(v, Op::Abs(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(v, Op::Sigmoid(a))
    }

    pub fn leaky_relu(&mut self, a: Var, alpha: f64) -> Var {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { alpha * x });
        self.push(v, Op::LeakyRelu(a, alpha))
    }

    pub fn recip(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| 1.0 / x);
        self.push(v, Op::Recip(a))
    }

    /// `ln |x|`; gradient `1/x`.
    pub fn log_abs(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.abs().ln());
        self.push(v, Op::LogAbs(a))
    }

    /// `sqrt(max(x, 0))` with a guarded gradient at zero.
    pub fn sqrt_guard(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0).sqrt());
        self.push(v, Op::SqrtGuard(a))
    }

    // -- reductions / broadcasts ------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(v, Op::Sum(a))
    }

    /// `[h, w, c] -> [h, w, 1]` channel sum.
    pub fn sum_channels(&mut self, a: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        let ad = self.value(a).data();
        let mut out = vec![0.0; h * w];
        for p in 0..h * w {
            out[p] = ad[p * c..(p + 1) * c].iter().sum();
        }
        let v = Tensor::from_vec(&[h, w, 1], out);
        self.push(v, Op::SumChannels(a))
    }

    /// `[h, w, c] * [h, w, 1]`, mask broadcast across channels.
    pub fn mul_bcast_chan(&mut self, a: Var, m: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        assert_eq!(self.value(m).dims3(), (h, w, 1));
        let ad = self.value(a).data();
        let md = self.value(m).data();
        let mut out = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                out[p * c + ch] = ad[p * c + ch] * md[p];
            }
        }
        let v = Tensor::from_vec(&[h, w, c], out);
        self.push(v, Op::MulBcastChan(a, m))
    }

    /// `[h, w, c] / [h, w, 1]`.
    pub fn div_bcast_chan(&mut self, a: Var, d: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        assert_eq!(self.value(d).dims3(), (h, w, 1));
        let ad = self.value(a).data();
        let dd = self.value(d).data();
        let mut out = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                out[p * c + ch] = ad[p * c + ch] / dd[p];
            }
        }
        let v = Tensor::from_vec(&[h, w, c], out);
        self.push(v, Op::DivBcastChan(a, d))
    }

    /// `[h, w, c] * [c]` or `[h, w, c] * [1, 1, c]` per-channel scale.
    pub fn mul_chan_vec(&mut self, a: Var, s: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        assert_eq!(self.value(s).numel(), c);
        let ad = self.value(a).data();
        let sd = self.value(s).data();
        let mut out = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                out[p * c + ch] = ad[p * c + ch] * sd[ch];
            }
        }
        let v = Tensor::from_vec(&[h, w, c], out);
        self.push(v, Op::MulChanVec(a, s))
    }

    /// `[h, w, c] + [c]` per-channel bias.
    pub fn add_chan_vec(&mut self, a: Var, b: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        assert_eq!(self.value(b).numel(), c);
        let ad = self.value(a).data();
        let bd = self.value(b).data();
        let mut out = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                out[p * c + ch] = ad[p * c + ch] + bd[ch];
            }
        }
        let v = Tensor::from_vec(&[h, w, c], out);
        self.push(v, Op::AddChanVec(a, b))
    }

    pub fn concat_chan(&mut self, a: Var, b: Var) -> Var {
        let v = ops::concat_channels(self.value(a), self.value(b));
        self.push(v, Op::ConcatChan(a, b))
    }

    pub fn slice_chan(&mut self, a: Var, lo: usize, hi: usize) -> Var {
        let v = ops::slice_channels(self.value(a), lo, hi);
        self.push(v, Op::SliceChan(a, lo, hi))
    }

    // -- structured ops ----------------------------------------------------

    pub fn conv2d(&mut self, x: Var, w: Var, stride: usize, dilation: usize) -> Var {
        let v = ops::conv2d_fwd(self.value(x), self.value(w), stride, dilation);
        self.push(
            v,
            Op::Conv2d {
                x,
                w,
                stride,
                dilation,
            },
        )
    }

    pub fn channel_mix(&mut self, x: Var, m: Var) -> Var {
        let v = ops::channel_mix_fwd(self.value(x), self.value(m));
        self.push(v, Op::ChannelMix(x, m))
    }

    pub fn mat_inverse(&mut self, m: Var) -> Var {
        let v = linalg::inverse(self.value(m)).expect("singular matrix in mat_inverse");
        self.push(v, Op::MatInverse(m))
    }

    pub fn log_abs_det(&mut self, m: Var) -> Var {
        let v = Tensor::scalar(linalg::log_abs_det(self.value(m)).expect("singular matrix"));
        self.push(v, Op::LogAbsDet(m))
    }

    pub fn squeeze2(&mut self, a: Var) -> Var {
        let v = ops::squeeze2_fwd(self.value(a));
        self.push(v, Op::Squeeze2(a))
    }

    pub fn unsqueeze2(&mut self, a: Var) -> Var {
        let v = ops::unsqueeze2_fwd(self.value(a));
        self.push(v, Op::Unsqueeze2(a))
    }

    pub fn avg_pool2(&mut self, a: Var) -> Var {
        let v = ops::avg_pool2_fwd(self.value(a));
        self.push(v, Op::AvgPool2(a))
    }

    pub fn upsample2(&mut self, a: Var) -> Var {
        let v = ops::upsample2_fwd(self.value(a));
        self.push(v, Op::Upsample2(a))
    }

    pub fn global_avg_pool(&mut self, a: Var) -> Var {
        let v = ops::global_avg_pool_fwd(self.value(a));
        self.push(v, Op::GlobalAvgPool(a))
    }

    pub fn bilinear_sample(&mut self, src: Var, flow: Var) -> Var {
        let v = ops::bilinear_sample_fwd(self.value(src), self.value(flow));
        self.push(v, Op::BilinearSample { src, flow })
    }

    /// Forward splat of `src` by `t * flow`; `z` enables softmax weighting.
    pub fn splat(&mut self, src: Var, flow: Var, z: Option<Var>, t: f64) -> Var {
        let (v, aux) = ops::splat_fwd(
            self.value(src),
            self.value(flow),
            z.map(|z| self.value(z)),
            t,
        );
        self.push(v, Op::Splat { src, flow, z, t, aux })
    }

    // -- composite helpers --------------------------------------------------

    /// Per-pixel softmax over channels with a detached max shift.
    pub fn softmax_channels(&mut self, a: Var) -> Var {
        let (h, w, c) = self.value(a).dims3();
        let ad = self.value(a).data();
        let mut mx = vec![f64::NEG_INFINITY; h * w];
        for p in 0..h * w {
            for ch in 0..c {
                mx[p] = mx[p].max(ad[p * c + ch]);
            }
        }
        let mut mx3 = vec![0.0; h * w * c];
        for p in 0..h * w {
            for ch in 0..c {
                mx3[p * c + ch] = mx[p];
            }
        }
        // The shift is constant w.r.t. the inputs; softmax is exactly
        // invariant to it, so detaching it leaves gradients unchanged.
        let shift = self.constant(Tensor::from_vec(&[h, w, c], mx3));
        let centered = self.sub(a, shift);
        let e = self.exp(centered);
        let denom = self.sum_channels(e);
        self.div_bcast_chan(e, denom)
    }

    /// Mean of all elements as a scalar node.
    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.value(a).numel() as f64;
        let s = self.sum(a);
        self.mul_const(s, 1.0 / n)
    }

    // -- backward -----------------------------------------------------------

    fn acc(grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    /// Gradient of the broadcast side of an elementwise op: collapse to a
    /// scalar by summation when the operand was a single element.
    fn acc_bcast(grads: &mut [Option<Tensor>], v: Var, v_shape_scalar: bool, delta: Tensor) {
        if v_shape_scalar && delta.numel() != 1 {
            Self::acc(grads, v, Tensor::scalar(delta.sum()));
        } else {
            Self::acc(grads, v, delta);
        }
    }

    /// Reverse pass from a scalar seed node.
    pub fn backward(&self, seed: Var) -> Gradients {
        assert!(
            self.value(seed).is_scalar(),
            "backward seed must be scalar, got {:?}",
            self.value(seed).shape()
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[seed.0] = Some(Tensor::scalar(1.0));
        for i in (0..=seed.0).rev() {
            let g = match &grads[i] {
                Some(g) => g.clone(),
                None => continue,
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Add(a, b) => {
                    let (sa, sb) = (self.value(*a).is_scalar(), self.value(*b).is_scalar());
                    Self::acc_bcast(&mut grads, *a, sa && !g.is_scalar(), g.clone());
                    Self::acc_bcast(&mut grads, *b, sb && !g.is_scalar(), g.clone());
                }
                Op::Sub(a, b) => {
                    let (sa, sb) = (self.value(*a).is_scalar(), self.value(*b).is_scalar());
                    Self::acc_bcast(&mut grads, *a, sa && !g.is_scalar(), g.clone());
                    Self::acc_bcast(&mut grads, *b, sb && !g.is_scalar(), g.map(|x| -x));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let da = Self::broadcast_zip(&g, bv, |x, y| x * y);
                    let db = Self::broadcast_zip(&g, av, |x, y| x * y);
                    Self::acc_bcast(&mut grads, *a, av.is_scalar() && !da.is_scalar(), da);
                    Self::acc_bcast(&mut grads, *b, bv.is_scalar() && !db.is_scalar(), db);
                }
                Op::AddConst(a) => Self::acc(&mut grads, *a, g),
                Op::MulConst(a, k) => {
                    let k = *k;
                    Self::acc(&mut grads, *a, g.map(|x| x * k));
                }
                Op::Neg(a) => Self::acc(&mut grads, *a, g.map(|x| -x)),
                Op::Exp(a) => {
                    let out = &node.value;
                    let delta = Tensor::from_vec(
                        out.shape(),
                        g.data().iter().zip(out.data()).map(|(&g, &y)| g * y).collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::Tanh(a) => {
                    let out = &node.value;
                    let delta = Tensor::from_vec(
                        out.shape(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(&g, &y)| g * (1.0 - y * y))
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::Abs(a) => {
                    let xv = self.value(*a);
                    let delta = Tensor::from_vec(
                        xv.shape(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&g, &x)| g * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::Sigmoid(a) => {
                    let out = &node.value;
                    let delta = Tensor::from_vec(
                        out.shape(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(&g, &y)| g * y * (1.0 - y))
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::LeakyRelu(a, alpha) => {
                    let alpha = *alpha;
                    let xv = self.value(*a);
                    let delta = Tensor::from_vec(
                        xv.shape(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&g, &x)| g * if x > 0.0 { 1.0 } else { alpha })
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::Recip(a) => {
                    let out = &node.value;
                    let delta = Tensor::from_vec(
                        out.shape(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(&g, &y)| -g * y * y)
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::LogAbs(a) => {
                    let xv = self.value(*a);
                    let delta = Tensor::from_vec(
                        xv.shape(),
                        g.data()
                            .iter()
                            .zip(xv.data())
                            .map(|(&g, &x)| g / x)
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::SqrtGuard(a) => {
                    let out = &node.value;
                    let delta = Tensor::from_vec(
                        out.shape(),
                        g.data()
                            .iter()
                            .zip(out.data())
                            .map(|(&g, &y)| g * 0.5 / y.max(1e-12))
                            .collect(),
                    );
                    Self::acc(&mut grads, *a, delta);
                }
                Op::Sum(a) => {
                    let gs = g.scalar_value();
                    let delta = Tensor::filled(self.value(*a).shape(), gs);
                    Self::acc(&mut grads, *a, delta);
                }
                Op::SumChannels(a) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let mut delta = vec![0.0; h * w * c];
                    for p in 0..h * w {
                        for ch in 0..c {
                            delta[p * c + ch] = g.data()[p];
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], delta));
                }
                Op::MulBcastChan(a, m) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let av = self.value(*a).data();
                    let mv = self.value(*m).data();
                    let mut da = vec![0.0; h * w * c];
                    let mut dm = vec![0.0; h * w];
                    for p in 0..h * w {
                        for ch in 0..c {
                            da[p * c + ch] = g.data()[p * c + ch] * mv[p];
                            dm[p] += g.data()[p * c + ch] * av[p * c + ch];
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], da));
                    Self::acc(&mut grads, *m, Tensor::from_vec(&[h, w, 1], dm));
                }
                Op::DivBcastChan(a, d) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let dv = self.value(*d).data();
                    let out = node.value.data();
                    let mut da = vec![0.0; h * w * c];
                    let mut dd = vec![0.0; h * w];
                    for p in 0..h * w {
                        for ch in 0..c {
                            let gq = g.data()[p * c + ch];
                            da[p * c + ch] = gq / dv[p];
                            dd[p] -= gq * out[p * c + ch] / dv[p];
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], da));
                    Self::acc(&mut grads, *d, Tensor::from_vec(&[h, w, 1], dd));
                }
                Op::MulChanVec(a, s) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let av = self.value(*a).data();
                    let sv = self.value(*s).data();
                    let mut da = vec![0.0; h * w * c];
                    let mut ds = vec![0.0; c];
                    for p in 0..h * w {
                        for ch in 0..c {
                            da[p * c + ch] = g.data()[p * c + ch] * sv[ch];
                            ds[ch] += g.data()[p * c + ch] * av[p * c + ch];
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], da));
                    Self::acc(
                        &mut grads,
                        *s,
                        Tensor::from_vec(self.value(*s).shape(), ds),
                    );
                }
                Op::AddChanVec(a, b) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let mut db = vec![0.0; c];
                    for p in 0..h * w {
                        for ch in 0..c {
                            db[ch] += g.data()[p * c + ch];
                        }
                    }
                    Self::acc(&mut grads, *a, g.clone());
                    Self::acc(
                        &mut grads,
                        *b,
                        Tensor::from_vec(self.value(*b).shape(), db),
                    );
                }
                Op::ConcatChan(a, b) => {
                    let (_, _, ca) = self.value(*a).dims3();
                    let (_, _, cb) = self.value(*b).dims3();
                    Self::acc(&mut grads, *a, ops::slice_channels(&g, 0, ca));
                    Self::acc(&mut grads, *b, ops::slice_channels(&g, ca, ca + cb));
                }
                Op::SliceChan(a, lo, _hi) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let (_, _, cn) = g.dims3();
                    let mut da = vec![0.0; h * w * c];
                    for p in 0..h * w {
                        for ch in 0..cn {
                            da[p * c + lo + ch] = g.data()[p * cn + ch];
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], da));
                }
                Op::Conv2d {
                    x,
                    w,
                    stride,
                    dilation,
                } => {
                    let xv = self.value(*x);
                    let wv = self.value(*w);
                    let mut dx = Tensor::zeros(xv.shape());
                    let mut dw = Tensor::zeros(wv.shape());
                    ops::conv2d_bwd_input(&g, wv, xv.dims3(), *stride, *dilation, &mut dx);
                    let (kh, kw, _, _) = wv.dims4();
                    ops::conv2d_bwd_weight(&g, xv, (kh, kw), *stride, *dilation, &mut dw);
                    Self::acc(&mut grads, *x, dx);
                    Self::acc(&mut grads, *w, dw);
                }
                Op::ChannelMix(x, m) => {
                    let xv = self.value(*x);
                    let mv = self.value(*m);
                    let mut dx = Tensor::zeros(xv.shape());
                    let mut dm = Tensor::zeros(mv.shape());
                    ops::channel_mix_bwd(&g, xv, mv, &mut dx, &mut dm);
                    Self::acc(&mut grads, *x, dx);
                    Self::acc(&mut grads, *m, dm);
                }
                Op::MatInverse(m) => {
                    // Y = X^-1  =>  dX = -Y^T G Y^T.
                    let y = &node.value;
                    let (n, _) = y.dims2();
                    let yt = {
                        let mut t = vec![0.0; n * n];
                        for i in 0..n {
                            for j in 0..n {
                                t[i * n + j] = y.data()[j * n + i];
                            }
                        }
                        Tensor::from_vec(&[n, n], t)
                    };
                    let tmp = linalg::matmul(&yt, &g);
                    let mut dm = linalg::matmul(&tmp, &yt);
                    dm.scale_in_place(-1.0);
                    Self::acc(&mut grads, *m, dm);
                }
                Op::LogAbsDet(m) => {
                    let mv = self.value(*m);
                    let inv = linalg::inverse(mv).expect("singular matrix in logdet backward");
                    let (n, _) = inv.dims2();
                    let gs = g.scalar_value();
                    let mut dm = vec![0.0; n * n];
                    for i in 0..n {
                        for j in 0..n {
                            dm[i * n + j] = gs * inv.data()[j * n + i];
                        }
                    }
                    Self::acc(&mut grads, *m, Tensor::from_vec(&[n, n], dm));
                }
                Op::Squeeze2(a) => {
                    Self::acc(&mut grads, *a, ops::unsqueeze2_fwd(&g));
                }
                Op::Unsqueeze2(a) => {
                    Self::acc(&mut grads, *a, ops::squeeze2_fwd(&g));
                }
                Op::AvgPool2(a) => {
                    let mut dx = Tensor::zeros(self.value(*a).shape());
                    ops::avg_pool2_bwd(&g, &mut dx);
                    Self::acc(&mut grads, *a, dx);
                }
                Op::Upsample2(a) => {
                    let mut dx = Tensor::zeros(self.value(*a).shape());
                    ops::upsample2_bwd(&g, &mut dx);
                    Self::acc(&mut grads, *a, dx);
                }
                Op::GlobalAvgPool(a) => {
                    let (h, w, c) = self.value(*a).dims3();
                    let inv = 1.0 / (h * w) as f64;
                    let mut da = vec![0.0; h * w * c];
                    for p in 0..h * w {
                        for ch in 0..c {
                            da[p * c + ch] = g.data()[ch] * inv;
                        }
                    }
                    Self::acc(&mut grads, *a, Tensor::from_vec(&[h, w, c], da));
                }
                Op::BilinearSample { src, flow } => {
                    let sv = self.value(*src);
                    let fv = self.value(*flow);
                    let mut dsrc = Tensor::zeros(sv.shape());
                    let mut dflow = Tensor::zeros(fv.shape());
                    ops::bilinear_sample_bwd(&g, sv, fv, &mut dsrc, &mut dflow);
                    Self::acc(&mut grads, *src, dsrc);
                    Self::acc(&mut grads, *flow, dflow);
                }
                Op::Splat { src, flow, z, t, aux } => {
                    let sv = self.value(*src);
                    let fv = self.value(*flow);
                    let zv = z.map(|z| self.value(z));
                    let mut dsrc = Tensor::zeros(sv.shape());
                    let mut dflow = Tensor::zeros(fv.shape());
                    let mut dz = z.map(|z| Tensor::zeros(self.value(z).shape()));
                    ops::splat_bwd(
                        &g,
                        &node.value,
                        aux,
                        sv,
                        fv,
                        zv,
                        *t,
                        &mut dsrc,
                        &mut dflow,
                        dz.as_mut(),
                    );
                    Self::acc(&mut grads, *src, dsrc);
                    Self::acc(&mut grads, *flow, dflow);
                    if let (Some(z), Some(dz)) = (z, dz) {
                        Self::acc(&mut grads, *z, dz);
                    }
                }
            }
        }
        Gradients { by_node: grads }
    }

    /// Collect per-parameter gradients (indexed by raw param id); parameters
    /// appearing in several leaves accumulate.
    pub fn param_gradients(&self, grads: &Gradients, n_params: usize) -> Vec<Option<Tensor>> {
        let mut out: Vec<Option<Tensor>> = (0..n_params).map(|_| None).collect();
        for (id, var) in &self.param_leaves {
            if let Some(g) = grads.get(*var) {
                match &mut out[id.index()] {
                    Some(t) => t.add_assign(g),
                    slot @ None => *slot = Some(g.clone()),
                }
            }
        }
        out
    }
}
