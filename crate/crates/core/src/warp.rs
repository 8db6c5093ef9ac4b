//! Warping operators: differentiable backward warping, forward splatting
//! (average and softmax), flow-pyramid rescaling and binary occlusion-mask
//! extraction.
//!
//! These are the plain (value-level) entry points with full input validation;
//! the same kernels run inside the autodiff tape via [`crate::graph::Graph`].
//! All functions are pure; out-of-frame backward taps read zero and
//! out-of-frame forward deposits are dropped.

use crate::error::{Error, Result};
use crate::ops;
use crate::tensor::Tensor;
use crate::types::{BinaryMask, FlowField};

/// Default occlusion threshold on the splatted density.
pub const OCCLUSION_EPS: f64 = 0.5;

fn check_finite(name: &str, t: &Tensor) -> Result<()> {
    if t.all_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} contains non-finite values")))
    }
}

fn check_spatial(src: &Tensor, flow: &FlowField) -> Result<()> {
    let (h, w, _) = src.dims3();
    if (h, w) != flow.size() {
        return Err(Error::dimension(format!(
            "src is {h}x{w} but flow is {}x{}",
            flow.size().0,
            flow.size().1
        )));
    }
    Ok(())
}

/// `out(x) = bilinear sample of src at x + flow(x)`; zero padding.
pub fn backward_warp(src: &Tensor, flow: &FlowField) -> Result<Tensor> {
    check_spatial(src, flow)?;
    check_finite("src", src)?;
    check_finite("flow", flow.tensor())?;
    Ok(ops::bilinear_sample_fwd(src, flow.tensor()))
}

/// Average splatting: deposits normalized by accumulated weight; cells with
/// weight below the division guard output zero.
pub fn forward_splat_avg(src: &Tensor, flow: &FlowField) -> Result<Tensor> {
    check_spatial(src, flow)?;
    check_finite("src", src)?;
    check_finite("flow", flow.tensor())?;
    Ok(ops::splat_fwd(src, flow.tensor(), None, 1.0).0)
}

/// Softmax splatting: deposits weighted by `exp(z)` at positions
/// `x + t * flow(x)`; the exponent is shifted by the per-target max, which
/// cancels in the normalized output.
pub fn forward_splat_softmax(src: &Tensor, t: f64, flow: &FlowField, z: &Tensor) -> Result<Tensor> {
    check_spatial(src, flow)?;
    let (h, w, _) = src.dims3();
    let (zh, zw, zc) = z.dims3();
    if (zh, zw, zc) != (h, w, 1) {
        return Err(Error::dimension(format!(
            "importance metric must be {h}x{w}x1, got {zh}x{zw}x{zc}"
        )));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::validation(format!("t must lie in [0, 1], got {t}")));
    }
    check_finite("src", src)?;
    check_finite("flow", flow.tensor())?;
    check_finite("z", z)?;
    Ok(ops::splat_fwd(src, flow.tensor(), Some(z), t).0)
}

/// Spatial downscale by `2^level` via area averaging, with displacement
/// values scaled by `2^-level`.
pub fn rescale_flow(flow: &FlowField, level: usize) -> Result<FlowField> {
    check_finite("flow", flow.tensor())?;
    let (h, w) = flow.size();
    if h % (1 << level) != 0 || w % (1 << level) != 0 {
        return Err(Error::dimension(format!(
            "flow size {h}x{w} not divisible by 2^{level}"
        )));
    }
    let mut t = flow.tensor().clone();
    for _ in 0..level {
        t = ops::avg_pool2_fwd(&t);
        t.scale_in_place(0.5);
    }
    Ok(FlowField::new_unchecked(t))
}

/// Area-average downscale by `2^level` without value scaling. Used for the
/// importance metric, which is a score rather than a displacement.
pub fn rescale_metric(z: &Tensor, level: usize) -> Result<Tensor> {
    check_finite("metric", z)?;
    let (h, w, _) = z.dims3();
    if h % (1 << level) != 0 || w % (1 << level) != 0 {
        return Err(Error::dimension(format!(
            "metric size {h}x{w} not divisible by 2^{level}"
        )));
    }
    let mut t = z.clone();
    for _ in 0..level {
        t = ops::avg_pool2_fwd(&t);
    }
    Ok(t)
}

/// Raw deposit density of an all-ones field splatted by `t * flow`
/// (un-normalized weight sum per cell).
pub fn splat_density(flow: &FlowField, t: f64) -> Tensor {
    ops::splat_density(flow.tensor(), t)
}

/// Occlusion test: a pixel is occluded (mask 1) iff the un-normalized
/// deposit density of ones splatted by `t * flow` falls strictly below `eps`.
pub fn binary_occlusion_mask(flow01_l: &FlowField, t: f64, eps: f64) -> Result<BinaryMask> {
    if eps <= 0.0 {
        return Err(Error::validation(format!("eps must be positive, got {eps}")));
    }
    check_finite("flow", flow01_l.tensor())?;
    let density = ops::splat_density(flow01_l.tensor(), t);
    let mask = density.map(|d| if d < eps { 1.0 } else { 0.0 });
    BinaryMask::new(mask)
}
