//! Plain numerical kernels shared by the autodiff tape and the public
//! operator APIs. Everything here is a pure function over [`Tensor`]s; the
//! backward variants take the upstream gradient and accumulate into the
//! operand gradients.
//!
//! Layout conventions: feature maps `[h, w, c]` (channel fastest), conv
//! weights `[kh, kw, c_in, c_out]`, mixing matrices `[c_out, c_in]`.

use crate::tensor::Tensor;

/// Division guard for splat normalization: cells whose accumulated weight is
/// at most this yield zero output (and zero gradient).
pub const SPLAT_WEIGHT_EPS: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Convolution (same padding)
// ---------------------------------------------------------------------------

#[inline]
fn conv_out_dim(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

pub fn conv2d_fwd(x: &Tensor, w: &Tensor, stride: usize, dilation: usize) -> Tensor {
    let (h, wd, ci) = x.dims3();
    let (kh, kw, wci, co) = w.dims4();
    assert_eq!(ci, wci, "conv input channels {ci} vs weight {wci}");
    let oh = conv_out_dim(h, stride);
    let ow = conv_out_dim(wd, stride);
    let pad_y = ((kh - 1) * dilation) / 2;
    let pad_x = ((kw - 1) * dilation) / 2;
    let xd = x.data();
    let wdta = w.data();
    let mut out = vec![0.0; oh * ow * co];
    for oy in 0..oh {
        for ox in 0..ow {
            let acc = &mut out[(oy * ow + ox) * co..(oy * ow + ox) * co + co];
            for ky in 0..kh {
                let iy = (oy * stride + ky * dilation) as isize - pad_y as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx * dilation) as isize - pad_x as isize;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let xrow = &xd[((iy as usize) * wd + ix as usize) * ci..][..ci];
                    let wbase = (ky * kw + kx) * ci * co;
                    for (c_in, &xv) in xrow.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let wrow = &wdta[wbase + c_in * co..][..co];
                        for c_out in 0..co {
                            acc[c_out] += xv * wrow[c_out];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[oh, ow, co], out)
}

pub fn conv2d_bwd_input(
    gout: &Tensor,
    w: &Tensor,
    in_shape: (usize, usize, usize),
    stride: usize,
    dilation: usize,
    dx: &mut Tensor,
) {
    let (h, wd, ci) = in_shape;
    let (kh, kw, _, co) = w.dims4();
    let (oh, ow, _) = gout.dims3();
    let pad_y = ((kh - 1) * dilation) / 2;
    let pad_x = ((kw - 1) * dilation) / 2;
    let gd = gout.data();
    let wdta = w.data();
    let dxd = dx.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let grow = &gd[(oy * ow + ox) * co..][..co];
            for ky in 0..kh {
                let iy = (oy * stride + ky * dilation) as isize - pad_y as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx * dilation) as isize - pad_x as isize;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let dxrow = &mut dxd[((iy as usize) * wd + ix as usize) * ci..][..ci];
                    let wbase = (ky * kw + kx) * ci * co;
                    for (c_in, dxv) in dxrow.iter_mut().enumerate() {
                        let wrow = &wdta[wbase + c_in * co..][..co];
                        let mut s = 0.0;
                        for c_out in 0..co {
                            s += wrow[c_out] * grow[c_out];
                        }
                        *dxv += s;
                    }
                }
            }
        }
    }
}

pub fn conv2d_bwd_weight(
    gout: &Tensor,
    x: &Tensor,
    kernel: (usize, usize),
    stride: usize,
    dilation: usize,
    dw: &mut Tensor,
) {
    let (h, wd, ci) = x.dims3();
    let (kh, kw) = kernel;
    let (oh, ow, co) = gout.dims3();
    let pad_y = ((kh - 1) * dilation) / 2;
    let pad_x = ((kw - 1) * dilation) / 2;
    let gd = gout.data();
    let xd = x.data();
    let dwd = dw.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let grow = &gd[(oy * ow + ox) * co..][..co];
            for ky in 0..kh {
                let iy = (oy * stride + ky * dilation) as isize - pad_y as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx * dilation) as isize - pad_x as isize;
                    if ix < 0 || ix >= wd as isize {
                        continue;
                    }
                    let xrow = &xd[((iy as usize) * wd + ix as usize) * ci..][..ci];
                    let wbase = (ky * kw + kx) * ci * co;
                    for (c_in, &xv) in xrow.iter().enumerate() {
                        if xv == 0.0 {
                            continue;
                        }
                        let dwrow = &mut dwd[wbase + c_in * co..][..co];
                        for c_out in 0..co {
                            dwrow[c_out] += xv * grow[c_out];
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Channel mixing (per-pixel matrix multiply)
// ---------------------------------------------------------------------------

pub fn channel_mix_fwd(x: &Tensor, m: &Tensor) -> Tensor {
    let (h, w, ci) = x.dims3();
    let (co, mci) = m.dims2();
    assert_eq!(ci, mci, "mix input channels {ci} vs matrix {mci}");
    let xd = x.data();
    let md = m.data();
    let mut out = vec![0.0; h * w * co];
    for p in 0..h * w {
        let xrow = &xd[p * ci..][..ci];
        let orow = &mut out[p * co..][..co];
        for (c_out, ov) in orow.iter_mut().enumerate() {
            let mrow = &md[c_out * ci..][..ci];
            let mut s = 0.0;
            for c_in in 0..ci {
                s += xrow[c_in] * mrow[c_in];
            }
            *ov = s;
        }
    }
    Tensor::from_vec(&[h, w, co], out)
}

pub fn channel_mix_bwd(
    gout: &Tensor,
    x: &Tensor,
    m: &Tensor,
    dx: &mut Tensor,
    dm: &mut Tensor,
) {
    let (h, w, ci) = x.dims3();
    let (co, _) = m.dims2();
    let gd = gout.data();
    let xd = x.data();
    let md = m.data();
    let dxd = dx.data_mut();
    let dmd = dm.data_mut();
    for p in 0..h * w {
        let grow = &gd[p * co..][..co];
        let xrow = &xd[p * ci..][..ci];
        let dxrow = &mut dxd[p * ci..][..ci];
        for c_out in 0..co {
            let g = grow[c_out];
            if g == 0.0 {
                continue;
            }
            let mrow = &md[c_out * ci..][..ci];
            let dmrow = &mut dmd[c_out * ci..][..ci];
            for c_in in 0..ci {
                dxrow[c_in] += g * mrow[c_in];
                dmrow[c_in] += g * xrow[c_in];
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Resampling
// ---------------------------------------------------------------------------

/// 2x2 area average; spatial dims must be even.
pub fn avg_pool2_fwd(x: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3();
    assert!(h % 2 == 0 && w % 2 == 0, "avg_pool2 needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let orow = &mut out[(oy * ow + ox) * c..][..c];
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let xrow = &xd[((2 * oy + dy) * w + 2 * ox + dx) * c..][..c];
                for ch in 0..c {
                    orow[ch] += 0.25 * xrow[ch];
                }
            }
        }
    }
    Tensor::from_vec(&[oh, ow, c], out)
}

pub fn avg_pool2_bwd(gout: &Tensor, dx: &mut Tensor) {
    let (oh, ow, c) = gout.dims3();
    let (_, w, _) = dx.dims3();
    let gd = gout.data();
    let dxd = dx.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let grow = &gd[(oy * ow + ox) * c..][..c];
            for (dy, dxo) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let dxrow = &mut dxd[((2 * oy + dy) * w + 2 * ox + dxo) * c..][..c];
                for ch in 0..c {
                    dxrow[ch] += 0.25 * grow[ch];
                }
            }
        }
    }
}

/// Nearest-neighbour 2x upsampling.
pub fn upsample2_fwd(x: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3();
    let (oh, ow) = (h * 2, w * 2);
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let xrow = &xd[((oy / 2) * w + ox / 2) * c..][..c];
            out[(oy * ow + ox) * c..(oy * ow + ox) * c + c].copy_from_slice(xrow);
        }
    }
    Tensor::from_vec(&[oh, ow, c], out)
}

pub fn upsample2_bwd(gout: &Tensor, dx: &mut Tensor) {
    let (oh, ow, c) = gout.dims3();
    let (_, w, _) = dx.dims3();
    let gd = gout.data();
    let dxd = dx.data_mut();
    for oy in 0..oh {
        for ox in 0..ow {
            let grow = &gd[(oy * ow + ox) * c..][..c];
            let dxrow = &mut dxd[((oy / 2) * w + ox / 2) * c..][..c];
            for ch in 0..c {
                dxrow[ch] += grow[ch];
            }
        }
    }
}

/// Space-to-depth: `[h, w, c] -> [h/2, w/2, 4c]` with the 2x2 sub-position
/// as the slow sub-axis of the output channel (`c' = (dy*2+dx)*c + ch`).
pub fn squeeze2_fwd(x: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3();
    assert!(h % 2 == 0 && w % 2 == 0, "squeeze needs even dims, got {h}x{w}");
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = vec![0.0; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                let src = &xd[((2 * oy + dy) * w + 2 * ox + dx) * c..][..c];
                let dst = (oy * ow + ox) * 4 * c + k * c;
                out[dst..dst + c].copy_from_slice(src);
            }
        }
    }
    Tensor::from_vec(&[oh, ow, 4 * c], out)
}

/// Exact inverse of [`squeeze2_fwd`].
pub fn unsqueeze2_fwd(x: &Tensor) -> Tensor {
    let (h, w, c4) = x.dims3();
    assert!(c4 % 4 == 0, "unsqueeze needs channels divisible by 4, got {c4}");
    let c = c4 / 4;
    let (oh, ow) = (h * 2, w * 2);
    let xd = x.data();
    let mut out = vec![0.0; oh * ow * c];
    for y in 0..h {
        for x0 in 0..w {
            for (k, (dy, dx)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
                let src = &xd[(y * w + x0) * c4 + k * c..][..c];
                let dst = ((2 * y + dy) * ow + 2 * x0 + dx) * c;
                out[dst..dst + c].copy_from_slice(src);
            }
        }
    }
    Tensor::from_vec(&[oh, ow, c], out)
}

/// `[h, w, c] -> [1, 1, c]` spatial mean.
pub fn global_avg_pool_fwd(x: &Tensor) -> Tensor {
    let (h, w, c) = x.dims3();
    let xd = x.data();
    let mut out = vec![0.0; c];
    for p in 0..h * w {
        let xrow = &xd[p * c..][..c];
        for ch in 0..c {
            out[ch] += xrow[ch];
        }
    }
    let inv = 1.0 / (h * w) as f64;
    for v in &mut out {
        *v *= inv;
    }
    Tensor::from_vec(&[1, 1, c], out)
}

// ---------------------------------------------------------------------------
// Backward warping (bilinear gather, zero padding)
// ---------------------------------------------------------------------------

/// `out(x) = bilinear sample of src at x + flow(x)`; out-of-frame taps
/// contribute zero.
pub fn bilinear_sample_fwd(src: &Tensor, flow: &Tensor) -> Tensor {
    let (h, w, c) = src.dims3();
    let (fh, fw, fc) = flow.dims3();
    assert_eq!((fh, fw, fc), (h, w, 2), "flow must be [h, w, 2] matching src");
    let sd = src.data();
    let fd = flow.data();
    let mut out = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 + fd[(y * w + x) * 2];
            let v = y as f64 + fd[(y * w + x) * 2 + 1];
            let x0 = u.floor() as isize;
            let y0 = v.floor() as isize;
            let fu = u - x0 as f64;
            let fv = v - y0 as f64;
            let orow = &mut out[(y * w + x) * c..][..c];
            for (cy, cx, wgt) in [
                (y0, x0, (1.0 - fu) * (1.0 - fv)),
                (y0, x0 + 1, fu * (1.0 - fv)),
                (y0 + 1, x0, (1.0 - fu) * fv),
                (y0 + 1, x0 + 1, fu * fv),
            ] {
                if cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                    continue;
                }
                let srow = &sd[((cy as usize) * w + cx as usize) * c..][..c];
                for ch in 0..c {
                    orow[ch] += wgt * srow[ch];
                }
            }
        }
    }
    Tensor::from_vec(&[h, w, c], out)
}

pub fn bilinear_sample_bwd(
    gout: &Tensor,
    src: &Tensor,
    flow: &Tensor,
    dsrc: &mut Tensor,
    dflow: &mut Tensor,
) {
    let (h, w, c) = src.dims3();
    let sd = src.data();
    let fd = flow.data();
    let gd = gout.data();
    let dsd = dsrc.data_mut();
    let dfd = dflow.data_mut();
    for y in 0..h {
        for x in 0..w {
            let u = x as f64 + fd[(y * w + x) * 2];
            let v = y as f64 + fd[(y * w + x) * 2 + 1];
            let x0 = u.floor() as isize;
            let y0 = v.floor() as isize;
            let fu = u - x0 as f64;
            let fv = v - y0 as f64;
            let grow = &gd[(y * w + x) * c..][..c];
            let mut du = 0.0;
            let mut dv = 0.0;
            // (corner, weight, dw/du, dw/dv)
            for (cy, cx, wgt, dwu, dwv) in [
                (y0, x0, (1.0 - fu) * (1.0 - fv), -(1.0 - fv), -(1.0 - fu)),
                (y0, x0 + 1, fu * (1.0 - fv), 1.0 - fv, -fu),
                (y0 + 1, x0, (1.0 - fu) * fv, -fv, 1.0 - fu),
                (y0 + 1, x0 + 1, fu * fv, fv, fu),
            ] {
                if cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                    continue;
                }
                let base = ((cy as usize) * w + cx as usize) * c;
                let srow = &sd[base..base + c];
                let drow = &mut dsd[base..base + c];
                let mut dot = 0.0;
                for ch in 0..c {
                    drow[ch] += wgt * grow[ch];
                    dot += srow[ch] * grow[ch];
                }
                du += dwu * dot;
                dv += dwv * dot;
            }
            dfd[(y * w + x) * 2] += du;
            dfd[(y * w + x) * 2 + 1] += dv;
        }
    }
}

// ---------------------------------------------------------------------------
// Forward splatting (bilinear scatter)
// ---------------------------------------------------------------------------

/// Saved forward state needed by the splat backward pass.
#[derive(Debug, Clone)]
pub struct SplatAux {
    /// Accumulated deposit weight per target cell.
    pub weight_sum: Vec<f64>,
    /// Per-target max of the importance metric (softmax variant only).
    pub z_max: Option<Vec<f64>>,
}

#[inline]
fn splat_corners(u: f64, v: f64) -> [(isize, isize, f64); 4] {
    let x0 = u.floor() as isize;
    let y0 = v.floor() as isize;
    let fu = u - x0 as f64;
    let fv = v - y0 as f64;
    [
        (y0, x0, (1.0 - fu) * (1.0 - fv)),
        (y0, x0 + 1, fu * (1.0 - fv)),
        (y0 + 1, x0, (1.0 - fu) * fv),
        (y0 + 1, x0 + 1, fu * fv),
    ]
}

/// Forward splat: every source pixel deposits its value at the four bilinear
/// neighbours of `x + t * flow(x)`. With `z` present, deposits are weighted by
/// `exp(z)` (stabilized by the per-target max, which cancels exactly in the
/// normalized output). Cells with accumulated weight `<= SPLAT_WEIGHT_EPS`
/// yield zero. Deposits landing outside the frame are dropped.
pub fn splat_fwd(src: &Tensor, flow: &Tensor, z: Option<&Tensor>, t: f64) -> (Tensor, SplatAux) {
    let (h, w, c) = src.dims3();
    let sd = src.data();
    let fd = flow.data();
    let zd = z.map(|z| z.data());
    let mut z_max = zd.map(|_| vec![f64::NEG_INFINITY; h * w]);
    if let (Some(zd), Some(zm)) = (zd, z_max.as_mut()) {
        for y in 0..h {
            for x in 0..w {
                let u = x as f64 + t * fd[(y * w + x) * 2];
                let v = y as f64 + t * fd[(y * w + x) * 2 + 1];
                let zv = zd[y * w + x];
                for (cy, cx, wgt) in splat_corners(u, v) {
                    if wgt == 0.0 || cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                        continue;
                    }
                    let q = (cy as usize) * w + cx as usize;
                    if zv > zm[q] {
                        zm[q] = zv;
                    }
                }
            }
        }
    }
    let mut num = vec![0.0; h * w * c];
    let mut den = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let u = x as f64 + t * fd[p * 2];
            let v = y as f64 + t * fd[p * 2 + 1];
            let srow = &sd[p * c..][..c];
            for (cy, cx, wgt) in splat_corners(u, v) {
                if wgt == 0.0 || cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                    continue;
                }
                let q = (cy as usize) * w + cx as usize;
                let e = match (zd, z_max.as_ref()) {
                    (Some(zd), Some(zm)) => (zd[p] - zm[q]).exp(),
                    _ => 1.0,
                };
                let we = wgt * e;
                let nrow = &mut num[q * c..q * c + c];
                for ch in 0..c {
                    nrow[ch] += we * srow[ch];
                }
                den[q] += we;
            }
        }
    }
    let mut out = vec![0.0; h * w * c];
    for q in 0..h * w {
        if den[q] > SPLAT_WEIGHT_EPS {
            for ch in 0..c {
                out[q * c + ch] = num[q * c + ch] / den[q];
            }
        }
    }
    (
        Tensor::from_vec(&[h, w, c], out),
        SplatAux {
            weight_sum: den,
            z_max,
        },
    )
}

/// Backward pass for [`splat_fwd`]. `dz` must be given iff the forward ran
/// with an importance metric.
#[allow(clippy::too_many_arguments)]
pub fn splat_bwd(
    gout: &Tensor,
    out: &Tensor,
    aux: &SplatAux,
    src: &Tensor,
    flow: &Tensor,
    z: Option<&Tensor>,
    t: f64,
    dsrc: &mut Tensor,
    dflow: &mut Tensor,
    mut dz: Option<&mut Tensor>,
) {
    let (h, w, c) = src.dims3();
    let sd = src.data();
    let fd = flow.data();
    let gd = gout.data();
    let od = out.data();
    let zd = z.map(|z| z.data());
    // Per-target gradients of numerator and denominator of out = N / D.
    let mut g_num = vec![0.0; h * w * c];
    let mut g_den = vec![0.0; h * w];
    for q in 0..h * w {
        let d = aux.weight_sum[q];
        if d <= SPLAT_WEIGHT_EPS {
            continue;
        }
        let inv = 1.0 / d;
        let mut s = 0.0;
        for ch in 0..c {
            let g = gd[q * c + ch];
            g_num[q * c + ch] = g * inv;
            s += g * od[q * c + ch];
        }
        g_den[q] = -s * inv;
    }
    let dsd = dsrc.data_mut();
    let dfd = dflow.data_mut();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let u = x as f64 + t * fd[p * 2];
            let v = y as f64 + t * fd[p * 2 + 1];
            let x0 = u.floor() as isize;
            let y0 = v.floor() as isize;
            let fu = u - x0 as f64;
            let fv = v - y0 as f64;
            let srow = &sd[p * c..][..c];
            let mut du = 0.0;
            let mut dv = 0.0;
            let mut dzp = 0.0;
            for (cy, cx, wgt, dwu, dwv) in [
                (y0, x0, (1.0 - fu) * (1.0 - fv), -(1.0 - fv), -(1.0 - fu)),
                (y0, x0 + 1, fu * (1.0 - fv), 1.0 - fv, -fu),
                (y0 + 1, x0, (1.0 - fu) * fv, -fv, 1.0 - fu),
                (y0 + 1, x0 + 1, fu * fv, fv, fu),
            ] {
                if cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                    continue;
                }
                let q = (cy as usize) * w + cx as usize;
                if aux.weight_sum[q] <= SPLAT_WEIGHT_EPS {
                    continue;
                }
                let e = match (zd, aux.z_max.as_ref()) {
                    (Some(zd), Some(zm)) => (zd[p] - zm[q]).exp(),
                    _ => 1.0,
                };
                // d out / d deposit = (g_num . v + g_den) per unit weight.
                let mut common = g_den[q];
                let dsrow = &mut dsd[p * c..][..c];
                for ch in 0..c {
                    let gn = g_num[q * c + ch];
                    dsrow[ch] += wgt * e * gn;
                    common += srow[ch] * gn;
                }
                du += dwu * e * common;
                dv += dwv * e * common;
                dzp += wgt * e * common;
            }
            dfd[p * 2] += t * du;
            dfd[p * 2 + 1] += t * dv;
            if let Some(dz) = dz.as_deref_mut() {
                dz.data_mut()[p] += dzp;
            }
        }
    }
}

/// Un-normalized deposit density: splats a constant-one field by `t * flow`
/// and returns the raw accumulated weight per cell. This is the occlusion
/// criterion input; it is not differentiated.
pub fn splat_density(flow: &Tensor, t: f64) -> Tensor {
    let (h, w, fc) = flow.dims3();
    assert_eq!(fc, 2, "flow must have 2 channels");
    let fd = flow.data();
    let mut den = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let u = x as f64 + t * fd[p * 2];
            let v = y as f64 + t * fd[p * 2 + 1];
            for (cy, cx, wgt) in splat_corners(u, v) {
                if wgt == 0.0 || cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                    continue;
                }
                den[(cy as usize) * w + cx as usize] += wgt;
            }
        }
    }
    Tensor::from_vec(&[h, w, 1], den)
}

// ---------------------------------------------------------------------------
// Channel concat / slice
// ---------------------------------------------------------------------------

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    let (h, w, ca) = a.dims3();
    let (hb, wb, cb) = b.dims3();
    assert_eq!((h, w), (hb, wb), "concat spatial mismatch");
    let mut out = vec![0.0; h * w * (ca + cb)];
    let ad = a.data();
    let bd = b.data();
    for p in 0..h * w {
        out[p * (ca + cb)..p * (ca + cb) + ca].copy_from_slice(&ad[p * ca..(p + 1) * ca]);
        out[p * (ca + cb) + ca..(p + 1) * (ca + cb)].copy_from_slice(&bd[p * cb..(p + 1) * cb]);
    }
    Tensor::from_vec(&[h, w, ca + cb], out)
}

pub fn slice_channels(x: &Tensor, lo: usize, hi: usize) -> Tensor {
    let (h, w, c) = x.dims3();
    assert!(lo < hi && hi <= c, "bad channel slice {lo}..{hi} of {c}");
    let cn = hi - lo;
    let xd = x.data();
    let mut out = vec![0.0; h * w * cn];
    for p in 0..h * w {
        out[p * cn..(p + 1) * cn].copy_from_slice(&xd[p * c + lo..p * c + hi]);
    }
    Tensor::from_vec(&[h, w, cn], out)
}
