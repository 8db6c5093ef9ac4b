//! Full-reference quality metrics on unit-range images: PSNR and SSIM
//! (11x11 Gaussian window, sigma 1.5, stabilizers (0.01 R)^2 and (0.03 R)^2
//! with R = 1). SSIM is computed per channel over every fully-inside window
//! position and averaged across positions and channels; a BT.601 luminance
//! helper is provided for single-channel use.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::types::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// Mean squared error over all pixels and channels.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(Error::dimension(format!(
            "image shapes differ: {:?} vs {:?}",
            a.tensor().shape(),
            b.tensor().shape()
        )));
    }
    let n = a.tensor().numel() as f64;
    let sum: f64 = a
        .tensor()
        .data()
        .iter()
        .zip(b.tensor().data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// `10 log10(1 / MSE)` in dB for unit-range data; identical inputs return
/// the positive-infinity sentinel.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / m).log10())
}

/// ITU-R BT.601 luminance.
pub fn luminance_bt601(img: &Image) -> Tensor {
    let (h, w, _) = img.tensor().dims3();
    let mut out = Tensor::zeros(&[h, w, 1]);
    for y in 0..h {
        for x in 0..w {
            let p = img.tensor().pixel(y, x);
            out.set3(y, x, 0, 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
        }
    }
    out
}

fn gaussian_window() -> Vec<f64> {
    let n = SSIM_WINDOW;
    let c = (n / 2) as f64;
    let mut w = vec![0.0; n * n];
    let mut sum = 0.0;
    for y in 0..n {
        for x in 0..n {
            let dy = y as f64 - c;
            let dx = x as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * n + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

fn ssim_channel(a: &Tensor, b: &Tensor, ch: usize, win: &[f64]) -> f64 {
    let (h, w, _) = a.dims3();
    let n = SSIM_WINDOW;
    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - n) {
        for x0 in 0..=(w - n) {
            let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..n {
                for dx in 0..n {
                    let wgt = win[dy * n + dx];
                    let pa = a.at3(y0 + dy, x0 + dx, ch);
                    let pb = b.at3(y0 + dy, x0 + dx, ch);
                    mx += wgt * pa;
                    my += wgt * pb;
                    sxx += wgt * pa * pa;
                    syy += wgt * pb * pb;
                    sxy += wgt * pa * pb;
                }
            }
            let vx = sxx - mx * mx;
            let vy = syy - my * my;
            let cov = sxy - mx * my;
            let val = ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            total += val;
            count += 1;
        }
    }
    total / count as f64
}

/// Mean structural similarity in [-1, 1]; channels scored independently and
/// averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    if a.tensor().shape() != b.tensor().shape() {
        return Err(Error::dimension(format!(
            "image shapes differ: {:?} vs {:?}",
            a.tensor().shape(),
            b.tensor().shape()
        )));
    }
    let (h, w, c) = a.tensor().dims3();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::validation(format!(
            "images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM, got {h}x{w}"
        )));
    }
    let win = gaussian_window();
    let mut total = 0.0;
    for ch in 0..c {
        total += ssim_channel(a.tensor(), b.tensor(), ch, &win);
    }
    Ok(total / c as f64)
}
