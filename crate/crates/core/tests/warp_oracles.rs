//! Independent oracles for the warping operators: a per-pixel scalar
//! accumulation reference for the splats, deposit enumeration for the
//! occlusion mask, and the softmax/average equivalence under uniform
//! importance.

mod common;

use vfi_core::rng::Rng;
use vfi_core::tensor::Tensor;
use vfi_core::types::FlowField;
use vfi_core::warp;

/// Scalar reference splat: for every target cell, scan all source pixels in
/// row-major order and accumulate bilinear deposits in the same corner order
/// as the production kernel. Returns the normalized output.
fn scalar_splat_oracle(src: &Tensor, flow: &Tensor, z: Option<&Tensor>, t: f64) -> Tensor {
    let (h, w, c) = src.dims3();
    let corner_list = |u: f64, v: f64| {
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
    };
    // Per-target max of z over contributing sources (softmax stabilizer).
    let mut z_max = vec![f64::NEG_INFINITY; h * w];
    if let Some(z) = z {
        for y in 0..h {
            for x in 0..w {
                let u = x as f64 + t * flow.at3(y, x, 0);
                let v = y as f64 + t * flow.at3(y, x, 1);
                for (cy, cx, wgt) in corner_list(u, v) {
                    if wgt == 0.0 || cy < 0 || cy >= h as isize || cx < 0 || cx >= w as isize {
                        continue;
                    }
                    let q = cy as usize * w + cx as usize;
                    z_max[q] = z_max[q].max(z.at3(y, x, 0));
                }
            }
        }
    }
    let mut out = Tensor::zeros(&[h, w, c]);
    for ty in 0..h {
        for tx in 0..w {
            let q = ty * w + tx;
            let mut num = vec![0.0; c];
            let mut den = 0.0;
            for y in 0..h {
                for x in 0..w {
                    let u = x as f64 + t * flow.at3(y, x, 0);
                    let v = y as f64 + t * flow.at3(y, x, 1);
                    for (cy, cx, wgt) in corner_list(u, v) {
                        if wgt == 0.0
                            || cy != ty as isize
                            || cx != tx as isize
                        {
                            continue;
                        }
                        let e = match z {
                            Some(z) => (z.at3(y, x, 0) - z_max[q]).exp(),
                            None => 1.0,
                        };
                        for (ch, n) in num.iter_mut().enumerate() {
                            *n += wgt * e * src.at3(y, x, ch);
                        }
                        den += wgt * e;
                    }
                }
            }
            if den > 1e-8 {
                for ch in 0..c {
                    out.set3(ty, tx, ch, num[ch] / den);
                }
            }
        }
    }
    out
}

#[test]
fn vectorized_splats_equal_scalar_oracle_exactly() {
    let mut rng = Rng::from_seed(20);
    let src = Tensor::uniform(&[16, 16, 3], -1.0, 1.0, &mut rng);
    let flow_t = Tensor::uniform(&[16, 16, 2], -4.0, 4.0, &mut rng);
    let z = Tensor::uniform(&[16, 16, 1], -2.0, 2.0, &mut rng);
    let flow = FlowField::new_unchecked(flow_t.clone());

    let avg = warp::forward_splat_avg(&src, &flow).unwrap();
    let avg_ref = scalar_splat_oracle(&src, &flow_t, None, 1.0);
    assert_eq!(avg, avg_ref, "average splat differs from scalar oracle");

    let soft = warp::forward_splat_softmax(&src, 0.7, &flow, &z).unwrap();
    let soft_ref = scalar_splat_oracle(&src, &flow_t, Some(&z), 0.7);
    assert_eq!(soft, soft_ref, "softmax splat differs from scalar oracle");
}

#[test]
fn softmax_with_uniform_z_matches_average_splat() {
    let mut rng = Rng::from_seed(21);
    for case in 0..100 {
        let h = 6 + (case % 3) * 2;
        let w = 6 + (case % 2) * 4;
        let src = Tensor::uniform(&[h, w, 2], -2.0, 2.0, &mut rng);
        let flow_t = Tensor::uniform(&[h, w, 2], -3.0, 3.0, &mut rng);
        let t = rng.uniform();
        let zc = rng.range(-5.0, 5.0);
        let z = Tensor::filled(&[h, w, 1], zc);
        let flow = FlowField::new_unchecked(flow_t);
        let soft = warp::forward_splat_softmax(&src, t, &flow, &z).unwrap();
        let avg = warp::forward_splat_avg(&src, &flow.scaled(t)).unwrap();
        assert!(
            soft.max_abs_diff(&avg) < 1e-6,
            "case {case}: diff {}",
            soft.max_abs_diff(&avg)
        );
    }
}

/// Occlusion-mask oracle: enumerate integer deposits directly.
#[test]
fn occlusion_mask_matches_deposit_enumeration_on_integer_flows() {
    let mut rng = Rng::from_seed(22);
    for case in 0..50 {
        let (h, w) = (8, 8);
        // Integer flows in [-3, 3]; with t = 1 deposits land on grid points.
        let mut ft = Tensor::zeros(&[h, w, 2]);
        for y in 0..h {
            for x in 0..w {
                ft.set3(y, x, 0, rng.below(7) as f64 - 3.0);
                ft.set3(y, x, 1, rng.below(7) as f64 - 3.0);
            }
        }
        let flow = FlowField::new_unchecked(ft.clone());
        let mask = warp::binary_occlusion_mask(&flow, 1.0, 0.5).unwrap();

        let mut counts = vec![0usize; h * w];
        for y in 0..h {
            for x in 0..w {
                let tx = x as i64 + ft.at3(y, x, 0) as i64;
                let ty = y as i64 + ft.at3(y, x, 1) as i64;
                if tx >= 0 && tx < w as i64 && ty >= 0 && ty < h as i64 {
                    counts[ty as usize * w + tx as usize] += 1;
                }
            }
        }
        for p in 0..h * w {
            let want = if (counts[p] as f64) < 0.5 { 1.0 } else { 0.0 };
            assert_eq!(
                mask.tensor().data()[p],
                want,
                "case {case} pixel {p}: count {}",
                counts[p]
            );
        }
    }
}

#[test]
fn density_splat_counts_partial_weights() {
    // A half-pixel shift splits each deposit between two cells; the first
    // cell only keeps its own left half, every other cell also receives the
    // right half of its left neighbour. The last pixel's right half leaves
    // the frame and is dropped.
    let flow = FlowField::constant(1, 4, 0.5, 0.0);
    let density = warp::splat_density(&flow, 1.0);
    assert_eq!(density.at3(0, 0, 0), 0.5);
    assert_eq!(density.at3(0, 1, 0), 1.0);
    assert_eq!(density.at3(0, 2, 0), 1.0);
    assert_eq!(density.at3(0, 3, 0), 1.0);
}

#[test]
fn rescale_flow_matches_block_average_oracle() {
    let mut rng = Rng::from_seed(23);
    for level in 1..=2usize {
        let (h, w) = (8, 8);
        let ft = Tensor::uniform(&[h, w, 2], -4.0, 4.0, &mut rng);
        let down = warp::rescale_flow(&FlowField::new_unchecked(ft.clone()), level).unwrap();
        let f = 1 << level;
        let (oh, ow) = (h / f, w / f);
        assert_eq!(down.size(), (oh, ow));
        for oy in 0..oh {
            for ox in 0..ow {
                for c in 0..2 {
                    let mut s = 0.0;
                    for dy in 0..f {
                        for dx in 0..f {
                            s += ft.at3(oy * f + dy, ox * f + dx, c);
                        }
                    }
                    let want = s / (f * f) as f64 / f as f64;
                    assert!(
                        (down.tensor().at3(oy, ox, c) - want).abs() < 1e-12,
                        "level {level}"
                    );
                }
            }
        }
    }
}
