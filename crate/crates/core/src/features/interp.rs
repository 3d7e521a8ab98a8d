//! Separable cubic-convolution resampling of feature blocks onto a shared grid.

use super::{FeatureMap, FeatureStack};

const A: f64 = -0.5;

#[inline]
fn keys(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((A + 2.0) * t - (A + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        (((t - 5.0) * t + 8.0) * t - 4.0) * A
    } else {
        0.0
    }
}

/// Sample `k` of `f`, extended past both ends by polynomial extrapolation so
/// that constants and linear ramps are reproduced up to the borders.
fn extended(f: &[f64], k: isize) -> f64 {
    let n = f.len() as isize;
    if (0..n).contains(&k) {
        return f[k as usize];
    }
    match n {
        1 => f[0],
        2 => {
            if k < 0 {
                2.0 * extended(f, k + 1) - extended(f, k + 2)
            } else {
                2.0 * extended(f, k - 1) - extended(f, k - 2)
            }
        }
        _ => {
            if k < 0 {
                3.0 * extended(f, k + 1) - 3.0 * extended(f, k + 2) + extended(f, k + 3)
            } else {
                3.0 * extended(f, k - 1) - 3.0 * extended(f, k - 2) + extended(f, k - 3)
            }
        }
    }
}

/// Taps and weights for resampling `src_len` cells onto `dst_len` cells that
/// span the same extent.
fn plan(src_len: usize, dst_len: usize) -> Vec<(isize, [f64; 4])> {
    (0..dst_len)
        .map(|j| {
            let u = (j as f64 + 0.5) * src_len as f64 / dst_len as f64 - 0.5;
            let i = u.floor();
            let t = u - i;
            (i as isize, [keys(t + 1.0), keys(t), keys(1.0 - t), keys(2.0 - t)])
        })
        .collect()
}

fn resample_line(src: &[f64], plan: &[(isize, [f64; 4])], out: &mut [f64]) {
    if src.len() == out.len() {
        out.copy_from_slice(src);
        return;
    }
    for (o, &(i, w)) in out.iter_mut().zip(plan) {
        // Expressed relative to the nearest tap so constants come out exact.
        let base = extended(src, i);
        let mut acc = base;
        for (k, wk) in w.iter().enumerate() {
            acc += wk * (extended(src, i - 1 + k as isize) - base);
        }
        *o = acc;
    }
}

/// Resamples a single channel of `sw x sh` values to `dw x dh`.
pub fn resample_channel(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    let px = plan(sw, dw);
    let py = plan(sh, dh);
    let mut rows = vec![0.0; dw * sh];
    for y in 0..sh {
        resample_line(&src[y * sw..(y + 1) * sw], &px, &mut rows[y * dw..(y + 1) * dw]);
    }
    let mut out = vec![0.0; dw * dh];
    let mut col = vec![0.0; sh];
    let mut col_out = vec![0.0; dh];
    for x in 0..dw {
        for y in 0..sh {
            col[y] = rows[y * dw + x];
        }
        resample_line(&col, &py, &mut col_out);
        for y in 0..dh {
            out[y * dw + x] = col_out[y];
        }
    }
    out
}

/// Brings every block onto the finest grid, keeping block order.
pub fn to_common_grid(map: &FeatureMap) -> FeatureStack {
    assert!(!map.blocks.is_empty(), "feature map has no blocks");
    let width = map.blocks.iter().map(|b| b.width).max().unwrap_or(1);
    let height = map.blocks.iter().map(|b| b.height).max().unwrap_or(1);
    let channels: usize = map.blocks.iter().map(|b| b.channels).sum();
    let n = width * height;
    let mut data = Vec::with_capacity(channels * n);
    for b in &map.blocks {
        let bn = b.width * b.height;
        for c in 0..b.channels {
            let src = &b.data[c * bn..(c + 1) * bn];
            if b.width == width && b.height == height {
                data.extend_from_slice(src);
            } else {
                data.extend(resample_channel(src, b.width, b.height, width, height));
            }
        }
    }
    FeatureStack {
        channels,
        width,
        height,
        data,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureBlock;

    fn block(channels: usize, w: usize, h: usize, f: impl Fn(usize, usize, usize) -> f64) -> FeatureBlock {
        let mut data = Vec::new();
        for c in 0..channels {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(c, x, y));
                }
            }
        }
        FeatureBlock {
            channels,
            width: w,
            height: h,
            cell_size: 1,
            data,
        }
    }

    #[test]
    fn single_block_is_identity() {
        let b = block(3, 5, 4, |c, x, y| (c * 100 + x * 10 + y) as f64 * 0.37);
        let s = to_common_grid(&FeatureMap { blocks: vec![b.clone()] });
        assert_eq!((s.channels, s.width, s.height), (3, 5, 4));
        assert_eq!(s.data, b.data);
    }

    #[test]
    fn constants_are_exact() {
        let coarse = block(2, 4, 3, |c, _, _| if c == 0 { 0.731 } else { -2.5 });
        let fine = block(1, 9, 7, |_, x, y| (x + y) as f64);
        let s = to_common_grid(&FeatureMap { blocks: vec![coarse, fine] });
        assert_eq!((s.width, s.height, s.channels), (9, 7, 3));
        let n = 63;
        assert!(s.data[..n].iter().all(|&v| v == 0.731));
        assert!(s.data[n..2 * n].iter().all(|&v| v == -2.5));
    }

    #[test]
    fn linear_ramps_are_reproduced() {
        // value at cell centre u (in extent units) is a + b*u
        let (cw, ch, fw, fh) = (5usize, 4usize, 12usize, 9usize);
        let ramp = |x: f64, y: f64| 0.3 + 1.7 * x - 0.9 * y;
        let coarse = block(1, cw, ch, |_, x, y| {
            ramp((x as f64 + 0.5) / cw as f64, (y as f64 + 0.5) / ch as f64)
        });
        let fine = block(1, fw, fh, |_, _, _| 0.0);
        let s = to_common_grid(&FeatureMap { blocks: vec![coarse, fine] });
        for y in 0..fh {
            for x in 0..fw {
                let expect = ramp((x as f64 + 0.5) / fw as f64, (y as f64 + 0.5) / fh as f64);
                assert!((s.data[y * fw + x] - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_cell_ramp_extrapolates_linearly() {
        let out = resample_channel(&[1.0, 3.0], 2, 1, 4, 1);
        // centres at 0.125, 0.375, 0.625, 0.875 on a ramp through (0.25,1),(0.75,3)
        for (v, e) in out.iter().zip([0.5, 1.5, 2.5, 3.5]) {
            assert!((v - e).abs() < 1e-12);
        }
    }
}
