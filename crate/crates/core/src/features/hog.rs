//! 31-channel HOG in the Felzenszwalb layout: 18 contrast-sensitive
//! orientations, 9 contrast-insensitive orientations and 4 gradient-energy
//! channels, each normalised against the four surrounding 2x2 cell blocks
//! and truncated.

use super::FeatureBlock;

pub const HOG_CHANNELS: usize = 31;
const ORIENTATIONS: usize = 9;
/// Truncation applied to every normalised histogram value.
pub const HOG_CLIP: f64 = 0.2;
const EPS: f64 = 1e-4;

fn directions() -> [(f64, f64); 2 * ORIENTATIONS] {
    let mut d = [(0.0, 0.0); 2 * ORIENTATIONS];
    for o in 0..ORIENTATIONS {
        let a = o as f64 * std::f64::consts::PI / ORIENTATIONS as f64;
        d[o] = (a.cos(), a.sin());
        d[o + ORIENTATIONS] = (-d[o].0, -d[o].1);
    }
    d
}

/// Snaps a gradient to the nearest of the 18 signed directions.
#[inline]
fn orientation_bin(dirs: &[(f64, f64); 18], dx: f64, dy: f64) -> usize {
    let mut best_dot = 0.0;
    let mut best = 0;
    for (o, &(u, v)) in dirs.iter().take(ORIENTATIONS).enumerate() {
        let dot = u * dx + v * dy;
        if dot > best_dot {
            best_dot = dot;
            best = o;
        } else if -dot > best_dot {
            best_dot = -dot;
            best = o + ORIENTATIONS;
        }
    }
    best
}

/// Per-cell signed orientation histograms with bilinear spatial voting.
/// Returns `(histograms [cell][18], cells_x, cells_y)`.
pub(crate) fn cell_histograms(
    gray: &[f64],
    width: usize,
    height: usize,
    cell: usize,
) -> (Vec<[f64; 18]>, usize, usize) {
    let cw = ((width as f64 / cell as f64).round() as usize).max(1);
    let ch = ((height as f64 / cell as f64).round() as usize).max(1);
    let sx = width as f64 / cw as f64;
    let sy = height as f64 / ch as f64;
    let dirs = directions();
    let mut hist = vec![[0.0f64; 18]; cw * ch];
    let px = |x: usize, y: usize| gray[y * width + x];

    for y in 0..height {
        let yu = y.saturating_sub(1);
        let yd = (y + 1).min(height - 1);
        let yp = (y as f64 + 0.5) / sy - 0.5;
        let iyp = yp.floor();
        let vy0 = yp - iyp;
        let vy1 = 1.0 - vy0;
        let iyp = iyp as isize;
        for x in 0..width {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(width - 1);
            let dx = px(xr, y) - px(xl, y);
            let dy = px(x, yd) - px(x, yu);
            let mag = (dx * dx + dy * dy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let o = orientation_bin(&dirs, dx, dy);
            let xp = (x as f64 + 0.5) / sx - 0.5;
            let ixp = xp.floor();
            let vx0 = xp - ixp;
            let vx1 = 1.0 - vx0;
            let ixp = ixp as isize;
            for (cx, wx) in [(ixp, vx1), (ixp + 1, vx0)] {
                if cx < 0 || cx >= cw as isize {
                    continue;
                }
                for (cy, wy) in [(iyp, vy1), (iyp + 1, vy0)] {
                    if cy < 0 || cy >= ch as isize {
                        continue;
                    }
                    hist[cy as usize * cw + cx as usize][o] += wx * wy * mag;
                }
            }
        }
    }
    (hist, cw, ch)
}

/// HOG block for a grayscale patch (row-major, `width * height` values).
pub fn hog_features(gray: &[f64], width: usize, height: usize, cell: usize) -> FeatureBlock {
    assert_eq!(gray.len(), width * height);
    let (hist, cw, ch) = cell_histograms(gray, width, height, cell);

    let energy: Vec<f64> = hist
        .iter()
        .map(|h| {
            (0..ORIENTATIONS)
                .map(|o| {
                    let s = h[o] + h[o + ORIENTATIONS];
                    s * s
                })
                .sum()
        })
        .collect();
    let e = |x: isize, y: isize| {
        let x = x.clamp(0, cw as isize - 1) as usize;
        let y = y.clamp(0, ch as isize - 1) as usize;
        energy[y * cw + x]
    };

    let n = cw * ch;
    let mut data = vec![0.0; HOG_CHANNELS * n];
    for y in 0..ch as isize {
        for x in 0..cw as isize {
            let block = |ox: isize, oy: isize| {
                1.0 / (e(x + ox, y + oy)
                    + e(x + ox + 1, y + oy)
                    + e(x + ox, y + oy + 1)
                    + e(x + ox + 1, y + oy + 1)
                    + EPS)
                    .sqrt()
            };
            let norms = [block(0, 0), block(0, -1), block(-1, 0), block(-1, -1)];
            let cell_idx = y as usize * cw + x as usize;
            let h = &hist[cell_idx];
            let mut texture = [0.0; 4];

            for o in 0..2 * ORIENTATIONS {
                let mut sum = 0.0;
                for (t, &nv) in norms.iter().enumerate() {
                    let v = (h[o] * nv).min(HOG_CLIP);
                    sum += v;
                    texture[t] += v;
                }
                data[o * n + cell_idx] = 0.5 * sum;
            }
            for o in 0..ORIENTATIONS {
                let s = h[o] + h[o + ORIENTATIONS];
                let sum: f64 = norms.iter().map(|&nv| (s * nv).min(HOG_CLIP)).sum();
                data[(2 * ORIENTATIONS + o) * n + cell_idx] = 0.5 * sum;
            }
            for (t, &v) in texture.iter().enumerate() {
                data[(3 * ORIENTATIONS + t) * n + cell_idx] = 0.2357 * v;
            }
        }
    }
    FeatureBlock {
        channels: HOG_CHANNELS,
        width: cw,
        height: ch,
        cell_size: cell,
        data,
    }
}
