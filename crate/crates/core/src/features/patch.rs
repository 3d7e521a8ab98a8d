use super::{FeatureConfig, Frame};
use crate::error::{Error, Result};
use crate::geometry::TagBox;

/// Pixel dimensions of the patch sampled around a tag-box of this size.
pub fn patch_dims(tb: &TagBox, cfg: &FeatureConfig) -> (usize, usize) {
    let side = cfg.search_area_factor.sqrt();
    let w = (tb.w() * side).round().max(1.0) as usize;
    let h = (tb.h() * side).round().max(1.0) as usize;
    (w, h)
}

/// Samples the search area around `tb`. The output has the pixel size given
/// by [`patch_dims`]; `scale` stretches the covered extent, so patches at
/// different scales share dimensions. Borders are replicated.
pub fn extract_patch(frame: &Frame, tb: &TagBox, scale: f64, cfg: &FeatureConfig) -> Result<Frame> {
    debug_assert!(scale > 0.0);
    let (pw, ph) = patch_dims(tb, cfg);
    let side = cfg.search_area_factor.sqrt();
    let ew = tb.w() * side * scale;
    let eh = tb.h() * side * scale;
    let (cx, cy) = tb.center();

    let (fw, fh) = (frame.width() as f64, frame.height() as f64);
    if cx + ew / 2.0 <= 0.0 || cx - ew / 2.0 >= fw || cy + eh / 2.0 <= 0.0 || cy - eh / 2.0 >= fh {
        return Err(Error::PatchOutsideFrame { cx, cy });
    }

    let ch = frame.channels();
    let xs: Vec<(usize, usize, f32)> = (0..pw)
        .map(|i| {
            let x = cx + ((i as f64 + 0.5) / pw as f64 - 0.5) * ew - 0.5;
            axis_weights(x, frame.width())
        })
        .collect();
    let mut data = Vec::with_capacity(pw * ph * ch);
    for j in 0..ph {
        let y = cy + ((j as f64 + 0.5) / ph as f64 - 0.5) * eh - 0.5;
        let (y0, y1, ty) = axis_weights(y, frame.height());
        for &(x0, x1, tx) in &xs {
            for c in 0..ch {
                let top = frame.get(x0, y0, c) * (1.0 - tx) + frame.get(x1, y0, c) * tx;
                let bot = frame.get(x0, y1, c) * (1.0 - tx) + frame.get(x1, y1, c) * tx;
                data.push(top * (1.0 - ty) + bot * ty);
            }
        }
    }
    Frame::new(pw, ph, frame.mode(), data)
}

/// Neighbouring sample indices and the interpolation weight of the second,
/// with replicate padding.
#[inline]
fn axis_weights(pos: f64, len: usize) -> (usize, usize, f32) {
    let max = (len - 1) as f64;
    if pos <= 0.0 {
        return (0, 0, 0.0);
    }
    if pos >= max {
        return (len - 1, len - 1, 0.0);
    }
    let i0 = pos.floor();
    let t = (pos - i0) as f32;
    let i0 = i0 as usize;
    (i0, (i0 + 1).min(len - 1), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::ColorMode;

    fn ramp(w: usize, h: usize, f: impl Fn(f64, f64) -> f64) -> Frame {
        // pixel (x, y) holds f at its centre
        Frame::from_fn(w, h, ColorMode::Grayscale, |x, y| {
            let v = f(x as f64 + 0.5, y as f64 + 0.5) as f32;
            [v, v, v]
        })
        .unwrap()
    }

    #[test]
    fn center_pixel_is_aligned() {
        let frame = Frame::from_fn(64, 48, ColorMode::Color, |x, y| {
            [x as f32 / 64.0, y as f32 / 48.0, ((x * 7 + y * 3) % 11) as f32 / 11.0]
        })
        .unwrap();
        let cfg = FeatureConfig::default();
        // 10.5 * 2 = 21 pixels: odd, so the middle sample sits on the centre
        let tb = TagBox::new(30.5, 20.5, 10.5, 7.5).unwrap();
        let p = extract_patch(&frame, &tb, 1.0, &cfg).unwrap();
        assert_eq!((p.width(), p.height()), (21, 15));
        assert_eq!(p.pixel(10, 7), frame.pixel(30, 20));
    }

    #[test]
    fn corner_patch_replicates_border() {
        let frame = ramp(40, 30, |x, y| (x + 2.0 * y) / 100.0);
        let cfg = FeatureConfig::default();
        let tb = TagBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let p = extract_patch(&frame, &tb, 1.0, &cfg).unwrap();
        assert_eq!((p.width(), p.height()), (20, 20));
        // top-left quadrant lies outside the frame and repeats pixel (0, 0)
        for y in 0..9 {
            for x in 0..9 {
                assert_eq!(p.get(x, y, 0), frame.get(0, 0, 0));
            }
        }
    }

    #[test]
    fn outside_frame_is_an_error() {
        let frame = ramp(40, 30, |x, _| x / 40.0);
        let cfg = FeatureConfig::default();
        let tb = TagBox::new(-100.0, 10.0, 10.0, 10.0).unwrap();
        assert!(matches!(
            extract_patch(&frame, &tb, 1.0, &cfg),
            Err(Error::PatchOutsideFrame { .. })
        ));
    }

    #[test]
    fn scaled_patch_matches_resampled_image() {
        // Bilinear sampling is exact on affine images, so stretching the
        // extent must equal extracting at scale 1 from an image that has
        // been resampled about the tag-box centre.
        let f = |x: f64, y: f64| 0.1 + 0.004 * x + 0.003 * y;
        let frame = ramp(200, 160, f);
        let cfg = FeatureConfig::default();
        let tb = TagBox::new(100.0, 80.0, 30.0, 24.0).unwrap();
        let s = 1.02;
        let p = extract_patch(&frame, &tb, s, &cfg).unwrap();
        let oracle = ramp(200, 160, |x, y| f(100.0 + (x - 100.0) * s, 80.0 + (y - 80.0) * s));
        let q = extract_patch(&oracle, &tb, 1.0, &cfg).unwrap();
        assert_eq!((p.width(), p.height()), (q.width(), q.height()));
        let unscaled = extract_patch(&frame, &tb, 1.0, &cfg).unwrap();
        assert_eq!((p.width(), p.height()), (unscaled.width(), unscaled.height()));
        for (a, b) in p.data().iter().zip(q.data()) {
            assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }
    }
}
