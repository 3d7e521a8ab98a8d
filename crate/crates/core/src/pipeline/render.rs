use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb as Px, RgbImage};

use super::TagBoxRecord;
use crate::error::{Error, Result};
use crate::features::Frame;
use crate::geometry::BoundingBox;
use crate::metrics::TrajectorySet;
use crate::sim::frame_file_name;

pub type Rgb = [u8; 3];

/// Bounding boxes are drawn red, tag-boxes yellow.
pub const BOX_COLOR: Rgb = [230, 20, 20];
pub const TAG_COLOR: Rgb = [250, 220, 0];

/// 3x5 digit glyphs, one row per entry, bit 2 leftmost.
const DIGITS: [[u8; 5]; 10] = [
    [7, 5, 5, 5, 7],
    [2, 6, 2, 2, 7],
    [7, 1, 7, 4, 7],
    [7, 1, 7, 1, 7],
    [5, 5, 7, 1, 1],
    [7, 4, 7, 1, 7],
    [7, 4, 7, 5, 7],
    [7, 1, 2, 2, 2],
    [7, 5, 7, 5, 7],
    [7, 5, 7, 1, 7],
];
const GLYPH_SCALE: i64 = 2;

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, Px(c));
    }
}

/// Outline of the pixels covered by `b`, clipped to the image.
pub fn draw_rectangle(img: &mut RgbImage, b: &BoundingBox, c: Rgb) {
    let x0 = b.x().round() as i64;
    let y0 = b.y().round() as i64;
    let x1 = (b.right().round() as i64 - 1).max(x0);
    let y1 = (b.bottom().round() as i64 - 1).max(y0);
    for x in x0..=x1 {
        put(img, x, y0, c);
        put(img, x, y1, c);
    }
    for y in y0..=y1 {
        put(img, x0, y, c);
        put(img, x1, y, c);
    }
}

fn draw_number(img: &mut RgbImage, mut x: i64, y: i64, n: u32, c: Rgb) {
    for ch in n.to_string().bytes() {
        let glyph = DIGITS[(ch - b'0') as usize];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..3 {
                if bits & (4 >> col) != 0 {
                    for sy in 0..GLYPH_SCALE {
                        for sx in 0..GLYPH_SCALE {
                            put(img, x + col * GLYPH_SCALE + sx, y + row as i64 * GLYPH_SCALE + sy, c);
                        }
                    }
                }
            }
        }
        x += 4 * GLYPH_SCALE;
    }
}

fn draw_line(img: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), c: Rgb) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil().max(1.0) as usize;
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        put(img, (x0 + (x1 - x0) * t).round() as i64, (y0 + (y1 - y0) * t).round() as i64, c);
    }
}

/// Burns the boxes, tag-boxes and ids of one frame into an RGB copy.
pub fn render_overlay(frame: &Frame, boxes: &[(u32, BoundingBox)], tag_boxes: &[&TagBoxRecord]) -> RgbImage {
    let mut img = frame.to_image().to_rgb8();
    for t in tag_boxes {
        draw_rectangle(&mut img, &t.tag_box.to_bounding_box(), TAG_COLOR);
    }
    for (id, b) in boxes {
        draw_rectangle(&mut img, b, BOX_COLOR);
        let label_y = (b.y().round() as i64 - 6 * GLYPH_SCALE).max(0);
        draw_number(&mut img, b.x().round() as i64, label_y, *id, BOX_COLOR);
    }
    img
}

/// Overlays for every frame in `frames_dir` that the trajectories cover,
/// written under the same file names into `out_dir`. Returns the number of
/// images written.
pub fn render_overlays(
    frames_dir: &Path,
    trajectories: &TrajectorySet,
    tag_boxes: &[TagBoxRecord],
    out_dir: &Path,
) -> Result<usize> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(format!("creating {}", out_dir.display()), e))?;
    let by_frame = trajectories.by_frame();
    let mut tags: BTreeMap<usize, Vec<&TagBoxRecord>> = BTreeMap::new();
    for r in tag_boxes {
        tags.entry(r.frame).or_default().push(r);
    }
    let last = by_frame.keys().chain(tags.keys()).max().copied();
    let mut written = 0;
    let mut index = 0;
    loop {
        let name = frame_file_name(index);
        let src = frames_dir.join(&name);
        let in_range = last.is_some_and(|l| index <= l);
        if !src.exists() {
            if in_range {
                return Err(Error::MissingFrame {
                    index,
                    path: src,
                });
            }
            break;
        }
        let frame = Frame::load(&src)?;
        let boxes = by_frame.get(&index).cloned().unwrap_or_default();
        let t = tags.get(&index).cloned().unwrap_or_default();
        let dst = out_dir.join(&name);
        if boxes.is_empty() && t.is_empty() {
            std::fs::copy(&src, &dst).map_err(|e| Error::io(format!("copying {}", src.display()), e))?;
        } else {
            let img = render_overlay(&frame, &boxes, &t);
            img.save(&dst).map_err(|source| Error::Image { path: dst.clone(), source })?;
        }
        written += 1;
        index += 1;
    }
    Ok(written)
}

/// Distinct colors for ids.
fn palette(id: u32) -> Rgb {
    const P: [Rgb; 10] = [
        [31, 119, 180],
        [255, 127, 14],
        [44, 160, 44],
        [214, 39, 40],
        [148, 103, 189],
        [140, 86, 75],
        [227, 119, 194],
        [127, 127, 127],
        [188, 189, 34],
        [23, 190, 207],
    ];
    P[(id as usize) % P.len()]
}

/// White canvas with one polyline of box centres per id.
pub fn render_trajectory_plot(trajectories: &TrajectorySet, width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Px([255, 255, 255]));
    for id in trajectories.ids() {
        let points: Vec<(f64, f64)> = trajectories
            .get(id)
            .unwrap_or_default()
            .iter()
            .map(|(_, b)| b.center())
            .collect();
        let c = palette(id);
        for w in points.windows(2) {
            draw_line(&mut img, w[0], w[1], c);
        }
        if let Some(&(x, y)) = points.last() {
            draw_number(&mut img, x.round() as i64 + 3, y.round() as i64 + 3, id, c);
        }
    }
    img
}
