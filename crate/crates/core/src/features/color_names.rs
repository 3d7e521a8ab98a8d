//! Color Names: per-cell averages of an 11-way color-name probability
//! vector looked up from a 32x32x32 RGB quantisation table.
//!
//! # Table file format
//!
//! Plain text, one row per RGB bin, 32768 rows. A row holds either 11
//! whitespace-separated probabilities, or 14 values where the first three
//! are the bin's RGB coordinates (ignored). Row `k` belongs to the bin with
//! `k = r / 8 + 32 * (g / 8) + 1024 * (b / 8)` for 8-bit `r, g, b`. Lines
//! that are empty or start with `#` are skipped. Column order is black,
//! blue, brown, grey, green, orange, pink, purple, red, white, yellow.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::OnceLock;

use super::{FeatureBlock, Frame};
use crate::error::{Error, Result};

pub const CN_CHANNELS: usize = 11;
pub const CN_BINS: usize = 32 * 32 * 32;

pub const COLOR_NAMES: [&str; CN_CHANNELS] = [
    "black", "blue", "brown", "grey", "green", "orange", "pink", "purple", "red", "white", "yellow",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ColorNameTable {
    rows: Vec<[f64; CN_CHANNELS]>,
}

impl ColorNameTable {
    pub fn from_rows(rows: Vec<[f64; CN_CHANNELS]>) -> Result<Self> {
        if rows.len() != CN_BINS {
            return Err(Error::Config(format!(
                "color names table needs {CN_BINS} rows, got {}",
                rows.len()
            )));
        }
        Ok(Self { rows })
    }

    /// The table bundled with the crate: a soft assignment of every RGB bin
    /// to 11 prototype colors by CIELAB distance.
    pub fn builtin() -> &'static ColorNameTable {
        static TABLE: OnceLock<ColorNameTable> = OnceLock::new();
        TABLE.get_or_init(prototype_table)
    }

    #[inline]
    pub fn bin_index(r: u8, g: u8, b: u8) -> usize {
        (r as usize >> 3) + 32 * (g as usize >> 3) + 1024 * (b as usize >> 3)
    }

    #[inline]
    pub fn lookup(&self, r: u8, g: u8, b: u8) -> &[f64; CN_CHANNELS] {
        &self.rows[Self::bin_index(r, g, b)]
    }

    pub fn row(&self, index: usize) -> &[f64; CN_CHANNELS] {
        &self.rows[index]
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut rows = Vec::with_capacity(CN_BINS);
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let vals = t
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|e| parse_err(format!("{s:?}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let probs = match vals.len() {
                11 => &vals[..],
                14 => &vals[3..],
                n => return Err(parse_err(format!("expected 11 or 14 columns, got {n}"))),
            };
            let mut row = [0.0; CN_CHANNELS];
            row.copy_from_slice(probs);
            rows.push(row);
        }
        Self::from_rows(rows).map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("expected {CN_BINS} rows"),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let ctx = || format!("writing {}", path.display());
        let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        let mut out = std::io::BufWriter::new(file);
        writeln!(out, "# {}", COLOR_NAMES.join(" ")).map_err(|e| Error::io(ctx(), e))?;
        for row in &self.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.9}")).collect();
            writeln!(out, "{}", line.join(" ")).map_err(|e| Error::io(ctx(), e))?;
        }
        out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

fn srgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let lin = |c: f64| {
        if c <= 0.04045 {
            c / 12.92
        } else {
            ((c + 0.055) / 1.055).powf(2.4)
        }
    };
    let [r, g, b] = rgb.map(lin);
    let x = (0.4124 * r + 0.3576 * g + 0.1805 * b) / 0.95047;
    let y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    let z = (0.0193 * r + 0.1192 * g + 0.9505 * b) / 1.08883;
    let f = |t: f64| {
        if t > 0.008856 {
            t.cbrt()
        } else {
            7.787 * t + 16.0 / 116.0
        }
    };
    let (fx, fy, fz) = (f(x), f(y), f(z));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

fn prototype_table() -> ColorNameTable {
    const PROTOTYPES: [[f64; 3]; CN_CHANNELS] = [
        [0.0, 0.0, 0.0],
        [0.0, 0.0, 255.0],
        [139.0, 90.0, 43.0],
        [128.0, 128.0, 128.0],
        [0.0, 160.0, 0.0],
        [255.0, 150.0, 0.0],
        [255.0, 180.0, 190.0],
        [128.0, 0.0, 160.0],
        [220.0, 0.0, 0.0],
        [255.0, 255.0, 255.0],
        [255.0, 240.0, 0.0],
    ];
    const SIGMA: f64 = 18.0;
    let protos: Vec<[f64; 3]> = PROTOTYPES
        .iter()
        .map(|p| srgb_to_lab(p.map(|c| c / 255.0)))
        .collect();
    let mut rows = vec![[0.0; CN_CHANNELS]; CN_BINS];
    for (k, row) in rows.iter_mut().enumerate() {
        let center = |i: usize| (8.0 * i as f64 + 3.5) / 255.0;
        let lab = srgb_to_lab([center(k % 32), center((k / 32) % 32), center(k / 1024)]);
        let d2: Vec<f64> = protos
            .iter()
            .map(|p| (0..3).map(|i| (lab[i] - p[i]).powi(2)).sum())
            .collect();
        let dmin = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut total = 0.0;
        for (r, &d) in row.iter_mut().zip(&d2) {
            *r = (-(d - dmin) / (2.0 * SIGMA * SIGMA)).exp();
            total += *r;
        }
        row.iter_mut().for_each(|r| *r /= total);
    }
    ColorNameTable { rows }
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// 11-channel block of per-cell mean color-name probabilities.
pub fn color_names_features(
    patch: &Frame,
    cell: usize,
    table: &ColorNameTable,
) -> Result<FeatureBlock> {
    if patch.channels() != 3 {
        return Err(Error::GrayscaleColorNames);
    }
    let (w, h) = (patch.width(), patch.height());
    let cw = ((w as f64 / cell as f64).round() as usize).max(1);
    let ch = ((h as f64 / cell as f64).round() as usize).max(1);
    let n = cw * ch;
    let mut sums = vec![[0.0f64; CN_CHANNELS]; n];
    let mut counts = vec![0usize; n];
    for y in 0..h {
        let cy = (y * ch / h).min(ch - 1);
        for x in 0..w {
            let cx = (x * cw / w).min(cw - 1);
            let p = patch.pixel(x, y);
            let row = table.lookup(quantize(p[0]), quantize(p[1]), quantize(p[2]));
            let acc = &mut sums[cy * cw + cx];
            for (a, r) in acc.iter_mut().zip(row) {
                *a += r;
            }
            counts[cy * cw + cx] += 1;
        }
    }
    let mut data = vec![0.0; CN_CHANNELS * n];
    for (k, (s, &c)) in sums.iter().zip(&counts).enumerate() {
        for (ch_idx, &v) in s.iter().enumerate() {
            data[ch_idx * n + k] = v / c.max(1) as f64;
        }
    }
    Ok(FeatureBlock {
        channels: CN_CHANNELS,
        width: cw,
        height: ch,
        cell_size: cell,
        data,
    })
}
