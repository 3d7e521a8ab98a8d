//! Appearance features sampled around a tag-box: HOG on the luma channel,
//! Color Names on color frames, resampled onto one grid.

mod color_names;
mod frame;
mod hog;
mod interp;
mod patch;

use serde::{Deserialize, Serialize};

pub use color_names::{color_names_features, ColorNameTable, CN_BINS, CN_CHANNELS, COLOR_NAMES};
pub use frame::{ColorMode, Frame};
pub use hog::{hog_features, HOG_CHANNELS, HOG_CLIP};
pub use interp::{resample_channel, to_common_grid};
pub use patch::{extract_patch, patch_dims};

use crate::error::{Error, Result};
use crate::geometry::TagBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightingMode {
    /// Color frames: HOG + Color Names (42 channels).
    Day,
    /// Grayscale frames: HOG only (31 channels).
    Night,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub hog_cell: usize,
    pub cn_cell: usize,
    pub mode: LightingMode,
    /// Search-area size relative to the tag-box, in area.
    pub search_area_factor: f64,
    /// Scale each block so its mean squared value is 1.
    pub normalize: bool,
    /// Taper the stacked features with a Hann window before filtering.
    pub cosine_window: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            hog_cell: 6,
            cn_cell: 4,
            mode: LightingMode::Day,
            search_area_factor: 4.0,
            normalize: true,
            cosine_window: true,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hog_cell < 1 || self.cn_cell < 1 {
            return Err(Error::Config("feature cell sizes must be >= 1".into()));
        }
        if !(self.search_area_factor > 1.0) || !self.search_area_factor.is_finite() {
            return Err(Error::Config("search_area_factor must be > 1".into()));
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        match self.mode {
            LightingMode::Day => HOG_CHANNELS + CN_CHANNELS,
            LightingMode::Night => HOG_CHANNELS,
        }
    }
}

/// One feature type at its own resolution; values are channel-major,
/// `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub cell_size: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub blocks: Vec<FeatureBlock>,
}

impl FeatureMap {
    pub fn channel_count(&self) -> usize {
        self.blocks.iter().map(|b| b.channels).sum()
    }
}

/// All channels on one grid, channel-major like [`FeatureBlock`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl FeatureStack {
    pub fn zeros(channels: usize, width: usize, height: usize) -> Self {
        Self {
            channels,
            width,
            height,
            data: vec![0.0; channels * width * height],
        }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.cells();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.cells();
        &mut self.data[c * n..(c + 1) * n]
    }
}

/// HOG (and Color Names in day mode) for one patch.
pub fn patch_features(patch: &Frame, cfg: &FeatureConfig, table: &ColorNameTable) -> Result<FeatureMap> {
    let gray = patch.to_gray();
    let mut blocks = vec![hog_features(&gray, patch.width(), patch.height(), cfg.hog_cell)];
    if cfg.mode == LightingMode::Day {
        blocks.push(color_names_features(patch, cfg.cn_cell, table)?);
    }
    Ok(FeatureMap { blocks })
}

/// Samples the search area around `tb` at `scale` and returns the prepared
/// single-grid stack the correlation filter consumes.
pub fn sample_features(
    frame: &Frame,
    tb: &TagBox,
    scale: f64,
    cfg: &FeatureConfig,
    table: &ColorNameTable,
) -> Result<FeatureStack> {
    let patch = extract_patch(frame, tb, scale, cfg)?;
    let mut map = patch_features(&patch, cfg, table)?;
    if cfg.normalize {
        for b in &mut map.blocks {
            normalize_block(b);
        }
    }
    let mut stack = to_common_grid(&map);
    center_channels(&mut stack);
    if cfg.cosine_window {
        apply_cosine_window(&mut stack);
    }
    Ok(stack)
}

fn normalize_block(b: &mut FeatureBlock) {
    let ms = b.data.iter().map(|v| v * v).sum::<f64>() / b.data.len() as f64;
    if ms > 1e-12 {
        let s = 1.0 / ms.sqrt();
        b.data.iter_mut().for_each(|v| *v *= s);
    }
}

/// Subtracts each channel's mean.
pub fn center_channels(stack: &mut FeatureStack) {
    for c in 0..stack.channels {
        let ch = stack.channel_mut(c);
        let mean = ch.iter().sum::<f64>() / ch.len() as f64;
        ch.iter_mut().for_each(|v| *v -= mean);
    }
}

pub fn hann(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

pub fn apply_cosine_window(stack: &mut FeatureStack) {
    let wx = hann(stack.width);
    let wy = hann(stack.height);
    let w = stack.width;
    for c in 0..stack.channels {
        for (i, v) in stack.channel_mut(c).iter_mut().enumerate() {
            *v *= wx[i % w] * wy[i / w];
        }
    }
}
