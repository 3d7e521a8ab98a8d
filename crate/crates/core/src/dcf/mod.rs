//! Per-target discriminative correlation filters with a factored
//! (projected) filter bank, a compact Gaussian-mixture training set and
//! sparse updates.

mod fft;
mod gmm;
mod model;
mod solver;

use serde::{Deserialize, Serialize};

pub use fft::Fft2;
pub use gmm::{Component, GmmSampleSpace};
pub use model::{gaussian_label, regularization_weights, FilterModel};

use crate::error::{Error, Result};
use crate::features::{sample_features, ColorNameTable, FeatureConfig, Frame};
use crate::geometry::TagBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Maximum number of mixture components kept for training.
    pub max_components: usize,
    pub learning_rate: f64,
    /// Components lighter than this are dropped rather than merged.
    pub drop_threshold: f64,
    /// Frames between filter updates.
    pub update_interval: usize,
    pub first_frame_gn_iters: usize,
    /// Total conjugate-gradient budget of the first-frame optimisation.
    pub first_frame_cg_iters: usize,
    pub update_cg_iters: usize,
    /// Number of basis filters, capped by the feature dimension.
    pub basis_filters: usize,
    pub scales: Vec<f64>,
    /// Label standard deviation relative to the tag-box size.
    pub label_sigma_factor: f64,
    pub reg_min: f64,
    pub reg_slope: f64,
    /// Bounds on the tag-box size relative to its initial size.
    pub min_scale: f64,
    pub max_scale: f64,
    /// Extra single-scale localisation passes around the first estimate.
    pub refine_passes: usize,
    /// Per-axis upsampling of the response before peak search.
    pub response_upsample: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            max_components: 30,
            learning_rate: 0.09,
            drop_threshold: 1e-4,
            update_interval: 2,
            first_frame_gn_iters: 10,
            first_frame_cg_iters: 120,
            update_cg_iters: 5,
            basis_filters: 16,
            scales: vec![0.98, 1.0, 1.02],
            label_sigma_factor: 1.0 / 12.0,
            reg_min: 1e-2,
            reg_slope: 1.0,
            min_scale: 0.7,
            max_scale: 1.4,
            refine_passes: 2,
            response_upsample: 4,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("max_components", self.max_components),
            ("update_interval", self.update_interval),
            ("first_frame_gn_iters", self.first_frame_gn_iters),
            ("first_frame_cg_iters", self.first_frame_cg_iters),
            ("update_cg_iters", self.update_cg_iters),
            ("basis_filters", self.basis_filters),
            ("response_upsample", self.response_upsample),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(Error::Config(format!("tracker.{name} must be >= 1")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("tracker.learning_rate must be in (0, 1]".into()));
        }
        if self.scales.is_empty() || self.scales.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("tracker.scales must be non-empty and positive".into()));
        }
        if !(self.label_sigma_factor > 0.0) || !(self.reg_min > 0.0) || !(self.reg_slope >= 0.0) {
            return Err(Error::Config("tracker label/regularisation parameters must be positive".into()));
        }
        if !(self.min_scale > 0.0 && self.min_scale <= 1.0 && self.max_scale >= 1.0) {
            return Err(Error::Config("tracker scale bounds must satisfy 0 < min <= 1 <= max".into()));
        }
        Ok(())
    }
}

/// Result of one localisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Localization {
    pub tag_box: TagBox,
    pub peak_score: f64,
    /// Scale factor that won, relative to the prior size.
    pub scale: f64,
}

/// Trains a fresh model from the first frame of a track.
pub fn init_track_model(
    frame: &Frame,
    tb: &TagBox,
    cfg: &TrackerConfig,
    fcfg: &FeatureConfig,
    table: &ColorNameTable,
) -> Result<FilterModel> {
    FilterModel::init(frame, tb, cfg, fcfg, table)
}

/// Sub-cell offset of the maximum of a least-squares quadratic fitted to the
/// 3x3 neighbourhood of `(px, py)` (wrapping). Returns `(0, 0)` when the fit
/// is not a proper maximum.
pub fn quadratic_peak_offset(response: &[f64], width: usize, height: usize, px: usize, py: usize) -> (f64, f64) {
    let at = |dx: isize, dy: isize| {
        let x = (px as isize + dx).rem_euclid(width as isize) as usize;
        let y = (py as isize + dy).rem_euclid(height as isize) as usize;
        response[y * width + x]
    };
    let (mut s0, mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let v = at(dx, dy);
            let (x, y) = (dx as f64, dy as f64);
            s0 += v;
            sx += x * v;
            sy += y * v;
            sxx += x * x * v;
            syy += y * y * v;
            sxy += x * y * v;
        }
    }
    // f = a + b x + c y + d x^2 + e x y + g y^2, orthogonal design on the
    // 3x3 stencil
    let b = sx / 6.0;
    let c = sy / 6.0;
    let e = sxy / 4.0;
    let d = (sxx - 2.0 / 3.0 * s0) / 2.0;
    let g = (syy - 2.0 / 3.0 * s0) / 2.0;
    // degenerate axes (width or height < 3) only get the other direction
    let (d, b, e) = if width < 3 { (-1.0, 0.0, 0.0) } else { (d, b, e) };
    let (g, c, e) = if height < 3 { (-1.0, 0.0, 0.0) } else { (g, c, e) };
    let det = 4.0 * d * g - e * e;
    if !(d < 0.0 && det > 0.0) {
        return (0.0, 0.0);
    }
    let x = (-2.0 * g * b + e * c) / det;
    let y = (-2.0 * d * c + e * b) / det;
    (x.clamp(-1.0, 1.0), y.clamp(-1.0, 1.0))
}

/// Location of the global maximum, as a signed shift in grid cells, with
/// the peak value.
pub fn response_peak(response: &[f64], width: usize, height: usize) -> ((f64, f64), f64) {
    let (idx, &peak) = response
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty response");
    let (px, py) = (idx % width, idx / width);
    let (ox, oy) = quadratic_peak_offset(response, width, height, px, py);
    let wrap = |i: usize, n: usize| if 2 * i > n { i as f64 - n as f64 } else { i as f64 };
    ((wrap(px, width) + ox, wrap(py, height) + oy), peak)
}

impl FilterModel {
    /// Searches around `prior` at each configured scale and returns the
    /// tag-box at the strongest response. The model is not modified.
    pub fn localize(
        &self,
        frame: &Frame,
        prior: &TagBox,
        cfg: &TrackerConfig,
        fcfg: &FeatureConfig,
        table: &ColorNameTable,
    ) -> Result<Localization> {
        let [rw, rh] = self.reference_size();
        let base = (prior.w() / rw).clamp(cfg.min_scale, cfg.max_scale);
        let side = fcfg.search_area_factor.sqrt();
        let (gw, gh) = self.grid();

        let probe = |cx: f64, cy: f64, total: f64| -> Result<((f64, f64), f64)> {
            let reference = TagBox::new(cx, cy, rw, rh)?;
            let stack = sample_features(frame, &reference, total, fcfg, table)?;
            let k = cfg.response_upsample;
            let response = self.upsampled_response(&stack, k)?;
            let ((sx, sy), peak) = response_peak(&response, gw * k, gh * k);
            let cell_x = rw * side * total / (gw * k) as f64;
            let cell_y = rh * side * total / (gh * k) as f64;
            Ok(((sx * cell_x, sy * cell_y), peak))
        };

        let mut best: Option<((f64, f64), f64, f64, f64)> = None;
        for &s in &cfg.scales {
            let total = (base * s).clamp(cfg.min_scale, cfg.max_scale);
            let (shift, peak) = probe(prior.cx(), prior.cy(), total)?;
            if best.is_none_or(|b| peak > b.1) {
                best = Some((shift, peak, total, s));
            }
        }
        let ((mut dx, mut dy), mut peak, total, s) = best.expect("scales validated non-empty");
        for _ in 0..cfg.refine_passes {
            let ((rx, ry), p) = probe(prior.cx() + dx, prior.cy() + dy, total)?;
            dx += rx;
            dy += ry;
            peak = p;
        }
        let tag_box = TagBox::new(prior.cx() + dx, prior.cy() + dy, rw * total, rh * total)?;
        Ok(Localization {
            tag_box,
            peak_score: peak,
            scale: s,
        })
    }

    /// Adds the sample at `tb` to the training set and refines the filters
    /// with the configured number of warm-started CG iterations.
    pub fn update(
        &mut self,
        frame: &Frame,
        tb: &TagBox,
        cfg: &TrackerConfig,
        fcfg: &FeatureConfig,
        table: &ColorNameTable,
    ) -> Result<()> {
        let [rw, rh] = self.reference_size();
        let total = (tb.w() / rw).clamp(cfg.min_scale, cfg.max_scale);
        let reference = TagBox::new(tb.cx(), tb.cy(), rw, rh)?;
        let stack = sample_features(frame, &reference, total, fcfg, table)?;
        let z = self.sample_spectra(&stack)?;
        self.sample_space_mut().update(z)?;
        self.refine_filter(cfg.update_cg_iters);
        Ok(())
    }
}

#[cfg(test)]
mod tests;
