use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use super::gmm::GmmSampleSpace;
use super::solver::{self, FilterProblem, JointProblem};
use super::TrackerConfig;
use crate::error::{Error, Result};
use crate::features::{sample_features, ColorNameTable, FeatureConfig, FeatureStack, Frame};
use crate::geometry::TagBox;

const MODEL_FORMAT_VERSION: u32 = 1;

/// Learned per-track correlation filter.
///
/// `filters` holds `C` basis filters as spectra of real spatial filters,
/// `projection` the `D x C` matrix (row-major) that maps feature channels
/// onto those bases, and `reg_weights` the spatial penalty `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterModel {
    pub(crate) width: usize,
    pub(crate) height: usize,
    pub(crate) dims: usize,
    pub(crate) basis: usize,
    pub(crate) filters: Vec<Complex64>,
    pub(crate) projection: Vec<f64>,
    pub(crate) reg_weights: Vec<f64>,
    pub(crate) label: Vec<Complex64>,
    pub(crate) label_sigma: [f64; 2],
    pub(crate) sample_space: GmmSampleSpace,
    pub(crate) reference_size: [f64; 2],
    /// Raw spectra of the first sample; only needed for the joint
    /// first-frame optimisation.
    #[serde(skip)]
    pub(crate) init_sample: Option<Vec<Complex64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    model: FilterModel,
}

/// Quadratic bowl, smallest at the grid centre.
pub fn regularization_weights(width: usize, height: usize, w_min: f64, slope: f64) -> Vec<f64> {
    let (hx, hy) = (width as f64 / 2.0, height as f64 / 2.0);
    let mut w = Vec::with_capacity(width * height);
    for y in 0..height {
        let uy = (y as f64 + 0.5 - hy) / hy;
        for x in 0..width {
            let ux = (x as f64 + 0.5 - hx) / hx;
            w.push(w_min + slope * (ux * ux + uy * uy));
        }
    }
    w
}

/// Periodic Gaussian peaked at the grid origin (zero shift).
pub fn gaussian_label(width: usize, height: usize, sigma: [f64; 2]) -> Vec<f64> {
    let wrap = |i: usize, n: usize| {
        let i = i as f64;
        let n = n as f64;
        if i > n / 2.0 {
            i - n
        } else {
            i
        }
    };
    let mut y = Vec::with_capacity(width * height);
    for j in 0..height {
        let dy = wrap(j, height);
        for i in 0..width {
            let dx = wrap(i, width);
            y.push((-0.5 * (dx * dx / (sigma[0] * sigma[0]) + dy * dy / (sigma[1] * sigma[1]))).exp());
        }
    }
    y
}

fn identity(d: usize) -> Vec<f64> {
    let mut p = vec![0.0; d * d];
    for i in 0..d {
        p[i * d + i] = 1.0;
    }
    p
}

/// Top-`basis` principal directions of the per-cell channel vectors, as a
/// `dims x basis` row-major matrix.
fn principal_projection(stack: &FeatureStack, basis: usize) -> Result<Vec<f64>> {
    let d = stack.channels;
    let n = stack.cells();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for a in 0..d {
        let xa = stack.channel(a);
        for b in a..d {
            let xb = stack.channel(b);
            let v: f64 = xa.iter().zip(xb).map(|(p, q)| p * q).sum::<f64>() / n as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    if cov.trace() <= 1e-12 {
        return Err(Error::DegenerateSample);
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut p = vec![0.0; d * basis];
    for (c, &k) in order.iter().take(basis).enumerate() {
        let col = eig.eigenvectors.column(k);
        // fix the sign so results do not depend on the eigen solver's choice
        let pivot = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            p[r * basis + c] = sign * col[r];
        }
    }
    Ok(p)
}

impl FilterModel {
    /// Builds an untrained model around an explicit projection and filter
    /// set. Filters are spatial, `basis` channels of `width * height`.
    pub fn from_parts(
        width: usize,
        height: usize,
        projection: Vec<f64>,
        dims: usize,
        spatial_filters: &[f64],
        reg_weights: Vec<f64>,
        label_sigma: [f64; 2],
        cfg: &TrackerConfig,
    ) -> Result<Self> {
        let n = width * height;
        if n == 0 || dims == 0 || !projection.len().is_multiple_of(dims) {
            return Err(Error::DimensionMismatch {
                expected: format!("{dims} x C projection"),
                actual: format!("{} entries", projection.len()),
            });
        }
        let basis = projection.len() / dims;
        if spatial_filters.len() != basis * n || reg_weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{basis} filters and {n} weights"),
                actual: format!("{} / {}", spatial_filters.len(), reg_weights.len()),
            });
        }
        let fft = Fft2::new(width, height);
        let filters = spatial_filters.chunks_exact(n).flat_map(|f| fft.forward_real(f)).collect();
        let label = fft.forward_real(&gaussian_label(width, height, label_sigma));
        Ok(Self {
            width,
            height,
            dims,
            basis,
            filters,
            projection,
            reg_weights,
            label,
            label_sigma,
            sample_space: GmmSampleSpace::new(cfg.max_components, cfg.learning_rate, cfg.drop_threshold),
            reference_size: [1.0, 1.0],
            init_sample: None,
        })
    }

    /// Trains a model from the first frame: extracts the sample, initialises
    /// the projection by PCA, jointly refines filters and projection and
    /// seeds the sample space.
    pub fn init(
        frame: &Frame,
        tb: &TagBox,
        cfg: &TrackerConfig,
        fcfg: &FeatureConfig,
        table: &ColorNameTable,
    ) -> Result<Self> {
        cfg.validate()?;
        let stack = sample_features(frame, tb, 1.0, fcfg, table)?;
        let mut model = Self::untrained(&stack, cfg, [tb.w(), tb.h()], fcfg.search_area_factor.sqrt())?;
        model.joint_optimize_projection(cfg.first_frame_gn_iters, cfg.first_frame_cg_iters);
        let z = model.project_spectra(model.init_sample.as_ref().expect("set by untrained"));
        model.sample_space.update(z)?;
        Ok(model)
    }

    /// Model with initial projection, zero filters and the raw sample kept
    /// for joint optimisation; the sample space is still empty. `search_side`
    /// is the linear ratio between the sampled area and the tag-box.
    pub fn untrained(
        stack: &FeatureStack,
        cfg: &TrackerConfig,
        reference_size: [f64; 2],
        search_side: f64,
    ) -> Result<Self> {
        let (w, h, d) = (stack.width, stack.height, stack.channels);
        let basis = d.min(cfg.basis_filters).max(1);
        let projection = if basis == d {
            if stack.data.iter().all(|v| *v == 0.0) {
                return Err(Error::DegenerateSample);
            }
            identity(d)
        } else {
            principal_projection(stack, basis)?
        };
        let sigma = [
            (w as f64 / search_side * cfg.label_sigma_factor).max(0.25),
            (h as f64 / search_side * cfg.label_sigma_factor).max(0.25),
        ];
        let reg = regularization_weights(w, h, cfg.reg_min, cfg.reg_slope);
        let zeros = vec![0.0; basis * w * h];
        let mut model = Self::from_parts(w, h, projection, d, &zeros, reg, sigma, cfg)?;
        let fft = Fft2::new(w, h);
        model.init_sample = Some((0..d).flat_map(|c| fft.forward_real(stack.channel(c))).collect());
        model.reference_size = reference_size;
        Ok(model)
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.width, self.height)
    }
    pub fn feature_channels(&self) -> usize {
        self.dims
    }
    pub fn basis_count(&self) -> usize {
        self.basis
    }
    pub fn projection(&self) -> &[f64] {
        &self.projection
    }
    pub fn filter_spectra(&self) -> &[Complex64] {
        &self.filters
    }
    pub fn reg_weights(&self) -> &[f64] {
        &self.reg_weights
    }
    pub fn label_spectrum(&self) -> &[Complex64] {
        &self.label
    }
    pub fn label_sigma(&self) -> [f64; 2] {
        self.label_sigma
    }
    pub fn sample_space(&self) -> &GmmSampleSpace {
        &self.sample_space
    }
    pub fn sample_space_mut(&mut self) -> &mut GmmSampleSpace {
        &mut self.sample_space
    }
    pub fn reference_size(&self) -> [f64; 2] {
        self.reference_size
    }
    pub fn fft(&self) -> Fft2 {
        Fft2::new(self.width, self.height)
    }

    /// Spatial basis filters (real parts of the inverse transforms).
    pub fn spatial_filters(&self) -> Vec<f64> {
        let fft = self.fft();
        self.filters.chunks_exact(self.cells()).flat_map(|f| fft.inverse_real(f)).collect()
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    fn conj_filters(&self) -> Vec<Complex64> {
        self.filters.iter().map(|c| c.conj()).collect()
    }

    fn set_from_conj(&mut self, u: &[Complex64]) {
        self.filters = u.iter().map(|c| c.conj()).collect();
    }

    fn check_stack(&self, stack: &FeatureStack) -> Result<()> {
        if stack.channels != self.dims || stack.width != self.width || stack.height != self.height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} x {} x {}", self.dims, self.width, self.height),
                actual: format!("{} x {} x {}", stack.channels, stack.width, stack.height),
            });
        }
        Ok(())
    }

    /// Projects a spatial feature stack onto the basis: `C x N` values.
    pub fn project(&self, stack: &FeatureStack) -> Result<Vec<f64>> {
        self.check_stack(stack)?;
        let n = self.cells();
        let mut z = vec![0.0; self.basis * n];
        for d in 0..self.dims {
            let xd = stack.channel(d);
            for c in 0..self.basis {
                let p = self.projection[d * self.basis + c];
                if p == 0.0 {
                    continue;
                }
                for (zi, xi) in z[c * n..(c + 1) * n].iter_mut().zip(xd) {
                    *zi += p * xi;
                }
            }
        }
        Ok(z)
    }

    fn project_spectra(&self, x: &[Complex64]) -> Vec<Complex64> {
        project_spectra_with(&self.projection, x, self.dims, self.basis, self.cells())
    }

    /// Projected spectra of a sample, the form stored in the sample space.
    pub fn sample_spectra(&self, stack: &FeatureStack) -> Result<Vec<Complex64>> {
        let z = self.project(stack)?;
        let fft = self.fft();
        Ok(z.chunks_exact(self.cells()).flat_map(|c| fft.forward_real(c)).collect())
    }

    /// Correlation response of the filter over the sample grid. Index `0`
    /// is zero shift; indices wrap.
    pub fn compute_response(&self, stack: &FeatureStack) -> Result<Vec<f64>> {
        let zf = self.sample_spectra(stack)?;
        let u = self.conj_filters();
        let r = solver::response_spectrum(&u, &zf, self.cells());
        Ok(self.fft().inverse_real(&r))
    }

    /// The response evaluated on a grid `factor` times finer per axis, by
    /// zero-padding its spectrum. Sample `(i, j)` sits at shift
    /// `(i / factor, j / factor)` cells.
    pub fn upsampled_response(&self, stack: &FeatureStack, factor: usize) -> Result<Vec<f64>> {
        if factor <= 1 {
            return self.compute_response(stack);
        }
        let zf = self.sample_spectra(stack)?;
        let r = solver::response_spectrum(&self.conj_filters(), &zf, self.cells());
        let (w, h) = (self.width, self.height);
        let (bw, bh) = (w * factor, h * factor);
        let mut big = vec![Complex64::new(0.0, 0.0); bw * bh];
        // each source frequency maps to one or (at Nyquist) two target bins
        let targets = |k: usize, n: usize, big_n: usize| -> Vec<(usize, f64)> {
            if n.is_multiple_of(2) && k == n / 2 {
                vec![(n / 2, 0.5), (big_n - n / 2, 0.5)]
            } else if 2 * k < n {
                vec![(k, 1.0)]
            } else {
                vec![(big_n - (n - k), 1.0)]
            }
        };
        let scale = (factor * factor) as f64;
        for ky in 0..h {
            let ty = targets(ky, h, bh);
            for kx in 0..w {
                let tx = targets(kx, w, bw);
                let v = r[ky * w + kx] * scale;
                for &(y, wy) in &ty {
                    for &(x, wx) in &tx {
                        big[y * bw + x] += v * (wx * wy);
                    }
                }
            }
        }
        Ok(Fft2::new(bw, bh).inverse_real(&big))
    }

    fn reg_sq(&self) -> Vec<f64> {
        self.reg_weights.iter().map(|w| w * w).collect()
    }

    /// Weighted label error over the sample space plus the spatial penalty.
    pub fn objective(&self) -> f64 {
        let fft = self.fft();
        let reg_sq = self.reg_sq();
        let prob = FilterProblem {
            fft: &fft,
            samples: self.components_ref(),
            label: &self.label,
            reg_sq: &reg_sq,
            channels: self.basis,
        };
        prob.objective(&self.conj_filters())
    }

    /// The label-error part of [`objective`](Self::objective).
    pub fn data_term(&self) -> f64 {
        let fft = self.fft();
        let reg_sq = self.reg_sq();
        let prob = FilterProblem {
            fft: &fft,
            samples: self.components_ref(),
            label: &self.label,
            reg_sq: &reg_sq,
            channels: self.basis,
        };
        prob.data_term(&self.conj_filters())
    }

    fn components_ref(&self) -> Vec<(&[Complex64], f64)> {
        self.sample_space
            .components()
            .iter()
            .map(|c| (c.mean.as_slice(), c.weight))
            .collect()
    }

    /// Runs `iterations` warm-started conjugate-gradient steps on the filter
    /// normal equations with the projection held fixed. Returns the
    /// objective after every step.
    pub fn train_filter(&mut self, iterations: usize) -> Vec<f64> {
        self.train(iterations, true)
    }

    /// [`train_filter`](Self::train_filter) without evaluating the objective
    /// after each step.
    pub(crate) fn refine_filter(&mut self, iterations: usize) {
        self.train(iterations, false);
    }

    fn train(&mut self, iterations: usize, record: bool) -> Vec<f64> {
        if self.sample_space.is_empty() {
            return Vec::new();
        }
        let fft = self.fft();
        let reg_sq = self.reg_sq();
        let mut u = self.conj_filters();
        let mut trace = Vec::with_capacity(iterations);
        {
            let prob = FilterProblem {
                fft: &fft,
                samples: self.components_ref(),
                label: &self.label,
                reg_sq: &reg_sq,
                channels: self.basis,
            };
            prob.solve(&mut u, iterations, |x| {
                if record {
                    trace.push(prob.objective(x));
                }
            });
        }
        solver::symmetrize(&mut u, self.width, self.height);
        self.set_from_conj(&u);
        trace
    }

    /// Objective of the single first-frame sample under an explicit filter
    /// set and projection.
    fn joint_objective(&self, u: &[Complex64], projection: &[f64], sample: &[Complex64], fft: &Fft2, reg_sq: &[f64]) -> f64 {
        let z = project_spectra_with(projection, sample, self.dims, self.basis, self.cells());
        let prob = FilterProblem {
            fft,
            samples: vec![(&z, 1.0)],
            label: &self.label,
            reg_sq,
            channels: self.basis,
        };
        prob.objective(u)
    }

    /// Objective for the stored first-frame sample with the current
    /// filters and projection.
    pub fn first_frame_objective(&self) -> Option<f64> {
        let sample = self.init_sample.as_ref()?;
        let fft = self.fft();
        Some(self.joint_objective(&self.conj_filters(), &self.projection, sample, &fft, &self.reg_sq()))
    }

    /// First-frame Gauss-Newton refinement of filters and projection.
    /// `cg_iterations` is the total conjugate-gradient budget, split evenly
    /// over the outer steps. When no dimensionality reduction takes place
    /// (`C == D`) the projection carries no information and only the
    /// filters are optimised. Returns the objective after every outer step;
    /// the sequence is non-increasing.
    pub fn joint_optimize_projection(&mut self, gn_iterations: usize, cg_iterations: usize) -> Vec<f64> {
        let Some(sample) = self.init_sample.clone() else {
            return Vec::new();
        };
        let fft = self.fft();
        let reg_sq = self.reg_sq();
        let n = self.cells();
        let per_step = cg_iterations.div_ceil(gn_iterations.max(1)).max(1);
        let mut u = self.conj_filters();
        let mut projection = self.projection.clone();
        let mut current = self.joint_objective(&u, &projection, &sample, &fft, &reg_sq);
        let mut trace = Vec::with_capacity(gn_iterations);

        for _ in 0..gn_iterations {
            let z0 = project_spectra_with(&projection, &sample, self.dims, self.basis, n);
            let (cand_u, cand_p) = if self.basis == self.dims {
                let prob = FilterProblem {
                    fft: &fft,
                    samples: vec![(&z0, 1.0)],
                    label: &self.label,
                    reg_sq: &reg_sq,
                    channels: self.basis,
                };
                let mut next = u.clone();
                prob.solve(&mut next, per_step, |_| {});
                (next, projection.clone())
            } else {
                let prob = JointProblem {
                    fft: &fft,
                    sample: &sample,
                    u0: &u,
                    z0: &z0,
                    label: &self.label,
                    reg_sq: &reg_sq,
                    dims: self.dims,
                    basis: self.basis,
                };
                let mut x = u.clone();
                x.extend(std::iter::repeat_n(Complex64::new(0.0, 0.0), self.dims * self.basis));
                let b = prob.rhs();
                let diag = prob.preconditioner();
                solver::pcg(&mut x, &b, |v| prob.apply(v), &diag, per_step, |_| {});
                let dp: Vec<f64> = x[self.basis * n..].iter().map(|c| c.re).collect();
                x.truncate(self.basis * n);
                let p: Vec<f64> = projection.iter().zip(&dp).map(|(p, d)| p + d).collect();
                (x, p)
            };

            // Accept the step, or a shortened one, only if the true
            // objective does not increase.
            let mut accepted = None;
            let mut t = 1.0;
            for _ in 0..12 {
                let mut tu: Vec<Complex64> = u.iter().zip(&cand_u).map(|(a, b)| a + (b - a) * t).collect();
                let mut tp: Vec<f64> = projection.iter().zip(&cand_p).map(|(a, b)| a + (b - a) * t).collect();
                normalize_columns(&mut tp, &mut tu, self.dims, self.basis, n);
                solver::symmetrize(&mut tu, self.width, self.height);
                let obj = self.joint_objective(&tu, &tp, &sample, &fft, &reg_sq);
                if obj <= current {
                    accepted = Some((tu, tp, obj));
                    break;
                }
                t *= 0.5;
            }
            if let Some((tu, tp, obj)) = accepted {
                u = tu;
                projection = tp;
                current = obj;
            }
            trace.push(current);
        }
        self.set_from_conj(&u);
        self.projection = projection;
        trace
    }

    #[cfg(test)]
    pub(crate) fn project_spectra_for_tests(&self) -> Vec<Complex64> {
        self.project_spectra(self.init_sample.as_ref().expect("initial sample"))
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        serde_json::to_writer(&mut w, &file).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn read_from(r: impl Read) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Serde(e.to_string()))?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelVersion(file.version));
        }
        Ok(file.model)
    }
}

pub(crate) fn project_spectra_with(
    projection: &[f64],
    x: &[Complex64],
    dims: usize,
    basis: usize,
    n: usize,
) -> Vec<Complex64> {
    let mut z = vec![Complex64::new(0.0, 0.0); basis * n];
    for d in 0..dims {
        let xd = &x[d * n..(d + 1) * n];
        for c in 0..basis {
            let p = projection[d * basis + c];
            if p == 0.0 {
                continue;
            }
            for (zi, xi) in z[c * n..(c + 1) * n].iter_mut().zip(xd) {
                *zi += xi * p;
            }
        }
    }
    z
}

/// Rescales projection columns to unit length, moving the scale into the
/// matching filters so the effective filters are unchanged.
fn normalize_columns(p: &mut [f64], u: &mut [Complex64], dims: usize, basis: usize, n: usize) {
    for c in 0..basis {
        let norm = (0..dims).map(|d| p[d * basis + c].powi(2)).sum::<f64>().sqrt();
        if norm < 1e-12 {
            continue;
        }
        for d in 0..dims {
            p[d * basis + c] /= norm;
        }
        u[c * n..(c + 1) * n].iter_mut().for_each(|v| *v *= norm);
    }
}
