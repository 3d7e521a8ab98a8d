use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::features::{ColorMode, FeatureStack};

fn random_real(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn stack_from(channels: usize, width: usize, height: usize, data: Vec<f64>) -> FeatureStack {
    FeatureStack {
        channels,
        width,
        height,
        data,
    }
}

fn toy_model(w: usize, h: usize, dims: usize, basis: usize, rng: &mut ChaCha8Rng, reg: Vec<f64>) -> FilterModel {
    let projection = random_real(rng, dims * basis);
    let filters = random_real(rng, basis * w * h);
    FilterModel::from_parts(w, h, projection, dims, &filters, reg, [1.0, 1.0], &TrackerConfig::default()).unwrap()
}

/// r(tau) = sum_c sum_u f_c(u) z_c(u + tau), circular.
fn spatial_correlation(f: &[f64], z: &[f64], w: usize, h: usize, channels: usize) -> Vec<f64> {
    let n = w * h;
    let mut r = vec![0.0; n];
    for ty in 0..h {
        for tx in 0..w {
            let mut acc = 0.0;
            for c in 0..channels {
                for uy in 0..h {
                    for ux in 0..w {
                        let zx = (ux + tx) % w;
                        let zy = (uy + ty) % h;
                        acc += f[c * n + uy * w + ux] * z[c * n + zy * w + zx];
                    }
                }
            }
            r[ty * w + tx] = acc;
        }
    }
    r
}

#[test]
fn response_matches_spatial_correlation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = toy_model(8, 8, 1, 1, &mut rng, vec![1.0; 64]);
    // single channel, unit projection
    let mut model = model;
    model.projection = vec![1.0];
    let x = random_real(&mut rng, 64);
    let r = model.compute_response(&stack_from(1, 8, 8, x.clone())).unwrap();
    let oracle = spatial_correlation(&model.spatial_filters(), &x, 8, 8, 1);
    for (a, b) in r.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn projected_response_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (w, h, d, c) = (7, 5, 4, 2);
    let model = toy_model(w, h, d, c, &mut rng, vec![1.0; w * h]);
    let x = random_real(&mut rng, d * w * h);
    let stack = stack_from(d, w, h, x);
    let z = model.project(&stack).unwrap();
    let oracle = spatial_correlation(&model.spatial_filters(), &z, w, h, c);
    let r = model.compute_response(&stack).unwrap();
    for (a, b) in r.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn zero_features_give_zero_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = toy_model(6, 4, 3, 2, &mut rng, vec![1.0; 24]);
    let r = model.compute_response(&FeatureStack::zeros(3, 6, 4)).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn response_rejects_wrong_dimensions() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let model = toy_model(6, 4, 3, 2, &mut rng, vec![1.0; 24]);
    assert!(matches!(
        model.compute_response(&FeatureStack::zeros(2, 6, 4)),
        Err(Error::DimensionMismatch { .. })
    ));
    assert!(model.compute_response(&FeatureStack::zeros(3, 5, 4)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn response_is_linear(seed in any::<u64>(), alpha in -3.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w, h, d) = (5, 4, 3);
        let model = toy_model(w, h, d, 2, &mut rng, vec![1.0; w * h]);
        let a = random_real(&mut rng, d * w * h);
        let b = random_real(&mut rng, d * w * h);
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + y).collect();
        let ra = model.compute_response(&stack_from(d, w, h, a)).unwrap();
        let rb = model.compute_response(&stack_from(d, w, h, b)).unwrap();
        let rs = model.compute_response(&stack_from(d, w, h, sum)).unwrap();
        for i in 0..w * h {
            prop_assert!((rs[i] - (alpha * ra[i] + rb[i])).abs() < 1e-9);
        }
    }
}

#[test]
fn scaling_features_scales_response() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = toy_model(6, 6, 2, 2, &mut rng, vec![1.0; 36]);
    let x = random_real(&mut rng, 72);
    let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let r = model.compute_response(&stack_from(2, 6, 6, x)).unwrap();
    let r2 = model.compute_response(&stack_from(2, 6, 6, x2)).unwrap();
    for (a, b) in r.iter().zip(&r2) {
        assert!((2.0 * a - b).abs() < 1e-12);
    }
}

/// Single-channel model on an 8x8 grid with one training component.
fn ridge_setup(seed: u64, reg: f64) -> (FilterModel, Vec<Complex64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeros = vec![0.0; 64];
    let mut model = FilterModel::from_parts(
        8,
        8,
        vec![1.0],
        1,
        &zeros,
        vec![reg; 64],
        [1.5, 1.5],
        &TrackerConfig::default(),
    )
    .unwrap();
    let x = random_real(&mut rng, 64);
    let z = model.sample_spectra(&stack_from(1, 8, 8, x)).unwrap();
    model.sample_space.update(z.clone()).unwrap();
    (model, z)
}

#[test]
fn cg_matches_closed_form_ridge() {
    let (mut model, z) = ridge_setup(6, 1.0);
    model.train_filter(200);
    let y = model.label_spectrum().to_vec();
    for ((f, zk), yk) in model.filter_spectra().iter().zip(&z).zip(&y) {
        // u = conj(F) solves (|Z|^2 + 1) u = conj(Z) Y
        let u = zk.conj() * yk / (zk.norm_sqr() + 1.0);
        assert!((f.conj() - u).norm() < 1e-6, "{f} vs {u}");
    }
}

#[test]
fn cg_objective_is_monotone_and_fixed_point_is_stable() {
    let (mut model, _) = ridge_setup(7, 0.3);
    let start = model.objective();
    let trace = model.train_filter(80);
    assert!(trace[0] <= start + 1e-12);
    for pair in trace.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12, "{pair:?}");
    }
    let converged = model.objective();
    model.train_filter(5);
    assert!(converged - model.objective() < 1e-10);
}

#[test]
fn spectral_data_term_matches_spatial_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (w, h, d, c) = (9, 7, 3, 2);
    let mut model = toy_model(w, h, d, c, &mut rng, vec![1.0; w * h]);
    let label = gaussian_label(w, h, model.label_sigma());
    let weights = [0.7, 0.3];
    let mut spatial = 0.0;
    let mut samples = Vec::new();
    for &pi in &weights {
        let x = stack_from(d, w, h, random_real(&mut rng, d * w * h));
        let r = model.compute_response(&x).unwrap();
        spatial += pi * r.iter().zip(&label).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        samples.push(model.sample_spectra(&x).unwrap());
    }
    model.sample_space = GmmSampleSpace::new(5, 0.3, 1e-4);
    for s in samples {
        model.sample_space.update(s).unwrap();
    }
    assert!((model.data_term() - spatial).abs() < 1e-6 * spatial.max(1.0));
}

#[test]
fn regularization_bowl_is_centered() {
    let w = regularization_weights(10, 8, 0.01, 1.0);
    let min = w.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(min >= 0.01);
    // the four central cells share the minimum
    for (x, y) in [(4, 3), (5, 3), (4, 4), (5, 4)] {
        assert!((w[y * 10 + x] - min).abs() < 1e-12);
    }
    assert!(w[0] > w[3 * 10 + 4]);
}

#[test]
fn label_peaks_at_origin_and_wraps() {
    let y = gaussian_label(8, 6, [1.0, 1.0]);
    assert_eq!(y[0], 1.0);
    assert!((y[1] - y[7]).abs() < 1e-15);
    assert!((y[8] - y[5 * 8]).abs() < 1e-15);
}

#[test]
fn quadratic_fit_recovers_paraboloid_peak() {
    let (w, h) = (9, 9);
    let (x0, y0) = (0.3, -0.2);
    let r: Vec<f64> = (0..w * h)
        .map(|i| {
            let x = (i % w) as f64 - 4.0;
            let y = (i / w) as f64 - 4.0;
            5.0 - (x - x0).powi(2) - 2.0 * (y - y0).powi(2) + 0.5 * (x - x0) * (y - y0)
        })
        .collect();
    let (ox, oy) = quadratic_peak_offset(&r, w, h, 4, 4);
    assert!((ox - x0).abs() < 1e-12 && (oy - y0).abs() < 1e-12);
}

#[test]
fn peak_shift_wraps_to_signed_displacement() {
    let (w, h) = (8, 6);
    let mut r = vec![0.0; w * h];
    r[5 * w + 7] = 1.0;
    let ((sx, sy), peak) = response_peak(&r, w, h);
    assert_eq!(peak, 1.0);
    assert!((sx + 1.0).abs() < 1e-12 && (sy + 1.0).abs() < 1e-12);
}

// ----- first-frame optimisation on toy problems -----

fn joint_toy(seed: u64, w: usize, h: usize, d: usize, basis: usize, rank_one: bool) -> FilterModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TrackerConfig {
        basis_filters: basis,
        ..TrackerConfig::default()
    };
    let n = w * h;
    let data = if rank_one {
        let g = random_real(&mut rng, n);
        let a = [1.0, -0.5, 2.0, 0.8];
        (0..d).flat_map(|c| g.iter().map(move |v| v * a[c % 4])).collect()
    } else {
        random_real(&mut rng, d * n)
    };
    let stack = stack_from(d, w, h, data);
    FilterModel::untrained(&stack, &cfg, [w as f64 / 2.0, h as f64 / 2.0], 2.0).unwrap()
}

#[test]
fn square_factorization_matches_filter_only_training() {
    let mut joint = joint_toy(9, 6, 5, 3, 3, false);
    assert_eq!(joint.projection(), &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
    let mut plain = joint.clone();
    joint.joint_optimize_projection(10, 400);
    let z = plain.project_spectra_for_tests();
    plain.sample_space.update(z).unwrap();
    plain.train_filter(400);
    for (a, b) in joint.filter_spectra().iter().zip(plain.filter_spectra()) {
        assert!((a - b).norm() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn gauss_newton_objective_is_monotone() {
    let mut model = joint_toy(10, 8, 6, 6, 2, false);
    let trace = model.joint_optimize_projection(10, 120);
    assert_eq!(trace.len(), 10);
    for pair in trace.windows(2) {
        assert!(pair[1] <= pair[0] + 1e-12);
    }
    assert!(trace[9] <= trace[0]);
    // the projection keeps full column rank
    let p = model.projection();
    let (d, c) = (6, 2);
    let dot = |i: usize, j: usize| (0..d).map(|r| p[r * c + i] * p[r * c + j]).sum::<f64>();
    let gram_det = dot(0, 0) * dot(1, 1) - dot(0, 1).powi(2);
    assert!(gram_det > 1e-6);
}

#[test]
fn rank_one_features_need_one_basis_filter() {
    let mut full = joint_toy(11, 6, 6, 4, 4, true);
    let mut reduced = joint_toy(11, 6, 6, 4, 1, true);
    let a = full.joint_optimize_projection(10, 1200);
    let b = reduced.joint_optimize_projection(10, 1200);
    let (a, b) = (a.last().unwrap(), b.last().unwrap());
    assert!((a - b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn degenerate_sample_is_rejected() {
    let stack = FeatureStack::zeros(31, 8, 8);
    let cfg = TrackerConfig::default();
    assert!(matches!(
        FilterModel::untrained(&stack, &cfg, [4.0, 4.0], 2.0),
        Err(Error::DegenerateSample)
    ));
    let flat = Frame::filled(120, 90, ColorMode::Color, 0.45).unwrap();
    let tb = TagBox::new(60.0, 45.0, 30.0, 24.0).unwrap();
    let r = init_track_model(&flat, &tb, &cfg, &FeatureConfig::default(), ColorNameTable::builtin());
    assert!(matches!(r, Err(Error::DegenerateSample)));
}

// ----- image-level behaviour -----

fn texture(x: f64, y: f64, seed: u64) -> [f32; 3] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = [0.0f64; 3];
    for _ in 0..24 {
        let fx: f64 = rng.random_range(-0.7..0.7);
        let fy: f64 = rng.random_range(-0.7..0.7);
        let ph: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for (k, vk) in v.iter_mut().enumerate() {
            let wk: f64 = rng.random_range(0.0..1.0);
            *vk += wk * (fx * x + fy * y + ph + k as f64).sin();
        }
    }
    v.map(|c| (0.5 + 0.08 * c).clamp(0.0, 1.0) as f32)
}

fn textured_frame(dx: f64, dy: f64, seed: u64) -> Frame {
    Frame::from_fn(200, 160, ColorMode::Color, |x, y| texture(x as f64 - dx, y as f64 - dy, seed)).unwrap()
}

fn trained(seed: u64) -> (Frame, TagBox, FilterModel, TrackerConfig, FeatureConfig) {
    let frame = textured_frame(0.0, 0.0, seed);
    let tb = TagBox::new(100.0, 80.0, 32.0, 24.0).unwrap();
    let cfg = TrackerConfig::default();
    let fcfg = FeatureConfig::default();
    let model = init_track_model(&frame, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
    (frame, tb, model, cfg, fcfg)
}

#[test]
fn init_seeds_one_component_and_beats_zero_filters() {
    let (frame, tb, model, _, fcfg) = trained(21);
    assert_eq!(model.sample_space().len(), 1);
    assert_eq!(model.sample_space().components()[0].weight, 1.0);
    let label = gaussian_label(model.grid().0, model.grid().1, model.label_sigma());
    let zero_objective: f64 = label.iter().map(|v| v * v).sum();
    assert!(model.objective() <= zero_objective);
    assert!(model.filter_spectra().iter().all(|c| c.re.is_finite() && c.im.is_finite()));

    let stack = sample_features(&frame, &tb, 1.0, &fcfg, ColorNameTable::builtin()).unwrap();
    let (w, h) = model.grid();
    let r = model.compute_response(&stack).unwrap();
    let ((sx, sy), _) = response_peak(&r, w, h);
    assert!(sx.abs() <= 0.5 && sy.abs() <= 0.5, "peak at ({sx}, {sy})");
    // exhaustive scan agrees on the integer peak
    let best = (0..w * h).max_by(|&a, &b| r[a].total_cmp(&r[b])).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn localize_on_training_frame_returns_init_box() {
    let (frame, tb, model, cfg, fcfg) = trained(22);
    let before = model.clone();
    let loc = model.localize(&frame, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
    assert!((loc.tag_box.cx() - tb.cx()).abs() <= 0.5);
    assert!((loc.tag_box.cy() - tb.cy()).abs() <= 0.5);
    assert_eq!(model, before);
}

#[test]
fn localize_follows_integer_translation() {
    let (_, tb, model, cfg, fcfg) = trained(23);
    for (dx, dy) in [(3.0, -2.0), (-7.0, 5.0), (10.0, 6.0), (-4.0, -9.0)] {
        let moved = textured_frame(dx, dy, 23);
        let loc = model.localize(&moved, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
        let (ex, ey) = (loc.tag_box.cx() - tb.cx() - dx, loc.tag_box.cy() - tb.cy() - dy);
        assert!(ex.abs() <= 1.0 && ey.abs() <= 1.0, "shift ({dx},{dy}) error ({ex:.2},{ey:.2})");
    }
}

#[test]
fn matching_frame_scores_above_noise() {
    let (frame, tb, model, cfg, fcfg) = trained(24);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let data = (0..200 * 160 * 3).map(|_| rng.random::<f32>()).collect();
    let noise = Frame::new(200, 160, ColorMode::Color, data).unwrap();
    let table = ColorNameTable::builtin();
    let good = model.localize(&frame, &tb, &cfg, &fcfg, table).unwrap();
    let bad = model.localize(&noise, &tb, &cfg, &fcfg, table).unwrap();
    assert!(good.peak_score > bad.peak_score);
}

#[test]
fn update_keeps_space_normalized() {
    let (_, tb, mut model, cfg, fcfg) = trained(25);
    for k in 0..4 {
        let f = textured_frame(k as f64, 0.0, 25);
        let loc = model.localize(&f, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
        model.update(&f, &loc.tag_box, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
    }
    assert_eq!(model.sample_space().len(), 5);
    assert!((model.sample_space().weight_sum() - 1.0).abs() < 1e-9);
}

#[test]
fn model_round_trips_through_json() {
    let (frame, tb, model, cfg, fcfg) = trained(26);
    let mut buf = Vec::new();
    model.write_to(&mut buf).unwrap();
    let back = FilterModel::read_from(buf.as_slice()).unwrap();
    let a = model.localize(&frame, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
    let b = back.localize(&frame, &tb, &cfg, &fcfg, ColorNameTable::builtin()).unwrap();
    assert_eq!(a, b);
    let bumped = String::from_utf8(buf).unwrap().replacen("\"version\":1", "\"version\":9", 1);
    assert!(matches!(FilterModel::read_from(bumped.as_bytes()), Err(Error::ModelVersion(9))));
}

#[test]
fn config_validation() {
    assert!(TrackerConfig::default().validate().is_ok());
    let bad = TrackerConfig {
        scales: vec![1.0, -0.5],
        ..TrackerConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = TrackerConfig {
        update_cg_iters: 0,
        ..TrackerConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn upsampled_response_interpolates_the_coarse_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    for (w, h) in [(8, 6), (7, 5)] {
        let model = toy_model(w, h, 2, 2, &mut rng, vec![1.0; w * h]);
        let x = stack_from(2, w, h, random_real(&mut rng, 2 * w * h));
        let coarse = model.compute_response(&x).unwrap();
        let fine = model.upsampled_response(&x, 3).unwrap();
        for y in 0..h {
            for i in 0..w {
                assert!((coarse[y * w + i] - fine[3 * y * 3 * w + 3 * i]).abs() < 1e-9);
            }
        }
    }
}
