use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use tagtrack::dcf::{init_track_model, TrackerConfig};
use tagtrack::exec::{self, Mode};
use tagtrack::features::{ColorNameTable, FeatureConfig};
use tagtrack::pipeline::{run_scene, PipelineConfig, RunConfig, RunOptions};
use tagtrack::sim::{emit_ground_truth, simulate_states, Scenario, SceneConfig, SceneRenderer};

const MODES: [(&str, Mode); 2] = [("sequential", Mode::Sequential), ("parallel", Mode::Parallel)];

fn scene(frames: usize) -> SceneConfig {
    SceneConfig {
        frames,
        ..Scenario::Clean.scene(1)
    }
}

fn render(c: &mut Criterion) {
    let cfg = scene(2);
    let states = simulate_states(&cfg).unwrap();
    let renderer = SceneRenderer::new(&cfg, Mode::Parallel);
    let mut g = c.benchmark_group("render_frame");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| b.iter(|| renderer.render(black_box(&states[1]), mode)));
    }
    g.finish();
}

fn localize(c: &mut Criterion) {
    let cfg = scene(2);
    let states = simulate_states(&cfg).unwrap();
    let renderer = SceneRenderer::new(&cfg, Mode::Parallel);
    let (f0, f1) = (renderer.render(&states[0], Mode::Parallel), renderer.render(&states[1], Mode::Parallel));
    let tcfg = TrackerConfig::default();
    let fcfg = FeatureConfig::default();
    let table = ColorNameTable::builtin();
    let tag_boxes: Vec<_> = emit_ground_truth(&states)
        .initial_boxes()
        .iter()
        .map(|(_, b)| b.centered_tag_box(0.4).unwrap())
        .collect();
    let models: Vec<_> = tag_boxes
        .iter()
        .map(|tb| init_track_model(&f0, tb, &tcfg, &fcfg, table).unwrap())
        .collect();
    let tracks: Vec<_> = models.iter().zip(&tag_boxes).collect();

    let mut g = c.benchmark_group("localize_9_tracks");
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec::map(mode, &tracks, |(m, tb)| m.localize(black_box(&f1), tb, &tcfg, &fcfg, table).unwrap()))
        });
    }
    g.finish();

    let mut g = c.benchmark_group("init_9_models");
    g.sample_size(10);
    for (name, mode) in MODES {
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| exec::map(mode, &tag_boxes, |tb| init_track_model(black_box(&f0), tb, &tcfg, &fcfg, table).unwrap()))
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline_12_frames");
    g.sample_size(10);
    for (name, parallel) in [("sequential", false), ("parallel", true)] {
        let cfg = PipelineConfig {
            run: RunConfig { workers: 0, parallel },
            ..PipelineConfig::default()
        };
        g.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_scene(&cfg, Scenario::Clean, scene(12), 1, &RunOptions::default()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, render, localize, pipeline);
criterion_main!(benches);
