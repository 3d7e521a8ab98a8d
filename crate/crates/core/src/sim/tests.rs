use super::*;
use crate::geometry::iou;

fn frozen_config() -> SceneConfig {
    SceneConfig {
        step_sigma: 0.0,
        deformation: 0.0,
        frames: 40,
        ..SceneConfig::default()
    }
}

fn lens_area(r: f64, d: f64) -> f64 {
    if d >= 2.0 * r {
        return 0.0;
    }
    2.0 * r * r * (d / (2.0 * r)).acos() - 0.5 * d * (4.0 * r * r - d * d).sqrt()
}

#[test]
fn frozen_scene_stays_constant() {
    let cfg = frozen_config();
    let states = simulate_states(&cfg).unwrap();
    for s in &states[1..] {
        assert_eq!(s.agents, states[0].agents);
    }
}

#[test]
fn agents_stay_in_bounds() {
    let cfg = SceneConfig {
        step_sigma: 2.0,
        max_speed: 8.0,
        deformation: 0.3,
        turn_rate: 0.2,
        ..SceneConfig::default()
    };
    let mut s = SceneState::initial(&cfg).unwrap();
    for _ in 0..10_000 {
        s = step_scene(&s, &cfg);
        for a in &s.agents {
            let b = a.bounding_box();
            assert!(b.x() >= 0.0 && b.y() >= 0.0, "{b:?}");
            assert!(b.right() <= cfg.width as f64 && b.bottom() <= cfg.height as f64, "{b:?}");
            assert!(b.area() > 0.0);
        }
    }
}

#[test]
fn huddle_brings_members_together() {
    let cfg = SceneConfig {
        frames: 300,
        huddles: vec![Huddle {
            start: 20,
            end: 260,
            members: vec![0, 4],
            center: [400.0, 250.0],
            spacing: 0.3,
        }],
        ..SceneConfig::default()
    };
    let states = simulate_states(&cfg).unwrap();
    let overlap = |s: &SceneState| iou(&s.agents[0].bounding_box(), &s.agents[4].bounding_box());
    assert!(overlap(&states[0]) == 0.0);
    for s in &states[180..260] {
        assert!(overlap(s) > 0.3, "frame {}: {}", s.frame, overlap(s));
    }
    // repulsion separates them afterwards
    assert!(overlap(&states[299]) < overlap(&states[259]));
}

#[test]
fn zero_gain_is_black() {
    let cfg = SceneConfig {
        gain_schedule: vec![GainStep { frame: 0, gain: 0.0 }],
        ..SceneConfig::default()
    };
    let f = render_frame(&SceneState::initial(&cfg).unwrap(), &cfg);
    assert!(f.data().iter().all(|&v| v == 0.0));
}

#[test]
fn rendering_is_deterministic_across_modes() {
    let cfg = Scenario::S1.scene(3);
    let mut s = SceneState::initial(&cfg).unwrap();
    for _ in 0..200 {
        s = step_scene(&s, &cfg);
    }
    let a = render_frame_with(&s, &cfg, Mode::Sequential);
    let b = render_frame_with(&s, &cfg, Mode::Parallel);
    assert_eq!(a, b);
    let again = simulate_states(&cfg).unwrap();
    assert_eq!(again[200], s);
    assert_eq!(render_frame(&again[200], &cfg), a);
}

#[test]
fn gain_step_scales_mean_intensity() {
    for mode in [LightingMode::Day, LightingMode::Night] {
        let cfg = SceneConfig {
            mode,
            frames: 12,
            gain_schedule: vec![GainStep { frame: 10, gain: 0.6 }],
            ..SceneConfig::default()
        };
        let states = simulate_states(&cfg).unwrap();
        let before = render_frame(&states[9], &cfg).mean_intensity();
        let after = render_frame(&states[10], &cfg).mean_intensity();
        let ratio = after / before;
        assert!((ratio - 0.6).abs() <= 0.6 * 0.02, "{mode:?}: {ratio}");
    }
}

#[test]
fn circle_ground_truth_box() {
    let cfg = SceneConfig {
        agents: 1,
        agent_size: [20.0, 20.0],
        deformation: 0.0,
        ..SceneConfig::default()
    };
    let s = SceneState::initial(&cfg).unwrap();
    let a = &s.agents[0];
    let b = a.bounding_box();
    let (cx, cy) = (a.center[0], a.center[1]);
    for (got, want) in [(b.x(), cx - 20.0), (b.y(), cy - 20.0), (b.w(), 40.0), (b.h(), 40.0)] {
        assert!((got - want).abs() < 1e-9);
    }
}

#[test]
fn ground_truth_row_count() {
    let cfg = Scenario::Clean.scene(1);
    let states = simulate_states(&cfg).unwrap();
    let gt = emit_ground_truth(&states);
    assert_eq!(gt.trajectories.box_count(), 5400);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("gt.csv");
    gt.write(&p).unwrap();
    let text = std::fs::read_to_string(&p).unwrap();
    assert_eq!(text.lines().count(), 5401);
    let back = TrajectorySet::load(&p).unwrap();
    assert_eq!(back.box_count(), 5400);
    assert_eq!(gt.initial_boxes().len(), 9);
}

#[test]
fn boxes_contain_rendered_agents() {
    let cfg = Scenario::S2.scene(5);
    let states = simulate_states(&SceneConfig { frames: 160, ..cfg.clone() }).unwrap();
    for s in [&states[0], &states[150]] {
        let frame = render_frame(s, &cfg);
        let mut empty = s.clone();
        empty.agents.clear();
        let floor = render_frame(&empty, &cfg);
        let boxes: Vec<BoundingBox> = s.agents.iter().map(|a| a.bounding_box()).collect();
        let mut hits = vec![0usize; boxes.len()];
        let ch = frame.channels();
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                let changed = (0..ch).any(|c| (frame.get(x, y, c) - floor.get(x, y, c)).abs() > 0.02);
                if !changed {
                    continue;
                }
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside: Vec<usize> = (0..boxes.len())
                    .filter(|&i| {
                        let b = &boxes[i];
                        px >= b.x() - 1.0 && px <= b.right() + 1.0 && py >= b.y() - 1.0 && py <= b.bottom() + 1.0
                    })
                    .collect();
                assert!(!inside.is_empty(), "pixel ({x}, {y}) outside every box");
                for i in inside {
                    hits[i] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h > 100));
    }
}

#[test]
fn occlusion_flag_matches_circle_overlap() {
    let r = 30.0;
    let cfg = SceneConfig {
        agents: 2,
        agent_size: [r, r],
        deformation: 0.0,
        ..SceneConfig::default()
    };
    let mut s = SceneState::initial(&cfg).unwrap();
    for k in 0..=24 {
        let d = k as f64 * 2.5;
        s.agents[0].center = [300.0, 200.0];
        s.agents[1].center = [300.0 + d, 200.0];
        s.update_occlusion();
        let exact = lens_area(r, d) / (PI * r * r);
        assert!((s.coverage(0) - exact).abs() < 0.02, "d = {d}: {} vs {exact}", s.coverage(0));
        if (exact - 0.5).abs() > 0.03 {
            assert_eq!(s.agents[0].occluded, exact > 0.5, "d = {d}");
        }
        // the top agent is never covered by the one below
        assert!(!s.agents[1].occluded);
    }
}

#[test]
fn occluder_follows_waypoints() {
    let o = OccluderConfig {
        entry: 10,
        exit: 21,
        waypoints: vec![[0.0, 0.0], [100.0, 50.0]],
        size: [10.0, 10.0],
        opacity: 1.0,
    };
    assert_eq!(o.position(9), None);
    assert_eq!(o.position(10), Some([0.0, 0.0]));
    assert_eq!(o.position(15), Some([50.0, 25.0]));
    assert_eq!(o.position(20), Some([100.0, 50.0]));
    assert_eq!(o.position(21), None);
}

#[test]
fn presets_are_valid() {
    let frames: Vec<usize> = Scenario::ALL.iter().map(|s| s.scene(1).frames).collect();
    assert_eq!(frames, vec![600, 800, 700, 1500, 600, 600]);
    for s in Scenario::ALL {
        let cfg = s.scene(11);
        cfg.validate().unwrap();
        assert_eq!(Scenario::parse(s.name()).unwrap(), s);
        let states = simulate_states(&cfg).unwrap();
        let gt = emit_ground_truth(&states);
        assert_eq!(gt.trajectories.box_count(), cfg.frames * 9);
    }
    assert_eq!(Scenario::parse("s3").unwrap(), Scenario::S3);
    assert!(matches!(Scenario::parse("S9'"), Err(Error::UnknownScenario(_))));
    assert_eq!(Scenario::S4.scene(1).color_mode(), ColorMode::Grayscale);
}

#[test]
fn challenge_presets_produce_occlusions() {
    for s in [Scenario::S1, Scenario::S2, Scenario::S3, Scenario::S4] {
        let states = simulate_states(&s.scene(2)).unwrap();
        let occluded = states.iter().flat_map(|st| &st.agents).filter(|a| a.occluded).count();
        assert!(occluded > 0, "{s}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let bad = [
        SceneConfig { agents: 0, ..SceneConfig::default() },
        SceneConfig { agents: 200, ..SceneConfig::default() },
        SceneConfig { agent_size: [10.0, 20.0], ..SceneConfig::default() },
        SceneConfig {
            gain_schedule: vec![GainStep { frame: 3, gain: 1.5 }],
            ..SceneConfig::default()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}
