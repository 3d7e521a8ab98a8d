use super::*;

fn short_clean(frames: usize) -> SceneConfig {
    SceneConfig {
        frames,
        ..Scenario::Clean.scene(4)
    }
}

#[test]
fn overrides_reach_nested_sections() {
    let cfg = PipelineConfig::from_toml_str(
        "[tracker]\nlearning_rate = 0.05\n",
        &[
            "association.age_threshold=5".into(),
            "features.mode=night".into(),
            "output.dir=results/x".into(),
            "run.parallel=false".into(),
        ],
    )
    .unwrap();
    assert_eq!(cfg.tracker.learning_rate, 0.05);
    assert_eq!(cfg.association.age_threshold, 5);
    assert_eq!(cfg.features.mode, LightingMode::Night);
    assert_eq!(cfg.output.dir, PathBuf::from("results/x"));
    assert!(!cfg.run.parallel);
    assert_eq!(cfg.tracker.update_interval, 2);

    let text = cfg.to_toml().unwrap();
    assert_eq!(PipelineConfig::from_toml_str(&text, &[]).unwrap(), cfg);
}

#[test]
fn bad_configs_are_rejected() {
    for (text, set) in [
        ("", "tracker.bogus=1"),
        ("", "tracker.learning_rate=2.0"),
        ("", "novalue"),
        ("", "toplevel=3"),
        ("[features]\nhog_cell = 0\n", "run.workers=1"),
        ("not toml [", "run.workers=1"),
    ] {
        assert!(
            matches!(PipelineConfig::from_toml_str(text, &[set.to_string()]), Err(Error::Config(_))),
            "{text:?} {set:?}"
        );
    }
    let cfg = PipelineConfig {
        input: InputConfig {
            frames: Some(PathBuf::from("/definitely/not/here")),
            ..InputConfig::default()
        },
        ..PipelineConfig::default()
    };
    assert!(cfg.check_inputs().is_err());
}

#[test]
fn one_frame_returns_initial_boxes() {
    let scene = short_clean(1);
    let states = simulate_states(&scene).unwrap();
    let gt = emit_ground_truth(&states);
    let out = run_sequence(
        &PipelineConfig::default(),
        SimulatedSource::new(states, scene, Mode::Sequential),
        &[],
        &gt.initial_boxes(),
        &RunOptions::default(),
    );
    assert!(out.error.is_none());
    assert_eq!(out.frames(), 1);
    assert_eq!(out.trajectories, gt.trajectories);
    assert!(out.log.events.is_empty());
}

#[test]
fn short_clean_run_matches_ground_truth_in_both_modes() {
    let scene = short_clean(40);
    let mut runs = Vec::new();
    for parallel in [false, true] {
        let cfg = PipelineConfig {
            run: RunConfig { workers: 2, parallel },
            ..PipelineConfig::default()
        };
        let r = run_scene(&cfg, Scenario::Clean, scene.clone(), 4, &RunOptions::default()).unwrap();
        assert!(r.report.mota >= 0.99, "{}", r.report.to_text());
        assert_eq!(r.report.id_switches, 0);
        assert_eq!(r.output.log.timings.len(), 40);
        runs.push(r);
    }
    assert_eq!(runs[0].output.trajectories, runs[1].output.trajectories);
    assert_eq!(runs[0].output.tag_boxes, runs[1].output.tag_boxes);
    for t in &runs[1].output.log.timings[1..] {
        let parts = t.localize_ms + t.associate_ms + t.update_ms;
        assert!(parts <= t.total_ms + 1e-9);
    }
}

#[test]
fn missing_frames_end_the_run_and_bad_frames_abort_it() {
    let dir = tempfile::tempdir().unwrap();
    let scene = short_clean(3);
    let states = simulate_states(&scene).unwrap();
    crate::sim::export_frames(&states, &scene, dir.path()).unwrap();
    let gt = emit_ground_truth(&states);
    let cfg = PipelineConfig::default();
    let out = run_sequence(&cfg, DirectorySource::new(dir.path()), &[], &gt.initial_boxes(), &RunOptions::default());
    assert!(out.error.is_none());
    assert_eq!(out.frames(), 3);

    std::fs::write(dir.path().join(frame_file_name(2)), b"not a png").unwrap();
    let out = run_sequence(&cfg, DirectorySource::new(dir.path()), &[], &gt.initial_boxes(), &RunOptions::default());
    assert!(matches!(out.error, Some(Error::Image { .. })));
    assert_eq!(out.frames(), 2);
    assert_eq!(out.trajectories.box_count(), 2 * 9);
}

#[test]
fn disk_and_memory_sources_agree() {
    let dir = tempfile::tempdir().unwrap();
    let scene = short_clean(2);
    let states = simulate_states(&scene).unwrap();
    crate::sim::export_frames(&states, &scene, dir.path()).unwrap();
    let mut disk = DirectorySource::new(dir.path());
    let mut mem = SimulatedSource::new(states, scene, Mode::Parallel);
    for _ in 0..2 {
        assert_eq!(disk.next_frame().unwrap().unwrap(), mem.next_frame().unwrap().unwrap());
    }
    assert!(disk.next_frame().is_none());
    assert!(mem.next_frame().is_none());
}

#[test]
fn trajectory_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    write_trajectories(&TrajectorySet::new(), &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap(), "frame,id,x,y,w,h\n");

    let mut set = TrajectorySet::new();
    for f in 0..600 {
        for id in 1..=9u32 {
            let b = BoundingBox::new(f as f64 / 3.0 + id as f64, 0.1 * id as f64, 40.0 + 1.0 / 7.0, 30.0).unwrap();
            set.push(id, f, b).unwrap();
        }
    }
    write_trajectories(&set, &p).unwrap();
    assert_eq!(std::fs::read_to_string(&p).unwrap().lines().count(), 5401);
    let back = TrajectorySet::load(&p).unwrap();
    for id in set.ids() {
        for (a, b) in set.get(id).unwrap().iter().zip(back.get(id).unwrap()) {
            assert_eq!(a.0, b.0);
            for (u, v) in [(a.1.x(), b.1.x()), (a.1.y(), b.1.y()), (a.1.w(), b.1.w()), (a.1.h(), b.1.h())] {
                assert!((u - v).abs() <= 1e-6);
            }
        }
    }
}

#[test]
fn tag_box_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("tags.csv");
    let records = vec![
        TagBoxRecord {
            frame: 0,
            id: 3,
            tag_box: TagBox::new(10.5, 20.25, 8.0, 6.0).unwrap(),
            status: TrackStatus::Tracked,
            age: 0,
        },
        TagBoxRecord {
            frame: 1,
            id: 3,
            tag_box: TagBox::new(11.0, 21.0, 8.0, 6.0).unwrap(),
            status: TrackStatus::Pending,
            age: 3,
        },
    ];
    write_tag_boxes(&records, &p).unwrap();
    assert_eq!(load_tag_boxes(&p).unwrap(), records);
}

#[test]
fn overlays_copy_draw_and_report_missing_frames() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let scene = SceneConfig {
        frames: 2,
        mode: LightingMode::Night,
        ..short_clean(2)
    };
    let states = simulate_states(&scene).unwrap();
    crate::sim::export_frames(&states, &scene, &frames).unwrap();

    // no boxes: byte-identical copies
    let out = dir.path().join("copy");
    assert_eq!(render_overlays(&frames, &TrajectorySet::new(), &[], &out).unwrap(), 2);
    for k in 0..2 {
        let name = frame_file_name(k);
        assert_eq!(std::fs::read(frames.join(&name)).unwrap(), std::fs::read(out.join(&name)).unwrap());
    }

    // one box: only its outline and label change
    let mut one = TrajectorySet::new();
    let b = BoundingBox::new(100.0, 120.0, 50.0, 30.0).unwrap();
    one.push(1, 1, b).unwrap();
    let out = dir.path().join("one");
    render_overlays(&frames, &one, &[], &out).unwrap();
    let before = Frame::load(&frames.join(frame_file_name(1))).unwrap().to_image().to_rgb8();
    let after = image::open(out.join(frame_file_name(1))).unwrap().to_rgb8();
    let mut changed = 0;
    for (x, y, p) in after.enumerate_pixels() {
        if *p != before[(x, y)] {
            changed += 1;
            assert_eq!(p.0, BOX_COLOR);
            let on_outline = (x == 100 || x == 149) && (120..150).contains(&y) || (y == 120 || y == 149) && (100..150).contains(&x);
            let in_label = (108..120).contains(&y) && (100..106).contains(&x);
            assert!(on_outline || in_label, "({x}, {y})");
        }
    }
    assert!(changed >= 150);

    // trajectories reaching past the last frame file
    let mut long = TrajectorySet::new();
    long.push(1, 5, b).unwrap();
    match render_overlays(&frames, &long, &[], &dir.path().join("bad")) {
        Err(Error::MissingFrame { index, .. }) => assert_eq!(index, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn trajectory_plot_draws_each_id() {
    let mut set = TrajectorySet::new();
    for f in 0..20 {
        set.push(1, f, BoundingBox::new(10.0 + 5.0 * f as f64, 10.0, 10.0, 10.0).unwrap()).unwrap();
        set.push(2, f, BoundingBox::new(10.0, 40.0 + 3.0 * f as f64, 10.0, 10.0).unwrap()).unwrap();
    }
    let img = render_trajectory_plot(&set, 200, 150);
    let colored = |c: [u8; 3]| img.pixels().filter(|p| p.0 == c).count();
    assert!(colored([255, 127, 14]) >= 95);
    assert!(colored([44, 160, 44]) >= 57);
}
