use std::path::Path;
use std::process::{Command, Output};

fn tagtrack(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagtrack"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

#[test]
fn simulate_track_evaluate_render() {
    let dir = tempfile::tempdir().unwrap();
    let sim = dir.path().join("sim");
    let o = tagtrack(&["simulate", "--scenario", "S5'", "--seed", "3", "--frames", "12"], &sim);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["gt.csv", "detections.csv", "initial_boxes.csv", "scene.toml", "frames/frame_00011.png"] {
        assert!(sim.join(f).exists(), "{f}");
    }

    let trk = dir.path().join("trk");
    let frames = sim.join("frames");
    let o = tagtrack(
        &[
            "track",
            "--frames",
            frames.to_str().unwrap(),
            "--detections",
            sim.join("detections.csv").to_str().unwrap(),
            "--initial",
            sim.join("initial_boxes.csv").to_str().unwrap(),
            "--workers",
            "2",
        ],
        &trk,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(trk.join("run_log.json")).unwrap();
    assert_eq!(log.matches("\"total_ms\"").count(), 12);

    let ev = dir.path().join("ev");
    let o = tagtrack(
        &[
            "evaluate",
            "--gt",
            sim.join("gt.csv").to_str().unwrap(),
            "--hyp",
            trk.join("trajectories.csv").to_str().unwrap(),
        ],
        &ev,
    );
    assert!(o.status.success());
    let stdout = String::from_utf8_lossy(&o.stdout);
    let mut lines = stdout.lines();
    assert_eq!(lines.next(), Some("Recall\tPrecision\tFAF\tMT\tPT\tML\tIDs\tFRA\tMOTA"));
    assert_eq!(lines.next().unwrap().split('\t').count(), 9);
    assert!(std::fs::read_to_string(ev.join("metrics.txt")).unwrap().contains("mota="));

    let ren = dir.path().join("ren");
    let o = tagtrack(
        &[
            "render",
            "--frames",
            frames.to_str().unwrap(),
            "--trajectories",
            trk.join("trajectories.csv").to_str().unwrap(),
            "--tag-boxes",
            trk.join("tagboxes.csv").to_str().unwrap(),
        ],
        &ren,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(ren.join("overlays/frame_00011.png").exists());
    assert!(ren.join("trajectory_plot.png").exists());
}

#[test]
fn errors_exit_with_their_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(tagtrack(&["all", "--scenario", "S9"], out).status.code(), Some(2));
    assert_eq!(tagtrack(&["all", "--set", "tracker.learning_rate=7"], out).status.code(), Some(2));
    assert_eq!(tagtrack(&["evaluate", "--gt", "/no/such.csv", "--hyp", "/no/such.csv"], out).status.code(), Some(3));
    assert_eq!(tagtrack(&["track", "--frames", "/no/such/dir"], out).status.code(), Some(2));

    let gt = out.join("gt.csv");
    std::fs::write(&gt, "frame,id,x,y,w,h\n0,1,oops,0,1,1\n").unwrap();
    let o = tagtrack(&["evaluate", "--gt", gt.to_str().unwrap(), "--hyp", gt.to_str().unwrap()], out);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains(":2:"));

    let empty = out.join("empty.csv");
    std::fs::write(&empty, "frame,id,x,y,w,h\n").unwrap();
    let o = tagtrack(&["evaluate", "--gt", empty.to_str().unwrap(), "--hyp", empty.to_str().unwrap()], out);
    assert_eq!(o.status.code(), Some(4));
}
