//! The per-frame tracking loop and the glue around it: frame sources,
//! run logs, scenario runs and overlay rendering.
//!
//! Each frame is a barrier: every tag-box is localised (in parallel), then
//! the frame's detections are associated on one thread, then models are
//! re-created or updated (in parallel). Updates made at frame `t` are first
//! used at frame `t + 1`.

mod config;
mod render;

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{InputConfig, OutputConfig, PipelineConfig, RunConfig};
pub use render::{draw_rectangle, render_overlay, render_overlays, render_trajectory_plot, Rgb, BOX_COLOR, TAG_COLOR};

use crate::association::{associate_frame, Track, TrackStatus};
use crate::dcf::init_track_model;
use crate::detections::{prefetch, synthetic_detections, DetectionSet};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::features::{ColorMode, ColorNameTable, FeatureConfig, Frame, LightingMode};
use crate::geometry::{BoundingBox, TagBox};
use crate::metrics::{evaluate, MetricsReport, TrajectorySet};
use crate::sim::{emit_ground_truth, frame_file_name, simulate_states, GroundTruth, Scenario, SceneConfig, SceneRenderer, SceneState};

/// Sequential supplier of frames. `None` ends the run.
pub trait FrameSource: Send {
    fn next_frame(&mut self) -> Option<Result<Frame>>;
}

/// Frames held in memory.
pub struct MemorySource(VecDeque<Frame>);

impl MemorySource {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self(frames.into())
    }
}

impl FrameSource for MemorySource {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        self.0.pop_front().map(Ok)
    }
}

/// `frame_00000.png`, `frame_00001.png`, ... until the first missing index.
pub struct DirectorySource {
    dir: PathBuf,
    next: usize,
}

impl DirectorySource {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), next: 0 }
    }
}

impl FrameSource for DirectorySource {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        let path = self.dir.join(frame_file_name(self.next));
        if !path.exists() {
            return None;
        }
        self.next += 1;
        Some(Frame::load(&path))
    }
}

/// Renders simulator states on demand, quantised like exported frames.
pub struct SimulatedSource {
    states: std::vec::IntoIter<SceneState>,
    renderer: SceneRenderer,
    mode: Mode,
}

impl SimulatedSource {
    pub fn new(states: Vec<SceneState>, scene: SceneConfig, mode: Mode) -> Self {
        Self {
            states: states.into_iter(),
            renderer: SceneRenderer::new(&scene, mode),
            mode,
        }
    }
}

impl FrameSource for SimulatedSource {
    fn next_frame(&mut self) -> Option<Result<Frame>> {
        let s = self.states.next()?;
        Some(Ok(self.renderer.render(&s, self.mode).quantized()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Drift,
    Pending,
    Reinit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub frame: usize,
    pub id: u32,
    pub kind: EventKind,
}

/// Wall-clock milliseconds spent in each stage of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FrameTiming {
    pub frame: usize,
    pub localize_ms: f64,
    pub associate_ms: f64,
    pub update_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunLog {
    pub timings: Vec<FrameTiming>,
    pub events: Vec<Event>,
}

impl RunLog {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn events_of(&self, id: u32) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.id == id)
    }
}

/// Tag-box of one track at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TagBoxRecord {
    pub frame: usize,
    pub id: u32,
    pub tag_box: TagBox,
    pub status: TrackStatus,
    /// Consecutive association failures.
    pub age: u32,
}

/// Moves one tag-box after localisation at `frame`; a test hook for
/// drift recovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftInjection {
    pub id: u32,
    pub frame: usize,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub drift_injection: Option<DriftInjection>,
}

#[derive(Debug)]
pub struct RunOutput {
    pub log: RunLog,
    pub trajectories: TrajectorySet,
    pub tag_boxes: Vec<TagBoxRecord>,
    /// Set when the run stopped on an error; the rest holds what was
    /// processed up to then.
    pub error: Option<Error>,
}

impl RunOutput {
    pub fn frames(&self) -> usize {
        self.log.timings.len()
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn trajectories_of(tracks: &[Track]) -> TrajectorySet {
    let mut set = TrajectorySet::new();
    for t in tracks {
        for &(f, b) in &t.tracklet {
            set.push(t.id, f, b).expect("tracklets are frame ordered");
        }
    }
    set
}

fn exec_mode(cfg: &PipelineConfig) -> Mode {
    if cfg.run.parallel {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// Feature settings for frames of `mode`: grayscale frames cannot use
/// Color Names.
pub fn features_for(cfg: &FeatureConfig, mode: ColorMode) -> FeatureConfig {
    let mut f = cfg.clone();
    if mode == ColorMode::Grayscale && f.mode == LightingMode::Day {
        log::info!("grayscale frames: using night-mode features");
        f.mode = LightingMode::Night;
    }
    f
}

/// Tracks the targets in `initial` through the frames of `source`.
/// Frame `k` is associated with `detections[k]` (empty when missing).
pub fn run_sequence(
    cfg: &PipelineConfig,
    source: impl FrameSource + 'static,
    detections: &[DetectionSet],
    initial: &[(u32, BoundingBox)],
    opts: &RunOptions,
) -> RunOutput {
    let mut out = RunOutput {
        log: RunLog::default(),
        trajectories: TrajectorySet::new(),
        tag_boxes: Vec::new(),
        error: None,
    };
    if let Err(e) = cfg.validate() {
        out.error = Some(e);
        return out;
    }
    if initial.is_empty() {
        out.error = Some(Error::EmptyPopulation(PathBuf::from("<initial boxes>")));
        return out;
    }
    let mut source = source;
    let frames = prefetch(std::iter::from_fn(move || source.next_frame()));
    exec::with_workers(cfg.run.workers, || run_loop(cfg, frames, detections, initial, opts, &mut out));
    out
}

fn run_loop(
    cfg: &PipelineConfig,
    frames: std::sync::mpsc::Receiver<Result<Frame>>,
    detections: &[DetectionSet],
    initial: &[(u32, BoundingBox)],
    opts: &RunOptions,
    out: &mut RunOutput,
) {
    let mode = exec_mode(cfg);
    let table = ColorNameTable::builtin();
    let (tcfg, acfg) = (&cfg.tracker, &cfg.association);
    let mut fcfg = cfg.features.clone();
    let mut tracks: Vec<Track> = Vec::new();

    for (index, frame) in frames.into_iter().enumerate() {
        let start = Instant::now();
        let frame = match frame {
            Ok(f) => f,
            Err(e) => {
                out.error = Some(e);
                break;
            }
        };
        if index == 0 {
            fcfg = features_for(&cfg.features, frame.mode());
            tracks = match initial
                .iter()
                .map(|&(id, b)| Track::new(id, b, 0, acfg))
                .collect::<Result<Vec<_>>>()
            {
                Ok(t) => t,
                Err(e) => {
                    out.error = Some(e);
                    break;
                }
            };
            let models = exec::map(mode, &tracks, |t| init_track_model(&frame, &t.tag_box, tcfg, &fcfg, table));
            for (t, m) in tracks.iter_mut().zip(models) {
                match m {
                    Ok(m) => t.model = Some(m),
                    Err(e) => log::warn!("track {}: no model at frame 0: {e}", t.id),
                }
            }
            let update_ms = ms(start);
            record_tag_boxes(out, &tracks, 0);
            out.log.timings.push(FrameTiming {
                frame: 0,
                update_ms,
                total_ms: ms(start),
                ..FrameTiming::default()
            });
            continue;
        }

        // (a) localisation, every active track against the same frame
        let t0 = Instant::now();
        let found = exec::map(mode, &tracks, |t| match (&t.model, t.status) {
            (Some(model), TrackStatus::Tracked | TrackStatus::Drift) => {
                Some(model.localize(&frame, &t.tag_box, tcfg, &fcfg, table))
            }
            _ => None,
        });
        for (t, r) in tracks.iter_mut().zip(found) {
            match r {
                Some(Ok(loc)) => t.tag_box = loc.tag_box,
                Some(Err(e)) => log::debug!("frame {index}: track {} not localised: {e}", t.id),
                None => {}
            }
        }
        if let Some(inj) = opts.drift_injection.filter(|d| d.frame == index) {
            if let Some(t) = tracks.iter_mut().find(|t| t.id == inj.id) {
                t.tag_box = t.tag_box.with_center(inj.center[0], inj.center[1]);
            }
        }
        let localize_ms = ms(t0);

        // (b, c) association
        let t1 = Instant::now();
        let boxes = detections.get(index).map(|d| d.boxes()).unwrap_or_default();
        let before: Vec<TrackStatus> = tracks.iter().map(|t| t.status).collect();
        let result = associate_frame(&mut tracks, &boxes, index, acfg);
        for (t, prev) in tracks.iter().zip(before) {
            let kind = match t.status {
                TrackStatus::Drift if prev != TrackStatus::Drift => Some(EventKind::Drift),
                TrackStatus::Pending if prev != TrackStatus::Pending => Some(EventKind::Pending),
                _ => None,
            };
            if let Some(kind) = kind {
                out.log.events.push(Event { frame: index, id: t.id, kind });
            }
        }
        for &id in &result.reinitialized {
            out.log.events.push(Event {
                frame: index,
                id,
                kind: EventKind::Reinit,
            });
        }
        let associate_ms = ms(t1);

        // (d) new models for re-initialised tag-boxes, updates on schedule
        let t2 = Instant::now();
        let reinit = &result.reinitialized;
        let interval = tcfg.update_interval;
        let failures = exec::map_mut(mode, &mut tracks, |_, t| {
            if reinit.contains(&t.id) {
                match init_track_model(&frame, &t.tag_box, tcfg, &fcfg, table) {
                    Ok(m) => t.model = Some(m),
                    Err(e) => return Some((t.id, e)),
                }
            } else if t.status == TrackStatus::Tracked && t.frames_since_init % interval == 0 {
                if let Some(m) = t.model.as_mut() {
                    if let Err(e) = m.update(&frame, &t.tag_box, tcfg, &fcfg, table) {
                        return Some((t.id, e));
                    }
                }
            }
            None
        });
        for (id, e) in failures.into_iter().flatten() {
            log::debug!("frame {index}: track {id} model not refreshed: {e}");
        }
        let update_ms = ms(t2);

        record_tag_boxes(out, &tracks, index);
        out.log.timings.push(FrameTiming {
            frame: index,
            localize_ms,
            associate_ms,
            update_ms,
            total_ms: ms(start),
        });
    }
    out.trajectories = trajectories_of(&tracks);
}

fn record_tag_boxes(out: &mut RunOutput, tracks: &[Track], frame: usize) {
    out.tag_boxes.extend(tracks.iter().map(|t| TagBoxRecord {
        frame,
        id: t.id,
        tag_box: t.tag_box,
        status: t.status,
        age: t.age,
    }));
}

/// Writes trajectories as `frame,id,x,y,w,h`.
pub fn write_trajectories(trajectories: &TrajectorySet, path: &Path) -> Result<()> {
    trajectories.write(path)
}

/// `frame,id,cx,cy,w,h,status,age` rows.
pub fn write_tag_boxes(records: &[TagBoxRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "frame,id,cx,cy,w,h,status,age").map_err(io)?;
    for r in records {
        let status = match r.status {
            TrackStatus::Tracked => "tracked",
            TrackStatus::Drift => "drift",
            TrackStatus::Pending => "pending",
        };
        let t = r.tag_box;
        writeln!(w, "{},{},{:.3},{:.3},{:.3},{:.3},{status},{}", r.frame, r.id, t.cx(), t.cy(), t.w(), t.h(), r.age).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Reads what [`write_tag_boxes`] wrote.
pub fn load_tag_boxes(path: &Path) -> Result<Vec<TagBoxRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: String| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: m,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(err(format!("expected 8 fields, found {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("not a number: {s:?}")));
        let status = match f[6] {
            "tracked" => TrackStatus::Tracked,
            "drift" => TrackStatus::Drift,
            "pending" => TrackStatus::Pending,
            other => return Err(err(format!("unknown status {other:?}"))),
        };
        out.push(TagBoxRecord {
            frame: f[0].parse().map_err(|_| err(format!("bad frame {:?}", f[0])))?,
            id: f[1].parse().map_err(|_| err(format!("bad id {:?}", f[1])))?,
            tag_box: TagBox::new(num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?).map_err(|e| err(e.to_string()))?,
            status,
            age: f[7].parse().map_err(|_| err(format!("bad age {:?}", f[7])))?,
        });
    }
    Ok(out)
}

/// Everything a simulated scenario run produces.
#[derive(Debug)]
pub struct ScenarioRun {
    pub scenario: Scenario,
    pub scene: SceneConfig,
    pub ground_truth: GroundTruth,
    pub detections: Vec<DetectionSet>,
    pub output: RunOutput,
    pub report: MetricsReport,
}

/// Simulates `scenario`, tracks it from the ground-truth first-frame boxes
/// and evaluates the result.
pub fn run_scenario(cfg: &PipelineConfig, scenario: Scenario, seed: u64, opts: &RunOptions) -> Result<ScenarioRun> {
    run_scene(cfg, scenario, scenario.scene(seed), seed, opts)
}

/// [`run_scenario`] with an explicit scene, e.g. a shortened preset.
pub fn run_scene(
    cfg: &PipelineConfig,
    scenario: Scenario,
    scene: SceneConfig,
    seed: u64,
    opts: &RunOptions,
) -> Result<ScenarioRun> {
    let states = simulate_states(&scene)?;
    let ground_truth = emit_ground_truth(&states);
    let detections = synthetic_detections(
        &ground_truth.truth,
        &scenario.detection_profile(seed),
        scene.width,
        scene.height,
    )?;
    let mut cfg = cfg.clone();
    cfg.features.mode = scene.mode;
    let source = SimulatedSource::new(states, scene.clone(), exec_mode(&cfg));
    let output = run_sequence(&cfg, source, &detections, &ground_truth.initial_boxes(), opts);
    if let Some(e) = output.error {
        return Err(e);
    }
    let report = evaluate(&ground_truth.trajectories, &output.trajectories, &cfg.eval)?;
    Ok(ScenarioRun {
        scenario,
        scene,
        ground_truth,
        detections,
        output: RunOutput { error: None, ..output },
        report,
    })
}

#[cfg(test)]
mod tests;
