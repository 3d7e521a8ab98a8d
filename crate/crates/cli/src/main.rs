use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use tagtrack::detections::{load_detections, load_initial_boxes, synthetic_detections, write_detections, write_initial_boxes};
use tagtrack::metrics::{evaluate, MetricsReport, TrajectorySet};
use tagtrack::pipeline::{
    load_tag_boxes, render_overlays, render_trajectory_plot, run_scene, run_sequence, write_tag_boxes,
    write_trajectories, DirectorySource, PipelineConfig, RunLog, RunOptions, TagBoxRecord,
};
use tagtrack::sim::{emit_ground_truth, export_frames, frame_file_name, simulate_states, Scenario, SceneConfig};

#[derive(Parser)]
#[command(name = "tagtrack", version, about = "Multi-target tracking with tag-box correlation filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene: frames, ground truth, detections and first-frame boxes.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneArgs,
    },
    /// Track targets through a directory of frames.
    Track {
        #[command(flatten)]
        common: Common,
        /// Directory of frame_00000.png, ...
        #[arg(long)]
        frames: Option<PathBuf>,
        /// frame,x,y,w,h,confidence CSV
        #[arg(long)]
        detections: Option<PathBuf>,
        /// id,x,y,w,h CSV
        #[arg(long)]
        initial: Option<PathBuf>,
    },
    /// Score trajectories against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Burn boxes and ids into frames, plus a trajectory plot.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        trajectories: PathBuf,
        #[arg(long)]
        tag_boxes: Option<PathBuf>,
    },
    /// Simulate, track and evaluate a scenario preset in one go.
    All {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        scene: SceneArgs,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. --set tracker.learning_rate=0.01
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct SceneArgs {
    /// clean, S1' ... S5'
    #[arg(long, default_value = "clean")]
    scenario: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Shorten or lengthen the preset
    #[arg(long)]
    frames: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut overrides = self.set.clone();
        if let Some(w) = self.workers {
            overrides.push(format!("run.workers={w}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={}", toml_string(&out.to_string_lossy())));
        }
        Ok(PipelineConfig::load(self.config.as_deref(), &overrides)?)
    }
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.to_string()).to_string()
}

impl SceneArgs {
    fn scene(&self) -> Result<(Scenario, SceneConfig)> {
        let scenario = Scenario::parse(&self.scenario)?;
        let mut scene = scenario.scene(self.seed);
        if let Some(f) = self.frames {
            scene.frames = f;
        }
        scene.validate()?;
        Ok((scenario, scene))
    }
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| tagtrack::Error::io(format!("creating {}", dir.display()), e))?;
    Ok(dir)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| tagtrack::Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

fn print_report(report: &MetricsReport) {
    println!("{}", MetricsReport::TABLE_HEADER);
    println!("{}", report.table_row());
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    write_text(&dir.join("report.txt"), &report.to_text())?;
    write_text(&dir.join("metrics.txt"), &report.to_key_values())
}

fn write_run(dir: &Path, trajectories: &TrajectorySet, tag_boxes: &[TagBoxRecord], log: &RunLog) -> Result<()> {
    write_trajectories(trajectories, &dir.join("trajectories.csv"))?;
    write_tag_boxes(tag_boxes, &dir.join("tagboxes.csv"))?;
    log.write_json(&dir.join("run_log.json"))?;
    Ok(())
}

fn simulate(common: &Common, args: &SceneArgs) -> Result<()> {
    let cfg = common.config()?;
    let (scenario, scene) = args.scene()?;
    let dir = out_dir(&cfg)?;
    let states = simulate_states(&scene)?;
    let gt = emit_ground_truth(&states);
    let detections = synthetic_detections(&gt.truth, &scenario.detection_profile(args.seed), scene.width, scene.height)?;
    export_frames(&states, &scene, &dir.join("frames"))?;
    gt.write(&dir.join("gt.csv"))?;
    write_detections(&dir.join("detections.csv"), &detections)?;
    write_initial_boxes(&dir.join("initial_boxes.csv"), &gt.initial_boxes())?;
    write_text(&dir.join("scene.toml"), &toml::to_string(&scene).context("serializing scene")?)?;
    log::info!("{scenario}: {} frames written to {}", scene.frames, dir.display());
    Ok(())
}

fn track(common: &Common, frames: Option<PathBuf>, detections: Option<PathBuf>, initial: Option<PathBuf>) -> Result<()> {
    let mut cfg = common.config()?;
    cfg.input.frames = frames.or(cfg.input.frames);
    cfg.input.detections = detections.or(cfg.input.detections);
    cfg.input.initial_boxes = initial.or(cfg.input.initial_boxes);
    cfg.check_inputs()?;
    let frames = cfg
        .input
        .frames
        .clone()
        .ok_or_else(|| tagtrack::Error::Config("no frame directory (--frames or input.frames)".into()))?;
    let initial_path = cfg
        .input
        .initial_boxes
        .clone()
        .ok_or_else(|| tagtrack::Error::Config("no initial boxes (--initial or input.initial_boxes)".into()))?;
    let initial = load_initial_boxes(&initial_path)?;
    let detections = match &cfg.input.detections {
        Some(p) => load_detections(p)?,
        None => Vec::new(),
    };
    let dir = out_dir(&cfg)?;
    let out = run_sequence(&cfg, DirectorySource::new(frames), &detections, &initial, &RunOptions::default());
    // partial results are flushed before the error surfaces
    write_run(&dir, &out.trajectories, &out.tag_boxes, &out.log)?;
    if let Some(e) = out.error {
        return Err(e.into());
    }
    log::info!("tracked {} frames", out.log.timings.len());
    Ok(())
}

fn evaluate_cmd(common: &Common, gt: &Path, hyp: &Path) -> Result<()> {
    let cfg = common.config()?;
    let report = evaluate(&TrajectorySet::load(gt)?, &TrajectorySet::load(hyp)?, &cfg.eval)?;
    print_report(&report);
    if common.out.is_some() {
        write_report(&out_dir(&cfg)?, &report)?;
    }
    Ok(())
}

fn render(common: &Common, frames: &Path, trajectories: &Path, tag_boxes: Option<&Path>) -> Result<()> {
    let cfg = common.config()?;
    let dir = out_dir(&cfg)?;
    let set = TrajectorySet::load(trajectories)?;
    let tags = match tag_boxes {
        Some(p) => load_tag_boxes(p)?,
        None => Vec::new(),
    };
    let n = render_overlays(frames, &set, &tags, &dir.join("overlays"))?;
    let (w, h) = image::image_dimensions(frames.join(frame_file_name(0))).unwrap_or((960, 540));
    let plot = dir.join("trajectory_plot.png");
    render_trajectory_plot(&set, w, h)
        .save(&plot)
        .map_err(|source| tagtrack::Error::Image { path: plot.clone(), source })?;
    log::info!("{n} overlay frames written to {}", dir.display());
    Ok(())
}

fn all(common: &Common, args: &SceneArgs) -> Result<()> {
    let cfg = common.config()?;
    let (scenario, scene) = args.scene()?;
    let dir = out_dir(&cfg)?;
    let run = run_scene(&cfg, scenario, scene, args.seed, &RunOptions::default())?;
    run.ground_truth.write(&dir.join("gt.csv"))?;
    write_detections(&dir.join("detections.csv"), &run.detections)?;
    write_initial_boxes(&dir.join("initial_boxes.csv"), &run.ground_truth.initial_boxes())?;
    write_run(&dir, &run.output.trajectories, &run.output.tag_boxes, &run.output.log)?;
    write_report(&dir, &run.report)?;
    if cfg.output.write_frames {
        export_frames(&simulate_states(&run.scene)?, &run.scene, &dir.join("frames"))?;
    }
    println!("{scenario} seed {}", args.seed);
    print_report(&run.report);
    Ok(())
}

/// 2: configuration or usage, 3: input/output, 4: invalid data, 1: other.
fn exit_code(err: &anyhow::Error) -> u8 {
    use tagtrack::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::UnknownScenario(_)) => 2,
        Some(
            E::Io { .. }
            | E::Image { .. }
            | E::Parse { .. }
            | E::MissingFrame { .. }
            | E::EmptyPopulation(_)
            | E::ModelVersion(_)
            | E::Serde(_),
        ) => 3,
        Some(_) => 4,
        None => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { common, scene } => simulate(common, scene),
        Command::Track {
            common,
            frames,
            detections,
            initial,
        } => track(common, frames.clone(), detections.clone(), initial.clone()),
        Command::Evaluate { common, gt, hyp } => evaluate_cmd(common, gt, hyp),
        Command::Render {
            common,
            frames,
            trajectories,
            tag_boxes,
        } => render(common, frames, trajectories, tag_boxes.as_deref()),
        Command::All { common, scene } => all(common, scene),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
