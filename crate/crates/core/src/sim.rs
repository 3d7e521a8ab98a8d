//! Deterministic synthetic pen scenes: textured elliptical agents on a
//! slatted floor, scripted huddles, an "insect" occluder on the lens,
//! illumination steps and a grayscale night mode, with exact ground truth.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detections::{NoiseProfile, TruthBox};
use crate::error::{Error, Result};
use crate::exec::{self, Mode};
use crate::features::{ColorMode, Frame, LightingMode};
use crate::geometry::BoundingBox;
use crate::metrics::TrajectorySet;

/// Agents that walk together and overlap during `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Huddle {
    pub start: usize,
    pub end: usize,
    /// Agent indices (0-based).
    pub members: Vec<usize>,
    pub center: [f64; 2],
    /// Spacing between neighbouring members, as a fraction of the major axis.
    pub spacing: f64,
}

/// Dark blurred blob crossing the lens along `waypoints` during
/// `[entry, exit)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccluderConfig {
    pub entry: usize,
    pub exit: usize,
    pub waypoints: Vec<[f64; 2]>,
    /// Semi-axes in pixels.
    pub size: [f64; 2],
    pub opacity: f64,
}

impl OccluderConfig {
    fn position(&self, frame: usize) -> Option<[f64; 2]> {
        if frame < self.entry || frame >= self.exit || self.waypoints.is_empty() {
            return None;
        }
        let n = self.waypoints.len();
        if n == 1 {
            return Some(self.waypoints[0]);
        }
        let span = (self.exit - self.entry).max(2) - 1;
        let t = (frame - self.entry) as f64 / span as f64 * (n - 1) as f64;
        let k = (t.floor() as usize).min(n - 2);
        let f = t - k as f64;
        let (a, b) = (self.waypoints[k], self.waypoints[k + 1]);
        Some([a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f])
    }
}

/// Illumination gain from `frame` on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainStep {
    pub frame: usize,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub agents: usize,
    /// Nominal semi-axes (major, minor) in pixels.
    pub agent_size: [f64; 2],
    /// Per-frame velocity noise, pixels.
    pub step_sigma: f64,
    /// Velocity carried over between frames.
    pub persistence: f64,
    pub max_speed: f64,
    /// Relative axis-ratio oscillation amplitude.
    pub deformation: f64,
    pub deformation_period: f64,
    /// Largest turn per frame, radians.
    pub turn_rate: f64,
    pub repulsion: f64,
    pub huddles: Vec<Huddle>,
    pub occluder: Option<OccluderConfig>,
    pub gain_schedule: Vec<GainStep>,
    pub mode: LightingMode,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            width: 960,
            height: 540,
            frames: 600,
            agents: 9,
            agent_size: [44.0, 27.0],
            step_sigma: 0.25,
            persistence: 0.95,
            max_speed: 2.5,
            deformation: 0.08,
            deformation_period: 90.0,
            turn_rate: 0.03,
            repulsion: 0.15,
            huddles: Vec::new(),
            occluder: None,
            gain_schedule: Vec::new(),
            mode: LightingMode::Day,
            seed: 1,
        }
    }
}

const MARGIN: f64 = 4.0;
/// Huddle members may walk this much faster than `max_speed`.
const HUDDLE_SPEEDUP: f64 = 1.6;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scene: {m}")));
        if self.agents == 0 {
            return bad("at least one agent is required");
        }
        if self.frames == 0 {
            return bad("frames must be >= 1");
        }
        let [a, b] = self.agent_size;
        if !(a > 0.0 && b > 0.0 && b <= a) {
            return bad("agent_size must be positive with major >= minor");
        }
        if !(0.0..0.5).contains(&self.deformation) {
            return bad("deformation must be in [0, 0.5)");
        }
        let reach = 2.0 * (a * (1.0 + self.deformation) + MARGIN);
        if reach >= self.width as f64 || reach >= self.height as f64 {
            return bad("agents do not fit in the frame");
        }
        let cols = grid_cols(self.agents, self.width, self.height);
        let rows = self.agents.div_ceil(cols);
        if (self.width as f64 / cols as f64) < reach || (self.height as f64 / rows as f64) < reach {
            return bad("too many agents for the frame size");
        }
        if self.step_sigma < 0.0 || !(0.0..=1.0).contains(&self.persistence) || self.max_speed < 0.0 {
            return bad("invalid motion parameters");
        }
        if self.deformation_period <= 0.0 || self.turn_rate < 0.0 || self.repulsion < 0.0 {
            return bad("invalid deformation or interaction parameters");
        }
        for h in &self.huddles {
            if h.start >= h.end || h.members.len() < 2 || h.members.iter().any(|&m| m >= self.agents) {
                return bad("huddle needs start < end and at least two valid members");
            }
            if !(h.spacing > 0.0) {
                return bad("huddle spacing must be > 0");
            }
        }
        if let Some(o) = &self.occluder {
            if o.entry >= o.exit || o.waypoints.is_empty() || !(o.size[0] > 0.0 && o.size[1] > 0.0) {
                return bad("occluder needs entry < exit, a waypoint and a positive size");
            }
            if !(0.0..=1.0).contains(&o.opacity) {
                return bad("occluder opacity must be in [0, 1]");
            }
        }
        if self.gain_schedule.iter().any(|g| !(0.0..=1.0).contains(&g.gain)) {
            return bad("gains must be in [0, 1]");
        }
        Ok(())
    }

    /// Illumination gain at `frame` (1 before the first step).
    pub fn gain_at(&self, frame: usize) -> f64 {
        self.gain_schedule
            .iter()
            .filter(|g| g.frame <= frame)
            .max_by_key(|g| g.frame)
            .map_or(1.0, |g| g.gain)
    }

    pub fn color_mode(&self) -> ColorMode {
        match self.mode {
            LightingMode::Day => ColorMode::Color,
            LightingMode::Night => ColorMode::Grayscale,
        }
    }
}

fn grid_cols(n: usize, w: usize, h: usize) -> usize {
    ((n as f64 * w as f64 / h as f64).sqrt().ceil() as usize).clamp(1, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub center: [f64; 2],
    pub velocity: [f64; 2],
    /// Major-axis direction, radians.
    pub orientation: f64,
    /// Current semi-axes.
    pub axes: [f64; 2],
    pub phase: f64,
    pub color: [f32; 3],
    pub texture_seed: u64,
    pub occluded: bool,
}

impl AgentState {
    /// Half extents of the axis-aligned box around the ellipse.
    pub fn half_extents(&self) -> (f64, f64) {
        half_extents(self.axes, self.orientation)
    }

    /// Tight axis-aligned box around the ellipse.
    pub fn bounding_box(&self) -> BoundingBox {
        let (hx, hy) = self.half_extents();
        BoundingBox::from_center(self.center[0], self.center[1], 2.0 * hx, 2.0 * hy).expect("positive axes")
    }

    /// Squared normalized radius of a point; below 1 inside the ellipse.
    fn radius2(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.orientation.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = (c * dx + s * dy) / self.axes[0];
        let v = (-s * dx + c * dy) / self.axes[1];
        u * u + v * v
    }

    fn local(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.orientation.sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        ((c * dx + s * dy) / self.axes[0], (-s * dx + c * dy) / self.axes[1])
    }

    fn world(&self, u: f64, v: f64) -> (f64, f64) {
        let (s, c) = self.orientation.sin_cos();
        let (lx, ly) = (u * self.axes[0], v * self.axes[1]);
        (self.center[0] + c * lx - s * ly, self.center[1] + s * lx + c * ly)
    }
}

fn half_extents(axes: [f64; 2], theta: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let [a, b] = axes;
    (((a * c).powi(2) + (b * s).powi(2)).sqrt(), ((a * s).powi(2) + (b * c).powi(2)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccluderState {
    pub center: [f64; 2],
    pub size: [f64; 2],
    pub opacity: f64,
}

impl OccluderState {
    fn radius2(&self, x: f64, y: f64) -> f64 {
        ((x - self.center[0]) / self.size[0]).powi(2) + ((y - self.center[1]) / self.size[1]).powi(2)
    }
}

#[derive(Debug, Clone)]
pub struct SceneState {
    pub frame: usize,
    pub agents: Vec<AgentState>,
    pub occluder: Option<OccluderState>,
    rng: ChaCha8Rng,
}

impl PartialEq for SceneState {
    fn eq(&self, other: &Self) -> bool {
        self.frame == other.frame && self.agents == other.agents && self.occluder == other.occluder
    }
}

impl SceneState {
    /// Frame-0 state: agents on a jittered grid, at rest.
    pub fn initial(cfg: &SceneConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let cols = grid_cols(cfg.agents, cfg.width, cfg.height);
        let rows = cfg.agents.div_ceil(cols);
        let (cw, ch) = (cfg.width as f64 / cols as f64, cfg.height as f64 / rows as f64);
        let mut agents = Vec::with_capacity(cfg.agents);
        for i in 0..cfg.agents {
            let (r, c) = (i / cols, i % cols);
            let orientation = rng.random_range(-PI / 2.0..PI / 2.0);
            let axes = cfg.agent_size;
            // any orientation fits inside the deformed major radius
            let reach = axes[0] * (1.0 + cfg.deformation);
            let jx = ((cw / 2.0 - reach - MARGIN) * 0.5).max(0.0);
            let jy = ((ch / 2.0 - reach - MARGIN) * 0.5).max(0.0);
            let cx = (c as f64 + 0.5) * cw + rng.random_range(-1.0..=1.0) * jx;
            let cy = (r as f64 + 0.5) * ch + rng.random_range(-1.0..=1.0) * jy;
            let tint: f32 = rng.random_range(-0.06..0.06);
            agents.push(AgentState {
                center: [cx, cy],
                velocity: [0.0, 0.0],
                orientation,
                axes,
                phase: rng.random_range(0.0..2.0 * PI),
                color: [0.86 + tint, 0.70 + tint, 0.64 + tint * 0.5],
                texture_seed: rng.random(),
                occluded: false,
            });
        }
        let mut state = Self {
            frame: 0,
            agents,
            occluder: None,
            rng,
        };
        state.apply_deformation(cfg);
        state.occluder = occluder_at(cfg, 0);
        state.update_occlusion();
        Ok(state)
    }

    fn apply_deformation(&mut self, cfg: &SceneConfig) {
        let t = self.frame as f64;
        for a in &mut self.agents {
            let s = (2.0 * PI * t / cfg.deformation_period + a.phase).sin() * cfg.deformation;
            a.axes = [cfg.agent_size[0] * (1.0 + s), cfg.agent_size[1] * (1.0 - s)];
        }
    }

    /// Sets each agent's occlusion flag from its covered fraction.
    pub fn update_occlusion(&mut self) {
        let flags: Vec<bool> = (0..self.agents.len()).map(|i| self.coverage(i) > 0.5).collect();
        for (a, f) in self.agents.iter_mut().zip(flags) {
            a.occluded = f;
        }
    }

    /// Fraction of agent `i` hidden by the occluder or by agents drawn
    /// after it, estimated on a fixed grid of sample points.
    pub fn coverage(&self, i: usize) -> f64 {
        const GRID: usize = 40;
        let a = &self.agents[i];
        let (mut inside, mut covered) = (0usize, 0usize);
        for gy in 0..GRID {
            for gx in 0..GRID {
                let u = (gx as f64 + 0.5) / GRID as f64 * 2.0 - 1.0;
                let v = (gy as f64 + 0.5) / GRID as f64 * 2.0 - 1.0;
                if u * u + v * v >= 1.0 {
                    continue;
                }
                inside += 1;
                let (x, y) = a.world(u, v);
                let hidden = self.occluder.as_ref().is_some_and(|o| o.radius2(x, y) < 1.0)
                    || self.agents[i + 1..].iter().any(|b| b.radius2(x, y) < 1.0);
                covered += hidden as usize;
            }
        }
        covered as f64 / inside as f64
    }

    pub fn truth(&self) -> Vec<TruthBox> {
        self.agents
            .iter()
            .map(|a| TruthBox {
                bbox: a.bounding_box(),
                occluded: a.occluded,
            })
            .collect()
    }
}

fn occluder_at(cfg: &SceneConfig, frame: usize) -> Option<OccluderState> {
    let o = cfg.occluder.as_ref()?;
    o.position(frame).map(|center| OccluderState {
        center,
        size: o.size,
        opacity: o.opacity,
    })
}

fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Advances the scene by one frame.
pub fn step_scene(state: &SceneState, cfg: &SceneConfig) -> SceneState {
    let mut next = state.clone();
    next.frame += 1;
    let t = next.frame;
    let n = next.agents.len();

    let huddle_of = |i: usize| cfg.huddles.iter().find(|h| h.start <= t && t < h.end && h.members.contains(&i));

    let mut dv = vec![[0.0f64; 2]; n];
    for i in 0..n {
        for j in i + 1..n {
            if let (Some(a), Some(b)) = (huddle_of(i), huddle_of(j)) {
                if std::ptr::eq(a, b) {
                    continue;
                }
            }
            let (pi, pj) = (next.agents[i].center, next.agents[j].center);
            let (dx, dy) = (pj[0] - pi[0], pj[1] - pi[1]);
            let d = (dx * dx + dy * dy).sqrt().max(1e-9);
            let range = 1.3 * (cfg.agent_size[0] + cfg.agent_size[1]);
            if d < range {
                let push = cfg.repulsion * (range - d) / range * cfg.max_speed.max(1.0);
                let (ux, uy) = (dx / d, dy / d);
                dv[i][0] -= push * ux;
                dv[i][1] -= push * uy;
                dv[j][0] += push * ux;
                dv[j][1] += push * uy;
            }
        }
    }

    for i in 0..n {
        let noise: [f64; 2] = [
            StandardNormal.sample(&mut next.rng),
            StandardNormal.sample(&mut next.rng),
        ];
        let a = &mut next.agents[i];
        let mut v = [
            cfg.persistence * a.velocity[0] + cfg.step_sigma * noise[0] + dv[i][0],
            cfg.persistence * a.velocity[1] + cfg.step_sigma * noise[1] + dv[i][1],
        ];
        if let Some(h) = huddle_of(i) {
            let k = h.members.iter().position(|&m| m == i).expect("member");
            let offset = (k as f64 - (h.members.len() - 1) as f64 / 2.0) * h.spacing * 2.0 * cfg.agent_size[0];
            let target = [h.center[0] + offset, h.center[1] + 0.15 * offset];
            let to = [target[0] - a.center[0], target[1] - a.center[1]];
            let d = (to[0] * to[0] + to[1] * to[1]).sqrt();
            let s = d.min(HUDDLE_SPEEDUP * cfg.max_speed.max(1.0)) / d.max(1e-9);
            v = [to[0] * s + cfg.step_sigma * noise[0], to[1] * s + cfg.step_sigma * noise[1]];
        }
        let cap = if huddle_of(i).is_some() { HUDDLE_SPEEDUP * cfg.max_speed } else { cfg.max_speed };
        let speed = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if speed > cap && speed > 0.0 {
            let s = cap / speed;
            v = [v[0] * s, v[1] * s];
        }
        a.velocity = v;
        a.center[0] += v[0];
        a.center[1] += v[1];
        if speed > 0.3 {
            // ellipses are symmetric under a half turn, so aim at the nearer direction
            let heading = v[1].atan2(v[0]);
            let mut diff = wrap_angle(heading - a.orientation);
            if diff.abs() > PI / 2.0 {
                diff = wrap_angle(diff + PI);
            }
            a.orientation = wrap_angle(a.orientation + diff.clamp(-cfg.turn_rate, cfg.turn_rate));
        }
    }
    next.apply_deformation(cfg);

    let (w, h) = (cfg.width as f64, cfg.height as f64);
    for a in &mut next.agents {
        let (hx, hy) = a.half_extents();
        for (axis, (half, size)) in [(hx, w), (hy, h)].into_iter().enumerate() {
            let (lo, hi) = (MARGIN + half, size - MARGIN - half);
            let p = &mut a.center[axis];
            if *p < lo {
                *p = (2.0 * lo - *p).min(hi);
                a.velocity[axis] = a.velocity[axis].abs();
            } else if *p > hi {
                *p = (2.0 * hi - *p).max(lo);
                a.velocity[axis] = -a.velocity[axis].abs();
            }
        }
    }
    next.occluder = occluder_at(cfg, t);
    next.update_occlusion();
    next
}

/// Uniform hash of a lattice point to `[0, 1)`.
fn lattice(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut z = seed ^ (ix as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (iy as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1)`.
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (tx, ty) = (x - fx, y - fy);
    let (sx, sy) = (tx * tx * (3.0 - 2.0 * tx), ty * ty * (3.0 - 2.0 * ty));
    let (ix, iy) = (fx as i64, fy as i64);
    let a = lattice(ix, iy, seed);
    let b = lattice(ix + 1, iy, seed);
    let c = lattice(ix, iy + 1, seed);
    let d = lattice(ix + 1, iy + 1, seed);
    (a * (1.0 - sx) + b * sx) * (1.0 - sy) + (c * (1.0 - sx) + d * sx) * sy
}

fn floor_color(col: usize, row: usize, seed: u64) -> [f64; 3] {
    let (x, y) = (col as f64 + 0.5, row as f64 + 0.5);
    let n = value_noise(x / 14.0, y / 14.0, seed) * 0.6 + value_noise(x / 5.0, y / 5.0, seed ^ 1) * 0.4;
    let slat = if col % 36 < 3 { 0.55 } else { 1.0 };
    let v = (0.8 + 0.35 * n) * slat;
    [0.42 * v, 0.40 * v, 0.36 * v]
}

fn agent_color(a: &AgentState, u: f64, v: f64, r2: f64) -> [f64; 3] {
    let n = value_noise(u * 3.0 + 7.0, v * 3.0 + 7.0, a.texture_seed) * 0.55
        + value_noise(u * 7.0 + 3.0, v * 7.0 + 3.0, a.texture_seed ^ 2) * 0.45;
    let shade = (0.55 + 0.65 * n) * (0.8 + 0.2 * (1.0 - r2).max(0.0).sqrt());
    [a.color[0] as f64 * shade, a.color[1] as f64 * shade, a.color[2] as f64 * shade]
}

/// Rasterizer for one scene configuration. The floor and the night-mode
/// shadow layer are static, so they are computed once.
#[derive(Debug, Clone)]
pub struct SceneRenderer {
    cfg: SceneConfig,
    floor_seed: u64,
    floor: Vec<[f32; 3]>,
    shadow: Vec<f32>,
}

impl SceneRenderer {
    pub fn new(cfg: &SceneConfig, mode: Mode) -> Self {
        let (w, h) = (cfg.width, cfg.height);
        let floor_seed = cfg.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 0xF100;
        let mut floor = vec![[0.0f32; 3]; w * h];
        exec::for_each_chunk_mut(mode, &mut floor, w, |row, out| {
            for (col, px) in out.iter_mut().enumerate() {
                let c = floor_color(col, row, floor_seed);
                *px = [c[0] as f32, c[1] as f32, c[2] as f32];
            }
        });
        let mut shadow = Vec::new();
        if cfg.mode == LightingMode::Night {
            shadow = vec![0.0f32; w * h];
            exec::for_each_chunk_mut(mode, &mut shadow, w, |row, out| {
                let py = row as f64 + 0.5;
                for (col, v) in out.iter_mut().enumerate() {
                    let px = col as f64 + 0.5;
                    *v = (0.12 * (px / w as f64) + 0.1 * value_noise(px / 160.0, py / 160.0, floor_seed ^ 4)) as f32;
                }
            });
        }
        Self {
            cfg: cfg.clone(),
            floor_seed,
            floor,
            shadow,
        }
    }

    pub fn config(&self) -> &SceneConfig {
        &self.cfg
    }

    /// Rasterizes `state`. Rows are rendered in parallel under
    /// [`Mode::Parallel`]; the result does not depend on the mode.
    pub fn render(&self, state: &SceneState, mode: Mode) -> Frame {
        let cfg = &self.cfg;
        let (w, h) = (cfg.width, cfg.height);
        let color_mode = cfg.color_mode();
        let ch = color_mode.channels();
        let gain = cfg.gain_at(state.frame);
        let extents: Vec<(f64, f64, f64, f64)> = state
            .agents
            .iter()
            .map(|a| {
                let (hx, hy) = a.half_extents();
                (a.center[0] - hx - 1.0, a.center[0] + hx + 1.0, a.center[1] - hy - 1.0, a.center[1] + hy + 1.0)
            })
            .collect();
        let mut data = vec![0.0f32; w * h * ch];
        exec::for_each_chunk_mut(mode, &mut data, w * ch, |row, out| {
            let py = row as f64 + 0.5;
            let active: Vec<usize> = (0..extents.len()).filter(|&i| extents[i].2 <= py && py <= extents[i].3).collect();
            for col in 0..w {
                let px = col as f64 + 0.5;
                let f = self.floor[row * w + col];
                let mut c = [f[0] as f64, f[1] as f64, f[2] as f64];
                for &i in &active {
                    let e = extents[i];
                    if px < e.0 || px > e.1 {
                        continue;
                    }
                    let a = &state.agents[i];
                    let r2 = a.radius2(px, py);
                    let r = r2.sqrt();
                    let alpha = ((1.0 - r) * a.axes[1] + 0.5).clamp(0.0, 1.0);
                    if alpha > 0.0 {
                        let (u, v) = a.local(px, py);
                        let ac = agent_color(a, u, v, r2);
                        for k in 0..3 {
                            c[k] = c[k] * (1.0 - alpha) + ac[k] * alpha;
                        }
                    }
                }
                if let Some(o) = &state.occluder {
                    let r = o.radius2(px, py).sqrt();
                    // soft edge: out of focus on the lens
                    let t = ((1.15 - r) / 0.3).clamp(0.0, 1.0);
                    let alpha = o.opacity * t * t * (3.0 - 2.0 * t);
                    if alpha > 0.0 {
                        let body = 0.08 + 0.04 * value_noise(px / 6.0, py / 6.0, self.floor_seed ^ 3);
                        for v in &mut c {
                            *v = *v * (1.0 - alpha) + body * alpha;
                        }
                    }
                }
                let base = col * ch;
                match color_mode {
                    ColorMode::Color => {
                        for k in 0..3 {
                            out[base + k] = (c[k].clamp(0.0, 1.0) * gain) as f32;
                        }
                    }
                    ColorMode::Grayscale => {
                        // infrared-like: brighter bodies, uneven shadows
                        let luma = 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
                        let shadow = self.shadow[row * w + col] as f64;
                        out[base] = ((1.2 * luma - shadow).clamp(0.0, 1.0) * gain) as f32;
                    }
                }
            }
        });
        Frame::new(w, h, color_mode, data).expect("frame sized by construction")
    }
}

/// One-off rendering; prefer a [`SceneRenderer`] for sequences.
pub fn render_frame_with(state: &SceneState, cfg: &SceneConfig, mode: Mode) -> Frame {
    SceneRenderer::new(cfg, mode).render(state, mode)
}

pub fn render_frame(state: &SceneState, cfg: &SceneConfig) -> Frame {
    render_frame_with(state, cfg, Mode::default())
}

/// Every state of a run, frames `0..cfg.frames`.
pub fn simulate_states(cfg: &SceneConfig) -> Result<Vec<SceneState>> {
    let mut states = Vec::with_capacity(cfg.frames);
    states.push(SceneState::initial(cfg)?);
    for _ in 1..cfg.frames {
        let next = step_scene(states.last().expect("non-empty"), cfg);
        states.push(next);
    }
    Ok(states)
}

/// Ground truth of a run: ids `1..=N` and per-frame truth boxes with
/// occlusion flags.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub trajectories: TrajectorySet,
    pub truth: Vec<Vec<TruthBox>>,
}

pub fn emit_ground_truth(states: &[SceneState]) -> GroundTruth {
    let mut trajectories = TrajectorySet::new();
    let mut truth = Vec::with_capacity(states.len());
    for s in states {
        let t = s.truth();
        for (i, tb) in t.iter().enumerate() {
            trajectories
                .push(i as u32 + 1, s.frame, tb.bbox)
                .expect("states are frame ordered");
        }
        truth.push(t);
    }
    GroundTruth { trajectories, truth }
}

impl GroundTruth {
    /// `frame,id,x,y,w,h,occluded` rows.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(format!("writing {}", path.display()), e);
        writeln!(w, "frame,id,x,y,w,h,occluded").map_err(io)?;
        for (frame, boxes) in self.truth.iter().enumerate() {
            for (i, t) in boxes.iter().enumerate() {
                let b = t.bbox;
                writeln!(
                    w,
                    "{frame},{},{:.3},{:.3},{:.3},{:.3},{}",
                    i + 1,
                    b.x(),
                    b.y(),
                    b.w(),
                    b.h(),
                    t.occluded as u8
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }

    /// Boxes of frame 0 as `(id, box)`.
    pub fn initial_boxes(&self) -> Vec<(u32, BoundingBox)> {
        self.truth
            .first()
            .map(|t| t.iter().enumerate().map(|(i, b)| (i as u32 + 1, b.bbox)).collect())
            .unwrap_or_default()
    }
}

/// Writes `frame_00000.png`, ... into `dir`.
pub fn export_frames(states: &[SceneState], cfg: &SceneConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let renderer = SceneRenderer::new(cfg, Mode::default());
    for s in states {
        renderer.render(s, Mode::default()).save(&dir.join(frame_file_name(s.frame)))?;
    }
    Ok(())
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:05}.png")
}

/// Canned scenes: a clean baseline and five challenge mixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    Clean,
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [Self::Clean, Self::S1, Self::S2, Self::S3, Self::S4, Self::S5];
    pub const CHALLENGES: [Scenario; 5] = [Self::S1, Self::S2, Self::S3, Self::S4, Self::S5];

    pub fn parse(name: &str) -> Result<Self> {
        let key = name.trim().trim_end_matches('\'').to_ascii_lowercase();
        match key.as_str() {
            "clean" => Ok(Self::Clean),
            "s1" => Ok(Self::S1),
            "s2" => Ok(Self::S2),
            "s3" => Ok(Self::S3),
            "s4" => Ok(Self::S4),
            "s5" => Ok(Self::S5),
            _ => Err(Error::UnknownScenario(name.to_string())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::S1 => "S1'",
            Self::S2 => "S2'",
            Self::S3 => "S3'",
            Self::S4 => "S4'",
            Self::S5 => "S5'",
        }
    }

    /// Scene configuration for this preset.
    pub fn scene(self, seed: u64) -> SceneConfig {
        let base = SceneConfig {
            seed,
            ..SceneConfig::default()
        };
        let flicker = |frames: usize, period: usize, levels: &[f64]| -> Vec<GainStep> {
            (1..frames / period)
                .map(|k| GainStep {
                    frame: k * period,
                    gain: levels[k % levels.len()],
                })
                .collect()
        };
        let huddle = |start, end, members: &[usize], center: [f64; 2], spacing| Huddle {
            start,
            end,
            members: members.to_vec(),
            center,
            spacing,
        };
        match self {
            Self::Clean => SceneConfig { deformation: 0.05, ..base },
            Self::S1 => SceneConfig {
                frames: 800,
                deformation: 0.12,
                gain_schedule: flicker(800, 90, &[1.0, 0.75, 0.9, 0.65, 0.85]),
                occluder: Some(OccluderConfig {
                    entry: 150,
                    exit: 520,
                    waypoints: vec![[-60.0, 200.0], [300.0, 240.0], [310.0, 250.0], [320.0, 240.0], [1020.0, 120.0]],
                    size: [55.0, 38.0],
                    opacity: 0.9,
                }),
                huddles: vec![huddle(300, 420, &[3, 4], [480.0, 300.0], 0.45)],
                ..base
            },
            Self::S2 => SceneConfig {
                frames: 700,
                deformation: 0.12,
                huddles: vec![
                    huddle(80, 220, &[0, 1], [250.0, 150.0], 0.2),
                    huddle(260, 420, &[4, 5], [640.0, 300.0], 0.15),
                    huddle(460, 620, &[6, 7, 8], [480.0, 400.0], 0.3),
                ],
                ..base
            },
            Self::S3 => SceneConfig {
                frames: 1500,
                deformation: 0.1,
                gain_schedule: flicker(1500, 120, &[1.0, 0.8, 0.95, 0.7]),
                occluder: Some(OccluderConfig {
                    entry: 400,
                    exit: 640,
                    waypoints: vec![[1020.0, 420.0], [500.0, 260.0], [-60.0, 120.0]],
                    size: [50.0, 35.0],
                    opacity: 0.85,
                }),
                huddles: vec![
                    huddle(200, 330, &[1, 2], [700.0, 150.0], 0.4),
                    huddle(800, 950, &[3, 4, 5], [480.0, 270.0], 0.4),
                    huddle(1150, 1300, &[6, 7], [300.0, 400.0], 0.35),
                ],
                ..base
            },
            Self::S4 => SceneConfig {
                frames: 600,
                mode: LightingMode::Night,
                deformation: 0.1,
                occluder: Some(OccluderConfig {
                    entry: 250,
                    exit: 420,
                    waypoints: vec![[-60.0, 300.0], [480.0, 330.0], [1020.0, 380.0]],
                    size: [50.0, 35.0],
                    opacity: 0.85,
                }),
                huddles: vec![huddle(100, 230, &[0, 4], [330.0, 200.0], 0.4)],
                ..base
            },
            Self::S5 => SceneConfig {
                frames: 600,
                mode: LightingMode::Night,
                deformation: 0.12,
                huddles: vec![
                    huddle(80, 210, &[1, 2], [640.0, 120.0], 0.35),
                    huddle(330, 470, &[5, 7, 8], [600.0, 400.0], 0.4),
                ],
                ..base
            },
        }
    }

    /// Detector noise used with this preset.
    pub fn detection_profile(self, seed: u64) -> NoiseProfile {
        let seed = seed ^ 0xDE7E_C7ED;
        match self {
            Self::Clean => NoiseProfile {
                seed,
                ..NoiseProfile::clean()
            },
            _ => NoiseProfile::moderate(seed),
        }
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests;
