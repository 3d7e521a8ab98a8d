//! Per-frame detection sets: CSV files, a noisy synthetic detector driven by
//! ground truth, and the initial box list that fixes the track population.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::mpsc::{sync_channel, Receiver};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Frames a producer may run ahead of its consumer.
pub const PREFETCH_FRAMES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionSet {
    pub frame_index: usize,
    pub detections: Vec<Detection>,
}

impl DetectionSet {
    pub fn boxes(&self) -> Vec<BoundingBox> {
        self.detections.iter().map(|d| d.bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseProfile {
    /// Standard deviation of the centre offset, pixels.
    pub center_jitter_sigma: f64,
    /// Standard deviation of the relative size change.
    pub size_jitter_sigma: f64,
    /// Probability of one spurious box per frame.
    pub fp_rate: f64,
    /// Probability that a visible target is missed.
    pub fn_rate: f64,
    /// Miss probability multiplier while a target is occluded.
    pub occlusion_fn_boost: f64,
    pub seed: u64,
}

impl Default for NoiseProfile {
    fn default() -> Self {
        Self::clean()
    }
}

impl NoiseProfile {
    pub fn clean() -> Self {
        Self {
            center_jitter_sigma: 0.0,
            size_jitter_sigma: 0.0,
            fp_rate: 0.0,
            fn_rate: 0.0,
            occlusion_fn_boost: 1.0,
            seed: 0,
        }
    }

    /// Jitter of 2 px, 5% misses and 5% spurious boxes.
    pub fn moderate(seed: u64) -> Self {
        Self {
            center_jitter_sigma: 2.0,
            size_jitter_sigma: 0.02,
            fp_rate: 0.05,
            fn_rate: 0.05,
            occlusion_fn_boost: 4.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("fp_rate", self.fp_rate), ("fn_rate", self.fn_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("noise.{name} must be in [0, 1]")));
            }
        }
        if !(self.center_jitter_sigma >= 0.0 && self.size_jitter_sigma >= 0.0 && self.occlusion_fn_boost >= 0.0) {
            return Err(Error::Config("noise sigmas and boost must be >= 0".into()));
        }
        Ok(())
    }
}

/// One ground-truth target as seen by the synthetic detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBox {
    pub bbox: BoundingBox,
    pub occluded: bool,
}

/// Stateful noisy detector. Frames must be fed in order for the output to
/// be reproducible.
#[derive(Debug, Clone)]
pub struct SyntheticDetector {
    profile: NoiseProfile,
    frame_size: (f64, f64),
    rng: ChaCha8Rng,
}

impl SyntheticDetector {
    pub fn new(profile: NoiseProfile, frame_width: usize, frame_height: usize) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(profile.seed),
            profile,
            frame_size: (frame_width as f64, frame_height as f64),
        })
    }

    pub fn detect(&mut self, frame_index: usize, truth: &[TruthBox]) -> DetectionSet {
        let p = &self.profile;
        let center = Normal::new(0.0, p.center_jitter_sigma).expect("validated sigma");
        let size = Normal::new(0.0, p.size_jitter_sigma).expect("validated sigma");
        let mut detections = Vec::with_capacity(truth.len() + 1);
        for t in truth {
            let miss = if t.occluded {
                (p.fn_rate * p.occlusion_fn_boost).min(1.0)
            } else {
                p.fn_rate
            };
            if miss > 0.0 && self.rng.random::<f64>() < miss {
                continue;
            }
            let bbox = if p.center_jitter_sigma > 0.0 || p.size_jitter_sigma > 0.0 {
                let (cx, cy) = t.bbox.center();
                let w = (t.bbox.w() * (1.0 + size.sample(&mut self.rng))).max(2.0);
                let h = (t.bbox.h() * (1.0 + size.sample(&mut self.rng))).max(2.0);
                let cx = cx + center.sample(&mut self.rng);
                let cy = cy + center.sample(&mut self.rng);
                BoundingBox::from_center(cx, cy, w, h).expect("finite jittered box")
            } else {
                t.bbox
            };
            detections.push(Detection { bbox, confidence: 1.0 });
        }
        if p.fp_rate > 0.0 && self.rng.random::<f64>() < p.fp_rate {
            let (w, h) = if truth.is_empty() {
                (60.0, 40.0)
            } else {
                let k = self.rng.random_range(0..truth.len());
                (truth[k].bbox.w(), truth[k].bbox.h())
            };
            let (fw, fh) = self.frame_size;
            let (w, h) = (w.min(fw), h.min(fh));
            let x = self.rng.random_range(0.0..=(fw - w));
            let y = self.rng.random_range(0.0..=(fh - h));
            detections.push(Detection {
                bbox: BoundingBox::new(x, y, w, h).expect("in-frame box"),
                confidence: 0.5,
            });
        }
        DetectionSet { frame_index, detections }
    }
}

/// Detections for a whole ground-truth sequence, frame `k` from `truth[k]`.
pub fn synthetic_detections(
    truth: &[Vec<TruthBox>],
    profile: &NoiseProfile,
    frame_width: usize,
    frame_height: usize,
) -> Result<Vec<DetectionSet>> {
    let mut det = SyntheticDetector::new(profile.clone(), frame_width, frame_height)?;
    Ok(truth.iter().enumerate().map(|(k, t)| det.detect(k, t)).collect())
}

/// Numeric rows of a small CSV file with `columns` fields each. A first
/// row whose leading field is not numeric is taken as a header.
fn numeric_rows(path: &Path, columns: usize) -> Result<Vec<(usize, Vec<f64>)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    // the csv reader does not count blank lines, so derive line numbers
    // from byte offsets
    let line_of = |byte: u64| {
        let bytes = text.as_bytes();
        let mut start = byte as usize;
        while start < bytes.len() && (bytes[start] == b'\n' || bytes[start] == b'\r') {
            start += 1;
        }
        bytes[..start].iter().filter(|&&b| b == b'\n').count() + 1
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut first = true;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map(|p| line_of(p.byte())).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| line_of(p.byte())).unwrap_or(0);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if first && rec.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            first = false;
            continue;
        }
        first = false;
        if rec.len() != columns {
            return Err(parse_err(format!("expected {columns} fields, found {}", rec.len())));
        }
        let values = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("not a number: {f:?}"))))
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err("non-finite value".into()));
        }
        rows.push((line, values));
    }
    Ok(rows)
}

fn as_index(v: f64, what: &str) -> std::result::Result<usize, String> {
    if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(format!("{what} must be a non-negative integer, found {v}"))
    }
}

/// Reads `frame,x,y,w,h,confidence` rows. The result holds one set per
/// frame from 0 to the largest frame present; frames without rows are
/// empty.
pub fn load_detections(path: &Path) -> Result<Vec<DetectionSet>> {
    let mut by_frame: BTreeMap<usize, Vec<Detection>> = BTreeMap::new();
    for (line, v) in numeric_rows(path, 6)? {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let frame = as_index(v[0], "frame").map_err(err)?;
        let bbox = BoundingBox::new(v[1], v[2], v[3], v[4]).map_err(|e| err(e.to_string()))?;
        if !(0.0..=1.0).contains(&v[5]) {
            return Err(err(format!("confidence {} outside [0, 1]", v[5])));
        }
        by_frame.entry(frame).or_default().push(Detection {
            bbox,
            confidence: v[5],
        });
    }
    let Some(&last) = by_frame.keys().next_back() else {
        return Ok(Vec::new());
    };
    Ok((0..=last)
        .map(|k| DetectionSet {
            frame_index: k,
            detections: by_frame.remove(&k).unwrap_or_default(),
        })
        .collect())
}

pub fn write_detections(path: &Path, sets: &[DetectionSet]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "frame,x,y,w,h,confidence").map_err(io)?;
    for set in sets {
        for d in &set.detections {
            let b = d.bbox;
            writeln!(w, "{},{},{},{},{},{}", set.frame_index, b.x(), b.y(), b.w(), b.h(), d.confidence).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Reads `id,x,y,w,h` rows: the fixed track population of a run.
pub fn load_initial_boxes(path: &Path) -> Result<Vec<(u32, BoundingBox)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (line, v) in numeric_rows(path, 5)? {
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = as_index(v[0], "id").map_err(err)? as u32;
        if !seen.insert(id) {
            return Err(Error::DuplicateId(id));
        }
        let bbox = BoundingBox::new(v[1], v[2], v[3], v[4]).map_err(|e| err(e.to_string()))?;
        out.push((id, bbox));
    }
    if out.is_empty() {
        return Err(Error::EmptyPopulation(path.to_path_buf()));
    }
    Ok(out)
}

pub fn write_initial_boxes(path: &Path, boxes: &[(u32, BoundingBox)]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(w, "id,x,y,w,h").map_err(io)?;
    for (id, b) in boxes {
        writeln!(w, "{id},{},{},{},{}", b.x(), b.y(), b.w(), b.h()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Runs `producer` on its own thread, at most [`PREFETCH_FRAMES`] items
/// ahead of the returned receiver.
pub fn prefetch<T, I>(producer: I) -> Receiver<T>
where
    T: Send + 'static,
    I: IntoIterator<Item = T> + Send + 'static,
{
    let (tx, rx) = sync_channel(PREFETCH_FRAMES);
    thread::spawn(move || {
        for item in producer {
            if tx.send(item).is_err() {
                break;
            }
        }
    });
    rx
}
