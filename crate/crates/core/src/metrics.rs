//! CLEAR-MOT style evaluation of hypothesis trajectories against ground
//! truth, plus mostly-tracked / mostly-lost trajectory counts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::association::{hungarian_assign, CostMatrix, INFEASIBLE};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

/// Boxes per id, each list ordered by frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectorySet {
    tracks: BTreeMap<u32, Vec<(usize, BoundingBox)>>,
}

impl TrajectorySet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a box; frames for one id must be strictly increasing.
    pub fn push(&mut self, id: u32, frame: usize, bbox: BoundingBox) -> Result<()> {
        let track = self.tracks.entry(id).or_default();
        if let Some(&(last, _)) = track.last() {
            if frame <= last {
                return Err(Error::InvalidFrame(format!(
                    "trajectory {id}: frame {frame} does not follow frame {last}"
                )));
            }
        }
        track.push((frame, bbox));
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.tracks.keys().copied()
    }

    pub fn get(&self, id: u32) -> Option<&[(usize, BoundingBox)]> {
        self.tracks.get(&id).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn box_count(&self) -> usize {
        self.tracks.values().map(|v| v.len()).sum()
    }

    /// Inclusive range of frames present, if any.
    pub fn frame_range(&self) -> Option<(usize, usize)> {
        let first = self.tracks.values().filter_map(|v| v.first()).map(|e| e.0).min()?;
        let last = self.tracks.values().filter_map(|v| v.last()).map(|e| e.0).max()?;
        Some((first, last))
    }

    /// `(id, box)` lists per frame.
    pub fn by_frame(&self) -> BTreeMap<usize, Vec<(u32, BoundingBox)>> {
        let mut out: BTreeMap<usize, Vec<(u32, BoundingBox)>> = BTreeMap::new();
        for (&id, track) in &self.tracks {
            for &(f, b) in track {
                out.entry(f).or_default().push((id, b));
            }
        }
        out
    }

    /// Reads `frame,id,x,y,w,h` rows (header optional, `#` comments). A
    /// seventh column, such as the simulator's occlusion flag, is ignored.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let mut rows = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if rows.is_empty() && fields[0].parse::<f64>().is_err() {
                continue;
            }
            if fields.len() != 6 && fields.len() != 7 {
                return Err(err(format!("expected 6 or 7 fields, found {}", fields.len())));
            }
            let frame: usize = fields[0].parse().map_err(|_| err(format!("bad frame {:?}", fields[0])))?;
            let id: u32 = fields[1].parse().map_err(|_| err(format!("bad id {:?}", fields[1])))?;
            let mut v = [0.0; 4];
            for (slot, f) in v.iter_mut().zip(&fields[2..]) {
                *slot = f.parse().map_err(|_| err(format!("not a number: {f:?}")))?;
            }
            let bbox = BoundingBox::new(v[0], v[1], v[2], v[3]).map_err(|e| err(e.to_string()))?;
            rows.push((frame, id, bbox, k + 1));
        }
        rows.sort_by_key(|r| (r.1, r.0));
        let mut set = Self::new();
        for (frame, id, bbox, line) in rows {
            set.push(id, frame, bbox).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.to_string(),
            })?;
        }
        Ok(set)
    }

    /// Writes rows ordered by frame, then id.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(format!("writing {}", path.display()), e);
        writeln!(w, "frame,id,x,y,w,h").map_err(io)?;
        for (frame, boxes) in self.by_frame() {
            for (id, b) in boxes {
                writeln!(w, "{frame},{id},{},{},{},{}", b.x(), b.y(), b.w(), b.h()).map_err(io)?;
            }
        }
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    /// Coverage at or above which a trajectory is mostly tracked.
    pub mostly_tracked: f64,
    /// Coverage at or below which a trajectory is mostly lost.
    pub mostly_lost: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            mostly_tracked: 0.8,
            mostly_lost: 0.2,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config("eval.iou_threshold must be in (0, 1)".into()));
        }
        if !(0.0 < self.mostly_lost && self.mostly_lost < self.mostly_tracked && self.mostly_tracked < 1.0) {
            return Err(Error::Config("eval thresholds must satisfy 0 < lost < mostly < 1".into()));
        }
        Ok(())
    }
}

/// Matching of one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    /// `(gt id, hypothesis id)`.
    pub pairs: Vec<(u32, u32)>,
    /// Unmatched hypothesis ids.
    pub false_positives: Vec<u32>,
    /// Unmatched ground-truth ids.
    pub misses: Vec<u32>,
}

/// Matches one frame: pairings from `previous` (gt id to hypothesis id)
/// survive while their IoU reaches the threshold; the rest is matched
/// optimally on `1 - IoU`.
pub fn frame_correspondence(
    gt: &[(u32, BoundingBox)],
    hyp: &[(u32, BoundingBox)],
    previous: &HashMap<u32, u32>,
    iou_threshold: f64,
) -> FrameMatch {
    let mut gt_used = vec![false; gt.len()];
    let mut hyp_used = vec![false; hyp.len()];
    let mut pairs = Vec::new();
    for (g, &(gid, gbox)) in gt.iter().enumerate() {
        let Some(&hid) = previous.get(&gid) else { continue };
        if let Some(h) = hyp.iter().position(|&(id, _)| id == hid) {
            if !hyp_used[h] && iou(&gbox, &hyp[h].1) >= iou_threshold {
                gt_used[g] = true;
                hyp_used[h] = true;
                pairs.push((gid, hid));
            }
        }
    }
    let free_gt: Vec<usize> = (0..gt.len()).filter(|&g| !gt_used[g]).collect();
    let free_hyp: Vec<usize> = (0..hyp.len()).filter(|&h| !hyp_used[h]).collect();
    let matrix = CostMatrix::from_fn(free_gt.len(), free_hyp.len(), |r, c| {
        let o = iou(&gt[free_gt[r]].1, &hyp[free_hyp[c]].1);
        if o >= iou_threshold {
            1.0 - o
        } else {
            INFEASIBLE
        }
    });
    for (r, c) in hungarian_assign(&matrix).pairs {
        let (g, h) = (free_gt[r], free_hyp[c]);
        gt_used[g] = true;
        hyp_used[h] = true;
        pairs.push((gt[g].0, hyp[h].0));
    }
    pairs.sort_unstable();
    FrameMatch {
        pairs,
        false_positives: (0..hyp.len()).filter(|&h| !hyp_used[h]).map(|h| hyp[h].0).collect(),
        misses: (0..gt.len()).filter(|&g| !gt_used[g]).map(|g| gt[g].0).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct MetricsReport {
    pub frames: usize,
    pub gt_count: usize,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub recall: f64,
    /// Zero when there are no hypotheses at all.
    pub precision: f64,
    pub faf: f64,
    pub mota: f64,
    pub gt_tracks: usize,
    pub mostly_tracked: usize,
    pub partially_tracked: usize,
    pub mostly_lost: usize,
}

fn pct(v: f64) -> String {
    format!("{:.2}%", 100.0 * v)
}

impl MetricsReport {
    /// Column names of [`table_row`](Self::table_row).
    pub const TABLE_HEADER: &'static str = "Recall\tPrecision\tFAF\tMT\tPT\tML\tIDs\tFRA\tMOTA";

    /// One row in the layout of the usual tracking results table.
    pub fn table_row(&self) -> String {
        format!(
            "{}\t{}\t{:.2}\t{}\t{}\t{}\t{}\t{}\t{}",
            pct(self.recall),
            pct(self.precision),
            self.faf,
            self.mostly_tracked,
            self.partially_tracked,
            self.mostly_lost,
            self.id_switches,
            self.fragmentations,
            pct(self.mota)
        )
    }

    /// Human-readable summary.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames            {}", self.frames);
        let _ = writeln!(s, "ground truth      {} boxes in {} trajectories", self.gt_count, self.gt_tracks);
        let _ = writeln!(s, "recall            {}", pct(self.recall));
        let _ = writeln!(s, "precision         {}", pct(self.precision));
        let _ = writeln!(s, "false alarms/frame {:.2}", self.faf);
        let _ = writeln!(
            s,
            "MT / PT / ML      {} / {} / {}",
            self.mostly_tracked, self.partially_tracked, self.mostly_lost
        );
        let _ = writeln!(s, "id switches       {}", self.id_switches);
        let _ = writeln!(s, "fragmentations    {}", self.fragmentations);
        let _ = writeln!(
            s,
            "TP / FP / FN      {} / {} / {}",
            self.true_positives, self.false_positives, self.false_negatives
        );
        let _ = writeln!(s, "MOTA              {}", pct(self.mota));
        s
    }

    /// `key=value` lines, one per field.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames={}", self.frames);
        let _ = writeln!(s, "gt_count={}", self.gt_count);
        let _ = writeln!(s, "tp={}", self.true_positives);
        let _ = writeln!(s, "fp={}", self.false_positives);
        let _ = writeln!(s, "fn={}", self.false_negatives);
        let _ = writeln!(s, "recall={:.4}", self.recall);
        let _ = writeln!(s, "precision={:.4}", self.precision);
        let _ = writeln!(s, "faf={:.4}", self.faf);
        let _ = writeln!(s, "mt={}", self.mostly_tracked);
        let _ = writeln!(s, "pt={}", self.partially_tracked);
        let _ = writeln!(s, "ml={}", self.mostly_lost);
        let _ = writeln!(s, "ids={}", self.id_switches);
        let _ = writeln!(s, "fra={}", self.fragmentations);
        let _ = writeln!(s, "mota={:.4}", self.mota);
        s
    }
}

/// Per gt id, the frames in which it was matched, from a frame-by-frame
/// CLEAR pass.
struct ClearPass {
    report: MetricsReport,
    matched: HashMap<u32, Vec<bool>>,
}

fn clear_pass(gt: &TrajectorySet, hyp: &TrajectorySet, iou_threshold: f64) -> Result<ClearPass> {
    if gt.box_count() == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    let (g0, g1) = gt.frame_range().expect("non-empty");
    let (first, last) = match hyp.frame_range() {
        Some((h0, h1)) => (g0.min(h0), g1.max(h1)),
        None => (g0, g1),
    };
    let gt_frames = gt.by_frame();
    let hyp_frames = hyp.by_frame();
    let empty = Vec::new();

    let mut report = MetricsReport {
        frames: last - first + 1,
        gt_count: gt.box_count(),
        gt_tracks: gt.len(),
        ..MetricsReport::default()
    };
    let mut previous: HashMap<u32, u32> = HashMap::new();
    let mut last_match: HashMap<u32, u32> = HashMap::new();
    let mut matched: HashMap<u32, Vec<bool>> = gt.ids().map(|id| (id, Vec::new())).collect();
    for frame in first..=last {
        let g = gt_frames.get(&frame).unwrap_or(&empty);
        let h = hyp_frames.get(&frame).unwrap_or(&empty);
        let m = frame_correspondence(g, h, &previous, iou_threshold);
        report.true_positives += m.pairs.len();
        report.false_positives += m.false_positives.len();
        report.false_negatives += m.misses.len();
        let mut next = HashMap::with_capacity(m.pairs.len());
        for &(gid, hid) in &m.pairs {
            if last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                report.id_switches += 1;
            }
            last_match.insert(gid, hid);
            next.insert(gid, hid);
        }
        for &(gid, _) in g {
            matched.get_mut(&gid).expect("gt id").push(next.contains_key(&gid));
        }
        previous = next;
    }
    for flags in matched.values() {
        report.fragmentations += flags.windows(2).filter(|w| w[0] && !w[1]).count();
    }
    let gtc = report.gt_count as f64;
    let tp = report.true_positives as f64;
    report.recall = tp / gtc;
    let claimed = report.true_positives + report.false_positives;
    report.precision = if claimed == 0 { 0.0 } else { tp / claimed as f64 };
    report.faf = report.false_positives as f64 / report.frames as f64;
    report.mota =
        1.0 - (report.false_negatives + report.false_positives + report.id_switches) as f64 / gtc;
    Ok(ClearPass { report, matched })
}

/// Recall, precision, false alarms per frame, id switches, fragmentations
/// and MOTA. The trajectory-level counts are left at zero; see
/// [`evaluate`].
pub fn clear_metrics(gt: &TrajectorySet, hyp: &TrajectorySet, iou_threshold: f64) -> Result<MetricsReport> {
    Ok(clear_pass(gt, hyp, iou_threshold)?.report)
}

fn classify(matched: &HashMap<u32, Vec<bool>>, mostly: f64, lost: f64) -> (usize, usize, usize) {
    let (mut mt, mut pt, mut ml) = (0, 0, 0);
    for flags in matched.values() {
        let coverage = if flags.is_empty() {
            0.0
        } else {
            flags.iter().filter(|&&m| m).count() as f64 / flags.len() as f64
        };
        if coverage >= mostly {
            mt += 1;
        } else if coverage <= lost {
            ml += 1;
        } else {
            pt += 1;
        }
    }
    (mt, pt, ml)
}

/// Mostly tracked, partially tracked and mostly lost trajectory counts.
pub fn track_level_metrics(
    gt: &TrajectorySet,
    hyp: &TrajectorySet,
    cfg: &EvalConfig,
) -> Result<(usize, usize, usize)> {
    let pass = clear_pass(gt, hyp, cfg.iou_threshold)?;
    Ok(classify(&pass.matched, cfg.mostly_tracked, cfg.mostly_lost))
}

/// Full report: CLEAR metrics and trajectory-level counts.
pub fn evaluate(gt: &TrajectorySet, hyp: &TrajectorySet, cfg: &EvalConfig) -> Result<MetricsReport> {
    cfg.validate()?;
    let pass = clear_pass(gt, hyp, cfg.iou_threshold)?;
    let (mt, pt, ml) = classify(&pass.matched, cfg.mostly_tracked, cfg.mostly_lost);
    Ok(MetricsReport {
        mostly_tracked: mt,
        partially_tracked: pt,
        mostly_lost: ml,
        ..pass.report
    })
}
