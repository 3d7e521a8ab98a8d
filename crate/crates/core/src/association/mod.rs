//! Hierarchical detection/tag-box association and the per-track lifecycle.
//!
//! Each frame runs three rounds:
//!
//! 1. detections against tag-boxes (Hungarian on the pair cost);
//! 2. every tag-box left over gets a default box, which is matched against
//!    the detections nobody claimed;
//! 3. the tag-box is checked against its default box to detect drift. A
//!    tag-box failing that check for more than `age_threshold` frames is
//!    re-initialised on the track's box. A tag-box sitting inside a
//!    detection that already belongs to another track causes the less
//!    confident of the two to be pended.

mod hungarian;

use serde::{Deserialize, Serialize};

pub use hungarian::{brute_force_assign, hungarian_assign, CostMatrix, Matching, INFEASIBLE};

use crate::dcf::{init_track_model, FilterModel, TrackerConfig};
use crate::error::{Error, Result};
use crate::features::{ColorNameTable, FeatureConfig, Frame};
use crate::geometry::{normalized_center_distance, overlap_fraction, BoundingBox, TagBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationConfig {
    /// Weight of the centre-distance term.
    pub delta: f64,
    /// Failed drift checks tolerated before re-initialisation.
    pub age_threshold: u32,
    /// Pairs at or above this cost never match.
    pub gate_cost: f64,
    /// Tag-box size relative to the bounding box.
    pub reinit_fraction: f64,
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self {
            delta: 0.5,
            age_threshold: 10,
            gate_cost: 1.0,
            reinit_fraction: 0.4,
        }
    }
}

impl AssociationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::Config("association.delta must be >= 0".into()));
        }
        if self.age_threshold < 1 {
            return Err(Error::Config("association.age_threshold must be >= 1".into()));
        }
        if !(self.gate_cost > 0.0) {
            return Err(Error::Config("association.gate_cost must be > 0".into()));
        }
        if !(self.reinit_fraction > 0.0 && self.reinit_fraction <= 1.0) {
            return Err(Error::Config("association.reinit_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Tracked,
    Drift,
    Pending,
}

#[derive(Debug, Clone)]
pub struct Track {
    pub id: u32,
    pub tag_box: TagBox,
    /// Last box confirmed by a detection.
    pub bounding_box: BoundingBox,
    /// Tag-box at the time `bounding_box` was confirmed.
    pub anchor_tag_box: TagBox,
    pub tracklet: Vec<(usize, BoundingBox)>,
    pub age: u32,
    pub status: TrackStatus,
    /// Frames since the tag-box was (re-)initialised; drives the update
    /// schedule.
    pub frames_since_init: usize,
    pub model: Option<FilterModel>,
}

impl Track {
    /// Starts a track on `bbox` at `frame_index` with a centred tag-box.
    pub fn new(id: u32, bbox: BoundingBox, frame_index: usize, cfg: &AssociationConfig) -> Result<Self> {
        let tag_box = bbox.centered_tag_box(cfg.reinit_fraction)?;
        Ok(Self {
            id,
            tag_box,
            bounding_box: bbox,
            anchor_tag_box: tag_box,
            tracklet: vec![(frame_index, bbox)],
            age: 0,
            status: TrackStatus::Tracked,
            frames_since_init: 0,
            model: None,
        })
    }

    pub fn last_box(&self) -> BoundingBox {
        self.tracklet.last().map(|t| t.1).unwrap_or(self.bounding_box)
    }

    fn push(&mut self, frame: usize, bbox: BoundingBox) {
        debug_assert!(self.tracklet.last().is_none_or(|t| t.0 < frame));
        self.tracklet.push((frame, bbox));
    }

    fn confirm(&mut self, bbox: BoundingBox) {
        self.bounding_box = bbox;
        self.anchor_tag_box = self.tag_box;
    }
}

/// Literal pair cost: `-ln(overlap) + delta * distance / diag`, or 1 when
/// the boxes do not overlap.
pub fn pair_cost(db: &BoundingBox, tb: &TagBox, delta: f64) -> f64 {
    let overlap = overlap_fraction(db, tb);
    if overlap <= 0.0 {
        return 1.0;
    }
    -overlap.ln() + delta * normalized_center_distance(db, tb)
}

/// Pair cost for matching: [`INFEASIBLE`] when the boxes are disjoint or
/// the cost reaches the gate.
pub fn gated_cost(db: &BoundingBox, tb: &TagBox, cfg: &AssociationConfig) -> f64 {
    if overlap_fraction(db, tb) <= 0.0 {
        return INFEASIBLE;
    }
    let c = pair_cost(db, tb, cfg.delta);
    if c >= cfg.gate_cost {
        INFEASIBLE
    } else {
        c
    }
}

/// Rows are detections, columns tag-boxes.
pub fn build_cost_matrix(detections: &[BoundingBox], tag_boxes: &[TagBox], cfg: &AssociationConfig) -> CostMatrix {
    CostMatrix::from_fn(detections.len(), tag_boxes.len(), |r, c| {
        gated_cost(&detections[r], &tag_boxes[c], cfg)
    })
}

/// The box a track falls back on when no detection is matched to its
/// tag-box: the last confirmed box moved with the tag-box since then.
pub fn default_box_for(track: &Track) -> BoundingBox {
    let dx = track.tag_box.cx() - track.anchor_tag_box.cx();
    let dy = track.tag_box.cy() - track.anchor_tag_box.cy();
    track.bounding_box.translated(dx, dy)
}

/// Default box used during association. The motion carry is trusted only
/// while the tag-box still sits on the track's previous box; a tag-box that
/// has wandered off would otherwise drag the default box with it, and the
/// drift check against that box could never fail.
fn effective_default_box(track: &Track, cfg: &AssociationConfig) -> BoundingBox {
    let previous = track.last_box();
    let attached = track.status == TrackStatus::Tracked && gated_cost(&previous, &track.tag_box, cfg) < INFEASIBLE;
    if attached {
        default_box_for(track)
    } else {
        previous
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxSource {
    /// Matched to the detection with this index.
    Detection(usize),
    /// No detection matched; the default box stands in.
    Default,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u32,
    pub bbox: BoundingBox,
    pub status: TrackStatus,
    pub source: BoxSource,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameResult {
    /// One entry per track, in track order.
    pub outputs: Vec<TrackOutput>,
    pub unassigned_detections: Vec<usize>,
    /// Ids of tracks whose tag-box found no detection in the first round.
    pub unassigned_tag_boxes: Vec<u32>,
    /// Ids whose tag-box was re-centred this frame; their models must be
    /// re-created.
    pub reinitialized: Vec<u32>,
    /// True when the first round matched everything one-to-one.
    pub one_to_one: bool,
}

/// Re-centres the tag-box on `bbox` and resets the lifecycle counters.
/// The filter model is left alone; see [`reinitialize_tagbox`].
pub fn recenter_tagbox(track: &mut Track, bbox: BoundingBox, cfg: &AssociationConfig) -> Result<()> {
    track.tag_box = bbox.centered_tag_box(cfg.reinit_fraction)?;
    track.anchor_tag_box = track.tag_box;
    track.bounding_box = bbox;
    track.age = 0;
    track.status = TrackStatus::Tracked;
    track.frames_since_init = 0;
    Ok(())
}

/// Re-centres the tag-box on `bbox` and trains a new model from `frame`.
pub fn reinitialize_tagbox(
    track: &mut Track,
    bbox: BoundingBox,
    frame: &Frame,
    acfg: &AssociationConfig,
    tcfg: &TrackerConfig,
    fcfg: &FeatureConfig,
    table: &ColorNameTable,
) -> Result<()> {
    let tag_box = bbox.centered_tag_box(acfg.reinit_fraction)?;
    let model = init_track_model(frame, &tag_box, tcfg, fcfg, table)?;
    recenter_tagbox(track, bbox, acfg)?;
    track.model = Some(model);
    Ok(())
}

/// Runs the association for frame `frame_index`. Tag-boxes must already be
/// localised for this frame. Every track receives exactly one box and its
/// tracklet grows by one entry. Models are not touched: the ids listed in
/// [`FrameResult::reinitialized`] need new ones.
pub fn associate_frame(
    tracks: &mut [Track],
    detections: &[BoundingBox],
    frame_index: usize,
    cfg: &AssociationConfig,
) -> FrameResult {
    // round 1: detections against active tag-boxes
    let active: Vec<usize> = (0..tracks.len()).filter(|&i| tracks[i].status != TrackStatus::Pending).collect();
    let tag_boxes: Vec<TagBox> = active.iter().map(|&i| tracks[i].tag_box).collect();
    let matrix = build_cost_matrix(detections, &tag_boxes, cfg);
    let matching = hungarian_assign(&matrix);

    let mut owner: Vec<Option<usize>> = vec![None; detections.len()];
    let mut output: Vec<Option<TrackOutput>> = vec![None; tracks.len()];
    for &(d, col) in &matching.pairs {
        let t = active[col];
        owner[d] = Some(t);
        let track = &mut tracks[t];
        track.confirm(detections[d]);
        track.status = TrackStatus::Tracked;
        track.age = track.age.saturating_sub(1);
        output[t] = Some(TrackOutput {
            id: track.id,
            bbox: detections[d],
            status: TrackStatus::Tracked,
            source: BoxSource::Detection(d),
        });
    }

    let unassigned: Vec<usize> = (0..tracks.len()).filter(|&t| output[t].is_none()).collect();
    let mut result = FrameResult {
        unassigned_tag_boxes: unassigned.iter().map(|&t| tracks[t].id).collect(),
        one_to_one: unassigned.is_empty() && matching.unmatched_rows.is_empty(),
        ..FrameResult::default()
    };

    let mut order = unassigned;
    order.sort_by_key(|&t| tracks[t].id);
    for t in order {
        let default_box = effective_default_box(&tracks[t], cfg);

        // round 2: free detections against the default box
        let default_as_tag = default_box.to_tag_box();
        let best = (0..detections.len())
            .filter(|&d| owner[d].is_none())
            .map(|d| (d, gated_cost(&detections[d], &default_as_tag, cfg)))
            .filter(|&(_, c)| c < INFEASIBLE)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let (out_box, source) = match best {
            Some((d, _)) => {
                owner[d] = Some(t);
                (detections[d], BoxSource::Detection(d))
            }
            None => (default_box, BoxSource::Default),
        };

        let track = &mut tracks[t];
        let mut reinit = false;
        if track.status == TrackStatus::Pending {
            // a pended tag-box waits for a clean detection match
            if best.is_some() {
                reinit = true;
            } else {
                track.age += 1;
            }
        } else {
            if best.is_some() {
                track.confirm(out_box);
            }
            // round 3: is the tag-box still on its default box?
            if gated_cost(&default_box, &track.tag_box, cfg) < INFEASIBLE {
                track.age = track.age.saturating_sub(1);
                track.status = TrackStatus::Tracked;
            } else {
                track.age += 1;
                track.status = TrackStatus::Drift;
            }
        }
        if track.age > cfg.age_threshold {
            reinit = true;
        }
        if reinit {
            // out_box is a valid box, so the tag-box is too
            recenter_tagbox(track, out_box, cfg).expect("valid output box");
            result.reinitialized.push(track.id);
        }

        // a tag-box inside a detection owned by another track: pend the
        // less confident of the two
        if !reinit && track.status != TrackStatus::Pending {
            let mine = track.tag_box;
            let contested = (0..detections.len())
                .filter(|&d| owner[d].is_some_and(|o| o != t))
                .map(|d| (d, gated_cost(&detections[d], &mine, cfg)))
                .filter(|&(_, c)| c < INFEASIBLE)
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            if let Some((d, my_cost)) = contested {
                let other = owner[d].expect("filtered on owner");
                let other_cost = gated_cost(&detections[d], &tracks[other].tag_box, cfg);
                let pend_me = if my_cost != other_cost {
                    my_cost > other_cost
                } else {
                    younger(&tracks[t], &tracks[other])
                };
                let victim = if pend_me { t } else { other };
                tracks[victim].status = TrackStatus::Pending;
                if let Some(o) = output[victim].as_mut() {
                    o.status = TrackStatus::Pending;
                }
            }
        }

        let track = &tracks[t];
        output[t] = Some(TrackOutput {
            id: track.id,
            bbox: out_box,
            status: track.status,
            source,
        });
    }

    result.unassigned_detections = (0..detections.len()).filter(|&d| owner[d].is_none()).collect();
    for (track, out) in tracks.iter_mut().zip(output.iter_mut()) {
        let out = out.take().expect("every track emits a box");
        track.push(frame_index, out.bbox);
        track.frames_since_init += 1;
        result.outputs.push(TrackOutput {
            status: track.status,
            ..out
        });
    }
    for id in &result.reinitialized {
        if let Some(track) = tracks.iter_mut().find(|t| t.id == *id) {
            track.frames_since_init = 0;
        }
    }
    result
}

/// `a` started later than `b` (ties: larger id).
fn younger(a: &Track, b: &Track) -> bool {
    let start = |t: &Track| t.tracklet.first().map(|e| e.0).unwrap_or(0);
    (start(a), a.id) > (start(b), b.id)
}
