//! Online hierarchical tracker: appearance/motion cost fusion, two Hungarian
//! matching stages and track lifecycle management.
//!
//! Stage 1 matches detections against all live tracks (active, lost and
//! not-yet-confirmed) on a fused cost `w * (1 - P) + (1 - w) * M` where `P`
//! comes from the configured association mode and `M` is the gated squared
//! Mahalanobis distance. Stage 2 matches the leftovers on IoU distance,
//! which covers the frames where appearance is unreliable. Unmatched tracks
//! go lost and are kept around for `lost_ttl` frames so occluded objects can
//! be re-associated under the same identity.

use crate::affinity::{
    cosine_similarity_matrix, iou_distance_matrix, update_track_embedding, BoundingBox, Embedding,
};
use crate::marginal::{
    bidirectional_softmax_probabilities, collect_structures_scaled, marginal_probabilities,
    row_softmax_probabilities, CostVector, ScoreVector,
};
use crate::mat::Mat;
use crate::metrics::{TrackRow, TrackTable};
use crate::motion::{KalmanState, MotionModel};
use crate::num::{real, Real};
use crate::lap::solve_min_assignment;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrackerError {
    #[error("matrix dimensions differ: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    DimensionMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// How stage-1 pair affinities are turned into a matching cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AssociationMode {
    /// Marginal matching probabilities over collected structures.
    Marginal,
    /// Raw scaled feature distance (no probability normalization).
    Distance,
    /// Per-detection softmax over tracks.
    RowSoftmax,
    /// Mean of detection-wise and track-wise softmaxes.
    BiSoftmax,
}

impl AssociationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            AssociationMode::Marginal => "marginal",
            AssociationMode::Distance => "distance",
            AssociationMode::RowSoftmax => "row_softmax",
            AssociationMode::BiSoftmax => "bi_softmax",
        }
    }
}

impl std::str::FromStr for AssociationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "marginal" => Ok(AssociationMode::Marginal),
            "distance" => Ok(AssociationMode::Distance),
            "row_softmax" => Ok(AssociationMode::RowSoftmax),
            "bi_softmax" => Ok(AssociationMode::BiSoftmax),
            other => Err(format!(
                "unknown association mode `{other}` (expected marginal|distance|row_softmax|bi_softmax)"
            )),
        }
    }
}

impl std::fmt::Display for AssociationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All thresholds and weights of the tracking algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig<T> {
    /// Minimum detection score to enter matching.
    pub conf_detect: T,
    /// Minimum detection score to found a new track.
    pub conf_new_track: T,
    /// Stage-1 rejection threshold on the fused cost.
    pub prob_match_threshold: T,
    /// Stage-2 rejection threshold on IoU distance.
    pub iou_match_threshold: T,
    /// Weight of the appearance cue against the motion cue.
    pub fusion_weight: T,
    /// Number of structures collected for the marginals.
    pub cg_steps: usize,
    /// Frames a lost track is kept before removal.
    pub lost_ttl: usize,
    /// EMA momentum for track embeddings.
    pub ema_momentum: T,
    /// Scale applied to feature distances (inverse softmax temperature).
    pub distance_scale: T,
    pub association_mode: AssociationMode,
    /// Emit tracks only after their second match (frame-1 tracks are emitted
    /// immediately). Suppresses one-frame false positives.
    pub tentative_suppression: bool,
}

impl<T: Real> Default for TrackerConfig<T> {
    fn default() -> Self {
        Self {
            conf_detect: real(0.4),
            conf_new_track: real(0.5),
            prob_match_threshold: real(0.8),
            iou_match_threshold: real(0.5),
            fusion_weight: real(0.98),
            cg_steps: 100,
            lost_ttl: 30,
            ema_momentum: real(0.9),
            distance_scale: real(1.0),
            association_mode: AssociationMode::Marginal,
            tentative_suppression: true,
        }
    }
}

impl<T: Real> TrackerConfig<T> {
    pub fn validate(&self) -> Result<(), TrackerError> {
        let unit = |name: &str, v: T| -> Result<(), TrackerError> {
            if v >= T::zero() && v <= T::one() {
                Ok(())
            } else {
                Err(TrackerError::InvalidConfig(format!(
                    "{name} must lie in [0,1], got {v}"
                )))
            }
        };
        unit("conf_detect", self.conf_detect)?;
        unit("conf_new_track", self.conf_new_track)?;
        unit("prob_match_threshold", self.prob_match_threshold)?;
        unit("iou_match_threshold", self.iou_match_threshold)?;
        unit("fusion_weight", self.fusion_weight)?;
        unit("ema_momentum", self.ema_momentum)?;
        if self.cg_steps == 0 {
            return Err(TrackerError::InvalidConfig(
                "cg_steps must be at least 1".into(),
            ));
        }
        if !(self.distance_scale > T::zero()) || !self.distance_scale.is_finite() {
            return Err(TrackerError::InvalidConfig(format!(
                "distance_scale must be positive and finite, got {}",
                self.distance_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
    Removed,
}

#[derive(Debug, Clone)]
pub struct Track<T> {
    pub id: u64,
    pub state: KalmanState<T>,
    pub embedding: Embedding<T>,
    pub status: TrackStatus,
    pub frames_since_update: usize,
    pub last_box: BoundingBox<T>,
    pub score: T,
    pub hits: usize,
}

/// One detector output: box, confidence and appearance feature.
#[derive(Debug, Clone)]
pub struct Detection<T> {
    pub bbox: BoundingBox<T>,
    pub score: T,
    pub embedding: Embedding<T>,
}

/// Fused stage-1 cost `w * (1 - P) + (1 - w) * M`; gated entries of `M`
/// propagate as `+inf`.
pub fn fuse_costs<T: Real>(
    probabilities: &Mat<T>,
    mahalanobis: &Mat<T>,
    fusion_weight: T,
) -> Result<Mat<T>, TrackerError> {
    if probabilities.rows() != mahalanobis.rows() || probabilities.cols() != mahalanobis.cols() {
        return Err(TrackerError::DimensionMismatch {
            left_rows: probabilities.rows(),
            left_cols: probabilities.cols(),
            right_rows: mahalanobis.rows(),
            right_cols: mahalanobis.cols(),
        });
    }
    Ok(Mat::from_fn(probabilities.rows(), probabilities.cols(), |i, j| {
        let m = mahalanobis[(i, j)];
        if m.is_infinite() {
            T::infinity()
        } else {
            fusion_weight * (T::one() - probabilities[(i, j)]) + (T::one() - fusion_weight) * m
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchResult {
    pub matches: Vec<(usize, usize)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

/// Hungarian matching followed by threshold rejection: selected pairs with
/// cost above `threshold` are demoted to unmatched on both sides.
pub fn match_stage<T: Real>(costs: &Mat<T>, threshold: T) -> MatchResult {
    let solution = solve_min_assignment(costs);
    let mut matches = Vec::with_capacity(solution.pairs.len());
    let mut row_matched = vec![false; costs.rows()];
    let mut col_matched = vec![false; costs.cols()];
    for (i, j) in solution.pairs {
        if costs[(i, j)] <= threshold {
            row_matched[i] = true;
            col_matched[j] = true;
            matches.push((i, j));
        }
    }
    MatchResult {
        matches,
        unmatched_rows: (0..costs.rows()).filter(|&i| !row_matched[i]).collect(),
        unmatched_cols: (0..costs.cols()).filter(|&j| !col_matched[j]).collect(),
    }
}

/// Single-writer online tracker; `step` calls must be serialized per
/// instance, distinct instances are independent.
pub struct Tracker<T> {
    config: TrackerConfig<T>,
    motion: MotionModel<T>,
    tracks: Vec<Track<T>>,
    next_id: u64,
    steps_taken: u64,
}

impl<T: Real> Tracker<T> {
    pub fn new(config: TrackerConfig<T>) -> Result<Self, TrackerError> {
        config.validate()?;
        Ok(Self {
            config,
            motion: MotionModel::default(),
            tracks: Vec::new(),
            next_id: 1,
            steps_taken: 0,
        })
    }

    pub fn config(&self) -> &TrackerConfig<T> {
        &self.config
    }

    /// Live tracks (anything not removed), mostly for inspection in tests.
    pub fn tracks(&self) -> &[Track<T>] {
        &self.tracks
    }

    /// Advance one frame and return the confirmed tracks, sorted by id.
    pub fn step(&mut self, frame: u64, detections: &[Detection<T>]) -> Vec<TrackRow<T>> {
        self.steps_taken += 1;
        let first_frame = self.steps_taken == 1;
        let cfg = self.config.clone();

        // (a) drop malformed or low-confidence detections
        let expected_dim = self
            .tracks
            .iter()
            .map(|t| t.embedding.dim())
            .next()
            .or_else(|| detections.iter().map(|d| d.embedding.dim()).next());
        let dets: Vec<&Detection<T>> = detections
            .iter()
            .filter(|d| {
                d.bbox.is_valid()
                    && d.score.is_finite()
                    && d.score >= cfg.conf_detect
                    && Some(d.embedding.dim()) == expected_dim
            })
            .collect();

        // (b) propagate all live tracks; drop any whose geometry degenerated
        for track in &mut self.tracks {
            track.state = self.motion.predict(&track.state);
            track.frames_since_update += 1;
            if !track.state.to_box().is_valid() {
                track.status = TrackStatus::Removed;
            }
        }
        let candidates: Vec<usize> = (0..self.tracks.len())
            .filter(|&i| self.tracks[i].status != TrackStatus::Removed)
            .collect();

        let mut unmatched_dets: Vec<usize> = (0..dets.len()).collect();
        let mut unmatched_tracks: Vec<usize> = candidates.clone();
        let mut matched: Vec<(usize, usize)> = Vec::new(); // (det index, track index)

        // (c) stage 1: fused appearance + motion matching
        if !dets.is_empty() && !candidates.is_empty() {
            let stage1 = self.stage1_costs(&dets, &candidates);
            let result = match_stage(&stage1, cfg.prob_match_threshold);
            for (di, cj) in result.matches {
                matched.push((di, candidates[cj]));
            }
            unmatched_dets = result.unmatched_rows;
            unmatched_tracks = result.unmatched_cols.iter().map(|&j| candidates[j]).collect();
        }

        // (d) stage 2: IoU matching for the leftovers
        if !unmatched_dets.is_empty() && !unmatched_tracks.is_empty() {
            let det_boxes: Vec<BoundingBox<T>> =
                unmatched_dets.iter().map(|&i| dets[i].bbox).collect();
            let track_boxes: Vec<BoundingBox<T>> = unmatched_tracks
                .iter()
                .map(|&i| self.tracks[i].state.to_box())
                .collect();
            let costs = iou_distance_matrix(&det_boxes, &track_boxes);
            let result = match_stage(&costs, cfg.iou_match_threshold);
            for (ri, rj) in result.matches {
                matched.push((unmatched_dets[ri], unmatched_tracks[rj]));
            }
            unmatched_dets = result.unmatched_rows.iter().map(|&r| unmatched_dets[r]).collect();
        }

        // (e) matched tracks: correct, refresh appearance, activate
        let mut matched_track_ids = vec![false; self.tracks.len()];
        for (di, ti) in matched {
            let det = dets[di];
            let track = &mut self.tracks[ti];
            matched_track_ids[ti] = true;
            if let Ok(state) = self.motion.update(&track.state, &det.bbox) {
                track.state = state;
            }
            if let Ok(emb) =
                update_track_embedding(&track.embedding, &det.embedding, cfg.ema_momentum)
            {
                track.embedding = emb;
            }
            track.frames_since_update = 0;
            track.hits += 1;
            track.last_box = det.bbox;
            track.score = det.score;
            track.status = if track.hits >= 2 || !cfg.tentative_suppression {
                TrackStatus::Active
            } else {
                track.status
            };
        }

        // (f) unmatched tracks: mark lost, drop stale ones
        for (i, track) in self.tracks.iter_mut().enumerate() {
            if matched_track_ids[i] || track.status == TrackStatus::Removed {
                continue;
            }
            track.status = if track.frames_since_update > cfg.lost_ttl {
                TrackStatus::Removed
            } else {
                TrackStatus::Lost
            };
        }

        // (g) confident leftover detections found new tracks
        for &di in &unmatched_dets {
            let det = dets[di];
            if det.score < cfg.conf_new_track {
                continue;
            }
            let Ok(state) = self.motion.initiate(&det.bbox) else {
                continue;
            };
            let status = if first_frame || !cfg.tentative_suppression {
                TrackStatus::Active
            } else {
                TrackStatus::Tentative
            };
            self.tracks.push(Track {
                id: self.next_id,
                state,
                embedding: det.embedding.clone(),
                status,
                frames_since_update: 0,
                last_box: det.bbox,
                score: det.score,
                hits: 1,
            });
            self.next_id += 1;
        }

        // (h) emit confirmed tracks and prune removed ones
        let mut out: Vec<TrackRow<T>> = self
            .tracks
            .iter()
            .filter(|t| t.status == TrackStatus::Active && t.frames_since_update == 0)
            .map(|t| TrackRow {
                frame,
                id: t.id,
                bbox: t.last_box,
                score: t.score,
            })
            .collect();
        out.sort_by_key(|r| r.id);
        self.tracks.retain(|t| t.status != TrackStatus::Removed);
        out
    }

    /// Stage-1 cost matrix for the configured association mode.
    fn stage1_costs(&self, dets: &[&Detection<T>], candidates: &[usize]) -> Mat<T> {
        let cfg = &self.config;
        let det_embs: Vec<Embedding<T>> = dets.iter().map(|d| d.embedding.clone()).collect();
        let trk_embs: Vec<Embedding<T>> = candidates
            .iter()
            .map(|&i| self.tracks[i].embedding.clone())
            .collect();
        let sim = cosine_similarity_matrix(&det_embs, &trk_embs)
            .expect("embedding dimensions are filtered to match");
        let scores = ScoreVector::from_similarity(&sim).expect("cosines are finite");

        let det_boxes: Vec<BoundingBox<T>> = dets.iter().map(|d| d.bbox).collect();
        let track_states: Vec<KalmanState<T>> = candidates
            .iter()
            .map(|&i| self.tracks[i].state.clone())
            .collect();
        let maha = self
            .motion
            .mahalanobis_matrix(&track_states, &det_boxes)
            .expect("innovation covariance stays positive definite for valid tracks");

        let temperature = T::one() / cfg.distance_scale;
        match cfg.association_mode {
            AssociationMode::Marginal => {
                let set = collect_structures_scaled(&scores, cfg.cg_steps, cfg.distance_scale);
                let p = marginal_probabilities(&set, sim.rows(), sim.cols());
                fuse_costs(&p, &maha, cfg.fusion_weight).expect("shapes match by construction")
            }
            AssociationMode::Distance => {
                // same fusion with the scaled clamped distance in place of 1-P
                let dist = CostVector::from_scores(&scores, cfg.distance_scale).as_mat();
                let w = cfg.fusion_weight;
                Mat::from_fn(dist.rows(), dist.cols(), |i, j| {
                    let m = maha[(i, j)];
                    if m.is_infinite() {
                        T::infinity()
                    } else {
                        w * dist[(i, j)] + (T::one() - w) * m
                    }
                })
            }
            AssociationMode::RowSoftmax => {
                let p = row_softmax_probabilities(&sim, temperature);
                fuse_costs(&p, &maha, cfg.fusion_weight).expect("shapes match by construction")
            }
            AssociationMode::BiSoftmax => {
                let p = bidirectional_softmax_probabilities(&sim, temperature);
                fuse_costs(&p, &maha, cfg.fusion_weight).expect("shapes match by construction")
            }
        }
    }
}

/// Fold `step` over a frame sequence (frames numbered from 1) and collect the
/// full track table, sorted by (frame, id).
pub fn run_sequence<T: Real>(
    config: TrackerConfig<T>,
    frames: &[Vec<Detection<T>>],
) -> Result<TrackTable<T>, TrackerError> {
    let mut tracker = Tracker::new(config)?;
    let mut rows = Vec::new();
    for (i, dets) in frames.iter().enumerate() {
        rows.extend(tracker.step(i as u64 + 1, dets));
    }
    Ok(TrackTable::from_rows(rows).expect("tracker emits unique (frame, id) pairs"))
}
