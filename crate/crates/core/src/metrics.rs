//! CLEAR and identity metrics for comparing association modes at desk scale.
//!
//! Per-frame matching follows the CLEAR convention: last frame's
//! correspondence is kept while it stays IoU-valid, the rest is matched by
//! maximizing IoU, and an ID switch is counted whenever a ground-truth
//! object's matched identity changes. IDF1 uses an exact bipartite matching
//! over trajectory overlap counts.

use crate::affinity::{iou, BoundingBox};
use crate::lap::solve_min_assignment;
use crate::mat::Mat;
use crate::num::{real, Real};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("duplicate (frame, id) pair ({frame}, {id})")]
    DuplicateRow { frame: u64, id: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackRow<T> {
    pub frame: u64,
    pub id: u64,
    pub bbox: BoundingBox<T>,
    pub score: T,
}

/// Rows of (frame, id, box, score) with unique (frame, id) pairs, sorted by
/// (frame, id).
#[derive(Debug, Clone, Default)]
pub struct TrackTable<T> {
    rows: Vec<TrackRow<T>>,
}

impl<T: Real> TrackTable<T> {
    pub fn empty() -> Self {
        Self { rows: Vec::new() }
    }

    pub fn from_rows(mut rows: Vec<TrackRow<T>>) -> Result<Self, MetricsError> {
        rows.sort_by_key(|r| (r.frame, r.id));
        for pair in rows.windows(2) {
            if pair[0].frame == pair[1].frame && pair[0].id == pair[1].id {
                return Err(MetricsError::DuplicateRow {
                    frame: pair[1].frame,
                    id: pair[1].id,
                });
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[TrackRow<T>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn by_frame(&self) -> BTreeMap<u64, Vec<&TrackRow<T>>> {
        let mut map: BTreeMap<u64, Vec<&TrackRow<T>>> = BTreeMap::new();
        for row in &self.rows {
            map.entry(row.frame).or_default().push(row);
        }
        map
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<T> {
    /// `None` when the ground truth is empty (MOTA undefined).
    pub mota: Option<T>,
    pub idf1: T,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
    pub gt_boxes: usize,
    pub pred_boxes: usize,
    pub matched_boxes: usize,
}

/// Evaluate predictions against ground truth with IoU-gated matching.
pub fn evaluate<T: Real>(
    predicted: &TrackTable<T>,
    ground_truth: &TrackTable<T>,
    iou_threshold: T,
) -> MetricsReport<T> {
    let pred_frames = predicted.by_frame();
    let gt_frames = ground_truth.by_frame();

    let mut frames: Vec<u64> = pred_frames.keys().chain(gt_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let mut last_match: HashMap<u64, u64> = HashMap::new(); // gt id -> pred id
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut switches = 0usize;
    let mut matched_boxes = 0usize;
    let mut gt_present: HashMap<u64, usize> = HashMap::new();
    let mut gt_covered: HashMap<u64, usize> = HashMap::new();
    // trajectory-overlap counts for IDF1, keyed by (gt id, pred id)
    let mut overlaps: HashMap<(u64, u64), usize> = HashMap::new();

    let empty: Vec<&TrackRow<T>> = Vec::new();
    for frame in frames {
        let mut gts: Vec<&TrackRow<T>> = gt_frames.get(&frame).unwrap_or(&empty).clone();
        let mut preds: Vec<&TrackRow<T>> = pred_frames.get(&frame).unwrap_or(&empty).clone();
        gts.sort_by_key(|r| r.id);
        preds.sort_by_key(|r| r.id);

        for g in &gts {
            *gt_present.entry(g.id).or_default() += 1;
        }

        // IDF1 overlap accumulation is independent of the per-frame matching
        for g in &gts {
            for p in &preds {
                if iou(&g.bbox, &p.bbox) >= iou_threshold {
                    *overlaps.entry((g.id, p.id)).or_default() += 1;
                }
            }
        }

        // 1) carry over still-valid correspondences from the previous frames
        let mut gt_free: Vec<usize> = Vec::new();
        let mut pred_used = vec![false; preds.len()];
        let mut frame_matches: Vec<(u64, u64)> = Vec::new();
        for (gi, g) in gts.iter().enumerate() {
            let carried = last_match.get(&g.id).and_then(|pid| {
                preds
                    .iter()
                    .position(|p| p.id == *pid)
                    .filter(|&pi| !pred_used[pi] && iou(&g.bbox, &preds[pi].bbox) >= iou_threshold)
            });
            match carried {
                Some(pi) => {
                    pred_used[pi] = true;
                    frame_matches.push((g.id, preds[pi].id));
                }
                None => gt_free.push(gi),
            }
        }

        // 2) match the rest by maximizing IoU (Hungarian on 1 - IoU, gated)
        let pred_free: Vec<usize> = (0..preds.len()).filter(|&i| !pred_used[i]).collect();
        if !gt_free.is_empty() && !pred_free.is_empty() {
            let costs = Mat::from_fn(gt_free.len(), pred_free.len(), |i, j| {
                let v = iou(&gts[gt_free[i]].bbox, &preds[pred_free[j]].bbox);
                if v >= iou_threshold {
                    T::one() - v
                } else {
                    T::infinity()
                }
            });
            for (i, j) in solve_min_assignment(&costs).pairs {
                frame_matches.push((gts[gt_free[i]].id, preds[pred_free[j]].id));
            }
        }

        for (gt_id, pred_id) in &frame_matches {
            if let Some(prev) = last_match.get(gt_id) {
                if prev != pred_id {
                    switches += 1;
                }
            }
            last_match.insert(*gt_id, *pred_id);
            *gt_covered.entry(*gt_id).or_default() += 1;
        }
        matched_boxes += frame_matches.len();
        fp += preds.len() - frame_matches.len();
        fn_ += gts.len() - frame_matches.len();
    }

    let gt_boxes = ground_truth.len();
    let pred_boxes = predicted.len();
    let mota = if gt_boxes == 0 {
        None
    } else {
        let penalty = real::<T>((fp + fn_ + switches) as f64) / real::<T>(gt_boxes as f64);
        Some(T::one() - penalty)
    };

    // MT/ML at 80% / 20% coverage
    let mut mostly_tracked = 0;
    let mut mostly_lost = 0;
    for (gt_id, &present) in gt_present.iter() {
        let covered = gt_covered.get(gt_id).copied().unwrap_or(0);
        let ratio = covered as f64 / present as f64;
        if ratio >= 0.8 {
            mostly_tracked += 1;
        } else if ratio <= 0.2 {
            mostly_lost += 1;
        }
    }

    let idtp = idf1_matching(&overlaps);
    let idfp = pred_boxes - idtp;
    let idfn = gt_boxes - idtp;
    let denom = 2 * idtp + idfp + idfn;
    let idf1 = if denom == 0 {
        T::one()
    } else {
        real::<T>(2.0 * idtp as f64) / real::<T>(denom as f64)
    };

    MetricsReport {
        mota,
        idf1,
        false_positives: fp,
        false_negatives: fn_,
        id_switches: switches,
        mostly_tracked,
        mostly_lost,
        idtp,
        idfp,
        idfn,
        gt_boxes,
        pred_boxes,
        matched_boxes,
    }
}

/// Exact trajectory-level bipartite matching maximizing the total overlap.
fn idf1_matching(overlaps: &HashMap<(u64, u64), usize>) -> usize {
    if overlaps.is_empty() {
        return 0;
    }
    let mut gt_ids: Vec<u64> = overlaps.keys().map(|k| k.0).collect();
    let mut pred_ids: Vec<u64> = overlaps.keys().map(|k| k.1).collect();
    gt_ids.sort_unstable();
    gt_ids.dedup();
    pred_ids.sort_unstable();
    pred_ids.dedup();

    let max_overlap = overlaps.values().copied().max().unwrap_or(0) as f64;
    let costs = Mat::from_fn(gt_ids.len(), pred_ids.len(), |i, j| {
        let ov = overlaps
            .get(&(gt_ids[i], pred_ids[j]))
            .copied()
            .unwrap_or(0) as f64;
        max_overlap - ov
    });
    solve_min_assignment(&costs)
        .pairs
        .iter()
        .map(|&(i, j)| {
            overlaps
                .get(&(gt_ids[i], pred_ids[j]))
                .copied()
                .unwrap_or(0)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn row(frame: u64, id: u64, x: f64) -> TrackRow<f64> {
        TrackRow {
            frame,
            id,
            bbox: BoundingBox::new(x, 0.0, 10.0, 10.0),
            score: 1.0,
        }
    }

    fn table(rows: Vec<TrackRow<f64>>) -> TrackTable<f64> {
        TrackTable::from_rows(rows).unwrap()
    }

    #[test]
    fn duplicate_rows_rejected() {
        let err = TrackTable::from_rows(vec![row(1, 1, 0.0), row(1, 1, 5.0)]);
        assert!(matches!(err, Err(MetricsError::DuplicateRow { .. })));
    }

    #[test]
    fn perfect_predictions() {
        let gt = table((1..=10).map(|f| row(f, 3, f as f64)).collect());
        let report = evaluate(&gt, &gt, 0.5);
        assert_eq!(report.mota, Some(1.0));
        assert_eq!(report.idf1, 1.0);
        assert_eq!(report.id_switches, 0);
        assert_eq!(report.mostly_tracked, 1);
        assert_eq!(report.mostly_lost, 0);
    }

    #[test]
    fn split_trajectory_hand_example() {
        // one object over 10 frames; predictions switch identity halfway
        let gt = table((1..=10).map(|f| row(f, 1, f as f64)).collect());
        let pred = table(
            (1..=10)
                .map(|f| row(f, if f <= 5 { 100 } else { 200 }, f as f64))
                .collect(),
        );
        let report = evaluate(&pred, &gt, 0.5);
        assert_eq!(report.id_switches, 1);
        assert_eq!(report.false_positives, 0);
        assert_eq!(report.false_negatives, 0);
        assert_eq!(report.mota, Some(0.9));
        assert_eq!(report.idtp, 5);
        assert_eq!(report.idfp, 5);
        assert_eq!(report.idfn, 5);
        assert_eq!(report.idf1, 0.5);
    }

    #[test]
    fn empty_predictions() {
        let gt = table((1..=4).map(|f| row(f, 1, 0.0)).collect());
        let report = evaluate(&TrackTable::empty(), &gt, 0.5);
        assert_eq!(report.false_negatives, 4);
        assert_eq!(report.idf1, 0.0);
        assert_eq!(report.mota, Some(0.0));
        assert_eq!(report.mostly_lost, 1);
    }

    #[test]
    fn empty_ground_truth_has_undefined_mota() {
        let pred = table(vec![row(1, 1, 0.0)]);
        let report = evaluate(&pred, &TrackTable::empty(), 0.5);
        assert_eq!(report.mota, None);
        assert_eq!(report.false_positives, 1);
    }

    #[test]
    fn carryover_prefers_previous_correspondence() {
        // two gt objects close together; pred ids must not swap spuriously
        let mut gt_rows = Vec::new();
        let mut pred_rows = Vec::new();
        for f in 1..=5 {
            gt_rows.push(row(f, 1, 0.0));
            gt_rows.push(row(f, 2, 6.0));
            pred_rows.push(row(f, 10, 1.0));
            pred_rows.push(row(f, 20, 5.5));
        }
        let report = evaluate(&table(pred_rows), &table(gt_rows), 0.3);
        assert_eq!(report.id_switches, 0);
    }

    #[test]
    fn relabeling_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..20 {
            let mut gt_rows = Vec::new();
            let mut pred_rows = Vec::new();
            for f in 1..=12 {
                for id in 0..5u64 {
                    let x = (id as f64) * 20.0 + rng.gen_range(-1.0..1.0);
                    gt_rows.push(row(f, id + 1, x));
                    if rng.gen::<f64>() < 0.8 {
                        let pid = if rng.gen::<f64>() < 0.1 { id + 50 } else { id + 10 };
                        pred_rows.push(row(f, pid, x + rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let pred = table(pred_rows.clone());
            let gt = table(gt_rows);

            // relabel predicted ids by a fixed bijection
            let relabeled = table(
                pred_rows
                    .into_iter()
                    .map(|mut r| {
                        r.id = r.id * 7 + 1000;
                        r
                    })
                    .collect(),
            );
            let a = evaluate(&pred, &gt, 0.5);
            let b = evaluate(&relabeled, &gt, 0.5);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn frame_order_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut gt_rows: Vec<TrackRow<f64>> = (1..=10).map(|f| row(f, 1, f as f64)).collect();
        let mut pred_rows: Vec<TrackRow<f64>> =
            (1..=10).map(|f| row(f, 9, f as f64 + 0.5)).collect();
        let base = evaluate(&table(pred_rows.clone()), &table(gt_rows.clone()), 0.5);
        gt_rows.shuffle(&mut rng);
        pred_rows.shuffle(&mut rng);
        let shuffled = evaluate(&table(pred_rows), &table(gt_rows), 0.5);
        assert_eq!(base, shuffled);
    }

    #[test]
    fn fp_plus_matches_accounts_for_all_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut gt_rows = Vec::new();
        let mut pred_rows = Vec::new();
        for f in 1..=8 {
            for id in 0..4u64 {
                gt_rows.push(row(f, id + 1, id as f64 * 30.0));
                if rng.gen::<f64>() < 0.7 {
                    pred_rows.push(row(f, id + 1, id as f64 * 30.0 + 1.0));
                }
                if rng.gen::<f64>() < 0.2 {
                    pred_rows.push(row(f, id + 40, 500.0 + id as f64 * 30.0));
                }
            }
        }
        let pred = table(pred_rows);
        let gt = table(gt_rows);
        let report = evaluate(&pred, &gt, 0.5);
        assert_eq!(
            report.false_positives + report.matched_boxes,
            report.pred_boxes
        );
        assert_eq!(
            report.false_negatives + report.matched_boxes,
            report.gt_boxes
        );
    }
}
