//! Synthetic tracking benchmarks: constant-velocity objects in a pixel
//! arena, per-video embedding noise, detection dropout and scripted
//! occlusion windows, plus the threshold-sweep harness used to compare
//! association modes.

use crate::affinity::{BoundingBox, Embedding};
use crate::metrics::{evaluate, TrackRow, TrackTable};
use crate::num::real;
use crate::tracker::{run_sequence, AssociationMode, Detection, TrackerConfig, TrackerError};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("could not sample {objects} identity embeddings with pairwise angle >= {min_angle_deg} degrees in dimension {dim}")]
    SeparationUnsatisfiable {
        objects: usize,
        min_angle_deg: f64,
        dim: usize,
    },
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

/// Frames (inclusive, 1-based) during which an object emits no detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OcclusionWindow {
    pub object: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub objects: usize,
    pub frames: u64,
    pub arena_width: f64,
    pub arena_height: f64,
    /// Per-axis speed bound; each object gets a constant velocity with
    /// components uniform in [-speed_max, speed_max].
    pub speed_max: f64,
    /// Per-frame Gaussian position jitter applied to the true motion.
    pub jitter_pos: f64,
    pub box_width: f64,
    pub box_height: f64,
    pub embed_dim: usize,
    /// Minimum pairwise angle between identity embeddings, in degrees.
    pub min_pair_angle_deg: f64,
    /// Std of the Gaussian noise added to observed embeddings.
    pub sigma_emb: f64,
    /// Slow appearance change: each object's true embedding rotates by this
    /// many radians per frame within a random plane, so re-identification
    /// gets harder the longer an object has been out of view.
    pub drift_per_frame: f64,
    /// Probability that a visible object emits no detection in a frame.
    pub dropout: f64,
    /// Explicit occlusion windows, in addition to any generated ones.
    pub occlusions: Vec<OcclusionWindow>,
    /// Fraction of objects that get one generated occlusion window.
    pub occlude_fraction: f64,
    pub occlusion_min_len: u64,
    pub occlusion_max_len: u64,
    /// Maximum direction change (degrees, speed preserved) applied when an
    /// object goes occluded, so the reappearance drifts away from where pure
    /// coasting predicts it. Zero keeps occluded objects on their course.
    pub occlusion_turn_deg: f64,
    pub score_min: f64,
    pub score_max: f64,
    pub seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            objects: 10,
            frames: 100,
            arena_width: 1600.0,
            arena_height: 900.0,
            speed_max: 4.0,
            jitter_pos: 0.5,
            box_width: 40.0,
            box_height: 80.0,
            embed_dim: 16,
            min_pair_angle_deg: 35.0,
            sigma_emb: 0.1,
            drift_per_frame: 0.0,
            dropout: 0.0,
            occlusions: Vec::new(),
            occlude_fraction: 0.0,
            occlusion_min_len: 5,
            occlusion_max_len: 20,
            occlusion_turn_deg: 0.0,
            score_min: 0.6,
            score_max: 0.95,
            seed: 1,
        }
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let err = |msg: String| Err(ScenarioError::InvalidSpec(msg));
        if self.objects == 0 || self.frames == 0 {
            return err("objects and frames must be positive".into());
        }
        if self.arena_width <= self.box_width || self.arena_height <= self.box_height {
            return err("arena must be larger than the object box".into());
        }
        if !(self.box_width > 0.0 && self.box_height > 0.0) {
            return err("box dimensions must be positive".into());
        }
        if self.embed_dim == 0 {
            return err("embed_dim must be positive".into());
        }
        for p in [self.dropout, self.occlude_fraction] {
            if !(0.0..=1.0).contains(&p) {
                return err(format!("probability out of [0,1]: {p}"));
            }
        }
        if self.sigma_emb < 0.0
            || self.jitter_pos < 0.0
            || self.speed_max < 0.0
            || self.drift_per_frame < 0.0
        {
            return err("noise parameters must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.score_min)
            || !(0.0..=1.0).contains(&self.score_max)
            || self.score_min > self.score_max
        {
            return err("score range must satisfy 0 <= min <= max <= 1".into());
        }
        if self.occlusion_min_len > self.occlusion_max_len {
            return err("occlusion_min_len must not exceed occlusion_max_len".into());
        }
        if !self.occlusion_turn_deg.is_finite() || self.occlusion_turn_deg < 0.0 {
            return err("occlusion_turn_deg must be nonnegative".into());
        }
        for w in &self.occlusions {
            if w.object >= self.objects {
                return err(format!("occlusion window names object {}", w.object));
            }
            if w.start == 0 || w.end < w.start || w.end > self.frames {
                return err(format!(
                    "occlusion window {}..{} outside 1..{}",
                    w.start, w.end, self.frames
                ));
            }
        }
        Ok(())
    }
}

/// One generated sequence: per-frame detections plus the ground truth table
/// (which keeps occluded and dropped boxes).
pub struct GeneratedSequence {
    pub frames: Vec<Vec<Detection<f64>>>,
    pub ground_truth: TrackTable<f64>,
    pub embed_dim: usize,
}

/// Deterministically generate a sequence from the spec.
pub fn generate_sequence(spec: &ScenarioSpec) -> Result<GeneratedSequence, ScenarioError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut identities = sample_identities(spec, &mut rng)?;
    let windows = occlusion_windows(spec, &mut rng);

    let half_w = spec.box_width / 2.0;
    let half_h = spec.box_height / 2.0;
    let min_x = half_w;
    let max_x = spec.arena_width - half_w;
    let min_y = half_h;
    let max_y = spec.arena_height - half_h;

    let mut cx: Vec<f64> = (0..spec.objects).map(|_| rng.gen_range(min_x..max_x)).collect();
    let mut cy: Vec<f64> = (0..spec.objects).map(|_| rng.gen_range(min_y..max_y)).collect();
    let mut vx: Vec<f64> = (0..spec.objects)
        .map(|_| rng.gen_range(-spec.speed_max..=spec.speed_max))
        .collect();
    let mut vy: Vec<f64> = (0..spec.objects)
        .map(|_| rng.gen_range(-spec.speed_max..=spec.speed_max))
        .collect();

    let mut frames: Vec<Vec<Detection<f64>>> = Vec::with_capacity(spec.frames as usize);
    let mut gt_rows: Vec<TrackRow<f64>> = Vec::new();

    for frame in 1..=spec.frames {
        let mut dets = Vec::new();
        for o in 0..spec.objects {
            let occluded = windows
                .iter()
                .any(|w| w.object == o && (w.start..=w.end).contains(&frame));
            if spec.occlusion_turn_deg > 0.0
                && windows.iter().any(|w| w.object == o && w.start == frame)
            {
                let max_turn = spec.occlusion_turn_deg.to_radians();
                let turn = rng.gen_range(-max_turn..=max_turn);
                let (sin, cos) = turn.sin_cos();
                let (x, y) = (vx[o], vy[o]);
                vx[o] = x * cos - y * sin;
                vy[o] = x * sin + y * cos;
            }

            cx[o] += vx[o] + spec.jitter_pos * rng.sample::<f64, _>(StandardNormal);
            cy[o] += vy[o] + spec.jitter_pos * rng.sample::<f64, _>(StandardNormal);
            reflect(&mut cx[o], &mut vx[o], min_x, max_x);
            reflect(&mut cy[o], &mut vy[o], min_y, max_y);

            let bbox = BoundingBox::new(cx[o] - half_w, cy[o] - half_h, spec.box_width, spec.box_height);
            gt_rows.push(TrackRow {
                frame,
                id: o as u64 + 1,
                bbox,
                score: 1.0,
            });

            if spec.drift_per_frame > 0.0 {
                if let Ok(drifted) =
                    rotate_from(&identities[o], spec.drift_per_frame, spec.embed_dim, &mut rng)
                {
                    identities[o] = drifted;
                }
            }

            let dropped = rng.gen::<f64>() < spec.dropout;
            if occluded || dropped {
                continue;
            }
            let score = rng.gen_range(spec.score_min..=spec.score_max);
            let noisy: Vec<f64> = identities[o]
                .as_slice()
                .iter()
                .map(|&v| v + spec.sigma_emb * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let embedding = Embedding::new(noisy)
                .unwrap_or_else(|_| identities[o].clone());
            dets.push(Detection {
                bbox,
                score,
                embedding,
            });
        }
        frames.push(dets);
    }

    Ok(GeneratedSequence {
        frames,
        ground_truth: TrackTable::from_rows(gt_rows).expect("generator emits unique (frame,id)"),
        embed_dim: spec.embed_dim,
    })
}

fn reflect(pos: &mut f64, vel: &mut f64, lo: f64, hi: f64) {
    if *pos < lo {
        *pos = lo + (lo - *pos);
        *vel = -*vel;
    }
    if *pos > hi {
        *pos = hi - (*pos - hi);
        *vel = -*vel;
    }
    // a huge jitter draw can overshoot the reflected interval; clamp as a backstop
    *pos = pos.clamp(lo, hi);
}

/// Unit identity embeddings with all pairwise angles >= the configured
/// minimum, by rejection sampling. Half of the identities are sampled close
/// to the separation bound (a rotation of an earlier identity by slightly
/// more than the minimum angle), so the bound directly controls how
/// confusable the hardest pairs are instead of being vacuous at high
/// dimensions.
fn sample_identities(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Embedding<f64>>, ScenarioError> {
    let min_angle = spec.min_pair_angle_deg.to_radians();
    let cos_cap = min_angle.cos();
    let mut out: Vec<Embedding<f64>> = Vec::with_capacity(spec.objects);
    for k in 0..spec.objects {
        let mut accepted = None;
        for _attempt in 0..20_000 {
            let near_bound = k > 0 && rng.gen::<f64>() < 0.5;
            let candidate = if near_bound {
                let anchor = out[rng.gen_range(0..out.len())].clone();
                let angle = min_angle + rng.gen_range(0.0..0.2);
                let Ok(c) = rotate_from(&anchor, angle, spec.embed_dim, rng) else {
                    continue;
                };
                c
            } else {
                let v: Vec<f64> = (0..spec.embed_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let Ok(c) = Embedding::new(v) else { continue };
                c
            };
            let ok = out
                .iter()
                .all(|u| candidate.dot(u).unwrap_or(1.0) <= cos_cap + 1e-12);
            if ok {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(c) => out.push(c),
            None => {
                return Err(ScenarioError::SeparationUnsatisfiable {
                    objects: spec.objects,
                    min_angle_deg: spec.min_pair_angle_deg,
                    dim: spec.embed_dim,
                })
            }
        }
    }
    Ok(out)
}

/// Rotate `anchor` by `angle` toward a random orthogonal direction.
fn rotate_from(
    anchor: &Embedding<f64>,
    angle: f64,
    dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Embedding<f64>, crate::affinity::AffinityError> {
    let g: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let dot: f64 = anchor.as_slice().iter().zip(&g).map(|(a, b)| a * b).sum();
    let ortho: Vec<f64> = anchor
        .as_slice()
        .iter()
        .zip(&g)
        .map(|(a, b)| b - dot * a)
        .collect();
    let ortho = Embedding::new(ortho)?;
    let (sin, cos) = angle.sin_cos();
    Embedding::new(
        anchor
            .as_slice()
            .iter()
            .zip(ortho.as_slice())
            .map(|(a, o)| a * cos + o * sin)
            .collect(),
    )
}

fn occlusion_windows(spec: &ScenarioSpec, rng: &mut ChaCha8Rng) -> Vec<OcclusionWindow> {
    let mut windows = spec.occlusions.clone();
    let count = (spec.objects as f64 * spec.occlude_fraction).round() as usize;
    if count > 0 {
        let mut order: Vec<usize> = (0..spec.objects).collect();
        order.shuffle(rng);
        for &object in order.iter().take(count) {
            let len = rng.gen_range(spec.occlusion_min_len..=spec.occlusion_max_len);
            if spec.frames <= len + 2 {
                continue; // sequence too short for a window plus margins
            }
            let start = rng.gen_range(2..=(spec.frames - len));
            windows.push(OcclusionWindow {
                object,
                start,
                end: start + len - 1,
            });
        }
    }
    windows
}

/// Per-video IDF1 curve over the threshold grid.
#[derive(Debug, Clone)]
pub struct VideoCurve {
    pub sequence: usize,
    pub idf1: Vec<f64>,
    pub mota: Vec<Option<f64>>,
    pub id_switches: Vec<usize>,
    pub best_threshold: f64,
    pub best_idf1: f64,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub mode: AssociationMode,
    pub thresholds: Vec<f64>,
    pub videos: Vec<VideoCurve>,
    /// max - min of the per-video optimal thresholds.
    pub optimum_spread: f64,
    /// Mean IDF1 across videos, per threshold.
    pub mean_idf1: Vec<f64>,
}

impl SweepResult {
    /// Best single threshold shared by all videos (argmax of mean IDF1,
    /// lowest grid point on ties) and its mean IDF1.
    pub fn best_global(&self) -> (f64, f64) {
        let mut best = 0usize;
        for (i, v) in self.mean_idf1.iter().enumerate() {
            if *v > self.mean_idf1[best] {
                best = i;
            }
        }
        (self.thresholds[best], self.mean_idf1[best])
    }

    /// Mean IDF1 across videos at one grid threshold.
    pub fn mean_idf1_at(&self, threshold: f64) -> Option<f64> {
        self.thresholds
            .iter()
            .position(|t| (t - threshold).abs() < 1e-12)
            .map(|i| self.mean_idf1[i])
    }
}

/// Run the tracker at every grid threshold on every sequence and collect
/// IDF1 curves, per-video optima and the optimum spread. Grid points are
/// evaluated in parallel; each point uses an independent tracker instance.
pub fn threshold_sweep(
    sequences: &[GeneratedSequence],
    mode: AssociationMode,
    base: &TrackerConfig<f64>,
    thresholds: &[f64],
) -> Result<SweepResult, ScenarioError> {
    if sequences.len() < 2 {
        return Err(ScenarioError::InvalidSpec(
            "threshold_sweep needs at least 2 sequences".into(),
        ));
    }
    if thresholds.is_empty() {
        return Err(ScenarioError::InvalidSpec("empty threshold grid".into()));
    }
    base.validate()?;

    let jobs: Vec<(usize, usize)> = (0..sequences.len())
        .flat_map(|s| (0..thresholds.len()).map(move |t| (s, t)))
        .collect();
    let cells: Vec<(usize, usize, f64, Option<f64>, usize)> = jobs
        .par_iter()
        .map(|&(s, t)| {
            let mut cfg = base.clone();
            cfg.association_mode = mode;
            cfg.prob_match_threshold = thresholds[t];
            let table = run_sequence(cfg, &sequences[s].frames)
                .expect("config validated before the sweep");
            let report = evaluate(&table, &sequences[s].ground_truth, real(0.5));
            (s, t, report.idf1, report.mota, report.id_switches)
        })
        .collect();

    let mut videos: Vec<VideoCurve> = (0..sequences.len())
        .map(|s| VideoCurve {
            sequence: s,
            idf1: vec![0.0; thresholds.len()],
            mota: vec![None; thresholds.len()],
            id_switches: vec![0; thresholds.len()],
            best_threshold: thresholds[0],
            best_idf1: 0.0,
        })
        .collect();
    for (s, t, idf1, mota, ids) in cells {
        videos[s].idf1[t] = idf1;
        videos[s].mota[t] = mota;
        videos[s].id_switches[t] = ids;
    }
    for v in &mut videos {
        let mut best = 0usize;
        for (i, val) in v.idf1.iter().enumerate() {
            if *val > v.idf1[best] {
                best = i;
            }
        }
        v.best_threshold = thresholds[best];
        v.best_idf1 = v.idf1[best];
    }

    let best_min = videos
        .iter()
        .map(|v| v.best_threshold)
        .fold(f64::INFINITY, f64::min);
    let best_max = videos
        .iter()
        .map(|v| v.best_threshold)
        .fold(f64::NEG_INFINITY, f64::max);
    let mean_idf1: Vec<f64> = (0..thresholds.len())
        .map(|t| videos.iter().map(|v| v.idf1[t]).sum::<f64>() / videos.len() as f64)
        .collect();

    Ok(SweepResult {
        mode,
        thresholds: thresholds.to_vec(),
        videos,
        optimum_spread: best_max - best_min,
        mean_idf1,
    })
}

/// Spawn per-video specs: video `i` uses `sigmas[i]` and `base.seed + i`.
pub fn suite_with_sigmas(base: &ScenarioSpec, sigmas: &[f64]) -> Vec<ScenarioSpec> {
    sigmas
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let mut spec = base.clone();
            spec.sigma_emb = sigma;
            spec.seed = base.seed + i as u64;
            spec
        })
        .collect()
}

/// Seeded random unit embeddings (bench inputs and tests).
pub fn random_embeddings(seed: u64, count: usize, dim: usize) -> Vec<Embedding<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            loop {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                if let Ok(e) = Embedding::new(v) {
                    return e;
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec() -> ScenarioSpec {
        ScenarioSpec {
            objects: 4,
            frames: 40,
            seed: 9,
            ..ScenarioSpec::default()
        }
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let spec = quick_spec();
        let a = generate_sequence(&spec).unwrap();
        let b = generate_sequence(&spec).unwrap();
        assert_eq!(a.ground_truth.rows(), b.ground_truth.rows());
        for (fa, fb) in a.frames.iter().zip(b.frames.iter()) {
            assert_eq!(fa.len(), fb.len());
            for (da, db) in fa.iter().zip(fb.iter()) {
                assert_eq!(da.bbox, db.bbox);
                assert_eq!(da.score, db.score);
                assert_eq!(da.embedding, db.embedding);
            }
        }
    }

    #[test]
    fn zero_noise_reproduces_identity_embeddings() {
        let mut spec = quick_spec();
        spec.sigma_emb = 0.0;
        let seq = generate_sequence(&spec).unwrap();
        // every observation of an object equals one fixed unit vector
        let mut seen: Vec<Option<Embedding<f64>>> = vec![None; spec.objects];
        for (f, frame) in seq.frames.iter().enumerate() {
            let gt: Vec<_> = seq
                .ground_truth
                .rows()
                .iter()
                .filter(|r| r.frame == f as u64 + 1)
                .collect();
            for det in frame {
                let id = gt
                    .iter()
                    .find(|r| r.bbox == det.bbox)
                    .map(|r| r.id as usize - 1)
                    .expect("detection box must match a gt box");
                match &seen[id] {
                    None => seen[id] = Some(det.embedding.clone()),
                    Some(e) => assert_eq!(e, &det.embedding),
                }
            }
        }
    }

    #[test]
    fn occlusion_window_suppresses_detections_but_not_gt() {
        let mut spec = quick_spec();
        spec.occlusions = vec![OcclusionWindow {
            object: 0,
            start: 10,
            end: 19,
        }];
        spec.dropout = 0.0;
        let seq = generate_sequence(&spec).unwrap();
        for frame in 10..=19u64 {
            let dets = &seq.frames[frame as usize - 1];
            assert_eq!(dets.len(), spec.objects - 1, "frame {frame}");
            let gt_count = seq
                .ground_truth
                .rows()
                .iter()
                .filter(|r| r.frame == frame)
                .count();
            assert_eq!(gt_count, spec.objects);
        }
        assert_eq!(seq.frames[0].len(), spec.objects);
    }

    #[test]
    fn gt_is_consistent_and_inside_arena() {
        let mut spec = quick_spec();
        spec.occlude_fraction = 0.5;
        spec.dropout = 0.1;
        spec.jitter_pos = 2.0;
        let seq = generate_sequence(&spec).unwrap();
        assert_eq!(
            seq.ground_truth.len(),
            (spec.objects as u64 * spec.frames) as usize
        );
        for row in seq.ground_truth.rows() {
            assert!(row.bbox.x >= -1e-9);
            assert!(row.bbox.y >= -1e-9);
            assert!(row.bbox.x + row.bbox.w <= spec.arena_width + 1e-9);
            assert!(row.bbox.y + row.bbox.h <= spec.arena_height + 1e-9);
        }
    }

    #[test]
    fn identity_separation_is_enforced() {
        let mut spec = quick_spec();
        spec.embed_dim = 8;
        spec.min_pair_angle_deg = 40.0;
        let seq = generate_sequence(&spec).unwrap();
        drop(seq);

        // an impossible request errors out
        let mut impossible = quick_spec();
        impossible.objects = 20;
        impossible.embed_dim = 2;
        impossible.min_pair_angle_deg = 80.0;
        assert!(matches!(
            generate_sequence(&impossible),
            Err(ScenarioError::SeparationUnsatisfiable { .. })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = quick_spec();
        spec.occlusions = vec![OcclusionWindow {
            object: 99,
            start: 1,
            end: 2,
        }];
        assert!(generate_sequence(&spec).is_err());

        let mut spec = quick_spec();
        spec.score_min = 0.9;
        spec.score_max = 0.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn clean_scenario_tracks_perfectly_in_both_modes() {
        let mut spec = quick_spec();
        spec.sigma_emb = 0.0;
        spec.dropout = 0.0;
        spec.min_pair_angle_deg = 60.0;
        let seq = generate_sequence(&spec).unwrap();
        for mode in [AssociationMode::Marginal, AssociationMode::Distance] {
            let mut cfg = TrackerConfig::<f64>::default();
            cfg.association_mode = mode;
            let table = run_sequence(cfg, &seq.frames).unwrap();
            let report = evaluate(&table, &seq.ground_truth, 0.5);
            assert!(
                report.idf1 > 0.99,
                "mode {mode} reached only IDF1 {}",
                report.idf1
            );
            assert_eq!(report.id_switches, 0);
        }
    }

    #[test]
    fn sweep_requires_two_sequences() {
        let seq = generate_sequence(&quick_spec()).unwrap();
        let err = threshold_sweep(
            std::slice::from_ref(&seq),
            AssociationMode::Marginal,
            &TrackerConfig::default(),
            &[0.5],
        );
        assert!(err.is_err());
    }
}
