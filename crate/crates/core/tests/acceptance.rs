//! Acceptance suite. Each test prints one pass/fail line (visible with
//! `--nocapture`) and asserts the criterion at its stated tolerance.
//!
//! Run: `cargo test -p marmot-core --test acceptance -- --nocapture`

use marmot_core::affinity::cosine_similarity_matrix;
use marmot_core::lap::{brute_force_assignment, solve_min_assignment};
use marmot_core::marginal::{
    collect_structures, exact_marginals, marginal_probabilities, ScoreVector,
};
use marmot_core::mat::Mat;
use marmot_core::metrics::{evaluate, TrackRow, TrackTable};
use marmot_core::motion::MotionModel;
use marmot_core::scenario::{
    generate_sequence, random_embeddings, suite_with_sigmas, threshold_sweep, GeneratedSequence,
    OcclusionWindow, ScenarioSpec,
};
use marmot_core::tracker::{run_sequence, AssociationMode, TrackerConfig};
use marmot_core::{affinity::BoundingBox, Mat64};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} — {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion} failed: {detail}");
}

#[test]
fn criterion_1_marginal_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut max_err = 0.0f64;
    for _ in 0..500 {
        let m = rng.gen_range(1..=3);
        let n = rng.gen_range(1..=3);
        let sim = Mat64::from_fn(m, n, |_, _| rng.gen::<f64>());
        let scores = ScoreVector::from_similarity(&sim).unwrap();

        let set = collect_structures(&scores, 200);
        let small = m.min(n);
        let large = m.max(n);
        let space: usize = (0..small).map(|k| large - k).product();
        assert_eq!(
            set.len(),
            space,
            "collection must saturate the {m}x{n} structure space"
        );

        let collected = marginal_probabilities(&set, m, n);
        let exact = exact_marginals(&scores).unwrap();
        for i in 0..m {
            for j in 0..n {
                max_err = max_err.max((collected[(i, j)] - exact[(i, j)]).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "1 (oracle equivalence, marginals)",
        max_err < 1e-9 && elapsed < 10.0,
        &format!("500 saturated instances, max entrywise error {max_err:.3e}, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_2_assignment_oracle_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut exact_matches = 0usize;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=7);
        let n = rng.gen_range(1..=7);
        let costs = Mat64::from_fn(m, n, |_, _| rng.gen::<f64>());
        let fast = solve_min_assignment(&costs);
        let slow = brute_force_assignment(&costs).unwrap();
        if fast.total_cost == slow.total_cost {
            exact_matches += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        "2 (oracle equivalence, assignment)",
        exact_matches == 1000 && elapsed < 30.0,
        &format!("{exact_matches}/1000 exact total-cost matches, {elapsed:.2} s"),
    );
}

#[test]
fn criterion_3_hand_computed_marginal() {
    let sim = Mat64::from_rows(&[vec![0.9, 0.1], vec![0.1, 0.9]]);
    let scores = ScoreVector::from_similarity(&sim).unwrap();
    let set = collect_structures(&scores, 100);
    let p = marginal_probabilities(&set, 2, 2);
    let expected = 1.0 / (1.0 + (-1.6f64).exp());
    let err = (p[(0, 0)] - expected)
        .abs()
        .max((p[(1, 1)] - expected).abs());
    report(
        "3 (hand-computed 2x2 marginal)",
        err < 1e-9,
        &format!("diagonal {:.12} vs {expected:.12}, error {err:.3e}", p[(0, 0)]),
    );
}

#[test]
fn criterion_5_occlusion_recovery() {
    let start = Instant::now();
    let spec = ScenarioSpec {
        objects: 2,
        frames: 60,
        embed_dim: 16,
        min_pair_angle_deg: 45.0,
        sigma_emb: 0.05,
        dropout: 0.0,
        occlusions: vec![OcclusionWindow {
            object: 0,
            start: 20,
            end: 33, // 14 frames out of view
        }],
        occlude_fraction: 0.0,
        seed: 5,
        ..ScenarioSpec::default()
    };
    let seq = generate_sequence(&spec).unwrap();
    let table = run_sequence(TrackerConfig::default(), &seq.frames).unwrap();
    let report_metrics = evaluate(&table, &seq.ground_truth, 0.5);

    // the occluded object must come back under the id it had before
    let id_before = id_matching_gt(&table, &seq.ground_truth, 1, 19);
    let id_after = id_matching_gt(&table, &seq.ground_truth, 1, 40);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = report_metrics.id_switches == 0
        && id_before.is_some()
        && id_before == id_after
        && elapsed < 1.0;
    report(
        "5 (occlusion recovery)",
        pass,
        &format!(
            "14-frame occlusion: {} switches, id {:?} -> {:?}, {elapsed:.3} s",
            report_metrics.id_switches, id_before, id_after
        ),
    );
}

/// Predicted id overlapping ground-truth object `gt_id` at `frame`.
fn id_matching_gt(
    table: &TrackTable<f64>,
    gt: &TrackTable<f64>,
    gt_id: u64,
    frame: u64,
) -> Option<u64> {
    let gt_box = gt
        .rows()
        .iter()
        .find(|r| r.frame == frame && r.id == gt_id)?
        .bbox;
    table
        .rows()
        .iter()
        .filter(|r| r.frame == frame)
        .find(|r| marmot_core::affinity::iou(&r.bbox, &gt_box) >= 0.5)
        .map(|r| r.id)
}

#[test]
fn criterion_6_association_timing() {
    let dets = random_embeddings(0xA11CE, 60, 128);
    let tracks = random_embeddings(0xB0B, 60, 128);
    let mut millis = Vec::new();
    for _ in 0..30 {
        let start = Instant::now();
        let sim = cosine_similarity_matrix(&dets, &tracks).unwrap();
        let scores = ScoreVector::from_similarity(&sim).unwrap();
        let set = collect_structures(&scores, 100);
        let p = marginal_probabilities(&set, 60, 60);
        std::hint::black_box(&p);
        millis.push(start.elapsed().as_secs_f64() * 1e3);
    }
    millis.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = millis[millis.len() / 2];
    report(
        "6 (association timing, 60x60, n=100)",
        median < 100.0,
        &format!("median {median:.2} ms over 30 runs (min {:.2}, max {:.2})", millis[0], millis[millis.len() - 1]),
    );
}

#[test]
fn criterion_7_invariant_suites() {
    // marginal row sums and weight normalization over 1000 random instances
    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    let mut max_row_err = 0.0f64;
    let mut max_weight_err = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(1..=5);
        let n = rng.gen_range(m..=6);
        let sim = Mat64::from_fn(m, n, |_, _| rng.gen::<f64>());
        let scores = ScoreVector::from_similarity(&sim).unwrap();
        let set = collect_structures(&scores, 100);
        max_weight_err = max_weight_err.max((set.weights().iter().sum::<f64>() - 1.0).abs());
        let p = marginal_probabilities(&set, m, n);
        for i in 0..m {
            let row_sum: f64 = (0..n).map(|j| p[(i, j)]).sum();
            max_row_err = max_row_err.max((row_sum - 1.0).abs());
        }
    }

    // Kalman covariance symmetry over 10,000 random steps
    let model = MotionModel::<f64>::default();
    let mut state = model
        .initiate(&BoundingBox::new(0.0, 0.0, 10.0, 20.0))
        .unwrap();
    let mut max_asym = 0.0f64;
    for _ in 0..10_000 {
        state = model.predict(&state);
        if rng.gen::<f64>() < 0.7 {
            let bbox = BoundingBox::new(
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(5.0..30.0),
                rng.gen_range(5.0..30.0),
            );
            state = model.update(&state, &bbox).unwrap();
        }
        for i in 0..8 {
            for j in 0..8 {
                max_asym = max_asym.max((state.covariance[i][j] - state.covariance[j][i]).abs());
            }
        }
    }

    // metrics invariance under id relabeling on 100 random tables
    let mut relabel_ok = true;
    for _ in 0..100 {
        let mut pred_rows = Vec::new();
        let mut gt_rows = Vec::new();
        for f in 1..=15u64 {
            for id in 0..6u64 {
                let x = id as f64 * 25.0 + rng.gen_range(-2.0..2.0);
                gt_rows.push(TrackRow {
                    frame: f,
                    id: id + 1,
                    bbox: BoundingBox::new(x, 0.0, 12.0, 12.0),
                    score: 1.0,
                });
                if rng.gen::<f64>() < 0.85 {
                    let pid = if rng.gen::<f64>() < 0.1 { id + 30 } else { id + 10 };
                    pred_rows.push(TrackRow {
                        frame: f,
                        id: pid,
                        bbox: BoundingBox::new(x + rng.gen_range(-1.0..1.0), 0.0, 12.0, 12.0),
                        score: 1.0,
                    });
                }
            }
        }
        let gt = TrackTable::from_rows(gt_rows).unwrap();
        let pred = TrackTable::from_rows(pred_rows.clone()).unwrap();
        let relabeled = TrackTable::from_rows(
            pred_rows
                .into_iter()
                .map(|mut r| {
                    r.id = r.id * 13 + 7;
                    r
                })
                .collect(),
        )
        .unwrap();
        if evaluate(&pred, &gt, 0.5) != evaluate(&relabeled, &gt, 0.5) {
            relabel_ok = false;
        }
    }

    let pass =
        max_row_err < 1e-9 && max_weight_err < 1e-12 && max_asym < 1e-9 && relabel_ok;
    report(
        "7 (invariant suites)",
        pass,
        &format!(
            "row-sum err {max_row_err:.3e}, weight err {max_weight_err:.3e}, \
             covariance asymmetry {max_asym:.3e}, relabeling invariant: {relabel_ok}"
        ),
    );
}

// ---------------------------------------------------------------------------
// Criteria 4 and 8 share the synthetic comparison suite.
// ---------------------------------------------------------------------------

const SUITE_SIGMAS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.4];
const SUITE_SEEDS: [u64; 3] = [1001, 2002, 3003];
const GRID: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

fn suite_base(seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        objects: 20,
        frames: 300,
        arena_width: 1600.0,
        arena_height: 900.0,
        speed_max: 4.0,
        jitter_pos: 0.5,
        box_width: 40.0,
        box_height: 80.0,
        embed_dim: 8,
        min_pair_angle_deg: 35.0,
        sigma_emb: SUITE_SIGMAS[0],
        dropout: 0.03,
        occlusions: Vec::new(),
        occlude_fraction: 0.3,
        occlusion_min_len: 5,
        occlusion_max_len: 20,
        occlusion_turn_deg: 60.0,
        score_min: 0.6,
        score_max: 0.95,
        seed,
    }
}

struct SeedSweep {
    marginal: marmot_core::scenario::SweepResult,
    distance: marmot_core::scenario::SweepResult,
}

fn sweep_for_seed(seed: u64) -> SeedSweep {
    let sequences: Vec<GeneratedSequence> = suite_with_sigmas(&suite_base(seed), &SUITE_SIGMAS)
        .iter()
        .map(|s| generate_sequence(s).expect("suite specs are valid"))
        .collect();
    let cfg = TrackerConfig::default();
    SeedSweep {
        marginal: threshold_sweep(&sequences, AssociationMode::Marginal, &cfg, &GRID).unwrap(),
        distance: threshold_sweep(&sequences, AssociationMode::Distance, &cfg, &GRID).unwrap(),
    }
}

fn shared_sweeps() -> &'static Vec<SeedSweep> {
    static SWEEPS: std::sync::OnceLock<Vec<SeedSweep>> = std::sync::OnceLock::new();
    SWEEPS.get_or_init(|| SUITE_SEEDS.iter().map(|&s| sweep_for_seed(s)).collect())
}

#[test]
fn criterion_4_suite_comparison() {
    let sweeps = shared_sweeps();

    // (a) marginal at the single global threshold 0.8 vs distance at its
    // best single global threshold, on the primary suite
    let marg_at_08 = sweeps[0].marginal.mean_idf1_at(0.8).unwrap();
    let (dist_best_t, dist_best) = sweeps[0].distance.best_global();
    let pass_a = marg_at_08 >= dist_best;

    // (b) per-video optimum spread strictly smaller for marginal mode,
    // on all three seed sets
    let mut detail_b = String::new();
    let mut pass_b = true;
    for (k, sweep) in sweeps.iter().enumerate() {
        let sm = sweep.marginal.optimum_spread;
        let sd = sweep.distance.optimum_spread;
        pass_b &= sm < sd;
        detail_b.push_str(&format!("seed{}: {sm:.2}<{sd:.2} ", k + 1));
    }

    report(
        "4 (synthetic suite comparison)",
        pass_a && pass_b,
        &format!(
            "(a) marginal@0.8 {marg_at_08:.4} >= distance@{dist_best_t:.1} {dist_best:.4}; (b) spreads {detail_b}"
        ),
    );
}

#[test]
fn criterion_8_threshold_sensitivity() {
    let sweeps = shared_sweeps();
    let marg = &sweeps[0].marginal;
    let dist = &sweeps[0].distance;

    let window: Vec<f64> = marg
        .thresholds
        .iter()
        .zip(&marg.mean_idf1)
        .filter(|(t, _)| **t >= 0.7 - 1e-9)
        .map(|(_, v)| *v)
        .collect();
    let marg_var = window.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - window.iter().cloned().fold(f64::INFINITY, f64::min);
    let dist_var = dist.mean_idf1.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - dist.mean_idf1.iter().cloned().fold(f64::INFINITY, f64::min);

    report(
        "8 (threshold sensitivity)",
        marg_var < 0.05 && dist_var > marg_var,
        &format!(
            "marginal IDF1 range {marg_var:.4} over [0.7,1.0]; distance range {dist_var:.4} over [0.1,1.0]"
        ),
    );
}
