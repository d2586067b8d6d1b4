//! Dump per-video IDF1 / ID-switch curves for both association modes on one
//! suite configuration, to inspect where each mode gains and loses.

use marmot_core::scenario::{
    generate_sequence, suite_with_sigmas, threshold_sweep, GeneratedSequence, ScenarioSpec,
};
use marmot_core::tracker::{AssociationMode, TrackerConfig};

const SIGMAS: [f64; 5] = [0.05, 0.1, 0.2, 0.3, 0.4];

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dim: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(64);
    let turn: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(45.0);
    let dropout: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.02);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(2002);
    let angle: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(25.0);
    let drift: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.0);

    let base = ScenarioSpec {
        objects: 20,
        frames: 300,
        arena_width: 640.0,
        arena_height: 420.0,
        speed_max: 2.0,
        jitter_pos: 1.0,
        box_width: 30.0,
        box_height: 60.0,
        embed_dim: dim,
        min_pair_angle_deg: angle,
        sigma_emb: SIGMAS[0],
        drift_per_frame: drift,
        dropout,
        occlusions: Vec::new(),
        occlude_fraction: 0.3,
        occlusion_min_len: 5,
        occlusion_max_len: 20,
        occlusion_turn_deg: turn,
        score_min: 0.6,
        score_max: 0.95,
        seed,
    };
    let grid: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    let sequences: Vec<GeneratedSequence> = suite_with_sigmas(&base, &SIGMAS)
        .iter()
        .map(|s| generate_sequence(s).unwrap())
        .collect();
    let cfg = TrackerConfig::default();

    for mode in [AssociationMode::Marginal, AssociationMode::Distance] {
        let sweep = threshold_sweep(&sequences, mode, &cfg, &grid).unwrap();
        println!("--- {mode} (dim {dim}, turn {turn}, dropout {dropout}, seed {seed}, angle {angle}, drift {drift}) ---");
        print!("{:>8}", "T");
        for t in &grid {
            print!("{t:>8.1}");
        }
        println!();
        for video in &sweep.videos {
            print!("v{} idf1 ", video.sequence);
            for v in &video.idf1 {
                print!("{v:>8.4}");
            }
            println!("  best @{:.1}", video.best_threshold);
            print!("v{} ids  ", video.sequence);
            for v in &video.id_switches {
                print!("{v:>8}");
            }
            println!();
        }
        print!("mean    ");
        for v in &sweep.mean_idf1 {
            print!("{v:>8.4}");
        }
        println!();
    }
}
