//! Command-line front end: track MOT sequences, evaluate results, sweep
//! matching thresholds on synthetic suites, generate synthetic data and
//! benchmark the association stage.

use clap::{Parser, Subcommand};
use marmot_core::affinity::cosine_similarity_matrix;
use marmot_core::io;
use marmot_core::marginal::{collect_structures, marginal_probabilities, ScoreVector};
use marmot_core::metrics::{evaluate, MetricsReport};
use marmot_core::scenario::{
    generate_sequence, random_embeddings, suite_with_sigmas, threshold_sweep, GeneratedSequence,
};
use marmot_core::tracker::{run_sequence, AssociationMode, TrackerConfig};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "marmot",
    about = "Multi-object tracking with marginal-probability data association"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the tracker over a detection file and write a MOT result file.
    Track {
        /// Detection file ("frame,id,x,y,w,h,score[,...]", 1-based frames).
        #[arg(long)]
        dets: PathBuf,
        /// Embedding sidecar aligned with the detection rows.
        #[arg(long)]
        embs: PathBuf,
        /// Tracker config file (key = value); defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output result file.
        #[arg(long)]
        out: PathBuf,
        /// Override the association mode from the config.
        #[arg(long)]
        mode: Option<AssociationMode>,
    },
    /// Evaluate a result file against ground truth.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// IoU threshold for box matching.
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Grid-sweep the stage-1 matching threshold over a synthetic suite.
    Sweep {
        /// Scenario file; `sigma_emb` may list one value per video.
        #[arg(long)]
        scenario: PathBuf,
        /// Comma-separated association modes to sweep.
        #[arg(long, value_delimiter = ',', required = true)]
        modes: Vec<AssociationMode>,
        /// Threshold grid as start:stop:step.
        #[arg(long)]
        grid: String,
        /// Output CSV (mode, threshold, sequence, idf1, mota, id_switches).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic sequence: detections, embeddings, ground truth.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long = "out-dets")]
        out_dets: PathBuf,
        #[arg(long = "out-embs")]
        out_embs: PathBuf,
        #[arg(long = "out-gt")]
        out_gt: PathBuf,
    },
    /// Measure marginal-association latency (similarity -> structure
    /// collection -> marginals) on random embeddings.
    Bench {
        /// Number of detections.
        #[arg(long)]
        m: usize,
        /// Number of tracks.
        #[arg(long)]
        n: usize,
        /// Structures collected per association.
        #[arg(long, default_value_t = 100)]
        steps: usize,
        /// Timed repetitions.
        #[arg(long, default_value_t = 50)]
        repeat: usize,
    },
}

/// Failures split by exit code: validation errors exit 1, I/O errors exit 2.
enum CliError {
    Validation(String),
    Io(String),
}

impl From<io::IoError> for CliError {
    fn from(e: io::IoError) -> Self {
        if e.is_filesystem() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<marmot_core::tracker::TrackerError> for CliError {
    fn from(e: marmot_core::tracker::TrackerError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<marmot_core::scenario::ScenarioError> for CliError {
    fn from(e: marmot_core::scenario::ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Track {
            dets,
            embs,
            config,
            out,
            mode,
        } => {
            let mut cfg = match config {
                Some(path) => io::load_tracker_config(&path)?,
                None => TrackerConfig::default(),
            };
            if let Some(mode) = mode {
                cfg.association_mode = mode;
            }
            eprintln!("config:\n{}", io::format_tracker_config(&cfg));
            let seq = io::load_detections(&dets, &embs)?;
            let table = run_sequence(cfg, &seq.frames)?;
            io::write_results(&table, &out)?;
            eprintln!(
                "tracked {} frames -> {} rows -> {}",
                seq.frames.len(),
                table.len(),
                out.display()
            );
            Ok(())
        }
        Command::Eval { pred, gt, iou } => {
            if !(0.0..=1.0).contains(&iou) {
                return Err(CliError::Validation(format!(
                    "--iou must lie in [0,1], got {iou}"
                )));
            }
            let pred = io::load_track_table(&pred)?;
            let gt = io::load_track_table(&gt)?;
            let report = evaluate(&pred, &gt, iou);
            print_report(&report);
            Ok(())
        }
        Command::Sweep {
            scenario,
            modes,
            grid,
            out,
        } => {
            let file = io::load_scenario(&scenario)?;
            if file.sigmas.len() < 2 {
                return Err(CliError::Validation(
                    "sweeps need at least 2 videos: give sigma_emb a comma-separated list".into(),
                ));
            }
            let thresholds = parse_grid(&grid)?;
            let sequences: Vec<GeneratedSequence> = suite_with_sigmas(&file.base, &file.sigmas)
                .iter()
                .map(generate_sequence)
                .collect::<Result<_, _>>()?;
            let base = TrackerConfig::default();
            let mut results = Vec::new();
            for mode in modes {
                let result = threshold_sweep(&sequences, mode, &base, &thresholds)?;
                let (best_t, best_idf1) = result.best_global();
                eprintln!(
                    "{mode}: per-video optima spread {:.3}, best global threshold {best_t:.2} (mean IDF1 {best_idf1:.4})",
                    result.optimum_spread
                );
                results.push(result);
            }
            io::write_sweep_csv(&results, &out)?;
            eprintln!("wrote {}", out.display());
            Ok(())
        }
        Command::Simulate {
            scenario,
            out_dets,
            out_embs,
            out_gt,
        } => {
            let file = io::load_scenario(&scenario)?;
            if file.sigmas.len() != 1 {
                return Err(CliError::Validation(
                    "simulate expects a single sigma_emb value".into(),
                ));
            }
            let seq = generate_sequence(&file.base)?;

            let mut det_lines = String::new();
            let mut emb_rows: Vec<Vec<f32>> = Vec::new();
            for (i, frame) in seq.frames.iter().enumerate() {
                for det in frame {
                    det_lines.push_str(&format!(
                        "{},-1,{:.2},{:.2},{:.2},{:.2},{:.4}\n",
                        i + 1,
                        det.bbox.x,
                        det.bbox.y,
                        det.bbox.w,
                        det.bbox.h,
                        det.score
                    ));
                    emb_rows.push(det.embedding.as_slice().iter().map(|&v| v as f32).collect());
                }
            }
            std::fs::write(&out_dets, det_lines)
                .map_err(|e| CliError::Io(format!("{}: {e}", out_dets.display())))?;
            io::write_embeddings(&out_embs, seq.embed_dim, &emb_rows)?;
            io::write_results(&seq.ground_truth, &out_gt)?;
            eprintln!(
                "simulated {} frames, {} detections, {} gt rows",
                seq.frames.len(),
                emb_rows.len(),
                seq.ground_truth.len()
            );
            Ok(())
        }
        Command::Bench { m, n, steps, repeat } => {
            if m == 0 || n == 0 || steps == 0 || repeat == 0 {
                return Err(CliError::Validation(
                    "--m, --n, --steps and --repeat must be positive".into(),
                ));
            }
            let dets = random_embeddings(0xA11CE, m, 128);
            let tracks = random_embeddings(0xB0B, n, 128);
            let mut millis = Vec::with_capacity(repeat);
            for _ in 0..repeat {
                let start = Instant::now();
                let sim = cosine_similarity_matrix(&dets, &tracks)
                    .expect("bench embeddings share one dimension");
                let scores = ScoreVector::from_similarity(&sim)
                    .expect("cosine similarities are finite");
                let set = collect_structures(&scores, steps);
                let p = marginal_probabilities(&set, m, n);
                std::hint::black_box(&p);
                millis.push(start.elapsed().as_secs_f64() * 1e3);
            }
            millis.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
            let mean: f64 = millis.iter().sum::<f64>() / millis.len() as f64;
            let median = if millis.len() % 2 == 1 {
                millis[millis.len() / 2]
            } else {
                0.5 * (millis[millis.len() / 2 - 1] + millis[millis.len() / 2])
            };
            println!("association latency, {m}x{n}, {steps} structures, {repeat} runs");
            println!("  mean   {mean:9.3} ms");
            println!("  median {median:9.3} ms");
            println!("  min    {:9.3} ms", millis[0]);
            println!("  max    {:9.3} ms", millis[millis.len() - 1]);
            Ok(())
        }
    }
}

fn parse_grid(grid: &str) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = grid.split(':').collect();
    let fail = || CliError::Validation(format!("bad grid `{grid}`, expected start:stop:step"));
    if parts.len() != 3 {
        return Err(fail());
    }
    let start: f64 = parts[0].parse().map_err(|_| fail())?;
    let stop: f64 = parts[1].parse().map_err(|_| fail())?;
    let step: f64 = parts[2].parse().map_err(|_| fail())?;
    if !(step > 0.0) || stop < start {
        return Err(fail());
    }
    let mut out = Vec::new();
    let mut k = 0;
    loop {
        let value = start + step * k as f64;
        if value > stop + 1e-9 {
            break;
        }
        out.push((value * 1e9).round() / 1e9);
        k += 1;
    }
    Ok(out)
}

fn print_report(report: &MetricsReport<f64>) {
    let mota = report
        .mota
        .map(|m| format!("{m:.4}"))
        .unwrap_or_else(|| "n/a (empty ground truth)".into());
    println!("metric           value");
    println!("---------------  ----------");
    println!("MOTA             {mota}");
    println!("IDF1             {:.4}", report.idf1);
    println!("FP               {}", report.false_positives);
    println!("FN               {}", report.false_negatives);
    println!("IDs              {}", report.id_switches);
    println!("MT               {}", report.mostly_tracked);
    println!("ML               {}", report.mostly_lost);
    println!("IDTP             {}", report.idtp);
    println!("IDFP             {}", report.idfp);
    println!("IDFN             {}", report.idfn);
    println!("GT boxes         {}", report.gt_boxes);
    println!("pred boxes       {}", report.pred_boxes);
    println!();
    let mota_csv = report
        .mota
        .map(|m| format!("{m:.6}"))
        .unwrap_or_else(|| "nan".into());
    println!("mota,idf1,fp,fn,id_switches,mt,ml,idtp,idfp,idfn");
    println!(
        "{mota_csv},{:.6},{},{},{},{},{},{},{},{}",
        report.idf1,
        report.false_positives,
        report.false_negatives,
        report.id_switches,
        report.mostly_tracked,
        report.mostly_lost,
        report.idtp,
        report.idfp,
        report.idfn
    );
}
