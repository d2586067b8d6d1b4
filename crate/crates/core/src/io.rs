//! File formats: MOT detection/result text files, the binary embedding
//! sidecar, tracker config files and scenario spec files.
//!
//! Frames are 1-based in every external file (MOT convention) and 0-based in
//! the in-memory frame vectors; the conversion happens here and only here.

use crate::affinity::{BoundingBox, Embedding};
use crate::metrics::{TrackRow, TrackTable};
use crate::scenario::{OcclusionWindow, ScenarioSpec, SweepResult};
use crate::tracker::{AssociationMode, Detection, TrackerConfig};
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

/// Magic bytes of the embedding sidecar format.
pub const EMBEDDING_MAGIC: [u8; 4] = *b"MAEB";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {msg}")]
    EmbeddingFormat { path: String, msg: String },
    #[error("{dets} detection rows but {embs} embedding rows")]
    CountMismatch { dets: usize, embs: usize },
    #[error("{path}:{line}: unknown key `{key}`")]
    UnknownKey {
        path: String,
        line: usize,
        key: String,
    },
    #[error("{msg}")]
    Invalid { msg: String },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    fn parse(path: &Path, line: usize, msg: impl Into<String>) -> Self {
        IoError::Parse {
            path: path.display().to_string(),
            line,
            msg: msg.into(),
        }
    }

    /// True for filesystem-level failures (as opposed to content validation).
    pub fn is_filesystem(&self) -> bool {
        matches!(self, IoError::Io { .. })
    }
}

/// Detections for contiguous frames `1..=len`, with embeddings attached.
pub struct DetectionSequences {
    pub frames: Vec<Vec<Detection<f64>>>,
    pub embed_dim: usize,
}

/// Load a MOT detection file plus its embedding sidecar. Embedding row `k`
/// belongs to detection row `k` in file order.
pub fn load_detections(dets_path: &Path, embs_path: &Path) -> Result<DetectionSequences, IoError> {
    let text = std::fs::read_to_string(dets_path).map_err(|e| IoError::io(dets_path, e))?;
    let (embeddings, dim) = load_embeddings(embs_path)?;

    let mut rows: Vec<(u64, BoundingBox<f64>, f64)> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 7 {
            return Err(IoError::parse(
                dets_path,
                lineno + 1,
                format!("expected at least 7 comma-separated fields, got {}", fields.len()),
            ));
        }
        let frame: u64 = parse_field(dets_path, lineno + 1, fields[0], "frame")?;
        if frame == 0 {
            return Err(IoError::parse(dets_path, lineno + 1, "frames are 1-based"));
        }
        let x: f64 = parse_field(dets_path, lineno + 1, fields[2], "x")?;
        let y: f64 = parse_field(dets_path, lineno + 1, fields[3], "y")?;
        let w: f64 = parse_field(dets_path, lineno + 1, fields[4], "w")?;
        let h: f64 = parse_field(dets_path, lineno + 1, fields[5], "h")?;
        let score: f64 = parse_field(dets_path, lineno + 1, fields[6], "score")?;
        let bbox = BoundingBox::new(x, y, w, h);
        if !bbox.is_valid() {
            return Err(IoError::parse(dets_path, lineno + 1, "degenerate bounding box"));
        }
        rows.push((frame, bbox, score));
    }

    if rows.len() != embeddings.len() {
        return Err(IoError::CountMismatch {
            dets: rows.len(),
            embs: embeddings.len(),
        });
    }

    let last_frame = rows.iter().map(|r| r.0).max().unwrap_or(0);
    let mut frames: Vec<Vec<Detection<f64>>> = vec![Vec::new(); last_frame as usize];
    for ((frame, bbox, score), emb) in rows.into_iter().zip(embeddings) {
        let values: Vec<f64> = emb.into_iter().map(f64::from).collect();
        let embedding = Embedding::new(values).map_err(|e| IoError::Invalid {
            msg: format!("embedding row for frame {frame}: {e}"),
        })?;
        frames[frame as usize - 1].push(Detection {
            bbox,
            score,
            embedding,
        });
    }
    Ok(DetectionSequences {
        frames,
        embed_dim: dim,
    })
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    raw: &str,
    name: &str,
) -> Result<T, IoError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| IoError::parse(path, line, format!("bad {name} value `{raw}`")))
}

/// Binary layout: magic "MAEB", version u32, row count u64, dim u32 (all
/// little-endian), then row-major f32 values. Vectors are renormalized on
/// load (by `Embedding::new` downstream).
pub fn load_embeddings(path: &Path) -> Result<(Vec<Vec<f32>>, usize), IoError> {
    let mut file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| IoError::io(path, e))?;

    let fail = |msg: &str| IoError::EmbeddingFormat {
        path: path.display().to_string(),
        msg: msg.to_string(),
    };
    if bytes.len() < 20 {
        return Err(fail("file shorter than the 20-byte header"));
    }
    if bytes[0..4] != EMBEDDING_MAGIC {
        return Err(fail("bad magic (expected MAEB)"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != EMBEDDING_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(fail("dimension must be positive"));
    }
    let expected = 20 + rows * dim * 4;
    if bytes.len() != expected {
        return Err(fail(&format!(
            "payload size drift: expected {expected} bytes for {rows} rows x dim {dim}, found {}",
            bytes.len()
        )));
    }

    let mut out = Vec::with_capacity(rows);
    let mut offset = 20;
    for _ in 0..rows {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap()));
            offset += 4;
        }
        out.push(row);
    }
    Ok((out, dim))
}

pub fn write_embeddings(path: &Path, dim: usize, rows: &[Vec<f32>]) -> Result<(), IoError> {
    for row in rows {
        if row.len() != dim {
            return Err(IoError::Invalid {
                msg: format!("embedding row has dim {}, expected {dim}", row.len()),
            });
        }
    }
    let mut bytes = Vec::with_capacity(20 + rows.len() * dim * 4);
    bytes.extend_from_slice(&EMBEDDING_MAGIC);
    bytes.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(rows.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&(dim as u32).to_le_bytes());
    for row in rows {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

/// Parse a track table ("frame,id,x,y,w,h[,score,...]", ids nonnegative).
pub fn load_track_table(path: &Path) -> Result<TrackTable<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 6 {
            return Err(IoError::parse(
                path,
                lineno + 1,
                format!("expected at least 6 comma-separated fields, got {}", fields.len()),
            ));
        }
        let frame: u64 = parse_field(path, lineno + 1, fields[0], "frame")?;
        let id: i64 = parse_field(path, lineno + 1, fields[1], "id")?;
        if frame == 0 {
            return Err(IoError::parse(path, lineno + 1, "frames are 1-based"));
        }
        if id < 0 {
            return Err(IoError::parse(path, lineno + 1, "track ids must be nonnegative"));
        }
        let x: f64 = parse_field(path, lineno + 1, fields[2], "x")?;
        let y: f64 = parse_field(path, lineno + 1, fields[3], "y")?;
        let w: f64 = parse_field(path, lineno + 1, fields[4], "w")?;
        let h: f64 = parse_field(path, lineno + 1, fields[5], "h")?;
        let score: f64 = if fields.len() > 6 {
            parse_field(path, lineno + 1, fields[6], "score")?
        } else {
            1.0
        };
        let bbox = BoundingBox::new(x, y, w, h);
        if !bbox.is_valid() {
            return Err(IoError::parse(path, lineno + 1, "degenerate bounding box"));
        }
        rows.push(TrackRow {
            frame,
            id: id as u64,
            bbox,
            score,
        });
    }
    TrackTable::from_rows(rows).map_err(|e| IoError::Invalid { msg: e.to_string() })
}

/// Emit "frame,id,x,y,w,h,score,-1,-1,-1" rows sorted by (frame, id),
/// geometry at 1 decimal place and score at 2.
pub fn write_results(table: &TrackTable<f64>, path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for row in table.rows() {
        writeln!(
            out,
            "{},{},{:.1},{:.1},{:.1},{:.1},{:.2},-1,-1,-1",
            row.frame, row.id, row.bbox.x, row.bbox.y, row.bbox.w, row.bbox.h, row.score
        )
        .map_err(|e| IoError::io(path, e))?;
    }
    out.flush().map_err(|e| IoError::io(path, e))
}

/// Sweep results as CSV: mode, threshold, sequence, idf1, mota, id_switches.
pub fn write_sweep_csv(results: &[SweepResult], path: &Path) -> Result<(), IoError> {
    let file = std::fs::File::create(path).map_err(|e| IoError::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "mode,threshold,sequence,idf1,mota,id_switches")
        .map_err(|e| IoError::io(path, e))?;
    for result in results {
        for video in &result.videos {
            for (t, &threshold) in result.thresholds.iter().enumerate() {
                let mota = video.mota[t]
                    .map(|m| format!("{m:.6}"))
                    .unwrap_or_else(|| "nan".to_string());
                writeln!(
                    out,
                    "{},{:.6},{},{:.6},{},{}",
                    result.mode,
                    threshold,
                    video.sequence,
                    video.idf1[t],
                    mota,
                    video.id_switches[t]
                )
                .map_err(|e| IoError::io(path, e))?;
            }
        }
    }
    out.flush().map_err(|e| IoError::io(path, e))
}

// ---------------------------------------------------------------------------
// Flat key = value files (tracker config and scenario specs).
// ---------------------------------------------------------------------------

fn key_value_lines(text: &str) -> impl Iterator<Item = (usize, &str, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let (key, value) = line.split_once('=')?;
        Some((i + 1, key.trim(), value.trim()))
    })
}

fn bad_value(path: &Path, line: usize, key: &str, value: &str) -> IoError {
    IoError::parse(path, line, format!("bad value `{value}` for key `{key}`"))
}

/// Parse a tracker config file; keys mirror the `TrackerConfig` field names
/// and unknown keys are hard errors. Missing keys keep their defaults.
pub fn parse_tracker_config(text: &str, path: &Path) -> Result<TrackerConfig<f64>, IoError> {
    let mut cfg = TrackerConfig::<f64>::default();
    for (line, key, value) in key_value_lines(text) {
        let float = || -> Result<f64, IoError> {
            value.parse().map_err(|_| bad_value(path, line, key, value))
        };
        match key {
            "conf_detect" => cfg.conf_detect = float()?,
            "conf_new_track" => cfg.conf_new_track = float()?,
            "prob_match_threshold" => cfg.prob_match_threshold = float()?,
            "iou_match_threshold" => cfg.iou_match_threshold = float()?,
            "fusion_weight" => cfg.fusion_weight = float()?,
            "ema_momentum" => cfg.ema_momentum = float()?,
            "distance_scale" => cfg.distance_scale = float()?,
            "cg_steps" => {
                cfg.cg_steps = value.parse().map_err(|_| bad_value(path, line, key, value))?
            }
            "lost_ttl" => {
                cfg.lost_ttl = value.parse().map_err(|_| bad_value(path, line, key, value))?
            }
            "association_mode" => {
                cfg.association_mode = value
                    .parse::<AssociationMode>()
                    .map_err(|e| IoError::parse(path, line, e))?
            }
            "tentative_suppression" => {
                cfg.tentative_suppression =
                    parse_bool(value).ok_or_else(|| bad_value(path, line, key, value))?
            }
            other => {
                return Err(IoError::UnknownKey {
                    path: path.display().to_string(),
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    cfg.validate().map_err(|e| IoError::Invalid { msg: e.to_string() })?;
    Ok(cfg)
}

pub fn load_tracker_config(path: &Path) -> Result<TrackerConfig<f64>, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_tracker_config(&text, path)
}

/// Render a config in the same key = value format the parser accepts.
pub fn format_tracker_config(cfg: &TrackerConfig<f64>) -> String {
    format!(
        "conf_detect = {}\nconf_new_track = {}\nprob_match_threshold = {}\n\
         iou_match_threshold = {}\nfusion_weight = {}\ncg_steps = {}\nlost_ttl = {}\n\
         ema_momentum = {}\ndistance_scale = {}\nassociation_mode = {}\n\
         tentative_suppression = {}\n",
        cfg.conf_detect,
        cfg.conf_new_track,
        cfg.prob_match_threshold,
        cfg.iou_match_threshold,
        cfg.fusion_weight,
        cfg.cg_steps,
        cfg.lost_ttl,
        cfg.ema_momentum,
        cfg.distance_scale,
        cfg.association_mode,
        cfg.tentative_suppression,
    )
}

fn parse_bool(value: &str) -> Option<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

/// A scenario file: one base spec, possibly with several per-video
/// `sigma_emb` values (a comma list) for multi-video sweeps.
pub struct ScenarioFile {
    pub base: ScenarioSpec,
    pub sigmas: Vec<f64>,
}

/// Parse a scenario spec file. `sigma_emb` accepts a comma-separated list;
/// `occlusions` uses `object:start:end` triples separated by commas.
pub fn parse_scenario(text: &str, path: &Path) -> Result<ScenarioFile, IoError> {
    let mut spec = ScenarioSpec::default();
    let mut sigmas: Vec<f64> = vec![spec.sigma_emb];
    for (line, key, value) in key_value_lines(text) {
        let float = |value: &str| -> Result<f64, IoError> {
            value.parse().map_err(|_| bad_value(path, line, key, value))
        };
        let int = |value: &str| -> Result<u64, IoError> {
            value.parse().map_err(|_| bad_value(path, line, key, value))
        };
        match key {
            "objects" => spec.objects = int(value)? as usize,
            "frames" => spec.frames = int(value)?,
            "arena_width" => spec.arena_width = float(value)?,
            "arena_height" => spec.arena_height = float(value)?,
            "speed_max" => spec.speed_max = float(value)?,
            "jitter_pos" => spec.jitter_pos = float(value)?,
            "box_width" => spec.box_width = float(value)?,
            "box_height" => spec.box_height = float(value)?,
            "embed_dim" => spec.embed_dim = int(value)? as usize,
            "min_pair_angle_deg" => spec.min_pair_angle_deg = float(value)?,
            "sigma_emb" => {
                sigmas = value
                    .split(',')
                    .map(|v| float(v.trim()))
                    .collect::<Result<_, _>>()?;
                if sigmas.is_empty() {
                    return Err(bad_value(path, line, key, value));
                }
                spec.sigma_emb = sigmas[0];
            }
            "drift_per_frame" => spec.drift_per_frame = float(value)?,
            "dropout" => spec.dropout = float(value)?,
            "occlusions" => {
                spec.occlusions = value
                    .split(',')
                    .filter(|chunk| !chunk.trim().is_empty())
                    .map(|chunk| {
                        let parts: Vec<&str> = chunk.trim().split(':').collect();
                        if parts.len() != 3 {
                            return Err(IoError::parse(
                                path,
                                line,
                                format!("occlusion `{chunk}` is not object:start:end"),
                            ));
                        }
                        Ok(OcclusionWindow {
                            object: parts[0]
                                .parse()
                                .map_err(|_| bad_value(path, line, key, chunk))?,
                            start: parts[1]
                                .parse()
                                .map_err(|_| bad_value(path, line, key, chunk))?,
                            end: parts[2]
                                .parse()
                                .map_err(|_| bad_value(path, line, key, chunk))?,
                        })
                    })
                    .collect::<Result<_, _>>()?;
            }
            "occlude_fraction" => spec.occlude_fraction = float(value)?,
            "occlusion_min_len" => spec.occlusion_min_len = int(value)?,
            "occlusion_max_len" => spec.occlusion_max_len = int(value)?,
            "occlusion_turn_deg" => spec.occlusion_turn_deg = float(value)?,
            "score_min" => spec.score_min = float(value)?,
            "score_max" => spec.score_max = float(value)?,
            "seed" => spec.seed = int(value)?,
            other => {
                return Err(IoError::UnknownKey {
                    path: path.display().to_string(),
                    line,
                    key: other.to_string(),
                })
            }
        }
    }
    spec.validate().map_err(|e| IoError::Invalid { msg: e.to_string() })?;
    Ok(ScenarioFile { base: spec, sigmas })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_scenario(&text, path)
}
