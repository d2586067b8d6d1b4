//! Appearance and spatial affinities: cosine similarity, IoU distance and
//! exponential-moving-average embedding maintenance.

use crate::mat::Mat;
use crate::num::Real;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum AffinityError {
    #[error("embedding must be a nonzero finite vector")]
    DegenerateEmbedding,
    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Axis-aligned box: top-left corner plus width and height, in pixels.
/// Valid boxes have `w > 0` and `h > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox<T> {
    pub x: T,
    pub y: T,
    pub w: T,
    pub h: T,
}

impl<T: Real> BoundingBox<T> {
    pub fn new(x: T, y: T, w: T, h: T) -> Self {
        Self { x, y, w, h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > T::zero()
            && self.h > T::zero()
            && self.x.is_finite()
            && self.y.is_finite()
            && self.w.is_finite()
            && self.h.is_finite()
    }

    pub fn center(&self) -> (T, T) {
        let two = T::one() + T::one();
        (self.x + self.w / two, self.y + self.h / two)
    }

    /// (center x, center y, aspect = w/h, height) — the Kalman observation.
    pub fn to_cxcyah(&self) -> [T; 4] {
        let (cx, cy) = self.center();
        [cx, cy, self.w / self.h, self.h]
    }

    pub fn from_cxcyah(obs: &[T; 4]) -> Self {
        let two = T::one() + T::one();
        let h = obs[3];
        let w = obs[2] * h;
        Self {
            x: obs[0] - w / two,
            y: obs[1] - h / two,
            w,
            h,
        }
    }

    pub fn area(&self) -> T {
        self.w * self.h
    }
}

/// Re-ID appearance feature, kept at unit L2 norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T>(Vec<T>);

impl<T: Real> Embedding<T> {
    /// Normalize `values` to unit length; rejects zero or non-finite input.
    pub fn new(values: Vec<T>) -> Result<Self, AffinityError> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(AffinityError::DegenerateEmbedding);
        }
        let norm = values.iter().map(|&v| v * v).sum::<T>().sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(AffinityError::DegenerateEmbedding);
        }
        Ok(Self(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn dot(&self, other: &Self) -> Result<T, AffinityError> {
        if self.dim() != other.dim() {
            return Err(AffinityError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(&a, &b)| a * b)
            .sum())
    }
}

/// Cosine similarity between every detection embedding and every track
/// embedding, clamped to [0,1]. Rows are detections, columns are tracks.
pub fn cosine_similarity_matrix<T: Real>(
    detections: &[Embedding<T>],
    tracks: &[Embedding<T>],
) -> Result<Mat<T>, AffinityError> {
    if let (Some(d), Some(t)) = (detections.first(), tracks.first()) {
        if d.dim() != t.dim() {
            return Err(AffinityError::DimensionMismatch {
                left: d.dim(),
                right: t.dim(),
            });
        }
    }
    let mut s = Mat::zeros(detections.len(), tracks.len());
    for (i, d) in detections.iter().enumerate() {
        for (j, t) in tracks.iter().enumerate() {
            s[(i, j)] = d.dot(t)?.max(T::zero()).min(T::one());
        }
    }
    Ok(s)
}

/// Intersection over union of two boxes, in [0,1].
pub fn iou<T: Real>(a: &BoundingBox<T>, b: &BoundingBox<T>) -> T {
    let x1 = a.x.max(b.x);
    let y1 = a.y.max(b.y);
    let x2 = (a.x + a.w).min(b.x + b.w);
    let y2 = (a.y + a.h).min(b.y + b.h);
    let iw = (x2 - x1).max(T::zero());
    let ih = (y2 - y1).max(T::zero());
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// `1 - IoU` for every detection/track box pair.
pub fn iou_distance_matrix<T: Real>(
    detections: &[BoundingBox<T>],
    tracks: &[BoundingBox<T>],
) -> Mat<T> {
    Mat::from_fn(detections.len(), tracks.len(), |i, j| {
        T::one() - iou(&detections[i], &tracks[j])
    })
}

/// Blend the track's running embedding with a new observation,
/// `momentum * current + (1 - momentum) * observed`, renormalized.
pub fn update_track_embedding<T: Real>(
    current: &Embedding<T>,
    observed: &Embedding<T>,
    momentum: T,
) -> Result<Embedding<T>, AffinityError> {
    if current.dim() != observed.dim() {
        return Err(AffinityError::DimensionMismatch {
            left: current.dim(),
            right: observed.dim(),
        });
    }
    let blended: Vec<T> = current
        .as_slice()
        .iter()
        .zip(observed.as_slice())
        .map(|(&c, &o)| momentum * c + (T::one() - momentum) * o)
        .collect();
    Embedding::new(blended)
}
