//! Multi-scale second-order moment descriptors.
//!
//! For every scale `b` a clip goes through a valid temporal convolution
//! (`tau^(b)` frames, `C_in -> C'`), a deformable `R x R` spatial
//! convolution (`C' -> C_out`) whose offsets are predicted from the temporal
//! difference of the convolved clip, an uncentered second moment over the
//! `H * W` locations, a Newton–Schulz square root and an upper-triangle
//! vectorization. Sequences from all scales are concatenated scale-major.

mod clip;
mod conv;
mod scale;

use alloc::format;
use alloc::vec::Vec;

pub use clip::{bilinear_sample, FeatureClip, OffsetField, Plane};
pub use conv::{
    deformable_conv, offset_mlp, scale_features, scale_moment, temporal_conv, temporal_difference,
};
pub use scale::{
    seeded_scales, OffsetMlp, ScaleConfig, ScaleShape, ScaleWeights, SeedOptions, WeightInit,
};

use crate::linalg::{
    default_regularizer, newton_schulz_sqrt, vectorize_spd, DescriptorVector, SpdMatrix,
    DEFAULT_NS_ITERATIONS,
};
use crate::{Error, Result};

/// Temporal kernels of the default multi-scale configuration.
pub const DEFAULT_TAUS: [usize; 3] = [1, 3, 5];
/// Spatial grids of the default multi-scale configuration.
pub const DEFAULT_GRIDS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorEntry {
    pub scale: usize,
    pub time: usize,
    pub vector: DescriptorVector,
}

/// Ordered descriptors tagged with their (scale, timestamp) of origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSequence {
    entries: Vec<DescriptorEntry>,
}

impl DescriptorSequence {
    pub fn new(entries: Vec<DescriptorEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Empty("descriptor sequence"));
        }
        let dim = entries[0].vector.len();
        if let Some(bad) = entries.iter().find(|e| e.vector.len() != dim) {
            return Err(Error::Shape(format!(
                "descriptor lengths {} and {} in one sequence",
                dim,
                bad.vector.len()
            )));
        }
        if entries
            .iter()
            .any(|e| e.vector.as_slice().iter().any(|v| !v.is_finite()))
        {
            return Err(Error::NonFinite("descriptor"));
        }
        Ok(Self { entries })
    }

    /// Untagged vectors; entry `l` gets scale 0, time `l`.
    pub fn from_vectors(vectors: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            vectors
                .into_iter()
                .enumerate()
                .map(|(t, v)| DescriptorEntry {
                    scale: 0,
                    time: t,
                    vector: DescriptorVector(v),
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[DescriptorEntry] {
        &self.entries
    }

    /// Number of descriptors `L`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Length of every descriptor vector.
    pub fn dim(&self) -> usize {
        self.entries[0].vector.len()
    }

    pub fn vector(&self, l: usize) -> &[f64] {
        self.entries[l].vector.as_slice()
    }

    pub fn vectors(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(|e| e.vector.as_slice())
    }

    pub fn same_structure(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self.len() == other.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.scale == b.scale && a.time == b.time)
    }

    /// Arithmetic mean of all descriptor vectors.
    pub fn mean_vector(&self) -> Vec<f64> {
        let mut mean = alloc::vec![0.0; self.dim()];
        for v in self.vectors() {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let inv = 1.0 / self.len() as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    /// Same descriptors, every vector multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|e| DescriptorEntry {
                    scale: e.scale,
                    time: e.time,
                    vector: DescriptorVector(
                        e.vector.as_slice().iter().map(|v| v * factor).collect(),
                    ),
                })
                .collect(),
        }
    }

    /// Entries reordered so that position `i` holds entry `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::Shape(format!(
                "permutation of length {} for {} entries",
                order.len(),
                self.len()
            )));
        }
        let mut seen = alloc::vec![false; self.len()];
        let mut entries = Vec::with_capacity(self.len());
        for &i in order {
            if i >= self.len() || core::mem::replace(&mut seen[i], true) {
                return Err(Error::Config("not a permutation".into()));
            }
            entries.push(self.entries[i].clone());
        }
        Ok(Self { entries })
    }
}

/// Square-root normalization used by the descriptor pipeline. A zero moment
/// (dead features) maps to the zero matrix.
pub fn normalize_moment(q: &SpdMatrix, iterations: usize) -> Result<SpdMatrix> {
    if q.trace() <= 0.0 {
        return Ok(SpdMatrix::zeros(q.dim()));
    }
    newton_schulz_sqrt(q, iterations, default_regularizer(q))
}

/// Whether each scale is summarized by its spatial mean or its second moment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    First,
    Second,
}

fn check_scales(scales: &[ScaleConfig]) -> Result<()> {
    let first = scales
        .first()
        .ok_or(Error::Empty("at least one scale is required"))?;
    if scales
        .iter()
        .any(|s| s.shape().c_out != first.shape().c_out || s.shape().c_in != first.shape().c_in)
    {
        return Err(Error::Config("all scales must share C_in and C_out".into()));
    }
    Ok(())
}

/// Second-order descriptors over all scales with `iterations` Newton–Schulz
/// steps.
pub fn multi_scale_descriptors_with(
    clip: &FeatureClip,
    scales: &[ScaleConfig],
    iterations: usize,
) -> Result<DescriptorSequence> {
    check_scales(scales)?;
    let mut entries = Vec::new();
    for (b, cfg) in scales.iter().enumerate() {
        for (t, q) in scale_moment(clip, cfg)?.iter().enumerate() {
            entries.push(DescriptorEntry {
                scale: b,
                time: t,
                vector: vectorize_spd(&normalize_moment(q, iterations)?),
            });
        }
    }
    DescriptorSequence::new(entries)
}

/// Second-order descriptors with the default Newton–Schulz iteration count.
pub fn multi_scale_descriptors(
    clip: &FeatureClip,
    scales: &[ScaleConfig],
) -> Result<DescriptorSequence> {
    multi_scale_descriptors_with(clip, scales, DEFAULT_NS_ITERATIONS)
}

/// First-order counterpart: spatial mean of each scale's semantic features.
pub fn multi_scale_first_order(
    clip: &FeatureClip,
    scales: &[ScaleConfig],
) -> Result<DescriptorSequence> {
    check_scales(scales)?;
    let mut entries = Vec::new();
    for (b, cfg) in scales.iter().enumerate() {
        for (t, feats) in scale_features(clip, cfg)?.iter().enumerate() {
            let inv = 1.0 / feats.cols() as f64;
            let mean = (0..feats.rows())
                .map(|r| feats.row(r).iter().sum::<f64>() * inv)
                .collect();
            entries.push(DescriptorEntry {
                scale: b,
                time: t,
                vector: DescriptorVector(mean),
            });
        }
    }
    DescriptorSequence::new(entries)
}

/// Per-frame spatial average of the raw clip (first-order baseline).
pub fn gap_descriptor(clip: &FeatureClip) -> DescriptorSequence {
    let m = clip.locations();
    let inv = 1.0 / m as f64;
    let entries = (0..clip.frames())
        .map(|t| DescriptorEntry {
            scale: 0,
            time: t,
            vector: DescriptorVector(
                (0..clip.channels())
                    .map(|c| clip.plane(t, c).data.iter().sum::<f64>() * inv)
                    .collect(),
            ),
        })
        .collect();
    DescriptorSequence::new(entries).expect("clip has at least one frame of finite values")
}

/// Descriptor extractor.
#[derive(Debug, Clone, PartialEq)]
pub enum Pipeline {
    /// Raw per-frame spatial mean.
    Gap,
    /// Raw per-frame second moment, square-root normalized.
    CovMn { iterations: usize },
    /// Multi-scale semantic features summarized at the given order.
    MultiScale {
        scales: Vec<ScaleConfig>,
        order: MomentOrder,
        iterations: usize,
    },
}

impl Pipeline {
    pub fn extract(&self, clip: &FeatureClip) -> Result<DescriptorSequence> {
        match self {
            Pipeline::Gap => Ok(gap_descriptor(clip)),
            Pipeline::CovMn { iterations } => multi_scale_descriptors_with(
                clip,
                &[ScaleConfig::identity(clip.channels())?],
                *iterations,
            ),
            Pipeline::MultiScale {
                scales,
                order: MomentOrder::Second,
                iterations,
            } => multi_scale_descriptors_with(clip, scales, *iterations),
            Pipeline::MultiScale {
                scales,
                order: MomentOrder::First,
                ..
            } => multi_scale_first_order(clip, scales),
        }
    }

    /// `(L, descriptor length)` for a clip of the given dims.
    pub fn output_shape(&self, frames: usize, channels: usize) -> Result<(usize, usize)> {
        use crate::linalg::triangle_len;
        match self {
            Pipeline::Gap => Ok((frames, channels)),
            Pipeline::CovMn { .. } => Ok((frames, triangle_len(channels))),
            Pipeline::MultiScale { scales, order, .. } => {
                check_scales(scales)?;
                let mut l = 0;
                for s in scales {
                    l += s.output_frames(frames)?;
                }
                let c_out = scales[0].shape().c_out;
                let dim = match order {
                    MomentOrder::First => c_out,
                    MomentOrder::Second => triangle_len(c_out),
                };
                Ok((l, dim))
            }
        }
    }
}
