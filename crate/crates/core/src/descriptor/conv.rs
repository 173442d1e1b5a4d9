use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::clip::{bilinear_sample, FeatureClip, OffsetField};
use super::scale::ScaleConfig;
use crate::linalg::{second_moment, DenseMatrix, SpdMatrix};
use crate::{Error, Result};

/// Valid temporal convolution `C_in -> C'` with kernel length `tau`; no bias.
pub fn temporal_conv(clip: &FeatureClip, cfg: &ScaleConfig) -> Result<FeatureClip> {
    let s = cfg.shape();
    if clip.channels() != s.c_in {
        return Err(Error::Shape(format!(
            "clip has {} channels, scale expects {}",
            clip.channels(),
            s.c_in
        )));
    }
    let out_frames = cfg.output_frames(clip.frames())?;
    let m = clip.locations();
    let w = &cfg.weights().temporal;
    let mut out = FeatureClip::zeros(out_frames, s.c_prime, clip.height(), clip.width());
    let frame_len = s.c_prime * m;
    for t in 0..out_frames {
        let dst = &mut out.data_mut()[t * frame_len..(t + 1) * frame_len];
        for k in 0..s.tau {
            for c in 0..s.c_in {
                let src = clip.plane(t + k, c).data;
                let row = &w[(k * s.c_in + c) * s.c_prime..(k * s.c_in + c + 1) * s.c_prime];
                for (cp, &wv) in row.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    let plane = &mut dst[cp * m..(cp + 1) * m];
                    for (o, x) in plane.iter_mut().zip(src) {
                        *o += wv * x;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `d_t = x_t - x_{t-1}` with `d_1 = 0`.
pub fn temporal_difference(clip: &FeatureClip) -> FeatureClip {
    let mut out = FeatureClip::zeros(clip.frames(), clip.channels(), clip.height(), clip.width());
    let len = clip.channels() * clip.locations();
    for t in 1..clip.frames() {
        let (prev, cur) = (clip.frame(t - 1), clip.frame(t));
        let dst = &mut out.data_mut()[t * len..(t + 1) * len];
        for ((d, a), b) in dst.iter_mut().zip(cur).zip(prev) {
            *d = a - b;
        }
    }
    out
}

/// Per-location offset MLP applied to a temporal difference clip with `C'`
/// channels.
pub fn offset_mlp(diff: &FeatureClip, cfg: &ScaleConfig) -> Result<OffsetField> {
    let s = cfg.shape();
    let mlp = &cfg.weights().offset;
    if diff.channels() != s.c_prime {
        return Err(Error::Shape(format!(
            "difference clip has {} channels, offset mlp expects {}",
            diff.channels(),
            s.c_prime
        )));
    }
    let (h, w) = (diff.height(), diff.width());
    let mut field = OffsetField::zeros(diff.frames(), s.points(), h, w);
    if mlp.final_layer_is_zero() {
        return Ok(field);
    }
    let mut input = vec![0.0; mlp.input];
    let mut hidden = vec![0.0; mlp.hidden];
    for t in 0..diff.frames() {
        for y in 0..h {
            for x in 0..w {
                for (c, v) in input.iter_mut().enumerate() {
                    *v = diff.get(t, c, y, x);
                }
                hidden.copy_from_slice(&mlp.b1);
                for (c, &v) in input.iter().enumerate() {
                    let row = &mlp.w1[c * mlp.hidden..(c + 1) * mlp.hidden];
                    for (hv, wv) in hidden.iter_mut().zip(row) {
                        *hv += wv * v;
                    }
                }
                for hv in hidden.iter_mut() {
                    *hv = hv.max(0.0);
                }
                for ch in 0..mlp.output {
                    let mut acc = mlp.b2[ch];
                    for (j, hv) in hidden.iter().enumerate() {
                        acc += mlp.w2[j * mlp.output + ch] * hv;
                    }
                    field.set(t, ch, y, x, acc);
                }
            }
        }
    }
    Ok(field)
}

/// Deformable `grid x grid` convolution `C' -> C_out` with zero padding and
/// same-size output. Kernel point `k = i * grid + j` samples the input at
/// `(x + j - r + dx, y + i - r + dy)`, `r = grid / 2`.
pub fn deformable_conv(
    clip: &FeatureClip,
    offsets: &OffsetField,
    cfg: &ScaleConfig,
) -> Result<Vec<DenseMatrix>> {
    let s = cfg.shape();
    if clip.channels() != s.c_prime {
        return Err(Error::Shape(format!(
            "deformable input has {} channels, expected {}",
            clip.channels(),
            s.c_prime
        )));
    }
    if offsets.frames() != clip.frames()
        || offsets.points() != s.points()
        || offsets.height() != clip.height()
        || offsets.width() != clip.width()
    {
        return Err(Error::Shape(format!(
            "offset field {}x{}x{}x{} does not match clip {}x{}x{} with {} kernel points",
            offsets.frames(),
            offsets.points(),
            offsets.height(),
            offsets.width(),
            clip.frames(),
            clip.height(),
            clip.width(),
            s.points()
        )));
    }
    let (h, w) = (clip.height(), clip.width());
    let m = h * w;
    let r = (s.grid / 2) as isize;
    let kernel = &cfg.weights().spatial;
    let mut column = vec![0.0; s.c_out];
    let mut result = Vec::with_capacity(clip.frames());
    for t in 0..clip.frames() {
        let mut out = vec![0.0; s.c_out * m];
        for y in 0..h {
            for x in 0..w {
                column.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..s.grid {
                    for j in 0..s.grid {
                        let k = i * s.grid + j;
                        let (dx, dy) = offsets.offset(t, k, y, x);
                        let sx = (x as isize + j as isize - r) as f64 + dx;
                        let sy = (y as isize + i as isize - r) as f64 + dy;
                        for c in 0..s.c_prime {
                            let v = bilinear_sample(clip.plane(t, c), sx, sy);
                            if v == 0.0 {
                                continue;
                            }
                            let row = &kernel
                                [(k * s.c_prime + c) * s.c_out..(k * s.c_prime + c + 1) * s.c_out];
                            for (o, wv) in column.iter_mut().zip(row) {
                                *o += wv * v;
                            }
                        }
                    }
                }
                let loc = y * w + x;
                for (o, v) in column.iter().enumerate() {
                    out[o * m + loc] = *v;
                }
            }
        }
        result.push(DenseMatrix::new(s.c_out, m, out)?);
    }
    Ok(result)
}

/// Semantic features `T^(b)`: temporal convolution, then deformable spatial
/// convolution driven by offsets predicted from the temporal difference.
pub fn scale_features(clip: &FeatureClip, cfg: &ScaleConfig) -> Result<Vec<DenseMatrix>> {
    let mixed = temporal_conv(clip, cfg)?;
    let offsets = if cfg.weights().offset.final_layer_is_zero() {
        OffsetField::zeros(
            mixed.frames(),
            cfg.shape().points(),
            mixed.height(),
            mixed.width(),
        )
    } else {
        offset_mlp(&temporal_difference(&mixed), cfg)?
    };
    deformable_conv(&mixed, &offsets, cfg)
}

/// Uncentered second moment of every output frame of one scale.
pub fn scale_moment(clip: &FeatureClip, cfg: &ScaleConfig) -> Result<Vec<SpdMatrix>> {
    scale_features(clip, cfg)?
        .iter()
        .map(second_moment)
        .collect()
}
