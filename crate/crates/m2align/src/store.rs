//! Clips, descriptor sequences and scale weights as FSQ1 tensors.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use m2align_core::descriptor::{
    DescriptorEntry, DescriptorSequence, FeatureClip, OffsetMlp, ScaleConfig, ScaleShape,
    ScaleWeights,
};
use m2align_core::linalg::DescriptorVector;

use crate::seqio::{find, read_container, write_container, Tensor, TensorData};

/// Element type used when writing clips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Storage {
    #[default]
    F32,
    F64,
}

impl Storage {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "f32" => Some(Storage::F32),
            "f64" => Some(Storage::F64),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Storage::F32 => "f32",
            Storage::F64 => "f64",
        }
    }

    fn tensor(self, name: &str, dims: Vec<u32>, data: &[f64]) -> Tensor {
        match self {
            Storage::F32 => Tensor::f32(name, dims, data.iter().map(|&v| v as f32).collect()),
            Storage::F64 => Tensor::f64(name, dims, data.to_vec()),
        }
    }
}

fn dims_u32(dims: &[usize]) -> Result<Vec<u32>> {
    dims.iter()
        .map(|&d| u32::try_from(d).context("dimension exceeds u32"))
        .collect()
}

fn required<'a>(tensors: &'a [Tensor], name: &str) -> Result<&'a Tensor> {
    find(tensors, name).with_context(|| format!("missing tensor {name:?}"))
}

/// `clip` `[T, C, H, W]` plus optional `frame_labels` `[T]`.
pub fn clip_tensors(
    clip: &FeatureClip,
    labels: Option<&[usize]>,
    storage: Storage,
) -> Result<Vec<Tensor>> {
    let mut out = vec![storage.tensor("clip", dims_u32(&clip.dims())?, clip.data())];
    if let Some(labels) = labels {
        let v: Vec<f64> = labels.iter().map(|&l| l as f64).collect();
        out.push(Tensor::f64("frame_labels", vec![labels.len() as u32], v));
    }
    Ok(out)
}

pub fn clip_from_tensors(tensors: &[Tensor]) -> Result<FeatureClip> {
    let t = required(tensors, "clip")?;
    ensure!(
        t.dims.len() == 4,
        "clip tensor has rank {}, expected 4",
        t.dims.len()
    );
    let d: Vec<usize> = t.dims.iter().map(|&d| d as usize).collect();
    Ok(FeatureClip::new(d[0], d[1], d[2], d[3], t.data.to_f64())?)
}

pub fn write_clip(
    path: &Path,
    clip: &FeatureClip,
    labels: Option<&[usize]>,
    storage: Storage,
) -> Result<()> {
    write_container(&clip_tensors(clip, labels, storage)?, path)?;
    Ok(())
}

pub fn read_clip(path: &Path) -> Result<FeatureClip> {
    let tensors = read_container(path)?;
    clip_from_tensors(&tensors).with_context(|| format!("{}", path.display()))
}

/// `descriptors` `[L, D]`, `scale` `[L]`, `time` `[L]`, all f64.
pub fn descriptor_tensors(seq: &DescriptorSequence) -> Vec<Tensor> {
    let (l, d) = (seq.len() as u32, seq.dim() as u32);
    let values: Vec<f64> = seq.vectors().flatten().copied().collect();
    let scale = seq.entries().iter().map(|e| e.scale as f64).collect();
    let time = seq.entries().iter().map(|e| e.time as f64).collect();
    vec![
        Tensor::f64("descriptors", vec![l, d], values),
        Tensor::f64("scale", vec![l], scale),
        Tensor::f64("time", vec![l], time),
    ]
}

pub fn descriptors_from_tensors(tensors: &[Tensor]) -> Result<DescriptorSequence> {
    let v = required(tensors, "descriptors")?;
    ensure!(v.dims.len() == 2, "descriptors tensor must be rank 2");
    let (l, d) = (v.dims[0] as usize, v.dims[1] as usize);
    let values = v.data.to_f64();
    let tags = |name: &str| -> Result<Vec<usize>> {
        let t = required(tensors, name)?;
        ensure!(t.dims == [l as u32], "{name} tensor must have shape [{l}]");
        Ok(t.data.to_f64().into_iter().map(|x| x as usize).collect())
    };
    let (scale, time) = (tags("scale")?, tags("time")?);
    let entries = (0..l)
        .map(|i| DescriptorEntry {
            scale: scale[i],
            time: time[i],
            vector: DescriptorVector(values[i * d..(i + 1) * d].to_vec()),
        })
        .collect();
    Ok(DescriptorSequence::new(entries)?)
}

/// Weight tensors of every scale, keyed `scale{b}.{stage}`:
/// `temporal` `[tau, C_in, C']`, `spatial` `[grid^2, C', C_out]`,
/// `offset.w1` `[C', hidden]`, `offset.b1`, `offset.w2` `[hidden, 2 grid^2]`,
/// `offset.b2`.
pub fn weight_tensors(scales: &[ScaleConfig]) -> Vec<Tensor> {
    let mut out = Vec::new();
    for (b, cfg) in scales.iter().enumerate() {
        let s = cfg.shape();
        let w = cfg.weights();
        let o = &w.offset;
        let p = |stage: &str| format!("scale{b}.{stage}");
        let u = |x: usize| x as u32;
        out.push(Tensor::f64(
            p("temporal"),
            vec![u(s.tau), u(s.c_in), u(s.c_prime)],
            w.temporal.clone(),
        ));
        out.push(Tensor::f64(
            p("spatial"),
            vec![u(s.points()), u(s.c_prime), u(s.c_out)],
            w.spatial.clone(),
        ));
        out.push(Tensor::f64(
            p("offset.w1"),
            vec![u(o.input), u(o.hidden)],
            o.w1.clone(),
        ));
        out.push(Tensor::f64(p("offset.b1"), vec![u(o.hidden)], o.b1.clone()));
        out.push(Tensor::f64(
            p("offset.w2"),
            vec![u(o.hidden), u(o.output)],
            o.w2.clone(),
        ));
        out.push(Tensor::f64(p("offset.b2"), vec![u(o.output)], o.b2.clone()));
    }
    out
}

pub fn scales_from_tensors(tensors: &[Tensor]) -> Result<Vec<ScaleConfig>> {
    let mut scales = Vec::new();
    for b in 0.. {
        let p = |stage: &str| format!("scale{b}.{stage}");
        let Some(temporal) = find(tensors, &p("temporal")) else {
            break;
        };
        let get = |stage: &str, rank: usize| -> Result<(&Vec<u32>, Vec<f64>)> {
            let t = required(tensors, &p(stage))?;
            ensure!(t.dims.len() == rank, "{} must have rank {rank}", p(stage));
            Ok((&t.dims, t.data.to_f64()))
        };
        ensure!(
            temporal.dims.len() == 3,
            "{} must have rank 3",
            p("temporal")
        );
        let (sd, spatial) = get("spatial", 3)?;
        let points = sd[0] as usize;
        let grid = (points as f64).sqrt().round() as usize;
        if grid * grid != points {
            bail!(
                "{}: {points} kernel points is not a square grid",
                p("spatial")
            );
        }
        let shape = ScaleShape {
            tau: temporal.dims[0] as usize,
            grid,
            c_in: temporal.dims[1] as usize,
            c_prime: temporal.dims[2] as usize,
            c_out: sd[2] as usize,
        };
        let (w1d, w1) = get("offset.w1", 2)?;
        let (w2d, w2) = get("offset.w2", 2)?;
        let offset = OffsetMlp {
            input: w1d[0] as usize,
            hidden: w1d[1] as usize,
            output: w2d[1] as usize,
            w1,
            b1: get("offset.b1", 1)?.1,
            w2,
            b2: get("offset.b2", 1)?.1,
        };
        let weights = ScaleWeights {
            temporal: temporal.data.to_f64(),
            spatial,
            offset,
        };
        scales
            .push(ScaleConfig::from_weights(shape, weights).with_context(|| format!("scale {b}"))?);
    }
    ensure!(
        !scales.is_empty(),
        "weight file has no scale0.temporal tensor"
    );
    Ok(scales)
}

pub fn write_weights(path: &Path, scales: &[ScaleConfig]) -> Result<()> {
    write_container(&weight_tensors(scales), path)?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<Vec<ScaleConfig>> {
    let tensors = read_container(path)?;
    scales_from_tensors(&tensors).with_context(|| format!("{}", path.display()))
}

/// True when the tensor stores f64 values.
pub fn is_f64(t: &Tensor) -> bool {
    matches!(t.data, TensorData::F64(_))
}
