//! Synthetic feature clips with controlled temporal misalignment.
//!
//! Every class is an ordered list of subactions. A subaction owns a unit
//! latent feature vector (orthonormal across the whole library) and a fixed
//! spatial pattern. An instance lays its subactions out in time with
//! per-instance duration warping and, optionally, one swap of adjacent
//! subactions; each frame is the active latent broadcast through its
//! pattern plus Gaussian noise.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::descriptor::FeatureClip;
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub classes: usize,
    pub subactions: usize,
    pub instances_per_class: usize,
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// Maximum multiplicative duration warp (>= 1).
    pub jitter: f64,
    /// Probability that two adjacent subactions swap.
    pub reorder_prob: f64,
    pub noise_sigma: f64,
    /// Spatially constant Gaussian noise drawn per frame and channel.
    pub frame_noise_sigma: f64,
    /// Gaussian blobs per spatial pattern.
    pub blobs: usize,
    /// Blob amplitudes drawn with random sign instead of all positive.
    pub signed_patterns: bool,
    /// Shuffle class labels across instances (chance-level control).
    pub shuffle_labels: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            subactions: 3,
            instances_per_class: 20,
            frames: 8,
            channels: 64,
            height: 8,
            width: 8,
            jitter: 1.0,
            reorder_prob: 0.0,
            noise_sigma: 0.0,
            frame_noise_sigma: 0.0,
            blobs: 2,
            signed_patterns: false,
            shuffle_labels: false,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0
            || self.subactions == 0
            || self.frames == 0
            || self.channels == 0
            || self.height == 0
            || self.width == 0
            || self.blobs == 0
        {
            return Err(Error::Config(
                "synthetic dims and counts must be positive".into(),
            ));
        }
        if !(self.jitter >= 1.0) || !self.jitter.is_finite() {
            return Err(Error::Config(format!(
                "jitter must be >= 1, got {}",
                self.jitter
            )));
        }
        if !(0.0..=1.0).contains(&self.reorder_prob) {
            return Err(Error::Config(format!(
                "reorder probability must be in [0, 1], got {}",
                self.reorder_prob
            )));
        }
        for sigma in [self.noise_sigma, self.frame_noise_sigma] {
            if !(sigma >= 0.0) || !sigma.is_finite() {
                return Err(Error::Config("noise sigma must be finite and >= 0".into()));
            }
        }
        if self.classes * self.subactions > self.channels {
            return Err(Error::Config(format!(
                "{} classes x {} subactions exceed {} channels; latents cannot be orthogonal",
                self.classes, self.subactions, self.channels
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubactionSpec {
    /// Library-wide id, `class * subactions + position`.
    pub id: usize,
    /// Unit-norm latent of length `channels`.
    pub latent: Vec<f64>,
    /// Nominal duration in frames.
    pub duration: usize,
    /// `height x width` pattern, unit root-mean-square.
    pub pattern: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDef {
    pub label: String,
    pub subactions: Vec<SubactionSpec>,
}

fn nominal_durations(frames: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| (frames / parts + usize::from(i < frames % parts)).max(1))
        .collect()
}

/// Orthonormalizes `count` random Gaussian vectors of length `dim`
/// (modified Gram–Schmidt with one reorthogonalization pass).
fn orthonormal_latents(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(count);
    while basis.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    basis
}

fn blob_pattern(rng: &mut impl Rng, cfg: &SynthConfig) -> Vec<f64> {
    let (h, w) = (cfg.height, cfg.width);
    let mut pattern = vec![0.0; h * w];
    let side = h.min(w) as f64;
    for _ in 0..cfg.blobs {
        let cy = rng.random_range(0.0..h as f64);
        let cx = rng.random_range(0.0..w as f64);
        let radius = side * rng.random_range(0.15..0.4);
        let mut amp = rng.random_range(0.5..1.0);
        if cfg.signed_patterns && rng.random_bool(0.5) {
            amp = -amp;
        }
        for y in 0..h {
            for x in 0..w {
                let (dy, dx) = (y as f64 + 0.5 - cy, x as f64 + 0.5 - cx);
                let d2 = dy * dy + dx * dx;
                pattern[y * w + x] += amp * libm::exp(-d2 / (2.0 * radius * radius));
            }
        }
    }
    let rms = libm::sqrt(pattern.iter().map(|v| v * v).sum::<f64>() / pattern.len() as f64);
    if rms > 0.0 {
        pattern.iter_mut().for_each(|v| *v /= rms);
    } else {
        pattern.iter_mut().for_each(|v| *v = 1.0);
    }
    pattern
}

pub fn generate_class_library(cfg: &SynthConfig) -> Result<Vec<ClassDef>> {
    cfg.validate()?;
    let mut rng = seed::rng(seed::derive(cfg.seed, 0x11B));
    let latents = orthonormal_latents(&mut rng, cfg.classes * cfg.subactions, cfg.channels);
    let durations = nominal_durations(cfg.frames, cfg.subactions);
    let mut latents = latents.into_iter();
    let mut out = Vec::with_capacity(cfg.classes);
    for c in 0..cfg.classes {
        let subactions = (0..cfg.subactions)
            .map(|j| SubactionSpec {
                id: c * cfg.subactions + j,
                latent: latents.next().expect("one latent per subaction"),
                duration: durations[j],
                pattern: blob_pattern(&mut rng, cfg),
            })
            .collect();
        out.push(ClassDef {
            label: format!("class{c:02}"),
            subactions,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedInstance {
    pub clip: FeatureClip,
    /// Subaction id active at each frame.
    pub frame_labels: Vec<usize>,
    /// Subaction positions in temporal order.
    pub order: Vec<usize>,
    /// Warped durations in temporal order (before padding or truncation).
    pub durations: Vec<usize>,
}

/// Renders one instance. If the warped durations do not fill `frames`, the
/// final subaction is repeated; overflow is truncated.
pub fn render_instance(class: &ClassDef, cfg: &SynthConfig, seed: u64) -> Result<RenderedInstance> {
    cfg.validate()?;
    if class.subactions.is_empty() {
        return Err(Error::Empty("class has no subactions"));
    }
    let (t_len, c_len, m) = (cfg.frames, cfg.channels, cfg.height * cfg.width);
    for s in &class.subactions {
        if s.latent.len() != c_len || s.pattern.len() != m || s.duration == 0 {
            return Err(Error::Shape(format!(
                "subaction {} does not match the configured clip dims",
                s.id
            )));
        }
    }
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..class.subactions.len()).collect();
    if order.len() > 1 && rng.random_bool(cfg.reorder_prob) {
        let i = rng.random_range(0..order.len() - 1);
        order.swap(i, i + 1);
    }
    let log_j = libm::log(cfg.jitter);
    let durations: Vec<usize> = order
        .iter()
        .map(|&p| {
            let warp = if log_j > 0.0 {
                libm::exp(rng.random_range(-log_j..=log_j))
            } else {
                1.0
            };
            (libm::round(class.subactions[p].duration as f64 * warp) as usize).max(1)
        })
        .collect();
    let mut frame_pos = Vec::with_capacity(t_len);
    for (&p, &d) in order.iter().zip(&durations) {
        frame_pos.extend(core::iter::repeat_n(p, d));
    }
    let last = *order.last().expect("non-empty order");
    frame_pos.resize(t_len, last);
    frame_pos.truncate(t_len);

    let mut data = vec![0.0; t_len * c_len * m];
    for (t, &p) in frame_pos.iter().enumerate() {
        let s = &class.subactions[p];
        for c in 0..c_len {
            let base = (t * c_len + c) * m;
            let l = s.latent[c];
            for (k, pv) in s.pattern.iter().enumerate() {
                data[base + k] = l * pv;
            }
        }
    }
    if cfg.noise_sigma > 0.0 {
        for v in data.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += cfg.noise_sigma * n;
        }
    }
    if cfg.frame_noise_sigma > 0.0 {
        for plane in data.chunks_mut(m) {
            let n: f64 = StandardNormal.sample(&mut rng);
            plane
                .iter_mut()
                .for_each(|v| *v += cfg.frame_noise_sigma * n);
        }
    }
    let clip = FeatureClip::new(t_len, c_len, cfg.height, cfg.width, data)?;
    Ok(RenderedInstance {
        clip,
        frame_labels: frame_pos.iter().map(|&p| class.subactions[p].id).collect(),
        order,
        durations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthItem {
    pub id: String,
    /// Class the clip was rendered from.
    pub source_class: usize,
    /// Label written to the manifest (differs from the source class only
    /// when labels are shuffled).
    pub label: String,
    pub instance: RenderedInstance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub library: Vec<ClassDef>,
    pub items: Vec<SynthItem>,
}

/// Seed used for instance `i` of class `c`.
pub fn instance_seed(cfg: &SynthConfig, class: usize, instance: usize) -> u64 {
    seed::derive(
        seed::derive(cfg.seed, 0x1A57),
        (class * cfg.instances_per_class + instance) as u64,
    )
}

pub fn generate_dataset(cfg: &SynthConfig) -> Result<SynthDataset> {
    let library = generate_class_library(cfg)?;
    let mut items = Vec::with_capacity(cfg.classes * cfg.instances_per_class);
    for (c, class) in library.iter().enumerate() {
        for i in 0..cfg.instances_per_class {
            items.push(SynthItem {
                id: format!("{}_{i:04}", class.label),
                source_class: c,
                label: class.label.clone(),
                instance: render_instance(class, cfg, instance_seed(cfg, c, i))?,
            });
        }
    }
    if cfg.shuffle_labels {
        let mut labels: Vec<String> = items.iter().map(|it| it.label.clone()).collect();
        labels.shuffle(&mut seed::rng(seed::derive(cfg.seed, 0x5EF)));
        for (it, l) in items.iter_mut().zip(labels) {
            it.label = l;
        }
    }
    Ok(SynthDataset { library, items })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            classes: 2,
            subactions: 2,
            channels: 8,
            height: 4,
            width: 4,
            instances_per_class: 3,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn library_latents_are_orthonormal() {
        let lib = generate_class_library(&small()).unwrap();
        let all: Vec<&Vec<f64>> = lib
            .iter()
            .flat_map(|c| c.subactions.iter().map(|s| &s.latent))
            .collect();
        assert_eq!(all.len(), 4);
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let d: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((d - expect).abs() <= 1e-9, "({i},{j}) = {d}");
            }
        }
        assert_eq!(lib, generate_class_library(&small()).unwrap());
    }

    #[test]
    fn too_many_latents_rejected() {
        let cfg = SynthConfig {
            classes: 5,
            subactions: 2,
            channels: 8,
            ..small()
        };
        assert!(generate_class_library(&cfg).is_err());
    }

    #[test]
    fn canonical_instance_is_deterministic() {
        let cfg = small();
        let lib = generate_class_library(&cfg).unwrap();
        let a = render_instance(&lib[0], &cfg, 1).unwrap();
        let b = render_instance(&lib[0], &cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.order, vec![0, 1]);
        assert_eq!(a.frame_labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn forced_reorder_inverts_two_subactions() {
        let cfg = SynthConfig {
            reorder_prob: 1.0,
            ..small()
        };
        let lib = generate_class_library(&cfg).unwrap();
        for s in 0..20 {
            let r = render_instance(&lib[1], &cfg, s).unwrap();
            assert_eq!(r.order, vec![1, 0]);
            assert_eq!(r.frame_labels[0], 3);
        }
    }

    #[test]
    fn padding_repeats_final_subaction() {
        let cfg = SynthConfig {
            jitter: 4.0,
            ..small()
        };
        let lib = generate_class_library(&cfg).unwrap();
        for s in 0..50 {
            let r = render_instance(&lib[0], &cfg, s).unwrap();
            assert_eq!(r.frame_labels.len(), 8);
            let total: usize = r.durations.iter().sum();
            if total < 8 {
                assert!(r.frame_labels[total..].iter().all(|&l| l == 1));
            }
        }
    }

    #[test]
    fn dataset_counts_and_shuffle() {
        let cfg = SynthConfig {
            classes: 10,
            subactions: 2,
            channels: 32,
            instances_per_class: 20,
            height: 2,
            width: 2,
            ..SynthConfig::default()
        };
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.items.len(), 200);
        let shuffled = generate_dataset(&SynthConfig {
            shuffle_labels: true,
            ..cfg
        })
        .unwrap();
        let moved = ds
            .items
            .iter()
            .zip(&shuffled.items)
            .filter(|(a, b)| a.label != b.label)
            .count();
        assert!(moved > 100);
    }
}
