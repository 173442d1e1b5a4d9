use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::{seed, Error, Result};

/// Channel and kernel sizes of one scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleShape {
    /// Temporal kernel length in frames.
    pub tau: usize,
    /// Side of the square spatial kernel; odd.
    pub grid: usize,
    pub c_in: usize,
    pub c_prime: usize,
    pub c_out: usize,
}

impl ScaleShape {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::Config("tau must be >= 1".into()));
        }
        if self.grid == 0 || self.grid.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "spatial grid must be odd, got {}",
                self.grid
            )));
        }
        if self.c_in == 0 || self.c_prime == 0 || self.c_out == 0 {
            return Err(Error::Config("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Kernel points of the spatial grid, `grid^2`.
    pub fn points(&self) -> usize {
        self.grid * self.grid
    }

    /// Hidden width of the offset MLP.
    pub fn offset_hidden(&self) -> usize {
        (self.c_prime / 2).max(1)
    }
}

/// Per-location two-layer offset predictor:
/// `offsets = W2^T relu(W1^T d + b1) + b2` applied to the temporal
/// difference `d` (length `C'`) at every location.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetMlp {
    pub input: usize,
    pub hidden: usize,
    pub output: usize,
    /// `input x hidden`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `hidden x output`, row-major.
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl OffsetMlp {
    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        Self {
            input,
            hidden,
            output,
            w1: vec![0.0; input * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden * output],
            b2: vec![0.0; output],
        }
    }

    /// True when the final layer is identically zero, so every offset is 0.
    pub fn final_layer_is_zero(&self) -> bool {
        self.w2.iter().chain(&self.b2).all(|v| *v == 0.0)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.w1.len() == self.input * self.hidden
            && self.b1.len() == self.hidden
            && self.w2.len() == self.hidden * self.output
            && self.b2.len() == self.output;
        if !ok {
            return Err(Error::Shape("offset mlp parameter sizes".into()));
        }
        if self
            .w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(&self.b2)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("offset mlp"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleWeights {
    /// Temporal kernel, `tau x C_in x C'`.
    pub temporal: Vec<f64>,
    /// Spatial kernel, `grid^2 x C' x C_out`; kernel points are row-major
    /// over the grid.
    pub spatial: Vec<f64>,
    pub offset: OffsetMlp,
}

/// How seeded weights are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WeightInit {
    /// One uniform projection shared by every kernel tap, scaled by
    /// `1/sqrt(taps)` so each weight has variance `1/fan_in` over the whole
    /// window: a scaled window sum followed by a projection.
    #[default]
    Inflated,
    /// Independent fan-in scaled uniform weights per tap.
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedOptions {
    pub init: WeightInit,
    /// Uniform bound multiplier for the offset MLP's final layer; 0 keeps the
    /// zero initialization.
    pub offset_scale: f64,
}

impl Default for SeedOptions {
    fn default() -> Self {
        Self {
            init: WeightInit::Inflated,
            offset_scale: 0.0,
        }
    }
}

/// One scale `b` of the moment block: temporal kernel `tau`, spatial grid
/// and all weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleConfig {
    shape: ScaleShape,
    weights: ScaleWeights,
    seed: Option<u64>,
}

fn uniform(rng: &mut impl Rng, n: usize, bound: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

fn fan_in_bound(fan_in: usize) -> f64 {
    libm::sqrt(3.0 / fan_in as f64)
}

fn tapped(
    rng: &mut impl Rng,
    taps: usize,
    fan_in: usize,
    fan_out: usize,
    init: WeightInit,
) -> Vec<f64> {
    match init {
        WeightInit::Inflated => {
            let base = uniform(rng, fan_in * fan_out, fan_in_bound(fan_in));
            let inv = 1.0 / libm::sqrt(taps as f64);
            let mut out = Vec::with_capacity(taps * base.len());
            for _ in 0..taps {
                out.extend(base.iter().map(|w| w * inv));
            }
            out
        }
        WeightInit::Independent => {
            uniform(rng, taps * fan_in * fan_out, fan_in_bound(taps * fan_in))
        }
    }
}

impl ScaleConfig {
    pub fn from_weights(shape: ScaleShape, weights: ScaleWeights) -> Result<Self> {
        shape.validate()?;
        if weights.temporal.len() != shape.tau * shape.c_in * shape.c_prime {
            return Err(Error::Shape(format!(
                "temporal kernel has {} values, expected {}x{}x{}",
                weights.temporal.len(),
                shape.tau,
                shape.c_in,
                shape.c_prime
            )));
        }
        if weights.spatial.len() != shape.points() * shape.c_prime * shape.c_out {
            return Err(Error::Shape(format!(
                "spatial kernel has {} values, expected {}x{}x{}",
                weights.spatial.len(),
                shape.points(),
                shape.c_prime,
                shape.c_out
            )));
        }
        if weights.offset.input != shape.c_prime || weights.offset.output != 2 * shape.points() {
            return Err(Error::Shape(format!(
                "offset mlp maps {} -> {}, expected {} -> {}",
                weights.offset.input,
                weights.offset.output,
                shape.c_prime,
                2 * shape.points()
            )));
        }
        weights.offset.validate()?;
        if weights
            .temporal
            .iter()
            .chain(&weights.spatial)
            .any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("scale weights"));
        }
        Ok(Self {
            shape,
            weights,
            seed: None,
        })
    }

    /// Weights drawn deterministically from `seed`.
    pub fn seeded(shape: ScaleShape, seed: u64, opts: SeedOptions) -> Result<Self> {
        shape.validate()?;
        let mut rng = seed::rng(seed);
        let temporal = tapped(&mut rng, shape.tau, shape.c_in, shape.c_prime, opts.init);
        let spatial = tapped(
            &mut rng,
            shape.points(),
            shape.c_prime,
            shape.c_out,
            opts.init,
        );
        let hidden = shape.offset_hidden();
        let out = 2 * shape.points();
        let w1 = uniform(
            &mut rng,
            shape.c_prime * hidden,
            fan_in_bound(shape.c_prime),
        );
        let b1 = uniform(&mut rng, hidden, 1.0 / libm::sqrt(shape.c_prime as f64));
        let (w2, b2) = if opts.offset_scale > 0.0 {
            let bound = opts.offset_scale * fan_in_bound(hidden);
            (uniform(&mut rng, hidden * out, bound), vec![0.0; out])
        } else {
            (vec![0.0; hidden * out], vec![0.0; out])
        };
        let weights = ScaleWeights {
            temporal,
            spatial,
            offset: OffsetMlp {
                input: shape.c_prime,
                hidden,
                output: out,
                w1,
                b1,
                w2,
                b2,
            },
        };
        let mut cfg = Self::from_weights(shape, weights)?;
        cfg.seed = Some(seed);
        Ok(cfg)
    }

    /// `tau = 1`, `1x1` grid and identity projections on `channels`: the
    /// plain per-frame second moment pathway.
    pub fn identity(channels: usize) -> Result<Self> {
        let shape = ScaleShape {
            tau: 1,
            grid: 1,
            c_in: channels,
            c_prime: channels,
            c_out: channels,
        };
        let mut eye = vec![0.0; channels * channels];
        for i in 0..channels {
            eye[i * channels + i] = 1.0;
        }
        let weights = ScaleWeights {
            temporal: eye.clone(),
            spatial: eye,
            offset: OffsetMlp::zeros(channels, shape.offset_hidden(), 2),
        };
        Self::from_weights(shape, weights)
    }

    pub fn shape(&self) -> &ScaleShape {
        &self.shape
    }

    pub fn tau(&self) -> usize {
        self.shape.tau
    }

    pub fn grid(&self) -> usize {
        self.shape.grid
    }

    pub fn weights(&self) -> &ScaleWeights {
        &self.weights
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Output length for a clip of `frames` frames (valid convolution).
    pub fn output_frames(&self, frames: usize) -> Result<usize> {
        if self.shape.tau > frames {
            return Err(Error::Config(format!(
                "temporal kernel {} longer than clip ({frames} frames)",
                self.shape.tau
            )));
        }
        Ok(frames - self.shape.tau + 1)
    }
}

/// Seeded configs for every `(tau, grid)` pair, scale `b` drawing from
/// stream `b` of `seed`.
pub fn seeded_scales(
    taus: &[usize],
    grids: &[usize],
    channels: (usize, usize, usize),
    seed: u64,
    opts: SeedOptions,
) -> Result<Vec<ScaleConfig>> {
    if taus.is_empty() || taus.len() != grids.len() {
        return Err(Error::Config(format!(
            "need matching non-empty tau and grid lists, got {} and {}",
            taus.len(),
            grids.len()
        )));
    }
    taus.iter()
        .zip(grids)
        .enumerate()
        .map(|(b, (&tau, &grid))| {
            let shape = ScaleShape {
                tau,
                grid,
                c_in: channels.0,
                c_prime: channels.1,
                c_out: channels.2,
            };
            ScaleConfig::seeded(shape, seed::derive(seed, b as u64), opts)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(tau: usize, grid: usize) -> ScaleShape {
        ScaleShape {
            tau,
            grid,
            c_in: 4,
            c_prime: 6,
            c_out: 3,
        }
    }

    #[test]
    fn rejects_even_grid_and_zero_tau() {
        assert!(ScaleConfig::seeded(shape(1, 2), 0, SeedOptions::default()).is_err());
        assert!(ScaleConfig::seeded(shape(0, 1), 0, SeedOptions::default()).is_err());
    }

    #[test]
    fn seeded_is_deterministic_and_zero_final_layer() {
        let a = ScaleConfig::seeded(shape(3, 3), 11, SeedOptions::default()).unwrap();
        let b = ScaleConfig::seeded(shape(3, 3), 11, SeedOptions::default()).unwrap();
        let c = ScaleConfig::seeded(shape(3, 3), 12, SeedOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.weights().temporal, c.weights().temporal);
        assert!(a.weights().offset.final_layer_is_zero());
        assert_eq!(a.weights().offset.hidden, 3);
    }

    #[test]
    fn inflated_taps_are_shared() {
        let a = ScaleConfig::seeded(shape(3, 1), 5, SeedOptions::default()).unwrap();
        let t = &a.weights().temporal;
        let n = 4 * 6;
        assert_eq!(t[..n], t[n..2 * n]);
        assert_eq!(t[..n], t[2 * n..]);
    }

    #[test]
    fn output_frames_is_valid_convolution() {
        let cfg = ScaleConfig::seeded(shape(3, 1), 0, SeedOptions::default()).unwrap();
        assert_eq!(cfg.output_frames(8).unwrap(), 6);
        assert!(cfg.output_frames(2).is_err());
    }
}
