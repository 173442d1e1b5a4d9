use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::DenseMatrix;
use crate::{Error, Result};

/// A `T x C x H x W` block of spatio-temporal features, stored frame-major
/// then channel, row, column.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClip {
    frames: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureClip {
    pub fn new(
        frames: usize,
        channels: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if frames == 0 || channels == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "clip dims must be positive, got {frames}x{channels}x{height}x{width}"
            )));
        }
        if data.len() != frames * channels * height * width {
            return Err(Error::Shape(format!(
                "{} values for a {frames}x{channels}x{height}x{width} clip",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature clip"));
        }
        Ok(Self {
            frames,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            channels,
            height,
            width,
            data: vec![0.0; frames * channels * height * width],
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Spatial positions per frame, `H * W`.
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.channels + c) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(t, c, y, x)]
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// All channels of frame `t`, `C * H * W` values.
    pub fn frame(&self, t: usize) -> &[f64] {
        let len = self.channels * self.locations();
        &self.data[t * len..(t + 1) * len]
    }

    /// One channel plane of frame `t`.
    pub fn plane(&self, t: usize, c: usize) -> Plane<'_> {
        let m = self.locations();
        let start = (t * self.channels + c) * m;
        Plane {
            data: &self.data[start..start + m],
            height: self.height,
            width: self.width,
        }
    }

    /// Frame `t` as a `C x M` matrix.
    pub fn frame_matrix(&self, t: usize) -> DenseMatrix {
        DenseMatrix::new(self.channels, self.locations(), self.frame(t).to_vec())
            .expect("clip values are finite")
    }
}

/// Borrowed `H x W` grid.
#[derive(Debug, Clone, Copy)]
pub struct Plane<'a> {
    pub data: &'a [f64],
    pub height: usize,
    pub width: usize,
}

impl<'a> Plane<'a> {
    pub fn new(data: &'a [f64], height: usize, width: usize) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "{} values for a {height}x{width} plane",
                data.len()
            )));
        }
        Ok(Self {
            data,
            height,
            width,
        })
    }

    #[inline]
    fn at(&self, y: isize, x: isize) -> f64 {
        if y < 0 || x < 0 || y as usize >= self.height || x as usize >= self.width {
            0.0
        } else {
            self.data[y as usize * self.width + x as usize]
        }
    }
}

/// Bilinear interpolation at column `x`, row `y` with zero padding outside
/// the grid.
pub fn bilinear_sample(plane: Plane<'_>, x: f64, y: f64) -> f64 {
    let x0 = libm::floor(x);
    let y0 = libm::floor(y);
    let fx = x - x0;
    let fy = y - y0;
    // Far outside the grid every neighbor is padding.
    let limit = (plane.height.max(plane.width) + 2) as f64;
    if x0 < -limit || y0 < -limit || x0 > limit || y0 > limit {
        return 0.0;
    }
    let (xi, yi) = (x0 as isize, y0 as isize);
    let mut acc = 0.0;
    acc += (1.0 - fx) * (1.0 - fy) * plane.at(yi, xi);
    if fx != 0.0 {
        acc += fx * (1.0 - fy) * plane.at(yi, xi + 1);
    }
    if fy != 0.0 {
        acc += (1.0 - fx) * fy * plane.at(yi + 1, xi);
    }
    if fx != 0.0 && fy != 0.0 {
        acc += fx * fy * plane.at(yi + 1, xi + 1);
    }
    acc
}

/// Per-frame sampling offsets: for every kernel point `k` of an `R x R`
/// grid, channel `2k` holds `dx` and `2k + 1` holds `dy` at each location.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    frames: usize,
    points: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl OffsetField {
    pub fn zeros(frames: usize, points: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            points,
            height,
            width,
            data: vec![0.0; frames * 2 * points * height * width],
        }
    }

    pub fn new(
        frames: usize,
        points: usize,
        height: usize,
        width: usize,
        data: Vec<f64>,
    ) -> Result<Self> {
        if data.len() != frames * 2 * points * height * width {
            return Err(Error::Shape(format!(
                "{} offsets for {frames} frames x {points} points x {height}x{width}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("offset field"));
        }
        Ok(Self {
            frames,
            points,
            height,
            width,
            data,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    fn index(&self, t: usize, ch: usize, y: usize, x: usize) -> usize {
        ((t * 2 * self.points + ch) * self.height + y) * self.width + x
    }

    /// `(dx, dy)` of kernel point `k` at frame `t`, location `(y, x)`.
    #[inline]
    pub fn offset(&self, t: usize, k: usize, y: usize, x: usize) -> (f64, f64) {
        (
            self.data[self.index(t, 2 * k, y, x)],
            self.data[self.index(t, 2 * k + 1, y, x)],
        )
    }

    pub(crate) fn set(&mut self, t: usize, ch: usize, y: usize, x: usize, v: f64) {
        let i = self.index(t, ch, y, x);
        self.data[i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_examples() {
        let grid: Vec<f64> = (0..16).map(|v| v as f64).collect();
        let p = Plane::new(&grid, 4, 4).unwrap();
        assert_eq!(bilinear_sample(p, 2.0, 1.0), 6.0);
        assert_eq!(bilinear_sample(p, 1.5, 1.0), 5.5);
        assert_eq!(bilinear_sample(p, -5.0, -5.0), 0.0);
        assert_eq!(bilinear_sample(p, 1e9, 0.0), 0.0);
        // Half a pixel outside: half of the edge value.
        assert_eq!(bilinear_sample(p, 3.5, 0.0), 1.5);
    }

    #[test]
    fn clip_validation() {
        assert!(FeatureClip::new(0, 1, 1, 1, vec![]).is_err());
        assert!(FeatureClip::new(1, 1, 1, 1, vec![1.0, 2.0]).is_err());
        assert!(FeatureClip::new(1, 1, 1, 1, vec![f64::INFINITY]).is_err());
        let c = FeatureClip::new(2, 1, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.get(1, 0, 0, 1), 4.0);
        assert_eq!(c.frame_matrix(1).data(), &[3.0, 4.0]);
    }
}
