//! The universal raster carrier: row-major float images in linear radiometric
//! units. HDR images are unbounded above zero, LDR maps live in [0, 1].

use crate::error::{Error, Result};
use crate::math::Vec3;

/// H x W x C row-major floating-point raster.
///
/// `channels` is 1 (scalar maps: roughness, metallic, depth, variance) or
/// 3 (color, normals). Every element is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("image dimensions must be positive"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::input(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::input(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite value at flat index {bad}"
            )));
        }
        Ok(ImageBuffer {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        ImageBuffer::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Result<Self> {
        ImageBuffer::filled(width, height, channels, 0.0)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.channels == other.channels
    }

    fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    /// All channels of pixel (x, y).
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    /// Single channel value at (x, y, c).
    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y) + c]
    }

    /// Pixel of a 3-channel image as a vector.
    pub fn pixel_vec3(&self, x: usize, y: usize) -> Vec3 {
        let p = self.pixel(x, y);
        Vec3::new(p[0], p[1], p[2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, values: &[f64]) {
        let i = self.index(x, y);
        self.data[i..i + self.channels].copy_from_slice(values);
    }

    /// Mean over all pixels and channels.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Apply `f` to every element, keeping the invariants checked.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ImageBuffer> {
        ImageBuffer::new(
            self.width,
            self.height,
            self.channels,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    /// True if every element lies in [lo, hi].
    pub fn all_in_range(&self, lo: f64, hi: f64) -> bool {
        self.data.iter().all(|&v| v >= lo && v <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(ImageBuffer::new(2, 2, 2, vec![0.0; 8]).is_err());
        assert!(ImageBuffer::new(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(ImageBuffer::new(0, 2, 1, vec![]).is_err());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(ImageBuffer::new(1, 1, 3, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(ImageBuffer::new(1, 1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn pixel_addressing_is_row_major() {
        let data: Vec<f64> = (0..2 * 3 * 3).map(|i| i as f64).collect();
        let img = ImageBuffer::new(3, 2, 3, data).unwrap();
        assert_eq!(img.pixel(0, 0), &[0.0, 1.0, 2.0]);
        assert_eq!(img.pixel(2, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(img.pixel(0, 1), &[9.0, 10.0, 11.0]);
        assert_eq!(img.at(1, 1, 2), 14.0);
    }
}
