//! Planar image, convolution kernel, and frequency-plane containers.
//!
//! All pixel data is `f64` on a nominal [0, 1] scale. Images store channels
//! as contiguous planes (channel-major), each plane row-major. Solvers never
//! clip; quantization happens only at PNG export.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Multi-channel raster with planar (channel-major, row-major) layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    /// Allocates a zero-filled image.
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Image {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    /// Wraps an existing buffer; its length must equal `channels * height * width`.
    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "buffer of {} values cannot hold {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Image {
            channels,
            height,
            width,
            data,
        })
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

    /// Total scalar count across all planes.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Reads a pixel with circular (wrap-around) coordinates.
    #[inline]
    pub fn get_wrapped(&self, c: usize, y: isize, x: isize) -> f64 {
        let yy = y.rem_euclid(self.height as isize) as usize;
        let xx = x.rem_euclid(self.width as isize) as usize;
        self.get(c, yy, xx)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Fails unless both images have identical channel count and extent.
    pub fn require_same_shape(&self, other: &Image) -> Result<()> {
        if self.channels != other.channels || self.height != other.height || self.width != other.width
        {
            return Err(Error::Dimension(format!(
                "shape {}x{}x{} vs {}x{}x{}",
                self.channels, self.height, self.width, other.channels, other.height, other.width
            )));
        }
        Ok(())
    }
}

/// Square odd-sized convolution kernel, row-major taps.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    size: usize,
    data: Vec<f64>,
}

impl Kernel {
    /// Uniform kernel with every tap `1 / k^2`.
    pub fn flat(size: usize) -> Result<Self> {
        Self::require_odd(size)?;
        let v = 1.0 / (size * size) as f64;
        Ok(Kernel {
            size,
            data: vec![v; size * size],
        })
    }

    /// Identity kernel: single unit tap at the center.
    pub fn delta(size: usize) -> Result<Self> {
        Self::require_odd(size)?;
        let mut data = vec![0.0; size * size];
        let c = (size - 1) / 2;
        data[c * size + c] = 1.0;
        Ok(Kernel { size, data })
    }

    pub fn from_vec(size: usize, data: Vec<f64>) -> Result<Self> {
        Self::require_odd(size)?;
        if data.len() != size * size {
            return Err(Error::Dimension(format!(
                "{} taps cannot form a {size}x{size} kernel",
                data.len()
            )));
        }
        Ok(Kernel { size, data })
    }

    fn require_odd(size: usize) -> Result<()> {
        if size == 0 || size % 2 == 0 {
            return Err(Error::Parameter(format!("kernel size {size} must be odd")));
        }
        Ok(())
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Center tap offset, `(k - 1) / 2` on both axes.
    pub fn center(&self) -> usize {
        (self.size - 1) / 2
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.data[u * self.size + v]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: f64) {
        self.data[u * self.size + v] = value;
    }

    pub fn taps(&self) -> &[f64] {
        &self.data
    }

    pub fn taps_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Kernel rotated by 180 degrees; adjoint of correlation is correlation with this.
    pub fn flipped(&self) -> Kernel {
        let mut data = self.data.clone();
        data.reverse();
        Kernel {
            size: self.size,
            data,
        }
    }
}

/// Full (unshifted) 2-D DFT plane of a single channel.
#[derive(Debug, Clone)]
pub struct Spectrum {
    height: usize,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    pub fn zeros(height: usize, width: usize) -> Self {
        Spectrum {
            height,
            width,
            data: vec![Complex64::new(0.0, 0.0); height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} bins cannot form a {height}x{width} spectrum",
                data.len()
            )));
        }
        Ok(Spectrum {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> Complex64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: Complex64) {
        self.data[y * self.width + x] = v;
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.data
    }

    pub fn bins_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }
}
