//! Image containers, forward operators, noise synthesis, I/O and PSNR.

mod io;
mod metrics;
mod noise;
mod operator;
pub mod synthetic;

pub use io::{load_image, save_image, BitDepth};
pub use metrics::{mse, psnr, psnr_with, PsnrOptions};
pub use noise::{NoiseKind, NoiseModel};
pub use operator::{BayerPattern, InitOperator, LinearOperator};

use crate::error::{shape_err, Error, Result};

/// Spatial and channel extent of an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// A multi-channel raster stored as row-major, channel-interleaved `f64`.
///
/// Pixel `(x, y)` of channel `c` lives at `(y * width + x) * channels + c`.
/// Values are not clamped; flow states may leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let shape = Shape::new(width, height, channels);
        if data.len() != shape.len() {
            return Err(shape_err(
                format!("{} values for {shape}", shape.len()),
                data.len(),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Shape) -> Self {
        Self {
            shape,
            data: vec![0.0; shape.len()],
        }
    }

    pub fn filled(shape: Shape, value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for y in 0..shape.height {
            for x in 0..shape.width {
                for c in 0..shape.channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.shape.width + x) * self.shape.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.data[i] = v;
    }

    pub fn ensure_shape(&self, expected: Shape) -> Result<()> {
        if self.shape != expected {
            return Err(shape_err(expected, self.shape));
        }
        Ok(())
    }

    pub fn dot(&self, other: &Image) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Image {
        debug_assert_eq!(self.shape, other.shape);
        Image {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &Image) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn clamp01(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Extracts channel `c` as a single-channel image.
    pub fn channel(&self, c: usize) -> Image {
        let shape = Shape::new(self.width(), self.height(), 1);
        Image::from_fn(shape, |x, y, _| self.get(x, y, c))
    }

    /// Copies the `w`x`h` window with top-left corner `(x0, y0)`.
    pub fn window(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
        if x0 + w > self.width() || y0 + h > self.height() {
            return Err(shape_err(
                format!("window within {}", self.shape),
                format!("{w}x{h} at ({x0},{y0})"),
            ));
        }
        let shape = Shape::new(w, h, self.channels());
        Ok(Image::from_fn(shape, |x, y, c| self.get(x0 + x, y0 + y, c)))
    }

    /// Rotates by `quarter_turns * 90°` counter-clockwise, then mirrors
    /// horizontally when `flip` is set.
    pub fn rot90_flip(&self, quarter_turns: u8, flip: bool) -> Image {
        let mut img = self.clone();
        for _ in 0..(quarter_turns % 4) {
            let (w, h) = (img.width(), img.height());
            let shape = Shape::new(h, w, img.channels());
            // new(x, y) = old(w - 1 - y, x)
            img = Image::from_fn(shape, |x, y, c| img.get(w - 1 - y, x, c));
        }
        if flip {
            let w = img.width();
            img = Image::from_fn(img.shape, |x, y, c| img.get(w - 1 - x, y, c));
        }
        img
    }

    /// Reflect-pads by `margin` pixels on each side without repeating the
    /// edge pixel: the row `[a, b, c]` with margin 1 becomes `[b, a, b, c, b]`.
    pub fn pad_reflect(&self, margin: usize) -> Result<Image> {
        self.pad_reflect_sides(margin, margin, margin, margin)
    }

    /// Reflect-pads each side independently.
    pub fn pad_reflect_sides(
        &self,
        left: usize,
        right: usize,
        top: usize,
        bottom: usize,
    ) -> Result<Image> {
        let (w, h) = (self.width(), self.height());
        let largest = left.max(right).max(top).max(bottom);
        if largest > 0 && largest >= w.min(h) {
            return Err(Error::MarginTooLarge {
                margin: largest,
                width: w,
                height: h,
            });
        }
        let shape = Shape::new(w + left + right, h + top + bottom, self.channels());
        Ok(Image::from_fn(shape, |x, y, c| {
            let sx = reflect(x as isize - left as isize, w);
            let sy = reflect(y as isize - top as isize, h);
            self.get(sx, sy, c)
        }))
    }

    /// Removes `margin` pixels from each side.
    pub fn crop(&self, margin: usize) -> Result<Image> {
        self.crop_sides(margin, margin, margin, margin)
    }

    pub fn crop_sides(&self, left: usize, right: usize, top: usize, bottom: usize) -> Result<Image> {
        let (w, h) = (self.width(), self.height());
        if left + right >= w || top + bottom >= h {
            return Err(Error::MarginTooLarge {
                margin: left.max(right).max(top).max(bottom),
                width: w,
                height: h,
            });
        }
        self.window(left, top, w - left - right, h - top - bottom)
    }

    /// Adjoint of [`Image::crop_sides`]: embeds into a zero image.
    pub fn uncrop_sides(&self, left: usize, right: usize, top: usize, bottom: usize) -> Image {
        let shape = Shape::new(
            self.width() + left + right,
            self.height() + top + bottom,
            self.channels(),
        );
        let mut out = Image::zeros(shape);
        for y in 0..self.height() {
            for x in 0..self.width() {
                for c in 0..self.channels() {
                    out.set(x + left, y + top, c, self.get(x, y, c));
                }
            }
        }
        out
    }
}

/// Mirror index into `0..n` without edge repetition.
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - m;
    }
    m as usize
}
