use super::{Image, Shape};
use crate::error::{shape_err, Error, Result};

/// Orientation of the 2x2 colour filter tile, listed row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BayerPattern {
    #[default]
    Rggb,
    Grbg,
    Gbrg,
    Bggr,
}

impl BayerPattern {
    /// Colour channel sampled at pixel `(x, y)`.
    pub fn channel_at(self, x: usize, y: usize) -> usize {
        let tile = match self {
            BayerPattern::Rggb => [0, 1, 1, 2],
            BayerPattern::Grbg => [1, 0, 2, 1],
            BayerPattern::Gbrg => [1, 2, 0, 1],
            BayerPattern::Bggr => [2, 1, 1, 0],
        };
        tile[(y % 2) * 2 + (x % 2)]
    }

    /// Offsets `(ox, oy)` of the stride-2 lattices carrying channel `c`.
    fn lattices(self, c: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for oy in 0..2 {
            for ox in 0..2 {
                if self.channel_at(ox, oy) == c {
                    out.push((ox, oy));
                }
            }
        }
        out
    }
}

impl std::str::FromStr for BayerPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rggb" => Ok(Self::Rggb),
            "grbg" => Ok(Self::Grbg),
            "gbrg" => Ok(Self::Gbrg),
            "bggr" => Ok(Self::Bggr),
            other => Err(Error::InvalidParameter(format!("unknown bayer pattern {other}"))),
        }
    }
}

/// Task-dependent linear forward operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearOperator {
    Identity {
        shape: Shape,
    },
    /// Gaussian blur (truncated at 4 sigma, normalized, zero padded) followed
    /// by stride-`scale` subsampling at the centre of each `scale`x`scale` cell.
    GaussianDownsample {
        shape: Shape,
        scale: usize,
        sigma: f64,
    },
    /// Colour filter array sampling of an RGB image.
    Bayer {
        shape: Shape,
        pattern: BayerPattern,
    },
}

impl LinearOperator {
    pub fn identity(shape: Shape) -> Self {
        LinearOperator::Identity { shape }
    }

    pub fn gaussian_downsample(shape: Shape, scale: usize, sigma: f64) -> Result<Self> {
        if scale == 0 || sigma <= 0.0 || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "downsample needs scale >= 1 and sigma > 0 (got {scale}, {sigma})"
            )));
        }
        if shape.width < scale || shape.height < scale {
            return Err(shape_err(format!("at least {scale}x{scale}"), shape));
        }
        Ok(LinearOperator::GaussianDownsample {
            shape,
            scale,
            sigma,
        })
    }

    pub fn bayer(shape: Shape, pattern: BayerPattern) -> Result<Self> {
        if shape.channels != 3 {
            return Err(shape_err("3 channels", shape.channels));
        }
        Ok(LinearOperator::Bayer { shape, pattern })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, LinearOperator::Identity { .. })
    }

    pub fn in_shape(&self) -> Shape {
        match self {
            LinearOperator::Identity { shape }
            | LinearOperator::GaussianDownsample { shape, .. }
            | LinearOperator::Bayer { shape, .. } => *shape,
        }
    }

    pub fn out_shape(&self) -> Shape {
        match self {
            LinearOperator::Identity { shape } => *shape,
            LinearOperator::GaussianDownsample { shape, scale, .. } => {
                Shape::new(shape.width / scale, shape.height / scale, shape.channels)
            }
            LinearOperator::Bayer { shape, .. } => Shape::new(shape.width, shape.height, 1),
        }
    }

    /// Same operator acting on a different input shape.
    pub fn with_shape(&self, shape: Shape) -> Result<Self> {
        match self {
            LinearOperator::Identity { .. } => Ok(Self::identity(shape)),
            LinearOperator::GaussianDownsample { scale, sigma, .. } => {
                Self::gaussian_downsample(shape, *scale, *sigma)
            }
            LinearOperator::Bayer { pattern, .. } => Self::bayer(shape, *pattern),
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        img.ensure_shape(self.in_shape())?;
        Ok(match self {
            LinearOperator::Identity { .. } => img.clone(),
            LinearOperator::GaussianDownsample { scale, sigma, .. } => {
                let blurred = gaussian_blur(img, &gaussian_taps(*sigma));
                let out_shape = self.out_shape();
                let off = (scale - 1) / 2;
                Image::from_fn(out_shape, |x, y, c| {
                    blurred.get(x * scale + off, y * scale + off, c)
                })
            }
            LinearOperator::Bayer { pattern, .. } => {
                Image::from_fn(self.out_shape(), |x, y, _| img.get(x, y, pattern.channel_at(x, y)))
            }
        })
    }

    pub fn apply_adjoint(&self, img: &Image) -> Result<Image> {
        img.ensure_shape(self.out_shape())?;
        Ok(match self {
            LinearOperator::Identity { .. } => img.clone(),
            LinearOperator::GaussianDownsample { scale, sigma, .. } => {
                let mut up = Image::zeros(self.in_shape());
                let off = (scale - 1) / 2;
                for y in 0..img.height() {
                    for x in 0..img.width() {
                        for c in 0..img.channels() {
                            up.set(x * scale + off, y * scale + off, c, img.get(x, y, c));
                        }
                    }
                }
                // symmetric taps with zero padding: the blur is self-adjoint
                gaussian_blur(&up, &gaussian_taps(*sigma))
            }
            LinearOperator::Bayer { pattern, .. } => {
                let mut out = Image::zeros(self.in_shape());
                for y in 0..img.height() {
                    for x in 0..img.width() {
                        out.set(x, y, pattern.channel_at(x, y), img.get(x, y, 0));
                    }
                }
                out
            }
        })
    }

    /// The initializer paired with this operator.
    pub fn default_init(&self) -> InitOperator {
        match self {
            LinearOperator::Identity { .. } => InitOperator::Identity,
            LinearOperator::GaussianDownsample { scale, .. } => {
                InitOperator::ScaledAdjoint((scale * scale) as f64)
            }
            LinearOperator::Bayer { .. } => InitOperator::Bicubic,
        }
    }
}

/// Maps an observation to the initial flow state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitOperator {
    Identity,
    /// Catmull-Rom interpolation of each colour lattice (demosaicing).
    Bicubic,
    /// `factor * A^T`.
    ScaledAdjoint(f64),
}

impl InitOperator {
    pub fn apply(&self, op: &LinearOperator, z: &Image) -> Result<Image> {
        z.ensure_shape(op.out_shape())?;
        match self {
            InitOperator::Identity => {
                if op.in_shape() != op.out_shape() {
                    return Err(shape_err(op.in_shape(), op.out_shape()));
                }
                Ok(z.clone())
            }
            InitOperator::ScaledAdjoint(f) => {
                let mut x = op.apply_adjoint(z)?;
                x.scale(*f);
                Ok(x)
            }
            InitOperator::Bicubic => match op {
                LinearOperator::Bayer { shape, pattern } => Ok(demosaic_bicubic(z, *shape, *pattern)),
                _ => Err(Error::InvalidParameter(
                    "bicubic initialization is defined for the Bayer operator".into(),
                )),
            },
        }
    }
}

pub(crate) fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= s;
    }
    taps
}

/// Separable correlation with symmetric `taps`, zero padding.
fn gaussian_blur(img: &Image, taps: &[f64]) -> Image {
    let r = (taps.len() / 2) as isize;
    let (w, h, ch) = (img.width() as isize, img.height() as isize, img.channels());
    let mut tmp = Image::zeros(img.shape());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sx = x + k as isize - r;
                    if sx >= 0 && sx < w {
                        acc += t * img.get(sx as usize, y as usize, c);
                    }
                }
                tmp.set(x as usize, y as usize, c, acc);
            }
        }
    }
    let mut out = Image::zeros(img.shape());
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, t) in taps.iter().enumerate() {
                    let sy = y + k as isize - r;
                    if sy >= 0 && sy < h {
                        acc += t * tmp.get(x as usize, sy as usize, c);
                    }
                }
                out.set(x as usize, y as usize, c, acc);
            }
        }
    }
    out
}

fn catmull_rom(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        1.5 * a * a * a - 2.5 * a * a + 1.0
    } else if a < 2.0 {
        -0.5 * a * a * a + 2.5 * a * a - 4.0 * a + 2.0
    } else {
        0.0
    }
}

/// Interpolates the samples of one stride-2 lattice with offset `(ox, oy)`.
fn lattice_bicubic(z: &Image, ox: usize, oy: usize, x: usize, y: usize) -> f64 {
    let (w, h) = (z.width(), z.height());
    let nx = (w - ox).div_ceil(2) as isize;
    let ny = (h - oy).div_ceil(2) as isize;
    let u = (x as f64 - ox as f64) / 2.0;
    let v = (y as f64 - oy as f64) / 2.0;
    let (bu, bv) = (u.floor() as isize, v.floor() as isize);
    let mut acc = 0.0;
    for n in (bv - 1)..=(bv + 2) {
        let wy = catmull_rom(v - n as f64);
        if wy == 0.0 {
            continue;
        }
        let sn = n.clamp(0, ny - 1) as usize;
        for m in (bu - 1)..=(bu + 2) {
            let wx = catmull_rom(u - m as f64);
            if wx == 0.0 {
                continue;
            }
            let sm = m.clamp(0, nx - 1) as usize;
            acc += wx * wy * z.get(ox + 2 * sm, oy + 2 * sn, 0);
        }
    }
    acc
}

fn demosaic_bicubic(z: &Image, shape: Shape, pattern: BayerPattern) -> Image {
    let lattices: Vec<Vec<(usize, usize)>> = (0..3).map(|c| pattern.lattices(c)).collect();
    Image::from_fn(shape, |x, y, c| {
        if pattern.channel_at(x, y) == c {
            return z.get(x, y, 0);
        }
        let l = &lattices[c];
        l.iter().map(|&(ox, oy)| lattice_bicubic(z, ox, oy, x, y)).sum::<f64>() / l.len() as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_image(shape: Shape, seed: u64) -> Image {
        let mut r = rng::stream(seed, "test");
        Image::from_fn(shape, |_, _, _| r.gen_range(-1.0..1.0))
    }

    fn adjoint_gap(op: &LinearOperator, seed: u64) -> f64 {
        let u = random_image(op.in_shape(), seed);
        let v = random_image(op.out_shape(), seed + 1);
        let lhs = op.apply(&u).unwrap().dot(&v);
        let rhs = u.dot(&op.apply_adjoint(&v).unwrap());
        (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-300)
    }

    #[test]
    fn identity_returns_input() {
        let img = random_image(Shape::new(5, 4, 2), 3);
        let op = LinearOperator::identity(img.shape());
        assert_eq!(op.apply(&img).unwrap(), img);
    }

    #[test]
    fn downsample_shapes() {
        let op = LinearOperator::gaussian_downsample(Shape::new(12, 12, 1), 3, 2.0).unwrap();
        assert_eq!(op.out_shape(), Shape::new(4, 4, 1));
        let out = op.apply(&Image::zeros(Shape::new(12, 12, 1))).unwrap();
        assert_eq!(out.shape(), Shape::new(4, 4, 1));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let op = LinearOperator::identity(Shape::new(4, 4, 1));
        assert!(op.apply(&Image::zeros(Shape::new(3, 4, 1))).is_err());
    }

    #[test]
    fn adjointness_holds_for_every_operator() {
        let ops = [
            LinearOperator::identity(Shape::new(8, 8, 1)),
            LinearOperator::gaussian_downsample(Shape::new(8, 8, 1), 2, 1.0).unwrap(),
            LinearOperator::gaussian_downsample(Shape::new(12, 9, 3), 3, 2.0).unwrap(),
            LinearOperator::bayer(Shape::new(6, 5, 3), BayerPattern::Rggb).unwrap(),
            LinearOperator::bayer(Shape::new(6, 5, 3), BayerPattern::Gbrg).unwrap(),
        ];
        for op in &ops {
            for trial in 0..100 {
                let gap = adjoint_gap(op, trial * 2);
                assert!(gap < 1e-10, "{op:?}: relative gap {gap}");
            }
        }
    }

    #[test]
    fn gaussian_taps_sum_to_one() {
        let t = gaussian_taps(2.0);
        assert_eq!(t.len(), 17);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn bicubic_init_keeps_samples_and_reproduces_constants() {
        let shape = Shape::new(8, 6, 3);
        let op = LinearOperator::bayer(shape, BayerPattern::Rggb).unwrap();
        let flat = Image::from_fn(shape, |_, _, c| 0.2 + 0.3 * c as f64);
        let z = op.apply(&flat).unwrap();
        let x0 = op.default_init().apply(&op, &z).unwrap();
        for (a, b) in x0.data().iter().zip(flat.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let rnd = random_image(shape, 9);
        let z = op.apply(&rnd).unwrap();
        let x0 = op.default_init().apply(&op, &z).unwrap();
        assert_eq!(op.apply(&x0).unwrap(), z);
    }

    #[test]
    fn scaled_adjoint_init_for_downsampling() {
        let op = LinearOperator::gaussian_downsample(Shape::new(9, 9, 1), 3, 2.0).unwrap();
        assert_eq!(op.default_init(), InitOperator::ScaledAdjoint(9.0));
        let z = random_image(op.out_shape(), 4);
        let x0 = op.default_init().apply(&op, &z).unwrap();
        let mut expect = op.apply_adjoint(&z).unwrap();
        expect.scale(9.0);
        assert_eq!(x0, expect);
    }
}
