use super::{Image, Shape};
use crate::error::{shape_err, Result};

/// Evaluation variants used by super-resolution benchmarks.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PsnrOptions {
    /// Score the BT.601 luma of RGB images instead of all channels.
    pub y_channel: bool,
    /// Pixels removed from every side before scoring.
    pub border: usize,
}

pub fn mse(x: &Image, y: &Image) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(shape_err(x.shape(), y.shape()));
    }
    let n = x.data().len() as f64;
    Ok(x.data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// Peak signal-to-noise ratio for peak 1.0; `+inf` when the images agree.
pub fn psnr(x: &Image, y: &Image) -> Result<f64> {
    let e = mse(x, y)?;
    Ok(if e == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * e.log10()
    })
}

pub fn psnr_with(x: &Image, y: &Image, opts: PsnrOptions) -> Result<f64> {
    if x.shape() != y.shape() {
        return Err(shape_err(x.shape(), y.shape()));
    }
    let (mut a, mut b) = (x.clone(), y.clone());
    if opts.border > 0 {
        a = a.crop(opts.border)?;
        b = b.crop(opts.border)?;
    }
    if opts.y_channel && a.channels() == 3 {
        a = luma(&a);
        b = luma(&b);
    }
    psnr(&a, &b)
}

fn luma(img: &Image) -> Image {
    let shape = Shape::new(img.width(), img.height(), 1);
    Image::from_fn(shape, |x, y, _| {
        (16.0 + 65.481 * img.get(x, y, 0) + 128.553 * img.get(x, y, 1) + 24.966 * img.get(x, y, 2))
            / 255.0
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    #[test]
    fn identical_images_give_infinity() {
        let x = Image::filled(Shape::new(3, 3, 1), 0.3);
        assert_eq!(psnr(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn uniform_offset_of_a_tenth_is_20db() {
        let x = Image::filled(Shape::new(4, 4, 1), 0.3);
        let y = x.map(|v| v + 0.1);
        assert!((psnr(&x, &y).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn matches_direct_mse_and_is_symmetric() {
        let mut r = rng::stream(1, "psnr");
        let shape = Shape::new(9, 7, 3);
        let x = Image::from_fn(shape, |_, _, _| r.gen());
        let y = Image::from_fn(shape, |_, _, _| r.gen());
        let mut acc = 0.0;
        for i in 0..shape.len() {
            acc += (x.data()[i] - y.data()[i]).powi(2);
        }
        let direct = 10.0 * (1.0 / (acc / shape.len() as f64)).log10();
        assert!((psnr(&x, &y).unwrap() - direct).abs() < 1e-12);
        assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
    }

    #[test]
    fn decreasing_in_perturbation() {
        let x = Image::filled(Shape::new(4, 4, 1), 0.5);
        let mut last = f64::INFINITY;
        for k in 1..20 {
            let p = psnr(&x, &x.map(|v| v + 0.01 * k as f64)).unwrap();
            assert!(p < last);
            last = p;
        }
    }

    #[test]
    fn border_and_luma_options() {
        let shape = Shape::new(6, 6, 3);
        let x = Image::filled(shape, 0.5);
        let mut y = x.clone();
        y.set(0, 0, 0, 0.9); // only in the border
        assert_eq!(
            psnr_with(&x, &y, PsnrOptions { y_channel: true, border: 1 }).unwrap(),
            f64::INFINITY
        );
        let p = psnr_with(&x, &y, PsnrOptions { y_channel: true, border: 0 }).unwrap();
        let d: f64 = 65.481 * 0.4 / 255.0;
        let expected = -10.0 * (d * d / 36.0).log10();
        assert!((p - expected).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch() {
        let x = Image::zeros(Shape::new(2, 2, 1));
        let y = Image::zeros(Shape::new(2, 3, 1));
        assert!(psnr(&x, &y).is_err());
    }
}
