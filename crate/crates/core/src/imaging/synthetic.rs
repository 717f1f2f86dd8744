//! Procedural piecewise-smooth test scenes.
//!
//! Used where no photograph corpus is at hand: smooth shading, hard occlusion
//! edges and a little oriented texture, which is enough structure for a
//! learned regularizer to have something to find.

use rand::Rng as _;

use super::{Image, Shape};
use crate::rng::Rng;

enum Blob {
    Ellipse { cx: f64, cy: f64, rx: f64, ry: f64, rot: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

struct Layer {
    blob: Blob,
    base: f64,
    gx: f64,
    gy: f64,
    stripes: Option<(f64, f64, f64)>,
}

impl Layer {
    fn inside(&self, x: f64, y: f64) -> bool {
        match self.blob {
            Blob::Ellipse { cx, cy, rx, ry, rot } => {
                let (s, c) = rot.sin_cos();
                let dx = x - cx;
                let dy = y - cy;
                let u = c * dx + s * dy;
                let v = -s * dx + c * dy;
                (u / rx).powi(2) + (v / ry).powi(2) <= 1.0
            }
            Blob::Rect { x0, y0, x1, y1 } => x >= x0 && x <= x1 && y >= y0 && y <= y1,
        }
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        let mut v = self.base + self.gx * x + self.gy * y;
        if let Some((freq, angle, amp)) = self.stripes {
            let (s, c) = angle.sin_cos();
            v += amp * (freq * (c * x + s * y)).sin();
        }
        v
    }
}

/// Draws one `width`x`height` scene with `channels` channels in `[0.05, 0.95]`.
pub fn scene(width: usize, height: usize, channels: usize, rng: &mut Rng) -> Image {
    let n_layers = rng.gen_range(4..9);
    let mut layers = Vec::with_capacity(n_layers);
    let tint: Vec<f64> = (0..channels).map(|_| rng.gen_range(0.8..1.2)).collect();
    for _ in 0..n_layers {
        let blob = if rng.gen_bool(0.5) {
            Blob::Ellipse {
                cx: rng.gen_range(0.0..1.0),
                cy: rng.gen_range(0.0..1.0),
                rx: rng.gen_range(0.08..0.45),
                ry: rng.gen_range(0.08..0.45),
                rot: rng.gen_range(0.0..std::f64::consts::PI),
            }
        } else {
            let (xa, xb) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let (ya, yb) = (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            Blob::Rect {
                x0: f64::min(xa, xb),
                y0: f64::min(ya, yb),
                x1: f64::max(xa, xb).max(f64::min(xa, xb) + 0.1),
                y1: f64::max(ya, yb).max(f64::min(ya, yb) + 0.1),
            }
        };
        let stripes = rng.gen_bool(0.3).then(|| {
            (
                rng.gen_range(20.0..60.0),
                rng.gen_range(0.0..std::f64::consts::PI),
                rng.gen_range(0.02..0.08),
            )
        });
        layers.push(Layer {
            blob,
            base: rng.gen_range(0.1..0.9),
            gx: rng.gen_range(-0.3..0.3),
            gy: rng.gen_range(-0.3..0.3),
            stripes,
        });
    }
    let bg = Layer {
        blob: Blob::Rect { x0: -1.0, y0: -1.0, x1: 2.0, y1: 2.0 },
        base: rng.gen_range(0.2..0.8),
        gx: rng.gen_range(-0.3..0.3),
        gy: rng.gen_range(-0.3..0.3),
        stripes: None,
    };
    let shape = Shape::new(width, height, channels);
    Image::from_fn(shape, |x, y, c| {
        let (u, v) = ((x as f64 + 0.5) / width as f64, (y as f64 + 0.5) / height as f64);
        let top = layers.iter().rev().find(|l| l.inside(u, v)).unwrap_or(&bg);
        (top.value(u, v) * tint[c]).clamp(0.05, 0.95)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn scenes_are_bounded_and_reproducible() {
        let a = scene(32, 24, 1, &mut rng::stream(1, "scene"));
        let b = scene(32, 24, 1, &mut rng::stream(1, "scene"));
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| (0.05..=0.95).contains(v)));
        let mean = a.data().iter().sum::<f64>() / a.data().len() as f64;
        let var = a.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.data().len() as f64;
        assert!(var > 1e-4);
    }
}
