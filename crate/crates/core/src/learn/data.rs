use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::error::{shape_err, Error, Result};
use crate::imaging::{load_image, Image, LinearOperator, Shape};
use crate::rng::Rng;

/// Image files (`png`, `pgm`, `ppm`, `pnm`, `pfm`) of a directory, sorted by name.
pub fn image_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Unreadable {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    for e in entries {
        let p = e?.path();
        let ext = p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if matches!(ext.as_deref(), Some("png" | "pgm" | "ppm" | "pnm" | "pfm")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Image>> {
    image_files(dir)?.iter().map(load_image).collect()
}

/// A rotation by a multiple of 90° and an optional mirror.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Augmentation {
    pub quarter_turns: u8,
    pub flip: bool,
}

impl Augmentation {
    pub fn draw(rng: &mut Rng) -> Self {
        Self { quarter_turns: rng.gen_range(0..4), flip: rng.gen() }
    }

    pub fn apply(&self, img: &Image) -> Image {
        img.rot90_flip(self.quarter_turns, self.flip)
    }
}

/// Uniform random `size × size` window with corners on multiples of `align`.
pub fn random_crop(img: &Image, size: usize, align: usize, rng: &mut Rng) -> Result<Image> {
    if size > img.width() || size > img.height() {
        return Err(shape_err(format!("image of at least {size}x{size}"), img.shape()));
    }
    let pick = |extent: usize, rng: &mut Rng| rng.gen_range(0..=(extent - size) / align) * align;
    let x0 = pick(img.width(), rng);
    let y0 = pick(img.height(), rng);
    img.window(x0, y0, size, size)
}

/// Input shape of `op` whose output has shape `out`.
pub fn preimage_shape(op: &LinearOperator, out: Shape) -> Shape {
    match op {
        LinearOperator::Identity { .. } => out,
        LinearOperator::GaussianDownsample { scale, .. } => Shape::new(out.width * scale, out.height * scale, out.channels),
        LinearOperator::Bayer { .. } => Shape::new(out.width, out.height, 3),
    }
}

/// Crop alignment keeping the observation lattice (Bayer phase) intact.
pub fn observation_alignment(op: &LinearOperator) -> usize {
    match op {
        LinearOperator::Bayer { .. } => 2,
        _ => 1,
    }
}
