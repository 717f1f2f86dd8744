use rand::seq::index;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::imaging::{Image, Shape};
use crate::rng::Rng;

/// `N` vectors of equal length stored row-major.
///
/// Raw patch rows hold the window pixels channel-major, then row-major
/// within each `patch × patch` block.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    pub patch: usize,
    pub dim: usize,
    pub rows: Vec<f64>,
}

impl PatchSet {
    pub fn new(patch: usize, dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || !rows.len().is_multiple_of(dim) || rows.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} values do not form rows of length {dim}",
                rows.len()
            )));
        }
        Ok(Self { patch, dim, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PatchSet {
        let rows = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        PatchSet { patch: self.patch, dim: self.dim, rows }
    }

    /// `count` rows drawn uniformly with replacement.
    pub fn sample(&self, count: usize, rng: &mut Rng) -> PatchSet {
        let n = self.len();
        let idx: Vec<usize> = (0..count).map(|_| rng.gen_range(0..n)).collect();
        self.select(&idx)
    }

    /// Concatenation of sets with equal row length.
    pub fn concat(sets: &[PatchSet]) -> Result<PatchSet> {
        let first = sets.first().ok_or_else(|| Error::EmptyBatch("no patch sets".into()))?;
        let mut rows = Vec::new();
        for s in sets {
            if s.dim != first.dim {
                return Err(Error::InvalidParameter(format!("row lengths {} and {} differ", first.dim, s.dim)));
            }
            rows.extend_from_slice(&s.rows);
        }
        Ok(PatchSet { patch: first.patch, dim: first.dim, rows })
    }
}

/// Top-left corners of all `patch × patch` windows at `stride`, row-major.
pub fn patch_positions(shape: Shape, patch: usize, stride: usize) -> Result<Vec<(usize, usize)>> {
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidParameter("patch size and stride must be positive".into()));
    }
    if patch > shape.width || patch > shape.height {
        return Err(Error::PatchTooLarge { patch, width: shape.width, height: shape.height });
    }
    let ys = (0..=shape.height - patch).step_by(stride);
    Ok(ys.flat_map(|y| (0..=shape.width - patch).step_by(stride).map(move |x| (x, y))).collect())
}

pub fn extract_patches(img: &Image, patch: usize, stride: usize) -> Result<PatchSet> {
    let pos = patch_positions(img.shape(), patch, stride)?;
    let c = img.channels();
    let mut rows = Vec::with_capacity(pos.len() * c * patch * patch);
    for &(x0, y0) in &pos {
        for ch in 0..c {
            for dy in 0..patch {
                for dx in 0..patch {
                    rows.push(img.get(x0 + dx, y0 + dy, ch));
                }
            }
        }
    }
    PatchSet::new(patch, c * patch * patch, rows)
}

/// Adjoint of [`extract_patches`] restricted to the windows `selected`:
/// overlapping contributions add up.
pub fn scatter_patches(
    shape: Shape,
    patch: usize,
    stride: usize,
    selected: &[usize],
    grads: &PatchSet,
) -> Result<Image> {
    let pos = patch_positions(shape, patch, stride)?;
    let mut out = Image::zeros(shape);
    for (k, &i) in selected.iter().enumerate() {
        let (x0, y0) = pos[i];
        let g = grads.row(k);
        let mut t = 0;
        for ch in 0..shape.channels {
            for dy in 0..patch {
                for dx in 0..patch {
                    let idx = out.index(x0 + dx, y0 + dy, ch);
                    out.data_mut()[idx] += g[t];
                    t += 1;
                }
            }
        }
    }
    Ok(out)
}

/// `count` distinct indices out of `0..n`, in increasing order, or all of
/// them when `count ≥ n`.
pub fn subsample_indices(n: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    if count >= n {
        return (0..n).collect();
    }
    let mut idx = index::sample(rng, n, count).into_vec();
    idx.sort_unstable();
    idx
}
