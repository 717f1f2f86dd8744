use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use super::patches::PatchSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    /// Patch minus its mean.
    Id,
    /// Orthonormal 2D DCT-II without the constant coefficient.
    Dct,
    /// Linear encoder applied after [`FeatureKind::Id`].
    Ae,
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "id" => Ok(Self::Id),
            "dct" => Ok(Self::Dct),
            "ae" => Ok(Self::Ae),
            other => Err(Error::InvalidParameter(format!("unknown feature operator '{other}' (id, dct, ae)"))),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Id => "id",
            Self::Dct => "dct",
            Self::Ae => "ae",
        })
    }
}

/// A linear map from one `patch × patch` channel block to `out_dim`
/// features, applied blockwise to multichannel rows. Every kind annihilates
/// constant blocks, so features are invariant to adding a constant.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureOp {
    pub kind: FeatureKind,
    pub patch: usize,
    pub out_dim: usize,
    /// `out_dim × patch²`, row-major.
    pub matrix: Vec<f64>,
}

/// `I - 11ᵀ/n`.
fn centering(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - 1.0 / n as f64)
}

/// Orthonormal 1D DCT-II matrix; row `k` is the `k`-th basis vector.
fn dct1(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |k, i| {
        let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
        s * (PI * (i as f64 + 0.5) * k as f64 / n as f64).cos()
    })
}

/// Orthonormal 2D DCT-II on row-major `n × n` blocks, constant row first.
pub fn dct2_matrix(n: usize) -> DMatrix<f64> {
    dct1(n).kronecker(&dct1(n))
}

impl FeatureOp {
    fn from_matrix(kind: FeatureKind, patch: usize, m: &DMatrix<f64>) -> Self {
        let matrix = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)])).collect();
        Self { kind, patch, out_dim: m.nrows(), matrix }
    }

    pub fn id(patch: usize) -> Self {
        Self::from_matrix(FeatureKind::Id, patch, &centering(patch * patch))
    }

    pub fn dct(patch: usize) -> Self {
        let d = dct2_matrix(patch);
        Self::from_matrix(FeatureKind::Dct, patch, &d.rows(1, d.nrows() - 1).into_owned())
    }

    /// Composes an `out_dim × patch²` encoder with [`FeatureOp::id`].
    pub fn ae(patch: usize, encoder: &DMatrix<f64>) -> Result<Self> {
        let n = patch * patch;
        if encoder.ncols() != n || encoder.nrows() == 0 || encoder.nrows() > n - 1 {
            return Err(Error::InvalidParameter(format!(
                "encoder is {}x{}, expected at most {}x{n}",
                encoder.nrows(),
                encoder.ncols(),
                n - 1
            )));
        }
        Ok(Self::from_matrix(FeatureKind::Ae, patch, &(encoder * centering(n))))
    }

    pub fn in_dim(&self) -> usize {
        self.patch * self.patch
    }

    fn blocks(&self, dim: usize) -> Result<usize> {
        let n = self.in_dim();
        if dim == 0 || !dim.is_multiple_of(n) {
            return Err(Error::InvalidParameter(format!("row length {dim} is not a multiple of {n}")));
        }
        Ok(dim / n)
    }

    pub fn apply(&self, set: &PatchSet) -> Result<PatchSet> {
        let (n, m) = (self.in_dim(), self.out_dim);
        let blocks = self.blocks(set.dim)?;
        let mut rows = Vec::with_capacity(set.len() * blocks * m);
        for block in set.rows.chunks_exact(n) {
            for k in 0..m {
                let r = &self.matrix[k * n..(k + 1) * n];
                rows.push(r.iter().zip(block).map(|(a, b)| a * b).sum());
            }
        }
        PatchSet::new(set.patch, blocks * m, rows)
    }

    /// Transpose of [`FeatureOp::apply`], mapping feature cotangents to pixels.
    pub fn adjoint(&self, grads: &PatchSet) -> Result<PatchSet> {
        let (n, m) = (self.in_dim(), self.out_dim);
        if !grads.dim.is_multiple_of(m) {
            return Err(Error::InvalidParameter(format!("row length {} is not a multiple of {m}", grads.dim)));
        }
        let blocks = grads.dim / m;
        let mut rows = vec![0.0; grads.len() * blocks * n];
        for (g, out) in grads.rows.chunks_exact(m).zip(rows.chunks_exact_mut(n)) {
            for (k, gk) in g.iter().enumerate() {
                let r = &self.matrix[k * n..(k + 1) * n];
                out.iter_mut().zip(r).for_each(|(o, a)| *o += gk * a);
            }
        }
        PatchSet::new(grads.patch, blocks * n, rows)
    }
}

/// Linear autoencoder optimum: the encoder whose rows span the top `out_dim`
/// principal directions of the mean-removed corpus blocks.
pub fn train_ae(corpus: &PatchSet, out_dim: usize) -> Result<FeatureOp> {
    let patch = corpus.patch;
    let n = patch * patch;
    if out_dim == 0 || out_dim > n - 1 {
        return Err(Error::InvalidParameter(format!("encoder dimension {out_dim} outside 1..={}", n - 1)));
    }
    let id = FeatureOp::id(patch);
    let centred = id.apply(corpus)?;
    let mut gram = DMatrix::<f64>::zeros(n, n);
    for b in centred.rows.chunks_exact(n) {
        let v = nalgebra::DVector::from_column_slice(b);
        gram.ger(1.0, &v, &v, 1.0);
    }
    // diagonalize in the DCT coordinates without the constant, so encoder
    // rows are orthogonal to constants even for rank-deficient corpora
    let basis = FeatureOp::dct(patch);
    let d = DMatrix::from_row_slice(n - 1, n, &basis.matrix);
    let eig = SymmetricEigen::new(&d * gram * d.transpose());
    let mut order: Vec<usize> = (0..n - 1).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = DMatrix::from_fn(out_dim, n - 1, |i, j| eig.eigenvectors[(j, order[i])]);
    let encoder = top * d;
    FeatureOp::ae(patch, &encoder)
}

/// `Σ ‖EᵀE x - x‖²` over the mean-removed blocks of `corpus`.
pub fn ae_reconstruction_error(op: &FeatureOp, corpus: &PatchSet) -> Result<f64> {
    let centred = FeatureOp::id(op.patch).apply(corpus)?;
    let back = op.adjoint(&op.apply(&centred)?)?;
    Ok(back.rows.iter().zip(&centred.rows).map(|(a, b)| (a - b) * (a - b)).sum())
}
