use super::features::FeatureOp;
use super::patches::{extract_patches, scatter_patches, subsample_indices, PatchSet};
use super::sinkhorn::{cost_matrix, lp_distance_grad, sinkhorn_proximal, SinkhornConfig, TransportPlan};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WassersteinConfig {
    pub patch: usize,
    pub stride: usize,
    /// Norm order of the ground cost.
    pub p: f64,
    pub sinkhorn: SinkhornConfig,
}

impl Default for WassersteinConfig {
    fn default() -> Self {
        Self { patch: 6, stride: 3, p: 1.0, sinkhorn: SinkhornConfig::default() }
    }
}

#[derive(Debug, Clone)]
pub struct WassersteinOutput {
    pub loss: f64,
    /// Gradient with respect to each reconstruction, plan held fixed.
    pub grads: Vec<Image>,
    pub plan: TransportPlan,
    /// Windows that entered the transport problem, indexing the
    /// concatenation of all reconstructions' windows.
    pub selected: Vec<usize>,
    /// Number of reference rows used (a prefix of the given set).
    pub references: usize,
}

fn all_patches(recons: &[Image], cfg: &WassersteinConfig) -> Result<PatchSet> {
    if recons.is_empty() {
        return Err(Error::EmptyBatch("no reconstructions".into()));
    }
    let sets = recons
        .iter()
        .map(|x| extract_patches(x, cfg.patch, cfg.stride))
        .collect::<Result<Vec<_>>>()?;
    PatchSet::concat(&sets)
}

/// `tr(CᵀP)` between the features of the `selected` windows of the batch
/// `recons` and `refs` for a fixed plan, with its gradient in pixel space.
pub fn transport_cost(
    recons: &[Image],
    refs: &PatchSet,
    op: &FeatureOp,
    cfg: &WassersteinConfig,
    selected: &[usize],
    plan: &nalgebra::DMatrix<f64>,
) -> Result<(f64, Vec<Image>)> {
    let raw = all_patches(recons, cfg)?.select(selected);
    let feats = op.apply(&raw)?;
    if feats.dim != refs.dim || plan.shape() != (feats.len(), refs.len()) {
        return Err(Error::InvalidParameter(format!(
            "plan {:?} does not match {} features of length {} against {} references of length {}",
            plan.shape(),
            feats.len(),
            feats.dim,
            refs.len(),
            refs.dim
        )));
    }
    let cost = cost_matrix(&feats, refs, cfg.p)?;
    let loss = cost.dot(plan);
    let mut g = PatchSet { rows: vec![0.0; feats.rows.len()], ..feats.clone() };
    for i in 0..feats.len() {
        let out = &mut g.rows[i * feats.dim..(i + 1) * feats.dim];
        for j in 0..refs.len() {
            let pij = plan[(i, j)];
            if pij != 0.0 {
                lp_distance_grad(feats.row(i), refs.row(j), cfg.p, pij, out);
            }
        }
    }
    let pixel = op.adjoint(&g)?;
    // route rows back to their images; `selected` is increasing
    let mut grads = Vec::with_capacity(recons.len());
    let (mut offset, mut k) = (0, 0);
    for x in recons {
        let count = crate::transport::patch_positions(x.shape(), cfg.patch, cfg.stride)?.len();
        let start = k;
        while k < selected.len() && selected[k] < offset + count {
            k += 1;
        }
        let local: Vec<usize> = selected[start..k].iter().map(|i| i - offset).collect();
        let rows = pixel.select(&(start..k).collect::<Vec<_>>());
        grads.push(scatter_patches(x.shape(), cfg.patch, cfg.stride, &local, &rows)?);
        offset += count;
    }
    Ok((loss, grads))
}

/// Patch Wasserstein loss between the pooled windows of a batch of
/// reconstructions and feature-space reference rows. With unequal counts
/// the windows are subsampled without replacement and the references
/// truncated, so both measures have `min` atoms.
pub fn wasserstein_loss(
    recons: &[Image],
    refs: &PatchSet,
    op: &FeatureOp,
    cfg: &WassersteinConfig,
    rng: &mut Rng,
) -> Result<WassersteinOutput> {
    if refs.is_empty() {
        return Err(Error::EmptyBatch("no reference patches".into()));
    }
    let raw = all_patches(recons, cfg)?;
    let n = raw.len().min(refs.len());
    let selected = subsample_indices(raw.len(), n, rng);
    let refs = if refs.len() > n { refs.select(&(0..n).collect::<Vec<_>>()) } else { refs.clone() };
    let feats = op.apply(&raw.select(&selected))?;
    let plan = sinkhorn_proximal(&cost_matrix(&feats, &refs, cfg.p)?, cfg.sinkhorn)?;
    let (loss, grads) = transport_cost(recons, &refs, op, cfg, &selected, &plan.plan)?;
    Ok(WassersteinOutput { loss, grads, plan, selected, references: n })
}
