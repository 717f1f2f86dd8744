//! Patch extraction, feature operators, proximal Sinkhorn transport and the
//! patch Wasserstein loss.

mod features;
mod loss;
mod patches;
mod sinkhorn;

pub use features::{ae_reconstruction_error, dct2_matrix, train_ae, FeatureKind, FeatureOp};
pub use loss::{transport_cost, wasserstein_loss, WassersteinConfig, WassersteinOutput};
pub use patches::{extract_patches, patch_positions, scatter_patches, subsample_indices, PatchSet};
pub use sinkhorn::{cost_matrix, round_to_marginals, sinkhorn_proximal, SinkhornConfig, TransportPlan, DENOM_FLOOR};
