//! `train-ae`: linear patch autoencoder and its error against the
//! truncated-SVD optimum.

use std::collections::BTreeMap;

use energy_recon::learn::{Checkpoint, NamedTensor};
use energy_recon::rng;
use energy_recon::transport::{ae_reconstruction_error, extract_patches, subsample_indices, train_ae, FeatureOp, PatchSet};
use nalgebra::DMatrix;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{num, Output};
use crate::setup::{self, AE_TENSOR};

pub const AE_HEADER: &str = "patch,dim,patches,error,svd_error";

/// Best rank-`dim` reconstruction error of the mean-removed blocks: the sum
/// of the discarded squared singular values.
pub fn svd_error(corpus: &PatchSet, dim: usize) -> CliResult<f64> {
    let n = corpus.patch * corpus.patch;
    let centred = FeatureOp::id(corpus.patch).apply(corpus)?;
    let rows = centred.rows.len() / n;
    let m = DMatrix::from_row_slice(rows, n, &centred.rows);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s.iter().skip(dim).map(|v| v * v).sum())
}

pub fn run(c: &Config) -> CliResult<()> {
    let imgs = setup::images(c, "data.input")?;
    let (patch, stride, dim) = (c.usize("ae.patch"), c.usize("ae.stride"), c.usize("ae.dim"));
    if patch < 2 || stride == 0 || dim == 0 || dim >= patch * patch {
        return Err(CliError::Config(format!("need ae.patch >= 2, ae.stride >= 1 and 1 <= ae.dim < {}", patch * patch)));
    }
    // one block per channel, so the encoder sees single-channel patches
    let mut sets = Vec::new();
    for img in &imgs {
        for k in 0..img.channels() {
            sets.push(extract_patches(&img.channel(k), patch, stride)?);
        }
    }
    let mut corpus = PatchSet::concat(&sets)?;
    let max = c.usize("ae.max_patches");
    if max > 0 && corpus.len() > max {
        let idx = subsample_indices(corpus.len(), max, &mut rng::stream(c.u64("run.seed"), "patches"));
        corpus = corpus.select(&idx);
    }
    let op = train_ae(&corpus, dim)?;
    let error = ae_reconstruction_error(&op, &corpus)?;
    let oracle = svd_error(&corpus, dim)?;
    let out = Output::create(c)?;
    let meta = BTreeMap::from([
        ("command".to_string(), c.command().to_string()),
        ("config_hash".to_string(), out.hash.clone()),
    ]);
    let ck = Checkpoint { meta, tensors: vec![NamedTensor::new(AE_TENSOR, vec![dim, patch * patch], op.matrix.clone())] };
    ck.save(out.path("ae.bin"))?;
    out.csv(
        "ae.csv",
        AE_HEADER,
        &[vec![patch.to_string(), dim.to_string(), corpus.len().to_string(), num(error), num(oracle)]],
    )?;
    log::info!("autoencoder error {error:.6e}, SVD optimum {oracle:.6e}");
    Ok(())
}
