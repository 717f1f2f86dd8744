//! `eval`: per-image and mean PSNR of reconstructions against references,
//! paired by file stem.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use energy_recon::imaging::{load_image, psnr_with, PsnrOptions};
use energy_recon::learn::image_files;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{field, num, Output};

pub const SCORES_HEADER: &str = "file,psnr";

fn by_stem(dir: &Path, key: &str) -> CliResult<BTreeMap<String, PathBuf>> {
    let files = image_files(dir).map_err(|e| CliError::Config(format!("{key}: {e}")))?;
    let mut map = BTreeMap::new();
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string();
        if let Some(prev) = map.insert(stem.clone(), f) {
            return Err(CliError::Config(format!("{key}: '{stem}' appears twice (also {})", prev.display())));
        }
    }
    if map.is_empty() {
        return Err(CliError::Config(format!("{key}: no images in {}", dir.display())));
    }
    Ok(map)
}

pub fn run(c: &Config) -> CliResult<()> {
    let recon = by_stem(&c.require_path("data.input")?, "data.input")?;
    let refs = by_stem(&c.require_path("data.reference")?, "data.reference")?;
    if !recon.keys().eq(refs.keys()) {
        let only: Vec<_> = recon.keys().filter(|k| !refs.contains_key(*k)).chain(refs.keys().filter(|k| !recon.contains_key(*k))).collect();
        return Err(CliError::Config(format!("image lists differ; unmatched: {only:?}")));
    }
    let opts = PsnrOptions { y_channel: c.bool("eval.y_channel"), border: c.usize("eval.border") };
    let out = Output::create(c)?;
    let mut rows = Vec::with_capacity(recon.len() + 1);
    let mut total = 0.0;
    for (stem, path) in &recon {
        let x = load_image(path)?;
        let y = load_image(&refs[stem])?;
        if x.shape() != y.shape() {
            return Err(CliError::Config(format!("{stem}: shapes {} and {} differ", x.shape(), y.shape())));
        }
        let p = psnr_with(&x.clamp01(), &y, opts)?;
        total += p;
        rows.push(vec![field(stem), num(p)]);
    }
    let mean = total / recon.len() as f64;
    rows.push(vec!["mean".to_string(), num(mean)]);
    out.csv("scores.csv", SCORES_HEADER, &rows)?;
    log::info!("mean PSNR {mean:.3} dB over {} images", recon.len());
    Ok(())
}
