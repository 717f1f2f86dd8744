//! `make-data`: clean/corrupted pairs plus a manifest.

use energy_recon::imaging::{save_image, synthetic, Image, NoiseModel, Shape};
use energy_recon::learn::image_files;
use energy_recon::{imaging::load_image, rng};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{field, num, Output};
use crate::setup;

pub const MANIFEST_HEADER: &str = "file,noise,sigma,seed,index,empirical_std";

/// Source images with their output stems.
fn sources(c: &Config) -> CliResult<Vec<(String, Image)>> {
    if let Some(dir) = c.path("data.input") {
        let files = image_files(&dir).map_err(|e| CliError::Config(format!("data.input: {e}")))?;
        if files.is_empty() {
            return Err(CliError::Config(format!("data.input: no images in {}", dir.display())));
        }
        return files
            .iter()
            .map(|f| {
                let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
                Ok((stem, load_image(f)?))
            })
            .collect();
    }
    let count = c.usize("data.synthetic");
    if count == 0 {
        return Err(CliError::Config("make-data needs data.input or data.synthetic > 0".into()));
    }
    let (size, channels) = (c.usize("data.size"), c.usize("data.channels"));
    if size < 8 || !matches!(channels, 1 | 3) {
        return Err(CliError::Config("data.size must be >= 8 and data.channels 1 or 3".into()));
    }
    let mut r = rng::stream(c.u64("run.seed"), "scenes");
    Ok((0..count).map(|i| (format!("{i:04}"), synthetic::scene(size, size, channels, &mut r))).collect())
}

/// Writes `clean/` (unless only observations are wanted), `observed/` and
/// `manifest.csv`. Image `i` is corrupted with its own indexed stream, so
/// adding images leaves earlier observations unchanged.
pub fn run(c: &Config) -> CliResult<()> {
    let noise = setup::parse_noise(c.str("data.noise"))?;
    let srcs = sources(c)?;
    let out = Output::create(c)?;
    let seed = c.u64("run.seed");
    let depth = setup::bit_depth(c);
    let ext = c.str("data.format");
    let model = NoiseModel::new(noise, seed)?;
    let sigma = match noise {
        energy_recon::imaging::NoiseKind::Gaussian { sigma } | energy_recon::imaging::NoiseKind::Laplace { sigma } => {
            num(sigma)
        }
        _ => String::new(),
    };
    let mut rows = Vec::with_capacity(srcs.len());
    for (i, (stem, clean)) in srcs.iter().enumerate() {
        let op = setup::operator(c, Shape::new(clean.width(), clean.height(), clean.channels()))?;
        let ideal = op.apply(clean)?;
        let mut r = rng::stream_indexed(seed, "data", i as u64);
        let z = model.corrupt_with(&ideal, &mut r)?;
        let mut diff = z.clone();
        diff.axpy(-1.0, &ideal);
        let n = diff.data().len() as f64;
        let mean = diff.data().iter().sum::<f64>() / n;
        let std = (diff.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !c.bool("data.observations_only") {
            save_image(clean, out.path(&format!("clean/{stem}.png")), depth)?;
        }
        let file = format!("{stem}.{ext}");
        save_image(&z, out.path(&format!("observed/{file}")), depth)?;
        rows.push(vec![field(&file), noise.label(), sigma.clone(), seed.to_string(), i.to_string(), num(std)]);
    }
    out.csv("manifest.csv", MANIFEST_HEADER, &rows)?;
    log::info!("wrote {} observations to {}", rows.len(), out.dir.display());
    Ok(())
}
