//! Construction of library objects from a validated [`Config`].

use std::path::Path;

use energy_recon::datafid::DataTerm;
use energy_recon::flow::{FlowConfig, Scheme};
use energy_recon::imaging::{BayerPattern, BitDepth, Image, InitOperator, LinearOperator, NoiseKind, Shape};
use energy_recon::learn::{load_dir, preimage_shape, AdamConfig, Branch, Checkpoint, LossKind, Problem, TrainConfig};
use energy_recon::tdv::TdvConfig;
use energy_recon::transport::{FeatureOp, SinkhornConfig, WassersteinConfig};

use crate::config::Config;
use crate::error::{CliError, CliResult};

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// `gaussian:25`, `laplace:25` (standard deviation in 8-bit levels),
/// `salt-pepper:0.5` (fraction), `poisson:4` (peak) or `mixture`.
pub fn parse_noise(text: &str) -> CliResult<NoiseKind> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n.trim(), Some(a.trim())),
        None => (text.trim(), None),
    };
    let num = || -> CliResult<f64> {
        arg.ok_or_else(|| cfg_err(format!("noise '{text}' needs a parameter")))?
            .parse::<f64>()
            .map_err(|_| cfg_err(format!("noise '{text}': bad parameter")))
    };
    let kind = match name {
        "gaussian" => NoiseKind::Gaussian { sigma: num()? / 255.0 },
        "laplace" => NoiseKind::Laplace { sigma: num()? / 255.0 },
        "salt-pepper" => NoiseKind::SaltPepper { fraction: num()? },
        "poisson" => NoiseKind::Poisson { peak: num()? },
        "mixture" if arg.is_none() => NoiseKind::Mixture,
        _ => return Err(cfg_err(format!("unknown noise '{text}'"))),
    };
    kind.validate()?;
    Ok(kind)
}

pub fn bit_depth(c: &Config) -> BitDepth {
    match c.str("run.bit_depth") {
        "8" => BitDepth::Eight,
        _ => BitDepth::Sixteen,
    }
}

/// Forward operator for reconstructions of shape `shape` (re-shaped per image later).
pub fn operator(c: &Config, shape: Shape) -> CliResult<LinearOperator> {
    Ok(match c.str("op.kind") {
        "identity" => LinearOperator::identity(shape),
        "downsample" => LinearOperator::gaussian_downsample(shape, c.usize("op.scale"), c.f64("op.sigma"))?,
        _ => {
            let pattern: BayerPattern = c.str("op.pattern").parse()?;
            LinearOperator::bayer(Shape::new(shape.width, shape.height, 3), pattern)?
        }
    })
}

/// Operator for observations of shape `obs`.
pub fn operator_for_observation(c: &Config, obs: Shape) -> CliResult<LinearOperator> {
    let probe = operator(c, Shape::new(8, 8, obs.channels))?;
    operator(c, preimage_shape(&probe, obs))
}

pub fn init_operator(c: &Config, op: &LinearOperator) -> InitOperator {
    match c.str("op.init") {
        "identity" => InitOperator::Identity,
        "bicubic" => InitOperator::Bicubic,
        "adjoint" => match op {
            LinearOperator::GaussianDownsample { scale, .. } => InitOperator::ScaledAdjoint((scale * scale) as f64),
            _ => InitOperator::ScaledAdjoint(1.0),
        },
        _ => op.default_init(),
    }
}

pub fn scheme(c: &Config) -> CliResult<Scheme> {
    Ok(c.str("flow.scheme").parse()?)
}

pub fn flow(c: &Config) -> CliResult<FlowConfig> {
    Ok(FlowConfig {
        scheme: scheme(c)?,
        steps: c.usize("flow.steps"),
        stop_time: c.f64("flow.stop_time"),
        t_max: c.f64("flow.t_max"),
        cg_iters: c.usize("flow.cg_iters"),
        cg_tol: c.f64("flow.cg_tol"),
    })
}

/// Data term `kind` in the form required by `scheme`: the semi-implicit
/// scheme needs proximal maps, the others need gradients.
pub fn data_term(c: &Config, kind: &str, scheme: Scheme, flow: &FlowConfig) -> CliResult<DataTerm> {
    let prox = match c.str("term.prox") {
        "true" => true,
        "false" => false,
        _ => scheme == Scheme::SemiImplicit,
    };
    let step = flow.step_size();
    let (q, knots, half) = (c.f64("term.q"), c.usize("term.knots"), c.usize("term.half"));
    if !(q > 0.0) || knots < 2 || half < 1 {
        return Err(cfg_err("term.q must be > 0, term.knots >= 2 and term.half >= 1"));
    }
    Ok(match (kind, prox) {
        ("l2", _) => DataTerm::scaled_l2(c.f64("term.scale"))?,
        ("frechet", false) => DataTerm::frechet(knots, q),
        ("frechet", true) => DataTerm::frechet_prox(knots, q, step),
        ("divergence", false) => DataTerm::divergence(half, q),
        ("divergence", true) => DataTerm::divergence_prox(half, q, step),
        (other, _) => return Err(cfg_err(format!("unknown data term '{other}'"))),
    })
}

/// Rejects data terms the scheme cannot use.
pub fn check_term(term: &DataTerm, scheme: Scheme) -> CliResult<()> {
    let is_l2 = term.name() == "l2";
    match (scheme, term.prox_mode) {
        (Scheme::SemiImplicit, false) if !is_l2 => {
            Err(cfg_err(format!("the semi-implicit scheme needs a proximal {} term", term.name())))
        }
        (Scheme::Explicit | Scheme::EulerNewton, true) => {
            Err(cfg_err(format!("scheme {scheme} needs a gradient-form {} term, got a proximal map", term.name())))
        }
        _ => Ok(()),
    }
}

pub fn tdv(c: &Config, channels: usize) -> CliResult<TdvConfig> {
    let t = TdvConfig { channels, features: c.usize("tdv.features"), blocks: c.usize("tdv.blocks") };
    if t.features == 0 || t.blocks == 0 {
        return Err(cfg_err("tdv.features and tdv.blocks must be positive"));
    }
    Ok(t)
}

pub fn problem(c: &Config, channels: usize) -> CliResult<Problem> {
    let op = operator(c, Shape::new(8, 8, channels))?;
    let flow = flow(c)?;
    flow.validate(&op)?;
    Ok(Problem { init: init_operator(c, &op), op, flow })
}

pub fn train(c: &Config, lr_key: &str) -> CliResult<TrainConfig> {
    let loss: LossKind = c.str("train.loss").parse()?;
    let t = TrainConfig {
        adam: AdamConfig {
            lr: c.f64(lr_key),
            beta1: c.f64("train.beta1"),
            beta2: c.f64("train.beta2"),
            eps: c.f64("train.eps"),
        },
        batch: c.usize("train.batch"),
        iterations: c.usize("train.iterations"),
        loss,
        seed: c.u64("run.seed"),
        crop: c.usize("train.crop"),
        eval_interval: c.usize("train.eval_interval"),
        decay_every: c.usize("train.decay_every"),
        decay_factor: c.f64("train.decay_factor"),
        augment: c.bool("train.augment"),
        check_invariants: c.bool("train.check_invariants"),
        wall_clock: c.bool("train.wall_clock"),
    };
    t.validate()?;
    let every = c.usize("train.checkpoint_every");
    if !every.is_multiple_of(t.eval_interval) {
        return Err(cfg_err("train.checkpoint_every must be a multiple of train.eval_interval"));
    }
    Ok(t)
}

pub fn wasserstein(c: &Config) -> CliResult<WassersteinConfig> {
    let w = WassersteinConfig {
        patch: c.usize("shared.patch"),
        stride: c.usize("shared.stride"),
        p: c.f64("shared.p"),
        sinkhorn: SinkhornConfig { beta: c.f64("shared.beta"), iters: c.usize("shared.iters") },
    };
    if w.patch < 2 || w.stride == 0 || !(w.p >= 1.0) || !(w.sinkhorn.beta > 0.0) || w.sinkhorn.iters == 0 {
        return Err(cfg_err("need shared.patch >= 2, shared.stride >= 1, shared.p >= 1, shared.beta > 0, shared.iters >= 1"));
    }
    Ok(w)
}

pub const AE_TENSOR: &str = "ae.encoder";

pub fn features(c: &Config) -> CliResult<FeatureOp> {
    let patch = c.usize("shared.patch");
    Ok(match c.str("shared.features") {
        "id" => FeatureOp::id(patch),
        "dct" => FeatureOp::dct(patch),
        _ => {
            let path = c.require_path("shared.ae")?;
            let ck = Checkpoint::load(&path)?;
            let t = ck.tensor(AE_TENSOR)?;
            let [rows, cols] = t.shape[..] else {
                return Err(cfg_err(format!("{}: encoder must be a matrix", path.display())));
            };
            if cols != patch * patch {
                return Err(cfg_err(format!("{}: encoder is for {cols}-pixel patches, shared.patch = {patch}", path.display())));
            }
            FeatureOp::ae(patch, &nalgebra::DMatrix::from_row_slice(rows, cols, &t.data))?
        }
    })
}

pub fn branch(name: &str) -> Branch {
    match name {
        "unsup" => Branch::Unsupervised,
        _ => Branch::Supervised,
    }
}

/// Loads every image of a directory that must exist and be non-empty.
pub fn images(c: &Config, key: &str) -> CliResult<Vec<Image>> {
    let dir = c.require_path(key)?;
    images_in(&dir, key)
}

pub fn images_in(dir: &Path, key: &str) -> CliResult<Vec<Image>> {
    if !dir.is_dir() {
        return Err(cfg_err(format!("{key}: {} is not a directory", dir.display())));
    }
    let imgs = load_dir(dir)?;
    if imgs.is_empty() {
        return Err(cfg_err(format!("{key}: no images in {}", dir.display())));
    }
    Ok(imgs)
}

/// Common channel count of a set of images.
pub fn channels(imgs: &[Image], key: &str) -> CliResult<usize> {
    let c = imgs[0].channels();
    if imgs.iter().any(|i| i.channels() != c) {
        return Err(cfg_err(format!("{key}: images mix channel counts")));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_specs() {
        assert_eq!(parse_noise("gaussian:25").unwrap(), NoiseKind::Gaussian { sigma: 25.0 / 255.0 });
        assert_eq!(parse_noise("laplace: 10").unwrap(), NoiseKind::Laplace { sigma: 10.0 / 255.0 });
        assert_eq!(parse_noise("salt-pepper:0.5").unwrap(), NoiseKind::SaltPepper { fraction: 0.5 });
        assert_eq!(parse_noise("poisson:4").unwrap(), NoiseKind::Poisson { peak: 4.0 });
        assert_eq!(parse_noise("mixture").unwrap(), NoiseKind::Mixture);
        for bad in ["gaussian", "gaussian:x", "salt-pepper:2", "pink:3", "mixture:1"] {
            assert!(matches!(parse_noise(bad), Err(CliError::Config(_))), "{bad}");
        }
    }

    #[test]
    fn scheme_term_compatibility() {
        let l2 = DataTerm::scaled_l2(1.0).unwrap();
        for s in [Scheme::Explicit, Scheme::SemiImplicit, Scheme::EulerNewton] {
            assert!(check_term(&l2, s).is_ok());
        }
        assert!(check_term(&DataTerm::frechet(31, 2.0), Scheme::SemiImplicit).is_err());
        assert!(check_term(&DataTerm::frechet_prox(31, 2.0, 0.1), Scheme::Explicit).is_err());
        assert!(check_term(&DataTerm::frechet_prox(31, 2.0, 0.1), Scheme::SemiImplicit).is_ok());
    }
}
