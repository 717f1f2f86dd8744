//! `train-sup` and `train-shared`.

use std::collections::BTreeMap;

use energy_recon::datafid::DataTermKind;
use energy_recon::flow::FlowConfig;
use energy_recon::learn::{
    control_from_checkpoint, Branch, Checkpoint, ControlParams, Objective, Problem, SharedConfig, Supervised,
    TrainConfig, Trainer, Unsupervised, ValidationSet,
};
use energy_recon::tdv::TdvParams;
use energy_recon::transport::{extract_patches, subsample_indices, PatchSet};
use energy_recon::{rng, Image};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::Output;
use crate::setup;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Supervised,
    Shared,
}

fn meta(c: &Config, out: &Output) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("command".to_string(), c.command().to_string()),
        ("config_hash".to_string(), out.hash.clone()),
        ("scheme".to_string(), setup::scheme(c).map(|s| s.to_string()).unwrap_or_default()),
    ])
}

/// Controls of a fresh run: a checkpoint given by `train.init`, or a new
/// network. Shared runs copy the supervised branch into the unsupervised
/// one and take `α` and (optionally) the data term kind from the config.
fn initial_controls(c: &Config, mode: Mode, problem: &Problem, channels: usize) -> CliResult<ControlParams> {
    let scheme = problem.flow.scheme;
    let mut control = match c.path("train.init") {
        Some(p) => control_from_checkpoint(&Checkpoint::load(&p)?)?,
        None if mode == Mode::Shared => {
            return Err(CliError::Config("train-shared needs train.init (a supervised checkpoint) or train.resume".into()))
        }
        None => {
            let term = setup::data_term(c, c.str("term.kind"), scheme, &problem.flow)?;
            let tdv = TdvParams::init(setup::tdv(c, channels)?, &mut rng::stream(c.u64("run.seed"), "init"))?;
            ControlParams::new(problem.flow.stop_time, term, tdv, 1.0)
        }
    };
    if control.tdv.config.channels != channels {
        return Err(CliError::Config(format!(
            "train.init has a {}-channel regularizer, the data has {channels} channels",
            control.tdv.config.channels
        )));
    }
    if mode == Mode::Shared {
        control.t_unsup = control.t_sup;
        control.term_unsup = match c.str("shared.term") {
            "same" => control.term_sup.clone(),
            kind => {
                // a learned proximal map starts at the supervised branch's ℓ² step
                let scale = match control.term_sup.kind {
                    DataTermKind::ScaledL2 { scale } => scale,
                    _ => 1.0,
                };
                let fc = FlowConfig { stop_time: control.t_sup * scale, ..problem.flow.clone() };
                setup::data_term(c, kind, scheme, &fc)?
            }
        };
        control.alpha = c.f64("shared.alpha");
    }
    setup::check_term(&control.term_sup, scheme)?;
    setup::check_term(&control.term_unsup, scheme)?;
    Ok(control)
}

/// Feature rows of every reference image, optionally subsampled.
fn reference_pool(c: &Config, shared: &SharedConfig) -> CliResult<PatchSet> {
    let refs = setup::images(c, "data.refs")?;
    let w = &shared.wasserstein;
    let sets = refs
        .iter()
        .map(|im| shared.features.apply(&extract_patches(im, w.patch, w.stride)?))
        .collect::<energy_recon::Result<Vec<_>>>()?;
    let pool = PatchSet::concat(&sets)?;
    let keep = c.usize("shared.refs");
    if keep == 0 || keep >= pool.len() {
        return Ok(pool);
    }
    let idx = subsample_indices(pool.len(), keep, &mut rng::stream(c.u64("run.seed"), "patches"));
    Ok(pool.select(&idx))
}

fn validation(c: &Config, problem: &Problem, mode: Mode) -> CliResult<Option<ValidationSet>> {
    let Some(dir) = c.path("data.val") else {
        return Ok(None);
    };
    let clean = setup::images_in(&dir, "data.val")?;
    let noise = match c.str("val.noise") {
        "" => setup::parse_noise(c.str("data.noise"))?,
        text => setup::parse_noise(text)?,
    };
    let branch = match (c.str("val.branch"), mode) {
        ("sup", _) | ("auto", Mode::Supervised) => Branch::Supervised,
        _ => Branch::Unsupervised,
    };
    let crop = match c.usize("val.crop") {
        0 => None,
        n => Some(n),
    };
    let count = c.usize("val.count");
    if count == 0 {
        return Err(CliError::Config("val.count must be positive".into()));
    }
    Ok(Some(ValidationSet::generate(&clean, problem, noise, crop, count, c.u64("run.seed"), branch)?))
}

fn save(trainer: &Trainer, meta: &BTreeMap<String, String>, out: &Output, name: &str) -> CliResult<()> {
    let path = out.path(name);
    trainer.to_checkpoint(meta).save(&path)?;
    Ok(())
}

pub fn run(c: &Config, mode: Mode) -> CliResult<()> {
    let clean = setup::images(c, "data.train")?;
    let channels = setup::channels(&clean, "data.train")?;
    let problem = setup::problem(c, channels)?;
    let lr_key = if mode == Mode::Shared { "shared.lr" } else { "train.lr" };
    let cfg: TrainConfig = setup::train(c, lr_key)?;
    let noise = setup::parse_noise(c.str("data.noise"))?;
    let mut trainer = match c.path("train.resume") {
        Some(p) => Trainer::from_checkpoint(&Checkpoint::load(&p)?)?,
        None => Trainer::new(initial_controls(c, mode, &problem, channels)?),
    };
    let sup = Supervised { clean: &clean, noise };
    let observations: Vec<Image>;
    let pool: PatchSet;
    let objective = match mode {
        Mode::Supervised => Objective::Supervised(sup),
        Mode::Shared => {
            observations = setup::images(c, "data.unsup")?;
            let shared = SharedConfig {
                wasserstein: setup::wasserstein(c)?,
                features: setup::features(c)?,
                batch: c.usize("shared.batch"),
                crop: c.usize("shared.crop"),
            };
            if shared.batch == 0 || shared.crop < 8 {
                return Err(CliError::Config("shared.batch must be positive and shared.crop >= 8".into()));
            }
            pool = reference_pool(c, &shared)?;
            Objective::Shared { sup, unsup: Unsupervised { observations: &observations, references: &pool }, cfg: shared }
        }
    };
    let val = validation(c, &problem, mode)?;
    let out = Output::create(c)?;
    let meta = meta(c, &out);
    let every = c.usize("train.checkpoint_every");
    if let Some(v) = &val {
        log::info!("validation baseline PSNR {:.3} dB", v.baseline_psnr(&problem)?);
    }
    let result = trainer.train(&objective, &problem, &cfg, val.as_ref(), |t| {
        let row = t.history.last().expect("row just pushed");
        log::info!("iteration {} loss {:.6} val_psnr {:?}", row.iteration, row.loss, row.val_psnr);
        out.write_io("metrics.csv", &t.metrics_csv())?;
        if every > 0 && t.iteration % every == 0 {
            t.to_checkpoint(&meta).save(out.path(&format!("checkpoint-{}.bin", t.iteration)))?;
        }
        Ok(())
    });
    if let Err(e) = result {
        // keep the last consistent state for inspection before failing
        save(&trainer, &meta, &out, "checkpoint-failed.bin")?;
        return Err(e.into());
    }
    out.write("metrics.csv", &trainer.metrics_csv())?;
    save(&trainer, &meta, &out, "checkpoint.bin")?;
    if !trainer.invariant_failures.is_empty() {
        log::warn!(
            "{} of {} invariant checks failed; first: {}",
            trainer.invariant_failures.len(),
            trainer.invariant_checks,
            trainer.invariant_failures[0]
        );
    }
    Ok(())
}
