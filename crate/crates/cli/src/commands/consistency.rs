//! `consistency`: terminal-state error against a fine reference rollout as
//! the step count grows, with fixed controls.

use energy_recon::flow::{loglog_slope, terminal_errors, Energy, FlowConfig, Scheme};
use energy_recon::learn::{control_from_checkpoint, Checkpoint};

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{num, Output};
use crate::setup;

pub const CONSISTENCY_HEADER: &str = "scheme,steps,error,slope";

/// Per-step-count errors (averaged over the images) for one scheme.
pub struct Study {
    pub scheme: Scheme,
    pub steps: Vec<usize>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

pub fn study(c: &Config) -> CliResult<Vec<Study>> {
    let control = control_from_checkpoint(&Checkpoint::load(c.require_path("run.checkpoint")?)?)?;
    let branch = setup::branch(c.str("consistency.branch"));
    let steps: Vec<usize> = c.list("consistency.steps")?;
    let reference = c.usize("consistency.reference");
    if steps.len() < 2 || steps.contains(&0) || reference == 0 {
        return Err(CliError::Config("consistency.steps needs two or more positive counts and a positive reference".into()));
    }
    let schemes: Vec<Scheme> = c.list("consistency.schemes")?;
    let count = c.usize("consistency.images");
    let imgs = setup::images(c, "data.input")?;
    if count == 0 || count > imgs.len() {
        return Err(CliError::Config(format!("consistency.images must be in 1..={}", imgs.len())));
    }
    let base = setup::flow(c)?;
    let mut out = Vec::with_capacity(schemes.len());
    for scheme in schemes {
        let fc = FlowConfig { scheme, stop_time: control.stop_time(branch), ..base.clone() };
        let term = match c.str("consistency.term") {
            "checkpoint" => control.term(branch).clone(),
            kind => setup::data_term(c, kind, scheme, &fc)?,
        };
        setup::check_term(&term, scheme)?;
        let mut errors = vec![0.0; steps.len()];
        for z in &imgs[..count] {
            let op = setup::operator_for_observation(c, z.shape())?;
            fc.validate(&op)?;
            let e = Energy { op: &op, term: &term, reg: &control.tdv };
            let errs = terminal_errors(&fc, &e, z, setup::init_operator(c, &op), &steps, reference)?;
            errors.iter_mut().zip(errs).for_each(|(a, b)| *a += b / count as f64);
        }
        let slope = loglog_slope(&steps, &errors);
        log::info!("{scheme}: errors {errors:?}, slope {slope:.3}");
        out.push(Study { scheme, steps: steps.clone(), errors, slope });
    }
    Ok(out)
}

pub fn run(c: &Config) -> CliResult<()> {
    let studies = study(c)?;
    let out = Output::create(c)?;
    let rows: Vec<Vec<String>> = studies
        .iter()
        .flat_map(|s| {
            s.steps.iter().zip(&s.errors).map(|(n, e)| vec![s.scheme.to_string(), n.to_string(), num(*e), num(s.slope)])
        })
        .collect();
    out.csv("consistency.csv", CONSISTENCY_HEADER, &rows)?;
    Ok(())
}
