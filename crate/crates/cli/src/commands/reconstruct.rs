//! `reconstruct`: terminal states (and optionally every flow state) for a
//! directory of observations.

use energy_recon::flow::{rollout_from, Energy};
use energy_recon::imaging::{load_image, save_image, LinearOperator};
use energy_recon::learn::{control_from_checkpoint, image_files, preimage_shape, Checkpoint};
use energy_recon::Image;

use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::output::{field, num, Output};
use crate::setup;

pub const INDEX_HEADER: &str = "file,output,width,height,steps,stop_time,branch";

/// Reflection padding that makes an identity-operator image admissible for
/// the regularizer: sides divisible by 4 and at least 8.
pub fn admissible_padding(width: usize, height: usize) -> (usize, usize) {
    let pad = |n: usize| n.max(8).next_multiple_of(4) - n;
    (pad(width), pad(height))
}

pub fn run(c: &Config) -> CliResult<()> {
    let ck = Checkpoint::load(c.require_path("run.checkpoint")?)?;
    let control = control_from_checkpoint(&ck)?;
    let dir = c.require_path("data.input")?;
    let files = image_files(&dir).map_err(|e| CliError::Config(format!("data.input: {e}")))?;
    if files.is_empty() {
        return Err(CliError::Config(format!("data.input: no images in {}", dir.display())));
    }
    let branch = setup::branch(c.str("reconstruct.branch"));
    let term = control.term(branch);
    let flow = setup::flow(c)?;
    setup::check_term(term, flow.scheme)?;
    let fc = energy_recon::flow::FlowConfig { stop_time: control.stop_time(branch), ..flow };
    let frames = c.bool("reconstruct.frames");
    let depth = setup::bit_depth(c);
    let out = Output::create(c)?;
    let mut rows = Vec::with_capacity(files.len());
    for f in &files {
        let z = load_image(f)?;
        let op = setup::operator_for_observation(c, z.shape())?;
        let x_shape = preimage_shape(&op, z.shape());
        if x_shape.channels != control.tdv.config.channels {
            return Err(CliError::Config(format!(
                "{}: reconstructions have {} channels, the checkpoint's regularizer expects {}",
                f.display(),
                x_shape.channels,
                control.tdv.config.channels
            )));
        }
        let (px, py) = admissible_padding(x_shape.width, x_shape.height);
        let (op, z_in) = match op {
            LinearOperator::Identity { .. } if px + py > 0 => {
                let padded = z.pad_reflect_sides(0, px, 0, py)?;
                (LinearOperator::identity(padded.shape()), padded)
            }
            _ if px + py > 0 => {
                return Err(CliError::Config(format!(
                    "{}: reconstruction size {}x{} must have sides divisible by 4 and at least 8",
                    f.display(),
                    x_shape.width,
                    x_shape.height
                )))
            }
            op => (op, z.clone()),
        };
        fc.validate(&op)?;
        let init = setup::init_operator(c, &op);
        let e = Energy { op: &op, term, reg: &control.tdv };
        let traj = rollout_from(&fc, &e, &z_in, init.apply(&op, &z_in)?, false)?;
        let unpad = |x: &Image| -> CliResult<Image> { Ok(x.crop_sides(0, px, 0, py)?) };
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
        let name = format!("{stem}.png");
        save_image(&unpad(traj.terminal())?, out.path(&name), depth)?;
        if frames {
            for (k, x) in traj.states.iter().enumerate() {
                save_image(&unpad(x)?, out.path(&format!("frames/{stem}/{k:04}.png")), depth)?;
            }
        }
        let file = f.file_name().and_then(|s| s.to_str()).unwrap_or("");
        rows.push(vec![
            field(file),
            field(&name),
            x_shape.width.to_string(),
            x_shape.height.to_string(),
            fc.steps.to_string(),
            num(fc.stop_time),
            c.str("reconstruct.branch").to_string(),
        ]);
    }
    out.csv("reconstructions.csv", INDEX_HEADER, &rows)?;
    Ok(())
}
