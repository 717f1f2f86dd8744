//! Time discretizations of the gradient flow `ẋ = -T ∇E(x)` on `[0, 1]`,
//! trajectory rollout and reverse-mode differentiation through the unrolled
//! steps.
//!
//! With `h = T / S` the schemes are
//! * explicit: `x' = x - h Aᵀ∇₁D(Ax) - h ∇R(x)`,
//! * semi-implicit: `x' = prox_{hD}(x - h ∇R(x))` (identity `A` only),
//! * Euler–Newton: `v = x - h ∇R(x)`, `x' = v - M⁻¹ Aᵀ∇₁D(Av)` with
//!   `M = I/h + Aᵀ ∇₁²D(Av) A`, solved by a fixed number of CG iterations.

pub mod cg;

use std::fmt;
use std::str::FromStr;
use std::sync::Once;

use crate::datafid::DataTerm;
use crate::error::{Error, Result};
use crate::imaging::{Image, InitOperator, LinearOperator};
use crate::tdv::{TdvParams, TdvTape};
use cg::{CgRecord, NewtonSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Explicit,
    SemiImplicit,
    EulerNewton,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "expl" | "explicit" => Ok(Self::Explicit),
            "impl" | "semi-implicit" => Ok(Self::SemiImplicit),
            "en" | "euler-newton" => Ok(Self::EulerNewton),
            other => Err(Error::InvalidParameter(format!("unknown scheme '{other}' (expl, impl, en)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Explicit => "expl",
            Self::SemiImplicit => "impl",
            Self::EulerNewton => "en",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig {
    pub scheme: Scheme,
    /// Number of steps `S ≥ 1`.
    pub steps: usize,
    /// Stopping time `T ∈ [0, t_max]`.
    pub stop_time: f64,
    pub t_max: f64,
    pub cg_iters: usize,
    pub cg_tol: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Explicit,
            steps: 10,
            stop_time: 1.0,
            t_max: 1000.0,
            cg_iters: 10,
            cg_tol: 1e-10,
        }
    }
}

impl FlowConfig {
    pub fn step_size(&self) -> f64 {
        self.stop_time / self.steps as f64
    }

    pub fn validate(&self, op: &LinearOperator) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("flow needs at least one step".into()));
        }
        if !(self.stop_time >= 0.0 && self.stop_time <= self.t_max && self.t_max.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "stopping time {} outside [0, {}]",
                self.stop_time, self.t_max
            )));
        }
        if self.scheme == Scheme::SemiImplicit && !op.is_identity() {
            return Err(Error::SchemeRequiresIdentity);
        }
        Ok(())
    }
}

/// The energy `E(x) = D(Ax, z, ξ) + R(x, θ)` without the observation.
#[derive(Debug, Clone, Copy)]
pub struct Energy<'a> {
    pub op: &'a LinearOperator,
    pub term: &'a DataTerm,
    pub reg: &'a TdvParams,
}

fn image_like(like: &Image, data: Vec<f64>) -> Image {
    let s = like.shape();
    Image::new(s.width, s.height, s.channels, data).expect("length preserved")
}

impl Energy<'_> {
    /// `Aᵀ∇₁D(Ax, z)` along with `Ax`.
    fn data_grad(&self, x: &Image, z: &Image) -> Result<(Image, Image)> {
        let u = self.op.apply(x)?;
        let g = image_like(&u, self.term.grad(u.data(), z.data())?);
        Ok((self.op.apply_adjoint(&g)?, u))
    }
}

#[derive(Debug, Clone)]
struct StepRecord {
    tape: TdvTape,
    grad_r: Image,
    /// Base point `x - h ∇R(x)` of the semi-implicit and Euler–Newton steps.
    base: Option<Image>,
    cg: Option<CgRecord>,
}

/// States `x₀..x_S` and, when recorded, what backpropagation needs per step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<Image>,
    records: Vec<StepRecord>,
}

impl Trajectory {
    pub fn terminal(&self) -> &Image {
        self.states.last().expect("x₀ always present")
    }

    pub fn is_recorded(&self) -> bool {
        self.records.len() + 1 == self.states.len()
    }
}

static CG_WARNING: Once = Once::new();

fn step_impl(cfg: &FlowConfig, e: &Energy, x: &Image, z: &Image) -> Result<(Image, StepRecord)> {
    let h = cfg.step_size();
    let (_, grad_r, tape) = e.reg.value_and_grad(x)?;
    let explicit = cfg.scheme == Scheme::Explicit || (cfg.scheme == Scheme::EulerNewton && h == 0.0);
    if explicit {
        let (gd, _) = e.data_grad(x, z)?;
        let mut next = x.clone();
        next.axpy(-h, &gd);
        next.axpy(-h, &grad_r);
        return Ok((next, StepRecord { tape, grad_r, base: None, cg: None }));
    }
    let mut v = x.clone();
    v.axpy(-h, &grad_r);
    match cfg.scheme {
        Scheme::SemiImplicit => {
            z.ensure_shape(v.shape())?;
            let next = image_like(&v, e.term.prox(v.data(), z.data(), h)?);
            Ok((next, StepRecord { tape, grad_r, base: Some(v), cg: None }))
        }
        _ => {
            let (b, u) = e.data_grad(&v, z)?;
            let w = image_like(&u, e.term.hess_diag(u.data(), z.data())?);
            let sys = NewtonSystem { op: e.op, c: 1.0 / h, w };
            let (d, rec) = cg::solve(&sys, &b, cfg.cg_iters, cfg.cg_tol)?;
            if !rec.converged {
                CG_WARNING.call_once(|| {
                    log::warn!(
                        "CG stopped after {} iterations with relative residual {:.3e}",
                        rec.iterations(),
                        rec.residual
                    )
                });
            }
            let mut next = v.clone();
            next.axpy(-1.0, &d);
            Ok((next, StepRecord { tape, grad_r, base: Some(v), cg: Some(rec) }))
        }
    }
}

/// One step of the configured scheme.
pub fn step(cfg: &FlowConfig, e: &Energy, x: &Image, z: &Image) -> Result<Image> {
    cfg.validate(e.op)?;
    Ok(step_impl(cfg, e, x, z)?.0)
}

/// Runs `S` steps from `x₀`; `record` keeps what [`backprop`] needs.
pub fn rollout_from(cfg: &FlowConfig, e: &Energy, z: &Image, x0: Image, record: bool) -> Result<Trajectory> {
    cfg.validate(e.op)?;
    z.ensure_shape(e.op.out_shape())?;
    x0.ensure_shape(e.op.in_shape())?;
    let mut states = Vec::with_capacity(cfg.steps + 1);
    let mut records = Vec::new();
    states.push(x0);
    for s in 0..cfg.steps {
        let (next, rec) = step_impl(cfg, e, states.last().expect("nonempty"), z)?;
        if !next.is_finite() {
            return Err(Error::NonFinite { step: s + 1 });
        }
        states.push(next);
        if record {
            records.push(rec);
        }
    }
    Ok(Trajectory { states, records })
}

/// Trajectory from `x₀ = A_init z`, recorded for backpropagation.
pub fn rollout(cfg: &FlowConfig, e: &Energy, z: &Image, init: InitOperator) -> Result<Trajectory> {
    let x0 = init.apply(e.op, z)?;
    rollout_from(cfg, e, z, x0, true)
}

/// Terminal state only (no records kept).
pub fn reconstruct(cfg: &FlowConfig, e: &Energy, z: &Image, init: InitOperator) -> Result<Image> {
    let x0 = init.apply(e.op, z)?;
    let traj = rollout_from(cfg, e, z, x0, false)?;
    Ok(traj.states.into_iter().last().expect("terminal"))
}

/// Gradients of a loss of the terminal state with respect to the controls.
#[derive(Debug, Clone)]
pub struct FlowGrads {
    pub stop_time: f64,
    /// Laid out as [`DataTerm::params`].
    pub term: Vec<f64>,
    /// Laid out as [`TdvParams::flat`].
    pub reg: Vec<f64>,
    /// Cotangent of the initial state.
    pub initial: Image,
}

/// Reverse-mode pass through a recorded trajectory for the terminal cotangent `x_bar`.
pub fn backprop(traj: &Trajectory, cfg: &FlowConfig, e: &Energy, z: &Image, x_bar: &Image) -> Result<FlowGrads> {
    if !traj.is_recorded() {
        return Err(Error::MissingTape);
    }
    x_bar.ensure_shape(traj.terminal().shape())?;
    let h = cfg.step_size();
    let op = e.op;
    let mut xb = x_bar.clone();
    let mut h_bar = 0.0;
    let mut term_bar = vec![0.0; e.term.num_params()];
    let mut reg_bar = vec![0.0; e.reg.num_params()];
    let add = |acc: &mut [f64], v: &[f64], s: f64| acc.iter_mut().zip(v).for_each(|(a, b)| *a += s * b);
    for (s, rec) in traj.records.iter().enumerate().rev() {
        let x = &traj.states[s];
        // cotangent of the base point `x - h ∇R(x)` (or of `x` itself in the explicit form)
        let vb = match (&rec.base, &rec.cg) {
            (None, _) => {
                let (gd, u) = e.data_grad(x, z)?;
                let axb = op.apply(&xb)?;
                h_bar -= xb.dot(&gd) + xb.dot(&rec.grad_r);
                add(&mut term_bar, &e.term.grad_coeff_vjp(u.data(), z.data(), axb.data())?, -h);
                let hd = e.term.hess_diag(u.data(), z.data())?;
                let weighted = image_like(&axb, axb.data().iter().zip(&hd).map(|(a, b)| a * b).collect());
                let (hu, tv) = e.reg.second_order_vjp(&rec.tape, &xb)?;
                add(&mut reg_bar, &tv, -h);
                let mut next = xb.clone();
                next.axpy(-h, &op.apply_adjoint(&weighted)?);
                next.axpy(-h, &hu);
                xb = next;
                continue;
            }
            (Some(v), None) => {
                let dv = e.term.prox_dv(v.data(), z.data(), h)?;
                h_bar += e.term.prox_dstep_vjp(v.data(), z.data(), h, xb.data());
                add(&mut term_bar, &e.term.prox_coeff_vjp(v.data(), z.data(), h, xb.data())?, 1.0);
                image_like(&xb, xb.data().iter().zip(&dv).map(|(a, b)| a * b).collect())
            }
            (Some(v), Some(cg_rec)) => {
                let u = op.apply(v)?;
                let w = image_like(&u, e.term.hess_diag(u.data(), z.data())?);
                let third = e.term.third_diag(u.data(), z.data())?;
                let sys = NewtonSystem { op, c: 1.0 / h, w };
                let mut d_bar = xb.clone();
                d_bar.scale(-1.0);
                let cot = cg::backward(&sys, cg_rec, &d_bar)?;
                let g_bar = op.apply(&cot.b)?;
                let u_bar: Vec<f64> = (0..u.data().len())
                    .map(|i| sys.w.data()[i] * g_bar.data()[i] + third[i] * cot.w.data()[i])
                    .collect();
                add(&mut term_bar, &e.term.grad_coeff_vjp(u.data(), z.data(), g_bar.data())?, 1.0);
                add(&mut term_bar, &e.term.hess_coeff_vjp(u.data(), z.data(), cot.w.data())?, 1.0);
                let mut vb = xb.clone();
                vb.axpy(1.0, &op.apply_adjoint(&image_like(&u, u_bar))?);
                h_bar -= cot.c / (h * h);
                vb
            }
        };
        h_bar -= vb.dot(&rec.grad_r);
        let (hu, tv) = e.reg.second_order_vjp(&rec.tape, &vb)?;
        add(&mut reg_bar, &tv, -h);
        let mut next = vb;
        next.axpy(-h, &hu);
        xb = next;
    }
    Ok(FlowGrads {
        stop_time: h_bar / cfg.steps as f64,
        term: term_bar,
        reg: reg_bar,
        initial: xb,
    })
}

/// `‖x_S - x_ref‖₂` for each `S` in `steps` against a reference rollout
/// with `reference_steps` steps, all other settings fixed.
pub fn terminal_errors(
    cfg: &FlowConfig,
    e: &Energy,
    z: &Image,
    init: InitOperator,
    steps: &[usize],
    reference_steps: usize,
) -> Result<Vec<f64>> {
    let at = |s: usize| {
        let c = FlowConfig { steps: s, ..cfg.clone() };
        reconstruct(&c, e, z, init)
    };
    let reference = at(reference_steps)?;
    steps
        .iter()
        .map(|&s| {
            let mut d = at(s)?;
            d.axpy(-1.0, &reference);
            Ok(d.norm())
        })
        .collect()
}

/// Least-squares slope of `log(error)` against `log(1/S)`.
pub fn loglog_slope(steps: &[usize], errors: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|&s| -(s as f64).ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests;
