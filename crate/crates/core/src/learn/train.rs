use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng as _;

use super::adam::{Adam, AdamConfig};
use super::checkpoint::{term_descriptor, term_from_descriptor, Checkpoint, NamedTensor};
use super::control::{Branch, ControlParams};
use super::data::{observation_alignment, preimage_shape, random_crop, Augmentation};
use super::loss::{cost_j, loss_sup, LossKind};
use crate::error::{Error, Result};
use crate::flow::{self, Energy, FlowConfig};
use crate::imaging::{psnr, Image, InitOperator, LinearOperator, NoiseKind, NoiseModel};
use crate::rng;
use crate::tdv::{TdvConfig, TdvParams};
use crate::transport::{patch_positions, wasserstein_loss, FeatureOp, PatchSet, WassersteinConfig};

/// Largest admissible plan marginal deviation during training.
pub const PLAN_MARGINAL_TOL: f64 = 1e-6;

/// The reconstruction task: forward operator (its shape is replaced per
/// sample), initialization and flow discretization. The stopping time in
/// `flow` is ignored in favour of the branch's learned one.
#[derive(Debug, Clone)]
pub struct Problem {
    pub op: LinearOperator,
    pub init: InitOperator,
    pub flow: FlowConfig,
}

impl Problem {
    pub fn flow_for(&self, stop_time: f64) -> FlowConfig {
        FlowConfig { stop_time, ..self.flow.clone() }
    }

    /// Operator mapping onto observations of shape `z`.
    pub fn operator_for(&self, z: &Image) -> Result<LinearOperator> {
        self.op.with_shape(preimage_shape(&self.op, z.shape()))
    }

    /// Terminal state of the branch's flow for observation `z`.
    pub fn reconstruct(&self, control: &ControlParams, branch: Branch, z: &Image) -> Result<Image> {
        let op = self.operator_for(z)?;
        let e = Energy { op: &op, term: control.term(branch), reg: &control.tdv };
        flow::reconstruct(&self.flow_for(control.stop_time(branch)), &e, z, self.init)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch: usize,
    pub iterations: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Side of the square training crops (in the reconstruction domain).
    pub crop: usize,
    pub eval_interval: usize,
    /// Divide the learning rate by `decay_factor` every `decay_every`
    /// iterations; `0` disables the schedule.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub augment: bool,
    pub check_invariants: bool,
    /// Record elapsed seconds in the metrics (breaks bit-identical logs).
    pub wall_clock: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch: 4,
            iterations: 500,
            loss: LossKind::default(),
            seed: 0,
            crop: 48,
            eval_interval: 50,
            decay_every: 0,
            decay_factor: 4.0,
            augment: true,
            check_invariants: true,
            wall_clock: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        self.loss.validate()?;
        if self.batch == 0 || self.eval_interval == 0 || self.crop == 0 {
            return Err(Error::InvalidParameter("batch, crop and eval interval must be positive".into()));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::InvalidParameter(format!("decay factor must be > 0, got {}", self.decay_factor)));
        }
        Ok(())
    }

    pub fn lr_at(&self, iteration: usize) -> f64 {
        match self.decay_every {
            0 => self.adam.lr,
            k => self.adam.lr / self.decay_factor.powi((iteration / k) as i32),
        }
    }
}

/// Unsupervised branch settings.
#[derive(Debug, Clone)]
pub struct SharedConfig {
    pub wasserstein: WassersteinConfig,
    pub features: FeatureOp,
    pub batch: usize,
    /// Side of the square observation crops.
    pub crop: usize,
}

/// Ground truth images corrupted on the fly.
#[derive(Debug, Clone, Copy)]
pub struct Supervised<'a> {
    pub clean: &'a [Image],
    pub noise: NoiseKind,
}

/// Observations without ground truth and a pool of reference feature rows.
#[derive(Debug, Clone, Copy)]
pub struct Unsupervised<'a> {
    pub observations: &'a [Image],
    pub references: &'a PatchSet,
}

#[derive(Debug, Clone)]
pub enum Objective<'a> {
    Supervised(Supervised<'a>),
    Shared {
        sup: Supervised<'a>,
        unsup: Unsupervised<'a>,
        cfg: SharedConfig,
    },
}

/// Fixed `(clean, observation)` pairs scored with one branch's controls.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub pairs: Vec<(Image, Image)>,
    pub branch: Branch,
}

impl ValidationSet {
    /// `count` images cycled from `clean` (random square crops of side
    /// `crop`, or whole images), corrupted with `noise` under a stream of
    /// their own.
    pub fn generate(
        clean: &[Image],
        problem: &Problem,
        noise: NoiseKind,
        crop: Option<usize>,
        count: usize,
        seed: u64,
        branch: Branch,
    ) -> Result<Self> {
        if clean.is_empty() {
            return Err(Error::EmptyBatch("no validation images".into()));
        }
        let mut r = rng::stream(seed, "validation");
        let mut pairs = Vec::with_capacity(count);
        for k in 0..count {
            let src = &clean[k % clean.len()];
            let y = match crop {
                Some(size) => random_crop(src, size, 1, &mut r)?,
                None => src.clone(),
            };
            let op = problem.op.with_shape(y.shape())?;
            let z = NoiseModel::new(noise, seed)?.corrupt_with(&op.apply(&y)?, &mut r)?;
            pairs.push((y, z));
        }
        Ok(Self { pairs, branch })
    }

    /// Mean PSNR of the clamped reconstructions.
    pub fn mean_psnr(&self, problem: &Problem, control: &ControlParams) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyBatch("empty validation set".into()));
        }
        let mut total = 0.0;
        for (y, z) in &self.pairs {
            let x = problem.reconstruct(control, self.branch, z)?;
            total += psnr(&x.clamp01(), y)?;
        }
        Ok(total / self.pairs.len() as f64)
    }

    /// Mean PSNR of the initial states (observations for denoising).
    pub fn baseline_psnr(&self, problem: &Problem) -> Result<f64> {
        let mut total = 0.0;
        for (y, z) in &self.pairs {
            let op = problem.operator_for(z)?;
            total += psnr(&problem.init.apply(&op, z)?.clamp01(), y)?;
        }
        Ok(total / self.pairs.len().max(1) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub iteration: usize,
    /// Mean objective over the interval.
    pub loss: f64,
    pub sup_loss: Option<f64>,
    pub wasserstein_loss: Option<f64>,
    pub val_psnr: Option<f64>,
    pub wall_seconds: f64,
}

pub const METRICS_HEADER: &str = "iteration,loss,sup_loss,wasserstein_loss,val_psnr,wall_seconds";

impl MetricRow {
    pub fn csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.loss,
            opt(self.sup_loss),
            opt(self.wasserstein_loss),
            opt(self.val_psnr),
            self.wall_seconds
        )
    }

    fn encode(&self) -> [f64; 6] {
        let o = |v: Option<f64>| v.unwrap_or(f64::NAN);
        [self.iteration as f64, self.loss, o(self.sup_loss), o(self.wasserstein_loss), o(self.val_psnr), self.wall_seconds]
    }

    fn decode(v: &[f64]) -> Self {
        let o = |x: f64| (!x.is_nan()).then_some(x);
        Self {
            iteration: v[0] as usize,
            loss: v[1],
            sup_loss: o(v[2]),
            wasserstein_loss: o(v[3]),
            val_psnr: o(v[4]),
            wall_seconds: v[5],
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Interval {
    steps: usize,
    loss: f64,
    sup: (f64, usize),
    unsup: (f64, usize),
}

/// Optimizer state and training history; everything needed to resume.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub control: ControlParams,
    pub adam: Adam,
    pub iteration: usize,
    pub history: Vec<MetricRow>,
    pub invariant_checks: usize,
    pub invariant_failures: Vec<String>,
    interval: Interval,
    started: Option<Instant>,
}

impl Trainer {
    pub fn new(control: ControlParams) -> Self {
        let n = control.num_params();
        Self {
            control,
            adam: Adam::new(n),
            iteration: 0,
            history: Vec::new(),
            invariant_checks: 0,
            invariant_failures: Vec::new(),
            interval: Interval::default(),
            started: None,
        }
    }

    fn supervised_batch(
        &self,
        sup: &Supervised,
        problem: &Problem,
        cfg: &TrainConfig,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        if sup.clean.is_empty() {
            return Err(Error::EmptyBatch("no supervised training images".into()));
        }
        let c = &self.control;
        let mut r = rng::stream_indexed(cfg.seed, "batch-sup", self.iteration as u64);
        let noise = NoiseModel::new(sup.noise, cfg.seed)?;
        let fc = problem.flow_for(c.t_sup);
        let mut losses = Vec::with_capacity(cfg.batch);
        for _ in 0..cfg.batch {
            let idx = r.gen_range(0..sup.clean.len());
            let mut y = random_crop(&sup.clean[idx], cfg.crop, 1, &mut r)?;
            if cfg.augment {
                y = Augmentation::draw(&mut r).apply(&y);
            }
            let op = problem.op.with_shape(y.shape())?;
            let z = noise.corrupt_with(&op.apply(&y)?, &mut r)?;
            let e = Energy { op: &op, term: &c.term_sup, reg: &c.tdv };
            let traj = flow::rollout(&fc, &e, &z, problem.init)?;
            let (l, g) = loss_sup(traj.terminal(), &y, cfg.loss)?;
            let fg = flow::backprop(&traj, &fc, &e, &z, &g)?;
            c.accumulate(Branch::Supervised, &fg, weight / cfg.batch as f64, grad)?;
            losses.push(l);
        }
        Ok(losses)
    }

    fn unsupervised_batch(
        &mut self,
        unsup: &Unsupervised,
        shared: &SharedConfig,
        problem: &Problem,
        cfg: &TrainConfig,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<Vec<f64>> {
        // one transport problem between all windows of the batch and the references
        if unsup.observations.is_empty() || unsup.references.is_empty() {
            return Err(Error::EmptyBatch("no unsupervised observations or reference patches".into()));
        }
        let mut r = rng::stream_indexed(cfg.seed, "batch-unsup", self.iteration as u64);
        let fc = problem.flow_for(self.control.t_unsup);
        let align = observation_alignment(&problem.op);
        let c = &self.control;
        let mut runs = Vec::with_capacity(shared.batch);
        for _ in 0..shared.batch {
            let idx = r.gen_range(0..unsup.observations.len());
            let mut z = random_crop(&unsup.observations[idx], shared.crop, align, &mut r)?;
            if cfg.augment && problem.op.is_identity() {
                z = Augmentation::draw(&mut r).apply(&z);
            }
            let op = problem.operator_for(&z)?;
            let e = Energy { op: &op, term: &c.term_unsup, reg: &c.tdv };
            let traj = flow::rollout(&fc, &e, &z, problem.init)?;
            runs.push((op, z, traj));
        }
        let recons: Vec<Image> = runs.iter().map(|(_, _, t)| t.terminal().clone()).collect();
        let w = &shared.wasserstein;
        let n: usize = recons
            .iter()
            .map(|x| patch_positions(x.shape(), w.patch, w.stride).map(|p| p.len()))
            .sum::<Result<usize>>()?;
        let refs = unsup.references.sample(n, &mut r);
        let out = wasserstein_loss(&recons, &refs, &shared.features, w, &mut r)?;
        for ((op, z, traj), g) in runs.iter().zip(&out.grads) {
            let e = Energy { op, term: &c.term_unsup, reg: &c.tdv };
            let fg = flow::backprop(traj, &fc, &e, z, g)?;
            c.accumulate(Branch::Unsupervised, &fg, weight, grad)?;
        }
        if cfg.check_invariants {
            let dev = out.plan.marginal_error();
            if dev > PLAN_MARGINAL_TOL {
                self.invariant_failures.push(format!("iteration {}: plan marginal error {dev:e}", self.iteration));
            }
        }
        Ok(vec![out.loss])
    }

    /// One optimizer step on the objective.
    pub fn step(&mut self, obj: &Objective, problem: &Problem, cfg: &TrainConfig) -> Result<()> {
        let alpha = match obj {
            Objective::Supervised(_) => 1.0,
            Objective::Shared { .. } => self.control.alpha,
        };
        let mut grad = vec![0.0; self.control.num_params()];
        let (mut sup_losses, mut unsup_losses) = (Vec::new(), Vec::new());
        match obj {
            Objective::Supervised(sup) => {
                sup_losses = self.supervised_batch(sup, problem, cfg, 1.0, &mut grad)?;
            }
            Objective::Shared { sup, unsup, cfg: shared } => {
                if alpha > 0.0 {
                    sup_losses = self.supervised_batch(sup, problem, cfg, alpha, &mut grad)?;
                }
                if alpha < 1.0 {
                    unsup_losses = self.unsupervised_batch(unsup, shared, problem, cfg, 1.0 - alpha, &mut grad)?;
                }
            }
        }
        let j = cost_j(&sup_losses, &unsup_losses, alpha)?;
        let t_max = problem.flow.t_max;
        let mut flat = self.control.flat();
        self.adam.step(&mut flat, &grad, cfg.lr_at(self.iteration), &cfg.adam)?;
        self.control.set_flat(&flat)?;
        self.control.project(t_max);
        if cfg.check_invariants {
            self.invariant_checks += 1;
            let it = self.iteration;
            let bad = self.control.invariant_violations(t_max);
            self.invariant_failures.extend(bad.into_iter().map(|m| format!("iteration {it}: {m}")));
        }
        self.iteration += 1;
        let iv = &mut self.interval;
        iv.steps += 1;
        iv.loss += j;
        iv.sup.0 += sup_losses.iter().sum::<f64>();
        iv.sup.1 += sup_losses.len();
        iv.unsup.0 += unsup_losses.iter().sum::<f64>();
        iv.unsup.1 += unsup_losses.len();
        Ok(())
    }

    /// Runs until `cfg.iterations`, appending a metrics row (and calling
    /// `on_row`) every `cfg.eval_interval` iterations.
    pub fn train(
        &mut self,
        obj: &Objective,
        problem: &Problem,
        cfg: &TrainConfig,
        val: Option<&ValidationSet>,
        mut on_row: impl FnMut(&Trainer) -> Result<()>,
    ) -> Result<()> {
        cfg.validate()?;
        problem.flow.validate(&problem.op)?;
        self.control.validate(problem.flow.t_max)?;
        let started = *self.started.get_or_insert_with(Instant::now);
        while self.iteration < cfg.iterations {
            self.step(obj, problem, cfg)?;
            if self.iteration.is_multiple_of(cfg.eval_interval) {
                let iv = std::mem::take(&mut self.interval);
                let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
                let val_psnr = val.map(|v| v.mean_psnr(problem, &self.control)).transpose()?;
                self.history.push(MetricRow {
                    iteration: self.iteration,
                    loss: iv.loss / iv.steps as f64,
                    sup_loss: mean(iv.sup),
                    wasserstein_loss: mean(iv.unsup),
                    val_psnr,
                    wall_seconds: if cfg.wall_clock { started.elapsed().as_secs_f64() } else { 0.0 },
                });
                on_row(self)?;
            }
        }
        Ok(())
    }

    pub fn metrics_csv(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for r in &self.history {
            s.push_str(&r.csv());
            s.push('\n');
        }
        s
    }

    pub fn to_checkpoint(&self, meta: &BTreeMap<String, String>) -> Checkpoint {
        let mut ck = Checkpoint { meta: meta.clone(), tensors: Vec::new() };
        control_tensors(&self.control, &mut ck);
        ck.push(NamedTensor::vector("adam.m", self.adam.m.clone()));
        ck.push(NamedTensor::vector("adam.v", self.adam.v.clone()));
        ck.push(NamedTensor::vector("adam.t", vec![self.adam.t as f64]));
        ck.push(NamedTensor::vector("trainer.iteration", vec![self.iteration as f64]));
        ck.push(NamedTensor::vector("trainer.invariant_checks", vec![self.invariant_checks as f64]));
        ck.push(NamedTensor::vector("trainer.invariant_failures", vec![self.invariant_failures.len() as f64]));
        let rows: Vec<f64> = self.history.iter().flat_map(|r| r.encode()).collect();
        ck.push(NamedTensor::new("trainer.metrics", vec![self.history.len(), 6], rows));
        ck
    }

    /// Restores a trainer; checkpoints without optimizer state start fresh.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let control = control_from_checkpoint(ck)?;
        let mut t = Trainer::new(control);
        if ck.has_tensor("adam.m") {
            let n = t.control.num_params();
            let m = ck.tensor("adam.m")?.data.clone();
            let v = ck.tensor("adam.v")?.data.clone();
            if m.len() != n || v.len() != n {
                return Err(Error::Checkpoint("optimizer state does not match the controls".into()));
            }
            t.adam = Adam { m, v, t: ck.scalar("adam.t")? as u64 };
            t.iteration = ck.scalar("trainer.iteration")? as usize;
            t.invariant_checks = ck.scalar("trainer.invariant_checks")? as usize;
            let failures = ck.scalar("trainer.invariant_failures")? as usize;
            t.invariant_failures = vec!["failure recorded before resuming".into(); failures];
            let m = ck.tensor("trainer.metrics")?;
            t.history = m.data.chunks_exact(6).map(MetricRow::decode).collect();
        }
        Ok(t)
    }
}

/// Appends the control parameters (and their structure as metadata).
pub fn control_tensors(c: &ControlParams, ck: &mut Checkpoint) {
    ck.meta.insert("term_sup".into(), term_descriptor(&c.term_sup));
    ck.meta.insert("term_unsup".into(), term_descriptor(&c.term_unsup));
    let tc = c.tdv.config;
    ck.meta.insert("tdv".into(), format!("{} {} {}", tc.channels, tc.features, tc.blocks));
    ck.push(NamedTensor::vector("control.t_sup", vec![c.t_sup]));
    ck.push(NamedTensor::vector("control.t_unsup", vec![c.t_unsup]));
    ck.push(NamedTensor::vector("control.alpha", vec![c.alpha]));
    ck.push(NamedTensor::vector("term_sup", c.term_sup.params()));
    ck.push(NamedTensor::vector("term_unsup", c.term_unsup.params()));
    for t in &c.tdv.tensors {
        ck.push(NamedTensor::new(t.name.clone(), t.shape.clone(), t.data.clone()));
    }
}

pub fn control_from_checkpoint(ck: &Checkpoint) -> Result<ControlParams> {
    let dims: Vec<usize> = ck.meta("tdv")?.split_whitespace().filter_map(|v| v.parse().ok()).collect();
    let [channels, features, blocks] = dims[..] else {
        return Err(Error::Checkpoint("bad tdv configuration".into()));
    };
    let mut tdv = TdvParams::zeros(TdvConfig { channels, features, blocks });
    for t in &mut tdv.tensors {
        let src = ck.tensor(&t.name)?;
        if src.shape != t.shape {
            return Err(Error::Checkpoint(format!("tensor '{}' has shape {:?}, expected {:?}", t.name, src.shape, t.shape)));
        }
        t.data.clone_from(&src.data);
    }
    Ok(ControlParams {
        t_sup: ck.scalar("control.t_sup")?,
        t_unsup: ck.scalar("control.t_unsup")?,
        term_sup: term_from_descriptor(ck.meta("term_sup")?, &ck.tensor("term_sup")?.data)?,
        term_unsup: term_from_descriptor(ck.meta("term_unsup")?, &ck.tensor("term_unsup")?.data)?,
        tdv,
        alpha: ck.scalar("control.alpha")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datafid::DataTerm;
    use crate::flow::Scheme;
    use crate::imaging::{synthetic, Shape};
    use crate::transport::{extract_patches, transport_cost, SinkhornConfig};

    fn tiny_tdv(seed: u64) -> TdvParams {
        let cfg = TdvConfig { channels: 1, features: 4, blocks: 1 };
        TdvParams::init(cfg, &mut rng::stream(seed, "tdv")).unwrap()
    }

    fn problem(steps: usize) -> Problem {
        Problem {
            op: LinearOperator::identity(Shape::new(8, 8, 1)),
            init: InitOperator::Identity,
            flow: FlowConfig { scheme: Scheme::Explicit, steps, ..FlowConfig::default() },
        }
    }

    fn scenes(n: usize, side: usize, seed: u64) -> Vec<Image> {
        let mut r = rng::stream(seed, "scenes");
        (0..n).map(|_| synthetic::scene(side, side, 1, &mut r)).collect()
    }

    fn train_cfg(iterations: usize) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig { lr: 1e-3, ..AdamConfig::default() },
            batch: 2,
            iterations,
            crop: 8,
            eval_interval: 2,
            seed: 11,
            ..TrainConfig::default()
        }
    }

    fn shared_cfg() -> SharedConfig {
        SharedConfig {
            wasserstein: WassersteinConfig { patch: 4, stride: 2, p: 1.0, sinkhorn: SinkhornConfig { beta: 1.0, iters: 50 } },
            features: FeatureOp::dct(4),
            batch: 1,
            crop: 8,
        }
    }

    fn reference_pool(imgs: &[Image], shared: &SharedConfig) -> PatchSet {
        let w = &shared.wasserstein;
        let sets: Vec<PatchSet> = imgs
            .iter()
            .map(|im| shared.features.apply(&extract_patches(im, w.patch, w.stride).unwrap()).unwrap())
            .collect();
        PatchSet::concat(&sets).unwrap()
    }

    fn noise() -> NoiseKind {
        NoiseKind::Gaussian { sigma: 0.1 }
    }

    #[test]
    fn alpha_one_matches_supervised_training_bit_exactly() {
        let clean = scenes(3, 12, 1);
        let obs = scenes(2, 12, 2);
        let shared = shared_cfg();
        let pool = reference_pool(&clean, &shared);
        let p = problem(3);
        let cfg = train_cfg(4);
        let sup = Supervised { clean: &clean, noise: noise() };
        let control = ControlParams::new(0.05, DataTerm::scaled_l2(1.0).unwrap(), tiny_tdv(3), 1.0);

        let mut a = Trainer::new(control.clone());
        a.train(&Objective::Supervised(sup), &p, &cfg, None, |_| Ok(())).unwrap();
        let mut b = Trainer::new(control);
        let obj = Objective::Shared { sup, unsup: Unsupervised { observations: &obs, references: &pool }, cfg: shared };
        b.train(&obj, &p, &cfg, None, |_| Ok(())).unwrap();

        let bits = |t: &Trainer| t.control.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.history, b.history);
        assert_ne!(a.control.tdv.flat(), tiny_tdv(3).flat());
    }

    #[test]
    fn resumed_shared_training_matches_uninterrupted_run() {
        let clean = scenes(3, 12, 4);
        let obs = scenes(2, 12, 5);
        let shared = shared_cfg();
        let pool = reference_pool(&clean, &shared);
        let mut p = problem(2);
        p.flow.scheme = Scheme::SemiImplicit;
        let sup = Supervised { clean: &clean, noise: noise() };
        let obj = Objective::Shared { sup, unsup: Unsupervised { observations: &obs, references: &pool }, cfg: shared };
        let control = ControlParams::new(0.05, DataTerm::frechet_prox(31, 2.0, 0.05), tiny_tdv(6), 0.5);
        let meta = BTreeMap::from([("run".to_string(), "resume".to_string())]);

        let mut full = Trainer::new(control.clone());
        let mut snapshot = None;
        full.train(&obj, &p, &train_cfg(4), None, |t| {
            if t.iteration == 2 {
                snapshot = Some(t.to_checkpoint(&meta).to_bytes());
            }
            Ok(())
        })
        .unwrap();

        let ck = Checkpoint::from_bytes(&snapshot.unwrap()).unwrap();
        let mut resumed = Trainer::from_checkpoint(&ck).unwrap();
        assert_eq!(resumed.iteration, 2);
        resumed.train(&obj, &p, &train_cfg(4), None, |_| Ok(())).unwrap();

        let bits = |t: &Trainer| t.control.flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&full), bits(&resumed));
        assert_eq!(full.adam.t, resumed.adam.t);
        assert_eq!(full.history, resumed.history);
        assert_eq!(full.invariant_failures.len(), 0);
        assert_eq!(full.invariant_checks, 4);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters_and_history_has_one_row_per_interval() {
        let clean = scenes(2, 8, 7);
        let p = problem(2);
        let mut cfg = train_cfg(6);
        cfg.adam.lr = 0.0;
        let control = ControlParams::new(0.05, DataTerm::scaled_l2(1.0).unwrap(), tiny_tdv(8), 1.0);
        let mut t = Trainer::new(control.clone());
        let obj = Objective::Supervised(Supervised { clean: &clean, noise: noise() });
        t.train(&obj, &p, &cfg, None, |_| Ok(())).unwrap();
        assert_eq!(t.control.flat(), control.flat());
        assert_eq!(t.history.len(), 3);
        assert_eq!(t.metrics_csv().lines().next().unwrap(), METRICS_HEADER);
        assert_eq!(t.metrics_csv().lines().count(), 4);
        assert!(t.history.iter().all(|r| r.wasserstein_loss.is_none() && r.sup_loss.is_some()));
    }

    #[test]
    fn learning_rate_decay_schedule() {
        let cfg = TrainConfig { decay_every: 10, decay_factor: 4.0, ..TrainConfig::default() };
        assert_eq!(cfg.lr_at(9), cfg.adam.lr);
        assert_eq!(cfg.lr_at(10), cfg.adam.lr / 4.0);
        assert_eq!(cfg.lr_at(25), cfg.adam.lr / 16.0);
    }

    #[test]
    fn checkpoint_restores_controls_exactly() {
        let control = ControlParams::new(0.3, DataTerm::divergence(3, 2.0), tiny_tdv(9), 0.25);
        let ck = Checkpoint::from_bytes(&Trainer::new(control.clone()).to_checkpoint(&BTreeMap::new()).to_bytes()).unwrap();
        let back = control_from_checkpoint(&ck).unwrap();
        assert_eq!(back.flat(), control.flat());
        assert_eq!(back.alpha, 0.25);
        assert_eq!(back.tdv.config, control.tdv.config);
    }

    /// Full shared objective `α ℓ(x_su, y) + (1−α) tr(C(x_un)ᵀP)` with the
    /// plan and patch selection frozen.
    #[test]
    fn shared_objective_gradient_matches_finite_differences() {
        let p = problem(3);
        let alpha = 0.5;
        let mut r = rng::stream(21, "fd");
        let y = synthetic::scene(8, 8, 1, &mut r);
        let z_sup = NoiseModel::new(noise(), 0).unwrap().corrupt_with(&y, &mut r).unwrap();
        let z_un = synthetic::scene(8, 8, 1, &mut r).map(|v| v + 0.05 * (v * 37.0).sin());
        let shared = SharedConfig { features: FeatureOp::id(4), ..shared_cfg() };
        let w = shared.wasserstein;
        let refs = reference_pool(&[synthetic::scene(8, 8, 1, &mut r)], &shared);
        assert_eq!(refs.len(), 9);
        let loss = LossKind::L2;

        let mut control = ControlParams::new(0.2, DataTerm::frechet(31, 2.0), tiny_tdv(22), alpha);
        control.t_unsup = 0.15;
        control.term_unsup = DataTerm::scaled_l2(1.5).unwrap();

        let op = p.op.clone();
        let x_un = p.reconstruct(&control, Branch::Unsupervised, &z_un).unwrap();
        let out = wasserstein_loss(std::slice::from_ref(&x_un), &refs, &shared.features, &w, &mut r).unwrap();
        let (plan, selected) = (out.plan.plan.clone(), out.selected.clone());
        assert_eq!(selected.len(), 9);

        let objective = |c: &ControlParams| {
            let xs = p.reconstruct(c, Branch::Supervised, &z_sup).unwrap();
            let xu = p.reconstruct(c, Branch::Unsupervised, &z_un).unwrap();
            let ls = loss_sup(&xs, &y, loss).unwrap().0;
            let lw = transport_cost(&[xu], &refs, &shared.features, &w, &selected, &plan).unwrap().0;
            alpha * ls + (1.0 - alpha) * lw
        };

        let mut grad = vec![0.0; control.num_params()];
        for (b, z, weight) in [(Branch::Supervised, &z_sup, alpha), (Branch::Unsupervised, &z_un, 1.0 - alpha)] {
            let fc = p.flow_for(control.stop_time(b));
            let e = Energy { op: &op, term: control.term(b), reg: &control.tdv };
            let traj = flow::rollout(&fc, &e, z, p.init).unwrap();
            let upstream = match b {
                Branch::Supervised => loss_sup(traj.terminal(), &y, loss).unwrap().1,
                Branch::Unsupervised => {
                    let x = std::slice::from_ref(traj.terminal());
                    transport_cost(x, &refs, &shared.features, &w, &selected, &plan).unwrap().1.remove(0)
                }
            };
            let fg = flow::backprop(&traj, &fc, &e, z, &upstream).unwrap();
            control.accumulate(b, &fg, weight, &mut grad).unwrap();
        }

        let n_terms = 2 + control.term_sup.num_params() + control.term_unsup.num_params();
        let mut coords = vec![0, 1, 2 + 10, 2 + 20, n_terms - 1];
        coords.extend((0..10).map(|_| n_terms + r.gen_range(0..control.tdv.num_params())));
        let base = control.flat();
        let h = 1e-5;
        for k in coords {
            let eval = |d: f64| {
                let mut f = base.clone();
                f[k] += d;
                let mut c = control.clone();
                c.set_flat(&f).unwrap();
                objective(&c)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs()).max(1e-6);
            assert!((fd - grad[k]).abs() <= 1e-3 * scale, "coordinate {k}: analytic {} vs fd {fd}", grad[k]);
        }
    }
}
