//! Timings of the kernels that dominate training: the regularizer and its
//! second-order products, single flow steps, trajectory backpropagation and
//! the patch transport loss.

use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};
use energy_recon::datafid::{DataTerm, DEFAULT_KNOTS, DEFAULT_Q};
use energy_recon::flow::{backprop, rollout_from, step, Energy, FlowConfig, Scheme};
use energy_recon::imaging::{synthetic, LinearOperator, NoiseKind, NoiseModel};
use energy_recon::rng;
use energy_recon::tdv::{TdvConfig, TdvParams};
use energy_recon::transport::{cost_matrix, extract_patches, sinkhorn_proximal, wasserstein_loss, FeatureOp, WassersteinConfig};
use energy_recon::Image;

fn scene(side: usize, seed: u64) -> Image {
    synthetic::scene(side, side, 1, &mut rng::stream(seed, "bench-scene"))
}

fn noisy(clean: &Image) -> Image {
    NoiseModel::new(NoiseKind::Gaussian { sigma: 25.0 / 255.0 }, 1).unwrap().corrupt(clean).unwrap()
}

fn regularizer() -> TdvParams {
    TdvParams::init(TdvConfig::default(), &mut rng::stream(1, "bench-tdv")).unwrap()
}

fn tdv(c: &mut Criterion) {
    let reg = regularizer();
    let x = scene(64, 1);
    c.bench_function("tdv value and gradient 64x64", |b| b.iter(|| reg.value_and_grad(black_box(&x)).unwrap()));
    let (_, g, tape) = reg.value_and_grad(&x).unwrap();
    c.bench_function("tdv second-order vjp 64x64", |b| b.iter(|| reg.second_order_vjp(&tape, black_box(&g)).unwrap()));
}

fn flow(c: &mut Criterion) {
    let reg = regularizer();
    let y = scene(64, 2);
    let z = noisy(&y);
    let op = LinearOperator::identity(y.shape());
    let l2 = DataTerm::scaled_l2(1.0).unwrap();
    let frechet = DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q);
    for (name, scheme, term) in [
        ("explicit", Scheme::Explicit, &frechet),
        ("semi-implicit", Scheme::SemiImplicit, &l2),
        ("euler-newton", Scheme::EulerNewton, &frechet),
    ] {
        let cfg = FlowConfig { scheme, steps: 10, stop_time: 0.1, ..FlowConfig::default() };
        let e = Energy { op: &op, term, reg: &reg };
        c.bench_function(&format!("{name} step 64x64"), |b| b.iter(|| step(&cfg, &e, black_box(&z), &z).unwrap()));
    }
    let cfg = FlowConfig { scheme: Scheme::SemiImplicit, steps: 10, stop_time: 0.1, ..FlowConfig::default() };
    let e = Energy { op: &op, term: &l2, reg: &reg };
    c.bench_function("semi-implicit rollout and backprop, 10 steps 32x32", |b| {
        let y = scene(32, 3);
        let z = noisy(&y);
        let op = LinearOperator::identity(y.shape());
        let e = Energy { op: &op, ..e };
        b.iter_batched(
            || z.clone(),
            |x0| {
                let traj = rollout_from(&cfg, &e, &z, x0, true).unwrap();
                let mut r = traj.terminal().clone();
                r.axpy(-1.0, &y);
                backprop(&traj, &cfg, &e, &z, &r).unwrap()
            },
            BatchSize::SmallInput,
        )
    });
}

fn transport(c: &mut Criterion) {
    let w = WassersteinConfig::default();
    let dct = FeatureOp::dct(w.patch);
    let recons = [scene(32, 4), scene(32, 5)];
    let refs = dct.apply(&extract_patches(&scene(64, 6), w.patch, w.stride).unwrap()).unwrap();
    let feats = dct.apply(&extract_patches(&recons[0], w.patch, w.stride).unwrap()).unwrap();
    let cost = cost_matrix(&feats, &refs, w.p).unwrap();
    c.bench_function(&format!("sinkhorn {}x{}", cost.nrows(), cost.ncols()), |b| {
        b.iter(|| sinkhorn_proximal(black_box(&cost), w.sinkhorn).unwrap())
    });
    c.bench_function("dct wasserstein loss, two 32x32 windows", |b| {
        b.iter(|| wasserstein_loss(black_box(&recons), &refs, &dct, &w, &mut rng::stream(1, "bench-draw")).unwrap())
    });
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = tdv, flow, transport
}
criterion_main!(kernels);
