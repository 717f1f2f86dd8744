use super::*;
use crate::datafid::{DataTerm, DEFAULT_KNOTS, DEFAULT_Q};
use crate::imaging::{Image, InitOperator, LinearOperator, Shape};
use crate::rng::{self, Rng};
use crate::tdv::{TdvConfig, TdvParams};
use rand::Rng as _;

fn random_image(shape: Shape, r: &mut Rng) -> Image {
    Image::from_fn(shape, |_, _, _| r.gen_range(0.0..1.0))
}

/// A regularizer with output weights large enough to matter at unit step.
fn regularizer(seed: u64) -> TdvParams {
    let mut r = rng::stream(seed, "flow-reg");
    let mut p = TdvParams::init(TdvConfig::default(), &mut r).unwrap();
    let last = p.tensors.len() - 1;
    p.tensors[last].data.iter_mut().for_each(|v| *v = r.gen_range(0.05..0.2));
    p
}

fn cfg(scheme: Scheme, steps: usize, stop_time: f64) -> FlowConfig {
    FlowConfig { scheme, steps, stop_time, ..FlowConfig::default() }
}

fn perturbed(term: &DataTerm, r: &mut Rng, amp: f64) -> DataTerm {
    let mut t = term.clone();
    let p: Vec<f64> = t.params().iter().map(|v| v * (1.0 + amp * r.gen_range(-1.0..1.0))).collect();
    t.set_params(&p).unwrap();
    t
}

#[test]
fn quadratic_closed_forms() {
    let shape = Shape::new(8, 8, 1);
    let mut r = rng::stream(1, "closed");
    let z = random_image(shape, &mut r);
    let x0 = random_image(shape, &mut r);
    let op = LinearOperator::identity(shape);
    let reg = TdvParams::zeros(TdvConfig::default());
    let xi = 0.8;
    let term = DataTerm::scaled_l2(xi).unwrap();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let (s, t) = (7, 2.1);
    let h = t / s as f64;
    let factors = [
        (Scheme::Explicit, (1.0 - h * xi).powi(s as i32)),
        (Scheme::SemiImplicit, (1.0 + h * xi).powi(-(s as i32))),
        (Scheme::EulerNewton, (1.0 + h * xi).powi(-(s as i32))),
    ];
    for (scheme, f) in factors {
        let traj = rollout_from(&cfg(scheme, s, t), &e, &z, x0.clone(), false).unwrap();
        let expected = z.zip_map(&x0, |zv, xv| zv + f * (xv - zv));
        let mut d = traj.terminal().clone();
        d.axpy(-1.0, &expected);
        assert!(d.norm() < 1e-12, "{scheme}: {}", d.norm());
    }
}

#[test]
fn zero_stop_time_is_identity() {
    let shape = Shape::new(8, 8, 1);
    let mut r = rng::stream(2, "t0");
    let z = random_image(shape, &mut r);
    let x0 = random_image(shape, &mut r);
    let op = LinearOperator::identity(shape);
    let reg = regularizer(2);
    let term = DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q);
    let e = Energy { op: &op, term: &term, reg: &reg };
    for scheme in [Scheme::Explicit, Scheme::EulerNewton] {
        let traj = rollout_from(&cfg(scheme, 4, 0.0), &e, &z, x0.clone(), false).unwrap();
        assert_eq!(traj.terminal(), &x0);
    }
    let l2 = DataTerm::scaled_l2(3.0).unwrap();
    let e = Energy { op: &op, term: &l2, reg: &reg };
    let traj = rollout_from(&cfg(Scheme::SemiImplicit, 4, 0.0), &e, &z, x0.clone(), false).unwrap();
    assert_eq!(traj.terminal(), &x0);
}

#[test]
fn euler_newton_equals_semi_implicit_for_l2_identity() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::identity(shape);
    let reg = regularizer(3);
    let mut r = rng::stream(3, "en-impl");
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let term = DataTerm::scaled_l2(r.gen_range(0.1..20.0)).unwrap();
        let e = Energy { op: &op, term: &term, reg: &reg };
        let x = random_image(shape, &mut r);
        let z = random_image(shape, &mut r);
        let t = r.gen_range(0.01..5.0);
        let a = step(&cfg(Scheme::EulerNewton, 1, t), &e, &x, &z).unwrap();
        let b = step(&cfg(Scheme::SemiImplicit, 1, t), &e, &x, &z).unwrap();
        worst = worst.max(a.zip_map(&b, |p, q| (p - q).abs()).data().iter().cloned().fold(0.0, f64::max));
    }
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn euler_newton_step_matches_dense_newton_solve() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::gaussian_downsample(shape, 2, 1.0).unwrap();
    let reg = regularizer(4);
    let mut r = rng::stream(4, "dense");
    let term = perturbed(&DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q), &mut r, 0.3).project();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let x = random_image(shape, &mut r);
    let z = random_image(op.out_shape(), &mut r);
    let h = 0.4;
    let mut c = cfg(Scheme::EulerNewton, 1, h);
    c.cg_iters = 200;
    c.cg_tol = 1e-14;
    let got = step(&c, &e, &x, &z).unwrap();

    let (_, gr, _) = reg.value_and_grad(&x).unwrap();
    let mut v = x.clone();
    v.axpy(-h, &gr);
    let u = op.apply(&v).unwrap();
    let g = Image::new(4, 4, 1, term.grad(u.data(), z.data()).unwrap()).unwrap();
    let w = Image::new(4, 4, 1, term.hess_diag(u.data(), z.data()).unwrap()).unwrap();
    let b = op.apply_adjoint(&g).unwrap();
    let n = shape.len();
    let mut m = nalgebra::DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut ej = Image::zeros(shape);
        ej.data_mut()[j] = 1.0;
        let aw = op.apply(&ej).unwrap().zip_map(&w, |a, b| a * b);
        let col = op.apply_adjoint(&aw).unwrap();
        for i in 0..n {
            m[(i, j)] = col.data()[i] + if i == j { 1.0 / h } else { 0.0 };
        }
    }
    let d = m.lu().solve(&nalgebra::DVector::from_column_slice(b.data())).unwrap();
    let expected = Image::new(8, 8, 1, v.data().iter().zip(d.iter()).map(|(a, b)| a - b).collect()).unwrap();
    let mut diff = got;
    diff.axpy(-1.0, &expected);
    assert!(diff.norm() < 1e-10, "{:e}", diff.norm());
}

#[test]
fn explicit_step_is_geometric_contraction_without_regularizer() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::identity(shape);
    let reg = TdvParams::zeros(TdvConfig::default());
    let term = DataTerm::scaled_l2(1.0).unwrap();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let mut r = rng::stream(5, "geo");
    let z = random_image(shape, &mut r);
    let x0 = random_image(shape, &mut r);
    let traj = rollout_from(&cfg(Scheme::Explicit, 10, 5.0), &e, &z, x0, false).unwrap();
    let errs: Vec<f64> = traj
        .states
        .iter()
        .map(|x| {
            let mut d = x.clone();
            d.axpy(-1.0, &z);
            d.norm()
        })
        .collect();
    for w in errs.windows(2) {
        assert!((w[1] / w[0] - 0.5).abs() < 1e-12);
    }
}

#[test]
fn explicit_diverges_beyond_stability_limit_while_implicit_contracts() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::identity(shape);
    let reg = TdvParams::zeros(TdvConfig::default());
    let term = DataTerm::scaled_l2(10.0).unwrap();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let mut r = rng::stream(6, "stab");
    let z = random_image(shape, &mut r);
    let x0 = random_image(shape, &mut r);
    let dist = |x: &Image| {
        let mut d = x.clone();
        d.axpy(-1.0, &z);
        d.norm()
    };
    // hξ = 3 > 2
    let ex = rollout_from(&cfg(Scheme::Explicit, 5, 1.5), &e, &z, x0.clone(), false).unwrap();
    assert!(dist(ex.terminal()) > 10.0 * dist(&x0));
    let im = rollout_from(&cfg(Scheme::SemiImplicit, 5, 1.5), &e, &z, x0.clone(), false).unwrap();
    assert!(dist(im.terminal()) < dist(&x0) / 100.0);
    let huge = rollout_from(&cfg(Scheme::Explicit, 1000, 1000.0), &e, &z, x0, false);
    assert!(matches!(huge, Err(Error::NonFinite { .. })));
}

#[test]
fn energy_decreases_for_small_explicit_steps() {
    let shape = Shape::new(16, 16, 1);
    let op = LinearOperator::gaussian_downsample(shape, 2, 1.0).unwrap();
    let reg = regularizer(7);
    let xi = 2.0;
    let term = DataTerm::scaled_l2(xi).unwrap();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let mut r = rng::stream(7, "mono");
    let z = random_image(op.out_shape(), &mut r);
    let x0 = InitOperator::ScaledAdjoint(4.0).apply(&op, &z).unwrap();
    let energy = |x: &Image| {
        let mut d = op.apply(x).unwrap();
        d.axpy(-1.0, &z);
        0.5 * xi * d.dot(&d) + reg.value(x).unwrap().0
    };
    let traj = rollout_from(&cfg(Scheme::Explicit, 20, 0.2), &e, &z, x0, false).unwrap();
    let es: Vec<f64> = traj.states.iter().map(energy).collect();
    for w in es.windows(2) {
        assert!(w[1] <= w[0], "{es:?}");
    }
}

#[test]
fn rollouts_are_deterministic_and_validated() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::gaussian_downsample(shape, 2, 1.0).unwrap();
    let reg = regularizer(8);
    let term = DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q);
    let e = Energy { op: &op, term: &term, reg: &reg };
    let mut r = rng::stream(8, "det");
    let z = random_image(op.out_shape(), &mut r);
    let init = InitOperator::ScaledAdjoint(4.0);
    let c = cfg(Scheme::EulerNewton, 4, 1.0);
    let a = reconstruct(&c, &e, &z, init).unwrap();
    let b = rollout(&c, &e, &z, init).unwrap();
    assert!(a.data().iter().zip(b.terminal().data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    assert!(matches!(
        rollout(&cfg(Scheme::SemiImplicit, 4, 1.0), &e, &z, init),
        Err(Error::SchemeRequiresIdentity)
    ));
    assert!(rollout(&cfg(Scheme::Explicit, 0, 1.0), &e, &z, init).is_err());
    assert!(rollout(&cfg(Scheme::Explicit, 2, 1001.0), &e, &z, init).is_err());
    assert!(rollout(&cfg(Scheme::Explicit, 2, -1.0), &e, &z, init).is_err());
    let bare = rollout_from(&c, &e, &z, a.clone(), false).unwrap();
    assert!(matches!(backprop(&bare, &c, &e, &z, &a), Err(Error::MissingTape)));
    assert_eq!("en".parse::<Scheme>().unwrap(), Scheme::EulerNewton);
    assert!("rk4".parse::<Scheme>().is_err());
}

struct Case {
    scheme: Scheme,
    op: LinearOperator,
    term: DataTerm,
    stop_time: f64,
}

/// `L = ½‖x_S - y‖²` and its gradient through the unrolled flow.
fn loss(case: &Case, term: &DataTerm, reg: &TdvParams, t: f64, z: &Image, x0: &Image, y: &Image) -> f64 {
    let e = Energy { op: &case.op, term, reg };
    let traj = rollout_from(&cfg(case.scheme, 3, t), &e, z, x0.clone(), false).unwrap();
    let mut d = traj.terminal().clone();
    d.axpy(-1.0, y);
    0.5 * d.dot(&d)
}

fn check_gradients(case: Case, seed: u64) {
    let shape = case.op.in_shape();
    let mut r = rng::stream(seed, "fd");
    let reg = regularizer(seed);
    let z = random_image(case.op.out_shape(), &mut r);
    let x0 = random_image(shape, &mut r);
    let y = random_image(shape, &mut r);
    let c = cfg(case.scheme, 3, case.stop_time);
    let e = Energy { op: &case.op, term: &case.term, reg: &reg };
    let traj = rollout_from(&c, &e, &z, x0.clone(), true).unwrap();
    let mut xb = traj.terminal().clone();
    xb.axpy(-1.0, &y);
    let g = backprop(&traj, &c, &e, &z, &xb).unwrap();
    let f = |term: &DataTerm, reg: &TdvParams, t: f64, x0: &Image| loss(&case, term, reg, t, &z, x0, &y);
    let eps = 1e-6;
    let close = |a: f64, b: f64, what: &str| {
        assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs().max(b.abs())), "{} {what}: adjoint {a:e} vs fd {b:e}", case.scheme);
    };

    let t = case.stop_time;
    let fd = (f(&case.term, &reg, t + eps, &x0) - f(&case.term, &reg, t - eps, &x0)) / (2.0 * eps);
    close(g.stop_time, fd, "T");

    let p = case.term.params();
    let dir: Vec<f64> = p.iter().map(|_| r.gen_range(-1.0..1.0)).collect();
    let shifted = |s: f64| {
        let mut t2 = case.term.clone();
        t2.set_params(&p.iter().zip(&dir).map(|(a, d)| a + s * d).collect::<Vec<_>>()).unwrap();
        t2
    };
    let fd = (f(&shifted(eps), &reg, t, &x0) - f(&shifted(-eps), &reg, t, &x0)) / (2.0 * eps);
    close(g.term.iter().zip(&dir).map(|(a, b)| a * b).sum(), fd, "xi");

    let theta = reg.flat();
    let dir: Vec<f64> = theta.iter().map(|_| r.gen_range(-1.0..1.0)).collect();
    let shifted = |s: f64| {
        let mut p2 = reg.clone();
        p2.set_flat(&theta.iter().zip(&dir).map(|(a, d)| a + s * d).collect::<Vec<_>>()).unwrap();
        p2
    };
    let fd = (f(&case.term, &shifted(eps), t, &x0) - f(&case.term, &shifted(-eps), t, &x0)) / (2.0 * eps);
    close(g.reg.iter().zip(&dir).map(|(a, b)| a * b).sum(), fd, "theta");

    let dir = random_image(shape, &mut r);
    let mut plus = x0.clone();
    plus.axpy(eps, &dir);
    let mut minus = x0.clone();
    minus.axpy(-eps, &dir);
    let fd = (f(&case.term, &reg, t, &plus) - f(&case.term, &reg, t, &minus)) / (2.0 * eps);
    close(g.initial.dot(&dir), fd, "x0");
}

fn shape8() -> Shape {
    Shape::new(8, 8, 1)
}

fn curved_frechet(seed: u64) -> DataTerm {
    perturbed(&DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q), &mut rng::stream(seed, "curve"), 0.5).project()
}

#[test]
fn explicit_gradients_match_finite_differences() {
    check_gradients(
        Case { scheme: Scheme::Explicit, op: LinearOperator::identity(shape8()), term: curved_frechet(10), stop_time: 0.7 },
        10,
    );
    let op = LinearOperator::gaussian_downsample(shape8(), 2, 1.0).unwrap();
    check_gradients(Case { scheme: Scheme::Explicit, op, term: DataTerm::scaled_l2(3.0).unwrap(), stop_time: 0.9 }, 11);
}

#[test]
fn semi_implicit_gradients_match_finite_differences() {
    let op = LinearOperator::identity(shape8());
    check_gradients(Case { scheme: Scheme::SemiImplicit, op: op.clone(), term: DataTerm::scaled_l2(2.0).unwrap(), stop_time: 1.3 }, 12);
    let term = perturbed(&DataTerm::frechet_prox(DEFAULT_KNOTS, DEFAULT_Q, 0.5), &mut rng::stream(13, "p"), 0.4).project();
    check_gradients(Case { scheme: Scheme::SemiImplicit, op, term, stop_time: 0.8 }, 13);
}

#[test]
fn euler_newton_gradients_match_finite_differences() {
    check_gradients(
        Case { scheme: Scheme::EulerNewton, op: LinearOperator::identity(shape8()), term: curved_frechet(14), stop_time: 1.1 },
        14,
    );
    let op = LinearOperator::gaussian_downsample(shape8(), 2, 1.0).unwrap();
    check_gradients(Case { scheme: Scheme::EulerNewton, op, term: curved_frechet(15), stop_time: 2.0 }, 15);
}

#[test]
fn explicit_flow_converges_at_first_order() {
    let shape = Shape::new(8, 8, 1);
    let op = LinearOperator::identity(shape);
    let reg = regularizer(16);
    let term = DataTerm::scaled_l2(1.0).unwrap();
    let e = Energy { op: &op, term: &term, reg: &reg };
    let z = random_image(shape, &mut rng::stream(16, "conv"));
    let steps = [4, 8, 16, 32];
    let errs = terminal_errors(&cfg(Scheme::Explicit, 1, 1.0), &e, &z, InitOperator::Identity, &steps, 1024).unwrap();
    let slope = loglog_slope(&steps, &errs);
    assert!((slope - 1.0).abs() < 0.15, "slope {slope} errors {errs:?}");
}
