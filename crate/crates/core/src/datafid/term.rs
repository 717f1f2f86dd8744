use super::project::{project_bounded_increments, project_column_with_zero};
use super::spline::{SplineCoeffs1D, SplineCoeffs2D};
use crate::error::{shape_err, Error, Result};

/// Smallest admissible scale of the squared ℓ² term.
pub const MIN_L2_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum DataTermKind {
    /// `D = ξ/2 ‖Ax - z‖²`.
    ScaledL2 { scale: f64 },
    /// Fréchet metric: `∇D_i = f((Ax - z)_i)` with odd monotone spline `f`.
    Frechet(SplineCoeffs1D),
    /// Generalized divergence: `∇D_i = s((Ax)_i, z_i) - s(z_i, z_i)`.
    Divergence(SplineCoeffs2D),
}

/// A learned data fidelity term.
///
/// In prox mode the spline coefficients parametrize the proximal map of the
/// semi-implicit scheme instead of `∇₁D`:
/// Fréchet `p(v, z) = z + f(v - z)`, divergence `p(v, z) = z + s(v, z) - s(z, z)`.
/// The learned map absorbs the step size. The scaled ℓ² term always uses
/// its closed-form proximal map.
#[derive(Debug, Clone, PartialEq)]
pub struct DataTerm {
    pub kind: DataTermKind,
    pub prox_mode: bool,
}

impl DataTerm {
    pub fn scaled_l2(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("l2 scale must be > 0, got {scale}")));
        }
        Ok(Self {
            kind: DataTermKind::ScaledL2 { scale },
            prox_mode: false,
        })
    }

    /// Fréchet term reproducing the squared ℓ² gradient `r ↦ r`.
    pub fn frechet(n_knots: usize, q: f64) -> Self {
        Self {
            kind: DataTermKind::Frechet(SplineCoeffs1D::linear(n_knots, q, 1.0)),
            prox_mode: false,
        }
    }

    /// Divergence term reproducing `(x, z) ↦ x - z`.
    pub fn divergence(half_width: usize, q: f64) -> Self {
        Self {
            kind: DataTermKind::Divergence(SplineCoeffs2D::linear(half_width, q, 1.0)),
            prox_mode: false,
        }
    }

    /// Learned Fréchet proximal map initialized to the ℓ² prox with step `step`.
    pub fn frechet_prox(n_knots: usize, q: f64, step: f64) -> Self {
        let t = Self {
            kind: DataTermKind::Frechet(SplineCoeffs1D::linear(n_knots, q, 1.0 / (1.0 + step))),
            prox_mode: true,
        };
        t.project()
    }

    /// Learned divergence proximal map initialized to the ℓ² prox with step `step`.
    pub fn divergence_prox(half_width: usize, q: f64, step: f64) -> Self {
        let t = Self {
            kind: DataTermKind::Divergence(SplineCoeffs2D::linear(half_width, q, 1.0 / (1.0 + step))),
            prox_mode: true,
        };
        t.project()
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            DataTermKind::ScaledL2 { .. } => "l2",
            DataTermKind::Frechet(_) => "frechet",
            DataTermKind::Divergence(_) => "divergence",
        }
    }

    pub fn num_params(&self) -> usize {
        match &self.kind {
            DataTermKind::ScaledL2 { .. } => 1,
            DataTermKind::Frechet(s) => s.coeffs.len(),
            DataTermKind::Divergence(s) => s.coeffs.len(),
        }
    }

    pub fn params(&self) -> Vec<f64> {
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => vec![*scale],
            DataTermKind::Frechet(s) => s.coeffs.clone(),
            DataTermKind::Divergence(s) => s.coeffs.clone(),
        }
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(shape_err(self.num_params(), p.len()));
        }
        match &mut self.kind {
            DataTermKind::ScaledL2 { scale } => *scale = p[0],
            DataTermKind::Frechet(s) => s.coeffs.copy_from_slice(p),
            DataTermKind::Divergence(s) => s.coeffs.copy_from_slice(p),
        }
        Ok(())
    }

    fn require_gradient_mode(&self) -> Result<()> {
        if self.prox_mode {
            return Err(Error::DataTermMode(
                "coefficients parametrize a proximal map, not ∇D".into(),
            ));
        }
        Ok(())
    }

    fn check_len(u: &[f64], z: &[f64]) -> Result<()> {
        if u.len() != z.len() {
            return Err(shape_err(u.len(), z.len()));
        }
        Ok(())
    }

    /// `order`-th derivative of `∇₁D` in its first argument, componentwise.
    fn grad_order(&self, u: &[f64], z: &[f64], order: u8) -> Result<Vec<f64>> {
        self.require_gradient_mode()?;
        Self::check_len(u, z)?;
        Ok(match &self.kind {
            DataTermKind::ScaledL2 { scale } => match order {
                0 => u.iter().zip(z).map(|(a, b)| scale * (a - b)).collect(),
                1 => vec![*scale; u.len()],
                _ => vec![0.0; u.len()],
            },
            DataTermKind::Frechet(s) => u.iter().zip(z).map(|(a, b)| s.eval(a - b, order)).collect(),
            DataTermKind::Divergence(s) => u
                .iter()
                .zip(z)
                .map(|(&a, &b)| {
                    let v = s.eval(a, b, order);
                    if order == 0 {
                        v - s.eval(b, b, 0)
                    } else {
                        v
                    }
                })
                .collect(),
        })
    }

    /// `∇₁D(u, z)` componentwise (`u = Ax`).
    pub fn grad(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.grad_order(u, z, 0)
    }

    /// Diagonal of `∇₁²D(u, z)`.
    pub fn hess_diag(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.grad_order(u, z, 1)
    }

    /// Diagonal third derivative (derivative of [`Self::hess_diag`]).
    pub fn third_diag(&self, u: &[f64], z: &[f64]) -> Result<Vec<f64>> {
        self.grad_order(u, z, 2)
    }

    fn coeff_vjp_order(&self, u: &[f64], z: &[f64], upstream: &[f64], order: u8) -> Result<Vec<f64>> {
        self.require_gradient_mode()?;
        Self::check_len(u, z)?;
        Self::check_len(u, upstream)?;
        let mut out = vec![0.0; self.num_params()];
        match &self.kind {
            DataTermKind::ScaledL2 { .. } => {
                if order == 0 {
                    out[0] = u.iter().zip(z).zip(upstream).map(|((a, b), g)| (a - b) * g).sum();
                } else {
                    out[0] = upstream.iter().sum();
                }
            }
            DataTermKind::Frechet(s) => {
                for ((a, b), g) in u.iter().zip(z).zip(upstream) {
                    s.accumulate_coeff_grad(a - b, order, *g, &mut out);
                }
            }
            DataTermKind::Divergence(s) => {
                for ((&a, &b), &g) in u.iter().zip(z).zip(upstream) {
                    s.accumulate_coeff_grad(a, b, order, g, &mut out);
                    if order == 0 {
                        s.accumulate_coeff_grad(b, b, 0, -g, &mut out);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `upstreamᵀ ∂(∇₁D)/∂ξ`.
    pub fn grad_coeff_vjp(&self, u: &[f64], z: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.coeff_vjp_order(u, z, upstream, 0)
    }

    /// `upstreamᵀ ∂(diag ∇₁²D)/∂ξ`.
    pub fn hess_coeff_vjp(&self, u: &[f64], z: &[f64], upstream: &[f64]) -> Result<Vec<f64>> {
        self.coeff_vjp_order(u, z, upstream, 1)
    }

    /// Proximal step `(Id + step ∇₁D(·, z))⁻¹ v`, or the learned map in prox mode.
    pub fn prox(&self, v: &[f64], z: &[f64], step: f64) -> Result<Vec<f64>> {
        Self::check_len(v, z)?;
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => {
                let d = 1.0 + step * scale;
                Ok(v.iter().zip(z).map(|(a, b)| (a + step * scale * b) / d).collect())
            }
            _ if !self.prox_mode => Err(Error::DataTermMode(
                "spline term has no proximal parametrization (prox_mode is off)".into(),
            )),
            DataTermKind::Frechet(s) => Ok(v.iter().zip(z).map(|(a, b)| b + s.eval(a - b, 0)).collect()),
            DataTermKind::Divergence(s) => Ok(v
                .iter()
                .zip(z)
                .map(|(&a, &b)| b + s.eval(a, b, 0) - s.eval(b, b, 0))
                .collect()),
        }
    }

    /// Componentwise `∂ prox / ∂v`.
    pub fn prox_dv(&self, v: &[f64], z: &[f64], step: f64) -> Result<Vec<f64>> {
        Self::check_len(v, z)?;
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => Ok(vec![1.0 / (1.0 + step * scale); v.len()]),
            _ if !self.prox_mode => Err(Error::DataTermMode("prox_mode is off".into())),
            DataTermKind::Frechet(s) => Ok(v.iter().zip(z).map(|(a, b)| s.eval(a - b, 1)).collect()),
            DataTermKind::Divergence(s) => Ok(v.iter().zip(z).map(|(&a, &b)| s.eval(a, b, 1)).collect()),
        }
    }

    /// `upstreamᵀ ∂ prox / ∂step` (zero for learned maps).
    pub fn prox_dstep_vjp(&self, v: &[f64], z: &[f64], step: f64, upstream: &[f64]) -> f64 {
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => {
                let d = 1.0 + step * scale;
                v.iter()
                    .zip(z)
                    .zip(upstream)
                    .map(|((a, b), g)| g * scale * (b - a) / (d * d))
                    .sum()
            }
            _ => 0.0,
        }
    }

    /// `upstreamᵀ ∂ prox / ∂ξ`.
    pub fn prox_coeff_vjp(&self, v: &[f64], z: &[f64], step: f64, upstream: &[f64]) -> Result<Vec<f64>> {
        Self::check_len(v, z)?;
        Self::check_len(v, upstream)?;
        let mut out = vec![0.0; self.num_params()];
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => {
                let d = 1.0 + step * scale;
                out[0] = v
                    .iter()
                    .zip(z)
                    .zip(upstream)
                    .map(|((a, b), g)| g * step * (b - a) / (d * d))
                    .sum();
            }
            _ if !self.prox_mode => return Err(Error::DataTermMode("prox_mode is off".into())),
            DataTermKind::Frechet(s) => {
                for ((a, b), g) in v.iter().zip(z).zip(upstream) {
                    s.accumulate_coeff_grad(a - b, 0, *g, &mut out);
                }
            }
            DataTermKind::Divergence(s) => {
                for ((&a, &b), &g) in v.iter().zip(z).zip(upstream) {
                    s.accumulate_coeff_grad(a, b, 0, g, &mut out);
                    s.accumulate_coeff_grad(b, b, 0, -g, &mut out);
                }
            }
        }
        Ok(out)
    }

    /// Nearest coefficients satisfying the constraints; in prox mode the
    /// coefficients are then rescaled so the map is 1-Lipschitz.
    pub fn project(&self) -> DataTerm {
        let mut out = self.clone();
        match &mut out.kind {
            DataTermKind::ScaledL2 { scale } => {
                if !(*scale >= MIN_L2_SCALE) {
                    *scale = MIN_L2_SCALE;
                }
            }
            DataTermKind::Frechet(s) => {
                let delta = if self.prox_mode { s.q / s.coeffs.len() as f64 } else { f64::INFINITY };
                s.coeffs = project_bounded_increments(&s.coeffs, delta);
            }
            DataTermKind::Divergence(s) => {
                let m = s.side();
                let delta = if self.prox_mode { s.q / s.half as f64 } else { f64::INFINITY };
                for j in 0..m {
                    let col: Vec<f64> = (0..m).map(|i| s.coeffs[i * m + j]).collect();
                    let p = project_column_with_zero(&col, j, delta);
                    for i in 0..m {
                        s.coeffs[i * m + j] = p[i];
                    }
                }
            }
        }
        out
    }

    /// Lists every violated coefficient constraint.
    pub fn invariant_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        match &self.kind {
            DataTermKind::ScaledL2 { scale } => {
                if !(*scale > 0.0) {
                    bad.push(format!("l2 scale {scale} <= 0"));
                }
            }
            DataTermKind::Frechet(s) => {
                let mut prev = 0.0;
                for (j, &c) in s.coeffs.iter().enumerate() {
                    if c < prev {
                        bad.push(format!("frechet coefficient {} decreases ({prev} -> {c})", j + 1));
                    }
                    prev = c;
                }
                if self.prox_mode && s.slope_bound() > 1.0 + 1e-12 {
                    bad.push(format!("frechet prox slope {} > 1", s.slope_bound()));
                }
            }
            DataTermKind::Divergence(s) => {
                let h = s.half as i64;
                for j in -h..=h {
                    if s.at(j, j) != 0.0 {
                        bad.push(format!("divergence diagonal ({j},{j}) = {}", s.at(j, j)));
                    }
                    for i in (-h + 1)..=h {
                        if s.at(i, j) < s.at(i - 1, j) {
                            bad.push(format!("divergence column {j} decreases at {i}"));
                        }
                    }
                }
                if self.prox_mode && s.slope_bound() > 1.0 + 1e-12 {
                    bad.push(format!("divergence prox slope {} > 1", s.slope_bound()));
                }
            }
        }
        bad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    fn random_pairs(seed: u64, n: usize, q: f64) -> (Vec<f64>, Vec<f64>) {
        let mut r = rng::stream(seed, "pairs");
        let u = (0..n).map(|_| r.gen_range(-0.95 * q..0.95 * q)).collect();
        let z = (0..n).map(|_| r.gen_range(-0.95 * q..0.95 * q)).collect();
        (u, z)
    }

    /// Perturbs spline coefficients so derivatives are not trivially constant.
    fn wiggled(mut t: DataTerm, seed: u64) -> DataTerm {
        let mut r = rng::stream(seed, "wiggle");
        let mut p = t.params();
        for v in &mut p {
            *v += r.gen_range(-0.3..0.3);
        }
        t.set_params(&p).unwrap();
        t.project()
    }

    fn terms() -> Vec<DataTerm> {
        vec![
            DataTerm::scaled_l2(1.7).unwrap(),
            wiggled(DataTerm::frechet(31, 2.0), 1),
            wiggled(DataTerm::divergence(15, 2.0), 2),
        ]
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn l2_zero_residual_gives_zero_gradient() {
        let t = DataTerm::scaled_l2(1.0).unwrap();
        let u = vec![0.3, -0.2, 0.9];
        assert_eq!(t.grad(&u, &u).unwrap(), vec![0.0; 3]);
        assert_eq!(t.hess_diag(&u, &u).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let h = 1e-5;
        for t in terms() {
            let (u, z) = random_pairs(7, 200, 2.0);
            let hd = t.hess_diag(&u, &z).unwrap();
            let td = t.third_diag(&u, &z).unwrap();
            let up: Vec<f64> = u.iter().map(|v| v + h).collect();
            let dn: Vec<f64> = u.iter().map(|v| v - h).collect();
            let gp = t.grad(&up, &z).unwrap();
            let gm = t.grad(&dn, &z).unwrap();
            let hp = t.hess_diag(&up, &z).unwrap();
            let hm = t.hess_diag(&dn, &z).unwrap();
            let tp = t.third_diag(&up, &z).unwrap();
            let tm = t.third_diag(&dn, &z).unwrap();
            for i in 0..u.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!(rel(fd, hd[i]) < 1e-6, "{} hess {fd} vs {}", t.name(), hd[i]);
                // the third derivative jumps at knots
                if tp[i] != tm[i] {
                    continue;
                }
                let fd3 = (hp[i] - hm[i]) / (2.0 * h);
                assert!(rel(fd3, td[i]) < 1e-5, "{} third {fd3} vs {}", t.name(), td[i]);
            }
        }
    }

    #[test]
    fn coefficient_vjps_match_finite_differences() {
        let h = 1e-6;
        for t in terms() {
            let (u, z) = random_pairs(8, 50, 2.0);
            let mut r = rng::stream(9, "up");
            let g: Vec<f64> = (0..u.len()).map(|_| r.gen_range(-1.0..1.0)).collect();
            let vg = t.grad_coeff_vjp(&u, &z, &g).unwrap();
            let vh = t.hess_coeff_vjp(&u, &z, &g).unwrap();
            let p = t.params();
            let idx: Vec<usize> = (0..5).map(|_| r.gen_range(0..p.len())).collect();
            for &k in &idx {
                let mut tp = t.clone();
                let mut tm = t.clone();
                let mut pp = p.clone();
                pp[k] += h;
                tp.set_params(&pp).unwrap();
                pp[k] -= 2.0 * h;
                tm.set_params(&pp).unwrap();
                let dot = |a: Vec<f64>| a.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
                let fd = (dot(tp.grad(&u, &z).unwrap()) - dot(tm.grad(&u, &z).unwrap())) / (2.0 * h);
                assert!(rel(fd, vg[k]) < 1e-6, "{} grad coeff {k}", t.name());
                let fdh = (dot(tp.hess_diag(&u, &z).unwrap()) - dot(tm.hess_diag(&u, &z).unwrap()))
                    / (2.0 * h);
                assert!(rel(fdh, vh[k]) < 1e-6, "{} hess coeff {k}", t.name());
            }
        }
    }

    #[test]
    fn divergence_vanishes_on_diagonal() {
        let t = wiggled(DataTerm::divergence(15, 2.0), 3);
        let mut r = rng::stream(10, "diag");
        let x: Vec<f64> = (0..100).map(|_| r.gen_range(-2.0..2.0)).collect();
        assert!(t.grad(&x, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frechet_gradient_is_odd() {
        let t = wiggled(DataTerm::frechet(31, 2.0), 4);
        let (u, z) = random_pairs(11, 100, 2.0);
        let a = t.grad(&u, &z).unwrap();
        let b = t.grad(&z, &u).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-14);
        }
    }

    #[test]
    fn initialized_splines_reproduce_l2_gradient() {
        let (u, z) = random_pairs(12, 100, 0.9);
        for t in [DataTerm::frechet(31, 2.0), DataTerm::divergence(15, 2.0)] {
            for ((a, b), g) in u.iter().zip(&z).zip(t.grad(&u, &z).unwrap()) {
                assert!((g - (a - b)).abs() < 0.02, "{}: {g} vs {}", t.name(), a - b);
            }
        }
    }

    #[test]
    fn prox_mode_errors() {
        let t = DataTerm::frechet_prox(31, 2.0, 0.1);
        assert!(matches!(t.grad(&[0.0], &[0.0]), Err(Error::DataTermMode(_))));
        assert!(matches!(t.hess_diag(&[0.0], &[0.0]), Err(Error::DataTermMode(_))));
        let g = DataTerm::frechet(31, 2.0);
        assert!(matches!(g.prox(&[0.0], &[0.0], 0.1), Err(Error::DataTermMode(_))));
    }

    #[test]
    fn l2_prox_closed_form_limits() {
        let t = DataTerm::scaled_l2(1.0).unwrap();
        let v = vec![0.2, 0.7];
        let z = vec![0.5, 0.1];
        assert_eq!(t.prox(&v, &z, 0.0).unwrap(), v);
        let far = t.prox(&v, &z, 1e12).unwrap();
        for (a, b) in far.iter().zip(&z) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn prox_derivatives_match_finite_differences() {
        let h = 1e-6;
        let step = 0.3;
        let prox_terms = vec![
            DataTerm::scaled_l2(1.3).unwrap(),
            wiggled(DataTerm::frechet_prox(31, 2.0, step), 5),
            wiggled(DataTerm::divergence_prox(15, 2.0, step), 6),
        ];
        for t in prox_terms {
            let (v, z) = random_pairs(13, 40, 2.0);
            let dv = t.prox_dv(&v, &z, step).unwrap();
            let vp: Vec<f64> = v.iter().map(|a| a + h).collect();
            let vm: Vec<f64> = v.iter().map(|a| a - h).collect();
            let pp = t.prox(&vp, &z, step).unwrap();
            let pm = t.prox(&vm, &z, step).unwrap();
            for i in 0..v.len() {
                assert!(rel((pp[i] - pm[i]) / (2.0 * h), dv[i]) < 1e-6);
            }
            let g: Vec<f64> = (0..v.len()).map(|i| ((i * 7 % 5) as f64 - 2.0) / 3.0).collect();
            let dot = |a: Vec<f64>| a.iter().zip(&g).map(|(x, y)| x * y).sum::<f64>();
            let fd_step = (dot(t.prox(&v, &z, step + h).unwrap()) - dot(t.prox(&v, &z, step - h).unwrap()))
                / (2.0 * h);
            assert!(rel(fd_step, t.prox_dstep_vjp(&v, &z, step, &g)) < 1e-6);
            let cv = t.prox_coeff_vjp(&v, &z, step, &g).unwrap();
            let p = t.params();
            for k in [0, p.len() / 2, p.len() - 1] {
                let mut a = t.clone();
                let mut b = t.clone();
                let mut q = p.clone();
                q[k] += h;
                a.set_params(&q).unwrap();
                q[k] -= 2.0 * h;
                b.set_params(&q).unwrap();
                let fd = (dot(a.prox(&v, &z, step).unwrap()) - dot(b.prox(&v, &z, step).unwrap())) / (2.0 * h);
                assert!(rel(fd, cv[k]) < 1e-6);
            }
        }
    }

    #[test]
    fn projection_idempotent_and_feasible() {
        let mut r = rng::stream(14, "projterm");
        for base in [
            DataTerm::frechet(31, 2.0),
            DataTerm::divergence(15, 2.0),
            DataTerm::frechet_prox(31, 2.0, 0.2),
            DataTerm::divergence_prox(15, 2.0, 0.2),
        ] {
            let mut t = base.clone();
            let p: Vec<f64> = t.params().iter().map(|v| v + r.gen_range(-1.0..1.0)).collect();
            t.set_params(&p).unwrap();
            let once = t.project();
            assert!(once.invariant_violations().is_empty(), "{:?}", once.invariant_violations());
            assert_eq!(once.project(), once);
            assert_eq!(base.project(), base.project().project());
        }
    }

    #[test]
    fn prox_maps_are_monotone_and_one_lipschitz_on_grid() {
        let mut r = rng::stream(15, "lip");
        for base in [DataTerm::frechet_prox(31, 2.0, 0.05), DataTerm::divergence_prox(15, 2.0, 0.05)] {
            let mut t = base.clone();
            let p: Vec<f64> = t.params().iter().map(|v| v * 3.0 + r.gen_range(-0.5..0.5)).collect();
            t.set_params(&p).unwrap();
            let t = t.project();
            for z in [-1.0, 0.0, 0.37, 1.0] {
                let grid: Vec<f64> = (0..1024).map(|k| -2.5 + 5.0 * k as f64 / 1023.0).collect();
                let zs = vec![z; grid.len()];
                let vals = t.prox(&grid, &zs, 0.05).unwrap();
                for k in 1..grid.len() {
                    let slope = (vals[k] - vals[k - 1]) / (grid[k] - grid[k - 1]);
                    assert!(slope >= -1e-12, "{} not monotone at z={z} v={}: {slope}", t.name(), grid[k]);
                    assert!(slope <= 1.0 + 1e-9, "slope {slope}");
                }
            }
        }
    }

    #[test]
    fn l2_scale_projection() {
        let mut t = DataTerm::scaled_l2(1.0).unwrap();
        t.set_params(&[-3.0]).unwrap();
        assert_eq!(t.project().params(), vec![MIN_L2_SCALE]);
        assert!(DataTerm::scaled_l2(0.0).is_err());
    }
}
