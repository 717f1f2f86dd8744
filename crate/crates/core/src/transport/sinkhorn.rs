use nalgebra::DMatrix;

use super::patches::PatchSet;
use crate::error::{Error, Result};

/// Denominator floor in the scaling updates.
pub const DENOM_FLOOR: f64 = 1e-300;



/// `C_ij = ‖v_i - w_j‖_p`.
pub fn cost_matrix(v: &PatchSet, w: &PatchSet, p: f64) -> Result<DMatrix<f64>> {
    if v.dim != w.dim {
        return Err(Error::InvalidParameter(format!("row lengths {} and {} differ", v.dim, w.dim)));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::InvalidParameter(format!("norm order must be ≥ 1, got {p}")));
    }
    Ok(DMatrix::from_fn(v.len(), w.len(), |i, j| lp_distance(v.row(i), w.row(j), p)))
}

fn lp_distance(a: &[f64], b: &[f64], p: f64) -> f64 {
    if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else if p == 2.0 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    } else {
        a.iter().zip(b).map(|(x, y)| (x - y).abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Adds `scale · ∂‖a - b‖_p / ∂a` to `out`; the subgradient at `a = b` is 0.
pub(crate) fn lp_distance_grad(a: &[f64], b: &[f64], p: f64, scale: f64, out: &mut [f64]) {
    if p == 1.0 {
        for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
            let d: f64 = x - y;
            if d != 0.0 {
                *o += scale * d.signum();
            }
        }
        return;
    }
    let norm = lp_distance(a, b, p);
    if norm == 0.0 {
        return;
    }
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        let d: f64 = x - y;
        if d != 0.0 {
            *o += scale * d.signum() * (d.abs() / norm).powf(p - 1.0);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Entropic proximal parameter `β > 0`.
    pub beta: f64,
    /// Outer iterations `J ≥ 1`.
    pub iters: usize,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { beta: 1.0, iters: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub plan: DMatrix<f64>,
    /// `tr(CᵀP)` for the returned plan.
    pub cost: f64,
}

impl TransportPlan {
    /// Largest deviation of row and column sums from `1/N`.
    pub fn marginal_error(&self) -> f64 {
        let (n, m) = self.plan.shape();
        let rows = self.plan.row_iter().map(|r| (r.sum() - 1.0 / n as f64).abs());
        let cols = self.plan.column_iter().map(|c| (c.sum() - 1.0 / m as f64).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }
}

/// Nonnegative plan with row sums `mu` and column sums `nu` close to `p`:
/// rows and columns are scaled down to their targets, then the remaining
/// deficits are filled by a rank-one term. The entrywise ℓ¹ change is at
/// most twice the marginal error of `p`.
pub fn round_to_marginals(p: &DMatrix<f64>, mu: f64, nu: f64) -> DMatrix<f64> {
    let mut f = p.clone();
    for mut row in f.row_iter_mut() {
        let s = row.sum();
        if s > mu {
            row *= mu / s;
        }
    }
    for mut col in f.column_iter_mut() {
        let s = col.sum();
        if s > nu {
            col *= nu / s;
        }
    }
    let dr: Vec<f64> = f.row_iter().map(|r| (mu - r.sum()).max(0.0)).collect();
    let dc: Vec<f64> = f.column_iter().map(|c| (nu - c.sum()).max(0.0)).collect();
    let total: f64 = dr.iter().sum();
    if total > 0.0 {
        for (i, ri) in dr.iter().enumerate() {
            for (j, cj) in dc.iter().enumerate() {
                f[(i, j)] += ri * cj / total;
            }
        }
    }
    f
}

/// Proximal Sinkhorn iteration between uniform measures: each outer step
/// rescales the Gibbs kernel `exp(-C/β)` by the previous plan and performs
/// one pair of marginal scalings, carrying `b` over. The final plan is then
/// rounded onto the exact marginals by [`round_to_marginals`].
pub fn sinkhorn_proximal(cost: &DMatrix<f64>, cfg: SinkhornConfig) -> Result<TransportPlan> {
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) || cfg.iters == 0 {
        return Err(Error::InvalidParameter(format!("need β > 0 and J ≥ 1, got {cfg:?}")));
    }
    let (n, m) = cost.shape();
    if n == 0 || m == 0 {
        return Err(Error::EmptyBatch("transport between empty sets".into()));
    }
    let gibbs = cost.map(|c| (-c / cfg.beta).exp());
    if let Some(row) = gibbs.row_iter().position(|r| r.iter().all(|&g| g == 0.0)) {
        return Err(Error::KernelUnderflow { row, beta: cfg.beta });
    }
    let (mu, nu) = (1.0 / n as f64, 1.0 / m as f64);
    let mut b = nalgebra::DVector::from_element(m, nu);
    let mut plan = DMatrix::from_element(n, m, 1.0);
    for _ in 0..cfg.iters {
        let q = gibbs.component_mul(&plan);
        let a = (&q * &b).map(|s| mu / s.max(DENOM_FLOOR));
        b = (q.transpose() * &a).map(|s| nu / s.max(DENOM_FLOOR));
        plan = DMatrix::from_fn(n, m, |i, j| a[i] * q[(i, j)] * b[j]);
    }
    let plan = round_to_marginals(&plan, mu, nu);
    let total = cost.dot(&plan);
    Ok(TransportPlan { plan, cost: total })
}
