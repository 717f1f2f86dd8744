//! Conjugate gradients for the Newton system `(c I + Aᵀ W A) d = b` with an
//! exact reverse pass through the executed iterations.

use crate::error::Result;
use crate::imaging::{Image, LinearOperator};

/// `M = c I + Aᵀ diag(w) A` with `w` living in the range of `A`.
#[derive(Debug, Clone)]
pub struct NewtonSystem<'a> {
    pub op: &'a LinearOperator,
    pub c: f64,
    pub w: Image,
}

impl NewtonSystem<'_> {
    pub fn apply(&self, p: &Image) -> Result<Image> {
        let ap = self.op.apply(p)?;
        let wap = ap.zip_map(&self.w, |a, w| a * w);
        let mut out = self.op.apply_adjoint(&wap)?;
        out.axpy(self.c, p);
        Ok(out)
    }
}

#[derive(Debug, Clone)]
struct CgIter {
    p: Image,
    q: Image,
    rho: f64,
    pi: f64,
    alpha: f64,
    r_next: Image,
    rho_next: f64,
    beta: f64,
}

/// Executed iterations of one solve, enough to replay its reverse pass.
#[derive(Debug, Clone)]
pub struct CgRecord {
    iters: Vec<CgIter>,
    b: Image,
    pub residual: f64,
    pub converged: bool,
}

impl CgRecord {
    pub fn iterations(&self) -> usize {
        self.iters.len()
    }
}

/// Runs at most `max_iter` iterations from `d₀ = 0`, stopping early once
/// `‖r‖ ≤ tol ‖b‖`.
pub fn solve(sys: &NewtonSystem, b: &Image, max_iter: usize, tol: f64) -> Result<(Image, CgRecord)> {
    let mut x = Image::zeros(b.shape());
    let mut r = b.clone();
    let mut p = b.clone();
    let mut rho = r.dot(&r);
    let b_norm = rho.sqrt();
    let mut iters = Vec::new();
    let mut converged = b_norm == 0.0;
    if !converged {
        for _ in 0..max_iter {
            let q = sys.apply(&p)?;
            let pi = p.dot(&q);
            let alpha = rho / pi;
            x.axpy(alpha, &p);
            let mut r_next = r.clone();
            r_next.axpy(-alpha, &q);
            let rho_next = r_next.dot(&r_next);
            let beta = rho_next / rho;
            let mut p_next = r_next.clone();
            p_next.axpy(beta, &p);
            iters.push(CgIter { p, q, rho, pi, alpha, r_next: r_next.clone(), rho_next, beta });
            p = p_next;
            r = r_next;
            rho = rho_next;
            if rho.sqrt() <= tol * b_norm {
                converged = true;
                break;
            }
        }
    }
    let residual = if b_norm > 0.0 { rho.sqrt() / b_norm } else { 0.0 };
    Ok((x, CgRecord { iters, b: b.clone(), residual, converged }))
}

/// Cotangents of a solve with respect to its inputs.
#[derive(Debug, Clone)]
pub struct CgCotangents {
    pub b: Image,
    pub c: f64,
    pub w: Image,
}

/// Reverse pass of [`solve`] for the cotangent `x_bar` of the returned solution.
pub fn backward(sys: &NewtonSystem, rec: &CgRecord, x_bar: &Image) -> Result<CgCotangents> {
    let shape = x_bar.shape();
    let xb = x_bar.clone();
    let mut rb = Image::zeros(shape);
    let mut pb = Image::zeros(shape);
    let mut rhob = 0.0;
    let mut cb = 0.0;
    let mut wb = Image::zeros(sys.w.shape());
    for it in rec.iters.iter().rev() {
        // p' = r' + β p
        rb.axpy(1.0, &pb);
        let beta_b = pb.dot(&it.p);
        let mut p_b = pb.clone();
        p_b.scale(it.beta);
        // β = ρ' / ρ
        let rho_next_b = rhob + beta_b / it.rho;
        let mut rho_b = -beta_b * it.rho_next / (it.rho * it.rho);
        // ρ' = r'·r'
        rb.axpy(2.0 * rho_next_b, &it.r_next);
        // r' = r - α q
        let mut alpha_b = -rb.dot(&it.q);
        let mut q_b = rb.clone();
        q_b.scale(-it.alpha);
        // x' = x + α p
        alpha_b += xb.dot(&it.p);
        p_b.axpy(it.alpha, &xb);
        // α = ρ / π
        rho_b += alpha_b / it.pi;
        let pi_b = -alpha_b * it.rho / (it.pi * it.pi);
        // π = p·q
        p_b.axpy(pi_b, &it.q);
        q_b.axpy(pi_b, &it.p);
        // q = M p
        p_b.axpy(1.0, &sys.apply(&q_b)?);
        cb += q_b.dot(&it.p);
        let aq = sys.op.apply(&q_b)?;
        let ap = sys.op.apply(&it.p)?;
        for ((w, a), b) in wb.data_mut().iter_mut().zip(aq.data()).zip(ap.data()) {
            *w += a * b;
        }
        pb = p_b;
        rhob = rho_b;
    }
    // r₀ = p₀ = b, ρ₀ = b·b
    let mut bb = rb;
    bb.axpy(1.0, &pb);
    bb.axpy(2.0 * rhob, &rec.b);
    Ok(CgCotangents { b: bb, c: cb, w: wb })
}
