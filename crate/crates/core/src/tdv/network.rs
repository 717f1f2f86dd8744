//! Graph of the regularizer network with first-order reverse mode and a
//! forward-over-reverse pass for second-order products.

use super::params::{TdvParams, RESIDUALS_PER_BLOCK};
use super::phi;
use super::tensor::{blur, fold_reflect1, pad_reflect1, ConvGeom, Tensor};
use crate::error::{Error, Result};
use crate::imaging::Image;

#[derive(Debug, Clone, Copy)]
enum Op {
    Input,
    PadReflect(usize),
    /// 3×3 correlation with zero padding 1, or valid when `pad == 0`.
    Conv { src: usize, param: usize, stride: usize, pad: usize },
    /// Adjoint of a stride-2 convolution; doubles the spatial size.
    ConvT { src: usize, param: usize },
    Blur(usize),
    Act(usize),
    Add(usize, usize),
}

/// Node list in topological order; the last node feeds the output weights.
#[derive(Debug, Clone)]
pub(crate) struct Graph {
    ops: Vec<Op>,
}

impl Graph {
    pub fn build(p: &TdvParams) -> Self {
        let mut g = Graph { ops: vec![Op::Input] };
        let padded = g.push(Op::PadReflect(0));
        let mut e0 = g.push(Op::Conv { src: padded, param: 0, stride: 1, pad: 0 });
        let mut prev: Option<(usize, usize)> = None;
        for b in 0..p.config.blocks {
            let slot = |s: usize| TdvParams::block_index(b, s);
            let h0 = g.residual(e0, slot(0), slot(1));
            let mut d1 = g.down(h0, slot(2 * RESIDUALS_PER_BLOCK));
            if let Some((p3, _)) = prev {
                d1 = g.push(Op::Add(d1, p3));
            }
            let h1 = g.residual(d1, slot(2), slot(3));
            let mut d2 = g.down(h1, slot(2 * RESIDUALS_PER_BLOCK + 1));
            if let Some((_, p2)) = prev {
                d2 = g.push(Op::Add(d2, p2));
            }
            let h2 = g.residual(d2, slot(4), slot(5));
            let u1 = g.up(h2, slot(2 * RESIDUALS_PER_BLOCK + 2));
            let u1 = g.push(Op::Add(u1, h1));
            let h3 = g.residual(u1, slot(6), slot(7));
            let u0 = g.up(h3, slot(2 * RESIDUALS_PER_BLOCK + 3));
            let u0 = g.push(Op::Add(u0, h0));
            let h4 = g.residual(u0, slot(8), slot(9));
            prev = Some((h3, h2));
            e0 = h4;
        }
        g
    }

    fn push(&mut self, op: Op) -> usize {
        self.ops.push(op);
        self.ops.len() - 1
    }

    /// `x + K2 φ(K1 x)`.
    fn residual(&mut self, x: usize, k1: usize, k2: usize) -> usize {
        let a = self.push(Op::Conv { src: x, param: k1, stride: 1, pad: 1 });
        let a = self.push(Op::Act(a));
        let a = self.push(Op::Conv { src: a, param: k2, stride: 1, pad: 1 });
        self.push(Op::Add(x, a))
    }

    fn down(&mut self, x: usize, k: usize) -> usize {
        let b = self.push(Op::Blur(x));
        self.push(Op::Conv { src: b, param: k, stride: 2, pad: 1 })
    }

    fn up(&mut self, x: usize, k: usize) -> usize {
        let t = self.push(Op::ConvT { src: x, param: k });
        self.push(Op::Blur(t))
    }

    fn output(&self) -> usize {
        self.ops.len() - 1
    }

    fn conv_geom(src: &Tensor, cout: usize, stride: usize, pad: usize) -> ConvGeom {
        ConvGeom::new(src.channels, cout, src.height, src.width, stride, pad)
    }

    /// Geometry of the stride-2 convolution whose adjoint maps `src` up.
    fn convt_geom(src: &Tensor) -> ConvGeom {
        ConvGeom::new(src.channels, src.channels, 2 * src.height, 2 * src.width, 2, 1)
    }

    /// Applies the linear part of `op` to already-evaluated inputs; shared by
    /// the primal and tangent passes (the activation is handled by callers).
    fn apply_linear(op: Op, p: &TdvParams, v: &[Tensor]) -> Tensor {
        match op {
            Op::Input | Op::Act(_) => unreachable!("not linear"),
            Op::PadReflect(s) => pad_reflect1(&v[s]),
            Op::Conv { src, param, stride, pad } => {
                let k = &p.tensors[param];
                let g = Self::conv_geom(&v[src], k.shape[0], stride, pad);
                let mut out = Tensor::zeros(g.cout, g.out_h, g.out_w);
                g.forward(&v[src].data, &k.data, &mut out.data);
                out
            }
            Op::ConvT { src, param } => {
                let g = Self::convt_geom(&v[src]);
                let mut out = Tensor::zeros(g.cin, g.in_h, g.in_w);
                g.adjoint(&v[src].data, &p.tensors[param].data, &mut out.data);
                out
            }
            Op::Blur(s) => blur(&v[s]),
            Op::Add(a, b) => {
                let mut out = v[a].clone();
                out.add_assign(&v[b]);
                out
            }
        }
    }

    pub fn forward(&self, p: &TdvParams, x: Tensor) -> Vec<Tensor> {
        let mut vals: Vec<Tensor> = Vec::with_capacity(self.ops.len());
        vals.push(x);
        for &op in &self.ops[1..] {
            let t = match op {
                Op::Act(s) => {
                    let mut t = vals[s].clone();
                    t.data.iter_mut().for_each(|v| *v = phi(*v, 0));
                    t
                }
                _ => Self::apply_linear(op, p, &vals),
            };
            vals.push(t);
        }
        vals
    }

    /// Directional derivatives of every node along `u` at the recorded point.
    pub fn tangent(&self, p: &TdvParams, vals: &[Tensor], u: Tensor) -> Vec<Tensor> {
        let mut tans: Vec<Tensor> = Vec::with_capacity(self.ops.len());
        tans.push(u);
        for (n, &op) in self.ops.iter().enumerate().skip(1) {
            let t = match op {
                Op::Act(s) => {
                    let mut t = tans[s].clone();
                    for (d, a) in t.data.iter_mut().zip(&vals[s].data) {
                        *d *= phi(*a, 1);
                    }
                    t
                }
                _ => Self::apply_linear(op, p, &tans),
            };
            debug_assert!(t.same_shape(&vals[n]));
            tans.push(t);
        }
        tans
    }

    pub fn value(&self, p: &TdvParams, vals: &[Tensor]) -> f64 {
        weighted_sum(p.w(), &vals[self.output()])
    }

    /// `∇ₓR` by reverse mode.
    pub fn grad_input(&self, p: &TdvParams, vals: &[Tensor]) -> Tensor {
        let mut adj: Vec<Option<Tensor>> = vec![None; self.ops.len()];
        adj[self.output()] = Some(broadcast_weights(p.w(), &vals[self.output()]));
        for n in (1..self.ops.len()).rev() {
            let Some(a) = adj[n].take() else { continue };
            match self.ops[n] {
                Op::Act(s) => {
                    let mut g = a;
                    for (d, x) in g.data.iter_mut().zip(&vals[s].data) {
                        *d *= phi(*x, 1);
                    }
                    accumulate(&mut adj[s], g);
                }
                op => self.linear_adjoint(op, p, vals, &a, &mut adj),
            }
        }
        adj[0].take().expect("input reached")
    }

    /// Pushes `a` back through the linear op `op`.
    fn linear_adjoint(&self, op: Op, p: &TdvParams, vals: &[Tensor], a: &Tensor, adj: &mut [Option<Tensor>]) {
        match op {
            Op::Input | Op::Act(_) => unreachable!("not linear"),
            Op::PadReflect(s) => accumulate(&mut adj[s], fold_reflect1(a)),
            Op::Conv { src, param, stride, pad } => {
                let k = &p.tensors[param];
                let g = Self::conv_geom(&vals[src], k.shape[0], stride, pad);
                let slot = adj[src].get_or_insert_with(|| Tensor::zeros_like(&vals[src]));
                g.adjoint(&a.data, &k.data, &mut slot.data);
            }
            Op::ConvT { src, param } => {
                let g = Self::convt_geom(&vals[src]);
                let slot = adj[src].get_or_insert_with(|| Tensor::zeros_like(&vals[src]));
                g.forward(&a.data, &p.tensors[param].data, &mut slot.data);
            }
            Op::Blur(s) => accumulate(&mut adj[s], blur(a)),
            Op::Add(x, y) => {
                accumulate(&mut adj[x], a.clone());
                accumulate(&mut adj[y], a.clone());
            }
        }
    }

    /// Reverse mode through the tangent pass, seeded with `∂/∂(tangent output)`.
    ///
    /// Differentiates `g(x, θ) = ⟨∇ₓR(x, θ), u⟩` and returns `(∇ₓg, ∇_θ g)`,
    /// i.e. the Hessian-vector product `∇ₓ²R u` and `(∂_θ ∇ₓR)ᵀ u`.
    pub fn second_order(&self, p: &TdvParams, vals: &[Tensor], tans: &[Tensor]) -> (Tensor, Vec<f64>) {
        let n_nodes = self.ops.len();
        let offsets: Vec<usize> = p
            .tensors
            .iter()
            .scan(0, |acc, t| {
                let o = *acc;
                *acc += t.data.len();
                Some(o)
            })
            .collect();
        let mut grad = vec![0.0; p.num_params()];
        let out = self.output();
        {
            let w_off = *offsets.last().expect("weights");
            let hw = tans[out].height * tans[out].width;
            for c in 0..tans[out].channels {
                grad[w_off + c] = tans[out].data[c * hw..(c + 1) * hw].iter().sum();
            }
        }
        // primal adjoints `bar` and tangent adjoints `dbar`
        let mut bar: Vec<Option<Tensor>> = vec![None; n_nodes];
        let mut dbar: Vec<Option<Tensor>> = vec![None; n_nodes];
        dbar[out] = Some(broadcast_weights(p.w(), &vals[out]));
        for n in (1..n_nodes).rev() {
            let b = bar[n].take();
            let d = dbar[n].take();
            match self.ops[n] {
                Op::Act(s) => {
                    if let Some(d) = &d {
                        let mut to_bar = Tensor::zeros_like(d);
                        let mut to_dbar = d.clone();
                        for i in 0..d.data.len() {
                            let a = vals[s].data[i];
                            to_bar.data[i] = phi(a, 2) * tans[s].data[i] * d.data[i];
                            to_dbar.data[i] *= phi(a, 1);
                        }
                        accumulate(&mut bar[s], to_bar);
                        accumulate(&mut dbar[s], to_dbar);
                    }
                    if let Some(mut b) = b {
                        for (v, a) in b.data.iter_mut().zip(&vals[s].data) {
                            *v *= phi(*a, 1);
                        }
                        accumulate(&mut bar[s], b);
                    }
                }
                op => {
                    if let Some(b) = &b {
                        self.linear_adjoint(op, p, vals, b, &mut bar);
                        self.kernel_grad(op, p, vals, b, &offsets, &mut grad);
                    }
                    // the tangent adjoint of the input is ∂g/∂u, not needed
                    if let Some(d) = &d {
                        if !matches!(op, Op::PadReflect(0)) {
                            self.linear_adjoint(op, p, tans, d, &mut dbar);
                        }
                        self.kernel_grad(op, p, tans, d, &offsets, &mut grad);
                    }
                }
            }
        }
        let hu = bar[0].take().unwrap_or_else(|| Tensor::zeros_like(&vals[0]));
        (hu, grad)
    }

    fn kernel_grad(&self, op: Op, p: &TdvParams, inputs: &[Tensor], a: &Tensor, offsets: &[usize], grad: &mut [f64]) {
        match op {
            Op::Conv { src, param, stride, pad } => {
                let k = &p.tensors[param];
                let g = Self::conv_geom(&inputs[src], k.shape[0], stride, pad);
                let o = offsets[param];
                g.kernel_grad(&a.data, &inputs[src].data, &mut grad[o..o + k.data.len()]);
            }
            Op::ConvT { src, param } => {
                let g = Self::convt_geom(&inputs[src]);
                let o = offsets[param];
                let len = p.tensors[param].data.len();
                g.kernel_grad(&inputs[src].data, &a.data, &mut grad[o..o + len]);
            }
            _ => {}
        }
    }
}

fn accumulate(slot: &mut Option<Tensor>, t: Tensor) {
    match slot {
        Some(s) => s.add_assign(&t),
        None => *slot = Some(t),
    }
}

fn weighted_sum(w: &[f64], t: &Tensor) -> f64 {
    let hw = t.height * t.width;
    (0..t.channels)
        .map(|c| w[c] * t.data[c * hw..(c + 1) * hw].iter().sum::<f64>())
        .sum()
}

fn broadcast_weights(w: &[f64], like: &Tensor) -> Tensor {
    let mut t = Tensor::zeros_like(like);
    let hw = t.height * t.width;
    for c in 0..t.channels {
        t.data[c * hw..(c + 1) * hw].iter_mut().for_each(|v| *v = w[c]);
    }
    t
}

/// Primal activations of one forward pass, bound to the parameters used.
#[derive(Debug, Clone)]
pub struct TdvTape {
    values: Vec<Tensor>,
    fingerprint: u64,
    value: f64,
}

impl TdvTape {
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn input(&self) -> Image {
        self.values[0].to_image()
    }

    /// Approximate memory held by the tape in bytes.
    pub fn bytes(&self) -> usize {
        self.values.iter().map(|t| t.data.len() * 8).sum()
    }
}

impl TdvParams {
    fn check_input(&self, x: &Image) -> Result<()> {
        let s = x.shape();
        if s.channels != self.config.channels {
            return Err(crate::error::shape_err(self.config.channels, s.channels));
        }
        let q = 1 << (super::params::SCALES - 1);
        if !s.width.is_multiple_of(q) || !s.height.is_multiple_of(q) || s.width < 2 * q || s.height < 2 * q {
            return Err(Error::InvalidParameter(format!(
                "regularizer input {s} needs width and height divisible by {q} and at least {}",
                2 * q
            )));
        }
        Ok(())
    }

    fn check_tape(&self, tape: &TdvTape) -> Result<()> {
        if tape.fingerprint != self.fingerprint() {
            return Err(Error::StaleTape);
        }
        Ok(())
    }

    /// `R(x, θ)` together with the recorded forward pass.
    pub fn value(&self, x: &Image) -> Result<(f64, TdvTape)> {
        self.check_input(x)?;
        let g = Graph::build(self);
        let values = g.forward(self, Tensor::from_image(x));
        let value = g.value(self, &values);
        let tape = TdvTape { values, fingerprint: self.fingerprint(), value };
        Ok((value, tape))
    }

    /// `∇ₓR` at the taped point.
    pub fn grad_x(&self, tape: &TdvTape) -> Result<Image> {
        self.check_tape(tape)?;
        Ok(Graph::build(self).grad_input(self, &tape.values).to_image())
    }

    /// `R`, `∇ₓR` and the tape in one call.
    pub fn value_and_grad(&self, x: &Image) -> Result<(f64, Image, TdvTape)> {
        let (v, tape) = self.value(x)?;
        let g = Graph::build(self).grad_input(self, &tape.values).to_image();
        Ok((v, g, tape))
    }

    /// Vector-Jacobian products of `(x, θ) ↦ ∇ₓR(x, θ)` against `upstream`:
    /// returns `(∇ₓ²R · upstream, (∂_θ ∇ₓR)ᵀ upstream)` with the parameter
    /// gradient laid out as [`TdvParams::flat`].
    pub fn second_order_vjp(&self, tape: &TdvTape, upstream: &Image) -> Result<(Image, Vec<f64>)> {
        self.check_tape(tape)?;
        let x = &tape.values[0];
        upstream.ensure_shape(crate::imaging::Shape::new(x.width, x.height, x.channels))?;
        let g = Graph::build(self);
        let tans = g.tangent(self, &tape.values, Tensor::from_image(upstream));
        let (hu, grad) = g.second_order(self, &tape.values, &tans);
        Ok((hu.to_image(), grad))
    }

    /// `(∂_θ ∇ₓR)ᵀ upstream`.
    pub fn vjp_theta(&self, tape: &TdvTape, upstream: &Image) -> Result<Vec<f64>> {
        Ok(self.second_order_vjp(tape, upstream)?.1)
    }
}
