//! Channel-major feature maps and the linear kernels of the regularizer network.

use crate::error::{shape_err, Result};
use crate::imaging::{Image, Shape};

/// Feature map stored channel-major: index `(c * height + y) * width + x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn zeros_like(other: &Tensor) -> Self {
        Self::zeros(other.channels, other.height, other.width)
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape(&self, other: &Tensor) -> bool {
        self.channels == other.channels && self.height == other.height && self.width == other.width
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Converts an interleaved image into channel-major layout.
    pub fn from_image(img: &Image) -> Self {
        let Shape { width, height, channels } = img.shape();
        let mut t = Self::zeros(channels, height, width);
        let src = img.data();
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    t.data[(c * height + y) * width + x] = src[(y * width + x) * channels + c];
                }
            }
        }
        t
    }

    pub fn to_image(&self) -> Image {
        let shape = Shape::new(self.width, self.height, self.channels);
        let (w, h) = (self.width, self.height);
        Image::from_fn(shape, |x, y, c| self.data[(c * h + y) * w + x])
    }

    pub fn check_shape(&self, channels: usize, height: usize, width: usize) -> Result<()> {
        if self.channels != channels || self.height != height || self.width != width {
            return Err(shape_err(
                format!("{channels}x{height}x{width}"),
                format!("{}x{}x{}", self.channels, self.height, self.width),
            ));
        }
        Ok(())
    }
}

/// Geometry of a 3×3 correlation `out(y, x) = Σ k(ky, kx) in(s y + ky - pad, s x + kx - pad)`
/// with zero padding.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(cin: usize, cout: usize, in_h: usize, in_w: usize, stride: usize, pad: usize) -> Self {
        let out_h = (in_h + 2 * pad - 3) / stride + 1;
        let out_w = (in_w + 2 * pad - 3) / stride + 1;
        Self { cin, cout, in_h, in_w, out_h, out_w, stride, pad }
    }

    #[cfg(test)]
    pub fn kernel_len(&self) -> usize {
        self.cout * self.cin * 9
    }

    /// Visits every contiguous run of output pixels sharing one kernel tap:
    /// `f(kernel_index, out_plane_offset, in_plane_offset, len)` where the
    /// input advances by `stride` per output pixel.
    #[inline(always)]
    fn for_each_run(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        let s = self.stride as isize;
        let pad = self.pad as isize;
        for o in 0..self.cout {
            for i in 0..self.cin {
                for ky in 0..3isize {
                    for kx in 0..3isize {
                        let kidx = ((o * self.cin + i) * 3 + ky as usize) * 3 + kx as usize;
                        // valid ox: 0 <= s*ox + kx - pad < in_w
                        let ox0 = ceil_div(pad - kx, s).max(0) as usize;
                        let ox1 = (floor_div(self.in_w as isize - 1 + pad - kx, s) + 1)
                            .clamp(0, self.out_w as isize) as usize;
                        if ox0 >= ox1 {
                            continue;
                        }
                        let len = ox1 - ox0;
                        for oy in 0..self.out_h {
                            let iy = oy as isize * s + ky - pad;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let ix0 = (ox0 as isize * s + kx - pad) as usize;
                            f(
                                kidx,
                                o,
                                oy * self.out_w + ox0,
                                i,
                                iy as usize * self.in_w + ix0,
                                len,
                            );
                        }
                    }
                }
            }
        }
    }

    fn is_same_padded(&self) -> bool {
        self.stride == 1 && self.pad == 1 && self.in_w >= 2 && self.in_h >= 2
    }

    fn is_valid(&self) -> bool {
        self.stride == 1 && self.pad == 0 && self.in_w >= 3 && self.in_h >= 3
    }

    fn is_halving(&self) -> bool {
        self.stride == 2 && self.pad == 1 && self.in_w.is_multiple_of(2) && self.in_h.is_multiple_of(2) && self.in_w >= 2 && self.in_h >= 2
    }

    /// `out += conv(input)`.
    pub fn forward(&self, input: &[f64], k: &[f64], out: &mut [f64]) {
        if self.is_same_padded() {
            same_conv(self.cin, self.cout, self.in_h, self.in_w, input, k, out);
            return;
        }
        if self.is_valid() || self.is_halving() {
            strided_forward(self, input, k, out);
            return;
        }
        let (ip, op) = (self.in_h * self.in_w, self.out_h * self.out_w);
        let s = self.stride;
        self.for_each_run(|kidx, o, ooff, i, ioff, len| {
            let w = k[kidx];
            let dst = &mut out[o * op + ooff..o * op + ooff + len];
            let src = &input[i * ip + ioff..];
            if s == 1 {
                for (d, v) in dst.iter_mut().zip(&src[..len]) {
                    *d += w * v;
                }
            } else {
                for (d, v) in dst.iter_mut().zip(src.iter().step_by(s)) {
                    *d += w * v;
                }
            }
        });
    }

    /// `in_bar += convᵀ(out_bar)`.
    pub fn adjoint(&self, out_bar: &[f64], k: &[f64], in_bar: &mut [f64]) {
        if self.is_same_padded() {
            // the adjoint of a same-padded correlation is the correlation with
            // the flipped kernel and swapped channel roles
            let mut kt = vec![0.0; k.len()];
            for o in 0..self.cout {
                for i in 0..self.cin {
                    for t in 0..9 {
                        kt[(i * self.cout + o) * 9 + 8 - t] = k[(o * self.cin + i) * 9 + t];
                    }
                }
            }
            same_conv(self.cout, self.cin, self.in_h, self.in_w, out_bar, &kt, in_bar);
            return;
        }
        if self.is_valid() || self.is_halving() {
            strided_adjoint(self, out_bar, k, in_bar);
            return;
        }
        let (ip, op) = (self.in_h * self.in_w, self.out_h * self.out_w);
        let s = self.stride;
        self.for_each_run(|kidx, o, ooff, i, ioff, len| {
            let w = k[kidx];
            let src = &out_bar[o * op + ooff..o * op + ooff + len];
            let base = i * ip + ioff;
            if s == 1 {
                for (d, v) in in_bar[base..base + len].iter_mut().zip(src) {
                    *d += w * v;
                }
            } else {
                for (d, v) in in_bar[base..].iter_mut().step_by(s).zip(src) {
                    *d += w * v;
                }
            }
        });
    }

    /// `k_bar += ∂/∂k ⟨out_bar, conv_k(input)⟩`.
    pub fn kernel_grad(&self, out_bar: &[f64], input: &[f64], k_bar: &mut [f64]) {
        if self.is_same_padded() {
            same_kernel_grad(self.cin, self.cout, self.in_h, self.in_w, out_bar, input, k_bar);
            return;
        }
        if self.is_valid() || self.is_halving() {
            strided_kernel_grad(self, out_bar, input, k_bar);
            return;
        }
        let (ip, op) = (self.in_h * self.in_w, self.out_h * self.out_w);
        let s = self.stride;
        self.for_each_run(|kidx, o, ooff, i, ioff, len| {
            let a = &out_bar[o * op + ooff..o * op + ooff + len];
            let b = &input[i * ip + ioff..];
            let acc: f64 = if s == 1 {
                a.iter().zip(&b[..len]).map(|(x, y)| x * y).sum()
            } else {
                a.iter().zip(b.iter().step_by(s)).map(|(x, y)| x * y).sum()
            };
            k_bar[kidx] += acc;
        });
    }
}

/// Same-size 3×3 correlation with zero padding; all nine taps fused per row pass.
fn same_conv(cin: usize, cout: usize, h: usize, w: usize, input: &[f64], k: &[f64], out: &mut [f64]) {
    let plane = h * w;
    let zero = vec![0.0; w];
    for o in 0..cout {
        let dst_plane = &mut out[o * plane..(o + 1) * plane];
        for i in 0..cin {
            let src_plane = &input[i * plane..(i + 1) * plane];
            let kk: &[f64; 9] = k[(o * cin + i) * 9..(o * cin + i) * 9 + 9].try_into().expect("3x3");
            let row = |yy: isize| -> &[f64] {
                if yy < 0 || yy >= h as isize {
                    &zero
                } else {
                    &src_plane[yy as usize * w..(yy as usize + 1) * w]
                }
            };
            for y in 0..h {
                let dst = &mut dst_plane[y * w..(y + 1) * w];
                let (r0, r1, r2) = (row(y as isize - 1), row(y as isize), row(y as isize + 1));
                let edge = |x: usize, r: &[f64], base: usize| {
                    let l = if x > 0 { r[x - 1] } else { 0.0 };
                    let rr = if x + 1 < w { r[x + 1] } else { 0.0 };
                    kk[base] * l + kk[base + 1] * r[x] + kk[base + 2] * rr
                };
                dst[0] += edge(0, r0, 0) + edge(0, r1, 3) + edge(0, r2, 6);
                dst[w - 1] += edge(w - 1, r0, 0) + edge(w - 1, r1, 3) + edge(w - 1, r2, 6);
                let n = w - 2;
                let d = &mut dst[1..w - 1];
                let (a0, a1, a2) = (&r0[..n], &r0[1..n + 1], &r0[2..n + 2]);
                let (b0, b1, b2) = (&r1[..n], &r1[1..n + 1], &r1[2..n + 2]);
                let (c0, c1, c2) = (&r2[..n], &r2[1..n + 1], &r2[2..n + 2]);
                for x in 0..n {
                    d[x] += kk[0] * a0[x]
                        + kk[1] * a1[x]
                        + kk[2] * a2[x]
                        + kk[3] * b0[x]
                        + kk[4] * b1[x]
                        + kk[5] * b2[x]
                        + kk[6] * c0[x]
                        + kk[7] * c1[x]
                        + kk[8] * c2[x];
                }
            }
        }
    }
}

fn same_kernel_grad(cin: usize, cout: usize, h: usize, w: usize, out_bar: &[f64], input: &[f64], k_bar: &mut [f64]) {
    let plane = h * w;
    for o in 0..cout {
        let a_plane = &out_bar[o * plane..(o + 1) * plane];
        for i in 0..cin {
            let b_plane = &input[i * plane..(i + 1) * plane];
            let mut acc = [0.0f64; 9];
            for y in 0..h {
                let a = &a_plane[y * w..(y + 1) * w];
                for ky in 0..3 {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let b = &b_plane[iy as usize * w..(iy as usize + 1) * w];
                    let (mut s0, mut s1, mut s2) = (0.0, a[0] * b[0], 0.0);
                    s2 += a[0] * b[1];
                    for x in 1..w - 1 {
                        s0 += a[x] * b[x - 1];
                        s1 += a[x] * b[x];
                        s2 += a[x] * b[x + 1];
                    }
                    s0 += a[w - 1] * b[w - 2];
                    s1 += a[w - 1] * b[w - 1];
                    acc[ky * 3] += s0;
                    acc[ky * 3 + 1] += s1;
                    acc[ky * 3 + 2] += s2;
                }
            }
            let kb = &mut k_bar[(o * cin + i) * 9..(o * cin + i) * 9 + 9];
            for t in 0..9 {
                kb[t] += acc[t];
            }
        }
    }
}

/// Valid (`stride 1, pad 0`) and halving (`stride 2, pad 1`, even sizes)
/// geometries: every tap `ix = s ox + kx - pad` is in range except
/// `ox = 0, kx = 0` when halving.
fn strided_rows(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize, usize)) {
    for oy in 0..g.out_h {
        for ky in 0..3 {
            let iy = (oy * g.stride + ky) as isize - g.pad as isize;
            if iy >= 0 && iy < g.in_h as isize {
                f(oy, ky, iy as usize, g.pad);
            }
        }
    }
}

fn strided_forward(g: &ConvGeom, input: &[f64], k: &[f64], out: &mut [f64]) {
    let (ip, op, s) = (g.in_h * g.in_w, g.out_h * g.out_w, g.stride);
    for o in 0..g.cout {
        for i in 0..g.cin {
            let kk = &k[(o * g.cin + i) * 9..(o * g.cin + i) * 9 + 9];
            let src_plane = &input[i * ip..(i + 1) * ip];
            let dst_plane = &mut out[o * op..(o + 1) * op];
            strided_rows(g, |oy, ky, iy, pad| {
                let src = &src_plane[iy * g.in_w..(iy + 1) * g.in_w];
                let dst = &mut dst_plane[oy * g.out_w..(oy + 1) * g.out_w];
                let (w0, w1, w2) = (kk[ky * 3], kk[ky * 3 + 1], kk[ky * 3 + 2]);
                let start = if pad == 1 {
                    dst[0] += w1 * src[0] + w2 * src[1];
                    1
                } else {
                    0
                };
                for ox in start..g.out_w {
                    let b = s * ox - pad;
                    dst[ox] += w0 * src[b] + w1 * src[b + 1] + w2 * src[b + 2];
                }
            });
        }
    }
}

fn strided_adjoint(g: &ConvGeom, out_bar: &[f64], k: &[f64], in_bar: &mut [f64]) {
    let (ip, op, s) = (g.in_h * g.in_w, g.out_h * g.out_w, g.stride);
    for o in 0..g.cout {
        for i in 0..g.cin {
            let kk = &k[(o * g.cin + i) * 9..(o * g.cin + i) * 9 + 9];
            let dst_plane = &out_bar[o * op..(o + 1) * op];
            let src_plane = &mut in_bar[i * ip..(i + 1) * ip];
            strided_rows(g, |oy, ky, iy, pad| {
                let src = &mut src_plane[iy * g.in_w..(iy + 1) * g.in_w];
                let dst = &dst_plane[oy * g.out_w..(oy + 1) * g.out_w];
                let (w0, w1, w2) = (kk[ky * 3], kk[ky * 3 + 1], kk[ky * 3 + 2]);
                let start = if pad == 1 {
                    src[0] += w1 * dst[0];
                    src[1] += w2 * dst[0];
                    1
                } else {
                    0
                };
                for ox in start..g.out_w {
                    let b = s * ox - pad;
                    let v = dst[ox];
                    src[b] += w0 * v;
                    src[b + 1] += w1 * v;
                    src[b + 2] += w2 * v;
                }
            });
        }
    }
}

fn strided_kernel_grad(g: &ConvGeom, out_bar: &[f64], input: &[f64], k_bar: &mut [f64]) {
    let (ip, op, s) = (g.in_h * g.in_w, g.out_h * g.out_w, g.stride);
    for o in 0..g.cout {
        for i in 0..g.cin {
            let src_plane = &input[i * ip..(i + 1) * ip];
            let dst_plane = &out_bar[o * op..(o + 1) * op];
            let mut acc = [0.0f64; 9];
            strided_rows(g, |oy, ky, iy, pad| {
                let src = &src_plane[iy * g.in_w..(iy + 1) * g.in_w];
                let dst = &dst_plane[oy * g.out_w..(oy + 1) * g.out_w];
                let (mut a0, mut a1, mut a2) = (0.0, 0.0, 0.0);
                let start = if pad == 1 {
                    a1 += dst[0] * src[0];
                    a2 += dst[0] * src[1];
                    1
                } else {
                    0
                };
                for ox in start..g.out_w {
                    let b = s * ox - pad;
                    let v = dst[ox];
                    a0 += v * src[b];
                    a1 += v * src[b + 1];
                    a2 += v * src[b + 2];
                }
                acc[ky * 3] += a0;
                acc[ky * 3 + 1] += a1;
                acc[ky * 3 + 2] += a2;
            });
            let kb = &mut k_bar[(o * g.cin + i) * 9..(o * g.cin + i) * 9 + 9];
            for t in 0..9 {
                kb[t] += acc[t];
            }
        }
    }
}

#[inline]
fn floor_div(a: isize, b: isize) -> isize {
    a.div_euclid(b)
}

#[inline]
fn ceil_div(a: isize, b: isize) -> isize {
    -((-a).div_euclid(b))
}

/// Binomial `[1,2,1]⊗[1,2,1]/16` blur per channel with zero padding (self-adjoint).
pub(crate) fn blur(t: &Tensor) -> Tensor {
    let (h, w) = (t.height, t.width);
    let mut tmp = vec![0.0; h * w];
    let mut out = Tensor::zeros_like(t);
    for c in 0..t.channels {
        let src = t.plane(c);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            let dst = &mut tmp[y * w..(y + 1) * w];
            for x in 0..w {
                let l = if x > 0 { row[x - 1] } else { 0.0 };
                let r = if x + 1 < w { row[x + 1] } else { 0.0 };
                dst[x] = 0.25 * (l + r) + 0.5 * row[x];
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                let u = if y > 0 { tmp[(y - 1) * w + x] } else { 0.0 };
                let d = if y + 1 < h { tmp[(y + 1) * w + x] } else { 0.0 };
                dst[y * w + x] = 0.25 * (u + d) + 0.5 * tmp[y * w + x];
            }
        }
    }
    out
}

#[inline]
fn reflect1(i: isize, n: usize) -> usize {
    if i < 0 {
        (-i) as usize
    } else if i >= n as isize {
        2 * n - 2 - i as usize
    } else {
        i as usize
    }
}

/// Mirror padding by one pixel without edge repetition.
pub(crate) fn pad_reflect1(t: &Tensor) -> Tensor {
    let (h, w) = (t.height, t.width);
    let mut out = Tensor::zeros(t.channels, h + 2, w + 2);
    for c in 0..t.channels {
        let src = t.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h + 2 {
            let sy = reflect1(y as isize - 1, h);
            for x in 0..w + 2 {
                dst[y * (w + 2) + x] = src[sy * w + reflect1(x as isize - 1, w)];
            }
        }
    }
    out
}

/// Adjoint of [`pad_reflect1`]: accumulates mirrored contributions back.
pub(crate) fn fold_reflect1(t: &Tensor) -> Tensor {
    let (h, w) = (t.height - 2, t.width - 2);
    let mut out = Tensor::zeros(t.channels, h, w);
    for c in 0..t.channels {
        let src = t.plane(c);
        let dst = out.plane_mut(c);
        for y in 0..h + 2 {
            let sy = reflect1(y as isize - 1, h);
            for x in 0..w + 2 {
                dst[sy * w + reflect1(x as isize - 1, w)] += src[y * (w + 2) + x];
            }
        }
    }
    out
}
