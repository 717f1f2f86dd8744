//! Cubic B-spline parametrizations of data-term gradients and proximal maps.

/// Standard cubic B-spline on `[-2, 2]` (or its `order`-th derivative).
///
/// `B(0) = 2/3`, `B(±1) = 1/6`, `B(±2) = 0`.
#[inline]
pub fn cubic_bspline(t: f64, order: u8) -> f64 {
    let a = t.abs();
    if a >= 2.0 {
        return 0.0;
    }
    let s = if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    };
    if a < 1.0 {
        match order {
            0 => 2.0 / 3.0 - a * a + 0.5 * a * a * a,
            1 => -2.0 * t + 1.5 * t * a,
            2 => -2.0 + 3.0 * a,
            _ => 3.0 * s,
        }
    } else {
        let b = 2.0 - a;
        match order {
            0 => b * b * b / 6.0,
            1 => -0.5 * s * b * b,
            2 => b,
            _ => -s,
        }
    }
}

/// `j`-th basis function on `n` knots over `[-q, q]`: `B(x n / q - j)`.
pub fn spline_basis(x: f64, j: i64, n: usize, q: f64) -> f64 {
    cubic_bspline(x * n as f64 / q - j as f64, 0)
}

/// Knot ramp `c_j = slope * j q / n` for `j = -n..=n`. Cubic B-splines
/// reproduce linear functions, so the spline equals `slope * x` wherever all
/// contributing knots exist, i.e. on `|x| <= q (n - 1) / n`.
pub(crate) fn ramp_coeffs(n: usize, q: f64, slope: f64) -> Vec<f64> {
    (0..=2 * n)
        .map(|k| slope * (k as f64 - n as f64) * q / n as f64)
        .collect()
}

/// Odd 1D spline `f(r) = Σ_{j=-n}^{n} ξ_j B(r n/q - j)` with `ξ_{-j} = -ξ_j`,
/// `ξ_0 = 0`; only `ξ_1..ξ_n` are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoeffs1D {
    pub q: f64,
    pub coeffs: Vec<f64>,
}

impl SplineCoeffs1D {
    pub fn new(q: f64, coeffs: Vec<f64>) -> Self {
        Self { q, coeffs }
    }

    /// Spline equal to `slope * r` away from the domain boundary.
    pub fn linear(n: usize, q: f64, slope: f64) -> Self {
        let full = ramp_coeffs(n, q, slope);
        Self {
            q,
            coeffs: full[n + 1..].to_vec(),
        }
    }

    pub fn n_knots(&self) -> usize {
        self.coeffs.len()
    }

    #[inline]
    fn scale(&self) -> f64 {
        self.coeffs.len() as f64 / self.q
    }

    /// Coefficient at signed index `j`; indices beyond `±n` replicate the
    /// outermost coefficient so the spline stays monotone up to the boundary.
    #[inline]
    pub fn full(&self, j: i64) -> f64 {
        let n = self.coeffs.len() as i64;
        let j = j.clamp(-n, n);
        match j {
            0 => 0.0,
            j if j > 0 => self.coeffs[j as usize - 1],
            j => -self.coeffs[(-j) as usize - 1],
        }
    }

    /// `order`-th derivative in `r`; zero beyond `[-q, q]` for `order >= 1`.
    pub fn eval(&self, r: f64, order: u8) -> f64 {
        let inside = r.abs() <= self.q;
        if order > 0 && !inside {
            return 0.0;
        }
        let rc = r.clamp(-self.q, self.q);
        let t = rc * self.scale();
        let lo = (t - 2.0).floor() as i64;
        let hi = (t + 2.0).ceil() as i64;
        let mut acc = 0.0;
        for j in lo..=hi {
            let c = self.full(j);
            if c != 0.0 {
                acc += c * cubic_bspline(t - j as f64, order);
            }
        }
        acc * self.scale().powi(order as i32)
    }

    /// Adds `w * ∂/∂ξ (order-th r-derivative at r)` into `out`.
    pub fn accumulate_coeff_grad(&self, r: f64, order: u8, w: f64, out: &mut [f64]) {
        if order > 0 && r.abs() > self.q {
            return;
        }
        let t = r.clamp(-self.q, self.q) * self.scale();
        let n = self.coeffs.len() as i64;
        let f = w * self.scale().powi(order as i32);
        for j in (t - 2.0).floor() as i64..=(t + 2.0).ceil() as i64 {
            let b = cubic_bspline(t - j as f64, order);
            let k = j.clamp(-n, n);
            if b != 0.0 && k != 0 {
                out[k.unsigned_abs() as usize - 1] += f * b * k.signum() as f64;
            }
        }
    }

    /// Upper bound on the slope of `f`: the largest coefficient increment times `n/q`.
    pub fn slope_bound(&self) -> f64 {
        let mut prev = 0.0;
        let mut best: f64 = 0.0;
        for &c in &self.coeffs {
            best = best.max(c - prev);
            prev = c;
        }
        best * self.scale()
    }
}

/// Tensor-product spline `s(x, y) = Σ_{i,j=-N}^{N} ξ_{i,j} B(x N/q - i) B(y N/q - j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineCoeffs2D {
    pub half: usize,
    pub q: f64,
    /// Row-major over `i` (first argument), then `j`.
    pub coeffs: Vec<f64>,
}

impl SplineCoeffs2D {
    pub fn new(half: usize, q: f64, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), (2 * half + 1).pow(2));
        Self { half, q, coeffs }
    }

    /// `ξ_{i,j} = a_i - a_j` with the knot ramp `a`, so that
    /// `s(x, y) - s(y, y) = slope * (x - y)` away from the domain boundary.
    pub fn linear(half: usize, q: f64, slope: f64) -> Self {
        let a = ramp_coeffs(half, q, slope);
        let m = 2 * half + 1;
        let mut coeffs = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                coeffs[i * m + j] = a[i] - a[j];
            }
        }
        Self { half, q, coeffs }
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.half + 1
    }

    /// Coefficient `ξ_{i,j}`; indices beyond `±N` replicate the border.
    #[inline]
    pub fn at(&self, i: i64, j: i64) -> f64 {
        self.coeffs[self.flat(i, j)]
    }

    #[inline]
    fn flat(&self, i: i64, j: i64) -> usize {
        let h = self.half as i64;
        ((i.clamp(-h, h) + h) as usize) * self.side() + (j.clamp(-h, h) + h) as usize
    }

    #[inline]
    fn scale(&self) -> f64 {
        self.half as f64 / self.q
    }

    fn range(t: f64) -> (i64, i64) {
        ((t - 2.0).floor() as i64, (t + 2.0).ceil() as i64)
    }

    /// `order`-th partial derivative of `s` in its first argument.
    pub fn eval(&self, x: f64, y: f64, order: u8) -> f64 {
        if order > 0 && x.abs() > self.q {
            return 0.0;
        }
        let tx = x.clamp(-self.q, self.q) * self.scale();
        let ty = y.clamp(-self.q, self.q) * self.scale();
        let (ilo, ihi) = Self::range(tx);
        let (jlo, jhi) = Self::range(ty);
        let mut acc = 0.0;
        for j in jlo..=jhi {
            let by = cubic_bspline(ty - j as f64, 0);
            if by == 0.0 {
                continue;
            }
            let mut inner = 0.0;
            for i in ilo..=ihi {
                inner += self.at(i, j) * cubic_bspline(tx - i as f64, order);
            }
            acc += by * inner;
        }
        acc * self.scale().powi(order as i32)
    }

    /// Adds `w * ∂/∂ξ (order-th x-derivative of s at (x, y))` into `out`.
    pub fn accumulate_coeff_grad(&self, x: f64, y: f64, order: u8, w: f64, out: &mut [f64]) {
        if order > 0 && x.abs() > self.q {
            return;
        }
        let tx = x.clamp(-self.q, self.q) * self.scale();
        let ty = y.clamp(-self.q, self.q) * self.scale();
        let (ilo, ihi) = Self::range(tx);
        let (jlo, jhi) = Self::range(ty);
        let f = w * self.scale().powi(order as i32);
        for j in jlo..=jhi {
            let by = cubic_bspline(ty - j as f64, 0);
            if by == 0.0 {
                continue;
            }
            for i in ilo..=ihi {
                let bx = cubic_bspline(tx - i as f64, order);
                if bx != 0.0 {
                    out[self.flat(i, j)] += f * bx * by;
                }
            }
        }
    }

    /// Upper bound on `∂s/∂x`: largest increment in `i` times `N/q`.
    pub fn slope_bound(&self) -> f64 {
        let h = self.half as i64;
        let mut best: f64 = 0.0;
        for j in -h..=h {
            for i in (-h + 1)..=h {
                best = best.max(self.at(i, j) - self.at(i - 1, j));
            }
        }
        best * self.scale()
    }
}
