use crate::error::{shape_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 4e-4, beta1: 0.5, beta2: 0.9, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let open = |b: f64| b > 0.0 && b < 1.0;
        if !(open(self.beta1) && open(self.beta2)) {
            return Err(Error::InvalidParameter(format!(
                "adam β₁, β₂ must lie in (0, 1), got {}, {}",
                self.beta1, self.beta2
            )));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite() && self.eps > 0.0) {
            return Err(Error::InvalidParameter(format!("need lr ≥ 0 and ε > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// First and second moment estimates with the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// Bias-corrected update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &AdamConfig) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(shape_err(self.m.len(), grads.len()));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NanGradient(format!("parameter {i}")));
        }
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * grads[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
            params[i] -= lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + cfg.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_has_magnitude_lr() {
        let cfg = AdamConfig { lr: 0.01, ..AdamConfig::default() };
        let mut x = [1.0];
        let mut a = Adam::new(1);
        a.step(&mut x, &[2.0], cfg.lr, &cfg).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + ε)
        assert!((x[0] - (1.0 - 0.01 * 2.0 / (2.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_parabola() {
        let cfg = AdamConfig { lr: 0.05, ..AdamConfig::default() };
        let mut x = [1.0];
        let mut a = Adam::new(1);
        for _ in 0..500 {
            let g = [2.0 * x[0]];
            a.step(&mut x, &g, cfg.lr, &cfg).unwrap();
        }
        assert!(x[0].abs() < 0.05);
    }

    #[test]
    fn zero_gradient_or_rate_leaves_parameters() {
        let cfg = AdamConfig::default();
        let mut x = [0.3, -0.2];
        let mut a = Adam::new(2);
        a.step(&mut x, &[0.0, 0.0], cfg.lr, &cfg).unwrap();
        assert_eq!(x, [0.3, -0.2]);
        a.step(&mut x, &[1.0, -4.0], 0.0, &cfg).unwrap();
        assert_eq!(x, [0.3, -0.2]);
    }

    #[test]
    fn rejects_non_finite_gradients_and_bad_moments() {
        let cfg = AdamConfig::default();
        let mut a = Adam::new(1);
        assert!(matches!(a.step(&mut [0.0], &[f64::NAN], 0.1, &cfg), Err(Error::NanGradient(_))));
        assert_eq!(a.t, 0);
        assert!(AdamConfig { beta1: 1.0, ..cfg }.validate().is_err());
    }
}
