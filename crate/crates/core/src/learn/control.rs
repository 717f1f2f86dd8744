use crate::datafid::DataTerm;
use crate::error::{shape_err, Error, Result};
use crate::flow::FlowGrads;
use crate::tdv::TdvParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    Supervised,
    Unsupervised,
}

/// All trainable controls. Both branches read the single `tdv` field, so
/// the regularizer is shared by construction.
///
/// Flat layout: `[T_sup, T_unsup, ξ_sup.., ξ_unsup.., θ..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlParams {
    pub t_sup: f64,
    pub t_unsup: f64,
    pub term_sup: DataTerm,
    pub term_unsup: DataTerm,
    pub tdv: TdvParams,
    pub alpha: f64,
}

impl ControlParams {
    /// Both branches start from the same stopping time and data term.
    pub fn new(stop_time: f64, term: DataTerm, tdv: TdvParams, alpha: f64) -> Self {
        Self {
            t_sup: stop_time,
            t_unsup: stop_time,
            term_sup: term.clone(),
            term_unsup: term,
            tdv,
            alpha,
        }
    }

    pub fn stop_time(&self, b: Branch) -> f64 {
        match b {
            Branch::Supervised => self.t_sup,
            Branch::Unsupervised => self.t_unsup,
        }
    }

    pub fn term(&self, b: Branch) -> &DataTerm {
        match b {
            Branch::Supervised => &self.term_sup,
            Branch::Unsupervised => &self.term_unsup,
        }
    }

    fn offsets(&self) -> [usize; 4] {
        let a = 2;
        let b = a + self.term_sup.num_params();
        let c = b + self.term_unsup.num_params();
        [a, b, c, c + self.tdv.num_params()]
    }

    pub fn num_params(&self) -> usize {
        self.offsets()[3]
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = vec![self.t_sup, self.t_unsup];
        v.extend(self.term_sup.params());
        v.extend(self.term_unsup.params());
        v.extend(self.tdv.flat());
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let [a, b, c, d] = self.offsets();
        if flat.len() != d {
            return Err(shape_err(d, flat.len()));
        }
        self.t_sup = flat[0];
        self.t_unsup = flat[1];
        self.term_sup.set_params(&flat[a..b])?;
        self.term_unsup.set_params(&flat[b..c])?;
        self.tdv.set_flat(&flat[c..d])
    }

    /// Adds `weight` times a branch's flow gradients into a flat gradient.
    pub fn accumulate(&self, b: Branch, g: &FlowGrads, weight: f64, out: &mut [f64]) -> Result<()> {
        let [a, bb, c, d] = self.offsets();
        if out.len() != d {
            return Err(shape_err(d, out.len()));
        }
        let (ti, range) = match b {
            Branch::Supervised => (0, a..bb),
            Branch::Unsupervised => (1, bb..c),
        };
        if g.term.len() != range.len() || g.reg.len() != d - c {
            return Err(shape_err(range.len(), g.term.len()));
        }
        out[ti] += weight * g.stop_time;
        out[range].iter_mut().zip(&g.term).for_each(|(o, v)| *o += weight * v);
        out[c..].iter_mut().zip(&g.reg).for_each(|(o, v)| *o += weight * v);
        Ok(())
    }

    /// Data-term constraints, zero-mean `K` and `T ∈ [0, t_max]`.
    pub fn project(&mut self, t_max: f64) {
        self.t_sup = self.t_sup.clamp(0.0, t_max);
        self.t_unsup = self.t_unsup.clamp(0.0, t_max);
        self.term_sup = self.term_sup.project();
        self.term_unsup = self.term_unsup.project();
        self.tdv = self.tdv.project_zero_mean();
    }

    pub fn invariant_violations(&self, t_max: f64) -> Vec<String> {
        let mut bad = Vec::new();
        for (name, t) in [("T_sup", self.t_sup), ("T_unsup", self.t_unsup)] {
            if !(0.0..=t_max).contains(&t) {
                bad.push(format!("{name} = {t} outside [0, {t_max}]"));
            }
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            bad.push(format!("α = {} outside [0, 1]", self.alpha));
        }
        bad.extend(self.term_sup.invariant_violations().into_iter().map(|m| format!("sup: {m}")));
        bad.extend(self.term_unsup.invariant_violations().into_iter().map(|m| format!("unsup: {m}")));
        let zm = self.tdv.zero_mean_violation();
        if zm > 1e-10 {
            bad.push(format!("K mean deviates by {zm:e}"));
        }
        bad
    }

    pub fn validate(&self, t_max: f64) -> Result<()> {
        match self.invariant_violations(t_max).first() {
            Some(m) => Err(Error::InvalidParameter(m.clone())),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datafid::{DEFAULT_KNOTS, DEFAULT_Q};
    use crate::imaging::Image;
    use crate::rng;
    use crate::tdv::TdvConfig;

    fn control() -> ControlParams {
        let tdv = TdvParams::init(TdvConfig::default(), &mut rng::stream(1, "init")).unwrap();
        ControlParams::new(0.5, DataTerm::frechet(DEFAULT_KNOTS, DEFAULT_Q), tdv, 0.8)
    }

    #[test]
    fn flat_round_trip_and_projection() {
        let mut c = control();
        let flat = c.flat();
        assert_eq!(flat.len(), 2 + 2 * 31 + 8144);
        c.set_flat(&flat).unwrap();
        assert_eq!(c.flat(), flat);
        let mut moved = flat.clone();
        moved[0] = -1.0;
        moved[1] = 5000.0;
        moved[2] = -3.0;
        moved[2 + 62] += 1.0;
        c.set_flat(&moved).unwrap();
        assert!(c.invariant_violations(1000.0).len() >= 3);
        c.project(1000.0);
        assert!(c.invariant_violations(1000.0).is_empty(), "{:?}", c.invariant_violations(1000.0));
        assert_eq!((c.t_sup, c.t_unsup), (0.0, 1000.0));
    }

    #[test]
    fn branch_gradients_land_in_their_own_slots() {
        let c = control();
        let g = FlowGrads {
            stop_time: 2.0,
            term: vec![1.0; 31],
            reg: vec![1.0; 8144],
            initial: Image::zeros(crate::imaging::Shape::new(1, 1, 1)),
        };
        let mut out = vec![0.0; c.num_params()];
        c.accumulate(Branch::Unsupervised, &g, 0.25, &mut out).unwrap();
        assert_eq!(out[0], 0.0);
        assert_eq!(out[1], 0.5);
        assert!(out[2..33].iter().all(|&v| v == 0.0));
        assert!(out[33..64].iter().all(|&v| v == 0.25));
        assert!(out[64..].iter().all(|&v| v == 0.25));
    }
}
