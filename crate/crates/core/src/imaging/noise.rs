use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use super::Image;
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Observation noise `Z(Ay, zeta)`; standard deviations are in `[0, 1]`
/// intensity units (`25/255` for the usual "sigma = 25").
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Laplace { sigma: f64 },
    /// Each value is replaced by 0 or 1 (equal odds) with probability `fraction`.
    SaltPepper { fraction: f64 },
    /// `z = Pois(peak * y) / peak`.
    Poisson { peak: f64 },
    /// 10% uniform on `[-25, 25]/255`, 20% `N(0, 1)/255`, 70% `N(0, 0.1)/255`.
    Mixture,
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match *self {
            NoiseKind::Gaussian { sigma } | NoiseKind::Laplace { sigma } => {
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return bad(format!("noise sigma must be >= 0, got {sigma}"));
                }
            }
            NoiseKind::SaltPepper { fraction } => {
                if !(0.0..=1.0).contains(&fraction) {
                    return bad(format!("salt-and-pepper fraction must lie in [0,1], got {fraction}"));
                }
            }
            NoiseKind::Poisson { peak } => {
                if !(peak > 0.0 && peak.is_finite()) {
                    return bad(format!("poisson peak must be > 0, got {peak}"));
                }
            }
            NoiseKind::Mixture => {}
        }
        Ok(())
    }

    /// Short label used in manifests, e.g. `gaussian(0.098039)`.
    pub fn label(&self) -> String {
        match self {
            NoiseKind::Gaussian { sigma } => format!("gaussian({sigma})"),
            NoiseKind::Laplace { sigma } => format!("laplace({sigma})"),
            NoiseKind::SaltPepper { fraction } => format!("salt-pepper({fraction})"),
            NoiseKind::Poisson { peak } => format!("poisson({peak})"),
            NoiseKind::Mixture => "mixture".to_string(),
        }
    }
}

/// A noise kind bound to a seed; identical seeds give bit-identical output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(kind: NoiseKind, seed: u64) -> Result<Self> {
        kind.validate()?;
        Ok(Self { kind, seed })
    }

    pub fn corrupt(&self, clean: &Image) -> Result<Image> {
        let mut r = rng::stream(self.seed, "noise");
        self.corrupt_with(clean, &mut r)
    }

    /// Corrupts with an external generator (fresh noise per training sample).
    pub fn corrupt_with(&self, clean: &Image, r: &mut Rng) -> Result<Image> {
        self.kind.validate()?;
        let mut out = clean.clone();
        match self.kind {
            NoiseKind::Gaussian { sigma } => {
                let n = Normal::new(0.0, sigma).expect("validated sigma");
                for v in out.data_mut() {
                    *v += n.sample(r);
                }
            }
            NoiseKind::Laplace { sigma } => {
                let b = sigma / std::f64::consts::SQRT_2;
                for v in out.data_mut() {
                    *v += laplace(r, b);
                }
            }
            NoiseKind::SaltPepper { fraction } => {
                for v in out.data_mut() {
                    if r.gen::<f64>() < fraction {
                        *v = if r.gen::<bool>() { 1.0 } else { 0.0 };
                    }
                }
            }
            NoiseKind::Poisson { peak } => {
                for v in out.data_mut() {
                    let lambda = (*v * peak).max(0.0);
                    *v = if lambda > 0.0 {
                        Poisson::new(lambda).expect("positive rate").sample(r) / peak
                    } else {
                        0.0
                    };
                }
            }
            NoiseKind::Mixture => {
                let wide = Normal::new(0.0, 1.0 / 255.0).unwrap();
                let narrow = Normal::new(0.0, 0.1f64.sqrt() / 255.0).unwrap();
                for v in out.data_mut() {
                    let u: f64 = r.gen();
                    *v += if u < 0.1 {
                        r.gen_range(-25.0..=25.0) / 255.0
                    } else if u < 0.3 {
                        wide.sample(r)
                    } else {
                        narrow.sample(r)
                    };
                }
            }
        }
        Ok(out)
    }
}

fn laplace(r: &mut Rng, b: f64) -> f64 {
    // inverse CDF on u in (-1/2, 1/2)
    let u: f64 = r.gen::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}
