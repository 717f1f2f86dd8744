use std::fmt;
use std::str::FromStr;

use crate::error::{shape_err, Error, Result};
use crate::imaging::Image;

/// Supervised loss between a reconstruction and ground truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    /// `(‖x - y‖² + ι²)^{1/2}`, smooth everywhere for `ι > 0`.
    L1Iota { iota: f64 },
    /// `‖x - y‖₂`.
    L2,
}

impl Default for LossKind {
    fn default() -> Self {
        Self::L1Iota { iota: 1e-3 }
    }
}

impl LossKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::L1Iota { iota } if !(iota > 0.0 && iota.is_finite()) => {
                Err(Error::InvalidParameter(format!("ι must be > 0, got {iota}")))
            }
            _ => Ok(()),
        }
    }
}

impl FromStr for LossKind {
    type Err = Error;

    /// `l2`, `l1` (ι = 1e-3) or `l1:<iota>`.
    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.split_once(':') {
            None if s == "l2" => Self::L2,
            None if s == "l1" => Self::default(),
            Some(("l1", iota)) => Self::L1Iota {
                iota: iota.parse().map_err(|_| Error::InvalidParameter(format!("bad ι '{iota}'")))?,
            },
            _ => return Err(Error::InvalidParameter(format!("unknown loss '{s}' (l1, l1:<iota>, l2)"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::L1Iota { iota } => write!(f, "l1:{iota}"),
            Self::L2 => f.write_str("l2"),
        }
    }
}

/// Loss value and its gradient in `x`.
pub fn loss_sup(x: &Image, y: &Image, kind: LossKind) -> Result<(f64, Image)> {
    if x.shape() != y.shape() {
        return Err(shape_err(y.shape(), x.shape()));
    }
    kind.validate()?;
    let mut r = x.clone();
    r.axpy(-1.0, y);
    let sq = r.dot(&r);
    let value = match kind {
        LossKind::L1Iota { iota } => (sq + iota * iota).sqrt(),
        LossKind::L2 => sq.sqrt(),
    };
    if value > 0.0 {
        r.scale(1.0 / value);
    }
    Ok((value, r))
}

/// `α · mean(sup) + (1 - α) · mean(unsup)`; a branch with zero weight may be empty.
pub fn cost_j(sup: &[f64], unsup: &[f64], alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("α must lie in [0, 1], got {alpha}")));
    }
    let mean = |v: &[f64], weight: f64, what: &str| -> Result<f64> {
        if weight == 0.0 {
            return Ok(0.0);
        }
        if v.is_empty() {
            return Err(Error::EmptyBatch(format!("{what} batch is empty with weight {weight}")));
        }
        Ok(weight * v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(mean(sup, alpha, "supervised")? + mean(unsup, 1.0 - alpha, "unsupervised")?)
}
