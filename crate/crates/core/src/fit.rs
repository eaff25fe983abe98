//! Slope and constant fits over sample batches.

use crate::error::{Error, Result};
use crate::quadrature::loglog_slope;

/// Log-log slope over the points with a positive, finite value.
#[derive(Clone, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub used: usize,
    pub excluded: usize,
}

pub fn slope_fit(eps: &[f64], vals: &[f64]) -> Result<SlopeFit> {
    if eps.len() != vals.len() {
        return Err(Error::Fit("grid and values differ in length".into()));
    }
    let used = eps.iter().zip(vals).filter(|(e, v)| **e > 0.0 && **v > 0.0 && v.is_finite()).count();
    let slope = loglog_slope(eps, vals)?;
    Ok(SlopeFit { slope, used, excluded: eps.len() - used })
}

/// One sample of a tame inequality `num ≤ C · den`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TamePoint {
    pub num: f64,
    pub den: f64,
}

impl TamePoint {
    /// `0/0` counts as ratio zero; a positive numerator over a zero denominator is infinite.
    pub fn ratio(&self) -> f64 {
        if self.num == 0.0 {
            0.0
        } else if self.den == 0.0 {
            f64::INFINITY
        } else {
            self.num / self.den
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TameFit {
    pub c_train: f64,
    pub max_test: f64,
    pub pass: bool,
}

impl TameFit {
    /// `max_test / C_train`, zero when both vanish.
    pub fn excess(&self) -> f64 {
        if self.max_test == 0.0 {
            0.0
        } else if self.c_train == 0.0 {
            f64::INFINITY
        } else {
            self.max_test / self.c_train
        }
    }
}

/// `C_train` is the largest train ratio; pass iff every test ratio is at most `2 C_train`.
pub fn tame_fit(train: &[TamePoint], test: &[TamePoint]) -> Result<TameFit> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Fit("empty tame batch".into()));
    }
    let max = |b: &[TamePoint]| b.iter().map(TamePoint::ratio).fold(0.0, f64::max);
    let c_train = max(train);
    let max_test = max(test);
    let pass = max_test.is_finite() && max_test <= 2.0 * c_train;
    Ok(TameFit { c_train, max_test, pass })
}

/// Registered tame inequalities. `d` and `d2` are the first and second derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TameOp {
    X,
    DX,
    D2X,
    BC,
    DBC,
    D2BC,
    B,
    DB,
    D2B,
    A,
    AL,
    GradP3,
    DGradP3,
    D2GradP3,
}

/// Norms entering the right-hand sides; `h` is the tangent direction, `w` the function-side input.
#[derive(Clone, Copy, Debug)]
pub struct TameNorms {
    pub zp_s: f64,
    pub zp_0: f64,
    pub h_s: f64,
    pub h_0: f64,
    pub w_s: f64,
    pub w_0: f64,
}

impl TameOp {
    pub const ALL: [TameOp; 14] = [
        TameOp::X,
        TameOp::DX,
        TameOp::D2X,
        TameOp::BC,
        TameOp::DBC,
        TameOp::D2BC,
        TameOp::B,
        TameOp::DB,
        TameOp::D2B,
        TameOp::A,
        TameOp::AL,
        TameOp::GradP3,
        TameOp::DGradP3,
        TameOp::D2GradP3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TameOp::X => "X",
            TameOp::DX => "dX",
            TameOp::D2X => "d2X",
            TameOp::BC => "B_C",
            TameOp::DBC => "dB_C",
            TameOp::D2BC => "d2B_C",
            TameOp::B => "B",
            TameOp::DB => "dB",
            TameOp::D2B => "d2B",
            TameOp::A => "A",
            TameOp::AL => "A_L",
            TameOp::GradP3 => "gradP3",
            TameOp::DGradP3 => "dgradP3",
            TameOp::D2GradP3 => "d2gradP3",
        }
    }

    /// The gradient of `P3` gains no derivative; every other operator gains one.
    pub fn gain(self) -> u32 {
        match self {
            TameOp::GradP3 | TameOp::DGradP3 | TameOp::D2GradP3 => 0,
            _ => 1,
        }
    }

    pub fn denominator(self, n: &TameNorms) -> f64 {
        match self {
            TameOp::X | TameOp::BC | TameOp::GradP3 => n.zp_s * n.zp_0,
            TameOp::DX | TameOp::DBC | TameOp::DGradP3 => n.zp_0 * n.h_s + n.zp_s * n.h_0,
            TameOp::D2X | TameOp::D2BC | TameOp::D2B | TameOp::D2GradP3 => {
                2.0 * n.h_s * n.h_0 + n.zp_s * n.h_0 * n.h_0
            }
            TameOp::B => 1.0 + n.zp_s,
            TameOp::DB => n.h_s + n.zp_s * n.h_0,
            TameOp::A | TameOp::AL => n.zp_s * n.w_0 + n.w_s,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law_slope() {
        let eps = [1e-3, 1e-2, 1e-1];
        let v: Vec<f64> = eps.iter().map(|e| 3.0 * e * e).collect();
        let f = slope_fit(&eps, &v).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert_eq!((f.used, f.excluded), (3, 0));
    }

    #[test]
    fn zero_values_are_excluded() {
        let eps = [1e-3, 1e-2, 1e-1, 1.0];
        let f = slope_fit(&eps, &[0.0, 1e-2, 1e-1, 1.0]).unwrap();
        assert_eq!(f.excluded, 1);
        assert!((f.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vanishing_operator_passes() {
        let z = [TamePoint { num: 0.0, den: 1.0 }, TamePoint { num: 0.0, den: 0.0 }];
        let f = tame_fit(&z, &z).unwrap();
        assert_eq!((f.c_train, f.max_test, f.pass), (0.0, 0.0, true));
        assert_eq!(f.excess(), 0.0);
    }

    #[test]
    fn test_ratio_above_twice_train_fails() {
        let tr = [TamePoint { num: 1.0, den: 1.0 }];
        let te = [TamePoint { num: 2.5, den: 1.0 }];
        assert!(!tame_fit(&tr, &te).unwrap().pass);
        assert!(tame_fit(&tr, &[TamePoint { num: 2.0, den: 1.0 }]).unwrap().pass);
        assert!(tame_fit(&[], &te).is_err());
    }
}
