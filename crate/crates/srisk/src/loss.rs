//! Loss-function families and their regularity constants.
//!
//! A loss function here is an increasing scalar function `l` with derivative
//! `l'`. Three built-in families are supported:
//!
//! - `Exponential(beta)`: `l(x) = exp(beta * x)` — the entropic-risk loss.
//! - `PolynomialPositivePart(p)`: `l(x) = x^p / p` for `x >= 0`, `0` otherwise.
//! - `PiecewiseLinear(slope_pos, slope_neg)`: two linear pieces joined at 0,
//!   Lipschitz with a strictly positive growth bound.
//!
//! The exponential family is not globally Lipschitz, so its constants are
//! reported as effective constants on a caller-declared interval `[-R, R]`.

use crate::error::{Error, Result};

/// Arguments to `exp` beyond this are rejected rather than returned as `inf`.
pub const EXP_GUARD: f64 = 700.0;

/// Increasing scalar loss with an explicit derivative.
///
/// Values are immutable after construction and safe to share across workers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossFunction {
    /// `l(x) = exp(beta * x)`, `beta > 0`.
    Exponential { beta: f64 },
    /// `l(x) = x^p / p` for `x >= 0`, `0` otherwise; `p > 1`.
    PolynomialPositivePart { p: f64 },
    /// Slope `slope_pos` for `x >= 0`, `slope_neg` for `x < 0`;
    /// `slope_pos >= slope_neg > 0`. The derivative at the kink is defined
    /// as `slope_neg`.
    PiecewiseLinear { slope_pos: f64, slope_neg: f64 },
}

/// Which regularity regime a loss falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossRegime {
    Lipschitz,
    Smooth,
}

/// Regularity constants of a loss, possibly effective on an interval.
///
/// `l1` is the Lipschitz constant, `l2` the smoothness constant, `a` and
/// `b_sub` the sub-linear derivative bounds `l'(x) <= a|x| + b_sub`, and `b`
/// the growth lower bound `l(y) - l(x) >= b (y - x)` for `y >= x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConstants {
    pub regime: LossRegime,
    pub l1: f64,
    pub l2: f64,
    pub a: f64,
    pub b_sub: f64,
    pub b: f64,
}

/// The polynomial family has zero derivative on the negative axis, so its
/// growth bound is only positive on a sub-domain bounded away from zero.
/// Constants are reported for arguments `>= POLY_GROWTH_LO`.
pub const POLY_GROWTH_LO: f64 = 1.0;

impl LossFunction {
    pub fn exponential(beta: f64) -> Result<Self> {
        if !(beta > 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: beta,
            });
        }
        Ok(LossFunction::Exponential { beta })
    }

    pub fn polynomial(p: f64) -> Result<Self> {
        if !(p > 1.0) {
            return Err(Error::InvalidParameter { name: "p", value: p });
        }
        Ok(LossFunction::PolynomialPositivePart { p })
    }

    pub fn piecewise(slope_pos: f64, slope_neg: f64) -> Result<Self> {
        if !(slope_neg > 0.0) {
            return Err(Error::InvalidParameter {
                name: "neg",
                value: slope_neg,
            });
        }
        if !(slope_pos >= slope_neg) {
            return Err(Error::InvalidParameter {
                name: "pos",
                value: slope_pos,
            });
        }
        Ok(LossFunction::PiecewiseLinear {
            slope_pos,
            slope_neg,
        })
    }

    /// Evaluates `l(x)`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        match *self {
            LossFunction::Exponential { beta } => {
                let arg = beta * x;
                if arg > EXP_GUARD {
                    return Err(Error::OverflowGuard(arg));
                }
                Ok(arg.exp())
            }
            LossFunction::PolynomialPositivePart { p } => {
                if x >= 0.0 {
                    Ok(x.powf(p) / p)
                } else {
                    Ok(0.0)
                }
            }
            LossFunction::PiecewiseLinear {
                slope_pos,
                slope_neg,
            } => {
                if x >= 0.0 {
                    Ok(slope_pos * x)
                } else {
                    Ok(slope_neg * x)
                }
            }
        }
    }

    /// Evaluates `l'(x)`.
    pub fn eval_derivative(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(x));
        }
        match *self {
            LossFunction::Exponential { beta } => {
                let arg = beta * x;
                if arg > EXP_GUARD {
                    return Err(Error::OverflowGuard(arg));
                }
                Ok(beta * arg.exp())
            }
            LossFunction::PolynomialPositivePart { p } => {
                if x >= 0.0 {
                    Ok(x.powf(p - 1.0))
                } else {
                    Ok(0.0)
                }
            }
            LossFunction::PiecewiseLinear {
                slope_pos,
                slope_neg,
            } => {
                // Derivative at the kink is taken from the negative side.
                if x > 0.0 {
                    Ok(slope_pos)
                } else {
                    Ok(slope_neg)
                }
            }
        }
    }

    /// Regularity constants, effective on `[-R, R]` where the family is not
    /// globally regular.
    ///
    /// Piecewise-linear constants are exact and domain-independent. For the
    /// exponential family the constants hold on `[-R, R]`; for the polynomial
    /// family the growth bound `b` holds for arguments `>= POLY_GROWTH_LO`.
    pub fn constants(&self, domain_halfwidth: f64) -> Result<LossConstants> {
        if !(domain_halfwidth >= 0.0) || domain_halfwidth.is_nan() {
            return Err(Error::InvalidDomain(domain_halfwidth));
        }
        let r = domain_halfwidth;
        Ok(match *self {
            LossFunction::Exponential { beta } => LossConstants {
                regime: LossRegime::Smooth,
                l1: beta * (beta * r).exp(),
                l2: beta * beta * (beta * r).exp(),
                a: 0.0,
                b_sub: beta * (beta * r).exp(),
                b: beta * (-beta * r).exp(),
            },
            LossFunction::PolynomialPositivePart { p } => LossConstants {
                regime: LossRegime::Smooth,
                // Global constants for p = 2; for p > 2 these are effective
                // on [-R, R].
                l1: r.max(POLY_GROWTH_LO).powf(p - 1.0),
                l2: if (p - 2.0).abs() < 1e-12 {
                    1.0
                } else {
                    (p - 1.0) * r.max(POLY_GROWTH_LO).powf(p - 2.0)
                },
                a: if (p - 2.0).abs() < 1e-12 { 1.0 } else { 0.0 },
                b_sub: if (p - 2.0).abs() < 1e-12 {
                    0.0
                } else {
                    r.max(POLY_GROWTH_LO).powf(p - 1.0)
                },
                b: POLY_GROWTH_LO.powf(p - 1.0),
            },
            LossFunction::PiecewiseLinear {
                slope_pos,
                slope_neg,
            } => LossConstants {
                regime: LossRegime::Lipschitz,
                l1: slope_pos,
                l2: 0.0,
                a: 0.0,
                b_sub: slope_pos,
                b: slope_neg,
            },
        })
    }
}
