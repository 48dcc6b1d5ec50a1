//! Cutting-rate costs whose shifted form `F(x) = s + f(r - x)` is a
//! posynomial in `x = r - phi`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalised diminishing-returns cost
/// `((r - x)^-1 - (r - lo)^-1) / ((r - hi)^-1 - (r - lo)^-1)`, so that
/// `f(lo) = 0` and `f(hi) = 1`.
pub fn normalized_reciprocal_cost(x: f64, r: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi && hi < r) {
        return Err(Error::InvalidParameter(format!(
            "need lo < hi < r, got lo={lo}, hi={hi}, r={r}"
        )));
    }
    if !(lo..=hi).contains(&x) {
        return Err(Error::InvalidParameter(format!("x={x} outside [{lo}, {hi}]")));
    }
    let base = 1.0 / (r - lo);
    Ok((1.0 / (r - x) - base) / (1.0 / (r - hi) - base))
}

/// `coef * x^exponent` with `coef > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    pub coef: f64,
    pub exponent: f64,
}

/// Cutting cost given through its posynomial form: `f(phi) = F(r - phi) - s`
/// with `F(x) = sum_t coef_t x^exponent_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutCost {
    pub terms: Vec<Monomial>,
    pub offset: f64,
}

impl CutCost {
    /// The normalised reciprocal cost: `F(x) = c / x`,
    /// `c = 1 / ((r - hi)^-1 - (r - lo)^-1)`, `s = c / (r - lo)`.
    pub fn normalized_reciprocal(r: f64, lo: f64, hi: f64) -> Result<Self> {
        normalized_reciprocal_cost(lo, r, lo, hi)?;
        let c = 1.0 / (1.0 / (r - hi) - 1.0 / (r - lo));
        Ok(Self {
            terms: vec![Monomial {
                coef: c,
                exponent: -1.0,
            }],
            offset: c / (r - lo),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidParameter("cost posynomial has no terms".into()));
        }
        if self
            .terms
            .iter()
            .any(|t| !(t.coef > 0.0) || !t.coef.is_finite() || !t.exponent.is_finite())
        {
            return Err(Error::InvalidParameter(
                "posynomial coefficients must be positive and finite".into(),
            ));
        }
        Ok(())
    }

    /// `F(x)`.
    pub fn shifted(&self, x: f64) -> f64 {
        self.terms.iter().map(|t| t.coef * x.powf(t.exponent)).sum()
    }

    /// `f(phi) = F(r - phi) - s`.
    pub fn eval(&self, phi: f64, r: f64) -> f64 {
        self.shifted(r - phi) - self.offset
    }
}
