//! Models of the loss distribution function `F_w(u) = P{ℓ(w; Z) ≤ u}`.

use alloc::vec::Vec;

use libm::{erfc, exp, log, sqrt};

use crate::error::{open_unit, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * core::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * exp(-0.5 * x * x)
}

/// Right-continuous step function `F̂(u) = (1/M)·#{i : ℓᵢ ≤ u}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn fit(losses: &[f64]) -> Result<Self> {
        Self::from_vec(losses.to_vec())
    }

    /// Like [`EmpiricalCdf::fit`] but takes ownership of the buffer.
    pub fn from_vec(mut losses: Vec<f64>) -> Result<Self> {
        if losses.is_empty() {
            return Err(Error::EmptyInput);
        }
        if losses.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite);
        }
        losses.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted: losses })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, u: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= u);
        count as f64 / self.sorted.len() as f64
    }
}

/// CDF of `|X|` with `X ~ N(mu, s²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedNormalCdf {
    mu: f64,
    s: f64,
}

impl FoldedNormalCdf {
    pub const MIN_SCALE: f64 = 1e-12;

    pub fn new(mu: f64, s: f64) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::NonFinite);
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain {
                name: "s",
                value: s,
                expected: "finite and > 0",
            });
        }
        Ok(FoldedNormalCdf { mu, s })
    }

    /// Sets `mu` and `s` to the sample mean and sample standard deviation
    /// (denominator `m − 1`) of the losses; `s` is clamped below at
    /// [`Self::MIN_SCALE`].
    pub fn fit(losses: &[f64]) -> Result<Self> {
        if losses.len() < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: losses.len(),
            });
        }
        let m = losses.len() as f64;
        let mu = losses.iter().sum::<f64>() / m;
        let ss: f64 = losses.iter().map(|v| (v - mu) * (v - mu)).sum();
        let s = sqrt(ss / (m - 1.0)).max(Self::MIN_SCALE);
        if !(mu.is_finite() && s.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(FoldedNormalCdf { mu, s })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn scale(&self) -> f64 {
        self.s
    }

    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let v = normal_cdf((u - self.mu) / self.s) - normal_cdf((-u - self.mu) / self.s);
        v.clamp(0.0, 1.0)
    }

    pub fn density(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        (normal_pdf((u - self.mu) / self.s) + normal_pdf((u + self.mu) / self.s)) / self.s
    }
}

/// Half-width `ε = √(log(2/δ) / (2m))` of the DKW band: with probability at
/// least `1 − δ`, `sup_u |F̂(u) − F(u)| ≤ ε` for an `m`-sample ECDF.
pub fn dkw_band(m: usize, delta: f64) -> Result<f64> {
    if m == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    open_unit("delta", delta)?;
    Ok(sqrt(log(2.0 / delta) / (2.0 * m as f64)))
}
