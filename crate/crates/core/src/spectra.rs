//! Spectral densities.
//!
//! A spectrum `σ: [0, 1] → ℝ₊` is nonnegative, nondecreasing and integrates
//! to one. It decides how much weight each quantile level of the loss
//! distribution receives: the uniform spectrum gives the mean, the CVaR
//! spectrum averages the upper tail beyond level `β`, and the exponential
//! spectrum tilts weight smoothly towards the largest losses.

use core::fmt;

use libm::{exp, expm1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectrumKind {
    /// `σ(u) = c·e^{−c(1−u)} / (1 − e^{−c})`.
    Exponential { c: f64 },
    /// `σ(u) = 1{β < u ≤ 1} / (1 − β)`.
    Cvar { beta: f64 },
    Uniform,
}

/// Lipschitz constant of a spectrum. CVaR has a jump, so its constant is a
/// tagged value rather than `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lipschitz {
    Finite(f64),
    Unbounded,
}

impl Lipschitz {
    pub fn finite(self) -> Option<f64> {
        match self {
            Lipschitz::Finite(v) => Some(v),
            Lipschitz::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    kind: SpectrumKind,
    lipschitz: Lipschitz,
    upper_bound: f64,
}

impl Spectrum {
    pub fn exponential(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Domain {
                name: "c",
                value: c,
                expected: "finite and > 0",
            });
        }
        let norm = -expm1(-c);
        Ok(Spectrum {
            kind: SpectrumKind::Exponential { c },
            // max |σ′| is attained at u = 1
            lipschitz: Lipschitz::Finite(c * c / norm),
            upper_bound: c / norm,
        })
    }

    pub fn cvar(beta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(Error::Domain {
                name: "beta",
                value: beta,
                expected: "0 <= beta < 1",
            });
        }
        Ok(Spectrum {
            kind: SpectrumKind::Cvar { beta },
            lipschitz: Lipschitz::Unbounded,
            upper_bound: 1.0 / (1.0 - beta),
        })
    }

    pub fn uniform() -> Self {
        Spectrum {
            kind: SpectrumKind::Uniform,
            lipschitz: Lipschitz::Finite(0.0),
            upper_bound: 1.0,
        }
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    /// `λ_σ`.
    pub fn lipschitz(&self) -> Lipschitz {
        self.lipschitz
    }

    /// `σ̄ = sup σ = σ(1)`.
    pub fn upper_bound(&self) -> f64 {
        self.upper_bound
    }

    pub fn is_differentiable(&self) -> bool {
        !matches!(self.kind, SpectrumKind::Cvar { .. })
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            SpectrumKind::Exponential { .. } => "exponential",
            SpectrumKind::Cvar { .. } => "cvar",
            SpectrumKind::Uniform => "uniform",
        }
    }

    /// Evaluates `σ(u)`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        match self.kind {
            SpectrumKind::Exponential { c } => c * exp(-c * (1.0 - u)) / -expm1(-c),
            SpectrumKind::Cvar { beta } => {
                if u > beta {
                    1.0 / (1.0 - beta)
                } else {
                    0.0
                }
            }
            SpectrumKind::Uniform => 1.0,
        }
    }

    /// Evaluates `σ′(u)`. CVaR has no classical derivative at `β` and is rejected.
    pub fn eval_derivative(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        match self.kind {
            SpectrumKind::Exponential { c } => Ok(c * self.eval_unchecked(u)),
            SpectrumKind::Uniform => Ok(0.0),
            SpectrumKind::Cvar { .. } => Err(Error::UnsupportedSpectrum("cvar")),
        }
    }

    /// `∫_a^b σ(u) du` for `0 ≤ a ≤ b ≤ 1`, in closed form.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        check_level(a)?;
        check_level(b)?;
        if a > b {
            return Err(Error::Domain {
                name: "a",
                value: a,
                expected: "a <= b",
            });
        }
        Ok(match self.kind {
            SpectrumKind::Exponential { c } => {
                // e^{−c(1−b)} − e^{−c(1−a)} = −e^{−c(1−b)}·expm1(−c(b−a))
                -exp(-c * (1.0 - b)) * expm1(-c * (b - a)) / -expm1(-c)
            }
            SpectrumKind::Cvar { beta } => (b.max(beta) - a.max(beta)) / (1.0 - beta),
            SpectrumKind::Uniform => b - a,
        })
    }
}

impl fmt::Display for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            SpectrumKind::Exponential { c } => write!(f, "exponential(c={c})"),
            SpectrumKind::Cvar { beta } => write!(f, "cvar(beta={beta})"),
            SpectrumKind::Uniform => write!(f, "uniform"),
        }
    }
}

fn check_level(u: f64) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "u",
            value: u,
            expected: "0 <= u <= 1",
        })
    }
}
