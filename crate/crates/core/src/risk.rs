//! Risk functionals and robust validation estimates.

use alloc::vec::Vec;

use libm::{fabs, floor, log, log1p, sqrt};
use rand::Rng;

use crate::error::{open_unit, positive, Error, Result};
use crate::optim::sample_ball;
use crate::spectra::Spectrum;

/// `ℓ·σ(F(ℓ))`: one draw of the unbiased spectral-risk estimator when `F` is
/// the true loss CDF, or of its plug-in counterpart when `F` is estimated.
pub fn weighted_loss(loss: f64, cdf_at_loss: f64, spectrum: &Spectrum) -> Result<f64> {
    Ok(loss * spectrum.eval(cdf_at_loss)?)
}

/// Weights `Wᵢ = ∫_{(i−1)/n}^{i/n} σ` attached to the `i`-th smallest of `n` losses.
pub fn order_weights(n: usize, spectrum: &Spectrum) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let nf = n as f64;
    (0..n)
        .map(|i| spectrum.integral(i as f64 / nf, ((i + 1) as f64 / nf).min(1.0)))
        .collect()
}

/// Spectral risk of the empirical loss distribution: the L-statistic
/// `Σ ℓ₍ᵢ₎·Wᵢ` over the sorted losses.
pub fn plugin_spectral_risk(losses: &[f64], spectrum: &Spectrum) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::EmptyInput);
    }
    if losses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut sorted = losses.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let weights = order_weights(sorted.len(), spectrum)?;
    Ok(sorted.iter().zip(&weights).map(|(l, w)| l * w).sum())
}

/// A Monte-Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McEstimate {
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std_error = if values.len() > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            sqrt(var / n)
        } else {
            0.0
        };
        Ok(McEstimate { mean, std_error })
    }
}

/// Monte-Carlo estimate of the smoothed spectral risk `E_V[S(w + δV)]`, `V`
/// uniform on the unit ball.
///
/// Each of `n_ball` perturbations draws `n_loss` fresh losses at the shifted
/// point from `loss_at` and takes their plug-in spectral risk.
pub fn smoothed_spectral_risk_mc<R, F>(
    w: &[f64],
    delta: f64,
    spectrum: &Spectrum,
    mut loss_at: F,
    n_ball: usize,
    n_loss: usize,
    rng: &mut R,
) -> Result<McEstimate>
where
    R: Rng + ?Sized,
    F: FnMut(&[f64], &mut R) -> f64,
{
    open_unit("delta", delta)?;
    if n_ball == 0 || n_loss == 0 || w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut point = w.to_vec();
    let mut losses = Vec::with_capacity(n_loss);
    let mut risks = Vec::with_capacity(n_ball);
    for _ in 0..n_ball {
        let v = sample_ball(w.len(), rng);
        for ((p, wi), vi) in point.iter_mut().zip(w).zip(&v) {
            *p = wi + delta * vi;
        }
        losses.clear();
        for _ in 0..n_loss {
            losses.push(loss_at(&point, rng));
        }
        risks.push(plugin_spectral_risk(&losses, spectrum)?);
    }
    McEstimate::from_samples(&risks)
}

/// Settings for the Catoni-type M-estimator of location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatoniConfig {
    pub scale_b: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl CatoniConfig {
    pub fn new(scale_b: f64) -> Result<Self> {
        positive("scale_b", scale_b)?;
        Ok(CatoniConfig {
            scale_b,
            max_iters: 200,
            tol: 1e-10,
        })
    }
}

/// Catoni's narrowest influence function `ψ(u) = sign(u)·log(1 + |u| + u²/2)`.
pub fn catoni_psi(u: f64) -> f64 {
    let a = fabs(u);
    let v = log1p(a + 0.5 * a * a);
    if u < 0.0 {
        -v
    } else {
        v
    }
}

/// Root of `a ↦ Σᵢ ψ((a − xᵢ)/b)`, found by bisection on
/// `[min(x) − b, max(x) + b]`.
pub fn catoni_estimate(samples: &[f64], cfg: &CatoniConfig) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    positive("scale_b", cfg.scale_b)?;
    let b = cfg.scale_b;
    let objective = |a: f64| samples.iter().map(|x| catoni_psi((a - x) / b)).sum::<f64>();

    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (min - b, max + b);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..cfg.max_iters {
        mid = 0.5 * (lo + hi);
        let value = objective(mid);
        if value.is_nan() {
            return Err(Error::NonConvergence);
        }
        if fabs(value) <= cfg.tol || mid <= lo || mid >= hi {
            break;
        }
        if value > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // the root is bracketed by the sample range
    Ok(mid.clamp(min, max))
}

/// Scale `b = √(n·v / (2(1 + log(2/δ))))` for a sample of size `n` whose
/// variance is bounded by `v`.
pub fn catoni_default_scale(variance_bound: f64, n: usize, delta: f64) -> Result<f64> {
    positive("variance_bound", variance_bound)?;
    open_unit("delta", delta)?;
    if n == 0 {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    Ok(sqrt(n as f64 * variance_bound / (2.0 * (1.0 + log(2.0 / delta)))))
}

/// Deviation bound `ε₂(n; k, δ)` between a candidate's robust validation
/// estimate and its spectral risk:
///
/// `2σ̄s₂√(2(1 + log(2/δ))/m) + λ_σ s₂ √(log(4/δ)/m)` with `m = ⌊n/(k+1)⌋`.
pub fn epsilon2_bound(
    sigma_bar: f64,
    lambda_sigma: f64,
    s2: f64,
    n: usize,
    k: usize,
    delta: f64,
) -> Result<f64> {
    positive("sigma_bar", sigma_bar)?;
    positive("s2", s2)?;
    if !(lambda_sigma >= 0.0 && lambda_sigma.is_finite()) {
        return Err(Error::Domain {
            name: "lambda_sigma",
            value: lambda_sigma,
            expected: "finite and >= 0",
        });
    }
    open_unit("delta", delta)?;
    if k == 0 {
        return Err(Error::Domain {
            name: "k",
            value: 0.0,
            expected: "k >= 1",
        });
    }
    let m = floor(n as f64 / (k + 1) as f64);
    if m < 1.0 {
        return Err(Error::BudgetTooSmall {
            budget: n,
            reason: "floor(n / (k + 1)) must be at least 1",
        });
    }
    Ok(2.0 * sigma_bar * s2 * sqrt(2.0 * (1.0 + log(2.0 / delta)) / m)
        + lambda_sigma * s2 * sqrt(log(4.0 / delta) / m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::E;
    use rand::SeedableRng;
    use std::vec::Vec;
    use rand::Rng;

    #[test]
    fn weighted_loss_examples() {
        let exp1 = Spectrum::exponential(1.0).unwrap();
        let v = weighted_loss(2.0, 1.0, &exp1).unwrap();
        assert!((v - 3.163953).abs() < 1e-6);
        assert_eq!(weighted_loss(0.0, 0.7, &exp1).unwrap(), 0.0);
        assert_eq!(weighted_loss(5.0, 0.5, &Spectrum::uniform()).unwrap(), 5.0);
        assert!(weighted_loss(1.0, 1.5, &exp1).is_err());
    }

    #[test]
    fn plugin_examples() {
        let cvar = Spectrum::cvar(0.5).unwrap();
        assert!((plugin_spectral_risk(&[4.0, 1.0, 3.0, 2.0], &cvar).unwrap() - 3.5).abs() < 1e-12);
        let uni = Spectrum::uniform();
        assert!((plugin_spectral_risk(&[1.0, 2.0, 3.0, 4.0], &uni).unwrap() - 2.5).abs() < 1e-12);
        let exp = Spectrum::exponential(2.0).unwrap();
        let c = plugin_spectral_risk(&[1.7; 33], &exp).unwrap();
        assert!((c - 1.7).abs() < 1e-12);
        assert_eq!(plugin_spectral_risk(&[], &exp), Err(Error::EmptyInput));
    }

    #[test]
    fn weights_sum_to_one() {
        for s in [
            Spectrum::exponential(0.5).unwrap(),
            Spectrum::exponential(5.0).unwrap(),
            Spectrum::cvar(0.95).unwrap(),
            Spectrum::uniform(),
        ] {
            for n in [1usize, 2, 7, 100, 999, 1000] {
                let total: f64 = order_weights(n, &s).unwrap().iter().sum();
                assert!((total - 1.0).abs() < 1e-9, "{s} n={n}");
            }
        }
    }

    #[test]
    fn catoni_fixed_points() {
        for b in [0.1, 1.0, 10.0] {
            let cfg = CatoniConfig::new(b).unwrap();
            assert_eq!(catoni_estimate(&[1.0, 2.0, 3.0], &cfg).unwrap(), 2.0);
            assert_eq!(catoni_estimate(&[4.5], &cfg).unwrap(), 4.5);
        }
        let cfg = CatoniConfig::new(1.0).unwrap();
        assert_eq!(catoni_estimate(&[], &cfg), Err(Error::EmptyInput));
    }

    #[test]
    fn catoni_stays_in_range() {
        let mut rng = crate::Rng64::seed_from_u64(5);
        for _ in 0..200 {
            let n = rng.random_range(1..40);
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0f64).powi(3)).collect();
            let cfg = CatoniConfig::new(rng.random_range(0.01..20.0)).unwrap();
            let a = catoni_estimate(&xs, &cfg).unwrap();
            let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(a >= min && a <= max);
        }
    }

    #[test]
    fn psi_is_odd_and_monotone() {
        let mut prev = f64::NEG_INFINITY;
        for i in -100..=100 {
            let u = i as f64 * 0.37;
            assert_eq!(catoni_psi(-u), -catoni_psi(u));
            assert!(catoni_psi(u) >= prev);
            prev = catoni_psi(u);
        }
    }

    #[test]
    fn default_scale_examples() {
        let b = catoni_default_scale(4.0, 8, 2.0 / (E * E)).unwrap();
        assert!((b - (32.0f64 / 6.0).sqrt()).abs() < 1e-12);
        assert!((b - 2.3094).abs() < 1e-4);
        assert!(catoni_default_scale(1.0, 2, 2.0).is_err());
        let bs: Vec<f64> = [1, 10, 100].iter().map(|&n| catoni_default_scale(1.0, n, 0.1).unwrap()).collect();
        assert!(bs[0] < bs[1] && bs[1] < bs[2]);
    }

    #[test]
    fn epsilon2_examples() {
        let e = epsilon2_bound(1.0, 0.0, 1.0, 6, 2, 0.5).unwrap();
        assert!((e - 2.0 * (1.0 + 4f64.ln()).sqrt()).abs() < 1e-12);
        assert!((e - 3.089_527_058).abs() < 1e-8);
        let a = epsilon2_bound(1.3, 0.7, 2.0, 30, 2, 0.2).unwrap();
        let b = epsilon2_bound(1.3, 0.7, 2.0, 60, 2, 0.2).unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            epsilon2_bound(1.0, 0.0, 1.0, 2, 2, 0.5),
            Err(Error::BudgetTooSmall { .. })
        ));
    }

    #[test]
    fn smoothed_risk_of_constant_loss() {
        let mut rng = crate::Rng64::seed_from_u64(1);
        let s = Spectrum::exponential(1.0).unwrap();
        let est =
            smoothed_spectral_risk_mc(&[0.3, -0.2], 0.9, &s, |_, _| 2.5, 50, 20, &mut rng).unwrap();
        assert!((est.mean - 2.5).abs() < 1e-12);
        assert!(smoothed_spectral_risk_mc(&[0.0], 1.0, &s, |_, _| 1.0, 5, 5, &mut rng).is_err());
    }
}
