//! Confidence boosting: train `k` independent weak candidates with the
//! derivative-free procedure on disjoint budget shares, score each on a
//! shared holdout with a robust estimate of its spectral risk, and keep the
//! minimizer.

use alloc::vec::Vec;

use libm::{ceil, log, sqrt};
use rand::{Rng, SeedableRng};

use crate::dist::EmpiricalCdf;
use crate::error::{open_unit, Error, Result};
use crate::losses::{Example, LossModel};
use crate::optim::{run_algorithm1, MirrorGeometry, RunConfig, SampleSource, SliceSource};
use crate::risk::{catoni_default_scale, catoni_estimate, epsilon2_bound, CatoniConfig};
use crate::spectra::Spectrum;
use crate::Rng64;

/// `k = ⌈log(2⌈log(1/δ)⌉)⌉`, at least one.
pub fn candidates_k(delta: f64) -> Result<usize> {
    open_unit("delta", delta)?;
    let inner = ceil(log(1.0 / delta));
    let k = ceil(log(2.0 * inner));
    Ok(if k >= 1.0 { k as usize } else { 1 })
}

/// How a budget of `n` draws is split between candidates and the holdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoostPlan {
    pub k: usize,
    /// `⌊n/(k+1)⌋` draws for each candidate.
    pub per_candidate_budget: usize,
    /// Holdout half used to fit the validation CDF.
    pub holdout_cdf_size: usize,
    /// Holdout half fed to the robust estimate.
    pub holdout_estimate_size: usize,
}

impl BoostPlan {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::NoCandidates);
        }
        let share = n / (k + 1);
        let half = share / 2;
        if half == 0 {
            return Err(Error::BudgetTooSmall {
                budget: n,
                reason: "each holdout half needs at least one point",
            });
        }
        Ok(BoostPlan {
            k,
            per_candidate_budget: share,
            holdout_cdf_size: half,
            holdout_estimate_size: half,
        })
    }

    pub fn for_confidence(n: usize, delta: f64) -> Result<Self> {
        Self::new(n, candidates_k(delta)?)
    }

    pub fn total(&self) -> usize {
        self.k * self.per_candidate_budget + self.holdout_cdf_size + self.holdout_estimate_size
    }
}

/// Choice of the Catoni scale `b` during validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CatoniScale {
    Fixed(f64),
    /// `b` from [`catoni_default_scale`] with variance bound `σ̄²·ŝ₂²`, where
    /// `ŝ₂²` is the mean squared loss on the CDF half.
    FromVarianceBound { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    /// Robust estimate `R̂` of the candidate's spectral risk.
    pub estimate: f64,
    pub scale_b: f64,
    /// `ŝ₂`, root mean squared loss on the CDF half.
    pub s2: f64,
}

/// Scores a candidate: fits an ECDF of its losses on `cdf_half`, maps each
/// point of `estimate_half` to `ℓ·σ(F̂(ℓ))`, and returns the Catoni estimate
/// of those values.
pub fn validate_candidate(
    w: &[f64],
    cdf_half: &[Example],
    estimate_half: &[Example],
    model: &LossModel,
    spectrum: &Spectrum,
    scale: CatoniScale,
) -> Result<Validation> {
    if cdf_half.is_empty() || estimate_half.is_empty() {
        return Err(Error::EmptyInput);
    }
    let cdf_losses = cdf_half
        .iter()
        .map(|z| model.loss(w, z))
        .collect::<Result<Vec<f64>>>()?;
    let s2 = sqrt(cdf_losses.iter().map(|l| l * l).sum::<f64>() / cdf_losses.len() as f64);
    let cdf = EmpiricalCdf::from_vec(cdf_losses)?;
    let weighted = estimate_half
        .iter()
        .map(|z| {
            let l = model.loss(w, z)?;
            Ok(l * spectrum.eval(cdf.eval(l))?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let scale_b = match scale {
        CatoniScale::Fixed(b) => b,
        CatoniScale::FromVarianceBound { delta } => {
            let bound = spectrum.upper_bound() * spectrum.upper_bound() * s2 * s2;
            if bound > 0.0 {
                catoni_default_scale(bound, weighted.len(), delta)?
            } else {
                open_unit("delta", delta)?;
                f64::MIN_POSITIVE
            }
        }
    };
    let estimate = catoni_estimate(&weighted, &CatoniConfig::new(scale_b)?)?;
    Ok(Validation {
        estimate,
        scale_b,
        s2,
    })
}

/// Index of the smallest estimate, lowest index on ties.
pub fn argmin_estimate(estimates: &[f64]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (j, e) in estimates.iter().enumerate() {
        match best {
            Some(b) if !(*e < estimates[b]) => {}
            _ => best = Some(j),
        }
    }
    best.ok_or(Error::NoCandidates)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub validations: Vec<Validation>,
}

/// Validates every candidate on the shared holdout and picks the argmin.
pub fn boost_select(
    candidates: &[Vec<f64>],
    cdf_half: &[Example],
    estimate_half: &[Example],
    model: &LossModel,
    spectrum: &Spectrum,
    scale: CatoniScale,
) -> Result<Selection> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let validations = candidates
        .iter()
        .map(|w| validate_candidate(w, cdf_half, estimate_half, model, spectrum, scale))
        .collect::<Result<Vec<_>>>()?;
    let estimates: Vec<f64> = validations.iter().map(|v| v.estimate).collect();
    Ok(Selection {
        index: argmin_estimate(&estimates)?,
        validations,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub plan: BoostPlan,
    pub candidates: Vec<Vec<f64>>,
    pub selection: Selection,
    /// `ε₂(n; k, δ)` with `s₂` replaced by the largest holdout estimate `ŝ₂`.
    pub epsilon2: f64,
    /// Set when the spectrum has no finite Lipschitz constant and the
    /// corresponding term of `ε₂` was dropped.
    pub lipschitz_term_dropped: bool,
}

impl BoostOutcome {
    pub fn selected(&self) -> &[f64] {
        &self.candidates[self.selection.index]
    }
}

fn take<S: SampleSource + ?Sized>(source: &mut S, count: usize) -> Result<Vec<Example>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let drawn = source.drawn();
        out.push(source.draw().ok_or(Error::BudgetExhausted { drawn })?.clone());
    }
    Ok(out)
}

/// Trains `k = candidates_k(δ)` candidates on disjoint shares of a budget of
/// `n` draws, validates them on the remaining share and returns the
/// selection. Each candidate runs on its own generator seeded from `rng`.
#[allow(clippy::too_many_arguments)]
pub fn run_boosted<S, R>(
    model: &LossModel,
    source: &mut S,
    spectrum: &Spectrum,
    geometry: &MirrorGeometry,
    cfg: &RunConfig,
    n: usize,
    delta: f64,
    w0: &[f64],
    rng: &mut R,
) -> Result<BoostOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let plan = BoostPlan::for_confidence(n, delta)?;
    let seeds: Vec<u64> = (0..plan.k).map(|_| rng.random()).collect();
    let mut candidates = Vec::with_capacity(plan.k);
    for seed in seeds {
        let share = take(source, plan.per_candidate_budget)?;
        let mut sub_rng = Rng64::seed_from_u64(seed);
        let out = run_algorithm1(
            model,
            &mut SliceSource::new(&share),
            spectrum,
            geometry,
            cfg,
            plan.per_candidate_budget,
            w0.to_vec(),
            &mut sub_rng,
        )?;
        candidates.push(out.average);
    }
    let cdf_half = take(source, plan.holdout_cdf_size)?;
    let estimate_half = take(source, plan.holdout_estimate_size)?;
    let selection = boost_select(
        &candidates,
        &cdf_half,
        &estimate_half,
        model,
        spectrum,
        CatoniScale::FromVarianceBound { delta },
    )?;
    let s2 = selection
        .validations
        .iter()
        .map(|v| v.s2)
        .fold(0.0, f64::max);
    let lipschitz = spectrum.lipschitz().finite();
    let epsilon2 = if s2 > 0.0 {
        epsilon2_bound(
            spectrum.upper_bound(),
            lipschitz.unwrap_or(0.0),
            s2,
            n,
            plan.k,
            delta,
        )?
    } else {
        0.0
    };
    Ok(BoostOutcome {
        plan,
        candidates,
        selection,
        epsilon2,
        lipschitz_term_dropped: lipschitz.is_none(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn k_examples() {
        assert_eq!(candidates_k(0.05).unwrap(), 2);
        assert_eq!(candidates_k(0.3).unwrap(), 2);
        assert_eq!(candidates_k(0.1).unwrap(), 2);
        assert_eq!(candidates_k(0.999_999).unwrap(), 1);
        assert_eq!(candidates_k(1e-9).unwrap(), 4);
        assert!(candidates_k(1.0).is_err());
        assert!(candidates_k(0.0).is_err());
    }

    #[test]
    fn plan_fits_budget() {
        for n in 4..500 {
            for k in 1..5 {
                if let Ok(p) = BoostPlan::new(n, k) {
                    assert!(p.total() <= n);
                    assert_eq!(p.per_candidate_budget, n / (k + 1));
                    assert_eq!(p.holdout_cdf_size, n / (k + 1) / 2);
                } else {
                    assert!(n / (k + 1) < 2);
                }
            }
        }
    }

    #[test]
    fn argmin_rules() {
        assert_eq!(argmin_estimate(&[3.0, 1.0, 2.0]).unwrap(), 1);
        assert_eq!(argmin_estimate(&[1.0, 1.0]).unwrap(), 0);
        assert_eq!(argmin_estimate(&[7.0]).unwrap(), 0);
        assert_eq!(argmin_estimate(&[]), Err(Error::NoCandidates));
    }

    #[test]
    fn constant_losses_validate_to_the_constant() {
        let model = LossModel::synthetic_linear(1);
        let half: Vec<Example> = (0..20).map(|_| Example::regression(vec![1.0], -2.5)).collect();
        let v = validate_candidate(
            &[0.0],
            &half,
            &half,
            &model,
            &Spectrum::uniform(),
            CatoniScale::FromVarianceBound { delta: 0.1 },
        )
        .unwrap();
        assert_eq!(v.estimate, 2.5);
    }

    #[test]
    fn symmetric_sample_validates_to_its_mean() {
        let model = LossModel::synthetic_linear(1);
        let cdf_half: Vec<Example> = (0..10).map(|i| Example::regression(vec![1.0], i as f64)).collect();
        let est: Vec<Example> = [1.0, 2.0, 3.0, 4.0, 5.0]
            .iter()
            .map(|&y| Example::regression(vec![1.0], y))
            .collect();
        let v = validate_candidate(&[0.0], &cdf_half, &est, &model, &Spectrum::uniform(), CatoniScale::Fixed(1.3))
            .unwrap();
        assert!((v.estimate - 3.0).abs() < 1e-9);
    }

    #[test]
    fn selection_over_candidates() {
        let model = LossModel::synthetic_linear(1);
        let half: Vec<Example> = (0..30).map(|i| Example::regression(vec![1.0], (i % 7) as f64)).collect();
        let candidates = vec![vec![10.0], vec![3.0], vec![-4.0]];
        let sel = boost_select(
            &candidates,
            &half,
            &half,
            &model,
            &Spectrum::exponential(1.0).unwrap(),
            CatoniScale::FromVarianceBound { delta: 0.1 },
        )
        .unwrap();
        assert_eq!(sel.index, 1);
        let best = sel.validations[sel.index].estimate;
        assert!(sel.validations.iter().all(|v| best <= v.estimate));
        assert!(boost_select(&[], &half, &half, &model, &Spectrum::uniform(), CatoniScale::Fixed(1.0)).is_err());
    }
}
