//! Stochastic mirror descent under spectral risks.
//!
//! Three gradient estimates drive the same projected update:
//!
//! * `Default`: derivative-free. Each step fits an empirical CDF of the losses
//!   at `w_t` on `M` fresh ancillary draws, perturbs `w_t` along a random unit
//!   direction `U` and returns `(d/δ)·ℓ(w_t + δU; Z)·σ(F̂(ℓ(w_t + δU; Z)))·U`,
//!   an unbiased estimate of the smoothed spectral risk's gradient when
//!   `F̂` is exact.
//! * `Fast`: fits a folded-normal model of the loss CDF on the ancillary
//!   draws and applies the chain rule to `ℓ·σ(F̂(ℓ))`.
//! * `Off`: the plain loss gradient, i.e. ordinary SGD on the expected loss.
//!
//! Only the Euclidean mirror map ships, for which the mirror step is
//! gradient descent followed by projection onto an L2 ball.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use libm::sqrt;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dist::{EmpiricalCdf, FoldedNormalCdf};
use crate::error::{open_unit, positive, Error, Result};
use crate::losses::{dot, Example, LossModel};
use crate::spectra::{Lipschitz, Spectrum};

/// Uniform draw from the unit sphere in `ℝᵈ` (a normalized Gaussian vector).
pub fn sample_sphere<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    assert!(d >= 1, "dimension must be positive");
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = sqrt(dot(&v, &v));
        if norm > 1e-150 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Uniform draw from the closed unit ball: a sphere direction scaled by `r^{1/d}`.
pub fn sample_ball<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut v = sample_sphere(d, rng);
    let u: f64 = rng.random();
    let r = libm::pow(u, 1.0 / d as f64);
    v.iter_mut().for_each(|x| *x *= r);
    v
}

pub fn norm(v: &[f64]) -> f64 {
    sqrt(dot(v, v))
}

/// Mirror map and feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MirrorGeometry {
    /// `Φ(u) = ‖u‖²/2` on the L2 ball `{w : ‖w‖ ≤ radius}`.
    Euclidean { radius: f64 },
}

impl MirrorGeometry {
    pub fn euclidean(radius: f64) -> Result<Self> {
        positive("radius", radius)?;
        Ok(MirrorGeometry::Euclidean { radius })
    }

    pub fn radius(&self) -> f64 {
        match *self {
            MirrorGeometry::Euclidean { radius } => radius,
        }
    }

    /// `μ`, the strong-convexity modulus of `Φ`.
    pub fn strong_convexity(&self) -> f64 {
        1.0
    }

    /// `Δ`, the norm diameter of the feasible set.
    pub fn diameter(&self) -> f64 {
        2.0 * self.radius()
    }

    /// `Δ_Φ`, the Bregman diameter of the feasible set.
    pub fn bregman_diameter(&self) -> f64 {
        let r = self.radius();
        2.0 * r * r
    }

    pub fn contains(&self, w: &[f64]) -> bool {
        norm(w) <= self.radius()
    }

    pub fn project(&self, w: &mut [f64]) {
        let r = self.radius();
        let n = norm(w);
        if n > r {
            let scale = r / n;
            w.iter_mut().for_each(|x| *x *= scale);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Default,
    Fast,
    Off,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Default, Method::Fast, Method::Off];

    pub fn name(self) -> &'static str {
        match self {
            Method::Default => "default",
            Method::Fast => "fast",
            Method::Off => "off",
        }
    }

    pub fn uses_ancillary(self) -> bool {
        !matches!(self, Method::Off)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Method::Default),
            "fast" => Ok(Method::Fast),
            "off" => Ok(Method::Off),
            _ => Err(Error::Domain {
                name: "method",
                value: f64::NAN,
                expected: "one of default, fast, off",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientKind {
    DerivativeFree,
    Fast,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub vector: Vec<f64>,
    pub kind: GradientKind,
    /// Loss at the point where the estimate was taken (`w + δU` for the
    /// derivative-free estimate, `w` otherwise).
    pub loss: f64,
}

/// Derivative-free estimate `(d/δ)·ℓ(w + δU; z)·σ(F̂(ℓ(w + δU; z)))·U`.
///
/// `cdf` is the loss-CDF estimate at `w`; it is evaluated at the perturbed loss.
pub fn df_gradient<C: Fn(f64) -> f64>(
    w: &[f64],
    delta: f64,
    direction: &[f64],
    z: &Example,
    model: &LossModel,
    cdf: C,
    spectrum: &Spectrum,
) -> Result<GradientEstimate> {
    open_unit("delta", delta)?;
    if direction.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: direction.len(),
        });
    }
    let shifted: Vec<f64> = w.iter().zip(direction).map(|(a, u)| a + delta * u).collect();
    let loss = model.loss(&shifted, z)?;
    let weighted = loss * spectrum.eval(cdf(loss))?;
    let scale = w.len() as f64 / delta * weighted;
    Ok(GradientEstimate {
        vector: direction.iter().map(|u| scale * u).collect(),
        kind: GradientKind::DerivativeFree,
        loss,
    })
}

/// The scalar `σ(F̂(ℓ)) + ℓ·σ′(F̂(ℓ))·f̂(ℓ)` multiplying `∇ℓ` in the fast estimate.
pub fn fast_factor(loss: f64, cdf: &FoldedNormalCdf, spectrum: &Spectrum) -> Result<f64> {
    let level = cdf.eval(loss);
    let slope = spectrum.eval_derivative(level)?;
    Ok(spectrum.eval(level)? + loss * slope * cdf.density(loss))
}

/// First-order estimate `[σ(F̂(ℓ)) + ℓ·σ′(F̂(ℓ))·f̂(ℓ)]·∇ℓ(w; z)` under a
/// folded-normal loss model.
pub fn fast_gradient(
    w: &[f64],
    z: &Example,
    model: &LossModel,
    cdf: &FoldedNormalCdf,
    spectrum: &Spectrum,
) -> Result<GradientEstimate> {
    if !spectrum.is_differentiable() {
        return Err(Error::UnsupportedSpectrum(spectrum.name()));
    }
    let mut vector = vec![0.0; model.dim()];
    let loss = model.loss_gradient_into(w, z, &mut vector)?;
    let factor = fast_factor(loss, cdf, spectrum)?;
    vector.iter_mut().for_each(|g| *g *= factor);
    Ok(GradientEstimate {
        vector,
        kind: GradientKind::Fast,
        loss,
    })
}

pub fn plain_gradient(w: &[f64], z: &Example, model: &LossModel) -> Result<GradientEstimate> {
    let mut vector = vec![0.0; model.dim()];
    let loss = model.loss_gradient_into(w, z, &mut vector)?;
    Ok(GradientEstimate {
        vector,
        kind: GradientKind::Plain,
        loss,
    })
}

/// Current iterate plus the running sum of post-update iterates `w₁ … w_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState {
    w: Vec<f64>,
    t: usize,
    running_sum: Vec<f64>,
}

impl IterateState {
    pub fn new(w0: Vec<f64>) -> Self {
        let running_sum = vec![0.0; w0.len()];
        IterateState {
            w: w0,
            t: 0,
            running_sum,
        }
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn steps(&self) -> usize {
        self.t
    }

    pub fn running_sum(&self) -> &[f64] {
        &self.running_sum
    }

    /// `w̄_t = (1/t)·Σ_{s=1}^{t} w_s`; the initial point before any step.
    pub fn average(&self) -> Vec<f64> {
        if self.t == 0 {
            return self.w.clone();
        }
        let t = self.t as f64;
        self.running_sum.iter().map(|s| s / t).collect()
    }
}

/// `w ← Π_𝒲(w − α·g)`, then advances the counter and running sum.
pub fn mirror_step(state: &mut IterateState, g: &[f64], alpha: f64, geometry: &MirrorGeometry) {
    debug_assert_eq!(state.w.len(), g.len());
    match geometry {
        MirrorGeometry::Euclidean { .. } => {
            for (w, gi) in state.w.iter_mut().zip(g) {
                *w -= alpha * gi;
            }
            geometry.project(&mut state.w);
        }
    }
    state.t += 1;
    for (s, w) in state.running_sum.iter_mut().zip(&state.w) {
        *s += w;
    }
}

/// Ancillary sample size `M` and step count `T` for a budget of `n` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub ancillary: usize,
    pub steps: usize,
}

impl Budget {
    pub fn total(&self) -> usize {
        self.steps * (self.ancillary + 1)
    }
}

pub fn ceil_sqrt(n: usize) -> usize {
    let mut r = sqrt(n as f64) as usize;
    while r * r < n {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}

/// `M = ⌈√n⌉`, `T = ⌊n/(1 + M)⌋`, so that `T·(M + 1) ≤ n`.
pub fn allocate_budget(n: usize) -> Result<Budget> {
    let ancillary = ceil_sqrt(n);
    let steps = n / (1 + ancillary);
    if steps == 0 || ancillary < 2 {
        return Err(Error::BudgetTooSmall {
            budget: n,
            reason: "need at least one step with two ancillary points",
        });
    }
    Ok(Budget { ancillary, steps })
}

/// Problem constants entering the step size with an expected-risk guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    /// `λ_R`, a bound on the expected loss over the perturbed feasible set.
    pub risk_bound: f64,
    /// `s₁`, spread of the unbiased gradient numerator.
    pub s1: f64,
    /// `s₂`, root second moment of the loss.
    pub s2: f64,
    pub lipschitz: Lipschitz,
    /// `Δ_Φ`.
    pub bregman_diameter: f64,
    /// `μ`.
    pub strong_convexity: f64,
}

/// Constant step `α = μ/(λ_R + 1/c_T)` with
/// `c_T = (δ/d)·√(2Δ_Φ μ / (T(s₁² + (λ_σ s₂)²)))`.
pub fn theory_step_size(constants: &TheoryConstants, steps: usize, delta: f64, d: usize) -> Result<f64> {
    let lambda_sigma = constants.lipschitz.finite().ok_or(Error::UnboundedLipschitz)?;
    open_unit("delta", delta)?;
    positive("bregman_diameter", constants.bregman_diameter)?;
    positive("strong_convexity", constants.strong_convexity)?;
    if !(constants.risk_bound >= 0.0) {
        return Err(Error::Domain {
            name: "risk_bound",
            value: constants.risk_bound,
            expected: ">= 0",
        });
    }
    let spread = constants.s1 * constants.s1 + (lambda_sigma * constants.s2) * (lambda_sigma * constants.s2);
    positive("s1^2 + (lambda_sigma s2)^2", spread)?;
    if steps == 0 || d == 0 {
        return Err(Error::BudgetTooSmall {
            budget: steps,
            reason: "steps and dimension must be positive",
        });
    }
    let mu = constants.strong_convexity;
    let c_t = delta / d as f64
        * sqrt(2.0 * constants.bregman_diameter * mu / (steps as f64 * spread));
    Ok(mu / (constants.risk_bound + 1.0 / c_t))
}

/// Fixed steps used in the benchmark protocol: `2γ/(d√n)` for the
/// derivative-free method and `2/√n` otherwise, `n` being the training size.
pub fn default_step_size(method: Method, n: usize, d: usize, gamma: f64) -> f64 {
    let root = sqrt(n as f64);
    match method {
        Method::Default => 2.0 * gamma / (d as f64 * root),
        Method::Fast | Method::Off => 2.0 / root,
    }
}

/// A stream of examples with draw accounting.
pub trait SampleSource {
    fn draw(&mut self) -> Option<&Example>;
    fn drawn(&self) -> usize;
}

/// Sequential draws from a borrowed slice.
#[derive(Debug, Clone)]
pub struct SliceSource<'a> {
    data: &'a [Example],
    pos: usize,
}

impl<'a> SliceSource<'a> {
    pub fn new(data: &'a [Example]) -> Self {
        SliceSource { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }
}

impl SampleSource for SliceSource<'_> {
    fn draw(&mut self) -> Option<&Example> {
        let z = self.data.get(self.pos)?;
        self.pos += 1;
        Some(z)
    }

    fn drawn(&self) -> usize {
        self.pos
    }
}

/// Draws generated on demand by a closure, e.g. a synthetic distribution.
pub struct FnSource<F> {
    generate: F,
    current: Option<Example>,
    drawn: usize,
}

impl<F: FnMut() -> Example> FnSource<F> {
    pub fn new(generate: F) -> Self {
        FnSource {
            generate,
            current: None,
            drawn: 0,
        }
    }
}

impl<F: FnMut() -> Example> SampleSource for FnSource<F> {
    fn draw(&mut self) -> Option<&Example> {
        self.drawn += 1;
        self.current = Some((self.generate)());
        self.current.as_ref()
    }

    fn drawn(&self) -> usize {
        self.drawn
    }
}

/// Per-step settings of a [`Learner`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSettings {
    pub alpha: f64,
    /// `δ`, the perturbation radius (derivative-free method only).
    pub smoothing_delta: f64,
    /// `M`, ancillary draws per step (derivative-free and fast methods).
    pub ancillary: usize,
}

/// Runs one method step by step, owning the iterate.
pub struct Learner<'a> {
    model: &'a LossModel,
    spectrum: &'a Spectrum,
    geometry: MirrorGeometry,
    method: Method,
    settings: StepSettings,
    state: IterateState,
    losses: Vec<f64>,
}

impl<'a> Learner<'a> {
    pub fn new(
        model: &'a LossModel,
        spectrum: &'a Spectrum,
        geometry: MirrorGeometry,
        method: Method,
        settings: StepSettings,
        w0: Vec<f64>,
    ) -> Result<Self> {
        positive("alpha", settings.alpha)?;
        if w0.len() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: w0.len(),
            });
        }
        if !geometry.contains(&w0) {
            return Err(Error::Domain {
                name: "|w0|",
                value: norm(&w0),
                expected: "initial point inside the feasible ball",
            });
        }
        match method {
            Method::Default => {
                open_unit("smoothing_delta", settings.smoothing_delta)?;
            }
            Method::Fast if !spectrum.is_differentiable() => {
                return Err(Error::UnsupportedSpectrum(spectrum.name()));
            }
            _ => {}
        }
        if method.uses_ancillary() && settings.ancillary < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: settings.ancillary,
            });
        }
        Ok(Learner {
            model,
            spectrum,
            geometry,
            method,
            settings,
            state: IterateState::new(w0),
            losses: Vec::with_capacity(settings.ancillary),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn state(&self) -> &IterateState {
        &self.state
    }

    pub fn current(&self) -> &[f64] {
        self.state.w()
    }

    pub fn average(&self) -> Vec<f64> {
        self.state.average()
    }

    /// Draws consumed by one call to [`Learner::step`].
    pub fn draws_per_step(&self) -> usize {
        if self.method.uses_ancillary() {
            self.settings.ancillary + 1
        } else {
            1
        }
    }

    fn ancillary_losses<S: SampleSource + ?Sized>(&mut self, source: &mut S) -> Result<()> {
        self.losses.clear();
        for _ in 0..self.settings.ancillary {
            let drawn = source.drawn();
            let z = source.draw().ok_or(Error::BudgetExhausted { drawn })?;
            self.losses.push(self.model.loss(self.state.w(), z)?);
        }
        Ok(())
    }

    /// One update. Draw order: `M` ancillary points (default, fast), the
    /// sphere direction (default), then the update point.
    pub fn step<S, R>(&mut self, source: &mut S, rng: &mut R) -> Result<GradientEstimate>
    where
        S: SampleSource + ?Sized,
        R: Rng + ?Sized,
    {
        let g = match self.method {
            Method::Default => {
                self.ancillary_losses(source)?;
                let cdf = EmpiricalCdf::fit(&self.losses)?;
                let direction = sample_sphere(self.model.dim(), rng);
                let drawn = source.drawn();
                let z = source.draw().ok_or(Error::BudgetExhausted { drawn })?;
                df_gradient(
                    self.state.w(),
                    self.settings.smoothing_delta,
                    &direction,
                    z,
                    self.model,
                    |u| cdf.eval(u),
                    self.spectrum,
                )?
            }
            Method::Fast => {
                self.ancillary_losses(source)?;
                let cdf = FoldedNormalCdf::fit(&self.losses)?;
                let drawn = source.drawn();
                let z = source.draw().ok_or(Error::BudgetExhausted { drawn })?;
                fast_gradient(self.state.w(), z, self.model, &cdf, self.spectrum)?
            }
            Method::Off => {
                let drawn = source.drawn();
                let z = source.draw().ok_or(Error::BudgetExhausted { drawn })?;
                plain_gradient(self.state.w(), z, self.model)?
            }
        };
        mirror_step(&mut self.state, &g.vector, self.settings.alpha, &self.geometry);
        Ok(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AncillarySize {
    /// `⌈√n⌉` for a budget of `n`.
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSize {
    Fixed(f64),
    /// The benchmark protocol's fixed steps with factor `γ`.
    Protocol { gamma: f64 },
    /// Step size from problem constants; refuses spectra without a finite
    /// Lipschitz constant.
    Theory(TheoryConstants),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub step_size: StepSize,
    pub smoothing_delta: f64,
    pub ancillary_size: AncillarySize,
}

impl RunConfig {
    pub fn new(method: Method) -> Self {
        RunConfig {
            method,
            step_size: StepSize::Protocol { gamma: 1.0 },
            smoothing_delta: 0.5,
            ancillary_size: AncillarySize::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    /// `w̄_T`.
    pub average: Vec<f64>,
    /// `w_T`.
    pub last: Vec<f64>,
    pub budget: Budget,
    pub alpha: f64,
    pub drawn: usize,
}

/// Splits a budget of `n` draws into `M` and `T` for the given method.
pub fn plan_budget(method: Method, ancillary: AncillarySize, n: usize) -> Result<Budget> {
    if !method.uses_ancillary() {
        if n == 0 {
            return Err(Error::BudgetTooSmall {
                budget: n,
                reason: "need at least one draw",
            });
        }
        return Ok(Budget {
            ancillary: 0,
            steps: n,
        });
    }
    match ancillary {
        AncillarySize::Auto => allocate_budget(n),
        AncillarySize::Fixed(m) => {
            if m < 2 {
                return Err(Error::TooFewSamples { needed: 2, got: m });
            }
            let steps = n / (m + 1);
            if steps == 0 {
                return Err(Error::BudgetTooSmall {
                    budget: n,
                    reason: "budget smaller than one step",
                });
            }
            Ok(Budget {
                ancillary: m,
                steps,
            })
        }
    }
}

fn resolve_alpha(cfg: &RunConfig, budget: &Budget, n: usize, d: usize) -> Result<f64> {
    match cfg.step_size {
        StepSize::Fixed(alpha) => positive("alpha", alpha),
        StepSize::Protocol { gamma } => {
            positive("gamma", gamma)?;
            Ok(default_step_size(cfg.method, n, d, gamma))
        }
        StepSize::Theory(constants) => theory_step_size(&constants, budget.steps, cfg.smoothing_delta, d),
    }
}

/// Runs `T` steps of the configured method on a budget of `n` draws from
/// `source`, starting at `w0`, and returns the averaged iterate.
#[allow(clippy::too_many_arguments)]
pub fn run<S, R>(
    model: &LossModel,
    source: &mut S,
    spectrum: &Spectrum,
    geometry: &MirrorGeometry,
    cfg: &RunConfig,
    n_budget: usize,
    w0: Vec<f64>,
    rng: &mut R,
) -> Result<RunOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let budget = plan_budget(cfg.method, cfg.ancillary_size, n_budget)?;
    let alpha = resolve_alpha(cfg, &budget, n_budget, model.dim())?;
    let settings = StepSettings {
        alpha,
        smoothing_delta: cfg.smoothing_delta,
        ancillary: budget.ancillary.max(2),
    };
    let mut learner = Learner::new(model, spectrum, *geometry, cfg.method, settings, w0)?;
    let start = source.drawn();
    for _ in 0..budget.steps {
        learner.step(source, rng)?;
    }
    Ok(RunOutcome {
        average: learner.average(),
        last: learner.current().to_vec(),
        budget,
        alpha,
        drawn: source.drawn() - start,
    })
}

/// The derivative-free procedure: empirical-CDF ancillary estimates and
/// sphere-perturbation gradients, returning `w̄_T`.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm1<S, R>(
    model: &LossModel,
    source: &mut S,
    spectrum: &Spectrum,
    geometry: &MirrorGeometry,
    cfg: &RunConfig,
    n_budget: usize,
    w0: Vec<f64>,
    rng: &mut R,
) -> Result<RunOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    let cfg = RunConfig {
        method: Method::Default,
        ..*cfg
    };
    run(model, source, spectrum, geometry, &cfg, n_budget, w0, rng)
}

/// The first-order variants (`Fast`, `Off`) over the same update.
#[allow(clippy::too_many_arguments)]
pub fn run_streaming<S, R>(
    model: &LossModel,
    source: &mut S,
    spectrum: &Spectrum,
    geometry: &MirrorGeometry,
    cfg: &RunConfig,
    n_budget: usize,
    w0: Vec<f64>,
    rng: &mut R,
) -> Result<RunOutcome>
where
    S: SampleSource + ?Sized,
    R: Rng + ?Sized,
{
    if cfg.method == Method::Default {
        return Err(Error::Domain {
            name: "method",
            value: f64::NAN,
            expected: "fast or off",
        });
    }
    run(model, source, spectrum, geometry, cfg, n_budget, w0, rng)
}
