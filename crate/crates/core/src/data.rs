//! In-memory datasets: unit-interval feature scaling, seeded shuffled splits
//! and the synthetic tasks used for oracle checks.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::format;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::error::{Error, Result};
use crate::losses::Example;
use crate::Rng64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    /// Min-max scaled to `[0, 1]`.
    Numeric,
    /// One-hot indicator, already in `{0, 1}` and never rescaled.
    Indicator,
}

/// Per-column `(min, max)` recorded from training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub ranges: Vec<Option<(f64, f64)>>,
}

impl Scaling {
    /// Maps `v` into `[0, 1]`; constant columns go to the midpoint.
    pub fn apply_value(range: (f64, f64), v: f64) -> f64 {
        let (min, max) = range;
        if max > min {
            ((v - min) / (max - min)).clamp(0.0, 1.0)
        } else {
            0.5
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<Example>,
    /// `K`; zero for regression tasks.
    pub n_classes: usize,
    pub feature_names: Vec<String>,
    pub column_kinds: Vec<ColumnKind>,
    /// Scaling last fitted on (or applied to) these examples.
    pub scaling: Option<Scaling>,
}

impl Dataset {
    pub fn new(
        examples: Vec<Example>,
        n_classes: usize,
        feature_names: Vec<String>,
        column_kinds: Vec<ColumnKind>,
    ) -> Result<Self> {
        let p = feature_names.len();
        if column_kinds.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: column_kinds.len(),
            });
        }
        for z in &examples {
            if z.features.len() != p {
                return Err(Error::DimensionMismatch {
                    expected: p,
                    got: z.features.len(),
                });
            }
            if n_classes > 0 {
                match z.label() {
                    Some(k) if k < n_classes => {}
                    _ => return Err(Error::TargetMismatch),
                }
            }
        }
        Ok(Dataset {
            examples,
            n_classes,
            feature_names,
            column_kinds,
            scaling: None,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Records per-column ranges from these examples and rescales them in place.
    pub fn fit_scaling(&mut self) -> Scaling {
        let ranges = self
            .column_kinds
            .iter()
            .enumerate()
            .map(|(j, kind)| match kind {
                ColumnKind::Indicator => None,
                ColumnKind::Numeric => {
                    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
                    for z in &self.examples {
                        lo = lo.min(z.features[j]);
                        hi = hi.max(z.features[j]);
                    }
                    Some((lo, hi))
                }
            })
            .collect();
        let scaling = Scaling { ranges };
        self.apply_scaling(&scaling);
        scaling
    }

    /// Rescales with ranges taken elsewhere, clamping into `[0, 1]`.
    pub fn apply_scaling(&mut self, scaling: &Scaling) {
        for z in &mut self.examples {
            for (v, range) in z.features.iter_mut().zip(&scaling.ranges) {
                if let Some(r) = range {
                    *v = Scaling::apply_value(*r, *v);
                }
            }
        }
        self.scaling = Some(scaling.clone());
    }

    fn with_examples(&self, examples: Vec<Example>) -> Dataset {
        Dataset {
            examples,
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            column_kinds: self.column_kinds.clone(),
            scaling: None,
        }
    }
}

/// Fisher–Yates shuffle with a generator seeded from `seed`, then a split
/// with `round(n·test_fraction)` test examples. Scaling is refit on the
/// training side and applied (clamped) to the test side.
pub fn split_shuffle(ds: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let mut rng = Rng64::seed_from_u64(seed);
    split_shuffle_with(ds, test_fraction, &mut rng)
}

pub fn split_shuffle_with<R: Rng + ?Sized>(
    ds: &Dataset,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(Dataset, Dataset)> {
    let n = ds.len();
    let n_test = libm::round(n as f64 * test_fraction) as usize;
    if !(test_fraction > 0.0 && test_fraction < 1.0) || n_test == 0 || n_test >= n {
        return Err(Error::DegenerateSplit {
            n,
            fraction: test_fraction,
        });
    }
    let mut examples = ds.examples.clone();
    examples.shuffle(rng);
    let test_examples = examples.split_off(n - n_test);
    let mut train = ds.with_examples(examples);
    let mut test = ds.with_examples(test_examples);
    let scaling = train.fit_scaling();
    test.apply_scaling(&scaling);
    Ok((train, test))
}

/// Synthetic data distributions with known structure.
#[derive(Debug, Clone, PartialEq)]
pub enum SyntheticKind {
    /// Two equiprobable classes `N(±(separation/2)·e₁, I_p)`.
    TwoGaussian { features: usize, separation: f64 },
    /// `x ~ U[0,1]^p`, `y = ⟨w*, x⟩ + ε` with `ε ~ LogNormal(noise_mu, noise_sigma)`.
    LinearLognormal {
        w_star: Vec<f64>,
        noise_mu: f64,
        noise_sigma: f64,
    },
}

impl SyntheticKind {
    pub fn features(&self) -> usize {
        match self {
            SyntheticKind::TwoGaussian { features, .. } => *features,
            SyntheticKind::LinearLognormal { w_star, .. } => w_star.len(),
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            SyntheticKind::TwoGaussian { .. } => 2,
            SyntheticKind::LinearLognormal { .. } => 0,
        }
    }

    /// One draw from the task distribution.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        match self {
            SyntheticKind::TwoGaussian {
                features,
                separation,
            } => {
                let label = usize::from(rng.random_bool(0.5));
                let shift = if label == 1 { 0.5 } else { -0.5 } * separation;
                let x = (0..*features)
                    .map(|j| {
                        let noise: f64 = rng.sample(StandardNormal);
                        if j == 0 {
                            noise + shift
                        } else {
                            noise
                        }
                    })
                    .collect();
                Example::classified(x, label)
            }
            SyntheticKind::LinearLognormal {
                w_star,
                noise_mu,
                noise_sigma,
            } => {
                let x: Vec<f64> = (0..w_star.len()).map(|_| rng.random::<f64>()).collect();
                let noise = LogNormal::new(*noise_mu, *noise_sigma)
                    .expect("valid lognormal parameters")
                    .sample(rng);
                let y = crate::losses::dot(w_star, &x) + noise;
                Example::regression(x, y)
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SyntheticKind::TwoGaussian {
                features,
                separation,
            } => {
                if *features == 0 {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: 0,
                    });
                }
                if !separation.is_finite() {
                    return Err(Error::NonFinite);
                }
            }
            SyntheticKind::LinearLognormal {
                w_star,
                noise_mu,
                noise_sigma,
            } => {
                if w_star.is_empty() {
                    return Err(Error::DimensionMismatch {
                        expected: 1,
                        got: 0,
                    });
                }
                if !(noise_mu.is_finite() && *noise_sigma > 0.0 && noise_sigma.is_finite()) {
                    return Err(Error::Domain {
                        name: "noise_sigma",
                        value: *noise_sigma,
                        expected: "finite mu and sigma > 0",
                    });
                }
            }
        }
        Ok(())
    }
}

/// `n` seeded draws from a synthetic task, unscaled.
pub fn make_synthetic(kind: &SyntheticKind, n: usize, seed: u64) -> Result<Dataset> {
    kind.validate()?;
    let mut rng = Rng64::seed_from_u64(seed);
    let examples = (0..n).map(|_| kind.sample(&mut rng)).collect();
    let p = kind.features();
    let names = (0..p).map(|j| format!("x{j}")).collect();
    Dataset::new(examples, kind.n_classes(), names, alloc::vec![ColumnKind::Numeric; p])
}

impl core::fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SyntheticKind::TwoGaussian {
                features,
                separation,
            } => write!(f, "two-gaussian(p={features}, separation={separation})"),
            SyntheticKind::LinearLognormal {
                w_star,
                noise_mu,
                noise_sigma,
            } => write!(
                f,
                "linear-lognormal(p={}, mu={noise_mu}, sigma={noise_sigma})",
                w_star.len()
            ),
        }
    }
}

/// Short name used by the command line.
pub fn synthetic_name(kind: &SyntheticKind) -> String {
    match kind {
        SyntheticKind::TwoGaussian { .. } => "two-gaussian".to_string(),
        SyntheticKind::LinearLognormal { .. } => "linear-lognormal".to_string(),
    }
}
