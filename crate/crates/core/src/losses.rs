//! Loss functions `ℓ(w; z)` and their gradients.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log1p};

use crate::error::{Error, Result};

/// What an example is scored against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    /// Class index in `[0, K)`.
    Class(usize),
    /// Real-valued response for the synthetic regression losses.
    Real(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub target: Target,
}

impl Example {
    pub fn classified(features: Vec<f64>, label: usize) -> Self {
        Example {
            features,
            target: Target::Class(label),
        }
    }

    pub fn regression(features: Vec<f64>, response: f64) -> Self {
        Example {
            features,
            target: Target::Real(response),
        }
    }

    pub fn label(&self) -> Option<usize> {
        match self.target {
            Target::Class(k) => Some(k),
            Target::Real(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Softmax cross-entropy with one linear model per class; parameters are
    /// stored class-major, `w[k·p .. (k+1)·p]` for class `k`.
    MulticlassLogistic { classes: usize, features: usize },
    /// `|⟨w, x⟩ − y|`.
    SyntheticLinear { features: usize },
    /// `½(⟨w, x⟩ − y)²`.
    SyntheticQuadratic { features: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossModel {
    kind: LossKind,
}

impl LossModel {
    pub fn multiclass_logistic(classes: usize, features: usize) -> Self {
        assert!(classes >= 2 && features >= 1, "logistic model needs K >= 2 and p >= 1");
        LossModel {
            kind: LossKind::MulticlassLogistic { classes, features },
        }
    }

    pub fn synthetic_linear(features: usize) -> Self {
        assert!(features >= 1);
        LossModel {
            kind: LossKind::SyntheticLinear { features },
        }
    }

    pub fn synthetic_quadratic(features: usize) -> Self {
        assert!(features >= 1);
        LossModel {
            kind: LossKind::SyntheticQuadratic { features },
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            LossKind::MulticlassLogistic { .. } => "logistic",
            LossKind::SyntheticLinear { .. } => "linear",
            LossKind::SyntheticQuadratic { .. } => "quadratic",
        }
    }

    /// Number of input features `p`.
    pub fn features(&self) -> usize {
        match self.kind {
            LossKind::MulticlassLogistic { features, .. }
            | LossKind::SyntheticLinear { features }
            | LossKind::SyntheticQuadratic { features } => features,
        }
    }

    /// Total parameter count `d`.
    pub fn dim(&self) -> usize {
        match self.kind {
            LossKind::MulticlassLogistic { classes, features } => classes * features,
            LossKind::SyntheticLinear { features } | LossKind::SyntheticQuadratic { features } => {
                features
            }
        }
    }

    fn check(&self, w: &[f64], z: &Example) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: w.len(),
            });
        }
        if z.features.len() != self.features() {
            return Err(Error::DimensionMismatch {
                expected: self.features(),
                got: z.features.len(),
            });
        }
        Ok(())
    }

    pub fn loss(&self, w: &[f64], z: &Example) -> Result<f64> {
        self.check(w, z)?;
        match self.kind {
            LossKind::MulticlassLogistic { classes, .. } => {
                let y = class_of(z, classes)?;
                let logits = self.logits_unchecked(w, &z.features);
                Ok(cross_entropy(&logits, y))
            }
            LossKind::SyntheticLinear { .. } => Ok(libm::fabs(dot(w, &z.features) - real_of(z)?)),
            LossKind::SyntheticQuadratic { .. } => {
                let r = dot(w, &z.features) - real_of(z)?;
                Ok(0.5 * r * r)
            }
        }
    }

    pub fn loss_gradient(&self, w: &[f64], z: &Example) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.loss_gradient_into(w, z, &mut out)?;
        Ok(out)
    }

    /// Writes `∇ℓ(w; z)` into `out` and returns `ℓ(w; z)`.
    pub fn loss_gradient_into(&self, w: &[f64], z: &Example, out: &mut [f64]) -> Result<f64> {
        self.check(w, z)?;
        if out.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: out.len(),
            });
        }
        let x = &z.features;
        match self.kind {
            LossKind::MulticlassLogistic { classes, features } => {
                let y = class_of(z, classes)?;
                let logits = self.logits_unchecked(w, x);
                let loss = cross_entropy(&logits, y);
                let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| exp(l - max)).collect();
                let total: f64 = weights.iter().sum();
                for (k, wk) in weights.iter().enumerate() {
                    let coef = wk / total - if k == y { 1.0 } else { 0.0 };
                    for (o, xi) in out[k * features..(k + 1) * features].iter_mut().zip(x) {
                        *o = coef * xi;
                    }
                }
                Ok(loss)
            }
            LossKind::SyntheticLinear { .. } => {
                let r = dot(w, x) - real_of(z)?;
                let sign = if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = sign * xi;
                }
                Ok(libm::fabs(r))
            }
            LossKind::SyntheticQuadratic { .. } => {
                let r = dot(w, x) - real_of(z)?;
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = r * xi;
                }
                Ok(0.5 * r * r)
            }
        }
    }

    /// Class scores `⟨w_k, x⟩` for the logistic model.
    pub fn logits(&self, w: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            LossKind::MulticlassLogistic { .. } => {
                if w.len() != self.dim() || x.len() != self.features() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        got: w.len(),
                    });
                }
                Ok(self.logits_unchecked(w, x))
            }
            _ => Err(Error::UnsupportedModel(self.name())),
        }
    }

    fn logits_unchecked(&self, w: &[f64], x: &[f64]) -> Vec<f64> {
        let p = self.features();
        w.chunks_exact(p).map(|wk| dot(wk, x)).collect()
    }

    /// Argmax class, ties going to the lowest index.
    pub fn predict(&self, w: &[f64], x: &[f64]) -> Result<usize> {
        let logits = self.logits(w, x)?;
        let mut best = 0;
        for (k, l) in logits.iter().enumerate().skip(1) {
            if *l > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn misclassification_rate(&self, w: &[f64], data: &[Example]) -> Result<f64> {
        if !matches!(self.kind, LossKind::MulticlassLogistic { .. }) {
            return Err(Error::UnsupportedModel(self.name()));
        }
        if data.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut wrong = 0usize;
        for z in data {
            let y = z.label().ok_or(Error::TargetMismatch)?;
            if self.predict(w, &z.features)? != y {
                wrong += 1;
            }
        }
        Ok(wrong as f64 / data.len() as f64)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn class_of(z: &Example, classes: usize) -> Result<usize> {
    match z.target {
        Target::Class(k) if k < classes => Ok(k),
        Target::Class(k) => Err(Error::Domain {
            name: "label",
            value: k as f64,
            expected: "label < number of classes",
        }),
        Target::Real(_) => Err(Error::TargetMismatch),
    }
}

fn real_of(z: &Example) -> Result<f64> {
    match z.target {
        Target::Real(y) => Ok(y),
        Target::Class(_) => Err(Error::TargetMismatch),
    }
}

/// `−log softmax_y(logits)`, shifted by the max logit.
fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let (arg, max) = logits
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(ia, a), (i, v)| if v > a { (i, v) } else { (ia, a) });
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != arg)
        .map(|(_, l)| exp(l - max))
        .sum();
    log1p(rest) + (max - logits[y])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use std::vec::Vec;

    fn random_example(model: &LossModel, rng: &mut crate::Rng64) -> Example {
        let x: Vec<f64> = (0..model.features()).map(|_| rng.random_range(-1.0..1.0)).collect();
        match model.kind() {
            LossKind::MulticlassLogistic { classes, .. } => {
                Example::classified(x, rng.random_range(0..classes))
            }
            _ => Example::regression(x, rng.random_range(-2.0..2.0)),
        }
    }

    #[test]
    fn logistic_at_origin_is_log_k() {
        let m = LossModel::multiclass_logistic(3, 4);
        let z = Example::classified(vec![0.2, 0.4, 0.1, 0.9], 2);
        let l = m.loss(&[0.0; 12], &z).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-15);
        assert!((l - 1.098612).abs() < 1e-6);
    }

    #[test]
    fn saturated_softmax() {
        let m = LossModel::multiclass_logistic(2, 1);
        let z = Example::classified(vec![1.0], 0);
        // margin +50 for the true class
        let l = m.loss(&[25.0, -25.0], &z).unwrap();
        assert!(l >= 0.0 && l < 1e-20);
        // huge logits remain finite
        let l = m.loss(&[1000.0, -1000.0], &Example::classified(vec![1.0], 1)).unwrap();
        assert!((l - 2000.0).abs() < 1e-9);
    }

    #[test]
    fn absolute_loss_example() {
        let m = LossModel::synthetic_linear(2);
        let z = Example::regression(vec![2.0, 9.0], 5.0);
        assert_eq!(m.loss(&[1.0, 0.0], &z).unwrap(), 3.0);
        let above = Example::regression(vec![2.0, 9.0], -5.0);
        assert_eq!(m.loss_gradient(&[1.0, 0.0], &above).unwrap(), vec![2.0, 9.0]);
    }

    #[test]
    fn logistic_gradient_example() {
        let m = LossModel::multiclass_logistic(2, 2);
        let g = m
            .loss_gradient(&[0.0; 4], &Example::classified(vec![1.0, 0.0], 0))
            .unwrap();
        assert_eq!(g, vec![-0.5, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn misclassification() {
        let m = LossModel::multiclass_logistic(3, 1);
        let data: Vec<Example> = (0..10).map(|i| Example::classified(vec![1.0], i % 3)).collect();
        // ties at the origin predict class 0
        let expected = data.iter().filter(|z| z.label() != Some(0)).count() as f64 / 10.0;
        assert_eq!(m.misclassification_rate(&[0.0; 3], &data).unwrap(), expected);

        let m = LossModel::multiclass_logistic(2, 1);
        let data: Vec<Example> = (0..10)
            .map(|i| Example::classified(vec![1.0], usize::from(i < 3)))
            .collect();
        assert_eq!(m.misclassification_rate(&[1.0, 0.0], &data).unwrap(), 0.3);
        let sep = [
            Example::classified(vec![1.0, 0.0], 0),
            Example::classified(vec![0.0, 1.0], 1),
        ];
        let m = LossModel::multiclass_logistic(2, 2);
        assert_eq!(m.misclassification_rate(&[1.0, 0.0, 0.0, 1.0], &sep).unwrap(), 0.0);
        assert!(LossModel::synthetic_linear(1)
            .misclassification_rate(&[0.0], &sep[..1])
            .is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let m = LossModel::multiclass_logistic(2, 2);
        let z = Example::classified(vec![1.0, 0.0], 0);
        assert_eq!(
            m.loss(&[0.0; 3], &z),
            Err(Error::DimensionMismatch { expected: 4, got: 3 })
        );
        assert_eq!(
            LossModel::synthetic_linear(2).loss(&[0.0, 0.0], &z),
            Err(Error::TargetMismatch)
        );
    }

    #[test]
    fn convexity_witness() {
        let mut rng = crate::Rng64::seed_from_u64(3);
        for model in [
            LossModel::multiclass_logistic(3, 2),
            LossModel::synthetic_linear(3),
            LossModel::synthetic_quadratic(3),
        ] {
            for _ in 0..1000 {
                let z = random_example(&model, &mut rng);
                let a: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let b: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let t: f64 = rng.random();
                let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
                let lhs = model.loss(&mix, &z).unwrap();
                let rhs = t * model.loss(&a, &z).unwrap() + (1.0 - t) * model.loss(&b, &z).unwrap();
                assert!(lhs <= rhs + 1e-9);
                assert!(lhs >= 0.0);
            }
        }
    }
}
