use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::space::FiniteSpace;

use super::{FeatureMap, GenerativeModel};

/// `p(x) = exp(<phi(x), theta> - cumulant(theta))` over a finite space.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpFamilyModel {
    space: FiniteSpace,
    features: FeatureMap,
    theta: Vec<f64>,
    cumulant: f64,
    log_probs: Vec<f64>,
    probs: Vec<f64>,
}

impl ExpFamilyModel {
    pub fn new(space: FiniteSpace, features: FeatureMap, theta: Vec<f64>) -> Result<Self> {
        if features.n_outcomes() != space.total_size() {
            return Err(Error::Shape(format!(
                "feature map covers {} outcomes, space has {}",
                features.n_outcomes(),
                space.total_size()
            )));
        }
        if theta.len() != features.dim() {
            return Err(Error::Shape(format!(
                "theta has {} entries, features have dimension {}",
                theta.len(),
                features.dim()
            )));
        }
        let mut model = Self {
            space,
            features,
            theta,
            cumulant: 0.0,
            log_probs: Vec::new(),
            probs: Vec::new(),
        };
        model.refresh()?;
        Ok(model)
    }

    pub fn zero(space: FiniteSpace, features: FeatureMap) -> Result<Self> {
        let d = features.dim();
        Self::new(space, features, vec![0.0; d])
    }

    fn refresh(&mut self) -> Result<()> {
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("natural parameters are not finite".into()));
        }
        let scores = self.features.scores(&self.theta);
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let cumulant = max + sum.ln();
        if !cumulant.is_finite() {
            return Err(Error::Numeric(format!("cumulant evaluated to {cumulant}")));
        }
        self.cumulant = cumulant;
        self.log_probs = scores.iter().map(|s| s - cumulant).collect();
        self.probs = self.log_probs.iter().map(|l| l.exp()).collect();
        Ok(())
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.features.dim() {
            return Err(Error::Shape("theta has the wrong dimension".into()));
        }
        let previous = std::mem::replace(&mut self.theta, theta);
        if let Err(e) = self.refresh() {
            self.theta = previous;
            self.refresh()?;
            return Err(e);
        }
        Ok(())
    }

    pub fn features(&self) -> &FeatureMap {
        &self.features
    }

    /// Log-partition value `log sum_x exp <phi(x), theta>`.
    pub fn cumulant(&self) -> f64 {
        self.cumulant
    }

    /// Expected features under the model.
    pub fn moments(&self) -> Vec<f64> {
        self.features.expectation(&self.probs)
    }
}

/// Moment gap `E_target[phi] - E_model[phi]`, the log-likelihood gradient.
pub fn grad_log_likelihood(
    model: &ExpFamilyModel,
    target: &TabularDistribution,
) -> Result<Vec<f64>> {
    if target.space() != model.space() {
        return Err(Error::Shape("target lives on a different space".into()));
    }
    let data = model.features.expectation(target.probs());
    let fitted = model.moments();
    Ok(data.iter().zip(&fitted).map(|(d, m)| d - m).collect())
}

impl GenerativeModel for ExpFamilyModel {
    fn space(&self) -> &FiniteSpace {
        &self.space
    }

    fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn log_prob(&self, outcome: usize) -> f64 {
        self.log_probs[outcome]
    }

    /// Gradient ascent step `theta += step_size * grad`.
    fn fit_step(&mut self, target: &TabularDistribution, step_size: f64) -> Result<()> {
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::Numeric(format!(
                "step size {step_size} must be positive"
            )));
        }
        let grad = grad_log_likelihood(self, target)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("gradient is not finite".into()));
        }
        if grad.iter().all(|g| *g == 0.0) {
            return Ok(());
        }
        let theta = self
            .theta
            .iter()
            .zip(&grad)
            .map(|(t, g)| t + step_size * g)
            .collect();
        self.set_theta(theta)
    }
}
