use crate::distribution::TabularDistribution;
use crate::error::{Error, Result};
use crate::space::FiniteSpace;

use super::GenerativeModel;

/// Directly parameterized distribution (the saturated exponential family).
///
/// `fit_step` moves the table a fraction `min(step_size, 1)` of the way to the
/// target, which is the exact maximum-likelihood solution at step 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    dist: TabularDistribution,
}

impl TabularModel {
    pub fn from_distribution(dist: TabularDistribution) -> Self {
        Self { dist }
    }

    pub fn uniform(space: FiniteSpace) -> Self {
        Self::from_distribution(TabularDistribution::uniform(space))
    }
}

impl GenerativeModel for TabularModel {
    fn space(&self) -> &FiniteSpace {
        self.dist.space()
    }

    fn probs(&self) -> &[f64] {
        self.dist.probs()
    }

    fn log_prob(&self, outcome: usize) -> f64 {
        let p = self.dist.prob(outcome);
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    fn fit_step(&mut self, target: &TabularDistribution, step_size: f64) -> Result<()> {
        if !(step_size.is_finite() && step_size > 0.0) {
            return Err(Error::Numeric(format!(
                "step size {step_size} must be positive"
            )));
        }
        if target.space() != self.dist.space() {
            return Err(Error::Shape("target lives on a different space".into()));
        }
        if step_size >= 1.0 {
            self.dist = target.clone();
            return Ok(());
        }
        let probs: Vec<f64> = self
            .dist
            .probs()
            .iter()
            .zip(target.probs())
            .map(|(&p, &t)| p + step_size * (t - p))
            .collect();
        self.dist = TabularDistribution::from_weights(self.dist.space().clone(), probs)?;
        Ok(())
    }
}
