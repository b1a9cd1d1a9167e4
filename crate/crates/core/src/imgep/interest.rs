//! Learning-progress interest per module and the module-sampling
//! distribution derived from it.

use serde::{Deserialize, Serialize};

use crate::goalspace::distance;

pub const INTEREST_DECAY: f64 = 1000.0;
/// Share of module choices made uniformly at random.
pub const RANDOM_MODULE_SHARE: f64 = 0.1;

/// `((n − 1)/n)·Υ + (1/n)·δ` with `n = 1000`.
pub fn update_interest(upsilon_prev: f64, delta: f64) -> f64 {
    let n = INTEREST_DECAY;
    (n - 1.0) / n * upsilon_prev + delta / n
}

/// Module sampling probabilities `0.9·Υ⁺ᵢ/ΣΥ⁺ + 0.1/N`, where `Υ⁺ = max(Υ, 0)`.
/// Uniform when no module has positive interest.
pub fn module_probabilities(upsilon: &[f64]) -> Vec<f64> {
    let n = upsilon.len() as f64;
    let total: f64 = upsilon.iter().map(|u| u.max(0.0)).sum();
    if total <= 0.0 || !total.is_finite() {
        return vec![1.0 / n; upsilon.len()];
    }
    upsilon
        .iter()
        .map(|u| (1.0 - RANDOM_MODULE_SHARE) * u.max(0.0) / total + RANDOM_MODULE_SHARE / n)
        .collect()
}

/// Goals set in one module and the projections they led to.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GoalHistory {
    pub entries: Vec<(Vec<f64>, Vec<f64>)>,
}

impl GoalHistory {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Competence progress for `(tau, achieved)` against the earlier attempt
    /// whose goal was closest to `tau`, then records the attempt. Zero on the
    /// first goal of a module.
    pub fn compute_progress(&mut self, tau: &[f64], achieved: &[f64]) -> f64 {
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for (g, a) in &self.entries {
            let d = distance(g, tau);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, a));
            }
        }
        let delta = match best {
            None => 0.0,
            Some((_, prev)) => distance(tau, prev) - distance(tau, achieved),
        };
        self.entries.push((tau.to_vec(), achieved.to_vec()));
        delta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestState {
    pub upsilon: Vec<f64>,
    pub histories: Vec<GoalHistory>,
}

impl InterestState {
    pub fn new(n_modules: usize) -> Self {
        Self { upsilon: vec![0.0; n_modules], histories: vec![GoalHistory::default(); n_modules] }
    }

    /// Progress step for the sampled module `k`; other modules keep their interest.
    pub fn observe(&mut self, k: usize, tau: &[f64], achieved: &[f64]) -> f64 {
        let delta = self.histories[k].compute_progress(tau, achieved);
        self.upsilon[k] = update_interest(self.upsilon[k], delta);
        delta
    }

    pub fn probabilities(&self) -> Vec<f64> {
        module_probabilities(&self.upsilon)
    }
}
