//! Adaptive scaling within adaptive Metropolis.
//!
//! Gaussian random-walk proposals `x + ζ L ε` where `L Lᵀ` tracks the target's
//! covariance and `log ζ` is steered toward a target acceptance rate, with
//! Robbins–Monro weights `w_g = (g + 1)^{-decay}`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::config::AswamSettings;
use crate::numerics;

const JITTER: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct Aswam {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub log_scale: f64,
    pub proposed: usize,
    pub accepted: usize,
    steps: usize,
    settings: AswamSettings,
}

impl Aswam {
    pub fn new(start: DVector<f64>, settings: &AswamSettings) -> Self {
        let d = start.len();
        Self {
            covariance: DMatrix::identity(d, d) * settings.initial_variance,
            mean: start,
            log_scale: 0.0,
            proposed: 0,
            accepted: 0,
            steps: 0,
            settings: settings.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, current: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let jittered = &self.covariance + DMatrix::identity(d, d) * JITTER;
        let factor = match nalgebra::Cholesky::new(jittered) {
            Some(c) => c.l(),
            None => DMatrix::identity(d, d) * self.settings.initial_variance.sqrt(),
        };
        let z = DVector::from_fn(d, |_, _| numerics::std_normal(rng));
        current + factor * z * self.log_scale.exp()
    }

    /// One Metropolis step on `log_target`; returns the new point and the
    /// acceptance probability. Proposals with a non-finite target are rejected.
    pub fn step<R, F>(&mut self, current: &DVector<f64>, current_log: f64, log_target: F, rng: &mut R) -> (DVector<f64>, f64, f64)
    where
        R: Rng + ?Sized,
        F: Fn(&DVector<f64>) -> f64,
    {
        let proposal = self.propose(current, rng);
        let proposal_log = log_target(&proposal);
        let accept_prob = if proposal_log.is_finite() {
            (proposal_log - current_log).exp().min(1.0)
        } else {
            0.0
        };
        let u: f64 = rng.random();
        self.proposed += 1;
        if u < accept_prob {
            self.accepted += 1;
            (proposal, proposal_log, accept_prob)
        } else {
            (current.clone(), current_log, accept_prob)
        }
    }

    /// Robbins–Monro update of scale, mean and covariance.
    pub fn adapt(&mut self, state: &DVector<f64>, accept_prob: f64) {
        let w = ((self.steps + 1) as f64).powf(-self.settings.decay);
        self.steps += 1;
        self.log_scale += w * (accept_prob - self.settings.target_acceptance);
        let diff = state - &self.mean;
        self.mean += &diff * w;
        self.covariance += (&diff * diff.transpose() - &self.covariance) * w;
    }

    /// Step size of the most recent scale update.
    pub fn current_weight(&self) -> f64 {
        ((self.steps + 1) as f64).powf(-self.settings.decay)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::chain_rng;

    #[test]
    fn identical_proposal_is_accepted() {
        let mut sampler = Aswam::new(DVector::zeros(2), &AswamSettings::default());
        sampler.log_scale = -1e3;
        let mut rng = chain_rng(1);
        let (_, _, prob) = sampler.step(&DVector::zeros(2), 0.0, |_| 0.0, &mut rng);
        assert_eq!(prob, 1.0);
    }

    #[test]
    fn calibrates_on_a_gaussian() {
        let mut rng = chain_rng(2);
        let settings = AswamSettings::default();
        let mut sampler = Aswam::new(DVector::zeros(2), &settings);
        let target = |x: &DVector<f64>| -0.5 * (x[0] * x[0] / 4.0 + x[1] * x[1] * 9.0);
        let mut x = DVector::zeros(2);
        let mut lx = target(&x);
        let mut late = 0.0;
        for g in 0..40_000 {
            let (nx, nl, a) = sampler.step(&x, lx, target, &mut rng);
            x = nx;
            lx = nl;
            sampler.adapt(&x, a);
            if g >= 20_000 {
                late += a;
            }
        }
        let rate = late / 20_000.0;
        assert!((rate - 0.234).abs() < 0.03, "{rate}");
        assert!((sampler.covariance[(0, 0)] - 4.0).abs() < 1.0);
        assert!(sampler.current_weight() < 1e-3);
    }
}
