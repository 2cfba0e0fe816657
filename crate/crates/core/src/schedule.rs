//! Variance-preserving noise schedules.
//!
//! A schedule fixes per-step noise rates `beta[t]` for `t in 0..T` and the
//! cumulative signal retention `alpha_bar[t] = prod_{i<=t} (1 - beta[i])`.
//! The forward marginal at step `t` is
//! `x_t = sqrt(alpha_bar[t]) * x_0 + sqrt(1 - alpha_bar[t]) * eps`,
//! and the scale-free noise level used by the deterministic solver is
//! `sigma(t) = sqrt((1 - alpha_bar[t]) / alpha_bar[t])`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `alpha_bar` values below this are treated as this floor wherever a
/// division by `alpha_bar` occurs, so late-time quantities stay finite even
/// for very aggressive schedules. The stored sequence itself is never
/// altered: it remains the exact cumulative product of `1 - beta`.
pub const ALPHA_BAR_FLOOR: f64 = 1e-8;

/// The parameters of a linear-beta schedule, as stored in model files and
/// accepted on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self { steps: 1000, beta_min: 1e-4, beta_max: 0.02 }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::linear(self.steps, self.beta_min, self.beta_max)
    }
}

/// A discrete noise schedule over steps `0..T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Builds the linear schedule `beta[t] = beta_min + t * (beta_max - beta_min) / (T - 1)`.
    ///
    /// Requires `steps >= 2` and `0 < beta_min <= beta_max < 1`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::Parameter(format!(
                "schedule needs at least 2 steps, got {steps}"
            )));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::Parameter(format!(
                "beta range must satisfy 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
            )));
        }
        let betas = (0..steps)
            .map(|t| beta_min + t as f64 * (beta_max - beta_min) / (steps - 1) as f64)
            .collect();
        Self::from_betas(betas)
    }

    /// Builds a schedule from explicit per-step rates, each in `(0, 1)`.
    pub fn from_betas(beta: Vec<f64>) -> Result<Self> {
        if beta.is_empty() {
            return Err(Error::Parameter("schedule needs at least one beta".into()));
        }
        if let Some(b) = beta.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::Parameter(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bar = Vec::with_capacity(beta.len());
        let mut prod = 1.0;
        for b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        Ok(Self { beta, alpha_bar })
    }

    /// Number of steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    /// Cumulative signal retention at step `t`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        self.alpha_bar
            .get(t)
            .copied()
            .ok_or_else(|| self.step_range_error(t))
    }

    /// Noise-to-signal scale `sigma(t) = sqrt((1 - alpha_bar) / alpha_bar)`,
    /// strictly increasing in `t` while `alpha_bar` stays above
    /// [`ALPHA_BAR_FLOOR`]; the clamp caps it (constant) beyond that point,
    /// which no well-conditioned schedule reaches.
    pub fn sigma(&self, t: usize) -> Result<f64> {
        let ab = self.alpha_bar(t)?.max(ALPHA_BAR_FLOOR);
        Ok(((1.0 - ab) / ab).sqrt())
    }

    /// `sqrt(alpha_bar[t])`, floored like [`Self::sigma`].
    pub(crate) fn sqrt_alpha_bar(&self, t: usize) -> Result<f64> {
        Ok(self.alpha_bar(t)?.max(ALPHA_BAR_FLOOR).sqrt())
    }

    /// Diffuses a clean point to step `t`:
    /// `sqrt(alpha_bar[t]) * x0 + sqrt(1 - alpha_bar[t]) * eps`.
    pub fn perturb(&self, x0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        if x0.len() != eps.len() {
            return Err(Error::Shape(format!(
                "point has dim {} but noise has dim {}",
                x0.len(),
                eps.len()
            )));
        }
        let ab = self.alpha_bar(t)?;
        let (sa, sn) = (ab.sqrt(), (1.0 - ab).sqrt());
        Ok(x0.iter().zip(eps).map(|(x, e)| sa * x + sn * e).collect())
    }

    /// True when the schedule retains nearly all signal at `t = 0` and nearly
    /// none at `t = T - 1`, the regime the deterministic bridge assumes.
    pub fn is_well_conditioned(&self) -> bool {
        self.alpha_bar[0] >= 0.99 && *self.alpha_bar.last().unwrap() <= 1e-2
    }

    fn step_range_error(&self, t: usize) -> Error {
        Error::Parameter(format!("step {t} out of range 0..{}", self.steps()))
    }
}
