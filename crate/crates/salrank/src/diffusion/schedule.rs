//! Variance schedule for the forward/reverse diffusion process.
//!
//! `betas[t-1]` is the per-step noise variance β_t for t = 1..=T and
//! `alpha_bars[t]` the cumulative signal retention ᾱ_t = Π_{s≤t}(1−β_s),
//! with ᾱ_0 = 1. The schedule must end nearly signal-free (ᾱ_T < 0.05) or
//! sampling would start from a distribution far from the pure noise the
//! reverse process assumes.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    beta_range: (f64, f64),
}

/// Default step count (T).
pub const DEFAULT_T: usize = 100;
/// Default linear β range. The end value is chosen so ᾱ_T ≈ 0.028: a linear
/// ramp to 0.05 over 100 steps would leave ᾱ_T ≈ 0.078, too much residual
/// signal for the terminal-noise invariant.
pub const DEFAULT_BETA: (f64, f64) = (1e-4, 0.07);

impl NoiseSchedule {
    /// Builds a schedule from explicit per-step variances.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::EmptyInput("schedule needs at least one step".into()));
        }
        if let Some(&bad) = betas.iter().find(|b| !(0.0..1.0).contains(*b) || **b == 0.0) {
            return Err(Error::Domain(format!("β values must lie in (0,1), got {bad}")));
        }
        let beta_range = (betas[0], *betas.last().unwrap());
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut prod = 1.0;
        for &b in &betas {
            prod *= 1.0 - b;
            alpha_bars.push(prod);
        }
        let terminal = *alpha_bars.last().unwrap();
        if terminal <= 0.0 || terminal >= 0.05 {
            return Err(Error::Domain(format!(
                "terminal ᾱ_T = {terminal:.4} outside (0, 0.05); \
                 increase T or the β range so the chain ends in near-pure noise"
            )));
        }
        Ok(Self {
            betas,
            alpha_bars,
            beta_range,
        })
    }

    /// Linear β ramp over `t_steps` steps.
    pub fn linear(t_steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if t_steps == 0 {
            return Err(Error::EmptyInput("schedule needs at least one step".into()));
        }
        let betas = (0..t_steps)
            .map(|i| {
                if t_steps == 1 {
                    beta_start
                } else {
                    beta_start + (beta_end - beta_start) * i as f64 / (t_steps - 1) as f64
                }
            })
            .collect();
        Self::from_betas(betas)
    }

    /// The default schedule: T = 100, β linear 1e-4 → 0.07.
    pub fn default_schedule() -> Self {
        Self::linear(DEFAULT_T, DEFAULT_BETA.0, DEFAULT_BETA.1)
            .expect("default schedule satisfies its own invariants")
    }

    /// Number of diffusion steps T.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// β_t for t ∈ 1..=T.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    /// ᾱ_t for t ∈ 0..=T (ᾱ_0 = 1).
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// First and last β of the ramp, echoed into checkpoint manifests.
    pub fn beta_range(&self) -> (f64, f64) {
        self.beta_range
    }
}
