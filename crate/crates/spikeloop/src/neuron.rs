//! Distorted leaky integrate-and-fire neuron dynamics.
//!
//! The neuron integrates synaptic current with a leak, passes the membrane
//! potential through a polynomial distortion modeling analog hardware
//! non-idealities, spikes on threshold crossing, and resets to zero after a
//! spike or whenever the potential goes negative. With `sigma = 0` the model
//! collapses to a plain LIF neuron.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Conventional membrane decay used when no value is configured.
pub const DEFAULT_ALPHA: f64 = 0.5;
/// Conventional spiking threshold used when no value is configured.
pub const DEFAULT_MU: f64 = 1.0;

/// Parameters of the distorted LIF neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifConfig {
    /// Membrane decay factor, in `[0, 1)`.
    pub alpha: f64,
    /// Spiking threshold, strictly positive.
    pub mu: f64,
    /// Distortion strength, non-negative. Zero means an ideal LIF neuron.
    pub sigma: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum NeuronError {
    #[error("alpha must be in [0, 1), got {0}")]
    BadAlpha(f64),
    #[error("mu must be > 0, got {0}")]
    BadMu(f64),
    #[error("sigma must be >= 0, got {0}")]
    BadSigma(f64),
}

impl LifConfig {
    pub fn new(alpha: f64, mu: f64, sigma: f64) -> Result<Self, NeuronError> {
        let cfg = LifConfig { alpha, mu, sigma };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), NeuronError> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(NeuronError::BadAlpha(self.alpha));
        }
        if !(self.mu > 0.0) {
            return Err(NeuronError::BadMu(self.mu));
        }
        if !(self.sigma >= 0.0) {
            return Err(NeuronError::BadSigma(self.sigma));
        }
        Ok(())
    }

    /// Same neuron with a different distortion strength.
    pub fn with_sigma(self, sigma: f64) -> Self {
        LifConfig { sigma, ..self }
    }
}

impl Default for LifConfig {
    fn default() -> Self {
        LifConfig {
            alpha: DEFAULT_ALPHA,
            mu: DEFAULT_MU,
            sigma: 0.0,
        }
    }
}

/// Membrane state of a single neuron. Always in `[0, mu)` after a step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeuronState {
    pub v: f64,
}

/// Polynomial distortion applied to the membrane potential:
/// `x + (sigma/2) x^2 + (sigma/6) x^3`.
#[inline]
pub fn distort(x: f64, sigma: f64) -> f64 {
    let x2 = x * x;
    x + (sigma / 2.0) * x2 + (sigma / 6.0) * x2 * x
}

/// Derivative of [`distort`] with respect to `x`.
#[inline]
pub fn distort_deriv(x: f64, sigma: f64) -> f64 {
    1.0 + sigma * x + (sigma / 2.0) * x * x
}

/// One time step of the distorted LIF neuron.
///
/// Order of operations: leaky integration, distortion, spike check against
/// `mu`, then reset to zero on spike or negative potential.
#[inline]
pub fn lif_step(state: NeuronState, i_syn: f64, cfg: &LifConfig) -> (NeuronState, bool) {
    let mut v = cfg.alpha * state.v + (1.0 - cfg.alpha) * i_syn;
    v = distort(v, cfg.sigma);
    let spike = v >= cfg.mu;
    if spike || v < 0.0 {
        v = 0.0;
    }
    (NeuronState { v }, spike)
}
