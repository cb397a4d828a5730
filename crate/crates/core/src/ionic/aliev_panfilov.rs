use serde::{Deserialize, Serialize};

use super::IonicModel;
use crate::error::{FpmError, Result};

/// Aliev–Panfilov model in dimensionless form with a time scale in ms.
///
/// du/dτ = −k·u(u−a)(u−1) − u·w,
/// dw/dτ = (ε0 + μ1·w/(u+μ2))·(−w − k·u(u−a−1)), with τ = t / time_scale.
/// State: `[w]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlievPanfilov {
    pub k: f64,
    pub a: f64,
    pub epsilon0: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Milliseconds per dimensionless time unit.
    pub time_scale: f64,
    pub v_rest: f64,
    pub v_peak: f64,
}

impl Default for AlievPanfilov {
    fn default() -> Self {
        Self {
            k: 8.0,
            a: 0.15,
            epsilon0: 0.002,
            mu1: 0.2,
            mu2: 0.3,
            time_scale: 12.9,
            v_rest: -80.0,
            v_peak: 20.0,
        }
    }
}

impl AlievPanfilov {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.k, self.epsilon0, self.mu2, self.time_scale];
        if positive.iter().any(|x| !(*x > 0.0)) || !(self.mu1 >= 0.0) {
            return Err(FpmError::Config("Aliev–Panfilov rate parameters must be positive".into()));
        }
        if !(self.a > 0.0 && self.a < 1.0) || !(self.v_peak > self.v_rest) {
            return Err(FpmError::Config("Aliev–Panfilov voltage parameters are inconsistent".into()));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.v_peak - self.v_rest
    }
}

impl IonicModel for AlievPanfilov {
    fn name(&self) -> &'static str {
        "aliev-panfilov"
    }

    fn state_len(&self) -> usize {
        1
    }

    fn resting_potential(&self) -> f64 {
        self.v_rest
    }

    fn peak_potential(&self) -> f64 {
        self.v_peak
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0]
    }

    fn rates(&self, v: f64, state: &[f64], dstate: &mut [f64]) -> f64 {
        let u = (v - self.v_rest) / self.span();
        let w = state[0];
        let eps = self.epsilon0 + self.mu1 * w / (u + self.mu2);
        dstate[0] = eps * (-w - self.k * u * (u - self.a - 1.0)) / self.time_scale;
        let du = -self.k * u * (u - self.a) * (u - 1.0) - u * w;
        -du * self.span() / self.time_scale
    }

    fn max_dt(&self) -> f64 {
        0.2
    }

    fn state_in_bounds(&self, state: &[f64]) -> bool {
        state[0].is_finite() && state[0] > -1e-9
    }
}
