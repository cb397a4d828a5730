use serde::{Deserialize, Serialize};

use super::IonicModel;
use crate::error::{FpmError, Result};

/// Two-variable Mitchell–Schaeffer model.
///
/// du/dt = h·u²(1−u)/τ_in − u/τ_out, and the gate h relaxes to 1 with τ_open
/// below `v_gate` and to 0 with τ_close above it. State: `[h]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MitchellSchaeffer {
    pub tau_in: f64,
    pub tau_out: f64,
    pub tau_open: f64,
    pub tau_close: f64,
    pub v_gate: f64,
    pub v_rest: f64,
    pub v_peak: f64,
}

impl Default for MitchellSchaeffer {
    fn default() -> Self {
        Self {
            tau_in: 0.3,
            tau_out: 6.0,
            tau_open: 120.0,
            tau_close: 150.0,
            v_gate: 0.13,
            v_rest: -80.0,
            v_peak: 20.0,
        }
    }
}

impl MitchellSchaeffer {
    pub fn validate(&self) -> Result<()> {
        let taus = [self.tau_in, self.tau_out, self.tau_open, self.tau_close];
        if taus.iter().any(|t| !(*t > 0.0)) {
            return Err(FpmError::Config("Mitchell–Schaeffer time constants must be positive".into()));
        }
        if !(self.v_gate > 0.0 && self.v_gate < 1.0) || !(self.v_peak > self.v_rest) {
            return Err(FpmError::Config("Mitchell–Schaeffer voltage parameters are inconsistent".into()));
        }
        Ok(())
    }

    fn span(&self) -> f64 {
        self.v_peak - self.v_rest
    }

    fn to_u(&self, v: f64) -> f64 {
        (v - self.v_rest) / self.span()
    }
}

impl IonicModel for MitchellSchaeffer {
    fn name(&self) -> &'static str {
        "mitchell-schaeffer"
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
        vec![1.0]
    }

    fn rates(&self, v: f64, state: &[f64], dstate: &mut [f64]) -> f64 {
        let u = self.to_u(v);
        let h = state[0];
        let j_in = h * u * u * (1.0 - u) / self.tau_in;
        let j_out = -u / self.tau_out;
        let (h_inf, tau) = self.gate(u);
        dstate[0] = (h_inf - h) / tau;
        -(j_in + j_out) * self.span()
    }

    fn gate_kinetics(&self, v: f64, _state: &[f64], _index: usize) -> Option<(f64, f64)> {
        Some(self.gate(self.to_u(v)))
    }

    fn max_dt(&self) -> f64 {
        0.1
    }

    fn state_in_bounds(&self, state: &[f64]) -> bool {
        (0.0..=1.0).contains(&state[0])
    }
}

impl MitchellSchaeffer {
    fn gate(&self, u: f64) -> (f64, f64) {
        if u < self.v_gate {
            (1.0, self.tau_open)
        } else {
            (0.0, self.tau_close)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_is_an_equilibrium() {
        let m = MitchellSchaeffer::default();
        let mut ds = [0.0];
        let i = m.rates(m.v_rest, &[1.0], &mut ds);
        assert!(i.abs() < 1e-9 * m.span());
        assert_eq!(ds[0], 0.0);
    }

    #[test]
    fn depolarized_cell_has_inward_current() {
        let m = MitchellSchaeffer::default();
        let mut ds = [0.0];
        // above threshold, I_ion < 0 drives V upwards
        assert!(m.rates(-60.0, &[1.0], &mut ds) < 0.0);
        assert!(ds[0] < 0.0);
    }

    #[test]
    fn invalid_parameters() {
        let m = MitchellSchaeffer {
            tau_in: 0.0,
            ..Default::default()
        };
        assert!(m.validate().is_err());
        let m = MitchellSchaeffer {
            v_peak: -90.0,
            ..Default::default()
        };
        assert!(m.validate().is_err());
    }
}
