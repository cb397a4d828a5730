//! Cell models supplying the capacitance-normalized ionic current, and the
//! pacing protocol.
//!
//! Both bundled models are phenomenological. Their dimensionless voltage `u`
//! is mapped to millivolts by `V = V_rest + (V_peak − V_rest)·u`, so the
//! post-processing works in the same units for any model.

mod aliev_panfilov;
mod mitchell_schaeffer;
mod stimulus;

pub use aliev_panfilov::AlievPanfilov;
pub use mitchell_schaeffer::MitchellSchaeffer;
pub use stimulus::{apply_stimulus, Region, StimulusProtocol};

use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};

/// A single-cell model: I_ion(V, state) and the state derivatives.
pub trait IonicModel: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    fn state_len(&self) -> usize;

    /// Resting transmembrane voltage, mV.
    fn resting_potential(&self) -> f64;

    /// Nominal action-potential peak, mV.
    fn peak_potential(&self) -> f64;

    fn initial_state(&self) -> Vec<f64>;

    /// Writes dstate/dt (per ms) and returns I_ion in mV/ms. Must not mutate
    /// anything besides `dstate`.
    fn rates(&self, v: f64, state: &[f64], dstate: &mut [f64]) -> f64;

    /// For gating variables: (steady state, time constant in ms), enabling the
    /// exponential update. `None` means plain forward Euler.
    fn gate_kinetics(&self, _v: f64, _state: &[f64], _index: usize) -> Option<(f64, f64)> {
        None
    }

    /// Largest reaction step (ms) for which the default integrator keeps the
    /// state inside its bounds.
    fn max_dt(&self) -> f64;

    /// Model-specific bounds check on a state vector.
    fn state_in_bounds(&self, _state: &[f64]) -> bool {
        true
    }
}

/// I_ion and dstate/dt at one node, with NaN detection.
pub fn ionic_rate(model: &dyn IonicModel, v: f64, state: &[f64], node: usize) -> Result<(f64, Vec<f64>)> {
    if !v.is_finite() || state.iter().any(|s| !s.is_finite()) {
        return Err(FpmError::Numeric {
            time: f64::NAN,
            node,
            what: "non-finite voltage or state passed to the ionic model".into(),
        });
    }
    let mut dstate = vec![0.0; model.state_len()];
    let i_ion = model.rates(v, state, &mut dstate);
    Ok((i_ion, dstate))
}

/// Model selection as written in run configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum IonicModelConfig {
    MitchellSchaeffer(MitchellSchaeffer),
    AlievPanfilov(AlievPanfilov),
}

impl Default for IonicModelConfig {
    fn default() -> Self {
        Self::MitchellSchaeffer(MitchellSchaeffer::default())
    }
}

impl IonicModelConfig {
    pub fn build(&self) -> Result<Box<dyn IonicModel>> {
        match self {
            Self::MitchellSchaeffer(m) => {
                m.validate()?;
                Ok(Box::new(m.clone()))
            }
            Self::AlievPanfilov(m) => {
                m.validate()?;
                Ok(Box::new(m.clone()))
            }
        }
    }
}
