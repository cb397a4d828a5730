use crate::error::{FpmError, Result};
use crate::geometry::Point;

/// Phase values this close to a full period count as the start of the next pulse.
const PHASE_TOL: f64 = 1e-9;

/// Spatial extent of a stimulus, in cm.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Box { min: Point, max: Point },
    Sphere { center: Point, radius: f64 },
}

impl Region {
    pub fn contains(&self, x: &Point) -> bool {
        match self {
            Region::Box { min, max } => (0..3).all(|k| x[k] >= min[k] && x[k] <= max[k]),
            Region::Sphere { center, radius } => (x - center).norm() <= *radius,
        }
    }
}

/// Periodic rectangular pulse of a depolarizing rate (mV/ms) over a region.
#[derive(Debug, Clone, PartialEq)]
pub struct StimulusProtocol {
    pub region: Region,
    pub amplitude: f64,
    /// Pulse duration, ms.
    pub duration: f64,
    /// Pacing period, ms; `None` for a single pulse.
    pub period: Option<f64>,
    pub start: f64,
}

impl StimulusProtocol {
    pub fn validate(&self) -> Result<()> {
        if !self.amplitude.is_finite() {
            return Err(FpmError::Config("stimulus amplitude must be finite".into()));
        }
        if !(self.duration > 0.0) || !self.start.is_finite() {
            return Err(FpmError::Config("stimulus duration must be positive".into()));
        }
        if let Some(p) = self.period {
            if !(self.duration < p) {
                return Err(FpmError::Config(format!(
                    "stimulus duration {} must be shorter than the period {p}",
                    self.duration
                )));
            }
        }
        if let Region::Sphere { radius, .. } = self.region {
            if !(radius > 0.0) {
                return Err(FpmError::Config("stimulus sphere radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn is_active(&self, t: f64) -> bool {
        let elapsed = t - self.start;
        if elapsed < -PHASE_TOL {
            return false;
        }
        let phase = match self.period {
            Some(p) => {
                let ph = elapsed.rem_euclid(p);
                if p - ph <= PHASE_TOL {
                    0.0
                } else {
                    ph
                }
            }
            None => elapsed.max(0.0),
        };
        phase < self.duration - PHASE_TOL
    }

    /// Indices of the nodes inside the region.
    pub fn nodes(&self, positions: &[Point]) -> Vec<usize> {
        positions
            .iter()
            .enumerate()
            .filter(|(_, x)| self.region.contains(x))
            .map(|(i, _)| i)
            .collect()
    }
}

/// Per-node stimulus rate at time `t`.
pub fn apply_stimulus(protocol: &StimulusProtocol, t: f64, positions: &[Point]) -> Vec<f64> {
    let active = protocol.is_active(t);
    positions
        .iter()
        .map(|x| {
            if active && protocol.region.contains(x) {
                protocol.amplitude
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_voxel_partition;

    fn protocol() -> StimulusProtocol {
        StimulusProtocol {
            region: Region::Box {
                min: Point::new(-1.0, -1.0, -1.0),
                max: Point::new(0.05, 10.0, 1.0),
            },
            amplitude: 50.0,
            duration: 1.0,
            period: Some(1000.0),
            start: 5.0,
        }
    }

    #[test]
    fn inactive_before_start() {
        let p = protocol();
        let x = [Point::zeros(); 3];
        assert!(apply_stimulus(&p, 4.9, &x).iter().all(|&v| v == 0.0));
        assert!(apply_stimulus(&p, 5.0, &x).iter().all(|&v| v == 50.0));
    }

    #[test]
    fn periodic_activation() {
        let mut p = protocol();
        p.start = 0.0;
        assert!(p.is_active(1000.5));
        assert!(!p.is_active(1001.5));
        // accumulated rounding just below a period boundary still fires
        assert!(p.is_active(999.999_999_999_9));
        p.period = None;
        assert!(!p.is_active(1000.5));
    }

    #[test]
    fn left_column_of_grid() {
        let part = build_voxel_partition(&[4, 3], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let p = protocol();
        assert_eq!(p.nodes(part.points()), vec![0, 4, 8]);
        let s = apply_stimulus(&p, 5.5, part.points());
        let active: Vec<usize> = s.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        assert_eq!(active, vec![0, 4, 8]);
    }

    #[test]
    fn validation() {
        let mut p = protocol();
        p.duration = 1000.0;
        assert!(p.validate().is_err());
        p.duration = 1.0;
        p.amplitude = f64::NAN;
        assert!(p.validate().is_err());
    }
}
