//! Activation times, APD90, conduction velocity and relative errors.

use crate::error::{FpmError, Result};
use crate::geometry::Point;

/// Relative tolerance on sample spacing when checking uniform sampling.
const UNIFORM_TOL: f64 = 1e-6;

/// Voltage samples at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeTrace {
    pub name: String,
    pub node: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProbeTrace {
    pub fn new(name: impl Into<String>, node: usize) -> Self {
        Self {
            name: name.into(),
            node,
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, v: f64) {
        self.times.push(t);
        self.values.push(v);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Checks strictly increasing, uniformly spaced sample times.
    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.values.len() {
            return Err(FpmError::Contract(format!("trace {}: times and values differ in length", self.name)));
        }
        if self.times.len() < 2 {
            return Ok(());
        }
        let step = self.times[1] - self.times[0];
        for w in self.times.windows(2) {
            let d = w[1] - w[0];
            if !(d > 0.0) {
                return Err(FpmError::Contract(format!("trace {}: times not strictly increasing", self.name)));
            }
            if (d - step).abs() > UNIFORM_TOL * step.abs().max(1.0) {
                return Err(FpmError::Contract(format!("trace {}: sampling is not uniform", self.name)));
            }
        }
        Ok(())
    }

    pub fn lat(&self, threshold: f64) -> f64 {
        compute_lat(&self.times, &self.values, threshold)
    }

    pub fn apd90(&self) -> f64 {
        compute_apd90(&self.times, &self.values)
    }
}

/// First upward crossing of `threshold`, linearly interpolated; NaN if none.
pub fn compute_lat(times: &[f64], values: &[f64], threshold: f64) -> f64 {
    if values.first().is_some_and(|&v| v >= threshold) {
        return times[0];
    }
    for i in 1..values.len().min(times.len()) {
        let (v0, v1) = (values[i - 1], values[i]);
        if v0 < threshold && v1 >= threshold {
            return crossing(times[i - 1], times[i], v0, v1, threshold);
        }
    }
    f64::NAN
}

fn crossing(t0: f64, t1: f64, v0: f64, v1: f64, level: f64) -> f64 {
    t0 + (level - v0) / (v1 - v0) * (t1 - t0)
}

/// APD at 90% repolarization of the first action potential in the trace.
///
/// Activation is the midpoint of the sample interval with the largest dV/dt.
/// The baseline is the first sample. The peak is the running maximum after
/// activation; the duration ends at the first downward crossing of
/// `V_peak − 0.9·(V_peak − V_rest)`, interpolated. NaN when the trace is flat
/// or never repolarizes.
pub fn compute_apd90(times: &[f64], values: &[f64]) -> f64 {
    let n = times.len().min(values.len());
    if n < 3 {
        return f64::NAN;
    }
    let mut best = (0.0, 0usize);
    for i in 1..n {
        let slope = (values[i] - values[i - 1]) / (times[i] - times[i - 1]);
        if slope > best.0 {
            best = (slope, i);
        }
    }
    if best.0 <= 0.0 {
        return f64::NAN;
    }
    let up = best.1;
    let activation = 0.5 * (times[up - 1] + times[up]);
    let rest = values[0];
    let mut peak = values[up];
    for i in up + 1..n {
        peak = peak.max(values[i - 1]);
        if peak <= rest {
            continue;
        }
        let level = peak - 0.9 * (peak - rest);
        if values[i - 1] >= level && values[i] < level {
            return crossing(times[i - 1], times[i], values[i - 1], values[i], level) - activation;
        }
    }
    f64::NAN
}

/// Per-node activation times.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMap {
    pub lat: Vec<f64>,
    pub threshold: f64,
}

impl ActivationMap {
    pub fn len(&self) -> usize {
        self.lat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lat.is_empty()
    }

    pub fn activated(&self) -> usize {
        self.lat.iter().filter(|t| t.is_finite()).count()
    }
}

/// Streaming LAT detection over a field history.
#[derive(Debug, Clone)]
pub struct ActivationTracker {
    threshold: f64,
    t_prev: f64,
    v_prev: Vec<f64>,
    lat: Vec<f64>,
}

impl ActivationTracker {
    pub fn new(threshold: f64, t0: f64, v0: &[f64]) -> Self {
        let lat = v0.iter().map(|&v| if v >= threshold { t0 } else { f64::NAN }).collect();
        Self {
            threshold,
            t_prev: t0,
            v_prev: v0.to_vec(),
            lat,
        }
    }

    pub fn update(&mut self, t: f64, v: &[f64]) {
        for ((lat, prev), &cur) in self.lat.iter_mut().zip(self.v_prev.iter_mut()).zip(v) {
            if lat.is_nan() && *prev < self.threshold && cur >= self.threshold {
                *lat = crossing(self.t_prev, t, *prev, cur, self.threshold);
            }
            *prev = cur;
        }
        self.t_prev = t;
    }

    pub fn map(&self) -> ActivationMap {
        ActivationMap {
            lat: self.lat.clone(),
            threshold: self.threshold,
        }
    }
}

/// Conduction velocity between two activated nodes, cm/ms.
pub fn compute_cv(map: &ActivationMap, positions: &[Point], from: usize, to: usize) -> Result<f64> {
    let n = map.lat.len();
    if from >= n || to >= n || positions.len() != n {
        return Err(FpmError::Contract("probe node outside the activation map".into()));
    }
    let (a, b) = (map.lat[from], map.lat[to]);
    if !a.is_finite() || !b.is_finite() {
        return Err(FpmError::Numeric {
            time: f64::NAN,
            node: if a.is_finite() { to } else { from },
            what: "probe never activated".into(),
        });
    }
    if !(b > a) {
        return Err(FpmError::Numeric {
            time: b,
            node: to,
            what: format!("activation at node {to} ({b} ms) does not follow node {from} ({a} ms)"),
        });
    }
    Ok((positions[to] - positions[from]).norm() / (b - a))
}

/// Nodes nearest to the points at fractions `lo` and `hi` along `axis` of the
/// bounding box, on its centre line.
pub fn cv_probe_nodes(positions: &[Point], dim: usize, axis: usize, lo: f64, hi: f64) -> Result<(usize, usize)> {
    if positions.is_empty() || axis >= dim {
        return Err(FpmError::Contract(format!("no axis {axis} in a {dim}D point set")));
    }
    let mut min = positions[0];
    let mut max = positions[0];
    for p in positions {
        min = min.inf(p);
        max = max.sup(p);
    }
    let centre = 0.5 * (min + max);
    let at = |frac: f64| {
        let mut x = centre;
        x[axis] = min[axis] + frac * (max[axis] - min[axis]);
        nearest(positions, &x)
    };
    Ok((at(lo), at(hi)))
}

fn nearest(positions: &[Point], x: &Point) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in positions.iter().enumerate() {
        let d = (p - x).norm_squared();
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Signed relative error (measured − reference)/reference.
pub fn relative_error(measured: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 || !reference.is_finite() {
        return Err(FpmError::Contract(format!("relative error against reference {reference}")));
    }
    Ok((measured - reference) / reference)
}
