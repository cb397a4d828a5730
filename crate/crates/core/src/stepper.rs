//! Operator-splitting time integration of the monodomain equation.
//!
//! Each step advances the reaction ODEs node by node and the diffusion
//! system `C V̇ + K V = 0` with either lumped explicit Euler or a θ-scheme
//! solved by Jacobi-preconditioned CG.

use std::io::{BufRead, Write};

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::assembly::GlobalOperators;
use crate::error::{FpmError, Result};
use crate::geometry::Point;
use crate::ionic::{IonicModel, StimulusProtocol};
use crate::post::{ActivationMap, ActivationTracker, ProbeTrace};
use crate::sparse::{dot, CgOutcome, CgSettings, CsrMatrix};

/// Largest accepted CG relative-residual tolerance.
pub const MAX_SOLVER_TOLERANCE: f64 = 1e-2;

/// Explicit steps must stay below the estimated limit by this factor, which
/// absorbs the power iteration's underestimate of the top eigenvalue.
const EXPLICIT_SAFETY: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    #[default]
    Godunov,
    Strang,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionScheme {
    Explicit,
    #[default]
    Theta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReactionIntegrator {
    /// Forward Euler, with the exponential update for gates that expose
    /// steady state and time constant.
    #[default]
    Euler,
    /// Explicit trapezoid (Heun) for voltage and every state variable.
    Heun,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeIntegrationPlan {
    /// ms
    pub dt: f64,
    /// ms
    pub total: f64,
    pub splitting: Splitting,
    pub scheme: DiffusionScheme,
    pub theta: f64,
    pub reaction: ReactionIntegrator,
    pub solver: CgSettings,
}

impl Default for TimeIntegrationPlan {
    fn default() -> Self {
        Self {
            dt: 0.1,
            total: 0.0,
            splitting: Splitting::Godunov,
            scheme: DiffusionScheme::Theta,
            theta: 1.0,
            reaction: ReactionIntegrator::Euler,
            solver: CgSettings {
                tolerance: 1e-8,
                max_iterations: 1000,
                deterministic: false,
            },
        }
    }
}

impl TimeIntegrationPlan {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FpmError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.total >= 0.0 && self.total.is_finite()) {
            return Err(FpmError::Config(format!("total time must be non-negative, got {}", self.total)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(FpmError::Config(format!("theta must lie in (0, 1], got {}", self.theta)));
        }
        let tol = self.solver.tolerance;
        if !(tol > 0.0 && tol <= MAX_SOLVER_TOLERANCE) {
            return Err(FpmError::Config(format!("solver tolerance must lie in (0, 1e-2], got {tol}")));
        }
        if self.solver.max_iterations == 0 {
            return Err(FpmError::Config("solver max_iterations must be at least 1".into()));
        }
        steps_in(self.total, self.dt).map(|_| ())
    }

    pub fn steps(&self) -> Result<usize> {
        steps_in(self.total, self.dt)
    }

    /// Converts an interval in ms to a whole number of steps.
    pub fn interval_steps(&self, interval: f64) -> Result<usize> {
        let k = steps_in(interval, self.dt)?;
        if k == 0 {
            return Err(FpmError::Config(format!("interval {interval} ms is shorter than the time step")));
        }
        Ok(k)
    }
}

fn steps_in(span: f64, dt: f64) -> Result<usize> {
    let k = (span / dt).round();
    if (k * dt - span).abs() > 1e-9 * span.max(dt) {
        return Err(FpmError::Config(format!("{span} ms is not a whole number of {dt} ms steps")));
    }
    Ok(k as usize)
}

/// Stimuli with their node sets resolved once.
#[derive(Debug, Clone)]
pub struct StimulusSet {
    protocols: Vec<StimulusProtocol>,
    nodes: Vec<Vec<usize>>,
    n: usize,
}

impl StimulusSet {
    pub fn new(protocols: &[StimulusProtocol], positions: &[Point]) -> Result<Self> {
        for p in protocols {
            p.validate()?;
        }
        Ok(Self {
            protocols: protocols.to_vec(),
            nodes: protocols.iter().map(|p| p.nodes(positions)).collect(),
            n: positions.len(),
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            protocols: Vec::new(),
            nodes: Vec::new(),
            n,
        }
    }

    /// Summed stimulus rate at time `t`, written into `out`.
    pub fn fill(&self, t: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.n, 0.0);
        for (p, nodes) in self.protocols.iter().zip(&self.nodes) {
            if p.is_active(t) {
                for &i in nodes {
                    out[i] += p.amplitude;
                }
            }
        }
    }
}

/// Transmembrane voltage and model state at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub t: f64,
    pub step: usize,
    pub v: Vec<f64>,
    /// Row-major, `state_len` entries per node.
    pub state: Vec<f64>,
    pub state_len: usize,
}

impl SimulationState {
    pub fn resting(n: usize, model: &dyn IonicModel) -> Self {
        let s0 = model.initial_state();
        Self {
            t: 0.0,
            step: 0,
            v: vec![model.resting_potential(); n],
            state: s0.iter().copied().cycle().take(n * s0.len()).collect(),
            state_len: s0.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }

    pub fn node_state(&self, i: usize) -> &[f64] {
        &self.state[i * self.state_len..(i + 1) * self.state_len]
    }

    /// Text checkpoint: a header, then one line `V s_1 … s_m` per node.
    pub fn write_checkpoint(&self, mut w: impl Write) -> Result<()> {
        writeln!(w, "fpm-checkpoint 1")?;
        writeln!(w, "time {}", self.t)?;
        writeln!(w, "step {}", self.step)?;
        writeln!(w, "nodes {}", self.v.len())?;
        writeln!(w, "state {}", self.state_len)?;
        let mut line = String::new();
        for i in 0..self.v.len() {
            line.clear();
            line.push_str(&self.v[i].to_string());
            for s in self.node_state(i) {
                line.push(' ');
                line.push_str(&s.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: impl BufRead, source_name: &str) -> Result<Self> {
        let err = |line: usize, message: String| FpmError::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let mut lines = r.lines().enumerate();
        let mut next = || -> Result<(usize, String)> {
            match lines.next() {
                Some((i, l)) => Ok((i + 1, l?)),
                None => Err(err(0, "unexpected end of file".into())),
            }
        };
        let (ln, magic) = next()?;
        if magic.trim() != "fpm-checkpoint 1" {
            return Err(err(ln, format!("expected 'fpm-checkpoint 1', found '{}'", magic.trim())));
        }
        let mut header = |key: &str| -> Result<String> {
            let (ln, l) = next()?;
            let mut it = l.split_whitespace();
            match (it.next(), it.next(), it.next()) {
                (Some(k), Some(v), None) if k == key => Ok(v.to_string()),
                _ => Err(err(ln, format!("expected '{key} <value>'"))),
            }
        };
        let t: f64 = header("time")?.parse().map_err(|e| err(2, format!("bad time: {e}")))?;
        let step: usize = header("step")?.parse().map_err(|e| err(3, format!("bad step: {e}")))?;
        let n: usize = header("nodes")?.parse().map_err(|e| err(4, format!("bad node count: {e}")))?;
        let m: usize = header("state")?.parse().map_err(|e| err(5, format!("bad state length: {e}")))?;
        let mut v = Vec::with_capacity(n);
        let mut state = Vec::with_capacity(n * m);
        for _ in 0..n {
            let (ln, l) = next()?;
            let vals: std::result::Result<Vec<f64>, _> = l.split_whitespace().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| err(ln, format!("bad number: {e}")))?;
            if vals.len() != m + 1 {
                return Err(err(ln, format!("expected {} values, found {}", m + 1, vals.len())));
            }
            v.push(vals[0]);
            state.extend_from_slice(&vals[1..]);
        }
        Ok(Self {
            t,
            step,
            v,
            state,
            state_len: m,
        })
    }
}

/// Advances V and the model state by `dt` with the stimulus held at its
/// value for this substep.
pub fn reaction_step(
    model: &dyn IonicModel,
    v: &mut [f64],
    state: &mut [f64],
    stimulus: &[f64],
    dt: f64,
    t: f64,
    integrator: ReactionIntegrator,
) -> Result<()> {
    let m = model.state_len();
    if m == 0 || state.len() != v.len() * m || stimulus.len() != v.len() {
        return Err(FpmError::Contract(format!(
            "reaction step on {} nodes with {} state entries and {} stimulus entries",
            v.len(),
            state.len(),
            stimulus.len()
        )));
    }
    if !(dt > 0.0) {
        return Err(FpmError::Contract(format!("reaction step must be positive, got {dt}")));
    }
    v.par_iter_mut()
        .zip(state.par_chunks_mut(m))
        .zip(stimulus.par_iter())
        .for_each(|((v, s), &stim)| match integrator {
            ReactionIntegrator::Euler => euler_node(model, v, s, stim, dt),
            ReactionIntegrator::Heun => heun_node(model, v, s, stim, dt),
        });
    let bad = v
        .par_iter()
        .zip(state.par_chunks(m))
        .position_first(|(v, s)| !v.is_finite() || s.iter().any(|x| !x.is_finite()));
    if let Some(node) = bad {
        return Err(FpmError::Numeric {
            time: t,
            node,
            what: "non-finite voltage or state after the reaction step".into(),
        });
    }
    Ok(())
}

type Buf = SmallVec<[f64; 8]>;

fn euler_node(model: &dyn IonicModel, v: &mut f64, s: &mut [f64], stim: f64, dt: f64) {
    let mut ds: Buf = SmallVec::from_elem(0.0, s.len());
    let i_ion = model.rates(*v, s, &mut ds);
    let v0 = *v;
    for k in 0..s.len() {
        match model.gate_kinetics(v0, s, k) {
            Some((inf, tau)) => s[k] = inf + (s[k] - inf) * (-dt / tau).exp(),
            None => s[k] += dt * ds[k],
        }
    }
    *v = v0 + dt * (stim - i_ion);
}

fn heun_node(model: &dyn IonicModel, v: &mut f64, s: &mut [f64], stim: f64, dt: f64) {
    let m = s.len();
    let mut k1: Buf = SmallVec::from_elem(0.0, m);
    let mut k2: Buf = SmallVec::from_elem(0.0, m);
    let dv1 = stim - model.rates(*v, s, &mut k1);
    let pred: Buf = s.iter().zip(&k1).map(|(s, d)| s + dt * d).collect();
    let dv2 = stim - model.rates(*v + dt * dv1, &pred, &mut k2);
    for k in 0..m {
        s[k] += 0.5 * dt * (k1[k] + k2[k]);
    }
    *v += 0.5 * dt * (dv1 + dv2);
}

/// Lumped (row-sum) capacity diagonal.
fn lumped_diagonal(ops: &GlobalOperators) -> Result<Vec<f64>> {
    let d = if ops.lumped { ops.c.diagonal() } else { ops.c.row_sums() };
    if let Some(i) = d.iter().position(|&x| !(x > 0.0)) {
        return Err(FpmError::Assembly(format!("lumped capacity at node {i} is {}", d[i])));
    }
    Ok(d)
}

/// Largest stable explicit diffusion step, 2/λ_max(C_L⁻¹K), with λ_max
/// estimated by power iteration.
pub fn explicit_stability_limit(ops: &GlobalOperators) -> Result<f64> {
    let lumped = lumped_diagonal(ops)?;
    let lambda = top_generalized_eigenvalue(&ops.k, &lumped, 500, 1e-8);
    Ok(if lambda > 0.0 { 2.0 / lambda } else { f64::INFINITY })
}

/// Power iteration for the top eigenvalue of diag(m)⁻¹K with K symmetric PSD.
pub fn top_generalized_eigenvalue(k: &CsrMatrix, m: &[f64], max_iter: usize, tol: f64) -> f64 {
    let n = k.nrows();
    if n == 0 {
        return 0.0;
    }
    // deterministic start vector with no component along the constant mode
    let mut x: Vec<f64> = (0..n).map(|i| ((i as f64) * 0.754_877_666 + 0.1).fract() - 0.5).collect();
    let mut kx = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let mnorm = x.iter().zip(m).map(|(x, m)| m * x * x).sum::<f64>().sqrt();
        if mnorm == 0.0 {
            return 0.0;
        }
        x.iter_mut().for_each(|v| *v /= mnorm);
        k.mul_vec_into(&x, &mut kx);
        let next = dot(&x, &kx);
        x.iter_mut().zip(&kx).zip(m).for_each(|((x, kx), m)| *x = kx / m);
        if (next - lambda).abs() <= tol * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Precomputed diffusion substep for a fixed step size.
#[derive(Debug, Clone)]
pub struct DiffusionStepper {
    kind: StepperKind,
    solver: CgSettings,
    work: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone)]
enum StepperKind {
    Explicit { k: CsrMatrix, inv_lumped: Vec<f64>, dt: f64 },
    Theta { lhs: CsrMatrix, rhs: CsrMatrix },
}

impl DiffusionStepper {
    pub fn new(ops: &GlobalOperators, scheme: DiffusionScheme, theta: f64, dt: f64, solver: CgSettings) -> Result<Self> {
        let kind = match scheme {
            DiffusionScheme::Explicit => {
                let limit = explicit_stability_limit(ops)?;
                if dt * EXPLICIT_SAFETY > limit {
                    return Err(FpmError::Config(format!(
                        "explicit diffusion step {dt} ms exceeds the stability limit {:.4e} ms (with safety factor {EXPLICIT_SAFETY})",
                        limit
                    )));
                }
                let inv_lumped = lumped_diagonal(ops)?.iter().map(|d| 1.0 / d).collect();
                StepperKind::Explicit {
                    k: ops.k.clone(),
                    inv_lumped,
                    dt,
                }
            }
            DiffusionScheme::Theta => {
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(FpmError::Config(format!("theta must lie in (0, 1], got {theta}")));
                }
                let lhs = ops.c.linear_combination(1.0, &ops.k, theta * dt)?;
                let rhs = ops.c.linear_combination(1.0, &ops.k, -(1.0 - theta) * dt)?;
                StepperKind::Theta { lhs, rhs }
            }
        };
        Ok(Self {
            kind,
            solver,
            work: vec![0.0; ops.len()],
            iterations: 0,
        })
    }

    pub fn step(&mut self, v: &mut [f64]) -> Result<CgOutcome> {
        match &self.kind {
            StepperKind::Explicit { k, inv_lumped, dt } => {
                k.mul_vec_into(v, &mut self.work);
                v.par_iter_mut()
                    .zip(&self.work)
                    .zip(inv_lumped)
                    .for_each(|((v, kv), il)| *v -= dt * il * kv);
                Ok(CgOutcome {
                    iterations: 0,
                    relative_residual: 0.0,
                })
            }
            StepperKind::Theta { lhs, rhs } => {
                rhs.mul_vec_into(v, &mut self.work);
                let out = crate::sparse::solve_pcg(lhs, &self.work, v, &self.solver)?;
                self.iterations += out.iterations;
                Ok(out)
            }
        }
    }
}

/// One diffusion substep, building the stepper on the fly.
pub fn diffusion_step(
    v: &mut [f64],
    ops: &GlobalOperators,
    dt: f64,
    scheme: DiffusionScheme,
    theta: f64,
    solver: &CgSettings,
) -> Result<CgOutcome> {
    DiffusionStepper::new(ops, scheme, theta, dt, *solver)?.step(v)
}

/// Everything the driver needs besides the evolving state.
#[derive(Clone, Copy)]
pub struct Simulation<'a> {
    pub positions: &'a [Point],
    pub operators: &'a GlobalOperators,
    pub model: &'a dyn IonicModel,
    pub stimuli: &'a [StimulusProtocol],
    pub plan: &'a TimeIntegrationPlan,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    /// (name, node)
    pub probes: Vec<(String, usize)>,
    /// Probe sampling interval in steps.
    pub sample_every: usize,
    /// Snapshot interval in steps; `None` disables snapshots.
    pub snapshot_every: Option<usize>,
    pub lat_threshold: f64,
    pub progress: bool,
}

impl Recording {
    pub fn new(lat_threshold: f64) -> Self {
        Self {
            probes: Vec::new(),
            sample_every: 1,
            snapshot_every: None,
            lat_threshold,
            progress: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub state: SimulationState,
    pub traces: Vec<ProbeTrace>,
    pub activation: ActivationMap,
    pub steps: usize,
    pub solver_iterations: usize,
}

/// Called with (snapshot index, time, voltages).
pub type SnapshotSink<'a> = dyn FnMut(usize, f64, &[f64]) -> Result<()> + 'a;

/// Advances `state` to the plan's total time.
///
/// `snapshot` receives (time index, t, V) at t0 and every snapshot interval.
pub fn run_simulation(
    sim: &Simulation,
    mut state: SimulationState,
    recording: &Recording,
    snapshot: &mut SnapshotSink,
) -> Result<RunResult> {
    let plan = sim.plan;
    plan.validate()?;
    let n = sim.positions.len();
    if state.len() != n || sim.operators.len() != n {
        return Err(FpmError::Contract(format!(
            "state has {} nodes, operators {}, geometry {n}",
            state.len(),
            sim.operators.len()
        )));
    }
    if state.state_len != sim.model.state_len() || state.state.len() != n * state.state_len {
        return Err(FpmError::Contract("state layout does not match the ionic model".into()));
    }
    if let Some(&(ref name, node)) = recording.probes.iter().find(|(_, i)| *i >= n) {
        return Err(FpmError::Contract(format!("probe {name} refers to node {node}")));
    }
    if recording.sample_every == 0 || recording.snapshot_every == Some(0) {
        return Err(FpmError::Contract("recording intervals must be at least one step".into()));
    }
    let total_steps = plan.steps()?;
    if state.step > total_steps {
        return Err(FpmError::Contract(format!(
            "state is at step {} beyond the final step {total_steps}",
            state.step
        )));
    }

    let dt = plan.dt;
    let stimuli = StimulusSet::new(sim.stimuli, sim.positions)?;
    let (reaction_dt, strang) = match plan.splitting {
        Splitting::Godunov => (dt, false),
        Splitting::Strang => (0.5 * dt, true),
    };
    let mut diffusion = DiffusionStepper::new(sim.operators, plan.scheme, plan.theta, dt, plan.solver)?;

    let mut traces: Vec<ProbeTrace> = recording
        .probes
        .iter()
        .map(|(name, node)| ProbeTrace::new(name.clone(), *node))
        .collect();
    let mut tracker = ActivationTracker::new(recording.lat_threshold, state.t, &state.v);
    let record = |traces: &mut Vec<ProbeTrace>, t: f64, v: &[f64]| {
        for tr in traces.iter_mut() {
            tr.push(t, v[tr.node]);
        }
    };
    record(&mut traces, state.t, &state.v);
    if let Some(every) = recording.snapshot_every {
        if state.step.is_multiple_of(every) {
            snapshot(state.step / every, state.t, &state.v)?;
        }
    }

    let start_step = state.step;
    let mut stim = Vec::with_capacity(n);
    let report_every = (total_steps / 10).max(1);
    while state.step < total_steps {
        let t = state.step as f64 * dt;
        stimuli.fill(t, &mut stim);
        reaction_step(sim.model, &mut state.v, &mut state.state, &stim, reaction_dt, t, plan.reaction)?;
        diffusion.step(&mut state.v).inspect_err(|_| log::error!("diffusion substep failed at t = {t} ms"))?;
        if strang {
            let th = t + 0.5 * dt;
            stimuli.fill(th, &mut stim);
            reaction_step(sim.model, &mut state.v, &mut state.state, &stim, reaction_dt, th, plan.reaction)?;
        }
        if let Some(node) = state.v.iter().position(|v| !v.is_finite()) {
            return Err(FpmError::Numeric {
                time: t + dt,
                node,
                what: "non-finite voltage after the diffusion step".into(),
            });
        }
        state.step += 1;
        state.t = state.step as f64 * dt;
        tracker.update(state.t, &state.v);
        if state.step.is_multiple_of(recording.sample_every) {
            record(&mut traces, state.t, &state.v);
        }
        if let Some(every) = recording.snapshot_every {
            if state.step.is_multiple_of(every) {
                snapshot(state.step / every, state.t, &state.v)?;
            }
        }
        if recording.progress && (state.step - start_step).is_multiple_of(report_every) {
            info!(
                "t = {:.3} ms ({}/{} steps, {} CG iterations so far)",
                state.t, state.step, total_steps, diffusion.iterations
            );
        }
    }

    Ok(RunResult {
        state,
        traces,
        activation: tracker.map(),
        steps: total_steps - start_step,
        solver_iterations: diffusion.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_global, AssemblyOptions, DiffusionTensorField};
    use crate::geometry::build_voxel_partition;
    use crate::ionic::{AlievPanfilov, MitchellSchaeffer, Region};
    use crate::shape::build_shape_functions;
    use approx::assert_relative_eq;

    #[derive(Debug)]
    struct ConstantCurrent(f64);

    impl IonicModel for ConstantCurrent {
        fn name(&self) -> &'static str {
            "constant"
        }
        fn state_len(&self) -> usize {
            1
        }
        fn resting_potential(&self) -> f64 {
            0.0
        }
        fn peak_potential(&self) -> f64 {
            1.0
        }
        fn initial_state(&self) -> Vec<f64> {
            vec![0.0]
        }
        fn rates(&self, _v: f64, _s: &[f64], ds: &mut [f64]) -> f64 {
            ds[0] = 0.0;
            self.0
        }
        fn max_dt(&self) -> f64 {
            1.0
        }
    }

    fn grid_ops(nx: usize, lumped: bool) -> (crate::geometry::CellPartition, GlobalOperators) {
        let part = build_voxel_partition(&[nx, nx], &[0.1, 0.1], &[0.0, 0.0]).unwrap();
        let sf = build_shape_functions(&part).unwrap();
        let d = DiffusionTensorField::isotropic(2, part.len(), 0.001).unwrap();
        let opts = AssemblyOptions {
            lumped_mass: lumped,
            ..Default::default()
        };
        let ops = assemble_global(&part, &sf, &d, &opts).unwrap();
        (part, ops)
    }

    #[test]
    fn zero_current_leaves_voltage() {
        let m = ConstantCurrent(0.0);
        let mut v = vec![-80.0, 10.0];
        let mut s = vec![0.0; 2];
        reaction_step(&m, &mut v, &mut s, &[0.0; 2], 0.1, 0.0, ReactionIntegrator::Euler).unwrap();
        assert_eq!(v, vec![-80.0, 10.0]);
    }

    #[test]
    fn constant_current_euler_increment() {
        let m = ConstantCurrent(2.5);
        let mut v = vec![1.0];
        let mut s = vec![0.0];
        reaction_step(&m, &mut v, &mut s, &[0.0], 0.2, 0.0, ReactionIntegrator::Euler).unwrap();
        assert_relative_eq!(v[0], 1.0 - 2.5 * 0.2, epsilon = 1e-15);
    }

    #[test]
    fn nan_reports_node_and_time() {
        let m = MitchellSchaeffer::default();
        let mut v = vec![-80.0, f64::NAN, -80.0];
        let mut s = vec![1.0; 3];
        let e = reaction_step(&m, &mut v, &mut s, &[0.0; 3], 0.1, 7.5, ReactionIntegrator::Euler).unwrap_err();
        match e {
            FpmError::Numeric { node, time, .. } => {
                assert_eq!(node, 1);
                assert_eq!(time, 7.5);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn gates_stay_bounded() {
        let m = MitchellSchaeffer::default();
        for &v0 in &[-90.0, -80.0, -60.0, 0.0, 20.0, 40.0] {
            let mut v = vec![v0];
            let mut s = vec![0.5];
            for _ in 0..2000 {
                reaction_step(&m, &mut v, &mut s, &[0.0], m.max_dt(), 0.0, ReactionIntegrator::Euler).unwrap();
                assert!(m.state_in_bounds(&s), "h = {} from V0 = {v0}", s[0]);
            }
        }
    }

    #[test]
    fn resting_tissue_stays_at_rest() {
        let (part, ops) = grid_ops(6, false);
        for model in [&MitchellSchaeffer::default() as &dyn IonicModel, &AlievPanfilov::default()] {
            let plan = TimeIntegrationPlan {
                total: 100.0,
                ..Default::default()
            };
            let sim = Simulation {
                positions: part.points(),
                operators: &ops,
                model,
                stimuli: &[],
                plan: &plan,
            };
            let st = SimulationState::resting(part.len(), model);
            let out = run_simulation(&sim, st, &Recording::new(0.0), &mut |_, _, _| Ok(())).unwrap();
            assert_eq!(out.steps, 1000);
            let rest = model.resting_potential();
            assert!(out.state.v.iter().all(|v| (v - rest).abs() <= 1e-6));
        }
    }

    #[test]
    fn constant_field_is_preserved_by_diffusion() {
        let (_, ops) = grid_ops(5, false);
        for scheme in [DiffusionScheme::Explicit, DiffusionScheme::Theta] {
            let mut v = vec![3.25; ops.len()];
            diffusion_step(&mut v, &ops, 0.1, scheme, 1.0, &CgSettings::default()).unwrap();
            assert!(v.iter().all(|x| (x - 3.25).abs() <= 1e-12));
        }
    }

    #[test]
    fn content_is_conserved() {
        let (part, ops) = grid_ops(8, false);
        let mut v: Vec<f64> = part.points().iter().map(|p| (p.x * 7.0).sin() + p.y).collect();
        let c0 = ops.content(&v);
        let solver = CgSettings {
            tolerance: 1e-13,
            max_iterations: 500,
            deterministic: true,
        };
        diffusion_step(&mut v, &ops, 0.5, DiffusionScheme::Theta, 1.0, &solver).unwrap();
        assert!((ops.content(&v) - c0).abs() <= 1e-10 * c0.abs());
    }

    #[test]
    fn explicit_step_respects_stability_limit() {
        let (_, ops) = grid_ops(6, true);
        let limit = explicit_stability_limit(&ops).unwrap();
        assert!(limit.is_finite() && limit > 0.0);
        let too_big = DiffusionStepper::new(&ops, DiffusionScheme::Explicit, 1.0, 1.5 * limit, CgSettings::default());
        assert!(too_big.is_err());
        let mut st = DiffusionStepper::new(&ops, DiffusionScheme::Explicit, 1.0, 0.9 * limit, CgSettings::default()).unwrap();
        let mut v: Vec<f64> = (0..ops.len()).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        for _ in 0..500 {
            st.step(&mut v).unwrap();
        }
        assert!(v.iter().all(|x| x.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn zero_duration_run_emits_initial_state() {
        let (part, ops) = grid_ops(4, false);
        let model = MitchellSchaeffer::default();
        let plan = TimeIntegrationPlan::default();
        let sim = Simulation {
            positions: part.points(),
            operators: &ops,
            model: &model,
            stimuli: &[],
            plan: &plan,
        };
        let mut rec = Recording::new(-30.0);
        rec.probes.push(("a".into(), 3));
        rec.snapshot_every = Some(1);
        let mut snaps = Vec::new();
        let st = SimulationState::resting(part.len(), &model);
        let out = run_simulation(&sim, st, &rec, &mut |i, t, _| {
            snaps.push((i, t));
            Ok(())
        })
        .unwrap();
        assert_eq!(out.steps, 0);
        assert_eq!(snaps, vec![(0, 0.0)]);
        assert_eq!(out.traces[0].times, vec![0.0]);
    }

    #[test]
    fn stimulated_edge_activates_tissue() {
        let (part, ops) = grid_ops(10, false);
        let model = MitchellSchaeffer::default();
        let stim = [StimulusProtocol {
            region: Region::Box {
                min: Point::new(-1.0, -1.0, -1.0),
                max: Point::new(0.06, 2.0, 1.0),
            },
            amplitude: 60.0,
            duration: 1.0,
            period: None,
            start: 0.0,
        }];
        let plan = TimeIntegrationPlan {
            total: 40.0,
            ..Default::default()
        };
        let sim = Simulation {
            positions: part.points(),
            operators: &ops,
            model: &model,
            stimuli: &stim,
            plan: &plan,
        };
        let st = SimulationState::resting(part.len(), &model);
        let out = run_simulation(&sim, st, &Recording::new(-30.0), &mut |_, _, _| Ok(())).unwrap();
        assert_eq!(out.activation.activated(), part.len());
        // LAT grows along x on the bottom row
        let row: Vec<f64> = (0..10).map(|i| out.activation.lat[i]).collect();
        assert!(row.windows(2).all(|w| w[1] >= w[0]), "{row:?}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let model = AlievPanfilov::default();
        let mut st = SimulationState::resting(3, &model);
        st.v = vec![-80.0, 0.1 + 0.2, 1e-300];
        st.state = vec![0.0, 1.0 / 3.0, 7.0];
        st.t = 12.3;
        st.step = 123;
        let mut buf = Vec::new();
        st.write_checkpoint(&mut buf).unwrap();
        let back = SimulationState::read_checkpoint(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, st);
        let bad = b"fpm-checkpoint 1\ntime 0\nstep 0\nnodes 1\nstate 1\n1.0\n";
        let e = SimulationState::read_checkpoint(&bad[..], "bad").unwrap_err();
        assert!(matches!(e, FpmError::Parse { line: 6, .. }));
    }

    #[test]
    fn plan_validation() {
        let mut p = TimeIntegrationPlan {
            total: 1.0,
            ..Default::default()
        };
        assert!(p.validate().is_ok());
        p.solver.tolerance = 0.1;
        assert!(p.validate().is_err());
        p.solver.tolerance = 1e-6;
        p.total = 1.05;
        assert!(p.validate().is_err());
        p.total = 1.0;
        p.theta = 0.0;
        assert!(p.validate().is_err());
    }
}
