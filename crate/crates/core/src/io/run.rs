use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};

use super::config::{GeometryConfig, SimulationConfig};
use super::output::{read_lat, read_trace, trace_file_name, write_lat, write_snapshot, write_trace};
use crate::assembly::{assemble_global, AssemblyOptions, DiffusionTensorField, GlobalOperators};
use crate::error::{FpmError, Result};
use crate::geometry::{
    build_voronoi_partition_2d, build_voxel_partition, read_partition, read_points, BoundaryPolygon, CellPartition,
    Point,
};
use crate::ionic::{IonicModel, StimulusProtocol};
use crate::post::{compute_cv, cv_probe_nodes, ActivationMap};
use crate::shape::build_shape_functions;
use crate::stepper::{run_simulation, Recording, RunResult, Simulation, SimulationState, TimeIntegrationPlan};

pub const CONFIG_FILE: &str = "config.toml";
pub const LAT_FILE: &str = "lat.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const PROBE_METRICS_FILE: &str = "probe_metrics.csv";
pub const CV_FILE: &str = "cv.csv";

/// A fully built discretization ready for time stepping.
#[derive(Debug)]
pub struct Problem {
    pub partition: CellPartition,
    pub tensors: DiffusionTensorField,
    pub operators: GlobalOperators,
    pub model: Box<dyn IonicModel>,
    pub stimuli: Vec<StimulusProtocol>,
    /// (name, node)
    pub probes: Vec<(String, usize)>,
    pub plan: TimeIntegrationPlan,
    pub lat_threshold: f64,
}

pub fn build_partition(config: &SimulationConfig) -> Result<CellPartition> {
    if let Some((counts, spacing, origin)) = config.geometry.grid_layout()? {
        return build_voxel_partition(&counts, &spacing, &origin);
    }
    match &config.geometry {
        GeometryConfig::Partition { file } => read_partition(&config.resolve(file)),
        GeometryConfig::Voronoi { points, boundary } => {
            let cloud = read_points(&config.resolve(points))?;
            if cloud.dim() != 2 {
                return Err(FpmError::Config("Voronoi geometry needs 2D points".into()));
            }
            build_voronoi_partition_2d(&cloud, &BoundaryPolygon::read(&config.resolve(boundary))?)
        }
        GeometryConfig::Grid { .. } => unreachable!("grid handled above"),
    }
}

/// One fiber vector per line (cm-free, normalized on use).
pub fn read_fibers(path: &Path, n: usize, dim: usize) -> Result<Vec<Point>> {
    let cloud_like = fs::read_to_string(path)?;
    let mut out = Vec::with_capacity(n);
    for (i, line) in cloud_like.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let c: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse::<f64>).collect();
        let c = c.map_err(|e| FpmError::Parse {
            source_name: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if c.len() != dim {
            return Err(FpmError::Parse {
                source_name: path.display().to_string(),
                line: i + 1,
                message: format!("expected {dim} components, found {}", c.len()),
            });
        }
        out.push(Point::new(c[0], c[1], if dim == 3 { c[2] } else { 0.0 }));
    }
    if out.len() != n {
        return Err(FpmError::Config(format!(
            "{} has {} fiber vectors for {n} points",
            path.display(),
            out.len()
        )));
    }
    Ok(out)
}

/// Builds geometry, shape functions and operators from a validated config.
pub fn prepare(config: &SimulationConfig) -> Result<Problem> {
    let partition = build_partition(config)?;
    let dim = partition.dim();
    let n = partition.len();
    info!("partition: {n} points in {dim}D, {} facets", partition.facets().len());
    let p = &config.physics;
    let tensors = match (&p.fiber, &p.fiber_file) {
        (_, Some(file)) => {
            let fibers = read_fibers(&config.resolve(file), n, dim)?;
            DiffusionTensorField::from_fibers(dim, fibers, p.d0, p.rho)?
        }
        (Some(f), None) => {
            if f.len() != dim {
                return Err(FpmError::Config(format!("physics.fiber has {} entries in a {dim}D run", f.len())));
            }
            let fiber = Point::new(f[0], f[1], if dim == 3 { f[2] } else { 0.0 });
            DiffusionTensorField::uniform(dim, n, fiber, p.d0, p.rho)?
        }
        (None, None) => DiffusionTensorField::uniform(dim, n, Point::x(), p.d0, p.rho)?,
    };
    let shapes = build_shape_functions(&partition)?;
    let options = AssemblyOptions {
        penalty: config.fpm.penalty,
        lumped_mass: config.fpm.lumped_mass,
    };
    let operators = assemble_global(&partition, &shapes, &tensors, &options)?;
    info!("operators: {} nonzeros", operators.k.nnz());
    let model = config.ionic.build()?;
    let stimuli = config
        .stimuli
        .iter()
        .map(|s| s.to_protocol(dim))
        .collect::<Result<Vec<_>>>()?;
    for (i, s) in stimuli.iter().enumerate() {
        if s.nodes(partition.points()).is_empty() {
            warn!("stimulus {i} covers no points");
        }
    }
    let probes = config
        .probes
        .iter()
        .map(|pr| Ok((pr.name.clone(), partition.cloud().nearest(&pr.position_cm(dim)?))))
        .collect::<Result<Vec<_>>>()?;
    let lat_threshold = config
        .output
        .lat_threshold
        .unwrap_or_else(|| 0.5 * (model.resting_potential() + model.peak_potential()));
    Ok(Problem {
        partition,
        tensors,
        operators,
        model,
        stimuli,
        probes,
        plan: config.plan(),
        lat_threshold,
    })
}

#[derive(Debug)]
pub struct RunReport {
    pub directory: PathBuf,
    pub result: RunResult,
}

/// Runs a simulation and writes config, traces, LAT map, snapshots and the
/// final checkpoint into the output directory.
pub fn run(config: &SimulationConfig, problem: &Problem, output_dir: &Path, progress: bool) -> Result<RunReport> {
    fs::create_dir_all(output_dir)?;
    let mut resolved = config.clone();
    resolved.output.lat_threshold = Some(problem.lat_threshold);
    resolved.output.directory = output_dir.to_path_buf();
    fs::write(output_dir.join(CONFIG_FILE), resolved.to_toml()?)?;

    let plan = &problem.plan;
    let sample_every = match config.output.sample_interval {
        Some(ms) => plan.interval_steps(ms)?,
        None => 1,
    };
    let snapshot_every = config.output.snapshot_interval.map(|ms| plan.interval_steps(ms)).transpose()?;
    let snap_dir = output_dir.join(SNAPSHOT_DIR);
    if snapshot_every.is_some() {
        fs::create_dir_all(&snap_dir)?;
    }
    let recording = Recording {
        probes: problem.probes.clone(),
        sample_every,
        snapshot_every,
        lat_threshold: problem.lat_threshold,
        progress,
    };
    let sim = Simulation {
        positions: problem.partition.points(),
        operators: &problem.operators,
        model: problem.model.as_ref(),
        stimuli: &problem.stimuli,
        plan,
    };
    let dim = problem.partition.dim();
    let formats = config.output.formats.clone();
    let positions = problem.partition.points();
    let mut sink = |index: usize, t: f64, v: &[f64]| -> Result<()> {
        for &f in &formats {
            write_snapshot(&snap_dir, positions, dim, v, t, index, f)?;
        }
        Ok(())
    };
    let state = SimulationState::resting(problem.partition.len(), problem.model.as_ref());
    let result = run_simulation(&sim, state, &recording, &mut sink)?;

    for tr in &result.traces {
        write_trace(output_dir, tr)?;
    }
    write_lat(&output_dir.join(LAT_FILE), positions, dim, &result.activation)?;
    if config.output.checkpoint {
        let f = fs::File::create(output_dir.join(CHECKPOINT_FILE))?;
        result.state.write_checkpoint(std::io::BufWriter::new(f))?;
    }
    info!(
        "finished {} steps, {} CG iterations, {}/{} nodes activated",
        result.steps,
        result.solver_iterations,
        result.activation.activated(),
        result.activation.len()
    );
    Ok(RunReport {
        directory: output_dir.to_path_buf(),
        result,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub probe: String,
    pub lat_ms: f64,
    pub apd90_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvRow {
    pub axis: usize,
    pub from_node: usize,
    pub to_node: usize,
    pub distance_cm: f64,
    pub cv_cm_per_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostReport {
    pub probes: Vec<ProbeRow>,
    pub cv: Vec<CvRow>,
}

/// Reads a run directory and writes `probe_metrics.csv` (`probe,lat_ms,apd90_ms`)
/// and `cv.csv` (`axis,from_node,to_node,distance_cm,cv_cm_per_ms`), with CV
/// probes at 25% and 75% of each axis.
pub fn post_process(run_dir: &Path) -> Result<PostReport> {
    let cfg_path = run_dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path)
        .map_err(|e| FpmError::Config(format!("{} is not a run directory: {e}", run_dir.display())))?;
    let config = SimulationConfig::parse(&text, &cfg_path.display().to_string())?;
    let threshold = config
        .output
        .lat_threshold
        .ok_or_else(|| FpmError::Config("run config lacks the resolved lat_threshold".into()))?;

    let mut probes = Vec::new();
    for pr in &config.probes {
        let tr = read_trace(&run_dir.join(trace_file_name(&pr.name)), &pr.name)?;
        probes.push(ProbeRow {
            probe: pr.name.clone(),
            lat_ms: tr.lat(threshold),
            apd90_ms: tr.apd90(),
        });
    }

    let lat_path = run_dir.join(LAT_FILE);
    let dim = {
        let header = fs::read_to_string(&lat_path)?.lines().next().unwrap_or("").to_string();
        if header.contains(",z,") {
            3
        } else {
            2
        }
    };
    let (positions, lat) = read_lat(&lat_path, dim)?;
    let map = ActivationMap { lat, threshold };
    let mut cv = Vec::new();
    for axis in 0..dim {
        let (a, b) = cv_probe_nodes(&positions, dim, axis, 0.25, 0.75)?;
        match compute_cv(&map, &positions, a, b) {
            Ok(v) => cv.push(CvRow {
                axis,
                from_node: a,
                to_node: b,
                distance_cm: (positions[b] - positions[a]).norm(),
                cv_cm_per_ms: v,
            }),
            Err(e) => warn!("no conduction velocity along axis {axis}: {e}"),
        }
    }

    let mut s = String::from("probe,lat_ms,apd90_ms\n");
    for r in &probes {
        let _ = writeln!(s, "{},{},{}", r.probe, r.lat_ms, r.apd90_ms);
    }
    fs::write(run_dir.join(PROBE_METRICS_FILE), s)?;
    let mut s = String::from("axis,from_node,to_node,distance_cm,cv_cm_per_ms\n");
    for r in &cv {
        let _ = writeln!(s, "{},{},{},{},{}", r.axis, r.from_node, r.to_node, r.distance_cm, r.cv_cm_per_ms);
    }
    fs::write(run_dir.join(CV_FILE), s)?;
    Ok(PostReport { probes, cv })
}
