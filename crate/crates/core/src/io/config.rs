//! Run configuration (TOML). Lengths are given in mm and converted to cm by
//! [`mm_to_cm`] when the problem is built; data files (points, partitions,
//! fibers) are already in cm.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{FpmError, Result};
use crate::geometry::Point;
use crate::ionic::{IonicModelConfig, Region, StimulusProtocol};
use crate::sparse::CgSettings;
use crate::stepper::{DiffusionScheme, ReactionIntegrator, Splitting, TimeIntegrationPlan, MAX_SOLVER_TOLERANCE};

pub const MM_PER_CM: f64 = 10.0;

pub fn mm_to_cm(x: f64) -> f64 {
    x / MM_PER_CM
}

fn point_cm(dim: usize, mm: &[f64], what: &str) -> Result<Point> {
    if mm.len() != dim {
        return Err(FpmError::Config(format!("{what} has {} coordinates in a {dim}D run", mm.len())));
    }
    if mm.iter().any(|x| !x.is_finite()) {
        return Err(FpmError::Config(format!("{what} has non-finite coordinates")));
    }
    let mut p = Point::zeros();
    for (k, x) in mm.iter().enumerate() {
        p[k] = mm_to_cm(*x);
    }
    Ok(p)
}

/// Voxel counts, spacing (cm) and origin (cm).
pub type GridLayout = (Vec<usize>, Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Fixed-order reductions in every solver inner product.
    #[serde(default)]
    pub deterministic: bool,
    pub geometry: GeometryConfig,
    pub physics: PhysicsConfig,
    #[serde(default)]
    pub ionic: IonicModelConfig,
    #[serde(default)]
    pub fpm: FpmConfig,
    pub time: TimeConfig,
    #[serde(default, rename = "stimulus", skip_serializing_if = "Vec::is_empty")]
    pub stimuli: Vec<StimulusConfig>,
    #[serde(default, rename = "probe", skip_serializing_if = "Vec::is_empty")]
    pub probes: Vec<ProbeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative file paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeometryConfig {
    /// Voxel-centred points filling a box of `size_mm` with spacing `spacing_mm`.
    Grid {
        size_mm: Vec<f64>,
        spacing_mm: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin_mm: Option<Vec<f64>>,
    },
    /// Prebuilt partition file.
    Partition { file: PathBuf },
    /// Points clipped to a polygon by a 2D Voronoi construction.
    Voronoi { points: PathBuf, boundary: PathBuf },
}

impl GeometryConfig {
    /// Spatial dimension when it is known without reading files.
    pub fn grid_dim(&self) -> Option<usize> {
        match self {
            GeometryConfig::Grid { size_mm, .. } => Some(size_mm.len()),
            GeometryConfig::Voronoi { .. } => Some(2),
            GeometryConfig::Partition { .. } => None,
        }
    }

    /// Voxel counts, spacing and origin in cm for a grid geometry.
    pub fn grid_layout(&self) -> Result<Option<GridLayout>> {
        let GeometryConfig::Grid {
            size_mm,
            spacing_mm,
            origin_mm,
        } = self
        else {
            return Ok(None);
        };
        let dim = size_mm.len();
        if dim != 2 && dim != 3 {
            return Err(FpmError::Config(format!("grid size must have 2 or 3 entries, got {dim}")));
        }
        if !(*spacing_mm > 0.0 && spacing_mm.is_finite()) {
            return Err(FpmError::Config(format!("grid spacing must be positive, got {spacing_mm}")));
        }
        let mut counts = Vec::with_capacity(dim);
        for &s in size_mm {
            let k = (s / spacing_mm).round();
            if !(k >= 2.0) || (k * spacing_mm - s).abs() > 1e-9 * s {
                return Err(FpmError::Config(format!(
                    "grid size {s} mm is not a multiple (≥ 2) of the spacing {spacing_mm} mm"
                )));
            }
            counts.push(k as usize);
        }
        let origin = match origin_mm {
            Some(o) if o.len() != dim => {
                return Err(FpmError::Config(format!("grid origin has {} entries, size has {dim}", o.len())));
            }
            Some(o) => o.iter().map(|x| mm_to_cm(*x)).collect(),
            None => vec![0.0; dim],
        };
        Ok(Some((counts, vec![mm_to_cm(*spacing_mm); dim], origin)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsConfig {
    /// Longitudinal diffusivity, cm²/ms.
    pub d0: f64,
    /// Transverse-to-longitudinal ratio.
    pub rho: f64,
    /// Uniform fiber direction; defaults to the x axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber: Option<Vec<f64>>,
    /// One fiber vector per point, whitespace separated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fiber_file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FpmConfig {
    pub penalty: f64,
    pub lumped_mass: bool,
}

impl Default for FpmConfig {
    fn default() -> Self {
        Self {
            penalty: 1.0,
            lumped_mass: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub total: f64,
    #[serde(default)]
    pub splitting: Splitting,
    #[serde(default)]
    pub scheme: DiffusionScheme,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default)]
    pub reaction: ReactionIntegrator,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
}

fn default_dt() -> f64 {
    0.1
}

fn one() -> f64 {
    1.0
}

fn default_tolerance() -> f64 {
    1e-8
}

fn default_max_iterations() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionConfig {
    Box { min_mm: Vec<f64>, max_mm: Vec<f64> },
    Sphere { center_mm: Vec<f64>, radius_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    pub region: RegionConfig,
    /// mV/ms
    pub amplitude: f64,
    /// ms
    pub duration: f64,
    /// ms; omit for a single pulse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    #[serde(default)]
    pub start: f64,
}

impl StimulusConfig {
    pub fn to_protocol(&self, dim: usize) -> Result<StimulusProtocol> {
        let region = match &self.region {
            RegionConfig::Box { min_mm, max_mm } => Region::Box {
                min: point_cm(dim, min_mm, "stimulus box min")?,
                max: point_cm(dim, max_mm, "stimulus box max")?,
            },
            RegionConfig::Sphere { center_mm, radius_mm } => Region::Sphere {
                center: point_cm(dim, center_mm, "stimulus sphere centre")?,
                radius: mm_to_cm(*radius_mm),
            },
        };
        let p = StimulusProtocol {
            region,
            amplitude: self.amplitude,
            duration: self.duration,
            period: self.period,
            start: self.start,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub name: String,
    pub position_mm: Vec<f64>,
}

impl ProbeConfig {
    pub fn position_cm(&self, dim: usize) -> Result<Point> {
        point_cm(dim, &self.position_mm, &format!("probe {}", self.name))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnapshotFormat {
    Vtk,
    Csv,
}

impl SnapshotFormat {
    pub fn extension(self) -> &'static str {
        match self {
            SnapshotFormat::Vtk => "vtk",
            SnapshotFormat::Csv => "csv",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Probe sampling interval, ms; defaults to dt.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_interval: Option<f64>,
    /// Snapshot interval, ms; no snapshots when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshot_interval: Option<f64>,
    pub formats: Vec<SnapshotFormat>,
    /// Activation threshold, mV; defaults to the model's rest–peak midpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lat_threshold: Option<f64>,
    /// Write the final state as a checkpoint.
    pub checkpoint: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("output"),
            sample_interval: None,
            snapshot_interval: None,
            formats: vec![SnapshotFormat::Vtk],
            lat_threshold: None,
            checkpoint: true,
        }
    }
}

impl SimulationConfig {
    /// Parses TOML text; `source_name` appears in diagnostics.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let cfg: SimulationConfig = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1).unwrap_or(0);
            FpmError::Parse {
                source_name: source_name.to_string(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, parses and validates a config file, resolving relative paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| FpmError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.check_files()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| FpmError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.grid_layout()?;
        let p = &self.physics;
        if !(p.d0 > 0.0 && p.d0.is_finite()) {
            return Err(FpmError::Config(format!("physics.d0 must be positive, got {}", p.d0)));
        }
        if !(p.rho > 0.0 && p.rho <= 1.0) {
            return Err(FpmError::Config(format!("physics.rho must lie in (0, 1], got {}", p.rho)));
        }
        if p.fiber.is_some() && p.fiber_file.is_some() {
            return Err(FpmError::Config("give either physics.fiber or physics.fiber_file, not both".into()));
        }
        if let (Some(f), Some(dim)) = (&p.fiber, self.geometry.grid_dim()) {
            if f.len() != dim {
                return Err(FpmError::Config(format!("physics.fiber has {} entries in a {dim}D run", f.len())));
            }
        }
        if !(self.fpm.penalty > 0.0 && self.fpm.penalty.is_finite()) {
            return Err(FpmError::Config(format!("fpm.penalty must be positive, got {}", self.fpm.penalty)));
        }
        self.ionic.build()?;
        let plan = self.plan();
        plan.validate()?;
        if self.time.tolerance > MAX_SOLVER_TOLERANCE {
            return Err(FpmError::Config("time.tolerance must not exceed 1e-2".into()));
        }
        if let Some(dim) = self.geometry.grid_dim() {
            for s in &self.stimuli {
                s.to_protocol(dim)?;
            }
            for pr in &self.probes {
                pr.position_cm(dim)?;
            }
        }
        let mut names: Vec<&str> = self.probes.iter().map(|p| p.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(FpmError::Config(format!("probe name {} is used twice", w[0])));
        }
        if let Some(bad) = self
            .probes
            .iter()
            .find(|p| p.name.is_empty() || !p.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-'))
        {
            return Err(FpmError::Config(format!(
                "probe name '{}' must be non-empty and use only letters, digits, '_' or '-'",
                bad.name
            )));
        }
        if let Some(si) = self.output.sample_interval {
            plan.interval_steps(si)?;
        }
        if let Some(si) = self.output.snapshot_interval {
            plan.interval_steps(si)?;
        }
        Ok(())
    }

    fn check_files(&self) -> Result<()> {
        let mut files: Vec<&Path> = Vec::new();
        match &self.geometry {
            GeometryConfig::Partition { file } => files.push(file),
            GeometryConfig::Voronoi { points, boundary } => {
                files.push(points);
                files.push(boundary);
            }
            GeometryConfig::Grid { .. } => {}
        }
        if let Some(f) = &self.physics.fiber_file {
            files.push(f);
        }
        for f in files {
            let p = self.resolve(f);
            if !p.is_file() {
                return Err(FpmError::Config(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn plan(&self) -> TimeIntegrationPlan {
        let t = &self.time;
        TimeIntegrationPlan {
            dt: t.dt,
            total: t.total,
            splitting: t.splitting,
            scheme: t.scheme,
            theta: t.theta,
            reaction: t.reaction,
            solver: CgSettings {
                tolerance: t.tolerance,
                max_iterations: t.max_iterations,
                deterministic: self.deterministic,
            },
        }
    }
}
