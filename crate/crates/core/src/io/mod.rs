//! Configuration, result files and the run/post pipeline used by the CLI.

mod config;
mod output;
mod run;

pub use config::{
    mm_to_cm, FpmConfig, GeometryConfig, OutputConfig, PhysicsConfig, ProbeConfig, RegionConfig, SimulationConfig,
    SnapshotFormat, StimulusConfig, TimeConfig, MM_PER_CM,
};
pub use output::{
    format_csv_snapshot, format_vtk, lat_header, read_csv_snapshot, read_lat, read_trace, read_vtk_snapshot,
    snapshot_file_name, trace_file_name, write_lat, write_snapshot, write_trace, TRACE_HEADER,
};
pub use run::{
    build_partition, post_process, prepare, read_fibers, run, CvRow, PostReport, Problem, ProbeRow, RunReport,
    CHECKPOINT_FILE, CONFIG_FILE, CV_FILE, LAT_FILE, PROBE_METRICS_FILE, SNAPSHOT_DIR,
};
