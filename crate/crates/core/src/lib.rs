//! Terrain perception for UAV terrain following with a rotating mmWave radar.
//!
//! Radar returns are registered into the world frame with per-return poses,
//! restricted to a downward cone, accumulated over a short window and
//! partitioned into grid cells. Each cell is segmented into ground and
//! non-ground with a terrain prior taken from the previous frame's model.
//! Ground heights become control points of a tensor-product B-spline
//! heightfield that is queried for the altitude command.
//!
//! The crate also carries a deterministic scenario simulator, baseline
//! methods and a benchmark harness.

pub mod baselines;
pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod follow;
pub mod geometry;
mod io_util;
pub mod kv;
pub mod metrics;
pub mod par;
pub mod pipeline;
pub mod preprocess;
pub mod rng;
pub mod segment;
pub mod sim;
pub mod terrain;

pub use io_util::write_atomic;

pub use config::PipelineConfig;
pub use error::{ConfigError, GeometryError, IoError, PipelineError, SegError, SimError, TerrainError};
pub use geometry::{PoseTrack, RigidTransform, Vec3};
pub use pipeline::Pipeline;
pub use segment::SegParams;
pub use terrain::{fit_surface, TerrainSurface};
