//! Pose-aware registration, downward FoV cone, short-window accumulation and
//! XY grid partitioning.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{GeometryError, PipelineError};
use crate::geometry::{radar_to_world, PoseTrack, RigidTransform, Vec3};
use crate::sim::RadarScanFrame;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegisteredPoint {
    pub position: Vec3,
    pub label: Option<bool>,
    pub source_frame: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegisteredFrame {
    pub frame_index: u64,
    pub points: Vec<RegisteredPoint>,
    /// Body position at the frame midpoint.
    pub uav_position: Vec3,
    /// Frame midpoint timestamp.
    pub reference_time: f64,
}

/// Maps every return to the world frame using the pose at its own timestamp.
///
/// Returns whose pose lookup fails are skipped; the frame fails when more than
/// `max_failure_fraction` of them do.
pub fn register_frame(
    frame: &RadarScanFrame,
    track: &PoseTrack,
    mount: &RigidTransform,
    max_failure_fraction: f64,
) -> Result<RegisteredFrame, PipelineError> {
    let reference_time = 0.5 * (frame.t_start + frame.t_end);
    let registration_error = |failed, first| PipelineError::Registration {
        frame: frame.frame_index,
        failed,
        total: frame.returns.len(),
        first,
    };
    let uav_position = track
        .position_at(reference_time)
        .map_err(|e| registration_error(frame.returns.len(), e))?;

    let mut points = Vec::with_capacity(frame.returns.len());
    let mut failed = 0usize;
    let mut first_err: Option<GeometryError> = None;
    for r in &frame.returns {
        match track.pose_at(r.timestamp) {
            Ok(pose) => points.push(RegisteredPoint {
                position: radar_to_world(&r.point_radar, r.theta, mount, &pose),
                label: Some(r.is_ground),
                source_frame: frame.frame_index,
            }),
            Err(e) => {
                failed += 1;
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(first) = first_err {
        if failed as f64 > max_failure_fraction * frame.returns.len() as f64 {
            return Err(registration_error(failed, first));
        }
    }
    Ok(RegisteredFrame {
        frame_index: frame.frame_index,
        points,
        uav_position,
        reference_time,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FovParams {
    /// Cone half-angle around straight down, radians in `(0, π/2]`.
    pub phi: f64,
}

impl Default for FovParams {
    fn default() -> Self {
        Self {
            phi: 60f64.to_radians(),
        }
    }
}

/// Cone membership test `-r_z / |r| >= cos φ` for `r = point - uav`.
#[inline]
pub fn in_fov(point: &Vec3, uav: &Vec3, cos_phi: f64) -> bool {
    let r = point - uav;
    let n = r.norm();
    n > 0.0 && -r.z / n >= cos_phi
}

pub fn fov_filter(frame: &RegisteredFrame, params: FovParams) -> RegisteredFrame {
    let cos_phi = params.phi.cos();
    RegisteredFrame {
        points: frame
            .points
            .iter()
            .filter(|p| in_fov(&p.position, &frame.uav_position, cos_phi))
            .copied()
            .collect(),
        ..frame.clone()
    }
}

/// Ring of the last `capacity` filtered frames.
#[derive(Debug, Clone)]
pub struct AccumulationWindow {
    capacity: usize,
    frames: VecDeque<RegisteredFrame>,
}

impl AccumulationWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "accumulation window needs at least one frame");
        Self {
            capacity,
            frames: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pushes `frame` (evicting the oldest when full) and returns the union of
    /// the retained frames, oldest first.
    pub fn accumulate(&mut self, frame: RegisteredFrame) -> Vec<RegisteredPoint> {
        if self.frames.len() == self.capacity {
            self.frames.pop_front();
        }
        self.frames.push_back(frame);
        self.snapshot()
    }

    pub fn snapshot(&self) -> Vec<RegisteredPoint> {
        let n = self.frames.iter().map(|f| f.points.len()).sum();
        let mut out = Vec::with_capacity(n);
        for f in &self.frames {
            out.extend_from_slice(&f.points);
        }
        out
    }
}

/// Integer XY cell index `(⌊x/s⌋, ⌊y/s⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub u: i64,
    pub v: i64,
}

impl CellIndex {
    pub fn new(u: i64, v: i64) -> Self {
        Self { u, v }
    }

    pub fn of(x: f64, y: f64, s: f64) -> Self {
        Self {
            u: (x / s).floor() as i64,
            v: (y / s).floor() as i64,
        }
    }

    /// XY of the cell center.
    pub fn center(self, s: f64) -> (f64, f64) {
        ((self.u as f64 + 0.5) * s, (self.v as f64 + 0.5) * s)
    }
}

/// Points bucketed by XY cell; cells hold indices into `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPartition {
    pub resolution: f64,
    pub points: Vec<RegisteredPoint>,
    pub cells: BTreeMap<CellIndex, Vec<usize>>,
}

impl GridPartition {
    pub fn point_count(&self) -> usize {
        self.cells.values().map(Vec::len).sum()
    }

    pub fn cell_positions(&self, cell: &CellIndex) -> Vec<Vec3> {
        self.cells
            .get(cell)
            .map(|idx| idx.iter().map(|&i| self.points[i].position).collect())
            .unwrap_or_default()
    }
}

pub fn partition(points: Vec<RegisteredPoint>, s: f64) -> GridPartition {
    assert!(s > 0.0, "grid resolution must be positive");
    let mut cells: BTreeMap<CellIndex, Vec<usize>> = BTreeMap::new();
    for (i, p) in points.iter().enumerate() {
        cells
            .entry(CellIndex::of(p.position.x, p.position.y, s))
            .or_default()
            .push(i);
    }
    GridPartition {
        resolution: s,
        points,
        cells,
    }
}
