//! Per-frame orchestration: registration, FoV filter, accumulation,
//! segmentation against the previous terrain snapshot, control-point update
//! and altitude command.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::geometry::{PoseTrack, RigidTransform, Vec3};
use crate::par::Execution;
use crate::preprocess::{fov_filter, partition, register_frame, AccumulationWindow, CellIndex, GridPartition};
use crate::segment::{segment_frame_with, FrameSegmentation, SegParams};
use crate::sim::RadarScanFrame;
use crate::terrain::{
    altitude_command, fit_surface, incremental_update, make_control_points, AltitudeCommand, ControlLattice,
    TerrainSurface, UpdateParams,
};

#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub frame_index: u64,
    pub reference_time: f64,
    pub uav_position: Vec3,
    pub partition: GridPartition,
    /// Points of this frame are `partition.points[current..]`.
    pub current: usize,
    pub segmentation: FrameSegmentation,
    pub seg_latency: Duration,
    pub changed: BTreeSet<CellIndex>,
    /// `None` until the first surface exists.
    pub command: Option<AltitudeCommand>,
}

impl FrameOutput {
    /// Predicted ground mask and labels for this frame's own points; points
    /// without labels are skipped.
    pub fn current_masks(&self) -> (Vec<bool>, Vec<bool>) {
        let mask = self.segmentation.mask(self.partition.points.len());
        let mut pred = Vec::new();
        let mut labels = Vec::new();
        for i in self.current..self.partition.points.len() {
            if let Some(l) = self.partition.points[i].label {
                pred.push(mask[i]);
                labels.push(l);
            }
        }
        (pred, labels)
    }
}

pub struct Pipeline {
    config: PipelineConfig,
    seg: SegParams,
    update: UpdateParams,
    mount: RigidTransform,
    mode: Execution,
    window: AccumulationWindow,
    lattice: ControlLattice,
    surface: Option<Arc<TerrainSurface>>,
}

impl Pipeline {
    pub fn new(config: &PipelineConfig, mount: RigidTransform) -> Self {
        Self {
            seg: config.seg_params(),
            update: config.update_params(),
            mount,
            mode: Execution::default(),
            window: AccumulationWindow::new(config.window_frames),
            lattice: ControlLattice::new(config.grid_resolution),
            surface: None,
            config: config.clone(),
        }
    }

    pub fn with_execution(mut self, mode: Execution) -> Self {
        self.mode = mode;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn lattice(&self) -> &ControlLattice {
        &self.lattice
    }

    /// Latest immutable surface snapshot.
    pub fn surface(&self) -> Option<Arc<TerrainSurface>> {
        self.surface.clone()
    }

    pub fn process(&mut self, frame: &RadarScanFrame, track: &PoseTrack) -> Result<FrameOutput, PipelineError> {
        let registered = register_frame(frame, track, &self.mount, self.config.max_registration_failure)?;
        let filtered = fov_filter(&registered, self.config.fov());
        let n_current = filtered.points.len();
        let (frame_index, reference_time, uav) = (filtered.frame_index, filtered.reference_time, filtered.uav_position);
        let accumulated = self.window.accumulate(filtered);
        let current = accumulated.len() - n_current;
        let part = partition(accumulated, self.config.grid_resolution);

        let prior = self.surface.clone();
        let t0 = Instant::now();
        let segmentation = segment_frame_with(&part, &prior.as_deref(), &self.seg, self.mode);
        let seg_latency = t0.elapsed();

        let heights = segmentation.ground_heights(&part);
        let controls = make_control_points(&heights, self.config.grid_resolution, self.update.rho, frame_index);
        let changed = incremental_update(&mut self.lattice, &controls, self.update.tau_c);
        if !changed.is_empty() {
            let s = fit_surface(&self.lattice, self.config.degree_x, self.config.degree_y)?;
            self.surface = Some(Arc::new(s));
        }
        let command = self
            .surface
            .as_ref()
            .map(|s| altitude_command(s, uav.x, uav.y, self.config.h_ref));

        Ok(FrameOutput {
            frame_index,
            reference_time,
            uav_position: uav,
            partition: part,
            current,
            segmentation,
            seg_latency,
            changed,
            command,
        })
    }
}
