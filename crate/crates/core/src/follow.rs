//! Closed-loop terrain-following replay.
//!
//! The vehicle flies the scenario's horizontal path while its height tracks
//! the latest altitude command through a first-order lag. Each frame is
//! scanned from the poses actually flown, so perception errors feed back into
//! the flight path.

use crate::config::PipelineConfig;
use crate::error::{PipelineError, SimError};
use crate::geometry::{PoseSample, PoseTrack, DEFAULT_MAX_GAP};
use crate::metrics::rmse;
use crate::pipeline::Pipeline;
use crate::terrain::altitude_command;
use crate::sim::{ScenarioSpec, Scanner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowParams {
    pub h_ref: f64,
    /// Height response time constant, s.
    pub time_constant: f64,
    /// The command is taken this far ahead along the path, s of travel.
    /// Covers the response lag plus the one frame a command is held.
    pub lookahead: f64,
}

impl Default for FollowParams {
    fn default() -> Self {
        Self {
            h_ref: 3.0,
            time_constant: 0.3,
            lookahead: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub z_true_terrain: f64,
    pub z_terr: f64,
    pub z_cmd: f64,
    pub extrapolated: bool,
}

impl FollowSample {
    /// Height above the true terrain minus the reference height.
    pub fn error(&self, h_ref: f64) -> f64 {
        self.z - self.z_true_terrain - h_ref
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FollowResult {
    pub h_ref: f64,
    /// One sample per frame, at the frame midpoint. `z_terr` and `z_cmd` are
    /// taken at the look-ahead point.
    pub samples: Vec<FollowSample>,
    pub mean_error: f64,
    pub rmse: f64,
}

impl FollowResult {
    /// `t x y z z_true z_terr z_cmd extrapolated` records.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# t x y z z_true z_terr z_cmd extrapolated\n");
        for p in &self.samples {
            s.push_str(&format!(
                "{} {} {} {} {} {} {} {}\n",
                p.t,
                p.x,
                p.y,
                p.z,
                p.z_true_terrain,
                p.z_terr,
                p.z_cmd,
                u8::from(p.extrapolated)
            ));
        }
        s
    }
}

pub fn run_follow(spec: &ScenarioSpec, config: &PipelineConfig, params: FollowParams) -> Result<FollowResult, PipelineError> {
    let mut scanner = Scanner::new(spec)?;
    let frames = spec.frame_count();
    if frames == 0 {
        return Err(SimError::InvalidSpec("trajectory shorter than one frame".into()).into());
    }
    let q = spec.nominal_orientation();
    let rate = spec.radar.pose_rate;
    let dt = 1.0 / rate;
    let horizontal = |t: f64| spec.nominal_position(t);
    let tr = &spec.trajectory;
    let ahead = (tr.end - tr.start).normalize() * (tr.speed * params.lookahead);

    let p0 = horizontal(0.0);
    let mut z = spec.terrain.height(p0.x, p0.y) + params.h_ref;
    let mut z_cmd = z;
    let mut track = PoseTrack::new(
        vec![PoseSample::new(0.0, q, crate::geometry::Vec3::new(p0.x, p0.y, z))],
        DEFAULT_MAX_GAP,
    )
    .map_err(SimError::from)?;
    let mut n_samples = 0u64;
    let mut pipeline = Pipeline::new(
        &PipelineConfig {
            h_ref: params.h_ref,
            ..config.clone()
        },
        spec.mount.transform(),
    );
    let alpha = 1.0 - (-dt / params.time_constant).exp();
    let mut samples = Vec::with_capacity(frames as usize);

    for _ in 0..frames {
        let (_, t_end) = scanner.frame_times(samples.len() as u64);
        while (n_samples as f64) * dt < t_end {
            n_samples += 1;
            let t = n_samples as f64 * dt;
            z += alpha * (z_cmd - z);
            let p = horizontal(t);
            track
                .push(PoseSample::new(t, q, crate::geometry::Vec3::new(p.x, p.y, z)))
                .map_err(SimError::from)?;
        }
        let frame = scanner.scan_next(|t| track.pose_at(t)).map_err(SimError::from)?;
        let out = pipeline.process(&frame, &track)?;
        let uav = out.uav_position;
        let command = pipeline
            .surface()
            .map(|s| altitude_command(&s, uav.x + ahead.x, uav.y + ahead.y, params.h_ref));
        let (z_terr, extrapolated) = match command {
            Some(c) => {
                z_cmd = c.z_cmd;
                (c.z_terr, c.extrapolated)
            }
            None => (z_cmd - params.h_ref, true),
        };
        samples.push(FollowSample {
            t: out.reference_time,
            x: uav.x,
            y: uav.y,
            z: uav.z,
            z_true_terrain: spec.terrain.height(uav.x, uav.y),
            z_terr,
            z_cmd,
            extrapolated,
        });
    }
    let errors: Vec<f64> = samples.iter().map(|s| s.error(params.h_ref)).collect();
    let mean_error = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(FollowResult {
        h_ref: params.h_ref,
        rmse: rmse(errors.iter().copied()).unwrap_or(0.0),
        mean_error,
        samples,
    })
}
