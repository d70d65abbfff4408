//! Pipeline configuration as `key = value` text.
//!
//! Angles are stored and written in degrees (`*_deg` keys) so that a parsed
//! file re-emits identically.

use std::fmt;

use crate::baselines::RansacParams;
use crate::error::ConfigError;
use crate::kv;
use crate::preprocess::FovParams;
use crate::segment::SegParams;
use crate::terrain::{UpdateParams, MAX_DEGREE};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub fov_half_angle_deg: f64,
    /// K
    pub window_frames: usize,
    /// s, m
    pub grid_resolution: f64,
    pub min_points: usize,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub seed_count: usize,
    pub delta_seed: f64,
    pub plane_distance: f64,
    pub max_iterations: usize,
    pub uprightness_deg: f64,
    pub elevation_tolerance: f64,
    pub dispersion_tolerance: f64,
    pub reseg_height_gap: f64,
    pub reseg_min_points: usize,
    pub recall_margin: f64,
    pub prior_seeds: bool,
    pub refinement: bool,
    /// ρ
    pub quantile: f64,
    /// τ_c, m
    pub update_tolerance: f64,
    pub degree_x: usize,
    pub degree_y: usize,
    pub ransac_iterations: usize,
    pub ransac_seed: u64,
    pub knn_k: usize,
    /// h_ref, m
    pub h_ref: f64,
    /// Fraction of returns per frame allowed to miss the pose track.
    pub max_registration_failure: f64,
    /// Leading frames excluded from scores and timing.
    pub warmup_frames: usize,
    /// Sampling step of the dense terrain export, m.
    pub export_step: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let seg = SegParams::default();
        let upd = UpdateParams::default();
        Self {
            fov_half_angle_deg: 60.0,
            window_frames: 5,
            grid_resolution: 1.0,
            min_points: seg.min_points,
            delta_lower: seg.delta_lower,
            delta_upper: seg.delta_upper,
            seed_count: seg.seed_count,
            delta_seed: seg.delta_seed,
            plane_distance: seg.plane_distance,
            max_iterations: seg.max_iterations,
            uprightness_deg: 30.0,
            elevation_tolerance: seg.elevation_tolerance,
            dispersion_tolerance: seg.dispersion_tolerance,
            reseg_height_gap: seg.reseg_height_gap,
            reseg_min_points: seg.reseg_min_points,
            recall_margin: seg.recall_margin,
            prior_seeds: true,
            refinement: true,
            quantile: upd.rho,
            update_tolerance: upd.tau_c,
            degree_x: 3,
            degree_y: 3,
            ransac_iterations: 50,
            ransac_seed: 0,
            knn_k: 4,
            h_ref: 3.0,
            max_registration_failure: 0.1,
            warmup_frames: 5,
            export_step: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn fov(&self) -> FovParams {
        FovParams {
            phi: self.fov_half_angle_deg.to_radians(),
        }
    }

    pub fn seg_params(&self) -> SegParams {
        SegParams {
            min_points: self.min_points,
            delta_lower: self.delta_lower,
            delta_upper: self.delta_upper,
            seed_count: self.seed_count,
            delta_seed: self.delta_seed,
            plane_distance: self.plane_distance,
            max_iterations: self.max_iterations,
            uprightness_angle: self.uprightness_deg.to_radians(),
            elevation_tolerance: self.elevation_tolerance,
            dispersion_tolerance: self.dispersion_tolerance,
            reseg_height_gap: self.reseg_height_gap,
            reseg_min_points: self.reseg_min_points,
            recall_margin: self.recall_margin,
            prior_seeds: self.prior_seeds,
            refinement: self.refinement,
        }
    }

    pub fn update_params(&self) -> UpdateParams {
        UpdateParams {
            rho: self.quantile,
            tau_c: self.update_tolerance,
        }
    }

    /// RANSAC shares the plane-distance threshold and grid with the proposed
    /// method.
    pub fn ransac(&self) -> RansacParams {
        RansacParams {
            iterations: self.ransac_iterations,
            distance_threshold: self.plane_distance,
            patch_resolution: self.grid_resolution,
            seed: self.ransac_seed,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |key: &str, why: &str| Err(ConfigError::Invalid(format!("{key}: {why}")));
        let positive = [
            ("grid_resolution", self.grid_resolution),
            ("delta_lower", self.delta_lower),
            ("delta_upper", self.delta_upper),
            ("delta_seed", self.delta_seed),
            ("plane_distance", self.plane_distance),
            ("elevation_tolerance", self.elevation_tolerance),
            ("dispersion_tolerance", self.dispersion_tolerance),
            ("reseg_height_gap", self.reseg_height_gap),
            ("recall_margin", self.recall_margin),
            ("h_ref", self.h_ref),
            ("export_step", self.export_step),
        ];
        for (key, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return fail(key, "must be a positive finite number");
            }
        }
        let counts = [
            ("window_frames", self.window_frames),
            ("min_points", self.min_points),
            ("seed_count", self.seed_count),
            ("max_iterations", self.max_iterations),
            ("reseg_min_points", self.reseg_min_points),
            ("ransac_iterations", self.ransac_iterations),
            ("knn_k", self.knn_k),
        ];
        for (key, v) in counts {
            if v < 1 {
                return fail(key, "must be at least 1");
            }
        }
        if !(self.fov_half_angle_deg > 0.0 && self.fov_half_angle_deg <= 90.0) {
            return fail("fov_half_angle_deg", "must lie in (0, 90]");
        }
        if !(self.uprightness_deg > 0.0 && self.uprightness_deg < 90.0) {
            return fail("uprightness_deg", "must lie in (0, 90)");
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return fail("quantile", "must lie in (0, 1)");
        }
        if !(self.update_tolerance.is_finite() && self.update_tolerance >= 0.0) {
            return fail("update_tolerance", "must be a non-negative finite number");
        }
        if self.degree_x > MAX_DEGREE || self.degree_y > MAX_DEGREE {
            return fail("degree_x/degree_y", "must not exceed 7");
        }
        if !(0.0..=1.0).contains(&self.max_registration_failure) {
            return fail("max_registration_failure", "must lie in [0, 1]");
        }
        Ok(())
    }

    /// Applies `text` over `self`; the result is validated.
    pub fn merge_text(&self, text: &str, source_name: &str) -> Result<Self, ConfigError> {
        let mut c = self.clone();
        for e in kv::parse_entries(text, source_name)? {
            let src = source_name;
            match e.key.as_str() {
                "fov_half_angle_deg" => c.fov_half_angle_deg = e.parse(src)?,
                "window_frames" => c.window_frames = e.parse(src)?,
                "grid_resolution" => c.grid_resolution = e.parse(src)?,
                "min_points" => c.min_points = e.parse(src)?,
                "delta_lower" => c.delta_lower = e.parse(src)?,
                "delta_upper" => c.delta_upper = e.parse(src)?,
                "seed_count" => c.seed_count = e.parse(src)?,
                "delta_seed" => c.delta_seed = e.parse(src)?,
                "plane_distance" => c.plane_distance = e.parse(src)?,
                "max_iterations" => c.max_iterations = e.parse(src)?,
                "uprightness_deg" => c.uprightness_deg = e.parse(src)?,
                "elevation_tolerance" => c.elevation_tolerance = e.parse(src)?,
                "dispersion_tolerance" => c.dispersion_tolerance = e.parse(src)?,
                "reseg_height_gap" => c.reseg_height_gap = e.parse(src)?,
                "reseg_min_points" => c.reseg_min_points = e.parse(src)?,
                "recall_margin" => c.recall_margin = e.parse(src)?,
                "prior_seeds" => c.prior_seeds = e.parse_bool(src)?,
                "refinement" => c.refinement = e.parse_bool(src)?,
                "quantile" => c.quantile = e.parse(src)?,
                "update_tolerance" => c.update_tolerance = e.parse(src)?,
                "degree_x" => c.degree_x = e.parse(src)?,
                "degree_y" => c.degree_y = e.parse(src)?,
                "ransac_iterations" => c.ransac_iterations = e.parse(src)?,
                "ransac_seed" => c.ransac_seed = e.parse(src)?,
                "knn_k" => c.knn_k = e.parse(src)?,
                "h_ref" => c.h_ref = e.parse(src)?,
                "max_registration_failure" => c.max_registration_failure = e.parse(src)?,
                "warmup_frames" => c.warmup_frames = e.parse(src)?,
                "export_step" => c.export_step = e.parse(src)?,
                _ => return Err(e.unknown(src)),
            }
        }
        c.validate()
            .map_err(|e| ConfigError::Invalid(format!("{source_name}: {e}")))?;
        Ok(c)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self, ConfigError> {
        Self::default().merge_text(text, source_name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        kv::push(&mut s, "fov_half_angle_deg", self.fov_half_angle_deg);
        kv::push(&mut s, "window_frames", self.window_frames);
        kv::push(&mut s, "grid_resolution", self.grid_resolution);
        kv::push(&mut s, "min_points", self.min_points);
        kv::push(&mut s, "delta_lower", self.delta_lower);
        kv::push(&mut s, "delta_upper", self.delta_upper);
        kv::push(&mut s, "seed_count", self.seed_count);
        kv::push(&mut s, "delta_seed", self.delta_seed);
        kv::push(&mut s, "plane_distance", self.plane_distance);
        kv::push(&mut s, "max_iterations", self.max_iterations);
        kv::push(&mut s, "uprightness_deg", self.uprightness_deg);
        kv::push(&mut s, "elevation_tolerance", self.elevation_tolerance);
        kv::push(&mut s, "dispersion_tolerance", self.dispersion_tolerance);
        kv::push(&mut s, "reseg_height_gap", self.reseg_height_gap);
        kv::push(&mut s, "reseg_min_points", self.reseg_min_points);
        kv::push(&mut s, "recall_margin", self.recall_margin);
        kv::push(&mut s, "prior_seeds", self.prior_seeds);
        kv::push(&mut s, "refinement", self.refinement);
        kv::push(&mut s, "quantile", self.quantile);
        kv::push(&mut s, "update_tolerance", self.update_tolerance);
        kv::push(&mut s, "degree_x", self.degree_x);
        kv::push(&mut s, "degree_y", self.degree_y);
        kv::push(&mut s, "ransac_iterations", self.ransac_iterations);
        kv::push(&mut s, "ransac_seed", self.ransac_seed);
        kv::push(&mut s, "knn_k", self.knn_k);
        kv::push(&mut s, "h_ref", self.h_ref);
        kv::push(&mut s, "max_registration_failure", self.max_registration_failure);
        kv::push(&mut s, "warmup_frames", self.warmup_frames);
        kv::push(&mut s, "export_step", self.export_step);
        s
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}
