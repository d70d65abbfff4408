//! Deterministic rotating-radar scenario generator.
//!
//! A scenario is a straight-line flight over an analytic terrain. The radar
//! makes one revolution per frame, firing `beams_per_step` beams at every
//! encoder step. Ground returns are exact ray/terrain intersections plus
//! Gaussian range noise; clutter (vegetation above the surface, multipath
//! below it) is drawn with Poisson counts per frame. Everything is a pure
//! function of the [`ScenarioSpec`] and its seed.

use std::f64::consts::TAU;
use std::fmt;

use nalgebra::UnitQuaternion;

use crate::error::{ConfigError, GeometryError, SimError};
use crate::geometry::{radar_chain, EncoderAngle, PoseSample, PoseTrack, RigidTransform, Vec3};
use crate::kv;
use crate::rng::SimRng;

/// Analytic terrain height field `h(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum TerrainField {
    Flat { c: f64 },
    /// `a·x + b·y + c`
    Slope { a: f64, b: f64, c: f64 },
    /// `amplitude·sin(2πx/λ)·sin(2πy/λ) + c`
    Hill {
        amplitude: f64,
        wavelength: f64,
        c: f64,
    },
    /// Smooth drop of `drop` meters across `x ∈ [x0, x0 + width]` (cubic
    /// smoothstep), level on either side.
    Bank { x0: f64, width: f64, drop: f64 },
    /// Sum of the parts.
    Composite(Vec<TerrainField>),
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

impl TerrainField {
    pub fn height(&self, x: f64, y: f64) -> f64 {
        match self {
            TerrainField::Flat { c } => *c,
            TerrainField::Slope { a, b, c } => a * x + b * y + c,
            TerrainField::Hill {
                amplitude,
                wavelength,
                c,
            } => {
                let k = TAU / wavelength;
                amplitude * (k * x).sin() * (k * y).sin() + c
            }
            TerrainField::Bank { x0, width, drop } => -drop * smoothstep((x - x0) / width),
            TerrainField::Composite(parts) => parts.iter().map(|p| p.height(x, y)).sum(),
        }
    }

    /// Upper bound on `|∂h/∂x|` and `|∂h/∂y|`.
    pub fn gradient_bound(&self) -> (f64, f64) {
        match self {
            TerrainField::Flat { .. } => (0.0, 0.0),
            TerrainField::Slope { a, b, .. } => (a.abs(), b.abs()),
            TerrainField::Hill {
                amplitude,
                wavelength,
                ..
            } => {
                let g = amplitude.abs() * TAU / wavelength;
                (g, g)
            }
            TerrainField::Bank { width, drop, .. } => (1.5 * drop.abs() / width, 0.0),
            TerrainField::Composite(parts) => parts.iter().fold((0.0, 0.0), |acc, p| {
                let g = p.gradient_bound();
                (acc.0 + g.0, acc.1 + g.1)
            }),
        }
    }

    /// `(a, b, c)` when the field is exactly the plane `a·x + b·y + c`.
    pub fn as_plane(&self) -> Option<(f64, f64, f64)> {
        match self {
            TerrainField::Flat { c } => Some((0.0, 0.0, *c)),
            TerrainField::Slope { a, b, c } => Some((*a, *b, *c)),
            TerrainField::Hill { .. } | TerrainField::Bank { .. } => None,
            TerrainField::Composite(parts) => parts.iter().try_fold((0.0, 0.0, 0.0), |acc, p| {
                let (a, b, c) = p.as_plane()?;
                Some((acc.0 + a, acc.1 + b, acc.2 + c))
            }),
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if let TerrainField::Hill { wavelength, .. } = self {
            if !(*wavelength > 0.0) {
                return Err(SimError::InvalidSpec("hill wavelength must be > 0".into()));
            }
        }
        if let TerrainField::Bank { width, .. } = self {
            if !(*width > 0.0) {
                return Err(SimError::InvalidSpec("bank width must be > 0".into()));
            }
        }
        if let TerrainField::Composite(parts) = self {
            if parts.is_empty() {
                return Err(SimError::InvalidSpec("empty composite terrain".into()));
            }
            for p in parts {
                p.validate()?;
            }
        }
        let (gx, gy) = self.gradient_bound();
        if gx > 2.0 || gy > 2.0 {
            return Err(SimError::InvalidSpec(format!(
                "terrain gradient bound ({gx}, {gy}) exceeds 2"
            )));
        }
        Ok(())
    }

    fn parse_term(text: &str) -> Option<TerrainField> {
        let mut it = text.split_ascii_whitespace();
        let kind = it.next()?;
        let nums: Vec<f64> = it.map(|s| s.parse().ok()).collect::<Option<_>>()?;
        match (kind, nums.as_slice()) {
            ("flat", [c]) => Some(TerrainField::Flat { c: *c }),
            ("slope", [a, b, c]) => Some(TerrainField::Slope {
                a: *a,
                b: *b,
                c: *c,
            }),
            ("hill", [amplitude, wavelength, c]) => Some(TerrainField::Hill {
                amplitude: *amplitude,
                wavelength: *wavelength,
                c: *c,
            }),
            ("bank", [x0, width, drop]) => Some(TerrainField::Bank {
                x0: *x0,
                width: *width,
                drop: *drop,
            }),
            _ => None,
        }
    }
}

pub fn terrain_height(field: &TerrainField, x: f64, y: f64) -> f64 {
    field.height(x, y)
}

impl fmt::Display for TerrainField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerrainField::Flat { c } => write!(f, "flat {c}"),
            TerrainField::Slope { a, b, c } => write!(f, "slope {a} {b} {c}"),
            TerrainField::Hill {
                amplitude,
                wavelength,
                c,
            } => write!(f, "hill {amplitude} {wavelength} {c}"),
            TerrainField::Bank { x0, width, drop } => write!(f, "bank {x0} {width} {drop}"),
            TerrainField::Composite(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::str::FromStr for TerrainField {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let terms: Vec<&str> = s.split(" + ").collect();
        let parsed: Option<Vec<TerrainField>> =
            terms.iter().map(|t| TerrainField::parse_term(t.trim())).collect();
        let Some(mut parsed) = parsed else {
            return Err(format!("cannot parse terrain {s:?}"));
        };
        if parsed.len() == 1 {
            Ok(parsed.remove(0))
        } else {
            Ok(TerrainField::Composite(parsed))
        }
    }
}

/// Axis-aligned water surface. Direct returns from it are weak (each is kept
/// with `direct_return_probability`) and multipath only forms over it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaterBody {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub direct_return_probability: f64,
}

impl WaterBody {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClutterModel {
    /// Expected vegetation returns per frame.
    pub vegetation_rate: f64,
    /// Height above the local surface, meters.
    pub vegetation_height: (f64, f64),
    /// Expected multipath returns per frame.
    pub multipath_rate: f64,
    /// Depth below the local surface, meters.
    pub multipath_depth: (f64, f64),
    /// Multipath only forms on rays arriving within this angle of the
    /// vertical, rad. Specular surfaces return little at oblique incidence.
    pub multipath_max_incidence: f64,
    pub range_noise_sigma: f64,
    /// Without a water body multipath may appear anywhere.
    pub water: Option<WaterBody>,
}

impl ClutterModel {
    pub fn none() -> Self {
        Self {
            vegetation_rate: 0.0,
            vegetation_height: (0.3, 1.5),
            multipath_rate: 0.0,
            multipath_depth: (0.5, 3.0),
            multipath_max_incidence: std::f64::consts::FRAC_PI_2,
            range_noise_sigma: 0.0,
            water: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AltitudeMode {
    /// Hold `start.z`.
    ConstantZ,
    /// Hold a fixed height above the true terrain.
    ConstantAgl(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: Vec3,
    pub end: Vec3,
    pub speed: f64,
    pub altitude: AltitudeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    pub angular_step: f64,
    pub beams_per_step: u32,
    pub beam_cone_half_angle: f64,
    /// Boresight angle away from the radar -z axis, toward radar +x.
    pub boresight_tilt: f64,
    pub max_range: f64,
    pub frame_rate: f64,
    pub pose_rate: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            angular_step: 5f64.to_radians(),
            beams_per_step: 8,
            beam_cone_half_angle: 15f64.to_radians(),
            boresight_tilt: 30f64.to_radians(),
            max_range: 60.0,
            frame_rate: 10.0,
            pose_rate: 400.0,
        }
    }
}

impl RadarConfig {
    pub fn steps_per_revolution(&self) -> u32 {
        (TAU / self.angular_step).round() as u32
    }
}

/// Motor-to-body mounting, stored as roll/pitch/yaw (radians) plus offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mount {
    pub rpy: [f64; 3],
    pub translation: Vec3,
}

impl Default for Mount {
    fn default() -> Self {
        Self {
            rpy: [0.0; 3],
            translation: Vec3::zeros(),
        }
    }
}

impl Mount {
    pub fn transform(&self) -> RigidTransform {
        let q = UnitQuaternion::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]);
        RigidTransform::from_quaternion(&q, self.translation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub terrain: TerrainField,
    pub clutter: ClutterModel,
    pub trajectory: Trajectory,
    pub radar: RadarConfig,
    pub mount: Mount,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarReturn {
    pub timestamp: f64,
    pub theta: EncoderAngle,
    pub point_radar: Vec3,
    pub is_ground: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadarScanFrame {
    pub frame_index: u64,
    pub t_start: f64,
    pub t_end: f64,
    pub returns: Vec<RadarReturn>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidSpec(m.to_string()));
        self.terrain.validate()?;
        let c = &self.clutter;
        if !(c.vegetation_rate >= 0.0 && c.multipath_rate >= 0.0) {
            return bad("clutter rates must be >= 0");
        }
        if !(c.range_noise_sigma >= 0.0) {
            return bad("range noise sigma must be >= 0");
        }
        if !(c.vegetation_height.0 >= 0.0 && c.vegetation_height.1 >= c.vegetation_height.0) {
            return bad("vegetation height range must be ordered and >= 0");
        }
        if !(c.multipath_depth.0 > 0.0 && c.multipath_depth.1 >= c.multipath_depth.0) {
            return bad("multipath depth range must be ordered and > 0");
        }
        if !(c.multipath_max_incidence > 0.0 && c.multipath_max_incidence <= std::f64::consts::FRAC_PI_2) {
            return bad("multipath max incidence must be in (0, pi/2]");
        }
        if let Some(w) = &c.water {
            if !(w.x_min <= w.x_max && w.y_min <= w.y_max) {
                return bad("water region bounds must be ordered");
            }
            if !(0.0..=1.0).contains(&w.direct_return_probability) {
                return bad("water direct return probability must be in [0, 1]");
            }
        }
        let t = &self.trajectory;
        if !(t.speed > 0.0) {
            return bad("speed must be > 0");
        }
        if (t.end - t.start).norm() == 0.0 {
            return bad("trajectory start and end coincide");
        }
        if let AltitudeMode::ConstantAgl(h) = t.altitude {
            if !(h > 0.0) {
                return bad("AGL height must be > 0");
            }
        }
        let r = &self.radar;
        if !(r.angular_step > 0.0) {
            return bad("angular step must be > 0");
        }
        let steps = TAU / r.angular_step;
        if (steps - steps.round()).abs() * r.angular_step > 1e-9 {
            return bad("angular step must divide 2π");
        }
        if r.beams_per_step == 0 {
            return bad("beams_per_step must be >= 1");
        }
        if !(r.beam_cone_half_angle >= 0.0 && r.beam_cone_half_angle < std::f64::consts::FRAC_PI_2) {
            return bad("beam cone half-angle must be in [0, π/2)");
        }
        if !(r.max_range > 0.0 && r.frame_rate > 0.0 && r.pose_rate > r.frame_rate) {
            return bad("max_range, frame_rate must be > 0 and pose_rate > frame_rate");
        }
        Ok(())
    }

    /// Number of full frames that fit in the flight.
    pub fn frame_count(&self) -> u64 {
        let t = &self.trajectory;
        let duration = (t.end - t.start).norm() / t.speed;
        (duration * self.radar.frame_rate + 1e-9).floor() as u64
    }

    /// Body position on the nominal trajectory at time `t`.
    pub fn nominal_position(&self, t: f64) -> Vec3 {
        let tr = &self.trajectory;
        let dir = (tr.end - tr.start).normalize();
        let mut p = tr.start + dir * (tr.speed * t);
        p.z = match tr.altitude {
            AltitudeMode::ConstantZ => tr.start.z,
            AltitudeMode::ConstantAgl(h) => self.terrain.height(p.x, p.y) + h,
        };
        p
    }

    /// Level attitude with yaw along the direction of travel.
    pub fn nominal_orientation(&self) -> UnitQuaternion<f64> {
        let d = self.trajectory.end - self.trajectory.start;
        UnitQuaternion::from_euler_angles(0.0, 0.0, d.y.atan2(d.x))
    }
}

/// Pose track and frames of a generated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub track: PoseTrack,
    pub frames: Vec<RadarScanFrame>,
}

/// Ray-casts radar beams against the terrain, one frame at a time.
#[derive(Debug, Clone)]
pub struct Scanner {
    spec: ScenarioSpec,
    mount: RigidTransform,
    rng: SimRng,
    next_frame: u64,
}

impl Scanner {
    pub fn new(spec: &ScenarioSpec) -> Result<Self, SimError> {
        spec.validate()?;
        Ok(Self {
            mount: spec.mount.transform(),
            rng: SimRng::new(spec.seed),
            spec: spec.clone(),
            next_frame: 0,
        })
    }

    pub fn frame_times(&self, index: u64) -> (f64, f64) {
        let rate = self.spec.radar.frame_rate;
        (index as f64 / rate, (index + 1) as f64 / rate)
    }

    /// Scans the next frame; `pose` supplies the body-to-world pose at any
    /// time inside the frame.
    pub fn scan_next<F>(&mut self, mut pose: F) -> Result<RadarScanFrame, GeometryError>
    where
        F: FnMut(f64) -> Result<RigidTransform, GeometryError>,
    {
        let index = self.next_frame;
        self.next_frame += 1;
        let (t_start, t_end) = self.frame_times(index);
        let radar = &self.spec.radar;
        let steps = radar.steps_per_revolution();
        let dt = (t_end - t_start) / steps as f64;

        let mut chains = Vec::with_capacity(steps as usize);
        let mut buckets: Vec<Vec<RadarReturn>> = vec![Vec::new(); steps as usize];
        for j in 0..steps {
            let t = t_start + j as f64 * dt;
            let theta = EncoderAngle::from_step(j, radar.angular_step);
            let chain = radar_chain(theta, &self.mount, &pose(t)?);
            chains.push((t, theta, chain));
        }

        let sigma = self.spec.clutter.range_noise_sigma;
        for (j, (t, theta, chain)) in chains.iter().enumerate() {
            for _ in 0..radar.beams_per_step {
                let d = sample_beam(&mut self.rng, radar);
                let dir = chain.transform_vector(&d);
                if let Some(r) = intersect(&self.spec.terrain, &chain.translation, &dir, radar.max_range) {
                    if let Some(w) = &self.spec.clutter.water {
                        let hit = chain.translation + dir * r;
                        if w.contains(hit.x, hit.y) && self.rng.uniform() >= w.direct_return_probability {
                            continue;
                        }
                    }
                    let noisy = if sigma > 0.0 { r + sigma * self.rng.normal() } else { r };
                    buckets[j].push(RadarReturn {
                        timestamp: *t,
                        theta: *theta,
                        point_radar: d * noisy,
                        is_ground: true,
                    });
                }
            }
        }

        let clutter = self.spec.clutter.clone();
        let n_veg = self.rng.poisson(clutter.vegetation_rate);
        let n_mp = self.rng.poisson(clutter.multipath_rate);
        for (count, range, sign) in [
            (n_veg, clutter.vegetation_height, 1.0),
            (n_mp, clutter.multipath_depth, -1.0),
        ] {
            let is_multipath = sign < 0.0;
            for _ in 0..count {
                let j = self.rng.index(steps as usize);
                let (t, theta, chain) = &chains[j];
                let d = sample_beam(&mut self.rng, radar);
                let offset = self.rng.uniform_in(range.0, range.1);
                let dir = chain.transform_vector(&d);
                if is_multipath && (-dir.z).acos() > clutter.multipath_max_incidence {
                    continue;
                }
                let Some(r) = intersect(&self.spec.terrain, &chain.translation, &dir, radar.max_range) else {
                    continue;
                };
                let mut world = chain.translation + dir * r;
                if let Some(w) = &clutter.water {
                    if is_multipath && !w.contains(world.x, world.y) {
                        continue;
                    }
                }
                world.z += sign * offset;
                buckets[j].push(RadarReturn {
                    timestamp: *t,
                    theta: *theta,
                    point_radar: chain.inverse().transform_point(&world),
                    is_ground: false,
                });
            }
        }

        Ok(RadarScanFrame {
            frame_index: index,
            t_start,
            t_end,
            returns: buckets.into_iter().flatten().collect(),
        })
    }
}

/// Uniform direction inside the beam cone around the tilted boresight, in
/// the radar frame.
fn sample_beam(rng: &mut SimRng, radar: &RadarConfig) -> Vec3 {
    let (st, ct) = radar.boresight_tilt.sin_cos();
    let bore = Vec3::new(st, 0.0, -ct);
    let e1 = Vec3::new(ct, 0.0, st);
    let e2 = Vec3::y();
    let cos_a = 1.0 - rng.uniform() * (1.0 - radar.beam_cone_half_angle.cos());
    let sin_a = (1.0 - cos_a * cos_a).max(0.0).sqrt();
    let beta = TAU * rng.uniform();
    (bore * cos_a + (e1 * beta.cos() + e2 * beta.sin()) * sin_a).normalize()
}

/// Range along the unit ray `origin + r·dir` to the first terrain crossing.
pub fn intersect(field: &TerrainField, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
    let f = |r: f64| {
        let p = origin + dir * r;
        p.z - field.height(p.x, p.y)
    };
    if f(0.0) <= 0.0 {
        return None;
    }
    if let Some((a, b, c)) = field.as_plane() {
        let denom = dir.z - a * dir.x - b * dir.y;
        if denom >= 0.0 {
            return None;
        }
        let r = (a * origin.x + b * origin.y + c - origin.z) / denom;
        return (r > 0.0 && r <= max_range).then_some(r);
    }
    // March with steps that cannot skip a crossing given the gradient bound,
    // then bisect.
    let (gx, gy) = field.gradient_bound();
    let rate = dir.z.abs() + gx * dir.x.abs() + gy * dir.y.abs();
    if rate <= 0.0 {
        return None;
    }
    let mut lo = 0.0;
    let mut f_lo = f(0.0);
    loop {
        let hi = (lo + (f_lo / rate).max(1e-3)).min(max_range);
        let f_hi = f(hi);
        if f_hi <= 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if f(m) > 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Some(0.5 * (a + b));
        }
        if hi >= max_range {
            return None;
        }
        lo = hi;
        f_lo = f_hi;
    }
}

/// Samples the nominal pose track at `pose_rate` so that it covers every frame.
pub fn nominal_track(spec: &ScenarioSpec) -> Result<PoseTrack, SimError> {
    let frames = spec.frame_count();
    let duration = frames as f64 / spec.radar.frame_rate;
    let n = (duration * spec.radar.pose_rate).ceil() as u64 + 1;
    let q = spec.nominal_orientation();
    let samples = (0..=n)
        .map(|i| {
            let t = i as f64 / spec.radar.pose_rate;
            PoseSample::new(t, q, spec.nominal_position(t))
        })
        .collect();
    Ok(PoseTrack::new(samples, crate::geometry::DEFAULT_MAX_GAP)?)
}

pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario, SimError> {
    spec.validate()?;
    let frame_count = spec.frame_count();
    if frame_count == 0 {
        return Err(SimError::InvalidSpec("trajectory shorter than one frame".into()));
    }
    let track = nominal_track(spec)?;
    let mut scanner = Scanner::new(spec)?;
    let mut frames = Vec::with_capacity(frame_count as usize);
    for _ in 0..frame_count {
        frames.push(scanner.scan_next(|t| track.pose_at(t))?);
    }
    Ok(Scenario { track, frames })
}

// ---------------------------------------------------------------------------
// scenario.cfg


impl ScenarioSpec {
    pub fn to_cfg(&self) -> String {
        let mut s = String::new();
        let v3 = |v: &Vec3| format!("{} {} {}", v.x, v.y, v.z);
        kv::push(&mut s, "name", &self.name);
        kv::push(&mut s, "seed", self.seed);
        kv::push(&mut s, "terrain", &self.terrain);
        let c = &self.clutter;
        kv::push(&mut s, "vegetation_rate", c.vegetation_rate);
        kv::push(&mut s, "vegetation_height_min", c.vegetation_height.0);
        kv::push(&mut s, "vegetation_height_max", c.vegetation_height.1);
        kv::push(&mut s, "multipath_rate", c.multipath_rate);
        kv::push(&mut s, "multipath_depth_min", c.multipath_depth.0);
        kv::push(&mut s, "multipath_depth_max", c.multipath_depth.1);
        kv::push(&mut s, "multipath_max_incidence", c.multipath_max_incidence);
        kv::push(&mut s, "range_noise_sigma", c.range_noise_sigma);
        match &c.water {
            None => kv::push(&mut s, "water_region", "none"),
            Some(w) => {
                kv::push(&mut s, "water_region", format!("{} {} {} {}", w.x_min, w.x_max, w.y_min, w.y_max));
                kv::push(&mut s, "water_direct_probability", w.direct_return_probability);
            }
        }
        let t = &self.trajectory;
        kv::push(&mut s, "start", v3(&t.start));
        kv::push(&mut s, "end", v3(&t.end));
        kv::push(&mut s, "speed", t.speed);
        match t.altitude {
            AltitudeMode::ConstantZ => kv::push(&mut s, "altitude_mode", "constant-z"),
            AltitudeMode::ConstantAgl(h) => {
                kv::push(&mut s, "altitude_mode", "constant-agl");
                kv::push(&mut s, "agl_height", h);
            }
        }
        let r = &self.radar;
        kv::push(&mut s, "angular_step", r.angular_step);
        kv::push(&mut s, "beams_per_step", r.beams_per_step);
        kv::push(&mut s, "beam_cone_half_angle", r.beam_cone_half_angle);
        kv::push(&mut s, "boresight_tilt", r.boresight_tilt);
        kv::push(&mut s, "max_range", r.max_range);
        kv::push(&mut s, "frame_rate", r.frame_rate);
        kv::push(&mut s, "pose_rate", r.pose_rate);
        kv::push(
            &mut s,
            "mount_rpy",
            format!("{} {} {}", self.mount.rpy[0], self.mount.rpy[1], self.mount.rpy[2]),
        );
        kv::push(&mut s, "mount_translation", v3(&self.mount.translation));
        s
    }

    /// Parses `scenario.cfg` text. Keys not present keep the values of `base`.
    pub fn from_cfg(text: &str, base: &ScenarioSpec, source_name: &str) -> Result<Self, ConfigError> {
        let mut spec = base.clone();
        let mut agl: Option<f64> = match base.trajectory.altitude {
            AltitudeMode::ConstantAgl(h) => Some(h),
            AltitudeMode::ConstantZ => None,
        };
        let mut mode_agl = agl.is_some();
        let mut water_region: Option<[f64; 4]> = base
            .clutter
            .water
            .map(|w| [w.x_min, w.x_max, w.y_min, w.y_max]);
        let mut water_p = base.clutter.water.map_or(1.0, |w| w.direct_return_probability);
        for e in kv::parse_entries(text, source_name)? {
            let src = source_name;
            match e.key.as_str() {
                "name" => spec.name = e.value.clone(),
                "seed" => spec.seed = e.parse(src)?,
                "terrain" => spec.terrain = e.parse(src)?,
                "vegetation_rate" => spec.clutter.vegetation_rate = e.parse(src)?,
                "vegetation_height_min" => spec.clutter.vegetation_height.0 = e.parse(src)?,
                "vegetation_height_max" => spec.clutter.vegetation_height.1 = e.parse(src)?,
                "multipath_rate" => spec.clutter.multipath_rate = e.parse(src)?,
                "multipath_depth_min" => spec.clutter.multipath_depth.0 = e.parse(src)?,
                "multipath_depth_max" => spec.clutter.multipath_depth.1 = e.parse(src)?,
                "multipath_max_incidence" => spec.clutter.multipath_max_incidence = e.parse(src)?,
                "range_noise_sigma" => spec.clutter.range_noise_sigma = e.parse(src)?,
                "water_region" => {
                    water_region = if e.value == "none" {
                        None
                    } else {
                        Some(crate::io_util::parse_floats::<4>(&e.value).ok_or_else(|| {
                            e.bad(src, "expected none or four numbers x_min x_max y_min y_max")
                        })?)
                    }
                }
                "water_direct_probability" => water_p = e.parse(src)?,
                "start" => spec.trajectory.start = Vec3::from(e.parse_vec3(src)?),
                "end" => spec.trajectory.end = Vec3::from(e.parse_vec3(src)?),
                "speed" => spec.trajectory.speed = e.parse(src)?,
                "altitude_mode" => {
                    mode_agl = match e.value.as_str() {
                        "constant-z" => false,
                        "constant-agl" => true,
                        _ => return Err(e.bad(src, "expected constant-z or constant-agl")),
                    }
                }
                "agl_height" => agl = Some(e.parse(src)?),
                "angular_step" => spec.radar.angular_step = e.parse(src)?,
                "beams_per_step" => spec.radar.beams_per_step = e.parse(src)?,
                "beam_cone_half_angle" => spec.radar.beam_cone_half_angle = e.parse(src)?,
                "boresight_tilt" => spec.radar.boresight_tilt = e.parse(src)?,
                "max_range" => spec.radar.max_range = e.parse(src)?,
                "frame_rate" => spec.radar.frame_rate = e.parse(src)?,
                "pose_rate" => spec.radar.pose_rate = e.parse(src)?,
                "mount_rpy" => spec.mount.rpy = e.parse_vec3(src)?,
                "mount_translation" => spec.mount.translation = Vec3::from(e.parse_vec3(src)?),
                _ => return Err(e.unknown(src)),
            }
        }
        spec.clutter.water = water_region.map(|[x_min, x_max, y_min, y_max]| WaterBody {
            x_min,
            x_max,
            y_min,
            y_max,
            direct_return_probability: water_p,
        });
        spec.trajectory.altitude = if mode_agl {
            AltitudeMode::ConstantAgl(agl.ok_or_else(|| {
                ConfigError::Invalid("altitude_mode = constant-agl requires agl_height".into())
            })?)
        } else {
            AltitudeMode::ConstantZ
        };
        spec.validate()
            .map_err(|e| ConfigError::Invalid(format!("{source_name}: {e}")))?;
        Ok(spec)
    }
}

// ---------------------------------------------------------------------------
// presets

/// The four canonical scenario families of the standard suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ScenarioKind {
    Flat,
    Slope,
    Water,
    Hill,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Flat,
        ScenarioKind::Slope,
        ScenarioKind::Water,
        ScenarioKind::Hill,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Flat => "flat",
            ScenarioKind::Slope => "slope",
            ScenarioKind::Water => "water",
            ScenarioKind::Hill => "hill",
        }
    }

    /// Flight altitudes (m) flown for each terrain type.
    pub fn altitudes(self) -> [f64; 3] {
        match self {
            ScenarioKind::Flat => [3.0, 5.0, 8.0],
            ScenarioKind::Slope => [5.0, 8.0, 10.0],
            ScenarioKind::Water => [3.0, 6.0, 10.0],
            ScenarioKind::Hill => [18.0, 20.0, 22.0],
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?} (expected flat, slope, water or hill)"))
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ScenarioSpec {
    /// Noise-free, clutter-free flight over flat ground at `altitude`.
    pub fn flat_noiseless(altitude: f64, seed: u64) -> Self {
        Self {
            name: "flat-noiseless".into(),
            terrain: TerrainField::Flat { c: 0.0 },
            clutter: ClutterModel::none(),
            trajectory: Trajectory {
                start: Vec3::new(-20.0, 0.0, altitude),
                end: Vec3::new(20.0, 0.0, altitude),
                speed: 5.0,
                altitude: AltitudeMode::ConstantZ,
            },
            radar: RadarConfig::default(),
            mount: Mount::default(),
            seed,
        }
    }

    /// Standard-suite preset: one terrain family at one flight altitude.
    pub fn preset(kind: ScenarioKind, altitude: f64, seed: u64) -> Self {
        let mut spec = Self::flat_noiseless(altitude, seed);
        spec.name = format!("{}-{}m", kind.name(), altitude);
        spec.clutter.range_noise_sigma = 0.05;
        let len = 30.0;
        match kind {
            ScenarioKind::Flat => {
                // level field with gentle micro-relief
                spec.terrain = TerrainField::Hill {
                    amplitude: 0.1,
                    wavelength: 16.0,
                    c: 0.0,
                };
                spec.clutter.vegetation_rate = 110.0;
                spec.clutter.vegetation_height = (0.3, 1.5);
            }
            ScenarioKind::Slope => {
                spec.terrain = TerrainField::Composite(vec![
                    TerrainField::Slope {
                        a: 0.2,
                        b: 0.05,
                        c: 0.0,
                    },
                    TerrainField::Hill {
                        amplitude: 0.6,
                        wavelength: 30.0,
                        c: 0.0,
                    },
                ]);
                spec.trajectory.altitude = AltitudeMode::ConstantAgl(altitude);
                spec.clutter.vegetation_rate = 80.0;
                spec.clutter.vegetation_height = (0.3, 1.2);
            }
            ScenarioKind::Water => {
                // take-off over the bank, then out over water lying 0.5 m
                // lower; water gives weaker direct returns and a shallow
                // ghost layer
                spec.terrain = TerrainField::Bank {
                    x0: -18.0,
                    width: 2.0,
                    drop: 0.5,
                };
                spec.clutter.water = Some(WaterBody {
                    x_min: -16.0,
                    x_max: 100.0,
                    y_min: -100.0,
                    y_max: 100.0,
                    direct_return_probability: 0.9,
                });
                spec.clutter.vegetation_rate = 60.0;
                spec.clutter.multipath_rate = 20.0;
                spec.clutter.multipath_depth = (0.7, 1.0);
                spec.clutter.multipath_max_incidence = 30f64.to_radians();
            }
            ScenarioKind::Hill => {
                spec.terrain = TerrainField::Composite(vec![
                    TerrainField::Hill {
                        amplitude: 2.0,
                        wavelength: 40.0,
                        c: 0.0,
                    },
                    TerrainField::Slope {
                        a: 0.05,
                        b: 0.0,
                        c: 0.0,
                    },
                ]);
                spec.trajectory.altitude = AltitudeMode::ConstantAgl(altitude);
                spec.radar.beams_per_step = 24;
                spec.radar.boresight_tilt = 20f64.to_radians();
                spec.clutter.vegetation_rate = 400.0;
                spec.clutter.vegetation_height = (0.3, 1.2);
            }
        }
        spec.trajectory.start = Vec3::new(-len, 10.0, altitude);
        spec.trajectory.end = Vec3::new(len, 10.0, altitude);
        spec
    }
}
