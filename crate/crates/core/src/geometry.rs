//! Frames, rigid transforms and timestamped pose tracks.
//!
//! The world frame is right-handed and z-up. A radar return travels the chain
//! radar -> motor (encoder spin) -> body (fixed mount) -> world (UAV pose).

use std::f64::consts::TAU;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{GeometryError, IoError};

/// World-frame point or vector in meters.
pub type Vec3 = Vector3<f64>;

/// Rigid transform mapping points from a source frame into a target frame:
/// `p_target = rotation * p_source + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vec3) -> Self {
        Self {
            rotation: q.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Rotation by `angle` radians about +z.
    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(&Vec3::z(), angle)
    }

    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(*axis), angle);
        Self {
            rotation: rotation.into_inner(),
            translation: Vec3::zeros(),
        }
    }

    pub fn with_translation(mut self, translation: Vec3) -> Self {
        self.translation = translation;
        self
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Largest absolute entry of `RᵀR - I`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }

    pub fn is_rotation(&self, tol: f64) -> bool {
        self.orthonormality_error() <= tol && (self.rotation.determinant() - 1.0).abs() <= tol
    }
}

/// `a ∘ b`: applying the result equals applying `b`, then `a`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    RigidTransform {
        rotation: a.rotation * b.rotation,
        translation: a.rotation * b.translation + a.translation,
    }
}

pub fn transform_point(t: &RigidTransform, p: &Vec3) -> Vec3 {
    t.transform_point(p)
}

/// Encoder-tagged spin angle of the radar about the motor axis, in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct EncoderAngle(f64);

impl EncoderAngle {
    /// Wraps any finite angle into `[0, 2π)`.
    pub fn from_radians(theta: f64) -> Self {
        let mut t = theta.rem_euclid(TAU);
        if t >= TAU {
            t = 0.0;
        }
        Self(t)
    }

    /// Angle of the `index`-th encoder trigger for a given angular step.
    pub fn from_step(index: u32, step: f64) -> Self {
        Self::from_radians(index as f64 * step)
    }

    pub fn radians(self) -> f64 {
        self.0
    }

    /// True when the angle is an integer multiple of `step` within `tol`.
    pub fn is_quantized(self, step: f64, tol: f64) -> bool {
        let k = (self.0 / step).round();
        (self.0 - k * step).abs() <= tol
    }

    /// Radar-to-motor rotation for this angle about the motor spin axis (+z).
    pub fn spin(self) -> RigidTransform {
        RigidTransform::rot_z(self.0)
    }
}

/// Maps a radar-frame point to the world frame through the spin, mount and
/// body pose.
pub fn radar_to_world(
    p_radar: &Vec3,
    theta: EncoderAngle,
    mount: &RigidTransform,
    body_pose: &RigidTransform,
) -> Vec3 {
    radar_chain(theta, mount, body_pose).transform_point(p_radar)
}

/// Full radar-to-world transform for one encoder angle.
pub fn radar_chain(
    theta: EncoderAngle,
    mount: &RigidTransform,
    body_pose: &RigidTransform,
) -> RigidTransform {
    compose(body_pose, &compose(mount, &theta.spin()))
}

/// Body-to-world pose at one instant. The orientation is stored as a unit
/// quaternion so pose logs round-trip bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub timestamp: f64,
    pub orientation: UnitQuaternion<f64>,
    pub position: Vec3,
}

impl PoseSample {
    pub fn new(timestamp: f64, orientation: UnitQuaternion<f64>, position: Vec3) -> Self {
        Self {
            timestamp,
            orientation,
            position,
        }
    }

    pub fn body_to_world(&self) -> RigidTransform {
        RigidTransform::from_quaternion(&self.orientation, self.position)
    }
}

pub const DEFAULT_MAX_GAP: f64 = 0.1;

/// Time-ordered pose samples with interpolated lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseTrack {
    samples: Vec<PoseSample>,
    max_gap: f64,
}

impl PoseTrack {
    pub fn new(samples: Vec<PoseSample>, max_gap: f64) -> Result<Self, GeometryError> {
        if samples.is_empty() {
            return Err(GeometryError::EmptyTrack);
        }
        if let Some(i) = samples
            .windows(2)
            .position(|w| !(w[1].timestamp > w[0].timestamp))
        {
            return Err(GeometryError::NonMonotonic { index: i + 1 });
        }
        Ok(Self { samples, max_gap })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn max_gap(&self) -> f64 {
        self.max_gap
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.samples[0].timestamp,
            self.samples[self.samples.len() - 1].timestamp,
        )
    }

    /// Interpolated pose at `t`: linear in translation, geodesic in rotation,
    /// exact at sample timestamps.
    pub fn pose_at(&self, t: f64) -> Result<RigidTransform, GeometryError> {
        let (first, last) = self.span();
        if !(t >= first && t <= last) {
            return Err(GeometryError::OutOfRange { t, first, last });
        }
        // first index with timestamp > t
        let hi = self.samples.partition_point(|s| s.timestamp <= t);
        let a = &self.samples[hi - 1];
        if a.timestamp == t || hi == self.samples.len() {
            return Ok(a.body_to_world());
        }
        let b = &self.samples[hi];
        let gap = b.timestamp - a.timestamp;
        if gap > self.max_gap {
            return Err(GeometryError::GapTooLarge { t, gap });
        }
        let alpha = (t - a.timestamp) / gap;
        let q = slerp(&a.orientation, &b.orientation, alpha);
        let p = a.position + (b.position - a.position) * alpha;
        Ok(RigidTransform::from_quaternion(&q, p))
    }

    pub fn position_at(&self, t: f64) -> Result<Vec3, GeometryError> {
        self.pose_at(t).map(|p| p.translation)
    }

    /// Appends a sample newer than the last one.
    pub fn push(&mut self, sample: PoseSample) -> Result<(), GeometryError> {
        if !(sample.timestamp > self.span().1) {
            return Err(GeometryError::NonMonotonic {
                index: self.samples.len(),
            });
        }
        self.samples.push(sample);
        Ok(())
    }
}

/// Constant-angular-velocity interpolation along the shorter arc.
pub fn slerp(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>, alpha: f64) -> UnitQuaternion<f64> {
    let mut rel = a.inverse() * b;
    if rel.w < 0.0 {
        rel = UnitQuaternion::new_unchecked(-rel.into_inner());
    }
    a * UnitQuaternion::from_scaled_axis(rel.scaled_axis() * alpha)
}

impl fmt::Display for PoseSample {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.orientation.quaternion();
        write!(
            f,
            "{} {} {} {} {} {} {} {}",
            self.timestamp, q.i, q.j, q.k, q.w, self.position.x, self.position.y, self.position.z
        )
    }
}

/// Writes a pose log: `t qx qy qz qw px py pz` per line.
pub fn write_pose_log<W: Write>(mut out: W, track: &PoseTrack) -> std::io::Result<()> {
    writeln!(out, "# t qx qy qz qw px py pz")?;
    for s in &track.samples {
        writeln!(out, "{s}")?;
    }
    Ok(())
}

pub fn read_pose_log<R: BufRead>(input: R, source: &Path) -> Result<PoseTrack, IoError> {
    let mut samples = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| IoError::io(source, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = crate::io_util::parse_floats::<8>(trimmed)
            .ok_or_else(|| IoError::malformed(source, i + 1, &line))?;
        let [t, qx, qy, qz, qw, px, py, pz] = fields;
        let q = Quaternion::new(qw, qx, qy, qz);
        let norm = q.norm();
        if !((norm - 1.0).abs() < 1e-6) {
            return Err(IoError::malformed(source, i + 1, &line));
        }
        // Already unit within tolerance; keep the stored components untouched so
        // that a write/read cycle is bit-exact.
        let orientation = UnitQuaternion::new_unchecked(q);
        samples.push(PoseSample::new(t, orientation, Vec3::new(px, py, pz)));
    }
    PoseTrack::new(samples, DEFAULT_MAX_GAP).map_err(|e| IoError::Invalid {
        path: source.to_path_buf(),
        reason: e.to_string(),
    })
}
