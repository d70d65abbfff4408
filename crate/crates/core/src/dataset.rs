//! On-disk dataset layout:
//!
//! ```text
//! <dir>/poses.txt                 t qx qy qz qw px py pz
//! <dir>/scenario.cfg              key = value
//! <dir>/frames/frame_%06d.txt     "frame <index> <t_start> <t_end>" then
//!                                 "t theta x y z label" per return
//! ```
//!
//! Floats are written in shortest round-trip form, so reading a written
//! dataset reproduces it bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::IoError;
use crate::geometry::{read_pose_log, write_pose_log, EncoderAngle, PoseTrack, Vec3};
use crate::io_util::{parse_floats, read_to_string, write_atomic};
use crate::sim::{RadarReturn, RadarScanFrame, ScenarioSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub spec: ScenarioSpec,
    pub track: PoseTrack,
    pub frames: Vec<RadarScanFrame>,
}

pub fn frame_file_name(index: u64) -> String {
    format!("frame_{index:06}.txt")
}

pub fn format_frame(frame: &RadarScanFrame) -> String {
    let mut s = String::with_capacity(64 * (frame.returns.len() + 1));
    let _ = writeln!(s, "frame {} {} {}", frame.frame_index, frame.t_start, frame.t_end);
    for r in &frame.returns {
        let p = &r.point_radar;
        let _ = writeln!(
            s,
            "{} {} {} {} {} {}",
            r.timestamp,
            r.theta.radians(),
            p.x,
            p.y,
            p.z,
            u8::from(r.is_ground)
        );
    }
    s
}

pub fn parse_frame(text: &str, source: &Path) -> Result<RadarScanFrame, IoError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| IoError::malformed(source, 1, ""))?;
    let mut h = header.split_ascii_whitespace();
    let parsed = (|| {
        if h.next()? != "frame" {
            return None;
        }
        let index: u64 = h.next()?.parse().ok()?;
        let t0: f64 = h.next()?.parse().ok()?;
        let t1: f64 = h.next()?.parse().ok()?;
        h.next().is_none().then_some((index, t0, t1))
    })();
    let (frame_index, t_start, t_end) = parsed.ok_or_else(|| IoError::malformed(source, 1, header))?;
    let mut returns = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let [t, theta, x, y, z, label] =
            parse_floats::<6>(line).ok_or_else(|| IoError::malformed(source, i + 1, line))?;
        let is_ground = match label {
            l if l == 0.0 => false,
            l if l == 1.0 => true,
            _ => return Err(IoError::malformed(source, i + 1, line)),
        };
        returns.push(RadarReturn {
            timestamp: t,
            theta: EncoderAngle::from_radians(theta),
            point_radar: Vec3::new(x, y, z),
            is_ground,
        });
    }
    Ok(RadarScanFrame {
        frame_index,
        t_start,
        t_end,
        returns,
    })
}

pub fn write_dataset(dir: &Path, data: &Dataset) -> Result<(), IoError> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(|e| IoError::io(&frames_dir, e))?;
    let mut poses = Vec::new();
    write_pose_log(&mut poses, &data.track).map_err(|e| IoError::io(dir, e))?;
    write_atomic(&dir.join("poses.txt"), &poses)?;
    write_atomic(&dir.join("scenario.cfg"), data.spec.to_cfg().as_bytes())?;
    for f in &data.frames {
        write_atomic(&frames_dir.join(frame_file_name(f.frame_index)), format_frame(f).as_bytes())?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, IoError> {
    let cfg_path = dir.join("scenario.cfg");
    let cfg = read_to_string(&cfg_path)?;
    let spec = ScenarioSpec::from_cfg(&cfg, &ScenarioSpec::flat_noiseless(10.0, 0), "scenario.cfg")
        .map_err(|e| IoError::Invalid {
            path: cfg_path.clone(),
            reason: e.to_string(),
        })?;

    let pose_path = dir.join("poses.txt");
    let pose_text = read_to_string(&pose_path)?;
    let track = read_pose_log(pose_text.as_bytes(), &pose_path)?;

    let frames_dir = dir.join("frames");
    let mut names: Vec<_> = fs::read_dir(&frames_dir)
        .map_err(|e| IoError::io(&frames_dir, e))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("frame_") && n.ends_with(".txt"))
        .collect();
    names.sort();
    let mut frames = Vec::with_capacity(names.len());
    for name in names {
        let path = frames_dir.join(&name);
        frames.push(parse_frame(&read_to_string(&path)?, &path)?);
    }
    Ok(Dataset { spec, track, frames })
}
