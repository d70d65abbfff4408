//! Independent oracles and randomized invariant checks shared by the
//! integration test targets.

#![allow(dead_code)]

use std::f64::consts::{PI, TAU};
use std::fmt::Debug;
use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use terrafollow::baselines::{ransac_patch, ransac_single, RansacParams};
use terrafollow::dataset::{format_frame, parse_frame};
use terrafollow::geometry::{
    compose, radar_to_world, read_pose_log, write_pose_log, EncoderAngle, PoseSample, PoseTrack, RigidTransform, Vec3,
};
use terrafollow::metrics::{Confusion, SegMetrics};
use terrafollow::par::Execution;
use terrafollow::preprocess::{
    fov_filter, partition, register_frame, AccumulationWindow, CellIndex, FovParams, RegisteredFrame, RegisteredPoint,
};
use terrafollow::segment::{
    estimate_cell, pca_plane, refine_plane, segment_frame_with, ConstantPrior, SegParams,
};
use terrafollow::sim::{generate_scenario, AltitudeMode, RadarReturn, RadarScanFrame, ScenarioSpec, TerrainField};
use terrafollow::terrain::{fit_surface, incremental_update, ControlLattice, ControlPoint};
use terrafollow::PipelineConfig;

// ---------------------------------------------------------------------------
// oracles

/// Cyclic Jacobi eigen-decomposition of a symmetric 3×3 matrix. Returns the
/// eigenvalues and the eigenvectors as columns, unsorted.
pub fn jacobi_eigen(m: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut a = m;
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    for _ in 0..100 {
        let off = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        if off < 1e-300 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[p][q].abs() < 1e-300 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            // A <- Jᵀ A J
            for k in 0..3 {
                let akp = a[k][p];
                let akq = a[k][q];
                a[k][p] = c * akp - s * akq;
                a[k][q] = s * akp + c * akq;
            }
            for k in 0..3 {
                let apk = a[p][k];
                let aqk = a[q][k];
                a[p][k] = c * apk - s * aqk;
                a[q][k] = s * apk + c * aqk;
            }
            for row in v.iter_mut() {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// Plane normal (unit, `n_z >= 0`) and offset through `pts` from the Jacobi
/// oracle on the population covariance.
pub fn oracle_plane(pts: &[[f64; 3]]) -> ([f64; 3], f64) {
    let n = pts.len() as f64;
    let mut c = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            c[k] += p[k] / n;
        }
    }
    let mut cov = [[0.0; 3]; 3];
    for p in pts {
        for i in 0..3 {
            for j in 0..3 {
                cov[i][j] += (p[i] - c[i]) * (p[j] - c[j]) / n;
            }
        }
    }
    let (vals, vecs) = jacobi_eigen(cov);
    let k = (0..3).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    let mut nrm = [vecs[0][k], vecs[1][k], vecs[2][k]];
    let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
    let sign = if nrm[2] < 0.0 { -1.0 } else { 1.0 };
    for x in nrm.iter_mut() {
        *x *= sign / len;
    }
    let d = -(nrm[0] * c[0] + nrm[1] * c[1] + nrm[2] * c[2]);
    (nrm, d)
}

/// Cox-de Boor recursion for `N_{i,p}` on the integer knots `0, 1, 2, ...`.
pub fn cox_de_boor(i: i64, p: usize, t: f64) -> f64 {
    let fi = i as f64;
    if p == 0 {
        return if fi <= t && t < fi + 1.0 { 1.0 } else { 0.0 };
    }
    let pf = p as f64;
    (t - fi) / pf * cox_de_boor(i, p - 1, t) + (fi + pf + 1.0 - t) / pf * cox_de_boor(i + 1, p - 1, t)
}

/// Weight of the control centered at `center` under a degree-`p` cardinal
/// B-spline whose peak sits on the control: support `center ± (p+1)s/2`.
pub fn centered_basis(x: f64, center: f64, s: f64, p: usize) -> f64 {
    cox_de_boor(0, p, (x - center) / s + (p as f64 + 1.0) / 2.0)
}

/// Solves `AᵀA c = Aᵀb` by Gaussian elimination with partial pivoting.
pub fn normal_equations(rows: &[Vec<f64>], rhs: &[f64]) -> Vec<f64> {
    let m = rows[0].len();
    let mut ata = vec![vec![0.0; m + 1]; m];
    for (r, &b) in rows.iter().zip(rhs) {
        for i in 0..m {
            for j in 0..m {
                ata[i][j] += r[i] * r[j];
            }
            ata[i][m] += r[i] * b;
        }
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&a, &b| ata[a][col].abs().total_cmp(&ata[b][col].abs())).unwrap();
        ata.swap(col, piv);
        for row in col + 1..m {
            let f = ata[row][col] / ata[col][col];
            for k in col..=m {
                ata[row][k] -= f * ata[col][k];
            }
        }
    }
    let mut x = vec![0.0; m];
    for i in (0..m).rev() {
        let s: f64 = (i + 1..m).map(|k| ata[i][k] * x[k]).sum();
        x[i] = (ata[i][m] - s) / ata[i][i];
    }
    x
}

pub type Mat4 = [[f64; 4]; 4];

pub fn mat4(r: &Matrix3<f64>, t: &Vec3) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[(i, j)];
        }
        m[i][3] = t[i];
    }
    m[3][3] = 1.0;
    m
}

pub fn mat4_rot_z(theta: f64) -> Mat4 {
    let (s, c) = theta.sin_cos();
    [[c, -s, 0.0, 0.0], [s, c, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]]
}

/// Rotation matrix of the unit quaternion `(w, x, y, z)` by the textbook
/// expansion.
pub fn quat_matrix(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn mat4_mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn mat4_apply(m: &Mat4, p: &Vec3) -> Vec3 {
    let h = [p.x, p.y, p.z, 1.0];
    let row = |i: usize| (0..4).map(|k| m[i][k] * h[k]).sum::<f64>();
    Vec3::new(row(0), row(1), row(2))
}

// ---------------------------------------------------------------------------
// property runner

/// Runs `test` on `cases` inputs drawn from `strategy` with a fixed-seed RNG.
pub fn check<S>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String>
where
    S: Strategy,
    S::Value: Debug,
{
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

pub type Property = fn(u32) -> Result<(), String>;

pub const PROPERTIES: &[(&str, Property)] = &[
    ("compose_is_associative", compose_is_associative),
    ("spin_is_periodic", spin_is_periodic),
    ("pose_lookup_exact_at_samples", pose_lookup_exact_at_samples),
    ("interpolated_rotation_is_orthonormal", interpolated_rotation_is_orthonormal),
    ("noiseless_ground_lies_on_terrain", noiseless_ground_lies_on_terrain),
    ("clutter_offsets_within_ranges", clutter_offsets_within_ranges),
    ("simulation_is_deterministic", simulation_is_deterministic),
    ("fov_filter_is_idempotent", fov_filter_is_idempotent),
    ("partition_is_a_permutation", partition_is_a_permutation),
    ("window_size_is_sum_of_retained", window_size_is_sum_of_retained),
    ("stationary_registration_ignores_frame", stationary_registration_ignores_frame),
    ("gate_is_a_product", gate_is_a_product),
    ("refined_set_is_reselection_of_plane", refined_set_is_reselection_of_plane),
    ("pca_is_translation_invariant", pca_is_translation_invariant),
    ("noiseless_plane_is_recovered", noiseless_plane_is_recovered),
    ("recall_and_reseg_are_disjoint", recall_and_reseg_are_disjoint),
    ("segmentation_mode_independent", segmentation_mode_independent),
    ("basis_partition_of_unity", basis_partition_of_unity),
    ("basis_matches_cox_de_boor", basis_matches_cox_de_boor),
    ("control_influence_is_local", control_influence_is_local),
    ("affine_lattice_is_reproduced", affine_lattice_is_reproduced),
    ("update_ignores_jitter", update_ignores_jitter),
    ("query_is_deterministic", query_is_deterministic),
    ("metric_identities", metric_identities),
    ("ransac_is_deterministic", ransac_is_deterministic),
    ("config_text_round_trip", config_text_round_trip),
    ("frame_text_round_trip", frame_text_round_trip),
    ("pose_log_round_trip", pose_log_round_trip),
    ("lattice_export_round_trip", lattice_export_round_trip),
];

// ---------------------------------------------------------------------------
// strategies

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn rotation() -> impl Strategy<Value = UnitQuaternion<f64>> {
    (vec3(1.0), -PI..PI)
        .prop_filter("axis too short", |(a, _)| a.norm() > 0.1)
        .prop_map(|(a, angle)| UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(a), angle))
}

fn transform() -> impl Strategy<Value = RigidTransform> {
    (rotation(), vec3(50.0)).prop_map(|(q, t)| RigidTransform::from_quaternion(&q, t))
}

fn near(a: &Vec3, b: &Vec3, tol: f64) -> bool {
    (a - b).amax() <= tol
}

fn cloud(n: std::ops::Range<usize>, r: f64) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(vec3(r), n)
}

fn reg(points: &[Vec3], frame: u64) -> Vec<RegisteredPoint> {
    points
        .iter()
        .map(|&position| RegisteredPoint {
            position,
            label: None,
            source_frame: frame,
        })
        .collect()
}

/// Noisy tilted surface patch over one 1 m cell, plus raised clutter.
fn cell_points() -> impl Strategy<Value = Vec<Vec3>> {
    (
        -0.6f64..0.6,
        -0.6f64..0.6,
        -1.0f64..1.0,
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -0.05f64..0.05), 5..40),
        prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.3f64..2.0), 0..8),
    )
        .prop_map(|(a, b, c, ground, clutter)| {
            let h = |x: f64, y: f64| a * x + b * y + c;
            ground
                .into_iter()
                .map(|(x, y, e)| Vec3::new(x, y, h(x, y) + e))
                .chain(clutter.into_iter().map(|(x, y, up)| Vec3::new(x, y, h(x, y) + up)))
                .collect()
        })
}

/// Full lattice over a random index rectangle with random heights.
fn lattice() -> impl Strategy<Value = (ControlLattice, usize, usize)> {
    (-5i64..5, -5i64..5, 3usize..10, 3usize..10, 1usize..6, 1usize..6, prop::bool::ANY)
        .prop_flat_map(|(u0, v0, nu, nv, kx, ky, half)| {
            let s = if half { 0.5 } else { 1.0 };
            prop::collection::vec(-3.0f64..3.0, nu * nv).prop_map(move |hs| {
                let pts = (0..nu * nv).map(|i| {
                    let cell = CellIndex::new(u0 + (i % nu) as i64, v0 + (i / nu) as i64);
                    ControlPoint::at_cell(cell, s, hs[i], 0)
                });
                (ControlLattice::from_points(s, pts), kx, ky)
            })
        })
}

fn frac_point(l: &ControlLattice, fx: f64, fy: f64) -> (f64, f64) {
    let ((u0, u1), (v0, v1)) = l.bounds().unwrap();
    let s = l.resolution();
    let x0 = (u0 as f64 + 0.5) * s;
    let y0 = (v0 as f64 + 0.5) * s;
    (x0 + fx * (u1 - u0) as f64 * s, y0 + fy * (v1 - v0) as f64 * s)
}

fn short_scene(seed: u64, alt: f64, terrain: TerrainField) -> ScenarioSpec {
    let mut spec = ScenarioSpec::flat_noiseless(alt, seed);
    spec.terrain = terrain;
    spec.trajectory.start = Vec3::new(-1.0, 0.0, alt);
    spec.trajectory.end = Vec3::new(1.0, 0.0, alt);
    spec.trajectory.altitude = AltitudeMode::ConstantZ;
    spec
}

fn rough_terrain() -> impl Strategy<Value = TerrainField> {
    (-0.3f64..0.3, -0.3f64..0.3, 0.0f64..1.0, 10.0f64..40.0).prop_map(|(a, b, amp, wl)| {
        TerrainField::Composite(vec![
            TerrainField::Slope { a, b, c: 0.0 },
            TerrainField::Hill {
                amplitude: amp,
                wavelength: wl,
                c: 0.0,
            },
        ])
    })
}

// ---------------------------------------------------------------------------
// geometry

pub fn compose_is_associative(cases: u32) -> Result<(), String> {
    check(cases, (transform(), transform(), transform(), vec3(100.0)), |(a, b, c, p)| {
        let left = compose(&compose(&a, &b), &c).transform_point(&p);
        let right = compose(&a, &compose(&b, &c)).transform_point(&p);
        prop_assert!(near(&left, &right, 1e-9));
        let chained = a.transform_point(&b.transform_point(&p));
        prop_assert!(near(&compose(&a, &b).transform_point(&p), &chained, 1e-9));
        prop_assert!(compose(&a, &b).is_rotation(1e-9));
        Ok(())
    })
}

pub fn spin_is_periodic(cases: u32) -> Result<(), String> {
    check(cases, (0.0..TAU, -3i32..4, vec3(30.0), transform(), transform()), |(th, k, p, mount, pose)| {
        let base = radar_to_world(&p, EncoderAngle::from_radians(th), &mount, &pose);
        let wrapped = radar_to_world(&p, EncoderAngle::from_radians(th + k as f64 * TAU), &mount, &pose);
        prop_assert!(near(&base, &wrapped, 1e-9), "{base} vs {wrapped}");
        Ok(())
    })
}

fn track() -> impl Strategy<Value = Vec<PoseSample>> {
    prop::collection::vec((0.001f64..0.05, rotation(), vec3(20.0)), 2..20).prop_map(|raw| {
        let mut t = 0.0;
        raw.into_iter()
            .map(|(dt, q, p)| {
                t += dt;
                PoseSample::new(t, q, p)
            })
            .collect()
    })
}

pub fn pose_lookup_exact_at_samples(cases: u32) -> Result<(), String> {
    check(cases, track(), |samples| {
        let tr = PoseTrack::new(samples.clone(), 0.1).unwrap();
        for s in &samples {
            prop_assert_eq!(tr.pose_at(s.timestamp).unwrap(), s.body_to_world());
        }
        Ok(())
    })
}

pub fn interpolated_rotation_is_orthonormal(cases: u32) -> Result<(), String> {
    check(cases, (track(), 0.0f64..1.0), |(samples, f)| {
        let tr = PoseTrack::new(samples, 0.1).unwrap();
        let (a, b) = tr.span();
        let pose = tr.pose_at(a + f * (b - a)).unwrap();
        prop_assert!(pose.is_rotation(1e-9), "error {}", pose.orthonormality_error());
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// simulation

pub fn noiseless_ground_lies_on_terrain(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 4.0f64..20.0, rough_terrain()), |(seed, alt, terrain)| {
        let spec = short_scene(seed, alt, terrain.clone());
        let sc = generate_scenario(&spec).unwrap();
        let mount = spec.mount.transform();
        let mut n = 0;
        for f in &sc.frames {
            let rf = register_frame(f, &sc.track, &mount, 0.0).unwrap();
            for p in rf.points.iter().filter(|p| p.label == Some(true)) {
                let q = p.position;
                prop_assert!((q.z - terrain.height(q.x, q.y)).abs() < 1e-9, "{q}");
                n += 1;
            }
        }
        prop_assert!(n > 0);
        Ok(())
    })
}

pub fn clutter_offsets_within_ranges(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 4.0f64..20.0, rough_terrain()), |(seed, alt, terrain)| {
        let mut spec = short_scene(seed, alt, terrain.clone());
        spec.clutter.vegetation_rate = 10.0;
        spec.clutter.vegetation_height = (0.3, 1.5);
        spec.clutter.multipath_rate = 10.0;
        spec.clutter.multipath_depth = (0.5, 2.0);
        let sc = generate_scenario(&spec).unwrap();
        let mount = spec.mount.transform();
        for f in &sc.frames {
            let rf = register_frame(f, &sc.track, &mount, 0.0).unwrap();
            for p in rf.points.iter().filter(|p| p.label == Some(false)) {
                let q = p.position;
                let off = q.z - terrain.height(q.x, q.y);
                let ok = if off < 0.0 {
                    (0.5 - 1e-9..=2.0 + 1e-9).contains(&-off)
                } else {
                    (0.3 - 1e-9..=1.5 + 1e-9).contains(&off)
                };
                prop_assert!(ok, "offset {off}");
            }
        }
        Ok(())
    })
}

pub fn simulation_is_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (any::<u64>(), 4.0f64..20.0, rough_terrain()), |(seed, alt, terrain)| {
        let mut spec = short_scene(seed, alt, terrain);
        spec.clutter.range_noise_sigma = 0.05;
        spec.clutter.vegetation_rate = 10.0;
        let a = generate_scenario(&spec).unwrap();
        let b = generate_scenario(&spec).unwrap();
        prop_assert_eq!(a.frames, b.frames);
        prop_assert_eq!(a.track, b.track);
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// preprocessing

fn frame_of(points: Vec<Vec3>, uav: Vec3, index: u64) -> RegisteredFrame {
    RegisteredFrame {
        frame_index: index,
        points: reg(&points, index),
        uav_position: uav,
        reference_time: index as f64 * 0.1,
    }
}

pub fn fov_filter_is_idempotent(cases: u32) -> Result<(), String> {
    check(cases, (cloud(0..200, 30.0), vec3(10.0), 0.05f64..(PI / 2.0)), |(pts, uav, phi)| {
        let f = frame_of(pts, uav, 0);
        let once = fov_filter(&f, FovParams { phi });
        let twice = fov_filter(&once, FovParams { phi });
        prop_assert_eq!(&once, &twice);
        let half = fov_filter(&f, FovParams { phi: PI / 2.0 });
        let below: Vec<_> = f.points.iter().filter(|p| p.position.z < uav.z).copied().collect();
        prop_assert_eq!(half.points, below);
        Ok(())
    })
}

pub fn partition_is_a_permutation(cases: u32) -> Result<(), String> {
    check(cases, (cloud(0..300, 20.0), prop::sample::select(vec![0.25, 0.5, 1.0, 2.0])), |(pts, s)| {
        let part = partition(reg(&pts, 0), s);
        let mut seen = vec![0u32; pts.len()];
        for (cell, idx) in &part.cells {
            for &i in idx {
                seen[i] += 1;
                let p = part.points[i].position;
                prop_assert_eq!(cell.u, (p.x / s).floor() as i64);
                prop_assert_eq!(cell.v, (p.y / s).floor() as i64);
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        Ok(())
    })
}

pub fn window_size_is_sum_of_retained(cases: u32) -> Result<(), String> {
    check(cases, (1usize..7, prop::collection::vec(0usize..30, 1..15)), |(k, sizes)| {
        let mut w = AccumulationWindow::new(k);
        for (i, &n) in sizes.iter().enumerate() {
            let pts = vec![Vec3::new(i as f64, 0.0, 0.0); n];
            let out = w.accumulate(frame_of(pts, Vec3::zeros(), i as u64));
            let first = (i + 1).saturating_sub(k);
            let expected: usize = sizes[first..=i].iter().sum();
            prop_assert_eq!(out.len(), expected);
            prop_assert!(w.len() <= k);
            prop_assert!(out.iter().all(|p| p.position.x == p.source_frame as f64));
            prop_assert!(out.iter().all(|p| (first as u64..=i as u64).contains(&p.source_frame)));
        }
        Ok(())
    })
}

pub fn stationary_registration_ignores_frame(cases: u32) -> Result<(), String> {
    let returns = prop::collection::vec((0.0..TAU, vec3(20.0)), 1..50);
    check(cases, (returns, rotation(), vec3(10.0), transform(), 0u64..1000), |(rs, q, pos, mount, index)| {
        let track = PoseTrack::new(vec![PoseSample::new(0.0, q, pos), PoseSample::new(200.0, q, pos)], 1e9).unwrap();
        let make = |i: u64| {
            let t0 = i as f64 * 0.1;
            RadarScanFrame {
                frame_index: i,
                t_start: t0,
                t_end: t0 + 0.1,
                returns: rs
                    .iter()
                    .map(|&(th, p)| RadarReturn {
                        timestamp: t0 + 0.05,
                        theta: EncoderAngle::from_radians(th),
                        point_radar: p,
                        is_ground: true,
                    })
                    .collect(),
            }
        };
        let a = register_frame(&make(0), &track, &mount, 0.0).unwrap();
        let b = register_frame(&make(index), &track, &mount, 0.0).unwrap();
        for (p, r) in a.points.iter().zip(&b.points) {
            prop_assert!(near(&p.position, &r.position, 1e-9));
        }
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// segmentation

pub fn gate_is_a_product(cases: u32) -> Result<(), String> {
    check(cases, (cell_points(), -1.5f64..1.5), |(pts, prior)| {
        let params = SegParams::default();
        let c = estimate_cell(CellIndex::new(0, 0), &pts, Some(prior), &params);
        prop_assert_eq!(c.verdict, c.reasons.is_empty());
        prop_assert!(c.dispersion >= 0.0 || !c.verdict);
        if c.verdict {
            let plane = c.plane.unwrap();
            prop_assert!(plane.normal.z >= params.uprightness_angle.cos());
            prop_assert!((c.mean_height - prior).abs() < params.elevation_tolerance);
            prop_assert!(c.dispersion < params.dispersion_tolerance);
            // failing any single criterion rejects the cell
            let fails = [
                SegParams {
                    uprightness_angle: 0.0,
                    ..params.clone()
                },
                SegParams {
                    elevation_tolerance: 0.0,
                    ..params.clone()
                },
                SegParams {
                    dispersion_tolerance: 0.0,
                    ..params.clone()
                },
            ];
            for (i, p) in fails.iter().enumerate() {
                // a perfectly level plane passes a zero uprightness angle
                if i == 0 && plane.normal.z >= 1.0 {
                    continue;
                }
                prop_assert!(!estimate_cell(c.cell, &pts, Some(prior), p).verdict, "criterion {i}");
            }
        }
        Ok(())
    })
}

pub fn refined_set_is_reselection_of_plane(cases: u32) -> Result<(), String> {
    check(cases, (cell_points(), 1usize..6), |(pts, t)| {
        let params = SegParams {
            max_iterations: t,
            ..SegParams::default()
        };
        let all: Vec<usize> = (0..pts.len()).collect();
        if let Ok((set, plane)) = refine_plane(&pts, &all, &params) {
            let again: Vec<usize> = (0..pts.len())
                .filter(|&j| plane.signed_distance(&pts[j]).abs() < params.plane_distance)
                .collect();
            prop_assert_eq!(set, again);
            prop_assert!((plane.normal.norm() - 1.0).abs() < 1e-9);
            prop_assert!((plane.normal.dot(&plane.centroid) + plane.offset).abs() < 1e-9);
        }
        Ok(())
    })
}

pub fn pca_is_translation_invariant(cases: u32) -> Result<(), String> {
    check(cases, (cell_points(), vec3(50.0)), |(pts, shift)| {
        let (Ok(a), Ok(b)) = (pca_plane(&pts), pca_plane(&pts.iter().map(|p| p + shift).collect::<Vec<_>>())) else {
            return Ok(());
        };
        prop_assert!(near(&a.normal, &b.normal, 1e-9), "{} vs {}", a.normal, b.normal);
        prop_assert!(near(&(a.centroid + shift), &b.centroid, 1e-9));
        Ok(())
    })
}

pub fn noiseless_plane_is_recovered(cases: u32) -> Result<(), String> {
    let on = prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 6..40);
    let off = prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 1.0f64..5.0), 0..6);
    check(cases, (-0.5f64..0.5, -0.5f64..0.5, -2.0f64..2.0, on, off), |(a, b, c, on, off)| {
        let h = |x: f64, y: f64| a * x + b * y + c;
        let mut pts: Vec<Vec3> = on.iter().map(|&(x, y)| Vec3::new(x, y, h(x, y))).collect();
        let n_on = pts.len();
        pts.extend(off.iter().map(|&(x, y, up)| Vec3::new(x, y, h(x, y) + up)));
        if pca_plane(&pts[..3]).is_err() {
            return Ok(());
        }
        let (set, plane) = refine_plane(&pts, &[0, 1, 2], &SegParams::default()).unwrap();
        prop_assert_eq!(set, (0..n_on).collect::<Vec<_>>());
        for p in &pts[..n_on] {
            prop_assert!(plane.signed_distance(p).abs() < 1e-9);
        }
        Ok(())
    })
}

fn frame_cloud() -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0, -0.05f64..0.05, prop::bool::weighted(0.2), 0.3f64..2.0), 0..300)
        .prop_map(|raw| {
            raw.into_iter()
                .map(|(x, y, e, up, dz)| Vec3::new(x, y, 0.1 * x + e + if up { dz } else { 0.0 }))
                .collect()
        })
}

pub fn recall_and_reseg_are_disjoint(cases: u32) -> Result<(), String> {
    check(cases, (frame_cloud(), -0.5f64..0.5), |(pts, prior)| {
        let part = partition(reg(&pts, 0), 1.0);
        let seg = segment_frame_with(&part, &ConstantPrior(prior), &SegParams::default(), Execution::Sequential);
        for c in &seg.cells {
            if c.seg.verdict {
                prop_assert!(c.recalled.is_empty());
            } else {
                prop_assert!(c.resegmented.is_empty());
            }
        }
        Ok(())
    })
}

pub fn segmentation_mode_independent(cases: u32) -> Result<(), String> {
    check(cases, (frame_cloud(), -0.5f64..0.5), |(pts, prior)| {
        let part = partition(reg(&pts, 0), 1.0);
        let params = SegParams::default();
        let a = segment_frame_with(&part, &ConstantPrior(prior), &params, Execution::Sequential);
        let b = segment_frame_with(&part, &ConstantPrior(prior), &params, Execution::Parallel);
        // rejected cells carry NaN statistics, so compare the text dumps
        prop_assert_eq!(&a.ground, &b.ground);
        prop_assert_eq!(a.dump(), b.dump());
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// terrain model

pub fn basis_partition_of_unity(cases: u32) -> Result<(), String> {
    check(cases, (lattice(), 0.0f64..1.0, 0.0f64..1.0), |((l, kx, ky), fx, fy)| {
        let surf = fit_surface(&l, kx, ky).unwrap();
        let (x, y) = frac_point(&l, fx, fy);
        let sum: f64 = surf.weights_at(x, y).iter().map(|(_, w)| w).sum();
        prop_assert!((sum - 1.0).abs() < 1e-9, "{sum}");
        Ok(())
    })
}

pub fn basis_matches_cox_de_boor(cases: u32) -> Result<(), String> {
    check(cases, (lattice(), 0.0f64..1.0, 0.0f64..1.0), |((l, kx, ky), fx, fy)| {
        let surf = fit_surface(&l, kx, ky).unwrap();
        let (px, py) = surf.degrees();
        let (x, y) = frac_point(&l, fx, fy);
        let s = l.resolution();
        for (cell, w) in surf.weights_at(x, y) {
            let (cx, cy) = cell.center(s);
            let oracle = centered_basis(x, cx, s, px) * centered_basis(y, cy, s, py);
            prop_assert!((w - oracle).abs() < 1e-9, "{cell:?}: {w} vs {oracle}");
        }
        Ok(())
    })
}

pub fn control_influence_is_local(cases: u32) -> Result<(), String> {
    let probes = prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 50);
    check(cases, (lattice(), 0.0f64..1.0, 0.0f64..1.0, -2.0f64..2.0, probes), |((l, kx, ky), fu, fv, dh, probes)| {
        let ((u0, u1), (v0, v1)) = l.bounds().unwrap();
        // controls feeding the linear boundary padding are excluded
        if u1 - u0 < 4 || v1 - v0 < 4 {
            return Ok(());
        }
        let u = u0 + 2 + (fu * (u1 - u0 - 3) as f64) as i64;
        let v = v0 + 2 + (fv * (v1 - v0 - 3) as f64) as i64;
        let target = CellIndex::new(u.min(u1 - 2), v.min(v1 - 2));
        let s = l.resolution();
        let mut pts: Vec<ControlPoint> = l.points().copied().collect();
        for p in pts.iter_mut().filter(|p| p.cell() == target) {
            p.h += dh;
        }
        let a = fit_surface(&l, kx, ky).unwrap();
        let b = fit_surface(&ControlLattice::from_points(s, pts), kx, ky).unwrap();
        let (px, py) = a.degrees();
        let (cx, cy) = target.center(s);
        for (fx, fy) in probes {
            let (x, y) = frac_point(&l, fx, fy);
            let inside = (x - cx).abs() < (px as f64 + 1.0) / 2.0 * s && (y - cy).abs() < (py as f64 + 1.0) / 2.0 * s;
            if !inside {
                prop_assert_eq!(a.query(x, y).z.to_bits(), b.query(x, y).z.to_bits());
            }
        }
        Ok(())
    })
}

pub fn affine_lattice_is_reproduced(cases: u32) -> Result<(), String> {
    let probes = prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 20);
    check(cases, (lattice(), -1.0f64..1.0, -1.0f64..1.0, -5.0f64..5.0, probes), |((l, kx, ky), a, b, c, probes)| {
        let plane = |x: f64, y: f64| a * x + b * y + c;
        let ((u0, u1), (v0, v1)) = l.bounds().unwrap();
        let flat = ControlLattice::from_fn(l.resolution(), (u0, u1), (v0, v1), plane);
        let surf = fit_surface(&flat, kx, ky).unwrap();
        for (fx, fy) in probes {
            let (x, y) = frac_point(&flat, fx, fy);
            let q = surf.query(x, y);
            prop_assert!(!q.extrapolated);
            prop_assert!((q.z - plane(x, y)).abs() < 1e-9, "{} vs {}", q.z, plane(x, y));
        }
        Ok(())
    })
}

pub fn update_ignores_jitter(cases: u32) -> Result<(), String> {
    check(cases, (lattice(), prop::collection::vec(-0.999f64..0.999, 100)), |((l, _, _), jitter)| {
        let tau = 0.1;
        let mut updated = l.clone();
        let new: Vec<ControlPoint> = l
            .points()
            .zip(jitter.iter().cycle())
            .map(|(p, j)| ControlPoint {
                h: p.h + j * tau,
                last_update_frame: 7,
                ..*p
            })
            .collect();
        let changed = incremental_update(&mut updated, &new, tau);
        prop_assert!(changed.is_empty());
        prop_assert_eq!(updated, l);
        Ok(())
    })
}

pub fn query_is_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (lattice(), -0.2f64..1.2, -0.2f64..1.2), |((l, kx, ky), fx, fy)| {
        let a = fit_surface(&l, kx, ky).unwrap();
        let b = fit_surface(&l, kx, ky).unwrap();
        let (x, y) = frac_point(&l, fx, fy);
        let first = a.query(x, y);
        prop_assert_eq!(first.z.to_bits(), a.query(x, y).z.to_bits());
        prop_assert_eq!(first.z.to_bits(), b.query(x, y).z.to_bits());
        prop_assert_eq!(first.extrapolated, !a.contains(x, y));
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// metrics and baselines

pub fn metric_identities(cases: u32) -> Result<(), String> {
    check(cases, (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000), |(tp, fp, fn_, tn)| {
        let m = SegMetrics::from_confusion(Confusion { tp, fp, fn_, tn });
        if tp > 0 {
            prop_assert!(m.iou <= m.precision + 1e-15);
            prop_assert!(m.iou <= m.recall + 1e-15);
            prop_assert!((m.f1 - 2.0 * m.iou / (1.0 + m.iou)).abs() < 1e-12);
            prop_assert!((m.iou - tp as f64 / (tp + fp + fn_) as f64).abs() < 1e-15);
        }
        Ok(())
    })
}

pub fn ransac_is_deterministic(cases: u32) -> Result<(), String> {
    check(cases, (frame_cloud(), any::<u64>()), |(pts, seed)| {
        let params = RansacParams {
            seed,
            ..RansacParams::default()
        };
        prop_assert_eq!(ransac_single(&pts, &params).ok(), ransac_single(&pts, &params).ok());
        let part = partition(reg(&pts, 0), 1.0);
        prop_assert_eq!(
            ransac_patch(&part, &params, Execution::Sequential),
            ransac_patch(&part, &params, Execution::Parallel)
        );
        Ok(())
    })
}

// ---------------------------------------------------------------------------
// text formats

pub fn config_text_round_trip(cases: u32) -> Result<(), String> {
    let knobs = (
        (1usize..10, 0.25f64..4.0, 3usize..20, 0.05f64..2.0, 1usize..10),
        (0.01f64..0.5, 1.0f64..60.0, prop::bool::ANY, prop::bool::ANY, 0.01f64..0.99),
        (1usize..6, 1usize..6, any::<u64>(), 1.0f64..20.0),
    );
    check(cases, knobs, |((k, s, nmin, dl, kseed), (td, tu, psi, refi, rho), (dx, dy, seed, href))| {
        let c = PipelineConfig {
            window_frames: k,
            grid_resolution: s,
            min_points: nmin,
            delta_lower: dl,
            seed_count: kseed,
            plane_distance: td,
            uprightness_deg: tu,
            prior_seeds: psi,
            refinement: refi,
            quantile: rho,
            degree_x: dx,
            degree_y: dy,
            ransac_seed: seed,
            h_ref: href,
            ..PipelineConfig::default()
        };
        let back = PipelineConfig::parse(&c.to_text(), "round-trip").map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back, c);
        Ok(())
    })
}

pub fn frame_text_round_trip(cases: u32) -> Result<(), String> {
    let rets = prop::collection::vec((0.0f64..0.1, 0.0..TAU, vec3(60.0), prop::bool::ANY), 0..50);
    check(cases, (0u64..1_000_000, 0.0f64..1e4, rets), |(index, t0, rets)| {
        let frame = RadarScanFrame {
            frame_index: index,
            t_start: t0,
            t_end: t0 + 0.1,
            returns: rets
                .into_iter()
                .map(|(dt, th, p, g)| RadarReturn {
                    timestamp: t0 + dt,
                    theta: EncoderAngle::from_radians(th),
                    point_radar: p,
                    is_ground: g,
                })
                .collect(),
        };
        let back = parse_frame(&format_frame(&frame), Path::new("mem")).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back, frame);
        Ok(())
    })
}

pub fn pose_log_round_trip(cases: u32) -> Result<(), String> {
    check(cases, track(), |samples| {
        let tr = PoseTrack::new(samples, 0.1).unwrap();
        let mut buf = Vec::new();
        write_pose_log(&mut buf, &tr).unwrap();
        let back = read_pose_log(&buf[..], Path::new("mem")).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back.samples(), tr.samples());
        Ok(())
    })
}

pub fn lattice_export_round_trip(cases: u32) -> Result<(), String> {
    check(cases, lattice(), |(l, _, _)| {
        let back = ControlLattice::parse_export(&l.export(), Path::new("mem"))
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(back.resolution(), l.resolution());
        let a: Vec<_> = l.points().map(|p| (p.u, p.v, p.h.to_bits())).collect();
        let b: Vec<_> = back.points().map(|p| (p.u, p.v, p.h.to_bits())).collect();
        prop_assert_eq!(a, b);
        Ok(())
    })
}
