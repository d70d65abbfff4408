//! Comparison methods: RANSAC ground segmentation (frame-wide and per cell)
//! and two alternative terrain models (inverse-distance KNN, global quadratic).

use nalgebra::{DMatrix, DVector};

use crate::error::{SegError, TerrainError};
use crate::geometry::Vec3;
use crate::par::{self, Execution};
use crate::preprocess::{CellIndex, GridPartition};
use crate::rng::SimRng;
use crate::terrain::{ControlPoint, TerrainSurface};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub distance_threshold: f64,
    pub patch_resolution: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 50,
            distance_threshold: 0.15,
            patch_resolution: 1.0,
            seed: 0,
        }
    }
}

/// Squared cross-product norm below which a sampled triple counts as collinear.
const COLLINEAR_EPS: f64 = 1e-12;

/// Best-consensus plane over `iterations` random minimal triples; returns the
/// sorted inliers of the winning plane. Ties keep the earliest hypothesis.
pub fn ransac_single(points: &[Vec3], params: &RansacParams) -> Result<Vec<usize>, SegError> {
    ransac_with_rng(points, params, &mut SimRng::new(params.seed))
}

fn ransac_with_rng(points: &[Vec3], params: &RansacParams, rng: &mut SimRng) -> Result<Vec<usize>, SegError> {
    let n = points.len();
    if n < 3 {
        return Err(SegError::Degenerate);
    }
    let mut best: Option<(usize, Vec3, f64)> = None;
    for _ in 0..params.iterations.max(1) {
        let a = rng.index(n);
        let b = rng.index(n);
        let c = rng.index(n);
        let normal = (points[b] - points[a]).cross(&(points[c] - points[a]));
        if normal.norm_squared() < COLLINEAR_EPS {
            continue;
        }
        let normal = normal.normalize();
        let d = -normal.dot(&points[a]);
        let count = points
            .iter()
            .filter(|p| (normal.dot(p) + d).abs() < params.distance_threshold)
            .count();
        if best.as_ref().is_none_or(|(c0, _, _)| count > *c0) {
            best = Some((count, normal, d));
        }
    }
    let (_, normal, d) = best.ok_or(SegError::Degenerate)?;
    Ok((0..n)
        .filter(|&i| (normal.dot(&points[i]) + d).abs() < params.distance_threshold)
        .collect())
}

/// Stream seed for one cell, so results do not depend on processing order.
fn cell_seed(seed: u64, cell: CellIndex) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for w in [cell.u as u64, cell.v as u64] {
        h = (h ^ w).wrapping_mul(0x1000_0000_01b3).rotate_left(29);
    }
    h
}

/// Per-cell RANSAC on the partition's grid. Cells with fewer than three points
/// or only collinear samples contribute nothing. Returns sorted point indices.
pub fn ransac_patch(partition: &GridPartition, params: &RansacParams, mode: Execution) -> Vec<usize> {
    let cells: Vec<(&CellIndex, &Vec<usize>)> = partition.cells.iter().collect();
    let per_cell = par::map(&cells, mode, |(cell, idx)| {
        if idx.len() < 3 {
            return Vec::new();
        }
        let pts: Vec<Vec3> = idx.iter().map(|&i| partition.points[i].position).collect();
        let mut rng = SimRng::new(cell_seed(params.seed, **cell));
        ransac_with_rng(&pts, params, &mut rng)
            .map(|g| g.into_iter().map(|i| idx[i]).collect())
            .unwrap_or_default()
    });
    let mut out: Vec<usize> = per_cell.into_iter().flatten().collect();
    out.sort_unstable();
    out
}

/// A height field that can be queried anywhere.
pub trait HeightModel {
    fn height(&self, x: f64, y: f64) -> f64;
}

impl HeightModel for TerrainSurface {
    fn height(&self, x: f64, y: f64) -> f64 {
        self.query(x, y).z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnTerrain {
    xs: Vec<f64>,
    ys: Vec<f64>,
    hs: Vec<f64>,
    k: usize,
}

impl KnnTerrain {
    pub fn new(controls: &[ControlPoint], k: usize) -> Result<Self, TerrainError> {
        if k == 0 || controls.len() < k {
            return Err(TerrainError::TooFewPoints {
                needed: k.max(1),
                have: controls.len(),
            });
        }
        Ok(Self {
            xs: controls.iter().map(|c| c.x).collect(),
            ys: controls.iter().map(|c| c.y).collect(),
            hs: controls.iter().map(|c| c.h).collect(),
            k,
        })
    }

    /// Inverse-square-distance mean of the `k` nearest heights (brute force).
    pub fn query(&self, x: f64, y: f64) -> f64 {
        // (squared distance, index), kept sorted, at most k long
        let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for i in 0..self.hs.len() {
            let d2 = (self.xs[i] - x).powi(2) + (self.ys[i] - y).powi(2);
            if d2 == 0.0 {
                return self.hs[i];
            }
            if nearest.len() == self.k && d2 >= nearest[self.k - 1].0 {
                continue;
            }
            let pos = nearest.partition_point(|(d, _)| *d <= d2);
            nearest.insert(pos, (d2, i));
            nearest.truncate(self.k);
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (d2, i) in nearest {
            let w = 1.0 / d2;
            num += w * self.hs[i];
            den += w;
        }
        num / den
    }
}

impl HeightModel for KnnTerrain {
    fn height(&self, x: f64, y: f64) -> f64 {
        self.query(x, y)
    }
}

/// `z = c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y²`, least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolyTerrain {
    pub coefficients: [f64; 6],
}

const POLY_RANK_TOL: f64 = 1e-10;

fn monomials(x: f64, y: f64) -> [f64; 6] {
    [1.0, x, y, x * x, x * y, y * y]
}

impl PolyTerrain {
    pub fn fit(controls: &[ControlPoint]) -> Result<Self, TerrainError> {
        if controls.len() < 6 {
            return Err(TerrainError::TooFewPoints {
                needed: 6,
                have: controls.len(),
            });
        }
        let n = controls.len();
        let mut a = DMatrix::from_fn(n, 6, |r, c| monomials(controls[r].x, controls[r].y)[c]);
        let b = DVector::from_iterator(n, controls.iter().map(|c| c.h));
        // column equilibration keeps x² and 1 on comparable scales
        let mut scale = [1.0; 6];
        for (c, s) in scale.iter_mut().enumerate() {
            let norm = a.column(c).norm();
            if norm > 0.0 {
                *s = norm;
                a.column_mut(c).scale_mut(1.0 / norm);
            }
        }
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        if !(smax > 0.0) || svd.singular_values.min() <= POLY_RANK_TOL * smax {
            return Err(TerrainError::RankDeficient);
        }
        let sol = svd.solve(&b, 0.0).map_err(|_| TerrainError::RankDeficient)?;
        let mut coefficients = [0.0; 6];
        for c in 0..6 {
            coefficients[c] = sol[c] / scale[c];
        }
        Ok(Self { coefficients })
    }

    #[inline]
    pub fn query(&self, x: f64, y: f64) -> f64 {
        let c = &self.coefficients;
        c[0] + x * (c[1] + c[3] * x + c[4] * y) + y * (c[2] + c[5] * y)
    }
}

impl HeightModel for PolyTerrain {
    fn height(&self, x: f64, y: f64) -> f64 {
        self.query(x, y)
    }
}
