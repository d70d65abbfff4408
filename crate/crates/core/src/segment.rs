//! Region-wise ground segmentation.
//!
//! Per grid cell: prior-constrained seed selection, PCA plane fit with
//! point-to-plane reselection, a three-way gate (uprightness, elevation
//! agreement with the terrain prior, height dispersion), then two recovery
//! passes: re-segmentation of the residual inside accepted cells and a
//! prior-based recall inside rejected ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use bitflags::bitflags;
use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::SegError;
use crate::geometry::Vec3;
use crate::par::{self, Execution};
use crate::preprocess::{CellIndex, GridPartition};

#[derive(Debug, Clone, PartialEq)]
pub struct SegParams {
    /// N_min: cells with fewer points are not fitted.
    pub min_points: usize,
    /// Prior window below / above the prior height.
    pub delta_lower: f64,
    pub delta_upper: f64,
    /// k: number of lowest candidates averaged into the seed height.
    pub seed_count: usize,
    pub delta_seed: f64,
    /// τ_d: point-to-plane inlier distance.
    pub plane_distance: f64,
    /// T: maximum fit/reselect iterations.
    pub max_iterations: usize,
    /// θ_u, radians.
    pub uprightness_angle: f64,
    /// τ_h
    pub elevation_tolerance: f64,
    /// τ_s
    pub dispersion_tolerance: f64,
    /// δ_z
    pub reseg_height_gap: f64,
    /// N_re
    pub reseg_min_points: usize,
    /// δ_h
    pub recall_margin: f64,
    /// Use the prior window during seed selection.
    pub prior_seeds: bool,
    /// Run re-segmentation and global recall.
    pub refinement: bool,
}

impl Default for SegParams {
    fn default() -> Self {
        Self {
            min_points: 5,
            delta_lower: 0.5,
            delta_upper: 0.5,
            seed_count: 5,
            delta_seed: 0.2,
            plane_distance: 0.15,
            max_iterations: 3,
            uprightness_angle: 30f64.to_radians(),
            elevation_tolerance: 0.5,
            dispersion_tolerance: 0.15,
            reseg_height_gap: 0.3,
            reseg_min_points: 5,
            recall_margin: 0.2,
            prior_seeds: true,
            refinement: true,
        }
    }
}

/// Height of the historical terrain model, if one exists yet.
pub trait TerrainPrior: Sync {
    fn height_at(&self, x: f64, y: f64) -> Option<f64>;
}

/// No terrain history (first frames).
#[derive(Debug, Clone, Copy, Default)]
pub struct ColdStart;

impl TerrainPrior for ColdStart {
    fn height_at(&self, _x: f64, _y: f64) -> Option<f64> {
        None
    }
}

/// Flat prior at a fixed height.
#[derive(Debug, Clone, Copy)]
pub struct ConstantPrior(pub f64);

impl TerrainPrior for ConstantPrior {
    fn height_at(&self, _x: f64, _y: f64) -> Option<f64> {
        Some(self.0)
    }
}

impl<T: TerrainPrior> TerrainPrior for Option<T> {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.as_ref().and_then(|p| p.height_at(x, y))
    }
}

impl<T: TerrainPrior + ?Sized> TerrainPrior for &T {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        (**self).height_at(x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneEstimate {
    /// Unit normal with `n_z >= 0`.
    pub normal: Vec3,
    pub offset: f64,
    pub centroid: Vec3,
}

impl PlaneEstimate {
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

bitflags! {
    /// Why a cell was rejected. Empty means accepted.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct RejectReasons: u8 {
        const UPRIGHTNESS = 1;
        const ELEVATION = 1 << 1;
        const STABILITY = 1 << 2;
        const TOO_FEW_POINTS = 1 << 3;
        const DEGENERATE = 1 << 4;
    }
}

impl std::fmt::Display for RejectReasons {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_empty() {
            return f.write_str("-");
        }
        let names = [
            (RejectReasons::UPRIGHTNESS, "uprightness"),
            (RejectReasons::ELEVATION, "elevation"),
            (RejectReasons::STABILITY, "stability"),
            (RejectReasons::TOO_FEW_POINTS, "too_few_points"),
            (RejectReasons::DEGENERATE, "degenerate"),
        ];
        let parts: Vec<&str> = names
            .iter()
            .filter(|(flag, _)| self.contains(*flag))
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&parts.join("|"))
    }
}

/// First-pass result for one cell. `ground` indexes the cell's own points.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSegmentation {
    pub cell: CellIndex,
    pub ground: Vec<usize>,
    pub plane: Option<PlaneEstimate>,
    pub mean_height: f64,
    pub dispersion: f64,
    pub verdict: bool,
    pub reasons: RejectReasons,
}

impl CellSegmentation {
    fn rejected(cell: CellIndex, reason: RejectReasons) -> Self {
        Self {
            cell,
            ground: Vec::new(),
            plane: None,
            mean_height: f64::NAN,
            dispersion: f64::NAN,
            verdict: false,
            reasons: reason,
        }
    }
}

/// Initial ground set: seeds are the `k` lowest points inside the prior
/// window (all points at cold start or with prior seeding disabled); every
/// point no higher than the seed mean plus `delta_seed` joins.
pub fn seed_init(points: &[Vec3], prior: Option<f64>, params: &SegParams) -> Result<Vec<usize>, SegError> {
    let mut candidates: Vec<usize> = match prior {
        Some(z_hist) => (0..points.len())
            .filter(|&j| {
                let z = points[j].z;
                z_hist - params.delta_lower <= z && z <= z_hist + params.delta_upper
            })
            .collect(),
        None => (0..points.len()).collect(),
    };
    if candidates.is_empty() {
        return Err(SegError::NoCandidates);
    }
    // stable: equal heights keep input order
    candidates.sort_by(|&a, &b| points[a].z.total_cmp(&points[b].z));
    let seeds = &candidates[..params.seed_count.min(candidates.len())];
    let z_init = seeds.iter().map(|&j| points[j].z).sum::<f64>() / seeds.len() as f64;
    let limit = z_init + params.delta_seed;
    Ok((0..points.len()).filter(|&j| points[j].z <= limit).collect())
}

const DEGENERATE_RATIO: f64 = 1e-10;

/// Least-squares plane through `points`: the normal is the eigenvector of the
/// smallest eigenvalue of the population covariance.
pub fn pca_plane(points: &[Vec3]) -> Result<PlaneEstimate, SegError> {
    if points.len() < 3 {
        return Err(SegError::Degenerate);
    }
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let largest = eig.eigenvalues[order[2]];
    let middle = eig.eigenvalues[order[1]];
    if !(largest > 0.0) || middle <= DEGENERATE_RATIO * largest {
        return Err(SegError::Degenerate);
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned().normalize();
    if flip_normal(&normal) {
        normal = -normal;
    }
    Ok(PlaneEstimate {
        normal,
        offset: -normal.dot(&centroid),
        centroid,
    })
}

/// Sign convention: `n_z >= 0`; horizontal normals point toward +x, then +y.
fn flip_normal(n: &Vec3) -> bool {
    const EPS: f64 = 1e-12;
    if n.z.abs() > EPS {
        n.z < 0.0
    } else if n.x.abs() > EPS {
        n.x < 0.0
    } else {
        n.y < 0.0
    }
}

fn subset(points: &[Vec3], idx: &[usize]) -> Vec<Vec3> {
    idx.iter().map(|&i| points[i]).collect()
}

/// Alternates plane fitting and `|n·p + d| < τ_d` reselection over the whole
/// cell until the set stops changing or `max_iterations` is reached. The
/// returned plane is the one that selected the returned set.
pub fn refine_plane(
    points: &[Vec3],
    initial: &[usize],
    params: &SegParams,
) -> Result<(Vec<usize>, PlaneEstimate), SegError> {
    let mut current = initial.to_vec();
    let mut plane = pca_plane(&subset(points, &current))?;
    for iteration in 0..params.max_iterations.max(1) {
        if iteration > 0 {
            plane = pca_plane(&subset(points, &current))?;
        }
        let next: Vec<usize> = (0..points.len())
            .filter(|&j| plane.signed_distance(&points[j]).abs() < params.plane_distance)
            .collect();
        if next == current {
            break;
        }
        current = next;
    }
    if current.len() < 3 {
        return Err(SegError::Degenerate);
    }
    Ok((current, plane))
}

/// Mean and population standard deviation of the heights in `idx`.
pub fn height_stats(points: &[Vec3], idx: &[usize]) -> (f64, f64) {
    let n = idx.len() as f64;
    let mean = idx.iter().map(|&i| points[i].z).sum::<f64>() / n;
    let var = idx.iter().map(|&i| (points[i].z - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Applies the three acceptance criteria. Without a prior the elevation
/// criterion passes.
pub fn gate_cell(
    cell: CellIndex,
    points: &[Vec3],
    ground: Vec<usize>,
    plane: PlaneEstimate,
    prior: Option<f64>,
    params: &SegParams,
) -> CellSegmentation {
    let (mean_height, dispersion) = height_stats(points, &ground);
    let mut reasons = RejectReasons::empty();
    if plane.normal.z.abs() < params.uprightness_angle.cos() {
        reasons |= RejectReasons::UPRIGHTNESS;
    }
    if let Some(z_hist) = prior {
        if !((mean_height - z_hist).abs() < params.elevation_tolerance) {
            reasons |= RejectReasons::ELEVATION;
        }
    }
    if !(dispersion < params.dispersion_tolerance) {
        reasons |= RejectReasons::STABILITY;
    }
    CellSegmentation {
        cell,
        ground,
        plane: Some(plane),
        mean_height,
        dispersion,
        verdict: reasons.is_empty(),
        reasons,
    }
}

/// Seeds, refines and gates one cell's points.
pub fn estimate_cell(cell: CellIndex, points: &[Vec3], prior: Option<f64>, params: &SegParams) -> CellSegmentation {
    if points.len() < params.min_points {
        return CellSegmentation::rejected(cell, RejectReasons::TOO_FEW_POINTS);
    }
    let seed_prior = if params.prior_seeds { prior } else { None };
    let fitted = seed_init(points, seed_prior, params).and_then(|g0| refine_plane(points, &g0, params));
    match fitted {
        Ok((ground, plane)) => gate_cell(cell, points, ground, plane, prior, params),
        Err(_) => CellSegmentation::rejected(cell, RejectReasons::DEGENERATE),
    }
}

/// Second pass over the residual of an accepted cell. Runs when the residual
/// is larger than `N_re` and its mean height lies within `δ_z` of the
/// accepted ground; returns the residual's ground set when it passes the gate.
pub fn local_resegment(
    points: &[Vec3],
    accepted: &CellSegmentation,
    prior: Option<f64>,
    params: &SegParams,
) -> Vec<usize> {
    if !accepted.verdict {
        return Vec::new();
    }
    let mut in_ground = vec![false; points.len()];
    for &i in &accepted.ground {
        in_ground[i] = true;
    }
    let residual: Vec<usize> = (0..points.len()).filter(|&i| !in_ground[i]).collect();
    if residual.len() <= params.reseg_min_points || residual.is_empty() {
        return Vec::new();
    }
    let (residual_mean, _) = height_stats(points, &residual);
    if !((residual_mean - accepted.mean_height).abs() < params.reseg_height_gap) {
        return Vec::new();
    }
    let sub = subset(points, &residual);
    let second = estimate_cell(accepted.cell, &sub, prior, params);
    if second.verdict {
        second.ground.iter().map(|&i| residual[i]).collect()
    } else {
        Vec::new()
    }
}

/// Points of a rejected cell at or below `z_hist + δ_h`.
pub fn recall_points(points: &[Vec3], z_hist: f64, params: &SegParams) -> Vec<usize> {
    let limit = z_hist + params.recall_margin;
    (0..points.len()).filter(|&i| points[i].z <= limit).collect()
}

/// Prior-based recall over the given rejected cells of a partition. Returns
/// partition-level point indices per cell; empty without a prior.
pub fn global_recall(
    partition: &GridPartition,
    rejected: &[CellIndex],
    prior: &dyn TerrainPrior,
    params: &SegParams,
) -> BTreeMap<CellIndex, Vec<usize>> {
    let mut out = BTreeMap::new();
    for cell in rejected {
        let Some(idx) = partition.cells.get(cell) else {
            continue;
        };
        let (cx, cy) = cell.center(partition.resolution);
        let Some(z_hist) = prior.height_at(cx, cy) else {
            continue;
        };
        let pts = partition.cell_positions(cell);
        out.insert(*cell, recall_points(&pts, z_hist, params).into_iter().map(|i| idx[i]).collect());
    }
    out
}

/// Everything learned about one cell in one frame; index lists are local to
/// the cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub seg: CellSegmentation,
    pub resegmented: Vec<usize>,
    pub recalled: Vec<usize>,
    pub total: usize,
}

impl CellOutcome {
    /// Accepted ground plus re-segmented points, or the recalled points.
    pub fn final_ground(&self) -> Vec<usize> {
        let mut g: Vec<usize> = self
            .seg
            .ground
            .iter()
            .filter(|_| self.seg.verdict)
            .chain(&self.resegmented)
            .chain(&self.recalled)
            .copied()
            .collect();
        g.sort_unstable();
        g.dedup();
        g
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameSegmentation {
    pub cells: Vec<CellOutcome>,
    /// Sorted partition-level indices of all ground points.
    pub ground: Vec<usize>,
}

impl FrameSegmentation {
    /// Ground heights per cell, for control-point generation.
    pub fn ground_heights(&self, partition: &GridPartition) -> BTreeMap<CellIndex, Vec<f64>> {
        let mut out = BTreeMap::new();
        for c in &self.cells {
            let local = c.final_ground();
            if local.is_empty() {
                continue;
            }
            let idx = &partition.cells[&c.seg.cell];
            out.insert(c.seg.cell, local.iter().map(|&i| partition.points[idx[i]].position.z).collect());
        }
        out
    }

    /// Boolean ground mask over the partition's points.
    pub fn mask(&self, n_points: usize) -> Vec<bool> {
        let mut m = vec![false; n_points];
        for &i in &self.ground {
            m[i] = true;
        }
        m
    }

    /// One text record per cell:
    /// `u v n_x n_y n_z d zbar sigma phi reasons count_ground count_total`.
    pub fn dump(&self) -> String {
        let mut s = String::from("# u v n_x n_y n_z d zbar sigma phi reasons count_ground count_total\n");
        for c in &self.cells {
            let seg = &c.seg;
            let (n, d) = match &seg.plane {
                Some(p) => (p.normal, p.offset),
                None => (Vec3::repeat(f64::NAN), f64::NAN),
            };
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {} {} {} {}",
                seg.cell.u,
                seg.cell.v,
                n.x,
                n.y,
                n.z,
                d,
                seg.mean_height,
                seg.dispersion,
                u8::from(seg.verdict),
                seg.reasons,
                c.final_ground().len(),
                c.total
            );
        }
        s
    }
}

fn process_cell(
    cell: CellIndex,
    points: &[Vec3],
    prior: &dyn TerrainPrior,
    resolution: f64,
    params: &SegParams,
) -> CellOutcome {
    let (cx, cy) = cell.center(resolution);
    let z_hist = prior.height_at(cx, cy);
    let seg = estimate_cell(cell, points, z_hist, params);
    let mut resegmented = Vec::new();
    let mut recalled = Vec::new();
    if params.refinement {
        if seg.verdict {
            resegmented = local_resegment(points, &seg, z_hist, params);
        } else if let Some(z) = z_hist {
            recalled = recall_points(points, z, params);
        }
    }
    CellOutcome {
        seg,
        resegmented,
        recalled,
        total: points.len(),
    }
}

pub fn segment_frame(partition: &GridPartition, prior: &dyn TerrainPrior, params: &SegParams) -> FrameSegmentation {
    segment_frame_with(partition, prior, params, Execution::default())
}

/// [`segment_frame`] with an explicit execution mode. The prior is read-only
/// for the whole call.
pub fn segment_frame_with(
    partition: &GridPartition,
    prior: &dyn TerrainPrior,
    params: &SegParams,
    mode: Execution,
) -> FrameSegmentation {
    let cells: Vec<(&CellIndex, &Vec<usize>)> = partition.cells.iter().collect();
    let outcomes = par::map(&cells, mode, |(cell, idx)| {
        let pts: Vec<Vec3> = idx.iter().map(|&i| partition.points[i].position).collect();
        process_cell(**cell, &pts, prior, partition.resolution, params)
    });
    let mut ground = Vec::new();
    for (c, (_, idx)) in outcomes.iter().zip(&cells) {
        ground.extend(c.final_ground().into_iter().map(|i| idx[i]));
    }
    ground.sort_unstable();
    ground.dedup();
    FrameSegmentation {
        cells: outcomes,
        ground,
    }
}
