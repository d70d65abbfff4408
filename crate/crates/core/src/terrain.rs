//! Control-point lattice, tensor-product B-spline heightfield and the
//! terrain-referenced altitude command.
//!
//! Knots are uniform at the control spacing and shifted so that each basis
//! function peaks over its cell center. The lattice is padded by `⌊k/2⌋`
//! linearly extrapolated layers per side, which makes the surface reproduce
//! affine height fields exactly and interpolate the boundary cell centers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{IoError, TerrainError};
use crate::preprocess::CellIndex;
use crate::segment::TerrainPrior;

/// Highest supported spline degree per axis.
pub const MAX_DEGREE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlPoint {
    pub u: i64,
    pub v: i64,
    pub x: f64,
    pub y: f64,
    pub h: f64,
    pub last_update_frame: u64,
}

impl ControlPoint {
    pub fn at_cell(cell: CellIndex, s: f64, h: f64, frame: u64) -> Self {
        let (x, y) = cell.center(s);
        Self {
            u: cell.u,
            v: cell.v,
            x,
            y,
            h,
            last_update_frame: frame,
        }
    }

    pub fn cell(&self) -> CellIndex {
        CellIndex::new(self.u, self.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateParams {
    /// ρ: quantile fraction in (0, 1).
    pub rho: f64,
    /// τ_c, m.
    pub tau_c: f64,
}

impl Default for UpdateParams {
    fn default() -> Self {
        Self { rho: 0.2, tau_c: 0.1 }
    }
}

/// Lower-quantile representative `z_(⌊ρ·n⌋)`, 0-based and clamped.
pub fn quantile_height(heights: &[f64], rho: f64) -> Option<f64> {
    if heights.is_empty() {
        return None;
    }
    let mut sorted = heights.to_vec();
    sorted.sort_by(f64::total_cmp);
    let idx = ((rho * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    Some(sorted[idx])
}

/// One control point per non-empty ground set, placed at its cell center.
pub fn make_control_points(
    ground_cells: &BTreeMap<CellIndex, Vec<f64>>,
    s: f64,
    rho: f64,
    frame: u64,
) -> Vec<ControlPoint> {
    ground_cells
        .iter()
        .filter_map(|(cell, hs)| quantile_height(hs, rho).map(|h| ControlPoint::at_cell(*cell, s, h, frame)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlLattice {
    resolution: f64,
    points: BTreeMap<CellIndex, ControlPoint>,
}

impl ControlLattice {
    pub fn new(resolution: f64) -> Self {
        assert!(resolution > 0.0, "lattice resolution must be positive");
        Self {
            resolution,
            points: BTreeMap::new(),
        }
    }

    pub fn from_points(resolution: f64, points: impl IntoIterator<Item = ControlPoint>) -> Self {
        let mut l = Self::new(resolution);
        for p in points {
            l.points.insert(p.cell(), p);
        }
        l
    }

    /// Lattice with `h = f(x, y)` at every cell center of the index rectangle.
    pub fn from_fn(resolution: f64, u: (i64, i64), v: (i64, i64), f: impl Fn(f64, f64) -> f64) -> Self {
        let mut l = Self::new(resolution);
        for iu in u.0..=u.1 {
            for iv in v.0..=v.1 {
                let c = CellIndex::new(iu, iv);
                let (x, y) = c.center(resolution);
                l.points.insert(c, ControlPoint::at_cell(c, resolution, f(x, y), 0));
            }
        }
        l
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, cell: &CellIndex) -> Option<&ControlPoint> {
        self.points.get(cell)
    }

    pub fn points(&self) -> impl Iterator<Item = &ControlPoint> {
        self.points.values()
    }

    /// Inclusive index rectangle `((u_min, u_max), (v_min, v_max))`.
    pub fn bounds(&self) -> Option<((i64, i64), (i64, i64))> {
        let mut it = self.points.keys();
        let first = it.next()?;
        let init = ((first.u, first.u), (first.v, first.v));
        Some(it.fold(init, |((u0, u1), (v0, v1)), c| {
            ((u0.min(c.u), u1.max(c.u)), (v0.min(c.v), v1.max(c.v)))
        }))
    }

    /// A `# resolution s` line, then control records `u v x y h`.
    pub fn export(&self) -> String {
        let mut s = format!("# resolution {}\n# u v x y h\n", self.resolution);
        for p in self.points.values() {
            let _ = writeln!(s, "{} {} {} {} {}", p.u, p.v, p.x, p.y, p.h);
        }
        s
    }

    /// Reads the [`export`](Self::export) format back. Cell centers are
    /// recomputed from `u v`; the `x y` columns must agree with them.
    pub fn parse_export(text: &str, source: &Path) -> Result<Self, IoError> {
        let mut resolution = None;
        let mut rows = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let t = line.trim();
            if let Some(rest) = t.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("resolution") {
                    let s: f64 = v.trim().parse().map_err(|_| IoError::malformed(source, i + 1, line))?;
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(IoError::malformed(source, i + 1, line));
                    }
                    resolution = Some(s);
                }
                continue;
            }
            if t.is_empty() {
                continue;
            }
            let f: Vec<&str> = t.split_ascii_whitespace().collect();
            let parsed = (|| {
                if f.len() != 5 {
                    return None;
                }
                let u: i64 = f[0].parse().ok()?;
                let v: i64 = f[1].parse().ok()?;
                let x: f64 = f[2].parse().ok()?;
                let y: f64 = f[3].parse().ok()?;
                let h: f64 = f[4].parse().ok()?;
                h.is_finite().then_some((u, v, x, y, h))
            })();
            rows.push((i + 1, line, parsed.ok_or_else(|| IoError::malformed(source, i + 1, line))?));
        }
        let s = resolution.ok_or_else(|| IoError::Invalid {
            path: source.to_path_buf(),
            reason: "missing `# resolution` line".into(),
        })?;
        let mut lattice = Self::new(s);
        for (line_no, line, (u, v, x, y, h)) in rows {
            let p = ControlPoint::at_cell(CellIndex::new(u, v), s, h, 0);
            if (p.x - x).abs() > 1e-6 * s || (p.y - y).abs() > 1e-6 * s {
                return Err(IoError::malformed(source, line_no, line));
            }
            lattice.points.insert(p.cell(), p);
        }
        Ok(lattice)
    }
}

/// Conservative update: a cell adopts the new height when it has no history
/// or the change exceeds `tau_c`. Returns the cells that changed.
pub fn incremental_update(
    lattice: &mut ControlLattice,
    new_points: &[ControlPoint],
    tau_c: f64,
) -> BTreeSet<CellIndex> {
    let mut changed = BTreeSet::new();
    for p in new_points {
        let cell = p.cell();
        let adopt = match lattice.points.get(&cell) {
            None => true,
            Some(old) => (p.h - old.h).abs() > tau_c,
        };
        if adopt {
            lattice.points.insert(cell, *p);
            changed.insert(cell);
        }
    }
    changed
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightQuery {
    pub z: f64,
    /// The query lay outside the domain and was clamped onto it.
    pub extrapolated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AltitudeCommand {
    pub z_terr: f64,
    pub z_cmd: f64,
    pub extrapolated: bool,
}

/// One spline axis: `n` real controls starting at cell index `first`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Axis {
    first: i64,
    n: usize,
    degree: usize,
    pad: usize,
    origin: f64,
    step: f64,
}

impl Axis {
    fn new(first: i64, last: i64, requested: usize, step: f64) -> Self {
        let n = (last - first + 1) as usize;
        let degree = requested.min(n - 1).min(MAX_DEGREE);
        Self {
            first,
            n,
            degree,
            pad: degree / 2,
            origin: (first as f64 + 0.5) * step,
            step,
        }
    }

    fn ext_len(&self) -> usize {
        self.n + 2 * self.pad
    }

    fn domain(&self) -> (f64, f64) {
        (self.origin, self.origin + (self.n - 1) as f64 * self.step)
    }

    /// Clamped coordinate, the extended index of the first active control and
    /// the `degree + 1` basis values.
    fn eval(&self, x: f64, out: &mut [f64; MAX_DEGREE + 1]) -> (bool, usize) {
        let (lo, hi) = self.domain();
        let xc = x.clamp(lo, hi);
        let extrapolated = xc != x || x.is_nan();
        let xc = if x.is_nan() { lo } else { xc };
        let p = self.degree;
        // knots sit at integers in the normalized coordinate
        let xi = (xc - self.origin) / self.step + (p as f64 + 1.0) / 2.0;
        let span_min = p as i64 - self.pad as i64;
        let span_max = self.n as i64 - 1 + self.pad as i64;
        let span = (xi.floor() as i64).clamp(span_min, span_max);
        basis_funs(span, xi, p, out);
        // active basis indices span-p ..= span, shifted into extended storage
        (extrapolated, (span - p as i64 + self.pad as i64) as usize)
    }
}

/// Nonzero uniform B-spline basis values of degree `p` on span `[i, i+1)` of
/// integer knots, via the triangular Cox-de Boor recurrence.
fn basis_funs(i: i64, xi: f64, p: usize, n: &mut [f64; MAX_DEGREE + 1]) {
    let mut left = [0.0; MAX_DEGREE + 1];
    let mut right = [0.0; MAX_DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=p {
        left[j] = xi - (i + 1 - j as i64) as f64;
        right[j] = (i + j as i64) as f64 - xi;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerrainSurface {
    lattice: ControlLattice,
    ax: Axis,
    ay: Axis,
    /// Extended coefficients, `ext_x` columns by `ext_y` rows, x fastest.
    coeffs: Vec<f64>,
    /// Real cells that were filled from a neighbor.
    filled: BTreeSet<CellIndex>,
}

pub fn fit_surface(lattice: &ControlLattice, kx: usize, ky: usize) -> Result<TerrainSurface, TerrainError> {
    let ((u0, u1), (v0, v1)) = lattice.bounds().ok_or(TerrainError::EmptyLattice)?;
    let s = lattice.resolution;
    let ax = Axis::new(u0, u1, kx, s);
    let ay = Axis::new(v0, v1, ky, s);
    let (ex, ey) = (ax.ext_len(), ay.ext_len());
    let mut coeffs = vec![0.0; ex * ey];
    let mut filled = BTreeSet::new();

    let known: Vec<&ControlPoint> = lattice.points.values().collect();
    for iv in 0..ay.n {
        for iu in 0..ax.n {
            let cell = CellIndex::new(u0 + iu as i64, v0 + iv as i64);
            let h = match lattice.points.get(&cell) {
                Some(p) => p.h,
                None => {
                    filled.insert(cell);
                    nearest_height(&known, cell)
                }
            };
            coeffs[(iv + ay.pad) * ex + iu + ax.pad] = h;
        }
    }
    // linear extrapolation along x on real rows, then along y on all columns
    for iv in ay.pad..ay.pad + ay.n {
        let row = &mut coeffs[iv * ex..(iv + 1) * ex];
        extrapolate(row, ax.pad, ax.n, 1);
    }
    for iu in 0..ex {
        extrapolate(&mut coeffs[iu..], ay.pad, ay.n, ex);
    }
    Ok(TerrainSurface {
        lattice: lattice.clone(),
        ax,
        ay,
        coeffs,
        filled,
    })
}

/// Fills `pad` slots on both sides of the `n` real values at stride `stride`.
fn extrapolate(data: &mut [f64], pad: usize, n: usize, stride: usize) {
    if pad == 0 {
        return;
    }
    let at = |i: usize| i * stride;
    let (first, last) = (pad, pad + n - 1);
    let d0 = if n > 1 { data[at(first + 1)] - data[at(first)] } else { 0.0 };
    let d1 = if n > 1 { data[at(last)] - data[at(last - 1)] } else { 0.0 };
    for m in 1..=pad {
        data[at(first - m)] = data[at(first)] - m as f64 * d0;
        data[at(last + m)] = data[at(last)] + m as f64 * d1;
    }
}

/// Height of the nearest known control (index distance); ties go to the lower.
fn nearest_height(known: &[&ControlPoint], cell: CellIndex) -> f64 {
    let mut best = (i64::MAX, f64::INFINITY);
    for p in known {
        let d = (p.u - cell.u).pow(2) + (p.v - cell.v).pow(2);
        if d < best.0 || (d == best.0 && p.h < best.1) {
            best = (d, p.h);
        }
    }
    best.1
}

impl TerrainSurface {
    pub fn lattice(&self) -> &ControlLattice {
        &self.lattice
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.ax.degree, self.ay.degree)
    }

    /// `((x_min, x_max), (y_min, y_max))`, spanning the outer cell centers.
    pub fn domain(&self) -> ((f64, f64), (f64, f64)) {
        (self.ax.domain(), self.ay.domain())
    }

    pub fn filled_cells(&self) -> &BTreeSet<CellIndex> {
        &self.filled
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let ((x0, x1), (y0, y1)) = self.domain();
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
    }

    pub fn query(&self, x: f64, y: f64) -> HeightQuery {
        let mut bx = [0.0; MAX_DEGREE + 1];
        let mut by = [0.0; MAX_DEGREE + 1];
        let (ex_x, ix) = self.ax.eval(x, &mut bx);
        let (ex_y, iy) = self.ay.eval(y, &mut by);
        let stride = self.ax.ext_len();
        let mut z = 0.0;
        for (b, wy) in by.iter().enumerate().take(self.ay.degree + 1) {
            let row = &self.coeffs[(iy + b) * stride + ix..];
            let mut acc = 0.0;
            for (a, wx) in bx.iter().enumerate().take(self.ax.degree + 1) {
                acc += wx * row[a];
            }
            z += wy * acc;
        }
        HeightQuery {
            z,
            extrapolated: ex_x || ex_y,
        }
    }

    /// Basis weights used at `(x, y)`, keyed by lattice cell index (padding
    /// layers carry indices outside the index rectangle).
    pub fn weights_at(&self, x: f64, y: f64) -> Vec<(CellIndex, f64)> {
        let mut bx = [0.0; MAX_DEGREE + 1];
        let mut by = [0.0; MAX_DEGREE + 1];
        let (_, ix) = self.ax.eval(x, &mut bx);
        let (_, iy) = self.ay.eval(y, &mut by);
        let mut out = Vec::with_capacity((self.ax.degree + 1) * (self.ay.degree + 1));
        for b in 0..=self.ay.degree {
            for a in 0..=self.ax.degree {
                let u = self.ax.first + (ix + a) as i64 - self.ax.pad as i64;
                let v = self.ay.first + (iy + b) as i64 - self.ay.pad as i64;
                out.push((CellIndex::new(u, v), bx[a] * by[b]));
            }
        }
        out
    }

    /// Dense `x y z` samples over the domain at spacing `step`.
    pub fn export_dense(&self, step: f64) -> String {
        assert!(step > 0.0, "sampling step must be positive");
        let ((x0, x1), (y0, y1)) = self.domain();
        let nx = ((x1 - x0) / step).floor() as usize;
        let ny = ((y1 - y0) / step).floor() as usize;
        let mut s = String::from("# x y z\n");
        for j in 0..=ny {
            let y = y0 + j as f64 * step;
            for i in 0..=nx {
                let x = x0 + i as f64 * step;
                let _ = writeln!(s, "{} {} {}", x, y, self.query(x, y).z);
            }
        }
        s
    }
}

pub fn query_height(surface: &TerrainSurface, x: f64, y: f64) -> HeightQuery {
    surface.query(x, y)
}

/// `z_cmd = z_terr + h_ref`.
pub fn altitude_command(surface: &TerrainSurface, x: f64, y: f64, h_ref: f64) -> AltitudeCommand {
    let q = surface.query(x, y);
    AltitudeCommand {
        z_terr: q.z,
        z_cmd: q.z + h_ref,
        extrapolated: q.extrapolated,
    }
}

/// Outside the domain the prior is the clamped boundary height.
impl TerrainPrior for TerrainSurface {
    fn height_at(&self, x: f64, y: f64) -> Option<f64> {
        Some(self.query(x, y).z)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cp(u: i64, v: i64, h: f64) -> ControlPoint {
        ControlPoint::at_cell(CellIndex::new(u, v), 1.0, h, 0)
    }

    #[test]
    fn quantile_examples() {
        assert_eq!(quantile_height(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.2), Some(2.0));
        assert_eq!(quantile_height(&[7.0], 0.9), Some(7.0));
        assert_eq!(quantile_height(&[3.0, 1.0, 2.0], 0.0), Some(1.0));
        assert_eq!(quantile_height(&[3.0, 1.0, 2.0], 0.999), Some(3.0));
        assert_eq!(quantile_height(&[], 0.2), None);
    }

    #[test]
    fn control_point_at_center() {
        let mut g = BTreeMap::new();
        g.insert(CellIndex::new(-2, 3), vec![1.0]);
        let c = make_control_points(&g, 0.5, 0.2, 4);
        assert_eq!((c[0].x, c[0].y), (-0.75, 1.75));
        assert_eq!(c[0].last_update_frame, 4);
    }

    #[test]
    fn update_rule() {
        let mut l = ControlLattice::new(1.0);
        assert_eq!(incremental_update(&mut l, &[cp(0, 0, 2.0)], 0.1).len(), 1);
        assert!(incremental_update(&mut l, &[cp(0, 0, 2.05)], 0.1).is_empty());
        assert_eq!(l.get(&CellIndex::new(0, 0)).unwrap().h, 2.0);
        let ch = incremental_update(&mut l, &[cp(0, 0, 2.5)], 0.1);
        assert!(ch.contains(&CellIndex::new(0, 0)));
        assert_eq!(l.get(&CellIndex::new(0, 0)).unwrap().h, 2.5);
    }

    #[test]
    fn constant_surface() {
        let l = ControlLattice::from_fn(1.0, (-3, 4), (-2, 2), |_, _| 7.0);
        let s = fit_surface(&l, 3, 3).unwrap();
        assert!((s.query(0.2, -1.7).z - 7.0).abs() < 1e-9);
        assert!((s.query(3.2, -1.7).z - 7.0).abs() < 1e-9);
    }

    #[test]
    fn plane_reproduction_at_x10() {
        let l = ControlLattice::from_fn(1.0, (0, 15), (0, 4), |x, _| 0.2 * x);
        let s = fit_surface(&l, 3, 3).unwrap();
        let q = s.query(10.0, 2.0);
        assert!(!q.extrapolated);
        assert!((q.z - 2.0).abs() < 1e-9);
    }

    #[test]
    fn single_cell_is_constant() {
        let l = ControlLattice::from_points(1.0, [cp(5, 5, 1.25)]);
        let s = fit_surface(&l, 3, 3).unwrap();
        assert_eq!(s.degrees(), (0, 0));
        let q = s.query(5.5, 5.5);
        assert_eq!(q.z, 1.25);
        assert!(!q.extrapolated);
        assert!(s.query(9.0, 5.5).extrapolated);
    }

    #[test]
    fn empty_lattice_errors() {
        assert_eq!(fit_surface(&ControlLattice::new(1.0), 3, 3), Err(TerrainError::EmptyLattice));
    }

    #[test]
    fn out_of_domain_clamps() {
        let l = ControlLattice::from_fn(1.0, (0, 5), (0, 5), |x, y| x + 2.0 * y);
        let s = fit_surface(&l, 3, 3).unwrap();
        let inside = s.query(5.5, 2.5);
        let outside = s.query(40.0, 2.5);
        assert!(outside.extrapolated && !inside.extrapolated);
        assert_eq!(outside.z, inside.z);
        assert_eq!(s.height_at(40.0, 2.5), Some(inside.z));
    }

    #[test]
    fn holes_take_nearest_lower() {
        // (1,0) is equidistant from (0,0) and (2,0)
        let l = ControlLattice::from_points(1.0, [cp(0, 0, 3.0), cp(2, 0, 1.0), cp(0, 1, 3.0), cp(2, 1, 1.0)]);
        let s = fit_surface(&l, 1, 1).unwrap();
        assert!(s.filled_cells().contains(&CellIndex::new(1, 0)));
        assert!((s.query(1.5, 0.5).z - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corners_interpolated() {
        let l = ControlLattice::from_fn(1.0, (0, 6), (0, 5), |x, y| (x * 0.7).sin() + (y * 1.3).cos());
        for k in 1..=3 {
            let s = fit_surface(&l, k, k).unwrap();
            for (u, v) in [(0, 0), (6, 0), (0, 5), (6, 5)] {
                let p = l.get(&CellIndex::new(u, v)).unwrap();
                assert!((s.query(p.x, p.y).z - p.h).abs() < 1e-12, "k={k} ({u},{v})");
            }
        }
    }

    #[test]
    fn altitude_command_adds_reference() {
        let l = ControlLattice::from_fn(1.0, (0, 3), (0, 3), |_, _| 2.0);
        let s = fit_surface(&l, 3, 3).unwrap();
        let c = altitude_command(&s, 1.0, 1.0, 3.0);
        assert!((c.z_cmd - 5.0).abs() < 1e-12);
        assert!(!c.extrapolated);
    }

    #[test]
    fn exports() {
        let l = ControlLattice::from_fn(1.0, (0, 1), (0, 0), |x, _| x);
        let text = l.export();
        assert_eq!(text, "# resolution 1\n# u v x y h\n0 0 0.5 0.5 0.5\n1 0 1.5 0.5 1.5\n");
        assert_eq!(ControlLattice::parse_export(&text, Path::new("l.txt")).unwrap(), l);
        let bad = ControlLattice::parse_export("# resolution 1\n0 0 9 0.5 1\n", Path::new("l.txt"));
        assert!(matches!(bad, Err(IoError::MalformedRecord { line: 2, .. })));
        assert!(ControlLattice::parse_export("0 0 0.5 0.5 1\n", Path::new("l.txt")).is_err());
        let s = fit_surface(&l, 3, 3).unwrap();
        assert_eq!(s.export_dense(0.5).lines().count(), 4);
    }
}
