//! Point-set registration of spot-centroid clouds.
//!
//! Rigid ICP alternates nearest-neighbour correspondence with a least-squares
//! rigid fit, minimizing `Σ ‖(R a_i + t) − b_j‖²` where `b_j` is the target
//! point closest to the transformed source point `a_i`. Procrustes analysis
//! then scores one-to-one paired landmarks under similarity transforms.
//! Reflections are never allowed: spot layouts are chirality-bearing.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{Matrix2, Point2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = Point2<f64>;

/// Ordered spot centroids in pixel coordinates `(x, y)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpotCloud {
    pub points: Vec<Point>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x: f64,
    y: f64,
}

impl SpotCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite point ({}, {})", p.x, p.y)));
        }
        Ok(Self { points })
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Self::new(xy.iter().map(|&(x, y)| Point::new(x, y)).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Option<Point> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vector2::zeros(), |acc, p| acc + p.coords);
        Some(Point::from(sum / self.points.len() as f64))
    }

    pub fn transformed(&self, t: &RigidTransform) -> SpotCloud {
        SpotCloud {
            points: self.points.iter().map(|p| t.apply(p)).collect(),
        }
    }

    /// Writes `x,y` CSV. Coordinates use the shortest representation that
    /// parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "y"])?;
        for p in &self.points {
            w.write_record([p.x.to_string(), p.y.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::InvalidInput(format!(
                "spot cloud CSV must have header `x,y`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for row in r.deserialize::<CsvRow>() {
            let row = row?;
            points.push(Point::new(row.x, row.y));
        }
        Self::new(points)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(file)
    }

    pub fn open_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }
}

/// Planar rotation plus translation: `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix2::identity(),
            translation: Vector2::zeros(),
        }
    }

    pub fn from_angle(radians: f64, translation: Vector2<f64>) -> Self {
        Self {
            rotation: rotation_matrix(radians),
            translation,
        }
    }

    pub fn angle(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    #[inline]
    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.rotation * p.coords + self.translation)
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        let r = self.rotation * first.rotation;
        RigidTransform {
            rotation: rotation_matrix(r[(1, 0)].atan2(r[(0, 0)])),
            translation: self.rotation * first.translation + self.translation,
        }
    }
}

pub fn rotation_matrix(radians: f64) -> Matrix2<f64> {
    let (s, c) = radians.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Rotation `R` maximizing `tr(R N)` for `N = Σ a_i b_iᵀ`, so that `R a_i ≈ b_i`.
/// Returns the rotation and the attained maximum. The determinant correction
/// keeps `R` proper.
fn best_rotation(n: &Matrix2<f64>) -> (Matrix2<f64>, f64) {
    let svd = n.svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    let d = if d == 0.0 { 1.0 } else { d };
    let correction = Matrix2::new(1.0, 0.0, 0.0, d);
    let r = v * correction * u.transpose();
    let max = svd.singular_values[0] + d * svd.singular_values[1];
    // Snap to an exact rotation so RᵀR = I and det R = 1 hold to rounding.
    (rotation_matrix(r[(1, 0)].atan2(r[(0, 0)])), max)
}

/// For each source point, the nearest target point `(source_index, target_index, distance)`.
/// Ties go to the lowest target index.
pub fn nearest_correspondences(source: &SpotCloud, target: &SpotCloud) -> Result<Vec<(usize, usize, f64)>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput(
            "nearest correspondences need non-empty source and target".into(),
        ));
    }
    Ok(source
        .points
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let (j, d2) = nearest(a, &target.points);
            (i, j, d2.sqrt())
        })
        .collect())
}

/// Brute-force nearest neighbour, returning `(index, squared distance)`.
fn nearest(a: &Point, targets: &[Point]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, b) in targets.iter().enumerate() {
        let d2 = (a - b).norm_squared();
        if d2 < best.1 {
            best = (j, d2);
        }
    }
    best
}

/// Least-squares rigid transform mapping `source[i]` onto `target[i]`.
pub fn estimate_rigid(source: &[Point], target: &[Point]) -> Result<RigidTransform> {
    if source.len() != target.len() {
        return Err(Error::InvalidInput(format!(
            "paired sequences differ in length: {} vs {}",
            source.len(),
            target.len()
        )));
    }
    let n = source.len();
    if n < 2 {
        return Err(Error::DegenerateGeometry(format!(
            "rigid estimation needs at least 2 pairs, got {n}"
        )));
    }
    let inv = 1.0 / n as f64;
    let ca = source.iter().fold(Vector2::zeros(), |s, p| s + p.coords) * inv;
    let cb = target.iter().fold(Vector2::zeros(), |s, p| s + p.coords) * inv;
    let mut cov = Matrix2::zeros();
    let mut spread = 0.0;
    for (a, b) in source.iter().zip(target) {
        let da = a.coords - ca;
        cov += da * (b.coords - cb).transpose();
        spread += da.norm_squared();
    }
    let scale = source
        .iter()
        .map(|p| p.coords.amax())
        .fold(1.0f64, f64::max);
    if spread <= (1e-12 * scale).powi(2) * n as f64 {
        return Err(Error::DegenerateGeometry("all source points coincide".into()));
    }
    let (rotation, _) = best_rotation(&cov);
    Ok(RigidTransform {
        rotation,
        translation: cb - rotation * ca,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iter: usize,
    /// Stop once consecutive objective values differ by less than this.
    pub tol: f64,
    /// Extra starting rotations on each side of the identity pose; 0 gives
    /// single-start ICP.
    pub rotation_starts: usize,
    /// Spacing of the starting rotations, in degrees.
    pub start_step_deg: f64,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-8,
            rotation_starts: 2,
            start_step_deg: 15.0,
        }
    }
}

impl IcpParams {
    /// Starting rotations in trial order: 0, +s, -s, +2s, -2s, ...
    pub fn start_angles_deg(&self) -> Vec<f64> {
        let mut out = vec![0.0];
        for k in 1..=self.rotation_starts {
            let a = k as f64 * self.start_step_deg;
            out.extend([a, -a]);
        }
        out
    }
}

/// Per-point objective at or below which a start is taken as an exact fit
/// and the remaining starts are skipped.
const EXACT_FIT: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    /// Maps the original source cloud onto the target.
    pub transform: RigidTransform,
    /// Sum of squared nearest-neighbour distances after the final transform.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective before the first iteration followed by its value after each one.
    pub trace: Vec<f64>,
    /// Final `(source_index, target_index, distance)` correspondences.
    pub correspondences: Vec<(usize, usize, f64)>,
}

/// Rigid iterative closest point of `source` onto `target`.
///
/// ICP is run from the identity pose and from each starting rotation of
/// [`IcpParams::start_angles_deg`] about the source centroid; the run with
/// the lowest final objective wins (earlier starts win ties). The returned
/// trace and iteration count belong to the winning run.
pub fn icp(source: &SpotCloud, target: &SpotCloud, params: &IcpParams) -> Result<IcpResult> {
    if source.len() < 2 || target.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "ICP needs at least 2 points per cloud, got {} and {}",
            source.len(),
            target.len()
        )));
    }
    if !(params.tol >= 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be non-negative, got {}", params.tol)));
    }
    if !(params.start_step_deg.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "start_step_deg must be finite, got {}",
            params.start_step_deg
        )));
    }

    let centre = source.centroid().map(|c| c.coords).unwrap_or_default();
    let mut best: Option<IcpResult> = None;
    for angle in params.start_angles_deg() {
        let rotation = rotation_matrix(angle.to_radians());
        let start = RigidTransform {
            rotation,
            translation: centre - rotation * centre,
        };
        let run = icp_from(source, target, start, params)?;
        let exact = run.objective <= EXACT_FIT * source.len() as f64;
        if best.as_ref().is_none_or(|b| run.objective < b.objective) {
            best = Some(run);
        }
        if exact {
            break;
        }
    }
    Ok(best.expect("at least the identity start runs"))
}

fn icp_from(source: &SpotCloud, target: &SpotCloud, start: RigidTransform, params: &IcpParams) -> Result<IcpResult> {
    let mut transform = start;
    let mut moved = source.transformed(&start);
    let mut corr = nearest_correspondences(&moved, target)?;
    let mut objective: f64 = corr.iter().map(|c| c.2 * c.2).sum();
    let mut trace = vec![objective];
    let mut iterations = 0;
    let mut converged = false;
    let mut matched = Vec::with_capacity(source.len());

    while iterations < params.max_iter {
        matched.clear();
        matched.extend(corr.iter().map(|&(_, j, _)| target.points[j]));
        let step = match estimate_rigid(&moved.points, &matched) {
            Ok(step) => step,
            // Collapsed source (cannot happen for ≥ 2 distinct points); keep the current pose.
            Err(Error::DegenerateGeometry(_)) => break,
            Err(e) => return Err(e),
        };
        let candidate = step.compose(&transform);
        let candidate_moved = source.transformed(&candidate);
        let candidate_corr = nearest_correspondences(&candidate_moved, target)?;
        let candidate_obj: f64 = candidate_corr.iter().map(|c| c.2 * c.2).sum();
        iterations += 1;

        // Rounding can nudge a stationary objective up by a few ulps; keep the
        // recorded sequence monotone by retaining the previous pose then.
        let accepted = candidate_obj <= objective;
        let next_obj = if accepted { candidate_obj } else { objective };
        let delta = objective - next_obj;
        if accepted {
            transform = candidate;
            moved = candidate_moved;
            corr = candidate_corr;
            objective = candidate_obj;
        }
        trace.push(objective);
        if delta < params.tol || delta == 0.0 {
            converged = true;
            break;
        }
    }

    Ok(IcpResult {
        transform,
        objective,
        iterations,
        converged,
        trace,
        correspondences: corr,
    })
}

/// Greedy shortest-edge-first one-to-one pairing of `source` and `target` indices.
///
/// All pairs are visited in ascending distance (ties by source then target
/// index); a pair is taken when neither endpoint is used yet. The result has
/// `min(|source|, |target|)` pairs, sorted by source index.
pub fn one_to_one_assign(source: &SpotCloud, target: &SpotCloud) -> Result<Vec<(usize, usize)>> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidInput("one-to-one assignment needs non-empty clouds".into()));
    }
    let mut edges = Vec::with_capacity(source.len() * target.len());
    for (i, a) in source.points.iter().enumerate() {
        for (j, b) in target.points.iter().enumerate() {
            edges.push(((a - b).norm_squared(), i, j));
        }
    }
    edges.sort_unstable_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_s = vec![false; source.len()];
    let mut used_t = vec![false; target.len()];
    let want = source.len().min(target.len());
    let mut pairs = Vec::with_capacity(want);
    for (_, i, j) in edges {
        if !used_s[i] && !used_t[j] {
            used_s[i] = true;
            used_t[j] = true;
            pairs.push((i, j));
            if pairs.len() == want {
                break;
            }
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcrustesResult {
    /// Residual after superimposing the centered, unit-norm configurations.
    pub dissimilarity: f64,
    /// Scale taking `Y` onto `X`.
    pub scale: f64,
    pub rotation: Matrix2<f64>,
    pub translation: Vector2<f64>,
}

impl ProcrustesResult {
    /// Maps a point of the `Y` configuration into the frame of `X`.
    pub fn apply(&self, p: &Point) -> Point {
        Point::from(self.scale * (self.rotation * p.coords) + self.translation)
    }
}

/// Ordinary Procrustes analysis of paired landmarks: `X` is the reference,
/// `Y` is fitted onto it by translation, isotropic scale and rotation.
///
/// The dissimilarity is `1 − (σ₁ + d σ₂)²`, where `σ` are the singular values
/// of the cross-product of the standardized configurations and `d` the
/// determinant sign that excludes reflections.
pub fn procrustes(x: &[Point], y: &[Point]) -> Result<ProcrustesResult> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "Procrustes needs equal landmark counts, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidInput(format!("Procrustes needs at least 2 landmarks, got {n}")));
    }
    let centre = |pts: &[Point]| pts.iter().fold(Vector2::zeros(), |s, p| s + p.coords) / n as f64;
    let (cx, cy) = (centre(x), centre(y));
    let xc: Vec<Vector2<f64>> = x.iter().map(|p| p.coords - cx).collect();
    let yc: Vec<Vector2<f64>> = y.iter().map(|p| p.coords - cy).collect();
    let norm = |v: &[Vector2<f64>]| v.iter().map(|p| p.norm_squared()).sum::<f64>().sqrt();
    let (nx, ny) = (norm(&xc), norm(&yc));
    let scale_of = |pts: &[Point]| pts.iter().map(|p| p.coords.amax()).fold(1.0f64, f64::max);
    if nx <= 1e-12 * scale_of(x) || ny <= 1e-12 * scale_of(y) {
        return Err(Error::InvalidInput(
            "Procrustes configuration collapses to a single point".into(),
        ));
    }
    let mut cross = Matrix2::zeros();
    for (a, b) in xc.iter().zip(&yc) {
        cross += (b / ny) * (a / nx).transpose();
    }
    let (rotation, fit) = best_rotation(&cross);
    let dissimilarity = (1.0 - fit * fit).clamp(0.0, 1.0);
    let scale = fit.max(0.0) * nx / ny;
    let scale = if scale > 0.0 { scale } else { nx / ny };
    Ok(ProcrustesResult {
        dissimilarity,
        scale,
        rotation,
        translation: cx - scale * (rotation * cy),
    })
}
