//! Small geometric primitives shared by perception, planning and the simulator.
//!
//! Everything here is plain `f64` math with no knowledge of tasks, robots or
//! point-cloud semantics: vectors, axis-aligned boxes, rigid transforms, order
//! statistics, planar spread, and the closed-form least-squares alignment of
//! paired point sets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("empty input sample")]
    EmptySample,
    #[error("quantile {0} outside [0, 1]")]
    QuantileOutOfRange(f64),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("source and target lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("degenerate correspondence set (rank-deficient)")]
    DegenerateCorrespondences,
}

/// Planar point or displacement.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn distance(self, o: Vec2) -> f64 {
        (self - o).norm()
    }

    /// Lift into space at the given height.
    pub fn with_z(self, z: f64) -> Vec3 {
        Vec3::new(self.x, self.y, z)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

/// Spatial point or displacement, metres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    pub fn xy(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Same planar position at a different height.
    pub fn with_z(self, z: f64) -> Vec3 {
        Vec3::new(self.x, self.y, z)
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Planar distance, ignoring z.
    pub fn distance_xy(self, o: Vec3) -> f64 {
        self.xy().distance(o.xy())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl std::ops::Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl std::ops::Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl std::ops::Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl std::ops::Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb3 {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb3 {
    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn contains(&self, p: Vec3) -> bool {
        p.x >= self.min.x
            && p.x <= self.max.x
            && p.y >= self.min.y
            && p.y <= self.max.y
            && p.z >= self.min.z
            && p.z <= self.max.z
    }
}

/// Proper rigid motion `p ↦ R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform3 {
    /// Row-major rotation matrix with determinant +1.
    pub rotation: [[f64; 3]; 3],
    pub translation: Vec3,
}

impl RigidTransform3 {
    pub fn identity() -> Self {
        RigidTransform3 {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: Vec3::ZERO,
        }
    }

    pub fn from_parts(rotation: [[f64; 3]; 3], translation: Vec3) -> Self {
        RigidTransform3 { rotation, translation }
    }

    /// Rotation by `angle` radians about a (not necessarily unit) axis,
    /// followed by `translation`. Rodrigues' formula.
    pub fn from_axis_angle(axis: Vec3, angle: f64, translation: Vec3) -> Self {
        let n = axis.norm();
        assert!(n > 0.0, "rotation axis must be non-zero");
        let u = axis * (1.0 / n);
        let (s, c) = angle.sin_cos();
        let ic = 1.0 - c;
        let rotation = [
            [
                c + u.x * u.x * ic,
                u.x * u.y * ic - u.z * s,
                u.x * u.z * ic + u.y * s,
            ],
            [
                u.y * u.x * ic + u.z * s,
                c + u.y * u.y * ic,
                u.y * u.z * ic - u.x * s,
            ],
            [
                u.z * u.x * ic - u.y * s,
                u.z * u.y * ic + u.x * s,
                c + u.z * u.z * ic,
            ],
        ];
        RigidTransform3 { rotation, translation }
    }

    pub fn apply(&self, p: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * p.x + r[0][1] * p.y + r[0][2] * p.z,
            r[1][0] * p.x + r[1][1] * p.y + r[1][2] * p.z,
            r[2][0] * p.x + r[2][1] * p.y + r[2][2] * p.z,
        ) + self.translation
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform3) -> RigidTransform3 {
        let a = &self.rotation;
        let b = &other.rotation;
        let mut rotation = [[0.0; 3]; 3];
        for (i, row) in rotation.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
            }
        }
        let translation = self.apply(other.translation);
        RigidTransform3 { rotation, translation }
    }

    pub fn inverse(&self) -> RigidTransform3 {
        let r = &self.rotation;
        let rt = [
            [r[0][0], r[1][0], r[2][0]],
            [r[0][1], r[1][1], r[2][1]],
            [r[0][2], r[1][2], r[2][2]],
        ];
        let inv = RigidTransform3 { rotation: rt, translation: Vec3::ZERO };
        let translation = -inv.apply(self.translation);
        RigidTransform3 { rotation: rt, translation }
    }

    /// Magnitude of the rotation component in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        let r = &self.rotation;
        // atan2 of the skew-symmetric (sine) and trace (cosine) parts stays
        // accurate where acos((tr−1)/2) would lose precision near 0 and π.
        let sin_part = Vec3::new(
            r[2][1] - r[1][2],
            r[0][2] - r[2][0],
            r[1][0] - r[0][1],
        )
        .norm()
            * 0.5;
        let cos_part = (r[0][0] + r[1][1] + r[2][2] - 1.0) * 0.5;
        sin_part.atan2(cos_part)
    }
}

/// Quantile of a sample by linear interpolation between order statistics.
///
/// `q = 0` returns the minimum, `q = 1` the maximum, and `q = 0.5` on an
/// even-sized sample the mean of the two central values.
pub fn percentile(values: &[f64], q: f64) -> Result<f64, GeometryError> {
    if values.is_empty() {
        return Err(GeometryError::EmptySample);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(GeometryError::QuantileOutOfRange(q));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("non-finite sample value"));
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo + 1 == sorted.len() {
        Ok(sorted[lo])
    } else {
        Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
    }
}

/// Tight axis-aligned bounding box of a non-empty point set.
pub fn aabb_of(points: &[Vec3]) -> Result<Aabb3, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptySample);
    }
    let mut min = points[0];
    let mut max = points[0];
    for p in &points[1..] {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        min.z = min.z.min(p.z);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
        max.z = max.z.max(p.z);
    }
    Ok(Aabb3 { min, max })
}

/// Largest-eigenvalue spread of the planar (xy) sample covariance, as a
/// standard deviation in metres: the sample std of the most-spread direction.
///
/// The 2×2 symmetric eigenproblem is solved in closed form.
pub fn planar_dispersion(points: &[Vec3]) -> Result<f64, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::TooFewPoints { needed: 2, got: points.len() });
    }
    let n = points.len() as f64;
    let mut mx = 0.0;
    let mut my = 0.0;
    for p in points {
        mx += p.x;
        my += p.y;
    }
    mx /= n;
    my /= n;
    let mut cxx = 0.0;
    let mut cxy = 0.0;
    let mut cyy = 0.0;
    for p in points {
        let dx = p.x - mx;
        let dy = p.y - my;
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
    }
    let bessel = n - 1.0;
    cxx /= bessel;
    cxy /= bessel;
    cyy /= bessel;
    Ok(planar_cov_max_eig(cxx, cxy, cyy).sqrt())
}

/// Largest eigenvalue of the symmetric matrix [[cxx, cxy], [cxy, cyy]].
pub(crate) fn planar_cov_max_eig(cxx: f64, cxy: f64, cyy: f64) -> f64 {
    let half_trace = 0.5 * (cxx + cyy);
    let det_term = (0.25 * (cxx - cyy) * (cxx - cyy) + cxy * cxy).sqrt();
    // Eigenvalues of a PSD covariance are non-negative; clamp rounding noise.
    (half_trace + det_term).max(0.0)
}

/// Least-squares proper rigid motion mapping `source` onto `target`, solved in
/// closed form via the SVD of the centred cross-covariance, with the
/// determinant-sign correction that excludes reflections.
///
/// Requires at least three non-collinear correspondences.
pub fn kabsch(source: &[Vec3], target: &[Vec3]) -> Result<RigidTransform3, GeometryError> {
    if source.len() != target.len() {
        return Err(GeometryError::LengthMismatch(source.len(), target.len()));
    }
    if source.len() < 3 {
        return Err(GeometryError::TooFewPoints { needed: 3, got: source.len() });
    }
    let n = source.len() as f64;
    let mut sc = Vec3::ZERO;
    let mut tc = Vec3::ZERO;
    for (s, t) in source.iter().zip(target) {
        sc = sc + *s;
        tc = tc + *t;
    }
    sc = sc * (1.0 / n);
    tc = tc * (1.0 / n);

    // Cross-covariance M = Σ (s − s̄)(t − t̄)ᵀ; the optimal rotation maximises
    // tr(R M).
    let mut m = nalgebra::Matrix3::<f64>::zeros();
    for (s, t) in source.iter().zip(target) {
        let ps = *s - sc;
        let pt = *t - tc;
        m += nalgebra::Vector3::new(ps.x, ps.y, ps.z)
            * nalgebra::RowVector3::new(pt.x, pt.y, pt.z);
    }

    let svd = m.svd(true, true);
    let u = svd.u.ok_or(GeometryError::DegenerateCorrespondences)?;
    let v = svd.v_t.ok_or(GeometryError::DegenerateCorrespondences)?.transpose();
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // Collinear (or coincident) correspondences leave the rotation about the
    // line unconstrained: rank of M drops below 2.
    if sv[1] <= 1e-12f64.max(1e-9 * sv[0]) {
        return Err(GeometryError::DegenerateCorrespondences);
    }

    let sign = (v * u.transpose()).determinant().signum();
    let d = nalgebra::Matrix3::from_diagonal(&nalgebra::Vector3::new(1.0, 1.0, sign));
    let r = v * d * u.transpose();

    let rotation = [
        [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
        [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
        [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
    ];
    let rt = RigidTransform3 { rotation, translation: Vec3::ZERO };
    let translation = tc - rt.apply(sc);
    Ok(RigidTransform3 { rotation, translation })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_cloud(r: &mut ChaCha12Rng, n: usize, scale: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| {
                Vec3::new(
                    r.gen_range(-scale..scale),
                    r.gen_range(-scale..scale),
                    r.gen_range(-scale..scale),
                )
            })
            .collect()
    }

    fn random_rigid(r: &mut ChaCha12Rng, max_angle: f64, max_t: f64) -> RigidTransform3 {
        let axis = Vec3::new(
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0),
            r.gen_range(-1.0..1.0f64),
        );
        let axis = if axis.norm() < 1e-6 { Vec3::new(0.0, 0.0, 1.0) } else { axis };
        let t = Vec3::new(
            r.gen_range(-max_t..max_t),
            r.gen_range(-max_t..max_t),
            r.gen_range(-max_t..max_t),
        );
        RigidTransform3::from_axis_angle(axis, r.gen_range(-max_angle..max_angle), t)
    }

    // -- percentile ----------------------------------------------------------

    #[test]
    fn percentile_interpolates_between_order_statistics() {
        let sample = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0];
        // sorted: [1, 1, 2, 3, 4, 5, 6, 9]; position 0.25·7 = 1.75 sits
        // three-quarters of the way from sorted[1]=1 to sorted[2]=2.
        let expected = 1.0 + 0.75 * (2.0 - 1.0);
        assert_abs_diff_eq!(percentile(&sample, 0.25).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn percentile_endpoints_are_min_and_max() {
        let sample = [0.4, -2.0, 7.5, 3.3];
        assert_eq!(percentile(&sample, 0.0).unwrap(), -2.0);
        assert_eq!(percentile(&sample, 1.0).unwrap(), 7.5);
    }

    #[test]
    fn percentile_median_of_even_sample_averages_central_pair() {
        let sample = [10.0, 2.0, 8.0, 4.0];
        // sorted [2, 4, 8, 10]: central pair (4, 8).
        assert_abs_diff_eq!(percentile(&sample, 0.5).unwrap(), 6.0, epsilon = 1e-15);
    }

    #[test]
    fn percentile_single_element_is_that_element() {
        assert_eq!(percentile(&[42.0], 0.37).unwrap(), 42.0);
    }

    #[test]
    fn percentile_rejects_bad_input() {
        assert_eq!(percentile(&[], 0.5), Err(GeometryError::EmptySample));
        assert!(matches!(
            percentile(&[1.0], 1.5),
            Err(GeometryError::QuantileOutOfRange(_))
        ));
        assert!(matches!(
            percentile(&[1.0], -0.1),
            Err(GeometryError::QuantileOutOfRange(_))
        ));
    }

    #[test]
    fn percentile_is_monotone_in_q_and_bounded() {
        let mut r = rng(11);
        let sample: Vec<f64> = (0..57).map(|_| r.gen_range(-5.0..5.0)).collect();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let q = i as f64 / 100.0;
            let v = percentile(&sample, q).unwrap();
            assert!(v >= prev);
            assert!(v >= percentile(&sample, 0.0).unwrap());
            assert!(v <= percentile(&sample, 1.0).unwrap());
            prev = v;
        }
    }

    // -- aabb_of -------------------------------------------------------------

    #[test]
    fn aabb_contains_all_points_and_touches_extremes() {
        let mut r = rng(12);
        let cloud = random_cloud(&mut r, 200, 0.3);
        let bb = aabb_of(&cloud).unwrap();
        // Oracle: independent linear scans per axis.
        let min_x = cloud.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let max_z = cloud.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(bb.min.x, min_x);
        assert_eq!(bb.max.z, max_z);
        for p in &cloud {
            assert!(bb.contains(*p));
        }
    }

    #[test]
    fn aabb_center_is_midpoint() {
        let bb = aabb_of(&[Vec3::new(-1.0, 2.0, 0.0), Vec3::new(3.0, 4.0, 10.0)]).unwrap();
        assert_eq!(bb.center(), Vec3::new(1.0, 3.0, 5.0));
        assert_eq!(bb.extent(), Vec3::new(4.0, 2.0, 10.0));
    }

    #[test]
    fn aabb_rejects_empty() {
        assert_eq!(aabb_of(&[]), Err(GeometryError::EmptySample));
    }

    // -- planar_dispersion ---------------------------------------------------

    /// Oracle: brute-force maximisation of directional sample variance over a
    /// fine angular grid, independent of the closed-form eigensolution.
    fn dispersion_oracle(points: &[Vec3]) -> f64 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.x).sum::<f64>() / n;
        let my = points.iter().map(|p| p.y).sum::<f64>() / n;
        let mut best = 0.0f64;
        for k in 0..3600 {
            let th = std::f64::consts::PI * k as f64 / 3600.0;
            let (s, c) = th.sin_cos();
            let var = points
                .iter()
                .map(|p| {
                    let proj = (p.x - mx) * c + (p.y - my) * s;
                    proj * proj
                })
                .sum::<f64>()
                / (n - 1.0);
            best = best.max(var);
        }
        best.sqrt()
    }

    #[test]
    fn dispersion_zero_when_all_points_share_xy() {
        let pts: Vec<Vec3> = (0..10).map(|i| Vec3::new(0.3, -0.2, i as f64)).collect();
        assert_abs_diff_eq!(planar_dispersion(&pts).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn dispersion_of_symmetric_pair_is_sample_std() {
        let d = 0.015;
        let pts = [Vec3::new(-d, 0.0, 0.0), Vec3::new(d, 0.0, 0.0)];
        // Sample std of {−d, +d}: sqrt((d² + d²) / (2 − 1)) = √2·d.
        assert_abs_diff_eq!(
            planar_dispersion(&pts).unwrap(),
            std::f64::consts::SQRT_2 * d,
            epsilon = 1e-15
        );
    }

    #[test]
    fn dispersion_matches_directional_variance_oracle() {
        let mut r = rng(13);
        for _ in 0..20 {
            // Anisotropic, rotated, offset clouds.
            let th: f64 = r.gen_range(0.0..std::f64::consts::PI);
            let (s, c) = th.sin_cos();
            let (sx, sy) = (r.gen_range(0.001..0.05), r.gen_range(0.001..0.05));
            let pts: Vec<Vec3> = (0..150)
                .map(|_| {
                    let a: f64 = r.gen_range(-sx..sx);
                    let b: f64 = r.gen_range(-sy..sy);
                    Vec3::new(1.0 + a * c - b * s, -2.0 + a * s + b * c, r.gen())
                })
                .collect();
            let got = planar_dispersion(&pts).unwrap();
            let want = dispersion_oracle(&pts);
            // The grid oracle undershoots by at most the grid resolution.
            assert_abs_diff_eq!(got, want, epsilon = 1e-5 + want * 1e-5);
            assert!(got >= want - 1e-12);
        }
    }

    #[test]
    fn dispersion_of_isotropic_gaussian_estimates_its_std() {
        use rand_distr::{Distribution, Normal};
        let mut r = rng(14);
        let s = 0.02;
        let normal = Normal::new(0.0, s).unwrap();
        let pts: Vec<Vec3> = (0..10_000)
            .map(|_| Vec3::new(normal.sample(&mut r), normal.sample(&mut r), 0.0))
            .collect();
        let got = planar_dispersion(&pts).unwrap();
        assert!((got - s).abs() < 0.1 * s, "got {got}, want ≈ {s}");
    }

    #[test]
    fn dispersion_needs_two_points() {
        assert_eq!(
            planar_dispersion(&[Vec3::ZERO]),
            Err(GeometryError::TooFewPoints { needed: 2, got: 1 })
        );
    }

    // -- kabsch ---------------------------------------------------------------

    fn rms_residual(t: &RigidTransform3, src: &[Vec3], tgt: &[Vec3]) -> f64 {
        let ss: f64 = src
            .iter()
            .zip(tgt)
            .map(|(s, q)| {
                let d = t.apply(*s) - *q;
                d.dot(d)
            })
            .sum();
        (ss / src.len() as f64).sqrt()
    }

    #[test]
    fn kabsch_identity_on_identical_clouds() {
        let mut r = rng(15);
        let cloud = random_cloud(&mut r, 40, 0.2);
        let t = kabsch(&cloud, &cloud).unwrap();
        assert!(t.rotation_angle() < 1e-10);
        assert!(t.translation.norm() < 1e-12);
    }

    #[test]
    fn kabsch_recovers_pure_translation() {
        let mut r = rng(16);
        let src = random_cloud(&mut r, 25, 0.1);
        let shift = Vec3::new(0.05, -0.02, 0.01);
        let tgt: Vec<Vec3> = src.iter().map(|p| *p + shift).collect();
        let t = kabsch(&src, &tgt).unwrap();
        assert!(t.rotation_angle() < 1e-10);
        assert!((t.translation - shift).norm() < 1e-12);
    }

    #[test]
    fn kabsch_recovers_random_rigid_motions_exactly() {
        let mut r = rng(17);
        for _ in 0..50 {
            let src = random_cloud(&mut r, 30, 0.15);
            let truth = random_rigid(&mut r, 3.0, 0.5);
            let tgt: Vec<Vec3> = src.iter().map(|p| truth.apply(*p)).collect();
            let got = kabsch(&src, &tgt).unwrap();
            let delta = got.compose(&truth.inverse());
            assert!(delta.rotation_angle() < 1e-9, "angle {}", delta.rotation_angle());
            assert!(delta.translation.norm() < 1e-9);
            assert!(rms_residual(&got, &src, &tgt) < 1e-10);
        }
    }

    #[test]
    fn kabsch_result_is_a_residual_minimum() {
        // Optimality oracle: nudging the recovered transform in rotation or
        // translation must not lower the RMS residual on noisy pairs.
        let mut r = rng(18);
        let src = random_cloud(&mut r, 60, 0.2);
        let truth = random_rigid(&mut r, 1.0, 0.2);
        let tgt: Vec<Vec3> = src
            .iter()
            .map(|p| {
                truth.apply(*p)
                    + Vec3::new(
                        r.gen_range(-1e-3..1e-3),
                        r.gen_range(-1e-3..1e-3),
                        r.gen_range(-1e-3..1e-3),
                    )
            })
            .collect();
        let got = kabsch(&src, &tgt).unwrap();
        let base = rms_residual(&got, &src, &tgt);
        for _ in 0..40 {
            let nudge = random_rigid(&mut r, 1e-3, 1e-4);
            let perturbed = nudge.compose(&got);
            assert!(rms_residual(&perturbed, &src, &tgt) >= base - 1e-12);
        }
    }

    #[test]
    fn kabsch_yields_proper_rotation_even_for_mirrored_target() {
        let mut r = rng(19);
        let src = random_cloud(&mut r, 30, 0.2);
        let tgt: Vec<Vec3> = src.iter().map(|p| Vec3::new(-p.x, p.y, p.z)).collect();
        let t = kabsch(&src, &tgt).unwrap();
        let det = {
            let m = &t.rotation;
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
                - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        };
        assert_abs_diff_eq!(det, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn kabsch_rejects_degenerate_inputs() {
        let p = |x: f64| Vec3::new(x, 0.0, 0.0);
        assert_eq!(
            kabsch(&[p(0.0), p(1.0)], &[p(0.0), p(1.0), p(2.0)]),
            Err(GeometryError::LengthMismatch(2, 3))
        );
        assert_eq!(
            kabsch(&[p(0.0), p(1.0)], &[p(0.0), p(1.0)]),
            Err(GeometryError::TooFewPoints { needed: 3, got: 2 })
        );
        // Collinear points leave a free rotation about the line.
        let line: Vec<Vec3> = (0..10).map(|i| p(i as f64 * 0.01)).collect();
        assert_eq!(kabsch(&line, &line), Err(GeometryError::DegenerateCorrespondences));
    }

    #[test]
    fn transform_compose_and_inverse_round_trip() {
        let mut r = rng(20);
        for _ in 0..20 {
            let a = random_rigid(&mut r, 2.0, 0.4);
            let b = random_rigid(&mut r, 2.0, 0.4);
            let p = Vec3::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen());
            let via_compose = a.compose(&b).apply(p);
            let sequential = a.apply(b.apply(p));
            assert!((via_compose - sequential).norm() < 1e-12);
            let round = a.inverse().apply(a.apply(p));
            assert!((round - p).norm() < 1e-12);
        }
    }
}
