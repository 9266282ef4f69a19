//! Point-cloud reduction: timestamped clouds, lag-delayed retrieval, and the
//! compact pose estimates the planner actually consumes.
//!
//! A cloud never reaches the goal layer raw. For box-like objects it is
//! reduced to a [`PoseProxy`] — a trimmed bounding-box centre plus spread
//! scalars — and for the socket fixture to a [`RimProxy`] built from wall-top
//! returns.

use crate::geometry::{aabb_of, percentile, planar_dispersion, Vec3};
use std::collections::VecDeque;

/// Timestamped sensor return. `stamp` is simulation seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub stamp: f64,
    pub points: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(stamp: f64, points: Vec<Vec3>) -> Self {
        PointCloud { stamp, points }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Reduced object-pose estimate.
///
/// `center` is the estimated object centre (not the cloud centroid): planar
/// position from the inlier bounding box, height from the top plane minus half
/// the object edge. A proxy is only meaningful when `valid` is set; consumers
/// must check it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseProxy {
    pub center: Vec3,
    pub valid: bool,
    pub inlier_count: usize,
    /// Largest-direction sample std of the inlier cloud in the plane.
    pub sigma_xy: f64,
    /// Sample std of inlier heights.
    pub sigma_z: f64,
}

impl PoseProxy {
    pub fn invalid() -> Self {
        PoseProxy {
            center: Vec3::ZERO,
            valid: false,
            inlier_count: 0,
            sigma_xy: 0.0,
            sigma_z: 0.0,
        }
    }
}

/// Estimate the pose of a box of edge `object_edge` from a segmented cloud.
///
/// Heights are trimmed to the [1st, 99th] percentile band (inclusive) to shed
/// stray returns, the planar centre is the midpoint of the surviving points'
/// bounding box, and the centre height is the trimmed top plane minus half the
/// edge. The estimate is valid only when at least `min_inliers` points
/// survive trimming.
pub fn pose_proxy(cloud: &PointCloud, object_edge: f64, min_inliers: usize) -> PoseProxy {
    if cloud.points.len() < 2 {
        return PoseProxy::invalid();
    }
    let zs: Vec<f64> = cloud.points.iter().map(|p| p.z).collect();
    let lo = percentile(&zs, 0.01).expect("non-empty");
    let hi = percentile(&zs, 0.99).expect("non-empty");
    let inliers: Vec<Vec3> = cloud
        .points
        .iter()
        .copied()
        .filter(|p| p.z >= lo && p.z <= hi)
        .collect();
    if inliers.len() < min_inliers.max(2) {
        return PoseProxy::invalid();
    }
    let bb = aabb_of(&inliers).expect("non-empty");
    let center_xy = bb.center();
    let top = bb.max.z;
    let sigma_xy = planar_dispersion(&inliers).unwrap_or(0.0);
    let n = inliers.len() as f64;
    let mean_z = inliers.iter().map(|p| p.z).sum::<f64>() / n;
    let var_z = inliers.iter().map(|p| (p.z - mean_z).powi(2)).sum::<f64>() / (n - 1.0);
    PoseProxy {
        center: Vec3::new(center_xy.x, center_xy.y, top - 0.5 * object_edge),
        valid: true,
        inlier_count: inliers.len(),
        sigma_xy,
        sigma_z: var_z.sqrt(),
    }
}

/// Socket estimate from a rim scan.
///
/// `center` carries the opening centre in the plane and the wall-top height in
/// z. When too few wall-top returns exist the estimate falls back to the
/// componentwise median of interior (floor) returns at the nominal rim
/// height, and `used_fallback` is set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RimProxy {
    pub center: Vec3,
    pub valid: bool,
    pub rim_count: usize,
    pub interior_count: usize,
    pub used_fallback: bool,
    /// Planar spread of the returns that produced the centre estimate.
    pub sigma_xy: f64,
}

impl RimProxy {
    pub fn invalid() -> Self {
        RimProxy {
            center: Vec3::ZERO,
            valid: false,
            rim_count: 0,
            interior_count: 0,
            used_fallback: false,
            sigma_xy: 0.0,
        }
    }
}

/// Reduce a socket scan to a [`RimProxy`].
///
/// Returns are split by height midway between `table_z` and `nominal_rim_z`:
/// the upper group are wall-top (rim) hits, the lower group interior floor
/// hits. With at least `min_rim_points` rim hits, the centre is the midpoint
/// of the rim bounding box and the height the median rim z; otherwise the
/// interior-median fallback applies.
pub fn rim_proxy(
    cloud: &PointCloud,
    table_z: f64,
    nominal_rim_z: f64,
    min_rim_points: usize,
) -> RimProxy {
    if cloud.is_empty() {
        return RimProxy::invalid();
    }
    let split = table_z + 0.5 * (nominal_rim_z - table_z);
    let (rim, interior): (Vec<Vec3>, Vec<Vec3>) =
        cloud.points.iter().partition(|p| p.z >= split);
    if rim.len() >= min_rim_points.max(2) {
        let bb = aabb_of(&rim).expect("non-empty");
        let zs: Vec<f64> = rim.iter().map(|p| p.z).collect();
        let rim_z = percentile(&zs, 0.5).expect("non-empty");
        return RimProxy {
            center: bb.center().with_z(rim_z),
            valid: true,
            rim_count: rim.len(),
            interior_count: interior.len(),
            used_fallback: false,
            sigma_xy: planar_dispersion(&rim).unwrap_or(0.0),
        };
    }
    if interior.len() >= 2 {
        let xs: Vec<f64> = interior.iter().map(|p| p.x).collect();
        let ys: Vec<f64> = interior.iter().map(|p| p.y).collect();
        let cx = percentile(&xs, 0.5).expect("non-empty");
        let cy = percentile(&ys, 0.5).expect("non-empty");
        return RimProxy {
            center: Vec3::new(cx, cy, nominal_rim_z),
            valid: true,
            rim_count: rim.len(),
            interior_count: interior.len(),
            used_fallback: true,
            sigma_xy: planar_dispersion(&interior).unwrap_or(0.0),
        };
    }
    RimProxy::invalid()
}

/// Ring buffer that serves clouds delayed by a fixed lag.
///
/// `fetch(now)` returns the newest cloud captured at or before `now − lag`,
/// mirroring a sensing pipeline whose frames take `lag` seconds to arrive.
/// Entries that can never be served again are pruned on push, so the buffer
/// holds roughly one lag window plus the single older fallback frame.
/// Single-writer, single-reader; not shared across trials.
#[derive(Debug, Clone)]
pub struct LatencyBuffer {
    lag: f64,
    entries: VecDeque<PointCloud>,
}

/// Slack for comparing tick-derived stamps; far below one control tick.
const STAMP_EPS: f64 = 1e-9;

impl LatencyBuffer {
    pub fn new(lag: f64) -> Self {
        assert!(lag >= 0.0, "lag must be non-negative");
        LatencyBuffer { lag, entries: VecDeque::new() }
    }

    pub fn lag(&self) -> f64 {
        self.lag
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insert a frame. Stamps must be non-decreasing.
    pub fn push(&mut self, cloud: PointCloud) {
        if let Some(last) = self.entries.back() {
            assert!(
                cloud.stamp >= last.stamp - STAMP_EPS,
                "stamps must be non-decreasing"
            );
        }
        self.entries.push_back(cloud);
        let newest = self.entries.back().expect("just pushed").stamp;
        // An entry is dead once a newer entry is already old enough to serve
        // every future query; keep the newest such entry as the fallback.
        while self.entries.len() >= 2 && self.entries[1].stamp <= newest - self.lag + STAMP_EPS {
            self.entries.pop_front();
        }
    }

    /// Newest cloud with `stamp ≤ now − lag`, if any has aged enough.
    pub fn fetch(&self, now: f64) -> Option<&PointCloud> {
        let cutoff = now - self.lag + STAMP_EPS;
        self.entries.iter().rev().find(|c| c.stamp <= cutoff)
    }
}
