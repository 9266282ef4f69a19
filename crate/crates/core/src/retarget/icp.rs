//! Trimmed point-to-point cloud alignment.
//!
//! Estimates the rigid motion between two scans of the same object: match
//! every source point to its nearest target point through a grid-bucketed
//! index, drop the worst fraction of matches, re-solve the closed-form
//! alignment on the survivors, and iterate until the mean residual stops
//! improving.

use std::collections::HashMap;

use crate::geometry::{kabsch, GeometryError, RigidTransform3, Vec3};

/// Uniform-grid nearest-neighbour index over a fixed point set.
///
/// Points are bucketed into cubic cells; queries walk outward one Chebyshev
/// shell at a time and stop once no farther shell can beat the best match,
/// so results are exact, not approximate.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    points: Vec<Vec3>,
    key_lo: (i64, i64, i64),
    key_hi: (i64, i64, i64),
}

impl GridIndex {
    pub fn build(points: &[Vec3], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let k = Self::key_for(*p, cell);
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1), key_lo.2.min(k.2));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1), key_hi.2.max(k.2));
            buckets.entry(k).or_default().push(i as u32);
        }
        GridIndex {
            cell,
            buckets,
            points: points.to_vec(),
            key_lo,
            key_hi,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn key_for(p: Vec3, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Index and distance of the exact nearest point to `q`.
    pub fn nearest(&self, q: Vec3) -> Option<(usize, f64)> {
        if self.points.is_empty() {
            return None;
        }
        let (kx, ky, kz) = Self::key_for(q, self.cell);
        // Farthest occupied cell in Chebyshev terms: searching shells beyond
        // it cannot reach anything.
        let axis_span = |lo: i64, hi: i64, k: i64| (k - lo).abs().max((hi - k).abs());
        let max_shell = axis_span(self.key_lo.0, self.key_hi.0, kx)
            .max(axis_span(self.key_lo.1, self.key_hi.1, ky))
            .max(axis_span(self.key_lo.2, self.key_hi.2, kz));
        let mut best: Option<(usize, f64)> = None;
        for shell in 0..=max_shell {
            // A cell at Chebyshev shell distance s cannot hold anything
            // closer than (s - 1) cell widths; once the best find beats that
            // bound the search is complete.
            if let Some((_, d)) = best {
                if (shell - 1) as f64 * self.cell >= d {
                    break;
                }
            }
            // Visit only the part of the shell inside the occupied key box.
            let xs = (kx - shell).max(self.key_lo.0)..=(kx + shell).min(self.key_hi.0);
            for x in xs {
                let ys = (ky - shell).max(self.key_lo.1)..=(ky + shell).min(self.key_hi.1);
                for y in ys {
                    let zs = (kz - shell).max(self.key_lo.2)..=(kz + shell).min(self.key_hi.2);
                    for z in zs {
                        let cheb = (x - kx).abs().max((y - ky).abs()).max((z - kz).abs());
                        if cheb != shell {
                            continue;
                        }
                        if let Some(ids) = self.buckets.get(&(x, y, z)) {
                            for &i in ids {
                                let d = self.points[i as usize].distance(q);
                                if best.map_or(true, |(_, bd)| d < bd) {
                                    best = Some((i as usize, d));
                                }
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IcpConfig {
    pub max_iters: u32,
    pub trim_fraction: f64,
    pub converge_eps: f64,
    pub grid_cell: f64,
}

impl Default for IcpConfig {
    fn default() -> Self {
        IcpConfig {
            max_iters: 30,
            trim_fraction: 0.10,
            converge_eps: 1e-6,
            grid_cell: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcpResult {
    /// Rigid motion mapping source points onto the target cloud.
    pub transform: RigidTransform3,
    /// Mean distance over the kept correspondences at the final alignment.
    pub mean_residual: f64,
    pub iterations: u32,
    /// Whether iteration stopped on residual improvement rather than the cap.
    pub converged: bool,
}

/// Align `source` onto `target`.
///
/// Each iteration matches the currently-transformed source points to their
/// nearest targets, discards the `trim_fraction` worst matches (at least
/// three survive), and re-solves the full closed-form alignment on the
/// survivors. Stops when the mean kept residual improves by less than
/// `converge_eps` between iterations.
pub fn icp(source: &[Vec3], target: &[Vec3], cfg: &IcpConfig) -> Result<IcpResult, GeometryError> {
    if source.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: source.len(),
        });
    }
    if target.len() < 3 {
        return Err(GeometryError::TooFewPoints {
            needed: 3,
            got: target.len(),
        });
    }
    let index = GridIndex::build(target, cfg.grid_cell);
    let keep = (((source.len() as f64) * (1.0 - cfg.trim_fraction)).ceil() as usize)
        .clamp(3, source.len());

    // Coarse start: align the clouds' per-axis medians so the first matching
    // round already sees overlapping clouds. This puts even a
    // several-diameter displacement inside the basin (iteration then only has
    // to resolve the rotation), and unlike the mean it shrugs off the same
    // junk points the per-iteration trimming exists for.
    let median_point = |pts: &[Vec3]| {
        let axis = |f: fn(&Vec3) -> f64| {
            let mut vals: Vec<f64> = pts.iter().map(f).collect();
            vals.sort_by(f64::total_cmp);
            let mid = vals.len() / 2;
            if vals.len() % 2 == 0 {
                0.5 * (vals[mid - 1] + vals[mid])
            } else {
                vals[mid]
            }
        };
        Vec3::new(axis(|p| p.x), axis(|p| p.y), axis(|p| p.z))
    };
    let mut transform = RigidTransform3::from_parts(
        RigidTransform3::identity().rotation,
        median_point(target) - median_point(source),
    );
    let mut last_mean = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        iterations += 1;
        // Match from the current alignment.
        let mut pairs: Vec<(usize, usize, f64)> = source
            .iter()
            .map(|p| transform.apply(*p))
            .enumerate()
            .map(|(i, moved)| {
                let (j, d) = index.nearest(moved).expect("target is non-empty");
                (i, j, d)
            })
            .collect();
        pairs.sort_by(|a, b| a.2.total_cmp(&b.2));
        pairs.truncate(keep);

        let src: Vec<Vec3> = pairs.iter().map(|&(i, _, _)| source[i]).collect();
        let dst: Vec<Vec3> = pairs.iter().map(|&(_, j, _)| target[j]).collect();
        transform = kabsch(&src, &dst)?;

        let mean = src
            .iter()
            .zip(&dst)
            .map(|(s, d)| transform.apply(*s).distance(*d))
            .sum::<f64>()
            / src.len() as f64;
        if last_mean - mean < cfg.converge_eps {
            last_mean = mean;
            converged = true;
            break;
        }
        last_mean = mean;
    }

    Ok(IcpResult {
        transform,
        mean_residual: last_mean,
        iterations,
        converged,
    })
}
