//! Mid-execution goal retargeting.
//!
//! When fresh perception arrives after the robot has already committed to a
//! waypoint triple, one of five policies decides what to execute next:
//!
//! * `none`     – keep the stale triple.
//! * `nearest`  – resynthesize the triple at the fresh pose estimate.
//! * `icp`      – align the stale scan to the fresh scan and transport the
//!   staging waypoint through the recovered motion; action waypoints are
//!   rebuilt at the fresh estimate.
//! * `uar`      – resynthesize at the fresh estimate with stand-off margins
//!   inflated by the scan's planar spread.
//! * `uar_pf`   – fuse the fresh estimate into a particle filter and
//!   resynthesize at the posterior mean with margins inflated by the
//!   posterior spread; implausible measurements re-seed the filter.

pub mod icp;
pub mod pf;

use rand::Rng;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::Config;
use crate::geometry::{GeometryError, Vec3};
use crate::goals::{GoalError, MarginSet, WaypointTriple};
use crate::perception::PointCloud;
use icp::{icp as align, IcpConfig};
use pf::ParticleSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetargetMode {
    None,
    Nearest,
    Icp,
    Uar,
    UarPf,
}

impl RetargetMode {
    pub const ALL: [RetargetMode; 5] = [
        RetargetMode::None,
        RetargetMode::Nearest,
        RetargetMode::Icp,
        RetargetMode::Uar,
        RetargetMode::UarPf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            RetargetMode::None => "none",
            RetargetMode::Nearest => "nearest",
            RetargetMode::Icp => "icp",
            RetargetMode::Uar => "uar",
            RetargetMode::UarPf => "uar_pf",
        }
    }

    /// Re-sense/replan budget for this mode: the no-retarget baseline never
    /// replans, everything else uses the configured budget.
    pub fn replan_budget(&self, cfg: &Config) -> u32 {
        match self {
            RetargetMode::None => 0,
            _ => cfg.replan_budget,
        }
    }

    pub fn uses_filter(&self) -> bool {
        *self == RetargetMode::UarPf
    }
}

impl fmt::Display for RetargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RetargetMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(RetargetMode::None),
            "nearest" => Ok(RetargetMode::Nearest),
            "icp" => Ok(RetargetMode::Icp),
            "uar" => Ok(RetargetMode::Uar),
            "uar_pf" | "uar-pf" | "uarpf" => Ok(RetargetMode::UarPf),
            other => Err(format!(
                "unknown retarget mode '{other}' (expected none|nearest|icp|uar|uar_pf)"
            )),
        }
    }
}

/// Inflate stand-off margins in proportion to the positional spread of the
/// estimate: full inflation on the staging and contact stand-offs, half on
/// the overshoot, nothing on the height offset. Each margin saturates at its
/// configured clamp interval.
pub fn inflate_margins(nominal: &MarginSet, spread: f64, cfg: &Config) -> MarginSet {
    let d = cfg.lambda * spread.max(0.0);
    MarginSet {
        pre: (nominal.pre + d).clamp(cfg.clamp_pre_lo, cfg.clamp_pre_hi),
        contact: (nominal.contact + d).clamp(cfg.clamp_contact_lo, cfg.clamp_contact_hi),
        over: (nominal.over + 0.5 * d).clamp(cfg.clamp_over_lo, cfg.clamp_over_hi),
        z: nominal.z,
    }
}

/// Inputs to a retargeting decision.
#[derive(Debug, Clone, Copy)]
pub struct RetargetRequest<'a> {
    /// Triple currently being executed (synthesized before the scene moved).
    pub stale_triple: WaypointTriple,
    /// Pose estimate the stale triple was built from.
    pub stale_center: Vec3,
    /// Scan the stale estimate came from (alignment source).
    pub stale_cloud: Option<&'a PointCloud>,
    /// Scan just acquired (alignment target).
    pub fresh_cloud: Option<&'a PointCloud>,
    /// Fresh pose estimate, present only if valid and guard-accepted.
    pub fresh_center: Option<Vec3>,
    /// Planar spread of the fresh estimate.
    pub fresh_sigma_xy: f64,
}

/// Alignment diagnostics carried in the outcome for tracing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentSummary {
    pub rotation_angle: f64,
    pub translation_norm: f64,
    pub mean_residual: f64,
    pub iterations: u32,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct RetargetOutcome {
    /// Triple to execute from here on.
    pub triple: WaypointTriple,
    /// Margins actually baked into the triple.
    pub margins: MarginSet,
    /// Centre estimate the triple was built around.
    pub center: Vec3,
    /// The filter found the fresh measurement implausible and re-seeded.
    pub pf_reseeded: bool,
    pub alignment: Option<AlignmentSummary>,
}

#[derive(Debug, Error)]
pub enum RetargetError {
    #[error("no usable fresh pose estimate")]
    MissingFreshEstimate,
    #[error("alignment requires both a stale and a fresh scan")]
    MissingClouds,
    #[error("belief filter not initialized")]
    FilterUninitialized,
    #[error("goal synthesis failed: {0}")]
    Synthesis(#[from] GoalError),
    #[error("cloud alignment failed: {0}")]
    Alignment(#[from] GeometryError),
}

/// Dispatch one retargeting decision.
///
/// `synth` rebuilds a task-appropriate triple from a centre estimate and a
/// margin set; the particle filter (with its RNG) is required only by the
/// filtering mode. The filter is assumed to have been propagated to the
/// present by the caller's control loop.
pub fn retarget<F, R>(
    mode: RetargetMode,
    req: &RetargetRequest,
    cfg: &Config,
    nominal: &MarginSet,
    synth: &F,
    mut filter: Option<(&mut ParticleSet, &mut R)>,
) -> Result<RetargetOutcome, RetargetError>
where
    F: Fn(Vec3, &MarginSet) -> Result<WaypointTriple, GoalError>,
    R: Rng,
{
    match mode {
        RetargetMode::None => Ok(RetargetOutcome {
            triple: req.stale_triple,
            margins: *nominal,
            center: req.stale_center,
            pf_reseeded: false,
            alignment: None,
        }),

        RetargetMode::Nearest => {
            let center = req.fresh_center.ok_or(RetargetError::MissingFreshEstimate)?;
            Ok(RetargetOutcome {
                triple: synth(center, nominal)?,
                margins: *nominal,
                center,
                pf_reseeded: false,
                alignment: None,
            })
        }

        RetargetMode::Uar => {
            let center = req.fresh_center.ok_or(RetargetError::MissingFreshEstimate)?;
            let margins = inflate_margins(nominal, req.fresh_sigma_xy, cfg);
            Ok(RetargetOutcome {
                triple: synth(center, &margins)?,
                margins,
                center,
                pf_reseeded: false,
                alignment: None,
            })
        }

        RetargetMode::Icp => {
            let center = req.fresh_center.ok_or(RetargetError::MissingFreshEstimate)?;
            let (stale, fresh) = req
                .stale_cloud
                .zip(req.fresh_cloud)
                .ok_or(RetargetError::MissingClouds)?;
            let icp_cfg = IcpConfig {
                max_iters: cfg.icp_max_iters,
                trim_fraction: cfg.icp_trim_fraction,
                converge_eps: cfg.icp_converge_eps,
                grid_cell: cfg.icp_grid_cell,
            };
            let result = align(&stale.points, &fresh.points, &icp_cfg)?;
            let mut triple = synth(center, nominal)?;
            // Transport the staging waypoint through the recovered motion;
            // keep the freshly synthesized height.
            let moved = result.transform.apply(req.stale_triple.pre);
            triple.pre = moved.xy().with_z(triple.pre.z);
            Ok(RetargetOutcome {
                triple,
                margins: *nominal,
                center,
                pf_reseeded: false,
                alignment: Some(AlignmentSummary {
                    rotation_angle: result.transform.rotation_angle(),
                    translation_norm: result.transform.translation.norm(),
                    mean_residual: result.mean_residual,
                    iterations: result.iterations,
                    converged: result.converged,
                }),
            })
        }

        RetargetMode::UarPf => {
            let (ps, rng) = filter.as_mut().ok_or(RetargetError::FilterUninitialized)?;
            let mut reseeded = false;
            let mut center_z = req.stale_center.z;
            if let Some(fresh) = req.fresh_center {
                let sigma = req.fresh_sigma_xy.max(cfg.pf_sigma_floor);
                let out = ps.update(fresh.xy(), sigma, cfg.pf_reseed_gate);
                if out.degenerate {
                    // The whole population is implausibly far from an
                    // accepted measurement: restart the belief around it.
                    **ps = ParticleSet::init(
                        fresh.xy(),
                        cfg.pf_n,
                        cfg.pf_sigma0_xy,
                        cfg.pf_sigma0_theta,
                        *rng,
                    );
                    reseeded = true;
                }
                center_z = fresh.z;
            }
            let summary = ps.summary();
            ps.resample_if_needed(*rng);
            let margins = inflate_margins(nominal, summary.dispersion, cfg);
            let center = summary.mean.with_z(center_z);
            Ok(RetargetOutcome {
                triple: synth(center, &margins)?,
                margins,
                center,
                pf_reseeded: reseeded,
                alignment: None,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::goals::push_waypoints;
    use crate::perception::PointCloud;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::cell::RefCell;

    fn cfg() -> Config {
        Config::default()
    }

    fn nominal() -> MarginSet {
        MarginSet::new(0.020, 0.004, 0.010, 0.0)
    }

    /// Push synthesis toward a fixed goal, as the executor would bind it.
    fn push_synth(goal: Vec2) -> impl Fn(Vec3, &MarginSet) -> Result<WaypointTriple, GoalError> {
        move |c, m| push_waypoints(c, goal, 0.04, m)
    }

    fn triple_at(x: f64) -> WaypointTriple {
        push_waypoints(
            Vec3::new(x, 0.0, 0.02),
            Vec2::new(0.2, 0.0),
            0.04,
            &nominal(),
        )
        .unwrap()
    }

    fn blob_cloud(center: Vec3, n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let points = (0..n)
            .map(|_| {
                center
                    + Vec3::new(
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                    )
            })
            .collect();
        PointCloud {
            stamp: 0.0,
            points,
        }
    }

    #[test]
    fn mode_names_round_trip() {
        for mode in RetargetMode::ALL {
            assert_eq!(mode.as_str().parse::<RetargetMode>().unwrap(), mode);
        }
        assert_eq!("uar-pf".parse::<RetargetMode>().unwrap(), RetargetMode::UarPf);
        assert_eq!("UAR".parse::<RetargetMode>().unwrap(), RetargetMode::Uar);
        assert!("snap".parse::<RetargetMode>().is_err());
    }

    #[test]
    fn budget_is_zero_only_for_the_baseline() {
        let c = cfg();
        assert_eq!(RetargetMode::None.replan_budget(&c), 0);
        for m in [RetargetMode::Nearest, RetargetMode::Icp, RetargetMode::Uar, RetargetMode::UarPf]
        {
            assert_eq!(m.replan_budget(&c), c.replan_budget);
        }
    }

    #[test]
    fn inflation_arithmetic_and_saturation() {
        let c = cfg();
        let m = inflate_margins(&nominal(), 0.003, &c);
        assert_abs_diff_eq!(m.pre, 0.023, epsilon = 1e-15);
        assert_abs_diff_eq!(m.contact, 0.007, epsilon = 1e-15);
        assert_abs_diff_eq!(m.over, 0.0115, epsilon = 1e-15);
        assert_eq!(m.z, 0.0);
        // Large spread saturates at the clamp tops.
        let hi = inflate_margins(&nominal(), 0.060, &c);
        assert_eq!(hi.pre, c.clamp_pre_hi);
        assert_eq!(hi.contact, c.clamp_contact_hi);
        assert_eq!(hi.over, c.clamp_over_hi);
        // Zero spread leaves the nominal margins untouched.
        let same = inflate_margins(&nominal(), 0.0, &c);
        assert_eq!(same, nominal());
        // Doubling lambda doubles the inflation before clamping.
        let mut c2 = cfg();
        c2.lambda = 2.0;
        let m2 = inflate_margins(&nominal(), 0.003, &c2);
        assert_abs_diff_eq!(m2.pre, 0.026, epsilon = 1e-15);
    }

    #[test]
    fn baseline_mode_returns_the_stale_triple_unchanged() {
        let stale = triple_at(0.0);
        let req = RetargetRequest {
            stale_triple: stale,
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: None,
            fresh_sigma_xy: 0.0,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let out = retarget::<_, ChaCha12Rng>(RetargetMode::None, &req, &cfg(), &nominal(), &synth, None)
            .unwrap();
        assert_eq!(out.triple, stale);
        assert_eq!(out.center, req.stale_center);
    }

    #[test]
    fn nearest_resynthesizes_at_the_fresh_centre() {
        let seen = RefCell::new(Vec::new());
        let synth = |c: Vec3, m: &MarginSet| {
            seen.borrow_mut().push((c, *m));
            push_waypoints(c, Vec2::new(0.2, 0.0), 0.04, m)
        };
        let fresh = Vec3::new(0.06, -0.01, 0.02);
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: Some(fresh),
            fresh_sigma_xy: 0.002,
        };
        let out = retarget::<_, ChaCha12Rng>(
            RetargetMode::Nearest,
            &req,
            &cfg(),
            &nominal(),
            &synth,
            None,
        )
        .unwrap();
        let calls = seen.borrow();
        assert_eq!(calls.len(), 1);
        assert_eq!(calls[0].0, fresh);
        assert_eq!(calls[0].1, nominal()); // spread ignored in this mode
        assert_eq!(out.triple, push_waypoints(fresh, Vec2::new(0.2, 0.0), 0.04, &nominal()).unwrap());
    }

    #[test]
    fn fresh_dependent_modes_error_without_an_estimate() {
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: None,
            fresh_sigma_xy: 0.0,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        for mode in [RetargetMode::Nearest, RetargetMode::Uar, RetargetMode::Icp] {
            let err =
                retarget::<_, ChaCha12Rng>(mode, &req, &cfg(), &nominal(), &synth, None).unwrap_err();
            assert!(matches!(err, RetargetError::MissingFreshEstimate), "{mode}");
        }
    }

    #[test]
    fn uar_bakes_the_inflated_margins_into_the_triple() {
        let fresh = Vec3::new(0.05, 0.0, 0.02);
        let sigma = 0.004;
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: Some(fresh),
            fresh_sigma_xy: sigma,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let out =
            retarget::<_, ChaCha12Rng>(RetargetMode::Uar, &req, &cfg(), &nominal(), &synth, None)
                .unwrap();
        let expected_margins = inflate_margins(&nominal(), sigma, &cfg());
        assert_eq!(out.margins, expected_margins);
        let expected =
            push_waypoints(fresh, Vec2::new(0.2, 0.0), 0.04, &expected_margins).unwrap();
        assert_eq!(out.triple, expected);
        // Inflated stand-off stages farther from the object than nominal.
        let nominal_triple = push_waypoints(fresh, Vec2::new(0.2, 0.0), 0.04, &nominal()).unwrap();
        assert!(out.triple.pre.x < nominal_triple.pre.x);
    }

    #[test]
    fn icp_transports_the_staging_waypoint_through_the_motion() {
        let shift = Vec3::new(0.03, -0.02, 0.0);
        let stale_cloud = blob_cloud(Vec3::new(0.0, 0.0, 0.02), 300, 21);
        let fresh_cloud = PointCloud {
            stamp: 0.5,
            points: stale_cloud.points.iter().map(|p| *p + shift).collect(),
        };
        let stale_center = Vec3::new(0.0, 0.0, 0.02);
        let fresh_center = stale_center + shift;
        let stale = triple_at(0.0);
        let req = RetargetRequest {
            stale_triple: stale,
            stale_center,
            stale_cloud: Some(&stale_cloud),
            fresh_cloud: Some(&fresh_cloud),
            fresh_center: Some(fresh_center),
            fresh_sigma_xy: 0.001,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let out =
            retarget::<_, ChaCha12Rng>(RetargetMode::Icp, &req, &cfg(), &nominal(), &synth, None)
                .unwrap();
        // Staging waypoint moved by the recovered rigid motion.
        assert_abs_diff_eq!(out.triple.pre.x, stale.pre.x + shift.x, epsilon = 1e-6);
        assert_abs_diff_eq!(out.triple.pre.y, stale.pre.y + shift.y, epsilon = 1e-6);
        // Action waypoints come from fresh synthesis, not transport.
        let fresh_triple =
            push_waypoints(fresh_center, Vec2::new(0.2, 0.0), 0.04, &nominal()).unwrap();
        assert_eq!(out.triple.contact, fresh_triple.contact);
        assert_eq!(out.triple.post, fresh_triple.post);
        assert_eq!(out.triple.pre.z, fresh_triple.pre.z);
        let a = out.alignment.unwrap();
        assert!(a.converged);
        assert_abs_diff_eq!(a.translation_norm, shift.norm(), epsilon = 1e-5);
    }

    #[test]
    fn icp_requires_both_clouds() {
        let stale_cloud = blob_cloud(Vec3::new(0.0, 0.0, 0.02), 100, 22);
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: Some(&stale_cloud),
            fresh_cloud: None,
            fresh_center: Some(Vec3::new(0.01, 0.0, 0.02)),
            fresh_sigma_xy: 0.001,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let err =
            retarget::<_, ChaCha12Rng>(RetargetMode::Icp, &req, &cfg(), &nominal(), &synth, None)
                .unwrap_err();
        assert!(matches!(err, RetargetError::MissingClouds));
    }

    #[test]
    fn filter_mode_requires_a_filter() {
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: Some(Vec3::new(0.01, 0.0, 0.02)),
            fresh_sigma_xy: 0.001,
        };
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let err =
            retarget::<_, ChaCha12Rng>(RetargetMode::UarPf, &req, &cfg(), &nominal(), &synth, None)
                .unwrap_err();
        assert!(matches!(err, RetargetError::FilterUninitialized));
    }

    #[test]
    fn filter_mode_tracks_a_nearby_measurement() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(31);
        let truth = Vec3::new(0.05, 0.01, 0.02);
        let mut ps = ParticleSet::init(truth.xy(), c.pf_n, c.pf_sigma0_xy, c.pf_sigma0_theta, &mut rng);
        let synth = push_synth(Vec2::new(0.2, 0.0));
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: Some(truth + Vec3::new(0.002, 0.0, 0.0)),
            fresh_sigma_xy: 0.001,
        };
        let mut out = None;
        for _ in 0..5 {
            ps.predict(c.tick_dt, c.pf_sigma_v, c.pf_sigma_omega, &mut rng);
            out = Some(
                retarget(
                    RetargetMode::UarPf,
                    &req,
                    &c,
                    &nominal(),
                    &synth,
                    Some((&mut ps, &mut rng)),
                )
                .unwrap(),
            );
        }
        let out = out.unwrap();
        assert!(!out.pf_reseeded);
        assert!(out.center.distance_xy(truth) < 0.003, "{:?}", out.center);
        assert_eq!(out.center.z, truth.z + 0.0); // fresh height adopted
        // Margins carry the posterior spread.
        assert!(out.margins.pre > nominal().pre);
    }

    #[test]
    fn implausible_jump_reseeds_the_filter_and_recovers() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(32);
        // Belief tightly holds the old position...
        let mut ps = ParticleSet::init(Vec2::ZERO, c.pf_n, 0.002, 0.05, &mut rng);
        // ...but the object teleported 10 cm away.
        let fresh = Vec3::new(0.10, 0.0, 0.02);
        let synth = push_synth(Vec2::new(0.3, 0.0));
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center: Vec3::new(0.0, 0.0, 0.02),
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: Some(fresh),
            fresh_sigma_xy: 0.002,
        };
        let first = retarget(
            RetargetMode::UarPf,
            &req,
            &c,
            &nominal(),
            &synth,
            Some((&mut ps, &mut rng)),
        )
        .unwrap();
        assert!(first.pf_reseeded);
        // Three settle rounds after the re-seed pull the mean within 1 cm.
        let mut last = first;
        for _ in 0..3 {
            ps.predict(c.tick_dt, c.pf_sigma_v, c.pf_sigma_omega, &mut rng);
            last = retarget(
                RetargetMode::UarPf,
                &req,
                &c,
                &nominal(),
                &synth,
                Some((&mut ps, &mut rng)),
            )
            .unwrap();
            assert!(!last.pf_reseeded);
        }
        assert!(
            last.center.distance_xy(fresh) < 0.010,
            "recovered to {:?}",
            last.center
        );
    }

    #[test]
    fn filter_mode_coasts_on_the_prior_when_perception_is_rejected() {
        let c = cfg();
        let mut rng = ChaCha12Rng::seed_from_u64(33);
        let prior = Vec2::new(0.04, -0.02);
        let mut ps = ParticleSet::init(prior, c.pf_n, 0.003, 0.05, &mut rng);
        let synth = push_synth(Vec2::new(0.3, 0.0));
        let stale_center = Vec3::new(0.04, -0.02, 0.021);
        let req = RetargetRequest {
            stale_triple: triple_at(0.0),
            stale_center,
            stale_cloud: None,
            fresh_cloud: None,
            fresh_center: None, // guard rejected the fresh estimate
            fresh_sigma_xy: 0.0,
        };
        let out = retarget(
            RetargetMode::UarPf,
            &req,
            &c,
            &nominal(),
            &synth,
            Some((&mut ps, &mut rng)),
        )
        .unwrap();
        assert!(!out.pf_reseeded);
        assert!(out.center.xy().distance(prior) < 0.002);
        // Height falls back to the last trusted estimate.
        assert_eq!(out.center.z, stale_center.z);
    }
}
