//! Reliability wrappers around perception and execution: a sanity guard on
//! fresh percepts, collision-aware two-stage relocation, and monitors that
//! detect contact loss and jams.

use std::collections::VecDeque;

use crate::geometry::Vec3;
use crate::perception::PoseProxy;
use crate::servo::{StepKind, WaypointStep};

/// Guard verdict on a fresh pose estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuardDecision {
    Accept,
    /// The estimate jumped implausibly far from the last trusted one.
    RejectJump,
    /// The estimate is unusable (too few inliers).
    RejectInvalid,
}

impl GuardDecision {
    pub fn accepted(self) -> bool {
        self == GuardDecision::Accept
    }
}

/// Scene-jump guard: reject a fresh estimate whose planar or vertical motion
/// relative to the last trusted estimate exceeds the believable per-interval
/// threshold. A disabled guard still rejects invalid estimates.
pub fn vision_guard(
    fresh: &PoseProxy,
    trusted: &PoseProxy,
    tau_xy: f64,
    tau_z: f64,
    enabled: bool,
) -> GuardDecision {
    if !fresh.valid {
        return GuardDecision::RejectInvalid;
    }
    if !enabled || !trusted.valid {
        return GuardDecision::Accept;
    }
    let dxy = fresh.center.distance_xy(trusted.center);
    let dz = (fresh.center.z - trusted.center.z).abs();
    if dxy > tau_xy || dz > tau_z {
        GuardDecision::RejectJump
    } else {
        GuardDecision::Accept
    }
}

/// Split a lateral relocation into lift, transit and descent legs.
///
/// The transit height is the larger of "current height plus the hop" and
/// "obstacle top plus clearance", so the lateral leg clears whatever the
/// end-effector might drag across. A target already above the safe height
/// needs no hop and returns the bare target.
pub fn two_stage(
    ee: Vec3,
    target: Vec3,
    obstacle_top_z: f64,
    hop_dz: f64,
    clearance: f64,
) -> Vec<WaypointStep> {
    let z_safe = (ee.z + hop_dz).max(obstacle_top_z + clearance);
    if target.z >= z_safe {
        return vec![WaypointStep::new(target, StepKind::TransitXy)];
    }
    vec![
        WaypointStep::new(ee.xy().with_z(z_safe), StepKind::TransitUp),
        WaypointStep::new(target.xy().with_z(z_safe), StepKind::TransitXy),
        WaypointStep::new(target, StepKind::TransitXy),
    ]
}

/// Contact-loss monitor for pushing.
///
/// Arms when contact is first made during an active push leg; fires once
/// after more than `n_lost` consecutive contact-free ticks, then stays quiet
/// until re-armed by fresh contact.
#[derive(Debug, Clone, Default)]
pub struct SlipMonitor {
    armed: bool,
    lost_ticks: u32,
}

impl SlipMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reset(&mut self) {
        self.armed = false;
        self.lost_ticks = 0;
    }

    /// Feed one tick of contact state; returns true on the tick the monitor
    /// fires.
    pub fn observe(&mut self, in_contact: bool, push_active: bool, n_lost: u32) -> bool {
        if !push_active {
            self.reset();
            return false;
        }
        if in_contact {
            self.armed = true;
            self.lost_ticks = 0;
            return false;
        }
        if !self.armed {
            return false;
        }
        self.lost_ticks += 1;
        if self.lost_ticks > n_lost {
            // Fire exactly once per arming.
            self.armed = false;
            self.lost_ticks = 0;
            true
        } else {
            false
        }
    }
}

/// Jam monitor: fires when, over a full window of consecutive in-contact
/// ticks, the end-effector barely moved and the goal distance barely
/// improved.
#[derive(Debug, Clone)]
pub struct StallMonitor {
    window: usize,
    ee_hist: VecDeque<Vec3>,
    dist_hist: VecDeque<f64>,
}

impl StallMonitor {
    pub fn new(window: usize) -> Self {
        StallMonitor {
            window: window.max(1),
            ee_hist: VecDeque::new(),
            dist_hist: VecDeque::new(),
        }
    }

    pub fn reset(&mut self) {
        self.ee_hist.clear();
        self.dist_hist.clear();
    }

    /// Feed one tick; `goal_dist` is the controller's distance to its current
    /// waypoint. Ticks without contact clear the window (a jam requires
    /// sustained contact).
    pub fn observe(&mut self, ee: Vec3, goal_dist: f64, in_contact: bool, ee_eps: f64, progress_eps: f64) -> bool {
        if !in_contact {
            self.reset();
            return false;
        }
        self.ee_hist.push_back(ee);
        self.dist_hist.push_back(goal_dist);
        if self.ee_hist.len() < self.window {
            return false;
        }
        while self.ee_hist.len() > self.window {
            self.ee_hist.pop_front();
            self.dist_hist.pop_front();
        }
        let first = self.ee_hist[0];
        let moved = self
            .ee_hist
            .iter()
            .map(|p| p.distance(first))
            .fold(0.0, f64::max);
        let d0 = self.dist_hist[0];
        let best = self.dist_hist.iter().copied().fold(f64::INFINITY, f64::min);
        let progressed = d0 - best;
        if moved < ee_eps && progressed < progress_eps {
            self.reset();
            true
        } else {
            false
        }
    }
}

/// What the executor should do about a fired monitor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorVerdict {
    Quiet,
    /// Re-sense and rebuild goals (budget available).
    Replan(MonitorReason),
    /// Budget exhausted on a jam: give up.
    Abort(MonitorReason),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorReason {
    ContactLost,
    Stalled,
}

/// Combined monitor with a shared replan budget.
///
/// A contact-loss event consumes budget when available and is otherwise
/// ignored (the push simply ends short). A jam consumes budget when
/// available and aborts the trial otherwise.
#[derive(Debug, Clone)]
pub struct MonitorHub {
    pub slip: SlipMonitor,
    pub stall: StallMonitor,
    budget: u32,
    used: u32,
}

impl MonitorHub {
    pub fn new(stall_window: usize, budget: u32) -> Self {
        MonitorHub {
            slip: SlipMonitor::new(),
            stall: StallMonitor::new(stall_window),
            budget,
            used: 0,
        }
    }

    pub fn replans_used(&self) -> u32 {
        self.used
    }

    #[allow(clippy::too_many_arguments)]
    pub fn observe(
        &mut self,
        ee: Vec3,
        goal_dist: f64,
        in_contact: bool,
        push_active: bool,
        n_lost: u32,
        ee_eps: f64,
        progress_eps: f64,
    ) -> MonitorVerdict {
        if self.slip.observe(in_contact, push_active, n_lost) {
            if self.used < self.budget {
                self.used += 1;
                self.stall.reset();
                return MonitorVerdict::Replan(MonitorReason::ContactLost);
            }
            return MonitorVerdict::Quiet;
        }
        if self.stall.observe(ee, goal_dist, in_contact, ee_eps, progress_eps) {
            if self.used < self.budget {
                self.used += 1;
                self.slip.reset();
                return MonitorVerdict::Replan(MonitorReason::Stalled);
            }
            return MonitorVerdict::Abort(MonitorReason::Stalled);
        }
        MonitorVerdict::Quiet
    }
}
