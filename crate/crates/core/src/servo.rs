//! Capped Cartesian servo and waypoint queue.
//!
//! Each control tick moves the end-effector straight toward the current
//! target, clipping the step to a fixed magnitude. A queue of labelled
//! waypoints drives multi-leg motions; arrival at a waypoint pops it and
//! reports which gripper action (if any) belongs there.

use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::geometry::Vec3;

/// Targets closer than this count as already reached; the step is then zero
/// rather than a denormal-length crawl.
pub const ARRIVAL_EPS: f64 = 1e-12;

/// One tick of proportional servoing with a hard step cap: the full error
/// vector if it fits, otherwise the error direction scaled to `delta_max`.
pub fn servo_step(ee: Vec3, target: Vec3, delta_max: f64) -> Vec3 {
    let err = target - ee;
    let dist = err.norm();
    if dist <= ARRIVAL_EPS {
        return Vec3::ZERO;
    }
    if dist <= delta_max {
        err
    } else {
        err * (delta_max / dist)
    }
}

/// Waypoint hand-off test: planar and vertical error must both be inside
/// their tolerances.
pub fn arrived(ee: Vec3, target: Vec3, eps_xy: f64, eps_z: f64) -> bool {
    ee.distance_xy(target) <= eps_xy && (ee.z - target.z).abs() <= eps_z
}

/// Role of a waypoint within the current task phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepKind {
    /// Vertical hop before a lateral transit.
    TransitUp,
    /// Lateral transit at safe height.
    TransitXy,
    /// Staging pose (hover / behind the face / above the rim).
    Pre,
    /// Action pose (touch the face / grasp / release / full insertion).
    Contact,
    /// Finishing pose (drive end / lift / retreat).
    Post,
}

/// Gripper command issued when a waypoint is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GripCmd {
    Hold,
    Open,
    Close,
}

/// Task phase, for tasks whose pick and place legs need different gripper
/// schedules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskPhase {
    Push,
    Pick,
    StackPick,
    StackPlace,
    PegInsert,
}

/// Gripper schedule: the command to issue upon reaching a waypoint of the
/// given kind within the given phase.
///
/// Pushing never closes. Picking opens at the hover, closes at the grasp and
/// opens again after the lift; the stacking pick leg instead keeps holding
/// through the lift and releases at the place pose. Peg insertion starts with
/// the peg already held and releases at full insertion.
pub fn gripper_schedule(phase: TaskPhase, kind: StepKind) -> GripCmd {
    use GripCmd::*;
    use StepKind::*;
    match (phase, kind) {
        (_, TransitUp | TransitXy) => Hold,
        (TaskPhase::Push, _) => Open,
        (TaskPhase::Pick, Pre) => Open,
        (TaskPhase::Pick, Contact) => Close,
        (TaskPhase::Pick, Post) => Open,
        (TaskPhase::StackPick, Pre) => Open,
        (TaskPhase::StackPick, Contact) => Close,
        (TaskPhase::StackPick, Post) => Hold,
        (TaskPhase::StackPlace, Pre) => Hold,
        (TaskPhase::StackPlace, Contact) => Open,
        (TaskPhase::StackPlace, Post) => Hold,
        (TaskPhase::PegInsert, Pre) => Hold,
        (TaskPhase::PegInsert, Contact) => Open,
        (TaskPhase::PegInsert, Post) => Hold,
    }
}

/// A queued waypoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointStep {
    pub target: Vec3,
    pub kind: StepKind,
}

impl WaypointStep {
    pub fn new(target: Vec3, kind: StepKind) -> Self {
        WaypointStep { target, kind }
    }
}

/// Execution state: the pending waypoint queue plus the accumulated commanded
/// path length.
#[derive(Debug, Clone, Default)]
pub struct ExecState {
    queue: VecDeque<WaypointStep>,
    /// Sum of commanded step magnitudes, metres.
    pub travel: f64,
}

impl ExecState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Replace all pending waypoints (used at phase changes and retargets).
    pub fn load(&mut self, steps: impl IntoIterator<Item = WaypointStep>) {
        self.queue = steps.into_iter().collect();
    }

    pub fn push_front(&mut self, step: WaypointStep) {
        self.queue.push_front(step);
    }

    pub fn current(&self) -> Option<&WaypointStep> {
        self.queue.front()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.queue.len()
    }

    /// Compute this tick's capped step toward the current waypoint and add it
    /// to the travel tally. Idle state yields a zero step.
    pub fn step_toward(&mut self, ee: Vec3, delta_max: f64) -> Vec3 {
        let Some(step) = self.queue.front() else {
            return Vec3::ZERO;
        };
        let delta = servo_step(ee, step.target, delta_max);
        self.travel += delta.norm();
        delta
    }

    /// Pop the current waypoint if the end-effector has reached it.
    pub fn advance(&mut self, ee: Vec3, eps_xy: f64, eps_z: f64) -> Option<WaypointStep> {
        let step = *self.queue.front()?;
        if arrived(ee, step.target, eps_xy, eps_z) {
            self.queue.pop_front();
            Some(step)
        } else {
            None
        }
    }
}
