//! Waypoint synthesis: turn an object pose estimate plus a task goal into the
//! pre / contact / post triple the controller executes.
//!
//! All synthesis is closed-form. The push triple lies on the line through the
//! object centre and the task goal: stage behind the face, touch the face, and
//! drive through the goal with a fixed overshoot. Pick, stack and peg goals
//! are vertical offsets from the estimated centre.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Vec2, Vec3};

/// A direction cannot be formed when the centre estimate and the task goal
/// coincide (within numerical noise).
pub const DIRECTION_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GoalError {
    #[error("degenerate push direction: centre and goal coincide (|g - c| = {0:.3e})")]
    DegeneratePushDirection(f64),
}

/// Stand-off margins applied along the push line, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginSet {
    /// Gap behind the object face at the staging waypoint.
    pub pre: f64,
    /// Gap behind the object face at first contact.
    pub contact: f64,
    /// Overshoot past the task goal at the end of the drive.
    pub over: f64,
    /// Height offset of all three waypoints relative to the object centre.
    pub z: f64,
}

impl MarginSet {
    pub fn new(pre: f64, contact: f64, over: f64, z: f64) -> Self {
        MarginSet {
            pre,
            contact,
            over,
            z,
        }
    }
}

/// The executable unit handed to the controller: stage, touch, finish.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointTriple {
    pub pre: Vec3,
    pub contact: Vec3,
    pub post: Vec3,
}

/// Straight-line push waypoints for driving an object of edge length `edge`
/// from estimated centre `c` to planar goal `g`.
///
/// With unit direction `d = (g - c) / |g - c|` in the plane:
/// pre     = c - d·(edge/2 + pre margin)
/// contact = c - d·(edge/2 + contact margin)
/// post    = contact + d·(|g - c| + overshoot)
/// and every waypoint sits at height `c.z + z margin`.
pub fn push_waypoints(
    c: Vec3,
    g: Vec2,
    edge: f64,
    m: &MarginSet,
) -> Result<WaypointTriple, GoalError> {
    let to_goal = g - c.xy();
    let dist = to_goal.norm();
    if dist <= DIRECTION_EPS {
        return Err(GoalError::DegeneratePushDirection(dist));
    }
    let d = to_goal * (1.0 / dist);
    let z = c.z + m.z;
    let half = 0.5 * edge;
    let pre = c.xy() - d * (half + m.pre);
    let contact = c.xy() - d * (half + m.contact);
    let post = contact + d * (dist + m.over);
    Ok(WaypointTriple {
        pre: pre.with_z(z),
        contact: contact.with_z(z),
        post: post.with_z(z),
    })
}

/// Pick waypoints above an object of edge length `edge` centred at `c`:
/// hover above the grasp height, descend to it, then lift clear.
///
/// grasp z = c.z + edge/2 + clearance; hover = grasp + hover offset;
/// lift = grasp + lift offset. All share the centre's xy.
pub fn pick_waypoints(
    c: Vec3,
    edge: f64,
    clearance: f64,
    hover_offset: f64,
    lift_offset: f64,
) -> WaypointTriple {
    let grasp_z = c.z + 0.5 * edge + clearance;
    let xy = c.xy();
    WaypointTriple {
        pre: xy.with_z(grasp_z + hover_offset),
        contact: xy.with_z(grasp_z),
        post: xy.with_z(grasp_z + lift_offset),
    }
}

/// Placement target for stacking a cube of edge `edge` on a base whose top
/// face sits at `base_top_z`: the held cube's centre ends half an edge above
/// the base top, over the base centre.
pub fn stack_target(base_xy: Vec2, base_top_z: f64, edge: f64) -> Vec3 {
    base_xy.with_z(base_top_z + 0.5 * edge)
}

/// Place waypoints for releasing a held object at `target`: hover above,
/// descend to the release pose, retreat upward.
pub fn place_waypoints(target: Vec3, hover_offset: f64, lift_offset: f64) -> WaypointTriple {
    WaypointTriple {
        pre: target + Vec3::new(0.0, 0.0, hover_offset),
        contact: target,
        post: target + Vec3::new(0.0, 0.0, lift_offset),
    }
}

/// Insertion waypoints over a socket: hover above the rim, descend until the
/// held peg's centre reaches the full-insertion height, then retreat.
///
/// insert z = table + peg height / 2 + seating gap. The waypoints refer to
/// the peg centre; the executor offsets to end-effector coordinates when the
/// peg is held.
pub fn peg_waypoints(
    socket_xy: Vec2,
    rim_z: f64,
    hover_offset: f64,
    table_z: f64,
    peg_height: f64,
    seat_gap: f64,
) -> WaypointTriple {
    let insert_z = table_z + 0.5 * peg_height + seat_gap;
    WaypointTriple {
        pre: socket_xy.with_z(rim_z + hover_offset),
        contact: socket_xy.with_z(insert_z),
        post: socket_xy.with_z(rim_z + hover_offset),
    }
}
