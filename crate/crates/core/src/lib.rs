//! Deterministic stress-test kit for mid-execution goal retargeting on a
//! simplified tabletop manipulator.
//!
//! The crate simulates a point-and-disc arm over a 1 m table, senses objects
//! through a synthetic lagged depth camera, and benchmarks five policies for
//! re-aiming a committed waypoint plan when the target object teleports
//! mid-approach. Reliability wrappers (a vision guard, two-stage transits,
//! slip/stall monitors) and a capped Cartesian servo round out the stack.
//!
//! Modules:
//! * [`geometry`] – small fixed-dimension vectors, rigid transforms, Kabsch.
//! * [`config`] – every tunable, TOML-loadable, with validated defaults.
//! * [`sim`] – the kinematic world: contact, grasping, stacking, insertion,
//!   synthetic scanning, and the teleport stressor.
//! * [`perception`] – cloud-to-pose proxies and the lag buffer.
//! * [`goals`] – waypoint-triple synthesis for push/pick/place/insert.
//! * [`servo`] – capped step servo, waypoint queue, gripper schedule.
//! * [`reliability`] – vision guard, two-stage transits, slip/stall monitors.
//! * [`retarget`] – the five goal-retargeting policies, trimmed ICP, and the
//!   constant-velocity particle filter.
//! * [`bench`] – the shift × lag trial executor, sweep driver, and emitters.

pub mod bench;
pub mod config;
pub mod geometry;
pub mod goals;
pub mod perception;
pub mod reliability;
pub mod retarget;
pub mod servo;
pub mod sim;

pub use config::Config;
pub use retarget::RetargetMode;
