//! Single-trial executor.
//!
//! One trial builds a small tabletop scene, senses the task object once,
//! commits to a waypoint triple, and drives the capped servo toward it. When
//! the end-effector first comes within a trigger radius of the staging
//! waypoint, the object teleports by the cell's shift radius and the camera
//! goes dark for the cell's lag. While dark, the arm keeps executing the
//! stale plan. When the lag elapses the camera re-captures, the vision guard
//! screens the fresh estimate, and the configured retargeting mode makes
//! exactly one goal selection (the filtering mode takes a few extra
//! measurement rounds first). Slip and stall monitors may additionally force
//! a bounded number of re-sense/replan cycles during contact phases.
//!
//! Everything is deterministic given the trial seed: the world, the stress
//! protocol, and the belief filter each draw from an independent substream.

use crate::config::Config;
use crate::geometry::{Vec2, Vec3};
use crate::goals::{
    peg_waypoints, pick_waypoints, place_waypoints, push_waypoints, stack_target, GoalError,
    MarginSet, WaypointTriple,
};
use crate::perception::{pose_proxy, rim_proxy, LatencyBuffer, PointCloud, PoseProxy};
use crate::reliability::{two_stage, vision_guard, MonitorHub, MonitorVerdict};
use crate::retarget::{retarget, RetargetMode, RetargetRequest};
use crate::retarget::pf::ParticleSet;
use crate::servo::{gripper_schedule, ExecState, GripCmd, StepKind, TaskPhase, WaypointStep};
use crate::sim::{CameraModel, RigidObject, WorldState};

use super::{substream, Task};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

/// RNG substream tags (arbitrary distinct constants).
const STREAM_WORLD: u64 = 1;
const STREAM_PROTOCOL: u64 = 2;
const STREAM_FILTER: u64 = 3;

/// Coordinates of one benchmark trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub task: Task,
    pub mode: RetargetMode,
    /// Teleport radius, metres.
    pub shift_r: f64,
    /// Perception outage after the teleport, milliseconds.
    pub lag_ms: u64,
    /// Index of this trial within its cell.
    pub seed_index: u32,
    /// Fully derived RNG seed (see [`super::trial_seed`]).
    pub trial_seed: u64,
}

/// Optional stressors and diagnostics, constant over a sweep.
#[derive(Debug, Clone, Copy)]
pub struct TrialOptions {
    /// Displace every post-outage scan so its centre estimate lands a fixed
    /// jump away from the last trusted estimate (vision-guard stress).
    pub corrupt_fresh: bool,
    /// Magnitude of the injected estimate jump, metres.
    pub corrupt_jump: f64,
    /// Record a per-tick plain-text trace in the trial record.
    pub trace: bool,
}

impl Default for TrialOptions {
    fn default() -> Self {
        TrialOptions {
            corrupt_fresh: false,
            corrupt_jump: 0.20,
            trace: false,
        }
    }
}

/// Why a trial ended before its task resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// Hit the configured tick budget.
    Timeout,
    /// Jam detected with the replan budget already spent.
    Stalled,
    /// The executor panicked; the record carries no metrics.
    Panicked,
}

impl AbortReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            AbortReason::Timeout => "timeout",
            AbortReason::Stalled => "stalled",
            AbortReason::Panicked => "panicked",
        }
    }
}

/// Everything measured about one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub spec: TrialSpec,
    pub success: bool,
    /// The target object was held at least `success_pick_lift` above its
    /// rest height at some point (pick and stack tasks).
    pub picked: bool,
    pub aborted: Option<AbortReason>,
    /// Monitor-driven re-sense/replan cycles actually taken.
    pub replans: u32,
    /// Fresh estimates discarded by the vision guard.
    pub guard_rejects: u32,
    /// Fresh estimates accepted by the vision guard.
    pub fresh_accepts: u32,
    /// The belief filter restarted around a measurement at least once.
    pub pf_reseeded: bool,
    /// Seconds from the teleport to the post-outage goal selection.
    pub retarget_latency_s: Option<f64>,
    /// Total commanded end-effector path length, metres.
    pub ee_travel_m: f64,
    pub final_goal_dist_m: f64,
    pub min_goal_dist_m: f64,
    /// Planar landing error of the task object (for pick: of the gripper).
    pub final_xy_err_m: f64,
    pub ticks: u64,
    /// Per-tick trace lines; empty unless requested via [`TrialOptions`].
    #[serde(skip)]
    pub trace: Vec<String>,
}

impl TrialRecord {
    fn fresh(spec: &TrialSpec) -> Self {
        TrialRecord {
            spec: *spec,
            success: false,
            picked: false,
            aborted: None,
            replans: 0,
            guard_rejects: 0,
            fresh_accepts: 0,
            pf_reseeded: false,
            retarget_latency_s: None,
            ee_travel_m: 0.0,
            final_goal_dist_m: f64::INFINITY,
            min_goal_dist_m: f64::INFINITY,
            final_xy_err_m: f64::INFINITY,
            ticks: 0,
            trace: Vec::new(),
        }
    }

    /// Placeholder record for a trial whose executor panicked.
    pub fn panicked(spec: &TrialSpec) -> Self {
        TrialRecord {
            aborted: Some(AbortReason::Panicked),
            final_goal_dist_m: f64::NAN,
            min_goal_dist_m: f64::NAN,
            final_xy_err_m: f64::NAN,
            ..TrialRecord::fresh(spec)
        }
    }
}

/// A segmented centre estimate plus the statistics the guard and the
/// retargeting policies need, regardless of which proxy produced it.
#[derive(Debug, Clone, Copy)]
struct Estimate {
    center: Vec3,
    /// Raw planar spread of the supporting returns.
    sigma_xy: f64,
    /// Number of supporting returns.
    count: usize,
    valid: bool,
}

fn guard_proxy(est: &Estimate) -> PoseProxy {
    PoseProxy {
        center: est.center,
        valid: est.valid,
        inlier_count: est.count,
        sigma_xy: est.sigma_xy,
        sigma_z: 0.0,
    }
}

/// Scan the task object and reduce the cloud to a centre estimate. Cubes use
/// the box pose proxy; the socket uses the rim proxy over the merged
/// wall-top and through-hole returns.
fn sense_world(
    world: &mut WorldState,
    camera: &CameraModel,
    task: Task,
    id: usize,
    cfg: &Config,
) -> (PointCloud, Estimate) {
    if task == Task::Peg {
        let (rim, interior) =
            world.rim_scan(camera, id, cfg.rim_points_per_scan, cfg.interior_points_per_scan);
        let mut points = rim.points;
        points.extend_from_slice(&interior.points);
        let merged = PointCloud {
            stamp: interior.stamp,
            points,
        };
        let proxy = rim_proxy(&merged, cfg.table_z, cfg.rim_z(), cfg.rim_min_points);
        let count = if proxy.used_fallback {
            proxy.interior_count
        } else {
            proxy.rim_count
        };
        let est = Estimate {
            center: proxy.center,
            sigma_xy: proxy.sigma_xy,
            count,
            valid: proxy.valid,
        };
        (merged, est)
    } else {
        let cloud = world.scan(camera, id);
        let proxy = pose_proxy(&cloud, cfg.cube_edge, cfg.min_inliers);
        let est = Estimate {
            center: proxy.center,
            sigma_xy: proxy.sigma_xy,
            count: proxy.inlier_count,
            valid: proxy.valid,
        };
        (cloud, est)
    }
}

/// Both proxies are translation-equivariant, so a corrupted capture can be
/// synthesized exactly: displace the returns and the estimate together until
/// the estimate sits at `target_xy`.
fn displace_estimate(cloud: &mut PointCloud, est: &mut Estimate, target_xy: Vec2) {
    let d = target_xy - est.center.xy();
    let dv = Vec3::new(d.x, d.y, 0.0);
    for p in &mut cloud.points {
        *p = *p + dv;
    }
    est.center = est.center + dv;
}

/// Rebuild a task-appropriate waypoint triple around a centre estimate.
/// Push aims the straight-line drive; pick (also the stack's pick leg)
/// hovers, descends to the grasp height, and lifts; the peg task hovers over
/// the rim estimate and descends to full insertion depth. Stand-off margins
/// only shape the push triple.
fn synth_triple(
    task: Task,
    goal_xy: Vec2,
    cfg: &Config,
    c: Vec3,
    m: &MarginSet,
) -> Result<WaypointTriple, GoalError> {
    match task {
        Task::Push => push_waypoints(c, goal_xy, cfg.cube_edge, m),
        Task::Pick | Task::Stack => Ok(pick_waypoints(
            c,
            cfg.cube_edge,
            cfg.pick_clearance,
            cfg.hover_offset,
            cfg.lift_offset,
        )),
        Task::Peg => Ok(peg_waypoints(
            c.xy(),
            c.z,
            cfg.peg_hover,
            cfg.table_z,
            cfg.peg_height,
            cfg.insert_seat_gap,
        )),
    }
}

/// Measurement spread handed to the retargeting policies. The margin
/// inflation mode consumes the raw planar spread of the scan; the filtering
/// mode fuses the centre estimate, whose standard error shrinks with the
/// return count (the filter applies its own lower bound).
fn measurement_sigma(mode: RetargetMode, est: &Estimate) -> f64 {
    if mode.uses_filter() {
        est.sigma_xy / (est.count.max(1) as f64).sqrt()
    } else {
        est.sigma_xy
    }
}

/// Stress-protocol stage.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Stress {
    /// Waiting for the end-effector to reach the trigger radius.
    Pending,
    /// Teleport applied; camera dark until the given tick.
    Holding { until: u64 },
    /// Optional vertical hop before the first post-outage capture.
    Peeking { left: u32 },
    /// Post-outage measurement rounds remaining (the last one commits).
    Rounds { left: u32 },
    Done,
}

enum Flow {
    Continue,
    Abort,
}

struct Trial<'a> {
    cfg: &'a Config,
    spec: &'a TrialSpec,
    opts: &'a TrialOptions,
    camera: CameraModel,
    world: WorldState,
    exec: ExecState,
    hub: MonitorHub,
    buffer: LatencyBuffer,
    filter: Option<ParticleSet>,
    pf_rng: ChaCha12Rng,
    pf_last_tick: u64,
    nominal: MarginSet,
    phase: TaskPhase,
    target_id: usize,
    cargo_id: Option<usize>,
    goal_xy: Vec2,
    g_stack: Vec3,
    base_top_est: f64,
    rest_z: f64,
    trusted: Estimate,
    current_triple: WaypointTriple,
    current_center: Vec3,
    stress: Stress,
    onset_tick: u64,
    lag_ticks: u64,
    shift_theta: f64,
    corrupt_dir: Vec2,
    pending_grip: Option<GripCmd>,
    extra_travel: f64,
    rec: TrialRecord,
    events: Vec<&'static str>,
}

/// Run one benchmark trial to completion and report what happened.
pub fn run_trial(spec: &TrialSpec, cfg: &Config, opts: &TrialOptions) -> TrialRecord {
    Trial::new(spec, cfg, opts).run()
}

impl<'a> Trial<'a> {
    fn new(spec: &'a TrialSpec, cfg: &'a Config, opts: &'a TrialOptions) -> Self {
        let camera = CameraModel::from_config(cfg);
        let mut world = WorldState::new(cfg, substream(spec.trial_seed, STREAM_WORLD));
        let mut protocol_rng =
            ChaCha12Rng::seed_from_u64(substream(spec.trial_seed, STREAM_PROTOCOL));
        let mut pf_rng = ChaCha12Rng::seed_from_u64(substream(spec.trial_seed, STREAM_FILTER));

        let jitter = |rng: &mut ChaCha12Rng| -> Vec2 {
            let j = cfg.start_jitter;
            if j > 0.0 {
                Vec2::new(rng.gen_range(-j..j), rng.gen_range(-j..j))
            } else {
                Vec2::ZERO
            }
        };

        // Scene. The shifted, sensed object is always index 0.
        let mut goal_xy = Vec2::ZERO;
        let mut cargo_id = None;
        let mut base_id = None;
        let target_id;
        match spec.task {
            Task::Push => {
                let start = Vec2::new(cfg.push_start_x, cfg.push_start_y) + jitter(&mut protocol_rng);
                target_id = world.add_object(RigidObject::cube(start, cfg.cube_edge, cfg.table_z));
                goal_xy = Vec2::new(cfg.push_goal_x, cfg.push_goal_y);
            }
            Task::Pick => {
                let start = Vec2::new(cfg.pick_start_x, cfg.pick_start_y) + jitter(&mut protocol_rng);
                target_id = world.add_object(RigidObject::cube(start, cfg.cube_edge, cfg.table_z));
            }
            Task::Stack => {
                let cube = Vec2::new(cfg.stack_cube_x, cfg.stack_cube_y) + jitter(&mut protocol_rng);
                let base = Vec2::new(cfg.stack_base_x, cfg.stack_base_y) + jitter(&mut protocol_rng);
                target_id = world.add_object(RigidObject::cube(cube, cfg.cube_edge, cfg.table_z));
                base_id =
                    Some(world.add_object(RigidObject::base_cube(base, cfg.cube_edge, cfg.table_z)));
            }
            Task::Peg => {
                let socket = Vec2::new(cfg.peg_socket_x, cfg.peg_socket_y) + jitter(&mut protocol_rng);
                target_id = world.add_object(RigidObject::socket(
                    socket,
                    cfg.socket_outer_half,
                    cfg.socket_inner_half(),
                    cfg.socket_wall_height,
                    cfg.table_z,
                ));
                let carry_z = 0.5 * cfg.peg_height + cfg.pick_clearance;
                let peg_center = world.ee - Vec3::new(0.0, 0.0, carry_z);
                let id = world.add_object(RigidObject::peg(
                    peg_center,
                    cfg.peg_half_width,
                    cfg.peg_height,
                ));
                world.attach(id);
                cargo_id = Some(id);
            }
        }
        let shift_theta = protocol_rng.gen_range(0.0..TAU);
        let corrupt_angle: f64 = protocol_rng.gen_range(0.0..TAU);
        let corrupt_dir = Vec2::new(corrupt_angle.cos(), corrupt_angle.sin());

        // First capture: the trusted baseline and the seed of the lag buffer.
        let mut buffer = LatencyBuffer::new(spec.lag_ms as f64 / 1000.0);
        let (cloud0, est0) = sense_world(&mut world, &camera, spec.task, target_id, cfg);
        buffer.push(cloud0);

        // The stack's landing pose comes from a one-off scan of the base,
        // which the stressor never moves.
        let mut base_top_est = cfg.table_z + cfg.cube_edge;
        let mut g_stack = Vec3::ZERO;
        if let Some(base) = base_id {
            let bcloud = world.scan(&camera, base);
            let bproxy = pose_proxy(&bcloud, cfg.cube_edge, cfg.min_inliers);
            let base_xy = if bproxy.valid {
                base_top_est = bproxy.center.z + 0.5 * cfg.cube_edge;
                bproxy.center.xy()
            } else {
                Vec2::new(cfg.stack_base_x, cfg.stack_base_y)
            };
            g_stack = stack_target(base_xy, base_top_est, cfg.cube_edge);
        }

        let nominal = MarginSet::new(cfg.delta_pre, cfg.delta_contact, cfg.delta_over, cfg.delta_z);
        let current_triple = synth_triple(spec.task, goal_xy, cfg, est0.center, &nominal)
            .expect("initial goal synthesis");

        let filter = spec.mode.uses_filter().then(|| {
            ParticleSet::init(
                est0.center.xy(),
                cfg.pf_n,
                cfg.pf_sigma0_xy,
                cfg.pf_sigma0_theta,
                &mut pf_rng,
            )
        });

        let phase = match spec.task {
            Task::Push => TaskPhase::Push,
            Task::Pick => TaskPhase::Pick,
            Task::Stack => TaskPhase::StackPick,
            Task::Peg => TaskPhase::PegInsert,
        };

        let lag_s = spec.lag_ms as f64 / 1000.0;
        let mut trial = Trial {
            cfg,
            spec,
            opts,
            camera,
            world,
            exec: ExecState::new(),
            hub: MonitorHub::new(cfg.stall_window_ticks(), spec.mode.replan_budget(cfg)),
            buffer,
            filter,
            pf_rng,
            pf_last_tick: 0,
            nominal,
            phase,
            target_id,
            cargo_id,
            goal_xy,
            g_stack,
            base_top_est,
            rest_z: cfg.table_z + 0.5 * cfg.cube_edge,
            trusted: est0,
            current_triple,
            current_center: est0.center,
            stress: Stress::Pending,
            onset_tick: 0,
            lag_ticks: (lag_s / cfg.tick_dt).round() as u64,
            shift_theta,
            corrupt_dir,
            pending_grip: None,
            extra_travel: 0.0,
            rec: TrialRecord::fresh(spec),
            events: Vec::new(),
        };
        trial.rebuild();
        trial
    }

    fn run(mut self) -> TrialRecord {
        let timeout = self.cfg.timeout_ticks();
        loop {
            if self.world.tick >= timeout {
                self.rec.aborted = Some(AbortReason::Timeout);
                break;
            }
            if self.exec.is_idle() && matches!(self.stress, Stress::Done | Stress::Pending) {
                break;
            }
            if matches!(self.step_tick(), Flow::Abort) {
                break;
            }
        }
        self.finish()
    }

    /// One control tick, in fixed order: belief prediction, stress protocol,
    /// servo command, world step, metrics, monitors, waypoint arrival.
    fn step_tick(&mut self) -> Flow {
        let t = self.world.tick;
        self.events.clear();

        // Advance the belief to the present before any measurement.
        if self.cfg.pf_continuous {
            if let Some(ps) = self.filter.as_mut() {
                ps.predict(
                    self.cfg.tick_dt,
                    self.cfg.pf_sigma_v,
                    self.cfg.pf_sigma_omega,
                    &mut self.pf_rng,
                );
                self.pf_last_tick = t;
            }
        }

        // Stress protocol. The stages cascade so a zero lag (or the last
        // peek tick) flows into its measurement round within the same tick.
        if self.stress == Stress::Pending {
            let pre_ee = self.current_triple.pre + self.carry();
            if self.world.ee.distance_xy(pre_ee) <= self.cfg.trigger_radius_xy {
                self.world
                    .apply_shift(self.target_id, self.spec.shift_r, self.shift_theta);
                self.onset_tick = t;
                self.stress = Stress::Holding {
                    until: t + self.lag_ticks,
                };
                self.events.push("trigger");
            }
        }
        if let Stress::Holding { until } = self.stress {
            if t >= until {
                self.stress = if self.cfg.peek_lift {
                    Stress::Peeking {
                        left: (self.cfg.peek_lift_height / self.cfg.delta_max).ceil() as u32,
                    }
                } else {
                    Stress::Rounds {
                        left: self.rounds_total(),
                    }
                };
            }
        }
        if let Stress::Peeking { left } = self.stress {
            if left == 0 {
                self.stress = Stress::Rounds {
                    left: self.rounds_total(),
                };
            } else {
                self.stress = Stress::Peeking { left: left - 1 };
            }
        }
        if let Stress::Rounds { left } = self.stress {
            let last = left == 1;
            if self.round(last) {
                self.rebuild();
            }
            if last {
                self.rec.retarget_latency_s =
                    Some((t - self.onset_tick) as f64 * self.cfg.tick_dt);
                self.stress = Stress::Done;
                self.events.push("select");
            } else {
                self.stress = Stress::Rounds { left: left - 1 };
            }
        }

        // Servo: during a peek the queue pauses and the arm hops straight up.
        let peeking = matches!(self.stress, Stress::Peeking { .. });
        let delta = if peeking {
            self.extra_travel += self.cfg.delta_max;
            Vec3::new(0.0, 0.0, self.cfg.delta_max)
        } else {
            self.exec.step_toward(self.world.ee, self.cfg.delta_max)
        };
        let grip = self.pending_grip.take().unwrap_or(GripCmd::Hold);
        let kind_now = self.exec.current().map(|s| s.kind);
        let ev = self.world.step(delta, grip);
        if ev.grasped.is_some() {
            self.events.push("grasp");
        }
        if ev.grasp_failed {
            self.events.push("grasp-miss");
        }
        if ev.released.is_some() {
            self.events.push("release");
        }

        // Metrics and success latches.
        let gd = self.goal_distance();
        if gd < self.rec.min_goal_dist_m {
            self.rec.min_goal_dist_m = gd;
        }
        if matches!(self.spec.task, Task::Pick | Task::Stack)
            && self.world.is_held(self.target_id)
            && self.world.objects[self.target_id].center.z - self.rest_z
                >= self.cfg.success_pick_lift
        {
            self.rec.picked = true;
        }

        // Contact monitors run only for the contact-rich tasks, and sleep
        // while the camera is dark (a replan needs a fresh capture).
        if matches!(self.spec.task, Task::Push | Task::Peg)
            && matches!(self.stress, Stress::Pending | Stress::Done)
        {
            let (in_contact, push_active) = match self.spec.task {
                Task::Push => (
                    self.world.contact_query(self.target_id).1,
                    matches!(kind_now, Some(StepKind::Contact | StepKind::Post)),
                ),
                Task::Peg => (ev.blocked, matches!(kind_now, Some(StepKind::Contact))),
                _ => unreachable!(),
            };
            match self.hub.observe(
                self.world.ee,
                gd,
                in_contact,
                push_active,
                self.cfg.n_lost,
                self.cfg.stall_ee_eps,
                self.cfg.stall_progress_eps,
            ) {
                MonitorVerdict::Quiet => {}
                MonitorVerdict::Replan(_) => {
                    self.events.push("replan");
                    if self.round(true) {
                        self.rebuild();
                    }
                    self.hub.slip.reset();
                    self.hub.stall.reset();
                }
                MonitorVerdict::Abort(_) => {
                    self.events.push("jam-abort");
                    self.rec.aborted = Some(AbortReason::Stalled);
                    self.trace_tick(t);
                    return Flow::Abort;
                }
            }
        }

        // Waypoint arrival: pop at most one waypoint per tick and schedule
        // its gripper command for the next tick.
        if let Some(step) = self.exec.advance(self.world.ee, self.cfg.eps_xy, self.cfg.eps_z) {
            self.pending_grip = Some(gripper_schedule(self.phase, step.kind));
            self.events.push(match step.kind {
                StepKind::TransitUp => "arrive-up",
                StepKind::TransitXy => "arrive-xy",
                StepKind::Pre => "arrive-pre",
                StepKind::Contact => "arrive-contact",
                StepKind::Post => "arrive-post",
            });
            if self.spec.task == Task::Stack
                && self.phase == TaskPhase::StackPick
                && step.kind == StepKind::Post
            {
                self.begin_place();
            }
        }

        self.trace_tick(t);
        Flow::Continue
    }

    /// Total post-outage measurement rounds: a single capture, or capture
    /// plus a short settling burst when a belief filter is fusing.
    fn rounds_total(&self) -> u32 {
        if self.spec.mode.uses_filter() {
            1 + self.cfg.pf_settle_ticks
        } else {
            1
        }
    }

    /// End-effector offset of the active waypoint frame: zero when the arm
    /// moves bare, the grip height when waypoints refer to held cargo.
    fn carry(&self) -> Vec3 {
        match self.phase {
            TaskPhase::StackPlace => {
                Vec3::new(0.0, 0.0, 0.5 * self.cfg.cube_edge + self.cfg.pick_clearance)
            }
            TaskPhase::PegInsert => {
                Vec3::new(0.0, 0.0, 0.5 * self.cfg.peg_height + self.cfg.pick_clearance)
            }
            _ => Vec3::ZERO,
        }
    }

    /// Highest obstacle the transit must clear, in end-effector coordinates
    /// (held cargo shifts the clearance datum up by its grip depth).
    fn obstacle_top(&self) -> f64 {
        let cfg = self.cfg;
        match self.phase {
            TaskPhase::Push | TaskPhase::Pick => self.trusted.center.z + 0.5 * cfg.cube_edge,
            TaskPhase::StackPick => {
                (self.trusted.center.z + 0.5 * cfg.cube_edge).max(self.base_top_est)
            }
            TaskPhase::StackPlace => self.base_top_est + cfg.cube_edge + cfg.pick_clearance,
            TaskPhase::PegInsert => self.trusted.center.z + cfg.peg_height + cfg.pick_clearance,
        }
    }

    /// Replace the queue: hop-and-transit to the staging waypoint, then the
    /// action triple, all in end-effector coordinates.
    fn rebuild(&mut self) {
        let carry = self.carry();
        let pre = self.current_triple.pre + carry;
        let mut steps = two_stage(
            self.world.ee,
            pre,
            self.obstacle_top(),
            self.cfg.two_stage_dz,
            self.cfg.two_stage_clear,
        );
        steps.push(WaypointStep::new(pre, StepKind::Pre));
        steps.push(WaypointStep::new(self.current_triple.contact + carry, StepKind::Contact));
        steps.push(WaypointStep::new(self.current_triple.post + carry, StepKind::Post));
        self.exec.load(steps);
    }

    /// Switch the stack task from the pick leg to the place leg.
    fn begin_place(&mut self) {
        self.phase = TaskPhase::StackPlace;
        self.current_triple =
            place_waypoints(self.g_stack, self.cfg.hover_offset, self.cfg.lift_offset);
        self.current_center = self.g_stack;
        self.rebuild();
    }

    /// One re-sense/re-select round: capture, guard, stash the cloud in the
    /// lag buffer, and run the retargeting policy. Returns true when new
    /// goals were committed (the caller rebuilds the queue). With
    /// `commit == false` only the belief filter absorbs the measurement.
    fn round(&mut self, commit: bool) -> bool {
        if !self.cfg.pf_continuous {
            if let Some(ps) = self.filter.as_mut() {
                let gap = self.world.tick - self.pf_last_tick;
                if gap > 0 {
                    ps.predict(
                        gap as f64 * self.cfg.tick_dt,
                        self.cfg.pf_sigma_v,
                        self.cfg.pf_sigma_omega,
                        &mut self.pf_rng,
                    );
                }
                self.pf_last_tick = self.world.tick;
            }
        }

        let (mut cloud, mut est) = sense_world(
            &mut self.world,
            &self.camera,
            self.spec.task,
            self.target_id,
            self.cfg,
        );
        if self.opts.corrupt_fresh && est.valid {
            let target_xy = self.trusted.center.xy() + self.corrupt_dir * self.opts.corrupt_jump;
            displace_estimate(&mut cloud, &mut est, target_xy);
        }

        let decision = vision_guard(
            &guard_proxy(&est),
            &guard_proxy(&self.trusted),
            self.cfg.tau_xy,
            self.cfg.tau_z,
            self.cfg.guard_enabled,
        );
        let fresh_center = if decision.accepted() {
            self.trusted = est;
            self.rec.fresh_accepts += 1;
            Some(est.center)
        } else {
            self.rec.guard_rejects += 1;
            self.events.push("guard-reject");
            None
        };

        self.buffer.push(cloud.clone());
        let stale_cloud = self.buffer.fetch(self.world.time());
        let req = RetargetRequest {
            stale_triple: self.current_triple,
            stale_center: self.current_center,
            stale_cloud,
            fresh_cloud: Some(&cloud),
            fresh_center,
            fresh_sigma_xy: measurement_sigma(self.spec.mode, &est),
        };
        let task = self.spec.task;
        let goal_xy = self.goal_xy;
        let cfg = self.cfg;
        let synth = move |c: Vec3, m: &MarginSet| synth_triple(task, goal_xy, cfg, c, m);
        let outcome = retarget(
            self.spec.mode,
            &req,
            cfg,
            &self.nominal,
            &synth,
            self.filter.as_mut().map(|ps| (ps, &mut self.pf_rng)),
        );
        match outcome {
            Ok(out) => {
                self.rec.pf_reseeded |= out.pf_reseeded;
                if commit && self.spec.mode != RetargetMode::None {
                    self.current_triple = out.triple;
                    self.current_center = out.center;
                    return true;
                }
                false
            }
            // A rejected or missing fresh estimate: keep the stale goals.
            Err(_) => false,
        }
    }

    /// Distance from the task's moving piece to its terminal pose.
    fn goal_distance(&self) -> f64 {
        match self.spec.task {
            Task::Push => (self.world.objects[self.target_id].center.xy() - self.goal_xy).norm(),
            Task::Pick => {
                let obj = &self.world.objects[self.target_id];
                let grasp = obj.center.xy().with_z(self.world.grasp_height(self.target_id));
                (self.world.ee - grasp).norm()
            }
            Task::Stack => (self.world.objects[self.target_id].center - self.g_stack).norm(),
            Task::Peg => {
                let peg = self.cargo_id.expect("peg task has cargo");
                let socket = &self.world.objects[self.target_id];
                let seat = socket.center.xy().with_z(self.cfg.insert_z());
                (self.world.objects[peg].center - seat).norm()
            }
        }
    }

    /// Planar landing error for the record.
    fn final_xy_err(&self) -> f64 {
        match self.spec.task {
            Task::Push => (self.world.objects[self.target_id].center.xy() - self.goal_xy).norm(),
            Task::Pick => self
                .world
                .ee
                .distance_xy(self.world.objects[self.target_id].center),
            Task::Stack => (self.world.objects[self.target_id].center.xy() - self.g_stack.xy()).norm(),
            Task::Peg => {
                let peg = self.cargo_id.expect("peg task has cargo");
                (self.world.objects[peg].center.xy()
                    - self.world.objects[self.target_id].center.xy())
                .norm()
            }
        }
    }

    fn task_success(&self) -> bool {
        let cfg = self.cfg;
        match self.spec.task {
            Task::Push => {
                (self.world.objects[self.target_id].center.xy() - self.goal_xy).norm()
                    <= cfg.success_push_tol
            }
            Task::Pick => self.rec.picked,
            Task::Stack => {
                let c = self.world.objects[self.target_id].center;
                !self.world.is_held(self.target_id)
                    && (c.xy() - self.g_stack.xy()).norm() <= cfg.stack_tol_xy
                    && (c.z - self.g_stack.z).abs() <= cfg.stack_tol_z
            }
            Task::Peg => {
                let peg = self.cargo_id.expect("peg task has cargo");
                let socket = &self.world.objects[self.target_id];
                let c = self.world.objects[peg].center;
                // The wall clamp lands exactly on the clearance boundary, so
                // allow ulp-scale slack on the comparisons.
                const SLACK: f64 = 1e-9;
                !self.world.is_held(peg)
                    && (c.x - socket.center.x).abs() <= cfg.socket_clearance + SLACK
                    && (c.y - socket.center.y).abs() <= cfg.socket_clearance + SLACK
                    && c.z <= cfg.insert_z() + cfg.success_peg_depth + SLACK
            }
        }
    }

    fn trace_tick(&mut self, t: u64) {
        if !self.opts.trace {
            return;
        }
        use std::fmt::Write as _;
        let mut line = format!(
            "t={:05} ee={:.4},{:.4},{:.4} grip={}",
            t,
            self.world.ee.x,
            self.world.ee.y,
            self.world.ee.z,
            if self.world.gripper_closed { "closed" } else { "open" },
        );
        for (i, o) in self.world.objects.iter().enumerate() {
            let _ = write!(
                line,
                " obj{}={:.4},{:.4},{:.4}",
                i, o.center.x, o.center.y, o.center.z
            );
        }
        if !self.events.is_empty() {
            let _ = write!(line, " ev={}", self.events.join("+"));
        }
        self.rec.trace.push(line);
    }

    fn finish(mut self) -> TrialRecord {
        self.rec.replans = self.hub.replans_used();
        self.rec.ee_travel_m = self.exec.travel + self.extra_travel;
        self.rec.ticks = self.world.tick;
        self.rec.final_goal_dist_m = self.goal_distance();
        self.rec.final_xy_err_m = self.final_xy_err();
        self.rec.success = self.rec.aborted.is_none() && self.task_success();
        self.rec
    }
}
