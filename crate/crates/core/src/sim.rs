//! Deterministic quasi-static tabletop world.
//!
//! A single end-effector point (with a planar contact disc) moves over a
//! square table among axis-aligned rigid objects. Contact is resolved
//! analytically — disc-versus-footprint penetration projection — instead of
//! impulse physics, so every trajectory is an exact function of (seed,
//! command stream). Perception is direct surface sampling with Gaussian
//! noise and dropout, drawn only from the world's seeded generator.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use rand::SeedableRng;

use crate::config::Config;
use crate::geometry::{Vec2, Vec3};
use crate::perception::PointCloud;
use crate::servo::GripCmd;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjKind {
    Cube,
    BaseCube,
    Peg,
    Socket,
}

/// Axis-aligned rigid body. `half_xy` is the footprint half-width (cubes:
/// edge/2; peg: half-width; socket: outer half-width), `height` the full
/// vertical extent. Sockets carry the opening half-width in `inner_half`.
/// Yaw is carried for fidelity to the state definition but stays zero in
/// this axis-aligned world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidObject {
    pub kind: ObjKind,
    pub center: Vec3,
    pub half_xy: f64,
    pub height: f64,
    pub yaw: f64,
    pub inner_half: f64,
}

impl RigidObject {
    pub fn cube(center_xy: Vec2, edge: f64, table_z: f64) -> Self {
        RigidObject {
            kind: ObjKind::Cube,
            center: center_xy.with_z(table_z + 0.5 * edge),
            half_xy: 0.5 * edge,
            height: edge,
            yaw: 0.0,
            inner_half: 0.0,
        }
    }

    pub fn base_cube(center_xy: Vec2, edge: f64, table_z: f64) -> Self {
        RigidObject {
            kind: ObjKind::BaseCube,
            ..Self::cube(center_xy, edge, table_z)
        }
    }

    pub fn peg(center: Vec3, half_width: f64, height: f64) -> Self {
        RigidObject {
            kind: ObjKind::Peg,
            center,
            half_xy: half_width,
            height,
            yaw: 0.0,
            inner_half: 0.0,
        }
    }

    pub fn socket(center_xy: Vec2, outer_half: f64, inner_half: f64, wall_height: f64, table_z: f64) -> Self {
        RigidObject {
            kind: ObjKind::Socket,
            center: center_xy.with_z(table_z + 0.5 * wall_height),
            half_xy: outer_half,
            height: wall_height,
            yaw: 0.0,
            inner_half,
        }
    }

    pub fn top_z(&self) -> f64 {
        self.center.z + 0.5 * self.height
    }

    pub fn bottom_z(&self) -> f64 {
        self.center.z - 0.5 * self.height
    }

    fn pushable(&self) -> bool {
        matches!(self.kind, ObjKind::Cube | ObjKind::BaseCube)
    }

    fn graspable(&self) -> bool {
        matches!(self.kind, ObjKind::Cube | ObjKind::BaseCube | ObjKind::Peg)
    }
}

/// Tolerance for socket-alignment tests. Clamping a coordinate to
/// `socket + play` and re-deriving the offset disagrees with `play` by a few
/// ulps of the absolute position, so exact comparisons would flicker; one
/// nanometre is far above that noise and far below any physical scale here.
const ALIGN_EPS: f64 = 1e-9;

/// Signed planar distance from a point to an axis-aligned square footprint
/// (negative inside) plus the outward direction toward the point's side.
fn footprint_signed_distance(p: Vec2, center: Vec2, half: f64) -> (f64, Vec2) {
    let dx = p.x - center.x;
    let dy = p.y - center.y;
    let ex = half - dx.abs();
    let ey = half - dy.abs();
    if ex >= 0.0 && ey >= 0.0 {
        // Inside: exit through the nearest face.
        if ex <= ey {
            let sign = if dx >= 0.0 { 1.0 } else { -1.0 };
            (-ex, Vec2::new(sign, 0.0))
        } else {
            let sign = if dy >= 0.0 { 1.0 } else { -1.0 };
            (-ey, Vec2::new(0.0, sign))
        }
    } else {
        let qx = dx.clamp(-half, half);
        let qy = dy.clamp(-half, half);
        let off = Vec2::new(dx - qx, dy - qy);
        let d = off.norm();
        (d, off * (1.0 / d))
    }
}

/// What happened during one world step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepEvents {
    /// Object index displaced by contact this tick.
    pub pushed: Option<usize>,
    /// End-effector motion was clamped at the workspace boundary.
    pub ee_clamped: bool,
    /// Motion of the end-effector or a held object was blocked by a support
    /// surface, wall, or jammed contact.
    pub blocked: bool,
    pub grasped: Option<usize>,
    pub released: Option<usize>,
    /// A close command found nothing within the grasp tolerance.
    pub grasp_failed: bool,
}

/// Synthetic depth sensing parameters.
#[derive(Debug, Clone, Copy)]
pub struct CameraModel {
    pub points_per_scan: usize,
    pub noise_std: f64,
    pub dropout_prob: f64,
}

impl CameraModel {
    pub fn from_config(cfg: &Config) -> Self {
        CameraModel {
            points_per_scan: cfg.points_per_scan,
            noise_std: cfg.camera_noise_std,
            dropout_prob: cfg.dropout_prob,
        }
    }
}

/// Full simulation state. Time is exactly `tick × dt`.
#[derive(Debug, Clone)]
pub struct WorldState {
    pub tick: u64,
    pub dt: f64,
    pub ee: Vec3,
    pub gripper_closed: bool,
    pub held: Option<usize>,
    hold_offset: Vec3,
    pub objects: Vec<RigidObject>,
    pub rng: ChaCha12Rng,
    // Geometry parameters frozen from config at construction.
    pub table_z: f64,
    pub workspace_half_xy: f64,
    pub workspace_z_max: f64,
    pub ee_radius: f64,
    pub push_friction: f64,
    pub contact_eps: f64,
    pub grasp_tol_xy: f64,
    pub grasp_tol_z: f64,
    pub pick_clearance: f64,
}

impl WorldState {
    pub fn new(cfg: &Config, seed: u64) -> Self {
        WorldState {
            tick: 0,
            dt: cfg.tick_dt,
            ee: Vec3::new(cfg.ee_start_x, cfg.ee_start_y, cfg.ee_start_z),
            gripper_closed: false,
            held: None,
            hold_offset: Vec3::ZERO,
            objects: Vec::new(),
            rng: ChaCha12Rng::seed_from_u64(seed),
            table_z: cfg.table_z,
            workspace_half_xy: cfg.workspace_half_xy,
            workspace_z_max: cfg.workspace_z_max,
            ee_radius: cfg.ee_radius,
            push_friction: cfg.push_friction,
            contact_eps: cfg.contact_eps,
            grasp_tol_xy: cfg.grasp_tol_xy,
            grasp_tol_z: cfg.grasp_tol_z,
            pick_clearance: cfg.pick_clearance,
        }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn add_object(&mut self, obj: RigidObject) -> usize {
        self.objects.push(obj);
        self.objects.len() - 1
    }

    /// Attach an object rigidly to the end-effector (used for tasks that
    /// begin with the object already in the gripper).
    pub fn attach(&mut self, id: usize) {
        self.gripper_closed = true;
        self.held = Some(id);
        self.hold_offset = self.objects[id].center - self.ee;
    }

    pub fn is_held(&self, id: usize) -> bool {
        self.held == Some(id)
    }

    /// Grasp height reference for an object: its top plus the standard
    /// vertical clearance.
    pub fn grasp_height(&self, id: usize) -> f64 {
        self.objects[id].top_z() + self.pick_clearance
    }

    /// Planar clearance between the end-effector disc and an object's
    /// footprint (negative = penetration), plus the contact flag.
    pub fn contact_query(&self, id: usize) -> (f64, bool) {
        let obj = &self.objects[id];
        let (sd, _) = footprint_signed_distance(self.ee.xy(), obj.center.xy(), obj.half_xy);
        let clearance = sd - self.ee_radius;
        (clearance, clearance <= self.contact_eps)
    }

    /// Advance one control tick: apply the gripper command, move the
    /// end-effector by `delta` subject to workspace and support constraints,
    /// and resolve pushing contact. `delta` is assumed norm-capped upstream.
    pub fn step(&mut self, delta: Vec3, grip: GripCmd) -> StepEvents {
        let mut ev = StepEvents::default();

        match grip {
            GripCmd::Close if !self.gripper_closed => {
                self.gripper_closed = true;
                match self.find_grasp_candidate() {
                    Some(id) => {
                        self.held = Some(id);
                        self.hold_offset = self.objects[id].center - self.ee;
                        ev.grasped = Some(id);
                    }
                    None => ev.grasp_failed = true,
                }
            }
            GripCmd::Open if self.gripper_closed => {
                self.gripper_closed = false;
                if let Some(id) = self.held.take() {
                    self.settle(id);
                    ev.released = Some(id);
                }
            }
            _ => {}
        }

        let old_ee = self.ee;
        let mut ee_new = old_ee + delta;

        // Workspace box clamp.
        let w = self.workspace_half_xy;
        let clamped = Vec3::new(
            ee_new.x.clamp(-w, w),
            ee_new.y.clamp(-w, w),
            ee_new.z.clamp(self.table_z, self.workspace_z_max),
        );
        if clamped != ee_new {
            ev.ee_clamped = true;
            ee_new = clamped;
        }

        // Held object co-moves, limited by support surfaces and socket walls.
        if let Some(id) = self.held {
            let (constrained_ee, blocked) = self.constrain_held(id, ee_new);
            if blocked {
                ev.blocked = true;
            }
            ee_new = constrained_ee;
            self.objects[id].center = ee_new + self.hold_offset;
        }

        // Pushing: disc-versus-footprint penetration projection.
        let fric = self.push_friction;
        for i in 0..self.objects.len() {
            if self.held == Some(i) || !self.objects[i].pushable() {
                continue;
            }
            let obj = self.objects[i];
            // Contact acts only within the object's vertical span.
            if ee_new.z < obj.bottom_z() || ee_new.z > obj.top_z() {
                continue;
            }
            let (sd_after, normal) =
                footprint_signed_distance(ee_new.xy(), obj.center.xy(), obj.half_xy);
            let pen_after = self.ee_radius - sd_after;
            if pen_after < fric {
                continue;
            }
            let pen_before = if old_ee.z >= obj.bottom_z() && old_ee.z <= obj.top_z() {
                let (sd, _) =
                    footprint_signed_distance(old_ee.xy(), obj.center.xy(), obj.half_xy);
                self.ee_radius - sd
            } else {
                0.0
            };
            if pen_after <= pen_before {
                // Retreating or holding still: static friction keeps the
                // object in place.
                continue;
            }
            // Sticking contact: the object is dragged along the commanded
            // planar motion, sized so the penetration relaxes back to the
            // friction residual (first order in the contact normal), and
            // capped at the commanded step so interaction stays quasi-static.
            let planar = delta.xy();
            let speed = planar.norm();
            let mut c_new = obj.center.xy();
            if speed > 1e-12 {
                let dir = planar * (1.0 / speed);
                let align = -dir.dot(normal);
                if align > 1e-9 {
                    let disp = ((pen_after - fric) / align).min(speed);
                    if disp > 0.0 {
                        c_new = c_new + dir * disp;
                        ev.pushed = Some(i);
                    }
                }
            }
            // Objects jam against the workspace boundary.
            let limit = w - obj.half_xy;
            let c_clamped = Vec2::new(c_new.x.clamp(-limit, limit), c_new.y.clamp(-limit, limit));
            if c_clamped != c_new {
                ev.blocked = true;
                c_new = c_clamped;
            }
            self.objects[i].center = c_new.with_z(obj.center.z);
            // If the object could not yield fully, the end-effector jams too:
            // back it off along the contact normal to the friction residual.
            let (sd2, n2) = footprint_signed_distance(ee_new.xy(), c_new, obj.half_xy);
            let pen2 = self.ee_radius - sd2;
            if pen2 > fric + 1e-12 {
                let corrected = ee_new.xy() + n2 * (pen2 - fric);
                ee_new = corrected.with_z(ee_new.z);
                ev.blocked = true;
                if let Some(h) = self.held {
                    self.objects[h].center = ee_new + self.hold_offset;
                }
            }
        }

        self.ee = ee_new;
        self.tick += 1;
        ev
    }

    fn find_grasp_candidate(&self) -> Option<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.graspable())
            .filter(|(_, o)| o.center.distance_xy(self.ee) <= self.grasp_tol_xy)
            .filter(|(_, o)| {
                let grasp_z = o.top_z() + self.pick_clearance;
                (self.ee.z - grasp_z).abs() <= self.grasp_tol_z
            })
            .min_by(|a, b| {
                a.1.center
                    .distance_xy(self.ee)
                    .total_cmp(&b.1.center.distance_xy(self.ee))
            })
            .map(|(i, _)| i)
    }

    /// Lowest admissible bottom height for a held object at the given planar
    /// position, from supports it would land on.
    fn support_floor(&self, id: usize, at_xy: Vec2) -> f64 {
        let me = &self.objects[id];
        let mut floor = self.table_z;
        for (j, other) in self.objects.iter().enumerate() {
            if j == id {
                continue;
            }
            match other.kind {
                ObjKind::Cube | ObjKind::BaseCube => {
                    // Footprint overlap blocks descent below the other's top.
                    let dx = (at_xy.x - other.center.x).abs();
                    let dy = (at_xy.y - other.center.y).abs();
                    if dx < me.half_xy + other.half_xy && dy < me.half_xy + other.half_xy {
                        floor = floor.max(other.top_z());
                    }
                }
                ObjKind::Socket => {
                    let play = other.inner_half - me.half_xy;
                    let dx = (at_xy.x - other.center.x).abs();
                    let dy = (at_xy.y - other.center.y).abs();
                    let aligned = dx <= play + ALIGN_EPS && dy <= play + ALIGN_EPS;
                    let over_walls =
                        dx < other.half_xy + me.half_xy && dy < other.half_xy + me.half_xy;
                    if over_walls && !aligned {
                        floor = floor.max(other.top_z());
                    }
                }
                ObjKind::Peg => {}
            }
        }
        floor
    }

    /// Constrain a proposed end-effector pose so the held object respects
    /// supports and socket walls. Returns the adjusted pose and whether any
    /// constraint bound.
    fn constrain_held(&self, id: usize, proposed_ee: Vec3) -> (Vec3, bool) {
        let mut ee = proposed_ee;
        let mut blocked = false;
        let half_h = 0.5 * self.objects[id].height;
        let mut center = ee + self.hold_offset;

        // Lateral walls: a peg already below a socket's rim is confined to
        // the opening.
        if self.objects[id].kind == ObjKind::Peg {
            let prev_center = self.objects[id].center;
            for other in &self.objects {
                if other.kind != ObjKind::Socket {
                    continue;
                }
                let play = other.inner_half - self.objects[id].half_xy;
                let was_aligned = (prev_center.x - other.center.x).abs() <= play + ALIGN_EPS
                    && (prev_center.y - other.center.y).abs() <= play + ALIGN_EPS;
                let below_rim = center.z - half_h < other.top_z() - 1e-12;
                if below_rim && was_aligned {
                    let cx = center
                        .x
                        .clamp(other.center.x - play, other.center.x + play);
                    let cy = center
                        .y
                        .clamp(other.center.y - play, other.center.y + play);
                    if cx != center.x || cy != center.y {
                        blocked = true;
                        center = Vec3::new(cx, cy, center.z);
                    }
                }
            }
        }

        // Support floor at the (possibly wall-corrected) planar position.
        let floor = self.support_floor(id, center.xy());
        if center.z - half_h < floor {
            blocked = true;
            center = center.with_z(floor + half_h);
        }

        ee = center - self.hold_offset;
        (ee, blocked)
    }

    /// Drop an object at its current planar position onto whatever supports
    /// it there.
    fn settle(&mut self, id: usize) {
        let half_h = 0.5 * self.objects[id].height;
        let me = self.objects[id];
        let mut floor = self.table_z;
        for (j, other) in self.objects.iter().enumerate() {
            if j == id {
                continue;
            }
            match other.kind {
                ObjKind::Cube | ObjKind::BaseCube => {
                    // Stable support requires the centre over the footprint.
                    let dx = (me.center.x - other.center.x).abs();
                    let dy = (me.center.y - other.center.y).abs();
                    if dx <= other.half_xy && dy <= other.half_xy && other.top_z() <= me.center.z {
                        floor = floor.max(other.top_z());
                    }
                }
                ObjKind::Socket => {
                    let play = other.inner_half - me.half_xy;
                    let dx = (me.center.x - other.center.x).abs();
                    let dy = (me.center.y - other.center.y).abs();
                    let aligned = dx <= play + ALIGN_EPS && dy <= play + ALIGN_EPS;
                    let over_walls =
                        dx < other.half_xy + me.half_xy && dy < other.half_xy + me.half_xy;
                    if over_walls && !aligned && other.top_z() <= me.center.z + half_h {
                        floor = floor.max(other.top_z());
                    }
                }
                ObjKind::Peg => {}
            }
        }
        self.objects[id].center = me.center.with_z(floor + half_h);
    }

    /// Teleport an object's planar position by `r` at direction `theta`.
    /// A shift that would push the object past the table edge redraws the
    /// direction (bounded retries) and finally clamps. Height and everything
    /// else stay untouched.
    pub fn apply_shift(&mut self, id: usize, r: f64, theta: f64) {
        if r == 0.0 {
            return;
        }
        let limit = self.workspace_half_xy - self.objects[id].half_xy;
        let from = self.objects[id].center.xy();
        let mut dir = theta;
        for _ in 0..8 {
            let moved = from + Vec2::new(dir.cos(), dir.sin()) * r;
            if moved.x.abs() <= limit && moved.y.abs() <= limit {
                self.objects[id].center = moved.with_z(self.objects[id].center.z);
                return;
            }
            dir = self.rng.gen_range(0.0..std::f64::consts::TAU);
        }
        let moved = from + Vec2::new(dir.cos(), dir.sin()) * r;
        let clamped = Vec2::new(moved.x.clamp(-limit, limit), moved.y.clamp(-limit, limit));
        self.objects[id].center = clamped.with_z(self.objects[id].center.z);
    }

    /// Sample a surface point cloud of one object: top face plus the four
    /// side faces, chosen area-weighted, with isotropic Gaussian noise and
    /// per-point dropout. All randomness comes from the world's generator.
    pub fn scan(&mut self, camera: &CameraModel, id: usize) -> PointCloud {
        let obj = self.objects[id];
        let stamp = self.time();
        let noise = Normal::new(0.0, camera.noise_std).expect("noise std is finite");
        let w = obj.half_xy;
        let top_area = (2.0 * w) * (2.0 * w);
        let side_area = (2.0 * w) * obj.height;
        let total = top_area + 4.0 * side_area;
        let bottom = obj.bottom_z();
        let top = obj.top_z();
        let mut points = Vec::with_capacity(camera.points_per_scan);
        for _ in 0..camera.points_per_scan {
            if self.rng.gen::<f64>() < camera.dropout_prob {
                continue;
            }
            let pick: f64 = self.rng.gen_range(0.0..total);
            let u = self.rng.gen_range(-w..w);
            let p = if pick < top_area {
                let v = self.rng.gen_range(-w..w);
                Vec3::new(obj.center.x + u, obj.center.y + v, top)
            } else {
                let v = self.rng.gen_range(bottom..top);
                let side = ((pick - top_area) / side_area) as usize;
                match side {
                    0 => Vec3::new(obj.center.x + w, obj.center.y + u, v),
                    1 => Vec3::new(obj.center.x - w, obj.center.y + u, v),
                    2 => Vec3::new(obj.center.x + u, obj.center.y + w, v),
                    _ => Vec3::new(obj.center.x + u, obj.center.y - w, v),
                }
            };
            let jitter = Vec3::new(
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
            );
            points.push(p + jitter);
        }
        PointCloud { stamp, points }
    }

    /// Sample the socket's wall-top ring and the table returns visible
    /// through its opening. Returns (rim cloud, interior cloud) with the same
    /// noise model as `scan`.
    pub fn rim_scan(
        &mut self,
        camera: &CameraModel,
        id: usize,
        rim_points: usize,
        interior_points: usize,
    ) -> (PointCloud, PointCloud) {
        let obj = self.objects[id];
        debug_assert_eq!(obj.kind, ObjKind::Socket);
        let stamp = self.time();
        let noise = Normal::new(0.0, camera.noise_std).expect("noise std is finite");
        let outer = obj.half_xy;
        let inner = obj.inner_half;
        let rim_z = obj.top_z();
        // Ring decomposition: two full-width strips (±y) and two side strips.
        let strip_y_area = (2.0 * outer) * (outer - inner);
        let strip_x_area = (outer - inner) * (2.0 * inner);
        let ring_total = 2.0 * strip_y_area + 2.0 * strip_x_area;

        let mut rim = Vec::with_capacity(rim_points);
        for _ in 0..rim_points {
            if self.rng.gen::<f64>() < camera.dropout_prob {
                continue;
            }
            let pick: f64 = self.rng.gen_range(0.0..ring_total);
            let (px, py) = if pick < 2.0 * strip_y_area {
                let x = self.rng.gen_range(-outer..outer);
                let y = self.rng.gen_range(inner..outer);
                if pick < strip_y_area {
                    (x, y)
                } else {
                    (x, -y)
                }
            } else {
                let x = self.rng.gen_range(inner..outer);
                let y = self.rng.gen_range(-inner..inner);
                if pick < 2.0 * strip_y_area + strip_x_area {
                    (x, y)
                } else {
                    (-x, y)
                }
            };
            let jitter = Vec3::new(
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
            );
            rim.push(Vec3::new(obj.center.x + px, obj.center.y + py, rim_z) + jitter);
        }

        let mut interior = Vec::with_capacity(interior_points);
        for _ in 0..interior_points {
            if self.rng.gen::<f64>() < camera.dropout_prob {
                continue;
            }
            let x = self.rng.gen_range(-inner..inner);
            let y = self.rng.gen_range(-inner..inner);
            let jitter = Vec3::new(
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
                noise.sample(&mut self.rng),
            );
            interior.push(Vec3::new(obj.center.x + x, obj.center.y + y, self.table_z) + jitter);
        }

        (
            PointCloud { stamp, points: rim },
            PointCloud {
                stamp,
                points: interior,
            },
        )
    }

    /// Compact deterministic fingerprint of the dynamic state, for
    /// determinism checks.
    pub fn fingerprint(&self) -> String {
        use std::fmt::Write as _;
        let mut s = String::new();
        let _ = write!(
            s,
            "t={} ee=({:.12},{:.12},{:.12}) grip={} held={:?}",
            self.tick, self.ee.x, self.ee.y, self.ee.z, self.gripper_closed, self.held
        );
        for o in &self.objects {
            let _ = write!(
                s,
                " obj=({:.12},{:.12},{:.12})",
                o.center.x, o.center.y, o.center.z
            );
        }
        s
    }
}
