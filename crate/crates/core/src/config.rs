//! Runtime configuration: one flat key/value table covering the control loop,
//! world geometry, camera, margins, reliability thresholds, filter tuning and
//! benchmark protocol.
//!
//! Files use TOML restricted to top-level `key = value` pairs, so they read as
//! plain flat text. Unknown keys are rejected rather than ignored; a typo in
//! an override should fail loudly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("bad override '{0}': expected key=value")]
    BadOverride(String),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    // Control loop.
    /// Control period in seconds (100 Hz loop).
    pub tick_dt: f64,
    /// Per-tick cap on the commanded end-effector step, metres.
    pub delta_max: f64,
    /// Planar arrival tolerance for waypoint hand-off, metres.
    pub eps_xy: f64,
    /// Vertical arrival tolerance for waypoint hand-off, metres.
    pub eps_z: f64,

    // World geometry.
    /// Height of the table surface, metres.
    pub table_z: f64,
    /// Reachable half-extent of the table in x and y, metres.
    pub workspace_half_xy: f64,
    /// Ceiling of the reachable workspace, metres.
    pub workspace_z_max: f64,
    /// Cube edge length, metres.
    pub cube_edge: f64,
    /// Radius of the end-effector's planar contact disc, metres.
    pub ee_radius: f64,
    /// Planar capture radius for a successful grasp, metres.
    pub grasp_tol_xy: f64,
    /// Vertical window around the grasp height for a successful grasp, metres.
    pub grasp_tol_z: f64,
    /// Minimum penetration before a pushed object moves (static friction), metres.
    pub push_friction: f64,
    /// Residual clearance below which contact is reported, metres.
    pub contact_eps: f64,
    /// Peg half-width, metres.
    pub peg_half_width: f64,
    /// Peg height, metres.
    pub peg_height: f64,
    /// Gap between peg and socket walls per side, metres.
    pub socket_clearance: f64,
    /// Socket outer half-width (walls included), metres.
    pub socket_outer_half: f64,
    /// Socket wall height above the table, metres.
    pub socket_wall_height: f64,

    // Camera.
    /// Surface samples attempted per scan.
    pub points_per_scan: usize,
    /// Isotropic Gaussian noise std per sample, metres.
    pub camera_noise_std: f64,
    /// Probability that a sample is dropped.
    pub dropout_prob: f64,
    /// Raise the end-effector briefly before the post-lag scan.
    pub peek_lift: bool,
    /// Height of the optional peek lift, metres.
    pub peek_lift_height: f64,
    /// Wall-top samples attempted per socket scan.
    pub rim_points_per_scan: usize,
    /// Through-the-opening table samples attempted per socket scan.
    pub interior_points_per_scan: usize,

    // Perception.
    /// Minimum surviving points for a valid pose estimate.
    pub min_inliers: usize,
    /// Minimum wall-top returns before the rim estimate trusts the ring.
    pub rim_min_points: usize,

    // Push margins.
    /// Stand-off behind the object face at the staging waypoint, metres.
    pub delta_pre: f64,
    /// Stand-off behind the object face at the contact waypoint, metres.
    pub delta_contact: f64,
    /// Overshoot past the task goal at the push end, metres.
    pub delta_over: f64,
    /// Push-height offset relative to the object centre, metres.
    pub delta_z: f64,
    /// Clamp bounds for the inflated stand-off margins, metres.
    pub clamp_pre_lo: f64,
    pub clamp_pre_hi: f64,
    pub clamp_contact_lo: f64,
    pub clamp_contact_hi: f64,
    pub clamp_over_lo: f64,
    pub clamp_over_hi: f64,
    /// Margin inflation per unit of cloud spread.
    pub lambda: f64,

    // Goal synthesis.
    /// Vertical clearance added above the object top for the grasp pose, metres.
    pub pick_clearance: f64,
    /// Hover height above the grasp pose, metres.
    pub hover_offset: f64,
    /// Lift height above the grasp pose after closing, metres.
    pub lift_offset: f64,
    /// Hover height above the socket rim before insertion, metres.
    pub peg_hover: f64,
    /// Seating gap left under the peg at full insertion, metres.
    pub insert_seat_gap: f64,
    /// Planar tolerance for a successful stack placement, metres.
    pub stack_tol_xy: f64,
    /// Vertical tolerance for a successful stack placement, metres.
    pub stack_tol_z: f64,

    // Reliability.
    /// Enable the scene-jump sanity guard on fresh percepts.
    pub guard_enabled: bool,
    /// Maximum believable planar jump between consecutive percepts, metres.
    pub tau_xy: f64,
    /// Maximum believable vertical jump between consecutive percepts, metres.
    pub tau_z: f64,
    /// Consecutive contact-loss ticks tolerated during a push before replanning.
    pub n_lost: u32,
    /// Jam-detection window, seconds.
    pub stall_window_s: f64,
    /// Maximum end-effector motion over the window that still counts as stalled, metres.
    pub stall_ee_eps: f64,
    /// Minimum goal progress over the window to avoid a stall, metres.
    pub stall_progress_eps: f64,
    /// Shared re-sense/replan budget per trial (zero in no-retarget mode).
    pub replan_budget: u32,
    /// Vertical hop used when relocating laterally, metres.
    pub two_stage_dz: f64,
    /// Clearance above the object top maintained during lateral transits, metres.
    pub two_stage_clear: f64,

    // Particle filter.
    /// Particle count.
    pub pf_n: usize,
    /// Initial planar position std, metres.
    pub pf_sigma0_xy: f64,
    /// Initial heading std, radians.
    pub pf_sigma0_theta: f64,
    /// Process noise on planar acceleration, m/s².
    pub pf_sigma_v: f64,
    /// Process noise on angular acceleration, rad/s².
    pub pf_sigma_omega: f64,
    /// Floor on the measurement std fed to the update, metres.
    pub pf_sigma_floor: f64,
    /// Re-seed the belief when no particle sits within this many measurement
    /// stds of an accepted measurement.
    pub pf_reseed_gate: f64,
    /// Propagate the belief every control tick (otherwise only at retargets).
    pub pf_continuous: bool,
    /// Extra scan-and-update ticks the filter mode spends before committing
    /// its retargeted goals.
    pub pf_settle_ticks: u32,

    // Benchmark protocol.
    /// Planar distance to the staging waypoint that triggers the stressor, metres.
    pub trigger_radius_xy: f64,
    /// Wall-clock-free trial cutoff in simulated seconds.
    pub trial_timeout_s: f64,
    /// Final object-to-goal distance that counts as a successful push, metres.
    pub success_push_tol: f64,
    /// Minimum lift above rest height that counts as a successful pick, metres.
    pub success_pick_lift: f64,
    /// Tolerated seating excess above the full-insertion height, metres.
    pub success_peg_depth: f64,

    // Trial layout.
    pub ee_start_x: f64,
    pub ee_start_y: f64,
    pub ee_start_z: f64,
    /// Uniform per-trial jitter applied to object start positions, metres.
    pub start_jitter: f64,
    pub push_start_x: f64,
    pub push_start_y: f64,
    pub push_goal_x: f64,
    pub push_goal_y: f64,
    pub pick_start_x: f64,
    pub pick_start_y: f64,
    pub stack_base_x: f64,
    pub stack_base_y: f64,
    pub stack_cube_x: f64,
    pub stack_cube_y: f64,
    pub peg_socket_x: f64,
    pub peg_socket_y: f64,

    // Cloud registration.
    /// Iteration cap for the alignment loop.
    pub icp_max_iters: u32,
    /// Fraction of worst correspondences dropped each iteration.
    pub icp_trim_fraction: f64,
    /// Mean-residual improvement below which iteration stops, metres.
    pub icp_converge_eps: f64,
    /// Bucket edge for the nearest-neighbour grid, metres.
    pub icp_grid_cell: f64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            tick_dt: 0.01,
            delta_max: 0.003,
            eps_xy: 0.015,
            eps_z: 0.010,

            table_z: 0.0,
            workspace_half_xy: 0.5,
            workspace_z_max: 0.4,
            cube_edge: 0.04,
            ee_radius: 0.01,
            grasp_tol_xy: 0.015,
            grasp_tol_z: 0.015,
            push_friction: 0.0002,
            contact_eps: 0.0005,
            peg_half_width: 0.012,
            peg_height: 0.04,
            socket_clearance: 0.003,
            socket_outer_half: 0.025,
            socket_wall_height: 0.02,

            points_per_scan: 400,
            camera_noise_std: 0.001,
            dropout_prob: 0.02,
            peek_lift: false,
            peek_lift_height: 0.02,
            rim_points_per_scan: 280,
            interior_points_per_scan: 120,

            min_inliers: 30,
            rim_min_points: 12,

            delta_pre: 0.020,
            delta_contact: 0.004,
            delta_over: 0.010,
            delta_z: 0.0,
            clamp_pre_lo: 0.010,
            clamp_pre_hi: 0.040,
            clamp_contact_lo: 0.002,
            clamp_contact_hi: 0.012,
            clamp_over_lo: 0.005,
            clamp_over_hi: 0.030,
            lambda: 1.0,

            pick_clearance: 0.01,
            hover_offset: 0.06,
            lift_offset: 0.08,
            peg_hover: 0.03,
            insert_seat_gap: 0.004,
            stack_tol_xy: 0.015,
            stack_tol_z: 0.010,

            guard_enabled: true,
            tau_xy: 0.15,
            tau_z: 0.15,
            n_lost: 8,
            stall_window_s: 0.4,
            stall_ee_eps: 0.001,
            stall_progress_eps: 0.001,
            replan_budget: 1,
            two_stage_dz: 0.02,
            two_stage_clear: 0.01,

            pf_n: 128,
            pf_sigma0_xy: 0.010,
            pf_sigma0_theta: 0.2,
            pf_sigma_v: 0.05,
            pf_sigma_omega: 0.5,
            pf_sigma_floor: 0.002,
            pf_reseed_gate: 4.0,
            pf_continuous: true,
            pf_settle_ticks: 3,

            trigger_radius_xy: 0.06,
            trial_timeout_s: 30.0,
            success_push_tol: 0.02,
            success_pick_lift: 0.05,
            success_peg_depth: 0.002,

            ee_start_x: -0.25,
            ee_start_y: -0.20,
            ee_start_z: 0.15,
            start_jitter: 0.01,
            push_start_x: -0.10,
            push_start_y: 0.0,
            push_goal_x: 0.20,
            push_goal_y: 0.0,
            pick_start_x: 0.05,
            pick_start_y: 0.0,
            stack_base_x: 0.15,
            stack_base_y: -0.10,
            stack_cube_x: -0.10,
            stack_cube_y: 0.10,
            peg_socket_x: 0.10,
            peg_socket_y: 0.0,

            icp_max_iters: 30,
            icp_trim_fraction: 0.10,
            icp_converge_eps: 1e-6,
            icp_grid_cell: 0.01,
        }
    }
}

impl Config {
    pub fn from_path(path: &str) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Full key/value listing, suitable as a starting config file.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply a `key=value` override on top of the current values.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (key, value) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::BadOverride(spec.to_string()))?;
        let key = key.trim();
        let value = value.trim();
        let mut table: toml::Table = toml::from_str(&self.to_toml_string())
            .map_err(|e| ConfigError::Parse(e.to_string()))?;
        if !table.contains_key(key) {
            return Err(ConfigError::BadOverride(format!("unknown key '{key}'")));
        }
        // Parse the value as a bare TOML literal, quoting it if needed.
        let parsed: toml::Value = format!("v = {value}")
            .parse::<toml::Table>()
            .or_else(|_| format!("v = \"{value}\"").parse::<toml::Table>())
            .map_err(|e| ConfigError::Parse(e.to_string()))?
            .remove("v")
            .expect("just inserted");
        table.insert(key.to_string(), parsed);
        let merged: Config = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        merged.validate()?;
        *self = merged;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("tick_dt", self.tick_dt),
            ("delta_max", self.delta_max),
            ("eps_xy", self.eps_xy),
            ("eps_z", self.eps_z),
            ("cube_edge", self.cube_edge),
            ("ee_radius", self.ee_radius),
            ("peg_half_width", self.peg_half_width),
            ("peg_height", self.peg_height),
            ("trial_timeout_s", self.trial_timeout_s),
            ("pf_sigma_floor", self.pf_sigma_floor),
            ("stall_window_s", self.stall_window_s),
            ("icp_grid_cell", self.icp_grid_cell),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.pf_n == 0 {
            return Err(ConfigError::Invalid("pf_n must be ≥ 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_prob) {
            return Err(ConfigError::Invalid(format!(
                "dropout_prob must be in [0, 1), got {}",
                self.dropout_prob
            )));
        }
        if !(0.0..0.5).contains(&self.icp_trim_fraction) {
            return Err(ConfigError::Invalid(format!(
                "icp_trim_fraction must be in [0, 0.5), got {}",
                self.icp_trim_fraction
            )));
        }
        if self.clamp_pre_lo > self.clamp_pre_hi
            || self.clamp_contact_lo > self.clamp_contact_hi
            || self.clamp_over_lo > self.clamp_over_hi
        {
            return Err(ConfigError::Invalid("margin clamp bounds inverted".into()));
        }
        if self.socket_clearance <= 0.0 {
            return Err(ConfigError::Invalid("socket_clearance must be > 0".into()));
        }
        Ok(())
    }

    /// Socket inner half-width: peg half-width plus the per-side clearance.
    pub fn socket_inner_half(&self) -> f64 {
        self.peg_half_width + self.socket_clearance
    }

    /// Full-insertion height of the peg centre.
    pub fn insert_z(&self) -> f64 {
        self.table_z + 0.5 * self.peg_height + self.insert_seat_gap
    }

    /// Height of the socket wall top.
    pub fn rim_z(&self) -> f64 {
        self.table_z + self.socket_wall_height
    }

    pub fn timeout_ticks(&self) -> u64 {
        (self.trial_timeout_s / self.tick_dt).round() as u64
    }

    pub fn stall_window_ticks(&self) -> usize {
        (self.stall_window_s / self.tick_dt).round().max(1.0) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = Config::default();
        let text = cfg.to_toml_string();
        let back = Config::from_toml_str(&text).unwrap();
        assert_eq!(cfg, back);
        // Flat file: no TOML tables, one key per line.
        assert!(!text.contains('['));
    }

    #[test]
    fn file_values_override_defaults() {
        let cfg = Config::from_toml_str("delta_max = 0.0025\npf_n = 64\n").unwrap();
        assert_eq!(cfg.delta_max, 0.0025);
        assert_eq!(cfg.pf_n, 64);
        assert_eq!(cfg.cube_edge, Config::default().cube_edge);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml_str("delta_maxx = 0.0025\n").is_err());
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = Config::default();
        cfg.apply_override("lambda = 2.0").unwrap();
        assert_eq!(cfg.lambda, 2.0);
        cfg.apply_override("pf_continuous=false").unwrap();
        assert!(!cfg.pf_continuous);
        assert!(cfg.apply_override("nope = 1").is_err());
        assert!(cfg.apply_override("garbage").is_err());
        assert!(cfg.apply_override("tick_dt = -1.0").is_err());
    }

    #[test]
    fn derived_quantities_follow_definitions() {
        let cfg = Config::default();
        assert!((cfg.socket_inner_half() - 0.015).abs() < 1e-15);
        assert!((cfg.insert_z() - 0.024).abs() < 1e-15);
        assert!((cfg.rim_z() - 0.02).abs() < 1e-15);
        assert_eq!(cfg.timeout_ticks(), 3000);
        assert_eq!(cfg.stall_window_ticks(), 40);
    }
}
