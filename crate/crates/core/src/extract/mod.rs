//! Peg extraction with discrete end-effector motions.
//!
//! The peg starts seated in its hole with the gripper closed around its
//! middle. Each action moves the tool by a fixed increment in its own frame.
//! Motions that would push the peg more than the jam depth into the wall are
//! rejected, but the modules still register the push.

pub mod teleop;

pub use teleop::{
    collect_demos, read_session, replay_session, scripted_action, write_session, DemoSession, ScriptedOperator,
    SessionHeader, TeleopSession,
};

use crate::geometry::{quat_delta, Quaternion, Vec3};
use crate::rl::{Action, ActionSpace, Environment, RlError, Step};
use crate::sim::{ObjectPose, ObjectSpec, PegProfile, Pose, SimError, TactileModuleState, World, WorldConfig};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const OBSERVATION_SIZE: usize = 17;
pub const N_ACTIONS: usize = 8;
/// Observation indices of the two scaled pressures.
pub const PRESSURE_INDICES: [usize; 2] = [7, 8];
pub const PLACEMENT_YAWS_DEG: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

pub const REWARD_GOAL: f64 = 1.0;
pub const REWARD_FRICTION: f64 = -0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractAction {
    PlusX,
    MinusX,
    PlusZ,
    MinusZ,
    PlusRotY,
    MinusRotY,
    PlusRotZ,
    MinusRotZ,
}

impl ExtractAction {
    pub const ALL: [ExtractAction; N_ACTIONS] = [
        ExtractAction::PlusX,
        ExtractAction::MinusX,
        ExtractAction::PlusZ,
        ExtractAction::MinusZ,
        ExtractAction::PlusRotY,
        ExtractAction::MinusRotY,
        ExtractAction::PlusRotZ,
        ExtractAction::MinusRotZ,
    ];

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&a| a == self).unwrap_or(0)
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Key token used by the teleoperation protocol.
    pub fn token(self) -> &'static str {
        match self {
            ExtractAction::PlusX => "+x",
            ExtractAction::MinusX => "-x",
            ExtractAction::PlusZ => "+z",
            ExtractAction::MinusZ => "-z",
            ExtractAction::PlusRotY => "+ry",
            ExtractAction::MinusRotY => "-ry",
            ExtractAction::PlusRotZ => "+rz",
            ExtractAction::MinusRotZ => "-rz",
        }
    }
}

impl fmt::Display for ExtractAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ExtractAction {
    type Err = RlError;
    fn from_str(s: &str) -> Result<Self, RlError> {
        Self::ALL.into_iter().find(|a| a.token() == s).ok_or(RlError::ActionMismatch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub hole_position: [f64; 3],
    /// Translation per primitive (m).
    pub translation_step: f64,
    /// Rotation per primitive (deg).
    pub rotation_step_deg: f64,
    /// Scaled pressure above which a step counts as friction.
    pub friction_threshold: f64,
    /// Rise above the hole depth needed to finish (m).
    pub goal_clearance: f64,
    /// Shaping gain and bound of the height term.
    pub height_gain: f64,
    pub height_clip: f64,
    pub max_steps: usize,
    /// Tool offset bounds relative to the hole: horizontal radius, and
    /// vertical range around the start height (m).
    pub workspace_radius: f64,
    pub workspace_below: f64,
    pub workspace_above: f64,
    /// Maximum tilt of the tool z axis from vertical (deg).
    pub max_tilt_deg: f64,
    pub world: WorldConfig,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            hole_position: [0.0, 0.22, 0.0],
            translation_step: 0.005,
            rotation_step_deg: 5.0,
            friction_threshold: 0.5,
            goal_clearance: 0.02,
            height_gain: 10.0,
            height_clip: 0.1,
            max_steps: 64,
            workspace_radius: 0.08,
            workspace_below: 0.05,
            workspace_above: 0.15,
            max_tilt_deg: 45.0,
            world: WorldConfig::default(),
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.world.validate()?;
        if self.translation_step <= 0.0 || self.rotation_step_deg <= 0.0 || self.max_steps == 0 {
            return Err(SimError::InvalidParameter("increments and max_steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.friction_threshold) {
            return Err(SimError::InvalidParameter("friction threshold is a scaled pressure in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Pressure count scaled to [0, 1] over the 0-400 range.
pub fn scale_pressure(count: f64, max_count: f64) -> f64 {
    (count / max_count).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractObservation {
    /// Tool position in the hole frame (m).
    pub position: [f64; 3],
    /// Tool orientation relative to the hole frame (w, x, y, z).
    pub orientation: [f64; 4],
    pub pressures: [f64; 2],
    /// Per-module orientation change since the previous observation.
    pub deltas: [[f64; 4]; 2],
}

impl ExtractObservation {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBSERVATION_SIZE);
        v.extend_from_slice(&self.position);
        v.extend_from_slice(&self.orientation);
        v.extend_from_slice(&self.pressures);
        v.extend_from_slice(&self.deltas[0]);
        v.extend_from_slice(&self.deltas[1]);
        v
    }
}

/// Reward for one step: goal first, then friction, then height shaping.
/// `limited` marks a step clipped by the workspace, which earns no bonus.
pub fn compute_reward(rise: f64, goal_rise: f64, max_pressure: f64, dh: f64, limited: bool, cfg: &ExtractConfig) -> f64 {
    if rise >= goal_rise {
        REWARD_GOAL
    } else if max_pressure > cfg.friction_threshold {
        REWARD_FRICTION
    } else {
        let f = (cfg.height_gain * dh).clamp(-cfg.height_clip, cfg.height_clip);
        if limited {
            f.min(0.0)
        } else {
            f
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub action: ExtractAction,
    pub jammed: bool,
    pub workspace_limited: bool,
    pub max_pressure: f64,
    pub rise: f64,
}

#[derive(Debug, Clone)]
pub struct ExtractEnv {
    config: ExtractConfig,
    peg: PegProfile,
    yaw_deg: f64,
    seed: u64,
    episode: u64,
    world: World,
    start_z: f64,
    prev_modules: [Quaternion; 2],
    steps: usize,
    done: bool,
    last_info: Option<StepInfo>,
}

impl ExtractEnv {
    pub fn new(config: ExtractConfig, peg: PegProfile, yaw_deg: f64, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let world = Self::build_world(&config, peg, yaw_deg, seed)?;
        Ok(Self {
            start_z: world.state().manipulator.ee_pose.position.z,
            prev_modules: world.state().modules.map(|m| m.orientation),
            config,
            peg,
            yaw_deg,
            seed,
            episode: 0,
            world,
            steps: 0,
            done: true,
            last_info: None,
        })
    }

    fn build_world(config: &ExtractConfig, peg: PegProfile, yaw_deg: f64, seed: u64) -> Result<World, SimError> {
        let [x, y, z] = config.hole_position;
        let object = ObjectSpec::peg(peg, Vec3::new(x, y, z), yaw_deg.to_radians());
        let mut world = World::new(config.world, object, ObjectPose::default(), seed)?;
        world.seat_and_grasp_peg()?;
        Ok(world)
    }

    pub fn config(&self) -> &ExtractConfig {
        &self.config
    }

    pub fn peg(&self) -> PegProfile {
        self.peg
    }

    pub fn yaw_deg(&self) -> f64 {
        self.yaw_deg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    /// Index of the next episode `reset_episode` starts.
    pub fn next_episode(&self) -> u64 {
        self.episode
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn last_info(&self) -> Option<StepInfo> {
        self.last_info
    }

    pub fn goal_rise(&self) -> f64 {
        let depth = self.world.state().peg_channel(self.world.config()).map_or(0.04, |c| c.hole_depth);
        depth + self.config.goal_clearance
    }

    pub fn rise(&self) -> f64 {
        self.world.state().manipulator.ee_pose.position.z - self.start_z
    }

    /// Reseats the peg. Episode `k` of an environment always starts from the
    /// same state for a given seed.
    pub fn reset_episode(&mut self) -> Result<ExtractObservation, SimError> {
        self.reset_to(self.episode)
    }

    /// Starts episode `k` (the next `reset_episode` continues from `k + 1`).
    pub fn reset_to(&mut self, k: u64) -> Result<ExtractObservation, SimError> {
        self.episode = k;
        let seed = crate::seed::derive_indexed(self.seed, "episode", self.episode);
        self.episode += 1;
        self.world = Self::build_world(&self.config, self.peg, self.yaw_deg, seed)?;
        self.start_z = self.world.state().manipulator.ee_pose.position.z;
        self.prev_modules = self.world.state().modules.map(|m| m.orientation);
        self.steps = 0;
        self.done = false;
        self.last_info = None;
        let modules = self.world.state().modules;
        Ok(self.observe(modules))
    }

    fn observe(&mut self, modules: [TactileModuleState; 2]) -> ExtractObservation {
        let hole = self.world.state().hole_pose();
        let ee = self.world.state().manipulator.ee_pose;
        let max = self.world.config().contact.max_count;
        let noisy = self.world.read_baros_of(&modules);
        let rel = hole.orientation.inverse() * ee.orientation;
        let deltas = [0, 1].map(|i| quat_delta(modules[i].orientation, self.prev_modules[i]).to_array());
        self.prev_modules = modules.map(|m| m.orientation);
        ExtractObservation {
            position: hole.inverse_transform(ee.position).to_array(),
            orientation: rel.to_array(),
            pressures: noisy.map(|b| scale_pressure(b, max)),
            deltas,
        }
    }

    fn candidate_pose(&self, action: ExtractAction) -> Pose {
        let ee = self.world.state().manipulator.ee_pose;
        let t = self.config.translation_step;
        let r = self.config.rotation_step_deg.to_radians();
        let local = |v: Vec3| Pose::new(ee.position + ee.orientation.rotate(v), ee.orientation);
        let rotate = |q: Quaternion| Pose::new(ee.position, ee.orientation * q);
        match action {
            ExtractAction::PlusX => local(Vec3::new(t, 0.0, 0.0)),
            ExtractAction::MinusX => local(Vec3::new(-t, 0.0, 0.0)),
            ExtractAction::PlusZ => local(Vec3::new(0.0, 0.0, t)),
            ExtractAction::MinusZ => local(Vec3::new(0.0, 0.0, -t)),
            ExtractAction::PlusRotY => rotate(Quaternion::rot_y(r)),
            ExtractAction::MinusRotY => rotate(Quaternion::rot_y(-r)),
            ExtractAction::PlusRotZ => rotate(Quaternion::rot_z(r)),
            ExtractAction::MinusRotZ => rotate(Quaternion::rot_z(-r)),
        }
    }

    fn within_workspace(&self, pose: &Pose) -> bool {
        let hole = self.world.state().hole_pose();
        let d = pose.position - hole.position;
        let horizontal = (d.x * d.x + d.y * d.y).sqrt();
        let dz = pose.position.z - self.start_z;
        let tilt = pose.z_axis().dot(Vec3::Z).clamp(-1.0, 1.0).acos();
        horizontal <= self.config.workspace_radius
            && dz >= -self.config.workspace_below
            && dz <= self.config.workspace_above
            && tilt <= self.config.max_tilt_deg.to_radians() + 1e-12
    }

    pub fn step_action(&mut self, action: ExtractAction) -> Result<(ExtractObservation, f64, bool), RlError> {
        if self.done {
            return Err(RlError::EpisodeDone);
        }
        let prev = self.world.state().manipulator.ee_pose;
        let z0 = prev.position.z;
        let candidate = self.candidate_pose(action);
        let limited = !self.within_workspace(&candidate);
        let mut jammed = false;
        let felt = if limited {
            self.world.state().modules
        } else {
            self.world.set_ee_pose(candidate);
            let felt = self.world.state().modules;
            let jam = self.world.config().peg.jam_depth;
            if self.world.state().peg_wall_penetration(self.world.config()).map_or(false, |(d, _)| d > jam) {
                jammed = true;
                self.world.set_ee_pose(prev);
            }
            felt
        };
        self.world.advance_time(0.1);
        self.steps += 1;
        let obs = self.observe(felt);
        let dh = self.world.state().manipulator.ee_pose.position.z - z0;
        let rise = self.rise();
        let max_pressure = obs.pressures[0].max(obs.pressures[1]);
        let reward = compute_reward(rise, self.goal_rise(), max_pressure, dh, limited, &self.config);
        let success = reward == REWARD_GOAL;
        self.done = success || self.steps >= self.config.max_steps;
        self.last_info = Some(StepInfo { action, jammed, workspace_limited: limited, max_pressure, rise });
        Ok((obs, reward, self.done))
    }

    pub fn succeeded(&self) -> bool {
        self.done && self.rise() >= self.goal_rise()
    }
}

impl Environment for ExtractEnv {
    fn observation_size(&self) -> usize {
        OBSERVATION_SIZE
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Discrete(N_ACTIONS)
    }

    fn reset(&mut self) -> Vec<f64> {
        match self.reset_episode() {
            Ok(o) => o.to_vec(),
            Err(e) => {
                log::error!("extract reset failed: {e}");
                vec![0.0; OBSERVATION_SIZE]
            }
        }
    }

    fn step(&mut self, action: &Action) -> Result<Step, RlError> {
        let a = match action {
            Action::Discrete(i) => ExtractAction::from_index(*i).ok_or(RlError::ActionMismatch)?,
            _ => return Err(RlError::ActionMismatch),
        };
        let (obs, reward, done) = self.step_action(a)?;
        Ok(Step { obs: obs.to_vec(), reward, done, success: reward == REWARD_GOAL })
    }

    fn episode_cap(&self) -> Option<usize> {
        Some(self.config.max_steps)
    }
}
