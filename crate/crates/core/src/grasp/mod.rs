//! Grasp-approach refinement under positional uncertainty.
//!
//! A cuboid sits at a known y but an uncertain x. Each step shifts the x
//! estimate by `orient * step * a`, descends, closes the gripper and reads the
//! tactile modules. Rewards follow the tactile outcome of that attempt.

use crate::geometry::{euler_lossy, Vec3};
use crate::rl::{Action, ActionSpace, Environment, RlError, Step};
use crate::sim::{sample_uncertain_position, ObjectPose, ObjectSpec, SimError, World, WorldConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub const REWARD_FAIL: f64 = -0.1;
pub const REWARD_SUCCESS: f64 = 0.5;
pub const OBSERVATION_SIZE: usize = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspConfig {
    pub object_half_extents: [f64; 3],
    /// True object position on the table (m).
    pub object_x: f64,
    pub object_y: f64,
    /// Tool height of the grasp (m).
    pub grasp_z: f64,
    /// Hover height above the grasp pose between attempts (m).
    pub hover_height: f64,
    /// Attempts are confined to `mu ± x_range` (m).
    pub x_range: f64,
    /// Mean and standard deviation of the x estimate drawn at reset (m).
    pub mu: f64,
    pub sigma: f64,
    /// Displacement per unit action (m).
    pub step: f64,
    /// Per-pad squeeze past the nominal object face when closing (m).
    pub close_depth: f64,
    pub baro_threshold: f64,
    /// Module tilt treated as a collision (deg).
    pub collision_deg: f64,
    pub lift_height: f64,
    pub max_steps: usize,
    pub world: WorldConfig,
}

impl Default for GraspConfig {
    fn default() -> Self {
        Self {
            object_half_extents: [0.02, 0.02, 0.03],
            object_x: 0.0,
            object_y: 0.22,
            grasp_z: 0.05,
            hover_height: 0.02,
            x_range: 0.04,
            mu: 0.0,
            sigma: 0.005,
            step: 0.005,
            close_depth: 0.0025,
            baro_threshold: 50.0,
            collision_deg: 5.0,
            lift_height: 0.02,
            max_steps: 50,
            world: WorldConfig::default(),
        }
    }
}

impl GraspConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.world.validate()?;
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if self.sigma < 0.0 || self.step <= 0.0 || self.max_steps == 0 {
            return bad("sigma must be non-negative, step and max_steps positive");
        }
        if self.close_depth <= 0.0 || self.close_depth >= self.object_half_extents[0] {
            return bad("close depth must be positive and below the object half width");
        }
        Ok(())
    }
}

/// Raw sensor readings after an attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspObservation {
    pub joint_efforts: [f64; 4],
    pub baros: [f64; 2],
    /// Module tilt relative to the tool frame (roll, pitch, yaw; rad).
    pub orientation: [f64; 3],
}

impl GraspObservation {
    /// Network input: efforts, baros scaled by the barometer range, angles.
    pub fn features(&self, max_count: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(OBSERVATION_SIZE);
        v.extend_from_slice(&self.joint_efforts);
        v.extend(self.baros.iter().map(|b| b / max_count));
        v.extend_from_slice(&self.orientation);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.features(1.0).iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspOutcome {
    Collision,
    NoContact,
    OneSided,
    LiftFailed,
    Success,
}

impl GraspOutcome {
    pub fn reward(self) -> f64 {
        match self {
            GraspOutcome::Success => REWARD_SUCCESS,
            _ => REWARD_FAIL,
        }
    }

    pub fn ends_episode(self) -> bool {
        matches!(self, GraspOutcome::Success | GraspOutcome::Collision)
    }
}

/// Classifies an attempt. Cases are checked in order: a module tilt above the
/// collision threshold, no contact, contact on one side only, both sides
/// without a stable lift, success.
pub fn compute_reward(baros: [f64; 2], orientation_change: f64, lift_ok: bool, cfg: &GraspConfig) -> (f64, GraspOutcome) {
    let over = [baros[0] > cfg.baro_threshold, baros[1] > cfg.baro_threshold];
    let outcome = if orientation_change > cfg.collision_deg.to_radians() {
        GraspOutcome::Collision
    } else if !over[0] && !over[1] {
        GraspOutcome::NoContact
    } else if over[0] ^ over[1] {
        GraspOutcome::OneSided
    } else if !lift_ok {
        GraspOutcome::LiftFailed
    } else {
        GraspOutcome::Success
    };
    (outcome.reward(), outcome)
}

/// Next attempt position: `p + orient * step * a`.
pub fn next_position(p: f64, orient: f64, step: f64, a: f64) -> f64 {
    p + orient * step * a
}

/// Sign relating a positive base-yaw action to x displacement at `(x, y)`:
/// the x component of `z × p_xy / |p_xy|`.
pub fn orient_component(x: f64, y: f64) -> f64 {
    let r = (x * x + y * y).sqrt();
    if r == 0.0 {
        return 1.0;
    }
    let d = Vec3::Z.cross(Vec3::new(x / r, y / r, 0.0));
    if d.x == 0.0 {
        1.0
    } else {
        d.x.signum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspEpisodeState {
    pub p: f64,
    pub steps: usize,
    pub done: bool,
    pub last_reward: f64,
    pub last_outcome: Option<GraspOutcome>,
}

#[derive(Debug, Clone)]
pub struct GraspEnv {
    config: GraspConfig,
    world: World,
    rng: ChaCha8Rng,
    state: GraspEpisodeState,
    orient: f64,
    warned: bool,
}

impl GraspEnv {
    pub fn new(config: GraspConfig, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        let [hx, hy, hz] = config.object_half_extents;
        let pose = ObjectPose { position: Vec3::new(config.object_x, config.object_y, 0.0), yaw: 0.0 };
        let world = World::new(config.world, ObjectSpec::cuboid(Vec3::new(hx, hy, hz)), pose, crate::seed::derive_seed(seed, &["world"]))?;
        let orient = orient_component(config.mu, config.object_y);
        Ok(Self {
            world,
            rng: ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, &["uncertainty"])),
            state: GraspEpisodeState { p: config.mu, steps: 0, done: true, last_reward: 0.0, last_outcome: None },
            orient,
            warned: false,
            config,
        })
    }

    pub fn config(&self) -> &GraspConfig {
        &self.config
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn state(&self) -> &GraspEpisodeState {
        &self.state
    }

    pub fn orient(&self) -> f64 {
        self.orient
    }

    fn open_half(&self) -> f64 {
        self.config.object_half_extents[0] + self.world.config().open_margin
    }

    fn hover(&mut self) -> Result<(), SimError> {
        self.world.set_gripper(2.0 * self.open_half());
        let c = &self.config;
        self.world.move_top_down(Vec3::new(self.state.p, c.object_y, c.grasp_z + c.hover_height))
    }

    fn observe(&mut self) -> GraspObservation {
        let baros = self.world.read_baros();
        let joint_efforts = self.world.read_efforts();
        let ee = self.world.state().manipulator.ee_pose.orientation;
        let tilt = ee.inverse() * self.world.state().modules[0].orientation;
        let e = euler_lossy(tilt);
        GraspObservation { joint_efforts, baros, orientation: [e.x, e.y, e.z] }
    }

    fn max_tilt(&self) -> f64 {
        let s = self.world.state();
        let ee = s.manipulator.ee_pose.orientation;
        s.modules.iter().map(|m| (ee.inverse() * m.orientation).angle()).fold(0.0, f64::max)
    }

    /// Samples a new x estimate and hovers above it with the gripper open.
    pub fn reset_episode(&mut self) -> Result<GraspObservation, SimError> {
        self.world.home()?;
        self.state = GraspEpisodeState {
            p: sample_uncertain_position(self.config.mu, self.config.sigma, &mut self.rng)?
                .clamp(self.config.mu - self.config.x_range, self.config.mu + self.config.x_range),
            steps: 0,
            done: false,
            last_reward: 0.0,
            last_outcome: None,
        };
        self.hover()?;
        Ok(self.observe())
    }

    /// One approach attempt. Actions outside [-1, 1] are clamped.
    pub fn attempt(&mut self, a: f64) -> Result<(GraspObservation, f64, bool), RlError> {
        if self.state.done {
            return Err(RlError::EpisodeDone);
        }
        if !a.is_finite() {
            return Err(RlError::ActionMismatch);
        }
        if !(-1.0..=1.0).contains(&a) && !self.warned {
            log::warn!("grasp action {a} outside [-1, 1]; clamping");
            self.warned = true;
        }
        let a = a.clamp(-1.0, 1.0);
        let sim = |e: SimError| RlError::Env(e.to_string());
        let (lo, hi) = (self.config.mu - self.config.x_range, self.config.mu + self.config.x_range);
        self.state.p = next_position(self.state.p, self.orient, self.config.step, a).clamp(lo, hi);
        self.hover().map_err(sim)?;

        let c = self.config.clone();
        let grasp = Vec3::new(self.state.p, c.object_y, c.grasp_z);
        self.world.move_top_down(grasp).map_err(sim)?;
        let descent_tilt = self.max_tilt();
        self.world.set_gripper(2.0 * (c.object_half_extents[0] - c.close_depth));
        let close_tilt = self.max_tilt();
        let obs = self.observe();

        let over = obs.baros.iter().all(|&b| b > c.baro_threshold);
        let lift_ok = over && self.lift_check(grasp).map_err(sim)?;
        let (reward, outcome) = compute_reward(obs.baros, descent_tilt.max(close_tilt), lift_ok, &c);
        self.world.advance_time(1.0);

        self.state.steps += 1;
        self.state.last_reward = reward;
        self.state.last_outcome = Some(outcome);
        self.state.done = outcome.ends_episode() || self.state.steps >= c.max_steps;
        self.hover().map_err(sim)?;
        Ok((obs, reward, self.state.done))
    }

    /// Raises the tool and the object together and checks both contacts hold.
    fn lift_check(&self, grasp: Vec3) -> Result<bool, SimError> {
        let h = Vec3::new(0.0, 0.0, self.config.lift_height);
        let s = self.world.state();
        let mut object = s.object_pose;
        object.position = object.position + h;
        let mut raised = World::new(*self.world.config(), s.object, object, 0)?;
        raised.set_gripper(s.manipulator.gripper_opening);
        let mut pose = s.manipulator.ee_pose;
        pose.position = grasp + h;
        raised.set_ee_pose(pose);
        Ok(raised.state().modules.iter().all(|m| m.baro > self.config.baro_threshold))
    }
}

impl Environment for GraspEnv {
    fn observation_size(&self) -> usize {
        OBSERVATION_SIZE
    }

    fn action_space(&self) -> ActionSpace {
        ActionSpace::Continuous { dim: 1, low: -1.0, high: 1.0 }
    }

    fn reset(&mut self) -> Vec<f64> {
        match self.reset_episode() {
            Ok(o) => o.features(self.world.config().contact.max_count),
            Err(e) => {
                log::error!("grasp reset failed: {e}");
                vec![0.0; OBSERVATION_SIZE]
            }
        }
    }

    fn step(&mut self, action: &Action) -> Result<Step, RlError> {
        let a = match action {
            Action::Continuous(v) if v.len() == 1 => v[0],
            _ => return Err(RlError::ActionMismatch),
        };
        let (obs, reward, done) = self.attempt(a)?;
        let success = self.state.last_outcome == Some(GraspOutcome::Success);
        Ok(Step { obs: obs.features(self.world.config().contact.max_count), reward, done, success })
    }

    fn episode_cap(&self) -> Option<usize> {
        Some(self.config.max_steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quiet(mu: f64, sigma: f64) -> GraspConfig {
        let mut c = GraspConfig { mu, sigma, ..Default::default() };
        c.world.contact.baseline_noise = 0.0;
        c.world.contact.effort_noise = 0.0;
        c
    }

    #[test]
    fn position_update_substitution() {
        assert!((next_position(0.100, 1.0, 0.005, 0.5) - 0.1025).abs() < 1e-15);
        assert_eq!(next_position(0.1, -1.0, 0.005, 0.0), 0.1);
        assert_eq!(orient_component(0.0, 0.22), -1.0);
        assert_eq!(orient_component(0.0, -0.22), 1.0);
    }

    #[test]
    fn zero_action_repeats_attempt() {
        let mut env = GraspEnv::new(quiet(0.007, 0.0), 1).unwrap();
        env.reset_episode().unwrap();
        let (a, _, _) = env.attempt(0.0).unwrap();
        assert_eq!(env.state().p, 0.007);
        let (b, _, _) = env.attempt(0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_uncertainty_succeeds_first_time() {
        let mut env = GraspEnv::new(quiet(0.0, 0.0), 3).unwrap();
        let o = env.reset_episode().unwrap();
        assert_eq!(o.baros, [10.0, 10.0]);
        let (_, r, done) = env.attempt(0.0).unwrap();
        assert_eq!((r, done, env.state().last_outcome), (REWARD_SUCCESS, true, Some(GraspOutcome::Success)));
        assert_eq!(env.attempt(0.0).unwrap_err(), RlError::EpisodeDone);
    }

    #[test]
    fn hovering_is_contact_free() {
        let mut env = GraspEnv::new(quiet(0.0, 0.005), 4).unwrap();
        for _ in 0..200 {
            let o = env.reset_episode().unwrap();
            for b in o.baros {
                assert!((b - 10.0).abs() < 1e-6, "{:?} at p = {}", o.baros, env.state().p);
            }
        }
    }

    #[test]
    fn uncertainty_spread() {
        let mut env = GraspEnv::new(GraspConfig::default(), 5).unwrap();
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|_| {
            env.reset_episode().unwrap();
            env.state().p
        }).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 4.0 * 0.005 / (n as f64).sqrt(), "mean {mean}");
        assert!((sd - 0.005).abs() < 0.00025, "sd {sd}");
        // the +-2 sigma band spans the 0.02 m variability
        let inside = xs.iter().filter(|x| x.abs() <= 0.01).count() as f64 / n as f64;
        assert!((inside - 0.9545).abs() < 0.01, "{inside}");
    }

    #[test]
    fn one_sided_contact_matches_overlap_oracle() {
        let cfg = quiet(0.005, 0.0);
        let mut env = GraspEnv::new(cfg.clone(), 6).unwrap();
        env.reset_episode().unwrap();
        let (obs, r, done) = env.attempt(0.0).unwrap();
        assert_eq!((r, done), (REWARD_FAIL, false));
        // the tool y axis points along -x here: module 0 sits on the -x side
        // and overlaps the box by p + d; module 1 by d - p < 0
        let (p, d) = (0.005, cfg.close_depth);
        let gain = cfg.world.contact.pressure_gain();
        let expect0 = (10.0 + gain * (p + d)).min(400.0);
        assert!((obs.baros[0] - expect0).abs() < 1.0, "{:?}", obs.baros);
        assert_eq!(obs.baros[1], 10.0);
        assert_eq!(env.state().last_outcome, Some(GraspOutcome::OneSided));
    }

    #[test]
    fn reward_cases() {
        let c = GraspConfig::default();
        assert_eq!(compute_reward([200.0, 200.0], 0.0, true, &c), (0.5, GraspOutcome::Success));
        assert_eq!(compute_reward([200.0, 15.0], 0.0, true, &c), (-0.1, GraspOutcome::OneSided));
        assert_eq!(compute_reward([15.0, 200.0], 0.0, true, &c), (-0.1, GraspOutcome::OneSided));
        assert_eq!(compute_reward([10.0, 10.0], 0.0, false, &c), (-0.1, GraspOutcome::NoContact));
        assert_eq!(compute_reward([200.0, 200.0], 6f64.to_radians(), true, &c), (-0.1, GraspOutcome::Collision));
        assert_eq!(compute_reward([200.0, 200.0], 0.0, false, &c), (-0.1, GraspOutcome::LiftFailed));
    }

    #[test]
    fn action_is_clamped() {
        let mut env = GraspEnv::new(quiet(0.0, 0.0), 7).unwrap();
        env.reset_episode().unwrap();
        env.attempt(3.0).unwrap();
        assert!((env.state().p - env.orient() * 0.005).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn rewards_and_lengths_stay_in_range(seed in 0u64..1000, actions in proptest::collection::vec(-1.5f64..1.5, 60)) {
            let mut env = GraspEnv::new(GraspConfig::default(), seed).unwrap();
            env.reset();
            let mut n = 0;
            for a in actions {
                let s = env.step(&Action::Continuous(vec![a])).unwrap();
                n += 1;
                prop_assert!(s.reward == REWARD_FAIL || s.reward == REWARD_SUCCESS);
                prop_assert!(s.obs.iter().all(|v| v.is_finite()));
                if s.done {
                    break;
                }
            }
            prop_assert!(n <= 50);
        }

        #[test]
        fn success_is_monotone_in_offset(x in -0.015f64..0.015, shrink in 0.0f64..1.0) {
            let succeeds = |p: f64| {
                let mut env = GraspEnv::new(quiet(p, 0.0), 0).unwrap();
                env.reset_episode().unwrap();
                env.attempt(0.0).unwrap();
                env.state().last_outcome == Some(GraspOutcome::Success)
            };
            if succeeds(x) {
                prop_assert!(succeeds(x * shrink));
            }
        }
    }
}
