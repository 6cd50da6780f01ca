use super::contact::{contact_readings, ContactReading, TactileModuleState};
use super::kinematics::{Kinematics, Pose};
use super::shapes::{Dimensions, ObjectPose, ObjectSpec, PegChannel, PegProfile};
use super::{SimError, WorldConfig};
use crate::geometry::{Quaternion, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManipulatorState {
    pub joint_angles: [f64; 4],
    /// Simulated joint efforts (N m), noise-free.
    pub joint_efforts: [f64; 4],
    pub ee_pose: Pose,
    /// Distance between the two pad faces (m).
    pub gripper_opening: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub manipulator: ManipulatorState,
    pub object: ObjectSpec,
    pub object_pose: ObjectPose,
    /// Rotation of a grasped object about the gripper closing axis (rad).
    pub object_twist: f64,
    /// Peg axis samples in the end-effector frame while a peg is held.
    pub peg_axis_ee: Vec<Vec3>,
    pub peg_grasped: bool,
    pub modules: [TactileModuleState; 2],
    pub time: f64,
    pub rng_seed: u64,
}

impl WorldState {
    pub fn peg_channel(&self, config: &WorldConfig) -> Option<PegChannel> {
        match (self.object.dimensions, self.object.peg_profile) {
            (Dimensions::Peg { radius, length, hole_depth }, Some(profile)) => Some(PegChannel {
                profile,
                radius,
                length,
                hole_depth,
                clearance: config.peg.clearance,
                slant: config.peg.slant_deg.to_radians(),
                arc_radius: config.peg.arc_radius,
            }),
            _ => None,
        }
    }

    /// Hole frame: entrance position, rotated by the hole yaw.
    pub fn hole_pose(&self) -> Pose {
        Pose::new(self.object.hole_position, Quaternion::rot_z(self.object.hole_yaw))
    }

    /// Peg axis samples in world coordinates (empty when no peg is held).
    pub fn peg_axis_world(&self) -> Vec<Vec3> {
        let ee = self.manipulator.ee_pose;
        self.peg_axis_ee.iter().map(|&p| ee.transform(p)).collect()
    }

    /// Wall intrusion of the held peg and reaction direction (world frame).
    pub fn peg_wall_penetration(&self, config: &WorldConfig) -> Option<(f64, Vec3)> {
        if !self.peg_grasped {
            return None;
        }
        let channel = self.peg_channel(config)?;
        let hole = self.hole_pose();
        let pts: Vec<Vec3> = self.peg_axis_world().into_iter().map(|p| hole.inverse_transform(p)).collect();
        let (depth, dir) = channel.wall_penetration(&pts);
        Some((depth, hole.orientation.rotate(dir)))
    }
}

/// Render-ready scene description. Self-contained: a client needs no other
/// state to draw it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSnapshot {
    pub time: f64,
    pub joint_angles: [f64; 4],
    /// Base, shoulder, elbow, wrist and tool tip positions.
    pub link_points: Vec<[f64; 3]>,
    pub ee_position: [f64; 3],
    pub ee_orientation: [f64; 4],
    pub gripper_opening: f64,
    pub object: ObjectSpec,
    pub object_pose: ObjectPose,
    pub peg_axis: Vec<[f64; 3]>,
    /// Barometer counts scaled to [0, 1].
    pub pressures: [f64; 2],
    pub module_orientations: [[f64; 4]; 2],
}

/// A simulated world: configuration, state and its seeded noise source.
#[derive(Debug, Clone)]
pub struct World {
    config: WorldConfig,
    kinematics: Kinematics,
    state: WorldState,
    rng: ChaCha8Rng,
}

impl World {
    pub fn new(config: WorldConfig, object: ObjectSpec, object_pose: ObjectPose, seed: u64) -> Result<Self, SimError> {
        config.validate()?;
        object.validate()?;
        let kinematics = config.kinematics();
        let q = [0.0; 4];
        let ee_pose = kinematics.forward(&q)?;
        let module = TactileModuleState {
            baro: config.contact.baseline,
            orientation: ee_pose.orientation,
            contact_normal: Vec3::ZERO,
        };
        let mut world = Self {
            config,
            kinematics,
            state: WorldState {
                manipulator: ManipulatorState {
                    joint_angles: q,
                    joint_efforts: [0.0; 4],
                    ee_pose,
                    gripper_opening: 0.1,
                },
                object,
                object_pose,
                object_twist: 0.0,
                peg_axis_ee: Vec::new(),
                peg_grasped: false,
                modules: [module; 2],
                time: 0.0,
                rng_seed: seed,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        world.refresh();
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn kinematics(&self) -> &Kinematics {
        &self.kinematics
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn advance_time(&mut self, dt: f64) {
        self.state.time += dt;
    }

    pub fn move_joints(&mut self, q: [f64; 4]) -> Result<(), SimError> {
        let pose = self.kinematics.forward(&q)?;
        self.state.manipulator.joint_angles = q;
        self.state.manipulator.ee_pose = pose;
        self.refresh();
        Ok(())
    }

    pub fn home(&mut self) -> Result<(), SimError> {
        self.move_joints([0.0; 4])
    }

    /// Moves the end effector to a top-down pose above/at `position`.
    pub fn move_top_down(&mut self, position: Vec3) -> Result<(), SimError> {
        let pose = self.kinematics.top_down_pose(position);
        let q = self.kinematics.inverse(&pose, true)?;
        self.move_joints(q)
    }

    /// Places the end effector at an arbitrary pose. Joint angles come from IK
    /// when the pose is reachable by the arm; otherwise the previous joint
    /// solution is kept and only the tool pose is updated (the extraction task
    /// is specified at the end-effector level).
    pub fn set_ee_pose(&mut self, pose: Pose) {
        if let Ok(q) = self.kinematics.inverse(&pose, true) {
            self.state.manipulator.joint_angles = q;
        }
        self.state.manipulator.ee_pose = pose;
        self.refresh();
    }

    pub fn set_gripper(&mut self, opening: f64) {
        self.state.manipulator.gripper_opening = opening.max(0.0);
        self.refresh();
    }

    pub fn set_object_twist(&mut self, twist: f64) {
        self.state.object_twist = twist;
        self.refresh();
    }

    /// Seats the peg in its hole and closes the gripper around its midpoint,
    /// with the tool z axis vertical and the approach (tool x) horizontal.
    /// Vertical pegs are grasped at yaw 0 whatever the placement yaw (the hole
    /// is symmetric); other pegs are approached within their slant plane.
    pub fn seat_and_grasp_peg(&mut self) -> Result<(), SimError> {
        let channel = self
            .state
            .peg_channel(&self.config)
            .ok_or_else(|| SimError::InvalidObject("world object is not a peg".into()))?;
        let hole = self.state.hole_pose();
        let mid_s = channel.hole_depth - channel.length / 2.0;
        let grip_point = channel.centerline(mid_s);
        let grasp_yaw = match channel.profile {
            PegProfile::Vertical => 0.0,
            _ => self.state.object.hole_yaw,
        };
        let hole_for_grasp = Pose::new(hole.position, Quaternion::rot_z(grasp_yaw));
        let ee_pose = Pose::new(hole.transform(grip_point), hole_for_grasp.orientation);

        let seated = channel.seated_axis(self.config.peg.axis_samples);
        let axis_world: Vec<Vec3> = seated.iter().map(|&p| hole.transform(p)).collect();
        self.state.peg_axis_ee = axis_world.iter().map(|&p| ee_pose.inverse_transform(p)).collect();
        self.state.peg_grasped = true;
        self.state.manipulator.gripper_opening = 2.0 * (channel.radius - self.config.grasp_depth);
        self.set_ee_pose(ee_pose);
        Ok(())
    }

    /// Recomputes contacts and noise-free efforts for the current state.
    pub fn refresh(&mut self) {
        let readings = contact_readings(&self.state, &self.config);
        self.state.modules = [readings[0].module, readings[1].module];
        self.state.manipulator.joint_efforts = self.efforts(&readings);
    }

    fn efforts(&self, readings: &[ContactReading; 2]) -> [f64; 4] {
        let frames = self.kinematics.joint_frames(&self.state.manipulator.joint_angles);
        let mut tau = [0.0; 4];
        for r in readings {
            if r.depth <= 0.0 {
                continue;
            }
            for j in 0..4 {
                let lever = r.pad_center - frames.origins[j];
                tau[j] += self.config.contact.effort_gain * frames.axes[j].dot(lever.cross(r.force));
            }
        }
        tau
    }

    /// Barometer readings with the seeded uniform baseline noise.
    pub fn read_baros(&mut self) -> [f64; 2] {
        let modules = self.state.modules;
        self.read_baros_of(&modules)
    }

    /// Noisy readings of the given module states (e.g. a pose that was
    /// probed and then rejected).
    pub fn read_baros_of(&mut self, modules: &[TactileModuleState; 2]) -> [f64; 2] {
        let c = self.config.contact;
        let mut out = [0.0; 2];
        for (o, m) in out.iter_mut().zip(modules) {
            let noise = if c.baseline_noise > 0.0 { self.rng.gen_range(-c.baseline_noise..=c.baseline_noise) } else { 0.0 };
            *o = (m.baro + noise).clamp(0.0, c.max_count);
        }
        out
    }

    pub fn read_efforts(&mut self) -> [f64; 4] {
        let sigma = self.config.contact.effort_noise;
        let mut e = self.state.manipulator.joint_efforts;
        if sigma > 0.0 {
            for v in &mut e {
                *v += self.rng.gen_range(-sigma..=sigma);
            }
        }
        e
    }

    pub fn snapshot(&self) -> SceneSnapshot {
        let m = &self.state.manipulator;
        let frames = self.kinematics.joint_frames(&m.joint_angles);
        let mut link_points: Vec<[f64; 3]> = frames.origins.iter().map(|p| p.to_array()).collect();
        link_points.push(m.ee_pose.position.to_array());
        let max = self.config.contact.max_count;
        SceneSnapshot {
            time: self.state.time,
            joint_angles: m.joint_angles,
            link_points,
            ee_position: m.ee_pose.position.to_array(),
            ee_orientation: m.ee_pose.orientation.to_array(),
            gripper_opening: m.gripper_opening,
            object: self.state.object,
            object_pose: self.state.object_pose,
            peg_axis: self.state.peg_axis_world().iter().map(|p| p.to_array()).collect(),
            pressures: [self.state.modules[0].baro / max, self.state.modules[1].baro / max],
            module_orientations: [self.state.modules[0].orientation.to_array(), self.state.modules[1].orientation.to_array()],
        }
    }
}
