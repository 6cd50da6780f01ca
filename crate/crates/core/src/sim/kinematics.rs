//! Forward and inverse kinematics of the 4-DoF arm.
//!
//! Joint 1 yaws the whole arm about the base z axis. Joints 2-4 are pitch
//! joints in the vertical arm plane, positive pitch pointing the next link
//! downward. With all joints at zero the arm is stretched horizontally along
//! +x at shoulder height. The tool frame is `Rz(q1) * Ry(q2 + q3 + q4)`: tool x
//! is the approach direction, tool y the gripper closing axis.

use super::{LinkLengths, SimError};
use crate::geometry::{Quaternion, Vec3};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Quaternion,
}

impl Pose {
    pub fn new(position: Vec3, orientation: Quaternion) -> Self {
        Self { position, orientation }
    }

    /// Maps a point from this frame into the parent frame.
    pub fn transform(&self, p: Vec3) -> Vec3 {
        self.orientation.rotate(p) + self.position
    }

    /// Maps a point from the parent frame into this frame.
    pub fn inverse_transform(&self, p: Vec3) -> Vec3 {
        self.orientation.conjugate().rotate(p - self.position)
    }

    pub fn x_axis(&self) -> Vec3 {
        self.orientation.rotate(Vec3::X)
    }

    pub fn y_axis(&self) -> Vec3 {
        self.orientation.rotate(Vec3::Y)
    }

    pub fn z_axis(&self) -> Vec3 {
        self.orientation.rotate(Vec3::Z)
    }
}

/// Inclusive joint limits (rad).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            lower: [-std::f64::consts::PI, -1.6, -1.6, -2.0],
            upper: [std::f64::consts::PI, 1.6, 2.6, 2.6],
        }
    }
}

impl JointLimits {
    pub fn check(&self, q: &[f64; 4]) -> Result<(), SimError> {
        for (joint, &angle) in q.iter().enumerate() {
            if !(self.lower[joint]..=self.upper[joint]).contains(&angle) {
                return Err(SimError::JointLimit { joint, angle });
            }
        }
        Ok(())
    }
}

/// Axis and origin of each joint in the base frame.
#[derive(Debug, Clone, Copy)]
pub struct JointFrames {
    pub origins: [Vec3; 4],
    pub axes: [Vec3; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub links: LinkLengths,
    pub limits: JointLimits,
}

impl Kinematics {
    pub fn new(links: LinkLengths, limits: JointLimits) -> Self {
        Self { links, limits }
    }

    pub fn forward(&self, q: &[f64; 4]) -> Result<Pose, SimError> {
        self.limits.check(q)?;
        Ok(self.forward_unchecked(q))
    }

    pub fn forward_unchecked(&self, q: &[f64; 4]) -> Pose {
        let l = &self.links;
        let p2 = q[1];
        let p3 = p2 + q[2];
        let p4 = p3 + q[3];
        let reach = l.upper_arm * p2.cos() + l.forearm * p3.cos() + l.tool * p4.cos();
        let drop = l.upper_arm * p2.sin() + l.forearm * p3.sin() + l.tool * p4.sin();
        let (s1, c1) = q[0].sin_cos();
        Pose {
            position: Vec3::new(reach * c1, reach * s1, l.base_height - drop),
            orientation: Quaternion::rot_z(q[0]) * Quaternion::rot_y(p4),
        }
    }

    pub fn joint_frames(&self, q: &[f64; 4]) -> JointFrames {
        let l = &self.links;
        let (s1, c1) = q[0].sin_cos();
        let radial = Vec3::new(c1, s1, 0.0);
        let pitch_axis = Vec3::new(-s1, c1, 0.0);
        let shoulder = Vec3::new(0.0, 0.0, l.base_height);
        let p2 = q[1];
        let p3 = p2 + q[2];
        let elbow = shoulder + radial.scale(l.upper_arm * p2.cos()) - Vec3::Z.scale(l.upper_arm * p2.sin());
        let wrist = elbow + radial.scale(l.forearm * p3.cos()) - Vec3::Z.scale(l.forearm * p3.sin());
        JointFrames {
            origins: [Vec3::ZERO, shoulder, elbow, wrist],
            axes: [Vec3::Z, pitch_axis, pitch_axis, pitch_axis],
        }
    }

    /// Solves for joint angles reaching `pose`. The pose must be reachable by a
    /// 4-DoF arm: its tool y axis horizontal. `elbow_up` picks the branch.
    pub fn inverse(&self, pose: &Pose, elbow_up: bool) -> Result<[f64; 4], SimError> {
        let l = &self.links;
        let x_axis = pose.x_axis();
        let y_axis = pose.y_axis();
        let yaw = (-y_axis.x).atan2(y_axis.y);
        let (s1, c1) = yaw.sin_cos();
        let tool_pitch = (-x_axis.z).atan2(x_axis.x * c1 + x_axis.y * s1);

        let reach = pose.position.x * c1 + pose.position.y * s1;
        let wrist_r = reach - l.tool * tool_pitch.cos();
        let wrist_drop = l.base_height - pose.position.z - l.tool * tool_pitch.sin();
        let d2 = wrist_r * wrist_r + wrist_drop * wrist_drop;
        let cos_elbow =
            (d2 - l.upper_arm * l.upper_arm - l.forearm * l.forearm) / (2.0 * l.upper_arm * l.forearm);
        if !(-1.0 - 1e-12..=1.0 + 1e-12).contains(&cos_elbow) {
            return Err(SimError::Unreachable(pose.position));
        }
        let mut elbow = cos_elbow.clamp(-1.0, 1.0).acos();
        if elbow_up {
            elbow = -elbow;
        }
        let shoulder = wrist_drop.atan2(wrist_r)
            - (l.forearm * elbow.sin()).atan2(l.upper_arm + l.forearm * elbow.cos());
        let wrist = tool_pitch - shoulder - elbow;
        let q = [yaw, shoulder, elbow, crate::geometry::wrap_angle(wrist)];
        self.limits.check(&q)?;
        Ok(q)
    }

    /// Top-down tool orientation for a target position: the base yaw is fixed by
    /// the target direction, so the 4-DoF arm cannot choose it independently.
    pub fn top_down_pose(&self, position: Vec3) -> Pose {
        let yaw = position.y.atan2(position.x);
        Pose::new(position, Quaternion::rot_z(yaw) * Quaternion::rot_y(std::f64::consts::FRAC_PI_2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn kin() -> Kinematics {
        Kinematics::new(LinkLengths::default(), JointLimits::default())
    }

    #[test]
    fn home_pose() {
        let k = kin();
        let l = LinkLengths::default();
        let home = k.forward(&[0.0; 4]).unwrap();
        let reach = l.upper_arm + l.forearm + l.tool;
        assert!((home.position - Vec3::new(reach, 0.0, l.base_height)).norm() < 1e-12);
        assert!(home.orientation.distance(Quaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn base_yaw_rotates_home() {
        let k = kin();
        let home = k.forward(&[0.0; 4]).unwrap();
        let turned = k.forward(&[FRAC_PI_2, 0.0, 0.0, 0.0]).unwrap();
        let expected = Quaternion::rot_z(FRAC_PI_2).rotate(home.position);
        assert!((turned.position - expected).norm() < 1e-12);
        assert!(turned.orientation.distance(Quaternion::rot_z(FRAC_PI_2)) < 1e-12);
    }

    #[test]
    fn joint_limit_rejected() {
        let k = kin();
        assert!(matches!(k.forward(&[0.0, 3.0, 0.0, 0.0]), Err(SimError::JointLimit { joint: 1, .. })));
    }

    #[test]
    fn top_down_reachable() {
        let k = kin();
        let pose = k.top_down_pose(Vec3::new(0.01, 0.22, 0.05));
        let q = k.inverse(&pose, true).unwrap();
        let back = k.forward(&q).unwrap();
        assert!((back.position - pose.position).norm() < 1e-9);
        assert!(back.orientation.distance(pose.orientation) < 1e-9);
    }

    proptest! {
        #[test]
        fn fk_ik_round_trip(
            q0 in -3.0..3.0f64,
            q1 in -0.8..1.0f64,
            q2 in 0.1..1.6f64,
            q3 in -1.0..1.5f64,
        ) {
            let k = kin();
            let q = [q0, q1, q2, q3];
            let pose = k.forward(&q).unwrap();
            let solved = k.inverse(&pose, false);
            prop_assume!(solved.is_ok());
            let again = k.forward(&solved.unwrap()).unwrap();
            prop_assert!((again.position - pose.position).norm() < 1e-6);
        }
    }
}
