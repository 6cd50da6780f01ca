//! Kinematic tactile-manipulation simulator.
//!
//! A 4-DoF arm carries a parallel gripper with two compliant tactile modules.
//! Contact is purely geometric: pad penetration into the object maps linearly
//! to barometer counts and off-normal incidence tilts the module frame. There
//! are no dynamics; a world evolves only through explicit motion commands.

mod contact;
mod kinematics;
mod profile;
mod shapes;
mod world;

pub use contact::{compute_contact, ContactReading, TactileModuleState};
pub use kinematics::{JointFrames, JointLimits, Kinematics, Pose};
pub use profile::{external_rotation_profile, sample_uncertain_position, RotationProfile};
pub use shapes::{Dimensions, ObjectKind, ObjectPose, ObjectSpec, PegChannel, PegProfile, CYLINDER_DIAMETERS};
pub use world::{ManipulatorState, SceneSnapshot, World, WorldState};

use crate::geometry::Vec3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("joint {joint} angle {angle:.4} rad outside limits")]
    JointLimit { joint: usize, angle: f64 },
    #[error("pose at {0:?} is outside the reachable workspace")]
    Unreachable(Vec3),
    #[error("invalid object: {0}")]
    InvalidObject(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Link lengths (m), OpenMANIPULATOR-X-like.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkLengths {
    pub base_height: f64,
    pub upper_arm: f64,
    pub forearm: f64,
    pub tool: f64,
}

impl Default for LinkLengths {
    fn default() -> Self {
        Self { base_height: 0.077, upper_arm: 0.130, forearm: 0.124, tool: 0.126 }
    }
}

/// Tactile pad geometry and contact-to-signal gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactConfig {
    /// Half extents of the pad face (m) along the tool x and z axes.
    pub pad_half_width: f64,
    pub pad_half_height: f64,
    /// Probe grid resolution per pad axis.
    pub probes_per_axis: usize,
    /// Barometer count with no contact.
    pub baseline: f64,
    /// Amplitude of the uniform noise on every barometer reading (counts).
    pub baseline_noise: f64,
    pub max_count: f64,
    /// Penetration (m) at which the barometer saturates.
    pub saturation_depth: f64,
    /// Module tilt per radian of off-normal incidence.
    pub tilt_gain: f64,
    /// Penetration (m) at which the incidence tilt reaches full gain.
    pub tilt_ref_depth: f64,
    /// Pad normal stiffness (N/m) used for reaction forces.
    pub stiffness: f64,
    /// Joint effort = effort_gain * reaction torque.
    pub effort_gain: f64,
    pub effort_noise: f64,
    /// Pad twist about the closing axis saturates at this angle (rad)...
    pub twist_max: f64,
    /// ...with this object-rotation scale (rad).
    pub twist_scale: f64,
    /// Extra normal compression (m per rad^2 of object rotation), scaled by
    /// object radius over 30 mm.
    pub twist_compression: f64,
    /// Transmission of hole-wall intrusion into pad compression.
    pub wall_coupling: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        Self {
            pad_half_width: 0.010,
            pad_half_height: 0.010,
            probes_per_axis: 5,
            baseline: 10.0,
            baseline_noise: 1.0,
            max_count: 400.0,
            saturation_depth: 0.003,
            tilt_gain: 0.5,
            tilt_ref_depth: 0.001,
            stiffness: 2000.0,
            effort_gain: 1.0,
            effort_noise: 0.002,
            twist_max: 0.35,
            twist_scale: 0.15,
            twist_compression: 0.0025,
            wall_coupling: 1.0,
        }
    }
}

impl ContactConfig {
    /// Counts per metre of penetration.
    pub fn pressure_gain(&self) -> f64 {
        (self.max_count - self.baseline) / self.saturation_depth
    }

    pub fn depth_to_count(&self, depth: f64) -> f64 {
        (self.baseline + self.pressure_gain() * depth.max(0.0)).clamp(0.0, self.max_count)
    }
}

/// Peg/hole geometry shared by the extraction objects.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PegConfig {
    pub clearance: f64,
    pub slant_deg: f64,
    pub arc_radius: f64,
    /// Wall intrusion (m) beyond which a motion is blocked.
    pub jam_depth: f64,
    pub axis_samples: usize,
}

impl Default for PegConfig {
    fn default() -> Self {
        Self { clearance: 0.002, slant_deg: 15.0, arc_radius: 0.20, jam_depth: 0.0015, axis_samples: 41 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub links: LinkLengths,
    pub limits: JointLimits,
    pub contact: ContactConfig,
    pub peg: PegConfig,
    /// Penetration each pad is commanded to when closing on a known-size object.
    pub grasp_depth: f64,
    /// Extra half opening (m) of the open gripper beyond the object half width.
    pub open_margin: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            links: LinkLengths::default(),
            limits: JointLimits::default(),
            contact: ContactConfig::default(),
            peg: PegConfig::default(),
            grasp_depth: 0.001,
            open_margin: 0.015,
        }
    }
}

impl WorldConfig {
    pub fn kinematics(&self) -> Kinematics {
        Kinematics::new(self.links, self.limits)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let c = &self.contact;
        let bad = |m: &str| Err(SimError::InvalidParameter(m.to_string()));
        if c.saturation_depth <= 0.0 || c.max_count <= c.baseline {
            return bad("barometer range must be positive");
        }
        if c.probes_per_axis < 2 {
            return bad("need at least 2 probes per pad axis");
        }
        if self.peg.clearance <= 0.0 || self.peg.jam_depth <= 0.0 {
            return bad("peg clearance and jam depth must be positive");
        }
        if self.grasp_depth < 0.0 {
            return bad("grasp depth must be non-negative");
        }
        Ok(())
    }
}
