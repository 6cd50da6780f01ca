use super::shapes::{Dimensions, ObjectKind};
use super::world::WorldState;
use super::WorldConfig;
use crate::geometry::{Quaternion, Vec3};
use serde::{Deserialize, Serialize};

/// One compliant module: barometer count and MARG orientation w.r.t. the base.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TactileModuleState {
    pub baro: f64,
    pub orientation: Quaternion,
    /// Outward object surface normal at the deepest contact (world), zero when free.
    pub contact_normal: Vec3,
}

/// Geometric contact detail behind a [`TactileModuleState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactReading {
    pub depth: f64,
    pub pad_center: Vec3,
    /// Reaction force on the pad (N, world).
    pub force: Vec3,
    pub module: TactileModuleState,
}

/// Index 0 is the module on the +y side of the tool frame, index 1 the -y side.
pub fn compute_contact(world: &WorldState, config: &WorldConfig) -> [TactileModuleState; 2] {
    let r = contact_readings(world, config);
    [r[0].module, r[1].module]
}

pub(crate) fn contact_readings(world: &WorldState, config: &WorldConfig) -> [ContactReading; 2] {
    let ee = world.manipulator.ee_pose;
    let c = &config.contact;
    let half_open = world.manipulator.gripper_opening / 2.0;
    let lateral = ee.y_axis();
    let approach = ee.x_axis();
    let up = ee.z_axis();

    let peg_wall = match world.object.kind {
        ObjectKind::Peg => world.peg_wall_penetration(config),
        _ => None,
    };

    let mut out = [ContactReading {
        depth: 0.0,
        pad_center: ee.position,
        force: Vec3::ZERO,
        module: TactileModuleState { baro: c.baseline, orientation: ee.orientation, contact_normal: Vec3::ZERO },
    }; 2];

    for (i, side) in [1.0, -1.0].into_iter().enumerate() {
        let center = ee.position + lateral.scale(side * half_open);
        let inward = lateral.scale(-side);
        let (mut depth, normal) = match world.object.kind {
            ObjectKind::Peg => peg_grip_depth(world, half_open),
            _ => pad_penetration(world, config, center, approach, up),
        };

        let mut tilt = Quaternion::IDENTITY;
        if depth > 0.0 {
            // off-normal incidence tilts the module about the contact tangent
            let facing = -inward;
            let incidence = normal.dot(facing).clamp(-1.0, 1.0).acos();
            if let Some(axis) = inward.cross(normal).normalized() {
                let sat = (depth / c.tilt_ref_depth).min(1.0);
                tilt = Quaternion::from_axis_angle(axis, c.tilt_gain * incidence * sat);
            }
            if world.object_twist != 0.0 {
                let radius = match world.object.dimensions {
                    Dimensions::Cylinder { radius, .. } => radius,
                    _ => 0.03,
                };
                let tw = world.object_twist;
                depth += c.twist_compression * (radius / 0.03) * tw * tw;
                let pad_twist = c.twist_max * (tw / c.twist_scale).tanh();
                tilt = Quaternion::from_axis_angle(lateral, pad_twist) * tilt;
            }
        }
        let mut contact_normal = if depth > 0.0 { normal } else { Vec3::ZERO };
        if let Some((intrusion, reaction)) = peg_wall {
            if intrusion > 0.0 {
                depth += c.wall_coupling * intrusion;
                contact_normal = reaction;
                if let Some(axis) = reaction.cross(inward).normalized() {
                    let sat = (intrusion / c.tilt_ref_depth).min(1.0);
                    tilt = Quaternion::from_axis_angle(axis, c.tilt_gain * 0.5 * sat) * tilt;
                }
            }
        }

        out[i] = ContactReading {
            depth,
            pad_center: center,
            force: lateral.scale(side * c.stiffness * depth.max(0.0)),
            module: TactileModuleState {
                baro: c.depth_to_count(depth),
                orientation: tilt * ee.orientation,
                contact_normal,
            },
        };
    }
    out
}

/// Deepest probe penetration of the pad face into a non-peg object and the
/// outward surface normal there (world frame).
fn pad_penetration(world: &WorldState, config: &WorldConfig, center: Vec3, u_axis: Vec3, v_axis: Vec3) -> (f64, Vec3) {
    let c = &config.contact;
    let n = c.probes_per_axis;
    let pose = world.object_pose;
    let mut best = (0.0, Vec3::ZERO);
    for a in 0..n {
        let u = c.pad_half_width * (2.0 * a as f64 / (n - 1) as f64 - 1.0);
        for b in 0..n {
            let v = c.pad_half_height * (2.0 * b as f64 / (n - 1) as f64 - 1.0);
            let probe = center + u_axis.scale(u) + v_axis.scale(v);
            if let Some((sd, normal)) = world.object.signed_distance(pose.to_local(probe)) {
                if -sd > best.0 {
                    best = (-sd, pose.to_world_dir(normal));
                }
            }
        }
    }
    best
}

/// Grip penetration on a held peg: both pads close to the same opening on a
/// peg centred between them.
fn peg_grip_depth(world: &WorldState, half_open: f64) -> (f64, Vec3) {
    match (world.object.dimensions, world.peg_grasped) {
        (Dimensions::Peg { radius, .. }, true) => {
            let d = radius - half_open;
            (d.max(0.0), Vec3::ZERO)
        }
        _ => (0.0, Vec3::ZERO),
    }
}
