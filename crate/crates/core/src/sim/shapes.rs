//! Graspable objects and their signed-distance queries.

use super::SimError;
use crate::geometry::{Quaternion, Vec3};
use serde::{Deserialize, Serialize};

/// Cylinder diameters (m) of the pose-estimation object set.
pub const CYLINDER_DIAMETERS: [f64; 3] = [0.057, 0.065, 0.080];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Cylinder,
    Cuboid,
    Peg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PegProfile {
    Vertical,
    Slanted,
    Curved,
}

impl PegProfile {
    pub const ALL: [PegProfile; 3] = [PegProfile::Vertical, PegProfile::Slanted, PegProfile::Curved];

    pub fn name(self) -> &'static str {
        match self {
            PegProfile::Vertical => "vertical",
            PegProfile::Slanted => "slanted",
            PegProfile::Curved => "curved",
        }
    }
}

impl std::str::FromStr for PegProfile {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "vertical" => Ok(PegProfile::Vertical),
            "slanted" => Ok(PegProfile::Slanted),
            "curved" => Ok(PegProfile::Curved),
            other => Err(SimError::InvalidObject(format!("unknown peg profile {other:?}"))),
        }
    }
}

/// Dimensions by kind. Cylinders and pegs use `radius`/`height` (pegs: `length`
/// of the axis), cuboids use half extents.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Dimensions {
    Cylinder { radius: f64, height: f64 },
    Cuboid { half_extents: Vec3 },
    Peg { radius: f64, length: f64, hole_depth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub kind: ObjectKind,
    pub dimensions: Dimensions,
    pub peg_profile: Option<PegProfile>,
    /// Hole entrance position and yaw (pegs only).
    pub hole_position: Vec3,
    pub hole_yaw: f64,
    pub placement_yaw: f64,
}

impl ObjectSpec {
    pub fn cylinder(diameter: f64) -> Self {
        Self {
            kind: ObjectKind::Cylinder,
            dimensions: Dimensions::Cylinder { radius: diameter / 2.0, height: 0.12 },
            peg_profile: None,
            hole_position: Vec3::ZERO,
            hole_yaw: 0.0,
            placement_yaw: 0.0,
        }
    }

    pub fn cuboid(half_extents: Vec3) -> Self {
        Self {
            kind: ObjectKind::Cuboid,
            dimensions: Dimensions::Cuboid { half_extents },
            peg_profile: None,
            hole_position: Vec3::ZERO,
            hole_yaw: 0.0,
            placement_yaw: 0.0,
        }
    }

    pub fn peg(profile: PegProfile, hole_position: Vec3, placement_yaw: f64) -> Self {
        Self {
            kind: ObjectKind::Peg,
            dimensions: Dimensions::Peg { radius: 0.008, length: 0.10, hole_depth: 0.04 },
            peg_profile: Some(profile),
            hole_position,
            hole_yaw: placement_yaw,
            placement_yaw,
        }
    }

    /// Half of the object's width across the gripper's closing direction.
    pub fn half_width(&self) -> f64 {
        match self.dimensions {
            Dimensions::Cylinder { radius, .. } | Dimensions::Peg { radius, .. } => radius,
            Dimensions::Cuboid { half_extents } => half_extents.x,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidObject(m.to_string()));
        match (self.kind, self.dimensions, self.peg_profile) {
            (ObjectKind::Cylinder, Dimensions::Cylinder { radius, height }, None) => {
                if radius <= 0.0 || height <= 0.0 {
                    return bad("cylinder dimensions must be positive");
                }
            }
            (ObjectKind::Cuboid, Dimensions::Cuboid { half_extents: h }, None) => {
                if h.x <= 0.0 || h.y <= 0.0 || h.z <= 0.0 {
                    return bad("cuboid extents must be positive");
                }
            }
            (ObjectKind::Peg, Dimensions::Peg { radius, length, hole_depth }, Some(_)) => {
                if radius <= 0.0 || length <= hole_depth || hole_depth <= 0.0 {
                    return bad("peg must be longer than its hole is deep");
                }
            }
            (_, _, Some(_)) => return bad("peg profile is only defined for pegs"),
            _ => return bad("dimensions do not match object kind"),
        }
        Ok(())
    }

    /// Signed distance from `p` (object frame) to the solid; negative inside.
    /// Returns the outward surface normal closest to `p` alongside. Pegs are
    /// handled by [`PegChannel`], not here.
    pub fn signed_distance(&self, p: Vec3) -> Option<(f64, Vec3)> {
        match self.dimensions {
            Dimensions::Cylinder { radius, height } => {
                let radial = (p.x * p.x + p.y * p.y).sqrt();
                let side = radial - radius;
                let top = p.z - height;
                let bottom = -p.z;
                let radial_dir = if radial > 0.0 { Vec3::new(p.x / radial, p.y / radial, 0.0) } else { Vec3::X };
                let inside = side.max(top).max(bottom);
                if inside <= 0.0 {
                    let n = if side >= top && side >= bottom {
                        radial_dir
                    } else if top >= bottom {
                        Vec3::Z
                    } else {
                        -Vec3::Z
                    };
                    Some((inside, n))
                } else {
                    let ex = side.max(0.0);
                    let ez = top.max(bottom).max(0.0);
                    let d = (ex * ex + ez * ez).sqrt();
                    let zdir = if top > 0.0 { Vec3::Z } else { -Vec3::Z };
                    let n = (radial_dir.scale(ex) + zdir.scale(ez)).normalized().unwrap_or(Vec3::Z);
                    Some((d, n))
                }
            }
            Dimensions::Cuboid { half_extents: h } => {
                // box sits on the table: z in [0, 2 h.z]
                let c = Vec3::new(p.x, p.y, p.z - h.z);
                let q = [c.x.abs() - h.x, c.y.abs() - h.y, c.z.abs() - h.z];
                let sign = [c.x.signum(), c.y.signum(), c.z.signum()];
                let axis = |i: usize, s: f64| match i {
                    0 => Vec3::new(s, 0.0, 0.0),
                    1 => Vec3::new(0.0, s, 0.0),
                    _ => Vec3::new(0.0, 0.0, s),
                };
                let inside = q[0].max(q[1]).max(q[2]);
                if inside <= 0.0 {
                    let i = (0..3).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
                    Some((inside, axis(i, sign[i])))
                } else {
                    let e = Vec3::new(q[0].max(0.0), q[1].max(0.0), q[2].max(0.0));
                    let d = e.norm();
                    let n = Vec3::new(e.x * sign[0], e.y * sign[1], e.z * sign[2]).normalized().unwrap_or(Vec3::Z);
                    Some((d, n))
                }
            }
            Dimensions::Peg { .. } => None,
        }
    }
}

/// Hole channel and rigid peg axis for the extraction task, in the hole frame
/// (origin at the hole entrance on the table, z up, slant/curvature in the xz
/// plane).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PegChannel {
    pub profile: PegProfile,
    pub radius: f64,
    pub length: f64,
    pub hole_depth: f64,
    pub clearance: f64,
    pub slant: f64,
    pub arc_radius: f64,
}

impl PegChannel {
    /// Centerline point at signed arc length `s` below the entrance (`s < 0`
    /// continues the same curve above the table).
    pub fn centerline(&self, s: f64) -> Vec3 {
        match self.profile {
            PegProfile::Vertical => Vec3::new(0.0, 0.0, -s),
            PegProfile::Slanted => {
                let (sn, cs) = self.slant.sin_cos();
                Vec3::new(-s * sn, 0.0, -s * cs)
            }
            PegProfile::Curved => {
                let theta = s / self.arc_radius;
                Vec3::new(self.arc_radius * (1.0 - theta.cos()), 0.0, -self.arc_radius * theta.sin())
            }
        }
    }

    /// Unit tangent pointing out of the hole at arc length `s`.
    pub fn exit_tangent(&self, s: f64) -> Vec3 {
        match self.profile {
            PegProfile::Vertical => Vec3::Z,
            PegProfile::Slanted => {
                let (sn, cs) = self.slant.sin_cos();
                Vec3::new(sn, 0.0, cs)
            }
            PegProfile::Curved => {
                let theta = s / self.arc_radius;
                Vec3::new(-theta.sin(), 0.0, theta.cos())
            }
        }
    }

    /// Axis points of the seated peg from its bottom (s = depth) upward.
    pub fn seated_axis(&self, samples: usize) -> Vec<Vec3> {
        let n = samples.max(2);
        (0..n)
            .map(|i| {
                let s = self.hole_depth - self.length * i as f64 / (n - 1) as f64;
                self.centerline(s)
            })
            .collect()
    }

    /// Distance from `p` to the channel centerline and the unit direction from
    /// the centerline toward `p` (zero when on the line). `p` must be below the
    /// entrance.
    fn centerline_offset(&self, p: Vec3) -> (f64, Vec3) {
        let proj = match self.profile {
            PegProfile::Vertical => Vec3::new(0.0, 0.0, p.z),
            PegProfile::Slanted => {
                let a = self.exit_tangent(0.0);
                let t = p.dot(a).clamp(-self.hole_depth * 1.5, 0.0);
                a.scale(t)
            }
            PegProfile::Curved => {
                let center = Vec3::new(self.arc_radius, 0.0, 0.0);
                let rel = Vec3::new(p.x - center.x, 0.0, p.z);
                match rel.normalized() {
                    Some(dir) => {
                        let mut theta = (-dir.z).atan2(-dir.x);
                        theta = theta.clamp(0.0, 1.5 * self.hole_depth / self.arc_radius);
                        self.centerline(theta * self.arc_radius)
                    }
                    None => Vec3::ZERO,
                }
            }
        };
        let off = Vec3::new(p.x - proj.x, p.y - proj.y, p.z - proj.z);
        let d = off.norm();
        (d, off.normalized().unwrap_or(Vec3::ZERO))
    }

    /// Deepest intrusion of the peg body into the hole walls or floor (m) and
    /// the wall reaction direction on the peg (hole frame). Points above the
    /// entrance are free.
    pub fn wall_penetration(&self, axis_points: &[Vec3]) -> (f64, Vec3) {
        let play = self.clearance;
        let mut worst = 0.0;
        let mut dir = Vec3::ZERO;
        let floor = self.centerline(self.hole_depth).z;
        for &p in axis_points {
            if p.z >= 0.0 {
                continue;
            }
            let (d, off) = self.centerline_offset(p);
            let excess = d - play;
            if excess > worst {
                worst = excess;
                dir = -off;
            }
            let below = floor - p.z;
            if below > worst {
                worst = below;
                dir = Vec3::Z;
            }
        }
        (worst, dir)
    }
}

/// World pose of the object (position of its base center and yaw).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ObjectPose {
    pub position: Vec3,
    pub yaw: f64,
}

impl ObjectPose {
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        Quaternion::rot_z(-self.yaw).rotate(p - self.position)
    }

    pub fn to_world_dir(&self, v: Vec3) -> Vec3 {
        Quaternion::rot_z(self.yaw).rotate(v)
    }
}
