//! Quaternion algebra, frame helpers and the Madgwick IMU orientation filter.
//!
//! Conventions: Hamilton product, right-handed frames, scalar-first storage.
//! Euler angles are roll/pitch/yaw in the aerospace Z-Y-X sequence, i.e. the
//! rotation `Rz(yaw) * Ry(pitch) * Rx(roll)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};
use std::ops::{Add, Mul, Neg, Sub};

/// Distance from +/- pi/2 pitch at which Euler extraction reports gimbal lock.
pub const GIMBAL_LOCK_EPS: f64 = 1e-6;

/// Default Madgwick gain.
pub const DEFAULT_BETA: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum GeometryError {
    /// Pitch is at +/- pi/2. The carried angles use the roll = 0 convention.
    #[error("gimbal lock at pitch {:.6} rad", .0.y)]
    GimbalLock(Vec3),
    #[error("filter time step must be positive, got {0}")]
    NonPositiveDt(f64),
}

/// Three-vector. Units depend on context (m, m/s^2, rad/s or normalized).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };
    pub const X: Vec3 = Vec3 { x: 1.0, y: 0.0, z: 0.0 };
    pub const Y: Vec3 = Vec3 { x: 0.0, y: 1.0, z: 0.0 };
    pub const Z: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 1.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn scale(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    /// Unit vector, or `None` for the zero vector.
    pub fn normalized(self) -> Option<Vec3> {
        let n = self.norm();
        (n > 0.0 && n.is_finite()).then(|| self.scale(1.0 / n))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Unit quaternion `w + xi + yj + zk`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Default for Quaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    /// Builds a quaternion from raw components without normalizing.
    pub const fn from_components(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation of `angle` radians about `axis`. A zero axis yields identity.
    pub fn from_axis_angle(axis: Vec3, angle: f64) -> Self {
        match axis.normalized() {
            Some(a) => {
                let (s, c) = (angle * 0.5).sin_cos();
                Quaternion { w: c, x: a.x * s, y: a.y * s, z: a.z * s }
            }
            None => Self::IDENTITY,
        }
    }

    pub fn rot_x(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::X, angle)
    }

    pub fn rot_y(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Y, angle)
    }

    pub fn rot_z(angle: f64) -> Self {
        Self::from_axis_angle(Vec3::Z, angle)
    }

    /// `Rz(yaw) * Ry(pitch) * Rx(roll)`.
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        quat_multiply(quat_multiply(Self::rot_z(yaw), Self::rot_y(pitch)), Self::rot_x(roll))
    }

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Unit-norm copy. A zero quaternion maps to identity.
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Self::IDENTITY;
        }
        Quaternion { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn conjugate(self) -> Self {
        Quaternion { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    /// Multiplicative inverse; equals the conjugate for unit quaternions.
    pub fn inverse(self) -> Self {
        let n2 = self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z;
        let c = self.conjugate();
        Quaternion { w: c.w / n2, x: c.x / n2, y: c.y / n2, z: c.z / n2 }
    }

    /// Raw Hamilton product (no renormalization).
    pub fn hamilton(self, b: Quaternion) -> Quaternion {
        let a = self;
        Quaternion {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            y: a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            z: a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        }
    }

    pub fn rotate(self, v: Vec3) -> Vec3 {
        let p = Quaternion { w: 0.0, x: v.x, y: v.y, z: v.z };
        let r = self.hamilton(p).hamilton(self.conjugate());
        Vec3::new(r.x, r.y, r.z)
    }

    /// Row-major rotation matrix.
    pub fn to_matrix(self) -> [[f64; 3]; 3] {
        let Quaternion { w, x, y, z } = self;
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// Rotation angle in [0, pi].
    pub fn angle(self) -> f64 {
        let q = self.normalized();
        2.0 * q.w.abs().min(1.0).acos()
    }

    /// Component-wise distance that treats `q` and `-q` as the same rotation.
    pub fn distance(self, o: Quaternion) -> f64 {
        let d = |s: f64| {
            ((self.w - s * o.w).powi(2)
                + (self.x - s * o.x).powi(2)
                + (self.y - s * o.y).powi(2)
                + (self.z - s * o.z).powi(2))
            .sqrt()
        };
        d(1.0).min(d(-1.0))
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.w.is_finite() && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        quat_multiply(self, rhs)
    }
}

/// Hamilton product, renormalized.
pub fn quat_multiply(a: Quaternion, b: Quaternion) -> Quaternion {
    a.hamilton(b).normalized()
}

/// Orientation change from `q_prev` to `q_t`: `q_t * q_prev^-1`.
pub fn quat_delta(q_t: Quaternion, q_prev: Quaternion) -> Quaternion {
    quat_multiply(q_t, q_prev.conjugate())
}

/// Roll, pitch, yaw (x, y, z of the returned vector) with yaw in (-pi, pi].
pub fn quat_to_euler(q: Quaternion) -> Result<Vec3, GeometryError> {
    let q = q.normalized();
    let sinp = (2.0 * (q.w * q.y - q.z * q.x)).clamp(-1.0, 1.0);
    let pitch = sinp.asin();
    if (pitch.abs() - FRAC_PI_2).abs() < GIMBAL_LOCK_EPS {
        // roll is folded into yaw
        let m = q.to_matrix();
        let yaw = wrap_angle((-m[0][1]).atan2(m[1][1]));
        return Err(GeometryError::GimbalLock(Vec3::new(0.0, pitch, yaw)));
    }
    let roll = (2.0 * (q.w * q.x + q.y * q.z)).atan2(1.0 - 2.0 * (q.x * q.x + q.y * q.y));
    let yaw = (2.0 * (q.w * q.z + q.x * q.y)).atan2(1.0 - 2.0 * (q.y * q.y + q.z * q.z));
    Ok(Vec3::new(roll, pitch, wrap_angle(yaw)))
}

/// Euler angles, falling back to the gimbal-lock convention instead of failing.
pub fn euler_lossy(q: Quaternion) -> Vec3 {
    match quat_to_euler(q) {
        Ok(v) | Err(GeometryError::GimbalLock(v)) => v,
        Err(_) => Vec3::ZERO,
    }
}

/// Maps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Madgwick filter state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterState {
    pub q: Quaternion,
    pub beta: f64,
    /// Timestamp of the last update (s).
    pub last_update: f64,
}

impl Default for FilterState {
    fn default() -> Self {
        Self::new(DEFAULT_BETA)
    }
}

impl FilterState {
    pub fn new(beta: f64) -> Self {
        Self { q: Quaternion::IDENTITY, beta: beta.max(0.0), last_update: 0.0 }
    }

    pub fn with_orientation(mut self, q: Quaternion) -> Self {
        self.q = q.normalized();
        self
    }

    /// Convenience wrapper around [`madgwick_update`].
    pub fn update(self, gyro: Vec3, accel: Vec3, dt: f64) -> Result<FilterState, GeometryError> {
        madgwick_update(self, gyro, accel, dt)
    }
}

/// One Madgwick IMU step: gyro quaternion derivative minus the beta-scaled,
/// normalized gradient of the gravity alignment objective, integrated over `dt`.
///
/// A zero accelerometer reading skips the correction and integrates the gyro only.
pub fn madgwick_update(
    state: FilterState,
    gyro: Vec3,
    accel: Vec3,
    dt: f64,
) -> Result<FilterState, GeometryError> {
    if !(dt > 0.0) {
        return Err(GeometryError::NonPositiveDt(dt));
    }
    let q = state.q;
    let omega = Quaternion { w: 0.0, x: gyro.x, y: gyro.y, z: gyro.z };
    let rate = q.hamilton(omega);
    let mut q_dot = [0.5 * rate.w, 0.5 * rate.x, 0.5 * rate.y, 0.5 * rate.z];

    if let Some(a) = accel.normalized() {
        let (q0, q1, q2, q3) = (q.w, q.x, q.y, q.z);
        // objective: predicted gravity direction minus measured
        let f = [
            2.0 * (q1 * q3 - q0 * q2) - a.x,
            2.0 * (q0 * q1 + q2 * q3) - a.y,
            2.0 * (0.5 - q1 * q1 - q2 * q2) - a.z,
        ];
        // J^T f
        let grad = [
            -2.0 * q2 * f[0] + 2.0 * q1 * f[1],
            2.0 * q3 * f[0] + 2.0 * q0 * f[1] - 4.0 * q1 * f[2],
            -2.0 * q0 * f[0] + 2.0 * q3 * f[1] - 4.0 * q2 * f[2],
            2.0 * q1 * f[0] + 2.0 * q2 * f[1],
        ];
        let n = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if n > 0.0 {
            for (d, g) in q_dot.iter_mut().zip(grad) {
                *d -= state.beta * g / n;
            }
        }
    }

    let next = Quaternion {
        w: q.w + q_dot[0] * dt,
        x: q.x + q_dot[1] * dt,
        y: q.y + q_dot[2] * dt,
        z: q.z + q_dot[3] * dt,
    }
    .normalized();
    Ok(FilterState { q: next, beta: state.beta, last_update: state.last_update + dt })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut r = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                r[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        r
    }

    fn rx(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
    }
    fn ry(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]]
    }
    fn rz(a: f64) -> [[f64; 3]; 3] {
        let (s, c) = a.sin_cos();
        [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    }

    fn arb_quat() -> impl Strategy<Value = Quaternion> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-degenerate", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| Quaternion::from_components(w, x, y, z).normalized())
    }

    #[test]
    fn identity_is_neutral() {
        let q = Quaternion::from_euler(0.1, -0.4, 2.0);
        assert!(quat_multiply(Quaternion::IDENTITY, q).distance(q) < 1e-12);
        assert!(quat_multiply(q, q.inverse()).distance(Quaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn two_quarter_turns_about_z() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let q = Quaternion::from_components(h, 0.0, 0.0, h);
        let r = quat_multiply(q, q);
        // rotation-matrix oracle: Rz(90) * Rz(90) = Rz(180)
        let m = matmul(rz(FRAC_PI_2), rz(FRAC_PI_2));
        let qm = r.to_matrix();
        for i in 0..3 {
            for j in 0..3 {
                assert!((m[i][j] - qm[i][j]).abs() < 1e-6);
            }
        }
        assert!(r.distance(Quaternion::from_components(0.0, 0.0, 0.0, 1.0)) < 1e-6);
    }

    #[test]
    fn delta_examples() {
        let q = Quaternion::from_euler(0.3, 0.1, -1.0);
        assert!(quat_delta(q, q).distance(Quaternion::IDENTITY) < 1e-12);
        let rz90 = Quaternion::rot_z(FRAC_PI_2);
        assert!(quat_delta(rz90, Quaternion::IDENTITY).distance(rz90) < 1e-12);
        let d = quat_delta(Quaternion::rot_z(0.75 * PI), Quaternion::rot_z(0.25 * PI));
        assert!(d.distance(rz90) < 1e-6);
    }

    #[test]
    fn euler_examples() {
        assert_eq!(quat_to_euler(Quaternion::IDENTITY).unwrap(), Vec3::ZERO);
        let e = quat_to_euler(Quaternion::rot_z(FRAC_PI_2)).unwrap();
        assert!(e.x.abs() < 1e-9 && e.y.abs() < 1e-9 && (e.z - FRAC_PI_2).abs() < 1e-9);

        // matrix oracle for roll 0.3, pitch 0.2, yaw 0.1
        let m = matmul(matmul(rz(0.1), ry(0.2)), rx(0.3));
        let roll = m[2][1].atan2(m[2][2]);
        let pitch = (-m[2][0]).asin();
        let yaw = m[1][0].atan2(m[0][0]);
        assert!((roll - 0.3).abs() < 1e-12 && (pitch - 0.2).abs() < 1e-12 && (yaw - 0.1).abs() < 1e-12);
        let e = quat_to_euler(Quaternion::from_euler(0.3, 0.2, 0.1)).unwrap();
        assert!((e.x - roll).abs() < 1e-6 && (e.y - pitch).abs() < 1e-6 && (e.z - yaw).abs() < 1e-6);
    }

    #[test]
    fn gimbal_lock_is_signaled() {
        let q = Quaternion::from_euler(0.2, FRAC_PI_2, 0.5);
        match quat_to_euler(q) {
            Err(GeometryError::GimbalLock(v)) => {
                assert_eq!(v.x, 0.0);
                // roll folds into yaw: yaw - roll
                assert!((v.z - 0.3).abs() < 1e-6, "{v:?}");
            }
            other => panic!("expected gimbal lock, got {other:?}"),
        }
    }

    #[test]
    fn madgwick_equilibrium() {
        let mut s = FilterState::new(0.1);
        for _ in 0..100 {
            s = madgwick_update(s, Vec3::ZERO, Vec3::new(0.0, 0.0, 9.81), 0.01).unwrap();
        }
        assert!(s.q.distance(Quaternion::IDENTITY) < 1e-12);
    }

    #[test]
    fn madgwick_pure_gyro_yaw() {
        let mut s = FilterState::new(0.0);
        for _ in 0..1000 {
            s = madgwick_update(s, Vec3::new(0.0, 0.0, PI), Vec3::new(0.0, 0.0, 9.81), 0.001).unwrap();
        }
        let yaw = euler_lossy(s.q).z;
        // closed form: yaw = pi * 1000 * 0.001
        assert!(wrap_angle(yaw - PI).abs() < 1e-3, "yaw {yaw}");
    }

    #[test]
    fn madgwick_recovers_static_tilt() {
        let mut s = FilterState::new(0.1).with_orientation(Quaternion::rot_x(10f64.to_radians()));
        for _ in 0..200 {
            s = madgwick_update(s, Vec3::ZERO, Vec3::new(0.0, 0.0, 9.81), 0.01).unwrap();
        }
        // tilt = angle between the body z axis and gravity
        let up = s.q.rotate(Vec3::Z);
        let tilt = up.z.clamp(-1.0, 1.0).acos();
        assert!(tilt.to_degrees() < 0.5, "tilt {}", tilt.to_degrees());
    }

    #[test]
    fn madgwick_zero_accel_integrates_gyro_only() {
        let s0 = FilterState::new(0.5).with_orientation(Quaternion::rot_x(0.2));
        let a = madgwick_update(s0, Vec3::new(0.1, 0.0, 0.0), Vec3::ZERO, 0.01).unwrap();
        let b = madgwick_update(FilterState { beta: 0.0, ..s0 }, Vec3::new(0.1, 0.0, 0.0), Vec3::ZERO, 0.01).unwrap();
        assert_eq!(a.q, b.q);
        assert!(madgwick_update(s0, Vec3::ZERO, Vec3::Z, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(q in arb_quat()) {
            prop_assert!(quat_multiply(q, q.inverse()).distance(Quaternion::IDENTITY) < 1e-9);
        }

        #[test]
        fn delta_reconstructs(q1 in arb_quat(), q2 in arb_quat()) {
            let r = quat_multiply(quat_delta(q2, q1), q1);
            prop_assert!(r.distance(q2) < 1e-9);
            prop_assert!((r.norm() - 1.0).abs() < 1e-9);
        }

        #[test]
        fn euler_round_trip(roll in -3.1..3.1f64, pitch in -1.5..1.5f64, yaw in -3.1..3.1f64) {
            let e = quat_to_euler(Quaternion::from_euler(roll, pitch, yaw)).unwrap();
            prop_assert!((e.x - roll).abs() < 1e-6);
            prop_assert!((e.y - pitch).abs() < 1e-6);
            prop_assert!((e.z - yaw).abs() < 1e-6);
        }

        #[test]
        fn zero_gain_is_gyro_integration(q in arb_quat(), gx in -3.0..3.0f64, gy in -3.0..3.0f64, gz in -3.0..3.0f64) {
            let g = Vec3::new(gx, gy, gz);
            let s = FilterState::new(0.0).with_orientation(q);
            let out = madgwick_update(s, g, Vec3::new(0.3, -1.0, 9.0), 0.005).unwrap();
            let w = q.hamilton(Quaternion::from_components(0.0, gx, gy, gz));
            let manual = Quaternion::from_components(
                q.w + 0.5 * w.w * 0.005,
                q.x + 0.5 * w.x * 0.005,
                q.y + 0.5 * w.y * 0.005,
                q.z + 0.5 * w.z * 0.005,
            ).normalized();
            prop_assert!(out.q.distance(manual) < 1e-9);
            prop_assert!((out.q.norm() - 1.0).abs() < 1e-9);
        }
    }
}
