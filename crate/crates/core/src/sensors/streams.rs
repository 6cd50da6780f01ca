use super::SensorError;
use crate::geometry::{Quaternion, Vec3};
use crate::sim::{external_rotation_profile, ObjectPose, ObjectSpec, RotationProfile, World, WorldConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    CameraAngle,
    Pressure,
    Marg,
}

impl Channel {
    /// Vector length of one sample.
    pub fn width(self) -> usize {
        match self {
            Channel::CameraAngle => 1,
            Channel::Pressure => 2,
            Channel::Marg => 18,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSample {
    pub t: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorStream {
    pub channel: Channel,
    pub nominal_rate: f64,
    pub samples: Vec<StreamSample>,
}

impl SensorStream {
    pub fn new(channel: Channel, nominal_rate: f64) -> Self {
        Self { channel, nominal_rate, samples: Vec::new() }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Strictly increasing timestamps and the channel's vector width.
    pub fn validate(&self) -> Result<(), SensorError> {
        let w = self.channel.width();
        for (i, s) in self.samples.iter().enumerate() {
            if s.v.len() != w {
                return Err(SensorError::InvalidStream(format!("{:?} sample {i} has width {}", self.channel, s.v.len())));
            }
            if !s.t.is_finite() || s.v.iter().any(|v| !v.is_finite()) {
                return Err(SensorError::InvalidStream(format!("{:?} sample {i} is not finite", self.channel)));
            }
            if i > 0 && s.t <= self.samples[i - 1].t {
                return Err(SensorError::InvalidStream(format!("{:?} timestamps not increasing at {i}", self.channel)));
            }
        }
        Ok(())
    }

    /// Mean sampling rate over the stream span.
    pub fn measured_rate(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) if self.samples.len() > 1 => (self.samples.len() - 1) as f64 / (b.t - a.t),
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StreamConfig {
    pub camera_rate: f64,
    pub pressure_rate: f64,
    pub marg_rate: f64,
    /// Relative half-width of the uniform sampling-period jitter.
    pub period_jitter: f64,
    /// Gaussian noise on the camera angle (rad).
    pub camera_noise: f64,
    /// Gaussian noise on each barometer sample (counts), on top of the
    /// simulator's baseline noise.
    pub pressure_noise: f64,
    pub accel_noise: f64,
    pub gyro_noise: f64,
    pub mag_noise: f64,
    /// Constant magnetometer reading in the module frame.
    pub mag_field: [f64; 3],
    /// Penetration each pad is closed to on the rotated object (m).
    pub grasp_depth: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            camera_rate: 29.95,
            pressure_rate: 402.19,
            marg_rate: 973.50,
            period_jitter: 0.02,
            camera_noise: 0.0,
            pressure_noise: 6.0,
            accel_noise: 2.5,
            gyro_noise: 0.05,
            mag_noise: 0.02,
            mag_field: [0.22, 0.0, -0.42],
            grasp_depth: 0.001,
        }
    }
}

/// One recording: an object held in the closed gripper and rotated by hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationTrial {
    pub object: ObjectSpec,
    pub duration: f64,
    pub seed: u64,
}

impl RotationTrial {
    pub fn new(object: ObjectSpec, duration: f64, seed: u64) -> Self {
        Self { object, duration, seed }
    }

    pub fn profile(&self) -> Result<RotationProfile, SensorError> {
        Ok(external_rotation_profile(&self.object, self.duration, self.seed)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialStreams {
    pub camera: SensorStream,
    pub pressure: SensorStream,
    pub marg: SensorStream,
}

const GRAVITY: f64 = 9.81;
/// Half step for the central-difference gyro.
const GYRO_HALF_STEP: f64 = 5e-4;

/// Jittered sampling instants in `[start, duration]`.
fn sample_times(rate: f64, jitter: f64, start: f64, duration: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = 1.0 / rate;
    let mut out = Vec::with_capacity((duration * rate) as usize + 2);
    let mut t = start;
    while t <= duration {
        out.push(t);
        let j = if jitter > 0.0 { rng.gen_range(-jitter..jitter) } else { 0.0 };
        t += period * (1.0 + j);
    }
    out
}

fn holding_world(trial: &RotationTrial, world_config: &WorldConfig, grasp_depth: f64) -> Result<World, SensorError> {
    let centre = Vec3::new(0.0, 0.22, 0.0);
    let mut world = World::new(*world_config, trial.object, ObjectPose { position: centre, yaw: 0.0 }, trial.seed ^ 0x5eed)?;
    world.move_top_down(Vec3::new(centre.x, centre.y, 0.05))?;
    let half = trial.object.half_width();
    world.set_gripper(2.0 * (half - grasp_depth));
    Ok(world)
}

fn module_orientations(world: &mut World, twist: f64) -> [Quaternion; 2] {
    world.set_object_twist(twist);
    let m = world.state().modules;
    [m[0].orientation, m[1].orientation]
}

/// Samples the camera angle, both barometers and both MARG units at their
/// jittered rates while the held object follows the trial's rotation profile.
/// The camera starts at t = 0; the other streams start at a random phase.
pub fn simulate_streams(
    trial: &RotationTrial,
    config: &StreamConfig,
    world_config: &WorldConfig,
) -> Result<TrialStreams, SensorError> {
    let profile = trial.profile()?;
    let mut world = holding_world(trial, world_config, config.grasp_depth)?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let gauss = |rng: &mut ChaCha8Rng, s: f64| if s > 0.0 { s * std_normal.sample(rng) } else { 0.0 };

    let d = trial.duration;
    let cam_t = sample_times(config.camera_rate, config.period_jitter, 0.0, d, &mut rng);
    let p_phase = rng.gen_range(0.0..1.0 / config.pressure_rate);
    let p_t = sample_times(config.pressure_rate, config.period_jitter, p_phase, d, &mut rng);
    let m_phase = rng.gen_range(0.0..1.0 / config.marg_rate);
    let m_t = sample_times(config.marg_rate, config.period_jitter, m_phase, d, &mut rng);

    let mut camera = SensorStream::new(Channel::CameraAngle, config.camera_rate);
    for t in cam_t {
        let v = profile.yaw_at(t) + gauss(&mut rng, config.camera_noise);
        camera.samples.push(StreamSample { t, v: vec![v] });
    }

    let mut pressure = SensorStream::new(Channel::Pressure, config.pressure_rate);
    for t in p_t {
        world.set_object_twist(profile.yaw_at(t) - FRAC_PI_2);
        let b = world.read_baros();
        let max = world_config.contact.max_count;
        let v = b.iter().map(|&p| (p + gauss(&mut rng, config.pressure_noise)).clamp(0.0, max)).collect();
        pressure.samples.push(StreamSample { t, v });
    }

    let mut marg = SensorStream::new(Channel::Marg, config.marg_rate);
    let up = Vec3::new(0.0, 0.0, GRAVITY);
    let mag = Vec3::new(config.mag_field[0], config.mag_field[1], config.mag_field[2]);
    for t in m_t {
        let now = module_orientations(&mut world, profile.yaw_at(t) - FRAC_PI_2);
        let before = module_orientations(&mut world, profile.yaw_at(t - GYRO_HALF_STEP) - FRAC_PI_2);
        let after = module_orientations(&mut world, profile.yaw_at(t + GYRO_HALF_STEP) - FRAC_PI_2);
        let mut v = Vec::with_capacity(18);
        for k in 0..2 {
            let accel = now[k].conjugate().rotate(up);
            let rel = before[k].conjugate() * after[k];
            let sign = if rel.w < 0.0 { -1.0 } else { 1.0 };
            let omega = Vec3::new(rel.x, rel.y, rel.z).scale(sign * 2.0 / (2.0 * GYRO_HALF_STEP));
            for c in [accel.x, accel.y, accel.z] {
                v.push(c + gauss(&mut rng, config.accel_noise));
            }
            for c in [omega.x, omega.y, omega.z] {
                v.push(c + gauss(&mut rng, config.gyro_noise));
            }
            for c in [mag.x, mag.y, mag.z] {
                v.push(c + gauss(&mut rng, config.mag_noise));
            }
        }
        marg.samples.push(StreamSample { t, v });
    }
    Ok(TrialStreams { camera, pressure, marg })
}
