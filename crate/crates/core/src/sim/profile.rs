//! Operator-applied rotation trajectories and grasp-position uncertainty.

use super::shapes::ObjectSpec;
use super::SimError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Internal sampling rate of rotation profiles (Hz).
pub const PROFILE_RATE: f64 = 1000.0;

/// Object angle over time, sampled at [`PROFILE_RATE`]. Angles are absolute;
/// the resting reference is pi/2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationProfile {
    pub dt: f64,
    pub yaw: Vec<f64>,
}

impl RotationProfile {
    pub fn duration(&self) -> f64 {
        (self.yaw.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Linearly interpolated angle at `t`, clamped to the profile span.
    pub fn yaw_at(&self, t: f64) -> f64 {
        let n = self.yaw.len();
        if n == 0 {
            return FRAC_PI_2;
        }
        let x = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let i = (x.floor() as usize).min(n.saturating_sub(2));
        let f = x - i as f64;
        if n == 1 {
            return self.yaw[0];
        }
        self.yaw[i] * (1.0 - f) + self.yaw[i + 1] * f
    }

    /// Deviation from the resting reference at `t`.
    pub fn deviation_at(&self, t: f64) -> f64 {
        self.yaw_at(t) - FRAC_PI_2
    }

    /// Mean absolute angular speed (rad/s).
    pub fn mean_speed(&self) -> f64 {
        if self.yaw.len() < 2 {
            return 0.0;
        }
        let total: f64 = self.yaw.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
        total / self.duration()
    }
}

/// Smooth clockwise-then-counter-clockwise rotation starting at pi/2, with a
/// seeded amplitude, period and a slowly varying speed jitter that mimics an
/// inconsistent human operator.
pub fn external_rotation_profile(object: &ObjectSpec, duration: f64, seed: u64) -> Result<RotationProfile, SimError> {
    if !(duration > 0.0) {
        return Err(SimError::InvalidParameter(format!("duration must be positive, got {duration}")));
    }
    let _ = object;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = rng.gen_range(0.35..0.6);
    let period = rng.gen_range(6.0..10.0);
    let base_rate = 2.0 * PI / period;

    // Ornstein-Uhlenbeck speed jitter, time constant 0.5 s
    let dt = 1.0 / PROFILE_RATE;
    let tau = 0.5;
    let jitter_sigma = 0.3;
    let n = (duration * PROFILE_RATE).round() as usize + 1;
    let mut yaw = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    let mut eta = 0.0f64;
    let kick = jitter_sigma * (2.0 * dt / tau).sqrt();
    for _ in 0..n {
        yaw.push(FRAC_PI_2 + amplitude * phase.sin());
        let z: f64 = StandardNormal.sample(&mut rng);
        eta += -eta / tau * dt + kick * z;
        eta = eta.clamp(-0.8, 0.8);
        phase += base_rate * (1.0 + eta) * dt;
    }
    Ok(RotationProfile { dt, yaw })
}

/// Draws an x-axis position from `N(mu, sigma^2)`. `sigma = 0` returns `mu`.
pub fn sample_uncertain_position<R: Rng + ?Sized>(mu: f64, sigma: f64, rng: &mut R) -> Result<f64, SimError> {
    if sigma == 0.0 {
        return Ok(mu);
    }
    let dist = Normal::new(mu, sigma)
        .map_err(|_| SimError::InvalidParameter(format!("sigma must be positive, got {sigma}")))?;
    if sigma < 0.0 {
        return Err(SimError::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    Ok(dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cyl() -> ObjectSpec {
        ObjectSpec::cylinder(0.065)
    }

    #[test]
    fn deterministic_and_starts_at_reference() {
        let a = external_rotation_profile(&cyl(), 5.0, 11).unwrap();
        let b = external_rotation_profile(&cyl(), 5.0, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.yaw[0], FRAC_PI_2);
        assert!(external_rotation_profile(&cyl(), 0.0, 1).is_err());
    }

    #[test]
    fn rotates_both_ways() {
        let p = external_rotation_profile(&cyl(), 12.0, 2).unwrap();
        assert!(p.yaw.iter().any(|&y| y > FRAC_PI_2 + 0.2));
        assert!(p.yaw.iter().any(|&y| y < FRAC_PI_2 - 0.2));
    }

    #[test]
    fn mean_speed_band_over_seeds() {
        for seed in 0..100 {
            let s = external_rotation_profile(&cyl(), 20.0, seed).unwrap().mean_speed();
            assert!((0.1..=0.5).contains(&s), "seed {seed}: {s}");
        }
    }

    #[test]
    fn uncertainty_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(sample_uncertain_position(0.3, 0.0, &mut rng).unwrap(), 0.3);
        assert!(sample_uncertain_position(0.3, -1.0, &mut rng).is_err());

        let (mu, sigma, n) = (0.1, 0.005, 100_000);
        let draws: Vec<f64> = (0..n).map(|_| sample_uncertain_position(mu, sigma, &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - mu).abs() < 4.0 * sigma / (n as f64).sqrt());
        // analytic P(|x - mu| < 2 sigma) = 0.9545
        let inside = draws.iter().filter(|&&x| (x - mu).abs() < 2.0 * sigma).count() as f64 / n as f64;
        assert!((inside - 0.9545).abs() < 0.005, "{inside}");
    }
}
