use super::streams::{Channel, SensorStream};
use super::SensorError;
use serde::{Deserialize, Serialize};

/// Features per aligned sample: 2 modules x (pressure + accel 3 + gyro 3 + mag 3).
pub const FEATURES_PER_SAMPLE: usize = 20;

/// A pressure reading paired with its nearest MARG reading, labelled with
/// the angle of the camera frame it falls under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedSample {
    pub frame: usize,
    pub frame_time: f64,
    pub angle: f64,
    pub pressure_time: f64,
    pub marg_time: f64,
    pub pressure: [f64; 2],
    /// Per module: accel xyz, gyro xyz, mag xyz.
    pub marg: [[f64; 9]; 2],
}

impl AlignedSample {
    /// `[p0, marg0 (9), p1, marg1 (9)]`.
    pub fn features(&self) -> [f64; FEATURES_PER_SAMPLE] {
        let mut f = [0.0; FEATURES_PER_SAMPLE];
        for k in 0..2 {
            f[k * 10] = self.pressure[k];
            f[k * 10 + 1..k * 10 + 10].copy_from_slice(&self.marg[k]);
        }
        f
    }
}

/// All samples assigned to one camera frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedGroup {
    pub frame: usize,
    pub frame_time: f64,
    pub angle: f64,
    pub samples: Vec<AlignedSample>,
}

fn expect(stream: &SensorStream, channel: Channel) -> Result<(), SensorError> {
    if stream.channel != channel {
        return Err(SensorError::InvalidStream(format!("expected {channel:?}, got {:?}", stream.channel)));
    }
    stream.validate()
}

/// Index of the sample nearest to `t` in sorted `times`; ties go to the
/// earlier sample.
fn nearest(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    if i == 0 {
        return 0;
    }
    if i == times.len() {
        return times.len() - 1;
    }
    if times[i] - t < t - times[i - 1] {
        i
    } else {
        i - 1
    }
}

/// Groups pressure samples by camera frame interval `[t_i, t_{i+1})` (the last
/// frame's interval is as long as the previous period) and pairs each with
/// the nearest MARG sample. Pressure samples before the first frame or after
/// the last interval are discarded, as are unpaired MARG samples.
pub fn align_streams(
    camera: &SensorStream,
    pressure: &SensorStream,
    marg: &SensorStream,
) -> Result<Vec<AlignedGroup>, SensorError> {
    expect(camera, Channel::CameraAngle)?;
    expect(pressure, Channel::Pressure)?;
    expect(marg, Channel::Marg)?;
    if camera.samples.is_empty() || pressure.samples.is_empty() || marg.samples.is_empty() {
        return Err(SensorError::EmptyOverlap);
    }
    let cam = &camera.samples;
    let marg_t = marg.times();
    let last_end = if cam.len() > 1 {
        let n = cam.len();
        cam[n - 1].t + (cam[n - 1].t - cam[n - 2].t)
    } else {
        f64::INFINITY
    };

    let mut groups: Vec<AlignedGroup> = cam
        .iter()
        .enumerate()
        .map(|(i, c)| AlignedGroup { frame: i, frame_time: c.t, angle: c.v[0], samples: Vec::new() })
        .collect();
    let mut frame = 0usize;
    let mut assigned = 0usize;
    for p in &pressure.samples {
        if p.t < cam[0].t || p.t >= last_end {
            continue;
        }
        while frame + 1 < cam.len() && p.t >= cam[frame + 1].t {
            frame += 1;
        }
        let m = &marg.samples[nearest(&marg_t, p.t)];
        let mut mv = [[0.0; 9]; 2];
        mv[0].copy_from_slice(&m.v[..9]);
        mv[1].copy_from_slice(&m.v[9..]);
        let g = &mut groups[frame];
        g.samples.push(AlignedSample {
            frame,
            frame_time: g.frame_time,
            angle: g.angle,
            pressure_time: p.t,
            marg_time: m.t,
            pressure: [p.v[0], p.v[1]],
            marg: mv,
        });
        assigned += 1;
    }
    if assigned == 0 {
        return Err(SensorError::EmptyOverlap);
    }
    Ok(groups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::streams::StreamSample;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stream(channel: Channel, times: &[f64]) -> SensorStream {
        let w = channel.width();
        SensorStream {
            channel,
            nominal_rate: 1.0,
            samples: times
                .iter()
                .enumerate()
                .map(|(i, &t)| StreamSample { t, v: (0..w).map(|k| (i * 100 + k) as f64).collect() })
                .collect(),
        }
    }

    /// Brute force: scan every frame interval and every MARG sample.
    fn oracle(cam: &[f64], p: &[f64], m: &[f64]) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for (pi, &t) in p.iter().enumerate() {
            for f in 0..cam.len() {
                let end = if f + 1 < cam.len() {
                    cam[f + 1]
                } else if cam.len() > 1 {
                    cam[f] + (cam[f] - cam[f - 1])
                } else {
                    f64::INFINITY
                };
                if t >= cam[f] && t < end {
                    let mut best = 0;
                    for (mi, &mt) in m.iter().enumerate() {
                        if (mt - t).abs() < (m[best] - t).abs() {
                            best = mi;
                        }
                    }
                    out.push((f, pi, best));
                }
            }
        }
        out
    }

    fn flatten(groups: &[AlignedGroup], p: &[f64], m: &[f64]) -> Vec<(usize, usize, usize)> {
        groups
            .iter()
            .flat_map(|g| g.samples.iter())
            .map(|s| {
                let pi = p.iter().position(|&t| t == s.pressure_time).unwrap();
                let mi = m.iter().position(|&t| t == s.marg_time).unwrap();
                (s.frame, pi, mi)
            })
            .collect()
    }

    #[test]
    fn toy_interval_example() {
        let cam = stream(Channel::CameraAngle, &[0.0, 0.1]);
        let p = stream(Channel::Pressure, &[-0.002, 0.030, 0.055, 0.098]);
        let m = stream(Channel::Marg, &[0.0, 0.055, 0.1]);
        let g = align_streams(&cam, &p, &m).unwrap();
        let times: Vec<f64> = g[0].samples.iter().map(|s| s.pressure_time).collect();
        assert_eq!(times, vec![0.030, 0.055, 0.098]);
        assert!(g[1].samples.is_empty());
        let marg: Vec<f64> = g[0].samples.iter().map(|s| s.marg_time).collect();
        assert_eq!(marg, vec![0.055, 0.055, 0.1]);
        assert_eq!(g[0].samples[0].features()[0], 100.0);
    }

    #[test]
    fn equidistant_marg_prefers_earlier() {
        let cam = stream(Channel::CameraAngle, &[0.0, 0.125]);
        let p = stream(Channel::Pressure, &[0.03125]);
        let m = stream(Channel::Marg, &[0.015625, 0.046875]);
        let g = align_streams(&cam, &p, &m).unwrap();
        assert_eq!(g[0].samples[0].marg_time, 0.015625);
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let sorted = |n: usize, rng: &mut ChaCha8Rng| {
            let mut v: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..2000) as f64) * 1e-3).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        for _ in 0..1000 {
            let nc = rng.gen_range(1..6);
            let np = rng.gen_range(1..25);
            let nm = rng.gen_range(1..40);
            let (c, p, m) = (sorted(nc, &mut rng), sorted(np, &mut rng), sorted(nm, &mut rng));
            let want = oracle(&c, &p, &m);
            match align_streams(
                &stream(Channel::CameraAngle, &c),
                &stream(Channel::Pressure, &p),
                &stream(Channel::Marg, &m),
            ) {
                Ok(g) => assert_eq!(flatten(&g, &p, &m), want),
                Err(SensorError::EmptyOverlap) => assert!(want.is_empty()),
                Err(e) => panic!("{e}"),
            }
        }
    }

    #[test]
    fn rejects_bad_streams() {
        let cam = stream(Channel::CameraAngle, &[0.0, 0.1]);
        let p = stream(Channel::Pressure, &[0.2, 0.1]);
        let m = stream(Channel::Marg, &[0.0]);
        assert!(matches!(align_streams(&cam, &p, &m), Err(SensorError::InvalidStream(_))));
        assert!(matches!(align_streams(&p, &cam, &m), Err(SensorError::InvalidStream(_))));
        let late = stream(Channel::Pressure, &[5.0]);
        assert!(matches!(align_streams(&cam, &late, &m), Err(SensorError::EmptyOverlap)));
    }
}
