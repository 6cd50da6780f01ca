//! Madgwick filter recovering a static tilt from the accelerometer alone,
//! then tracking a constant yaw rate from the gyro.

use tactile_workbench::geometry::{quat_to_euler, FilterState, Quaternion, Vec3};

fn main() {
    let truth = Quaternion::from_euler(0.35, -0.2, 0.0);
    let accel = truth.conjugate().rotate(Vec3::Z).scale(9.81);
    let mut f = FilterState::new(0.1);
    for step in 1..=2000 {
        f = f.update(Vec3::ZERO, accel, 0.01).expect("update");
        if step % 400 == 0 {
            let e = quat_to_euler(f.q).expect("euler");
            println!("t={:>4.1}s roll {:+.4} pitch {:+.4} (true +0.3500 -0.2000)", step as f64 * 0.01, e.x, e.y);
        }
    }

    let mut g = FilterState::new(0.0);
    for _ in 0..1000 {
        g = g.update(Vec3::new(0.0, 0.0, std::f64::consts::PI), Vec3::ZERO, 0.001).expect("update");
    }
    println!("yaw after 1 s at pi rad/s: {:.6}", quat_to_euler(g.q).expect("euler").z);
}
