//! PPO refining the grasp approach under object position uncertainty.
//! Prints the 50-episode moving average of attempts per episode.
//!
//! cargo run --release --example grasp_ppo -- [iterations] [seed]

use tactile_workbench::grasp::{GraspConfig, GraspEnv, OBSERVATION_SIZE};
use tactile_workbench::rl::{moving_average, Environment, PpoAgent, PpoConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let iterations: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut env = GraspEnv::new(GraspConfig::default(), seed).expect("env");
    let mut agent = PpoAgent::new(OBSERVATION_SIZE, env.action_space(), PpoConfig { seed, ..PpoConfig::default() }).expect("agent");
    let mut steps = Vec::new();
    let mut successes = 0;
    for it in 0..iterations {
        let run = agent.train(&mut env, 1).expect("train");
        for e in &run.episodes {
            steps.push(e.steps as f64);
            successes += e.success as usize;
        }
        let ma = moving_average(&steps, 50);
        println!("iteration {it:>2}: {:>6} episodes, MA steps {:.2}, success rate {:.3}", steps.len(), ma[ma.len() - 1], successes as f64 / steps.len() as f64);
    }
    let ma = moving_average(&steps, 50);
    println!("initial MA {:.2} -> final MA {:.2}", ma[49.min(ma.len() - 1)], ma[ma.len() - 1]);
}
