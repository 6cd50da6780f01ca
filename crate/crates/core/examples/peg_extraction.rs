//! Peg extraction: scripted teleoperation demos, behaviour-cloning
//! pretraining, then DQN from scratch and from the pretrained network.
//!
//! cargo run --release --example peg_extraction -- [vertical|slanted|curved] [runs]

use tactile_workbench::extract::{collect_demos, ExtractConfig, ExtractEnv, N_ACTIONS, OBSERVATION_SIZE, PLACEMENT_YAWS_DEG};
use tactile_workbench::rl::{pretrain_from_demos, DemoRecord, DqnAgent, DqnConfig, PretrainConfig};
use tactile_workbench::sim::PegProfile;

fn main() {
    let mut args = std::env::args().skip(1);
    let peg: PegProfile = args.next().map_or(PegProfile::Vertical, |s| s.parse().expect("peg name"));
    let runs: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(5);
    let config = ExtractConfig::default();

    let yaws: &[f64] = if peg == PegProfile::Vertical { &[0.0] } else { &PLACEMENT_YAWS_DEG };
    let sessions = collect_demos(&config, peg, yaws, 3, 7, None).expect("demos");
    let demos: Vec<DemoRecord> = sessions.into_iter().flat_map(|s| s.records).collect();
    let (net, report) = pretrain_from_demos(&demos, &PretrainConfig::default()).expect("pretrain");
    println!("{} demo records, behaviour-cloning accuracy {:.3}", demos.len(), report.accuracy);

    for seed in 0..runs {
        let mut first = Vec::new();
        for pretrained in [false, true] {
            let mut env = ExtractEnv::new(config.clone(), peg, 0.0, 100 + seed).expect("env");
            let mut agent = if pretrained {
                DqnAgent::from_pretrained(&net, DqnConfig { seed, ..DqnConfig::pretrained() })
            } else {
                DqnAgent::new(OBSERVATION_SIZE, N_ACTIONS, DqnConfig { seed, ..DqnConfig::default() })
            }
            .expect("agent");
            first.push(agent.train(&mut env, 600, true).expect("train").episodes_to_success());
        }
        println!("seed {seed}: first success scratch {:?}, pretrained {:?}", first[0], first[1]);
    }
}
