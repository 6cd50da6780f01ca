//! Simulated tactile-manipulation workbench.
//!
//! The crate bundles a kinematic arm/gripper simulator with compliant tactile
//! modules ([`sim`]), multi-rate sensor stream generation and windowed dataset
//! construction ([`sensors`]), a small neural-network engine ([`nn`]), and the
//! three experiments built on them: object-angle estimation from tactile
//! windows ([`pose`]), PPO grasp-approach refinement ([`grasp`]) and
//! demonstration-pretrained DQN peg extraction ([`extract`]). The [`service`]
//! module runs experiments from config files and hosts the live teleoperation
//! protocol.

pub mod extract;
pub mod geometry;
pub mod grasp;
pub mod nn;
pub mod pose;
pub mod rl;
pub mod seed;
pub mod sensors;
pub mod service;
pub mod sim;
