use super::{config_hash, ServiceError};
use crate::extract::{ExtractConfig, PLACEMENT_YAWS_DEG};
use crate::grasp::GraspConfig;
use crate::pose::SweepConfig;
use crate::rl::{DqnConfig, PpoConfig, PretrainConfig};
use crate::sim::PegProfile;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PoseSweep,
    GraspPpo,
    ExtractDqn,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::PoseSweep => "pose_sweep",
            ExperimentKind::GraspPpo => "grasp_ppo",
            ExperimentKind::ExtractDqn => "extract_dqn",
        }
    }
}

/// One full sweep per run seed; the seed becomes the sweep's data seed.
pub type PoseExperiment = SweepConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraspExperiment {
    pub env: GraspConfig,
    pub ppo: PpoConfig,
    pub iterations: usize,
    /// Moving-average width for the steps-per-episode trend.
    pub moving_average: usize,
}

impl Default for GraspExperiment {
    fn default() -> Self {
        Self { env: GraspConfig::default(), ppo: PpoConfig::default(), iterations: 20, moving_average: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractExperiment {
    pub env: ExtractConfig,
    pub scratch: DqnConfig,
    pub pretrained: DqnConfig,
    pub pretrain: PretrainConfig,
    /// Pegs the agent is trained to extract.
    pub targets: Vec<PegProfile>,
    /// Demo sources per matrix column; an empty list is the scratch column.
    pub sources: Vec<Vec<PegProfile>>,
    pub target_yaw_deg: f64,
    /// Yaws for slanted and curved demos. The vertical peg is symmetric and
    /// is demonstrated at yaw 0 only.
    pub demo_yaws_deg: Vec<f64>,
    pub demo_sessions_per_yaw: usize,
    pub max_episodes: usize,
}

impl Default for ExtractExperiment {
    fn default() -> Self {
        use PegProfile::*;
        Self {
            env: ExtractConfig::default(),
            scratch: DqnConfig::default(),
            pretrained: DqnConfig::pretrained(),
            pretrain: PretrainConfig::default(),
            targets: vec![Vertical, Slanted, Curved],
            sources: vec![vec![], vec![Vertical], vec![Slanted], vec![Curved], vec![Vertical, Slanted, Curved]],
            target_yaw_deg: 0.0,
            demo_yaws_deg: PLACEMENT_YAWS_DEG.to_vec(),
            demo_sessions_per_yaw: 3,
            max_episodes: 600,
        }
    }
}

/// Column label of a demo source: `scratch`, or peg names joined by `+`.
pub fn source_name(source: &[PegProfile]) -> String {
    if source.is_empty() {
        "scratch".to_string()
    } else {
        source.iter().map(|p| p.name()).collect::<Vec<_>>().join("+")
    }
}

/// A run description. Only the block of the chosen experiment may appear;
/// missing blocks take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Not part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseExperiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp: Option<GraspExperiment>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extract: Option<ExtractExperiment>,
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

impl RunConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self { experiment, seeds: default_seeds(), output_dir: None, pose: None, grasp: None, extract: None }
    }

    pub fn from_json(text: &str) -> Result<Self, ServiceError> {
        let c: Self = serde_json::from_str(text).map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Copy with the experiment block filled in and no output directory.
    /// This is the form that is hashed and written next to the results.
    pub fn resolved(&self) -> Self {
        let mut c = Self::new(self.experiment);
        c.seeds = self.seeds.clone();
        match self.experiment {
            ExperimentKind::PoseSweep => c.pose = Some(self.pose.clone().unwrap_or_default()),
            ExperimentKind::GraspPpo => c.grasp = Some(self.grasp.clone().unwrap_or_default()),
            ExperimentKind::ExtractDqn => c.extract = Some(self.extract.clone().unwrap_or_default()),
        }
        c
    }

    pub fn hash(&self) -> String {
        config_hash(&self.resolved())
    }

    pub fn validate(&self) -> Result<(), ServiceError> {
        let bad = |m: String| Err(ServiceError::ConfigInvalid(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        let stray = match self.experiment {
            ExperimentKind::PoseSweep => self.grasp.is_some() || self.extract.is_some(),
            ExperimentKind::GraspPpo => self.pose.is_some() || self.extract.is_some(),
            ExperimentKind::ExtractDqn => self.pose.is_some() || self.grasp.is_some(),
        };
        if stray {
            return bad(format!("only the {} block may be given", self.experiment.name()));
        }
        let r = self.resolved();
        match self.experiment {
            ExperimentKind::PoseSweep => {
                r.pose.as_ref().expect("resolved").validate().map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
            }
            ExperimentKind::GraspPpo => {
                let g = r.grasp.as_ref().expect("resolved");
                g.env.validate().map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
                g.ppo.validate(Some(g.env.max_steps)).map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
                if g.iterations == 0 || g.moving_average == 0 {
                    return bad("iterations and moving_average must be positive".into());
                }
            }
            ExperimentKind::ExtractDqn => {
                let x = r.extract.as_ref().expect("resolved");
                x.env.validate().map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
                for d in [&x.scratch, &x.pretrained] {
                    d.validate().map_err(|e| ServiceError::ConfigInvalid(e.to_string()))?;
                }
                if x.targets.is_empty() || x.sources.is_empty() || x.max_episodes == 0 {
                    return bad("targets, sources and max_episodes must be non-empty".into());
                }
                if x.sources.iter().any(|s| !s.is_empty()) && (x.demo_sessions_per_yaw == 0 || x.demo_yaws_deg.is_empty()) {
                    return bad("pretrained columns need demo sessions".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_and_stray_blocks_are_rejected() {
        assert!(RunConfig::from_json(r#"{"experiment":"grasp_ppo","sedes":[1]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment":"grasp_ppo","grasp":{"iterations":2,"lr":1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment":"grasp_ppo","extract":{}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment":"grasp_ppo","seeds":[]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"experiment":"grasp_ppo","seeds":[1,1]}"#).is_err());
        let c = RunConfig::from_json(r#"{"experiment":"grasp_ppo","seeds":[3],"grasp":{"iterations":2}}"#).unwrap();
        assert_eq!(c.resolved().grasp.unwrap().iterations, 2);
    }

    #[test]
    fn hash_ignores_output_dir_and_explicit_defaults() {
        let a = RunConfig::new(ExperimentKind::ExtractDqn);
        let mut b = a.clone();
        b.output_dir = Some("/tmp/x".into());
        b.extract = Some(ExtractExperiment::default());
        assert_eq!(a.hash(), b.hash());
        b.seeds = vec![9];
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn source_names() {
        assert_eq!(source_name(&[]), "scratch");
        assert_eq!(source_name(&[PegProfile::Vertical, PegProfile::Curved]), "vertical+curved");
    }
}
