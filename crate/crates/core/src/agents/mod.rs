//! Agent interface, built-in agents, and the external process adapter.
//!
//! Agents see only what a remote player would see: the observation vector, the legality mask,
//! and a random generator owned by the match. [`AgentSpec`] is the cloneable recipe that match
//! runners use to build one independent agent per worker.

mod external;
mod greedy;
mod policy;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::encoding::Observation;
use crate::learn::{Checkpoint, LearnError};

pub use external::{ExternalAgent, ExternalSpec, DEFAULT_TIMEOUT};
pub use greedy::GreedyAgent;
pub use policy::{sample_index, PolicyAgent, PolicyModel};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("agent returned masked-out action {0}")]
    IllegalAction(usize),
    #[error("mask has no legal action")]
    EmptyMask,
    #[error("agent does not play the {0} stage")]
    UnsupportedStage(&'static str),
    #[error("external agent: {0}")]
    External(String),
    #[error("external agent timed out after {0:?}")]
    Timeout(Duration),
    #[error("invalid agent spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
}

impl AgentError {
    /// Failures attributable to an external process (exit, protocol, timeout).
    pub fn is_external(&self) -> bool {
        matches!(self, AgentError::External(_) | AgentError::Timeout(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ActionMode {
    #[default]
    Sample,
    Argmax,
}

pub trait Agent: Send {
    fn name(&self) -> String;

    /// Clears per-match state; called before every match.
    fn reset(&mut self, _match_id: u64) -> Result<(), AgentError> {
        Ok(())
    }

    fn act(&mut self, obs: &Observation, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<usize, AgentError>;
}

/// Uniformly random legal actions.
#[derive(Clone, Debug, Default)]
pub struct RandomAgent;

impl Agent for RandomAgent {
    fn name(&self) -> String {
        "random".into()
    }

    fn act(&mut self, _obs: &Observation, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        let legal = mask.iter().filter(|&&m| m).count();
        if legal == 0 {
            return Err(AgentError::EmptyMask);
        }
        let k = rng.random_range(0..legal);
        Ok(mask.iter().enumerate().filter(|(_, &m)| m).nth(k).expect("k < legal").0)
    }
}

/// Recipe for building agents.
#[derive(Clone, Debug)]
pub enum AgentSpec {
    Random,
    Greedy,
    Policy { model: Arc<PolicyModel>, mode: ActionMode },
    External(ExternalSpec),
}

impl AgentSpec {
    pub fn build(&self) -> Result<Box<dyn Agent>, AgentError> {
        Ok(match self {
            AgentSpec::Random => Box::new(RandomAgent),
            AgentSpec::Greedy => Box::new(GreedyAgent),
            AgentSpec::Policy { model, mode } => Box::new(PolicyAgent::new(model.clone(), *mode)),
            AgentSpec::External(spec) => Box::new(ExternalAgent::spawn(spec)?),
        })
    }

    pub fn name(&self) -> String {
        match self {
            AgentSpec::Random => "random".into(),
            AgentSpec::Greedy => "greedy".into(),
            AgentSpec::Policy { model, mode } => format!("policy:{}:{mode:?}", model.name),
            AgentSpec::External(spec) => format!("external:{}", spec.command_line()),
        }
    }

    /// Parses `random`, `greedy`, `checkpoint:PATH[:sample]`, or `external:PROGRAM [ARGS...]`.
    pub fn parse(text: &str) -> Result<AgentSpec, AgentError> {
        let text = text.trim();
        match text {
            "random" => return Ok(AgentSpec::Random),
            "greedy" => return Ok(AgentSpec::Greedy),
            _ => {}
        }
        if let Some(rest) = text.strip_prefix("checkpoint:") {
            let (path, mode) = match rest.rsplit_once(':') {
                Some((p, "sample")) => (p, ActionMode::Sample),
                Some((p, "argmax")) => (p, ActionMode::Argmax),
                _ => (rest, ActionMode::Argmax),
            };
            let ck = Checkpoint::load(&PathBuf::from(path))?;
            let model = PolicyModel::from_checkpoint(&ck)?;
            return Ok(AgentSpec::Policy { model: Arc::new(model), mode });
        }
        if let Some(rest) = text.strip_prefix("external:") {
            let mut parts = rest.split_whitespace();
            let program = parts.next().ok_or_else(|| AgentError::Spec("external agent needs a program".into()))?;
            return Ok(AgentSpec::External(ExternalSpec::new(program, parts.map(String::from).collect())));
        }
        Err(AgentError::Spec(format!("unknown agent {text:?}")))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::encoding::Stage;

    #[test]
    fn random_agent_forced_move_and_reproducibility() {
        let obs = Observation::zeros(Stage::Battle);
        let mut mask = vec![false; 145];
        mask[42] = true;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(RandomAgent.act(&obs, &mask, &mut rng).unwrap(), 42);
        assert!(matches!(RandomAgent.act(&obs, &[false; 145], &mut rng), Err(AgentError::EmptyMask)));

        let mask: Vec<bool> = (0..145).map(|i| i % 3 == 0).collect();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50).map(|_| RandomAgent.act(&obs, &mask, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert!(run(5).iter().all(|&a| mask[a]));
    }

    #[test]
    fn spec_parsing() {
        assert!(matches!(AgentSpec::parse("greedy"), Ok(AgentSpec::Greedy)));
        assert!(matches!(AgentSpec::parse(" random "), Ok(AgentSpec::Random)));
        match AgentSpec::parse("external:/bin/agent --fast").unwrap() {
            AgentSpec::External(s) => {
                assert_eq!(s.program, "/bin/agent");
                assert_eq!(s.args, vec!["--fast".to_string()]);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(AgentSpec::parse("bogus").is_err());
        assert!(AgentSpec::parse("checkpoint:/does/not/exist.ckpt").is_err());
    }
}
