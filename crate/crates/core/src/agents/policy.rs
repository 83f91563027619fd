use std::sync::Arc;

use ndarray::ArrayView2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ActionMode, Agent, AgentError};
use crate::dataset::PreprocStats;
use crate::encoding::{Observation, Stage, BATTLE_OBS_LEN};
use crate::engine::BATTLE_ACTIONS;
use crate::learn::{masked_argmax, softmax_row, Checkpoint, DenseNet, Head, LearnError};

/// A battle-stage policy network together with the input transform it was trained with.
#[derive(Clone, Debug)]
pub struct PolicyModel {
    pub name: String,
    pub net: DenseNet<f32>,
    pub preproc: PreprocStats,
}

impl PolicyModel {
    pub fn new(name: impl Into<String>, net: DenseNet<f32>, preproc: PreprocStats) -> Result<Self, LearnError> {
        if net.head != Head::Policy || net.input_dim() != BATTLE_OBS_LEN || net.output_dim() != BATTLE_ACTIONS {
            return Err(LearnError::Shape(format!(
                "policy network must map {BATTLE_OBS_LEN} to {BATTLE_ACTIONS}, got {:?}",
                net.dims
            )));
        }
        Ok(PolicyModel { name: name.into(), net, preproc })
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, LearnError> {
        Self::new(ck.meta.experiment.clone(), ck.net()?, ck.meta.preproc.clone())
    }

    /// Raw logits for one observation after preprocessing.
    pub fn logits(&self, obs: &[f32]) -> Vec<f32> {
        let mut x = obs.to_vec();
        self.preproc.apply_in_place(&mut x);
        let view = ArrayView2::from_shape((1, x.len()), &x).expect("one row");
        self.net.forward(view).into_raw_vec_and_offset().0
    }

    /// Masked action probabilities for one observation.
    pub fn probs(&self, obs: &[f32], mask: &[bool]) -> Result<Vec<f32>, AgentError> {
        let logits = self.logits(obs);
        let mut p = vec![0.0; logits.len()];
        softmax_row(&logits, mask, &mut p).ok_or(AgentError::EmptyMask)?;
        Ok(p)
    }
}

/// Plays the battle stage from a [`PolicyModel`]. Drafting is left to a drafter agent.
#[derive(Clone, Debug)]
pub struct PolicyAgent {
    model: Arc<PolicyModel>,
    mode: ActionMode,
}

impl PolicyAgent {
    pub fn new(model: Arc<PolicyModel>, mode: ActionMode) -> Self {
        PolicyAgent { model, mode }
    }
}

/// Draws an index from a probability row by inverse CDF; falls back to the last positive entry
/// when rounding leaves the draw above the total.
pub fn sample_index(probs: &[f32], rng: &mut impl Rng) -> Option<usize> {
    let u: f32 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = Some(i);
            if u < acc {
                return Some(i);
            }
        }
    }
    last
}

impl Agent for PolicyAgent {
    fn name(&self) -> String {
        format!("policy:{}", self.model.name)
    }

    fn act(&mut self, obs: &Observation, mask: &[bool], rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if obs.stage != Stage::Battle {
            return Err(AgentError::UnsupportedStage(obs.stage.name()));
        }
        match self.mode {
            ActionMode::Argmax => {
                masked_argmax(&self.model.logits(&obs.values), mask).ok_or(AgentError::EmptyMask)
            }
            ActionMode::Sample => {
                let p = self.model.probs(&obs.values, mask)?;
                sample_index(&p, rng).ok_or(AgentError::EmptyMask)
            }
        }
    }
}
