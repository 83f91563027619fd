//! Battle-stage state-action pairs: collection by self-play, pass filtering, match-level splits,
//! input preprocessing, and the on-disk formats.

mod format;
mod matchlog;
mod preproc;

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, AgentError, AgentSpec};
use crate::cardgen::{GeneratorParams, PoolRegistry};
use crate::encoding::BATTLE_OBS_LEN;
use crate::engine::{EngineError, BATTLE_ACTIONS};
use crate::eval::{mirrored_setup, play_match, Decision, MatchResult};
use crate::par;

pub use format::{read_dataset, write_dataset, write_debug, DATASET_MAGIC, DATASET_VERSION, MASK_BYTES};
pub use matchlog::{read_match_log, replay_match, write_match_log, MatchLog, ReplayReport, MATCH_LOG_MAGIC};
pub use preproc::{PreprocMode, PreprocStats};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset format: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SamplePair {
    pub obs: Vec<f32>,
    pub mask: Vec<bool>,
    pub action: u16,
    pub match_id: u64,
    pub player: u8,
}

/// Struct-of-arrays store of battle-stage pairs. Masks are kept bit-packed, least significant
/// bit first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub obs: Vec<f32>,
    pub masks: Vec<[u8; MASK_BYTES]>,
    pub actions: Vec<u16>,
    pub match_ids: Vec<u64>,
    pub players: Vec<u8>,
}

pub fn pack_mask(mask: &[bool]) -> [u8; MASK_BYTES] {
    let mut out = [0u8; MASK_BYTES];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        out[i / 8] |= 1 << (i % 8);
    }
    out
}

pub fn unpack_mask(bits: &[u8; MASK_BYTES], out: &mut [bool]) {
    for (i, o) in out.iter_mut().enumerate().take(BATTLE_ACTIONS) {
        *o = bits[i / 8] >> (i % 8) & 1 == 1;
    }
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn push(&mut self, pair: &SamplePair) -> Result<(), DatasetError> {
        if pair.obs.len() != BATTLE_OBS_LEN || pair.mask.len() != BATTLE_ACTIONS {
            return Err(DatasetError::InvalidArgument("pair has wrong observation or mask length".into()));
        }
        if !pair.mask.get(pair.action as usize).copied().unwrap_or(false) {
            return Err(DatasetError::InvalidArgument(format!("action {} is masked out", pair.action)));
        }
        self.obs.extend_from_slice(&pair.obs);
        self.masks.push(pack_mask(&pair.mask));
        self.actions.push(pair.action);
        self.match_ids.push(pair.match_id);
        self.players.push(pair.player);
        Ok(())
    }

    pub fn obs_row(&self, i: usize) -> &[f32] {
        &self.obs[i * BATTLE_OBS_LEN..(i + 1) * BATTLE_OBS_LEN]
    }

    pub fn mask_row(&self, i: usize) -> Vec<bool> {
        let mut m = vec![false; BATTLE_ACTIONS];
        unpack_mask(&self.masks[i], &mut m);
        m
    }

    pub fn pair(&self, i: usize) -> SamplePair {
        SamplePair {
            obs: self.obs_row(i).to_vec(),
            mask: self.mask_row(i),
            action: self.actions[i],
            match_id: self.match_ids[i],
            player: self.players[i],
        }
    }

    fn push_from(&mut self, other: &Dataset, i: usize) {
        self.obs.extend_from_slice(other.obs_row(i));
        self.masks.push(other.masks[i]);
        self.actions.push(other.actions[i]);
        self.match_ids.push(other.match_ids[i]);
        self.players.push(other.players[i]);
    }

    pub fn append(&mut self, mut other: Dataset) {
        self.obs.append(&mut other.obs);
        self.masks.append(&mut other.masks);
        self.actions.append(&mut other.actions);
        self.match_ids.append(&mut other.match_ids);
        self.players.append(&mut other.players);
    }

    pub fn select(&self, keep: impl Fn(usize) -> bool) -> Dataset {
        let mut out = Dataset::default();
        for i in (0..self.len()).filter(|&i| keep(i)) {
            out.push_from(self, i);
        }
        out
    }

    /// Drops every pair whose action is Pass, keeping order.
    pub fn filter_pass(&self) -> Dataset {
        self.select(|i| self.actions[i] != 0)
    }

    /// Splits by match: a seeded shuffle of the distinct match ids puts the first
    /// `round(train_fraction · matches)` of them in the training side.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::InvalidArgument(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        let mut ids: Vec<u64> = self.match_ids.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (train_fraction * ids.len() as f64).round() as usize;
        let train_ids: BTreeSet<u64> = ids[..n_train].iter().copied().collect();
        let train = self.select(|i| train_ids.contains(&self.match_ids[i]));
        let val = self.select(|i| !train_ids.contains(&self.match_ids[i]));
        Ok((train, val))
    }

    pub fn match_count(&self) -> usize {
        self.match_ids.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn pass_count(&self) -> usize {
        self.actions.iter().filter(|&&a| a == 0).count()
    }
}

/// Collection metadata written next to the dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub teacher: String,
    pub seats: String,
    pub seed: u64,
    pub matches_requested: u64,
    pub matches_recorded: u64,
    pub matches_skipped: u64,
    pub pairs: u64,
    pub pass_pairs: u64,
    pub pool_source: String,
    pub generator: GeneratorParams,
    #[serde(default)]
    pub files: std::collections::BTreeMap<String, String>,
}

pub struct Collection {
    pub dataset: Dataset,
    pub matches: Vec<MatchResult>,
    pub manifest: Manifest,
}

/// Self-play collection: `target` holds both seats and drafts for itself; every battle decision
/// of both seats is recorded. Matches where the agent faults are skipped.
pub fn collect(
    target: &AgentSpec,
    n_matches: u64,
    seed: u64,
    registry: &PoolRegistry,
    workers: usize,
) -> Result<Collection, DatasetError> {
    if n_matches == 0 {
        return Err(DatasetError::InvalidArgument("collect needs at least one match".into()));
    }
    let init = |_w: usize| -> Result<[Box<dyn Agent>; 2], DatasetError> { Ok([target.build()?, target.build()?]) };
    let per_match = par::map_with_state(n_matches as usize, workers, init, |agents, i| {
        // Seat symmetry is irrelevant in self-play, so each match gets its own pool.
        let (setup, _) = mirrored_setup(registry, seed, 2 * i as u64);
        let setup = crate::eval::MatchSetup { match_id: i as u64, ..setup };
        let mut decisions: Vec<Decision> = Vec::new();
        let [a, b] = agents;
        let res = play_match([&mut **a, &mut **b], None, &setup, Some(&mut decisions))?;
        let mut part = Dataset::default();
        if res.forfeit.is_none() {
            for d in decisions {
                part.push(&SamplePair {
                    obs: d.obs,
                    mask: d.mask,
                    action: d.action,
                    match_id: res.match_id,
                    player: d.player,
                })?;
            }
        }
        Ok::<_, DatasetError>((res, part))
    })?;

    let mut dataset = Dataset::default();
    let mut matches = Vec::new();
    let mut skipped = 0;
    for r in per_match {
        let (res, part) = r?;
        if res.forfeit.is_some() {
            log::warn!("collect: match {} skipped: {}", res.match_id, res.fault.as_deref().unwrap_or("fault"));
            skipped += 1;
            continue;
        }
        dataset.append(part);
        matches.push(res);
    }
    let manifest = Manifest {
        format: String::from_utf8_lossy(DATASET_MAGIC).into_owned(),
        version: DATASET_VERSION,
        teacher: target.name(),
        seats: "both".into(),
        seed,
        matches_requested: n_matches,
        matches_recorded: matches.len() as u64,
        matches_skipped: skipped,
        pairs: dataset.len() as u64,
        pass_pairs: dataset.pass_count() as u64,
        pool_source: match registry.size() {
            Some(n) => format!("fixed:{n}"),
            None => "fresh".into(),
        },
        generator: registry.params().clone(),
        files: Default::default(),
    };
    Ok(Collection { dataset, matches, manifest })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(action: u16, match_id: u64) -> SamplePair {
        let mut mask = vec![false; BATTLE_ACTIONS];
        mask[0] = true;
        mask[action as usize] = true;
        let obs = (0..BATTLE_OBS_LEN).map(|i| (i as u64 + match_id) as f32).collect();
        SamplePair { obs, mask, action, match_id, player: (match_id % 2) as u8 }
    }

    #[test]
    fn mask_packing_round_trips() {
        let mask: Vec<bool> = (0..BATTLE_ACTIONS).map(|i| i % 3 == 1 || i == 144).collect();
        let mut back = vec![false; BATTLE_ACTIONS];
        unpack_mask(&pack_mask(&mask), &mut back);
        assert_eq!(mask, back);
    }

    #[test]
    fn filter_pass_counts() {
        let mut ds = Dataset::default();
        for (k, a) in [0, 5, 0, 7, 9, 0, 1, 2, 3, 4].into_iter().enumerate() {
            ds.push(&pair(a, k as u64)).unwrap();
        }
        let f = ds.filter_pass();
        assert_eq!(f.len(), 7);
        assert!(f.actions.iter().all(|&a| a != 0));
        assert_eq!(f.actions, vec![5, 7, 9, 1, 2, 3, 4]);
        assert_eq!(f.filter_pass(), f);
    }

    #[test]
    fn push_rejects_masked_action() {
        let mut p = pair(5, 0);
        p.mask[5] = false;
        assert!(Dataset::default().push(&p).is_err());
    }

    #[test]
    fn split_is_match_level() {
        let mut ds = Dataset::default();
        for m in 0..50u64 {
            for k in 0..(m % 4 + 1) {
                ds.push(&pair((k % 3) as u16, m)).unwrap();
            }
        }
        let (tr, va) = ds.split(0.8, 3).unwrap();
        assert_eq!(tr.len() + va.len(), ds.len());
        let a: BTreeSet<_> = tr.match_ids.iter().collect();
        let b: BTreeSet<_> = va.match_ids.iter().collect();
        assert!(a.is_disjoint(&b));
        assert_eq!(a.len(), 40);
        assert_eq!(ds.split(0.8, 3).unwrap().0, tr);
        assert!(ds.split(1.0, 3).is_err());
    }
}
