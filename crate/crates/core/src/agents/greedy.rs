use rand_chacha::ChaCha8Rng;

use super::{Agent, AgentError};
use crate::encoding::{
    Observation, Stage, BOARD_OFFSET, CARD_FEATURES, CF_ATTACK, CF_CARD_DRAW, CF_COST, CF_DEFENSE, CF_KIND,
    CF_OPPONENT_HP, CF_PLAYER_HP, CREATURE_FEATURES, CR_ATTACK, CR_DEFENSE, DRAW_SCALE, HAND_OFFSET,
    STAT_SCALE,
};
use crate::engine::{
    ATTACKER_SLOTS, ATTACK_BASE, ATTACK_TARGETS, LANES, LANE_CAPACITY, MAX_HAND, SUMMON_BASE, USE_BASE, USE_TARGETS,
};

const FACE_TARGET: usize = crate::engine::TARGET_OPPONENT_FACE as usize;
const ATTACK_FACE: usize = crate::engine::ATTACK_FACE as usize;

/// Scripted teacher that reads only the observation and mask.
///
/// Battle, in priority order:
/// 1. summon the most expensive legal creature (lowest hand slot on ties) into the lane with
///    fewer own creatures (lane 0 on ties);
/// 2. play the lowest-slot item that has a legal target, on the target with the highest attack
///    (the face counts as attack −1, lowest target index on ties);
/// 3. attack with the lowest-index ready creature, at the face when allowed, otherwise at the
///    lowest legal target (a Guard whenever Guards are present);
/// 4. pass.
///
/// Constructed: pick the legal card maximizing
/// `(|attack| + |defense| + 2·(|player_hp| + |opponent_hp| + |card_draw|)) / (cost + 1)`,
/// lowest id on ties.
#[derive(Clone, Debug, Default)]
pub struct GreedyAgent;

impl Agent for GreedyAgent {
    fn name(&self) -> String {
        "greedy".into()
    }

    fn act(&mut self, obs: &Observation, mask: &[bool], _rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        if !mask.iter().any(|&m| m) {
            return Err(AgentError::EmptyMask);
        }
        Ok(match obs.stage {
            Stage::Battle => greedy_battle(&obs.values, mask),
            Stage::Constructed => greedy_constructed(&obs.values, mask),
        })
    }
}

fn card_value(block: &[f32]) -> f32 {
    let stat = |i: usize| (block[i] * STAT_SCALE).round().abs();
    let bonus = stat(CF_PLAYER_HP) + stat(CF_OPPONENT_HP) + (block[CF_CARD_DRAW] * DRAW_SCALE).round().abs();
    (stat(CF_ATTACK) + stat(CF_DEFENSE) + 2.0 * bonus) / (stat(CF_COST) + 1.0)
}

pub(crate) fn greedy_constructed(obs: &[f32], mask: &[bool]) -> usize {
    let mut best: Option<(usize, f32)> = None;
    for (id, block) in obs.chunks_exact(CARD_FEATURES).take(mask.len()).enumerate() {
        if !mask[id] {
            continue;
        }
        let v = card_value(block);
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((id, v));
        }
    }
    best.expect("mask checked nonempty").0
}

fn board_block(obs: &[f32], slot: usize) -> &[f32] {
    let start = BOARD_OFFSET + slot * CREATURE_FEATURES;
    &obs[start..start + CREATURE_FEATURES]
}

pub(crate) fn greedy_battle(obs: &[f32], mask: &[bool]) -> usize {
    // Summon.
    let mut summon: Option<(usize, f32)> = None;
    for slot in 0..MAX_HAND {
        let legal = (0..LANES).any(|lane| mask[SUMMON_BASE + slot * LANES + lane]);
        if !legal {
            continue;
        }
        let block = &obs[HAND_OFFSET + slot * CARD_FEATURES..HAND_OFFSET + (slot + 1) * CARD_FEATURES];
        debug_assert_eq!(block[CF_KIND], 1.0);
        let cost = block[CF_COST];
        if summon.is_none_or(|(_, c)| cost > c) {
            summon = Some((slot, cost));
        }
    }
    if let Some((slot, _)) = summon {
        let occupancy = |lane: usize| {
            (0..LANE_CAPACITY).filter(|&p| board_block(obs, lane * LANE_CAPACITY + p)[CR_DEFENSE] > 0.0).count()
        };
        let mut lanes: Vec<usize> = (0..LANES).filter(|&l| mask[SUMMON_BASE + slot * LANES + l]).collect();
        lanes.sort_by_key(|&l| (occupancy(l), l));
        return SUMMON_BASE + slot * LANES + lanes[0];
    }

    // Items.
    for slot in 0..MAX_HAND {
        let mut best: Option<(usize, f32)> = None;
        for target in 0..USE_TARGETS {
            if !mask[USE_BASE + slot * USE_TARGETS + target] {
                continue;
            }
            let attack = if target == FACE_TARGET { -1.0 } else { board_block(obs, target)[CR_ATTACK] };
            if best.is_none_or(|(_, a)| attack > a) {
                best = Some((target, attack));
            }
        }
        if let Some((target, _)) = best {
            return USE_BASE + slot * USE_TARGETS + target;
        }
    }

    // Attacks.
    for attacker in 0..ATTACKER_SLOTS {
        let base = ATTACK_BASE + attacker * ATTACK_TARGETS;
        if mask[base + ATTACK_FACE] {
            return base + ATTACK_FACE;
        }
        if let Some(t) = (0..ATTACK_TARGETS).find(|&t| mask[base + t]) {
            return base + t;
        }
    }
    0
}
