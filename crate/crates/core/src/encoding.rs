//! Fixed-width observation vectors.
//!
//! Constructed stage (2040 floats): 120 card feature blocks in pool id order, then the
//! observer's pick counts scaled by 1/2.
//!
//! Battle stage (244 floats): 8 player scalars, 8 hand slots of card features, then 12 board
//! slots of creature features ordered own lane 0, own lane 1, enemy lane 0, enemy lane 1.
//! Empty slots are zero. Only information visible to the observer is encoded: the opponent's
//! hand contributes its size, decks contribute their sizes.

use std::fmt::Write as _;

use crate::engine::{
    Card, EngineError, GameState, Keywords, Phase, DECK_SIZE, LANES, LANE_CAPACITY, MAX_COPIES, MAX_HAND,
    MAX_MANA, POOL_SIZE, STARTING_HEALTH,
};

pub const CARD_FEATURES: usize = 16;
pub const CREATURE_FEATURES: usize = 9;
pub const PLAYER_SCALARS: usize = 8;
pub const BOARD_SLOTS: usize = 2 * LANES * LANE_CAPACITY;

pub const CONSTRUCTED_OBS_LEN: usize = POOL_SIZE * CARD_FEATURES + POOL_SIZE;
pub const BATTLE_OBS_LEN: usize = PLAYER_SCALARS + MAX_HAND * CARD_FEATURES + BOARD_SLOTS * CREATURE_FEATURES;

pub const HAND_OFFSET: usize = PLAYER_SCALARS;
pub const BOARD_OFFSET: usize = HAND_OFFSET + MAX_HAND * CARD_FEATURES;
pub const PICKS_OFFSET: usize = POOL_SIZE * CARD_FEATURES;

/// Divisor for cost, attack, defense and health deltas in card features.
pub const STAT_SCALE: f32 = 12.0;
pub const DRAW_SCALE: f32 = 2.0;

// Offsets inside a card feature block.
pub const CF_KIND: usize = 0;
pub const CF_COST: usize = 4;
pub const CF_ATTACK: usize = 5;
pub const CF_DEFENSE: usize = 6;
pub const CF_KEYWORDS: usize = 7;
pub const CF_PLAYER_HP: usize = 13;
pub const CF_OPPONENT_HP: usize = 14;
pub const CF_CARD_DRAW: usize = 15;

// Offsets inside a creature feature block.
pub const CR_ATTACK: usize = 0;
pub const CR_DEFENSE: usize = 1;
pub const CR_KEYWORDS: usize = 2;
pub const CR_READY: usize = 8;

const _: () = assert!(CONSTRUCTED_OBS_LEN == 2040);
const _: () = assert!(BATTLE_OBS_LEN == 244);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stage {
    Constructed,
    Battle,
}

impl Stage {
    pub fn obs_len(self) -> usize {
        match self {
            Stage::Constructed => CONSTRUCTED_OBS_LEN,
            Stage::Battle => BATTLE_OBS_LEN,
        }
    }

    pub fn action_space(self) -> usize {
        match self {
            Stage::Constructed => crate::engine::CONSTRUCTED_ACTIONS,
            Stage::Battle => crate::engine::BATTLE_ACTIONS,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Constructed => "constructed",
            Stage::Battle => "battle",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub stage: Stage,
    pub values: Vec<f32>,
}

impl Observation {
    pub fn zeros(stage: Stage) -> Self {
        Observation { stage, values: vec![0.0; stage.obs_len()] }
    }
}

fn write_card(out: &mut [f32], card: &Card) {
    out[CF_KIND + card.kind.index()] = 1.0;
    out[CF_COST] = card.cost as f32 / STAT_SCALE;
    out[CF_ATTACK] = card.attack as f32 / STAT_SCALE;
    out[CF_DEFENSE] = card.defense as f32 / STAT_SCALE;
    write_keywords(&mut out[CF_KEYWORDS..CF_KEYWORDS + 6], card.keywords);
    out[CF_PLAYER_HP] = card.player_hp as f32 / STAT_SCALE;
    out[CF_OPPONENT_HP] = card.opponent_hp as f32 / STAT_SCALE;
    out[CF_CARD_DRAW] = card.card_draw as f32 / DRAW_SCALE;
}

fn write_keywords(out: &mut [f32], keywords: Keywords) {
    for (o, k) in out.iter_mut().zip(Keywords::ALL) {
        *o = if keywords.contains(k) { 1.0 } else { 0.0 };
    }
}

pub fn encode_constructed(state: &GameState, player: usize) -> Result<Observation, EngineError> {
    let mut values = vec![0.0; CONSTRUCTED_OBS_LEN];
    encode_constructed_into(state, player, &mut values)?;
    Ok(Observation { stage: Stage::Constructed, values })
}

pub fn encode_constructed_into(state: &GameState, player: usize, out: &mut [f32]) -> Result<(), EngineError> {
    if state.phase != Phase::Constructed {
        return Err(EngineError::Phase { expected: Phase::Constructed, found: state.phase });
    }
    out.fill(0.0);
    for (card, block) in state.pool.cards.iter().zip(out.chunks_exact_mut(CARD_FEATURES)) {
        write_card(block, card);
    }
    for (o, &copies) in out[PICKS_OFFSET..].iter_mut().zip(&state.players[player].picks) {
        *o = copies as f32 / MAX_COPIES as f32;
    }
    Ok(())
}

pub fn encode_battle(state: &GameState, player: usize) -> Result<Observation, EngineError> {
    let mut values = vec![0.0; BATTLE_OBS_LEN];
    encode_battle_into(state, player, &mut values)?;
    Ok(Observation { stage: Stage::Battle, values })
}

pub fn encode_battle_into(state: &GameState, player: usize, out: &mut [f32]) -> Result<(), EngineError> {
    if state.phase != Phase::Battle {
        return Err(EngineError::Phase { expected: Phase::Battle, found: state.phase });
    }
    if player != state.active_player {
        return Err(EngineError::NotYourTurn { player, active: state.active_player });
    }
    out.fill(0.0);
    for (k, p) in [player, 1 - player].into_iter().enumerate() {
        let ps = &state.players[p];
        let s = &mut out[4 * k..4 * k + 4];
        s[0] = ps.health as f32 / STARTING_HEALTH as f32;
        s[1] = ps.mana_current as f32 / MAX_MANA as f32;
        s[2] = ps.deck.len() as f32 / DECK_SIZE as f32;
        s[3] = ps.hand.len() as f32 / MAX_HAND as f32;
    }
    let me = &state.players[player];
    for (&id, block) in me.hand.iter().zip(out[HAND_OFFSET..BOARD_OFFSET].chunks_exact_mut(CARD_FEATURES)) {
        write_card(block, state.pool.card(id));
    }
    let mut blocks = out[BOARD_OFFSET..].chunks_exact_mut(CREATURE_FEATURES);
    for p in [player, 1 - player] {
        for lane in &state.players[p].lanes {
            for pos in 0..LANE_CAPACITY {
                let block = blocks.next().expect("12 board slots");
                if let Some(c) = lane.get(pos) {
                    block[CR_ATTACK] = c.attack as f32 / STAT_SCALE;
                    block[CR_DEFENSE] = c.defense as f32 / STAT_SCALE;
                    write_keywords(&mut block[CR_KEYWORDS..CR_KEYWORDS + 6], c.keywords);
                    block[CR_READY] = if p == player && c.ready() { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(())
}

/// Encodes for whichever stage the game is in.
pub fn encode(state: &GameState, player: usize) -> Result<Observation, EngineError> {
    match state.phase {
        Phase::Constructed => encode_constructed(state, player),
        Phase::Battle => encode_battle(state, player),
        Phase::Finished => Err(EngineError::Phase { expected: Phase::Battle, found: Phase::Finished }),
    }
}

/// Human-readable reference of both layouts, for external agents.
pub fn layout_reference() -> String {
    let mut s = String::new();
    let card_fields = "kind_creature kind_green kind_red kind_blue cost/12 attack/12 defense/12 \
                       breakthrough charge drain guard lethal ward player_hp/12 opponent_hp/12 card_draw/2";
    writeln!(s, "# Observation layouts (32-bit floats)").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "card_features[{CARD_FEATURES}]: {card_fields}").unwrap();
    writeln!(s, "creature_features[{CREATURE_FEATURES}]: attack/12 defense/12 breakthrough charge drain guard lethal ward ready").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "constructed[{CONSTRUCTED_OBS_LEN}]:").unwrap();
    writeln!(s, "  0..{PICKS_OFFSET}: card_features for pool cards 0..120 in id order").unwrap();
    writeln!(s, "  {PICKS_OFFSET}..{CONSTRUCTED_OBS_LEN}: own pick count per card / 2").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "battle[{BATTLE_OBS_LEN}]:").unwrap();
    writeln!(s, "  0..4: own health/30 mana_current/12 deck_size/30 hand_size/8").unwrap();
    writeln!(s, "  4..8: opponent health/30 mana_current/12 deck_size/30 hand_size/8").unwrap();
    writeln!(s, "  {HAND_OFFSET}..{BOARD_OFFSET}: card_features for own hand slots 0..8 (zero if empty)").unwrap();
    writeln!(s, "  {BOARD_OFFSET}..{BATTLE_OBS_LEN}: creature_features for own lane0 pos0..3, own lane1, enemy lane0, enemy lane1").unwrap();
    writeln!(s).unwrap();
    writeln!(s, "battle actions[145]: 0 pass; 1..17 summon(slot*2+lane); 17..121 use(slot*13+target); 121..145 attack(attacker*4+target)").unwrap();
    writeln!(s, "use targets: 0..6 own creatures (lane-major), 6..12 enemy creatures, 12 enemy face").unwrap();
    writeln!(s, "attack targets: 0..3 enemy creatures in the attacker's lane, 3 enemy face").unwrap();
    writeln!(s, "constructed actions[120]: card id to pick").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cardgen::{generate_pool, GeneratorParams};

    fn constructed_state() -> GameState {
        GameState::new(Arc::new(generate_pool(1, &GeneratorParams::default())), 3).unwrap()
    }

    #[test]
    fn constructed_layout() {
        let mut s = constructed_state();
        let obs = encode_constructed(&s, 0).unwrap();
        assert_eq!(obs.values.len(), 2040);
        assert!(obs.values[PICKS_OFFSET..].iter().all(|&v| v == 0.0));
        for block in obs.values[..PICKS_OFFSET].chunks(CARD_FEATURES) {
            assert_eq!(block[..4].iter().sum::<f32>(), 1.0);
        }
        s.apply_action(3).unwrap();
        s.apply_action(5).unwrap();
        s.apply_action(3).unwrap();
        let obs = encode_constructed(&s, 0).unwrap();
        assert_eq!(obs.values[PICKS_OFFSET + 3], 1.0);
        // Player 2 only sees its own picks.
        let obs = encode_constructed(&s, 1).unwrap();
        assert_eq!(obs.values[PICKS_OFFSET + 3], 0.0);
        assert_eq!(obs.values[PICKS_OFFSET + 5], 0.5);
    }

    #[test]
    fn wrong_phase_is_rejected() {
        let s = constructed_state();
        assert!(matches!(encode_battle(&s, 0), Err(EngineError::Phase { .. })));
    }

    #[test]
    fn layout_reference_mentions_lengths() {
        let r = layout_reference();
        assert!(r.contains("constructed[2040]"));
        assert!(r.contains("battle[244]"));
    }
}
