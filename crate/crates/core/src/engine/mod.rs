//! Deterministic rules engine for the two-stage card game.
//!
//! A [`GameState`] moves through `Constructed → Battle → Finished`. Every transition goes through
//! [`GameState::apply_action`], which validates the flat action code before touching the state, so
//! a failed call leaves the state unchanged. All randomness (deck shuffles) comes from the
//! state-owned generator seeded in [`GameState::new`].

mod action;
mod card;
mod rules;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use action::*;
pub use card::{Card, CardKind, CardPool, Keywords};

pub const POOL_SIZE: usize = 120;
pub const DECK_SIZE: usize = 30;
pub const MAX_COPIES: u8 = 2;
pub const MAX_HAND: usize = 8;
pub const LANES: usize = 2;
pub const LANE_CAPACITY: usize = 3;
pub const MAX_ROUNDS: u32 = 50;
pub const STARTING_HEALTH: i32 = 30;
pub const MAX_MANA: i32 = 12;
pub const OPENING_HAND: [usize; 2] = [4, 5];
pub const CONSTRUCTED_ACTIONS: usize = 120;
pub const BATTLE_ACTIONS: usize = 145;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid pool: expected {POOL_SIZE} cards, got {0}")]
    InvalidPool(usize),
    #[error("invalid card: {0}")]
    InvalidCard(String),
    #[error("operation requires phase {expected:?}, game is in {found:?}")]
    Phase { expected: Phase, found: Phase },
    #[error("constructed stage incomplete: {0} of {DECK_SIZE} rounds played")]
    ConstructedIncomplete(u32),
    #[error("player {player} is not the active player ({active})")]
    NotYourTurn { player: usize, active: usize },
    #[error("illegal action {0}")]
    IllegalAction(usize),
    #[error("action code {0} out of range")]
    Decode(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Constructed,
    Battle,
    Finished,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Outcome {
    P1Win,
    P2Win,
    Draw,
}

impl Outcome {
    /// Terminal reward pair `(player 1, player 2)`.
    pub fn rewards(self) -> [i32; 2] {
        match self {
            Outcome::P1Win => [1, -1],
            Outcome::P2Win => [-1, 1],
            Outcome::Draw => [0, 0],
        }
    }

    pub fn winner(self) -> Option<usize> {
        match self {
            Outcome::P1Win => Some(0),
            Outcome::P2Win => Some(1),
            Outcome::Draw => None,
        }
    }

    pub fn win_for(player: usize) -> Outcome {
        if player == 0 {
            Outcome::P1Win
        } else {
            Outcome::P2Win
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CreatureInstance {
    pub instance_id: u32,
    pub card_id: u8,
    pub attack: i32,
    pub defense: i32,
    pub keywords: Keywords,
    pub can_attack: bool,
    pub has_attacked_this_turn: bool,
}

impl CreatureInstance {
    /// Whether this creature may be declared as an attacker right now.
    pub fn ready(&self) -> bool {
        self.can_attack && !self.has_attacked_this_turn && self.attack > 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PlayerState {
    pub health: i32,
    pub mana_max: i32,
    pub mana_current: i32,
    /// Top of the deck is the last element.
    pub deck: Vec<u8>,
    pub hand: Vec<u8>,
    pub lanes: [Vec<CreatureInstance>; LANES],
    /// Copies picked per card id during the constructed stage.
    pub picks: Vec<u8>,
    pub missed_draws: i32,
    /// Extra cards to draw at the start of this player's next turn.
    pub pending_draws: i32,
    pub turns_started: i32,
}

impl PlayerState {
    fn new() -> Self {
        PlayerState {
            health: STARTING_HEALTH,
            mana_max: 0,
            mana_current: 0,
            deck: Vec::new(),
            hand: Vec::new(),
            lanes: [Vec::new(), Vec::new()],
            picks: vec![0; POOL_SIZE],
            missed_draws: 0,
            pending_draws: 0,
            turns_started: 0,
        }
    }

    pub fn total_picks(&self) -> usize {
        self.picks.iter().map(|&c| c as usize).sum()
    }

    /// Creature at a lane-major slot `0..6`.
    pub fn creature(&self, slot: usize) -> Option<&CreatureInstance> {
        self.lanes.get(slot / LANE_CAPACITY)?.get(slot % LANE_CAPACITY)
    }

    pub fn board_size(&self) -> usize {
        self.lanes.iter().map(Vec::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub phase: Phase,
    pub pool: Arc<CardPool>,
    pub players: [PlayerState; 2],
    pub active_player: usize,
    /// Completed constructed rounds (both players picked).
    pub constructed_turn: u32,
    pub battle_round: u32,
    pub rng: ChaCha8Rng,
    pub outcome: Option<Outcome>,
    next_instance_id: u32,
}

impl GameState {
    pub fn new(pool: Arc<CardPool>, seed: u64) -> Result<GameState, EngineError> {
        if pool.cards.len() != POOL_SIZE {
            return Err(EngineError::InvalidPool(pool.cards.len()));
        }
        Ok(GameState {
            phase: Phase::Constructed,
            pool,
            players: [PlayerState::new(), PlayerState::new()],
            active_player: 0,
            constructed_turn: 0,
            battle_round: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            outcome: None,
            next_instance_id: 0,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.phase == Phase::Finished
    }

    /// Number of flat codes in the current stage's action space.
    pub fn action_space(&self) -> usize {
        match self.phase {
            Phase::Constructed => CONSTRUCTED_ACTIONS,
            _ => BATTLE_ACTIONS,
        }
    }

    pub fn decode(&self, index: usize) -> Result<Action, EngineError> {
        match self.phase {
            Phase::Constructed => Action::decode_constructed(index),
            _ => Action::decode_battle(index),
        }
    }

    /// SHA-256 over every rule-relevant field, including the generator position.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(self.pool.pool_seed.to_le_bytes());
        h.update([self.phase as u8, self.active_player as u8]);
        h.update(self.constructed_turn.to_le_bytes());
        h.update(self.battle_round.to_le_bytes());
        h.update(self.next_instance_id.to_le_bytes());
        h.update([match self.outcome {
            None => 0u8,
            Some(Outcome::P1Win) => 1,
            Some(Outcome::P2Win) => 2,
            Some(Outcome::Draw) => 3,
        }]);
        h.update(self.rng.get_seed());
        h.update(self.rng.get_stream().to_le_bytes());
        h.update(self.rng.get_word_pos().to_le_bytes());
        for p in &self.players {
            for v in [p.health, p.mana_max, p.mana_current, p.missed_draws, p.pending_draws, p.turns_started] {
                h.update(v.to_le_bytes());
            }
            for list in [&p.deck, &p.hand, &p.picks] {
                h.update((list.len() as u32).to_le_bytes());
                h.update(list);
            }
            for lane in &p.lanes {
                h.update((lane.len() as u32).to_le_bytes());
                for c in lane {
                    h.update(c.instance_id.to_le_bytes());
                    h.update([c.card_id, c.keywords.bits(), c.can_attack as u8, c.has_attacked_this_turn as u8]);
                    h.update(c.attack.to_le_bytes());
                    h.update(c.defense.to_le_bytes());
                }
            }
        }
        let out = h.finalize();
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&out);
        digest
    }
}
