//! Flat action codes.
//!
//! Battle layout (145 codes):
//!
//! | codes     | action                                   |
//! |-----------|------------------------------------------|
//! | 0         | Pass                                     |
//! | 1..=16    | Summon(hand slot 0..8, lane 0..2)        |
//! | 17..=120  | Use(hand slot 0..8, target 0..13)        |
//! | 121..=144 | Attack(attacker 0..6, target 0..4)       |
//!
//! All blocks are row-major. Constructed codes 0..120 are card ids.

use super::{EngineError, BATTLE_ACTIONS, CONSTRUCTED_ACTIONS, LANES, MAX_HAND};

pub const SUMMON_BASE: usize = 1;
pub const USE_BASE: usize = SUMMON_BASE + MAX_HAND * LANES;
pub const USE_TARGETS: usize = 13;
pub const ATTACK_BASE: usize = USE_BASE + MAX_HAND * USE_TARGETS;
pub const ATTACK_TARGETS: usize = 4;
pub const ATTACKER_SLOTS: usize = 6;

/// Use target meaning face of the opponent.
pub const TARGET_OPPONENT_FACE: u8 = 12;
/// Attack target meaning face of the opponent.
pub const ATTACK_FACE: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Pass,
    Pick(u8),
    Summon { slot: u8, lane: u8 },
    /// Targets 0..6 are own creatures (lane-major), 6..12 enemy creatures, 12 the enemy face.
    Use { slot: u8, target: u8 },
    /// Attacker is an own creature slot (lane-major); targets 0..3 are enemy creatures in the
    /// attacker's lane, 3 is the enemy face.
    Attack { attacker: u8, target: u8 },
}

impl Action {
    pub fn decode_battle(index: usize) -> Result<Action, EngineError> {
        const _: () = assert!(ATTACK_BASE + ATTACKER_SLOTS * ATTACK_TARGETS == BATTLE_ACTIONS);
        match index {
            0 => Ok(Action::Pass),
            i if i < USE_BASE => {
                let k = i - SUMMON_BASE;
                Ok(Action::Summon { slot: (k / LANES) as u8, lane: (k % LANES) as u8 })
            }
            i if i < ATTACK_BASE => {
                let k = i - USE_BASE;
                Ok(Action::Use { slot: (k / USE_TARGETS) as u8, target: (k % USE_TARGETS) as u8 })
            }
            i if i < BATTLE_ACTIONS => {
                let k = i - ATTACK_BASE;
                Ok(Action::Attack {
                    attacker: (k / ATTACK_TARGETS) as u8,
                    target: (k % ATTACK_TARGETS) as u8,
                })
            }
            i => Err(EngineError::Decode(i)),
        }
    }

    pub fn decode_constructed(index: usize) -> Result<Action, EngineError> {
        if index < CONSTRUCTED_ACTIONS {
            Ok(Action::Pick(index as u8))
        } else {
            Err(EngineError::Decode(index))
        }
    }

    /// Flat code of this action in its stage's layout.
    pub fn encode(self) -> usize {
        match self {
            Action::Pass => 0,
            Action::Pick(card) => card as usize,
            Action::Summon { slot, lane } => SUMMON_BASE + slot as usize * LANES + lane as usize,
            Action::Use { slot, target } => USE_BASE + slot as usize * USE_TARGETS + target as usize,
            Action::Attack { attacker, target } => {
                ATTACK_BASE + attacker as usize * ATTACK_TARGETS + target as usize
            }
        }
    }
}
