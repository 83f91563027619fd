use std::fmt;

use serde::{Deserialize, Serialize};

use super::EngineError;

/// Creature keyword flags, one bit each in `BCDGLW` order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Keywords(u8);

impl Keywords {
    pub const BREAKTHROUGH: Keywords = Keywords(1 << 0);
    pub const CHARGE: Keywords = Keywords(1 << 1);
    pub const DRAIN: Keywords = Keywords(1 << 2);
    pub const GUARD: Keywords = Keywords(1 << 3);
    pub const LETHAL: Keywords = Keywords(1 << 4);
    pub const WARD: Keywords = Keywords(1 << 5);

    pub const ALL: [Keywords; 6] = [
        Self::BREAKTHROUGH,
        Self::CHARGE,
        Self::DRAIN,
        Self::GUARD,
        Self::LETHAL,
        Self::WARD,
    ];
    const LETTERS: [char; 6] = ['B', 'C', 'D', 'G', 'L', 'W'];

    pub const fn empty() -> Self {
        Keywords(0)
    }

    pub const fn bits(self) -> u8 {
        self.0
    }

    pub fn from_bits(bits: u8) -> Self {
        Keywords(bits & 0b11_1111)
    }

    pub fn contains(self, other: Keywords) -> bool {
        self.0 & other.0 == other.0 && other.0 != 0
    }

    pub fn insert(&mut self, other: Keywords) {
        self.0 |= other.0;
    }

    pub fn remove(&mut self, other: Keywords) {
        self.0 &= !other.0;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Parses the 6-letter flag string used by pool files, e.g. `"B--G-W"`.
    pub fn parse(flags: &str) -> Result<Self, EngineError> {
        let chars: Vec<char> = flags.chars().collect();
        if chars.len() != 6 {
            return Err(EngineError::InvalidCard(format!("keyword string {flags:?} must have 6 characters")));
        }
        let mut bits = 0u8;
        for (i, (&c, &letter)) in chars.iter().zip(Self::LETTERS.iter()).enumerate() {
            if c == letter {
                bits |= 1 << i;
            } else if c != '-' {
                return Err(EngineError::InvalidCard(format!(
                    "keyword string {flags:?}: position {i} must be '{letter}' or '-'"
                )));
            }
        }
        Ok(Keywords(bits))
    }
}

impl fmt::Display for Keywords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, letter) in Self::LETTERS.iter().enumerate() {
            if self.0 & (1 << i) != 0 {
                write!(f, "{letter}")?;
            } else {
                write!(f, "-")?;
            }
        }
        Ok(())
    }
}

impl Serialize for Keywords {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Keywords {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Keywords::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CardKind {
    Creature,
    Green,
    Red,
    Blue,
}

impl CardKind {
    pub fn index(self) -> usize {
        match self {
            CardKind::Creature => 0,
            CardKind::Green => 1,
            CardKind::Red => 2,
            CardKind::Blue => 3,
        }
    }

    pub fn is_item(self) -> bool {
        self != CardKind::Creature
    }
}

/// A card definition. Item cards carry signed stat deltas in `attack`/`defense`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Card {
    pub id: u8,
    pub kind: CardKind,
    pub cost: i32,
    pub attack: i32,
    pub defense: i32,
    pub keywords: Keywords,
    pub player_hp: i32,
    pub opponent_hp: i32,
    pub card_draw: i32,
}

impl Card {
    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |msg: &str| Err(EngineError::InvalidCard(format!("card {}: {msg}", self.id)));
        if self.cost < 0 {
            return bad("negative cost");
        }
        if self.card_draw < 0 {
            return bad("negative card_draw");
        }
        if self.opponent_hp > 0 {
            return bad("opponent_hp must be <= 0");
        }
        match self.kind {
            CardKind::Creature => {
                if self.defense < 1 {
                    return bad("creature defense must be >= 1");
                }
                if self.attack < 0 {
                    return bad("creature attack must be >= 0");
                }
            }
            CardKind::Green => {
                if self.attack < 0 || self.defense < 0 {
                    return bad("green item deltas must be >= 0");
                }
            }
            CardKind::Red => {
                if self.attack > 0 || self.defense > 0 {
                    return bad("red item deltas must be <= 0");
                }
            }
            CardKind::Blue => {
                if self.defense > 0 {
                    return bad("blue item defense delta must be <= 0");
                }
            }
        }
        Ok(())
    }
}

/// One procedurally generated set of exactly 120 cards.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CardPool {
    pub pool_seed: u64,
    pub cards: Vec<Card>,
}

impl CardPool {
    /// Checks size, id ordering and every card invariant.
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.cards.len() != super::POOL_SIZE {
            return Err(EngineError::InvalidPool(self.cards.len()));
        }
        for (i, card) in self.cards.iter().enumerate() {
            if card.id as usize != i {
                return Err(EngineError::InvalidCard(format!("card at position {i} has id {}", card.id)));
            }
            card.validate()?;
        }
        Ok(())
    }

    pub fn card(&self, id: u8) -> &Card {
        &self.cards[id as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keyword_strings_round_trip() {
        let mut k = Keywords::empty();
        k.insert(Keywords::BREAKTHROUGH);
        k.insert(Keywords::GUARD);
        k.insert(Keywords::WARD);
        assert_eq!(k.to_string(), "B--G-W");
        assert_eq!(Keywords::parse("B--G-W").unwrap(), k);
        assert_eq!(Keywords::parse("------").unwrap(), Keywords::empty());
        assert!(Keywords::parse("X-----").is_err());
        assert!(Keywords::parse("BCDGL").is_err());
        assert!(Keywords::parse("CBDGLW").is_err());
    }

    #[test]
    fn creature_needs_positive_defense() {
        let card = Card {
            id: 0,
            kind: CardKind::Creature,
            cost: 1,
            attack: 1,
            defense: 0,
            keywords: Keywords::empty(),
            player_hp: 0,
            opponent_hp: 0,
            card_draw: 0,
        };
        assert!(card.validate().is_err());
        let red = Card { kind: CardKind::Red, attack: 1, defense: 0, ..card.clone() };
        assert!(red.validate().is_err());
        let ok = Card { defense: 2, ..card };
        ok.validate().unwrap();
    }
}
