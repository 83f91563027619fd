//! Seeded procedural generation of card pools, plus fixed pool registries.
//!
//! Generation is a pure function of `(pool_seed, params)`. No balance constraint is applied, so
//! cheap cards with strong keywords show up from time to time.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Card, CardKind, CardPool, EngineError, Keywords, POOL_SIZE};

#[derive(Debug, Error)]
pub enum CardgenError {
    #[error("registry size must be at least 1")]
    InvalidSize,
    #[error("invalid generator params: {0}")]
    InvalidParams(String),
    #[error("pool file: {0}")]
    Format(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Distribution knobs for [`generate_pool`]. Every field can be overridden from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorParams {
    /// Relative weights of creature, green, red and blue cards.
    pub kind_weights: [f64; 4],
    pub max_cost: i32,
    /// Stat budget is `budget_per_cost * cost + budget_base`, scaled by a uniform factor in
    /// `[1 - budget_noise, 1 + budget_noise]`.
    pub budget_per_cost: f64,
    pub budget_base: f64,
    pub budget_noise: f64,
    pub keyword_prob: f64,
    /// Probability that each of player_hp / opponent_hp / card_draw is nonzero.
    pub bonus_prob: f64,
    pub max_player_hp: i32,
    pub max_opponent_damage: i32,
    pub max_card_draw: i32,
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            kind_weights: [0.7, 0.1, 0.1, 0.1],
            max_cost: 12,
            budget_per_cost: 2.0,
            budget_base: 1.0,
            budget_noise: 0.5,
            keyword_prob: 0.1,
            bonus_prob: 0.1,
            max_player_hp: 5,
            max_opponent_damage: 5,
            max_card_draw: 2,
        }
    }
}

impl GeneratorParams {
    pub fn validate(&self) -> Result<(), CardgenError> {
        let bad = |m: &str| Err(CardgenError::InvalidParams(m.to_string()));
        if self.kind_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || self.kind_weights.iter().sum::<f64>() <= 0.0 {
            return bad("kind_weights must be nonnegative with a positive sum");
        }
        for (name, p) in [("keyword_prob", self.keyword_prob), ("bonus_prob", self.bonus_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.budget_noise) {
            return bad("budget_noise must lie in [0, 1)");
        }
        if self.max_cost < 0 || self.max_player_hp < 1 || self.max_opponent_damage < 1 || self.max_card_draw < 1 {
            return bad("max_cost must be >= 0 and bonus maxima >= 1");
        }
        if self.budget_per_cost < 0.0 || self.budget_base < 0.0 {
            return bad("budget terms must be nonnegative");
        }
        Ok(())
    }
}

fn sample_kind(rng: &mut ChaCha8Rng, weights: &[f64; 4]) -> CardKind {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (w, kind) in weights.iter().zip([CardKind::Creature, CardKind::Green, CardKind::Red, CardKind::Blue]) {
        if u < *w {
            return kind;
        }
        u -= w;
    }
    CardKind::Creature
}

fn generate_card(id: u8, rng: &mut ChaCha8Rng, params: &GeneratorParams) -> Card {
    let kind = sample_kind(rng, &params.kind_weights);
    let cost = rng.random_range(0..=params.max_cost);
    let noise = 1.0 + params.budget_noise * (2.0 * rng.random::<f64>() - 1.0);
    let budget = ((params.budget_per_cost * cost as f64 + params.budget_base) * noise).round().max(0.0) as i32;
    let mut keywords = Keywords::empty();
    for k in Keywords::ALL {
        if rng.random_bool(params.keyword_prob) {
            keywords.insert(k);
        }
    }
    let mut bonus = |max: i32| if rng.random_bool(params.bonus_prob) { rng.random_range(1..=max) } else { 0 };
    let player_hp = bonus(params.max_player_hp);
    let opponent_hp = -bonus(params.max_opponent_damage);
    let card_draw = bonus(params.max_card_draw);

    let share: f64 = rng.random();
    let (attack, defense) = match kind {
        CardKind::Creature => {
            let budget = budget.max(1);
            let attack = (budget as f64 * share).round() as i32;
            (attack, (budget - attack).max(1))
        }
        CardKind::Green => {
            let attack = (budget as f64 * share).round() as i32;
            (attack, budget - attack)
        }
        CardKind::Red => {
            let attack = (budget as f64 * share).round() as i32;
            (-attack, -(budget - attack))
        }
        CardKind::Blue => (0, -budget),
    };
    Card { id, kind, cost, attack, defense, keywords, player_hp, opponent_hp, card_draw }
}

pub fn generate_pool(pool_seed: u64, params: &GeneratorParams) -> CardPool {
    let mut rng = ChaCha8Rng::seed_from_u64(pool_seed);
    let cards = (0..POOL_SIZE as u8).map(|id| generate_card(id, &mut rng, params)).collect();
    CardPool { pool_seed, cards }
}

/// Pool file record; keywords are the six-letter `BCDGLW` flag string.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CardRecord {
    id: u8,
    kind: CardKind,
    cost: i32,
    attack: i32,
    defense: i32,
    keywords: Keywords,
    player_hp: i32,
    opponent_hp: i32,
    card_draw: i32,
}

impl CardPool {
    /// Serializes the pool as a JSON array of 120 card records, one per line.
    pub fn to_json(&self) -> String {
        let mut out = String::from("[\n");
        for (i, c) in self.cards.iter().enumerate() {
            let rec = CardRecord {
                id: c.id,
                kind: c.kind,
                cost: c.cost,
                attack: c.attack,
                defense: c.defense,
                keywords: c.keywords,
                player_hp: c.player_hp,
                opponent_hp: c.opponent_hp,
                card_draw: c.card_draw,
            };
            out.push_str("  ");
            out.push_str(&serde_json::to_string(&rec).expect("card record serializes"));
            out.push_str(if i + 1 < self.cards.len() { ",\n" } else { "\n" });
        }
        out.push_str("]\n");
        out
    }

    pub fn from_json(pool_seed: u64, text: &str) -> Result<CardPool, CardgenError> {
        let records: Vec<CardRecord> = serde_json::from_str(text).map_err(|e| CardgenError::Format(e.to_string()))?;
        let cards = records
            .into_iter()
            .map(|r| Card {
                id: r.id,
                kind: r.kind,
                cost: r.cost,
                attack: r.attack,
                defense: r.defense,
                keywords: r.keywords,
                player_hp: r.player_hp,
                opponent_hp: r.opponent_hp,
                card_draw: r.card_draw,
            })
            .collect();
        let pool = CardPool { pool_seed, cards };
        pool.validate()?;
        Ok(pool)
    }

    pub fn save(&self, path: &Path) -> Result<(), CardgenError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(pool_seed: u64, path: &Path) -> Result<CardPool, CardgenError> {
        Self::from_json(pool_seed, &fs::read_to_string(path)?)
    }
}

pub fn pool_file_name(pool_seed: u64) -> String {
    format!("pool_{pool_seed:05}.json")
}

#[derive(Clone, Debug)]
enum PoolSource {
    Fixed(Vec<Arc<CardPool>>),
    Fresh,
}

/// Where episode pools come from: a fixed set generated from seeds `0..size`, or a fresh pool
/// per episode.
#[derive(Clone, Debug)]
pub struct PoolRegistry {
    params: GeneratorParams,
    source: PoolSource,
}

impl PoolRegistry {
    pub fn fixed(size: usize, params: GeneratorParams) -> Result<PoolRegistry, CardgenError> {
        if size == 0 {
            return Err(CardgenError::InvalidSize);
        }
        params.validate()?;
        let pools = (0..size as u64).map(|seed| Arc::new(generate_pool(seed, &params))).collect();
        Ok(PoolRegistry { params, source: PoolSource::Fixed(pools) })
    }

    /// Every episode draws a previously unseen pool seed.
    pub fn fresh(params: GeneratorParams) -> Result<PoolRegistry, CardgenError> {
        params.validate()?;
        Ok(PoolRegistry { params, source: PoolSource::Fresh })
    }

    pub fn params(&self) -> &GeneratorParams {
        &self.params
    }

    /// Number of fixed pools, `None` for a fresh-pool registry.
    pub fn size(&self) -> Option<usize> {
        match &self.source {
            PoolSource::Fixed(p) => Some(p.len()),
            PoolSource::Fresh => None,
        }
    }

    pub fn pools(&self) -> &[Arc<CardPool>] {
        match &self.source {
            PoolSource::Fixed(p) => p,
            PoolSource::Fresh => &[],
        }
    }

    /// Pool for an episode, chosen uniformly by `draw` (a uniformly random 64-bit value).
    pub fn pool_for(&self, draw: u64) -> Arc<CardPool> {
        match &self.source {
            PoolSource::Fixed(pools) => pools[(draw % pools.len() as u64) as usize].clone(),
            PoolSource::Fresh => Arc::new(generate_pool(draw, &self.params)),
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Arc<CardPool> {
        match &self.source {
            PoolSource::Fixed(pools) => pools[rng.random_range(0..pools.len())].clone(),
            PoolSource::Fresh => self.pool_for(rng.random()),
        }
    }
}

pub fn registry(size: usize) -> Result<PoolRegistry, CardgenError> {
    PoolRegistry::fixed(size, GeneratorParams::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_pool() {
        let p = GeneratorParams::default();
        assert_eq!(generate_pool(11, &p), generate_pool(11, &p));
        assert_ne!(generate_pool(11, &p), generate_pool(12, &p));
        assert_eq!(generate_pool(11, &p).to_json(), generate_pool(11, &p).to_json());
    }

    #[test]
    fn pool_zero_has_ordered_ids() {
        let pool = generate_pool(0, &GeneratorParams::default());
        assert_eq!(pool.cards.len(), 120);
        for (i, c) in pool.cards.iter().enumerate() {
            assert_eq!(c.id as usize, i);
        }
        pool.validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let pool = generate_pool(5, &GeneratorParams::default());
        let back = CardPool::from_json(5, &pool.to_json()).unwrap();
        assert_eq!(back, pool);
    }

    #[test]
    fn json_rejects_bad_pools() {
        let pool = generate_pool(5, &GeneratorParams::default());
        let mut short = pool.clone();
        short.cards.pop();
        assert!(matches!(
            CardPool::from_json(5, &short.to_json()),
            Err(CardgenError::Engine(EngineError::InvalidPool(119)))
        ));
        let text = pool.to_json().replacen("\"id\":3,", "\"id\":4,", 1);
        assert!(CardPool::from_json(5, &text).is_err());
        assert!(CardPool::from_json(5, "not json").is_err());
    }

    #[test]
    fn registry_sizes() {
        assert!(matches!(registry(0), Err(CardgenError::InvalidSize)));
        let r = registry(32).unwrap();
        assert_eq!(r.size(), Some(32));
        for (i, p) in r.pools().iter().enumerate() {
            assert_eq!(p.pool_seed, i as u64);
        }
    }

    #[test]
    fn params_validation() {
        let p = GeneratorParams { keyword_prob: 1.5, ..Default::default() };
        assert!(p.validate().is_err());
        let p = GeneratorParams { kind_weights: [0.0; 4], ..Default::default() };
        assert!(PoolRegistry::fixed(4, p).is_err());
        let all_creatures = GeneratorParams { kind_weights: [1.0, 0.0, 0.0, 0.0], ..Default::default() };
        let pool = generate_pool(3, &all_creatures);
        assert!(pool.cards.iter().all(|c| c.kind == CardKind::Creature));
    }
}
