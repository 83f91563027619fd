//! Helpers shared by the integration suites.
#![allow(dead_code)]

use std::sync::Arc;

use locm_core::cardgen::{generate_pool, GeneratorParams};
use locm_core::engine::*;
use locm_core::learn::{DenseNet, Gradients, Head};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const OBS: usize = 244;
pub const ACTIONS: usize = 145;
pub const ROWS: usize = 6;
pub const FD_STEP: f64 = 1e-4;

pub fn pool(seed: u64) -> Arc<CardPool> {
    Arc::new(generate_pool(seed, &GeneratorParams::default()))
}

pub fn random_legal(state: &GameState, rng: &mut ChaCha8Rng) -> usize {
    let mask = state.legal_mask(state.active_player).unwrap();
    let legal: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
    legal[rng.random_range(0..legal.len())]
}

/// Plays random legal moves; returns every battle state where a decision was due.
pub fn battle_states(seed: u64) -> Vec<GameState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = GameState::new(pool(seed % 16), seed).unwrap();
    let mut out = Vec::new();
    while !s.is_finished() {
        if s.phase == Phase::Battle {
            out.push(s.clone());
        }
        let a = random_legal(&s, &mut rng);
        s.apply_action(a).unwrap();
    }
    out
}

/// Legality written directly from the rules against public state.
pub fn oracle(s: &GameState, code: usize) -> bool {
    let me = &s.players[s.active_player];
    let opp = &s.players[1 - s.active_player];
    let cost_ok = |slot: usize| me.hand.get(slot).map(|&id| (s.pool.card(id), s.pool.card(id).cost <= me.mana_current));
    if code == 0 {
        return true;
    }
    if code < USE_BASE {
        let (slot, lane) = ((code - SUMMON_BASE) / LANES, (code - SUMMON_BASE) % LANES);
        return matches!(cost_ok(slot), Some((c, true)) if c.kind == CardKind::Creature && me.lanes[lane].len() < LANE_CAPACITY);
    }
    if code < ATTACK_BASE {
        let (slot, target) = ((code - USE_BASE) / USE_TARGETS, (code - USE_BASE) % USE_TARGETS);
        let Some((card, true)) = cost_ok(slot) else { return false };
        let own = target < 6 && me.lanes[target / 3].len() > target % 3;
        let enemy = (6..12).contains(&target) && opp.lanes[(target - 6) / 3].len() > (target - 6) % 3;
        return match card.kind {
            CardKind::Creature => false,
            CardKind::Green => own,
            CardKind::Red => enemy,
            CardKind::Blue => enemy || target == 12,
        };
    }
    let (attacker, target) = ((code - ATTACK_BASE) / ATTACK_TARGETS, (code - ATTACK_BASE) % ATTACK_TARGETS);
    let lane = attacker / 3;
    let Some(c) = me.lanes[lane].get(attacker % 3) else { return false };
    if !c.can_attack || c.has_attacked_this_turn || c.attack <= 0 {
        return false;
    }
    let guards: Vec<bool> = opp.lanes[lane].iter().map(|d| d.keywords.contains(Keywords::GUARD)).collect();
    let guarded = guards.contains(&true);
    if target == 3 {
        !guarded
    } else {
        target < guards.len() && (!guarded || guards[target])
    }
}

/// Checks mask, try-apply and the rule oracle on `count` states; returns the number checked.
pub fn check_legality(count: usize) -> Result<usize, String> {
    let mut checked = 0usize;
    let mut seed = 0;
    while checked < count {
        for s in battle_states(seed) {
            let mask = s.legal_mask(s.active_player).unwrap();
            if mask.len() != BATTLE_ACTIONS {
                return Err(format!("mask length {}", mask.len()));
            }
            for (code, &m) in mask.iter().enumerate() {
                if m != s.clone().apply_action(code).is_ok() {
                    return Err(format!("seed {seed} code {code}: mask vs try-apply"));
                }
                if m != oracle(&s, code) {
                    return Err(format!("seed {seed} code {code}: mask vs rule oracle"));
                }
            }
            checked += 1;
        }
        seed += 1;
    }
    Ok(checked)
}

pub struct Batch {
    pub x: Array2<f64>,
    pub masks: Vec<bool>,
    pub actions: Vec<usize>,
}

pub fn batch(seed: u64) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((ROWS, OBS), |_| rng.random_range(-1.0..1.0));
    let mut masks = vec![false; ROWS * ACTIONS];
    let mut actions = Vec::new();
    for r in 0..ROWS {
        let row = &mut masks[r * ACTIONS..(r + 1) * ACTIONS];
        for m in row.iter_mut() {
            *m = rng.random_bool(0.2);
        }
        row[0] = true;
        let legal: Vec<usize> = (0..ACTIONS).filter(|&j| row[j]).collect();
        actions.push(legal[rng.random_range(0..legal.len())]);
    }
    Batch { x, masks, actions }
}

pub fn net(out: usize, head: Head, seed: u64) -> DenseNet<f64> {
    DenseNet::new(&[OBS, 8, out], head, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Largest relative error between analytic gradients and a fourth-order central difference,
/// over every parameter.
pub fn max_rel_error(net: &DenseNet<f64>, f: impl Fn(&DenseNet<f64>) -> (f64, Gradients<f64>)) -> f64 {
    let analytic = f(net).1.flat();
    let params = net.to_flat();
    let at = |i: usize, d: f64| {
        let mut p = params.clone();
        p[i] += d;
        f(&DenseNet::from_flat(&net.dims, net.head, &p).unwrap()).0
    };
    let h = FD_STEP;
    let mut worst = 0f64;
    for i in 0..params.len() {
        let numeric = (8.0 * (at(i, h) - at(i, -h)) - (at(i, 2.0 * h) - at(i, -2.0 * h))) / (12.0 * h);
        let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}
