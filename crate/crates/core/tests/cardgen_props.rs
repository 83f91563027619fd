use locm_core::cardgen::{generate_pool, registry, CardgenError, GeneratorParams, PoolRegistry};
use locm_core::engine::{CardKind, CardPool, Keywords, POOL_SIZE};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// |observed - expected| within `k` binomial standard deviations.
fn within_sigma(hits: usize, n: usize, p: f64, k: f64) -> bool {
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    (hits as f64 - n as f64 * p).abs() <= k * sd
}

#[test]
fn monte_carlo_matches_declared_distributions() {
    let params = GeneratorParams::default();
    let cards: Vec<_> = (0..200u64).flat_map(|s| generate_pool(s, &params).cards).collect();
    let n = cards.len();
    for (kind, p) in [(CardKind::Creature, 0.7), (CardKind::Green, 0.1), (CardKind::Red, 0.1), (CardKind::Blue, 0.1)] {
        let hits = cards.iter().filter(|c| c.kind == kind).count();
        assert!(within_sigma(hits, n, p, 4.0), "{kind:?}: {hits} of {n}");
    }
    for cost in 0..=12 {
        let hits = cards.iter().filter(|c| c.cost == cost).count();
        assert!(within_sigma(hits, n, 1.0 / 13.0, 4.0), "cost {cost}: {hits}");
    }
    for k in Keywords::ALL {
        let hits = cards.iter().filter(|c| c.keywords.contains(k)).count();
        assert!(within_sigma(hits, n, 0.1, 4.0), "{k:?}: {hits}");
    }
    for (name, hits) in [
        ("player_hp", cards.iter().filter(|c| c.player_hp != 0).count()),
        ("opponent_hp", cards.iter().filter(|c| c.opponent_hp != 0).count()),
        ("card_draw", cards.iter().filter(|c| c.card_draw != 0).count()),
    ] {
        assert!(within_sigma(hits, n, 0.1, 4.0), "{name}: {hits}");
    }
}

#[test]
fn registry_prefix_and_uniform_sampling() {
    let small = registry(32).unwrap();
    let big = registry(64).unwrap();
    for (a, b) in small.pools().iter().zip(big.pools()) {
        assert_eq!(a, b);
    }
    for (i, p) in small.pools().iter().enumerate() {
        assert_eq!(p.pool_seed, i as u64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut counts = [0usize; 32];
    for _ in 0..10_000 {
        counts[small.sample(&mut rng).pool_seed as usize] += 1;
    }
    for (i, &c) in counts.iter().enumerate() {
        assert!(within_sigma(c, 10_000, 1.0 / 32.0, 4.0), "pool {i}: {c}");
    }
    assert!(matches!(registry(0), Err(CardgenError::InvalidSize)));
}

#[test]
fn pool_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pool = generate_pool(5, &GeneratorParams::default());
    let path = dir.path().join("pool.json");
    pool.save(&path).unwrap();
    assert_eq!(CardPool::load(5, &path).unwrap(), pool);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"keywords\""));
}

proptest! {
    #[test]
    fn generated_cards_satisfy_invariants(seed in any::<u64>()) {
        let pool = generate_pool(seed, &GeneratorParams::default());
        prop_assert_eq!(pool.cards.len(), POOL_SIZE);
        prop_assert!(pool.validate().is_ok());
        for (i, c) in pool.cards.iter().enumerate() {
            prop_assert_eq!(c.id as usize, i);
            prop_assert!(c.validate().is_ok());
            prop_assert!((0..=12).contains(&c.cost));
            prop_assert!(c.player_hp >= 0 && c.opponent_hp <= 0 && c.card_draw >= 0);
            match c.kind {
                CardKind::Creature => prop_assert!(c.defense >= 1 && c.attack >= 0),
                CardKind::Green => prop_assert!(c.attack >= 0 && c.defense >= 0),
                CardKind::Red => prop_assert!(c.attack <= 0 && c.defense <= 0),
                CardKind::Blue => prop_assert!(c.attack == 0 && c.defense <= 0),
            }
        }
    }

    #[test]
    fn pools_are_pure_functions_of_seed_and_params(seed in any::<u64>(), kp in 0.0f64..1.0) {
        let p = GeneratorParams { keyword_prob: kp, ..Default::default() };
        prop_assert_eq!(generate_pool(seed, &p), generate_pool(seed, &p));
        let r = PoolRegistry::fresh(p.clone()).unwrap();
        prop_assert_eq!(&*r.pool_for(seed), &generate_pool(seed, &p));
    }
}
