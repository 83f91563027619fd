use std::time::Duration;

use locm_core::agents::{Agent, AgentSpec, ExternalSpec, GreedyAgent, RandomAgent};
use locm_core::cardgen::registry;
use locm_core::eval::{ci95, play_match, run_matches, MatchPlan};
use locm_core::encoding::encode;
use locm_core::engine::GameState;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const STUB: &str = env!("CARGO_BIN_EXE_locm-stub-agent");

fn stub(args: &[&str]) -> AgentSpec {
    AgentSpec::External(ExternalSpec::new(STUB, args.iter().map(|s| s.to_string()).collect()))
}

fn plan(reg: &locm_core::cardgen::PoolRegistry) -> MatchPlan<'_> {
    MatchPlan { registry: reg, seed: 11, drafter: None, workers: 1 }
}

#[test]
fn wilson_interval_reference_value() {
    // Computed independently: p = 0.424, n = 1000, z = 1.959964.
    let (lo, hi) = ci95(424.0, 1000).unwrap();
    assert!((lo - 0.393718446).abs() < 1e-8, "{lo}");
    assert!((hi - 0.454863221).abs() < 1e-8, "{hi}");
}

#[test]
fn random_mirror_interval_contains_half() {
    let reg = registry(32).unwrap();
    let r = run_matches(&AgentSpec::Random, &AgentSpec::Random, 2000, &plan(&reg)).unwrap();
    assert_eq!(r.matches, 2000);
    assert_eq!(r.wins + r.losses + r.draws, 2000);
    assert!(r.ci95.0 <= 0.5 && 0.5 <= r.ci95.1, "{:?}", r.ci95);
    assert_eq!(r.per_seat[0].matches, 1000);
}

#[test]
fn greedy_beats_random_and_is_deterministic() {
    let reg = registry(32).unwrap();
    let a = run_matches(&AgentSpec::Greedy, &AgentSpec::Random, 200, &plan(&reg)).unwrap();
    let b = run_matches(&AgentSpec::Greedy, &AgentSpec::Random, 200, &plan(&reg)).unwrap();
    assert_eq!(a, b);
    assert!(a.win_rate > 0.8, "{}", a.win_rate);
}

#[test]
fn stub_first_legal_completes_matches() {
    let reg = registry(8).unwrap();
    let r = run_matches(&stub(&["first-legal"]), &AgentSpec::Greedy, 4, &plan(&reg)).unwrap();
    assert_eq!(r.forfeits, 0);
    assert_eq!(r.matches, 4);
}

#[test]
fn stub_greedy_matches_builtin_greedy() {
    let reg = registry(8).unwrap();
    let internal = run_matches(&AgentSpec::Greedy, &AgentSpec::Random, 6, &plan(&reg)).unwrap();
    let external = run_matches(&stub(&["greedy"]), &AgentSpec::Random, 6, &plan(&reg)).unwrap();
    assert_eq!((internal.wins, internal.losses, internal.draws), (external.wins, external.losses, external.draws));
}

#[test]
fn crashing_and_illegal_stubs_forfeit() {
    let reg = registry(8).unwrap();
    for args in [&["die-after", "3"][..], &["illegal"][..]] {
        let r = run_matches(&stub(args), &AgentSpec::Greedy, 2, &plan(&reg)).unwrap();
        assert_eq!(r.forfeits, 2, "{args:?}");
        assert_eq!(r.losses, 2);
    }
}

#[test]
fn slow_stub_times_out() {
    let reg = registry(8).unwrap();
    let mut spec = ExternalSpec::new(STUB, vec!["slow".into(), "500".into()]);
    spec.timeout = Duration::from_millis(50);
    let r = run_matches(&AgentSpec::External(spec), &AgentSpec::Greedy, 1, &plan(&reg)).unwrap();
    assert_eq!(r.forfeits, 1);
}

#[test]
fn missing_program_is_an_external_error() {
    let err = AgentSpec::parse("external:/nonexistent/agent").unwrap().build().err().unwrap();
    assert!(err.is_external());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn builtin_agents_only_choose_legal_actions(seed in any::<u64>()) {
        let reg = registry(16).unwrap();
        let mut state = GameState::new(reg.pool_for(seed), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut g, mut r) = (GreedyAgent, RandomAgent);
        while !state.is_finished() {
            let p = state.active_player;
            let obs = encode(&state, p).unwrap();
            let mask = state.legal_mask(p).unwrap();
            let a = g.act(&obs, &mask, &mut rng).unwrap();
            prop_assert!(mask[a]);
            prop_assert_eq!(g.act(&obs, &mask, &mut rng).unwrap(), a);
            let b = r.act(&obs, &mask, &mut rng).unwrap();
            prop_assert!(mask[b]);
            state.apply_action(if p == 0 { a } else { b }).unwrap();
        }
    }

    #[test]
    fn play_match_is_reproducible(i in 0u64..64) {
        let reg = registry(16).unwrap();
        let (setup, _) = locm_core::eval::mirrored_setup(&reg, 3, i);
        let run = || {
            let (mut a, mut b) = (GreedyAgent, RandomAgent);
            play_match([&mut a, &mut b], None, &setup, None).unwrap()
        };
        prop_assert_eq!(run(), run());
    }
}
