//! Match running, win-rate reports with Wilson intervals, and multi-seed curve aggregation.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::agents::{Agent, AgentError, AgentSpec};
use crate::cardgen::PoolRegistry;
use crate::encoding::{encode, Stage};
use crate::engine::{CardPool, EngineError, GameState, Outcome, Phase};
use crate::{derive_seed, par};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959964;

pub(crate) const POOL_STREAM: u64 = 1;
pub(crate) const GAME_STREAM: u64 = 2;
pub(crate) const AGENT_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot build agent: {0}")]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Seeds and pool for one match.
#[derive(Clone, Debug)]
pub struct MatchSetup {
    pub match_id: u64,
    pub pool: Arc<CardPool>,
    pub game_seed: u64,
    pub agent_seed: u64,
}

/// One recorded battle-stage decision.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub player: u8,
    pub obs: Vec<f32>,
    pub mask: Vec<bool>,
    pub action: u16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub match_id: u64,
    pub pool_seed: u64,
    pub game_seed: u64,
    pub agent_seed: u64,
    pub outcome: Outcome,
    /// Seat that forfeited, if the match ended by an agent fault.
    pub forfeit: Option<usize>,
    pub fault: Option<String>,
    /// Every applied action code, both stages, in order.
    pub actions: Vec<u16>,
    /// Digest of the final engine state.
    pub digest: [u8; 32],
}

/// Plays one match. `drafter`, when given, makes every constructed decision for both seats.
///
/// Agent faults end the match as a loss for the faulting seat; engine errors are bugs and are
/// returned as errors.
pub fn play_match(
    seats: [&mut dyn Agent; 2],
    mut drafter: Option<&mut dyn Agent>,
    setup: &MatchSetup,
    mut record: Option<&mut Vec<Decision>>,
) -> Result<MatchResult, EngineError> {
    let mut state = GameState::new(setup.pool.clone(), setup.game_seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(setup.agent_seed);
    let mut actions = Vec::with_capacity(256);
    let result = |state: &GameState, outcome, forfeit, fault, actions| MatchResult {
        match_id: setup.match_id,
        pool_seed: setup.pool.pool_seed,
        game_seed: setup.game_seed,
        agent_seed: setup.agent_seed,
        outcome,
        forfeit,
        fault,
        actions,
        digest: state.digest(),
    };

    for p in 0..2 {
        if let Err(e) = seats[p].reset(setup.match_id) {
            return Ok(result(&state, Outcome::win_for(1 - p), Some(p), Some(e.to_string()), actions));
        }
    }
    if let Some(d) = drafter.as_deref_mut() {
        if let Err(e) = d.reset(setup.match_id) {
            return Ok(result(&state, Outcome::win_for(1), Some(0), Some(e.to_string()), actions));
        }
    }

    let mut mask = Vec::new();
    while !state.is_finished() {
        let p = state.active_player;
        let obs = encode(&state, p)?;
        mask.resize(state.action_space(), false);
        state.legal_mask_into(p, &mut mask)?;
        let agent: &mut dyn Agent = match (&mut drafter, state.phase) {
            (Some(d), Phase::Constructed) => &mut **d,
            _ => &mut *seats[p],
        };
        let action = match agent.act(&obs, &mask, &mut rng) {
            Ok(a) if a < mask.len() && mask[a] => a,
            Ok(a) => {
                let e = AgentError::IllegalAction(a);
                log::warn!("match {}: seat {p} forfeits: {e}", setup.match_id);
                return Ok(result(&state, Outcome::win_for(1 - p), Some(p), Some(e.to_string()), actions));
            }
            Err(e) => {
                log::warn!("match {}: seat {p} forfeits: {e}", setup.match_id);
                return Ok(result(&state, Outcome::win_for(1 - p), Some(p), Some(e.to_string()), actions));
            }
        };
        if obs.stage == Stage::Battle {
            if let Some(rec) = record.as_deref_mut() {
                rec.push(Decision { player: p as u8, obs: obs.values, mask: mask.clone(), action: action as u16 });
            }
        }
        state.apply_action(action)?;
        actions.push(action as u16);
    }
    let outcome = state.outcome.expect("finished game has an outcome");
    Ok(result(&state, outcome, None, None, actions))
}

/// Match `i` of an evaluation: mirrored pairs share pool and game seed, seats swap.
pub fn mirrored_setup(registry: &PoolRegistry, seed: u64, i: u64) -> (MatchSetup, usize) {
    let pair = i / 2;
    let pool = registry.pool_for(derive_seed(seed, POOL_STREAM, pair));
    let setup = MatchSetup {
        match_id: i,
        pool,
        game_seed: derive_seed(seed, GAME_STREAM, pair),
        agent_seed: derive_seed(seed, AGENT_STREAM, i),
    };
    (setup, (i % 2) as usize)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeatStats {
    pub matches: u64,
    pub wins: u64,
    pub losses: u64,
    pub draws: u64,
}

impl SeatStats {
    pub fn win_rate(&self) -> f64 {
        if self.matches == 0 {
            return 0.0;
        }
        (self.wins as f64 + 0.5 * self.draws as f64) / self.matches as f64
    }

    fn add(&mut self, score: i32) {
        self.matches += 1;
        match score {
            1 => self.wins += 1,
            -1 => self.losses += 1,
            _ => self.draws += 1,
        }
    }
}

/// Results from the perspective of agent A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WinRateReport {
    pub agent: String,
    pub opponent: String,
    pub matches: u64,
    pub wins: u64,
    pub losses: u64,
    pub draws: u64,
    /// Losses caused by agent A faulting.
    pub forfeits: u64,
    /// Wins caused by the opponent faulting.
    pub opponent_forfeits: u64,
    /// Draws count half.
    pub win_rate: f64,
    pub ci95: (f64, f64),
    /// Index 0: A moved first; index 1: A moved second.
    pub per_seat: [SeatStats; 2],
    pub seed: u64,
}

impl WinRateReport {
    pub fn from_results(agent: String, opponent: String, seed: u64, results: &[(MatchResult, usize)]) -> Self {
        let mut per_seat = [SeatStats::default(); 2];
        let (mut forfeits, mut opponent_forfeits) = (0, 0);
        for (r, seat) in results {
            let score = r.outcome.rewards()[*seat];
            per_seat[*seat].add(score);
            match r.forfeit {
                Some(s) if s == *seat => forfeits += 1,
                Some(_) => opponent_forfeits += 1,
                None => {}
            }
        }
        let sum = |f: fn(&SeatStats) -> u64| per_seat.iter().map(f).sum::<u64>();
        let (matches, wins, losses, draws) = (sum(|s| s.matches), sum(|s| s.wins), sum(|s| s.losses), sum(|s| s.draws));
        let score = wins as f64 + 0.5 * draws as f64;
        let win_rate = if matches > 0 { score / matches as f64 } else { 0.0 };
        let ci95 = ci95(score, matches).unwrap_or((0.0, 1.0));
        WinRateReport {
            agent,
            opponent,
            matches,
            wins,
            losses,
            draws,
            forfeits,
            opponent_forfeits,
            win_rate,
            ci95,
            per_seat,
            seed,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "agent\t{}\nopponent\t{}\nseed\t{}", self.agent, self.opponent, self.seed).unwrap();
        writeln!(s, "matches\t{}\nwins\t{}\nlosses\t{}\ndraws\t{}", self.matches, self.wins, self.losses, self.draws).unwrap();
        writeln!(s, "forfeits\t{}\nopponent_forfeits\t{}", self.forfeits, self.opponent_forfeits).unwrap();
        writeln!(s, "win_rate\t{:.4}\nci95_low\t{:.4}\nci95_high\t{:.4}", self.win_rate, self.ci95.0, self.ci95.1).unwrap();
        for (i, seat) in self.per_seat.iter().enumerate() {
            writeln!(s, "seat{}_matches\t{}\nseat{}_win_rate\t{:.4}", i + 1, seat.matches, i + 1, seat.win_rate()).unwrap();
        }
        s
    }
}

struct Players {
    a: Box<dyn Agent>,
    b: Box<dyn Agent>,
    drafter: Option<Box<dyn Agent>>,
}

/// Evaluation options beyond the two agents.
#[derive(Clone, Debug)]
pub struct MatchPlan<'a> {
    pub registry: &'a PoolRegistry,
    pub seed: u64,
    pub drafter: Option<&'a AgentSpec>,
    pub workers: usize,
}

/// Plays `n` matches of `a` against `b` with alternating seats. Deterministic given the seed,
/// independent of the worker count.
pub fn run_matches(a: &AgentSpec, b: &AgentSpec, n: u64, plan: &MatchPlan<'_>) -> Result<WinRateReport, EvalError> {
    let results = run_match_results(a, b, n, plan)?;
    Ok(WinRateReport::from_results(a.name(), b.name(), plan.seed, &results))
}

/// Like [`run_matches`] but returns every match record with agent A's seat.
pub fn run_match_results(
    a: &AgentSpec,
    b: &AgentSpec,
    n: u64,
    plan: &MatchPlan<'_>,
) -> Result<Vec<(MatchResult, usize)>, EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidArgument("match count must be at least 1".into()));
    }
    let init = |_w: usize| -> Result<Players, EvalError> {
        Ok(Players { a: a.build()?, b: b.build()?, drafter: plan.drafter.map(|d| d.build()).transpose()? })
    };
    let results = par::map_with_state(n as usize, plan.workers, init, |pl: &mut Players, i| {
        let (setup, seat) = mirrored_setup(plan.registry, plan.seed, i as u64);
        let seats: [&mut dyn Agent; 2] =
            if seat == 0 { [&mut *pl.a, &mut *pl.b] } else { [&mut *pl.b, &mut *pl.a] };
        let drafter = pl.drafter.as_mut().map(|d| -> &mut dyn Agent { d.as_mut() });
        let r = play_match(seats, drafter, &setup, None);
        if let Ok(res) = &r {
            if res.forfeit.is_some() {
                rebuild_failed(pl, a, b, plan.drafter);
            }
        }
        r.map(|res| (res, seat))
    })?;
    results.into_iter().map(|r| r.map_err(EvalError::from)).collect()
}

/// External agents that faulted are replaced so later matches get a fresh process.
fn rebuild_failed(pl: &mut Players, a: &AgentSpec, b: &AgentSpec, drafter: Option<&AgentSpec>) {
    let rebuild = |slot: &mut Box<dyn Agent>, spec: &AgentSpec| {
        if matches!(spec, AgentSpec::External(_)) {
            match spec.build() {
                Ok(agent) => *slot = agent,
                Err(e) => log::warn!("cannot restart {}: {e}", spec.name()),
            }
        }
    };
    rebuild(&mut pl.a, a);
    rebuild(&mut pl.b, b);
    if let (Some(slot), Some(spec)) = (pl.drafter.as_mut(), drafter) {
        rebuild(slot, spec);
    }
}

/// Wilson score interval for `successes` out of `n` (fractional successes allowed for draws).
pub fn ci95(successes: f64, n: u64) -> Result<(f64, f64), EvalError> {
    wilson(successes, n, Z95)
}

pub fn wilson(successes: f64, n: u64, z: f64) -> Result<(f64, f64), EvalError> {
    if n == 0 {
        return Err(EvalError::InvalidArgument("interval needs at least one trial".into()));
    }
    let nf = n as f64;
    if !(0.0..=nf).contains(&successes) {
        return Err(EvalError::InvalidArgument(format!("{successes} successes out of {n}")));
    }
    let p = successes / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let low = if successes == 0.0 { 0.0 } else { (center - half).max(0.0) };
    let high = if successes == nf { 1.0 } else { (center + half).min(1.0) };
    Ok((low, high))
}

/// One row of an aggregated learning curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u64,
    pub mean: f64,
    /// Student-t 95% interval; `None` when fewer than two runs remain.
    pub ci: Option<(f64, f64)>,
    pub n_runs: usize,
}

/// Averages per-seed curves of `(iteration, value)` rows. Runs that stopped early simply have no
/// rows past their end, so `n_runs` drops there.
pub fn aggregate_curves(runs: &[Vec<(u64, f64)>]) -> Vec<CurvePoint> {
    let mut iterations: Vec<u64> = runs.iter().flat_map(|r| r.iter().map(|p| p.0)).collect();
    iterations.sort_unstable();
    iterations.dedup();
    iterations
        .into_iter()
        .map(|it| {
            let vals: Vec<f64> = runs.iter().filter_map(|r| r.iter().find(|p| p.0 == it).map(|p| p.1)).collect();
            let n = vals.len();
            let mean = vals.iter().sum::<f64>() / n as f64;
            let ci = (n >= 2).then(|| {
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                let t = StudentsT::new(0.0, 1.0, (n - 1) as f64).expect("valid dof").inverse_cdf(0.975);
                let half = t * (var / n as f64).sqrt();
                (mean - half, mean + half)
            });
            CurvePoint { iteration: it, mean, ci, n_runs: n }
        })
        .collect()
}

/// Tabular text with columns `iteration win_rate n_runs ci_low ci_high`; missing bounds are `nan`.
pub fn curve_table(points: &[CurvePoint]) -> String {
    let mut s = String::from("iteration\twin_rate\tn_runs\tci_low\tci_high\n");
    for p in points {
        let (lo, hi) = p.ci.unwrap_or((f64::NAN, f64::NAN));
        writeln!(s, "{}\t{:.6}\t{}\t{:.6}\t{:.6}", p.iteration, p.mean, p.n_runs, lo, hi).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cardgen::registry;

    #[test]
    fn wilson_boundaries() {
        let (lo, hi) = ci95(424.0, 1000).unwrap();
        assert!((lo - 0.394).abs() <= 0.001 && (hi - 0.455).abs() <= 0.001, "{lo} {hi}");
        assert_eq!(ci95(0.0, 10).unwrap().0, 0.0);
        assert!(ci95(10.0, 10).unwrap().1 <= 1.0);
        assert!(ci95(1.0, 0).is_err());
        assert!(ci95(11.0, 10).is_err());
    }

    #[test]
    fn zero_matches_is_invalid() {
        let reg = registry(2).unwrap();
        let plan = MatchPlan { registry: &reg, seed: 0, drafter: None, workers: 1 };
        assert!(matches!(
            run_matches(&AgentSpec::Random, &AgentSpec::Random, 0, &plan),
            Err(EvalError::InvalidArgument(_))
        ));
    }

    #[test]
    fn report_reconciles_and_is_deterministic() {
        let reg = registry(4).unwrap();
        let plan = MatchPlan { registry: &reg, seed: 11, drafter: Some(&AgentSpec::Greedy), workers: 2 };
        let r1 = run_matches(&AgentSpec::Random, &AgentSpec::Greedy, 21, &plan).unwrap();
        let r2 = run_matches(&AgentSpec::Random, &AgentSpec::Greedy, 21, &MatchPlan { workers: 1, ..plan }).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.wins + r1.losses + r1.draws, 21);
        assert!(r1.per_seat[0].matches.abs_diff(r1.per_seat[1].matches) <= 1);
        assert!(r1.ci95.0 <= r1.win_rate && r1.win_rate <= r1.ci95.1);
    }

    #[test]
    fn aggregate_degenerate_cases() {
        let run = vec![(0, 0.5), (20, 0.6)];
        let agg = aggregate_curves(&[run.clone(), run.clone()]);
        assert_eq!(agg[1].ci, Some((0.6, 0.6)));
        let agg = aggregate_curves(&[run, vec![(0, 0.7)]]);
        assert_eq!(agg[1].n_runs, 1);
        assert_eq!(agg[1].ci, None);
    }
}
