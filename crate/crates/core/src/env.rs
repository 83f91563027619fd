//! Single-agent view of the game against a fixed opponent.
//!
//! Every protagonist decision is one timestep. Opponent moves, and all constructed-stage moves
//! when a drafter is configured, run inside [`BattleEnv::step`] and [`BattleEnv::reset`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::agents::{Agent, AgentError, AgentSpec};
use crate::cardgen::PoolRegistry;
use crate::derive_seed;
use crate::encoding::{encode, Observation, Stage};
use crate::engine::{EngineError, GameState, Outcome, Phase};
use crate::eval::{AGENT_STREAM, GAME_STREAM, POOL_STREAM};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("cannot build agent: {0}")]
    Agent(#[from] AgentError),
    #[error("opponent fault ({reason}); match forfeited with outcome {outcome:?}")]
    OpponentFault { outcome: Outcome, reason: String },
    #[error("illegal protagonist action {0}")]
    IllegalAction(usize),
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("trajectory: {0}")]
    Trajectory(String),
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub opponent: AgentSpec,
    /// Plays the whole constructed stage for both sides when set.
    pub drafter: Option<AgentSpec>,
    pub registry: PoolRegistry,
    pub seed: u64,
    /// Protagonist seat alternates 0, 1, 0, ... across episodes when true, else always 0.
    pub alternate_seats: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeStep {
    pub obs: Observation,
    pub mask: Vec<bool>,
    /// From the protagonist's perspective; nonzero only on the terminal step.
    pub reward: i32,
    pub terminal: bool,
}

pub struct BattleEnv {
    config: EnvConfig,
    opponent: Box<dyn Agent>,
    drafter: Option<Box<dyn Agent>>,
    state: Option<GameState>,
    rng: ChaCha8Rng,
    protagonist: usize,
    episode: u64,
    match_id: u64,
}

impl BattleEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        let opponent = config.opponent.build()?;
        let drafter = config.drafter.as_ref().map(|d| d.build()).transpose()?;
        Ok(BattleEnv {
            config,
            opponent,
            drafter,
            state: None,
            rng: ChaCha8Rng::seed_from_u64(0),
            protagonist: 0,
            episode: 0,
            match_id: 0,
        })
    }

    pub fn protagonist(&self) -> usize {
        self.protagonist
    }

    pub fn match_id(&self) -> u64 {
        self.match_id
    }

    pub fn state(&self) -> Option<&GameState> {
        self.state.as_ref()
    }

    /// Starts the next episode. Episode `k` of an env uses seeds derived from `(seed, k)`.
    pub fn reset(&mut self) -> Result<TimeStep, EnvError> {
        let k = self.episode;
        self.episode += 1;
        self.match_id = k;
        self.protagonist = if self.config.alternate_seats { (k % 2) as usize } else { 0 };
        let seed = self.config.seed;
        let pool = self.config.registry.pool_for(derive_seed(seed, POOL_STREAM, k));
        self.state = Some(GameState::new(pool, derive_seed(seed, GAME_STREAM, k))?);
        self.rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, AGENT_STREAM, k));
        let opp = 1 - self.protagonist;
        if let Err(e) = self.opponent.reset(k) {
            return Err(self.fault(opp, e));
        }
        if let Some(d) = self.drafter.as_mut() {
            if let Err(e) = d.reset(k) {
                self.state = None;
                return Err(EnvError::OpponentFault { outcome: Outcome::win_for(self.protagonist), reason: e.to_string() });
            }
        }
        self.advance()
    }

    pub fn step(&mut self, action: usize) -> Result<TimeStep, EnvError> {
        let state = self.state.as_mut().ok_or(EnvError::EpisodeOver)?;
        if state.is_finished() {
            return Err(EnvError::EpisodeOver);
        }
        let mask = state.legal_mask(self.protagonist)?;
        if !mask.get(action).copied().unwrap_or(false) {
            return Err(EnvError::IllegalAction(action));
        }
        state.apply_action(action)?;
        self.advance()
    }

    fn fault(&mut self, seat: usize, e: AgentError) -> EnvError {
        self.state = None;
        EnvError::OpponentFault { outcome: Outcome::win_for(1 - seat), reason: e.to_string() }
    }

    /// Runs internal moves until the protagonist must decide or the game ends.
    fn advance(&mut self) -> Result<TimeStep, EnvError> {
        loop {
            let state = self.state.as_mut().expect("episode in progress");
            if let Some(outcome) = state.outcome {
                return Ok(TimeStep {
                    obs: Observation::zeros(Stage::Battle),
                    mask: vec![false; state.action_space()],
                    reward: outcome.rewards()[self.protagonist],
                    terminal: true,
                });
            }
            let p = state.active_player;
            let drafting = state.phase == Phase::Constructed && self.drafter.is_some();
            if p == self.protagonist && !drafting {
                let obs = encode(state, p)?;
                let mask = state.legal_mask(p)?;
                return Ok(TimeStep { obs, mask, reward: 0, terminal: false });
            }
            let obs = encode(state, p)?;
            let mask = state.legal_mask(p)?;
            let agent: &mut dyn Agent = match self.drafter.as_mut() {
                Some(d) if drafting => d.as_mut(),
                _ => self.opponent.as_mut(),
            };
            let action = match agent.act(&obs, &mask, &mut self.rng) {
                Ok(a) if mask.get(a).copied().unwrap_or(false) => a,
                Ok(a) => return Err(self.fault(p, AgentError::IllegalAction(a))),
                Err(e) => return Err(self.fault(p, e)),
            };
            self.state.as_mut().expect("in progress").apply_action(action)?;
        }
    }
}

/// One protagonist episode: `steps[i]` was answered by `actions[i]`; the last step is terminal
/// and has no action.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub match_id: u64,
    pub protagonist: usize,
    pub steps: Vec<TimeStep>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Trajectory(m.into()));
        let Some(last) = self.steps.last() else { return bad("empty trajectory") };
        if !last.terminal {
            return bad("trajectory does not end in a terminal step");
        }
        if self.actions.len() + 1 != self.steps.len() {
            return bad("every non-terminal step needs exactly one action");
        }
        for (s, &a) in self.steps.iter().zip(&self.actions) {
            if s.terminal || s.reward != 0 {
                return bad("reward or terminal flag before the end");
            }
            if !s.mask.get(a).copied().unwrap_or(false) {
                return bad("recorded action is masked out");
            }
        }
        if !(-1..=1).contains(&last.reward) {
            return bad("terminal reward out of range");
        }
        Ok(())
    }

    /// Undiscounted return, the sum of step rewards.
    pub fn episode_return(&self) -> Result<i32, EnvError> {
        if !self.steps.last().is_some_and(|s| s.terminal) {
            return Err(EnvError::Trajectory("incomplete trajectory".into()));
        }
        Ok(self.steps.iter().map(|s| s.reward).sum())
    }
}

/// Plays one full episode with `agent` as protagonist.
pub fn run_episode(env: &mut BattleEnv, agent: &mut dyn Agent, rng: &mut ChaCha8Rng) -> Result<Trajectory, EnvError> {
    let mut step = env.reset()?;
    agent.reset(env.match_id())?;
    let mut traj = Trajectory { match_id: env.match_id(), protagonist: env.protagonist(), steps: vec![], actions: vec![] };
    while !step.terminal {
        let a = agent.act(&step.obs, &step.mask, rng)?;
        let next = env.step(a)?;
        traj.steps.push(step);
        traj.actions.push(a);
        step = next;
    }
    traj.steps.push(step);
    Ok(traj)
}
