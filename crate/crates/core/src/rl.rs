//! PPO fine-tuning of a battle policy toward a best response against a fixed opponent, and the
//! pretrained-versus-scratch ablation over fixed pool counts.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{sample_index, ActionMode, AgentSpec, PolicyModel};
use crate::cardgen::{GeneratorParams, PoolRegistry};
use crate::dataset::PreprocStats;
use crate::encoding::BATTLE_OBS_LEN;
use crate::engine::BATTLE_ACTIONS;
use crate::env::{BattleEnv, EnvConfig, EnvError, TimeStep};
use crate::eval::{aggregate_curves, curve_table, run_matches, CurvePoint, EvalError, MatchPlan};
use crate::learn::{
    gae, policy_loss_and_grads, softmax_row, value_loss_and_grads, AdamState, Checkpoint, CheckpointMeta, DenseNet,
    Head, LearnError, PolicyBatch,
};
use crate::{derive_seed, par};

const ENV_STREAM: u64 = 10;
const SAMPLE_STREAM: u64 = 11;
const EVAL_STREAM: u64 = 12;
const INIT_STREAM: u64 = 13;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoParams {
    pub gamma: f32,
    pub lambda: f32,
    pub clip: f32,
    pub policy_lr: f32,
    pub value_lr: f32,
    pub epochs: usize,
    /// Environment steps gathered per iteration, across all environments.
    pub rollout_steps: usize,
    pub minibatch: usize,
    pub max_grad_norm: f32,
    pub entropy_coef: f32,
    /// Normalizes advantages to zero mean and unit variance within each minibatch.
    pub normalize_advantages: bool,
    pub value_hidden: Vec<usize>,
}

impl Default for PpoParams {
    fn default() -> Self {
        PpoParams {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            policy_lr: 5e-5,
            value_lr: 5e-5,
            epochs: 4,
            rollout_steps: 16_384,
            minibatch: 2_048,
            max_grad_norm: 10.0,
            entropy_coef: 0.01,
            normalize_advantages: true,
            value_hidden: vec![256, 128],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlConfig {
    pub ppo: PpoParams,
    pub max_iterations: u64,
    pub eval_every: u64,
    pub eval_matches: u64,
    pub stop_threshold: f64,
    pub stop_window: usize,
    /// Evaluates the initial policy as iteration 0; that row never counts toward stopping.
    pub baseline_eval: bool,
    pub n_envs: usize,
    pub seed: u64,
    pub workers: usize,
    /// Hidden sizes for a randomly initialized policy.
    pub scratch_hidden: Vec<usize>,
}

impl Default for RlConfig {
    fn default() -> Self {
        RlConfig {
            ppo: PpoParams::default(),
            max_iterations: 1000,
            eval_every: 20,
            eval_matches: 100,
            stop_threshold: 0.75,
            stop_window: 5,
            baseline_eval: true,
            n_envs: 16,
            seed: 0,
            workers: 0,
            scratch_hidden: vec![256, 128],
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let p = &self.ppo;
        if !(self.stop_threshold > 0.0 && self.stop_threshold < 1.0) {
            return Err(RlError::Config("stop_threshold must lie in (0, 1)".into()));
        }
        if self.eval_every == 0 || self.eval_matches == 0 || self.stop_window == 0 || self.n_envs == 0 {
            return Err(RlError::Config("eval_every, eval_matches, stop_window and n_envs must be positive".into()));
        }
        if p.epochs == 0 || p.minibatch == 0 || p.rollout_steps < self.n_envs {
            return Err(RlError::Config("ppo epochs and minibatch must be positive, rollout_steps ≥ n_envs".into()));
        }
        if !(p.clip > 0.0 && p.policy_lr > 0.0 && p.value_lr > 0.0) {
            return Err(RlError::Config("clip and learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Policy initialization.
#[derive(Clone, Debug)]
pub enum Init {
    /// Start from a behaviour-cloning checkpoint, reusing its input preprocessing.
    Pretrained(Checkpoint),
    Scratch,
}

/// Whether the rule "at least `window` evaluations and the mean of the last `window` exceeds
/// `threshold`" fires on `history`.
pub fn should_stop(history: &[f64], window: usize, threshold: f64) -> bool {
    history.len() >= window && history[history.len() - window..].iter().sum::<f64>() / window as f64 > threshold
}

/// First iteration whose evaluation reached `threshold`.
pub fn first_reach(curve: &[(u64, f64)], threshold: f64) -> Option<u64> {
    curve.iter().find(|p| p.1 >= threshold).map(|p| p.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u64,
    pub steps: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

pub struct RlOutcome {
    pub policy: Checkpoint,
    pub value: Checkpoint,
    pub best: Checkpoint,
    /// `(iteration, win rate)`; iteration 0 is the baseline when enabled.
    pub curve: Vec<(u64, f64)>,
    pub iterations: u64,
    pub stopped_early: bool,
    pub stats: Vec<IterationStats>,
}

impl RlOutcome {
    /// Win rate of the last evaluation after training started.
    pub fn final_win_rate(&self) -> Option<f64> {
        self.curve.iter().rev().find(|p| p.0 > 0).map(|p| p.1)
    }
}

struct Worker {
    env: BattleEnv,
    current: TimeStep,
    rng: ChaCha8Rng,
    episode_return: i32,
}

#[derive(Default)]
struct Segment {
    obs: Vec<f32>,
    masks: Vec<bool>,
    actions: Vec<usize>,
    log_probs: Vec<f32>,
    rewards: Vec<f32>,
    dones: Vec<bool>,
}

fn policy_init(cfg: &RlConfig, init: &Init) -> Result<(DenseNet<f32>, PreprocStats, String), RlError> {
    match init {
        Init::Pretrained(ck) => {
            let net = ck.net()?;
            if net.head != Head::Policy || net.input_dim() != BATTLE_OBS_LEN || net.output_dim() != BATTLE_ACTIONS {
                return Err(RlError::Config(format!(
                    "checkpoint must be a {BATTLE_OBS_LEN}→…→{BATTLE_ACTIONS} policy, got {:?}",
                    net.dims
                )));
            }
            Ok((net, ck.meta.preproc.clone(), ck.meta.experiment.clone()))
        }
        Init::Scratch => {
            let mut dims = vec![BATTLE_OBS_LEN];
            dims.extend(&cfg.scratch_hidden);
            dims.push(BATTLE_ACTIONS);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, INIT_STREAM, 0));
            Ok((DenseNet::new(&dims, Head::Policy, &mut rng), PreprocStats::default(), "scratch".into()))
        }
    }
}

fn preprocess_rows(stats: &PreprocStats, obs: &[f32]) -> Vec<f32> {
    let mut x = obs.to_vec();
    for row in x.chunks_exact_mut(BATTLE_OBS_LEN) {
        stats.apply_in_place(row);
    }
    x
}

fn forward_rows(net: &DenseNet<f32>, x: &[f32]) -> ndarray::Array2<f32> {
    let n = x.len() / BATTLE_OBS_LEN;
    net.forward(ArrayView2::from_shape((n, BATTLE_OBS_LEN), x).expect("sized"))
}

/// Trains a policy with PPO against `opponent`, which also drafts for both sides.
pub fn train_ppo(
    cfg: &RlConfig,
    init: &Init,
    opponent: &AgentSpec,
    registry: &PoolRegistry,
    mut on_iteration: impl FnMut(&IterationStats, Option<f64>),
) -> Result<RlOutcome, RlError> {
    cfg.validate()?;
    let ppo = &cfg.ppo;
    let (mut policy, stats, source) = policy_init(cfg, init)?;
    let mut value_dims = vec![BATTLE_OBS_LEN];
    value_dims.extend(&ppo.value_hidden);
    value_dims.push(1);
    let mut value = DenseNet::<f32>::new(&value_dims, Head::Value, &mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, INIT_STREAM, 1)));
    let mut policy_adam = AdamState::for_net(&policy, ppo.policy_lr);
    let mut value_adam = AdamState::for_net(&value, ppo.value_lr);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SAMPLE_STREAM, u64::MAX));
    let name = format!("ppo-{source}-s{}", cfg.seed);

    let mut workers = (0..cfg.n_envs)
        .map(|i| -> Result<Worker, RlError> {
            let mut env = BattleEnv::new(EnvConfig {
                opponent: opponent.clone(),
                drafter: Some(opponent.clone()),
                registry: registry.clone(),
                seed: derive_seed(cfg.seed, ENV_STREAM, i as u64),
                alternate_seats: true,
            })?;
            let current = env.reset()?;
            let rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SAMPLE_STREAM, i as u64));
            Ok(Worker { env, current, rng, episode_return: 0 })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let eval_plan = MatchPlan {
        registry,
        seed: derive_seed(cfg.seed, EVAL_STREAM, 0),
        drafter: Some(opponent),
        workers: cfg.workers,
    };
    let evaluate = |net: &DenseNet<f32>| -> Result<f64, RlError> {
        let model = PolicyModel::new(name.clone(), net.clone(), stats.clone())?;
        let agent = AgentSpec::Policy { model: Arc::new(model), mode: ActionMode::Argmax };
        Ok(run_matches(&agent, opponent, cfg.eval_matches, &eval_plan)?.win_rate)
    };
    let checkpoint = |net: &DenseNet<f32>, adam: &AdamState<f32>, it: u64, score: Option<f64>| {
        Checkpoint::from_net(
            net,
            Some(adam),
            CheckpointMeta { experiment: name.clone(), iteration: it, eval_score: score, preproc: stats.clone() },
        )
    };

    let mut curve = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(Checkpoint, f64)> = None;
    if cfg.baseline_eval {
        let w = evaluate(&policy)?;
        log::info!("{name} iteration 0: eval win rate {w:.3}");
        curve.push((0, w));
        best = Some((checkpoint(&policy, &policy_adam, 0, Some(w)), w));
    }

    let steps_per_env = ppo.rollout_steps.div_ceil(cfg.n_envs);
    let mut all_stats = Vec::new();
    let mut stopped_early = false;
    let mut iteration = 0;
    while iteration < cfg.max_iterations {
        iteration += 1;

        // Rollout: all environments advance in lockstep so the policy runs batched.
        let mut segments: Vec<Segment> = (0..cfg.n_envs).map(|_| Segment::default()).collect();
        let mut finished_returns = Vec::new();
        for _ in 0..steps_per_env {
            let raw: Vec<f32> = workers.iter().flat_map(|w| w.current.obs.values.iter().copied()).collect();
            let logits = forward_rows(&policy, &preprocess_rows(&stats, &raw));
            let mut actions = Vec::with_capacity(cfg.n_envs);
            for (i, w) in workers.iter_mut().enumerate() {
                let row = logits.row(i);
                let mut p = vec![0f32; BATTLE_ACTIONS];
                softmax_row(row.as_slice().expect("contiguous"), &w.current.mask, &mut p)
                    .ok_or(LearnError::EmptyMask(i))?;
                let a = sample_index(&p, &mut w.rng).ok_or(LearnError::EmptyMask(i))?;
                let seg = &mut segments[i];
                seg.obs.extend_from_slice(&w.current.obs.values);
                seg.masks.extend_from_slice(&w.current.mask);
                seg.actions.push(a);
                seg.log_probs.push(p[a].ln());
                actions.push(a);
            }
            let stepped = par::map_slice_mut(&mut workers, |i, w| -> Result<Option<i32>, EnvError> {
                let next = w.env.step(actions[i])?;
                if next.terminal {
                    let r = next.reward;
                    w.current = w.env.reset()?;
                    Ok(Some(r))
                } else {
                    w.current = next;
                    Ok(None)
                }
            });
            for (i, r) in stepped.into_iter().enumerate() {
                let r = r?;
                segments[i].rewards.push(r.unwrap_or(0) as f32);
                segments[i].dones.push(r.is_some());
                if let Some(r) = r {
                    finished_returns.push(workers[i].episode_return + r);
                    workers[i].episode_return = 0;
                }
            }
        }

        // Advantages per environment segment, bootstrapping unfinished episodes.
        let boot_raw: Vec<f32> = workers.iter().flat_map(|w| w.current.obs.values.iter().copied()).collect();
        let boot = forward_rows(&value, &preprocess_rows(&stats, &boot_raw));
        let (mut x, mut masks, mut acts, mut old_lp, mut advs, mut targets) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, seg) in segments.into_iter().enumerate() {
            let xs = preprocess_rows(&stats, &seg.obs);
            let v: Vec<f32> = forward_rows(&value, &xs).iter().copied().collect();
            let (a, t) = gae(&seg.rewards, &v, &seg.dones, boot[[i, 0]], ppo.gamma, ppo.lambda)?;
            x.extend(xs);
            masks.extend(seg.masks);
            acts.extend(seg.actions);
            old_lp.extend(seg.log_probs);
            advs.extend(a);
            targets.extend(t);
        }

        // Updates.
        let n = acts.len();
        let mut idx: Vec<usize> = (0..n).collect();
        let (mut pl, mut vl, mut ent, mut cf, mut batches) = (0f64, 0f64, 0f64, 0f64, 0usize);
        let (mut bx, mut bm, mut ba, mut blp, mut badv, mut bt) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..ppo.epochs {
            idx.shuffle(&mut shuffle_rng);
            for mb in idx.chunks(ppo.minibatch) {
                bx.clear();
                bm.clear();
                ba.clear();
                blp.clear();
                badv.clear();
                bt.clear();
                for &k in mb {
                    bx.extend_from_slice(&x[k * BATTLE_OBS_LEN..(k + 1) * BATTLE_OBS_LEN]);
                    bm.extend_from_slice(&masks[k * BATTLE_ACTIONS..(k + 1) * BATTLE_ACTIONS]);
                    ba.push(acts[k]);
                    blp.push(old_lp[k]);
                    badv.push(advs[k]);
                    bt.push(targets[k]);
                }
                if ppo.normalize_advantages && mb.len() > 1 {
                    let mean = badv.iter().sum::<f32>() / mb.len() as f32;
                    let var = badv.iter().map(|a| (a - mean).powi(2)).sum::<f32>() / mb.len() as f32;
                    let sd = var.sqrt() + 1e-8;
                    badv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
                }
                let obs = ArrayView2::from_shape((mb.len(), BATTLE_OBS_LEN), &bx).expect("sized");
                let batch = PolicyBatch { obs, masks: &bm, actions: &ba, old_log_probs: &blp, advantages: &badv };
                let (losses, mut g) = policy_loss_and_grads(&policy, &batch, ppo.clip, ppo.entropy_coef)?;
                g.clip_global_norm(ppo.max_grad_norm);
                policy_adam.step(&mut policy, &g)?;
                let (v_loss, mut vg) = value_loss_and_grads(&value, obs, &bt)?;
                vg.clip_global_norm(ppo.max_grad_norm);
                value_adam.step(&mut value, &vg)?;
                pl += losses.policy as f64;
                ent += losses.entropy as f64;
                cf += losses.clip_fraction as f64;
                vl += v_loss as f64;
                batches += 1;
            }
        }
        let b = batches.max(1) as f64;
        let it_stats = IterationStats {
            iteration,
            steps: n,
            episodes: finished_returns.len(),
            mean_return: if finished_returns.is_empty() {
                0.0
            } else {
                finished_returns.iter().sum::<i32>() as f64 / finished_returns.len() as f64
            },
            policy_loss: pl / b,
            value_loss: vl / b,
            entropy: ent / b,
            clip_fraction: cf / b,
        };

        let mut eval_result = None;
        if iteration % cfg.eval_every == 0 {
            let w = evaluate(&policy)?;
            log::info!("{name} iteration {iteration}: eval win rate {w:.3}");
            curve.push((iteration, w));
            history.push(w);
            eval_result = Some(w);
            if best.as_ref().is_none_or(|b| w > b.1) {
                best = Some((checkpoint(&policy, &policy_adam, iteration, Some(w)), w));
            }
        }
        on_iteration(&it_stats, eval_result);
        all_stats.push(it_stats);
        if should_stop(&history, cfg.stop_window, cfg.stop_threshold) {
            stopped_early = true;
            break;
        }
    }

    let last_score = curve.last().map(|p| p.1);
    let policy_ck = checkpoint(&policy, &policy_adam, iteration, last_score);
    let value_ck = Checkpoint::from_net(
        &value,
        Some(&value_adam),
        CheckpointMeta { experiment: format!("{name}-value"), iteration, eval_score: None, preproc: stats.clone() },
    );
    let best = best.map(|b| b.0).unwrap_or_else(|| policy_ck.clone());
    Ok(RlOutcome { policy: policy_ck, value: value_ck, best, curve, iterations: iteration, stopped_early, stats: all_stats })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Arm {
    Pretrain,
    Scratch,
}

impl Arm {
    pub fn name(self) -> &'static str {
        match self {
            Arm::Pretrain => "Pretrain",
            Arm::Scratch => "Scratch",
        }
    }
}

#[derive(Clone, Debug)]
pub struct AblationConfig {
    pub pools: Vec<usize>,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub rl: RlConfig,
    pub generator: GeneratorParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRun {
    pub pools: usize,
    pub arm: Arm,
    pub seed: u64,
    pub curve: Vec<(u64, f64)>,
    pub final_win_rate: Option<f64>,
    pub iterations: u64,
    pub stopped_early: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub runs: Vec<CellRun>,
}

impl AblationResult {
    fn cell(&self, pools: usize, arm: Arm) -> impl Iterator<Item = &CellRun> {
        self.runs.iter().filter(move |r| r.pools == pools && r.arm == arm)
    }

    pub fn mean_final(&self, pools: usize, arm: Arm) -> Option<f64> {
        let v: Vec<f64> = self.cell(pools, arm).filter_map(|r| r.final_win_rate).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Mean curve with t-interval bands over the cell's seeds, baseline rows excluded.
    pub fn cell_curve(&self, pools: usize, arm: Arm) -> Vec<CurvePoint> {
        let runs: Vec<Vec<(u64, f64)>> =
            self.cell(pools, arm).map(|r| r.curve.iter().copied().filter(|p| p.0 > 0).collect()).collect();
        aggregate_curves(&runs)
    }

    pub fn cell_curve_table(&self, pools: usize, arm: Arm) -> String {
        curve_table(&self.cell_curve(pools, arm))
    }

    /// One row per arm, one column per pool count, cells holding the mean final win rate.
    pub fn summary_table(&self, pools: &[usize], arms: &[Arm]) -> String {
        let mut s = String::from("arm");
        for p in pools {
            write!(s, "\t{p}").unwrap();
        }
        s.push('\n');
        for &arm in arms {
            s.push_str(arm.name());
            for &p in pools {
                match self.mean_final(p, arm) {
                    Some(v) => write!(s, "\t{v:.3}").unwrap(),
                    None => s.push_str("\tnan"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs every `(pool count, arm, seed)` cell. `pretrained` is required for the Pretrain arm.
pub fn run_ablation(
    cfg: &AblationConfig,
    opponent: &AgentSpec,
    pretrained: Option<&Checkpoint>,
    mut on_run: impl FnMut(&CellRun),
) -> Result<AblationResult, RlError> {
    let mut result = AblationResult::default();
    for &pools in &cfg.pools {
        let registry = PoolRegistry::fixed(pools, cfg.generator.clone()).map_err(|e| RlError::Config(e.to_string()))?;
        for &arm in &cfg.arms {
            let init = match arm {
                Arm::Pretrain => Init::Pretrained(
                    pretrained.ok_or_else(|| RlError::Config("the Pretrain arm needs a checkpoint".into()))?.clone(),
                ),
                Arm::Scratch => Init::Scratch,
            };
            for &seed in &cfg.seeds {
                let rl = RlConfig { seed, ..cfg.rl.clone() };
                let out = train_ppo(&rl, &init, opponent, &registry, |_, _| {})?;
                let run = CellRun {
                    pools,
                    arm,
                    seed,
                    final_win_rate: out.final_win_rate(),
                    curve: out.curve,
                    iterations: out.iterations,
                    stopped_early: out.stopped_early,
                };
                on_run(&run);
                result.runs.push(run);
            }
        }
    }
    Ok(result)
}
