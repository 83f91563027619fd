//! Behaviour cloning: supervised training of a battle policy on recorded pairs, periodic match
//! evaluation, and best-checkpoint selection.

use std::fmt::Write as _;
use std::sync::Arc;

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{ActionMode, AgentSpec, PolicyModel};
use crate::cardgen::PoolRegistry;
use crate::dataset::{unpack_mask, Dataset, PreprocMode, PreprocStats};
use crate::encoding::BATTLE_OBS_LEN;
use crate::engine::BATTLE_ACTIONS;
use crate::eval::{run_matches, EvalError, MatchPlan, WinRateReport};
use crate::learn::{ce_loss_and_grads, masked_argmax, AdamState, Checkpoint, CheckpointMeta, DenseNet, Head, LearnError};

#[derive(Debug, Error)]
pub enum BcError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arch {
    SM,
    MD,
    LG1,
    LG2,
}

impl Arch {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            Arch::SM => vec![128],
            Arch::MD => vec![256, 128],
            Arch::LG1 => vec![512, 256],
            Arch::LG2 => vec![256, 128, 64],
        }
    }

    pub fn dims(self) -> Vec<usize> {
        let mut d = vec![BATTLE_OBS_LEN];
        d.extend(self.hidden());
        d.push(BATTLE_ACTIONS);
        d
    }

    fn tag(self) -> (&'static str, Option<&'static str>) {
        match self {
            Arch::SM => ("SM", None),
            Arch::MD => ("MD", None),
            Arch::LG1 => ("LG", Some("v1")),
            Arch::LG2 => ("LG", Some("v2")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcConfig {
    pub arch: Arch,
    pub filter_pass: bool,
    pub preproc: PreprocMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub eval_every: usize,
    pub eval_matches: u64,
    pub final_eval_matches: u64,
    pub seed: u64,
    /// Ends training once validation accuracy reaches this value.
    pub stop_at_val_accuracy: Option<f64>,
    pub workers: usize,
}

impl Default for BcConfig {
    fn default() -> Self {
        BcConfig {
            arch: Arch::MD,
            filter_pass: false,
            preproc: PreprocMode::None,
            epochs: 512,
            batch_size: 256,
            lr: 0.001,
            eval_every: 64,
            eval_matches: 100,
            final_eval_matches: 1000,
            seed: 0,
            stop_at_val_accuracy: None,
            workers: 0,
        }
    }
}

impl BcConfig {
    /// `{SM|MD|LG}-{F|NF}-{NP|NM|ST}`, with `-v1`/`-v2` for the two large variants.
    pub fn name(&self) -> String {
        let (arch, version) = self.arch.tag();
        let f = if self.filter_pass { "F" } else { "NF" };
        let mut name = format!("{arch}-{f}-{}", self.preproc.tag());
        if let Some(v) = version {
            name.push('-');
            name.push_str(v);
        }
        name
    }

    /// Inverse of [`BcConfig::name`], applied on top of `self`.
    pub fn with_name(&self, name: &str) -> Result<BcConfig, BcError> {
        let bad = || BcError::Config(format!("cannot parse experiment name {name:?}"));
        let parts: Vec<&str> = name.split('-').collect();
        if !(3..=4).contains(&parts.len()) {
            return Err(bad());
        }
        let arch = match (parts[0], parts.get(3).copied()) {
            ("SM", None) => Arch::SM,
            ("MD", None) => Arch::MD,
            ("LG", Some("v1")) => Arch::LG1,
            ("LG", Some("v2")) => Arch::LG2,
            _ => return Err(bad()),
        };
        let filter_pass = match parts[1] {
            "F" => true,
            "NF" => false,
            _ => return Err(bad()),
        };
        let preproc = PreprocMode::from_tag(parts[2]).ok_or_else(bad)?;
        Ok(BcConfig { arch, filter_pass, preproc, ..self.clone() })
    }

    pub fn validate(&self) -> Result<(), BcError> {
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(BcError::Config("epochs, batch_size and eval_every must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(BcError::Config("lr must be positive".into()));
        }
        Ok(())
    }
}

/// Opponent and pools for periodic evaluation. The opponent also drafts for both sides.
#[derive(Clone, Debug)]
pub struct BcEval {
    pub opponent: AgentSpec,
    pub registry: PoolRegistry,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    /// Running accuracy over the epoch's minibatches, before each update.
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BcCurves {
    pub epochs: Vec<EpochRow>,
    /// `(epoch, win rate)` for every periodic evaluation.
    pub evals: Vec<(usize, f64)>,
}

impl BcCurves {
    pub fn accuracy_table(&self) -> String {
        let mut s = String::from("epoch\ttrain_loss\ttrain_acc\tval_acc\n");
        for r in &self.epochs {
            writeln!(s, "{}\t{:.6}\t{:.6}\t{:.6}", r.epoch, r.train_loss, r.train_acc, r.val_acc).unwrap();
        }
        s
    }

    pub fn eval_table(&self) -> String {
        let mut s = String::from("eval_round\tepoch\twin_rate\n");
        for (k, (epoch, w)) in self.evals.iter().enumerate() {
            writeln!(s, "{}\t{epoch}\t{w:.6}", k + 1).unwrap();
        }
        s
    }

    /// Index into `evals` of the best periodic evaluation, earliest on ties.
    pub fn best_eval(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, e) in self.evals.iter().enumerate() {
            if best.is_none_or(|b| e.1 > self.evals[b].1) {
                best = Some(i);
            }
        }
        best
    }
}

pub struct BcOutcome {
    pub best: Checkpoint,
    pub best_epoch: usize,
    pub curves: BcCurves,
    pub final_report: Option<WinRateReport>,
}

fn check_dataset(ds: &Dataset, what: &str, cfg: &BcConfig) -> Result<(), BcError> {
    if ds.is_empty() {
        return Err(BcError::Config(format!("{what} set is empty")));
    }
    if ds.obs.len() != ds.len() * BATTLE_OBS_LEN {
        return Err(BcError::Config(format!("{what} set observations are not {BATTLE_OBS_LEN} wide")));
    }
    if cfg.filter_pass && ds.pass_count() > 0 {
        return Err(BcError::Config(format!("{what} set contains Pass actions but filter_pass is set")));
    }
    Ok(())
}

/// Copies rows `idx` into a preprocessed observation matrix, a flat mask and action list.
fn gather(ds: &Dataset, idx: &[usize], stats: &PreprocStats, x: &mut Vec<f32>, masks: &mut Vec<bool>, actions: &mut Vec<usize>) {
    x.clear();
    masks.clear();
    actions.clear();
    masks.resize(idx.len() * BATTLE_ACTIONS, false);
    for (r, &i) in idx.iter().enumerate() {
        let start = x.len();
        x.extend_from_slice(ds.obs_row(i));
        stats.apply_in_place(&mut x[start..]);
        unpack_mask(&ds.masks[i], &mut masks[r * BATTLE_ACTIONS..(r + 1) * BATTLE_ACTIONS]);
        actions.push(ds.actions[i] as usize);
    }
}

/// Fraction of pairs whose masked argmax (lowest index on ties) equals the stored action.
pub fn accuracy(net: &DenseNet<f32>, stats: &PreprocStats, ds: &Dataset) -> f64 {
    if ds.is_empty() {
        return 0.0;
    }
    let (mut x, mut masks, mut actions) = (Vec::new(), Vec::new(), Vec::new());
    let mut correct = 0usize;
    let all: Vec<usize> = (0..ds.len()).collect();
    for chunk in all.chunks(4096) {
        gather(ds, chunk, stats, &mut x, &mut masks, &mut actions);
        let view = ArrayView2::from_shape((chunk.len(), BATTLE_OBS_LEN), &x).expect("sized");
        let logits = net.forward(view);
        for (r, row) in logits.outer_iter().enumerate() {
            let m = &masks[r * BATTLE_ACTIONS..(r + 1) * BATTLE_ACTIONS];
            if masked_argmax(row.as_slice().expect("contiguous"), m) == Some(actions[r]) {
                correct += 1;
            }
        }
    }
    correct as f64 / ds.len() as f64
}

fn evaluate(
    name: &str,
    net: &DenseNet<f32>,
    stats: &PreprocStats,
    eval: &BcEval,
    n: u64,
    workers: usize,
) -> Result<WinRateReport, BcError> {
    let model = PolicyModel::new(name, net.clone(), stats.clone())?;
    let agent = AgentSpec::Policy { model: Arc::new(model), mode: ActionMode::Argmax };
    let plan = MatchPlan { registry: &eval.registry, seed: eval.seed, drafter: Some(&eval.opponent), workers };
    Ok(run_matches(&agent, &eval.opponent, n, &plan)?)
}

/// Trains on `train`, tracks accuracy on `val`, evaluates every `eval_every` epochs (and at the
/// last epoch) when `eval` is given, and keeps the checkpoint with the best evaluation win rate.
/// Without evaluation the best validation accuracy wins. `on_epoch` sees every finished row.
pub fn train_bc(
    cfg: &BcConfig,
    train: &Dataset,
    val: &Dataset,
    eval: Option<&BcEval>,
    mut on_epoch: impl FnMut(&EpochRow),
) -> Result<BcOutcome, BcError> {
    cfg.validate()?;
    check_dataset(train, "training", cfg)?;
    check_dataset(val, "validation", cfg)?;
    let name = cfg.name();
    let stats = PreprocStats::fit(train, cfg.preproc).map_err(|e| BcError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = DenseNet::<f32>::new(&cfg.arch.dims(), Head::Policy, &mut rng);
    let mut adam = AdamState::for_net(&net, cfg.lr);
    let mut curves = BcCurves::default();
    let meta = |epoch: usize, score: Option<f64>| CheckpointMeta {
        experiment: name.clone(),
        iteration: epoch as u64,
        eval_score: score,
        preproc: stats.clone(),
    };
    let mut best: Option<(Checkpoint, usize, f64)> = None;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let (mut x, mut masks, mut actions) = (Vec::new(), Vec::new(), Vec::new());
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            gather(train, batch, &stats, &mut x, &mut masks, &mut actions);
            let view = ArrayView2::from_shape((batch.len(), BATTLE_OBS_LEN), &x).expect("sized");
            let out = ce_loss_and_grads(&net, view, &masks, &actions)?;
            loss_sum += out.loss as f64 * batch.len() as f64;
            correct += out.correct;
            adam.step(&mut net, &out.grads)?;
        }
        let row = EpochRow {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_acc: correct as f64 / train.len() as f64,
            val_acc: accuracy(&net, &stats, val),
        };
        log::info!("{name} epoch {epoch}: loss {:.4} train {:.4} val {:.4}", row.train_loss, row.train_acc, row.val_acc);
        on_epoch(&row);
        let stop = cfg.stop_at_val_accuracy.is_some_and(|t| row.val_acc >= t);
        let last = stop || epoch == cfg.epochs;
        let val_acc = row.val_acc;
        curves.epochs.push(row);

        match eval {
            Some(ev) if epoch % cfg.eval_every == 0 || last => {
                let report = evaluate(&name, &net, &stats, ev, cfg.eval_matches, cfg.workers)?;
                log::info!("{name} epoch {epoch}: eval win rate {:.3}", report.win_rate);
                curves.evals.push((epoch, report.win_rate));
                if best.as_ref().is_none_or(|b| report.win_rate > b.2) {
                    let ck = Checkpoint::from_net(&net, Some(&adam), meta(epoch, Some(report.win_rate)));
                    best = Some((ck, epoch, report.win_rate));
                }
            }
            None if best.as_ref().is_none_or(|b| val_acc > b.2) => {
                best = Some((Checkpoint::from_net(&net, Some(&adam), meta(epoch, None)), epoch, val_acc));
            }
            _ => {}
        }
        if stop {
            log::info!("{name}: validation accuracy {val_acc:.4} reached the stop threshold at epoch {epoch}");
            break;
        }
    }

    let (mut best, best_epoch, _) = best.expect("at least one epoch ran");
    let final_report = match eval {
        Some(ev) => {
            let report = evaluate(&name, &best.net()?, &stats, ev, cfg.final_eval_matches, cfg.workers)?;
            best.meta.eval_score = Some(report.win_rate);
            Some(report)
        }
        None => None,
    };
    Ok(BcOutcome { best, best_epoch, curves, final_report })
}
