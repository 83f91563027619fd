use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use locm_core::agents::AgentSpec;
use locm_core::bc::{train_bc, BcEval};
use locm_core::cardgen::{generate_pool, pool_file_name, GeneratorParams, PoolRegistry};
use locm_core::dataset::{self, read_dataset, read_match_log, replay_match, write_dataset, write_debug, write_match_log, MatchLog};
use locm_core::eval::{run_match_results, MatchPlan, WinRateReport};
use locm_core::learn::Checkpoint;
use locm_core::rl::{run_ablation, train_ppo, AblationConfig, Init};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::rundir::{sha256_file, RunDir};
use crate::{Common, Failure};

/// Loads the config, then applies environment and flag overrides, noting each one.
fn resolve(common: &Common) -> anyhow::Result<(ExperimentConfig, Vec<String>)> {
    let mut cfg = ExperimentConfig::load(common.config.as_deref())?;
    let mut notes = cfg.apply_env(|k| std::env::var(k).ok());
    if let Some(s) = common.seed {
        cfg.seed = s;
        notes.push(format!("seed={s} (flag)"));
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
        notes.push(format!("workers={w} (flag)"));
    }
    if let Some(o) = &common.output_root {
        cfg.output_root = o.clone();
        notes.push(format!("output_root={} (flag)", o.display()));
    }
    Ok((cfg, notes))
}

fn set<T: std::fmt::Debug>(slot: &mut T, flag: Option<T>, key: &str, notes: &mut Vec<String>) {
    if let Some(v) = flag {
        notes.push(format!("{key}={v:?} (flag)"));
        *slot = v;
    }
}

fn registry(cfg: &ExperimentConfig, pools: Option<usize>) -> anyhow::Result<PoolRegistry> {
    let r = match pools {
        Some(n) => PoolRegistry::fixed(n, cfg.cardgen.clone()),
        None => PoolRegistry::fresh(cfg.cardgen.clone()),
    };
    r.map_err(|e| Failure::Config(format!("cardgen: {e}")).into())
}

fn agent(spec: &str, key: &str) -> anyhow::Result<AgentSpec> {
    AgentSpec::parse(spec).with_context(|| format!("{key} = {spec:?}"))
}

pub fn gen_pools(count: usize, out: &Path, params: Option<&Path>) -> anyhow::Result<()> {
    let params: GeneratorParams = match params {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => GeneratorParams::default(),
    };
    params.validate().map_err(|e| Failure::Config(e.to_string()))?;
    if count == 0 {
        return Err(Failure::Config("--count must be at least 1".into()).into());
    }
    let cfg = ExperimentConfig { cardgen: params.clone(), ..Default::default() };
    let run = RunDir::at(out, "gen-pools", &cfg, vec![format!("count={count}")])?;
    for seed in 0..count as u64 {
        generate_pool(seed, &params).save(&run.file(&pool_file_name(seed)))?;
    }
    log::info!("wrote {count} pools");
    run.finish()?;
    Ok(())
}

pub fn collect(common: &Common, teacher: Option<String>, matches: Option<u64>, pools: Option<usize>) -> anyhow::Result<()> {
    let (mut cfg, mut notes) = resolve(common)?;
    set(&mut cfg.collect.teacher, teacher, "collect.teacher", &mut notes);
    set(&mut cfg.collect.matches, matches, "collect.matches", &mut notes);
    if pools.is_some() {
        set(&mut cfg.collect.pools, Some(pools), "collect.pools", &mut notes);
    }
    let teacher = agent(&cfg.collect.teacher, "collect.teacher")?;
    let reg = registry(&cfg, cfg.collect.pools)?;
    let run = RunDir::create(&cfg.output_root, common.name.as_deref().unwrap_or("collect"), "collect", &cfg, notes)?;
    let mut c = dataset::collect(&teacher, cfg.collect.matches, cfg.seed, &reg, cfg.workers)?;
    log::info!(
        "{} matches recorded, {} skipped, {} pairs ({} pass)",
        c.manifest.matches_recorded,
        c.manifest.matches_skipped,
        c.manifest.pairs,
        c.manifest.pass_pairs
    );
    let mut files = vec![("dataset.lctj", run.file("dataset.lctj"))];
    write_dataset(&c.dataset, &files[0].1)?;
    if cfg.collect.debug_mirror {
        files.push(("dataset.jsonl", run.file("dataset.jsonl")));
        write_debug(&c.dataset, &files[1].1)?;
    }
    let log_path = run.file("matches.lcml");
    write_match_log(&MatchLog { generator: cfg.cardgen.clone(), matches: std::mem::take(&mut c.matches) }, &log_path)?;
    files.push(("matches.lcml", log_path));
    for (name, path) in &files {
        c.manifest.files.insert(name.to_string(), sha256_file(path)?);
    }
    run.write_json("dataset.json", &c.manifest)?;
    run.finish()?;
    Ok(())
}

pub fn bc_train(common: &Common, dataset: Option<PathBuf>, epochs: Option<usize>) -> anyhow::Result<()> {
    let (mut cfg, mut notes) = resolve(common)?;
    if let Some(name) = &common.name {
        cfg.bc = cfg.bc.with_name(name)?;
        notes.push(format!("bc variant from name {name} (flag)"));
    }
    set(&mut cfg.bc.epochs, epochs, "bc.epochs", &mut notes);
    set(&mut cfg.data.dataset, dataset, "data.dataset", &mut notes);
    cfg.bc.seed = cfg.seed;
    cfg.bc.workers = cfg.workers;
    cfg.bc.validate()?;
    let name = cfg.bc.name();
    let opponent = agent(&cfg.env.opponent, "env.opponent")?;
    let reg = registry(&cfg, cfg.env.pools)?;
    let path = cfg.data_path(&cfg.data.dataset);
    let ds = read_dataset(&path).with_context(|| format!("dataset {}", path.display()))?;
    let run = RunDir::create(&cfg.output_root, &name, "bc-train", &cfg, notes)?;
    let (mut train, mut val) = ds.split(cfg.data.train_fraction, cfg.seed)?;
    if cfg.bc.filter_pass {
        train = train.filter_pass();
        val = val.filter_pass();
    }
    log::info!("{name}: {} training pairs, {} validation pairs", train.len(), val.len());
    let eval = BcEval { opponent, registry: reg, seed: cfg.seed };
    let out = train_bc(&cfg.bc, &train, &val, Some(&eval), |r| {
        log::info!("epoch {}: loss {:.4} train {:.4} val {:.4}", r.epoch, r.train_loss, r.train_acc, r.val_acc)
    })?;
    run.write("accuracy.tsv", out.curves.accuracy_table())?;
    run.write("eval.tsv", out.curves.eval_table())?;
    out.best.save(&run.file(&format!("{name}.ckpt")))?;
    let final_rate = out.final_report.as_ref().map(|r| r.win_rate);
    if let Some(r) = &out.final_report {
        run.write("final_report.tsv", r.to_table())?;
        run.write_json("final_report.json", r)?;
        log::info!("{name}: final win rate {:.4} [{:.4}, {:.4}]", r.win_rate, r.ci95.0, r.ci95.1);
    }
    let last_val = out.curves.epochs.last().map(|r| r.val_acc);
    run.write_json(
        "summary.json",
        &json!({"name": name, "best_epoch": out.best_epoch, "final_win_rate": final_rate, "last_val_accuracy": last_val}),
    )?;
    run.finish()?;
    Ok(())
}

fn load_checkpoint(p: &Path) -> anyhow::Result<Checkpoint> {
    Checkpoint::load(p).with_context(|| format!("checkpoint {}", p.display()))
}

fn curve_tsv(curve: &[(u64, f64)]) -> String {
    let mut s = String::from("iteration\twin_rate\n");
    for (i, w) in curve {
        writeln!(s, "{i}\t{w:.4}").unwrap();
    }
    s
}

pub fn rl_train(
    common: &Common,
    init: Option<PathBuf>,
    scratch: bool,
    opponent: Option<String>,
    pools: Option<usize>,
    iterations: Option<u64>,
) -> anyhow::Result<()> {
    let (mut cfg, mut notes) = resolve(common)?;
    if scratch {
        cfg.init.checkpoint = None;
        notes.push("init=scratch (flag)".into());
    } else if init.is_some() {
        set(&mut cfg.init.checkpoint, Some(init), "init.checkpoint", &mut notes);
    }
    set(&mut cfg.env.opponent, opponent, "env.opponent", &mut notes);
    if pools.is_some() {
        set(&mut cfg.env.pools, Some(pools), "env.pools", &mut notes);
    }
    set(&mut cfg.rl.max_iterations, iterations, "rl.max_iterations", &mut notes);
    cfg.rl.seed = cfg.seed;
    cfg.rl.workers = cfg.workers;
    cfg.rl.validate()?;
    let init = match &cfg.init.checkpoint {
        Some(p) => Init::Pretrained(load_checkpoint(p)?),
        None => Init::Scratch,
    };
    let opponent = agent(&cfg.env.opponent, "env.opponent")?;
    let reg = registry(&cfg, cfg.env.pools)?;
    let run = RunDir::create(&cfg.output_root, common.name.as_deref().unwrap_or("rl"), "rl-train", &cfg, notes)?;
    let mut stats = String::from("iteration\tsteps\tepisodes\tmean_return\tpolicy_loss\tvalue_loss\tentropy\tclip_fraction\n");
    let out = train_ppo(&cfg.rl, &init, &opponent, &reg, |s, eval| {
        writeln!(
            stats,
            "{}\t{}\t{}\t{:.4}\t{:.6}\t{:.6}\t{:.4}\t{:.4}",
            s.iteration, s.steps, s.episodes, s.mean_return, s.policy_loss, s.value_loss, s.entropy, s.clip_fraction
        )
        .unwrap();
        if let Some(w) = eval {
            log::info!("iteration {}: eval win rate {w:.3}", s.iteration);
        }
    })?;
    run.write("curve.tsv", curve_tsv(&out.curve))?;
    run.write("stats.tsv", stats)?;
    out.policy.save(&run.file("policy.ckpt"))?;
    out.value.save(&run.file("value.ckpt"))?;
    out.best.save(&run.file("best.ckpt"))?;
    run.write_json(
        "summary.json",
        &json!({
            "iterations": out.iterations,
            "stopped_early": out.stopped_early,
            "final_win_rate": out.final_win_rate(),
        }),
    )?;
    log::info!("{} iterations, stopped early: {}", out.iterations, out.stopped_early);
    run.finish()?;
    Ok(())
}

pub fn ablate(
    common: &Common,
    pools: Option<Vec<usize>>,
    seeds: Option<usize>,
    checkpoint: Option<PathBuf>,
    iterations: Option<u64>,
) -> anyhow::Result<()> {
    let (mut cfg, mut notes) = resolve(common)?;
    set(&mut cfg.ablate.pools, pools, "ablate.pools", &mut notes);
    set(&mut cfg.ablate.seeds, seeds, "ablate.seeds", &mut notes);
    if checkpoint.is_some() {
        set(&mut cfg.init.checkpoint, Some(checkpoint), "init.checkpoint", &mut notes);
    }
    set(&mut cfg.rl.max_iterations, iterations, "rl.max_iterations", &mut notes);
    cfg.rl.workers = cfg.workers;
    cfg.rl.validate()?;
    if cfg.ablate.pools.is_empty() || cfg.ablate.seeds == 0 || cfg.ablate.arms.is_empty() {
        return Err(Failure::Config("ablate needs at least one pool count, seed and arm".into()).into());
    }
    let pretrained = cfg.init.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let opponent = agent(&cfg.env.opponent, "env.opponent")?;
    let ab = AblationConfig {
        pools: cfg.ablate.pools.clone(),
        seeds: (0..cfg.ablate.seeds as u64).map(|i| cfg.seed + i).collect(),
        arms: cfg.ablate.arms.clone(),
        rl: cfg.rl.clone(),
        generator: cfg.cardgen.clone(),
    };
    let run = RunDir::create(&cfg.output_root, common.name.as_deref().unwrap_or("ablate"), "ablate", &cfg, notes)?;
    let result = run_ablation(&ab, &opponent, pretrained.as_ref(), |r| {
        log::info!(
            "{} pools {} seed {}: final {:?} after {} iterations",
            r.arm.name(),
            r.pools,
            r.seed,
            r.final_win_rate,
            r.iterations
        )
    })?;
    let summary = result.summary_table(&ab.pools, &ab.arms);
    print!("{summary}");
    run.write("summary.tsv", summary)?;
    for &p in &ab.pools {
        for &arm in &ab.arms {
            run.write(&format!("curves/{}-{p}.tsv", arm.name()), result.cell_curve_table(p, arm))?;
        }
    }
    run.write_json("runs.json", &result)?;
    run.finish()?;
    Ok(())
}

pub fn evaluate(
    common: &Common,
    agent_flag: Option<String>,
    opponent: Option<String>,
    matches: Option<u64>,
    pools: Option<usize>,
    record: bool,
) -> anyhow::Result<()> {
    let (mut cfg, mut notes) = resolve(common)?;
    set(&mut cfg.eval.agent, agent_flag, "eval.agent", &mut notes);
    set(&mut cfg.env.opponent, opponent, "env.opponent", &mut notes);
    set(&mut cfg.eval.matches, matches, "eval.matches", &mut notes);
    if pools.is_some() {
        set(&mut cfg.env.pools, Some(pools), "env.pools", &mut notes);
    }
    let a = agent(&cfg.eval.agent, "eval.agent")?;
    let b = agent(&cfg.env.opponent, "env.opponent")?;
    let drafter = cfg.eval.drafter.as_deref().map(|d| agent(d, "eval.drafter")).transpose()?;
    let reg = registry(&cfg, cfg.env.pools)?;
    let run = RunDir::create(&cfg.output_root, common.name.as_deref().unwrap_or("evaluate"), "evaluate", &cfg, notes)?;
    let plan = MatchPlan { registry: &reg, seed: cfg.seed, drafter: drafter.as_ref(), workers: cfg.workers };
    let results = run_match_results(&a, &b, cfg.eval.matches, &plan)?;
    let report = WinRateReport::from_results(a.name(), b.name(), cfg.seed, &results);
    print!("{}", report.to_table());
    run.write("report.tsv", report.to_table())?;
    run.write_json("report.json", &report)?;
    if record {
        let log = MatchLog { generator: cfg.cardgen.clone(), matches: results.into_iter().map(|r| r.0).collect() };
        write_match_log(&log, &run.file("matches.lcml"))?;
    }
    run.finish()?;
    let external_faults = (matches!(a, AgentSpec::External(_)) && report.forfeits > 0)
        || (matches!(b, AgentSpec::External(_)) && report.opponent_forfeits > 0);
    if external_faults {
        return Err(Failure::External(format!(
            "{} forfeits by the agent, {} by the opponent",
            report.forfeits, report.opponent_forfeits
        ))
        .into());
    }
    Ok(())
}

pub fn replay(path: &Path, match_id: Option<u64>) -> anyhow::Result<()> {
    let log = read_match_log(path).with_context(|| format!("match log {}", path.display()))?;
    let selected: Vec<_> = log.matches.iter().filter(|m| match_id.is_none_or(|id| m.match_id == id)).collect();
    if selected.is_empty() {
        anyhow::bail!("no matching records in {}", path.display());
    }
    let mut failed = 0;
    for m in &selected {
        let r = replay_match(&log.generator, m);
        match &r.mismatch {
            None => println!("match {}: verified ({} actions)", r.match_id, r.actions),
            Some(why) => {
                failed += 1;
                println!("match {}: MISMATCH {why}", r.match_id);
            }
        }
    }
    println!("{} of {} matches verified", selected.len() - failed, selected.len());
    if failed > 0 {
        return Err(Failure::Verification(format!("{failed} matches did not reproduce")).into());
    }
    Ok(())
}
