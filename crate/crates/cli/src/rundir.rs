use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use anyhow::Context;
use log::{LevelFilter, Log, Metadata, Record};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";
pub const LOG_FILE: &str = "run.log";
pub const CONFIG_COPY: &str = "config.toml";

/// Logs to stderr and, once a run directory exists, to its `run.log`.
struct TeeLogger {
    level: LevelFilter,
    file: Mutex<Option<File>>,
}

static LOGGER: OnceLock<TeeLogger> = OnceLock::new();

impl Log for TeeLogger {
    fn enabled(&self, m: &Metadata) -> bool {
        m.level() <= self.level
    }

    fn log(&self, r: &Record) {
        if !self.enabled(r.metadata()) {
            return;
        }
        let line = format!("[{:<5} {}] {}", r.level(), r.target(), r.args());
        eprintln!("{line}");
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            let _ = writeln!(f, "{line}");
        }
    }

    fn flush(&self) {
        if let Some(f) = self.file.lock().expect("log lock").as_mut() {
            let _ = f.flush();
        }
    }
}

pub fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => LevelFilter::Warn,
        (false, 0) => LevelFilter::Info,
        (false, 1) => LevelFilter::Debug,
        _ => LevelFilter::Trace,
    };
    let logger = LOGGER.get_or_init(|| TeeLogger { level, file: Mutex::new(None) });
    if log::set_logger(logger).is_ok() {
        log::set_max_level(level);
    }
}

fn attach_log_file(path: &Path) -> anyhow::Result<()> {
    let f = OpenOptions::new().create(true).append(true).open(path)?;
    if let Some(l) = LOGGER.get() {
        *l.file.lock().expect("log lock") = Some(f);
    }
    Ok(())
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("hashing {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    argv: &'a [String],
    seed: u64,
    overrides: &'a [String],
    crate_version: &'static str,
    /// Relative path → SHA-256 of every artifact except the log.
    files: BTreeMap<String, String>,
}

/// An experiment directory: resolved config copy, log, artifacts and a hash manifest.
pub struct RunDir {
    pub path: PathBuf,
    command: String,
    argv: Vec<String>,
    overrides: Vec<String>,
    seed: u64,
}

impl RunDir {
    pub fn create(
        root: &Path,
        name: &str,
        command: &str,
        config: &ExperimentConfig,
        overrides: Vec<String>,
    ) -> anyhow::Result<RunDir> {
        RunDir::at(&root.join(name), command, config, overrides)
    }

    pub fn at(path: &Path, command: &str, config: &ExperimentConfig, overrides: Vec<String>) -> anyhow::Result<RunDir> {
        let path = path.to_path_buf();
        fs::create_dir_all(&path).with_context(|| format!("creating run directory {}", path.display()))?;
        fs::write(path.join(CONFIG_COPY), config.to_toml())?;
        attach_log_file(&path.join(LOG_FILE))?;
        let argv: Vec<String> = std::env::args().collect();
        log::info!("{command} run in {}", path.display());
        for o in &overrides {
            log::info!("override: {o}");
        }
        Ok(RunDir { path, command: command.into(), argv, overrides, seed: config.seed })
    }

    pub fn file(&self, rel: &str) -> PathBuf {
        self.path.join(rel)
    }

    pub fn write(&self, rel: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        let p = self.file(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> anyhow::Result<PathBuf> {
        self.write(rel, serde_json::to_string_pretty(value)? + "\n")
    }

    /// Hashes every artifact and writes `manifest.json`.
    pub fn finish(self) -> anyhow::Result<PathBuf> {
        let mut files = BTreeMap::new();
        hash_tree(&self.path, &self.path, &mut files)?;
        let m = RunManifest {
            command: &self.command,
            argv: &self.argv,
            seed: self.seed,
            overrides: &self.overrides,
            crate_version: env!("CARGO_PKG_VERSION"),
            files,
        };
        let out = self.path.join(MANIFEST);
        fs::write(&out, serde_json::to_string_pretty(&m)? + "\n")?;
        log::info!("wrote {}", out.display());
        log::logger().flush();
        Ok(out)
    }
}

fn hash_tree(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> anyhow::Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let p = e.path();
        if p.is_dir() {
            hash_tree(root, &p, out)?;
            continue;
        }
        let rel = p.strip_prefix(root)?.to_string_lossy().replace('\\', "/");
        if rel == MANIFEST || rel == LOG_FILE {
            continue;
        }
        out.insert(rel, sha256_file(&p)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_known_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        fs::write(&p, b"abc").unwrap();
        assert_eq!(sha256_file(&p).unwrap(), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn manifest_lists_artifacts_with_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDir::create(dir.path(), "r", "test", &ExperimentConfig::default(), vec!["seed=1 (flag)".into()]).unwrap();
        run.write("curves/a.tsv", "x\n").unwrap();
        let m = run.finish().unwrap();
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(m).unwrap()).unwrap();
        let files = v["files"].as_object().unwrap();
        assert!(files.contains_key("config.toml"));
        assert!(files.contains_key("curves/a.tsv"));
        assert!(!files.contains_key(LOG_FILE));
        assert_eq!(v["overrides"][0], "seed=1 (flag)");
    }
}
