use std::path::{Path, PathBuf};

use anyhow::Context;
use locm_core::bc::BcConfig;
use locm_core::cardgen::GeneratorParams;
use locm_core::rl::{Arm, RlConfig};
use serde::{Deserialize, Serialize};

use crate::Failure;

pub const DATA_ROOT_VAR: &str = "LOCM_DATA_ROOT";
pub const OUTPUT_ROOT_VAR: &str = "LOCM_OUTPUT_ROOT";

/// Everything a run needs. A resolved copy is written into every run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// 0 uses every available core.
    pub workers: usize,
    pub data_root: PathBuf,
    pub output_root: PathBuf,
    pub cardgen: GeneratorParams,
    pub env: EnvSection,
    pub collect: CollectSection,
    pub data: DataSection,
    pub bc: BcConfig,
    pub init: InitSection,
    pub rl: RlConfig,
    pub ablate: AblateSection,
    pub eval: EvalSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            workers: 0,
            data_root: "data".into(),
            output_root: "runs".into(),
            cardgen: GeneratorParams::default(),
            env: EnvSection::default(),
            collect: CollectSection::default(),
            data: DataSection::default(),
            bc: BcConfig::default(),
            init: InitSection::default(),
            rl: RlConfig::default(),
            ablate: AblateSection::default(),
            eval: EvalSection::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// Agent spec: `greedy`, `random`, `checkpoint:PATH` or `external:PROGRAM ARGS`.
    pub opponent: String,
    /// Fixed pool count; absent means a fresh pool every match.
    pub pools: Option<usize>,
}

impl Default for EnvSection {
    fn default() -> Self {
        EnvSection { opponent: "greedy".into(), pools: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CollectSection {
    pub teacher: String,
    pub matches: u64,
    pub pools: Option<usize>,
    /// Also write the line-per-record debug mirror.
    pub debug_mirror: bool,
}

impl Default for CollectSection {
    fn default() -> Self {
        CollectSection { teacher: "greedy".into(), matches: 20_000, pools: None, debug_mirror: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Dataset file; relative paths resolve against `data_root`.
    pub dataset: PathBuf,
    pub train_fraction: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { dataset: "dataset.lctj".into(), train_fraction: 0.9 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitSection {
    /// Pretrained policy for rl-train and the Pretrain ablation arm; absent means scratch.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub pools: Vec<usize>,
    pub seeds: usize,
    pub arms: Vec<Arm>,
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection { pools: vec![32, 64, 128, 256, 512, 1024], seeds: 5, arms: vec![Arm::Pretrain, Arm::Scratch] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub agent: String,
    pub matches: u64,
    /// Drafter for both sides; absent lets each agent draft for itself.
    pub drafter: Option<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { agent: "greedy".into(), matches: 1000, drafter: None }
    }
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
        let Some(path) = path else { return Ok(ExperimentConfig::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())).into())
    }

    /// Applies the data/output root environment variables, returning a note per override.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Vec<String> {
        let mut notes = Vec::new();
        if let Some(v) = get(DATA_ROOT_VAR) {
            notes.push(format!("data_root={v} (env {DATA_ROOT_VAR})"));
            self.data_root = v.into();
        }
        if let Some(v) = get(OUTPUT_ROOT_VAR) {
            notes.push(format!("output_root={v} (env {OUTPUT_ROOT_VAR})"));
            self.output_root = v.into();
        }
        notes
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn data_path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.data_root.join(p)
        }
    }
}
