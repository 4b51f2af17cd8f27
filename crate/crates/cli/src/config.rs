//! Run configuration: a TOML document naming a goal preset and an
//! evolution profile, with optional tables that override individual
//! fields of either.

use std::fs;
use std::path::{Path, PathBuf};

use nodegen_core::baselines::Method;
use nodegen_core::evolution::EvolutionConfig;
use nodegen_core::goal::GoalSpec;
use nodegen_core::simulator::{CommandEvaluator, Evaluator, SurrogateEvaluator};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

pub const PROFILES: [&str; 4] = ["example1_desk", "example1_full", "example2_desk", "example2_full"];

pub fn profile(name: &str) -> Option<EvolutionConfig> {
    match name {
        "example1_desk" => Some(EvolutionConfig::example1_desk()),
        "example1_full" => Some(EvolutionConfig::example1_full()),
        "example2_desk" => Some(EvolutionConfig::example2_desk()),
        "example2_full" => Some(EvolutionConfig::example2_full()),
        _ => None,
    }
}

/// The file as written by the user.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    schema_version: u32,
    #[serde(default = "default_evaluator")]
    evaluator: String,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_out")]
    out: PathBuf,
    profile: String,
    goal: toml::Table,
    #[serde(default)]
    evolution: toml::Table,
    #[serde(default = "all_methods")]
    baselines: Vec<Method>,
    #[serde(default = "default_bench_seeds")]
    bench_seeds: Vec<u64>,
    #[serde(default)]
    seed_dataset: Option<PathBuf>,
    #[serde(default)]
    command: Option<CommandEvaluator>,
}

fn default_evaluator() -> String {
    "surrogate".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

fn default_bench_seeds() -> Vec<u64> {
    (0..10).collect()
}

/// Fully resolved configuration. Serialized into every manifest; the output
/// directory is left out so that the same run written to two places gives
/// identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub schema_version: u32,
    pub evaluator: String,
    pub seed: u64,
    #[serde(skip)]
    pub out: PathBuf,
    pub profile: String,
    pub goal: GoalSpec,
    pub evolution: EvolutionConfig,
    pub baselines: Vec<Method>,
    pub bench_seeds: Vec<u64>,
    pub seed_dataset: Option<PathBuf>,
    pub command: Option<CommandEvaluator>,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub evaluator: Option<String>,
    pub budget: Option<u64>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Deep merge of `over` into `base`; tables merge key by key, everything
/// else is replaced.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn overlay<T: Serialize + for<'de> Deserialize<'de>>(base: &T, over: toml::Table, what: &str) -> Result<T, CliError> {
    let mut v = serde_json::to_value(base).map_err(|e| config_err(format!("{what}: {e}")))?;
    let o = serde_json::to_value(over).map_err(|e| config_err(format!("{what}: {e}")))?;
    merge(&mut v, o);
    serde_json::from_value(v).map_err(|e| config_err(format!("{what}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, ov)?;
        // relative dataset paths are taken from the config's directory
        if let (Some(p), Some(dir)) = (&cfg.seed_dataset, path.parent()) {
            if p.is_relative() {
                cfg.seed_dataset = Some(dir.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, ov: &Overrides) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        if raw.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(config_err(format!("unsupported config schema_version {}", raw.schema_version)));
        }
        let base = profile(&raw.profile)
            .ok_or_else(|| config_err(format!("unknown profile {:?}; expected one of {PROFILES:?}", raw.profile)))?;
        let mut goal_table = raw.goal;
        let goal = match goal_table.remove("preset") {
            Some(toml::Value::String(name)) => {
                let preset = GoalSpec::by_name(&name).ok_or_else(|| config_err(format!("unknown goal preset {name:?}")))?;
                overlay(&preset, goal_table, "goal")?
            }
            Some(other) => return Err(config_err(format!("goal.preset must be a string, got {other}"))),
            None => serde_json::to_value(goal_table)
                .and_then(serde_json::from_value)
                .map_err(|e| config_err(format!("goal: {e}")))?,
        };
        let mut evolution = overlay(&base, raw.evolution, "evolution")?;
        let seed = ov.seed.unwrap_or(raw.seed);
        evolution.master_seed = seed;
        if let Some(b) = ov.budget {
            evolution.budget = b;
        }
        evolution.validate(&goal).map_err(|e| config_err(e.to_string()))?;
        if goal.required_valid == 0 {
            return Err(config_err("goal.required_valid must be at least 1"));
        }
        if raw.bench_seeds.is_empty() {
            return Err(config_err("bench_seeds is empty"));
        }
        let cfg = Self {
            schema_version: raw.schema_version,
            evaluator: ov.evaluator.clone().unwrap_or(raw.evaluator),
            seed,
            out: ov.out.clone().unwrap_or(raw.out),
            profile: raw.profile,
            goal,
            evolution,
            baselines: raw.baselines,
            bench_seeds: raw.bench_seeds,
            seed_dataset: raw.seed_dataset,
            command: raw.command,
        };
        cfg.evaluator()?;
        Ok(cfg)
    }

    /// The evaluator named by the config.
    pub fn evaluator(&self) -> Result<Box<dyn Evaluator>, CliError> {
        match self.evaluator.as_str() {
            "surrogate" => Ok(Box::new(SurrogateEvaluator::default())),
            "command" => {
                let c = self
                    .command
                    .clone()
                    .ok_or_else(|| config_err("evaluator \"command\" needs a [command] table"))?;
                c.sweep.validate().map_err(|e| config_err(e.to_string()))?;
                Ok(Box::new(c))
            }
            other => Err(config_err(format!("unknown evaluator {other:?}; expected surrogate or command"))),
        }
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_out(&self) -> Result<(), CliError> {
        let probe = self.out.join(".write_probe");
        fs::create_dir_all(&self.out)
            .and_then(|_| fs::write(&probe, b""))
            .and_then(|_| fs::remove_file(&probe))
            .map_err(|e| config_err(format!("output directory {} is not writable: {e}", self.out.display())))
    }

    /// A complete starting config for `profile`.
    pub fn template(profile_name: &str) -> Result<String, CliError> {
        let base = profile(profile_name).ok_or_else(|| config_err(format!("unknown profile {profile_name:?}")))?;
        let goal = if profile_name.starts_with("example2") { "broadband" } else { "dual_resonance" };
        Ok(format!(
            "schema_version = {CONFIG_SCHEMA_VERSION}\n\
             evaluator = \"surrogate\"\n\
             seed = 0\n\
             out = \"runs/{profile_name}\"\n\
             profile = \"{profile_name}\"\n\
             baselines = [\"nelder_mead\", \"cma_es\", \"pso\", \"ga\", \"trust_region\"]\n\
             bench_seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]\n\
             \n\
             [goal]\n\
             preset = \"{goal}\"\n\
             required_valid = 1\n\
             \n\
             [evolution]\n\
             max_evolutions = {}\n\
             budget = {}\n",
            base.max_evolutions, base.budget
        ))
    }
}
