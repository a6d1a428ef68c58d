//! TOML configuration. A file is a partial tree over the defaults: any key
//! it names replaces the default, unknown keys are rejected, and `--set
//! key=value` overrides are applied on top. Only the top-level `seed` may be
//! set; every stage seed is derived from it.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use snowball_core::eval::benchmark::PretrainPlan;
use snowball_core::rng::derive_seed;
use snowball_core::{ConvConfig, PretrainConfig, RsnTrainConfig, SnowballConfig};
use toml::{Table, Value};

use crate::error::{Error, Result};

/// Settings of the `pretrain` and `run` commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub plan: PretrainPlan,
    pub snowball: SnowballConfig,
    /// Probability above which a query instance is predicted positive.
    pub classifier_threshold: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        let plan = PretrainPlan {
            conv: ConvConfig::default(),
            pretrain: PretrainConfig::default(),
            rsn: RsnTrainConfig::default(),
            rsn_pairs: 2000,
            rsn_positive_fraction: 0.5,
        };
        EngineConfig { seed: 0, plan, snowball: SnowballConfig::default(), classifier_threshold: 0.5 }
    }
}

impl EngineConfig {
    /// Snowball settings with stage seeds derived from the master seed.
    pub fn seeded_snowball(&self) -> SnowballConfig {
        let mut s = self.snowball;
        s.seed = derive_seed(self.seed, 6);
        s.finetune.seed = derive_seed(self.seed, 7);
        s
    }
}

/// Merges `file` (if any) and `overrides` over `defaults`.
pub fn resolve<T>(defaults: &T, file: Option<&Path>, overrides: &[String]) -> Result<T>
where
    T: Serialize + DeserializeOwned,
{
    let mut tree = to_table(defaults)?;
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
        let over: Table = text.parse().map_err(|e: toml::de::Error| Error::format(path, None, e.message().to_string()))?;
        merge(&mut tree, over, "").map_err(|m| Error::format(path, None, m))?;
    }
    for o in overrides {
        let over = parse_override(o)?;
        merge(&mut tree, over, "").map_err(|m| Error::Config(format!("--set {o}: {m}")))?;
    }
    Value::Table(tree).try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))
}

fn to_table<T: Serialize>(value: &T) -> Result<Table> {
    match Value::try_from(value) {
        Ok(Value::Table(t)) => Ok(t),
        Ok(_) => Err(Error::Config("configuration is not a table".into())),
        Err(e) => Err(Error::Config(e.to_string())),
    }
}

/// `a.b.c=value`, where the value is TOML (bare words are taken as strings).
fn parse_override(s: &str) -> Result<Table> {
    let (key, raw) = s.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects key=value, got `{s}`")))?;
    let value = match format!("v = {}", raw.trim()).parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Usage(format!("--set has an empty key segment in `{key}`")));
    }
    let leaf = parts.pop().expect("split yields one part");
    let mut table = Table::new();
    table.insert(leaf.to_string(), value);
    for p in parts.into_iter().rev() {
        let mut outer = Table::new();
        outer.insert(p.to_string(), Value::Table(table));
        table = outer;
    }
    Ok(table)
}

fn merge(base: &mut Table, over: Table, prefix: &str) -> std::result::Result<(), String> {
    for (key, value) in over {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        if key == "seed" && !prefix.is_empty() {
            return Err(format!("`{path}` cannot be set; stage seeds derive from the top-level `seed`"));
        }
        let Some(slot) = base.get_mut(&key) else {
            return Err(format!("unknown key `{path}`"));
        };
        match (slot, value) {
            (Value::Table(b), Value::Table(o)) => merge(b, o, &path)?,
            (Value::Table(_), _) => return Err(format!("`{path}` is a section, not a value")),
            (slot @ Value::Float(_), Value::Integer(i)) => *slot = Value::Float(i as f64),
            (slot, v) if std::mem::discriminant(slot) == std::mem::discriminant(&v) => *slot = v,
            (slot, v) => return Err(format!("`{path}` expects {}, got {}", slot.type_str(), v.type_str())),
        }
    }
    Ok(())
}

/// Scalars for the manifest; serde_json keeps u64 seeds exact.
pub fn snapshot<T: Serialize>(value: &T) -> serde_json::Value {
    serde_json::to_value(value).expect("configurations serialize")
}
