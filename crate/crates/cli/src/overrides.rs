//! Flat `--dotted.key value` overrides applied on top of a training config.

use anyhow::{bail, Context, Result};
use multisr_core::trainer::TrainConfig;
use toml::{Table, Value};

/// Top-level config keys that may be overridden without a dot, e.g.
/// `--iterations 20`. `mode` has its own validated flag.
fn top_level_keys() -> Vec<String> {
    let v = Value::try_from(TrainConfig::default()).expect("config serializes");
    v.as_table()
        .map(|t| t.keys().filter(|k| *k != "mode").cloned().collect())
        .unwrap_or_default()
}

/// Splits `args` into the arguments clap should see and `(key, raw value)`
/// override pairs. Only tokens after `start` are inspected.
pub fn extract(args: Vec<String>, start: usize) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let keys = top_level_keys();
    let mut kept = Vec::with_capacity(args.len());
    let mut out = Vec::new();
    let mut it = args.into_iter().enumerate().peekable();
    while let Some((i, a)) = it.next() {
        let key = a.strip_prefix("--").filter(|_| i >= start);
        let Some(key) = key else {
            kept.push(a);
            continue;
        };
        let (name, inline) = match key.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (key.to_string(), None),
        };
        if !(name.contains('.') || keys.contains(&name)) {
            kept.push(a);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => match it.next() {
                Some((_, v)) => v,
                None => bail!("--{name} needs a value"),
            },
        };
        out.push((name, value));
    }
    Ok((kept, out))
}

fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Applies overrides in order; unknown keys and ill-typed values are
/// reported by name.
pub fn apply(cfg: &TrainConfig, overrides: &[(String, String)]) -> Result<TrainConfig> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut root = Value::try_from(cfg).context("serializing config")?;
    for (key, raw) in overrides {
        let mut cur = root.as_table_mut().expect("config is a table");
        let parts: Vec<&str> = key.split('.').collect();
        let (last, path) = parts.split_last().expect("split yields one part");
        for p in path {
            cur = cur
                .entry(p.to_string())
                .or_insert_with(|| Value::Table(Table::new()))
                .as_table_mut()
                .with_context(|| format!("--{key}: `{p}` is not a section"))?;
        }
        cur.insert(last.to_string(), parse_value(raw));
    }
    let text = toml::to_string(&root).context("serializing overrides")?;
    Ok(TrainConfig::from_toml_str(&text)?)
}
