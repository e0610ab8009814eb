//! TOML configs with command-line overrides.

use std::path::{Path, PathBuf};

use mkofl::{Algorithm, ExperimentConfig};
use toml::{Table, Value};

use crate::{CliError, CliResult, ConfigArgs};

/// Reads a config file as a TOML table.
pub fn read_table(path: &Path) -> CliResult<Table> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<Table>().map_err(|e| CliError::config(format!("invalid TOML in {}: {e}", path.display())))
}

/// Parses the right-hand side of `--set`: any TOML value, else a bare string.
pub fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets a dotted key, creating intermediate tables.
pub fn set_path(table: &mut Table, key: &str, value: Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.trim().is_empty()) {
        return Err(CliError::config(format!("invalid override key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for part in parents {
        let entry = cur.entry(part.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::config(format!("override {key:?}: `{part}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Applies `key=value`. Overriding a field of a section the config leaves
/// at its default starts from that default; changing a section's `kind`
/// starts the section afresh.
pub fn apply_override(table: &mut Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::config(format!("override {spec:?} is not of the form key=value")))?;
    let (key, value) = (key.trim(), parse_value(raw.trim()));
    if let Some((head, rest)) = key.split_once('.') {
        if rest == "kind" && table.get(head).and_then(|t| t.get("kind")).is_some_and(|k| *k != value) {
            table.remove(head);
        } else if rest != "kind" && !table.contains_key(head) {
            if let Some(section) = default_table()?.remove(head).filter(Value::is_table) {
                table.insert(head.to_string(), section);
            }
        }
    }
    set_path(table, key, value)
}

fn default_table() -> CliResult<Table> {
    Table::try_from(ExperimentConfig::default()).map_err(|e| CliError::runtime(format!("cannot serialize defaults: {e}")))
}

/// Deserializes a table into a validated config.
pub fn from_table(table: Table, origin: &str) -> CliResult<ExperimentConfig> {
    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::config(format!("invalid config ({origin}): {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_dataset_path(table: &mut Table, base: &Path) {
    if let Some(Value::String(p)) = table.get_mut("dataset").and_then(|d| d.get_mut("path")) {
        if Path::new(p.as_str()).is_relative() {
            *p = base.join(p.as_str()).to_string_lossy().into_owned();
        }
    }
}

fn set_dataset_path(table: &mut Table, path: &Path) -> CliResult<()> {
    let kind = table.get("dataset").and_then(|d| d.get("kind")).and_then(Value::as_str);
    if !matches!(kind, Some("csv" | "time_series")) {
        return Err(CliError::config("--dataset needs a csv or time_series dataset in the config (dataset.kind)"));
    }
    set_path(table, "dataset.path", Value::String(path.to_string_lossy().into_owned()))
}

/// Config from a file (or defaults) with the command-line flags applied.
/// Relative dataset paths in a file are taken relative to that file and
/// `--dataset` relative to the working directory; the loaded config holds
/// the absolute path.
pub fn load(args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    load_file(args.config.as_deref(), args)
}

pub fn load_file(path: Option<&Path>, args: &ConfigArgs) -> CliResult<ExperimentConfig> {
    let mut table = match path {
        Some(p) => read_table(p)?,
        None => Table::new(),
    };
    if let Some(dir) = path.map(|p| p.parent().unwrap_or(Path::new(""))) {
        resolve_dataset_path(&mut table, dir);
    }
    for spec in &args.overrides {
        apply_override(&mut table, spec)?;
    }
    if let Some(d) = &args.dataset {
        set_dataset_path(&mut table, d)?;
    }
    if let Some(t) = args.trials {
        table.insert("trials".into(), Value::Integer(to_i64(t as u64, "trials")?));
    }
    if let Some(s) = args.seed {
        table.insert("seed".into(), Value::Integer(to_i64(s, "seed")?));
    }
    if let Some(a) = &args.algo {
        let algo: Algorithm = a.parse()?;
        table.insert("algorithm".into(), Value::String(algo.as_str().into()));
    }
    if args.verbose_trace {
        table.insert("verbose_trace".into(), Value::Boolean(true));
    }
    let origin = path.map_or_else(|| "defaults".to_string(), |p| p.display().to_string());
    let mut cfg = from_table(table, &origin)?;
    check_dataset_exists(&cfg)?;
    if let Some(p) = cfg.dataset.path() {
        let abs = std::fs::canonicalize(p).map_err(|e| CliError::config(format!("dataset {}: {e}", p.display())))?;
        cfg.dataset.set_path(abs)?;
    }
    Ok(cfg)
}

fn to_i64(v: u64, name: &str) -> CliResult<i64> {
    i64::try_from(v).map_err(|_| CliError::config(format!("{name} = {v} does not fit a TOML integer")))
}

pub fn check_dataset_exists(cfg: &ExperimentConfig) -> CliResult<()> {
    match cfg.dataset.path() {
        Some(p) if !p.is_file() => Err(CliError::config(format!("dataset not found: {}", p.display()))),
        _ => Ok(()),
    }
}

/// TOML text that reproduces `cfg` when loaded back.
pub fn to_toml(cfg: &ExperimentConfig) -> CliResult<String> {
    toml::to_string(cfg).map_err(|e| CliError::runtime(format!("cannot serialize config: {e}")))
}

pub fn write_snapshot(cfg: &ExperimentConfig, path: &Path) -> CliResult<PathBuf> {
    std::fs::write(path, to_toml(cfg)?).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path.to_path_buf())
}
