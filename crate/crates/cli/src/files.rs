use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use movrptw::io::{read_instance_json, read_solomon, FrontRecord, Provenance, SolomonOptions};
use movrptw::nn::load_checkpoint;
use movrptw::train::CheckpointMeta;
use movrptw::vrptw::{self, evaluate, RoutePlan};
use movrptw::{Error, Instance, PolicyNet, Scalar};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

pub const DATA_DIR_VAR: &str = "MOVRPTW_DATA_DIR";

/// Resolves `path` as given, or under `$MOVRPTW_DATA_DIR` (also its `solomon/`
/// subdirectory, with or without a `.txt` suffix) when it does not exist.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let Some(dir) = std::env::var_os(DATA_DIR_VAR).map(PathBuf::from) else {
        return path.to_path_buf();
    };
    let with_txt = path.with_extension("txt");
    [dir.join(path), dir.join("solomon").join(path), dir.join(&with_txt), dir.join("solomon").join(&with_txt)]
        .into_iter()
        .find(|p| p.is_file())
        .unwrap_or_else(|| path.to_path_buf())
}

pub fn load_instance<S: Scalar>(path: &Path, truncate: Option<usize>) -> CliResult<vrptw::Instance<S>> {
    let path = resolve_data_path(path);
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        if truncate.is_some() {
            return Err(CliError::Usage("--truncate applies to Solomon files only".into()));
        }
        return Ok(read_instance_json(&path)?);
    }
    Ok(read_solomon(&path, &SolomonOptions { truncate, ..Default::default() })?.instance)
}

/// Reads a JSON config file, or the defaults when no file is given.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// Loads a trained policy and checks it was trained on as many customers as `instance` has.
pub fn load_policy(path: &Path, instance: &Instance) -> CliResult<PolicyNet> {
    let (params, meta): (_, CheckpointMeta) = load_checkpoint(path)?;
    let trained = meta.config.customer_count;
    if trained != instance.customer_count() {
        return Err(CliError::Usage(format!(
            "{} was trained on {trained}-customer instances but {} has {} customers",
            path.display(),
            instance.name(),
            instance.customer_count()
        )));
    }
    Ok(PolicyNet::from_params(meta.config.policy, params)?)
}

pub fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into()),
        _ => Ok(()),
    }
}

pub fn write_jsonl<T: Serialize>(rows: &[T], path: &Path) -> CliResult<()> {
    create_parent(path)?;
    let mut out = Vec::new();
    for row in rows {
        serde_json::to_writer(&mut out, row).map_err(Error::from)?;
        out.push(b'\n');
    }
    fs::File::create(path).and_then(|mut f| f.write_all(&out)).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Front record for `plan`, with objectives recomputed in double precision.
pub fn record(instance: &vrptw::Instance<f64>, plan: &RoutePlan, weights: Option<(f64, f64)>, provenance: Provenance) -> CliResult<FrontRecord> {
    let o = evaluate(instance, plan)?;
    Ok(FrontRecord { weights, f1: o.cost, f2: o.satisfaction, provenance, routes: plan.clone() })
}
