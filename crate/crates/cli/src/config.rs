//! TOML config files whose keys mirror the command-line flags.
//!
//! Top-level keys set global flags; a table named after a subcommand sets
//! that subcommand's flags. Values become clap defaults, so explicit flags
//! still win.
//!
//! ```toml
//! seed = 7
//! [solve]
//! model = "de"
//! backend = "enum"
//! ```

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Command;

use crate::CliError;

/// Finds `--config <path>` or `--config=<path>` without a full parse.
pub fn find_config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut iter = args.iter().skip(1);
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return iter.next().map(PathBuf::from);
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

fn value_to_string(key: &str, value: &toml::Value) -> Result<String, CliError> {
    Ok(match value {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(items) => {
            let nested = items.iter().any(|v| v.is_array());
            let parts = items.iter().map(|v| value_to_string(key, v)).collect::<Result<Vec<_>, _>>()?;
            parts.join(if nested { ";" } else { "," })
        }
        _ => {
            return Err(CliError::Config {
                field: key.to_string(),
                message: "unsupported value type".into(),
            })
        }
    })
}

fn arg_id(key: &str) -> String {
    key.replace('-', "_")
}

fn apply_table(mut cmd: Command, scope: &str, table: &toml::Table, skip_tables: bool) -> Result<Command, CliError> {
    for (key, value) in table {
        if skip_tables && value.is_table() {
            continue;
        }
        let id = arg_id(key);
        let field = if scope.is_empty() { key.clone() } else { format!("{scope}.{key}") };
        if id == "config" {
            continue;
        }
        if !cmd.get_arguments().any(|a| a.get_id().as_str() == id && a.get_long().is_some()) {
            return Err(CliError::Config {
                field,
                message: "unknown key".into(),
            });
        }
        let text = value_to_string(&field, value)?;
        cmd = cmd.mut_arg(id, move |a| a.default_value(text).required(false));
    }
    Ok(cmd)
}

/// Installs the values of `config` as defaults on `cmd`.
pub fn apply(mut cmd: Command, config: &toml::Table) -> Result<Command, CliError> {
    cmd = apply_table(cmd, "", config, true)?;
    for (name, value) in config {
        let Some(table) = value.as_table() else { continue };
        if cmd.find_subcommand(name).is_none() {
            return Err(CliError::Config {
                field: name.clone(),
                message: "unknown subcommand table".into(),
            });
        }
        let sub = cmd.find_subcommand(name).cloned().expect("checked");
        let sub = apply_table(sub, name, table, false)?;
        cmd = cmd.mut_subcommand(name, move |_| sub);
    }
    Ok(cmd)
}

pub fn load(path: &std::path::Path) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.parse::<toml::Table>().map_err(|e| CliError::Config {
        field: path.display().to_string(),
        message: e.message().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_config_flag() {
        let args: Vec<OsString> = ["mptsp", "--seed", "3", "--config", "a.toml", "solve"].iter().map(OsString::from).collect();
        assert_eq!(find_config_path(&args), Some(PathBuf::from("a.toml")));
        let args: Vec<OsString> = ["mptsp", "--config=b.toml"].iter().map(OsString::from).collect();
        assert_eq!(find_config_path(&args), Some(PathBuf::from("b.toml")));
    }

    #[test]
    fn nested_arrays_join_with_semicolons() {
        let v: toml::Table = "a = [[16, 16], [8, 8, 16]]\nb = [256, 1024]".parse().unwrap();
        assert_eq!(value_to_string("a", &v["a"]).unwrap(), "16,16;8,8,16");
        assert_eq!(value_to_string("b", &v["b"]).unwrap(), "256,1024");
    }
}
