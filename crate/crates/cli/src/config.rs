//! `key = value` config files, merged into argv below explicit flags.

use std::fs;
use std::path::Path;

use clap::{ArgAction, CommandFactory};

use crate::args::Cli;
use crate::error::CliError;

/// Global flags that take a separate value token.
const VALUE_GLOBALS: [&str; 3] = ["--seed", "--config", "--jobs"];

fn config_path(argv: &[String]) -> Option<String> {
    let mut it = argv.iter().skip(1);
    while let Some(t) = it.next() {
        if t == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = t.strip_prefix("--config=") {
            return Some(v.to_string());
        }
    }
    None
}

/// Index of the subcommand token, skipping global flags and their values.
fn subcommand_index(argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let t = &argv[i];
        if VALUE_GLOBALS.contains(&t.as_str()) {
            i += 2;
            continue;
        }
        if !t.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected `key = value`", n + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(CliError::usage(format!("config line {}: empty key", n + 1)));
        }
        out.push((key, value));
    }
    Ok(out)
}

/// How a flag consumes a config value.
enum Shape {
    Switch,
    Counter,
    Valued,
}

fn shape_of(subcommand: &str, key: &str) -> Option<Shape> {
    let root = Cli::command();
    let sub = root.find_subcommand(subcommand)?;
    let arg = root
        .get_arguments()
        .chain(sub.get_arguments())
        .find(|a| a.get_long() == Some(key))?;
    Some(match arg.get_action() {
        ArgAction::SetTrue => Shape::Switch,
        ArgAction::Count => Shape::Counter,
        _ => Shape::Valued,
    })
}

/// Returns `argv` with config-file entries inserted right after the
/// subcommand, skipping any key already given on the command line.
pub fn merge(argv: Vec<String>) -> Result<Vec<String>, CliError> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(Path::new(&path), e))?;
    let entries = parse_config(&text)?;
    let Some(at) = subcommand_index(&argv) else {
        return Ok(argv);
    };
    let subcommand = argv[at].clone();
    let mut extra = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            return Err(CliError::usage("config files cannot include other config files"));
        }
        let flag = format!("--{key}");
        let given = argv.iter().any(|t| *t == flag || t.starts_with(&format!("{flag}=")));
        if given {
            continue;
        }
        let bad = || CliError::usage(format!("config key `{key}`: bad value `{value}`"));
        match shape_of(&subcommand, &key) {
            Some(Shape::Switch) => match value.as_str() {
                "true" | "1" | "yes" => extra.push(flag),
                "false" | "0" | "no" => {}
                _ => return Err(bad()),
            },
            Some(Shape::Counter) => {
                let n: usize = value.parse().map_err(|_| bad())?;
                extra.extend(std::iter::repeat(flag).take(n));
            }
            Some(Shape::Valued) => extra.push(format!("{flag}={value}")),
            None => {
                return Err(CliError::usage(format!(
                    "config key `{key}` is not an option of `{subcommand}`"
                )))
            }
        }
    }
    let mut out = argv;
    out.splice(at + 1..at + 1, extra);
    Ok(out)
}
