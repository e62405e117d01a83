//! `--config` files: one `key = value` per line, `#` comments.

use crate::error::CliError;
use clap::CommandFactory;
use std::ffi::OsString;
use std::path::Path;

pub fn parse_config(text: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Validation(format!("config line {}: expected key = value", i + 1)));
        };
        let key = k.trim().replace('_', "-");
        let value = v.trim().trim_matches('"').to_string();
        if key.is_empty() {
            return Err(CliError::Validation(format!("config line {}: empty key", i + 1)));
        }
        out.push((key, value));
    }
    Ok(out)
}

fn find_config(args: &[OsString]) -> Option<OsString> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(rest) = s.strip_prefix("--config=") {
            return Some(rest.into());
        }
    }
    None
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let cmd = crate::args::Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|c| c.get_name().to_string()).collect();
    args.iter().position(|a| names.iter().any(|n| a.to_string_lossy() == *n))
}

/// Insert config entries as flags right after the subcommand so explicit flags win.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let Some(path) = find_config(&args) else { return Ok(args) };
    let text = std::fs::read_to_string(Path::new(&path))
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.to_string_lossy())))?;
    let entries = parse_config(&text)?;
    let Some(pos) = subcommand_index(&args) else { return Ok(args) };
    let cli = crate::args::Cli::command();
    let sub_name = args[pos].to_string_lossy().to_string();
    let sub = cli.find_subcommand(&sub_name).expect("known subcommand");
    let mut injected = Vec::new();
    for (key, value) in entries {
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| CliError::Validation(format!("unknown config key '{key}' for {sub_name}")))?;
        if key == "config" {
            return Err(CliError::Validation("config files cannot include other config files".into()));
        }
        let explicit = args[pos + 1..].iter().any(|a| {
            let a = a.to_string_lossy();
            a == format!("--{key}") || a.starts_with(&format!("--{key}="))
                || arg.get_short().is_some_and(|c| a == format!("-{c}"))
        });
        if explicit {
            continue;
        }
        let is_flag = matches!(arg.get_action(), clap::ArgAction::SetTrue);
        if is_flag {
            match value.as_str() {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => return Err(CliError::Validation(format!("config key '{key}' expects true or false"))),
            }
        } else {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let mut out = args[..=pos].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}
