//! Config-file defaults merged into the argument list.
//!
//! Each `key = value` line becomes `--key=value` right after the subcommand
//! name, so explicit flags (which come later) override it. A key is skipped
//! when its option's environment variable is set, giving the order
//! flag > environment > file > built-in default.

use std::path::{Path, PathBuf};

use crate::Failure;

const GLOBAL_WITH_VALUE: [&str; 3] = ["--config", "--out-dir", "--seed"];

fn config_path(argv: &[String]) -> Option<PathBuf> {
    let mut it = argv.iter().skip(1);
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    std::env::var_os("THZREFL_CONFIG").map(PathBuf::from)
}

fn subcommand_position(cmd: &clap::Command, argv: &[String]) -> Option<usize> {
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].as_str();
        if GLOBAL_WITH_VALUE.contains(&a) {
            i += 2;
            continue;
        }
        if a.starts_with('-') {
            i += 1;
            continue;
        }
        return cmd.find_subcommand(a).map(|_| i);
    }
    None
}

/// Parses `key = value` lines; `#` starts a comment, quotes around values are stripped.
pub fn parse_config(text: &str, path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Failure::Usage(format!(
                "{}:{}: expected key = value",
                path.display(),
                n + 1
            )));
        };
        let key = k.trim().to_ascii_lowercase().replace('_', "-");
        let v = v.trim();
        let v = v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v);
        out.push((key, v.to_owned()));
    }
    Ok(out)
}

pub fn merge_config(cmd: &clap::Command, argv: Vec<String>) -> Result<Vec<String>, Failure> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let entries = parse_config(&text, &path)?;
    let Some(pos) = subcommand_position(cmd, &argv) else {
        // no subcommand: let clap report it
        return Ok(argv);
    };
    let sub = cmd.find_subcommand(&argv[pos]).expect("found above");
    let mut inserted = Vec::new();
    for (key, value) in entries {
        if key == "config" {
            continue;
        }
        let arg = sub
            .get_arguments()
            .chain(cmd.get_arguments())
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| {
                Failure::Usage(format!(
                    "{}: unknown key '{key}' for '{}'",
                    path.display(),
                    sub.get_name()
                ))
            })?;
        if arg.get_env().is_some_and(|e| std::env::var_os(e).is_some()) {
            continue;
        }
        let takes_value = arg.get_action().takes_values();
        if takes_value {
            inserted.push(format!("--{key}={value}"));
        } else {
            match value.as_str() {
                "true" | "1" | "yes" => inserted.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => {
                    return Err(Failure::Usage(format!(
                        "{}: '{key}' expects true or false",
                        path.display()
                    )))
                }
            }
        }
    }
    let mut merged = argv[..=pos].to_vec();
    merged.extend(inserted);
    merged.extend_from_slice(&argv[pos + 1..]);
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(s: &[&str]) -> Vec<String> {
        s.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn parses_lines() {
        let e = parse_config("# c\n\ndelta_f = 5\nname = \"x y\"\n", Path::new("c")).unwrap();
        assert_eq!(e, vec![("delta-f".into(), "5".into()), ("name".into(), "x y".into())]);
        assert!(parse_config("oops", Path::new("c")).is_err());
    }

    #[test]
    fn finds_subcommand_after_globals() {
        let cmd = crate::command();
        assert_eq!(subcommand_position(&cmd, &argv(&["t", "--seed", "3", "fit"])), Some(3));
        assert_eq!(subcommand_position(&cmd, &argv(&["t", "materials"])), Some(1));
        assert_eq!(subcommand_position(&cmd, &argv(&["t", "--out-dir", "fit"])), None);
    }
}
