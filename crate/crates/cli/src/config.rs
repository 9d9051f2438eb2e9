//! Config-file expansion.
//!
//! A config file mirrors the long flags of the subcommand it is used with,
//! one `key = value` per line (`#` comments allowed) or as a flat JSON
//! object. Its entries are inserted right after the subcommand token, so
//! flags given on the command line override them (`args_override_self`).

use blocktest_core::{Error, Result};

/// Rewrites `argv`, splicing flags derived from `--config <file>` in front
/// of the user's own flags.
pub fn expand_config_args(argv: Vec<String>) -> Result<Vec<String>> {
    let mut config_path: Option<String> = None;
    for (i, arg) in argv.iter().enumerate() {
        if arg == "--config" {
            config_path = argv.get(i + 1).cloned();
            if config_path.is_none() {
                return Err(Error::InvalidInput("--config needs a file path".into()));
            }
        } else if let Some(path) = arg.strip_prefix("--config=") {
            config_path = Some(path.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(argv);
    };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("config file `{path}`: {e}")))?;
    let flags = parse_config(&text)?;

    // the subcommand is the first non-flag token after the binary name
    let subcmd_pos = argv
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| !a.starts_with('-'))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::InvalidInput("--config requires a subcommand".into()))?;

    let mut out = argv[..=subcmd_pos].to_vec();
    out.extend(flags);
    out.extend(argv[subcmd_pos + 1..].iter().cloned());
    Ok(out)
}

fn parse_config(text: &str) -> Result<Vec<String>> {
    let trimmed = text.trim_start();
    if trimmed.starts_with('{') {
        return parse_json_config(trimmed);
    }
    let mut flags = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::InvalidInput(format!("config line `{line}` is not key = value"))
        })?;
        push_flag(&mut flags, key.trim(), value.trim())?;
    }
    Ok(flags)
}

fn parse_json_config(text: &str) -> Result<Vec<String>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("config JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::InvalidInput("config JSON must be an object".into()))?;
    let mut flags = Vec::new();
    for (key, val) in obj {
        let rendered = match val {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(Error::InvalidInput(format!(
                    "config key `{key}` has unsupported value {other}"
                )))
            }
        };
        push_flag(&mut flags, key, &rendered)?;
    }
    Ok(flags)
}

fn push_flag(flags: &mut Vec<String>, key: &str, value: &str) -> Result<()> {
    if key.is_empty() {
        return Err(Error::InvalidInput("empty config key".into()));
    }
    let flag = format!("--{}", key.trim_start_matches("--"));
    match value {
        "true" => flags.push(flag),
        "false" => {}
        other => {
            flags.push(flag);
            flags.push(other.to_string());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn argv(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn no_config_passthrough() {
        let args = argv(&["prog", "calibrate", "--n", "100"]);
        assert_eq!(expand_config_args(args.clone()).unwrap(), args);
    }

    #[test]
    fn key_value_lines_become_flags() {
        let flags =
            parse_config("# comment\nn = 100\nheader = true\nrefresh-sigma = false\n").unwrap();
        assert_eq!(flags, argv(&["--n", "100", "--header"]));
    }

    #[test]
    fn json_object_becomes_flags() {
        let flags = parse_json_config(r#"{"alpha": 0.1}"#).unwrap();
        assert_eq!(flags, argv(&["--alpha", "0.1"]));
    }

    #[test]
    fn config_flags_precede_cli_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        std::fs::write(&path, "n = 100\np = 60\n").unwrap();
        let args = argv(&[
            "prog",
            "calibrate",
            "--config",
            path.to_str().unwrap(),
            "--n",
            "200",
        ]);
        let out = expand_config_args(args).unwrap();
        let n_positions: Vec<usize> = out
            .iter()
            .enumerate()
            .filter(|(_, a)| *a == "--n")
            .map(|(i, _)| i)
            .collect();
        assert_eq!(n_positions.len(), 2);
        assert_eq!(out[n_positions[0] + 1], "100");
        assert_eq!(out[n_positions[1] + 1], "200");
    }
}
