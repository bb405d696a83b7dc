//! `key = value` config files merged into the argument list.

use std::ffi::OsString;
use std::fs;
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: expected `key = value`")]
    Syntax { path: String, line: usize },
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// values may be quoted.
pub fn parse(text: &str, path: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax {
            path: path.to_owned(),
            line: i + 1,
        })?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                path: path.to_owned(),
                line: i + 1,
            });
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        out.push((key, v.to_owned()));
    }
    Ok(out)
}

fn config_path(args: &[OsString]) -> Option<(usize, usize, OsString)> {
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return args.get(i + 1).map(|p| (i, 2, p.clone()));
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some((i, 1, OsString::from(p)));
        }
    }
    None
}

/// Appends the config file's options that are not already given as flags.
/// A value of `true` becomes a bare switch and `false` is dropped.
pub fn merge(mut args: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let Some((at, len, path)) = config_path(&args) else {
        return Ok(args);
    };
    args.drain(at..at + len);
    let display = Path::new(&path).display().to_string();
    let text = fs::read_to_string(&path).map_err(|source| ConfigError::Read {
        path: display.clone(),
        source,
    })?;
    let given: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_owned())
        .collect();
    for (key, value) in parse(&text, &display)? {
        if given.contains(&key) {
            continue;
        }
        match value.as_str() {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            _ => {
                args.push(format!("--{key}").into());
                args.push(value.into());
            }
        }
    }
    Ok(args)
}
