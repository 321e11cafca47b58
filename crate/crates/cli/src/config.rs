//! `--config` files: "key = value" lines turned into flags placed right
//! after the subcommand, so flags given on the command line override them.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub enum ConfigError {
    Read(PathBuf, std::io::Error),
    Syntax(PathBuf, usize, String),
    MissingValue,
}

/// Converts config text into flag arguments. `true` becomes a bare flag and
/// `false` drops the key.
pub fn config_args(text: &str, path: &Path) -> Result<Vec<OsString>, ConfigError> {
    let mut args = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax(path.to_path_buf(), i + 1, "expected key = value".into()))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            return Err(ConfigError::Syntax(path.to_path_buf(), i + 1, format!("invalid key {key:?}")));
        }
        match value {
            "true" => args.push(format!("--{key}").into()),
            "false" => {}
            v => {
                args.push(format!("--{key}").into());
                args.push(v.into());
            }
        }
    }
    Ok(args)
}

/// Removes `--config PATH` (or `--config=PATH`) from `argv` and splices the
/// file's flags in after the subcommand name.
pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, ConfigError> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut iter = argv.into_iter();
    while let Some(arg) = iter.next() {
        let s = arg.to_string_lossy();
        if s == "--" {
            rest.push(arg);
            rest.extend(iter.by_ref());
            break;
        }
        if s == "--config" {
            path = Some(PathBuf::from(iter.next().ok_or(ConfigError::MissingValue)?));
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = fs::read_to_string(&path).map_err(|e| ConfigError::Read(path.clone(), e))?;
    let injected = config_args(&text, &path)?;
    // the subcommand is the first argument after the program name that is
    // not an option
    let at = rest
        .iter()
        .skip(1)
        .position(|a| !a.to_string_lossy().starts_with('-'))
        .map_or(rest.len(), |p| p + 2);
    rest.splice(at..at, injected);
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(args: &[&str]) -> Vec<OsString> {
        args.iter().map(OsString::from).collect()
    }

    #[test]
    fn key_values_become_flags() {
        let args = config_args("# demo\nbeam = 8\nlambda_lm=0.3 # weight\noracle = true\nquiet = false\n", Path::new(""))
            .unwrap();
        assert_eq!(args, os(&["--beam", "8", "--lambda-lm", "0.3", "--oracle"]));
        assert!(matches!(config_args("beam 8", Path::new("")), Err(ConfigError::Syntax(_, 1, _))));
    }

    #[test]
    fn injected_flags_precede_user_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.conf");
        fs::write(&path, "beam = 4\n").unwrap();
        let argv = os(&["amfusion", "decode", "--config", path.to_str().unwrap(), "--beam", "9"]);
        let out = expand(argv).unwrap();
        assert_eq!(out, os(&["amfusion", "decode", "--beam", "4", "--beam", "9"]));
    }
}
