//! `key=value` configuration files.

use std::fs;
use std::path::Path;

use crate::failure::{CmdResult, Failure};

/// Reads `key=value` lines, skipping blanks and `#` comments.
pub fn read_pairs(path: &Path) -> CmdResult<Vec<(String, String)>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_pairs(&text)
}

pub fn parse_pairs(text: &str) -> CmdResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::usage(format!("config line {}: expected key=value", i + 1)))?;
        out.push((k.trim().to_owned(), v.trim().to_owned()));
    }
    Ok(out)
}

/// Splits a `key=value` flag argument.
pub fn parse_assignment(arg: &str) -> Result<(String, String), String> {
    arg.split_once('=')
        .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
        .ok_or_else(|| format!("expected key=value, got {arg:?}"))
}

/// Prints the effective configuration to stderr.
pub fn echo<K: AsRef<str>>(command: &str, pairs: &[(K, String)]) {
    for (k, v) in pairs {
        eprintln!("# {command}.{} = {v}", k.as_ref());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blanks_are_skipped() {
        let p = parse_pairs("# c\n\nhidden = 16\nseed=3\n").unwrap();
        assert_eq!(p, vec![("hidden".into(), "16".into()), ("seed".into(), "3".into())]);
        assert_eq!(parse_pairs("oops").unwrap_err().code, 2);
    }
}
