//! `--config file.json` support: the file's keys become flags placed right
//! after the subcommand, so anything given on the command line wins.

use std::fs;

use serde_json::Value;

/// Removes `--config <path>` from `args` and splices the file's entries in
/// as flags. Returns the rewritten argument list.
pub fn expand_config(args: Vec<String>) -> Result<Vec<String>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            path = Some(iter.next().ok_or("--config needs a file path")?);
        } else if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(arg);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = fs::read_to_string(&path).map_err(|e| format!("cannot read config {path}: {e}"))?;
    let flags = config_flags(&text).map_err(|e| format!("config {path}: {e}"))?;
    // rest[0] is the program name; the subcommand follows.
    let at = rest.len().min(2);
    rest.splice(at..at, flags);
    Ok(rest)
}

/// Turns a flat JSON object into `--key value` tokens. Underscores in keys
/// map to dashes; `true` becomes a bare switch and `false` is dropped.
pub fn config_flags(text: &str) -> Result<Vec<String>, String> {
    let value: Value = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let Value::Object(map) = value else {
        return Err("expected a JSON object".into());
    };
    let mut flags = Vec::new();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        match value {
            Value::Bool(true) => flags.push(flag),
            Value::Bool(false) | Value::Null => {}
            Value::Number(n) => flags.extend([flag, n.to_string()]),
            Value::String(s) => flags.extend([flag, s]),
            Value::Array(_) | Value::Object(_) => {
                return Err(format!("key `{key}` must be a scalar"));
            }
        }
    }
    Ok(flags)
}
