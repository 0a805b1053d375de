//! `--config run.json`: a JSON object of option names and values spliced into
//! the argument list. Options also given on the command line keep that value.

use std::ffi::OsString;
use std::fs;

use serde_json::Value;

use crate::output::Failure;

const SUBCOMMANDS: [&str; 10] = [
    "validate",
    "classical",
    "spectrum",
    "stats",
    "length-spectrum",
    "orbits",
    "localize",
    "coupler",
    "ingest",
    "neff",
];

fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(p.into());
        }
    }
    None
}

fn scalar(v: &Value) -> Result<String, Failure> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(Failure::Other(format!("unsupported config value {other}"))),
    }
}

/// Flags for one config entry; `false` and `null` add nothing.
fn flag_tokens(key: &str, v: &Value) -> Result<Vec<String>, Failure> {
    let flag = format!("--{}", key.replace('_', "-"));
    Ok(match v {
        Value::Bool(true) => vec![flag],
        Value::Bool(false) | Value::Null => vec![],
        Value::Array(items) => std::iter::once(Ok(flag))
            .chain(items.iter().map(scalar))
            .collect::<Result<_, _>>()?,
        other => vec![flag, scalar(other)?],
    })
}

pub fn expand(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| Failure::Io(format!("{}: {e}", path.to_string_lossy())))?;
    let Value::Object(map) = serde_json::from_str::<Value>(&text)
        .map_err(|e| Failure::Other(format!("config {}: {e}", path.to_string_lossy())))?
    else {
        return Err(Failure::Other("config must be a JSON object".into()));
    };
    let given: Vec<String> = argv
        .iter()
        .filter_map(|a| {
            let a = a.to_string_lossy();
            a.starts_with("--")
                .then(|| a.split('=').next().unwrap_or_default().to_string())
        })
        .collect();
    let mut tokens = Vec::new();
    let mut command = None;
    for (k, v) in &map {
        if k == "command" || k == "subcommand" {
            command = Some(scalar(v)?);
        } else if !given.contains(&format!("--{}", k.replace('_', "-"))) {
            tokens.extend(flag_tokens(k, v)?);
        }
    }
    let position = argv
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()));
    let mut out = argv.clone();
    let insert_at = match (position, command) {
        (Some(i), _) => i + 1,
        (None, Some(c)) => {
            out.insert(1, c.into());
            2
        }
        (None, None) => return Ok(argv),
    };
    for (j, t) in tokens.into_iter().enumerate() {
        out.insert(insert_at + j, t.into());
    }
    Ok(out)
}
