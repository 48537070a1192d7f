//! `--config file.json`: a JSON object whose keys are flag names. Values fill
//! in flags that are absent from the command line; explicit flags win.

use std::ffi::OsString;
use std::fs;

use anyhow::{bail, Context, Result};
use serde_json::Value;

/// Returns `args` with the config file's entries appended as flags.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let text = fs::read_to_string(&path).with_context(|| format!("reading config {path}"))?;
    let json: Value = serde_json::from_str(&text).with_context(|| format!("parsing config {path}"))?;
    let Value::Object(map) = json else {
        bail!("config {path}: expected a JSON object");
    };

    let mut expanded = args.clone();
    for (key, value) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if present(&args, &flag) {
            continue;
        }
        match value {
            Value::Bool(true) => expanded.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => expanded.extend([flag.into(), s.into()]),
            Value::Number(n) => expanded.extend([flag.into(), n.to_string().into()]),
            Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|v| match v {
                        Value::String(s) => Ok(s.clone()),
                        Value::Number(n) => Ok(n.to_string()),
                        other => bail!("config {path}: unsupported list item {other} for {key}"),
                    })
                    .collect::<Result<Vec<_>>>()?;
                expanded.extend([flag.into(), parts.join(",").into()]);
            }
            Value::Object(_) => bail!("config {path}: nested objects are not supported ({key})"),
        }
    }
    Ok(expanded)
}

fn config_path(args: &[OsString]) -> Option<String> {
    let mut iter = args.iter().map(|a| a.to_string_lossy());
    while let Some(arg) = iter.next() {
        if arg == "--config" {
            return iter.next().map(|s| s.into_owned());
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            return Some(p.to_owned());
        }
    }
    None
}

fn present(args: &[OsString], flag: &str) -> bool {
    args.iter().any(|a| {
        let a = a.to_string_lossy();
        a == flag || a.strip_prefix(flag).is_some_and(|rest| rest.starts_with('='))
    })
}
