use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::CliResult;

pub const SCHEMA: u32 = 1;

/// `{"schema": 1, "command": ..., ...body}` with `body` an object.
pub fn envelope(command: &str, body: Value) -> Value {
    let mut out = json!({ "schema": SCHEMA, "command": command });
    if let (Some(o), Value::Object(b)) = (out.as_object_mut(), body) {
        o.extend(b);
    }
    out
}

pub fn to_value<T: Serialize>(x: &T) -> CliResult<Value> {
    serde_json::to_value(x).map_err(|e| anyhow::Error::from(e).into())
}

/// Write to `path`, or to standard output when no path is given.
pub fn write_json(path: Option<&Path>, v: &Value) -> CliResult {
    let text = serde_json::to_string_pretty(v).map_err(anyhow::Error::from)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => {
            let mut out = std::io::stdout().lock();
            writeln!(out, "{text}")?;
        }
    }
    Ok(())
}
