//! TOML configuration: one table per subcommand plus a shared `[solver]`
//! table. Command-line flags override file values.

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::{usage, CliResult};

pub fn read_table(path: Option<&Path>) -> CliResult<toml::Table> {
    let Some(path) = path else {
        return Ok(toml::Table::new());
    };
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    text.parse::<toml::Table>()
        .map_err(|e| usage(format!("config {}: {e}", path.display())))
}

/// Deserialize `[name]` from the table, or the type's default if absent.
pub fn section<T: DeserializeOwned + Default>(table: &toml::Table, name: &str) -> CliResult<T> {
    match table.get(name) {
        None => Ok(T::default()),
        Some(v) => v
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| usage(format!("config section [{name}]: {e}"))),
    }
}

/// `flags.field.or(file.field)` for every listed field.
#[macro_export]
macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field.clone(); } )+
    };
}

pub fn require<T>(value: Option<T>, name: &str) -> CliResult<T> {
    value.ok_or_else(|| usage(format!("missing required parameter --{}", name.replace('_', "-"))))
}
