//! Flat `key = value` run configuration files. Keys mirror the long flag
//! names (dashes or underscores); `#` starts a comment; flags given on the
//! command line always win over file values.

use std::collections::BTreeMap;
use std::path::Path;

use crate::CliError;

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(CliError::Usage(format!(
                "{}:{}: expected `key = value`, got `{raw}`",
                path.display(),
                idx + 1
            )));
        };
        let key = key.trim().replace('-', "_");
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

/// Parse one config value with key context in the error.
pub fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("bad value `{value}` for config key `{key}`")))
}
