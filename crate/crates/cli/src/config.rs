//! Defaults file loaded from `BEEFLOW_CONFIG`, overridable by flags.

use beeflow_core::bt::DEFAULT_PAYLOAD_LIMIT;
use beeflow_core::trace::ProfileDefaults;
use serde::Deserialize;

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub defaults: ProfileDefaults,
    pub payload_limit: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
struct ConfigFile {
    #[serde(default)]
    default_profile: Option<ProfileDefaults>,
    #[serde(default)]
    payload_limit_bytes: Option<usize>,
}

pub fn load(seed: Option<u64>, payload_limit: Option<usize>) -> Result<CliConfig, String> {
    let mut file = ConfigFile::default();
    if let Ok(path) = std::env::var("BEEFLOW_CONFIG") {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| format!("cannot read BEEFLOW_CONFIG `{path}`: {e}"))?;
        file = serde_json::from_str(&text)
            .map_err(|e| format!("cannot parse BEEFLOW_CONFIG `{path}`: {e}"))?;
    }
    Ok(CliConfig {
        defaults: file.default_profile.unwrap_or_default(),
        payload_limit: payload_limit
            .or(file.payload_limit_bytes)
            .unwrap_or(DEFAULT_PAYLOAD_LIMIT),
        seed,
    })
}
