//! TOML configuration file with `[providers.embedding]`, `[providers.chat]`,
//! `[session]` and `[service]` sections, plus command-line overrides.

use std::fs;
use std::path::Path;

use lexguide_core::providers::{ProviderConfig, ProviderKind, EMBED_API_KEY_ENV};
use lexguide_core::SessionConfig;
use lexguide_service::ServiceConfig;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Providers {
    pub embedding: ProviderConfig,
    pub chat: ProviderConfig,
}

impl Default for Providers {
    fn default() -> Self {
        Self {
            embedding: ProviderConfig {
                api_key_env: EMBED_API_KEY_ENV.into(),
                ..ProviderConfig::default()
            },
            chat: ProviderConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub providers: Providers,
    pub session: SessionConfig,
    pub service: ServiceConfig,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }

    /// `--provider` and `--seed` apply to both providers.
    pub fn apply_overrides(&mut self, provider: Option<ProviderKind>, seed: Option<u64>) {
        for p in [&mut self.providers.embedding, &mut self.providers.chat] {
            if let Some(kind) = provider {
                p.kind = kind;
            }
            if let Some(seed) = seed {
                p.seed = seed;
            }
        }
    }

    /// Stub-only runs use a fixed clock so their output is reproducible.
    pub fn all_stub(&self) -> bool {
        self.providers.embedding.kind == ProviderKind::Stub && self.providers.chat.kind == ProviderKind::Stub
    }
}
