//! Operator configuration: models, temperatures, rounds, limits, data paths.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gpa_core::assessment::{AssessConfig, AssessmentMethod, Condition, ItemBank};
use gpa_core::clock::{Clock, ManualClock, SystemClock};
use gpa_core::data::{BigFiveKnowledge, DataError, GameTexts};
use gpa_core::engine::{Assets, EngineConfig};
use gpa_core::llm::synthetic::synthetic_backend;
use gpa_core::llm::{
    read_fixture, ChatBackend, ChatRecord, FixtureEntry, Gateway, GatewayError, LiveBackend, LiveConfig, Limiter,
    LimiterConfig, ReplayBackend,
};
use gpa_core::perception::ChannelBundle;
use gpa_core::personas::{default_persona_bank, PersonaBank};
use gpa_core::prompts::PromptCatalog;
use gpa_core::simulation::SimulationConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Archive(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveSettings {
    pub base_url: String,
    pub api_key_env: String,
    pub timeout_s: u64,
    pub max_attempts: u32,
    pub max_concurrent: usize,
    /// Minimum spacing between request starts, in milliseconds.
    pub min_interval_ms: u64,
}

impl Default for LiveSettings {
    fn default() -> Self {
        Self {
            base_url: LiveConfig::DEFAULT_BASE_URL.into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_s: 60,
            max_attempts: 3,
            max_concurrent: 8,
            min_interval_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerSettings {
    pub bind: String,
    pub archive_dir: Option<PathBuf>,
    /// Assessment shown to consenting players after the game.
    pub report_method: AssessmentMethod,
    pub report_bundle: ChannelBundle,
    /// Seconds between idle-session sweeps.
    pub sweep_interval_s: u64,
}

impl Default for ServerSettings {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            archive_dir: None,
            report_method: AssessmentMethod::Direct,
            report_bundle: ChannelBundle::TBPE,
            sweep_interval_s: 30,
        }
    }
}

/// Cells `simulate` assesses for each simulated player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateAssess {
    pub methods: Vec<AssessmentMethod>,
    pub conditions: Vec<Condition>,
    pub bundles: Vec<ChannelBundle>,
}

impl Default for SimulateAssess {
    fn default() -> Self {
        Self {
            methods: AssessmentMethod::BOTH.to_vec(),
            conditions: vec![Condition::All],
            bundles: vec![ChannelBundle::TBPE],
        }
    }
}

/// Optional replacements for the bundled data files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataPaths {
    pub storyline: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub personas: Option<PathBuf>,
    pub prompts: Option<PathBuf>,
    pub knowledge: Option<PathBuf>,
    pub item_bank: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlatformConfig {
    pub engine: EngineConfig,
    pub assess: AssessConfig,
    pub simulation: SimulationConfig,
    pub simulate_assess: SimulateAssess,
    pub live: LiveSettings,
    pub server: ServerSettings,
    pub data: DataPaths,
}

impl PlatformConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| ConfigError::Invalid {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self, ConfigError> {
        path.map(Self::load).transpose().map(Option::unwrap_or_default)
    }

    pub fn assets(&self) -> Result<Assets, ConfigError> {
        let d = &self.data;
        let mut texts = GameTexts::default();
        if let Some(p) = &d.storyline {
            texts.storyline = gpa_core::data::read_text(p)?.trim_end().to_string();
        }
        if let Some(p) = &d.rules {
            texts.rules = gpa_core::data::read_text(p)?.trim_end().to_string();
        }
        let personas = match &d.personas {
            Some(p) => PersonaBank::load(p)?,
            None => default_persona_bank()?,
        };
        let catalog = match &d.prompts {
            Some(p) => PromptCatalog::load(p)?,
            None => PromptCatalog::bundled(),
        };
        let knowledge = match &d.knowledge {
            Some(p) => BigFiveKnowledge::load(p)?,
            None => BigFiveKnowledge::default(),
        };
        let bank = match &d.item_bank {
            Some(p) => ItemBank::load(p)?,
            None => ItemBank::placeholder(),
        };
        Ok(Assets {
            texts,
            personas,
            catalog,
            knowledge,
            bank,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendChoice {
    /// OpenAI-compatible HTTP endpoint.
    Live,
    /// Recorded fixtures, matched by request hash.
    Replay,
    /// Offline synthetic responder.
    Mock,
}

/// Fixed epoch used by deterministic backends.
pub const REPLAY_EPOCH_MS: u64 = 1_700_000_000_000;

/// Everything needed to mint gateways for one run.
pub struct BackendFactory {
    backend: Arc<dyn ChatBackend>,
    limiter: Option<Arc<Limiter>>,
    deterministic: bool,
}

impl BackendFactory {
    /// `seed` drives the mock responder; `recorded` are extra replay
    /// entries, e.g. the calls stored in an archive.
    pub fn new(
        choice: BackendChoice,
        live: &LiveSettings,
        fixtures: &[PathBuf],
        recorded: &[ChatRecord],
        seed: u64,
    ) -> Result<Self, ConfigError> {
        let backend: Arc<dyn ChatBackend> = match choice {
            BackendChoice::Live => {
                let mut cfg = LiveConfig::from_env(live.base_url.clone(), &live.api_key_env)?;
                cfg.timeout = Duration::from_secs(live.timeout_s);
                cfg.max_attempts = live.max_attempts;
                Arc::new(LiveBackend::new(cfg)?)
            }
            BackendChoice::Replay => {
                let mut entries: Vec<FixtureEntry> = recorded.iter().map(FixtureEntry::from).collect();
                for f in fixtures {
                    entries.extend(read_fixture(f)?);
                }
                if entries.is_empty() {
                    return Err(ConfigError::Usage("the replay backend needs --fixtures or recorded calls".into()));
                }
                Arc::new(ReplayBackend::new(entries))
            }
            BackendChoice::Mock => Arc::new(synthetic_backend(seed)),
        };
        let limiter = (choice == BackendChoice::Live).then(|| {
            Arc::new(Limiter::new(LimiterConfig {
                max_concurrent: live.max_concurrent.max(1),
                min_interval: Duration::from_millis(live.min_interval_ms),
            }))
        });
        Ok(Self {
            backend,
            limiter,
            deterministic: choice != BackendChoice::Live,
        })
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    /// A clock for one unit of work. Offline backends get a manual clock
    /// so archives are reproducible.
    pub fn clock(&self, offset_ms: u64) -> Arc<dyn Clock> {
        if self.deterministic {
            Arc::new(ManualClock::new(REPLAY_EPOCH_MS + offset_ms, 1))
        } else {
            Arc::new(SystemClock)
        }
    }

    pub fn gateway(&self, clock: Arc<dyn Clock>) -> Arc<Gateway> {
        let mut g = Gateway::new(self.backend.clone()).with_clock(clock);
        if let Some(l) = &self.limiter {
            g = g.with_limiter(l.clone());
        }
        Arc::new(g)
    }
}
