//! Run configuration assembled from layers.
//!
//! Each setting is taken from the first layer that sets it, in the order
//! command-line flags, environment, config file, built-in default. The
//! config file is TOML:
//!
//! ```toml
//! [paths]
//! dataset = "data/dataset.jsonl"
//! catalog = "data/catalog.json"
//!
//! [pipeline]
//! mode = "task2"
//! threshold = 0.6
//!
//! [bindings.scorer]
//! kind = "remote"
//! url = "http://localhost:9000/score"
//! ```
//!
//! A stage is remote when its kind says so, or when no kind is given and an
//! endpoint URL is set. A remote stage without a URL is an error.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{Bindings, Mode, PipelineConfig};
use crate::remote::{Endpoint, RemoteEmbedder, RemoteGenerator, RemoteScorer, RemoteToolCaller};

pub const ENV_SCORER_URL: &str = "DYNARAG_SCORER_URL";
pub const ENV_GENERATOR_URL: &str = "DYNARAG_GENERATOR_URL";
pub const ENV_EMBEDDER_URL: &str = "DYNARAG_EMBEDDER_URL";
pub const ENV_CALLER_URL: &str = "DYNARAG_CALLER_URL";
pub const ENV_API_TOKEN: &str = "DYNARAG_API_TOKEN";

pub const DEFAULT_PARALLELISM: usize = 4;
pub const DEFAULT_OUTPUT_DIR: &str = "out";
pub const DEFAULT_REMOTE_TIMEOUT_MS: u64 = 30_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0} binding is remote but has no endpoint url")]
    RemoteWithoutEndpoint(&'static str),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BindingKind {
    Reference,
    Remote,
}

impl std::str::FromStr for BindingKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reference" => Ok(BindingKind::Reference),
            "remote" => Ok(BindingKind::Remote),
            other => Err(format!("unknown binding kind {other:?} (expected reference or remote)")),
        }
    }
}

/// Keeps `self`'s value where set, otherwise takes `lower`'s.
pub trait Overlay {
    fn overlay(self, lower: Self) -> Self;
}

macro_rules! layer {
    ($(#[$meta:meta])* $name:ident { $($field:ident : $ty:ty),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $(pub $field: $ty,)*
        }

        impl Overlay for $name {
            fn overlay(self, lower: Self) -> Self {
                Self { $($field: self.$field.overlay(lower.$field),)* }
            }
        }
    };
}

impl<T> Overlay for Option<T> {
    fn overlay(self, lower: Self) -> Self {
        self.or(lower)
    }
}

layer!(PathsLayer {
    dataset: Option<PathBuf>,
    catalog: Option<PathBuf>,
    fixtures: Option<PathBuf>,
    output: Option<PathBuf>,
});

layer!(PipelineLayer {
    mode: Option<Mode>,
    threshold: Option<f64>,
    top_n: Option<usize>,
    top_m: Option<usize>,
    k_max: Option<usize>,
    token_budget: Option<usize>,
    timeout_ms: Option<u64>,
    parallelism: Option<usize>,
});

layer!(StageLayer {
    kind: Option<BindingKind>,
    url: Option<String>,
    timeout_ms: Option<u64>,
});

layer!(BindingsLayer {
    scorer: StageLayer,
    embedder: StageLayer,
    caller: StageLayer,
    generator: StageLayer,
    api_token: Option<String>,
});

layer!(
    /// One source of settings; unset fields defer to lower layers.
    ConfigLayer {
        paths: PathsLayer,
        pipeline: PipelineLayer,
        bindings: BindingsLayer,
    }
);

impl ConfigLayer {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let contents =
            fs::read_to_string(path).map_err(|e| ConfigError::Io { path: display.clone(), message: e.to_string() })?;
        toml::from_str(&contents).map_err(|e| ConfigError::Parse { path: display, message: e.to_string() })
    }

    /// Reads the `DYNARAG_*` variables through `var`. Empty values count as
    /// unset.
    pub fn from_env(var: impl Fn(&str) -> Option<String>) -> Self {
        let get = |name| var(name).filter(|v| !v.trim().is_empty());
        let stage = |name| StageLayer { url: get(name), ..StageLayer::default() };
        ConfigLayer {
            bindings: BindingsLayer {
                scorer: stage(ENV_SCORER_URL),
                embedder: stage(ENV_EMBEDDER_URL),
                caller: stage(ENV_CALLER_URL),
                generator: stage(ENV_GENERATOR_URL),
                api_token: get(ENV_API_TOKEN),
            },
            ..ConfigLayer::default()
        }
    }

    pub fn from_process_env() -> Self {
        Self::from_env(|name| std::env::var(name).ok())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BindingSelection {
    Reference,
    Remote(Endpoint),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BindingsConfig {
    pub scorer: BindingSelection,
    pub embedder: BindingSelection,
    pub caller: BindingSelection,
    pub generator: BindingSelection,
    pub api_token: Option<String>,
}

impl BindingsConfig {
    /// Instantiates the selected bindings.
    pub fn build(&self) -> Bindings {
        let reference = Bindings::reference();
        Bindings {
            scorer: match &self.scorer {
                BindingSelection::Reference => reference.scorer,
                BindingSelection::Remote(e) => Arc::new(RemoteScorer(e.clone())),
            },
            embedder: match &self.embedder {
                BindingSelection::Reference => reference.embedder,
                BindingSelection::Remote(e) => Arc::new(RemoteEmbedder(e.clone())),
            },
            caller: match &self.caller {
                BindingSelection::Reference => reference.caller,
                BindingSelection::Remote(e) => Arc::new(RemoteToolCaller(e.clone())),
            },
            generator: match &self.generator {
                BindingSelection::Reference => reference.generator,
                BindingSelection::Remote(e) => Arc::new(RemoteGenerator(e.clone())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub pipeline: PipelineConfig,
    pub parallelism: usize,
    pub bindings: BindingsConfig,
}

fn stage(name: &'static str, layer: StageLayer, token: &Option<String>) -> Result<BindingSelection, ConfigError> {
    let kind = layer.kind.unwrap_or(if layer.url.is_some() { BindingKind::Remote } else { BindingKind::Reference });
    match (kind, layer.url) {
        (BindingKind::Reference, _) => Ok(BindingSelection::Reference),
        (BindingKind::Remote, None) => Err(ConfigError::RemoteWithoutEndpoint(name)),
        (BindingKind::Remote, Some(url)) => Ok(BindingSelection::Remote(
            Endpoint::new(url)
                .with_token(token.clone())
                .with_timeout(Duration::from_millis(layer.timeout_ms.unwrap_or(DEFAULT_REMOTE_TIMEOUT_MS))),
        )),
    }
}

impl RunConfig {
    /// Merges `layers` from highest to lowest precedence and fills the rest
    /// with defaults.
    pub fn resolve(layers: impl IntoIterator<Item = ConfigLayer>) -> Result<Self, ConfigError> {
        let merged = layers.into_iter().fold(ConfigLayer::default(), |acc, lower| acc.overlay(lower));
        let defaults = PipelineConfig::default();
        let p = merged.pipeline;
        let pipeline = PipelineConfig {
            k_max: p.k_max.unwrap_or(defaults.k_max),
            top_n: p.top_n.unwrap_or(defaults.top_n),
            top_m: p.top_m.unwrap_or(defaults.top_m),
            threshold: p.threshold.unwrap_or(defaults.threshold),
            mode: p.mode.unwrap_or(defaults.mode),
            token_budget: p.token_budget.unwrap_or(defaults.token_budget),
            timeout_ms: p.timeout_ms.unwrap_or(defaults.timeout_ms),
        };
        pipeline.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let parallelism = p.parallelism.unwrap_or(DEFAULT_PARALLELISM);
        if parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be positive".into()));
        }
        let b = merged.bindings;
        let bindings = BindingsConfig {
            scorer: stage("scorer", b.scorer, &b.api_token)?,
            embedder: stage("embedder", b.embedder, &b.api_token)?,
            caller: stage("caller", b.caller, &b.api_token)?,
            generator: stage("generator", b.generator, &b.api_token)?,
            api_token: b.api_token,
        };
        let paths = Paths {
            dataset: merged.paths.dataset,
            catalog: merged.paths.catalog,
            fixtures: merged.paths.fixtures,
            output: merged.paths.output.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        };
        Ok(RunConfig { paths, pipeline, parallelism, bindings })
    }
}
