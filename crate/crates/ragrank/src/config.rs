//! Experiment configuration: the JSON schema and backend construction.
//!
//! A config names the backends for each role (HTTP endpoints or inline
//! mock scripts), the embedding source, an optional remote rerank
//! endpoint, global knobs (retrieval depth, repetitions, retries), and
//! the pipelines to compare. String values may reference environment
//! variables as `${VAR}`; API keys are never written in configs, only
//! the name of the variable holding them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    ChatBackend, EmbeddingBackend, Gateway, HttpChatBackend, HttpEmbeddingBackend,
    HttpRerankBackend, MockChatBackend, MockEmbeddingBackend, MockMatcher, MockRerankBackend,
    MockReply, RerankBackend, RerankResult, RetryPolicy, Role, RoleBinding,
};
use crate::generate::GenerationConfig;
use crate::index::DEFAULT_EMBED_BATCH;
use crate::prompts::{sha256_hex, PromptOverrides};
use crate::rerank::RerankStrategy;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("environment variable {0} is not set")]
    Env(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn default_true() -> bool {
    true
}

fn default_retrieval_k() -> usize {
    10
}

fn default_repetitions() -> u32 {
    10
}

fn default_parallelism() -> usize {
    1
}

fn default_embed_batch() -> usize {
    DEFAULT_EMBED_BATCH
}

fn default_max_in_flight() -> usize {
    crate::gateway::DEFAULT_MAX_IN_FLIGHT
}

fn default_mock_latency_ms() -> u64 {
    1
}

fn default_mock_dim() -> usize {
    64
}

/// Top-level experiment description, loaded from JSON.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub backends: BackendsConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rerank_endpoint: Option<RerankEndpointConfig>,
    /// Refuse to run when the evaluator resolves to the same
    /// backend-model pair as the generator; a model should not grade
    /// its own answers.
    #[serde(default = "default_true")]
    pub require_distinct_evaluator: bool,
    #[serde(default, skip_serializing_if = "PromptOverrides::is_empty")]
    pub prompt_overrides: PromptOverrides,
    /// Contexts fetched from the vector index before reranking.
    #[serde(default = "default_retrieval_k")]
    pub retrieval_k: usize,
    /// Repeated runs per question-pipeline pair.
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    /// Retrieve with a hypothetical generated answer instead of the raw
    /// question. Pipelines may override.
    #[serde(default)]
    pub hyde_enabled: bool,
    /// Questions processed concurrently. Records land in canonical
    /// order regardless; 1 additionally guarantees byte-identical
    /// output across runs with mock backends.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default = "default_embed_batch")]
    pub embed_batch_size: usize,
    #[serde(default)]
    pub retry: RetryConfig,
    pub pipelines: Vec<PipelineSpec>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            initial_backoff: Duration::from_millis(self.initial_backoff_ms),
        }
    }
}

/// One pipeline to run: a reranking strategy plus optional overrides of
/// the experiment-wide retrieval settings.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub pipeline_id: String,
    pub strategy: RerankStrategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyde_enabled: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval_k: Option<usize>,
}

impl PipelineSpec {
    pub fn effective_k(&self, experiment: &ExperimentConfig) -> usize {
        self.retrieval_k.unwrap_or(experiment.retrieval_k)
    }

    pub fn effective_hyde(&self, experiment: &ExperimentConfig) -> bool {
        self.hyde_enabled.unwrap_or(experiment.hyde_enabled)
    }
}

/// Chat backends per role. Unset inference roles inherit the generator
/// config; the evaluator defaults to a different model entirely.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BackendsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<ChatBackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranker: Option<ChatBackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_generator: Option<ChatBackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluator: Option<ChatBackendConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChatBackendConfig {
    Http {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        #[serde(default)]
        temperature: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_output_tokens: Option<u32>,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
    Mock {
        id: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        model: Option<String>,
        #[serde(default)]
        temperature: f64,
        #[serde(default)]
        script: Vec<MockRuleConfig>,
        #[serde(default = "default_mock_latency_ms")]
        latency_ms: u64,
    },
}

/// One scripted mock rule. `when_contains` absent means match anything;
/// exactly one of `reply` / `reply_sequence` must be set; `fail_times`
/// makes the rule fail transiently that many times before replying.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MockRuleConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply_sequence: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_times: Option<u32>,
}

impl MockRuleConfig {
    fn build(&self) -> Result<(MockMatcher, MockReply), ConfigError> {
        let matcher = match &self.when_contains {
            Some(s) => MockMatcher::Substring(s.clone()),
            None => MockMatcher::Any,
        };
        let reply = match (&self.reply, &self.reply_sequence, self.fail_times) {
            (Some(text), None, None) => MockReply::Text(text.clone()),
            (Some(text), None, Some(failures)) => MockReply::FailThen {
                failures,
                text: text.clone(),
            },
            (None, Some(seq), None) => MockReply::Sequence(seq.clone()),
            _ => {
                return Err(ConfigError::Invalid(
                    "mock rule needs exactly one of \"reply\" or \"reply_sequence\" \
                     (fail_times applies to \"reply\" only)"
                        .into(),
                ))
            }
        };
        Ok((matcher, reply))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingConfig {
    Http {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
    Mock {
        #[serde(default = "default_mock_dim")]
        dim: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<String>,
    },
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Http {
            base_url: "https://api.openai.com".into(),
            model: "text-embedding-3-large".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            dim: 3072,
            id: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RerankEndpointConfig {
    Http {
        base_url: String,
        model: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    MockIdentity,
    MockScripted { results: Vec<RerankResult> },
}

/// Live objects built from a config: the gateway with all four roles
/// bound, the embedder, and the optional rerank endpoint. Mock chat
/// backends are also exposed by role name so tests can inspect call logs.
pub struct ResolvedBackends {
    pub gateway: Gateway,
    pub embedder: Arc<dyn EmbeddingBackend>,
    pub rerank_endpoint: Option<Arc<dyn RerankBackend>>,
    pub mock_chat: BTreeMap<String, Arc<MockChatBackend>>,
}

fn env_ref_re() -> &'static Regex {
    static RE: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

/// Expands `${VAR}` references from the environment; an unset variable
/// is an error naming it.
pub fn expand_env(s: &str) -> Result<String, ConfigError> {
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for caps in env_ref_re().captures_iter(s) {
        let whole = caps.get(0).unwrap();
        let name = &caps[1];
        out.push_str(&s[last..whole.start()]);
        out.push_str(&std::env::var(name).map_err(|_| ConfigError::Env(name.to_string()))?);
        last = whole.end();
    }
    out.push_str(&s[last..]);
    Ok(out)
}

fn resolve_key(api_key_env: &Option<String>) -> Result<Option<String>, ConfigError> {
    match api_key_env {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| ConfigError::Env(name.clone())),
    }
}

impl ChatBackendConfig {
    /// Builds the backend and its role binding. Mock backends are
    /// returned separately so callers can keep a handle to the call log.
    fn build(
        &self,
    ) -> Result<(RoleBinding, Option<Arc<MockChatBackend>>), ConfigError> {
        match self {
            ChatBackendConfig::Http {
                base_url,
                model,
                api_key_env,
                temperature,
                max_output_tokens,
                max_in_flight,
                id,
            } => {
                let base_url = expand_env(base_url)?;
                let model = expand_env(model)?;
                let key = resolve_key(api_key_env)?;
                let mut backend =
                    HttpChatBackend::new(base_url, key).with_max_in_flight(*max_in_flight);
                if let Some(id) = id {
                    backend = backend.with_id(expand_env(id)?);
                }
                Ok((
                    RoleBinding {
                        backend: Arc::new(backend),
                        model,
                        temperature: *temperature,
                        max_output_tokens: *max_output_tokens,
                    },
                    None,
                ))
            }
            ChatBackendConfig::Mock {
                id,
                model,
                temperature,
                script,
                latency_ms,
            } => {
                let mut backend = MockChatBackend::new(id.clone())
                    .with_latency(Duration::from_millis(*latency_ms));
                for rule in script {
                    let (matcher, reply) = rule.build()?;
                    backend = backend.on(matcher, reply);
                }
                let backend = Arc::new(backend);
                Ok((
                    RoleBinding {
                        backend: Arc::clone(&backend) as Arc<dyn ChatBackend>,
                        model: model.clone().unwrap_or_else(|| id.clone()),
                        temperature: *temperature,
                        max_output_tokens: None,
                    },
                    Some(backend),
                ))
            }
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let raw = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig =
            serde_json::from_str(&raw).map_err(|e| ConfigError::Parse {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    /// Static checks that need no environment or network: pipeline ids,
    /// strategy parameters, and retrieval depth versus reranking width.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.pipelines.is_empty() {
            return Err(ConfigError::Invalid("no pipelines configured".into()));
        }
        if self.repetitions == 0 {
            return Err(ConfigError::Invalid("repetitions must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(ConfigError::Invalid("parallelism must be at least 1".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for pipeline in &self.pipelines {
            if pipeline.pipeline_id.is_empty() {
                return Err(ConfigError::Invalid("empty pipeline_id".into()));
            }
            if !seen.insert(pipeline.pipeline_id.as_str()) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate pipeline_id {:?}",
                    pipeline.pipeline_id
                )));
            }
            pipeline
                .strategy
                .validate()
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", pipeline.pipeline_id)))?;
            let k = pipeline.effective_k(self);
            if let Some(top_n) = pipeline.strategy.top_n() {
                if k < top_n {
                    return Err(ConfigError::Invalid(format!(
                        "{}: retrieval_k {k} is smaller than top_n {top_n}",
                        pipeline.pipeline_id
                    )));
                }
            }
            if matches!(
                pipeline.strategy,
                RerankStrategy::RemoteCrossEncoder { .. }
            ) && self.rerank_endpoint.is_none()
            {
                return Err(ConfigError::Invalid(format!(
                    "{}: remote_cross_encoder needs a rerank_endpoint",
                    pipeline.pipeline_id
                )));
            }
        }
        Ok(())
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry.policy()
    }

    /// SHA-256 over the canonical JSON serialization; stored in report
    /// provenance, so two runs compare only when their configs hash
    /// equal.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_string(self).expect("config serializes"))
    }

    /// Builds live backends. Inference roles missing a config inherit
    /// the generator's; the evaluator defaults to a separate model.
    pub fn resolve_backends(&self) -> Result<ResolvedBackends, ConfigError> {
        let default_generator = ChatBackendConfig::Http {
            base_url: "https://api.openai.com".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            max_output_tokens: None,
            max_in_flight: default_max_in_flight(),
            id: None,
        };
        let default_evaluator = ChatBackendConfig::Http {
            base_url: "https://api.openai.com".into(),
            model: "gpt-4".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            temperature: 0.0,
            max_output_tokens: None,
            max_in_flight: default_max_in_flight(),
            id: None,
        };
        let generator_cfg = self.backends.generator.clone().unwrap_or(default_generator);
        let role_cfgs: [(Role, ChatBackendConfig); 4] = [
            (Role::Generator, generator_cfg.clone()),
            (
                Role::Reranker,
                self.backends.reranker.clone().unwrap_or(generator_cfg.clone()),
            ),
            (
                Role::PromptGenerator,
                self.backends
                    .prompt_generator
                    .clone()
                    .unwrap_or(generator_cfg.clone()),
            ),
            (
                Role::Evaluator,
                self.backends.evaluator.clone().unwrap_or(default_evaluator),
            ),
        ];
        let mut builder = Gateway::builder().retry(self.retry_policy());
        let mut mock_chat = BTreeMap::new();
        for (role, cfg) in role_cfgs {
            let (binding, mock) = cfg.build()?;
            if let Some(mock) = mock {
                mock_chat.insert(role.to_string(), mock);
            }
            builder = builder.bind_with(role, binding);
        }
        let embedder: Arc<dyn EmbeddingBackend> = match &self.embedding {
            EmbeddingConfig::Http {
                base_url,
                model,
                api_key_env,
                dim,
                id,
            } => {
                let mut backend = HttpEmbeddingBackend::new(
                    expand_env(base_url)?,
                    resolve_key(api_key_env)?,
                    expand_env(model)?,
                    *dim,
                );
                if let Some(id) = id {
                    backend = backend.with_id(expand_env(id)?);
                }
                Arc::new(backend)
            }
            EmbeddingConfig::Mock { dim, id } => {
                let mut backend = MockEmbeddingBackend::new(*dim);
                if let Some(id) = id {
                    backend = backend.with_id(id.clone());
                }
                Arc::new(backend)
            }
        };
        let rerank_endpoint: Option<Arc<dyn RerankBackend>> = match &self.rerank_endpoint {
            None => None,
            Some(RerankEndpointConfig::Http {
                base_url,
                model,
                api_key_env,
            }) => Some(Arc::new(HttpRerankBackend::new(
                expand_env(base_url)?,
                resolve_key(api_key_env)?,
                expand_env(model)?,
            ))),
            Some(RerankEndpointConfig::MockIdentity) => {
                Some(Arc::new(MockRerankBackend::identity()))
            }
            Some(RerankEndpointConfig::MockScripted { results }) => {
                Some(Arc::new(MockRerankBackend::scripted(results.clone())))
            }
        };
        Ok(ResolvedBackends {
            gateway: builder.build(),
            embedder,
            rerank_endpoint,
            mock_chat,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(pipelines: &str) -> String {
        format!(r#"{{"pipelines": {pipelines}}}"#)
    }

    #[test]
    fn minimal_config_gets_documented_defaults() {
        let json = minimal(r#"[{"pipeline_id": "p", "strategy": {"kind": "none"}}]"#);
        let cfg: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg.retrieval_k, 10);
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.parallelism, 1);
        assert!(cfg.require_distinct_evaluator);
        assert!(!cfg.hyde_enabled);
        assert_eq!(cfg.embed_batch_size, 128);
        assert_eq!(cfg.retry.max_attempts, 3);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let json = r#"{"pipelines": [], "typo_field": 1}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(json).is_err());
    }

    #[test]
    fn validation_catches_structural_problems() {
        let no_pipelines: ExperimentConfig = serde_json::from_str(&minimal("[]")).unwrap();
        assert!(no_pipelines.validate().is_err());

        let dup: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "none"}},
                {"pipeline_id": "p", "strategy": {"kind": "none"}}]"#,
        ))
        .unwrap();
        assert!(dup.validate().is_err());

        let mut k_too_small: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "rebel_one_turn", "top_n": 5}}]"#,
        ))
        .unwrap();
        k_too_small.retrieval_k = 3;
        assert!(k_too_small.validate().is_err());

        let remote: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "remote_cross_encoder"}}]"#,
        ))
        .unwrap();
        let err = remote.validate().unwrap_err();
        assert!(err.to_string().contains("rerank_endpoint"));
    }

    #[test]
    fn pipeline_overrides_win_over_experiment_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "none"}, "retrieval_k": 4, "hyde_enabled": true}]"#,
        ))
        .unwrap();
        assert_eq!(cfg.pipelines[0].effective_k(&cfg), 4);
        assert!(cfg.pipelines[0].effective_hyde(&cfg));
        let plain: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "none"}}]"#,
        ))
        .unwrap();
        assert_eq!(plain.pipelines[0].effective_k(&plain), 10);
        assert!(!plain.pipelines[0].effective_hyde(&plain));
    }

    #[test]
    fn env_expansion_resolves_or_errors() {
        std::env::set_var("RAGRANK_TEST_BASE", "http://localhost:9");
        assert_eq!(
            expand_env("${RAGRANK_TEST_BASE}/api").unwrap(),
            "http://localhost:9/api"
        );
        assert_eq!(expand_env("no refs").unwrap(), "no refs");
        assert!(matches!(
            expand_env("${RAGRANK_TEST_UNSET_VAR}"),
            Err(ConfigError::Env(name)) if name == "RAGRANK_TEST_UNSET_VAR"
        ));
    }

    #[test]
    fn mock_rule_config_requires_exactly_one_reply_form() {
        let bad = MockRuleConfig {
            when_contains: None,
            reply: Some("a".into()),
            reply_sequence: Some(vec!["b".into()]),
            fail_times: None,
        };
        assert!(bad.build().is_err());
        let neither = MockRuleConfig {
            when_contains: None,
            reply: None,
            reply_sequence: None,
            fail_times: None,
        };
        assert!(neither.build().is_err());
    }

    #[test]
    fn mock_backends_resolve_into_a_working_gateway() {
        let json = r#"{
            "backends": {
                "generator": {"kind": "mock", "id": "mock-gen", "script": [
                    {"when_contains": "hello", "reply": "world"}
                ]},
                "evaluator": {"kind": "mock", "id": "mock-judge", "script": [
                    {"reply": "3"}
                ]}
            },
            "embedding": {"kind": "mock", "dim": 16},
            "pipelines": [{"pipeline_id": "p", "strategy": {"kind": "none"}}]
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        let resolved = cfg.resolve_backends().unwrap();
        let reply = resolved
            .gateway
            .complete_text(Role::Generator, "hello there")
            .unwrap();
        assert_eq!(reply.text, "world");
        assert_eq!(resolved.embedder.dim(), 16);
        // Reranker inherited the generator script but is its own instance.
        let rr = resolved
            .gateway
            .complete_text(Role::Reranker, "hello again")
            .unwrap();
        assert_eq!(rr.text, "world");
        assert_eq!(resolved.mock_chat["generator"].call_count(), 1);
        assert_eq!(resolved.mock_chat["reranker"].call_count(), 1);
        // Distinct ids keep the separation check meaningful.
        let prints = resolved.gateway.fingerprints();
        assert_ne!(prints["generator"], prints["evaluator"]);
    }

    #[test]
    fn config_hash_tracks_content() {
        let a: ExperimentConfig = serde_json::from_str(&minimal(
            r#"[{"pipeline_id": "p", "strategy": {"kind": "none"}}]"#,
        ))
        .unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.retrieval_k = 7;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn config_round_trips_through_json() {
        let json = r#"{
            "embedding": {"kind": "mock", "dim": 8},
            "retrieval_k": 6,
            "repetitions": 2,
            "pipelines": [
                {"pipeline_id": "a", "strategy": {"kind": "rebel_two_turn", "top_n": 3}},
                {"pipeline_id": "b", "strategy": {"kind": "mmr", "top_n": 3, "lambda": 0.7}}
            ]
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(json).unwrap();
        let round: ExperimentConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, round);
    }
}
