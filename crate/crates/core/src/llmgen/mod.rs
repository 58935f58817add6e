//! Code-policy synthesis through a two-level prompt chain: a planner prompt
//! splits the instruction into steps, then an action prompt and a check prompt
//! turn each step into a [`PlanStep`]. Every answer goes through the DSL
//! parser, failures are fed back to the model a bounded number of times, and
//! finished generations are cached on disk by content hash.

mod cache;
mod templates;
mod transport;

pub use cache::GenerationCache;
pub use templates::{
    objects_line, parse_action, parse_check, parse_plan, Exemplar, PromptRole, PromptTemplate, TemplateSet,
};
pub use transport::{
    parse_completion, ChatMessage, ChatRequest, ChatTransport, HttpTransport, OfflineTransport, ScriptedTransport,
    TransportError,
};

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codepolicy::{CodePolicyProgram, PlanStep};
use crate::sim::TaskSpec;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("{stage}: no valid answer after {attempts} attempts, last error: {reason}")]
    GenerationFailed { stage: String, attempts: usize, reason: String, transcript: Vec<Exchange> },
    #[error("invalid templates: {0}")]
    Templates(String),
    #[error("invalid endpoint config: {0}")]
    Config(String),
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmEndpointConfig {
    /// API root; requests go to `{base_url}/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    /// Re-asks after an answer fails validation.
    pub max_retries: usize,
    pub timeout_secs: u64,
    /// Environment variable holding the bearer token; no auth header when unset.
    pub token_env: Option<String>,
    /// Never touch the network; only cached generations are served.
    pub offline: bool,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            model: "llama3-70b".into(),
            temperature: 0.0,
            max_retries: 3,
            timeout_secs: 120,
            token_env: None,
            offline: false,
        }
    }
}

impl LlmEndpointConfig {
    pub fn validate(&self) -> Result<(), LlmError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(LlmError::Config(format!("temperature must be >= 0, got {}", self.temperature)));
        }
        if self.model.trim().is_empty() {
            return Err(LlmError::Config("model must be non-empty".into()));
        }
        Ok(())
    }
}

/// One request/response round trip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    /// `plan`, or `action[i]` / `check[i]` for plan step `i`.
    pub stage: String,
    pub messages: Vec<ChatMessage>,
    pub response: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub task: String,
    pub key: String,
    pub model: String,
    pub template_versions: Vec<String>,
    pub transcript: Vec<Exchange>,
    pub plan: Option<Vec<String>>,
    pub program: Option<CodePolicyProgram>,
    pub failure: Option<String>,
}

/// Content hash over everything that determines a generation's prompts.
pub fn cache_key(task: &TaskSpec, templates: &TemplateSet, model: &str) -> String {
    let objects: Vec<(&str, &crate::types::ObjectKind)> =
        task.objects.iter().map(|o| (o.name.as_str(), &o.kind)).collect();
    let payload = serde_json::json!({
        "instruction": task.instruction,
        "objects": objects,
        "templates": templates.versions(),
        "model": model,
    });
    hex::encode(Sha256::digest(payload.to_string().as_bytes()))
}

pub struct Generator {
    config: LlmEndpointConfig,
    templates: TemplateSet,
    transport: Arc<dyn ChatTransport>,
    cache: Option<GenerationCache>,
}

impl Generator {
    pub fn new(
        config: LlmEndpointConfig,
        templates: TemplateSet,
        transport: Arc<dyn ChatTransport>,
        cache: Option<GenerationCache>,
    ) -> Result<Self, LlmError> {
        config.validate()?;
        templates.validate().map_err(LlmError::Templates)?;
        Ok(Self { config, templates, transport, cache })
    }

    /// HTTP transport, or the offline one when `config.offline` is set.
    pub fn from_config(config: LlmEndpointConfig, cache: Option<GenerationCache>) -> Result<Self, LlmError> {
        let transport: Arc<dyn ChatTransport> = if config.offline {
            Arc::new(OfflineTransport)
        } else {
            Arc::new(HttpTransport::new(
                &config.base_url,
                config.token_env.as_deref(),
                Duration::from_secs(config.timeout_secs),
            )?)
        };
        Self::new(config, TemplateSet::default(), transport, cache)
    }

    pub fn key(&self, task: &TaskSpec) -> String {
        cache_key(task, &self.templates, &self.config.model)
    }

    fn cached(&self, task: &TaskSpec) -> Result<Option<GenerationRecord>, LlmError> {
        match &self.cache {
            Some(c) => Ok(c.load(&self.key(task))?),
            None => Ok(None),
        }
    }

    /// Sends `input` under `template`, re-asking with the validation error
    /// until `parse` accepts or the retries run out.
    fn ask<T>(
        &self,
        stage: &str,
        template: &PromptTemplate,
        input: String,
        transcript: &mut Vec<Exchange>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, LlmError> {
        let mut messages = vec![ChatMessage::system(&template.system)];
        for ex in &template.exemplars {
            messages.push(ChatMessage::user(&ex.input));
            messages.push(ChatMessage::assistant(&ex.output));
        }
        messages.push(ChatMessage::user(input));
        let attempts = self.config.max_retries + 1;
        let mut reason = String::new();
        for _ in 0..attempts {
            let request = ChatRequest {
                model: self.config.model.clone(),
                messages: messages.clone(),
                temperature: self.config.temperature,
            };
            let response = self.transport.complete(&request)?;
            transcript.push(Exchange { stage: stage.to_string(), messages: messages.clone(), response: response.clone() });
            match parse(&response) {
                Ok(v) => return Ok(v),
                Err(e) => {
                    messages.push(ChatMessage::assistant(response));
                    messages.push(ChatMessage::user(format!(
                        "That answer was rejected: {e}. Answer again using only the required format."
                    )));
                    reason = e;
                }
            }
        }
        Err(LlmError::GenerationFailed { stage: stage.to_string(), attempts, reason, transcript: transcript.clone() })
    }

    fn plan_with(&self, task: &TaskSpec, transcript: &mut Vec<Exchange>) -> Result<Vec<String>, LlmError> {
        let input = format!("{}\nInstruction: {}", objects_line(task), task.instruction);
        self.ask("plan", &self.templates.planner, input, transcript, parse_plan)
    }

    fn step_with(
        &self,
        task: &TaskSpec,
        index: usize,
        description: &str,
        transcript: &mut Vec<Exchange>,
    ) -> Result<PlanStep, LlmError> {
        let scene = objects_line(task);
        let input = format!("{scene}\nInstruction: {}\nStep: {description}", task.instruction);
        let (target, gripper) =
            self.ask(&format!("action[{index}]"), &self.templates.action, input, transcript, |r| {
                parse_action(r, Some(task))
            })?;
        let action_json = serde_json::json!({ "target": target, "gripper": gripper });
        let input = format!("{scene}\nStep: {description}\nAction: {action_json}");
        let check = self.ask(&format!("check[{index}]"), &self.templates.check, input, transcript, |r| {
            parse_check(r, Some(task))
        })?;
        Ok(PlanStep { description: description.to_string(), target, gripper, check })
    }

    /// First level of the chain. Served from the cache when possible.
    pub fn generate_plan(&self, task: &TaskSpec) -> Result<Vec<String>, LlmError> {
        if let Some(plan) = self.cached(task)?.and_then(|r| r.plan) {
            return Ok(plan);
        }
        self.plan_with(task, &mut Vec::new())
    }

    /// Second level of the chain for one step description.
    pub fn generate_step(&self, task: &TaskSpec, description: &str) -> Result<PlanStep, LlmError> {
        self.step_with(task, 0, description, &mut Vec::new())
    }

    /// Full chain. A cached program is returned without any requests; a
    /// fresh one is validated against the task and cached.
    pub fn generate_codepolicy(&self, task: &TaskSpec) -> Result<(CodePolicyProgram, GenerationRecord), LlmError> {
        if let Some(rec) = self.cached(task)? {
            if let Some(p) = rec.program.clone() {
                return Ok((p, rec));
            }
        }
        let mut record = GenerationRecord {
            task: task.name.clone(),
            key: self.key(task),
            model: self.config.model.clone(),
            template_versions: self.templates.versions().iter().map(|s| s.to_string()).collect(),
            transcript: Vec::new(),
            plan: None,
            program: None,
            failure: None,
        };
        let result = self.chain(task, &mut record);
        match result {
            Ok(program) => {
                record.program = Some(program.clone());
                if let Some(c) = &self.cache {
                    c.store(&record)?;
                }
                Ok((program, record))
            }
            Err(e) => {
                if !matches!(e, LlmError::Transport(_)) {
                    record.failure = Some(e.to_string());
                    if let Some(c) = &self.cache {
                        c.store(&record)?;
                    }
                }
                Err(e)
            }
        }
    }

    fn chain(&self, task: &TaskSpec, record: &mut GenerationRecord) -> Result<CodePolicyProgram, LlmError> {
        let plan = self.plan_with(task, &mut record.transcript)?;
        record.plan = Some(plan.clone());
        let mut steps = Vec::with_capacity(plan.len());
        for (i, d) in plan.iter().enumerate() {
            steps.push(self.step_with(task, i, d, &mut record.transcript)?);
        }
        let program = CodePolicyProgram { task: task.name.clone(), steps };
        program.validate_for(task).map_err(|e| LlmError::GenerationFailed {
            stage: "program".into(),
            attempts: 1,
            reason: e.to_string(),
            transcript: record.transcript.clone(),
        })?;
        Ok(program)
    }
}
