//! The technical manager: prompt a backend with an instance, parse the
//! selection and golden proposal, and re-query with a format reminder when
//! the response does not parse.

use serde::{Deserialize, Serialize};

use crate::llm::{ChatBackend, ChatMessage, ChatRequest};
use crate::model::{GoldenProposal, IssueRecord, ManagerInstance, ManagerOutput, Proposal};
use crate::par::parallel_map;
use crate::prompt::{parse_manager_output, render_candidates_prompt, ParseError, FORMAT_REMINDER};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ManagerRunConfig {
    pub temperature: f64,
    pub max_parse_retries: u32,
    pub max_tokens: u32,
}

impl Default for ManagerRunConfig {
    fn default() -> Self {
        ManagerRunConfig {
            temperature: 0.0,
            max_parse_retries: 2,
            max_tokens: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionError {
    MissingSelection,
    SelectionOutOfRange,
    MissingGolden,
    BackendFailure,
}

impl DecisionError {
    pub fn tag(&self) -> &'static str {
        match self {
            DecisionError::MissingSelection => "MissingSelection",
            DecisionError::SelectionOutOfRange => "SelectionOutOfRange",
            DecisionError::MissingGolden => "MissingGolden",
            DecisionError::BackendFailure => "BackendFailure",
        }
    }
}

impl From<&ParseError> for DecisionError {
    fn from(err: &ParseError) -> Self {
        match err {
            ParseError::MissingSelection => DecisionError::MissingSelection,
            ParseError::SelectionOutOfRange { .. } => DecisionError::SelectionOutOfRange,
            ParseError::MissingGolden(_) => DecisionError::MissingGolden,
        }
    }
}

/// Outcome of one manager run. Exactly one of `output` / `error` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub instance_id: String,
    pub output: Option<ManagerOutput>,
    pub error: Option<DecisionError>,
    /// Last response text seen, parsed or not.
    pub raw_text: String,
    pub detail: Option<String>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub model: String,
}

impl Decision {
    pub fn selected_id(&self) -> Option<u32> {
        self.output.as_ref().map(|o| o.selected_id)
    }

    pub fn to_record(&self) -> DecisionRecord {
        DecisionRecord {
            instance_id: self.instance_id.clone(),
            selected_id: self.selected_id(),
            justification: self.output.as_ref().map(|o| o.justification.clone()),
            golden: self.output.as_ref().map(|o| o.golden.clone()),
            error: self.error.as_ref().map(|e| e.tag().to_string()),
            raw_text: self.raw_text.clone(),
            latency_ms: self.latency_ms,
            attempts: self.attempts,
            model: self.model.clone(),
        }
    }
}

/// One line of the decision log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub instance_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selected_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden: Option<GoldenProposal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default)]
    pub raw_text: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default = "one")]
    pub attempts: u32,
    #[serde(default)]
    pub model: String,
}

fn one() -> u32 {
    1
}

impl DecisionRecord {
    /// Minimal record for a successful selection; convenient for fixtures.
    pub fn selected(instance_id: impl Into<String>, selected_id: u32) -> Self {
        DecisionRecord {
            instance_id: instance_id.into(),
            selected_id: Some(selected_id),
            justification: None,
            golden: None,
            error: None,
            raw_text: String::new(),
            latency_ms: 0,
            attempts: 1,
            model: String::new(),
        }
    }

    pub fn failed(instance_id: impl Into<String>, error: &str) -> Self {
        DecisionRecord {
            selected_id: None,
            error: Some(error.to_string()),
            ..DecisionRecord::selected(instance_id, 0)
        }
    }

    /// The selection, unless the record carries an error.
    pub fn effective_selection(&self) -> Option<u32> {
        if self.error.is_some() {
            None
        } else {
            self.selected_id
        }
    }
}

/// Runs the manager on a validated instance.
pub fn decide(instance: &ManagerInstance, backend: &dyn ChatBackend, config: &ManagerRunConfig) -> Decision {
    decide_candidates(&instance.issue, &instance.proposals, backend, config)
}

/// Runs the manager on an issue and an ordered candidate list that has no
/// ground truth (the pipeline case).
pub fn decide_candidates(
    issue: &IssueRecord,
    proposals: &[Proposal],
    backend: &dyn ChatBackend,
    config: &ManagerRunConfig,
) -> Decision {
    let prompt = render_candidates_prompt(issue, proposals);
    let n = prompt.n_candidates;
    let outcome = query_until_parsed(
        backend,
        config,
        vec![ChatMessage::user(prompt.text)],
        |text| parse_manager_output(text, n).map_err(|e| (DecisionError::from(&e), e.to_string())),
    );
    Decision {
        instance_id: issue.id.clone(),
        model: backend.model().to_string(),
        output: outcome.value,
        error: outcome.error,
        detail: outcome.detail,
        raw_text: outcome.raw_text,
        latency_ms: outcome.latency_ms,
        attempts: outcome.attempts,
        prompt_tokens: outcome.prompt_tokens,
        completion_tokens: outcome.completion_tokens,
    }
}

pub(crate) struct QueryOutcome<T, E> {
    pub value: Option<T>,
    pub error: Option<E>,
    pub detail: Option<String>,
    pub raw_text: String,
    pub latency_ms: u64,
    pub attempts: u32,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// Completion loop shared by the manager and the teacher annotator: query,
/// validate, and on rejection append the reply plus a format reminder
/// before asking again, up to `max_parse_retries` extra attempts.
pub(crate) fn query_until_parsed<T, E: From<DecisionError>>(
    backend: &dyn ChatBackend,
    config: &ManagerRunConfig,
    mut messages: Vec<ChatMessage>,
    accept: impl Fn(&str) -> Result<T, (E, String)>,
) -> QueryOutcome<T, E> {
    let mut outcome = QueryOutcome {
        value: None,
        error: None,
        detail: None,
        raw_text: String::new(),
        latency_ms: 0,
        attempts: 0,
        prompt_tokens: 0,
        completion_tokens: 0,
    };
    let budget = config.max_parse_retries + 1;
    while outcome.attempts < budget {
        outcome.attempts += 1;
        let request = ChatRequest {
            model: backend.model().to_string(),
            messages: messages.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
        };
        let response = match backend.complete(&request) {
            Ok(resp) => resp,
            Err(err) => {
                log::warn!("backend {} failed: {err}", backend.model());
                outcome.error = Some(E::from(DecisionError::BackendFailure));
                outcome.detail = Some(err.to_string());
                return outcome;
            }
        };
        outcome.latency_ms += response.latency_ms;
        outcome.prompt_tokens += response.prompt_tokens;
        outcome.completion_tokens += response.completion_tokens;
        match accept(&response.content) {
            Ok(value) => {
                outcome.value = Some(value);
                outcome.error = None;
                outcome.detail = None;
                outcome.raw_text = response.content;
                return outcome;
            }
            Err((err, detail)) => {
                log::debug!("attempt {} rejected: {detail}", outcome.attempts);
                outcome.error = Some(err);
                outcome.detail = Some(detail.clone());
                messages.push(ChatMessage::assistant(response.content.clone()));
                messages.push(ChatMessage::user(format!("{FORMAT_REMINDER} ({detail})")));
                outcome.raw_text = response.content;
            }
        }
    }
    outcome
}

/// Runs [`decide`] over many instances with up to `parallelism` in flight.
/// Output order follows input order; a failing instance never aborts the
/// batch.
pub fn decide_batch(
    instances: &[ManagerInstance],
    backend: &dyn ChatBackend,
    config: &ManagerRunConfig,
    parallelism: usize,
) -> Vec<Decision> {
    parallel_map(instances, parallelism, |_, inst| decide(inst, backend, config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::MockBackend;
    use crate::model::{Money, Proposal};
    use crate::prompt::render_canonical_response;
    use serde_json::Map;
    use std::collections::HashMap;

    fn instance(id: &str) -> ManagerInstance {
        ManagerInstance {
            issue: IssueRecord {
                id: id.into(),
                repo: "acme/app".into(),
                issue_number: 1,
                title: format!("issue {id}"),
                body: "body".into(),
                price: Money(500),
            },
            proposals: vec![Proposal::new(1, "one"), Proposal::new(2, "two"), Proposal::new(3, "three")],
            ground_truth_id: 2,
            extra: Map::new(),
        }
    }

    fn good(sel: u32) -> String {
        render_canonical_response("t", sel, "j", &GoldenProposal::new("p", "r", "s"))
    }

    #[test]
    fn well_formed_first_try() {
        let mock = MockBackend::sequential("m", [good(2)]);
        let d = decide(&instance("a"), &mock, &ManagerRunConfig::default());
        assert_eq!(d.selected_id(), Some(2));
        assert_eq!(d.attempts, 1);
        assert!(d.error.is_none());
    }

    #[test]
    fn garbage_then_good() {
        let mock = MockBackend::sequential("m", ["garbage".to_string(), good(3)]);
        let d = decide(&instance("a"), &mock, &ManagerRunConfig::default());
        assert_eq!(d.selected_id(), Some(3));
        assert_eq!(d.attempts, 2);
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn retries_exhausted() {
        let mock = MockBackend::sequential("m", ["garbage"; 3]);
        let d = decide(&instance("a"), &mock, &ManagerRunConfig::default());
        assert_eq!(d.error, Some(DecisionError::MissingSelection));
        assert_eq!(d.attempts, 3);
        assert!(d.output.is_none());
        assert_eq!(d.raw_text, "garbage");
    }

    #[test]
    fn reminder_is_appended_on_retry() {
        let seen = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let seen2 = seen.clone();
        let mock = MockBackend::responder("m", move |req| {
            seen2.lock().unwrap().push(req.messages.clone());
            Some(if req.messages.len() == 1 { "Best Proposal: #9".into() } else { good(1) })
        });
        let d = decide(&instance("a"), &mock, &ManagerRunConfig::default());
        assert_eq!(d.selected_id(), Some(1));
        let seen = seen.lock().unwrap();
        assert_eq!(seen[1].len(), 3);
        assert!(seen[1][2].content.starts_with(FORMAT_REMINDER));
        // no system message: the whole prompt is one user turn
        assert_eq!(seen[0].len(), 1);
        assert!(seen[0][0].content.contains("[PROPOSAL 3]"));
    }

    #[test]
    fn backend_failure_is_recorded() {
        let mock = MockBackend::sequential("m", Vec::<String>::new());
        let d = decide(&instance("a"), &mock, &ManagerRunConfig::default());
        assert_eq!(d.error, Some(DecisionError::BackendFailure));
        assert_eq!(d.attempts, 1);
    }

    fn keyed_for(instances: &[ManagerInstance], fail: &str) -> MockBackend {
        let config = ManagerRunConfig::default();
        let mut map = HashMap::new();
        for inst in instances {
            let prompt = crate::prompt::render_manager_prompt(inst);
            let req = ChatRequest {
                model: "m".into(),
                messages: vec![ChatMessage::user(prompt.text)],
                temperature: config.temperature,
                max_tokens: config.max_tokens,
            };
            let reply = if inst.id() == fail { "nope".to_string() } else { good(2) };
            map.insert(req.digest(), reply);
        }
        MockBackend::keyed("m", map)
    }

    #[test]
    fn batch_is_order_stable_and_isolated() {
        let instances: Vec<_> = ["a", "b", "c"].iter().map(|id| instance(id)).collect();
        let mock = keyed_for(&instances, "b");
        let config = ManagerRunConfig { max_parse_retries: 0, ..Default::default() };
        let serial = decide_batch(&instances, &mock, &config, 1);
        let parallel = decide_batch(&instances, &mock, &config, 3);
        assert_eq!(serial, parallel);
        let ids: Vec<_> = serial.iter().map(|d| d.instance_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(serial[1].error.is_some());
        assert!(serial[0].output.is_some() && serial[2].output.is_some());
        assert!(decide_batch(&[], &mock, &config, 4).is_empty());
    }

    #[test]
    fn record_schema() {
        let mock = MockBackend::sequential("m", [good(2)]);
        let rec = decide(&instance("a"), &mock, &ManagerRunConfig::default()).to_record();
        let v = serde_json::to_value(&rec).unwrap();
        for key in ["instance_id", "selected_id", "justification", "golden", "raw_text", "latency_ms", "attempts", "model"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert!(v.get("error").is_none());
        let failed = DecisionRecord::failed("x", "MissingGolden");
        assert_eq!(failed.effective_selection(), None);
    }
}
