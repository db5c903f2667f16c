//! Labeling reports through an external chat-completion service: prompt
//! construction from a fill-in template, a transport abstraction with a
//! file-backed mock, retry with backoff, and parsing of the one-line
//! answer grammar back into label vectors.
//!
//! The answer grammar is one line of label names separated by Chinese
//! commas (，), or the literal 未见明显异常 on its own. Tests never touch
//! the network; the HTTP transport is compiled only with the `live-llm`
//! feature and configured entirely through environment variables.

use std::collections::VecDeque;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::labeler::report_text;
use crate::normalizer::CleanReport;
use crate::taxonomy::{LabelSchema, SecondaryLabelVector};

pub const PLACEHOLDER: &str = "{{{placeholder}}}";

const DEFAULT_TEMPLATE_TEXT: &str = include_str!("../data/prompt_template.txt");

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("prompt template: {detail}")]
    Template { detail: String },
    #[error("transport failed after {attempts} attempt(s): {source}")]
    TransportFailed {
        attempts: u32,
        source: TransportError,
    },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Failure categories a transport can report. Only authentication
/// failures are terminal: everything else is considered transient.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("authentication rejected: {detail}")]
    Auth { detail: String },
    #[error("rate limited: {detail}")]
    RateLimited { detail: String },
    #[error("network failure: {detail}")]
    Network { detail: String },
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        !matches!(self, TransportError::Auth { .. })
    }
}

/// A prompt with exactly one placeholder the report text drops into.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    /// Validate placeholder cardinality only.
    pub fn new(text: impl Into<String>) -> Result<Self, LlmError> {
        let text = text.into();
        match text.matches(PLACEHOLDER).count() {
            1 => Ok(Self { text }),
            0 => Err(LlmError::Template {
                detail: format!("placeholder {PLACEHOLDER} missing"),
            }),
            n => Err(LlmError::Template {
                detail: format!("placeholder {PLACEHOLDER} occurs {n} times, expected 1"),
            }),
        }
    }

    /// Validate placeholder cardinality and require every schema label to
    /// be mentioned at least `min_mentions` times (so the few-shot block
    /// actually covers the label space).
    pub fn with_coverage(
        text: impl Into<String>,
        schema: &LabelSchema,
        min_mentions: usize,
    ) -> Result<Self, LlmError> {
        let template = Self::new(text)?;
        for label in schema.secondary_labels() {
            let count = template.text.matches(label.as_str()).count();
            if count < min_mentions {
                return Err(LlmError::Template {
                    detail: format!(
                        "label {label:?} mentioned {count} time(s), need at least {min_mentions}"
                    ),
                });
            }
        }
        Ok(template)
    }

    /// The template shipped with the crate, which mentions every default
    /// label at least twice.
    pub fn default_template(schema: &LabelSchema) -> Result<Self, LlmError> {
        Self::with_coverage(DEFAULT_TEMPLATE_TEXT, schema, 2)
    }

    pub fn load(
        path: impl AsRef<Path>,
        schema: &LabelSchema,
        min_mentions: usize,
    ) -> Result<Self, LlmError> {
        Self::with_coverage(fs::read_to_string(path)?, schema, min_mentions)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitute the serialized report (findings plus impression) for
    /// the placeholder; everything else is copied byte for byte.
    pub fn build_prompt(&self, report: &CleanReport) -> String {
        self.text.replacen(PLACEHOLDER, &report_text(report), 1)
    }
}

/// What became of one response: a parsed label vector (always
/// exclusion-consistent) or a diagnosis of why parsing failed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseOutcome {
    Labels(SecondaryLabelVector),
    Failure {
        reason: String,
        unknown_names: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterResponse {
    pub raw: String,
    pub outcome: ParseOutcome,
}

impl AdapterResponse {
    pub fn labels(&self) -> Option<&SecondaryLabelVector> {
        match &self.outcome {
            ParseOutcome::Labels(v) => Some(v),
            ParseOutcome::Failure { .. } => None,
        }
    }
}

/// Render a label vector in the answer grammar: every positive label name
/// in schema order, joined by Chinese commas.
pub fn serialize_labels(labels: &SecondaryLabelVector, schema: &LabelSchema) -> String {
    let names: Vec<&str> = schema
        .secondary_labels()
        .iter()
        .enumerate()
        .filter(|(i, _)| labels.get(*i))
        .map(|(_, name)| name.as_str())
        .collect();
    names.join("，")
}

/// Parse a model response. The answer is the first non-empty line; a
/// trailing 。 is tolerated. Unknown label names are reported, never
/// silently dropped. A successful parse is always exclusion-consistent.
pub fn parse_response(text: &str, schema: &LabelSchema) -> AdapterResponse {
    let raw = text.to_string();
    let line = text.lines().map(str::trim).find(|l| !l.is_empty());
    let line = match line {
        Some(l) => l.trim_end_matches('。').trim(),
        None => {
            return AdapterResponse {
                raw,
                outcome: ParseOutcome::Failure {
                    reason: "empty response".to_string(),
                    unknown_names: Vec::new(),
                },
            }
        }
    };
    if line.is_empty() {
        return AdapterResponse {
            raw,
            outcome: ParseOutcome::Failure {
                reason: "empty answer line".to_string(),
                unknown_names: Vec::new(),
            },
        };
    }
    let mut labels = SecondaryLabelVector::all_negative();
    let mut unknown = Vec::new();
    for piece in line.split('，').map(str::trim).filter(|p| !p.is_empty()) {
        match schema.secondary_index(piece) {
            Some(i) => labels.set(i, true),
            None => unknown.push(piece.to_string()),
        }
    }
    let outcome = if unknown.is_empty() {
        ParseOutcome::Labels(schema.enforce_exclusion(&labels))
    } else {
        ParseOutcome::Failure {
            reason: format!("{} unknown label name(s)", unknown.len()),
            unknown_names: unknown,
        }
    };
    AdapterResponse { raw, outcome }
}

/// Anything that can turn a prompt into raw completion text.
pub trait Transport {
    fn send(&mut self, prompt: &str) -> Result<String, TransportError>;
    /// Model identifier recorded verbatim in the audit log.
    fn model_name(&self) -> &str;
}

/// Scripted transport for tests: pops one canned line per request.
/// Lines beginning with `!auth`, `!rate`, or `!net` produce the matching
/// error instead of a response; an exhausted queue is a network failure.
#[derive(Debug, Clone)]
pub struct MockTransport {
    responses: VecDeque<String>,
    model: String,
    pub sent_prompts: Vec<String>,
}

impl MockTransport {
    pub fn new(responses: impl IntoIterator<Item = String>, model: impl Into<String>) -> Self {
        Self {
            responses: responses.into_iter().collect(),
            model: model.into(),
            sent_prompts: Vec::new(),
        }
    }

    /// One scripted response per line.
    pub fn from_file(path: impl AsRef<Path>, model: impl Into<String>) -> Result<Self, LlmError> {
        let text = fs::read_to_string(path)?;
        Ok(Self::new(text.lines().map(str::to_string), model))
    }

    pub fn remaining(&self) -> usize {
        self.responses.len()
    }
}

impl Transport for MockTransport {
    fn send(&mut self, prompt: &str) -> Result<String, TransportError> {
        self.sent_prompts.push(prompt.to_string());
        let line = self
            .responses
            .pop_front()
            .ok_or_else(|| TransportError::Network {
                detail: "mock response queue exhausted".to_string(),
            })?;
        if let Some(detail) = line.strip_prefix("!auth") {
            return Err(TransportError::Auth {
                detail: detail.trim().to_string(),
            });
        }
        if let Some(detail) = line.strip_prefix("!rate") {
            return Err(TransportError::RateLimited {
                detail: detail.trim().to_string(),
            });
        }
        if let Some(detail) = line.strip_prefix("!net") {
            return Err(TransportError::Network {
                detail: detail.trim().to_string(),
            });
        }
        Ok(line)
    }

    fn model_name(&self) -> &str {
        &self.model
    }
}

/// Exponential backoff: attempt n sleeps base * 2^(n-1) before retrying.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Send with retries on transient failures. Authentication errors are
/// returned immediately; the error always carries the attempt count.
pub fn send_with_retry(
    transport: &mut dyn Transport,
    prompt: &str,
    policy: &RetryPolicy,
) -> Result<(String, u32), LlmError> {
    assert!(policy.max_attempts >= 1, "retry policy allows no attempts");
    let mut attempt = 0;
    loop {
        attempt += 1;
        match transport.send(prompt) {
            Ok(text) => return Ok((text, attempt)),
            Err(err) => {
                if !err.is_retryable() || attempt >= policy.max_attempts {
                    return Err(LlmError::TransportFailed {
                        attempts: attempt,
                        source: err,
                    });
                }
                let backoff = policy.base_delay * 2u32.saturating_pow(attempt - 1);
                if !backoff.is_zero() {
                    std::thread::sleep(backoff);
                }
            }
        }
    }
}

/// One line of the request/response audit log. No timestamps: identical
/// runs must write identical logs.
#[derive(Debug, Serialize)]
pub struct AuditRecord<'a> {
    pub sample_id: &'a str,
    pub model: &'a str,
    pub attempts: u32,
    pub prompt_chars: usize,
    pub response: &'a str,
}

pub fn write_audit_line(out: &mut dyn Write, record: &AuditRecord) -> Result<(), LlmError> {
    let line = serde_json::to_string(record).expect("audit record serializes");
    writeln!(out, "{line}")?;
    Ok(())
}

/// Label a batch of reports through a transport, sequentially, keyed by
/// accession number. Transport failures abort the run (partial results
/// are not silently dropped on the floor); parse failures do not.
pub fn label_with_llm(
    transport: &mut dyn Transport,
    template: &PromptTemplate,
    reports: &[CleanReport],
    schema: &LabelSchema,
    policy: &RetryPolicy,
    mut audit: Option<&mut dyn Write>,
) -> Result<Vec<(String, AdapterResponse)>, LlmError> {
    let mut out = Vec::with_capacity(reports.len());
    for report in reports {
        let prompt = template.build_prompt(report);
        let (text, attempts) = send_with_retry(transport, &prompt, policy)?;
        if let Some(w) = audit.as_deref_mut() {
            write_audit_line(
                w,
                &AuditRecord {
                    sample_id: &report.acc,
                    model: transport.model_name(),
                    attempts,
                    prompt_chars: prompt.chars().count(),
                    response: &text,
                },
            )?;
        }
        out.push((report.acc.clone(), parse_response(&text, schema)));
    }
    Ok(out)
}

#[cfg(feature = "live-llm")]
pub use http::HttpTransport;

#[cfg(feature = "live-llm")]
mod http {
    //! Chat-completion transport over HTTP, modeled on the common
    //! `POST {endpoint}` JSON shape. Compiled only with `live-llm`;
    //! configured via CXRLAB_LLM_ENDPOINT, CXRLAB_LLM_API_KEY, and
    //! CXRLAB_LLM_MODEL.

    use super::{Transport, TransportError};

    pub struct HttpTransport {
        endpoint: String,
        api_key: String,
        model: String,
        client: reqwest::blocking::Client,
    }

    impl HttpTransport {
        pub fn new(
            endpoint: impl Into<String>,
            api_key: impl Into<String>,
            model: impl Into<String>,
        ) -> Self {
            Self {
                endpoint: endpoint.into(),
                api_key: api_key.into(),
                model: model.into(),
                client: reqwest::blocking::Client::new(),
            }
        }

        pub fn from_env() -> Result<Self, TransportError> {
            let var = |name: &str| {
                std::env::var(name).map_err(|_| TransportError::Auth {
                    detail: format!("environment variable {name} not set"),
                })
            };
            Ok(Self::new(
                var("CXRLAB_LLM_ENDPOINT")?,
                var("CXRLAB_LLM_API_KEY")?,
                var("CXRLAB_LLM_MODEL")?,
            ))
        }
    }

    impl Transport for HttpTransport {
        fn send(&mut self, prompt: &str) -> Result<String, TransportError> {
            let body = serde_json::json!({
                "model": self.model,
                "messages": [{"role": "user", "content": prompt}],
            });
            let response = self
                .client
                .post(&self.endpoint)
                .bearer_auth(&self.api_key)
                .json(&body)
                .send()
                .map_err(|e| TransportError::Network {
                    detail: e.to_string(),
                })?;
            let status = response.status();
            if status.as_u16() == 401 || status.as_u16() == 403 {
                return Err(TransportError::Auth {
                    detail: format!("status {status}"),
                });
            }
            if status.as_u16() == 429 {
                return Err(TransportError::RateLimited {
                    detail: format!("status {status}"),
                });
            }
            if !status.is_success() {
                return Err(TransportError::Network {
                    detail: format!("status {status}"),
                });
            }
            let value: serde_json::Value =
                response.json().map_err(|e| TransportError::Network {
                    detail: format!("malformed response body: {e}"),
                })?;
            value
                .pointer("/choices/0/message/content")
                .and_then(|v| v.as_str())
                .map(str::to_string)
                .ok_or_else(|| TransportError::Network {
                    detail: "response missing choices[0].message.content".to_string(),
                })
        }

        fn model_name(&self) -> &str {
            &self.model
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(findings: &str, impression: &str) -> CleanReport {
        CleanReport {
            acc: "L1".to_string(),
            findings: findings.to_string(),
            impression: impression.to_string(),
            clinical_dx: String::new(),
            sex: "男".to_string(),
            age_raw: "060Y".to_string(),
            clinical_desc: String::new(),
            age_years: 60,
        }
    }

    #[test]
    fn substitution_is_exact() {
        let tmpl = PromptTemplate::new(format!("X{PLACEHOLDER}Y")).unwrap();
        assert_eq!(tmpl.build_prompt(&report("R", "")), "XRY");
        assert_eq!(tmpl.build_prompt(&report("", "R")), "XRY");
    }

    #[test]
    fn placeholder_cardinality_is_enforced() {
        assert!(matches!(
            PromptTemplate::new("no placeholder"),
            Err(LlmError::Template { .. })
        ));
        assert!(matches!(
            PromptTemplate::new(format!("{PLACEHOLDER}{PLACEHOLDER}")),
            Err(LlmError::Template { .. })
        ));
    }

    #[test]
    fn shipped_template_covers_every_label_twice() {
        let schema = LabelSchema::default_schema();
        let tmpl = PromptTemplate::default_template(&schema).unwrap();
        assert_eq!(tmpl.text().matches(PLACEHOLDER).count(), 1);
        for label in schema.secondary_labels() {
            assert!(
                tmpl.text().matches(label.as_str()).count() >= 2,
                "label {label} under-mentioned"
            );
        }
    }

    #[test]
    fn coverage_validation_catches_missing_labels() {
        let schema = LabelSchema::default_schema();
        let text = format!("只有肺结节。{PLACEHOLDER}");
        assert!(matches!(
            PromptTemplate::with_coverage(&text, &schema, 1),
            Err(LlmError::Template { detail }) if detail.contains("未见明显异常")
        ));
    }

    #[test]
    fn prompt_contains_report_verbatim() {
        let schema = LabelSchema::default_schema();
        let tmpl = PromptTemplate::default_template(&schema).unwrap();
        let rpt = report(
            "双肺纹理增多，见多发网格影。",
            "双肺间质性病变伴左下肺感染？双肺结节。",
        );
        let prompt = tmpl.build_prompt(&rpt);
        assert!(prompt.contains("双肺间质性病变伴左下肺感染？"));
        assert!(!prompt.contains(PLACEHOLDER));
    }

    #[test]
    fn parses_disease_list() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("肺结节，胸腔积液", &schema);
        let labels = resp.labels().expect("should parse");
        assert!(labels.get(schema.secondary_index("肺结节").unwrap()));
        assert!(labels.get(schema.secondary_index("胸腔积液").unwrap()));
        assert_eq!(labels.count_positive(), 2);
    }

    #[test]
    fn parses_normal_answer() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("未见明显异常。\n", &schema);
        let labels = resp.labels().expect("should parse");
        assert!(labels.get(schema.normal_secondary_index()));
        assert_eq!(labels.count_positive(), 1);
    }

    #[test]
    fn answer_with_internal_enumeration_commas_parses() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("主动脉迂曲、硬化，脊柱侧弯、脊柱后凸", &schema);
        let labels = resp.labels().expect("should parse");
        assert!(labels.get(schema.secondary_index("主动脉迂曲、硬化").unwrap()));
        assert!(labels.get(schema.secondary_index("脊柱侧弯、脊柱后凸").unwrap()));
    }

    #[test]
    fn normal_plus_disease_is_fixed_up() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("未见明显异常，肺结节", &schema);
        let labels = resp.labels().expect("should parse");
        assert!(!labels.get(schema.normal_secondary_index()));
        assert!(labels.get(schema.secondary_index("肺结节").unwrap()));
    }

    #[test]
    fn unknown_names_are_reported_not_dropped() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("肺结节，心脏肥大症", &schema);
        match resp.outcome {
            ParseOutcome::Failure {
                ref unknown_names, ..
            } => {
                assert_eq!(unknown_names, &["心脏肥大症".to_string()]);
            }
            ref other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn garbage_and_empty_responses_fail_gracefully() {
        let schema = LabelSchema::default_schema();
        assert!(parse_response("", &schema).labels().is_none());
        assert!(parse_response("  \n\n", &schema).labels().is_none());
        assert!(parse_response("抱歉，我无法判断。", &schema)
            .labels()
            .is_none());
        assert!(parse_response("。", &schema).labels().is_none());
    }

    #[test]
    fn first_nonempty_line_is_the_answer() {
        let schema = LabelSchema::default_schema();
        let resp = parse_response("\n  肺结节  \n后面是解释文字，不应影响解析。", &schema);
        let labels = resp.labels().expect("should parse");
        assert!(labels.get(schema.secondary_index("肺结节").unwrap()));
        assert_eq!(labels.count_positive(), 1);
    }

    #[test]
    fn serialize_then_parse_is_identity_on_consistent_vectors() {
        let schema = LabelSchema::default_schema();
        let sample_sets: [&[&str]; 4] = [
            &["未见明显异常"],
            &["肺结节", "胸腔积液"],
            &["未见明显异常", "PICC"],
            &["肺纹理增多", "主动脉迂曲、硬化", "脊柱侧弯、脊柱后凸"],
        ];
        for names in sample_sets {
            let mut v = SecondaryLabelVector::all_negative();
            for name in names {
                v.set(schema.secondary_index(name).unwrap(), true);
            }
            let v = schema.enforce_exclusion(&v);
            let resp = parse_response(&serialize_labels(&v, &schema), &schema);
            assert_eq!(resp.labels(), Some(&v));
        }
    }

    #[test]
    fn retry_succeeds_after_transient_failures() {
        let mut mock = MockTransport::new(
            [
                "!net flaky".to_string(),
                "!rate slow".to_string(),
                "肺结节".to_string(),
            ],
            "test-model",
        );
        let policy = RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::ZERO,
        };
        let (text, attempts) = send_with_retry(&mut mock, "p", &policy).unwrap();
        assert_eq!(text, "肺结节");
        assert_eq!(attempts, 3);
        assert_eq!(mock.sent_prompts.len(), 3);
    }

    #[test]
    fn auth_failure_is_never_retried() {
        let mut mock = MockTransport::new(
            ["!auth bad key".to_string(), "肺结节".to_string()],
            "test-model",
        );
        let policy = RetryPolicy {
            max_attempts: 5,
            base_delay: Duration::ZERO,
        };
        match send_with_retry(&mut mock, "p", &policy) {
            Err(LlmError::TransportFailed {
                attempts,
                source: TransportError::Auth { .. },
            }) => assert_eq!(attempts, 1),
            other => panic!("expected auth failure, got {other:?}"),
        }
        assert_eq!(mock.remaining(), 1, "no extra request was issued");
    }

    #[test]
    fn exhausted_retries_report_attempt_count() {
        let mut mock = MockTransport::new(
            vec![
                "!net a".to_string(),
                "!net b".to_string(),
                "!net c".to_string(),
            ],
            "test-model",
        );
        let policy = RetryPolicy {
            max_attempts: 2,
            base_delay: Duration::ZERO,
        };
        match send_with_retry(&mut mock, "p", &policy) {
            Err(LlmError::TransportFailed { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn batch_labeling_writes_audit_log() {
        let schema = LabelSchema::default_schema();
        let tmpl = PromptTemplate::default_template(&schema).unwrap();
        let reports = vec![
            {
                let mut r = report("双肺结节。", "双肺结节，随诊。");
                r.acc = "A1".to_string();
                r
            },
            {
                let mut r = report("两肺清晰。", "未见明显异常。");
                r.acc = "A2".to_string();
                r
            },
        ];
        let mut mock = MockTransport::new(
            ["肺结节".to_string(), "未见明显异常".to_string()],
            "gpt-test-1106",
        );
        let policy = RetryPolicy {
            max_attempts: 1,
            base_delay: Duration::ZERO,
        };
        let mut audit = Vec::new();
        let results = label_with_llm(
            &mut mock,
            &tmpl,
            &reports,
            &schema,
            &policy,
            Some(&mut audit),
        )
        .unwrap();
        assert_eq!(results.len(), 2);
        assert_eq!(results[0].0, "A1");
        assert!(results[0].1.labels().is_some());
        assert!(results[1]
            .1
            .labels()
            .unwrap()
            .get(schema.normal_secondary_index()));
        let audit_text = String::from_utf8(audit).unwrap();
        let lines: Vec<&str> = audit_text.lines().collect();
        assert_eq!(lines.len(), 2);
        for line in &lines {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            assert_eq!(v["model"], "gpt-test-1106");
            assert!(v["attempts"].as_u64().unwrap() >= 1);
        }
        assert_eq!(
            serde_json::from_str::<serde_json::Value>(lines[0]).unwrap()["sample_id"],
            "A1"
        );
    }

    #[test]
    fn scripted_file_transport_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("responses.txt");
        std::fs::write(&path, "肺结节，胸腔积液\n未见明显异常\n").unwrap();
        let mut mock = MockTransport::from_file(&path, "scripted").unwrap();
        assert_eq!(mock.remaining(), 2);
        assert_eq!(mock.send("x").unwrap(), "肺结节，胸腔积液");
        assert_eq!(mock.send("y").unwrap(), "未见明显异常");
        assert!(matches!(
            mock.send("z"),
            Err(TransportError::Network { .. })
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_holds_for_random_consistent_vectors(bits in 0u16..(1 << 14)) {
                let schema = LabelSchema::default_schema();
                let mut v = SecondaryLabelVector::all_negative();
                for i in 0..14 {
                    v.set(i, bits & (1 << i) != 0);
                }
                let v = schema.enforce_exclusion(&v);
                let resp = parse_response(&serialize_labels(&v, &schema), &schema);
                prop_assert_eq!(resp.labels(), Some(&v));
            }

            #[test]
            fn distinct_report_texts_make_distinct_prompts(
                a in ".{1,24}",
                b in ".{1,24}",
            ) {
                prop_assume!(a != b);
                let tmpl = PromptTemplate::new(format!("头{PLACEHOLDER}尾")).unwrap();
                let ra = CleanReport {
                    acc: "x".into(), findings: a.clone(), impression: String::new(),
                    clinical_dx: String::new(), sex: String::new(),
                    age_raw: String::new(), clinical_desc: String::new(), age_years: 0,
                };
                let rb = CleanReport { findings: b.clone(), ..ra.clone() };
                prop_assert_ne!(tmpl.build_prompt(&ra), tmpl.build_prompt(&rb));
            }
        }
    }
}
