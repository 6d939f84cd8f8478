//! HTTP client for a remote sentence scorer / merger.
//!
//! Wire protocol: `POST {base}/v1/score` with `{"candidates": [...]}` answers
//! `{"scores": [...]}`; `POST {base}/v1/merge` with a merge request answers
//! `{"text": "..."}`. Bodies are UTF-8 JSON with keys in sorted order. Errors
//! come back with status >= 400 and `{"error": "..."}`.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::decode::{NgramScorer, TextScorer};
use crate::ensemble::{build_merge_request, mbr_select, scorer_select, top1, CandidateSet, MergeRequest, Strategy};
use crate::error::{Error, Result};
use crate::lm::ArpaLm;
use crate::math::LN_10;

pub const MAX_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerEndpoint {
    pub base_url: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub max_concurrent: usize,
    pub bearer_token: Option<String>,
    /// Merged text starting with any of these (case-insensitive) is rejected.
    pub preamble_blocklist: Vec<String>,
}

impl ScorerEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        ScorerEndpoint {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout_ms: 10_000,
            max_retries: 2,
            max_concurrent: 4,
            bearer_token: None,
            preamble_blocklist: default_blocklist(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout_ms == 0 {
            return Err(Error::Config("endpoint timeout must be > 0".into()));
        }
        if self.max_concurrent == 0 {
            return Err(Error::Config("max_concurrent must be >= 1".into()));
        }
        if !self.base_url.starts_with("http://") && !self.base_url.starts_with("https://") {
            return Err(Error::Config(format!("endpoint `{}` is not an http(s) URL", self.base_url)));
        }
        Ok(())
    }
}

pub fn default_blocklist() -> Vec<String> {
    [
        "Sure",
        "Here is",
        "Here's",
        "The answer is",
        "The most accurate",
        "The transcript",
        "Certainly",
        "Of course",
        "As an AI",
        "I think",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub error: String,
}

/// Canonical wire encoding: compact JSON, object keys sorted.
pub fn encode<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    // `Value` objects are ordered maps, so re-serializing sorts every key.
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_vec(&v)?)
}

pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Protocol(format!("malformed body: {e}")))
}

/// Whether `text` opens with a blocklisted phrase, ignoring case and leading
/// whitespace or quotes.
pub fn has_preamble(text: &str, blocklist: &[String]) -> Option<String> {
    let t = text.trim_start_matches(|c: char| c.is_whitespace() || c == '"' || c == '\'').to_lowercase();
    blocklist
        .iter()
        .find(|p| !p.is_empty() && t.starts_with(&p.to_lowercase()))
        .cloned()
}

struct Gate {
    in_flight: Mutex<usize>,
    freed: Condvar,
    peak: AtomicUsize,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self, limit: usize) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= limit {
            n = self.freed.wait(n).unwrap();
        }
        *n += 1;
        self.peak.fetch_max(*n, Ordering::SeqCst);
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.in_flight.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}

enum Failure {
    Retry(String),
    Fatal(Error),
}

/// Shareable client handle. In-flight requests never exceed
/// `endpoint.max_concurrent`.
pub struct LlmClient {
    endpoint: ScorerEndpoint,
    agent: ureq::Agent,
    gate: Gate,
    attempts: AtomicUsize,
}

impl LlmClient {
    pub fn new(endpoint: ScorerEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let timeout = Duration::from_millis(endpoint.timeout_ms);
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(LlmClient {
            endpoint,
            agent,
            gate: Gate {
                in_flight: Mutex::new(0),
                freed: Condvar::new(),
                peak: AtomicUsize::new(0),
            },
            attempts: AtomicUsize::new(0),
        })
    }

    pub fn endpoint(&self) -> &ScorerEndpoint {
        &self.endpoint
    }

    /// Total HTTP attempts made so far, retries included.
    pub fn attempts(&self) -> usize {
        self.attempts.load(Ordering::SeqCst)
    }

    /// Highest number of simultaneous in-flight requests observed.
    pub fn peak_in_flight(&self) -> usize {
        self.gate.peak.load(Ordering::SeqCst)
    }

    fn post_once(&self, url: &str, body: &[u8]) -> std::result::Result<Vec<u8>, Failure> {
        let _permit = self.gate.acquire(self.endpoint.max_concurrent);
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let mut req = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(tok) = &self.endpoint.bearer_token {
            req = req.header("Authorization", &format!("Bearer {tok}"));
        }
        let mut resp = req.send(body).map_err(|e| Failure::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let bytes = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| Failure::Retry(e.to_string()))?;
        if status >= 500 {
            return Err(Failure::Retry(format!("status {status}: {}", error_text(&bytes))));
        }
        if status >= 400 {
            return Err(Failure::Fatal(Error::Protocol(format!("status {status}: {}", error_text(&bytes)))));
        }
        Ok(bytes)
    }

    fn post(&self, path: &str, body: &[u8]) -> Result<Vec<u8>> {
        let url = format!("{}{}", self.endpoint.base_url, path);
        let mut last = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            match self.post_once(&url, body) {
                Ok(b) => return Ok(b),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retry(msg)) => {
                    log::debug!("{url} attempt {} failed: {msg}", attempt + 1);
                    last = msg;
                }
            }
        }
        Err(Error::Unavailable(format!(
            "{url} after {} attempts: {last}",
            self.endpoint.max_retries + 1
        )))
    }

    pub fn score_candidates(&self, texts: &[String]) -> Result<Vec<f64>> {
        if texts.is_empty() || texts.len() > MAX_BATCH {
            return Err(Error::InvalidArgument(format!(
                "score batch must hold 1..={MAX_BATCH} texts, got {}",
                texts.len()
            )));
        }
        let body = encode(&ScoreRequest {
            candidates: texts.to_vec(),
        })?;
        let resp: ScoreResponse = decode(&self.post("/v1/score", &body)?)?;
        if resp.scores.len() != texts.len() {
            return Err(Error::Protocol(format!(
                "{} scores for {} candidates",
                resp.scores.len(),
                texts.len()
            )));
        }
        if resp.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Protocol("non-finite score".into()));
        }
        Ok(resp.scores)
    }

    pub fn merge_candidates(&self, request: &MergeRequest) -> Result<String> {
        let body = encode(request)?;
        let resp: MergeResponse = decode(&self.post("/v1/merge", &body)?)?;
        if let Some(p) = has_preamble(&resp.text, &self.endpoint.preamble_blocklist) {
            return Err(Error::PreambleRejected(format!("reply starts with `{p}`")));
        }
        let text = resp.text.split_whitespace().collect::<Vec<_>>().join(" ");
        if text.is_empty() {
            return Err(Error::Protocol("empty merge reply".into()));
        }
        Ok(text)
    }

    /// Merges many candidate sets, at most `max_concurrent` at a time. Results
    /// are in input order.
    pub fn merge_many(&self, requests: &[MergeRequest]) -> Vec<Result<String>> {
        parallel_map(requests, self.endpoint.max_concurrent, |r| self.merge_candidates(r))
    }
}

fn error_text(bytes: &[u8]) -> String {
    match serde_json::from_slice::<ErrorResponse>(bytes) {
        Ok(e) => e.error,
        Err(_) => String::from_utf8_lossy(bytes).chars().take(200).collect(),
    }
}

/// Order-preserving map over `items` with up to `workers` threads.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let out: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                *out[i].lock().unwrap() = Some(f(&items[i]));
            });
        }
    });
    out.into_iter().map(|m| m.into_inner().unwrap().unwrap()).collect()
}

/// Remote scores as a `TextScorer`; batches are split at `MAX_BATCH`.
pub struct RemoteScorer<'a>(pub &'a LlmClient);

impl TextScorer for RemoteScorer<'_> {
    fn score(&self, text: &str) -> Result<f64> {
        Ok(self.0.score_candidates(&[text.to_string()])?[0])
    }

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(MAX_BATCH) {
            out.extend(self.0.score_candidates(chunk)?);
        }
        Ok(out)
    }
}

/// Remote scores, falling back to the n-gram LM (and logging it) when the
/// service fails.
pub struct FallbackScorer<'a> {
    pub client: Option<&'a LlmClient>,
    pub lm: &'a ArpaLm,
}

impl TextScorer for FallbackScorer<'_> {
    fn score(&self, text: &str) -> Result<f64> {
        Ok(self.score_batch(&[text.to_string()])?[0])
    }

    fn score_batch(&self, texts: &[String]) -> Result<Vec<f64>> {
        if let Some(c) = self.client {
            match RemoteScorer(c).score_batch(texts) {
                Ok(s) => return Ok(s),
                Err(e) => log::warn!("remote scorer failed ({e}); using n-gram scores"),
            }
        }
        Ok(texts.iter().map(|t| LN_10 * self.lm.sentence_logprob(t)).collect())
    }
}

/// Runs the fixed chain merge -> mbr_select -> n-gram scorer_select -> top-1.
/// `merged` is the outcome of a remote merge, if one was attempted.
pub fn resolve_merge(set: &CandidateSet, merged: Option<Result<String>>, lm: &ArpaLm) -> (String, Strategy) {
    match merged {
        Some(Ok(text)) => return (text, Strategy::Merge),
        Some(Err(e)) => log::warn!("{}: merge failed ({e}); falling back to mbr", set.utt_id),
        None => {}
    }
    match mbr_select(set, None) {
        Ok(t) => return (t, Strategy::Mbr),
        Err(e) => log::warn!("{}: mbr failed ({e}); falling back to n-gram selection", set.utt_id),
    }
    match scorer_select(set, &NgramScorer(lm)) {
        Ok(t) => (t, Strategy::ScorerSelect),
        Err(e) => {
            log::warn!("{}: n-gram selection failed ({e}); using top-1", set.utt_id);
            (top1(set), Strategy::Top1)
        }
    }
}

/// Merges every candidate set with the remote service when `client` is given,
/// degrading per utterance through the fallback chain.
pub fn merge_with_fallback(client: Option<&LlmClient>, sets: &[CandidateSet], lm: &ArpaLm) -> Result<Vec<(String, Strategy)>> {
    let merged: Vec<Option<Result<String>>> = match client {
        Some(c) => {
            let reqs = sets.iter().map(build_merge_request).collect::<Result<Vec<_>>>()?;
            c.merge_many(&reqs).into_iter().map(Some).collect()
        }
        None => sets.iter().map(|_| None).collect(),
    };
    Ok(sets
        .iter()
        .zip(merged)
        .map(|(s, m)| resolve_merge(s, m, lm))
        .collect())
}
