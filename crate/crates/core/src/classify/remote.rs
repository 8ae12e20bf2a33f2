use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Prediction, Source};
use crate::dataset::{Label, Sample};
use crate::sinks::SinkKind;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndpointConfig {
    pub base_url: String,
    pub timeout: Duration,
    pub batch_size: usize,
    pub retries: usize,
    /// Batches sent concurrently.
    pub max_in_flight: usize,
    /// First retry delay; doubles on each further attempt.
    pub backoff: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            timeout: Duration::from_secs(30),
            batch_size: 16,
            retries: 2,
            max_in_flight: 4,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.batch_size < 1 {
            return Err("endpoint.batch_size must be at least 1".into());
        }
        if self.max_in_flight < 1 {
            return Err("endpoint.max_in_flight must be at least 1".into());
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(format!(
                "endpoint.base_url `{}` is not an http(s) URL",
                self.base_url
            ));
        }
        Ok(())
    }

    pub fn classify_url(&self) -> String {
        format!("{}/v1/classify", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("invalid endpoint configuration: {0}")]
    Config(String),
    #[error("batch {batch}: transport failure after {attempts} attempt(s): {message}")]
    Transport {
        batch: usize,
        attempts: usize,
        message: String,
    },
    #[error("batch {batch}: protocol error: {message} (body: {excerpt:?})")]
    Protocol {
        batch: usize,
        message: String,
        excerpt: String,
    },
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    cwe: SinkKind,
    codes: Vec<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemotePrediction {
    pub label: Label,
    pub score: f64,
}

#[derive(Debug, Deserialize)]
struct Response {
    predictions: Vec<RemotePrediction>,
}

const EXCERPT_CHARS: usize = 200;

fn excerpt(body: &str) -> String {
    body.chars().take(EXCERPT_CHARS).collect()
}

enum Attempt {
    Done(Vec<RemotePrediction>),
    /// Worth retrying: connection problems and 5xx answers.
    Retry(String),
    Fatal(ClassifyError),
}

fn attempt(agent: &ureq::Agent, cfg: &EndpointConfig, batch: usize, body: &Request) -> Attempt {
    let mut resp = match agent.post(&cfg.classify_url()).send_json(body) {
        Ok(r) => r,
        Err(e) => return Attempt::Retry(e.to_string()),
    };
    let status = resp.status().as_u16();
    let text = match resp.body_mut().read_to_string() {
        Ok(t) => t,
        Err(e) => return Attempt::Retry(format!("reading body: {e}")),
    };
    if status >= 500 {
        return Attempt::Retry(format!("HTTP {status}: {}", excerpt(&text)));
    }
    let protocol = |message: String| {
        Attempt::Fatal(ClassifyError::Protocol {
            batch,
            message,
            excerpt: excerpt(&text),
        })
    };
    if status != 200 {
        return protocol(format!("HTTP {status}"));
    }
    let parsed: Response = match serde_json::from_str(&text) {
        Ok(p) => p,
        Err(e) => return protocol(format!("malformed response: {e}")),
    };
    if parsed.predictions.len() != body.codes.len() {
        return protocol(format!(
            "{} predictions for {} codes",
            parsed.predictions.len(),
            body.codes.len()
        ));
    }
    if let Some(p) = parsed
        .predictions
        .iter()
        .find(|p| !(0.0..=1.0).contains(&p.score))
    {
        return protocol(format!("score {} outside [0, 1]", p.score));
    }
    Attempt::Done(parsed.predictions)
}

fn send_batch(
    agent: &ureq::Agent,
    cfg: &EndpointConfig,
    batch: usize,
    body: &Request,
) -> Result<Vec<RemotePrediction>, ClassifyError> {
    let mut delay = cfg.backoff;
    let mut last = String::new();
    for n in 0..=cfg.retries {
        if n > 0 {
            thread::sleep(delay);
            delay *= 2;
        }
        match attempt(agent, cfg, batch, body) {
            Attempt::Done(p) => return Ok(p),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(msg) => last = msg,
        }
    }
    Err(ClassifyError::Transport {
        batch,
        attempts: cfg.retries + 1,
        message: last,
    })
}

/// Batches are formed per CWE in input order and numbered from 0; results
/// come back aligned with `samples`.
pub fn classify_remote(
    samples: &[Sample],
    cfg: &EndpointConfig,
) -> Result<Vec<Prediction>, ClassifyError> {
    cfg.validate().map_err(ClassifyError::Config)?;
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();

    let mut batches: Vec<(SinkKind, Vec<usize>)> = Vec::new();
    for kind in SinkKind::ALL {
        let idx: Vec<usize> = (0..samples.len())
            .filter(|&i| samples[i].cwe == kind)
            .collect();
        for chunk in idx.chunks(cfg.batch_size) {
            batches.push((kind, chunk.to_vec()));
        }
    }

    let mut out: Vec<Option<Prediction>> = vec![None; samples.len()];
    for (wave_no, wave) in batches.chunks(cfg.max_in_flight).enumerate() {
        let results: Vec<Result<Vec<RemotePrediction>, ClassifyError>> = thread::scope(|scope| {
            let handles: Vec<_> = wave
                .iter()
                .enumerate()
                .map(|(k, (kind, idx))| {
                    let agent = &agent;
                    let batch = wave_no * cfg.max_in_flight + k;
                    scope.spawn(move || {
                        let body = Request {
                            cwe: *kind,
                            codes: idx.iter().map(|&i| samples[i].code.as_str()).collect(),
                        };
                        send_batch(agent, cfg, batch, &body)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("classify worker panicked"))
                .collect()
        });
        for ((_, idx), result) in wave.iter().zip(results) {
            for (&i, p) in idx.iter().zip(result?) {
                out[i] = Some(Prediction {
                    sample_id: samples[i].id.clone(),
                    label: p.label,
                    score: p.score,
                    source: Source::Remote,
                });
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|p| p.expect("every sample is in a batch"))
        .collect())
}
