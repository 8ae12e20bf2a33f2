//! Good/bad predictions for snippets, from the built-in rule baseline or a
//! remote model service.
//!
//! The service contract: `POST {base_url}/v1/classify` with
//! `{"cwe":"CWE-79","codes":["<?php ..."]}` answers 200 with
//! `{"predictions":[{"label":"bad","score":0.93}]}`, one prediction per code
//! in order; malformed requests get a 4xx with `{"error":"..."}`.

pub mod conformance;
pub mod mock;
mod remote;
mod rule;

use serde::{Deserialize, Serialize};

use crate::dataset::{Label, Sample};
use crate::sinks::SinkRules;

pub use remote::{classify_remote, ClassifyError, EndpointConfig, RemotePrediction};
pub use rule::is_tainted;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Remote,
    Rule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub label: Label,
    /// Confidence that the label is `bad`.
    pub score: f64,
    pub source: Source,
}

/// Rule baseline; unparsable snippets are predicted good.
pub fn classify_rule(samples: &[Sample], rules: &SinkRules) -> Vec<Prediction> {
    samples
        .iter()
        .map(|s| {
            let bad = is_tainted(&s.code, s.cwe, rules).unwrap_or(false);
            Prediction {
                sample_id: s.id.clone(),
                label: if bad { Label::Bad } else { Label::Good },
                score: if bad { 1.0 } else { 0.0 },
                source: Source::Rule,
            }
        })
        .collect()
}
