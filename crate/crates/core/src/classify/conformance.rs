//! Protocol conformance checks for a classify service. They only need a
//! base URL, so the same suite runs against the in-repo mock and against a
//! real model server.

use std::time::Duration;

use serde_json::{json, Value};

use super::{classify_remote, EndpointConfig};
use crate::dataset::Sample;
use crate::sinks::SinkKind;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Result<(), String>,
}

fn post(base: &str, body: &str) -> Result<(u16, String), String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(30)))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(&format!("{}/v1/classify", base.trim_end_matches('/')))
        .header("Content-Type", "application/json")
        .send(body)
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let text = resp
        .body_mut()
        .read_to_string()
        .map_err(|e| e.to_string())?;
    Ok((status, text))
}

fn predictions(base: &str, cwe: &str, codes: &[&str]) -> Result<Vec<Value>, String> {
    let (status, text) = post(base, &json!({ "cwe": cwe, "codes": codes }).to_string())?;
    if status != 200 {
        return Err(format!("expected 200, got {status}: {text}"));
    }
    let v: Value = serde_json::from_str(&text).map_err(|e| format!("response is not JSON: {e}"))?;
    let preds = v
        .get("predictions")
        .and_then(Value::as_array)
        .ok_or("response lacks a `predictions` array")?;
    if preds.len() != codes.len() {
        return Err(format!(
            "{} predictions for {} codes",
            preds.len(),
            codes.len()
        ));
    }
    for p in preds {
        let label = p.get("label").and_then(Value::as_str);
        if !matches!(label, Some("good" | "bad")) {
            return Err(format!("bad label in {p}"));
        }
        let score = p.get("score").and_then(Value::as_f64);
        if !score.is_some_and(|s| (0.0..=1.0).contains(&s)) {
            return Err(format!("score missing or outside [0, 1] in {p}"));
        }
    }
    Ok(preds.clone())
}

fn rejects(base: &str, body: &str) -> Result<(), String> {
    let (status, text) = post(base, body)?;
    if !(400..500).contains(&status) {
        return Err(format!("expected a 4xx, got {status}"));
    }
    let v: Value =
        serde_json::from_str(&text).map_err(|e| format!("error body is not JSON: {e}"))?;
    match v.get("error") {
        Some(Value::String(_)) => Ok(()),
        _ => Err(format!("error body lacks an `error` string: {text}")),
    }
}

const CODES: [&str; 3] = [
    "<?php\n$var0 = $_GET['a'];\necho $var0; /* taint: $var0 */",
    "<?php\n$var0 = 'k';\necho $var0; /* taint: $var0 */",
    "<?php\necho htmlspecialchars($_GET['q']); /* taint: $_GET */",
];

/// Run every check against `base_url`.
pub fn run(base_url: &str) -> Vec<Check> {
    let mut out = Vec::new();
    let mut check = |name, outcome| out.push(Check { name, outcome });

    check(
        "single code",
        predictions(base_url, "CWE-79", &CODES[..1]).map(|_| ()),
    );
    check(
        "batch of three is order-aligned",
        predictions(base_url, "CWE-79", &CODES).map(|_| ()),
    );
    check(
        "CWE-89 accepted",
        predictions(
            base_url,
            "CWE-89",
            &["<?php\n$var0 = \"SELECT * FROM t WHERE id=\" . $var1; /* taint: $var1 */"],
        )
        .map(|_| ()),
    );
    check(
        "deterministic answers",
        predictions(base_url, "CWE-79", &CODES).and_then(|a| {
            let b = predictions(base_url, "CWE-79", &CODES)?;
            if a == b {
                Ok(())
            } else {
                Err("two identical requests got different answers".into())
            }
        }),
    );
    check(
        "missing codes rejected",
        rejects(base_url, r#"{"cwe":"CWE-79"}"#),
    );
    check(
        "unknown cwe rejected",
        rejects(base_url, r#"{"cwe":"CWE-1","codes":["<?php"]}"#),
    );
    check("non-JSON body rejected", rejects(base_url, "codes=1"));
    check("client round trip", client_round_trip(base_url));
    out
}

fn client_round_trip(base_url: &str) -> Result<(), String> {
    let samples: Vec<Sample> = CODES
        .iter()
        .enumerate()
        .map(|(i, code)| Sample {
            id: format!("c{i}"),
            cwe: SinkKind::Cwe79,
            code: code.to_string(),
            label: None,
            project: "conformance".into(),
            file: "c.php".into(),
            line: 2,
            taint_var: "var0".into(),
            synthetic: false,
            origin: None,
            split: None,
        })
        .collect();
    let cfg = EndpointConfig {
        batch_size: 2,
        ..EndpointConfig::new(base_url)
    };
    let preds = classify_remote(&samples, &cfg).map_err(|e| e.to_string())?;
    let ids: Vec<&str> = preds.iter().map(|p| p.sample_id.as_str()).collect();
    if ids != ["c0", "c1", "c2"] {
        return Err(format!("misaligned predictions: {ids:?}"));
    }
    Ok(())
}
