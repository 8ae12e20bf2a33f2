use std::time::Duration;

use phpvul::classify::conformance;
use phpvul::classify::mock::{Behavior, MockServer, BAD_SCORE, GOOD_SCORE};
use phpvul::classify::{classify_remote, ClassifyError, EndpointConfig, Source};
use phpvul::dataset::{Label, Sample};
use phpvul::sinks::SinkKind;

fn sample(i: usize, cwe: SinkKind, code: &str) -> Sample {
    Sample {
        id: format!("s{i}"),
        cwe,
        code: code.to_string(),
        label: None,
        project: "p".into(),
        file: "f.php".into(),
        line: 2,
        taint_var: "var0".into(),
        synthetic: false,
        origin: None,
        split: None,
    }
}

fn five() -> Vec<Sample> {
    let bad = "<?php\n$var0 = $_GET['a'];\necho $var0; /* taint: $var0 */";
    let good = "<?php\n$var0 = 's';\necho $var0; /* taint: $var0 */";
    let sql = "<?php\n$var0 = $_GET['a'];\n$var1 = \"SELECT * FROM t WHERE id = \" . $var0; /* taint: $var0 */";
    vec![
        sample(0, SinkKind::Cwe79, bad),
        sample(1, SinkKind::Cwe89, sql),
        sample(2, SinkKind::Cwe79, good),
        sample(3, SinkKind::Cwe79, bad),
        sample(4, SinkKind::Cwe89, sql),
    ]
}

fn fast(url: String) -> EndpointConfig {
    EndpointConfig {
        backoff: Duration::from_millis(5),
        timeout: Duration::from_secs(5),
        ..EndpointConfig::new(url)
    }
}

#[test]
fn mock_passes_conformance() {
    let server = MockServer::start().unwrap();
    let checks = conformance::run(&server.base_url());
    assert_eq!(checks.len(), 8);
    for c in checks {
        assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
    }
}

/// Point `PHPVUL_CONFORMANCE_URL` at a running model service to check it.
#[test]
fn external_service_conformance() {
    let Ok(url) = std::env::var("PHPVUL_CONFORMANCE_URL") else {
        return;
    };
    for c in conformance::run(&url) {
        assert!(c.outcome.is_ok(), "{}: {:?}", c.name, c.outcome);
    }
}

#[test]
fn batches_are_per_cwe_and_aligned() {
    let server = MockServer::start().unwrap();
    let cfg = EndpointConfig {
        batch_size: 3,
        ..fast(server.base_url())
    };
    let preds = classify_remote(&five(), &cfg).unwrap();
    let mut sizes = server.batch_sizes();
    sizes.sort();
    assert_eq!(sizes, [2, 3]);
    assert_eq!(server.requests(), 2);
    let got: Vec<(&str, Label, f64)> = preds
        .iter()
        .map(|p| (p.sample_id.as_str(), p.label, p.score))
        .collect();
    assert_eq!(
        got,
        [
            ("s0", Label::Bad, BAD_SCORE),
            ("s1", Label::Bad, BAD_SCORE),
            ("s2", Label::Good, GOOD_SCORE),
            ("s3", Label::Bad, BAD_SCORE),
            ("s4", Label::Bad, BAD_SCORE),
        ]
    );
    assert!(preds.iter().all(|p| p.source == Source::Remote));
}

#[test]
fn small_batches_and_single_flight() {
    let server = MockServer::start().unwrap();
    let cfg = EndpointConfig {
        batch_size: 1,
        max_in_flight: 1,
        ..fast(server.base_url())
    };
    assert_eq!(classify_remote(&five(), &cfg).unwrap().len(), 5);
    assert_eq!(server.requests(), 5);
}

#[test]
fn unavailable_service_is_retried() {
    let server = MockServer::with_behavior(Behavior::FailFirst(2)).unwrap();
    let cfg = EndpointConfig {
        batch_size: 16,
        max_in_flight: 1,
        retries: 2,
        ..fast(server.base_url())
    };
    let preds = classify_remote(&five(), &cfg).unwrap();
    assert_eq!(preds.len(), 5);
    // Two 503s, then one success per CWE batch.
    assert_eq!(server.requests(), 4);
}

#[test]
fn retries_run_out() {
    let server = MockServer::with_behavior(Behavior::FailFirst(100)).unwrap();
    let cfg = EndpointConfig {
        retries: 1,
        ..fast(server.base_url())
    };
    match classify_remote(&five(), &cfg) {
        Err(ClassifyError::Transport { attempts, .. }) => assert_eq!(attempts, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_answers_are_protocol_errors() {
    for behavior in [
        Behavior::WeirdLabel,
        Behavior::Garbage,
        Behavior::ShortAnswer,
    ] {
        let server = MockServer::with_behavior(behavior).unwrap();
        let err = classify_remote(&five(), &fast(server.base_url())).unwrap_err();
        assert!(
            matches!(err, ClassifyError::Protocol { .. }),
            "{behavior:?}: {err}"
        );
    }
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let url = {
        let server = MockServer::start().unwrap();
        server.base_url()
    };
    let cfg = EndpointConfig {
        retries: 0,
        ..fast(url)
    };
    let err = classify_remote(&five(), &cfg).unwrap_err();
    assert!(matches!(err, ClassifyError::Transport { .. }), "{err}");
}

#[test]
fn bad_configuration_is_rejected_up_front() {
    let cfg = EndpointConfig {
        batch_size: 0,
        ..EndpointConfig::new("http://127.0.0.1:1")
    };
    assert!(matches!(
        classify_remote(&five(), &cfg),
        Err(ClassifyError::Config(_))
    ));
    let cfg = EndpointConfig::new("ftp://x");
    assert!(matches!(
        classify_remote(&five(), &cfg),
        Err(ClassifyError::Config(_))
    ));
}
