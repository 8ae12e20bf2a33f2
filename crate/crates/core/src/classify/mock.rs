//! A small in-process HTTP server speaking the classify protocol, for tests
//! and offline demos. It labels a code `bad` iff it contains `$_GET`.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};

use serde_json::{json, Value};

use crate::sinks::SinkKind;

/// How the mock misbehaves, if at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Behavior {
    Normal,
    /// Answer 503 to the first `n` requests.
    FailFirst(usize),
    /// Answer with the label `weird`.
    WeirdLabel,
    /// Answer 200 with a non-JSON body.
    Garbage,
    /// Drop the last prediction.
    ShortAnswer,
}

pub const BAD_SCORE: f64 = 0.93;
pub const GOOD_SCORE: f64 = 0.07;

pub struct MockServer {
    addr: SocketAddr,
    requests: Arc<AtomicUsize>,
    batch_sizes: Arc<std::sync::Mutex<Vec<usize>>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn start() -> std::io::Result<Self> {
        Self::with_behavior(Behavior::Normal)
    }

    pub fn with_behavior(behavior: Behavior) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let requests = Arc::new(AtomicUsize::new(0));
        let batch_sizes = Arc::new(std::sync::Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (requests, batch_sizes, stop) =
                (requests.clone(), batch_sizes.clone(), stop.clone());
            thread::spawn(move || {
                for conn in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(conn) = conn else { continue };
                    let (requests, batch_sizes) = (requests.clone(), batch_sizes.clone());
                    thread::spawn(move || {
                        let _ = serve(conn, behavior, &requests, &batch_sizes);
                    });
                }
            })
        };
        Ok(MockServer {
            addr,
            requests,
            batch_sizes,
            stop,
            handle: Some(handle),
        })
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests received so far (any path, any outcome).
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Sizes of the well-formed batches answered so far.
    pub fn batch_sizes(&self) -> Vec<usize> {
        self.batch_sizes.lock().expect("lock").clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

/// The mock's labelling rule.
pub fn mock_label(code: &str) -> (&'static str, f64) {
    if code.contains("$_GET") {
        ("bad", BAD_SCORE)
    } else {
        ("good", GOOD_SCORE)
    }
}

fn serve(
    conn: TcpStream,
    behavior: Behavior,
    requests: &AtomicUsize,
    batch_sizes: &std::sync::Mutex<Vec<usize>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(conn.try_clone()?);
    let mut request_line = String::new();
    if reader.read_line(&mut request_line)? == 0 {
        return Ok(());
    }
    let mut content_length = 0usize;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
            break;
        }
        if let Some((k, v)) = header.split_once(':') {
            if k.trim().eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    reader.read_exact(&mut body)?;
    let n = requests.fetch_add(1, Ordering::SeqCst);

    let (status, payload) = respond(&request_line, &body, behavior, n, batch_sizes);
    let reason = match status {
        200 => "OK",
        400 => "Bad Request",
        404 => "Not Found",
        405 => "Method Not Allowed",
        _ => "Service Unavailable",
    };
    let mut conn = conn;
    write!(
        conn,
        "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    )?;
    conn.flush()
}

fn error(status: u16, message: &str) -> (u16, String) {
    (status, json!({ "error": message }).to_string())
}

fn respond(
    request_line: &str,
    body: &[u8],
    behavior: Behavior,
    n: usize,
    batch_sizes: &std::sync::Mutex<Vec<usize>>,
) -> (u16, String) {
    let mut parts = request_line.split_whitespace();
    let (method, path) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
    if path != "/v1/classify" {
        return error(404, "not found");
    }
    if method != "POST" {
        return error(405, "use POST");
    }
    if let Behavior::FailFirst(k) = behavior {
        if n < k {
            return error(503, "warming up");
        }
    }
    let Ok(value) = serde_json::from_slice::<Value>(body) else {
        return error(400, "body is not JSON");
    };
    let cwe_ok = value
        .get("cwe")
        .and_then(Value::as_str)
        .is_some_and(|c| SinkKind::ALL.iter().any(|k| k.as_str() == c));
    if !cwe_ok {
        return error(400, "`cwe` must be \"CWE-79\" or \"CWE-89\"");
    }
    let Some(codes) = value.get("codes").and_then(Value::as_array) else {
        return error(400, "`codes` must be an array of strings");
    };
    let Some(codes) = codes
        .iter()
        .map(Value::as_str)
        .collect::<Option<Vec<&str>>>()
    else {
        return error(400, "`codes` must be an array of strings");
    };
    batch_sizes.lock().expect("lock").push(codes.len());

    let mut predictions: Vec<Value> = codes
        .iter()
        .map(|c| {
            let (label, score) = mock_label(c);
            let label = if behavior == Behavior::WeirdLabel {
                "weird"
            } else {
                label
            };
            json!({ "label": label, "score": score })
        })
        .collect();
    match behavior {
        Behavior::Garbage => return (200, "<html>not json</html>".to_string()),
        Behavior::ShortAnswer => {
            predictions.pop();
        }
        _ => {}
    }
    (200, json!({ "predictions": predictions }).to_string())
}
