//! Evaluator backed by a child process speaking newline-delimited JSON.
//!
//! ```text
//! child  -> parent  {"type":"hello","version":1,"orientation":"higher_better"|"lower_better"}
//! parent -> child   {"type":"evaluate","id":N,"demos":[...],"query":Q}
//! child  -> parent  {"type":"result","id":N,"score":X} | {"type":"error","id":N,"message":"..."}
//! parent -> child   {"type":"shutdown"}
//! ```
//!
//! One request is in flight at a time; a response must echo the request id.

use std::io::{self, BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::tabulated::OneShotMatrix;
use super::{CallCounter, Evaluator, OracleError};
use crate::ids::{DemoSet, SampleId};
use crate::utility::{MetricTag, Orientation, Utility};

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const SHUTDOWN_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        version: u32,
        orientation: Orientation,
    },
    Evaluate {
        id: u64,
        demos: Vec<SampleId>,
        query: SampleId,
    },
    Result {
        id: u64,
        score: f64,
    },
    Error {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        id: Option<u64>,
        message: String,
    },
    Shutdown,
}

impl Message {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("protocol messages serialise");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalConfig {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT.as_secs_f64()
}

impl ExternalConfig {
    pub fn new(command: Vec<String>) -> Self {
        ExternalConfig {
            command,
            timeout_secs: default_timeout_secs(),
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs.max(0.0))
    }
}

struct Session {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<io::Result<String>>,
    next_id: u64,
    // set once the stream can no longer be trusted
    broken: Option<String>,
}

pub struct ExternalEvaluator {
    session: Mutex<Session>,
    orientation: Orientation,
    timeout: Duration,
    counter: CallCounter,
}

impl ExternalEvaluator {
    /// Starts the child and completes the handshake.
    pub fn spawn(config: &ExternalConfig) -> Result<Self, OracleError> {
        let (program, args) = config
            .command
            .split_first()
            .ok_or_else(|| OracleError::InvalidParams("empty evaluator command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| OracleError::Crashed(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });

        let mut session = Session {
            child,
            stdin,
            lines: rx,
            next_id: 0,
            broken: None,
        };
        let timeout = config.timeout();
        let hello = match read_message(&mut session, timeout) {
            Ok(m) => m,
            Err(e) => {
                let _ = session.child.kill();
                let _ = session.child.wait();
                return Err(e);
            }
        };
        let orientation = match hello {
            Message::Hello {
                version: PROTOCOL_VERSION,
                orientation,
            } => orientation,
            other => {
                let _ = session.child.kill();
                let _ = session.child.wait();
                return Err(OracleError::Protocol(format!("expected hello v{PROTOCOL_VERSION}, got {other:?}")));
            }
        };
        log::debug!("external evaluator {program} ready ({orientation:?})");
        Ok(ExternalEvaluator {
            session: Mutex::new(session),
            orientation,
            timeout,
            counter: CallCounter::default(),
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Sends shutdown and waits for the child to exit, killing it after the
    /// grace period.
    pub fn shutdown(&self) -> Result<ExitStatus, OracleError> {
        let mut s = self.session.lock().unwrap_or_else(|p| p.into_inner());
        shutdown_session(&mut s)
    }

    fn request(&self, demos: &DemoSet, query: SampleId) -> Result<f64, OracleError> {
        let mut s = self.session.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(reason) = &s.broken {
            return Err(OracleError::Crashed(reason.clone()));
        }
        let id = s.next_id;
        s.next_id += 1;
        let line = Message::Evaluate {
            id,
            demos: demos.members().to_vec(),
            query,
        }
        .to_line();
        let written = match s.stdin.as_mut() {
            Some(stdin) => stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()),
            None => Err(io::Error::new(io::ErrorKind::BrokenPipe, "stdin closed")),
        };
        if let Err(e) = written {
            let reason = describe_exit(&mut s, &format!("write failed: {e}"));
            s.broken = Some(reason.clone());
            return Err(OracleError::Crashed(reason));
        }
        let response = read_message(&mut s, self.timeout)?;
        match response {
            Message::Result { id: rid, score } if rid == id => {
                if score.is_finite() {
                    Ok(score)
                } else {
                    Err(OracleError::Protocol(format!("non-finite score {score} for request {id}")))
                }
            }
            Message::Error { id: Some(rid), message } if rid == id => Err(OracleError::Protocol(message)),
            Message::Result { id: rid, .. } | Message::Error { id: Some(rid), .. } => {
                let reason = format!("response id {rid} does not match request {id}");
                s.broken = Some(reason.clone());
                Err(OracleError::Protocol(reason))
            }
            other => {
                let reason = format!("unexpected message {other:?} for request {id}");
                s.broken = Some(reason.clone());
                Err(OracleError::Protocol(reason))
            }
        }
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, demos: &DemoSet, query: SampleId) -> Result<Utility, OracleError> {
        self.counter.tick();
        if demos.is_empty() {
            return Err(OracleError::EmptyDemoSet);
        }
        let score = self.request(demos, query)?;
        Ok(Utility::from_score(score, self.orientation, MetricTag::External)?)
    }

    fn calls(&self) -> u64 {
        self.counter.get()
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        let s = self.session.get_mut().unwrap_or_else(|p| p.into_inner());
        if let Ok(None) = s.child.try_wait() {
            let _ = shutdown_session(s);
        }
    }
}

fn read_message(s: &mut Session, timeout: Duration) -> Result<Message, OracleError> {
    match s.lines.recv_timeout(timeout) {
        Ok(Ok(line)) => serde_json::from_str(&line).map_err(|e| {
            let reason = format!("malformed line {line:?}: {e}");
            s.broken = Some(reason.clone());
            OracleError::Protocol(reason)
        }),
        Ok(Err(e)) => {
            let reason = describe_exit(s, &format!("read failed: {e}"));
            s.broken = Some(reason.clone());
            Err(OracleError::Crashed(reason))
        }
        Err(RecvTimeoutError::Timeout) => {
            s.broken = Some(format!("timed out after {timeout:?}"));
            let _ = s.child.kill();
            let _ = s.child.wait();
            Err(OracleError::Timeout(timeout))
        }
        Err(RecvTimeoutError::Disconnected) => {
            let reason = describe_exit(s, "stdout closed");
            s.broken = Some(reason.clone());
            Err(OracleError::Crashed(reason))
        }
    }
}

fn describe_exit(s: &mut Session, what: &str) -> String {
    let deadline = Instant::now() + Duration::from_millis(500);
    loop {
        match s.child.try_wait() {
            Ok(Some(status)) => return format!("{what}; child exited with {status}"),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
            _ => return what.to_string(),
        }
    }
}

fn shutdown_session(s: &mut Session) -> Result<ExitStatus, OracleError> {
    if let Some(mut stdin) = s.stdin.take() {
        let _ = stdin.write_all(Message::Shutdown.to_line().as_bytes());
        let _ = stdin.flush();
    }
    let deadline = Instant::now() + SHUTDOWN_GRACE;
    loop {
        match s.child.try_wait() {
            Ok(Some(status)) => return Ok(status),
            Ok(None) if Instant::now() < deadline => thread::sleep(Duration::from_millis(10)),
            Ok(None) => {
                let _ = s.child.kill();
                let status = s.child.wait().map_err(|e| OracleError::Crashed(e.to_string()))?;
                return Err(OracleError::Protocol(format!(
                    "evaluator ignored shutdown for {SHUTDOWN_GRACE:?} and was killed ({status})"
                )));
            }
            Err(e) => return Err(OracleError::Crashed(e.to_string())),
        }
    }
}

/// Fault injection for [`serve_matrix`], used to exercise the parent's error
/// paths.
#[derive(Debug, Clone, Default)]
pub struct MockFaults {
    /// Reply with an error payload for this query.
    pub error_on_query: Option<SampleId>,
    /// Exit without answering once this many requests have been received.
    pub exit_after: Option<u64>,
    /// Echo a wrong id on every response.
    pub wrong_id: bool,
    /// Sleep before answering each request.
    pub delay: Option<Duration>,
    /// Declare this orientation in the handshake (scores are negated for
    /// `lower_better`, so utilities are unchanged).
    pub orientation: Option<Orientation>,
}

/// Reference child loop answering from a one-shot matrix. Multi-demo requests
/// score the mean of the member entries, summed in request order.
///
/// Returns `Ok(true)` on a shutdown message, `Ok(false)` on end of input or
/// an injected exit.
pub fn serve_matrix<R: BufRead, W: Write>(
    matrix: &OneShotMatrix,
    faults: &MockFaults,
    input: R,
    mut output: W,
) -> io::Result<bool> {
    let orientation = faults.orientation.unwrap_or(Orientation::HigherBetter);
    output.write_all(
        Message::Hello {
            version: PROTOCOL_VERSION,
            orientation,
        }
        .to_line()
        .as_bytes(),
    )?;
    output.flush()?;
    let mut received = 0u64;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<Message>(&line) {
            Ok(Message::Shutdown) => return Ok(true),
            Ok(Message::Evaluate { id, demos, query }) => {
                received += 1;
                if faults.exit_after.is_some_and(|n| received > n) {
                    return Ok(false);
                }
                if let Some(d) = faults.delay {
                    thread::sleep(d);
                }
                let echoed = if faults.wrong_id { id.wrapping_add(1) } else { id };
                if faults.error_on_query == Some(query) {
                    Message::Error {
                        id: Some(echoed),
                        message: format!("injected failure for query {query}"),
                    }
                } else {
                    match mean_score(matrix, &demos, query) {
                        Ok(v) => Message::Result {
                            id: echoed,
                            score: match orientation {
                                Orientation::HigherBetter => v,
                                Orientation::LowerBetter => -v,
                            },
                        },
                        Err(message) => Message::Error {
                            id: Some(echoed),
                            message,
                        },
                    }
                }
            }
            Ok(other) => Message::Error {
                id: None,
                message: format!("unexpected message {other:?}"),
            },
            Err(e) => Message::Error {
                id: serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("id").and_then(|id| id.as_u64())),
                message: format!("malformed request: {e}"),
            },
        };
        output.write_all(reply.to_line().as_bytes())?;
        output.flush()?;
    }
    Ok(false)
}

fn mean_score(matrix: &OneShotMatrix, demos: &[SampleId], query: SampleId) -> Result<f64, String> {
    if demos.is_empty() {
        return Err("empty demonstration set".into());
    }
    let mut sum = 0.0;
    for &d in demos {
        sum += matrix
            .get(d, query)
            .ok_or_else(|| format!("no matrix entry for demo {d} at query {query}"))?;
    }
    Ok(sum / demos.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::ids;

    fn sh(script: &str) -> ExternalConfig {
        let mut c = ExternalConfig::new(vec!["sh".into(), "-c".into(), script.into()]);
        c.timeout_secs = 5.0;
        c
    }

    const HELLO: &str = r#"echo '{"type":"hello","version":1,"orientation":"higher_better"}'"#;

    fn set(raw: &[u64]) -> DemoSet {
        DemoSet::canonicalize(ids(raw.iter().copied()))
    }

    #[test]
    fn request_line_format() {
        let line = Message::Evaluate {
            id: 3,
            demos: ids([1, 2]),
            query: SampleId(7),
        }
        .to_line();
        assert_eq!(line, "{\"type\":\"evaluate\",\"id\":3,\"demos\":[1,2],\"query\":7}\n");
        assert_eq!(Message::Shutdown.to_line(), "{\"type\":\"shutdown\"}\n");
    }

    #[test]
    fn pass_through_score() {
        let script = format!(
            r#"{HELLO}; read req; echo '{{"type":"result","id":0,"score":0.41}}'; read bye"#
        );
        let ev = ExternalEvaluator::spawn(&sh(&script)).unwrap();
        let u = ev.evaluate(&set(&[1, 2]), SampleId(7)).unwrap();
        assert_eq!(u.value(), 0.41);
        assert_eq!(u.source_metric(), MetricTag::External);
        assert!(ev.shutdown().unwrap().success());
    }

    #[test]
    fn lower_better_is_negated() {
        let script = r#"echo '{"type":"hello","version":1,"orientation":"lower_better"}'; read req; echo '{"type":"result","id":0,"score":12.5}'; read bye"#;
        let ev = ExternalEvaluator::spawn(&sh(script)).unwrap();
        assert_eq!(ev.evaluate(&set(&[1]), SampleId(2)).unwrap().value(), -12.5);
    }

    #[test]
    fn error_payload_is_protocol_error() {
        let script = format!(
            r#"{HELLO}; read req; echo '{{"type":"error","id":0,"message":"model exploded"}}'; read bye"#
        );
        let ev = ExternalEvaluator::spawn(&sh(&script)).unwrap();
        match ev.evaluate(&set(&[1]), SampleId(2)) {
            Err(OracleError::Protocol(m)) => assert_eq!(m, "model exploded"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn exit_mid_request_is_crash() {
        let script = format!("{HELLO}; read req; exit 3");
        let ev = ExternalEvaluator::spawn(&sh(&script)).unwrap();
        assert!(matches!(ev.evaluate(&set(&[1]), SampleId(2)), Err(OracleError::Crashed(_))));
        // stays failed
        assert!(matches!(ev.evaluate(&set(&[1]), SampleId(2)), Err(OracleError::Crashed(_))));
        assert_eq!(ev.calls(), 2);
    }

    #[test]
    fn mismatched_id_is_protocol_error() {
        let script = format!(
            r#"{HELLO}; read req; echo '{{"type":"result","id":5,"score":0.1}}'; read bye"#
        );
        let ev = ExternalEvaluator::spawn(&sh(&script)).unwrap();
        assert!(matches!(ev.evaluate(&set(&[1]), SampleId(2)), Err(OracleError::Protocol(_))));
    }

    #[test]
    fn malformed_response_is_protocol_error() {
        let script = format!("{HELLO}; read req; echo 'garbage'; read bye");
        let ev = ExternalEvaluator::spawn(&sh(&script)).unwrap();
        assert!(matches!(ev.evaluate(&set(&[1]), SampleId(2)), Err(OracleError::Protocol(_))));
    }

    #[test]
    fn timeout() {
        let mut cfg = sh(&format!("{HELLO}; read req; sleep 5"));
        cfg.timeout_secs = 0.2;
        let ev = ExternalEvaluator::spawn(&cfg).unwrap();
        assert!(matches!(ev.evaluate(&set(&[1]), SampleId(2)), Err(OracleError::Timeout(_))));
    }

    #[test]
    fn bad_handshake() {
        assert!(matches!(
            ExternalEvaluator::spawn(&sh(r#"echo '{"type":"hello","version":2,"orientation":"higher_better"}'"#)),
            Err(OracleError::Protocol(_))
        ));
        assert!(matches!(ExternalEvaluator::spawn(&sh("exit 0")), Err(OracleError::Crashed(_))));
        assert!(ExternalEvaluator::spawn(&ExternalConfig::new(vec![])).is_err());
    }

    #[test]
    fn empty_set_never_sent() {
        let ev = ExternalEvaluator::spawn(&sh(&format!("{HELLO}; read bye"))).unwrap();
        assert!(matches!(ev.evaluate(&DemoSet::empty(), SampleId(1)), Err(OracleError::EmptyDemoSet)));
        assert!(ev.shutdown().unwrap().success());
    }

    fn matrix() -> OneShotMatrix {
        OneShotMatrix::new(ids([1, 2]), ids([7, 8]), vec![0.25, 0.5, 0.75, 0.125]).unwrap()
    }

    fn run_mock(faults: &MockFaults, input: &str) -> (bool, Vec<Message>) {
        let mut out = Vec::new();
        let shut = serve_matrix(&matrix(), faults, input.as_bytes(), &mut out).unwrap();
        let msgs = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        (shut, msgs)
    }

    #[test]
    fn mock_answers_with_means() {
        let input = concat!(
            "{\"type\":\"evaluate\",\"id\":0,\"demos\":[1],\"query\":7}\n",
            "{\"type\":\"evaluate\",\"id\":1,\"demos\":[1,2],\"query\":7}\n",
            "{\"type\":\"evaluate\",\"id\":2,\"demos\":[3],\"query\":7}\n",
            "{oops\n",
            "{\"type\":\"shutdown\"}\n",
        );
        let (shut, msgs) = run_mock(&MockFaults::default(), input);
        assert!(shut);
        assert!(matches!(msgs[0], Message::Hello { version: 1, .. }));
        assert_eq!(msgs[1], Message::Result { id: 0, score: 0.25 });
        assert_eq!(msgs[2], Message::Result { id: 1, score: 0.5 });
        assert!(matches!(msgs[3], Message::Error { id: Some(2), .. }));
        assert!(matches!(msgs[4], Message::Error { id: None, .. }));
    }

    #[test]
    fn mock_exit_fault() {
        let faults = MockFaults {
            exit_after: Some(1),
            ..Default::default()
        };
        let input = "{\"type\":\"evaluate\",\"id\":0,\"demos\":[1],\"query\":7}\n{\"type\":\"evaluate\",\"id\":1,\"demos\":[1],\"query\":8}\n";
        let (shut, msgs) = run_mock(&faults, input);
        assert!(!shut);
        assert_eq!(msgs.len(), 2);
    }
}
