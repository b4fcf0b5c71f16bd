//! Line-delimited JSON protocol with an evaluator child process.
//!
//! The child first prints `{"protocol": "tsm-hpo/1"}`. It then answers each
//! request line
//! `{"id": .., "values": {..}, "budget_fraction": .., "seed": ..}`
//! with exactly one line, either `{"id": .., "fitness": ..}` or
//! `{"id": .., "error": ".."}`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{EvalError, EvaluationRequest, Evaluator, EvaluatorSpec};

pub const PROTOCOL_VERSION: &str = "tsm-hpo/1";

#[derive(Debug, Serialize)]
struct WireRequest<'a> {
    id: &'a str,
    values: &'a BTreeMap<String, f64>,
    budget_fraction: f64,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct WireResponse {
    id: String,
    #[serde(default)]
    fitness: Option<f64>,
    #[serde(default)]
    error: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Handshake {
    protocol: String,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

impl Drop for Worker {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Evaluator that forwards requests to child processes, one request in
/// flight per child. Up to `workers` children are started on demand.
pub struct ExternalEvaluator {
    command: Vec<String>,
    slots: Vec<Mutex<Option<Worker>>>,
}

impl ExternalEvaluator {
    pub fn new(command: Vec<String>, workers: usize) -> Result<Self, EvalError> {
        if command.is_empty() || command[0].is_empty() {
            return Err(EvalError::EvaluatorUnavailable {
                id: String::new(),
                message: "empty evaluator command".into(),
            });
        }
        Ok(Self {
            command,
            slots: (0..workers.max(1)).map(|_| Mutex::new(None)).collect(),
        })
    }

    fn spawn(&self, id: &str) -> Result<Worker, EvalError> {
        let unavailable = |message: String| EvalError::EvaluatorUnavailable {
            id: id.to_string(),
            message,
        };
        let mut child = Command::new(&self.command[0])
            .args(&self.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| unavailable(format!("cannot start `{}`: {e}", self.command[0])))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = BufReader::new(child.stdout.take().expect("piped stdout"));

        let mut line = String::new();
        let n = stdout
            .read_line(&mut line)
            .map_err(|e| unavailable(format!("reading handshake: {e}")))?;
        if n == 0 {
            return Err(unavailable("process exited before handshake".into()));
        }
        let hs: Handshake = serde_json::from_str(line.trim()).map_err(|e| {
            EvalError::MalformedResponse {
                id: id.to_string(),
                message: format!("bad handshake {:?}: {e}", line.trim()),
            }
        })?;
        if hs.protocol != PROTOCOL_VERSION {
            return Err(EvalError::MalformedResponse {
                id: id.to_string(),
                message: format!("unsupported protocol {:?}", hs.protocol),
            });
        }
        Ok(Worker {
            child,
            stdin,
            stdout,
        })
    }

    fn exchange(worker: &mut Worker, request: &EvaluationRequest) -> Result<f64, EvalError> {
        let id = request.id.as_str();
        let unavailable = |message: String| EvalError::EvaluatorUnavailable {
            id: id.to_string(),
            message,
        };
        let malformed = |message: String| EvalError::MalformedResponse {
            id: id.to_string(),
            message,
        };
        let wire = WireRequest {
            id,
            values: &request.values,
            budget_fraction: request.budget_fraction,
            seed: request.seed,
        };
        let mut payload = serde_json::to_string(&wire).expect("request serializes");
        payload.push('\n');
        worker
            .stdin
            .write_all(payload.as_bytes())
            .and_then(|_| worker.stdin.flush())
            .map_err(|e| unavailable(format!("writing request: {e}")))?;

        let mut line = String::new();
        let n = worker
            .stdout
            .read_line(&mut line)
            .map_err(|e| unavailable(format!("reading response: {e}")))?;
        if n == 0 {
            return Err(unavailable("process closed its output".into()));
        }
        let resp: WireResponse = serde_json::from_str(line.trim())
            .map_err(|e| malformed(format!("{:?}: {e}", line.trim())))?;
        if resp.id != id {
            return Err(malformed(format!("unknown response id {:?}", resp.id)));
        }
        match (resp.fitness, resp.error) {
            (Some(f), None) => Ok(f),
            (None, Some(message)) => Err(EvalError::EvaluationFailed {
                id: id.to_string(),
                message,
            }),
            _ => Err(malformed(
                "response must carry exactly one of `fitness` and `error`".into(),
            )),
        }
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, request: &EvaluationRequest) -> Result<f64, EvalError> {
        let guard = self
            .slots
            .iter()
            .find_map(|s| s.try_lock().ok())
            .unwrap_or_else(|| self.slots[0].lock().expect("worker slot"));
        let mut guard = guard;
        if guard.is_none() {
            *guard = Some(self.spawn(&request.id)?);
        }
        let result = Self::exchange(guard.as_mut().expect("spawned"), request);
        if matches!(
            result,
            Err(EvalError::EvaluatorUnavailable { .. }) | Err(EvalError::MalformedResponse { .. })
        ) {
            // the stream may be out of sync; restart on next use
            *guard = None;
        }
        result
    }

    fn describe(&self) -> EvaluatorSpec {
        EvaluatorSpec::External {
            command: self.command.clone(),
        }
    }
}
