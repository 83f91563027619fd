//! Child-process agents speaking newline-delimited JSON over stdin/stdout.
//!
//! ```text
//! -> {"type":"hello","protocol":1}
//! <- {"type":"ready","name":"..."}
//! -> {"type":"reset","match_id":7}
//! -> {"type":"act","stage":"battle","obs":[...],"mask":[0,1,...]}
//! <- {"action":12}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::Duration;

use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

use super::{Agent, AgentError};
use crate::encoding::Observation;

pub const PROTOCOL_VERSION: u32 = 1;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(2000);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternalSpec {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl ExternalSpec {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        ExternalSpec { program: program.into(), args, timeout: DEFAULT_TIMEOUT }
    }

    pub fn command_line(&self) -> String {
        std::iter::once(self.program.as_str()).chain(self.args.iter().map(String::as_str)).collect::<Vec<_>>().join(" ")
    }
}

#[derive(Deserialize)]
struct Ready {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default)]
    name: String,
}

#[derive(Deserialize)]
struct Reply {
    action: i64,
}

pub struct ExternalAgent {
    spec: ExternalSpec,
    name: String,
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    failed: bool,
}

impl ExternalAgent {
    /// Starts the process and completes the handshake.
    pub fn spawn(spec: &ExternalSpec) -> Result<Self, AgentError> {
        let mut child = Command::new(&spec.program)
            .args(&spec.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AgentError::External(format!("cannot start {}: {e}", spec.program)))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut agent =
            ExternalAgent { spec: spec.clone(), name: spec.command_line(), child, stdin, lines: rx, failed: false };
        agent.send(&json!({"type": "hello", "protocol": PROTOCOL_VERSION}))?;
        let line = agent.recv()?;
        let ready: Ready = serde_json::from_str(&line).map_err(|e| agent.fail(format!("bad handshake {line:?}: {e}")))?;
        if ready.kind != "ready" {
            return Err(agent.fail(format!("expected ready, got {:?}", ready.kind)));
        }
        if !ready.name.is_empty() {
            agent.name = ready.name;
        }
        Ok(agent)
    }

    fn fail(&mut self, msg: String) -> AgentError {
        self.failed = true;
        AgentError::External(msg)
    }

    fn send(&mut self, msg: &serde_json::Value) -> Result<(), AgentError> {
        if self.failed {
            return Err(AgentError::External("agent already failed".into()));
        }
        let mut line = msg.to_string();
        line.push('\n');
        let stdin = self.stdin.as_mut().expect("stdin open while alive");
        let res = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush());
        res.map_err(|e| self.fail(format!("write failed: {e}")))
    }

    fn recv(&mut self) -> Result<String, AgentError> {
        match self.lines.recv_timeout(self.spec.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(self.fail(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Disconnected) => Err(self.fail("process exited".into())),
            Err(RecvTimeoutError::Timeout) => {
                self.failed = true;
                Err(AgentError::Timeout(self.spec.timeout))
            }
        }
    }
}

impl Agent for ExternalAgent {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn reset(&mut self, match_id: u64) -> Result<(), AgentError> {
        self.send(&json!({"type": "reset", "match_id": match_id}))
    }

    fn act(&mut self, obs: &Observation, mask: &[bool], _rng: &mut ChaCha8Rng) -> Result<usize, AgentError> {
        let mask_bits: Vec<u8> = mask.iter().map(|&m| u8::from(m)).collect();
        self.send(&json!({"type": "act", "stage": obs.stage.name(), "obs": obs.values, "mask": mask_bits}))?;
        let line = self.recv()?;
        let reply: Reply = serde_json::from_str(&line).map_err(|e| self.fail(format!("bad reply {line:?}: {e}")))?;
        let action = reply.action;
        if action < 0 || action as usize >= mask.len() || !mask[action as usize] {
            return Err(AgentError::IllegalAction(action.max(0) as usize));
        }
        Ok(action as usize)
    }
}

impl Drop for ExternalAgent {
    fn drop(&mut self) {
        drop(self.stdin.take());
        if self.failed {
            let _ = self.child.kill();
        }
        // Give a well-behaved agent a moment to exit on EOF, then make sure it is gone.
        for _ in 0..20 {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            thread::sleep(Duration::from_millis(5));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
