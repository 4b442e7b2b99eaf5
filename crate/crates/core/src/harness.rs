//! Subprocess adapter protocol.
//!
//! Every invocation spawns the bug's adapter command, writes one JSON request
//! to its stdin and reads the response from stdout:
//!
//! ```text
//! request:  {"mode":"suite"|"args"|"capture","patch":..,"test_id":..,"args":..,"timeout_secs":..}
//! response: {"verdict":"pass"|"fail"|"timeout"|"error","traceback":..,"frames":[..]|null}
//! capture:  one {"invocation":<obj envelope>,"test_id":..,"verdict":..} per line
//! ```
//!
//! Compilation and instrumentation of the target are the adapter's business;
//! patches are opaque text here.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::context::{Frame, Traceback};
use crate::values::{params_envelope, ParamTuple};

pub use crate::testcase::{OracleKind, Provenance, TestCase};

/// Extra wall time granted past the adapter's own timeout before it is killed.
pub const KILL_GRACE: Duration = Duration::from_secs(2);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum HarnessError {
    #[error("adapter unavailable: {0}")]
    AdapterUnavailable(String),
    #[error("adapter protocol error: {0}")]
    ProtocolError(String),
    #[error("assertion-oracle inputs cannot be run in args mode")]
    OracleUnsupported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Traceback),
    Timeout,
    HarnessError(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail(_) => "fail",
            Verdict::Timeout => "timeout",
            Verdict::HarnessError(_) => "error",
        }
    }

    /// Failure evidence for anything that is not a pass. Timeouts and harness
    /// errors get a synthetic traceback naming the condition.
    pub fn traceback(&self, timeout: Duration) -> Option<Traceback> {
        match self {
            Verdict::Pass => None,
            Verdict::Fail(t) => Some(t.clone()),
            Verdict::Timeout => Some(Traceback::new(
                format!("Timeout: test did not finish within {}s", timeout.as_secs()),
                None,
            )),
            Verdict::HarnessError(m) => Some(Traceback::new(format!("HarnessError: {m}"), None)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Suite,
    Args,
    Capture,
}

#[derive(Debug, Serialize)]
pub struct AdapterRequest<'a> {
    pub mode: Mode,
    pub patch: &'a str,
    pub test_id: Option<&'a str>,
    pub args: Option<Value>,
    pub timeout_secs: u64,
}

#[derive(Debug, Deserialize)]
struct AdapterResponse {
    verdict: String,
    #[serde(default)]
    traceback: Option<String>,
    #[serde(default)]
    frames: Option<Vec<Frame>>,
}

#[derive(Debug, Deserialize)]
struct CaptureRecord {
    invocation: Value,
    test_id: String,
    #[allow(dead_code)]
    verdict: String,
}

/// Passing and failing tests of one full-suite run.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SuiteResult {
    pub passing: Vec<TestCase>,
    pub failing: Vec<(TestCase, Traceback)>,
}

impl SuiteResult {
    pub fn all_pass(&self) -> bool {
        self.failing.is_empty()
    }

    pub fn failing_cases(&self) -> Vec<TestCase> {
        self.failing.iter().map(|(c, _)| c.clone()).collect()
    }
}

/// Raw per-test verdicts of a suite run, in declared test order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteRun {
    pub verdicts: Vec<(String, Verdict)>,
    timeout: Duration,
}

impl SuiteRun {
    pub fn all_pass(&self) -> bool {
        self.verdicts.iter().all(|(_, v)| v.is_pass())
    }

    pub fn failing_ids(&self) -> Vec<&str> {
        self.verdicts
            .iter()
            .filter(|(_, v)| !v.is_pass())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Attaches recorded inputs to the verdicts. A test with no recorded
    /// invocation is represented by a case with an empty parameter tuple.
    pub fn assemble(&self, recorded: &[TestCase], default_oracle: OracleKind) -> SuiteResult {
        let mut result = SuiteResult::default();
        for (test_id, verdict) in &self.verdicts {
            let mut cases: Vec<TestCase> = recorded
                .iter()
                .filter(|c| c.test_id.as_deref() == Some(test_id.as_str()))
                .cloned()
                .collect();
            if cases.is_empty() {
                cases.push(TestCase::recorded(
                    test_id.clone(),
                    test_id.clone(),
                    ParamTuple::default(),
                    default_oracle,
                ));
            }
            match verdict.traceback(self.timeout) {
                None => result.passing.extend(cases),
                Some(tb) => result
                    .failing
                    .extend(cases.into_iter().map(|c| (c, tb.clone()))),
            }
        }
        result
    }
}

#[derive(Debug, Clone)]
pub struct Harness {
    pub command: Vec<String>,
    pub workdir: PathBuf,
    pub test_ids: Vec<String>,
    pub timeout: Duration,
    pub workers: usize,
}

enum Exit {
    Finished { success: bool, stdout: String, stderr: String },
    Killed,
}

impl Harness {
    pub fn new(command: Vec<String>, workdir: impl Into<PathBuf>, test_ids: Vec<String>) -> Self {
        Harness {
            command,
            workdir: workdir.into(),
            test_ids,
            timeout: Duration::from_secs(30),
            workers: 4,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    fn spawn(&self) -> Result<Child, HarnessError> {
        let (program, rest) = self
            .command
            .split_first()
            .ok_or_else(|| HarnessError::AdapterUnavailable("empty adapter command".into()))?;
        let mut command = Command::new(program);
        command
            .args(rest)
            .current_dir(&self.workdir)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // Own process group, so a timeout kill also reaches grandchildren
        // that would otherwise keep the output pipes open.
        #[cfg(unix)]
        std::os::unix::process::CommandExt::process_group(&mut command, 0);
        command
            .spawn()
            .map_err(|e| HarnessError::AdapterUnavailable(format!("{program}: {e}")))
    }

    fn invoke(&self, request: &AdapterRequest<'_>) -> Result<Exit, HarnessError> {
        let body = serde_json::to_vec(request).expect("request serializes");
        let mut child = self.spawn()?;
        let mut stdin = child.stdin.take().expect("piped stdin");
        let mut stdout = child.stdout.take().expect("piped stdout");
        let mut stderr = child.stderr.take().expect("piped stderr");
        let writer = thread::spawn(move || {
            // A broken pipe just means the adapter quit early; its exit code tells.
            let _ = stdin.write_all(&body);
        });
        let out_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout.read_to_string(&mut buf);
            buf
        });
        let err_reader = thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + self.timeout + KILL_GRACE;
        let mut pause = Duration::from_millis(1);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    kill_tree(&mut child);
                    let _ = child.wait();
                    break None;
                }
                Ok(None) => {
                    thread::sleep(pause);
                    pause = (pause * 2).min(Duration::from_millis(20));
                }
                Err(e) => return Err(HarnessError::ProtocolError(format!("wait failed: {e}"))),
            }
        };
        let _ = writer.join();
        let stdout = out_reader.join().unwrap_or_default();
        let stderr = err_reader.join().unwrap_or_default();
        Ok(match status {
            None => Exit::Killed,
            Some(s) => Exit::Finished {
                success: s.success(),
                stdout,
                stderr,
            },
        })
    }

    fn single_verdict(&self, request: &AdapterRequest<'_>) -> Result<Verdict, HarnessError> {
        let (stdout, stderr) = match self.invoke(request)? {
            Exit::Killed => return Ok(Verdict::Timeout),
            Exit::Finished {
                success: false,
                stderr,
                ..
            } => {
                return Err(HarnessError::ProtocolError(format!(
                    "adapter exited with failure: {}",
                    stderr.trim()
                )))
            }
            Exit::Finished { stdout, stderr, .. } => (stdout, stderr),
        };
        let resp: AdapterResponse = serde_json::from_str(stdout.trim()).map_err(|e| {
            HarnessError::ProtocolError(format!("bad response ({e}): {:?}", truncate(&stdout)))
        })?;
        Ok(match resp.verdict.as_str() {
            "pass" => Verdict::Pass,
            "fail" => {
                let raw = resp
                    .traceback
                    .filter(|t| !t.trim().is_empty())
                    .unwrap_or_else(|| "test failed without a traceback".to_string());
                Verdict::Fail(Traceback::new(raw, resp.frames))
            }
            "timeout" => Verdict::Timeout,
            "error" => Verdict::HarnessError(
                resp.traceback
                    .unwrap_or_else(|| stderr.trim().to_string()),
            ),
            other => {
                return Err(HarnessError::ProtocolError(format!(
                    "unknown verdict {other:?}"
                )))
            }
        })
    }

    /// Runs one declared unit test against `patch`.
    pub fn run_test(&self, patch: &str, test_id: &str) -> Result<Verdict, HarnessError> {
        self.single_verdict(&AdapterRequest {
            mode: Mode::Suite,
            patch,
            test_id: Some(test_id),
            args: None,
            timeout_secs: self.timeout.as_secs(),
        })
    }

    /// Runs every declared test against `patch`, one adapter call each.
    pub fn run_suite(&self, patch: &str) -> Result<SuiteRun, HarnessError> {
        let verdicts = self
            .test_ids
            .iter()
            .map(|id| Ok((id.clone(), self.run_test(patch, id)?)))
            .collect::<Result<_, HarnessError>>()?;
        Ok(SuiteRun {
            verdicts,
            timeout: self.timeout,
        })
    }

    /// Calls the buggy function directly on `args`; passes iff nothing is
    /// thrown.
    pub fn run_with_args(
        &self,
        patch: &str,
        args: &ParamTuple,
        oracle: OracleKind,
    ) -> Result<Verdict, HarnessError> {
        if oracle == OracleKind::Assertion {
            return Err(HarnessError::OracleUnsupported);
        }
        self.single_verdict(&AdapterRequest {
            mode: Mode::Args,
            patch,
            test_id: None,
            args: Some(params_envelope(args)),
            timeout_secs: self.timeout.as_secs(),
        })
    }

    /// Runs the unit tests with parameter capture and returns the distinct
    /// recorded inputs.
    pub fn capture(&self, patch: &str, oracle: OracleKind) -> Result<Vec<TestCase>, HarnessError> {
        let request = AdapterRequest {
            mode: Mode::Capture,
            patch,
            test_id: None,
            args: None,
            timeout_secs: self.timeout.as_secs(),
        };
        let stdout = match self.invoke(&request)? {
            Exit::Killed => return Err(HarnessError::ProtocolError("capture timed out".into())),
            Exit::Finished {
                success: false,
                stderr,
                ..
            } => {
                return Err(HarnessError::ProtocolError(format!(
                    "capture exited with failure: {}",
                    stderr.trim()
                )))
            }
            Exit::Finished { stdout, .. } => stdout,
        };
        let mut seen = HashSet::new();
        let mut cases: Vec<TestCase> = Vec::new();
        for line in stdout.lines().filter(|l| !l.trim().is_empty()) {
            let record: CaptureRecord = serde_json::from_str(line).map_err(|e| {
                HarnessError::ProtocolError(format!("bad capture line ({e}): {:?}", truncate(line)))
            })?;
            let value = crate::values::from_envelope(&record.invocation)
                .map_err(|e| HarnessError::ProtocolError(e.to_string()))?;
            let params = ParamTuple::from_object(value)
                .map_err(|e| HarnessError::ProtocolError(e.to_string()))?;
            let case = TestCase::recorded(String::new(), record.test_id.clone(), params, oracle);
            if !seen.insert(case.key()) {
                continue;
            }
            let nth = cases
                .iter()
                .filter(|c| c.test_id.as_deref() == Some(record.test_id.as_str()))
                .count();
            let id = if nth == 0 {
                record.test_id.clone()
            } else {
                format!("{}#{}", record.test_id, nth + 1)
            };
            cases.push(TestCase { id, ..case });
        }
        Ok(cases)
    }

    /// Validates many inputs in args mode on a pool of `self.workers`
    /// threads. Inputs not started before `deadline` get `None`. Protocol
    /// failures on individual inputs count as harness-error verdicts; an
    /// unavailable adapter aborts the batch.
    pub fn validate_many(
        &self,
        patch: &str,
        inputs: &[ParamTuple],
        deadline: Instant,
    ) -> Result<Vec<Option<Verdict>>, HarnessError> {
        let results: Vec<Mutex<Option<Verdict>>> = inputs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);
        let fatal: Mutex<Option<HarnessError>> = Mutex::new(None);
        thread::scope(|scope| {
            for _ in 0..self.workers.min(inputs.len()).max(1) {
                scope.spawn(|| loop {
                    if abort.load(Ordering::Relaxed) || Instant::now() >= deadline {
                        return;
                    }
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(args) = inputs.get(i) else { return };
                    let verdict = match self.run_with_args(patch, args, OracleKind::Exception) {
                        Ok(v) => v,
                        Err(HarnessError::ProtocolError(m)) => Verdict::HarnessError(m),
                        Err(e) => {
                            abort.store(true, Ordering::Relaxed);
                            *fatal.lock().unwrap() = Some(e);
                            return;
                        }
                    };
                    *results[i].lock().unwrap() = Some(verdict);
                });
            }
        });
        if let Some(e) = fatal.into_inner().unwrap() {
            return Err(e);
        }
        Ok(results.into_iter().map(|m| m.into_inner().unwrap()).collect())
    }
}

#[cfg(unix)]
fn kill_tree(child: &mut Child) {
    // SAFETY: plain syscall on the group id we created at spawn time.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
}

#[cfg(not(unix))]
fn kill_tree(child: &mut Child) {
    let _ = child.kill();
}

fn truncate(s: &str) -> String {
    s.chars().take(200).collect()
}
