use std::fmt::Display;
use std::io::Write;

use crate::CliError;

/// Collects transcript lines and optionally echoes them to stdout as they
/// happen.
#[derive(Debug, Default)]
pub struct Transcript {
    lines: Vec<String>,
    echo: bool,
}

impl Transcript {
    pub fn new() -> Self {
        Transcript::default()
    }

    pub fn echoing() -> Self {
        Transcript { lines: Vec::new(), echo: true }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn into_lines(self) -> Vec<String> {
        self.lines
    }

    pub fn line(&mut self, line: impl Into<String>) {
        let line = line.into();
        if self.echo {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{line}");
            let _ = out.flush();
        }
        self.lines.push(line);
    }

    pub fn ok(&mut self, step: &str, detail: impl Display) {
        let detail = detail.to_string();
        if detail.is_empty() {
            self.line(format!("STEP {step} OK"));
        } else {
            self.line(format!("STEP {step} OK {detail}"));
        }
    }

    /// Records a failed step and returns the matching error.
    pub fn fail(&mut self, step: &str, reason: impl Display) -> CliError {
        let reason = reason.to_string();
        self.line(format!("STEP {step} FAIL {reason}"));
        CliError::step(step, reason)
    }

    /// Records a failed step but keeps the original error.
    pub fn fail_keep(&mut self, step: &str, err: CliError) -> CliError {
        self.line(format!("STEP {step} FAIL {err}"));
        err
    }

    /// Records `OK detail(value)` or `FAIL err`.
    pub fn check<T, E: Display, D: Display>(
        &mut self,
        step: &str,
        result: Result<T, E>,
        detail: impl FnOnce(&T) -> D,
    ) -> Result<T, CliError> {
        match result {
            Ok(v) => {
                let d = detail(&v);
                self.ok(step, d);
                Ok(v)
            }
            Err(e) => Err(self.fail(step, e)),
        }
    }

    pub fn has_step(&self, step: &str, outcome: &str) -> bool {
        let prefix = format!("STEP {step} {outcome}");
        self.lines.iter().any(|l| l == &prefix || l.starts_with(&format!("{prefix} ")))
    }
}
