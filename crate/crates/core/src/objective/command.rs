//! Objective backed by an external process.
//!
//! The configuration is written as one JSON object to the child's standard
//! input; the child must print `{"loss": <number>}` on standard output.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{EvalFailure, Objective, Status};
use crate::space::{Configuration, SearchSpace};

#[derive(Deserialize)]
struct Reply {
    loss: f64,
}

pub struct CommandObjective {
    name: String,
    template: String,
    space: SearchSpace,
    timeout: Option<Duration>,
}

impl CommandObjective {
    /// `template` is run through `sh -c`; `{fidelity}` and `{seed}` are substituted.
    pub fn new(template: &str, space: SearchSpace) -> Self {
        Self {
            name: format!("command:{}", space.name()),
            template: template.to_string(),
            space,
            timeout: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = Some(timeout);
        self
    }
}

impl Objective for CommandObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&self, config: &Configuration, fidelity: f64, seed: u64) -> Result<f64, EvalFailure> {
        let command = self
            .template
            .replace("{fidelity}", &fidelity.to_string())
            .replace("{seed}", &seed.to_string());
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EvalFailure::failed(format!("spawn `{command}`: {e}")))?;
        let payload = serde_json::to_vec(config).expect("configuration serializes");
        if let Some(mut stdin) = child.stdin.take() {
            // a child that ignores its input may close the pipe early
            let _ = stdin.write_all(&payload);
        }
        if let Some(limit) = self.timeout {
            let start = Instant::now();
            loop {
                match child.try_wait() {
                    Ok(Some(_)) => break,
                    Ok(None) if start.elapsed() >= limit => {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(EvalFailure {
                            status: Status::Timeout,
                            message: format!("timed out after {limit:?}"),
                        });
                    }
                    Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                    Err(e) => return Err(EvalFailure::failed(e.to_string())),
                }
            }
        }
        let output = child.wait_with_output().map_err(|e| EvalFailure::failed(e.to_string()))?;
        if !output.status.success() {
            return Err(EvalFailure::failed(format!("`{command}` exited with {}", output.status)));
        }
        let reply: Reply = serde_json::from_slice(&output.stdout)
            .map_err(|e| EvalFailure::failed(format!("unparseable reply: {e}")))?;
        if reply.loss.is_finite() {
            Ok(reply.loss)
        } else {
            Err(EvalFailure::failed("non-finite loss"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::VariableSpec;

    fn space() -> SearchSpace {
        SearchSpace::new("ext", vec![VariableSpec::real("x", 0.0, 1.0)]).unwrap()
    }

    #[test]
    fn reads_loss_from_stdout() {
        let obj = CommandObjective::new(r#"cat > /dev/null; echo '{"loss": 0.25}'"#, space());
        let c = space().default_configuration();
        assert_eq!(obj.evaluate(&c, 1.0, 0).unwrap(), 0.25);
    }

    #[test]
    fn child_sees_configuration_on_stdin() {
        let obj = CommandObjective::new(
            r#"python3 -c 'import json,sys; c=json.load(sys.stdin); print(json.dumps({"loss": c["x"] * 2}))'"#,
            space(),
        );
        let mut c = Configuration::new();
        c.insert("x", 0.25);
        assert_eq!(obj.evaluate(&c, 1.0, 0).unwrap(), 0.5);
    }

    #[test]
    fn nonzero_exit_is_failure() {
        let obj = CommandObjective::new("exit 3", space());
        let err = obj.evaluate(&space().default_configuration(), 1.0, 0).unwrap_err();
        assert_eq!(err.status, Status::Failed);
    }

    #[test]
    fn slow_command_times_out() {
        let obj = CommandObjective::new("sleep 5", space()).with_timeout(Duration::from_millis(50));
        let err = obj.evaluate(&space().default_configuration(), 1.0, 0).unwrap_err();
        assert_eq!(err.status, Status::Timeout);
    }
}
