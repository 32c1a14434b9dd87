//! In-process stand-in for a GSM modem speaking text-mode AT commands.
//!
//! The simulator accepts `AT`, `AT+CMGF=<0|1>`, `AT+CMGS="<number>"`,
//! `ATE0`/`ATE1` and `AT+CSCS=...`; anything else gets `ERROR`. Submitted
//! messages land in an inspectable outbox with sequential references.
//! A [`FaultPlan`] can make any step answer `ERROR`, `+CMS ERROR` or nothing.

use std::sync::{Arc, Mutex};

use serde::Serialize;
use tokio::io::{duplex, AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt, DuplexStream};
use tokio::task::JoinHandle;

use super::{ESCAPE, SUBMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Bare `AT` attention command.
    At,
    /// `AT+CMGF=1`.
    TextMode,
    /// `AT+CMGS=...`, normally answered with the `> ` prompt.
    Submit,
    /// The body terminated by 0x1A, normally answered with `+CMGS: <n>`.
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    Error,
    CmsError(u16),
    /// Swallow the input and never reply.
    Timeout,
}

#[derive(Debug, Clone, Copy)]
struct FaultRule {
    step: Step,
    fault: Fault,
    /// Zero-based message attempt (counted by bare `AT` commands); `None`
    /// applies to every attempt.
    attempt: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    rules: Vec<FaultRule>,
}

impl FaultPlan {
    pub fn new() -> Self {
        FaultPlan::default()
    }

    /// Inject `fault` at `step` on every message.
    pub fn always(mut self, step: Step, fault: Fault) -> Self {
        self.rules.push(FaultRule {
            step,
            fault,
            attempt: None,
        });
        self
    }

    /// Inject `fault` at `step` on the `attempt`-th message only.
    pub fn on_attempt(mut self, attempt: usize, step: Step, fault: Fault) -> Self {
        self.rules.push(FaultRule {
            step,
            fault,
            attempt: Some(attempt),
        });
        self
    }

    fn lookup(&self, step: Step, attempt: usize) -> Option<Fault> {
        self.rules
            .iter()
            .find(|r| r.step == step && r.attempt.map_or(true, |a| a == attempt))
            .map(|r| r.fault)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DeliveredSms {
    pub reference: u32,
    pub recipient: String,
    pub body: String,
}

#[derive(Debug, Default)]
struct Shared {
    outbox: Vec<DeliveredSms>,
    next_reference: u32,
    attempts: usize,
}

/// Cloneable handle: every clone shares one outbox and reference counter.
#[derive(Debug, Clone)]
pub struct SimulatedModem {
    plan: Arc<FaultPlan>,
    shared: Arc<Mutex<Shared>>,
}

impl Default for SimulatedModem {
    fn default() -> Self {
        SimulatedModem::new(FaultPlan::new())
    }
}

enum Mode {
    Command,
    Prompt { recipient: String, body: Vec<u8> },
}

impl SimulatedModem {
    pub fn new(plan: FaultPlan) -> Self {
        SimulatedModem {
            plan: Arc::new(plan),
            shared: Arc::new(Mutex::new(Shared {
                next_reference: 1,
                ..Shared::default()
            })),
        }
    }

    pub fn outbox(&self) -> Vec<DeliveredSms> {
        self.shared.lock().unwrap().outbox.clone()
    }

    /// Returns the host end of a fresh in-memory channel; the modem end is
    /// served on a background task.
    pub fn connect(&self) -> DuplexStream {
        let (host, device) = duplex(4096);
        self.serve(device);
        host
    }

    /// Serves the AT grammar on `io` until it closes.
    pub fn serve<S>(&self, io: S) -> JoinHandle<()>
    where
        S: AsyncRead + AsyncWrite + Unpin + Send + 'static,
    {
        let modem = self.clone();
        tokio::spawn(async move {
            let _ = modem.run(io).await;
        })
    }

    async fn run<S: AsyncRead + AsyncWrite + Unpin>(&self, mut io: S) -> std::io::Result<()> {
        let mut mode = Mode::Command;
        let mut line = Vec::new();
        let mut echo = false;
        let mut text_mode = false;
        let mut buf = [0u8; 512];
        loop {
            let n = io.read(&mut buf).await?;
            if n == 0 {
                return Ok(());
            }
            for &byte in &buf[..n] {
                match &mut mode {
                    Mode::Prompt { recipient, body } => match byte {
                        SUBMIT => {
                            let recipient = std::mem::take(recipient);
                            let body = std::mem::take(body);
                            mode = Mode::Command;
                            let reply = self.submit(recipient, body);
                            if let Some(reply) = reply {
                                io.write_all(&reply).await?;
                            }
                        }
                        ESCAPE => mode = Mode::Command,
                        // LF left over from the CR LF that ended the command line
                        b'\n' if body.is_empty() => {}
                        other => body.push(other),
                    },
                    Mode::Command => match byte {
                        b'\r' | b'\n' => {
                            if line.is_empty() {
                                continue;
                            }
                            let cmd = String::from_utf8_lossy(&line).trim().to_string();
                            line.clear();
                            if echo {
                                io.write_all(format!("{cmd}\r").as_bytes()).await?;
                            }
                            let (reply, next) = self.command(&cmd, &mut echo, &mut text_mode);
                            if let Some(next) = next {
                                mode = next;
                            }
                            if let Some(reply) = reply {
                                io.write_all(&reply).await?;
                            }
                        }
                        ESCAPE | SUBMIT => line.clear(),
                        other => line.push(other),
                    },
                }
            }
            io.flush().await?;
        }
    }

    fn fault(&self, step: Step) -> Option<Fault> {
        let attempt = self.shared.lock().unwrap().attempts.saturating_sub(1);
        self.plan.lookup(step, attempt)
    }

    fn command(&self, cmd: &str, echo: &mut bool, text_mode: &mut bool) -> (Option<Vec<u8>>, Option<Mode>) {
        let upper = cmd.to_ascii_uppercase();
        let step = if upper == "AT" {
            self.shared.lock().unwrap().attempts += 1;
            Some(Step::At)
        } else if upper.starts_with("AT+CMGF=") {
            Some(Step::TextMode)
        } else if upper.starts_with("AT+CMGS=") {
            Some(Step::Submit)
        } else {
            None
        };
        if let Some(fault) = step.and_then(|s| self.fault(s)) {
            return (fault_reply(fault), None);
        }

        match step {
            Some(Step::At) => (Some(ok()), None),
            Some(Step::TextMode) => match &upper["AT+CMGF=".len()..] {
                "1" => {
                    *text_mode = true;
                    (Some(ok()), None)
                }
                "0" => {
                    *text_mode = false;
                    (Some(ok()), None)
                }
                _ => (Some(error()), None),
            },
            Some(Step::Submit) => {
                let arg = cmd["AT+CMGS=".len()..].trim();
                let number = arg.strip_prefix('"').and_then(|a| a.strip_suffix('"'));
                match number {
                    Some(n) if *text_mode && super::is_valid_recipient(n) => (
                        Some(b"\r\n> ".to_vec()),
                        Some(Mode::Prompt {
                            recipient: n.to_string(),
                            body: Vec::new(),
                        }),
                    ),
                    // PDU mode or a malformed number
                    _ => (Some(b"\r\n+CMS ERROR: 304\r\n".to_vec()), None),
                }
            }
            Some(Step::Body) => unreachable!(),
            None => {
                if upper == "ATE0" || upper == "ATE1" {
                    *echo = upper == "ATE1";
                    (Some(ok()), None)
                } else if upper.starts_with("AT+CSCS=") {
                    (Some(ok()), None)
                } else {
                    (Some(error()), None)
                }
            }
        }
    }

    fn submit(&self, recipient: String, body: Vec<u8>) -> Option<Vec<u8>> {
        if let Some(fault) = self.fault(Step::Body) {
            return fault_reply(fault);
        }
        let mut shared = self.shared.lock().unwrap();
        let reference = shared.next_reference;
        shared.next_reference += 1;
        shared.outbox.push(DeliveredSms {
            reference,
            recipient,
            body: String::from_utf8_lossy(&body).into_owned(),
        });
        Some(format!("\r\n+CMGS: {reference}\r\n\r\nOK\r\n").into_bytes())
    }
}

fn ok() -> Vec<u8> {
    b"\r\nOK\r\n".to_vec()
}

fn error() -> Vec<u8> {
    b"\r\nERROR\r\n".to_vec()
}

fn fault_reply(fault: Fault) -> Option<Vec<u8>> {
    match fault {
        Fault::Error => Some(error()),
        Fault::CmsError(code) => Some(format!("\r\n+CMS ERROR: {code}\r\n").into_bytes()),
        Fault::Timeout => None,
    }
}
