use std::time::Duration;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::time::Instant;
use tracing::debug;

use super::{
    is_valid_recipient, validate_body, Exchange, FailureCode, ModemChannel, ModemTranscript, Outcome, SmsMessage,
    ESCAPE, SUBMIT,
};

pub const DEFAULT_REPLY_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, PartialEq, Eq)]
enum Token {
    Line(String),
    Prompt,
}

/// An AT-command session over one modem channel. Keeps its read buffer
/// between messages so a reply split across reads is never lost.
pub struct AtLink<C> {
    io: C,
    buf: Vec<u8>,
    reply_timeout: Duration,
}

impl<C: ModemChannel> AtLink<C> {
    pub fn new(io: C, reply_timeout: Duration) -> Self {
        AtLink {
            io,
            buf: Vec::new(),
            reply_timeout,
        }
    }

    pub fn into_inner(self) -> C {
        self.io
    }

    /// Runs the full text-mode exchange for one message.
    pub async fn send(&mut self, message: &SmsMessage) -> ModemTranscript {
        let mut exchanges = Vec::new();
        if !is_valid_recipient(&message.recipient) {
            return ModemTranscript {
                exchanges,
                outcome: Outcome::Failed(FailureCode::InvalidRecipient),
            };
        }
        if let Err(e) = validate_body(&message.body) {
            return ModemTranscript {
                exchanges,
                outcome: Outcome::Failed(FailureCode::InvalidBody(e.to_string())),
            };
        }

        self.discard_stale().await;
        let outcome = match self.run(message, &mut exchanges).await {
            Ok(reference) => Outcome::Sent { reference },
            Err(code) => Outcome::Failed(code),
        };
        ModemTranscript { exchanges, outcome }
    }

    async fn run(&mut self, message: &SmsMessage, log: &mut Vec<Exchange>) -> Result<u32, FailureCode> {
        self.command("AT", log).await?;
        self.command("AT+CMGF=1", log).await?;

        let submit = format!("AT+CMGS=\"{}\"", message.recipient);
        self.write_line(&submit).await?;
        log.push(Exchange {
            sent: submit.clone(),
            received: Vec::new(),
        });
        if let Err(code) = self.await_prompt(&submit, log).await {
            self.cancel_prompt(log).await;
            return Err(code);
        }

        let mut payload = message.body.as_bytes().to_vec();
        payload.push(SUBMIT);
        self.write_raw(&payload).await?;
        log.push(Exchange {
            sent: format!("{}\u{1A}", message.body),
            received: Vec::new(),
        });
        match self.await_submit(log).await {
            Ok(reference) => Ok(reference),
            Err(code) => {
                if code == FailureCode::Timeout {
                    self.cancel_prompt(log).await;
                }
                Err(code)
            }
        }
    }

    async fn command(&mut self, cmd: &str, log: &mut Vec<Exchange>) -> Result<(), FailureCode> {
        self.write_line(cmd).await?;
        log.push(Exchange {
            sent: cmd.to_string(),
            received: Vec::new(),
        });
        let deadline = Instant::now() + self.reply_timeout;
        loop {
            let token = self.next_token(deadline).await?;
            let line = match token {
                Token::Line(l) => l,
                Token::Prompt => {
                    record(log, ">".into());
                    continue;
                }
            };
            if line == cmd {
                // command echo
                continue;
            }
            record(log, line.clone());
            if let Some(code) = final_error(&line) {
                return Err(code);
            }
            if line == "OK" {
                return Ok(());
            }
        }
    }

    async fn await_prompt(&mut self, cmd: &str, log: &mut Vec<Exchange>) -> Result<(), FailureCode> {
        let deadline = Instant::now() + self.reply_timeout;
        loop {
            match self.next_token(deadline).await? {
                Token::Prompt => {
                    record(log, ">".into());
                    return Ok(());
                }
                Token::Line(line) if line == cmd => continue,
                Token::Line(line) => {
                    record(log, line.clone());
                    if let Some(code) = final_error(&line) {
                        return Err(code);
                    }
                }
            }
        }
    }

    async fn await_submit(&mut self, log: &mut Vec<Exchange>) -> Result<u32, FailureCode> {
        let deadline = Instant::now() + self.reply_timeout;
        let mut reference = None;
        loop {
            let line = match self.next_token(deadline).await? {
                Token::Line(l) => l,
                Token::Prompt => continue,
            };
            record(log, line.clone());
            if let Some(code) = final_error(&line) {
                return Err(code);
            }
            if let Some(rest) = line.strip_prefix("+CMGS:") {
                reference = rest.trim().parse::<u32>().ok();
            } else if line == "OK" {
                return match reference {
                    Some(r) => Ok(r),
                    // OK without +CMGS does not confirm submission.
                    None => Err(FailureCode::Error),
                };
            }
        }
    }

    async fn cancel_prompt(&mut self, log: &mut Vec<Exchange>) {
        if self.write_raw(&[ESCAPE]).await.is_ok() {
            log.push(Exchange {
                sent: "\u{1B}".into(),
                received: Vec::new(),
            });
        }
    }

    async fn write_line(&mut self, line: &str) -> Result<(), FailureCode> {
        debug!(target: "sms", ">> {line}");
        let mut bytes = Vec::with_capacity(line.len() + 2);
        bytes.extend_from_slice(line.as_bytes());
        bytes.extend_from_slice(b"\r\n");
        self.write_raw(&bytes).await
    }

    async fn write_raw(&mut self, bytes: &[u8]) -> Result<(), FailureCode> {
        let io_err = |e: std::io::Error| FailureCode::Channel(e.to_string());
        self.io.write_all(bytes).await.map_err(io_err)?;
        self.io.flush().await.map_err(io_err)
    }

    /// Drops replies left over from an earlier exchange that timed out.
    async fn discard_stale(&mut self) {
        self.buf.clear();
        let mut scratch = [0u8; 256];
        while let Ok(Ok(n)) = tokio::time::timeout(Duration::from_millis(1), self.io.read(&mut scratch)).await {
            if n == 0 {
                break;
            }
        }
    }

    async fn next_token(&mut self, deadline: Instant) -> Result<Token, FailureCode> {
        loop {
            if let Some(token) = self.take_token() {
                debug!(target: "sms", "<< {token:?}");
                return Ok(token);
            }
            let mut chunk = [0u8; 256];
            let read = tokio::time::timeout_at(deadline, self.io.read(&mut chunk)).await;
            match read {
                Err(_) => return Err(FailureCode::Timeout),
                Ok(Err(e)) => return Err(FailureCode::Channel(e.to_string())),
                Ok(Ok(0)) => return Err(FailureCode::Channel("modem channel closed".into())),
                Ok(Ok(n)) => self.buf.extend_from_slice(&chunk[..n]),
            }
        }
    }

    fn take_token(&mut self) -> Option<Token> {
        let start = self.buf.iter().position(|b| *b != b'\r' && *b != b'\n')?;
        self.buf.drain(..start);
        if self.buf[0] == b'>' {
            let consumed = if self.buf.get(1) == Some(&b' ') { 2 } else { 1 };
            self.buf.drain(..consumed);
            return Some(Token::Prompt);
        }
        let end = self.buf.iter().position(|b| *b == b'\r' || *b == b'\n')?;
        let line: Vec<u8> = self.buf.drain(..end).collect();
        Some(Token::Line(String::from_utf8_lossy(&line).trim().to_string()))
    }
}

fn record(log: &mut [Exchange], line: String) {
    if let Some(last) = log.last_mut() {
        last.received.push(line);
    }
}

fn final_error(line: &str) -> Option<FailureCode> {
    if line == "ERROR" {
        return Some(FailureCode::Error);
    }
    let rest = line
        .strip_prefix("+CMS ERROR:")
        .or_else(|| line.strip_prefix("+CME ERROR:"))?;
    Some(match rest.trim().parse::<u16>() {
        Ok(n) => FailureCode::CmsError(n),
        Err(_) => FailureCode::Error,
    })
}

/// Sends one message over `channel` with a fresh link.
pub async fn send<C: ModemChannel>(message: &SmsMessage, channel: C, reply_timeout: Duration) -> ModemTranscript {
    AtLink::new(channel, reply_timeout).send(message).await
}
