//! SMS dispatch over a GSM modem in text mode.
//!
//! One message is one fixed exchange on the modem's byte channel:
//!
//! ```text
//! AT\r\n                      -> OK
//! AT+CMGF=1\r\n               -> OK
//! AT+CMGS="<recipient>"\r\n   -> "> "
//! <body>\x1A                  -> +CMGS: <ref>, OK
//! ```
//!
//! Every line written and every reply read is recorded in a
//! [`ModemTranscript`], the modem activity log.

mod dispatch;
mod link;
pub mod serial;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite};

use crate::time::Timestamp;

pub use dispatch::{DeadLetter, DispatchRecord, SmsHandle};
pub use link::{send, AtLink, DEFAULT_REPLY_TIMEOUT};
pub use sim::{DeliveredSms, Fault, FaultPlan, SimulatedModem, Step};

/// Text-mode message terminator (Ctrl-Z).
pub const SUBMIT: u8 = 0x1A;
/// Cancels a pending message prompt.
pub const ESCAPE: u8 = 0x1B;
pub const MAX_BODY_CHARS: usize = 160;

/// Anything the dispatcher can talk AT commands over.
pub trait ModemChannel: AsyncRead + AsyncWrite + Unpin + Send {}

impl<T: AsyncRead + AsyncWrite + Unpin + Send> ModemChannel for T {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmsError {
    #[error("invalid recipient {0:?}")]
    InvalidRecipient(String),
    #[error("invalid body: {0}")]
    InvalidBody(String),
}

/// Optional leading `+`, then 3 to 15 digits.
pub fn is_valid_recipient(number: &str) -> bool {
    let digits = number.strip_prefix('+').unwrap_or(number);
    (3..=15).contains(&digits.len()) && digits.bytes().all(|b| b.is_ascii_digit())
}

/// ASCII characters that also belong to the GSM 03.38 basic (non-extension)
/// alphabet. Extension-table characters such as `[`, `{` or `~` cost two
/// septets and are refused along with control bytes.
fn is_basic_char(c: char) -> bool {
    matches!(c,
        'A'..='Z' | 'a'..='z' | '0'..='9' | ' ' | '\n'
        | '!' | '"' | '#' | '$' | '%' | '&' | '\'' | '(' | ')' | '*' | '+' | ','
        | '-' | '.' | '/' | ':' | ';' | '<' | '=' | '>' | '?' | '@' | '_')
}

pub fn validate_body(body: &str) -> Result<(), SmsError> {
    if body.bytes().any(|b| b == SUBMIT) {
        return Err(SmsError::InvalidBody("contains the 0x1A submit terminator".into()));
    }
    if body.bytes().any(|b| b == ESCAPE) {
        return Err(SmsError::InvalidBody("contains the 0x1B escape byte".into()));
    }
    let chars = body.chars().count();
    if chars > MAX_BODY_CHARS {
        return Err(SmsError::InvalidBody(format!(
            "{chars} characters exceeds {MAX_BODY_CHARS}"
        )));
    }
    if let Some(c) = body.chars().find(|c| !is_basic_char(*c)) {
        return Err(SmsError::InvalidBody(format!("character {c:?} outside the basic set")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub recipient: String,
    pub body: String,
    pub created_at: Timestamp,
}

impl SmsMessage {
    pub fn new(recipient: impl Into<String>, body: impl Into<String>, created_at: Timestamp) -> Result<Self, SmsError> {
        let msg = SmsMessage {
            recipient: recipient.into(),
            body: body.into(),
            created_at,
        };
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), SmsError> {
        if !is_valid_recipient(&self.recipient) {
            return Err(SmsError::InvalidRecipient(self.recipient.clone()));
        }
        validate_body(&self.body)
    }
}

/// One command (or body) written and the reply lines read back for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Exchange {
    pub sent: String,
    pub received: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum FailureCode {
    /// Plain `ERROR` reply.
    Error,
    /// `+CMS ERROR: <n>` or `+CME ERROR: <n>`.
    CmsError(u16),
    /// No reply within the configured timeout.
    Timeout,
    InvalidBody(String),
    InvalidRecipient,
    /// The channel itself failed (closed, I/O error).
    Channel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Outcome {
    Sent { reference: u32 },
    Failed(FailureCode),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModemTranscript {
    pub exchanges: Vec<Exchange>,
    pub outcome: Outcome,
}

impl ModemTranscript {
    pub fn is_sent(&self) -> bool {
        matches!(self.outcome, Outcome::Sent { .. })
    }

    /// Renders the activity log one line per direction, `>>` for bytes
    /// written and `<<` for replies.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for ex in &self.exchanges {
            out.push_str(">> ");
            out.push_str(&ex.sent.replace('\u{1A}', "<SUB>").replace('\u{1B}', "<ESC>"));
            out.push('\n');
            for line in &ex.received {
                out.push_str("<< ");
                out.push_str(line);
                out.push('\n');
            }
        }
        out.push_str(&format!("== {:?}\n", self.outcome));
        out
    }
}
