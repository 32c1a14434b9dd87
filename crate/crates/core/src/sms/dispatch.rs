use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::Serialize;
use tokio::sync::{mpsc, oneshot};
use tracing::{info, warn};

use super::{AtLink, ModemChannel, ModemTranscript, SmsMessage};

#[derive(Debug, Clone, Serialize)]
pub struct DispatchRecord {
    pub message: SmsMessage,
    pub transcript: ModemTranscript,
}

/// A message that could not be sent, kept with the exchange that failed.
pub type DeadLetter = DispatchRecord;

#[derive(Debug, Default)]
struct Ledger {
    sent: Vec<DispatchRecord>,
    dead: Vec<DeadLetter>,
}

enum Command {
    Send(SmsMessage),
    Flush(oneshot::Sender<()>),
}

/// Producer side of the single modem dispatcher. Cloneable; every clone
/// feeds the same serialized queue.
#[derive(Clone)]
pub struct SmsHandle {
    tx: mpsc::UnboundedSender<Command>,
    ledger: Arc<Mutex<Ledger>>,
}

impl SmsHandle {
    /// Spawns the dispatcher task that owns `channel`.
    pub fn spawn<C: ModemChannel + 'static>(channel: C, reply_timeout: Duration) -> SmsHandle {
        let (tx, mut rx) = mpsc::unbounded_channel::<Command>();
        let ledger = Arc::new(Mutex::new(Ledger::default()));
        let task_ledger = Arc::clone(&ledger);
        tokio::spawn(async move {
            let mut link = AtLink::new(channel, reply_timeout);
            while let Some(cmd) = rx.recv().await {
                match cmd {
                    Command::Send(message) => {
                        let transcript = link.send(&message).await;
                        let record = DispatchRecord { message, transcript };
                        let mut ledger = task_ledger.lock().unwrap();
                        if record.transcript.is_sent() {
                            info!(to = %record.message.recipient, "sms sent");
                            ledger.sent.push(record);
                        } else {
                            warn!(
                                to = %record.message.recipient,
                                outcome = ?record.transcript.outcome,
                                "sms dead-lettered"
                            );
                            ledger.dead.push(record);
                        }
                    }
                    Command::Flush(done) => {
                        let _ = done.send(());
                    }
                }
            }
        });
        SmsHandle { tx, ledger }
    }

    /// Queues a message. Returns false if the dispatcher has stopped, in
    /// which case the message is dead-lettered immediately.
    pub fn enqueue(&self, message: SmsMessage) -> bool {
        match self.tx.send(Command::Send(message)) {
            Ok(()) => true,
            Err(mpsc::error::SendError(Command::Send(message))) => {
                self.ledger.lock().unwrap().dead.push(DispatchRecord {
                    message,
                    transcript: ModemTranscript {
                        exchanges: Vec::new(),
                        outcome: super::Outcome::Failed(super::FailureCode::Channel("dispatcher stopped".into())),
                    },
                });
                false
            }
            Err(_) => false,
        }
    }

    /// Resolves once every message queued before this call has been handled.
    pub async fn flush(&self) {
        let (done, wait) = oneshot::channel();
        if self.tx.send(Command::Flush(done)).is_ok() {
            let _ = wait.await;
        }
    }

    pub fn sent(&self) -> Vec<DispatchRecord> {
        self.ledger.lock().unwrap().sent.clone()
    }

    pub fn dead_letters(&self) -> Vec<DeadLetter> {
        self.ledger.lock().unwrap().dead.clone()
    }
}
