//! Alert process run for every uploaded or simulated capture: archive the
//! image under a timestamped name, insert a photo record, and queue one SMS
//! per stored contact.

use std::fs::OpenOptions;
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono_tz::Tz;
use serde::Serialize;
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};
use tracing::{info, warn};

use crate::sms::{SmsHandle, SmsMessage};
use crate::store::{Contact, NewPhoto, PhotoRecord, Store, StoreError};
use crate::time::Timestamp;

/// Web-root-relative directory recorded in `photo_name`.
pub const ARCHIVE_PREFIX: &str = "image/";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("source {path} unreadable: {source}")]
    Source {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("source {0} is not a JPEG image")]
    NotJpeg(PathBuf),
    #[error("failed to copy {from} to {to}: {source}")]
    Copy {
        from: PathBuf,
        to: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("store unavailable after {attempts} attempts: {source}")]
    Store {
        attempts: u32,
        #[source]
        source: StoreError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Origin {
    FtpUpload,
    SimulatedCapture,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlertJob {
    pub source_path: PathBuf,
    pub event_time: Timestamp,
    pub origin: Origin,
}

/// `image/<YYYY-MM-DD>_<HH-MM-SS>.jpg`, with `-2`, `-3`, ... appended to
/// the stem when an earlier capture already took the same second.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchiveName {
    pub date_part: String,
    pub time_part: String,
    /// Display-form time, `HH:MM:SS`.
    pub clock: String,
    pub suffix: u32,
}

impl ArchiveName {
    pub fn for_event(event_time: Timestamp, tz: Tz) -> Self {
        let local = event_time.to_datetime().with_timezone(&tz);
        ArchiveName {
            date_part: local.format("%Y-%m-%d").to_string(),
            time_part: local.format("%H-%M-%S").to_string(),
            clock: local.format("%H:%M:%S").to_string(),
            suffix: 1,
        }
    }

    pub fn file_name(&self) -> String {
        if self.suffix <= 1 {
            format!("{}_{}.jpg", self.date_part, self.time_part)
        } else {
            format!("{}_{}-{}.jpg", self.date_part, self.time_part, self.suffix)
        }
    }

    pub fn full(&self) -> String {
        format!("{ARCHIVE_PREFIX}{}", self.file_name())
    }

    fn next(&self) -> Self {
        ArchiveName {
            suffix: self.suffix.max(1) + 1,
            ..self.clone()
        }
    }
}

pub fn render_alert_body(record: &PhotoRecord) -> String {
    format!("Motion detected at {} on {}.", record.photo_time, record.photo_date)
}

/// Store operations the alert process needs.
pub trait AlertStore: Send + Sync {
    fn photo_name_exists(&self, photo_name: &str) -> Result<bool, StoreError>;
    fn insert_photo(&self, photo: &NewPhoto) -> Result<i64, StoreError>;
    fn list_contacts(&self) -> Result<Vec<Contact>, StoreError>;
}

impl AlertStore for Store {
    fn photo_name_exists(&self, photo_name: &str) -> Result<bool, StoreError> {
        Store::photo_name_exists(self, photo_name)
    }

    fn insert_photo(&self, photo: &NewPhoto) -> Result<i64, StoreError> {
        Store::insert_photo(self, photo)
    }

    fn list_contacts(&self) -> Result<Vec<Contact>, StoreError> {
        Store::list_contacts(self)
    }
}

/// Where outgoing alert messages go.
pub trait SmsSink: Send + Sync {
    fn enqueue(&self, message: SmsMessage) -> bool;
}

impl SmsSink for SmsHandle {
    fn enqueue(&self, message: SmsMessage) -> bool {
        SmsHandle::enqueue(self, message)
    }
}

impl SmsSink for Mutex<Vec<SmsMessage>> {
    fn enqueue(&self, message: SmsMessage) -> bool {
        self.lock().unwrap().push(message);
        true
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Filesystem directory holding archived images.
    pub archive_dir: PathBuf,
    pub timezone: Tz,
    /// Extra attempts after a failed store call.
    pub retries: u32,
    pub retry_backoff: Duration,
}

impl PipelineConfig {
    pub fn new(archive_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            archive_dir: archive_dir.into(),
            timezone: chrono_tz::Asia::Kuala_Lumpur,
            retries: 3,
            retry_backoff: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Processed {
    pub record: PhotoRecord,
    pub messages: Vec<SmsMessage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FailedJob {
    pub job: AlertJob,
    pub error: String,
    pub dead_lettered: bool,
}

pub struct Pipeline {
    store: Arc<dyn AlertStore>,
    sms: Arc<dyn SmsSink>,
    config: PipelineConfig,
}

fn is_jpeg(bytes: &[u8]) -> bool {
    bytes.len() >= 3 && bytes[..3] == [0xFF, 0xD8, 0xFF]
}

impl Pipeline {
    pub fn new(store: Arc<dyn AlertStore>, sms: Arc<dyn SmsSink>, config: PipelineConfig) -> Self {
        Pipeline { store, sms, config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    fn with_retries<T>(&self, mut op: impl FnMut() -> Result<T, StoreError>) -> Result<T, PipelineError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if attempts > self.config.retries => {
                    return Err(PipelineError::Store { attempts, source: e });
                }
                Err(e) => {
                    warn!(error = %e, attempt = attempts, "store call failed, retrying");
                    std::thread::sleep(self.config.retry_backoff);
                }
            }
        }
    }

    /// Writes `bytes` under the first free archive name, never replacing an
    /// existing file or recorded name.
    fn archive(&self, job: &AlertJob, bytes: &[u8]) -> Result<(ArchiveName, PathBuf), PipelineError> {
        let mut name = ArchiveName::for_event(job.event_time, self.config.timezone);
        loop {
            if self.with_retries(|| self.store.photo_name_exists(&name.full()))? {
                name = name.next();
                continue;
            }
            let target = self.config.archive_dir.join(name.file_name());
            let copy_err = |source| PipelineError::Copy {
                from: job.source_path.clone(),
                to: target.clone(),
                source,
            };
            let mut file = match OpenOptions::new().write(true).create_new(true).open(&target) {
                Ok(f) => f,
                Err(e) if e.kind() == ErrorKind::AlreadyExists => {
                    name = name.next();
                    continue;
                }
                Err(e) => return Err(copy_err(e)),
            };
            if let Err(e) = file.write_all(bytes).and_then(|_| file.sync_all()) {
                drop(file);
                let _ = std::fs::remove_file(&target);
                return Err(copy_err(e));
            }
            return Ok((name, target));
        }
    }

    /// Runs the alert process for one job. Either the archive copy, the
    /// record and every message all happen, or none do.
    pub fn process(&self, job: &AlertJob) -> Result<Processed, PipelineError> {
        let bytes = std::fs::read(&job.source_path).map_err(|source| PipelineError::Source {
            path: job.source_path.clone(),
            source,
        })?;
        if !is_jpeg(&bytes) {
            return Err(PipelineError::NotJpeg(job.source_path.clone()));
        }

        let contacts = self.with_retries(|| self.store.list_contacts())?;
        let (name, archived) = self.archive(job, &bytes)?;
        let photo = NewPhoto {
            photo_name: name.full(),
            photo_time: name.clock.clone(),
            photo_date: name.date_part.clone(),
        };
        let id = match self.with_retries(|| self.store.insert_photo(&photo)) {
            Ok(id) => id,
            Err(e) => {
                let _ = std::fs::remove_file(&archived);
                return Err(e);
            }
        };
        let record = PhotoRecord {
            id,
            photo_name: photo.photo_name,
            photo_time: photo.photo_time,
            photo_date: photo.photo_date,
        };

        let body = render_alert_body(&record);
        let messages: Vec<SmsMessage> = contacts
            .into_iter()
            .map(|c| SmsMessage {
                recipient: c.contact_no,
                body: body.clone(),
                created_at: job.event_time,
            })
            .collect();
        for m in &messages {
            self.sms.enqueue(m.clone());
        }
        info!(photo = %record.photo_name, messages = messages.len(), "alert processed");
        Ok(Processed { record, messages })
    }
}

#[derive(Debug, Default)]
struct Outcomes {
    processed: Vec<PhotoRecord>,
    failed: Vec<FailedJob>,
}

enum Command {
    Job(AlertJob),
    Flush(oneshot::Sender<()>),
}

/// Queue in front of a single sequential pipeline worker.
#[derive(Clone)]
pub struct PipelineHandle {
    tx: mpsc::UnboundedSender<Command>,
    outcomes: Arc<Mutex<Outcomes>>,
}

impl PipelineHandle {
    pub fn spawn(pipeline: Pipeline) -> PipelineHandle {
        let (tx, mut rx) = mpsc::unbounded_channel::<Command>();
        let outcomes = Arc::new(Mutex::new(Outcomes::default()));
        let worker_outcomes = Arc::clone(&outcomes);
        let pipeline = Arc::new(pipeline);
        tokio::spawn(async move {
            while let Some(cmd) = rx.recv().await {
                match cmd {
                    Command::Job(job) => {
                        let p = Arc::clone(&pipeline);
                        let j = job.clone();
                        let result = tokio::task::spawn_blocking(move || p.process(&j)).await;
                        let mut out = worker_outcomes.lock().unwrap();
                        match result {
                            Ok(Ok(done)) => out.processed.push(done.record),
                            Ok(Err(e)) => {
                                warn!(error = %e, source = %job.source_path.display(), "alert job failed");
                                out.failed.push(FailedJob {
                                    dead_lettered: matches!(e, PipelineError::Store { .. }),
                                    error: e.to_string(),
                                    job,
                                });
                            }
                            Err(join) => out.failed.push(FailedJob {
                                job,
                                error: join.to_string(),
                                dead_lettered: true,
                            }),
                        }
                    }
                    Command::Flush(done) => {
                        let _ = done.send(());
                    }
                }
            }
        });
        PipelineHandle { tx, outcomes }
    }

    pub fn submit(&self, job: AlertJob) -> bool {
        self.tx.send(Command::Job(job)).is_ok()
    }

    pub async fn flush(&self) {
        let (done, wait) = oneshot::channel();
        if self.tx.send(Command::Flush(done)).is_ok() {
            let _ = wait.await;
        }
    }

    pub fn processed(&self) -> Vec<PhotoRecord> {
        self.outcomes.lock().unwrap().processed.clone()
    }

    pub fn failed(&self) -> Vec<FailedJob> {
        self.outcomes.lock().unwrap().failed.clone()
    }
}

/// Path of an archived record on disk.
pub fn archive_file(archive_dir: &Path, record: &PhotoRecord) -> PathBuf {
    archive_dir.join(record.file_name())
}
