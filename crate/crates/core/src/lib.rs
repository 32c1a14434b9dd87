//! Motion-detection notification daemon.
//!
//! A camera (real or [`camsim`]) compares successive frames with the
//! [`detector`], debounces triggered reports into capture bursts with the
//! [`trigger`], and uploads the burst over FTP to [`ingest_ftp`]. Every
//! upload runs the alert [`pipeline`]: archive the image under a timestamped
//! name, record it in the [`store`], and queue one SMS per contact on the
//! [`sms`] dispatcher. [`web_api`] serves the archive and settings, and
//! [`daemon`] runs the whole service from a [`config`] file.

pub mod camsim;
pub mod config;
pub mod daemon;
pub mod detector;
pub mod ingest_ftp;
pub mod netcalc;
pub mod pipeline;
pub mod sms;
pub mod store;
pub mod time;
pub mod trigger;
pub mod web_api;

pub use config::Config;
pub use daemon::Daemon;
pub use detector::{Classification, DetectorConfig, Frame, Level, MotionReport};
pub use ingest_ftp::UploadEvent;
pub use pipeline::{AlertJob, Origin};
pub use sms::SmsMessage;
pub use store::{Contact, PhotoRecord, Store};
pub use time::Timestamp;
pub use trigger::{CaptureEvent, Trigger, TriggerConfig};
