//! Daemon configuration, read from TOML. Every key has a default, so an
//! empty file is a valid configuration.

use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::detector::{Calibration, DetectorConfig, Level};
use crate::ingest_ftp::{Credentials, FtpConfig};
use crate::pipeline::PipelineConfig;
use crate::trigger::TriggerConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub sensitivity: Level,
    pub threshold: Level,
    pub pixel_cutoffs: [u8; 3],
    pub grade_cutoffs: [f64; 3],
}

impl Default for DetectorSection {
    fn default() -> Self {
        let c = Calibration::default();
        DetectorSection {
            sensitivity: Level::Moderate,
            threshold: Level::Low,
            pixel_cutoffs: c.pixel_cutoffs,
            grade_cutoffs: c.grade_cutoffs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TriggerSection {
    pub pre_count: usize,
    pub post_count: usize,
    pub frequency_hz: f64,
    pub deactivation_s: f64,
}

impl Default for TriggerSection {
    fn default() -> Self {
        let t = TriggerConfig::default();
        TriggerSection {
            pre_count: t.pre_trigger_count,
            post_count: t.post_trigger_count,
            frequency_hz: t.capture_frequency,
            deactivation_s: t.deactivation.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FtpSection {
    pub bind: IpAddr,
    pub port: u16,
    pub pasv_range: Option<[u16; 2]>,
    pub source_dir: PathBuf,
    pub user: String,
    pub password: String,
    pub data_timeout_s: f64,
}

impl Default for FtpSection {
    fn default() -> Self {
        FtpSection {
            bind: IpAddr::from([0, 0, 0, 0]),
            port: 2121,
            pasv_range: None,
            source_dir: "source".into(),
            user: "camera".into(),
            password: "camera".into(),
            data_timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub archive_dir: PathBuf,
    pub retries: u32,
    pub retry_backoff_ms: u64,
    pub timezone: String,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            archive_dir: "image".into(),
            retries: 3,
            retry_backoff_ms: 50,
            timezone: "Asia/Kuala_Lumpur".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmsSection {
    /// `"sim"` for the built-in simulated modem, otherwise a serial device path.
    pub device: String,
    pub baud: u32,
    pub reply_timeout_s: f64,
}

impl Default for SmsSection {
    fn default() -> Self {
        SmsSection {
            device: "sim".into(),
            baud: crate::sms::serial::DEFAULT_BAUD,
            reply_timeout_s: crate::sms::DEFAULT_REPLY_TIMEOUT.as_secs_f64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoreSection {
    pub path: PathBuf,
}

impl Default for StoreSection {
    fn default() -> Self {
        StoreSection {
            path: "sentinel.db".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpSection {
    pub bind: IpAddr,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

impl Default for HttpSection {
    fn default() -> Self {
        HttpSection {
            bind: IpAddr::from([0, 0, 0, 0]),
            port: 8080,
            static_dir: None,
        }
    }
}

/// Seeded into `user_acc` on first start only.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdminSection {
    pub username: String,
    pub password: String,
}

impl Default for AdminSection {
    fn default() -> Self {
        AdminSection {
            username: "admin".into(),
            password: "admin".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub detector: DetectorSection,
    pub trigger: TriggerSection,
    pub ftp: FtpSection,
    pub pipeline: PipelineSection,
    pub sms: SmsSection,
    pub store: StoreSection,
    pub http: HttpSection,
    pub admin: AdminSection,
}

fn seconds(field: &str, s: f64) -> Result<Duration, ConfigError> {
    Duration::try_from_secs_f64(s)
        .map_err(|_| ConfigError::Invalid(format!("{field} must be a non-negative number of seconds")))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Config::from_toml(&text)
    }

    /// Resolves relative paths against `base` (usually the config file's
    /// directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.ftp.source_dir,
            &mut self.pipeline.archive_dir,
            &mut self.store.path,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = self.http.static_dir.as_mut() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.calibration()
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.trigger_config()?
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.timezone()?;
        seconds("sms.reply_timeout_s", self.sms.reply_timeout_s)?;
        seconds("ftp.data_timeout_s", self.ftp.data_timeout_s)?;
        if let Some([lo, hi]) = self.ftp.pasv_range {
            if lo == 0 || lo > hi {
                return Err(ConfigError::Invalid(format!(
                    "ftp.pasv_range [{lo}, {hi}] is not a valid port range"
                )));
            }
        }
        if self.ftp.user.is_empty() {
            return Err(ConfigError::Invalid("ftp.user must not be empty".into()));
        }
        Ok(())
    }

    pub fn calibration(&self) -> Calibration {
        Calibration {
            pixel_cutoffs: self.detector.pixel_cutoffs,
            grade_cutoffs: self.detector.grade_cutoffs,
        }
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig::calibrated(&self.calibration(), self.detector.sensitivity, self.detector.threshold)
    }

    pub fn trigger_config(&self) -> Result<TriggerConfig, ConfigError> {
        Ok(TriggerConfig {
            pre_trigger_count: self.trigger.pre_count,
            post_trigger_count: self.trigger.post_count,
            capture_frequency: self.trigger.frequency_hz,
            deactivation: seconds("trigger.deactivation_s", self.trigger.deactivation_s)?,
        })
    }

    pub fn timezone(&self) -> Result<chrono_tz::Tz, ConfigError> {
        self.pipeline
            .timezone
            .parse()
            .map_err(|_| ConfigError::Invalid(format!("unknown timezone {:?}", self.pipeline.timezone)))
    }

    pub fn ftp_config(&self) -> Result<FtpConfig, ConfigError> {
        Ok(FtpConfig {
            bind: self.ftp.bind,
            port: self.ftp.port,
            pasv_range: self.ftp.pasv_range.map(|[a, b]| (a, b)),
            source_dir: self.ftp.source_dir.clone(),
            credentials: Credentials {
                user: self.ftp.user.clone(),
                password: self.ftp.password.clone(),
            },
            data_timeout: seconds("ftp.data_timeout_s", self.ftp.data_timeout_s)?,
        })
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig, ConfigError> {
        Ok(PipelineConfig {
            archive_dir: self.pipeline.archive_dir.clone(),
            timezone: self.timezone()?,
            retries: self.pipeline.retries,
            retry_backoff: Duration::from_millis(self.pipeline.retry_backoff_ms),
        })
    }

    pub fn reply_timeout(&self) -> Result<Duration, ConfigError> {
        seconds("sms.reply_timeout_s", self.sms.reply_timeout_s)
    }
}
