use std::io::Cursor;
use std::net::SocketAddr;
use std::time::Duration;

use image::codecs::jpeg::JpegEncoder;
use image::ExtendedColorType;
use serde::Serialize;
use tracing::warn;

use super::render::Renderer;
use super::scenario::Scenario;
use crate::detector::{detect, Classification, DetectorConfig, Frame, MotionReport};
use crate::ingest_ftp::{FtpClient, FtpClientError};
use crate::trigger::{CaptureEvent, Trigger, TriggerConfig};

pub const JPEG_QUALITY: u8 = 85;

pub fn encode_jpeg(frame: &Frame, quality: u8) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    JpegEncoder::new_with_quality(&mut out, quality)
        .encode(frame.pixels(), frame.width(), frame.height(), ExtendedColorType::L8)
        .expect("encoding an in-memory grayscale frame cannot fail");
    out.into_inner()
}

#[derive(Debug)]
pub struct SinkFailure {
    pub transferred: usize,
    pub message: String,
}

/// Destination for captured bursts.
pub trait CaptureSink {
    /// Delivers every frame of `event`, returning how many were transferred.
    fn deliver(&mut self, event: &CaptureEvent) -> Result<usize, SinkFailure>;
}

/// Counts frames without sending them anywhere.
#[derive(Debug, Default)]
pub struct NullSink {
    pub events: usize,
}

impl CaptureSink for NullSink {
    fn deliver(&mut self, event: &CaptureEvent) -> Result<usize, SinkFailure> {
        self.events += 1;
        Ok(event.frames.len())
    }
}

/// Uploads each captured frame as a JPEG over FTP, one STOR per frame.
pub struct FtpSink {
    target: SocketAddr,
    user: String,
    password: String,
    timeout: Duration,
    prefix: String,
    client: Option<FtpClient>,
    sequence: u64,
}

impl FtpSink {
    pub fn new(target: SocketAddr, user: impl Into<String>, password: impl Into<String>) -> Self {
        FtpSink {
            target,
            user: user.into(),
            password: password.into(),
            timeout: Duration::from_secs(5),
            prefix: "cam".into(),
            client: None,
            sequence: 0,
        }
    }

    /// Remote names are `<prefix>_<sequence>.jpg`.
    pub fn with_prefix(mut self, prefix: impl Into<String>) -> Self {
        self.prefix = prefix.into();
        self
    }

    fn client(&mut self) -> Result<&mut FtpClient, FtpClientError> {
        if self.client.is_none() {
            let mut c = FtpClient::connect(self.target, self.timeout)?;
            c.login(&self.user, &self.password)?;
            self.client = Some(c);
        }
        Ok(self.client.as_mut().expect("just connected"))
    }

    pub fn close(&mut self) {
        if let Some(c) = self.client.take() {
            let _ = c.quit();
        }
    }
}

impl Drop for FtpSink {
    fn drop(&mut self) {
        self.close();
    }
}

impl CaptureSink for FtpSink {
    fn deliver(&mut self, event: &CaptureEvent) -> Result<usize, SinkFailure> {
        let mut transferred = 0;
        for frame in &event.frames {
            self.sequence += 1;
            let name = format!("{}_{:06}.jpg", self.prefix, self.sequence);
            let jpeg = encode_jpeg(frame, JPEG_QUALITY);
            let result = self.client().and_then(|c| c.store(&name, &jpeg));
            if let Err(e) = result {
                self.client = None;
                return Err(SinkFailure {
                    transferred,
                    message: e.to_string(),
                });
            }
            transferred += 1;
        }
        Ok(transferred)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub seed: u64,
    pub sensitivity: String,
    pub threshold: String,
    pub triggers: u64,
    pub images_transferred: u64,
    /// Images transferred divided by scenario duration.
    pub images_per_second: f64,
    pub complete: bool,
}

impl ScenarioReport {
    pub const CSV_HEADER: &'static str =
        "scenario,seed,sensitivity,threshold,triggers,images_transferred,images_per_second,complete";
}

/// Writes reports as CSV with a header row.
pub fn write_csv<W: std::io::Write>(out: W, reports: &[ScenarioReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    if reports.is_empty() {
        w.write_record(ScenarioReport::CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Drives generate, detect, trigger and deliver over the whole scenario.
pub fn run_scenario(
    scenario: &Scenario,
    seed: u64,
    detector: &DetectorConfig,
    trigger: &TriggerConfig,
    sink: &mut dyn CaptureSink,
) -> ScenarioReport {
    let renderer = Renderer::new(scenario, seed);
    let mut machine = Trigger::new(trigger.clone()).expect("trigger configuration validated by caller");
    let mut transferred = 0u64;
    let mut complete = true;
    let mut prev: Option<Frame> = None;

    for frame in renderer.frames() {
        let report = match &prev {
            Some(p) => detect(p, &frame, detector).expect("renderer keeps dimensions consistent"),
            None => MotionReport {
                grade: 0.0,
                classification: Classification::NoMotion,
                changed_pixels: 0,
            },
        };
        let now = frame.captured_at();
        prev = Some(frame.clone());
        let event = machine.feed(frame, &report, now).expect("renderer timestamps increase");
        if let Some(event) = event {
            if !complete {
                continue;
            }
            match sink.deliver(&event) {
                Ok(n) => transferred += n as u64,
                Err(f) => {
                    warn!(error = %f.message, "capture delivery failed");
                    transferred += f.transferred as u64;
                    complete = false;
                }
            }
        }
    }

    ScenarioReport {
        scenario: scenario.name.clone(),
        seed,
        sensitivity: detector.sensitivity.level.to_string(),
        threshold: detector.threshold.level.to_string(),
        triggers: machine.triggers_started(),
        images_transferred: transferred,
        images_per_second: transferred as f64 / scenario.duration_s,
        complete,
    }
}
