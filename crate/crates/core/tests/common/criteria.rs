//! Whole-criterion checks shared by the feature tests and the acceptance
//! target. Each returns a description of the first violation.

use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use sentinel_core::camsim::{run_scenario, CaptureSink, FtpSink, NullSink, Scenario, SinkFailure, Speed};
use sentinel_core::{CaptureEvent, DetectorConfig, Level, TriggerConfig};

use super::{eventually, files_in, start_daemon, FIGURE_CONTACTS};

pub const GRID_SEED: u64 = 1;

/// Triggers per cell, indexed `[speed][threshold][sensitivity]`.
pub type Grid = [[[u64; 3]; 3]; 3];

pub fn triggers(scenario: &Scenario, seed: u64, threshold: Level, sensitivity: Level) -> u64 {
    let detector = DetectorConfig::new(sensitivity, threshold);
    run_scenario(
        scenario,
        seed,
        &detector,
        &TriggerConfig::default(),
        &mut NullSink::default(),
    )
    .triggers
}

pub fn camsim_grid(seed: u64) -> Grid {
    let mut g = [[[0; 3]; 3]; 3];
    for (si, speed) in Speed::ALL.into_iter().enumerate() {
        let scenario = Scenario::moving(speed);
        for (ti, t) in Level::ALL.into_iter().enumerate() {
            for (vi, v) in Level::ALL.into_iter().enumerate() {
                g[si][ti][vi] = triggers(&scenario, seed, t, v);
            }
        }
    }
    g
}

pub fn check_grid(g: &Grid) -> Result<(), String> {
    for (si, speed) in Speed::ALL.into_iter().enumerate() {
        for k in 0..3 {
            for j in 0..2 {
                if g[si][j + 1][k] > g[si][j][k] {
                    return Err(format!(
                        "{speed}: triggers rise with threshold at sensitivity index {k}: {:?}",
                        g[si]
                    ));
                }
                if g[si][k][j + 1] < g[si][k][j] {
                    return Err(format!(
                        "{speed}: triggers fall with sensitivity at threshold index {k}: {:?}",
                        g[si]
                    ));
                }
            }
        }
        // high threshold, low sensitivity
        if g[si][2][0] != 0 {
            return Err(format!(
                "{speed}: high threshold / low sensitivity triggered {}",
                g[si][2][0]
            ));
        }
    }
    // low threshold, moderate sensitivity, walking
    if g[0][0][1] < 1 {
        return Err("walk: low threshold / moderate sensitivity never triggered".into());
    }
    Ok(())
}

pub fn check_light_step(seed: u64) -> Result<(), String> {
    let s = Scenario::preset("light_step").unwrap();
    for t in Level::ALL {
        if triggers(&s, seed, t, Level::High) == 0 {
            return Err(format!(
                "light step at High sensitivity / {t} threshold did not trigger"
            ));
        }
    }
    let still = Scenario::preset("static").unwrap();
    if triggers(&still, seed, Level::Low, Level::High) != 0 {
        return Err("static scene triggered".into());
    }
    Ok(())
}

/// Corner cells as (threshold, sensitivity); only the first may trigger.
pub const MIRROR_CORNERS: [(Level, Level); 4] = [
    (Level::Low, Level::High),
    (Level::Low, Level::Low),
    (Level::High, Level::Low),
    (Level::High, Level::High),
];

pub fn check_mirror(seed: u64) -> Result<(), String> {
    let s = Scenario::preset("mirror").unwrap();
    let counts: Vec<u64> = MIRROR_CORNERS.iter().map(|(t, v)| triggers(&s, seed, *t, *v)).collect();
    if counts[0] == 0 || counts[1..].iter().any(|&c| c > 0) {
        return Err(format!(
            "mirror corner triggers {counts:?}, expected only the first non-zero"
        ));
    }
    Ok(())
}

/// Wraps a sink and notes when each delivery finished.
pub struct TimedSink<S> {
    pub inner: S,
    pub delivered: Arc<Mutex<Vec<(Instant, usize)>>>,
}

impl<S: CaptureSink> CaptureSink for TimedSink<S> {
    fn deliver(&mut self, event: &CaptureEvent) -> Result<usize, SinkFailure> {
        let r = self.inner.deliver(event);
        if let Ok(n) = &r {
            self.delivered.lock().unwrap().push((Instant::now(), *n));
        }
        r
    }
}

/// A single-frame burst with a quiet window longer than the scenario.
pub fn single_shot_trigger() -> TriggerConfig {
    TriggerConfig {
        pre_trigger_count: 0,
        post_trigger_count: 0,
        capture_frequency: 10.0,
        deactivation: Duration::from_secs(3600),
    }
}

pub const PIPELINE_LIMIT: Duration = Duration::from_secs(2);

/// Simulated camera uploads one capture to a fresh daemon; the archive,
/// store and modem outbox must all reflect it within [`PIPELINE_LIMIT`].
pub async fn end_to_end(dir: &Path) -> Result<(), String> {
    let daemon = start_daemon(dir, &FIGURE_CONTACTS).await;
    let target = daemon.ftp_addr();
    let delivered = Arc::new(Mutex::new(Vec::new()));
    let log = delivered.clone();
    let report = tokio::task::spawn_blocking(move || {
        let mut sink = TimedSink {
            inner: FtpSink::new(target, "camera", "secret"),
            delivered: log,
        };
        let scenario = Scenario::moving(Speed::Walk);
        let detector = DetectorConfig::new(Level::Moderate, Level::Low);
        run_scenario(&scenario, GRID_SEED, &detector, &single_shot_trigger(), &mut sink)
    })
    .await
    .map_err(|e| e.to_string())?;
    if !report.complete || report.images_transferred != 1 {
        return Err(format!("camera run {report:?}"));
    }
    let uploaded_at = delivered.lock().unwrap()[0].0;
    let budget = PIPELINE_LIMIT.saturating_sub(uploaded_at.elapsed());

    let modem = daemon.modem.clone().ok_or("daemon has no simulated modem")?;
    let store = daemon.store.clone();
    let ready = eventually(budget, || {
        modem.outbox().len() >= 2 && !store.list_photos().unwrap().is_empty()
    })
    .await;
    if !ready {
        return Err(format!(
            "after {:?}: {} photos, {} messages, failed jobs {:?}",
            uploaded_at.elapsed(),
            store.list_photos().unwrap().len(),
            modem.outbox().len(),
            daemon.pipeline.failed()
        ));
    }

    let archived = files_in(&dir.join("image"));
    let [file] = archived.as_slice() else {
        return Err(format!("archive holds {archived:?}"));
    };
    let file_name = file.file_name().unwrap().to_string_lossy().into_owned();
    let stem = file_name.strip_suffix(".jpg").ok_or("archive file is not .jpg")?;
    let stamp = chrono::NaiveDateTime::parse_from_str(stem, "%Y-%m-%d_%H-%M-%S")
        .map_err(|e| format!("archive name {file_name:?}: {e}"))?;
    let bytes = std::fs::read(file).map_err(|e| e.to_string())?;
    if bytes[..3] != super::TEST_JPEG_HEAD {
        return Err("archived file is not a JPEG".into());
    }

    let photos = store.list_photos().unwrap();
    let [record] = photos.as_slice() else {
        return Err(format!("store holds {photos:?}"));
    };
    if record.photo_name != format!("image/{file_name}")
        || record.photo_date != stamp.format("%Y-%m-%d").to_string()
        || record.photo_time != stamp.format("%H:%M:%S").to_string()
    {
        return Err(format!("record {record:?} does not match {file_name}"));
    }

    let outbox = modem.outbox();
    let body = format!("Motion detected at {} on {}.", record.photo_time, record.photo_date);
    let got: Vec<(&str, &str)> = outbox.iter().map(|m| (m.recipient.as_str(), m.body.as_str())).collect();
    let want: Vec<(&str, &str)> = FIGURE_CONTACTS.iter().map(|c| (*c, body.as_str())).collect();
    if got != want {
        return Err(format!("outbox {got:?}, expected {want:?}"));
    }
    daemon.shutdown();
    Ok(())
}
