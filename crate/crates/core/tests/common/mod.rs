//! Independent reference implementations and fixtures shared by the
//! integration test targets.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sentinel_core::detector::{detect, Classification, DetectorConfig, Frame, MotionReport};
use sentinel_core::trigger::Phase;
use sentinel_core::{Config, Daemon, Level, Timestamp, Trigger, TriggerConfig};

pub mod api;
pub mod criteria;
pub mod ftp;

// ---- detector ----

/// Threshold grade cutoffs as exact percentages, Low/Moderate/High.
pub const GRADE_PERCENT: [u64; 3] = [2, 10, 25];
pub const PIXEL_CUTOFF: [i32; 3] = [48, 24, 8];

/// Counts changed pixels one by one and classifies with exact rational
/// arithmetic: grade > pct/100 iff changed * 100 > pct * total.
pub fn detector_oracle(prev: &[u8], curr: &[u8], pixel_cutoff: i32, grade_percent: u64) -> (usize, Classification) {
    assert_eq!(prev.len(), curr.len());
    let mut changed = 0usize;
    for i in 0..prev.len() {
        let delta = curr[i] as i32 - prev[i] as i32;
        let magnitude = if delta < 0 { -delta } else { delta };
        if magnitude > pixel_cutoff {
            changed += 1;
        }
    }
    let total = prev.len() as u64;
    let class = if changed == 0 {
        Classification::NoMotion
    } else if (changed as u64) * 100 > grade_percent * total {
        Classification::Triggered
    } else {
        Classification::BelowThreshold
    };
    (changed, class)
}

/// Decodes index `n` as a base-3 frame of `len` pixels over `levels`.
pub fn ternary_frame(mut n: u64, len: usize, levels: [u8; 3]) -> Vec<u8> {
    (0..len)
        .map(|_| {
            let v = levels[(n % 3) as usize];
            n /= 3;
            v
        })
        .collect()
}

pub fn frame(w: u32, h: u32, px: Vec<u8>) -> Frame {
    Frame::new(w, h, px, Timestamp::from_millis(0)).unwrap()
}

/// Compares `detect` with the oracle for every knob combination.
pub fn agree(w: u32, h: u32, a: &[u8], b: &[u8]) -> Result<(), String> {
    let (fa, fb) = (frame(w, h, a.to_vec()), frame(w, h, b.to_vec()));
    for (si, s) in Level::ALL.into_iter().enumerate() {
        for (ti, t) in Level::ALL.into_iter().enumerate() {
            let got = detect(&fa, &fb, &DetectorConfig::new(s, t)).unwrap();
            let (changed, class) = detector_oracle(a, b, PIXEL_CUTOFF[si], GRADE_PERCENT[ti]);
            if got.changed_pixels != changed || got.classification != class {
                return Err(format!(
                    "{w}x{h} {a:?} -> {b:?} at {s}/{t}: got ({}, {:?}), oracle ({changed}, {class:?})",
                    got.changed_pixels, got.classification
                ));
            }
            if got.grade != changed as f64 / (w * h) as f64 {
                return Err(format!("grade {} is not changed/total", got.grade));
            }
        }
    }
    Ok(())
}

/// {0, 100, 255} never lands on a cutoff; {0, 24, 72} hits the Moderate and
/// Low pixel cutoffs exactly.
pub const LEVEL_SETS: [[u8; 3]; 2] = [[0, 100, 255], [0, 24, 72]];

/// Every pair of frames up to four pixels over both level sets.
pub fn exhaustive_agreement() -> Result<usize, String> {
    let mut pairs = 0;
    for levels in LEVEL_SETS {
        for (w, h) in [(1, 1), (1, 2), (2, 1), (1, 3), (3, 1), (2, 2), (1, 4), (4, 1)] {
            let len = (w * h) as usize;
            let n = 3u64.pow(len as u32);
            for i in 0..n {
                let a = ternary_frame(i, len, levels);
                for j in 0..n {
                    agree(w, h, &a, &ternary_frame(j, len, levels))?;
                    pairs += 1;
                }
            }
        }
    }
    Ok(pairs)
}

pub const SAMPLED_PAIRS: usize = 10_000;

/// Seed-pinned three-level pairs up to 4x4.
pub fn sampled_agreement(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..SAMPLED_PAIRS {
        let levels = LEVEL_SETS[k % 2];
        let (w, h) = (rng.gen_range(1..=4u32), rng.gen_range(1..=4u32));
        let len = (w * h) as usize;
        let a: Vec<u8> = (0..len).map(|_| levels[rng.gen_range(0..3)]).collect();
        let b: Vec<u8> = (0..len).map(|_| levels[rng.gen_range(0..3)]).collect();
        agree(w, h, &a, &b)?;
    }
    Ok(())
}

// ---- trigger ----

/// Step in a report script: the frame id, whether it triggered, its time.
#[derive(Debug, Clone, Copy)]
pub struct Step {
    pub id: u32,
    pub triggered: bool,
    pub t_ms: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefEvent {
    pub ids: Vec<u32>,
    pub triggered_at: i64,
}

/// Replays a script in one pass with explicit indices: find the next
/// trigger outside the quiet window, take the preceding idle frames, then
/// walk forward collecting post frames at the allowed spacing.
pub fn trigger_reference(steps: &[Step], cfg: &TriggerConfig) -> Vec<RefEvent> {
    let min_gap_ms = 1000.0 / cfg.capture_frequency;
    let deactivation_ms = cfg.deactivation.as_millis() as i64;
    let mut events = Vec::new();
    let mut idle: Vec<u32> = Vec::new();
    let mut quiet_until: Option<i64> = None;
    let mut i = 0;
    while i < steps.len() {
        let s = steps[i];
        if let Some(u) = quiet_until {
            if s.t_ms < u {
                i += 1;
                continue;
            }
            quiet_until = None;
        }
        if !s.triggered {
            idle.push(s.id);
            i += 1;
            continue;
        }
        let keep = idle.len().min(cfg.pre_trigger_count);
        let mut ids: Vec<u32> = idle[idle.len() - keep..].to_vec();
        idle.clear();
        ids.push(s.id);
        let mut last = s.t_ms;
        let mut j = i + 1;
        let mut needed = cfg.post_trigger_count;
        while needed > 0 && j < steps.len() {
            if (steps[j].t_ms - last) as f64 >= min_gap_ms {
                ids.push(steps[j].id);
                last = steps[j].t_ms;
                needed -= 1;
            }
            j += 1;
        }
        if needed > 0 {
            // burst still open when the script ends
            return events;
        }
        events.push(RefEvent {
            ids,
            triggered_at: s.t_ms,
        });
        quiet_until = Some(last + deactivation_ms);
        i = j;
    }
    events
}

/// Feeds a script to the real machine, collecting emitted bursts and the
/// phase after every step.
pub fn run_machine(steps: &[Step], cfg: &TriggerConfig) -> (Vec<RefEvent>, Vec<Phase>) {
    let mut m = Trigger::new(cfg.clone()).unwrap();
    let mut events = Vec::new();
    let mut phases = Vec::new();
    for s in steps {
        let before = m.phase();
        let out = m
            .feed(
                id_frame(s.id, s.t_ms),
                &report(s.triggered),
                Timestamp::from_millis(s.t_ms),
            )
            .unwrap();
        if let Some(ev) = out {
            // nothing is emitted while the quiet window is still open
            if let Phase::Deactivated { until } = before {
                assert!(Timestamp::from_millis(s.t_ms) >= until);
            }
            events.push(RefEvent {
                ids: ev.frames.iter().map(frame_id).collect(),
                triggered_at: ev.triggered_at.as_millis(),
            });
        }
        phases.push(m.phase());
    }
    (events, phases)
}

/// Seed-pinned random script and configuration.
pub fn random_case(seed: u64) -> (Vec<Step>, TriggerConfig) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = TriggerConfig {
        pre_trigger_count: rng.gen_range(0..=4),
        post_trigger_count: rng.gen_range(0..=4),
        capture_frequency: [1.0, 2.0, 4.0, 5.0, 10.0][rng.gen_range(0..5)],
        deactivation: Duration::from_millis(rng.gen_range(0..=5000)),
    };
    let trigger_p = rng.gen_range(0.05..0.6);
    let mut t = 0i64;
    let steps = (0..rng.gen_range(20..200))
        .map(|id| {
            t += [0, 50, 100, 250, 400, 1000, 1500][rng.gen_range(0..7)];
            Step {
                id,
                triggered: rng.gen_bool(trigger_p),
                t_ms: t,
            }
        })
        .collect();
    (steps, cfg)
}

/// A 1x4 frame whose pixels spell `id`, so frames can be told apart.
pub fn id_frame(id: u32, t_ms: i64) -> Frame {
    Frame::new(1, 4, id.to_be_bytes().to_vec(), Timestamp::from_millis(t_ms)).unwrap()
}

pub fn frame_id(f: &Frame) -> u32 {
    u32::from_be_bytes(f.pixels().try_into().unwrap())
}

pub fn report(triggered: bool) -> MotionReport {
    MotionReport {
        grade: if triggered { 0.5 } else { 0.0 },
        classification: if triggered {
            Classification::Triggered
        } else {
            Classification::NoMotion
        },
        changed_pixels: 0,
    }
}

// ---- netcalc ----

/// AND computed one bit at a time.
pub fn and_bitwise(a: u32, m: u32) -> u32 {
    let mut out = 0;
    for bit in 0..32 {
        let x = (a >> bit) & 1;
        let y = (m >> bit) & 1;
        if x == 1 && y == 1 {
            out |= 1 << bit;
        }
    }
    out
}

/// OR with the complement, one bit at a time.
pub fn or_complement_bitwise(a: u32, m: u32) -> u32 {
    let mut out = 0;
    for bit in 0..32 {
        let x = (a >> bit) & 1;
        let flipped = if (m >> bit) & 1 == 1 { 0 } else { 1 };
        if x == 1 || flipped == 1 {
            out |= 1 << bit;
        }
    }
    out
}

/// Members of `addr`'s block among the 256 addresses sharing its first
/// three octets, found by comparing binary strings on the first `prefix`
/// characters.
pub fn block_by_enumeration(addr: [u8; 4], prefix: usize) -> Vec<u32> {
    let bin = |v: u32| format!("{v:032b}");
    let base = u32::from_be_bytes([addr[0], addr[1], addr[2], 0]);
    let me = bin(u32::from_be_bytes(addr));
    (0..256u32)
        .map(|x| base + x)
        .filter(|&y| bin(y)[..prefix] == me[..prefix])
        .collect()
}

// ---- fixtures ----

pub const TEST_JPEG_HEAD: [u8; 3] = [0xFF, 0xD8, 0xFF];
pub const FIGURE_CONTACTS: [&str; 2] = ["0137179296", "0137519570"];

/// A config rooted in `dir` with ephemeral ports and UTC timestamps.
pub fn daemon_config(dir: &Path) -> Config {
    let mut c = Config::default();
    c.ftp.bind = [127, 0, 0, 1].into();
    c.ftp.port = 0;
    c.ftp.user = "camera".into();
    c.ftp.password = "secret".into();
    c.ftp.data_timeout_s = 5.0;
    c.ftp.source_dir = dir.join("source");
    c.pipeline.archive_dir = dir.join("image");
    c.pipeline.timezone = "UTC".into();
    c.store.path = dir.join("sentinel.db");
    c.http.bind = [127, 0, 0, 1].into();
    c.http.port = 0;
    c.sms.reply_timeout_s = 2.0;
    c
}

pub async fn start_daemon(dir: &Path, contacts: &[&str]) -> Daemon {
    let d = Daemon::start(&daemon_config(dir)).await.unwrap();
    for c in contacts {
        d.store.add_contact(c).unwrap();
    }
    d
}

/// Polls `check` until it holds or `limit` elapses.
pub async fn eventually(limit: Duration, mut check: impl FnMut() -> bool) -> bool {
    let start = Instant::now();
    loop {
        if check() {
            return true;
        }
        if start.elapsed() > limit {
            return false;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

pub fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).collect())
        .unwrap_or_default();
    v.sort();
    v
}

// ---- store crash child ----

pub const CRASH_CHILD_ENV: &str = "SENTINEL_CRASH_CHILD_DB";
pub const CRASH_PASSWORDS: [&str; 2] = ["alpha-pass", "bravo-pass"];

/// Body of the writer child: loops over mutations until killed. Each
/// iteration inserts a photo, adds then deletes a contact, and flips the
/// admin password between the two known values.
pub fn crash_writer_child() {
    let Ok(db) = std::env::var(CRASH_CHILD_ENV) else {
        return;
    };
    let db = PathBuf::from(db);
    let archive = db.with_extension("archive");
    let store = sentinel_core::Store::open(&db, &archive).unwrap();
    let account = store
        .verify_login("admin", CRASH_PASSWORDS[0])
        .or_else(|_| store.verify_login("admin", CRASH_PASSWORDS[1]))
        .unwrap();
    let mut n: u64 = 0;
    loop {
        n += 1;
        let name = format!("image/2024-01-01_00-00-00-c{}-{n}.jpg", std::process::id());
        store
            .insert_photo(&sentinel_core::store::NewPhoto {
                photo_name: name,
                photo_time: "00:00:00".into(),
                photo_date: "2024-01-01".into(),
            })
            .unwrap();
        let id = store.add_contact("0137179296").unwrap();
        store.delete_contact(id).unwrap();
        let (old, new) = if store.verify_login("admin", CRASH_PASSWORDS[0]).is_ok() {
            (CRASH_PASSWORDS[0], CRASH_PASSWORDS[1])
        } else {
            (CRASH_PASSWORDS[1], CRASH_PASSWORDS[0])
        };
        store.change_password(account.id, old, new).unwrap();
    }
}

#[derive(Debug)]
pub struct CrashOutcome {
    pub iterations: usize,
    pub failures: Vec<String>,
}

/// Repeatedly starts this test binary as a writer child running
/// `child_test`, kills it mid-write, and checks the reopened store.
pub fn run_crash_iterations(iterations: usize, child_test: &str) -> CrashOutcome {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("crash.db");
    let archive = db.with_extension("archive");
    {
        let store = sentinel_core::Store::open(&db, &archive).unwrap();
        store.bootstrap_admin("admin", CRASH_PASSWORDS[0]).unwrap();
    }
    let exe = std::env::current_exe().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let mut failures = Vec::new();
    let mut last_photos = 0usize;
    for i in 0..iterations {
        let mut child = std::process::Command::new(&exe)
            .args([child_test, "--exact", "--nocapture", "--test-threads=1"])
            .env(CRASH_CHILD_ENV, &db)
            .stdout(std::process::Stdio::null())
            .stderr(std::process::Stdio::null())
            .spawn()
            .unwrap();
        std::thread::sleep(Duration::from_millis(rng.gen_range(30..90)));
        child.kill().unwrap();
        child.wait().unwrap();

        let store = match sentinel_core::Store::open(&db, &archive) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("iteration {i}: reopen failed: {e}"));
                continue;
            }
        };
        if !store.integrity_check().unwrap_or(false) {
            failures.push(format!("iteration {i}: integrity check failed"));
        }
        let a = store.verify_login("admin", CRASH_PASSWORDS[0]).is_ok();
        let b = store.verify_login("admin", CRASH_PASSWORDS[1]).is_ok();
        if a == b {
            failures.push(format!("iteration {i}: password state torn (alpha {a}, bravo {b})"));
        }
        let photos = store.list_photos().unwrap();
        if photos.len() < last_photos {
            failures.push(format!("iteration {i}: committed photos lost"));
        }
        last_photos = photos.len();
        let mut ids: Vec<i64> = photos.iter().map(|p| p.id).collect();
        ids.sort();
        if ids.iter().enumerate().any(|(k, id)| *id != k as i64 + 1) {
            failures.push(format!("iteration {i}: photo ids not contiguous"));
        }
        // a kill between add and delete leaves a whole contact behind, never a partial one
        if store
            .list_contacts()
            .unwrap()
            .iter()
            .any(|c| c.contact_no != "0137179296")
        {
            failures.push(format!("iteration {i}: corrupted contact row"));
        }
    }
    CrashOutcome { iterations, failures }
}
