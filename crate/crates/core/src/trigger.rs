//! Capture trigger: turns a stream of motion reports into capture bursts.
//!
//! The machine has three phases:
//!
//! * `Idle`: frames rotate through a pre-trigger ring. A triggered report
//!   starts a burst seeded with the ring contents plus the triggering frame.
//! * `Capturing`: post-trigger frames are appended at no more than the
//!   configured capture frequency; further triggers are ignored.
//! * `Deactivated`: once the burst completes it is emitted and every report
//!   is ignored (and nothing is buffered) until the deactivation window that
//!   starts at burst completion has elapsed.

use std::collections::VecDeque;
use std::time::Duration;

use thiserror::Error;

use crate::detector::{Frame, MotionReport};
use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TriggerError {
    #[error("clock went backwards: fed {now} after {previous}")]
    Clock { previous: Timestamp, now: Timestamp },
    #[error("invalid trigger configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerConfig {
    /// Frames kept from before the trigger.
    pub pre_trigger_count: usize,
    /// Frames captured after the triggering frame. Zero emits the burst on
    /// the triggering frame itself.
    pub post_trigger_count: usize,
    /// Upper bound on post-trigger frames per second.
    pub capture_frequency: f64,
    /// Quiet period after a burst completes.
    pub deactivation: Duration,
}

impl TriggerConfig {
    pub fn validate(&self) -> Result<(), TriggerError> {
        if !(self.capture_frequency.is_finite() && self.capture_frequency > 0.0) {
            return Err(TriggerError::Config(format!(
                "capture frequency must be positive, got {}",
                self.capture_frequency
            )));
        }
        Ok(())
    }
}

impl Default for TriggerConfig {
    fn default() -> Self {
        TriggerConfig {
            pre_trigger_count: 2,
            post_trigger_count: 3,
            capture_frequency: 2.0,
            deactivation: Duration::from_secs(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Capturing { remaining: usize },
    Deactivated { until: Timestamp },
}

/// One triggered burst: pre-trigger frames, the triggering frame, then
/// post-trigger frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptureEvent {
    pub frames: Vec<Frame>,
    pub triggered_at: Timestamp,
    pub grade_at_trigger: f64,
}

#[derive(Debug)]
struct Burst {
    event: CaptureEvent,
    last_appended: Timestamp,
}

#[derive(Debug)]
pub struct Trigger {
    config: TriggerConfig,
    phase: Phase,
    ring: VecDeque<Frame>,
    burst: Option<Burst>,
    last_fed: Option<Timestamp>,
    started: u64,
}

impl Trigger {
    pub fn new(config: TriggerConfig) -> Result<Self, TriggerError> {
        config.validate()?;
        Ok(Trigger {
            ring: VecDeque::with_capacity(config.pre_trigger_count),
            config,
            phase: Phase::Idle,
            burst: None,
            last_fed: None,
            started: 0,
        })
    }

    pub fn config(&self) -> &TriggerConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn ring_len(&self) -> usize {
        self.ring.len()
    }

    /// Number of bursts started since construction (including one still in
    /// flight). Not cleared by [`Trigger::reset`].
    pub fn triggers_started(&self) -> u64 {
        self.started
    }

    /// Drops any burst in flight and the ring, returning to `Idle`.
    pub fn reset(&mut self) {
        self.phase = Phase::Idle;
        self.ring.clear();
        self.burst = None;
    }

    pub fn feed(
        &mut self,
        frame: Frame,
        report: &MotionReport,
        now: Timestamp,
    ) -> Result<Option<CaptureEvent>, TriggerError> {
        if let Some(previous) = self.last_fed {
            if now < previous {
                return Err(TriggerError::Clock { previous, now });
            }
        }
        self.last_fed = Some(now);

        if let Phase::Deactivated { until } = self.phase {
            if now < until {
                return Ok(None);
            }
            self.phase = Phase::Idle;
        }

        match self.phase {
            Phase::Idle => {
                if report.is_triggered() {
                    self.start_burst(frame, report, now);
                    Ok(self.finish_if_complete(now))
                } else {
                    self.push_ring(frame);
                    Ok(None)
                }
            }
            Phase::Capturing { remaining } => {
                let burst = self.burst.as_mut().expect("capturing without a burst");
                let elapsed_ms = now.millis_since(burst.last_appended) as f64;
                if elapsed_ms * self.config.capture_frequency < 1000.0 {
                    return Ok(None);
                }
                burst.event.frames.push(frame);
                burst.last_appended = now;
                self.phase = Phase::Capturing {
                    remaining: remaining - 1,
                };
                Ok(self.finish_if_complete(now))
            }
            Phase::Deactivated { .. } => unreachable!("deactivation handled above"),
        }
    }

    fn push_ring(&mut self, frame: Frame) {
        if self.config.pre_trigger_count == 0 {
            return;
        }
        while self.ring.len() >= self.config.pre_trigger_count {
            self.ring.pop_front();
        }
        self.ring.push_back(frame);
    }

    fn start_burst(&mut self, frame: Frame, report: &MotionReport, now: Timestamp) {
        let mut frames = Vec::with_capacity(self.ring.len() + 1 + self.config.post_trigger_count);
        frames.extend(self.ring.drain(..));
        frames.push(frame);
        self.burst = Some(Burst {
            event: CaptureEvent {
                frames,
                triggered_at: now,
                grade_at_trigger: report.grade,
            },
            last_appended: now,
        });
        self.phase = Phase::Capturing {
            remaining: self.config.post_trigger_count,
        };
        self.started += 1;
    }

    fn finish_if_complete(&mut self, now: Timestamp) -> Option<CaptureEvent> {
        if self.phase != (Phase::Capturing { remaining: 0 }) {
            return None;
        }
        self.phase = Phase::Deactivated {
            until: now + self.config.deactivation,
        };
        self.burst.take().map(|b| b.event)
    }
}
