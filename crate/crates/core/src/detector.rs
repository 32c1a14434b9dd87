//! Frame-differencing motion detector.
//!
//! Two knobs drive detection. *Sensitivity* picks the per-pixel luminance
//! delta that counts as a changed pixel; *threshold* picks the fraction of
//! changed pixels (the motion grade) above which motion is reported as
//! triggered.
//!
//! Colour is not modelled: callers convert to grayscale first, so an object
//! whose luminance matches the background stays invisible.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DetectorError {
    #[error("frame dimensions differ: {prev_w}x{prev_h} vs {curr_w}x{curr_h}")]
    DimensionMismatch {
        prev_w: u32,
        prev_h: u32,
        curr_w: u32,
        curr_h: u32,
    },
    #[error("frame must be at least 1x1, got {width}x{height}")]
    EmptyFrame { width: u32, height: u32 },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    PixelCount { expected: usize, actual: usize },
    #[error("invalid calibration: {0}")]
    Calibration(String),
}

/// One grayscale image, row-major luminance values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
    captured_at: Timestamp,
}

impl Frame {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>, captured_at: Timestamp) -> Result<Self, DetectorError> {
        if width == 0 || height == 0 {
            return Err(DetectorError::EmptyFrame { width, height });
        }
        let expected = width as usize * height as usize;
        if pixels.len() != expected {
            return Err(DetectorError::PixelCount {
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Frame {
            width,
            height,
            pixels,
            captured_at,
        })
    }

    /// A frame with every pixel set to `value`.
    pub fn uniform(width: u32, height: u32, value: u8, captured_at: Timestamp) -> Result<Self, DetectorError> {
        Frame::new(
            width,
            height,
            vec![value; width as usize * height as usize],
            captured_at,
        )
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn captured_at(&self) -> Timestamp {
        self.captured_at
    }

    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }

    pub fn with_timestamp(mut self, captured_at: Timestamp) -> Self {
        self.captured_at = captured_at;
        self
    }
}

/// Three-step setting shared by the sensitivity and threshold knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Low,
    Moderate,
    High,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::Low, Level::Moderate, Level::High];

    fn index(self) -> usize {
        match self {
            Level::Low => 0,
            Level::Moderate => 1,
            Level::High => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Level::Low => "low",
            Level::Moderate => "moderate",
            Level::High => "high",
        }
    }
}

impl std::str::FromStr for Level {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Level::Low),
            "moderate" | "medium" => Ok(Level::Moderate),
            "high" => Ok(Level::High),
            other => Err(format!("unknown level {other:?} (expected low, moderate or high)")),
        }
    }
}

impl std::fmt::Display for Level {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Default per-pixel luminance cutoffs, indexed Low, Moderate, High.
pub const DEFAULT_PIXEL_CUTOFFS: [u8; 3] = [48, 24, 8];
/// Default grade cutoffs, indexed Low, Moderate, High.
pub const DEFAULT_GRADE_CUTOFFS: [f64; 3] = [0.02, 0.10, 0.25];

/// How small a per-pixel change counts as motion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SensitivityLevel {
    pub level: Level,
    /// A pixel is changed when its absolute delta is strictly greater than this.
    pub pixel_delta_cutoff: u8,
}

impl SensitivityLevel {
    pub fn new(level: Level) -> Self {
        SensitivityLevel {
            level,
            pixel_delta_cutoff: DEFAULT_PIXEL_CUTOFFS[level.index()],
        }
    }
}

/// How much aggregate motion is needed before detection triggers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdLevel {
    pub level: Level,
    /// Grades strictly above this trigger. Values >= 1.0 disable triggering.
    pub grade_cutoff: f64,
}

impl ThresholdLevel {
    pub fn new(level: Level) -> Self {
        ThresholdLevel {
            level,
            grade_cutoff: DEFAULT_GRADE_CUTOFFS[level.index()],
        }
    }
}

/// Cutoff tables for both knobs. Defaults are [`DEFAULT_PIXEL_CUTOFFS`] and
/// [`DEFAULT_GRADE_CUTOFFS`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Calibration {
    pub pixel_cutoffs: [u8; 3],
    pub grade_cutoffs: [f64; 3],
}

impl Default for Calibration {
    fn default() -> Self {
        Calibration {
            pixel_cutoffs: DEFAULT_PIXEL_CUTOFFS,
            grade_cutoffs: DEFAULT_GRADE_CUTOFFS,
        }
    }
}

impl Calibration {
    /// Higher sensitivity must mean a strictly smaller pixel cutoff, and a
    /// higher threshold a strictly larger grade cutoff.
    pub fn validate(&self) -> Result<(), DetectorError> {
        let [pl, pm, ph] = self.pixel_cutoffs;
        if !(pl > pm && pm > ph) {
            return Err(DetectorError::Calibration(format!(
                "pixel cutoffs must strictly decrease low > moderate > high, got {:?}",
                self.pixel_cutoffs
            )));
        }
        let [gl, gm, gh] = self.grade_cutoffs;
        if !(gl > 0.0 && gl < gm && gm < gh) || self.grade_cutoffs.iter().any(|g| !g.is_finite()) {
            return Err(DetectorError::Calibration(format!(
                "grade cutoffs must be positive and strictly increase low < moderate < high, got {:?}",
                self.grade_cutoffs
            )));
        }
        Ok(())
    }

    pub fn sensitivity(&self, level: Level) -> SensitivityLevel {
        SensitivityLevel {
            level,
            pixel_delta_cutoff: self.pixel_cutoffs[level.index()],
        }
    }

    pub fn threshold(&self, level: Level) -> ThresholdLevel {
        ThresholdLevel {
            level,
            grade_cutoff: self.grade_cutoffs[level.index()],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub sensitivity: SensitivityLevel,
    pub threshold: ThresholdLevel,
}

impl DetectorConfig {
    pub fn new(sensitivity: Level, threshold: Level) -> Self {
        DetectorConfig {
            sensitivity: SensitivityLevel::new(sensitivity),
            threshold: ThresholdLevel::new(threshold),
        }
    }

    pub fn calibrated(calibration: &Calibration, sensitivity: Level, threshold: Level) -> Self {
        DetectorConfig {
            sensitivity: calibration.sensitivity(sensitivity),
            threshold: calibration.threshold(threshold),
        }
    }
}

impl Default for DetectorConfig {
    /// Low threshold with moderate sensitivity.
    fn default() -> Self {
        DetectorConfig::new(Level::Moderate, Level::Low)
    }
}

/// The preview states: nothing moved, something moved but not enough, or
/// detection fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    NoMotion,
    BelowThreshold,
    Triggered,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionReport {
    pub grade: f64,
    pub classification: Classification,
    pub changed_pixels: usize,
}

impl MotionReport {
    pub fn is_triggered(&self) -> bool {
        self.classification == Classification::Triggered
    }
}

fn check_dimensions(prev: &Frame, curr: &Frame) -> Result<(), DetectorError> {
    if prev.width != curr.width || prev.height != curr.height {
        return Err(DetectorError::DimensionMismatch {
            prev_w: prev.width,
            prev_h: prev.height,
            curr_w: curr.width,
            curr_h: curr.height,
        });
    }
    Ok(())
}

/// Number of pixels whose absolute luminance delta exceeds the cutoff.
pub fn changed_pixels(prev: &Frame, curr: &Frame, sensitivity: &SensitivityLevel) -> Result<usize, DetectorError> {
    check_dimensions(prev, curr)?;
    let cutoff = sensitivity.pixel_delta_cutoff;
    Ok(prev
        .pixels
        .iter()
        .zip(&curr.pixels)
        .filter(|(a, b)| a.abs_diff(**b) > cutoff)
        .count())
}

/// Fraction of pixels that changed by more than the sensitivity cutoff.
pub fn motion_grade(prev: &Frame, curr: &Frame, sensitivity: &SensitivityLevel) -> Result<f64, DetectorError> {
    let changed = changed_pixels(prev, curr, sensitivity)?;
    Ok(changed as f64 / prev.pixel_count() as f64)
}

/// Ties at the cutoff stay below threshold.
pub fn classify(grade: f64, threshold: &ThresholdLevel) -> Classification {
    if grade <= 0.0 {
        Classification::NoMotion
    } else if grade <= threshold.grade_cutoff {
        Classification::BelowThreshold
    } else {
        Classification::Triggered
    }
}

pub fn detect(prev: &Frame, curr: &Frame, config: &DetectorConfig) -> Result<MotionReport, DetectorError> {
    let changed = changed_pixels(prev, curr, &config.sensitivity)?;
    let grade = changed as f64 / prev.pixel_count() as f64;
    Ok(MotionReport {
        grade,
        classification: classify(grade, &config.threshold),
        changed_pixels: changed,
    })
}
