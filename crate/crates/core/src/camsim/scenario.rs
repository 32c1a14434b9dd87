use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown scenario preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

/// Named object speeds in pixels per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Speed {
    Walk,
    WalkFast,
    Run,
}

impl Speed {
    pub const ALL: [Speed; 3] = [Speed::Walk, Speed::WalkFast, Speed::Run];

    pub fn px_per_frame(self) -> f64 {
        match self {
            Speed::Walk => 2.0,
            Speed::WalkFast => 5.0,
            Speed::Run => 10.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Speed::Walk => "walk",
            Speed::WalkFast => "walk_fast",
            Speed::Run => "run",
        }
    }
}

impl FromStr for Speed {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Speed::ALL
            .into_iter()
            .find(|sp| sp.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownPreset(s.to_string()))
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A striped upright rectangle. Luminance across its width is
/// `base + amplitude * sin(2 pi u / period)`, blended over the background
/// by `contrast` (1.0 is fully opaque).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectSpec {
    pub width: u32,
    pub height: u32,
    pub base: f64,
    pub amplitude: f64,
    pub period: f64,
    pub contrast: f64,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        ObjectSpec {
            width: 96,
            height: 216,
            base: 190.0,
            amplitude: 40.0,
            period: 16.0,
            contrast: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioEvent {
    /// Adds `delta` to every pixel from `at_s` seconds onward.
    LightStep { at_s: f64, delta: f64 },
    /// A reflection of the object: geometry and apparent speed scaled by
    /// `scale`, contrast multiplied by `contrast`.
    Mirror { scale: f64, contrast: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub width: u32,
    pub height: u32,
    pub fps: f64,
    pub duration_s: f64,
    pub object: ObjectSpec,
    pub speed_px: f64,
    /// Whether the object itself is in view (false leaves only reflections).
    pub direct_view: bool,
    pub events: Vec<ScenarioEvent>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            name: "walk".into(),
            width: 320,
            height: 240,
            fps: 10.0,
            duration_s: 10.0,
            object: ObjectSpec::default(),
            speed_px: Speed::Walk.px_per_frame(),
            direct_view: true,
            events: Vec::new(),
        }
    }
}

pub const PRESETS: [&str; 6] = ["walk", "walk_fast", "run", "static", "light_step", "mirror"];

impl Scenario {
    pub fn moving(speed: Speed) -> Self {
        Scenario {
            name: speed.as_str().into(),
            speed_px: speed.px_per_frame(),
            ..Scenario::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ScenarioError> {
        if let Ok(speed) = name.parse::<Speed>() {
            return Ok(Scenario::moving(speed));
        }
        let s = match name {
            "static" => Scenario {
                name: name.into(),
                speed_px: 0.0,
                ..Scenario::default()
            },
            "light_step" => Scenario {
                name: name.into(),
                speed_px: 0.0,
                events: vec![ScenarioEvent::LightStep { at_s: 3.0, delta: 64.0 }],
                ..Scenario::default()
            },
            "mirror" => Scenario {
                name: name.into(),
                speed_px: Speed::WalkFast.px_per_frame(),
                direct_view: false,
                events: vec![ScenarioEvent::Mirror {
                    scale: 0.4,
                    contrast: 0.4,
                }],
                ..Scenario::default()
            },
            other => return Err(ScenarioError::UnknownPreset(other.into())),
        };
        Ok(s)
    }

    pub fn frame_count(&self) -> usize {
        (self.duration_s * self.fps).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return fail("frame size must be non-zero");
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return fail("fps must be positive");
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return fail("duration must be positive");
        }
        if !(self.speed_px >= 0.0 && self.speed_px.is_finite()) {
            return fail("speed must be non-negative");
        }
        let o = &self.object;
        if o.width == 0 || o.height == 0 || o.width > self.width || o.height > self.height {
            return fail("object must fit inside the frame");
        }
        if !(o.period > 0.0) || !(0.0..=1.0).contains(&o.contrast) {
            return fail("object period must be positive and contrast within 0..=1");
        }
        for e in &self.events {
            if let ScenarioEvent::Mirror { scale, contrast } = e {
                if !(*scale > 0.0 && *scale <= 1.0) || !(0.0..=1.0).contains(contrast) {
                    return fail("mirror scale must be in (0, 1] and contrast in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Parses the line-based `key = value` format. Unset keys keep their
    /// defaults; `light_step` and `mirror` may repeat.
    ///
    /// ```text
    /// name = corridor
    /// speed = walk_fast      # or a number of pixels per frame
    /// light_step = 3.0:64    # seconds:delta
    /// mirror = 0.4:0.4       # scale:contrast
    /// ```
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let mut s = Scenario {
            name: "custom".into(),
            ..Scenario::default()
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| ScenarioError::Parse { line: line_no, message };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("{key}: not a number: {v:?}")));
            let int = |v: &str| {
                v.parse::<u32>()
                    .map_err(|_| err(format!("{key}: not an integer: {v:?}")))
            };
            let pair = |v: &str| -> Result<(f64, f64), ScenarioError> {
                let (a, b) = v.split_once(':').ok_or_else(|| err(format!("{key}: expected a:b")))?;
                Ok((num(a.trim())?, num(b.trim())?))
            };
            match key {
                "name" => s.name = value.to_string(),
                "width" => s.width = int(value)?,
                "height" => s.height = int(value)?,
                "fps" => s.fps = num(value)?,
                "duration_s" => s.duration_s = num(value)?,
                "speed" => {
                    s.speed_px = match value.parse::<Speed>() {
                        Ok(sp) => sp.px_per_frame(),
                        Err(_) => num(value)?,
                    }
                }
                "object_width" => s.object.width = int(value)?,
                "object_height" => s.object.height = int(value)?,
                "object_base" => s.object.base = num(value)?,
                "object_amplitude" => s.object.amplitude = num(value)?,
                "object_period" => s.object.period = num(value)?,
                "object_contrast" => s.object.contrast = num(value)?,
                "direct_view" => {
                    s.direct_view = value
                        .parse()
                        .map_err(|_| err(format!("direct_view: expected true or false, got {value:?}")))?
                }
                "light_step" => {
                    let (at_s, delta) = pair(value)?;
                    s.events.push(ScenarioEvent::LightStep { at_s, delta });
                }
                "mirror" => {
                    let (scale, contrast) = pair(value)?;
                    s.events.push(ScenarioEvent::Mirror { scale, contrast });
                }
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        s.validate()?;
        Ok(s)
    }
}
