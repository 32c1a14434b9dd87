use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::scenario::{ObjectSpec, Scenario, ScenarioEvent};
use crate::detector::Frame;
use crate::time::Timestamp;

/// Background luminance range of the seeded texture.
pub const BACKGROUND_RANGE: (f64, f64) = (40.0, 100.0);
const TEXTURE_CELL: u32 = 40;
/// Left edge of a mirror reflection, as a fraction of frame width.
const MIRROR_X0: f64 = 0.125;

/// Deterministic frame source for one scenario and seed.
pub struct Renderer {
    scenario: Scenario,
    background: Vec<f64>,
    start: Timestamp,
}

/// Smooth value noise: random control points on a coarse grid, bilinearly
/// interpolated.
fn background(width: u32, height: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gw = (width / TEXTURE_CELL + 2) as usize;
    let gh = (height / TEXTURE_CELL + 2) as usize;
    let (lo, hi) = BACKGROUND_RANGE;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(lo..=hi)).collect();
    let mut out = Vec::with_capacity((width * height) as usize);
    for y in 0..height {
        let gy = y as f64 / TEXTURE_CELL as f64;
        let (y0, fy) = (gy.floor() as usize, gy.fract());
        for x in 0..width {
            let gx = x as f64 / TEXTURE_CELL as f64;
            let (x0, fx) = (gx.floor() as usize, gx.fract());
            let at = |xi: usize, yi: usize| grid[yi * gw + xi];
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

impl Renderer {
    pub fn new(scenario: &Scenario, seed: u64) -> Self {
        Renderer::starting_at(scenario, seed, Timestamp::from_millis(0))
    }

    pub fn starting_at(scenario: &Scenario, seed: u64, start: Timestamp) -> Self {
        Renderer {
            background: background(scenario.width, scenario.height, seed),
            scenario: scenario.clone(),
            start,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn frame_count(&self) -> usize {
        self.scenario.frame_count()
    }

    pub fn timestamp(&self, k: usize) -> Timestamp {
        let ms = (k as f64 * 1000.0 / self.scenario.fps).round() as i64;
        Timestamp::from_millis(self.start.as_millis() + ms)
    }

    /// Renders frame `k`.
    pub fn frame(&self, k: usize) -> Frame {
        let s = &self.scenario;
        let mut buf = self.background.clone();
        if s.direct_view {
            let x0 = s.speed_px * k as f64;
            draw(&mut buf, s.width, s.height, &s.object, x0, 1.0);
        }
        let t = k as f64 / s.fps;
        let mut light = 0.0;
        for e in &s.events {
            match *e {
                ScenarioEvent::Mirror { scale, contrast } => {
                    let obj = ObjectSpec {
                        width: ((s.object.width as f64 * scale).round() as u32).max(1),
                        height: ((s.object.height as f64 * scale).round() as u32).max(1),
                        period: s.object.period * scale,
                        ..s.object
                    };
                    let x0 = MIRROR_X0 * s.width as f64 + s.speed_px * scale * k as f64;
                    draw(&mut buf, s.width, s.height, &obj, x0, contrast);
                }
                ScenarioEvent::LightStep { at_s, delta } if t >= at_s => light += delta,
                ScenarioEvent::LightStep { .. } => {}
            }
        }
        let pixels = buf
            .iter()
            .map(|v| (v + light).round().clamp(0.0, 255.0) as u8)
            .collect();
        Frame::new(s.width, s.height, pixels, self.timestamp(k)).expect("renderer keeps dimensions consistent")
    }

    pub fn frames(&self) -> impl Iterator<Item = Frame> + '_ {
        (0..self.frame_count()).map(|k| self.frame(k))
    }
}

/// Blends `obj` with its left edge at `x0`, vertically centred.
fn draw(buf: &mut [f64], width: u32, height: u32, obj: &ObjectSpec, x0: f64, extra_contrast: f64) {
    let c = obj.contrast * extra_contrast;
    let y0 = (height - obj.height.min(height)) / 2;
    for x in 0..width {
        let u = x as f64 + 0.5 - x0;
        if u < 0.0 || u >= obj.width as f64 {
            continue;
        }
        let lum = obj.base + obj.amplitude * (2.0 * PI * u / obj.period).sin();
        for y in y0..(y0 + obj.height).min(height) {
            let i = (y * width + x) as usize;
            buf[i] = c * lum + (1.0 - c) * buf[i];
        }
    }
}

/// Renders every frame of `scenario`.
pub fn generate(scenario: &Scenario, seed: u64) -> Vec<Frame> {
    Renderer::new(scenario, seed).frames().collect()
}
