//! Inputs shared by the benchmarks.

use sentinel_core::camsim::{Renderer, Scenario, Speed};
use sentinel_core::Frame;

/// Two consecutive frames of the walking scenario, mid-crossing.
pub fn walking_pair() -> (Frame, Frame) {
    let r = Renderer::new(&Scenario::moving(Speed::Walk), 1);
    let k = r.frame_count() / 2;
    (r.frame(k), r.frame(k + 1))
}

/// The full frame sequence of a preset.
pub fn frames(preset: &str) -> Vec<Frame> {
    let s = Scenario::preset(preset).expect("known preset");
    Renderer::new(&s, 1).frames().collect()
}
