//! Synthetic camera: a striped object moving over a seeded static
//! background, with optional light steps and mirror reflections. Frames
//! run through the detector and trigger, and captured bursts go to a
//! [`CaptureSink`] such as the FTP uploader.

mod render;
mod run;
mod scenario;

pub use render::{generate, Renderer, BACKGROUND_RANGE};
pub use run::{
    encode_jpeg, run_scenario, write_csv, CaptureSink, FtpSink, NullSink, ScenarioReport, SinkFailure, JPEG_QUALITY,
};
pub use scenario::{ObjectSpec, Scenario, ScenarioError, ScenarioEvent, Speed, PRESETS};
